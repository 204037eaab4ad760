use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Causal dilated 1-D convolution over `[batch, time, channels]` tensors:
///
/// `y[n, o] = bias[o] + Σ_k Σ_i w[k, i, o] · x[n − dilation·k, i]`
///
/// Indices before the start of the sequence read as zero, so the output has
/// the same length as the input and never looks ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedCausalConv {
    filter_length: usize,
    dilation: usize,
    in_channels: usize,
    out_channels: usize,
    /// Layout `[tap][in][out]`.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

/// Gradients of one convolution or dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DilatedCausalConv {
    /// A zero-initialized layer.
    pub fn new(
        filter_length: usize,
        dilation: usize,
        in_channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        if filter_length == 0 || dilation == 0 {
            return Err(Error::Config(format!(
                "filter length and dilation must be >= 1 (got N={filter_length}, M={dilation})"
            )));
        }
        Ok(Self {
            filter_length,
            dilation,
            in_channels,
            out_channels,
            weight: vec![0.0; filter_length * in_channels * out_channels],
            bias: vec![0.0; out_channels],
        })
    }

    /// He-style uniform initialization over the fan-in `in_channels · N`; zero bias.
    pub fn init<R: Rng + ?Sized>(
        filter_length: usize,
        dilation: usize,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::new(filter_length, dilation, in_channels, out_channels)?;
        he_uniform(&mut layer.weight, filter_length * in_channels, rng);
        Ok(layer)
    }

    /// Builds a layer from explicit parameters in `[tap][in][out]` layout.
    pub fn from_parts(
        filter_length: usize,
        dilation: usize,
        in_channels: usize,
        out_channels: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let mut layer = Self::new(filter_length, dilation, in_channels, out_channels)?;
        if weight.len() != layer.weight.len() || bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "conv parameters: expected {} weights and {out_channels} biases, got {} and {}",
                layer.weight.len(),
                weight.len(),
                bias.len()
            )));
        }
        layer.weight = weight;
        layer.bias = bias;
        Ok(layer)
    }

    pub fn filter_length(&self) -> usize {
        self.filter_length
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    /// `M·(N−1)+1` samples.
    pub fn receptive_field(&self) -> usize {
        self.dilation * (self.filter_length - 1) + 1
    }

    /// Number of past input samples a streaming evaluator must retain.
    pub fn history_len(&self) -> usize {
        self.dilation * (self.filter_length - 1)
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Weight and bias, mutably at once.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weight, &mut self.bias)
    }

    pub fn weight_index(&self, tap: usize, input: usize, output: usize) -> usize {
        (tap * self.in_channels + input) * self.out_channels + output
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (b, t, c) = input.dims3()?;
        self.check_channels(c)?;
        let out = causal_forward(
            input.data(),
            b,
            t,
            &self.weight,
            &self.bias,
            self.filter_length,
            self.dilation,
            self.in_channels,
            self.out_channels,
        );
        Ok(Tensor::from_parts(vec![b, t, self.out_channels], out))
    }

    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<ConvGrads> {
        let (b, t, c) = input.dims3()?;
        self.check_channels(c)?;
        let expected = [b, t, self.out_channels];
        if upstream.shape() != expected {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match conv output {expected:?}",
                upstream.shape()
            )));
        }
        Ok(causal_backward(
            input,
            upstream.data(),
            &self.weight,
            self.filter_length,
            self.dilation,
            self.in_channels,
            self.out_channels,
        ))
    }

    /// Accumulates tap `k` for one time step: `y += Σ_i x[i] · w[k, i, :]`.
    ///
    /// Shared with the streaming evaluator so both paths sum in the same order.
    pub(crate) fn accumulate_tap(&self, tap: usize, x: &[f64], y: &mut [f64]) {
        accumulate(&self.weight, tap, self.in_channels, self.out_channels, x, y);
    }

    fn check_channels(&self, c: usize) -> Result<()> {
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "input has {c} channels but the layer expects {}",
                self.in_channels
            )));
        }
        Ok(())
    }
}

/// Time-distributed fully connected layer: applied independently at every
/// time step, with no connections across time.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_features: usize,
    out_features: usize,
    /// Layout `[in][out]`.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
        }
    }

    pub fn init<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let mut layer = Self::new(in_features, out_features);
        he_uniform(&mut layer.weight, in_features, rng);
        layer
    }

    pub fn from_parts(
        in_features: usize,
        out_features: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weight.len() != in_features * out_features || bias.len() != out_features {
            return Err(Error::Shape(format!(
                "dense parameters: expected {} weights and {out_features} biases, got {} and {}",
                in_features * out_features,
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_features,
            out_features,
            weight,
            bias,
        })
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Weight and bias, mutably at once.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weight, &mut self.bias)
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (b, t, c) = input.dims3()?;
        self.check_channels(c)?;
        let out = causal_forward(
            input.data(),
            b,
            t,
            &self.weight,
            &self.bias,
            1,
            1,
            self.in_features,
            self.out_features,
        );
        Ok(Tensor::from_parts(vec![b, t, self.out_features], out))
    }

    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<ConvGrads> {
        let (b, t, c) = input.dims3()?;
        self.check_channels(c)?;
        let expected = [b, t, self.out_features];
        if upstream.shape() != expected {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match dense output {expected:?}",
                upstream.shape()
            )));
        }
        Ok(causal_backward(
            input,
            upstream.data(),
            &self.weight,
            1,
            1,
            self.in_features,
            self.out_features,
        ))
    }

    /// Applies the layer to a single time step.
    pub(crate) fn forward_step(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.bias);
        accumulate(&self.weight, 0, self.in_features, self.out_features, x, y);
    }

    fn check_channels(&self, c: usize) -> Result<()> {
        if c != self.in_features {
            return Err(Error::Shape(format!(
                "input has {c} channels but the dense layer expects {}",
                self.in_features
            )));
        }
        Ok(())
    }
}

fn he_uniform<R: Rng + ?Sized>(weights: &mut [f64], fan_in: usize, rng: &mut R) {
    if fan_in == 0 {
        return;
    }
    let limit = (6.0 / fan_in as f64).sqrt();
    for w in weights {
        *w = rng.gen_range(-limit..limit);
    }
}

#[inline]
fn accumulate(weight: &[f64], tap: usize, cin: usize, cout: usize, x: &[f64], y: &mut [f64]) {
    let base = tap * cin * cout;
    for (i, &xv) in x.iter().enumerate() {
        // Zero inputs contribute nothing; skipping them keeps the padded
        // region and a zero-filled stream history numerically identical.
        if xv == 0.0 {
            continue;
        }
        let row = &weight[base + i * cout..base + (i + 1) * cout];
        for (yo, &w) in y.iter_mut().zip(row) {
            *yo += xv * w;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn causal_forward(
    x: &[f64],
    batch: usize,
    time: usize,
    weight: &[f64],
    bias: &[f64],
    taps: usize,
    dilation: usize,
    cin: usize,
    cout: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; batch * time * cout];
    for b in 0..batch {
        for t in 0..time {
            let y = &mut out[(b * time + t) * cout..(b * time + t + 1) * cout];
            y.copy_from_slice(bias);
            for k in 0..taps {
                let lag = dilation * k;
                if lag > t {
                    break;
                }
                let src = (b * time + t - lag) * cin;
                accumulate(weight, k, cin, cout, &x[src..src + cin], y);
            }
        }
    }
    out
}

fn causal_backward(
    input: &Tensor,
    upstream: &[f64],
    weight: &[f64],
    taps: usize,
    dilation: usize,
    cin: usize,
    cout: usize,
) -> ConvGrads {
    let (batch, time, _) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let x = input.data();
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; cout];
    for b in 0..batch {
        for t in 0..time {
            let dy = &upstream[(b * time + t) * cout..(b * time + t + 1) * cout];
            for (g, &d) in db.iter_mut().zip(dy) {
                *g += d;
            }
            for k in 0..taps {
                let lag = dilation * k;
                if lag > t {
                    break;
                }
                let src = (b * time + t - lag) * cin;
                for i in 0..cin {
                    let off = (k * cin + i) * cout;
                    let row = &weight[off..off + cout];
                    let xv = x[src + i];
                    let mut acc = 0.0;
                    for ((&w, &d), gw) in row.iter().zip(dy).zip(&mut dw[off..off + cout]) {
                        acc += w * d;
                        *gw += xv * d;
                    }
                    dx[src + i] += acc;
                }
            }
        }
    }
    ConvGrads {
        input: Tensor::from_parts(input.shape().to_vec(), dx),
        weight: dw,
        bias: db,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gradient_check, GradCheckable};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(values: &[f64]) -> Tensor {
        Tensor::new(vec![1, values.len(), 1], values.to_vec()).unwrap()
    }

    fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_filter_reproduces_input() {
        let conv = DilatedCausalConv::from_parts(2, 1, 1, 1, vec![1.0, 0.0], vec![0.0]).unwrap();
        let y = conv.forward(&seq(&[1., 2., 3., 4.])).unwrap();
        assert_eq!(y.data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn dilation_two_sums_with_zero_padding() {
        // y[n] = x[n] + x[n-2], x[-1] = x[-2] = 0
        let conv = DilatedCausalConv::from_parts(2, 2, 1, 1, vec![1.0, 1.0], vec![0.0]).unwrap();
        let y = conv.forward(&seq(&[1., 2., 3., 4.])).unwrap();
        assert_eq!(y.data(), &[1., 2., 4., 6.]);
    }

    #[test]
    fn receptive_field_formula() {
        let conv = DilatedCausalConv::new(2, 256, 1, 1).unwrap();
        assert_eq!(conv.receptive_field(), 257);
        assert_eq!(
            DilatedCausalConv::new(3, 4, 1, 1)
                .unwrap()
                .receptive_field(),
            9
        );
    }

    #[test]
    fn rejects_degenerate_layer() {
        assert!(DilatedCausalConv::new(0, 1, 1, 1).is_err());
        assert!(DilatedCausalConv::new(2, 0, 1, 1).is_err());
    }

    #[test]
    fn rejects_channel_mismatch() {
        let conv = DilatedCausalConv::new(2, 1, 3, 2).unwrap();
        let err = conv.forward(&Tensor::zeros(vec![1, 4, 2])).unwrap_err();
        assert!(err.to_string().contains("3"), "{err}");
        let x = Tensor::zeros(vec![1, 4, 3]);
        assert!(conv.backward(&x, &Tensor::zeros(vec![1, 4, 3])).is_err());
        assert!(Dense::new(3, 2)
            .forward(&Tensor::zeros(vec![1, 1, 4]))
            .is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = DilatedCausalConv::init(3, 2, 2, 3, &mut rng).unwrap();
        let x = random_tensor(vec![2, 7, 2], &mut rng);
        let g = conv.backward(&x, &Tensor::zeros(vec![2, 7, 3])).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weight.iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_conv_weight_gradient_is_input_times_upstream() {
        let conv = DilatedCausalConv::from_parts(1, 1, 1, 1, vec![0.7], vec![0.1]).unwrap();
        let x = seq(&[1.0, -2.0, 3.0]);
        let up = seq(&[0.5, 0.25, -1.0]);
        let g = conv.backward(&x, &up).unwrap();
        let expected: f64 = x.data().iter().zip(up.data()).map(|(a, b)| a * b).sum();
        assert_eq!(g.weight, vec![expected]);
        assert_eq!(g.bias, vec![-0.25]);
        assert_eq!(g.input.data(), &[0.35, 0.175, -0.7]);
    }

    #[test]
    fn output_is_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = DilatedCausalConv::init(2, 3, 2, 2, &mut rng).unwrap();
        let x = random_tensor(vec![1, 10, 2], &mut rng);
        let base = conv.forward(&x).unwrap();
        let mut data = x.data().to_vec();
        data[6 * 2] += 1.0;
        let bumped = conv
            .forward(&Tensor::new(vec![1, 10, 2], data).unwrap())
            .unwrap();
        assert_eq!(&base.data()[..12], &bumped.data()[..12]);
        assert_ne!(&base.data()[12..], &bumped.data()[12..]);
    }

    #[test]
    fn conv_is_linear_without_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let conv = DilatedCausalConv::init(3, 2, 3, 4, &mut rng).unwrap();
        let x = random_tensor(vec![2, 9, 3], &mut rng);
        let z = random_tensor(vec![2, 9, 3], &mut rng);
        let (a, b) = (1.7, -0.4);
        let mix: Vec<f64> = x
            .data()
            .iter()
            .zip(z.data())
            .map(|(p, q)| a * p + b * q)
            .collect();
        let lhs = conv
            .forward(&Tensor::new(vec![2, 9, 3], mix).unwrap())
            .unwrap();
        let cx = conv.forward(&x).unwrap();
        let cz = conv.forward(&z).unwrap();
        // bias is zero after init, so the map is linear
        for ((l, p), q) in lhs.data().iter().zip(cx.data()).zip(cz.data()) {
            assert!((l - (a * p + b * q)).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_identity_and_time_distribution() {
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let dense = Dense::from_parts(3, 3, w, vec![0.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(vec![1, 5, 3], &mut rng);
        assert_eq!(dense.forward(&x).unwrap(), x);

        let dense = Dense::init(3, 4, &mut rng);
        let base = dense.forward(&x).unwrap();
        let mut data = x.data().to_vec();
        data[2 * 3 + 1] += 0.5;
        let bumped = dense
            .forward(&Tensor::new(vec![1, 5, 3], data).unwrap())
            .unwrap();
        for t in 0..5 {
            let same = (0..4).all(|o| base.at3(0, t, o) == bumped.at3(0, t, o));
            assert_eq!(same, t != 2, "time step {t}");
        }
    }

    #[test]
    fn dense_parameter_count() {
        assert_eq!(Dense::new(4, 512).parameter_count(), 2560);
    }

    /// Scalar probe `L = Σ y ⊙ r` for a fixed random projection `r`, so that
    /// `∂L/∂y = r` and the backward pass is exercised with a dense upstream.
    struct ConvProbe {
        conv: DilatedCausalConv,
        input: Tensor,
        projection: Tensor,
    }

    impl GradCheckable for ConvProbe {
        fn num_params(&self) -> usize {
            self.conv.parameter_count() + self.input.len()
        }
        fn param(&self, i: usize) -> f64 {
            let nw = self.conv.weight.len();
            let nb = self.conv.bias.len();
            if i < nw {
                self.conv.weight[i]
            } else if i < nw + nb {
                self.conv.bias[i - nw]
            } else {
                self.input.data()[i - nw - nb]
            }
        }
        fn set_param(&mut self, i: usize, v: f64) {
            let nw = self.conv.weight.len();
            let nb = self.conv.bias.len();
            if i < nw {
                self.conv.weight[i] = v;
            } else if i < nw + nb {
                self.conv.bias[i - nw] = v;
            } else {
                let mut d = self.input.data().to_vec();
                d[i - nw - nb] = v;
                self.input = Tensor::new(self.input.shape().to_vec(), d).unwrap();
            }
        }
        fn loss(&self) -> crate::Result<f64> {
            let y = self.conv.forward(&self.input)?;
            Ok(y.data()
                .iter()
                .zip(self.projection.data())
                .map(|(a, b)| a * b)
                .sum())
        }
        fn gradient(&self) -> crate::Result<Vec<f64>> {
            let g = self.conv.backward(&self.input, &self.projection)?;
            let mut out = g.weight;
            out.extend(g.bias);
            out.extend(g.input.into_data());
            Ok(out)
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let conv = DilatedCausalConv::init(3, 2, 2, 2, &mut rng).unwrap();
        let input = random_tensor(vec![1, 8, 2], &mut rng);
        let projection = random_tensor(vec![1, 8, 2], &mut rng);
        let mut probe = ConvProbe {
            conv,
            input,
            projection,
        };
        let report = gradient_check(&mut probe, usize::MAX, 1e-5, 9).unwrap();
        assert_eq!(report.parameter_count_checked, 12 + 2 + 16);
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dense = Dense::init(3, 4, &mut rng);
        let x = random_tensor(vec![2, 5, 3], &mut rng);
        let r = random_tensor(vec![2, 5, 4], &mut rng);
        let g = dense.backward(&x, &r).unwrap();
        let loss = |d: &Dense, x: &Tensor| -> f64 {
            d.forward(x)
                .unwrap()
                .data()
                .iter()
                .zip(r.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..dense.weight.len() {
            let mut p = dense.clone();
            p.weight[i] += h;
            let mut m = dense.clone();
            m.weight[i] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            worst = worst.max(crate::numcore::relative_error(g.weight[i], fd));
        }
        for i in 0..x.len() {
            let mut up = x.data().to_vec();
            up[i] += h;
            let mut dn = x.data().to_vec();
            dn[i] -= h;
            let fd = (loss(&dense, &Tensor::new(vec![2, 5, 3], up).unwrap())
                - loss(&dense, &Tensor::new(vec![2, 5, 3], dn).unwrap()))
                / (2.0 * h);
            worst = worst.max(crate::numcore::relative_error(g.input.data()[i], fd));
        }
        assert!(worst < 1e-6, "max relative error {worst}");
    }
}
