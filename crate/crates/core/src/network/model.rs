use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NetworkConfig;
use crate::error::{Error, Result};
use crate::numcore::{Dense, DilatedCausalConv, Dropout, Tensor};

/// `relu(filter(x)) ⊙ sigmoid(gate(x))`, followed by dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedBlock {
    pub filter: DilatedCausalConv,
    pub gate: DilatedCausalConv,
    pub dropout: Dropout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    input_dense: Dense,
    blocks: Vec<GatedBlock>,
    head: Dense,
}

/// Read-only view of one named parameter array.
#[derive(Debug, Clone, Copy)]
pub struct ParamView<'a> {
    pub shape: [usize; 3],
    pub rank: usize,
    pub values: &'a [f64],
}

impl ParamView<'_> {
    pub fn dims(&self) -> &[usize] {
        &self.shape[..self.rank]
    }
}

/// Parameter gradients in declaration order (see [`Network::param_names`]),
/// plus the gradient with respect to the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<Vec<f64>>,
    pub input: Tensor,
}

impl Gradients {
    /// Adds `other` into `self`, parameter arrays only.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.params {
            for x in a.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flatten().copied().collect()
    }
}

/// Intermediate values retained by a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Tensor,
    /// `outs[0]` is the input layer output, `outs[j + 1]` the output of block `j`.
    outs: Vec<Tensor>,
    relu: Vec<Vec<f64>>,
    gate: Vec<Vec<f64>>,
    dropout: Vec<Option<Vec<f64>>>,
    concat: Tensor,
    mask: Vec<f64>,
}

impl ForwardCache {
    /// The tanh mask values, `[batch, time, loads]` row-major.
    pub fn mask(&self) -> &[f64] {
        &self.mask
    }
}

impl Network {
    /// Instantiates the topology with seeded He-uniform weights and zero biases.
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_dense = Dense::init(config.input_channels, config.input_dense_width, &mut rng);
        let dropout = Dropout::new(config.dropout_rate)?;
        let mut blocks = Vec::with_capacity(config.block_widths.len());
        let mut width = config.input_dense_width;
        for (&w, &m) in config.block_widths.iter().zip(&config.dilations) {
            let filter = DilatedCausalConv::init(config.filter_length, m, width, w, &mut rng)?;
            let gate = DilatedCausalConv::init(config.filter_length, m, width, w, &mut rng)?;
            blocks.push(GatedBlock {
                filter,
                gate,
                dropout,
            });
            width = w;
        }
        let head = Dense::init(config.skip_width(), config.output_loads, &mut rng);
        Ok(Self {
            config,
            input_dense,
            blocks,
            head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn input_dense(&self) -> &Dense {
        &self.input_dense
    }

    pub fn blocks(&self) -> &[GatedBlock] {
        &self.blocks
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    pub fn receptive_field(&self) -> usize {
        self.config.receptive_field()
    }

    /// Counts the instantiated parameter arrays.
    pub fn parameter_count(&self) -> usize {
        self.param_views().iter().map(|p| p.values.len()).sum()
    }

    /// Names of the parameter arrays in declaration order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["input_dense.weight".into(), "input_dense.bias".into()];
        for i in 0..self.blocks.len() {
            for part in ["filter", "gate"] {
                names.push(format!("block{i}.{part}.weight"));
                names.push(format!("block{i}.{part}.bias"));
            }
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    pub fn param_views(&self) -> Vec<ParamView<'_>> {
        fn dense<'a>(d: &'a Dense) -> [ParamView<'a>; 2] {
            [
                ParamView {
                    shape: [d.in_features(), d.out_features(), 0],
                    rank: 2,
                    values: d.weight(),
                },
                ParamView {
                    shape: [d.out_features(), 0, 0],
                    rank: 1,
                    values: d.bias(),
                },
            ]
        }
        fn conv<'a>(c: &'a DilatedCausalConv) -> [ParamView<'a>; 2] {
            [
                ParamView {
                    shape: [c.filter_length(), c.in_channels(), c.out_channels()],
                    rank: 3,
                    values: c.weight(),
                },
                ParamView {
                    shape: [c.out_channels(), 0, 0],
                    rank: 1,
                    values: c.bias(),
                },
            ]
        }
        let mut views = Vec::with_capacity(4 + 4 * self.blocks.len());
        views.extend(dense(&self.input_dense));
        for b in &self.blocks {
            views.extend(conv(&b.filter));
            views.extend(conv(&b.gate));
        }
        views.extend(dense(&self.head));
        views
    }

    /// Mutable parameter arrays, same order as [`Network::param_views`].
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let Network {
            input_dense,
            blocks,
            head,
            ..
        } = self;
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(4 + 4 * blocks.len());
        let (w, b) = input_dense.params_mut();
        out.push(w);
        out.push(b);
        for block in blocks.iter_mut() {
            let GatedBlock { filter, gate, .. } = block;
            let (w, b) = filter.params_mut();
            out.push(w);
            out.push(b);
            let (w, b) = gate.params_mut();
            out.push(w);
            out.push(b);
        }
        let (w, b) = head.params_mut();
        out.push(w);
        out.push(b);
        out
    }

    /// Zero gradients shaped like this network's parameters.
    pub fn zero_gradients(&self) -> Vec<Vec<f64>> {
        self.param_views()
            .iter()
            .map(|p| vec![0.0; p.values.len()])
            .collect()
    }

    /// Full forward pass. With `training` set, dropout masks are drawn from a
    /// generator seeded with `seed`; otherwise the pass is deterministic.
    pub fn forward(&self, input: &Tensor, training: bool, seed: u64) -> Result<Tensor> {
        self.forward_cached(input, training, seed).map(|(y, _)| y)
    }

    /// Forward pass that also returns what [`Network::backward`] needs.
    pub fn forward_cached(
        &self,
        input: &Tensor,
        training: bool,
        seed: u64,
    ) -> Result<(Tensor, ForwardCache)> {
        let (b, t, c) = input.dims3()?;
        if c != self.config.input_channels {
            return Err(Error::Shape(format!(
                "input has {c} channels but the network expects {}",
                self.config.input_channels
            )));
        }
        input.check_finite("network input")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let h0 = self.input_dense.forward(input)?;
        let mut outs = Vec::with_capacity(self.blocks.len() + 1);
        let mut relus = Vec::with_capacity(self.blocks.len());
        let mut gates = Vec::with_capacity(self.blocks.len());
        let mut masks = Vec::with_capacity(self.blocks.len());
        outs.push(h0);
        for block in &self.blocks {
            let h = outs.last().expect("input layer output present");
            let zf = block.filter.forward(h)?;
            let zg = block.gate.forward(h)?;
            let relu: Vec<f64> = zf.data().iter().map(|&v| v.max(0.0)).collect();
            let gate: Vec<f64> = zg
                .data()
                .iter()
                .map(|&v| crate::numcore::Activation::Sigmoid.apply(v))
                .collect();
            let mut out: Vec<f64> = relu.iter().zip(&gate).map(|(r, g)| r * g).collect();
            let drop = block.dropout.sample_mask(out.len(), &mut rng, training);
            if let Some(m) = &drop {
                for (o, k) in out.iter_mut().zip(m) {
                    *o *= k;
                }
            }
            outs.push(Tensor::from_parts(zf.shape().to_vec(), out));
            relus.push(relu);
            gates.push(gate);
            masks.push(drop);
        }

        let concat = concat_channels(&outs, b, t);
        let z = self.head.forward(&concat)?;
        let k = self.config.output_loads;
        let mc = self.config.mask_input_channel;
        let mask: Vec<f64> = z.data().iter().map(|v| v.tanh()).collect();
        let x = input.data();
        let mut y = vec![0.0; b * t * k];
        for (row, (yr, mr)) in y.chunks_mut(k).zip(mask.chunks(k)).enumerate() {
            let s = x[row * c + mc];
            for (yv, mv) in yr.iter_mut().zip(mr) {
                *yv = mv * s;
            }
        }
        let out = Tensor::from_parts(vec![b, t, k], y);
        out.check_finite("network output")?;
        let cache = ForwardCache {
            input: input.clone(),
            outs,
            relu: relus,
            gate: gates,
            dropout: masks,
            concat,
            mask,
        };
        Ok((out, cache))
    }

    /// Reverse-mode pass for `∂L/∂y = upstream`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Tensor) -> Result<Gradients> {
        let (b, t, c) = cache.input.dims3()?;
        let k = self.config.output_loads;
        if upstream.shape() != [b, t, k] {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match network output [{b}, {t}, {k}]",
                upstream.shape()
            )));
        }
        upstream.check_finite("upstream gradient")?;
        let mc = self.config.mask_input_channel;
        let x = cache.input.data();
        let dy = upstream.data();

        // y = tanh(z) · x_mask
        let mut dz = vec![0.0; b * t * k];
        let mut dx = vec![0.0; x.len()];
        for row in 0..b * t {
            let s = x[row * c + mc];
            let mut dmask_in = 0.0;
            for j in 0..k {
                let i = row * k + j;
                let m = cache.mask[i];
                dz[i] = dy[i] * s * (1.0 - m * m);
                dmask_in += dy[i] * m;
            }
            dx[row * c + mc] += dmask_in;
        }
        let head_grads = self
            .head
            .backward(&cache.concat, &Tensor::from_parts(vec![b, t, k], dz))?;
        let widths: Vec<usize> = cache.outs.iter().map(|o| o.shape()[2]).collect();
        let mut skip_grads = split_channels(head_grads.input.data(), &widths, b * t);

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        let mut carry: Option<Vec<f64>> = None;
        for (j, block) in self.blocks.iter().enumerate().rev() {
            let mut d_out = std::mem::take(&mut skip_grads[j + 1]);
            if let Some(cg) = carry.take() {
                for (a, b) in d_out.iter_mut().zip(cg) {
                    *a += b;
                }
            }
            if let Some(m) = &cache.dropout[j] {
                for (a, k) in d_out.iter_mut().zip(m) {
                    *a *= k;
                }
            }
            let relu = &cache.relu[j];
            let gate = &cache.gate[j];
            let mut dzf = vec![0.0; d_out.len()];
            let mut dzg = vec![0.0; d_out.len()];
            for i in 0..d_out.len() {
                let (r, g) = (relu[i], gate[i]);
                if r > 0.0 {
                    dzf[i] = d_out[i] * g;
                }
                dzg[i] = d_out[i] * r * g * (1.0 - g);
            }
            let shape = cache.outs[j + 1].shape().to_vec();
            let h_in = &cache.outs[j];
            let gf = block
                .filter
                .backward(h_in, &Tensor::from_parts(shape.clone(), dzf))?;
            let gg = block.gate.backward(h_in, &Tensor::from_parts(shape, dzg))?;
            let mut dh = gf.input.into_data();
            for (a, b) in dh.iter_mut().zip(gg.input.data()) {
                *a += b;
            }
            carry = Some(dh);
            block_grads.push([gf.weight, gf.bias, gg.weight, gg.bias]);
        }

        let mut d_h0 = std::mem::take(&mut skip_grads[0]);
        if let Some(cg) = carry {
            for (a, b) in d_h0.iter_mut().zip(cg) {
                *a += b;
            }
        }
        let width0 = widths[0];
        let in_grads = self
            .input_dense
            .backward(&cache.input, &Tensor::from_parts(vec![b, t, width0], d_h0))?;
        for (a, b) in dx.iter_mut().zip(in_grads.input.data()) {
            *a += b;
        }

        let mut params = Vec::with_capacity(4 + 4 * self.blocks.len());
        params.push(in_grads.weight);
        params.push(in_grads.bias);
        for g in block_grads.into_iter().rev() {
            params.extend(g);
        }
        params.push(head_grads.weight);
        params.push(head_grads.bias);
        Ok(Gradients {
            params,
            input: Tensor::from_parts(vec![b, t, c], dx),
        })
    }

    /// Overwrites every parameter from arrays in declaration order.
    pub fn set_params(&mut self, arrays: &[Vec<f64>]) -> Result<()> {
        let mut slots = self.params_mut();
        if slots.len() != arrays.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter arrays, got {}",
                slots.len(),
                arrays.len()
            )));
        }
        for (i, (slot, src)) in slots.iter_mut().zip(arrays).enumerate() {
            if slot.len() != src.len() {
                return Err(Error::Shape(format!(
                    "parameter array {i}: expected {} values, got {}",
                    slot.len(),
                    src.len()
                )));
            }
            slot.copy_from_slice(src);
        }
        Ok(())
    }

    /// Perturbs every parameter with uniform noise; test helper for
    /// non-trivial biases.
    pub fn jitter_params<R: Rng>(&mut self, scale: f64, rng: &mut R) {
        for slot in self.params_mut() {
            for v in slot.iter_mut() {
                *v += rng.gen_range(-scale..scale);
            }
        }
    }
}

fn concat_channels(parts: &[Tensor], b: usize, t: usize) -> Tensor {
    let total: usize = parts.iter().map(|p| p.shape()[2]).sum();
    let mut data = vec![0.0; b * t * total];
    for row in 0..b * t {
        let mut off = row * total;
        for p in parts {
            let w = p.shape()[2];
            data[off..off + w].copy_from_slice(&p.data()[row * w..(row + 1) * w]);
            off += w;
        }
    }
    Tensor::from_parts(vec![b, t, total], data)
}

fn split_channels(data: &[f64], widths: &[usize], rows: usize) -> Vec<Vec<f64>> {
    let total: usize = widths.iter().sum();
    let mut parts: Vec<Vec<f64>> = widths
        .iter()
        .map(|w| Vec::with_capacity(rows * w))
        .collect();
    for row in 0..rows {
        let mut off = row * total;
        for (p, &w) in parts.iter_mut().zip(widths) {
            p.extend_from_slice(&data[off..off + w]);
            off += w;
        }
    }
    parts
}
