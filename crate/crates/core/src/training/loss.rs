use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Sum of squared errors over time indices `≥ region_start` (all batches and
/// loads), its gradient with respect to the predictions, and the number of
/// terms. Indices before `region_start` receive exactly zero gradient.
pub fn squared_error_sum_grad(
    predictions: &Tensor,
    targets: &Tensor,
    region_start: usize,
) -> Result<(f64, Tensor, usize)> {
    predictions.ensure_same_shape(targets, "predictions vs targets")?;
    let (b, t, k) = predictions.dims3()?;
    if region_start >= t {
        return Err(Error::Shape(format!(
            "loss region starting at {region_start} is empty for {t} time steps"
        )));
    }
    let p = predictions.data();
    let y = targets.data();
    let mut grad = vec![0.0; p.len()];
    let mut sse = 0.0;
    for bi in 0..b {
        let from = (bi * t + region_start) * k;
        let to = (bi + 1) * t * k;
        for i in from..to {
            let e = p[i] - y[i];
            sse += e * e;
            grad[i] = 2.0 * e;
        }
    }
    let count = b * (t - region_start) * k;
    Ok((
        sse,
        Tensor::from_parts(predictions.shape().to_vec(), grad),
        count,
    ))
}

/// Mean squared error over time indices `≥ region_start`.
pub fn mse_loss(predictions: &Tensor, targets: &Tensor, region_start: usize) -> Result<f64> {
    squared_error_sum_grad(predictions, targets, region_start).map(|(s, _, n)| s / n as f64)
}

/// Mean squared error and its gradient with respect to the predictions.
pub fn mse_loss_grad(
    predictions: &Tensor,
    targets: &Tensor,
    region_start: usize,
) -> Result<(f64, Tensor)> {
    let (sse, grad, n) = squared_error_sum_grad(predictions, targets, region_start)?;
    let scale = 1.0 / n as f64;
    let g = grad.data().iter().map(|v| v * scale).collect();
    Ok((sse * scale, Tensor::from_parts(grad.shape().to_vec(), g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_t(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = rand_t(vec![2, 10, 3], &mut rng);
        assert_eq!(mse_loss(&y, &y, 4).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = rand_t(vec![1, 8, 2], &mut rng);
        let p = Tensor::new(
            y.shape().to_vec(),
            y.data().iter().map(|v| v + 0.25).collect(),
        )
        .unwrap();
        assert!((mse_loss(&p, &y, 3).unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (b, t, k, start) = (3, 11, 2, 5);
        let p = rand_t(vec![b, t, k], &mut rng);
        let y = rand_t(vec![b, t, k], &mut rng);
        let mut sum = 0.0;
        let mut n = 0;
        for bi in 0..b {
            for ti in start..t {
                for ki in 0..k {
                    let e = p.at3(bi, ti, ki) - y.at3(bi, ti, ki);
                    sum += e * e;
                    n += 1;
                }
            }
        }
        assert!((mse_loss(&p, &y, start).unwrap() - sum / n as f64).abs() < 1e-12);
    }

    #[test]
    fn warmup_region_gets_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = rand_t(vec![2, 9, 2], &mut rng);
        let y = rand_t(vec![2, 9, 2], &mut rng);
        let (_, g) = mse_loss_grad(&p, &y, 6).unwrap();
        for b in 0..2 {
            for t in 0..9 {
                for k in 0..2 {
                    assert_eq!(g.at3(b, t, k) == 0.0, t < 6);
                }
            }
        }
    }

    #[test]
    fn empty_region_rejected() {
        let y = Tensor::zeros(vec![1, 4, 1]);
        assert!(mse_loss(&y, &y, 4).is_err());
        assert!(mse_loss(&y, &Tensor::zeros(vec![1, 5, 1]), 0).is_err());
    }
}
