use crate::error::{Error, Result};

/// Dense row-major array of `f64` with shape metadata.
///
/// Sequence tensors use the `[batch, time, channels]` layout throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting a length mismatch or any non-finite entry.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Internal constructor for kernel outputs whose length is correct by
    /// construction. Finiteness is checked at layer boundaries instead.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(batch, time, channels)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [b, t, c] => Ok((b, t, c)),
            _ => Err(Error::Shape(format!(
                "expected a [batch, time, channels] tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn at3(&self, b: usize, t: usize, c: usize) -> f64 {
        let (_, tn, cn) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(b * tn + t) * cn + c]
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Copies the time range `[start, end)` out of a rank-3 tensor.
    pub fn slice_time(&self, start: usize, end: usize) -> Result<Tensor> {
        let (b, t, c) = self.dims3()?;
        if start > end || end > t {
            return Err(Error::Shape(format!(
                "time slice {start}..{end} out of range for length {t}"
            )));
        }
        let len = end - start;
        let mut data = Vec::with_capacity(b * len * c);
        for bi in 0..b {
            let base = (bi * t + start) * c;
            data.extend_from_slice(&self.data[base..base + len * c]);
        }
        Ok(Tensor::from_parts(vec![b, len, c], data))
    }

    /// Stacks equally shaped `[1, time, channels]` tensors along the batch axis.
    pub fn stack_batch(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let (_, t, c) = first.dims3()?;
        let mut data = Vec::with_capacity(parts.len() * t * c);
        let mut batch = 0;
        for p in parts {
            let (b, pt, pc) = p.dims3()?;
            if (pt, pc) != (t, c) {
                return Err(Error::Shape(format!(
                    "stack: [{b}, {pt}, {pc}] does not match [_, {t}, {c}]"
                )));
            }
            batch += b;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor::from_parts(vec![batch, t, c], data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Tensor::new(vec![1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn slice_time_copies_each_batch_row() {
        let t = Tensor::new(vec![2, 3, 1], vec![0., 1., 2., 10., 11., 12.]).unwrap();
        let s = t.slice_time(1, 3).unwrap();
        assert_eq!(s.shape(), &[2, 2, 1]);
        assert_eq!(s.data(), &[1., 2., 11., 12.]);
    }
}
