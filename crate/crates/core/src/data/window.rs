use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Start offsets of length-`length` windows overlapping by `overlap` steps.
///
/// Windows advance by `length − overlap`; if the last one stops short of the
/// end, one more window aligned to the end is added. With `overlap = RF − 1`
/// the loss regions `[RF − 1, length)` of consecutive windows tile every
/// index from `RF − 1` onwards.
pub fn window_starts(series_len: usize, length: usize, overlap: usize) -> Result<Vec<usize>> {
    if overlap >= length {
        return Err(Error::Config(format!(
            "window overlap {overlap} must be shorter than the window length {length}"
        )));
    }
    if series_len < length {
        return Err(Error::Data(format!(
            "series of {series_len} samples is shorter than one {length}-sample window"
        )));
    }
    let stride = length - overlap;
    let mut starts: Vec<usize> = (0..=series_len - length).step_by(stride).collect();
    let last = *starts.last().expect("at least one window");
    if last + length < series_len {
        starts.push(series_len - length);
    }
    Ok(starts)
}

/// Cuts a `[1, time, channels]` tensor into overlapping windows.
pub fn window(tensor: &Tensor, length: usize, overlap: usize) -> Result<Vec<Tensor>> {
    let (b, t, _) = tensor.dims3()?;
    if b != 1 {
        return Err(Error::Shape(format!("window expects batch 1, got {b}")));
    }
    window_starts(t, length, overlap)?
        .into_iter()
        .map(|s| tensor.slice_time(s, s + length))
        .collect()
}
