//! Sinusoidal 2D positional encoding.
//!
//! The first half of the vector encodes the row index `m`, the second half
//! the column index `n`. Within each half, entry `2i` is
//! `sin(pos / 10000^(4i/d))` and entry `2i+1` is `cos(pos / 10000^(4i/d))`.

use crate::error::{Result, TensorError};

pub fn positional_encoding_2d(m: usize, n: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(TensorError::Config(format!(
            "positional encoding dimension must be even and positive, got {dim}"
        )));
    }
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for (offset, pos) in [(0, m as f64), (half, n as f64)] {
        for e in 0..half {
            let pair = (e / 2) as f64;
            let freq = 10000f64.powf(4.0 * pair / dim as f64);
            out[offset + e] = if e % 2 == 0 { (pos / freq).sin() } else { (pos / freq).cos() };
        }
    }
    Ok(out)
}

/// Encodings for every cell of a `rows × cols` grid, row-major, flattened
/// to `rows·cols·dim` values.
pub fn positional_grid(rows: usize, cols: usize, dim: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows * cols * dim);
    for m in 0..rows {
        for n in 0..cols {
            out.extend(positional_encoding_2d(m, n, dim)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_dimension_is_rejected() {
        assert!(positional_encoding_2d(1, 1, 7).is_err());
    }

    #[test]
    fn zero_row_index_gives_unit_cosines() {
        let p = positional_encoding_2d(0, 5, 128).unwrap();
        for e in 0..64 {
            let want = if e % 2 == 0 { 0.0 } else { 1.0 };
            assert_eq!(p[e], want);
        }
    }

    #[test]
    fn zero_column_index_gives_unit_cosines() {
        let p = positional_encoding_2d(4, 0, 128).unwrap();
        for e in 64..128 {
            let want = if e % 2 == 0 { 0.0 } else { 1.0 };
            assert_eq!(p[e], want);
        }
    }
}
