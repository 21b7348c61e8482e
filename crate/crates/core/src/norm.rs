//! Min-max normalization along one axis of a dense row-major array.

/// Maps a slice affinely so its minimum becomes 0 and maximum 1.
///
/// A constant slice (max == min) maps to all zeros.
pub fn minmax_in_place(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    // a spread of a few ulps is rounding noise on a constant slice
    let noise = 4.0 * f64::EPSILON * lo.abs().max(hi.abs());
    if values.is_empty() || range <= noise || !range.is_finite() {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for v in values.iter_mut() {
        *v = ((*v - lo) / range).clamp(0.0, 1.0);
    }
}

/// Normalizes every 1-D slice of `values` (shape `shape`) taken along `axis`.
///
/// # Panics
/// If `axis` is out of range or `shape` does not match `values.len()`.
pub fn minmax_normalize(values: &[f32], shape: &[usize], axis: usize) -> Vec<f32> {
    assert!(axis < shape.len(), "axis {axis} out of range for rank {}", shape.len());
    assert_eq!(values.len(), shape.iter().product::<usize>(), "shape/length mismatch");
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0f32; values.len()];
    let mut buf = vec![0.0f64; len];
    for o in 0..outer {
        for r in 0..inner {
            let at = |k: usize| (o * len + k) * inner + r;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = values[at(k)] as f64;
            }
            minmax_in_place(&mut buf);
            for (k, &b) in buf.iter().enumerate() {
                out[at(k)] = b as f32;
            }
        }
    }
    out
}
