//! Halton low-discrepancy points.

/// The first nine primes; one base per dimension.
pub const BASES: [u64; 9] = [2, 3, 5, 7, 11, 13, 17, 19, 23];

/// Radical inverse of `index` in `base`: the base-`base` digits of `index`
/// mirrored about the radix point.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut r = 0.0;
    while index > 0 {
        r += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    r
}

/// Point `index` of the Halton sequence in `dims ≤ 9` dimensions.
///
/// # Panics
/// If `dims` exceeds the number of tabulated bases.
pub fn halton_point(index: u64, dims: usize) -> Vec<f64> {
    assert!(dims <= BASES.len(), "at most {} Halton dimensions", BASES.len());
    BASES[..dims].iter().map(|&b| radical_inverse(index, b)).collect()
}
