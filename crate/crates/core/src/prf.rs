// Keyed pseudo-random function over unordered point pairs. Every weak-oracle
// decision is derived from here so that answers are a pure function of
// (seed, pair).

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub(crate) fn pair_key(a: usize, b: usize) -> u64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

#[inline]
pub(crate) fn pair_hash(seed: u64, a: usize, b: usize, stream: u64) -> u64 {
    mix64(mix64(seed ^ mix64(stream)) ^ pair_key(a, b))
}

/// Uniform in [0, 1) from the top 53 bits.
#[inline]
pub(crate) fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives an independent seed for a sub-task.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_mul(GOLDEN)))
}
