//! Stable seed derivation. Results never depend on std's hasher, platform
//! or evaluation order.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `base` with a sequence of integers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// FNV-1a hash of a string, for folding names into [`derive_seed`].
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Mixes `base` with a sequence of labels.
pub fn derive_seed_str(base: u64, parts: &[&str]) -> u64 {
    let hashed: Vec<u64> = parts.iter().map(|p| hash_str(p)).collect();
    derive_seed(base, &hashed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_order_sensitive() {
        assert_eq!(derive_seed(42, &[1, 2]), derive_seed(42, &[1, 2]));
        assert_ne!(derive_seed(42, &[1, 2]), derive_seed(42, &[2, 1]));
        assert_ne!(derive_seed(42, &[]), derive_seed(43, &[]));
        assert_ne!(
            derive_seed_str(1, &["a", "bc"]),
            derive_seed_str(1, &["ab", "c"])
        );
        // FNV-1a reference value for "a"
        assert_eq!(hash_str("a"), 0xaf63_dc4c_8601_ec8c);
    }
}
