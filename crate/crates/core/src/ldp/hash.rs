use crate::domain::splitmix64;

/// Keyed hash `H_seed(item) mod range`; the per-user seed selects a member
/// of the hash family.
pub fn olh_hash(seed: u64, item: usize, range: u32) -> u32 {
    debug_assert!(range >= 2);
    let key = splitmix64(item as u64 ^ 0x243f_6a88_85a3_08d3);
    let h = splitmix64(seed ^ key);
    (h % u64::from(range)) as u32
}
