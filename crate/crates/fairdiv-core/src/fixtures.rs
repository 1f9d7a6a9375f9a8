//! Shared hand-computed reference instances used across the test suites.
//!
//! The values below are small enough to verify by hand; the expected
//! classification profiles, bundle values, ranks, and certificate entries are
//! frozen in the module tests next to the code they exercise.

use crate::allocation::Allocation;
use crate::instance::{GoodSet, Instance};

/// Four agents, seven goods; restricted additive and (2,2)-bounded.
///
/// ```text
///        g0  g1  g2  g3  g4  g5  g6
/// v0      3   3   6   0   0  10   0
/// v1      0   0   0   6   7  10   0
/// v2      3   3   0   6   0   0  10
/// v3      0   0   6   0   7   0  10
/// ```
pub fn four_by_seven() -> Instance {
    Instance::from_ints(&[
        &[3, 3, 6, 0, 0, 10, 0],
        &[0, 0, 0, 6, 7, 10, 0],
        &[3, 3, 0, 6, 0, 0, 10],
        &[0, 0, 6, 0, 7, 0, 10],
    ])
    .expect("valid table")
}

/// The partial reference allocation on [`four_by_seven`]:
/// pool = {g4}, X0 = {g0,g2}, X1 = {g5}, X2 = {g1,g3}, X3 = {g6}.
/// Bundle values are (9, 10, 9, 10).
pub fn four_by_seven_allocation() -> Allocation {
    let pool: GoodSet = [4].into_iter().collect();
    let bundles: Vec<GoodSet> = vec![
        [0, 2].into_iter().collect(),
        [5].into_iter().collect(),
        [1, 3].into_iter().collect(),
        [6].into_iter().collect(),
    ];
    Allocation::new(pool, bundles, 7).expect("valid partition")
}

/// Four agents, three goods; (3,1)-bounded but not restricted additive
/// (good g0 takes values 2, 1, 4 across agents).
///
/// ```text
///        g0  g1  g2
/// v0      2   0   0
/// v1      1   0   5
/// v2      4   3   0
/// v3      0   4   0
/// ```
pub fn four_by_three() -> Instance {
    Instance::from_ints(&[&[2, 0, 0], &[1, 0, 5], &[4, 3, 0], &[0, 4, 0]]).expect("valid table")
}
