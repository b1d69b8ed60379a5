//! Shared fixtures for the benchmarks.

use towerforge::{IntervalSet, Partition, RankOneSpec, RankOneSystem};

pub fn hajian_kakutani(depth: usize) -> RankOneSystem {
    RankOneSystem::new(RankOneSpec::hajian_kakutani(12), depth).expect("preset builds")
}

pub fn unit() -> IntervalSet {
    IntervalSet::from_fracs(&[(0, 1, 1, 1)]).expect("valid interval")
}

pub fn halves() -> Partition {
    Partition::new(vec![
        IntervalSet::from_fracs(&[(0, 1, 1, 2)]).expect("valid interval"),
        IntervalSet::from_fracs(&[(1, 2, 1, 1)]).expect("valid interval"),
    ])
    .expect("disjoint atoms")
}
