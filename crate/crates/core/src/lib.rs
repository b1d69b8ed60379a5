//! Exact tower and partition machinery for ergodic infinite
//! measure-preserving systems, instantiated on rank-one cutting-and-stacking
//! transformations.
//!
//! All measures are exact rationals. Sets of finite measure are
//! [`IntervalSet`]s; the one set of infinite measure in each partition or
//! tower is kept implicit as a complement.

pub mod error;
pub mod exact;
pub mod partition;
pub mod rankone;
pub mod stats;
pub mod symbolic;
pub mod tower;
pub mod uniformizer;

pub use error::{Error, Result};
pub use exact::{int, parse_rational, rat, to_decimal, Interval, IntervalSet, MeasureValue, Rational, SetOp};
pub use partition::{
    alpha_name, block_distribution, distribution_within, iterated_join, join, language,
    partition_distance, BlockDistribution, IteratedJoin, Labeling, Partition, Word,
};
pub use rankone::{Point, RankOneSpec, RankOneSystem, StageRule, StageTower, PRESETS};
pub use stats::{
    birkhoff_sum, bounded_orbit_detect, domination_radius, fiber_hit_coverage, hopf_ratio_scan,
    inequality_audit, partition_uniformity_test, measure_criteria_check, radon_estimate, sample_points,
    uniformity_test, CompactOpen, HorizonPlan, RatioReport, SymbolWalk, UniformityVerdict,
};
pub use symbolic::{
    build_subshift, export_bratteli, inverse_limit_check, vershik_audit, BratteliDiagram,
    FactorMapTable, InverseLimitTruncation, SubshiftModel,
};
pub use tower::{
    build_k_standard, frobenius_decompose, is_k_standard, refine_according_to, refine_k_standard,
    refines, unite_columns_by_key, unite_columns_by_name, unite_into_infinite_level, Column,
    StandardTower,
};
pub use uniformizer::{certify, uniformize, UniformizeMode, UniformizeRun, UniformizerParams};
