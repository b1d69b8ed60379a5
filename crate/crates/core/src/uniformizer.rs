//! Inductive construction of a partition whose iterated-join atoms are
//! uniform relative to `K`, by either renaming badly distributed columns to
//! the infinite atom (initial mode) or copying names from well distributed
//! columns (refining mode).
//!
//! Each step builds a K-standard tower on a stage column, splits it into
//! columns of constant α-name, and compares every column's `(2n−1)`-block
//! distribution with the exact one. The tower height floor doubles until the
//! surgery stays within the step's budget `δ_n`; a floor of the full stage
//! height always succeeds because that single column carries the exact
//! distribution.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{int, IntervalSet, Rational};
use crate::partition::{partition_distance, reference_distribution, Labeling, Partition};
use crate::rankone::{Piece, RankOneSystem, StageTower};
use crate::stats::{partition_uniformity_test, sample_points, UniformityVerdict};
use crate::symbolic::{factor_word, FactorMapTable};
use crate::tower::{build_k_standard, refine_according_to, refine_k_standard, Column, StandardTower};

/// Marks a symbol outside the resolved part of the stage column.
const UNKNOWN: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UniformizerParams {
    #[serde(with = "crate::exact::rational_str")]
    pub epsilon: Rational,
    /// `δ_n` for steps `1..=steps`, used both as the detection tolerance and
    /// as the bound on `d(α_{n-1}, α_n)`.
    #[serde(serialize_with = "ser_rats")]
    pub deltas: Vec<Rational>,
    /// `c_n = (♯α₀)^{2n-1}`.
    #[serde(serialize_with = "ser_big")]
    pub block_constants: Vec<BigUint>,
    /// Height floor of the first step's tower.
    pub initial_floor: usize,
}

fn ser_rats<S: serde::Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|r| r.to_string()))
}

fn ser_big<S: serde::Serializer>(v: &[BigUint], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|r| r.to_string()))
}

impl UniformizerParams {
    /// Default schedule `δ_n = ε / 2^{n+2}`.
    pub fn new(epsilon: Rational, steps: usize, alphabet: usize) -> Result<Self> {
        let deltas = (1..=steps)
            .map(|n| &epsilon / int(1i64 << (n + 2).min(62)))
            .collect();
        let block_constants = (1..=steps)
            .map(|n| BigUint::from(alphabet).pow(2 * n as u32 - 1))
            .collect();
        let p = UniformizerParams {
            epsilon,
            deltas,
            block_constants,
            initial_floor: 8,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn steps(&self) -> usize {
        self.deltas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_positive() || self.epsilon > int(1) {
            return Err(Error::Precondition("ε must lie in (0, 1]".into()));
        }
        if self.deltas.iter().any(|d| d.is_negative()) {
            return Err(Error::Precondition("δ_n must be nonnegative".into()));
        }
        let total: Rational = self.deltas.iter().sum();
        if total >= self.epsilon {
            return Err(Error::Precondition(format!(
                "Σ δ_n = {total} does not stay below ε = {}",
                self.epsilon
            )));
        }
        if self.initial_floor == 0 {
            return Err(Error::Precondition("height floor must be ≥ 1".into()));
        }
        Ok(())
    }

    /// The reported per-word tolerance `ε / (2^n c_n)`.
    pub fn word_tolerance(&self, n: usize) -> Rational {
        let c = &self.block_constants[n - 1];
        let den = num_bigint::BigInt::from(c.clone()) << n;
        &self.epsilon / Rational::from_integer(den)
    }
}

/// What a step does with a badly distributed column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UniformizeMode {
    /// Rename its levels to 1 and send it to the infinite level.
    Initial,
    /// Copy the α-name of a good column with the same `β`-name.
    Refining(Partition),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub stage_depth: usize,
    pub floor: usize,
    pub attempts: usize,
    #[serde(with = "crate::exact::rational_str")]
    pub delta: Rational,
    #[serde(with = "crate::exact::rational_str")]
    pub d_increment: Rational,
    /// Finite-atom mass inside the bad columns.
    #[serde(with = "crate::exact::rational_str")]
    pub bad_mass: Rational,
    pub columns: usize,
    pub bad_columns: usize,
    /// Bad columns with no donor, left as they were.
    pub r_columns: usize,
    /// Columns whose windows all ran into unresolved context.
    pub unaudited_columns: usize,
    pub heights: (usize, usize),
    /// Fewest anchors in a good column.
    pub n_hat: Option<u64>,
    /// Fewest and most `K`-levels in a column of the retained tower.
    pub min_hits: usize,
    pub max_hits: usize,
    /// Index into the run's towers.
    pub tower: usize,
}

/// A column's α-name with `context` extra symbols on each side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnName {
    pub context: usize,
    pub symbols: Vec<u32>,
}

impl ColumnName {
    pub fn core(&self) -> &[u32] {
        &self.symbols[self.context..self.symbols.len() - self.context]
    }
}

/// Deviation of one column's block distribution from the reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnAudit {
    pub anchors: u64,
    pub max_deviation: Option<Rational>,
}

/// `(2n−1)`-window frequencies at the non-1 positions of the core, windows
/// reading into the context; windows with unresolved symbols are skipped.
pub fn audit_column(
    name: &ColumnName,
    n: usize,
    reference: &BTreeMap<Vec<u32>, Rational>,
) -> ColumnAudit {
    let r = n.saturating_sub(1);
    let mut counts: BTreeMap<&[u32], u64> = BTreeMap::new();
    let mut anchors = 0u64;
    let core_end = name.symbols.len() - name.context;
    for j in name.context..core_end {
        let s = name.symbols[j];
        if s == 1 || s == UNKNOWN || j < r || j + r >= name.symbols.len() {
            continue;
        }
        let w = &name.symbols[j - r..=j + r];
        if w.contains(&UNKNOWN) {
            continue;
        }
        *counts.entry(w).or_insert(0) += 1;
        anchors += 1;
    }
    if anchors == 0 {
        return ColumnAudit {
            anchors,
            max_deviation: None,
        };
    }
    let total = int(anchors as i64);
    let mut max = Rational::zero();
    let words: BTreeSet<&[u32]> = counts
        .keys()
        .copied()
        .chain(reference.keys().map(|k| k.as_slice()))
        .collect();
    for w in words {
        let got = int(*counts.get(w).unwrap_or(&0) as i64) / &total;
        let want = reference.get(w).cloned().unwrap_or_else(Rational::zero);
        max = max.max((got - want).abs());
    }
    ColumnAudit {
        anchors,
        max_deviation: Some(max),
    }
}

/// Columns whose fiber `(2n−1)`-block distribution is more than `δ` away
/// from `reference`, reading names from the columns' level names.
pub fn detect_bad_columns(
    t: &StandardTower,
    n: usize,
    delta: &Rational,
    reference: &BTreeMap<Vec<u32>, Rational>,
) -> Result<BTreeSet<usize>> {
    let names = t
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.level_names.clone().map(|symbols| ColumnName { context: 0, symbols }).ok_or(Error::MissingNames(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(bad_from_names(&names, n, delta, reference).0)
}

fn bad_from_names(
    names: &[ColumnName],
    n: usize,
    delta: &Rational,
    reference: &BTreeMap<Vec<u32>, Rational>,
) -> (BTreeSet<usize>, Vec<ColumnAudit>) {
    let audits: Vec<ColumnAudit> = names.iter().map(|nm| audit_column(nm, n, reference)).collect();
    let bad = audits
        .iter()
        .enumerate()
        .filter(|(_, a)| a.max_deviation.as_ref().is_some_and(|d| d > delta))
        .map(|(i, _)| i)
        .collect();
    (bad, audits)
}

/// Splits every column by the α-name of its fibers over
/// `[-context, height + context)`. Symbols the stage cannot resolve are
/// recorded as unknown.
pub fn split_by_extended_names(
    st: &StageTower,
    lab: &Labeling,
    t: &StandardTower,
    context: usize,
) -> Result<(StandardTower, Vec<ColumnName>)> {
    let h = st.height() as i64;
    let ctx = context as i64;
    let mut columns = Vec::new();
    let mut names = Vec::new();
    for col in &t.columns {
        let mut groups: BTreeMap<Vec<u32>, Vec<Piece>> = BTreeMap::new();
        for p in st.pieces(&col.base)? {
            let base = p.level as i64;
            let lo = (-ctx).max(-(base + lab.free_top() as i64));
            let hi = (col.height as i64 + ctx).min(h - base);
            for (sub, mid) in lab.split_names(st, &p, lo, hi)? {
                let mut full = vec![UNKNOWN; (lo + ctx) as usize];
                full.extend(mid);
                full.resize(col.height + 2 * context, UNKNOWN);
                groups.entry(full).or_default().push(sub);
            }
        }
        for (full, pieces) in groups {
            let name = ColumnName {
                context,
                symbols: full,
            };
            if name.core().contains(&UNKNOWN) {
                return Err(Error::deeper(st.depth));
            }
            columns.push(Column::from_pieces(st, &pieces, col.height)?.with_names(name.core().to_vec()));
            names.push(name);
        }
    }
    Ok((StandardTower::new(columns), names))
}

fn union_of_columns(t: &StandardTower, ids: &BTreeSet<usize>) -> IntervalSet {
    IntervalSet::union_all(ids.iter().flat_map(|&i| t.columns[i].level_sets.iter()))
}

/// Sends every level of the bad columns to atom 1 and drops those columns
/// into the infinite level.
pub fn rename_bad_to_one(
    alpha: &Partition,
    t: &StandardTower,
    bad: &BTreeSet<usize>,
) -> Result<(Partition, StandardTower)> {
    if let Some(&i) = bad.iter().find(|&&i| i >= t.columns.len()) {
        return Err(Error::Precondition(format!("no column {i}")));
    }
    if bad.is_empty() {
        return Ok((alpha.clone(), t.clone()));
    }
    let victims = union_of_columns(t, bad);
    let renamed = alpha.reassign(&victims, 1)?;
    if renamed.k_set().is_empty() {
        return Err(Error::DegeneratePartition);
    }
    let kept = StandardTower::new(
        t.columns
            .iter()
            .enumerate()
            .filter(|(i, _)| !bad.contains(i))
            .map(|(_, c)| c.clone())
            .collect(),
    );
    Ok((renamed, kept))
}

/// Result of copying names onto bad columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameCopy {
    pub alpha: Partition,
    pub tower: StandardTower,
    /// Bad columns without a donor.
    pub r_columns: Vec<usize>,
}

/// Overwrites every bad column's α-name with the name of the good column of
/// largest base measure sharing its `β`-name; columns without such a donor
/// are left untouched.
pub fn copy_good_names(
    alpha: &Partition,
    beta: &Partition,
    t: &StandardTower,
    bad: &BTreeSet<usize>,
) -> Result<NameCopy> {
    let phi = FactorMapTable::from_partitions(alpha, beta)?;
    let names = t
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| c.level_names.clone().ok_or(Error::MissingNames(i)))
        .collect::<Result<Vec<_>>>()?;
    let beta_names = names
        .iter()
        .map(|n| factor_word(&phi, n))
        .collect::<Result<Vec<_>>>()?;
    let mut donors: BTreeMap<&Vec<u32>, usize> = BTreeMap::new();
    for (i, c) in t.columns.iter().enumerate() {
        if bad.contains(&i) {
            continue;
        }
        let e = donors.entry(&beta_names[i]).or_insert(i);
        if c.base_measure() > t.columns[*e].base_measure() {
            *e = i;
        }
    }
    let mut alpha = alpha.clone();
    let mut tower = t.clone();
    let mut r_columns = Vec::new();
    for &i in bad {
        let Some(&d) = donors.get(&beta_names[i]) else {
            r_columns.push(i);
            continue;
        };
        for (l, set) in t.columns[i].level_sets.iter().enumerate() {
            if names[i][l] != names[d][l] {
                alpha = alpha.reassign(set, names[d][l])?;
            }
        }
        tower.columns[i].level_names = Some(names[d].clone());
    }
    Ok(NameCopy {
        alpha,
        tower,
        r_columns,
    })
}

fn k_hits(t: &StandardTower, k: &IntervalSet) -> (usize, usize) {
    let hits: Vec<usize> = t
        .columns
        .iter()
        .map(|c| c.level_sets.iter().filter(|l| l.is_subset(k)).count())
        .collect();
    (
        hits.iter().copied().min().unwrap_or(0),
        hits.iter().copied().max().unwrap_or(0),
    )
}

struct Attempt {
    alpha: Partition,
    tower: StandardTower,
    d: Rational,
    bad_mass: Rational,
    columns: usize,
    bad: usize,
    r_columns: usize,
    unaudited: usize,
    n_hat: Option<u64>,
}

fn attempt(
    st: &StageTower,
    alpha: &Partition,
    mode: &UniformizeMode,
    t: &StandardTower,
    n: usize,
    delta: &Rational,
) -> Result<Attempt> {
    let lab = Labeling::new(st, alpha)?;
    let reference = reference_distribution(st, &lab, alpha, n)?;
    let (split, names) = split_by_extended_names(st, &lab, t, n - 1)?;
    let (bad, audits) = bad_from_names(&names, n, delta, &reference);
    let k = alpha.k_set();
    let bad_mass = union_of_columns(&split, &bad).intersect(&k).measure();
    let unaudited = audits.iter().filter(|a| a.anchors == 0).count();
    let n_hat = audits
        .iter()
        .enumerate()
        .filter(|(i, a)| !bad.contains(i) && a.anchors > 0)
        .map(|(_, a)| a.anchors)
        .min();
    let (next, tower, r_columns) = match mode {
        UniformizeMode::Initial => {
            let (a, t) = rename_bad_to_one(alpha, &split, &bad)?;
            (a, t, 0)
        }
        UniformizeMode::Refining(beta) => {
            let c = copy_good_names(alpha, beta, &split, &bad)?;
            (c.alpha, c.tower, c.r_columns.len())
        }
    };
    let d = partition_distance(alpha, &next)?
        .finite()
        .cloned()
        .ok_or(Error::DegeneratePartition)?;
    Ok(Attempt {
        alpha: next,
        tower,
        d,
        bad_mass,
        columns: split.columns.len(),
        bad: bad.len(),
        r_columns,
        unaudited,
        n_hat,
    })
}

/// One inductive step: returns `α_n`, the retained tower and the log.
///
/// The height floor doubles until `d ≤ δ_n`, and further while the tower's
/// fewest K-levels do not exceed the previous tower's most and the stage
/// allows it.
#[allow(clippy::too_many_arguments)]
pub fn uniformize_step(
    sys: &RankOneSystem,
    alpha_prev: &Partition,
    prev_tower: Option<&StandardTower>,
    mode: &UniformizeMode,
    params: &UniformizerParams,
    n: usize,
    stage_depth: usize,
    tower_index: usize,
) -> Result<(Partition, StandardTower, StepLog)> {
    let delta = params
        .deltas
        .get(n - 1)
        .ok_or_else(|| Error::Precondition(format!("no δ for step {n}")))?;
    let st = sys.stage(stage_depth)?;
    let h = st.height();
    let k = alpha_prev.k_set();
    let mut floor = match prev_tower {
        Some(t) => t.max_height().max(params.initial_floor),
        None => params.initial_floor,
    }
    .min(h);
    let prev_max_hits = prev_tower.map(|t| k_hits(t, &k).1);
    let mut attempts = 0;
    let mut fallback = None;
    let finish = |a: Attempt, floor: usize, attempts: usize| {
        let (min_hits, max_hits) = k_hits(&a.tower, &a.alpha.k_set());
        let heights = a.tower.heights();
        let log = StepLog {
            step: n,
            stage_depth,
            floor,
            attempts,
            delta: delta.clone(),
            d_increment: a.d,
            bad_mass: a.bad_mass,
            columns: a.columns,
            bad_columns: a.bad,
            r_columns: a.r_columns,
            unaudited_columns: a.unaudited,
            heights: (
                heights.iter().copied().min().unwrap_or(0),
                heights.iter().copied().max().unwrap_or(0),
            ),
            n_hat: a.n_hat,
            min_hits,
            max_hits,
            tower: tower_index,
        };
        Ok((a.alpha, a.tower, log))
    };
    loop {
        attempts += 1;
        let built = match prev_tower {
            Some(t1) => refine_k_standard(sys, t1, &k, floor, stage_depth),
            None => build_k_standard(sys, &k, floor, stage_depth),
        };
        let outcome = built.and_then(|t| {
            let t = refine_according_to(sys, &t, alpha_prev, stage_depth)?;
            attempt(st, alpha_prev, mode, &t, n, delta)
        });
        match outcome {
            Ok(a) if &a.d <= delta => {
                // Prefer a tower whose shortest K-visit count beats the previous tallest.
                let separated = prev_max_hits
                    .is_none_or(|m| k_hits(&a.tower, &a.alpha.k_set()).0 > m);
                if separated || floor >= h {
                    return finish(a, floor, attempts);
                }
                fallback = Some((a, floor, attempts));
            }
            Ok(a) if floor >= h => {
                if let Some((f, fl, at)) = fallback {
                    return finish(f, fl, at);
                }
                return Err(Error::BudgetExceeded(format!(
                    "step {n}: d = {} exceeds δ = {delta} at the full stage height",
                    a.d
                )));
            }
            Ok(_) => {}
            Err(Error::NotRepresentable { .. } | Error::NeedsDeeperStage { .. }) if floor < h => {}
            Err(e) => {
                if let Some((f, fl, at)) = fallback {
                    return finish(f, fl, at);
                }
                return Err(e);
            }
        }
        floor = (floor * 2).min(h);
    }
}

/// Certificates attached to a run.
#[derive(Debug, Clone, Serialize)]
pub struct UniformizeRun {
    #[serde(skip)]
    pub alpha: Partition,
    pub logs: Vec<StepLog>,
    #[serde(skip)]
    pub towers: Vec<StandardTower>,
    #[serde(with = "crate::exact::rational_str")]
    pub total_increment: Rational,
    /// `d(α₀, α)` computed directly.
    #[serde(with = "crate::exact::rational_str")]
    pub total_distance: Rational,
    /// `m_{k+1} > M_k` for consecutive retained towers.
    pub m_separation: Vec<bool>,
}

impl UniformizeRun {
    pub fn telescopes(&self, epsilon: &Rational) -> bool {
        self.total_distance <= self.total_increment && &self.total_increment < epsilon
    }
}

/// Runs `params.steps()` steps from `alpha0`; step `n` works at stage
/// `depth - steps + n`, so later towers are taller.
pub fn uniformize(
    sys: &RankOneSystem,
    alpha0: &Partition,
    params: &UniformizerParams,
    mode: &UniformizeMode,
    depth: usize,
) -> Result<UniformizeRun> {
    params.validate()?;
    if let UniformizeMode::Refining(beta) = mode {
        if alpha0.k_set() != beta.k_set() {
            return Err(Error::Precondition("K_α₀ must equal K_β".into()));
        }
        if !alpha0.is_finer_than(beta) {
            return Err(Error::Precondition("α₀ must refine β".into()));
        }
    }
    if alpha0.k_set().is_empty() {
        return Err(Error::DegeneratePartition);
    }
    let steps = params.steps();
    let mut alpha = alpha0.clone();
    let mut logs = Vec::new();
    let mut towers: Vec<StandardTower> = Vec::new();
    for n in 1..=steps {
        let stage = (depth + n).saturating_sub(steps).max(1);
        let (next, tower, log) =
            uniformize_step(sys, &alpha, towers.last(), mode, params, n, stage, towers.len())?;
        alpha = next;
        towers.push(tower);
        logs.push(log);
    }
    let total_increment: Rational = logs.iter().map(|l| &l.d_increment).sum();
    let total_distance = partition_distance(alpha0, &alpha)?
        .finite()
        .cloned()
        .unwrap_or_else(Rational::zero);
    let m_separation = logs.windows(2).map(|w| w[1].min_hits > w[0].max_hits).collect();
    Ok(UniformizeRun {
        alpha,
        logs,
        towers,
        total_increment,
        total_distance,
        m_separation,
    })
}

/// Runs [`partition_uniformity_test`] on `alpha` with `samples` base-3
/// points of `K_α`.
pub fn certify(
    sys: &RankOneSystem,
    alpha: &Partition,
    n_max: usize,
    epsilon: &Rational,
    m_schedule: &[u64],
    samples: usize,
    depth: usize,
) -> Result<BTreeMap<String, UniformityVerdict>> {
    let pts = sample_points(&alpha.k_set(), samples);
    partition_uniformity_test(sys, alpha, None, n_max, epsilon, m_schedule, &pts, depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::partition::join;
    use crate::rankone::RankOneSpec;

    fn hk(depth: usize) -> RankOneSystem {
        RankOneSystem::new(RankOneSpec::hajian_kakutani(10), depth).unwrap()
    }

    fn set(parts: &[(i64, i64, i64, i64)]) -> IntervalSet {
        IntervalSet::from_fracs(parts).unwrap()
    }

    fn alpha0() -> Partition {
        Partition::new(vec![set(&[(0, 1, 1, 1)])]).unwrap()
    }

    #[test]
    fn params_schedule() {
        let p = UniformizerParams::new(rat(1, 10), 3, 2).unwrap();
        assert_eq!(p.deltas, vec![rat(1, 80), rat(1, 160), rat(1, 320)]);
        assert_eq!(p.block_constants[2], BigUint::from(32u32));
        assert_eq!(p.word_tolerance(1), rat(1, 40));
        let mut bad = p.clone();
        bad.deltas = vec![rat(1, 10)];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn audit_against_own_distribution() {
        let name = ColumnName {
            context: 1,
            symbols: vec![1, 2, 2, 1, 1, 2, 2, 1],
        };
        let a = audit_column(&name, 2, &BTreeMap::new());
        assert_eq!(a.anchors, 4);
        let mut own = BTreeMap::new();
        own.insert(vec![1, 2, 2], rat(1, 2));
        own.insert(vec![2, 2, 1], rat(1, 2));
        assert_eq!(audit_column(&name, 2, &own).max_deviation, Some(rat(0, 1)));
    }

    #[test]
    fn detection_flags_the_anomalous_column() {
        let sys = hk(5);
        let st = sys.stage(5).unwrap();
        let col = |a: i64, names: Vec<u32>| {
            Column::from_base(st, set(&[(a, 16, a + 1, 16)]), names.len())
                .unwrap()
                .with_names(names)
        };
        let t = StandardTower::new(vec![
            col(0, vec![2, 3, 2, 3, 1]),
            col(1, vec![3, 2, 3, 2, 1]),
            col(2, vec![2, 2, 2, 2, 1]),
        ]);
        let mut reference = BTreeMap::new();
        reference.insert(vec![2], rat(1, 2));
        reference.insert(vec![3], rat(1, 2));
        let bad = detect_bad_columns(&t, 1, &rat(1, 10), &reference).unwrap();
        assert_eq!(bad.into_iter().collect::<Vec<_>>(), vec![2]);
        assert!(detect_bad_columns(&t, 1, &int(1), &reference).unwrap().is_empty());
        let unnamed = StandardTower::new(vec![Column::from_base(st, set(&[(0, 1, 1, 16)]), 2).unwrap()]);
        assert_eq!(
            detect_bad_columns(&unnamed, 1, &rat(1, 10), &reference),
            Err(Error::MissingNames(0))
        );
    }

    #[test]
    fn rename_accounting() {
        let sys = hk(6);
        let st = sys.stage(6).unwrap();
        let alpha = Partition::new(vec![set(&[(0, 1, 1, 1)])]).unwrap();
        // base of width 1/8 inside K; two of its four levels meet K
        let col = Column::from_base(st, set(&[(0, 1, 1, 8)]), 4).unwrap();
        let in_k = col.level_sets.iter().filter(|l| l.is_subset(&alpha.k_set())).count();
        let other = Column::from_base(st, set(&[(1, 2, 5, 8)]), 1).unwrap();
        let t = StandardTower::new(vec![col, other]);
        let (a2, t2) = rename_bad_to_one(&alpha, &t, &[0].into()).unwrap();
        let d = partition_distance(&alpha, &a2).unwrap();
        assert_eq!(d.finite().unwrap(), &(rat(1, 8) * int(in_k as i64)));
        assert_eq!(t2.columns.len(), 1);
        assert_eq!(rename_bad_to_one(&alpha, &t, &BTreeSet::new()).unwrap().0, alpha);
        assert_eq!(rename_bad_to_one(&alpha, &StandardTower::new(vec![Column::from_base(st, set(&[(0, 1, 1, 1)]), 1).unwrap()]), &[0].into()), Err(Error::DegeneratePartition));
    }

    #[test]
    fn copy_names_from_donor() {
        let sys = hk(5);
        let st = sys.stage(5).unwrap();
        let beta = Partition::new(vec![set(&[(0, 1, 1, 1)])]).unwrap();
        let alpha = join(&beta, &Partition::new(vec![set(&[(0, 1, 1, 4)])]).unwrap());
        // same β-name 2 2, α-names differ on level 0
        let t0 = StandardTower::new(vec![
            Column::from_base(st, set(&[(0, 1, 1, 4)]), 2).unwrap(),
            Column::from_base(st, set(&[(1, 4, 1, 2)]), 2).unwrap(),
        ]);
        let t = refine_according_to(&sys, &t0, &alpha, 5).unwrap();
        let copy = copy_good_names(&alpha, &beta, &t, &[1].into()).unwrap();
        assert!(copy.r_columns.is_empty());
        assert!(copy.alpha.is_finer_than(&beta));
        assert_eq!(copy.alpha.k_set(), beta.k_set());
        let d = partition_distance(&alpha, &copy.alpha).unwrap();
        // the moved level counts once in each of the two atoms it joins and leaves
        assert_eq!(d.finite().unwrap(), &rat(1, 2));
        let bound = t.columns[1].level_sets.iter().map(|l| l.intersect(&beta.k_set()).measure()).sum::<Rational>() * int(2);
        assert!(d.finite().unwrap() <= &bound);
        let same = copy_good_names(&alpha, &beta, &t, &BTreeSet::new()).unwrap();
        assert_eq!(same.alpha, alpha);
    }

    #[test]
    fn zero_steps_and_trivial_budget() {
        let sys = hk(8);
        let p = UniformizerParams::new(rat(1, 2), 0, 2).unwrap();
        let run = uniformize(&sys, &alpha0(), &p, &UniformizeMode::Initial, 8).unwrap();
        assert_eq!(run.alpha, alpha0());
        assert!(run.logs.is_empty());
    }

    #[test]
    fn initial_mode_telescopes() {
        let sys = hk(9);
        let eps = rat(1, 10);
        let p = UniformizerParams::new(eps.clone(), 3, 2).unwrap();
        let run = uniformize(&sys, &alpha0(), &p, &UniformizeMode::Initial, 9).unwrap();
        assert!(run.telescopes(&eps));
        for l in &run.logs {
            assert!(l.d_increment <= l.delta);
        }
    }

    #[test]
    fn zero_budget_terminates() {
        let sys = hk(7);
        let mut p = UniformizerParams::new(rat(1, 2), 2, 2).unwrap();
        p.deltas = vec![Rational::zero(); 2];
        match uniformize(&sys, &alpha0(), &p, &UniformizeMode::Initial, 7) {
            Ok(run) => assert!(run.total_increment.is_zero()),
            Err(e) => assert!(matches!(e, Error::DegeneratePartition | Error::BudgetExceeded(_))),
        }
    }

    #[test]
    fn refining_mode_requires_matching_k() {
        let sys = hk(6);
        let beta = Partition::new(vec![set(&[(0, 1, 1, 2)])]).unwrap();
        let p = UniformizerParams::new(rat(1, 2), 1, 2).unwrap();
        assert!(matches!(
            uniformize(&sys, &alpha0(), &p, &UniformizeMode::Refining(beta), 6),
            Err(Error::Precondition(_))
        ));
    }
}
