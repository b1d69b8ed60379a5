//! Rank-one cutting-and-stacking systems.
//!
//! A [`RankOneSpec`] describes how the stage-`k` column is cut into
//! `cuts` subcolumns, each topped with spacer levels, and stacked left to
//! right. Spacers are taken from the first unused coordinate, so the used
//! region after every stage is a single interval and the stage levels tile it.
//!
//! The map `T` sends each non-top level of a stage column onto the next one by
//! translation. Everything here is exact: points are rationals, sets are
//! [`IntervalSet`]s, and an orbit step that would leave the top (or bottom) of
//! the requested stage fails with [`Error::NeedsDeeperStage`] instead of
//! silently deepening.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{int, Interval, IntervalSet, Rational};
use crate::tower::{Column, StandardTower};

/// Hard ceiling on materialized stages; a stage of height `h` stores `h`
/// rationals.
pub const DEFAULT_MAX_DEPTH: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRule {
    pub cuts: usize,
    pub spacers: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOneSpec {
    pub base: IntervalSet,
    pub stages: Vec<StageRule>,
}

/// Built-in systems, all rank-one (hence ergodic) with infinite invariant
/// measure.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "hajian-kakutani",
        "Hajian-Kakutani skyscraper: cut in 2, put 2h spacers on the right half; used measure doubles every stage",
    ),
    (
        "triadic-skyscraper",
        "cut in 3, spacers [0, h, 2h] on the thirds; used measure doubles every stage",
    ),
];

impl RankOneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base.len() != 1 {
            return Err(Error::Precondition(
                "stage-1 base must be a single interval".into(),
            ));
        }
        for (k, st) in self.stages.iter().enumerate() {
            if st.cuts < 2 {
                return Err(Error::Precondition(format!(
                    "stage {} has cuts = {} < 2",
                    k + 1,
                    st.cuts
                )));
            }
            if st.spacers.len() != st.cuts {
                return Err(Error::Precondition(format!(
                    "stage {} lists {} spacer counts for {} cuts",
                    k + 1,
                    st.spacers.len(),
                    st.cuts
                )));
            }
        }
        Ok(())
    }

    /// Cut in two, `2·h_k` spacers over the right half, base `[0, 1)`.
    pub fn hajian_kakutani(stages: usize) -> Self {
        let mut h: u64 = 1;
        let mut rules = Vec::with_capacity(stages);
        for _ in 0..stages {
            rules.push(StageRule {
                cuts: 2,
                spacers: vec![0, 2 * h],
            });
            h *= 4;
        }
        RankOneSpec {
            base: IntervalSet::interval(int(0), int(1)).expect("unit interval"),
            stages: rules,
        }
    }

    pub fn triadic_skyscraper(stages: usize) -> Self {
        let mut h: u64 = 1;
        let mut rules = Vec::with_capacity(stages);
        for _ in 0..stages {
            rules.push(StageRule {
                cuts: 3,
                spacers: vec![0, h, 2 * h],
            });
            h *= 6;
        }
        RankOneSpec {
            base: IntervalSet::interval(int(0), int(1)).expect("unit interval"),
            stages: rules,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "hajian-kakutani" => Some(RankOneSpec::hajian_kakutani(DEFAULT_MAX_DEPTH)),
            "triadic-skyscraper" => Some(RankOneSpec::triadic_skyscraper(DEFAULT_MAX_DEPTH)),
            _ => None,
        }
    }

    /// Deepest stage this spec describes (stage 1 is the base).
    pub fn max_stage(&self) -> usize {
        self.stages.len() + 1
    }
}

/// Explicit stage-`k` column.
///
/// Every stage level has the same width and the levels tile the used region,
/// so level `j` is `[origin + slot_j·width, origin + (slot_j+1)·width)` for a
/// permutation `slot` of `0..height`.
#[derive(Debug, Clone)]
pub struct StageTower {
    pub depth: usize,
    pub width: Rational,
    origin: Rational,
    slot_of: Vec<u32>,
    level_at: Vec<u32>,
}

/// A piece of a set inside one stage level, in offsets relative to the level
/// start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub level: usize,
    pub lo: Rational,
    pub hi: Rational,
}

impl StageTower {
    fn new(depth: usize, width: Rational, origin: Rational, slot_of: Vec<u32>) -> Self {
        let mut level_at = vec![0u32; slot_of.len()];
        for (j, &s) in slot_of.iter().enumerate() {
            level_at[s as usize] = j as u32;
        }
        StageTower {
            depth,
            width,
            origin,
            slot_of,
            level_at,
        }
    }

    pub fn height(&self) -> usize {
        self.slot_of.len()
    }

    pub fn start(&self, j: usize) -> Rational {
        &self.origin + &self.width * int(self.slot_of[j] as i64)
    }

    pub fn slot(&self, j: usize) -> usize {
        self.slot_of[j] as usize
    }

    pub fn level(&self, j: usize) -> IntervalSet {
        let s = self.start(j);
        let e = &s + &self.width;
        IntervalSet::interval(s, e).expect("stage level")
    }

    pub fn levels(&self) -> Vec<IntervalSet> {
        (0..self.height()).map(|j| self.level(j)).collect()
    }

    pub fn base(&self) -> IntervalSet {
        self.level(0)
    }

    pub fn used_region(&self) -> IntervalSet {
        IntervalSet::interval(self.origin.clone(), self.used_end()).expect("used region")
    }

    fn used_end(&self) -> Rational {
        &self.origin + &self.width * int(self.height() as i64)
    }

    pub fn used_measure(&self) -> Rational {
        &self.width * int(self.height() as i64)
    }

    /// Union of the given levels as an interval set.
    pub fn union_of_levels(&self, levels: impl IntoIterator<Item = usize>) -> IntervalSet {
        let mut slots: Vec<u32> = levels.into_iter().map(|j| self.slot_of[j]).collect();
        slots.sort_unstable();
        self.union_of_slots(&slots)
    }

    fn union_of_slots(&self, sorted: &[u32]) -> IntervalSet {
        let mut out = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut k = i;
            while k + 1 < sorted.len() && sorted[k + 1] <= sorted[k] + 1 {
                k += 1;
            }
            out.push(Interval {
                start: &self.origin + &self.width * int(sorted[i] as i64),
                end: &self.origin + &self.width * int(sorted[k] as i64 + 1),
            });
            i = k + 1;
        }
        IntervalSet::from_sorted_disjoint(out)
    }

    /// Level index and offset of `x`, if `x` is in the used region.
    pub fn locate(&self, x: &Rational) -> Option<(usize, Rational)> {
        if x < &self.origin {
            return None;
        }
        let t = (x - &self.origin) / &self.width;
        let slot = t.floor().to_integer().to_u64()?;
        if slot >= self.height() as u64 {
            return None;
        }
        let j = self.level_at[slot as usize] as usize;
        let off = x - self.start(j);
        Some((j, off))
    }

    /// Splits a set into per-level pieces, in increasing coordinate order.
    pub fn pieces(&self, set: &IntervalSet) -> Result<Vec<Piece>> {
        let mut out = Vec::new();
        let h = self.height() as u64;
        for iv in set.intervals() {
            if iv.start < self.origin || iv.end > self.used_end() {
                return Err(Error::deeper(self.depth));
            }
            let lo_t = (&iv.start - &self.origin) / &self.width;
            let hi_t = (&iv.end - &self.origin) / &self.width;
            let first = lo_t.floor().to_integer().to_u64().unwrap_or(0);
            let last = hi_t.ceil().to_integer().to_u64().unwrap_or(0).min(h);
            for slot in first..last {
                let j = self.level_at[slot as usize] as usize;
                let s = &self.origin + &self.width * int(slot as i64);
                let e = &s + &self.width;
                let lo = if iv.start > s { &iv.start - &s } else { Rational::zero() };
                let hi = if iv.end < e { &iv.end - &s } else { self.width.clone() };
                if lo < hi {
                    out.push(Piece { level: j, lo, hi });
                }
            }
        }
        Ok(out)
    }

    /// Levels fully contained in `set`; errors if `set` cuts a level.
    pub fn pure_levels(&self, set: &IntervalSet) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for p in self.pieces(set)? {
            if !self.is_full(&p) {
                return Err(Error::deeper(self.depth));
            }
            out.push(p.level);
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn is_full(&self, p: &Piece) -> bool {
        p.lo.is_zero() && p.hi == self.width
    }

    /// Per-level relative sets `{x - start_j | x ∈ set ∩ level_j}`.
    pub fn relative_parts(&self, set: &IntervalSet) -> Result<BTreeMap<usize, IntervalSet>> {
        let mut acc: BTreeMap<usize, Vec<(Rational, Rational)>> = BTreeMap::new();
        for p in self.pieces(set)? {
            acc.entry(p.level).or_default().push((p.lo, p.hi));
        }
        Ok(acc
            .into_iter()
            .map(|(j, v)| (j, IntervalSet::from_pairs(v).expect("relative offsets")))
            .collect())
    }

    /// Places a relative set on level `j`.
    pub fn place(&self, j: usize, rel: &IntervalSet) -> IntervalSet {
        rel.translate(&self.start(j)).expect("nonnegative level start")
    }

    /// Places relative pieces back into coordinates.
    pub fn assemble(&self, pieces: impl IntoIterator<Item = Piece>) -> IntervalSet {
        let v = pieces
            .into_iter()
            .map(|p| {
                let s = self.start(p.level);
                (&s + &p.lo, &s + &p.hi)
            })
            .collect::<Vec<_>>();
        IntervalSet::from_pairs(v).expect("stage coordinates")
    }

    /// `T^steps(set)` computed inside this stage column.
    pub fn shift_set(&self, set: &IntervalSet, steps: i64) -> Result<IntervalSet> {
        let h = self.height() as i64;
        let mut moved = Vec::new();
        for p in self.pieces(set)? {
            let t = p.level as i64 + steps;
            if t < 0 || t >= h {
                return Err(Error::deeper(self.depth));
            }
            moved.push(Piece {
                level: t as usize,
                ..p
            });
        }
        Ok(self.assemble(moved))
    }

    /// Image of a set under `T` (one step up).
    pub fn image(&self, set: &IntervalSet) -> Result<IntervalSet> {
        self.shift_set(set, 1)
    }

    /// Classifies every level against `set` for fast orbit membership tests.
    pub fn probe(&self, set: &IntervalSet) -> Result<SetProbe> {
        let mut class = vec![LevelClass::Empty; self.height()];
        let mut rel = BTreeMap::new();
        for (j, s) in self.relative_parts(set)? {
            let iv = &s.intervals()[0];
            if s.len() == 1 && iv.start.is_zero() && iv.end == self.width {
                class[j] = LevelClass::Full;
            } else {
                class[j] = LevelClass::Partial;
                rel.insert(j, s);
            }
        }
        Ok(SetProbe { class, rel })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelClass {
    Empty,
    Full,
    Partial,
}

/// Per-level membership table of a set at a fixed stage.
#[derive(Debug, Clone)]
pub struct SetProbe {
    class: Vec<LevelClass>,
    rel: BTreeMap<usize, IntervalSet>,
}

impl SetProbe {
    pub fn contains(&self, level: usize, offset: &Rational) -> bool {
        match self.class[level] {
            LevelClass::Empty => false,
            LevelClass::Full => true,
            LevelClass::Partial => self.rel[&level].contains(offset),
        }
    }

    pub fn class(&self, level: usize) -> LevelClass {
        self.class[level]
    }

    pub fn is_level_pure(&self) -> bool {
        self.rel.is_empty()
    }
}

/// A point of `Y`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Point(#[serde(with = "crate::exact::rational_str")] pub Rational);

impl Point {
    pub fn new(r: Rational) -> Self {
        Point(r)
    }
}

/// A spec with its stage columns materialized up to some depth.
#[derive(Debug, Clone)]
pub struct RankOneSystem {
    spec: RankOneSpec,
    stages: Vec<Arc<StageTower>>,
}

impl RankOneSystem {
    /// Builds every stage up to and including `depth`.
    pub fn new(spec: RankOneSpec, depth: usize) -> Result<Self> {
        spec.validate()?;
        let available = spec.max_stage();
        if depth == 0 || depth > available {
            return Err(Error::DepthExceeded {
                requested: depth,
                available,
            });
        }
        let base = spec.base.intervals()[0].clone();
        let first = StageTower::new(1, base.width(), base.start.clone(), vec![0]);
        let mut stages = vec![Arc::new(first)];
        for k in 1..depth {
            let prev = &stages[k - 1];
            let rule = &spec.stages[k - 1];
            let r = rule.cuts as u64;
            let extra: u64 = rule.spacers.iter().sum();
            let next_h = r * prev.height() as u64 + extra;
            if next_h > u32::MAX as u64 {
                return Err(Error::BudgetExceeded(format!(
                    "stage {} would have {next_h} levels",
                    k + 1
                )));
            }
            let width = &prev.width / int(r as i64);
            let mut next_free = prev.height() as u64 * r;
            let mut slots = Vec::with_capacity(next_h as usize);
            for (i, &sp) in rule.spacers.iter().enumerate() {
                slots.extend(prev.slot_of.iter().map(|&s| (s as u64 * r + i as u64) as u32));
                for _ in 0..sp {
                    slots.push(next_free as u32);
                    next_free += 1;
                }
            }
            stages.push(Arc::new(StageTower::new(
                k + 1,
                width,
                prev.origin.clone(),
                slots,
            )));
        }
        Ok(RankOneSystem { spec, stages })
    }

    pub fn spec(&self) -> &RankOneSpec {
        &self.spec
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, k: usize) -> Result<&StageTower> {
        if k == 0 || k > self.stages.len() {
            return Err(Error::DepthExceeded {
                requested: k,
                available: self.stages.len(),
            });
        }
        Ok(&self.stages[k - 1])
    }

    /// First stage at or below `max` whose column is at least `h` tall.
    pub fn stage_with_height(&self, h: usize, max: usize) -> Result<&StageTower> {
        let max = max.min(self.depth());
        (1..=max)
            .map(|k| &*self.stages[k - 1])
            .find(|s| s.height() >= h)
            .ok_or_else(|| Error::deeper(max))
    }

    pub fn apply_t(&self, y: &Point, depth: usize) -> Result<Point> {
        self.step(y, depth, 1)
    }

    pub fn apply_t_inverse(&self, y: &Point, depth: usize) -> Result<Point> {
        self.step(y, depth, -1)
    }

    fn step(&self, y: &Point, depth: usize, dir: i64) -> Result<Point> {
        let st = self.stage(depth)?;
        let (j, off) = st.locate(&y.0).ok_or_else(|| Error::deeper(depth))?;
        let t = j as i64 + dir;
        if t < 0 || t >= st.height() as i64 {
            return Err(Error::NeedsDeeperStage {
                depth,
                index: Some(dir),
            });
        }
        Ok(Point(st.start(t as usize) + off))
    }

    /// `[T^m y, …, T^n y]`.
    pub fn orbit_segment(&self, y: &Point, m: i64, n: i64, depth: usize) -> Result<Vec<Point>> {
        if m > n {
            return Err(Error::Precondition(format!("empty range {m}..={n}")));
        }
        let st = self.stage(depth)?;
        let (j, off) = st.locate(&y.0).ok_or_else(|| Error::deeper(depth))?;
        let h = st.height() as i64;
        let j = j as i64;
        // report the failing index closest to 0
        if j + m < 0 {
            return Err(Error::NeedsDeeperStage {
                depth,
                index: Some((-j - 1).min(n)),
            });
        }
        if j + n >= h {
            return Err(Error::NeedsDeeperStage {
                depth,
                index: Some((h - j).max(m)),
            });
        }
        Ok((m..=n)
            .map(|i| Point(st.start((j + i) as usize) + &off))
            .collect())
    }

    /// Least `n ≥ 1` with `T^n y ∈ set`.
    pub fn return_time(
        &self,
        y: &Point,
        set: &IntervalSet,
        max_steps: usize,
        depth: usize,
    ) -> Result<usize> {
        if !set.contains(&y.0) {
            return Err(Error::Precondition(format!("{} is not in the set", y.0)));
        }
        let st = self.stage(depth)?;
        let (j, off) = st.locate(&y.0).ok_or_else(|| Error::deeper(depth))?;
        for n in 1..=max_steps {
            let t = j + n;
            if t >= st.height() {
                return Err(Error::NeedsDeeperStage {
                    depth,
                    index: Some(n as i64),
                });
            }
            if set.contains(&(st.start(t) + &off)) {
                return Ok(n);
            }
        }
        Err(Error::NoReturnWithinBudget(max_steps))
    }

    /// Return-time tower over `set`, with the part of `set` whose return
    /// cannot be resolved at `depth` kept aside.
    pub fn return_time_tower_partial(
        &self,
        set: &IntervalSet,
        depth: usize,
    ) -> Result<ReturnTimeTower> {
        if set.is_empty() {
            return Err(Error::Precondition("base set is empty".into()));
        }
        let st = self.stage(depth)?;
        let h = st.height();
        let parts = st.relative_parts(set)?;
        let mut by_height: BTreeMap<usize, Vec<IntervalSet>> = BTreeMap::new();
        let mut truncated: BTreeMap<usize, Vec<IntervalSet>> = BTreeMap::new();
        for (&j, rel) in &parts {
            let mut pending = rel.clone();
            for (&l, target) in parts.range(j + 1..) {
                let hit = pending.intersect(target);
                if !hit.is_empty() {
                    by_height
                        .entry(l - j)
                        .or_default()
                        .push(st.place(j, &hit));
                    pending = pending.difference(&hit);
                    if pending.is_empty() {
                        break;
                    }
                }
            }
            if !pending.is_empty() {
                truncated.entry(h - j).or_default().push(st.place(j, &pending));
            }
        }
        let mut columns = Vec::new();
        for (height, bases) in by_height {
            columns.push(Column::from_base(st, IntervalSet::union_all(&bases), height)?);
        }
        let mut residual_columns = Vec::new();
        for (height, bases) in truncated {
            residual_columns.push(Column::from_base(st, IntervalSet::union_all(&bases), height)?);
        }
        let residual = IntervalSet::union_all(residual_columns.iter().map(|c| &c.base));
        Ok(ReturnTimeTower {
            tower: StandardTower::new(columns),
            residual,
            truncated: residual_columns,
        })
    }

    /// Return-time tower over `set`; every point of `set` must return inside
    /// the stage-`depth` column.
    pub fn return_time_tower(&self, set: &IntervalSet, depth: usize) -> Result<StandardTower> {
        let rt = self.return_time_tower_partial(set, depth)?;
        if !rt.residual.is_empty() {
            return Err(Error::UnresolvedMass(rt.residual.measure().to_string()));
        }
        Ok(rt.tower)
    }
}

/// Return-time tower plus the unresolved remainder.
#[derive(Debug, Clone)]
pub struct ReturnTimeTower {
    pub tower: StandardTower,
    /// Points of the base whose return leaves the stage column.
    pub residual: IntervalSet,
    /// The residual fibers run up to the top of the stage column, grouped by
    /// height.
    pub truncated: Vec<Column>,
}

impl ReturnTimeTower {
    /// Tower whose columns are the resolved ones plus the truncated fibers.
    pub fn with_truncated(&self) -> StandardTower {
        let mut cols = self.tower.columns.clone();
        cols.extend(self.truncated.iter().cloned());
        StandardTower::new(cols)
    }
}

/// Level position of a point at a stage, used for fast orbit walks.
#[derive(Debug, Clone)]
pub struct OrbitAnchor {
    pub level: usize,
    pub offset: Rational,
}

impl OrbitAnchor {
    pub fn locate(st: &StageTower, y: &Point) -> Result<Self> {
        let (level, offset) = st.locate(&y.0).ok_or_else(|| Error::deeper(st.depth))?;
        Ok(OrbitAnchor { level, offset })
    }

    /// Largest `N` with `T^{-N} y … T^{N-1} y` inside the column.
    pub fn max_symmetric_horizon(&self, st: &StageTower) -> usize {
        self.level.min(st.height() - self.level)
    }

    pub fn point_at(&self, st: &StageTower, i: i64) -> Result<Point> {
        let t = self.level as i64 + i;
        if t < 0 || t >= st.height() as i64 {
            return Err(Error::NeedsDeeperStage {
                depth: st.depth,
                index: Some(i),
            });
        }
        Ok(Point(st.start(t as usize) + &self.offset))
    }

    /// Membership of `T^i y` for `i` in `lo..hi`.
    pub fn indicator(&self, st: &StageTower, probe: &SetProbe, lo: i64, hi: i64) -> Result<Vec<bool>> {
        let l = self.level as i64;
        if l + lo < 0 {
            return Err(Error::NeedsDeeperStage {
                depth: st.depth,
                index: Some(lo),
            });
        }
        if l + hi > st.height() as i64 {
            return Err(Error::NeedsDeeperStage {
                depth: st.depth,
                index: Some(hi - 1),
            });
        }
        Ok((lo..hi)
            .map(|i| probe.contains((l + i) as usize, &self.offset))
            .collect())
    }
}

/// Exact measure of a set, positive check helper.
pub(crate) fn require_positive(set: &IntervalSet, what: &str) -> Result<Rational> {
    let m = set.measure();
    if !m.is_positive() {
        return Err(Error::Precondition(format!("{what} must have positive measure")));
    }
    Ok(m)
}
