//! Ergodic statistics along orbits: Birkhoff sums, Hopf ratio tables,
//! empirical uniformity verdicts, fiber coverage, and the ratio-limit
//! estimator for invariant measures on symbolic factors.
//!
//! Orbit windows are read as α-names through a [`Labeling`], so every count
//! is exact. A verdict is a statement about the sampled points and horizons
//! only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{int, to_decimal, IntervalSet, MeasureValue, Rational};
use crate::partition::{iterated_join_with, word_key, Labeling, Partition};
use crate::rankone::{require_positive, Point, RankOneSystem, StageTower};
use crate::symbolic::SubshiftModel;
use crate::tower::{KSide, StandardTower};

/// Below this many steps a stalled count is weak evidence.
pub const MIN_CONFIDENT_BUDGET: usize = 64;

/// A finite window `x_{-origin} … x_{len-origin-1}` of a symbolic orbit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SymbolWalk {
    pub symbols: Vec<u32>,
    pub origin: usize,
    /// Stage the window was read at; 0 for synthetic streams.
    pub depth: usize,
}

impl SymbolWalk {
    pub fn new(symbols: Vec<u32>, origin: usize) -> Result<Self> {
        if origin > symbols.len() {
            return Err(Error::Precondition("walk origin lies past its end".into()));
        }
        Ok(SymbolWalk {
            symbols,
            origin,
            depth: 0,
        })
    }

    /// `reps` copies of `pattern` on each side of the origin.
    pub fn periodic(pattern: &[u32], reps: usize) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::Precondition("empty pattern".into()));
        }
        let symbols = pattern.iter().copied().cycle().take(2 * reps * pattern.len()).collect();
        SymbolWalk::new(symbols, reps * pattern.len())
    }

    /// The longest α-name of `y` that the stage column resolves.
    pub fn from_point(st: &StageTower, lab: &Labeling, y: &Point) -> Result<Self> {
        SymbolWalk::from_point_capped(st, lab, y, usize::MAX)
    }

    /// Like [`SymbolWalk::from_point`], keeping at most `cap` symbols on each
    /// side of the origin.
    pub fn from_point_capped(st: &StageTower, lab: &Labeling, y: &Point, cap: usize) -> Result<Self> {
        let (level, off) = st.locate(&y.0).ok_or_else(|| Error::deeper(st.depth))?;
        let below = if st.slot(level) == 0 && off.is_zero() {
            level
        } else {
            level + lab.free_top()
        };
        let below = below.min(cap);
        let above = (st.height() - level).min(cap);
        let symbols = lab.name_at(level, &off, -(below as i64), above as i64)?;
        Ok(SymbolWalk {
            symbols,
            origin: below,
            depth: st.depth,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn at(&self, i: i64) -> Option<u32> {
        let k = self.origin as i64 + i;
        (k >= 0).then(|| self.symbols.get(k as usize).copied()).flatten()
    }

    /// Largest `N` for which `S_N 1_A` is defined for every `A` in `sets`.
    pub fn feasible_horizon(&self, sets: &[&CompactOpen]) -> usize {
        let right = (self.len() - self.origin) as i64;
        sets.iter()
            .map(|a| {
                let lo = self.origin as i64 + a.lo;
                let hi = right - a.lo - a.len as i64 + 1;
                lo.min(hi).max(0) as usize
            })
            .min()
            .unwrap_or(0)
    }

    /// `S_N 1_A` for `N = 0..=n_max`.
    pub fn counts(&self, a: &CompactOpen, n_max: usize) -> Result<Vec<u32>> {
        if n_max > self.feasible_horizon(&[a]) {
            return Err(Error::NeedsDeeperStage {
                depth: self.depth,
                index: Some(n_max as i64),
            });
        }
        Ok(symmetric_counts(n_max, |i| a.contains(self, i)))
    }
}

/// `c[N] = #{i ∈ [-N, N-1] : hit(i)}` for `N = 0..=n_max`.
fn symmetric_counts(n_max: usize, hit: impl Fn(i64) -> bool) -> Vec<u32> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut acc = 0u32;
    out.push(0);
    for n in 1..=n_max as i64 {
        acc += hit(-n) as u32 + hit(n - 1) as u32;
        out.push(acc);
    }
    out
}

/// A union of cylinders `{x : x_{[lo, lo+len)} ∈ words}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompactOpen {
    pub lo: i64,
    pub len: usize,
    #[serde(serialize_with = "ser_words")]
    pub words: BTreeSet<Vec<u32>>,
}

fn ser_words<S: serde::Serializer>(
    w: &BTreeSet<Vec<u32>>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(w.iter().map(|w| word_key(w)))
}

impl CompactOpen {
    pub fn new(lo: i64, words: impl IntoIterator<Item = Vec<u32>>) -> Result<Self> {
        let words: BTreeSet<Vec<u32>> = words.into_iter().collect();
        let len = words.first().map_or(0, |w| w.len());
        if len == 0 || words.iter().any(|w| w.len() != len) {
            return Err(Error::Precondition("cylinder words must share a positive length".into()));
        }
        if words.iter().any(|w| w.iter().all(|&s| s == 1)) {
            return Err(Error::Precondition(
                "an all-1 word is not compact in the factor".into(),
            ));
        }
        Ok(CompactOpen { lo, len, words })
    }

    pub fn cylinder(lo: i64, word: Vec<u32>) -> Result<Self> {
        CompactOpen::new(lo, [word])
    }

    /// `{x : x_0 ≠ 1}` over symbols `2..alphabet`.
    pub fn non_one_at_zero(alphabet: usize) -> Result<Self> {
        CompactOpen::new(0, (2..=alphabet as u32).map(|s| vec![s]))
    }

    /// `S^{-k}` of the set.
    pub fn preimage(&self, k: i64) -> Self {
        CompactOpen {
            lo: self.lo + k,
            ..self.clone()
        }
    }

    /// Whether `S^i x` lies in the set, `x` being the walk.
    pub fn contains(&self, walk: &SymbolWalk, i: i64) -> bool {
        let s = walk.origin as i64 + i + self.lo;
        if s < 0 || s as usize + self.len > walk.len() {
            return false;
        }
        let s = s as usize;
        self.words.contains(&walk.symbols[s..s + self.len])
    }
}

/// `T_N 1_{f_set}(y) = #{i ∈ [-N, N-1] : T^i y ∈ f_set}`.
pub fn birkhoff_sum(
    sys: &RankOneSystem,
    f_set: &IntervalSet,
    y: &Point,
    n: usize,
    depth: usize,
) -> Result<u64> {
    if n == 0 {
        return Ok(0);
    }
    let st = sys.stage(depth)?;
    let lab = Labeling::new(st, &Partition::with_null_atoms(vec![f_set.clone()])?)?;
    let walk = SymbolWalk::from_point(st, &lab, y)?;
    let left = walk.origin;
    let right = walk.len() - walk.origin;
    if n > left || n > right {
        let index = if n > left { -(left as i64) - 1 } else { right as i64 };
        return Err(Error::NeedsDeeperStage {
            depth,
            index: Some(index),
        });
    }
    let hits = (-(n as i64)..n as i64).filter(|&i| walk.at(i) == Some(2)).count();
    Ok(hits as u64)
}

/// Deterministic low-discrepancy points of `k`: the base-3 radical inverse
/// of `1..=count`, read along the measure coordinate of `k`.
pub fn sample_points(k: &IntervalSet, count: usize) -> Vec<Point> {
    let total = k.measure();
    (1..=count as u64)
        .map(|i| point_at_measure(k, &(radical_inverse(i, 3) * &total)))
        .collect()
}

/// Midpoint of the first interval of every column base.
pub fn column_base_midpoints(t: &StandardTower) -> Vec<Point> {
    t.columns
        .iter()
        .filter_map(|c| c.base.intervals().first())
        .map(|iv| Point((&iv.start + &iv.end) / int(2)))
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> Rational {
    let mut num = BigInt::zero();
    let mut den = BigInt::from(1);
    while i > 0 {
        num = num * base + i % base;
        den *= base;
        i /= base;
    }
    Rational::new(num, den)
}

fn point_at_measure(k: &IntervalSet, t: &Rational) -> Point {
    let mut left = t.clone();
    for iv in k.intervals() {
        let w = iv.width();
        if left < w {
            return Point(&iv.start + left);
        }
        left -= w;
    }
    Point(k.intervals().last().map(|iv| iv.start.clone()).unwrap_or_default())
}

/// One `(point, N)` entry of a ratio table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RatioRow {
    pub point: Point,
    pub horizon: usize,
    /// `None` when the window is not resolved at the stage.
    pub hit_count: Option<u64>,
    pub c_count: Option<u64>,
    #[serde(with = "crate::exact::opt_rational_str")]
    pub ratio: Option<Rational>,
    #[serde(with = "crate::exact::opt_rational_str")]
    pub deviation: Option<Rational>,
}

/// Horizons at which to read each sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HorizonPlan {
    Fixed(Vec<usize>),
    /// Each point at the largest horizon its stage window allows.
    LargestFeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RatioReport {
    pub depth: usize,
    pub sample_points: Vec<Point>,
    /// Largest resolved horizon per sample point.
    pub feasible: Vec<usize>,
    pub horizons: Vec<usize>,
    #[serde(with = "crate::exact::rational_str")]
    pub target: Rational,
    pub rows: Vec<RatioRow>,
    /// Per entry of `horizons`, over resolved rows with at least one hit.
    #[serde(serialize_with = "ser_opt_rats")]
    pub max_deviation: Vec<Option<Rational>>,
}

fn ser_opt_rats<S: serde::Serializer>(
    v: &[Option<Rational>],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|r| r.as_ref().map(|r| r.to_string())))
}

impl RatioReport {
    /// Rows resolved with a hit and deviation at most `tol`, out of all rows.
    pub fn count_within(&self, tol: &Rational) -> (usize, usize) {
        let ok = self
            .rows
            .iter()
            .filter(|r| r.deviation.as_ref().is_some_and(|d| d <= tol))
            .count();
        (ok, self.rows.len())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `point,N,hit_count,ratio_num,ratio_den,deviation`; unresolved fields
    /// are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,N,hit_count,ratio_num,ratio_den,deviation\n");
        for r in &self.rows {
            let hits = r.hit_count.map(|h| h.to_string()).unwrap_or_default();
            let (num, den) = r
                .ratio
                .as_ref()
                .map(|q| (q.numer().to_string(), q.denom().to_string()))
                .unwrap_or_default();
            let dev = r.deviation.as_ref().map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{hits},{num},{den},{dev}", r.point.0, r.horizon);
        }
        out
    }

    /// `N max_deviation` lines with `digits` decimal places.
    pub fn plot_data(&self, digits: usize) -> String {
        let mut out = String::from("# N max_deviation\n");
        for (n, d) in self.horizons.iter().zip(&self.max_deviation) {
            if let Some(d) = d {
                let _ = writeln!(out, "{n} {}", to_decimal(d, digits));
            }
        }
        out
    }
}

/// Labels `C ∩ K`, `K ∖ C` and `C ∖ K` as symbols 2, 3 and 4.
fn ck_labeling(st: &StageTower, c: &IntervalSet, k: &IntervalSet) -> Result<Labeling> {
    let p = Partition::with_null_atoms(vec![c.intersect(k), k.difference(c), c.difference(k)])?;
    Labeling::new(st, &p)
}

fn check_samples(samples: &[Point], k: &IntervalSet) -> Result<()> {
    match samples.iter().find(|p| !k.contains(&p.0)) {
        Some(p) => Err(Error::Precondition(format!("sample {} is not in K", p.0))),
        None => Ok(()),
    }
}

struct PointCounts {
    k: Vec<u32>,
    c: Vec<u32>,
}

fn ck_counts(st: &StageTower, lab: &Labeling, y: &Point) -> Result<PointCounts> {
    let walk = SymbolWalk::from_point(st, lab, y)?;
    let n_max = walk.origin.min(walk.len() - walk.origin);
    let sym = |i: i64| walk.at(i).unwrap_or(1);
    Ok(PointCounts {
        k: symmetric_counts(n_max, |i| matches!(sym(i), 2 | 3)),
        c: symmetric_counts(n_max, |i| matches!(sym(i), 2 | 4)),
    })
}

/// Exact table of `T_N 1_C / T_N 1_K` against `ν(C)/ν(K)`.
pub fn hopf_ratio_scan(
    sys: &RankOneSystem,
    c: &IntervalSet,
    k: &IntervalSet,
    samples: &[Point],
    horizons: &HorizonPlan,
    depth: usize,
) -> Result<RatioReport> {
    if !c.is_subset(k) {
        return Err(Error::Precondition("C must lie inside K".into()));
    }
    let k_measure = require_positive(k, "K")?;
    let target = c.measure() / k_measure;
    check_samples(samples, k)?;
    let st = sys.stage(depth)?;
    let lab = ck_labeling(st, c, k)?;
    let per_point: Vec<PointCounts> = samples
        .par_iter()
        .map(|y| ck_counts(st, &lab, y))
        .collect::<Result<_>>()?;
    let feasible: Vec<usize> = per_point.iter().map(|p| p.k.len() - 1).collect();
    let mut rows = Vec::new();
    for ((y, pc), &f) in samples.iter().zip(&per_point).zip(&feasible) {
        let wanted = match horizons {
            HorizonPlan::Fixed(v) => v.clone(),
            HorizonPlan::LargestFeasible => vec![f],
        };
        for n in wanted {
            rows.push(ratio_row(y, n, pc, &target));
        }
    }
    rows.sort_by(|a, b| (&a.point, a.horizon).cmp(&(&b.point, b.horizon)));
    let horizons: Vec<usize> = rows
        .iter()
        .map(|r| r.horizon)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let max_deviation = horizons
        .iter()
        .map(|&n| {
            rows.iter()
                .filter(|r| r.horizon == n)
                .filter_map(|r| r.deviation.clone())
                .max()
        })
        .collect();
    Ok(RatioReport {
        depth,
        sample_points: samples.to_vec(),
        feasible,
        horizons,
        target,
        rows,
        max_deviation,
    })
}

fn ratio_row(y: &Point, n: usize, pc: &PointCounts, target: &Rational) -> RatioRow {
    let Some((&h, &cc)) = pc.k.get(n).zip(pc.c.get(n)) else {
        return RatioRow {
            point: y.clone(),
            horizon: n,
            hit_count: None,
            c_count: None,
            ratio: None,
            deviation: None,
        };
    };
    let ratio = (h > 0).then(|| Rational::new(cc.into(), h.into()));
    let deviation = ratio.as_ref().map(|r| (r - target).abs());
    RatioRow {
        point: y.clone(),
        horizon: n,
        hit_count: Some(h as u64),
        c_count: Some(cc as u64),
        ratio,
        deviation,
    }
}

/// One sampled `(point, N)` whose ratio misses the target by at least `ε`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub point: Point,
    pub horizon: usize,
    pub hit_count: u64,
    #[serde(with = "crate::exact::rational_str")]
    pub deviation: Rational,
}

/// Outcome of a uniformity scan at the tested scales.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UniformityVerdict {
    #[serde(with = "crate::exact::rational_str")]
    pub epsilon: Rational,
    #[serde(with = "crate::exact::rational_str")]
    pub target: Rational,
    pub m_schedule: Vec<u64>,
    pub m_found: Option<u64>,
    /// Violations with hit count at least the largest scheduled `m`.
    pub witnesses: Vec<Violation>,
    pub samples: usize,
    pub max_horizon: usize,
    /// Sampled pairs with hit count at least `m_found`.
    pub support: u64,
    pub pairs_checked: u64,
}

impl UniformityVerdict {
    pub fn is_uniform(&self) -> bool {
        self.m_found.is_some()
    }
}

const WITNESS_LIMIT: usize = 16;

/// `|c/h - p/q| ≥ e/f`, decided on machine integers when they are small.
struct DeviationTest {
    small: Option<(i128, i128, i128, i128)>,
    p: BigInt,
    q: BigInt,
    e: BigInt,
    f: BigInt,
}

impl DeviationTest {
    fn new(target: &Rational, eps: &Rational) -> Self {
        let fits = |x: &BigInt| x.bits() <= 40;
        let (p, q, e, f) = (target.numer(), target.denom(), eps.numer(), eps.denom());
        let small = (fits(p) && fits(q) && fits(e) && fits(f)).then(|| {
            (
                p.to_i128().unwrap_or(0),
                q.to_i128().unwrap_or(0),
                e.to_i128().unwrap_or(0),
                f.to_i128().unwrap_or(0),
            )
        });
        DeviationTest {
            small,
            p: p.clone(),
            q: q.clone(),
            e: e.clone(),
            f: f.clone(),
        }
    }

    fn violates(&self, c: u32, h: u32) -> bool {
        match self.small {
            Some((p, q, e, f)) => {
                let (c, h) = (c as i128, h as i128);
                (c * q - p * h).abs() * f >= e * h * q
            }
            None => {
                let (c, h) = (BigInt::from(c), BigInt::from(h));
                (&c * &self.q - &self.p * &h).abs() * &self.f >= &self.e * &h * &self.q
            }
        }
    }
}

struct PointScan {
    max_violating: Option<u32>,
    violations: Vec<(usize, u32, u32)>,
}

fn scan_point(k: &[u32], c: &[u32], test: &DeviationTest, keep_from: u64) -> PointScan {
    let mut max_violating = None;
    let mut violations = Vec::new();
    for n in 1..k.len().min(c.len()) {
        let h = k[n];
        if h == 0 || !test.violates(c[n], h) {
            continue;
        }
        max_violating = max_violating.max(Some(h));
        if h as u64 >= keep_from && violations.len() < WITNESS_LIMIT {
            violations.push((n, h, c[n]));
        }
    }
    PointScan {
        max_violating,
        violations,
    }
}

fn assemble_verdict(
    samples: &[Point],
    k_counts: &[Vec<u32>],
    scans: Vec<PointScan>,
    target: &Rational,
    epsilon: &Rational,
    m_schedule: &[u64],
) -> UniformityVerdict {
    let worst = scans.iter().filter_map(|s| s.max_violating).max();
    let m_found = match worst {
        None => m_schedule.first().copied(),
        Some(w) => m_schedule.iter().copied().find(|&m| m > w as u64),
    };
    let mut witnesses = Vec::new();
    if m_found.is_none() {
        for (y, s) in samples.iter().zip(&scans) {
            for &(n, h, c) in &s.violations {
                witnesses.push(Violation {
                    point: y.clone(),
                    horizon: n,
                    hit_count: h as u64,
                    deviation: (Rational::new(c.into(), h.into()) - target).abs(),
                });
            }
        }
        witnesses.sort_by(|a, b| (&a.point, a.horizon).cmp(&(&b.point, b.horizon)));
        witnesses.truncate(WITNESS_LIMIT);
    }
    let support = m_found.map_or(0, |m| {
        k_counts
            .iter()
            .map(|k| (k.len() - 1 - k[1..].partition_point(|&h| (h as u64) < m)) as u64)
            .sum()
    });
    UniformityVerdict {
        epsilon: epsilon.clone(),
        target: target.clone(),
        m_schedule: m_schedule.to_vec(),
        m_found,
        witnesses,
        samples: samples.len(),
        max_horizon: k_counts.iter().map(|k| k.len() - 1).max().unwrap_or(0),
        support,
        pairs_checked: k_counts.iter().map(|k| (k.len() - 1) as u64).sum(),
    }
}

fn check_schedule(m_schedule: &[u64], epsilon: &Rational) -> Result<()> {
    if m_schedule.is_empty() || m_schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("m schedule must be nonempty and increasing".into()));
    }
    if !epsilon.is_positive() {
        return Err(Error::Precondition("ε must be positive".into()));
    }
    Ok(())
}

/// Smallest scheduled `m` such that every sampled `(y, N)` with
/// `T_N 1_K(y) ≥ m` has `|T_N 1_C / T_N 1_K - ν(C)/ν(K)| < ε`, scanning every
/// horizon each sample resolves.
pub fn uniformity_test(
    sys: &RankOneSystem,
    c: &IntervalSet,
    k: &IntervalSet,
    epsilon: &Rational,
    m_schedule: &[u64],
    samples: &[Point],
    depth: usize,
) -> Result<UniformityVerdict> {
    check_schedule(m_schedule, epsilon)?;
    let target = c.measure() / require_positive(k, "K")?;
    check_samples(samples, k)?;
    let st = sys.stage(depth)?;
    let lab = ck_labeling(st, c, k)?;
    let test = DeviationTest::new(&target, epsilon);
    let keep_from = *m_schedule.last().expect("nonempty schedule");
    let per_point: Vec<(Vec<u32>, PointScan)> = samples
        .par_iter()
        .map(|y| {
            let pc = ck_counts(st, &lab, y)?;
            let scan = scan_point(&pc.k, &pc.c, &test, keep_from);
            Ok((pc.k, scan))
        })
        .collect::<Result<_>>()?;
    let (k_counts, scans): (Vec<_>, Vec<_>) = per_point.into_iter().unzip();
    Ok(assemble_verdict(samples, &k_counts, scans, &target, epsilon, m_schedule))
}

/// Uniformity of every finite atom of `α` (`n = 0`) and of `α_{-n}^{n-1}`
/// for `1 ≤ n ≤ n_max`, keyed by `"n:word"`.
#[allow(clippy::too_many_arguments)]
pub fn partition_uniformity_test(
    sys: &RankOneSystem,
    alpha: &Partition,
    k: Option<&IntervalSet>,
    n_max: usize,
    epsilon: &Rational,
    m_schedule: &[u64],
    samples: &[Point],
    depth: usize,
) -> Result<BTreeMap<String, UniformityVerdict>> {
    check_schedule(m_schedule, epsilon)?;
    let k_alpha = alpha.k_set();
    let k = k.cloned().unwrap_or_else(|| k_alpha.clone());
    let k_measure = require_positive(&k, "K")?;
    check_samples(samples, &k)?;
    let st = sys.stage(depth)?;
    let lab = Labeling::new(st, alpha)?;
    let k_lab = Labeling::new(st, &Partition::with_null_atoms(vec![k.clone()])?)?;

    // (key, window start relative to i, word, target)
    let mut atoms: Vec<(String, i64, Vec<u32>, Rational)> = Vec::new();
    for (i, a) in alpha.finite_atoms().iter().enumerate() {
        if !a.is_empty() {
            let s = i as u32 + 2;
            atoms.push((format!("0:{s}"), 0, vec![s], a.measure() / &k_measure));
        }
    }
    for n in 1..=n_max as i64 {
        let join = iterated_join_with(st, &lab, alpha, -n, n - 1)?;
        for a in join.atoms.iter().filter(|a| a.measure.is_positive()) {
            let key = format!("{n}:{}", word_key(&a.word));
            atoms.push((key, -n, a.word.clone(), &a.measure / &k_measure));
        }
    }
    let reach = n_max;
    let walks: Vec<(SymbolWalk, Vec<u32>)> = samples
        .par_iter()
        .map(|y| {
            let names = SymbolWalk::from_point(st, &lab, y)?;
            let kw = SymbolWalk::from_point(st, &k_lab, y)?;
            let n_top = names
                .origin
                .min(names.len() - names.origin)
                .saturating_sub(reach)
                .min(kw.origin.min(kw.len() - kw.origin));
            let kc = symmetric_counts(n_top, |i| kw.at(i) == Some(2));
            Ok((names, kc))
        })
        .collect::<Result<_>>()?;
    let keep_from = *m_schedule.last().expect("nonempty schedule");
    let verdicts: Vec<(String, UniformityVerdict)> = atoms
        .par_iter()
        .map(|(key, lo, word, target)| {
            let set = CompactOpen {
                lo: *lo,
                len: word.len(),
                words: [word.clone()].into(),
            };
            let test = DeviationTest::new(target, epsilon);
            let scans = walks
                .iter()
                .map(|(names, kc)| {
                    let cc = symmetric_counts(kc.len() - 1, |i| set.contains(names, i));
                    scan_point(kc, &cc, &test, keep_from)
                })
                .collect();
            let k_counts: Vec<Vec<u32>> = walks.iter().map(|(_, kc)| kc.clone()).collect();
            let v = assemble_verdict(samples, &k_counts, scans, target, epsilon, m_schedule);
            (key.clone(), v)
        })
        .collect();
    Ok(verdicts.into_iter().collect())
}

/// Measure of `K` covered by fibers of `t` that meet `K` at least `n` times.
pub fn fiber_hit_coverage(t: &StandardTower, k: &IntervalSet, n: usize) -> Result<MeasureValue> {
    let mut total = Rational::zero();
    for (ci, col) in t.columns.iter().enumerate() {
        let profile = col.k_profile(k);
        if let Some(level) = profile.iter().position(|s| *s == KSide::Straddles) {
            return Err(Error::TowerNotRefinedByK { column: ci, level });
        }
        let hits = profile.iter().filter(|s| **s == KSide::Inside).count();
        if hits >= n {
            total += col.base_measure() * int(hits as i64);
        }
    }
    Ok(MeasureValue::Finite(total))
}

/// Whether `S_N 1_K` stops growing along a walk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrbitVerdict {
    pub detected: bool,
    pub low_confidence: bool,
    pub budget_used: usize,
    /// `(N, S_N 1_K)` at a quarter of the budget and at the budget.
    pub counts: Vec<(usize, u64)>,
}

/// Flags a walk whose `K`-count is the same at a quarter of the budget and at
/// the full budget.
pub fn bounded_orbit_detect(walk: &SymbolWalk, k: &CompactOpen, budget: usize) -> OrbitVerdict {
    let budget = budget.min(walk.feasible_horizon(&[k]));
    if budget == 0 {
        return OrbitVerdict {
            detected: true,
            low_confidence: true,
            budget_used: 0,
            counts: Vec::new(),
        };
    }
    let counts = symmetric_counts(budget, |i| k.contains(walk, i));
    let early = budget.div_ceil(4);
    OrbitVerdict {
        detected: counts[early] == counts[budget],
        low_confidence: budget < MIN_CONFIDENT_BUDGET,
        budget_used: budget,
        counts: vec![(early, counts[early] as u64), (budget, counts[budget] as u64)],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RadonSample {
    pub horizon: usize,
    pub a_count: u64,
    pub k_count: u64,
    #[serde(with = "crate::exact::opt_rational_str")]
    pub estimate: Option<Rational>,
}

/// `S_N 1_A / S_N 1_K` along a walk at each horizon.
pub fn radon_estimate(
    walk: &SymbolWalk,
    a: &CompactOpen,
    k: &CompactOpen,
    horizons: &[usize],
) -> Result<Vec<RadonSample>> {
    let n_max = horizons.iter().copied().max().unwrap_or(0);
    let feasible = walk.feasible_horizon(&[a, k]);
    if n_max > feasible {
        return Err(Error::NeedsDeeperStage {
            depth: walk.depth,
            index: Some(n_max as i64),
        });
    }
    let orbit = bounded_orbit_detect(walk, k, feasible);
    if orbit.detected && !orbit.low_confidence {
        return Err(Error::BoundedOrbitDetected);
    }
    let ac = walk.counts(a, n_max)?;
    let kc = walk.counts(k, n_max)?;
    Ok(horizons
        .iter()
        .map(|&n| RadonSample {
            horizon: n,
            a_count: ac[n] as u64,
            k_count: kc[n] as u64,
            estimate: (kc[n] > 0).then(|| Rational::new(ac[n].into(), kc[n].into())),
        })
        .collect())
}

/// A `(walk, N)` pair with its ratio.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RatioWitness {
    pub walk: usize,
    pub horizon: usize,
    pub hit_count: u64,
    #[serde(with = "crate::exact::rational_str")]
    pub ratio: Rational,
}

/// Stability of `S_N 1_A / S_N 1_K` uniformly over the walks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StabilityCheck {
    pub passed: bool,
    pub m: Option<u64>,
    #[serde(with = "crate::exact::opt_rational_str")]
    pub c: Option<Rational>,
    #[serde(with = "crate::exact::opt_rational_str")]
    pub spread: Option<Rational>,
    pub witnesses: Vec<RatioWitness>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExactComparison {
    pub passed: bool,
    #[serde(with = "crate::exact::rational_str")]
    pub exact: Rational,
    #[serde(with = "crate::exact::opt_rational_str")]
    pub deviation: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MeasureCriteria {
    pub a: CompactOpen,
    pub stability: StabilityCheck,
    pub exact: Option<ExactComparison>,
    pub consistent: bool,
}

/// Checks, for each `A`, that the ratio `S_N 1_A / S_N 1_K` settles to one
/// value `c` over all walks once `S_N 1_K ≥ m` (spread below `2ε`), and that
/// `c` is within `ε` of the exact `μ(A)/μ(K)` when a model is given.
pub fn measure_criteria_check(
    walks: &[SymbolWalk],
    k: &CompactOpen,
    a_list: &[CompactOpen],
    horizons: &[usize],
    epsilon: &Rational,
    model: Option<&SubshiftModel>,
) -> Result<Vec<MeasureCriteria>> {
    let k_exact = match model {
        Some(m) => {
            let v = m.measure_of(k)?;
            match v.finite() {
                Some(x) if x.is_positive() => Some(x.clone()),
                _ => return Err(Error::Precondition("K needs positive finite measure".into())),
            }
        }
        None => None,
    };
    a_list
        .iter()
        .map(|a| {
            let stability = stability_check(walks, a, k, horizons, epsilon);
            let exact = match (model, &k_exact) {
                (Some(m), Some(km)) => {
                    let am = m.measure_of(a)?;
                    let am = am.finite().ok_or_else(|| {
                        Error::Precondition("A must have finite measure".into())
                    })?;
                    let exact = am / km;
                    let deviation = stability.c.as_ref().map(|c| (c - &exact).abs());
                    Some(ExactComparison {
                        passed: deviation.as_ref().is_some_and(|d| d <= epsilon),
                        exact,
                        deviation,
                    })
                }
                _ => None,
            };
            let consistent = stability.passed && exact.as_ref().is_none_or(|e| e.passed);
            Ok(MeasureCriteria {
                a: a.clone(),
                stability,
                exact,
                consistent,
            })
        })
        .collect()
}

fn stability_check(
    walks: &[SymbolWalk],
    a: &CompactOpen,
    k: &CompactOpen,
    horizons: &[usize],
    epsilon: &Rational,
) -> StabilityCheck {
    let mut pairs: Vec<RatioWitness> = Vec::new();
    let mut m_cap: Option<u64> = None;
    for (wi, w) in walks.iter().enumerate() {
        let feasible = w.feasible_horizon(&[a, k]);
        let top = horizons.iter().copied().filter(|&n| n <= feasible).max();
        let Some(top) = top else { continue };
        let ac = symmetric_counts(top, |i| a.contains(w, i));
        let kc = symmetric_counts(top, |i| k.contains(w, i));
        let mut best = 0u64;
        for &n in horizons.iter().filter(|&&n| n <= top && kc[n] > 0) {
            best = best.max(kc[n] as u64);
            pairs.push(RatioWitness {
                walk: wi,
                horizon: n,
                hit_count: kc[n] as u64,
                ratio: Rational::new(ac[n].into(), kc[n].into()),
            });
        }
        if best > 0 {
            m_cap = Some(m_cap.map_or(best, |c| c.min(best)));
        }
    }
    let failed = |witnesses| StabilityCheck {
        passed: false,
        m: None,
        c: None,
        spread: None,
        witnesses,
    };
    let Some(m_cap) = m_cap else {
        return failed(Vec::new());
    };
    pairs.sort_by(|x, y| y.hit_count.cmp(&x.hit_count).then(x.walk.cmp(&y.walk)));
    let two_eps = epsilon * int(2);
    let mut lo: Option<&RatioWitness> = None;
    let mut hi: Option<&RatioWitness> = None;
    let mut accepted: Option<(u64, Rational, Rational)> = None;
    let mut i = 0;
    while i < pairs.len() {
        let m = pairs[i].hit_count;
        let (mut nlo, mut nhi) = (lo, hi);
        let mut j = i;
        while j < pairs.len() && pairs[j].hit_count == m {
            let p = &pairs[j];
            if nlo.is_none_or(|l| p.ratio < l.ratio) {
                nlo = Some(p);
            }
            if nhi.is_none_or(|h| p.ratio > h.ratio) {
                nhi = Some(p);
            }
            j += 1;
        }
        let (l, h) = (nlo.expect("nonempty group"), nhi.expect("nonempty group"));
        let spread = &h.ratio - &l.ratio;
        if m <= m_cap {
            if spread >= two_eps {
                if accepted.is_none() {
                    return failed(vec![l.clone(), h.clone()]);
                }
                break;
            }
            accepted = Some((m, (&l.ratio + &h.ratio) / int(2), spread));
        }
        lo = nlo;
        hi = nhi;
        i = j;
    }
    match accepted {
        Some((m, c, spread)) => StabilityCheck {
            passed: true,
            m: Some(m),
            c: Some(c),
            spread: Some(spread),
            witnesses: Vec::new(),
        },
        None => failed(Vec::new()),
    }
}

/// Radius `m` with `1_A ≤ S_m 1_K`, for `K = {x_0 ≠ 1}`-type cylinders.
pub fn domination_radius(a: &CompactOpen, k: &CompactOpen) -> Result<u64> {
    if k.lo != 0 || k.len != 1 {
        return Err(Error::Precondition("K must be a cylinder at coordinate 0".into()));
    }
    let mut m = 0u64;
    for w in &a.words {
        let best = w
            .iter()
            .enumerate()
            .filter(|(_, s)| k.words.contains(&vec![**s]))
            .map(|(p, _)| {
                let r = a.lo + p as i64;
                (-r).max(r + 1) as u64
            })
            .min()
            .ok_or_else(|| {
                Error::Precondition(format!("word {} never meets K", word_key(w)))
            })?;
        m = m.max(best);
    }
    Ok(m)
}

/// Tally of the two counting inequalities over sampled `(walk, N)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InequalityAudit {
    pub m: u64,
    pub pairs: u64,
    pub shift_violations: u64,
    pub bound_violations: u64,
}

impl InequalityAudit {
    pub fn clean(&self) -> bool {
        self.shift_violations == 0 && self.bound_violations == 0
    }
}

/// Checks `|S_N 1_{S^{-1}A} - S_N 1_A| ≤ 1` and
/// `S_N 1_A ≤ 2m·S_N 1_K + m²` at every horizon up to `n_max` each walk
/// resolves.
pub fn inequality_audit(
    walks: &[SymbolWalk],
    a: &CompactOpen,
    k: &CompactOpen,
    n_max: usize,
) -> Result<InequalityAudit> {
    let m = domination_radius(a, k)?;
    let shifted = a.preimage(1);
    let mut audit = InequalityAudit {
        m,
        ..Default::default()
    };
    for w in walks {
        let top = w.feasible_horizon(&[a, &shifted, k]).min(n_max);
        let ac = symmetric_counts(top, |i| a.contains(w, i));
        let sc = symmetric_counts(top, |i| shifted.contains(w, i));
        let kc = symmetric_counts(top, |i| k.contains(w, i));
        for n in 1..=top {
            audit.pairs += 1;
            if (sc[n] as i64 - ac[n] as i64).abs() > 1 {
                audit.shift_violations += 1;
            }
            if ac[n] as u64 > 2 * m * kc[n] as u64 + m * m {
                audit.bound_violations += 1;
            }
        }
    }
    Ok(audit)
}
