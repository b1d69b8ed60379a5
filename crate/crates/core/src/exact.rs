//! Exact rational interval sets on `[0, ∞)` and extended measure values.
//!
//! Every finite-measure set handled by the crate is an [`IntervalSet`]: a
//! finite union of half-open intervals `[p, q)` with rational endpoints,
//! always kept sorted, disjoint and merged, so structural equality is set
//! equality.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Arbitrary precision rational number.
pub type Rational = BigRational;

/// Shorthand for building a rational from small integers.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"p/q"` or `"p"` into a rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("malformed rational `{s}`"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(n, d))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

/// Renders a rational as a decimal string with `digits` fractional digits
/// (truncated toward zero). Used only at the final serialization step.
pub fn to_decimal(r: &Rational, digits: usize) -> String {
    let neg = r.is_negative();
    let a = r.abs();
    let int_part = a.to_integer();
    let mut frac = a - Rational::from_integer(int_part.clone());
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    out.push_str(&int_part.to_string());
    if digits > 0 {
        out.push('.');
        for _ in 0..digits {
            frac *= int(10);
            let d = frac.to_integer();
            out.push_str(&d.to_string());
            frac -= Rational::from_integer(d);
        }
    }
    out
}

/// ν of a set: a nonnegative rational, or infinity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MeasureValue {
    Finite(Rational),
    Infinite,
}

impl MeasureValue {
    pub fn zero() -> Self {
        MeasureValue::Finite(Rational::zero())
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, MeasureValue::Infinite)
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            MeasureValue::Finite(r) => Some(r),
            MeasureValue::Infinite => None,
        }
    }

    pub fn is_positive(&self) -> bool {
        match self {
            MeasureValue::Finite(r) => r.is_positive(),
            MeasureValue::Infinite => true,
        }
    }
}

impl Add for MeasureValue {
    type Output = MeasureValue;

    fn add(self, rhs: MeasureValue) -> MeasureValue {
        match (self, rhs) {
            (MeasureValue::Finite(a), MeasureValue::Finite(b)) => MeasureValue::Finite(a + b),
            _ => MeasureValue::Infinite,
        }
    }
}

impl PartialOrd for MeasureValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MeasureValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (MeasureValue::Finite(a), MeasureValue::Finite(b)) => a.cmp(b),
            (MeasureValue::Finite(_), MeasureValue::Infinite) => Ordering::Less,
            (MeasureValue::Infinite, MeasureValue::Finite(_)) => Ordering::Greater,
            (MeasureValue::Infinite, MeasureValue::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for MeasureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureValue::Finite(r) => write!(f, "{r}"),
            MeasureValue::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for MeasureValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MeasureValue::Finite(r) => s.serialize_str(&r.to_string()),
            MeasureValue::Infinite => s.serialize_str("inf"),
        }
    }
}

/// A half-open interval `[start, end)` with `start < end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    pub start: Rational,
    pub end: Rational,
}

impl Interval {
    pub fn new(start: Rational, end: Rational) -> Result<Self> {
        if start.is_negative() {
            return Err(Error::NegativeEndpoint);
        }
        if start >= end {
            return Err(Error::Precondition(format!(
                "interval [{start}, {end}) is empty"
            )));
        }
        Ok(Interval { start, end })
    }

    pub fn width(&self) -> Rational {
        &self.end - &self.start
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.start <= x && x < &self.end
    }
}

/// Set operation selector for [`IntervalSet::boolean`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetOp {
    Union,
    Intersect,
    Diff,
    SymDiff,
}

/// Finite union of disjoint half-open rational intervals in `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet::default()
    }

    /// `[start, end)`; an empty range gives the empty set.
    pub fn interval(start: Rational, end: Rational) -> Result<Self> {
        if start.is_negative() {
            return Err(Error::NegativeEndpoint);
        }
        if start >= end {
            return Ok(IntervalSet::empty());
        }
        Ok(IntervalSet {
            intervals: vec![Interval { start, end }],
        })
    }

    /// Convenience constructor from small integer fractions `(p_num, p_den, q_num, q_den)`.
    pub fn from_fracs(parts: &[(i64, i64, i64, i64)]) -> Result<Self> {
        let raw = parts
            .iter()
            .map(|&(a, b, c, d)| (rat(a, b), rat(c, d)))
            .collect::<Vec<_>>();
        IntervalSet::from_pairs(raw)
    }

    /// Builds a normalized set from arbitrary (possibly overlapping) pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Rational, Rational)>) -> Result<Self> {
        let mut v = Vec::new();
        for (p, q) in pairs {
            if p.is_negative() {
                return Err(Error::NegativeEndpoint);
            }
            if p < q {
                v.push(Interval { start: p, end: q });
            }
        }
        Ok(IntervalSet::normalized(v))
    }

    fn normalized(mut v: Vec<Interval>) -> Self {
        v.sort_by(|a, b| a.start.cmp(&b.start));
        let mut out: Vec<Interval> = Vec::with_capacity(v.len());
        for iv in v {
            match out.last_mut() {
                Some(last) if iv.start <= last.end => {
                    if iv.end > last.end {
                        last.end = iv.end;
                    }
                }
                _ => out.push(iv),
            }
        }
        IntervalSet { intervals: out }
    }

    /// Builds from intervals already sorted and pairwise disjoint; only merges
    /// adjacent ones.
    pub(crate) fn from_sorted_disjoint(v: Vec<Interval>) -> Self {
        let mut out: Vec<Interval> = Vec::with_capacity(v.len());
        for iv in v {
            match out.last_mut() {
                Some(last) if iv.start == last.end => last.end = iv.end,
                _ => out.push(iv),
            }
        }
        IntervalSet { intervals: out }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    /// Lebesgue measure; always finite.
    pub fn measure(&self) -> Rational {
        self.intervals
            .iter()
            .fold(Rational::zero(), |acc, iv| acc + iv.width())
    }

    pub fn measure_value(&self) -> MeasureValue {
        MeasureValue::Finite(self.measure())
    }

    pub fn contains(&self, x: &Rational) -> bool {
        // last interval with start <= x
        let idx = self.intervals.partition_point(|iv| &iv.start <= x);
        idx > 0 && self.intervals[idx - 1].contains(x)
    }

    pub fn inf(&self) -> Option<&Rational> {
        self.intervals.first().map(|iv| &iv.start)
    }

    pub fn sup(&self) -> Option<&Rational> {
        self.intervals.last().map(|iv| &iv.end)
    }

    pub fn boolean(&self, other: &IntervalSet, op: SetOp) -> IntervalSet {
        // sweep over the merged endpoint list
        let keep = |a: bool, b: bool| match op {
            SetOp::Union => a || b,
            SetOp::Intersect => a && b,
            SetOp::Diff => a && !b,
            SetOp::SymDiff => a != b,
        };
        let mut points: Vec<&Rational> = Vec::with_capacity(2 * (self.len() + other.len()));
        for iv in self.intervals.iter().chain(other.intervals.iter()) {
            points.push(&iv.start);
            points.push(&iv.end);
        }
        points.sort();
        points.dedup();
        let (mut i, mut j) = (0usize, 0usize);
        let mut out: Vec<Interval> = Vec::new();
        for w in points.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            while i < self.intervals.len() && &self.intervals[i].end <= lo {
                i += 1;
            }
            while j < other.intervals.len() && &other.intervals[j].end <= lo {
                j += 1;
            }
            let a = i < self.intervals.len() && &self.intervals[i].start <= lo;
            let b = j < other.intervals.len() && &other.intervals[j].start <= lo;
            if keep(a, b) {
                match out.last_mut() {
                    Some(last) if &last.end == lo => last.end = hi.clone(),
                    _ => out.push(Interval {
                        start: lo.clone(),
                        end: hi.clone(),
                    }),
                }
            }
        }
        IntervalSet { intervals: out }
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        self.boolean(other, SetOp::Union)
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        self.boolean(other, SetOp::Intersect)
    }

    pub fn difference(&self, other: &IntervalSet) -> IntervalSet {
        self.boolean(other, SetOp::Diff)
    }

    pub fn sym_diff(&self, other: &IntervalSet) -> IntervalSet {
        self.boolean(other, SetOp::SymDiff)
    }

    pub fn is_subset(&self, other: &IntervalSet) -> bool {
        self.difference(other).is_empty()
    }

    pub fn is_disjoint(&self, other: &IntervalSet) -> bool {
        self.intersect(other).is_empty()
    }

    /// `{x + t | x ∈ self}`.
    pub fn translate(&self, t: &Rational) -> Result<IntervalSet> {
        if let Some(lo) = self.inf() {
            if (lo + t).is_negative() {
                return Err(Error::NegativeEndpoint);
            }
        }
        Ok(IntervalSet {
            intervals: self
                .intervals
                .iter()
                .map(|iv| Interval {
                    start: &iv.start + t,
                    end: &iv.end + t,
                })
                .collect(),
        })
    }

    pub fn union_all<'a>(sets: impl IntoIterator<Item = &'a IntervalSet>) -> IntervalSet {
        let v: Vec<Interval> = sets
            .into_iter()
            .flat_map(|s| s.intervals.iter().cloned())
            .collect();
        IntervalSet::normalized(v)
    }

    /// JSON quadruples `[num_p, den_p, num_q, den_q]`.
    pub fn to_quads(&self) -> Vec<[BigInt; 4]> {
        self.intervals
            .iter()
            .map(|iv| {
                [
                    iv.start.numer().clone(),
                    iv.start.denom().clone(),
                    iv.end.numer().clone(),
                    iv.end.denom().clone(),
                ]
            })
            .collect()
    }

    pub fn from_quads(quads: &[[BigInt; 4]]) -> Result<IntervalSet> {
        let mut pairs = Vec::with_capacity(quads.len());
        for [a, b, c, d] in quads {
            if b.is_zero() || d.is_zero() {
                return Err(Error::Parse("zero denominator in interval".into()));
            }
            let p = Rational::new(a.clone(), b.clone());
            let q = Rational::new(c.clone(), d.clone());
            if p >= q {
                return Err(Error::Parse(format!("interval [{p}, {q}) is empty")));
            }
            pairs.push((p, q));
        }
        IntervalSet::from_pairs(pairs)
    }

    /// Parses `"p:q"` ranges separated by commas, e.g. `"0/1:1/2,3/4:1"`.
    pub fn parse(s: &str) -> Result<IntervalSet> {
        let mut pairs = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("malformed interval `{part}`")))?;
            let p = parse_rational(a)?;
            let q = parse_rational(b)?;
            if p >= q {
                return Err(Error::Parse(format!("interval `{part}` is empty")));
            }
            pairs.push((p, q));
        }
        IntervalSet::from_pairs(pairs)
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("∅");
        }
        for (i, iv) in self.intervals.iter().enumerate() {
            if i > 0 {
                f.write_str(" ∪ ")?;
            }
            write!(f, "[{}, {})", iv.start, iv.end)?;
        }
        Ok(())
    }
}

fn big_to_json(b: &BigInt) -> serde_json::Value {
    match b.to_i64() {
        Some(v) => serde_json::Value::from(v),
        None => serde_json::Value::from(b.to_string()),
    }
}

fn json_to_big(v: &serde_json::Value) -> std::result::Result<BigInt, String> {
    match v {
        serde_json::Value::Number(n) => n
            .as_i64()
            .map(BigInt::from)
            .or_else(|| n.as_u64().map(BigInt::from))
            .ok_or_else(|| format!("non-integer endpoint component {n}")),
        serde_json::Value::String(s) => s.parse().map_err(|_| format!("bad integer `{s}`")),
        other => Err(format!("unexpected endpoint component {other}")),
    }
}

impl Serialize for IntervalSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<Vec<serde_json::Value>> = self
            .to_quads()
            .iter()
            .map(|q| q.iter().map(big_to_json).collect())
            .collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntervalSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw: Vec<Vec<serde_json::Value>> = Vec::deserialize(d)?;
        let mut quads = Vec::with_capacity(raw.len());
        for q in raw {
            if q.len() != 4 {
                return Err(D::Error::custom("interval quadruple must have 4 entries"));
            }
            let mut out: [BigInt; 4] = Default::default();
            for (slot, v) in out.iter_mut().zip(q.iter()) {
                *slot = json_to_big(v).map_err(D::Error::custom)?;
            }
            quads.push(out);
        }
        IntervalSet::from_quads(&quads).map_err(D::Error::custom)
    }
}

/// Serde helper for rationals as `"p/q"` strings.
pub mod rational_str {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        use serde::de::Error as _;
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(D::Error::custom)
    }
}

/// Serializes an optional rational as a string or `null`.
pub mod opt_rational_str {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_some(&r.to_string()),
            None => s.serialize_none(),
        }
    }
}
