//! Finite partitions with one infinite atom, the d-metric, α-names,
//! iterated joins and block distributions.
//!
//! Atom 1 is always the implicit complement of the finite atoms, so a
//! [`Partition`] stores only atoms `2..=N` as interval sets.
//!
//! Names are read off a [`Labeling`], which tags every level of a stage
//! column with a symbol (or with a short list of sub-intervals when the level
//! is cut by an atom). Coordinates below the stage base are resolved as
//! symbol 1 when enough top levels of the column carry symbol 1: the stretch
//! just under any copy of the stage column is either fresh spacer or the top
//! of the previous copy. Coordinates above the top are never guessed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{int, IntervalSet, MeasureValue, Rational};
use crate::rankone::{Piece, Point, RankOneSystem, StageTower};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Partition {
    #[serde(rename = "finite_atoms")]
    finite: Vec<IntervalSet>,
}

impl Partition {
    /// Partition whose atoms `2, 3, …` are the given sets, in order.
    pub fn new(finite: Vec<IntervalSet>) -> Result<Self> {
        if let Some(i) = finite.iter().position(|a| a.is_empty()) {
            return Err(Error::Precondition(format!(
                "atom {} has measure zero",
                i + 2
            )));
        }
        Partition::with_null_atoms(finite)
    }

    /// Like [`Partition::new`] but keeps empty atoms, so symbols stay stable
    /// after surgery empties an atom.
    pub fn with_null_atoms(finite: Vec<IntervalSet>) -> Result<Self> {
        let mut seen = IntervalSet::empty();
        for (i, a) in finite.iter().enumerate() {
            if !a.is_disjoint(&seen) {
                return Err(Error::Precondition(format!(
                    "atom {} overlaps an earlier atom",
                    i + 2
                )));
            }
            seen = seen.union(a);
        }
        Ok(Partition { finite })
    }

    /// The partition `{Y}`.
    pub fn trivial() -> Self {
        Partition::default()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Partition = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Partition::with_null_atoms(p.finite)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("partition serializes")
    }

    /// Number of symbols, counting the infinite atom.
    pub fn alphabet_size(&self) -> usize {
        self.finite.len() + 1
    }

    pub fn finite_atoms(&self) -> &[IntervalSet] {
        &self.finite
    }

    /// Atom with the given symbol; `None` for the infinite atom 1.
    pub fn atom(&self, symbol: u32) -> Option<&IntervalSet> {
        if symbol < 2 {
            return None;
        }
        self.finite.get(symbol as usize - 2)
    }

    /// `K_α`, the union of the finite atoms.
    pub fn k_set(&self) -> IntervalSet {
        IntervalSet::union_all(self.finite.iter())
    }

    pub fn symbol_at(&self, x: &Rational) -> u32 {
        self.finite
            .iter()
            .position(|a| a.contains(x))
            .map_or(1, |i| i as u32 + 2)
    }

    /// Gives `set` the symbol `symbol` (1 sends it to the infinite atom).
    pub fn reassign(&self, set: &IntervalSet, symbol: u32) -> Result<Partition> {
        if symbol as usize > self.finite.len() + 1 || symbol == 0 {
            return Err(Error::UnknownSymbol(symbol));
        }
        let finite = self
            .finite
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let rest = a.difference(set);
                if i as u32 + 2 == symbol {
                    rest.union(set)
                } else {
                    rest
                }
            })
            .collect();
        Ok(Partition { finite })
    }

    /// `self ≽ other`: every atom of `self` lies in one atom of `other`.
    pub fn is_finer_than(&self, other: &Partition) -> bool {
        let k_other = other.k_set();
        if !k_other.is_subset(&self.k_set()) {
            return false;
        }
        self.finite.iter().all(|a| {
            a.is_empty() || a.is_disjoint(&k_other) || other.finite.iter().any(|b| a.is_subset(b))
        })
    }
}

/// Join with the `(i, j)` label of each finite atom of the result.
pub fn join_labeled(alpha: &Partition, beta: &Partition) -> (Partition, Vec<(u32, u32)>) {
    let ka = alpha.k_set();
    let kb = beta.k_set();
    let na = alpha.alphabet_size() as u32;
    let nb = beta.alphabet_size() as u32;
    let mut finite = Vec::new();
    let mut labels = Vec::new();
    for i in 1..=na {
        for j in 1..=nb {
            let cell = match (alpha.atom(i), beta.atom(j)) {
                (None, None) => continue,
                (None, Some(b)) => b.difference(&ka),
                (Some(a), None) => a.difference(&kb),
                (Some(a), Some(b)) => a.intersect(b),
            };
            if !cell.is_empty() {
                finite.push(cell);
                labels.push((i, j));
            }
        }
    }
    (Partition { finite }, labels)
}

/// `α ∨ β`; the infinite atom is `A_1 ∩ B_1`.
pub fn join(alpha: &Partition, beta: &Partition) -> Partition {
    join_labeled(alpha, beta).0
}

/// `Σ_{i≠1} ν(A_i △ B_i)`.
pub fn partition_distance(alpha: &Partition, beta: &Partition) -> Result<MeasureValue> {
    if alpha.alphabet_size() != beta.alphabet_size() {
        return Err(Error::AlphabetMismatch(
            alpha.alphabet_size(),
            beta.alphabet_size(),
        ));
    }
    Ok(MeasureValue::Finite(
        alpha
            .finite
            .iter()
            .zip(&beta.finite)
            .fold(Rational::zero(), |acc, (a, b)| acc + a.sym_diff(b).measure()),
    ))
}

/// Finite sequence of symbols starting at coordinate `offset`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word {
    pub symbols: Vec<u32>,
    pub offset: i64,
}

impl Word {
    pub fn new(symbols: Vec<u32>, offset: i64) -> Self {
        Word { symbols, offset }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&word_key(&self.symbols))
    }
}

/// Symbols joined by single spaces.
pub fn word_key(w: &[u32]) -> String {
    w.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

pub fn parse_word(s: &str) -> Result<Vec<u32>> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u32>().map_err(|_| Error::Parse(format!("bad symbol `{t}`"))))
        .collect()
}

const MIXED: u32 = 0;

/// Symbols of a partition on every level of a stage column.
#[derive(Debug, Clone)]
pub struct Labeling {
    depth: usize,
    pure: Vec<u32>,
    mixed: HashMap<usize, (Vec<Rational>, Vec<u32>)>,
    /// Number of top levels carrying symbol 1 throughout.
    free_top: usize,
    alphabet: usize,
}

impl Labeling {
    pub fn new(st: &StageTower, alpha: &Partition) -> Result<Self> {
        let h = st.height();
        let mut pure = vec![1u32; h];
        let mut segs: BTreeMap<usize, Vec<(Rational, Rational, u32)>> = BTreeMap::new();
        for (i, atom) in alpha.finite.iter().enumerate() {
            let sym = i as u32 + 2;
            for p in st.pieces(atom)? {
                if st.is_full(&p) {
                    pure[p.level] = sym;
                } else {
                    pure[p.level] = MIXED;
                    segs.entry(p.level).or_default().push((p.lo, p.hi, sym));
                }
            }
        }
        let mut mixed = HashMap::new();
        for (lvl, mut v) in segs {
            v.sort_by(|a, b| a.0.cmp(&b.0));
            let mut cuts = Vec::new();
            let mut syms = Vec::new();
            let mut at = Rational::zero();
            for (lo, hi, s) in v {
                if lo > at {
                    push_seg(&mut cuts, &mut syms, &at, 1);
                }
                push_seg(&mut cuts, &mut syms, &lo, s);
                at = hi;
            }
            if at < st.width {
                push_seg(&mut cuts, &mut syms, &at, 1);
            }
            // the first segment starts at 0 and has no cut
            cuts.remove(0);
            mixed.insert(lvl, (cuts, syms));
        }
        let free_top = pure.iter().rev().take_while(|&&s| s == 1).count();
        Ok(Labeling {
            depth: st.depth,
            pure,
            mixed,
            free_top,
            alphabet: alpha.alphabet_size(),
        })
    }

    pub fn height(&self) -> usize {
        self.pure.len()
    }

    pub fn free_top(&self) -> usize {
        self.free_top
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    /// Whether level `l` (possibly negative) has a known symbol everywhere.
    pub fn resolvable(&self, l: i64) -> bool {
        l < self.pure.len() as i64 && -l <= self.free_top as i64
    }

    /// Symbol of the point at `offset` inside level `l`.
    pub fn symbol(&self, l: i64, offset: &Rational) -> Result<u32> {
        if !self.resolvable(l) {
            return Err(Error::deeper(self.depth));
        }
        if l < 0 {
            return Ok(1);
        }
        let l = l as usize;
        match self.pure[l] {
            MIXED => {
                let (cuts, syms) = &self.mixed[&l];
                Ok(syms[cuts.partition_point(|c| c <= offset)])
            }
            s => Ok(s),
        }
    }

    /// Whole-level symbol, `None` for a cut level.
    pub fn level_symbol(&self, l: i64) -> Option<u32> {
        if l < 0 {
            return (-l <= self.free_top as i64).then_some(1);
        }
        match self.pure.get(l as usize) {
            Some(&MIXED) | None => None,
            Some(&s) => Some(s),
        }
    }

    /// Splits a piece into sub-pieces of constant name over level offsets
    /// `a..b`, returning each sub-piece with its name.
    pub fn split_names(
        &self,
        st: &StageTower,
        piece: &Piece,
        a: i64,
        b: i64,
    ) -> Result<Vec<(Piece, Vec<u32>)>> {
        let base = piece.level as i64;
        if !self.resolvable(base + a) || !self.resolvable(base + b - 1) {
            return Err(Error::NeedsDeeperStage {
                depth: st.depth,
                index: Some(if self.resolvable(base + a) { b - 1 } else { a }),
            });
        }
        let mut cuts: Vec<&Rational> = Vec::new();
        for l in (base + a).max(0)..base + b {
            if let Some((c, _)) = self.mixed.get(&(l as usize)) {
                cuts.extend(c.iter().filter(|x| **x > piece.lo && **x < piece.hi));
            }
        }
        cuts.sort();
        cuts.dedup();
        let mut bounds: Vec<Rational> = Vec::with_capacity(cuts.len() + 2);
        bounds.push(piece.lo.clone());
        bounds.extend(cuts.into_iter().cloned());
        bounds.push(piece.hi.clone());
        let mut out: Vec<(Piece, Vec<u32>)> = Vec::with_capacity(bounds.len() - 1);
        for w in bounds.windows(2) {
            let name = (a..b)
                .map(|i| self.symbol(base + i, &w[0]))
                .collect::<Result<Vec<_>>>()?;
            match out.last_mut() {
                Some((p, n)) if *n == name => p.hi = w[1].clone(),
                _ => out.push((
                    Piece {
                        level: piece.level,
                        lo: w[0].clone(),
                        hi: w[1].clone(),
                    },
                    name,
                )),
            }
        }
        Ok(out)
    }

    /// Name of the point at `(level, offset)` over offsets `a..b`.
    pub fn name_at(&self, level: usize, offset: &Rational, a: i64, b: i64) -> Result<Vec<u32>> {
        (a..b)
            .map(|i| self.symbol(level as i64 + i, offset))
            .collect()
    }
}

fn push_seg(cuts: &mut Vec<Rational>, syms: &mut Vec<u32>, at: &Rational, s: u32) {
    if syms.last() == Some(&s) {
        return;
    }
    cuts.push(at.clone());
    syms.push(s);
}

/// `φ_α(y)_{[m,n]}`.
pub fn alpha_name(
    sys: &RankOneSystem,
    alpha: &Partition,
    y: &Point,
    m: i64,
    n: i64,
    depth: usize,
) -> Result<Word> {
    if m > n {
        return Err(Error::Precondition(format!("empty range {m}..={n}")));
    }
    let st = sys.stage(depth)?;
    let lab = Labeling::new(st, alpha)?;
    let (level, off) = st.locate(&y.0).ok_or_else(|| Error::deeper(depth))?;
    // the very first point of the stage base has no preimage at any depth
    if level as i64 + m < 0 && st.slot(level) == 0 && off.is_zero() {
        return Err(Error::NeedsDeeperStage {
            depth,
            index: Some(-(level as i64) - 1),
        });
    }
    let symbols = lab.name_at(level, &off, m, n + 1).map_err(|_| {
        let first_bad = if lab.resolvable(level as i64 + m) {
            st.height() as i64 - level as i64
        } else {
            -(level as i64) - lab.free_top() as i64 - 1
        };
        Error::NeedsDeeperStage {
            depth,
            index: Some(first_bad),
        }
    })?;
    Ok(Word::new(symbols, m))
}

/// One finite atom of `α_m^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinAtom {
    pub word: Vec<u32>,
    /// Index into `word` of the first symbol other than 1.
    pub anchor: usize,
    /// `T^{m+anchor}` of the atom, a subset of `K_α`.
    pub anchored: IntervalSet,
    pub measure: Rational,
    /// The atom itself, when `T^{-(m+anchor)}` of the anchored set stays in
    /// the stage column.
    pub realized: Option<IntervalSet>,
}

/// The finite atoms of `α_m^n = ⋁_{i=m}^n T^{-i} α`, ordered by word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IteratedJoin {
    pub m: i64,
    pub n: i64,
    pub atoms: Vec<JoinAtom>,
}

impl IteratedJoin {
    pub fn measures(&self) -> BTreeMap<Vec<u32>, Rational> {
        self.atoms
            .iter()
            .map(|a| (a.word.clone(), a.measure.clone()))
            .collect()
    }

    pub fn get(&self, word: &[u32]) -> Option<&JoinAtom> {
        self.atoms
            .binary_search_by(|a| a.word.as_slice().cmp(word))
            .ok()
            .map(|i| &self.atoms[i])
    }

    /// The join as a [`Partition`] whose symbol `k + 2` is the `k`-th word.
    pub fn to_partition(&self) -> Result<Partition> {
        let finite = self
            .atoms
            .iter()
            .map(|a| a.realized.clone().ok_or_else(|| Error::NeedsDeeperStage {
                depth: 0,
                index: Some(self.m + a.anchor as i64),
            }))
            .collect::<Result<Vec<_>>>()?;
        Partition::new(finite)
    }
}

/// Computes every finite atom of `α_m^n` through its anchored image in `K_α`.
pub fn iterated_join(
    sys: &RankOneSystem,
    alpha: &Partition,
    m: i64,
    n: i64,
    depth: usize,
) -> Result<IteratedJoin> {
    if m > n {
        return Err(Error::Precondition(format!("empty range {m}..={n}")));
    }
    let st = sys.stage(depth)?;
    let lab = Labeling::new(st, alpha)?;
    iterated_join_with(st, &lab, alpha, m, n)
}

pub fn iterated_join_with(
    st: &StageTower,
    lab: &Labeling,
    alpha: &Partition,
    m: i64,
    n: i64,
) -> Result<IteratedJoin> {
    let len = (n - m + 1) as usize;
    let mut groups: BTreeMap<Vec<u32>, (usize, Vec<Piece>)> = BTreeMap::new();
    let kp = st.pieces(&alpha.k_set())?;
    for anchor in 0..len {
        // z = T^{m+anchor} y; the name of y over [m, n] is z's name over
        // offsets [-anchor, len - anchor)
        for p in &kp {
            for (sub, name) in lab.split_names(st, p, -(anchor as i64), (len - anchor) as i64)? {
                if name[..anchor].iter().all(|&s| s == 1) {
                    groups.entry(name).or_insert_with(|| (anchor, Vec::new())).1.push(sub);
                }
            }
        }
    }
    let atoms = groups
        .into_iter()
        .map(|(word, (anchor, pieces))| {
            let shift = m + anchor as i64;
            let realized = pieces
                .iter()
                .all(|p| {
                    let t = p.level as i64 - shift;
                    t >= 0 && t < st.height() as i64
                })
                .then(|| {
                    st.assemble(pieces.iter().map(|p| Piece {
                        level: (p.level as i64 - shift) as usize,
                        ..p.clone()
                    }))
                });
            let anchored = st.assemble(pieces);
            JoinAtom {
                measure: anchored.measure(),
                word,
                anchor,
                anchored,
                realized,
            }
        })
        .collect();
    Ok(IteratedJoin { m, n, atoms })
}

/// Words of length `n` with positive measure, plus `1^n`.
pub fn language(
    sys: &RankOneSystem,
    alpha: &Partition,
    n: usize,
    depth: usize,
    sample_budget: usize,
) -> Result<BTreeSet<Vec<u32>>> {
    if n == 0 {
        return Err(Error::Precondition("word length must be ≥ 1".into()));
    }
    let j = iterated_join(sys, alpha, 0, n as i64 - 1, depth)?;
    let mut out: BTreeSet<Vec<u32>> = j
        .atoms
        .into_iter()
        .filter(|a| a.measure.is_positive())
        .map(|a| a.word)
        .collect();
    out.insert(vec![1; n]);
    if out.len() > sample_budget {
        return Err(Error::BudgetExceeded(format!(
            "{} words of length {n} exceed the budget {sample_budget}",
            out.len()
        )));
    }
    Ok(out)
}

/// Exact `(2n−1)`-block distribution `ν(S_v) / ν(K_α)` over windows centered
/// at a point of `K_α`.
pub fn reference_distribution(
    st: &StageTower,
    lab: &Labeling,
    alpha: &Partition,
    n: usize,
) -> Result<BTreeMap<Vec<u32>, Rational>> {
    let k = alpha.k_set();
    let total = k.measure();
    if !total.is_positive() {
        return Err(Error::DegeneratePartition);
    }
    let r = n as i64 - 1;
    let mut out: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
    for p in st.pieces(&k)? {
        for (sub, name) in lab.split_names(st, &p, -r, r + 1)? {
            *out.entry(name).or_insert_with(Rational::zero) += &sub.hi - &sub.lo;
        }
    }
    for v in out.values_mut() {
        *v /= &total;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockDistribution {
    pub n: usize,
    #[serde(serialize_with = "ser_counts")]
    pub block_counts: BTreeMap<Vec<u32>, u64>,
    pub anchor_count: u64,
    /// Anchors whose window ran past the end of the word.
    pub skipped: u64,
}

fn ser_counts<S: serde::Serializer>(
    m: &BTreeMap<Vec<u32>, u64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(&word_key(k), v)?;
    }
    map.end()
}

impl BlockDistribution {
    pub fn frequency(&self, w: &[u32]) -> Option<Rational> {
        (self.anchor_count > 0).then(|| {
            Rational::new(
                (*self.block_counts.get(w).unwrap_or(&0)).into(),
                self.anchor_count.into(),
            )
        })
    }
}

/// Counts centered `(2n−1)`-windows at the non-1 positions of `w`.
pub fn block_distribution(w: &Word, n: usize) -> BlockDistribution {
    block_distribution_in(&w.symbols, 0..w.symbols.len(), n)
}

/// Like [`block_distribution`], but anchors are only taken from `anchors`
/// while windows may use the whole of `name`.
pub fn block_distribution_in(
    name: &[u32],
    anchors: std::ops::Range<usize>,
    n: usize,
) -> BlockDistribution {
    let r = n.saturating_sub(1);
    let mut block_counts = BTreeMap::new();
    let mut anchor_count = 0;
    let mut skipped = 0;
    for j in anchors {
        if name[j] == 1 {
            continue;
        }
        if j < r || j + r >= name.len() {
            skipped += 1;
            continue;
        }
        *block_counts.entry(name[j - r..=j + r].to_vec()).or_insert(0) += 1;
        anchor_count += 1;
    }
    BlockDistribution {
        n,
        block_counts,
        anchor_count,
        skipped,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WithinReport {
    pub within: bool,
    #[serde(with = "crate::exact::rational_str")]
    pub max_deviation: Rational,
    pub word: Option<String>,
}

/// Is every word frequency within `delta` of the reference.
pub fn distribution_within(
    e: &BlockDistribution,
    reference: &BTreeMap<Vec<u32>, Rational>,
    delta: &Rational,
) -> Result<WithinReport> {
    if e.anchor_count == 0 {
        return Err(Error::EmptyAnchor);
    }
    let words: BTreeSet<&Vec<u32>> = e.block_counts.keys().chain(reference.keys()).collect();
    let total = int(e.anchor_count as i64);
    let mut max = Rational::zero();
    let mut arg = None;
    for w in words {
        let got = int(*e.block_counts.get(w).unwrap_or(&0) as i64) / &total;
        let want = reference.get(w).cloned().unwrap_or_else(Rational::zero);
        let dev = (got - want).abs();
        if arg.is_none() || dev >= max {
            max = dev;
            arg = Some(w);
        }
    }
    Ok(WithinReport {
        within: &max < delta,
        max_deviation: max,
        word: arg.map(|w| word_key(w)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;
    use crate::rankone::RankOneSpec;
    use proptest::prelude::*;

    fn hk(depth: usize) -> RankOneSystem {
        RankOneSystem::new(RankOneSpec::hajian_kakutani(10), depth).unwrap()
    }

    fn set(parts: &[(i64, i64, i64, i64)]) -> IntervalSet {
        IntervalSet::from_fracs(parts).unwrap()
    }

    fn unit_alpha() -> Partition {
        Partition::new(vec![set(&[(0, 1, 1, 1)])]).unwrap()
    }

    #[test]
    fn join_examples() {
        let a = unit_alpha();
        let same = join(&a, &a);
        assert_eq!(same.finite_atoms(), a.finite_atoms());
        let b = Partition::new(vec![set(&[(1, 2, 3, 2)])]).unwrap();
        let (j, labels) = join_labeled(&a, &b);
        let got: BTreeSet<IntervalSet> = j.finite_atoms().iter().cloned().collect();
        let want: BTreeSet<IntervalSet> = [set(&[(0, 1, 1, 2)]), set(&[(1, 2, 1, 1)]), set(&[(1, 1, 3, 2)])]
            .into_iter()
            .collect();
        assert_eq!(got, want);
        assert_eq!(labels, vec![(1, 2), (2, 1), (2, 2)]);
        assert_eq!(join(&a, &Partition::trivial()), a);
    }

    #[test]
    fn distance_examples() {
        let a = Partition::new(vec![set(&[(0, 1, 1, 2)]), set(&[(1, 2, 1, 1)])]).unwrap();
        let swapped = Partition::new(vec![set(&[(1, 2, 1, 1)]), set(&[(0, 1, 1, 2)])]).unwrap();
        assert_eq!(partition_distance(&a, &a).unwrap(), MeasureValue::zero());
        assert_eq!(
            partition_distance(&a, &swapped).unwrap(),
            MeasureValue::Finite(int(2))
        );
        let p = Partition::new(vec![set(&[(0, 1, 1, 2)])]).unwrap();
        let q = Partition::new(vec![set(&[(0, 1, 1, 4)])]).unwrap();
        assert_eq!(
            partition_distance(&p, &q).unwrap(),
            MeasureValue::Finite(rat(1, 4))
        );
        assert_eq!(
            partition_distance(&p, &a),
            Err(Error::AlphabetMismatch(2, 3))
        );
    }

    #[test]
    fn alpha_name_examples() {
        let sys = hk(3);
        let a = unit_alpha();
        let w = alpha_name(&sys, &a, &Point(rat(1, 8)), 0, 4, 3).unwrap();
        assert_eq!(w.symbols, vec![2, 2, 1, 1, 2]);
        assert_eq!(alpha_name(&sys, &a, &Point(rat(1, 8)), 0, 0, 3).unwrap().symbols, vec![2]);
        assert_eq!(alpha_name(&sys, &a, &Point(rat(9, 8)), 0, 0, 3).unwrap().symbols, vec![1]);
        assert!(matches!(
            alpha_name(&sys, &a, &Point(rat(1, 8)), 0, 20, 3),
            Err(Error::NeedsDeeperStage { .. })
        ));
        assert!(alpha_name(&sys, &a, &Point(rat(0, 1)), -1, 0, 3).is_err());
    }

    #[test]
    fn names_below_base_agree_with_deeper_stage() {
        let deep = hk(7);
        let a = unit_alpha();
        for k in 0..64 {
            let y = Point(rat(2 * k + 1, 128));
            let shallow = alpha_name(&deep, &a, &y, -6, 6, 4).unwrap();
            let full = alpha_name(&deep, &a, &y, -6, 6, 7).unwrap();
            assert_eq!(shallow, full);
        }
    }

    #[test]
    fn name_shift_commutes() {
        let sys = hk(6);
        let a = Partition::new(vec![set(&[(0, 1, 1, 2)]), set(&[(1, 2, 1, 1)])]).unwrap();
        for k in 0..40 {
            let y = Point(rat(2 * k + 1, 80));
            let ty = sys.apply_t(&y, 6).unwrap();
            let w = alpha_name(&sys, &a, &y, 0, 10, 6).unwrap();
            let v = alpha_name(&sys, &a, &ty, 0, 9, 6).unwrap();
            assert_eq!(&w.symbols[1..], &v.symbols[..]);
        }
    }

    // Oracle: classify points on a fine grid by orbit stepping.
    fn grid_join_measures(sys: &RankOneSystem, a: &Partition, m: i64, n: i64, depth: usize, region: (i64, i64), den: i64) -> BTreeMap<Vec<u32>, Rational> {
        let mut out: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
        for k in region.0 * den..region.1 * den {
            let y = Point(rat(2 * k + 1, 2 * den));
            let orbit = sys.orbit_segment(&y, m, n, depth).unwrap();
            let w: Vec<u32> = orbit.iter().map(|p| a.symbol_at(&p.0)).collect();
            if w.iter().any(|&s| s != 1) {
                *out.entry(w).or_insert_with(Rational::zero) += rat(1, den);
            }
        }
        out
    }

    #[test]
    fn iterated_join_matches_orbit_oracle() {
        let sys = hk(6);
        let a = Partition::new(vec![set(&[(0, 1, 1, 2)])]).unwrap();
        let j = iterated_join(&sys, &a, 0, 1, 4).unwrap();
        // atoms with word 2·x are inside [0,1/2); 1·2 atoms are preimages
        let oracle = grid_join_measures(&sys, &a, 0, 1, 6, (0, 4), 64);
        let got = j.measures();
        // words starting inside A are classified directly by the grid oracle
        for (w, m) in &got {
            if w[0] != 1 {
                assert_eq!(Some(m), oracle.get(w), "word {w:?}");
            }
        }
        // shift invariance: ν(S_12) + ν(S_22) = ν(A)
        let s12 = got.get(&vec![1, 2]).cloned().unwrap();
        let s22 = got.get(&vec![2, 2]).cloned().unwrap_or_else(Rational::zero);
        assert_eq!(s12 + s22, rat(1, 2));
        for at in &j.atoms {
            if let Some(r) = &at.realized {
                assert_eq!(r.measure(), at.measure);
            }
        }
        let trivial = iterated_join(&sys, &a, 0, 0, 4).unwrap();
        assert_eq!(trivial.to_partition().unwrap(), a);
        assert!(matches!(
            iterated_join(&sys, &a, 0, 200, 3),
            Err(Error::NeedsDeeperStage { .. })
        ));
    }

    #[test]
    fn join_refines_subwindows() {
        let sys = hk(6);
        let a = Partition::new(vec![set(&[(0, 1, 1, 2)]), set(&[(1, 2, 1, 1)])]).unwrap();
        let big = iterated_join(&sys, &a, -1, 3, 6).unwrap();
        let small = iterated_join(&sys, &a, 0, 2, 6).unwrap();
        // every atom of the small window is the union of the big atoms restricting to it
        let mut sums: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
        for at in &big.atoms {
            let u = at.word[1..4].to_vec();
            if u.iter().any(|&s| s != 1) {
                *sums.entry(u).or_insert_with(Rational::zero) += &at.measure;
            }
        }
        assert_eq!(sums, small.measures());
        for at in &big.atoms {
            let u = &at.word[1..4];
            if let (Some(r), Some(sm)) = (&at.realized, small.get(u).and_then(|x| x.realized.as_ref())) {
                assert!(r.is_subset(sm));
            }
        }
    }

    #[test]
    fn language_examples() {
        let sys = hk(6);
        let a = unit_alpha();
        let l1 = language(&sys, &a, 1, 6, 100).unwrap();
        assert_eq!(l1, [vec![1], vec![2]].into_iter().collect());
        let l2 = language(&sys, &a, 2, 6, 100).unwrap();
        assert!(l2.contains(&vec![2, 2]));
        let l4 = language(&sys, &a, 4, 6, 100).unwrap();
        // K visits come in adjacent pairs, so 2 2 2 never occurs
        assert!(l4.iter().all(|w| !w.windows(3).any(|x| x == [2, 2, 2])));
        let j = iterated_join(&sys, &a, 0, 3, 6).unwrap();
        let mut from_join: BTreeSet<Vec<u32>> = j.atoms.iter().map(|x| x.word.clone()).collect();
        from_join.insert(vec![1; 4]);
        assert_eq!(l4, from_join);
        assert!(matches!(language(&sys, &a, 4, 6, 2), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn block_distribution_examples() {
        let d = block_distribution(&Word::new(vec![1, 2, 2, 1, 2, 2], 0), 1);
        assert_eq!(d.block_counts, [(vec![2], 4)].into_iter().collect());
        assert_eq!(d.anchor_count, 4);
        let d = block_distribution(&Word::new(vec![1, 2, 2, 3], 0), 1);
        assert_eq!(d.block_counts, [(vec![2], 2), (vec![3], 1)].into_iter().collect());
        let d = block_distribution(&Word::new(vec![1; 5], 0), 2);
        assert_eq!(d.anchor_count, 0);
        assert!(d.block_counts.is_empty());
        let d = block_distribution(&Word::new(vec![2, 1, 2], 2), 2);
        assert_eq!((d.anchor_count, d.skipped), (0, 2));
    }

    #[test]
    fn within_examples() {
        let e = block_distribution(&Word::new(vec![2, 2, 2, 2], 0), 1);
        let r: BTreeMap<Vec<u32>, Rational> = [(vec![2], int(1))].into_iter().collect();
        let rep = distribution_within(&e, &r, &rat(1, 100)).unwrap();
        assert!(rep.within);
        assert_eq!(rep.max_deviation, int(0));
        let e = block_distribution(&Word::new(vec![2, 2, 2, 3], 0), 1);
        let rep = distribution_within(&e, &r, &rat(1, 100)).unwrap();
        assert!(!rep.within);
        assert_eq!(rep.word.as_deref(), Some("3"));
        let e = block_distribution(&Word::new(vec![1, 1], 0), 1);
        assert_eq!(distribution_within(&e, &r, &rat(1, 2)), Err(Error::EmptyAnchor));
    }

    #[test]
    fn reference_sums_to_one() {
        let sys = hk(6);
        let a = Partition::new(vec![set(&[(0, 1, 1, 2)]), set(&[(1, 2, 1, 1)])]).unwrap();
        let st = sys.stage(6).unwrap();
        let lab = Labeling::new(st, &a).unwrap();
        for n in 1..4 {
            let r = reference_distribution(st, &lab, &a, n).unwrap();
            let s = r.values().fold(Rational::zero(), |acc, v| acc + v);
            assert_eq!(s, int(1));
        }
    }

    fn grid_set() -> impl Strategy<Value = IntervalSet> {
        proptest::collection::vec((0i64..16, 1i64..4), 0..4).prop_map(|v| {
            IntervalSet::from_pairs(v.into_iter().map(|(a, w)| (rat(a, 8), rat(a + w, 8)))).unwrap()
        })
    }

    proptest! {
        #[test]
        fn distance_is_pseudometric(a in grid_set(), b in grid_set(), c in grid_set()) {
            let p = Partition::with_null_atoms(vec![a]).unwrap();
            let q = Partition::with_null_atoms(vec![b]).unwrap();
            let r = Partition::with_null_atoms(vec![c]).unwrap();
            let d = |x: &Partition, y: &Partition| partition_distance(x, y).unwrap().finite().unwrap().clone();
            prop_assert_eq!(d(&p, &q), d(&q, &p));
            prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r));
            prop_assert_eq!(d(&p, &p), Rational::zero());
        }
    }
}
