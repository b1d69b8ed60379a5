//! Symbolic factors at finite depth, factor maps between them, inverse-limit
//! truncations, and ordered Bratteli diagrams built from refining towers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{IntervalSet, MeasureValue, Rational};
use crate::partition::{iterated_join_with, word_key, Labeling, Partition};
use crate::rankone::RankOneSystem;
use crate::stats::CompactOpen;
use crate::tower::{Column, StandardTower};

/// Words of length `1..=depth` of the `α`-factor with their cylinder
/// measures. Words that never occur are absent; `1^ℓ` is always present with
/// infinite measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubshiftModel {
    pub alphabet: usize,
    pub depth: usize,
    words: Vec<BTreeMap<Vec<u32>, MeasureValue>>,
}

/// Builds the factor model of `α` up to word length `depth`, reading names
/// at stage `stage_depth`.
pub fn build_subshift(
    sys: &RankOneSystem,
    alpha: &Partition,
    depth: usize,
    stage_depth: usize,
) -> Result<SubshiftModel> {
    if depth == 0 {
        return Err(Error::Precondition("model depth must be ≥ 1".into()));
    }
    let st = sys.stage(stage_depth)?;
    let lab = Labeling::new(st, alpha)?;
    let mut words = Vec::with_capacity(depth);
    for len in 1..=depth {
        let join = iterated_join_with(st, &lab, alpha, 0, len as i64 - 1)?;
        let mut level: BTreeMap<Vec<u32>, MeasureValue> = join
            .atoms
            .into_iter()
            .filter(|a| a.measure.is_positive())
            .map(|a| (a.word, MeasureValue::Finite(a.measure)))
            .collect();
        level.insert(vec![1; len], MeasureValue::Infinite);
        words.push(level);
    }
    Ok(SubshiftModel {
        alphabet: alpha.alphabet_size(),
        depth,
        words,
    })
}

impl SubshiftModel {
    /// Admissible words of length `len`.
    pub fn words(&self, len: usize) -> impl Iterator<Item = &Vec<u32>> {
        self.level(len).into_iter().flat_map(|m| m.keys())
    }

    fn level(&self, len: usize) -> Option<&BTreeMap<Vec<u32>, MeasureValue>> {
        len.checked_sub(1).and_then(|i| self.words.get(i))
    }

    pub fn word_count(&self, len: usize) -> usize {
        self.level(len).map_or(0, |m| m.len())
    }

    pub fn is_admissible(&self, w: &[u32]) -> bool {
        w.is_empty() || self.level(w.len()).is_some_and(|m| m.contains_key(w))
    }

    /// `μ̂([w])`; zero for words outside the language.
    pub fn measure(&self, w: &[u32]) -> Result<MeasureValue> {
        if w.len() > self.depth {
            return Err(Error::WordTooLong {
                len: w.len(),
                depth: self.depth,
            });
        }
        if w.is_empty() {
            return Ok(MeasureValue::Infinite);
        }
        if let Some(&s) = w.iter().find(|&&s| s == 0 || s as usize > self.alphabet) {
            return Err(Error::UnknownSymbol(s));
        }
        Ok(self.level(w.len()).and_then(|m| m.get(w)).cloned().unwrap_or_else(MeasureValue::zero))
    }

    /// `μ̂` of a union of cylinders.
    pub fn measure_of(&self, a: &CompactOpen) -> Result<MeasureValue> {
        a.words
            .iter()
            .try_fold(MeasureValue::zero(), |acc, w| Ok(acc + self.measure(w)?))
    }

    /// Checks closure under subwords, extendability, and additivity of the
    /// cylinder measures on both sides.
    pub fn audit(&self) -> SubshiftAudit {
        let mut out = SubshiftAudit::default();
        for len in 1..=self.depth {
            for (w, m) in self.level(len).into_iter().flatten() {
                out.words += 1;
                if len > 1 && !(self.is_admissible(&w[1..]) && self.is_admissible(&w[..len - 1])) {
                    out.failures.push(format!("{} has an inadmissible subword", word_key(w)));
                }
                if len == self.depth {
                    continue;
                }
                let mut right = MeasureValue::zero();
                let mut left = MeasureValue::zero();
                let mut right_any = false;
                let mut left_any = false;
                for s in 1..=self.alphabet as u32 {
                    let mut wr = w.clone();
                    wr.push(s);
                    if let Some(x) = self.level(len + 1).and_then(|l| l.get(&wr)) {
                        right = right + x.clone();
                        right_any = true;
                    }
                    let mut wl = vec![s];
                    wl.extend_from_slice(w);
                    if let Some(x) = self.level(len + 1).and_then(|l| l.get(&wl)) {
                        left = left + x.clone();
                        left_any = true;
                    }
                }
                if !right_any || !left_any {
                    out.failures.push(format!("{} does not extend", word_key(w)));
                }
                if !m.is_infinite() {
                    out.additivity_checks += 1;
                    if &right != m || &left != m {
                        out.failures.push(format!(
                            "{}: μ = {m}, right sum {right}, left sum {left}",
                            word_key(w)
                        ));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SubshiftAudit {
    pub words: usize,
    pub additivity_checks: usize,
    pub failures: Vec<String>,
}

impl SubshiftAudit {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `μ̂([u.v]) = μ̂([uv])`.
pub fn cylinder_measure(model: &SubshiftModel, u: &[u32], v: &[u32]) -> Result<MeasureValue> {
    let mut w = u.to_vec();
    w.extend_from_slice(v);
    model.measure(&w)
}

/// Symbol map `𝔄_α → 𝔄_β`, entry `s` being the image of symbol `s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactorMapTable {
    pub map: Vec<u32>,
}

impl FactorMapTable {
    pub fn identity(alphabet: usize) -> Self {
        FactorMapTable {
            map: (0..=alphabet as u32).collect(),
        }
    }

    /// The map sending each atom of `alpha` to the atom of `beta` containing
    /// it; requires `alpha ≽ beta`.
    pub fn from_partitions(alpha: &Partition, beta: &Partition) -> Result<Self> {
        if !beta.k_set().is_subset(&alpha.k_set()) {
            return Err(Error::Precondition("K_β must lie inside K_α".into()));
        }
        let k_beta = beta.k_set();
        let mut map = vec![0, 1];
        for (i, a) in alpha.finite_atoms().iter().enumerate() {
            let image = if a.is_disjoint(&k_beta) {
                1
            } else {
                let j = beta
                    .finite_atoms()
                    .iter()
                    .position(|b| a.is_subset(b))
                    .ok_or_else(|| {
                        Error::NotRefining(i + 2, "atom meets several atoms of the coarser partition".into())
                    })?;
                j as u32 + 2
            };
            map.push(image);
        }
        Ok(FactorMapTable { map })
    }

    pub fn domain_size(&self) -> usize {
        self.map.len() - 1
    }

    pub fn apply(&self, s: u32) -> Result<u32> {
        match self.map.get(s as usize) {
            Some(&t) if s != 0 => Ok(t),
            _ => Err(Error::UnknownSymbol(s)),
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &FactorMapTable) -> Result<FactorMapTable> {
        let mut map = vec![0];
        for s in 1..=inner.domain_size() as u32 {
            map.push(self.apply(inner.apply(s)?)?);
        }
        Ok(FactorMapTable { map })
    }
}

/// Coordinate-wise image of a word.
pub fn factor_word(tbl: &FactorMapTable, w: &[u32]) -> Result<Vec<u32>> {
    w.iter().map(|&s| tbl.apply(s)).collect()
}

/// A chain of factor models, coarsest first, with a direct table `φ_{n,m}`
/// for every `n < m`.
#[derive(Debug, Clone)]
pub struct InverseLimitTruncation {
    pub models: Vec<SubshiftModel>,
    pub maps: BTreeMap<(usize, usize), FactorMapTable>,
}

impl InverseLimitTruncation {
    /// `partitions[m] ≽ partitions[n]` for `m > n`.
    pub fn from_chain(
        sys: &RankOneSystem,
        partitions: &[Partition],
        depth: usize,
        stage_depth: usize,
    ) -> Result<Self> {
        let models = partitions
            .iter()
            .map(|p| build_subshift(sys, p, depth, stage_depth))
            .collect::<Result<Vec<_>>>()?;
        let mut maps = BTreeMap::new();
        for m in 0..partitions.len() {
            for n in 0..m {
                maps.insert(
                    (n, m),
                    FactorMapTable::from_partitions(&partitions[m], &partitions[n])?,
                );
            }
        }
        Ok(InverseLimitTruncation { models, maps })
    }

    fn map(&self, n: usize, m: usize) -> Result<&FactorMapTable> {
        self.maps.get(&(n, m)).ok_or_else(|| Error::InconsistentTower {
            l: m,
            m,
            n,
            detail: "missing connecting map".into(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InverseLimitReport {
    pub levels: usize,
    pub composition_checks: usize,
    pub projection_checks: usize,
    pub pushforward_checks: usize,
}

/// Verifies `φ_{n,l} = φ_{n,m} ∘ φ_{m,l}` on every stored word, that
/// projections of admissible words are admissible, and that every connecting
/// map pushes cylinder measures forward exactly, for words up to `max_len`.
pub fn inverse_limit_check(tr: &InverseLimitTruncation, max_len: usize) -> Result<InverseLimitReport> {
    let levels = tr.models.len();
    if levels < 2 {
        return Err(Error::Precondition("need at least two levels".into()));
    }
    let mut report = InverseLimitReport {
        levels,
        ..Default::default()
    };
    let max_len = tr.models.iter().map(|m| m.depth).min().unwrap_or(0).min(max_len);
    let fail = |l, m, n, detail: String| Error::InconsistentTower { l, m, n, detail };
    for l in 0..levels {
        for m in 0..l {
            for n in 0..m {
                let direct = tr.map(n, l)?;
                let via = tr.map(n, m)?.compose(tr.map(m, l)?)?;
                for len in 1..=max_len {
                    for w in tr.models[l].words(len) {
                        report.composition_checks += 1;
                        if factor_word(direct, w)? != factor_word(&via, w)? {
                            return Err(fail(l, m, n, format!("word {}", word_key(w))));
                        }
                    }
                }
            }
        }
    }
    for m in 0..levels {
        for n in 0..m {
            let phi = tr.map(n, m)?;
            let (fine, coarse) = (&tr.models[m], &tr.models[n]);
            for len in 1..=max_len {
                let mut pushed: BTreeMap<Vec<u32>, MeasureValue> = BTreeMap::new();
                for w in fine.words(len) {
                    let v = factor_word(phi, w)?;
                    report.projection_checks += 1;
                    if !coarse.is_admissible(&v) {
                        return Err(fail(m, m, n, format!("{} projects outside the language", word_key(w))));
                    }
                    let mu = fine.measure(w)?;
                    let e = pushed.entry(v).or_insert_with(MeasureValue::zero);
                    *e = e.clone() + mu;
                }
                let keys: BTreeSet<&Vec<u32>> = pushed.keys().chain(coarse.words(len)).collect();
                for v in keys {
                    report.pushforward_checks += 1;
                    let got = pushed.get(v).cloned().unwrap_or_else(MeasureValue::zero);
                    let want = coarse.measure(v)?;
                    if got != want {
                        return Err(fail(
                            m,
                            m,
                            n,
                            format!("pushforward of [{}] is {got}, expected {want}", word_key(v)),
                        ));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// A vertex of a Bratteli level: a principal column, or the infinite level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Vertex {
    pub column: Option<usize>,
    pub height: usize,
    #[serde(with = "crate::exact::opt_rational_str")]
    pub base_measure: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub source: usize,
    pub range: usize,
    pub order: usize,
}

/// Ordered diagram with a root at level 0; level `n ≥ 1` has one vertex per
/// column of the `n`-th tower followed by the infinite vertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BratteliDiagram {
    pub vertices: Vec<Vec<Vertex>>,
    /// `edges[n]` enters level `n + 1`.
    pub edges: Vec<Vec<Edge>>,
}

impl BratteliDiagram {
    pub fn levels(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn infinite_vertex(&self, level: usize) -> Option<usize> {
        self.vertices[level].iter().position(|v| v.column.is_none())
    }

    /// Edges into vertex `v` of `level`, in order.
    pub fn incoming(&self, level: usize, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.edges[level - 1]
            .iter()
            .enumerate()
            .filter(|(_, e)| e.range == v)
            .map(|(i, _)| i)
            .collect();
        out.sort_by_key(|&i| self.edges[level - 1][i].order);
        out
    }

    /// Number of root paths into every vertex, level by level.
    pub fn path_counts(&self) -> Vec<Vec<u128>> {
        let mut counts = vec![vec![1u128]];
        for (n, es) in self.edges.iter().enumerate() {
            let mut next = vec![0u128; self.vertices[n + 1].len()];
            for e in es {
                next[e.range] += counts[n][e.source];
            }
            counts.push(next);
        }
        counts
    }

    /// Checks `paths × base measure = column mass` for every principal
    /// vertex, and that the infinite vertices form a single chain.
    pub fn audit(&self) -> Result<usize> {
        let counts = self.path_counts();
        let mut checked = 0;
        for (n, level) in self.vertices.iter().enumerate().skip(1) {
            for (i, v) in level.iter().enumerate() {
                let incoming = self.incoming(n, i);
                if incoming.is_empty() {
                    return Err(Error::NotRefining(n, format!("vertex {i} has no incoming edge")));
                }
                match &v.base_measure {
                    Some(b) => {
                        let lhs = b * Rational::from_integer(counts[n][i].into());
                        let rhs = b * Rational::from_integer(v.height.into());
                        if lhs != rhs {
                            return Err(Error::NotRefining(
                                n,
                                format!("vertex {i}: {} paths for height {}", counts[n][i], v.height),
                            ));
                        }
                        checked += 1;
                    }
                    None => {
                        let ok = incoming.len() == 1
                            && (n == 1
                                || Some(self.edges[n - 1][incoming[0]].source)
                                    == self.infinite_vertex(n - 1));
                        if !ok {
                            return Err(Error::NotRefining(n, "infinite vertex is not a chain".into()));
                        }
                    }
                }
            }
        }
        Ok(checked)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagram serializes")
    }

    /// GraphViz rendering; edge labels are the order within the range vertex.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph bratteli {\n  rankdir=TB;\n");
        let name = |n: usize, i: usize| format!("v{n}_{i}");
        for (n, level) in self.vertices.iter().enumerate() {
            let _ = write!(out, "  {{ rank=same;");
            for (i, v) in level.iter().enumerate() {
                let label = match (n, v.column) {
                    (0, _) => "root".to_string(),
                    (_, Some(c)) => format!("c{c} h={}", v.height),
                    (_, None) => "∞".to_string(),
                };
                let _ = write!(out, " {} [label=\"{label}\"];", name(n, i));
            }
            out.push_str(" }\n");
        }
        for (n, es) in self.edges.iter().enumerate() {
            for e in es {
                let _ = writeln!(
                    out,
                    "  {} -> {} [label=\"{}\"];",
                    name(n, e.source),
                    name(n + 1, e.range),
                    e.order
                );
            }
        }
        out.push_str("}\n");
        out
    }
}

fn vertices_of(t: &StandardTower) -> Vec<Vertex> {
    let mut v: Vec<Vertex> = t
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| Vertex {
            column: Some(i),
            height: c.height,
            base_measure: Some(c.base_measure()),
        })
        .collect();
    v.push(Vertex {
        column: None,
        height: 1,
        base_measure: None,
    });
    v
}

/// Encodes a refining tower sequence as an ordered diagram: a fiber of a
/// column of tower `n` crosses whole columns of tower `n-1` and single
/// infinite-level steps, and each crossing is one edge, ordered by time.
pub fn export_bratteli(towers: &[StandardTower]) -> Result<BratteliDiagram> {
    let Some(first) = towers.first() else {
        return Err(Error::Precondition("empty tower sequence".into()));
    };
    let mut vertices = vec![vec![Vertex {
        column: None,
        height: 1,
        base_measure: None,
    }]];
    let mut edges = Vec::new();
    let top = vertices_of(first);
    let mut level_edges = Vec::new();
    for (i, v) in top.iter().enumerate() {
        for order in 0..v.height {
            level_edges.push(Edge {
                source: 0,
                range: i,
                order,
            });
        }
    }
    vertices.push(top);
    edges.push(level_edges);
    for (n, pair) in towers.windows(2).enumerate() {
        let (coarse, fine) = (&pair[0], &pair[1]);
        let inf_src = coarse.columns.len();
        let idx = coarse.level_index();
        let k_t = coarse.principal_union();
        let mut level_edges = Vec::new();
        for (ci, col) in fine.columns.iter().enumerate() {
            let mut order = 0;
            let mut j = 0;
            while j < col.height {
                let here = idx
                    .container(coarse, &k_t, &col.level_sets[j])
                    .map_err(|e| Error::NotRefining(n + 2, format!("column {ci} level {j}: {e}")))?;
                match here {
                    None => {
                        level_edges.push(Edge {
                            source: inf_src,
                            range: ci,
                            order,
                        });
                        j += 1;
                    }
                    Some((c, 0)) => {
                        let h = coarse.columns[c].height;
                        for l in 1..h {
                            let next = col.level_sets.get(j + l).map(|s| idx.container(coarse, &k_t, s));
                            if !matches!(next, Some(Ok(Some((cc, ll)))) if cc == c && ll == l) {
                                return Err(Error::NotRefining(
                                    n + 2,
                                    format!("column {ci} leaves column {c} at level {l}"),
                                ));
                            }
                        }
                        level_edges.push(Edge {
                            source: c,
                            range: ci,
                            order,
                        });
                        j += h;
                    }
                    Some((c, l)) => {
                        return Err(Error::NotRefining(
                            n + 2,
                            format!("column {ci} enters column {c} at level {l}"),
                        ));
                    }
                }
                order += 1;
            }
        }
        let inf_range = fine.columns.len();
        level_edges.push(Edge {
            source: inf_src,
            range: inf_range,
            order: 0,
        });
        vertices.push(vertices_of(fine));
        edges.push(level_edges);
    }
    let d = BratteliDiagram { vertices, edges };
    d.audit()?;
    Ok(d)
}

/// Stage `1..=levels` columns, each as a one-column tower.
pub fn hk_canonical_sequence(sys: &RankOneSystem, levels: usize) -> Result<Vec<StandardTower>> {
    (1..=levels)
        .map(|k| {
            let st = sys.stage(k)?;
            let level_sets = st.levels();
            Ok(StandardTower::new(vec![Column {
                base: level_sets[0].clone(),
                height: level_sets.len(),
                level_sets,
                level_names: None,
            }]))
        })
        .collect()
}

/// A root path to a vertex of `edges.len()`-th level: `edges[k]` indexes
/// `d.edges[k]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct BratteliPath {
    pub edges: Vec<usize>,
}

impl BratteliPath {
    pub fn end(&self, d: &BratteliDiagram) -> usize {
        let n = self.edges.len();
        d.edges[n - 1][self.edges[n - 1]].range
    }
}

fn validate_path(d: &BratteliDiagram, p: &BratteliPath) -> Result<()> {
    if p.edges.is_empty() || p.edges.len() > d.levels() {
        return Err(Error::Precondition("path length outside the diagram".into()));
    }
    let mut at = 0;
    for (k, &e) in p.edges.iter().enumerate() {
        let edge = d.edges[k]
            .get(e)
            .ok_or_else(|| Error::Precondition(format!("no edge {e} at level {k}")))?;
        if edge.source != at {
            return Err(Error::Precondition(format!("edge {e} at level {k} is not connected")));
        }
        at = edge.range;
    }
    Ok(())
}

/// Path through the minimal edges into vertex `v` of `level`.
pub fn minimal_path(d: &BratteliDiagram, level: usize, v: usize) -> BratteliPath {
    let mut edges = vec![0; level];
    let mut at = v;
    for n in (1..=level).rev() {
        let e = d.incoming(n, at)[0];
        edges[n - 1] = e;
        at = d.edges[n - 1][e].source;
    }
    BratteliPath { edges }
}

/// Vershik successor: raise the lowest non-maximal edge to its successor and
/// reset every edge below it to the minimal path.
pub fn vershik_step(d: &BratteliDiagram, path: &BratteliPath) -> Result<BratteliPath> {
    validate_path(d, path)?;
    for k in 0..path.edges.len() {
        let e = &d.edges[k][path.edges[k]];
        let inc = d.incoming(k + 1, e.range);
        let pos = inc.iter().position(|&i| i == path.edges[k]).expect("edge enters its range");
        if pos + 1 < inc.len() {
            let next = inc[pos + 1];
            let mut edges = path.edges.clone();
            edges[k] = next;
            if k > 0 {
                let below = minimal_path(d, k, d.edges[k][next].source);
                edges[..k].copy_from_slice(&below.edges);
            }
            return Ok(BratteliPath { edges });
        }
    }
    Err(Error::MaximalPath)
}

/// Position of the path's level inside its end column, counting from 0.
pub fn path_position(d: &BratteliDiagram, path: &BratteliPath) -> Result<u128> {
    validate_path(d, path)?;
    let counts = d.path_counts();
    let mut pos = 0u128;
    for (k, &e) in path.edges.iter().enumerate() {
        let range = d.edges[k][e].range;
        for i in d.incoming(k + 1, range) {
            if i == e {
                break;
            }
            pos += counts[k][d.edges[k][i].source];
        }
    }
    Ok(pos)
}

/// Every root path to `level`.
pub fn all_paths(d: &BratteliDiagram, level: usize) -> Vec<BratteliPath> {
    let mut paths: Vec<(usize, Vec<usize>)> = vec![(0, Vec::new())];
    for k in 0..level {
        let mut next = Vec::new();
        for (at, p) in &paths {
            for (i, e) in d.edges[k].iter().enumerate() {
                if e.source == *at {
                    let mut q = p.clone();
                    q.push(i);
                    next.push((e.range, q));
                }
            }
        }
        paths = next;
    }
    paths.into_iter().map(|(_, edges)| BratteliPath { edges }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VershikAudit {
    pub paths: usize,
    pub non_maximal: usize,
    pub injective: bool,
    pub onto_non_minimal: bool,
    /// Every column's successor orbit visits positions `0..h` once each.
    pub orbits_exact: bool,
}

/// Bijectivity of the successor map between non-maximal and non-minimal
/// paths to `level`, and the orbit through every column.
pub fn vershik_audit(d: &BratteliDiagram, level: usize) -> Result<VershikAudit> {
    let paths = all_paths(d, level);
    let minimal: BTreeSet<BratteliPath> = (0..d.vertices[level].len())
        .map(|v| minimal_path(d, level, v))
        .collect();
    let mut images = BTreeSet::new();
    let mut non_maximal = 0;
    for p in &paths {
        match vershik_step(d, p) {
            Ok(q) => {
                non_maximal += 1;
                images.insert(q);
            }
            Err(Error::MaximalPath) => {}
            Err(e) => return Err(e),
        }
    }
    let non_minimal: BTreeSet<BratteliPath> =
        paths.iter().filter(|p| !minimal.contains(*p)).cloned().collect();
    let mut orbits_exact = true;
    for (v, vert) in d.vertices[level].iter().enumerate() {
        let mut p = minimal_path(d, level, v);
        let mut seen = BTreeSet::new();
        loop {
            let pos = path_position(d, &p)?;
            if p.end(d) != v || !seen.insert(pos) {
                orbits_exact = false;
                break;
            }
            match vershik_step(d, &p) {
                Ok(q) => p = q,
                Err(_) => break,
            }
        }
        if vert.column.is_some() && seen.len() != vert.height {
            orbits_exact = false;
        }
        if seen.iter().copied().max().map_or(0, |m| m + 1) != seen.len() as u128 {
            orbits_exact = false;
        }
    }
    Ok(VershikAudit {
        paths: paths.len(),
        non_maximal,
        injective: images.len() == non_maximal,
        onto_non_minimal: images == non_minimal,
        orbits_exact,
    })
}

/// Exact measure of a level set in a tower column, for audits.
pub fn column_mass(t: &StandardTower) -> Vec<Rational> {
    t.columns
        .iter()
        .map(|c| {
            c.level_sets
                .iter()
                .map(IntervalSet::measure)
                .fold(Rational::zero(), |a, b| a + b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, rat};
    use crate::partition::join;
    use crate::rankone::RankOneSpec;

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
    fn subshift_examples() {
        let sys = hk(8);
        let m = build_subshift(&sys, &unit_alpha(), 4, 8).unwrap();
        assert_eq!(m.measure(&[1, 1, 1]).unwrap(), MeasureValue::Infinite);
        assert_eq!(m.measure(&[2]).unwrap(), MeasureValue::Finite(int(1)));
        assert_eq!(cylinder_measure(&m, &[], &[2]).unwrap(), MeasureValue::Finite(int(1)));
        // y and Ty both in [0,1) exactly for y in [0,1/2)
        assert_eq!(cylinder_measure(&m, &[2], &[2]).unwrap(), MeasureValue::Finite(rat(1, 2)));
        assert_eq!(m.measure(&[2, 2, 2]).unwrap(), MeasureValue::zero());
        assert!(matches!(m.measure(&[2; 5]), Err(Error::WordTooLong { .. })));
        assert!(m.audit().ok());
        assert_eq!(
            cylinder_measure(&m, &[1, 2], &[2]).unwrap(),
            m.measure(&[1, 2, 2]).unwrap()
        );
    }

    #[test]
    fn factor_tables() {
        let a = Partition::new(vec![set(&[(0, 1, 1, 2)]), set(&[(1, 2, 1, 1)])]).unwrap();
        let b = unit_alpha();
        let t = FactorMapTable::from_partitions(&a, &b).unwrap();
        assert_eq!(t.map, vec![0, 1, 2, 2]);
        assert_eq!(factor_word(&t, &[1, 3, 2]).unwrap(), vec![1, 2, 2]);
        assert_eq!(factor_word(&t, &[4]), Err(Error::UnknownSymbol(4)));
        let id = FactorMapTable::identity(3);
        assert_eq!(factor_word(&id, &[3, 1, 2]).unwrap(), vec![3, 1, 2]);
        assert!(FactorMapTable::from_partitions(&b, &a).is_err());
    }

    #[test]
    fn inverse_limit_chain_and_fault_injection() {
        let sys = hk(9);
        let gamma = unit_alpha();
        let beta = join(&gamma, &Partition::new(vec![set(&[(0, 1, 1, 2)])]).unwrap());
        let alpha = join(&beta, &Partition::new(vec![set(&[(1, 4, 3, 4)])]).unwrap());
        let mut tr = InverseLimitTruncation::from_chain(&sys, &[gamma, beta, alpha], 5, 9).unwrap();
        let r = inverse_limit_check(&tr, 5).unwrap();
        assert!(r.composition_checks > 0 && r.pushforward_checks > 0);
        let t = tr.maps.get_mut(&(0, 2)).unwrap();
        let last = t.map.len() - 1;
        t.map[last] = 1;
        assert!(matches!(
            inverse_limit_check(&tr, 5),
            Err(Error::InconsistentTower { .. })
        ));
    }

    #[test]
    fn single_column_diagram() {
        let sys = hk(4);
        let seq = hk_canonical_sequence(&sys, 1).unwrap();
        let d = export_bratteli(&seq).unwrap();
        assert_eq!(d.incoming(1, 0).len(), 1);
        let seq = vec![StandardTower::new(vec![Column::from_base(
            sys.stage(4).unwrap(),
            set(&[(0, 1, 1, 8)]),
            5,
        )
        .unwrap()])];
        let d = export_bratteli(&seq).unwrap();
        assert_eq!(d.path_counts()[1][0], 5);
    }

    #[test]
    fn hk_diagram_audits() {
        let sys = hk(6);
        let seq = hk_canonical_sequence(&sys, 5).unwrap();
        let d = export_bratteli(&seq).unwrap();
        for n in 2..=5 {
            let inc = d.incoming(n, 0);
            let principal = inc.iter().filter(|&&e| d.edges[n - 1][e].source == 0).count();
            assert_eq!(principal, 2);
        }
        let counts = d.path_counts();
        for (n, level) in counts.iter().enumerate().skip(1) {
            assert_eq!(level[0], sys.stage(n).unwrap().height() as u128);
        }
        let audit = vershik_audit(&d, 4).unwrap();
        assert!(audit.injective && audit.onto_non_minimal && audit.orbits_exact);
        let top = all_paths(&d, 3).into_iter().last().unwrap();
        let max = {
            let mut p = minimal_path(&d, 3, 0);
            while let Ok(q) = vershik_step(&d, &p) {
                p = q;
            }
            p
        };
        assert_eq!(vershik_step(&d, &max), Err(Error::MaximalPath));
        assert!(top.edges.len() == 3);
    }

    #[test]
    fn non_refining_sequence_is_rejected() {
        let sys = hk(5);
        let st = sys.stage(5).unwrap();
        let a = StandardTower::new(vec![Column::from_base(st, set(&[(0, 1, 1, 2)]), 3).unwrap()]);
        let b = StandardTower::new(vec![Column::from_base(st, set(&[(1, 4, 3, 4)]), 3).unwrap()]);
        assert!(matches!(export_bratteli(&[a, b]), Err(Error::NotRefining(..))));
    }
}
