//! The bipartite matching view of a row-finite matrix: waves, impediments,
//! Podewski–Steffens obstructions and the espousal loop.
//!
//! For a matrix A the graph G_A has one M-vertex per column, one W-vertex per
//! row, and an edge (j,i) exactly where a_{i,j} ≠ 0. A loading injection of A
//! is precisely a matching of G_A covering M.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::matrix::{FiniteMatrix, LazyMatrix};
use crate::numerics::SparseVector;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatchingError {
    #[error("edge ({m},{w}) is not an edge of the graph")]
    EdgeNotInGraph { m: usize, w: usize },
    #[error("vertex {0} is not in the graph")]
    VertexNotFound(usize),
    #[error("edges are not pairwise disjoint")]
    NotAMatching,
    #[error("F is not a wave")]
    NotAWave,
    #[error("graph is obstructed")]
    Obstructed,
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
}

/// A finite bipartite graph. Vertices keep their original 1-based ids so
/// deletions (`without`) never renumber anything.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BipartiteGraph {
    adj: BTreeMap<usize, BTreeSet<usize>>,
    active_w: BTreeSet<usize>,
}

impl BipartiteGraph {
    pub fn new(m_count: usize, w_count: usize) -> Self {
        Self {
            adj: (1..=m_count).map(|m| (m, BTreeSet::new())).collect(),
            active_w: (1..=w_count).collect(),
        }
    }

    /// Graph on explicit vertex id sets.
    pub fn with_vertices(m: impl IntoIterator<Item = usize>, w: impl IntoIterator<Item = usize>) -> Self {
        Self {
            adj: m.into_iter().map(|v| (v, BTreeSet::new())).collect(),
            active_w: w.into_iter().collect(),
        }
    }

    pub fn add_edge(&mut self, m: usize, w: usize) {
        assert!(self.active_w.contains(&w), "unknown W-vertex {w}");
        self.adj
            .get_mut(&m)
            .unwrap_or_else(|| panic!("unknown M-vertex {m}"))
            .insert(w);
    }

    /// G_A: M = columns, W = rows, an edge per nonzero entry.
    pub fn from_matrix(a: &FiniteMatrix) -> Self {
        let mut g = Self::new(a.n_cols(), a.n_rows());
        for i in 1..=a.n_rows() {
            for (j, _) in a.row(i).iter() {
                g.add_edge(j, i);
            }
        }
        g
    }

    pub fn m_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.adj.keys().copied()
    }

    pub fn w_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.active_w.iter().copied()
    }

    pub fn m_count(&self) -> usize {
        self.adj.len()
    }

    pub fn w_count(&self) -> usize {
        self.active_w.len()
    }

    pub fn neighbors(&self, m: usize) -> Option<&BTreeSet<usize>> {
        self.adj.get(&m)
    }

    pub fn has_edge(&self, m: usize, w: usize) -> bool {
        self.adj.get(&m).map_or(false, |ns| ns.contains(&w))
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(|ns| ns.len()).sum()
    }

    /// W-side adjacency, computed on demand.
    pub fn w_neighbors(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut inv: BTreeMap<usize, BTreeSet<usize>> =
            self.active_w.iter().map(|&w| (w, BTreeSet::new())).collect();
        for (&m, ns) in &self.adj {
            for &w in ns {
                inv.get_mut(&w).expect("edges stay within active W").insert(m);
            }
        }
        inv
    }

    /// G − m − w: both vertices deleted together with their edges.
    pub fn without(&self, m: usize, w: usize) -> Self {
        let mut g = self.clone();
        g.adj.remove(&m);
        g.active_w.remove(&w);
        for ns in g.adj.values_mut() {
            ns.remove(&w);
        }
        g
    }
}

/// A set of pairwise disjoint M–W edges.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Matching {
    fwd: BTreeMap<usize, usize>,
    rev: BTreeMap<usize, usize>,
}

impl Matching {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(
        pairs: I,
    ) -> Result<Self, MatchingError> {
        let mut f = Self::default();
        for (m, w) in pairs {
            if f.fwd.contains_key(&m) || f.rev.contains_key(&w) {
                return Err(MatchingError::NotAMatching);
            }
            f.fwd.insert(m, w);
            f.rev.insert(w, m);
        }
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.fwd.iter().map(|(&m, &w)| (m, w))
    }

    pub fn contains_edge(&self, m: usize, w: usize) -> bool {
        self.fwd.get(&m) == Some(&w)
    }

    pub fn w_partner(&self, m: usize) -> Option<usize> {
        self.fwd.get(&m).copied()
    }

    pub fn m_partner(&self, w: usize) -> Option<usize> {
        self.rev.get(&w).copied()
    }

    /// ∪F ∩ M
    pub fn m_side(&self) -> BTreeSet<usize> {
        self.fwd.keys().copied().collect()
    }

    /// ∪F ∩ W
    pub fn w_side(&self) -> BTreeSet<usize> {
        self.rev.keys().copied().collect()
    }

    pub fn covers_m(&self, m: usize) -> bool {
        self.fwd.contains_key(&m)
    }

    fn insert(&mut self, m: usize, w: usize) {
        let old_w = self.fwd.insert(m, w);
        if let Some(old_w) = old_w {
            self.rev.remove(&old_w);
        }
        let old_m = self.rev.insert(w, m);
        if let Some(old_m) = old_m {
            if old_m != m {
                self.fwd.remove(&old_m);
            }
        }
    }

    /// True iff every edge of the matching exists in `g`.
    pub fn is_matching_in(&self, g: &BipartiteGraph) -> bool {
        self.pairs().all(|(m, w)| g.has_edge(m, w))
    }
}

/// Maximum-cardinality matching by augmenting paths, deterministic: M-vertices
/// and neighbor candidates are tried in ascending order.
pub fn max_matching(g: &BipartiteGraph) -> Matching {
    fn augment(
        g: &BipartiteGraph,
        m: usize,
        rev: &mut BTreeMap<usize, usize>,
        visited: &mut BTreeSet<usize>,
    ) -> bool {
        for &w in g.neighbors(m).into_iter().flatten() {
            if !visited.insert(w) {
                continue;
            }
            match rev.get(&w).copied() {
                None => {
                    rev.insert(w, m);
                    return true;
                }
                Some(other) => {
                    if augment(g, other, rev, visited) {
                        rev.insert(w, m);
                        return true;
                    }
                }
            }
        }
        false
    }

    let mut rev: BTreeMap<usize, usize> = BTreeMap::new();
    for m in g.m_vertices().collect::<Vec<_>>() {
        let mut visited = BTreeSet::new();
        augment(g, m, &mut rev, &mut visited);
    }
    Matching::from_pairs(rev.into_iter().map(|(w, m)| (m, w)))
        .expect("augmenting paths keep edges disjoint")
}

/// True iff a maximum matching covers every M-vertex.
pub fn is_espousable_finite(g: &BipartiteGraph) -> bool {
    max_matching(g).len() == g.m_count()
}

/// Wave test: N(∪F∩M) = ∪F∩W. Errors when F is not a matching in G.
pub fn is_wave(g: &BipartiteGraph, f: &Matching) -> Result<bool, MatchingError> {
    for (m, w) in f.pairs() {
        if !g.has_edge(m, w) {
            return Err(MatchingError::EdgeNotInGraph { m, w });
        }
    }
    let mut reached = BTreeSet::new();
    for m in f.m_side() {
        reached.extend(g.neighbors(m).into_iter().flatten().copied());
    }
    Ok(reached == f.w_side())
}

/// Criticality by definition: every matching saturating ∪F∩M covers exactly
/// ∪F∩W. Decided by backtracking enumeration of all saturating matchings.
pub fn critical_wave_enumeration(g: &BipartiteGraph, f: &Matching) -> bool {
    fn search(
        g: &BipartiteGraph,
        ms: &[usize],
        idx: usize,
        used_w: &mut BTreeSet<usize>,
        target_w: &BTreeSet<usize>,
    ) -> bool {
        if idx == ms.len() {
            // A saturating matching has |ms| = |target_w| edges, so covering
            // within target_w means covering it exactly.
            return used_w.iter().all(|w| target_w.contains(w));
        }
        let m = ms[idx];
        for &w in g.neighbors(m).into_iter().flatten() {
            if used_w.contains(&w) {
                continue;
            }
            used_w.insert(w);
            let ok = search(g, ms, idx + 1, used_w, target_w);
            used_w.remove(&w);
            if !ok {
                return false;
            }
        }
        true
    }

    let ms: Vec<usize> = f.m_side().into_iter().collect();
    let target = f.w_side();
    let mut used = BTreeSet::new();
    search(g, &ms, 0, &mut used, &target)
}

/// Criticality by the alternating-path criterion: on a finite graph the wave
/// is critical iff no F-alternating path from ∪F∩M, starting with a non-F
/// edge, reaches a W-vertex outside ∪F∩W.
pub fn critical_wave_alternating(g: &BipartiteGraph, f: &Matching) -> bool {
    let target_w = f.w_side();
    let mut queue: VecDeque<usize> = f.m_side().into_iter().collect();
    let mut seen_m: BTreeSet<usize> = queue.iter().copied().collect();
    let mut seen_w: BTreeSet<usize> = BTreeSet::new();
    while let Some(m) = queue.pop_front() {
        for &w in g.neighbors(m).into_iter().flatten() {
            if f.contains_edge(m, w) || !seen_w.insert(w) {
                continue;
            }
            if !target_w.contains(&w) {
                return false;
            }
            if let Some(next_m) = f.m_partner(w) {
                if seen_m.insert(next_m) {
                    queue.push_back(next_m);
                }
            }
        }
    }
    true
}

/// Guard below which the enumeration route is cheap enough to cross-check.
const CRITICALITY_CROSS_CHECK_LIMIT: usize = 8;

/// Criticality of a wave, decided by the alternating-path criterion and
/// cross-checked against exhaustive enumeration on small instances.
pub fn is_critical_wave_finite(g: &BipartiteGraph, f: &Matching) -> Result<bool, MatchingError> {
    if !is_wave(g, f)? {
        return Err(MatchingError::NotAWave);
    }
    let alternating = critical_wave_alternating(g, f);
    if f.len() <= CRITICALITY_CROSS_CHECK_LIMIT {
        let enumerated = critical_wave_enumeration(g, f);
        if enumerated != alternating {
            return Err(MatchingError::Inconsistency(format!(
                "criticality methods disagree: enumeration={enumerated}, alternating={alternating}"
            )));
        }
    }
    Ok(alternating)
}

/// A vertex on an alternating path; paths start on the M side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathVertex {
    M(usize),
    W(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RaySearch {
    /// A simple F-alternating path of at least the requested length, starting
    /// with a non-F edge. Length is counted in edges.
    FoundPath(Vec<PathVertex>),
    NoneWithinBound,
}

/// Searches a finite graph for a simple F-alternating path of length >= bound
/// starting at `start` with a non-F edge.
pub fn alternating_path_finite(
    g: &BipartiteGraph,
    f: &Matching,
    start: usize,
    bound: usize,
) -> RaySearch {
    assert!(bound >= 1, "bound must be at least 1");
    fn dfs(
        g: &BipartiteGraph,
        f: &Matching,
        m: usize,
        bound: usize,
        path: &mut Vec<PathVertex>,
        seen_m: &mut BTreeSet<usize>,
        seen_w: &mut BTreeSet<usize>,
    ) -> bool {
        for &w in g.neighbors(m).into_iter().flatten() {
            if f.contains_edge(m, w) || seen_w.contains(&w) {
                continue;
            }
            seen_w.insert(w);
            path.push(PathVertex::W(w));
            if path.len() - 1 >= bound {
                return true;
            }
            if let Some(next_m) = f.m_partner(w) {
                if !seen_m.contains(&next_m) {
                    seen_m.insert(next_m);
                    path.push(PathVertex::M(next_m));
                    if path.len() - 1 >= bound
                        || dfs(g, f, next_m, bound, path, seen_m, seen_w)
                    {
                        return true;
                    }
                    path.pop();
                    seen_m.remove(&next_m);
                }
            }
            path.pop();
            seen_w.remove(&w);
        }
        false
    }

    let mut path = vec![PathVertex::M(start)];
    let mut seen_m = BTreeSet::from([start]);
    let mut seen_w = BTreeSet::new();
    if dfs(g, f, start, bound, &mut path, &mut seen_m, &mut seen_w) {
        RaySearch::FoundPath(path)
    } else {
        RaySearch::NoneWithinBound
    }
}

/// Replays a path and checks simplicity and the alternation rule (non-F from
/// M, F from W). Used by tests to validate search output edge by edge.
pub fn verify_alternating_path(
    g: &BipartiteGraph,
    f: &Matching,
    path: &[PathVertex],
) -> bool {
    if path.is_empty() {
        return false;
    }
    let mut seen = BTreeSet::new();
    for (idx, v) in path.iter().enumerate() {
        let expect_m = idx % 2 == 0;
        match (expect_m, v) {
            (true, PathVertex::M(m)) => {
                if !seen.insert((0usize, *m)) {
                    return false;
                }
            }
            (false, PathVertex::W(w)) => {
                if !seen.insert((1usize, *w)) {
                    return false;
                }
            }
            _ => return false,
        }
    }
    for pair in path.windows(2) {
        match (pair[0], pair[1]) {
            (PathVertex::M(m), PathVertex::W(w)) => {
                if !g.has_edge(m, w) || f.contains_edge(m, w) {
                    return false;
                }
            }
            (PathVertex::W(w), PathVertex::M(m)) => {
                if !f.contains_edge(m, w) {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}

/// A wave F together with an M-vertex a ∉ ∪F whose whole neighborhood is
/// covered by F.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Impediment {
    pub wave: Matching,
    pub vertex: usize,
}

impl Impediment {
    pub fn verify(&self, g: &BipartiteGraph) -> Result<bool, MatchingError> {
        if !is_wave(g, &self.wave)? {
            return Ok(false);
        }
        if self.wave.covers_m(self.vertex) {
            return Ok(false);
        }
        let ns = g
            .neighbors(self.vertex)
            .ok_or(MatchingError::VertexNotFound(self.vertex))?;
        let covered = self.wave.w_side();
        Ok(ns.iter().all(|w| covered.contains(w)))
    }
}

/// Searches for an impediment. For each candidate vertex `a` (ascending) the
/// wave is grown by closure: every W-vertex that must be covered gets the
/// smallest available partner, and that partner's whole neighborhood is
/// enqueued in turn. If the greedy closure fails everywhere, an uncovered
/// vertex of a maximum matching yields an impediment via alternating
/// reachability.
pub fn find_impediment(g: &BipartiteGraph) -> Option<Impediment> {
    let winv = g.w_neighbors();
    'candidates: for a in g.m_vertices().collect::<Vec<_>>() {
        let mut queue: VecDeque<usize> =
            g.neighbors(a).into_iter().flatten().copied().collect();
        let mut covered: BTreeSet<usize> = BTreeSet::new();
        let mut used: BTreeSet<usize> = BTreeSet::from([a]);
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        while let Some(w) = queue.pop_front() {
            if covered.contains(&w) {
                continue;
            }
            let partner = winv
                .get(&w)
                .and_then(|ms| ms.iter().find(|m| !used.contains(m)).copied());
            let Some(partner) = partner else {
                continue 'candidates;
            };
            covered.insert(w);
            used.insert(partner);
            pairs.push((partner, w));
            for &w2 in g.neighbors(partner).into_iter().flatten() {
                if !covered.contains(&w2) {
                    queue.push_back(w2);
                }
            }
        }
        let wave = Matching::from_pairs(pairs).expect("closure pairs are disjoint");
        let imp = Impediment { wave, vertex: a };
        if imp.verify(g).unwrap_or(false) {
            return Some(imp);
        }
    }
    // Fallback: a deficiency construction from a maximum matching.
    let k = max_matching(g);
    let a = g.m_vertices().find(|&m| !k.covers_m(m))?;
    let reach_w = alternating_reach_w(g, &k, a);
    let pairs: Vec<(usize, usize)> = reach_w
        .iter()
        .map(|&w| (k.m_partner(w).expect("reached W-vertices are matched"), w))
        .collect();
    let wave = Matching::from_pairs(pairs).expect("restriction of a matching");
    let imp = Impediment { wave, vertex: a };
    debug_assert!(imp.verify(g).unwrap_or(false));
    Some(imp)
}

/// W-vertices reachable from `a` by K-alternating paths (non-K from M, K
/// from W).
fn alternating_reach_w(g: &BipartiteGraph, k: &Matching, a: usize) -> BTreeSet<usize> {
    let mut queue = VecDeque::from([a]);
    let mut seen_m = BTreeSet::from([a]);
    let mut seen_w = BTreeSet::new();
    while let Some(m) = queue.pop_front() {
        for &w in g.neighbors(m).into_iter().flatten() {
            if k.contains_edge(m, w) || !seen_w.insert(w) {
                continue;
            }
            if let Some(next_m) = k.m_partner(w) {
                if seen_m.insert(next_m) {
                    queue.push_back(next_m);
                }
            }
        }
    }
    seen_w
}

/// How the criticality of an obstruction's wave was established.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CriticalityEvidence {
    /// Finite graph: the alternating criterion held; `enumeration` records
    /// the exhaustive cross-check where the wave was small enough to run it.
    Finite { enumeration: Option<bool> },
    /// Lazy graph: no alternating extension within the explored region. Not a
    /// proof, the infinite graph may still extend the path.
    Partial { explored_rows: usize },
}

/// An impediment whose wave is critical.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObstructionCertificate {
    pub impediment: Impediment,
    pub evidence: CriticalityEvidence,
}

/// Guard for running the exhaustive criticality cross-check on certificates.
const OBSTRUCTION_ENUMERATION_LIMIT: usize = 7;

/// Finds a PS-obstruction of a finite graph, or None when the graph is
/// unobstructed.
pub fn find_ps_obstruction_finite(
    g: &BipartiteGraph,
) -> Result<Option<ObstructionCertificate>, MatchingError> {
    let Some(impediment) = find_impediment(g) else {
        return Ok(None);
    };
    if !critical_wave_alternating(g, &impediment.wave) {
        // Finite waves are always critical; reaching this is a logic error.
        return Err(MatchingError::Inconsistency(
            "finite wave failed the alternating criticality criterion".into(),
        ));
    }
    let enumeration = if impediment.wave.len() <= OBSTRUCTION_ENUMERATION_LIMIT {
        let ok = critical_wave_enumeration(g, &impediment.wave);
        if !ok {
            return Err(MatchingError::Inconsistency(
                "criticality enumeration contradicts the alternating criterion".into(),
            ));
        }
        Some(ok)
    } else {
        None
    };
    Ok(Some(ObstructionCertificate {
        impediment,
        evidence: CriticalityEvidence::Finite { enumeration },
    }))
}

/// The PS step: a neighbor w of m whose removal together with m leaves the
/// graph unobstructed. Smallest such w. Errors when the graph is already
/// obstructed.
pub fn ps_step(g: &BipartiteGraph, m: usize) -> Result<usize, MatchingError> {
    if find_ps_obstruction_finite(g)?.is_some() {
        return Err(MatchingError::Obstructed);
    }
    let ns = g.neighbors(m).ok_or(MatchingError::VertexNotFound(m))?;
    for &w in ns {
        if find_ps_obstruction_finite(&g.without(m, w))?.is_none() {
            return Ok(w);
        }
    }
    Err(MatchingError::Inconsistency(
        "unobstructed graph admits no PS step, contradicting the step lemma".into(),
    ))
}

/// A Hall violator: T ⊆ M with |N(T)| < |T|, via the deficiency construction
/// from a maximum matching. None iff the graph is espousable.
pub fn hall_violator(g: &BipartiteGraph) -> Option<BTreeSet<usize>> {
    let k = max_matching(g);
    let a = g.m_vertices().find(|&m| !k.covers_m(m))?;
    let mut queue = VecDeque::from([a]);
    let mut seen_m = BTreeSet::from([a]);
    let mut seen_w: BTreeSet<usize> = BTreeSet::new();
    while let Some(m) = queue.pop_front() {
        for &w in g.neighbors(m).into_iter().flatten() {
            if !seen_w.insert(w) {
                continue;
            }
            if let Some(next_m) = k.m_partner(w) {
                if seen_m.insert(next_m) {
                    queue.push_back(next_m);
                }
            }
        }
    }
    // N(seen_m) = seen_w and |seen_w| = |seen_m| - 1.
    debug_assert_eq!(seen_w.len() + 1, seen_m.len());
    Some(seen_m)
}

/// A lazily streamed bipartite graph G_A: M-vertices are the columns
/// discovered in row supports, W-vertex i is row i, and exploring the first n
/// rows yields a finite subgraph. Rows have finite support, so every W-side
/// neighborhood is finite.
#[derive(Clone)]
pub struct LazyGraph {
    matrix: LazyMatrix,
}

impl LazyGraph {
    pub fn from_matrix(matrix: LazyMatrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &LazyMatrix {
        &self.matrix
    }

    /// The finite subgraph on the first `n_rows` rows and every column they
    /// mention. Stops early if the stream ends.
    pub fn explore(&self, n_rows: usize) -> BipartiteGraph {
        let mut rows = Vec::new();
        for i in 1..=n_rows {
            match self.matrix.row(i) {
                Some(r) => rows.push(r),
                None => break,
            }
        }
        let cols: BTreeSet<usize> = rows.iter().flat_map(|r| r.support()).collect();
        let mut g = BipartiteGraph::with_vertices(cols, 1..=rows.len());
        for (idx, row) in rows.iter().enumerate() {
            for (j, _) in row.iter() {
                g.add_edge(j, idx + 1);
            }
        }
        g
    }
}

/// Lazy alternating-ray search: explores enough rows to host a path of the
/// requested length, then searches the finite view.
pub fn has_alternating_ray(
    g: &LazyGraph,
    f: &Matching,
    start: usize,
    bound: usize,
) -> RaySearch {
    let f_rows = f.w_side().into_iter().next_back().unwrap_or(0);
    let explored = g.explore(f_rows + 2 * bound + 8);
    alternating_path_finite(&explored, f, start, bound)
}

/// Impediment search over the explored prefix of a lazy graph.
pub fn find_impediment_lazy(g: &LazyGraph, rows_bound: usize) -> Option<Impediment> {
    find_impediment(&g.explore(rows_bound))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EspousalOutcome {
    Matched(Matching),
    Failure {
        stage: usize,
        reason: String,
        matched: Matching,
    },
}

/// Espousal loop for lazy graphs with countable W-side neighborhoods.
///
/// Fair schedule: after matching m with row w, every column of row w is
/// enqueued before any fresh block starts. Among the candidate rows for a
/// column the smallest one that is not the unique remaining neighbor of some
/// other unmatched column is preferred. `budget` bounds the number of rows
/// ever explored; exceeding it, or exhausting a column's neighbors, is a
/// failure at that stage.
pub fn espouse_lazy(g: &LazyGraph, k: usize, budget: usize) -> EspousalOutcome {
    let mut rows: Vec<SparseVector> = Vec::new();
    let mut inv: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut stream_ended = false;

    let explore_to = |rows: &mut Vec<SparseVector>,
                          inv: &mut BTreeMap<usize, BTreeSet<usize>>,
                          stream_ended: &mut bool,
                          target: usize| {
        while rows.len() < target && !*stream_ended {
            match g.matrix().row(rows.len() + 1) {
                Some(row) => {
                    for (j, _) in row.iter() {
                        inv.entry(j).or_default().insert(rows.len() + 1);
                    }
                    rows.push(row);
                }
                None => *stream_ended = true,
            }
        }
    };

    explore_to(&mut rows, &mut inv, &mut stream_ended, budget.min(32).max(k));

    let mut matched = Matching::empty();
    let mut scheduled: BTreeSet<usize> = BTreeSet::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut stage = 1;

    while matched.len() < k {
        let m = match queue.pop_front() {
            Some(m) => m,
            None => {
                // Fresh block: the smallest discovered, unscheduled column.
                let mut fresh = inv.keys().find(|j| !scheduled.contains(j)).copied();
                while fresh.is_none() && !stream_ended && rows.len() < budget {
                    let target = (rows.len() * 2).clamp(rows.len() + 1, budget);
                    explore_to(&mut rows, &mut inv, &mut stream_ended, target);
                    fresh = inv.keys().find(|j| !scheduled.contains(j)).copied();
                }
                match fresh {
                    Some(j) => {
                        scheduled.insert(j);
                        j
                    }
                    None if stream_ended => return EspousalOutcome::Matched(matched),
                    None => {
                        return EspousalOutcome::Failure {
                            stage,
                            reason: format!(
                                "row budget {budget} exhausted before a fresh column appeared"
                            ),
                            matched,
                        }
                    }
                }
            }
        };
        if matched.covers_m(m) {
            continue;
        }
        let available = |inv: &BTreeMap<usize, BTreeSet<usize>>, col: usize| -> Vec<usize> {
            inv.get(&col)
                .into_iter()
                .flatten()
                .copied()
                .filter(|&w| matched.m_partner(w).is_none())
                .collect()
        };
        let mut candidates = available(&inv, m);
        while candidates.is_empty() && !stream_ended && rows.len() < budget {
            let target = (rows.len() * 2).clamp(rows.len() + 1, budget);
            explore_to(&mut rows, &mut inv, &mut stream_ended, target);
            candidates = available(&inv, m);
        }
        if candidates.is_empty() {
            return EspousalOutcome::Failure {
                stage,
                reason: format!(
                    "column {m} has no unmatched neighbor among the first {} rows (collision)",
                    rows.len()
                ),
                matched,
            };
        }
        // Avoid rows that are the unique remaining hope of another column.
        let forced_elsewhere = |w: usize| {
            inv.iter().any(|(&other, _)| {
                other != m && !matched.covers_m(other) && available(&inv, other) == vec![w]
            })
        };
        let pick = candidates
            .iter()
            .copied()
            .find(|&w| !forced_elsewhere(w))
            .unwrap_or(candidates[0]);
        matched.insert(m, pick);
        scheduled.insert(m);
        for (j, _) in rows[pick - 1].iter() {
            if !scheduled.contains(&j) && !matched.covers_m(j) {
                scheduled.insert(j);
                queue.push_back(j);
            }
        }
        stage += 1;
    }
    EspousalOutcome::Matched(matched)
}

/// DOT rendering of a bipartite graph, matching edges bold. Columns are named
/// `c<j>`, rows `r<i>`.
pub fn to_dot(g: &BipartiteGraph, matching: Option<&Matching>) -> String {
    let mut out = String::from("graph G {\n  rankdir=LR;\n");
    for m in g.m_vertices() {
        let _ = writeln!(out, "  c{m} [shape=circle];");
    }
    for w in g.w_vertices() {
        let _ = writeln!(out, "  r{w} [shape=box];");
    }
    for m in g.m_vertices() {
        for &w in g.neighbors(m).into_iter().flatten() {
            let bold = matching.map_or(false, |f| f.contains_edge(m, w));
            if bold {
                let _ = writeln!(out, "  c{m} -- r{w} [style=bold];");
            } else {
                let _ = writeln!(out, "  c{m} -- r{w};");
            }
        }
    }
    out.push_str("}\n");
    out
}
