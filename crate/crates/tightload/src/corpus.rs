//! Named example families, seeded random generators and brute-force oracles.
//!
//! The oracles decide loadedness, espousability and wave criticality by
//! exhaustive search at small sizes; everything the faster routines claim is
//! validated against them. Size guards are hard errors, never silent
//! truncations.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use thiserror::Error;

use crate::loader::Injection;
use crate::matching::{BipartiteGraph, Matching};
use crate::matrix::{FiniteMatrix, LazyMatrix};
use crate::numerics::{rat, Rational, SparseVector};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("oracle size guard exceeded: {what} is {got}, limit {limit}")]
    GuardExceeded {
        what: &'static str,
        got: usize,
        limit: usize,
    },
    #[error("unknown family {0:?}")]
    UnknownFamily(String),
    #[error("family {family} needs parameter {param}")]
    MissingParam { family: String, param: &'static str },
}

/// Splitmix64. Fixed algorithm so corpora are identical across runs and
/// implementations: state += 0x9E3779B97F4A7C15, then two xor-shift-multiply
/// rounds with 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB.
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform-ish value in 0..n (modulo reduction; fine for test corpora).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        self.next_u64() % n
    }

    pub fn chance(&mut self, percent: u64) -> bool {
        self.below(100) < percent
    }

    /// Numerator in [-9,9] \ {0}, denominator in [1,9].
    pub fn small_rational(&mut self) -> Rational {
        let mut num = self.below(19) as i64 - 9;
        if num == 0 {
            num = 1;
        }
        let den = self.below(9) as i64 + 1;
        rat(num, den)
    }
}

/// Example 1.3: row i is {1:1, i+1:-1}. Column-independent, not tight, not
/// loaded.
pub fn family_donjuan() -> LazyMatrix {
    LazyMatrix::from_fn(None, |i| {
        let partner = i.checked_add(1)?;
        Some(SparseVector::from_entries([
            (1, rat(1, 1)),
            (partner, rat(-1, 1)),
        ]))
    })
}

/// The final example of the matching section: equation 2k−1 is
/// x_{2k-1}+x_{2k}+x_{2k+1} = 0, equation 2k is x_{2k}+x_{2k+1} = 0. The
/// infinite system is tight although its graph has an impediment at x_1.
pub fn family_impediment_chain() -> LazyMatrix {
    LazyMatrix::from_fn(None, |i| {
        let row = if i % 2 == 1 {
            SparseVector::from_entries([
                (i, rat(1, 1)),
                (i + 1, rat(1, 1)),
                (i + 2, rat(1, 1)),
            ])
        } else {
            SparseVector::from_entries([(i, rat(1, 1)), (i + 1, rat(1, 1))])
        };
        Some(row)
    })
}

/// The infinite identity: row i is e_i.
pub fn family_identity_lazy() -> LazyMatrix {
    LazyMatrix::from_fn(None, |i| Some(SparseVector::unit(i)))
}

/// A tight (n+extra)×n matrix: seeded invertible upper-triangular base,
/// mixed by legal elementary row operations, then `extra` rows appended as
/// combinations of existing rows. Span is preserved throughout, so the
/// result is tight by construction.
pub fn family_random_tight(seed: u64, n: usize, extra: usize) -> FiniteMatrix {
    assert!(n >= 1);
    let mut rng = SplitMix64::new(seed ^ 0x7467_7437 /* "tgt7" */);
    let mut rows: Vec<SparseVector> = Vec::with_capacity(n + extra);
    for i in 1..=n {
        let mut row = SparseVector::zero();
        row.set(i, rng.small_rational());
        for j in (i + 1)..=n {
            if rng.chance(40) {
                row.set(j, rng.small_rational());
            }
        }
        rows.push(row);
    }
    // Mix with row_i += c * row_k, i != k: invertible, span-preserving.
    for _ in 0..2 * n {
        let i = rng.below(n as u64) as usize;
        let mut k = rng.below(n as u64) as usize;
        if i == k {
            k = (k + 1) % n;
        }
        if n == 1 {
            continue;
        }
        let c = rng.small_rational();
        let mixed = rows[i].add_scaled(&c, &rows[k]);
        rows[i] = mixed;
    }
    for _ in 0..extra {
        let parts = 1 + rng.below(2) as usize;
        let mut row = SparseVector::zero();
        for _ in 0..parts {
            let k = rng.below(n as u64) as usize;
            let c = rng.small_rational();
            row = row.add_scaled(&c, &rows[k]);
        }
        rows.push(row);
    }
    FiniteMatrix::new(n + extra, n, rows).expect("generated supports stay within 1..=n")
}

/// Random sparse matrix with the given per-entry density in percent. No
/// tightness guarantee.
pub fn family_random_sparse(
    seed: u64,
    n_rows: usize,
    n_cols: usize,
    density_percent: u64,
) -> FiniteMatrix {
    let mut rng = SplitMix64::new(seed ^ 0x7370_7273 /* "sprs" */);
    let rows = (0..n_rows)
        .map(|_| {
            let mut row = SparseVector::zero();
            for j in 1..=n_cols {
                if rng.chance(density_percent) {
                    row.set(j, rng.small_rational());
                }
            }
            row
        })
        .collect();
    FiniteMatrix::new(n_rows, n_cols, rows).expect("generated supports stay within range")
}

/// Random bipartite graph on M = 1..=m, W = 1..=w with the given edge
/// density in percent.
pub fn random_bipartite_graph(seed: u64, m: usize, w: usize, density_percent: u64) -> BipartiteGraph {
    let mut rng = SplitMix64::new(seed ^ 0x6772_6668 /* "grph" */);
    let mut g = BipartiteGraph::new(m, w);
    for a in 1..=m {
        for b in 1..=w {
            if rng.chance(density_percent) {
                g.add_edge(a, b);
            }
        }
    }
    g
}

/// The graph on M = 1..=m, W = 1..=w whose edge (a,b) is present iff bit
/// (a-1)*w + (b-1) of `mask` is set. Enumerating masks 0..2^(m*w) walks every
/// bipartite graph of that shape.
pub fn bipartite_graph_from_mask(m: usize, w: usize, mask: u64) -> BipartiteGraph {
    assert!(m * w <= 63, "mask enumeration limited to 63 edges");
    let mut g = BipartiteGraph::new(m, w);
    for a in 1..=m {
        for b in 1..=w {
            if mask >> ((a - 1) * w + (b - 1)) & 1 == 1 {
                g.add_edge(a, b);
            }
        }
    }
    g
}

const LOADED_GUARD: usize = 8;

/// Exhaustive loadedness decision: a loading injection iff one exists.
/// Backtracking over columns, candidate rows ascending.
pub fn oracle_loaded(a: &FiniteMatrix) -> Result<Option<Injection>, CorpusError> {
    if a.n_cols() > LOADED_GUARD {
        return Err(CorpusError::GuardExceeded {
            what: "oracle_loaded n_cols",
            got: a.n_cols(),
            limit: LOADED_GUARD,
        });
    }
    fn assign(
        a: &FiniteMatrix,
        col: usize,
        used: &mut BTreeSet<usize>,
        picked: &mut Vec<(usize, usize)>,
    ) -> bool {
        if col > a.n_cols() {
            return true;
        }
        for i in 1..=a.n_rows() {
            if used.contains(&i) || a.entry(i, col).is_zero() {
                continue;
            }
            used.insert(i);
            picked.push((col, i));
            if assign(a, col + 1, used, picked) {
                return true;
            }
            picked.pop();
            used.remove(&i);
        }
        false
    }
    let mut used = BTreeSet::new();
    let mut picked = Vec::new();
    Ok(assign(a, 1, &mut used, &mut picked).then(|| Injection::from_pairs(picked)))
}

const ESPOUSE_GUARD: usize = 8;

/// Exhaustive espousability: some matching covering M. Independent of the
/// augmenting-path implementation it cross-checks.
pub fn oracle_espousable(g: &BipartiteGraph) -> Result<bool, CorpusError> {
    if g.m_count() > ESPOUSE_GUARD {
        return Err(CorpusError::GuardExceeded {
            what: "oracle_espousable |M|",
            got: g.m_count(),
            limit: ESPOUSE_GUARD,
        });
    }
    fn cover(g: &BipartiteGraph, ms: &[usize], idx: usize, used: &mut BTreeSet<usize>) -> bool {
        if idx == ms.len() {
            return true;
        }
        for &w in g.neighbors(ms[idx]).into_iter().flatten() {
            if used.contains(&w) {
                continue;
            }
            used.insert(w);
            if cover(g, ms, idx + 1, used) {
                return true;
            }
            used.remove(&w);
        }
        false
    }
    let ms: Vec<usize> = g.m_vertices().collect();
    let mut used = BTreeSet::new();
    Ok(cover(g, &ms, 0, &mut used))
}

const CRITICAL_GUARD: usize = 7;

/// Exhaustive criticality: enumerates every matching saturating ∪F∩M and
/// checks that each covers exactly ∪F∩W.
pub fn oracle_critical_wave(g: &BipartiteGraph, f: &Matching) -> Result<bool, CorpusError> {
    let ms: Vec<usize> = f.m_side().into_iter().collect();
    if ms.len() > CRITICAL_GUARD {
        return Err(CorpusError::GuardExceeded {
            what: "oracle_critical_wave |F∩M|",
            got: ms.len(),
            limit: CRITICAL_GUARD,
        });
    }
    let target = f.w_side();
    // Collect all saturating matchings, then inspect the covered W-sets.
    let mut all: Vec<BTreeSet<usize>> = Vec::new();
    fn collect(
        g: &BipartiteGraph,
        ms: &[usize],
        idx: usize,
        used: &mut BTreeSet<usize>,
        all: &mut Vec<BTreeSet<usize>>,
    ) {
        if idx == ms.len() {
            all.push(used.clone());
            return;
        }
        for &w in g.neighbors(ms[idx]).into_iter().flatten() {
            if used.contains(&w) {
                continue;
            }
            used.insert(w);
            collect(g, ms, idx + 1, used, all);
            used.remove(&w);
        }
    }
    let mut used = BTreeSet::new();
    collect(g, &ms, 0, &mut used, &mut all);
    Ok(all.iter().all(|covered| *covered == target))
}

/// How a named family instantiates.
pub enum FamilyInstance {
    Finite(FiniteMatrix),
    Lazy(LazyMatrix),
}

/// A family addressed by name with named integer parameters. Instantiation
/// is deterministic in (name, params).
pub struct FamilySpec {
    pub name: String,
    pub params: BTreeMap<String, u64>,
}

impl FamilySpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: u64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn need(&self, key: &'static str) -> Result<u64, CorpusError> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| CorpusError::MissingParam {
                family: self.name.clone(),
                param: key,
            })
    }

    pub fn instantiate(&self) -> Result<FamilyInstance, CorpusError> {
        match self.name.as_str() {
            "donjuan" => Ok(FamilyInstance::Lazy(family_donjuan())),
            "impediment-chain" => Ok(FamilyInstance::Lazy(family_impediment_chain())),
            "identity" => Ok(FamilyInstance::Lazy(family_identity_lazy())),
            "random-tight" => {
                let seed = self.params.get("seed").copied().unwrap_or(0);
                let n = self.need("n")? as usize;
                let extra = self.params.get("extra").copied().unwrap_or(0) as usize;
                Ok(FamilyInstance::Finite(family_random_tight(seed, n, extra)))
            }
            "random-sparse" => {
                let seed = self.params.get("seed").copied().unwrap_or(0);
                let rows = self.need("rows")? as usize;
                let cols = self.need("cols")? as usize;
                let density = self.params.get("density").copied().unwrap_or(50);
                Ok(FamilyInstance::Finite(family_random_sparse(
                    seed, rows, cols, density,
                )))
            }
            other => Err(CorpusError::UnknownFamily(other.to_string())),
        }
    }
}

/// Lazy family lookup for `lazy:NAME` matrix headers.
pub fn lazy_family(name: &str) -> Result<LazyMatrix, CorpusError> {
    match FamilySpec::new(name).instantiate()? {
        FamilyInstance::Lazy(m) => Ok(m),
        FamilyInstance::Finite(_) => Err(CorpusError::UnknownFamily(format!(
            "{name} is not a lazy family"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::is_espousable_finite;
    use crate::matrix::Tightness;
    use crate::numerics::{rat_int, AllOnes};

    #[test]
    fn donjuan_rows_match_the_definition() {
        let dj = family_donjuan();
        assert_eq!(
            dj.row(1).unwrap(),
            SparseVector::from_entries([(1, rat_int(1)), (2, rat_int(-1))])
        );
        for i in 1..=20 {
            assert!(dj.row(i).unwrap().dot(&AllOnes).unwrap().is_zero());
        }
        let truncation = dj.prefix(3, 4).unwrap();
        assert_eq!(oracle_loaded(&truncation).unwrap(), None);
    }

    #[test]
    fn impediment_chain_rows_match_the_definition() {
        let chain = family_impediment_chain();
        assert_eq!(chain.row(1).unwrap(), SparseVector::from_ints(&[1, 1, 1]));
        assert_eq!(
            chain.row(2).unwrap(),
            SparseVector::from_entries([(2, rat_int(1)), (3, rat_int(1))])
        );

        let prefix = chain.prefix(2, 3).unwrap();
        let c = prefix.express_unit_vector(1).unwrap();
        assert_eq!(c.coeffs, SparseVector::from_ints(&[1, -1]));

        // 2n-row truncations have the one-dimensional kernel x_{2n} = 1,
        // x_{2n+1} = -1.
        for n in 1..=4 {
            let t = chain.prefix(2 * n, 2 * n + 1).unwrap();
            match t.is_tight() {
                Tightness::NotTight(w) => {
                    assert!(w.verify(&t));
                    let expected = SparseVector::from_entries([
                        (2 * n, rat_int(1)),
                        (2 * n + 1, rat_int(-1)),
                    ]);
                    // Basis is one-dimensional and proportional to expected.
                    let basis = t.kernel_basis();
                    assert_eq!(basis.len(), 1);
                    let v = &basis[0];
                    let scale = v.coeff(2 * n);
                    assert!(!scale.is_zero());
                    assert_eq!(v, &expected.scale(&scale));
                }
                Tightness::Tight => panic!("even truncations are not tight"),
            }
        }
    }

    #[test]
    fn random_tight_is_tight_and_deterministic() {
        for seed in 0..10 {
            for (n, extra) in [(1, 0), (3, 0), (4, 2), (6, 3)] {
                let a = family_random_tight(seed, n, extra);
                assert_eq!(a.n_rows(), n + extra);
                assert_eq!(a.n_cols(), n);
                assert!(a.is_tight().is_tight(), "seed {seed}, n {n}, extra {extra}");
                assert_eq!(a, family_random_tight(seed, n, extra));
            }
        }
    }

    #[test]
    fn one_by_one_random_tight_is_loaded() {
        let a = family_random_tight(7, 1, 0);
        assert!(!a.entry(1, 1).is_zero());
        let phi = oracle_loaded(&a).unwrap().unwrap();
        assert_eq!(phi.get(1), Some(1));
    }

    #[test]
    fn random_sparse_edge_cases() {
        let empty = family_random_sparse(1, 3, 2, 0);
        assert!(empty.rows().iter().all(|r| r.is_zero()));
        match empty.is_tight() {
            Tightness::NotTight(w) => assert_eq!(w.x, SparseVector::unit(1)),
            Tightness::Tight => panic!("matrix with no entries cannot be tight"),
        }

        let full = family_random_sparse(1, 4, 4, 100);
        assert!(full
            .rows()
            .iter()
            .all(|r| r.support_size() == 4));
        assert_eq!(full, family_random_sparse(1, 4, 4, 100));
    }

    #[test]
    fn oracle_loaded_examples() {
        let id = FiniteMatrix::identity(2);
        assert_eq!(
            oracle_loaded(&id).unwrap(),
            Some(Injection::from_pairs([(1, 1), (2, 2)]))
        );

        let a = FiniteMatrix::from_ints(&[&[0, 1], &[1, 1]]);
        assert_eq!(
            oracle_loaded(&a).unwrap(),
            Some(Injection::from_pairs([(1, 2), (2, 1)]))
        );

        let wide = family_random_sparse(3, 2, 9, 50);
        assert!(matches!(
            oracle_loaded(&wide),
            Err(CorpusError::GuardExceeded { .. })
        ));
    }

    #[test]
    fn oracle_espousable_examples() {
        let id_graph = BipartiteGraph::from_matrix(&FiniteMatrix::identity(3));
        assert!(oracle_espousable(&id_graph).unwrap());

        let mut g = BipartiteGraph::new(2, 1);
        g.add_edge(1, 1);
        g.add_edge(2, 1);
        assert!(!oracle_espousable(&g).unwrap());

        for seed in 0..200 {
            let g = random_bipartite_graph(seed, 1 + (seed as usize % 6), 4, 45);
            assert_eq!(
                oracle_espousable(&g).unwrap(),
                is_espousable_finite(&g),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn oracle_critical_wave_examples() {
        let mut g = BipartiteGraph::new(2, 1);
        g.add_edge(1, 1);
        g.add_edge(2, 1);
        assert!(oracle_critical_wave(&g, &Matching::empty()).unwrap());
        let f = Matching::from_pairs([(1, 1)]).unwrap();
        assert!(oracle_critical_wave(&g, &f).unwrap());

        let mut complete = BipartiteGraph::new(2, 3);
        for m in 1..=2 {
            for w in 1..=3 {
                complete.add_edge(m, w);
            }
        }
        let f = Matching::from_pairs([(1, 1), (2, 2)]).unwrap();
        assert!(!oracle_critical_wave(&complete, &f).unwrap());
    }

    #[test]
    fn family_spec_round_trip() {
        let spec = FamilySpec::new("random-tight").with("seed", 3).with("n", 4);
        let FamilyInstance::Finite(a) = spec.instantiate().unwrap() else {
            panic!("random-tight is finite");
        };
        assert_eq!(a, family_random_tight(3, 4, 0));

        assert!(matches!(
            FamilySpec::new("nope").instantiate(),
            Err(CorpusError::UnknownFamily(_))
        ));
        assert!(lazy_family("donjuan").is_ok());
        assert!(lazy_family("random-tight").is_err());
    }
}
