//! Finite and lazily-streamed row-finite matrices, with exact tightness
//! verdicts, stubbornness certificates and left inverses.
//!
//! A matrix is *tight* when `Ax = 0` has only the trivial solution. On finite
//! matrices this is decided by exact rational elimination; on lazy (countable)
//! matrices stubbornness of a single variable is semi-decided by an expanding
//! window over the row stream.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::numerics::{Rational, SparseVector};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("row {row} has support outside 1..={n_cols}")]
    SupportOutOfRange { row: usize, n_cols: usize },
    #[error("expected {expected} rows, got {got}")]
    RowCountMismatch { expected: usize, got: usize },
    #[error("assignment has {got} entries, matrix has {expected} columns")]
    DimensionMismatch { expected: usize, got: usize },
}

/// An ordered list of rows from FS(J); duplicate rows are allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteMatrix {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<SparseVector>,
}

impl FiniteMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        rows: Vec<SparseVector>,
    ) -> Result<Self, MatrixError> {
        if rows.len() != n_rows {
            return Err(MatrixError::RowCountMismatch {
                expected: n_rows,
                got: rows.len(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.max_support().map_or(false, |j| j > n_cols) {
                return Err(MatrixError::SupportOutOfRange {
                    row: i + 1,
                    n_cols,
                });
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            rows,
        })
    }

    /// Test helper: dense integer rows.
    pub fn from_ints(rows: &[&[i64]]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let rows = rows.iter().map(|r| SparseVector::from_ints(r)).collect();
        Self::new(n_rows, n_cols, rows).expect("dense rows are in range")
    }

    pub fn identity(n: usize) -> Self {
        let rows = (1..=n).map(SparseVector::unit).collect();
        Self::new(n, n, rows).expect("identity is well-formed")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Row `i`, 1-based.
    pub fn row(&self, i: usize) -> &SparseVector {
        &self.rows[i - 1]
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn entry(&self, i: usize, j: usize) -> Rational {
        self.row(i).coeff(j)
    }

    /// `A x`, component i being the dot of row i with x.
    pub fn mat_vec(&self, x: &[Rational]) -> Result<Vec<Rational>, MatrixError> {
        if x.len() != self.n_cols {
            return Err(MatrixError::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        Ok(self
            .rows
            .iter()
            .map(|row| row.dot(x).expect("support is within 1..=n_cols"))
            .collect())
    }

    /// A basis of ker(A), computed by exact elimination. Empty iff A is tight.
    ///
    /// Deterministic: pivots are chosen in ascending column order, each free
    /// column contributes one basis vector with coefficient 1 on itself.
    pub fn kernel_basis(&self) -> Vec<SparseVector> {
        // Reduced echelon form keyed by pivot column (smallest support col).
        let mut pivots: BTreeMap<usize, SparseVector> = BTreeMap::new();
        for row in &self.rows {
            let mut residual = row.clone();
            loop {
                let hit = residual.support().find(|j| pivots.contains_key(j));
                match hit {
                    Some(j) => {
                        let pivot = pivots[&j].clone();
                        let factor = -residual.coeff(j) / pivot.coeff(j);
                        residual = residual.add_scaled(&factor, &pivot);
                    }
                    None => break,
                }
            }
            if let Some(lead) = residual.min_support() {
                let inv = residual.coeff(lead).recip();
                let normalized = residual.scale(&inv);
                // Back-substitute into existing pivot rows so reads below are RREF.
                for (_, p) in pivots.iter_mut() {
                    let c = p.coeff(lead);
                    if !c.is_zero() {
                        *p = p.add_scaled(&(-c), &normalized);
                    }
                }
                pivots.insert(lead, normalized);
            }
        }
        let mut basis = Vec::new();
        for free in 1..=self.n_cols {
            if pivots.contains_key(&free) {
                continue;
            }
            let mut v = SparseVector::unit(free);
            for (&p, row) in &pivots {
                let c = row.coeff(free);
                if !c.is_zero() {
                    v.set(p, -c);
                }
            }
            // Leading coefficient 1 makes the witness canonical.
            let lead = v.min_support().expect("free column contributes an entry");
            let inv = v.coeff(lead).recip();
            basis.push(v.scale(&inv));
        }
        basis
    }

    pub fn is_tight(&self) -> Tightness {
        match self.kernel_basis().into_iter().next() {
            None => Tightness::Tight,
            Some(x) => {
                let nonzero_index = x.min_support().expect("kernel basis vectors are nonzero");
                Tightness::NotTight(KernelWitness { x, nonzero_index })
            }
        }
    }

    /// Expresses e_j as a finite combination of rows, if e_j ∈ span(Row(A)).
    ///
    /// The combination is the one produced by eliminating rows in ascending
    /// order, so the output is deterministic.
    pub fn express_unit_vector(&self, j: usize) -> Option<RowCombination> {
        assert!(j >= 1 && j <= self.n_cols, "column out of range");
        let mut basis = SpanBasis::new();
        for (i, row) in self.rows.iter().enumerate() {
            basis.insert_row(i + 1, row);
        }
        basis.express_unit(j)
    }

    /// A J×I matrix Z with ZA = I, or None when A is not tight. Row Z_j holds
    /// the coefficients expressing e_j over Row(A).
    pub fn left_inverse(&self) -> Option<LeftInverse> {
        let mut basis = SpanBasis::new();
        for (i, row) in self.rows.iter().enumerate() {
            basis.insert_row(i + 1, row);
        }
        let mut z_rows = Vec::with_capacity(self.n_cols);
        for j in 1..=self.n_cols {
            z_rows.push(basis.express_unit(j)?.coeffs);
        }
        let z = FiniteMatrix::new(self.n_cols, self.n_rows, z_rows)
            .expect("coefficient supports lie within the row index range");
        Some(LeftInverse { z })
    }

    /// True iff `z.z * self` is exactly the identity on J.
    pub fn verify_left_inverse(&self, z: &LeftInverse) -> bool {
        let z = &z.z;
        if z.n_rows != self.n_cols || z.n_cols != self.n_rows {
            return false;
        }
        for ell in 1..=z.n_rows {
            let mut product_row = SparseVector::zero();
            for (p, c) in z.row(ell).iter() {
                product_row = product_row.add_scaled(c, self.row(p));
            }
            if product_row != SparseVector::unit(ell) {
                return false;
            }
        }
        true
    }

    /// Connected components of the row–column incidence structure. Each block
    /// is closed: every variable of a block's equations lies in the block.
    /// Zero rows and untouched columns form their own singleton blocks.
    pub fn decompose_closed_subsystems(&self) -> Vec<Block> {
        // Union-find over n_rows row nodes followed by n_cols column nodes.
        let total = self.n_rows + self.n_cols;
        let mut parent: Vec<usize> = (0..total).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let root = find(parent, parent[x]);
                parent[x] = root;
            }
            parent[x]
        }
        for (i, row) in self.rows.iter().enumerate() {
            for j in row.support() {
                let a = find(&mut parent, i);
                let b = find(&mut parent, self.n_rows + j - 1);
                parent[a] = b;
            }
        }
        let mut blocks: BTreeMap<usize, Block> = BTreeMap::new();
        for i in 1..=self.n_rows {
            let root = find(&mut parent, i - 1);
            blocks.entry(root).or_default().rows.push(i);
        }
        for j in 1..=self.n_cols {
            let root = find(&mut parent, self.n_rows + j - 1);
            blocks.entry(root).or_default().cols.push(j);
        }
        let mut out: Vec<Block> = blocks.into_values().collect();
        out.sort_by_key(|b| (b.cols.first().copied(), b.rows.first().copied()));
        out
    }

    /// The sub-matrix induced by a block, with rows and columns renumbered
    /// contiguously in ascending original order.
    pub fn block_matrix(&self, block: &Block) -> FiniteMatrix {
        let col_index: BTreeMap<usize, usize> = block
            .cols
            .iter()
            .enumerate()
            .map(|(k, &j)| (j, k + 1))
            .collect();
        let rows = block
            .rows
            .iter()
            .map(|&i| {
                SparseVector::from_entries(
                    self.row(i)
                        .iter()
                        .map(|(j, c)| (col_index[&j], c.clone())),
                )
            })
            .collect();
        FiniteMatrix::new(block.rows.len(), block.cols.len(), rows)
            .expect("block columns cover every support index")
    }
}

/// One closed subsystem: a set of equations together with every variable they
/// mention.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Block {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tightness {
    Tight,
    NotTight(KernelWitness),
}

impl Tightness {
    pub fn is_tight(&self) -> bool {
        matches!(self, Tightness::Tight)
    }
}

/// A nonzero kernel vector with a distinguished nonzero coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelWitness {
    pub x: SparseVector,
    pub nonzero_index: usize,
}

impl KernelWitness {
    /// Re-checks `A x = 0` row by row and that the distinguished coordinate is
    /// actually nonzero.
    pub fn verify(&self, a: &FiniteMatrix) -> bool {
        if self.x.get(self.nonzero_index).is_none() {
            return false;
        }
        a.rows.iter().all(|row| row.dot_sparse(&self.x).is_zero())
    }
}

/// e_j expressed as a finite combination of rows: Σ coeffs(i)·A_i = e_j.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowCombination {
    pub target: usize,
    /// Map row index → nonzero coefficient, stored as a sparse vector over I.
    pub coeffs: SparseVector,
}

impl RowCombination {
    /// Re-verifies the defining identity against a row source.
    pub fn verify<S: RowSource + ?Sized>(&self, source: &S) -> bool {
        let mut acc = SparseVector::zero();
        for (i, c) in self.coeffs.iter() {
            match source.fetch_row(i) {
                Some(row) => acc = acc.add_scaled(c, &row),
                None => return false,
            }
        }
        acc == SparseVector::unit(self.target)
    }
}

/// A J×I matrix Z with ZA = I.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeftInverse {
    pub z: FiniteMatrix,
}

/// Uniform row access for finite matrices and lazy streams.
pub trait RowSource {
    fn fetch_row(&self, i: usize) -> Option<SparseVector>;
    /// Total row count when the source is finite.
    fn row_count(&self) -> Option<usize>;
}

impl RowSource for FiniteMatrix {
    fn fetch_row(&self, i: usize) -> Option<SparseVector> {
        (i >= 1 && i <= self.n_rows).then(|| self.row(i).clone())
    }
    fn row_count(&self) -> Option<usize> {
        Some(self.n_rows)
    }
}

/// A deterministic, replayable row stream: row i is a pure function of i, so
/// independent consumers replay identical streams. `row_count = None` means
/// the stream is infinite (order type ω).
#[derive(Clone)]
pub struct LazyMatrix {
    rows: Arc<dyn Fn(usize) -> Option<SparseVector> + Send + Sync>,
    row_count: Option<usize>,
}

impl LazyMatrix {
    pub fn from_fn<F>(row_count: Option<usize>, f: F) -> Self
    where
        F: Fn(usize) -> Option<SparseVector> + Send + Sync + 'static,
    {
        Self {
            rows: Arc::new(f),
            row_count,
        }
    }

    pub fn from_finite(a: &FiniteMatrix) -> Self {
        let a = a.clone();
        let n = a.n_rows();
        Self::from_fn(Some(n), move |i| a.fetch_row(i))
    }

    pub fn row(&self, i: usize) -> Option<SparseVector> {
        if i == 0 {
            return None;
        }
        if let Some(n) = self.row_count {
            if i > n {
                return None;
            }
        }
        (self.rows)(i)
    }

    /// Materializes the first `n_rows` rows as a finite matrix with `n_cols`
    /// columns. Stops early when the stream ends.
    pub fn prefix(&self, n_rows: usize, n_cols: usize) -> Result<FiniteMatrix, MatrixError> {
        let mut rows = Vec::new();
        for i in 1..=n_rows {
            match self.row(i) {
                Some(r) => rows.push(r),
                None => break,
            }
        }
        let n = rows.len();
        FiniteMatrix::new(n, n_cols, rows)
    }
}

impl RowSource for LazyMatrix {
    fn fetch_row(&self, i: usize) -> Option<SparseVector> {
        self.row(i)
    }
    fn row_count(&self) -> Option<usize> {
        self.row_count
    }
}

/// Incremental span tracker: an echelon basis of the rows inserted so far,
/// each basis vector carrying its expression over the original row indices.
///
/// Pivots are the *largest* support column of each reduced vector. Reducing a
/// vector eliminates its largest pivoted column first; every elimination only
/// introduces smaller columns, so reduction terminates.
pub struct SpanBasis {
    /// pivot column → (reduced row with pivot coefficient 1, combination over
    /// inserted row indices producing it)
    pivots: BTreeMap<usize, (SparseVector, SparseVector)>,
}

impl SpanBasis {
    pub fn new() -> Self {
        Self {
            pivots: BTreeMap::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Writes `target = residual + Σ combo_i · row_i` with the residual free
    /// of pivoted columns.
    fn reduce(&self, target: &SparseVector) -> (SparseVector, SparseVector) {
        let mut residual = target.clone();
        let mut combo = SparseVector::zero();
        loop {
            let hit = residual
                .support()
                .rev()
                .find(|j| self.pivots.contains_key(j));
            let Some(j) = hit else { break };
            let (vec, vec_combo) = &self.pivots[&j];
            let c = residual.coeff(j);
            residual = residual.add_scaled(&(-c.clone()), vec);
            combo = combo.add_scaled(&c, vec_combo);
        }
        (residual, combo)
    }

    /// Inserts row `index`. Dependent rows are absorbed without growing the
    /// basis. Insert rows in ascending index order for deterministic output.
    pub fn insert_row(&mut self, index: usize, row: &SparseVector) {
        let (residual, combo) = self.reduce(row);
        let Some(pivot) = residual.max_support() else {
            return;
        };
        // residual = row − Σ combo_i row_i, normalized to pivot coefficient 1.
        let inv = residual.coeff(pivot).recip();
        let vec = residual.scale(&inv);
        let minus_one = -Rational::one();
        let vec_combo = SparseVector::unit(index)
            .add_scaled(&minus_one, &combo)
            .scale(&inv);
        self.pivots.insert(pivot, (vec, vec_combo));
    }

    /// A combination with Σ coeffs_i · row_i = target, if target is in the
    /// span of the inserted rows.
    pub fn express(&self, target: &SparseVector) -> Option<SparseVector> {
        let (residual, combo) = self.reduce(target);
        residual.is_zero().then_some(combo)
    }

    pub fn express_unit(&self, j: usize) -> Option<RowCombination> {
        self.express(&SparseVector::unit(j))
            .map(|coeffs| RowCombination { target: j, coeffs })
    }

    pub fn contains(&self, target: &SparseVector) -> bool {
        self.reduce(target).0.is_zero()
    }
}

impl Default for SpanBasis {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of the expanding-window stubbornness search. `Exhausted` is *not*
/// a proof of non-stubbornness: the search is a semi-decision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StubbornSearch {
    Found(RowCombination),
    Exhausted { rows_consumed: usize },
}

/// Pulls rows of `a` in stream order; after each pull checks whether the
/// prefix already spans e_j. Stops at `budget` rows or at stream end.
pub fn stubborn_search_lazy(a: &LazyMatrix, j: usize, budget: usize) -> StubbornSearch {
    assert!(budget >= 1, "budget must be at least 1");
    let mut basis = SpanBasis::new();
    let mut consumed = 0;
    for i in 1..=budget {
        let Some(row) = a.row(i) else { break };
        consumed = i;
        basis.insert_row(i, &row);
        if let Some(found) = basis.express_unit(j) {
            return StubbornSearch::Found(found);
        }
    }
    StubbornSearch::Exhausted {
        rows_consumed: consumed,
    }
}
