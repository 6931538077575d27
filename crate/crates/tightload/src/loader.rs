//! The loading injection φ and the proud row-diagonalization trace.
//!
//! For a tight matrix, φ maps every column j to a row i with a_{i,j} ≠ 0, no
//! two columns sharing a row. The construction threads a working matrix
//! through the steps: at step j it expresses e_j over the current rows, picks
//! an unused row with nonzero coefficient and nonzero j-entry, records φ(j)
//! and overwrites that row with e_j. Rows are never physically permuted; the
//! used-row set is tracked explicitly so the same loop drives lazy streams.

use std::collections::BTreeMap;

use num_traits::Zero;
use thiserror::Error;

use crate::matrix::{
    FiniteMatrix, KernelWitness, LazyMatrix, RowSource, SpanBasis, Tightness,
};
use crate::numerics::SparseVector;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoaderError {
    #[error("row {0} is not reachable in the stream")]
    UnreachableRow(usize),
    #[error("step count {k} exceeds column count {n_cols}")]
    TooManySteps { k: usize, n_cols: usize },
}

/// The loading injection: column j → row i with a_{φ(j),j} ≠ 0 in the
/// original matrix, no row used twice.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Injection {
    pairs: BTreeMap<usize, usize>,
}

impl Injection {
    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Self {
        Self {
            pairs: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, col: usize) -> Option<usize> {
        self.pairs.get(&col).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|(&j, &i)| (j, i))
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        self.pairs.values().all(|&i| seen.insert(i))
    }

    /// True iff `other` agrees with this map on this map's whole domain.
    pub fn is_restriction_of(&self, other: &Injection) -> bool {
        self.iter().all(|(j, i)| other.get(j) == Some(i))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InjectionOutcome {
    Loaded(Injection),
    NotTight(KernelWitness),
}

/// Builds a total loading injection for a tight finite matrix, or returns a
/// kernel witness when the matrix is not tight.
///
/// Tie-break: when several rows have both a nonzero combination coefficient
/// and a nonzero j-entry, the smallest row index wins.
pub fn construct_injection_finite(a: &FiniteMatrix) -> InjectionOutcome {
    if let Tightness::NotTight(witness) = a.is_tight() {
        return InjectionOutcome::NotTight(witness);
    }
    let mut working: Vec<SparseVector> = a.rows().to_vec();
    let mut used = std::collections::BTreeSet::new();
    let mut phi = Injection::default();
    for j in 1..=a.n_cols() {
        let mut basis = SpanBasis::new();
        for (idx, row) in working.iter().enumerate() {
            basis.insert_row(idx + 1, row);
        }
        let combo = basis
            .express(&SparseVector::unit(j))
            .expect("span is preserved step by step, so e_j stays expressible");
        let pick = combo
            .support()
            .find(|i| !used.contains(i) && !working[i - 1].coeff(j).is_zero())
            .expect("some unused row must carry both a nonzero coefficient and a nonzero j-entry");
        // Unused rows are untouched, so the loading condition holds in A itself.
        debug_assert!(!a.entry(pick, j).is_zero());
        phi.pairs.insert(j, pick);
        used.insert(pick);
        working[pick - 1] = SparseVector::unit(j);
    }
    InjectionOutcome::Loaded(phi)
}

/// Partial result of the lazy construction. `Exhausted` means some step's
/// expanding-window search ran out of budget; it is not a disproof of
/// tightness, and the partial injection is a valid loading injection on the
/// columns it covers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LazyInjection {
    Complete(Injection),
    Exhausted {
        step: usize,
        rows_consumed: usize,
        partial: Injection,
    },
}

/// Builds a loading injection on columns 1..=k of a lazy matrix. Each step
/// may pull at most `per_step_budget` fresh rows from the stream. Output is
/// prefix-stable: the result for k is a restriction of the result for k+1
/// under the same stream and budget.
pub fn construct_injection_lazy(
    a: &LazyMatrix,
    k: usize,
    per_step_budget: usize,
) -> LazyInjection {
    assert!(k >= 1, "at least one column required");
    let mut working: Vec<SparseVector> = Vec::new();
    let mut stream_ended = false;
    let mut used = std::collections::BTreeSet::new();
    let mut phi = Injection::default();
    for j in 1..=k {
        let mut basis = SpanBasis::new();
        for (idx, row) in working.iter().enumerate() {
            basis.insert_row(idx + 1, row);
        }
        let mut pulled_this_step = 0;
        let combo = loop {
            if let Some(combo) = basis.express(&SparseVector::unit(j)) {
                break combo;
            }
            if stream_ended || pulled_this_step == per_step_budget {
                return LazyInjection::Exhausted {
                    step: j,
                    rows_consumed: working.len(),
                    partial: phi,
                };
            }
            match a.row(working.len() + 1) {
                Some(row) => {
                    pulled_this_step += 1;
                    working.push(row);
                    basis.insert_row(working.len(), &working[working.len() - 1]);
                }
                None => stream_ended = true,
            }
        };
        let pick = combo
            .support()
            .find(|i| !used.contains(i) && !working[i - 1].coeff(j).is_zero())
            .expect("some unused row must carry both a nonzero coefficient and a nonzero j-entry");
        phi.pairs.insert(j, pick);
        used.insert(pick);
        working[pick - 1] = SparseVector::unit(j);
    }
    LazyInjection::Complete(phi)
}

/// Checks injectivity and the loading condition a_{φ(j),j} ≠ 0 against the
/// original rows. Errors when a referenced row is unreachable in the stream.
pub fn verify_injection<S: RowSource + ?Sized>(
    source: &S,
    phi: &Injection,
) -> Result<bool, LoaderError> {
    if !phi.is_injective() {
        return Ok(false);
    }
    for (j, i) in phi.iter() {
        let row = source.fetch_row(i).ok_or(LoaderError::UnreachableRow(i))?;
        if row.coeff(j).is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One elementary row operation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RowOp {
    Swap(usize, usize),
    /// Replace row `row` by Σ coeffs(i)·B_i, evaluated on the matrix before
    /// the operation. Legal only when coeffs(row) ≠ 0.
    Replace { row: usize, coeffs: SparseVector },
}

/// The operations and resulting checkpoint of one diagonalization step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub step: usize,
    pub ops: Vec<RowOp>,
    pub checkpoint: FiniteMatrix,
}

/// An ordered record of elementary row operations reducing A towards a proud
/// diagonal, with a checkpoint after every step. Checkpoint k has e_1..e_k as
/// its first k rows and agrees with checkpoint k−1 on the first k−1 rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiagonalizationTrace {
    pub steps: Vec<TraceStep>,
}

impl DiagonalizationTrace {
    pub fn ops(&self) -> impl Iterator<Item = &RowOp> {
        self.steps.iter().flat_map(|s| s.ops.iter())
    }

    pub fn op_count(&self) -> usize {
        self.steps.iter().map(|s| s.ops.len()).sum()
    }

    pub fn final_checkpoint(&self) -> Option<&FiniteMatrix> {
        self.steps.last().map(|s| &s.checkpoint)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiagonalizeOutcome {
    Trace(DiagonalizationTrace),
    NotTight(KernelWitness),
}

fn apply_op(rows: &mut [SparseVector], op: &RowOp) -> Result<(), String> {
    match op {
        RowOp::Swap(i, k) => {
            if *i < 1 || *k < 1 || *i > rows.len() || *k > rows.len() {
                return Err(format!("swap({i},{k}) out of range"));
            }
            rows.swap(i - 1, k - 1);
            Ok(())
        }
        RowOp::Replace { row, coeffs } => {
            if *row < 1 || *row > rows.len() {
                return Err(format!("replace targets row {row} out of range"));
            }
            if coeffs.coeff(*row).is_zero() {
                return Err(format!(
                    "replace of row {row} has zero coefficient on the replaced row"
                ));
            }
            if coeffs.max_support().map_or(false, |i| i > rows.len()) {
                return Err(format!("replace of row {row} references rows out of range"));
            }
            let mut new_row = SparseVector::zero();
            for (i, c) in coeffs.iter() {
                new_row = new_row.add_scaled(c, &rows[i - 1]);
            }
            rows[*row - 1] = new_row;
            Ok(())
        }
    }
}

/// Reduces the first `k` rows of a tight matrix to e_1..e_k by elementary row
/// operations, recording the trace. With `k = n_cols` the surplus rows are
/// zeroed as well, so the final checkpoint is proudly diagonal.
pub fn proudly_diagonalize(a: &FiniteMatrix, k: usize) -> Result<DiagonalizeOutcome, LoaderError> {
    if k > a.n_cols() {
        return Err(LoaderError::TooManySteps {
            k,
            n_cols: a.n_cols(),
        });
    }
    if let Tightness::NotTight(witness) = a.is_tight() {
        return Ok(DiagonalizeOutcome::NotTight(witness));
    }
    let mut rows: Vec<SparseVector> = a.rows().to_vec();
    let mut steps = Vec::new();
    for j in 1..=k {
        let mut ops = Vec::new();
        let mut basis = SpanBasis::new();
        for (idx, row) in rows.iter().enumerate() {
            basis.insert_row(idx + 1, row);
        }
        let combo = basis
            .express(&SparseVector::unit(j))
            .expect("tight matrices keep e_j in the row span");
        // Rows 1..j-1 are already e_1..e_{j-1}; a usable pivot row i >= j
        // exists because the combination must involve column j.
        let pick = combo
            .support()
            .find(|&i| i >= j)
            .expect("the combination cannot be supported on the finished rows alone");
        if !(pick == j && rows[j - 1] == SparseVector::unit(j)) {
            let op = RowOp::Replace {
                row: pick,
                coeffs: combo,
            };
            apply_op(&mut rows, &op).expect("constructed replace is legal");
            ops.push(op);
            if pick != j {
                let op = RowOp::Swap(pick, j);
                apply_op(&mut rows, &op).expect("constructed swap is legal");
                ops.push(op);
            }
        }
        steps.push(TraceStep {
            step: j,
            ops,
            checkpoint: FiniteMatrix::new(a.n_rows(), a.n_cols(), rows.clone())
                .expect("row operations keep supports in range"),
        });
    }
    if k == a.n_cols() && a.n_rows() > k {
        // Surplus rows lie in span(e_1..e_k); subtract their own entries.
        let mut ops = Vec::new();
        for i in (k + 1)..=a.n_rows() {
            if rows[i - 1].is_zero() {
                continue;
            }
            let current = rows[i - 1].clone();
            let mut coeffs = SparseVector::unit(i);
            for (j, c) in current.iter() {
                coeffs.set(j, -c.clone());
            }
            let op = RowOp::Replace { row: i, coeffs };
            apply_op(&mut rows, &op).expect("zeroing replace is legal");
            debug_assert!(rows[i - 1].is_zero());
            ops.push(op);
        }
        if !ops.is_empty() {
            steps.push(TraceStep {
                step: k + 1,
                ops,
                checkpoint: FiniteMatrix::new(a.n_rows(), a.n_cols(), rows.clone())
                    .expect("zeroed rows are in range"),
            });
        }
    }
    Ok(DiagonalizeOutcome::Trace(DiagonalizationTrace { steps }))
}

/// Detailed trace verification: replays every operation, checks the nonzero-
/// coefficient legality of each replace, and the prefix stability of the
/// checkpoints.
pub fn verify_trace_detailed(a: &FiniteMatrix, trace: &DiagonalizationTrace) -> Result<(), String> {
    let mut rows: Vec<SparseVector> = a.rows().to_vec();
    let mut prev: Option<&TraceStep> = None;
    for step in &trace.steps {
        for op in &step.ops {
            apply_op(&mut rows, op)?;
        }
        let replayed = FiniteMatrix::new(a.n_rows(), a.n_cols(), rows.clone())
            .map_err(|e| e.to_string())?;
        if replayed != step.checkpoint {
            return Err(format!("checkpoint at step {} does not replay", step.step));
        }
        if let Some(prev) = prev {
            let stable = prev.step.saturating_sub(1).min(a.n_rows());
            for i in 1..=stable {
                if prev.checkpoint.row(i) != step.checkpoint.row(i) {
                    return Err(format!(
                        "step {} modifies finished row {} of step {}",
                        step.step, i, prev.step
                    ));
                }
            }
        }
        prev = Some(step);
    }
    Ok(())
}

pub fn verify_trace(a: &FiniteMatrix, trace: &DiagonalizationTrace) -> bool {
    verify_trace_detailed(a, trace).is_ok()
}

/// True iff the matrix is diagonal with a nonzero entry at every (j,j).
pub fn is_proudly_diagonal(b: &FiniteMatrix) -> bool {
    for i in 1..=b.n_rows() {
        for (j, _) in b.row(i).iter() {
            if j != i {
                return false;
            }
        }
    }
    (1..=b.n_cols()).all(|j| j <= b.n_rows() && !b.entry(j, j).is_zero())
}

/// Span-preservation probe for tests: two row sets span the same subspace iff
/// each reduces to zero against the other's basis.
pub fn same_row_span(lhs: &[SparseVector], rhs: &[SparseVector]) -> bool {
    let mut left = SpanBasis::new();
    for (idx, row) in lhs.iter().enumerate() {
        left.insert_row(idx + 1, row);
    }
    let mut right = SpanBasis::new();
    for (idx, row) in rhs.iter().enumerate() {
        right.insert_row(idx + 1, row);
    }
    rhs.iter().all(|r| left.contains(r)) && lhs.iter().all(|r| right.contains(r))
}

/// The working matrix of the finite construction after each step, exposed for
/// the span-preservation property test.
pub fn injection_working_states(a: &FiniteMatrix) -> Option<Vec<Vec<SparseVector>>> {
    if !a.is_tight().is_tight() {
        return None;
    }
    let mut working: Vec<SparseVector> = a.rows().to_vec();
    let mut used = std::collections::BTreeSet::new();
    let mut states = Vec::new();
    for j in 1..=a.n_cols() {
        let mut basis = SpanBasis::new();
        for (idx, row) in working.iter().enumerate() {
            basis.insert_row(idx + 1, row);
        }
        let combo = basis.express(&SparseVector::unit(j))?;
        let pick = combo
            .support()
            .find(|i| !used.contains(i) && !working[i - 1].coeff(j).is_zero())?;
        used.insert(pick);
        working[pick - 1] = SparseVector::unit(j);
        states.push(working.clone());
    }
    Some(states)
}
