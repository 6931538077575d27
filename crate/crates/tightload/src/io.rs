//! Text formats: the `rfs-matrix` file format and versioned JSON
//! certificates.
//!
//! Matrix files are line-oriented:
//!
//! ```text
//! rfs-matrix 1
//! rows <n|lazy:FAMILY> cols <m|lazy>
//! <i> <j> <rational>
//! ```
//!
//! Entries not listed are zero; an explicit zero entry or a duplicate (i,j)
//! is a parse error. Certificates serialize as JSON objects with `"v": 1`;
//! `serde_json` maps are ordered, so output is byte-stable.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::corpus;
use crate::loader::{DiagonalizationTrace, Injection, RowOp, TraceStep};
use crate::matching::{
    BipartiteGraph, CriticalityEvidence, Impediment, Matching, ObstructionCertificate,
};
use crate::matrix::{FiniteMatrix, KernelWitness, LazyMatrix, LeftInverse, RowCombination};
use crate::numerics::{parse_rational, render_rational, Rational, SparseVector};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

pub enum ParsedMatrix {
    Finite(FiniteMatrix),
    Lazy(LazyMatrix),
}

impl std::fmt::Debug for ParsedMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParsedMatrix::Finite(a) => f.debug_tuple("Finite").field(a).finish(),
            ParsedMatrix::Lazy(_) => f.debug_tuple("Lazy").finish(),
        }
    }
}

pub fn parse_matrix_text(text: &str) -> Result<ParsedMatrix, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line_no, magic) = lines
        .next()
        .ok_or_else(|| ParseError::new(1, "empty file"))?;
    if magic != "rfs-matrix 1" {
        return Err(ParseError::new(line_no, "expected header \"rfs-matrix 1\""));
    }

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| ParseError::new(line_no + 1, "missing rows/cols header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "rows" || fields[2] != "cols" {
        return Err(ParseError::new(
            line_no,
            "expected \"rows <n|lazy:FAMILY> cols <m|lazy>\"",
        ));
    }

    if let Some(family) = fields[1].strip_prefix("lazy:") {
        if fields[3] != "lazy" {
            return Err(ParseError::new(line_no, "lazy rows require \"cols lazy\""));
        }
        if let Some((extra_line, _)) = lines.next() {
            return Err(ParseError::new(
                extra_line,
                "lazy matrices take no entry lines",
            ));
        }
        let lazy = corpus::lazy_family(family)
            .map_err(|e| ParseError::new(line_no, e.to_string()))?;
        return Ok(ParsedMatrix::Lazy(lazy));
    }

    let n_rows: usize = fields[1]
        .parse()
        .map_err(|_| ParseError::new(line_no, format!("bad row count {:?}", fields[1])))?;
    let n_cols: usize = fields[3]
        .parse()
        .map_err(|_| ParseError::new(line_no, format!("bad column count {:?}", fields[3])))?;

    let mut entries: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(ParseError::new(line_no, "expected \"<i> <j> <rational>\""));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| ParseError::new(line_no, format!("bad row index {:?}", fields[0])))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| ParseError::new(line_no, format!("bad column index {:?}", fields[1])))?;
        if i < 1 || i > n_rows || j < 1 || j > n_cols {
            return Err(ParseError::new(line_no, format!("entry ({i},{j}) out of range")));
        }
        let value =
            parse_rational(fields[2]).map_err(|e| ParseError::new(line_no, e.to_string()))?;
        if value.is_zero() {
            return Err(ParseError::new(line_no, "explicit zero entry"));
        }
        if entries.insert((i, j), value).is_some() {
            return Err(ParseError::new(line_no, format!("duplicate entry ({i},{j})")));
        }
    }

    let mut rows = vec![SparseVector::zero(); n_rows];
    for ((i, j), value) in entries {
        rows[i - 1].set(j, value);
    }
    let matrix = FiniteMatrix::new(n_rows, n_cols, rows)
        .map_err(|e| ParseError::new(0, e.to_string()))?;
    Ok(ParsedMatrix::Finite(matrix))
}

pub fn matrix_to_text(a: &FiniteMatrix) -> String {
    let mut out = String::from("rfs-matrix 1\n");
    out.push_str(&format!("rows {} cols {}\n", a.n_rows(), a.n_cols()));
    for i in 1..=a.n_rows() {
        for (j, c) in a.row(i).iter() {
            out.push_str(&format!("{} {} {}\n", i, j, render_rational(c)));
        }
    }
    out
}

pub fn lazy_matrix_text(family: &str) -> String {
    format!("rfs-matrix 1\nrows lazy:{family} cols lazy\n")
}

// --- certificate JSON -----------------------------------------------------

fn sparse_to_json(v: &SparseVector) -> Value {
    let mut map = Map::new();
    for (j, c) in v.iter() {
        map.insert(j.to_string(), Value::String(render_rational(c)));
    }
    Value::Object(map)
}

fn sparse_from_json(v: &Value) -> Result<SparseVector, String> {
    let obj = v.as_object().ok_or("expected an object of entries")?;
    let mut out = SparseVector::zero();
    for (k, val) in obj {
        let j: usize = k.parse().map_err(|_| format!("bad index key {k:?}"))?;
        let s = val.as_str().ok_or("entry values must be strings")?;
        let r = parse_rational(s).map_err(|e| e.to_string())?;
        if r.is_zero() {
            return Err("explicit zero entry in certificate".into());
        }
        out.set(j, r);
    }
    Ok(out)
}

pub fn kernel_witness_to_json(w: &KernelWitness) -> Value {
    json!({
        "v": 1,
        "kind": "kernel-witness",
        "nonzero": w.nonzero_index,
        "entries": sparse_to_json(&w.x),
    })
}

pub fn row_combination_to_json(c: &RowCombination) -> Value {
    json!({
        "v": 1,
        "kind": "row-combination",
        "target": c.target,
        "coeffs": sparse_to_json(&c.coeffs),
    })
}

pub fn injection_to_json(phi: &Injection) -> Value {
    let pairs: Vec<Value> = phi.iter().map(|(j, i)| json!([j, i])).collect();
    json!({"v": 1, "kind": "injection", "pairs": pairs})
}

fn matrix_entries_json(a: &FiniteMatrix) -> Value {
    let mut entries = Vec::new();
    for i in 1..=a.n_rows() {
        for (j, c) in a.row(i).iter() {
            entries.push(json!([i, j, render_rational(c)]));
        }
    }
    Value::Array(entries)
}

pub fn left_inverse_to_json(z: &LeftInverse) -> Value {
    json!({
        "v": 1,
        "kind": "left-inverse",
        "rows": z.z.n_rows(),
        "cols": z.z.n_cols(),
        "entries": matrix_entries_json(&z.z),
    })
}

pub fn trace_to_json(t: &DiagonalizationTrace) -> Value {
    let steps: Vec<Value> = t
        .steps
        .iter()
        .map(|s| {
            let ops: Vec<Value> = s
                .ops
                .iter()
                .map(|op| match op {
                    RowOp::Swap(i, k) => json!({"op": "swap", "rows": [i, k]}),
                    RowOp::Replace { row, coeffs } => {
                        json!({"op": "replace", "row": row, "coeffs": sparse_to_json(coeffs)})
                    }
                })
                .collect();
            json!({
                "step": s.step,
                "ops": ops,
                "checkpoint": matrix_entries_json(&s.checkpoint),
            })
        })
        .collect();
    json!({"v": 1, "kind": "trace", "steps": steps})
}

pub fn matching_to_json(f: &Matching) -> Value {
    let pairs: Vec<Value> = f.pairs().map(|(m, w)| json!([m, w])).collect();
    json!({"v": 1, "kind": "matching", "pairs": pairs})
}

pub fn hall_violator_to_json(t: &std::collections::BTreeSet<usize>) -> Value {
    json!({"v": 1, "kind": "hall-violator", "columns": t.iter().collect::<Vec<_>>()})
}

pub fn obstruction_to_json(c: &ObstructionCertificate) -> Value {
    let wave: Vec<Value> = c.impediment.wave.pairs().map(|(m, w)| json!([m, w])).collect();
    let evidence = match &c.evidence {
        CriticalityEvidence::Finite { enumeration } => json!({
            "mode": "finite",
            "alternating": true,
            "enumeration": enumeration,
        }),
        CriticalityEvidence::Partial { explored_rows } => json!({
            "mode": "partial",
            "explored_rows": explored_rows,
        }),
    };
    json!({
        "v": 1,
        "kind": "obstruction",
        "vertex": c.impediment.vertex,
        "wave": wave,
        "evidence": evidence,
    })
}

fn pairs_from_json(v: &Value) -> Result<Vec<(usize, usize)>, String> {
    let arr = v.as_array().ok_or("expected an array of pairs")?;
    arr.iter()
        .map(|p| {
            let p = p.as_array().filter(|p| p.len() == 2).ok_or("bad pair")?;
            let a = p[0].as_u64().ok_or("bad pair element")? as usize;
            let b = p[1].as_u64().ok_or("bad pair element")? as usize;
            Ok((a, b))
        })
        .collect()
}

/// Re-verifies a certificate against a matrix. Returns Ok(true/false) for a
/// well-formed certificate, Err for malformed input.
pub fn verify_certificate(matrix: &ParsedMatrix, cert: &Value) -> Result<bool, String> {
    let kind = cert
        .get("kind")
        .and_then(Value::as_str)
        .ok_or("certificate has no \"kind\"")?;
    if cert.get("v").and_then(Value::as_u64) != Some(1) {
        return Err("unsupported certificate version".into());
    }
    let finite = |what: &str| -> Result<&FiniteMatrix, String> {
        match matrix {
            ParsedMatrix::Finite(a) => Ok(a),
            ParsedMatrix::Lazy(_) => Err(format!("{what} certificates need a finite matrix")),
        }
    };
    match kind {
        "kernel-witness" => {
            let x = sparse_from_json(cert.get("entries").ok_or("missing entries")?)?;
            let nonzero_index = cert
                .get("nonzero")
                .and_then(Value::as_u64)
                .ok_or("missing nonzero index")? as usize;
            let w = KernelWitness { x, nonzero_index };
            Ok(w.verify(finite("kernel-witness")?))
        }
        "row-combination" => {
            let coeffs = sparse_from_json(cert.get("coeffs").ok_or("missing coeffs")?)?;
            let target = cert
                .get("target")
                .and_then(Value::as_u64)
                .ok_or("missing target")? as usize;
            let c = RowCombination { target, coeffs };
            Ok(match matrix {
                ParsedMatrix::Finite(a) => c.verify(a),
                ParsedMatrix::Lazy(a) => c.verify(a),
            })
        }
        "injection" => {
            let pairs = pairs_from_json(cert.get("pairs").ok_or("missing pairs")?)?;
            let phi = Injection::from_pairs(pairs);
            let result = match matrix {
                ParsedMatrix::Finite(a) => crate::loader::verify_injection(a, &phi),
                ParsedMatrix::Lazy(a) => crate::loader::verify_injection(a, &phi),
            };
            result.map_err(|e| e.to_string())
        }
        "left-inverse" => {
            let a = finite("left-inverse")?;
            let rows = cert.get("rows").and_then(Value::as_u64).ok_or("missing rows")? as usize;
            let cols = cert.get("cols").and_then(Value::as_u64).ok_or("missing cols")? as usize;
            let mut z_rows = vec![SparseVector::zero(); rows];
            for entry in cert
                .get("entries")
                .and_then(Value::as_array)
                .ok_or("missing entries")?
            {
                let triple = entry.as_array().filter(|t| t.len() == 3).ok_or("bad entry")?;
                let i = triple[0].as_u64().ok_or("bad entry")? as usize;
                let j = triple[1].as_u64().ok_or("bad entry")? as usize;
                let c = parse_rational(triple[2].as_str().ok_or("bad entry")?)
                    .map_err(|e| e.to_string())?;
                if i < 1 || i > rows {
                    return Err(format!("row index {i} out of range"));
                }
                z_rows[i - 1].set(j, c);
            }
            let z = FiniteMatrix::new(rows, cols, z_rows).map_err(|e| e.to_string())?;
            Ok(a.verify_left_inverse(&LeftInverse { z }))
        }
        "trace" => {
            let a = finite("trace")?;
            let trace = trace_from_json(a, cert)?;
            Ok(crate::loader::verify_trace(a, &trace))
        }
        "matching" => {
            let a = finite("matching")?;
            let pairs = pairs_from_json(cert.get("pairs").ok_or("missing pairs")?)?;
            let f = Matching::from_pairs(pairs).map_err(|e| e.to_string())?;
            Ok(f.is_matching_in(&BipartiteGraph::from_matrix(a)))
        }
        "hall-violator" => {
            let a = finite("hall-violator")?;
            let g = BipartiteGraph::from_matrix(a);
            let cols = cert
                .get("columns")
                .and_then(Value::as_array)
                .ok_or("missing columns")?;
            let t: Vec<usize> = cols
                .iter()
                .map(|c| c.as_u64().map(|c| c as usize).ok_or("bad column"))
                .collect::<Result<_, _>>()?;
            let neighborhood: std::collections::BTreeSet<usize> = t
                .iter()
                .flat_map(|&m| g.neighbors(m).into_iter().flatten().copied())
                .collect();
            Ok(neighborhood.len() < t.len())
        }
        "obstruction" => {
            let a = finite("obstruction")?;
            let g = BipartiteGraph::from_matrix(a);
            let pairs = pairs_from_json(cert.get("wave").ok_or("missing wave")?)?;
            let wave = Matching::from_pairs(pairs).map_err(|e| e.to_string())?;
            let vertex = cert
                .get("vertex")
                .and_then(Value::as_u64)
                .ok_or("missing vertex")? as usize;
            let imp = Impediment { wave, vertex };
            let valid = imp.verify(&g).map_err(|e| e.to_string())?;
            Ok(valid && crate::matching::critical_wave_alternating(&g, &imp.wave))
        }
        other => Err(format!("unknown certificate kind {other:?}")),
    }
}

fn trace_from_json(a: &FiniteMatrix, cert: &Value) -> Result<DiagonalizationTrace, String> {
    let mut steps = Vec::new();
    for step in cert
        .get("steps")
        .and_then(Value::as_array)
        .ok_or("missing steps")?
    {
        let number = step.get("step").and_then(Value::as_u64).ok_or("missing step number")? as usize;
        let mut ops = Vec::new();
        for op in step.get("ops").and_then(Value::as_array).ok_or("missing ops")? {
            let name = op.get("op").and_then(Value::as_str).ok_or("missing op name")?;
            match name {
                "swap" => {
                    let rows = op.get("rows").and_then(Value::as_array).ok_or("missing rows")?;
                    if rows.len() != 2 {
                        return Err("swap needs two rows".into());
                    }
                    let i = rows[0].as_u64().ok_or("bad swap row")? as usize;
                    let k = rows[1].as_u64().ok_or("bad swap row")? as usize;
                    ops.push(RowOp::Swap(i, k));
                }
                "replace" => {
                    let row = op.get("row").and_then(Value::as_u64).ok_or("missing row")? as usize;
                    let coeffs = sparse_from_json(op.get("coeffs").ok_or("missing coeffs")?)?;
                    ops.push(RowOp::Replace { row, coeffs });
                }
                other => return Err(format!("unknown op {other:?}")),
            }
        }
        let mut rows = vec![SparseVector::zero(); a.n_rows()];
        for entry in step
            .get("checkpoint")
            .and_then(Value::as_array)
            .ok_or("missing checkpoint")?
        {
            let triple = entry.as_array().filter(|t| t.len() == 3).ok_or("bad checkpoint entry")?;
            let i = triple[0].as_u64().ok_or("bad checkpoint entry")? as usize;
            let j = triple[1].as_u64().ok_or("bad checkpoint entry")? as usize;
            let c = parse_rational(triple[2].as_str().ok_or("bad checkpoint entry")?)
                .map_err(|e| e.to_string())?;
            if i < 1 || i > a.n_rows() {
                return Err(format!("checkpoint row {i} out of range"));
            }
            rows[i - 1].set(j, c);
        }
        let checkpoint =
            FiniteMatrix::new(a.n_rows(), a.n_cols(), rows).map_err(|e| e.to_string())?;
        steps.push(TraceStep {
            step: number,
            ops,
            checkpoint,
        });
    }
    Ok(DiagonalizationTrace { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loader::{construct_injection_finite, proudly_diagonalize, DiagonalizeOutcome, InjectionOutcome};
    use crate::matrix::Tightness;

    #[test]
    fn parse_identity_file() {
        let text = "rfs-matrix 1\nrows 2 cols 2\n1 1 1\n2 2 1\n";
        let ParsedMatrix::Finite(a) = parse_matrix_text(text).unwrap() else {
            panic!("expected finite");
        };
        assert_eq!(a, FiniteMatrix::identity(2));
    }

    #[test]
    fn parse_lazy_header() {
        let ParsedMatrix::Lazy(dj) = parse_matrix_text(&lazy_matrix_text("donjuan")).unwrap()
        else {
            panic!("expected lazy");
        };
        assert_eq!(
            dj.row(1).unwrap(),
            SparseVector::from_entries([(1, crate::numerics::rat_int(1)), (2, crate::numerics::rat_int(-1))])
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let zero = "rfs-matrix 1\nrows 1 cols 1\n1 1 0\n";
        let err = parse_matrix_text(zero).unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("zero"));

        let dup = "rfs-matrix 1\nrows 1 cols 2\n1 1 1\n1 1 2\n";
        let err = parse_matrix_text(dup).unwrap_err();
        assert_eq!(err.line, 4);
        assert!(err.message.contains("duplicate"));

        let unknown = "rfs-matrix 1\nrows lazy:who cols lazy\n";
        assert!(parse_matrix_text(unknown).is_err());

        let bad_magic = "matrix 2\n";
        assert_eq!(parse_matrix_text(bad_magic).unwrap_err().line, 1);
    }

    #[test]
    fn matrix_text_round_trips() {
        let a = crate::corpus::family_random_tight(5, 4, 2);
        let text = matrix_to_text(&a);
        let ParsedMatrix::Finite(b) = parse_matrix_text(&text).unwrap() else {
            panic!("expected finite");
        };
        assert_eq!(a, b);
    }

    #[test]
    fn certificates_round_trip_through_verify() {
        let a = crate::corpus::family_random_tight(11, 4, 1);
        let parsed = ParsedMatrix::Finite(a.clone());

        let InjectionOutcome::Loaded(phi) = construct_injection_finite(&a) else {
            panic!("tight matrix must be loaded");
        };
        assert_eq!(verify_certificate(&parsed, &injection_to_json(&phi)), Ok(true));

        let z = a.left_inverse().unwrap();
        assert_eq!(
            verify_certificate(&parsed, &left_inverse_to_json(&z)),
            Ok(true)
        );

        let c = a.express_unit_vector(1).unwrap();
        assert_eq!(
            verify_certificate(&parsed, &row_combination_to_json(&c)),
            Ok(true)
        );

        let DiagonalizeOutcome::Trace(trace) = proudly_diagonalize(&a, a.n_cols()).unwrap() else {
            panic!("tight matrix diagonalizes");
        };
        assert_eq!(verify_certificate(&parsed, &trace_to_json(&trace)), Ok(true));

        let bad = crate::corpus::family_random_sparse(1, 2, 2, 100);
        if let Tightness::NotTight(w) = bad.is_tight() {
            let parsed_bad = ParsedMatrix::Finite(bad);
            assert_eq!(
                verify_certificate(&parsed_bad, &kernel_witness_to_json(&w)),
                Ok(true)
            );
        }
    }

    #[test]
    fn tampered_certificates_fail() {
        let a = FiniteMatrix::identity(2);
        let parsed = ParsedMatrix::Finite(a);
        let phi = Injection::from_pairs([(1, 1), (2, 1)]);
        assert_eq!(verify_certificate(&parsed, &injection_to_json(&phi)), Ok(false));

        let nonsense = json!({"v": 1, "kind": "who-knows"});
        assert!(verify_certificate(&parsed, &nonsense).is_err());

        let wrong_version = json!({"v": 2, "kind": "injection", "pairs": []});
        assert!(verify_certificate(&parsed, &wrong_version).is_err());
    }
}
