//! End-to-end acceptance suite. Each test prints one `criterion N: pass`
//! line; any failure aborts with a loud message.

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use num_traits::Zero;

use tightload::corpus::{
    bipartite_graph_from_mask, family_donjuan, family_impediment_chain, family_random_sparse,
    family_random_tight, oracle_critical_wave, oracle_espousable, oracle_loaded,
    random_bipartite_graph,
};
use tightload::loader::{
    construct_injection_finite, construct_injection_lazy, proudly_diagonalize, verify_injection,
    verify_trace, DiagonalizeOutcome, InjectionOutcome, LazyInjection,
};
use tightload::loader::is_proudly_diagonal;
use tightload::matching::{
    critical_wave_alternating, critical_wave_enumeration, espouse_lazy, find_impediment,
    find_ps_obstruction_finite, has_alternating_ray, BipartiteGraph, EspousalOutcome, LazyGraph,
    Matching, RaySearch,
};
use tightload::matrix::{FiniteMatrix, StubbornSearch, Tightness};
use tightload::numerics::{rat_int, AllOnes, SparseVector};

/// Fixed-seed corpus of ≥500 tight matrices, n ≤ 8, extra ≤ 4.
fn tight_corpus() -> Vec<(u64, FiniteMatrix)> {
    (0..500u64)
        .map(|seed| {
            let n = 1 + (seed % 8) as usize;
            let extra = (seed % 5) as usize;
            (seed, family_random_tight(seed, n, extra))
        })
        .collect()
}

/// Mixed corpus: tight generators interleaved with unconstrained sparse ones.
fn mixed_corpus() -> Vec<FiniteMatrix> {
    let mut out = Vec::new();
    for seed in 0..250u64 {
        let n = 1 + (seed % 8) as usize;
        out.push(family_random_tight(seed, n, (seed % 5) as usize));
        let rows = 1 + (seed % 9) as usize;
        let cols = 1 + ((seed / 3) % 8) as usize;
        let density = 20 + (seed % 7) * 10;
        out.push(family_random_sparse(seed, rows, cols, density));
    }
    out
}

#[test]
fn criterion_1_main_theorem_finite() {
    let start = Instant::now();
    for (seed, a) in tight_corpus() {
        assert!(
            a.is_tight().is_tight(),
            "criterion 1: FAIL seed {seed} generated a non-tight matrix"
        );
        let InjectionOutcome::Loaded(phi) = construct_injection_finite(&a) else {
            panic!("criterion 1: FAIL seed {seed}: no injection for tight matrix");
        };
        assert_eq!(phi.len(), a.n_cols(), "criterion 1: FAIL seed {seed}: injection not total");
        assert_eq!(
            verify_injection(&a, &phi),
            Ok(true),
            "criterion 1: FAIL seed {seed}: injection rejected"
        );
        if a.n_cols() <= 6 {
            assert!(
                oracle_loaded(&a).unwrap().is_some(),
                "criterion 1: FAIL seed {seed}: oracle denies loadedness"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "criterion 1: FAIL runtime {elapsed:?} exceeds 60 s"
    );
    println!("criterion 1: pass (500 matrices in {elapsed:?})");
}

#[test]
fn criterion_2_equivalence_theorem() {
    for (idx, a) in mixed_corpus().into_iter().enumerate() {
        let kernel_trivial = a.kernel_basis().is_empty();
        let all_units = (1..=a.n_cols()).all(|j| match a.express_unit_vector(j) {
            Some(c) => c.verify(&a),
            None => false,
        });
        let inverse = a.left_inverse();
        let has_inverse = inverse.is_some();
        assert!(
            kernel_trivial == all_units && all_units == has_inverse,
            "criterion 2: FAIL matrix {idx}: predicates disagree \
             (kernel {kernel_trivial}, units {all_units}, inverse {has_inverse})"
        );
        if let Some(z) = inverse {
            assert!(
                a.verify_left_inverse(&z),
                "criterion 2: FAIL matrix {idx}: left inverse rejected"
            );
        }
    }
    println!("criterion 2: pass (500 matrices)");
}

#[test]
fn criterion_3_diagonalization() {
    for (idx, a) in mixed_corpus().into_iter().enumerate() {
        let tight = a.is_tight().is_tight();
        match proudly_diagonalize(&a, a.n_cols()).unwrap() {
            DiagonalizeOutcome::Trace(trace) => {
                assert!(tight, "criterion 3: FAIL matrix {idx}: trace for non-tight matrix");
                assert!(
                    verify_trace(&a, &trace),
                    "criterion 3: FAIL matrix {idx}: trace rejected"
                );
                let last = trace
                    .final_checkpoint()
                    .cloned()
                    .unwrap_or_else(|| a.clone());
                assert!(
                    is_proudly_diagonal(&last),
                    "criterion 3: FAIL matrix {idx}: final checkpoint not proudly diagonal"
                );
            }
            DiagonalizeOutcome::NotTight(w) => {
                assert!(!tight, "criterion 3: FAIL matrix {idx}: NotTight for tight matrix");
                assert!(w.verify(&a), "criterion 3: FAIL matrix {idx}: bad kernel witness");
            }
        }
    }
    println!("criterion 3: pass (500 matrices)");
}

#[test]
fn criterion_4_donjuan() {
    let dj = family_donjuan();
    for i in 1..=100 {
        let row = dj.row(i).unwrap();
        assert!(
            row.dot(&AllOnes).unwrap().is_zero(),
            "criterion 4: FAIL row {i} does not vanish on the all-ones assignment"
        );
    }

    match tightload::matrix::stubborn_search_lazy(&dj, 1, 10_000) {
        StubbornSearch::Exhausted { rows_consumed } => {
            assert_eq!(rows_consumed, 10_000, "criterion 4: FAIL budget not fully consumed");
        }
        StubbornSearch::Found(_) => {
            panic!("criterion 4: FAIL column 1 must never become stubborn");
        }
    }

    for (rows, cols) in [(3usize, 4usize), (5, 6)] {
        let prefix = dj.prefix(rows, cols).unwrap();
        assert!(
            oracle_loaded(&prefix).unwrap().is_none(),
            "criterion 4: FAIL {rows}x{cols} truncation should not be loaded"
        );
    }

    let g = LazyGraph::from_matrix(family_donjuan());
    match espouse_lazy(&g, 3, 200) {
        EspousalOutcome::Failure { stage, reason, .. } => {
            assert!(
                reason.contains("collision"),
                "criterion 4: FAIL espousal failed without a collision: {reason}"
            );
            assert!(stage >= 1, "criterion 4: FAIL stage must be positive");
        }
        EspousalOutcome::Matched(_) => {
            panic!("criterion 4: FAIL G_A of the donjuan system is not espousable");
        }
    }
    println!("criterion 4: pass");
}

#[test]
fn criterion_5_impediment_chain() {
    let chain = family_impediment_chain();

    let LazyInjection::Complete(full) = construct_injection_lazy(&chain, 50, 200) else {
        panic!("criterion 5: FAIL lazy injection did not complete at k = 50");
    };
    assert_eq!(
        verify_injection(&chain, &full),
        Ok(true),
        "criterion 5: FAIL injection rejected"
    );
    for k in 1..50 {
        let LazyInjection::Complete(partial) = construct_injection_lazy(&chain, k, 200) else {
            panic!("criterion 5: FAIL lazy injection did not complete at k = {k}");
        };
        assert!(
            partial.is_restriction_of(&full),
            "criterion 5: FAIL injection for k = {k} is not prefix-stable"
        );
    }

    let g = LazyGraph::from_matrix(family_impediment_chain());
    let mut wave = Matching::empty();
    for rows in [6usize, 10, 20] {
        let imp = tightload::matching::find_impediment_lazy(&g, rows)
            .unwrap_or_else(|| panic!("criterion 5: FAIL no impediment within {rows} rows"));
        assert_eq!(imp.vertex, 1, "criterion 5: FAIL impeded vertex must be x_1");
        for (m, w) in imp.wave.pairs() {
            assert_eq!(m, w + 1, "criterion 5: FAIL wave edge ({m},{w}) is not (x_(j+1),eq_j)");
        }
        wave = imp.wave;
    }

    match has_alternating_ray(&g, &wave, 1, 20) {
        RaySearch::FoundPath(path) => {
            assert!(path.len() >= 20, "criterion 5: FAIL path shorter than the bound");
        }
        RaySearch::NoneWithinBound => {
            panic!("criterion 5: FAIL alternating ray prefix must exist from x_1");
        }
    }

    for n in 1..=10usize {
        let truncated = chain.prefix(2 * n, 2 * n + 1).unwrap();
        let Tightness::NotTight(w) = truncated.is_tight() else {
            panic!("criterion 5: FAIL 2n-row truncation (n = {n}) cannot be tight");
        };
        let expected =
            SparseVector::from_entries([(2 * n, rat_int(1)), (2 * n + 1, rat_int(-1))]);
        assert_eq!(
            w.x, expected,
            "criterion 5: FAIL wrong kernel witness at n = {n}"
        );
    }
    println!("criterion 5: pass");
}

/// Graphs shared by criteria 6–8.
fn matching_corpus() -> Vec<BipartiteGraph> {
    let mut graphs = Vec::new();
    for m in 1..=4usize {
        for w in 1..=4usize {
            for mask in 0..(1u64 << (m * w)) {
                graphs.push(bipartite_graph_from_mask(m, w, mask));
            }
        }
    }
    for seed in 0..2000u64 {
        let m = 1 + (seed % 7) as usize;
        let w = 1 + ((seed / 7) % 7) as usize;
        let density = 15 + (seed % 8) * 10;
        graphs.push(random_bipartite_graph(seed, m, w, density));
    }
    graphs
}

#[test]
fn criterion_6_ps_theorem_desk_scale() {
    let graphs = matching_corpus();
    let count = graphs.len();
    for (idx, g) in graphs.into_iter().enumerate() {
        let espousable = oracle_espousable(&g).unwrap();
        let obstruction = find_ps_obstruction_finite(&g).unwrap();
        assert_eq!(
            espousable,
            obstruction.is_none(),
            "criterion 6: FAIL graph {idx}: espousable = {espousable} but obstruction = {:?}",
            obstruction.map(|c| c.impediment)
        );
    }
    println!("criterion 6: pass ({count} graphs)");
}

#[test]
fn criterion_7_challenge_property() {
    let mut checked = 0usize;
    for a in mixed_corpus() {
        let g = BipartiteGraph::from_matrix(&a);
        if let Some(cert) = find_ps_obstruction_finite(&g).unwrap() {
            checked += 1;
            match a.is_tight() {
                Tightness::NotTight(_) => {}
                Tightness::Tight => panic!(
                    "criterion 7: FAIL COUNTEREXAMPLE — obstruction at vertex {} on a TIGHT \
                     matrix; this falsifies the main theorem:\n{a:?}",
                    cert.impediment.vertex
                ),
            }
        }
    }
    println!("criterion 7: pass ({checked} obstructed matrices, all non-tight)");
}

#[test]
fn criterion_8_criticality_cross_validation() {
    // The waves that criteria 5–6 exercise: impediment waves of the finite
    // corpus, plus explored prefixes of the impediment chain.
    let mut pairs: Vec<(BipartiteGraph, Matching)> = Vec::new();
    for g in matching_corpus() {
        if let Some(imp) = find_impediment(&g) {
            pairs.push((g, imp.wave));
        }
    }
    let lazy = LazyGraph::from_matrix(family_impediment_chain());
    for rows in [6usize, 10] {
        let explored = lazy.explore(rows);
        if let Some(imp) = find_impediment(&explored) {
            pairs.push((explored, imp.wave));
        }
    }

    let mut tested = 0usize;
    for (idx, (g, f)) in pairs.into_iter().enumerate() {
        if f.m_side().len() > 7 {
            continue;
        }
        let by_enumeration = critical_wave_enumeration(&g, &f);
        let by_alternation = critical_wave_alternating(&g, &f);
        let by_oracle = oracle_critical_wave(&g, &f).unwrap();
        assert!(
            by_enumeration == by_alternation && by_alternation == by_oracle,
            "criterion 8: FAIL pair {idx}: enumeration {by_enumeration}, \
             alternating {by_alternation}, oracle {by_oracle}"
        );
        tested += 1;
    }
    assert!(tested > 100, "criterion 8: FAIL too few wave pairs exercised ({tested})");
    println!("criterion 8: pass ({tested} (G,F) pairs)");
}

struct CliRun {
    code: i32,
    stdout: Vec<u8>,
    stderr: Vec<u8>,
}

fn run_cli(args: &[&str]) -> CliRun {
    let out = Command::new(env!("CARGO_BIN_EXE_tightload"))
        .args(args)
        .env("TL_BUDGET_DEFAULT", "1000")
        .output()
        .expect("binary runs");
    CliRun {
        code: out.status.code().expect("exit code"),
        stdout: out.stdout,
        stderr: out.stderr,
    }
}

#[test]
fn criterion_9_cli_contract() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        path.to_str().unwrap().to_string()
    };
    let identity = write("id.rfs", "rfs-matrix 1\nrows 2 cols 2\n1 1 1\n2 2 1\n");
    let chain = write("chain.rfs", "rfs-matrix 1\nrows lazy:impediment-chain cols lazy\n");
    let donjuan = write("dj.rfs", "rfs-matrix 1\nrows lazy:donjuan cols lazy\n");

    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["check-tight", &identity], 0),
        (vec!["inject", "--lazy", "--cols", "4", "--json", &chain], 0),
        (vec!["inject", "--lazy", "--cols", "1", "--budget", "100", &donjuan], 2),
    ];

    for (args, expected_code) in &cases {
        let first = run_cli(args);
        let second = run_cli(args);
        assert_eq!(
            first.code, *expected_code,
            "criterion 9: FAIL {args:?}: exit {} (expected {expected_code})",
            first.code
        );
        assert_eq!(first.code, second.code, "criterion 9: FAIL {args:?}: exit codes differ");
        assert_eq!(
            first.stdout, second.stdout,
            "criterion 9: FAIL {args:?}: stdout not byte-identical"
        );
        assert_eq!(
            first.stderr, second.stderr,
            "criterion 9: FAIL {args:?}: stderr not byte-identical"
        );
    }

    let inject = run_cli(&cases[1].0);
    let value: serde_json::Value = serde_json::from_slice(&inject.stdout).unwrap();
    assert_eq!(
        value["pairs"],
        serde_json::json!([[1, 1], [2, 2], [3, 3], [4, 4]]),
        "criterion 9: FAIL wrong injection pairs"
    );
    assert_eq!(value["v"], 1);
    assert_eq!(value["kind"], "injection");

    // Round-trip: an emitted certificate re-verifies through the verify verb.
    let cert_path = write("phi.json", &String::from_utf8(inject.stdout).unwrap());
    let verify = run_cli(&["verify", &chain, &cert_path]);
    assert_eq!(verify.code, 0, "criterion 9: FAIL emitted certificate must re-verify");

    println!("criterion 9: pass");
}
