use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tightload::corpus::{FamilyInstance, FamilySpec};
use tightload::io::{self, ParsedMatrix};
use tightload::loader::{
    construct_injection_finite, construct_injection_lazy, proudly_diagonalize, DiagonalizeOutcome,
    InjectionOutcome, LazyInjection,
};
use tightload::matching::{
    espouse_lazy, find_ps_obstruction_finite, hall_violator, is_espousable_finite, max_matching,
    to_dot, BipartiteGraph, CriticalityEvidence, EspousalOutcome, LazyGraph,
    ObstructionCertificate,
};
use tightload::matrix::{LazyMatrix, Tightness};

const EXIT_YES: u8 = 0;
const EXIT_NO: u8 = 1;
const EXIT_UNDECIDED: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "tightload", version, about = "Exact tightness and loading analysis for sparse rational systems")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Matrix file in rfs-matrix format.
    input: PathBuf,
    /// Emit certificates as JSON instead of human-readable text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct LazyOpts {
    /// Treat the input as a lazy stream even when it is finite.
    #[arg(long)]
    lazy: bool,
    /// Number of leading columns to process in lazy mode.
    #[arg(long)]
    cols: Option<usize>,
    /// Row budget for lazy analyses. Defaults to $TL_BUDGET_DEFAULT or 1000.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// Decide tightness of a finite matrix.
    CheckTight {
        #[command(flatten)]
        common: Common,
        /// Truncate a lazy input to this many rows first.
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
    },
    /// Construct a loading injection.
    Inject {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        lazy: LazyOpts,
    },
    /// Compute a left inverse Z with ZA = I.
    LeftInverse {
        #[command(flatten)]
        common: Common,
    },
    /// Proudly row-diagonalize the leading columns.
    Diagonalize {
        #[command(flatten)]
        common: Common,
        /// Number of columns to fix (defaults to all).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Export the incidence graph G_A as DOT.
    Graph {
        #[command(flatten)]
        common: Common,
        /// Write DOT here instead of stdout.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Rows to explore for a lazy input.
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Search for a Podewski-Steffens obstruction in G_A.
    Obstruct {
        #[command(flatten)]
        common: Common,
        /// Rows to explore for a lazy input.
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Find a matching of G_A covering the column side.
    Espouse {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        lazy: LazyOpts,
    },
    /// Print a named corpus family as an rfs-matrix file.
    Family {
        /// Family name: donjuan, impediment-chain, identity, random-tight, random-sparse.
        name: String,
        /// Named integer parameter, repeatable: --param n=5
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        /// Random seed shorthand for --param seed=S.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-verify a JSON certificate against a matrix.
    Verify {
        /// Matrix file in rfs-matrix format.
        input: PathBuf,
        /// Certificate JSON file.
        certificate: PathBuf,
    },
}

struct UsageError(String);

impl<T: std::fmt::Display> From<T> for UsageError {
    fn from(e: T) -> Self {
        UsageError(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own help/version paths still print to stdout with code 0.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(UsageError(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn load(path: &PathBuf) -> Result<ParsedMatrix, UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    Ok(io::parse_matrix_text(&text)?)
}

fn default_budget(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            std::env::var("TL_BUDGET_DEFAULT")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(1000)
}

fn emit(json: bool, value: &serde_json::Value, human: &str) {
    if json {
        println!("{value}");
    } else {
        println!("{human}");
    }
}

/// Truncates a lazy matrix when explicit bounds are given; finite inputs
/// pass through.
fn force_finite(
    matrix: ParsedMatrix,
    rows: Option<usize>,
    cols: Option<usize>,
) -> Result<tightload::FiniteMatrix, UsageError> {
    match matrix {
        ParsedMatrix::Finite(a) => Ok(a),
        ParsedMatrix::Lazy(a) => {
            let (Some(rows), Some(cols)) = (rows, cols) else {
                return Err(UsageError(
                    "lazy input needs --rows and --cols to truncate".into(),
                ));
            };
            Ok(a.prefix(rows, cols)?)
        }
    }
}

fn obstruction_human(cert: &ObstructionCertificate) -> String {
    let wave: Vec<String> = cert
        .impediment
        .wave
        .pairs()
        .map(|(m, w)| format!("(c{m},r{w})"))
        .collect();
    let evidence = match &cert.evidence {
        CriticalityEvidence::Finite { .. } => "critical (finite wave)".to_string(),
        CriticalityEvidence::Partial { explored_rows } => {
            format!("no escape within {explored_rows} explored rows")
        }
    };
    format!(
        "obstruction: vertex c{} impeded by wave {{{}}}; {evidence}",
        cert.impediment.vertex,
        wave.join(", ")
    )
}

fn run(cli: Cli) -> Result<u8, UsageError> {
    match cli.verb {
        Verb::CheckTight { common, rows, cols } => {
            let a = force_finite(load(&common.input)?, rows, cols)?;
            match a.is_tight() {
                Tightness::Tight => {
                    emit(common.json, &serde_json::json!({"v": 1, "tight": true}), "tight");
                    Ok(EXIT_YES)
                }
                Tightness::NotTight(w) => {
                    emit(
                        common.json,
                        &io::kernel_witness_to_json(&w),
                        &format!("not tight: kernel vector nonzero at column {}", w.nonzero_index),
                    );
                    Ok(EXIT_NO)
                }
            }
        }
        Verb::Inject { common, lazy } => {
            let matrix = load(&common.input)?;
            let lazy_matrix = match (&matrix, lazy.lazy) {
                (ParsedMatrix::Lazy(a), _) => Some(a.clone()),
                (ParsedMatrix::Finite(a), true) => Some(LazyMatrix::from_finite(a)),
                (ParsedMatrix::Finite(_), false) => None,
            };
            if let Some(a) = lazy_matrix {
                let Some(cols) = lazy.cols else {
                    return Err(UsageError("lazy injection needs --cols".into()));
                };
                let budget = default_budget(lazy.budget);
                match construct_injection_lazy(&a, cols, budget) {
                    LazyInjection::Complete(phi) => {
                        let pairs: Vec<String> =
                            phi.iter().map(|(j, i)| format!("{j}->{i}")).collect();
                        emit(
                            common.json,
                            &io::injection_to_json(&phi),
                            &format!("loaded on columns 1..={cols}: {}", pairs.join(", ")),
                        );
                        Ok(EXIT_YES)
                    }
                    LazyInjection::Exhausted {
                        step,
                        rows_consumed,
                        partial,
                    } => {
                        emit(
                            common.json,
                            &serde_json::json!({
                                "v": 1,
                                "kind": "exhausted",
                                "step": step,
                                "rows_consumed": rows_consumed,
                                "partial": io::injection_to_json(&partial),
                            }),
                            &format!(
                                "undecided: budget exhausted at column {step} after {rows_consumed} rows"
                            ),
                        );
                        Ok(EXIT_UNDECIDED)
                    }
                }
            } else {
                let ParsedMatrix::Finite(a) = matrix else { unreachable!() };
                match construct_injection_finite(&a) {
                    InjectionOutcome::Loaded(phi) => {
                        let pairs: Vec<String> =
                            phi.iter().map(|(j, i)| format!("{j}->{i}")).collect();
                        emit(
                            common.json,
                            &io::injection_to_json(&phi),
                            &format!("loaded: {}", pairs.join(", ")),
                        );
                        Ok(EXIT_YES)
                    }
                    InjectionOutcome::NotTight(w) => {
                        emit(
                            common.json,
                            &io::kernel_witness_to_json(&w),
                            &format!("not tight: kernel vector nonzero at column {}", w.nonzero_index),
                        );
                        Ok(EXIT_NO)
                    }
                }
            }
        }
        Verb::LeftInverse { common } => {
            let a = force_finite(load(&common.input)?, None, None)?;
            match a.left_inverse() {
                Some(z) => {
                    emit(
                        common.json,
                        &io::left_inverse_to_json(&z),
                        &format!("left inverse found ({}x{})", z.z.n_rows(), z.z.n_cols()),
                    );
                    Ok(EXIT_YES)
                }
                None => {
                    let Tightness::NotTight(w) = a.is_tight() else {
                        return Err(UsageError(
                            "internal: tight matrix without a left inverse".into(),
                        ));
                    };
                    emit(
                        common.json,
                        &io::kernel_witness_to_json(&w),
                        &format!("not tight: kernel vector nonzero at column {}", w.nonzero_index),
                    );
                    Ok(EXIT_NO)
                }
            }
        }
        Verb::Diagonalize { common, steps } => {
            let a = force_finite(load(&common.input)?, None, None)?;
            let k = steps.unwrap_or_else(|| a.n_cols());
            match proudly_diagonalize(&a, k)? {
                DiagonalizeOutcome::Trace(trace) => {
                    emit(
                        common.json,
                        &io::trace_to_json(&trace),
                        &format!(
                            "diagonalized {k} column(s) in {} operation(s) over {} step(s)",
                            trace.op_count(),
                            trace.steps.len()
                        ),
                    );
                    Ok(EXIT_YES)
                }
                DiagonalizeOutcome::NotTight(w) => {
                    emit(
                        common.json,
                        &io::kernel_witness_to_json(&w),
                        &format!("not tight: kernel vector nonzero at column {}", w.nonzero_index),
                    );
                    Ok(EXIT_NO)
                }
            }
        }
        Verb::Graph { common, dot, rows } => {
            let g = match load(&common.input)? {
                ParsedMatrix::Finite(a) => BipartiteGraph::from_matrix(&a),
                ParsedMatrix::Lazy(a) => {
                    let Some(rows) = rows else {
                        return Err(UsageError("lazy input needs --rows to explore".into()));
                    };
                    LazyGraph::from_matrix(a).explore(rows)
                }
            };
            let text = to_dot(&g, None);
            match dot {
                Some(path) => {
                    std::fs::write(&path, text)
                        .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(EXIT_YES)
        }
        Verb::Obstruct { common, rows } => match load(&common.input)? {
            ParsedMatrix::Finite(a) => {
                let g = BipartiteGraph::from_matrix(&a);
                match find_ps_obstruction_finite(&g)? {
                    None => {
                        emit(
                            common.json,
                            &serde_json::json!({"v": 1, "obstructed": false}),
                            "no obstruction: graph is espousable",
                        );
                        Ok(EXIT_YES)
                    }
                    Some(cert) => {
                        emit(common.json, &io::obstruction_to_json(&cert), &obstruction_human(&cert));
                        Ok(EXIT_NO)
                    }
                }
            }
            ParsedMatrix::Lazy(a) => {
                let Some(rows) = rows else {
                    return Err(UsageError("lazy input needs --rows to explore".into()));
                };
                let g = LazyGraph::from_matrix(a);
                match tightload::matching::find_impediment_lazy(&g, rows) {
                    Some(imp) => {
                        let cert = ObstructionCertificate {
                            impediment: imp,
                            evidence: CriticalityEvidence::Partial { explored_rows: rows },
                        };
                        emit(common.json, &io::obstruction_to_json(&cert), &obstruction_human(&cert));
                        Ok(EXIT_NO)
                    }
                    None => {
                        emit(
                            common.json,
                            &serde_json::json!({"v": 1, "kind": "exhausted", "explored_rows": rows}),
                            &format!("undecided: no impediment within {rows} explored rows"),
                        );
                        Ok(EXIT_UNDECIDED)
                    }
                }
            }
        },
        Verb::Espouse { common, lazy } => {
            let matrix = load(&common.input)?;
            match matrix {
                ParsedMatrix::Finite(a) if !lazy.lazy => {
                    let g = BipartiteGraph::from_matrix(&a);
                    if is_espousable_finite(&g) {
                        let f = max_matching(&g);
                        emit(
                            common.json,
                            &io::matching_to_json(&f),
                            &format!("espousable: matching of size {}", f.len()),
                        );
                        Ok(EXIT_YES)
                    } else {
                        let t = hall_violator(&g)
                            .ok_or("internal: inespousable graph without Hall violator")?;
                        let cols: Vec<String> = t.iter().map(|c| format!("c{c}")).collect();
                        emit(
                            common.json,
                            &io::hall_violator_to_json(&t),
                            &format!("not espousable: Hall violator {{{}}}", cols.join(", ")),
                        );
                        Ok(EXIT_NO)
                    }
                }
                matrix => {
                    let a = match matrix {
                        ParsedMatrix::Lazy(a) => a,
                        ParsedMatrix::Finite(a) => LazyMatrix::from_finite(&a),
                    };
                    let Some(cols) = lazy.cols else {
                        return Err(UsageError("lazy espousal needs --cols".into()));
                    };
                    let budget = default_budget(lazy.budget);
                    let g = LazyGraph::from_matrix(a);
                    match espouse_lazy(&g, cols, budget) {
                        EspousalOutcome::Matched(f) => {
                            emit(
                                common.json,
                                &io::matching_to_json(&f),
                                &format!("espoused columns 1..={cols}: matching of size {}", f.len()),
                            );
                            Ok(EXIT_YES)
                        }
                        EspousalOutcome::Failure {
                            stage,
                            reason,
                            matched,
                        } => {
                            emit(
                                common.json,
                                &serde_json::json!({
                                    "v": 1,
                                    "kind": "espousal-failure",
                                    "stage": stage,
                                    "reason": reason,
                                    "matched": io::matching_to_json(&matched),
                                }),
                                &format!("undecided: stage {stage} failed ({reason})"),
                            );
                            Ok(EXIT_UNDECIDED)
                        }
                    }
                }
            }
        }
        Verb::Family { name, params, seed } => {
            let mut spec = FamilySpec::new(&name);
            if let Some(seed) = seed {
                spec = spec.with("seed", seed);
            }
            for p in params {
                let (key, value) = p
                    .split_once('=')
                    .ok_or_else(|| format!("bad --param {p:?}, expected KEY=VALUE"))?;
                let value: u64 = value
                    .parse()
                    .map_err(|_| format!("bad --param value in {p:?}"))?;
                spec = spec.with(key, value);
            }
            match spec.instantiate()? {
                FamilyInstance::Finite(a) => print!("{}", io::matrix_to_text(&a)),
                FamilyInstance::Lazy(_) => print!("{}", io::lazy_matrix_text(&name)),
            }
            Ok(EXIT_YES)
        }
        Verb::Verify { input, certificate } => {
            let matrix = load(&input)?;
            let text = std::fs::read_to_string(&certificate)
                .map_err(|e| UsageError(format!("{}: {e}", certificate.display())))?;
            let cert: serde_json::Value = serde_json::from_str(&text)?;
            if io::verify_certificate(&matrix, &cert)? {
                println!("certificate verifies");
                Ok(EXIT_YES)
            } else {
                println!("certificate REJECTED");
                Ok(EXIT_NO)
            }
        }
    }
}
