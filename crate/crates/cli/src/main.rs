//! Batch front end for the selection pipeline. Five subcommands cover the
//! full workflow: `gen` builds a synthetic benchmark, `select` runs a
//! selection algorithm over a chosen independence backend, `eval` trains and
//! scores classifiers on the selection, `bench` sweeps test-count curves,
//! and `dsep` answers single separation queries against a graph.
//!
//! Every command is a pure function of its input files, flags, and seed;
//! re-running writes byte-identical outputs. Errors leave a one-line JSON
//! object on stderr and a nonzero exit code.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use fairsel_core::ci::{CiTester, FisherZ, GTest, OracleCi};
use fairsel_core::data::{Dataset, RolesFile};
use fairsel_core::graph::{Dag, DagFile};
use fairsel_core::logistic::{accuracy, train, LogRegModel, TrainConfig};
use fairsel_core::metrics::{
    abs_odds_difference, cmi, default_intervention_values, interventional_gap, FairnessReport,
    CMI_DEFAULT_BINS,
};
use fairsel_core::scm::{gen_benchmark, gen_benchmark_exact, Benchmark, ScmFile, ScmSpec};
use fairsel_core::selector::{
    bench_counts, grp_sel, seq_sel, write_bench_csv, BenchSweep, SelectionResult,
};

#[derive(Parser)]
#[command(
    name = "fairsel",
    version,
    about = "Causally fair feature selection over a known causal graph"
)]
struct RunConfig {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic benchmark: model spec, sampled data, roles,
    /// ground-truth fair set.
    Gen(GenArgs),
    /// Select fair features from a graph or a dataset.
    Select(SelectArgs),
    /// Train classifiers on a selection and report fairness metrics.
    Eval(EvalArgs),
    /// Sweep selector test counts over benchmark grids into a CSV.
    Bench(BenchArgs),
    /// Query d-separation between node sets in a graph spec.
    Dsep(DsepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    #[value(name = "oracle")]
    Oracle,
    #[value(name = "fisher_z")]
    FisherZ,
    #[value(name = "g_test")]
    GTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    #[value(name = "seqsel")]
    SeqSel,
    #[value(name = "grpsel")]
    GrpSel,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Argument(String),
    #[error("cannot read {0}: {1}")]
    ReadFile(PathBuf, std::io::Error),
    #[error("cannot parse {0}: {1}")]
    ParseFile(PathBuf, serde_json::Error),
    #[error(transparent)]
    Core(#[from] fairsel_core::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Argument(_) => "argument",
            CliError::ReadFile(_, _) => "io",
            CliError::ParseFile(_, _) => "parse",
            CliError::Core(e) => match e {
                fairsel_core::Error::Graph(_) => "graph",
                fairsel_core::Error::Data(_) => "data",
                fairsel_core::Error::Scm(_) => "model",
                fairsel_core::Error::Ci(_) => "ci_test",
                fairsel_core::Error::Select(_) => "selection",
                fairsel_core::Error::Metrics(_) => "metrics",
                fairsel_core::Error::Train(_) => "training",
                fairsel_core::Error::Io(_) => "io",
                fairsel_core::Error::Json(_) => "parse",
                fairsel_core::Error::Csv(_) => "csv",
            },
        }
    }
}

fn main() -> ExitCode {
    // Help and version requests exit cleanly; every real argument problem
    // goes through the same JSON error channel as runtime failures.
    let config = match RunConfig::try_parse() {
        Ok(config) => config,
        Err(err)
            if matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            err.exit()
        }
        Err(err) => {
            return fail(&CliError::Argument(err.to_string()));
        }
    };
    match run(config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail(&err),
    }
}

fn fail(err: &CliError) -> ExitCode {
    let payload = serde_json::json!({ "kind": err.kind(), "error": err.to_string() });
    eprintln!("{payload}");
    ExitCode::FAILURE
}

fn run(config: RunConfig) -> Result<(), CliError> {
    match config.command {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Select(args) => cmd_select(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Dsep(args) => cmd_dsep(args),
    }
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Argument(format!(
            "alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::ReadFile(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::ParseFile(path.to_path_buf(), e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(path, text).map_err(fairsel_core::Error::Io)?;
    Ok(())
}

// A full model spec parses as a plain graph file too: node mechanism fields
// are simply ignored, so `dsep` and the oracle backend accept either format.
fn load_dag(path: &Path) -> Result<Dag, CliError> {
    let file: DagFile = read_json(path)?;
    Ok(Dag::from_file(&file).map_err(fairsel_core::Error::from)?)
}

fn load_spec(path: &Path) -> Result<ScmSpec, CliError> {
    let file: ScmFile = read_json(path)?;
    Ok(ScmSpec::from_file(&file).map_err(fairsel_core::Error::from)?)
}

#[derive(Args)]
struct GenArgs {
    /// Number of candidate features.
    #[arg(long)]
    n_features: usize,
    /// Probability that each candidate is biased.
    #[arg(long, conflicts_with = "k")]
    p: Option<f64>,
    /// Exact number of biased candidates.
    #[arg(long)]
    k: Option<usize>,
    /// Rows to sample.
    #[arg(long)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Ground truth emitted next to generated data.
#[derive(Serialize, Deserialize)]
struct GroundTruth {
    fair_set: BTreeSet<String>,
    clean: BTreeSet<String>,
    biased: BTreeSet<String>,
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    if args.rows == 0 {
        return Err(CliError::Argument("rows must be positive".to_string()));
    }
    let bench: Benchmark = match (args.p, args.k) {
        (Some(p), None) => gen_benchmark(args.n_features, p, args.seed)
            .map_err(fairsel_core::Error::from)?,
        (None, Some(k)) => gen_benchmark_exact(args.n_features, k, args.seed)
            .map_err(fairsel_core::Error::from)?,
        (None, None) => {
            return Err(CliError::Argument(
                "provide --p (biased fraction) or --k (biased count)".to_string(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects --p with --k"),
    };
    let data = bench
        .spec
        .sample(args.rows, args.seed)
        .map_err(fairsel_core::Error::from)?;

    fs::create_dir_all(&args.out).map_err(fairsel_core::Error::Io)?;
    write_json(&bench.spec.to_file(), &args.out.join("spec.json"))?;
    data.write_csv(&args.out.join("data.csv"))
        .map_err(CliError::Core)?;
    data.write_roles(&args.out.join("roles.json"))
        .map_err(CliError::Core)?;
    let truth = GroundTruth {
        fair_set: bench
            .spec
            .dag()
            .oracle_fair_set()
            .map_err(fairsel_core::Error::from)?,
        clean: bench.clean.clone(),
        biased: bench.biased.clone(),
    };
    write_json(&truth, &args.out.join("fair_set.json"))?;
    Ok(())
}

#[derive(Args)]
struct SelectArgs {
    /// Graph or model spec JSON; required by the oracle backend.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Dataset CSV; required by the data backends.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Roles sidecar JSON; required with --data, optional with --spec.
    #[arg(long)]
    roles: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, value_enum)]
    backend: Backend,
    #[arg(long, value_enum, default_value_t = Algo::SeqSel)]
    algo: Algo,
    /// Search admissible subsets in the first phase (sequential only).
    #[arg(long)]
    subset_mode: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// The selected sets, written as `selection.json`.
#[derive(Serialize, Deserialize)]
struct SelectionFile {
    c1: BTreeSet<String>,
    c2: BTreeSet<String>,
    selected: BTreeSet<String>,
}

#[derive(Serialize)]
struct SelectionSummary {
    algorithm: String,
    backend: String,
    alpha: f64,
    subset_mode: bool,
    seed: u64,
    test_count: usize,
    phase1_tests: usize,
    phase2_tests: usize,
}

fn run_algo(
    algo: Algo,
    tester: &dyn CiTester,
    roles: &RolesFile,
    alpha: f64,
    subset_mode: bool,
    seed: u64,
) -> Result<SelectionResult, CliError> {
    let result = match algo {
        Algo::SeqSel => seq_sel(tester, roles, alpha, subset_mode, seed),
        Algo::GrpSel => grp_sel(tester, roles, alpha, subset_mode, seed),
    };
    Ok(result.map_err(fairsel_core::Error::from)?)
}

fn cmd_select(args: SelectArgs) -> Result<(), CliError> {
    check_alpha(args.alpha)?;
    let (result, roles, backend_name) = match args.backend {
        Backend::Oracle => {
            let spec_path = args.spec.as_deref().ok_or_else(|| {
                CliError::Argument("the oracle backend needs --spec".to_string())
            })?;
            let dag = load_dag(spec_path)?;
            let roles = match &args.roles {
                Some(path) => Dataset::read_roles(path).map_err(CliError::Core)?,
                None => RolesFile::from_dag(&dag),
            };
            let tester = OracleCi { dag: &dag };
            let result = run_algo(
                args.algo,
                &tester,
                &roles,
                args.alpha,
                args.subset_mode,
                args.seed,
            )?;
            (result, roles, "oracle")
        }
        Backend::FisherZ | Backend::GTest => {
            let data_path = args.data.as_deref().ok_or_else(|| {
                CliError::Argument("data backends need --data".to_string())
            })?;
            let roles_path = args.roles.as_deref().ok_or_else(|| {
                CliError::Argument("data backends need --roles".to_string())
            })?;
            let roles = Dataset::read_roles(roles_path).map_err(CliError::Core)?;
            let data = Dataset::read_csv(data_path, &roles).map_err(CliError::Core)?;
            let (result, name) = if args.backend == Backend::FisherZ {
                let tester = FisherZ { data: &data };
                (
                    run_algo(
                        args.algo,
                        &tester,
                        &roles,
                        args.alpha,
                        args.subset_mode,
                        args.seed,
                    )?,
                    "fisher_z",
                )
            } else {
                let tester = GTest { data: &data };
                (
                    run_algo(
                        args.algo,
                        &tester,
                        &roles,
                        args.alpha,
                        args.subset_mode,
                        args.seed,
                    )?,
                    "g_test",
                )
            };
            (result, roles, name)
        }
    };

    fs::create_dir_all(&args.out).map_err(fairsel_core::Error::Io)?;
    let (phase1, phase2) = result.phase_counts(&roles.target);
    write_json(
        &SelectionFile {
            c1: result.c1.clone(),
            c2: result.c2.clone(),
            selected: result.selected.clone(),
        },
        &args.out.join("selection.json"),
    )?;
    result
        .write_trace_jsonl(&args.out.join("trace.jsonl"))
        .map_err(CliError::Core)?;
    write_json(
        &SelectionSummary {
            algorithm: match args.algo {
                Algo::SeqSel => "seqsel".to_string(),
                Algo::GrpSel => "grpsel".to_string(),
            },
            backend: backend_name.to_string(),
            alpha: args.alpha,
            subset_mode: args.subset_mode,
            seed: args.seed,
            test_count: result.test_count,
            phase1_tests: phase1,
            phase2_tests: phase2,
        },
        &args.out.join("summary.json"),
    )?;
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    /// Model spec JSON with mechanisms, used for interventional sampling.
    #[arg(long)]
    spec: PathBuf,
    /// Dataset CSV to train and test on.
    #[arg(long)]
    data: PathBuf,
    /// Roles sidecar JSON.
    #[arg(long)]
    roles: PathBuf,
    /// selection.json produced by the select command.
    #[arg(long)]
    selection: PathBuf,
    /// Monte-Carlo draws per intervention cell.
    #[arg(long, default_value_t = 20_000)]
    n_mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct EvalFile {
    a_only: FairnessReport,
    all: FairnessReport,
    selected: FairnessReport,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let spec = load_spec(&args.spec)?;
    let roles = Dataset::read_roles(&args.roles).map_err(CliError::Core)?;
    let data = Dataset::read_csv(&args.data, &roles).map_err(CliError::Core)?;
    let selection: SelectionFile = read_json(&args.selection)?;
    if roles.sensitive.len() != 1 {
        return Err(CliError::Argument(
            "fairness metrics need exactly one sensitive column".to_string(),
        ));
    }
    let n = data.n_rows();
    if n < 10 {
        return Err(CliError::Argument(format!(
            "need at least 10 rows to split into train and test, got {n}"
        )));
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(args.seed));
    let test_idx = idx.split_off((n as f64 * 0.7).round() as usize);
    let train_data = data.take_rows(&idx).map_err(fairsel_core::Error::from)?;
    let test_data = data
        .take_rows(&test_idx)
        .map_err(fairsel_core::Error::from)?;

    let a_features = roles.admissible.clone();
    let mut sel_features = a_features.clone();
    sel_features.extend(selection.selected.iter().cloned());
    let mut all_features = roles.sensitive.clone();
    all_features.extend(roles.admissible.iter().cloned());
    all_features.extend(roles.candidates.iter().cloned());

    let report = |features: &[String], gap_seed: u64| -> Result<FairnessReport, CliError> {
        let model: LogRegModel =
            train(&train_data, features, &roles.target, &TrainConfig::default())
                .map_err(fairsel_core::Error::from)?;
        let preds = model
            .predict(&test_data)
            .map_err(fairsel_core::Error::from)?;
        let truth = &test_data
            .column(&roles.target)
            .map_err(fairsel_core::Error::from)?
            .values;
        let s_col = test_data
            .column(&roles.sensitive[0])
            .map_err(fairsel_core::Error::from)?;
        let odds = abs_odds_difference(truth, &preds.labels, &s_col.values)
            .map_err(fairsel_core::Error::from)?;
        let mut yprime = s_col.clone();
        yprime.name = "yprime".to_string();
        yprime.values = preds.labels.clone();
        let a_cols: Vec<_> = roles
            .admissible
            .iter()
            .map(|a| test_data.column(a))
            .collect::<Result<_, _>>()
            .map_err(fairsel_core::Error::from)?;
        let cmi_nats = cmi(s_col, &yprime, &a_cols, CMI_DEFAULT_BINS)
            .map_err(fairsel_core::Error::from)?;
        let (a_values, s_values) =
            default_intervention_values(&spec).map_err(fairsel_core::Error::from)?;
        let gap = interventional_gap(&spec, &model, &a_values, &s_values, args.n_mc, gap_seed)
            .map_err(fairsel_core::Error::from)?;
        Ok(FairnessReport {
            accuracy: accuracy(&preds.labels, truth),
            abs_odds_difference: odds,
            cmi_nats,
            interventional_gap: gap.thresholded,
            interventional_gap_prob: gap.probability,
        })
    };

    let eval = EvalFile {
        a_only: report(&a_features, args.seed.wrapping_add(1))?,
        all: report(&all_features, args.seed.wrapping_add(2))?,
        selected: report(&sel_features, args.seed.wrapping_add(3))?,
    };
    fs::create_dir_all(&args.out).map_err(fairsel_core::Error::Io)?;
    write_json(&eval, &args.out.join("eval.json"))?;
    Ok(())
}

#[derive(Args)]
struct BenchArgs {
    /// Candidate counts to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    n_grid: Vec<usize>,
    /// Biased fractions to sweep, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "k")]
    p_grid: Vec<f64>,
    /// Fixed biased count across the n grid.
    #[arg(long)]
    k: Option<usize>,
    /// Number of seeds per grid point (0..seeds).
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let sweep = match (args.k, args.p_grid.is_empty()) {
        (Some(k), true) => BenchSweep::FixedBiased {
            n_grid: args.n_grid.clone(),
            k,
        },
        (None, false) => BenchSweep::Fractions {
            n_grid: args.n_grid.clone(),
            p_grid: args.p_grid.clone(),
        },
        (None, true) => {
            return Err(CliError::Argument(
                "provide --p-grid or --k to define the sweep".to_string(),
            ))
        }
        (Some(_), false) => unreachable!("clap rejects --k with --p-grid"),
    };
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let rows = bench_counts(&sweep, &seeds).map_err(fairsel_core::Error::from)?;
    fs::create_dir_all(&args.out).map_err(fairsel_core::Error::Io)?;
    write_bench_csv(&rows, &args.out.join("bench.csv")).map_err(CliError::Core)?;
    Ok(())
}

#[derive(Args)]
struct DsepArgs {
    /// Graph or model spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Left node set, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    x: Vec<String>,
    /// Right node set, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    y: Vec<String>,
    /// Conditioning set, comma separated.
    #[arg(long, value_delimiter = ',')]
    z: Vec<String>,
}

#[derive(Serialize)]
struct DsepAnswer {
    d_separated: bool,
    /// One open path when the sets are connected.
    path: Option<String>,
}

fn cmd_dsep(args: DsepArgs) -> Result<(), CliError> {
    let dag = load_dag(&args.spec)?;
    let separated = dag
        .d_separated(&args.x, &args.y, &args.z)
        .map_err(fairsel_core::Error::from)?;
    let path = if separated {
        None
    } else {
        dag.unblocked_path(&args.x, &args.y, &args.z)
            .map_err(fairsel_core::Error::from)?
            .map(|p| p.render(&dag))
    };
    let answer = DsepAnswer {
        d_separated: separated,
        path,
    };
    println!("{}", serde_json::to_string(&answer).expect("serializable"));
    Ok(())
}
