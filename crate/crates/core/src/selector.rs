//! The two selection algorithms, with full test-count instrumentation and
//! replayable traces.
//!
//! Both run the same two phases. Phase 1 finds `c1`, the candidates
//! independent of the sensitive set given the admissible set; those carry no
//! sensitive information beyond what the admissible variables already expose.
//! Phase 2 finds `c2`, the remaining candidates independent of the target
//! given the admissible set plus `c1`; those are sensitive-tainted but carry
//! no usable target signal, so keeping them is harmless. The selected set is
//! `c1 ∪ c2`.
//!
//! [`seq_sel`] tests candidates one at a time. [`grp_sel`] tests whole groups
//! and splits recursively on dependence, needing many fewer tests when the
//! excluded fraction is small. Under the graph oracle both return identical
//! sets; the group decomposition rule of the data backends preserves that
//! agreement statistically.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ci::{group_split, CiError, CiQuery, CiResult, CiTester, OracleCi};
use crate::data::RolesFile;
use crate::graph::SUBSET_SEARCH_LIMIT;
use crate::scm::{gen_benchmark, gen_benchmark_exact, ScmError};

#[derive(Debug, thiserror::Error)]
pub enum SelectError {
    #[error(transparent)]
    Ci(#[from] CiError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("roles name no sensitive column")]
    NoSensitive,
    #[error("roles name no target column")]
    NoTarget,
    #[error("column {0} appears under two roles")]
    RolesOverlap(String),
    #[error("subset search over {0} admissible variables exceeds the limit of {1}")]
    SubsetSearchTooLarge(usize, usize),
    #[error("group selection does not support subset mode")]
    SubsetModeUnsupported,
    #[error("benchmark grid is empty")]
    EmptyGrid,
}

/// One executed query and its outcome, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub query: CiQuery,
    pub result: CiResult,
}

/// Outcome of a selection run.
///
/// `test_count` counts logical queries: a group query is one test no matter
/// how many pairwise statistics it consumed, and always equals `trace.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub c1: BTreeSet<String>,
    pub c2: BTreeSet<String>,
    pub selected: BTreeSet<String>,
    pub test_count: usize,
    pub trace: Vec<TraceEntry>,
}

impl SelectionResult {
    fn assemble(c1: BTreeSet<String>, c2: BTreeSet<String>, trace: Vec<TraceEntry>) -> Self {
        let selected = c1.union(&c2).cloned().collect();
        SelectionResult {
            c1,
            c2,
            selected,
            test_count: trace.len(),
            trace,
        }
    }

    /// Number of phase-1 and phase-2 queries, told apart by the y-side:
    /// phase 2 queries the target, phase 1 queries the sensitive set.
    pub fn phase_counts(&self, target: &str) -> (usize, usize) {
        let phase2 = self
            .trace
            .iter()
            .filter(|e| e.query.y == [target.to_string()])
            .count();
        (self.trace.len() - phase2, phase2)
    }

    /// Writes the trace as JSON lines, one query/result pair per line.
    pub fn write_trace_jsonl(&self, path: &Path) -> crate::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for entry in &self.trace {
            serde_json::to_writer(&mut f, entry)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_trace_jsonl(path: &Path) -> crate::Result<Vec<TraceEntry>> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut out = Vec::new();
        for line in f.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }
}

// Validated role sets pulled out of the sidecar.
struct Problem {
    sensitive: Vec<String>,
    admissible: Vec<String>,
    candidates: Vec<String>,
    target: String,
}

impl Problem {
    fn from_roles(roles: &RolesFile) -> Result<Self, SelectError> {
        if roles.sensitive.is_empty() {
            return Err(SelectError::NoSensitive);
        }
        if roles.target.is_empty() {
            return Err(SelectError::NoTarget);
        }
        let mut seen = BTreeSet::new();
        for name in roles
            .sensitive
            .iter()
            .chain(&roles.admissible)
            .chain(&roles.candidates)
            .chain(std::iter::once(&roles.target))
        {
            if !seen.insert(name.clone()) {
                return Err(SelectError::RolesOverlap(name.clone()));
            }
        }
        Ok(Problem {
            sensitive: roles.sensitive.clone(),
            admissible: roles.admissible.clone(),
            candidates: roles.candidates.clone(),
            target: roles.target.clone(),
        })
    }

    // Phase-2 conditioning set: all admissible variables plus c1, fixed for
    // the whole phase.
    fn phase2_z(&self, c1: &BTreeSet<String>) -> Vec<String> {
        let mut z = self.admissible.clone();
        z.extend(c1.iter().cloned());
        z
    }
}

/// Sequential selection: one query per candidate in phase 1, one per
/// phase-1 survivor in phase 2, so exactly `|X| + |X \ c1|` tests when
/// `subset_mode` is off.
///
/// With `subset_mode`, phase 1 accepts a candidate if any subset of the
/// admissible set separates it from the sensitive set, trying subsets in
/// ascending bitmask order and stopping at the first pass; each attempt is
/// its own test. The `seed` parameter is accepted for interface symmetry
/// with [`grp_sel`] and has no effect here.
pub fn seq_sel(
    tester: &dyn CiTester,
    roles: &RolesFile,
    alpha: f64,
    subset_mode: bool,
    seed: u64,
) -> Result<SelectionResult, SelectError> {
    let _ = seed;
    let problem = Problem::from_roles(roles)?;
    if subset_mode && problem.admissible.len() > SUBSET_SEARCH_LIMIT {
        return Err(SelectError::SubsetSearchTooLarge(
            problem.admissible.len(),
            SUBSET_SEARCH_LIMIT,
        ));
    }
    let mut trace = Vec::new();
    let mut c1 = BTreeSet::new();

    for cand in &problem.candidates {
        let x = [cand.clone()];
        if subset_mode {
            for subset in admissible_subsets(&problem.admissible) {
                let q = CiQuery::new(&x, &problem.sensitive, &subset, alpha)?;
                if run(tester, q, &mut trace)? {
                    c1.insert(cand.clone());
                    break;
                }
            }
        } else {
            let q = CiQuery::new(&x, &problem.sensitive, &problem.admissible, alpha)?;
            if run(tester, q, &mut trace)? {
                c1.insert(cand.clone());
            }
        }
    }

    let z2 = problem.phase2_z(&c1);
    let y2 = [problem.target.clone()];
    let mut c2 = BTreeSet::new();
    for cand in &problem.candidates {
        if c1.contains(cand) {
            continue;
        }
        let q = CiQuery::new(&[cand.clone()], &y2, &z2, alpha)?;
        if run(tester, q, &mut trace)? {
            c2.insert(cand.clone());
        }
    }

    Ok(SelectionResult::assemble(c1, c2, trace))
}

fn run(
    tester: &dyn CiTester,
    query: CiQuery,
    trace: &mut Vec<TraceEntry>,
) -> Result<bool, SelectError> {
    let result = tester.test(&query)?;
    let independent = result.independent;
    trace.push(TraceEntry { query, result });
    Ok(independent)
}

// Subsets in ascending bitmask order: the empty set first, the full set last.
fn admissible_subsets(pool: &[String]) -> impl Iterator<Item = Vec<String>> + '_ {
    (0u32..(1u32 << pool.len())).map(move |mask| {
        pool.iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, s)| s.clone())
            .collect()
    })
}

/// Group selection: each phase starts from one query over the whole
/// candidate set and splits recursively on dependence, with singletons
/// decided directly. Groups that pass phase 1 join `c1` wholesale; phase 2
/// repeats the recursion for the remainder against the target, conditioning
/// on the admissible set plus the phase-1 result.
///
/// Splits are driven by a stream seeded from `seed`, so the whole run,
/// including its trace, is reproducible. Subset mode is not supported: a
/// per-group subset search would test a different hypothesis on every
/// recursion level.
pub fn grp_sel(
    tester: &dyn CiTester,
    roles: &RolesFile,
    alpha: f64,
    subset_mode: bool,
    seed: u64,
) -> Result<SelectionResult, SelectError> {
    if subset_mode {
        return Err(SelectError::SubsetModeUnsupported);
    }
    let problem = Problem::from_roles(roles)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();

    let mut c1 = BTreeSet::new();
    grp_phase(
        tester,
        &problem.candidates,
        &problem.sensitive,
        &problem.admissible,
        alpha,
        &mut rng,
        &mut trace,
        &mut c1,
    )?;

    let pool: Vec<String> = problem
        .candidates
        .iter()
        .filter(|c| !c1.contains(*c))
        .cloned()
        .collect();
    let z2 = problem.phase2_z(&c1);
    let y2 = [problem.target.clone()];
    let mut c2 = BTreeSet::new();
    grp_phase(tester, &pool, &y2, &z2, alpha, &mut rng, &mut trace, &mut c2)?;

    Ok(SelectionResult::assemble(c1, c2, trace))
}

#[allow(clippy::too_many_arguments)]
fn grp_phase(
    tester: &dyn CiTester,
    group: &[String],
    y: &[String],
    z: &[String],
    alpha: f64,
    rng: &mut ChaCha8Rng,
    trace: &mut Vec<TraceEntry>,
    passed: &mut BTreeSet<String>,
) -> Result<(), SelectError> {
    if group.is_empty() {
        return Ok(());
    }
    let q = CiQuery::new(group, y, z, alpha)?;
    if run(tester, q, trace)? {
        passed.extend(group.iter().cloned());
    } else if group.len() >= 2 {
        let (left, right) = group_split(group, rng.random::<u64>())?;
        grp_phase(tester, &left, y, z, alpha, rng, trace, passed)?;
        grp_phase(tester, &right, y, z, alpha, rng, trace, passed)?;
    }
    // A dependent singleton is classified right here: not passing.
    Ok(())
}

/// Which benchmark family a counter sweep walks over.
#[derive(Debug, Clone)]
pub enum BenchSweep {
    /// Cross product of candidate counts and biased fractions, biasing each
    /// candidate independently.
    Fractions { n_grid: Vec<usize>, p_grid: Vec<f64> },
    /// Candidate-count sweep at a fixed exact number of biased candidates.
    FixedBiased { n_grid: Vec<usize>, k: usize },
}

/// One selector run inside a sweep. `p` is the biased fraction (`k / n` for
/// fixed-count sweeps); `phase1_tests` is not part of the CSV but feeds the
/// complexity checks.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub algorithm: String,
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    pub test_count: usize,
    pub phase1_tests: usize,
}

/// Runs both selectors with the graph oracle over generated benchmarks, one
/// row per (algorithm, grid point, seed).
pub fn bench_counts(sweep: &BenchSweep, seeds: &[u64]) -> Result<Vec<BenchRow>, SelectError> {
    let points: Vec<(usize, Option<f64>, Option<usize>)> = match sweep {
        BenchSweep::Fractions { n_grid, p_grid } => n_grid
            .iter()
            .flat_map(|&n| p_grid.iter().map(move |&p| (n, Some(p), None)))
            .collect(),
        BenchSweep::FixedBiased { n_grid, k } => {
            n_grid.iter().map(|&n| (n, None, Some(*k))).collect()
        }
    };
    if points.is_empty() || seeds.is_empty() {
        return Err(SelectError::EmptyGrid);
    }

    let mut rows = Vec::new();
    for &(n, p, k) in &points {
        for &seed in seeds {
            let bench = match (p, k) {
                (Some(p), None) => gen_benchmark(n, p, seed)?,
                (None, Some(k)) => gen_benchmark_exact(n, k, seed)?,
                _ => unreachable!("each point carries exactly one of p, k"),
            };
            let p_out = p.unwrap_or(k.unwrap_or(0) as f64 / n as f64);
            let dag = bench.spec.dag();
            let oracle = OracleCi { dag };
            let roles = RolesFile::from_dag(dag);
            for (algorithm, result) in [
                ("seqsel", seq_sel(&oracle, &roles, 0.01, false, seed)?),
                ("grpsel", grp_sel(&oracle, &roles, 0.01, false, seed)?),
            ] {
                let (phase1, _) = result.phase_counts(dag.target());
                rows.push(BenchRow {
                    algorithm: algorithm.to_string(),
                    n,
                    p: p_out,
                    seed,
                    test_count: result.test_count,
                    phase1_tests: phase1,
                });
            }
        }
    }
    Ok(rows)
}

/// Writes sweep rows as CSV with header `algorithm,n,p,seed,test_count`.
pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::Error::Csv)?;
    w.write_record(["algorithm", "n", "p", "seed", "test_count"])
        .map_err(crate::Error::Csv)?;
    for row in rows {
        w.write_record([
            row.algorithm.clone(),
            row.n.to_string(),
            row.p.to_string(),
            row.seed.to_string(),
            row.test_count.to_string(),
        ])
        .map_err(crate::Error::Csv)?;
    }
    w.flush().map_err(crate::Error::Io)?;
    Ok(())
}

/// Mean test count per (algorithm, n, p) across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchMean {
    pub algorithm: String,
    pub n: usize,
    pub p: f64,
    pub mean_test_count: f64,
}

pub fn mean_counts(rows: &[BenchRow]) -> Vec<BenchMean> {
    use std::collections::BTreeMap;
    let mut acc: BTreeMap<(String, usize, u64), (f64, usize)> = BTreeMap::new();
    for row in rows {
        let entry = acc
            .entry((row.algorithm.clone(), row.n, row.p.to_bits()))
            .or_insert((0.0, 0));
        entry.0 += row.test_count as f64;
        entry.1 += 1;
    }
    acc.into_iter()
        .map(|((algorithm, n, p_bits), (sum, count))| BenchMean {
            algorithm,
            n,
            p: f64::from_bits(p_bits),
            mean_test_count: sum / count as f64,
        })
        .collect()
}
