//! Fairness and information metrics for a trained classifier.
//!
//! Three views of the same question, how much sensitive information reaches
//! the prediction:
//!
//! - [`abs_odds_difference`]: gap in error rates between sensitive groups.
//! - [`cmi`]: conditional mutual information between the sensitive column and
//!   the prediction given the admissible columns, in nats.
//! - [`interventional_gap`]: the causal criterion itself, estimated by Monte
//!   Carlo: how much can forcing the sensitive variables move the prediction
//!   when the admissible variables are held fixed by intervention.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, DataError};
use crate::graph::Role;
use crate::logistic::{LogRegModel, TrainError};
use crate::scm::{ScmError, ScmSpec};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("columns have different lengths")]
    LengthMismatch,
    #[error("{0} must hold only 0/1 values")]
    NotBinary(String),
    #[error("cannot compute group rates: {0}")]
    DegenerateGroup(String),
    #[error("no rows")]
    EmptyData,
    #[error("bin count must be at least 2")]
    BadBins,
    #[error("need at least two sensitive assignments to compare")]
    TooFewSensitiveValues,
    #[error("assignment must cover {0} exactly; problem with {1}")]
    BadAssignment(String, String),
    #[error("model feature {0} is not a variable of the model spec")]
    FeatureMismatch(String),
    #[error("{0} intervention cells exceed the limit of {1}")]
    TooManyCells(usize, usize),
}

/// Metrics bundle for one model, serialized by the evaluation command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub accuracy: f64,
    pub abs_odds_difference: f64,
    pub cmi_nats: f64,
    /// Gap of thresholded predictions.
    pub interventional_gap: f64,
    /// Gap of predicted probabilities, reported alongside the thresholded
    /// one.
    pub interventional_gap_prob: f64,
}

/// Half the summed absolute gaps in false-positive and true-positive rates
/// between the two sensitive groups:
/// `0.5 * (|FPR0 - FPR1| + |TPR0 - TPR1|)`.
///
/// All three columns must be binary; each group needs at least one positive
/// and one negative true label so both rates are defined.
pub fn abs_odds_difference(
    y_true: &[f64],
    y_pred: &[f64],
    s: &[f64],
) -> Result<f64, MetricsError> {
    if y_true.len() != y_pred.len() || y_true.len() != s.len() {
        return Err(MetricsError::LengthMismatch);
    }
    if y_true.is_empty() {
        return Err(MetricsError::EmptyData);
    }
    for (name, col) in [("y_true", y_true), ("y_pred", y_pred), ("s", s)] {
        if col.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(MetricsError::NotBinary(name.to_string()));
        }
    }

    let mut rates = [0.0f64; 4];
    for (g, rate) in [0.0, 1.0].into_iter().zip(rates.chunks_exact_mut(2)) {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut pos = 0.0;
        let mut neg = 0.0;
        for i in 0..s.len() {
            if s[i] != g {
                continue;
            }
            if y_true[i] == 1.0 {
                pos += 1.0;
                tp += y_pred[i];
            } else {
                neg += 1.0;
                fp += y_pred[i];
            }
        }
        if pos == 0.0 || neg == 0.0 {
            return Err(MetricsError::DegenerateGroup(format!(
                "group s={g} lacks a positive or negative true label"
            )));
        }
        rate[0] = fp / neg;
        rate[1] = tp / pos;
    }
    Ok(0.5 * ((rates[0] - rates[2]).abs() + (rates[1] - rates[3]).abs()))
}

/// Default bin count for continuous columns entering [`cmi`].
pub const CMI_DEFAULT_BINS: usize = 4;

/// Plug-in conditional mutual information `I(S; Y' | A)` in nats, clamped at
/// zero from below.
///
/// Continuous columns are discretized into `bins` equal-frequency quantile
/// bins; discrete columns use their levels directly. The estimate is
/// `sum_a P(a) * sum_{s,y} P(s,y|a) * ln[P(s,y|a) / (P(s|a) P(y|a))]`.
pub fn cmi(s: &Column, yprime: &Column, a: &[&Column], bins: usize) -> Result<f64, MetricsError> {
    if bins < 2 {
        return Err(MetricsError::BadBins);
    }
    let n = s.values.len();
    if n == 0 {
        return Err(MetricsError::EmptyData);
    }
    for col in a.iter().copied().chain([s, yprime]) {
        if col.values.len() != n {
            return Err(MetricsError::LengthMismatch);
        }
    }

    let (s_codes, s_levels) = discretize(s, bins);
    let (y_codes, y_levels) = discretize(yprime, bins);
    let mut stratum = vec![0usize; n];
    for col in a {
        let (codes, levels) = discretize(col, bins);
        for (acc, code) in stratum.iter_mut().zip(&codes) {
            *acc = *acc * levels + code;
        }
    }

    let mut counts: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for i in 0..n {
        let table = counts
            .entry(stratum[i])
            .or_insert_with(|| vec![0.0; s_levels * y_levels]);
        table[s_codes[i] * y_levels + y_codes[i]] += 1.0;
    }

    let mut total = 0.0f64;
    for table in counts.values() {
        let stratum_n: f64 = table.iter().sum();
        let mut s_marg = vec![0.0; s_levels];
        let mut y_marg = vec![0.0; y_levels];
        for si in 0..s_levels {
            for yi in 0..y_levels {
                s_marg[si] += table[si * y_levels + yi];
                y_marg[yi] += table[si * y_levels + yi];
            }
        }
        let mut inner = 0.0f64;
        for si in 0..s_levels {
            for yi in 0..y_levels {
                let joint = table[si * y_levels + yi];
                if joint > 0.0 {
                    inner +=
                        joint / stratum_n * (joint * stratum_n / (s_marg[si] * y_marg[yi])).ln();
                }
            }
        }
        total += stratum_n / n as f64 * inner;
    }
    Ok(total.max(0.0))
}

// Integer codes plus level count. Discrete columns keep their levels;
// continuous columns get equal-frequency bins via rank.
fn discretize(col: &Column, bins: usize) -> (Vec<usize>, usize) {
    match col.kind {
        ColumnKind::Discrete { cardinality } => {
            (col.values.iter().map(|&v| v as usize).collect(), cardinality)
        }
        ColumnKind::Continuous => {
            let mut sorted = col.values.clone();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let codes = col
                .values
                .iter()
                .map(|v| {
                    let rank = sorted.partition_point(|x| x < v);
                    (rank * bins / n).min(bins - 1)
                })
                .collect();
            (codes, bins)
        }
    }
}

/// Largest prediction shift the sensitive variables can cause under
/// intervention, for thresholded labels and for raw probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub thresholded: f64,
    pub probability: f64,
}

/// Upper bound on `a_values.len() * s_values.len()` in one gap estimate.
pub const GAP_MAX_CELLS: usize = 256;

/// Monte-Carlo estimate of the interventional fairness gap.
///
/// For every admissible assignment `a` and every pair of sensitive
/// assignments `(s, s')`, draws `n_mc` rows from the model under
/// `do(S=s), do(A=a)` and under `do(S=s'), do(A=a)`, applies the fixed
/// classifier to both, and takes the absolute difference of the mean
/// predictions. Returns the maximum over all cells. Every cell draws with
/// its own seed derived from `seed`, so estimates are reproducible and
/// cells are independent.
pub fn interventional_gap(
    spec: &ScmSpec,
    model: &LogRegModel,
    a_values: &[BTreeMap<String, f64>],
    s_values: &[BTreeMap<String, f64>],
    n_mc: usize,
    seed: u64,
) -> Result<GapEstimate, MetricsError> {
    if s_values.len() < 2 {
        return Err(MetricsError::TooFewSensitiveValues);
    }
    let dag = spec.dag();
    for feature in &model.features {
        if !dag.contains(feature) || feature == dag.target() {
            return Err(MetricsError::FeatureMismatch(feature.clone()));
        }
    }
    check_assignments(a_values, &dag.admissible(), "admissible set")?;
    check_assignments(s_values, &dag.sensitive(), "sensitive set")?;
    let cells = a_values.len() * s_values.len();
    if cells > GAP_MAX_CELLS {
        return Err(MetricsError::TooManyCells(cells, GAP_MAX_CELLS));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = GapEstimate {
        thresholded: 0.0,
        probability: 0.0,
    };
    for a in a_values {
        let mut cell_means = Vec::with_capacity(s_values.len());
        for s in s_values {
            let mut assignment = a.clone();
            assignment.extend(s.iter().map(|(k, v)| (k.clone(), *v)));
            let cell_seed = rng.random::<u64>();
            let data = spec.intervene_sample(n_mc, cell_seed, &assignment)?;
            let preds = model.predict(&data)?;
            let nf = n_mc as f64;
            let mean_label: f64 = preds.labels.iter().sum::<f64>() / nf;
            let mean_prob: f64 = preds.probabilities.iter().sum::<f64>() / nf;
            cell_means.push((mean_label, mean_prob));
        }
        for i in 0..cell_means.len() {
            for j in (i + 1)..cell_means.len() {
                gap.thresholded = gap
                    .thresholded
                    .max((cell_means[i].0 - cell_means[j].0).abs());
                gap.probability = gap
                    .probability
                    .max((cell_means[i].1 - cell_means[j].1).abs());
            }
        }
    }
    Ok(gap)
}

fn check_assignments(
    values: &[BTreeMap<String, f64>],
    expected: &[String],
    what: &str,
) -> Result<(), MetricsError> {
    for assignment in values {
        if assignment.len() != expected.len()
            || !expected.iter().all(|v| assignment.contains_key(v))
        {
            return Err(MetricsError::BadAssignment(
                what.to_string(),
                format!("{:?}", assignment.keys().collect::<Vec<_>>()),
            ));
        }
    }
    Ok(())
}

/// Builds the default intervention grids for [`interventional_gap`]: the
/// cross product of per-variable probe values. Discrete variables contribute
/// every level; continuous ones their lower and upper sample quartiles from
/// a fixed probe draw.
pub fn default_intervention_values(
    spec: &ScmSpec,
) -> Result<(Vec<BTreeMap<String, f64>>, Vec<BTreeMap<String, f64>>), MetricsError> {
    let a_values = assignment_grid(spec, Role::Admissible)?;
    let s_values = assignment_grid(spec, Role::Sensitive)?;
    Ok((a_values, s_values))
}

fn assignment_grid(
    spec: &ScmSpec,
    role: Role,
) -> Result<Vec<BTreeMap<String, f64>>, MetricsError> {
    let vars = spec.dag().with_role(role);
    let mut grid: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new()];
    let mut probe = None;
    for var in &vars {
        let values: Vec<f64> = match spec.column_kind(var)? {
            ColumnKind::Discrete { cardinality } => (0..cardinality).map(|l| l as f64).collect(),
            ColumnKind::Continuous => {
                let data =
                    probe.get_or_insert_with(|| spec.sample(1001, 0x9e3779b9).expect("probe"));
                let mut sorted = data.column(var)?.values.clone();
                sorted.sort_by(f64::total_cmp);
                vec![sorted[sorted.len() / 4], sorted[3 * sorted.len() / 4]]
            }
        };
        let mut next = Vec::with_capacity(grid.len() * values.len());
        for assignment in &grid {
            for &v in &values {
                let mut a = assignment.clone();
                a.insert(var.clone(), v);
                next.push(a);
            }
        }
        if next.len() > GAP_MAX_CELLS {
            return Err(MetricsError::TooManyCells(next.len(), GAP_MAX_CELLS));
        }
        grid = next;
    }
    Ok(grid)
}
