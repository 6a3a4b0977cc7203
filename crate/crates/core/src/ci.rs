//! Conditional-independence decisions over single variables and variable
//! sets, with three interchangeable backends.
//!
//! A set-level query asks whether any member of `x` is dependent on any
//! member of `y` given `z`. The graph oracle answers it natively through
//! d-separation; the data backends combine the `|x| * |y|` pairwise
//! statistics with a Bonferroni rule, so a group decision decomposes exactly
//! across its members. Each group query, however large, counts as one test
//! toward the selection algorithms' counters; [`CiResult::tests_consumed`]
//! records how many pairwise statistics it actually spent.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::data::{ColumnKind, DataError, Dataset};
use crate::graph::{Dag, GraphError};

#[derive(Debug, thiserror::Error)]
pub enum CiError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("query sets must be disjoint; {0} appears twice")]
    Overlap(String),
    #[error("query x and y sets must be nonempty")]
    EmptySide,
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    BadAlpha(f64),
    #[error("column {0} has zero variance")]
    DegenerateColumn(String),
    #[error("{0} rows is too few: this query needs at least {1}")]
    InsufficientData(usize, usize),
    #[error("column {0} is not discrete, which the g_test backend requires")]
    NotDiscrete(String),
    #[error(
        "expected count {0:.2} below 5 in the contingency table; more data or fewer strata needed"
    )]
    SparseTable(f64),
    #[error("cannot split a group of {0}")]
    SplitTooSmall(usize),
}

/// One conditional-independence question: is `x` independent of `y` given
/// `z`, decided at significance level `alpha`?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiQuery {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub z: Vec<String>,
    pub alpha: f64,
}

impl CiQuery {
    /// Sorts and dedupes each side; rejects overlapping sets, an empty `x` or
    /// `y`, and an `alpha` outside (0, 1).
    pub fn new<S: AsRef<str>>(x: &[S], y: &[S], z: &[S], alpha: f64) -> Result<Self, CiError> {
        let q = CiQuery {
            x: sorted(x),
            y: sorted(y),
            z: sorted(z),
            alpha,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), CiError> {
        if self.x.is_empty() || self.y.is_empty() {
            return Err(CiError::EmptySide);
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CiError::BadAlpha(self.alpha));
        }
        let mut seen = BTreeSet::new();
        for name in self.x.iter().chain(&self.y).chain(&self.z) {
            if !seen.insert(name.clone()) {
                return Err(CiError::Overlap(name.clone()));
            }
        }
        Ok(())
    }

    /// Number of pairwise statistics a Bonferroni group decision spends.
    pub fn pair_count(&self) -> usize {
        self.x.len() * self.y.len()
    }
}

fn sorted<S: AsRef<str>>(names: &[S]) -> Vec<String> {
    let mut v: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
    v.sort();
    v.dedup();
    v
}

/// Outcome of a query. `independent` holds exactly when `p_value > alpha`,
/// where `p_value` already includes the Bonferroni correction for group
/// queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub independent: bool,
    pub p_value: f64,
    pub statistic: f64,
    pub tests_consumed: usize,
}

/// A conditional-independence decision procedure.
pub trait CiTester {
    fn test(&self, q: &CiQuery) -> Result<CiResult, CiError>;
    /// Stable backend name used in traces and summaries.
    fn name(&self) -> &'static str;
}

/// Runs `q` against `tester`. Thin named entry point over [`CiTester::test`].
pub fn ci_test(tester: &dyn CiTester, q: &CiQuery) -> Result<CiResult, CiError> {
    tester.test(q)
}

/// Ground-truth backend: reads independence off a known graph via
/// d-separation. The p-value degenerates to 0 or 1 and the statistic to
/// 1 or 0.
pub struct OracleCi<'a> {
    pub dag: &'a Dag,
}

impl CiTester for OracleCi<'_> {
    fn test(&self, q: &CiQuery) -> Result<CiResult, CiError> {
        q.validate()?;
        let independent = self.dag.d_separated(&q.x, &q.y, &q.z)?;
        Ok(CiResult {
            independent,
            p_value: if independent { 1.0 } else { 0.0 },
            statistic: if independent { 0.0 } else { 1.0 },
            // A set query is a single d-separation check.
            tests_consumed: 1,
        })
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// Partial-correlation test: residualize each pair on `z` by least squares,
/// apply the Fisher transform to the residual correlation, and read a
/// two-sided p-value off the normal distribution.
///
/// Discrete columns are admitted as numeric level codes; with a binary
/// column, the residualization is exact rather than approximate, so the test
/// stays valid for the binary sensitive and admissible variables produced by
/// the benchmark generator.
pub struct FisherZ<'a> {
    pub data: &'a Dataset,
}

impl CiTester for FisherZ<'_> {
    fn test(&self, q: &CiQuery) -> Result<CiResult, CiError> {
        q.validate()?;
        let n = self.data.n_rows();
        let min_rows = q.z.len() + 10;
        if n < min_rows {
            return Err(CiError::InsufficientData(n, min_rows));
        }
        for name in q.x.iter().chain(&q.y).chain(&q.z) {
            let col = self.data.column(name)?;
            if variance(&col.values) == 0.0 {
                return Err(CiError::DegenerateColumn(name.clone()));
            }
        }

        let z_cols: Vec<&[f64]> = q
            .z
            .iter()
            .map(|name| Ok(self.data.column(name)?.values.as_slice()))
            .collect::<Result<_, CiError>>()?;
        let basis = residual_basis(n, &z_cols);

        let mut min_p = 1.0f64;
        let mut best_stat = 0.0f64;
        for xn in &q.x {
            let rx = residualize(&self.data.column(xn)?.values, &basis);
            for yn in &q.y {
                let ry = residualize(&self.data.column(yn)?.values, &basis);
                let r = residual_correlation(&rx, &ry, xn, yn)?;
                let dof = n as f64 - q.z.len() as f64 - 3.0;
                let stat = atanh_clamped(r) * dof.sqrt();
                let p = two_sided_normal_p(stat);
                if p < min_p {
                    min_p = p;
                    best_stat = stat;
                }
            }
        }
        let m = q.pair_count();
        let adjusted = (min_p * m as f64).min(1.0);
        Ok(CiResult {
            independent: adjusted > q.alpha,
            p_value: adjusted,
            statistic: best_stat,
            tests_consumed: m,
        })
    }

    fn name(&self) -> &'static str {
        "fisher_z"
    }
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn atanh_clamped(r: f64) -> f64 {
    // ±1 would map to infinity; the clamp keeps the statistic finite and the
    // p-value indistinguishable from zero.
    r.clamp(-1.0 + 1e-12, 1.0 - 1e-12).atanh()
}

fn two_sided_normal_p(stat: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    2.0 * (1.0 - normal.cdf(stat.abs()))
}

// Orthonormal basis of the conditioning span (intercept plus z columns) via
// modified Gram-Schmidt. Columns that are linearly dependent on earlier ones
// contribute nothing and are dropped.
fn residual_basis(n: usize, z_cols: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(z_cols.len() + 1);
    let intercept = vec![1.0 / (n as f64).sqrt(); n];
    basis.push(intercept);
    for col in z_cols {
        let mut v = col.to_vec();
        for b in &basis {
            let coef: f64 = v.iter().zip(b).map(|(vi, bi)| vi * bi).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= coef * bi;
            }
        }
        let norm = v.iter().map(|vi| vi * vi).sum::<f64>().sqrt();
        let scale: f64 = col.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-10 * scale.max(1.0) {
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    basis
}

fn residualize(values: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = values.to_vec();
    for b in basis {
        let coef: f64 = r.iter().zip(b).map(|(ri, bi)| ri * bi).sum();
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= coef * bi;
        }
    }
    r
}

fn residual_correlation(rx: &[f64], ry: &[f64], xn: &str, yn: &str) -> Result<f64, CiError> {
    let sxx: f64 = rx.iter().map(|v| v * v).sum();
    let syy: f64 = ry.iter().map(|v| v * v).sum();
    // A residual that vanished entirely means the column lies in the span of
    // the conditioning set; no correlation is defined there.
    if sxx <= 1e-12 {
        return Err(CiError::DegenerateColumn(xn.to_string()));
    }
    if syy <= 1e-12 {
        return Err(CiError::DegenerateColumn(yn.to_string()));
    }
    let sxy: f64 = rx.iter().zip(ry).map(|(a, b)| a * b).sum();
    Ok(sxy / (sxx * syy).sqrt())
}

/// Likelihood-ratio test on discrete columns: within every stratum of `z`,
/// compare observed cell counts of each `(x, y)` pair against independence,
/// sum the G contributions, and refer to a chi-square with
/// `(card x - 1) * (card y - 1) * prod(card z)` degrees of freedom.
///
/// Any expected cell count below 5 aborts with an error rather than returning
/// an unreliable decision; empty strata fail the same check.
pub struct GTest<'a> {
    pub data: &'a Dataset,
}

impl CiTester for GTest<'_> {
    fn test(&self, q: &CiQuery) -> Result<CiResult, CiError> {
        q.validate()?;
        for name in q.x.iter().chain(&q.y).chain(&q.z) {
            let col = self.data.column(name)?;
            if !col.kind.is_discrete() {
                return Err(CiError::NotDiscrete(name.clone()));
            }
            if variance(&col.values) == 0.0 {
                return Err(CiError::DegenerateColumn(name.clone()));
            }
        }
        let strata = self.stratum_indices(&q.z)?;

        let mut min_p = 1.0f64;
        let mut best_stat = 0.0f64;
        for xn in &q.x {
            for yn in &q.y {
                let (g, df) = self.pair_g(xn, yn, &strata)?;
                let p = 1.0 - ChiSquared::new(df).expect("df >= 1").cdf(g);
                if p < min_p {
                    min_p = p;
                    best_stat = g;
                }
            }
        }
        let m = q.pair_count();
        let adjusted = (min_p * m as f64).min(1.0);
        Ok(CiResult {
            independent: adjusted > q.alpha,
            p_value: adjusted,
            statistic: best_stat,
            tests_consumed: m,
        })
    }

    fn name(&self) -> &'static str {
        "g_test"
    }
}

impl GTest<'_> {
    // Row indices per configuration of the conditioning columns.
    fn stratum_indices(&self, z: &[String]) -> Result<Vec<Vec<usize>>, CiError> {
        let n = self.data.n_rows();
        let mut cols = Vec::with_capacity(z.len());
        let mut n_strata = 1usize;
        for name in z {
            let col = self.data.column(name)?;
            let card = match col.kind {
                ColumnKind::Discrete { cardinality } => cardinality,
                ColumnKind::Continuous => unreachable!("checked discrete above"),
            };
            cols.push((&col.values, card));
            n_strata *= card;
        }
        let mut strata = vec![Vec::new(); n_strata];
        for row in 0..n {
            let mut idx = 0usize;
            for (values, card) in &cols {
                idx = idx * card + values[row] as usize;
            }
            strata[idx].push(row);
        }
        Ok(strata)
    }

    fn pair_g(
        &self,
        xn: &str,
        yn: &str,
        strata: &[Vec<usize>],
    ) -> Result<(f64, f64), CiError> {
        let xcol = self.data.column(xn)?;
        let ycol = self.data.column(yn)?;
        let (cx, cy) = match (xcol.kind, ycol.kind) {
            (
                ColumnKind::Discrete { cardinality: cx },
                ColumnKind::Discrete { cardinality: cy },
            ) => (cx, cy),
            _ => unreachable!("checked discrete above"),
        };

        let mut g = 0.0f64;
        for rows in strata {
            let total = rows.len() as f64;
            let mut counts = vec![0.0f64; cx * cy];
            let mut row_tot = vec![0.0f64; cx];
            let mut col_tot = vec![0.0f64; cy];
            for &r in rows {
                let xi = xcol.values[r] as usize;
                let yi = ycol.values[r] as usize;
                counts[xi * cy + yi] += 1.0;
                row_tot[xi] += 1.0;
                col_tot[yi] += 1.0;
            }
            for xi in 0..cx {
                for yi in 0..cy {
                    let expected = if total > 0.0 {
                        row_tot[xi] * col_tot[yi] / total
                    } else {
                        0.0
                    };
                    if expected < 5.0 {
                        return Err(CiError::SparseTable(expected));
                    }
                    let observed = counts[xi * cy + yi];
                    if observed > 0.0 {
                        g += 2.0 * observed * (observed / expected).ln();
                    }
                }
            }
        }
        let df = (cx - 1) as f64 * (cy - 1) as f64 * strata.len() as f64;
        Ok((g, df))
    }
}

/// Splits `xs` into two disjoint halves after a seeded shuffle; the first
/// half gets the extra element for odd sizes. Groups of fewer than two cannot
/// be split.
pub fn group_split<S: AsRef<str>>(
    xs: &[S],
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), CiError> {
    if xs.len() < 2 {
        return Err(CiError::SplitTooSmall(xs.len()));
    }
    let mut items: Vec<String> = xs.iter().map(|s| s.as_ref().to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let mid = items.len().div_ceil(2);
    let right = items.split_off(mid);
    Ok((items, right))
}
