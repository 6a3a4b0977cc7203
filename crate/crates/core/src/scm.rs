//! Structural causal models: a [`Dag`] plus one sampling mechanism per node.
//!
//! Sampling is ancestral and deterministic given a seed. Every node draws its
//! exogenous noise from its own seeded stream, so intervening on one variable
//! reproduces exactly the same noise everywhere else; observational and
//! interventional samples with the same seed are coupled row by row.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, Dataset};
use crate::graph::{Dag, EdgeDecl, GraphError, NodeDecl, Role};

#[derive(Debug, thiserror::Error)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node {0} has no mechanism")]
    MissingMechanism(String),
    #[error("mechanism for {0} references {1}, which is not a parent in the graph")]
    NotAParent(String, String),
    #[error("mechanism for {0} is missing parent {1}")]
    ParentNotUsed(String, String),
    #[error("node {0}: noise_std must be positive and finite, got {1}")]
    BadNoiseStd(String, f64),
    #[error("node {0}: cardinality must be at least 2")]
    BadCardinality(String),
    #[error("node {0}: cpt parent {1} is not discrete")]
    CptParentNotDiscrete(String, String),
    #[error("node {0}: cpt has {1} rows, expected {2}")]
    CptRowCount(String, usize, usize),
    #[error("node {0} row {1}: cpt row has {2} entries, expected {3}")]
    CptRowLength(String, usize, usize, usize),
    #[error("node {0} row {1}: cpt row must be non-negative and sum to 1 (sum {2})")]
    CptRowNotDistribution(String, usize, f64),
    #[error("node {0}: weight for {1} is not finite")]
    BadWeight(String, String),
    #[error("intervention on unknown node {0}")]
    InterveneUnknown(String),
    #[error("the target {0} cannot be intervened on")]
    InterveneTarget(String),
    #[error("intervention sets discrete node {0} to {1}, not a valid level")]
    InterveneBadLevel(String, f64),
    #[error("node {0} has no weight for parent {1}")]
    NoSuchWeight(String, String),
    #[error("benchmark wants {0} biased candidates out of {1}")]
    BadBiasedCount(usize, usize),
    #[error("biased fraction {0} is not a probability")]
    BadBiasedFraction(f64),
    #[error("benchmark needs at least one candidate")]
    NoCandidates,
}

/// How a node's value is produced from its parents plus exogenous noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Mechanism {
    /// `value = intercept + sum(weights[p] * parent p) + Normal(0, noise_std)`.
    LinearGaussian {
        intercept: f64,
        weights: BTreeMap<String, f64>,
        noise_std: f64,
    },
    /// Conditional probability table over discrete parents.
    ///
    /// Rows enumerate parent configurations in odometer order over `parents`
    /// (the last listed parent varies fastest); each row is a distribution
    /// over the `cardinality` levels.
    DiscreteCpt {
        cardinality: usize,
        parents: Vec<String>,
        table: Vec<Vec<f64>>,
    },
    /// Binary node: `P(value = 1) = sigmoid(intercept + sum(weights[p] * p))`.
    BernoulliLogistic {
        intercept: f64,
        weights: BTreeMap<String, f64>,
    },
}

impl Mechanism {
    /// Parents the mechanism actually reads.
    pub fn parent_names(&self) -> Vec<String> {
        match self {
            Mechanism::LinearGaussian { weights, .. }
            | Mechanism::BernoulliLogistic { weights, .. } => weights.keys().cloned().collect(),
            Mechanism::DiscreteCpt { parents, .. } => parents.clone(),
        }
    }

    pub fn output_kind(&self) -> ColumnKind {
        match self {
            Mechanism::LinearGaussian { .. } => ColumnKind::Continuous,
            Mechanism::DiscreteCpt { cardinality, .. } => ColumnKind::Discrete {
                cardinality: *cardinality,
            },
            Mechanism::BernoulliLogistic { .. } => ColumnKind::Discrete { cardinality: 2 },
        }
    }
}

/// On-disk form: the DAG file with a mechanism attached to every node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmFile {
    pub nodes: Vec<ScmNodeDecl>,
    pub edges: Vec<EdgeDecl>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmNodeDecl {
    pub name: String,
    pub role: Role,
    pub mechanism: Mechanism,
}

/// A validated structural causal model.
///
/// Construction checks that each node's mechanism reads exactly its graph
/// parents, that CPT shapes match parent cardinalities, and that every
/// numeric parameter is usable.
#[derive(Debug, Clone)]
pub struct ScmSpec {
    dag: Dag,
    mechanisms: BTreeMap<String, Mechanism>,
}

impl ScmSpec {
    pub fn new(dag: Dag, mechanisms: BTreeMap<String, Mechanism>) -> Result<Self, ScmError> {
        for name in dag.node_names() {
            let mech = mechanisms
                .get(name)
                .ok_or_else(|| ScmError::MissingMechanism(name.clone()))?;
            let graph_parents: BTreeSet<String> = dag.parents_of(name)?.into_iter().collect();
            let mech_parents: BTreeSet<String> = mech.parent_names().into_iter().collect();
            for p in mech_parents.difference(&graph_parents) {
                return Err(ScmError::NotAParent(name.clone(), p.clone()));
            }
            for p in graph_parents.difference(&mech_parents) {
                return Err(ScmError::ParentNotUsed(name.clone(), p.clone()));
            }

            match mech {
                Mechanism::LinearGaussian {
                    intercept,
                    weights,
                    noise_std,
                } => {
                    if !(noise_std.is_finite() && *noise_std > 0.0) {
                        return Err(ScmError::BadNoiseStd(name.clone(), *noise_std));
                    }
                    if !intercept.is_finite() {
                        return Err(ScmError::BadWeight(name.clone(), "<intercept>".into()));
                    }
                    for (p, w) in weights {
                        if !w.is_finite() {
                            return Err(ScmError::BadWeight(name.clone(), p.clone()));
                        }
                    }
                }
                Mechanism::BernoulliLogistic { intercept, weights } => {
                    if !intercept.is_finite() {
                        return Err(ScmError::BadWeight(name.clone(), "<intercept>".into()));
                    }
                    for (p, w) in weights {
                        if !w.is_finite() {
                            return Err(ScmError::BadWeight(name.clone(), p.clone()));
                        }
                    }
                }
                Mechanism::DiscreteCpt {
                    cardinality,
                    parents,
                    table,
                } => {
                    if *cardinality < 2 {
                        return Err(ScmError::BadCardinality(name.clone()));
                    }
                    let mut rows = 1usize;
                    for p in parents {
                        match mechanisms
                            .get(p)
                            .ok_or_else(|| ScmError::MissingMechanism(p.clone()))?
                            .output_kind()
                        {
                            ColumnKind::Discrete { cardinality } => rows *= cardinality,
                            ColumnKind::Continuous => {
                                return Err(ScmError::CptParentNotDiscrete(
                                    name.clone(),
                                    p.clone(),
                                ))
                            }
                        }
                    }
                    if table.len() != rows {
                        return Err(ScmError::CptRowCount(name.clone(), table.len(), rows));
                    }
                    for (i, row) in table.iter().enumerate() {
                        if row.len() != *cardinality {
                            return Err(ScmError::CptRowLength(
                                name.clone(),
                                i,
                                row.len(),
                                *cardinality,
                            ));
                        }
                        let sum: f64 = row.iter().sum();
                        if row.iter().any(|p| !p.is_finite() || *p < 0.0)
                            || (sum - 1.0).abs() > 1e-9
                        {
                            return Err(ScmError::CptRowNotDistribution(name.clone(), i, sum));
                        }
                    }
                }
            }
        }
        Ok(ScmSpec { dag, mechanisms })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn mechanism(&self, node: &str) -> Result<&Mechanism, ScmError> {
        self.mechanisms
            .get(node)
            .ok_or_else(|| ScmError::MissingMechanism(node.to_string()))
    }

    pub fn column_kind(&self, node: &str) -> Result<ColumnKind, ScmError> {
        Ok(self.mechanism(node)?.output_kind())
    }

    pub fn from_file(file: &ScmFile) -> Result<Self, ScmError> {
        let dag = Dag::new(
            file.nodes.iter().map(|d| (d.name.clone(), d.role)),
            file.edges.iter().map(|e| (e.from.clone(), e.to.clone())),
        )?;
        let mechanisms = file
            .nodes
            .iter()
            .map(|d| (d.name.clone(), d.mechanism.clone()))
            .collect();
        ScmSpec::new(dag, mechanisms)
    }

    pub fn to_file(&self) -> ScmFile {
        let dag_file = self.dag.to_file();
        ScmFile {
            nodes: dag_file
                .nodes
                .into_iter()
                .map(|NodeDecl { name, role }| {
                    let mechanism = self.mechanisms[&name].clone();
                    ScmNodeDecl {
                        name,
                        role,
                        mechanism,
                    }
                })
                .collect(),
            edges: dag_file.edges,
        }
    }

    /// Multiplies the weight of `parent` inside `child`'s mechanism by
    /// `factor`. Errors for CPT nodes and for absent weights.
    pub fn scale_weight(&mut self, child: &str, parent: &str, factor: f64) -> Result<(), ScmError> {
        let mech = self
            .mechanisms
            .get_mut(child)
            .ok_or_else(|| ScmError::MissingMechanism(child.to_string()))?;
        let weights = match mech {
            Mechanism::LinearGaussian { weights, .. }
            | Mechanism::BernoulliLogistic { weights, .. } => weights,
            Mechanism::DiscreteCpt { .. } => {
                return Err(ScmError::NoSuchWeight(
                    child.to_string(),
                    parent.to_string(),
                ))
            }
        };
        let w = weights
            .get_mut(parent)
            .ok_or_else(|| ScmError::NoSuchWeight(child.to_string(), parent.to_string()))?;
        *w *= factor;
        Ok(())
    }

    /// Draws `n` observational rows.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset, ScmError> {
        self.sample_with(n, seed, &BTreeMap::new())
    }

    /// Draws `n` rows with each variable in `interventions` forced to the
    /// given constant; its mechanism is not evaluated, everything downstream
    /// responds through the usual mechanisms.
    pub fn intervene_sample(
        &self,
        n: usize,
        seed: u64,
        interventions: &BTreeMap<String, f64>,
    ) -> Result<Dataset, ScmError> {
        self.sample_with(n, seed, interventions)
    }

    fn sample_with(
        &self,
        n: usize,
        seed: u64,
        interventions: &BTreeMap<String, f64>,
    ) -> Result<Dataset, ScmError> {
        for (node, &v) in interventions {
            if !self.dag.contains(node) {
                return Err(ScmError::InterveneUnknown(node.clone()));
            }
            if node == self.dag.target() {
                return Err(ScmError::InterveneTarget(node.clone()));
            }
            if let ColumnKind::Discrete { cardinality } = self.column_kind(node)? {
                let ok = v.fract() == 0.0 && v >= 0.0 && (v as usize) < cardinality;
                if !ok {
                    return Err(ScmError::InterveneBadLevel(node.clone(), v));
                }
            }
        }

        let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for node in self.dag.topological_order() {
            let node = self.intern(&node);
            if let Some(&v) = interventions.get(node) {
                values.insert(node, vec![v; n]);
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(node_seed(seed, node));
            let mech = &self.mechanisms[node];
            let col = match mech {
                Mechanism::LinearGaussian {
                    intercept,
                    weights,
                    noise_std,
                } => {
                    let noise = Normal::new(0.0, *noise_std).expect("validated noise_std");
                    let parent_cols: Vec<(&Vec<f64>, f64)> = weights
                        .iter()
                        .map(|(p, w)| (&values[p.as_str()], *w))
                        .collect();
                    (0..n)
                        .map(|row| {
                            let mut v = *intercept;
                            for (col, w) in &parent_cols {
                                v += w * col[row];
                            }
                            v + noise.sample(&mut rng)
                        })
                        .collect()
                }
                Mechanism::DiscreteCpt {
                    cardinality: _,
                    parents,
                    table,
                } => {
                    let strides = self.cpt_strides(parents)?;
                    let parent_cols: Vec<&Vec<f64>> =
                        parents.iter().map(|p| &values[p.as_str()]).collect();
                    (0..n)
                        .map(|row| {
                            let mut idx = 0usize;
                            for (col, stride) in parent_cols.iter().zip(&strides) {
                                idx += (col[row] as usize) * stride;
                            }
                            let u: f64 = rng.random();
                            sample_level(&table[idx], u)
                        })
                        .collect()
                }
                Mechanism::BernoulliLogistic { intercept, weights } => {
                    let parent_cols: Vec<(&Vec<f64>, f64)> = weights
                        .iter()
                        .map(|(p, w)| (&values[p.as_str()], *w))
                        .collect();
                    (0..n)
                        .map(|row| {
                            let mut z = *intercept;
                            for (col, w) in &parent_cols {
                                z += w * col[row];
                            }
                            let p = sigmoid(z);
                            let u: f64 = rng.random();
                            if u < p {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect()
                }
            };
            values.insert(node, col);
        }

        // Columns in node declaration order.
        let columns = self
            .dag
            .node_names()
            .iter()
            .map(|name| {
                Ok(Column {
                    name: name.clone(),
                    role: self.dag.role(name)?,
                    kind: self.column_kind(name)?,
                    values: values.remove(name.as_str()).expect("sampled every node"),
                })
            })
            .collect::<Result<Vec<_>, ScmError>>()?;
        Ok(Dataset::new(columns).expect("constructed columns are consistent"))
    }

    // Borrow the canonical name string owned by the mechanism map, so value
    // columns can be keyed by &str while nodes are visited in topo order.
    fn intern(&self, name: &str) -> &str {
        self.mechanisms
            .get_key_value(name)
            .expect("validated node")
            .0
    }

    // Odometer strides: the last parent varies fastest.
    fn cpt_strides(&self, parents: &[String]) -> Result<Vec<usize>, ScmError> {
        let cards: Vec<usize> = parents
            .iter()
            .map(|p| match self.column_kind(p)? {
                ColumnKind::Discrete { cardinality } => Ok(cardinality),
                ColumnKind::Continuous => unreachable!("validated at construction"),
            })
            .collect::<Result<_, ScmError>>()?;
        let mut strides = vec![1usize; parents.len()];
        for i in (0..parents.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * cards[i + 1];
        }
        Ok(strides)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn sample_level(row: &[f64], u: f64) -> f64 {
    let mut acc = 0.0;
    for (level, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return level as f64;
        }
    }
    (row.len() - 1) as f64
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

// Independent stream per node: hash the name, mix with the master seed.
fn node_seed(master: u64, name: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(master ^ h)
}

/// A generated benchmark model with its ground truth.
///
/// The graph is `S -> A`, a pool of candidates, and a binary target `Y`.
/// Biased candidates are children of `S` and parents of `Y`; clean candidates
/// are either roots or children of `A`, and a subset of them also feeds `Y`.
/// The causally fair choice is exactly the clean set.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub spec: ScmSpec,
    /// Candidates with a direct `S` edge; must not be selected.
    pub biased: BTreeSet<String>,
    /// Candidates unconnected to `S` except through `A`; safe to select.
    pub clean: BTreeSet<String>,
    /// The clean candidates that actually influence `Y`.
    pub y_clean_parents: BTreeSet<String>,
}

impl Benchmark {
    /// The set a perfect selector should return.
    pub fn fair_set(&self) -> &BTreeSet<String> {
        &self.clean
    }
}

/// Benchmark with each candidate biased independently with probability
/// `p_biased`.
pub fn gen_benchmark(n_candidates: usize, p_biased: f64, seed: u64) -> Result<Benchmark, ScmError> {
    if n_candidates == 0 {
        return Err(ScmError::NoCandidates);
    }
    if !(0.0..=1.0).contains(&p_biased) {
        return Err(ScmError::BadBiasedFraction(p_biased));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let biased_idx: BTreeSet<usize> = (0..n_candidates)
        .filter(|_| rng.random_bool(p_biased))
        .collect();
    build_benchmark(n_candidates, &biased_idx, &mut rng)
}

/// Benchmark with exactly `k_biased` biased candidates, drawn uniformly.
pub fn gen_benchmark_exact(
    n_candidates: usize,
    k_biased: usize,
    seed: u64,
) -> Result<Benchmark, ScmError> {
    if n_candidates == 0 {
        return Err(ScmError::NoCandidates);
    }
    if k_biased > n_candidates {
        return Err(ScmError::BadBiasedCount(k_biased, n_candidates));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let biased_idx: BTreeSet<usize> =
        rand::seq::index::sample(&mut rng, n_candidates, k_biased)
            .into_iter()
            .collect();
    build_benchmark(n_candidates, &biased_idx, &mut rng)
}

// P(A=1 | S): rows for S=0 and S=1.
const A_GIVEN_S: [[f64; 2]; 2] = [[0.7, 0.3], [0.25, 0.75]];
const MEAN_A: f64 = 0.5 * (A_GIVEN_S[0][1] + A_GIVEN_S[1][1]);

fn build_benchmark(
    n_candidates: usize,
    biased_idx: &BTreeSet<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Benchmark, ScmError> {
    let cand_name = |i: usize| format!("X{}", i + 1);

    let mut nodes: Vec<(String, Role)> = vec![
        ("S".to_string(), Role::Sensitive),
        ("A".to_string(), Role::Admissible),
    ];
    let mut edges: Vec<(String, String)> = vec![("S".to_string(), "A".to_string())];
    let mut mechanisms: BTreeMap<String, Mechanism> = BTreeMap::new();
    mechanisms.insert(
        "S".to_string(),
        Mechanism::DiscreteCpt {
            cardinality: 2,
            parents: vec![],
            table: vec![vec![0.5, 0.5]],
        },
    );
    mechanisms.insert(
        "A".to_string(),
        Mechanism::DiscreteCpt {
            cardinality: 2,
            parents: vec!["S".to_string()],
            table: A_GIVEN_S.iter().map(|r| r.to_vec()).collect(),
        },
    );

    let mut biased = BTreeSet::new();
    let mut clean = BTreeSet::new();
    // mean_of[i] is E[Xi], used to center the target's logit.
    let mut mean_of: BTreeMap<String, f64> = BTreeMap::new();
    for i in 0..n_candidates {
        let name = cand_name(i);
        nodes.push((name.clone(), Role::Candidate));
        if biased_idx.contains(&i) {
            // Positive weights throughout the biased pathway keep the
            // sensitive effect on the target from cancelling across nodes.
            let w = rng.random_range(1.0..1.5);
            edges.push(("S".to_string(), name.clone()));
            mechanisms.insert(
                name.clone(),
                Mechanism::LinearGaussian {
                    intercept: 0.0,
                    weights: BTreeMap::from([("S".to_string(), w)]),
                    noise_std: 1.0,
                },
            );
            mean_of.insert(name.clone(), w * 0.5);
            biased.insert(name);
        } else {
            clean.insert(name.clone());
            if rng.random_bool(0.5) {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let w = sign * rng.random_range(0.5..1.5);
                edges.push(("A".to_string(), name.clone()));
                mechanisms.insert(
                    name.clone(),
                    Mechanism::LinearGaussian {
                        intercept: 0.0,
                        weights: BTreeMap::from([("A".to_string(), w)]),
                        noise_std: 1.0,
                    },
                );
                mean_of.insert(name, w * MEAN_A);
            } else {
                mechanisms.insert(
                    name.clone(),
                    Mechanism::LinearGaussian {
                        intercept: 0.0,
                        weights: BTreeMap::new(),
                        noise_std: 1.0,
                    },
                );
                mean_of.insert(name, 0.0);
            }
        }
    }

    // Target parents: A, every biased candidate, and a random clean subset
    // (at least two clean parents whenever two exist, so a fair selection
    // still has signal to work with).
    let mut y_weights: BTreeMap<String, f64> = BTreeMap::new();
    y_weights.insert("A".to_string(), rng.random_range(0.5..1.5));
    let mut y_clean_parents = BTreeSet::new();
    let clean_list: Vec<String> = clean.iter().cloned().collect();
    for name in &clean_list {
        if rng.random_bool(0.5) {
            y_clean_parents.insert(name.clone());
        }
    }
    let need = clean_list.len().min(2);
    while y_clean_parents.len() < need {
        let pick = clean_list.choose(rng).expect("clean_list non-empty");
        y_clean_parents.insert(pick.clone());
    }
    for name in &y_clean_parents {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        y_weights.insert(name.clone(), sign * rng.random_range(0.5..1.5));
    }
    for name in &biased {
        y_weights.insert(name.clone(), rng.random_range(0.5..1.0));
    }

    let mean_of_node = |name: &str| -> f64 {
        if name == "A" {
            MEAN_A
        } else {
            mean_of[name]
        }
    };
    let intercept: f64 = -y_weights
        .iter()
        .map(|(p, w)| w * mean_of_node(p))
        .sum::<f64>();

    nodes.push(("Y".to_string(), Role::Target));
    for p in y_weights.keys() {
        edges.push((p.clone(), "Y".to_string()));
    }
    mechanisms.insert(
        "Y".to_string(),
        Mechanism::BernoulliLogistic {
            intercept,
            weights: y_weights,
        },
    );

    let dag = Dag::new(nodes, edges)?;
    let spec = ScmSpec::new(dag, mechanisms)?;
    Ok(Benchmark {
        spec,
        biased,
        clean,
        y_clean_parents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_node_chain(w: f64) -> ScmSpec {
        let dag = Dag::new(
            [
                ("Z".to_string(), Role::Sensitive),
                ("X".to_string(), Role::Candidate),
                ("Y".to_string(), Role::Target),
            ],
            [
                ("Z".to_string(), "X".to_string()),
                ("X".to_string(), "Y".to_string()),
            ],
        )
        .unwrap();
        let mechanisms = BTreeMap::from([
            (
                "Z".to_string(),
                Mechanism::DiscreteCpt {
                    cardinality: 2,
                    parents: vec![],
                    table: vec![vec![0.5, 0.5]],
                },
            ),
            (
                "X".to_string(),
                Mechanism::LinearGaussian {
                    intercept: 2.0,
                    weights: BTreeMap::from([("Z".to_string(), w)]),
                    noise_std: 1.0,
                },
            ),
            (
                "Y".to_string(),
                Mechanism::BernoulliLogistic {
                    intercept: 0.0,
                    weights: BTreeMap::from([("X".to_string(), 1.0)]),
                },
            ),
        ]);
        ScmSpec::new(dag, mechanisms).unwrap()
    }

    #[test]
    fn rejects_mechanism_parent_mismatch() {
        let dag = Dag::new(
            [
                ("Z".to_string(), Role::Sensitive),
                ("Y".to_string(), Role::Target),
            ],
            [("Z".to_string(), "Y".to_string())],
        )
        .unwrap();
        let missing = BTreeMap::from([
            (
                "Z".to_string(),
                Mechanism::DiscreteCpt {
                    cardinality: 2,
                    parents: vec![],
                    table: vec![vec![0.5, 0.5]],
                },
            ),
            (
                "Y".to_string(),
                Mechanism::BernoulliLogistic {
                    intercept: 0.0,
                    weights: BTreeMap::new(),
                },
            ),
        ]);
        assert!(matches!(
            ScmSpec::new(dag.clone(), missing),
            Err(ScmError::ParentNotUsed(_, _))
        ));

        let extra = BTreeMap::from([
            (
                "Z".to_string(),
                Mechanism::DiscreteCpt {
                    cardinality: 2,
                    parents: vec![],
                    table: vec![vec![0.5, 0.5]],
                },
            ),
            (
                "Y".to_string(),
                Mechanism::BernoulliLogistic {
                    intercept: 0.0,
                    weights: BTreeMap::from([
                        ("Z".to_string(), 1.0),
                        ("Q".to_string(), 1.0),
                    ]),
                },
            ),
        ]);
        assert!(matches!(
            ScmSpec::new(dag, extra),
            Err(ScmError::NotAParent(_, _))
        ));
    }

    #[test]
    fn rejects_bad_cpt() {
        let dag = Dag::new(
            [
                ("Z".to_string(), Role::Sensitive),
                ("Y".to_string(), Role::Target),
            ],
            [("Z".to_string(), "Y".to_string())],
        )
        .unwrap();
        let bad_sum = BTreeMap::from([
            (
                "Z".to_string(),
                Mechanism::DiscreteCpt {
                    cardinality: 2,
                    parents: vec![],
                    table: vec![vec![0.6, 0.6]],
                },
            ),
            (
                "Y".to_string(),
                Mechanism::DiscreteCpt {
                    cardinality: 2,
                    parents: vec!["Z".to_string()],
                    table: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                },
            ),
        ]);
        assert!(matches!(
            ScmSpec::new(dag.clone(), bad_sum),
            Err(ScmError::CptRowNotDistribution(_, 0, _))
        ));

        let bad_rows = BTreeMap::from([
            (
                "Z".to_string(),
                Mechanism::DiscreteCpt {
                    cardinality: 2,
                    parents: vec![],
                    table: vec![vec![0.5, 0.5]],
                },
            ),
            (
                "Y".to_string(),
                Mechanism::DiscreteCpt {
                    cardinality: 2,
                    parents: vec!["Z".to_string()],
                    table: vec![vec![0.5, 0.5]],
                },
            ),
        ]);
        assert!(matches!(
            ScmSpec::new(dag, bad_rows),
            Err(ScmError::CptRowCount(_, 1, 2))
        ));
    }

    #[test]
    fn rejects_bad_noise() {
        let dag = Dag::new(
            [
                ("X".to_string(), Role::Candidate),
                ("Y".to_string(), Role::Target),
            ],
            [],
        )
        .unwrap();
        let mech = BTreeMap::from([
            (
                "X".to_string(),
                Mechanism::LinearGaussian {
                    intercept: 0.0,
                    weights: BTreeMap::new(),
                    noise_std: 0.0,
                },
            ),
            (
                "Y".to_string(),
                Mechanism::BernoulliLogistic {
                    intercept: 0.0,
                    weights: BTreeMap::new(),
                },
            ),
        ]);
        assert!(matches!(
            ScmSpec::new(dag, mech),
            Err(ScmError::BadNoiseStd(_, _))
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = two_node_chain(1.5);
        let a = spec.sample(200, 7).unwrap();
        let b = spec.sample(200, 7).unwrap();
        let c = spec.sample(200, 8).unwrap();
        assert_eq!(a.column("X").unwrap().values, b.column("X").unwrap().values);
        assert_ne!(a.column("X").unwrap().values, c.column("X").unwrap().values);
    }

    #[test]
    fn linear_gaussian_moments_and_slope() {
        let spec = two_node_chain(1.5);
        let d = spec.sample(20_000, 3).unwrap();
        let z = &d.column("Z").unwrap().values;
        let x = &d.column("X").unwrap().values;
        let n = z.len() as f64;
        let mean_x: f64 = x.iter().sum::<f64>() / n;
        // E[X] = 2 + 1.5 * 0.5.
        assert_abs_diff_eq!(mean_x, 2.75, epsilon = 0.05);

        let mean_z: f64 = z.iter().sum::<f64>() / n;
        let cov: f64 = z
            .iter()
            .zip(x.iter())
            .map(|(zi, xi)| (zi - mean_z) * (xi - mean_x))
            .sum::<f64>()
            / n;
        let var_z: f64 = z.iter().map(|zi| (zi - mean_z) * (zi - mean_z)).sum::<f64>() / n;
        assert_abs_diff_eq!(cov / var_z, 1.5, epsilon = 0.06);
    }

    #[test]
    fn cpt_conditional_frequencies() {
        let b = gen_benchmark_exact(1, 0, 11).unwrap();
        let d = b.spec.sample(20_000, 5).unwrap();
        let s = &d.column("S").unwrap().values;
        let a = &d.column("A").unwrap().values;
        for s_level in [0.0, 1.0] {
            let rows: Vec<usize> = (0..s.len()).filter(|&i| s[i] == s_level).collect();
            let freq = rows.iter().filter(|&&i| a[i] == 1.0).count() as f64 / rows.len() as f64;
            let expect = A_GIVEN_S[s_level as usize][1];
            assert_abs_diff_eq!(freq, expect, epsilon = 0.02);
        }
    }

    #[test]
    fn bernoulli_logistic_balanced_at_zero() {
        let dag = Dag::new([("Y".to_string(), Role::Target)], []).unwrap();
        let spec = ScmSpec::new(
            dag,
            BTreeMap::from([(
                "Y".to_string(),
                Mechanism::BernoulliLogistic {
                    intercept: 0.0,
                    weights: BTreeMap::new(),
                },
            )]),
        )
        .unwrap();
        let d = spec.sample(20_000, 1).unwrap();
        let mean: f64 =
            d.column("Y").unwrap().values.iter().sum::<f64>() / 20_000.0;
        assert_abs_diff_eq!(mean, 0.5, epsilon = 0.02);
    }

    #[test]
    fn intervention_fixes_column_and_shifts_children() {
        let spec = two_node_chain(1.5);
        let do_z = BTreeMap::from([("Z".to_string(), 1.0)]);
        let d = spec.intervene_sample(5000, 2, &do_z).unwrap();
        assert!(d.column("Z").unwrap().values.iter().all(|&v| v == 1.0));
        let mean_x: f64 = d.column("X").unwrap().values.iter().sum::<f64>() / 5000.0;
        // E[X | do(Z=1)] = 2 + 1.5.
        assert_abs_diff_eq!(mean_x, 3.5, epsilon = 0.06);
    }

    #[test]
    fn intervention_leaves_nondescendants_untouched() {
        let spec = two_node_chain(1.5);
        let obs = spec.sample(1000, 9).unwrap();
        let do_x = BTreeMap::from([("X".to_string(), 0.0)]);
        let cut = spec.intervene_sample(1000, 9, &do_x).unwrap();
        // Z is not downstream of X: identical draws row by row.
        assert_eq!(
            obs.column("Z").unwrap().values,
            cut.column("Z").unwrap().values
        );
        assert!(cut.column("X").unwrap().values.iter().all(|&v| v == 0.0));
        assert_ne!(
            obs.column("Y").unwrap().values,
            cut.column("Y").unwrap().values
        );
    }

    #[test]
    fn intervention_validates_levels() {
        let spec = two_node_chain(1.0);
        let bad = BTreeMap::from([("Z".to_string(), 2.0)]);
        assert!(matches!(
            spec.intervene_sample(10, 0, &bad),
            Err(ScmError::InterveneBadLevel(_, _))
        ));
        let unknown = BTreeMap::from([("nope".to_string(), 0.0)]);
        assert!(matches!(
            spec.intervene_sample(10, 0, &unknown),
            Err(ScmError::InterveneUnknown(_))
        ));
        let target = BTreeMap::from([("Y".to_string(), 1.0)]);
        assert!(matches!(
            spec.intervene_sample(10, 0, &target),
            Err(ScmError::InterveneTarget(_))
        ));
    }

    #[test]
    fn do_on_root_matches_conditioning() {
        // With A parentless, P(Y | do(A=a)) = P(Y | A=a).
        let dag = Dag::new(
            [
                ("A".to_string(), Role::Admissible),
                ("Y".to_string(), Role::Target),
            ],
            [("A".to_string(), "Y".to_string())],
        )
        .unwrap();
        let spec = ScmSpec::new(
            dag,
            BTreeMap::from([
                (
                    "A".to_string(),
                    Mechanism::DiscreteCpt {
                        cardinality: 2,
                        parents: vec![],
                        table: vec![vec![0.4, 0.6]],
                    },
                ),
                (
                    "Y".to_string(),
                    Mechanism::BernoulliLogistic {
                        intercept: 0.0,
                        weights: BTreeMap::from([("A".to_string(), 1.0)]),
                    },
                ),
            ]),
        )
        .unwrap();

        let obs = spec.sample(50_000, 6).unwrap();
        let a = &obs.column("A").unwrap().values;
        let y = &obs.column("Y").unwrap().values;
        let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] == 1.0).collect();
        let cond = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;

        let do_a = BTreeMap::from([("A".to_string(), 1.0)]);
        let cut = spec.intervene_sample(50_000, 61, &do_a).unwrap();
        let interv =
            cut.column("Y").unwrap().values.iter().sum::<f64>() / 50_000.0;
        assert_abs_diff_eq!(cond, interv, epsilon = 0.015);
    }

    #[test]
    fn benchmark_all_clean_when_p_zero() {
        let b = gen_benchmark(12, 0.0, 4).unwrap();
        assert!(b.biased.is_empty());
        assert_eq!(b.clean.len(), 12);
        let c1 = b.spec.dag().oracle_c1(false).unwrap();
        assert_eq!(c1, b.clean);
        assert_eq!(b.spec.dag().oracle_fair_set().unwrap(), b.clean);
        assert!(b.y_clean_parents.len() >= 2);
        assert!(b.y_clean_parents.is_subset(&b.clean));
    }

    #[test]
    fn benchmark_all_biased_when_p_one() {
        let b = gen_benchmark(8, 1.0, 4).unwrap();
        assert_eq!(b.biased.len(), 8);
        assert!(b.clean.is_empty());
        assert!(b.spec.dag().oracle_c1(false).unwrap().is_empty());
        assert!(b.spec.dag().oracle_fair_set().unwrap().is_empty());
    }

    #[test]
    fn benchmark_exact_ground_truth_matches_oracles() {
        let b = gen_benchmark_exact(30, 7, 123).unwrap();
        assert_eq!(b.biased.len(), 7);
        assert_eq!(b.clean.len(), 23);
        let dag = b.spec.dag();
        let c1 = dag.oracle_c1(false).unwrap();
        assert_eq!(c1, b.clean);
        assert!(dag.oracle_c2(&c1).unwrap().is_empty());
        assert_eq!(dag.oracle_fair_set().unwrap(), b.clean);
    }

    #[test]
    fn benchmark_fraction_concentrates() {
        let mut total = 0usize;
        for seed in 0..40 {
            total += gen_benchmark(25, 0.3, seed).unwrap().biased.len();
        }
        let frac = total as f64 / (40.0 * 25.0);
        assert_abs_diff_eq!(frac, 0.3, epsilon = 0.08);
    }

    #[test]
    fn file_round_trip_preserves_samples() {
        let b = gen_benchmark_exact(6, 2, 99).unwrap();
        let json = serde_json::to_string_pretty(&b.spec.to_file()).unwrap();
        let parsed: ScmFile = serde_json::from_str(&json).unwrap();
        let back = ScmSpec::from_file(&parsed).unwrap();
        let d1 = b.spec.sample(100, 42).unwrap();
        let d2 = back.sample(100, 42).unwrap();
        for c in d1.columns() {
            assert_eq!(&c.values, back_col(&d2, &c.name));
        }

        // The same JSON parses as a bare graph file too.
        let dag_file: crate::graph::DagFile = serde_json::from_str(&json).unwrap();
        assert_eq!(dag_file.nodes.len(), 9);
    }

    fn back_col<'a>(d: &'a Dataset, name: &str) -> &'a Vec<f64> {
        &d.column(name).unwrap().values
    }

    #[test]
    fn scale_weight_changes_children() {
        let mut spec = two_node_chain(1.0);
        spec.scale_weight("X", "Z", 2.0).unwrap();
        match spec.mechanism("X").unwrap() {
            Mechanism::LinearGaussian { weights, .. } => {
                assert_eq!(weights["Z"], 2.0);
            }
            _ => unreachable!(),
        }
        assert!(matches!(
            spec.scale_weight("Z", "X", 2.0),
            Err(ScmError::NoSuchWeight(_, _))
        ));
    }

    #[test]
    fn target_prevalence_is_balanced() {
        let b = gen_benchmark_exact(20, 5, 321).unwrap();
        let d = b.spec.sample(20_000, 17).unwrap();
        let mean: f64 = d.column("Y").unwrap().values.iter().sum::<f64>() / 20_000.0;
        assert!((0.35..=0.65).contains(&mean), "prevalence {mean}");
    }
}
