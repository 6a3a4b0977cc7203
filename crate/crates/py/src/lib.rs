//! Python bindings over the core crate: graphs, model specs, datasets,
//! selection, classifier training, and fairness metrics.
//!
//! Build the cdylib and import it as `fairsel`; `python/smoke_test.py` in
//! the repository root shows the whole flow.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use fairsel_core::ci::{CiTester, FisherZ, GTest, OracleCi};
use fairsel_core::data::{infer_kind, Column, Dataset, RolesFile};
use fairsel_core::graph::{Dag, DagFile, Role};
use fairsel_core::logistic::{accuracy, train, LogRegModel, TrainConfig};
use fairsel_core::metrics::{
    abs_odds_difference as core_odds, cmi as core_cmi, default_intervention_values,
    interventional_gap as core_gap,
};
use fairsel_core::scm::{
    gen_benchmark as core_gen, gen_benchmark_exact as core_gen_exact, ScmFile, ScmSpec,
};
use fairsel_core::selector::{grp_sel, seq_sel, SelectionResult};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// Causal graph with node roles.
#[pyclass(module = "fairsel", skip_from_py_object)]
#[derive(Clone)]
struct Graph {
    inner: Dag,
}

#[pymethods]
impl Graph {
    /// Parses a graph from its JSON text; model-spec JSON is accepted too.
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        let file: DagFile = serde_json::from_str(json).map_err(value_err)?;
        Ok(Graph {
            inner: Dag::from_file(&file).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(io_err)?;
        Graph::new(&text)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner.to_file()).expect("serializable graph")
    }

    fn node_names(&self) -> Vec<String> {
        self.inner.node_names().to_vec()
    }

    fn sensitive(&self) -> Vec<String> {
        self.inner.sensitive()
    }

    fn admissible(&self) -> Vec<String> {
        self.inner.admissible()
    }

    fn candidates(&self) -> Vec<String> {
        self.inner.candidates()
    }

    fn target(&self) -> String {
        self.inner.target().to_string()
    }

    /// True when `z` blocks every path between `x` and `y`.
    #[pyo3(signature = (x, y, z = Vec::new()))]
    fn d_separated(&self, x: Vec<String>, y: Vec<String>, z: Vec<String>) -> PyResult<bool> {
        self.inner.d_separated(&x, &y, &z).map_err(value_err)
    }

    /// One open path between the sets, rendered with arrows, if any.
    #[pyo3(signature = (x, y, z = Vec::new()))]
    fn unblocked_path(
        &self,
        x: Vec<String>,
        y: Vec<String>,
        z: Vec<String>,
    ) -> PyResult<Option<String>> {
        Ok(self
            .inner
            .unblocked_path(&x, &y, &z)
            .map_err(value_err)?
            .map(|p| p.render(&self.inner)))
    }

    /// Candidates provably safe to use, verified directly on the graph.
    fn fair_set(&self) -> PyResult<Vec<String>> {
        Ok(self
            .inner
            .oracle_fair_set()
            .map_err(value_err)?
            .into_iter()
            .collect())
    }
}

/// Sampleable causal model: graph plus one mechanism per node.
#[pyclass(module = "fairsel", skip_from_py_object)]
#[derive(Clone)]
struct ModelSpec {
    inner: ScmSpec,
}

#[pymethods]
impl ModelSpec {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        let file: ScmFile = serde_json::from_str(json).map_err(value_err)?;
        Ok(ModelSpec {
            inner: ScmSpec::from_file(&file).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(io_err)?;
        ModelSpec::new(&text)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner.to_file()).expect("serializable spec")
    }

    fn graph(&self) -> Graph {
        Graph {
            inner: self.inner.dag().clone(),
        }
    }

    /// Draws `n` observational rows.
    fn sample(&self, n: usize, seed: u64) -> PyResult<Data> {
        Ok(Data {
            inner: self.inner.sample(n, seed).map_err(value_err)?,
        })
    }

    /// Draws `n` rows with the given variables clamped by intervention.
    fn intervene_sample(
        &self,
        n: usize,
        seed: u64,
        assignments: BTreeMap<String, f64>,
    ) -> PyResult<Data> {
        Ok(Data {
            inner: self
                .inner
                .intervene_sample(n, seed, &assignments)
                .map_err(value_err)?,
        })
    }

    /// Multiplies one edge weight, keeping the structure fixed.
    fn scale_weight(&mut self, child: &str, parent: &str, factor: f64) -> PyResult<()> {
        self.inner
            .scale_weight(child, parent, factor)
            .map_err(value_err)
    }
}

/// Column-oriented dataset with roles and kinds attached.
#[pyclass(module = "fairsel", skip_from_py_object)]
#[derive(Clone)]
struct Data {
    inner: Dataset,
}

#[pymethods]
impl Data {
    /// Loads a CSV with its roles sidecar.
    #[staticmethod]
    fn read(csv_path: PathBuf, roles_path: PathBuf) -> PyResult<Self> {
        let roles = Dataset::read_roles(&roles_path).map_err(io_err)?;
        Ok(Data {
            inner: Dataset::read_csv(&csv_path, &roles).map_err(value_err)?,
        })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(io_err)
    }

    fn write_roles(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_roles(&path).map_err(io_err)
    }

    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    fn column_names(&self) -> Vec<String> {
        self.inner.column_names()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.column(name).map_err(value_err)?.values.clone())
    }

    fn roles_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner.roles_file()).expect("serializable roles")
    }

    /// Copy with only the given row indices, in order.
    fn take_rows(&self, rows: Vec<usize>) -> PyResult<Data> {
        Ok(Data {
            inner: self.inner.take_rows(&rows).map_err(value_err)?,
        })
    }
}

/// Outcome of one selection run.
#[pyclass(module = "fairsel", frozen)]
struct Selection {
    #[pyo3(get)]
    c1: Vec<String>,
    #[pyo3(get)]
    c2: Vec<String>,
    #[pyo3(get)]
    selected: Vec<String>,
    #[pyo3(get)]
    test_count: usize,
}

impl Selection {
    fn from_result(result: SelectionResult) -> Self {
        Selection {
            c1: result.c1.into_iter().collect(),
            c2: result.c2.into_iter().collect(),
            selected: result.selected.into_iter().collect(),
            test_count: result.test_count,
        }
    }
}

fn run_selector(
    tester: &dyn CiTester,
    roles: &RolesFile,
    algo: &str,
    alpha: f64,
    subset_mode: bool,
    seed: u64,
) -> PyResult<Selection> {
    let result = match algo {
        "seqsel" => seq_sel(tester, roles, alpha, subset_mode, seed),
        "grpsel" => grp_sel(tester, roles, alpha, subset_mode, seed),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown algorithm {other:?}; use \"seqsel\" or \"grpsel\""
            )))
        }
    };
    Ok(Selection::from_result(result.map_err(value_err)?))
}

/// Selects fair features by querying the graph directly.
#[pyfunction]
#[pyo3(signature = (graph, algo = "seqsel", alpha = 0.01, subset_mode = false, seed = 0))]
fn select_with_graph(
    graph: &Graph,
    algo: &str,
    alpha: f64,
    subset_mode: bool,
    seed: u64,
) -> PyResult<Selection> {
    let roles = RolesFile::from_dag(&graph.inner);
    let tester = OracleCi { dag: &graph.inner };
    run_selector(&tester, &roles, algo, alpha, subset_mode, seed)
}

/// Selects fair features from data with a statistical backend
/// (`"fisher_z"` or `"g_test"`).
#[pyfunction]
#[pyo3(signature = (data, backend = "fisher_z", algo = "seqsel", alpha = 0.01, subset_mode = false, seed = 0))]
fn select_with_data(
    data: &Data,
    backend: &str,
    algo: &str,
    alpha: f64,
    subset_mode: bool,
    seed: u64,
) -> PyResult<Selection> {
    let roles = data.inner.roles_file();
    match backend {
        "fisher_z" => {
            let tester = FisherZ { data: &data.inner };
            run_selector(&tester, &roles, algo, alpha, subset_mode, seed)
        }
        "g_test" => {
            let tester = GTest { data: &data.inner };
            run_selector(&tester, &roles, algo, alpha, subset_mode, seed)
        }
        other => Err(PyValueError::new_err(format!(
            "unknown backend {other:?}; use \"fisher_z\" or \"g_test\""
        ))),
    }
}

/// Synthetic benchmark generator; returns (spec, clean, biased).
#[pyfunction]
fn gen_benchmark(
    n_features: usize,
    p_biased: f64,
    seed: u64,
) -> PyResult<(ModelSpec, Vec<String>, Vec<String>)> {
    let bench = core_gen(n_features, p_biased, seed).map_err(value_err)?;
    Ok((
        ModelSpec { inner: bench.spec },
        bench.clean.into_iter().collect(),
        bench.biased.into_iter().collect(),
    ))
}

/// Benchmark with an exact biased count; returns (spec, clean, biased).
#[pyfunction]
fn gen_benchmark_exact(
    n_features: usize,
    k_biased: usize,
    seed: u64,
) -> PyResult<(ModelSpec, Vec<String>, Vec<String>)> {
    let bench = core_gen_exact(n_features, k_biased, seed).map_err(value_err)?;
    Ok((
        ModelSpec { inner: bench.spec },
        bench.clean.into_iter().collect(),
        bench.biased.into_iter().collect(),
    ))
}

/// Logistic classifier with stored standardization.
#[pyclass(module = "fairsel", skip_from_py_object)]
#[derive(Clone)]
struct Model {
    inner: LogRegModel,
}

#[pymethods]
impl Model {
    #[getter]
    fn features(&self) -> Vec<String> {
        self.inner.features.clone()
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("serializable model")
    }

    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        Ok(Model {
            inner: serde_json::from_str(json).map_err(value_err)?,
        })
    }

    /// Returns (labels, probabilities) on the given rows.
    fn predict(&self, data: &Data) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let preds = self.inner.predict(&data.inner).map_err(value_err)?;
        Ok((preds.labels, preds.probabilities))
    }

    /// Features ranked by absolute standardized weight, descending.
    fn feature_importance(&self) -> PyResult<Vec<(String, f64)>> {
        self.inner.feature_importance().map_err(value_err)
    }
}

/// Trains the bundled logistic classifier by gradient descent.
#[pyfunction]
#[pyo3(signature = (data, features, target, learning_rate = 0.1, iterations = 2000, l2 = 1e-3))]
fn train_classifier(
    data: &Data,
    features: Vec<String>,
    target: &str,
    learning_rate: f64,
    iterations: usize,
    l2: f64,
) -> PyResult<Model> {
    let config = TrainConfig {
        learning_rate,
        iterations,
        l2,
        ..TrainConfig::default()
    };
    Ok(Model {
        inner: train(&data.inner, &features, target, &config).map_err(value_err)?,
    })
}

/// Fraction of matching labels.
#[pyfunction]
fn label_accuracy(predicted: Vec<f64>, truth: Vec<f64>) -> f64 {
    accuracy(&predicted, &truth)
}

/// Half the summed absolute gaps in group false- and true-positive rates.
#[pyfunction]
fn abs_odds_difference(y_true: Vec<f64>, y_pred: Vec<f64>, s: Vec<f64>) -> PyResult<f64> {
    core_odds(&y_true, &y_pred, &s).map_err(value_err)
}

/// Conditional mutual information I(s; yprime | conditioners) in nats.
/// Continuous inputs are binned into equal-frequency quantiles.
#[pyfunction]
#[pyo3(signature = (s, yprime, conditioners = Vec::new(), bins = 4))]
fn cmi(
    s: Vec<f64>,
    yprime: Vec<f64>,
    conditioners: Vec<Vec<f64>>,
    bins: usize,
) -> PyResult<f64> {
    let make = |name: &str, values: Vec<f64>| Column {
        name: name.to_string(),
        role: Role::Candidate,
        kind: infer_kind(&values),
        values,
    };
    let s_col = make("s", s);
    let y_col = make("yprime", yprime);
    let a_cols: Vec<Column> = conditioners
        .into_iter()
        .enumerate()
        .map(|(i, v)| make(&format!("a{i}"), v))
        .collect();
    let refs: Vec<&Column> = a_cols.iter().collect();
    core_cmi(&s_col, &y_col, &refs, bins).map_err(value_err)
}

/// Largest prediction shift any sensitive intervention can cause with the
/// admissible variables held fixed; returns
/// {"thresholded": ..., "probability": ...}.
#[pyfunction]
#[pyo3(signature = (spec, model, n_mc = 20_000, seed = 0))]
fn interventional_gap(
    spec: &ModelSpec,
    model: &Model,
    n_mc: usize,
    seed: u64,
) -> PyResult<BTreeMap<String, f64>> {
    let (a_values, s_values) = default_intervention_values(&spec.inner).map_err(value_err)?;
    let gap = core_gap(&spec.inner, &model.inner, &a_values, &s_values, n_mc, seed)
        .map_err(value_err)?;
    Ok(BTreeMap::from([
        ("thresholded".to_string(), gap.thresholded),
        ("probability".to_string(), gap.probability),
    ]))
}

#[pymodule]
fn fairsel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<ModelSpec>()?;
    m.add_class::<Data>()?;
    m.add_class::<Selection>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(select_with_graph, m)?)?;
    m.add_function(wrap_pyfunction!(select_with_data, m)?)?;
    m.add_function(wrap_pyfunction!(gen_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(gen_benchmark_exact, m)?)?;
    m.add_function(wrap_pyfunction!(train_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(label_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(abs_odds_difference, m)?)?;
    m.add_function(wrap_pyfunction!(cmi, m)?)?;
    m.add_function(wrap_pyfunction!(interventional_gap, m)?)?;
    Ok(())
}
