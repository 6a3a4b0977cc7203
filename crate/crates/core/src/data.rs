//! Column-oriented datasets and their on-disk formats.
//!
//! A [`Dataset`] is a list of named columns of equal length, each tagged with
//! a [`Role`] and a [`ColumnKind`]. On disk a dataset is a plain CSV with a
//! header row plus a JSON sidecar ([`RolesFile`]) assigning roles; column
//! kinds are stored in the sidecar when known and inferred from the values
//! otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::Role;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("duplicate column name: {0}")]
    DuplicateColumn(String),
    #[error("unknown column name: {0}")]
    UnknownColumn(String),
    #[error("column {0} has {1} rows, expected {2}")]
    LengthMismatch(String, usize, usize),
    #[error("column {name} row {row}: {value} is not a level of a {cardinality}-level discrete column")]
    BadLevel {
        name: String,
        row: usize,
        value: f64,
        cardinality: usize,
    },
    #[error("column {0} row {1}: value is not finite")]
    NotFinite(String, usize),
    #[error("discrete column {0} declares cardinality 0")]
    ZeroCardinality(String),
    #[error("roles file lists column {0} more than once")]
    RoleListedTwice(String),
    #[error("roles file does not cover column {0}")]
    RoleMissing(String),
    #[error("csv row {0} has {1} fields, expected {2}")]
    RaggedRow(usize, usize, usize),
    #[error("csv row {0} column {1}: cannot parse {2:?} as a number")]
    BadNumber(usize, String, String),
    #[error("dataset has no rows")]
    Empty,
}

/// Statistical type of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ColumnKind {
    Continuous,
    /// Levels are the integers `0..cardinality`, stored as `f64`.
    Discrete { cardinality: usize },
}

impl ColumnKind {
    pub fn is_discrete(&self) -> bool {
        matches!(self, ColumnKind::Discrete { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub role: Role,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
}

impl Column {
    /// Checks values against the declared kind: finite everywhere, and exact
    /// integer levels within range for discrete columns.
    pub fn validate(&self) -> Result<(), DataError> {
        match self.kind {
            ColumnKind::Discrete { cardinality } => {
                if cardinality == 0 {
                    return Err(DataError::ZeroCardinality(self.name.clone()));
                }
                for (row, &v) in self.values.iter().enumerate() {
                    let ok = v.fract() == 0.0 && v >= 0.0 && (v as usize) < cardinality;
                    if !ok {
                        return Err(DataError::BadLevel {
                            name: self.name.clone(),
                            row,
                            value: v,
                            cardinality,
                        });
                    }
                }
            }
            ColumnKind::Continuous => {
                for (row, &v) in self.values.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(DataError::NotFinite(self.name.clone(), row));
                    }
                }
            }
        }
        Ok(())
    }
}

/// JSON sidecar assigning a role to every CSV column.
///
/// `kinds` optionally pins column kinds; columns absent from it get
/// [`infer_kind`] applied to their values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolesFile {
    pub sensitive: Vec<String>,
    pub admissible: Vec<String>,
    pub target: String,
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub kinds: BTreeMap<String, ColumnKind>,
}

impl RolesFile {
    /// Role assignment read off a graph, with no kind pins.
    pub fn from_dag(dag: &crate::graph::Dag) -> Self {
        RolesFile {
            sensitive: dag.sensitive(),
            admissible: dag.admissible(),
            target: dag.target().to_string(),
            candidates: dag.candidates(),
            kinds: BTreeMap::new(),
        }
    }

    pub fn role_of(&self, name: &str) -> Option<Role> {
        if self.sensitive.iter().any(|s| s == name) {
            Some(Role::Sensitive)
        } else if self.admissible.iter().any(|s| s == name) {
            Some(Role::Admissible)
        } else if self.candidates.iter().any(|s| s == name) {
            Some(Role::Candidate)
        } else if self.target == name {
            Some(Role::Target)
        } else {
            None
        }
    }

    fn check_no_duplicates(&self) -> Result<(), DataError> {
        let mut seen = BTreeSet::new();
        let all = self
            .sensitive
            .iter()
            .chain(&self.admissible)
            .chain(&self.candidates)
            .chain(std::iter::once(&self.target));
        for name in all {
            if !seen.insert(name.clone()) {
                return Err(DataError::RoleListedTwice(name.clone()));
            }
        }
        Ok(())
    }
}

/// Guesses a column kind from its values: all exact non-negative integers
/// below [`INFER_MAX_LEVELS`] reads as discrete with cardinality
/// `max value + 1`, anything else as continuous.
pub fn infer_kind(values: &[f64]) -> ColumnKind {
    let mut max = 0.0f64;
    for &v in values {
        if v.fract() != 0.0 || v < 0.0 || v >= INFER_MAX_LEVELS as f64 {
            return ColumnKind::Continuous;
        }
        max = max.max(v);
    }
    ColumnKind::Discrete {
        cardinality: max as usize + 1,
    }
}

/// Integer columns with this many levels or more are treated as continuous
/// by [`infer_kind`].
pub const INFER_MAX_LEVELS: usize = 20;

#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<Column>,
    index: BTreeMap<String, usize>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<Column>) -> Result<Self, DataError> {
        let n_rows = columns.first().map_or(0, |c| c.values.len());
        let mut index = BTreeMap::new();
        for (i, col) in columns.iter().enumerate() {
            if index.insert(col.name.clone(), i).is_some() {
                return Err(DataError::DuplicateColumn(col.name.clone()));
            }
            if col.values.len() != n_rows {
                return Err(DataError::LengthMismatch(
                    col.name.clone(),
                    col.values.len(),
                    n_rows,
                ));
            }
            col.validate()?;
        }
        Ok(Dataset {
            columns,
            index,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column(&self, name: &str) -> Result<&Column, DataError> {
        self.index
            .get(name)
            .map(|&i| &self.columns[i])
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    pub fn with_role(&self, role: Role) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.role == role)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn target(&self) -> Option<&Column> {
        self.columns.iter().find(|c| c.role == Role::Target)
    }

    /// New dataset containing the rows at `rows`, in order. Row indices may
    /// repeat; out-of-range indices are an error.
    pub fn take_rows(&self, rows: &[usize]) -> Result<Dataset, DataError> {
        for &r in rows {
            if r >= self.n_rows {
                return Err(DataError::LengthMismatch(
                    "<row index>".into(),
                    r,
                    self.n_rows,
                ));
            }
        }
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                role: c.role,
                kind: c.kind,
                values: rows.iter().map(|&r| c.values[r]).collect(),
            })
            .collect();
        Dataset::new(columns)
    }

    /// The roles sidecar describing this dataset, with every kind pinned.
    pub fn roles_file(&self) -> RolesFile {
        let target = self
            .target()
            .map(|c| c.name.clone())
            .unwrap_or_default();
        RolesFile {
            sensitive: self.with_role(Role::Sensitive),
            admissible: self.with_role(Role::Admissible),
            target,
            candidates: self.with_role(Role::Candidate),
            kinds: self
                .columns
                .iter()
                .map(|c| (c.name.clone(), c.kind))
                .collect(),
        }
    }

    /// Writes the values as CSV with one header row. Discrete values are
    /// written as integers so the file round-trips through [`infer_kind`].
    pub fn write_csv(&self, path: &Path) -> crate::Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(crate::Error::Csv)?;
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .map_err(crate::Error::Csv)?;
        let mut record = Vec::with_capacity(self.columns.len());
        for row in 0..self.n_rows {
            record.clear();
            for col in &self.columns {
                let v = col.values[row];
                record.push(if col.kind.is_discrete() {
                    format!("{}", v as i64)
                } else {
                    // 17 significant digits round-trip f64 exactly.
                    format!("{v:.17e}")
                });
            }
            w.write_record(&record).map_err(crate::Error::Csv)?;
        }
        w.flush().map_err(crate::Error::Io)?;
        Ok(())
    }

    pub fn write_roles(&self, path: &Path) -> crate::Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, &self.roles_file())?;
        Ok(())
    }

    /// Reads a CSV plus roles sidecar back into a dataset.
    ///
    /// Every CSV column must be covered by the sidecar. Kinds come from the
    /// sidecar's `kinds` map when present, otherwise from [`infer_kind`].
    pub fn read_csv(csv_path: &Path, roles: &RolesFile) -> crate::Result<Dataset> {
        roles.check_no_duplicates()?;
        let mut r = csv::Reader::from_path(csv_path).map_err(crate::Error::Csv)?;
        let headers: Vec<String> = r
            .headers()
            .map_err(crate::Error::Csv)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (row_i, record) in r.records().enumerate() {
            let record = record.map_err(crate::Error::Csv)?;
            if record.len() != headers.len() {
                return Err(DataError::RaggedRow(row_i, record.len(), headers.len()).into());
            }
            for (col_i, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    DataError::BadNumber(row_i, headers[col_i].clone(), field.to_string())
                })?;
                values[col_i].push(v);
            }
        }
        if values.first().is_none_or(|v| v.is_empty()) {
            return Err(DataError::Empty.into());
        }

        let mut columns = Vec::with_capacity(headers.len());
        for (name, vals) in headers.into_iter().zip(values) {
            let role = roles
                .role_of(&name)
                .ok_or_else(|| DataError::RoleMissing(name.clone()))?;
            let kind = roles
                .kinds
                .get(&name)
                .copied()
                .unwrap_or_else(|| infer_kind(&vals));
            columns.push(Column {
                name,
                role,
                kind,
                values: vals,
            });
        }
        Ok(Dataset::new(columns)?)
    }

    pub fn read_roles(path: &Path) -> crate::Result<RolesFile> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(f)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str, role: Role, kind: ColumnKind, values: &[f64]) -> Column {
        Column {
            name: name.into(),
            role,
            kind,
            values: values.to_vec(),
        }
    }

    fn small() -> Dataset {
        Dataset::new(vec![
            col(
                "s",
                Role::Sensitive,
                ColumnKind::Discrete { cardinality: 2 },
                &[0.0, 1.0, 1.0],
            ),
            col(
                "x",
                Role::Candidate,
                ColumnKind::Continuous,
                &[0.25, -1.5, 3.0],
            ),
            col(
                "y",
                Role::Target,
                ColumnKind::Discrete { cardinality: 2 },
                &[1.0, 0.0, 1.0],
            ),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_bad_level() {
        let err = Dataset::new(vec![col(
            "s",
            Role::Sensitive,
            ColumnKind::Discrete { cardinality: 2 },
            &[0.0, 2.0],
        )])
        .unwrap_err();
        assert!(matches!(err, DataError::BadLevel { .. }));
    }

    #[test]
    fn rejects_nonfinite_continuous() {
        let err = Dataset::new(vec![col(
            "x",
            Role::Candidate,
            ColumnKind::Continuous,
            &[0.0, f64::NAN],
        )])
        .unwrap_err();
        assert!(matches!(err, DataError::NotFinite(_, 1)));
    }

    #[test]
    fn rejects_length_mismatch() {
        let err = Dataset::new(vec![
            col("a", Role::Candidate, ColumnKind::Continuous, &[1.0]),
            col("b", Role::Candidate, ColumnKind::Continuous, &[1.0, 2.0]),
        ])
        .unwrap_err();
        assert!(matches!(err, DataError::LengthMismatch(_, 2, 1)));
    }

    #[test]
    fn kind_inference() {
        assert_eq!(
            infer_kind(&[0.0, 1.0, 2.0]),
            ColumnKind::Discrete { cardinality: 3 }
        );
        assert_eq!(infer_kind(&[0.0, 1.5]), ColumnKind::Continuous);
        assert_eq!(infer_kind(&[-1.0, 0.0]), ColumnKind::Continuous);
        assert_eq!(infer_kind(&[0.0, 1e6]), ColumnKind::Continuous);
    }

    #[test]
    fn take_rows_subsets_and_repeats() {
        let d = small();
        let sub = d.take_rows(&[2, 0, 2]).unwrap();
        assert_eq!(sub.n_rows(), 3);
        assert_eq!(sub.column("x").unwrap().values, vec![3.0, 0.25, 3.0]);
        assert!(d.take_rows(&[3]).is_err());
    }

    #[test]
    fn csv_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("d.csv");
        let roles_path = dir.path().join("roles.json");
        let d = small();
        d.write_csv(&csv_path).unwrap();
        d.write_roles(&roles_path).unwrap();

        let roles = Dataset::read_roles(&roles_path).unwrap();
        let back = Dataset::read_csv(&csv_path, &roles).unwrap();
        assert_eq!(back.n_rows(), d.n_rows());
        for c in d.columns() {
            let b = back.column(&c.name).unwrap();
            assert_eq!(b.values, c.values);
            assert_eq!(b.kind, c.kind);
            assert_eq!(b.role, c.role);
        }
    }

    #[test]
    fn read_without_kinds_infers() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("d.csv");
        std::fs::write(&csv_path, "s,x,y\n0,0.5,1\n1,-2.25,0\n").unwrap();
        let roles = RolesFile {
            sensitive: vec!["s".into()],
            admissible: vec![],
            target: "y".into(),
            candidates: vec!["x".into()],
            kinds: BTreeMap::new(),
        };
        let d = Dataset::read_csv(&csv_path, &roles).unwrap();
        assert_eq!(
            d.column("s").unwrap().kind,
            ColumnKind::Discrete { cardinality: 2 }
        );
        assert_eq!(d.column("x").unwrap().kind, ColumnKind::Continuous);
    }

    #[test]
    fn read_rejects_uncovered_column() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("d.csv");
        std::fs::write(&csv_path, "s,extra\n0,1\n").unwrap();
        let roles = RolesFile {
            sensitive: vec!["s".into()],
            admissible: vec![],
            target: "y".into(),
            candidates: vec![],
            kinds: BTreeMap::new(),
        };
        let err = Dataset::read_csv(&csv_path, &roles).unwrap_err();
        assert!(matches!(
            err,
            crate::Error::Data(DataError::RoleMissing(ref c)) if c == "extra"
        ));
    }

    #[test]
    fn read_rejects_bad_number() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("d.csv");
        std::fs::write(&csv_path, "s\nnope\n").unwrap();
        let roles = RolesFile {
            sensitive: vec!["s".into()],
            admissible: vec![],
            target: String::new(),
            candidates: vec![],
            kinds: BTreeMap::new(),
        };
        let err = Dataset::read_csv(&csv_path, &roles).unwrap_err();
        assert!(matches!(err, crate::Error::Data(DataError::BadNumber(0, _, _))));
    }

    #[test]
    fn roles_file_round_trip() {
        let d = small();
        let roles = d.roles_file();
        let json = serde_json::to_string(&roles).unwrap();
        let back: RolesFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.target, "y");
        assert_eq!(back.role_of("s"), Some(Role::Sensitive));
        assert_eq!(back.role_of("missing"), None);
        assert_eq!(
            back.kinds.get("s"),
            Some(&ColumnKind::Discrete { cardinality: 2 })
        );
    }
}
