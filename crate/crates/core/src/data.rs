//! Tabular binary-classification data: dense matrices, labelled datasets,
//! zero-copy index subsets, CSV ingestion and stratified splitting.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque, stable instance identifier. Assigned from the 0-based row order at
/// ingestion and preserved by every subset.
pub type InstanceId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("MissingLabelColumn: no column named `{0}`")]
    MissingLabelColumn(String),
    #[error("NonNumericFeature: row {row}, column `{column}`")]
    NonNumericFeature { row: usize, column: String },
    #[error("NonBinaryLabel: row {0}")]
    NonBinaryLabel(usize),
    #[error("EmptyDataset")]
    EmptyDataset,
    #[error("EmptyLine: line {0}")]
    EmptyLine(usize),
    #[error("RaggedRow: row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("DuplicateColumn: `{0}`")]
    DuplicateColumn(String),
    #[error("IndexOutOfRange: index {index} for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("DuplicateIndex: {0}")]
    DuplicateIndex(usize),
    #[error("DuplicateId: {0}")]
    DuplicateId(InstanceId),
    #[error("ClassTooSmall: class {label} has {count} instance(s), need at least 2")]
    ClassTooSmall { label: u8, count: usize },
    #[error("InvalidFraction: {0} is not strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("Io: {0}")]
    Io(String),
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DataError> {
        if data.len() != rows * cols {
            return Err(DataError::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from equally sized rows. An empty slice yields a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, DataError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(DataError::ShapeMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copies the selected rows, in order, into a new matrix.
    pub fn select_rows(&self, positions: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(positions.len() * self.cols);
        for &p in positions {
            data.extend_from_slice(self.row(p));
        }
        Matrix {
            rows: positions.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Immutable table of instance ids, dense features and binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<InstanceId>,
    features: Matrix,
    labels: Vec<u8>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        ids: Vec<InstanceId>,
        features: Matrix,
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let n = features.rows();
        if ids.len() != n || labels.len() != n {
            return Err(DataError::ShapeMismatch(format!(
                "{} ids and {} labels for {n} feature rows",
                ids.len(),
                labels.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(DataError::ShapeMismatch(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(row) = labels.iter().position(|&l| l > 1) {
            return Err(DataError::NonBinaryLabel(row));
        }
        for (i, r) in features.iter_rows().enumerate() {
            if let Some(c) = r.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonNumericFeature {
                    row: i,
                    column: feature_names[c].clone(),
                });
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for &id in &ids {
            if !seen.insert(id) {
                return Err(DataError::DuplicateId(id));
            }
        }
        Ok(Self {
            ids,
            features,
            labels,
            feature_names,
        })
    }

    /// Dataset with ids `0..n` and feature names `x0, x1, ...`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], labels: Vec<u8>) -> Result<Self, DataError> {
        let features = Matrix::from_rows(rows)?;
        let names = (0..features.cols()).map(|c| format!("x{c}")).collect();
        let ids = (0..features.rows() as InstanceId).collect();
        Self::new(ids, features, labels, names)
    }

    pub fn ids(&self) -> &[InstanceId] {
        &self.ids
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn into_shared(self) -> Arc<Dataset> {
        Arc::new(self)
    }
}

/// Read access shared by [`Dataset`] and [`IndexSubset`].
pub trait DataView {
    fn n_rows(&self) -> usize;
    fn n_features(&self) -> usize;
    fn row(&self, i: usize) -> &[f64];
    fn label(&self, i: usize) -> u8;
    fn id(&self, i: usize) -> InstanceId;

    fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    fn label_vec(&self) -> Vec<u8> {
        (0..self.n_rows()).map(|i| self.label(i)).collect()
    }

    fn id_vec(&self) -> Vec<InstanceId> {
        (0..self.n_rows()).map(|i| self.id(i)).collect()
    }

    fn feature_matrix(&self) -> Matrix {
        let positions: Vec<usize> = (0..self.n_rows()).collect();
        self.gather_features(&positions)
    }

    /// Copies the features of the given local positions into a matrix.
    fn gather_features(&self, positions: &[usize]) -> Matrix {
        let cols = self.n_features();
        let mut data = Vec::with_capacity(positions.len() * cols);
        for &p in positions {
            data.extend_from_slice(self.row(p));
        }
        Matrix {
            rows: positions.len(),
            cols,
            data,
        }
    }
}

impl DataView for Dataset {
    fn n_rows(&self) -> usize {
        self.features.rows()
    }

    fn n_features(&self) -> usize {
        self.features.cols()
    }

    fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    fn id(&self, i: usize) -> InstanceId {
        self.ids[i]
    }
}

/// Ordered selection of rows of a shared parent [`Dataset`].
#[derive(Debug, Clone)]
pub struct IndexSubset {
    parent: Arc<Dataset>,
    indices: Vec<usize>,
}

impl IndexSubset {
    /// A view over every row of `parent`, in order.
    pub fn full(parent: Arc<Dataset>) -> Self {
        let indices = (0..parent.n_rows()).collect();
        Self { parent, indices }
    }

    pub fn parent(&self) -> &Arc<Dataset> {
        &self.parent
    }

    /// Row positions in the parent dataset.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Sub-view selecting local positions of this view.
    pub fn subset(&self, positions: &[usize]) -> Result<IndexSubset, DataError> {
        check_indices(positions, self.indices.len())?;
        Ok(IndexSubset {
            parent: Arc::clone(&self.parent),
            indices: positions.iter().map(|&p| self.indices[p]).collect(),
        })
    }

    /// Equality by content: same ids, features and labels in the same order.
    pub fn content_eq<V: DataView>(&self, other: &V) -> bool {
        self.n_rows() == other.n_rows()
            && self.n_features() == other.n_features()
            && (0..self.n_rows()).all(|i| {
                self.id(i) == other.id(i)
                    && self.label(i) == other.label(i)
                    && self.row(i) == other.row(i)
            })
    }
}

impl DataView for IndexSubset {
    fn n_rows(&self) -> usize {
        self.indices.len()
    }

    fn n_features(&self) -> usize {
        self.parent.n_features()
    }

    fn row(&self, i: usize) -> &[f64] {
        self.parent.row(self.indices[i])
    }

    fn label(&self, i: usize) -> u8 {
        self.parent.label(self.indices[i])
    }

    fn id(&self, i: usize) -> InstanceId {
        self.parent.id(self.indices[i])
    }
}

fn check_indices(indices: &[usize], len: usize) -> Result<(), DataError> {
    let mut seen = vec![false; len];
    for &index in indices {
        if index >= len {
            return Err(DataError::IndexOutOfRange { index, len });
        }
        if std::mem::replace(&mut seen[index], true) {
            return Err(DataError::DuplicateIndex(index));
        }
    }
    Ok(())
}

/// Selects rows of `data` by position without copying feature values.
pub fn subset(data: &Arc<Dataset>, indices: &[usize]) -> Result<IndexSubset, DataError> {
    check_indices(indices, data.n_rows())?;
    Ok(IndexSubset {
        parent: Arc::clone(data),
        indices: indices.to_vec(),
    })
}

/// Proportion assigned to the first part of a split, plus its shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(fraction: f64, seed: u64) -> Result<Self, DataError> {
        let spec = Self { fraction, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.fraction > 0.0 && self.fraction < 1.0 {
            Ok(())
        } else {
            Err(DataError::InvalidFraction(self.fraction))
        }
    }
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Stratified two-way split of `data`.
///
/// Within each class, `round(fraction * class_count)` rows go to the first
/// part. Class members are put in a canonical content order before the seeded
/// shuffle, so a row-permuted copy of the data splits into the same contents.
/// Both parts list parent rows in ascending order.
pub fn stratified_split(
    data: &IndexSubset,
    spec: &SplitSpec,
) -> Result<(IndexSubset, IndexSubset), DataError> {
    spec.validate()?;
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for i in 0..data.n_rows() {
        by_class.entry(data.label(i)).or_default().push(i);
    }
    if let Some((&label, members)) = by_class.iter().find(|(_, m)| m.len() < 2) {
        return Err(DataError::ClassTooSmall {
            label,
            count: members.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for members in by_class.values_mut() {
        members.sort_by(|&a, &b| cmp_rows(data.row(a), data.row(b)));
        members.shuffle(&mut rng);
        let take = (spec.fraction * members.len() as f64).round() as usize;
        first.extend_from_slice(&members[..take]);
        second.extend_from_slice(&members[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((data.subset(&first)?, data.subset(&second)?))
}

/// Parses labelled CSV text. See [`load_csv`].
pub fn parse_csv(text: &str, label_column: &str) -> Result<Dataset, DataError> {
    let (header, rows) = split_csv(text)?;
    let label_pos = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingLabelColumn(label_column.to_string()))?;
    if rows.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != label_pos)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::with_capacity(rows.len() * feature_names.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (r, fields) in rows.iter().enumerate() {
        for (c, field) in fields.iter().enumerate() {
            if c == label_pos {
                labels.push(match field.parse::<i64>() {
                    Ok(0) => 0,
                    Ok(1) => 1,
                    _ => return Err(DataError::NonBinaryLabel(r)),
                });
            } else {
                values.push(parse_feature(field, r, &header[c])?);
            }
        }
    }
    let n = rows.len();
    let features = Matrix::new(n, feature_names.len(), values)?;
    Dataset::new(
        (0..n as InstanceId).collect(),
        features,
        labels,
        feature_names,
    )
}

/// Loads a labelled CSV file: header row, comma separated, `.` decimal point.
/// Ids follow the 0-based data row order.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| DataError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_csv(&text, label_column)
}

/// Parses a feature-only CSV. When `drop_column` names a header column, that
/// column is ignored; absent columns are not an error.
pub fn parse_feature_csv(
    text: &str,
    drop_column: Option<&str>,
) -> Result<(Vec<String>, Matrix), DataError> {
    let (header, rows) = split_csv(text)?;
    if rows.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let drop = drop_column.and_then(|d| header.iter().position(|h| h == d));
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(c, _)| Some(c) != drop)
        .map(|(_, h)| h.clone())
        .collect();
    let mut values = Vec::with_capacity(rows.len() * names.len());
    for (r, fields) in rows.iter().enumerate() {
        for (c, field) in fields.iter().enumerate() {
            if Some(c) != drop {
                values.push(parse_feature(field, r, &header[c])?);
            }
        }
    }
    let cols = names.len();
    Ok((names, Matrix::new(rows.len(), cols, values)?))
}

pub fn load_feature_csv(
    path: impl AsRef<Path>,
    drop_column: Option<&str>,
) -> Result<(Vec<String>, Matrix), DataError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| DataError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_feature_csv(&text, drop_column)
}

fn parse_feature(field: &str, row: usize, column: &str) -> Result<f64, DataError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::NonNumericFeature {
            row,
            column: column.to_string(),
        }),
    }
}

type CsvRows<'a> = (Vec<String>, Vec<Vec<&'a str>>);

fn split_csv(text: &str) -> Result<CsvRows<'_>, DataError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate();
    let header: Vec<String> = match lines.next() {
        Some((_, l)) if !l.trim().is_empty() => {
            l.split(',').map(|h| h.trim().to_string()).collect()
        }
        _ => return Err(DataError::EmptyDataset),
    };
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            return Err(DataError::EmptyLine(line_no + 1));
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(DataError::RaggedRow {
                row: rows.len(),
                expected: header.len(),
                found: fields.len(),
            });
        }
        rows.push(fields);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_ROWS: &str = "a,b,y\n1,2,0\n3,4,1\n5,6,1\n";

    fn toy(n_pos: usize, n_neg: usize) -> IndexSubset {
        let rows: Vec<Vec<f64>> = (0..n_pos + n_neg).map(|i| vec![i as f64]).collect();
        let labels = (0..n_pos + n_neg).map(|i| u8::from(i < n_pos)).collect();
        IndexSubset::full(Dataset::from_rows(&rows, labels).unwrap().into_shared())
    }

    #[test]
    fn parses_three_row_csv() {
        let d = parse_csv(THREE_ROWS, "y").unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.labels(), &[0, 1, 1]);
        assert_eq!(d.ids(), &[0, 1, 2]);
        assert_eq!(d.row(2), &[5.0, 6.0]);
        assert_eq!(d.feature_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn label_column_may_sit_anywhere() {
        let d = parse_csv("y,a\n1,0.5\n0,-2\n", "y").unwrap();
        assert_eq!(d.labels(), &[1, 0]);
        assert_eq!(d.features().as_slice(), &[0.5, -2.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            parse_csv("a,b,y\n1,2,2\n", "y"),
            Err(DataError::NonBinaryLabel(0))
        );
        assert_eq!(parse_csv("a,b,y\n", "y"), Err(DataError::EmptyDataset));
        assert_eq!(
            parse_csv(THREE_ROWS, "label"),
            Err(DataError::MissingLabelColumn("label".into()))
        );
        assert_eq!(
            parse_csv("a,y\nfoo,1\n", "y"),
            Err(DataError::NonNumericFeature {
                row: 0,
                column: "a".into()
            })
        );
        assert!(matches!(
            parse_csv("a,y\nNaN,1\n", "y"),
            Err(DataError::NonNumericFeature { .. })
        ));
        assert!(matches!(
            parse_csv("a,y\n1,1\n\n2,0\n", "y"),
            Err(DataError::EmptyLine(_))
        ));
        assert!(matches!(
            parse_csv("a,y\n1,1,3\n", "y"),
            Err(DataError::RaggedRow { .. })
        ));
    }

    #[test]
    fn tolerates_trailing_whitespace_and_crlf() {
        let d = parse_csv("a,y\r\n1.5,1  \r\n2,0\t\r\n", "y").unwrap();
        assert_eq!(d.labels(), &[1, 0]);
    }

    #[test]
    fn feature_csv_drops_optional_label() {
        let (names, m) = parse_feature_csv(THREE_ROWS, Some("y")).unwrap();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(m.row(1), &[3.0, 4.0]);
        let (names, m) = parse_feature_csv("a,b\n1,2\n", Some("y")).unwrap();
        assert_eq!(names.len(), 2);
        assert_eq!(m.rows(), 1);
    }

    #[test]
    fn subset_views_preserve_ids() {
        let d = parse_csv(THREE_ROWS, "y").unwrap().into_shared();
        let s = subset(&d, &[1, 2]).unwrap();
        assert_eq!(s.id_vec(), vec![1, 2]);
        assert_eq!(s.label_vec(), vec![1, 1]);
        assert_eq!(
            subset(&d, &[5]).unwrap_err(),
            DataError::IndexOutOfRange { index: 5, len: 3 }
        );
        assert_eq!(
            subset(&d, &[0, 0]).unwrap_err(),
            DataError::DuplicateIndex(0)
        );
        let all = subset(&d, &[0, 1, 2]).unwrap();
        assert!(all.content_eq(d.as_ref()));
        let nested = s.subset(&[1]).unwrap();
        assert_eq!(nested.indices(), &[2]);
        assert_eq!(nested.id_vec(), vec![2]);
    }

    #[test]
    fn split_counts_follow_rounding() {
        let data = toy(6, 4);
        let (a, b) = stratified_split(&data, &SplitSpec::new(0.5, 3).unwrap()).unwrap();
        let pos = |s: &IndexSubset| s.label_vec().iter().filter(|&&l| l == 1).count();
        assert_eq!((pos(&a), a.n_rows() - pos(&a)), (3, 2));
        assert_eq!(b.n_rows(), 5);

        let (a, _) = stratified_split(&data, &SplitSpec::new(0.999, 3).unwrap()).unwrap();
        assert_eq!(a.n_rows(), 10);
    }

    #[test]
    fn split_is_deterministic() {
        let data = toy(30, 21);
        let spec = SplitSpec::new(0.3, 99).unwrap();
        let (a1, b1) = stratified_split(&data, &spec).unwrap();
        let (a2, b2) = stratified_split(&data, &spec).unwrap();
        assert_eq!(a1.indices(), a2.indices());
        assert_eq!(b1.indices(), b2.indices());
    }

    #[test]
    fn split_rejects_tiny_class_and_bad_fraction() {
        assert_eq!(
            stratified_split(
                &toy(5, 1),
                &SplitSpec {
                    fraction: 0.5,
                    seed: 0
                }
            )
            .unwrap_err(),
            DataError::ClassTooSmall { label: 0, count: 1 }
        );
        assert!(SplitSpec::new(1.0, 0).is_err());
        assert!(SplitSpec::new(0.0, 0).is_err());
    }
}
