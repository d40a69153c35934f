use serde::{Deserialize, Serialize};

use super::schema::{AttributeRole, AttributeSchema, TargetRule};
use super::table::{ColumnData, DataTable};
use super::DataError;
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }
}

/// Encoded features of one source column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureBlock {
    Numeric { column: String, min: f64, max: f64 },
    OneHot { column: String, categories: Vec<String> },
}

impl FeatureBlock {
    pub fn column(&self) -> &str {
        match self {
            FeatureBlock::Numeric { column, .. } | FeatureBlock::OneHot { column, .. } => column,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            FeatureBlock::Numeric { .. } => 1,
            FeatureBlock::OneHot { categories, .. } => categories.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EncodedMatrix<T> {
    pub x: Matrix<T>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    /// Source-table row of each encoded row.
    pub source_rows: Vec<usize>,
    /// Rows skipped because a used cell was missing.
    pub dropped_rows: usize,
}

/// Feature layout learned from one table and reusable on another.
///
/// Numeric columns are min-max scaled with the fitted range (a constant column
/// scales to 0, values outside the range are clamped). Categorical columns get
/// one indicator per category seen at fit time, in sorted order; unseen
/// categories encode as an all-zero group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    blocks: Vec<FeatureBlock>,
    target: String,
    rule: TargetRule,
}

/// Label vector for every row of `table`.
pub fn binarize_target(table: &DataTable, schema: &AttributeSchema) -> Result<Vec<u8>, DataError> {
    let target = schema.target();
    let rule = schema.target_rule();
    let col = table
        .column(&target.name)
        .ok_or_else(|| DataError::UnknownColumn(target.name.clone()))?;
    (0..table.n_rows())
        .map(|r| label_at(&col.data, r, &rule).ok_or(DataError::MissingLabel(r)))
        .collect()
}

fn label_at(data: &ColumnData, row: usize, rule: &TargetRule) -> Option<u8> {
    match data {
        ColumnData::Numeric(v) => v[row].map(|x| rule.numeric(x)),
        ColumnData::Categorical(c) => c.get(row).map(|s| rule.categorical(s)),
    }
}

/// Fit an encoder on `table` and encode it in one step.
pub fn encode<T: Scalar>(table: &DataTable, schema: &AttributeSchema) -> Result<EncodedMatrix<T>, DataError> {
    Encoder::fit(table, schema)?.transform(table)
}

impl Encoder {
    /// Feature columns are the schema columns that are neither the target,
    /// identifying, nor ignored. Identifying columns may be absent from the table.
    pub fn fit(table: &DataTable, schema: &AttributeSchema) -> Result<Self, DataError> {
        let target = schema.target().name.clone();
        if table.column(&target).is_none() {
            return Err(DataError::UnknownColumn(target));
        }
        let mut used: Vec<&str> = vec![target.as_str()];
        for spec in schema.columns() {
            if spec.target || spec.ignore || spec.role == AttributeRole::Identifying {
                continue;
            }
            if table.column(&spec.name).is_none() {
                return Err(DataError::UnknownColumn(spec.name.clone()));
            }
            used.push(&spec.name);
        }
        let kept = complete_rows(table, &used);

        let mut blocks = Vec::new();
        for &name in &used[1..] {
            let col = table.column(name).expect("checked above");
            blocks.push(match &col.data {
                ColumnData::Numeric(v) => {
                    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                    for &r in &kept {
                        let x = v[r].expect("complete row");
                        min = min.min(x);
                        max = max.max(x);
                    }
                    if kept.is_empty() {
                        (min, max) = (0.0, 0.0);
                    }
                    FeatureBlock::Numeric { column: name.to_owned(), min, max }
                }
                ColumnData::Categorical(c) => {
                    let mut seen = vec![false; c.levels().len()];
                    for &r in &kept {
                        seen[c.codes()[r].expect("complete row") as usize] = true;
                    }
                    let mut categories: Vec<String> = c
                        .levels()
                        .iter()
                        .zip(&seen)
                        .filter(|(_, &s)| s)
                        .map(|(l, _)| l.clone())
                        .collect();
                    categories.sort();
                    FeatureBlock::OneHot { column: name.to_owned(), categories }
                }
            });
        }
        Ok(Self { blocks, target, rule: schema.target_rule() })
    }

    pub fn blocks(&self) -> &[FeatureBlock] {
        &self.blocks
    }

    pub fn width(&self) -> usize {
        self.blocks.iter().map(FeatureBlock::width).sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for b in &self.blocks {
            match b {
                FeatureBlock::Numeric { column, .. } => names.push(column.clone()),
                FeatureBlock::OneHot { column, categories } => {
                    names.extend(categories.iter().map(|c| format!("{column}={c}")));
                }
            }
        }
        names
    }

    pub fn transform<T: Scalar>(&self, table: &DataTable) -> Result<EncodedMatrix<T>, DataError> {
        let rule = &self.rule;
        let mut used: Vec<&str> = vec![self.target.as_str()];
        used.extend(self.blocks.iter().map(FeatureBlock::column));
        let mut cols = Vec::with_capacity(used.len());
        for &name in &used {
            cols.push(&table.column(name).ok_or_else(|| DataError::UnknownColumn(name.to_owned()))?.data);
        }
        let kept = complete_rows(table, &used);

        let width = self.width();
        let mut x = Matrix::zeros(kept.len(), width);
        let mut labels = Vec::with_capacity(kept.len());
        for (out_row, &r) in kept.iter().enumerate() {
            labels.push(label_at(cols[0], r, rule).expect("complete row"));
            let dst = x.row_mut(out_row);
            let mut offset = 0;
            for (block, data) in self.blocks.iter().zip(&cols[1..]) {
                match (block, data) {
                    (FeatureBlock::Numeric { min, max, .. }, ColumnData::Numeric(v)) => {
                        let value = v[r].expect("complete row");
                        let scaled = if max > min { ((value - min) / (max - min)).clamp(0.0, 1.0) } else { 0.0 };
                        dst[offset] = T::from_f64_lossy(scaled);
                    }
                    (FeatureBlock::OneHot { categories, .. }, ColumnData::Categorical(c)) => {
                        let value = c.get(r).expect("complete row");
                        if let Ok(pos) = categories.binary_search_by(|probe| probe.as_str().cmp(value)) {
                            dst[offset + pos] = T::one();
                        }
                    }
                    (block, data) => {
                        return Err(DataError::KindMismatch {
                            column: block.column().to_owned(),
                            expected: match block {
                                FeatureBlock::Numeric { .. } => "numeric",
                                FeatureBlock::OneHot { .. } => "categorical",
                            },
                            found: match data {
                                ColumnData::Numeric(_) => "numeric",
                                ColumnData::Categorical(_) => "categorical",
                            },
                        })
                    }
                }
                offset += block.width();
            }
        }
        Ok(EncodedMatrix {
            x,
            labels,
            feature_names: self.feature_names(),
            dropped_rows: table.n_rows() - kept.len(),
            source_rows: kept,
        })
    }

    /// Category encoded in `row` for a one-hot column, if exactly one indicator is set.
    pub fn decode_category<'a, T: Scalar>(&'a self, row: &[T], column: &str) -> Option<&'a str> {
        let mut offset = 0;
        for b in &self.blocks {
            if b.column() == column {
                let FeatureBlock::OneHot { categories, .. } = b else { return None };
                let group = &row[offset..offset + categories.len()];
                let mut hot = group.iter().enumerate().filter(|(_, v)| **v == T::one());
                let (i, _) = hot.next()?;
                return hot.next().is_none().then(|| categories[i].as_str());
            }
            offset += b.width();
        }
        None
    }
}

fn complete_rows(table: &DataTable, used: &[&str]) -> Vec<usize> {
    let cols: Vec<&ColumnData> = used.iter().filter_map(|n| table.column(n)).map(|c| &c.data).collect();
    (0..table.n_rows()).filter(|&r| cols.iter().all(|c| !c.is_missing(r))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, ColumnSpec};

    fn schema(cols: Vec<ColumnSpec>) -> AttributeSchema {
        let mut cols = cols;
        cols.push(ColumnSpec::numeric("y", AttributeRole::Insensitive).target_at_least(1.0));
        AttributeSchema::new(cols).unwrap()
    }

    #[test]
    fn one_hot_definition() {
        let t = DataTable::new(vec![
            Column::categorical("c", [Some("A"), Some("B"), Some("A")]),
            Column::numeric("y", vec![Some(0.0), Some(1.0), Some(1.0)]),
        ])
        .unwrap();
        let s = schema(vec![ColumnSpec::categorical("c", AttributeRole::QuasiIdentifying)]);
        let m: EncodedMatrix<f64> = encode(&t, &s).unwrap();
        assert_eq!(m.x, Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]));
        assert_eq!(m.labels, vec![0, 1, 1]);
        assert_eq!(m.feature_names, vec!["c=A", "c=B"]);
    }

    #[test]
    fn min_max_and_constant_columns() {
        let t = DataTable::new(vec![
            Column::numeric("a", vec![Some(0.0), Some(5.0), Some(10.0)]),
            Column::numeric("b", vec![Some(3.0), Some(3.0), Some(3.0)]),
            Column::numeric("y", vec![Some(0.0), Some(0.0), Some(0.0)]),
        ])
        .unwrap();
        let s = schema(vec![
            ColumnSpec::numeric("a", AttributeRole::Insensitive),
            ColumnSpec::numeric("b", AttributeRole::Insensitive),
        ]);
        let m: EncodedMatrix<f64> = encode(&t, &s).unwrap();
        let col_a: Vec<f64> = (0..3).map(|r| m.x.get(r, 0)).collect();
        let col_b: Vec<f64> = (0..3).map(|r| m.x.get(r, 1)).collect();
        assert_eq!(col_a, vec![0.0, 0.5, 1.0]);
        assert_eq!(col_b, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_rows_dropped_and_counted() {
        let t = DataTable::new(vec![
            Column::categorical("c", [Some("A"), None, Some("B")]),
            Column::numeric("y", vec![Some(1.0), Some(0.0), None]),
        ])
        .unwrap();
        let s = schema(vec![ColumnSpec::categorical("c", AttributeRole::QuasiIdentifying)]);
        let m: EncodedMatrix<f32> = encode(&t, &s).unwrap();
        assert_eq!(m.dropped_rows, 2);
        assert_eq!(m.source_rows, vec![0]);
    }

    #[test]
    fn identifying_and_ignored_columns_are_not_features() {
        let t = DataTable::new(vec![
            Column::categorical("name", [Some("ann"), Some("bob")]),
            Column::numeric("g1", vec![Some(3.0), Some(4.0)]),
            Column::numeric("y", vec![Some(1.0), Some(0.0)]),
        ])
        .unwrap();
        let s = schema(vec![
            ColumnSpec::categorical("name", AttributeRole::Identifying),
            ColumnSpec::numeric("g1", AttributeRole::Insensitive).ignored(),
        ]);
        let m: EncodedMatrix<f64> = encode(&t, &s).unwrap();
        assert_eq!(m.x.cols(), 0);
        // identifying column may be absent entirely
        let stripped = t.without_columns(&["name"]);
        assert!(encode::<f64>(&stripped, &s).is_ok());
    }

    #[test]
    fn unknown_column_is_an_error() {
        let t = DataTable::new(vec![Column::numeric("y", vec![Some(1.0)])]).unwrap();
        let s = schema(vec![ColumnSpec::numeric("a", AttributeRole::Insensitive)]);
        assert!(matches!(encode::<f64>(&t, &s), Err(DataError::UnknownColumn(c)) if c == "a"));
    }

    #[test]
    fn transform_reuses_fitted_layout() {
        let s = schema(vec![
            ColumnSpec::numeric("a", AttributeRole::Insensitive),
            ColumnSpec::categorical("c", AttributeRole::QuasiIdentifying),
        ]);
        let train = DataTable::new(vec![
            Column::numeric("a", vec![Some(0.0), Some(10.0)]),
            Column::categorical("c", [Some("x"), Some("y")]),
            Column::numeric("y", vec![Some(1.0), Some(0.0)]),
        ])
        .unwrap();
        let test = DataTable::new(vec![
            Column::numeric("a", vec![Some(20.0), Some(5.0)]),
            Column::categorical("c", [Some("z"), Some("y")]),
            Column::numeric("y", vec![Some(1.0), Some(1.0)]),
        ])
        .unwrap();
        let enc = Encoder::fit(&train, &s).unwrap();
        let m: EncodedMatrix<f64> = enc.transform(&test).unwrap();
        assert_eq!(m.x.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(m.x.row(1), &[0.5, 0.0, 1.0]);
    }

    #[test]
    fn binarize_census_and_student_rules() {
        let census = AttributeSchema::new(vec![
            ColumnSpec::categorical("income", AttributeRole::Insensitive).target_one_of([">50K"]),
        ])
        .unwrap();
        let t = DataTable::new(vec![Column::categorical("income", [Some(">50K"), Some("<=50K")])]).unwrap();
        assert_eq!(binarize_target(&t, &census).unwrap(), vec![1, 0]);

        let student = AttributeSchema::new(vec![
            ColumnSpec::numeric("G3", AttributeRole::Insensitive).target_at_least(10.0),
        ])
        .unwrap();
        let t = DataTable::new(vec![Column::numeric("G3", vec![Some(10.0), Some(9.0)])]).unwrap();
        assert_eq!(binarize_target(&t, &student).unwrap(), vec![1, 0]);
    }
}
