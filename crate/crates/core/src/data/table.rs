use std::collections::HashMap;
use std::fmt::Write as _;

use super::DataError;

/// Interned categorical column. Codes index into `levels`; `None` is a missing cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CategoricalColumn {
    levels: Vec<String>,
    codes: Vec<Option<u32>>,
    index: HashMap<String, u32>,
}

impl CategoricalColumn {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, value: &str) -> u32 {
        if let Some(&c) = self.index.get(value) {
            return c;
        }
        let c = u32::try_from(self.levels.len()).expect("fewer than 2^32 categories");
        self.levels.push(value.to_owned());
        self.index.insert(value.to_owned(), c);
        c
    }

    pub fn push(&mut self, value: Option<&str>) {
        let code = value.map(|v| self.intern(v));
        self.codes.push(code);
    }

    pub fn from_values<'a>(values: impl IntoIterator<Item = Option<&'a str>>) -> Self {
        let mut col = Self::new();
        for v in values {
            col.push(v);
        }
        col
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[Option<u32>] {
        &self.codes
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn get(&self, row: usize) -> Option<&str> {
        self.codes[row].map(|c| self.levels[c as usize].as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<&str>> + '_ {
        self.codes.iter().map(|c| c.map(|c| self.levels[c as usize].as_str()))
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .levels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(CategoricalColumn),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Numeric(v) => v[row].is_none(),
            ColumnData::Categorical(c) => c.codes[row].is_none(),
        }
    }

    pub fn cell(&self, row: usize) -> Cell<'_> {
        match self {
            ColumnData::Numeric(v) => v[row].map_or(Cell::Missing, Cell::Num),
            ColumnData::Categorical(c) => c.get(row).map_or(Cell::Missing, Cell::Cat),
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(c) => {
                let mut out = CategoricalColumn::new();
                for &r in rows {
                    out.push(c.get(r));
                }
                ColumnData::Categorical(out)
            }
        }
    }
}

/// Borrowed view of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<'a> {
    Num(f64),
    Cat(&'a str),
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Self { name: name.into(), data: ColumnData::Numeric(values) }
    }

    pub fn categorical<'a>(
        name: impl Into<String>,
        values: impl IntoIterator<Item = Option<&'a str>>,
    ) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Categorical(CategoricalColumn::from_values(values)),
        }
    }
}

/// Column-oriented table. Immutable once built; transformations return new tables.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    columns: Vec<Column>,
    rows: usize,
}

impl DataTable {
    pub fn new(columns: Vec<Column>) -> Result<Self, DataError> {
        let rows = columns.first().map_or(0, |c| c.data.len());
        for c in &columns {
            if c.data.len() != rows {
                return Err(DataError::ColumnLength {
                    column: c.name.clone(),
                    expected: rows,
                    found: c.data.len(),
                });
            }
            if let ColumnData::Numeric(v) = &c.data {
                if let Some(row) = v.iter().position(|x| x.is_some_and(|x| !x.is_finite())) {
                    return Err(DataError::NonFinite { column: c.name.clone(), row });
                }
            }
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(DataError::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        let mut columns = columns;
        for c in &mut columns {
            if let ColumnData::Categorical(cat) = &mut c.data {
                cat.rebuild_index();
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell<'_> {
        self.columns[col].data.cell(row)
    }

    /// Rows in the given order (indices may repeat).
    pub fn select_rows(&self, rows: &[usize]) -> DataTable {
        let columns = self
            .columns
            .iter()
            .map(|c| Column { name: c.name.clone(), data: c.data.select(rows) })
            .collect();
        DataTable { columns, rows: rows.len() }
    }

    /// Rows of `parts` one after another. Column names and kinds must agree.
    pub fn concat(parts: &[DataTable]) -> Result<DataTable, DataError> {
        let Some(first) = parts.first() else { return DataTable::new(Vec::new()) };
        let mut columns = Vec::with_capacity(first.n_cols());
        for (j, c) in first.columns.iter().enumerate() {
            let mut pieces = Vec::with_capacity(parts.len());
            for p in parts {
                let other = p.columns.get(j).filter(|o| o.name == c.name);
                pieces.push(&other.ok_or_else(|| DataError::UnknownColumn(c.name.clone()))?.data);
            }
            let data = match &c.data {
                ColumnData::Numeric(_) => {
                    let mut v = Vec::new();
                    for d in pieces {
                        match d {
                            ColumnData::Numeric(x) => v.extend_from_slice(x),
                            ColumnData::Categorical(_) => return Err(kind_mismatch(&c.name, "numeric", "categorical")),
                        }
                    }
                    ColumnData::Numeric(v)
                }
                ColumnData::Categorical(_) => {
                    let mut out = CategoricalColumn::new();
                    for d in pieces {
                        match d {
                            ColumnData::Categorical(x) => x.iter().for_each(|v| out.push(v)),
                            ColumnData::Numeric(_) => return Err(kind_mismatch(&c.name, "categorical", "numeric")),
                        }
                    }
                    ColumnData::Categorical(out)
                }
            };
            columns.push(Column { name: c.name.clone(), data });
        }
        if parts.iter().any(|p| p.n_cols() != first.n_cols()) {
            return Err(DataError::Schema("tables to concatenate have different columns".into()));
        }
        DataTable::new(columns)
    }

    pub fn without_columns(&self, names: &[&str]) -> DataTable {
        let columns = self
            .columns
            .iter()
            .filter(|c| !names.contains(&c.name.as_str()))
            .cloned()
            .collect();
        DataTable { columns, rows: self.rows }
    }

    pub fn replace_column(&self, column: Column) -> Result<DataTable, DataError> {
        let idx = self
            .column_index(&column.name)
            .ok_or_else(|| DataError::UnknownColumn(column.name.clone()))?;
        let mut columns = self.columns.clone();
        columns[idx] = column;
        DataTable::new(columns)
    }

    /// Canonical text of one row, used for exact-record comparisons.
    pub fn row_key(&self, row: usize) -> String {
        let mut key = String::new();
        for c in &self.columns {
            match c.data.cell(row) {
                Cell::Num(v) => write!(key, "n{v:?}").unwrap(),
                Cell::Cat(s) => write!(key, "c{}:{s}", s.len()).unwrap(),
                Cell::Missing => key.push('?'),
            }
            key.push('\u{1f}');
        }
        key
    }

    pub fn has_missing(&self, row: usize) -> bool {
        self.columns.iter().any(|c| c.data.is_missing(row))
    }
}

fn kind_mismatch(column: &str, expected: &'static str, found: &'static str) -> DataError {
    DataError::KindMismatch { column: column.to_owned(), expected, found }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> DataTable {
        DataTable::new(vec![
            Column::numeric("x", vec![Some(1.0), Some(2.0), None]),
            Column::categorical("c", [Some("a"), Some("b"), Some("a")]),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_ragged_columns() {
        let err = DataTable::new(vec![
            Column::numeric("x", vec![Some(1.0)]),
            Column::categorical("c", [Some("a"), Some("b")]),
        ])
        .unwrap_err();
        assert!(matches!(err, DataError::ColumnLength { .. }));
    }

    #[test]
    fn rejects_non_finite() {
        let err = DataTable::new(vec![Column::numeric("x", vec![Some(f64::NAN)])]).unwrap_err();
        assert!(matches!(err, DataError::NonFinite { row: 0, .. }));
    }

    #[test]
    fn interning_is_shared() {
        let t = toy();
        let ColumnData::Categorical(c) = &t.columns()[1].data else { panic!() };
        assert_eq!(c.levels(), ["a", "b"]);
        assert_eq!(c.codes(), [Some(0), Some(1), Some(0)]);
    }

    #[test]
    fn select_and_drop() {
        let t = toy();
        let s = t.select_rows(&[2, 0]);
        assert_eq!(s.n_rows(), 2);
        assert_eq!(s.cell(0, 0), Cell::Missing);
        assert_eq!(s.cell(1, 1), Cell::Cat("a"));
        assert!(s.has_missing(0));
        let d = t.without_columns(&["x"]);
        assert_eq!(d.n_cols(), 1);
    }

    #[test]
    fn row_keys_distinguish_kinds() {
        let t = DataTable::new(vec![
            Column::numeric("x", vec![Some(1.0)]),
            Column::categorical("y", [Some("1")]),
        ])
        .unwrap();
        let u = DataTable::new(vec![
            Column::categorical("x", [Some("1")]),
            Column::numeric("y", vec![Some(1.0)]),
        ])
        .unwrap();
        assert_ne!(t.row_key(0), u.row_key(0));
    }
}
