use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{AttributeSchema, ColumnKind};
use super::table::{Cell, CategoricalColumn, Column, ColumnData, DataTable};
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvDialect {
    Comma,
    Semicolon,
}

impl CsvDialect {
    fn delimiter(self) -> u8 {
        match self {
            CsvDialect::Comma => b',',
            CsvDialect::Semicolon => b';',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub dialect: CsvDialect,
    pub header: bool,
    /// Cell text treated as a missing value (the Census files use `?`).
    #[serde(default = "default_missing")]
    pub missing_marker: Option<String>,
}

fn default_missing() -> Option<String> {
    Some("?".into())
}

impl CsvOptions {
    pub fn new(dialect: CsvDialect, header: bool) -> Self {
        Self { dialect, header, missing_marker: default_missing() }
    }
}

/// Load a delimited file into a table typed by `schema`.
///
/// With a header row, schema columns are looked up by name and any extra file
/// columns are ignored. Without one, the file's columns must line up with the
/// schema in order. Blank lines are skipped; every cell is whitespace-trimmed.
pub fn load_csv(path: &Path, opts: &CsvOptions, schema: &AttributeSchema) -> Result<DataTable, DataError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| DataError::io(path, e))?;
    parse_csv(&text, opts, schema)
}

pub(crate) fn parse_csv(text: &str, opts: &CsvOptions, schema: &AttributeSchema) -> Result<DataTable, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.dialect.delimiter())
        .has_headers(opts.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let specs = schema.columns();
    let (positions, width) = if opts.header {
        let header = reader.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
        let positions = specs
            .iter()
            .map(|s| {
                header
                    .iter()
                    .position(|h| h == s.name)
                    .ok_or_else(|| DataError::UnknownColumn(s.name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        (positions, header.len())
    } else {
        ((0..specs.len()).collect(), specs.len())
    };

    let mut data: Vec<ColumnData> = specs
        .iter()
        .map(|s| match s.kind {
            ColumnKind::Numeric => ColumnData::Numeric(Vec::new()),
            ColumnKind::Categorical => ColumnData::Categorical(CategoricalColumn::new()),
        })
        .collect();

    let missing = opts.missing_marker.as_deref();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(DataError::RaggedRow { line, expected: width, found: record.len() });
        }
        for ((spec, &pos), col) in specs.iter().zip(&positions).zip(data.iter_mut()) {
            let raw = &record[pos];
            let is_missing = Some(raw) == missing || raw.is_empty();
            match col {
                ColumnData::Numeric(v) => {
                    if is_missing {
                        v.push(None);
                        continue;
                    }
                    let x: f64 = raw.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| {
                        DataError::ParseError { line, column: spec.name.clone(), value: raw.to_owned() }
                    })?;
                    v.push(Some(x));
                }
                ColumnData::Categorical(c) => c.push((!is_missing).then_some(raw)),
            }
        }
    }

    let columns = specs
        .iter()
        .zip(data)
        .map(|(s, d)| Column { name: s.name.clone(), data: d })
        .collect();
    DataTable::new(columns)
}

/// Write `table` with a header row. Missing cells get the options' marker.
pub fn write_csv(table: &DataTable, path: &Path, opts: &CsvOptions) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().delimiter(opts.dialect.delimiter()).from_writer(file);
    let csv_err = |e: csv::Error| DataError::Csv(e.to_string());
    w.write_record(table.column_names()).map_err(csv_err)?;
    let missing = opts.missing_marker.as_deref().unwrap_or("");
    let mut row = Vec::with_capacity(table.n_cols());
    for r in 0..table.n_rows() {
        row.clear();
        for c in 0..table.n_cols() {
            row.push(match table.cell(r, c) {
                Cell::Num(x) => x.to_string(),
                Cell::Cat(s) => s.to_owned(),
                Cell::Missing => missing.to_owned(),
            });
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeRole, Cell, ColumnSpec};

    fn census_like() -> AttributeSchema {
        AttributeSchema::new(vec![
            ColumnSpec::numeric("age", AttributeRole::QuasiIdentifying),
            ColumnSpec::categorical("workclass", AttributeRole::QuasiIdentifying),
            ColumnSpec::categorical("income", AttributeRole::Insensitive).target_one_of([">50K"]),
        ])
        .unwrap()
    }

    #[test]
    fn comma_without_header_trims_and_marks_missing() {
        let text = "39, State-gov, <=50K\n50, ?, >50K\n\n";
        let t = parse_csv(text, &CsvOptions::new(CsvDialect::Comma, false), &census_like()).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.cell(0, 1), Cell::Cat("State-gov"));
        assert_eq!(t.cell(1, 1), Cell::Missing);
        assert_eq!(t.cell(1, 0), Cell::Num(50.0));
    }

    #[test]
    fn semicolon_with_header_and_quotes() {
        let schema = AttributeSchema::new(vec![
            ColumnSpec::categorical("school", AttributeRole::QuasiIdentifying),
            ColumnSpec::numeric("G3", AttributeRole::Insensitive).target_at_least(10.0),
        ])
        .unwrap();
        let text = "\"school\";\"sex\";\"G3\"\n\"GP\";\"F\";6\n\"MS\";\"M\";10\n";
        let t = parse_csv(text, &CsvOptions::new(CsvDialect::Semicolon, true), &schema).unwrap();
        assert_eq!(t.n_cols(), 2);
        assert_eq!(t.cell(1, 0), Cell::Cat("MS"));
        assert_eq!(t.cell(1, 1), Cell::Num(10.0));
    }

    #[test]
    fn empty_file_gives_empty_table() {
        let t = parse_csv("", &CsvOptions::new(CsvDialect::Comma, false), &census_like()).unwrap();
        assert_eq!(t.n_rows(), 0);
        assert_eq!(t.n_cols(), 3);
    }

    #[test]
    fn ragged_row_names_line() {
        let text = "39, State-gov, <=50K\n50, Private\n";
        let err = parse_csv(text, &CsvOptions::new(CsvDialect::Comma, false), &census_like()).unwrap_err();
        assert!(matches!(err, DataError::RaggedRow { line: 2, expected: 3, found: 2 }), "{err}");
    }

    #[test]
    fn parse_error_names_line_and_column() {
        let text = "39, State-gov, <=50K\nforty, Private, >50K\n";
        let err = parse_csv(text, &CsvOptions::new(CsvDialect::Comma, false), &census_like()).unwrap_err();
        match err {
            DataError::ParseError { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, "age");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_header_column_is_reported() {
        let text = "age;income\n1;x\n";
        let err = parse_csv(text, &CsvOptions::new(CsvDialect::Semicolon, true), &census_like()).unwrap_err();
        assert!(matches!(err, DataError::UnknownColumn(c) if c == "workclass"));
    }
}
