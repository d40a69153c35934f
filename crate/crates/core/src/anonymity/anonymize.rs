use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::hierarchy::{is_root_label, Hierarchies, Hierarchy};
use super::AnonymityError;
use crate::data::{AttributeRole, AttributeSchema, Cell, Column, ColumnData, DataTable};

/// Current level per quasi-identifier. Attributes not listed are at level 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GeneralizationState {
    levels: BTreeMap<String, usize>,
}

impl GeneralizationState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn level(&self, attribute: &str) -> usize {
        self.levels.get(attribute).copied().unwrap_or(0)
    }

    pub fn set(&mut self, attribute: &str, level: usize) {
        if level == 0 {
            self.levels.remove(attribute);
        } else {
            self.levels.insert(attribute.to_owned(), level);
        }
    }

    pub fn with(mut self, attribute: &str, level: usize) -> Self {
        self.set(attribute, level);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.levels.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn is_identity(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Rows sharing one generalized quasi-identifier tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceClass {
    /// Generalized value per quasi-identifier, in schema order (`None` = missing).
    pub key: Vec<Option<String>>,
    pub rows: Vec<usize>,
}

impl EquivalenceClass {
    pub fn size(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnonymizeOptions {
    pub k: usize,
    /// Largest fraction of records that may be suppressed.
    pub max_record_suppression: f64,
    /// Require classes of at least `k + 1` rows instead of `k`.
    pub k_plus_one: bool,
}

impl AnonymizeOptions {
    pub fn new(k: usize) -> Self {
        Self { k, max_record_suppression: 1.0, k_plus_one: false }
    }

    pub fn min_class_size(&self) -> usize {
        if self.k_plus_one {
            self.k + 1
        } else {
            self.k
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymizationReport {
    pub requested_k: usize,
    /// Class size the output was held to (`k`, or `k + 1` in that mode).
    pub min_class_size_required: usize,
    /// Smallest class in the output; `None` when every record was suppressed.
    pub achieved_min_class_size: Option<usize>,
    pub state: GeneralizationState,
    pub generalization_steps: usize,
    pub suppressed_records: usize,
    pub suppressed_cell_fraction: f64,
    pub removed_identifying: Vec<String>,
    pub rows_in: usize,
    pub rows_out: usize,
}

fn qi_names(table: &DataTable, schema: &AttributeSchema) -> Vec<String> {
    schema
        .quasi_identifiers()
        .filter(|c| table.column(&c.name).is_some())
        .map(|c| c.name.clone())
        .collect()
}

fn hierarchy_for<'h>(hierarchies: &'h Hierarchies, attribute: &str) -> Result<&'h Hierarchy, AnonymityError> {
    hierarchies
        .get(attribute)
        .ok_or_else(|| AnonymityError::MissingHierarchy(attribute.to_owned()))
}

fn check_level(h: &Hierarchy, level: usize) -> Result<(), AnonymityError> {
    if level > h.top_level() {
        return Err(AnonymityError::LevelOutOfRange {
            attribute: h.attribute().to_owned(),
            level,
            top: h.top_level(),
        });
    }
    Ok(())
}

const MISSING_CODE: u32 = u32::MAX;

/// Dense codes for one (generalized) column, for fast grouping.
fn column_codes(data: &ColumnData) -> Vec<u32> {
    match data {
        ColumnData::Categorical(c) => c.codes().iter().map(|c| c.unwrap_or(MISSING_CODE)).collect(),
        ColumnData::Numeric(v) => {
            let mut seen: HashMap<u64, u32> = HashMap::new();
            v.iter()
                .map(|x| match x {
                    None => MISSING_CODE,
                    Some(x) => {
                        let next = seen.len() as u32;
                        *seen.entry(x.to_bits()).or_insert(next)
                    }
                })
                .collect()
        }
    }
}

/// Group rows by their code tuple; classes are ordered by first row.
fn group_rows(codes: &[&[u32]], n: usize) -> Vec<Vec<usize>> {
    let q = codes.len();
    let mut flat = Vec::with_capacity(n * q);
    for r in 0..n {
        flat.extend(codes.iter().map(|c| c[r]));
    }
    let mut index: HashMap<&[u32], usize> = HashMap::with_capacity(n);
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for r in 0..n {
        let key = &flat[r * q..(r + 1) * q];
        let next = classes.len();
        let slot = *index.entry(key).or_insert(next);
        if slot == next {
            classes.push(Vec::new());
        }
        classes[slot].push(r);
    }
    classes
}

/// `(class id, class size)` for every row.
fn class_sizes(codes: &[&[u32]], n: usize) -> Vec<(usize, usize)> {
    let classes = group_rows(codes, n);
    let mut size_of_row = vec![(0, 0); n];
    for (id, rows) in classes.iter().enumerate() {
        for &r in rows {
            size_of_row[r] = (id, rows.len());
        }
    }
    size_of_row
}

fn violating_rows(codes: &[&[u32]], n: usize, min_size: usize) -> usize {
    group_rows(codes, n).iter().filter(|c| c.len() < min_size).map(Vec::len).sum()
}

/// Equivalence classes of `table` under `state`. The grouping key is the tuple of
/// generalized quasi-identifier values; with no quasi-identifiers every row falls
/// in one class.
pub fn partition_classes(
    table: &DataTable,
    state: &GeneralizationState,
    schema: &AttributeSchema,
    hierarchies: &Hierarchies,
) -> Result<Vec<EquivalenceClass>, AnonymityError> {
    let names = qi_names(table, schema);
    let mut generalized = Vec::with_capacity(names.len());
    for name in &names {
        let level = state.level(name);
        let data = &table.column(name).expect("qi present").data;
        if level == 0 {
            generalized.push(data.clone());
        } else {
            let h = hierarchy_for(hierarchies, name)?;
            check_level(h, level)?;
            generalized.push(h.generalize_column(data, level));
        }
    }
    let codes: Vec<Vec<u32>> = generalized.iter().map(column_codes).collect();
    let code_refs: Vec<&[u32]> = codes.iter().map(Vec::as_slice).collect();
    Ok(group_rows(&code_refs, table.n_rows())
        .into_iter()
        .map(|rows| {
            let first = rows[0];
            let key = generalized
                .iter()
                .map(|d| match d.cell(first) {
                    Cell::Num(x) => Some(format!("{x}")),
                    Cell::Cat(s) => Some(s.to_owned()),
                    Cell::Missing => None,
                })
                .collect();
            EquivalenceClass { key, rows }
        })
        .collect())
}

/// `(ok, min_class_size)`: ok iff every class has at least `k` rows.
pub fn verify_k(
    table: &DataTable,
    state: &GeneralizationState,
    schema: &AttributeSchema,
    hierarchies: &Hierarchies,
    k: usize,
) -> Result<(bool, usize), AnonymityError> {
    let classes = partition_classes(table, state, schema, hierarchies)?;
    let min = classes.iter().map(EquivalenceClass::size).min().unwrap_or(0);
    Ok((min >= k, min))
}

/// Apply `state` to every quasi-identifier and drop identifying columns, without
/// suppressing anything. Used to map held-out rows into the same feature space
/// as an anonymized training table.
pub fn apply_generalization(
    table: &DataTable,
    state: &GeneralizationState,
    schema: &AttributeSchema,
    hierarchies: &Hierarchies,
) -> Result<DataTable, AnonymityError> {
    let mut columns = Vec::with_capacity(table.n_cols());
    for col in table.columns() {
        let role = schema.get(&col.name).map(|s| s.role);
        match role {
            Some(AttributeRole::Identifying) => continue,
            Some(AttributeRole::QuasiIdentifying) if state.level(&col.name) > 0 => {
                let h = hierarchy_for(hierarchies, &col.name)?;
                let level = state.level(&col.name);
                check_level(h, level)?;
                columns.push(Column { name: col.name.clone(), data: h.generalize_column(&col.data, level) });
            }
            _ => columns.push(col.clone()),
        }
    }
    Ok(DataTable::new(columns)?)
}

struct LevelCache<'a> {
    table: &'a DataTable,
    names: &'a [String],
    hierarchies: Vec<&'a Hierarchy>,
    codes: HashMap<(usize, usize), Vec<u32>>,
}

impl<'a> LevelCache<'a> {
    fn codes(&mut self, qi: usize, level: usize) -> &[u32] {
        let (table, names, hierarchies) = (self.table, self.names, &self.hierarchies);
        self.codes.entry((qi, level)).or_insert_with(|| {
            let data = &table.column(&names[qi]).expect("qi present").data;
            column_codes(&hierarchies[qi].generalize_column(data, level))
        })
    }

    fn violating(&mut self, levels: &[usize], min_size: usize) -> usize {
        for (qi, &level) in levels.iter().enumerate() {
            self.codes(qi, level);
        }
        let refs: Vec<&[u32]> = levels
            .iter()
            .enumerate()
            .map(|(qi, &level)| self.codes[&(qi, level)].as_slice())
            .collect();
        violating_rows(&refs, self.table.n_rows(), min_size)
    }
}

/// Quasi-identifier below its top level with the most distinct values at its
/// current level (leftmost on ties).
fn most_distinct(cache: &mut LevelCache<'_>, levels: &[usize], tops: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for qi in 0..levels.len() {
        if levels[qi] >= tops[qi] {
            continue;
        }
        let mut codes = cache.codes(qi, levels[qi]).to_vec();
        codes.sort_unstable();
        codes.dedup();
        if best.is_none_or(|(_, d)| codes.len() > d) {
            best = Some((qi, codes.len()));
        }
    }
    best.map(|(qi, _)| qi)
}

/// k-anonymize `table`.
///
/// Identifying columns are removed. Then, while some class is smaller than
/// required, the quasi-identifier whose one-level generalization removes the
/// most rows from undersized classes is raised (leftmost in schema order on
/// ties). When no single step helps, the remaining violating records are
/// suppressed (removed) if they fit within the suppression budget and are not
/// the whole table; otherwise the attribute with the most distinct values is
/// raised and the loop goes on.
pub fn anonymize(
    table: &DataTable,
    schema: &AttributeSchema,
    hierarchies: &Hierarchies,
    opts: &AnonymizeOptions,
) -> Result<(DataTable, AnonymizationReport), AnonymityError> {
    let n = table.n_rows();
    let min_size = opts.min_class_size();
    if opts.k == 0 || min_size > n {
        return Err(AnonymityError::InvalidK { k: opts.k, rows: n });
    }
    let names = qi_names(table, schema);
    let hs = names
        .iter()
        .map(|name| hierarchy_for(hierarchies, name))
        .collect::<Result<Vec<_>, _>>()?;
    let tops: Vec<usize> = hs.iter().map(|h| h.top_level()).collect();
    let mut cache = LevelCache { table, names: &names, hierarchies: hs, codes: HashMap::new() };

    let mut levels = vec![0usize; names.len()];
    let mut violating = cache.violating(&levels, min_size);
    let mut steps = 0;
    while violating > 0 {
        let mut best: Option<(usize, usize)> = None;
        for qi in 0..names.len() {
            if levels[qi] >= tops[qi] {
                continue;
            }
            levels[qi] += 1;
            let v = cache.violating(&levels, min_size);
            levels[qi] -= 1;
            if v < violating && best.is_none_or(|(_, bv)| v < bv) {
                best = Some((qi, v));
            }
        }
        let (qi, v) = match best {
            Some(step) => step,
            None => {
                // plateau: suppress if that is within budget and leaves something,
                // otherwise keep coarsening the most fragmented attribute
                if violating < n && violating as f64 <= opts.max_record_suppression * n as f64 {
                    break;
                }
                let Some(qi) = most_distinct(&mut cache, &levels, &tops) else { break };
                (qi, violating)
            }
        };
        levels[qi] += 1;
        violating = v;
        steps += 1;
    }

    let mut state = GeneralizationState::new();
    for (name, &level) in names.iter().zip(&levels) {
        state.set(name, level);
    }

    let final_codes: Vec<Vec<u32>> = levels
        .iter()
        .enumerate()
        .map(|(qi, &level)| cache.codes(qi, level).to_vec())
        .collect();
    let refs: Vec<&[u32]> = final_codes.iter().map(Vec::as_slice).collect();
    let per_row = class_sizes(&refs, n);
    let kept: Vec<usize> = (0..n).filter(|&r| per_row[r].1 >= min_size).collect();
    let suppressed = n - kept.len();
    if suppressed as f64 > opts.max_record_suppression * n as f64 {
        return Err(AnonymityError::BudgetExceeded {
            violating: suppressed,
            rows: n,
            budget: opts.max_record_suppression,
        });
    }

    let removed_identifying: Vec<String> = schema
        .with_role(AttributeRole::Identifying)
        .filter(|c| table.column(&c.name).is_some())
        .map(|c| c.name.clone())
        .collect();
    let generalized = apply_generalization(table, &state, schema, hierarchies)?;
    let output = generalized.select_rows(&kept);

    let achieved = if kept.is_empty() {
        None
    } else {
        let mut sizes: HashMap<usize, usize> = HashMap::new();
        for &r in &kept {
            sizes.insert(per_row[r].0, per_row[r].1);
        }
        sizes.values().min().copied()
    };

    let mut report = AnonymizationReport {
        requested_k: opts.k,
        min_class_size_required: min_size,
        achieved_min_class_size: achieved,
        state,
        generalization_steps: steps,
        suppressed_records: suppressed,
        suppressed_cell_fraction: 0.0,
        removed_identifying,
        rows_in: n,
        rows_out: output.n_rows(),
    };
    report.suppressed_cell_fraction = suppression_ratio(table, &output, &report);
    Ok((output, report))
}

/// Suppressed cells over all cells of the original table.
///
/// Counts cells holding a hierarchy root, every cell of a suppressed record,
/// and every cell of a removed identifying column.
pub fn suppression_ratio(original: &DataTable, anonymized: &DataTable, report: &AnonymizationReport) -> f64 {
    let total = original.n_rows() * original.n_cols();
    if total == 0 {
        return 0.0;
    }
    let mut root_cells = 0usize;
    for col in anonymized.columns() {
        if let ColumnData::Categorical(c) = &col.data {
            let root_codes: Vec<bool> = c.levels().iter().map(|l| is_root_label(l)).collect();
            root_cells += c.codes().iter().filter(|code| code.is_some_and(|k| root_codes[k as usize])).count();
        }
    }
    let suppressed_records = report.suppressed_records * original.n_cols();
    let removed = report.removed_identifying.len() * anonymized.n_rows();
    (root_cells + suppressed_records + removed) as f64 / total as f64
}
