//! Synthetic tables from a Gaussian copula over empirical marginals.
//!
//! Missing cells are modelled as the lowest value of their column, so they
//! keep their share and their association with the other columns.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{Column, ColumnData, DataError, DataTable};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("need at least 2 rows to fit, got {0}")]
    DegenerateTable(usize),
    #[error("tables differ in columns: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Marginal {
    /// Categories in sorted order (`None` = missing, first), with frequencies.
    Categorical { categories: Vec<Option<String>>, frequencies: Vec<f64> },
    /// Sorted observed values; `missing` is the share of missing cells.
    Numeric { quantiles: Vec<f64>, missing: f64, integer: bool },
}

impl Marginal {
    fn fit(data: &ColumnData) -> Self {
        let n = data.len() as f64;
        match data {
            ColumnData::Categorical(c) => {
                let mut counts: std::collections::BTreeMap<Option<&str>, usize> = Default::default();
                for v in c.iter() {
                    *counts.entry(v).or_default() += 1;
                }
                Marginal::Categorical {
                    categories: counts.keys().map(|k| k.map(str::to_owned)).collect(),
                    frequencies: counts.values().map(|&c| c as f64 / n).collect(),
                }
            }
            ColumnData::Numeric(v) => {
                let mut quantiles: Vec<f64> = v.iter().flatten().copied().collect();
                quantiles.sort_by(f64::total_cmp);
                let integer = quantiles.iter().all(|x| x.fract() == 0.0);
                Marginal::Numeric { missing: (n - quantiles.len() as f64) / n, quantiles, integer }
            }
        }
    }

    /// Inverse CDF on (0, 1).
    fn invert(&self, u: f64) -> Cell {
        match self {
            Marginal::Categorical { categories, frequencies } => {
                let mut acc = 0.0;
                for (c, f) in categories.iter().zip(frequencies) {
                    acc += f;
                    if u < acc {
                        return Cell::Cat(c.clone());
                    }
                }
                Cell::Cat(categories.last().cloned().flatten())
            }
            Marginal::Numeric { quantiles, missing, integer } => {
                if u < *missing || quantiles.is_empty() {
                    return Cell::Num(None);
                }
                let u = ((u - missing) / (1.0 - missing)).clamp(0.0, 1.0);
                let pos = u * (quantiles.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(quantiles.len() - 1);
                let v = quantiles[lo] + (pos - lo as f64) * (quantiles[hi] - quantiles[lo]);
                Cell::Num(Some(if *integer { v.round() } else { v }))
            }
        }
    }
}

enum Cell {
    Cat(Option<String>),
    Num(Option<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel {
    pub columns: Vec<String>,
    pub marginals: Vec<Marginal>,
    /// Row-major correlation of normal scores, PSD with unit diagonal.
    pub correlation: Vec<f64>,
}

/// Ordering key per row: numeric value or sorted-category index, missing lowest.
fn rank_keys(data: &ColumnData) -> Vec<f64> {
    match data {
        ColumnData::Numeric(v) => v.iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect(),
        ColumnData::Categorical(c) => {
            let mut order: Vec<usize> = (0..c.levels().len()).collect();
            order.sort_by(|&a, &b| c.levels()[a].cmp(&c.levels()[b]));
            let mut pos = vec![0.0; order.len()];
            for (p, &l) in order.iter().enumerate() {
                pos[l] = p as f64;
            }
            c.codes().iter().map(|code| code.map_or(-1.0, |k| pos[k as usize])).collect()
        }
    }
}

/// 1-based midranks.
fn midranks(keys: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let mut ranks = vec![0.0; keys.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && keys[idx[j + 1]] == keys[idx[i]] {
            j += 1;
        }
        let mid = (i + j + 2) as f64 / 2.0;
        for &r in &idx[i..=j] {
            ranks[r] = mid;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Clip negative eigenvalues to zero, then rescale to a unit diagonal.
pub fn repair_correlation(m: DMatrix<f64>) -> DMatrix<f64> {
    let p = m.nrows();
    let eig = SymmetricEigen::new(m);
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let mut r = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..p).map(|i| r[(i, i)].max(1e-300).sqrt()).collect();
    for i in 0..p {
        for j in 0..p {
            r[(i, j)] = if i == j { 1.0 } else { r[(i, j)] / (d[i] * d[j]) };
        }
    }
    // symmetrize away rounding
    (&r + r.transpose()) * 0.5
}

pub fn fit(table: &DataTable) -> Result<CopulaModel, SynthesisError> {
    let n = table.n_rows();
    if n < 2 {
        return Err(SynthesisError::DegenerateTable(n));
    }
    let normal = Normal::standard();
    let scores: Vec<Vec<f64>> = table
        .columns()
        .iter()
        .map(|c| midranks(&rank_keys(&c.data)).iter().map(|r| normal.inverse_cdf(r / (n as f64 + 1.0))).collect())
        .collect();
    let p = scores.len();
    let mut corr = DMatrix::<f64>::identity(p, p);
    for i in 0..p {
        for j in i + 1..p {
            let r = pearson(&scores[i], &scores[j]);
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
    }
    let corr = repair_correlation(corr);
    Ok(CopulaModel {
        columns: table.column_names().map(str::to_owned).collect(),
        marginals: table.columns().iter().map(|c| Marginal::fit(&c.data)).collect(),
        correlation: (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| corr[(i, j)]).collect(),
    })
}

impl CopulaModel {
    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let p = self.columns.len();
        DMatrix::from_row_slice(p, p, &self.correlation)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// `n` synthetic rows: correlated normals, mapped through the normal CDF and
/// each column's inverse marginal. Deterministic in `seed`.
pub fn sample(model: &CopulaModel, n: usize, seed: u64) -> Result<DataTable, SynthesisError> {
    let p = model.columns.len();
    let eig = SymmetricEigen::new(model.correlation_matrix());
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::standard();
    let mut cells: Vec<Vec<Cell>> = (0..p).map(|_| Vec::with_capacity(n)).collect();
    let mut eps = nalgebra::DVector::<f64>::zeros(p);
    for _ in 0..n {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        let z = &factor * &eps;
        for (j, col) in cells.iter_mut().enumerate() {
            // keep u strictly inside (0, 1)
            let u = normal.cdf(z[j]).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            col.push(model.marginals[j].invert(u));
        }
    }
    let columns = model
        .columns
        .iter()
        .zip(cells)
        .zip(&model.marginals)
        .map(|((name, col), m)| match m {
            Marginal::Categorical { .. } => Column::categorical(
                name.clone(),
                col.iter().map(|c| match c {
                    Cell::Cat(v) => v.as_deref(),
                    Cell::Num(_) => unreachable!("categorical marginal"),
                }),
            ),
            Marginal::Numeric { .. } => Column::numeric(
                name.clone(),
                col.into_iter()
                    .map(|c| match c {
                        Cell::Num(v) => v,
                        Cell::Cat(_) => unreachable!("numeric marginal"),
                    })
                    .collect(),
            ),
        })
        .collect();
    Ok(DataTable::new(columns)?)
}

/// Fit one copula per stratum (e.g. per class label) and sample `n` rows with
/// each stratum keeping its share, in shuffled order. Falls back to a single
/// copula when some stratum has fewer than 2 rows.
pub fn sample_stratified(table: &DataTable, strata: &[u8], n: usize, seed: u64) -> Result<DataTable, SynthesisError> {
    if strata.len() != table.n_rows() {
        return Err(SynthesisError::SchemaMismatch(format!(
            "{} stratum labels for {} rows",
            strata.len(),
            table.n_rows()
        )));
    }
    let mut groups: std::collections::BTreeMap<u8, Vec<usize>> = Default::default();
    for (i, &s) in strata.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    if groups.len() < 2 || groups.values().any(|g| g.len() < 2) {
        return sample(&fit(table)?, n, seed);
    }
    // largest-remainder apportionment of n over the strata
    let total = table.n_rows() as f64;
    let exact: Vec<f64> = groups.values().map(|g| n as f64 * g.len() as f64 / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..counts.len()).collect();
    by_remainder.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &i in by_remainder.iter().take(n - counts.iter().sum::<usize>()) {
        counts[i] += 1;
    }
    let mut parts = Vec::with_capacity(groups.len());
    for (si, (rows, &count)) in groups.values().zip(&counts).enumerate() {
        let model = fit(&table.select_rows(rows))?;
        parts.push(sample(&model, count, seed.wrapping_add(si as u64 + 1))?);
    }
    let joined = DataTable::concat(&parts)?;
    let mut order: Vec<usize> = (0..joined.n_rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(joined.select_rows(&order))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnUtility {
    pub column: String,
    /// Total-variation distance for categorical columns; mean absolute
    /// difference of percentiles over the original range for numeric ones.
    pub distance: f64,
    pub categorical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub columns: Vec<ColumnUtility>,
    /// Largest absolute difference between Spearman correlations of any column pair.
    pub max_spearman_deviation: f64,
    /// Share of synthetic rows identical to some original row.
    pub exact_match_rate: f64,
}

impl UtilityReport {
    pub fn max_categorical_tv(&self) -> f64 {
        self.columns.iter().filter(|c| c.categorical).map(|c| c.distance).fold(0.0, f64::max)
    }
}

fn total_variation(a: &ColumnData, b: &ColumnData) -> f64 {
    let freq = |d: &ColumnData| {
        let mut m: std::collections::HashMap<Option<String>, f64> = Default::default();
        if let ColumnData::Categorical(c) = d {
            let n = c.len().max(1) as f64;
            for v in c.iter() {
                *m.entry(v.map(str::to_owned)).or_default() += 1.0 / n;
            }
        }
        m
    };
    let (fa, fb) = (freq(a), freq(b));
    let keys: std::collections::HashSet<&Option<String>> = fa.keys().chain(fb.keys()).collect();
    let tv: f64 = keys.into_iter().map(|k| (fa.get(k).unwrap_or(&0.0) - fb.get(k).unwrap_or(&0.0)).abs()).sum::<f64>() / 2.0;
    tv.min(1.0)
}

fn quantile_deviation(a: &ColumnData, b: &ColumnData) -> f64 {
    let sorted = |d: &ColumnData| {
        let mut v: Vec<f64> = match d {
            ColumnData::Numeric(v) => v.iter().flatten().copied().collect(),
            ColumnData::Categorical(_) => Vec::new(),
        };
        v.sort_by(f64::total_cmp);
        v
    };
    let (sa, sb) = (sorted(a), sorted(b));
    if sa.is_empty() || sb.is_empty() {
        return if sa.len() == sb.len() { 0.0 } else { 1.0 };
    }
    let range = sa[sa.len() - 1] - sa[0];
    let q = |v: &[f64], p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(v.len() - 1);
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    };
    let mean: f64 = (1..100).map(|i| (q(&sa, i as f64 / 100.0) - q(&sb, i as f64 / 100.0)).abs()).sum::<f64>() / 99.0;
    if range > 0.0 {
        (mean / range).min(1.0)
    } else if mean == 0.0 {
        0.0
    } else {
        1.0
    }
}

/// Spearman correlation matrix (row-major) using the copula's rank keys.
pub fn spearman_matrix(table: &DataTable) -> Vec<f64> {
    let ranks: Vec<Vec<f64>> = table.columns().iter().map(|c| midranks(&rank_keys(&c.data))).collect();
    let p = ranks.len();
    let mut out = vec![1.0; p * p];
    for i in 0..p {
        for j in i + 1..p {
            let r = pearson(&ranks[i], &ranks[j]);
            out[i * p + j] = r;
            out[j * p + i] = r;
        }
    }
    out
}

/// Compare a synthetic table with its source.
///
/// Spearman correlations are computed on each table's own category order, so
/// both tables should share category labels for the deviation to be meaningful.
pub fn utility_report(original: &DataTable, synthetic: &DataTable) -> Result<UtilityReport, SynthesisError> {
    let names_a: Vec<&str> = original.column_names().collect();
    let names_b: Vec<&str> = synthetic.column_names().collect();
    if names_a != names_b {
        return Err(SynthesisError::SchemaMismatch(format!("{names_a:?} vs {names_b:?}")));
    }
    let mut columns = Vec::with_capacity(names_a.len());
    for (a, b) in original.columns().iter().zip(synthetic.columns()) {
        let distance = match (&a.data, &b.data) {
            (ColumnData::Categorical(_), ColumnData::Categorical(_)) => total_variation(&a.data, &b.data),
            (ColumnData::Numeric(_), ColumnData::Numeric(_)) => quantile_deviation(&a.data, &b.data),
            _ => return Err(SynthesisError::SchemaMismatch(format!("column `{}` changes kind", a.name))),
        };
        columns.push(ColumnUtility {
            column: a.name.clone(),
            distance,
            categorical: matches!(a.data, ColumnData::Categorical(_)),
        });
    }
    let max_spearman_deviation = if original.n_rows() > 1 && synthetic.n_rows() > 1 {
        spearman_matrix(original)
            .iter()
            .zip(spearman_matrix(synthetic))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let originals: std::collections::HashSet<String> = (0..original.n_rows()).map(|r| original.row_key(r)).collect();
    let matches = (0..synthetic.n_rows()).filter(|&r| originals.contains(&synthetic.row_key(r))).count();
    let exact_match_rate = if synthetic.n_rows() == 0 { 0.0 } else { matches as f64 / synthetic.n_rows() as f64 };
    Ok(UtilityReport { columns, max_spearman_deviation, exact_match_rate })
}
