use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnonymityError;
use crate::data::{CategoricalColumn, ColumnData};

/// Label every hierarchy uses for full suppression.
pub const ROOT: &str = "*";

/// True for labels made only of `*` (the root of any hierarchy, including
/// fully masked suffix hierarchies such as `****`).
pub fn is_root_label(label: &str) -> bool {
    !label.is_empty() && label.bytes().all(|b| b == b'*')
}

/// Serialized form of one attribute's generalization ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HierarchySpec {
    /// Nested half-open bins; each width must divide the next.
    NumericBins {
        widths: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<f64>,
    },
    /// Level `i` masks the last `i` characters.
    SuffixMask { token_length: usize },
    /// Level `i` maps level `i-1` labels through `levels[i-1]`; unmapped labels carry over.
    /// With no levels this is the two-step ladder value → `*`.
    Taxonomy {
        #[serde(default)]
        levels: Vec<BTreeMap<String, String>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Ladder {
    Bins { anchor: f64, widths: Vec<f64> },
    Suffix { token_length: usize },
    Taxonomy { levels: Vec<BTreeMap<String, String>> },
}

/// Generalization ladder for one attribute. Level 0 is the identity, the top
/// level maps every value to the root, and each level coarsens the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    attribute: String,
    ladder: Ladder,
}

/// Numeric ladder with half-open bins `[lo–hi)`.
///
/// The anchor is the multiple of the widest bin at or below `min`, so every
/// level shares one grid. `max` is only checked for consistency.
pub fn build_numeric_hierarchy(
    attribute: &str,
    min: f64,
    max: f64,
    widths: &[f64],
) -> Result<Hierarchy, AnonymityError> {
    if !(min.is_finite() && max.is_finite() && min <= max) {
        return Err(AnonymityError::InvalidWidths(format!("bad range [{min}, {max}]")));
    }
    let anchor = widths.last().map_or(0.0, |w| (min / w).floor() * w);
    Hierarchy::numeric(attribute, anchor, widths.to_vec())
}

pub fn build_suffix_hierarchy(attribute: &str, token_length: usize) -> Result<Hierarchy, AnonymityError> {
    if token_length == 0 {
        return Err(AnonymityError::InvalidHierarchy(format!(
            "{attribute}: suffix token length must be at least 1"
        )));
    }
    Ok(Hierarchy { attribute: attribute.to_owned(), ladder: Ladder::Suffix { token_length } })
}

impl Hierarchy {
    pub fn numeric(attribute: &str, anchor: f64, widths: Vec<f64>) -> Result<Self, AnonymityError> {
        validate_widths(&widths)?;
        if !anchor.is_finite() {
            return Err(AnonymityError::InvalidWidths("anchor must be finite".into()));
        }
        Ok(Self { attribute: attribute.to_owned(), ladder: Ladder::Bins { anchor, widths } })
    }

    pub fn taxonomy(attribute: &str, levels: Vec<BTreeMap<String, String>>) -> Self {
        Self { attribute: attribute.to_owned(), ladder: Ladder::Taxonomy { levels } }
    }

    /// `value → *`.
    pub fn flat(attribute: &str) -> Self {
        Self::taxonomy(attribute, Vec::new())
    }

    pub fn from_spec(attribute: &str, spec: &HierarchySpec) -> Result<Self, AnonymityError> {
        match spec {
            HierarchySpec::NumericBins { widths, anchor } => {
                Self::numeric(attribute, anchor.unwrap_or(0.0), widths.clone())
            }
            HierarchySpec::SuffixMask { token_length } => build_suffix_hierarchy(attribute, *token_length),
            HierarchySpec::Taxonomy { levels } => Ok(Self::taxonomy(attribute, levels.clone())),
        }
    }

    pub fn to_spec(&self) -> HierarchySpec {
        match &self.ladder {
            Ladder::Bins { anchor, widths } => {
                HierarchySpec::NumericBins { widths: widths.clone(), anchor: Some(*anchor) }
            }
            Ladder::Suffix { token_length } => HierarchySpec::SuffixMask { token_length: *token_length },
            Ladder::Taxonomy { levels } => HierarchySpec::Taxonomy { levels: levels.clone() },
        }
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    /// Index of the root level.
    pub fn top_level(&self) -> usize {
        match &self.ladder {
            Ladder::Bins { widths, .. } => widths.len() + 1,
            Ladder::Suffix { token_length } => *token_length,
            Ladder::Taxonomy { levels } => levels.len() + 1,
        }
    }

    fn root_label(&self) -> String {
        match &self.ladder {
            Ladder::Suffix { token_length } => ROOT.repeat(*token_length),
            _ => ROOT.to_owned(),
        }
    }

    /// Generalized label of a numeric value at `level` (level ≥ 1).
    pub fn generalize_number(&self, value: f64, level: usize) -> String {
        if level >= self.top_level() {
            return self.root_label();
        }
        match &self.ladder {
            Ladder::Bins { anchor, widths } => bin_label(*anchor, widths[level - 1], value),
            _ => self.generalize_label(&format_number(value), level),
        }
    }

    /// Generalized label of a text value at `level` (level ≥ 1).
    pub fn generalize_label(&self, value: &str, level: usize) -> String {
        if level == 0 {
            return value.to_owned();
        }
        if level >= self.top_level() || is_root_label(value) {
            return self.root_label();
        }
        match &self.ladder {
            Ladder::Bins { anchor, widths } => match parse_numeric_label(value) {
                Some(x) => bin_label(*anchor, widths[level - 1], x),
                None => value.to_owned(),
            },
            Ladder::Suffix { .. } => {
                let chars: Vec<char> = value.chars().collect();
                let keep = chars.len().saturating_sub(level);
                chars[..keep].iter().collect::<String>() + &ROOT.repeat(chars.len() - keep)
            }
            Ladder::Taxonomy { levels } => {
                let mut label = value.to_owned();
                for map in &levels[..level] {
                    if let Some(parent) = map.get(&label) {
                        label = parent.clone();
                    }
                }
                label
            }
        }
    }

    /// Whole column at `level`. Level 0 returns the data unchanged; missing
    /// cells stay missing below the root.
    pub fn generalize_column(&self, data: &ColumnData, level: usize) -> ColumnData {
        if level == 0 {
            return data.clone();
        }
        let root = level >= self.top_level();
        let mut out = CategoricalColumn::new();
        match data {
            ColumnData::Numeric(values) => {
                let mut cache: HashMap<u64, String> = HashMap::new();
                for v in values {
                    match v {
                        None if !root => out.push(None),
                        None => out.push(Some(&self.root_label())),
                        Some(x) => {
                            let label = cache.entry(x.to_bits()).or_insert_with(|| self.generalize_number(*x, level));
                            out.push(Some(label));
                        }
                    }
                }
            }
            ColumnData::Categorical(col) => {
                let mapped: Vec<String> =
                    col.levels().iter().map(|l| self.generalize_label(l, level)).collect();
                let root_label = self.root_label();
                for code in col.codes() {
                    match code {
                        Some(c) => out.push(Some(&mapped[*c as usize])),
                        None if root => out.push(Some(&root_label)),
                        None => out.push(None),
                    }
                }
            }
        }
        ColumnData::Categorical(out)
    }
}

fn validate_widths(widths: &[f64]) -> Result<(), AnonymityError> {
    for w in widths {
        if !(w.is_finite() && *w > 0.0) {
            return Err(AnonymityError::InvalidWidths(format!("width {w} is not positive")));
        }
    }
    for pair in widths.windows(2) {
        if pair[1] <= pair[0] {
            return Err(AnonymityError::InvalidWidths(format!(
                "widths must be strictly ascending, got {} then {}",
                pair[0], pair[1]
            )));
        }
        let ratio = pair[1] / pair[0];
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(AnonymityError::InvalidWidths(format!(
                "width {} does not divide {}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

fn bin_label(anchor: f64, width: f64, value: f64) -> String {
    let lo = anchor + ((value - anchor) / width).floor() * width;
    format!("[{}\u{2013}{})", format_number(lo), format_number(lo + width))
}

fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Plain numbers and `[lo–hi)` bin labels; bins re-bin by their lower bound.
fn parse_numeric_label(label: &str) -> Option<f64> {
    if let Ok(x) = label.parse::<f64>() {
        return Some(x);
    }
    let inner = label.strip_prefix('[')?.strip_suffix(')')?;
    let (lo, _) = inner.split_once('\u{2013}')?;
    lo.parse().ok()
}

/// Hierarchies keyed by attribute name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hierarchies {
    by_attribute: BTreeMap<String, Hierarchy>,
}

impl Hierarchies {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, h: Hierarchy) {
        self.by_attribute.insert(h.attribute.clone(), h);
    }

    pub fn with(mut self, h: Hierarchy) -> Self {
        self.insert(h);
        self
    }

    pub fn get(&self, attribute: &str) -> Option<&Hierarchy> {
        self.by_attribute.get(attribute)
    }

    /// JSON object `{attribute: {"type": ..., parameters...}}`.
    pub fn from_json(text: &str) -> Result<Self, AnonymityError> {
        let specs: BTreeMap<String, HierarchySpec> =
            serde_json::from_str(text).map_err(|e| AnonymityError::InvalidHierarchy(e.to_string()))?;
        let mut out = Self::new();
        for (name, spec) in &specs {
            out.insert(Hierarchy::from_spec(name, spec)?);
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self, AnonymityError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AnonymityError::InvalidHierarchy(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let specs: BTreeMap<&str, HierarchySpec> =
            self.by_attribute.iter().map(|(k, h)| (k.as_str(), h.to_spec())).collect();
        serde_json::to_string_pretty(&specs).expect("hierarchies serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Cell;

    #[test]
    fn numeric_levels_for_39() {
        let h = Hierarchy::numeric("age", 0.0, vec![5.0, 20.0]).unwrap();
        assert_eq!(h.top_level(), 3);
        assert_eq!(h.generalize_number(39.0, 1), "[35–40)");
        assert_eq!(h.generalize_number(39.0, 2), "[20–40)");
        assert_eq!(h.generalize_number(39.0, 3), "*");
    }

    #[test]
    fn builder_anchors_on_widest_grid() {
        let h = build_numeric_hierarchy("age", 17.0, 90.0, &[5.0, 10.0, 20.0]).unwrap();
        assert_eq!(h.generalize_number(17.0, 1), "[15–20)");
        assert_eq!(h.generalize_number(17.0, 3), "[0–20)");
    }

    #[test]
    fn empty_widths_give_identity_and_root() {
        let h = build_numeric_hierarchy("x", 0.0, 10.0, &[]).unwrap();
        assert_eq!(h.top_level(), 1);
        assert_eq!(h.generalize_number(3.0, 1), "*");
        let col = ColumnData::Numeric(vec![Some(3.0)]);
        assert_eq!(h.generalize_column(&col, 0), col);
    }

    #[test]
    fn invalid_widths() {
        assert!(matches!(build_numeric_hierarchy("x", 0.0, 1.0, &[10.0, 5.0]), Err(AnonymityError::InvalidWidths(_))));
        assert!(matches!(build_numeric_hierarchy("x", 0.0, 1.0, &[5.0, 5.0]), Err(AnonymityError::InvalidWidths(_))));
        assert!(matches!(build_numeric_hierarchy("x", 0.0, 1.0, &[4.0, 10.0]), Err(AnonymityError::InvalidWidths(_))));
    }

    #[test]
    fn numeric_bins_coarsen_on_integer_grid() {
        let h = Hierarchy::numeric("x", 0.0, vec![5.0, 10.0, 20.0]).unwrap();
        for level in 1..h.top_level() {
            for a in 0..=100 {
                for b in 0..=100 {
                    let (a, b) = (f64::from(a), f64::from(b));
                    if h.generalize_number(a, level) == h.generalize_number(b, level) {
                        assert_eq!(h.generalize_number(a, level + 1), h.generalize_number(b, level + 1));
                    }
                }
            }
        }
    }

    #[test]
    fn bin_labels_rebin_by_lower_bound() {
        let h = Hierarchy::numeric("age", 0.0, vec![5.0, 20.0]).unwrap();
        assert_eq!(h.generalize_label("[35–40)", 2), "[20–40)");
        assert_eq!(h.generalize_label("39", 1), "[35–40)");
    }

    #[test]
    fn zip_suffix_masking() {
        let h = build_suffix_hierarchy("zip", 4).unwrap();
        assert_eq!(h.generalize_label("1013", 0), "1013");
        assert_eq!(h.generalize_label("1013", 1), "101*");
        assert_eq!(h.generalize_label("1013", 2), "10**");
        assert_eq!(h.generalize_label("1013", 4), "****");
        assert_eq!(h.generalize_label("1013", 2), h.generalize_label("1098", 2));
        assert_ne!(h.generalize_label("1013", 1), h.generalize_label("1098", 1));
        assert!(build_suffix_hierarchy("zip", 0).is_err());
    }

    #[test]
    fn taxonomy_chains_levels() {
        let l1: BTreeMap<String, String> =
            [("Bachelors", "Undergraduate"), ("Masters", "Graduate"), ("Doctorate", "Graduate")]
                .into_iter()
                .map(|(a, b)| (a.to_owned(), b.to_owned()))
                .collect();
        let l2: BTreeMap<String, String> = [("Undergraduate", "Higher"), ("Graduate", "Higher")]
            .into_iter()
            .map(|(a, b)| (a.to_owned(), b.to_owned()))
            .collect();
        let h = Hierarchy::taxonomy("education", vec![l1, l2]);
        assert_eq!(h.top_level(), 3);
        assert_eq!(h.generalize_label("Masters", 1), "Graduate");
        assert_eq!(h.generalize_label("Masters", 2), "Higher");
        assert_eq!(h.generalize_label("HS-grad", 2), "HS-grad");
        assert_eq!(h.generalize_label("HS-grad", 3), "*");
    }

    #[test]
    fn missing_cells_become_root_only_at_top() {
        let h = Hierarchy::flat("c");
        let col = ColumnData::Categorical(CategoricalColumn::from_values([Some("a"), None]));
        let top = h.generalize_column(&col, 1);
        assert_eq!(top.cell(0), Cell::Cat("*"));
        assert_eq!(top.cell(1), Cell::Cat("*"));
        let h = Hierarchy::numeric("n", 0.0, vec![10.0]).unwrap();
        let col = ColumnData::Numeric(vec![Some(12.0), None]);
        let mid = h.generalize_column(&col, 1);
        assert_eq!(mid.cell(0), Cell::Cat("[10–20)"));
        assert_eq!(mid.cell(1), Cell::Missing);
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{
            "age": {"type": "numeric_bins", "widths": [5, 10, 20]},
            "zip": {"type": "suffix_mask", "token_length": 4},
            "sex": {"type": "taxonomy"}
        }"#;
        let hs = Hierarchies::from_json(text).unwrap();
        assert_eq!(hs.get("age").unwrap().top_level(), 4);
        assert_eq!(hs.get("zip").unwrap().top_level(), 4);
        assert_eq!(hs.get("sex").unwrap().top_level(), 1);
        assert_eq!(Hierarchies::from_json(&hs.to_json()).unwrap(), hs);
    }
}
