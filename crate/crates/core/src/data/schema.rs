use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Privacy role of a column. Every column has exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeRole {
    Insensitive,
    Sensitive,
    Identifying,
    QuasiIdentifying,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// One entry of the schema file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub role: AttributeRole,
    #[serde(default, skip_serializing_if = "is_false")]
    pub target: bool,
    /// Numeric target: label is 1 when the value is at least this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_threshold: Option<f64>,
    /// Categorical target: values that map to label 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<Vec<String>>,
    /// Loaded and anonymized like any other column but never used as a model feature.
    #[serde(default, skip_serializing_if = "is_false")]
    pub ignore: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, role: AttributeRole) -> Self {
        Self {
            name: name.into(),
            kind,
            role,
            target: false,
            pass_threshold: None,
            positive: None,
            ignore: false,
        }
    }

    pub fn numeric(name: impl Into<String>, role: AttributeRole) -> Self {
        Self::new(name, ColumnKind::Numeric, role)
    }

    pub fn categorical(name: impl Into<String>, role: AttributeRole) -> Self {
        Self::new(name, ColumnKind::Categorical, role)
    }

    pub fn target_at_least(mut self, threshold: f64) -> Self {
        self.target = true;
        self.pass_threshold = Some(threshold);
        self
    }

    pub fn target_one_of<S: Into<String>>(mut self, positive: impl IntoIterator<Item = S>) -> Self {
        self.target = true;
        self.positive = Some(positive.into_iter().map(Into::into).collect());
        self
    }

    pub fn ignored(mut self) -> Self {
        self.ignore = true;
        self
    }
}

/// How the target column turns into a {0,1} label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    AtLeast(f64),
    OneOf(Vec<String>),
}

impl TargetRule {
    pub fn numeric(&self, v: f64) -> u8 {
        match self {
            TargetRule::AtLeast(t) => u8::from(v >= *t),
            TargetRule::OneOf(_) => 0,
        }
    }

    pub fn categorical(&self, v: &str) -> u8 {
        match self {
            TargetRule::OneOf(set) => u8::from(set.iter().any(|p| p == v)),
            TargetRule::AtLeast(_) => 0,
        }
    }
}

/// Ordered column descriptions; serialized as a bare JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeSchema {
    columns: Vec<ColumnSpec>,
}

impl AttributeSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, DataError> {
        let schema = Self { columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let schema: AttributeSchema =
            serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        let targets: Vec<&ColumnSpec> = self.columns.iter().filter(|c| c.target).collect();
        match targets.as_slice() {
            [] => return Err(DataError::MissingTarget),
            [t] => {
                if t.role != AttributeRole::Insensitive {
                    return Err(DataError::Schema(format!(
                        "target column `{}` must have role insensitive",
                        t.name
                    )));
                }
                let ok = match t.kind {
                    ColumnKind::Numeric => t.pass_threshold.is_some(),
                    ColumnKind::Categorical => t.positive.as_ref().is_some_and(|p| !p.is_empty()),
                };
                if !ok {
                    return Err(DataError::Schema(format!(
                        "target column `{}` needs pass_threshold (numeric) or positive (categorical)",
                        t.name
                    )));
                }
            }
            _ => return Err(DataError::Schema("more than one target column".into())),
        }
        Ok(())
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn get(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn target(&self) -> &ColumnSpec {
        self.columns.iter().find(|c| c.target).expect("validated schema has a target")
    }

    pub fn target_rule(&self) -> TargetRule {
        let t = self.target();
        match t.kind {
            ColumnKind::Numeric => TargetRule::AtLeast(t.pass_threshold.unwrap_or(0.0)),
            ColumnKind::Categorical => TargetRule::OneOf(t.positive.clone().unwrap_or_default()),
        }
    }

    pub fn with_role(&self, role: AttributeRole) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(move |c| c.role == role)
    }

    pub fn quasi_identifiers(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.with_role(AttributeRole::QuasiIdentifying)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Vec<ColumnSpec> {
        vec![
            ColumnSpec::numeric("age", AttributeRole::QuasiIdentifying),
            ColumnSpec::categorical("income", AttributeRole::Insensitive).target_one_of([">50K"]),
        ]
    }

    #[test]
    fn json_round_trip() {
        let schema = AttributeSchema::new(base()).unwrap();
        let back = AttributeSchema::from_json(&schema.to_json()).unwrap();
        assert_eq!(schema, back);
    }

    #[test]
    fn parses_documented_shape() {
        let text = r#"[
            {"name": "G3", "kind": "numeric", "role": "insensitive", "target": true, "pass_threshold": 10},
            {"name": "sex", "kind": "categorical", "role": "quasi_identifying"}
        ]"#;
        let schema = AttributeSchema::from_json(text).unwrap();
        assert_eq!(schema.target_rule(), TargetRule::AtLeast(10.0));
        assert_eq!(schema.quasi_identifiers().count(), 1);
    }

    #[test]
    fn rejects_bad_schemas() {
        let mut dup = base();
        dup.push(ColumnSpec::numeric("age", AttributeRole::Sensitive));
        assert!(matches!(AttributeSchema::new(dup), Err(DataError::Schema(_))));

        let no_target = vec![ColumnSpec::numeric("age", AttributeRole::QuasiIdentifying)];
        assert!(matches!(AttributeSchema::new(no_target), Err(DataError::MissingTarget)));

        let sensitive_target =
            vec![ColumnSpec::numeric("g", AttributeRole::Sensitive).target_at_least(10.0)];
        assert!(AttributeSchema::new(sensitive_target).is_err());

        let mut two = base();
        two.push(ColumnSpec::numeric("g", AttributeRole::Insensitive).target_at_least(1.0));
        assert!(AttributeSchema::new(two).is_err());
    }

    #[test]
    fn target_rules() {
        let census = TargetRule::OneOf(vec![">50K".into()]);
        assert_eq!(census.categorical(">50K"), 1);
        assert_eq!(census.categorical("<=50K"), 0);
        let student = TargetRule::AtLeast(10.0);
        assert_eq!(student.numeric(10.0), 1);
        assert_eq!(student.numeric(9.0), 0);
    }
}
