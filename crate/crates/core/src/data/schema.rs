use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name prefix reserved for injected random sanity-check features.
pub const RANDOM_FEATURE_PREFIX: &str = "__rnd_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    /// Label-encoded nominal column holding integers in `0..cardinality`.
    Categorical,
    /// One indicator column of a one-hot encoded group.
    OneHotMember,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub cardinality: Option<usize>,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Numeric,
            parent: None,
            cardinality: None,
        }
    }

    pub fn categorical(name: impl Into<String>, cardinality: usize) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical,
            parent: None,
            cardinality: Some(cardinality),
        }
    }

    pub fn one_hot(name: impl Into<String>, parent: impl Into<String>, cardinality: usize) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::OneHotMember,
            parent: Some(parent.into()),
            cardinality: Some(cardinality),
        }
    }
}

/// A contiguous block of one-hot indicator columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl OneHotGroup {
    pub fn columns(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// A selectable feature unit: a single column, or a whole one-hot group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Column(usize),
    Group(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
    groups: Vec<OneHotGroup>,
    group_of: Vec<Option<usize>>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
            match c.kind {
                ColumnKind::Numeric => {
                    if c.parent.is_some() {
                        return Err(Error::Schema(format!("numeric column `{}` has a parent", c.name)));
                    }
                }
                ColumnKind::Categorical => match c.cardinality {
                    Some(k) if k >= 1 => {}
                    _ => {
                        return Err(Error::Schema(format!(
                            "categorical column `{}` needs a positive cardinality",
                            c.name
                        )))
                    }
                },
                ColumnKind::OneHotMember => {
                    if c.parent.as_deref().is_none_or(str::is_empty) {
                        return Err(Error::Schema(format!(
                            "one-hot column `{}` has no parent",
                            c.name
                        )));
                    }
                }
            }
        }

        let mut groups: Vec<OneHotGroup> = Vec::new();
        let mut group_of = vec![None; columns.len()];
        let mut closed: HashSet<&str> = HashSet::new();
        let mut j = 0;
        while j < columns.len() {
            let Some(parent) = columns[j].parent.as_deref().filter(|_| columns[j].kind == ColumnKind::OneHotMember) else {
                j += 1;
                continue;
            };
            if !closed.insert(parent) {
                return Err(Error::Schema(format!("one-hot group `{parent}` is not contiguous")));
            }
            let start = j;
            while j < columns.len()
                && columns[j].kind == ColumnKind::OneHotMember
                && columns[j].parent.as_deref() == Some(parent)
            {
                j += 1;
            }
            let len = j - start;
            for c in &columns[start..j] {
                if let Some(k) = c.cardinality {
                    if k != len {
                        return Err(Error::Schema(format!(
                            "one-hot group `{parent}` declares cardinality {k} but has {len} members"
                        )));
                    }
                }
            }
            let g = groups.len();
            group_of[start..j].iter_mut().for_each(|s| *s = Some(g));
            groups.push(OneHotGroup {
                name: parent.to_string(),
                start,
                len,
            });
        }
        Ok(FeatureSchema {
            columns,
            groups,
            group_of,
        })
    }

    /// All-numeric schema with the given names.
    pub fn numeric<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::new(names.into_iter().map(ColumnSpec::numeric).collect())
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn groups(&self) -> &[OneHotGroup] {
        &self.groups
    }

    pub fn group_of(&self, column: usize) -> Option<usize> {
        self.group_of[column]
    }

    pub fn kind(&self, column: usize) -> ColumnKind {
        self.columns[column].kind
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn is_random_feature(&self, column: usize) -> bool {
        self.columns[column].name.starts_with(RANDOM_FEATURE_PREFIX)
    }

    pub fn random_features(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.is_random_feature(j)).collect()
    }

    /// Selectable units in column order. With `aggregate`, each one-hot group
    /// is a single unit placed at the position of its first member.
    pub fn units(&self, aggregate: bool) -> Vec<Unit> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            match (aggregate, self.group_of[j]) {
                (true, Some(g)) => {
                    if self.groups[g].start == j {
                        out.push(Unit::Group(g));
                    }
                }
                _ => out.push(Unit::Column(j)),
            }
        }
        out
    }

    pub fn unit_columns(&self, unit: Unit) -> std::ops::Range<usize> {
        match unit {
            Unit::Column(j) => j..j + 1,
            Unit::Group(g) => self.groups[g].columns(),
        }
    }

    /// Appends numeric columns, returning the extended schema.
    pub fn with_numeric_columns(&self, names: &[String]) -> Result<Self> {
        let mut cols = self.columns.clone();
        cols.extend(names.iter().cloned().map(ColumnSpec::numeric));
        Self::new(cols)
    }
}

/// JSON sidecar stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub columns: Vec<ColumnSpec>,
    pub label: String,
}
