//! Probe targets: a tab-separated table with an `id` column followed by one
//! column per feature.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::acoustics::AcousticFeatures;
use crate::error::{Error, Result};
use crate::lingfeats::LinguisticFeatures;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
    rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(columns: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &columns {
            if c == "id" || c.is_empty() || c.contains(['\t', '\n']) || !seen.insert(c) {
                return Err(Error::validation(format!("bad or duplicate column name {c:?}")));
            }
        }
        Ok(FeatureTable {
            columns,
            ..Default::default()
        })
    }

    pub fn push(&mut self, id: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::Shape {
                expected: self.columns.len(),
                actual: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite value {v} for {id:?}")));
        }
        if self.index.insert(id.to_string(), self.ids.len()).is_some() {
            return Err(Error::validation(format!("duplicate row id {id:?}")));
        }
        self.ids.push(id.to_string());
        self.rows.push(values);
        Ok(())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.index.get(id).map(|&r| self.rows[r][c])
    }

    /// Column values for `ids`, in that order. Every id must be present.
    pub fn column_for(&self, column: &str, ids: &[String]) -> Result<Vec<f64>> {
        let c = self
            .columns
            .iter()
            .position(|x| x == column)
            .ok_or_else(|| Error::validation(format!("no column {column:?} in feature table")))?;
        ids.iter()
            .map(|id| {
                self.index
                    .get(id)
                    .map(|&r| self.rows[r][c])
                    .ok_or_else(|| Error::validation(format!("feature table has no row for {id:?}")))
            })
            .collect()
    }

    /// Column-wise join on id; both tables must cover the same ids.
    pub fn merge(&self, other: &FeatureTable) -> Result<FeatureTable> {
        let mut cols = self.columns.clone();
        cols.extend(other.columns.iter().cloned());
        let mut out = FeatureTable::new(cols)?;
        if self.len() != other.len() {
            return Err(Error::validation(format!(
                "cannot merge tables with {} and {} rows",
                self.len(),
                other.len()
            )));
        }
        for (id, row) in self.ids.iter().zip(&self.rows) {
            let r = other
                .index
                .get(id)
                .ok_or_else(|| Error::validation(format!("row {id:?} missing from second table")))?;
            let mut vals = row.clone();
            vals.extend(&other.rows[*r]);
            out.push(id, vals)?;
        }
        Ok(out)
    }

    pub fn from_acoustic(rows: &[(String, AcousticFeatures)]) -> Result<Self> {
        let mut t = FeatureTable::new(AcousticFeatures::COLUMNS.iter().map(|s| s.to_string()).collect())?;
        for (id, f) in rows {
            t.push(id, f.values().to_vec())?;
        }
        Ok(t)
    }

    pub fn from_linguistic(rows: &[(String, LinguisticFeatures)]) -> Result<Self> {
        let mut t = FeatureTable::new(LinguisticFeatures::COLUMNS.iter().map(|s| s.to_string()).collect())?;
        for (id, f) in rows {
            t.push(id, f.values().to_vec())?;
        }
        Ok(t)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id");
        for c in &self.columns {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.rows) {
            out.push_str(id);
            for v in row {
                out.push('\t');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty feature table".into(),
        })?;
        let mut head = header.split('\t');
        if head.next() != Some("id") {
            return Err(Error::Parse {
                line: 1,
                message: "first header column must be `id`".into(),
            });
        }
        let mut t = FeatureTable::new(head.map(str::to_string).collect())?;
        for (i, line) in lines {
            let line_no = i + 1;
            let mut cells = line.split('\t');
            let id = cells.next().unwrap_or_default();
            let vals: std::result::Result<Vec<f64>, _> = cells.map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            t.push(id, vals).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}
