//! Structured check results: raw tables, scalar values and verdicts.
//!
//! Reports serialize to JSON with sorted keys. Non-finite numbers are
//! written as `null` and read back as NaN.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(serialize_with = "ser_rows", deserialize_with = "de_rows")]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width mismatch in {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    #[serde(serialize_with = "ser_map", deserialize_with = "de_map")]
    pub values: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, bool>,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
    pub sections: Vec<Report>,
}

impl Report {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn value(&mut self, key: impl Into<String>, v: f64) -> &mut Self {
        self.values.insert(key.into(), v);
        self
    }

    pub fn verdict(&mut self, key: impl Into<String>, pass: bool) -> &mut Self {
        self.verdicts.insert(key.into(), pass);
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    pub fn table(&mut self, table: Table) -> &mut Self {
        self.tables.push(table);
        self
    }

    pub fn section(&mut self, report: Report) -> &mut Self {
        self.sections.push(report);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn find_table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn find_section(&self, id: &str) -> Option<&Report> {
        self.sections.iter().find(|s| s.id == id)
    }

    /// All verdicts in this report and its sections hold.
    pub fn passed(&self) -> bool {
        self.verdicts.values().all(|&v| v) && self.sections.iter().all(Report::passed)
    }

    /// Failing verdicts as `section/…/key` paths.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_failures("", &mut out);
        out
    }

    fn collect_failures(&self, prefix: &str, out: &mut Vec<String>) {
        let path = if prefix.is_empty() {
            self.id.clone()
        } else {
            format!("{prefix}/{}", self.id)
        };
        for (k, v) in &self.verdicts {
            if !v {
                out.push(format!("{path}/{k}"));
            }
        }
        for s in &self.sections {
            s.collect_failures(&path, out);
        }
    }

    /// Canonical JSON (sorted keys, compact).
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn to_pretty_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    /// SHA-256 of the canonical JSON.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn ser_rows<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
    let mapped: Vec<Vec<Option<f64>>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| finite_or_none(v)).collect())
        .collect();
    mapped.serialize(s)
}

fn de_rows<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
    let raw: Vec<Vec<Option<f64>>> = Deserialize::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect())
}

fn ser_map<S: Serializer>(map: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
    let mapped: BTreeMap<&String, Option<f64>> = map.iter().map(|(k, &v)| (k, finite_or_none(v))).collect();
    mapped.serialize(s)
}

fn de_map<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
    let raw: BTreeMap<String, Option<f64>> = Deserialize::deserialize(d)?;
    Ok(raw.into_iter().map(|(k, v)| (k, v.unwrap_or(f64::NAN))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passed_aggregates_sections() {
        let mut r = Report::new("root");
        r.verdict("a", true);
        let mut child = Report::new("child");
        child.verdict("b", false);
        r.section(child);
        assert!(!r.passed());
        assert_eq!(r.failures(), vec!["root/child/b".to_string()]);
    }

    #[test]
    fn non_finite_values_survive_json() {
        let mut r = Report::new("x");
        r.value("inf", f64::INFINITY).value("one", 1.0);
        let json = r.to_canonical_json();
        assert!(json.contains("\"inf\":null"));
        let back: Report = serde_json::from_str(&json).unwrap();
        assert!(back.get("inf").unwrap().is_nan());
        assert_eq!(back.get("one"), Some(1.0));
    }

    #[test]
    fn hash_is_stable() {
        let mut r = Report::new("x");
        r.value("b", 2.0).value("a", 1.0);
        let mut t = Table::new("t", &["p", "q"]);
        t.push(vec![0.1, 0.2]);
        r.table(t);
        assert_eq!(r.content_hash(), r.clone().content_hash());
        let json = r.to_canonical_json();
        assert!(json.find("\"a\"").unwrap() < json.find("\"b\"").unwrap());
    }
}
