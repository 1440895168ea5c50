//! Common record shape for check results and constants manifests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One diagnostic: `value` is the measured quantity, `slack` the normalized
/// excess over the bound (0 when the bound holds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub region: String,
    pub value: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premise: Option<bool>,
    #[serde(default)]
    pub vacuous: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
}

impl CheckRecord {
    /// Record for `lhs <= rhs`, with slack `max(0, lhs - rhs) / max(|rhs|, floor)`.
    pub fn inequality(name: &str, region: &str, lhs: f64, rhs: f64, tolerance: f64, floor: f64) -> Self {
        let slack = (lhs - rhs).max(0.0) / rhs.abs().max(floor);
        let mut details = BTreeMap::new();
        details.insert("lhs".into(), lhs);
        details.insert("rhs".into(), rhs);
        CheckRecord {
            name: name.into(),
            region: region.into(),
            value: lhs,
            slack,
            tolerance,
            pass: slack <= tolerance,
            premise: None,
            vacuous: false,
            details,
        }
    }

    /// Record for `|value| <= tolerance`.
    pub fn bounded(name: &str, region: &str, value: f64, tolerance: f64) -> Self {
        CheckRecord {
            name: name.into(),
            region: region.into(),
            value,
            slack: (value.abs() - tolerance).max(0.0),
            tolerance,
            pass: value.abs() <= tolerance,
            premise: None,
            vacuous: false,
            details: BTreeMap::new(),
        }
    }

    pub fn vacuous(name: &str, region: &str) -> Self {
        CheckRecord {
            name: name.into(),
            region: region.into(),
            value: 0.0,
            slack: 0.0,
            tolerance: 0.0,
            pass: true,
            premise: Some(false),
            vacuous: true,
            details: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.details.insert(key.into(), v);
        self
    }

    pub fn with_premise(mut self, premise: bool) -> Self {
        self.premise = Some(premise);
        self
    }
}

/// One fitted constant with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEntry {
    pub potential: String,
    pub family: String,
    pub name: String,
    pub value: f64,
    pub fit_date: String,
    pub eps_range: [f64; 2],
    pub h_range: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsManifest {
    pub constants: Vec<ConstantEntry>,
}

impl ConstantsManifest {
    /// Inserts or replaces the entry keyed by `(potential, family, name)`.
    pub fn upsert(&mut self, e: ConstantEntry) {
        if let Some(old) =
            self.constants.iter_mut().find(|c| c.potential == e.potential && c.family == e.family && c.name == e.name)
        {
            *old = e;
        } else {
            self.constants.push(e);
        }
        self.constants.sort_by(|a, b| (&a.potential, &a.family, &a.name).cmp(&(&b.potential, &b.family, &b.name)));
    }

    pub fn get(&self, potential: &str, name: &str) -> Option<f64> {
        self.constants.iter().find(|c| c.potential == potential && c.name == name).map(|c| c.value)
    }

    /// Entry for the given family, falling back to any family of the potential.
    pub fn get_for(&self, potential: &str, family: &str, name: &str) -> Option<f64> {
        self.constants
            .iter()
            .find(|c| c.potential == potential && c.family == family && c.name == name)
            .map(|c| c.value)
            .or_else(|| self.get(potential, name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inequality_slack() {
        let r = CheckRecord::inequality("x", "d", 1.1, 1.0, 0.05, 1e-12);
        assert!((r.slack - 0.1).abs() < 1e-12);
        assert!(!r.pass);
        let r = CheckRecord::inequality("x", "d", 0.5, 1.0, 0.0, 1e-12);
        assert_eq!(r.slack, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn manifest_upsert_replaces() {
        let mut m = ConstantsManifest::default();
        let e = ConstantEntry {
            potential: "p".into(),
            family: "f".into(),
            name: "eta0".into(),
            value: 1.0,
            fit_date: "d".into(),
            eps_range: [0.1, 0.2],
            h_range: [0.01, 0.02],
        };
        m.upsert(e.clone());
        m.upsert(ConstantEntry { value: 2.0, ..e });
        assert_eq!(m.constants.len(), 1);
        assert_eq!(m.get("p", "eta0"), Some(2.0));
    }
}
