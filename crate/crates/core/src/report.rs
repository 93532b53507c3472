//! Execution coverage report.

use serde::{Deserialize, Serialize};

use crate::covdb::HitCountDb;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    #[serde(rename = "hitCount")]
    pub hit_count: u64,
}

/// One entry per goal registered in the database, ordered by UID.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverageReport {
    pub entries: Vec<ReportEntry>,
}

impl CoverageReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<CoverageReport> {
        serde_json::from_str(text)
    }

    pub fn counts(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.hit_count).collect()
    }
}

pub fn generate_report(db: &HitCountDb) -> CoverageReport {
    CoverageReport {
        entries: db
            .meta
            .iter()
            .map(|(uid, m)| ReportEntry { name: m.name.clone(), hit_count: db.count(*uid) })
            .collect(),
    }
}

/// Names with a zero hit count, in report order.
pub fn uncovered(report: &CoverageReport) -> Vec<String> {
    report.entries.iter().filter(|e| e.hit_count == 0).map(|e| e.name.clone()).collect()
}
