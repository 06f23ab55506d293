use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::TimingRecord;

/// Mean seconds per sentence for one annotator under one approach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub annotator_id: String,
    pub approach_tag: String,
    pub sentences: usize,
    pub mean_seconds: f64,
}

impl SpeedRow {
    /// The mean rounded to one decimal, as shown in reports.
    pub fn display_mean(&self) -> String {
        format!("{:.1}", self.mean_seconds)
    }
}

impl fmt::Display for SpeedRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<16} {:<16} {:>6} {:>8}",
            self.annotator_id,
            self.approach_tag,
            self.sentences,
            self.display_mean()
        )
    }
}

/// Groups records by (annotator, approach) and averages them, ordered by key.
pub fn speed_report(records: &[TimingRecord]) -> Vec<SpeedRow> {
    let mut groups: BTreeMap<(&str, &str), (usize, f64)> = BTreeMap::new();
    for r in records {
        let g = groups
            .entry((r.annotator_id.as_str(), r.approach_tag.as_str()))
            .or_default();
        g.0 += 1;
        g.1 += r.elapsed_seconds;
    }
    groups
        .into_iter()
        .map(|((annotator, approach), (n, total))| SpeedRow {
            annotator_id: annotator.to_string(),
            approach_tag: approach.to_string(),
            sentences: n,
            mean_seconds: total / n as f64,
        })
        .collect()
}
