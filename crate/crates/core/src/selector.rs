//! Reduces per-task influence scores to one score per training sample and
//! selects the top fraction.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datastore::hex_digest;
use crate::error::{Error, IoContext, Result};
use crate::influence::{Provenance, ScoreTable};

pub use crate::influence::ValAggregation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TaskReduction {
    #[default]
    Max,
    Mean,
}

impl FromStr for TaskReduction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(TaskReduction::Max),
            "mean" => Ok(TaskReduction::Mean),
            other => Err(Error::Argument(format!("unknown task reduction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Equal scores are ordered by ascending sample id.
    #[default]
    BySampleId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub fraction: f64,
    pub val_aggregation: ValAggregation,
    pub task_reduction: TaskReduction,
    pub tie_break: TieBreak,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            fraction: 0.05,
            val_aggregation: ValAggregation::Mean,
            task_reduction: TaskReduction::Max,
            tie_break: TieBreak::BySampleId,
        }
    }
}

impl SelectionConfig {
    pub fn with_fraction(fraction: f64) -> Result<Self> {
        let c = Self {
            fraction,
            ..Self::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction(self.fraction)
    }
}

fn check_fraction(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("selection fraction must be in (0, 1], got {p}")))
    }
}

/// `ceil(p * n)`, treating products within rounding error of an integer as
/// that integer.
pub fn selection_count(n: usize, p: f64) -> Result<usize> {
    check_fraction(p)?;
    if n == 0 {
        return Ok(0);
    }
    let x = p * n as f64;
    let nearest = x.round();
    let count = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok((count as usize).clamp(1, n))
}

/// Final per-sample scores: `task_reduction` across the table's task columns.
pub fn aggregate(table: &ScoreTable, config: &SelectionConfig) -> Result<Vec<(String, f64)>> {
    if table.rows() == 0 || table.cols() == 0 {
        return Err(Error::Argument("score table is empty".into()));
    }
    Ok(table
        .train_ids()
        .iter()
        .enumerate()
        .map(|(r, id)| {
            let row = table.row(r);
            let score = match config.task_reduction {
                TaskReduction::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                TaskReduction::Mean => row.iter().sum::<f64>() / row.len() as f64,
            };
            (id.clone(), score)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub rank: usize,
    pub sample_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<Selected>,
    pub selected_count: usize,
    pub universe_size: usize,
    /// SHA-256 over the sorted universe of sample ids.
    pub universe_digest: String,
    pub config: SelectionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn universe_digest<'a>(ids: impl Iterator<Item = &'a str>) -> String {
    let mut sorted: Vec<&str> = ids.collect();
    sorted.sort_unstable();
    let mut buf = Vec::new();
    for id in sorted {
        buf.extend_from_slice(&(id.len() as u64).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
    }
    hex_digest(&buf)
}

/// Orders samples by descending score, ties by ascending id.
pub fn rank(scores: &[(String, f64)], tie_break: TieBreak) -> Result<Vec<usize>> {
    if let Some((id, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::Data(format!("non-finite score {s} for sample {id:?}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let by_score = scores[b].1.total_cmp(&scores[a].1);
        match (by_score, tie_break) {
            (Ordering::Equal, TieBreak::BySampleId) => scores[a].0.cmp(&scores[b].0),
            (o, _) => o,
        }
    });
    Ok(order)
}

/// The top `ceil(p * n)` samples, highest score first.
pub fn select_top(final_scores: &[(String, f64)], p: f64, tie_break: TieBreak) -> Result<SelectionResult> {
    let config = SelectionConfig {
        fraction: p,
        tie_break,
        ..SelectionConfig::default()
    };
    select_with(final_scores, &config, None)
}

pub fn select_with(
    final_scores: &[(String, f64)],
    config: &SelectionConfig,
    provenance: Option<Provenance>,
) -> Result<SelectionResult> {
    config.validate()?;
    let mut seen = HashSet::with_capacity(final_scores.len());
    if let Some((dup, _)) = final_scores.iter().find(|(id, _)| !seen.insert(id.as_str())) {
        return Err(Error::Data(format!("duplicate sample id {dup:?} in scores")));
    }
    let count = selection_count(final_scores.len(), config.fraction)?;
    let order = rank(final_scores, config.tie_break)?;
    let selected = order[..count]
        .iter()
        .enumerate()
        .map(|(i, &idx)| Selected {
            rank: i + 1,
            sample_id: final_scores[idx].0.clone(),
            score: final_scores[idx].1,
        })
        .collect();
    Ok(SelectionResult {
        selected,
        selected_count: count,
        universe_size: final_scores.len(),
        universe_digest: universe_digest(final_scores.iter().map(|(id, _)| id.as_str())),
        config: *config,
        provenance,
    })
}

/// Aggregates a score table and selects from it in one step.
pub fn select_from_table(table: &ScoreTable, config: &SelectionConfig) -> Result<SelectionResult> {
    let scores = aggregate(table, config)?;
    select_with(&scores, config, table.provenance.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlap {
    /// `|A ∩ B| / |A|`.
    pub fraction: f64,
    pub jaccard: f64,
    pub intersection: usize,
}

pub fn selection_overlap(a: &SelectionResult, b: &SelectionResult) -> Result<Overlap> {
    if a.universe_size != b.universe_size || a.universe_digest != b.universe_digest {
        return Err(Error::Argument(
            "selections are drawn from different sample universes".into(),
        ));
    }
    let ids: HashSet<&str> = a.selected.iter().map(|s| s.sample_id.as_str()).collect();
    let inter = b.selected.iter().filter(|s| ids.contains(s.sample_id.as_str())).count();
    let union = a.selected.len() + b.selected.len() - inter;
    Ok(Overlap {
        fraction: if a.selected.is_empty() {
            0.0
        } else {
            inter as f64 / a.selected.len() as f64
        },
        jaccard: if union == 0 { 0.0 } else { inter as f64 / union as f64 },
        intersection: inter,
    })
}

impl SelectionResult {
    pub fn ids(&self) -> Vec<&str> {
        self.selected.iter().map(|s| s.sample_id.as_str()).collect()
    }

    /// One `{rank, sample_id, score}` JSON object per line.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).at(path)?);
        for s in &self.selected {
            serde_json::to_writer(&mut w, s).map_err(|e| Error::io(path, e.into()))?;
            w.write_all(b"\n").at(path)?;
        }
        w.flush().at(path)
    }

    /// Plain list of selected ids, one per line.
    pub fn write_ids(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).at(path)?);
        for s in &self.selected {
            writeln!(w, "{}", s.sample_id).at(path)?;
        }
        w.flush().at(path)
    }

    /// Config echo and provenance, without the selected rows.
    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            config: &'a SelectionConfig,
            selected_count: usize,
            universe_size: usize,
            universe_digest: &'a str,
            provenance: &'a Option<Provenance>,
        }
        let path = path.as_ref();
        let side = Sidecar {
            config: &self.config,
            selected_count: self.selected_count,
            universe_size: self.universe_size,
            universe_digest: &self.universe_digest,
            provenance: &self.provenance,
        };
        let text = serde_json::to_string_pretty(&side).expect("sidecar serializes");
        std::fs::write(path, text + "\n").at(path)
    }
}
