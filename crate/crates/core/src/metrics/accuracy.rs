use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::analysis::MaxNReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesComparison {
    pub species: String,
    pub predicted: u32,
    pub truth: u32,
}

/// Per-video predicted vs. true MaxN for each species.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaxNComparison {
    pub videos: BTreeMap<String, Vec<SpeciesComparison>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct TruthRow {
    pub video_id: String,
    pub species: String,
    pub maxn: u32,
}

pub const TRUTH_MAXN_HEADER: [&str; 3] = ["video_id", "species", "maxn"];

pub fn read_truth_maxn<R: Read>(reader: R, source: &str) -> Result<Vec<TruthRow>> {
    let err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.iter().ne(TRUTH_MAXN_HEADER.iter().copied()) {
        return Err(err(1, format!("expected header {}", TRUTH_MAXN_HEADER.join(","))));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e: csv::Error| err(e.position().map_or(0, |p| p.line()), e.to_string())))
        .collect()
}

impl MaxNComparison {
    /// Pairs predictions with truth over the union of species seen on
    /// either side; a species missing from one side counts as 0 there.
    pub fn from_reports(predicted: &MaxNReport, truth: &[TruthRow]) -> Self {
        let mut pairs: BTreeMap<String, BTreeMap<String, (u32, u32)>> = BTreeMap::new();
        for r in &predicted.rows {
            pairs
                .entry(r.video_id.clone())
                .or_default()
                .entry(r.species.clone())
                .or_default()
                .0 = r.maxn;
        }
        for r in truth {
            pairs
                .entry(r.video_id.clone())
                .or_default()
                .entry(r.species.clone())
                .or_default()
                .1 = r.maxn;
        }
        MaxNComparison {
            videos: pairs
                .into_iter()
                .map(|(v, species)| {
                    let list = species
                        .into_iter()
                        .map(|(species, (predicted, truth))| SpeciesComparison {
                            species,
                            predicted,
                            truth,
                        })
                        .collect();
                    (v, list)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoAccuracy {
    pub video_id: String,
    pub correct: usize,
    pub incorrect: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxNAccuracy {
    pub per_video: Vec<VideoAccuracy>,
    pub mean: Option<f64>,
    /// Sample (n - 1) standard deviation; needs at least two videos.
    pub sd: Option<f64>,
    pub warnings: Vec<String>,
}

/// Mean and sample standard deviation.
pub fn mean_and_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (Some(mean), sd)
}

/// Fraction of species per video whose predicted MaxN equals the true one.
pub fn maxn_accuracy(cmp: &MaxNComparison) -> MaxNAccuracy {
    let mut per_video = Vec::new();
    let mut warnings = Vec::new();
    for (video_id, pairs) in &cmp.videos {
        let species: BTreeSet<&str> = pairs.iter().map(|p| p.species.as_str()).collect();
        if species.len() != pairs.len() {
            warnings.push(format!("{video_id}: duplicate species entries"));
        }
        if pairs.is_empty() {
            warnings.push(format!("{video_id}: no species to score, excluded"));
            continue;
        }
        let correct = pairs.iter().filter(|p| p.predicted == p.truth).count();
        let incorrect = pairs.len() - correct;
        per_video.push(VideoAccuracy {
            video_id: video_id.clone(),
            correct,
            incorrect,
            accuracy: correct as f64 / (correct + incorrect) as f64,
        });
    }
    let accuracies: Vec<f64> = per_video.iter().map(|v| v.accuracy).collect();
    let (mean, sd) = mean_and_sd(&accuracies);
    MaxNAccuracy {
        per_video,
        mean,
        sd,
        warnings,
    }
}
