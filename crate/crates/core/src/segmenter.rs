//! Grid CRF segmentation module: noisy unaries from a scene, MAP inference
//! (exact when unary-only, ICM under a Potts prior), DivMBest diverse
//! hypotheses, and the class-averaged Jaccard index.

use std::io::{BufRead, Write};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CategoryId, LabelGrid, BACKGROUND};
use crate::scenegen::CaptionedScene;

#[derive(Debug, Error)]
pub enum SegError {
    #[error("grids have different dimensions: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("CRF is invalid: {0}")]
    BadCrf(String),
}

/// Pairwise CRF on the 4-neighborhood with Potts smoothing. Unary entries
/// are costs (lower is better), indexed `(row * w + col) * k + label`.
#[derive(Debug, Clone)]
pub struct GridCRF {
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub unary: Vec<f64>,
    pub pairwise_weight: f64,
}

impl GridCRF {
    pub fn validate(&self) -> Result<(), SegError> {
        if self.k == 0 || self.unary.len() != self.h * self.w * self.k {
            return Err(SegError::BadCrf("unary table size mismatch".into()));
        }
        if !self.unary.iter().all(|c| c.is_finite()) {
            return Err(SegError::BadCrf("non-finite unary cost".into()));
        }
        if !(self.pairwise_weight >= 0.0) {
            return Err(SegError::BadCrf("pairwise weight must be >= 0".into()));
        }
        Ok(())
    }

    fn cost(&self, row: usize, col: usize, label: usize) -> f64 {
        self.unary[(row * self.w + col) * self.k + label]
    }

    /// Total energy: unary sum plus Potts penalty per differing 4-neighbor
    /// pair (right and down edges each counted once).
    pub fn energy(&self, labels: &LabelGrid) -> f64 {
        let mut e = 0.0;
        for (r, c, id) in labels.iter() {
            e += self.cost(r, c, id as usize);
            if c + 1 < self.w && labels.get(r, c + 1) != id {
                e += self.pairwise_weight;
            }
            if r + 1 < self.h && labels.get(r + 1, c) != id {
                e += self.pairwise_weight;
            }
        }
        e
    }
}

/// One diverse segmentation; `score` is the negative energy under the
/// original (unaugmented) CRF, rank 1 is the MAP estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationHypothesis {
    pub labels: LabelGrid,
    pub score: f64,
    pub rank: usize,
}

/// Unary costs from a scene: 0 for the true label, 1 otherwise; with
/// probability `noise` a cell gets one uniformly chosen wrong label whose
/// cost is dropped to -1 (below the true label's).
pub fn unary_from_scene(scene: &CaptionedScene, noise: f64, seed: u64, pairwise_weight: f64) -> GridCRF {
    let k = scene
        .gt_labels
        .cells()
        .iter()
        .copied()
        .max()
        .unwrap_or(BACKGROUND)
        .max(
            scene.objects.iter().map(|o| o.category).max().unwrap_or(BACKGROUND),
        ) as usize
        + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unary = Vec::with_capacity(scene.h * scene.w * k);
    for (_, _, true_label) in scene.gt_labels.iter() {
        let base = unary.len();
        for label in 0..k {
            unary.push(if label == true_label as usize { 0.0 } else { 1.0 });
        }
        if noise > 0.0 && rng.gen_bool(noise) && k > 1 {
            let mut wrong = rng.gen_range(0..k - 1);
            if wrong >= true_label as usize {
                wrong += 1;
            }
            unary[base + wrong] = -1.0;
        }
    }
    GridCRF { h: scene.h, w: scene.w, k, unary, pairwise_weight }
}

/// MAP estimate. Exact per-cell argmin when the pairwise weight is zero,
/// otherwise ICM from the unary argmin with a fixed row-major sweep order
/// until no cell changes or 50 sweeps. Label ties go to the smaller id.
pub fn map_inference(crf: &GridCRF) -> SegmentationHypothesis {
    map_with_unary(crf, &crf.unary, 1)
}

fn map_with_unary(crf: &GridCRF, unary: &[f64], rank: usize) -> SegmentationHypothesis {
    let (h, w, k) = (crf.h, crf.w, crf.k);
    let mut labels = LabelGrid::new(h, w);
    for r in 0..h {
        for c in 0..w {
            let base = (r * w + c) * k;
            let mut best = 0usize;
            for label in 1..k {
                if unary[base + label] < unary[base + best] {
                    best = label;
                }
            }
            labels.set(r, c, best as CategoryId);
        }
    }

    if crf.pairwise_weight > 0.0 {
        let weight = crf.pairwise_weight;
        for _sweep in 0..50 {
            let mut changed = false;
            for r in 0..h {
                for c in 0..w {
                    let base = (r * w + c) * k;
                    let mut best = labels.get(r, c) as usize;
                    let mut best_cost = f64::INFINITY;
                    for label in 0..k {
                        let mut cost = unary[base + label];
                        if r > 0 && labels.get(r - 1, c) as usize != label {
                            cost += weight;
                        }
                        if r + 1 < h && labels.get(r + 1, c) as usize != label {
                            cost += weight;
                        }
                        if c > 0 && labels.get(r, c - 1) as usize != label {
                            cost += weight;
                        }
                        if c + 1 < w && labels.get(r, c + 1) as usize != label {
                            cost += weight;
                        }
                        if cost < best_cost {
                            best_cost = cost;
                            best = label;
                        }
                    }
                    if best != labels.get(r, c) as usize {
                        labels.set(r, c, best as CategoryId);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    let score = -crf.energy(&labels);
    SegmentationHypothesis { labels, score, rank }
}

/// Diverse M-best: solution m minimizes the energy augmented by +lambda per
/// cell that agrees with any previous solution. Reported scores are always
/// negative energies under the original CRF; ranks run 1..=M.
pub fn divmbest(crf: &GridCRF, m: usize, lambda: f64) -> Vec<SegmentationHypothesis> {
    let mut augmented = crf.unary.clone();
    let mut out: Vec<SegmentationHypothesis> = Vec::with_capacity(m);
    for rank in 1..=m {
        let hyp = if rank == 1 {
            map_inference(crf)
        } else {
            map_with_unary(crf, &augmented, rank)
        };
        for (r, c, id) in hyp.labels.iter() {
            augmented[(r * crf.w + c) * crf.k + id as usize] += lambda;
        }
        out.push(hyp);
    }
    out
}

/// Image-level class-averaged Jaccard index over the non-background
/// categories present in either grid; 1.0 when no such category exists.
pub fn jaccard(pred: &LabelGrid, gt: &LabelGrid) -> Result<f64, SegError> {
    if pred.h() != gt.h() || pred.w() != gt.w() {
        return Err(SegError::DimensionMismatch(pred.h(), pred.w(), gt.h(), gt.w()));
    }
    let max_label = pred
        .cells()
        .iter()
        .chain(gt.cells())
        .copied()
        .max()
        .unwrap_or(BACKGROUND) as usize;
    let mut inter = vec![0usize; max_label + 1];
    let mut union = vec![0usize; max_label + 1];
    for (p, g) in pred.cells().iter().zip(gt.cells()) {
        if p == g {
            inter[*p as usize] += 1;
            union[*p as usize] += 1;
        } else {
            union[*p as usize] += 1;
            union[*g as usize] += 1;
        }
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for cat in 1..=max_label {
        if union[cat] > 0 {
            sum += inter[cat] as f64 / union[cat] as f64;
            n += 1;
        }
    }
    Ok(if n == 0 { 1.0 } else { sum / n as f64 })
}

/// One line of seg_hyps.jsonl.
#[derive(Debug, Serialize, Deserialize)]
pub struct SegHypsRecord {
    pub scene_id: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub lambda: f64,
    pub hypotheses: Vec<SegHypRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegHypRecord {
    pub rank: usize,
    pub score: f64,
    pub labels: Vec<u16>,
}

impl SegHypsRecord {
    pub fn from_hypotheses(scene_id: &str, lambda: f64, hyps: &[SegmentationHypothesis]) -> Self {
        SegHypsRecord {
            scene_id: scene_id.to_string(),
            m: hyps.len(),
            lambda,
            hypotheses: hyps
                .iter()
                .map(|h| SegHypRecord {
                    rank: h.rank,
                    score: h.score,
                    labels: h.labels.cells().to_vec(),
                })
                .collect(),
        }
    }

    pub fn hypotheses(&self, h: usize, w: usize) -> anyhow::Result<Vec<SegmentationHypothesis>> {
        self.hypotheses
            .iter()
            .map(|rec| {
                let labels = LabelGrid::from_cells(h, w, rec.labels.clone()).ok_or_else(|| {
                    anyhow::anyhow!("scene {}: labels length != H*W", self.scene_id)
                })?;
                Ok(SegmentationHypothesis { labels, score: rec.score, rank: rec.rank })
            })
            .collect()
    }
}

pub fn write_seg_hyps_jsonl(out: &mut impl Write, records: &[SegHypsRecord]) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_seg_hyps_jsonl(input: impl BufRead) -> anyhow::Result<Vec<SegHypsRecord>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| anyhow::anyhow!("seg_hyps.jsonl line {}: {e}", idx + 1))?,
        );
    }
    Ok(out)
}
