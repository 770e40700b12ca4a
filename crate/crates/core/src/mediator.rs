//! Scoring, inference and learning over (segmentation, parse) hypothesis
//! pairs: exhaustive pair selection, the slack-rescaled structured SVM
//! trainer, and the INDEP / CASCADE / DOMAIN-ADAPTATION baselines plus the
//! oracle.

use std::io::{BufRead, Write};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{assemble_phi, FeatureLayout, FeatureVector, SimilarityTable};
use crate::parser::{ParseHypothesis, PrepAttachment};
use crate::scenegen::CaptionedScene;
use crate::segmenter::{jaccard, SegmentationHypothesis};

#[derive(Debug, Error)]
pub enum MediatorError {
    #[error("model/feature length mismatch: w has {0} dims, phi has {1}")]
    LengthMismatch(usize, usize),
    #[error("model layout fingerprint {found} does not match {expected}")]
    LayoutMismatch { expected: String, found: String },
    #[error("hypothesis sets must be non-empty")]
    EmptyHypotheses,
    #[error("alpha {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("loss {0} outside [0, 1]")]
    BadLoss(f64),
    #[error("objective became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Metric(#[from] crate::parser::MetricError),
    #[error(transparent)]
    Seg(#[from] crate::segmenter::SegError),
}

/// 1-based indices into the two hypothesis lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    pub i: usize,
    pub j: usize,
}

/// Named feature groups for ablations. The five leaf groups are disjoint
/// and together cover the consistency + presence slices exactly;
/// `all-consistency` is their union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureGroup {
    AllConsistency,
    Euclidean,
    Directional,
    SizeRatio,
    Word2vec,
    CategoryPresence,
}

impl FeatureGroup {
    pub const ALL_NAMED: [FeatureGroup; 5] = [
        FeatureGroup::Euclidean,
        FeatureGroup::Directional,
        FeatureGroup::SizeRatio,
        FeatureGroup::Word2vec,
        FeatureGroup::CategoryPresence,
    ];

    pub fn parse_name(name: &str) -> Option<FeatureGroup> {
        match name {
            "all-consistency" => Some(FeatureGroup::AllConsistency),
            "euclidean" => Some(FeatureGroup::Euclidean),
            "directional" => Some(FeatureGroup::Directional),
            "size-ratio" => Some(FeatureGroup::SizeRatio),
            "word2vec" => Some(FeatureGroup::Word2vec),
            "category-presence" => Some(FeatureGroup::CategoryPresence),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureGroup::AllConsistency => "all-consistency",
            FeatureGroup::Euclidean => "euclidean",
            FeatureGroup::Directional => "directional",
            FeatureGroup::SizeRatio => "size-ratio",
            FeatureGroup::Word2vec => "word2vec",
            FeatureGroup::CategoryPresence => "category-presence",
        }
    }

    /// Dimensions the group occupies under a layout.
    pub fn dims(&self, layout: &FeatureLayout) -> Vec<usize> {
        let block = layout.block_size();
        let mut out = Vec::new();
        match self {
            FeatureGroup::AllConsistency => {
                out.extend(layout.consistency_slice());
                out.extend(layout.presence_slice());
            }
            FeatureGroup::Euclidean => {
                for p in 0..layout.p() {
                    out.push(layout.consistency_block(p).start);
                }
            }
            FeatureGroup::Directional => {
                for p in 0..layout.p() {
                    let start = layout.consistency_block(p).start;
                    out.extend(start + 1..start + 5);
                }
            }
            FeatureGroup::SizeRatio => {
                if block == 8 {
                    for p in 0..layout.p() {
                        out.push(layout.consistency_block(p).start + 5);
                    }
                }
            }
            FeatureGroup::Word2vec => {
                if block == 8 {
                    for p in 0..layout.p() {
                        let start = layout.consistency_block(p).start;
                        out.extend(start + 6..start + 8);
                    }
                }
            }
            FeatureGroup::CategoryPresence => {
                out.extend(layout.presence_slice());
            }
        }
        out
    }
}

/// Which feature dimensions take part in scoring and learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FeatureMask {
    #[default]
    None,
    /// Keep only the parse score features (the domain-adaptation baseline).
    ParseOnly,
    Drop {
        groups: Vec<FeatureGroup>,
    },
}

impl FeatureMask {
    pub fn kept_dims(&self, layout: &FeatureLayout) -> Vec<bool> {
        let mut kept = vec![true; layout.total_dim()];
        match self {
            FeatureMask::None => {}
            FeatureMask::ParseOnly => {
                kept.iter_mut().for_each(|k| *k = false);
                for d in layout.parse_score_slice() {
                    kept[d] = true;
                }
            }
            FeatureMask::Drop { groups } => {
                for g in groups {
                    for d in g.dims(layout) {
                        kept[d] = false;
                    }
                }
            }
        }
        kept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Rescaling {
    /// Hinge multiplied by the pair loss (the constraint's `xi / L` form).
    #[default]
    Slack,
    /// Margin target equal to the pair loss.
    Margin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight on the total hinge; C = 0 degenerates to pure regularization.
    pub c: f64,
    /// Weight of the segmentation loss inside the joint loss.
    pub alpha: f64,
    pub epochs: usize,
    /// Base step size; defaults to 1/C (1.0 when C = 0).
    pub eta0: Option<f64>,
    pub seed: u64,
    pub mask: FeatureMask,
    pub rescaling: Rescaling,
    /// Z-score the module score dims on train-fold statistics.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            alpha: 0.5,
            epochs: 30,
            eta0: None,
            seed: 0,
            mask: FeatureMask::None,
            rescaling: Rescaling::Slack,
            standardize: false,
        }
    }
}

impl TrainConfig {
    fn eta0(&self) -> f64 {
        self.eta0.unwrap_or(if self.c > 0.0 { 1.0 / self.c } else { 1.0 })
    }
}

/// Per-dimension affine transform fitted on train folds (identity outside
/// the module score dims).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    fn apply_into(&self, phi: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(phi.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediatorModel {
    pub w: Vec<f64>,
    pub layout_fingerprint: String,
    pub cfg: TrainConfig,
    pub standardizer: Option<Standardizer>,
    /// Derived from cfg.mask at construction; scoring zeroes dropped dims.
    kept: Option<Vec<bool>>,
}

impl MediatorModel {
    pub fn new(w: Vec<f64>, layout: &FeatureLayout, cfg: TrainConfig) -> Self {
        let kept = match cfg.mask {
            FeatureMask::None => None,
            _ => Some(cfg.mask.kept_dims(layout)),
        };
        MediatorModel {
            w,
            layout_fingerprint: layout.fingerprint(),
            cfg,
            standardizer: None,
            kept,
        }
    }

    /// Masked (and standardized, if fitted) dot product w . phi.
    pub fn pair_score(&self, phi: &FeatureVector) -> Result<f64, MediatorError> {
        if self.w.len() != phi.values.len() {
            return Err(MediatorError::LengthMismatch(self.w.len(), phi.values.len()));
        }
        let mut scratch;
        let values: &[f64] = match &self.standardizer {
            Some(s) => {
                scratch = Vec::with_capacity(phi.values.len());
                s.apply_into(&phi.values, &mut scratch);
                &scratch
            }
            None => &phi.values,
        };
        Ok(dot_masked(&self.w, values, self.kept.as_deref()))
    }
}

fn dot_masked(w: &[f64], phi: &[f64], kept: Option<&[bool]>) -> f64 {
    match kept {
        None => w.iter().zip(phi).map(|(a, b)| a * b).sum(),
        Some(kept) => w
            .iter()
            .zip(phi)
            .zip(kept)
            .filter(|(_, &k)| k)
            .map(|((a, b), _)| a * b)
            .sum(),
    }
}

/// Everything needed to assemble phi for a scene's hypothesis pairs.
pub struct InferContext<'a> {
    pub layout: &'a FeatureLayout,
    pub sims: &'a SimilarityTable,
    pub dims: (usize, usize),
}

/// Parse-side view of a hypothesis: all that pair scoring needs.
#[derive(Debug, Clone)]
pub struct ParseView<'a> {
    pub rank: usize,
    pub log_prob: f64,
    pub attachments: &'a [PrepAttachment],
}

impl<'a> From<&'a ParseHypothesis> for ParseView<'a> {
    fn from(h: &'a ParseHypothesis) -> Self {
        ParseView { rank: h.rank, log_prob: h.score, attachments: &h.attachments }
    }
}

/// Exhaustive argmax over all |Ys| x |Zs| pairs; ties prefer the smallest
/// i, then the smallest j. Exactly one score evaluation per pair.
pub fn infer(
    model: &MediatorModel,
    ys: &[SegmentationHypothesis],
    zs: &[ParseView],
    ctx: &InferContext,
) -> Result<PairIndex, MediatorError> {
    if ys.is_empty() || zs.is_empty() {
        return Err(MediatorError::EmptyHypotheses);
    }
    let mut best = PairIndex { i: 1, j: 1 };
    let mut best_score = f64::NEG_INFINITY;
    for (yi, y) in ys.iter().enumerate() {
        for (zj, z) in zs.iter().enumerate() {
            let phi =
                assemble_phi(y, z.rank, z.log_prob, z.attachments, ctx.layout, ctx.sims, ctx.dims)?;
            let s = model.pair_score(&phi)?;
            if s > best_score {
                best_score = s;
                best = PairIndex { i: yi + 1, j: zj + 1 };
            }
        }
    }
    Ok(best)
}

/// Eq.-style weighted average of the two module losses.
pub fn joint_loss(alpha: f64, seg_loss: f64, parse_loss: f64) -> Result<f64, MediatorError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MediatorError::BadAlpha(alpha));
    }
    for l in [seg_loss, parse_loss] {
        if !(0.0..=1.0).contains(&l) {
            return Err(MediatorError::BadLoss(l));
        }
    }
    Ok(alpha * seg_loss + (1.0 - alpha) * parse_loss)
}

/// Pair minimizing the joint loss; ties prefer the smallest i, then j.
pub fn oracle_on_losses(
    seg_losses: &[f64],
    parse_losses: &[f64],
    alpha: f64,
) -> Result<PairIndex, MediatorError> {
    if seg_losses.is_empty() || parse_losses.is_empty() {
        return Err(MediatorError::EmptyHypotheses);
    }
    let mut best = PairIndex { i: 1, j: 1 };
    let mut best_loss = f64::INFINITY;
    for (i, &sl) in seg_losses.iter().enumerate() {
        for (j, &pl) in parse_losses.iter().enumerate() {
            let l = joint_loss(alpha, sl, pl)?;
            if l < best_loss {
                best_loss = l;
                best = PairIndex { i: i + 1, j: j + 1 };
            }
        }
    }
    Ok(best)
}

/// Oracle against scene ground truth: segmentation loss is 1 - Jaccard,
/// parse loss is 1 - attachment accuracy.
pub fn oracle_pair(
    ys: &[SegmentationHypothesis],
    zs: &[ParseView],
    scene: &CaptionedScene,
    alpha: f64,
) -> Result<PairIndex, MediatorError> {
    if ys.is_empty() || zs.is_empty() {
        return Err(MediatorError::EmptyHypotheses);
    }
    let seg_losses = ys
        .iter()
        .map(|y| Ok(1.0 - jaccard(&y.labels, &scene.gt_labels)?))
        .collect::<Result<Vec<f64>, MediatorError>>()?;
    let parse_losses = zs
        .iter()
        .map(|z| {
            Ok(1.0 - crate::parser::attachment_accuracy(z.attachments, &scene.gt_attachments)?)
        })
        .collect::<Result<Vec<f64>, MediatorError>>()?;
    oracle_on_losses(&seg_losses, &parse_losses, alpha)
}

/// The (y1, z1) tuple.
pub fn predict_indep(n_ys: usize, n_zs: usize) -> Result<PairIndex, MediatorError> {
    if n_ys == 0 || n_zs == 0 {
        return Err(MediatorError::EmptyHypotheses);
    }
    Ok(PairIndex { i: 1, j: 1 })
}

/// Each module reranks its own hypotheses against the other module's
/// single best: i from (Ys, [z1]) under model_y, j from ([y1], Zs) under
/// model_z.
pub fn predict_cascade(
    model_y: &MediatorModel,
    model_z: &MediatorModel,
    ys: &[SegmentationHypothesis],
    zs: &[ParseView],
    ctx: &InferContext,
) -> Result<PairIndex, MediatorError> {
    if ys.is_empty() || zs.is_empty() {
        return Err(MediatorError::EmptyHypotheses);
    }
    let i = infer(model_y, ys, &zs[..1], ctx)?.i;
    let j = infer(model_z, &ys[..1], zs, ctx)?.j;
    Ok(PairIndex { i, j })
}

/// One training instance: the joint losses and features of every pair,
/// row-major over (i, j).
pub struct PairGrid<'a> {
    pub my: usize,
    pub mz: usize,
    pub phis: Vec<&'a FeatureVector>,
    pub losses: Vec<f64>,
}

impl PairGrid<'_> {
    pub fn at(&self, i: usize, j: usize) -> usize {
        i * self.mz + j
    }

    /// 0-based oracle index (argmin loss, smallest (i, j) on ties).
    pub fn oracle_flat(&self) -> usize {
        let mut best = 0usize;
        for idx in 1..self.losses.len() {
            if self.losses[idx] < self.losses[best] {
                best = idx;
            }
        }
        best
    }
}

pub struct TrainOutcome {
    pub model: MediatorModel,
    /// Training objective after each epoch.
    pub objective_trace: Vec<f64>,
}

/// Raw-feature training objective: `1/2 ||w||^2 + C sum_instances
/// sum_{ij != oracle} hinge`, with the hinge slack- or margin-rescaled by
/// the pair loss. Masked dims of a trained w are zero, so this agrees with
/// the internal masked objective for models trained without
/// standardization.
pub fn objective(w: &[f64], data: &[PairGrid], cfg: &TrainConfig) -> f64 {
    objective_inner(w, data, cfg, None, None)
}

fn objective_inner(
    w: &[f64],
    data: &[PairGrid],
    cfg: &TrainConfig,
    kept: Option<&[bool]>,
    standardizer: Option<&Standardizer>,
) -> f64 {
    let reg: f64 = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let mut hinge_total = 0.0;
    let mut scratch = Vec::new();
    let mut phi_of = |phi: &FeatureVector| -> f64 {
        match standardizer {
            Some(s) => {
                s.apply_into(&phi.values, &mut scratch);
                dot_masked(w, &scratch, kept)
            }
            None => dot_masked(w, &phi.values, kept),
        }
    };
    for grid in data {
        let oracle = grid.oracle_flat();
        let s_star = phi_of(grid.phis[oracle]);
        for idx in 0..grid.phis.len() {
            if idx == oracle {
                continue;
            }
            let gap = s_star - phi_of(grid.phis[idx]);
            let loss = grid.losses[idx];
            hinge_total += match cfg.rescaling {
                Rescaling::Slack => loss * (1.0 - gap).max(0.0),
                Rescaling::Margin => (loss - gap).max(0.0),
            };
        }
    }
    reg + cfg.c * hinge_total
}

/// Subgradient descent on the unconstrained slack-rescaled objective.
/// Deterministic: w starts at zero, eta_t = eta0 / (1 + epoch), instances
/// are visited in an order reshuffled each epoch from the seeded stream.
pub fn train(
    data: &[PairGrid],
    layout: &FeatureLayout,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, MediatorError> {
    if data.is_empty() || data.iter().any(|g| g.phis.is_empty()) {
        return Err(MediatorError::EmptyHypotheses);
    }
    let dim = data[0].phis[0].values.len();
    for grid in data {
        for phi in &grid.phis {
            if phi.values.len() != dim {
                return Err(MediatorError::LengthMismatch(dim, phi.values.len()));
            }
        }
        for &l in &grid.losses {
            if !(0.0..=1.0).contains(&l) {
                return Err(MediatorError::BadLoss(l));
            }
        }
    }

    let kept = match cfg.mask {
        FeatureMask::None => None,
        _ => Some(cfg.mask.kept_dims(layout)),
    };
    let standardizer = cfg.standardize.then(|| fit_standardizer(data, layout, dim));

    let oracles: Vec<usize> = data.iter().map(|g| g.oracle_flat()).collect();
    let n = data.len() as f64;
    let eta0 = cfg.eta0();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; dim];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut scratch = Vec::with_capacity(dim);
    let mut phi_star = Vec::with_capacity(dim);
    let mut grad = vec![0.0; dim];

    for epoch in 0..cfg.epochs {
        let eta = eta0 / (1.0 + epoch as f64);
        order.shuffle(&mut rng);
        for &inst in &order {
            let grid = &data[inst];
            let oracle = oracles[inst];
            standardized(&standardizer, grid.phis[oracle], &mut phi_star);
            let s_star = dot_masked(&w, &phi_star, kept.as_deref());

            for g in grad.iter_mut() {
                *g = 0.0;
            }
            let mut any_active = false;
            for idx in 0..grid.phis.len() {
                if idx == oracle {
                    continue;
                }
                standardized(&standardizer, grid.phis[idx], &mut scratch);
                let gap = s_star - dot_masked(&w, &scratch, kept.as_deref());
                let loss = grid.losses[idx];
                let coef = match cfg.rescaling {
                    Rescaling::Slack => {
                        if loss > 0.0 && 1.0 - gap > 0.0 {
                            cfg.c * loss
                        } else {
                            continue;
                        }
                    }
                    Rescaling::Margin => {
                        if loss - gap > 0.0 {
                            cfg.c
                        } else {
                            continue;
                        }
                    }
                };
                any_active = true;
                for d in 0..dim {
                    grad[d] += coef * (scratch[d] - phi_star[d]);
                }
            }
            // Per-instance share of the regularizer.
            for d in 0..dim {
                let g = grad[d] * f64::from(u8::from(any_active)) + w[d] / n;
                let step = eta * g;
                if kept.as_deref().map_or(true, |k| k[d]) {
                    w[d] -= step;
                }
            }
        }
        let obj = objective_inner(&w, data, cfg, kept.as_deref(), standardizer.as_ref());
        if !obj.is_finite() {
            return Err(MediatorError::Diverged { epoch });
        }
        trace.push(obj);
    }

    let model = MediatorModel {
        w,
        layout_fingerprint: layout.fingerprint(),
        cfg: cfg.clone(),
        standardizer,
        kept,
    };
    Ok(TrainOutcome { model, objective_trace: trace })
}

fn standardized(standardizer: &Option<Standardizer>, phi: &FeatureVector, out: &mut Vec<f64>) {
    match standardizer {
        Some(s) => s.apply_into(&phi.values, out),
        None => {
            out.clear();
            out.extend_from_slice(&phi.values);
        }
    }
}

/// Mean/std over all pairs for the module score dims (seg rank/score,
/// parse rank/log-prob); identity elsewhere.
fn fit_standardizer(data: &[PairGrid], layout: &FeatureLayout, dim: usize) -> Standardizer {
    let mut mean = vec![0.0; dim];
    let mut std = vec![1.0; dim];
    let mut score_dims: Vec<usize> = layout.seg_score_slice().collect();
    score_dims.extend(layout.parse_score_slice().take(2));
    let count: usize = data.iter().map(|g| g.phis.len()).sum();
    if count == 0 {
        return Standardizer { mean, std };
    }
    for &d in &score_dims {
        let mut sum = 0.0;
        for grid in data {
            for phi in &grid.phis {
                sum += phi.values[d];
            }
        }
        let m = sum / count as f64;
        let mut var = 0.0;
        for grid in data {
            for phi in &grid.phis {
                var += (phi.values[d] - m).powi(2);
            }
        }
        let s = (var / count as f64).sqrt();
        mean[d] = m;
        std[d] = if s > 1e-12 { s } else { 1.0 };
    }
    Standardizer { mean, std }
}

/// Same trainer with every slice masked except the parse score features;
/// predictions rerank Zs only (y fixed to y1).
pub fn train_domain_adaptation(
    data: &[PairGrid],
    layout: &FeatureLayout,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, MediatorError> {
    let cfg = TrainConfig { mask: FeatureMask::ParseOnly, ..cfg.clone() };
    train(data, layout, &cfg)
}

/// model.json wire form. The layout fingerprint is checked on load.
#[derive(Debug, Serialize, Deserialize)]
struct ModelRecord {
    layout_fingerprint: String,
    w: Vec<f64>,
    cfg: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    standardizer: Option<Standardizer>,
}

pub fn write_model_json(out: &mut impl Write, model: &MediatorModel) -> std::io::Result<()> {
    let rec = ModelRecord {
        layout_fingerprint: model.layout_fingerprint.clone(),
        w: model.w.clone(),
        cfg: model.cfg.clone(),
        standardizer: model.standardizer.clone(),
    };
    serde_json::to_writer_pretty(&mut *out, &rec)?;
    out.write_all(b"\n")
}

pub fn read_model_json(
    input: impl BufRead,
    layout: &FeatureLayout,
) -> Result<MediatorModel, anyhow::Error> {
    let rec: ModelRecord = serde_json::from_reader(input)?;
    let expected = layout.fingerprint();
    if rec.layout_fingerprint != expected {
        return Err(MediatorError::LayoutMismatch {
            expected,
            found: rec.layout_fingerprint,
        }
        .into());
    }
    let kept = match rec.cfg.mask {
        FeatureMask::None => None,
        _ => Some(rec.cfg.mask.kept_dims(layout)),
    };
    Ok(MediatorModel {
        w: rec.w,
        layout_fingerprint: rec.layout_fingerprint,
        cfg: rec.cfg,
        standardizer: rec.standardizer,
        kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::LayoutFlags;

    fn tiny_layout() -> FeatureLayout {
        FeatureLayout {
            prepositions: vec!["on".into(), "with".into()],
            categories: vec!["dog".into(), "couch".into()],
            flags: LayoutFlags { use_category_presence: true, distance_only_consistency: false },
        }
    }

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector { values }
    }

    fn plain_model(w: Vec<f64>) -> MediatorModel {
        MediatorModel::new(w, &tiny_layout(), TrainConfig::default())
    }

    #[test]
    fn pair_score_examples() {
        let zero = plain_model(vec![0.0; 5]);
        assert_eq!(zero.pair_score(&fv(vec![3.0, -1.0, 2.0, 0.5, 9.0])).unwrap(), 0.0);

        let mut w = vec![0.0; 5];
        w[3] = 1.0;
        let unit = plain_model(w);
        assert_eq!(unit.pair_score(&fv(vec![0.0, 0.0, 0.0, 0.25, 0.0])).unwrap(), 0.25);

        // Independent dot-product oracle on random 5-dim vectors.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let phi: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let expected: f64 = (0..5).map(|d| w[d] * phi[d]).sum();
            let model = plain_model(w);
            assert!((model.pair_score(&fv(phi)).unwrap() - expected).abs() < 1e-12);
        }

        let model = plain_model(vec![1.0, 2.0]);
        assert!(matches!(
            model.pair_score(&fv(vec![1.0, 2.0, 3.0])),
            Err(MediatorError::LengthMismatch(2, 3))
        ));
    }

    /// Matrix scoring through a grid of one-hot features.
    fn grid_model(scores: &[&[f64]]) -> (Vec<FeatureVector>, MediatorModel, usize, usize) {
        let my = scores.len();
        let mz = scores[0].len();
        let dim = my * mz;
        let mut phis = Vec::new();
        let mut w = vec![0.0; dim];
        for i in 0..my {
            for j in 0..mz {
                let mut v = vec![0.0; dim];
                v[i * mz + j] = 1.0;
                phis.push(fv(v));
                w[i * mz + j] = scores[i][j];
            }
        }
        (phis, plain_model(w), my, mz)
    }

    fn infer_flat(model: &MediatorModel, phis: &[FeatureVector], my: usize, mz: usize) -> PairIndex {
        let mut best = PairIndex { i: 1, j: 1 };
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..my {
            for j in 0..mz {
                let s = model.pair_score(&phis[i * mz + j]).unwrap();
                if s > best_score {
                    best_score = s;
                    best = PairIndex { i: i + 1, j: j + 1 };
                }
            }
        }
        best
    }

    #[test]
    fn argmax_pair_follows_the_worked_matrix() {
        let (phis, model, my, mz) = grid_model(&[&[1.0, 0.3], &[0.2, 2.5]]);
        assert_eq!(infer_flat(&model, &phis, my, mz), PairIndex { i: 2, j: 2 });

        let (phis, model, my, mz) = grid_model(&[&[0.7, 0.7], &[0.7, 0.7]]);
        assert_eq!(infer_flat(&model, &phis, my, mz), PairIndex { i: 1, j: 1 });
    }

    #[test]
    fn joint_loss_boundaries_and_midpoint() {
        assert_eq!(joint_loss(0.0, 0.9, 0.2).unwrap(), 0.2);
        assert_eq!(joint_loss(1.0, 0.9, 0.2).unwrap(), 0.9);
        assert!((joint_loss(0.5, 0.4, 0.2).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(joint_loss(1.5, 0.0, 0.0), Err(MediatorError::BadAlpha(_))));
        assert!(matches!(joint_loss(0.5, -0.1, 0.0), Err(MediatorError::BadLoss(_))));
    }

    #[test]
    fn oracle_minimizes_joint_loss_with_tie_breaks() {
        assert_eq!(
            oracle_on_losses(&[0.5], &[0.5], 0.5).unwrap(),
            PairIndex { i: 1, j: 1 }
        );
        let o = oracle_on_losses(&[0.4, 0.1, 0.3], &[0.6, 0.2], 0.5).unwrap();
        assert_eq!(o, PairIndex { i: 2, j: 2 });
        // Ties resolve to the smallest indices.
        let o = oracle_on_losses(&[0.2, 0.2], &[0.3, 0.3], 0.5).unwrap();
        assert_eq!(o, PairIndex { i: 1, j: 1 });
        // Brute-force agreement on random losses.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let sl: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let pl: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            let alpha = rng.gen_range(0.0..=1.0);
            let got = oracle_on_losses(&sl, &pl, alpha).unwrap();
            let mut best = (1, 1);
            let mut best_l = f64::INFINITY;
            for i in 0..sl.len() {
                for j in 0..pl.len() {
                    let l = alpha * sl[i] + (1.0 - alpha) * pl[j];
                    if l < best_l {
                        best_l = l;
                        best = (i + 1, j + 1);
                    }
                }
            }
            assert_eq!((got.i, got.j), best);
        }
    }

    #[test]
    fn uniform_score_shift_keeps_the_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let my = rng.gen_range(1..=4);
            let mz = rng.gen_range(1..=4);
            let rows: Vec<Vec<f64>> =
                (0..my).map(|_| (0..mz).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let (phis, model, ..) = grid_model(&refs);
            let base = infer_flat(&model, &phis, my, mz);
            let shift = rng.gen_range(0.1..5.0);
            let shifted_rows: Vec<Vec<f64>> =
                rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
            let refs: Vec<&[f64]> = shifted_rows.iter().map(|r| r.as_slice()).collect();
            let (phis, model, ..) = grid_model(&refs);
            assert_eq!(infer_flat(&model, &phis, my, mz), base);
        }
    }

    #[test]
    fn hand_computed_hinge_term() {
        // Single instance, two pairs: oracle phi* = [0.5], other phi = [0.2],
        // L = 0.5, w = [1]: slack-rescaled hinge = 0.5 * max(0, 1 - 0.3).
        let storage = vec![fv(vec![0.5]), fv(vec![0.2])];
        let grid = PairGrid {
            my: 1,
            mz: 2,
            phis: storage.iter().collect(),
            losses: vec![0.0, 0.5],
        };
        let cfg = TrainConfig { c: 1.0, ..TrainConfig::default() };
        let obj = objective(&[1.0], &[grid], &cfg);
        let expected = 0.5 * 1.0 + 0.5 * (1.0 - 0.3);
        assert!((obj - expected).abs() < 1e-12, "got {obj}, want {expected}");
    }

    #[test]
    fn all_zero_losses_leave_w_at_zero() {
        let storage = vec![fv(vec![1.0, 0.0]), fv(vec![0.0, 1.0])];
        let grid = PairGrid {
            my: 1,
            mz: 2,
            phis: storage.iter().collect(),
            losses: vec![0.0, 0.0],
        };
        let layout = tiny_layout();
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
        let out = train(&[grid], &layout, &cfg).unwrap();
        assert!(out.model.w.iter().all(|&v| v == 0.0));
        assert!(out.objective_trace.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn zero_c_converges_to_zero_vector() {
        let storage = vec![fv(vec![1.0, -1.0]), fv(vec![0.3, 0.8])];
        let grid = PairGrid {
            my: 1,
            mz: 2,
            phis: storage.iter().collect(),
            losses: vec![0.0, 1.0],
        };
        let layout = tiny_layout();
        let cfg = TrainConfig { c: 0.0, epochs: 10, ..TrainConfig::default() };
        let out = train(&[grid], &layout, &cfg).unwrap();
        assert!(out.model.w.iter().all(|&v| v.abs() < 1e-9));
    }

    fn planted_dataset(
        n: usize,
        dim: usize,
        hot: usize,
        seed: u64,
    ) -> (Vec<Vec<FeatureVector>>, Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phis = Vec::new();
        let mut losses = Vec::new();
        let mut oracles = Vec::new();
        for _ in 0..n {
            let my = 3;
            let mz = 3;
            let oracle = rng.gen_range(0..my * mz);
            let mut inst_phis = Vec::new();
            let mut inst_losses = Vec::new();
            for idx in 0..my * mz {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.1..0.1)).collect();
                v[hot] = if idx == oracle { 1.0 } else { 0.0 };
                inst_phis.push(fv(v));
                inst_losses.push(if idx == oracle { 0.0 } else { rng.gen_range(0.3..1.0) });
            }
            phis.push(inst_phis);
            losses.push(inst_losses);
            oracles.push(oracle);
        }
        (phis, losses, oracles)
    }

    #[test]
    fn planted_signal_separates_and_objective_descends() {
        let layout = tiny_layout();
        let dim = layout.total_dim();
        let hot = layout.consistency_slice().start;
        let (phis, losses, oracles) = planted_dataset(30, dim, hot, 17);
        let grids: Vec<PairGrid> = phis
            .iter()
            .zip(&losses)
            .map(|(p, l)| PairGrid { my: 3, mz: 3, phis: p.iter().collect(), losses: l.clone() })
            .collect();
        let cfg = TrainConfig { c: 10.0, epochs: 40, seed: 3, ..TrainConfig::default() };
        let out = train(&grids, &layout, &cfg).unwrap();
        let at_zero = objective(&vec![0.0; dim], &grids, &cfg);
        let at_w = objective(&out.model.w, &grids, &cfg);
        assert!(at_w <= at_zero + 1e-6, "no descent: {at_w} vs {at_zero}");

        let mut correct = 0;
        for (inst, grid) in grids.iter().enumerate() {
            let got = infer_flat(
                &out.model,
                &phis[inst].iter().cloned().collect::<Vec<_>>(),
                3,
                3,
            );
            let flat = (got.i - 1) * grid.mz + (got.j - 1);
            if flat == oracles[inst] {
                correct += 1;
            }
        }
        assert_eq!(correct, grids.len(), "planted oracle pairs must all be selected");
    }

    #[test]
    fn domain_adaptation_masks_everything_but_parse_scores() {
        let layout = tiny_layout();
        let dim = layout.total_dim();
        let hot = layout.consistency_slice().start;
        let (phis, losses, _) = planted_dataset(10, dim, hot, 23);
        let grids: Vec<PairGrid> = phis
            .iter()
            .zip(&losses)
            .map(|(p, l)| PairGrid { my: 3, mz: 3, phis: p.iter().collect(), losses: l.clone() })
            .collect();
        let cfg = TrainConfig { c: 5.0, epochs: 20, ..TrainConfig::default() };
        let out = train_domain_adaptation(&grids, &layout, &cfg).unwrap();
        let keep = layout.parse_score_slice();
        for (d, v) in out.model.w.iter().enumerate() {
            if !keep.contains(&d) {
                assert_eq!(*v, 0.0, "dim {d} outside the parse slice must stay zero");
            }
        }
    }

    #[test]
    fn mask_groups_are_disjoint_and_cover_consistency_plus_presence() {
        for flags in [
            LayoutFlags { use_category_presence: true, distance_only_consistency: false },
            LayoutFlags { use_category_presence: false, distance_only_consistency: true },
        ] {
            let layout = FeatureLayout {
                prepositions: vec!["on".into(), "with".into(), "near".into()],
                categories: vec!["dog".into(), "couch".into()],
                flags,
            };
            let mut seen = vec![0usize; layout.total_dim()];
            for g in FeatureGroup::ALL_NAMED {
                for d in g.dims(&layout) {
                    seen[d] += 1;
                }
            }
            for d in 0..layout.total_dim() {
                let in_target = layout.consistency_slice().contains(&d)
                    || layout.presence_slice().contains(&d);
                assert_eq!(seen[d], usize::from(in_target), "dim {d} covered {} times", seen[d]);
            }
            // all-consistency equals the union of the named groups.
            let all: std::collections::BTreeSet<usize> =
                FeatureGroup::AllConsistency.dims(&layout).into_iter().collect();
            let union: std::collections::BTreeSet<usize> = FeatureGroup::ALL_NAMED
                .iter()
                .flat_map(|g| g.dims(&layout))
                .collect();
            assert_eq!(all, union);
        }
    }

    #[test]
    fn model_json_round_trip_checks_fingerprint() {
        let layout = tiny_layout();
        let model = MediatorModel::new(vec![0.5; layout.total_dim()], &layout, TrainConfig::default());
        let mut buf = Vec::new();
        write_model_json(&mut buf, &model).unwrap();
        let back = read_model_json(std::io::Cursor::new(buf.clone()), &layout).unwrap();
        assert_eq!(back, model);

        let other = FeatureLayout {
            prepositions: vec!["on".into()],
            categories: vec!["dog".into()],
            flags: LayoutFlags::default(),
        };
        assert!(read_model_json(std::io::Cursor::new(buf), &other).is_err());
    }

    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
}
