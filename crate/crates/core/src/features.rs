//! Score and consistency features over (segmentation, parse) hypothesis
//! pairs: phi(x, y, z) = [seg scores | parse scores | consistency | category
//! presence].
//!
//! Consistency block layout, one block per preposition in inventory order:
//!
//! | slot | full mode (8 per preposition)                         |
//! |------|-------------------------------------------------------|
//! | 0    | centroid distance of the two mapped categories / diag |
//! | 1..4 | max{0, normalized displacement} above/below/left/right|
//! | 5    | min(area) / max(area)                                 |
//! | 6..7 | noun-to-category similarity (0 if absent from seg)    |
//!
//! `distance_only_consistency` keeps slots 0..=4 (5 per preposition).
//! Nouns map to the category with the highest similarity; if a mapped
//! category is not visible in the segmentation, slots 0..=5 of that
//! attachment contribute 0. Attachments sharing a preposition are summed
//! into one block; prepositions absent from the parse leave a zero block.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::LabelGrid;
use crate::parser::PrepAttachment;
use crate::scenegen::{mask_geometry, MaskGeom};
use crate::segmenter::SegmentationHypothesis;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("attachment preposition `{0}` is not in the layout inventory")]
    UnknownPreposition(String),
    #[error("segmentation grid is {0}x{1}, layout expects {2}x{3}")]
    GridMismatch(usize, usize, usize, usize),
    #[error("feature vector length {0} does not match layout dimension {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LayoutFlags {
    pub use_category_presence: bool,
    pub distance_only_consistency: bool,
}

/// Ordered feature dimension map; the single source of truth for model
/// files. `categories` excludes background and follows category-id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub prepositions: Vec<String>,
    pub categories: Vec<String>,
    pub flags: LayoutFlags,
}

impl FeatureLayout {
    pub fn p(&self) -> usize {
        self.prepositions.len()
    }

    pub fn k(&self) -> usize {
        self.categories.len()
    }

    pub fn block_size(&self) -> usize {
        if self.flags.distance_only_consistency {
            5
        } else {
            8
        }
    }

    pub fn seg_score_slice(&self) -> std::ops::Range<usize> {
        0..2
    }

    pub fn parse_score_slice(&self) -> std::ops::Range<usize> {
        2..2 + 2 + self.p()
    }

    pub fn consistency_slice(&self) -> std::ops::Range<usize> {
        let start = self.parse_score_slice().end;
        start..start + self.block_size() * self.p()
    }

    pub fn presence_slice(&self) -> std::ops::Range<usize> {
        let start = self.consistency_slice().end;
        if self.flags.use_category_presence {
            start..start + self.k()
        } else {
            start..start
        }
    }

    pub fn total_dim(&self) -> usize {
        self.presence_slice().end
    }

    pub fn prep_index(&self, prep: &str) -> Option<usize> {
        self.prepositions.iter().position(|p| p == prep)
    }

    /// Start of preposition `p_idx`'s block within the full vector.
    pub fn consistency_block(&self, p_idx: usize) -> std::ops::Range<usize> {
        let start = self.consistency_slice().start + p_idx * self.block_size();
        start..start + self.block_size()
    }

    /// FNV-1a over the canonical JSON encoding; model files pin this.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("layout serializes");
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in json.as_bytes() {
            hash ^= *b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        format!("{hash:016x}")
    }
}

pub fn write_layout_json(out: &mut impl Write, layout: &FeatureLayout) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, layout)?;
    out.write_all(b"\n")
}

pub fn read_layout_json(input: impl BufRead) -> anyhow::Result<FeatureLayout> {
    Ok(serde_json::from_reader(input)?)
}

/// Noun-to-category similarities in [0, 1]; a name always maps to its own
/// category with similarity 1, absent pairs read as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimilarityTable {
    sims: HashMap<(String, String), f64>,
}

impl SimilarityTable {
    pub fn insert(&mut self, noun: &str, category: &str, sim: f64) {
        self.sims.insert((noun.to_string(), category.to_string()), sim);
    }

    pub fn lookup(&self, noun: &str, category: &str) -> f64 {
        if noun == category {
            return 1.0;
        }
        self.sims.get(&(noun.to_string(), category.to_string())).copied().unwrap_or(0.0)
    }

    /// Index of the most similar layout category; ties go to the first.
    pub fn map_noun(&self, noun: &str, layout: &FeatureLayout) -> usize {
        let mut best = 0usize;
        let mut best_sim = f64::NEG_INFINITY;
        for (idx, cat) in layout.categories.iter().enumerate() {
            let s = self.lookup(noun, cat);
            if s > best_sim {
                best_sim = s;
                best = idx;
            }
        }
        best
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.sims.iter().map(|((n, c), s)| (n.as_str(), c.as_str(), *s))
    }
}

/// `noun<TAB>category<TAB>similarity` per line.
pub fn write_sims_tsv(out: &mut impl Write, sims: &SimilarityTable) -> std::io::Result<()> {
    let mut rows: Vec<(&str, &str, f64)> = sims.entries().collect();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    for (noun, cat, sim) in rows {
        writeln!(out, "{noun}\t{cat}\t{sim}")?;
    }
    Ok(())
}

pub fn read_sims_tsv(input: impl BufRead) -> anyhow::Result<SimilarityTable> {
    let mut table = SimilarityTable::default();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            anyhow::bail!("sims.tsv line {}: expected noun<TAB>category<TAB>sim", idx + 1);
        }
        let sim: f64 = parts[2].parse()?;
        if !(0.0..=1.0).contains(&sim) {
            anyhow::bail!("sims.tsv line {}: similarity {} outside [0, 1]", idx + 1, sim);
        }
        table.insert(parts[0], parts[1], sim);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

/// [rank, score], unnormalized.
pub fn seg_score_features(h: &SegmentationHypothesis) -> [f64; 2] {
    [h.rank as f64, h.score]
}

/// [rank, log_prob, one presence indicator per inventory preposition].
pub fn parse_score_features(
    rank: usize,
    log_prob: f64,
    attachments: &[PrepAttachment],
    layout: &FeatureLayout,
) -> Result<Vec<f64>, FeatureError> {
    let mut out = vec![0.0; 2 + layout.p()];
    out[0] = rank as f64;
    out[1] = log_prob;
    for att in attachments {
        let idx = layout
            .prep_index(&att.prep)
            .ok_or_else(|| FeatureError::UnknownPreposition(att.prep.clone()))?;
        out[2 + idx] = 1.0;
    }
    Ok(out)
}

/// Visible-mask summaries per layout category (index = category id - 1).
fn layout_masks(labels: &LabelGrid, layout: &FeatureLayout) -> Vec<Option<MaskGeom>> {
    (0..layout.k()).map(|ci| mask_geometry(labels, (ci + 1) as u16)).collect()
}

/// Per-preposition spatial/lexical block, summed over that preposition's
/// attachments (see the module doc for slot meanings).
pub fn consistency_features(
    seg: &SegmentationHypothesis,
    attachments: &[PrepAttachment],
    layout: &FeatureLayout,
    sims: &SimilarityTable,
    dims: (usize, usize),
) -> Result<Vec<f64>, FeatureError> {
    let (h, w) = dims;
    if seg.labels.h() != h || seg.labels.w() != w {
        return Err(FeatureError::GridMismatch(seg.labels.h(), seg.labels.w(), h, w));
    }
    let masks = layout_masks(&seg.labels, layout);
    let block = layout.block_size();
    let mut out = vec![0.0; block * layout.p()];
    let diag = ((h * h + w * w) as f64).sqrt();

    for att in attachments {
        let Some(p_idx) = layout.prep_index(&att.prep) else {
            // Callers guarantee inventory attachments; skip quietly so that
            // degenerate inputs still map to zeros.
            continue;
        };
        let slots = &mut out[p_idx * block..(p_idx + 1) * block];
        let ci1 = sims.map_noun(&att.governor.lemma, layout);
        let ci2 = sims.map_noun(&att.dependent.lemma, layout);
        if let (Some(m1), Some(m2)) = (&masks[ci1], &masks[ci2]) {
            let dr = m2.centroid.0 - m1.centroid.0; // >0: governor above
            let dc = m2.centroid.1 - m1.centroid.1; // >0: governor left
            slots[0] += (dr * dr + dc * dc).sqrt() / diag;
            slots[1] += dr.max(0.0) / h as f64;
            slots[2] += (-dr).max(0.0) / h as f64;
            slots[3] += dc.max(0.0) / w as f64;
            slots[4] += (-dc).max(0.0) / w as f64;
            if block == 8 {
                let (a1, a2) = (m1.area as f64, m2.area as f64);
                slots[5] += a1.min(a2) / a1.max(a2);
            }
        }
        if block == 8 {
            if masks[ci1].is_some() {
                slots[6] += sims.lookup(&att.governor.lemma, &layout.categories[ci1]);
            }
            if masks[ci2].is_some() {
                slots[7] += sims.lookup(&att.dependent.lemma, &layout.categories[ci2]);
            }
        }
    }
    Ok(out)
}

/// Per category: the summed noun similarity, positive when the category is
/// visible in the segmentation and negated otherwise.
pub fn category_presence_features(
    seg: &SegmentationHypothesis,
    attachments: &[PrepAttachment],
    layout: &FeatureLayout,
    sims: &SimilarityTable,
) -> Vec<f64> {
    let masks = layout_masks(&seg.labels, layout);
    let mut out = vec![0.0; layout.k()];
    for (ci, cat) in layout.categories.iter().enumerate() {
        let mut s = 0.0;
        for att in attachments {
            s += sims.lookup(&att.governor.lemma, cat);
            s += sims.lookup(&att.dependent.lemma, cat);
        }
        out[ci] = if masks[ci].is_some() { s } else { -s };
    }
    out
}

/// Full phi(x, y, z) in layout slice order.
pub fn assemble_phi(
    seg: &SegmentationHypothesis,
    parse_rank: usize,
    parse_log_prob: f64,
    attachments: &[PrepAttachment],
    layout: &FeatureLayout,
    sims: &SimilarityTable,
    dims: (usize, usize),
) -> Result<FeatureVector, FeatureError> {
    let mut values = Vec::with_capacity(layout.total_dim());
    values.extend_from_slice(&seg_score_features(seg));
    values.extend(parse_score_features(parse_rank, parse_log_prob, attachments, layout)?);
    values.extend(consistency_features(seg, attachments, layout, sims, dims)?);
    if layout.flags.use_category_presence {
        values.extend(category_presence_features(seg, attachments, layout, sims));
    }
    debug_assert_eq!(values.len(), layout.total_dim());
    Ok(FeatureVector { values })
}
