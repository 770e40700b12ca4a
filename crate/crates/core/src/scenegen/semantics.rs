//! Generator-side preposition semantics.
//!
//! These predicates are the ground-truth authority for which attachment
//! reading of a caption is spatially true. They are evaluated on the
//! rendered (occlusion-aware) label grid:
//!
//! - `on`: governor mask centroid strictly above the dependent's, and the
//!   masks' row ranges overlap or are adjacent.
//! - `under`: mirror of `on`.
//! - `next_to` / `by` / `near`: horizontal centroid gap <= 25% of grid
//!   width and vertical gap <= 10% of grid height.
//! - `in_front_of`: governor has the higher draw order and the boxes
//!   overlap. `behind`: mirror.
//! - `with`: centroid distance <= 30% of the grid diagonal.
//!
//! A preposition involving a category with an empty visible mask is false
//! (except the draw-order pair, which is defined on boxes).

use crate::grid::{CategoryId, LabelGrid};

use super::SceneObject;

pub const KNOWN_PREPOSITIONS: [&str; 8] =
    ["on", "under", "next_to", "by", "near", "in_front_of", "behind", "with"];

/// Proximity relations usable between the subject and the middle noun of the
/// progressive caption template.
pub const PROXIMITY_PREPOSITIONS: [&str; 4] = ["next_to", "by", "near", "with"];

/// Visible-mask summary of one category on a label grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskGeom {
    pub area: usize,
    /// (row, col) mean of member cells.
    pub centroid: (f64, f64),
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

/// `None` when the category has no visible cells.
pub fn mask_geometry(labels: &LabelGrid, cat: CategoryId) -> Option<MaskGeom> {
    let mut area = 0usize;
    let mut sum_r = 0usize;
    let mut sum_c = 0usize;
    let (mut row_min, mut row_max) = (usize::MAX, 0usize);
    let (mut col_min, mut col_max) = (usize::MAX, 0usize);
    for (r, c, id) in labels.iter() {
        if id != cat {
            continue;
        }
        area += 1;
        sum_r += r;
        sum_c += c;
        row_min = row_min.min(r);
        row_max = row_max.max(r);
        col_min = col_min.min(c);
        col_max = col_max.max(c);
    }
    if area == 0 {
        return None;
    }
    Some(MaskGeom {
        area,
        centroid: (sum_r as f64 / area as f64, sum_c as f64 / area as f64),
        row_min,
        row_max,
        col_min,
        col_max,
    })
}

pub struct PrepArgs<'a> {
    pub gov_mask: Option<&'a MaskGeom>,
    pub dep_mask: Option<&'a MaskGeom>,
    pub gov_obj: &'a SceneObject,
    pub dep_obj: &'a SceneObject,
    pub h: usize,
    pub w: usize,
}

/// `None` for prepositions outside the semantics table.
pub fn preposition_holds(prep: &str, a: &PrepArgs) -> Option<bool> {
    let masks = || match (a.gov_mask, a.dep_mask) {
        (Some(g), Some(d)) => Some((g, d)),
        _ => None,
    };
    let vertically_touching = |g: &MaskGeom, d: &MaskGeom| {
        g.row_max + 1 >= d.row_min && d.row_max + 1 >= g.row_min
    };
    let value = match prep {
        "on" => match masks() {
            Some((g, d)) => g.centroid.0 < d.centroid.0 && vertically_touching(g, d),
            None => false,
        },
        "under" => match masks() {
            Some((g, d)) => g.centroid.0 > d.centroid.0 && vertically_touching(g, d),
            None => false,
        },
        "next_to" | "by" | "near" => match masks() {
            Some((g, d)) => {
                let dv = (g.centroid.0 - d.centroid.0).abs();
                let dh = (g.centroid.1 - d.centroid.1).abs();
                dh <= 0.25 * a.w as f64 && dv <= 0.10 * a.h as f64
            }
            None => false,
        },
        "with" => match masks() {
            Some((g, d)) => {
                let dv = g.centroid.0 - d.centroid.0;
                let dh = g.centroid.1 - d.centroid.1;
                let diag = ((a.h * a.h + a.w * a.w) as f64).sqrt();
                (dv * dv + dh * dh).sqrt() <= 0.30 * diag
            }
            None => false,
        },
        "in_front_of" => {
            a.gov_obj.draw_order > a.dep_obj.draw_order && a.gov_obj.bbox.overlaps(&a.dep_obj.bbox)
        }
        "behind" => {
            a.gov_obj.draw_order < a.dep_obj.draw_order && a.gov_obj.bbox.overlaps(&a.dep_obj.bbox)
        }
        _ => return None,
    };
    Some(value)
}
