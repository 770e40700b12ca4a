//! Synthetic captioned scenes with exact segmentation and attachment ground
//! truth.

pub mod defaults;
pub mod filter;
pub mod generate;
pub mod io;
pub mod semantics;

pub use filter::{filter_ambiguous, DatasetStats};
pub use generate::{generate_scene, GenConfig, TemplateWeights};
pub use semantics::{mask_geometry, preposition_holds, MaskGeom, PrepArgs, KNOWN_PREPOSITIONS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CategoryId, LabelGrid, BACKGROUND};
use crate::parser::PrepAttachment;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("config: {0}")]
    BadConfig(String),
    #[error("object {index} (category {category}) does not fit the {h}x{w} grid: {detail}")]
    ObjectOutsideGrid { index: usize, category: CategoryId, h: usize, w: usize, detail: String },
    #[error(
        "could not satisfy `{prep}` between `{gov}` and `{dep}` after {attempts} layout attempts"
    )]
    Unsatisfiable { prep: String, gov: String, dep: String, attempts: usize },
}

/// One object category. Id 0 is reserved for background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
    pub synonyms: Vec<String>,
}

/// Dense category inventory: ids 0..K-1, id 0 = "background"; names and
/// synonyms globally unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategorySet {
    categories: Vec<Category>,
}

impl CategorySet {
    /// Builds the inventory from (name, synonyms) pairs for the
    /// non-background categories; background is added as id 0.
    pub fn new(non_background: &[(&str, &[&str])]) -> Result<Self, GenError> {
        let mut categories = vec![Category {
            id: BACKGROUND,
            name: "background".to_string(),
            synonyms: vec![],
        }];
        for (idx, (name, synonyms)) in non_background.iter().enumerate() {
            categories.push(Category {
                id: (idx + 1) as CategoryId,
                name: name.to_string(),
                synonyms: synonyms.iter().map(|s| s.to_string()).collect(),
            });
        }
        let set = CategorySet { categories };
        set.validate()?;
        Ok(set)
    }

    pub fn from_categories(categories: Vec<Category>) -> Result<Self, GenError> {
        let set = CategorySet { categories };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<(), GenError> {
        let mut seen = std::collections::HashSet::new();
        for (idx, cat) in self.categories.iter().enumerate() {
            if cat.id as usize != idx {
                return Err(GenError::BadConfig(format!(
                    "category ids must be dense; `{}` has id {} at position {}",
                    cat.name, cat.id, idx
                )));
            }
            for token in std::iter::once(&cat.name).chain(cat.synonyms.iter()) {
                if token.is_empty() || *token != token.to_lowercase() {
                    return Err(GenError::BadConfig(format!("token `{token}` must be lowercase")));
                }
                if !seen.insert(token.clone()) {
                    return Err(GenError::BadConfig(format!(
                        "token `{token}` appears in more than one category"
                    )));
                }
            }
        }
        if self.categories.is_empty() || self.categories[0].name != "background" {
            return Err(GenError::BadConfig("id 0 must be `background`".into()));
        }
        Ok(())
    }

    pub fn all(&self) -> &[Category] {
        &self.categories
    }

    /// Non-background categories.
    pub fn objects(&self) -> &[Category] {
        &self.categories[1..]
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn get(&self, id: CategoryId) -> &Category {
        &self.categories[id as usize]
    }
}

/// Axis-aligned box in grid cells; (col, row) is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridBox {
    pub col: usize,
    pub row: usize,
    pub w: usize,
    pub h: usize,
}

impl GridBox {
    pub fn overlaps(&self, other: &GridBox) -> bool {
        self.col < other.col + other.w
            && other.col < self.col + self.w
            && self.row < other.row + other.h
            && other.row < self.row + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub category: CategoryId,
    pub bbox: GridBox,
    /// Larger values are drawn later and occlude earlier objects.
    pub draw_order: u32,
}

/// A synthetic world: layout, exact label grid, caption and the attachments
/// that are spatially true under the preposition semantics table.
#[derive(Debug, Clone)]
pub struct CaptionedScene {
    pub id: String,
    pub h: usize,
    pub w: usize,
    pub objects: Vec<SceneObject>,
    pub gt_labels: LabelGrid,
    pub caption: Vec<String>,
    pub gt_attachments: Vec<PrepAttachment>,
}

/// Paints objects in ascending (draw_order, input index); each cell ends up
/// with the category of the last object painted over it, else background.
pub fn render_segmentation(
    objects: &[SceneObject],
    h: usize,
    w: usize,
) -> Result<LabelGrid, GenError> {
    for (index, obj) in objects.iter().enumerate() {
        if obj.category == BACKGROUND {
            return Err(GenError::BadConfig(format!("object {index} has background category")));
        }
        let b = &obj.bbox;
        if b.w < 1 || b.h < 1 {
            return Err(GenError::ObjectOutsideGrid {
                index,
                category: obj.category,
                h,
                w,
                detail: format!("degenerate box {b:?}"),
            });
        }
        if b.col + b.w > w || b.row + b.h > h {
            return Err(GenError::ObjectOutsideGrid {
                index,
                category: obj.category,
                h,
                w,
                detail: format!("box {b:?} extends past the grid"),
            });
        }
    }
    let mut order: Vec<usize> = (0..objects.len()).collect();
    order.sort_by_key(|&i| (objects[i].draw_order, i));
    let mut grid = LabelGrid::new(h, w);
    for i in order {
        let obj = &objects[i];
        for r in obj.bbox.row..obj.bbox.row + obj.bbox.h {
            for c in obj.bbox.col..obj.bbox.col + obj.bbox.w {
                grid.set(r, c, obj.category);
            }
        }
    }
    Ok(grid)
}
