//! Dense row-major label grids shared by the scene generator and the segmenter.

use serde::{Deserialize, Serialize};

/// Category id. 0 is reserved for background.
pub type CategoryId = u16;

pub const BACKGROUND: CategoryId = 0;

/// H x W grid of category ids, row-major, row index increasing downward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelGrid {
    h: usize,
    w: usize,
    cells: Vec<CategoryId>,
}

impl LabelGrid {
    pub fn new(h: usize, w: usize) -> Self {
        LabelGrid { h, w, cells: vec![BACKGROUND; h * w] }
    }

    pub fn from_cells(h: usize, w: usize, cells: Vec<CategoryId>) -> Option<Self> {
        if cells.len() != h * w {
            return None;
        }
        Some(LabelGrid { h, w, cells })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn get(&self, row: usize, col: usize) -> CategoryId {
        self.cells[row * self.w + col]
    }

    pub fn set(&mut self, row: usize, col: usize, id: CategoryId) {
        self.cells[row * self.w + col] = id;
    }

    pub fn cells(&self) -> &[CategoryId] {
        &self.cells
    }

    /// Iterate (row, col, id) in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, CategoryId)> + '_ {
        let w = self.w;
        self.cells.iter().enumerate().map(move |(idx, &id)| (idx / w, idx % w, id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_cells_checks_length() {
        assert!(LabelGrid::from_cells(2, 2, vec![0, 1, 2]).is_none());
        let g = LabelGrid::from_cells(2, 2, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(g.get(1, 0), 2);
    }
}
