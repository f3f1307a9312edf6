//! Typed point patterns, dataset ingestion, layout rasterization and
//! counting-category binning.

mod categorizer;
mod dataset;
mod raster;

pub use categorizer::{fit_categorizer, CountingCategorizer};
pub use dataset::{load_dataset, save_dataset, Dataset};
pub use raster::{derasterize_layout, grid_position, rasterize_layout, MARKER_RADIUS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ChannelStack;

/// Index of a cell class within a dataset's `cell_types` list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellTypeId(pub usize);

impl CellTypeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One annotated cell center, in pixel coordinates of its patch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub x: f64,
    pub y: f64,
    #[serde(rename = "type")]
    pub cell_type: CellTypeId,
}

impl Cell {
    pub fn new(x: f64, y: f64, cell_type: usize) -> Self {
        Cell {
            x,
            y,
            cell_type: CellTypeId(cell_type),
        }
    }
}

/// Typed cell centers of one patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    #[serde(rename = "id")]
    pub patch_id: String,
    pub width: u32,
    pub height: u32,
    pub cells: Vec<Cell>,
}

impl PointPattern {
    pub fn new(patch_id: impl Into<String>, width: u32, height: u32, cells: Vec<Cell>) -> Self {
        PointPattern {
            patch_id: patch_id.into(),
            width,
            height,
            cells,
        }
    }

    /// Checks bounds and type indices against `num_types`.
    pub fn validate(&self, num_types: usize) -> Result<()> {
        let fail = |message: String| Error::Validation {
            patch_id: self.patch_id.clone(),
            message,
        };
        if self.width == 0 || self.height == 0 {
            return Err(fail(format!(
                "patch size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        for (i, cell) in self.cells.iter().enumerate() {
            let (w, h) = (f64::from(self.width), f64::from(self.height));
            if !(cell.x >= 0.0 && cell.x < w && cell.y >= 0.0 && cell.y < h) {
                return Err(fail(format!(
                    "cell {i} at ({}, {}) lies outside [0, {w}) x [0, {h})",
                    cell.x, cell.y
                )));
            }
            if cell.cell_type.0 >= num_types {
                return Err(fail(format!(
                    "cell {i} has type {} but only {num_types} cell types are declared",
                    cell.cell_type.0
                )));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Cell centers of one type, normalized to the unit square.
    pub fn normalized_points(&self, cell_type: CellTypeId) -> Vec<[f64; 2]> {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        self.cells
            .iter()
            .filter(|c| c.cell_type == cell_type)
            .map(|c| [c.x / w, c.y / h])
            .collect()
    }
}

/// Layout channels followed by density channels, `2 * num_types` in total.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutTensor {
    num_types: usize,
    stack: ChannelStack,
}

impl LayoutTensor {
    pub fn new(num_types: usize, stack: ChannelStack) -> Result<Self> {
        if num_types == 0 || stack.channels() != 2 * num_types {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channels for {num_types} cell types", 2 * num_types),
                actual: format!("{} channels", stack.channels()),
            });
        }
        Ok(LayoutTensor { num_types, stack })
    }

    /// Concatenates layout channels and density channels.
    pub fn from_parts(layout: &ChannelStack, density: &ChannelStack) -> Result<Self> {
        if layout.channels() != density.channels() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} density channels", layout.channels()),
                actual: format!("{}", density.channels()),
            });
        }
        LayoutTensor::new(layout.channels(), ChannelStack::concat(layout, density)?)
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn stack(&self) -> &ChannelStack {
        &self.stack
    }

    pub fn into_stack(self) -> ChannelStack {
        self.stack
    }

    pub fn layout(&self) -> ChannelStack {
        self.stack.slice_channels(0, self.num_types)
    }

    pub fn density(&self) -> ChannelStack {
        self.stack
            .slice_channels(self.num_types, 2 * self.num_types)
    }
}
