use std::collections::VecDeque;

use super::{Cell, PointPattern};
use crate::error::{Error, Result};
use crate::tensor::ChannelStack;

/// Half-width of the square cell marker; markers are `2r + 1` pixels wide.
pub const MARKER_RADIUS: usize = 1;

/// Grid cell `(row, col)` whose center is nearest to the pixel position
/// `(x, y)` of a `width x height` patch.
pub fn grid_position(
    x: f64,
    y: f64,
    width: u32,
    height: u32,
    grid_h: usize,
    grid_w: usize,
) -> (usize, usize) {
    let scale = |v: f64, extent: u32, n: usize| {
        let g = (v * n as f64 / f64::from(extent)).floor();
        (g.max(0.0) as usize).min(n - 1)
    };
    (scale(y, height, grid_h), scale(x, width, grid_w))
}

/// Draws a 3x3 binary marker per cell into its type's channel.
pub fn rasterize_layout(
    pattern: &PointPattern,
    grid_h: usize,
    grid_w: usize,
    num_types: usize,
) -> Result<ChannelStack> {
    if grid_h == 0 || grid_w == 0 {
        return Err(Error::arg(format!(
            "grid dimensions must be positive, got {grid_h}x{grid_w}"
        )));
    }
    if pattern.width == 0 || pattern.height == 0 {
        return Err(Error::Validation {
            patch_id: pattern.patch_id.clone(),
            message: "patch size must be positive".into(),
        });
    }
    let mut out = ChannelStack::zeros(num_types, grid_h, grid_w);
    for cell in &pattern.cells {
        let c = cell.cell_type.index();
        if c >= num_types {
            return Err(Error::Validation {
                patch_id: pattern.patch_id.clone(),
                message: format!("cell type {c} out of range for {num_types} types"),
            });
        }
        let (row, col) = grid_position(
            cell.x,
            cell.y,
            pattern.width,
            pattern.height,
            grid_h,
            grid_w,
        );
        let rows = row.saturating_sub(MARKER_RADIUS)..=(row + MARKER_RADIUS).min(grid_h - 1);
        let cols = col.saturating_sub(MARKER_RADIUS)..=(col + MARKER_RADIUS).min(grid_w - 1);
        for r in rows {
            for q in cols.clone() {
                out.set(c, r, q, 1.0);
            }
        }
    }
    Ok(out)
}

/// Reads cell centers back out of (possibly noisy) layout channels.
///
/// Each channel is binarized at `threshold` and split into 8-connected
/// components; every component becomes one cell at its centroid. Components
/// that are a marker clipped by the grid border are placed on the border row
/// or column the clipped marker was centered on. Output coordinates are grid
/// indices, with the pattern sized `grid_w x grid_h`.
pub fn derasterize_layout(
    channels: &ChannelStack,
    threshold: f64,
    patch_id: &str,
) -> Result<PointPattern> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::arg(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let (h, w) = (channels.height(), channels.width());
    let mut cells = Vec::new();
    let mut seen = vec![false; h * w];
    let mut queue = VecDeque::new();
    for c in 0..channels.channels() {
        let plane = channels.channel(c);
        seen.iter_mut().for_each(|s| *s = false);
        for start in 0..h * w {
            if seen[start] || plane[start] < threshold {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut comp = Component::default();
            while let Some(idx) = queue.pop_front() {
                let (r, q) = (idx / w, idx % w);
                comp.add(r, q);
                for dr in -1i64..=1 {
                    for dq in -1i64..=1 {
                        let (nr, nq) = (r as i64 + dr, q as i64 + dq);
                        if nr < 0 || nq < 0 || nr >= h as i64 || nq >= w as i64 {
                            continue;
                        }
                        let n = nr as usize * w + nq as usize;
                        if !seen[n] && plane[n] >= threshold {
                            seen[n] = true;
                            queue.push_back(n);
                        }
                    }
                }
            }
            let row = comp.center(comp.row_sum, comp.row_min, comp.row_max, h);
            let col = comp.center(comp.col_sum, comp.col_min, comp.col_max, w);
            cells.push(Cell::new(col as f64, row as f64, c));
        }
    }
    Ok(PointPattern::new(patch_id, w as u32, h as u32, cells))
}

#[derive(Debug)]
struct Component {
    size: usize,
    row_sum: usize,
    col_sum: usize,
    row_min: usize,
    row_max: usize,
    col_min: usize,
    col_max: usize,
}

impl Default for Component {
    fn default() -> Self {
        Component {
            size: 0,
            row_sum: 0,
            col_sum: 0,
            row_min: usize::MAX,
            row_max: 0,
            col_min: usize::MAX,
            col_max: 0,
        }
    }
}

impl Component {
    fn add(&mut self, r: usize, q: usize) {
        self.size += 1;
        self.row_sum += r;
        self.col_sum += q;
        self.row_min = self.row_min.min(r);
        self.row_max = self.row_max.max(r);
        self.col_min = self.col_min.min(q);
        self.col_max = self.col_max.max(q);
    }

    /// Rounded centroid along one axis, with clipped-marker correction.
    fn center(&self, sum: usize, lo: usize, hi: usize, extent: usize) -> usize {
        let full = 2 * MARKER_RADIUS + 1;
        if hi - lo + 1 < full {
            if lo == 0 {
                return hi.saturating_sub(MARKER_RADIUS);
            }
            if hi == extent - 1 {
                return (lo + MARKER_RADIUS).min(extent - 1);
            }
        }
        (sum as f64 / self.size as f64).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(stack: &ChannelStack, c: usize) -> usize {
        stack.channel(c).iter().filter(|&&v| v == 1.0).count()
    }

    #[test]
    fn center_marker_is_3x3() {
        let p = PointPattern::new("p", 64, 64, vec![Cell::new(32.0, 32.0, 0)]);
        let s = rasterize_layout(&p, 64, 64, 3).unwrap();
        assert_eq!(ones(&s, 0), 9);
        assert_eq!(ones(&s, 1) + ones(&s, 2), 0);
        for r in 31..=33 {
            for q in 31..=33 {
                assert_eq!(s.get(0, r, q), 1.0);
            }
        }
        assert!(s.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn corner_marker_is_clipped() {
        let p = PointPattern::new("p", 64, 64, vec![Cell::new(0.0, 0.0, 0)]);
        assert_eq!(ones(&rasterize_layout(&p, 64, 64, 1).unwrap(), 0), 4);
    }

    #[test]
    fn overlapping_markers_merge() {
        let p = PointPattern::new(
            "p",
            64,
            64,
            vec![Cell::new(10.0, 10.0, 0), Cell::new(10.0, 10.0, 0)],
        );
        assert_eq!(ones(&rasterize_layout(&p, 64, 64, 1).unwrap(), 0), 9);
    }

    #[test]
    fn coordinates_are_scaled_to_grid() {
        let p = PointPattern::new("p", 464, 464, vec![Cell::new(463.9, 0.0, 0)]);
        let s = rasterize_layout(&p, 64, 64, 1).unwrap();
        assert_eq!(s.get(0, 0, 63), 1.0);
        assert_eq!(ones(&s, 0), 4);
        assert_eq!(grid_position(232.0, 116.0, 464, 464, 64, 64), (16, 32));
    }

    #[test]
    fn zero_grid_is_rejected() {
        let p = PointPattern::new("p", 4, 4, vec![]);
        assert!(rasterize_layout(&p, 0, 4, 1).is_err());
    }

    #[test]
    fn roundtrip_three_cells() {
        let cells = vec![
            Cell::new(5.0, 5.0, 0),
            Cell::new(20.0, 9.0, 1),
            Cell::new(12.0, 25.0, 0),
        ];
        let p = PointPattern::new("p", 32, 32, cells.clone());
        let s = rasterize_layout(&p, 32, 32, 2).unwrap();
        let back = derasterize_layout(&s, 0.5, "p").unwrap();
        let mut got: Vec<_> = back
            .cells
            .iter()
            .map(|c| (c.cell_type.0, c.x as i64, c.y as i64))
            .collect();
        let mut want: Vec<_> = cells
            .iter()
            .map(|c| (c.cell_type.0, c.x as i64, c.y as i64))
            .collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn border_markers_roundtrip() {
        let cells = vec![
            Cell::new(0.0, 0.0, 0),
            Cell::new(31.0, 31.0, 0),
            Cell::new(0.0, 15.0, 0),
            Cell::new(20.0, 31.0, 0),
        ];
        let p = PointPattern::new("p", 32, 32, cells.clone());
        let back = derasterize_layout(&rasterize_layout(&p, 32, 32, 1).unwrap(), 0.5, "p").unwrap();
        let mut got: Vec<_> = back
            .cells
            .iter()
            .map(|c| (c.x as i64, c.y as i64))
            .collect();
        let mut want: Vec<_> = cells.iter().map(|c| (c.x as i64, c.y as i64)).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn empty_and_faint_channels() {
        let s = ChannelStack::zeros(2, 16, 16);
        assert!(derasterize_layout(&s, 0.5, "z").unwrap().cells.is_empty());
        let mut s = ChannelStack::zeros(1, 16, 16);
        for r in 4..7 {
            for q in 4..7 {
                s.set(0, r, q, 0.4);
            }
        }
        assert!(derasterize_layout(&s, 0.5, "f").unwrap().cells.is_empty());
    }

    #[test]
    fn diagonal_neighbors_at_offset_three_merge() {
        // 8-connected markers touching at a corner cannot be told apart.
        let p = PointPattern::new(
            "p",
            32,
            32,
            vec![Cell::new(10.0, 10.0, 0), Cell::new(13.0, 13.0, 0)],
        );
        let back = derasterize_layout(&rasterize_layout(&p, 32, 32, 1).unwrap(), 0.5, "p").unwrap();
        assert_eq!(back.cells.len(), 1);
    }

    #[test]
    fn invalid_threshold() {
        let s = ChannelStack::zeros(1, 4, 4);
        assert!(derasterize_layout(&s, 1.0, "p").is_err());
        assert!(derasterize_layout(&s, 0.0, "p").is_err());
    }
}
