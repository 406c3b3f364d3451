use super::{Layout, Metric, Point};
use crate::error::{Error, Result};

/// Uniform-grid bucket index over a subset of a layout's nodes.
///
/// Queries expand ring by ring around the query cell and stop once no
/// unvisited cell can hold a closer candidate, so results are identical to a
/// linear scan ordered by [`rank_key`] then node id.
#[derive(Debug)]
pub struct ActiveIndex<'a> {
    layout: &'a Layout,
    cols: usize,
    rows: usize,
    cell_w: f64,
    cell_h: f64,
    cells: Vec<Vec<u32>>,
    ids: Vec<usize>,
}

const MAX_CELLS_PER_AXIS: usize = 2048;

/// Resolution below which two distances count as a tie: 2^-40 length units.
pub const TIE_QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

/// Ordering key for distances. Distances that agree to within
/// [`TIE_QUANTUM`] (lattice neighbors that differ only by rounding) share a
/// key, so the lower node id wins.
pub fn rank_key(d: f64) -> f64 {
    (d / TIE_QUANTUM).round()
}

/// Total order used by every neighbor query: rank key, then id.
pub fn rank_cmp(a: (usize, f64), b: (usize, f64)) -> std::cmp::Ordering {
    rank_key(a.1).total_cmp(&rank_key(b.1)).then(a.0.cmp(&b.0))
}

impl<'a> ActiveIndex<'a> {
    pub fn build(layout: &'a Layout, active: impl IntoIterator<Item = usize>) -> Self {
        let ids: Vec<usize> = active.into_iter().collect();
        let region = layout.region();
        let (w, h) = (region.width(), region.height());
        // Cell side ~ 1/sqrt(density): about one node per cell.
        let side = (region.area() / ids.len().max(1) as f64).sqrt();
        let cols = ((w / side).ceil() as usize).clamp(1, MAX_CELLS_PER_AXIS);
        let rows = ((h / side).ceil() as usize).clamp(1, MAX_CELLS_PER_AXIS);
        let mut index = Self {
            layout,
            cols,
            rows,
            cell_w: w / cols as f64,
            cell_h: h / rows as f64,
            cells: vec![Vec::new(); cols * rows],
            ids,
        };
        for k in 0..index.ids.len() {
            let id = index.ids[k];
            let (cx, cy) = index.cell_of(layout.position(id));
            index.cells[cy * cols + cx].push(id as u32);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn active_ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn layout(&self) -> &Layout {
        self.layout
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let cx = ((p.x / self.cell_w).floor().max(0.0) as usize).min(self.cols - 1);
        let cy = ((p.y / self.cell_h).floor().max(0.0) as usize).min(self.rows - 1);
        (cx, cy)
    }

    /// Nearest indexed node to `p`.
    pub fn nearest(&self, p: Point) -> Result<(usize, f64)> {
        self.k_nearest(p, 1, f64::INFINITY, None)
            .into_iter()
            .next()
            .ok_or(Error::EmptyGraph)
    }

    /// Up to `k` indexed nodes within `max_radius` of `p`, ascending by
    /// distance then id, never including `exclude`.
    pub fn k_nearest(
        &self,
        p: Point,
        k: usize,
        max_radius: f64,
        exclude: Option<usize>,
    ) -> Vec<(usize, f64)> {
        let mut found: Vec<(usize, f64)> = Vec::new();
        if k == 0 || self.ids.is_empty() {
            return found;
        }
        let region = self.layout.region();
        let toroidal = region.metric() == Metric::Toroidal;
        let step = self.cell_w.min(self.cell_h);
        let (qx, qy) = self.cell_of(p);
        let consider = |found: &mut Vec<(usize, f64)>, id: usize| {
            if Some(id) == exclude {
                return;
            }
            let d = region.distance(p, self.layout.position(id));
            if d > max_radius {
                return;
            }
            let pos = found.partition_point(|&c| rank_cmp(c, (id, d)).is_lt());
            if pos < k {
                found.insert(pos, (id, d));
                found.truncate(k);
            }
        };

        let max_ring = self.cols.max(self.rows);
        for s in 0..=max_ring {
            if toroidal && 2 * s + 1 > self.cols.min(self.rows) {
                // Ring would wrap onto cells already visited; finish by scanning.
                found.clear();
                for &id in &self.ids {
                    consider(&mut found, id);
                }
                return found;
            }
            let s_i = s as isize;
            for dy in -s_i..=s_i {
                let edge_row = dy.abs() == s_i;
                let mut dx = -s_i;
                while dx <= s_i {
                    if let Some(cell) = self.wrap_cell(qx as isize + dx, qy as isize + dy, toroidal) {
                        for &id in &self.cells[cell] {
                            consider(&mut found, id as usize);
                        }
                    }
                    dx = if edge_row || s_i == 0 { dx + 1 } else if dx == -s_i { s_i } else { s_i + 1 };
                }
            }
            // Unvisited cells lie at least s * step away.
            let bound = s as f64 * step;
            if bound > max_radius {
                break;
            }
            if found.len() == k && found[k - 1].1 < bound - 2.0 * TIE_QUANTUM {
                break;
            }
        }
        found
    }

    /// All indexed nodes within `radius`, ascending by distance then id.
    pub fn within_radius(&self, p: Point, radius: f64, exclude: Option<usize>) -> Vec<(usize, f64)> {
        self.k_nearest(p, usize::MAX, radius, exclude)
    }

    fn wrap_cell(&self, cx: isize, cy: isize, toroidal: bool) -> Option<usize> {
        let (cols, rows) = (self.cols as isize, self.rows as isize);
        let (cx, cy) = if toroidal {
            (cx.rem_euclid(cols), cy.rem_euclid(rows))
        } else if cx < 0 || cy < 0 || cx >= cols || cy >= rows {
            return None;
        } else {
            (cx, cy)
        };
        Some((cy * cols + cx) as usize)
    }
}
