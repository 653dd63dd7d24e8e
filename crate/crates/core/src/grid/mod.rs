//! Uniform-grid fields and the discrete energy machinery.
//!
//! Scalar fields live on nodes with a hard zero-outside-the-box (Dirichlet)
//! convention; gradients and quadratures are cell-based. The discrete energy
//! is the single source of truth: the operator and the energy gradient are
//! its exact derivatives, so optimize-then-discretize questions never arise.

pub mod io;
pub mod ops;

use crate::geom::Vec3;

/// Values below this are snapped to exactly zero by every projection, so the
/// sharp positivity set is well defined in floating point.
pub const ETA_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    /// Uniform cell size, identical along every axis.
    pub h: f64,
    pub origin: Vec3,
    /// Cells per axis; axes past `dim` hold 1 cell and are never indexed.
    pub dims: [usize; 3],
}

impl Grid {
    pub fn new(dim: usize, h: f64, origin: Vec3, dims_used: &[usize]) -> Self {
        assert!((1..=3).contains(&dim));
        assert!(h > 0.0);
        let mut dims = [1usize; 3];
        for d in 0..dim {
            dims[d] = dims_used[d];
            assert!(dims[d] >= 4, "at least 4 cells per axis");
        }
        Self { dim, h, origin, dims }
    }

    /// Grid over the centered box [-half, half]^dim with the given cell size,
    /// adjusted so the box is an integer number of cells wide.
    pub fn centered(dim: usize, h: f64, half_width: f64) -> Self {
        let cells = ((2.0 * half_width / h).ceil() as usize).max(4);
        let origin_val = -(cells as f64) * h / 2.0;
        let mut origin = [0.0; 3];
        for d in 0..dim {
            origin[d] = origin_val;
        }
        Self::new(dim, h, origin, &[cells; 3][..dim])
    }

    pub fn nodes_per_axis(&self, d: usize) -> usize {
        if d < self.dim {
            self.dims[d] + 1
        } else {
            1
        }
    }

    pub fn node_count(&self) -> usize {
        (0..3).map(|d| self.nodes_per_axis(d)).product()
    }

    pub fn cell_count(&self) -> usize {
        self.dims[..self.dim].iter().product()
    }

    #[inline]
    pub fn node_lin(&self, i: [usize; 3]) -> usize {
        (i[0] * self.nodes_per_axis(1) + i[1]) * self.nodes_per_axis(2) + i[2]
    }

    #[inline]
    pub fn node_unlin(&self, l: usize) -> [usize; 3] {
        let n2 = self.nodes_per_axis(2);
        let n1 = self.nodes_per_axis(1);
        [l / (n1 * n2), (l / n2) % n1, l % n2]
    }

    #[inline]
    pub fn node_pos(&self, i: [usize; 3]) -> Vec3 {
        let mut p = self.origin;
        for d in 0..self.dim {
            p[d] += i[d] as f64 * self.h;
        }
        p
    }

    #[inline]
    pub fn cell_lin(&self, c: [usize; 3]) -> usize {
        let d1 = if self.dim >= 2 { self.dims[1] } else { 1 };
        let d2 = if self.dim >= 3 { self.dims[2] } else { 1 };
        (c[0] * d1 + c[1]) * d2 + c[2]
    }

    #[inline]
    pub fn cell_center(&self, c: [usize; 3]) -> Vec3 {
        let mut p = self.origin;
        for d in 0..self.dim {
            p[d] += (c[d] as f64 + 0.5) * self.h;
        }
        p
    }

    /// Iterates over all cells in fixed row-major order.
    pub fn cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let dims = self.dims;
        let dim = self.dim;
        let total = self.cell_count();
        (0..total).map(move |l| {
            let d1 = if dim >= 2 { dims[1] } else { 1 };
            let d2 = if dim >= 3 { dims[2] } else { 1 };
            [l / (d1 * d2), (l / d2) % d1, l % d2]
        })
    }

    /// Physical half-extent of the box along axis 0 (boxes are cubes here).
    pub fn half_width(&self) -> f64 {
        self.dims[0] as f64 * self.h / 2.0
    }
}

/// A nonnegative scalar field on grid nodes, zero outside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldGrid {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarFieldGrid {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.node_count();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> f64) -> Self {
        let mut field = Self::zeros(grid);
        for l in 0..field.values.len() {
            let idx = field.grid.node_unlin(l);
            field.values[l] = f(field.grid.node_pos(idx));
        }
        field
    }

    #[inline]
    pub fn at(&self, i: [usize; 3]) -> f64 {
        self.values[self.grid.node_lin(i)]
    }

    /// Clamp to the admissible cone: negatives to zero, then snap values
    /// below the clip threshold to exactly zero.
    pub fn project_nonneg(&mut self) {
        for v in &mut self.values {
            if *v < ETA_CLIP {
                *v = 0.0;
            }
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Multilinear interpolation with the zero-outside convention.
    pub fn value_at(&self, x: Vec3) -> f64 {
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..g.dim {
            let t = (x[d] - g.origin[d]) / g.h;
            if t < 0.0 || t > g.dims[d] as f64 {
                return 0.0;
            }
            let i = (t.floor() as usize).min(g.dims[d] - 1);
            base[d] = i;
            frac[d] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << g.dim) {
            let mut idx = base;
            let mut w = 1.0;
            for d in 0..g.dim {
                if corner >> d & 1 == 1 {
                    idx[d] += 1;
                    w *= frac[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            acc += w * self.values[g.node_lin(idx)];
        }
        acc
    }

    /// Nodes where the field is positive, as linear indices.
    pub fn support_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(l, _)| l)
    }

    /// Index bounding box of the support, None when empty.
    pub fn support_bbox(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for l in 0..self.values.len() {
            if self.values[l] > 0.0 {
                any = true;
                let idx = self.grid.node_unlin(l);
                for d in 0..3 {
                    lo[d] = lo[d].min(idx[d]);
                    hi[d] = hi[d].max(idx[d]);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Halve the cell size over the same box, filling new nodes by
    /// multilinear interpolation (shared nodes copy exactly).
    pub fn refine_half(&self) -> ScalarFieldGrid {
        let g = &self.grid;
        let mut dims = [1usize; 3];
        for d in 0..g.dim {
            dims[d] = g.dims[d] * 2;
        }
        let fine = Grid::new(g.dim, g.h / 2.0, g.origin, &dims[..g.dim]);
        ScalarFieldGrid::from_fn(fine, |x| self.value_at(x))
    }

    /// Re-embed the field into a larger concentric box with the same h.
    /// Node positions are preserved exactly (the origin shifts by whole
    /// cells), so values copy without interpolation.
    pub fn embed_in(&self, target: Grid) -> ScalarFieldGrid {
        assert!((target.h - self.grid.h).abs() < 1e-15);
        let mut out = ScalarFieldGrid::zeros(target);
        let shift: Vec<i64> = (0..3)
            .map(|d| ((self.grid.origin[d] - out.grid.origin[d]) / self.grid.h).round() as i64)
            .collect();
        for l in 0..self.values.len() {
            if self.values[l] == 0.0 {
                continue;
            }
            let idx = self.grid.node_unlin(l);
            let mut tgt = [0usize; 3];
            let mut ok = true;
            for d in 0..out.grid.dim {
                let t = idx[d] as i64 + shift[d];
                if t < 0 || t >= out.grid.nodes_per_axis(d) as i64 {
                    ok = false;
                    break;
                }
                tgt[d] = t as usize;
            }
            if ok {
                let tl = out.grid.node_lin(tgt);
                out.values[tl] = self.values[l];
            }
        }
        out
    }
}

/// Cell-centered vector field (gradients, variation test fields).
#[derive(Debug, Clone)]
pub struct VectorFieldGrid {
    pub grid: Grid,
    pub comps: Vec<Vec3>,
}

impl VectorFieldGrid {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.cell_count();
        Self {
            grid,
            comps: vec![[0.0; 3]; n],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> Vec3) -> Self {
        let mut out = Self::zeros(grid);
        for c in out.grid.cells().collect::<Vec<_>>() {
            let l = out.grid.cell_lin(c);
            out.comps[l] = f(out.grid.cell_center(c));
        }
        out
    }

    #[inline]
    pub fn at(&self, c: [usize; 3]) -> Vec3 {
        self.comps[self.grid.cell_lin(c)]
    }
}

/// Mode for the volume term of the energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolumeMode {
    Sharp,
    Smoothed(f64),
}

/// The energy split into its three contributions. `total` is always the sum
/// `dirichlet + potential + volume_term` evaluated in that order.
#[derive(Debug, Clone, Copy)]
pub struct EnergyBreakdown {
    /// ∫ ∇u A ∇uᵀ
    pub dirichlet: f64,
    /// −2 ∫ F(x, u)
    pub potential: f64,
    /// Λ · Vol_q({u > 0}), sharp or smoothed
    pub volume_term: f64,
    pub total: f64,
    /// Sharp q-volume of the support regardless of mode.
    pub vol_q_raw: f64,
    /// Smoothing width when the smoothed indicator was used.
    pub smoothed_delta: Option<f64>,
}

impl EnergyBreakdown {
    /// Energy without the multiplier term.
    pub fn base_energy(&self) -> f64 {
        self.dirichlet + self.potential
    }
}
