//! Uniform node grids on rectangles and disks, vector fields on them and the
//! discrete operators used throughout.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Inside,
    Boundary,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Domain {
    Rectangle { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
}

impl Domain {
    pub fn unit_square() -> Self {
        Domain::Rectangle { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 }
    }

    pub fn unit_disk() -> Self {
        Domain::Disk { cx: 0.0, cy: 0.0, r: 1.0 }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Domain::Rectangle { x0, y0, x1, y1 } => p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1,
            Domain::Disk { cx, cy, r } => (p[0] - cx).hypot(p[1] - cy) <= r,
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match *self {
            Domain::Rectangle { x0, y0, x1, y1 } => [0.5 * (x0 + x1), 0.5 * (y0 + y1)],
            Domain::Disk { cx, cy, .. } => [cx, cy],
        }
    }

    /// Smaller side of a rectangle, diameter of a disk.
    pub fn width(&self) -> f64 {
        match *self {
            Domain::Rectangle { x0, y0, x1, y1 } => (x1 - x0).min(y1 - y0),
            Domain::Disk { r, .. } => 2.0 * r,
        }
    }

    /// Distance from `p` to the complement of the domain (`<= 0` outside).
    pub fn inner_distance(&self, p: [f64; 2]) -> f64 {
        match *self {
            Domain::Rectangle { x0, y0, x1, y1 } => (p[0] - x0).min(x1 - p[0]).min(p[1] - y0).min(y1 - p[1]),
            Domain::Disk { cx, cy, r } => r - (p[0] - cx).hypot(p[1] - cy),
        }
    }

    pub fn contains_disk(&self, d: &DiskSpec) -> bool {
        self.inner_distance(d.center) >= d.radius * (1.0 - 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskSpec {
    pub center: [f64; 2],
    pub radius: f64,
}

impl DiskSpec {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        DiskSpec { center, radius }
    }

    pub fn unit() -> Self {
        DiskSpec { center: [0.0, 0.0], radius: 1.0 }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1]) <= self.radius
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DiskSpec { center: self.center, radius: self.radius * factor }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub domain: Domain,
    mask: Vec<NodeKind>,
}

impl Grid {
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !(x1 > x0) || !(y1 > y0) {
            return Err(Error::InvalidGrid(format!("bad rectangle [{x0},{x1}]x[{y0},{y1}] h={h}")));
        }
        let nx = ((x1 - x0) / h).round() as usize;
        let ny = ((y1 - y0) / h).round() as usize;
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidGrid(format!("need at least 8 cells per side, got {nx}x{ny}")));
        }
        let h = (x1 - x0) / nx as f64;
        if ((y1 - y0) / h - ny as f64).abs() > 1e-6 {
            return Err(Error::InvalidGrid("rectangle sides are not commensurate with h".into()));
        }
        let mut mask = vec![NodeKind::Inside; (nx + 1) * (ny + 1)];
        for j in 0..=ny {
            for i in 0..=nx {
                if i == 0 || j == 0 || i == nx || j == ny {
                    mask[j * (nx + 1) + i] = NodeKind::Boundary;
                }
            }
        }
        Ok(Grid { origin: [x0, y0], h, nx, ny, domain: Domain::Rectangle { x0, y0, x1, y1 }, mask })
    }

    /// Covering square grid with the center on a node and two spare cells
    /// beyond the circle. Non-interior nodes closer than `r + 1.5 h` form the
    /// boundary layer, so every cell meeting the closed disk has all four
    /// corners in use.
    pub fn disk(center: [f64; 2], r: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !(r > 0.0) {
            return Err(Error::InvalidGrid(format!("bad disk r={r} h={h}")));
        }
        let n = (r / h - 1e-9).ceil() as usize + 2;
        let nx = 2 * n;
        if nx < 8 {
            return Err(Error::InvalidGrid(format!("disk grid too coarse: {nx} cells")));
        }
        let origin = [center[0] - n as f64 * h, center[1] - n as f64 * h];
        let m = nx + 1;
        let inside: Vec<bool> = (0..m * m)
            .map(|idx| {
                let (i, j) = (idx % m, idx / m);
                let x = origin[0] + i as f64 * h - center[0];
                let y = origin[1] + j as f64 * h - center[1];
                x.hypot(y) < r * (1.0 - 1e-12)
            })
            .collect();
        let mut mask = vec![NodeKind::Outside; m * m];
        for j in 0..m {
            for i in 0..m {
                let idx = j * m + i;
                if inside[idx] {
                    mask[idx] = NodeKind::Inside;
                } else {
                    let x = origin[0] + i as f64 * h - center[0];
                    let y = origin[1] + j as f64 * h - center[1];
                    if x.hypot(y) < r + 1.5 * h {
                        mask[idx] = NodeKind::Boundary;
                    }
                }
            }
        }
        Ok(Grid { origin, h, nx, ny: nx, domain: Domain::Disk { cx: center[0], cy: center[1], r }, mask })
    }

    pub fn for_domain(domain: &Domain, h: f64) -> Result<Self> {
        match *domain {
            Domain::Rectangle { x0, y0, x1, y1 } => Grid::rectangle(x0, y0, x1, y1, h),
            Domain::Disk { cx, cy, r } => Grid::disk([cx, cy], r, h),
        }
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn stride(&self) -> usize {
        self.nx + 1
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % (self.nx + 1), idx / (self.nx + 1))
    }

    pub fn pos(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.ij(idx);
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    pub fn kind(&self, idx: usize) -> NodeKind {
        self.mask[idx]
    }

    pub fn mask(&self) -> &[NodeKind] {
        &self.mask
    }

    pub fn is_used(&self, idx: usize) -> bool {
        self.mask[idx] != NodeKind::Outside
    }

    /// The axis neighbours that exist in the array.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.ij(idx);
        let s = self.stride();
        [
            (i > 0).then(|| idx - 1),
            (i < self.nx).then(|| idx + 1),
            (j > 0).then(|| idx - s),
            (j < self.ny).then(|| idx + s),
        ]
        .into_iter()
        .flatten()
    }

    /// Nearest node index to `p` (clamped to the array).
    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let i = ((p[0] - self.origin[0]) / self.h).round().clamp(0.0, self.nx as f64) as usize;
        let j = ((p[1] - self.origin[1]) / self.h).round().clamp(0.0, self.ny as f64) as usize;
        self.index(i, j)
    }

    /// Bilinear interpolation of a node array with `stride` values per node.
    /// Returns `false` when a corner of the containing cell is outside.
    pub fn interpolate(&self, data: &[f64], stride: usize, p: [f64; 2], out: &mut [f64]) -> bool {
        let fx = (p[0] - self.origin[0]) / self.h;
        let fy = (p[1] - self.origin[1]) / self.h;
        let tol = 1e-9;
        if fx < -tol || fy < -tol || fx > self.nx as f64 + tol || fy > self.ny as f64 + tol {
            return false;
        }
        let i = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        let (a, b) = ((fx - i as f64).clamp(0.0, 1.0), (fy - j as f64).clamp(0.0, 1.0));
        let corners = [
            (self.index(i, j), (1.0 - a) * (1.0 - b)),
            (self.index(i + 1, j), a * (1.0 - b)),
            (self.index(i, j + 1), (1.0 - a) * b),
            (self.index(i + 1, j + 1), a * b),
        ];
        for &(n, w) in &corners {
            if w > 0.0 && !self.is_used(n) {
                return false;
            }
        }
        for (c, o) in out.iter_mut().enumerate().take(stride) {
            *o = corners.iter().filter(|(_, w)| *w > 0.0).map(|&(n, w)| w * data[n * stride + c]).sum();
        }
        true
    }

    /// Per-node integration weights `h^2 x coverage` of `region` within the
    /// domain, coverage sampled at 2x2 points per cell.
    pub fn region_weights(&self, region: &Region) -> Result<Vec<f64>> {
        match region {
            Region::Disk(d) => {
                if !self.domain.contains_disk(d) {
                    return Err(Error::RegionOutsideDomain);
                }
            }
            Region::Annulus { center, r_out, .. } => {
                if !self.domain.contains_disk(&DiskSpec::new(*center, *r_out)) {
                    return Err(Error::RegionOutsideDomain);
                }
            }
            Region::Mask(m) | Region::Weights(m) if m.len() != self.n_nodes() => {
                return Err(Error::GridMismatch(format!("mask has {} nodes, grid {}", m.len(), self.n_nodes())));
            }
            _ => {}
        }
        let h = self.h;
        let offs = [-0.25 * h, 0.25 * h];
        Ok(par::map(self.n_nodes(), |idx| {
            if !self.is_used(idx) {
                return 0.0;
            }
            let base = match region {
                Region::Mask(m) | Region::Weights(m) => m[idx],
                _ => 1.0,
            };
            if base == 0.0 {
                return 0.0;
            }
            let p = self.pos(idx);
            let mut count = 0;
            for dx in offs {
                for dy in offs {
                    let q = [p[0] + dx, p[1] + dy];
                    if self.domain.contains(q) && region.contains(q) {
                        count += 1;
                    }
                }
            }
            base * h * h * count as f64 / 4.0
        }))
    }

    /// Boolean node mask of nodes whose position lies in `d`.
    pub fn disk_node_mask(&self, d: &DiskSpec) -> Vec<bool> {
        (0..self.n_nodes()).map(|idx| self.is_used(idx) && d.contains(self.pos(idx))).collect()
    }

    /// Node indices of used nodes whose position lies in `d`, scanning only
    /// the bounding box.
    pub fn nodes_in_disk(&self, d: &DiskSpec) -> Vec<usize> {
        let h = self.h;
        let i0 = (((d.center[0] - d.radius - self.origin[0]) / h).floor().max(0.0)) as usize;
        let i1 = (((d.center[0] + d.radius - self.origin[0]) / h).ceil().max(0.0) as usize).min(self.nx);
        let j0 = (((d.center[1] - d.radius - self.origin[1]) / h).floor().max(0.0)) as usize;
        let j1 = (((d.center[1] + d.radius - self.origin[1]) / h).ceil().max(0.0) as usize).min(self.ny);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let idx = self.index(i, j);
                if self.is_used(idx) && d.contains(self.pos(idx)) {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// Sparse form of `region_weights(&Region::Disk(d))` over the bounding box
    /// of `d`, without the containment check.
    pub fn disk_weights(&self, d: &DiskSpec) -> Vec<(usize, f64)> {
        let h = self.h;
        let offs = [-0.25 * h, 0.25 * h];
        let grown = DiskSpec::new(d.center, d.radius + h);
        self.nodes_in_disk(&grown)
            .into_iter()
            .filter_map(|idx| {
                let p = self.pos(idx);
                let mut count = 0;
                for dx in offs {
                    for dy in offs {
                        let q = [p[0] + dx, p[1] + dy];
                        if self.domain.contains(q) && d.contains(q) {
                            count += 1;
                        }
                    }
                }
                (count > 0).then(|| (idx, h * h * count as f64 / 4.0))
            })
            .collect()
    }
}

/// Integration region for energy-type integrals.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Domain,
    Disk(DiskSpec),
    Annulus { center: [f64; 2], r_in: f64, r_out: f64 },
    /// Node mask (1 = in the region).
    Mask(Vec<f64>),
    /// Arbitrary non-negative node weights multiplying the cell coverage.
    Weights(Vec<f64>),
}

impl Region {
    pub fn from_mask(mask: &[bool]) -> Self {
        Region::Mask(mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Region::Domain | Region::Mask(_) | Region::Weights(_) => true,
            Region::Disk(d) => d.contains(p),
            Region::Annulus { center, r_in, r_out } => {
                let r = (p[0] - center[0]).hypot(p[1] - center[1]);
                r > *r_in && r <= *r_out
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Region::Domain => "domain".into(),
            Region::Disk(d) => format!("disk({},{};{})", d.center[0], d.center[1], d.radius),
            Region::Annulus { center, r_in, r_out } => format!("annulus({},{};{},{})", center[0], center[1], r_in, r_out),
            Region::Mask(_) => "mask".into(),
            Region::Weights(_) => "weights".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    /// Values at boundary-layer nodes are pinned.
    Dirichlet,
    /// Homogeneous Neumann: mirror ghosts on rectangles, zero flux on disks.
    Neumann,
}

#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub k: usize,
    /// Node-major: `values[idx * k + c]`.
    pub values: Vec<f64>,
    pub epsilon: f64,
    pub bc: BoundaryCondition,
}

impl Field {
    pub fn zeros(grid: Arc<Grid>, k: usize, epsilon: f64, bc: BoundaryCondition) -> Self {
        let n = grid.n_nodes() * k;
        Field { grid, k, values: vec![0.0; n], epsilon, bc }
    }

    pub fn from_fn<F>(grid: Arc<Grid>, k: usize, epsilon: f64, bc: BoundaryCondition, f: F) -> Self
    where
        F: Fn([f64; 2], &mut [f64]) + Sync,
    {
        let rows: Vec<Vec<f64>> = par::map(grid.n_nodes(), |idx| {
            let mut v = vec![0.0; k];
            if grid.is_used(idx) {
                f(grid.pos(idx), &mut v);
            }
            v
        });
        let values = rows.into_iter().flatten().collect();
        Field { grid, k, values, epsilon, bc }
    }

    pub fn constant(grid: Arc<Grid>, value: &[f64], epsilon: f64, bc: BoundaryCondition) -> Self {
        Field::from_fn(grid, value.len(), epsilon, bc, |_, v| v.copy_from_slice(value))
    }

    pub fn at(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.k..(idx + 1) * self.k]
    }

    pub fn at_mut(&mut self, idx: usize) -> &mut [f64] {
        let k = self.k;
        &mut self.values[idx * k..(idx + 1) * k]
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn sample(&self, p: [f64; 2]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.k];
        self.grid.interpolate(&self.values, self.k, p, &mut out).then_some(out)
    }

    pub fn sup_norm(&self) -> f64 {
        let k = self.k;
        par::max(self.grid.n_nodes(), |idx| {
            if self.grid.is_used(idx) {
                self.values[idx * k..(idx + 1) * k].iter().map(|t| t * t).sum::<f64>().sqrt()
            } else {
                0.0
            }
        })
        .max(0.0)
    }

    pub fn is_finite(&self) -> bool {
        (0..self.grid.n_nodes()).all(|idx| !self.grid.is_used(idx) || self.at(idx).iter().all(|t| t.is_finite()))
    }

    /// Nodes that evolve under the equation.
    pub fn is_active(&self, idx: usize) -> bool {
        match self.bc {
            BoundaryCondition::Dirichlet => self.grid.kind(idx) == NodeKind::Inside,
            BoundaryCondition::Neumann => self.grid.is_used(idx),
        }
    }

    pub fn stencil(&self) -> Stencil {
        Stencil::new(&self.grid, self.bc)
    }
}

/// Weighted graph form of the 5-point Laplacian:
/// `(Lap u)_i = (1 / (w_i h^2)) sum_links lw (u_n - u_i)` over active nodes.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub active: Vec<bool>,
    pub w: Vec<f64>,
    /// Link `idx <-> idx + 1`.
    pub wx: Vec<f64>,
    /// Link `idx <-> idx + stride`.
    pub wy: Vec<f64>,
    pub stride: usize,
    pub h: f64,
}

impl Stencil {
    pub fn new(grid: &Grid, bc: BoundaryCondition) -> Self {
        let n = grid.n_nodes();
        let s = grid.stride();
        let rect = matches!(grid.domain, Domain::Rectangle { .. });
        let active: Vec<bool> = (0..n)
            .map(|idx| match bc {
                BoundaryCondition::Dirichlet => grid.kind(idx) == NodeKind::Inside,
                BoundaryCondition::Neumann => grid.is_used(idx),
            })
            .collect();
        let mut w = vec![1.0; n];
        let mut wx = vec![0.0; n];
        let mut wy = vec![0.0; n];
        let both_bd = |a: usize, b: usize| grid.kind(a) == NodeKind::Boundary && grid.kind(b) == NodeKind::Boundary;
        for idx in 0..n {
            let (i, j) = grid.ij(idx);
            if !grid.is_used(idx) {
                w[idx] = 0.0;
                continue;
            }
            if bc == BoundaryCondition::Neumann && rect {
                let fx = if i == 0 || i == grid.nx { 0.5 } else { 1.0 };
                let fy = if j == 0 || j == grid.ny { 0.5 } else { 1.0 };
                w[idx] = fx * fy;
            }
            if i < grid.nx && grid.is_used(idx + 1) {
                wx[idx] = if bc == BoundaryCondition::Neumann && rect && both_bd(idx, idx + 1) { 0.5 } else { 1.0 };
            }
            if j < grid.ny && grid.is_used(idx + s) {
                wy[idx] = if bc == BoundaryCondition::Neumann && rect && both_bd(idx, idx + s) { 0.5 } else { 1.0 };
            }
        }
        Stencil { active, w, wx, wy, stride: s, h: grid.h }
    }

    /// `sum_links lw (u_n - u_i)` for one component-strided array.
    #[inline]
    pub fn link_sum(&self, u: &[f64], k: usize, idx: usize, c: usize, out_diag: &mut f64) -> f64 {
        let s = self.stride;
        let ui = u[idx * k + c];
        let mut acc = 0.0;
        let mut diag = 0.0;
        let mut add = |n: usize, lw: f64| {
            acc += lw * (u[n * k + c] - ui);
            diag += lw;
        };
        if self.wx[idx] > 0.0 {
            add(idx + 1, self.wx[idx]);
        }
        if idx >= 1 && self.wx[idx - 1] > 0.0 {
            add(idx - 1, self.wx[idx - 1]);
        }
        if self.wy[idx] > 0.0 {
            add(idx + s, self.wy[idx]);
        }
        if idx >= s && self.wy[idx - s] > 0.0 {
            add(idx - s, self.wy[idx - s]);
        }
        *out_diag = diag;
        acc
    }

    /// Discrete Laplacian at active nodes (zero elsewhere).
    pub fn apply(&self, u: &[f64], k: usize) -> Vec<f64> {
        let n = self.active.len();
        let inv = 1.0 / (self.h * self.h);
        let rows: Vec<Vec<f64>> = par::map(n, |idx| {
            let mut r = vec![0.0; k];
            if self.active[idx] {
                let mut d = 0.0;
                for (c, rc) in r.iter_mut().enumerate() {
                    *rc = self.link_sum(u, k, idx, c, &mut d) * inv / self.w[idx];
                }
            }
            r
        });
        rows.into_iter().flatten().collect()
    }

    /// Discrete Dirichlet energy `sum_links lw |u_n - u_i|^2 / 2` (already
    /// multiplied by `h^2 / h^2`).
    pub fn dirichlet_energy(&self, u: &[f64], k: usize) -> f64 {
        let s = self.stride;
        par::sum(self.active.len(), |idx| {
            let mut e = 0.0;
            for c in 0..k {
                if self.wx[idx] > 0.0 {
                    let d = u[(idx + 1) * k + c] - u[idx * k + c];
                    e += self.wx[idx] * d * d;
                }
                if self.wy[idx] > 0.0 {
                    let d = u[(idx + s) * k + c] - u[idx * k + c];
                    e += self.wy[idx] * d * d;
                }
            }
            0.5 * e
        })
    }
}

pub fn laplacian(f: &Field) -> Vec<f64> {
    f.stencil().apply(&f.values, f.k)
}

/// Per-node gradient: `g[idx * 2k + d * k + c] = d u_c / d x_d`. Central
/// differences where both axis neighbours are used, one-sided otherwise.
pub fn gradient(f: &Field) -> Vec<f64> {
    let g = &*f.grid;
    let k = f.k;
    let s = g.stride();
    let h = g.h;
    let rows: Vec<Vec<f64>> = par::map(g.n_nodes(), |idx| {
        let mut r = vec![0.0; 2 * k];
        if !g.is_used(idx) {
            return r;
        }
        let (i, j) = g.ij(idx);
        let axes = [
            ((i > 0 && g.is_used(idx - 1)).then(|| idx - 1), (i < g.nx && g.is_used(idx + 1)).then(|| idx + 1)),
            ((j > 0 && g.is_used(idx - s)).then(|| idx - s), (j < g.ny && g.is_used(idx + s)).then(|| idx + s)),
        ];
        for (d, (lo, hi)) in axes.iter().enumerate() {
            for c in 0..k {
                r[d * k + c] = match (lo, hi) {
                    (Some(a), Some(b)) => (f.values[b * k + c] - f.values[a * k + c]) / (2.0 * h),
                    (None, Some(b)) => (f.values[b * k + c] - f.values[idx * k + c]) / h,
                    (Some(a), None) => (f.values[idx * k + c] - f.values[a * k + c]) / h,
                    (None, None) => 0.0,
                };
            }
        }
        r
    });
    rows.into_iter().flatten().collect()
}

pub fn n_theta(r: f64, h: f64) -> usize {
    256usize.max((2.0 * PI * r / h).ceil() as usize)
}

#[derive(Debug, Clone)]
pub struct CircleSamples {
    pub disk: DiskSpec,
    pub k: usize,
    pub theta: Vec<f64>,
    /// `n x k` values.
    pub values: Vec<f64>,
    /// Derivative along the unit tangent `(-sin, cos)`.
    pub d_tau: Vec<f64>,
    /// Derivative along the outward normal.
    pub d_r: Vec<f64>,
    /// Arclength weight per sample.
    pub ds: f64,
}

impl CircleSamples {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn value(&self, m: usize) -> &[f64] {
        &self.values[m * self.k..(m + 1) * self.k]
    }

    pub fn point(&self, m: usize) -> [f64; 2] {
        let t = self.theta[m];
        [self.disk.center[0] + self.disk.radius * t.cos(), self.disk.center[1] + self.disk.radius * t.sin()]
    }

    /// `sum_m f(m) ds`.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.len()).map(f).sum::<f64>() * self.ds
    }

    pub fn tau_sq(&self, m: usize) -> f64 {
        self.d_tau[m * self.k..(m + 1) * self.k].iter().map(|t| t * t).sum()
    }

    pub fn r_sq(&self, m: usize) -> f64 {
        self.d_r[m * self.k..(m + 1) * self.k].iter().map(|t| t * t).sum()
    }
}

pub fn restrict_circle(f: &Field, d: &DiskSpec, n: usize) -> Result<CircleSamples> {
    let grad = gradient(f);
    restrict_circle_with(f, &grad, d, n)
}

/// As [`restrict_circle`] with a precomputed [`gradient`].
pub fn restrict_circle_with(f: &Field, grad: &[f64], d: &DiskSpec, n: usize) -> Result<CircleSamples> {
    let k = f.k;
    let mut values = vec![0.0; n * k];
    let mut d_tau = vec![0.0; n * k];
    let mut d_r = vec![0.0; n * k];
    let mut theta = Vec::with_capacity(n);
    let mut gbuf = vec![0.0; 2 * k];
    for m in 0..n {
        let t = 2.0 * PI * m as f64 / n as f64;
        theta.push(t);
        let (c, s) = (t.cos(), t.sin());
        let p = [d.center[0] + d.radius * c, d.center[1] + d.radius * s];
        if !f.grid.interpolate(&f.values, k, p, &mut values[m * k..(m + 1) * k]) || !f.grid.interpolate(grad, 2 * k, p, &mut gbuf)
        {
            return Err(Error::CircleOutsideDomain);
        }
        for comp in 0..k {
            let (gx, gy) = (gbuf[comp], gbuf[k + comp]);
            d_tau[m * k + comp] = -s * gx + c * gy;
            d_r[m * k + comp] = c * gx + s * gy;
        }
    }
    Ok(CircleSamples { disk: *d, k, theta, values, d_tau, d_r, ds: 2.0 * PI * d.radius / n as f64 })
}

/// Resample `src` onto `grid` through `map` (new position -> source
/// position). Nodes whose image cannot be interpolated fall back to the
/// nearest used source node when `lenient`, otherwise fail.
pub fn resample<M>(src: &Field, grid: Arc<Grid>, epsilon: f64, bc: BoundaryCondition, map: M, lenient: bool) -> Result<Field>
where
    M: Fn([f64; 2]) -> [f64; 2] + Sync,
{
    let k = src.k;
    let sg = &*src.grid;
    let rows: Vec<Option<Vec<f64>>> = par::map(grid.n_nodes(), |idx| {
        let mut v = vec![0.0; k];
        if !grid.is_used(idx) {
            return Some(v);
        }
        let q = map(grid.pos(idx));
        if sg.interpolate(&src.values, k, q, &mut v) {
            return Some(v);
        }
        if !lenient {
            return None;
        }
        let near = sg.nearest_node(q);
        let best = if sg.is_used(near) {
            near
        } else {
            let mut best = (usize::MAX, f64::INFINITY);
            for n in 0..sg.n_nodes() {
                if sg.is_used(n) {
                    let p = sg.pos(n);
                    let d = (p[0] - q[0]).hypot(p[1] - q[1]);
                    if d < best.1 {
                        best = (n, d);
                    }
                }
            }
            best.0
        };
        v.copy_from_slice(src.at(best));
        Some(v)
    });
    let mut values = Vec::with_capacity(grid.n_nodes() * k);
    for r in rows {
        values.extend(r.ok_or(Error::DiskOutsideDomain)?);
    }
    Ok(Field { grid, k, values, epsilon, bc })
}

/// `u~(y) = u(x0 + r y)` on the unit disk with `eps~ = eps / r`; the new
/// spacing is `h / r` so the relative resolution `h / eps` is unchanged.
pub fn rescale_to_unit(f: &Field, d: &DiskSpec) -> Result<Field> {
    if !f.grid.domain.contains_disk(d) {
        return Err(Error::DiskOutsideDomain);
    }
    let grid = Arc::new(Grid::disk([0.0, 0.0], 1.0, f.grid.h / d.radius)?);
    let (c, r) = (d.center, d.radius);
    resample(f, grid, f.epsilon / d.radius, BoundaryCondition::Dirichlet, |y| [c[0] + r * y[0], c[1] + r * y[1]], false)
}

/// Inverse of [`rescale_to_unit`]: values of `unit` mapped back onto the
/// nodes of `template` lying in `d`; other nodes keep the template values.
pub fn rescale_from_unit(unit: &Field, d: &DiskSpec, template: &Field) -> Result<Field> {
    let mut out = template.clone();
    out.epsilon = unit.epsilon * d.radius;
    let k = template.k;
    for idx in template.grid.nodes_in_disk(d) {
        let p = template.grid.pos(idx);
        let y = [(p[0] - d.center[0]) / d.radius, (p[1] - d.center[1]) / d.radius];
        if !unit.grid.interpolate(&unit.values, k, y, &mut out.values[idx * k..(idx + 1) * k]) {
            return Err(Error::DiskOutsideDomain);
        }
    }
    Ok(out)
}
