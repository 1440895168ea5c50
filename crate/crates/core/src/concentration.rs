//! Energy measures of a solution family and the objects extracted from them
//! as `eps -> 0`: lower densities, the concentration set, its length and
//! connectivity, tangent cones and limiting Hopf measures.

use std::collections::BTreeSet;
use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{densities_with, hopf_from_gradient};
use crate::grid::{gradient, Domain, Field, Grid, Region};
use crate::par;
use crate::potential::Potential;
use crate::raster::{branch_points, distance_transform_sq, label_components, thin};
use crate::solver::SolveResult;

/// Radius of the PCA neighbourhood, in grid spacings.
pub const PCA_RADIUS_CELLS: f64 = 8.0;
/// Minimum eigenvalue ratio for a regular point.
pub const MIN_ANISOTROPY: f64 = 4.0;
/// Largest outside-cone fraction accepted at the smallest radius.
pub const CONE_FRACTION_TOL: f64 = 0.05;
/// Allowed frame mass as a fraction of the mass in the square.
pub const FRAME_TOL: f64 = 0.02;
/// Smoothing half-width of the convergence indicator, in units of the
/// larger of the two `eps`.
pub const INDICATOR_SCALE_EPS: f64 = 4.0;
/// Clearing-transfer disks have radius at least this multiple of the
/// smallest density radius.
pub const TRANSFER_MIN_RATIO: f64 = 2.5;
/// Spurs shorter than this many cells, or than the smallest density radius,
/// are pruned from skeletons.
pub const SPUR_CELLS: usize = 4;

/// Energy measure `e_eps dx` of one family member as per-node masses.
#[derive(Debug, Clone)]
pub struct MeasureEntry {
    pub epsilon: f64,
    pub grid: Arc<Grid>,
    pub mass: Vec<f64>,
    pub total: f64,
}

/// Energy measures of a family, ordered by decreasing `eps`.
#[derive(Debug, Clone)]
pub struct MeasureStack {
    pub entries: Vec<MeasureEntry>,
    pub m0: f64,
}

fn same_domain(a: &Domain, b: &Domain) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!("domains differ: {a:?} vs {b:?}")));
    }
    Ok(())
}

fn sorted_by_eps<'a>(fields: &[&'a Field]) -> Result<Vec<&'a Field>> {
    let first = fields.first().ok_or(Error::InsufficientFamily(0))?;
    for f in fields {
        same_domain(&first.grid.domain, &f.grid.domain)?;
    }
    let mut v = fields.to_vec();
    v.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    Ok(v)
}

pub fn measure_stack(fields: &[&Field], p: &Potential) -> Result<MeasureStack> {
    let entries: Vec<MeasureEntry> = sorted_by_eps(fields)?
        .into_iter()
        .map(|f| {
            let d = densities_with(f, p, &gradient(f));
            let w = f.grid.region_weights(&Region::Domain)?;
            let mass: Vec<f64> = d.e.iter().zip(&w).map(|(e, w)| e * w).collect();
            let total = par::sum(mass.len(), |i| mass[i]);
            Ok(MeasureEntry { epsilon: f.epsilon, grid: f.grid.clone(), mass, total })
        })
        .collect::<Result<_>>()?;
    let m0 = entries.iter().map(|e| e.total).fold(0.0, f64::max);
    Ok(MeasureStack { entries, m0 })
}

pub fn build_measure_stack(family: &[SolveResult], p: &Potential) -> Result<MeasureStack> {
    let fields: Vec<&Field> = family.iter().map(|r| &r.field).collect();
    measure_stack(&fields, p)
}

impl MeasureStack {
    /// Smallest-`eps` entry.
    pub fn last(&self) -> &MeasureEntry {
        self.entries.last().expect("stack is never empty")
    }

    pub fn h_max(&self) -> f64 {
        self.entries.iter().map(|e| e.grid.h).fold(0.0, f64::max)
    }

    pub fn eps_min(&self) -> f64 {
        self.last().epsilon
    }

    /// Smallest admissible radius `4 max(h_max, eps_min)`.
    pub fn radius_floor(&self) -> f64 {
        4.0 * self.h_max().max(self.eps_min())
    }

    /// Dyadic radii `2^-j` in `[radius_floor, r_max]`, decreasing. Falls back
    /// to the floor alone when the window holds no dyadic radius.
    pub fn dyadic_radii(&self, r_max: f64) -> Vec<f64> {
        let floor = self.radius_floor();
        let mut out: Vec<f64> = (0..60).map(|j| 0.5f64.powi(j)).filter(|&r| r >= floor * (1.0 - 1e-12) && r <= r_max).collect();
        if out.is_empty() {
            out.push(floor);
        }
        out
    }

    /// Default window: dyadic radii up to half the domain width.
    pub fn default_radii(&self) -> Vec<f64> {
        self.dyadic_radii(0.5 * self.last().grid.domain.width())
    }
}

/// Disk sums over node masses by per-row prefix sums. Node inclusion is by
/// position; `area` sums the integration weights of the same nodes.
struct DiskSummer<'a> {
    grid: &'a Grid,
    mass: Vec<f64>,
    area: Vec<f64>,
}

impl<'a> DiskSummer<'a> {
    fn new(grid: &'a Grid, mass: &[f64]) -> Result<Self> {
        let w = grid.region_weights(&Region::Domain)?;
        let (sx, sy) = (grid.nx + 1, grid.ny + 1);
        let mut pm = vec![0.0; (sx + 1) * sy];
        let mut pa = vec![0.0; (sx + 1) * sy];
        for j in 0..sy {
            for i in 0..sx {
                let idx = grid.index(i, j);
                pm[j * (sx + 1) + i + 1] = pm[j * (sx + 1) + i] + mass[idx];
                pa[j * (sx + 1) + i + 1] = pa[j * (sx + 1) + i] + w[idx];
            }
        }
        Ok(DiskSummer { grid, mass: pm, area: pa })
    }

    /// `(mass, area)` inside the closed disk `D(c, r)`.
    fn sum(&self, c: [f64; 2], r: f64) -> (f64, f64) {
        let g = self.grid;
        let (h, o) = (g.h, g.origin);
        let sx = g.nx + 1;
        let tol = 1e-9;
        let j0 = ((c[1] - r - o[1]) / h - tol).ceil().max(0.0) as usize;
        let j1 = ((c[1] + r - o[1]) / h + tol).floor().min(g.ny as f64);
        if j1 < 0.0 {
            return (0.0, 0.0);
        }
        let (mut m, mut a) = (0.0, 0.0);
        for j in j0..=j1 as usize {
            let dy = o[1] + j as f64 * h - c[1];
            let w2 = r * r - dy * dy;
            if w2 < 0.0 {
                continue;
            }
            let w = w2.sqrt();
            let i0 = ((c[0] - w - o[0]) / h - tol).ceil().max(0.0);
            let i1 = ((c[0] + w - o[0]) / h + tol).floor().min(g.nx as f64);
            if i1 < i0 {
                continue;
            }
            let row = j * (sx + 1);
            let (lo, hi) = (row + i0 as usize, row + i1 as usize + 1);
            m += self.mass[hi] - self.mass[lo];
            a += self.area[hi] - self.area[lo];
        }
        (m, a)
    }

    /// Boundary-corrected density `mass / (r |D(c, r) /\ Omega| / |D(c, r)|)`.
    fn ratio(&self, c: [f64; 2], r: f64) -> Option<f64> {
        let (m, a) = self.sum(c, r);
        (a > 0.0).then(|| m * PI * r / a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub theta: f64,
    /// Radius attaining the minimum.
    pub radius: f64,
    pub radii: Vec<f64>,
}

fn admissible(stack: &MeasureStack, radii: &[f64]) -> Vec<f64> {
    let floor = stack.radius_floor();
    let v: Vec<f64> = radii.iter().copied().filter(|&r| r >= floor * (1.0 - 1e-12)).collect();
    if v.is_empty() {
        vec![floor]
    } else {
        v
    }
}

fn min_ratio(s: &DiskSummer, x0: [f64; 2], radii: &[f64]) -> (f64, f64) {
    radii.iter().filter_map(|&r| s.ratio(x0, r).map(|t| (t, r))).fold((f64::INFINITY, f64::NAN), |a, b| if b.0 < a.0 { b } else { a })
}

/// Lower density estimate at `x0`: minimum over the admissible `radii` of
/// the boundary-corrected last-`eps` disk mass divided by `r`.
pub fn lower_density(stack: &MeasureStack, x0: [f64; 2], radii: &[f64]) -> Result<DensityEstimate> {
    let e = stack.last();
    let s = DiskSummer::new(&e.grid, &e.mass)?;
    let radii = admissible(stack, radii);
    let (theta, radius) = min_ratio(&s, x0, &radii);
    Ok(DensityEstimate { theta: if theta.is_finite() { theta } else { 0.0 }, radius, radii })
}

/// Flag set `{theta >= eta0}` on the last grid, its components, skeleton,
/// lengths and tangents.
#[derive(Debug, Clone)]
pub struct ConcentrationSet {
    pub grid: Arc<Grid>,
    pub eta0: f64,
    pub m0: f64,
    pub radii: Vec<f64>,
    /// Per-node density estimates (0 on unused nodes).
    pub theta: Vec<f64>,
    pub nodes: Vec<bool>,
    /// 8-connected component labels of `nodes` (0 = background).
    pub components: Vec<u32>,
    pub n_components: usize,
    /// Thinned representative of `nodes`, used for geometric estimates.
    pub skeleton: Vec<bool>,
    /// Skeleton polyline length per component, indexed by `label - 1`.
    pub lengths: Vec<f64>,
    /// Unit tangent at regular skeleton nodes.
    pub tangent: Vec<Option<[f64; 2]>>,
    /// Every unflagged node keeps lattice distance >= 1 from the flags.
    pub complement_open: bool,
}

impl ConcentrationSet {
    fn dims(&self) -> (usize, usize) {
        (self.grid.nx + 1, self.grid.ny + 1)
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// `C_H M0` with `C_H = 4 / eta0`.
    pub fn length_bound(&self) -> f64 {
        4.0 * self.m0 / self.eta0
    }

    pub fn is_empty(&self) -> bool {
        !self.nodes.iter().any(|&b| b)
    }

    /// Clusters of skeleton branch points.
    pub fn junctions(&self) -> usize {
        let (sx, sy) = self.dims();
        label_components(&branch_points(&self.skeleton, sx, sy), sx, sy).1
    }

    pub fn summary(&self) -> ConcentrationSummary {
        ConcentrationSummary {
            eta0: self.eta0,
            m0: self.m0,
            radii: self.radii.clone(),
            n_nodes: self.nodes.iter().filter(|&&b| b).count(),
            n_components: self.n_components,
            lengths: self.lengths.clone(),
            total_length: self.total_length(),
            length_bound: self.length_bound(),
            complement_open: self.complement_open,
        }
    }

    /// CSV of flagged nodes: `x,y,theta,component`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("x,y,theta,component\n");
        for (idx, _) in self.nodes.iter().enumerate().filter(|(_, &b)| b) {
            let p = self.grid.pos(idx);
            writeln!(s, "{},{},{},{}", p[0], p[1], self.theta[idx], self.components[idx]).expect("string write");
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSummary {
    pub eta0: f64,
    pub m0: f64,
    pub radii: Vec<f64>,
    pub n_nodes: usize,
    pub n_components: usize,
    pub lengths: Vec<f64>,
    pub total_length: f64,
    pub length_bound: f64,
    pub complement_open: bool,
}

fn neighbours8(sx: usize, sy: usize, c: usize) -> impl Iterator<Item = usize> {
    let (i, j) = ((c % sx) as isize, (c / sx) as isize);
    (-1..=1isize).flat_map(move |dj| {
        (-1..=1isize).filter_map(move |di| {
            let (a, b) = (i + di, j + dj);
            ((di, dj) != (0, 0) && a >= 0 && b >= 0 && a < sx as isize && b < sy as isize).then(|| b as usize * sx + a as usize)
        })
    })
}

/// Polyline length of skeleton cells with label `lab`. Axis links weigh `h`;
/// diagonal links weigh `sqrt(2) h` unless an axis path already joins them.
/// Interior end points are extended by their distance to the unflagged set.
fn skeleton_length(sk: &[bool], labels: &[u32], lab: u32, dt: &[f64], sx: usize, sy: usize, h: f64) -> f64 {
    let on = |i: isize, j: isize| i >= 0 && j >= 0 && (i as usize) < sx && (j as usize) < sy && sk[j as usize * sx + i as usize];
    let mut len = 0.0;
    for c in (0..sk.len()).filter(|&c| sk[c] && labels[c] == lab) {
        let (i, j) = ((c % sx) as isize, (c / sx) as isize);
        if on(i + 1, j) {
            len += h;
        }
        if on(i, j + 1) {
            len += h;
        }
        if on(i + 1, j + 1) && !on(i + 1, j) && !on(i, j + 1) {
            len += SQRT_2 * h;
        }
        if on(i - 1, j + 1) && !on(i - 1, j) && !on(i, j + 1) {
            len += SQRT_2 * h;
        }
        let degree = neighbours8(sx, sy, c).filter(|&q| sk[q]).count();
        let border = i == 0 || j == 0 || i as usize == sx - 1 || j as usize == sy - 1;
        if degree == 1 && !border {
            len += dt[c].sqrt() * h;
        }
    }
    len
}

/// Principal direction and eigenvalue ratio of a point cloud.
fn pca(points: &[[f64; 2]]) -> Option<([f64; 2], f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let m = points.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for p in points {
        let (x, y) = (p[0] - m[0], p[1] - m[1]);
        a += x * x;
        b += x * y;
        c += y * y;
    }
    let tr = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (tr + disc, (tr - disc).max(0.0));
    if l1 <= 0.0 {
        return None;
    }
    let ang = 0.5 * (2.0 * b).atan2(a - c);
    let ratio = if l2 > 0.0 { l1 / l2 } else { f64::INFINITY };
    Some(([ang.cos(), ang.sin()], ratio))
}

fn skeleton_points_near(set: &ConcentrationSet, x0: [f64; 2], r: f64) -> Vec<(usize, [f64; 2])> {
    let g = &*set.grid;
    g.nodes_in_disk(&crate::grid::DiskSpec::new(x0, r)).into_iter().filter(|&i| set.skeleton[i]).map(|i| (i, g.pos(i))).collect()
}

fn regular_direction(set: &ConcentrationSet, x0: [f64; 2]) -> Option<([f64; 2], f64)> {
    let pts: Vec<[f64; 2]> = skeleton_points_near(set, x0, PCA_RADIUS_CELLS * set.grid.h).into_iter().map(|t| t.1).collect();
    pca(&pts)
}

pub fn extract_sstar(stack: &MeasureStack, eta0: f64) -> Result<ConcentrationSet> {
    extract_sstar_with(stack, eta0, &stack.default_radii())
}

pub fn extract_sstar_with(stack: &MeasureStack, eta0: f64, radii: &[f64]) -> Result<ConcentrationSet> {
    if !(eta0 > 0.0 && eta0.is_finite()) {
        return Err(Error::Precondition(format!("eta0 = {eta0} must be positive")));
    }
    let e = stack.last();
    let g = e.grid.clone();
    let s = DiskSummer::new(&g, &e.mass)?;
    let radii = admissible(stack, radii);
    let theta: Vec<f64> = par::map(g.n_nodes(), |idx| {
        if !g.is_used(idx) {
            return 0.0;
        }
        let t = min_ratio(&s, g.pos(idx), &radii).0;
        if t.is_finite() {
            t
        } else {
            0.0
        }
    });
    let nodes: Vec<bool> = theta.iter().map(|&t| t >= eta0).collect();
    let (sx, sy) = (g.nx + 1, g.ny + 1);
    let (components, n_components) = label_components(&nodes, sx, sy);
    let spur = SPUR_CELLS.max((radii.iter().copied().fold(f64::INFINITY, f64::min) / g.h).ceil() as usize);
    let skeleton = thin(&nodes, sx, sy, spur);
    let unflagged: Vec<bool> = nodes.iter().map(|&b| !b).collect();
    let dt_out = distance_transform_sq(&unflagged, sx, sy);
    let lengths = (1..=n_components as u32).map(|lab| skeleton_length(&skeleton, &components, lab, &dt_out, sx, sy, g.h)).collect();
    let dt_in = distance_transform_sq(&nodes, sx, sy);
    let complement_open = (0..nodes.len()).all(|c| nodes[c] || dt_in[c] >= 1.0);
    let mut set = ConcentrationSet {
        grid: g.clone(),
        eta0,
        m0: stack.m0,
        radii,
        theta,
        nodes,
        components,
        n_components,
        skeleton,
        lengths,
        tangent: Vec::new(),
        complement_open,
    };
    set.tangent = (0..g.n_nodes())
        .map(|c| {
            if !set.skeleton[c] {
                return None;
            }
            regular_direction(&set, g.pos(c)).filter(|t| t.1 >= MIN_ANISOTROPY).map(|t| t.0)
        })
        .collect();
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub delta: f64,
    pub count: usize,
    pub estimate: f64,
    /// `2 M0 / eta0`.
    pub bound: f64,
    pub within_bound: bool,
}

/// Counts the `delta`-lattice disks of radius `delta / sqrt 2` that meet the
/// skeleton.
pub fn covering_length_estimate(set: &ConcentrationSet, delta: f64) -> Result<CoveringReport> {
    let g = &*set.grid;
    if delta < 2.0 * g.h * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("delta = {delta} below twice the grid spacing {}", g.h)));
    }
    let rad = delta / SQRT_2;
    let mut hit = BTreeSet::new();
    for c in (0..set.skeleton.len()).filter(|&c| set.skeleton[c]) {
        let p = g.pos(c);
        let (fx, fy) = ((p[0] - g.origin[0]) / delta, (p[1] - g.origin[1]) / delta);
        let span = (rad / delta).ceil() as i64;
        let (ci, cj) = (fx.round() as i64, fy.round() as i64);
        for b in cj - span..=cj + span {
            for a in ci - span..=ci + span {
                let q = [g.origin[0] + a as f64 * delta, g.origin[1] + b as f64 * delta];
                if (q[0] - p[0]).hypot(q[1] - p[1]) <= rad {
                    hit.insert((a, b));
                }
            }
        }
    }
    let estimate = hit.len() as f64 * delta;
    let bound = 2.0 * set.m0 / set.eta0;
    Ok(CoveringReport { delta, count: hit.len(), estimate, bound, within_bound: estimate <= bound })
}

/// A component of the flag set inside the disk that does not reach the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandWitness {
    pub cells: usize,
    pub theta_max: f64,
    /// Distance from the island to the rest of the set and the circle.
    pub separation: f64,
    /// Largest density estimate on the separating shell.
    pub shell_theta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub components: usize,
    pub islands: Vec<IslandWitness>,
    /// A single component: no flagged pocket is enclosed by an empty shell.
    pub consistent: bool,
}

/// Components of `(set /\ closed D(x0, r)) \/ circle(x0, r)`, the circle
/// rasterised as the nodes within `0.75 h` of it.
pub fn connectivity_check(set: &ConcentrationSet, x0: [f64; 2], r: f64) -> Result<ConnectivityReport> {
    let g = &*set.grid;
    if !g.domain.contains_disk(&crate::grid::DiskSpec::new(x0, 2.0 * r)) {
        return Err(Error::DiskOutsideDomain);
    }
    let (sx, sy) = set.dims();
    let mut ring = vec![false; g.n_nodes()];
    let mut mask = vec![false; g.n_nodes()];
    for idx in g.nodes_in_disk(&crate::grid::DiskSpec::new(x0, r + g.h)) {
        let p = g.pos(idx);
        let d = (p[0] - x0[0]).hypot(p[1] - x0[1]);
        ring[idx] = (d - r).abs() <= 0.75 * g.h;
        mask[idx] = ring[idx] || (set.nodes[idx] && d <= r);
    }
    let (labels, n) = label_components(&mask, sx, sy);
    let mut islands = Vec::new();
    for lab in 1..=n as u32 {
        let cells: Vec<usize> = (0..mask.len()).filter(|&c| labels[c] == lab).collect();
        if cells.iter().any(|&c| ring[c]) {
            continue;
        }
        let island: Vec<bool> = (0..mask.len()).map(|c| labels[c] == lab).collect();
        let rest: Vec<bool> = (0..mask.len()).map(|c| mask[c] && labels[c] != lab).collect();
        let dt_rest = distance_transform_sq(&rest, sx, sy);
        let sep = cells.iter().map(|&c| dt_rest[c]).fold(f64::INFINITY, f64::min).sqrt() * g.h;
        let dt_island = distance_transform_sq(&island, sx, sy);
        let half = 0.5 * sep / g.h;
        let shell_theta_max =
            (0..mask.len()).filter(|&c| !island[c] && dt_island[c].sqrt() <= half).map(|c| set.theta[c]).fold(0.0, f64::max);
        islands.push(IslandWitness {
            cells: cells.len(),
            theta_max: cells.iter().map(|&c| set.theta[c]).fold(0.0, f64::max),
            separation: sep,
            shell_theta_max,
        });
    }
    Ok(ConnectivityReport { components: n, consistent: n == 1, islands })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeRow {
    pub radius: f64,
    pub cells: usize,
    pub outside_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub direction: [f64; 2],
    pub anisotropy: f64,
    /// Rows by decreasing radius.
    pub rows: Vec<ConeRow>,
    pub monotone: bool,
    pub pass: bool,
}

/// Fraction of skeleton nodes in `D(x0, r)` outside the cone
/// `|e_perp . (y - x0)| <= theta |e . (y - x0)|` for each radius.
pub fn tangent_cone_check(set: &ConcentrationSet, x0: [f64; 2], theta: f64, radii: &[f64]) -> Result<ConeReport> {
    if radii.len() < 3 {
        return Err(Error::Precondition("tangent cone trend needs at least 3 radii".into()));
    }
    let (e, anisotropy) = regular_direction(set, x0).ok_or(Error::NotRegularPoint)?;
    if anisotropy < MIN_ANISOTROPY {
        return Err(Error::NotRegularPoint);
    }
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| b.total_cmp(a));
    let rows: Vec<ConeRow> = radii
        .iter()
        .map(|&r| {
            let pts: Vec<[f64; 2]> = skeleton_points_near(set, x0, r)
                .into_iter()
                .map(|t| [t.1[0] - x0[0], t.1[1] - x0[1]])
                .filter(|d| d[0].hypot(d[1]) > 0.5 * set.grid.h)
                .collect();
            let out = pts.iter().filter(|d| (-e[1] * d[0] + e[0] * d[1]).abs() > theta * (e[0] * d[0] + e[1] * d[1]).abs()).count();
            ConeRow { radius: r, cells: pts.len(), outside_fraction: if pts.is_empty() { 0.0 } else { out as f64 / pts.len() as f64 } }
        })
        .collect();
    let monotone = rows.windows(2).all(|w| w[1].outside_fraction <= w[0].outside_fraction + 1e-12);
    let pass = monotone && rows.last().is_some_and(|r| r.outside_fraction <= CONE_FRACTION_TOL);
    Ok(ConeReport { direction: e, anisotropy, rows, monotone, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub disks: usize,
    pub clear_disks: usize,
    pub violations: usize,
    /// Largest `theta` inside `D(x0, r/2)` over clear disks, relative to `eta0/4`.
    pub worst_ratio: f64,
}

/// For lattice disks `D(x0, r)` inside the domain with last-`eps` mass below
/// `eta0 r`, checks that every density estimate in `D(x0, r/2)` is below
/// `eta0 / 4`. Radii are the set's radii of at least `TRANSFER_MIN_RATIO`
/// times the smallest one; centres lie on a lattice of step `r / 2`.
pub fn clearing_transfer_check(stack: &MeasureStack, set: &ConcentrationSet) -> Result<TransferReport> {
    let e = stack.last();
    let g = &*e.grid;
    let s = DiskSummer::new(g, &e.mass)?;
    let b = &g.domain;
    let (lo, hi) = match *b {
        Domain::Rectangle { x0, y0, x1, y1 } => ([x0, y0], [x1, y1]),
        Domain::Disk { cx, cy, r } => ([cx - r, cy - r], [cx + r, cy + r]),
    };
    let mut rep = TransferReport { disks: 0, clear_disks: 0, violations: 0, worst_ratio: 0.0 };
    let r_min = set.radii.iter().copied().fold(f64::INFINITY, f64::min);
    for &r in set.radii.iter().filter(|&&r| r >= TRANSFER_MIN_RATIO * r_min) {
        let step = 0.5 * r;
        let (ni, nj) = (((hi[0] - lo[0]) / step).floor() as usize, ((hi[1] - lo[1]) / step).floor() as usize);
        for j in 0..=nj {
            for i in 0..=ni {
                let c = [lo[0] + i as f64 * step, lo[1] + j as f64 * step];
                let d = crate::grid::DiskSpec::new(c, r);
                if !b.contains_disk(&d) {
                    continue;
                }
                rep.disks += 1;
                if s.sum(c, r).0 >= set.eta0 * r {
                    continue;
                }
                rep.clear_disks += 1;
                let worst = g.nodes_in_disk(&d.scaled(0.5)).into_iter().map(|idx| set.theta[idx]).fold(0.0, f64::max);
                let ratio = worst / (0.25 * set.eta0);
                rep.worst_ratio = rep.worst_ratio.max(ratio);
                if ratio >= 1.0 {
                    rep.violations += 1;
                }
            }
        }
    }
    Ok(rep)
}

/// Limit estimates of the Hopf measures: per-node densities at the smallest
/// `eps` with the next one resampled onto the same grid.
#[derive(Debug, Clone)]
pub struct HopfLimit {
    pub grid: Arc<Grid>,
    pub epsilon: f64,
    pub prev_epsilon: f64,
    pub weights: Vec<f64>,
    pub omega_star_re: Vec<f64>,
    pub omega_star_im: Vec<f64>,
    pub zeta_star: Vec<f64>,
    pub energy: Vec<f64>,
    pub prev_omega_re: Vec<f64>,
    pub prev_omega_im: Vec<f64>,
    pub prev_zeta: Vec<f64>,
    pub indicator: HopfIndicator,
}

/// Differences of the smoothed measures at the two smallest `eps`, relative
/// to the energy of the last member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfIndicator {
    pub omega_re: f64,
    pub omega_im: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfVariation {
    /// `sum |omega| w`.
    pub omega: f64,
    /// `sum zeta w`.
    pub zeta: f64,
    pub mass: f64,
}

struct HopfDensities {
    re: Vec<f64>,
    im: Vec<f64>,
    zeta: Vec<f64>,
    e: Vec<f64>,
}

fn hopf_densities(f: &Field, p: &Potential) -> HopfDensities {
    let grad = gradient(f);
    let h = hopf_from_gradient(&grad, f.k, f.epsilon);
    let d = densities_with(f, p, &grad);
    let used = |v: Vec<f64>| -> Vec<f64> { v.into_iter().enumerate().map(|(i, t)| if f.grid.is_used(i) { t } else { 0.0 }).collect() };
    HopfDensities { re: used(h.omega_re), im: used(h.omega_im), zeta: d.v, e: d.e }
}

/// One pass of a centred moving sum of half-width `b` along rows, then columns.
fn box_filter(sx: usize, sy: usize, b: usize, a: &[f64]) -> Vec<f64> {
    let pass = |src: &[f64], n: usize, m: usize, at: &dyn Fn(usize, usize) -> usize| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        let mut pre = vec![0.0; n + 1];
        for k in 0..m {
            for t in 0..n {
                pre[t + 1] = pre[t] + src[at(k, t)];
            }
            for t in 0..n {
                out[at(k, t)] = pre[(t + b + 1).min(n)] - pre[t.saturating_sub(b)];
            }
        }
        out
    };
    let rows = pass(a, sx, sy, &|k, t| k * sx + t);
    pass(&rows, sy, sx, &|k, t| t * sx + k)
}

/// L1 distance of the two node measures after two box filters of half-width
/// `b` nodes, relative to the smoothed mass of `e`.
fn smoothed_difference(g: &Grid, b: usize, w: &[f64], x: &[f64], y: &[f64], e: &[f64]) -> f64 {
    let (sx, sy) = (g.nx + 1, g.ny + 1);
    let smooth = |d: &[f64]| {
        let m: Vec<f64> = d.iter().zip(w).map(|(d, w)| d * w).collect();
        box_filter(sx, sy, b, &box_filter(sx, sy, b, &m))
    };
    let (sa, sb) = (smooth(x), smooth(y));
    let num: f64 = sa.iter().zip(&sb).map(|(p, q)| (p - q).abs()).sum();
    let mass: f64 = smooth(e).iter().sum();
    if mass > 0.0 {
        num / mass
    } else {
        0.0
    }
}

pub fn limit_hopf(family: &[SolveResult], p: &Potential) -> Result<HopfLimit> {
    let fields: Vec<&Field> = family.iter().map(|r| &r.field).collect();
    limit_hopf_fields(&fields, p)
}

pub fn limit_hopf_fields(fields: &[&Field], p: &Potential) -> Result<HopfLimit> {
    if fields.len() < 2 {
        return Err(Error::InsufficientFamily(fields.len()));
    }
    let v = sorted_by_eps(fields)?;
    let (prev, last) = (v[v.len() - 2], v[v.len() - 1]);
    let g = last.grid.clone();
    let cur = hopf_densities(last, p);
    let old = hopf_densities(prev, p);
    let packed: Vec<f64> = (0..prev.grid.n_nodes()).flat_map(|i| [old.re[i], old.im[i], old.zeta[i]]).collect();
    let resampled: Vec<[f64; 3]> = par::map(g.n_nodes(), |idx| {
        let mut out = [0.0; 3];
        if g.is_used(idx) && !prev.grid.interpolate(&packed, 3, g.pos(idx), &mut out) {
            out = [0.0; 3];
        }
        out
    });
    let weights = g.region_weights(&Region::Domain)?;
    let (pre, pim, pz): (Vec<f64>, Vec<f64>, Vec<f64>) = (
        resampled.iter().map(|t| t[0]).collect(),
        resampled.iter().map(|t| t[1]).collect(),
        resampled.iter().map(|t| t[2]).collect(),
    );
    let b = ((INDICATOR_SCALE_EPS * prev.epsilon / g.h).ceil() as usize).max(1);
    let indicator = HopfIndicator {
        omega_re: smoothed_difference(&g, b, &weights, &cur.re, &pre, &cur.e),
        omega_im: smoothed_difference(&g, b, &weights, &cur.im, &pim, &cur.e),
        zeta: smoothed_difference(&g, b, &weights, &cur.zeta, &pz, &cur.e),
    };
    Ok(HopfLimit {
        grid: g,
        epsilon: last.epsilon,
        prev_epsilon: prev.epsilon,
        weights,
        omega_star_re: cur.re,
        omega_star_im: cur.im,
        zeta_star: cur.zeta,
        energy: cur.e,
        prev_omega_re: pre,
        prev_omega_im: pim,
        prev_zeta: pz,
        indicator,
    })
}

impl HopfLimit {
    pub fn variation(&self) -> HopfVariation {
        let w = &self.weights;
        let n = w.len();
        HopfVariation {
            omega: par::sum(n, |i| self.omega_star_re[i].hypot(self.omega_star_im[i]) * w[i]),
            zeta: par::sum(n, |i| self.zeta_star[i] * w[i]),
            mass: par::sum(n, |i| self.energy[i] * w[i]),
        }
    }

    /// `sum |omega| <= 2 M0 (1 + slack)` and `sum zeta <= M0 (1 + slack)`.
    pub fn variation_within(&self, m0: f64, slack: f64) -> bool {
        let v = self.variation();
        v.omega <= 2.0 * m0 * (1.0 + slack) && v.zeta <= m0 * (1.0 + slack)
    }
}

/// Smooth plateau: 1 on `[-3/4, 3/4]`, 0 for `|s| >= 1`. Returns value and
/// derivative.
pub fn plateau(s: f64) -> (f64, f64) {
    let psi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let dpsi = |t: f64| if t > 0.0 { (-1.0 / t).exp() / (t * t) } else { 0.0 };
    let t = 4.0 * (1.0 - s.abs());
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    let (a, b) = (psi(t), psi(1.0 - t));
    let g = a / (a + b);
    let dg = (dpsi(t) * b + a * dpsi(1.0 - t)) / ((a + b) * (a + b));
    (g, dg * -4.0 * s.signum())
}

/// Test profile `b(t) t^k` with `b` the standard bump on `(-1, 1)`.
fn profile(k: i32, t: f64) -> (f64, f64) {
    if t.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - t * t;
    let b = (-1.0 / q).exp();
    let db = b * (-2.0 * t / (q * q));
    let tk = t.powi(k);
    let dtk = if k == 0 { 0.0 } else { k as f64 * t.powi(k - 1) };
    (b * tk, db * tk + b * dtk)
}

/// Field families supported in the square `Q_r(x0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameField {
    /// `f(x1) phi((x2 - x02)/r) e2`.
    Shear,
    /// `f(x1) x2 phi((x2 - x02)/r) e2`.
    Stretching,
    /// `phi((x2 - x02)/r) f(x1) e1`.
    Dilation,
}

/// Value and Jacobian `[d1X1, d2X1, d1X2, d2X2]` of a frame field with
/// profile `f = b(t) t^k`, `t = (x1 - x01)/r`.
fn frame_field(kind: FrameField, k: i32, x0: [f64; 2], r: f64, x: [f64; 2]) -> [f64; 4] {
    let (f, df) = profile(k, (x[0] - x0[0]) / r);
    let df = df / r;
    let (ph, dph) = plateau((x[1] - x0[1]) / r);
    let dph = dph / r;
    match kind {
        FrameField::Shear => [0.0, 0.0, df * ph, f * dph],
        FrameField::Stretching => [0.0, 0.0, df * x[1] * ph, f * (ph + x[1] * dph)],
        FrameField::Dilation => [df * ph, f * dph, 0.0, 0.0],
    }
}

/// Normalised residual of `sum w [Re omega dz_re - Im omega dz_im - 2 zeta div X]`
/// with `dz_re = d1X1 - d2X2`, `dz_im = d1X2 + d2X1`.
pub fn frame_identity_residual(hl: &HopfLimit, kind: FrameField, k: i32, x0: [f64; 2], r: f64) -> f64 {
    let g = &*hl.grid;
    let (mut num, mut den) = (0.0, 0.0);
    for idx in g.nodes_in_disk(&crate::grid::DiskSpec::new(x0, SQRT_2 * r)) {
        let w = hl.weights[idx];
        if w == 0.0 {
            continue;
        }
        let j = frame_field(kind, k, x0, r, g.pos(idx));
        let (dz_re, dz_im, div) = (j[0] - j[3], j[2] + j[1], j[0] + j[3]);
        let (a, b, z) = (hl.omega_star_re[idx], hl.omega_star_im[idx], hl.zeta_star[idx]);
        num += w * (a * dz_re - b * dz_im - 2.0 * z * div);
        den += w * (a.hypot(b) * dz_re.hypot(dz_im) + 2.0 * z * div.abs());
    }
    if den > 0.0 {
        num.abs() / den
    } else {
        0.0
    }
}

/// Column integrals over `{s} x I_{3r/4}(x02)` for nodes with `|s - x01| < r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstancyReport {
    pub s: Vec<f64>,
    pub values: Vec<f64>,
    /// Mean over columns of the integral of the absolute integrand.
    pub mean_variation: f64,
    pub deviation: f64,
    pub relative_deviation: f64,
    pub frame_mass: f64,
    pub square_mass: f64,
    pub weak_residuals: Vec<f64>,
    pub max_weak_residual: f64,
}

impl ConstancyReport {
    pub fn constant_within(&self, tol: f64) -> bool {
        self.relative_deviation <= tol
    }
}

fn frame_masses(hl: &HopfLimit, x0: [f64; 2], r: f64) -> (f64, f64) {
    let g = &*hl.grid;
    let (mut frame, mut square) = (0.0, 0.0);
    for idx in 0..g.n_nodes() {
        let p = g.pos(idx);
        let (dx, dy) = ((p[0] - x0[0]).abs(), (p[1] - x0[1]).abs());
        if dx > r || dy > r {
            continue;
        }
        let m = hl.energy[idx] * hl.weights[idx];
        square += m;
        if dy >= 0.75 * r {
            frame += m;
        }
    }
    (frame, square)
}

fn constancy(hl: &HopfLimit, x0: [f64; 2], r: f64, integrand: impl Fn(usize) -> f64, fields: &[FrameField]) -> Result<ConstancyReport> {
    let g = &*hl.grid;
    let (lo, hi) = ([x0[0] - r, x0[1] - r], [x0[0] + r, x0[1] + r]);
    if !g.domain.contains(lo) || !g.domain.contains(hi) || !g.domain.contains([lo[0], hi[1]]) || !g.domain.contains([hi[0], lo[1]]) {
        return Err(Error::RegionOutsideDomain);
    }
    let (frame_mass, square_mass) = frame_masses(hl, x0, r);
    let tolerance = FRAME_TOL * square_mass;
    if frame_mass > tolerance {
        return Err(Error::HypothesisNotMet { frame_mass, tolerance });
    }
    let (mut s, mut values, mut tv) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..=g.nx {
        let x1 = g.origin[0] + i as f64 * g.h;
        if (x1 - x0[0]).abs() >= r {
            continue;
        }
        let (mut v, mut a) = (0.0, 0.0);
        for j in 0..=g.ny {
            let x2 = g.origin[1] + j as f64 * g.h;
            if (x2 - x0[1]).abs() > 0.75 * r {
                continue;
            }
            let t = integrand(g.index(i, j)) * g.h;
            v += t;
            a += t.abs();
        }
        s.push(x1);
        values.push(v);
        tv.push(a);
    }
    let n = values.len().max(1) as f64;
    let mean_variation = tv.iter().sum::<f64>() / n;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let deviation = if values.is_empty() { 0.0 } else { max - min };
    let scale = hl.energy.iter().zip(&hl.weights).map(|(e, w)| e * w).sum::<f64>();
    let relative_deviation = if mean_variation > 1e-9 * scale.max(f64::MIN_POSITIVE) { deviation / mean_variation } else { 0.0 };
    let weak_residuals: Vec<f64> =
        fields.iter().flat_map(|&kind| (0..5).map(move |k| (kind, k))).map(|(kind, k)| frame_identity_residual(hl, kind, k, x0, r)).collect();
    let max_weak_residual = weak_residuals.iter().copied().fold(0.0, f64::max);
    Ok(ConstancyReport { s, values, mean_variation, deviation, relative_deviation, frame_mass, square_mass, weak_residuals, max_weak_residual })
}

/// `J(s) = int Im omega dx2` over the columns of the frame.
pub fn shear_constancy_check(hl: &HopfLimit, x0: [f64; 2], r: f64) -> Result<ConstancyReport> {
    constancy(hl, x0, r, |i| hl.omega_star_im[i], &[FrameField::Shear])
}

/// `L(s) = int (Re omega - 2 zeta) dx2` over the columns of the frame.
pub fn dilation_constancy_check(hl: &HopfLimit, x0: [f64; 2], r: f64) -> Result<ConstancyReport> {
    constancy(hl, x0, r, |i| hl.omega_star_re[i] - 2.0 * hl.zeta_star[i], &[FrameField::Dilation, FrameField::Stretching])
}

/// CSV `s,J,L` from a shear and a dilation report on the same frame.
pub fn write_hopf_table(path: &Path, shear: &ConstancyReport, dilation: &ConstancyReport) -> Result<()> {
    if shear.s != dilation.s {
        return Err(Error::GridMismatch("shear and dilation tables use different columns".into()));
    }
    let mut out = String::from("s,J,L\n");
    for ((s, j), l) in shear.s.iter().zip(&shear.values).zip(&dilation.values) {
        writeln!(out, "{s},{j},{l}").expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Relative L2 mismatch between `omega_v(y)` and `exp(-2 i theta) omega_u(R(-theta)(y - c) + c)`
/// over nodes of `v` in `D(c, radius)`, where `v` is `u` rotated by `theta`
/// about `c`.
pub fn rotation_covariance_error(u: &Field, v: &Field, theta: f64, c: [f64; 2], radius: f64) -> f64 {
    let hu = hopf_from_gradient(&gradient(u), u.k, u.epsilon);
    let hv = hopf_from_gradient(&gradient(v), v.k, v.epsilon);
    let packed: Vec<f64> = hu.omega_re.iter().zip(&hu.omega_im).flat_map(|(a, b)| [*a, *b]).collect();
    let (cs, sn) = (theta.cos(), theta.sin());
    let (c2, s2) = ((2.0 * theta).cos(), (2.0 * theta).sin());
    let (mut num, mut den) = (0.0, 0.0);
    for idx in v.grid.nodes_in_disk(&crate::grid::DiskSpec::new(c, radius)) {
        let y = v.grid.pos(idx);
        let d = [y[0] - c[0], y[1] - c[1]];
        let x = [c[0] + cs * d[0] + sn * d[1], c[1] - sn * d[0] + cs * d[1]];
        let mut w = [0.0; 2];
        if !u.grid.interpolate(&packed, 2, x, &mut w) {
            continue;
        }
        // (c2 - i s2)(a + i b)
        let pred = [c2 * w[0] + s2 * w[1], c2 * w[1] - s2 * w[0]];
        num += (hv.omega_re[idx] - pred[0]).powi(2) + (hv.omega_im[idx] - pred[1]).powi(2);
        den += hv.omega_re[idx].powi(2) + hv.omega_im[idx].powi(2);
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::heteroclinic_energy_gl;
    use crate::grid::BoundaryCondition;

    const C0: f64 = 2.0 * SQRT_2 / 3.0;

    fn gl() -> Potential {
        Potential::builtin("gl-scalar").unwrap()
    }

    fn square(h: f64) -> Arc<Grid> {
        Arc::new(Grid::rectangle(0.0, 0.0, 1.0, 1.0, h).unwrap())
    }

    /// Tanh interface through `(0.5, 0.5)` with unit normal at angle `beta`
    /// from vertical.
    fn tilted(eps: f64, m: f64, beta: f64) -> Field {
        Field::from_fn(square(eps / m), 1, eps, BoundaryCondition::Neumann, |x, v| {
            let s = -beta.sin() * (x[0] - 0.5) + beta.cos() * (x[1] - 0.5);
            v[0] = (s / (SQRT_2 * eps)).tanh()
        })
    }

    fn constant(eps: f64) -> Field {
        Field::constant(square(eps / 4.0), &[1.0], eps, BoundaryCondition::Neumann)
    }

    fn family(beta: f64) -> Vec<Field> {
        [0.04, 0.02].iter().map(|&e| tilted(e, 4.0, beta)).collect()
    }

    #[test]
    fn pure_phase_is_empty() {
        let p = gl();
        let fs = [constant(0.04), constant(0.02)];
        let refs: Vec<&Field> = fs.iter().collect();
        let st = measure_stack(&refs, &p).unwrap();
        assert_eq!(st.m0, 0.0);
        assert_eq!(lower_density(&st, [0.5, 0.5], &st.default_radii()).unwrap().theta, 0.0);
        let set = extract_sstar(&st, 0.5).unwrap();
        assert!(set.is_empty() && set.n_components == 0 && set.total_length() == 0.0 && set.complement_open);
        assert_eq!(covering_length_estimate(&set, 0.05).unwrap().count, 0);
        let c = connectivity_check(&set, [0.5, 0.5], 0.2).unwrap();
        assert!(c.consistent && c.components == 1);
        let hl = limit_hopf_fields(&refs, &p).unwrap();
        assert!(hl.omega_star_re.iter().chain(&hl.omega_star_im).chain(&hl.zeta_star).all(|&t| t == 0.0));
        let d = dilation_constancy_check(&hl, [0.5, 0.5], 0.3).unwrap();
        assert!(d.values.iter().all(|&t| t == 0.0) && d.deviation == 0.0);
    }

    #[test]
    fn stack_masses_match_heteroclinic_energy() {
        let p = gl();
        let fs = family(0.0);
        let refs: Vec<&Field> = fs.iter().collect();
        let st = measure_stack(&refs, &p).unwrap();
        let c = heteroclinic_energy_gl(4096);
        for e in &st.entries {
            assert!((e.total - c).abs() <= 0.05 * c, "{} {}", e.total, c);
        }
        assert!(st.entries[0].epsilon > st.entries[1].epsilon);
        let fine = tilted(0.02, 8.0, 0.0);
        let sf = measure_stack(&[&fine], &p).unwrap();
        assert!((sf.m0 - st.last().total).abs() <= 0.01 * sf.m0);
        let other = Field::constant(Arc::new(Grid::rectangle(0.0, 0.0, 2.0, 1.0, 0.01).unwrap()), &[1.0], 0.02, BoundaryCondition::Neumann);
        assert!(matches!(measure_stack(&[&fine, &other], &p), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn chord_density() {
        let p = gl();
        let fs = family(0.0);
        let refs: Vec<&Field> = fs.iter().collect();
        let st = measure_stack(&refs, &p).unwrap();
        let radii = st.default_radii();
        assert!(radii.iter().all(|&r| r >= st.radius_floor()));
        let on = lower_density(&st, [0.5, 0.5], &radii).unwrap();
        assert!((on.theta - 2.0 * C0).abs() <= 0.05 * 2.0 * C0, "{}", on.theta);
        let off = lower_density(&st, [0.5, 0.9], &[0.125]).unwrap();
        assert!(off.theta < 1e-6, "{}", off.theta);
        // boundary correction keeps the chord density at the wall
        let wall = lower_density(&st, [0.0, 0.5], &[0.125]).unwrap();
        assert!((wall.theta - 2.0 * C0).abs() <= 0.1 * 2.0 * C0, "{}", wall.theta);
    }

    #[test]
    fn two_phase_set_traces_the_interface() {
        let p = gl();
        let fs = family(0.0);
        let refs: Vec<&Field> = fs.iter().collect();
        let st = measure_stack(&refs, &p).unwrap();
        let set = extract_sstar(&st, 1.0).unwrap();
        assert_eq!(set.n_components, 1);
        assert!((set.total_length() - 1.0).abs() <= 0.1, "{}", set.total_length());
        assert!(set.total_length() <= set.length_bound());
        assert!(set.complement_open);
        let g = &set.grid;
        let far = (0..g.n_nodes()).filter(|&i| set.skeleton[i]).map(|i| (g.pos(i)[1] - 0.5).abs()).fold(0.0, f64::max);
        assert!(far <= 2.0 * g.h, "{far}");
        for delta in [2.0 * g.h, 0.05, 0.125] {
            let cov = covering_length_estimate(&set, delta).unwrap();
            assert!(cov.estimate >= 0.5 && cov.estimate <= 4.0, "{delta} {}", cov.estimate);
            assert!(cov.within_bound);
        }
        assert!(covering_length_estimate(&set, g.h).is_err());
        let c = connectivity_check(&set, [0.5, 0.5], 0.2).unwrap();
        assert!(c.consistent && c.islands.is_empty());
        let cone = tangent_cone_check(&set, [0.5, 0.5], 0.1, &[0.2, 0.1, 0.05]).unwrap();
        assert!(cone.pass && cone.direction[0].abs() > 0.99, "{cone:?}");
        assert!(set.tangent.iter().flatten().all(|t| t[0].abs() > 0.99));
    }

    #[test]
    fn clear_disks_stay_clear_inside() {
        let p = gl();
        let fs: Vec<Field> = [0.02, 0.01].iter().map(|&e| tilted(e, 4.0, 0.0)).collect();
        let refs: Vec<&Field> = fs.iter().collect();
        let st = measure_stack(&refs, &p).unwrap();
        let set = extract_sstar(&st, 0.5).unwrap();
        let tr = clearing_transfer_check(&st, &set).unwrap();
        assert!(tr.clear_disks > 0 && tr.violations == 0, "{tr:?}");
        assert!((set.total_length() - 1.0).abs() <= 0.1, "{}", set.total_length());
    }

    fn synthetic(g: Arc<Grid>, on: impl Fn([f64; 2]) -> bool) -> ConcentrationSet {
        let (sx, sy) = (g.nx + 1, g.ny + 1);
        let nodes: Vec<bool> = (0..g.n_nodes()).map(|i| on(g.pos(i))).collect();
        let theta = nodes.iter().map(|&b| if b { 2.0 } else { 0.0 }).collect();
        let (components, n) = label_components(&nodes, sx, sy);
        let mut s = ConcentrationSet {
            grid: g.clone(),
            eta0: 1.0,
            m0: 1.0,
            radii: vec![0.1],
            theta,
            skeleton: nodes.clone(),
            nodes,
            components,
            n_components: n,
            lengths: vec![],
            tangent: vec![],
            complement_open: true,
        };
        s.tangent = vec![None; g.n_nodes()];
        s
    }

    #[test]
    fn island_is_flagged() {
        let set = synthetic(square(0.01), |x| (x[0] - 0.5).hypot(x[1] - 0.5) < 0.03);
        let c = connectivity_check(&set, [0.5, 0.5], 0.2).unwrap();
        assert_eq!(c.components, 2);
        assert!(!c.consistent);
        let w = &c.islands[0];
        assert!(w.theta_max >= 1.0 && w.shell_theta_max == 0.0 && w.separation > 0.15, "{w:?}");
        assert!(matches!(connectivity_check(&set, [0.5, 0.5], 0.3), Err(Error::DiskOutsideDomain)));
    }

    #[test]
    fn cone_at_a_corner_and_degenerate_points() {
        let g = square(0.005);
        let h = g.h;
        // rays from the centre at angles 0 and 150 degrees
        let dirs = [[1.0, 0.0], [(150f64).to_radians().cos(), (150f64).to_radians().sin()]];
        let set = synthetic(g.clone(), |x| {
            let d = [x[0] - 0.5, x[1] - 0.5];
            dirs.iter().any(|e| {
                let t = e[0] * d[0] + e[1] * d[1];
                t >= 0.0 && (e[0] * d[1] - e[1] * d[0]).abs() <= 0.5 * h
            })
        });
        let rep = tangent_cone_check(&set, [0.5, 0.5], 0.1, &[0.2, 0.1, 0.05]).unwrap();
        assert!(!rep.pass && rep.rows.last().unwrap().outside_fraction > 0.3, "{rep:?}");
        let empty = synthetic(g.clone(), |_| false);
        assert!(matches!(tangent_cone_check(&empty, [0.5, 0.5], 0.1, &[0.2, 0.1, 0.05]), Err(Error::NotRegularPoint)));
        let blob = synthetic(g, |x| (x[0] - 0.5).hypot(x[1] - 0.5) < 0.05);
        assert!(matches!(tangent_cone_check(&blob, [0.5, 0.5], 0.1, &[0.2, 0.1, 0.05]), Err(Error::NotRegularPoint)));
    }

    #[test]
    fn horizontal_profile_hopf() {
        let p = gl();
        let fs = family(0.0);
        let refs: Vec<&Field> = fs.iter().collect();
        let hl = limit_hopf_fields(&refs, &p).unwrap();
        let v = hl.variation();
        // equipartition: Re omega = -2 zeta and Im omega = 0
        let re: f64 = hl.omega_star_re.iter().zip(&hl.weights).map(|(a, w)| a * w).sum();
        assert!((re + 2.0 * v.zeta).abs() <= 0.02 * v.zeta, "{re} {}", v.zeta);
        assert!(hl.omega_star_im.iter().all(|t| t.abs() < 1e-12));
        assert!(hl.indicator.omega_re < 0.05 && hl.indicator.zeta < 0.05, "{:?}", hl.indicator);
        let st = measure_stack(&refs, &p).unwrap();
        assert!(hl.variation_within(st.m0, 0.01));
        let j = shear_constancy_check(&hl, [0.5, 0.5], 0.3).unwrap();
        assert!(j.deviation < 1e-12 && j.relative_deviation == 0.0);
        let l = dilation_constancy_check(&hl, [0.5, 0.5], 0.3).unwrap();
        assert!(l.constant_within(0.1), "{l:?}");
        let mean = l.values.iter().sum::<f64>() / l.values.len() as f64;
        assert!((mean + 4.0 * 0.5 * C0).abs() <= 0.05 * 2.0 * C0, "{mean}");
        assert!(l.max_weak_residual < 0.02, "{:?}", l.weak_residuals);
        assert!(j.max_weak_residual < 0.02, "{:?}", j.weak_residuals);
    }

    #[test]
    fn tilted_interface_shear_is_constant() {
        let p = gl();
        let beta = 0.3;
        let fs = family(beta);
        let refs: Vec<&Field> = fs.iter().collect();
        let hl = limit_hopf_fields(&refs, &p).unwrap();
        let j = shear_constancy_check(&hl, [0.5, 0.5], 0.35).unwrap();
        assert!(j.constant_within(0.1), "{j:?}");
        let mean = j.values.iter().sum::<f64>() / j.values.len() as f64;
        // column integral of eps U'^2 sin 2b = c0 sin 2b / cos b
        let expect = C0 * (2.0 * beta).sin() / beta.cos();
        assert!((mean - expect).abs() <= 0.05 * expect, "{mean} {expect}");
        assert!(j.max_weak_residual < 0.02, "{:?}", j.weak_residuals);
    }

    #[test]
    fn vertical_interface_breaks_the_frame() {
        let p = gl();
        let fs = family(std::f64::consts::FRAC_PI_2);
        let refs: Vec<&Field> = fs.iter().collect();
        let hl = limit_hopf_fields(&refs, &p).unwrap();
        assert!(matches!(shear_constancy_check(&hl, [0.5, 0.5], 0.3), Err(Error::HypothesisNotMet { .. })));
        assert!(matches!(dilation_constancy_check(&hl, [0.5, 0.5], 0.3), Err(Error::HypothesisNotMet { .. })));
        assert!(matches!(limit_hopf_fields(&refs[..1], &p), Err(Error::InsufficientFamily(1))));
    }

    #[test]
    fn hopf_rotates_with_the_frame() {
        let eps = 0.03;
        let g = Arc::new(Grid::rectangle(-1.0, -1.0, 1.0, 1.0, eps / 8.0).unwrap());
        let prof = |x: [f64; 2]| ((x[1] + 0.3 * x[0] * x[0]) / (SQRT_2 * eps)).tanh();
        let u = Field::from_fn(g.clone(), 1, eps, BoundaryCondition::Neumann, |x, v| v[0] = prof(x));
        let th = PI / 6.0;
        let v = Field::from_fn(g, 1, eps, BoundaryCondition::Neumann, |y, v| {
            let x = [th.cos() * y[0] + th.sin() * y[1], -th.sin() * y[0] + th.cos() * y[1]];
            v[0] = prof(x)
        });
        let err = rotation_covariance_error(&u, &v, th, [0.0, 0.0], 0.6);
        assert!(err < 0.02, "{err}");
        let wrong = rotation_covariance_error(&u, &v, -th, [0.0, 0.0], 0.6);
        assert!(wrong > 0.2, "{wrong}");
    }

    #[test]
    fn plateau_shape() {
        assert_eq!(plateau(0.5), (1.0, 0.0));
        assert_eq!(plateau(1.2), (0.0, 0.0));
        let (v, d) = plateau(0.9);
        let hs = 1e-6;
        let fd = (plateau(0.9 + hs).0 - plateau(0.9 - hs).0) / (2.0 * hs);
        assert!(v > 0.0 && v < 1.0 && (d - fd).abs() < 1e-5);
        assert!((plateau(-0.9).0 - v).abs() < 1e-15 && (plateau(-0.9).1 + d).abs() < 1e-12);
    }
}
