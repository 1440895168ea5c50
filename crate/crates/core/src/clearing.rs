//! Decay inequality, clearing-out verdicts, dyadic energy iteration and the
//! potential/exterior energy bounds.

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{circle_energy, densities_with, integrate, EnergyDensity};
use crate::grid::{gradient, n_theta, restrict_circle_with, DiskSpec, Domain, Field, Grid, NodeKind, Region};
use crate::levelsets::RegionFamily;
use crate::potential::{dist, Potential, StructuralConstants};
use crate::raster::distance_transform_sq;
use crate::report::CheckRecord;
use crate::sampling::halton;
use crate::solver::SolveResult;

/// Upper end of the threshold scan.
pub const ETA_SCAN_MAX: f64 = 1.0;
/// Multiplier applied to the sampled clearing threshold.
pub const ETA0_SAFETY: f64 = 0.5;
/// Multiplier applied to the largest observed contraction ratio.
pub const C_NRG_SAFETY: f64 = 2.0;
/// Relative slack of the logarithmic iteration inequality.
pub const ITERATION_SLACK: f64 = 0.10;
/// Potential-mass premise used when no fitted value is supplied.
pub const K_POT_DEFAULT: f64 = 0.1;

fn disk_sum(grid: &Grid, data: &[f64], d: &DiskSpec) -> f64 {
    grid.disk_weights(d).into_iter().map(|(i, w)| w * data[i]).sum()
}

fn check_disk(f: &Field, d: &DiskSpec) -> Result<()> {
    if !f.grid.domain.contains_disk(d) {
        return Err(Error::DiskOutsideDomain);
    }
    if f.epsilon > d.radius {
        return Err(Error::Precondition(format!("need eps <= r, got eps = {}, r = {}", f.epsilon, d.radius)));
    }
    Ok(())
}

fn ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    pub center: [f64; 2],
    pub radius: f64,
    pub epsilon: f64,
    /// `E(D(9r/16))`.
    pub lhs: f64,
    /// `E(D(r))^{3/2} / sqrt(r)`.
    pub rhs_32: f64,
    /// `(eps / r) E(D(r))`.
    pub rhs_lin: f64,
    /// Smallest constant admitting the inequality for this field.
    pub c_min: f64,
}

impl DecayCheck {
    pub fn holds_with(&self, c_dec: f64) -> bool {
        self.lhs <= c_dec * (self.rhs_32 + self.rhs_lin)
    }
}

pub fn decay_check_with(f: &Field, dens: &EnergyDensity, d: &DiskSpec) -> Result<DecayCheck> {
    check_disk(f, d)?;
    let r = d.radius;
    let e_full = disk_sum(&f.grid, &dens.e, d);
    let lhs = disk_sum(&f.grid, &dens.e, &d.scaled(9.0 / 16.0));
    let rhs_32 = e_full.powf(1.5) / r.sqrt();
    let rhs_lin = f.epsilon / r * e_full;
    Ok(DecayCheck { center: d.center, radius: r, epsilon: f.epsilon, lhs, rhs_32, rhs_lin, c_min: ratio(lhs, rhs_32 + rhs_lin) })
}

/// Decay inequality on `d`, in its scaled form for `d` other than the unit
/// disk.
pub fn decay_check_on(f: &Field, p: &Potential, d: &DiskSpec) -> Result<DecayCheck> {
    let dens = densities_with(f, p, &gradient(f));
    decay_check_with(f, &dens, d)
}

/// Decay inequality on the unit disk.
pub fn decay_check(f: &Field, p: &Potential) -> Result<DecayCheck> {
    decay_check_on(f, p, &DiskSpec::unit())
}

/// Empirical `C_dec`: the largest per-field minimal constant.
pub fn empirical_c_dec(checks: &[DecayCheck]) -> f64 {
    checks.iter().map(|c| c.c_min).fold(0.0, f64::max)
}

/// Per-disk data entering every clearing-out verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskSample {
    pub member: usize,
    pub center: [f64; 2],
    pub radius: f64,
    pub epsilon: f64,
    /// `E(D(r))`.
    pub energy: f64,
    /// `E(D(r)) / r`.
    pub scaled_energy: f64,
    /// Majority nearest well over `D(3r/4)`.
    pub sigma: usize,
    /// `max |u - sigma|` over `D(3r/4)`.
    pub sup_dist: f64,
    /// `|u(x0) - sigma'|` for the well `sigma'` nearest to `u(x0)`.
    pub center_dist: f64,
    /// `E(D(5r/8))`.
    pub energy_on_58: f64,
    /// `E(D(5r/8)) / ((eps / r) E(D(r)))`.
    pub contraction: f64,
}

pub fn disk_sample_with(f: &Field, dens: &EnergyDensity, p: &Potential, d: &DiskSpec, member: usize) -> Result<DiskSample> {
    check_disk(f, d)?;
    let g = &*f.grid;
    let r = d.radius;
    let energy = disk_sum(g, &dens.e, d);
    let energy_on_58 = disk_sum(g, &dens.e, &d.scaled(5.0 / 8.0));
    let inner = g.nodes_in_disk(&d.scaled(0.75));
    let mut counts = vec![0usize; p.q()];
    for &idx in &inner {
        counts[p.closest_well(f.at(idx)).0] += 1;
    }
    let sigma = (0..p.q()).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap_or(0);
    let sup_dist = inner.iter().map(|&idx| dist(f.at(idx), p.well(sigma))).fold(0.0, f64::max);
    let at0 = f.sample(d.center).ok_or(Error::DiskOutsideDomain)?;
    let center_dist = p.closest_well(&at0).1;
    Ok(DiskSample {
        member,
        center: d.center,
        radius: r,
        epsilon: f.epsilon,
        energy,
        scaled_energy: energy / r,
        sigma,
        sup_dist,
        center_dist,
        energy_on_58,
        contraction: ratio(energy_on_58, f.epsilon / r * energy),
    })
}

/// Index span `[i0, i1)` of the sorted coordinates `xs` whose points
/// `(x, y)` lie in the closed disk `D(c, r)`.
fn row_span(xs: &[f64], y: f64, c: [f64; 2], r: f64) -> (usize, usize) {
    let inside = |x: f64| (x - c[0]).hypot(y - c[1]) <= r;
    let m = xs.partition_point(|&x| x < c[0]);
    let i0 = xs[..m].partition_point(|&x| !inside(x));
    let i1 = m + xs[m..].partition_point(|&x| inside(x));
    (i0, i1)
}

/// Rows `j` of `ys` with `|ys[j] - c_y| <= r`.
fn row_range(ys: &[f64], c: [f64; 2], r: f64) -> std::ops::Range<usize> {
    ys.partition_point(|&y| y < c[1] - r)..ys.partition_point(|&y| y <= c[1] + r)
}

/// Disk queries on one field in `O(rows)`. Energies use prefix sums on the
/// sub-cell points of `Grid::disk_weights`, so they equal `disk_sum` up to
/// rounding; well counts and well distances use node inclusion.
pub struct DiskIndex<'a> {
    field: &'a Field,
    potential: &'a Potential,
    xs: Vec<f64>,
    ys: Vec<f64>,
    sub_xs: Vec<f64>,
    sub_ys: Vec<f64>,
    energy: Vec<f64>,
    counts: Vec<Vec<u32>>,
    maxes: Vec<Vec<Vec<f64>>>,
}

impl<'a> DiskIndex<'a> {
    pub fn new(field: &'a Field, dens: &EnergyDensity, potential: &'a Potential) -> Self {
        let g = &*field.grid;
        let (sx, sy, h) = (g.nx + 1, g.ny + 1, g.h);
        let xs: Vec<f64> = (0..sx).map(|i| g.pos(g.index(i, 0))[0]).collect();
        let ys: Vec<f64> = (0..sy).map(|j| g.pos(g.index(0, j))[1]).collect();
        let offs = [-0.25 * h, 0.25 * h];
        let sub_xs: Vec<f64> = (0..2 * sx).map(|k| xs[k / 2] + offs[k % 2]).collect();
        let sub_ys: Vec<f64> = (0..2 * sy).map(|k| ys[k / 2] + offs[k % 2]).collect();
        let w = 2 * sx + 1;
        let mut energy = vec![0.0; w * 2 * sy];
        for (kj, &y) in sub_ys.iter().enumerate() {
            for (ki, &x) in sub_xs.iter().enumerate() {
                let idx = g.index(ki / 2, kj / 2);
                let v = if g.is_used(idx) && g.domain.contains([x, y]) { dens.e[idx] * h * h / 4.0 } else { 0.0 };
                energy[kj * w + ki + 1] = energy[kj * w + ki] + v;
            }
        }
        let q = potential.q();
        let closest: Vec<(usize, f64)> = (0..g.n_nodes()).map(|i| potential.closest_well(field.at(i))).collect();
        let mut counts = vec![vec![0u32; (sx + 1) * sy]; q];
        let mut maxes = Vec::with_capacity(q);
        let levels = usize::BITS as usize - sx.leading_zeros() as usize;
        for (wi, cnt) in counts.iter_mut().enumerate() {
            let mut base = vec![f64::NEG_INFINITY; sx * sy];
            for j in 0..sy {
                for i in 0..sx {
                    let idx = g.index(i, j);
                    let used = g.is_used(idx);
                    cnt[j * (sx + 1) + i + 1] = cnt[j * (sx + 1) + i] + (used && closest[idx].0 == wi) as u32;
                    if used {
                        base[j * sx + i] = dist(field.at(idx), potential.well(wi));
                    }
                }
            }
            let mut table = vec![base];
            for k in 1..levels {
                let (prev, span) = (&table[k - 1], 1usize << (k - 1));
                let next: Vec<f64> =
                    (0..sx * sy).map(|c| if c % sx + span < sx { prev[c].max(prev[c + span]) } else { prev[c] }).collect();
                table.push(next);
            }
            maxes.push(table);
        }
        DiskIndex { field, potential, xs, ys, sub_xs, sub_ys, energy, counts, maxes }
    }

    /// `disk_sum` of the energy density over `d`.
    pub fn energy(&self, d: &DiskSpec) -> f64 {
        let w = self.sub_xs.len() + 1;
        row_range(&self.sub_ys, d.center, d.radius)
            .map(|kj| {
                let (a, b) = row_span(&self.sub_xs, self.sub_ys[kj], d.center, d.radius);
                if b > a { self.energy[kj * w + b] - self.energy[kj * w + a] } else { 0.0 }
            })
            .sum()
    }

    fn row_max(&self, well: usize, row: usize, a: usize, b: usize) -> f64 {
        let k = (usize::BITS - 1 - (b - a).leading_zeros()) as usize;
        let t = &self.maxes[well][k];
        let sx = self.xs.len();
        t[row * sx + a].max(t[row * sx + b - (1 << k)])
    }

    /// Same quantities as `disk_sample_with`.
    pub fn sample(&self, d: &DiskSpec, member: usize) -> Result<DiskSample> {
        let f = self.field;
        check_disk(f, d)?;
        let r = d.radius;
        let energy = self.energy(d);
        let energy_on_58 = self.energy(&d.scaled(5.0 / 8.0));
        let inner = d.scaled(0.75);
        let sx = self.xs.len();
        let spans: Vec<(usize, usize, usize)> = row_range(&self.ys, inner.center, inner.radius)
            .map(|j| {
                let (a, b) = row_span(&self.xs, self.ys[j], inner.center, inner.radius);
                (j, a, b)
            })
            .filter(|&(_, a, b)| b > a)
            .collect();
        let counts: Vec<u32> = self
            .counts
            .iter()
            .map(|c| spans.iter().map(|&(j, a, b)| c[j * (sx + 1) + b] - c[j * (sx + 1) + a]).sum())
            .collect();
        let sigma = (0..self.potential.q()).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap_or(0);
        let sup_dist = spans.iter().map(|&(j, a, b)| self.row_max(sigma, j, a, b)).fold(0.0, f64::max);
        let at0 = f.sample(d.center).ok_or(Error::DiskOutsideDomain)?;
        let center_dist = self.potential.closest_well(&at0).1;
        Ok(DiskSample {
            member,
            center: d.center,
            radius: r,
            epsilon: f.epsilon,
            energy,
            scaled_energy: energy / r,
            sigma,
            sup_dist,
            center_dist,
            energy_on_58,
            contraction: ratio(energy_on_58, f.epsilon / r * energy),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingVerdict {
    pub sample: DiskSample,
    pub eta: f64,
    /// `E / r <= eta`.
    pub premise: bool,
    /// Set when the premise fails; no claim is made.
    pub vacuous: bool,
    pub uniform_pass: bool,
    pub c_nrg: Option<f64>,
    pub contraction_pass: Option<bool>,
    pub pass: bool,
    pub record: CheckRecord,
}

impl ClearingVerdict {
    pub fn from_sample(sample: DiskSample, c: &StructuralConstants, eta: f64, c_nrg: Option<f64>) -> Self {
        let region = format!("disk({},{};{})", sample.center[0], sample.center[1], sample.radius);
        let premise = sample.scaled_energy <= eta;
        if !premise {
            return ClearingVerdict {
                record: CheckRecord::vacuous("clearing_out", &region).with("scaled_energy", sample.scaled_energy).with("eta", eta),
                sample,
                eta,
                premise,
                vacuous: true,
                uniform_pass: false,
                c_nrg,
                contraction_pass: None,
                pass: true,
            };
        }
        let uniform_pass = sample.sup_dist <= 0.5 * c.mu0;
        let contraction_pass = c_nrg.map(|k| sample.contraction <= k);
        let pass = uniform_pass && contraction_pass.unwrap_or(true);
        let record = CheckRecord::inequality("clearing_out", &region, sample.sup_dist, 0.5 * c.mu0, 0.0, 1e-300)
            .with_premise(true)
            .with("scaled_energy", sample.scaled_energy)
            .with("eta", eta)
            .with("contraction", sample.contraction)
            .with("sigma", sample.sigma as f64);
        let record = CheckRecord { pass, ..record };
        let record = match c_nrg {
            Some(k) => record.with("c_nrg", k),
            None => record,
        };
        ClearingVerdict { sample, eta, premise, vacuous: false, uniform_pass, c_nrg, contraction_pass, pass, record }
    }
}

/// Clearing-out verdict on `d` for the threshold `eta`. A failed premise is
/// reported as a vacuous verdict.
pub fn clearing_out_check(
    f: &Field,
    p: &Potential,
    c: &StructuralConstants,
    d: &DiskSpec,
    eta: f64,
    c_nrg: Option<f64>,
) -> Result<ClearingVerdict> {
    let dens = densities_with(f, p, &gradient(f));
    Ok(ClearingVerdict::from_sample(disk_sample_with(f, &dens, p, d, 0)?, c, eta, c_nrg))
}

/// Disk sampling: radii `2^-j * width` for `j` in `exponents`, kept when
/// `r >= min_radius_eps * eps`, plus the floor `min_radius_eps * eps` itself
/// when it fits; centres on a lattice of step
/// `min(lattice_step * r, max_step_eps * eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiskSampling {
    pub exponents: Vec<u32>,
    pub lattice_step: f64,
    pub max_step_eps: f64,
    pub min_radius_eps: f64,
}

impl Default for DiskSampling {
    fn default() -> Self {
        DiskSampling { exponents: (1..=5).collect(), lattice_step: 0.25, max_step_eps: 0.25, min_radius_eps: 4.0 }
    }
}

fn bbox(domain: &Domain) -> [f64; 4] {
    match *domain {
        Domain::Rectangle { x0, y0, x1, y1 } => [x0, y0, x1, y1],
        Domain::Disk { cx, cy, r } => [cx - r, cy - r, cx + r, cy + r],
    }
}

pub fn lattice_disks(domain: &Domain, eps: f64, s: &DiskSampling) -> Vec<DiskSpec> {
    let b = bbox(domain);
    let floor = s.min_radius_eps * eps;
    let mut radii: Vec<f64> = s.exponents.iter().map(|&j| domain.width() * 0.5f64.powi(j as i32)).filter(|&r| r >= floor).collect();
    if floor <= 0.5 * domain.width() && !radii.contains(&floor) {
        radii.push(floor);
    }
    let mut out = Vec::new();
    for r in radii {
        let step = (s.lattice_step * r).min(s.max_step_eps * eps);
        let nx = ((b[2] - b[0]) / step).floor() as usize;
        let ny = ((b[3] - b[1]) / step).floor() as usize;
        for jy in 0..=ny {
            for ix in 0..=nx {
                let d = DiskSpec::new([b[0] + ix as f64 * step, b[1] + jy as f64 * step], r);
                if domain.contains_disk(&d) {
                    out.push(d);
                }
            }
        }
    }
    out
}

/// `n` disks with Halton centres and radii in `[min_radius_eps * eps, width / 2]`
/// contained in the domain. `offset` selects a disjoint stretch of the
/// sequence.
pub fn halton_disks(domain: &Domain, eps: f64, min_radius_eps: f64, n: usize, offset: u64) -> Vec<DiskSpec> {
    let b = bbox(domain);
    let (lo, hi) = (min_radius_eps * eps, 0.5 * domain.width());
    let mut out = Vec::with_capacity(n);
    if lo > hi {
        return out;
    }
    let mut t = [0.0; 3];
    let mut i = offset + 1;
    while out.len() < n {
        halton(i, 3, &mut t);
        i += 1;
        let r = lo + (hi - lo) * t[2] * t[2];
        let d = DiskSpec::new([b[0] + (b[2] - b[0]) * t[0], b[1] + (b[3] - b[1]) * t[1]], r);
        if domain.contains_disk(&d) {
            out.push(d);
        }
    }
    out
}

/// Samples of every member field over its disks.
pub fn sample_family(fields: &[&Field], p: &Potential, disks: &dyn Fn(&Field) -> Vec<DiskSpec>) -> Result<Vec<DiskSample>> {
    let mut out = Vec::new();
    for (m, f) in fields.iter().enumerate() {
        let dens = densities_with(f, p, &gradient(f));
        let index = DiskIndex::new(f, &dens, p);
        let ds = disks(f);
        let samples: Vec<Result<DiskSample>> = crate::par::map(ds.len(), |i| index.sample(&ds[i], m));
        for s in samples {
            out.push(s?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eta0Scan {
    /// `ETA0_SAFETY * threshold` below the scan bound, else the bound.
    pub eta0: f64,
    /// Bisection threshold on the samples.
    pub threshold: f64,
    pub upper: f64,
    pub hit_upper: bool,
    pub n_disks: usize,
    /// Disks with `E / r <= eta0`.
    pub n_premise: usize,
    /// Disks where the uniform bound fails, whatever their energy.
    pub n_fail: usize,
    /// Smallest `E / r` among failing disks.
    pub min_fail_scaled: Option<f64>,
}

/// Largest `eta` in `[0, upper]` with `pass(s)` for every sample of
/// `score(s) <= eta`, by bisection.
fn threshold_scan(samples: &[DiskSample], upper: f64, score: impl Fn(&DiskSample) -> f64, pass: impl Fn(&DiskSample) -> bool) -> Result<(f64, Option<f64>)> {
    if !samples.iter().any(|s| score(s) <= upper) {
        return Err(Error::DegenerateFamily);
    }
    let min_fail = samples.iter().filter(|s| !pass(s)).map(&score).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    let ok = |eta: f64| samples.iter().all(|s| score(s) > eta || pass(s));
    if ok(upper) {
        return Ok((upper, min_fail));
    }
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, min_fail))
}

/// Operational `eta0` over the samples of a family.
pub fn eta0_from_samples(samples: &[DiskSample], c: &StructuralConstants, upper: f64) -> Result<Eta0Scan> {
    let pass = |s: &DiskSample| s.sup_dist <= 0.5 * c.mu0;
    let (threshold, min_fail) = threshold_scan(samples, upper, |s| s.scaled_energy, pass)?;
    let hit_upper = threshold == upper;
    let eta0 = if hit_upper { upper } else { ETA0_SAFETY * threshold };
    Ok(Eta0Scan {
        eta0,
        threshold,
        upper,
        hit_upper,
        n_disks: samples.len(),
        n_premise: samples.iter().filter(|s| s.scaled_energy <= eta0).count(),
        n_fail: samples.iter().filter(|s| !pass(s)).count(),
        min_fail_scaled: min_fail,
    })
}

/// `eta0` of a solved family over the lattice disks of each member.
pub fn eta0_scan(family: &[SolveResult], p: &Potential, c: &StructuralConstants, sampling: &DiskSampling) -> Result<(Eta0Scan, Vec<DiskSample>)> {
    if family.is_empty() {
        return Err(Error::DegenerateFamily);
    }
    let fields: Vec<&Field> = family.iter().map(|r| &r.field).collect();
    let samples = sample_family(&fields, p, &|f| lattice_disks(&f.grid.domain, f.epsilon, sampling))?;
    Ok((eta0_from_samples(&samples, c, ETA_SCAN_MAX)?, samples))
}

/// `C_NRG_SAFETY` times the largest contraction ratio among samples meeting
/// the premise with a passing uniform bound.
pub fn fit_c_nrg(samples: &[DiskSample], c: &StructuralConstants, eta0: f64) -> f64 {
    C_NRG_SAFETY
        * samples
            .iter()
            .filter(|s| s.scaled_energy <= eta0 && s.sup_dist <= 0.5 * c.mu0)
            .map(|s| s.contraction)
            .fold(0.0, f64::max)
}

/// `gamma0 = sum_k (2/3)^{k+1} ((ln 2 / 2) k + ln(2 C_dec)) = 2 ln(4 C_dec)`.
pub fn gamma0(c_dec: f64) -> f64 {
    2.0 * (4.0 * c_dec).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eta1Fit {
    /// Largest unit-scale energy for which the centre value was always
    /// close to a well.
    pub empirical: f64,
    /// `exp(-(1 + gamma0))`.
    pub from_c_dec: f64,
    pub eta1: f64,
}

pub fn fit_eta1(samples: &[DiskSample], c: &StructuralConstants, c_dec: f64) -> Result<Eta1Fit> {
    let (empirical, _) = threshold_scan(samples, ETA_SCAN_MAX, |s| s.scaled_energy, |s| s.center_dist <= 0.5 * c.mu0)?;
    let from_c_dec = (-(1.0 + gamma0(c_dec))).exp();
    Ok(Eta1Fit { empirical, from_c_dec, eta1: empirical.min(from_c_dec) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicRow {
    pub n: usize,
    pub r: f64,
    pub energy: f64,
    /// `-ln E_n` (infinite when `E_n = 0`).
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub epsilon: f64,
    pub c_dec: f64,
    /// Rows for every `r_n = 2^-n >= eps`.
    pub rows: Vec<DyadicRow>,
    /// Largest `n` with `E_n >= 2^n eps^2`.
    pub n_eps: Option<usize>,
    /// `A_{n+1} >= (3/2) A_n - (ln 2 / 2) n - ln(2 C_dec)` for `n <= n_eps`.
    pub steps: Vec<CheckRecord>,
    /// Smallest `A_{n+1} / A_n` over the checked steps with `A_n > 0`.
    pub min_growth_ratio: Option<f64>,
    pub energy_nonincreasing: bool,
    pub eta1: Option<f64>,
    pub eta1_premise: Option<bool>,
    /// `E_n <= exp(-(3/2)^n)` for `n <= n_eps + 1`, when the premise holds.
    pub super_exponential: Option<bool>,
}

fn neg_log(e: f64) -> f64 {
    if e > 0.0 {
        -e.ln()
    } else {
        f64::INFINITY
    }
}

/// Energies on the dyadic disks `D(2^-n)` about the origin.
pub fn iterate_dyadic(f: &Field, p: &Potential, c_dec: f64, eta1: Option<f64>) -> Result<IterationTrace> {
    let eps = f.epsilon;
    if !f.grid.domain.contains_disk(&DiskSpec::unit()) {
        return Err(Error::DiskOutsideDomain);
    }
    if eps > 1.0 {
        return Err(Error::Precondition(format!("need eps <= 1, got {eps}")));
    }
    let dens = densities_with(f, p, &gradient(f));
    let mut rows = Vec::new();
    let mut n = 0usize;
    loop {
        let r = 0.5f64.powi(n as i32);
        if r < eps {
            break;
        }
        let energy = disk_sum(&f.grid, &dens.e, &DiskSpec::new([0.0, 0.0], r));
        rows.push(DyadicRow { n, r, energy, a: neg_log(energy) });
        n += 1;
    }
    let n_eps = rows.iter().rev().find(|row| row.energy >= 2f64.powi(row.n as i32) * eps * eps).map(|row| row.n);
    let energy_nonincreasing = rows.windows(2).all(|w| w[1].energy <= w[0].energy);
    let mut steps = Vec::new();
    let mut min_growth: Option<f64> = None;
    if let Some(ne) = n_eps {
        for w in rows.windows(2).take(ne + 1) {
            let (a0, a1) = (w[0].a, w[1].a);
            let fnn = 0.5 * std::f64::consts::LN_2 * w[0].n as f64 + (2.0 * c_dec).ln();
            let lower = 1.5 * a0 - fnn;
            let rec = if a1.is_infinite() || a0.is_infinite() {
                CheckRecord::bounded("dyadic_step", &format!("n={}", w[0].n), 0.0, 0.0)
            } else {
                CheckRecord::inequality("dyadic_step", &format!("n={}", w[0].n), lower, a1, ITERATION_SLACK, 1.0)
            };
            steps.push(rec.with("a_n", a0).with("a_next", a1));
            if a0 > 0.0 && a0.is_finite() {
                let g = a1 / a0;
                min_growth = Some(min_growth.map_or(g, |m: f64| m.min(g)));
            }
        }
    }
    let eta1_premise = eta1.map(|e| rows[0].energy <= e);
    let super_exponential = match (eta1_premise, n_eps) {
        (Some(true), Some(ne)) => {
            Some(rows.iter().take(ne + 2).all(|row| row.energy <= (-(1.5f64.powi(row.n as i32))).exp()))
        }
        (Some(true), None) => Some(rows.first().is_none_or(|row| row.energy <= (-1.0f64).exp())),
        _ => None,
    };
    Ok(IterationTrace {
        epsilon: eps,
        c_dec,
        rows,
        n_eps,
        steps,
        min_growth_ratio: min_growth,
        energy_nonincreasing,
        eta1,
        eta1_premise,
        super_exponential,
    })
}

/// Lower bounds `b_n = c0^n (a0 - sum_{k<n} c0^{-(k+1)} f_k)` for
/// `n = 0..=f.len()`.
pub fn sequence_bound<T: Clone + Num>(a0: &T, c0: &T, f: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(f.len() + 1);
    let mut pow = T::one();
    let mut sum = T::zero();
    out.push(a0.clone());
    for fk in f {
        pow = pow * c0.clone();
        sum = sum + fk.clone() / pow.clone();
        out.push(pow.clone() * (a0.clone() - sum.clone()));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceCheck {
    /// `a_{n+1} >= c0 a_n - f_n` for every available `n`.
    pub premise: bool,
    /// `a_n >= b_n` for every `n`.
    pub dominated: bool,
    pub first_violation: Option<usize>,
}

/// Verifies that a sequence obeying the recursive inequality dominates the
/// closed-form bound.
pub fn verify_sequence<T: Clone + Num + PartialOrd>(a: &[T], c0: &T, f: &[T]) -> SequenceCheck {
    let m = a.len().saturating_sub(1).min(f.len());
    let premise = (0..m).all(|n| a[n + 1] >= c0.clone() * a[n].clone() - f[n].clone());
    let bounds = match a.first() {
        Some(a0) => sequence_bound(a0, c0, &f[..m]),
        None => Vec::new(),
    };
    let first_violation = (0..bounds.len()).find(|&n| a[n] < bounds[n]);
    SequenceCheck { premise, dominated: first_violation.is_none(), first_violation }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappacityReport {
    pub rho: f64,
    pub kappa: f64,
    pub sigma_main: usize,
    pub boundary_max_dist: f64,
    /// `int_Upsilon e`.
    pub lhs: f64,
    /// `int_{D(rho)} V / eps`.
    pub potential_term: f64,
    /// `oint_{dD(rho)} e`.
    pub boundary_term: f64,
    /// `kappa * potential_term + eps * boundary_term`.
    pub rhs: f64,
    pub c_min: f64,
}

/// Energy on the well neighbourhoods of `D(rho)` against the potential and
/// boundary terms, on a field over the unit disk.
pub fn kappacity_check(f: &Field, p: &Potential, c: &StructuralConstants, rho: f64, kappa: f64) -> Result<KappacityReport> {
    if !(0.5..=0.75).contains(&rho) || !(kappa > 0.0 && kappa < 0.25 * c.mu0) {
        return Err(Error::Precondition(format!("need rho in [1/2, 3/4] and 0 < kappa < mu0/4, got rho = {rho}, kappa = {kappa}")));
    }
    let d = DiskSpec::new([0.0, 0.0], rho);
    let grad = gradient(f);
    let cs = restrict_circle_with(f, &grad, &d, n_theta(rho, f.h()))?;
    let (sigma_main, boundary_max_dist) = (0..p.q())
        .map(|i| (i, (0..cs.len()).map(|m| dist(cs.value(m), p.well(i))).fold(0.0, f64::max)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one well");
    if boundary_max_dist >= kappa {
        return Err(Error::BoundaryConditionViolated { max_dist: boundary_max_dist, kappa });
    }
    let dens = densities_with(f, p, &grad);
    let fam = RegionFamily::new(f, p, c, kappa, &d)?;
    let mut lhs = 0.0;
    for i in 0..p.q() {
        lhs += integrate(&dens.e, &fam.upsilon_weights(f, i)?);
    }
    let eps = f.epsilon;
    let potential_term = disk_sum(&f.grid, &dens.v, &d) / eps;
    let boundary_term = circle_energy(f, p, &grad, &d)?;
    let rhs = kappa * potential_term + eps * boundary_term;
    Ok(KappacityReport { rho, kappa, sigma_main, boundary_max_dist, lhs, potential_term, boundary_term, rhs, c_min: ratio(lhs, rhs) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaLinearity {
    pub full: KappacityReport,
    pub half: KappacityReport,
    /// `(lhs(kappa) / kappa) / (lhs(kappa/2) / (kappa/2))`.
    pub ratio: f64,
    pub check: CheckRecord,
}

/// Runs the neighbourhood estimate at `kappa` and `kappa / 2`.
pub fn kappacity_linearity(f: &Field, p: &Potential, c: &StructuralConstants, rho: f64, kappa: f64, slack: f64) -> Result<KappaLinearity> {
    let full = kappacity_check(f, p, c, rho, kappa)?;
    let half = kappacity_check(f, p, c, rho, 0.5 * kappa)?;
    let ratio = if full.lhs == 0.0 && half.lhs == 0.0 { 1.0 } else { ratio(full.lhs / kappa, half.lhs / (0.5 * kappa)) };
    let dev = ratio.max(1.0 / ratio);
    let check = CheckRecord::inequality("kappa_linearity", &format!("D({rho})"), dev, 2.0, slack, 1.0).with("ratio", ratio);
    Ok(KappaLinearity { full, half, ratio, check })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorneoReport {
    pub disk: DiskSpec,
    /// `E(D(rho)) / rho`.
    pub energy: f64,
    /// `eps^-1 int_{D(3rho/4)} V / rho`.
    pub potential: f64,
    pub m0: f64,
    pub k_pot: f64,
    pub premise: bool,
    /// `E(D(rho/2))`.
    pub lhs: f64,
    /// `int_{D(3rho/4)} V / eps`.
    pub potential_term: f64,
    /// `(eps / rho) E(D(rho) minus D(rho/2))`.
    pub annulus_term: f64,
    pub c_min: f64,
}

/// Energy on `D(rho/2)` against the potential on `D(3rho/4)` and the
/// annulus energy, under the premise `E <= m0 rho`,
/// `eps^-1 int V <= k_pot rho`.
pub fn borneo_on(f: &Field, p: &Potential, d: &DiskSpec, m0: f64, k_pot: f64) -> Result<BorneoReport> {
    check_disk(f, d)?;
    let dens = densities_with(f, p, &gradient(f));
    let g = &*f.grid;
    let (rho, eps) = (d.radius, f.epsilon);
    let e_full = disk_sum(g, &dens.e, d);
    let lhs = disk_sum(g, &dens.e, &d.scaled(0.5));
    let potential_term = disk_sum(g, &dens.v, &d.scaled(0.75)) / eps;
    let annulus_term = eps / rho * (e_full - lhs).max(0.0);
    let premise = e_full <= m0 * rho && potential_term <= k_pot * rho;
    Ok(BorneoReport {
        disk: *d,
        energy: e_full / rho,
        potential: potential_term / rho,
        m0,
        k_pot,
        premise,
        lhs,
        potential_term,
        annulus_term,
        c_min: ratio(lhs, potential_term + annulus_term),
    })
}

pub fn borneo_check(f: &Field, p: &Potential, m0: f64, k_pot: f64) -> Result<BorneoReport> {
    borneo_on(f, p, &DiskSpec::unit(), m0, k_pot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorReport {
    pub delta: f64,
    /// `int_{U_{delta/4}} e`.
    pub inner: f64,
    /// `int_{V_delta} e`.
    pub shell: f64,
    /// `int_{U_delta} e`.
    pub outer: f64,
    /// `eps^-1 int_{U_{delta/2}} V`.
    pub potential: f64,
    pub k_ext: Option<f64>,
    pub premise: Option<bool>,
    /// `inner / (shell + eps outer)`.
    pub c_ext_min: f64,
    /// `potential / shell`.
    pub c_subdomain_min: f64,
}

/// Node distances to the set `u` (physical units).
pub fn set_distance(grid: &Grid, u: &[bool]) -> Vec<f64> {
    let (nx, ny) = (grid.nx + 1, grid.ny + 1);
    distance_transform_sq(u, nx, ny).into_iter().map(|d| grid.h * d.sqrt()).collect()
}

/// Interior energy of `U_{delta/4}` against the shell `V_delta = U_delta
/// minus U`, with `U_delta = {dist(x, U) <= delta}` built by distance
/// transform.
pub fn exterior_bound_check(f: &Field, p: &Potential, u: &[bool], delta: f64, k_ext: Option<f64>) -> Result<ExteriorReport> {
    let g = &*f.grid;
    if u.len() != g.n_nodes() {
        return Err(Error::GridMismatch(format!("mask has {} nodes, grid {}", u.len(), g.n_nodes())));
    }
    if !u.iter().any(|&b| b) {
        return Err(Error::MaskGeometryError("empty set".into()));
    }
    let dmap = set_distance(g, u);
    let within = |t: f64| -> Vec<bool> { dmap.iter().map(|&d| d <= t * (1.0 + 1e-12)).collect() };
    let u_delta = within(delta);
    if let Some(bad) = (0..g.n_nodes()).find(|&i| u_delta[i] && g.kind(i) != NodeKind::Inside) {
        return Err(Error::MaskGeometryError(format!("delta-neighbourhood reaches the domain boundary at {:?}", g.pos(bad))));
    }
    let shell: Vec<bool> = (0..g.n_nodes()).map(|i| u_delta[i] && !u[i]).collect();
    let dens = densities_with(f, p, &gradient(f));
    let on = |m: &[bool], data: &[f64]| -> Result<f64> { Ok(integrate(data, &g.region_weights(&Region::from_mask(m))?)) };
    let inner = on(&within(0.25 * delta), &dens.e)?;
    let shell_e = on(&shell, &dens.e)?;
    let outer = on(&u_delta, &dens.e)?;
    let potential = on(&within(0.5 * delta), &dens.v)? / f.epsilon;
    Ok(ExteriorReport {
        delta,
        inner,
        shell: shell_e,
        outer,
        potential,
        k_ext,
        premise: k_ext.map(|k| shell_e <= k),
        c_ext_min: ratio(inner, shell_e + f.epsilon * outer),
        c_subdomain_min: ratio(potential, shell_e),
    })
}
