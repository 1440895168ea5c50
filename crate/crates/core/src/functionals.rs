//! Pointwise densities and integral diagnostics: energy, potential mass,
//! discrepancy, `J`, Hopf differential, stress tensor, Pohozaev identities,
//! monotonicity profiles and Modica-Mortola maps.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient, n_theta, restrict_circle_with, DiskSpec, Field, NodeKind, Region};
use crate::par;
use crate::potential::{Potential, StructuralConstants};
use crate::report::CheckRecord;

/// Per-node densities. Unused nodes carry zeros.
#[derive(Debug, Clone)]
pub struct EnergyDensity {
    /// `eps |grad u|^2 / 2 + V / eps`.
    pub e: Vec<f64>,
    /// `V / eps`.
    pub v: Vec<f64>,
    /// `|grad u| sqrt(V)`.
    pub j: Vec<f64>,
    /// `V / eps - eps |grad u|^2 / 2`.
    pub xi: Vec<f64>,
    /// `|grad u|^2`.
    pub grad_sq: Vec<f64>,
}

pub fn densities_with(f: &Field, p: &Potential, grad: &[f64]) -> EnergyDensity {
    let k = f.k;
    let eps = f.epsilon;
    let g = &*f.grid;
    let rows: Vec<[f64; 5]> = par::map(g.n_nodes(), |idx| {
        if !g.is_used(idx) {
            return [0.0; 5];
        }
        let gs: f64 = grad[idx * 2 * k..(idx + 1) * 2 * k].iter().map(|t| t * t).sum();
        let vv = p.eval(f.at(idx)).max(0.0);
        let kin = 0.5 * eps * gs;
        let pot = vv / eps;
        [kin + pot, pot, gs.sqrt() * vv.sqrt(), pot - kin, gs]
    });
    let mut d = EnergyDensity {
        e: Vec::with_capacity(rows.len()),
        v: Vec::with_capacity(rows.len()),
        j: Vec::with_capacity(rows.len()),
        xi: Vec::with_capacity(rows.len()),
        grad_sq: Vec::with_capacity(rows.len()),
    };
    for r in rows {
        d.e.push(r[0]);
        d.v.push(r[1]);
        d.j.push(r[2]);
        d.xi.push(r[3]);
        d.grad_sq.push(r[4]);
    }
    d
}

pub fn densities(f: &Field, p: &Potential) -> EnergyDensity {
    densities_with(f, p, &gradient(f))
}

/// Same as [`densities`]; named for the discrepancy diagnostic.
pub fn discrepancy_field(f: &Field, p: &Potential) -> EnergyDensity {
    densities(f, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionEnergy {
    pub energy: f64,
    pub potential_mass: f64,
}

pub fn integrate(data: &[f64], weights: &[f64]) -> f64 {
    par::sum(data.len(), |i| if weights[i] == 0.0 { 0.0 } else { data[i] * weights[i] })
}

pub fn energy_on_region(f: &Field, p: &Potential, region: &Region) -> Result<RegionEnergy> {
    let d = densities(f, p);
    let w = f.grid.region_weights(region)?;
    Ok(RegionEnergy { energy: integrate(&d.e, &w), potential_mass: integrate(&d.v, &w) })
}

/// Total energy over the domain.
pub fn total_energy(f: &Field, p: &Potential) -> f64 {
    energy_on_region(f, p, &Region::Domain).map(|r| r.energy).unwrap_or(f64::NAN)
}

/// Minimum of `xi` over inside nodes at distance `>= margin` from the
/// domain boundary (`+inf` when no node qualifies).
pub fn interior_min_discrepancy(f: &Field, d: &EnergyDensity, margin: f64) -> f64 {
    let g = &*f.grid;
    (0..g.n_nodes())
        .filter(|&i| g.kind(i) == NodeKind::Inside && g.domain.inner_distance(g.pos(i)) >= margin)
        .map(|i| d.xi[i])
        .fold(f64::INFINITY, f64::min)
}

/// `omega = eps (|u_1|^2 - |u_2|^2 - 2 i u_1 . u_2)` per node.
#[derive(Debug, Clone)]
pub struct HopfField {
    pub omega_re: Vec<f64>,
    pub omega_im: Vec<f64>,
}

pub fn hopf_from_gradient(grad: &[f64], k: usize, eps: f64) -> HopfField {
    let n = grad.len() / (2 * k);
    let (mut re, mut im) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for idx in 0..n {
        let g = &grad[idx * 2 * k..(idx + 1) * 2 * k];
        let (u1, u2) = g.split_at(k);
        let a: f64 = u1.iter().map(|t| t * t).sum();
        let b: f64 = u2.iter().map(|t| t * t).sum();
        let c: f64 = u1.iter().zip(u2).map(|(x, y)| x * y).sum();
        re.push(eps * (a - b));
        im.push(-2.0 * eps * c);
    }
    HopfField { omega_re: re, omega_im: im }
}

pub fn hopf_differential(f: &Field) -> HopfField {
    hopf_from_gradient(&gradient(f), f.k, f.epsilon)
}

/// Symmetric 2x2 tensors stored as `[a11, a12, a22]` per node.
#[derive(Debug, Clone)]
pub struct StressTensor {
    /// `A = e delta - eps d_i u . d_j u`.
    pub a: Vec<[f64; 3]>,
    /// Traceless part.
    pub t: Vec<[f64; 3]>,
    /// `V / eps`.
    pub v: Vec<f64>,
}

pub fn stress_tensor_with(f: &Field, p: &Potential, grad: &[f64]) -> StressTensor {
    let k = f.k;
    let eps = f.epsilon;
    let g = &*f.grid;
    let rows: Vec<([f64; 3], [f64; 3], f64)> = par::map(g.n_nodes(), |idx| {
        if !g.is_used(idx) {
            return ([0.0; 3], [0.0; 3], 0.0);
        }
        let gr = &grad[idx * 2 * k..(idx + 1) * 2 * k];
        let (u1, u2) = gr.split_at(k);
        let a: f64 = u1.iter().map(|t| t * t).sum();
        let b: f64 = u2.iter().map(|t| t * t).sum();
        let c: f64 = u1.iter().zip(u2).map(|(x, y)| x * y).sum();
        let vv = p.eval(f.at(idx)).max(0.0) / eps;
        let t11 = 0.5 * eps * (b - a);
        let t12 = -eps * c;
        let e = 0.5 * eps * (a + b) + vv;
        ([e - eps * a, -eps * c, e - eps * b], [t11, t12, -t11], vv)
    });
    let mut s = StressTensor { a: Vec::with_capacity(rows.len()), t: Vec::with_capacity(rows.len()), v: Vec::with_capacity(rows.len()) };
    for (a, t, v) in rows {
        s.a.push(a);
        s.t.push(t);
        s.v.push(v);
    }
    s
}

pub fn stress_tensor(f: &Field, p: &Potential) -> StressTensor {
    stress_tensor_with(f, p, &gradient(f))
}

/// Smooth compactly supported test vector field with its Jacobian
/// `dx[i][j] = d X_i / d x_j`.
pub trait TestField: Sync {
    fn eval(&self, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetKind {
    Dilation,
    TranslateX,
    TranslateY,
    Rotation,
    Shear,
}

pub const PRESETS: [PresetKind; 5] =
    [PresetKind::Dilation, PresetKind::TranslateX, PresetKind::TranslateY, PresetKind::Rotation, PresetKind::Shear];

/// `X = phi(x) b(x)` with the bump `b = exp(1 - 1 / (1 - |x - c|^2 / R^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpField {
    pub kind: PresetKind,
    pub center: [f64; 2],
    pub radius: f64,
}

/// Bump value and gradient.
pub fn bump(center: [f64; 2], radius: f64, x: [f64; 2]) -> (f64, [f64; 2]) {
    let d = [x[0] - center[0], x[1] - center[1]];
    let rho2 = (d[0] * d[0] + d[1] * d[1]) / (radius * radius);
    if rho2 >= 1.0 {
        return (0.0, [0.0, 0.0]);
    }
    let q = 1.0 - rho2;
    let b = (1.0 - 1.0 / q).exp();
    let s = -2.0 * b / (radius * radius * q * q);
    (b, [s * d[0], s * d[1]])
}

impl TestField for BumpField {
    fn eval(&self, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let (b, db) = bump(self.center, self.radius, x);
        if b == 0.0 {
            return ([0.0; 2], [[0.0; 2]; 2]);
        }
        let d = [(x[0] - self.center[0]) / self.radius, (x[1] - self.center[1]) / self.radius];
        let ir = 1.0 / self.radius;
        let (phi, dphi): ([f64; 2], [[f64; 2]; 2]) = match self.kind {
            PresetKind::Dilation => (d, [[ir, 0.0], [0.0, ir]]),
            PresetKind::TranslateX => ([1.0, 0.0], [[0.0; 2]; 2]),
            PresetKind::TranslateY => ([0.0, 1.0], [[0.0; 2]; 2]),
            PresetKind::Rotation => ([-d[1], d[0]], [[0.0, -ir], [ir, 0.0]]),
            PresetKind::Shear => ([d[1], 0.0], [[0.0, ir], [0.0, 0.0]]),
        };
        let mut jac = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                jac[i][j] = dphi[i][j] * b + phi[i] * db[j];
            }
        }
        ([phi[0] * b, phi[1] * b], jac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressResidual {
    /// `int A : grad X`.
    pub real: f64,
    /// `int Re omega (d1X1 - d2X2) - Im omega (d1X2 + d2X1) - 2 (V/eps) div X`,
    /// equal to `-2 real` for exact integrals.
    pub complex: f64,
    /// `int |A| |grad X|`, used to normalize.
    pub scale: f64,
}

impl StressResidual {
    pub fn normalized(&self) -> f64 {
        if self.scale > 0.0 {
            self.real / self.scale
        } else {
            0.0
        }
    }

    /// Relative disagreement between `real` and `-complex / 2`.
    pub fn form_mismatch(&self) -> f64 {
        let d = (self.real + 0.5 * self.complex).abs();
        if self.scale > 0.0 {
            d / self.scale
        } else {
            d
        }
    }
}

pub fn stress_divergence_residual(f: &Field, p: &Potential, x: &dyn TestField) -> StressResidual {
    let grad = gradient(f);
    let st = stress_tensor_with(f, p, &grad);
    let hopf = hopf_from_gradient(&grad, f.k, f.epsilon);
    let g = &*f.grid;
    let w = g.region_weights(&Region::Domain).expect("domain region");
    let terms: Vec<[f64; 3]> = par::map(g.n_nodes(), |idx| {
        if w[idx] == 0.0 {
            return [0.0; 3];
        }
        let (_, dx) = x.eval(g.pos(idx));
        let a = st.a[idx];
        let real = a[0] * dx[0][0] + a[1] * (dx[0][1] + dx[1][0]) + a[2] * dx[1][1];
        let dz_re = dx[0][0] - dx[1][1];
        let dz_im = dx[1][0] + dx[0][1];
        let div = dx[0][0] + dx[1][1];
        let complex = hopf.omega_re[idx] * dz_re - hopf.omega_im[idx] * dz_im - 2.0 * st.v[idx] * div;
        let an = (a[0] * a[0] + 2.0 * a[1] * a[1] + a[2] * a[2]).sqrt();
        let dn = (dx[0][0].powi(2) + dx[0][1].powi(2) + dx[1][0].powi(2) + dx[1][1].powi(2)).sqrt();
        [real * w[idx], complex * w[idx], an * dn * w[idx]]
    });
    let sum = |c: usize| par::sum(terms.len(), |i| terms[i][c]);
    StressResidual { real: sum(0), complex: sum(1), scale: sum(2) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pohozaev {
    /// `eps^-2 int_D V`.
    pub lhs: f64,
    /// `(r/4) oint (|u_tau|^2 - |u_r|^2 + 2 eps^-2 V)`.
    pub rhs: f64,
    pub residual: f64,
}

impl Pohozaev {
    pub fn relative(&self) -> f64 {
        if self.lhs.abs() > 0.0 {
            self.residual.abs() / self.lhs.abs()
        } else {
            self.residual.abs()
        }
    }
}

fn check_disk(f: &Field, d: &DiskSpec) -> Result<()> {
    if f.grid.domain.contains_disk(d) {
        Ok(())
    } else {
        Err(Error::CircleOutsideDomain)
    }
}

pub fn pohozaev_residual(f: &Field, p: &Potential, d: &DiskSpec) -> Result<Pohozaev> {
    check_disk(f, d)?;
    let grad = gradient(f);
    let dens = densities_with(f, p, &grad);
    pohozaev_with(f, p, &grad, &dens, d)
}

pub fn pohozaev_with(f: &Field, p: &Potential, grad: &[f64], dens: &EnergyDensity, d: &DiskSpec) -> Result<Pohozaev> {
    check_disk(f, d)?;
    let eps = f.epsilon;
    let w = f.grid.region_weights(&Region::Disk(*d))?;
    let lhs = integrate(&dens.v, &w) / eps;
    let cs = restrict_circle_with(f, grad, d, n_theta(d.radius, f.h()))?;
    let rhs = 0.25 * d.radius * cs.integrate(|m| cs.tau_sq(m) - cs.r_sq(m) + 2.0 * p.eval(cs.value(m)) / (eps * eps));
    Ok(Pohozaev { lhs, rhs, residual: lhs - rhs })
}

/// Circle integral of the energy density `oint e dl`.
pub fn circle_energy(f: &Field, p: &Potential, grad: &[f64], d: &DiskSpec) -> Result<f64> {
    let cs = restrict_circle_with(f, grad, d, n_theta(d.radius, f.h()))?;
    let eps = f.epsilon;
    Ok(cs.integrate(|m| 0.5 * eps * (cs.tau_sq(m) + cs.r_sq(m)) + p.eval(cs.value(m)) / eps))
}

pub const POHOZAEV_SLACK: f64 = 0.05;

/// `eps^-1 int_D V <= (r/2) oint e`.
pub fn pohozaev_inequality_check(f: &Field, p: &Potential, d: &DiskSpec) -> Result<CheckRecord> {
    check_disk(f, d)?;
    let grad = gradient(f);
    let dens = densities_with(f, p, &grad);
    let w = f.grid.region_weights(&Region::Disk(*d))?;
    let lhs = integrate(&dens.v, &w);
    let rhs = 0.5 * d.radius * circle_energy(f, p, &grad, d)?;
    Ok(CheckRecord::inequality("pohozaev_inequality", &Region::Disk(*d).label(), lhs, rhs, POHOZAEV_SLACK, 1e-12))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityRow {
    pub r: f64,
    pub energy: f64,
    pub e_over_r: f64,
    /// Finite difference of `E/r` across the table.
    pub derivative_fd: f64,
    /// `oint e / r - E / r^2`, the derivative from the circle integral.
    pub derivative_circle: f64,
    pub xi_integral: f64,
    /// `(eps / r) oint |u_r|^2`.
    pub boundary_term: f64,
    /// `r^-2 int xi + (eps / r) oint |u_r|^2`.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityProfile {
    pub center: [f64; 2],
    pub rows: Vec<MonotonicityRow>,
}

impl MonotonicityProfile {
    /// Largest `|fd - rhs| / max(|rhs|, floor)` over interior rows.
    pub fn identity_mismatch(&self, floor: f64) -> f64 {
        let n = self.rows.len();
        (1..n.saturating_sub(1))
            .map(|i| {
                let r = &self.rows[i];
                (r.derivative_fd - r.rhs).abs() / r.rhs.abs().max(floor)
            })
            .fold(0.0, f64::max)
    }

    pub fn min_derivative(&self) -> f64 {
        self.rows.iter().map(|r| r.derivative_fd).fold(f64::INFINITY, f64::min)
    }
}

pub fn monotonicity_profile(f: &Field, p: &Potential, x0: [f64; 2], radii: &[f64]) -> Result<MonotonicityProfile> {
    let grad = gradient(f);
    let dens = densities_with(f, p, &grad);
    let eps = f.epsilon;
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let d = DiskSpec::new(x0, r);
        check_disk(f, &d)?;
        let w = f.grid.region_weights(&Region::Disk(d))?;
        let energy = integrate(&dens.e, &w);
        let xi_integral = integrate(&dens.xi, &w);
        let cs = restrict_circle_with(f, &grad, &d, n_theta(r, f.h()))?;
        let ur = cs.integrate(|m| cs.r_sq(m));
        let ce = cs.integrate(|m| 0.5 * eps * (cs.tau_sq(m) + cs.r_sq(m)) + p.eval(cs.value(m)) / eps);
        let boundary_term = eps / r * ur;
        rows.push(MonotonicityRow {
            r,
            energy,
            e_over_r: energy / r,
            derivative_fd: 0.0,
            derivative_circle: ce / r - energy / (r * r),
            xi_integral,
            boundary_term,
            rhs: xi_integral / (r * r) + boundary_term,
        });
    }
    let n = rows.len();
    for i in 0..n {
        let (a, b) = if n < 2 {
            (i, i)
        } else if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        rows[i].derivative_fd =
            if a == b { 0.0 } else { (rows[b].e_over_r - rows[a].e_over_r) / (rows[b].r - rows[a].r) };
    }
    Ok(MonotonicityProfile { center: x0, rows })
}

/// Plateau profile: identity on `[0, mu0/2]`, quadratic blend with unit and
/// zero end slopes on `[mu0/2, mu0]`, constant `3 mu0 / 4` beyond.
pub fn plateau(t: f64, mu0: f64) -> f64 {
    let a = 0.5 * mu0;
    if t <= a {
        t
    } else if t >= mu0 {
        0.75 * mu0
    } else {
        let s = t - a;
        a + s - s * s / mu0
    }
}

#[derive(Debug, Clone)]
pub struct ModicaMortola {
    pub well: usize,
    pub w: Vec<f64>,
    /// `|grad (w^2)|` per node by differences of the node array `w^2`.
    pub grad_w2: Vec<f64>,
    /// `4 lambda0^{-1/2} J` per node.
    pub bound: Vec<f64>,
    pub checked: usize,
    pub violations: usize,
    /// Nodes where `|grad w| > |grad u|` beyond the slack.
    pub lipschitz_violations: usize,
}

impl ModicaMortola {
    pub fn violation_fraction(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.violations as f64 / self.checked as f64
        }
    }
}

pub const MM_SLACK: f64 = 0.05;

pub fn modica_mortola_map(f: &Field, p: &Potential, c: &StructuralConstants, i: usize) -> Result<ModicaMortola> {
    if i >= p.q() {
        return Err(Error::Precondition(format!("well index {i} >= q = {}", p.q())));
    }
    let g = f.grid.clone();
    let sigma = p.well(i).to_vec();
    let w: Vec<f64> = (0..g.n_nodes())
        .map(|idx| {
            if g.is_used(idx) {
                plateau(crate::potential::dist(f.at(idx), &sigma), c.mu0)
            } else {
                0.0
            }
        })
        .collect();
    let w2 = Field { grid: g.clone(), k: 1, values: w.iter().map(|t| t * t).collect(), epsilon: f.epsilon, bc: f.bc };
    let gw2 = gradient(&w2);
    let wf = Field { grid: g.clone(), k: 1, values: w.clone(), epsilon: f.epsilon, bc: f.bc };
    let gw = gradient(&wf);
    let grad = gradient(f);
    let dens = densities_with(f, p, &grad);
    let k4 = 4.0 / c.lambda0.sqrt();
    let mut grad_w2 = vec![0.0; g.n_nodes()];
    let mut bound = vec![0.0; g.n_nodes()];
    let (mut checked, mut violations, mut lip) = (0, 0, 0);
    let floor = 1e-12;
    for idx in 0..g.n_nodes() {
        if !g.is_used(idx) {
            continue;
        }
        grad_w2[idx] = gw2[2 * idx].hypot(gw2[2 * idx + 1]);
        bound[idx] = k4 * dens.j[idx];
        if g.kind(idx) == NodeKind::Inside {
            checked += 1;
            if grad_w2[idx] > bound[idx] * (1.0 + MM_SLACK) + floor {
                violations += 1;
            }
            if gw[2 * idx].hypot(gw[2 * idx + 1]) > dens.grad_sq[idx].sqrt() * (1.0 + MM_SLACK) + floor {
                lip += 1;
            }
        }
    }
    Ok(ModicaMortola { well: i, w, grad_w2, bound, checked, violations, lipschitz_violations: lip })
}

/// Heteroclinic energy of the scalar GL profile, `int sqrt(2V) du` over
/// `[-1, 1]`, by composite Simpson quadrature.
pub fn heteroclinic_energy_gl(n: usize) -> f64 {
    let n = n + n % 2;
    let f = |u: f64| (2.0 * 0.25 * (1.0 - u * u).powi(2)).sqrt();
    let h = 2.0 / n as f64;
    let mut s = f(-1.0) + f(1.0);
    for m in 1..n {
        let u = -1.0 + m as f64 * h;
        s += if m % 2 == 1 { 4.0 } else { 2.0 } * f(u);
    }
    s * h / 3.0
}

pub fn circle_length(r: f64) -> f64 {
    2.0 * PI * r
}
