//! Multiwell potentials, their derivatives and derived structural constants.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling;

/// Evaluator for `V`, `grad V` and `hess V`. Only `eval` is required; the
/// derivatives default to central differences with step `1e-5 (1 + |y|)`.
pub trait Evaluator: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, y: &[f64]) -> f64;

    fn grad(&self, y: &[f64], g: &mut [f64]) {
        let step = 1e-5 * (1.0 + norm(y));
        let mut p = y.to_vec();
        for a in 0..y.len() {
            p[a] = y[a] + step;
            let fp = self.eval(&p);
            p[a] = y[a] - step;
            let fm = self.eval(&p);
            p[a] = y[a];
            g[a] = (fp - fm) / (2.0 * step);
        }
    }

    /// Row-major `k x k` Hessian.
    fn hess(&self, y: &[f64], h: &mut [f64]) {
        let k = y.len();
        let step = 1e-4 * (1.0 + norm(y));
        let mut p = y.to_vec();
        let mut gp = vec![0.0; k];
        let mut gm = vec![0.0; k];
        for a in 0..k {
            p[a] = y[a] + step;
            self.grad(&p, &mut gp);
            p[a] = y[a] - step;
            self.grad(&p, &mut gm);
            p[a] = y[a];
            for b in 0..k {
                h[b * k + a] = (gp[b] - gm[b]) / (2.0 * step);
            }
        }
        for a in 0..k {
            for b in 0..a {
                let s = 0.5 * (h[a * k + b] + h[b * k + a]);
                h[a * k + b] = s;
                h[b * k + a] = s;
            }
        }
    }
}

pub(crate) fn norm(y: &[f64]) -> f64 {
    y.iter().map(|t| t * t).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `V(u) = (1 - u^2)^2 / 4`.
#[derive(Debug, Clone, Copy)]
pub struct GinzburgLandau;

impl Evaluator for GinzburgLandau {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, y: &[f64]) -> f64 {
        let t = 1.0 - y[0] * y[0];
        0.25 * t * t
    }
    fn grad(&self, y: &[f64], g: &mut [f64]) {
        g[0] = y[0] * y[0] * y[0] - y[0];
    }
    fn hess(&self, y: &[f64], h: &mut [f64]) {
        h[0] = 3.0 * y[0] * y[0] - 1.0;
    }
}

/// `V(u) = 1/2 prod_i |u - s_i|^2` with the `s_i` the cube roots of unity.
#[derive(Debug, Clone)]
pub struct TripleWell {
    pub wells: [[f64; 2]; 3],
}

impl Default for TripleWell {
    fn default() -> Self {
        let s = 3f64.sqrt() / 2.0;
        TripleWell { wells: [[1.0, 0.0], [-0.5, s], [-0.5, -s]] }
    }
}

impl Evaluator for TripleWell {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, y: &[f64]) -> f64 {
        0.5 * self
            .wells
            .iter()
            .map(|s| (y[0] - s[0]).powi(2) + (y[1] - s[1]).powi(2))
            .product::<f64>()
    }
    fn grad(&self, y: &[f64], g: &mut [f64]) {
        let d: Vec<[f64; 2]> = self.wells.iter().map(|s| [y[0] - s[0], y[1] - s[1]]).collect();
        let n: Vec<f64> = d.iter().map(|v| v[0] * v[0] + v[1] * v[1]).collect();
        g[0] = 0.0;
        g[1] = 0.0;
        for i in 0..3 {
            let rest: f64 = (0..3).filter(|&j| j != i).map(|j| n[j]).product();
            g[0] += d[i][0] * rest;
            g[1] += d[i][1] * rest;
        }
    }
    fn hess(&self, y: &[f64], h: &mut [f64]) {
        let d: Vec<[f64; 2]> = self.wells.iter().map(|s| [y[0] - s[0], y[1] - s[1]]).collect();
        let n: Vec<f64> = d.iter().map(|v| v[0] * v[0] + v[1] * v[1]).collect();
        h.iter_mut().for_each(|t| *t = 0.0);
        for i in 0..3 {
            let rest: f64 = (0..3).filter(|&j| j != i).map(|j| n[j]).product();
            h[0] += rest;
            h[3] += rest;
            for j in (0..3).filter(|&j| j != i) {
                let l = 3 - i - j;
                for a in 0..2 {
                    for b in 0..2 {
                        h[a * 2 + b] += 2.0 * d[i][a] * d[j][b] * n[l];
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Polynomial in the components of `u`, with exact derivatives.
#[derive(Debug, Clone)]
pub struct Polynomial {
    k: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(k: usize, terms: Vec<Monomial>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPotential("k must be positive".into()));
        }
        for t in &terms {
            if t.powers.len() != k {
                return Err(Error::InvalidPotential(format!(
                    "monomial has {} powers, expected {k}",
                    t.powers.len()
                )));
            }
        }
        Ok(Polynomial { k, terms })
    }

    fn monomial(y: &[f64], powers: &[u32], skip: &[(usize, u32)]) -> f64 {
        let mut r = 1.0;
        for (j, &p) in powers.iter().enumerate() {
            let mut p = p as i32;
            for &(s, by) in skip {
                if s == j {
                    p -= by as i32;
                }
            }
            if p < 0 {
                return 0.0;
            }
            r *= y[j].powi(p);
        }
        r
    }
}

impl Evaluator for Polynomial {
    fn dim(&self) -> usize {
        self.k
    }
    fn eval(&self, y: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coef * Self::monomial(y, &t.powers, &[])).sum()
    }
    fn grad(&self, y: &[f64], g: &mut [f64]) {
        for (a, ga) in g.iter_mut().enumerate().take(self.k) {
            *ga = self
                .terms
                .iter()
                .filter(|t| t.powers[a] > 0)
                .map(|t| t.coef * t.powers[a] as f64 * Self::monomial(y, &t.powers, &[(a, 1)]))
                .sum();
        }
    }
    fn hess(&self, y: &[f64], h: &mut [f64]) {
        let k = self.k;
        for a in 0..k {
            for b in 0..k {
                h[a * k + b] = self
                    .terms
                    .iter()
                    .map(|t| {
                        let pa = t.powers[a] as f64;
                        let c = if a == b {
                            pa * (pa - 1.0)
                        } else {
                            pa * t.powers[b] as f64
                        };
                        if c == 0.0 {
                            0.0
                        } else {
                            t.coef * c * Self::monomial(y, &t.powers, &[(a, 1), (b, 1)])
                        }
                    })
                    .sum();
            }
        }
    }
}

/// Evaluator backed by a closure; derivatives by finite differences.
pub struct FnEvaluator<F> {
    k: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnEvaluator<F> {
    pub fn new(k: usize, f: F) -> Self {
        FnEvaluator { k, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Evaluator for FnEvaluator<F> {
    fn dim(&self) -> usize {
        self.k
    }
    fn eval(&self, y: &[f64]) -> f64 {
        (self.f)(y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub location: Vec<f64>,
    pub hess_min: f64,
    pub hess_max: f64,
}

#[derive(Clone)]
pub struct Potential {
    name: String,
    k: usize,
    wells: Vec<Well>,
    pub alpha_inf: f64,
    pub r_inf: f64,
    evaluator: Arc<dyn Evaluator>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("k", &self.k)
            .field("wells", &self.wells)
            .field("alpha_inf", &self.alpha_inf)
            .field("r_inf", &self.r_inf)
            .finish()
    }
}

/// JSON description of a polynomial potential.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSpec {
    #[serde(default = "default_poly_name")]
    pub name: String,
    pub k: usize,
    pub terms: Vec<Monomial>,
    pub wells: Vec<Vec<f64>>,
    pub alpha_inf: f64,
    pub r_inf: f64,
}

fn default_poly_name() -> String {
    "polynomial".into()
}

pub const BUILTINS: [&str; 2] = ["gl-scalar", "triple-well-2d"];

fn sym_eig_range(k: usize, h: &[f64]) -> (f64, f64) {
    if k == 1 {
        return (h[0], h[0]);
    }
    if k == 2 {
        let (a, b, c) = (h[0], 0.5 * (h[1] + h[2]), h[3]);
        let m = 0.5 * (a + c);
        let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        return (m - r, m + r);
    }
    let e = DMatrix::from_row_slice(k, k, h).symmetric_eigen().eigenvalues;
    (e.min(), e.max())
}

impl Potential {
    pub fn new(
        name: impl Into<String>,
        evaluator: Arc<dyn Evaluator>,
        wells: Vec<Vec<f64>>,
        alpha_inf: f64,
        r_inf: f64,
    ) -> Result<Self> {
        let k = evaluator.dim();
        if wells.is_empty() {
            return Err(Error::InvalidPotential("no wells given".into()));
        }
        let mut out = Vec::with_capacity(wells.len());
        let mut h = vec![0.0; k * k];
        for w in wells {
            if w.len() != k {
                return Err(Error::InvalidPotential(format!(
                    "well {:?} has dimension {}, expected {k}",
                    w,
                    w.len()
                )));
            }
            evaluator.hess(&w, &mut h);
            if h.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFiniteEvaluation(w));
            }
            let (lo, hi) = sym_eig_range(k, &h);
            out.push(Well { location: w, hess_min: lo, hess_max: hi });
        }
        Ok(Potential { name: name.into(), k, wells: out, alpha_inf, r_inf, evaluator })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "gl-scalar" => Potential::new(
                name,
                Arc::new(GinzburgLandau),
                vec![vec![-1.0], vec![1.0]],
                1.0,
                2f64.sqrt(),
            ),
            "triple-well-2d" => {
                let tw = TripleWell::default();
                let wells = tw.wells.iter().map(|w| w.to_vec()).collect();
                Potential::new(name, Arc::new(tw), wells, 1.0, 2.0)
            }
            _ => Err(Error::UnknownPotential(name.to_string())),
        }
    }

    pub fn from_spec(spec: &PolynomialSpec) -> Result<Self> {
        let poly = Polynomial::new(spec.k, spec.terms.clone())?;
        Potential::new(spec.name.clone(), Arc::new(poly), spec.wells.clone(), spec.alpha_inf, spec.r_inf)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PolynomialSpec = serde_json::from_str(text)?;
        Potential::from_spec(&spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn q(&self) -> usize {
        self.wells.len()
    }
    pub fn wells(&self) -> &[Well] {
        &self.wells
    }
    pub fn well(&self, i: usize) -> &[f64] {
        &self.wells[i].location
    }
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.evaluator.eval(y)
    }
    pub fn grad(&self, y: &[f64], g: &mut [f64]) {
        self.evaluator.grad(y, g)
    }
    pub fn hess(&self, y: &[f64], h: &mut [f64]) {
        self.evaluator.hess(y, h)
    }
    pub fn hess_eig_range(&self, y: &[f64]) -> (f64, f64) {
        let mut h = vec![0.0; self.k * self.k];
        self.hess(y, &mut h);
        sym_eig_range(self.k, &h)
    }

    /// `R0 = max |sigma|`.
    pub fn r0(&self) -> f64 {
        self.wells.iter().map(|w| norm(&w.location)).fold(0.0, f64::max)
    }

    pub fn lambda0(&self) -> f64 {
        self.wells.iter().map(|w| w.hess_min).fold(f64::INFINITY, f64::min)
    }

    pub fn lambda_max(&self) -> f64 {
        self.wells.iter().map(|w| w.hess_max).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_well_distance(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.q() {
            for j in 0..i {
                m = m.min(dist(self.well(i), self.well(j)));
            }
        }
        m
    }

    /// Index and distance of the closest well.
    pub fn closest_well(&self, y: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, w) in self.wells.iter().enumerate() {
            let d = dist(y, &w.location);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub witnesses: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub potential: String,
    pub hypotheses: Vec<HypothesisResult>,
    pub pass: bool,
}

fn check_finite(y: &[f64], v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteEvaluation(y.to_vec()))
    }
}

const CRITICAL_TOL: f64 = 1e-6;

pub fn validate_hypotheses(p: &Potential, sample_budget: usize) -> Result<ValidationReport> {
    if sample_budget < 1000 {
        return Err(Error::Precondition(format!("sample_budget {sample_budget} < 1000")));
    }
    let k = p.k();
    let mut g = vec![0.0; k];
    for (i, w) in p.wells().iter().enumerate() {
        let v = p.eval(&w.location);
        check_finite(&w.location, v)?;
        p.grad(&w.location, &mut g);
        let gn = norm(&g);
        check_finite(&w.location, gn)?;
        if gn > CRITICAL_TOL {
            return Err(Error::WellNotCritical { index: i, grad_norm: gn });
        }
    }

    // H1: finitely many (q >= 2) zeros, V >= 0 and V > 0 away from the wells.
    let r0 = p.r0();
    let big = 4.0 * p.r_inf.max(2.0 * r0).max(1.0);
    let half = sample_budget / 2;
    let mut h1_witness = Vec::new();
    let mut h1_detail = format!("q = {}", p.q());
    let mut h1 = p.q() >= 2;
    for i in 0..p.q() {
        if p.eval(p.well(i)).abs() > 1e-12 {
            h1 = false;
            h1_detail = format!("V(sigma_{i}) = {:e} is not zero", p.eval(p.well(i)));
            h1_witness.push(p.well(i).to_vec());
        }
        for j in 0..i {
            if dist(p.well(i), p.well(j)) < 1e-9 {
                h1 = false;
                h1_detail = format!("wells {j} and {i} coincide");
            }
        }
    }
    if p.q() < 2 {
        h1_detail = format!("q = {} < 2", p.q());
    }
    for y in sampling::cube_points(k, big, half) {
        let v = p.eval(&y);
        check_finite(&y, v)?;
        let (_, d) = p.closest_well(&y);
        if v < 0.0 || (v == 0.0 && d > 1e-6) {
            if h1 {
                h1_detail = format!("V = {v:e} at distance {d:e} from the wells");
            }
            h1 = false;
            h1_witness.push(y);
        }
    }

    // H2: nondegenerate wells.
    let mut h2 = true;
    let mut h2_witness = Vec::new();
    for w in p.wells() {
        if !(w.hess_min > 0.0) || w.hess_min > w.hess_max {
            h2 = false;
            h2_witness.push(w.location.clone());
        }
    }

    // H3: y . grad V >= alpha_inf |y|^2 for |y| > R_inf.
    let mut h3 = p.alpha_inf > 0.0;
    let mut h3_witness = Vec::new();
    let r_hi = 4.0 * p.r_inf.max(2.0 * r0);
    let n_dir = if k == 1 { 2 } else { 32 };
    let n_rad = (half / n_dir).max(8);
    for d in sampling::directions(k, n_dir) {
        for m in 0..n_rad {
            let t = p.r_inf + (r_hi - p.r_inf) * (m as f64 + 0.5) / n_rad as f64;
            let y: Vec<f64> = d.iter().map(|c| c * t).collect();
            p.grad(&y, &mut g);
            let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
            check_finite(&y, lhs)?;
            if lhs < p.alpha_inf * t * t * (1.0 - 1e-9) {
                h3 = false;
                if h3_witness.len() < 8 {
                    h3_witness.push(y);
                }
            }
        }
    }
    h1_witness.truncate(8);
    let hypotheses = vec![
        HypothesisResult { name: "H1".into(), pass: h1, detail: h1_detail, witnesses: h1_witness },
        HypothesisResult {
            name: "H2".into(),
            pass: h2,
            detail: format!("lambda0 = {}", p.lambda0()),
            witnesses: h2_witness,
        },
        HypothesisResult {
            name: "H3".into(),
            pass: h3,
            detail: format!("radial samples on [{}, {}]", p.r_inf, r_hi),
            witnesses: h3_witness,
        },
    ];
    let pass = hypotheses.iter().all(|h| h.pass);
    Ok(ValidationReport { potential: p.name().into(), hypotheses, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralConstants {
    pub mu0: f64,
    pub lambda0: f64,
    pub lambda_max: f64,
    pub alpha0: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub beta_inf: f64,
    /// Radial window `[2 R0, W]` where `beta_inf` was sampled.
    pub beta_window: [f64; 2],
    /// `V >= alpha_inf |y|^2 / 2 - c_inf` for `|y| >= R_inf`.
    pub c_inf: f64,
    /// Uniform circle bound constant `sqrt(2/(pi lambda0) + 4/sqrt(lambda0))`.
    pub c_unf: f64,
    pub samples_per_well: usize,
    pub shrink_steps: usize,
}

impl StructuralConstants {
    /// Constants with a prescribed `mu0`, used when the derived value is
    /// overridden by the caller.
    pub fn with_mu0(p: &Potential, mu0: f64) -> Self {
        let lambda0 = p.lambda0();
        let (beta_inf, beta_window, c_inf) = fit_beta_inf(p);
        StructuralConstants {
            mu0,
            lambda0,
            lambda_max: p.lambda_max(),
            alpha0: 0.5 * lambda0 * mu0 * mu0,
            r0: p.r0(),
            beta_inf,
            beta_window,
            c_inf,
            c_unf: c_unf(lambda0),
            samples_per_well: SAMPLES_PER_WELL,
            shrink_steps: 0,
        }
    }
}

pub const SAMPLES_PER_WELL: usize = 2048;

pub fn c_unf(lambda0: f64) -> f64 {
    (2.0 / (std::f64::consts::PI * lambda0) + 4.0 / lambda0.sqrt()).sqrt()
}

/// Outcome of the sampled checks at a given `mu0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuCheck {
    pub separated: bool,
    pub hessian_sandwich: bool,
    pub far_lower_bound: bool,
}

impl MuCheck {
    pub fn ok(&self) -> bool {
        self.separated && self.hessian_sandwich && self.far_lower_bound
    }
}

/// Checks ball separation, the Hessian sandwich on `B(sigma_i, 2 mu)` and
/// `V >= lambda0 mu^2 / 2` on the sampled complement of the balls
/// `B(sigma_i, sqrt(2) mu)`.
pub fn check_mu(p: &Potential, mu: f64) -> MuCheck {
    let k = p.k();
    let separated = p.min_well_distance() > 4.0 * mu;
    let mut sandwich = true;
    'wells: for w in p.wells() {
        for y in sampling::ball_points(&w.location, 2.0 * mu, SAMPLES_PER_WELL) {
            let (lo, hi) = p.hess_eig_range(&y);
            if lo < 0.5 * w.hess_min * (1.0 - 1e-12) || hi > 2.0 * w.hess_max * (1.0 + 1e-12) {
                sandwich = false;
                break 'wells;
            }
        }
    }
    let alpha0 = 0.5 * p.lambda0() * mu * mu;
    let half = 2.0 * p.r0() + 1.0;
    let inner = 2f64.sqrt() * mu;
    let mut far = true;
    for y in sampling::cube_points(k, half, 4096 * k) {
        if p.closest_well(&y).1 >= inner && p.eval(&y) < alpha0 {
            far = false;
            break;
        }
    }
    if far {
        for w in p.wells() {
            for d in sampling::directions(k, 64) {
                for m in 0..16 {
                    let t = inner + (2.0 * mu - inner) * m as f64 / 15.0;
                    let y: Vec<f64> = w.location.iter().zip(&d).map(|(s, e)| s + t * e).collect();
                    if p.eval(&y) < alpha0 * (1.0 - 1e-12) {
                        far = false;
                    }
                }
            }
        }
    }
    MuCheck { separated, hessian_sandwich: sandwich, far_lower_bound: far }
}

fn fit_beta_inf(p: &Potential) -> (f64, [f64; 2], f64) {
    let r0 = p.r0().max(1e-3);
    let lo = 2.0 * r0;
    let hi = (8.0 * r0).max(2.0 * p.r_inf);
    let n_dir = if p.k() == 1 { 2 } else { 64 };
    let mut sampled = f64::INFINITY;
    for d in sampling::directions(p.k(), n_dir) {
        for m in 0..64 {
            let t = lo + (hi - lo) * m as f64 / 63.0;
            let y: Vec<f64> = d.iter().map(|c| c * t).collect();
            sampled = sampled.min(p.eval(&y) / (t * t));
        }
    }
    let c_inf = 0.5 * p.alpha_inf * p.r_inf * p.r_inf;
    let tail = 0.5 * p.alpha_inf * (1.0 - (p.r_inf / hi).powi(2));
    (sampled.min(tail), [lo, hi], c_inf)
}

pub fn derive_constants(p: &Potential, shrink_factor: f64) -> Result<StructuralConstants> {
    if !(shrink_factor > 0.0 && shrink_factor < 1.0) {
        return Err(Error::Precondition(format!("shrink_factor {shrink_factor} not in (0,1)")));
    }
    if p.q() < 2 {
        return Err(Error::Precondition("derive_constants needs q >= 2".into()));
    }
    let dmin = p.min_well_distance();
    let mut mu = 0.25 * dmin;
    let mut steps = 0;
    while !check_mu(p, mu).ok() {
        mu *= shrink_factor;
        steps += 1;
        if mu < 1e-8 * dmin {
            return Err(Error::ShrinkExhausted(mu));
        }
    }
    let mut c = StructuralConstants::with_mu0(p, mu);
    c.shrink_steps = steps;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearestWell {
    pub index: usize,
    pub distance: f64,
    pub certified: bool,
    /// `sqrt(4 V(y) / lambda0)`.
    pub bound: f64,
}

pub fn nearest_well(p: &Potential, c: &StructuralConstants, y: &[f64]) -> NearestWell {
    let (index, distance) = p.closest_well(y);
    let v = p.eval(y);
    NearestWell { index, distance, certified: v < c.alpha0, bound: (4.0 * v / c.lambda0).sqrt() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest normalized violation `(lhs - rhs) / |y - sigma|^2`.
    pub max_violation: f64,
    pub per_well_violations: Vec<usize>,
}

/// Both quadratic chains around each well, sampled in `B(sigma_i, 2 mu0)`.
pub fn quadratic_envelope_check(p: &Potential, c: &StructuralConstants, samples: usize) -> EnvelopeReport {
    let k = p.k();
    let mut g = vec![0.0; k];
    let per = (samples / p.q()).max(1);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let mut per_well = vec![0; p.q()];
    for (i, w) in p.wells().iter().enumerate() {
        for y in sampling::ball_points(&w.location, 2.0 * c.mu0, per) {
            let d: Vec<f64> = y.iter().zip(&w.location).map(|(a, b)| a - b).collect();
            let d2: f64 = d.iter().map(|t| t * t).sum();
            if d2 == 0.0 {
                continue;
            }
            let v = p.eval(&y);
            p.grad(&y, &mut g);
            let gd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let gaps = [
                0.25 * w.hess_min * d2 - v,
                v - w.hess_max * d2,
                0.5 * w.hess_min * d2 - gd,
                gd - 2.0 * w.hess_max * d2,
            ];
            let m = gaps.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) / d2;
            if m > 1e-10 {
                violations += 1;
                per_well[i] += 1;
            }
            worst = worst.max(m);
        }
    }
    EnvelopeReport { samples: per * p.q(), violations, max_violation: worst, per_well_violations: per_well }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gl() -> Potential {
        Potential::builtin("gl-scalar").unwrap()
    }

    #[test]
    fn gl_validates() {
        let r = validate_hypotheses(&gl(), 2000).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(gl().q(), 2);
    }

    #[test]
    fn triple_well_validates() {
        let p = Potential::builtin("triple-well-2d").unwrap();
        let r = validate_hypotheses(&p, 4000).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(p.q(), 3);
    }

    #[test]
    fn single_well_fails_h1() {
        let poly = Polynomial::new(1, vec![Monomial { coef: 1.0, powers: vec![2] }]).unwrap();
        let p = Potential::new("square", Arc::new(poly), vec![vec![0.0]], 1.0, 1.0).unwrap();
        let r = validate_hypotheses(&p, 1000).unwrap();
        assert!(!r.pass);
        assert!(!r.hypotheses[0].pass);
        assert!(r.hypotheses[1].pass);
    }

    #[test]
    fn off_critical_well_is_error() {
        let p = Potential::new("gl-shifted", Arc::new(GinzburgLandau), vec![vec![-1.0], vec![0.9]], 1.0, 2.0);
        let e = validate_hypotheses(&p.unwrap(), 1000).unwrap_err();
        assert!(matches!(e, Error::WellNotCritical { index: 1, .. }));
    }

    #[test]
    fn non_finite_is_error() {
        let f = FnEvaluator::new(1, |y: &[f64]| if y[0] > 3.0 { f64::NAN } else { (1.0 - y[0] * y[0]).powi(2) });
        let p = Potential::new("bad", Arc::new(f), vec![vec![-1.0], vec![1.0]], 1.0, 1.5).unwrap();
        assert!(matches!(validate_hypotheses(&p, 1000), Err(Error::NonFiniteEvaluation(_))));
    }

    #[test]
    fn gl_hessian_by_differences() {
        let p = gl();
        let f = FnEvaluator::new(1, |y: &[f64]| 0.25 * (1.0 - y[0] * y[0]).powi(2));
        let mut h = [0.0];
        for s in [-1.0, 1.0] {
            f.hess(&[s], &mut h);
            assert_relative_eq!(h[0], 2.0, epsilon = 1e-5);
        }
        assert_eq!(p.lambda0(), 2.0);
        assert_eq!(p.lambda_max(), 2.0);
        let c = derive_constants(&p, 0.5).unwrap();
        assert!(c.mu0 <= 0.5);
        assert_eq!(c.mu0, 0.0625);
        assert_eq!(c.alpha0, 0.5 * c.lambda0 * c.mu0 * c.mu0);
        // min over the sampled window (9/16 at |y| = 2) and the tail bound
        // (1/2)(1 - R_inf^2 / 64) = 31/64.
        assert_eq!(c.beta_inf, 31.0 / 64.0);
    }

    #[test]
    fn triple_well_hessian_is_nine() {
        let p = Potential::builtin("triple-well-2d").unwrap();
        let mut h = [0.0; 4];
        for i in 0..3 {
            p.hess(p.well(i), &mut h);
            assert_relative_eq!(h[0], 9.0, epsilon = 1e-12);
            assert_relative_eq!(h[3], 9.0, epsilon = 1e-12);
            assert!(h[1].abs() < 1e-12 && h[2].abs() < 1e-12);
        }
        let c = derive_constants(&p, 0.5).unwrap();
        assert_relative_eq!(c.lambda0, 9.0, epsilon = 1e-12);
        let env = quadratic_envelope_check(&p, &c, 10_000);
        assert_eq!(env.violations, 0, "{env:?}");
    }

    #[test]
    fn nearest_well_examples() {
        let p = gl();
        let mut c = StructuralConstants::with_mu0(&p, 0.5);
        assert_eq!(c.alpha0, 0.25);
        let n = nearest_well(&p, &c, &[0.9]);
        assert_eq!(n.index, 1);
        assert_relative_eq!(n.distance, 0.1, epsilon = 1e-12);
        assert!(n.certified);
        assert!(n.distance <= n.bound);
        assert_relative_eq!(p.eval(&[0.9]), 0.009025, epsilon = 1e-15);
        let n = nearest_well(&p, &c, &[1.0]);
        assert_eq!((n.distance, n.certified), (0.0, true));
        let n = nearest_well(&p, &c, &[0.0]);
        assert!(!n.certified);
        c.alpha0 = 0.3;
        assert!(nearest_well(&p, &c, &[0.0]).certified);
    }

    #[test]
    fn envelope_gl_point() {
        let p = gl();
        let d2: f64 = 0.01;
        let v = p.eval(&[1.1]);
        assert_relative_eq!(v, 0.011025, epsilon = 1e-15);
        assert!(0.25 * 2.0 * d2 <= v && v <= 2.0 * d2);
        let c = derive_constants(&p, 0.5).unwrap();
        assert_eq!(quadratic_envelope_check(&p, &c, 4000).violations, 0);
    }

    #[test]
    fn mu_halving_is_monotone() {
        for name in BUILTINS {
            let p = Potential::builtin(name).unwrap();
            let c = derive_constants(&p, 0.5).unwrap();
            assert!(check_mu(&p, 0.5 * c.mu0).ok());
            assert!(check_mu(&p, 0.25 * c.mu0).ok());
        }
    }

    #[test]
    fn polynomial_matches_builtin() {
        let spec = r#"{"name":"gl-poly","k":1,
            "terms":[{"coef":0.25,"powers":[0]},{"coef":-0.5,"powers":[2]},{"coef":0.25,"powers":[4]}],
            "wells":[[-1.0],[1.0]],"alpha_inf":1.0,"r_inf":1.5}"#;
        let p = Potential::from_json(spec).unwrap();
        let q = gl();
        let (mut g1, mut g2, mut h1, mut h2) = ([0.0], [0.0], [0.0], [0.0]);
        for t in [-2.3, -0.4, 0.0, 0.7, 1.9] {
            assert_relative_eq!(p.eval(&[t]), q.eval(&[t]), epsilon = 1e-12);
            p.grad(&[t], &mut g1);
            q.grad(&[t], &mut g2);
            p.hess(&[t], &mut h1);
            q.hess(&[t], &mut h2);
            assert_relative_eq!(g1[0], g2[0], epsilon = 1e-12);
            assert_relative_eq!(h1[0], h2[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn bad_polynomial_json() {
        let spec = r#"{"k":2,"terms":[{"coef":1.0,"powers":[2]}],"wells":[[0,0],[1,0]],"alpha_inf":1,"r_inf":1}"#;
        assert!(matches!(Potential::from_json(spec), Err(Error::InvalidPotential(_))));
        assert!(matches!(Potential::from_json("{\"k\":1}"), Err(Error::Json(_))));
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(Potential::builtin("nope"), Err(Error::UnknownPotential(_))));
    }
}
