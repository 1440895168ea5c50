//! Critical points of the discrete energy: semi-implicit gradient flow,
//! damped Newton refinement and warm-started families in `eps`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{seed, BoundarySpec, SeedStrategy};
use crate::error::{Error, Result};
use crate::functionals::total_energy;
use crate::grid::{resample, BoundaryCondition, Domain, Field, Grid, NodeKind, Stencil};
use crate::linalg::pcg;
use crate::par;
use crate::potential::Potential;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub max_gradient_flow_steps: usize,
    pub flow_dt_safety: f64,
    pub newton_max_iters: usize,
    /// Bound on `|F|_inf eps^2 / (1 + |u|_inf)`.
    pub residual_tol: f64,
    pub seed_strategy: SeedStrategy,
    /// Scaled residual at which the flow hands over to Newton.
    pub flow_handoff_tol: f64,
    pub cg_rtol: f64,
    pub cg_max_iters: usize,
    /// Flow steps taken when a Newton step fails to reduce the residual.
    pub fallback_steps: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_gradient_flow_steps: 400,
            flow_dt_safety: 0.2,
            newton_max_iters: 40,
            residual_tol: 1e-9,
            seed_strategy: SeedStrategy::FromBoundary,
            flow_handoff_tol: 1e-3,
            cg_rtol: 1e-9,
            cg_max_iters: 20_000,
            fallback_steps: 25,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.flow_dt_safety > 0.0 && self.flow_dt_safety < 1.0) {
            return Err(Error::InvalidConfig(format!("flow_dt_safety = {} not in (0, 1)", self.flow_dt_safety)));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("residual_tol = {} must be > 0", self.residual_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: Field,
    /// Scaled residual before each Newton iteration and at exit.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub energy: f64,
    pub max_amplitude: f64,
    pub newton_iters: usize,
    pub flow_steps: usize,
    /// Discrete energy along the gradient flow.
    pub energy_history: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SolveResult {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Amplitude beyond which a run is declared divergent.
pub fn blow_up_limit(p: &Potential) -> f64 {
    10.0 * (p.r0() + 1.0)
}

/// Resolution warnings for `h` relative to `eps`.
pub fn resolution_warnings(h: f64, eps: f64) -> Vec<String> {
    if h > 0.25 * eps {
        vec![format!("under-resolved: h = {h} > eps/4 = {}", 0.25 * eps)]
    } else if h > 0.125 * eps {
        vec![format!("coarse: h = {h} > eps/8 = {}", 0.125 * eps)]
    } else {
        Vec::new()
    }
}

fn check_amplitude(f: &Field, p: &Potential) -> Result<f64> {
    let a = f.sup_norm();
    let limit = blow_up_limit(p);
    if !a.is_finite() || a > limit {
        return Err(Error::BlowUp { amplitude: a, limit });
    }
    Ok(a)
}

/// Discrete energy `eps sum_links lw |du|^2 / 2 + (h^2 / eps) sum w V`,
/// the functional whose gradient the flow and Newton work with.
pub fn discrete_energy(f: &Field, p: &Potential, st: &Stencil) -> f64 {
    let eps = f.epsilon;
    let h2 = st.h * st.h;
    let grid = &*f.grid;
    let pot = par::sum(grid.n_nodes(), |i| if grid.is_used(i) { st.w[i] * p.eval(f.at(i)) } else { 0.0 });
    eps * st.dirichlet_energy(&f.values, f.k) + h2 / eps * pot
}

/// `F(u) = -Lap_h u + eps^-2 grad V(u)` on active nodes, zero elsewhere.
pub fn residual_vector(f: &Field, p: &Potential, st: &Stencil) -> Vec<f64> {
    let k = f.k;
    let ie2 = 1.0 / (f.epsilon * f.epsilon);
    let ih2 = 1.0 / (st.h * st.h);
    let mut out = vec![0.0; f.values.len()];
    out.par_chunks_mut(k).enumerate().with_min_len(par::MIN_LEN).for_each(|(idx, r)| {
        if !st.active[idx] {
            return;
        }
        p.grad(f.at(idx), r);
        let mut d = 0.0;
        for (c, rc) in r.iter_mut().enumerate() {
            *rc = -st.link_sum(&f.values, k, idx, c, &mut d) * ih2 / st.w[idx] + ie2 * *rc;
        }
    });
    out
}

/// `|F|_inf eps^2 / (1 + |u|_inf)`.
pub fn scaled_residual(f: &Field, p: &Potential) -> f64 {
    let st = f.stencil();
    let r = residual_vector(f, p, &st);
    let m = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    m * f.epsilon * f.epsilon / (1.0 + f.sup_norm())
}

fn weighted_norm_sq(r: &[f64], st: &Stencil, k: usize) -> f64 {
    par::sum(r.len(), |i| st.w[i / k] * r[i] * r[i])
}

/// `out_i = node(z_i) + s (diag_i z_i - sum lw z_n)` on active nodes,
/// zero elsewhere.
fn apply_graph<N>(st: &Stencil, k: usize, s: f64, z: &[f64], out: &mut [f64], node: N)
where
    N: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    const NODES: usize = 2048;
    let sw = st.stride;
    out.par_chunks_mut(k * NODES).enumerate().for_each(|(ch, block)| {
        let base = ch * NODES;
        for (off, o) in block.chunks_mut(k).enumerate() {
            let idx = base + off;
            if !st.active[idx] {
                o.iter_mut().for_each(|t| *t = 0.0);
                continue;
            }
            node(idx, &z[idx * k..(idx + 1) * k], o);
            let (e, w) = (st.wx[idx], if idx >= 1 { st.wx[idx - 1] } else { 0.0 });
            let (n, so) = (st.wy[idx], if idx >= sw { st.wy[idx - sw] } else { 0.0 });
            for (c, oc) in o.iter_mut().enumerate() {
                let zi = z[idx * k + c];
                let mut acc = 0.0;
                if e > 0.0 {
                    acc += e * (z[(idx + 1) * k + c] - zi);
                }
                if w > 0.0 {
                    acc += w * (z[(idx - 1) * k + c] - zi);
                }
                if n > 0.0 {
                    acc += n * (z[(idx + sw) * k + c] - zi);
                }
                if so > 0.0 {
                    acc += so * (z[(idx - sw) * k + c] - zi);
                }
                *oc -= s * acc;
            }
        }
    });
}

fn link_diag(st: &Stencil, idx: usize) -> f64 {
    let s = st.stride;
    let mut d = st.wx[idx] + st.wy[idx];
    if idx >= 1 {
        d += st.wx[idx - 1];
    }
    if idx >= s {
        d += st.wy[idx - s];
    }
    d
}

pub fn flow_dt(p: &Potential, eps: f64, safety: f64) -> f64 {
    safety * eps * eps / p.lambda_max()
}

/// One semi-implicit step in place. `z` holds the previous increment on
/// entry, used as the initial guess, and the new one on exit.
fn flow_step(f: &mut Field, p: &Potential, st: &Stencil, dt: f64, z: &mut Vec<f64>) -> Result<()> {
    let k = f.k;
    let ie2 = 1.0 / (f.epsilon * f.epsilon);
    let ih2 = 1.0 / (st.h * st.h);
    let mut b = vec![0.0; f.values.len()];
    b.par_chunks_mut(k).enumerate().with_min_len(par::MIN_LEN).for_each(|(idx, r)| {
        if !st.active[idx] {
            return;
        }
        p.grad(f.at(idx), r);
        let mut d = 0.0;
        for (c, rc) in r.iter_mut().enumerate() {
            *rc = dt * (st.link_sum(&f.values, k, idx, c, &mut d) * ih2 - st.w[idx] * ie2 * *rc);
        }
    });
    let s = dt * ih2;
    let op = |z: &[f64], out: &mut [f64]| {
        apply_graph(st, k, s, z, out, |idx, zi, o| {
            for (oc, zc) in o.iter_mut().zip(zi) {
                *oc = st.w[idx] * zc;
            }
        })
    };
    let diag: Vec<f64> = (0..st.active.len())
        .map(|idx| if st.active[idx] { 1.0 / (st.w[idx] + s * link_diag(st, idx)) } else { 0.0 })
        .collect();
    let pre = |r: &[f64], z: &mut [f64]| {
        z.par_iter_mut().enumerate().with_min_len(par::MIN_LEN).for_each(|(i, zi)| *zi = diag[i / k] * r[i]);
    };
    if z.len() != b.len() {
        *z = vec![0.0; b.len()];
    }
    let out = pcg(op, pre, &b, z, 1e-10, 10_000);
    if !out.converged && out.rel_residual > 1e-8 {
        return Err(Error::Stagnation { iters: out.iters, residual: out.rel_residual });
    }
    f.values.par_iter_mut().zip(&z[..]).with_min_len(par::MIN_LEN).for_each(|(u, d)| *u += d);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub field: Field,
    pub steps: usize,
    pub energy_history: Vec<f64>,
}

/// Runs up to `steps` flow steps, stopping early once the scaled residual
/// falls below `handoff` (checked every 10 steps; `0` disables).
pub fn relax_until(f: &Field, p: &Potential, steps: usize, safety: f64, handoff: f64) -> Result<FlowOutcome> {
    let mut u = f.clone();
    let st = u.stencil();
    let dt = flow_dt(p, u.epsilon, safety);
    let mut hist = vec![discrete_energy(&u, p, &st)];
    let mut taken = 0;
    let mut z = Vec::new();
    while taken < steps {
        if handoff > 0.0 && taken % 10 == 0 && scaled_residual(&u, p) <= handoff {
            break;
        }
        flow_step(&mut u, p, &st, dt, &mut z)?;
        check_amplitude(&u, p)?;
        hist.push(discrete_energy(&u, p, &st));
        taken += 1;
    }
    Ok(FlowOutcome { field: u, steps: taken, energy_history: hist })
}

/// `steps` semi-implicit gradient flow steps with the default time step.
pub fn relax(f: &Field, p: &Potential, steps: usize) -> Result<Field> {
    Ok(relax_until(f, p, steps, SolveConfig::default().flow_dt_safety, 0.0)?.field)
}

struct NewtonBlocks {
    hess: Vec<f64>,
    clipped: Vec<f64>,
    pre: Vec<f64>,
}

fn newton_blocks(f: &Field, p: &Potential, st: &Stencil) -> NewtonBlocks {
    let k = f.k;
    let kk = k * k;
    let ie2 = 1.0 / (f.epsilon * f.epsilon);
    let ih2 = 1.0 / (st.h * st.h);
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = par::map(st.active.len(), |idx| {
        if !st.active[idx] {
            return (vec![0.0; kk], vec![0.0; kk], vec![0.0; kk]);
        }
        let mut h = vec![0.0; kk];
        p.hess(f.at(idx), &mut h);
        let m = DMatrix::from_row_slice(k, k, &h);
        let eig = SymmetricEigen::new(m);
        let lam = eig.eigenvalues.map(|l| l.max(0.0));
        let clipped = &eig.eigenvectors * DMatrix::from_diagonal(&lam) * eig.eigenvectors.transpose();
        let diag = link_diag(st, idx) * ih2;
        let block = DMatrix::identity(k, k) * diag + &clipped * (st.w[idx] * ie2);
        let inv = block.try_inverse().unwrap_or_else(|| DMatrix::identity(k, k) / diag);
        let flat = |m: &DMatrix<f64>| (0..kk).map(|t| m[(t / k, t % k)]).collect::<Vec<f64>>();
        (h, flat(&clipped), flat(&inv))
    });
    let mut b = NewtonBlocks { hess: Vec::new(), clipped: Vec::new(), pre: Vec::new() };
    for (h, c, i) in rows {
        b.hess.extend(h);
        b.clipped.extend(c);
        b.pre.extend(i);
    }
    b
}

fn newton_direction(f: &Field, st: &Stencil, blocks: &NewtonBlocks, rhs: &[f64], cfg: &SolveConfig, clipped: bool) -> (Vec<f64>, bool) {
    let k = f.k;
    let kk = k * k;
    let ie2 = 1.0 / (f.epsilon * f.epsilon);
    let ih2 = 1.0 / (st.h * st.h);
    let hs = if clipped { &blocks.clipped } else { &blocks.hess };
    let op = |z: &[f64], out: &mut [f64]| {
        apply_graph(st, k, ih2, z, out, |idx, zi, o| {
            let h = &hs[idx * kk..(idx + 1) * kk];
            let s = st.w[idx] * ie2;
            for (a, oa) in o.iter_mut().enumerate() {
                *oa = s * (0..k).map(|b| h[a * k + b] * zi[b]).sum::<f64>();
            }
        })
    };
    let pre = |r: &[f64], z: &mut [f64]| {
        z.par_chunks_mut(k).enumerate().with_min_len(par::MIN_LEN).for_each(|(idx, zi)| {
            let m = &blocks.pre[idx * kk..(idx + 1) * kk];
            let ri = &r[idx * k..(idx + 1) * k];
            for (a, za) in zi.iter_mut().enumerate() {
                *za = (0..k).map(|b| m[a * k + b] * ri[b]).sum();
            }
        })
    };
    let mut z = vec![0.0; rhs.len()];
    let out = pcg(op, pre, rhs, &mut z, cfg.cg_rtol, cfg.cg_max_iters);
    (z, out.indefinite)
}

/// Damped Newton iteration from `f`.
pub fn newton_refine_with(f: &Field, p: &Potential, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let mut u = f.clone();
    let st = u.stencil();
    let k = u.k;
    let scaled = |r: &[f64], u: &Field| {
        r.iter().fold(0.0f64, |a, b| a.max(b.abs())) * u.epsilon * u.epsilon / (1.0 + u.sup_norm())
    };
    let mut r = residual_vector(&u, p, &st);
    let mut history = vec![scaled(&r, &u)];
    let mut warnings = resolution_warnings(u.h(), u.epsilon);
    let mut iters = 0;
    let mut flow_steps = 0;
    let mut energy_history = Vec::new();
    while *history.last().unwrap() > cfg.residual_tol {
        if iters >= cfg.newton_max_iters {
            return Err(Error::Stagnation { iters, residual: *history.last().unwrap() });
        }
        iters += 1;
        let merit = weighted_norm_sq(&r, &st, k);
        let blocks = newton_blocks(&u, p, &st);
        let rhs: Vec<f64> = r.iter().enumerate().map(|(i, v)| -st.w[i / k] * v).collect();
        let (mut dir, indefinite) = newton_direction(&u, &st, &blocks, &rhs, cfg, false);
        if indefinite {
            dir = newton_direction(&u, &st, &blocks, &rhs, cfg, true).0;
        }
        let mut accepted = false;
        let mut alpha = 1.0;
        for _ in 0..8 {
            let mut trial = u.clone();
            trial.values.par_iter_mut().zip(&dir).with_min_len(par::MIN_LEN).for_each(|(t, d)| *t += alpha * d);
            if trial.is_finite() {
                let rt = residual_vector(&trial, p, &st);
                if weighted_norm_sq(&rt, &st, k) < (1.0 - 1e-4 * alpha) * merit {
                    u = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            let fl = relax_until(&u, p, cfg.fallback_steps, cfg.flow_dt_safety, 0.0)?;
            flow_steps += fl.steps;
            energy_history.extend(fl.energy_history);
            u = fl.field;
            r = residual_vector(&u, p, &st);
            if weighted_norm_sq(&r, &st, k) >= merit {
                warnings.push(format!("newton iteration {iters}: no decrease after fallback"));
            }
        }
        check_amplitude(&u, p)?;
        history.push(scaled(&r, &u));
    }
    let max_amplitude = u.sup_norm();
    let energy = total_energy(&u, p);
    Ok(SolveResult {
        field: u,
        residual_history: history,
        converged: true,
        energy,
        max_amplitude,
        newton_iters: iters,
        flow_steps,
        energy_history,
        warnings,
    })
}

pub fn newton_refine(f: &Field, p: &Potential) -> Result<SolveResult> {
    newton_refine_with(f, p, &SolveConfig::default())
}

/// Flow then Newton from the given starting field.
pub fn solve_from(f: &Field, p: &Potential, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let fl = relax_until(f, p, cfg.max_gradient_flow_steps, cfg.flow_dt_safety, cfg.flow_handoff_tol)?;
    let mut res = newton_refine_with(&fl.field, p, cfg)?;
    let mut hist = fl.energy_history;
    hist.extend(res.energy_history);
    res.energy_history = hist;
    res.flow_steps += fl.steps;
    Ok(res)
}

/// Energy history increases beyond `tol * E_0`.
pub fn energy_increases(hist: &[f64], tol: f64) -> usize {
    let e0 = hist.first().copied().unwrap_or(0.0).abs();
    hist.windows(2).filter(|w| w[1] > w[0] + tol * e0).count()
}

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub epsilon: f64,
    pub h: f64,
    pub result: Option<SolveResult>,
    pub error: Option<String>,
    /// Nodes whose closest well differs from the warm start, as a fraction.
    pub phase_change: f64,
}

#[derive(Debug, Clone)]
pub struct FamilyOutcome {
    pub members: Vec<FamilyMember>,
    /// Largest member energy.
    pub m0: f64,
}

impl FamilyOutcome {
    pub fn all_converged(&self) -> bool {
        self.members.iter().all(|m| m.result.as_ref().is_some_and(|r| r.converged))
    }

    pub fn fields(&self) -> Vec<&Field> {
        self.members.iter().filter_map(|m| m.result.as_ref().map(|r| &r.field)).collect()
    }
}

/// Phase-change fraction above which a member is flagged as a branch hop.
pub const BRANCH_HOP_FRACTION: f64 = 0.05;

fn phase_change(a: &Field, b: &Field, p: &Potential) -> f64 {
    let g = &*a.grid;
    let (mut n, mut d) = (0usize, 0usize);
    for idx in 0..g.n_nodes() {
        if g.kind(idx) == NodeKind::Inside {
            n += 1;
            if p.closest_well(a.at(idx)).0 != p.closest_well(b.at(idx)).0 {
                d += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        d as f64 / n as f64
    }
}

/// Solves for each `eps` (decreasing) on a grid with `h = eps / m`, warm
/// starting each member from the previous converged one.
pub fn solve_family(
    boundary: &BoundarySpec,
    p: &Potential,
    domain: &Domain,
    eps_list: &[f64],
    m: usize,
    cfg: &SolveConfig,
) -> Result<FamilyOutcome> {
    cfg.validate()?;
    boundary.validate(p)?;
    if eps_list.windows(2).any(|w| w[1] >= w[0]) || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidConfig(format!("eps_list must be positive and decreasing: {eps_list:?}")));
    }
    if m < 4 {
        return Err(Error::InvalidConfig(format!("grid ratio m = {m} must be >= 4")));
    }
    let mut members = Vec::with_capacity(eps_list.len());
    let mut prev: Option<Field> = None;
    for &eps in eps_list {
        let h = eps / m as f64;
        let grid = Arc::new(Grid::for_domain(domain, h)?);
        let start = match &prev {
            None => seed(boundary, p, grid, eps, &cfg.seed_strategy),
            Some(pf) => resample(pf, grid, eps, BoundaryCondition::Dirichlet, |x| x, true).map(|mut f| {
                boundary.impose(p, &mut f);
                f
            }),
        };
        let outcome = start.and_then(|s| solve_from(&s, p, cfg).map(|r| (s, r)));
        match outcome {
            Ok((s, mut r)) => {
                let pc = if prev.is_some() { phase_change(&s, &r.field, p) } else { 0.0 };
                if pc > BRANCH_HOP_FRACTION {
                    r.warnings.push(format!("branch change: {:.3} of nodes changed phase from the warm start", pc));
                }
                prev = Some(r.field.clone());
                members.push(FamilyMember { epsilon: eps, h, result: Some(r), error: None, phase_change: pc });
            }
            Err(e) => members.push(FamilyMember { epsilon: eps, h, result: None, error: Some(e.to_string()), phase_change: 0.0 }),
        }
    }
    let m0 = members.iter().filter_map(|m| m.result.as_ref().map(|r| r.energy)).fold(0.0, f64::max);
    Ok(FamilyOutcome { members, m0 })
}

/// Weak form `int grad u : grad phi + eps^-2 grad V . phi` in its exact
/// discrete pairing, with the normalizing scale
/// `int |grad u||grad phi| + eps^-2 |grad V||phi|`.
pub fn weak_form_residual<F>(f: &Field, p: &Potential, phi: F) -> (f64, f64)
where
    F: Fn([f64; 2], &mut [f64]) + Sync,
{
    let st = f.stencil();
    let r = residual_vector(f, p, &st);
    let k = f.k;
    let g = &*f.grid;
    let h2 = st.h * st.h;
    let ie2 = 1.0 / (f.epsilon * f.epsilon);
    let grad = crate::grid::gradient(f);
    let test = Field::from_fn(f.grid.clone(), k, f.epsilon, f.bc, |x, v| phi(x, v));
    let tgrad = crate::grid::gradient(&test);
    let terms: Vec<(f64, f64)> = par::map(g.n_nodes(), |idx| {
        if !st.active[idx] {
            return (0.0, 0.0);
        }
        let ph = test.at(idx);
        let val: f64 = (0..k).map(|c| ph[c] * r[idx * k + c]).sum::<f64>() * st.w[idx] * h2;
        let gu: f64 = grad[idx * 2 * k..(idx + 1) * 2 * k].iter().map(|t| t * t).sum::<f64>().sqrt();
        let gp: f64 = tgrad[idx * 2 * k..(idx + 1) * 2 * k].iter().map(|t| t * t).sum::<f64>().sqrt();
        let mut dv = vec![0.0; k];
        p.grad(f.at(idx), &mut dv);
        let dvn = dv.iter().map(|t| t * t).sum::<f64>().sqrt();
        let pn = ph.iter().map(|t| t * t).sum::<f64>().sqrt();
        (val, (gu * gp + ie2 * dvn * pn) * st.w[idx] * h2)
    });
    (par::sum(terms.len(), |i| terms[i].0), par::sum(terms.len(), |i| terms[i].1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn gl() -> Potential {
        Potential::builtin("gl-scalar").unwrap()
    }

    fn square(h: f64) -> Arc<Grid> {
        Arc::new(Grid::rectangle(0.0, 0.0, 1.0, 1.0, h).unwrap())
    }

    #[test]
    fn well_is_a_fixed_point() {
        let p = gl();
        let f = Field::constant(square(0.05 / 8.0), &[1.0], 0.05, BoundaryCondition::Dirichlet);
        let g = relax(&f, &p, 5).unwrap();
        assert_eq!(g.values, f.values);
        let r = newton_refine(&f, &p).unwrap();
        assert!(r.converged);
        assert_eq!(r.newton_iters, 0);
        assert_eq!(r.final_residual(), 0.0);
    }

    #[test]
    fn flow_approaches_tanh_with_monotone_energy() {
        let p = gl();
        let eps = 0.1;
        let g = square(eps / 8.0);
        let b = BoundarySpec::TwoPhaseSharp(90.0);
        let f0 = seed(&b, &p, g.clone(), eps, &SeedStrategy::FromBoundary).unwrap();
        let fl = relax_until(&f0, &p, 300, 0.2, 0.0).unwrap();
        assert_eq!(energy_increases(&fl.energy_history, 1e-10), 0);
        let exact = |x: [f64; 2]| ((x[1] - 0.5) / (SQRT_2 * eps)).tanh();
        let (mut num, mut den) = (0.0, 0.0);
        for idx in 0..g.n_nodes() {
            if g.kind(idx) == NodeKind::Inside && (g.pos(idx)[0] - 0.5).abs() < 0.3 {
                num += (fl.field.at(idx)[0] - exact(g.pos(idx))).powi(2);
                den += exact(g.pos(idx)).powi(2);
            }
        }
        assert!((num / den).sqrt() <= 0.05, "{}", (num / den).sqrt());
    }

    #[test]
    fn newton_reaches_tolerance_and_weak_form() {
        let p = gl();
        let eps = 0.05;
        let g = square(eps / 8.0);
        let f0 = seed(&BoundarySpec::TwoPhase(90.0), &p, g, eps, &SeedStrategy::FromBoundary).unwrap();
        let fl = relax(&f0, &p, 20).unwrap();
        let r = newton_refine(&fl, &p).unwrap();
        assert!(r.converged && r.final_residual() <= 1e-8);
        let (v, s) = weak_form_residual(&r.field, &p, |x, out| {
            out[0] = (std::f64::consts::PI * x[0]).sin() * (2.0 * std::f64::consts::PI * x[1]).sin()
        });
        assert!(v.abs() <= 1e-8 * s.max(1e-300), "{v} {s}");
        assert!(r.max_amplitude <= 2.0 * (p.r0() + 1.0));
    }

    #[test]
    fn under_resolved_is_flagged() {
        let p = gl();
        let eps = 0.05;
        let g = square(eps);
        let f0 = seed(&BoundarySpec::TwoPhase(90.0), &p, g, eps, &SeedStrategy::FromBoundary).unwrap();
        match solve_from(&f0, &p, &SolveConfig::default()) {
            Ok(r) => assert!(r.warnings.iter().any(|w| w.starts_with("under-resolved"))),
            Err(e) => assert!(matches!(e, Error::Stagnation { .. })),
        }
    }

    #[test]
    fn family_constant_boundary() {
        let p = gl();
        let out = solve_family(
            &BoundarySpec::ConstantWell(1),
            &p,
            &Domain::unit_disk(),
            &[0.2, 0.1, 0.05],
            4,
            &SolveConfig::default(),
        )
        .unwrap();
        assert!(out.all_converged());
        for m in &out.members {
            assert!(m.result.as_ref().unwrap().energy < 1e-12);
        }
        let empty = solve_family(&BoundarySpec::ConstantWell(1), &p, &Domain::unit_disk(), &[], 8, &SolveConfig::default())
            .unwrap();
        assert!(empty.members.is_empty());
        assert!(solve_family(&BoundarySpec::ConstantWell(1), &p, &Domain::unit_disk(), &[0.1, 0.2], 8, &SolveConfig::default())
            .is_err());
    }

    #[test]
    fn family_two_phase_disk_energy() {
        let p = gl();
        let out = solve_family(
            &BoundarySpec::TwoPhase(90.0),
            &p,
            &Domain::unit_disk(),
            &[0.1, 0.05],
            8,
            &SolveConfig::default(),
        )
        .unwrap();
        assert!(out.all_converged());
        let e = out.members.last().unwrap().result.as_ref().unwrap().energy;
        let c0 = 2.0 * SQRT_2 / 3.0;
        assert!((e / (2.0 * c0) - 1.0).abs() < 0.1, "{e}");
        assert!(out.members.iter().all(|m| m.result.as_ref().unwrap().energy <= out.m0));
    }

    #[test]
    fn blow_up_is_reported() {
        let p = gl();
        let mut f = Field::constant(square(0.05 / 4.0), &[1.0], 0.05, BoundaryCondition::Dirichlet);
        let mid = f.grid.nearest_node([0.5, 0.5]);
        f.at_mut(mid)[0] = 1e3;
        assert!(matches!(relax(&f, &p, 3), Err(Error::BlowUp { .. })));
    }
}
