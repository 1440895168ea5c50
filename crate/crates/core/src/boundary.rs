//! Boundary data presets and initial guesses.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, Field, Grid, NodeKind};
use crate::potential::Potential;

/// Dirichlet data as a function of position. Angles are in degrees in the
/// textual form and measured around the domain centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BoundarySpec {
    /// `constant-well:I`.
    ConstantWell(usize),
    /// `two-phase:ANGLE`: well 0 where `n . (x - c) < 0`, well 1 beyond,
    /// joined by the one-dimensional `tanh` profile of width `sqrt(2) eps`.
    TwoPhase(f64),
    /// `two-phase-sharp:ANGLE`: same split with a jump.
    TwoPhaseSharp(f64),
    /// `three-phase:A1,A2,A3`: wells 0, 1, 2 on the sectors
    /// `[A1, A2)`, `[A2, A3)`, `[A3, A1 + 360)`.
    ThreePhase([f64; 3]),
    /// `perturbed-well:I:AMP:MODE`: `sigma_I + AMP cos(MODE theta) e_1`.
    PerturbedWell { well: usize, amplitude: f64, mode: u32 },
    /// `csv:PATH`: rows `theta_rad, u_1, .., u_k`, periodic linear
    /// interpolation in `theta`.
    Tabulated { path: String, theta: Vec<f64>, values: Vec<Vec<f64>> },
}

fn parse_f(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::InvalidConfig(format!("boundary: cannot parse {what} from '{s}'")))
}

impl FromStr for BoundarySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (tag, rest) = s.split_once(':').unwrap_or((s, ""));
        let idx = |t: &str| {
            t.trim().parse::<usize>().map_err(|_| Error::InvalidConfig(format!("boundary: bad well index '{t}'")))
        };
        match tag {
            "constant-well" => Ok(BoundarySpec::ConstantWell(idx(rest)?)),
            "two-phase" => Ok(BoundarySpec::TwoPhase(parse_f(rest, "angle")?)),
            "two-phase-sharp" => Ok(BoundarySpec::TwoPhaseSharp(parse_f(rest, "angle")?)),
            "three-phase" => {
                let a: Vec<f64> = rest.split(',').map(|t| parse_f(t, "angle")).collect::<Result<_>>()?;
                if a.len() != 3 || !(a[0] < a[1] && a[1] < a[2] && a[2] < a[0] + 360.0) {
                    return Err(Error::InvalidConfig(format!("boundary: three-phase needs 3 increasing angles, got '{rest}'")));
                }
                Ok(BoundarySpec::ThreePhase([a[0], a[1], a[2]]))
            }
            "perturbed-well" => {
                let parts: Vec<&str> = rest.split(':').collect();
                if parts.len() != 3 {
                    return Err(Error::InvalidConfig(format!("boundary: perturbed-well:I:AMP:MODE, got '{s}'")));
                }
                let mode = parts[2]
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("boundary: bad mode '{}'", parts[2])))?;
                Ok(BoundarySpec::PerturbedWell { well: idx(parts[0])?, amplitude: parse_f(parts[1], "amplitude")?, mode })
            }
            "csv" => BoundarySpec::load_csv(Path::new(rest)),
            _ => Err(Error::InvalidConfig(format!("boundary: unknown preset '{tag}'"))),
        }
    }
}

impl TryFrom<String> for BoundarySpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for BoundarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundarySpec::ConstantWell(i) => write!(f, "constant-well:{i}"),
            BoundarySpec::TwoPhase(a) => write!(f, "two-phase:{a}"),
            BoundarySpec::TwoPhaseSharp(a) => write!(f, "two-phase-sharp:{a}"),
            BoundarySpec::ThreePhase(a) => write!(f, "three-phase:{},{},{}", a[0], a[1], a[2]),
            BoundarySpec::PerturbedWell { well, amplitude, mode } => write!(f, "perturbed-well:{well}:{amplitude}:{mode}"),
            BoundarySpec::Tabulated { path, .. } => write!(f, "csv:{path}"),
        }
    }
}

impl From<BoundarySpec> for String {
    fn from(b: BoundarySpec) -> String {
        b.to_string()
    }
}

impl BoundarySpec {
    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() >= 2 => rows.push((v[0].rem_euclid(2.0 * PI), v[1..].to_vec())),
                _ if rows.is_empty() && n == 0 => continue,
                _ => return Err(Error::Format(format!("{}:{}: expected 'theta,u1,..,uk'", path.display(), n + 1))),
            }
        }
        if rows.is_empty() {
            return Err(Error::Format(format!("{}: no data rows", path.display())));
        }
        let k = rows[0].1.len();
        if rows.iter().any(|r| r.1.len() != k) {
            return Err(Error::Format(format!("{}: inconsistent column count", path.display())));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(BoundarySpec::Tabulated {
            path: path.display().to_string(),
            theta: rows.iter().map(|r| r.0).collect(),
            values: rows.into_iter().map(|r| r.1).collect(),
        })
    }

    /// Checks the preset against the potential.
    pub fn validate(&self, p: &Potential) -> Result<()> {
        let need = match self {
            BoundarySpec::ConstantWell(i) | BoundarySpec::PerturbedWell { well: i, .. } => i + 1,
            BoundarySpec::TwoPhase(_) | BoundarySpec::TwoPhaseSharp(_) => 2,
            BoundarySpec::ThreePhase(_) => 3,
            BoundarySpec::Tabulated { values, .. } => {
                if values[0].len() != p.k() {
                    return Err(Error::InvalidConfig(format!(
                        "boundary: table has {} components, potential has k = {}",
                        values[0].len(),
                        p.k()
                    )));
                }
                0
            }
        };
        if need > p.q() {
            return Err(Error::InvalidConfig(format!("boundary '{self}' needs {need} wells, potential has {}", p.q())));
        }
        Ok(())
    }

    /// Value at `x` for a domain centred at `c`.
    pub fn eval(&self, p: &Potential, c: [f64; 2], eps: f64, x: [f64; 2], out: &mut [f64]) {
        let d = [x[0] - c[0], x[1] - c[1]];
        let theta = d[1].atan2(d[0]).rem_euclid(2.0 * PI);
        let blend = |t: f64, out: &mut [f64]| {
            for (o, (a, b)) in out.iter_mut().zip(p.well(0).iter().zip(p.well(1))) {
                *o = a + (b - a) * t;
            }
        };
        match self {
            BoundarySpec::ConstantWell(i) => out.copy_from_slice(p.well(*i)),
            BoundarySpec::TwoPhase(a) | BoundarySpec::TwoPhaseSharp(a) => {
                let a = a.to_radians();
                let s = a.cos() * d[0] + a.sin() * d[1];
                let t = if matches!(self, BoundarySpec::TwoPhase(_)) {
                    0.5 * (1.0 + (s / (SQRT_2 * eps)).tanh())
                } else if s < 0.0 {
                    0.0
                } else {
                    1.0
                };
                blend(t, out)
            }
            BoundarySpec::ThreePhase(a) => {
                let deg = theta.to_degrees();
                let rel = (deg - a[0]).rem_euclid(360.0);
                let i = if rel < a[1] - a[0] {
                    0
                } else if rel < a[2] - a[0] {
                    1
                } else {
                    2
                };
                out.copy_from_slice(p.well(i));
            }
            BoundarySpec::PerturbedWell { well, amplitude, mode } => {
                out.copy_from_slice(p.well(*well));
                out[0] += amplitude * (*mode as f64 * theta).cos();
            }
            BoundarySpec::Tabulated { theta: th, values, .. } => {
                let n = th.len();
                if n == 1 {
                    out.copy_from_slice(&values[0]);
                    return;
                }
                let j = th.partition_point(|&t| t <= theta);
                let (lo, hi) = if j == 0 || j == n { (n - 1, 0) } else { (j - 1, j) };
                let span = (th[hi] - th[lo]).rem_euclid(2.0 * PI);
                let off = (theta - th[lo]).rem_euclid(2.0 * PI);
                let t = if span > 0.0 { off / span } else { 0.0 };
                for (c, o) in out.iter_mut().enumerate() {
                    *o = values[lo][c] + (values[hi][c] - values[lo][c]) * t;
                }
            }
        }
    }

    /// Writes the data on every non-active node of `f`.
    pub fn impose(&self, p: &Potential, f: &mut Field) {
        let c = f.grid.domain.center();
        let eps = f.epsilon;
        let g = f.grid.clone();
        for idx in 0..g.n_nodes() {
            if g.is_used(idx) && !f.is_active(idx) {
                let x = g.pos(idx);
                self.eval(p, c, eps, x, f.at_mut(idx));
            }
        }
    }
}

/// Initial guess for the first member of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedStrategy {
    /// The boundary formula evaluated at interior points.
    FromBoundary,
    /// Each interior node takes the well closest to the data at its nearest
    /// boundary node.
    FromWellsVoronoi,
    /// A field file header path.
    Supplied(String),
}

pub fn seed(boundary: &BoundarySpec, p: &Potential, grid: Arc<Grid>, eps: f64, strategy: &SeedStrategy) -> Result<Field> {
    let c = grid.domain.center();
    let k = p.k();
    let mut f = match strategy {
        SeedStrategy::FromBoundary => {
            Field::from_fn(grid, k, eps, BoundaryCondition::Dirichlet, |x, v| boundary.eval(p, c, eps, x, v))
        }
        SeedStrategy::FromWellsVoronoi => {
            let bnodes: Vec<usize> = (0..grid.n_nodes()).filter(|&i| grid.kind(i) == NodeKind::Boundary).collect();
            let g = grid.clone();
            Field::from_fn(grid, k, eps, BoundaryCondition::Dirichlet, |x, v| {
                let mut best = (0, f64::INFINITY);
                for &b in &bnodes {
                    let q = g.pos(b);
                    let d = (q[0] - x[0]).powi(2) + (q[1] - x[1]).powi(2);
                    if d < best.1 {
                        best = (b, d);
                    }
                }
                boundary.eval(p, c, eps, g.pos(best.0), v);
                let (i, _) = p.closest_well(v);
                v.copy_from_slice(p.well(i));
            })
        }
        SeedStrategy::Supplied(path) => {
            let src = crate::io::read_field(Path::new(path))?;
            if src.k != k {
                return Err(Error::GridMismatch(format!("supplied seed has k = {}, potential has {k}", src.k)));
            }
            crate::grid::resample(&src, grid, eps, BoundaryCondition::Dirichlet, |x| x, true)?
        }
    };
    boundary.impose(p, &mut f);
    Ok(f)
}
