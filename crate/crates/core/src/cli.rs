//! Batch orchestration behind the `multiwell` binary: experiment configs,
//! run directories, checker suites and concentration exports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boundary::BoundarySpec;
use crate::clearing::{
    decay_check_on, empirical_c_dec, eta0_from_samples, fit_c_nrg, fit_eta1, halton_disks, lattice_disks,
    sample_family, ClearingVerdict, DiskIndex, DiskSampling, ETA_SCAN_MAX,
};
use crate::concentration::{
    clearing_transfer_check, connectivity_check, covering_length_estimate, dilation_constancy_check, extract_sstar, limit_hopf_fields,
    measure_stack, shear_constancy_check, write_hopf_table, ConcentrationSummary, ConnectivityReport, ConstancyReport, CoveringReport,
    HopfIndicator, HopfVariation,
};
use crate::error::{Error, Result};
use crate::functionals::{
    densities_with, modica_mortola_map, pohozaev_inequality_check, stress_divergence_residual, stress_tensor_with, BumpField, MM_SLACK,
    PRESETS,
};
use crate::grid::{gradient, DiskSpec, Domain, Field};
use crate::io::{read_field, write_field, Payload};
use crate::levelsets::RegionFamily;
use crate::potential::{derive_constants, validate_hypotheses, PolynomialSpec, Potential, StructuralConstants};
use crate::report::{CheckRecord, ConstantEntry, ConstantsManifest};
use crate::solver::{solve_family, SolveConfig};

pub const RUN_FORMAT: &str = "multiwell-run";
pub const REPORT_FORMAT: &str = "multiwell-report";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONSTANTS_FILE: &str = "constants.json";

/// Stress identity tolerance per unit `h / eps`.
pub const STRESS_TOL_PER_H: f64 = 0.16;
/// Agreement of the real and complex stress forms.
pub const STRESS_FORM_TOL: f64 = 0.01;
/// Slack on the Hopf total-variation bounds.
pub const HOPF_TV_SLACK: f64 = 0.05;
/// Sample budget for the potential suite.
pub const HYPOTHESIS_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExitCode {
    Pass = 0,
    CheckFailure = 1,
    Usage = 2,
    NonConvergence = 3,
}

/// Exit code for an error surfaced by a command.
pub fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::BlowUp { .. } | Error::Stagnation { .. } => ExitCode::NonConvergence,
        _ => ExitCode::Usage,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialSource {
    Builtin(String),
    Polynomial(PolynomialSpec),
}

impl PotentialSource {
    pub fn build(&self) -> Result<Potential> {
        match self {
            PotentialSource::Builtin(name) => Potential::builtin(name),
            PotentialSource::Polynomial(spec) => Potential::from_spec(spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Potential,
    Functionals,
    Levelsets,
    Clearing,
    Concentration,
}

pub const ALL_SUITES: [Suite; 5] = [Suite::Potential, Suite::Functionals, Suite::Levelsets, Suite::Clearing, Suite::Concentration];

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "potential" => Ok(Suite::Potential),
            "functionals" => Ok(Suite::Functionals),
            "levelsets" => Ok(Suite::Levelsets),
            "clearing" => Ok(Suite::Clearing),
            "concentration" => Ok(Suite::Concentration),
            other => Err(Error::InvalidConfig(format!("unknown suite '{other}' (expected one of potential, functionals, levelsets, clearing, concentration)"))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Suite::Potential => "potential",
            Suite::Functionals => "functionals",
            Suite::Levelsets => "levelsets",
            Suite::Clearing => "clearing",
            Suite::Concentration => "concentration",
        };
        f.write_str(s)
    }
}

pub fn parse_suites(tags: &[String]) -> Result<Vec<Suite>> {
    let mut v: Vec<Suite> = tags.iter().flat_map(|t| t.split(',')).filter(|t| !t.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    v.sort();
    v.dedup();
    Ok(v)
}

/// Where the concentration threshold comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eta0Source {
    Scan,
    Manifest,
    Value(f64),
}

impl FromStr for Eta0Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "scan" => Ok(Eta0Source::Scan),
            "manifest" => Ok(Eta0Source::Manifest),
            v => match v.parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => Ok(Eta0Source::Value(x)),
                _ => Err(Error::InvalidConfig(format!("--eta0 expects scan, manifest or a positive number, got '{v}'"))),
            },
        }
    }
}

fn default_fit_date() -> String {
    "unspecified".into()
}

fn default_shrink() -> f64 {
    0.5
}

fn default_validation() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSource,
    pub domain: Domain,
    pub boundary: BoundarySpec,
    pub eps_list: Vec<f64>,
    /// `h = eps / grid_ratio`.
    pub grid_ratio: usize,
    #[serde(default)]
    pub checks: Vec<Suite>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub constants_manifest: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default)]
    pub sampling: DiskSampling,
    /// Separate Halton disks per member for clearing-out validation.
    #[serde(default = "default_validation")]
    pub validation_disks: usize,
    #[serde(default = "default_shrink")]
    pub mu0_shrink: f64,
    /// Recorded with fitted constants.
    #[serde(default = "default_fit_date")]
    pub fit_date: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() || self.eps_list.windows(2).any(|w| w[1] >= w[0]) || self.eps_list.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidConfig(format!("eps_list must be non-empty, positive and decreasing: {:?}", self.eps_list)));
        }
        if self.grid_ratio < 4 {
            return Err(Error::InvalidConfig(format!("grid_ratio = {} must be >= 4", self.grid_ratio)));
        }
        if !(self.mu0_shrink > 0.0 && self.mu0_shrink < 1.0) {
            return Err(Error::InvalidConfig(format!("mu0_shrink = {} not in (0, 1)", self.mu0_shrink)));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberRecord {
    pub epsilon: f64,
    pub h: f64,
    pub converged: bool,
    pub energy: Option<f64>,
    pub final_residual: Option<f64>,
    pub newton_iters: usize,
    pub flow_steps: usize,
    pub phase_change: f64,
    pub warnings: Vec<String>,
    /// Field header, relative to the run directory.
    pub field: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub members: Vec<MemberRecord>,
    pub m0: f64,
}

impl RunManifest {
    pub fn all_converged(&self) -> bool {
        self.members.iter().all(|m| m.converged)
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Solves the configured family and writes fields plus `manifest.json`.
pub fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let p = cfg.potential.build()?;
    let fam = solve_family(&cfg.boundary, &p, &cfg.domain, &cfg.eps_list, cfg.grid_ratio, &cfg.solver)?;
    std::fs::create_dir_all(out.join("fields"))?;
    let mut members = Vec::with_capacity(fam.members.len());
    for (i, m) in fam.members.iter().enumerate() {
        let mut rec = MemberRecord {
            epsilon: m.epsilon,
            h: m.h,
            converged: false,
            energy: None,
            final_residual: None,
            newton_iters: 0,
            flow_steps: 0,
            phase_change: m.phase_change,
            warnings: vec![],
            field: None,
            error: m.error.clone(),
        };
        if let Some(r) = &m.result {
            let rel = format!("fields/member-{i}");
            write_field(&r.field, &out.join(&rel), Payload::Bin)?;
            rec.converged = r.converged;
            rec.energy = Some(r.energy);
            rec.final_residual = Some(r.final_residual());
            rec.newton_iters = r.newton_iters;
            rec.flow_steps = r.flow_steps;
            rec.warnings = r.warnings.clone();
            rec.field = Some(format!("{rel}.json"));
        }
        members.push(rec);
    }
    let manifest = RunManifest { format: RUN_FORMAT.into(), version: 1, config: cfg.clone(), members, m0: fam.m0 };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// A loaded run: manifest, potential and the member fields in manifest order.
pub struct Run {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub potential: Potential,
    pub fields: Vec<Field>,
}

pub fn load_run(dir: &Path) -> Result<Run> {
    let mpath = dir.join(MANIFEST_FILE);
    if !mpath.is_file() {
        return Err(Error::MissingArtifacts(format!("{} not found", mpath.display())));
    }
    let text = std::fs::read_to_string(&mpath)?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", mpath.display())))?;
    let potential = manifest.config.potential.build()?;
    let mut fields = Vec::new();
    for m in manifest.members.iter().filter(|m| m.converged) {
        let rel = m.field.as_ref().ok_or_else(|| Error::MissingArtifacts(format!("member eps = {} has no field", m.epsilon)))?;
        let path = dir.join(rel);
        if !path.is_file() {
            return Err(Error::MissingArtifacts(format!("{} not found", path.display())));
        }
        fields.push(read_field(&path)?);
    }
    Ok(Run { dir: dir.to_path_buf(), manifest, potential, fields })
}

impl Run {
    pub fn constants_path(&self) -> PathBuf {
        self.manifest.config.constants_manifest.clone().unwrap_or_else(|| self.dir.join(CONSTANTS_FILE))
    }

    fn eps_range(&self) -> [f64; 2] {
        let e: Vec<f64> = self.fields.iter().map(|f| f.epsilon).collect();
        [e.iter().copied().fold(f64::INFINITY, f64::min), e.iter().copied().fold(0.0, f64::max)]
    }

    fn h_range(&self) -> [f64; 2] {
        let h: Vec<f64> = self.fields.iter().map(|f| f.grid.h).collect();
        [h.iter().copied().fold(f64::INFINITY, f64::min), h.iter().copied().fold(0.0, f64::max)]
    }

    fn refs(&self) -> Vec<&Field> {
        self.fields.iter().collect()
    }
}

pub fn load_constants(path: &Path) -> Result<ConstantsManifest> {
    if !path.is_file() {
        return Ok(ConstantsManifest::default());
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub records: Vec<CheckRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fitted: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub format: String,
    pub version: u32,
    pub potential: String,
    pub boundary: String,
    pub eps: Vec<f64>,
    pub suites: Vec<SuiteReport>,
    pub checks: usize,
    pub failed: usize,
    pub vacuous: usize,
    pub pass: bool,
}

impl CheckReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn flag(name: &str, region: &str, ok: bool) -> CheckRecord {
    CheckRecord::bounded(name, region, if ok { 0.0 } else { 1.0 }, 0.0)
}

fn error_record(name: &str, region: &str, e: &Error) -> CheckRecord {
    let mut r = flag(name, region, false);
    r.region = format!("{region}: {e}");
    r
}

fn member_region(f: &Field) -> String {
    format!("eps={}", f.epsilon)
}

fn central_disk(domain: &Domain, fraction: f64) -> DiskSpec {
    DiskSpec::new(domain.center(), fraction * domain.width())
}

fn suite_potential(p: &Potential) -> Result<SuiteReport> {
    let rep = validate_hypotheses(p, HYPOTHESIS_BUDGET)?;
    let records = rep.hypotheses.iter().map(|h| flag(&format!("hypothesis_{}", h.name), p.name(), h.pass)).collect();
    Ok(SuiteReport { suite: Suite::Potential, records, fitted: BTreeMap::new() })
}

fn suite_functionals(run: &Run) -> Result<SuiteReport> {
    let p = &run.potential;
    let mut records = Vec::new();
    for (m, f) in run.fields.iter().enumerate() {
        let region = member_region(f);
        let g = &*f.grid;
        let grad = gradient(f);
        let d = densities_with(f, p, &grad);
        let st = stress_tensor_with(f, p, &grad);
        let used: Vec<usize> = (0..g.n_nodes()).filter(|&i| g.is_used(i)).collect();
        let j_bad = used.iter().filter(|&&i| d.j[i] > d.e[i]).count();
        let t_bad = used.iter().filter(|&&i| st.t[i][0] + st.t[i][2] != 0.0).count();
        records.push(CheckRecord::bounded("pointwise_j_le_e", &region, j_bad as f64, 0.0).with("nodes", used.len() as f64));
        records.push(CheckRecord::bounded("trace_free", &region, t_bad as f64, 0.0).with("nodes", used.len() as f64));
        let disk = central_disk(&g.domain, 0.4);
        let tol = STRESS_TOL_PER_H * g.h / f.epsilon;
        for kind in PRESETS {
            let x = BumpField { kind, center: disk.center, radius: disk.radius };
            let s = stress_divergence_residual(f, p, &x);
            let name = format!("stress_identity_{}", serde_json::to_value(kind)?.as_str().unwrap_or("field"));
            records.push(CheckRecord::bounded(&name, &region, s.normalized().abs(), tol));
            records.push(CheckRecord::bounded(&format!("{name}_complex_form"), &region, s.form_mismatch(), STRESS_FORM_TOL));
        }
        for d in halton_disks(&g.domain, f.epsilon, 4.0, 5, 101 * (m as u64 + 1)) {
            records.push(match pohozaev_inequality_check(f, p, &d) {
                Ok(r) => CheckRecord { region: format!("{region} {}", r.region), ..r },
                Err(e) => error_record("pohozaev_inequality", &region, &e),
            });
        }
    }
    Ok(SuiteReport { suite: Suite::Functionals, records, fitted: BTreeMap::new() })
}

fn constants(run: &Run) -> Result<StructuralConstants> {
    derive_constants(&run.potential, run.manifest.config.mu0_shrink)
}

fn suite_levelsets(run: &Run) -> Result<SuiteReport> {
    let p = &run.potential;
    let c = constants(run)?;
    let mut records = Vec::new();
    for f in &run.fields {
        let region = member_region(f);
        match RegionFamily::new(f, p, &c, 0.5 * c.mu0, &central_disk(&f.grid.domain, 0.25)) {
            Ok(fam) => {
                records.push(flag("region_family_covers", &region, fam.covers()));
                records.push(flag("region_family_disjoint", &region, fam.pairwise_disjoint()));
            }
            Err(e) => records.push(error_record("region_family", &region, &e)),
        }
        for i in 0..p.q() {
            match modica_mortola_map(f, p, &c, i) {
                Ok(mm) => records.push(
                    CheckRecord::bounded(&format!("modica_mortola_well_{i}"), &region, mm.violation_fraction(), MM_SLACK)
                        .with("checked", mm.checked as f64),
                ),
                Err(e) => records.push(error_record(&format!("modica_mortola_well_{i}"), &region, &e)),
            }
        }
    }
    Ok(SuiteReport { suite: Suite::Levelsets, records, fitted: BTreeMap::new() })
}

/// Fits `eta0`, `C_nrg`, `C_dec` and `eta1`, validates clearing verdicts on a
/// separate disk sample and upserts the constants manifest.
fn suite_clearing(run: &Run) -> Result<SuiteReport> {
    let p = &run.potential;
    let cfg = &run.manifest.config;
    let c = constants(run)?;
    let refs = run.refs();
    let mut records = Vec::new();
    let mut fitted: BTreeMap<String, f64> = BTreeMap::new();
    let samples = sample_family(&refs, p, &|f| lattice_disks(&f.grid.domain, f.epsilon, &cfg.sampling))?;
    let decay: Vec<_> = run
        .fields
        .iter()
        .map(|f| decay_check_on(f, p, &central_disk(&f.grid.domain, 0.45)))
        .collect::<Result<_>>()?;
    let c_dec = empirical_c_dec(&decay);
    fitted.insert("c_dec".into(), c_dec);
    let per: Vec<f64> = decay.iter().map(|d| d.c_min).filter(|&v| v > 0.0).collect();
    if per.len() >= 2 {
        let (lo, hi) = (per.iter().copied().fold(f64::INFINITY, f64::min), per.iter().copied().fold(0.0, f64::max));
        records.push(CheckRecord::bounded("decay_constant_spread", "family", hi / lo, 2.0));
    } else {
        records.push(CheckRecord::vacuous("decay_constant_spread", "family"));
    }
    match eta0_from_samples(&samples, &c, ETA_SCAN_MAX) {
        Ok(scan) => {
            let c_nrg = fit_c_nrg(&samples, &c, scan.eta0);
            fitted.insert("eta0".into(), scan.eta0);
            fitted.insert("c_nrg".into(), c_nrg);
            let (mut n, mut premise, mut wrong) = (0usize, 0usize, 0usize);
            for (m, f) in run.fields.iter().enumerate() {
                let dens = densities_with(f, p, &gradient(f));
                let index = DiskIndex::new(f, &dens, p);
                for d in halton_disks(&f.grid.domain, f.epsilon, cfg.sampling.min_radius_eps, cfg.validation_disks, 7919 * (m as u64 + 1)) {
                    let v = ClearingVerdict::from_sample(index.sample(&d, m)?, &c, scan.eta0, Some(c_nrg));
                    n += 1;
                    premise += v.premise as usize;
                    wrong += (!v.pass) as usize;
                }
            }
            let r = CheckRecord::bounded("clearing_out_validation", "family", wrong as f64, 0.0)
                .with("disks", n as f64)
                .with("premise", premise as f64)
                .with("eta0", scan.eta0)
                .with("c_nrg", c_nrg);
            records.push(if premise == 0 { CheckRecord { vacuous: true, ..r } } else { r });
        }
        Err(Error::DegenerateFamily) => records.push(CheckRecord::vacuous("clearing_out_validation", "family")),
        Err(e) => return Err(e),
    }
    match fit_eta1(&samples, &c, c_dec.max(f64::MIN_POSITIVE)) {
        Ok(fit) => {
            fitted.insert("eta1".into(), fit.eta1);
        }
        Err(Error::DegenerateFamily) => {}
        Err(e) => return Err(e),
    }
    let path = run.constants_path();
    let mut manifest = load_constants(&path)?;
    for (name, value) in &fitted {
        manifest.upsert(ConstantEntry {
            potential: p.name().into(),
            family: cfg.boundary.to_string(),
            name: name.clone(),
            value: *value,
            fit_date: cfg.fit_date.clone(),
            eps_range: run.eps_range(),
            h_range: run.h_range(),
        });
    }
    write_json(&path, &manifest)?;
    Ok(SuiteReport { suite: Suite::Clearing, records, fitted })
}

/// Threshold for the concentration set from the requested source.
pub fn resolve_eta0(run: &Run, source: Eta0Source) -> Result<f64> {
    match source {
        Eta0Source::Value(v) => Ok(v),
        Eta0Source::Manifest => load_constants(&run.constants_path())?
            .get_for(run.potential.name(), &run.manifest.config.boundary.to_string(), "eta0")
            .filter(|&v| v > 0.0)
            .ok_or_else(|| Error::MissingArtifacts(format!("no positive eta0 for {} in {}", run.potential.name(), run.constants_path().display()))),
        Eta0Source::Scan => {
            let c = constants(run)?;
            let s = &run.manifest.config.sampling;
            let samples = sample_family(&run.refs(), &run.potential, &|f| lattice_disks(&f.grid.domain, f.epsilon, s))?;
            let eta0 = eta0_from_samples(&samples, &c, ETA_SCAN_MAX)?.eta0;
            if eta0 > 0.0 {
                Ok(eta0)
            } else {
                Err(Error::DegenerateFamily)
            }
        }
    }
}

fn suite_concentration(run: &Run, source: Eta0Source) -> Result<SuiteReport> {
    let p = &run.potential;
    let refs = run.refs();
    if refs.len() < 2 {
        return Err(Error::InsufficientFamily(refs.len()));
    }
    let mut records = Vec::new();
    let mut fitted = BTreeMap::new();
    let eta0 = match resolve_eta0(run, source) {
        Ok(v) => v,
        Err(Error::DegenerateFamily) => {
            records.push(CheckRecord::vacuous("sstar_extraction", "family"));
            return Ok(SuiteReport { suite: Suite::Concentration, records, fitted });
        }
        Err(e) => return Err(e),
    };
    fitted.insert("eta0".into(), eta0);
    let stack = measure_stack(&refs, p)?;
    let set = extract_sstar(&stack, eta0)?;
    records.push(CheckRecord::inequality("sstar_length_bound", "family", set.total_length(), set.length_bound(), 0.0, 1e-300));
    records.push(flag("complement_open", "family", set.complement_open));
    let h = set.grid.h;
    for delta in [4.0 * h, 8.0 * h] {
        let cov = covering_length_estimate(&set, delta)?;
        records.push(CheckRecord::inequality("covering_bound", &format!("delta={delta}"), cov.estimate, cov.bound, 0.0, 1e-300));
    }
    let dom = set.grid.domain;
    let r = 0.2 * dom.width();
    match connectivity_check(&set, dom.center(), r) {
        Ok(c) => records.push(CheckRecord::bounded("connectivity", &format!("circle r={r}"), c.components as f64 - 1.0, 0.0)),
        Err(e) => records.push(error_record("connectivity", "centre", &e)),
    }
    let tr = clearing_transfer_check(&stack, &set)?;
    let t = CheckRecord::bounded("clearing_transfer", "family", tr.violations as f64, 0.0).with("clear_disks", tr.clear_disks as f64);
    records.push(if tr.clear_disks == 0 { CheckRecord { vacuous: true, ..t } } else { t });
    let hl = limit_hopf_fields(&refs, p)?;
    let v = hl.variation();
    records.push(CheckRecord::inequality("hopf_omega_variation", "family", v.omega, 2.0 * stack.m0, HOPF_TV_SLACK, 1e-300));
    records.push(CheckRecord::inequality("hopf_zeta_variation", "family", v.zeta, stack.m0, HOPF_TV_SLACK, 1e-300));
    Ok(SuiteReport { suite: Suite::Concentration, records, fitted })
}

/// Runs the suites on a run directory. The constants manifest is updated by
/// the clearing suite; nothing else is written.
pub fn run_checks(dir: &Path, suites: &[Suite], eta0: Eta0Source) -> Result<CheckReport> {
    let run = load_run(dir)?;
    let cfg = &run.manifest.config;
    let chosen: Vec<Suite> = if suites.is_empty() {
        if cfg.checks.is_empty() {
            ALL_SUITES.to_vec()
        } else {
            let mut v = cfg.checks.clone();
            v.sort();
            v.dedup();
            v
        }
    } else {
        suites.to_vec()
    };
    let mut reports = Vec::new();
    for s in chosen {
        let out = match s {
            Suite::Potential => suite_potential(&run.potential),
            Suite::Functionals => suite_functionals(&run),
            Suite::Levelsets => suite_levelsets(&run),
            Suite::Clearing => suite_clearing(&run),
            Suite::Concentration => suite_concentration(&run, eta0),
        };
        reports.push(match out {
            Ok(r) => r,
            Err(e @ (Error::MissingArtifacts(_) | Error::Io(_))) => return Err(e),
            Err(e) => SuiteReport { suite: s, records: vec![error_record("suite", &s.to_string(), &e)], fitted: BTreeMap::new() },
        });
    }
    let all: Vec<&CheckRecord> = reports.iter().flat_map(|r| &r.records).collect();
    let failed = all.iter().filter(|r| !r.vacuous && !r.pass).count();
    let vacuous = all.iter().filter(|r| r.vacuous).count();
    Ok(CheckReport {
        format: REPORT_FORMAT.into(),
        version: 1,
        potential: run.potential.name().into(),
        boundary: cfg.boundary.to_string(),
        eps: run.fields.iter().map(|f| f.epsilon).collect(),
        checks: all.len(),
        failed,
        vacuous,
        pass: failed == 0,
        suites: reports,
    })
}

/// First free `reports/<prefix>-<stamp>[-n].json` in the run directory.
pub fn report_path(dir: &Path, prefix: &str) -> Result<PathBuf> {
    let base = dir.join("reports");
    std::fs::create_dir_all(&base)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let mut path = base.join(format!("{prefix}-{stamp}.json"));
    let mut n = 1;
    while path.exists() {
        path = base.join(format!("{prefix}-{stamp}-{n}.json"));
        n += 1;
    }
    Ok(path)
}

/// Runs the suites and appends the report to the run directory.
pub fn cmd_check(dir: &Path, suites: &[Suite], eta0: Eta0Source) -> Result<(CheckReport, PathBuf)> {
    let report = run_checks(dir, suites, eta0)?;
    let path = report_path(dir, "check")?;
    std::fs::write(&path, report.to_json()?)?;
    Ok((report, path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfSummary {
    pub epsilon: f64,
    pub prev_epsilon: f64,
    pub indicator: HopfIndicator,
    pub variation: HopfVariation,
    pub frame_center: [f64; 2],
    pub frame_half_width: f64,
    pub shear: std::result::Result<ConstancyReport, String>,
    pub dilation: std::result::Result<ConstancyReport, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrateSummary {
    pub eta0: f64,
    pub eta0_source: Eta0Source,
    pub set: ConcentrationSummary,
    pub junctions: usize,
    pub covering: Vec<CoveringReport>,
    pub connectivity: std::result::Result<ConnectivityReport, String>,
    pub hopf: HopfSummary,
}

/// Extracts the concentration set and Hopf tables of a run into
/// `<dir>/concentration/`.
pub fn cmd_concentrate(dir: &Path, source: Eta0Source) -> Result<ConcentrateSummary> {
    let run = load_run(dir)?;
    let refs = run.refs();
    if refs.len() < 2 {
        return Err(Error::InsufficientFamily(refs.len()));
    }
    let p = &run.potential;
    let eta0 = resolve_eta0(&run, source)?;
    let stack = measure_stack(&refs, p)?;
    let set = extract_sstar(&stack, eta0)?;
    let out = dir.join("concentration");
    std::fs::create_dir_all(&out)?;
    set.write_csv(&out.join("sstar.csv"))?;
    let h = set.grid.h;
    let covering = [2.0 * h, 4.0 * h, 8.0 * h].iter().map(|&d| covering_length_estimate(&set, d)).collect::<Result<_>>()?;
    let dom = set.grid.domain;
    let connectivity = connectivity_check(&set, dom.center(), 0.2 * dom.width()).map_err(|e| e.to_string());
    let hl = limit_hopf_fields(&refs, p)?;
    let (x0, r) = (dom.center(), 0.3 * dom.width());
    let shear = shear_constancy_check(&hl, x0, r);
    let dilation = dilation_constancy_check(&hl, x0, r);
    if let (Ok(s), Ok(d)) = (&shear, &dilation) {
        write_hopf_table(&out.join("hopf.csv"), s, d)?;
    }
    let summary = ConcentrateSummary {
        eta0,
        eta0_source: source,
        set: set.summary(),
        junctions: set.junctions(),
        covering,
        connectivity,
        hopf: HopfSummary {
            epsilon: hl.epsilon,
            prev_epsilon: hl.prev_epsilon,
            indicator: hl.indicator,
            variation: hl.variation(),
            frame_center: x0,
            frame_half_width: r,
            shear: shear.map_err(|e| e.to_string()),
            dilation: dilation.map_err(|e| e.to_string()),
        },
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(boundary: &str, eps: &[f64]) -> ExperimentConfig {
        let text = format!(
            r#"{{"potential": "gl-scalar", "domain": {{"shape": "rectangle", "x0": 0, "y0": 0, "x1": 1, "y1": 1}},
                "boundary": "{boundary}", "eps_list": {eps:?}, "grid_ratio": 4, "fit_date": "2026-01-01",
                "validation_disks": 20}}"#
        );
        ExperimentConfig::from_json(&text, "inline").unwrap()
    }

    #[test]
    fn config_errors_name_the_key() {
        let e = ExperimentConfig::from_json(r#"{"potential": "gl-scalar",
            "domain": {"shape": "rectangle", "x0": 0, "y0": 0, "x1": 1, "y1": 1},
            "boundary": "constant-well:0", "grid_ratio": 4}"#, "cfg.json")
        .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("eps_list") && msg.contains("cfg.json") && msg.contains("line"), "{msg}");
        assert_eq!(exit_code(&e), ExitCode::Usage);
        let e = ExperimentConfig::from_json(r#"{"potential": "gl-scalar",
            "domain": {"shape": "rectangle", "x0": 0, "y0": 0, "x1": 1, "y1": 1},
            "boundary": "constant-well:0", "eps_list": [0.1, 0.2], "grid_ratio": 4}"#, "cfg.json")
        .unwrap_err();
        assert!(e.to_string().contains("decreasing"));
        assert!("bogus".parse::<Suite>().is_err());
        assert_eq!(parse_suites(&["clearing,potential".into(), "clearing".into()]).unwrap(), vec![Suite::Potential, Suite::Clearing]);
        assert_eq!("0.25".parse::<Eta0Source>().unwrap(), Eta0Source::Value(0.25));
        assert!("-1".parse::<Eta0Source>().is_err());
    }

    #[test]
    fn constant_run_passes_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config("constant-well:1", &[0.2, 0.1]);
        let m = cmd_solve(&cfg, dir.path()).unwrap();
        assert!(m.all_converged() && m.members.len() == 2);
        assert!(dir.path().join("fields/member-0.json").is_file());
        let suites = [Suite::Functionals, Suite::Levelsets, Suite::Clearing, Suite::Concentration];
        let (a, pa) = cmd_check(dir.path(), &suites, Eta0Source::Value(0.5)).unwrap();
        assert!(a.pass, "{}", a.to_json().unwrap());
        let (b, pb) = cmd_check(dir.path(), &suites, Eta0Source::Value(0.5)).unwrap();
        assert_ne!(pa, pb);
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
        assert_eq!(a, b);
        let s = cmd_concentrate(dir.path(), Eta0Source::Value(0.5)).unwrap();
        assert_eq!(s.set.n_nodes, 0);
        assert!(dir.path().join("concentration/summary.json").is_file());
        assert!(matches!(load_run(&dir.path().join("missing")), Err(Error::MissingArtifacts(_))));
    }

    #[test]
    fn single_member_cannot_concentrate() {
        let dir = tempfile::tempdir().unwrap();
        cmd_solve(&config("constant-well:0", &[0.2]), dir.path()).unwrap();
        assert!(matches!(cmd_concentrate(dir.path(), Eta0Source::Value(0.5)), Err(Error::InsufficientFamily(1))));
    }
}
