//! Run configuration and the convergence, scaling and adaptivity drivers.

use std::io::{Read, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::adaptivity::{adapt_loop, AdaptConfig, AdaptStep};
use crate::error::{DpgError, Result};
use crate::fem::SpaceConfig;
use crate::manufactured::{CaseData, CaseName, ExactField, NormKind};
use crate::mesh::TensorMesh;
use crate::model::{Model, ModelParams, Regime};
use crate::solve::{build_global, ConditionEstimate, GlobalSystem, Solution, SolverOptions};
use crate::c64;

fn default_delta_p() -> usize {
    2
}

fn default_c() -> f64 {
    1e4
}

fn default_initial_n() -> usize {
    4
}

fn default_refinements() -> usize {
    4
}

fn default_c_values() -> Vec<f64> {
    vec![1.0, 100.0, 1000.0, 10000.0]
}

fn default_resolution() -> usize {
    101
}

fn default_lanczos_steps() -> usize {
    40
}

/// Everything a run needs. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub regime: Regime,
    pub case: CaseName,
    /// Overrides the case's ω.
    #[serde(default)]
    pub omega: Option<f64>,
    /// Overrides the first-order soliton's amplitude parameter.
    #[serde(default)]
    pub a0: Option<f64>,
    pub p: usize,
    #[serde(default = "default_delta_p")]
    pub delta_p: usize,
    /// Elliptic flux scaling.
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub beta0: Option<f64>,
    #[serde(default)]
    pub beta1: Option<f64>,
    /// Magnitude and sign; defaults to `±10⁻⁴` by regime.
    #[serde(default)]
    pub beta2: Option<f64>,
    /// Elements per direction on the coarsest mesh.
    #[serde(default = "default_initial_n")]
    pub initial_n: usize,
    /// Uniform refinements after the coarsest mesh.
    #[serde(default = "default_refinements")]
    pub refinements: usize,
    #[serde(default)]
    pub adapt: Option<AdaptConfig>,
    #[serde(default = "default_c_values")]
    pub c_values: Vec<f64>,
    #[serde(default)]
    pub norm: NormKind,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Raster points per direction for field dumps.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Lanczos steps for condition estimates.
    #[serde(default = "default_lanczos_steps")]
    pub lanczos_steps: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// A configuration with defaults for everything but the essentials.
    pub fn new(regime: Regime, case: CaseName, p: usize) -> Self {
        Self {
            regime,
            case,
            omega: None,
            a0: None,
            p,
            delta_p: default_delta_p(),
            c: default_c(),
            beta0: None,
            beta1: None,
            beta2: None,
            initial_n: default_initial_n(),
            refinements: default_refinements(),
            adapt: None,
            c_values: default_c_values(),
            norm: NormKind::default(),
            solver: SolverOptions::default(),
            resolution: default_resolution(),
            lanczos_steps: default_lanczos_steps(),
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| DpgError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_n == 0 {
            return Err(DpgError::Config("initial_n must be positive".into()));
        }
        if self.resolution == 0 {
            return Err(DpgError::Config("resolution must be positive".into()));
        }
        if let Some(a) = &self.adapt {
            a.validate()?;
        }
        self.spaces()?;
        self.params_with_c(self.c)?;
        self.exact_field()?;
        Ok(())
    }

    pub fn spaces(&self) -> Result<SpaceConfig> {
        SpaceConfig::new(self.p, self.delta_p)
    }

    pub fn params_with_c(&self, c: f64) -> Result<ModelParams> {
        let b2 = self.beta2.unwrap_or(match self.regime {
            Regime::Hyperbolic => ModelParams::DEFAULT_BETA2_ABS,
            Regime::Elliptic => -ModelParams::DEFAULT_BETA2_ABS,
        });
        let params = ModelParams::derive(
            self.beta0.unwrap_or(ModelParams::DEFAULT_BETA0),
            self.beta1.unwrap_or(ModelParams::DEFAULT_BETA1),
            b2,
            c,
        )?;
        if params.regime != self.regime {
            return Err(DpgError::WrongRegime { expected: self.regime, found: params.regime });
        }
        Ok(params)
    }

    /// The named exact field with the configured overrides.
    pub fn exact_field(&self) -> Result<ExactField> {
        let mut field = self.case.field();
        match &mut field {
            ExactField::SolitonFirst { omega, a0 } => {
                *omega = self.omega.unwrap_or(*omega);
                *a0 = self.a0.unwrap_or(*a0);
            }
            ExactField::SolitonSecond { omega } | ExactField::GaussianBeam { omega } => {
                if self.a0.is_some() {
                    return Err(DpgError::Config(format!("a0 does not apply to {:?}", self.case)));
                }
                *omega = self.omega.unwrap_or(*omega);
            }
            _ => {}
        }
        if let ExactField::GaussianBeam { omega } = field {
            if !(omega > 0.0) {
                return Err(DpgError::Config("omega must be positive".into()));
            }
        }
        Ok(field)
    }

    pub fn case_with_c(&self, c: f64) -> Result<CaseData> {
        let model = Model::new(self.params_with_c(c)?);
        let v = (model.regime() == Regime::Hyperbolic).then_some(ExactField::Auxiliary);
        CaseData::new(model, self.exact_field()?, v)
    }

    pub fn case_data(&self) -> Result<CaseData> {
        self.case_with_c(self.c)
    }

    /// Uniform meshes `n, 2n, …` on the unit square.
    pub fn meshes(&self) -> Result<Vec<TensorMesh>> {
        let mut out = vec![TensorMesh::unit_square(self.initial_n)?];
        for _ in 0..self.refinements {
            let next = out.last().expect("nonempty").refine_uniform();
            out.push(next);
        }
        Ok(out)
    }
}

/// One line of a convergence table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub sqrt_n: f64,
    #[serde(rename = "rel_L2_error")]
    pub rel_l2_error: f64,
    pub res: f64,
    pub extslp: f64,
}

pub fn write_rows(rows: &[ConvergenceRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["sqrt_n", "rel_L2_error", "res", "extslp"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(input: impl Read) -> Result<Vec<ConvergenceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["sqrt_n", "rel_L2_error", "res", "extslp"] {
        return Err(DpgError::InvalidInput(format!("unexpected header {:?}", headers)));
    }
    r.deserialize().map(|row| row.map_err(DpgError::from)).collect()
}

/// `−` the least-squares slope of `log e` against `log sqrt_n`.
pub fn estimate_rate(errors: &[f64], sqrt_ns: &[f64]) -> Result<f64> {
    if errors.len() != sqrt_ns.len() || errors.len() < 2 {
        return Err(DpgError::InvalidInput("need at least two (error, sqrt_n) pairs".into()));
    }
    if errors.iter().chain(sqrt_ns).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(DpgError::InvalidInput("errors and sqrt_n must be positive".into()));
    }
    let x: Vec<f64> = sqrt_ns.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(DpgError::InvalidInput("sqrt_n values must not all coincide".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(-sxy / sxx)
}

/// Reference line `C·sqrt_n^{−order}` through the last point.
pub fn fill_reference_slope(rows: &mut [ConvergenceRow], order: f64) {
    let Some(last) = rows.last().copied() else { return };
    let c = last.rel_l2_error * last.sqrt_n.powf(order);
    for r in rows {
        r.extslp = c * r.sqrt_n.powf(-order);
    }
}

/// Diagnostics of one solved level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelReport {
    pub num_elements: usize,
    pub dofs: usize,
    pub per_field: Vec<f64>,
    pub refinement_steps: usize,
    pub fell_back: bool,
}

#[derive(Debug)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub levels: Vec<LevelReport>,
    /// Fitted over all completed levels (needs two).
    pub rate: Option<f64>,
    /// Set when a level failed; earlier levels are kept.
    pub failure: Option<DpgError>,
}

impl ConvergenceStudy {
    /// Rate fitted over the last `k` levels.
    pub fn rate_last(&self, k: usize) -> Result<f64> {
        let tail = &self.rows[self.rows.len().saturating_sub(k)..];
        let e: Vec<f64> = tail.iter().map(|r| r.rel_l2_error).collect();
        let s: Vec<f64> = tail.iter().map(|r| r.sqrt_n).collect();
        estimate_rate(&e, &s)
    }
}

/// Builds and solves one mesh.
pub fn solve_case(mesh: &TensorMesh, case: &CaseData, cfg: SpaceConfig, options: SolverOptions) -> Result<(GlobalSystem, Solution)> {
    let sys = build_global(mesh, case, cfg, options)?;
    let sol = sys.solve()?;
    Ok((sys, sol))
}

fn convergence_on(config: &RunConfig, case: &CaseData, meshes: &[TensorMesh]) -> Result<(ConvergenceStudy, Option<GlobalSystem>)> {
    let cfg = config.spaces()?;
    let mut rows = Vec::new();
    let mut levels = Vec::new();
    let mut failure = None;
    let mut last = None;
    for mesh in meshes {
        match solve_case(mesh, case, cfg, config.solver) {
            Ok((sys, sol)) => {
                let err = sys.errors(&sol, config.norm);
                rows.push(ConvergenceRow {
                    sqrt_n: (mesh.num_elements() as f64).sqrt(),
                    rel_l2_error: err.rel_l2,
                    res: sol.total_residual,
                    extslp: 0.0,
                });
                levels.push(LevelReport {
                    num_elements: mesh.num_elements(),
                    dofs: sys.num_dofs(),
                    per_field: err.per_field,
                    refinement_steps: sol.info.refinement_steps,
                    fell_back: sol.info.fell_back,
                });
                last = Some(sys);
            }
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    fill_reference_slope(&mut rows, (config.p + 1) as f64);
    let rate = (rows.len() >= 2)
        .then(|| {
            let e: Vec<f64> = rows.iter().map(|r| r.rel_l2_error).collect();
            let s: Vec<f64> = rows.iter().map(|r| r.sqrt_n).collect();
            estimate_rate(&e, &s).ok()
        })
        .flatten();
    Ok((ConvergenceStudy { rows, levels, rate, failure }, last))
}

/// Uniform convergence study over the configured mesh sequence.
pub fn run_convergence(config: &RunConfig) -> Result<ConvergenceStudy> {
    config.validate()?;
    let case = config.case_data()?;
    Ok(convergence_on(config, &case, &config.meshes()?)?.0)
}

#[derive(Debug)]
pub struct ScalingRun {
    pub c: f64,
    pub study: ConvergenceStudy,
    /// Extremal Ritz values of the finest trace system.
    pub condition: Option<ConditionEstimate>,
    /// Errors failed to decrease across the last two levels.
    pub non_convergent: bool,
}

impl ScalingRun {
    pub fn final_error(&self) -> Option<f64> {
        self.study.rows.last().map(|r| r.rel_l2_error)
    }
}

/// Same mesh sequence for every `c` in `config.c_values`.
pub fn run_cstudy(config: &RunConfig) -> Result<Vec<ScalingRun>> {
    config.validate()?;
    if config.regime != Regime::Elliptic {
        return Err(DpgError::WrongRegime { expected: Regime::Elliptic, found: config.regime });
    }
    if config.c_values.is_empty() {
        return Err(DpgError::Config("c_values is empty".into()));
    }
    let meshes = config.meshes()?;
    let mut out = Vec::new();
    for &c in &config.c_values {
        let case = config.case_with_c(c)?;
        let (study, finest) = convergence_on(config, &case, &meshes)?;
        let condition = finest.and_then(|s| s.condition_estimate(config.lanczos_steps).ok());
        let n = study.rows.len();
        let non_convergent = study.failure.is_some()
            || (n >= 2 && study.rows[n - 1].rel_l2_error >= study.rows[n - 2].rel_l2_error);
        out.push(ScalingRun { c, study, condition, non_convergent });
    }
    Ok(out)
}

/// Adaptive run from the coarsest configured mesh.
pub fn run_adaptive(config: &RunConfig) -> Result<(Vec<AdaptStep>, Option<DpgError>)> {
    config.validate()?;
    let adapt = config.adapt.ok_or_else(|| DpgError::Config("missing adapt section".into()))?;
    let case = config.case_data()?;
    let mesh = TensorMesh::unit_square(config.initial_n)?;
    let out = adapt_loop(&case, &mesh, config.spaces()?, config.solver, &adapt, config.norm)?;
    Ok((out.history, out.failure))
}

/// Convergence rows for an adaptive history (abscissa `√ndof`).
pub fn adaptive_rows(history: &[AdaptStep], order: f64) -> Vec<ConvergenceRow> {
    let mut rows: Vec<ConvergenceRow> = history
        .iter()
        .map(|s| ConvergenceRow { sqrt_n: s.sqrt_ndof(), rel_l2_error: s.rel_l2_error, res: s.total_residual, extslp: 0.0 })
        .collect();
    fill_reference_slope(&mut rows, order);
    rows
}

/// Writes `τ, ξ, re, im` on a `resolution × resolution` raster over
/// `[0, t_end] × [0, z_end]`, τ varying fastest.
pub fn write_raster(
    resolution: usize,
    t_end: f64,
    z_end: f64,
    f: impl Fn(f64, f64) -> c64,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "xi", "re", "im"])?;
    let coord = |k: usize, end: f64| if resolution > 1 { end * k as f64 / (resolution - 1) as f64 } else { 0.0 };
    for b in 0..resolution {
        let xi = coord(b, z_end);
        for a in 0..resolution {
            let tau = coord(a, t_end);
            let v = f(tau, xi);
            w.serialize((tau, xi, v.re, v.im))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Raster of the computed `u`.
pub fn dump_field(sys: &GlobalSystem, sol: &Solution, resolution: usize, out: impl Write) -> Result<()> {
    let (t, z) = (sys.mesh.t_end(), sys.mesh.z_end());
    write_raster(resolution, t, z, |tau, xi| sys.eval_fields(sol, tau, xi).map_or(c64::new(f64::NAN, f64::NAN), |v| v[0]), out)
}

/// Raster of the exact `u`.
pub fn dump_exact(case: &CaseData, mesh: &TensorMesh, resolution: usize, out: impl Write) -> Result<()> {
    write_raster(resolution, mesh.t_end(), mesh.z_end(), |tau, xi| case.u.value(tau, xi), out)
}
