//! Batch front end for the `dirac-gap` binary.
//!
//! A run is described by a JSON [`RunConfig`]:
//!
//! ```json
//! {
//!   "system":   { "mass": 1.0,
//!                 "potential": { "kind": "piecewise_constant", "segments": [[0.5, 0.0], [0.5, 4.0]] } },
//!   "template": { "kind": "inverse_power", "beta": 1.0 },
//!   "window":   { "lambda1": 5.0, "lambda2": 5.5, "gap_margin": 0.05 },
//!   "numeric":  { "count_tol": 1e-7 },
//!   "experiment": { "c_list": [25, 50, 100, 200] }
//! }
//! ```
//!
//! Every command writes CSV (`\n` line endings, header always present) to
//! `--out` or stdout. `asymptotics`, `bands` and `validate` also produce a
//! JSON summary, written to `--summary` or stderr.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure or
//! escalated warning, 4 failed precondition.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use log::{debug, warn, LevelFilter};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{convergence_experiment, ExperimentSettings, QuadratureSettings};
use crate::counting::{
    count_halfline, count_interval, enclosing_gap, plan_truncation, BoundaryCondition, TruncationPlan,
};
use crate::error::{Error, Result};
use crate::floquet::{band_edges, discriminant, quasimomentum, rotation_number, EdgeSettings};
use crate::integrate::IntegrationSettings;
use crate::potentials::{
    validate_template, Coupling, DiracSystem, HCheckReport, PeriodicPotential, PerturbationTemplate,
};

#[derive(Debug, Parser)]
#[command(
    name = "dirac-gap",
    version,
    about = "Spectral computations for perturbed periodic Dirac systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Accepted for interface stability; every computation is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct IoArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON summary destination (stderr when absent).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discriminant, quasimomentum and band flag over a λ grid.
    Bands(IoArgs),
    /// Quasimomentum next to the rotation number over a λ grid.
    Quasimomentum(IoArgs),
    /// Eigenvalue counts on an interval or on the truncated half-line.
    Count(IoArgs),
    /// Counted N(c)/c against the predicted density.
    Asymptotics(IoArgs),
    /// Regularity check of the template and gap containment of the window.
    Validate(IoArgs),
}

impl Command {
    fn io(&self) -> &IoArgs {
        match self {
            Command::Bands(a)
            | Command::Quasimomentum(a)
            | Command::Count(a)
            | Command::Asymptotics(a)
            | Command::Validate(a) => a,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemBlock,
    #[serde(default)]
    pub template: Option<TemplateBlock>,
    #[serde(default)]
    pub window: Option<WindowBlock>,
    #[serde(default)]
    pub numeric: NumericBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    /// Period; must agree with the potential when both are given.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub mass: f64,
    pub potential: PotentialSpec,
    /// Raises the bound used for `‖q‖∞`.
    #[serde(default)]
    pub sup_norm: Option<f64>,
    #[serde(default)]
    pub coupling: f64,
}

impl SystemBlock {
    pub fn build(&self) -> Result<DiracSystem> {
        let s = self;
        let mut pot = match &s.potential {
            PotentialSpec::PiecewiseConstant { segments } => PeriodicPotential::piecewise_constant(segments),
            PotentialSpec::CosineSeries { period, terms } => PeriodicPotential::cosine_series(*period, terms),
            PotentialSpec::Sampled { period, values } => PeriodicPotential::sampled(*period, values),
            PotentialSpec::Zero { period } => PeriodicPotential::zero(*period),
        }
        .map_err(|e| config_err(e.to_string()))?;
        if let Some(alpha) = s.alpha {
            if (alpha - pot.period()).abs() > 1e-12 * pot.period() {
                return Err(config_err(format!(
                    "alpha = {alpha} disagrees with the potential period {}",
                    pot.period()
                )));
            }
        }
        if let Some(bound) = s.sup_norm {
            pot = pot.with_sup_norm(bound).map_err(|e| config_err(e.to_string()))?;
        }
        DiracSystem::new(s.mass, pot, Coupling::Constant(s.coupling)).map_err(|e| config_err(e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    PiecewiseConstant { segments: Vec<(f64, f64)> },
    CosineSeries { period: f64, terms: Vec<(u32, f64)> },
    Sampled { period: f64, values: Vec<f64> },
    Zero { period: f64 },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemplateBlock {
    InversePower {
        beta: f64,
    },
    /// Either inline columns or a CSV file with a `rho,value` header.
    Tabulated {
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        rho: Option<Vec<f64>>,
        #[serde(default)]
        values: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WindowBlock {
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(default = "default_gap_margin")]
    pub gap_margin: f64,
}

fn default_gap_margin() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericBlock {
    pub tol: f64,
    /// Tolerance for the long half-line shooting runs.
    pub count_tol: f64,
    pub steps_per_period: usize,
    pub max_refinements: u32,
    pub quadrature_tol: f64,
    pub quadrature_panels: usize,
    pub support_points: usize,
    pub kink_points: usize,
    pub edge_points_per_unit: f64,
    /// Overrides the certified constant from the regularity check.
    pub regularity_constant: Option<f64>,
    pub h_rho_min: f64,
    pub h_rho_hat: f64,
    pub h_grid: usize,
    pub escalate_warnings: bool,
}

impl Default for NumericBlock {
    fn default() -> Self {
        let q = QuadratureSettings::default();
        Self {
            tol: 1e-10,
            count_tol: 1e-7,
            steps_per_period: 64,
            max_refinements: 10,
            quadrature_tol: q.abs_tol,
            quadrature_panels: q.min_panels,
            support_points: q.support_points,
            kink_points: q.kink_points,
            edge_points_per_unit: EdgeSettings::default().points_per_unit,
            regularity_constant: None,
            h_rho_min: 1e-6,
            h_rho_hat: 1.0,
            h_grid: 257,
            escalate_warnings: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n)
                .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    pub c_list: Vec<f64>,
    pub lambda_grid: Option<LambdaGrid>,
    /// Constant coupling for `bands` and `quasimomentum`; falls back to the
    /// system coupling.
    pub coupling: Option<f64>,
    /// Interval for `count` without a template.
    pub interval: Option<(f64, f64)>,
    /// Boundary angles `(left, right)` for interval counts.
    pub boundary: (f64, f64),
    pub rotation_periods: usize,
    pub acceptance_band: (f64, f64),
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            c_list: Vec::new(),
            lambda_grid: None,
            coupling: None,
            interval: None,
            boundary: (0.0, 0.0),
            rotation_periods: 2000,
            acceptance_band: (0.85, 1.15),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config; relative table paths are resolved against its directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| config_err(e.to_string()))?;
        if let Some(TemplateBlock::Tabulated { path: Some(p), .. }) = &mut cfg.template {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let n = &self.numeric;
        if !(n.tol > 0.0 && n.count_tol > 0.0 && n.quadrature_tol > 0.0) {
            return Err(config_err("tolerances must be positive"));
        }
        if n.steps_per_period == 0
            || n.quadrature_panels == 0
            || n.support_points < 3
            || n.kink_points < 2
            || n.h_grid < 2
        {
            return Err(config_err("numeric resolution parameters are too small"));
        }
        if !(n.edge_points_per_unit > 0.0) {
            return Err(config_err("edge_points_per_unit must be positive"));
        }
        if !(n.h_rho_min > 0.0 && n.h_rho_min < n.h_rho_hat) {
            return Err(config_err("need 0 < h_rho_min < h_rho_hat"));
        }
        if let Some(w) = &self.window {
            if !(w.lambda1 <= w.lambda2) || !w.lambda1.is_finite() || !w.lambda2.is_finite() {
                return Err(config_err("window needs finite lambda1 <= lambda2"));
            }
            if !(w.gap_margin > 0.0 && w.gap_margin < 1.0) {
                return Err(config_err("gap_margin must lie in (0, 1)"));
            }
        }
        let e = &self.experiment;
        if e.c_list.iter().any(|c| !(*c > 0.0 && c.is_finite())) || e.c_list.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(config_err("c_list must be positive and strictly increasing"));
        }
        if let Some((a, b)) = e.interval {
            if !(a < b) {
                return Err(config_err("interval needs a < b"));
            }
        }
        if e.rotation_periods == 0 {
            return Err(config_err("rotation_periods must be at least 1"));
        }
        if !(e.acceptance_band.0 <= e.acceptance_band.1) {
            return Err(config_err("acceptance_band must be ordered"));
        }
        self.build_system()?;
        if self.template.is_some() {
            self.build_template()?;
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<DiracSystem> {
        self.system.build()
    }

    pub fn build_template(&self) -> Result<PerturbationTemplate> {
        let block = self
            .template
            .as_ref()
            .ok_or_else(|| config_err("missing template block"))?;
        let t = match block {
            TemplateBlock::InversePower { beta } => PerturbationTemplate::inverse_power(*beta),
            TemplateBlock::Tabulated {
                path: Some(p),
                rho: None,
                values: None,
            } => {
                let (rho, values) = read_table(p)?;
                PerturbationTemplate::tabulated(rho, values)
            }
            TemplateBlock::Tabulated {
                path: None,
                rho: Some(r),
                values: Some(v),
            } => PerturbationTemplate::tabulated(r.clone(), v.clone()),
            TemplateBlock::Tabulated { .. } => {
                return Err(config_err(
                    "tabulated template needs either path or both rho and values",
                ))
            }
        };
        t.map_err(|e| config_err(e.to_string()))
    }

    fn window(&self) -> Result<WindowBlock> {
        self.window.ok_or_else(|| config_err("missing window block"))
    }

    pub fn integration(&self) -> IntegrationSettings {
        IntegrationSettings {
            tol: self.numeric.tol,
            steps_per_period: self.numeric.steps_per_period,
            max_refinements: self.numeric.max_refinements,
            ..IntegrationSettings::default()
        }
    }

    pub fn count_integration(&self) -> IntegrationSettings {
        self.integration().with_tol(self.numeric.count_tol)
    }

    pub fn quadrature(&self) -> QuadratureSettings {
        QuadratureSettings {
            abs_tol: self.numeric.quadrature_tol,
            min_panels: self.numeric.quadrature_panels,
            support_points: self.numeric.support_points,
            kink_points: self.numeric.kink_points,
            ..QuadratureSettings::default()
        }
    }

    fn edge_settings(&self) -> EdgeSettings {
        EdgeSettings {
            points_per_unit: self.numeric.edge_points_per_unit,
            ..EdgeSettings::default()
        }
    }

    fn lambda_grid(&self) -> Result<Vec<f64>> {
        if let Some(g) = self.experiment.lambda_grid {
            return Ok(g.values());
        }
        let w = self
            .window()
            .map_err(|_| config_err("need experiment.lambda_grid or a window block"))?;
        Ok(LambdaGrid {
            start: w.lambda1,
            stop: w.lambda2,
            points: 601,
        }
        .values())
    }

    fn spectral_system(&self) -> Result<DiracSystem> {
        let sys = self.build_system()?;
        Ok(match self.experiment.coupling {
            Some(l) => sys.with_constant_coupling(l),
            None => sys,
        })
    }

    /// Regularity check over the configured range.
    pub fn h_check(&self, template: &PerturbationTemplate) -> Result<HCheckReport> {
        validate_template(
            template,
            self.numeric.h_rho_min,
            self.numeric.h_rho_hat,
            self.numeric.h_grid,
        )
    }

    /// Truncation plan for the half-line problem of this config.
    pub fn plan(&self, template: &PerturbationTemplate) -> Result<TruncationPlan> {
        let w = self.window()?;
        let c = match self.numeric.regularity_constant {
            Some(c) => c,
            None if template.is_singular() => {
                let report = self.h_check(template)?;
                if !report.passes {
                    return Err(Error::Precondition(format!(
                        "template fails the regularity check (ratio estimates {} -> {:?})",
                        report.c_estimate, report.refined_estimates
                    )));
                }
                report.c_certified
            }
            None => 0.0,
        };
        let background = self.build_system()?;
        plan_truncation(
            &background,
            template,
            w.lambda1,
            w.lambda2,
            c,
            w.gap_margin,
            &self.integration(),
        )
    }
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    #[derive(Deserialize)]
    struct Row {
        rho: f64,
        value: f64,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut rho = Vec::new();
    let mut values = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        rho.push(row.rho);
        values.push(row.value);
    }
    Ok((rho, values))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// What a command produced besides its CSV.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: Option<serde_json::Value>,
    pub warnings: Vec<String>,
    /// Set when part of the work failed but the rest was written.
    pub failure: Option<Error>,
}

pub fn cmd_bands(cfg: &RunConfig, out: impl Write) -> Result<Outcome> {
    let sys = cfg.spectral_system()?;
    let settings = cfg.integration();
    let grid = cfg.lambda_grid()?;
    let rows = grid
        .par_iter()
        .map(|&lambda| {
            let d = discriminant(&sys, lambda, &settings)?;
            let k = quasimomentum(&sys, lambda, &settings)?;
            Ok((lambda, d, k))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv_writer(out);
    w.write_record(["lambda", "D", "k", "in_band"])?;
    for (lambda, d, k) in rows {
        w.write_record([num(lambda), num(d), num(k), u8::from(d.abs() <= 2.0).to_string()])?;
    }
    w.flush()?;

    let mut outcome = Outcome::default();
    if let (Some(&lo), Some(&hi)) = (grid.first(), grid.last()) {
        if lo < hi {
            let bands = band_edges(&sys, (lo, hi), &settings, &cfg.edge_settings())?;
            outcome.warnings.extend(bands.warnings.iter().cloned());
            outcome.summary = Some(serde_json::to_value(&bands)?);
        }
    }
    Ok(outcome)
}

pub fn cmd_quasimomentum(cfg: &RunConfig, out: impl Write) -> Result<Outcome> {
    let sys = cfg.spectral_system()?;
    let settings = cfg.integration();
    let periods = cfg.experiment.rotation_periods;
    let rows = cfg
        .lambda_grid()?
        .par_iter()
        .map(|&lambda| {
            let k = quasimomentum(&sys, lambda, &settings)?;
            let rot = rotation_number(&sys, lambda, periods, &settings)?;
            Ok((lambda, k, rot))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv_writer(out);
    w.write_record(["lambda", "k", "rotation_number"])?;
    for (lambda, k, rot) in rows {
        w.write_record([num(lambda), num(k), num(rot)])?;
    }
    w.flush()?;
    Ok(Outcome::default())
}

const COUNT_HEADER: [&str; 7] = ["c", "lambda1", "lambda2", "N", "error_budget", "r_inner", "r_outer"];

pub fn cmd_count(cfg: &RunConfig, out: impl Write) -> Result<Outcome> {
    let win = cfg.window()?;
    let mut outcome = Outcome::default();
    let mut w = csv_writer(out);
    w.write_record(COUNT_HEADER)?;
    if cfg.template.is_some() && !cfg.experiment.c_list.is_empty() {
        let template = Arc::new(cfg.build_template()?);
        let plan = cfg.plan(&template)?;
        let background = cfg.build_system()?;
        let settings = cfg.count_integration();
        let results = cfg
            .experiment
            .c_list
            .par_iter()
            .map(|&c| count_halfline(&background, &template, c, win.lambda1, win.lambda2, &plan, &settings))
            .collect::<Result<Vec<_>>>()?;
        for (c, r) in cfg.experiment.c_list.iter().zip(results) {
            let (a, b) = r.geometry.bounds();
            w.write_record([
                num(*c),
                num(win.lambda1),
                num(win.lambda2),
                r.count.to_string(),
                r.error_budget.to_string(),
                num(a),
                num(b),
            ])?;
            outcome.warnings.extend(r.warnings);
        }
        outcome.summary = Some(serde_json::to_value(&plan)?);
    } else {
        let (a, b) = cfg
            .experiment
            .interval
            .ok_or_else(|| config_err("count needs experiment.interval, or a template with experiment.c_list"))?;
        let sys = cfg.spectral_system()?;
        let (bl, br) = cfg.experiment.boundary;
        let r = count_interval(
            &sys,
            a,
            b,
            BoundaryCondition::new(bl),
            BoundaryCondition::new(br),
            win.lambda1,
            win.lambda2,
            &cfg.count_integration(),
        )?;
        w.write_record([
            String::new(),
            num(win.lambda1),
            num(win.lambda2),
            r.count.to_string(),
            r.error_budget.to_string(),
            num(a),
            num(b),
        ])?;
        outcome.warnings.extend(r.warnings);
    }
    w.flush()?;
    Ok(outcome)
}

#[derive(Debug, Serialize)]
struct AsymptoticsSummary<'a> {
    predicted_density: f64,
    error_estimate: f64,
    support: Option<(f64, f64)>,
    kinks: &'a [f64],
    quadrature_nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<&'a crate::asymptotics::Verdict>,
    failures: &'a [crate::asymptotics::RowFailure],
    plan: &'a TruncationPlan,
}

pub fn cmd_asymptotics(cfg: &RunConfig, out: impl Write) -> Result<Outcome> {
    let win = cfg.window()?;
    if cfg.experiment.c_list.is_empty() {
        return Err(config_err("asymptotics needs a nonempty experiment.c_list"));
    }
    let template = Arc::new(cfg.build_template()?);
    let plan = cfg.plan(&template)?;
    let background = cfg.build_system()?;
    let settings = ExperimentSettings {
        integration: cfg.count_integration(),
        quadrature: cfg.quadrature(),
        acceptance_band: cfg.experiment.acceptance_band,
    };
    let report = convergence_experiment(
        &background,
        &template,
        win.lambda1,
        win.lambda2,
        &cfg.experiment.c_list,
        &plan,
        &settings,
    )?;

    let mut w = csv_writer(out);
    w.write_record(["c", "N", "N_over_c", "predicted", "ratio", "budget_over_c"])?;
    for r in &report.rows {
        w.write_record([
            num(r.c),
            r.count.to_string(),
            num(r.n_over_c),
            num(r.predicted),
            opt(r.ratio),
            num(r.budget_over_c),
        ])?;
    }
    w.flush()?;

    let p = &report.prediction;
    let summary = AsymptoticsSummary {
        predicted_density: p.value,
        error_estimate: p.error_estimate,
        support: p.support,
        kinks: &p.kinks,
        quadrature_nodes: p.nodes,
        verdict: report.verdict.as_ref(),
        failures: &report.failures,
        plan: &plan,
    };
    let mut outcome = Outcome {
        summary: Some(serde_json::to_value(&summary)?),
        warnings: p.warnings.clone(),
        failure: None,
    };
    if !report.failures.is_empty() {
        let msg = report
            .failures
            .iter()
            .map(|f| format!("c = {}: {}", f.c, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        outcome.failure = Some(Error::Escalated(format!("rows failed: {msg}")));
    }
    Ok(outcome)
}

#[derive(Debug, Serialize)]
struct GapCheck {
    ok: bool,
    gap: Option<(f64, f64)>,
    message: Option<String>,
}

#[derive(Debug, Serialize)]
struct ValidateSummary {
    passes: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    template: Option<HCheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    template_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<GapCheck>,
}

pub fn cmd_validate(cfg: &RunConfig, out: impl Write) -> Result<Outcome> {
    let mut summary = ValidateSummary {
        passes: true,
        template: None,
        template_error: None,
        gap: None,
    };
    if cfg.template.is_some() {
        match cfg.h_check(&cfg.build_template()?) {
            Ok(r) => {
                summary.passes &= r.passes;
                summary.template = Some(r);
            }
            Err(e) => {
                summary.passes = false;
                summary.template_error = Some(e.to_string());
            }
        }
    }
    if let Some(win) = cfg.window {
        let background = cfg.build_system()?;
        let check = match enclosing_gap(
            &background,
            win.lambda1 - win.gap_margin,
            win.lambda2 + win.gap_margin,
            &cfg.integration(),
        ) {
            Ok(gap) => GapCheck {
                ok: true,
                gap: Some(gap),
                message: None,
            },
            Err(Error::Precondition(m)) => GapCheck {
                ok: false,
                gap: None,
                message: Some(m),
            },
            Err(e) => return Err(e),
        };
        summary.passes &= check.ok;
        summary.gap = Some(check);
    }
    let mut w = csv_writer(out);
    w.write_record(["check", "passes", "value"])?;
    if let Some(t) = &summary.template {
        w.write_record(["regularity".to_string(), t.passes.to_string(), num(t.c_certified)])?;
    } else if summary.template_error.is_some() {
        w.write_record(["regularity", "false", ""])?;
    }
    if let Some(g) = &summary.gap {
        let value = g.gap.map(|(a, b)| format!("{} {}", num(a), num(b))).unwrap_or_default();
        w.write_record(["gap_containment".to_string(), g.ok.to_string(), value])?;
    }
    w.flush()?;
    let passes = summary.passes;
    Ok(Outcome {
        summary: Some(serde_json::to_value(&summary)?),
        warnings: Vec::new(),
        failure: (!passes).then(|| Error::Precondition("validation failed".into())),
    })
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Runs one parsed invocation.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(seed) = cli.seed {
        debug!("seed {seed} ignored: computations are deterministic");
    }
    let io_args = cli.command.io();
    let cfg = RunConfig::from_path(&io_args.config)?;
    let outcome = {
        let mut out = open_out(io_args.out.as_deref())?;
        let outcome = match &cli.command {
            Command::Bands(_) => cmd_bands(&cfg, &mut out),
            Command::Quasimomentum(_) => cmd_quasimomentum(&cfg, &mut out),
            Command::Count(_) => cmd_count(&cfg, &mut out),
            Command::Asymptotics(_) => cmd_asymptotics(&cfg, &mut out),
            Command::Validate(_) => cmd_validate(&cfg, &mut out),
        }?;
        out.flush()?;
        outcome
    };
    if let Some(summary) = &outcome.summary {
        let text = serde_json::to_string_pretty(summary)?;
        match &io_args.summary {
            Some(p) => std::fs::write(p, text + "\n")?,
            None => eprintln!("{text}"),
        }
    }
    for w in &outcome.warnings {
        warn!("{w}");
    }
    if let Some(e) = outcome.failure {
        return Err(e);
    }
    if cfg.numeric.escalate_warnings && !outcome.warnings.is_empty() {
        return Err(Error::Escalated(outcome.warnings.join("; ")));
    }
    Ok(())
}

fn log_level() -> LevelFilter {
    match std::env::var("DIRAC_GAP_LOG").as_deref() {
        Ok("quiet") => LevelFilter::Off,
        Ok("info") => LevelFilter::Info,
        Ok("debug") => LevelFilter::Debug,
        _ => LevelFilter::Warn,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(log_level())
        .format_timestamp(None)
        .try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STEP: &str = r#"{
        "system": { "mass": 1.0, "potential": { "kind": "piecewise_constant", "segments": [[0.5, 0.0], [0.5, 4.0]] } },
        "template": { "kind": "inverse_power", "beta": 1.0 },
        "window": { "lambda1": 5.0, "lambda2": 5.5, "gap_margin": 0.05 }
    }"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = RunConfig::from_json_str(TWO_STEP).unwrap();
        assert_eq!(cfg.numeric.count_tol, 1e-7);
        assert_eq!(cfg.experiment.acceptance_band, (0.85, 1.15));
        assert_eq!(cfg.build_system().unwrap().period(), 1.0);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            r#"{ "system": { "mass": 1.0, "potential": { "kind": "zero", "period": 1.0 } }, "bogus": 1 }"#,
            r#"{ "system": { "mass": 1.0, "potential": { "kind": "zero", "period": -1.0 } } }"#,
            r#"{ "system": { "alpha": 2.0, "mass": 1.0, "potential": { "kind": "zero", "period": 1.0 } } }"#,
            r#"{ "system": { "mass": 1.0, "potential": { "kind": "zero", "period": 1.0 } },
                 "window": { "lambda1": 1.0, "lambda2": 0.0 } }"#,
            r#"{ "system": { "mass": 1.0, "potential": { "kind": "zero", "period": 1.0 } },
                 "experiment": { "c_list": [50, 25] } }"#,
            r#"{ "system": { "mass": 1.0, "potential": { "kind": "zero", "period": 1.0 } },
                 "template": { "kind": "inverse_power", "beta": -1.0 } }"#,
            r#"{ "system": { "mass": 1.0, "potential": { "kind": "zero", "period": 1.0 } },
                 "template": { "kind": "tabulated" } }"#,
        ] {
            let err = RunConfig::from_json_str(bad).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}: {err}");
        }
    }

    #[test]
    fn grid_values() {
        assert!(LambdaGrid {
            start: 0.0,
            stop: 1.0,
            points: 0
        }
        .values()
        .is_empty());
        assert_eq!(
            LambdaGrid {
                start: 0.5,
                stop: 1.0,
                points: 1
            }
            .values(),
            vec![0.5]
        );
        assert_eq!(
            LambdaGrid {
                start: -1.0,
                stop: 1.0,
                points: 3
            }
            .values(),
            vec![-1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn empty_grid_gives_header_only() {
        let cfg = RunConfig::from_json_str(
            r#"{ "system": { "mass": 1.0, "potential": { "kind": "zero", "period": 1.0 } },
                 "experiment": { "lambda_grid": { "start": 0, "stop": 1, "points": 0 } } }"#,
        )
        .unwrap();
        let mut buf = Vec::new();
        cmd_bands(&cfg, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "lambda,D,k,in_band\n");
    }

    #[test]
    fn validate_reports_both_checks() {
        let cfg = RunConfig::from_json_str(TWO_STEP).unwrap();
        let outcome = cmd_validate(&cfg, Vec::new()).unwrap();
        assert!(outcome.failure.is_none());
        let s = outcome.summary.unwrap();
        assert_eq!(s["template"]["c_certified"], 1.0);
        assert_eq!(s["gap"]["ok"], true);
    }
}
