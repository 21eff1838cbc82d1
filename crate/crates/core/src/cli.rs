//! Configuration parsing and the commands behind the `wtolab` binary.
//!
//! A run is described by a TOML file with the sections `[map]`, `[weight]`,
//! `[assumptions]` and `[run]`; command-line flags override `[run]` fields.
//! Every CSV table starts with a `# config_digest=<sha256> seed=<seed>` line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::bv_ensemble;
use crate::gbv::{gbv_upper, Strategy, DEFAULT_KDEPTH};
use crate::maps::{
    lambda_estimates, mollify_sweep, Branch, BranchShape, BranchedMap, MapKind, TailDescriptor, Tolerances,
    WeightKind, WeightSpec,
};
use crate::measures::GridDensity;
use crate::operator::{ulam_matrix, QuadratureSettings, TransferSystem};
use crate::spectral::{ly_diagnostic, make_report, ArnoldiSettings, ReportSettings};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSUMPTION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "wtolab", version, about = "Weighted transfer operator laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Comma-separated resolutions.
    #[arg(long, global = true, value_delimiter = ',')]
    pub cells: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub nmax: Option<usize>,
    #[arg(long, global = true)]
    pub kdepth: Option<u32>,
    #[arg(long, global = true)]
    pub ensemble: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub force: bool,
    /// Output directory; tables go to stdout when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, Subcommand, PartialEq, Eq)]
pub enum Command {
    /// Check the standing assumptions and report the cocycle growth rates.
    Check,
    /// Certified radius bounds and Ulam spectra.
    Spectrum,
    /// GBV upper estimate of a density.
    Gbv,
    /// Lasota–Yorke fits over a seeded ensemble.
    Ly,
    /// Mollified-weight error and derivative against the radius.
    MollifySweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Spectrum => "spectrum",
            Command::Gbv => "gbv",
            Command::Ly => "ly",
            Command::MollifySweep => "mollify-sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapSection,
    pub weight: WeightSection,
    #[serde(default)]
    pub assumptions: AssumptionsSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKindConfig {
    Doubling,
    Cascade,
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub kind: MapKindConfig,
    pub j_max: Option<usize>,
    pub branches: Option<Vec<BranchSection>>,
    pub tail: Option<TailSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeConfig {
    #[default]
    Affine,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSection {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub shape: ShapeConfig,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub y0: Option<f64>,
    pub y1: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    pub length: f64,
    pub region: [f64; 2],
    pub derivative_sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKindConfig {
    Constant,
    InverseDerivative,
    Power,
    Weierstrass,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    pub kind: WeightKindConfig,
    pub value: Option<f64>,
    pub delta: Option<f64>,
    pub terms: Option<u32>,
    pub values: Option<Vec<f64>>,
    pub scale: Option<f64>,
    pub alpha: Option<f64>,
    pub tail_sup_sum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AssumptionsSection {
    pub p: Option<f64>,
    pub expansion_margin: Option<f64>,
    pub lp_relative_change: Option<f64>,
    pub samples_per_branch: Option<usize>,
    pub refinement_depth: Option<usize>,
    pub quadrature_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub beta: Option<f64>,
    pub cells: Option<Vec<usize>>,
    pub n_max: Option<usize>,
    pub kdepth: Option<u32>,
    pub ensemble: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    /// Builtin density name (`constant`, `step`, `linear`, `sine`, `zero`) or a
    /// path to a file of cell values.
    pub density: Option<String>,
    pub n_list: Option<Vec<usize>>,
    pub eps: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub grid: Option<usize>,
    pub krylov: Option<usize>,
    pub wanted: Option<usize>,
    pub tol: Option<f64>,
    pub max_restarts: Option<usize>,
    /// `random` (default) or `zero`.
    pub ensemble_kind: Option<String>,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::HypothesisFailed(_) => EXIT_ASSUMPTION,
            Error::Config(_) | Error::Domain(_) | Error::Shape { .. } => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Failure::usage(format!("config parse error: {e}")))
}

impl ExperimentConfig {
    /// Applies command-line overrides to the run section.
    pub fn with_overrides(mut self, cli: &Cli) -> Self {
        let r = &mut self.run;
        if cli.beta.is_some() {
            r.beta = cli.beta;
        }
        if cli.cells.is_some() {
            r.cells = cli.cells.clone();
        }
        if cli.nmax.is_some() {
            r.n_max = cli.nmax;
        }
        if cli.kdepth.is_some() {
            r.kdepth = cli.kdepth;
        }
        if cli.ensemble.is_some() {
            r.ensemble = cli.ensemble;
        }
        if cli.seed.is_some() {
            r.seed = cli.seed;
        }
        if cli.format.is_some() {
            r.format = cli.format;
        }
        if cli.output.is_some() {
            r.output = cli.output.clone();
        }
        self
    }

    /// SHA-256 of the effective configuration. The output location and format
    /// are excluded so that the digest identifies the computation only.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.run.output = None;
        c.run.format = None;
        hex::encode(Sha256::digest(serde_json::to_string(&c).expect("serialisable config").as_bytes()))
    }

    pub fn build_map(&self) -> CliResult<BranchedMap> {
        let m = &self.map;
        let field = |path: &str, e: Error| Failure::usage(format!("{path}: {e}"));
        match m.kind {
            MapKindConfig::Doubling => Ok(BranchedMap::doubling()),
            MapKindConfig::Cascade => {
                BranchedMap::cascade(m.j_max.unwrap_or(crate::maps::DEFAULT_CASCADE_JMAX)).map_err(|e| field("map.j_max", e))
            }
            MapKindConfig::Affine => {
                let list = m.branches.as_ref().ok_or_else(|| Failure::usage("map.branches: required for kind = \"affine\""))?;
                let mut branches = Vec::with_capacity(list.len());
                for (i, b) in list.iter().enumerate() {
                    let path = format!("map.branches[{i}]");
                    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Failure::usage(format!("{path}.{name}: missing")));
                    let shape = match b.shape {
                        ShapeConfig::Affine => {
                            BranchShape::Affine { slope: need(b.slope, "slope")?, intercept: need(b.intercept, "intercept")? }
                        }
                        ShapeConfig::Power => BranchShape::Power {
                            y0: need(b.y0, "y0")?,
                            y1: need(b.y1, "y1")?,
                            gamma: need(b.gamma, "gamma")?,
                        },
                    };
                    branches.push(Branch::new(b.a, b.b, shape).map_err(|e| field(&path, e))?);
                }
                let tail = m.tail.as_ref().map(|t| TailDescriptor {
                    length: t.length,
                    region: (t.region[0], t.region[1]),
                    derivative_sup: t.derivative_sup,
                });
                BranchedMap::new(MapKind::Custom, branches, tail).map_err(|e| field("map.branches", e))
            }
        }
    }

    pub fn build_weight(&self) -> CliResult<WeightSpec> {
        let w = &self.weight;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Failure::usage(format!("weight.{name}: missing")));
        let kind = match w.kind {
            WeightKindConfig::Constant => WeightKind::Constant { value: need(w.value, "value")? },
            WeightKindConfig::InverseDerivative => WeightKind::InverseDerivative,
            WeightKindConfig::Power => WeightKind::Power { delta: need(w.delta, "delta")? },
            WeightKindConfig::Weierstrass => WeightKind::Weierstrass { terms: w.terms.unwrap_or(12) },
            WeightKindConfig::Tabulated => WeightKind::Tabulated {
                values: w.values.clone().ok_or_else(|| Failure::usage("weight.values: missing"))?,
            },
        };
        let alpha = w.alpha.unwrap_or(0.5);
        let p = self.assumptions.p.unwrap_or(4.0);
        let mut spec = WeightSpec::new(kind, alpha, p).map_err(|e| Failure::usage(format!("weight: {e}")))?;
        if let Some(s) = w.scale {
            spec = spec.with_scale(s);
        }
        if let Some(t) = w.tail_sup_sum {
            spec = spec.with_tail_sup_sum(t);
        }
        Ok(spec)
    }

    pub fn tolerances(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            expansion_margin: self.assumptions.expansion_margin.unwrap_or(d.expansion_margin),
            lp_relative_change: self.assumptions.lp_relative_change.unwrap_or(d.lp_relative_change),
        }
    }

    pub fn quadrature(&self) -> QuadratureSettings {
        let d = QuadratureSettings::default();
        QuadratureSettings {
            depth: self.assumptions.refinement_depth.unwrap_or(d.depth),
            tolerance: self.assumptions.quadrature_tolerance.unwrap_or(d.tolerance),
            check_samples: self.assumptions.samples_per_branch.unwrap_or(d.check_samples),
            ..d
        }
    }

    pub fn build_system(&self) -> CliResult<TransferSystem> {
        let map = self.build_map()?;
        let weight = self.build_weight()?;
        Ok(TransferSystem::with_tolerances(map, weight, self.quadrature(), &self.tolerances())?)
    }

    fn seed(&self, command: &str) -> CliResult<u64> {
        self.run.seed.ok_or_else(|| Failure::usage(format!("run.seed (or --seed) is required for {command}")))
    }

    fn cells(&self) -> Vec<usize> {
        self.run.cells.clone().unwrap_or_else(|| vec![64, 128, 256, 512])
    }

    fn report_settings(&self, seed: u64) -> ReportSettings {
        let d = ReportSettings::default();
        let a = ArnoldiSettings::default();
        ReportSettings {
            n_max: self.run.n_max.unwrap_or(d.n_max),
            grid: self.run.grid.unwrap_or(d.grid),
            depth: self.assumptions.refinement_depth.unwrap_or(d.depth),
            arnoldi: ArnoldiSettings {
                krylov: self.run.krylov.unwrap_or(a.krylov),
                wanted: self.run.wanted.unwrap_or(a.wanted),
                tol: self.run.tol.unwrap_or(a.tol),
                max_restarts: self.run.max_restarts.unwrap_or(a.max_restarts),
                seed,
            },
            sampling_allowance: d.sampling_allowance,
        }
    }
}

/// Named CSV tables plus a JSON document for one command.
struct Outputs {
    tables: Vec<(String, String)>,
    json: serde_json::Value,
    summary: Vec<String>,
}

fn emit(out: &Outputs, cfg: &ExperimentConfig, command: Command, stdout: &mut dyn Write) -> CliResult<()> {
    let seed = cfg.run.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    let header = format!("# config_digest={} seed={seed}\n", cfg.digest());
    let format = cfg.run.format.unwrap_or_default();
    let io = |e: std::io::Error| Failure { code: EXIT_USAGE, message: format!("output error: {e}") };
    let documents: Vec<(String, String)> = match format {
        Format::Csv => out.tables.iter().map(|(name, body)| (format!("{name}.csv"), format!("{header}{body}"))).collect(),
        Format::Json => {
            let doc = serde_json::json!({
                "config_digest": cfg.digest(),
                "seed": cfg.run.seed,
                "command": command.name(),
                "result": out.json,
            });
            let mut docs = vec![(format!("{}.json", command.name()), serde_json::to_string_pretty(&doc).expect("json") + "\n")];
            // matrices stay tabular
            docs.extend(
                out.tables
                    .iter()
                    .filter(|(n, _)| n.starts_with("ulam_"))
                    .map(|(name, body)| (format!("{name}.csv"), format!("{header}{body}"))),
            );
            docs
        }
    };
    match &cfg.run.output {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io)?;
            for (name, body) in &documents {
                std::fs::write(Path::new(dir).join(name), body).map_err(io)?;
            }
        }
        None if documents.len() == 1 => write!(stdout, "{}", documents[0].1).map_err(io)?,
        None => {
            for (i, (name, body)) in documents.iter().enumerate() {
                if i > 0 {
                    writeln!(stdout).map_err(io)?;
                }
                writeln!(stdout, "## {name}").map_err(io)?;
                write!(stdout, "{body}").map_err(io)?;
            }
        }
    }
    Ok(())
}

fn cmd_check(cfg: &ExperimentConfig) -> CliResult<(Outputs, i32)> {
    let sys = cfg.build_system()?;
    let rep = sys.report();
    let n_max = cfg.run.n_max.unwrap_or(12);
    let grid = cfg.run.grid.unwrap_or(256);
    let depth = cfg.quadrature().depth;
    let bounds = lambda_estimates(sys.map(), sys.weight(), n_max, grid, depth)?;
    let mut checks = String::from("name,passed,detail\n");
    for c in &rep.checks {
        checks.push_str(&format!("{},{},\"{}\"\n", c.name, c.passed, c.detail.replace('"', "'")));
    }
    let mut quantities = String::from("quantity,value\n");
    for (k, v) in [
        ("expansion_infimum", rep.expansion_infimum),
        ("holder_uniform", rep.holder_uniform),
        ("branch_sup_listed", rep.branch_sup_listed),
        ("branch_sup_tail", rep.branch_sup_tail),
        ("lp_derivative", rep.lp_derivative),
        ("xi_fprime_sup", rep.xi_fprime_sup),
        ("alpha", rep.alpha),
        ("p", rep.p),
    ] {
        quantities.push_str(&format!("{k},{v:?}\n"));
    }
    let mut lambda = String::from("n,lambda1_hat,lambda2_hat\n");
    for n in 1..=bounds.n_max() {
        lambda.push_str(&format!("{n},{:?},{:?}\n", bounds.lambda1_at(n), bounds.lambda2_at(n)));
    }
    let passed = rep.all_passed();
    let mut summary = vec![format!("expansion infimum {}", rep.expansion_infimum)];
    summary.extend(rep.failures().into_iter().map(|f| format!("FAILED {f}")));
    let outputs = Outputs {
        tables: vec![("checks".into(), checks), ("quantities".into(), quantities), ("cocycle".into(), lambda)],
        json: serde_json::json!({ "hypotheses": rep, "cocycle": bounds }),
        summary,
    };
    Ok((outputs, if passed { EXIT_OK } else { EXIT_ASSUMPTION }))
}

fn cmd_spectrum(cfg: &ExperimentConfig, force: bool) -> CliResult<(Outputs, i32)> {
    let seed = cfg.seed("spectrum")?;
    let sys = cfg.build_system()?;
    let cells = cfg.cells();
    if cells.iter().any(|&n| n < 2) {
        return Err(Failure::usage("run.cells: every resolution must be at least 2"));
    }
    let settings = cfg.report_settings(seed);
    let report = make_report(&sys, cfg.run.beta, &cells, &settings, force)?;
    let mut tables = vec![("lambda".to_string(), report.lambda_csv()), ("ritz".to_string(), report.ritz_csv())];
    for &n in cells.iter().filter(|&&n| n <= 64) {
        tables.push((format!("ulam_{n}"), ulam_matrix(&sys, n)?.to_csv()));
    }
    let slack = 2.0 * (settings.arnoldi.tol + settings.sampling_allowance);
    let violations: Vec<String> = report
        .spectra
        .iter()
        .flat_map(|s| s.ritz.iter().filter(|r| r.converged && r.modulus > report.spectral_bound + slack).map(move |r| (s.cells, r.modulus)))
        .map(|(n, m)| format!("N = {n}: converged Ritz modulus {m} exceeds the spectral bound {}", report.spectral_bound))
        .collect();
    let mut summary = vec![
        format!("beta {}", report.beta),
        format!("spectral radius bound {}", report.spectral_bound),
        format!("essential spectral radius bound {}", report.ess_bound),
    ];
    summary.extend(report.warnings.iter().map(|w| format!("warning: {w}")));
    summary.extend(violations.iter().cloned());
    let code = if violations.is_empty() { EXIT_OK } else { EXIT_ASSUMPTION };
    Ok((Outputs { tables, json: serde_json::to_value(&report).expect("json"), summary }, code))
}

fn builtin_density(name: &str, cells: usize) -> Option<crate::Result<GridDensity>> {
    Some(match name {
        "constant" => GridDensity::constant(cells, 1.0),
        "zero" => GridDensity::zeros(cells),
        "step" => GridDensity::new((0..cells).map(|i| if 2 * i < cells { 2.0 } else { 0.0 }).collect()),
        "linear" => GridDensity::from_fn(cells, |x| 2.0 * x),
        "sine" => GridDensity::from_fn(cells, |x| (2.0 * std::f64::consts::PI * x).sin()),
        _ => return None,
    })
}

fn load_density(spec: &str, cells: usize) -> CliResult<GridDensity> {
    if let Some(d) = builtin_density(spec, cells) {
        return Ok(d?);
    }
    let text = std::fs::read_to_string(spec).map_err(|_| Failure::usage(format!("run.density: unknown density '{spec}'")))?;
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Failure::usage(format!("run.density: cannot parse '{t}' in {spec}"))))
        .collect::<CliResult<Vec<f64>>>()?;
    Ok(GridDensity::new(values)?)
}

fn cmd_gbv(cfg: &ExperimentConfig) -> CliResult<(Outputs, i32)> {
    let spec = cfg.run.density.clone().unwrap_or_else(|| "step".into());
    let cells = cfg.run.cells.as_ref().and_then(|c| c.first().copied()).unwrap_or(64);
    let d = load_density(&spec, cells)?;
    let beta = cfg.run.beta.unwrap_or(cfg.weight.alpha.unwrap_or(0.5));
    let est = gbv_upper(&d, beta, cfg.run.kdepth.unwrap_or(DEFAULT_KDEPTH), &Strategy::MENU)?;
    let mut breakdown = String::from("k,tv_term,bv_term,total\n");
    for t in &est.breakdown {
        breakdown.push_str(&format!("{:?},{:?},{:?},{:?}\n", t.k, t.tv_term, t.bv_term, t.total()));
    }
    let estimate = format!("value,beta,strategy\n{:?},{:?},{}\n", est.value, est.beta, est.family.strategy().name());
    let json = serde_json::json!({
        "value": est.value,
        "beta": est.beta,
        "strategy": est.family.strategy().name(),
        "breakdown": est.breakdown,
    });
    let summary = vec![format!("GBV upper estimate {} ({} family)", est.value, est.family.strategy().name())];
    Ok((Outputs { tables: vec![("gbv".into(), estimate), ("gbv_breakdown".into(), breakdown)], json, summary }, EXIT_OK))
}

fn cmd_ly(cfg: &ExperimentConfig) -> CliResult<(Outputs, i32)> {
    let seed = cfg.seed("ly")?;
    let sys = cfg.build_system()?;
    let cells = cfg.run.cells.as_ref().and_then(|c| c.first().copied()).unwrap_or(128);
    let size = cfg.run.ensemble.unwrap_or(50);
    if size == 0 {
        return Err(Error::Config("ensemble size must be positive".into()).into());
    }
    let ensemble = match cfg.run.ensemble_kind.as_deref().unwrap_or("random") {
        "random" => bv_ensemble(cells, size, seed)?,
        "zero" => vec![GridDensity::zeros(cells)?; size],
        other => return Err(Failure::usage(format!("run.ensemble_kind: unknown ensemble '{other}'"))),
    };
    let beta = cfg.run.beta.unwrap_or(sys.weight().alpha);
    let n_list = cfg.run.n_list.clone().unwrap_or_else(|| vec![1, 2, 4]);
    let diag = ly_diagnostic(
        &sys,
        beta,
        &ensemble,
        &n_list,
        cfg.run.kdepth.unwrap_or(DEFAULT_KDEPTH),
        cfg.run.grid.unwrap_or(256),
        cfg.quadrature().depth,
    )?;
    let summary = diag.rows.iter().map(|r| format!("n = {}: theta {} C_n {}", r.n, r.theta, r.c_fixed)).collect();
    Ok((Outputs { tables: vec![("ly".into(), diag.to_csv())], json: serde_json::to_value(&diag).expect("json"), summary }, EXIT_OK))
}

fn cmd_mollify_sweep(cfg: &ExperimentConfig) -> CliResult<(Outputs, i32)> {
    let map = cfg.build_map()?;
    let weight = cfg.build_weight()?;
    let eps = cfg.run.eps.clone().unwrap_or_else(|| (4..=10).map(|m| 0.5f64.powi(m)).collect());
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Failure::usage("run.eps: radii must be positive"));
    }
    let sw = mollify_sweep(&map, &weight, &eps, cfg.run.samples.unwrap_or(1 << 14))?;
    let mut table = String::from("eps,sup_error,sup_derivative\n");
    for i in 0..sw.eps.len() {
        table.push_str(&format!("{:?},{:?},{:?}\n", sw.eps[i], sw.sup_error[i], sw.sup_derivative[i]));
    }
    let slopes = format!("error_slope,derivative_slope\n{:?},{:?}\n", sw.error_slope, sw.derivative_slope);
    let summary = vec![format!("slopes: error {} derivative {}", sw.error_slope, sw.derivative_slope)];
    Ok((Outputs { tables: vec![("sweep".into(), table), ("slopes".into(), slopes)], json: serde_json::to_value(&sw).expect("json"), summary }, EXIT_OK))
}

fn compute(cli: &Cli) -> CliResult<(ExperimentConfig, Outputs, i32)> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::usage("--config PATH is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let cfg = parse_config(&text)?.with_overrides(cli);
    let (outputs, code) = match cli.command {
        Command::Check => cmd_check(&cfg)?,
        Command::Spectrum => cmd_spectrum(&cfg, cli.force)?,
        Command::Gbv => cmd_gbv(&cfg)?,
        Command::Ly => cmd_ly(&cfg)?,
        Command::MollifySweep => cmd_mollify_sweep(&cfg)?,
    };
    Ok((cfg, outputs, code))
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Failure::usage("--threads must be at least 1")),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| compute(&cli)),
            Err(e) => Err(Failure { code: EXIT_NUMERICAL, message: format!("thread pool: {e}") }),
        },
        None => compute(&cli),
    };
    let result = result.and_then(|(cfg, outputs, code)| {
        emit(&outputs, &cfg, cli.command, stdout)?;
        for line in &outputs.summary {
            let _ = writeln!(stderr, "{line}");
        }
        Ok(code)
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
