//! Experiment configuration, initial data and end-to-end runners.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::adjoint::{self, ControlProblem, RunReport};
use crate::error::{Error, Result};
use crate::fem::{build_grid, indicator, project_initial, ControlTrajectory, Grid, Propagator, TimeGrid};
use crate::moment::{self, BiorthogonalFamily, ModalCoefficients, NullDriveReport};
use crate::optim::OptimizerConfig;
use crate::spectrum::{strong_mode, weak_mode, Branch, DegeneracySpec, EigenMode, Regime};

/// Initial datum, written `indicator:l:r`, `eigenmode:branch:n[:scale]` or
/// `samples:path`.
#[derive(Debug, Clone, PartialEq)]
pub enum U0Spec {
    Indicator { l: f64, r: f64 },
    /// n counts within the branch, from 1
    Eigenmode { branch: Branch, n: usize, scale: f64 },
    Samples { path: PathBuf },
}

fn parse_branch(s: &str) -> Option<Branch> {
    match s {
        "odd" => Some(Branch::Odd),
        "even" => Some(Branch::Even),
        "left" => Some(Branch::LeftSupport),
        "right" => Some(Branch::RightSupport),
        _ => None,
    }
}

fn parse_real(field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("{field}: expected a finite number, got {s:?}")))
}

impl FromStr for U0Spec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("u0 spec {s:?} lacks a kind prefix")))?;
        match kind {
            "indicator" => {
                let parts: Vec<&str> = rest.split(':').collect();
                let [l, r] = parts[..] else {
                    return Err(Error::Config(format!("indicator needs l:r, got {rest:?}")));
                };
                let (l, r) = (parse_real("indicator l", l)?, parse_real("indicator r", r)?);
                if !(-1.0 <= l && l < r && r <= 1.0) {
                    return Err(Error::Config(format!("indicator needs -1 <= l < r <= 1, got ({l}, {r})")));
                }
                Ok(U0Spec::Indicator { l, r })
            }
            "eigenmode" => {
                let parts: Vec<&str> = rest.split(':').collect();
                let (b, n, scale) = match parts[..] {
                    [b, n] => (b, n, 1.0),
                    [b, n, s] => (b, n, parse_real("eigenmode scale", s)?),
                    _ => return Err(Error::Config(format!("eigenmode needs branch:n[:scale], got {rest:?}"))),
                };
                let branch = parse_branch(b)
                    .ok_or_else(|| Error::Config(format!("unknown branch {b:?} (odd, even, left, right)")))?;
                let n = n
                    .trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| Error::Config(format!("eigenmode index must be a positive integer, got {n:?}")))?;
                Ok(U0Spec::Eigenmode { branch, n, scale })
            }
            "samples" if !rest.is_empty() => Ok(U0Spec::Samples { path: PathBuf::from(rest) }),
            _ => Err(Error::Config(format!("unknown u0 spec {s:?}"))),
        }
    }
}

impl fmt::Display for U0Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            U0Spec::Indicator { l, r } => write!(f, "indicator:{l:?}:{r:?}"),
            U0Spec::Eigenmode { branch, n, scale } => {
                write!(f, "eigenmode:{}:{n}:{scale:?}", branch.label())
            }
            U0Spec::Samples { path } => write!(f, "samples:{}", path.display()),
        }
    }
}

impl Serialize for U0Spec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for U0Spec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tabulated datum, linearly interpolated between strictly increasing x.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    x: Vec<f64>,
    value: Vec<f64>,
}

#[derive(Deserialize)]
struct SampleRow {
    x: f64,
    value: f64,
}

impl Samples {
    pub fn new(x: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        if x.len() != value.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: value.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::Config("samples need at least two rows".into()));
        }
        if x.iter().chain(&value).any(|v| !v.is_finite()) {
            return Err(Error::Config("samples must be finite".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sample abscissae must strictly increase".into()));
        }
        if x[0] < -1.0 || x[x.len() - 1] > 1.0 {
            return Err(Error::Config("sample abscissae must lie in [-1, 1]".into()));
        }
        Ok(Samples { x, value })
    }

    /// CSV with header `x,value`.
    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let (mut x, mut value) = (Vec::new(), Vec::new());
        for row in rdr.deserialize::<SampleRow>() {
            let row = row?;
            x.push(row.x);
            value.push(row.value);
        }
        Samples::new(x, value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Samples::from_reader(std::fs::File::open(path)?)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Linear interpolation; NaN outside the sampled range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if !(x >= self.x[0] && x <= self.x[n - 1]) {
            return f64::NAN;
        }
        let i = self.x.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let w = (x - x0) / (x1 - x0);
        self.value[i - 1] * (1.0 - w) + self.value[i] * w
    }
}

/// A realised initial datum for a given α.
#[derive(Debug, Clone)]
pub enum Datum {
    Indicator { l: f64, r: f64 },
    Mode { mode: Box<EigenMode>, scale: f64 },
    Samples(Samples),
}

impl Datum {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Datum::Indicator { l, r } => indicator(*l, *r)(x),
            Datum::Mode { mode, scale } => scale * mode.eval(x),
            Datum::Samples(s) => s.eval(x),
        }
    }

    /// Points where the datum or its derivative jumps.
    pub fn breaks(&self) -> Vec<f64> {
        match self {
            Datum::Indicator { l, r } => vec![*l, *r],
            Datum::Mode { .. } => Vec::new(),
            Datum::Samples(s) => s.x().to_vec(),
        }
    }

    /// Nodal values at the interior nodes.
    pub fn project(&self, grid: &Grid) -> Result<Vec<f64>> {
        let u = project_initial(grid, |x| self.eval(x));
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("samples do not cover every interior node".into()));
        }
        Ok(u)
    }
}

impl U0Spec {
    pub fn realize(&self, spec: &DegeneracySpec) -> Result<Datum> {
        Ok(match self {
            U0Spec::Indicator { l, r } => Datum::Indicator { l: *l, r: *r },
            U0Spec::Eigenmode { branch, n, scale } => {
                let mode = match (spec.regime(), branch) {
                    (Regime::Weak, Branch::Even) => weak_mode(spec, 2 * n - 1)?,
                    (Regime::Weak, Branch::Odd) => weak_mode(spec, 2 * n)?,
                    (Regime::Strong, Branch::LeftSupport | Branch::RightSupport) => strong_mode(spec, *branch, *n)?,
                    (Regime::Weak, _) => return Err(Error::Regime("left/right eigenmodes", "strong")),
                    (Regime::Strong, _) => return Err(Error::Regime("odd/even eigenmodes", "weak")),
                };
                Datum::Mode {
                    mode: Box::new(mode),
                    scale: *scale,
                }
            }
            U0Spec::Samples { path } => Datum::Samples(Samples::load(path)?),
        })
    }
}

/// Flat JSON configuration; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_cells: usize,
    pub u0: U0Spec,
    /// modes for spectrum tables and moment synthesis
    pub modes: usize,
    pub optimizer: OptimizerConfig,
    pub output_dir: PathBuf,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            alpha: 0.8,
            a: 0.5,
            b: 0.75,
            horizon: 0.5,
            dt: 2.5e-3,
            n_cells: 100,
            u0: U0Spec::Indicator { l: -0.5, r: -0.25 },
            modes: 6,
            optimizer: OptimizerConfig::default(),
            output_dir: PathBuf::from("out"),
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        DegeneracySpec::new(self.alpha)?;
        build_grid(self.n_cells, self.a, self.b)?;
        TimeGrid::new(self.horizon, self.dt)?;
        self.optimizer.validate()?;
        if self.modes == 0 {
            return Err(Error::Config("modes must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn spec(&self) -> Result<DegeneracySpec> {
        DegeneracySpec::new(self.alpha)
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.n_cells, self.a, self.b)
    }

    pub fn time(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.dt)
    }

    /// Examples 1 (χ_(−1/2,−1/4)) and 2 (χ_(1/4,1/2)) at the default
    /// discretisation.
    pub fn example(which: u8, alpha: f64) -> Result<Self> {
        let u0 = match which {
            1 => U0Spec::Indicator { l: -0.5, r: -0.25 },
            2 => U0Spec::Indicator { l: 0.25, r: 0.5 },
            _ => return Err(Error::Config(format!("example must be 1 or 2, got {which}"))),
        };
        let cfg = ExperimentConfig {
            alpha,
            u0,
            output_dir: PathBuf::from(format!("example{which}")),
            ..ExperimentConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Uncontrolled evolution.
#[derive(Debug, Clone)]
pub struct SolveRun {
    pub grid: Grid,
    pub time: TimeGrid,
    /// u at t₀ … t_N
    pub states: Vec<Vec<f64>>,
    pub m_norms: Vec<f64>,
}

pub fn run_solve(cfg: &ExperimentConfig) -> Result<SolveRun> {
    cfg.validate()?;
    let (spec, grid, time) = (cfg.spec()?, cfg.grid()?, cfg.time()?);
    let u0 = cfg.u0.realize(&spec)?.project(&grid)?;
    let prop = Propagator::new(&grid, cfg.alpha, time.dt())?;
    let states = prop.solve_forward(&u0, None, time.n_steps())?;
    let m_norms = states.iter().map(|u| prop.m_norm(u)).collect();
    Ok(SolveRun {
        grid,
        time,
        states,
        m_norms,
    })
}

/// Optimal control run.
#[derive(Debug, Clone)]
pub struct OptimizeRun {
    pub grid: Grid,
    pub time: TimeGrid,
    pub control: ControlTrajectory,
    pub final_state: Vec<f64>,
    pub report: RunReport,
}

pub fn run_optimize(cfg: &ExperimentConfig) -> Result<OptimizeRun> {
    cfg.validate()?;
    let (spec, grid, time) = (cfg.spec()?, cfg.grid()?, cfg.time()?);
    let u0 = cfg.u0.realize(&spec)?.project(&grid)?;
    let problem = ControlProblem::new(&grid, cfg.alpha, &time, u0)?;
    let (control, report) = adjoint::minimize(&problem, cfg.alpha, &cfg.optimizer)?;
    let final_state = problem.final_state(&control)?;
    Ok(OptimizeRun {
        grid,
        time,
        control,
        final_state,
        report,
    })
}

/// Moment-method synthesis and its FEM check.
#[derive(Debug, Clone)]
pub struct MomentRun {
    pub grid: Grid,
    pub time: TimeGrid,
    pub coefficients: ModalCoefficients,
    pub family: BiorthogonalFamily,
    pub window_masses: Vec<f64>,
    pub sigma_norms: Vec<f64>,
    pub control: ControlTrajectory,
    pub null_drive: NullDriveReport,
}

pub fn run_moment(cfg: &ExperimentConfig) -> Result<MomentRun> {
    cfg.validate()?;
    let (spec, grid, time) = (cfg.spec()?, cfg.grid()?, cfg.time()?);
    if spec.regime() != Regime::Weak {
        return Err(Error::Regime("moment synthesis", "weak"));
    }
    let datum = cfg.u0.realize(&spec)?;
    let coefficients = moment::expand_initial(|x| datum.eval(x), &spec, cfg.modes, &datum.breaks())?;
    let lambdas: Vec<f64> = coefficients.modes.iter().map(|m| m.lambda).collect();
    let family = moment::build_biorthogonal(&lambdas, cfg.horizon)?;
    let synth = moment::synthesize_control(&coefficients, &family, cfg.a, cfg.b)?;
    let control = synth.sample(&grid, &time)?;
    let u0 = datum.project(&grid)?;
    let null_drive = moment::verify_null_drive(&control, &grid, &spec, &time, &u0, cfg.modes)?;
    Ok(MomentRun {
        grid,
        time,
        window_masses: synth.window_masses().to_vec(),
        sigma_norms: family.l2_norms(),
        coefficients,
        family,
        control,
        null_drive,
    })
}
