//! Scenario descriptions, the compiled-in presets and the run driver that
//! turns a scenario into a directory of artifacts.
//!
//! Scenario files are flat `key=value` text; `#` starts a comment line.
//!
//! ```text
//! name=fig1a
//! potential=quartic:1
//! initial=gaussian_ground
//! evolver=eulerian
//! method=euler
//! scheme=spectral:12
//! dt=0.01
//! steps=1
//! ```

use crate::diagnostics::{
    compare_fields, singularity_census, write_contours_csv, zero_contours, DiagnosticsReport, FieldComparison,
};
use crate::dynamics::{velocity_field, FrictionParams, PolynomialPotential};
use crate::error::{Result, WflowError};
use crate::evolve::{
    convective_shift, evolve_continuity, friction_evolve_analytic, friction_evolve_numeric, lagrangian_transport_step,
    EvolutionConfig, Method, StepDiagnostics,
};
use crate::grid::io::{read_scalar_binary, read_scalar_csv, write_scalar_binary, write_scalar_csv};
use crate::grid::{integrate, sample_point, DerivativeScheme, PhaseGrid, ScalarField};
use crate::heatmap::{export_heatmap, Palette};
use crate::oracle::{oracle_wavefunction, oracle_wigner_evolution, ORACLE_DT};
use crate::states::{
    coherent_state, fock1_state, gaussian_ground_state, wigner_from_wavefunction, SystemParams, Wavefunction,
    WignerState,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Names of the compiled-in presets.
pub const PRESETS: [&str; 5] = ["fig1a", "fig1b", "fig1c", "fig1d", "friction"];

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Potential(PolynomialPotential),
    Friction(FrictionParams),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    GaussianGround,
    Coherent {
        x0: f64,
        p0: f64,
    },
    Fock1,
    /// A wavefunction (`x,re,im`), a field CSV (`x,p,value`) or a `.wfld` file.
    FromFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evolver {
    Eulerian,
    Lagrangian,
    Convective,
    FrictionAnalytic,
    FrictionNumeric,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Oracle,
    Analytic,
}

impl Evolver {
    pub fn label(&self) -> &'static str {
        match self {
            Evolver::Eulerian => "eulerian",
            Evolver::Lagrangian => "lagrangian",
            Evolver::Convective => "convective",
            Evolver::FrictionAnalytic => "friction_analytic",
            Evolver::FrictionNumeric => "friction_numeric",
            Evolver::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "eulerian" => Evolver::Eulerian,
            "lagrangian" => Evolver::Lagrangian,
            "convective" => Evolver::Convective,
            "friction_analytic" => Evolver::FrictionAnalytic,
            "friction_numeric" => Evolver::FrictionNumeric,
            "oracle" => Evolver::Oracle,
            other => return Err(WflowError::Parse(format!("unknown evolver '{other}'"))),
        })
    }
}

impl Reference {
    pub fn label(&self) -> &'static str {
        match self {
            Reference::Oracle => "oracle",
            Reference::Analytic => "analytic",
        }
    }

    pub fn parse(s: &str) -> Result<Option<Self>> {
        Ok(match s.trim() {
            "none" | "" => None,
            "oracle" => Some(Reference::Oracle),
            "analytic" => Some(Reference::Analytic),
            other => return Err(WflowError::Parse(format!("unknown reference '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub dynamics: Dynamics,
    pub initial: InitialState,
    pub params: SystemParams,
    pub grid: PhaseGrid,
    pub evolution: EvolutionConfig,
    pub evolver: Evolver,
    pub oracle_dt: f64,
    pub compare: Option<Reference>,
}

fn potential_label(v: &PolynomialPotential) -> String {
    if v.is_zero() {
        return "free".into();
    }
    if let Some(k) = v.as_pure_quartic() {
        return format!("quartic:{k}");
    }
    let c = v.coefficients();
    if c.len() == 3 && c[0] == 0.0 && c[1] == 0.0 {
        return format!("harmonic:{}", 2.0 * c[2]);
    }
    let parts: Vec<String> = c.iter().map(|x| x.to_string()).collect();
    format!("poly:{}", parts.join(","))
}

pub fn parse_potential(s: &str) -> Result<PolynomialPotential> {
    let s = s.trim();
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| WflowError::Parse(format!("bad number '{t}' in potential '{s}'")))
    };
    if s == "free" {
        Ok(PolynomialPotential::free())
    } else if let Some(k) = s.strip_prefix("quartic:") {
        Ok(PolynomialPotential::quartic(num(k)?))
    } else if let Some(k) = s.strip_prefix("harmonic:") {
        Ok(PolynomialPotential::harmonic(num(k)?))
    } else if let Some(c) = s.strip_prefix("poly:") {
        PolynomialPotential::new(c.split(',').map(num).collect::<Result<_>>()?)
    } else {
        Err(WflowError::Parse(format!("unknown potential '{s}'")))
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| WflowError::Parse(format!("expected 'a,b', got '{s}'")))?;
    let n = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| WflowError::Parse(format!("bad number '{t}'")))
    };
    Ok((n(a)?, n(b)?))
}

/// `"256"` or `"256x128"`.
pub fn parse_grid_size(s: &str) -> Result<(usize, usize)> {
    let n = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| WflowError::Parse(format!("bad grid size '{s}'")))
    };
    match s.split_once('x') {
        Some((a, b)) => Ok((n(a)?, n(b)?)),
        None => {
            let v = n(s)?;
            Ok((v, v))
        }
    }
}

impl InitialState {
    fn label(&self) -> String {
        match self {
            InitialState::GaussianGround => "gaussian_ground".into(),
            InitialState::Coherent { x0, p0 } => format!("coherent:{x0},{p0}"),
            InitialState::Fock1 => "fock1".into(),
            InitialState::FromFile(p) => format!("file:{}", p.display()),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "gaussian_ground" {
            Ok(InitialState::GaussianGround)
        } else if s == "fock1" {
            Ok(InitialState::Fock1)
        } else if let Some(c) = s.strip_prefix("coherent:") {
            let (x0, p0) = parse_pair(c)?;
            Ok(InitialState::Coherent { x0, p0 })
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(InitialState::FromFile(PathBuf::from(p)))
        } else {
            Err(WflowError::Parse(format!("unknown initial state '{s}'")))
        }
    }

    /// The position-space wavefunction behind the state, when there is one.
    pub fn wavefunction(&self, grid: &PhaseGrid, params: SystemParams) -> Result<Option<Wavefunction>> {
        let ground_omega = params.hbar() / params.mass();
        Ok(match self {
            InitialState::GaussianGround => Some(Wavefunction::harmonic(grid, params, ground_omega, 0)?),
            InitialState::Coherent { x0, p0 } => Some(Wavefunction::coherent(grid, params, ground_omega, *x0, *p0)?),
            InitialState::Fock1 => Some(Wavefunction::harmonic(grid, params, 1.0 / params.mass(), 1)?),
            InitialState::FromFile(path) => {
                if file_kind(path)? == FileKind::Wavefunction {
                    let psi = Wavefunction::read_csv(BufReader::new(File::open(path)?), params)?;
                    if !psi.axis().matches(grid) {
                        return Err(WflowError::GridMismatch(format!(
                            "wavefunction in {} does not sit on the scenario's x-axis",
                            path.display()
                        )));
                    }
                    Some(psi)
                } else {
                    None
                }
            }
        })
    }

    pub fn build(&self, grid: &PhaseGrid, params: SystemParams) -> Result<WignerState> {
        match self {
            InitialState::GaussianGround => gaussian_ground_state(grid, params),
            InitialState::Coherent { x0, p0 } => coherent_state(grid, params, *x0, *p0),
            InitialState::Fock1 => fock1_state(grid, params),
            InitialState::FromFile(path) => match file_kind(path)? {
                FileKind::Wavefunction => {
                    let psi = self.wavefunction(grid, params)?.expect("wavefunction file");
                    wigner_from_wavefunction(&psi, grid)
                }
                _ => {
                    let field = read_field_file(path)?;
                    field.grid().ensure_same(grid)?;
                    WignerState::new_normalized(field, params, self.label())
                }
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FileKind {
    Wavefunction,
    FieldCsv,
    FieldBinary,
}

fn file_kind(path: &Path) -> Result<FileKind> {
    if path.extension().is_some_and(|e| e == "wfld") {
        return Ok(FileKind::FieldBinary);
    }
    let text = fs::read_to_string(path)?;
    match text.lines().next().map(str::trim) {
        Some("x,re,im") => Ok(FileKind::Wavefunction),
        Some("x,p,value") => Ok(FileKind::FieldCsv),
        _ => Err(WflowError::Parse(format!(
            "{} is neither a field nor a wavefunction file",
            path.display()
        ))),
    }
}

/// Reads a field from `.wfld` (binary) or `x,p,value` CSV.
pub fn read_field_file(path: &Path) -> Result<ScalarField> {
    match file_kind(path)? {
        FileKind::FieldBinary => read_scalar_binary(BufReader::new(File::open(path)?)),
        FileKind::FieldCsv => read_scalar_csv(BufReader::new(File::open(path)?)),
        FileKind::Wavefunction => Err(WflowError::Parse(format!("{} holds a wavefunction", path.display()))),
    }
}

/// Writes a field as `.wfld` when the extension says so, CSV otherwise.
pub fn write_field_file(field: &ScalarField, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "wfld") {
        write_scalar_binary(field, &mut out)?;
    } else {
        write_scalar_csv(field, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

impl Scenario {
    /// A compiled-in preset; all use `ħ = M = K = 1` and the default grid.
    pub fn preset(name: &str) -> Result<Self> {
        let grid = PhaseGrid::default_grid();
        let filtered = DerivativeScheme::spectral_filtered(12.0)?;
        let quartic = |name: &str, evolver, dt, steps| -> Result<Self> {
            Ok(Self {
                name: name.into(),
                dynamics: Dynamics::Potential(PolynomialPotential::quartic(1.0)),
                initial: InitialState::GaussianGround,
                params: SystemParams::natural(),
                grid,
                evolution: EvolutionConfig::new(dt, steps, Method::Euler, filtered)?,
                evolver,
                oracle_dt: ORACLE_DT,
                compare: None,
            })
        };
        match name {
            "fig1a" => quartic("fig1a", Evolver::Eulerian, 1e-2, 1),
            "fig1b" => quartic("fig1b", Evolver::Lagrangian, 5e-2, 1),
            "fig1c" => quartic("fig1c", Evolver::Eulerian, 1e-2 / 12.0, 12),
            "fig1d" => quartic("fig1d", Evolver::Convective, 5e-2, 1),
            "friction" => Ok(Self {
                name: "friction".into(),
                dynamics: Dynamics::Friction(FrictionParams::new(0.3, 1.0)?),
                initial: InitialState::GaussianGround,
                params: SystemParams::natural(),
                grid,
                evolution: EvolutionConfig::new(1e-3, 1000, Method::Rk4, DerivativeScheme::spectral())?
                    .with_record_stride(250),
                evolver: Evolver::FrictionNumeric,
                oracle_dt: ORACLE_DT,
                compare: None,
            }),
            other => Err(WflowError::InvalidParameter(format!(
                "unknown preset '{other}' (known: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.evolution.validate()?;
        let friction = matches!(self.dynamics, Dynamics::Friction(_));
        let friction_evolver = matches!(self.evolver, Evolver::FrictionAnalytic | Evolver::FrictionNumeric);
        if friction != friction_evolver {
            return Err(WflowError::InvalidParameter(format!(
                "evolver '{}' does not apply to {} dynamics",
                self.evolver.label(),
                if friction { "friction" } else { "potential" }
            )));
        }
        match (self.compare, friction) {
            (Some(Reference::Analytic), false) => {
                return Err(WflowError::InvalidParameter(
                    "analytic reference needs friction dynamics".into(),
                ))
            }
            (Some(Reference::Oracle), true) => {
                return Err(WflowError::InvalidParameter(
                    "the oracle does not model friction".into(),
                ))
            }
            _ => {}
        }
        if self.evolver == Evolver::Oracle || self.compare == Some(Reference::Oracle) {
            if !(self.oracle_dt > 0.0) {
                return Err(WflowError::InvalidParameter("oracle_dt must be > 0".into()));
            }
            if let InitialState::FromFile(p) = &self.initial {
                if file_kind(p)? != FileKind::Wavefunction {
                    return Err(WflowError::InvalidParameter(
                        "the oracle needs a wavefunction initial state".into(),
                    ));
                }
            }
        }
        if let InitialState::FromFile(p) = &self.initial {
            if !p.exists() {
                return Err(WflowError::InvalidParameter(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn to_key_value(&self) -> String {
        let mut kv: Vec<(&str, String)> = vec![("name", self.name.clone())];
        match &self.dynamics {
            Dynamics::Potential(v) => kv.push(("potential", potential_label(v))),
            Dynamics::Friction(f) => kv.push(("friction_gamma", f.gamma.to_string())),
        }
        let (nx, np) = self.grid.shape();
        let (x0, x1) = self.grid.x_range();
        let (p0, p1) = self.grid.p_range();
        let e = &self.evolution;
        kv.extend([
            ("initial", self.initial.label()),
            ("hbar", self.params.hbar().to_string()),
            ("mass", self.params.mass().to_string()),
            ("grid", format!("{nx}x{np}")),
            ("x_range", format!("{x0},{x1}")),
            ("p_range", format!("{p0},{p1}")),
            ("evolver", self.evolver.label().into()),
            ("method", e.method.label().into()),
            ("scheme", e.scheme.label()),
            ("dt", e.dt.to_string()),
            ("steps", e.n_steps.to_string()),
            ("record_stride", e.record_stride.to_string()),
            ("epsilon_rel", e.epsilon_rel.to_string()),
            ("oracle_dt", self.oracle_dt.to_string()),
            ("compare", self.compare.map_or("none", |r| r.label()).into()),
        ]);
        kv.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Parses scenario text. Keys absent from the text take the values of the
    /// `base` preset when a `preset=` key is given, of `fig1a` otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| WflowError::Parse(format!("line {}: expected key=value", n + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let base = map.get("preset").map_or("fig1a", String::as_str);
        let mut s = Self::preset(base)?;
        s.apply(&map)?;
        s.validate()?;
        Ok(s)
    }

    /// Applies `key=value` overrides.
    pub fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        let f = |k: &str, v: &str| {
            v.parse::<f64>()
                .map_err(|_| WflowError::Parse(format!("{k}: bad number '{v}'")))
        };
        let u = |k: &str, v: &str| {
            v.parse::<usize>()
                .map_err(|_| WflowError::Parse(format!("{k}: bad integer '{v}'")))
        };
        let mut grid_size = self.grid.shape();
        let mut x_range = self.grid.x_range();
        let mut p_range = self.grid.p_range();
        let mut hbar = self.params.hbar();
        let mut mass = self.params.mass();
        let mut e = self.evolution;
        for (k, v) in map {
            let v = v.as_str();
            match k.as_str() {
                "preset" => {}
                "name" => self.name = v.to_string(),
                "potential" => self.dynamics = Dynamics::Potential(parse_potential(v)?),
                "friction_gamma" => self.dynamics = Dynamics::Friction(FrictionParams::new(f(k, v)?, mass)?),
                "initial" => self.initial = InitialState::parse(v)?,
                "hbar" => hbar = f(k, v)?,
                "mass" => mass = f(k, v)?,
                "grid" => grid_size = parse_grid_size(v)?,
                "x_range" => x_range = parse_pair(v)?,
                "p_range" => p_range = parse_pair(v)?,
                "evolver" => self.evolver = Evolver::parse(v)?,
                "method" => e.method = Method::parse(v)?,
                "scheme" => e.scheme = DerivativeScheme::parse(v)?,
                "dt" => e.dt = f(k, v)?,
                "steps" => e.n_steps = u(k, v)?,
                "record_stride" => e.record_stride = u(k, v)?.max(1),
                "epsilon_rel" => e.epsilon_rel = f(k, v)?,
                "oracle_dt" => self.oracle_dt = f(k, v)?,
                "compare" => self.compare = Reference::parse(v)?,
                other => return Err(WflowError::Parse(format!("unknown scenario key '{other}'"))),
            }
        }
        self.params = SystemParams::new(hbar, mass)?;
        if let Dynamics::Friction(fp) = &mut self.dynamics {
            *fp = FrictionParams::new(fp.gamma, mass)?;
        }
        self.grid = PhaseGrid::new(x_range, p_range, grid_size.0, grid_size.1)?;
        e.validate()?;
        self.evolution = e;
        Ok(())
    }

    /// Steps at which states are recorded.
    pub fn recorded_steps(&self) -> Vec<usize> {
        let e = &self.evolution;
        (0..=e.n_steps)
            .filter(|s| s % e.record_stride == 0 || *s == e.n_steps)
            .collect()
    }
}

/// One recorded state of a run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub state: WignerState,
}

/// Everything a run produces in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub steps: Vec<StepDiagnostics>,
    pub references: Vec<Snapshot>,
    pub comparisons: Vec<TimedComparison>,
    pub report: DiagnosticsReport,
}

impl RunOutput {
    pub fn final_state(&self) -> &WignerState {
        &self.snapshots.last().expect("runs record the final state").state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimedComparison {
    pub step: usize,
    pub time: f64,
    pub comparison: FieldComparison,
}

fn step_diag(step: usize, time: f64, state: &WignerState) -> StepDiagnostics {
    StepDiagnostics {
        step,
        time,
        normalization: integrate(&state.field),
        min_value: state.field.min_value(),
        negativity_volume: crate::diagnostics::negativity_volume(&state.field),
        max_velocity_divergence: f64::NAN,
    }
}

fn initial_closed_form(initial: &InitialState, state: &WignerState) -> Box<dyn Fn(f64, f64) -> f64 + Send + Sync> {
    let hbar = state.params.hbar();
    let pi = std::f64::consts::PI;
    match initial {
        InitialState::GaussianGround => Box::new(move |x, p| (-(x * x + p * p / (hbar * hbar))).exp() / (pi * hbar)),
        InitialState::Coherent { x0, p0 } => {
            let (x0, p0) = (*x0, *p0);
            Box::new(move |x, p| (-((x - x0).powi(2) + (p - p0).powi(2) / (hbar * hbar))).exp() / (pi * hbar))
        }
        InitialState::Fock1 => Box::new(move |x, p| {
            let r2 = (x * x + p * p) / hbar;
            (2.0 * r2 - 1.0) * (-r2).exp() / (pi * hbar)
        }),
        InitialState::FromFile(_) => {
            let field = state.field.clone();
            Box::new(move |x, p| sample_point(&field, x, p))
        }
    }
}

/// Oracle states at the given steps, propagated incrementally.
fn oracle_series(scenario: &Scenario, steps: &[usize], potential: &PolynomialPotential) -> Result<Vec<Snapshot>> {
    let mut psi = scenario
        .initial
        .wavefunction(&scenario.grid, scenario.params)?
        .ok_or_else(|| WflowError::InvalidParameter("the oracle needs a wavefunction initial state".into()))?;
    let dt = scenario.evolution.dt;
    let mut t_prev = 0.0;
    let mut out = Vec::with_capacity(steps.len());
    for &step in steps {
        let t = step as f64 * dt;
        psi = oracle_wavefunction(&psi, potential, scenario.params, t - t_prev, scenario.oracle_dt)?;
        t_prev = t;
        let mut state = wigner_from_wavefunction(&psi, &scenario.grid)?;
        state.label = format!("oracle t={t}");
        out.push(Snapshot { step, time: t, state });
    }
    Ok(out)
}

/// Runs `scenario` in memory.
pub fn execute(scenario: &Scenario) -> Result<RunOutput> {
    scenario.validate()?;
    let cfg = scenario.evolution;
    let recorded = scenario.recorded_steps();
    let keep = |s: usize| recorded.binary_search(&s).is_ok();
    let initial = scenario.initial.build(&scenario.grid, scenario.params)?;
    let mut snapshots = Vec::new();
    let mut steps = Vec::new();

    match (&scenario.dynamics, scenario.evolver) {
        (Dynamics::Potential(v), Evolver::Eulerian) => {
            let rec = evolve_continuity(&initial, v, &cfg)?;
            steps = rec.diagnostics;
            snapshots = rec
                .states
                .into_iter()
                .map(|r| Snapshot {
                    step: r.step,
                    time: r.time,
                    state: r.state,
                })
                .collect();
        }
        (Dynamics::Potential(v), Evolver::Lagrangian | Evolver::Convective) => {
            let mut state = initial.clone();
            for step in 0..=cfg.n_steps {
                if step > 0 {
                    state = if scenario.evolver == Evolver::Lagrangian {
                        lagrangian_transport_step(&state, v, cfg.dt, cfg.epsilon_rel, cfg.scheme)?
                    } else {
                        let w = velocity_field(&state, v, cfg.epsilon_rel, cfg.scheme)?;
                        let field = convective_shift(&state, &w, cfg.dt)?;
                        state.with_field(field, format!("{} +convective({})", state.label, cfg.dt))
                    };
                    if !state.field.all_finite() {
                        return Err(WflowError::NonFinite { step });
                    }
                }
                let t = step as f64 * cfg.dt;
                steps.push(step_diag(step, t, &state));
                if keep(step) {
                    snapshots.push(Snapshot {
                        step,
                        time: t,
                        state: state.clone(),
                    });
                }
            }
        }
        (Dynamics::Potential(v), Evolver::Oracle) => {
            snapshots = oracle_series(scenario, &recorded, v)?;
            steps = snapshots.iter().map(|s| step_diag(s.step, s.time, &s.state)).collect();
        }
        (Dynamics::Friction(fp), Evolver::FrictionNumeric) => {
            let rec = friction_evolve_numeric(&initial, *fp, &cfg)?;
            steps = rec.diagnostics;
            snapshots = rec
                .states
                .into_iter()
                .map(|r| Snapshot {
                    step: r.step,
                    time: r.time,
                    state: r.state,
                })
                .collect();
        }
        (Dynamics::Friction(fp), Evolver::FrictionAnalytic) => {
            let f0 = initial_closed_form(&scenario.initial, &initial);
            for &step in &recorded {
                let t = step as f64 * cfg.dt;
                let field = friction_evolve_analytic(&scenario.grid, &f0, *fp, t);
                let state = WignerState::evolved(field, scenario.params, format!("friction analytic t={t}"));
                steps.push(step_diag(step, t, &state));
                snapshots.push(Snapshot { step, time: t, state });
            }
        }
        _ => unreachable!("validate rejects mismatched evolvers"),
    }

    let references = match (&scenario.dynamics, scenario.compare) {
        (Dynamics::Potential(v), Some(Reference::Oracle)) => {
            if scenario.evolver == Evolver::Oracle {
                snapshots.clone()
            } else {
                oracle_series(scenario, &recorded, v)?
            }
        }
        (Dynamics::Friction(fp), Some(Reference::Analytic)) => {
            let f0 = initial_closed_form(&scenario.initial, &initial);
            recorded
                .iter()
                .map(|&step| {
                    let t = step as f64 * cfg.dt;
                    let field = friction_evolve_analytic(&scenario.grid, &f0, *fp, t);
                    Snapshot {
                        step,
                        time: t,
                        state: WignerState::evolved(field, scenario.params, format!("analytic t={t}")),
                    }
                })
                .collect()
        }
        _ => Vec::new(),
    };
    let comparisons = snapshots
        .iter()
        .zip(&references)
        .map(|(s, r)| {
            Ok(TimedComparison {
                step: s.step,
                time: s.time,
                comparison: compare_fields(&s.state.field, &r.state.field)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let final_state = &snapshots.last().expect("final state is recorded").state;
    let mut report = DiagnosticsReport::of_field(&final_state.field);
    match &scenario.dynamics {
        Dynamics::Potential(v) => {
            let census = singularity_census(final_state, v, cfg.epsilon_rel, cfg.scheme)?;
            report = report.with_census(&census);
        }
        Dynamics::Friction(fp) => report.max_velocity_divergence = Some(fp.gamma),
    }
    if let Some(c) = comparisons.last() {
        report = report.with_comparison(&c.comparison);
    }
    Ok(RunOutput {
        snapshots,
        steps,
        references,
        comparisons,
        report,
    })
}

/// File name of the field dump for `step`.
pub fn field_file_name(step: usize, ext: &str) -> String {
    format!("w_{step:06}.{ext}")
}

/// Runs `scenario` and writes its artifacts to `out_dir`:
///
/// * `scenario.txt`: the scenario echo,
/// * `diagnostics.txt`, `diagnostics.json`: final-state report,
/// * `steps.csv`: per-step normalization, minimum and `max |∇·w|`,
/// * `times.csv` and `fields/`: recorded states as CSV and `.wfld`,
/// * `final.csv`, `final.ppm`, `contours.csv`: final field, heatmap, zero lines,
/// * `comparison.csv`, `reference/`, `reference_final.ppm` when a reference is set.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunOutput> {
    let output = execute(scenario)?;
    write_run(scenario, &output, out_dir)?;
    Ok(output)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

pub fn write_run(scenario: &Scenario, output: &RunOutput, out_dir: &Path) -> Result<()> {
    let fields_dir = out_dir.join("fields");
    fs::create_dir_all(&fields_dir)?;
    write_text(&out_dir.join("scenario.txt"), &scenario.to_key_value())?;
    write_text(&out_dir.join("diagnostics.txt"), &output.report.to_key_value())?;
    write_text(&out_dir.join("diagnostics.json"), &output.report.to_json())?;

    let mut steps = String::from("step,time,normalization,min_value,negativity_volume,max_velocity_divergence\n");
    for d in &output.steps {
        steps.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.step, d.time, d.normalization, d.min_value, d.negativity_volume, d.max_velocity_divergence
        ));
    }
    write_text(&out_dir.join("steps.csv"), &steps)?;

    let mut times = String::from("index,step,time,file\n");
    for (k, s) in output.snapshots.iter().enumerate() {
        let csv = field_file_name(s.step, "csv");
        write_field_file(&s.state.field, &fields_dir.join(&csv))?;
        write_field_file(&s.state.field, &fields_dir.join(field_file_name(s.step, "wfld")))?;
        times.push_str(&format!("{k},{},{},fields/{csv}\n", s.step, s.time));
    }
    write_text(&out_dir.join("times.csv"), &times)?;

    let final_field = &output.final_state().field;
    write_field_file(final_field, &out_dir.join("final.csv"))?;
    export_heatmap(final_field, &out_dir.join("final.ppm"), Palette::BlueWhiteRed)?;
    let mut contours = BufWriter::new(File::create(out_dir.join("contours.csv"))?);
    write_contours_csv(&zero_contours(final_field, 0.0), &mut contours)?;
    contours.flush()?;

    if !output.references.is_empty() {
        let ref_dir = out_dir.join("reference");
        fs::create_dir_all(&ref_dir)?;
        for r in &output.references {
            write_field_file(&r.state.field, &ref_dir.join(field_file_name(r.step, "csv")))?;
        }
        let last = &output.references.last().expect("nonempty").state.field;
        export_heatmap(last, &out_dir.join("reference_final.ppm"), Palette::BlueWhiteRed)?;
        write_text(&out_dir.join("comparison.csv"), &comparison_csv(&output.comparisons))?;
    }
    Ok(())
}

pub fn comparison_csv(rows: &[TimedComparison]) -> String {
    let mut out = String::from("step,time,l2,linf,sign_disagreement_area\n");
    for c in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.step, c.time, c.comparison.l2, c.comparison.linf, c.comparison.sign_disagreement_area
        ));
    }
    out
}

/// Recorded `(step, time, field path)` entries of a run directory.
pub fn read_times(run_dir: &Path) -> Result<Vec<(usize, f64, PathBuf)>> {
    let text = fs::read_to_string(run_dir.join("times.csv"))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(WflowError::Parse(format!("bad times.csv row '{line}'")));
        }
        let step = cols[1]
            .parse()
            .map_err(|_| WflowError::Parse(format!("bad step in '{line}'")))?;
        let time = cols[2]
            .parse()
            .map_err(|_| WflowError::Parse(format!("bad time in '{line}'")))?;
        out.push((step, time, run_dir.join(cols[3])));
    }
    Ok(out)
}

/// Compares two run directories at every recorded time they share.
pub fn compare_runs(a: &Path, b: &Path) -> Result<Vec<TimedComparison>> {
    let ta = read_times(a)?;
    let tb = read_times(b)?;
    let mut out = Vec::new();
    for (step, time, pa) in &ta {
        let Some((_, _, pb)) = tb
            .iter()
            .find(|(_, t, _)| (t - time).abs() <= 1e-9 * (1.0 + time.abs()))
        else {
            continue;
        };
        let fa = read_field_file(pa)?;
        let fb = read_field_file(pb)?;
        out.push(TimedComparison {
            step: *step,
            time: *time,
            comparison: compare_fields(&fa, &fb)?,
        });
    }
    if out.is_empty() {
        return Err(WflowError::InvalidParameter(format!(
            "runs {} and {} share no recorded time",
            a.display(),
            b.display()
        )));
    }
    Ok(out)
}

/// The reference state at `t` for a potential scenario, computed by the oracle.
pub fn oracle_reference(scenario: &Scenario, t: f64) -> Result<WignerState> {
    let Dynamics::Potential(v) = &scenario.dynamics else {
        return Err(WflowError::InvalidParameter(
            "the oracle does not model friction".into(),
        ));
    };
    let psi = scenario
        .initial
        .wavefunction(&scenario.grid, scenario.params)?
        .ok_or_else(|| WflowError::InvalidParameter("the oracle needs a wavefunction initial state".into()))?;
    oracle_wigner_evolution(&psi, v, scenario.params, &scenario.grid, t, scenario.oracle_dt)
}
