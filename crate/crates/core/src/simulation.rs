//! Run configuration, initial data and the solver-independent driver loop.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{dominant_mode, SeriesMonitor, SeriesRow};
use crate::error::{Error, Result};
use crate::fd::FdStepper;
use crate::grid::{Field, Grid, State};
use crate::model::{Equilibrium, ModelParams};
use crate::spectral::SpectralStepper;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_AMPLITUDE: f64 = 1e-3;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_T_END: f64 = 500.0;

/// `base + Σ amplitude · cos(pπx/Lx) cos(qπy/Ly)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineField {
    pub base: f64,
    #[serde(default)]
    pub terms: Vec<CosineTerm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub p: usize,
    pub q: usize,
    pub amplitude: f64,
}

impl CosineField {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            terms: Vec::new(),
        }
    }

    pub fn with_term(mut self, p: usize, q: usize, amplitude: f64) -> Self {
        self.terms.push(CosineTerm { p, q, amplitude });
        self
    }

    pub fn sample(&self, grid: Grid) -> Field {
        let dom = grid.domain();
        Field::from_fn(grid, |x, y| {
            self.base
                + self
                    .terms
                    .iter()
                    .map(|t| {
                        let (kx, ky) = dom.wavenumbers(t.p, t.q);
                        t.amplitude * (kx * x).cos() * (ky * y).cos()
                    })
                    .sum::<f64>()
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// `(1, β+δ, 1)` plus i.i.d. uniform noise in `[-amplitude, amplitude]`
    /// at every node of every field, drawn from the config seed.
    EquilibriumPerturbation {
        amplitude: f64,
    },
    /// Analytic cosine-series data, typically far from equilibrium.
    FarField {
        m: CosineField,
        c: CosineField,
        d: CosineField,
    },
    Explicit(Box<State>),
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::EquilibriumPerturbation {
            amplitude: DEFAULT_AMPLITUDE,
        }
    }
}

impl InitialCondition {
    pub fn build(&self, params: &ModelParams, grid: Grid, seed: u64) -> Result<State> {
        let state = match self {
            InitialCondition::EquilibriumPerturbation { amplitude } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::Validation(format!(
                        "perturbation amplitude must be >= 0 (got {amplitude})"
                    )));
                }
                let eq = Equilibrium::positive(params);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let amp = *amplitude;
                let mut noisy = |base: f64| {
                    Field::from_fn(grid, |_, _| {
                        if amp > 0.0 {
                            base + rng.random_range(-amp..=amp)
                        } else {
                            base
                        }
                    })
                };
                let m = noisy(eq.m);
                let c = noisy(eq.c);
                let d = noisy(eq.d);
                State { m, c, d, t: 0.0 }
            }
            InitialCondition::FarField { m, c, d } => State {
                m: m.sample(grid),
                c: c.sample(grid),
                d: d.sample(grid),
                t: 0.0,
            },
            InitialCondition::Explicit(state) => {
                if state.grid() != &grid {
                    return Err(Error::Validation(
                        "explicit initial state is on a different grid".into(),
                    ));
                }
                State {
                    t: 0.0,
                    ..(**state).clone()
                }
            }
        };
        for (name, field) in state.fields() {
            if !field.is_finite() {
                return Err(Error::Validation(format!("initial {name} is not finite")));
            }
            if field.min() < 0.0 {
                return Err(Error::Validation(format!(
                    "initial {name} must be nonnegative (min {})",
                    field.min()
                )));
            }
        }
        Ok(state)
    }
}

/// Switches for the explicit terms; both on for the physical system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Terms {
    pub reaction: bool,
    pub chemotaxis: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Self {
            reaction: true,
            chemotaxis: true,
        }
    }
}

/// Early-termination rule. Checked every `check_interval` time units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    pub enabled: bool,
    /// Threshold on `‖U(t) - U(t-Δ)‖∞ / (Δ ‖U(t)‖∞)`.
    pub stationarity_tol: f64,
    pub check_interval: f64,
    /// Max-norm distance to `(1, β+δ, 1)` classed as converged.
    pub equilibrium_tol: f64,
    /// Minimum distance to equilibrium for a stationary state to count as a pattern.
    pub pattern_floor: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            enabled: true,
            stationarity_tol: 1e-7,
            check_interval: 1.0,
            equilibrium_tol: 1e-7,
            pattern_floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monitors {
    /// Lyapunov functional column, when admissible weights exist.
    pub lyapunov: bool,
    /// Cosine modes whose `m` amplitude is recorded.
    pub modes: Vec<(usize, usize)>,
}

impl Default for Monitors {
    fn default() -> Self {
        Self {
            lyapunov: true,
            modes: vec![(2, 2)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Spectral,
    Fd,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(SolverKind::Spectral),
            "fd" => Ok(SolverKind::Fd),
            other => Err(Error::Validation(format!(
                "unknown solver `{other}` (expected spectral or fd)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub params: ModelParams,
    pub grid: Grid,
    pub dt: f64,
    pub t_end: f64,
    pub ic: InitialCondition,
    /// Steps between retained snapshots; `0` keeps only the first and last.
    pub snapshot_every: usize,
    /// Steps between time-series rows.
    pub series_every: usize,
    pub seed: u64,
    pub monitors: Monitors,
    pub stop: StopRule,
    pub terms: Terms,
    /// 2/3-rule truncation of the explicit right-hand side.
    pub dealias: bool,
    pub solver: SolverKind,
}

impl SimConfig {
    pub fn new(params: ModelParams, grid: Grid) -> Self {
        Self {
            params,
            grid,
            dt: DEFAULT_DT,
            t_end: DEFAULT_T_END,
            ic: InitialCondition::default(),
            snapshot_every: 0,
            series_every: 100,
            seed: DEFAULT_SEED,
            monitors: Monitors::default(),
            stop: StopRule::default(),
            terms: Terms::default(),
            dealias: false,
            solver: SolverKind::Spectral,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Validation(format!(
                "dt > 0 required (got {})",
                self.dt
            )));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Validation(format!(
                "t_end > 0 required (got {})",
                self.t_end
            )));
        }
        if self.series_every == 0 {
            return Err(Error::Validation("series_every >= 1 required".into()));
        }
        if self.stop.enabled
            && (self.stop.check_interval.is_nan() || self.stop.check_interval <= 0.0)
        {
            return Err(Error::Validation("check_interval > 0 required".into()));
        }
        for &(p, q) in &self.monitors.modes {
            if p >= self.grid.nx() || q >= self.grid.ny() {
                return Err(Error::Validation(format!(
                    "monitored mode ({p},{q}) is not resolved on a {}x{} grid",
                    self.grid.nx(),
                    self.grid.ny()
                )));
            }
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`.
    pub fn total_steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }

    pub fn initial_state(&self) -> Result<State> {
        self.ic.build(&self.params, self.grid, self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    ConvergedToEquilibrium,
    StationaryPattern,
    /// Reached `t_end` without settling.
    Unsettled,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::ConvergedToEquilibrium => "converged to equilibrium",
            Classification::StationaryPattern => "stationary pattern",
            Classification::Unsettled => "unsettled",
        })
    }
}

/// Non-fatal warning raised by a step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Advisory {
    pub t: f64,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct StepReport {
    pub advisory: Option<Advisory>,
}

/// A time integrator advancing by the configured `dt` per call.
pub trait Stepper {
    fn state(&self) -> &State;
    fn step(&mut self) -> Result<StepReport>;
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub classification: Classification,
    pub t_final: f64,
    pub steps: usize,
    /// Last measured relative change per unit time, if any check ran.
    pub rel_change: Option<f64>,
    /// Final max-norm distance to `(1, β+δ, 1)` over all fields.
    pub deviation: f64,
    /// Most energetic non-mean mode of the final `m` and its energy share.
    pub dominant_mode: (usize, usize),
    pub dominant_share: f64,
    pub advisories: Vec<Advisory>,
}

/// Receives samples as the run progresses.
pub trait Observer {
    fn on_sample(&mut self, _state: &State, _row: &SeriesRow) -> Result<()> {
        Ok(())
    }
    fn on_snapshot(&mut self, _index: usize, _state: &State) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

/// In-memory record of a run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<State>,
    pub series: Vec<SeriesRow>,
    pub outcome: RunOutcome,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.snapshots
            .last()
            .expect("trajectory has a final snapshot")
    }
}

#[derive(Default)]
struct Recorder {
    snapshots: Vec<State>,
    series: Vec<SeriesRow>,
}

impl Observer for Recorder {
    fn on_sample(&mut self, _state: &State, row: &SeriesRow) -> Result<()> {
        self.series.push(row.clone());
        Ok(())
    }
    fn on_snapshot(&mut self, _index: usize, state: &State) -> Result<()> {
        self.snapshots.push(state.clone());
        Ok(())
    }
}

/// Builds the stepper selected by `config.solver`.
pub fn make_stepper(config: &SimConfig) -> Result<Box<dyn Stepper>> {
    config.validate()?;
    let initial = config.initial_state()?;
    Ok(match config.solver {
        SolverKind::Spectral => Box::new(SpectralStepper::new(config, initial)?),
        SolverKind::Fd => Box::new(FdStepper::new(config, initial)?),
    })
}

/// Runs `config` and keeps snapshots and series in memory.
pub fn simulate(config: &SimConfig) -> Result<Trajectory> {
    let mut recorder = Recorder::default();
    let outcome = simulate_with(config, &mut recorder)?;
    Ok(Trajectory {
        snapshots: recorder.snapshots,
        series: recorder.series,
        outcome,
    })
}

/// Runs `config`, streaming samples and snapshots to `observer`.
pub fn simulate_with(config: &SimConfig, observer: &mut dyn Observer) -> Result<RunOutcome> {
    let mut stepper = make_stepper(config)?;
    drive(config, stepper.as_mut(), observer)
}

/// The driver loop shared by all steppers.
pub fn drive(
    config: &SimConfig,
    stepper: &mut dyn Stepper,
    observer: &mut dyn Observer,
) -> Result<RunOutcome> {
    let equilibrium = Equilibrium::positive(&config.params).as_tuple();
    let mut monitor = SeriesMonitor::new(config, stepper.state());
    let total = config.total_steps();
    let check_every = ((config.stop.check_interval / config.dt).round() as usize).max(1);

    let mut snapshot_index = 0;
    observer.on_snapshot(snapshot_index, stepper.state())?;
    snapshot_index += 1;
    let row = monitor.sample(stepper.state());
    observer.on_sample(stepper.state(), &row)?;

    let mut advisories = Vec::new();
    let mut last_check = stepper.state().clone();
    let mut rel_change = None;
    let mut classification = None;
    let mut steps = 0;
    let mut last_sampled = 0;

    while steps < total {
        let report = stepper.step()?;
        steps += 1;
        if let Some(adv) = report.advisory {
            log::warn!("t = {}: {}", adv.t, adv.message);
            advisories.push(adv);
        }
        let state = stepper.state();
        if steps % config.series_every == 0 {
            let row = monitor.sample(state);
            observer.on_sample(state, &row)?;
            last_sampled = steps;
        }
        if config.snapshot_every > 0 && steps % config.snapshot_every == 0 && steps < total {
            observer.on_snapshot(snapshot_index, state)?;
            snapshot_index += 1;
        }
        if steps % check_every == 0 {
            let interval = check_every as f64 * config.dt;
            let change = state.max_abs_diff(&last_check) / (interval * state.max_abs().max(1e-300));
            rel_change = Some(change);
            last_check = state.clone();
            if config.stop.enabled {
                let dev = state.max_dev_from(equilibrium);
                if dev < config.stop.equilibrium_tol {
                    classification = Some(Classification::ConvergedToEquilibrium);
                } else if change < config.stop.stationarity_tol && dev >= config.stop.pattern_floor
                {
                    classification = Some(Classification::StationaryPattern);
                }
                if classification.is_some() {
                    break;
                }
            }
        }
    }

    let state = stepper.state();
    if last_sampled != steps {
        let row = monitor.sample(state);
        observer.on_sample(state, &row)?;
    }
    observer.on_snapshot(snapshot_index, state)?;
    let deviation = state.max_dev_from(equilibrium);
    let (dominant_mode, dominant_share) = dominant_mode(&state.m);
    let classification = classification.unwrap_or_else(|| {
        if deviation < config.stop.equilibrium_tol {
            Classification::ConvergedToEquilibrium
        } else if rel_change.is_some_and(|r| r < config.stop.stationarity_tol)
            && deviation >= config.stop.pattern_floor
        {
            Classification::StationaryPattern
        } else {
            Classification::Unsettled
        }
    });
    Ok(RunOutcome {
        classification,
        t_final: state.t,
        steps,
        rel_change,
        deviation,
        dominant_mode,
        dominant_share,
        advisories,
    })
}
