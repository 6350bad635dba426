//! TOML run and sweep configuration.
//!
//! Files are flat key/value sections:
//!
//! ```toml
//! [params]
//! a = 3.0
//! chi = 3.18
//! eps0 = 0.03125
//! delta = 1.0
//! beta = 1.0
//! r = 1.0
//!
//! [domain]
//! lx = "pi"
//! ly = "pi"
//!
//! [grid]
//! nx = 64
//! ny = 64
//! ```
//!
//! plus optional `[time]`, `[ic]`, `[output]`, `[monitors]`, `[stop]`,
//! `[scheme]` and `[sweep]`. Every omitted key takes its documented default
//! and the resolved file can be echoed back with [`RunFile::to_toml`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::GRONWALL_SLACK;
use crate::error::{Error, Result};
use crate::grid::{Grid, RectDomain};
use crate::model::{ModelParams, Nonlinearity};
use crate::simulation::{
    CosineField, CosineTerm, InitialCondition, Monitors, SimConfig, SolverKind, StopRule, Terms,
    DEFAULT_AMPLITUDE, DEFAULT_DT, DEFAULT_SEED, DEFAULT_T_END,
};

/// Threshold on the share of non-mean modal energy in the target mode.
pub const DEFAULT_ENERGY_THRESHOLD: f64 = 0.9;

/// A length given either as a number or as a multiple of π (`"pi"`, `"2pi"`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Length(pub f64);

impl Serialize for Length {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let k = self.0 / std::f64::consts::PI;
        if self.0 == std::f64::consts::PI {
            s.serialize_str("pi")
        } else if k.fract() == 0.0 && (k * std::f64::consts::PI) == self.0 && k > 0.0 {
            s.serialize_str(&format!("{k}pi"))
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Length(v)),
            Raw::Int(v) => Ok(Length(v as f64)),
            Raw::Text(t) => parse_pi(&t)
                .map(Length)
                .ok_or_else(|| serde::de::Error::custom(format!("`{t}` is not a length"))),
        }
    }
}

fn parse_pi(t: &str) -> Option<f64> {
    let t = t.trim();
    let head = t.strip_suffix("pi")?.trim().trim_end_matches('*').trim();
    let k = if head.is_empty() {
        1.0
    } else {
        head.parse::<f64>().ok()?
    };
    Some(k * std::f64::consts::PI)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub a: f64,
    pub chi: f64,
    pub eps0: f64,
    pub delta: f64,
    pub beta: f64,
    /// Rate of `g(m) = r m²/(1+m)`.
    #[serde(default = "one")]
    pub r: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lx: Length,
    pub ly: Length,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: usize,
    pub series_every: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            t_end: DEFAULT_T_END,
            snapshot_every: 0,
            series_every: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IcKind {
    #[default]
    Perturbation,
    FarField,
}

/// `[p, q, amplitude]` triples.
type Terms3 = Vec<(usize, usize, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcSection {
    pub kind: IcKind,
    pub amplitude: f64,
    pub seed: u64,
    pub m_base: f64,
    pub m_terms: Terms3,
    pub c_base: f64,
    pub c_terms: Terms3,
    pub d_base: f64,
    pub d_terms: Terms3,
}

impl Default for IcSection {
    fn default() -> Self {
        Self {
            kind: IcKind::Perturbation,
            amplitude: DEFAULT_AMPLITUDE,
            seed: DEFAULT_SEED,
            m_base: 0.0,
            m_terms: Vec::new(),
            c_base: 0.0,
            c_terms: Vec::new(),
            d_base: 0.0,
            d_terms: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Run directory; the command line may override it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorsSection {
    pub lyapunov: bool,
    pub modes: Vec<(usize, usize)>,
    pub energy_threshold: f64,
    pub gronwall_slack: f64,
}

impl Default for MonitorsSection {
    fn default() -> Self {
        let m = Monitors::default();
        Self {
            lyapunov: m.lyapunov,
            modes: m.modes,
            energy_threshold: DEFAULT_ENERGY_THRESHOLD,
            gronwall_slack: GRONWALL_SLACK,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub solver: SolverKind,
    pub dealias: bool,
    pub reaction: bool,
    pub chemotaxis: bool,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            solver: SolverKind::Spectral,
            dealias: false,
            reaction: true,
            chemotaxis: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepTask {
    #[default]
    Thresholds,
    Simulate,
}

/// Sweepable parameters, in the order axes are nested (first is outermost).
pub const SWEEP_AXES: [&str; 6] = ["a", "chi", "eps0", "delta", "beta", "r"];

// Unknown keys land in `axes` and are rejected during validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    #[serde(default)]
    pub task: SweepTask,
    #[serde(default = "default_table")]
    pub table: PathBuf,
    /// `name = [from, to, step]` for any of [`SWEEP_AXES`].
    #[serde(flatten)]
    pub axes: BTreeMap<String, Vec<f64>>,
}

fn default_table() -> PathBuf {
    PathBuf::from("sweep.tsv")
}

/// The file as written, with defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub params: ParamsSection,
    pub domain: DomainSection,
    pub grid: GridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub ic: IcSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub monitors: MonitorsSection,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// One axis of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    /// Settings shared by every point.
    pub base: RunFile,
    pub axes: Vec<SweepAxis>,
    pub task: SweepTask,
    pub table: PathBuf,
}

impl SweepSpec {
    /// Cartesian product of the axes, first axis outermost.
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        let mut points = vec![Vec::new()];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis.name.clone(), v));
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// The run file for one sweep point.
    pub fn at(&self, point: &[(String, f64)]) -> RunFile {
        let mut file = self.base.clone();
        file.sweep = None;
        for (name, v) in point {
            let p = &mut file.params;
            match name.as_str() {
                "a" => p.a = *v,
                "chi" => p.chi = *v,
                "eps0" => p.eps0 = *v,
                "delta" => p.delta = *v,
                "beta" => p.beta = *v,
                "r" => p.r = *v,
                _ => unreachable!("axes are validated"),
            }
        }
        file
    }
}

#[derive(Clone, Debug)]
pub enum ConfigFile {
    Sim(Box<SimConfig>, Box<RunFile>),
    Sweep(Box<SweepSpec>),
}

impl RunFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run files serialize")
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| parse_error(text, path, &e))
    }

    /// Validated solver configuration.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let p = &self.params;
        let params = ModelParams::new(
            p.a,
            p.chi,
            p.eps0,
            p.delta,
            p.beta,
            Nonlinearity::Saturating { rate: p.r },
        )?;
        let domain = RectDomain::new(self.domain.lx.0, self.domain.ly.0)?;
        let grid = Grid::new(domain, self.grid.nx, self.grid.ny)?;
        let ic = match self.ic.kind {
            IcKind::Perturbation => InitialCondition::EquilibriumPerturbation {
                amplitude: self.ic.amplitude,
            },
            IcKind::FarField => InitialCondition::FarField {
                m: cosine_field(self.ic.m_base, &self.ic.m_terms),
                c: cosine_field(self.ic.c_base, &self.ic.c_terms),
                d: cosine_field(self.ic.d_base, &self.ic.d_terms),
            },
        };
        let mut cfg = SimConfig::new(params, grid);
        cfg.dt = self.time.dt;
        cfg.t_end = self.time.t_end;
        cfg.snapshot_every = self.time.snapshot_every;
        cfg.series_every = self.time.series_every;
        cfg.ic = ic;
        cfg.seed = self.ic.seed;
        cfg.monitors = Monitors {
            lyapunov: self.monitors.lyapunov,
            modes: self.monitors.modes.clone(),
        };
        cfg.stop = self.stop;
        cfg.terms = Terms {
            reaction: self.scheme.reaction,
            chemotaxis: self.scheme.chemotaxis,
        };
        cfg.dealias = self.scheme.dealias;
        cfg.solver = self.scheme.solver;
        let m = &self.monitors;
        if !(m.energy_threshold > 0.0 && m.energy_threshold <= 1.0) {
            return Err(Error::Validation(format!(
                "energy_threshold must lie in (0, 1] (got {})",
                m.energy_threshold
            )));
        }
        if !(m.gronwall_slack >= 0.0 && m.gronwall_slack.is_finite()) {
            return Err(Error::Validation(format!(
                "gronwall_slack must be >= 0 (got {})",
                m.gronwall_slack
            )));
        }
        cfg.validate()?;
        cfg.initial_state()?;
        Ok(cfg)
    }

    /// Sweep description; `None` when the file has no `[sweep]` section.
    pub fn sweep_spec(&self) -> Result<Option<SweepSpec>> {
        let Some(s) = &self.sweep else {
            return Ok(None);
        };
        if s.axes.is_empty() {
            return Err(Error::Validation("sweep needs at least one axis".into()));
        }
        let mut axes = Vec::new();
        for name in SWEEP_AXES {
            if let Some(range) = s.axes.get(name) {
                axes.push(SweepAxis {
                    name: name.to_string(),
                    values: axis_values(name, range)?,
                });
            }
        }
        if let Some(unknown) = s.axes.keys().find(|k| !SWEEP_AXES.contains(&k.as_str())) {
            return Err(Error::Validation(format!(
                "unknown sweep axis `{unknown}` (expected one of {})",
                SWEEP_AXES.join(", ")
            )));
        }
        let spec = SweepSpec {
            base: self.clone(),
            axes,
            task: s.task,
            table: s.table.clone(),
        };
        // every point must be a valid configuration
        for point in spec.points() {
            spec.at(&point).sim_config().map_err(|e| {
                Error::Validation(format!("sweep point {}: {e}", format_point(&point)))
            })?;
        }
        Ok(Some(spec))
    }
}

pub(crate) fn format_point(point: &[(String, f64)]) -> String {
    point
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn axis_values(name: &str, range: &[f64]) -> Result<Vec<f64>> {
    let [from, to, step] = range else {
        return Err(Error::Validation(format!(
            "sweep axis `{name}` must be [from, to, step]"
        )));
    };
    let (from, to, step) = (*from, *to, *step);
    if !(from.is_finite() && to.is_finite() && step.is_finite()) || step <= 0.0 || to < from {
        return Err(Error::Validation(format!(
            "sweep axis `{name}` is empty: from {from} to {to} step {step}"
        )));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| from + i as f64 * step).collect())
}

fn cosine_field(base: f64, terms: &[(usize, usize, f64)]) -> CosineField {
    CosineField {
        base,
        terms: terms
            .iter()
            .map(|&(p, q, amplitude)| CosineTerm { p, q, amplitude })
            .collect(),
    }
}

fn parse_error(text: &str, path: &Path, e: &toml::de::Error) -> Error {
    let (line, field) = match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            let line_text = text.lines().nth(line - 1).unwrap_or("");
            let field = match line_text.split_once('=') {
                Some((k, _)) => k.trim().to_string(),
                None => line_text.trim().trim_matches(['[', ']']).to_string(),
            };
            (line, field)
        }
        None => (0, String::new()),
    };
    Error::Parse {
        path: path.to_path_buf(),
        line,
        field,
        message: e.message().to_string(),
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path)
}

/// [`parse_config`] on in-memory text; `path` is only used in messages.
pub fn parse_config_str(text: &str, path: &Path) -> Result<ConfigFile> {
    let file = RunFile::from_toml(text, path)?;
    match file.sweep_spec()? {
        Some(spec) => Ok(ConfigFile::Sweep(Box::new(spec))),
        None => {
            let cfg = file.sim_config()?;
            Ok(ConfigFile::Sim(Box::new(cfg), Box::new(file)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[params]
a = 3.0
chi = 3.18
eps0 = 0.03125
delta = 1.0
beta = 1.0

[domain]
lx = "pi"
ly = "pi"

[grid]
nx = 64
ny = 64
"#;

    fn parse(text: &str) -> Result<ConfigFile> {
        parse_config_str(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let ConfigFile::Sim(cfg, file) = parse(MINIMAL).unwrap() else {
            panic!("expected a run config")
        };
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.seed, 42);
        assert_eq!(
            cfg.ic,
            InitialCondition::EquilibriumPerturbation { amplitude: 1e-3 }
        );
        assert_eq!(cfg.t_end, 500.0);
        assert_eq!(cfg.grid.domain().lx(), std::f64::consts::PI);
        // echo and re-parse gives the same settings
        let echoed = file.to_toml();
        assert!(echoed.contains("dt = 0.001"));
        assert!(echoed.contains("lx = \"pi\""));
        let ConfigFile::Sim(again, _) = parse(&echoed).unwrap() else {
            panic!()
        };
        assert_eq!(again.dt, cfg.dt);
        assert_eq!(again.stop, cfg.stop);
        assert_eq!(again.monitors, cfg.monitors);
    }

    #[test]
    fn a_below_one_is_rejected() {
        let text = MINIMAL.replace("a = 3.0", "a = 0.5");
        match parse(&text) {
            Err(Error::Validation(msg)) => assert!(msg.contains("a > 1 required"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_and_field() {
        let text = MINIMAL.replace("nx = 64", "nx = \"many\"");
        match parse(&text) {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(line, 14);
                assert_eq!(field, "nx");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = format!("{MINIMAL}\n[time]\nstep = 3\n");
        match parse(&text) {
            Err(Error::Parse { field, message, .. }) => {
                assert_eq!(field, "step");
                assert!(message.contains("unknown field"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn far_field_section() {
        let text = format!(
            "{MINIMAL}\n[ic]\nkind = \"far_field\"\nm_base = 2.0\nm_terms = [[1, 1, 1.8]]\nc_base = 0.5\nd_base = 0.1\n"
        );
        let ConfigFile::Sim(cfg, _) = parse(&text).unwrap() else {
            panic!()
        };
        let s = cfg.initial_state().unwrap();
        assert!((s.m.max() - 3.8).abs() < 0.01);
        assert!((s.c.mean() - 0.5).abs() < 1e-12);
        // negative data is rejected
        let bad = text.replace("m_base = 2.0", "m_base = 1.0");
        assert!(matches!(parse(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn sweep_section() {
        let text = format!("{MINIMAL}\n[sweep]\ntask = \"thresholds\"\nchi = [3.0, 3.2, 0.01]\n");
        let ConfigFile::Sweep(spec) = parse(&text).unwrap() else {
            panic!()
        };
        let pts = spec.points();
        assert_eq!(pts.len(), 21);
        assert!((pts[20][0].1 - 3.2).abs() < 1e-12);
        let two = format!("{text}eps0 = [0.1, 0.3, 0.1]\n");
        let ConfigFile::Sweep(spec) = parse(&two).unwrap() else {
            panic!()
        };
        assert_eq!(spec.points().len(), 63);
        assert_eq!(spec.points()[0][0].0, "chi");
    }

    #[test]
    fn empty_sweep_is_rejected() {
        for axis in [
            "chi = [3.2, 3.0, 0.01]",
            "chi = [3.0, 3.2, 0.0]",
            "chi = [3.0]",
        ] {
            let text = format!("{MINIMAL}\n[sweep]\n{axis}\n");
            assert!(matches!(parse(&text), Err(Error::Validation(_))), "{axis}");
        }
        let text = format!("{MINIMAL}\n[sweep]\ntask = \"thresholds\"\n");
        assert!(matches!(parse(&text), Err(Error::Validation(_))));
        let text = format!("{MINIMAL}\n[sweep]\nomega = [1.0, 2.0, 1.0]\n");
        assert!(matches!(parse(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn lengths() {
        assert_eq!(parse_pi("pi"), Some(std::f64::consts::PI));
        assert_eq!(parse_pi("2pi"), Some(2.0 * std::f64::consts::PI));
        assert_eq!(parse_pi("0.5*pi"), Some(0.5 * std::f64::consts::PI));
        assert_eq!(parse_pi("tau"), None);
        let t = MINIMAL.replace("lx = \"pi\"", "lx = 2");
        let ConfigFile::Sim(cfg, _) = parse(&t).unwrap() else {
            panic!()
        };
        assert_eq!(cfg.grid.domain().lx(), 2.0);
    }
}
