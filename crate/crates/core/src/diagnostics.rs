//! Runtime monitors: norms, the Lyapunov functional and its weights,
//! modal amplitudes, the two-solution Gronwall check and the L¹ bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, State};
use crate::model::{Equilibrium, ModelParams};
use crate::simulation::{SimConfig, Trajectory};
use crate::spectral::{cos_forward, SpectralOps};
use crate::stability::chi_subcrit;

/// `(‖m‖₁, ‖c‖₁, ‖d‖₁)` by midpoint quadrature.
pub fn mass_l1(state: &State) -> (f64, f64, f64) {
    (state.m.l1_norm(), state.c.l1_norm(), state.d.l1_norm())
}

/// Upper bound for `‖m‖₁ + ‖c‖₁` along a run started from `initial`:
/// `max(‖m0‖₁ + ‖c0‖₁, |Ω|(δμ + k_a))` with `μ = max(1, max d0)`.
pub fn mass_bound(params: &ModelParams, initial: &State) -> f64 {
    let mu = d_bound(initial);
    let area = initial.grid().domain().area();
    let (m1, c1, _) = mass_l1(initial);
    (m1 + c1).max(area * (params.delta() * mu + params.k_a()))
}

/// `μ = max(1, max d0)`, the comparison-principle ceiling for `d`.
pub fn d_bound(initial: &State) -> f64 {
    initial.d.max().max(1.0)
}

/// Weights of the Lyapunov functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LyapunovParams {
    pub alpha: f64,
    pub theta1: f64,
    pub theta2: f64,
}

impl LyapunovParams {
    /// Both admissibility conditions, evaluated literally.
    pub fn is_admissible(&self, params: &ModelParams) -> bool {
        let (a, beta, delta) = (params.a(), params.beta(), params.delta());
        let f1 = params.f1();
        let g1 = params.g1();
        self.alpha > 0.0
            && self.alpha < 1.0
            && self.theta1 > 0.0
            && self.theta1 < 4.0 * self.alpha * (a - 1.0) / (beta * beta)
            && params.chi() < 2.0 * (self.theta1 * params.eps0()).sqrt() / f1
            && self.theta2 > delta * delta * self.theta1 / (4.0 * g1 * (1.0 - self.alpha))
    }
}

/// Deterministic admissible weights for `χ < χ_subcrit`.
///
/// `α` is the midpoint of `((χ/χ_subcrit)², 1)`, `θ1` the geometric mean of
/// `(χ²f(1)²/(4ε0), 4α(a−1)/β²)` and `θ2` is 1.5 times its lower bound.
pub fn pick_thetas(params: &ModelParams) -> Result<LyapunovParams> {
    let sub = chi_subcrit(params)?;
    let chi = params.chi();
    if chi >= sub {
        return Err(Error::Infeasible {
            chi,
            chi_subcrit: sub,
        });
    }
    let g1 = params.g1();
    if g1 <= 0.0 {
        return Err(Error::Validation(format!(
            "g(1) = {g1} must be positive for the d-weight to exist"
        )));
    }
    let (a, beta, delta, eps0, f1) = (
        params.a(),
        params.beta(),
        params.delta(),
        params.eps0(),
        params.f1(),
    );
    let alpha = 0.5 * ((chi / sub).powi(2) + 1.0);
    let lo = chi * chi * f1 * f1 / (4.0 * eps0);
    let hi = 4.0 * alpha * (a - 1.0) / (beta * beta);
    let theta1 = (lo * hi).sqrt();
    let theta2 = 1.5 * delta * delta * theta1 / (4.0 * g1 * (1.0 - alpha));
    Ok(LyapunovParams {
        alpha,
        theta1,
        theta2,
    })
}

/// `½(‖m − m̄‖² + θ1‖c − c̄‖² + θ2‖d − d̄‖²)`.
pub fn lyapunov_phi(state: &State, equilibrium: &Equilibrium, lp: &LyapunovParams) -> f64 {
    let (m, c, d) = equilibrium.as_tuple();
    0.5 * (state.m.l2_dist_sq_const(m)
        + lp.theta1 * state.c.l2_dist_sq_const(c)
        + lp.theta2 * state.d.l2_dist_sq_const(d))
}

/// Symmetric 2×2 form `[[a, b], [b, d]]`.
type Sym2 = [f64; 3];

/// The gradient, `(m̃, c̃)` and `(c̃, d̃)` blocks of the energy estimate.
pub fn form_blocks(params: &ModelParams, lp: &LyapunovParams) -> [Sym2; 3] {
    let (chi, f1, eps0) = (params.chi(), params.f1(), params.eps0());
    let (a, beta, delta, g1) = (params.a(), params.beta(), params.delta(), params.g1());
    let LyapunovParams {
        alpha,
        theta1,
        theta2,
    } = *lp;
    [
        [-1.0, 0.5 * chi * f1, -theta1 * eps0],
        [1.0 - a, 0.5 * beta * theta1, -alpha * theta1],
        [-(1.0 - alpha) * theta1, 0.5 * theta1 * delta, -theta2 * g1],
    ]
}

/// Negated largest eigenvalue of a symmetric 2×2 form.
///
/// Written as `det / (s − mean)` when the mean is negative so that a gap
/// near zero is not lost to cancellation.
fn spectral_gap([a, b, d]: Sym2) -> f64 {
    let mean = 0.5 * (a + d);
    let s = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    if mean < 0.0 {
        (a * d - b * b) / (s - mean)
    } else {
        -(mean + s)
    }
}

/// Gaps of the three blocks without the positivity check.
pub fn raw_gaps(params: &ModelParams, lp: &LyapunovParams) -> [f64; 3] {
    form_blocks(params, lp).map(spectral_gap)
}

/// `(ω1, ω2, ω3)`; every gap must be positive.
pub fn quadratic_form_gaps(params: &ModelParams, lp: &LyapunovParams) -> Result<(f64, f64, f64)> {
    let gaps = raw_gaps(params, lp);
    for (i, &g) in gaps.iter().enumerate() {
        if g.is_nan() || g <= 0.0 {
            return Err(Error::NonPositiveGap {
                index: i + 1,
                value: g,
            });
        }
    }
    Ok((gaps[0], gaps[1], gaps[2]))
}

/// The rescaled linear part acting on `(m̃, c̃, d̃)`, symmetrized.
pub fn assembled_form(params: &ModelParams, lp: &LyapunovParams) -> [[f64; 3]; 3] {
    let (a, beta, delta, g1) = (params.a(), params.beta(), params.delta(), params.g1());
    let (t1, t2) = (lp.theta1, lp.theta2);
    [
        [1.0 - a, 0.5 * beta * t1, 0.0],
        [0.5 * beta * t1, -t1, 0.5 * t1 * delta],
        [0.0, 0.5 * t1 * delta, -t2 * g1],
    ]
}

/// Cosine coefficient `(p, q)` of `field`.
pub fn mode_amplitude(field: &Field, p: usize, q: usize) -> f64 {
    cos_forward(field).at(p, q)
}

/// Share of the non-mean L² energy held by mode `(p, q)`.
pub fn mode_energy_fraction(field: &Field, p: usize, q: usize) -> f64 {
    let s = cos_forward(field);
    let total = s.fluctuation_energy();
    if total == 0.0 {
        return 0.0;
    }
    s.mode_energy(p, q) / total
}

/// Non-mean mode with the largest energy and its share; ties go to the
/// lower index in `(q, p)` order.
pub fn dominant_mode(field: &Field) -> ((usize, usize), f64) {
    let s = cos_forward(field);
    let total = s.fluctuation_energy();
    let (nx, ny) = (field.grid().nx(), field.grid().ny());
    let mut best = ((0, 0), 0.0);
    for q in 0..ny {
        for p in 0..nx {
            if (p, q) == (0, 0) {
                continue;
            }
            let e = s.mode_energy(p, q);
            if e > best.1 {
                best = ((p, q), e);
            }
        }
    }
    if total == 0.0 {
        return (best.0, 0.0);
    }
    (best.0, best.1 / total)
}

/// Sup norms tracked for uniform-in-time boundedness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupNorms {
    pub t: f64,
    pub m_inf: f64,
    /// `‖c‖∞ + ‖∇c‖∞`, gradient taken spectrally.
    pub c_w1inf: f64,
    pub d_inf: f64,
}

fn sup_norms(ops: &mut SpectralOps, state: &State) -> SupNorms {
    let (cx, cy) = ops.gradient(&state.c);
    let grad = cx
        .values()
        .iter()
        .zip(cy.values())
        .map(|(x, y)| x.hypot(*y))
        .fold(0.0, f64::max);
    SupNorms {
        t: state.t,
        m_inf: state.m.max_abs(),
        c_w1inf: state.c.max_abs() + grad,
        d_inf: state.d.max_abs(),
    }
}

/// Sup-norm series read off the recorded rows.
pub fn sup_norm_series(trajectory: &Trajectory) -> Vec<SupNorms> {
    trajectory
        .series
        .iter()
        .map(|r| SupNorms {
            t: r.t,
            m_inf: r.m_inf,
            c_w1inf: r.c_w1inf,
            d_inf: r.d_inf,
        })
        .collect()
}

/// One row of the time series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub m_min: f64,
    pub m_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub mass_m: f64,
    pub mass_c: f64,
    pub mass_d: f64,
    pub phi: Option<f64>,
    pub m_inf: f64,
    pub c_w1inf: f64,
    pub d_inf: f64,
    /// `m` amplitudes of the configured modes, in order.
    pub modes: Vec<f64>,
}

impl SeriesRow {
    pub fn header(modes: &[(usize, usize)], with_phi: bool) -> Vec<String> {
        let mut cols: Vec<String> = [
            "t", "m_min", "m_max", "c_min", "c_max", "d_min", "d_max", "mass_m", "mass_c", "mass_d",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if with_phi {
            cols.push("phi".into());
        }
        cols.extend(["m_inf", "c_w1inf", "d_inf"].map(String::from));
        cols.extend(modes.iter().map(|(p, q)| format!("m_{p}_{q}")));
        cols
    }

    /// Values in header order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.t,
            self.m_min,
            self.m_max,
            self.c_min,
            self.c_max,
            self.d_min,
            self.d_max,
            self.mass_m,
            self.mass_c,
            self.mass_d,
        ];
        v.extend(self.phi);
        v.extend([self.m_inf, self.c_w1inf, self.d_inf]);
        v.extend(&self.modes);
        v
    }
}

/// Produces [`SeriesRow`]s for one run.
pub struct SeriesMonitor {
    equilibrium: Equilibrium,
    lyapunov: Option<LyapunovParams>,
    modes: Vec<(usize, usize)>,
    ops: SpectralOps,
}

impl SeriesMonitor {
    pub fn new(config: &SimConfig, initial: &State) -> Self {
        let lyapunov = if config.monitors.lyapunov {
            match pick_thetas(&config.params) {
                Ok(lp) => Some(lp),
                Err(e) => {
                    log::info!("phi column disabled: {e}");
                    None
                }
            }
        } else {
            None
        };
        Self {
            equilibrium: Equilibrium::positive(&config.params),
            lyapunov,
            modes: config.monitors.modes.clone(),
            ops: SpectralOps::new(*initial.grid()),
        }
    }

    pub fn lyapunov(&self) -> Option<&LyapunovParams> {
        self.lyapunov.as_ref()
    }

    pub fn header(&self) -> Vec<String> {
        SeriesRow::header(&self.modes, self.lyapunov.is_some())
    }

    pub fn sample(&mut self, state: &State) -> SeriesRow {
        let (mass_m, mass_c, mass_d) = mass_l1(state);
        let sup = sup_norms(&mut self.ops, state);
        let modes = if self.modes.is_empty() {
            Vec::new()
        } else {
            let s = self.ops.cos_forward(&state.m);
            self.modes.iter().map(|&(p, q)| s.at(p, q)).collect()
        };
        SeriesRow {
            t: state.t,
            m_min: state.m.min(),
            m_max: state.m.max(),
            c_min: state.c.min(),
            c_max: state.c.max(),
            d_min: state.d.min(),
            d_max: state.d.max(),
            mass_m,
            mass_c,
            mass_d,
            phi: self
                .lyapunov
                .map(|lp| lyapunov_phi(state, &self.equilibrium, &lp)),
            m_inf: sup.m_inf,
            c_w1inf: sup.c_w1inf,
            d_inf: sup.d_inf,
            modes,
        }
    }
}

/// Sup-norm bounds entering the stability constant `G`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GronwallConstants {
    pub mu: f64,
    pub mu_c: f64,
    pub mu_m: f64,
    pub mu_f: f64,
    pub mu_fp: f64,
    pub mu_gp: f64,
    pub g: f64,
}

/// Samples on `[0, hi]` used to bound `|f|`, `|f'|`, `|g'|`.
const SUP_SAMPLES: usize = 4096;

fn sup_on(hi: f64, fun: impl Fn(f64) -> f64) -> f64 {
    (0..=SUP_SAMPLES)
        .map(|k| fun(hi * k as f64 / SUP_SAMPLES as f64).abs())
        .fold(0.0, f64::max)
}

impl GronwallConstants {
    /// Fills the function sups from `mu_m` and evaluates `G`.
    pub fn new(params: &ModelParams, mu: f64, mu_c: f64, mu_m: f64) -> Self {
        let mu_f = sup_on(mu_m, |m| params.eval_f(m));
        let mu_fp = sup_on(mu_m, |m| params.eval_df(m));
        let mu_gp = sup_on(mu_m, |m| params.eval_dg(m));
        let (chi, eps0, beta, delta) = (params.chi(), params.eps0(), params.beta(), params.delta());
        let chi2 = chi * chi;
        let g = (2.0
            + chi2 * mu_fp * mu_fp * mu_c * mu_c
            + chi2 * beta * mu_f * mu_f / (2.0 * eps0)
            + mu_gp * (1.0 + mu))
            .max(beta + delta)
            .max(chi2 * delta * mu_f * mu_f / (2.0 * eps0) + 1.0 + mu);
        Self {
            mu,
            mu_c,
            mu_m,
            mu_f,
            mu_fp,
            mu_gp,
            g,
        }
    }

    /// Measures the sups over the snapshots of two runs.
    ///
    /// `μ` is the comparison-principle ceiling `max(1, max d0)` over both
    /// initial states; `μ_c` is the largest `|∇c₁|` seen in run 1.
    pub fn measure(params: &ModelParams, run1: &Trajectory, run2: &Trajectory) -> Result<Self> {
        check_compatible(run1, run2)?;
        let mu = d_bound(&run1.snapshots[0]).max(d_bound(&run2.snapshots[0]));
        let mut ops = SpectralOps::new(*run1.snapshots[0].grid());
        let mut mu_c: f64 = 0.0;
        for s in &run1.snapshots {
            let (cx, cy) = ops.gradient(&s.c);
            for (x, y) in cx.values().iter().zip(cy.values()) {
                mu_c = mu_c.max(x.hypot(*y));
            }
        }
        let mu_m = run1
            .snapshots
            .iter()
            .chain(&run2.snapshots)
            .map(|s| s.m.max())
            .fold(0.0, f64::max);
        Ok(Self::new(params, mu, mu_c, mu_m))
    }
}

fn check_compatible(run1: &Trajectory, run2: &Trajectory) -> Result<()> {
    if run1.snapshots.is_empty() || run2.snapshots.is_empty() {
        return Err(Error::MismatchedRuns("a run has no snapshots".into()));
    }
    if run1.snapshots.len() != run2.snapshots.len() {
        return Err(Error::MismatchedRuns(format!(
            "{} vs {} snapshots",
            run1.snapshots.len(),
            run2.snapshots.len()
        )));
    }
    for (a, b) in run1.snapshots.iter().zip(&run2.snapshots) {
        if a.grid() != b.grid() {
            return Err(Error::MismatchedRuns("different grids".into()));
        }
        if (a.t - b.t).abs() > 1e-9 * a.t.abs().max(1.0) {
            return Err(Error::MismatchedRuns(format!(
                "snapshot times differ ({} vs {})",
                a.t, b.t
            )));
        }
    }
    Ok(())
}

/// Default relative slack on the exponential bound.
pub const GRONWALL_SLACK: f64 = 0.02;

#[derive(Clone, Debug, Serialize)]
pub struct GronwallRow {
    pub t: f64,
    pub energy: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GronwallReport {
    pub constants: GronwallConstants,
    pub rows: Vec<GronwallRow>,
    pub passed: bool,
}

/// Weighted squared distance `‖Δm‖² + (χ²μ_f²/2ε0)‖Δc‖² + ‖Δd‖²`.
pub fn gronwall_energy(params: &ModelParams, mu_f: f64, a: &State, b: &State) -> f64 {
    let w = params.chi().powi(2) * mu_f * mu_f / (2.0 * params.eps0());
    a.m.l2_dist_sq(&b.m) + w * a.c.l2_dist_sq(&b.c) + a.d.l2_dist_sq(&b.d)
}

/// Checks `E(t) ≤ e^{Gt} E(0) (1 + slack)` at every snapshot pair.
pub fn gronwall_check(
    run1: &Trajectory,
    run2: &Trajectory,
    params: &ModelParams,
    constants: &GronwallConstants,
    slack: f64,
) -> Result<GronwallReport> {
    check_compatible(run1, run2)?;
    let t0 = run1.snapshots[0].t;
    let e0 = gronwall_energy(
        params,
        constants.mu_f,
        &run1.snapshots[0],
        &run2.snapshots[0],
    );
    let rows: Vec<GronwallRow> = run1
        .snapshots
        .iter()
        .zip(&run2.snapshots)
        .map(|(a, b)| GronwallRow {
            t: a.t,
            energy: gronwall_energy(params, constants.mu_f, a, b),
            bound: (constants.g * (a.t - t0)).exp() * e0 * (1.0 + slack),
        })
        .collect();
    let passed = rows.iter().all(|r| r.energy <= r.bound);
    Ok(GronwallReport {
        constants: *constants,
        rows,
        passed,
    })
}

/// Least-squares slope of `ln v` against `t`; nonpositive values are skipped.
pub fn log_linear_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|&(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let vm = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - vm)).sum();
    Some(sxy / sxx)
}

/// Invariant violations found in a recorded series.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InvariantReport {
    pub d_range_ok: bool,
    pub positivity_ok: bool,
    pub mass_ok: bool,
    pub worst_mass_ratio: f64,
    pub min_m: f64,
    pub min_c: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.d_range_ok && self.positivity_ok && self.mass_ok
    }
}

/// `d ∈ [−1e−8, μ + 1e−8]`, `min m, min c ≥ −1e−6` and the L¹ bound within 5%.
pub fn check_invariants(params: &ModelParams, trajectory: &Trajectory) -> InvariantReport {
    let initial = &trajectory.snapshots[0];
    let mu = d_bound(initial);
    let bound = mass_bound(params, initial);
    let mut r = InvariantReport {
        min_m: f64::INFINITY,
        min_c: f64::INFINITY,
        d_min: f64::INFINITY,
        d_max: f64::NEG_INFINITY,
        ..Default::default()
    };
    for row in &trajectory.series {
        r.min_m = r.min_m.min(row.m_min);
        r.min_c = r.min_c.min(row.c_min);
        r.d_min = r.d_min.min(row.d_min);
        r.d_max = r.d_max.max(row.d_max);
        r.worst_mass_ratio = r.worst_mass_ratio.max((row.mass_m + row.mass_c) / bound);
    }
    r.d_range_ok = r.d_min >= -1e-8 && r.d_max <= mu + 1e-8;
    r.positivity_ok = r.min_m >= -1e-6 && r.min_c >= -1e-6;
    r.mass_ok = r.worst_mass_ratio <= 1.05;
    r
}
