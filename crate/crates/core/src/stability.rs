//! Linear stability of the positive equilibrium `(1, β+δ, 1)`.
//!
//! Projected on the Neumann eigenmode with eigenvalue `λ`, the linearization
//! decouples into the `(m, c)` block
//!
//! ```text
//! N(λ) = [ 1 - a - λ     χ f(1) λ    ]
//!        [ β             -1 - ε0 λ   ]
//! ```
//!
//! and the `d` branch with rate `-g(1)`. The trace of `N` is always
//! negative, so a mode is unstable exactly when `det N(λ) < 0`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::RectDomain;
use crate::model::ModelParams;

/// A Neumann eigenmode `cos(pπx/Lx) cos(qπy/Ly)` with its `-Δ` eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeIndex {
    pub p: usize,
    pub q: usize,
    pub lambda: f64,
}

impl ModeIndex {
    pub fn new(domain: &RectDomain, p: usize, q: usize) -> Self {
        Self {
            p,
            q,
            lambda: domain.eigenvalue(p, q),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DispersionPoint {
    pub lambda: f64,
    pub trace: f64,
    pub det: f64,
    /// Root with the larger real part.
    pub sigma_plus: Complex64,
    pub sigma_minus: Complex64,
    /// Decoupled rate `-g(1)` of the `d` component.
    pub g_branch: f64,
}

impl DispersionPoint {
    pub fn is_unstable(&self) -> bool {
        self.det < 0.0
    }
}

/// Critical coefficient and the mode attaining it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalMode {
    pub chi: f64,
    pub mode: ModeIndex,
}

/// All `(p, q)` with `p ≤ pmax`, `q ≤ qmax`, ascending in `λ`, ties by `(p, q)`.
pub fn neumann_eigenvalues(domain: &RectDomain, pmax: usize, qmax: usize) -> Vec<ModeIndex> {
    let mut modes: Vec<ModeIndex> = (0..=pmax)
        .flat_map(|p| (0..=qmax).map(move |q| (p, q)))
        .map(|(p, q)| ModeIndex::new(domain, p, q))
        .collect();
    modes.sort_by(|a, b| {
        a.lambda
            .total_cmp(&b.lambda)
            .then(a.p.cmp(&b.p))
            .then(a.q.cmp(&b.q))
    });
    modes
}

/// Smallest `(pmax, qmax)` whose largest eigenvalue per axis reaches
/// `4·sqrt((a-1)/ε0)`, which brackets the minimizer of `chi_of_lambda`.
pub fn default_mode_bounds(params: &ModelParams, domain: &RectDomain) -> (usize, usize) {
    let target = 4.0 * ((params.a() - 1.0) / params.eps0()).sqrt();
    let per_axis = |len: f64| {
        let k = target.sqrt() * len / std::f64::consts::PI;
        (k.ceil() as usize).max(1)
    };
    (per_axis(domain.lx()), per_axis(domain.ly()))
}

pub fn reduced_matrix(params: &ModelParams, lambda: f64) -> Result<[[f64; 2]; 2]> {
    let f1 = params.positive_f1()?;
    Ok(reduced_matrix_unchecked(params, f1, lambda))
}

fn reduced_matrix_unchecked(params: &ModelParams, f1: f64, lambda: f64) -> [[f64; 2]; 2] {
    let a = params.a();
    [
        [1.0 - a - lambda, params.chi() * f1 * lambda],
        [params.beta(), -1.0 - params.eps0() * lambda],
    ]
}

/// `-a - (1 + ε0) λ`.
pub fn trace(params: &ModelParams, lambda: f64) -> f64 {
    -params.a() - (1.0 + params.eps0()) * lambda
}

/// `(a-1) + [1 + ε0(a-1) - χ f(1) β] λ + ε0 λ²`.
pub fn determinant(params: &ModelParams, lambda: f64) -> f64 {
    let a1 = params.a() - 1.0;
    let eps0 = params.eps0();
    a1 + (1.0 + eps0 * a1 - params.chi() * params.f1() * params.beta()) * lambda
        + eps0 * lambda * lambda
}

/// Roots of `σ² - Tr σ + Det = 0` for the mode with eigenvalue `lambda`.
pub fn growth_rates(params: &ModelParams, lambda: f64) -> DispersionPoint {
    let tr = trace(params, lambda);
    let det = determinant(params, lambda);
    let (sigma_plus, sigma_minus) = quadratic_roots(tr, det);
    DispersionPoint {
        lambda,
        trace: tr,
        det,
        sigma_plus,
        sigma_minus,
        g_branch: -params.g1(),
    }
}

/// Roots of `σ² - s σ + p`, larger real part first.
fn quadratic_roots(s: f64, p: f64) -> (Complex64, Complex64) {
    let disc = s * s - 4.0 * p;
    if disc < 0.0 {
        let im = 0.5 * (-disc).sqrt();
        return (Complex64::new(0.5 * s, im), Complex64::new(0.5 * s, -im));
    }
    // cancellation-free form: the root sharing the sign of `s` first
    let sq = disc.sqrt();
    let big = 0.5 * (s + s.signum() * sq);
    let (r1, r2) = if big == 0.0 {
        (0.0, 0.0)
    } else {
        (big, p / big)
    };
    let (hi, lo) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
    (Complex64::new(hi, 0.0), Complex64::new(lo, 0.0))
}

/// Domain-independent lower bound `(2 sqrt(ε0(a-1)) + 1 + ε0(a-1)) / (f(1) β)`.
pub fn chi_c0(params: &ModelParams) -> Result<f64> {
    let f1 = params.positive_f1()?;
    let x = params.eps0() * (params.a() - 1.0);
    Ok((2.0 * x.sqrt() + 1.0 + x) / (f1 * params.beta()))
}

/// Sufficient threshold for nonlinear stability, `4 sqrt(ε0(a-1)) / (β f(1))`.
pub fn chi_subcrit(params: &ModelParams) -> Result<f64> {
    let f1 = params.positive_f1()?;
    let x = params.eps0() * (params.a() - 1.0);
    Ok(4.0 * x.sqrt() / (params.beta() * f1))
}

/// The `χ` at which `det N(λ)` vanishes, for `λ > 0`.
pub fn chi_of_lambda(params: &ModelParams, lambda: f64) -> Result<f64> {
    let f1 = params.positive_f1()?;
    let a1 = params.a() - 1.0;
    let eps0 = params.eps0();
    Ok((a1 / lambda + 1.0 + eps0 * a1 + eps0 * lambda) / (f1 * params.beta()))
}

/// Turing threshold over the domain's modes with `p ≤ pmax`, `q ≤ qmax`.
///
/// The constant mode is skipped: its determinant is `a - 1 > 0` whatever `χ`.
pub fn chi_c_domain(
    params: &ModelParams,
    domain: &RectDomain,
    pmax: usize,
    qmax: usize,
) -> Result<CriticalMode> {
    params.positive_f1()?;
    let mut best: Option<CriticalMode> = None;
    for mode in neumann_eigenvalues(domain, pmax, qmax) {
        if mode.lambda <= 0.0 {
            continue;
        }
        let chi = chi_of_lambda(params, mode.lambda)?;
        if best.is_none_or(|b| chi < b.chi) {
            best = Some(CriticalMode { chi, mode });
        }
    }
    best.ok_or(Error::EmptyModeSet)
}

/// Modes with `det N(λ) < 0`. Marginal modes (`det = 0`) count as stable.
pub fn unstable_band(
    params: &ModelParams,
    domain: &RectDomain,
    pmax: usize,
    qmax: usize,
) -> Vec<ModeIndex> {
    neumann_eigenvalues(domain, pmax, qmax)
        .into_iter()
        .filter(|m| determinant(params, m.lambda) < 0.0)
        .collect()
}

pub fn dispersion_table(
    params: &ModelParams,
    domain: &RectDomain,
    pmax: usize,
    qmax: usize,
) -> Vec<(ModeIndex, DispersionPoint)> {
    neumann_eigenvalues(domain, pmax, qmax)
        .into_iter()
        .map(|m| (m, growth_rates(params, m.lambda)))
        .collect()
}

/// Eigenvector of `N(λ)` for `sigma_plus`, normalized to unit `m` component.
///
/// Requires real roots, which holds for every mode whose `det` is small
/// compared with `Tr²/4`.
pub fn leading_eigenvector(params: &ModelParams, lambda: f64) -> Result<(f64, f64)> {
    let n = reduced_matrix(params, lambda)?;
    let sigma = growth_rates(params, lambda).sigma_plus;
    if sigma.im != 0.0 {
        return Err(Error::Validation(format!(
            "complex growth rate at lambda = {lambda}"
        )));
    }
    // second row: β m + (n11 - σ) c = 0
    let c = -n[1][0] / (n[1][1] - sigma.re);
    Ok((1.0, c))
}
