//! Coefficients, nonlinearities and homogeneous equilibria of the
//! macrophage / cytokine / damaged-tissue system
//!
//! ```text
//! m_t = Δm + m(1 - m^(a-1)) - χ ∇·(f(m) ∇c)
//! c_t = ε0 Δc + δ d - c + β m
//! d_t = g(m)(1 - d)
//! ```
//!
//! with homogeneous Neumann conditions for `m` and `c`.
//!
//! Every nonlinearity is evaluated at the positive part `m₊ = max(m, 0)`.
//! Exact solutions are nonnegative, so the clamp only matters for small
//! discrete undershoots.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Growth exponents `γ, b, ℓ` with `|f(y)| ≤ γ y^b`, `|f'(y)| ≤ γ y^ℓ`.
/// Carried as metadata; never checked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthExponents {
    pub gamma: f64,
    pub b: f64,
    pub ell: f64,
}

/// User-supplied `f` and `g`.
#[derive(Clone)]
pub struct CustomNonlinearity {
    pub f: ScalarFn,
    pub g: ScalarFn,
    pub df: Option<ScalarFn>,
    pub dg: Option<ScalarFn>,
    pub exponents: Option<GrowthExponents>,
    /// Caller's declaration that `g(y) > 0` for all `y > 0`.
    pub g_positive: bool,
}

impl CustomNonlinearity {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            g: Arc::new(g),
            df: None,
            dg: None,
            exponents: None,
            g_positive: true,
        }
    }

    pub fn with_derivatives(
        mut self,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.df = Some(Arc::new(df));
        self.dg = Some(Arc::new(dg));
        self
    }

    pub fn with_exponents(mut self, exponents: GrowthExponents) -> Self {
        self.exponents = Some(exponents);
        self
    }
}

impl fmt::Debug for CustomNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomNonlinearity")
            .field("has_df", &self.df.is_some())
            .field("has_dg", &self.dg.is_some())
            .field("exponents", &self.exponents)
            .field("g_positive", &self.g_positive)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum Nonlinearity {
    /// `f(m) = m/(1+m)`, `g(m) = r m²/(1+m)`.
    Saturating {
        rate: f64,
    },
    Custom(CustomNonlinearity),
}

impl Nonlinearity {
    fn f(&self, m: f64) -> f64 {
        match self {
            Nonlinearity::Saturating { .. } => m / (1.0 + m),
            Nonlinearity::Custom(c) => (c.f)(m),
        }
    }

    fn g(&self, m: f64) -> f64 {
        match self {
            Nonlinearity::Saturating { rate } => rate * m * m / (1.0 + m),
            Nonlinearity::Custom(c) => (c.g)(m),
        }
    }

    fn df(&self, m: f64) -> f64 {
        match self {
            Nonlinearity::Saturating { .. } => 1.0 / ((1.0 + m) * (1.0 + m)),
            Nonlinearity::Custom(c) => match &c.df {
                Some(df) => df(m),
                None => central_difference(&*c.f, m),
            },
        }
    }

    fn dg(&self, m: f64) -> f64 {
        match self {
            Nonlinearity::Saturating { rate } => rate * m * (m + 2.0) / ((1.0 + m) * (1.0 + m)),
            Nonlinearity::Custom(c) => match &c.dg {
                Some(dg) => dg(m),
                None => central_difference(&*c.g, m),
            },
        }
    }
}

fn central_difference(h: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let step = 1e-6 * x.abs().max(1.0);
    // one-sided at the origin: the nonlinearities live on [0, ∞)
    if x < step {
        (h(x + step) - h(x)) / step
    } else {
        (h(x + step) - h(x - step)) / (2.0 * step)
    }
}

/// Scalar coefficients of the system plus the `f`, `g` pair.
#[derive(Clone, Debug)]
pub struct ModelParams {
    a: f64,
    chi: f64,
    eps0: f64,
    delta: f64,
    beta: f64,
    nonlinearity: Nonlinearity,
    logistic_power: LogisticPower,
}

#[derive(Clone, Copy, Debug)]
enum LogisticPower {
    Integer(i32),
    Real(f64),
}

impl ModelParams {
    pub fn new(
        a: f64,
        chi: f64,
        eps0: f64,
        delta: f64,
        beta: f64,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} > 0 required (got {v})")))
            }
        };
        if !(a.is_finite() && a > 1.0) {
            return Err(Error::Validation(format!("a > 1 required (got {a})")));
        }
        positive("chi", chi)?;
        positive("eps0", eps0)?;
        positive("delta", delta)?;
        positive("beta", beta)?;
        if let Nonlinearity::Saturating { rate } = nonlinearity {
            positive("r", rate)?;
        }
        let exponent = a - 1.0;
        let logistic_power = if exponent.fract() == 0.0 && exponent <= 16.0 {
            LogisticPower::Integer(exponent as i32)
        } else {
            LogisticPower::Real(exponent)
        };
        Ok(Self {
            a,
            chi,
            eps0,
            delta,
            beta,
            nonlinearity,
            logistic_power,
        })
    }

    /// `r = 1, a = 3, ε0 = 1/32, δ = β = 1` with the saturating pair and the
    /// given chemotactic coefficient.
    pub fn reference(chi: f64) -> Self {
        Self::new(
            3.0,
            chi,
            0.03125,
            1.0,
            1.0,
            Nonlinearity::Saturating { rate: 1.0 },
        )
        .expect("reference parameters are valid")
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn chi(&self) -> f64 {
        self.chi
    }
    pub fn eps0(&self) -> f64 {
        self.eps0
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn with_chi(&self, chi: f64) -> Result<Self> {
        Self::new(
            self.a,
            chi,
            self.eps0,
            self.delta,
            self.beta,
            self.nonlinearity.clone(),
        )
    }

    pub fn with_eps0(&self, eps0: f64) -> Result<Self> {
        Self::new(
            self.a,
            self.chi,
            eps0,
            self.delta,
            self.beta,
            self.nonlinearity.clone(),
        )
    }

    /// `f(m₊)`.
    #[inline]
    pub fn eval_f(&self, m: f64) -> f64 {
        self.nonlinearity.f(m.max(0.0))
    }

    /// `g(m₊)`.
    #[inline]
    pub fn eval_g(&self, m: f64) -> f64 {
        self.nonlinearity.g(m.max(0.0))
    }

    pub fn eval_df(&self, m: f64) -> f64 {
        self.nonlinearity.df(m.max(0.0))
    }

    pub fn eval_dg(&self, m: f64) -> f64 {
        self.nonlinearity.dg(m.max(0.0))
    }

    pub fn f1(&self) -> f64 {
        self.eval_f(1.0)
    }

    pub fn g1(&self) -> f64 {
        self.eval_g(1.0)
    }

    /// `f(1)`, rejected unless positive.
    pub fn positive_f1(&self) -> Result<f64> {
        let f1 = self.f1();
        if f1 > 0.0 && f1.is_finite() {
            Ok(f1)
        } else {
            Err(Error::NonPositiveF1(f1))
        }
    }

    /// `m₊ (1 - m₊^(a-1))`.
    #[inline]
    pub fn logistic(&self, m: f64) -> f64 {
        let m = m.max(0.0);
        let power = match self.logistic_power {
            LogisticPower::Integer(k) => m.powi(k),
            LogisticPower::Real(e) => m.powf(e),
        };
        m * (1.0 - power)
    }

    /// Pointwise reaction vector: everything except diffusion and chemotaxis.
    #[inline]
    pub fn reaction_rhs(&self, (m, c, d): (f64, f64, f64)) -> (f64, f64, f64) {
        (
            self.logistic(m),
            self.delta * d - c + self.beta * m,
            self.eval_g(m) * (1.0 - d),
        )
    }

    /// Homogeneous steady states.
    pub fn equilibria(&self) -> Vec<Equilibrium> {
        let mut out = vec![Equilibrium::positive(self)];
        let g0 = self.nonlinearity.g(0.0);
        if g0 != 0.0 {
            out.push(Equilibrium {
                m: 0.0,
                c: self.delta,
                d: 1.0,
                family: None,
            });
        } else {
            out.push(Equilibrium::zero_family_member(self, 1.0));
        }
        out
    }

    /// `max_{m ≥ 0} (β + 2) m - m^a`, the constant in the L¹ bound for `m + c`.
    ///
    /// The function is concave on `[0, ∞)` so the stationary point is the maximizer.
    pub fn k_a(&self) -> f64 {
        let slope = self.beta + 2.0;
        let m_star = (slope / self.a).powf(1.0 / (self.a - 1.0));
        slope * m_star - m_star.powf(self.a)
    }
}

/// A homogeneous steady state `(m*, c*, d*)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Equilibrium {
    pub m: f64,
    pub c: f64,
    pub d: f64,
    /// `Some(ζ)` when this point is the member `(0, δζ, ζ)` of the family
    /// that exists when `g(0) = 0`.
    pub family: Option<f64>,
}

impl Equilibrium {
    /// `(1, β + δ, 1)`.
    pub fn positive(params: &ModelParams) -> Self {
        Self {
            m: 1.0,
            c: params.beta + params.delta,
            d: 1.0,
            family: None,
        }
    }

    pub fn zero_family_member(params: &ModelParams, zeta: f64) -> Self {
        Self {
            m: 0.0,
            c: params.delta * zeta,
            d: zeta,
            family: Some(zeta),
        }
    }

    /// Max-abs residual of `m = m^a`, `δd + βm = c`, `g(m)(1-d) = 0`.
    pub fn residual(&self, params: &ModelParams) -> f64 {
        let r1 = self.m - self.m.max(0.0).powf(params.a);
        let r2 = params.delta * self.d + params.beta * self.m - self.c;
        let r3 = params.eval_g(self.m) * (1.0 - self.d);
        r1.abs().max(r2.abs()).max(r3.abs())
    }

    pub fn as_tuple(&self) -> (f64, f64, f64) {
        (self.m, self.c, self.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> ModelParams {
        ModelParams::reference(3.18)
    }

    #[test]
    fn f_values() {
        let p = reference();
        assert_eq!(p.eval_f(0.0), 0.0);
        assert_eq!(p.eval_f(1.0), 0.5);
        assert_eq!(p.eval_f(-0.3), 0.0);
    }

    #[test]
    fn g_values() {
        let p = reference();
        assert_eq!(p.eval_g(1.0), 0.5);
        assert_eq!(p.eval_g(0.0), 0.0);
        assert!((p.eval_g(2.0) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_parameters() {
        let sat = Nonlinearity::Saturating { rate: 1.0 };
        let err = ModelParams::new(0.5, 1.0, 1.0, 1.0, 1.0, sat.clone()).unwrap_err();
        assert!(err.to_string().contains("a > 1"));
        assert!(ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0, sat.clone()).is_err());
        assert!(ModelParams::new(2.0, 0.0, 1.0, 1.0, 1.0, sat.clone()).is_err());
        assert!(ModelParams::new(2.0, 1.0, -1.0, 1.0, 1.0, sat.clone()).is_err());
        assert!(ModelParams::new(2.0, 1.0, 1.0, 0.0, 1.0, sat.clone()).is_err());
        assert!(ModelParams::new(2.0, 1.0, 1.0, 1.0, f64::NAN, sat).is_err());
        let bad_rate = Nonlinearity::Saturating { rate: 0.0 };
        assert!(ModelParams::new(2.0, 1.0, 1.0, 1.0, 1.0, bad_rate).is_err());
    }

    #[test]
    fn positive_equilibrium() {
        let p = reference();
        let eq = p.equilibria();
        assert_eq!(eq[0].as_tuple(), (1.0, 2.0, 1.0));
    }

    #[test]
    fn saturating_g_gives_zero_family() {
        let p = reference();
        let eq = p.equilibria();
        assert_eq!(eq.len(), 2);
        assert_eq!(eq[1].family, Some(1.0));
        for zeta in [0.0, 0.3, 1.0, 4.0] {
            let member = Equilibrium::zero_family_member(&p, zeta);
            assert_eq!(member.as_tuple(), (0.0, zeta, zeta));
            assert!(member.residual(&p) < 1e-12);
        }
    }

    #[test]
    fn nonzero_g0_gives_isolated_trivial_state() {
        let custom = CustomNonlinearity::new(|m| m / (1.0 + m), |m| 0.2 + m);
        let p = ModelParams::new(2.0, 1.0, 0.5, 1.5, 0.7, Nonlinearity::Custom(custom)).unwrap();
        let eq = p.equilibria();
        assert_eq!(eq.len(), 2);
        assert_eq!(eq[1].as_tuple(), (0.0, 1.5, 1.0));
        assert_eq!(eq[1].family, None);
        for e in &eq {
            assert!(e.residual(&p) < 1e-12);
        }
    }

    #[test]
    fn reaction_examples() {
        let p = reference();
        assert_eq!(p.reaction_rhs((1.0, 2.0, 1.0)), (0.0, 0.0, 0.0));
        assert_eq!(p.reaction_rhs((0.0, 0.0, 1.0)), (0.0, 1.0, 0.0));
        let (dm, dc, dd) = p.reaction_rhs((2.0, 0.0, 0.0));
        assert_eq!(dm, -6.0);
        assert_eq!(dc, 2.0);
        assert!((dd - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn non_integer_exponent_is_well_defined_for_negative_m() {
        let p = ModelParams::new(
            2.5,
            1.0,
            0.1,
            1.0,
            1.0,
            Nonlinearity::Saturating { rate: 1.0 },
        )
        .unwrap();
        assert_eq!(p.logistic(-0.01), 0.0);
        assert!((p.logistic(4.0) - 4.0 * (1.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn k_a_matches_dense_sampling() {
        for (a, beta) in [(3.0, 1.0), (2.0, 0.5), (1.5, 2.0), (4.2, 0.3)] {
            let p = ModelParams::new(
                a,
                1.0,
                0.1,
                1.0,
                beta,
                Nonlinearity::Saturating { rate: 1.0 },
            )
            .unwrap();
            let sampled = (0..=200_000)
                .map(|i| {
                    let m = i as f64 * 1e-4;
                    (beta + 2.0) * m - m.powf(a)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((p.k_a() - sampled).abs() < 1e-6, "a={a} beta={beta}");
        }
        assert!((reference().k_a() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn saturating_derivatives_match_finite_differences() {
        let p = reference();
        for m in [0.0, 0.1, 1.0, 3.7] {
            let h = 1e-6;
            let fd_f = (p.eval_f(m + h) - p.eval_f((m - h).max(0.0))) / (m + h - (m - h).max(0.0));
            let fd_g = (p.eval_g(m + h) - p.eval_g((m - h).max(0.0))) / (m + h - (m - h).max(0.0));
            assert!((p.eval_df(m) - fd_f).abs() < 1e-5);
            assert!((p.eval_dg(m) - fd_g).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn nonlinearities_see_only_positive_part(m in -10.0f64..10.0) {
            let p = reference();
            prop_assert_eq!(p.eval_f(m), p.eval_f(m.max(0.0)));
            prop_assert_eq!(p.eval_g(m), p.eval_g(m.max(0.0)));
            let f = p.eval_f(m);
            prop_assert!((0.0..1.0).contains(&f));
        }

        #[test]
        fn equilibria_solve_the_steady_system(
            a in 1.01f64..6.0,
            eps0 in 0.001f64..5.0,
            delta in 0.01f64..5.0,
            beta in 0.01f64..5.0,
            r in 0.01f64..5.0,
        ) {
            let p = ModelParams::new(a, 1.0, eps0, delta, beta, Nonlinearity::Saturating { rate: r }).unwrap();
            for e in p.equilibria() {
                prop_assert!(e.residual(&p) < 1e-12);
                let (dm, dc, dd) = p.reaction_rhs(e.as_tuple());
                prop_assert!(dm.abs() < 1e-12 && dc.abs() < 1e-12 && dd.abs() < 1e-12);
            }
        }
    }
}
