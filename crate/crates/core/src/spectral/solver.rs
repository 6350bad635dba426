//! Strang-split IMEX stepper.
//!
//! One step of size `dt` is
//!
//! 1. half a Crank-Nicolson step of the diffusion `Δm`, `ε0 Δc`, done
//!    mode by mode in cosine space,
//! 2. a full explicit midpoint (RK2) step of the reactions and the
//!    chemotaxis term `-χ ∇·(f(m)∇c)` for all three fields,
//! 3. the second diffusion half step.
//!
//! `d` does not diffuse and only moves in stage 2.

use super::SpectralOps;
use crate::error::{Error, Result};
use crate::grid::State;
use crate::model::ModelParams;
use crate::simulation::{Advisory, SimConfig, StepReport, Stepper, Terms};

pub struct SpectralStepper {
    params: ModelParams,
    terms: Terms,
    dt: f64,
    dealias: Option<Vec<bool>>,
    state: State,
    ops: SpectralOps,
    /// Per-mode half-step amplification for `m` and `c`.
    half_m: Vec<f64>,
    half_c: Vec<f64>,
    m_cap: f64,
    stage: Stage,
    /// Cosine coefficients of the current `m`, `c`, kept from the trailing
    /// half step so the next leading half step skips its forward transforms.
    m_hat: Vec<f64>,
    c_hat: Vec<f64>,
    hat_valid: bool,
}

/// Work arrays for the explicit stage.
struct Stage {
    m: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    fm: Vec<f64>,
    fc: Vec<f64>,
    fd: Vec<f64>,
    div: Vec<f64>,
}

impl Stage {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            c: vec![0.0; n],
            d: vec![0.0; n],
            fm: vec![0.0; n],
            fc: vec![0.0; n],
            fd: vec![0.0; n],
            div: vec![0.0; n],
        }
    }
}

impl SpectralStepper {
    pub fn new(config: &SimConfig, initial: State) -> Result<Self> {
        config.validate()?;
        let grid = config.grid;
        if initial.grid() != &grid {
            return Err(Error::Validation(
                "initial state is on a different grid".into(),
            ));
        }
        let ops = SpectralOps::new(grid);
        let dom = grid.domain();
        let tau = 0.5 * config.dt;
        let eps0 = config.params.eps0();
        let mut half_m = Vec::with_capacity(grid.len());
        let mut half_c = Vec::with_capacity(grid.len());
        for q in 0..grid.ny() {
            for p in 0..grid.nx() {
                let lam = dom.eigenvalue(p, q);
                half_m.push(cn_factor(tau * lam));
                half_c.push(cn_factor(tau * eps0 * lam));
            }
        }
        let dealias = config.dealias.then(|| {
            let (px, qy) = (2 * grid.nx() / 3, 2 * grid.ny() / 3);
            (0..grid.ny())
                .flat_map(|q| (0..grid.nx()).map(move |p| p < px && q < qy))
                .collect()
        });
        Ok(Self {
            params: config.params.clone(),
            terms: config.terms,
            dt: config.dt,
            dealias,
            m_cap: 10.0 * initial.m.max().max(1.0),
            state: initial,
            ops,
            half_m,
            half_c,
            stage: Stage::new(grid.len()),
            m_hat: vec![0.0; grid.len()],
            c_hat: vec![0.0; grid.len()],
            hat_valid: false,
        })
    }

    fn diffuse_half_leading(&mut self) {
        if !self.hat_valid {
            self.diffuse_half_trailing();
            self.hat_valid = false;
            return;
        }
        self.hat_valid = false;
        let t = self.ops.transforms();
        for (field, hat, factors) in [
            (&mut self.state.m, &mut self.m_hat, &self.half_m),
            (&mut self.state.c, &mut self.c_hat, &self.half_c),
        ] {
            for (v, k) in hat.iter_mut().zip(factors) {
                *v *= k;
            }
            let buf = field.values_mut();
            buf.copy_from_slice(hat);
            t.inverse_cos_in_place(buf);
        }
    }

    fn diffuse_half_trailing(&mut self) {
        let t = self.ops.transforms();
        for (field, hat, factors) in [
            (&mut self.state.m, &mut self.m_hat, &self.half_m),
            (&mut self.state.c, &mut self.c_hat, &self.half_c),
        ] {
            let buf = field.values_mut();
            t.forward_cos_in_place(buf);
            for (v, k) in buf.iter_mut().zip(factors) {
                *v *= k;
            }
            hat.copy_from_slice(buf);
            t.inverse_cos_in_place(buf);
        }
        self.hat_valid = true;
    }

    /// Explicit right-hand side at `(stage.m, stage.c, stage.d)` into `stage.f*`.
    fn explicit_rhs(&mut self) {
        let st = &mut self.stage;
        let p = &self.params;
        if self.terms.chemotaxis {
            self.ops
                .chemotaxis_divergence_into(p, &st.m, &st.c, &mut st.div);
        } else {
            st.div.fill(0.0);
        }
        let chi = p.chi();
        for i in 0..st.m.len() {
            let (rm, rc, rd) = if self.terms.reaction {
                p.reaction_rhs((st.m[i], st.c[i], st.d[i]))
            } else {
                (0.0, 0.0, 0.0)
            };
            st.fm[i] = rm - chi * st.div[i];
            st.fc[i] = rc;
            st.fd[i] = rd;
        }
        if let Some(mask) = &self.dealias {
            let t = self.ops.transforms();
            for buf in [&mut st.fm, &mut st.fc, &mut st.fd] {
                t.forward_cos_in_place(buf);
                for (v, keep) in buf.iter_mut().zip(mask) {
                    if !keep {
                        *v = 0.0;
                    }
                }
                t.inverse_cos_in_place(buf);
            }
        }
    }

    fn react_full(&mut self) {
        let dt = self.dt;
        let (m0, c0, d0) = (
            self.state.m.values(),
            self.state.c.values(),
            self.state.d.values(),
        );
        self.stage.m.copy_from_slice(m0);
        self.stage.c.copy_from_slice(c0);
        self.stage.d.copy_from_slice(d0);
        self.explicit_rhs();
        {
            let st = &mut self.stage;
            let (m0, c0, d0) = (
                self.state.m.values(),
                self.state.c.values(),
                self.state.d.values(),
            );
            for i in 0..st.m.len() {
                st.m[i] = m0[i] + 0.5 * dt * st.fm[i];
                st.c[i] = c0[i] + 0.5 * dt * st.fc[i];
                st.d[i] = d0[i] + 0.5 * dt * st.fd[i];
            }
        }
        self.explicit_rhs();
        let st = &self.stage;
        for (v, f) in self.state.m.values_mut().iter_mut().zip(&st.fm) {
            *v += dt * f;
        }
        for (v, f) in self.state.c.values_mut().iter_mut().zip(&st.fc) {
            *v += dt * f;
        }
        for (v, f) in self.state.d.values_mut().iter_mut().zip(&st.fd) {
            *v += dt * f;
        }
    }

    pub fn into_state(self) -> State {
        self.state
    }
}

/// Crank-Nicolson amplification `(1 - z/2)/(1 + z/2)` for `u' = -(z/τ) u`.
fn cn_factor(z: f64) -> f64 {
    (1.0 - 0.5 * z) / (1.0 + 0.5 * z)
}

impl Stepper for SpectralStepper {
    fn state(&self) -> &State {
        &self.state
    }

    fn step(&mut self) -> Result<StepReport> {
        self.diffuse_half_leading();
        self.react_full();
        self.diffuse_half_trailing();
        self.state.t += self.dt;
        if let Some(field) = self.state.first_non_finite() {
            return Err(Error::NonFinite {
                field,
                t: self.state.t,
            });
        }
        let mut report = StepReport::default();
        let m_max = self.state.m.max();
        if m_max > self.m_cap {
            report.advisory = Some(Advisory {
                t: self.state.t,
                message: format!(
                    "max m = {m_max:.6e} exceeds 10x the initial scale; dt = {} may be too large",
                    self.dt
                ),
            });
            self.m_cap = 10.0 * m_max;
        }
        Ok(report)
    }
}

impl SpectralStepper {
    /// Runs `n` steps from the current state.
    pub fn advance(&mut self, n: usize) -> Result<&State> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(&self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, RectDomain};
    use crate::model::Equilibrium;
    use crate::simulation::{CosineField, InitialCondition};
    use crate::spectral::cos_forward;

    fn config(n: usize, chi: f64) -> SimConfig {
        let grid = Grid::new(RectDomain::pi_square(), n, n).unwrap();
        SimConfig::new(ModelParams::reference(chi), grid)
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let cfg = config(32, 3.18);
        let eq = Equilibrium::positive(&cfg.params).as_tuple();
        let start = State::uniform(cfg.grid, eq);
        let mut s = SpectralStepper::new(&cfg, start.clone()).unwrap();
        for _ in 0..20 {
            let before = s.state().clone();
            s.step().unwrap();
            assert!(s.state().max_abs_diff(&before) <= 1e-13);
        }
    }

    #[test]
    fn pure_diffusion_mode_decays_at_cn_rate() {
        let mut cfg = config(16, 1.0);
        cfg.terms = Terms {
            reaction: false,
            chemotaxis: false,
        };
        cfg.dt = 0.01;
        let amp = 0.1;
        cfg.ic = InitialCondition::FarField {
            m: CosineField::constant(1.0).with_term(2, 1, amp),
            c: CosineField::constant(2.0).with_term(2, 1, amp),
            d: CosineField::constant(1.0),
        };
        let lam = 5.0;
        let mut s = SpectralStepper::new(&cfg, cfg.initial_state().unwrap()).unwrap();
        let mut prev = amp;
        for _ in 0..10 {
            s.step().unwrap();
            let a = cos_forward(&s.state().m).at(2, 1);
            let ratio = a / prev;
            // two half steps of CN
            let expected = cn_factor(0.5 * cfg.dt * lam).powi(2);
            assert!((ratio - expected).abs() < 1e-13);
            // local error against the exact semigroup is O(dt³)
            assert!((ratio - (-lam * cfg.dt).exp()).abs() < (lam * cfg.dt).powi(3));
            prev = a;
        }
        // c diffuses with ε0
        let ac = cos_forward(&s.state().c).at(2, 1);
        let expected_c = amp * cn_factor(0.5 * cfg.dt * lam * 0.03125).powi(20);
        assert!((ac - expected_c).abs() < 1e-13);
    }

    #[test]
    fn oversized_step_raises_advisory() {
        let mut cfg = config(8, 1.0);
        cfg.dt = 10.0;
        cfg.ic = InitialCondition::FarField {
            m: CosineField::constant(5.0).with_term(1, 1, 4.0),
            c: CosineField::constant(1.0),
            d: CosineField::constant(0.0),
        };
        let mut s = SpectralStepper::new(&cfg, cfg.initial_state().unwrap()).unwrap();
        let advisories = (0..5)
            .filter_map(|_| s.step().unwrap().advisory)
            .collect::<Vec<_>>();
        assert!(!advisories.is_empty());
    }

    #[test]
    fn detects_blow_up() {
        use crate::model::{CustomNonlinearity, Nonlinearity};
        let nl = CustomNonlinearity::new(|m| m / (1.0 + m), |m| m.exp());
        let params =
            ModelParams::new(3.0, 1.0, 0.03125, 1.0, 1.0, Nonlinearity::Custom(nl)).unwrap();
        let mut cfg = config(8, 1.0);
        cfg.params = params;
        cfg.dt = 10.0;
        cfg.ic = InitialCondition::FarField {
            m: CosineField::constant(5.0).with_term(1, 1, 4.0),
            c: CosineField::constant(1.0),
            d: CosineField::constant(0.0),
        };
        let mut s = SpectralStepper::new(&cfg, cfg.initial_state().unwrap()).unwrap();
        let err = (0..50).find_map(|_| s.step().err()).expect("run must fail");
        match err {
            Error::NonFinite { t, .. } => assert!(t > 0.0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn dealiased_run_stays_close_for_resolved_data() {
        let mut cfg = config(32, 1.0);
        cfg.ic = InitialCondition::FarField {
            m: CosineField::constant(1.0).with_term(1, 1, 0.1),
            c: CosineField::constant(2.0),
            d: CosineField::constant(1.0),
        };
        let mut plain = SpectralStepper::new(&cfg, cfg.initial_state().unwrap()).unwrap();
        cfg.dealias = true;
        let mut filtered = SpectralStepper::new(&cfg, cfg.initial_state().unwrap()).unwrap();
        plain.advance(200).unwrap();
        filtered.advance(200).unwrap();
        assert!(plain.state().max_abs_diff(filtered.state()) < 1e-8);
    }
}
