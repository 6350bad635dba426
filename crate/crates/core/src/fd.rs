//! Second-order finite-volume / finite-difference method of lines.
//!
//! Cell-centred unknowns on the same node set as the spectral grid. The
//! Neumann condition is closed with mirrored ghost cells, i.e. zero flux
//! through every boundary face. Time integration is explicit midpoint RK2
//! on the full semidiscrete system. This solver exists to cross-check the
//! spectral one and shares none of its code paths beyond the grid types.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, State};
use crate::model::ModelParams;
use crate::simulation::{Advisory, SimConfig, StepReport, Stepper, Terms};

/// Cell-centred grid with ghost-cell Neumann closure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdGrid {
    grid: Grid,
}

impl FdGrid {
    pub fn new(grid: Grid) -> Self {
        Self { grid }
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn hx(&self) -> f64 {
        self.grid.hx()
    }
    pub fn hy(&self) -> f64 {
        self.grid.hy()
    }
    /// Largest stable explicit step, `0.2 h² / max(1, ε0)`.
    pub fn cfl_dt(&self, eps0: f64) -> f64 {
        let h = self.hx().min(self.hy());
        0.2 * h * h / eps0.max(1.0)
    }
}

/// Five-point Laplacian with mirrored ghosts.
pub fn fd_laplacian(field: &Field) -> Field {
    let g = *field.grid();
    let mut out = vec![0.0; g.len()];
    laplacian_into(&g, field.values(), &mut out);
    Field::from_vec(g, out).expect("same grid")
}

fn laplacian_into(g: &Grid, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx(), g.ny());
    let (ix2, iy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    for j in 0..ny {
        let jm = if j == 0 { 0 } else { j - 1 };
        let jp = if j + 1 == ny { j } else { j + 1 };
        for i in 0..nx {
            let im = if i == 0 { 0 } else { i - 1 };
            let ip = if i + 1 == nx { i } else { i + 1 };
            let c = u[j * nx + i];
            out[j * nx + i] = (u[j * nx + ip] - 2.0 * c + u[j * nx + im]) * ix2
                + (u[jp * nx + i] - 2.0 * c + u[jm * nx + i]) * iy2;
        }
    }
}

/// Conservative `∇·(f(m)∇c)` (no `χ`), arithmetic-mean face values of `f(m)`.
pub fn fd_chemotaxis(params: &ModelParams, m: &Field, c: &Field) -> Field {
    let g = *m.grid();
    let mut out = vec![0.0; g.len()];
    let mut fm = vec![0.0; g.len()];
    chemotaxis_into(params, &g, m.values(), c.values(), &mut fm, &mut out);
    Field::from_vec(g, out).expect("same grid")
}

fn chemotaxis_into(
    params: &ModelParams,
    g: &Grid,
    m: &[f64],
    c: &[f64],
    fm: &mut [f64],
    out: &mut [f64],
) {
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    for (f, &mv) in fm.iter_mut().zip(m) {
        *f = params.eval_f(mv);
    }
    out.fill(0.0);
    // x faces between i and i+1; boundary faces carry no flux
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx - 1 {
            let (a, b) = (row + i, row + i + 1);
            let flux = 0.5 * (fm[a] + fm[b]) * (c[b] - c[a]) / hx;
            out[a] += flux / hx;
            out[b] -= flux / hx;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let (a, b) = (j * nx + i, (j + 1) * nx + i);
            let flux = 0.5 * (fm[a] + fm[b]) * (c[b] - c[a]) / hy;
            out[a] += flux / hy;
            out[b] -= flux / hy;
        }
    }
}

/// Explicit RK2 integrator for the full system.
pub struct FdStepper {
    params: ModelParams,
    terms: Terms,
    grid: Grid,
    /// Output step; split into `substeps` CFL-limited steps.
    dt: f64,
    substeps: usize,
    state: State,
    m_cap: f64,
    work: Work,
}

struct Work {
    m: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    fm: Vec<f64>,
    fc: Vec<f64>,
    fd: Vec<f64>,
    lap: Vec<f64>,
    chem: Vec<f64>,
    fvals: Vec<f64>,
}

impl FdStepper {
    pub fn new(config: &SimConfig, initial: State) -> Result<Self> {
        config.validate()?;
        if initial.grid() != &config.grid {
            return Err(Error::Validation(
                "initial state is on a different grid".into(),
            ));
        }
        let cfl = FdGrid::new(config.grid).cfl_dt(config.params.eps0());
        let substeps = (config.dt / cfl).ceil().max(1.0) as usize;
        let n = config.grid.len();
        Ok(Self {
            params: config.params.clone(),
            terms: config.terms,
            grid: config.grid,
            dt: config.dt,
            substeps,
            m_cap: 10.0 * initial.m.max().max(1.0),
            state: initial,
            work: Work {
                m: vec![0.0; n],
                c: vec![0.0; n],
                d: vec![0.0; n],
                fm: vec![0.0; n],
                fc: vec![0.0; n],
                fd: vec![0.0; n],
                lap: vec![0.0; n],
                chem: vec![0.0; n],
                fvals: vec![0.0; n],
            },
        })
    }

    /// Internal step actually taken.
    pub fn substep_dt(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    fn rhs(&mut self) {
        let w = &mut self.work;
        let p = &self.params;
        let eps0 = p.eps0();
        laplacian_into(&self.grid, &w.m, &mut w.lap);
        for i in 0..w.fm.len() {
            w.fm[i] = w.lap[i];
        }
        laplacian_into(&self.grid, &w.c, &mut w.lap);
        for i in 0..w.fc.len() {
            w.fc[i] = eps0 * w.lap[i];
        }
        if self.terms.chemotaxis {
            chemotaxis_into(p, &self.grid, &w.m, &w.c, &mut w.fvals, &mut w.chem);
            let chi = p.chi();
            for (f, ch) in w.fm.iter_mut().zip(&w.chem) {
                *f -= chi * ch;
            }
        }
        if self.terms.reaction {
            for i in 0..w.m.len() {
                let (rm, rc, rd) = p.reaction_rhs((w.m[i], w.c[i], w.d[i]));
                w.fm[i] += rm;
                w.fc[i] += rc;
                w.fd[i] = rd;
            }
        } else {
            w.fd.fill(0.0);
        }
    }

    fn substep(&mut self, h: f64) {
        self.work.m.copy_from_slice(self.state.m.values());
        self.work.c.copy_from_slice(self.state.c.values());
        self.work.d.copy_from_slice(self.state.d.values());
        self.rhs();
        {
            let w = &mut self.work;
            let (m0, c0, d0) = (
                self.state.m.values(),
                self.state.c.values(),
                self.state.d.values(),
            );
            for i in 0..w.m.len() {
                w.m[i] = m0[i] + 0.5 * h * w.fm[i];
                w.c[i] = c0[i] + 0.5 * h * w.fc[i];
                w.d[i] = d0[i] + 0.5 * h * w.fd[i];
            }
        }
        self.rhs();
        let w = &self.work;
        for (v, f) in self.state.m.values_mut().iter_mut().zip(&w.fm) {
            *v += h * f;
        }
        for (v, f) in self.state.c.values_mut().iter_mut().zip(&w.fc) {
            *v += h * f;
        }
        for (v, f) in self.state.d.values_mut().iter_mut().zip(&w.fd) {
            *v += h * f;
        }
    }

    /// Sum over cells of the logistic term at the midpoint stage of the last
    /// substep, times the cell area. Used by the conservation check.
    pub fn last_stage_logistic_integral(&self) -> f64 {
        let p = &self.params;
        self.work.m.iter().map(|&m| p.logistic(m)).sum::<f64>() * self.grid.cell_area()
    }

    /// One internal substep; exposed for conservation tests.
    pub fn raw_substep(&mut self) {
        let h = self.substep_dt();
        self.substep(h);
        self.state.t += h;
    }
}

impl Stepper for FdStepper {
    fn state(&self) -> &State {
        &self.state
    }

    fn step(&mut self) -> Result<StepReport> {
        let h = self.substep_dt();
        let t0 = self.state.t;
        for k in 0..self.substeps {
            self.substep(h);
            self.state.t = t0 + (k + 1) as f64 * h;
        }
        self.state.t = t0 + self.dt;
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
                message: format!("max m = {m_max:.6e} exceeds 10x the initial scale"),
            });
            self.m_cap = 10.0 * m_max;
        }
        Ok(report)
    }
}

/// Runs the finite-difference solver on `config` (its `solver` field is ignored).
pub fn fd_simulate(config: &SimConfig) -> Result<crate::simulation::Trajectory> {
    let mut cfg = config.clone();
    cfg.solver = crate::simulation::SolverKind::Fd;
    crate::simulation::simulate(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RectDomain;
    use crate::model::Equilibrium;
    use crate::simulation::{CosineField, InitialCondition};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Grid {
        Grid::new(RectDomain::pi_square(), n, n).unwrap()
    }

    fn observed_order(e_coarse: f64, e_fine: f64) -> f64 {
        (e_coarse / e_fine).log2()
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = grid(8);
        assert_eq!(fd_laplacian(&Field::constant(g, 4.2)).max_abs(), 0.0);
    }

    #[test]
    fn laplacian_is_second_order() {
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let u = Field::from_fn(g, |x, _| x.cos());
                fd_laplacian(&u).max_abs_diff(&u.map(|v| -v))
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.8..4.2).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn laplacian_conserves_mass() {
        let g = grid(16);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = Field::from_fn(g, |_, _| rng.random_range(0.0..5.0));
        assert!(fd_laplacian(&u).integral().abs() < 1e-12);
    }

    #[test]
    fn chemotaxis_trivial_and_conservative() {
        let g = grid(16);
        let p = ModelParams::reference(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = Field::from_fn(g, |_, _| rng.random_range(0.0..3.0));
        let c = Field::from_fn(g, |_, _| rng.random_range(0.0..3.0));
        assert_eq!(
            fd_chemotaxis(&p, &m, &Field::constant(g, 2.0)).max_abs(),
            0.0
        );
        assert!(fd_chemotaxis(&p, &m, &c).integral().abs() < 1e-12);
    }

    #[test]
    fn chemotaxis_with_constant_m_converges_at_second_order() {
        let p = ModelParams::reference(3.0);
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let m = Field::constant(g, 0.7);
                let c = Field::from_fn(g, |x, y| (2.0 * x).cos() * y.cos());
                let f = 0.7 / 1.7;
                let exact = c.map(|v| -5.0 * f * v);
                fd_chemotaxis(&p, &m, &c).max_abs_diff(&exact)
            })
            .collect();
        for w in errs.windows(2) {
            let order = observed_order(w[0], w[1]);
            assert!((1.8..2.2).contains(&order), "order {order}");
        }
    }

    #[test]
    fn chemotaxis_manufactured_variable_m_order() {
        let p = ModelParams::reference(3.0);
        let exact_at = |x: f64, y: f64| {
            let mv = 1.0 + 0.3 * x.cos() * y.cos();
            let (mx, my) = (-0.3 * x.sin() * y.cos(), -0.3 * x.cos() * y.sin());
            let (cx, cy) = (-2.0 * (2.0 * x).sin() * y.cos(), -(2.0 * x).cos() * y.sin());
            let lap_c = -5.0 * (2.0 * x).cos() * y.cos();
            let f = mv / (1.0 + mv);
            let df = 1.0 / ((1.0 + mv) * (1.0 + mv));
            f * lap_c + df * (mx * cx + my * cy)
        };
        let errs: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let m = Field::from_fn(g, |x, y| 1.0 + 0.3 * x.cos() * y.cos());
                let c = Field::from_fn(g, |x, y| (2.0 * x).cos() * y.cos());
                let exact = Field::from_fn(g, exact_at);
                fd_chemotaxis(&p, &m, &c).l2_dist_sq(&exact).sqrt()
            })
            .collect();
        let order = observed_order(errs[2], errs[3]);
        assert!((1.8..2.2).contains(&order), "order {order} from {errs:?}");
    }

    #[test]
    fn agrees_with_spectral_operator_as_grids_refine() {
        let p = ModelParams::reference(3.0);
        let mut prev = f64::INFINITY;
        for n in [16, 32, 64] {
            let g = grid(n);
            let m = Field::from_fn(g, |x, y| 1.0 + 0.4 * x.cos() * (3.0 * y).cos());
            let c = Field::from_fn(g, |x, y| 2.0 + (2.0 * x).cos() * y.cos());
            let fd = fd_chemotaxis(&p, &m, &c);
            let sp = crate::spectral::chemotaxis_divergence(&p, &m, &c);
            let rel = (fd.l2_dist_sq(&sp) / sp.l2_norm_sq()).sqrt();
            assert!(rel < prev / 3.0, "n={n} rel={rel}");
            prev = rel;
        }
        assert!(prev < 1e-2);
    }

    fn config(n: usize) -> SimConfig {
        let mut cfg = SimConfig::new(ModelParams::reference(1.0), grid(n));
        cfg.dt = 1e-3;
        cfg
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let cfg = config(16);
        let eq = Equilibrium::positive(&cfg.params).as_tuple();
        let mut s = FdStepper::new(&cfg, State::uniform(cfg.grid, eq)).unwrap();
        for _ in 0..5 {
            let before = s.state().clone();
            s.step().unwrap();
            assert!(s.state().max_abs_diff(&before) <= 1e-13);
        }
    }

    #[test]
    fn mass_changes_only_through_logistic_term() {
        let mut cfg = config(16);
        cfg.ic = InitialCondition::FarField {
            m: CosineField::constant(1.5).with_term(1, 2, 1.0),
            c: CosineField::constant(1.0).with_term(3, 0, 0.5),
            d: CosineField::constant(0.2),
        };
        let mut s = FdStepper::new(&cfg, cfg.initial_state().unwrap()).unwrap();
        let h = s.substep_dt();
        for _ in 0..50 {
            let before = s.state().m.integral();
            s.raw_substep();
            let after = s.state().m.integral();
            let source = h * s.last_stage_logistic_integral();
            let change = after - before;
            assert!((change - source).abs() <= 1e-10 * source.abs().max(before.abs() * 1e-3));
        }
    }

    #[test]
    fn cfl_substeps() {
        let cfg = config(128);
        let s = FdStepper::new(&cfg, cfg.initial_state().unwrap()).unwrap();
        let h = (std::f64::consts::PI / 128.0).powi(2);
        assert!(s.substep_dt() <= 0.2 * h + 1e-18);
    }
}
