//! Pseudo-spectral discretization with Neumann-adapted cosine series.

mod solver;
mod transform;

pub use solver::SpectralStepper;
pub use transform::{cos_forward, cos_inverse, Spectrum, Transforms};

use crate::grid::{Field, Grid};
use crate::model::ModelParams;

/// Differential operators evaluated in coefficient space.
pub struct SpectralOps {
    transforms: Transforms,
    buf_c: Vec<f64>,
    buf_x: Vec<f64>,
    buf_y: Vec<f64>,
}

impl SpectralOps {
    pub fn new(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            transforms: Transforms::new(grid),
            buf_c: vec![0.0; n],
            buf_x: vec![0.0; n],
            buf_y: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &Grid {
        self.transforms.grid()
    }

    pub fn transforms(&mut self) -> &mut Transforms {
        &mut self.transforms
    }

    pub fn cos_forward(&mut self, field: &Field) -> Spectrum {
        self.transforms.cos_forward(field)
    }

    pub fn cos_inverse(&mut self, spectrum: &Spectrum) -> Field {
        self.transforms.cos_inverse(spectrum)
    }

    /// Neumann Laplacian: coefficient `(p, q)` times `-λ_{p,q}`.
    pub fn laplacian(&mut self, field: &Field) -> Field {
        let grid = *self.grid();
        let mut buf = field.values().to_vec();
        self.transforms.forward_cos_in_place(&mut buf);
        let (kx, ky) = (self.transforms.kx(), self.transforms.ky());
        for (q, row) in buf.chunks_exact_mut(grid.nx()).enumerate() {
            for (p, v) in row.iter_mut().enumerate() {
                *v *= -(kx[p] * kx[p] + ky[q] * ky[q]);
            }
        }
        self.transforms.inverse_cos_in_place(&mut buf);
        Field::from_vec(grid, buf).expect("same grid")
    }

    /// `(∂x u, ∂y u)` at the nodes.
    pub fn gradient(&mut self, field: &Field) -> (Field, Field) {
        let grid = *self.grid();
        self.buf_c.copy_from_slice(field.values());
        self.gradient_of_buffer();
        (
            Field::from_vec(grid, self.buf_x.clone()).expect("same grid"),
            Field::from_vec(grid, self.buf_y.clone()).expect("same grid"),
        )
    }

    /// `∇·(f(m) ∇c)` without the `χ` factor.
    pub fn chemotaxis_divergence(&mut self, params: &ModelParams, m: &Field, c: &Field) -> Field {
        let grid = *self.grid();
        let mut out = vec![0.0; grid.len()];
        self.chemotaxis_divergence_into(params, m.values(), c.values(), &mut out);
        Field::from_vec(grid, out).expect("same grid")
    }

    /// Nodal `∂x`, `∂y` of `buf_c` into `buf_x`, `buf_y`.
    fn gradient_of_buffer(&mut self) {
        self.buf_x.copy_from_slice(&self.buf_c);
        self.buf_y.copy_from_slice(&self.buf_c);
        self.transforms
            .derivative_lines(&mut self.buf_x, true, true);
        self.transforms
            .derivative_lines(&mut self.buf_y, false, true);
    }

    pub(crate) fn chemotaxis_divergence_into(
        &mut self,
        params: &ModelParams,
        m: &[f64],
        c: &[f64],
        out: &mut [f64],
    ) {
        self.buf_c.copy_from_slice(c);
        self.gradient_of_buffer();
        for ((fx, fy), &mv) in self.buf_x.iter_mut().zip(self.buf_y.iter_mut()).zip(m) {
            let f = params.eval_f(mv);
            *fx *= f;
            *fy *= f;
        }
        self.transforms
            .derivative_lines(&mut self.buf_x, true, false);
        self.transforms
            .derivative_lines(&mut self.buf_y, false, false);
        for ((o, x), y) in out.iter_mut().zip(&self.buf_x).zip(&self.buf_y) {
            *o = x + y;
        }
    }
}

/// Neumann Laplacian of `field`.
pub fn laplacian(field: &Field) -> Field {
    SpectralOps::new(*field.grid()).laplacian(field)
}

/// `∇·(f(m) ∇c)`, without the `χ` factor.
pub fn chemotaxis_divergence(params: &ModelParams, m: &Field, c: &Field) -> Field {
    SpectralOps::new(*m.grid()).chemotaxis_divergence(params, m, c)
}
