//! Cosine / sine series on the cell-centred grid.
//!
//! A nodal field `u` is represented as
//!
//! ```text
//! u(x_i, y_j) = Σ_{p<nx} Σ_{q<ny} a[p,q] cos(pπ x_i/Lx) cos(qπ y_j/Ly)
//! ```
//!
//! which is the DCT-II / DCT-III pair along each axis. Derivatives move
//! one axis into the sine family `sin(pπx/Lx)`, `p = 1..=nx`, handled by
//! the DST-II / DST-III pair. Sine coefficient `p` is stored in slot `p-1`.
//!
//! Raw 1-D transforms come from `rustdct`; everything here is about
//! normalization and the 2-D layout.

use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::grid::{Field, Grid};

/// Coefficients of a field in the Neumann cosine basis, layout `[q * nx + p]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<f64>,
}

impl Spectrum {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![0.0; grid.len()],
        }
    }

    /// Single unit coefficient at `(p, q)`.
    pub fn delta(grid: Grid, p: usize, q: usize) -> Self {
        let mut s = Self::zeros(grid);
        s.coeffs[q * grid.nx() + p] = 1.0;
        s
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn at(&self, p: usize, q: usize) -> f64 {
        self.coeffs[q * self.grid.nx() + p]
    }

    pub fn set(&mut self, p: usize, q: usize, value: f64) {
        let nx = self.grid.nx();
        self.coeffs[q * nx + p] = value;
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Mean square of the `(p, q)` term over the domain.
    pub fn mode_energy(&self, p: usize, q: usize) -> f64 {
        let w = |k: usize| if k == 0 { 1.0 } else { 0.5 };
        w(p) * w(q) * self.at(p, q).powi(2)
    }

    /// Mean square of the field minus its mean, mode by mode.
    pub fn fluctuation_energy(&self) -> f64 {
        let nx = self.grid.nx();
        (0..self.grid.ny())
            .flat_map(|q| (0..nx).map(move |p| (p, q)))
            .skip(1)
            .map(|(p, q)| self.mode_energy(p, q))
            .sum()
    }

    /// Evaluates the cosine series at an arbitrary point of the domain.
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        let dom = self.grid.domain();
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let cx: Vec<f64> = (0..nx)
            .map(|p| (dom.wavenumbers(p, 0).0 * x).cos())
            .collect();
        let mut total = 0.0;
        for q in 0..ny {
            let cy = (dom.wavenumbers(0, q).1 * y).cos();
            let row = &self.coeffs[q * nx..(q + 1) * nx];
            let s: f64 = row.iter().zip(&cx).map(|(a, b)| a * b).sum();
            total += s * cy;
        }
        total
    }

    /// Resamples the series on another grid over the same domain.
    pub fn interpolate(&self, target: Grid) -> Field {
        Field::from_fn(target, |x, y| self.evaluate(x, y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kind {
    Dct2,
    Dct3,
}

/// Planned transforms plus scratch space for one grid.
pub struct Transforms {
    grid: Grid,
    plan_x: Arc<dyn TransformType2And3<f64>>,
    plan_y: Arc<dyn TransformType2And3<f64>>,
    scratch: Vec<f64>,
    column: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
}

impl Transforms {
    pub fn new(grid: Grid) -> Self {
        let mut planner = DctPlanner::new();
        let plan_x = planner.plan_dct2(grid.nx());
        let plan_y = planner.plan_dct2(grid.ny());
        let scratch_len = plan_x.get_scratch_len().max(plan_y.get_scratch_len());
        let dom = grid.domain();
        Self {
            grid,
            plan_x,
            plan_y,
            scratch: vec![0.0; scratch_len],
            column: vec![0.0; grid.ny()],
            kx: (0..=grid.nx()).map(|p| dom.wavenumbers(p, 0).0).collect(),
            ky: (0..=grid.ny()).map(|q| dom.wavenumbers(0, q).1).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Wavenumber `pπ/Lx` for `p ≤ nx`.
    pub(crate) fn kx(&self) -> &[f64] {
        &self.kx
    }

    pub(crate) fn ky(&self) -> &[f64] {
        &self.ky
    }

    fn run(plan: &dyn TransformType2And3<f64>, kind: Kind, buf: &mut [f64], scratch: &mut [f64]) {
        match kind {
            Kind::Dct2 => plan.process_dct2_with_scratch(buf, scratch),
            Kind::Dct3 => plan.process_dct3_with_scratch(buf, scratch),
        }
    }

    /// Unnormalized separable transform, in place.
    pub(crate) fn apply(&mut self, buf: &mut [f64], along_x: Kind, along_y: Kind) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        debug_assert_eq!(buf.len(), nx * ny);
        let scratch = &mut self.scratch[..];
        for row in buf.chunks_exact_mut(nx) {
            Self::run(&*self.plan_x, along_x, row, scratch);
        }
        let col = &mut self.column;
        for i in 0..nx {
            for j in 0..ny {
                col[j] = buf[j * nx + i];
            }
            Self::run(&*self.plan_y, along_y, col, scratch);
            for j in 0..ny {
                buf[j * nx + i] = col[j];
            }
        }
    }

    /// One-dimensional spectral derivative along every row (`x`) or column
    /// (`y`). With `from_cos` the input is differentiated as a cosine series
    /// and the nodal values of the resulting sine series are returned;
    /// otherwise the input is a sine series and the output a cosine series.
    /// The top sine mode is dropped because it vanishes at the nodes.
    pub(crate) fn derivative_lines(&mut self, buf: &mut [f64], along_x: bool, from_cos: bool) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let scratch = &mut self.scratch[..];
        if along_x {
            for row in buf.chunks_exact_mut(nx) {
                diff_line(&*self.plan_x, row, scratch, &self.kx, from_cos);
            }
        } else {
            let col = &mut self.column;
            for i in 0..nx {
                for j in 0..ny {
                    col[j] = buf[j * nx + i];
                }
                diff_line(&*self.plan_y, col, scratch, &self.ky, from_cos);
                for j in 0..ny {
                    buf[j * nx + i] = col[j];
                }
            }
        }
    }

    /// Nodal values to cosine coefficients, in place.
    pub(crate) fn forward_cos_in_place(&mut self, buf: &mut [f64]) {
        self.apply(buf, Kind::Dct2, Kind::Dct2);
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (wx0, wx) = (1.0 / nx as f64, 2.0 / nx as f64);
        let (wy0, wy) = (1.0 / ny as f64, 2.0 / ny as f64);
        for (q, row) in buf.chunks_exact_mut(nx).enumerate() {
            let sy = if q == 0 { wy0 } else { wy };
            row[0] *= wx0 * sy;
            for v in &mut row[1..] {
                *v *= wx * sy;
            }
        }
    }

    /// Cosine coefficients to nodal values, in place.
    pub(crate) fn inverse_cos_in_place(&mut self, buf: &mut [f64]) {
        let nx = self.grid.nx();
        // DCT-III halves the zeroth input
        for (q, row) in buf.chunks_exact_mut(nx).enumerate() {
            if q == 0 {
                for v in row.iter_mut() {
                    *v *= 2.0;
                }
            }
            row[0] *= 2.0;
        }
        self.apply(buf, Kind::Dct3, Kind::Dct3);
    }

    pub fn cos_forward(&mut self, field: &Field) -> Spectrum {
        debug_assert_eq!(field.grid(), &self.grid);
        let mut coeffs = field.values().to_vec();
        self.forward_cos_in_place(&mut coeffs);
        Spectrum {
            grid: self.grid,
            coeffs,
        }
    }

    pub fn cos_inverse(&mut self, spectrum: &Spectrum) -> Field {
        let mut values = spectrum.coeffs.clone();
        self.inverse_cos_in_place(&mut values);
        Field::from_vec(self.grid, values).expect("spectrum matches grid")
    }
}

fn diff_line(
    plan: &dyn TransformType2And3<f64>,
    line: &mut [f64],
    scratch: &mut [f64],
    k: &[f64],
    from_cos: bool,
) {
    let n = line.len();
    let w = 2.0 / n as f64;
    if from_cos {
        plan.process_dct2_with_scratch(line, scratch);
        // ∂ cos(k_p x) = -k_p sin(k_p x): cosine p lands in sine slot p - 1
        for p in 1..n {
            line[p - 1] = -k[p] * w * line[p];
        }
        line[n - 1] = 0.0;
        plan.process_dst3_with_scratch(line, scratch);
    } else {
        plan.process_dst2_with_scratch(line, scratch);
        for p in (1..n).rev() {
            line[p] = k[p] * w * line[p - 1];
        }
        line[0] = 0.0;
        plan.process_dct3_with_scratch(line, scratch);
    }
}

/// Cosine coefficients of `field` (plans a transform for its grid).
pub fn cos_forward(field: &Field) -> Spectrum {
    Transforms::new(*field.grid()).cos_forward(field)
}

/// Nodal values of a cosine series.
pub fn cos_inverse(spectrum: &Spectrum) -> Field {
    Transforms::new(spectrum.grid).cos_inverse(spectrum)
}
