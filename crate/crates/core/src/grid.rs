//! Cell-centered rectangular grid and the discrete calculus built on it.
//!
//! Cells are indexed row-major as `i + nx * j`. Homogeneous Neumann
//! conditions are imposed through ghost-cell reflection, which is the same
//! as giving every boundary face zero flux. With this choice the sampled
//! cosines `cos(k pi x / lx)` are exact eigenvectors of the discrete
//! Laplacian and the discrete divergence theorem holds to round-off.

use crate::error::{Error, Result};

/// Rectangular domain `[0, lx] x [0, ly]` split into `nx * ny` equal cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::Configuration(format!(
                "grid needs at least 3 cells per direction, got {nx} x {ny}"
            )));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(Error::Configuration(format!(
                "domain lengths must be positive and finite, got {lx} x {ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn h_min(&self) -> f64 {
        self.hx.min(self.hy)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// `|Omega| = lx * ly`.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    /// Cell center `((i + 1/2) hx, (j + 1/2) hy)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// Number of x-faces including the two boundary columns: `(nx + 1) * ny`.
    pub fn x_face_count(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    /// Number of y-faces including the two boundary rows: `nx * (ny + 1)`.
    pub fn y_face_count(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    fn check(&self, f: &Field) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::Configuration(format!(
                "field has {} values but grid has {} x {} = {} cells",
                f.len(),
                self.nx,
                self.ny,
                self.len()
            )));
        }
        Ok(())
    }
}

/// One scalar value per cell, row-major by `i + nx * j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid2D, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
        }
    }

    pub fn from_vec(grid: &Grid2D, values: Vec<f64>) -> Result<Self> {
        let f = Self { values };
        grid.check(&f)?;
        if let Some(k) = f.values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Configuration(format!(
                "non-finite value {} in cell {k}",
                f.values[k]
            )));
        }
        Ok(f)
    }

    /// Samples `f(x, y)` at every cell center.
    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |f - c|`.
    pub fn max_deviation(&self, c: f64) -> f64 {
        self.values.iter().fold(0.0, |m, &x| m.max((x - c).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Face-centered normal derivatives. Index `i + (nx + 1) * j` addresses the
/// x-face on the left of cell `(i, j)` (so `i = nx` is the right boundary);
/// `i + nx * j` addresses the y-face below cell `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Midpoint quadrature `hx * hy * sum(f)`.
pub fn integrate(f: &Field, grid: &Grid2D) -> Result<f64> {
    grid.check(f)?;
    Ok(grid.cell_area() * f.values.iter().sum::<f64>())
}

/// Five-point Neumann Laplacian. Boundary faces carry zero flux.
pub fn laplacian_neumann(f: &Field, grid: &Grid2D) -> Result<Field> {
    grid.check(f)?;
    let mut out = Field::zeros(grid);
    apply_laplacian(grid, &f.values, &mut out.values);
    Ok(out)
}

/// Unchecked Laplacian kernel: `out = L f`. Slices must have `grid.len()` entries.
pub(crate) fn apply_laplacian(grid: &Grid2D, f: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let cx = 1.0 / (grid.hx * grid.hx);
    let cy = 1.0 / (grid.hy * grid.hy);
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let c = f[k];
            let mut acc = 0.0;
            if i > 0 {
                acc += cx * (f[k - 1] - c);
            }
            if i + 1 < nx {
                acc += cx * (f[k + 1] - c);
            }
            if j > 0 {
                acc += cy * (f[k - nx] - c);
            }
            if j + 1 < ny {
                acc += cy * (f[k + nx] - c);
            }
            out[k] = acc;
        }
    }
}

/// Two-point face gradients; zero on boundary faces.
pub fn face_gradients(f: &Field, grid: &Grid2D) -> Result<FaceData> {
    grid.check(f)?;
    let (nx, ny) = (grid.nx, grid.ny);
    let mut x = vec![0.0; grid.x_face_count()];
    let mut y = vec![0.0; grid.y_face_count()];
    for j in 0..ny {
        for i in 1..nx {
            let k = grid.index(i, j);
            x[i + (nx + 1) * j] = (f.values[k] - f.values[k - 1]) / grid.hx;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = grid.index(i, j);
            y[i + nx * j] = (f.values[k] - f.values[k - nx]) / grid.hy;
        }
    }
    Ok(FaceData { x, y })
}
