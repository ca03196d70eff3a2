//! Complex scalar fields on a fixed, cell-centred transversal grid.
//!
//! Lengths are in units of the beam waist `w0`; far-field coordinates are the
//! matching transversal wavenumbers. A [`Field`] carries a complex
//! `path_weight` outside the grid so that splitter amplitudes and amplitude
//! modulation do not have to touch every cell.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::{Add, Sub};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Cell-centred grid symmetric about the origin.
///
/// Cell `i` along x sits at `(i + 1/2 - nx/2) * dx`, so the reflection
/// `x -> -x` is an exact index reversal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    nx: usize,
    ny: usize,
    extent_x: f64,
    extent_y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    nx: usize,
    ny: usize,
    extent_x: f64,
    extent_y: f64,
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;
    fn try_from(s: GridSpec) -> Result<Self> {
        Grid::new(s.nx, s.ny, s.extent_x, s.extent_y)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            nx: g.nx,
            ny: g.ny,
            extent_x: g.extent_x,
            extent_y: g.extent_y,
        }
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            nx: 64,
            ny: 64,
            extent_x: 4.0,
            extent_y: 4.0,
        }
    }
}

impl Grid {
    /// Minimum half-width, in waists, that keeps Gaussian truncation below
    /// 1e-8 of the norm.
    pub const MIN_EXTENT: f64 = 3.0;

    pub fn new(nx: usize, ny: usize, extent_x: f64, extent_y: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::Domain(format!("{name} = {n} must be even and >= 8")));
            }
        }
        for (name, e) in [("extent_x", extent_x), ("extent_y", extent_y)] {
            if !(e.is_finite() && e >= Self::MIN_EXTENT) {
                return Err(Error::Domain(format!(
                    "{name} = {e} must be finite and >= {}",
                    Self::MIN_EXTENT
                )));
            }
        }
        Ok(Grid {
            nx,
            ny,
            extent_x,
            extent_y,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn extent_x(&self) -> f64 {
        self.extent_x
    }

    pub fn extent_y(&self) -> f64 {
        self.extent_y
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.extent_x / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        2.0 * self.extent_y / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 + 0.5 - (self.nx / 2) as f64) * self.dx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 + 0.5 - (self.ny / 2) as f64) * self.dy()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.extent_x && y.abs() <= self.extent_y
    }

    /// Grid of the far-field plane: same cell counts, wavenumber half-width
    /// `pi / dx`. Not subject to the near-field extent rule.
    pub fn reciprocal(&self) -> Grid {
        Grid {
            nx: self.nx,
            ny: self.ny,
            extent_x: PI / self.dx(),
            extent_y: PI / self.dy(),
        }
    }
}

/// One path's transversal wavefunction component.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    amps: Vec<Complex64>,
    path_weight: Complex64,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            amps: vec![ZERO; grid.len()],
            path_weight: ONE,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let mut amps = Vec::with_capacity(grid.len());
        for iy in 0..grid.ny {
            let y = grid.y(iy);
            for ix in 0..grid.nx {
                amps.push(f(grid.x(ix), y));
            }
        }
        Field {
            grid,
            amps,
            path_weight: ONE,
        }
    }

    /// Row-major amplitudes (`iy * nx + ix`).
    pub fn from_amps(grid: Grid, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != grid.len() {
            return Err(Error::Domain(format!(
                "{} amplitudes for a {}x{} grid",
                amps.len(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(Field {
            grid,
            amps,
            path_weight: ONE,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn path_weight(&self) -> Complex64 {
        self.path_weight
    }

    pub fn with_path_weight(mut self, w: Complex64) -> Self {
        self.path_weight = w;
        self
    }

    /// Multiplies the path weight; the grid amplitudes are untouched.
    pub fn scaled(&self, c: Complex64) -> Self {
        Field {
            grid: self.grid,
            amps: self.amps.clone(),
            path_weight: self.path_weight * c,
        }
    }

    /// Folds the path weight into the amplitudes.
    pub fn materialized(&self) -> Self {
        let w = self.path_weight;
        Field {
            grid: self.grid,
            amps: self.amps.iter().map(|a| a * w).collect(),
            path_weight: ONE,
        }
    }

    /// Applies `f(x, y, amp)` cell by cell, keeping the path weight.
    pub fn map_cells(&self, f: impl Fn(f64, f64, Complex64) -> Complex64) -> Self {
        let g = self.grid;
        let mut amps = Vec::with_capacity(g.len());
        for iy in 0..g.ny {
            let y = g.y(iy);
            for ix in 0..g.nx {
                amps.push(f(g.x(ix), y, self.amps[g.index(ix, iy)]));
            }
        }
        Field {
            grid: g,
            amps,
            path_weight: self.path_weight,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        let s: f64 = self.amps.iter().map(|a| a.norm_sqr()).sum();
        s * self.path_weight.norm_sqr() * self.grid.cell_area()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.path_weight == ZERO || self.amps.iter().all(|a| *a == ZERO)
    }

    /// `a * self + b * other`, materialized.
    pub fn combine(&self, a: Complex64, other: &Field, b: Complex64) -> Result<Field> {
        check_same_grid(&self.grid, &other.grid)?;
        let wa = a * self.path_weight;
        let wb = b * other.path_weight;
        let amps = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(u, v)| wa * u + wb * v)
            .collect();
        Ok(Field {
            grid: self.grid,
            amps,
            path_weight: ONE,
        })
    }

    /// Mirror image `x -> -x` (`flip_x`) and/or `y -> -y` (`flip_y`).
    pub fn reflected(&self, flip_x: bool, flip_y: bool) -> Field {
        let g = self.grid;
        let mut amps = vec![ZERO; g.len()];
        for iy in 0..g.ny {
            let sy = if flip_y { g.ny - 1 - iy } else { iy };
            for ix in 0..g.nx {
                let sx = if flip_x { g.nx - 1 - ix } else { ix };
                amps[g.index(ix, iy)] = self.amps[g.index(sx, sy)];
            }
        }
        Field {
            grid: g,
            amps,
            path_weight: self.path_weight,
        }
    }
}

impl Add for &Field {
    type Output = Field;
    /// Panics on grid mismatch; use [`Field::combine`] for a fallible sum.
    fn add(self, rhs: &Field) -> Field {
        self.combine(ONE, rhs, ONE).expect("grid mismatch in Field add")
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.combine(ONE, rhs, -ONE).expect("grid mismatch in Field sub")
    }
}

pub(crate) fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::Domain(format!(
            "grid mismatch: {}x{} [{}, {}] vs {}x{} [{}, {}]",
            a.nx, a.ny, a.extent_x, a.extent_y, b.nx, b.ny, b.extent_x, b.extent_y
        )));
    }
    Ok(())
}

/// Discrete `∫ conj(f) g`, including both path weights.
pub fn inner(f: &Field, g: &Field) -> Result<Complex64> {
    check_same_grid(&f.grid, &g.grid)?;
    let s: Complex64 = f.amps.iter().zip(&g.amps).map(|(a, b)| a.conj() * b).sum();
    Ok(f.path_weight.conj() * g.path_weight * s * f.grid.cell_area())
}

fn check_waist(waist: f64) -> Result<()> {
    if !(waist.is_finite() && waist > 0.0) {
        return Err(Error::Domain(format!("waist = {waist} must be positive")));
    }
    Ok(())
}

fn normalized(mut f: Field) -> Field {
    let n = f.norm();
    for a in f.amps.iter_mut() {
        *a /= n;
    }
    f
}

/// Unit-norm `exp(-((x-cx)^2 + (y-cy)^2) / waist^2)`.
pub fn gaussian_mode(grid: Grid, waist: f64, center_x: f64, center_y: f64) -> Result<Field> {
    check_waist(waist)?;
    if !grid.contains(center_x, center_y) {
        return Err(Error::Domain(format!(
            "center ({center_x}, {center_y}) outside grid half-widths ({}, {})",
            grid.extent_x, grid.extent_y
        )));
    }
    let w2 = waist * waist;
    let f = Field::from_fn(grid, |x, y| {
        let r2 = (x - center_x).powi(2) + (y - center_y).powi(2);
        Complex64::new((-r2 / w2).exp(), 0.0)
    });
    Ok(normalized(f))
}

/// Unit-norm first-order Hermite-Gauss mode, odd in x (`along_x`) or in y.
pub fn odd_mode(grid: Grid, waist: f64, along_x: bool) -> Result<Field> {
    check_waist(waist)?;
    let w2 = waist * waist;
    let f = Field::from_fn(grid, |x, y| {
        let c = if along_x { x } else { y };
        Complex64::new(c * (-(x * x + y * y) / w2).exp(), 0.0)
    });
    Ok(normalized(f))
}

/// Split of a perturbed state as `eta * e^{i phase} * (ref + eps * perp)`.
///
/// `eta > 0` and `eps >= 0` are real; the phase of the orthogonal part is
/// carried by `perp`, the global phase of the overlap by `phase`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub eta: f64,
    pub phase: f64,
    pub eps: f64,
    /// Unit norm and orthogonal to the reference; the zero field when
    /// `eps == 0`.
    pub perp: Field,
}

impl Decomposition {
    pub fn reconstruct(&self, f_ref: &Field) -> Result<Field> {
        let sum = f_ref.combine(ONE, &self.perp, Complex64::new(self.eps, 0.0))?;
        Ok(sum.scaled(Complex64::from_polar(self.eta, self.phase)))
    }
}

/// Relative tolerance on the reference norm accepted by [`decompose`].
const REF_NORM_TOL: f64 = 1e-9;

pub fn decompose(f_prime: &Field, f_ref: &Field) -> Result<Decomposition> {
    check_same_grid(&f_prime.grid, &f_ref.grid)?;
    let ref_norm = f_ref.norm();
    if (ref_norm - 1.0).abs() > REF_NORM_TOL {
        return Err(Error::Domain(format!(
            "reference field must be unit norm, got {ref_norm}"
        )));
    }
    let c = inner(f_ref, f_prime)?;
    if c.norm() <= 1e-9 * ref_norm * f_prime.norm() || c.norm() == 0.0 {
        return Err(Error::OverlapVanishes);
    }
    // residual = f' - c ref, then perp = residual / c normalized.
    let residual = f_prime.combine(ONE, f_ref, -c)?;
    let res_norm = residual.norm();
    let (eps, perp) = if res_norm > 0.0 {
        let rot = c.conj() / c.norm() / res_norm;
        (res_norm / c.norm(), residual.scaled(rot).materialized())
    } else {
        (0.0, Field::zeros(f_ref.grid))
    };
    Ok(Decomposition {
        eta: c.norm(),
        phase: c.arg(),
        eps,
        perp,
    })
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// `e^{i pi num / den}` with `num` reduced exactly modulo `2 den`.
fn exact_phase(num: i128, den: i128) -> Complex64 {
    let r = num.rem_euclid(2 * den);
    Complex64::from_polar(1.0, PI * r as f64 / den as f64)
}

/// Centred unitary DFT along one axis of length `n` with sample spacing `d`,
/// mapping cell-centred positions to cell-centred wavenumbers.
struct CentredDft {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
}

impl CentredDft {
    fn new(n: usize, d: f64) -> Self {
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
        let ni = n as i128;
        // a = (n - 1) / 2: e^{2 pi i a j / n} = e^{i pi (n-1) j / n}
        let pre = (0..ni).map(|j| exact_phase((ni - 1) * j, ni)).collect();
        let scale = d / (2.0 * PI).sqrt();
        let global = exact_phase(-(ni - 1) * (ni - 1), 2 * ni);
        let post = (0..ni)
            .map(|m| exact_phase((ni - 1) * m, ni) * global * scale)
            .collect();
        CentredDft { fft, pre, post }
    }

    fn apply(&self, buf: &mut [Complex64]) {
        for (v, p) in buf.iter_mut().zip(&self.pre) {
            *v *= p;
        }
        self.fft.process(buf);
        for (v, p) in buf.iter_mut().zip(&self.post) {
            *v *= p;
        }
    }
}

/// Far-field (Fourier-plane) image of `f`, on [`Grid::reciprocal`].
///
/// Uses the continuous convention `(1/2pi) ∫ f e^{-i k.r} d^2r`, which is
/// unitary: the norm is preserved.
pub fn far_field(f: &Field) -> Field {
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut data = f.amps.clone();

    let along_x = CentredDft::new(nx, g.dx());
    for row in data.chunks_exact_mut(nx) {
        along_x.apply(row);
    }

    let along_y = CentredDft::new(ny, g.dy());
    let mut col = vec![ZERO; ny];
    for ix in 0..nx {
        for iy in 0..ny {
            col[iy] = data[iy * nx + ix];
        }
        along_y.apply(&mut col);
        for iy in 0..ny {
            data[iy * nx + ix] = col[iy];
        }
    }

    Field {
        grid: g.reciprocal(),
        amps: data,
        path_weight: f.path_weight,
    }
}
