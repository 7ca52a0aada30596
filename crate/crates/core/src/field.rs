//! Discrete periodic fields on the torus `(R / 2πZ)^3`.
//!
//! A field lives either on the uniform collocation grid ([`PhysicalField`]) or
//! as the Fourier coefficients of its trigonometric interpolant
//! ([`SpectralField`]). Scalars have one component, vectors three and rank-2
//! tensors nine (row-major, `3*i + j`). Tensor gradients follow the
//! convention `grad(u)[3*i + j] = ∂_j u_i`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// Side length of the periodic box along each axis.
pub const DOMAIN_LENGTH: f64 = 2.0 * PI;

/// Uniform cubic collocation grid with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Grid {
    n: usize,
}

impl TryFrom<usize> for Grid {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        Grid::new(n)
    }
}

impl From<Grid> for usize {
    fn from(g: Grid) -> usize {
        g.n
    }
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        DOMAIN_LENGTH / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    /// Number of nodes, `n^3`.
    pub fn points(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Number of stored spectral coefficients per component.
    pub fn modes(&self) -> usize {
        (self.n / 2 + 1) * self.n * self.n
    }

    pub fn node(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        let h = self.spacing();
        [(idx % n) as f64 * h, ((idx / n) % n) as f64 * h, (idx / (n * n)) as f64 * h]
    }

    /// Signed wavenumber of storage index `i` along y or z. The Nyquist index
    /// maps to `+n/2`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Largest retained wavenumber under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    pub fn is_nyquist(&self, k: i64) -> bool {
        k.unsigned_abs() as usize == self.n / 2
    }

    /// Iterates `(storage index, wavevector)` over the half spectrum.
    pub fn mode_iter(&self) -> impl Iterator<Item = (usize, [i64; 3])> + '_ {
        let n = self.n;
        let nh = n / 2 + 1;
        (0..n).flat_map(move |l| {
            (0..n).flat_map(move |j| {
                (0..nh).map(move |kx| (kx + nh * (j + n * l), [kx as i64, self.wavenumber(j), self.wavenumber(l)]))
            })
        })
    }

    /// Storage index of wavevector `k` and whether the stored value must be
    /// conjugated to obtain the coefficient at `k`.
    pub fn mode_index(&self, k: [i64; 3]) -> Option<(usize, bool)> {
        let n = self.n as i64;
        let half = n / 2;
        if k.iter().any(|&c| c < -half || c > half) {
            return None;
        }
        let (kk, conj) = if k[0] < 0 { ([-k[0], -k[1], -k[2]], true) } else { (k, false) };
        let wrap = |c: i64| c.rem_euclid(n) as usize;
        let nh = self.n / 2 + 1;
        Some((kk[0] as usize + nh * (wrap(kk[1]) + self.n * wrap(kk[2])), conj))
    }

    /// Multiplicity of a stored mode in the full spectrum (Parseval weight).
    pub(crate) fn hermitian_weight(&self, kx: i64) -> f64 {
        if kx == 0 || self.is_nyquist(kx) {
            1.0
        } else {
            2.0
        }
    }

    /// Wavevector used for spectral differentiation; Nyquist components are
    /// zeroed so derivatives of real fields stay real.
    pub fn derivative_wavevector(&self, k: [i64; 3]) -> [f64; 3] {
        let c = |x: i64| if self.is_nyquist(x) { 0.0 } else { x as f64 };
        [c(k[0]), c(k[1]), c(k[2])]
    }

    fn check_components(components: usize) -> Result<()> {
        match components {
            1 | 3 | 9 => Ok(()),
            c => Err(Error::InvalidComponents(c)),
        }
    }
}

/// Node values of a scalar, vector or tensor field, component-major, x-fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalField {
    grid: Grid,
    components: usize,
    data: Vec<f64>,
}

impl PhysicalField {
    pub fn new(grid: Grid, components: usize, data: Vec<f64>) -> Result<Self> {
        Grid::check_components(components)?;
        let expected = components * grid.points();
        if data.len() != expected {
            return Err(Error::ShapeMismatch { expected, found: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, components, data })
    }

    pub fn zeros(grid: Grid, components: usize) -> Result<Self> {
        Grid::check_components(components)?;
        Ok(Self { grid, components, data: vec![0.0; components * grid.points()] })
    }

    /// Samples `f` at every node. `C` must be 1, 3 or 9.
    pub fn from_fn<const C: usize>(grid: Grid, f: impl Fn([f64; 3]) -> [f64; C]) -> Result<Self> {
        let mut out = Self::zeros(grid, C)?;
        let np = grid.points();
        for idx in 0..np {
            let v = f(grid.node(idx));
            for (c, x) in v.into_iter().enumerate() {
                out.data[c * np + idx] = x;
            }
        }
        Self::new(grid, C, out.data)
    }

    pub(crate) fn from_raw(grid: Grid, components: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), components * grid.points());
        Self { grid, components, data }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let np = self.grid.points();
        &self.data[c * np..(c + 1) * np]
    }

    pub(crate) fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let np = self.grid.points();
        &mut self.data[c * np..(c + 1) * np]
    }

    /// Value of component `c` at node `(i, j, l)`.
    pub fn at(&self, c: usize, i: usize, j: usize, l: usize) -> f64 {
        let n = self.grid.n;
        self.data[c * self.grid.points() + i + n * (j + n * l)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> Vec<f64> {
        let np = self.grid.points() as f64;
        (0..self.components).map(|c| self.component(c).iter().sum::<f64>() / np).collect()
    }

    /// Euclidean (Frobenius for tensors) magnitude at every node.
    pub fn magnitude(&self) -> Vec<f64> {
        let np = self.grid.points();
        let mut out = vec![0.0; np];
        for c in 0..self.components {
            for (o, v) in out.iter_mut().zip(self.component(c)) {
                *o += v * v;
            }
        }
        out.iter_mut().for_each(|o| *o = o.sqrt());
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::from_raw(self.grid, self.components, self.data.iter().map(|v| a * v).collect())
    }

    /// `self += a * other`. Panics on shape mismatch.
    pub fn axpy(&mut self, a: f64, other: &PhysicalField) {
        self.assert_same_shape(other);
        self.data.iter_mut().zip(&other.data).for_each(|(x, y)| *x += a * y);
    }

    /// `self - other`. Panics on shape mismatch.
    pub fn minus(&self, other: &PhysicalField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    fn assert_same_shape(&self, other: &PhysicalField) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        assert_eq!(self.components, other.components, "component mismatch");
    }

    pub fn to_spectral(&self) -> Result<SpectralField> {
        to_spectral(self)
    }

    /// Writes the snapshot format: `n` and component count as little-endian
    /// `u64`, then every node value as a little-endian `f64`, component-major,
    /// x-fastest.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        w.write_all(&(self.components as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.data.len());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let components = u64::from_le_bytes(word) as usize;
        let grid = Grid::new(n).map_err(|e| Error::Snapshot(e.to_string()))?;
        Grid::check_components(components).map_err(|e| Error::Snapshot(e.to_string()))?;
        let count = components * grid.points();
        let mut bytes = vec![0u8; 8 * count];
        r.read_exact(&mut bytes)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Snapshot(format!("{} trailing bytes", rest.len())));
        }
        let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect();
        Self::new(grid, components, data)
    }
}

/// Fourier coefficients over the half spectrum (`kx >= 0`), component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    components: usize,
    data: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid, components: usize) -> Result<Self> {
        Grid::check_components(components)?;
        Ok(Self { grid, components, data: vec![Complex64::default(); components * grid.modes()] })
    }

    pub(crate) fn from_raw(grid: Grid, components: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), components * grid.modes());
        Self { grid, components, data }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let nm = self.grid.modes();
        &self.data[c * nm..(c + 1) * nm]
    }

    pub(crate) fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let nm = self.grid.modes();
        &mut self.data[c * nm..(c + 1) * nm]
    }

    /// Coefficient of component `c` at wavevector `k` (any sign of `k_x`).
    /// Returns zero outside the resolved range.
    pub fn coefficient(&self, c: usize, k: [i64; 3]) -> Complex64 {
        match self.grid.mode_index(k) {
            Some((idx, conj)) => {
                let v = self.component(c)[idx];
                if conj {
                    v.conj()
                } else {
                    v
                }
            }
            None => Complex64::default(),
        }
    }

    pub fn to_physical(&self) -> PhysicalField {
        to_physical(self)
    }

    /// `L^2(T^3)` norm from the coefficients (Parseval).
    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for c in 0..self.components {
            let comp = self.component(c);
            for (idx, k) in self.grid.mode_iter() {
                sum += self.grid.hermitian_weight(k[0]) * comp[idx].norm_sqr();
            }
        }
        (DOMAIN_LENGTH.powi(3) * sum).sqrt()
    }

    /// Multiplies every mode by `m(k)`, identically across components.
    pub fn map_modes(&self, m: impl Fn([i64; 3]) -> Complex64) -> Self {
        let mut out = self.clone();
        let nm = self.grid.modes();
        for (idx, k) in self.grid.mode_iter() {
            let f = m(k);
            for c in 0..self.components {
                out.data[c * nm + idx] *= f;
            }
        }
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::from_raw(self.grid, self.components, self.data.iter().map(|v| v * a).collect())
    }

    /// `self += a * other`. Panics on shape mismatch.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        assert_eq!(self.components, other.components, "component mismatch");
        self.data.iter_mut().zip(&other.data).for_each(|(x, y)| *x += y * a);
    }

    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "shape mismatch");
        self.data.iter().zip(&other.data).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()))
    }
}

pub fn to_spectral(f: &PhysicalField) -> Result<SpectralField> {
    if let Some(i) = f.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let grid = f.grid;
    let plan = fft::plan(grid.n);
    let mut out = SpectralField::zeros(grid, f.components)?;
    for c in 0..f.components {
        plan.forward(f.component(c), out.component_mut(c));
    }
    Ok(out)
}

pub fn to_physical(s: &SpectralField) -> PhysicalField {
    let grid = s.grid;
    let plan = fft::plan(grid.n);
    let mut out = PhysicalField::from_raw(grid, s.components, vec![0.0; s.components * grid.points()]);
    let mut scratch = vec![Complex64::default(); grid.modes()];
    for c in 0..s.components {
        scratch.copy_from_slice(s.component(c));
        plan.inverse(&mut scratch, out.component_mut(c));
    }
    out
}

/// Spectral gradient: scalar -> vector, vector -> tensor (`3*i + j` holds `∂_j u_i`).
pub fn gradient(f: &SpectralField) -> Result<SpectralField> {
    let grid = f.grid;
    let out_components = match f.components {
        1 => 3,
        3 => 9,
        found => return Err(Error::WrongComponents { expected: 3, found }),
    };
    let mut out = SpectralField::zeros(grid, out_components)?;
    let nm = grid.modes();
    for (idx, k) in grid.mode_iter() {
        let kd = grid.derivative_wavevector(k);
        for c in 0..f.components {
            let v = f.data[c * nm + idx];
            for (d, kk) in kd.iter().enumerate() {
                out.data[(3 * c + d) * nm + idx] = Complex64::new(0.0, *kk) * v;
            }
        }
    }
    Ok(out)
}

/// Spectral divergence: vector -> scalar, tensor -> vector (`∂_j A_ij`).
pub fn divergence(f: &SpectralField) -> Result<SpectralField> {
    let grid = f.grid;
    let rows = match f.components {
        3 => 1,
        9 => 3,
        found => return Err(Error::WrongComponents { expected: 3, found }),
    };
    let mut out = SpectralField::zeros(grid, rows)?;
    let nm = grid.modes();
    for (idx, k) in grid.mode_iter() {
        let kd = grid.derivative_wavevector(k);
        for r in 0..rows {
            let mut acc = Complex64::default();
            for (j, kk) in kd.iter().enumerate() {
                acc += Complex64::new(0.0, *kk) * f.data[(3 * r + j) * nm + idx];
            }
            out.data[r * nm + idx] = acc;
        }
    }
    Ok(out)
}

/// Orthogonal projection onto divergence-free vector fields. The mean
/// (`k = 0`) is left untouched.
pub fn leray_project(v: &SpectralField) -> Result<SpectralField> {
    if v.components != 3 {
        return Err(Error::WrongComponents { expected: 3, found: v.components });
    }
    let grid = v.grid;
    let mut out = v.clone();
    let nm = grid.modes();
    for (idx, k) in grid.mode_iter() {
        let kd = grid.derivative_wavevector(k);
        let k2: f64 = kd.iter().map(|x| x * x).sum();
        if k2 == 0.0 {
            continue;
        }
        let dot = (0..3).fold(Complex64::default(), |acc, c| acc + v.data[c * nm + idx] * kd[c]);
        for (c, kc) in kd.iter().enumerate() {
            out.data[c * nm + idx] -= dot * (kc / k2);
        }
    }
    Ok(out)
}

/// `L^q(T^3)` norm by node quadrature, `(h^3 Σ |f|^q)^(1/q)`; `q = ∞` gives
/// the node maximum, which is a lower bound of the true supremum.
pub fn lebesgue_norm(f: &PhysicalField, q: f64) -> Result<f64> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::InvalidExponent(q));
    }
    let mag = if f.components == 1 { f.data.iter().map(|v| v.abs()).collect() } else { f.magnitude() };
    if q.is_infinite() {
        return Ok(mag.iter().fold(0.0f64, |m, v| m.max(*v)));
    }
    let scale = mag.iter().fold(0.0f64, |m, v| m.max(*v));
    if scale == 0.0 {
        return Ok(0.0);
    }
    // Normalize by the max so large q does not overflow.
    let sum: f64 = mag.iter().map(|v| (v / scale).powf(q)).sum();
    Ok(scale * (f.grid.cell_volume() * sum).powf(1.0 / q))
}

/// Spectral phase factor for a shift by `y` along one axis; the Nyquist
/// coefficient of a real field only admits the real part.
fn axis_phase(grid: &Grid, k: i64, y: f64) -> Complex64 {
    if grid.is_nyquist(k) {
        Complex64::new((k as f64 * y).cos(), 0.0)
    } else {
        Complex64::from_polar(1.0, -(k as f64) * y)
    }
}

/// Per-mode factor realizing `f(x) -> f(x - y)`.
pub fn shift_factor(grid: &Grid, k: [i64; 3], y: [f64; 3]) -> Complex64 {
    axis_phase(grid, k[0], y[0]) * axis_phase(grid, k[1], y[1]) * axis_phase(grid, k[2], y[2])
}

/// The field `x -> f(x - y)` for any real `y`.
pub fn shift(f: &SpectralField, y: [f64; 3]) -> SpectralField {
    if y == [0.0; 3] {
        return f.clone();
    }
    let grid = f.grid;
    f.map_modes(|k| shift_factor(&grid, k, y))
}

/// 2/3-rule truncation: zero every mode with some `|k_i| > n/3`.
pub fn dealias(f: &SpectralField) -> SpectralField {
    let cut = f.grid.dealias_cutoff();
    f.map_modes(|k| if k.iter().any(|c| c.abs() > cut) { Complex64::default() } else { Complex64::new(1.0, 0.0) })
}

/// Max node value of `|div v|`.
pub fn max_divergence(v: &SpectralField) -> Result<f64> {
    Ok(divergence(v)?.to_physical().max_abs())
}

/// Largest `max |div v|`, relative to `max(1, max |∇v|)`, accepted as divergence-free.
pub const SOLENOIDAL_TOLERANCE: f64 = 1e-10;

/// Rejects vector fields whose divergence exceeds [`SOLENOIDAL_TOLERANCE`].
pub fn check_solenoidal(v: &SpectralField) -> Result<()> {
    let divergence = max_divergence(v)?;
    let scale = gradient(v)?.to_physical().max_abs().max(1.0);
    if divergence > SOLENOIDAL_TOLERANCE * scale {
        return Err(Error::NotSolenoidal { divergence, scale });
    }
    Ok(())
}
