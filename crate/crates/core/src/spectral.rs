//! Periodic-box pseudospectral discretization.
//!
//! Fields live on the uniform grid of `m^n` nodes covering `[0, L)^n`, stored
//! row-major (axis 0 slowest). Spectra use the normalisation
//! `û(k) = M⁻¹ Σ_x u(x) e^{-iκ·x}` with `κ = 2πk/L`, so a pure mode `cos(x₁)`
//! carries the coefficient ½ at `k = ±e₁`.
//!
//! The Laplacian follows the geometer's sign, `Δ = -div ∇`, so its symbol is
//! `+|κ|²`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest node count accepted unless a caller raises the cap explicitly.
pub const DEFAULT_NODE_CAP: usize = 1 << 24;

const SUM_CHUNK: usize = 4096;

/// Deterministic sum: fixed-size chunks reduced in index order, independent
/// of the thread count.
pub(crate) fn fixed_order_sum(values: &[f64]) -> f64 {
    let partials: Vec<f64> = values
        .par_chunks(SUM_CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect();
    partials.iter().sum()
}

pub(crate) fn fixed_order_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let partials: Vec<f64> = a
        .par_chunks(SUM_CHUNK)
        .zip(b.par_chunks(SUM_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partials.iter().sum()
}

/// `(n, m, L bits)`.
type GridKey = (usize, usize, u64);

/// Uniform periodic grid: dimension `n`, `m` nodes per axis, side `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    m: usize,
    length: f64,
}

impl GridSpec {
    pub fn new(n: usize, m: usize, length: f64) -> Result<Self> {
        Self::with_cap(n, m, length, DEFAULT_NODE_CAP)
    }

    pub fn with_cap(n: usize, m: usize, length: f64, cap: usize) -> Result<Self> {
        if n < 5 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be at least 5 (got {n})"
            )));
        }
        if m < 4 || !m.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "modes per axis must be even and at least 4 (got {m})"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side length must be positive (got {length})"
            )));
        }
        let nodes = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(m));
        match nodes {
            Some(nodes) if nodes <= cap => Ok(Self { n, m, length }),
            Some(nodes) => Err(Error::ResourceCap { nodes, cap }),
            None => Err(Error::ResourceCap {
                nodes: usize::MAX,
                cap,
            }),
        }
    }

    /// Default resolution: `m = 16` for `n = 5`, `m = 8` for `n = 6`, and the
    /// smallest admissible `m = 4` beyond.
    pub fn default_for(n: usize) -> Result<Self> {
        let m = match n {
            5 => 16,
            6 => 8,
            _ => 4,
        };
        Self::new(n, m, 2.0 * std::f64::consts::PI)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn node_count(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    /// `V = L^n`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.n as i32)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.m as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    /// `N = 2n/(n−4)`.
    pub fn critical_exponent(&self) -> f64 {
        2.0 * self.n as f64 / (self.n as f64 - 4.0)
    }

    /// Signed integer frequency of storage index `j` along one axis,
    /// in `(−m/2, m/2]`.
    pub fn frequency(&self, j: usize) -> i64 {
        let m = self.m as i64;
        let j = j as i64;
        if j <= m / 2 {
            j
        } else {
            j - m
        }
    }

    /// Physical wavenumber `κ = 2πk/L` per storage index.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let scale = 2.0 * std::f64::consts::PI / self.length;
        (0..self.m)
            .map(|j| scale * self.frequency(j) as f64)
            .collect()
    }

    /// Storage digit of `index` along `axis`.
    pub fn digit(&self, index: usize, axis: usize) -> usize {
        (index / self.m.pow((self.n - 1 - axis) as u32)) % self.m
    }

    /// Integer frequency vector of a flat mode index.
    pub fn frequency_vector(&self, index: usize) -> Vec<i64> {
        (0..self.n)
            .map(|axis| self.frequency(self.digit(index, axis)))
            .collect()
    }

    /// Flat index of an integer frequency vector, if it is resolved.
    pub fn mode_index(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.n {
            return None;
        }
        let m = self.m as i64;
        let mut index = 0usize;
        for &kj in k {
            if kj <= -m / 2 || kj > m / 2 {
                return None;
            }
            index = index * self.m + kj.rem_euclid(m) as usize;
        }
        Some(index)
    }

    /// Node coordinates of a flat index.
    pub fn coordinates(&self, index: usize) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n)
            .map(|axis| self.digit(index, axis) as f64 * h)
            .collect()
    }

    /// `|κ|²` for every mode, in storage order (shared, computed once per grid).
    pub fn k_squared(&self) -> Arc<Vec<f64>> {
        static CACHE: OnceLock<Mutex<HashMap<GridKey, Arc<Vec<f64>>>>> = OnceLock::new();
        let key = (self.n, self.m, self.length.to_bits());
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(v) = cache.lock().expect("cache poisoned").get(&key) {
            return Arc::clone(v);
        }
        let k2: Vec<f64> = self.wavenumbers().iter().map(|k| k * k).collect();
        let mut acc = vec![0.0];
        for _ in 0..self.n {
            let mut next = Vec::with_capacity(acc.len() * self.m);
            for &v in &acc {
                next.extend(k2.iter().map(|w| v + w));
            }
            acc = next;
        }
        let acc = Arc::new(acc);
        cache
            .lock()
            .expect("cache poisoned")
            .insert(key, Arc::clone(&acc));
        acc
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Real scalar field sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    /// Construction without the finiteness scan, for values produced by
    /// library arithmetic on finite inputs.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_raw(grid, vec![0.0; grid.node_count()])
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.node_count()])
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let values: Vec<f64> = (0..grid.node_count())
            .into_par_iter()
            .map(|i| f(&grid.coordinates(i)))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Field {
        Self::from_raw(self.grid, self.values.par_iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scaled(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        fixed_order_sum(&self.values) / self.values.len() as f64
    }

    /// `∫ u·v` with uniform weights.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(fixed_order_dot(&self.values, &other.values) * self.grid.cell_volume())
    }

    pub fn l2_norm(&self) -> f64 {
        (fixed_order_dot(&self.values, &self.values) * self.grid.cell_volume()).sqrt()
    }
}

/// Fourier coefficients on the resolved frequency box `(−m/2, m/2]^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coefficient(&self, k: &[i64]) -> Option<Complex64> {
        self.grid.mode_index(k).map(|i| self.coeffs[i])
    }

    /// Multiply every coefficient by a real function of `|κ|²`.
    pub fn apply_radial_symbol(&self, symbol: impl Fn(f64) -> f64 + Sync) -> Spectrum {
        let k2 = self.grid.k_squared();
        let coeffs = self
            .coeffs
            .par_iter()
            .zip(k2.par_iter())
            .map(|(c, &k)| c * symbol(k))
            .collect();
        Spectrum {
            grid: self.grid,
            coeffs,
        }
    }

    /// `V Σ w(|κ|²) |û|²`: the weighted Plancherel sum.
    pub fn weighted_energy(&self, weight: impl Fn(f64) -> f64 + Sync) -> f64 {
        let k2 = self.grid.k_squared();
        let terms: Vec<f64> = self
            .coeffs
            .par_chunks(SUM_CHUNK)
            .zip(k2.par_chunks(SUM_CHUNK))
            .map(|(c, k)| {
                c.iter()
                    .zip(k)
                    .map(|(z, &kk)| weight(kk) * z.norm_sqr())
                    .sum::<f64>()
            })
            .collect();
        terms.iter().sum::<f64>() * self.grid.volume()
    }

    /// Largest `|û(k) − conj(û(−k))|`, which vanishes for spectra of real fields.
    pub fn hermitian_defect(&self) -> f64 {
        let g = self.grid;
        (0..self.coeffs.len())
            .into_par_iter()
            .map(|i| {
                let neg: Vec<i64> = g.frequency_vector(i).iter().map(|k| -k).collect();
                // The Nyquist plane maps onto itself under k → −k modulo m.
                let m = g.modes() as i64;
                let wrapped: Vec<i64> = neg
                    .iter()
                    .map(|&k| if k == -m / 2 { m / 2 } else { k })
                    .collect();
                let j = g.mode_index(&wrapped).expect("wrapped frequency is resolved");
                (self.coeffs[i] - self.coeffs[j].conj()).norm()
            })
            .reduce(|| 0.0, f64::max)
    }
}

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(m: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("plan cache poisoned");
    guard
        .entry(m)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(m), planner.plan_fft_inverse(m))
        })
        .clone()
}

const TRANSPOSE_BLOCK: usize = 4096;

/// Unnormalised n-dimensional FFT. Each pass transforms the contiguous last
/// axis and then rotates it to the front; after `n` passes every axis has been
/// transformed and the original layout is restored.
fn fft_nd(grid: &GridSpec, data: &mut Vec<Complex64>, inverse: bool) {
    let m = grid.modes();
    let rows = data.len() / m;
    let (fwd, inv) = plans(m);
    let fft = if inverse { inv } else { fwd };
    let scratch_len = fft.get_inplace_scratch_len();
    let mut rotated = vec![Complex64::default(); data.len()];
    for _ in 0..grid.dim() {
        data.par_chunks_mut(m * 64).for_each_init(
            || vec![Complex64::default(); scratch_len],
            |scratch, chunk| fft.process_with_scratch(chunk, scratch),
        );
        let src = &*data;
        rotated
            .par_chunks_mut(rows)
            .enumerate()
            .for_each(|(c, out)| {
                out.par_chunks_mut(TRANSPOSE_BLOCK)
                    .enumerate()
                    .for_each(|(b, block)| {
                        let r0 = b * TRANSPOSE_BLOCK;
                        for (j, x) in block.iter_mut().enumerate() {
                            *x = src[(r0 + j) * m + c];
                        }
                    });
            });
        std::mem::swap(data, &mut rotated);
    }
}

/// Forward transform with `1/M` normalisation.
pub fn transform(field: &Field) -> Result<Spectrum> {
    field.check_finite()?;
    Ok(transform_unchecked(field))
}

pub(crate) fn transform_unchecked(field: &Field) -> Spectrum {
    let grid = *field.grid();
    let mut data: Vec<Complex64> = field
        .values()
        .par_iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft_nd(&grid, &mut data, false);
    let scale = 1.0 / grid.node_count() as f64;
    data.par_iter_mut().for_each(|c| *c *= scale);
    Spectrum {
        grid,
        coeffs: data,
    }
}

/// Inverse transform; the imaginary residue is discarded.
pub fn inverse_transform(spec: &Spectrum) -> Field {
    inverse_transform_with_residue(spec).0
}

/// Inverse transform together with `max|Im| / max(‖Re‖_∞, tiny)`.
pub fn inverse_transform_with_residue(spec: &Spectrum) -> (Field, f64) {
    let mut data = spec.coeffs.clone();
    fft_nd(&spec.grid, &mut data, true);
    let im = data.par_iter().map(|c| c.im.abs()).reduce(|| 0.0, f64::max);
    let values: Vec<f64> = data.into_par_iter().map(|c| c.re).collect();
    let re = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (
        Field::from_raw(spec.grid, values),
        im / re.max(f64::MIN_POSITIVE),
    )
}

/// Apply a real radial Fourier multiplier `s(|κ|²)`.
pub fn apply_radial_multiplier(u: &Field, symbol: impl Fn(f64) -> f64 + Sync) -> Field {
    inverse_transform(&transform_unchecked(u).apply_radial_symbol(symbol))
}

/// `Δu = -div ∇u`, symbol `|κ|²`.
pub fn laplacian(u: &Field) -> Field {
    apply_radial_multiplier(u, |k2| k2)
}

/// Spectral partial derivative `∂u/∂x_axis`; the Nyquist mode is zeroed.
pub fn partial_derivative(u: &Field, axis: usize) -> Field {
    let grid = *u.grid();
    let kappa = grid.wavenumbers();
    let nyquist = grid.modes() / 2;
    let mut spec = transform_unchecked(u);
    spec.coeffs
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, c)| {
            let d = grid.digit(i, axis);
            *c = if d == nyquist {
                Complex64::default()
            } else {
                *c * Complex64::new(0.0, kappa[d])
            };
        });
    inverse_transform(&spec)
}

/// `∫ u` with uniform weights `(L/m)^n`, reduced in a fixed order.
pub fn integrate(u: &Field) -> f64 {
    fixed_order_sum(u.values()) * u.grid().cell_volume()
}

/// `sign(u)|u|^p` when `odd`, `|u|^p` otherwise; zero maps to zero.
pub fn pointwise_power(u: &Field, p: f64, odd: bool) -> Result<Field> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "power must be positive (got {p})"
        )));
    }
    Ok(u.map(|v| {
        let a = v.abs().powf(p);
        if odd {
            a.copysign(v)
        } else {
            a
        }
    }))
}

/// `V Σ Re(û conj(v̂))`, the spectral side of Plancherel.
pub fn spectral_inner(u: &Field, v: &Field) -> Result<f64> {
    u.grid().check_same(v.grid())?;
    let a = transform(u)?;
    let b = transform(v)?;
    let partials: Vec<f64> = a
        .coeffs
        .par_chunks(SUM_CHUNK)
        .zip(b.coeffs.par_chunks(SUM_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p * q.conj()).re).sum::<f64>())
        .collect();
    Ok(partials.iter().sum::<f64>() * u.grid().volume())
}

/// Fraction of spectral energy carried by modes with `max_i |k_i| > m/3`
/// (the top third of the resolved shells).
pub fn spectral_tail(u: &Field) -> f64 {
    let grid = *u.grid();
    let spec = transform_unchecked(u);
    let cutoff = grid.modes() as f64 / 3.0;
    let (tail, total) = spec
        .coeffs
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let e = c.norm_sqr();
            let top = (0..grid.dim())
                .map(|a| grid.frequency(grid.digit(i, a)).unsigned_abs())
                .max()
                .unwrap_or(0) as f64;
            if top > cutoff {
                (e, e)
            } else {
                (0.0, e)
            }
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

/// Random smooth field built from the integer frequencies with
/// `|k|² ≤ max_shell`, scaled to unit sup-norm.
pub fn band_limited_noise<R: Rng>(grid: GridSpec, max_shell: i64, rng: &mut R) -> Field {
    let mut coeffs = vec![Complex64::default(); grid.node_count()];
    let m = grid.modes() as i64;
    let reach = ((max_shell as f64).sqrt().floor() as i64).min(m / 2 - 1);
    let mut k = vec![-reach; grid.dim()];
    loop {
        if k.iter().map(|v| v * v).sum::<i64>() <= max_shell {
            let idx = grid.mode_index(&k).expect("in range");
            coeffs[idx] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        // Odometer over the cube [−reach, reach]^n in lexicographic order.
        let mut axis = grid.dim();
        loop {
            if axis == 0 {
                let u = inverse_transform(&Spectrum { grid, coeffs });
                let s = u.max_abs();
                return if s > 0.0 { u.scaled(1.0 / s) } else { Field::constant(grid, 1.0) };
            }
            axis -= 1;
            if k[axis] < reach {
                k[axis] += 1;
                break;
            }
            k[axis] = -reach;
        }
    }
}

fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Write `path` (little-endian f64, row-major) and the text header `path.hdr`.
pub fn write_snapshot(field: &Field, path: &Path) -> Result<()> {
    let g = field.grid();
    let mut bytes = Vec::with_capacity(8 * field.values().len());
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    let header = format!(
        "format nehari4-field\nn {}\nm {}\nL {:e}\ndtype f64\nbyte_order little\n",
        g.dim(),
        g.modes(),
        g.length()
    );
    std::fs::write(header_path(path), header)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Field> {
    let hdr = std::fs::File::open(header_path(path))?;
    let (mut n, mut m, mut l) = (None, None, None);
    for line in BufReader::new(hdr).lines() {
        let line = line?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some("n"), Some(v)) => n = v.parse::<usize>().ok(),
            (Some("m"), Some(v)) => m = v.parse::<usize>().ok(),
            (Some("L"), Some(v)) => l = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    let (n, m, l) = match (n, m, l) {
        (Some(n), Some(m), Some(l)) => (n, m, l),
        _ => return Err(Error::Snapshot("header must define n, m and L".into())),
    };
    let grid = GridSpec::new(n, m, l)?;
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() != 8 * grid.node_count() {
        return Err(Error::Snapshot(format!(
            "expected {} bytes, found {}",
            8 * grid.node_count(),
            raw.len()
        )));
    }
    let values = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Field::new(grid, values)
}

/// CSV of a 1-D or 2-D slice through the origin node along `axes`.
pub fn write_slice_csv<W: Write>(field: &Field, axes: &[usize], mut out: W) -> Result<()> {
    let g = field.grid();
    if axes.is_empty() || axes.len() > 2 || axes.iter().any(|&a| a >= g.dim()) {
        return Err(Error::InvalidParameter(
            "slice needs one or two distinct in-range axes".into(),
        ));
    }
    if axes.len() == 2 && axes[0] == axes[1] {
        return Err(Error::InvalidParameter("slice axes must differ".into()));
    }
    let h = g.spacing();
    let stride = |a: usize| g.modes().pow((g.dim() - 1 - a) as u32);
    if axes.len() == 1 {
        writeln!(out, "x{},u", axes[0])?;
        for i in 0..g.modes() {
            writeln!(out, "{},{}", i as f64 * h, field.values()[i * stride(axes[0])])?;
        }
    } else {
        writeln!(out, "x{},x{},u", axes[0], axes[1])?;
        for i in 0..g.modes() {
            for j in 0..g.modes() {
                let idx = i * stride(axes[0]) + j * stride(axes[1]);
                writeln!(out, "{},{},{}", i as f64 * h, j as f64 * h, field.values()[idx])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid5(m: usize) -> GridSpec {
        GridSpec::new(5, m, 2.0 * PI).unwrap()
    }

    fn random_field(g: GridSpec, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::new(g, (0..g.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(4, 8, 1.0).is_err());
        assert!(GridSpec::new(5, 7, 1.0).is_err());
        assert!(GridSpec::new(5, 2, 1.0).is_err());
        assert!(matches!(
            GridSpec::with_cap(5, 16, 1.0, 1000),
            Err(Error::ResourceCap { .. })
        ));
        assert_eq!(GridSpec::default_for(5).unwrap().modes(), 16);
        assert_eq!(GridSpec::default_for(6).unwrap().modes(), 8);
        assert_eq!(grid5(4).critical_exponent(), 10.0);
    }

    #[test]
    fn dc_mode_only_for_constant() {
        let g = grid5(4);
        let s = transform(&Field::constant(g, 1.0)).unwrap();
        for (i, c) in s.coefficients().iter().enumerate() {
            let expect = if i == 0 { 1.0 } else { 0.0 };
            assert!((c.re - expect).abs() < 1e-14 && c.im.abs() < 1e-14);
        }
    }

    #[test]
    fn cosine_has_two_half_coefficients() {
        let g = grid5(6);
        let u = Field::from_fn(g, |x| x[0].cos()).unwrap();
        let s = transform(&u).unwrap();
        for (i, c) in s.coefficients().iter().enumerate() {
            let k = g.frequency_vector(i);
            let hit = k[1..].iter().all(|&v| v == 0) && k[0].abs() == 1;
            let expect = if hit { 0.5 } else { 0.0 };
            assert!((c - Complex64::new(expect, 0.0)).norm() < 1e-14, "{k:?} {c}");
        }
    }

    #[test]
    fn round_trip_and_rejects_nan() {
        let g = grid5(6);
        let u = random_field(g, 1);
        let back = inverse_transform(&transform(&u).unwrap());
        let err = back.sub(&u).unwrap().max_abs() / u.max_abs();
        assert!(err < 1e-12, "{err}");
        let mut vals = u.into_values();
        vals[17] = f64::NAN;
        assert!(matches!(
            Field::new(g, vals),
            Err(Error::NonFinite { index: 17 })
        ));
    }

    #[test]
    fn laplacian_eigenmodes() {
        let g = grid5(8);
        let u = Field::from_fn(g, |x| x[0].cos()).unwrap();
        assert!(laplacian(&u).sub(&u).unwrap().max_abs() < 1e-12);
        assert!(laplacian(&Field::constant(g, 3.0)).max_abs() < 1e-12);
        let v = Field::from_fn(g, |x| (2.0 * x[0]).cos() + x[1].cos()).unwrap();
        let want = Field::from_fn(g, |x| 4.0 * (2.0 * x[0]).cos() + x[1].cos()).unwrap();
        assert!(laplacian(&v).sub(&want).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_scales_with_box() {
        let g = GridSpec::new(5, 6, 4.0).unwrap();
        let w = 2.0 * PI / 4.0;
        let u = Field::from_fn(g, |x| (w * x[2]).sin()).unwrap();
        assert!(laplacian(&u).sub(&u.scaled(w * w)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn integrate_examples() {
        let g = grid5(4);
        let v = (2.0 * PI).powi(5);
        assert!((integrate(&Field::constant(g, 1.0)) - v).abs() < 1e-9 * v);
        let c = Field::from_fn(g, |x| x[0].cos()).unwrap();
        assert!(integrate(&c).abs() < 1e-9);
        assert!((integrate(&c.mul(&c).unwrap()) - v / 2.0).abs() < 1e-9 * v);
    }

    #[test]
    fn power_examples() {
        let g = grid5(4);
        let mut vals = vec![0.0; g.node_count()];
        vals[0] = -2.0;
        let u = Field::new(g, vals).unwrap();
        assert_eq!(pointwise_power(&u, 3.0, true).unwrap().values()[0], -8.0);
        assert_eq!(pointwise_power(&u, 0.5, true).unwrap().values()[1], 0.0);
        assert!((pointwise_power(&u, 0.5, false).unwrap().values()[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(pointwise_power(&u, 0.0, true).is_err());
    }

    #[test]
    fn plancherel() {
        let g = grid5(6);
        let u = random_field(g, 2);
        let v = random_field(g, 3);
        let a = u.inner(&v).unwrap();
        let b = spectral_inner(&u, &v).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} {b}");
    }

    #[test]
    fn derivative_of_sine() {
        let g = grid5(8);
        let u = Field::from_fn(g, |x| (2.0 * x[3]).sin()).unwrap();
        let d = partial_derivative(&u, 3);
        let want = Field::from_fn(g, |x| 2.0 * (2.0 * x[3]).cos()).unwrap();
        assert!(d.sub(&want).unwrap().max_abs() < 1e-12);
        assert!(partial_derivative(&u, 1).max_abs() < 1e-12);
    }

    #[test]
    fn hermitian_symmetry_of_real_fields() {
        let g = grid5(4);
        let u = random_field(g, 4);
        let s = transform(&u).unwrap();
        assert!(s.hermitian_defect() < 1e-14);
        let (_, residue) = inverse_transform_with_residue(&s.apply_radial_symbol(|k| k * k + 1.0));
        assert!(residue < 1e-12);
    }

    #[test]
    fn noise_is_band_limited() {
        let g = grid5(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = band_limited_noise(g, 3, &mut rng);
        assert!((u.max_abs() - 1.0).abs() < 1e-14);
        let s = transform(&u).unwrap();
        for (i, c) in s.coefficients().iter().enumerate() {
            let k2: i64 = g.frequency_vector(i).iter().map(|k| k * k).sum();
            if k2 > 3 {
                assert!(c.norm() < 1e-14);
            }
        }
        assert!(spectral_tail(&u) < 1e-20);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = grid5(4);
        let u = random_field(g, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.field");
        write_snapshot(&u, &path).unwrap();
        assert_eq!(read_snapshot(&path).unwrap(), u);
        let mut csv = Vec::new();
        write_slice_csv(&u, &[0, 2], &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 16);
    }
}
