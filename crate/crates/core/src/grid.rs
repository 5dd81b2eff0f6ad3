//! Periodic boxes, their Fourier transform and scalar Fourier multipliers.
//!
//! A [`GridSpec`] samples the box `∏ [0, Lᵢ)` at `nᵢ` points per axis (row
//! major, last axis fastest). Frequencies live on the signed lattice
//! `ξᵢ = 2π·sᵢ/Lᵢ` with `sᵢ ∈ [−nᵢ/2, nᵢ/2)`; the Nyquist index is kept and
//! treated as an ordinary nonzero frequency.
//!
//! Normalization: the forward transform returns Fourier series
//! coefficients, `f̂(ξ) = N⁻¹ Σₓ f(x) e^{−i⟨ξ,x⟩}`, and the inverse is the
//! plain sum `f(x) = Σ_ξ f̂(ξ) e^{i⟨ξ,x⟩}`. Parseval then reads
//! `‖f‖₂² = |box| · Σ_ξ |f̂(ξ)|²` with the spatial norm taken by grid
//! quadrature.

use std::borrow::Cow;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Discretization of a periodic box in ℝᵐ.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    sizes: Vec<usize>,
    box_length: Vec<f64>,
}

impl GridSpec {
    pub fn new(sizes: Vec<usize>, box_length: Vec<f64>) -> Result<Self> {
        if sizes.is_empty() || sizes.len() != box_length.len() {
            return Err(Error::Domain(format!(
                "grid needs matching non-empty sizes and box lengths, got {} and {}",
                sizes.len(),
                box_length.len()
            )));
        }
        if let Some(n) = sizes.iter().find(|&&n| n < 4 || !n.is_power_of_two()) {
            return Err(Error::Domain(format!(
                "axis size {n} is not a power of two >= 4"
            )));
        }
        if let Some(l) = box_length.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Domain(format!("box length {l} is not positive")));
        }
        Ok(Self { sizes, box_length })
    }

    /// `n^m` points on a box of side `2π`.
    pub fn cube(m: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; m], vec![2.0 * PI; m])
    }

    pub fn m(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn box_length(&self) -> &[f64] {
        &self.box_length
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.box_length.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    /// Per-axis integer index of a flat grid position.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.m()];
        for axis in (0..self.m()).rev() {
            idx[axis] = flat % self.sizes[axis];
            flat /= self.sizes[axis];
        }
        idx
    }

    /// Signed lattice integer for index `j` on an axis of size `n`.
    pub fn signed_index(j: usize, n: usize) -> i64 {
        if j < n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    /// Smallest nonzero lattice frequency norm.
    pub fn min_frequency(&self) -> f64 {
        self.box_length
            .iter()
            .map(|l| 2.0 * PI / l)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest lattice frequency norm.
    pub fn max_frequency(&self) -> f64 {
        self.sizes
            .iter()
            .zip(&self.box_length)
            .map(|(&n, l)| (PI * n as f64 / l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Spatial coordinates of a flat grid position.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .zip(self.sizes.iter().zip(&self.box_length))
            .map(|(&j, (&n, l))| j as f64 * l / n as f64)
            .collect()
    }
}

/// The frequency vector attached to each grid position.
#[derive(Debug, Clone)]
pub struct FrequencyLattice {
    m: usize,
    xi: Vec<f64>,
    norm_sq: Vec<f64>,
    integer: Vec<i64>,
}

impl FrequencyLattice {
    pub fn new(spec: &GridSpec) -> Self {
        let m = spec.m();
        let len = spec.len();
        let mut xi = Vec::with_capacity(len * m);
        let mut integer = Vec::with_capacity(len * m);
        let mut norm_sq = Vec::with_capacity(len);
        for flat in 0..len {
            let mut s = 0.0;
            for (axis, j) in spec.unravel(flat).into_iter().enumerate() {
                let n = GridSpec::signed_index(j, spec.sizes[axis]);
                let x = 2.0 * PI * n as f64 / spec.box_length[axis];
                integer.push(n);
                xi.push(x);
                s += x * x;
            }
            norm_sq.push(s);
        }
        Self {
            m,
            xi,
            norm_sq,
            integer,
        }
    }

    pub fn len(&self) -> usize {
        self.norm_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norm_sq.is_empty()
    }

    pub fn xi(&self, flat: usize) -> &[f64] {
        &self.xi[flat * self.m..(flat + 1) * self.m]
    }

    /// Signed lattice integers of a flat position.
    pub fn integer(&self, flat: usize) -> &[i64] {
        &self.integer[flat * self.m..(flat + 1) * self.m]
    }

    pub fn norm_sq(&self, flat: usize) -> f64 {
        self.norm_sq[flat]
    }

    /// Flat position of `ξ = 0`; always the first grid point.
    pub fn zero_index(&self) -> usize {
        0
    }
}

/// Which side of the Fourier transform a field's values live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Spatial,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// A complex scalar field on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<Complex64>,
    repr: Representation,
}

impl ScalarField {
    pub fn zeros(spec: &GridSpec, repr: Representation) -> Self {
        Self {
            spec: spec.clone(),
            values: vec![ZERO; spec.len()],
            repr,
        }
    }

    pub fn from_values(spec: &GridSpec, values: Vec<Complex64>, repr: Representation) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "grid has {} points, got {} values",
                spec.len(),
                values.len()
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            values,
            repr,
        })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(spec: &GridSpec, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..spec.len()).map(|i| f(&spec.point(i))).collect();
        Self {
            spec: spec.clone(),
            values,
            repr: Representation::Spatial,
        }
    }

    /// The plane wave `e^{i⟨ξ₀, x⟩}` for the lattice frequency with signed
    /// integer coordinates `modes`.
    pub fn plane_wave(spec: &GridSpec, modes: &[i64]) -> Self {
        let xi0: Vec<f64> = modes
            .iter()
            .zip(spec.box_length())
            .map(|(&n, l)| 2.0 * PI * n as f64 / l)
            .collect();
        Self::from_fn(spec, |x| {
            let phase: f64 = x.iter().zip(&xi0).map(|(a, b)| a * b).sum();
            Complex64::from_polar(1.0, phase)
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn transform(mut self, direction: Direction) -> Result<ScalarField> {
        let expected = match direction {
            Direction::Forward => Representation::Spatial,
            Direction::Inverse => Representation::Frequency,
        };
        if self.repr != expected {
            return Err(Error::State(format!(
                "{direction:?} transform needs a {expected:?} field, got {:?}",
                self.repr
            )));
        }
        fft_nd(&mut self.values, &self.spec.sizes, direction);
        if direction == Direction::Forward {
            let scale = 1.0 / self.spec.len() as f64;
            self.values.iter_mut().for_each(|v| *v *= scale);
            self.repr = Representation::Frequency;
        } else {
            self.repr = Representation::Spatial;
        }
        Ok(self)
    }

    pub fn to_frequency(&self) -> ScalarField {
        match self.repr {
            Representation::Frequency => self.clone(),
            Representation::Spatial => self.clone().transform(Direction::Forward).unwrap(),
        }
    }

    pub fn to_spatial(&self) -> ScalarField {
        match self.repr {
            Representation::Spatial => self.clone(),
            Representation::Frequency => self.clone().transform(Direction::Inverse).unwrap(),
        }
    }

    pub fn into_representation(self, repr: Representation) -> ScalarField {
        match (self.repr, repr) {
            (Representation::Spatial, Representation::Frequency) => {
                self.transform(Direction::Forward).unwrap()
            }
            (Representation::Frequency, Representation::Spatial) => {
                self.transform(Direction::Inverse).unwrap()
            }
            _ => self,
        }
    }

    /// Multiplies every frequency coefficient at `ξ ≠ 0` by `mult(ξ)` and the
    /// zero mode by `zero_mode`. The result keeps the input representation.
    pub fn apply_scalar_multiplier(
        &self,
        mult: impl Fn(&[f64]) -> Complex64,
        zero_mode: Complex64,
    ) -> Result<ScalarField> {
        let lattice = FrequencyLattice::new(&self.spec);
        self.apply_on_lattice(&lattice, mult, zero_mode)
    }

    pub(crate) fn apply_on_lattice(
        &self,
        lattice: &FrequencyLattice,
        mult: impl Fn(&[f64]) -> Complex64,
        zero_mode: Complex64,
    ) -> Result<ScalarField> {
        let repr = self.repr;
        let mut freq = self.to_frequency();
        for (flat, v) in freq.values.iter_mut().enumerate() {
            let factor = if flat == lattice.zero_index() {
                zero_mode
            } else {
                mult(lattice.xi(flat))
            };
            if !(factor.re.is_finite() && factor.im.is_finite()) {
                return Err(Error::Numeric(format!(
                    "multiplier is not finite at ξ = {:?}",
                    lattice.xi(flat)
                )));
            }
            *v *= factor;
        }
        Ok(freq.into_representation(repr))
    }

    /// Riesz transform `R_l` with symbol `i ξ_l / |ξ|`; `l` is one-based.
    pub fn riesz(&self, l: usize) -> Result<ScalarField> {
        let axis = self.check_axis(l)?;
        self.apply_scalar_multiplier(
            |xi| {
                let n = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
                Complex64::new(0.0, xi[axis] / n)
            },
            ZERO,
        )
    }

    /// Heat extension at height `t`: symbol `e^{−t|ξ|²}`, mean preserved.
    pub fn heat_extend(&self, t: f64) -> Result<ScalarField> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("heat time {t} is negative")));
        }
        self.apply_scalar_multiplier(
            |xi| Complex64::new((-t * xi.iter().map(|x| x * x).sum::<f64>()).exp(), 0.0),
            Complex64::new(1.0, 0.0),
        )
    }

    /// Spectral derivative `∂ᵢ` with symbol `i ξᵢ`; `i` is one-based.
    pub fn partial_derivative(&self, i: usize) -> Result<ScalarField> {
        let axis = self.check_axis(i)?;
        self.apply_scalar_multiplier(|xi| Complex64::new(0.0, xi[axis]), ZERO)
    }

    fn check_axis(&self, l: usize) -> Result<usize> {
        if l == 0 || l > self.spec.m() {
            return Err(Error::Domain(format!(
                "axis {l} outside 1..={}",
                self.spec.m()
            )));
        }
        Ok(l - 1)
    }

    /// `‖f‖₂` by grid quadrature.
    pub fn l2_norm(&self) -> f64 {
        let s = self.to_spatial();
        (s.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.spec.cell_volume()).sqrt()
    }

    /// `(|box| Σ_ξ |f̂(ξ)|²)^{1/2}`, equal to [`Self::l2_norm`] by Parseval.
    pub fn frequency_l2_norm(&self) -> f64 {
        let f = self.to_frequency();
        (f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.spec.volume()).sqrt()
    }

    /// Mean over the box, i.e. the zero-frequency coefficient.
    pub fn mean(&self) -> Complex64 {
        match self.repr {
            Representation::Frequency => self.values[0],
            Representation::Spatial => {
                self.values.iter().sum::<Complex64>() / self.values.len() as f64
            }
        }
    }

    pub fn remove_mean(&self) -> ScalarField {
        let mean = self.mean();
        let mut out = self.clone();
        match self.repr {
            Representation::Frequency => out.values[0] = ZERO,
            Representation::Spatial => out.values.iter_mut().for_each(|v| *v -= mean),
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> ScalarField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Largest `|a − b|` over grid points, compared in this field's
    /// representation.
    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        let other = other.clone().into_representation(self.repr);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest imaginary part in the spatial representation.
    pub fn max_imag(&self) -> f64 {
        self.to_spatial()
            .values
            .iter()
            .map(|v| v.im.abs())
            .fold(0.0, f64::max)
    }
}

/// In-place n-dimensional FFT over a row-major buffer; unnormalized.
pub(crate) fn fft_nd(data: &mut [Complex64], sizes: &[usize], direction: Direction) {
    let mut planner = FftPlanner::<f64>::new();
    let total: usize = sizes.iter().product();
    let mut stride = total;
    for &n in sizes {
        stride /= n;
        let fft = match direction {
            Direction::Forward => planner.plan_fft_forward(n),
            Direction::Inverse => planner.plan_fft_inverse(n),
        };
        if stride == 1 {
            fft.process(data);
            continue;
        }
        let mut line = vec![ZERO; n];
        let block = n * stride;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * stride];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride] = *v;
                }
            }
        }
    }
}

/// A field with values in `ℂⁿ`, one scalar channel per component.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    spec: GridSpec,
    channels: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(channels: Vec<ScalarField>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::Shape("a vector field needs at least one channel".into()))?;
        let spec = first.spec.clone();
        let repr = first.repr;
        if channels.iter().any(|c| c.spec != spec || c.repr != repr) {
            return Err(Error::Shape(
                "channels must share grid and representation".into(),
            ));
        }
        Ok(Self { spec, channels })
    }

    pub fn zeros(spec: &GridSpec, dim: usize, repr: Representation) -> Self {
        Self {
            spec: spec.clone(),
            channels: vec![ScalarField::zeros(spec, repr); dim],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[ScalarField] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &ScalarField {
        &self.channels[i]
    }

    pub fn into_channels(self) -> Vec<ScalarField> {
        self.channels
    }

    pub fn representation(&self) -> Representation {
        self.channels[0].repr
    }

    pub fn map_channels(&self, f: impl Fn(&ScalarField) -> Result<ScalarField>) -> Result<VectorField> {
        VectorField::new(self.channels.iter().map(f).collect::<Result<_>>()?)
    }

    pub fn to_frequency(&self) -> VectorField {
        self.map_channels(|c| Ok(c.to_frequency())).unwrap()
    }

    pub fn to_spatial(&self) -> VectorField {
        self.map_channels(|c| Ok(c.to_spatial())).unwrap()
    }

    pub fn heat_extend(&self, t: f64) -> Result<VectorField> {
        self.map_channels(|c| c.heat_extend(t))
    }

    pub fn partial_derivative(&self, i: usize) -> Result<VectorField> {
        self.map_channels(|c| c.partial_derivative(i))
    }

    pub fn remove_mean(&self) -> VectorField {
        self.map_channels(|c| Ok(c.remove_mean())).unwrap()
    }

    pub fn scale(&self, s: Complex64) -> VectorField {
        self.map_channels(|c| Ok(c.scale(s))).unwrap()
    }

    fn spatial_view(&self) -> Cow<'_, VectorField> {
        if self.representation() == Representation::Spatial {
            Cow::Borrowed(self)
        } else {
            Cow::Owned(self.to_spatial())
        }
    }

    /// Largest channel mean relative to the field's sup norm.
    pub fn relative_mean(&self) -> f64 {
        let mean = self
            .channels
            .iter()
            .map(|c| c.mean().norm())
            .fold(0.0, f64::max);
        let scale = self.to_spatial().max_pointwise_norm();
        if scale == 0.0 {
            mean
        } else {
            mean / scale
        }
    }

    /// Pointwise Euclidean norm across channels, spatial side.
    pub fn pointwise_norms(&self) -> Vec<f64> {
        let s = self.spatial_view();
        let mut acc = vec![0.0; self.spec.len()];
        for c in &s.channels {
            for (a, v) in acc.iter_mut().zip(&c.values) {
                *a += v.norm_sqr();
            }
        }
        acc.iter_mut().for_each(|a| *a = a.sqrt());
        acc
    }

    pub fn max_pointwise_norm(&self) -> f64 {
        self.pointwise_norms().into_iter().fold(0.0, f64::max)
    }

    /// `‖f‖_p = (Σₓ cell · ‖f(x)‖^p)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_from_pointwise(&self.pointwise_norms(), p, self.spec.cell_volume())
    }

    /// `∫ ⟨f, g⟩` by grid quadrature, conjugate-linear in `other`.
    pub fn pairing(&self, other: &VectorField) -> Complex64 {
        let a = self.spatial_view();
        let b = other.spatial_view();
        let mut s = ZERO;
        for (ca, cb) in a.channels.iter().zip(&b.channels) {
            for (x, y) in ca.values.iter().zip(&cb.values) {
                s += x * y.conj();
            }
        }
        s * self.spec.cell_volume()
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        self.channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.channels.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    /// Sum `self + s·other`, channel by channel, in this field's representation.
    pub fn add_scaled(&self, other: &VectorField, s: f64) -> VectorField {
        let repr = self.representation();
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| {
                let b = b.clone().into_representation(repr);
                let mut out = a.clone();
                for (x, y) in out.values.iter_mut().zip(&b.values) {
                    *x += y * s;
                }
                out
            })
            .collect();
        VectorField {
            spec: self.spec.clone(),
            channels,
        }
    }
}

pub(crate) fn lp_from_pointwise(norms: &[f64], p: f64, cell: f64) -> f64 {
    if p.is_infinite() {
        return norms.iter().cloned().fold(0.0, f64::max);
    }
    (norms.iter().map(|n| n.powf(p)).sum::<f64>() * cell).powf(1.0 / p)
}

/// True when every signed lattice coordinate satisfies `3|s| < n`, i.e. the
/// top third of each axis' frequencies is excluded.
pub fn in_band(integer: &[i64], sizes: &[usize]) -> bool {
    integer
        .iter()
        .zip(sizes)
        .all(|(&s, &n)| 3 * s.unsigned_abs() < n as u64)
}

/// Zeroes the mean and every out-of-band coefficient, and drops imaginary
/// parts on the spatial side. Returns a spatial field.
pub fn project_band_limited_real(field: &ScalarField) -> ScalarField {
    let lattice = FrequencyLattice::new(field.spec());
    let mut f = field.to_frequency();
    let sizes = field.spec().sizes().to_vec();
    for (flat, v) in f.values.iter_mut().enumerate() {
        if flat == 0 || !in_band(lattice.integer(flat), &sizes) {
            *v = ZERO;
        }
    }
    let mut s = f.to_spatial();
    s.values.iter_mut().for_each(|v| v.im = 0.0);
    s
}

/// A real, mean-zero, band-limited random scalar field.
pub fn random_band_limited<R: Rng + ?Sized>(spec: &GridSpec, rng: &mut R) -> ScalarField {
    let lattice = FrequencyLattice::new(spec);
    let values = (0..spec.len())
        .map(|flat| {
            if flat == 0 || !in_band(lattice.integer(flat), spec.sizes()) {
                ZERO
            } else {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            }
        })
        .collect();
    let f = ScalarField::from_values(spec, values, Representation::Frequency).unwrap();
    let mut s = f.to_spatial();
    s.values.iter_mut().for_each(|v| v.im = 0.0);
    s
}

/// `dim` independent channels of [`random_band_limited`].
pub fn random_band_limited_vector<R: Rng + ?Sized>(
    spec: &GridSpec,
    dim: usize,
    rng: &mut R,
) -> VectorField {
    VectorField::new((0..dim).map(|_| random_band_limited(spec, rng)).collect()).unwrap()
}
