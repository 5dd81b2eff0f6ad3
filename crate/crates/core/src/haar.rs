//! Dyadic Haar analysis on `[0, 1]` with values in `E = ℝᵈ`.
//!
//! Conventions: for a dyadic `I`, `I₋` is its left half and `I₊` its right
//! half, and
//!
//! ```text
//! h_I = |I|^{-1/2} (1_{I₊} − 1_{I₋}),   ⟨f, h_I⟩ = (|I|^{1/2}/2)(⟨f⟩_{I₊} − ⟨f⟩_{I₋}).
//! ```
//!
//! So `h_I` is positive on the right half. Averages are over `[0, 1]`
//! with Lebesgue measure, so `⟨‖f‖ᵖ⟩` is the plain mean of the sample
//! norms.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{conjugate, p_star};

/// Deepest supported generation.
pub const MAX_DEPTH: usize = 20;

/// Tolerance for `σ_Iᵀσ_I = I`.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-12;

/// A dyadic subinterval `[j 2^{-g}, (j + 1) 2^{-g})` of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DyadicInterval {
    generation: usize,
    index: usize,
}

impl DyadicInterval {
    pub fn new(generation: usize, index: usize) -> Result<Self> {
        if generation > MAX_DEPTH || index >= 1usize << generation {
            return Err(Error::Domain(format!(
                "no dyadic interval of generation {generation} with index {index} in [0, 1]"
            )));
        }
        Ok(Self { generation, index })
    }

    pub fn unit() -> Self {
        Self {
            generation: 0,
            index: 0,
        }
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn length(&self) -> f64 {
        0.5f64.powi(self.generation as i32)
    }

    pub fn left(&self) -> f64 {
        self.index as f64 * self.length()
    }

    /// `(I₋, I₊)`.
    pub fn children(&self) -> (DyadicInterval, DyadicInterval) {
        let g = self.generation + 1;
        (
            DyadicInterval {
                generation: g,
                index: 2 * self.index,
            },
            DyadicInterval {
                generation: g,
                index: 2 * self.index + 1,
            },
        )
    }

    /// Position in generation-major order: `2^g − 1 + j`.
    pub fn flat(&self) -> usize {
        (1usize << self.generation) - 1 + self.index
    }
}

/// A step function constant on the `2^depth` cells of generation `depth`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicFunction {
    depth: usize,
    dim: usize,
    /// Row-major: cell `i` occupies `samples[i*dim..(i+1)*dim]`.
    samples: Vec<f64>,
}

impl DyadicFunction {
    pub fn new(depth: usize, dim: usize, samples: Vec<f64>) -> Result<Self> {
        if depth > MAX_DEPTH || dim == 0 {
            return Err(Error::Domain(format!(
                "depth {depth} / dimension {dim} out of range"
            )));
        }
        if samples.len() != (1usize << depth) * dim {
            return Err(Error::Shape(format!(
                "expected {} samples of dimension {dim}, got {} numbers",
                1usize << depth,
                samples.len()
            )));
        }
        Ok(Self {
            depth,
            dim,
            samples,
        })
    }

    pub fn scalar(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if !n.is_power_of_two() {
            return Err(Error::Shape(format!("{n} samples is not a power of two")));
        }
        Self::new(n.trailing_zeros() as usize, 1, values.to_vec())
    }

    pub fn constant(depth: usize, value: &[f64]) -> Result<Self> {
        let samples = value
            .iter()
            .copied()
            .cycle()
            .take(value.len() << depth)
            .collect();
        Self::new(depth, value.len(), samples)
    }

    pub fn random<R: Rng + ?Sized>(depth: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let samples = (0..dim << depth).map(|_| rng.sample(StandardNormal)).collect();
        Self::new(depth, dim, samples)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        1 << self.depth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample(&self, cell: usize) -> &[f64] {
        &self.samples[cell * self.dim..(cell + 1) * self.dim]
    }

    /// The same function sampled on a finer grid.
    pub fn refine(&self, depth: usize) -> Result<Self> {
        if depth < self.depth {
            return Err(Error::Domain(format!(
                "cannot refine depth {} down to {depth}",
                self.depth
            )));
        }
        let rep = 1usize << (depth - self.depth);
        let mut samples = Vec::with_capacity(self.samples.len() * rep);
        for cell in 0..self.cells() {
            for _ in 0..rep {
                samples.extend_from_slice(self.sample(cell));
            }
        }
        Self::new(depth, self.dim, samples)
    }

    /// `averages()[g]` holds the `2^g` cell means of generation `g`,
    /// computed by pairwise aggregation from the finest level.
    pub fn averages(&self) -> Vec<Vec<f64>> {
        let mut levels = vec![self.samples.clone()];
        for _ in 0..self.depth {
            let fine = levels.last().unwrap();
            let coarse: Vec<f64> = fine
                .chunks(2 * self.dim)
                .flat_map(|pair| {
                    let (a, b) = pair.split_at(self.dim);
                    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>()
                })
                .collect();
            levels.push(coarse);
        }
        levels.reverse();
        levels
    }

    pub fn average_over(&self, interval: &DyadicInterval) -> Result<Vec<f64>> {
        if interval.generation > self.depth {
            return Err(Error::Domain(format!(
                "generation {} is finer than depth {}",
                interval.generation, self.depth
            )));
        }
        let per = 1usize << (self.depth - interval.generation);
        let start = interval.index * per;
        let mut acc = vec![0.0; self.dim];
        for cell in start..start + per {
            for (a, v) in acc.iter_mut().zip(self.sample(cell)) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= per as f64);
        Ok(acc)
    }

    pub fn mean(&self) -> Vec<f64> {
        self.averages().swap_remove(0)
    }

    /// `⟨‖f‖ᵖ⟩` over `[0, 1]`.
    pub fn p_average(&self, p: f64) -> f64 {
        let n = self.cells() as f64;
        (0..self.cells()).map(|c| norm(self.sample(c)).powf(p)).sum::<f64>() / n
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.p_average(p).powf(1.0 / p)
    }

    /// `f − ⟨f⟩_J`.
    pub fn mean_free(&self) -> Self {
        let mean = self.mean();
        let mut out = self.clone();
        for cell in out.samples.chunks_mut(self.dim) {
            for (v, m) in cell.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        out
    }

    /// Applies one matrix to every sample.
    pub fn map_samples(&self, u: &DMatrix<f64>) -> Result<Self> {
        if u.nrows() != self.dim || u.ncols() != self.dim {
            return Err(Error::Shape("matrix does not act on E".into()));
        }
        let samples = self
            .samples
            .chunks(self.dim)
            .flat_map(|s| (u * DVector::from_column_slice(s)).iter().copied().collect::<Vec<_>>())
            .collect();
        Self::new(self.depth, self.dim, samples)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `⟨f, h_I⟩`.
pub fn haar_coefficient(f: &DyadicFunction, interval: &DyadicInterval) -> Result<Vec<f64>> {
    if interval.generation >= f.depth {
        return Err(Error::Domain(format!(
            "interval of generation {} has no Haar coefficient at depth {}",
            interval.generation, f.depth
        )));
    }
    let (minus, plus) = interval.children();
    let a = f.average_over(&plus)?;
    let b = f.average_over(&minus)?;
    let s = interval.length().sqrt() / 2.0;
    Ok(a.iter().zip(&b).map(|(x, y)| s * (x - y)).collect())
}

/// All Haar coefficients in generation-major order.
pub fn haar_coefficients(f: &DyadicFunction) -> Vec<Vec<f64>> {
    let avg = f.averages();
    let d = f.dim;
    let mut out = Vec::with_capacity(f.cells().saturating_sub(1));
    for g in 0..f.depth {
        let s = 0.5f64.powi(g as i32).sqrt() / 2.0;
        let child = &avg[g + 1];
        for j in 0..1usize << g {
            let minus = &child[2 * j * d..(2 * j + 1) * d];
            let plus = &child[(2 * j + 1) * d..(2 * j + 2) * d];
            out.push(plus.iter().zip(minus).map(|(x, y)| s * (x - y)).collect());
        }
    }
    out
}

/// `⟨f⟩_J + Σ_I c_I h_I` from a mean and generation-major coefficients.
pub fn haar_reconstruct(mean: &[f64], coefficients: &[Vec<f64>], depth: usize) -> Result<DyadicFunction> {
    let dim = mean.len();
    if coefficients.len() != (1usize << depth) - 1 {
        return Err(Error::Shape(format!(
            "{} coefficients do not fit depth {depth}",
            coefficients.len()
        )));
    }
    let mut samples = Vec::with_capacity(dim << depth);
    for cell in 0..1usize << depth {
        let mut v = mean.to_vec();
        for g in 0..depth {
            let j = cell >> (depth - g);
            let right = (cell >> (depth - g - 1)) & 1 == 1;
            let h = 0.5f64.powi(g as i32).sqrt().recip() * if right { 1.0 } else { -1.0 };
            let c = &coefficients[(1usize << g) - 1 + j];
            for (x, ci) in v.iter_mut().zip(c) {
                *x += h * ci;
            }
        }
        samples.extend_from_slice(&v);
    }
    DyadicFunction::new(depth, dim, samples)
}

/// One orthogonal matrix per dyadic interval of generation below `depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarSymbol {
    depth: usize,
    dim: usize,
    matrices: Vec<DMatrix<f64>>,
}

impl HaarSymbol {
    /// Matrices in generation-major order; each must be orthogonal.
    pub fn new(depth: usize, dim: usize, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if matrices.len() != (1usize << depth) - 1 {
            return Err(Error::Shape(format!(
                "{} symbols do not fit depth {depth}",
                matrices.len()
            )));
        }
        let id = DMatrix::<f64>::identity(dim, dim);
        for (i, s) in matrices.iter().enumerate() {
            if s.nrows() != dim || s.ncols() != dim {
                return Err(Error::Shape(format!("symbol {i} is not {dim}x{dim}")));
            }
            let err = (s.transpose() * s - &id).abs().max();
            if err > ORTHOGONALITY_TOLERANCE {
                return Err(Error::Precondition(format!(
                    "symbol {i} is not unitary (deviation {err:.3e})"
                )));
            }
        }
        Ok(Self {
            depth,
            dim,
            matrices,
        })
    }

    pub fn identity(depth: usize, dim: usize) -> Self {
        Self::constant(depth, DMatrix::identity(dim, dim))
    }

    pub fn constant(depth: usize, sigma: DMatrix<f64>) -> Self {
        let dim = sigma.nrows();
        Self {
            depth,
            dim,
            matrices: vec![sigma; (1usize << depth) - 1],
        }
    }

    /// Random `±1` for scalar `E`, Haar-distributed orthogonal otherwise.
    pub fn random<R: Rng + ?Sized>(depth: usize, dim: usize, rng: &mut R) -> Self {
        let matrices = (0..(1usize << depth) - 1)
            .map(|_| random_orthogonal(dim, rng))
            .collect();
        Self {
            depth,
            dim,
            matrices,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, interval: &DyadicInterval) -> &DMatrix<f64> {
        &self.matrices[interval.flat()]
    }
}

/// QR of a Gaussian matrix with the signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    if dim == 1 {
        let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        return DMatrix::from_element(1, 1, s);
    }
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `T_σ f = Σ_I σ_I ⟨f, h_I⟩ h_I`; the mean of `f` is dropped.
pub fn haar_multiplier(f: &DyadicFunction, sigma: &HaarSymbol) -> Result<DyadicFunction> {
    if f.depth != sigma.depth || f.dim != sigma.dim {
        return Err(Error::Shape(format!(
            "function (depth {}, dim {}) and symbol (depth {}, dim {}) disagree",
            f.depth, f.dim, sigma.depth, sigma.dim
        )));
    }
    let coeffs = haar_coefficients(f);
    let mapped: Vec<Vec<f64>> = coeffs
        .iter()
        .zip(&sigma.matrices)
        .map(|(c, s)| (s * DVector::from_column_slice(c)).iter().copied().collect())
        .collect();
    haar_reconstruct(&vec![0.0; f.dim], &mapped, f.depth)
}

/// `¼ Σ_I |I| ‖⟨f⟩_{I₊} − ⟨f⟩_{I₋}‖ ‖⟨g⟩_{I₊} − ⟨g⟩_{I₋}‖` over generations
/// below the common depth.
pub fn bilinear_haar_sum(f: &DyadicFunction, g: &DyadicFunction) -> Result<f64> {
    if f.depth != g.depth || f.dim != g.dim {
        return Err(Error::Shape(format!(
            "bilinear sum needs equal shapes, got (depth {}, dim {}) and (depth {}, dim {})",
            f.depth, f.dim, g.depth, g.dim
        )));
    }
    let (af, ag) = (f.averages(), g.averages());
    let d = f.dim;
    let mut total = 0.0;
    for gen in 0..f.depth {
        let (cf, cg) = (&af[gen + 1], &ag[gen + 1]);
        let mut level = 0.0;
        for j in 0..1usize << gen {
            let (lo, mid, hi) = (2 * j * d, (2 * j + 1) * d, (2 * j + 2) * d);
            level += diff_norm(&cf[mid..hi], &cf[lo..mid]) * diff_norm(&cg[mid..hi], &cg[lo..mid]);
        }
        total += level * 0.5f64.powi(gen as i32);
    }
    Ok(total / 4.0)
}

/// `(p − 1)⟨‖f‖ᵖ⟩^{1/p}⟨‖g‖^q⟩^{1/q}`.
pub fn bilinear_bound(f: &DyadicFunction, g: &DyadicFunction, p: f64) -> f64 {
    (p - 1.0) * f.lp_norm(p) * g.lp_norm(conjugate(p))
}

/// Which inequality a fuzz run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HaarSuite {
    /// `‖T_σf‖_p ≤ (p* − 1)‖f‖_p`.
    Burkholder,
    /// The bilinear sum against `(p − 1)‖f‖_p‖g‖_q`.
    BilinearHaar,
}

#[derive(Debug, Clone)]
pub struct HaarFuzzConfig {
    pub suite: HaarSuite,
    pub exponents: Vec<f64>,
    pub dims: Vec<usize>,
    pub max_depth: usize,
    pub trials_per_case: usize,
    pub seed: u64,
}

/// One `(p, dim_E)` cell of a fuzz run.
#[derive(Debug, Clone, Serialize)]
pub struct HaarFuzzCase {
    pub p: f64,
    pub dim_e: usize,
    /// Largest depth drawn.
    pub depth: usize,
    pub trials: usize,
    pub violations: usize,
    /// Largest `lhs − rhs`.
    pub max_slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HaarFuzzSummary {
    pub suite: HaarSuite,
    pub trials: usize,
    pub violations: usize,
    pub max_slack: f64,
    pub cases: Vec<HaarFuzzCase>,
}

/// Absolute slack allowed before a fuzz trial counts as a violation.
pub const HAAR_TOLERANCE: f64 = 1e-12;

fn trial_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut s = seed;
    for x in [a, b] {
        s = (s ^ x.wrapping_add(0x9E37_79B9_7F4A_7C15))
            .wrapping_mul(0xBF58_476D_1CE4_E5B9)
            .rotate_left(31);
    }
    ChaCha8Rng::seed_from_u64(s)
}

/// Random test function: Gaussian, cubed Gaussian, or sparse spikes (at
/// least one, so the function is never zero).
fn fuzz_function(depth: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<DyadicFunction> {
    let kind = rng.gen_range(0..3);
    let n = dim << depth;
    let spike = rng.gen_range(0..n);
    let samples = (0..n)
        .map(|i| {
            let x: f64 = rng.sample(StandardNormal);
            match kind {
                0 => x,
                1 => x * x * x,
                _ => {
                    if i == spike || rng.gen_bool(0.1) {
                        x * 10.0
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect();
    DyadicFunction::new(depth, dim, samples)
}

pub fn haar_fuzz(config: &HaarFuzzConfig) -> Result<HaarFuzzSummary> {
    if config.exponents.iter().any(|&p| !(p >= 2.0)) {
        return Err(Error::Domain("Haar suites need p >= 2".into()));
    }
    if config.max_depth < 1 || config.max_depth > MAX_DEPTH {
        return Err(Error::Domain(format!("depth {} out of range", config.max_depth)));
    }
    let mut cases = Vec::new();
    for (ci, &p) in config.exponents.iter().enumerate() {
        for (di, &dim) in config.dims.iter().enumerate() {
            let case_id = (ci * config.dims.len() + di) as u64;
            let slacks: Vec<(usize, f64)> = (0..config.trials_per_case)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(config.seed, case_id, t as u64);
                    let depth = rng.gen_range(1..=config.max_depth);
                    let f = fuzz_function(depth, dim, &mut rng)?;
                    let slack = match config.suite {
                        HaarSuite::Burkholder => {
                            let sigma = HaarSymbol::random(depth, dim, &mut rng);
                            let tf = haar_multiplier(&f, &sigma)?;
                            tf.lp_norm(p) - (p_star(p) - 1.0) * f.lp_norm(p)
                        }
                        HaarSuite::BilinearHaar => {
                            let g = fuzz_function(depth, dim, &mut rng)?;
                            bilinear_haar_sum(&f, &g)? - bilinear_bound(&f, &g, p)
                        }
                    };
                    Ok((depth, slack))
                })
                .collect::<Result<_>>()?;
            cases.push(HaarFuzzCase {
                p,
                dim_e: dim,
                depth: slacks.iter().map(|s| s.0).max().unwrap_or(0),
                trials: slacks.len(),
                violations: slacks.iter().filter(|s| s.1 > HAAR_TOLERANCE).count(),
                max_slack: slacks.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Ok(HaarFuzzSummary {
        suite: config.suite,
        trials: cases.iter().map(|c| c.trials).sum(),
        violations: cases.iter().map(|c| c.violations).sum(),
        max_slack: cases.iter().map(|c| c.max_slack).fold(f64::NEG_INFINITY, f64::max),
        cases,
    })
}

/// A point `(Ξ, Γ, ξ, γ)` of the Bellman domain at exponent `p ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BellmanPoint {
    pub big_xi: f64,
    pub big_gamma: f64,
    pub xi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub p: f64,
}

impl BellmanPoint {
    /// Rejects points outside the open domain `‖ξ‖ᵖ < Ξ`, `‖γ‖^q < Γ`.
    pub fn new(big_xi: f64, big_gamma: f64, xi: Vec<f64>, gamma: Vec<f64>, p: f64) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::Domain(format!("Bellman points need p >= 2, got {p}")));
        }
        if xi.len() != gamma.len() || xi.is_empty() {
            return Err(Error::Shape("ξ and γ must share a positive dimension".into()));
        }
        let a = Self {
            big_xi,
            big_gamma,
            xi,
            gamma,
            p,
        };
        if !a.is_feasible() {
            return Err(Error::Domain(format!(
                "point is not strictly feasible: ‖ξ‖^p = {:.6e} vs Ξ = {big_xi:.6e}, ‖γ‖^q = {:.6e} vs Γ = {big_gamma:.6e}",
                norm(&a.xi).powf(p),
                norm(&a.gamma).powf(a.q())
            )));
        }
        Ok(a)
    }

    pub fn q(&self) -> f64 {
        conjugate(self.p)
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn is_feasible(&self) -> bool {
        norm(&self.xi).powf(self.p) < self.big_xi && norm(&self.gamma).powf(self.q()) < self.big_gamma
    }

    /// `(p − 1) Ξ^{1/p} Γ^{1/q}`.
    pub fn size_bound(&self) -> f64 {
        (self.p - 1.0) * self.big_xi.powf(1.0 / self.p) * self.big_gamma.powf(1.0 / self.q())
    }

    pub fn midpoint(a: &Self, b: &Self) -> Result<Self> {
        if a.p != b.p || a.dim() != b.dim() {
            return Err(Error::Shape("midpoint of incompatible points".into()));
        }
        let mid = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| 0.5 * (u + v)).collect();
        Self::new(
            0.5 * (a.big_xi + b.big_xi),
            0.5 * (a.big_gamma + b.big_gamma),
            mid(&a.xi, &b.xi),
            mid(&a.gamma, &b.gamma),
            a.p,
        )
    }

    fn key(&self) -> Vec<u64> {
        let mut k = vec![self.big_xi.to_bits(), self.big_gamma.to_bits(), self.p.to_bits()];
        k.extend(self.xi.iter().chain(&self.gamma).map(|x| x.to_bits()));
        k
    }
}

/// A pair `(f, g)` realizing a point's constraints, and its bilinear sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub f: DyadicFunction,
    pub g: DyadicFunction,
    pub value: f64,
}

impl Witness {
    pub fn new(f: DyadicFunction, g: DyadicFunction) -> Result<Self> {
        let value = bilinear_haar_sum(&f, &g)?;
        Ok(Self { f, g, value })
    }

    pub fn depth(&self) -> usize {
        self.f.depth()
    }
}

/// The `a₋` witness on `[0, ½)` and the `a₊` witness on `[½, 1)`.
pub fn concatenate(minus: &Witness, plus: &Witness) -> Result<Witness> {
    let d = minus.depth().max(plus.depth());
    let join = |a: &DyadicFunction, b: &DyadicFunction| -> Result<DyadicFunction> {
        let mut s = a.refine(d)?.samples;
        s.extend_from_slice(b.refine(d)?.samples());
        DyadicFunction::new(d + 1, a.dim(), s)
    };
    Witness::new(join(&minus.f, &plus.f)?, join(&minus.g, &plus.g)?)
}

/// Result of a probe: a certified lower estimate of `B(a)` or nothing.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeOutcome {
    Estimate { value: f64, witness: Witness },
    /// No admissible pair was found within the depth cap and budget.
    NoSample,
}

impl ProbeOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            ProbeOutcome::Estimate { value, .. } => Some(*value),
            ProbeOutcome::NoSample => None,
        }
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            ProbeOutcome::Estimate { witness, .. } => Some(witness),
            ProbeOutcome::NoSample => None,
        }
    }

    /// `B ≥ 0` always, so a missing sample still certifies zero.
    pub fn lower_estimate(&self) -> f64 {
        self.value().unwrap_or(0.0)
    }
}

/// `mean + s·u` with `s ≥ 0` chosen so that `⟨‖·‖ʳ⟩ = target`. The map
/// `s ↦ ⟨‖mean + s u‖ʳ⟩` is convex with its minimum `‖mean‖ʳ` at `s = 0`,
/// hence increasing on `[0, ∞)`.
fn hit_average(mean: &[f64], u: &DyadicFunction, r: f64, target: f64) -> Option<DyadicFunction> {
    let at = |s: f64| -> DyadicFunction {
        let samples = u
            .samples()
            .chunks(u.dim())
            .flat_map(|c| c.iter().zip(mean).map(move |(x, m)| m + s * x))
            .collect();
        DyadicFunction::new(u.depth(), u.dim(), samples).unwrap()
    };
    if u.samples().iter().all(|&x| x == 0.0) {
        return None;
    }
    let mut hi = 1.0;
    let mut tries = 0;
    while at(hi).p_average(r) < target {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid).p_average(r) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (at(lo), at(hi));
    let (elo, ehi) = ((flo.p_average(r) - target).abs(), (fhi.p_average(r) - target).abs());
    Some(if elo <= ehi { flo } else { fhi })
}

/// Samples constrained pairs and keeps the best witness per point and depth.
///
/// Sample `i` at depth `d` is drawn from a generator seeded by
/// `(seed, d, i)`, and cached witnesses of depth at most the cap are always
/// reconsidered, so raising either the budget or the depth cap can only
/// raise the estimate.
#[derive(Debug, Clone)]
pub struct BellmanProber {
    seed: u64,
    cache: HashMap<Vec<u64>, BTreeMap<usize, Witness>>,
}

impl BellmanProber {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            cache: HashMap::new(),
        }
    }

    fn sample(&self, a: &BellmanPoint, depth: usize, i: usize) -> Result<Option<Witness>> {
        let mut rng = trial_rng(self.seed, depth as u64, i as u64);
        let dim = a.dim();
        let uf = DyadicFunction::random(depth, dim, &mut rng)?.mean_free();
        let ug = match i % 3 {
            0 => DyadicFunction::random(depth, dim, &mut rng)?.mean_free(),
            1 => uf.clone(),
            _ => {
                // |u|^{p-2} u, the shape of a near-extremal dual partner.
                let samples = uf
                    .samples()
                    .chunks(dim)
                    .flat_map(|c| {
                        let n = norm(c);
                        let w = if n > 0.0 { n.powf(a.p - 2.0) } else { 0.0 };
                        c.iter().map(move |x| x * w).collect::<Vec<_>>()
                    })
                    .collect();
                DyadicFunction::new(depth, dim, samples)?.mean_free()
            }
        };
        let f = hit_average(&a.xi, &uf, a.p, a.big_xi);
        let g = hit_average(&a.gamma, &ug, a.q(), a.big_gamma);
        match (f, g) {
            (Some(f), Some(g)) => Ok(Some(Witness::new(f, g)?)),
            _ => Ok(None),
        }
    }

    /// Lower estimate of `B(a)` from `budget` samples at each depth
    /// `1..=depth_cap` plus any cached witnesses for `a`. Depth 0 admits
    /// only constants, which never meet strictly feasible constraints.
    pub fn probe(&mut self, a: &BellmanPoint, depth_cap: usize, budget: usize) -> Result<ProbeOutcome> {
        if !a.is_feasible() {
            return Err(Error::Domain("probe point is not strictly feasible".into()));
        }
        if depth_cap > MAX_DEPTH {
            return Err(Error::Domain(format!("depth cap {depth_cap} exceeds {MAX_DEPTH}")));
        }
        let jobs: Vec<(usize, usize)> = (1..=depth_cap)
            .flat_map(|d| (0..budget).map(move |i| (d, i)))
            .collect();
        let found: Vec<Option<Witness>> = jobs
            .par_iter()
            .map(|&(d, i)| self.sample(a, d, i))
            .collect::<Result<_>>()?;
        let key = a.key();
        let cached = self.cache.entry(key).or_default();
        for w in found.into_iter().flatten() {
            match cached.get(&w.depth()) {
                Some(old) if old.value >= w.value => {}
                _ => {
                    cached.insert(w.depth(), w);
                }
            }
        }
        let best = cached
            .range(..=depth_cap)
            .map(|(_, w)| w)
            .fold(None::<&Witness>, |acc, w| match acc {
                Some(b) if b.value >= w.value => Some(b),
                _ => Some(w),
            });
        Ok(match best {
            Some(w) => ProbeOutcome::Estimate {
                value: w.value,
                witness: w.clone(),
            },
            None => ProbeOutcome::NoSample,
        })
    }

    /// Stores a witness for `a` if it beats the cached one at its depth.
    pub fn insert_witness(&mut self, a: &BellmanPoint, witness: Witness) {
        let cached = self.cache.entry(a.key()).or_default();
        match cached.get(&witness.depth()) {
            Some(old) if old.value >= witness.value => {}
            _ => {
                cached.insert(witness.depth(), witness);
            }
        }
    }

    /// Probes `a₋`, `a₊` at `depth_cap − 1`, concatenates their witnesses
    /// into a witness for the midpoint, and probes the midpoint at
    /// `depth_cap`.
    pub fn probe_midpoint(
        &mut self,
        minus: &BellmanPoint,
        plus: &BellmanPoint,
        depth_cap: usize,
        budget: usize,
    ) -> Result<MidpointReport> {
        if depth_cap == 0 {
            return Err(Error::Domain("midpoint probing needs depth_cap >= 1".into()));
        }
        let mid = BellmanPoint::midpoint(minus, plus)?;
        let bm = self.probe(minus, depth_cap - 1, budget)?;
        let bp = self.probe(plus, depth_cap - 1, budget)?;
        let top = 0.25 * diff_norm(&minus.xi, &plus.xi) * diff_norm(&minus.gamma, &plus.gamma);
        let concatenated = match (bm.witness(), bp.witness()) {
            (Some(wm), Some(wp)) => {
                let w = concatenate(wm, wp)?;
                let v = w.value;
                self.insert_witness(&mid, w);
                Some(v)
            }
            _ => None,
        };
        let bmid = self.probe(&mid, depth_cap, budget)?;
        let lower_bound = concatenated.map(|_| 0.5 * (bm.lower_estimate() + bp.lower_estimate()) + top);
        Ok(MidpointReport {
            b_minus: bm.value(),
            b_plus: bp.value(),
            b_mid: bmid.value(),
            top_term: top,
            concatenated,
            lower_bound,
            size_bound: mid.size_bound(),
            midpoint: mid,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MidpointReport {
    pub midpoint: BellmanPoint,
    pub b_minus: Option<f64>,
    pub b_plus: Option<f64>,
    pub b_mid: Option<f64>,
    /// `¼‖ξ₋ − ξ₊‖‖γ₋ − γ₊‖`.
    pub top_term: f64,
    /// Bilinear sum of the concatenated witness.
    pub concatenated: Option<f64>,
    /// `½(B̂(a₊) + B̂(a₋)) + ¼‖ξ₋ − ξ₊‖‖γ₋ − γ₊‖`.
    pub lower_bound: Option<f64>,
    pub size_bound: f64,
}

impl MidpointReport {
    /// `B̂(a) ≥ ½(B̂(a₊) + B̂(a₋)) + top` up to relative roundoff `rel`.
    pub fn superadditive(&self, rel: f64) -> Option<bool> {
        let lb = self.lower_bound?;
        let b = self.b_mid?;
        Some(b >= lb - rel * lb.abs().max(1.0))
    }
}
