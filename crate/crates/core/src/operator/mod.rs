//! The generalized Beurling–Ahlfors operator `𝒮 = (dδ − δd)Δ⁻¹` on form
//! fields over a periodic box.
//!
//! On `k`-forms, `𝒮ₖ` is the Fourier multiplier
//! `M(ξ) = ([ξ]ᵗ[ξ] − [ξ][ξ]ᵗ)/|ξ|²`, a real symmetric orthogonal matrix
//! on `Λₖ`. Its entries in the lexicographic basis are
//!
//! * diagonal: `(Σ_{q∉ī} ξ_q² − Σ_{p∈ī} ξ_p²)/|ξ|²`
//! * `ī∖j̄ = {p}`, `j̄∖ī = {q}`: `−2 ε ξ_p ξ_q/|ξ|²`, where
//!   `ε = (−1)^{#(ī∩j̄) strictly between p and q}`
//! * otherwise `0`.
//!
//! The sign `ε` comes from reordering `e_p ∧ e_{ī∩j̄}` into increasing
//! order. Dropping it (taking every adjacent entry as `−2ξ_pξ_q/|ξ|²`)
//! produces a matrix that is no longer orthogonal once `k ≥ 2` and
//! `m − k ≥ 1`.
//!
//! The zero mode is annihilated: `𝒮ₖ` acts on mean-zero parts.
//!
//! The real-space convolution form of `𝒮ₖ` (a `(1 − 2k/m)` identity term
//! plus a singular kernel `Ω(x)/|x|ᵐ`) is not implemented.

mod search;

pub use search::{norm_search, NormSearchConfig, NormSearchReport, TracePoint};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exterior::{
    binomial, enumerate_multi_indices, permutation_sign, wedge_matrix, MultiIndex,
};
use crate::grid::{FrequencyLattice, GridSpec, Representation, ScalarField, VectorField};

/// A `Λₖ`-valued field: one scalar channel per multi-index, lexicographic.
#[derive(Debug, Clone, PartialEq)]
pub struct FormField {
    k: usize,
    field: VectorField,
}

impl FormField {
    pub fn new(k: usize, field: VectorField) -> Result<Self> {
        let m = field.spec().m();
        if k > m || field.dim() != binomial(m, k) {
            return Err(Error::Shape(format!(
                "a {k}-form field on ℝ^{m} needs {} channels, got {}",
                binomial(m, k),
                field.dim()
            )));
        }
        Ok(Self { k, field })
    }

    pub fn zeros(spec: &GridSpec, k: usize) -> Result<Self> {
        Self::new(
            k,
            VectorField::zeros(spec, binomial(spec.m(), k), Representation::Spatial),
        )
    }

    pub fn m(&self) -> usize {
        self.field.spec().m()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn spec(&self) -> &GridSpec {
        self.field.spec()
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    pub fn into_field(self) -> VectorField {
        self.field
    }

    pub fn channel(&self, i: usize) -> &ScalarField {
        self.field.channel(i)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.field.lp_norm(p)
    }

    pub fn pairing(&self, other: &FormField) -> Complex64 {
        self.field.pairing(&other.field)
    }

    pub fn remove_mean(&self) -> FormField {
        FormField {
            k: self.k,
            field: self.field.remove_mean(),
        }
    }

    pub fn to_spatial(&self) -> FormField {
        FormField {
            k: self.k,
            field: self.field.to_spatial(),
        }
    }

    pub fn max_abs_diff(&self, other: &FormField) -> f64 {
        self.field.max_abs_diff(&other.field)
    }

    /// Pointwise Hodge star, a `(m − k)`-form field.
    pub fn hodge_star(&self) -> FormField {
        let m = self.m();
        let basis = enumerate_multi_indices(m, self.k).expect("valid degree");
        let mut channels = vec![None; basis.len()];
        for (i, idx) in basis.iter().enumerate() {
            let sign = permutation_sign(idx) as f64;
            channels[idx.complement().rank()] =
                Some(self.field.channel(i).scale(Complex64::new(sign, 0.0)));
        }
        let field = VectorField::new(channels.into_iter().map(Option::unwrap).collect()).unwrap();
        FormField { k: m - self.k, field }
    }
}

/// An adjacent off-diagonal position of `M(ξ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffDiagonal {
    pub row: usize,
    pub col: usize,
    /// One-based axis in the row index but not the column index.
    pub p: usize,
    /// One-based axis in the column index but not the row index.
    pub q: usize,
    pub sign: f64,
}

/// Sparsity pattern and signs of `M(ξ)` for fixed `(m, k)`.
#[derive(Debug, Clone)]
pub struct MultiplierStencil {
    m: usize,
    k: usize,
    diag_masks: Vec<u32>,
    off: Vec<OffDiagonal>,
}

/// `ε` for adjacent masks; `None` unless they differ by one swap.
fn adjacency(row: u32, col: u32) -> Option<(usize, usize, f64)> {
    let only_row = row & !col;
    let only_col = col & !row;
    if only_row.count_ones() != 1 || only_col.count_ones() != 1 {
        return None;
    }
    let p = only_row.trailing_zeros() as usize + 1;
    let q = only_col.trailing_zeros() as usize + 1;
    let (lo, hi) = (p.min(q), p.max(q));
    let between = ((1u32 << (hi - 1)) - 1) & !((1u32 << lo) - 1);
    let sign = if (row & col & between).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    };
    Some((p, q, sign))
}

impl MultiplierStencil {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        let basis = enumerate_multi_indices(m, k)?;
        let diag_masks: Vec<u32> = basis.iter().map(|i| i.mask()).collect();
        let mut off = Vec::new();
        for (row, &a) in diag_masks.iter().enumerate() {
            for (col, &b) in diag_masks.iter().enumerate() {
                if let Some((p, q, sign)) = adjacency(a, b) {
                    off.push(OffDiagonal { row, col, p, q, sign });
                }
            }
        }
        Ok(Self {
            m,
            k,
            diag_masks,
            off,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.diag_masks.len()
    }

    pub fn off_diagonal(&self) -> &[OffDiagonal] {
        &self.off
    }

    /// Diagonal entry for row `row` at `ξ` with `|ξ|² = norm_sq`.
    fn diag_value(&self, row: usize, xi: &[f64], norm_sq: f64) -> f64 {
        let mask = self.diag_masks[row];
        let inside: f64 = xi
            .iter()
            .enumerate()
            .filter(|(l, _)| mask & (1 << l) != 0)
            .map(|(_, x)| x * x)
            .sum();
        (norm_sq - 2.0 * inside) / norm_sq
    }

    fn off_value(e: &OffDiagonal, xi: &[f64], norm_sq: f64) -> f64 {
        -2.0 * e.sign * xi[e.p - 1] * xi[e.q - 1] / norm_sq
    }

    /// Dense `M(ξ)` built from the entry formulas.
    pub fn matrix(&self, xi: &[f64]) -> Result<DMatrix<f64>> {
        let norm_sq = checked_norm_sq(xi, self.m)?;
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for row in 0..self.dim() {
            out[(row, row)] = self.diag_value(row, xi, norm_sq);
        }
        for e in &self.off {
            out[(e.row, e.col)] = Self::off_value(e, xi, norm_sq);
        }
        Ok(out)
    }
}

fn checked_norm_sq(xi: &[f64], m: usize) -> Result<f64> {
    if xi.len() != m {
        return Err(Error::Shape(format!(
            "ξ has {} components, expected {m}",
            xi.len()
        )));
    }
    let n: f64 = xi.iter().map(|x| x * x).sum();
    if n == 0.0 {
        return Err(Error::Domain("the multiplier is undefined at ξ = 0".into()));
    }
    Ok(n)
}

/// The `(ī, j̄)` entry of `M(ξ)`.
pub fn multiplier_entry(i: &MultiIndex, j: &MultiIndex, xi: &[f64]) -> Result<f64> {
    if i.m() != j.m() || i.degree() != j.degree() {
        return Err(Error::Shape(format!(
            "entries need multi-indices of equal (m, k), got {:?} and {:?}",
            (i.m(), i.degree()),
            (j.m(), j.degree())
        )));
    }
    let norm_sq = checked_norm_sq(xi, i.m())?;
    if i == j {
        let inside: f64 = i.indices().iter().map(|&p| xi[p - 1].powi(2)).sum();
        return Ok((norm_sq - 2.0 * inside) / norm_sq);
    }
    Ok(match adjacency(i.mask(), j.mask()) {
        Some((p, q, sign)) => -2.0 * sign * xi[p - 1] * xi[q - 1] / norm_sq,
        None => 0.0,
    })
}

/// `M(ξ)` on `Λₖ(ℝᵐ)` from the entry formulas.
pub fn build_multiplier(m: usize, k: usize, xi: &[f64]) -> Result<DMatrix<f64>> {
    MultiplierStencil::new(m, k)?.matrix(xi)
}

/// `M(ξ)` computed as `([ξ]ᵗ[ξ] − [ξ][ξ]ᵗ)/|ξ|²` from the wedge matrix.
pub fn multiplier_from_wedge(m: usize, k: usize, xi: &[f64]) -> Result<DMatrix<f64>> {
    let norm_sq = checked_norm_sq(xi, m)?;
    if k > m {
        return Err(Error::Domain(format!("degree {k} exceeds dimension {m}")));
    }
    let w = wedge_matrix(xi)?;
    Ok((w.gram_up(k) - w.gram_down(k)) / norm_sq)
}

/// Which entries of `M(ξ)` to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Full,
    Diagonal,
    OffDiagonal,
}

/// Applies the chosen part of `M(ξ)` frequency by frequency; the result
/// keeps the input representation.
pub fn apply_multiplier_part(field: &FormField, part: Part) -> Result<FormField> {
    let stencil = MultiplierStencil::new(field.m(), field.k())?;
    let spec = field.spec().clone();
    let lattice = FrequencyLattice::new(&spec);
    let repr = field.field().representation();
    let input: Vec<ScalarField> = field.field().to_frequency().into_channels();
    let dim = stencil.dim();
    let mut out: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); spec.len()]; dim];
    for flat in 0..spec.len() {
        if flat == lattice.zero_index() {
            continue;
        }
        let xi = lattice.xi(flat);
        let norm_sq = lattice.norm_sq(flat);
        if part != Part::OffDiagonal {
            for (row, slot) in out.iter_mut().enumerate() {
                slot[flat] = input[row].values()[flat] * stencil.diag_value(row, xi, norm_sq);
            }
        }
        if part != Part::Diagonal {
            for e in &stencil.off {
                let v = MultiplierStencil::off_value(e, xi, norm_sq);
                out[e.row][flat] += input[e.col].values()[flat] * v;
            }
        }
    }
    let channels = out
        .into_iter()
        .map(|values| {
            ScalarField::from_values(&spec, values, Representation::Frequency)
                .map(|f| f.into_representation(repr))
        })
        .collect::<Result<Vec<_>>>()?;
    FormField::new(field.k(), VectorField::new(channels)?)
}

/// `𝒮ₖ` as a per-frequency matrix–vector product.
pub fn apply_s_k(field: &FormField) -> Result<FormField> {
    apply_multiplier_part(field, Part::Full)
}

/// `𝒮ₖ` assembled from scalar Riesz transforms:
/// `Σ_{p∈ī} R_p² − Σ_{q∉ī} R_q²` on the diagonal and `ε·2R_pR_q` on
/// adjacent entries.
pub fn apply_s_k_riesz(field: &FormField) -> Result<FormField> {
    let m = field.m();
    let stencil = MultiplierStencil::new(m, field.k())?;
    let spec = field.spec().clone();
    let repr = field.field().representation();
    let channels: Vec<ScalarField> = field.field().to_frequency().into_channels();
    let mut out: Vec<ScalarField> = Vec::with_capacity(stencil.dim());
    for (row, &mask) in stencil.diag_masks.iter().enumerate() {
        let mut acc = ScalarField::zeros(&spec, Representation::Frequency);
        for l in 1..=m {
            let sign = if mask & (1 << (l - 1)) != 0 { 1.0 } else { -1.0 };
            let rr = channels[row].riesz(l)?.riesz(l)?;
            accumulate(&mut acc, &rr, sign);
        }
        out.push(acc);
    }
    for e in &stencil.off {
        let rr = channels[e.col].riesz(e.q)?.riesz(e.p)?;
        accumulate(&mut out[e.row], &rr, 2.0 * e.sign);
    }
    let out = out
        .into_iter()
        .map(|f| f.into_representation(repr))
        .collect();
    FormField::new(field.k(), VectorField::new(out)?)
}

fn accumulate(acc: &mut ScalarField, add: &ScalarField, s: f64) {
    for (a, b) in acc.values_mut().iter_mut().zip(add.values()) {
        *a += b * s;
    }
}

/// Number of heat-derivative terms in the off-diagonal part of
/// `⟨𝒮ₖφ, ψ⟩`: `2·C(m,k)·k(m − k)`.
pub fn offdiag_term_count(m: usize, k: usize) -> usize {
    let count = 2 * binomial(m, k) * (m - k) * k;
    if k >= 1 && k < m {
        let by_classes = m * (m - 1) * 2 * factorial(m - 2)
            / (factorial(m - k - 1) * factorial(k - 1));
        assert_eq!(count, by_classes, "class count mismatch for (m, k) = ({m}, {k})");
    }
    count
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// `p* = max(p, p/(p − 1))`.
pub fn p_star(p: f64) -> f64 {
    p.max(p / (p - 1.0))
}

/// Hölder conjugate `p/(p − 1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// `‖𝒮ₖ f‖_p / ‖f‖_p`.
pub fn ratio(field: &FormField, p: f64) -> Result<f64> {
    let image = apply_s_k(field)?;
    Ok(image.lp_norm(p) / field.lp_norm(p))
}

/// A field on the full exterior algebra: one [`FormField`] per degree.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedField {
    components: Vec<FormField>,
}

impl GradedField {
    pub fn new(components: Vec<FormField>) -> Result<Self> {
        let m = components
            .first()
            .map(|c| c.m())
            .ok_or_else(|| Error::Shape("a graded field needs components".into()))?;
        if components.len() != m + 1
            || components
                .iter()
                .enumerate()
                .any(|(k, c)| c.k() != k || c.spec() != components[0].spec())
        {
            return Err(Error::Shape(
                "graded field needs degrees 0..=m on a common grid".into(),
            ));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[FormField] {
        &self.components
    }

    /// `‖f‖_p` with the pointwise norm `(Σₖ ‖fₖ(x)‖²)^{1/2}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let spec = self.components[0].spec();
        let mut acc = vec![0.0; spec.len()];
        for c in &self.components {
            for (a, n) in acc.iter_mut().zip(c.field().pointwise_norms()) {
                *a += n * n;
            }
        }
        let norms: Vec<f64> = acc.iter().map(|a| a.sqrt()).collect();
        crate::grid::lp_from_pointwise(&norms, p, spec.cell_volume())
    }
}

/// Block-diagonal `𝒮` on a graded field.
pub fn apply_graded(field: &GradedField) -> Result<GradedField> {
    GradedField::new(
        field
            .components
            .iter()
            .map(apply_s_k)
            .collect::<Result<_>>()?,
    )
}
