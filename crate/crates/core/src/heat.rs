//! Heat extensions, the Riesz/heat pairing identity and the bilinear
//! embedding inequality.
//!
//! For mean-zero `φ, ψ` on the torus,
//!
//! ```text
//! ∫ ⟨R_j R_k φ, ψ⟩ = −2 ∫₀^∞ ∫ ⟨∂_j φ̃(·, t), ∂_k ψ̃(·, t)⟩ dx dt
//! ```
//!
//! because `2∫₀^∞ e^{−2t|ξ|²} dt = |ξ|⁻²`. The `t`-integral is evaluated
//! two ways: exactly in frequency space, and by a geometric quadrature on
//! `(t_min, T)` that mirrors the upper half-space formulation. The upper
//! cut-off leaves a tail of relative size `e^{−2T|ξ_min|²}`; the lower one
//! drops about `t_min |ξ_max|²`.
//!
//! All integrals over ℝᵐ are replaced by grid quadrature on the periodic
//! box and `Lᵖ` norms are the matching discrete sums.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::binomial;
use crate::grid::{random_band_limited_vector, FrequencyLattice, GridSpec, VectorField};
use crate::operator::{apply_multiplier_part, conjugate, FormField, MultiplierStencil, Part};

/// Relative mean size above which a field counts as having a mean.
const MEAN_TOLERANCE: f64 = 1e-10;

/// Nodes and positive weights for `∫₀^T g(t) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    horizon: f64,
}

impl Quadrature {
    /// Midpoint rule in `s = ln t` on `(t_min, horizon)`, so nodes are
    /// geometrically spaced and weights are `t_i · Δs`.
    pub fn geometric(t_min: f64, horizon: f64, n: usize) -> Result<Self> {
        if !(t_min > 0.0 && horizon > t_min && horizon >= 1.0 && n >= 1) {
            return Err(Error::Domain(format!(
                "quadrature needs 0 < t_min < T, T >= 1 and nodes >= 1; got t_min={t_min}, T={horizon}, n={n}"
            )));
        }
        let (a, b) = (t_min.ln(), horizon.ln());
        let ds = (b - a) / n as f64;
        let nodes: Vec<f64> = (0..n).map(|i| (a + (i as f64 + 0.5) * ds).exp()).collect();
        let weights = nodes.iter().map(|t| t * ds).collect();
        Ok(Self {
            nodes,
            weights,
            horizon,
        })
    }

    /// Default rule for a grid: `T = max(1, 6/|ξ_min|²)` and
    /// `t_min = 10⁻⁸/|ξ_max|²`.
    pub fn for_grid(spec: &GridSpec, n: usize) -> Result<Self> {
        Self::with_horizon(spec, (6.0 / spec.min_frequency().powi(2)).max(1.0), n)
    }

    /// Grid default for `t_min` with an explicit upper cut-off.
    pub fn with_horizon(spec: &GridSpec, horizon: f64, n: usize) -> Result<Self> {
        Self::geometric(1e-8 / spec.max_frequency().powi(2), horizon, n)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `e^{−2T|ξ_min|²}`, the relative weight the upper cut-off drops at the
    /// slowest-decaying mode.
    pub fn tail_estimate(&self, spec: &GridSpec) -> f64 {
        (-2.0 * self.horizon * spec.min_frequency().powi(2)).exp()
    }
}

/// The heat extension of a field at height `t` and its spatial gradient.
#[derive(Debug, Clone)]
pub struct HeatSlice {
    pub t: f64,
    pub field: VectorField,
    /// `derivatives[i]` is `∂_{i+1}` of the extension.
    pub derivatives: Vec<VectorField>,
}

impl HeatSlice {
    pub fn new(field: &VectorField, t: f64) -> Result<Self> {
        let extended = field.to_frequency().heat_extend(t)?;
        let derivatives = (1..=field.spec().m())
            .map(|i| Ok(extended.partial_derivative(i)?.to_spatial()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            t,
            field: extended.to_spatial(),
            derivatives,
        })
    }
}

fn check_pair(phi: &VectorField, psi: &VectorField) -> Result<()> {
    if phi.spec() != psi.spec() || phi.dim() != psi.dim() {
        return Err(Error::Shape(
            "fields must share grid and value dimension".into(),
        ));
    }
    Ok(())
}

fn check_mean_zero(fields: &[&VectorField]) -> Result<()> {
    for f in fields {
        let r = f.relative_mean();
        if r > MEAN_TOLERANCE {
            return Err(Error::Precondition(format!(
                "field has nonzero mean (relative size {r:.3e})"
            )));
        }
    }
    Ok(())
}

/// The three evaluations of `∫⟨R_jR_kφ, ψ⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairingIdentity {
    /// Spatial pairing of `R_jR_kφ` with `ψ`.
    pub lhs: Complex64,
    /// `−2 Σ wₙ ∫⟨∂_jφ̃(tₙ), ∂_kψ̃(tₙ)⟩`.
    pub rhs_quadrature: Complex64,
    /// The `t`-integral done in closed form per frequency.
    pub rhs_analytic: Complex64,
}

/// Evaluates both sides of the Riesz/heat identity for axes `j`, `k`
/// (one-based).
pub fn lp_pairing_identity(
    phi: &VectorField,
    psi: &VectorField,
    j: usize,
    k: usize,
    quad: &Quadrature,
) -> Result<PairingIdentity> {
    check_pair(phi, psi)?;
    check_mean_zero(&[phi, psi])?;
    let m = phi.spec().m();
    if j == 0 || k == 0 || j > m || k > m {
        return Err(Error::Domain(format!("axes ({j}, {k}) outside 1..={m}")));
    }

    let rr = phi.map_channels(|c| Ok(c.riesz(k)?.riesz(j)?.to_spatial()))?;
    let lhs = rr.pairing(psi);

    let spec = phi.spec();
    let lattice = FrequencyLattice::new(spec);
    let phi_hat = phi.to_frequency();
    let psi_hat = psi.to_frequency();
    let mut analytic = Complex64::new(0.0, 0.0);
    for (a, b) in phi_hat.channels().iter().zip(psi_hat.channels()) {
        for flat in 1..spec.len() {
            let xi = lattice.xi(flat);
            let w = xi[j - 1] * xi[k - 1] / lattice.norm_sq(flat);
            analytic += a.values()[flat] * b.values()[flat].conj() * w;
        }
    }
    let rhs_analytic = -analytic * spec.volume();

    let per_node: Vec<Complex64> = quad
        .nodes()
        .par_iter()
        .zip(quad.weights())
        .map(|(&t, &w)| {
            let a = phi_hat.heat_extend(t)?.partial_derivative(j)?;
            let b = psi_hat.heat_extend(t)?.partial_derivative(k)?;
            Ok(a.pairing(&b) * w)
        })
        .collect::<Result<_>>()?;
    let rhs_quadrature = per_node.iter().sum::<Complex64>() * -2.0;

    Ok(PairingIdentity {
        lhs,
        rhs_quadrature,
        rhs_analytic,
    })
}

/// Heat-space integrals of the derivative norms of `φ̃` and `ψ̃`, each
/// including the leading factor 2:
/// `l2 = 2∬ |∇φ̃| |∇ψ̃|`, `l1 = 2Σ_{i,j}∬ ‖∂ᵢφ̃‖‖∂ⱼψ̃‖`,
/// `diagonal = 2Σᵢ∬ ‖∂ᵢφ̃‖‖∂ᵢψ̃‖`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EmbeddingIntegrals {
    pub l2: f64,
    pub l1: f64,
    pub diagonal: f64,
}

pub fn embedding_integrals(
    phi: &VectorField,
    psi: &VectorField,
    quad: &Quadrature,
) -> Result<EmbeddingIntegrals> {
    check_pair(phi, psi)?;
    let spec = phi.spec();
    let m = spec.m();
    let cell = spec.cell_volume();
    let phi_hat = phi.to_frequency();
    let psi_hat = psi.to_frequency();
    let per_node: Vec<EmbeddingIntegrals> = quad
        .nodes()
        .par_iter()
        .zip(quad.weights())
        .map(|(&t, &w)| {
            let a = HeatSlice::new(&phi_hat, t)?;
            let b = HeatSlice::new(&psi_hat, t)?;
            let na: Vec<Vec<f64>> = a.derivatives.iter().map(VectorField::pointwise_norms).collect();
            let nb: Vec<Vec<f64>> = b.derivatives.iter().map(VectorField::pointwise_norms).collect();
            let mut acc = EmbeddingIntegrals::default();
            for x in 0..spec.len() {
                let (mut sa2, mut sb2, mut sa, mut sb, mut d) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..m {
                    let (u, v) = (na[i][x], nb[i][x]);
                    sa2 += u * u;
                    sb2 += v * v;
                    sa += u;
                    sb += v;
                    d += u * v;
                }
                acc.l2 += sa2.sqrt() * sb2.sqrt();
                acc.l1 += sa * sb;
                acc.diagonal += d;
            }
            let s = 2.0 * w * cell;
            Ok(EmbeddingIntegrals {
                l2: acc.l2 * s,
                l1: acc.l1 * s,
                diagonal: acc.diagonal * s,
            })
        })
        .collect::<Result<_>>()?;
    Ok(per_node.iter().fold(EmbeddingIntegrals::default(), |a, b| EmbeddingIntegrals {
        l2: a.l2 + b.l2,
        l1: a.l1 + b.l1,
        diagonal: a.diagonal + b.diagonal,
    }))
}

/// `2∬ (Σᵢ‖∂ᵢφ̃‖²)^{1/2} (Σᵢ‖∂ᵢψ̃‖²)^{1/2}` by quadrature.
pub fn embedding_lhs(phi: &VectorField, psi: &VectorField, quad: &Quadrature) -> Result<f64> {
    Ok(embedding_integrals(phi, psi, quad)?.l2)
}

/// `2 Σ_{i,j} ∬ ‖∂ᵢφ̃‖ ‖∂ⱼψ̃‖` by quadrature.
pub fn embedding_l1_lhs(phi: &VectorField, psi: &VectorField, quad: &Quadrature) -> Result<f64> {
    Ok(embedding_integrals(phi, psi, quad)?.l1)
}

/// One embedding comparison at exponent `p ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmbeddingTrial {
    pub p: f64,
    pub lhs: f64,
    pub l1_lhs: f64,
    /// `(p − 1) ‖φ‖_p ‖ψ‖_q`.
    pub rhs: f64,
    /// `m (p − 1) ‖φ‖_p ‖ψ‖_q`.
    pub l1_rhs: f64,
}

impl EmbeddingTrial {
    /// `lhs/rhs − 1`; positive means the inequality failed.
    pub fn slack(&self) -> f64 {
        relative_excess(self.lhs, self.rhs)
    }

    pub fn l1_slack(&self) -> f64 {
        relative_excess(self.l1_lhs, self.l1_rhs)
    }
}

fn relative_excess(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs - 1.0
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        -1.0
    }
}

pub fn embedding_trial(
    phi: &VectorField,
    psi: &VectorField,
    p: f64,
    quad: &Quadrature,
) -> Result<EmbeddingTrial> {
    if !(p >= 2.0) {
        return Err(Error::Domain(format!("embedding needs p >= 2, got {p}")));
    }
    let integrals = embedding_integrals(phi, psi, quad)?;
    let rhs = (p - 1.0) * phi.lp_norm(p) * psi.lp_norm(conjugate(p));
    Ok(EmbeddingTrial {
        p,
        lhs: integrals.l2,
        l1_lhs: integrals.l1,
        rhs,
        l1_rhs: phi.spec().m() as f64 * rhs,
    })
}

/// `⟨𝒮ₖφ, ψ⟩` split into its diagonal and off-diagonal parts, each also
/// recomputed through heat extensions, together with the chain of bounds
/// `|⟨𝒮ₖφ, ψ⟩| ≤ 2Σ_{i,j}∬‖∂ᵢφ̃‖‖∂ⱼψ̃‖ ≤ m(p − 1)‖φ‖_p‖ψ‖_q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairingDecomposition {
    pub pairing: Complex64,
    /// `I`: diagonal channels.
    pub diagonal: Complex64,
    /// `II`: off-diagonal channels.
    pub off_diagonal: Complex64,
    pub diagonal_heat: Complex64,
    pub off_diagonal_heat: Complex64,
    /// `2Σᵢ∬‖∂ᵢφ̃‖‖∂ᵢψ̃‖`, which dominates `|I|`.
    pub diagonal_bound: f64,
    /// `2Σ_{i≠j}∬‖∂ᵢφ̃‖‖∂ⱼψ̃‖`, which dominates `|II|`.
    pub off_diagonal_bound: f64,
    pub heat_bound: f64,
    pub norm_bound: f64,
    /// Heat-derivative terms evaluated for `II`.
    pub offdiag_terms: usize,
}

impl PairingDecomposition {
    /// Whether `|pairing| ≤ heat_bound ≤ norm_bound`, each up to `rel`.
    pub fn chain_holds(&self, rel: f64) -> bool {
        self.pairing.norm() <= self.heat_bound * (1.0 + rel)
            && self.heat_bound <= self.norm_bound * (1.0 + rel)
    }
}

pub fn pairing_decomposition(
    phi: &FormField,
    psi: &FormField,
    p: f64,
    quad: &Quadrature,
) -> Result<PairingDecomposition> {
    check_pair(phi.field(), psi.field())?;
    check_mean_zero(&[phi.field(), psi.field()])?;
    if phi.k() != psi.k() {
        return Err(Error::Shape("fields must have equal degree".into()));
    }
    if !(p >= 2.0) {
        return Err(Error::Domain(format!("decomposition bound needs p >= 2, got {p}")));
    }
    let m = phi.m();
    let full = apply_multiplier_part(phi, Part::Full)?;
    let diag = apply_multiplier_part(phi, Part::Diagonal)?;
    let off = apply_multiplier_part(phi, Part::OffDiagonal)?;
    let pairing = full.pairing(psi);
    let diagonal = diag.pairing(psi);
    let off_diagonal = off.pairing(psi);

    let stencil = MultiplierStencil::new(m, phi.k())?;
    let phi_hat = phi.field().to_frequency();
    let psi_hat = psi.field().to_frequency();
    type NodeSums = (Complex64, Complex64, usize);
    let per_node: Vec<NodeSums> = quad
        .nodes()
        .par_iter()
        .zip(quad.weights())
        .map(|(&t, &w)| {
            let a = HeatSlice::new(&phi_hat, t)?;
            let b = HeatSlice::new(&psi_hat, t)?;
            let pair = |i: usize, ci: usize, jx: usize, cj: usize| {
                let u = a.derivatives[i - 1].channel(ci);
                let v = b.derivatives[jx - 1].channel(cj);
                u.values()
                    .iter()
                    .zip(v.values())
                    .map(|(x, y)| x * y.conj())
                    .sum::<Complex64>()
            };
            let mut d = Complex64::new(0.0, 0.0);
            for (row, idx) in crate::exterior::enumerate_multi_indices(m, phi.k())?
                .iter()
                .enumerate()
            {
                for i in 1..=m {
                    let s = if idx.contains(i) { -1.0 } else { 1.0 };
                    d += pair(i, row, i, row) * s;
                }
            }
            let mut o = Complex64::new(0.0, 0.0);
            let mut terms = 0;
            for e in stencil.off_diagonal() {
                o -= (pair(e.p, e.col, e.q, e.row) + pair(e.q, e.col, e.p, e.row)) * e.sign;
                terms += 2;
            }
            let s = 2.0 * w * phi.spec().cell_volume();
            Ok((d * s, o * s, terms))
        })
        .collect::<Result<_>>()?;
    let diagonal_heat = per_node.iter().map(|n| n.0).sum();
    let off_diagonal_heat = per_node.iter().map(|n| n.1).sum();
    let offdiag_terms = per_node.first().map_or(0, |n| n.2);

    let integrals = embedding_integrals(phi.field(), psi.field(), quad)?;
    let norm_bound =
        m as f64 * (p - 1.0) * phi.lp_norm(p) * psi.lp_norm(conjugate(p));
    Ok(PairingDecomposition {
        pairing,
        diagonal,
        off_diagonal,
        diagonal_heat,
        off_diagonal_heat,
        diagonal_bound: integrals.diagonal,
        off_diagonal_bound: integrals.l1 - integrals.diagonal,
        heat_bound: integrals.l1,
        norm_bound,
        offdiag_terms,
    })
}

/// Value space for embedding fuzz trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ValueSpace {
    /// `E = ℝᵈ`.
    Euclidean(usize),
    /// `E = Λₖ(ℝᵐ)`.
    Forms(usize),
}

impl ValueSpace {
    pub fn dim(&self, m: usize) -> usize {
        match self {
            ValueSpace::Euclidean(d) => *d,
            ValueSpace::Forms(k) => binomial(m, *k),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingFuzzConfig {
    pub spec: GridSpec,
    pub exponents: Vec<f64>,
    pub spaces: Vec<ValueSpace>,
    /// Random pairs per (exponent, space) combination.
    pub trials_per_case: usize,
    pub nodes: usize,
    /// Upper cut-off; `None` uses [`Quadrature::for_grid`].
    pub horizon: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingRecord {
    pub trial: usize,
    pub p: f64,
    pub space: ValueSpace,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub l1_lhs: f64,
    pub l1_rhs: f64,
    pub l1_slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingSummary {
    pub trials: usize,
    pub violations: usize,
    /// Largest `lhs/rhs − 1` over both inequalities; violations are
    /// values above `1e-9`.
    pub max_slack: f64,
    #[serde(skip)]
    pub records: Vec<EmbeddingRecord>,
}

/// Tolerance on `lhs/rhs − 1` before a trial counts as a violation.
pub const EMBEDDING_TOLERANCE: f64 = 1e-9;

/// Runs random band-limited pairs through both embedding inequalities.
/// Each trial draws from its own seeded generator, so results do not
/// depend on scheduling.
pub fn embedding_fuzz(config: &EmbeddingFuzzConfig) -> Result<EmbeddingSummary> {
    let quad = match config.horizon {
        None => Quadrature::for_grid(&config.spec, config.nodes)?,
        Some(t) => Quadrature::with_horizon(&config.spec, t, config.nodes)?,
    };
    let m = config.spec.m();
    let mut cases = Vec::new();
    for &p in &config.exponents {
        for &space in &config.spaces {
            for _ in 0..config.trials_per_case {
                cases.push((cases.len(), p, space));
            }
        }
    }
    let records: Vec<EmbeddingRecord> = cases
        .par_iter()
        .map(|&(trial, p, space)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let dim = space.dim(m);
            let phi = random_band_limited_vector(&config.spec, dim, &mut rng);
            let psi = random_band_limited_vector(&config.spec, dim, &mut rng);
            let t = embedding_trial(&phi, &psi, p, &quad)?;
            Ok(EmbeddingRecord {
                trial,
                p,
                space,
                lhs: t.lhs,
                rhs: t.rhs,
                slack: t.slack(),
                l1_lhs: t.l1_lhs,
                l1_rhs: t.l1_rhs,
                l1_slack: t.l1_slack(),
            })
        })
        .collect::<Result<_>>()?;
    let violations = records
        .iter()
        .filter(|r| r.slack > EMBEDDING_TOLERANCE || r.l1_slack > EMBEDDING_TOLERANCE)
        .count();
    let max_slack = records
        .iter()
        .map(|r| r.slack.max(r.l1_slack))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EmbeddingSummary {
        trials: records.len(),
        violations,
        max_slack,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Representation, ScalarField};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn quadrature_shape() {
        let q = Quadrature::geometric(1e-9, 10.0, 64).unwrap();
        assert!(q.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(q.weights().iter().all(|&w| w > 0.0));
        // ∫ e^{-t} on (1e-9, 10) ≈ 1 − e^{-10}
        let s: f64 = q.nodes().iter().zip(q.weights()).map(|(t, w)| w * (-t).exp()).sum();
        assert!((s - (1.0 - (-10.0f64).exp())).abs() < 1e-4);
        assert!(Quadrature::geometric(1.0, 0.5, 4).is_err());
        assert!(Quadrature::geometric(1e-3, 0.5, 4).is_err());
    }

    #[test]
    fn heat_slice_derivatives_are_spectral() {
        let g = GridSpec::cube(2, 16).unwrap();
        let f = random_band_limited_vector(&g, 2, &mut rng(1));
        let slice = HeatSlice::new(&f, 0.2).unwrap();
        let direct = f.heat_extend(0.2).unwrap().partial_derivative(2).unwrap();
        assert!(slice.derivatives[1].max_abs_diff(&direct) < 1e-12 * direct.max_abs());
    }

    #[test]
    fn single_mode_identity() {
        let g = GridSpec::cube(2, 16).unwrap();
        let wave = ScalarField::plane_wave(&g, &[2, 1]);
        let f = VectorField::new(vec![wave]).unwrap();
        let q = Quadrature::for_grid(&g, 64).unwrap();
        let r = lp_pairing_identity(&f, &f, 1, 2, &q).unwrap();
        let expected = -2.0 * 1.0 / 5.0 * g.volume();
        assert!((r.lhs.re - expected).abs() < 1e-10 * expected.abs());
        assert!((r.rhs_analytic - r.lhs).norm() < 1e-10 * expected.abs());
        assert!((r.rhs_quadrature - r.lhs).norm() < 1e-4 * expected.abs());
    }

    #[test]
    fn zero_field_gives_zero() {
        let g = GridSpec::cube(2, 8).unwrap();
        let c = ScalarField::from_fn(&g, |_| Complex64::new(4.0, 0.0));
        let zero = VectorField::new(vec![c.remove_mean()]).unwrap();
        let psi = random_band_limited_vector(&g, 1, &mut rng(2));
        let q = Quadrature::for_grid(&g, 16).unwrap();
        let r = lp_pairing_identity(&zero, &psi, 1, 1, &q).unwrap();
        assert!(r.lhs.norm() < 1e-12 && r.rhs_analytic.norm() < 1e-12 && r.rhs_quadrature.norm() < 1e-12);
    }

    #[test]
    fn mean_precondition() {
        let g = GridSpec::cube(2, 8).unwrap();
        let c = ScalarField::from_fn(&g, |x| Complex64::new(1.0 + x[0].sin(), 0.0));
        let f = VectorField::new(vec![c]).unwrap();
        let q = Quadrature::for_grid(&g, 8).unwrap();
        assert!(matches!(
            lp_pairing_identity(&f, &f, 1, 1, &q),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn random_identity_all_axes() {
        let g = GridSpec::cube(2, 16).unwrap();
        let mut r = rng(3);
        let phi = random_band_limited_vector(&g, 2, &mut r);
        let psi = random_band_limited_vector(&g, 2, &mut r);
        let q = Quadrature::for_grid(&g, 64).unwrap();
        let scale = phi.lp_norm(2.0) * psi.lp_norm(2.0);
        for j in 1..=2 {
            for k in 1..=2 {
                let id = lp_pairing_identity(&phi, &psi, j, k, &q).unwrap();
                assert!((id.lhs - id.rhs_analytic).norm() < 1e-10 * scale);
                assert!((id.rhs_quadrature - id.rhs_analytic).norm() < 1e-4 * scale);
            }
        }
    }

    #[test]
    fn embedding_scaling_and_zero() {
        let g = GridSpec::cube(2, 16).unwrap();
        let mut r = rng(4);
        let phi = random_band_limited_vector(&g, 1, &mut r);
        let psi = random_band_limited_vector(&g, 1, &mut r);
        let q = Quadrature::for_grid(&g, 32).unwrap();
        let zero = VectorField::zeros(&g, 1, Representation::Spatial);
        assert_eq!(embedding_lhs(&phi, &zero, &q).unwrap(), 0.0);
        assert_eq!(embedding_l1_lhs(&phi, &zero, &q).unwrap(), 0.0);
        let base = embedding_lhs(&phi, &psi, &q).unwrap();
        let scaled = embedding_lhs(
            &phi.scale(Complex64::new(-2.0, 0.0)),
            &psi.scale(Complex64::new(0.5, 0.0)),
            &q,
        )
        .unwrap();
        assert!((scaled - base).abs() < 1e-12 * base);
    }

    #[test]
    fn l1_vs_l2_embedding() {
        let g = GridSpec::cube(3, 8).unwrap();
        let mut r = rng(5);
        let phi = random_band_limited_vector(&g, 3, &mut r);
        let psi = random_band_limited_vector(&g, 3, &mut r);
        let q = Quadrature::for_grid(&g, 32).unwrap();
        let e = embedding_integrals(&phi, &psi, &q).unwrap();
        assert!(e.l1 >= e.l2);
        assert!(e.l1 <= 3.0 * e.l2 * (1.0 + 1e-12));
        let trial = embedding_trial(&phi, &psi, 3.0, &q).unwrap();
        assert!(trial.slack() < 0.0 && trial.l1_slack() < 0.0);
    }

    #[test]
    fn one_dimensional_l1_equals_l2() {
        let g = GridSpec::cube(1, 32).unwrap();
        let mut r = rng(6);
        let phi = random_band_limited_vector(&g, 2, &mut r);
        let psi = random_band_limited_vector(&g, 2, &mut r);
        let q = Quadrature::for_grid(&g, 32).unwrap();
        let e = embedding_integrals(&phi, &psi, &q).unwrap();
        assert!((e.l1 - e.l2).abs() <= 1e-14 * e.l2);
    }

    #[test]
    fn decomposition_parts_add_up() {
        let g = GridSpec::cube(3, 8).unwrap();
        let mut r = rng(7);
        for k in 0..=3 {
            let dim = binomial(3, k);
            let phi = FormField::new(k, random_band_limited_vector(&g, dim, &mut r)).unwrap();
            let psi = FormField::new(k, random_band_limited_vector(&g, dim, &mut r)).unwrap();
            let q = Quadrature::for_grid(&g, 48).unwrap();
            let d = pairing_decomposition(&phi, &psi, 3.0, &q).unwrap();
            let scale = phi.lp_norm(2.0) * psi.lp_norm(2.0);
            assert!((d.diagonal + d.off_diagonal - d.pairing).norm() < 1e-10 * scale);
            assert!((d.diagonal_heat - d.diagonal).norm() < 1e-4 * scale);
            assert!((d.off_diagonal_heat - d.off_diagonal).norm() < 1e-4 * scale);
            assert!(d.diagonal.norm() <= d.diagonal_bound);
            assert!(d.off_diagonal.norm() <= d.off_diagonal_bound + 1e-12);
            assert!(d.chain_holds(1e-9));
            if k == 0 {
                assert_eq!(d.off_diagonal, Complex64::new(0.0, 0.0));
                assert_eq!(d.offdiag_terms, 0);
            }
        }
    }

    #[test]
    fn fuzz_small_run() {
        let config = EmbeddingFuzzConfig {
            spec: GridSpec::cube(2, 8).unwrap(),
            exponents: vec![2.0, 3.0],
            spaces: vec![ValueSpace::Euclidean(1), ValueSpace::Forms(1)],
            trials_per_case: 3,
            nodes: 24,
            horizon: None,
            seed: 11,
        };
        let a = embedding_fuzz(&config).unwrap();
        let b = embedding_fuzz(&config).unwrap();
        assert_eq!(a.trials, 12);
        assert_eq!(a.violations, 0);
        assert_eq!(a.max_slack.to_bits(), b.max_slack.to_bits());
    }
}
