//! Exterior algebra over ℝᵐ with complex coefficients.
//!
//! Basis `k`-forms `e_ī = e_{i₁} ∧ ⋯ ∧ e_{iₖ}` are indexed by strictly
//! increasing multi-indices and always stored in lexicographic order, so a
//! [`FormVector`] is just a coefficient vector of length `C(m, k)`.
//!
//! The Hodge star is fixed by the identity `⟨α, β⟩ e₁∧⋯∧eₘ = β̄ ∧ *α`,
//! which gives `*e_ī = σ(ī) e_{ī^c}` with `σ(ī)` the sign of the permutation
//! listing `ī` followed by `ī^c`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 12;

/// Binomial coefficient `C(n, k)`; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

fn check_dims(m: usize, k: usize) -> Result<()> {
    if m > MAX_DIM || k > m {
        return Err(Error::Domain(format!(
            "(m, k) = ({m}, {k}) outside 0 <= k <= m <= {MAX_DIM}"
        )));
    }
    Ok(())
}

/// A strictly increasing `k`-subset of `{1, …, m}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    m: usize,
    indices: Vec<usize>,
}

impl MultiIndex {
    pub fn new(m: usize, indices: Vec<usize>) -> Result<Self> {
        check_dims(m, indices.len())?;
        let increasing = indices.windows(2).all(|w| w[0] < w[1]);
        let in_range = indices.iter().all(|&i| (1..=m).contains(&i));
        if !increasing || !in_range {
            return Err(Error::Domain(format!(
                "{indices:?} is not a strictly increasing subset of 1..={m}"
            )));
        }
        Ok(Self { m, indices })
    }

    pub(crate) fn from_mask(m: usize, mask: u32) -> Self {
        let indices = (1..=m).filter(|&i| mask & (1 << (i - 1)) != 0).collect();
        Self { m, indices }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn degree(&self) -> usize {
        self.indices.len()
    }

    /// One-based indices in increasing order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Bit `i - 1` is set for each member `i`.
    pub fn mask(&self) -> u32 {
        self.indices.iter().fold(0, |acc, &i| acc | 1 << (i - 1))
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    pub fn complement(&self) -> MultiIndex {
        let full = (1u32 << self.m) - 1;
        MultiIndex::from_mask(self.m, full & !self.mask())
    }

    /// Position of this multi-index in the lexicographic enumeration.
    pub fn rank(&self) -> usize {
        lex_rank(self.m, self.mask())
    }
}

/// Lexicographic rank of the `k`-subset encoded by `mask` among all
/// `k`-subsets of `{1, …, m}`.
pub(crate) fn lex_rank(m: usize, mask: u32) -> usize {
    let k = mask.count_ones() as usize;
    let mut rank = 0;
    let mut prev = 0usize;
    let mut r = 0usize;
    for c in 1..=m {
        if mask & (1 << (c - 1)) == 0 {
            continue;
        }
        r += 1;
        for skipped in prev + 1..c {
            rank += binomial(m - skipped, k - r);
        }
        prev = c;
    }
    rank
}

/// All `k`-multi-indices of `{1, …, m}` in lexicographic order.
pub fn enumerate_multi_indices(m: usize, k: usize) -> Result<Vec<MultiIndex>> {
    check_dims(m, k)?;
    let mut out = Vec::with_capacity(binomial(m, k));
    let mut current = Vec::with_capacity(k);
    fn rec(m: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if cur.len() == k {
            out.push(MultiIndex {
                m,
                indices: cur.clone(),
            });
            return;
        }
        let remaining = k - cur.len();
        for i in start..=m + 1 - remaining {
            cur.push(i);
            rec(m, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(m, k, 1, &mut current, &mut out);
    Ok(out)
}

/// Number of members of `a` greater than `b`'s members, summed: the
/// inversion count of the concatenation `(a, b)` for disjoint masks.
fn concat_inversions(a: u32, b: u32) -> u32 {
    let mut inv = 0;
    let mut rest = b;
    while rest != 0 {
        let low = rest.trailing_zeros();
        inv += (a >> (low + 1)).count_ones();
        rest &= rest - 1;
    }
    inv
}

/// `σ(ī)`: sign with `*e_ī = σ(ī) e_{ī^c}`.
pub fn permutation_sign(i: &MultiIndex) -> i32 {
    let inv = concat_inversions(i.mask(), i.complement().mask());
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

/// An element of `Λₖ(ℝᵐ)` with complex coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FormVector {
    m: usize,
    k: usize,
    coeffs: Vec<Complex64>,
}

impl FormVector {
    pub fn zeros(m: usize, k: usize) -> Result<Self> {
        check_dims(m, k)?;
        Ok(Self {
            m,
            k,
            coeffs: vec![Complex64::new(0.0, 0.0); binomial(m, k)],
        })
    }

    pub fn from_coeffs(m: usize, k: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_dims(m, k)?;
        if coeffs.len() != binomial(m, k) {
            return Err(Error::Shape(format!(
                "Λ_{k}(ℝ^{m}) needs {} coefficients, got {}",
                binomial(m, k),
                coeffs.len()
            )));
        }
        Ok(Self { m, k, coeffs })
    }

    pub fn from_real(m: usize, k: usize, coeffs: &[f64]) -> Result<Self> {
        Self::from_coeffs(m, k, coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// The basis element `e_ī`.
    pub fn basis(i: &MultiIndex) -> Self {
        let mut v = Self::zeros(i.m, i.degree()).expect("valid multi-index");
        v.coeffs[i.rank()] = Complex64::new(1.0, 0.0);
        v
    }

    /// The 1-form `Σ ξ_l e_l`.
    pub fn one_form(xi: &[f64]) -> Result<Self> {
        Self::from_real(xi.len(), 1, xi)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Hermitian inner product, linear in `self` and conjugate-linear in `other`.
    pub fn inner(&self, other: &FormVector) -> Complex64 {
        debug_assert_eq!((self.m, self.k), (other.m, other.k));
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn conj(&self) -> FormVector {
        FormVector {
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
            ..self.clone()
        }
    }

    pub fn scale(&self, s: Complex64) -> FormVector {
        FormVector {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &FormVector) -> FormVector {
        debug_assert_eq!((self.m, self.k), (other.m, other.k));
        FormVector {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
            ..self.clone()
        }
    }

    pub fn max_abs_diff(&self, other: &FormVector) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Exterior product `a ∧ b`.
pub fn wedge(a: &FormVector, b: &FormVector) -> Result<FormVector> {
    if a.m != b.m {
        return Err(Error::Shape(format!(
            "wedge of forms over ℝ^{} and ℝ^{}",
            a.m, b.m
        )));
    }
    let m = a.m;
    if a.k + b.k > m {
        return Err(Error::Domain(format!(
            "degree {} + {} exceeds dimension {m}",
            a.k, b.k
        )));
    }
    let mut out = FormVector::zeros(m, a.k + b.k)?;
    let basis_a = enumerate_multi_indices(m, a.k)?;
    let basis_b = enumerate_multi_indices(m, b.k)?;
    for (ia, ca) in basis_a.iter().zip(&a.coeffs) {
        if ca.norm_sqr() == 0.0 {
            continue;
        }
        let ma = ia.mask();
        for (ib, cb) in basis_b.iter().zip(&b.coeffs) {
            let mb = ib.mask();
            if ma & mb != 0 {
                continue;
            }
            let sign = if concat_inversions(ma, mb) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            out.coeffs[lex_rank(m, ma | mb)] += ca * cb * sign;
        }
    }
    Ok(out)
}

/// Hodge star `Λₖ → Λ_{m−k}`.
pub fn hodge_star(a: &FormVector) -> FormVector {
    let mut out = FormVector::zeros(a.m, a.m - a.k).expect("complementary degree");
    let basis = enumerate_multi_indices(a.m, a.k).expect("valid degree");
    for (i, c) in basis.iter().zip(&a.coeffs) {
        let target = i.complement().rank();
        out.coeffs[target] = c * permutation_sign(i) as f64;
    }
    out
}

/// An inhomogeneous form, one component per degree `0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedForm {
    m: usize,
    components: Vec<FormVector>,
}

impl GradedForm {
    pub fn zeros(m: usize) -> Result<Self> {
        let components = (0..=m)
            .map(|k| FormVector::zeros(m, k))
            .collect::<Result<_>>()?;
        Ok(Self { m, components })
    }

    pub fn from_components(components: Vec<FormVector>) -> Result<Self> {
        let m = components.len().checked_sub(1).ok_or_else(|| {
            Error::Shape("a graded form needs at least one component".into())
        })?;
        for (k, c) in components.iter().enumerate() {
            if c.m != m || c.k != k {
                return Err(Error::Shape(format!(
                    "component {k} has (m, k) = ({}, {}), expected ({m}, {k})",
                    c.m, c.k
                )));
            }
        }
        Ok(Self { m, components })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn component(&self, k: usize) -> &FormVector {
        &self.components[k]
    }

    pub fn components(&self) -> &[FormVector] {
        &self.components
    }

    /// `‖ω‖² = Σₖ ‖ωₖ‖²`.
    pub fn norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn inner(&self, other: &GradedForm) -> Complex64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.inner(b))
            .sum()
    }
}

/// The matrix `[ξ]` of `ω ↦ ξ ∧ ω`, stored as its degree-raising blocks.
///
/// `block(k)` maps `Λₖ → Λ_{k+1}` and has shape `C(m, k+1) × C(m, k)`.
#[derive(Debug, Clone)]
pub struct WedgeMatrix {
    m: usize,
    blocks: Vec<DMatrix<f64>>,
}

/// Builds `[ξ]` for a real `ξ ∈ ℝᵐ`.
pub fn wedge_matrix(xi: &[f64]) -> Result<WedgeMatrix> {
    let m = xi.len();
    check_dims(m, 0)?;
    let mut blocks = Vec::with_capacity(m);
    for k in 0..m {
        let cols = enumerate_multi_indices(m, k)?;
        let mut block = DMatrix::zeros(binomial(m, k + 1), cols.len());
        for (col, j) in cols.iter().enumerate() {
            let mask = j.mask();
            for l in 1..=m {
                let bit = 1u32 << (l - 1);
                if mask & bit != 0 {
                    continue;
                }
                // e_l ∧ e_j̄ needs one transposition per member of j̄ below l.
                let below = (mask & (bit - 1)).count_ones();
                let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
                block[(lex_rank(m, mask | bit), col)] = sign * xi[l - 1];
            }
        }
        blocks.push(block);
    }
    Ok(WedgeMatrix { m, blocks })
}

impl WedgeMatrix {
    pub fn m(&self) -> usize {
        self.m
    }

    /// The `Λₖ → Λ_{k+1}` block; `k < m`.
    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    /// `[ξ]ᵗ[ξ]` restricted to `Λₖ`.
    pub fn gram_up(&self, k: usize) -> DMatrix<f64> {
        let dim = binomial(self.m, k);
        if k == self.m {
            DMatrix::zeros(dim, dim)
        } else {
            self.blocks[k].transpose() * &self.blocks[k]
        }
    }

    /// `[ξ][ξ]ᵗ` restricted to `Λₖ`.
    pub fn gram_down(&self, k: usize) -> DMatrix<f64> {
        let dim = binomial(self.m, k);
        if k == 0 {
            DMatrix::zeros(dim, dim)
        } else {
            &self.blocks[k - 1] * self.blocks[k - 1].transpose()
        }
    }

    /// Full `2ᵐ × 2ᵐ` matrix with degrees laid out consecutively.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let offsets = degree_offsets(self.m);
        let n = 1usize << self.m;
        let mut out = DMatrix::zeros(n, n);
        for (k, block) in self.blocks.iter().enumerate() {
            out.view_mut((offsets[k + 1], offsets[k]), block.shape())
                .copy_from(block);
        }
        out
    }

    pub fn apply(&self, form: &GradedForm) -> GradedForm {
        let mut components = vec![FormVector::zeros(self.m, 0).unwrap()];
        for (k, block) in self.blocks.iter().enumerate() {
            let coeffs = mat_vec(block, form.components[k].coeffs());
            components.push(FormVector::from_coeffs(self.m, k + 1, coeffs).unwrap());
        }
        GradedForm { m: self.m, components }
    }

    pub fn apply_transpose(&self, form: &GradedForm) -> GradedForm {
        let mut components = Vec::with_capacity(self.m + 1);
        for (k, block) in self.blocks.iter().enumerate() {
            let coeffs = mat_vec(&block.transpose(), form.components[k + 1].coeffs());
            components.push(FormVector::from_coeffs(self.m, k, coeffs).unwrap());
        }
        components.push(FormVector::zeros(self.m, self.m).unwrap());
        GradedForm { m: self.m, components }
    }
}

/// Start offset of each degree in the concatenated graded coefficient layout.
pub fn degree_offsets(m: usize) -> Vec<usize> {
    let mut offsets = vec![0];
    for k in 0..=m {
        offsets.push(offsets[k] + binomial(m, k));
    }
    offsets
}

fn mat_vec(a: &DMatrix<f64>, v: &[Complex64]) -> Vec<Complex64> {
    (0..a.nrows())
        .map(|r| (0..a.ncols()).map(|c| v[c] * a[(r, c)]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_form(rng: &mut ChaCha8Rng, m: usize, k: usize) -> FormVector {
        let coeffs = (0..binomial(m, k))
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        FormVector::from_coeffs(m, k, coeffs).unwrap()
    }

    fn volume(m: usize) -> FormVector {
        FormVector::basis(&MultiIndex::new(m, (1..=m).collect()).unwrap())
    }

    /// Parity of a permutation via cycle decomposition.
    fn parity_by_cycles(perm: &[usize]) -> i32 {
        let mut seen = vec![false; perm.len()];
        let mut sign = 1;
        for start in 0..perm.len() {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = perm[j];
                len += 1;
            }
            if len % 2 == 0 {
                sign = -sign;
            }
        }
        sign
    }

    #[test]
    fn enumeration_examples() {
        let two: Vec<_> = enumerate_multi_indices(2, 1).unwrap();
        assert_eq!(two.iter().map(|i| i.indices().to_vec()).collect::<Vec<_>>(), vec![vec![1], vec![2]]);
        let six: Vec<Vec<usize>> = enumerate_multi_indices(4, 2)
            .unwrap()
            .iter()
            .map(|i| i.indices().to_vec())
            .collect();
        assert_eq!(
            six,
            vec![vec![1, 2], vec![1, 3], vec![1, 4], vec![2, 3], vec![2, 4], vec![3, 4]]
        );
        for m in 0..=5 {
            let empty = enumerate_multi_indices(m, 0).unwrap();
            assert_eq!(empty.len(), 1);
            assert!(empty[0].indices().is_empty());
        }
    }

    #[test]
    fn enumeration_rejects_bad_pairs() {
        let err = enumerate_multi_indices(3, 4).unwrap_err();
        assert!(err.to_string().contains("(3, 4)"));
        assert!(enumerate_multi_indices(13, 1).is_err());
        assert!(MultiIndex::new(3, vec![2, 1]).is_err());
        assert!(MultiIndex::new(3, vec![1, 4]).is_err());
    }

    #[test]
    fn dimensions_and_ranks() {
        for m in 0..=6 {
            let mut total = 0;
            for k in 0..=m {
                let list = enumerate_multi_indices(m, k).unwrap();
                assert_eq!(list.len(), binomial(m, k));
                assert!(list.windows(2).all(|w| w[0].indices() < w[1].indices()));
                for (pos, i) in list.iter().enumerate() {
                    assert_eq!(i.rank(), pos);
                }
                total += list.len();
            }
            assert_eq!(total, 1 << m);
        }
    }

    #[test]
    fn permutation_sign_matches_cycle_parity() {
        for m in 1..=6 {
            for k in 0..=m {
                for i in enumerate_multi_indices(m, k).unwrap() {
                    let perm: Vec<usize> = i
                        .indices()
                        .iter()
                        .chain(i.complement().indices())
                        .map(|&x| x - 1)
                        .collect();
                    assert_eq!(permutation_sign(&i), parity_by_cycles(&perm));
                    let ic = i.complement();
                    let expected = if (k * (m - k)) % 2 == 0 { 1 } else { -1 };
                    assert_eq!(permutation_sign(&i) * permutation_sign(&ic), expected);
                }
            }
        }
        assert_eq!(permutation_sign(&MultiIndex::new(2, vec![2]).unwrap()), -1);
        assert_eq!(permutation_sign(&MultiIndex::new(5, vec![1, 2, 3]).unwrap()), 1);
    }

    #[test]
    fn wedge_basics() {
        let e1 = FormVector::one_form(&[1.0, 0.0]).unwrap();
        let e2 = FormVector::one_form(&[0.0, 1.0]).unwrap();
        assert_eq!(wedge(&e1, &e2).unwrap().coeffs(), &[c(1.0)]);
        assert_eq!(wedge(&e2, &e1).unwrap().coeffs(), &[c(-1.0)]);
        let two = FormVector::zeros(2, 2).unwrap();
        assert!(matches!(wedge(&e1, &two), Err(Error::Domain(_))));
    }

    #[test]
    fn wedge_is_nilpotent_and_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in 2..=5 {
            for k in 0..=m - 2 {
                let xi: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let xi = FormVector::one_form(&xi).unwrap();
                let w = random_form(&mut rng, m, k);
                let twice = wedge(&xi, &wedge(&xi, &w).unwrap()).unwrap();
                assert!(twice.norm() < 1e-14);
            }
            for j in 0..=m {
                for k in 0..=m - j {
                    for l in 0..=m - j - k {
                        let a = random_form(&mut rng, m, j);
                        let b = random_form(&mut rng, m, k);
                        let c = random_form(&mut rng, m, l);
                        let left = wedge(&wedge(&a, &b).unwrap(), &c).unwrap();
                        let right = wedge(&a, &wedge(&b, &c).unwrap()).unwrap();
                        assert!(left.max_abs_diff(&right) < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn hodge_defining_identity_on_basis_pairs() {
        for m in 1..=4 {
            let vol = volume(m);
            for k in 0..=m {
                let basis = enumerate_multi_indices(m, k).unwrap();
                for a in &basis {
                    for b in &basis {
                        let alpha = FormVector::basis(a);
                        let beta = FormVector::basis(b);
                        let lhs = vol.scale(alpha.inner(&beta));
                        let rhs = wedge(&beta.conj(), &hodge_star(&alpha)).unwrap();
                        assert!(lhs.max_abs_diff(&rhs) < 1e-15, "m={m} {a:?} {b:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn hodge_defining_identity_on_random_complex_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 1..=4 {
            let vol = volume(m);
            for k in 0..=m {
                let alpha = random_form(&mut rng, m, k);
                let beta = random_form(&mut rng, m, k);
                let lhs = vol.scale(alpha.inner(&beta));
                let rhs = wedge(&beta.conj(), &hodge_star(&alpha)).unwrap();
                assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            }
        }
    }

    #[test]
    fn hodge_examples() {
        for m in 1..=6 {
            let one = FormVector::from_real(m, 0, &[1.0]).unwrap();
            assert_eq!(hodge_star(&one), volume(m));
        }
        let e12 = FormVector::basis(&MultiIndex::new(4, vec![1, 2]).unwrap());
        let e34 = FormVector::basis(&MultiIndex::new(4, vec![3, 4]).unwrap());
        let sign = permutation_sign(&MultiIndex::new(4, vec![1, 2]).unwrap()) as f64;
        assert_eq!(hodge_star(&e12), e34.scale(c(sign)));
    }

    #[test]
    fn hodge_involution_on_full_bases() {
        for m in 0..=6 {
            for k in 0..=m {
                let sign = if (k * (m - k)) % 2 == 0 { 1.0 } else { -1.0 };
                for i in enumerate_multi_indices(m, k).unwrap() {
                    let e = FormVector::basis(&i);
                    assert_eq!(hodge_star(&hodge_star(&e)), e.scale(c(sign)));
                }
            }
        }
    }

    #[test]
    fn wedge_matrix_small_block() {
        let w = wedge_matrix(&[0.3, -1.7]).unwrap();
        assert_eq!(w.block(0).as_slice(), &[0.3, -1.7]);
        assert_eq!(w.to_dense().shape(), (4, 4));
    }

    #[test]
    fn wedge_matrix_matches_wedge_and_squares_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 1..=5 {
            let xi: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w = wedge_matrix(&xi).unwrap();
            let one = FormVector::one_form(&xi).unwrap();
            let form = GradedForm::from_components(
                (0..=m).map(|k| random_form(&mut rng, m, k)).collect(),
            )
            .unwrap();
            let image = w.apply(&form);
            for k in 0..m {
                let direct = wedge(&one, form.component(k)).unwrap();
                assert!(direct.max_abs_diff(image.component(k + 1)) < 1e-13);
            }
            assert!(w.apply(&image).norm() < 1e-13);
            let dense = w.to_dense();
            assert!((&dense * &dense).amax() < 1e-13);
            let norm_sq: f64 = xi.iter().map(|x| x * x).sum();
            let g0 = w.gram_up(0);
            assert!((g0[(0, 0)] - norm_sq).abs() < 1e-13);
            for v in dense.iter() {
                assert!(*v == 0.0 || xi.iter().any(|x| x.abs() == v.abs()));
            }
        }
    }

    #[test]
    fn wedge_matrix_adjointness() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in 1..=5 {
            let xi: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w = wedge_matrix(&xi).unwrap();
            let a = GradedForm::from_components((0..=m).map(|k| random_form(&mut rng, m, k)).collect()).unwrap();
            let b = GradedForm::from_components((0..=m).map(|k| random_form(&mut rng, m, k)).collect()).unwrap();
            let lhs = w.apply(&a).inner(&b);
            let rhs = a.inner(&w.apply_transpose(&b));
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn graded_norm_is_orthogonal_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let parts: Vec<_> = (0..=3).map(|k| random_form(&mut rng, 3, k)).collect();
        let expected: f64 = parts.iter().map(|p| p.norm().powi(2)).sum::<f64>().sqrt();
        let g = GradedForm::from_components(parts).unwrap();
        assert!((g.norm() - expected).abs() < 1e-15);
    }
}
