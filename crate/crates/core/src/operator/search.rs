//! Lower bounds for `‖𝒮ₖ‖_{p→p}` on a grid by ratio ascent.
//!
//! Each restart draws a band-limited mean-zero real field, normalizes it to
//! `‖f‖_p = 1`, and climbs `log(‖𝒮ₖf‖_p/‖f‖_p)` along its analytic
//! gradient. Rejected steps halve the step size. For `p < 2` the ascent runs
//! at the dual exponent; `𝒮ₖ` is self-adjoint, so both exponents share the
//! same norm.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{apply_s_k, conjugate, p_star, FormField};
use crate::error::{Error, Result};
use crate::exterior::binomial;
use crate::grid::{project_band_limited_real, random_band_limited_vector, GridSpec, VectorField};

#[derive(Debug, Clone)]
pub struct NormSearchConfig {
    pub restarts: usize,
    /// Ascent steps per restart.
    pub budget: usize,
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for NormSearchConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            budget: 40,
            initial_step: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Running maximum of the ratio after this iteration.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormSearchReport {
    pub m: usize,
    pub k: usize,
    pub p: f64,
    /// Exponent the ascent actually ran at (`max(p, p')`).
    pub search_p: f64,
    pub grid: Vec<usize>,
    pub best_ratio: f64,
    pub bound: f64,
    /// True if any evaluated ratio exceeded `bound + 1e-9`.
    pub violated: bool,
    pub iterations: usize,
    /// Largest ratio over every evaluated field, accepted or not.
    pub max_ratio_seen: f64,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

struct Evaluation {
    ratio: f64,
    image: FormField,
    norm_f: f64,
    norm_image: f64,
}

fn evaluate(f: &FormField, p: f64) -> Result<Evaluation> {
    let image = apply_s_k(f)?;
    let norm_f = f.lp_norm(p);
    let norm_image = image.lp_norm(p);
    Ok(Evaluation {
        ratio: norm_image / norm_f,
        image,
        norm_f,
        norm_image,
    })
}

/// `|u|^{p−2} u / ‖u‖_p^p`, pointwise in the `Λₖ` norm.
fn duality_map(u: &FormField, p: f64, norm: f64) -> Result<FormField> {
    let norms = u.field().pointwise_norms();
    let scale = norm.powf(p);
    let spatial = u.field().to_spatial();
    let channels = spatial
        .channels()
        .iter()
        .map(|c| {
            let mut out = c.clone();
            for (v, n) in out.values_mut().iter_mut().zip(&norms) {
                let w = if *n > 0.0 { n.powf(p - 2.0) / scale } else { 0.0 };
                *v *= w;
            }
            out
        })
        .collect();
    FormField::new(u.k(), VectorField::new(channels)?)
}

fn gradient(f: &FormField, eval: &Evaluation, p: f64) -> Result<FormField> {
    let up = apply_s_k(&duality_map(&eval.image, p, eval.norm_image)?)?;
    let down = duality_map(f, p, eval.norm_f)?;
    let g = up.field().to_spatial().add_scaled(down.field(), -1.0);
    project(&FormField::new(f.k(), g)?)
}

fn project(f: &FormField) -> Result<FormField> {
    let field = f
        .field()
        .map_channels(|c| Ok(project_band_limited_real(c)))?;
    FormField::new(f.k(), field)
}

fn normalize(f: &FormField, p: f64) -> Option<FormField> {
    let n = f.lp_norm(p);
    if !(n > 0.0 && n.is_finite()) {
        return None;
    }
    let field = f.field().scale(Complex64::new(1.0 / n, 0.0));
    FormField::new(f.k(), field).ok()
}

/// Searches for fields with large `‖𝒮ₖf‖_p/‖f‖_p`; `best_ratio` is a lower
/// bound on the discretized operator norm.
pub fn norm_search(
    m: usize,
    k: usize,
    p: f64,
    spec: &GridSpec,
    config: &NormSearchConfig,
) -> Result<NormSearchReport> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("exponent p = {p} must exceed 1")));
    }
    if config.budget == 0 || config.restarts == 0 {
        return Err(Error::Domain("norm search needs a positive budget".into()));
    }
    if spec.m() != m || k > m {
        return Err(Error::Shape(format!(
            "grid dimension {} does not match (m, k) = ({m}, {k})",
            spec.m()
        )));
    }
    let search_p = if p < 2.0 { conjugate(p) } else { p };
    let bound = m as f64 * (p_star(p) - 1.0);
    let dim = binomial(m, k);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut best = 0.0f64;
    let mut max_seen = 0.0f64;
    let mut trace = Vec::new();
    let mut iteration = 0;

    for _ in 0..config.restarts {
        let mut current = loop {
            let raw = FormField::new(k, random_band_limited_vector(spec, dim, &mut rng))?;
            if let Some(f) = normalize(&raw, search_p) {
                break f;
            }
        };
        let mut eval = evaluate(&current, search_p)?;
        max_seen = max_seen.max(eval.ratio);
        let mut step = config.initial_step;
        for _ in 0..config.budget {
            iteration += 1;
            let grad = gradient(&current, &eval, search_p)?;
            let gnorm = grad.lp_norm(2.0);
            if gnorm > 0.0 && gnorm.is_finite() {
                let scale = step * current.lp_norm(2.0) / gnorm;
                let moved = current.field().add_scaled(grad.field(), scale);
                let candidate = FormField::new(k, moved).ok().and_then(|c| normalize(&c, search_p));
                match candidate {
                    Some(c) => {
                        let e = evaluate(&c, search_p)?;
                        max_seen = max_seen.max(e.ratio);
                        if e.ratio > eval.ratio {
                            current = c;
                            eval = e;
                        } else {
                            step *= 0.5;
                        }
                    }
                    None => step *= 0.5,
                }
            }
            best = best.max(eval.ratio);
            trace.push(TracePoint {
                iteration,
                ratio: best,
            });
        }
    }

    Ok(NormSearchReport {
        m,
        k,
        p,
        search_p,
        grid: spec.sizes().to_vec(),
        best_ratio: best,
        bound,
        violated: max_seen > bound + 1e-9,
        iterations: iteration,
        max_ratio_seen: max_seen,
        trace,
    })
}
