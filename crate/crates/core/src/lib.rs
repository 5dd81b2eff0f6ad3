//! The generalized Beurling–Ahlfors operator on differential forms, realized
//! as a Fourier multiplier on periodic boxes, together with numerical checks
//! of the estimates that bound its `Lᵖ` norm by `m(p* − 1)`.
//!
//! * [`exterior`]: multi-indices, wedge product, Hodge star, the matrix `[ξ]`.
//! * [`grid`]: periodic grids, FFT, Riesz transforms, heat semigroup.
//! * [`operator`]: the multiplier `M(ξ)`, `𝒮ₖ` by two routes, norm search.
//! * [`heat`]: heat-extension pairings and the bilinear embedding.
//! * [`haar`]: Haar multipliers, the bilinear Haar sum, Bellman probes.
//! * [`fieldio`]: the plain-text field file format.
//! * [`cli`]: the `ba-forms` command-line front end.

pub mod cli;
pub mod error;
pub mod exterior;
pub mod fieldio;
pub mod grid;
pub mod haar;
pub mod heat;
pub mod operator;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/exterior.md")]
    pub mod exterior {}
    #[doc = include_str!("../../../book/src/multiplier.md")]
    pub mod multiplier {}
    #[doc = include_str!("../../../book/src/heat.md")]
    pub mod heat {}
    #[doc = include_str!("../../../book/src/haar.md")]
    pub mod haar {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
