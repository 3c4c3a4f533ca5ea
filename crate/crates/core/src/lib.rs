//! Fundamental-matrix estimation from point matches: the normalized
//! eight-point method and a certified global minimizer of the algebraic cost
//! built on moment relaxations, with the evaluation pipeline (triangulation,
//! projective bundle adjustment) and a synthetic benchmark.
//!
//! Layers, bottom up:
//! - [`poly`]: monomial bases, moment vectors, moment and localizing matrices;
//! - [`sdp`]: primal-dual interior-point solver for block LMIs;
//! - [`lasserre`]: relaxations, rank certificate, minimizer extraction;
//! - [`epipolar`]: the two estimators;
//! - [`multiview`]: cameras, triangulation, bundle adjustment, reports;
//! - [`simulator`]: synthetic scenes and sweeps;
//! - [`io`]: match files.

pub mod epipolar;
pub mod io;
pub mod lasserre;
pub mod multiview;
pub mod poly;
pub mod sdp;
pub mod simulator;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/polynomials.md")]
    mod polynomials {}
    #[doc = include_str!("../../../book/src/relaxations.md")]
    mod relaxations {}
    #[doc = include_str!("../../../book/src/sdp.md")]
    mod sdp {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
