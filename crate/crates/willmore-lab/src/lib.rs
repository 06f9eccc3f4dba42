//! Numerical toolkit for the divergence-form Willmore equation on conformal
//! surface patches.

pub mod multivec;
pub mod diskgrid;
pub mod fields;
pub mod jet;
pub mod immersion;
pub mod conservation;
pub mod confwillmore;
pub mod lorentz;
pub mod flow;
pub mod cli;
