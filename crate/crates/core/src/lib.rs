//! Semismooth* Newton method for generalized equations
//! `0 ∈ f(x) + ∇g(x)ᵀN_D(g(x))` with `D` a box.

pub mod boxcones;
pub mod densela;
pub mod geproblem;
pub mod qpsolver;
pub mod ssnsolver;
pub mod baselines;
