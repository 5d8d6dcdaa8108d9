//! Stochastic Galerkin projection of parametric second-order linear
//! dynamical systems, port-Hamiltonian first-order embedding,
//! structure-preserving second-order Arnoldi model reduction, transient
//! simulation and H2 frequency-domain error analysis.
//!
//! The pipeline: a [`paramodel::ParametricSecondOrderSystem`] with affine
//! matrix families over a box of uniformly distributed parameters is
//! projected onto an orthonormal Legendre chaos basis
//! ([`pcbasis::PcBasis`]) yielding a constant block system
//! ([`sgalerkin::GalerkinSecondOrderSystem`]). That system embeds into
//! port-Hamiltonian form ([`phform::PhSystem`]), can be simulated
//! ([`simulate`]), reduced ([`mor`]) and compared in the H2 norm
//! ([`freq`]).

pub mod error;
pub mod freq;
pub mod mor;
pub mod paramodel;
pub mod pcbasis;
pub mod phform;
pub mod quadrature;
pub mod sgalerkin;
pub mod simulate;

pub use error::{Error, Result};
