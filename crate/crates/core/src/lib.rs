//! Schottky-invariant ultrametric Laplacians on measured tree boundaries.
//!
//! The crate is layered bottom-up: exact p-adic arithmetic ([`padic`],
//! [`disc`]), Schottky groups and word combinatorics ([`schottky`]), orbit
//! trees and measures ([`ultrametric`]), wavelet bases ([`wavelets`]), the
//! invariant operators and their spectra ([`spectral`]), and the heat
//! semigroup, jump process and boundary value problems ([`heat`], [`bvp`]).

pub mod bvp;
pub mod configs;
pub mod disc;
pub mod heat;
pub mod padic;
pub mod schottky;
pub mod spectral;
pub mod ultrametric;
pub mod wavelets;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
