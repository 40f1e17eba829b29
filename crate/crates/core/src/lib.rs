//! Symbolic diagonalisation of weakly-periodic twisted-multiplicative
//! automorphisms of free skew-fields.
//!
//! The input is the combinatorial datum of a periodic free-group
//! automorphism (a rooted tree with integer assignments and pair families)
//! together with an optional diagonal twist.  The engine constructs the
//! induced automorphism of the free group, extends it to the group algebra
//! and to noncommutative rational expressions, and synthesizes an explicit
//! free generating set on which the automorphism acts diagonally, with exact
//! cyclotomic eigenvalues.  Every identity the synthesis relies on is checked
//! twice: exactly in the group algebra, and numerically by evaluating the
//! rational expressions on random tuples of complex matrices.

pub mod automorphism;
pub mod cyclotomic;
pub mod diagonalizer;
pub mod grpalg;
pub mod presets;
pub mod ratexpr;
pub mod scalar;
pub mod tree;
pub mod verifier;
pub mod word;

pub use automorphism::{Automorphism, CheckMode, TwistSpec};
pub use diagonalizer::{diagonalize, DiagonalBasis, Diagonalisation, FaultInjection};
pub use grpalg::GroupAlgebraElement;
pub use ratexpr::{probable_equal, EqualityConfig, MatrixPoint, RationalExpr, Verdict};
pub use scalar::{Coefficient, ScalarContext, ScalarTerm};
pub use tree::{Alphabet, NNTree};
pub use verifier::{verify_all, VerificationReport, VerifyConfig};
pub use word::FreeWord;
