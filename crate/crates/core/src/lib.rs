//! Extension operators for Sobolev-type seminorms on weighted complete
//! binary trees.
//!
//! A complete binary tree of height `N` carries positive edge weights that
//! depend only on depth.  Functions on the leaves are extended to the whole
//! tree by averaging against the hitting distribution of a depth-adapted
//! random walk; the resulting linear operator is near-optimal for the
//! weighted first-difference seminorm.  The crate provides:
//!
//! * bit-indexed tree navigation, fields and symmetries ([`tree`]),
//! * the adapted random walk, its closed-form statistics and a simulator
//!   ([`walk`]),
//! * the harmonic extension operator and the induced operator on edge
//!   fields ([`extension`]),
//! * the edge-pair kernel of the induced operator together with its
//!   depth-reduced forms ([`kernels`]),
//! * seminorms, trace seminorms, operator-norm estimators and the explicit
//!   constant bounds ([`norms`]).

// Depth indices carry meaning throughout; indexed loops read better than
// iterator chains with skip/take.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod extension;
pub mod kernels;
pub mod mat;
pub mod norms;
pub mod tree;
pub mod walk;

pub use error::{Error, Result};
pub use mat::Mat;
