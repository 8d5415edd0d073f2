//! Linear extension of leaf data to the whole tree.
//!
//! The extension of `f` at a vertex `x` is the expectation of `f` at the
//! leaf where the walk started at `x` is absorbed.  Writing `b_{s,r}` for
//! the probability of finishing at one fixed leaf whose path splits from
//! `x` at depth `r`, the value is `Σ_ω b_{d(x), dlca(x,ω)} f(ω)`; grouping
//! leaves by split depth turns this into a subtree-sum sweep, `O(N 2^N)`
//! overall instead of `O(4^N)` for the naive double sum.

use crate::error::Result;
use crate::tree::{gradient, integrate, restrict_to_leaves, FieldRole, ScalarField, VertexRef};
use crate::walk::WalkProfile;

/// Sum of the leaf block below every vertex, laid out like a vertex field.
/// Children are added left before right, so the accumulation order is leaf
/// index ascending.
fn subtree_leaf_sums(n: usize, leaf_values: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; (1 << (n + 1)) - 1];
    let leaf_base = (1usize << n) - 1;
    sums[leaf_base..].copy_from_slice(leaf_values);
    for k in (0..n).rev() {
        let base = (1usize << k) - 1;
        let child_base = (1usize << (k + 1)) - 1;
        for j in 0..1usize << k {
            sums[base + j] = sums[child_base + 2 * j] + sums[child_base + 2 * j + 1];
        }
    }
    sums
}

/// Extend leaf data to a vertex field by averaging against the terminal
/// distribution of the walk.  Leaf values are copied through unchanged, so
/// the result restricted to the leaves is `f` itself.
pub fn harmonic_extend(profile: &WalkProfile, leaf_values: &ScalarField) -> Result<ScalarField> {
    leaf_values.expect_role(FieldRole::Leaves)?;
    let n = profile.height();
    if leaf_values.height() != n {
        return Err(crate::error::Error::HeightMismatch {
            left: leaf_values.height(),
            right: n,
        });
    }
    let sums = subtree_leaf_sums(n, leaf_values.values());
    let b = profile.leaf_hit();
    let mut out = ScalarField::zeros(FieldRole::Vertices, n);
    for s in 0..n {
        let base = (1usize << s) - 1;
        for j in 0..1u64 << s {
            // Leaves splitting at depth r < s live under the depth-r
            // ancestor but not under the depth-(r+1) one; accumulate along
            // the path from the root down, then the subtree below x itself.
            let offset = |r: usize| ((1usize << r) - 1) + (j >> (s - r)) as usize;
            let mut acc = 0.0;
            for r in 0..s {
                acc += b.get(s, r) * (sums[offset(r)] - sums[offset(r + 1)]);
            }
            acc += b.get(s, s) * sums[base + j as usize];
            out.values_mut()[base + j as usize] = acc;
        }
    }
    let leaf_base = (1usize << n) - 1;
    out.values_mut()[leaf_base..].copy_from_slice(leaf_values.values());
    Ok(out)
}

/// Extend by plain subtree averages (the always-descending walk).
pub fn averaging_extend(leaf_values: &ScalarField) -> Result<ScalarField> {
    leaf_values.expect_role(FieldRole::Leaves)?;
    let n = leaf_values.height();
    let sums = subtree_leaf_sums(n, leaf_values.values());
    let mut out = ScalarField::zeros(FieldRole::Vertices, n);
    for k in 0..=n {
        let base = (1usize << k) - 1;
        let scale = (2.0f64).powi(k as i32 - n as i32);
        for j in 0..1usize << k {
            out.values_mut()[base + j] = sums[base + j] * scale;
        }
    }
    Ok(out)
}

/// The extension operator conjugated onto edge fields: integrate the edge
/// field from the root, extend its leaf restriction, and return the edge
/// differences of the extension.
pub fn induced_edge_operator(profile: &WalkProfile, g: &ScalarField) -> Result<ScalarField> {
    g.expect_role(FieldRole::Edges)?;
    let path_sums = integrate(g)?;
    let leaf_values = restrict_to_leaves(&path_sums)?;
    let extended = harmonic_extend(profile, &leaf_values)?;
    gradient(&extended)
}

/// Signed gap in the mean-value property at one vertex: the value minus the
/// expected value after one step of the walk.  Defined for vertices of depth
/// `< N`; the parent term drops out at the root where the walk always
/// descends.
pub fn mean_value_gap(profile: &WalkProfile, f: &ScalarField, v: VertexRef) -> Result<f64> {
    f.expect_role(FieldRole::Vertices)?;
    let s = v.depth();
    assert!(s < profile.height(), "mean-value gap needs an internal vertex");
    let x = profile.descend()[s];
    let children = 0.5 * x * (f.at(v.child(0)) + f.at(v.child(1)));
    let parent = match v.parent() {
        Some(p) => (1.0 - x) * f.at(p),
        None => 0.0,
    };
    Ok(f.at(v) - children - parent)
}

/// Largest absolute mean-value gap over all internal vertices; the extension
/// of any leaf data drives this to rounding level.
pub fn harmonicity_residual(profile: &WalkProfile, f: &ScalarField) -> Result<f64> {
    f.expect_role(FieldRole::Vertices)?;
    let n = profile.height();
    let mut worst = 0.0f64;
    for k in 0..n {
        for j in 0..1u64 << k {
            worst = worst.max(mean_value_gap(profile, f, VertexRef::new(k, j))?.abs());
        }
    }
    Ok(worst)
}
