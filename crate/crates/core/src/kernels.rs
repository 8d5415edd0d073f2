//! Edge-pair kernel of the induced operator and its depth reductions.
//!
//! Applying the induced operator to an edge indicator and reading off an
//! edge gives a kernel `K(x, y)` over pairs of edges (identified with their
//! lower endpoints).  It has a closed form in terms of the walk profile:
//! with `s = d(x)`, `t = d(y)`, `r = dlca(x, y)` and `m = min(s, t)`,
//!
//! * comparable pairs (`r = m`, one endpoint below the other):
//!   `K = q_s 2^-t Σ_{k<r} (2^r - 2^k) p_{s-1,k} >= 0`;
//! * incomparable pairs (`r < m`):
//!   `K = -q_s 2^-t Σ_{k<=r} 2^k p_{s-1,k} <= 0`.
//!
//! Summing a row of `K` over all edges `y` at a fixed depth `t` collapses,
//! by symmetry, to depth-indexed `N x N` kernels: `L0` for the incomparable
//! part, `L1` for the comparable part, with `L0 + L1 = 0`.  The operator
//! norm analysis runs through the nonnegative kernel `L = L1` and its
//! index-reversed companion.

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::tree::{dlca, TreeWeights, VertexRef, DENSE_KERNEL_MAX_HEIGHT};
use crate::walk::WalkProfile;

fn pow2(e: i32) -> f64 {
    (2.0f64).powi(e)
}

fn check_edge(profile: &WalkProfile, v: VertexRef) -> Result<()> {
    if v.depth() == 0 {
        return Err(Error::NotAnEdge);
    }
    if v.depth() > profile.height() {
        return Err(Error::DepthOutOfRange {
            depth: v.depth(),
            n: profile.height(),
        });
    }
    if v.index() >= 1u64 << v.depth() {
        return Err(Error::VertexOutOfRange {
            depth: v.depth(),
            index: v.index(),
        });
    }
    Ok(())
}

/// Closed-form kernel entry `K(x, y)`.
pub fn kernel_entry(profile: &WalkProfile, x: VertexRef, y: VertexRef) -> Result<f64> {
    check_edge(profile, x)?;
    check_edge(profile, y)?;
    let (s, t) = (x.depth(), y.depth());
    let r = dlca(x, y);
    let q = profile.escape();
    let p = profile.min_depth();
    if r == s.min(t) {
        let mut acc = 0.0;
        for k in 0..r {
            acc += (pow2(r as i32) - pow2(k as i32)) * p.get(s - 1, k);
        }
        Ok(pow2(-(t as i32)) * (q[s] * acc))
    } else {
        let mut acc = 0.0;
        for k in 0..=r {
            acc += pow2(k as i32) * p.get(s - 1, k);
        }
        Ok(-(pow2(-(t as i32)) * (q[s] * acc)))
    }
}

/// Kernel entry summed directly from the per-edge increments over every
/// leaf below `y`; `O(2^(N - d(y)))` per entry, used to validate the closed
/// form.
pub fn kernel_entry_bruteforce(profile: &WalkProfile, x: VertexRef, y: VertexRef) -> Result<f64> {
    check_edge(profile, x)?;
    check_edge(profile, y)?;
    let n = profile.height();
    let a = profile.increment();
    let (s, t) = (x.depth(), y.depth());
    let mut acc = 0.0;
    for i in 0..1u64 << (n - t) {
        let leaf = VertexRef::new(n, (y.index() << (n - t)) | i);
        acc += a.get(s, dlca(x, leaf));
    }
    Ok(acc)
}

/// Dense kernel over all edge pairs in level order.
#[derive(Debug, Clone)]
pub struct EdgeKernel {
    n: usize,
    values: Mat,
}

/// Which edge pairs contribute to an [`EdgeKernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPart {
    /// All pairs.
    Full,
    /// Incomparable pairs only (nonpositive entries).
    Incomparable,
    /// Comparable pairs only (nonnegative entries).
    Comparable,
}

impl EdgeKernel {
    /// Assemble from the closed form; heights above
    /// [`DENSE_KERNEL_MAX_HEIGHT`] are refused because storage is
    /// `(2^(N+1) - 2)^2` entries.
    pub fn assemble(profile: &WalkProfile, part: KernelPart) -> Result<Self> {
        let n = profile.height();
        if n > DENSE_KERNEL_MAX_HEIGHT {
            return Err(Error::KernelTooLarge {
                n,
                cap: DENSE_KERNEL_MAX_HEIGHT,
            });
        }
        let edges: Vec<VertexRef> = (1..=n)
            .flat_map(|k| (0..1u64 << k).map(move |j| VertexRef::new(k, j)))
            .collect();
        let count = edges.len();
        let mut values = Mat::zeros(count, count);
        for (i, &x) in edges.iter().enumerate() {
            for (j, &y) in edges.iter().enumerate() {
                let comparable = dlca(x, y) == x.depth().min(y.depth());
                let keep = match part {
                    KernelPart::Full => true,
                    KernelPart::Incomparable => !comparable,
                    KernelPart::Comparable => comparable,
                };
                if keep {
                    values.set(i, j, kernel_entry(profile, x, y)?);
                }
            }
        }
        Ok(EdgeKernel { n, values })
    }

    pub fn height(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    /// Storage row/column of an edge in level order.
    pub fn edge_slot(v: VertexRef) -> usize {
        debug_assert!(v.depth() >= 1);
        ((1usize << v.depth()) - 2) + v.index() as usize
    }

    /// Apply to an edge field (level-order layouts match).
    pub fn apply(&self, g: &crate::tree::ScalarField) -> Result<crate::tree::ScalarField> {
        g.expect_role(crate::tree::FieldRole::Edges)?;
        if g.height() != self.n {
            return Err(Error::HeightMismatch {
                left: g.height(),
                right: self.n,
            });
        }
        crate::tree::ScalarField::from_values(
            crate::tree::FieldRole::Edges,
            self.n,
            self.values.apply(g.values()),
        )
    }
}

/// Depth-reduced kernel of the incomparable part:
/// `L0(s,t) = -q_s Σ_{k<m} (1 - 2^(k-m)) p_{s-1,k}`, `m = min(s,t)`.
/// Entry `(s,t)` is stored at `(s-1, t-1)`.
pub fn reduced_l0(profile: &WalkProfile) -> Mat {
    let n = profile.height();
    let q = profile.escape();
    let p = profile.min_depth();
    Mat::from_fn(n, n, |i, j| {
        let s = i + 1;
        let m = s.min(j + 1);
        let mut acc = 0.0;
        for k in 0..m {
            acc += (1.0 - pow2(k as i32 - m as i32)) * p.get(s - 1, k);
        }
        -(q[s] * acc)
    })
}

/// Depth-reduced kernel of the comparable part, computed from the
/// multiplicity of comparable edges at depth `t` (one ancestor when
/// `t <= s`, `2^(t-s)` descendants otherwise):
/// `L1(s,t) = max(1, 2^(t-s)) * 2^-t * q_s Σ_{k<m} (2^m - 2^k) p_{s-1,k}`.
pub fn reduced_l1(profile: &WalkProfile) -> Mat {
    let n = profile.height();
    let q = profile.escape();
    let p = profile.min_depth();
    Mat::from_fn(n, n, |i, j| {
        let (s, t) = (i + 1, j + 1);
        let m = s.min(t);
        let multiplicity = if t >= s { pow2((t - s) as i32) } else { 1.0 };
        let mut acc = 0.0;
        for k in 0..m {
            acc += (pow2(m as i32) - pow2(k as i32)) * p.get(s - 1, k);
        }
        multiplicity * pow2(-(t as i32)) * (q[s] * acc)
    })
}

/// The nonnegative depth-reduced kernel
/// `L(s,t) = q_s Σ_{k<m} (1 - 2^(k-m)) p_{s-1,k}` driving the operator-norm
/// bounds; equals `L1` and `-L0`.
pub fn reduced_l(profile: &WalkProfile) -> Mat {
    let n = profile.height();
    let q = profile.escape();
    let p = profile.min_depth();
    Mat::from_fn(n, n, |i, j| {
        let s = i + 1;
        let m = s.min(j + 1);
        let mut acc = 0.0;
        for k in 0..m {
            acc += (1.0 - pow2(k as i32 - m as i32)) * p.get(s - 1, k);
        }
        q[s] * acc
    })
}

/// Entrywise upper bound `L(s,t) <= q_s Π_{k=m..s-1} (1 - q_k)`.
pub fn reduced_l_bound(profile: &WalkProfile) -> Mat {
    let n = profile.height();
    let q = profile.escape();
    Mat::from_fn(n, n, |i, j| {
        let s = i + 1;
        let m = s.min(j + 1);
        let mut v = q[s];
        for k in m..s {
            v *= 1.0 - q[k];
        }
        v
    })
}

/// The reduced kernel and weights after reversing the depth index
/// (`s -> N + 1 - s`), which turns the analysis into discrete Hardy-type
/// inequalities on `{1..N}`.
#[derive(Debug, Clone)]
pub struct ReversedKernel {
    /// `Q_s = w_s^(-1/(p-1)) / Σ_{k<=s} w_k^(-1/(p-1))`, stored at `s-1`;
    /// coincides with the escape probability at depth `N + 1 - s`.
    pub escape_rev: Vec<f64>,
    /// Reversed depth weights `w_s = 2^(N+1-s) W_{N+1-s}`, stored at `s-1`.
    pub weights_rev: Vec<f64>,
    /// `script-K(s,t) = L(N+1-s, N+1-t)`, stored 0-based.
    pub kernel: Mat,
    /// Entrywise bound: `Q_s` for `t <= s`, else `Q_s Π_{k=s+1..t} (1-Q_k)`.
    pub bound: Mat,
}

/// Build every reversed-index object for the exponent-adapted walk.
pub fn reversed_kernel(weights: &TreeWeights, p: f64) -> Result<ReversedKernel> {
    let n = weights.height();
    let profile = WalkProfile::adapted(weights, p)?;
    let l = reduced_l(&profile);
    let kernel = Mat::from_fn(n, n, |i, j| l.get(n - 1 - i, n - 1 - j));

    let weights_rev: Vec<f64> = (1..=n)
        .map(|s| (1u64 << (n + 1 - s)) as f64 * weights.at(n + 1 - s))
        .collect();
    let scale = -1.0 / (p - 1.0);
    let log_alpha: Vec<f64> = (1..=n)
        .map(|s| {
            let depth = n + 1 - s;
            scale * (depth as f64 * std::f64::consts::LN_2 + weights.at(depth).ln())
        })
        .collect();
    let mut escape_rev = vec![0.0; n];
    for s in 1..=n {
        let head = &log_alpha[..s];
        let top = head.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // Summed from k = s down to 1 (depth ascending), mirroring the
        // depth-s..N order of the forward construction so the two routes
        // agree to the last bit.
        let mut denom = 0.0;
        for k in (0..s).rev() {
            denom += (log_alpha[k] - top).exp();
        }
        escape_rev[s - 1] = (log_alpha[s - 1] - top).exp() / denom;
    }

    let bound = Mat::from_fn(n, n, |i, j| {
        let (s, t) = (i + 1, j + 1);
        let mut v = escape_rev[s - 1];
        for k in s + 1..=t {
            v *= 1.0 - escape_rev[k - 1];
        }
        v
    });
    Ok(ReversedKernel {
        escape_rev,
        weights_rev,
        kernel,
        bound,
    })
}
