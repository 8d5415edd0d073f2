//! Norms and operator-norm machinery: the weighted first-difference
//! seminorm, depth-reduced weighted `l^p` spaces, nonlinear power iteration
//! for `p`-operator norms of nonnegative kernels, the discrete Hardy /
//! Muckenhoupt criterion, the cumulative-sum operators it controls, and the
//! explicit constants that bound the extension operator.

pub mod trace;

pub use trace::{trace_seminorm, TraceResult};

use crate::error::{Error, Result};
use crate::extension::harmonic_extend;
use crate::kernels::{reduced_l, reversed_kernel, EdgeKernel};
use crate::mat::Mat;
use crate::tree::{gradient, FieldRole, ScalarField, TreeWeights};
use crate::walk::{check_exponent, WalkProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Conjugate exponent `q = p / (p - 1)`.
pub fn holder_conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

fn check_positive_vector(what: &'static str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::DimensionMismatch {
            what,
            expected: 1,
            actual: 0,
        });
    }
    for (i, &x) in v.iter().enumerate() {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::InvalidEntry {
                what,
                index: i,
                value: x,
            });
        }
    }
    Ok(())
}

/// Weighted `l^p` norm `(Σ_k mu_k |v_k|^p)^(1/p)`, scaled internally so
/// that extreme entries do not overflow the power.
pub fn weighted_lp(mu: &[f64], v: &[f64], p: f64) -> Result<f64> {
    check_exponent(p)?;
    check_positive_vector("norm weight", mu)?;
    if v.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            what: "weighted vector",
            expected: mu.len(),
            actual: v.len(),
        });
    }
    let top = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if top == 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (w, x) in mu.iter().zip(v) {
        acc += w * (x.abs() / top).powf(p);
    }
    Ok(top * acc.powf(1.0 / p))
}

/// Norm of an edge field: `(Σ_x W_d(x) |g(x)|^p)^(1/p)`.
pub fn lp_edge_norm(weights: &TreeWeights, g: &ScalarField, p: f64) -> Result<f64> {
    check_exponent(p)?;
    g.expect_role(FieldRole::Edges)?;
    let n = weights.height();
    if g.height() != n {
        return Err(Error::HeightMismatch {
            left: g.height(),
            right: n,
        });
    }
    let top = g.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if top == 0.0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    let mut slot = 0;
    for k in 1..=n {
        let w = weights.at(k);
        for _ in 0..1u64 << k {
            acc += w * (g.values()[slot].abs() / top).powf(p);
            slot += 1;
        }
    }
    Ok(top * acc.powf(1.0 / p))
}

/// First-difference seminorm of a vertex function:
/// `(Σ_k W_k Σ_{d(x)=k} |F(x) - F(parent)|^p)^(1/p)`.
pub fn sobolev_seminorm(weights: &TreeWeights, f: &ScalarField, p: f64) -> Result<f64> {
    f.expect_role(FieldRole::Vertices)?;
    lp_edge_norm(weights, &gradient(f)?, p)
}

/// Which depth-indexed weight vector a reduced norm uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthWeightVariant {
    /// `mu_k = 2^k W_k`: the norm of depth-invariant edge fields.
    Forward,
    /// `w_s = 2^(N+1-s) W_(N+1-s)`: the same after reversing the depth index.
    Reversed,
}

/// The depth-indexed weight vector (entry `k` stored at `k - 1`).
pub fn depth_weight_vector(weights: &TreeWeights, variant: DepthWeightVariant) -> Vec<f64> {
    let n = weights.height();
    match variant {
        DepthWeightVariant::Forward => (1..=n)
            .map(|k| (1u64 << k) as f64 * weights.at(k))
            .collect(),
        DepthWeightVariant::Reversed => (1..=n)
            .map(|s| (1u64 << (n + 1 - s)) as f64 * weights.at(n + 1 - s))
            .collect(),
    }
}

/// `alpha_k = w_k^(-1/(p-1))`, normalized so the largest entry is 1 (every
/// downstream use is scale-invariant in `alpha`).
pub fn alpha_sequence(w: &[f64], p: f64) -> Result<Vec<f64>> {
    check_exponent(p)?;
    check_positive_vector("reversed weight", w)?;
    let scale = -1.0 / (p - 1.0);
    let logs: Vec<f64> = w.iter().map(|x| scale * x.ln()).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(logs.iter().map(|l| (l - top).exp()).collect())
}

/// `Q_s = alpha_s / Σ_{k<=s} alpha_k` for `alpha_k = w_k^(-1/(p-1))`;
/// `Q_1 = 1` exactly.
pub fn hardy_escape(w: &[f64], p: f64) -> Result<Vec<f64>> {
    let alpha = alpha_sequence(w, p)?;
    let mut acc = 0.0;
    Ok(alpha
        .iter()
        .map(|&a| {
            acc += a;
            a / acc
        })
        .collect())
}

/// `T0 f(s) = Q_s Σ_{t<=s} f(t)`.
pub fn script_t0_apply(q: &[f64], f: &[f64]) -> Vec<f64> {
    debug_assert_eq!(q.len(), f.len());
    let mut acc = 0.0;
    q.iter()
        .zip(f)
        .map(|(&qs, &ft)| {
            acc += ft;
            qs * acc
        })
        .collect()
}

/// `T1 f(s) = alpha_s Σ_{t>s} f(t) / Σ_{j<=t} alpha_j`, the telescoped form
/// of `Σ_{t>s} [Q_s Π_{k=s+1..t} (1-Q_k)] f(t)`.
pub fn script_t1_apply(alpha: &[f64], f: &[f64]) -> Vec<f64> {
    debug_assert_eq!(alpha.len(), f.len());
    let n = alpha.len();
    let mut prefix = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &a in alpha {
        acc += a;
        prefix.push(acc);
    }
    let mut out = vec![0.0; n];
    let mut tail = 0.0;
    for s in (0..n).rev() {
        out[s] = alpha[s] * tail;
        tail += f[s] / prefix[s];
    }
    out
}

/// Dense matrix of `T0`.
pub fn script_t0_matrix(q: &[f64]) -> Mat {
    Mat::from_fn(q.len(), q.len(), |i, j| if j <= i { q[i] } else { 0.0 })
}

/// Dense matrix of `T1` (via the telescoped kernel `alpha_s / A_t`).
pub fn script_t1_matrix(alpha: &[f64]) -> Mat {
    let n = alpha.len();
    let mut prefix = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &a in alpha {
        acc += a;
        prefix.push(acc);
    }
    Mat::from_fn(n, n, |i, j| if j > i { alpha[i] / prefix[j] } else { 0.0 })
}

/// Direction of the cumulative sum in the Hardy inequality the criterion
/// controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HardyDirection {
    /// `Σ_{l<=k} f(l)`; criterion pairs a tail of `U` with a head of `V`.
    Forward,
    /// `Σ_{l>=k} f(l)`; criterion pairs a head of `U` with a tail of `V`.
    Reversed,
}

/// Smallest `A` such that the Muckenhoupt criterion holds:
/// forward `(Σ_{k>=r} U_k^p)^(1/p) <= A (Σ_{k<=r} V_k^-q)^(-1/q)` for every
/// `r`, and with head/tail exchanged in the reversed direction.
pub fn muckenhoupt_best_a(
    u: &[f64],
    v: &[f64],
    p: f64,
    direction: HardyDirection,
) -> Result<f64> {
    check_exponent(p)?;
    check_positive_vector("criterion weight U", u)?;
    check_positive_vector("criterion weight V", v)?;
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            what: "criterion weight V",
            expected: u.len(),
            actual: v.len(),
        });
    }
    let q = holder_conjugate(p);
    let n = u.len();
    let up: Vec<f64> = u.iter().map(|x| x.powf(p)).collect();
    let vq: Vec<f64> = v.iter().map(|x| x.powf(-q)).collect();
    let mut best = 0.0f64;
    match direction {
        HardyDirection::Forward => {
            let mut head = 0.0;
            let mut tails = vec![0.0; n + 1];
            for r in (0..n).rev() {
                tails[r] = tails[r + 1] + up[r];
            }
            for r in 0..n {
                head += vq[r];
                best = best.max(tails[r].powf(1.0 / p) * head.powf(1.0 / q));
            }
        }
        HardyDirection::Reversed => {
            let mut head = 0.0;
            let mut tails = vec![0.0; n + 1];
            for r in (0..n).rev() {
                tails[r] = tails[r + 1] + vq[r];
            }
            for r in 0..n {
                head += up[r];
                best = best.max(head.powf(1.0 / p) * tails[r].powf(1.0 / q));
            }
        }
    }
    Ok(best)
}

/// The explicit constants, all functions of `p` alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalConstants {
    /// `C_p = p^(1/p) q^(1/q)`: the Hardy-inequality constant.
    pub c_p: f64,
    /// Bound for the cumulative-sum operator `T0` on `l^p(w)`.
    pub c_tilde_t0: f64,
    /// Bound for the tail operator `T1` on `l^p(w)`.
    pub c_t1: f64,
    /// Bound for the reduced operator norm (and so for `‖S0‖`).
    pub c_hat: f64,
    /// Bound for the extension-operator norm; `c_bar = 2 c_hat`.
    pub c_bar: f64,
}

/// Evaluate every constant at the given exponent.
pub fn theoretical_constants(p: f64) -> Result<TheoreticalConstants> {
    check_exponent(p)?;
    let q = holder_conjugate(p);
    let c_p = p.powf(1.0 / p) * q.powf(1.0 / q);
    let a_p = (p - 1.0).powf(-1.0 / p);
    let a_q = (q - 1.0).powf(-1.0 / q);
    let c_tilde_t0 = (2.0f64).powf(1.0 / p) * c_p * a_p.max(1.0);
    let c_t1 = (2.0f64).powf(1.0 / q) * c_p * a_q.max(1.0);
    let c_hat = 2.0 * c_p * (1.0 + a_p.max(a_q));
    Ok(TheoreticalConstants {
        c_p,
        c_tilde_t0,
        c_t1,
        c_hat,
        c_bar: 2.0 * c_hat,
    })
}

/// Result of estimating a `p`-operator norm.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OpNormEstimate {
    /// Converged Rayleigh-quotient value (on the perturbed kernel).
    pub value: f64,
    /// Certified lower bound: the quotient of the unperturbed kernel at the
    /// final iterate.
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
}

const OPNORM_MAX_ITERS: usize = 100_000;
const OPNORM_RELATIVE_TOL: f64 = 1e-12;
/// Strict-positivity perturbation added entrywise inside the estimator.
const OPNORM_PERTURBATION: f64 = 1e-14;

/// Operator norm of a nonnegative kernel on the `mu`-weighted `l^p` space,
/// by fixed-point iteration on the eigenvalue equation
/// `S*(S F)^(p-1) = lambda F^(p-1)` started from the all-ones vector.  The
/// kernel is perturbed by a tiny positive constant so the extremal vector
/// is unique and positive; the returned `lower_bound` is evaluated against
/// the unperturbed kernel and is a true lower bound for the norm.
pub fn opnorm_power_iteration(kernel: &Mat, mu: &[f64], p: f64) -> Result<OpNormEstimate> {
    check_exponent(p)?;
    let n = kernel.rows();
    if kernel.cols() != n {
        return Err(Error::DimensionMismatch {
            what: "kernel columns",
            expected: n,
            actual: kernel.cols(),
        });
    }
    check_positive_vector("norm weight", mu)?;
    if mu.len() != n {
        return Err(Error::DimensionMismatch {
            what: "norm weight",
            expected: n,
            actual: mu.len(),
        });
    }
    let mut zero = true;
    for i in 0..n {
        for (j, &v) in kernel.row(i).iter().enumerate() {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::NegativeKernelEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            if v != 0.0 {
                zero = false;
            }
        }
    }
    if zero {
        return Ok(OpNormEstimate {
            value: 0.0,
            lower_bound: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let apply = |f: &[f64], perturbed: bool| -> Vec<f64> {
        let eta = if perturbed { OPNORM_PERTURBATION } else { 0.0 };
        (0..n)
            .map(|s| {
                kernel
                    .row(s)
                    .iter()
                    .zip(f)
                    .map(|(k, x)| (k + eta) * x)
                    .sum()
            })
            .collect()
    };
    let mut f = vec![1.0; n];
    let mut prev = f64::NEG_INFINITY;
    let mut est = 0.0;
    for iter in 1..=OPNORM_MAX_ITERS {
        let g = apply(&f, true);
        est = weighted_lp(mu, &g, p)? / weighted_lp(mu, &f, p)?;
        // adjoint in the mu-weighted pairing, applied to g^(p-1)
        let mut h = vec![0.0; n];
        for s in 0..n {
            let gs = mu[s] * g[s].powf(p - 1.0);
            for (t, k) in kernel.row(s).iter().enumerate() {
                h[t] += (k + OPNORM_PERTURBATION) * gs;
            }
        }
        let mut top = 0.0f64;
        for (t, x) in h.iter_mut().enumerate() {
            *x = (*x / mu[t]).powf(1.0 / (p - 1.0));
            top = top.max(*x);
        }
        for x in h.iter_mut() {
            *x /= top;
        }
        f = h;
        if (est - prev).abs() <= OPNORM_RELATIVE_TOL * est.max(1.0) {
            let g0 = apply(&f, false);
            let lower_bound = weighted_lp(mu, &g0, p)? / weighted_lp(mu, &f, p)?;
            return Ok(OpNormEstimate {
                value: est,
                lower_bound,
                iterations: iter,
                converged: true,
            });
        }
        prev = est;
    }
    let _ = est;
    Err(Error::NonConvergence {
        what: "operator-norm power iteration",
        iterations: OPNORM_MAX_ITERS,
    })
}

fn signed_power(t: f64, e: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.abs().powf(e).copysign(t)
    }
}

/// Certified lower bound for the edge-level operator norm on `L^p(E)`:
/// the best Rayleigh quotient found by a signed power method from several
/// starts (the all-ones field plus random fields).  Sign-indefinite kernels
/// admit no monotone iteration, so only the lower bound is claimed.
pub fn edge_opnorm_lower_bound(
    kernel: &EdgeKernel,
    weights: &TreeWeights,
    p: f64,
    starts: usize,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    check_exponent(p)?;
    let n = kernel.height();
    if weights.height() != n {
        return Err(Error::HeightMismatch {
            left: weights.height(),
            right: n,
        });
    }
    let mut mu = Vec::with_capacity((1usize << (n + 1)) - 2);
    for k in 1..=n {
        mu.extend(std::iter::repeat_n(weights.at(k), 1usize << k));
    }
    let q = holder_conjugate(p);
    let m = kernel.values();
    let count = mu.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for start in 0..starts.max(1) {
        let mut f: Vec<f64> = if start == 0 {
            vec![1.0; count]
        } else {
            (0..count).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
        };
        for _ in 0..iters {
            let g = m.apply(&f);
            let gn = weighted_lp(&mu, &g, p)?;
            if gn == 0.0 {
                break;
            }
            best = best.max(gn / weighted_lp(&mu, &f, p)?);
            let mut h = vec![0.0; count];
            for s in 0..count {
                let zs = mu[s] * signed_power(g[s], p - 1.0);
                if zs == 0.0 {
                    continue;
                }
                for (t, k) in m.row(s).iter().enumerate() {
                    h[t] += k * zs;
                }
            }
            let mut top = 0.0f64;
            for (t, x) in h.iter_mut().enumerate() {
                *x = signed_power(*x / mu[t], q - 1.0);
                top = top.max(x.abs());
            }
            if top == 0.0 {
                break;
            }
            for x in h.iter_mut() {
                *x /= top;
            }
            f = h;
        }
    }
    Ok(best)
}

/// `‖(extension of f)‖ / (trace seminorm of f)`; equals 1 by convention
/// when `f` is constant (both seminorms vanish).
pub fn extension_ratio(weights: &TreeWeights, p: f64, f: &ScalarField) -> Result<f64> {
    f.expect_role(FieldRole::Leaves)?;
    let tr = trace_seminorm(weights, f, p)?;
    if tr.value == 0.0 {
        return Ok(1.0);
    }
    let profile = WalkProfile::adapted(weights, p)?;
    let extended = harmonic_extend(&profile, f)?;
    Ok(sobolev_seminorm(weights, &extended, p)? / tr.value)
}

/// Everything the norm sweep reports for one `(weights, p)` cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormReport {
    pub n: usize,
    pub p: f64,
    pub weights_digest: String,
    pub ratio_samples: Vec<f64>,
    pub max_ratio: f64,
    /// Power-iteration estimate of the reduced operator norm `‖S0‖`.
    pub opnorm_reduced: f64,
    /// `2 ‖S0‖`: the upper bound this route gives for the edge-level norm.
    pub bound_2s0: f64,
    /// Best criterion constant for the reversed-weight cumulative-sum setup
    /// (`U = w^(1/p) Q`, `V = w^(1/p)`).
    pub muckenhoupt_a: f64,
    pub constants: TheoreticalConstants,
}

/// Sample extension ratios for seeded random leaf data and assemble the
/// operator-norm estimates alongside the theoretical constants.
pub fn norm_report(
    weights: &TreeWeights,
    p: f64,
    samples: usize,
    seed: u64,
) -> Result<NormReport> {
    check_exponent(p)?;
    let n = weights.height();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratio_samples = Vec::with_capacity(samples);
    let mut max_ratio = 0.0f64;
    for _ in 0..samples {
        let leaves = ScalarField::from_values(
            FieldRole::Leaves,
            n,
            (0..1u64 << n)
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect(),
        )?;
        let r = extension_ratio(weights, p, &leaves)?;
        max_ratio = max_ratio.max(r);
        ratio_samples.push(r);
    }

    let profile = WalkProfile::adapted(weights, p)?;
    let mu = depth_weight_vector(weights, DepthWeightVariant::Forward);
    let reduced = opnorm_power_iteration(&reduced_l(&profile), &mu, p)?;

    let rev = reversed_kernel(weights, p)?;
    let qp = 1.0 / p;
    let u: Vec<f64> = rev
        .weights_rev
        .iter()
        .zip(&rev.escape_rev)
        .map(|(w, q)| w.powf(qp) * q)
        .collect();
    let v: Vec<f64> = rev.weights_rev.iter().map(|w| w.powf(qp)).collect();
    let muckenhoupt_a = muckenhoupt_best_a(&u, &v, p, HardyDirection::Forward)?;

    Ok(NormReport {
        n,
        p,
        weights_digest: weights.digest(),
        ratio_samples,
        max_ratio,
        opnorm_reduced: reduced.value,
        bound_2s0: 2.0 * reduced.value,
        muckenhoupt_a,
        constants: theoretical_constants(p)?,
    })
}
