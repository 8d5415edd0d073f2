//! The depth-adapted random walk and its closed-form statistics.
//!
//! The walk lives on the vertices of the tree and is invariant under tree
//! symmetries, so its law is determined by the depth process: from depth `s`
//! it steps to the parent with probability `1 - x_s` and to each child with
//! probability `x_s / 2`, stopping on arrival at a leaf.  Everything is
//! parametrized by the escape probabilities `q_s` — the chance that a walk
//! started at depth `s` reaches a leaf before visiting depth `s - 1`.  For
//! the exponent-adapted walk, `q_s` is proportional to
//! `(2^s W_s)^(-1/(p-1))` normalized over depths `s..=N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::tree::{TreeWeights, VertexRef};

/// Trajectory cap; an adapted walk on a supported tree terminates far
/// earlier with overwhelming probability.
pub const MAX_WALK_STEPS: usize = 10_000_000;

pub fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::InvalidExponent { p });
    }
    Ok(())
}

/// Escape probabilities of the exponent-adapted walk:
/// `q_s = (2^s W_s)^(-1/(p-1)) / Σ_{k=s..N} (2^k W_k)^(-1/(p-1))`,
/// with the convention `q_0 = 1` (and `q_N = 1` by the formula).
///
/// Terms are max-normalized in log space per row, so extreme weights and
/// exponents close to 1 do not overflow.
pub fn escape_probabilities(weights: &TreeWeights, p: f64) -> Result<Vec<f64>> {
    check_exponent(p)?;
    let n = weights.height();
    let scale = -1.0 / (p - 1.0);
    let log_terms: Vec<f64> = (1..=n)
        .map(|k| scale * (k as f64 * std::f64::consts::LN_2 + weights.at(k).ln()))
        .collect();
    let mut q = vec![1.0; n + 1];
    for s in 1..=n {
        let tail = &log_terms[s - 1..];
        let top = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &t in tail {
            denom += (t - top).exp();
        }
        q[s] = (log_terms[s - 1] - top).exp() / denom;
    }
    Ok(q)
}

fn validate_escape(q: &[f64]) -> Result<()> {
    if q.len() < 2 {
        return Err(Error::InvalidEscape {
            reason: format!("need at least 2 entries (heights start at 1), got {}", q.len()),
        });
    }
    let n = q.len() - 1;
    if q[0] != 1.0 {
        return Err(Error::InvalidEscape {
            reason: format!("q[0] must be 1, got {}", q[0]),
        });
    }
    if q[n] != 1.0 {
        return Err(Error::InvalidEscape {
            reason: format!("q[N] must be 1, got {}", q[n]),
        });
    }
    for (s, &v) in q.iter().enumerate() {
        if !(v.is_finite() && v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidEscape {
                reason: format!("q[{s}] = {v} outside (0, 1]"),
            });
        }
    }
    Ok(())
}

/// Downward transition probabilities from the escape probabilities:
/// `x_s = q_s / (q_{s+1} + (1 - q_{s+1}) q_s)` for `0 <= s <= N-1`.
/// The root always descends (`x_0 = 1`).
pub fn descend_probabilities(q: &[f64]) -> Result<Vec<f64>> {
    validate_escape(q)?;
    let n = q.len() - 1;
    let mut x = vec![0.0; n];
    // With q_0 = 1 the formula collapses to 1; set it exactly.
    x[0] = 1.0;
    for s in 1..n {
        x[s] = q[s] / (q[s + 1] + (1.0 - q[s + 1]) * q[s]);
    }
    Ok(x)
}

/// Law of the minimal depth visited before absorption, `p_{s,r}` for a walk
/// started at depth `s`:
/// `p_{s,r} = q_r * Π_{k=r+1..s} (1 - q_k)` for `0 <= r <= s <= N-1`, and
/// `p_{N,r} = [r == N]` (a walk started at a leaf stops immediately).
pub fn min_depth_distribution(q: &[f64]) -> Result<Mat> {
    validate_escape(q)?;
    let n = q.len() - 1;
    let mut p = Mat::zeros(n + 1, n + 1);
    for s in 0..n {
        for r in 0..=s {
            let mut v = q[r];
            for k in r + 1..=s {
                v *= 1.0 - q[k];
            }
            p.set(s, r, v);
        }
    }
    p.set(n, n, 1.0);
    Ok(p)
}

/// Same law built from the one-step recurrence
/// `p_{s,r} = q_s [s == r] + (1 - q_s) p_{s-1,r}`; used to cross-check the
/// product formula.
pub fn min_depth_distribution_recurrence(q: &[f64]) -> Result<Mat> {
    validate_escape(q)?;
    let n = q.len() - 1;
    let mut p = Mat::zeros(n + 1, n + 1);
    p.set(0, 0, q[0]);
    for s in 1..n {
        for r in 0..s {
            p.set(s, r, (1.0 - q[s]) * p.get(s - 1, r));
        }
        p.set(s, s, q[s]);
    }
    p.set(n, n, 1.0);
    Ok(p)
}

/// Probability `b_{s,r} = Σ_{k=0..r} 2^(k-N) p_{s,k}` that a walk started at
/// a depth-`s` vertex `x` terminates at one fixed leaf whose path splits
/// from `x` at depth `r`.
pub fn leaf_hit_coefficients(min_depth: &Mat) -> Mat {
    let n = min_depth.rows() - 1;
    Mat::from_fn(n + 1, n + 1, |s, r| {
        let mut acc = 0.0;
        for k in 0..=r {
            acc += (2.0f64).powi(k as i32 - n as i32) * min_depth.get(s, k);
        }
        acc
    })
}

/// Per-edge increments `a_{s,r} = b_{s,r} - b_{s-1, min(s-1, r)}` of the
/// leaf-hit coefficients along a parent edge; row 0 is zero.
pub fn increment_coefficients(leaf_hit: &Mat) -> Mat {
    let n = leaf_hit.rows() - 1;
    Mat::from_fn(n + 1, n + 1, |s, r| {
        if s == 0 || r > s {
            0.0
        } else {
            leaf_hit.get(s, r) - leaf_hit.get(s - 1, (s - 1).min(r))
        }
    })
}

/// Escape probabilities together with every derived coefficient table.
#[derive(Debug, Clone)]
pub struct WalkProfile {
    n: usize,
    escape: Vec<f64>,
    descend: Vec<f64>,
    min_depth: Mat,
    leaf_hit: Mat,
    increment: Mat,
}

impl WalkProfile {
    /// Profile of the exponent-adapted walk for the given weights.
    pub fn adapted(weights: &TreeWeights, p: f64) -> Result<Self> {
        Self::from_escape(escape_probabilities(weights, p)?)
    }

    /// Profile from an arbitrary valid escape vector (`q[0] = q[N] = 1`,
    /// entries in `(0, 1]`).
    pub fn from_escape(escape: Vec<f64>) -> Result<Self> {
        let descend = descend_probabilities(&escape)?;
        let min_depth = min_depth_distribution(&escape)?;
        let leaf_hit = leaf_hit_coefficients(&min_depth);
        let increment = increment_coefficients(&leaf_hit);
        Ok(WalkProfile {
            n: escape.len() - 1,
            escape,
            descend,
            min_depth,
            leaf_hit,
            increment,
        })
    }

    /// The always-descending walk (`q == 1`): extension by subtree
    /// averages.
    pub fn averaging(n: usize) -> Result<Self> {
        Self::from_escape(vec![1.0; n + 1])
    }

    pub fn height(&self) -> usize {
        self.n
    }

    pub fn escape(&self) -> &[f64] {
        &self.escape
    }

    pub fn descend(&self) -> &[f64] {
        &self.descend
    }

    pub fn min_depth(&self) -> &Mat {
        &self.min_depth
    }

    pub fn leaf_hit(&self) -> &Mat {
        &self.leaf_hit
    }

    pub fn increment(&self) -> &Mat {
        &self.increment
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkOutcome {
    pub terminal: VertexRef,
    pub min_depth: usize,
    pub steps: usize,
}

/// Run one walk from `start` until it hits a leaf.  Consumes one uniform
/// draw per step plus one bit when descending; with a fixed RNG the
/// trajectory is reproducible.
pub fn simulate_walk<R: Rng + ?Sized>(
    profile: &WalkProfile,
    start: VertexRef,
    rng: &mut R,
) -> Result<WalkOutcome> {
    let n = profile.n;
    if start.depth() > n {
        return Err(Error::DepthOutOfRange {
            depth: start.depth(),
            n,
        });
    }
    if start.index() >= 1u64 << start.depth() {
        return Err(Error::VertexOutOfRange {
            depth: start.depth(),
            index: start.index(),
        });
    }
    let mut v = start;
    let mut min_depth = v.depth();
    let mut steps = 0usize;
    while v.depth() < n {
        if steps >= MAX_WALK_STEPS {
            return Err(Error::WalkTooLong {
                cap: MAX_WALK_STEPS,
            });
        }
        steps += 1;
        let u: f64 = rng.random();
        v = if u < profile.descend[v.depth()] {
            v.child(rng.random::<u64>() & 1)
        } else {
            v.parent().expect("descend[0] = 1, the root never ascends")
        };
        min_depth = min_depth.min(v.depth());
    }
    Ok(WalkOutcome {
        terminal: v,
        min_depth,
        steps,
    })
}

/// Aggregated Monte-Carlo statistics for walks from a fixed start vertex.
///
/// `split_depth` is the depth where the start vertex's path splits from the
/// terminal leaf's path (their lowest common ancestor).  `leaf_hit_estimate`
/// divides each split-depth frequency by the number of leaves in the class,
/// giving the estimated probability of finishing at one fixed leaf.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkStats {
    pub height: usize,
    pub start_depth: usize,
    pub trials: u64,
    pub escape_estimate: f64,
    pub escape_se: f64,
    pub min_depth_counts: Vec<u64>,
    pub min_depth_freq: Vec<f64>,
    pub min_depth_se: Vec<f64>,
    pub split_depth_counts: Vec<u64>,
    pub split_depth_freq: Vec<f64>,
    pub split_depth_se: Vec<f64>,
    pub leaf_hit_estimate: Vec<f64>,
    pub leaf_hit_se: Vec<f64>,
    pub mean_steps: f64,
}

/// Number of leaves whose path splits from a fixed depth-`s` vertex exactly
/// at depth `r` (on a height-`n` tree).
pub fn split_class_size(n: usize, s: usize, r: usize) -> u64 {
    debug_assert!(r <= s && s <= n);
    if r == s {
        1u64 << (n - s)
    } else {
        1u64 << (n - r - 1)
    }
}

fn binomial_se(freq: f64, trials: u64) -> f64 {
    (freq * (1.0 - freq) / trials as f64).sqrt()
}

/// Wilson score interval for a binomial proportion at `z` standard errors;
/// well-behaved for frequencies at or near 0 and 1.
pub fn wilson_bounds(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "wilson_bounds needs at least one trial");
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Run `trials` independent walks from `start`, one RNG stream per trial, and
/// aggregate.  Deterministic in `seed` regardless of how trials are batched.
pub fn run_walk_trials(
    profile: &WalkProfile,
    start: VertexRef,
    trials: u64,
    seed: u64,
) -> Result<WalkStats> {
    let n = profile.n;
    let s = start.depth();
    let mut min_depth_counts = vec![0u64; n + 1];
    let mut split_depth_counts = vec![0u64; s + 1];
    let mut total_steps = 0u128;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let outcome = simulate_walk(profile, start, &mut rng)?;
        min_depth_counts[outcome.min_depth] += 1;
        split_depth_counts[crate::tree::dlca(start, outcome.terminal)] += 1;
        total_steps += outcome.steps as u128;
    }
    let freq = |c: u64| c as f64 / trials as f64;
    let min_depth_freq: Vec<f64> = min_depth_counts.iter().map(|&c| freq(c)).collect();
    let split_depth_freq: Vec<f64> = split_depth_counts.iter().map(|&c| freq(c)).collect();
    let min_depth_se: Vec<f64> = min_depth_freq
        .iter()
        .map(|&f| binomial_se(f, trials))
        .collect();
    let split_depth_se: Vec<f64> = split_depth_freq
        .iter()
        .map(|&f| binomial_se(f, trials))
        .collect();
    let leaf_hit_estimate: Vec<f64> = (0..=s)
        .map(|r| split_depth_freq[r] / split_class_size(n, s, r) as f64)
        .collect();
    let leaf_hit_se: Vec<f64> = (0..=s)
        .map(|r| split_depth_se[r] / split_class_size(n, s, r) as f64)
        .collect();
    Ok(WalkStats {
        height: n,
        start_depth: s,
        trials,
        escape_estimate: min_depth_freq[s],
        escape_se: min_depth_se[s],
        min_depth_counts,
        min_depth_freq,
        min_depth_se,
        split_depth_counts,
        split_depth_freq,
        split_depth_se,
        leaf_hit_estimate,
        leaf_hit_se,
        mean_steps: total_steps as f64 / trials as f64,
    })
}
