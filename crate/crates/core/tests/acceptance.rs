//! Acceptance suite: one test per shipping criterion.  Each test prints a
//! single PASS/FAIL line with the measured margin, and the tolerance it
//! enforces is pinned as a const right above it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tree_sobolev::extension::{harmonic_extend, harmonicity_residual, induced_edge_operator};
use tree_sobolev::kernels::{
    kernel_entry, kernel_entry_bruteforce, reduced_l, reduced_l0, reduced_l1, reduced_l_bound,
    reversed_kernel, EdgeKernel, KernelPart,
};
use tree_sobolev::norms::{
    alpha_sequence, extension_ratio, hardy_escape, muckenhoupt_best_a, norm_report,
    opnorm_power_iteration, script_t0_matrix, script_t1_matrix, theoretical_constants,
    HardyDirection,
};
use tree_sobolev::tree::{
    restrict_to_leaves, FieldRole, ScalarField, TreeAutomorphism, TreeWeights, VertexRef,
};
use tree_sobolev::walk::{run_walk_trials, split_class_size, WalkProfile};

fn report(label: &str, pass: bool, detail: &str) {
    println!("{label}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{label}: {detail}");
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize, log_span: f64) -> TreeWeights {
    TreeWeights::explicit(
        (0..n)
            .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * log_span).exp())
            .collect(),
    )
    .unwrap()
}

fn random_field(rng: &mut ChaCha8Rng, role: FieldRole, n: usize) -> ScalarField {
    let mut f = ScalarField::zeros(role, n);
    for v in f.values_mut() {
        *v = rng.random::<f64>() * 2.0 - 1.0;
    }
    f
}

fn random_exponent(rng: &mut ChaCha8Rng) -> f64 {
    1.1 + rng.random::<f64>() * 3.9
}

fn all_edges(n: usize) -> Vec<VertexRef> {
    (1..=n)
        .flat_map(|k| (0..1u64 << k).map(move |j| VertexRef::new(k, j)))
        .collect()
}

const KERNEL_ORACLE_TOL: f64 = 1e-12;

#[test]
fn criterion_01_closed_form_kernel_matches_bruteforce() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut pairs = 0u64;
    for n in 2..=6 {
        for _ in 0..4 {
            let weights = random_weights(&mut rng, n, 3.0);
            let p = random_exponent(&mut rng);
            let profile = WalkProfile::adapted(&weights, p).unwrap();
            let edges = all_edges(n);
            for &x in &edges {
                for &y in &edges {
                    let closed = kernel_entry(&profile, x, y).unwrap();
                    let brute = kernel_entry_bruteforce(&profile, x, y).unwrap();
                    worst = worst.max((closed - brute).abs());
                    pairs += 1;
                }
            }
        }
    }
    report(
        "criterion 01 (kernel closed form vs brute force)",
        worst <= KERNEL_ORACLE_TOL,
        &format!("max |delta| = {worst:.2e} over {pairs} edge pairs, tol {KERNEL_ORACLE_TOL:.0e}"),
    );
}

const OPERATOR_CONSISTENCY_TOL: f64 = 1e-12;

#[test]
fn criterion_02_matrix_free_operator_matches_kernel_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    let mut fields = 0u32;
    for n in 2..=6 {
        for _ in 0..3 {
            let weights = random_weights(&mut rng, n, 3.0);
            let p = random_exponent(&mut rng);
            let profile = WalkProfile::adapted(&weights, p).unwrap();
            let kernel = EdgeKernel::assemble(&profile, KernelPart::Full).unwrap();
            for _ in 0..5 {
                let g = random_field(&mut rng, FieldRole::Edges, n);
                let dense = kernel.apply(&g).unwrap();
                let sweep = induced_edge_operator(&profile, &g).unwrap();
                for (a, b) in dense.values().iter().zip(sweep.values()) {
                    worst = worst.max((a - b).abs());
                }
                fields += 1;
            }
        }
    }
    report(
        "criterion 02 (matrix-free vs kernel-matrix application)",
        worst <= OPERATOR_CONSISTENCY_TOL,
        &format!("max |delta| = {worst:.2e} over {fields} random edge fields, tol {OPERATOR_CONSISTENCY_TOL:.0e}"),
    );
}

const PART_CANCELLATION_TOL: f64 = 1e-14;
const PARTIAL_SUM_TOL: f64 = 1e-12;
const REVERSAL_TOL: f64 = 1e-14;
const TELESCOPE_TOL: f64 = 1e-14;

#[test]
fn criterion_03_reduction_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst_cancel = 0.0f64;
    let mut worst_partial = 0.0f64;
    let mut worst_reversal = 0.0f64;
    let mut worst_telescope = 0.0f64;
    for _ in 0..100 {
        let n = 1 + (rng.random::<u64>() % 10) as usize;
        let weights = random_weights(&mut rng, n, 3.0);
        let p = random_exponent(&mut rng);
        let profile = WalkProfile::adapted(&weights, p).unwrap();
        let q = profile.escape();

        let l0 = reduced_l0(&profile);
        let l1 = reduced_l1(&profile);
        for i in 0..n {
            for j in 0..n {
                worst_cancel = worst_cancel.max((l0.get(i, j) + l1.get(i, j)).abs());
            }
        }

        let pmat = profile.min_depth();
        for s in 1..=n {
            for m in 1..=s {
                let mut head = 0.0;
                for k in 0..m {
                    head += pmat.get(s - 1, k);
                }
                let prod: f64 = q[m..s].iter().map(|qk| 1.0 - qk).product();
                worst_partial = worst_partial.max((head - prod).abs());
            }
        }

        let rev = reversed_kernel(&weights, p).unwrap();
        for s in 1..=n {
            worst_reversal = worst_reversal.max((rev.escape_rev[s - 1] - q[n + 1 - s]).abs());
        }

        let alpha = alpha_sequence(&rev.weights_rev, p).unwrap();
        let mut prefix = vec![0.0; n];
        let mut acc = 0.0;
        for (k, &a) in alpha.iter().enumerate() {
            acc += a;
            prefix[k] = acc;
        }
        for s in 1..=n {
            for t in s..=n {
                let closed = alpha[s - 1] / prefix[t - 1];
                worst_telescope = worst_telescope.max((rev.bound.get(s - 1, t - 1) - closed).abs());
            }
        }
    }
    let pass = worst_cancel <= PART_CANCELLATION_TOL
        && worst_partial <= PARTIAL_SUM_TOL
        && worst_reversal <= REVERSAL_TOL
        && worst_telescope <= TELESCOPE_TOL;
    report(
        "criterion 03 (reduction identities, 100 configs each)",
        pass,
        &format!(
            "part cancellation {worst_cancel:.2e} (tol {PART_CANCELLATION_TOL:.0e}), partial sums {worst_partial:.2e} (tol {PARTIAL_SUM_TOL:.0e}), reversal {worst_reversal:.2e} (tol {REVERSAL_TOL:.0e}), telescoping {worst_telescope:.2e} (tol {TELESCOPE_TOL:.0e})"
        ),
    );
}

const WALK_TRIALS: u64 = 100_000;
const WALK_BAND_SE: f64 = 3.0;
const WALK_MIN_COVERAGE: f64 = 0.95;

#[test]
fn criterion_04_walk_statistics_match_theory() {
    let n = 5;
    let families = [
        TreeWeights::dyadic(n, 1.0).unwrap(),
        TreeWeights::unit(n).unwrap(),
        TreeWeights::geometric(n, 1.0, 3.0).unwrap(),
    ];
    let trials_f = WALK_TRIALS as f64;
    let mut inside = 0u32;
    let mut cells = 0u32;
    let mut seed = 9000u64;
    for weights in &families {
        for p in [1.5, 2.0, 3.0] {
            let profile = WalkProfile::adapted(weights, p).unwrap();
            for s in 1..n {
                seed += 1;
                let stats =
                    run_walk_trials(&profile, VertexRef::new(s, 0), WALK_TRIALS, seed).unwrap();
                let mut push = |theory_event: f64, emp: f64, theory: f64, class: f64| {
                    let se = (theory_event * (1.0 - theory_event) / trials_f).sqrt() / class;
                    cells += 1;
                    if (emp - theory).abs() <= WALK_BAND_SE * se {
                        inside += 1;
                    }
                };
                let qs = profile.escape()[s];
                push(qs, stats.escape_estimate, qs, 1.0);
                for r in 0..=s {
                    let ps = profile.min_depth().get(s, r);
                    push(ps, stats.min_depth_freq[r], ps, 1.0);
                    let class = split_class_size(n, s, r) as f64;
                    let bs = profile.leaf_hit().get(s, r);
                    push(bs * class, stats.leaf_hit_estimate[r], bs, class);
                }
            }
        }
    }
    let coverage = inside as f64 / cells as f64;
    report(
        "criterion 04 (walk statistics vs theory)",
        coverage >= WALK_MIN_COVERAGE,
        &format!(
            "{inside}/{cells} cells within {WALK_BAND_SE} SE ({:.1}%, need >= {:.0}%), {WALK_TRIALS} walks per start depth",
            100.0 * coverage,
            100.0 * WALK_MIN_COVERAGE
        ),
    );
}

const P2_RATIO_TOL: f64 = 1e-6;

#[test]
fn criterion_05_quadratic_case_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 1 + (rng.random::<u64>() % 8) as usize;
        let weights = random_weights(&mut rng, n, 3.0);
        let leaves = random_field(&mut rng, FieldRole::Leaves, n);
        let ratio = extension_ratio(&weights, 2.0, &leaves).unwrap();
        worst = worst.max((ratio - 1.0).abs());
    }
    report(
        "criterion 05 (p = 2 extension ratio is 1)",
        worst <= P2_RATIO_TOL,
        &format!("max |ratio - 1| = {worst:.2e} over 100 leaf functions, tol {P2_RATIO_TOL:.0e}"),
    );
}

const BOUND_SLACK: f64 = 1e-9;
const MAIN_THEOREM_SAMPLES: usize = 200;

#[test]
fn criterion_06_extension_ratios_stay_below_the_explicit_constant() {
    let mut worst_ratio_margin = 0.0f64;
    let mut worst_opnorm_margin = 0.0f64;
    let mut cell = 0u64;
    let mut pass = true;
    for p in [1.25, 1.5, 3.0, 4.0] {
        for n in [4usize, 8] {
            let families = [
                TreeWeights::dyadic(n, 1.0).unwrap(),
                TreeWeights::unit(n).unwrap(),
                TreeWeights::geometric(n, 1.0, 1.0 / 3.0).unwrap(),
                TreeWeights::geometric(n, 1.0, 3.0).unwrap(),
            ];
            for weights in &families {
                cell += 1;
                let rep = norm_report(weights, p, MAIN_THEOREM_SAMPLES, 600 + cell).unwrap();
                let ratio_margin = rep.max_ratio / rep.constants.c_bar;
                let opnorm_margin = rep.opnorm_reduced / rep.constants.c_hat;
                worst_ratio_margin = worst_ratio_margin.max(ratio_margin);
                worst_opnorm_margin = worst_opnorm_margin.max(opnorm_margin);
                pass &= ratio_margin <= 1.0 + BOUND_SLACK && opnorm_margin <= 1.0 + BOUND_SLACK;
            }
        }
    }
    report(
        "criterion 06 (extension ratio and reduced norm vs explicit constants)",
        pass,
        &format!(
            "{cell} cells x {MAIN_THEOREM_SAMPLES} samples: worst ratio / c_bar = {worst_ratio_margin:.3}, worst |S0| / c_hat = {worst_opnorm_margin:.3} (both must be <= 1)"
        ),
    );
}

const HARDY_SLACK: f64 = 1e-9;

#[test]
fn criterion_07_hardy_inequalities_from_the_criterion_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst_fraction = 0.0f64;
    for p in [1.5, 2.0, 3.0] {
        let cp = theoretical_constants(p).unwrap().c_p;
        for _ in 0..1000 {
            let n = 1 + (rng.random::<u64>() % 12) as usize;
            let u: Vec<f64> = (0..n)
                .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * 2.3).exp())
                .collect();
            let v: Vec<f64> = (0..n)
                .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * 2.3).exp())
                .collect();
            let f: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let rhs_base: f64 = f
                .iter()
                .zip(&v)
                .map(|(x, vk)| (vk * x).abs().powf(p))
                .sum::<f64>()
                .powf(1.0 / p);

            let a_fwd = muckenhoupt_best_a(&u, &v, p, HardyDirection::Forward).unwrap();
            let mut acc = 0.0;
            let mut lhs = 0.0;
            for k in 0..n {
                acc += f[k];
                lhs += (u[k] * acc).abs().powf(p);
            }
            worst_fraction = worst_fraction.max(lhs.powf(1.0 / p) / (cp * a_fwd * rhs_base));

            let a_rev = muckenhoupt_best_a(&u, &v, p, HardyDirection::Reversed).unwrap();
            let mut acc = 0.0;
            let mut lhs = 0.0;
            for k in (0..n).rev() {
                acc += f[k];
                lhs += (u[k] * acc).abs().powf(p);
            }
            worst_fraction = worst_fraction.max(lhs.powf(1.0 / p) / (cp * a_rev * rhs_base));
        }
    }

    let mut worst_head = 0.0f64;
    let mut worst_tail = 0.0f64;
    for _ in 0..1000 {
        let n = 1 + (rng.random::<u64>() % 12) as usize;
        let p = random_exponent(&mut rng);
        let q = p / (p - 1.0);
        let alpha: Vec<f64> = (0..n)
            .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * 2.3).exp())
            .collect();
        let mut prefix = vec![0.0; n];
        let mut acc = 0.0;
        for (k, &a) in alpha.iter().enumerate() {
            acc += a;
            prefix[k] = acc;
        }
        for r in 0..n {
            let head: f64 = (0..=r)
                .map(|k| alpha[k] * prefix[k].powf(-1.0 / p))
                .sum();
            worst_head = worst_head.max(head / (q * prefix[r].powf(1.0 / q)));
            let tail: f64 = (r..n).map(|k| alpha[k] * prefix[k].powf(-p)).sum();
            let bound = 2.0 / 1.0f64.min(p - 1.0) * prefix[r].powf(1.0 - p);
            worst_tail = worst_tail.max(tail / bound);
        }
    }
    let pass = worst_fraction <= 1.0 + HARDY_SLACK
        && worst_head <= 1.0 + HARDY_SLACK
        && worst_tail <= 1.0 + HARDY_SLACK;
    report(
        "criterion 07 (Hardy inequalities and elementary lemmas)",
        pass,
        &format!(
            "worst lhs/rhs: criterion-driven {worst_fraction:.4}, head lemma {worst_head:.4}, tail lemma {worst_tail:.4} (all must be <= 1)"
        ),
    );
}

const CUMSUM_BOUND_SLACK: f64 = 1e-9;

#[test]
fn criterion_08_cumulative_operators_stay_below_their_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let exponents = [1.25, 1.5, 2.0, 3.0, 4.0];
    let mut worst_t0 = 0.0f64;
    let mut worst_t1 = 0.0f64;
    for trial in 0..100 {
        let n = 1 + (rng.random::<u64>() % 10) as usize;
        let p = exponents[trial % exponents.len()];
        let w: Vec<f64> = (0..n)
            .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * 4.0).exp())
            .collect();
        let constants = theoretical_constants(p).unwrap();

        let q = hardy_escape(&w, p).unwrap();
        let t0 = opnorm_power_iteration(&script_t0_matrix(&q), &w, p).unwrap();
        worst_t0 = worst_t0.max(t0.value / constants.c_tilde_t0);

        let alpha = alpha_sequence(&w, p).unwrap();
        let t1 = opnorm_power_iteration(&script_t1_matrix(&alpha), &w, p).unwrap();
        worst_t1 = worst_t1.max(t1.value / constants.c_t1);
    }
    let pass = worst_t0 <= 1.0 + CUMSUM_BOUND_SLACK && worst_t1 <= 1.0 + CUMSUM_BOUND_SLACK;
    report(
        "criterion 08 (cumulative-sum operator norms vs explicit bounds)",
        pass,
        &format!(
            "100 weight vectors: worst head-sum norm fraction {worst_t0:.4}, worst tail-sum norm fraction {worst_t1:.4} (both must be <= 1)"
        ),
    );
}

const CONSTANTS_TOL: f64 = 1e-12;
const EQUIVARIANCE_TOL: f64 = 1e-12;
const HARMONICITY_TOL: f64 = 1e-11;
const PROJECTION_TOL: f64 = 1e-12;

#[test]
fn criterion_09_structural_properties_of_the_extension() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut exact_extension = true;
    let mut worst_constant = 0.0f64;
    let mut worst_equivariance = 0.0f64;
    let mut worst_harmonicity = 0.0f64;
    let mut worst_projection = 0.0f64;
    for (n, p) in [(3usize, 1.5), (5, 2.0), (6, 2.7)] {
        let weights = random_weights(&mut rng, n, 2.0);
        let profile = WalkProfile::adapted(&weights, p).unwrap();
        let f = random_field(&mut rng, FieldRole::Leaves, n);
        let ext = harmonic_extend(&profile, &f).unwrap();

        let back = restrict_to_leaves(&ext).unwrap();
        exact_extension &= back.values() == f.values();

        let c = 3.75;
        let cext = harmonic_extend(&profile, &ScalarField::constant(FieldRole::Leaves, n, c))
            .unwrap();
        for &v in cext.values() {
            worst_constant = worst_constant.max((v - c).abs());
        }

        for i in 0..10 {
            let sigma = TreeAutomorphism::random(n, 7000 + i);
            let lhs = sigma.pullback(&ext).unwrap();
            let rhs = harmonic_extend(&profile, &sigma.pullback(&f).unwrap()).unwrap();
            for (a, b) in lhs.values().iter().zip(rhs.values()) {
                worst_equivariance = worst_equivariance.max((a - b).abs());
            }
        }

        worst_harmonicity = worst_harmonicity.max(harmonicity_residual(&profile, &ext).unwrap());

        let again = harmonic_extend(&profile, &back).unwrap();
        for (a, b) in again.values().iter().zip(ext.values()) {
            worst_projection = worst_projection.max((a - b).abs());
        }
    }
    let pass = exact_extension
        && worst_constant <= CONSTANTS_TOL
        && worst_equivariance <= EQUIVARIANCE_TOL
        && worst_harmonicity <= HARMONICITY_TOL
        && worst_projection <= PROJECTION_TOL;
    report(
        "criterion 09 (structural properties)",
        pass,
        &format!(
            "leaf restriction exact: {exact_extension}; constants {worst_constant:.2e} (tol {CONSTANTS_TOL:.0e}); equivariance {worst_equivariance:.2e} over 10 symmetries per config (tol {EQUIVARIANCE_TOL:.0e}); harmonicity {worst_harmonicity:.2e} (tol {HARMONICITY_TOL:.0e}); projection {worst_projection:.2e} (tol {PROJECTION_TOL:.0e})"
        ),
    );
}

const WORKED_EXAMPLE_TOL: f64 = 1e-14;

#[test]
fn criterion_10_worked_examples_in_closed_form() {
    let mut worst = 0.0f64;
    let mut track = |v: f64| worst = worst.max(v);

    // Averaging walk: unit escape, deterministic minimum depth, and the
    // half-on-upper-triangle reduced kernel.
    {
        let n = 6;
        let profile = WalkProfile::averaging(n).unwrap();
        for &qs in profile.escape() {
            track((qs - 1.0).abs());
        }
        for s in 0..=n {
            for r in 0..=n {
                let expect = if r == s { 1.0 } else { 0.0 };
                track((profile.min_depth().get(s, r) - expect).abs());
            }
        }
        let l0 = reduced_l0(&profile);
        let l1 = reduced_l1(&profile);
        let l = reduced_l(&profile);
        let bound = reduced_l_bound(&profile);
        for i in 0..n {
            for j in 0..n {
                let upper = j >= i;
                track((l0.get(i, j) - if upper { -0.5 } else { 0.0 }).abs());
                track((l1.get(i, j) - if upper { 0.5 } else { 0.0 }).abs());
                track((l.get(i, j) - if upper { 0.5 } else { 0.0 }).abs());
                track((bound.get(i, j) - if upper { 1.0 } else { 0.0 }).abs());
            }
        }
    }

    // Dyadic weights: every exponent gives the symmetric walk, with
    // escape 1/(N-s+1), an explicit minimum-depth law, and kernel bound
    // 1/(N-min(s,t)+1).
    {
        let n = 7;
        let nf = n as f64;
        let weights = TreeWeights::dyadic(n, 1.0).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let profile = WalkProfile::adapted(&weights, p).unwrap();
            for s in 1..=n {
                track((profile.escape()[s] - 1.0 / (nf - s as f64 + 1.0)).abs());
            }
            for s in 0..n {
                let sf = s as f64;
                for r in 0..=s {
                    let rf = r as f64;
                    let expect = if r == 0 {
                        (nf - sf) / nf
                    } else {
                        (nf - sf) / ((nf - rf) * (nf - rf + 1.0))
                    };
                    track((profile.min_depth().get(s, r) - expect).abs());
                }
            }
            let bound = reduced_l_bound(&profile);
            for i in 0..n {
                for j in 0..n {
                    let m = (i + 1).min(j + 1) as f64;
                    track((bound.get(i, j) - 1.0 / (nf - m + 1.0)).abs());
                }
            }
        }
    }

    // Lazier walks: a bottom-weight adjustment realizes escape
    // 1/(N-s+1/delta-1) above the last level, shifting every closed form
    // by c = 1/delta - 1; the bottom row of the kernel bound picks up an
    // extra factor c.
    {
        let n = 6;
        let nf = n as f64;
        for delta in [0.25f64, 0.75] {
            let c = 1.0 / delta - 1.0;
            for p in [1.5, 3.0] {
                let mut values: Vec<f64> =
                    (1..=n).map(|k| (0.5f64).powi(k as i32)).collect();
                values[n - 1] = (0.5f64).powi(n as i32) * c.powf(-(p - 1.0));
                let weights = TreeWeights::explicit(values).unwrap();
                let profile = WalkProfile::adapted(&weights, p).unwrap();
                for s in 1..n {
                    track((profile.escape()[s] - 1.0 / (nf - s as f64 + c)).abs());
                }
                track((profile.escape()[n] - 1.0).abs());
                for s in 0..n {
                    let sf = s as f64;
                    for r in 0..=s {
                        let rf = r as f64;
                        let expect = if r == 0 {
                            (nf - sf + c - 1.0) / (nf + c - 1.0)
                        } else {
                            (nf - sf + c - 1.0) / ((nf - rf + c - 1.0) * (nf - rf + c))
                        };
                        track((profile.min_depth().get(s, r) - expect).abs());
                    }
                }
                let bound = reduced_l_bound(&profile);
                for i in 0..n {
                    for j in 0..n {
                        let m = (i + 1).min(j + 1) as f64;
                        let expect = if i + 1 == n {
                            c / (nf - m + c)
                        } else {
                            1.0 / (nf - m + c)
                        };
                        track((bound.get(i, j) - expect).abs());
                    }
                }
            }
        }
    }

    report(
        "criterion 10 (worked examples in closed form)",
        worst <= WORKED_EXAMPLE_TOL,
        &format!("max |delta| = {worst:.2e} across all closed forms, tol {WORKED_EXAMPLE_TOL:.0e}"),
    );
}
