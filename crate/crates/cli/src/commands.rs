//! The six subcommands.  Each one returns the full report as a string so
//! the caller owns routing (stdout vs `--output`) and the bytes stay
//! deterministic for a fixed `(config, seed)`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use tree_sobolev::extension::{harmonic_extend, harmonicity_residual};
use tree_sobolev::kernels::{kernel_entry, kernel_entry_bruteforce, reduced_l, reduced_l0, reduced_l1, reduced_l_bound, reversed_kernel};
use tree_sobolev::mat::Mat;
use tree_sobolev::norms::{
    alpha_sequence, depth_weight_vector, muckenhoupt_best_a, norm_report,
    opnorm_power_iteration, sobolev_seminorm, theoretical_constants, trace_seminorm,
    DepthWeightVariant, HardyDirection, NormReport,
};
use tree_sobolev::tree::{restrict_to_leaves, FieldRole, ScalarField, VertexRef};
use tree_sobolev::walk::{run_walk_trials, WalkProfile, WalkStats};

use crate::config::{RunConfig, WeightSpec};
use crate::Failure;

fn lift(e: tree_sobolev::Error) -> Failure {
    match e {
        tree_sobolev::Error::NonConvergence { what, iterations } => Failure::NonConvergence {
            diagnostic: json!({
                "error": "non-convergence",
                "what": what,
                "iterations": iterations,
            }),
        },
        other => Failure::Config(other.to_string()),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn matrix_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn seeded_leaves(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..1u64 << n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

#[derive(Serialize)]
struct ExtendCell {
    p: f64,
    trace_value: f64,
    extension_seminorm: f64,
    ratio: f64,
    iterations: usize,
    kkt_residual: f64,
    duality_gap: Option<f64>,
    minimizer: Vec<f64>,
    walk_extension: Vec<f64>,
}

#[derive(Serialize)]
struct ExtendReport {
    config_digest: String,
    seed: u64,
    n: usize,
    weights_digest: String,
    leaf_source: String,
    leaf_values: Vec<f64>,
    cells: Vec<ExtendCell>,
}

pub fn extend(cfg: &RunConfig, input: Option<&Path>) -> Result<String, Failure> {
    let weights = cfg.build_weights()?;
    let n = cfg.n;
    let (leaf_source, leaf_values) = match input {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            let values: Vec<f64> = serde_json::from_str(&raw)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Failure::config(format!(
                    "{}: leaf values must be finite",
                    path.display()
                )));
            }
            (path.display().to_string(), values)
        }
        None => ("seeded".to_string(), seeded_leaves(n, cfg.seed)),
    };
    let field = ScalarField::from_values(FieldRole::Leaves, n, leaf_values.clone()).map_err(lift)?;

    let mut cells = Vec::with_capacity(cfg.p.len());
    for &p in &cfg.p {
        let tr = trace_seminorm(&weights, &field, p).map_err(lift)?;
        if !tr.converged {
            return Err(Failure::NonConvergence {
                diagnostic: json!({
                    "error": "non-convergence",
                    "what": "trace-seminorm solve",
                    "n": n,
                    "p": p,
                    "iterations": tr.iterations,
                    "kkt_residual": tr.kkt_residual,
                    "duality_gap": tr.duality_gap,
                }),
            });
        }
        let profile = WalkProfile::adapted(&weights, p).map_err(lift)?;
        let ext = harmonic_extend(&profile, &field).map_err(lift)?;
        let seminorm = sobolev_seminorm(&weights, &ext, p).map_err(lift)?;
        let ratio = if tr.value == 0.0 { 1.0 } else { seminorm / tr.value };
        cells.push(ExtendCell {
            p,
            trace_value: tr.value,
            extension_seminorm: seminorm,
            ratio,
            iterations: tr.iterations,
            kkt_residual: tr.kkt_residual,
            duality_gap: tr.duality_gap,
            minimizer: tr.extension.values().to_vec(),
            walk_extension: ext.values().to_vec(),
        });
    }
    Ok(to_json(&ExtendReport {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        n,
        weights_digest: weights.digest(),
        leaf_source,
        leaf_values,
        cells,
    }))
}

#[derive(Serialize)]
struct SimulateCell {
    p: f64,
    start_depth: usize,
    expected_escape: f64,
    expected_min_depth: Vec<f64>,
    expected_leaf_hit: Vec<f64>,
    stats: WalkStats,
}

#[derive(Serialize)]
struct SimulateReport {
    config_digest: String,
    seed: u64,
    n: usize,
    trials: u64,
    weights_digest: String,
    cells: Vec<SimulateCell>,
}

pub fn simulate(cfg: &RunConfig, start_depth: Option<usize>) -> Result<String, Failure> {
    let weights = cfg.build_weights()?;
    let n = cfg.n;
    let depths: Vec<usize> = match start_depth {
        Some(d) => {
            if d == 0 || d > n {
                return Err(Failure::config(format!(
                    "start depth {d} outside 1..={n}"
                )));
            }
            vec![d]
        }
        None => (1..=n).collect(),
    };
    let mut cells = Vec::new();
    for &p in &cfg.p {
        let profile = WalkProfile::adapted(&weights, p).map_err(lift)?;
        for &s in &depths {
            let stats = run_walk_trials(&profile, VertexRef::new(s, 0), cfg.trials, cfg.seed)
                .map_err(lift)?;
            cells.push(SimulateCell {
                p,
                start_depth: s,
                expected_escape: profile.escape()[s],
                expected_min_depth: (0..=n).map(|r| profile.min_depth().get(s, r)).collect(),
                expected_leaf_hit: (0..=s).map(|r| profile.leaf_hit().get(s, r)).collect(),
                stats,
            });
        }
    }
    Ok(to_json(&SimulateReport {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        n,
        trials: cfg.trials,
        weights_digest: weights.digest(),
        cells,
    }))
}

#[derive(Serialize)]
struct KernelCell {
    p: f64,
    escape: Vec<f64>,
    l0: Vec<Vec<f64>>,
    l1: Vec<Vec<f64>>,
    l: Vec<Vec<f64>>,
    bound: Vec<Vec<f64>>,
    reversed_escape: Vec<f64>,
    reversed_weights: Vec<f64>,
    reversed_kernel: Vec<Vec<f64>>,
    reversed_bound: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct KernelReport {
    config_digest: String,
    seed: u64,
    n: usize,
    weights_digest: String,
    cells: Vec<KernelCell>,
}

pub fn kernels(cfg: &RunConfig) -> Result<String, Failure> {
    let weights = cfg.build_weights()?;
    let mut cells = Vec::with_capacity(cfg.p.len());
    for &p in &cfg.p {
        let profile = WalkProfile::adapted(&weights, p).map_err(lift)?;
        let rev = reversed_kernel(&weights, p).map_err(lift)?;
        cells.push(KernelCell {
            p,
            escape: profile.escape().to_vec(),
            l0: matrix_rows(&reduced_l0(&profile)),
            l1: matrix_rows(&reduced_l1(&profile)),
            l: matrix_rows(&reduced_l(&profile)),
            bound: matrix_rows(&reduced_l_bound(&profile)),
            reversed_escape: rev.escape_rev.clone(),
            reversed_weights: rev.weights_rev.clone(),
            reversed_kernel: matrix_rows(&rev.kernel),
            reversed_bound: matrix_rows(&rev.bound),
        });
    }
    let report = KernelReport {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        n: cfg.n,
        weights_digest: weights.digest(),
        cells,
    };
    Ok(match cfg.format {
        crate::config::OutputFormat::Json => to_json(&report),
        crate::config::OutputFormat::Csv => kernel_csv(&report),
    })
}

fn kernel_csv(report: &KernelReport) -> String {
    let mut out = String::from("table,p,i,j,value\n");
    let mut matrix = |name: &str, p: f64, rows: &[Vec<f64>]| {
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out.push_str(&format!("{name},{p},{i},{j},{v}\n"));
            }
        }
    };
    for cell in &report.cells {
        matrix("escape", cell.p, std::slice::from_ref(&cell.escape));
        matrix("l0", cell.p, &cell.l0);
        matrix("l1", cell.p, &cell.l1);
        matrix("l", cell.p, &cell.l);
        matrix("bound", cell.p, &cell.bound);
        matrix("reversed_escape", cell.p, std::slice::from_ref(&cell.reversed_escape));
        matrix("reversed_weights", cell.p, std::slice::from_ref(&cell.reversed_weights));
        matrix("reversed_kernel", cell.p, &cell.reversed_kernel);
        matrix("reversed_bound", cell.p, &cell.reversed_bound);
    }
    out
}

#[derive(Serialize)]
struct OpnormReport {
    config_digest: String,
    seed: u64,
    report: NormReport,
}

pub fn opnorm(cfg: &RunConfig) -> Result<String, Failure> {
    let p = cfg.single_p()?;
    let weights = cfg.build_weights()?;
    let report = norm_report(&weights, p, cfg.samples, cfg.seed).map_err(lift)?;
    Ok(to_json(&OpnormReport {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        report,
    }))
}

#[derive(Serialize)]
struct ReportRow {
    n: usize,
    p: f64,
    family: String,
    weights_digest: String,
    samples: usize,
    max_ratio: f64,
    opnorm_reduced: f64,
    bound_2s0: f64,
    c_hat: f64,
    c_bar: f64,
    muckenhoupt_a: f64,
}

#[derive(Serialize)]
struct GridReport {
    config_digest: String,
    seed: u64,
    rows: Vec<ReportRow>,
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report(cfg: &RunConfig, families: &[WeightSpec]) -> Result<String, Failure> {
    let default_families = [
        WeightSpec::Dyadic { c: 1.0 },
        WeightSpec::Unit,
        WeightSpec::Geometric { c: 1.0, beta: 3.0 },
    ];
    let families: &[WeightSpec] = if families.is_empty() {
        &default_families
    } else {
        families
    };
    let mut rows = Vec::new();
    for &p in &cfg.p {
        for family in families {
            let weights = family.build(cfg.n)?;
            let cell = norm_report(&weights, p, cfg.samples, cfg.seed).map_err(lift)?;
            rows.push(ReportRow {
                n: cfg.n,
                p,
                family: family.to_string(),
                weights_digest: cell.weights_digest.clone(),
                samples: cfg.samples,
                max_ratio: cell.max_ratio,
                opnorm_reduced: cell.opnorm_reduced,
                bound_2s0: cell.bound_2s0,
                c_hat: cell.constants.c_hat,
                c_bar: cell.constants.c_bar,
                muckenhoupt_a: cell.muckenhoupt_a,
            });
        }
    }
    let grid = GridReport {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        rows,
    };
    Ok(match cfg.format {
        crate::config::OutputFormat::Json => to_json(&grid),
        crate::config::OutputFormat::Csv => {
            let mut out = String::from(
                "n,p,family,weights_digest,samples,max_ratio,opnorm_reduced,bound_2s0,c_hat,c_bar,muckenhoupt_a,config_digest,seed\n",
            );
            for r in &grid.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    r.n,
                    r.p,
                    csv_field(&r.family),
                    r.weights_digest,
                    r.samples,
                    r.max_ratio,
                    r.opnorm_reduced,
                    r.bound_2s0,
                    r.c_hat,
                    r.c_bar,
                    r.muckenhoupt_a,
                    grid.config_digest,
                    grid.seed,
                ));
            }
            out
        }
    })
}

const CONSTANTS_TOL: f64 = 1e-12;
const MEAN_VALUE_TOL: f64 = 1e-11;
const CANCELLATION_TOL: f64 = 1e-14;
const REVERSAL_TOL: f64 = 1e-14;
const TELESCOPE_TOL: f64 = 1e-14;
const KERNEL_ORACLE_TOL: f64 = 1e-12;
const ORACLE_MAX_HEIGHT: usize = 5;
const RATIO_LOWER_SLACK: f64 = 1e-6;
const BOUND_SLACK: f64 = 1e-9;
const P2_RATIO_TOL: f64 = 1e-6;

/// Run the invariant suite for the configured cell; returns the report text
/// and the number of failed checks.
pub fn verify(cfg: &RunConfig) -> Result<(String, usize), Failure> {
    let weights = cfg.build_weights()?;
    let n = cfg.n;
    let mut out = String::new();
    let mut checks = 0usize;
    let mut failures = 0usize;
    let mut record = |out: &mut String, name: &str, ok: bool, detail: String| {
        checks += 1;
        if !ok {
            failures += 1;
        }
        out.push_str(&format!(
            "{} — {name}: {detail}\n",
            if ok { "ok" } else { "FAIL" }
        ));
    };

    for (pi, &p) in cfg.p.iter().enumerate() {
        let profile = WalkProfile::adapted(&weights, p).map_err(lift)?;
        let constants = theoretical_constants(p).map_err(lift)?;
        out.push_str(&format!("[p = {p}]\n"));

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(pi as u64);
        let leaves: Vec<f64> = (0..1u64 << n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let field = ScalarField::from_values(FieldRole::Leaves, n, leaves).map_err(lift)?;
        let ext = harmonic_extend(&profile, &field).map_err(lift)?;

        let back = restrict_to_leaves(&ext).map_err(lift)?;
        record(
            &mut out,
            "extension restricts back to its data",
            back.values() == field.values(),
            "bitwise".into(),
        );

        let c = 2.5;
        let cext = harmonic_extend(&profile, &ScalarField::constant(FieldRole::Leaves, n, c))
            .map_err(lift)?;
        let worst = cext.values().iter().fold(0.0f64, |m, v| m.max((v - c).abs()));
        record(
            &mut out,
            "constants extend to constants",
            worst <= CONSTANTS_TOL,
            format!("max deviation {worst:.2e} (tol {CONSTANTS_TOL:.0e})"),
        );

        let residual = harmonicity_residual(&profile, &ext).map_err(lift)?;
        record(
            &mut out,
            "extension satisfies the mean-value property",
            residual <= MEAN_VALUE_TOL,
            format!("max residual {residual:.2e} (tol {MEAN_VALUE_TOL:.0e})"),
        );

        let l0 = reduced_l0(&profile);
        let l1 = reduced_l1(&profile);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((l0.get(i, j) + l1.get(i, j)).abs());
            }
        }
        record(
            &mut out,
            "reduced kernel parts cancel",
            worst <= CANCELLATION_TOL,
            format!("max |L0 + L1| = {worst:.2e} (tol {CANCELLATION_TOL:.0e})"),
        );

        let rev = reversed_kernel(&weights, p).map_err(lift)?;
        let mut worst = 0.0f64;
        for s in 1..=n {
            worst = worst.max((rev.escape_rev[s - 1] - profile.escape()[n + 1 - s]).abs());
        }
        record(
            &mut out,
            "depth reversal matches the walk escape",
            worst <= REVERSAL_TOL,
            format!("max deviation {worst:.2e} (tol {REVERSAL_TOL:.0e})"),
        );

        let w_rev = depth_weight_vector(&weights, DepthWeightVariant::Reversed);
        let alpha = alpha_sequence(&w_rev, p).map_err(lift)?;
        let mut prefix = vec![0.0; n];
        let mut acc = 0.0;
        for (k, &a) in alpha.iter().enumerate() {
            acc += a;
            prefix[k] = acc;
        }
        let mut worst = 0.0f64;
        for s in 1..=n {
            for t in s..=n {
                worst = worst
                    .max((rev.bound.get(s - 1, t - 1) - alpha[s - 1] / prefix[t - 1]).abs());
            }
        }
        record(
            &mut out,
            "kernel bound telescopes through the alpha sums",
            worst <= TELESCOPE_TOL,
            format!("max deviation {worst:.2e} (tol {TELESCOPE_TOL:.0e})"),
        );

        if n <= ORACLE_MAX_HEIGHT {
            let mut worst = 0.0f64;
            for s in 1..=n {
                for xj in 0..1u64 << s {
                    let x = VertexRef::new(s, xj);
                    for t in 1..=n {
                        for yj in 0..1u64 << t {
                            let y = VertexRef::new(t, yj);
                            let closed = kernel_entry(&profile, x, y).map_err(lift)?;
                            let brute = kernel_entry_bruteforce(&profile, x, y).map_err(lift)?;
                            worst = worst.max((closed - brute).abs());
                        }
                    }
                }
            }
            record(
                &mut out,
                "kernel closed form matches brute force",
                worst <= KERNEL_ORACLE_TOL,
                format!("max deviation {worst:.2e} (tol {KERNEL_ORACLE_TOL:.0e})"),
            );
        } else {
            record(
                &mut out,
                "kernel closed form matches brute force",
                true,
                format!("skipped (N > {ORACLE_MAX_HEIGHT})"),
            );
        }

        let mut min_ratio = f64::INFINITY;
        let mut max_ratio = 0.0f64;
        for _ in 0..cfg.samples {
            let sample: Vec<f64> =
                (0..1u64 << n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let sample = ScalarField::from_values(FieldRole::Leaves, n, sample).map_err(lift)?;
            let r = tree_sobolev::norms::extension_ratio(&weights, p, &sample).map_err(lift)?;
            min_ratio = min_ratio.min(r);
            max_ratio = max_ratio.max(r);
        }
        record(
            &mut out,
            "extension ratio stays within the explicit constant",
            min_ratio >= 1.0 - RATIO_LOWER_SLACK
                && max_ratio <= constants.c_bar * (1.0 + BOUND_SLACK),
            format!(
                "ratios in [{min_ratio:.6}, {max_ratio:.6}], constant {:.3} ({} samples)",
                constants.c_bar, cfg.samples
            ),
        );
        if p == 2.0 {
            let worst = (max_ratio - 1.0).abs().max((min_ratio - 1.0).abs());
            record(
                &mut out,
                "quadratic case is exact",
                worst <= P2_RATIO_TOL,
                format!("max |ratio - 1| = {worst:.2e} (tol {P2_RATIO_TOL:.0e})"),
            );
        }

        let mu = depth_weight_vector(&weights, DepthWeightVariant::Forward);
        let reduced = opnorm_power_iteration(&reduced_l(&profile), &mu, p).map_err(lift)?;
        record(
            &mut out,
            "reduced operator norm stays below its bound",
            reduced.value <= constants.c_hat * (1.0 + BOUND_SLACK),
            format!("estimate {:.4} vs bound {:.4}", reduced.value, constants.c_hat),
        );

        let qp = 1.0 / p;
        let u: Vec<f64> = w_rev
            .iter()
            .zip(&rev.escape_rev)
            .map(|(w, q)| w.powf(qp) * q)
            .collect();
        let v: Vec<f64> = w_rev.iter().map(|w| w.powf(qp)).collect();
        let a = muckenhoupt_best_a(&u, &v, p, HardyDirection::Forward).map_err(lift)?;
        let mut worst = 0.0f64;
        for _ in 0..cfg.samples {
            let f: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let mut acc = 0.0;
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for k in 0..n {
                acc += f[k];
                lhs += (u[k] * acc).abs().powf(p);
                rhs += (v[k] * f[k]).abs().powf(p);
            }
            if rhs > 0.0 {
                worst = worst.max(lhs.powf(1.0 / p) / (constants.c_p * a * rhs.powf(1.0 / p)));
            }
        }
        record(
            &mut out,
            "criterion constant certifies the cumulative-sum inequality",
            worst <= 1.0 + BOUND_SLACK,
            format!("worst lhs/rhs = {worst:.4} over {} samples", cfg.samples),
        );
    }

    out.push_str(&format!(
        "verify: {checks} checks, {failures} failure(s); config {}; seed {}\n",
        cfg.digest(),
        cfg.seed
    ));
    Ok((out, failures))
}
