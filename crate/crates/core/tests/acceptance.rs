//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
//! Run with `cargo test --release --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use wtolab::ensemble::{bv_ensemble, random_lp_observable, random_step_density, rng};
use wtolab::gbv::{clamp_family, dyadic_grid, evaluate_family, gbv_upper, layer_decompose, ApproxFamily, Strategy};
use wtolab::maps::{check_hypotheses, lambda_estimates, mollify_sweep, BranchedMap, Tolerances, WeightSpec};
use wtolab::measures::{bv_norm, tv_norm, GridDensity};
use wtolab::operator::{apply_transfer, ulam_matrix, QuadratureSettings, TransferSystem};
use wtolab::spectral::{bv_growth_fit, dense_spectrum, leading_spectrum, make_report, radius_bounds, ReportSettings};

use rand::Rng;

const EXACT_TOL: f64 = 1e-12;
const SUBLEADING_MAX: f64 = 0.5001;
const C1_RUNTIME_S: f64 = 30.0;
const LAMBDA_ROOT_REL: f64 = 0.05;
const SANDWICH_TOL: f64 = 1e-9;
const CLAMP_TOL: f64 = 1e-9;
const RATE_WINDOW: (f64, f64) = (0.4, 0.6);
const C7_RUNTIME_S: f64 = 60.0;
const TAIL_MAX: f64 = 1e-12;
const MASS_TOL: f64 = 1e-6;
const RITZ_SLACK: f64 = 0.05;
const SLOPE_TOL: f64 = 0.1;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn system(map: BranchedMap, weight: WeightSpec) -> TransferSystem {
    TransferSystem::new(map, weight, QuadratureSettings::default()).expect("valid system")
}

fn c1_doubling_suite() -> Outcome {
    let t = Instant::now();
    let sys = system(BranchedMap::doubling(), WeightSpec::inverse_derivative());
    let m2 = ulam_matrix(&sys, 2).unwrap();
    let n2_ok = m2.data().iter().all(|v| (v - 0.5).abs() <= EXACT_TOL);
    let mut worst_lead: f64 = 0.0;
    let mut worst_sub: f64 = 0.0;
    let mut oracle_gap: f64 = 0.0;
    let mut all_converged = true;
    for k in 1..=9 {
        let n = 1usize << k;
        let m = ulam_matrix(&sys, n).unwrap();
        let sp = leading_spectrum(&m, n.min(10), 1e-10, 30, 0).unwrap();
        all_converged &= sp.values[0].converged;
        worst_lead = worst_lead.max((sp.values[0].value.re - 1.0).abs() + sp.values[0].value.im.abs());
        worst_sub = sp.values[1..].iter().map(|v| v.value.norm()).fold(worst_sub, f64::max);
        if n <= 64 {
            let dense = dense_spectrum(&m).unwrap();
            oracle_gap = oracle_gap.max((dense[0].re - 1.0).abs());
            worst_sub = dense[1..].iter().map(|v| v.norm()).fold(worst_sub, f64::max);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = n2_ok && all_converged && worst_lead <= EXACT_TOL && oracle_gap <= EXACT_TOL && worst_sub <= SUBLEADING_MAX && secs < C1_RUNTIME_S;
    outcome(
        ok,
        format!("N=2 matrix exact: {n2_ok}; max |ritz_1 - 1| = {worst_lead:.2e}; dense oracle gap {oracle_gap:.2e}; max sub-leading modulus {worst_sub:.4}; {secs:.1}s"),
    )
}

fn c2_cocycle_closed_forms() -> Outcome {
    let b = lambda_estimates(&BranchedMap::doubling(), &WeightSpec::constant(0.5), 24, 256, 20).unwrap();
    let e1 = b.lambda1.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    let e2 = b.lambda2.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let (rho, ess) = radius_bounds(0.5, 1.0, 0.5).unwrap();
    let e3 = (rho - 1.0).abs().max((ess - std::f64::consts::FRAC_1_SQRT_2).abs());
    outcome(
        e1 <= EXACT_TOL && e2 <= EXACT_TOL && e3 <= EXACT_TOL,
        format!("max |l1 - 1/2| = {e1:.1e}, max |l2 - 1| = {e2:.1e}, radius bounds error {e3:.1e}"),
    )
}

fn c3_lambda_n() -> Outcome {
    let beta = 0.5;
    let mut identity_err: f64 = 0.0;
    let systems = [
        (BranchedMap::doubling(), WeightSpec::constant(0.5)),
        (BranchedMap::doubling(), WeightSpec::inverse_derivative()),
        (BranchedMap::cascade(40).unwrap(), WeightSpec::power(1.0)),
    ];
    for (map, w) in &systems {
        let rows = wtolab::spectral::lambda_n_sequence(map, w, beta, 24, 256, 20).unwrap();
        for r in &rows {
            let want = 10f64.powf(1.0 / r.n as f64) * r.lambda1_hat.powf(beta) * r.lambda2_hat.powf(1.0 - beta);
            identity_err = identity_err.max((r.lambda_n_root - want).abs());
        }
    }
    let rows = wtolab::spectral::lambda_n_sequence(&BranchedMap::doubling(), &WeightSpec::constant(0.5), beta, 24, 256, 20).unwrap();
    let r24 = rows[23];
    let rel = r24.lambda_n_root / r24.ess_bound - 1.0;
    outcome(
        identity_err <= EXACT_TOL && rel.abs() <= LAMBDA_ROOT_REL,
        format!(
            "identity error {identity_err:.1e}; doubling n=24: lambda(n)^(1/n) = {:.6}, essential bound {:.6}, relative gap {:.2}% (allowed {:.0}%)",
            r24.lambda_n_root,
            r24.ess_bound,
            100.0 * rel,
            100.0 * LAMBDA_ROOT_REL
        ),
    )
}

fn c4_gbv_sandwich() -> Outcome {
    let mut r = rng(4);
    let mut worst_low: f64 = f64::INFINITY;
    let mut worst_high: f64 = f64::NEG_INFINITY;
    for _ in 0..100 {
        let cells = r.random_range(2..=256);
        let pieces = r.random_range(1..=cells.min(12));
        let d = random_step_density(cells, pieces, &mut r).unwrap();
        for beta in [0.25, 0.5, 0.75] {
            let g = gbv_upper(&d, beta, 12, &Strategy::MENU).unwrap().value;
            worst_low = worst_low.min(g - tv_norm(&d));
            worst_high = worst_high.max(g - bv_norm(&d));
        }
    }
    outcome(
        worst_low >= -SANDWICH_TOL && worst_high <= SANDWICH_TOL,
        format!("300 cases: min(gbv - tv) = {worst_low:.3e}, max(gbv - bv) = {worst_high:.3e}"),
    )
}

fn c5_clamped_family() -> Outcome {
    let mut r = rng(5);
    let mut cases = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    for case in 0..60 {
        let cells = 64;
        let d = random_step_density(cells, r.random_range(1..=8), &mut r).unwrap();
        let beta = [0.25, 0.5, 0.75][case % 3];
        let family = if case % 2 == 0 {
            let s = [Strategy::Mollified, Strategy::TwoPiece, Strategy::Constant][case % 3];
            ApproxFamily::build(&d, beta, 8, s).unwrap()
        } else {
            // perturbed family: mu_k = mu + noise / (1 + k)
            let entries = dyadic_grid(8)
                .into_iter()
                .map(|k| {
                    let noise = random_step_density(cells, 3, &mut r).unwrap();
                    (k, d.combine(1.0, &noise, 1.0 / (1.0 + k)).unwrap())
                })
                .collect();
            ApproxFamily::new(beta, entries, Strategy::Custom).unwrap()
        };
        let m = evaluate_family(&family, &d).unwrap().value;
        let grid = dyadic_grid(8);
        let k_star = grid[r.random_range(0..grid.len())];
        let est = clamp_family(&family, &d, k_star, m).unwrap();
        cases += 1;
        worst_ratio = worst_ratio.max(est.value / m);
        worst_excess = worst_excess.max(est.value - 2.0 * m);
    }
    outcome(
        cases >= 50 && worst_excess <= CLAMP_TOL,
        format!("{cases} cases: max clamped/M = {worst_ratio:.4}, max(clamped - 2M) = {worst_excess:.3e}"),
    )
}

fn c6_layers() -> Outcome {
    let mut r = rng(6);
    let mut partitions = true;
    let mut stated_violations = 0;
    let mut chebyshev_violations = 0;
    let mut checked = 0;
    let mut worst = (0.0, 0usize, 0.0);
    for &p in &[1.5, 2.0, 4.0] {
        for _ in 0..20 {
            let g = random_lp_observable(4096, p, &mut r).unwrap();
            let layers = layer_decompose(&g, p).unwrap();
            partitions &= layers.is_partition();
            for n in 1..layers.layers.len() {
                checked += 1;
                let m = layers.measure(n);
                let stated = 2f64.powf(-(n as f64) * p);
                if m > stated {
                    stated_violations += 1;
                    if m / stated > worst.0 {
                        worst = (m / stated, n, p);
                    }
                }
                if m > 2f64.powf(-((n - 1) as f64) * p) {
                    chebyshev_violations += 1;
                }
            }
        }
    }
    outcome(
        partitions && stated_violations == 0,
        format!(
            "partition: {partitions}; m(A_n) <= 2^-np violated in {stated_violations}/{checked} layers (worst ratio {:.2} at n={}, p={}); m(A_n) <= 2^-(n-1)p violated in {chebyshev_violations}",
            worst.0, worst.1, worst.2
        ),
    )
}

fn c7_mollifier_rates() -> Outcome {
    let t = Instant::now();
    let eps: Vec<f64> = (4..=10).map(|m| 0.5f64.powi(m)).collect();
    let sw = mollify_sweep(&BranchedMap::doubling(), &WeightSpec::weierstrass(), &eps, 1 << 14).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let (lo, hi) = RATE_WINDOW;
    let ok = (lo..=hi).contains(&sw.error_slope) && (-hi..=-lo).contains(&sw.derivative_slope) && secs < C7_RUNTIME_S;
    outcome(ok, format!("error slope {:.3}, derivative slope {:.3}; {secs:.1}s", sw.error_slope, sw.derivative_slope))
}

fn c8_cascade() -> Outcome {
    let map = BranchedMap::cascade(40).unwrap();
    let w = WeightSpec::power(1.0);
    let rep = check_hypotheses(&map, &w, 64, 20, &Tolerances::default()).unwrap();
    let sys = system(map, w);
    let mut mass_err: f64 = 0.0;
    for n in [64, 512] {
        let out = apply_transfer(&sys, &GridDensity::constant(n, 1.0).unwrap()).unwrap();
        mass_err = mass_err.max((out.mass() - 0.5).abs());
    }
    let report = make_report(&sys, None, &[64, 128, 256, 512], &ReportSettings::default(), false).unwrap();
    let top = report
        .spectra
        .iter()
        .flat_map(|s| s.ritz.iter().filter(|r| r.converged).map(|r| r.modulus))
        .fold(0.0, f64::max);
    let ok = rep.all_passed() && rep.branch_sup_tail < TAIL_MAX && mass_err <= MASS_TOL && top <= report.spectral_bound + RITZ_SLACK;
    outcome(
        ok,
        format!(
            "hypotheses pass: {}; tail {:.2e}; mass error {mass_err:.1e}; max converged Ritz modulus {top:.6} vs bound {:.6}",
            rep.all_passed(),
            rep.branch_sup_tail,
            report.spectral_bound
        ),
    )
}

fn c9_bv_growth() -> Outcome {
    let sys = system(BranchedMap::doubling(), WeightSpec::weierstrass());
    // finest dyadic range resolved by the grid with at least 4 cells per eps
    let ensemble = bv_ensemble(1 << 15, 50, 9).unwrap();
    let eps: Vec<f64> = (9..=13).map(|m| 0.5f64.powi(m)).collect();
    let fit = bv_growth_fit(&sys, &ensemble, &eps).unwrap();
    let target = -(1.0 - sys.weight().alpha);
    outcome(
        (fit.slope - target).abs() <= SLOPE_TOL,
        format!("A = {:.4}, B(eps) = {:?}, slope {:.3} (target {target})", fit.a, fit.b.iter().map(|b| (b * 1e4).round() / 1e4).collect::<Vec<_>>(), fit.slope),
    )
}

fn run_spectrum(config: &Path, out: &Path, threads: usize) -> bool {
    Command::new(env!("CARGO_BIN_EXE_wtolab"))
        .args(["spectrum", "--config"])
        .arg(config)
        .args(["--seed", "17", "--cells", "2,64,256", "--threads", &threads.to_string(), "--output"])
        .arg(out)
        .stderr(std::process::Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cascade.toml");
    std::fs::write(
        &config,
        "[map]\nkind = \"cascade\"\nj_max = 40\n\n[weight]\nkind = \"power\"\ndelta = 1.0\nalpha = 0.5\n\n[assumptions]\np = 4.0\n",
    )
    .unwrap();
    let runs: Vec<(usize, std::path::PathBuf)> =
        [1, 1, 8, 8].iter().enumerate().map(|(i, &t)| (t, tmp.path().join(format!("run{i}")))).collect();
    let statuses: Vec<bool> = runs.iter().map(|(t, dir)| run_spectrum(&config, dir, *t)).collect();
    if !statuses.iter().all(|&s| s) {
        return outcome(false, format!("spectrum command failed: {statuses:?}"));
    }
    let contents: Vec<_> = runs.iter().map(|(_, d)| dir_contents(d)).collect();
    let identical = contents.windows(2).all(|w| w[0] == w[1]);
    let files: Vec<&str> = contents[0].iter().map(|(n, _)| n.as_str()).collect();
    outcome(identical && !files.is_empty(), format!("4 runs (threads 1,1,8,8) byte-identical: {identical}; files {files:?}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("doubling pushforward suite", c1_doubling_suite),
        ("cocycle closed forms", c2_cocycle_closed_forms),
        ("lambda(n) identity and convergence", c3_lambda_n),
        ("GBV sandwich", c4_gbv_sandwich),
        ("clamped family bound", c5_clamped_family),
        ("layer decomposition", c6_layers),
        ("mollifier rates", c7_mollifier_rates),
        ("countable-branch cascade", c8_cascade),
        ("smoothed-operator BV growth", c9_bv_growth),
        ("determinism across thread counts", c10_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        println!(
            "[{}] criterion {:>2}: {name} ({:.1}s): {}",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.passed {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
