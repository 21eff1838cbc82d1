//! Ritz values of Ulam matrices, the certified radius bounds, the `lambda(n)`
//! sequence and Lasota–Yorke style fits over density ensembles.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gbv::{gbv_upper, Strategy};
use crate::maps::{lambda_estimates, BranchedMap, CocycleBounds, WeightSpec};
use crate::measures::{bv_norm, tv_norm, GridDensity};
use crate::operator::{ulam_matrix, TransferSystem, UlamMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArnoldiSettings {
    pub krylov: usize,
    pub wanted: usize,
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for ArnoldiSettings {
    fn default() -> Self {
        Self { krylov: 60, wanted: 10, tol: 1e-10, max_restarts: 30, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RitzValue {
    pub value: Complex64,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<RitzValue>,
    /// The Krylov space became invariant; the values are exact eigenvalues of
    /// the restriction.
    pub breakdown: bool,
    pub converged: bool,
    pub restarts: usize,
    pub krylov_dim: usize,
}

/// Modulus descending, then real part descending, then imaginary part descending.
pub fn sort_eigenvalues(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
}

fn hessenberg_eigenvalues(h: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(h.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Degenerate("Schur iteration did not converge".into()))?;
    let mut ev: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    sort_eigenvalues(&mut ev);
    Ok(ev)
}

/// Unit eigenvector of `h` for the eigenvalue estimate `theta` by inverse iteration.
fn eigenvector(h: &DMatrix<f64>, theta: Complex64) -> DVector<Complex64> {
    let d = h.nrows();
    let hc: DMatrix<Complex64> = h.map(|v| Complex64::new(v, 0.0));
    let mut y = DVector::from_element(d, Complex64::new(1.0, 0.0)).normalize();
    let mut shift = 1e-13 * theta.norm().max(1.0);
    for _ in 0..8 {
        let mut a = hc.clone();
        let s = theta + Complex64::new(shift, shift);
        for i in 0..d {
            a[(i, i)] -= s;
        }
        match a.lu().solve(&y) {
            Some(z) if z.norm().is_finite() && z.norm() > 0.0 => {
                y = z.normalize();
            }
            _ => {
                shift *= 1e3;
                continue;
            }
        }
    }
    y
}

/// Arnoldi iteration with modified Gram–Schmidt (two passes) and explicit
/// restarts from the combined wanted Ritz vectors.
pub fn arnoldi<F: Fn(&[f64]) -> Vec<f64>>(n: usize, apply: F, s: &ArnoldiSettings) -> Result<Spectrum> {
    if n == 0 {
        return Err(Error::Domain("matrix must be non-empty".into()));
    }
    if s.wanted == 0 || s.wanted > n {
        return Err(Error::Domain(format!("number of Ritz values must lie in 1..={n}, got {}", s.wanted)));
    }
    if !(s.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", s.tol)));
    }
    let kdim = s.krylov.max(s.wanted + 1).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut restarts = 0;
    loop {
        let nrm = norm(&start);
        if nrm == 0.0 {
            return Err(Error::Degenerate("zero Arnoldi start vector".into()));
        }
        let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|v| v / nrm).collect()];
        let mut h = DMatrix::<f64>::zeros(kdim + 1, kdim);
        let mut dim = kdim;
        let mut breakdown = false;
        for j in 0..kdim {
            let mut w = apply(&basis[j]);
            let w_norm = norm(&w);
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    h[(i, j)] += c;
                    axpy(-c, v, &mut w);
                }
            }
            let hn = norm(&w);
            h[(j + 1, j)] = hn;
            if hn <= 1e-12 * w_norm || hn == 0.0 || j + 1 == n {
                dim = j + 1;
                breakdown = true;
                break;
            }
            basis.push(w.into_iter().map(|x| x / hn).collect());
        }
        let hd = h.view((0, 0), (dim, dim)).into_owned();
        let tail = if breakdown { 0.0 } else { h[(dim, dim - 1)].abs() };
        let eig = hessenberg_eigenvalues(&hd)?;
        let take = s.wanted.min(dim);
        let hdc: DMatrix<Complex64> = hd.map(|v| Complex64::new(v, 0.0));
        let mut values = Vec::with_capacity(take);
        let mut vectors = Vec::with_capacity(take);
        for &theta in eig.iter().take(take) {
            let y = eigenvector(&hd, theta);
            let mut r = &hdc * &y;
            r.axpy(-theta, &y, Complex64::new(1.0, 0.0));
            let residual = tail * y[dim - 1].norm() + r.norm();
            values.push(RitzValue { value: theta, residual, converged: residual <= s.tol });
            vectors.push(y);
        }
        let converged = values.iter().all(|v| v.converged);
        if breakdown || converged || restarts >= s.max_restarts {
            return Ok(Spectrum { values, breakdown, converged, restarts, krylov_dim: dim });
        }
        // next start: sum of Re + Im of the wanted Ritz vectors, each phased so
        // that its largest component is real
        let mut next = vec![0.0; n];
        for y in &vectors {
            let mut x = vec![Complex64::new(0.0, 0.0); n];
            for (i, v) in basis.iter().take(dim).enumerate() {
                for (xk, vk) in x.iter_mut().zip(v) {
                    *xk += y[i] * vk;
                }
            }
            let big = x.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
            let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { Complex64::new(1.0, 0.0) };
            let xn = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            for (t, c) in next.iter_mut().zip(&x) {
                let z = c * phase / xn;
                *t += z.re + z.im;
            }
        }
        start = next;
        restarts += 1;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

/// The `m` largest Ritz values of an Ulam matrix.
pub fn leading_spectrum(m: &UlamMatrix, wanted: usize, tol: f64, max_iter: usize, seed: u64) -> Result<Spectrum> {
    let s = ArnoldiSettings { wanted, tol, max_restarts: max_iter, seed, ..ArnoldiSettings::default() };
    arnoldi(m.cells(), |x| m.matvec(x), &s)
}

/// All eigenvalues of a dense matrix, sorted like the Ritz values.
pub fn dense_spectrum(m: &UlamMatrix) -> Result<Vec<Complex64>> {
    let n = m.cells();
    hessenberg_eigenvalues(&DMatrix::from_row_slice(n, n, m.data()))
}

/// `(lam2, lam1^beta lam2^(1-beta))`.
pub fn radius_bounds(lam1: f64, lam2: f64, beta: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0,1], got {beta}")));
    }
    if !(lam1 >= 0.0 && lam2 >= 0.0) {
        return Err(Error::Domain(format!("growth rates must be nonnegative, got {lam1}, {lam2}")));
    }
    Ok((lam2, lam1.powf(beta) * lam2.powf(1.0 - beta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub n: usize,
    pub lambda1_hat: f64,
    pub lambda2_hat: f64,
    pub ess_bound: f64,
    /// `10 sup|xi^(n)|^beta sup|xi^(n) (f^n)'|^(1-beta)`
    pub lambda_n: f64,
    pub lambda_n_root: f64,
}

pub fn lambda_rows(bounds: &CocycleBounds, beta: f64) -> Result<Vec<LambdaRow>> {
    (1..=bounds.n_max())
        .map(|n| {
            let (l1, l2) = (bounds.lambda1_at(n), bounds.lambda2_at(n));
            let (_, ess) = radius_bounds(l1, l2, beta)?;
            let lambda_n = 10.0 * bounds.sup1[n - 1].powf(beta) * bounds.sup2[n - 1].powf(1.0 - beta);
            Ok(LambdaRow {
                n,
                lambda1_hat: l1,
                lambda2_hat: l2,
                ess_bound: ess,
                lambda_n,
                lambda_n_root: lambda_n.powf(1.0 / n as f64),
            })
        })
        .collect()
}

pub fn lambda_n_sequence(
    map: &BranchedMap,
    weight: &WeightSpec,
    beta: f64,
    n_max: usize,
    grid: usize,
    depth: usize,
) -> Result<Vec<LambdaRow>> {
    lambda_rows(&lambda_estimates(map, weight, n_max, grid, depth)?, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub n_max: usize,
    pub grid: usize,
    pub depth: usize,
    pub arnoldi: ArnoldiSettings,
    /// Allowance for the sample-based sups in the classification threshold.
    pub sampling_allowance: f64,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self { n_max: 12, grid: 256, depth: 20, arnoldi: ArnoldiSettings::default(), sampling_allowance: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// Strictly above the essential bound: a candidate isolated eigenvalue.
    Above,
    /// Not separated from the essential spectrum; uncertified.
    Below,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::Above => "above",
            Classification::Below => "below",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RitzRecord {
    pub index: usize,
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub residual: f64,
    pub converged: bool,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionSpectrum {
    pub cells: usize,
    pub breakdown: bool,
    pub converged: bool,
    pub restarts: usize,
    pub krylov_dim: usize,
    pub max_column_defect: f64,
    pub ritz: Vec<RitzRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub system_digest: String,
    pub beta: f64,
    pub alpha: f64,
    pub warnings: Vec<String>,
    pub forced: bool,
    pub hypotheses_passed: bool,
    pub hypothesis_failures: Vec<String>,
    pub lambda: Vec<LambdaRow>,
    pub spectral_bound: f64,
    pub ess_bound: f64,
    pub threshold: f64,
    pub settings: ReportSettings,
    pub spectra: Vec<ResolutionSpectrum>,
    /// Sups are sampled: every bound here is certified only up to sampling.
    pub sample_based: bool,
}

pub fn make_report(
    sys: &TransferSystem,
    beta: Option<f64>,
    resolutions: &[usize],
    settings: &ReportSettings,
    force: bool,
) -> Result<SpectralReport> {
    let hyp = sys.report();
    if !hyp.all_passed() && !force {
        return Err(Error::HypothesisFailed(hyp.failures().join("; ")));
    }
    let alpha = sys.weight().alpha;
    let beta = beta.unwrap_or(alpha);
    let mut warnings = Vec::new();
    if beta != alpha {
        warnings.push(format!("beta = {beta} differs from the weight exponent alpha = {alpha}; the bound is stated for beta = alpha"));
    }
    if !hyp.all_passed() {
        warnings.push(format!("hypotheses failed, continuing because of --force: {}", hyp.failures().join("; ")));
    }
    let bounds = lambda_estimates(sys.map(), sys.weight(), settings.n_max, settings.grid, settings.depth)?;
    let lambda = lambda_rows(&bounds, beta)?;
    let last = lambda.last().expect("n_max >= 1");
    let (spectral_bound, ess_bound) = (last.lambda2_hat, last.ess_bound);
    let threshold = ess_bound + 2.0 * (settings.arnoldi.tol + settings.sampling_allowance);

    let spectra = resolutions
        .par_iter()
        .map(|&cells| {
            let m = ulam_matrix(sys, cells)?;
            let mut a = settings.arnoldi;
            a.wanted = a.wanted.min(cells);
            let sp = arnoldi(cells, |x| m.matvec(x), &a)?;
            let ritz = sp
                .values
                .iter()
                .enumerate()
                .map(|(index, r)| RitzRecord {
                    index,
                    re: r.value.re,
                    im: r.value.im,
                    modulus: r.value.norm(),
                    residual: r.residual,
                    converged: r.converged,
                    classification: if r.value.norm() > threshold { Classification::Above } else { Classification::Below },
                })
                .collect();
            Ok(ResolutionSpectrum {
                cells,
                breakdown: sp.breakdown,
                converged: sp.converged,
                restarts: sp.restarts,
                krylov_dim: sp.krylov_dim,
                max_column_defect: m.mass_defect().iter().fold(0.0, |a: f64, d| a.max(d.abs())),
                ritz,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SpectralReport {
        system_digest: sys.digest(),
        beta,
        alpha,
        warnings,
        forced: force,
        hypotheses_passed: hyp.all_passed(),
        hypothesis_failures: hyp.failures(),
        lambda,
        spectral_bound,
        ess_bound,
        threshold,
        settings: *settings,
        spectra,
        sample_based: true,
    })
}

impl SpectralReport {
    pub fn lambda_csv(&self) -> String {
        let mut out = String::from("n,lambda1_hat,lambda2_hat,ess_bound,lambda_n,lambda_n_root\n");
        for r in &self.lambda {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?}",
                r.n, r.lambda1_hat, r.lambda2_hat, r.ess_bound, r.lambda_n, r.lambda_n_root
            );
        }
        out
    }

    pub fn ritz_csv(&self) -> String {
        let mut out = String::from("N,ritz_index,re,im,modulus,residual,converged,classification\n");
        for s in &self.spectra {
            for r in &s.ritz {
                let _ = writeln!(
                    out,
                    "{},{},{:?},{:?},{:?},{:?},{},{}",
                    s.cells,
                    r.index,
                    r.re,
                    r.im,
                    r.modulus,
                    r.residual,
                    r.converged,
                    r.classification.name()
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyRow {
    pub n: usize,
    /// `10 lambda1_hat(n)^beta lambda2_hat(n)^(1-beta)`
    pub theta: f64,
    /// Minimal `C_n` with the leading coefficient fixed to `theta`.
    pub c_fixed: f64,
    /// Members whose estimate exceeds `theta |mu|_GBV`, absorbed into `c_fixed`.
    pub slack_members: usize,
    /// Minimal max-envelope pair.
    pub theta_env: f64,
    pub c_env: f64,
    pub min_residual: f64,
    pub mean_residual: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyDiagnostic {
    pub beta: f64,
    pub ensemble_size: usize,
    pub cells: usize,
    pub rows: Vec<LyRow>,
}

impl LyDiagnostic {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,theta,c_fixed,slack_members,theta_env,c_env,min_residual,mean_residual,max_residual\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{},{:?},{:?},{:?},{:?},{:?}",
                r.n, r.theta, r.c_fixed, r.slack_members, r.theta_env, r.c_env, r.min_residual, r.mean_residual, r.max_residual
            );
        }
        out
    }
}

/// Minimal `(a, b) >= 0` with `a x_i + b t_i >= y_i` for every point,
/// minimising `sum_i (a x_i + b t_i)`. Solved by vertex enumeration.
pub fn envelope_fit(points: &[(f64, f64, f64)]) -> (f64, f64) {
    let pts: Vec<(f64, f64, f64)> = points.iter().copied().filter(|p| p.2 > 0.0).collect();
    if pts.is_empty() {
        return (0.0, 0.0);
    }
    let (sx, st) = pts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let feasible = |a: f64, b: f64| pts.iter().all(|&(x, t, y)| a * x + b * t >= y * (1.0 - 1e-12) - 1e-300);
    let mut candidates = Vec::new();
    let max_ratio = |f: &dyn Fn(&(f64, f64, f64)) -> f64| pts.iter().map(f).fold(0.0, f64::max);
    candidates.push((0.0, max_ratio(&|p| if p.1 > 0.0 { p.2 / p.1 } else { f64::INFINITY })));
    candidates.push((max_ratio(&|p| if p.0 > 0.0 { p.2 / p.0 } else { f64::INFINITY }), 0.0));
    for (i, p) in pts.iter().enumerate() {
        if p.0 > 0.0 {
            candidates.push((p.2 / p.0, 0.0));
        }
        if p.1 > 0.0 {
            candidates.push((0.0, p.2 / p.1));
        }
        for q in &pts[i + 1..] {
            let det = p.0 * q.1 - p.1 * q.0;
            if det.abs() > 1e-14 * (p.0 * q.1).abs().max((p.1 * q.0).abs()) {
                let a = (p.2 * q.1 - p.1 * q.2) / det;
                let b = (p.0 * q.2 - p.2 * q.0) / det;
                if a >= 0.0 && b >= 0.0 {
                    candidates.push((a, b));
                }
            }
        }
    }
    candidates
        .into_iter()
        .filter(|&(a, b)| a.is_finite() && b.is_finite() && feasible(a, b))
        .min_by(|x, y| (x.0 * sx + x.1 * st).total_cmp(&(y.0 * sx + y.1 * st)))
        .unwrap_or((f64::INFINITY, f64::INFINITY))
}

pub fn ly_diagnostic(
    sys: &TransferSystem,
    beta: f64,
    ensemble: &[GridDensity],
    n_list: &[usize],
    n_k: u32,
    grid: usize,
    depth: usize,
) -> Result<LyDiagnostic> {
    let first = ensemble.first().ok_or_else(|| Error::Config("Lasota-Yorke diagnostic needs a non-empty ensemble".into()))?;
    let cells = first.cells();
    if let Some(bad) = ensemble.iter().find(|d| d.cells() != cells) {
        return Err(Error::Shape { left: cells, right: bad.cells() });
    }
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::Domain("iterate list must be non-empty and positive".into()));
    }
    let n_max = *n_list.iter().max().expect("non-empty");
    let bounds = lambda_estimates(sys.map(), sys.weight(), n_max, grid, depth)?;
    let kernel = sys.kernel(cells)?;
    let strategies = Strategy::MENU;

    // (n, gbv(L^n mu)) per member, with gbv(mu) and tv(mu)
    let per_member = ensemble
        .par_iter()
        .map(|mu| {
            let g0 = gbv_upper(mu, beta, n_k, &strategies)?.value;
            let t = tv_norm(mu);
            let mut cur = mu.clone();
            let mut gs = Vec::with_capacity(n_max);
            for _ in 0..n_max {
                cur = kernel.apply(&cur)?;
                gs.push(gbv_upper(&cur, beta, n_k, &strategies)?.value);
            }
            Ok((g0, t, gs))
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = n_list
        .iter()
        .map(|&n| {
            let theta = 10.0 * bounds.lambda1_at(n).powf(beta) * bounds.lambda2_at(n).powf(1.0 - beta);
            let mut c_fixed: f64 = 0.0;
            let mut slack = 0;
            for (g0, t, gs) in &per_member {
                let excess = gs[n - 1] - theta * g0;
                if excess > 0.0 {
                    slack += 1;
                    c_fixed = c_fixed.max(if *t > 0.0 { excess / t } else { f64::INFINITY });
                }
            }
            let pts: Vec<(f64, f64, f64)> = per_member.iter().map(|(g0, t, gs)| (*g0, *t, gs[n - 1])).collect();
            let (theta_env, c_env) = envelope_fit(&pts);
            let res: Vec<f64> = pts.iter().map(|&(x, t, y)| theta_env * x + c_env * t - y).collect();
            let min_residual = res.iter().copied().fold(f64::INFINITY, f64::min);
            let max_residual = res.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            LyRow {
                n,
                theta,
                c_fixed,
                slack_members: slack,
                theta_env,
                c_env,
                min_residual,
                mean_residual: res.iter().sum::<f64>() / res.len() as f64,
                max_residual,
            }
        })
        .collect();
    Ok(LyDiagnostic { beta, ensemble_size: ensemble.len(), cells, rows })
}

/// Single `A` and per-radius `B(eps)` of the max-envelope
/// `|P_eps mu|_BV <= A |mu|_BV + B(eps) |mu|_TV`, with the log–log slope of `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvGrowthFit {
    pub a: f64,
    pub eps: Vec<f64>,
    pub b: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

pub fn bv_growth_fit(sys: &TransferSystem, ensemble: &[GridDensity], eps_list: &[f64]) -> Result<BvGrowthFit> {
    let first = ensemble.first().ok_or_else(|| Error::Config("BV growth fit needs a non-empty ensemble".into()))?;
    if eps_list.len() < 2 {
        return Err(Error::Domain("BV growth fit needs at least two radii".into()));
    }
    let cells = first.cells();
    // data[e][i] = (bv(mu), tv(mu), bv(P_eps mu))
    let data = eps_list
        .iter()
        .map(|&eps| {
            let k = sys.smoothed_kernel(cells, eps)?;
            ensemble
                .iter()
                .map(|mu| Ok((bv_norm(mu), tv_norm(mu), bv_norm(&k.apply(mu)?))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let b_of = |a: f64, rows: &[(f64, f64, f64)]| -> f64 {
        rows.iter()
            .filter(|r| r.1 > 0.0)
            .map(|&(x, t, y)| ((y - a * x) / t).max(0.0))
            .fold(0.0, f64::max)
    };
    let objective = |a: f64| -> f64 {
        data.iter()
            .map(|rows| {
                let b = b_of(a, rows);
                rows.iter().map(|&(x, t, _)| a * x + b * t).sum::<f64>()
            })
            .sum()
    };
    // the objective is convex and piecewise linear in A; its kinks sit at
    // crossings of member lines within one radius and at y/x
    let mut candidates = vec![0.0];
    for rows in &data {
        for (i, p) in rows.iter().enumerate() {
            if p.0 > 0.0 {
                candidates.push(p.2 / p.0);
            }
            for q in &rows[i + 1..] {
                if p.1 > 0.0 && q.1 > 0.0 {
                    let den = p.0 / p.1 - q.0 / q.1;
                    if den.abs() > 1e-14 {
                        let a = (p.2 / p.1 - q.2 / q.1) / den;
                        if a > 0.0 && a.is_finite() {
                            candidates.push(a);
                        }
                    }
                }
            }
        }
    }
    let a = candidates
        .into_iter()
        .min_by(|x, y| objective(*x).total_cmp(&objective(*y)).then(x.total_cmp(y)))
        .expect("non-empty candidates");
    let b: Vec<f64> = data.iter().map(|rows| b_of(a, rows)).collect();
    let (slope, intercept) = loglog_fit(eps_list, &b);
    Ok(BvGrowthFit { a, eps: eps_list.to_vec(), b, slope, intercept })
}

pub use crate::maps::loglog_slope as loglog_fit;
