//! The weighted transfer operator on grid densities.
//!
//! For a density `h` the image density is `L h = sum_j (xi h) o f_j^-1 on f(omega_j)`.
//! Cell values of `L h` are assembled once per resolution into a sparse
//! [`TransferKernel`]; the dense [`UlamMatrix`] is the same kernel laid out
//! row-major, so both act identically on cell values and on cell masses.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble;
use crate::gbv::{gbv_upper, Strategy, DEFAULT_KDEPTH};
use crate::maps::{check_hypotheses, Branch, BranchShape, BranchedMap, HypothesisReport, Tolerances, WeightSpec};
use crate::measures::{bv_norm, tv_norm, FunctionSmoother, GridDensity};
use crate::quad::{geometric_pieces, GaussLegendre};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Gauss–Legendre panels per integration piece.
    pub subdivisions: usize,
    /// Nodes per panel.
    pub order: usize,
    /// Geometric refinement depth toward singular branch endpoints.
    pub depth: usize,
    /// Admissible mass defect per (cell, branch), relative to `max(1, |mass|)`.
    pub tolerance: f64,
    /// Samples per branch for the attached hypothesis report.
    pub check_samples: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self { subdivisions: 8, order: 4, depth: 20, tolerance: 1e-8, check_samples: 64 }
    }
}

impl QuadratureSettings {
    fn validate(&self) -> Result<()> {
        if self.subdivisions == 0 || self.order == 0 || self.check_samples < 8 {
            return Err(Error::Config(format!("quadrature settings must be positive: {self:?}")));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("quadrature tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// A map, a weight and the quadrature used to discretise their transfer
/// operator. Kernels of the unsmoothed operator are cached per resolution.
#[derive(Debug)]
pub struct TransferSystem {
    map: BranchedMap,
    weight: WeightSpec,
    settings: QuadratureSettings,
    report: HypothesisReport,
    cache: Mutex<HashMap<usize, Arc<TransferKernel>>>,
}

impl Clone for TransferSystem {
    fn clone(&self) -> Self {
        Self {
            map: self.map.clone(),
            weight: self.weight.clone(),
            settings: self.settings,
            report: self.report.clone(),
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl TransferSystem {
    pub fn new(map: BranchedMap, weight: WeightSpec, settings: QuadratureSettings) -> Result<Self> {
        Self::with_tolerances(map, weight, settings, &Tolerances::default())
    }

    pub fn with_tolerances(
        map: BranchedMap,
        weight: WeightSpec,
        settings: QuadratureSettings,
        tol: &Tolerances,
    ) -> Result<Self> {
        settings.validate()?;
        let report = check_hypotheses(&map, &weight, settings.check_samples, settings.depth, tol)?;
        Ok(Self { map, weight, settings, report, cache: Mutex::new(HashMap::new()) })
    }

    pub fn map(&self) -> &BranchedMap {
        &self.map
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn settings(&self) -> &QuadratureSettings {
        &self.settings
    }

    pub fn report(&self) -> &HypothesisReport {
        &self.report
    }

    /// SHA-256 over the serialised map, weight and quadrature settings.
    pub fn digest(&self) -> String {
        let payload = serde_json::to_string(&(&self.map, &self.weight, &self.settings)).expect("serialisable system");
        hex::encode(Sha256::digest(payload.as_bytes()))
    }

    /// Kernel of `L` at resolution `cells` (cached).
    pub fn kernel(&self, cells: usize) -> Result<Arc<TransferKernel>> {
        if let Some(k) = self.cache.lock().expect("kernel cache").get(&cells) {
            return Ok(Arc::clone(k));
        }
        let k = Arc::new(TransferKernel::build(self, cells, None)?);
        self.cache.lock().expect("kernel cache").insert(cells, Arc::clone(&k));
        Ok(k)
    }

    /// Kernel of `P_eps`, the operator with the branchwise mollified weight.
    pub fn smoothed_kernel(&self, cells: usize, eps: f64) -> Result<TransferKernel> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("mollification radius must be positive, got {eps}")));
        }
        TransferKernel::build(self, cells, Some(FunctionSmoother::new(eps)?))
    }

    /// Bound on the mass lost to omitted branches when transferring `d`:
    /// `tail_sup_sum * sup f' * int_tail |h|`.
    pub fn truncation_defect(&self, d: &GridDensity) -> f64 {
        let Some(tail) = self.map.tail() else { return 0.0 };
        if tail.length <= 0.0 {
            return 0.0;
        }
        let n = d.cells() as f64;
        let (lo, hi) = tail.region;
        let mut tail_mass = 0.0;
        for (i, v) in d.values().iter().enumerate() {
            let (a, b) = (i as f64 / n, (i + 1) as f64 / n);
            let overlap = (hi.min(b) - lo.max(a)).max(0.0);
            tail_mass += v.abs() * overlap;
        }
        let bound = self.report.branch_sup_tail;
        if bound == 0.0 || tail_mass == 0.0 {
            0.0
        } else {
            bound * tail.derivative_sup * tail_mass
        }
    }
}

/// Sparse matrix `c_i = sum_k w_ik h_k` of the discretised operator, rows in
/// increasing order and columns increasing within a row.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferKernel {
    cells: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    /// `(cell, branch, kernel mass - reference mass)` per non-empty pair.
    defects: Vec<(usize, usize, f64)>,
    column_defect: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Rule {
    /// Closed-form weight integral on an affine branch, pieces in x.
    Exact,
    /// Gauss–Legendre in y with optional refinement toward the image endpoints.
    Quadrature { toward_lo: bool, toward_hi: bool },
}

struct Piece {
    branch: usize,
    row: usize,
    col: usize,
    lo: f64,
    hi: f64,
    rule: Rule,
}

fn cell_of(x: f64, n: usize) -> usize {
    ((x * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// Sorted breakpoints in `[lo, hi]` with near-duplicates merged.
fn merged(mut pts: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    pts.retain(|&x| x >= lo && x <= hi);
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for x in pts {
        match out.last() {
            Some(&last) if x - last <= 4.0 * f64::EPSILON * last.abs().max(1e-300) => {}
            _ => out.push(x),
        }
    }
    if let Some(last) = out.last_mut() {
        *last = hi;
    }
    out
}

impl TransferKernel {
    fn build(sys: &TransferSystem, cells: usize, smoother: Option<FunctionSmoother>) -> Result<Self> {
        if cells < 1 {
            return Err(Error::Domain("resolution must be at least one cell".into()));
        }
        let n = cells as f64;
        let st = sys.settings;
        let branches = sys.map.branches();
        let weight = &sys.weight;
        let xi = |br: &Branch, x: f64| -> f64 {
            match &smoother {
                None => weight.value(br, x),
                Some(sm) => weight.smoothed(br, sm, x).0,
            }
        };

        let mut pieces = Vec::new();
        for (j, br) in branches.iter().enumerate() {
            let (a, b) = br.interval();
            let (ya, yb) = br.image();
            let boundaries_in = |lo: f64, hi: f64| -> Vec<f64> {
                let first = (lo * n).ceil() as usize;
                let last = (hi * n).floor() as usize;
                (first..=last.min(cells)).map(|i| i as f64 / n).filter(|&x| x > lo && x < hi).collect()
            };
            let exact = smoother.is_none()
                && matches!(br.shape(), BranchShape::Affine { .. })
                && weight.integral(br, a, b).is_some();
            if exact {
                let mut pts = boundaries_in(a, b);
                pts.extend(boundaries_in(ya, yb).into_iter().map(|y| br.inverse(y)));
                let pts = merged(pts, a, b);
                for w in pts.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    pieces.push(Piece {
                        branch: j,
                        row: cell_of(br.forward(mid), cells),
                        col: cell_of(mid, cells),
                        lo: w[0],
                        hi: w[1],
                        rule: Rule::Exact,
                    });
                }
            } else {
                let singular = matches!(br.shape(), BranchShape::Power { .. });
                let mut pts = boundaries_in(ya, yb);
                pts.extend(boundaries_in(a, b).into_iter().map(|x| br.forward(x)));
                let pts = merged(pts, ya, yb);
                let last = pts.len().saturating_sub(2);
                for (idx, w) in pts.windows(2).enumerate() {
                    let mid = 0.5 * (w[0] + w[1]);
                    pieces.push(Piece {
                        branch: j,
                        row: cell_of(mid, cells),
                        col: cell_of(br.inverse(mid), cells),
                        lo: w[0],
                        hi: w[1],
                        rule: Rule::Quadrature { toward_lo: singular && idx == 0, toward_hi: singular && idx == last },
                    });
                }
            }
        }

        let gl = GaussLegendre::new(st.order);
        let weights: Vec<f64> = pieces
            .par_iter()
            .map(|p| {
                let br = &branches[p.branch];
                let integral = match p.rule {
                    Rule::Exact => {
                        let BranchShape::Affine { slope, .. } = br.shape() else { unreachable!() };
                        slope * weight.integral(br, p.lo, p.hi).expect("closed form checked")
                    }
                    Rule::Quadrature { toward_lo, toward_hi } => {
                        geometric_pieces(p.lo, p.hi, toward_lo, toward_hi, if toward_lo || toward_hi { st.depth } else { 0 })
                            .into_iter()
                            .map(|(u, v)| gl.integrate_composite(u, v, st.subdivisions, |y| xi(br, br.inverse(y))))
                            .sum()
                    }
                };
                n * integral
            })
            .collect();

        // reference mass of each (cell, branch) pair on the whole image of the
        // source cell, with a different rule
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        let mut sums: HashMap<(usize, usize), f64> = HashMap::new();
        for (p, w) in pieces.iter().zip(&weights) {
            let key = (p.col, p.branch);
            match sums.get_mut(&key) {
                Some(s) => *s += w,
                None => {
                    sums.insert(key, *w);
                    pairs.push((p.col, p.branch, 0.0));
                }
            }
        }
        let ref_rule = GaussLegendre::new(8);
        let references: Vec<f64> = pairs
            .par_iter()
            .map(|&(k, j, _)| {
                let br = &branches[j];
                let (a, b) = br.interval();
                let x0 = (k as f64 / n).max(a);
                let x1 = ((k + 1) as f64 / n).min(b);
                if x1 <= x0 {
                    return 0.0;
                }
                if let (None, BranchShape::Affine { slope, .. }) = (&smoother, br.shape()) {
                    if let Some(v) = weight.integral(br, x0, x1) {
                        return n * slope * v;
                    }
                }
                let (y0, y1) = (br.forward(x0), br.forward(x1));
                let singular = matches!(br.shape(), BranchShape::Power { .. });
                let depth = if singular { st.depth + 10 } else { 0 };
                n * geometric_pieces(y0, y1, singular && x0 == a, singular && x1 == b, depth)
                    .into_iter()
                    .map(|(u, v)| ref_rule.integrate_composite(u, v, 4, |y| xi(br, br.inverse(y))))
                    .sum::<f64>()
            })
            .collect();
        let mut column_defect = vec![0.0; cells];
        let mut defects = Vec::with_capacity(pairs.len());
        let mut worst: Option<(usize, usize, f64, f64)> = None;
        for (&(k, j, _), r) in pairs.iter().zip(&references) {
            let got = sums[&(k, j)];
            let d = got - r;
            column_defect[k] += d;
            defects.push((k, j, d));
            let rel = d.abs() / r.abs().max(1.0);
            if rel > st.tolerance && worst.is_none_or(|w| rel > w.2) {
                worst = Some((k, j, rel, got));
            }
        }
        if let Some((cell, branch, rel, got)) = worst {
            return Err(Error::Tolerance {
                cell,
                branch,
                detail: format!("relative mass defect {rel:.3e} (kernel mass {got})"),
            });
        }

        // stable sort keeps generation order among duplicates: deterministic sums
        let mut entries: Vec<(usize, usize, f64)> = pieces.iter().zip(&weights).map(|(p, &w)| (p.row, p.col, w)).collect();
        entries.sort_by_key(|x| (x.0, x.1));
        let mut row_ptr = vec![0usize; cells + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, k, w) in entries {
            if last == Some((i, k)) {
                *vals.last_mut().expect("previous entry") += w;
            } else {
                cols.push(k);
                vals.push(w);
                row_ptr[i + 1] += 1;
                last = Some((i, k));
            }
        }
        for i in 0..cells {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { cells, row_ptr, cols, vals, defects, column_defect })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Kernel mass minus reference mass per (cell, branch) pair.
    pub fn defects(&self) -> &[(usize, usize, f64)] {
        &self.defects
    }

    pub fn column_defect(&self) -> &[f64] {
        &self.column_defect
    }

    pub fn apply(&self, d: &GridDensity) -> Result<GridDensity> {
        if d.cells() != self.cells {
            return Err(Error::Shape { left: d.cells(), right: self.cells });
        }
        GridDensity::new(self.apply_slice(d.values()))
    }

    pub fn apply_slice(&self, h: &[f64]) -> Vec<f64> {
        (0..self.cells)
            .map(|i| {
                let mut acc = 0.0;
                for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.vals[e] * h[self.cols[e]];
                }
                acc
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.cells]; self.cells];
        for (i, row) in m.iter_mut().enumerate() {
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                row[self.cols[e]] = self.vals[e];
            }
        }
        m
    }
}

pub fn apply_transfer(sys: &TransferSystem, d: &GridDensity) -> Result<GridDensity> {
    sys.kernel(d.cells())?.apply(d)
}

pub fn apply_smoothed(sys: &TransferSystem, d: &GridDensity, eps: f64) -> Result<GridDensity> {
    sys.smoothed_kernel(d.cells(), eps)?.apply(d)
}

/// Dense Ulam matrix: column `k` holds the cell masses of `L e_k` for the unit
/// mass cell density `e_k = N 1_{cell k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamMatrix {
    cells: usize,
    data: Vec<f64>,
    mass_defect: Vec<f64>,
    digest: String,
}

impl UlamMatrix {
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cells + k]
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mass_defect(&self) -> &[f64] {
        &self.mass_defect
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.cells;
        (0..n).map(|k| (0..n).map(|i| self.get(i, k)).sum()).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.cells;
        (0..n).map(|i| self.data[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { data: self.data.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    /// Row-major CSV with a comment header carrying `N` and the system digest.
    pub fn to_csv(&self) -> String {
        let n = self.cells;
        let mut out = format!("# N={n} system_digest={}\n", self.digest);
        let header: Vec<String> = (0..n).map(|k| format!("c{k}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..n {
            let row: Vec<String> = self.data[i * n..(i + 1) * n].iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

pub fn ulam_matrix(sys: &TransferSystem, cells: usize) -> Result<UlamMatrix> {
    if cells < 2 {
        return Err(Error::Domain(format!("Ulam matrix needs N >= 2, got {cells}")));
    }
    let k = sys.kernel(cells)?;
    Ok(UlamMatrix {
        cells,
        data: k.to_dense().into_iter().flatten().collect(),
        mass_defect: k.column_defect().to_vec(),
        digest: sys.digest(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormSpace {
    Tv,
    Bv,
    Gbv(f64),
}

impl NormSpace {
    pub fn norm(self, d: &GridDensity) -> Result<f64> {
        match self {
            NormSpace::Tv => Ok(tv_norm(d)),
            NormSpace::Bv => Ok(bv_norm(d)),
            NormSpace::Gbv(beta) => Ok(gbv_upper(d, beta, DEFAULT_KDEPTH, &Strategy::MENU)?.value),
        }
    }
}

/// Max of `|L h| / |h|` over probe densities: the constant density, every
/// cell indicator for the TV tag, and `trials` seeded random BV densities.
/// A lower bound of the discretised operator norm.
pub fn operator_norm_probe(sys: &TransferSystem, cells: usize, space: NormSpace, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Domain("operator norm probe needs at least one trial".into()));
    }
    let kernel = sys.kernel(cells)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = vec![GridDensity::constant(cells, 1.0)?];
    if matches!(space, NormSpace::Tv) {
        for k in 0..cells {
            probes.push(GridDensity::cell_indicator(cells, k)?);
        }
    }
    for _ in 0..trials {
        probes.push(ensemble::random_bv_density(cells, &mut rng)?);
    }
    let ratios = probes
        .par_iter()
        .map(|h| {
            let denom = space.norm(h)?;
            if denom == 0.0 {
                return Ok(0.0);
            }
            Ok(space.norm(&kernel.apply(h)?)? / denom)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Probe norms in TV, BV and GBV together with the interpolation bound
/// `|L|_TV^(1-beta) |L|_BV^beta`. Diagnostic only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationDiagnostic {
    pub beta: f64,
    pub tv: f64,
    pub bv: f64,
    pub gbv: f64,
    pub interpolated: f64,
}

pub fn interpolation_diagnostic(sys: &TransferSystem, cells: usize, beta: f64, trials: usize, seed: u64) -> Result<InterpolationDiagnostic> {
    let tv = operator_norm_probe(sys, cells, NormSpace::Tv, trials, seed)?;
    let bv = operator_norm_probe(sys, cells, NormSpace::Bv, trials, seed)?;
    let gbv = operator_norm_probe(sys, cells, NormSpace::Gbv(beta), trials, seed)?;
    Ok(InterpolationDiagnostic { beta, tv, bv, gbv, interpolated: tv.powf(1.0 - beta) * bv.powf(beta) })
}
