//! Piecewise-C1 expanding maps of `(0,1)` with finitely or countably many
//! (truncated) branches, Hölder weights, the standing-assumption checks and
//! the cocycle growth rates.
//!
//! All suprema are taken over finite sample sets refined geometrically toward
//! the singular set, so they are lower bounds of the true suprema.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::measures::{FunctionSmoother, Mollifier, Refinement};
use crate::quad::{geometric_pieces, GaussLegendre};
use crate::{Error, Result};

pub const DEFAULT_REFINEMENT_DEPTH: usize = 20;
pub const DEFAULT_CASCADE_JMAX: usize = 40;

// non-dyadic offset for refined sample points, keeps dyadic maps off their singular set
const OFFSET: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum BranchShape {
    /// `f(x) = slope * x + intercept`
    Affine { slope: f64, intercept: f64 },
    /// `f(x) = y0 + (y1 - y0) * t^gamma` with `t = (x - a) / (b - a)`; the
    /// derivative blows up at the left endpoint when `gamma < 1`.
    Power { y0: f64, y1: f64, gamma: f64 },
}

/// One increasing C1 branch on `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    a: f64,
    b: f64,
    shape: BranchShape,
}

impl Branch {
    pub fn new(a: f64, b: f64, shape: BranchShape) -> Result<Self> {
        if !(a < b) || a < 0.0 || b > 1.0 {
            return Err(Error::Config(format!("branch interval ({a}, {b}) must satisfy 0 <= a < b <= 1")));
        }
        match shape {
            BranchShape::Affine { slope, .. } if !(slope > 0.0) => {
                return Err(Error::Config(format!("branch ({a}, {b}) has non-increasing slope {slope}")))
            }
            BranchShape::Power { y0, y1, gamma } if !(y1 > y0) || !(gamma > 0.0) => {
                return Err(Error::Config(format!(
                    "power branch ({a}, {b}) needs y1 > y0 and gamma > 0, got y0={y0}, y1={y1}, gamma={gamma}"
                )))
            }
            _ => {}
        }
        let br = Self { a, b, shape };
        let (lo, hi) = br.image();
        let tol = 1e-12;
        if lo < -tol || hi > 1.0 + tol {
            return Err(Error::Config(format!("branch ({a}, {b}) has image ({lo}, {hi}) outside (0,1)")));
        }
        Ok(br)
    }

    pub fn affine(a: f64, b: f64, slope: f64, intercept: f64) -> Result<Self> {
        Self::new(a, b, BranchShape::Affine { slope, intercept })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn shape(&self) -> BranchShape {
        self.shape
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }

    pub fn forward(&self, x: f64) -> f64 {
        match self.shape {
            BranchShape::Affine { slope, intercept } => slope * x + intercept,
            BranchShape::Power { y0, y1, gamma } => {
                let t = ((x - self.a) / (self.b - self.a)).clamp(0.0, 1.0);
                y0 + (y1 - y0) * t.powf(gamma)
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self.shape {
            BranchShape::Affine { slope, .. } => slope,
            BranchShape::Power { y0, y1, gamma } => {
                let len = self.b - self.a;
                let t = ((x - self.a) / len).clamp(0.0, 1.0);
                (y1 - y0) * gamma / len * t.powf(gamma - 1.0)
            }
        }
    }

    /// Inverse on the image interval.
    pub fn inverse(&self, y: f64) -> f64 {
        match self.shape {
            BranchShape::Affine { slope, intercept } => (y - intercept) / slope,
            BranchShape::Power { y0, y1, gamma } => {
                let s = ((y - y0) / (y1 - y0)).clamp(0.0, 1.0);
                self.a + (self.b - self.a) * s.powf(1.0 / gamma)
            }
        }
    }

    pub fn image(&self) -> (f64, f64) {
        match self.shape {
            BranchShape::Affine { slope, intercept } => (slope * self.a + intercept, slope * self.b + intercept),
            BranchShape::Power { y0, y1, .. } => (y0, y1),
        }
    }

    /// Interior sample points: `samples` midpoints plus points approaching
    /// both endpoints geometrically (factor 2, non-dyadic offset).
    pub fn sample_points(&self, samples: usize, depth: usize) -> Vec<f64> {
        let len = self.length();
        let mut pts: Vec<f64> = (0..samples).map(|i| self.a + len * (i as f64 + 0.5) / samples as f64).collect();
        for r in 1..=depth {
            let off = len * OFFSET * 0.5f64.powi(r as i32);
            pts.push(self.a + off);
            pts.push(self.b - off);
        }
        pts.retain(|&x| self.contains(x));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

/// Omitted branches of a truncated countable family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDescriptor {
    /// Total Lebesgue length of the omitted branches.
    pub length: f64,
    /// Interval containing every omitted branch.
    pub region: (f64, f64),
    /// Upper bound of `f'` on the omitted branches.
    pub derivative_sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapKind {
    Doubling,
    Cascade { j_max: usize },
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchedMap {
    kind: MapKind,
    branches: Vec<Branch>,
    /// branch indices sorted by left endpoint
    order: Vec<usize>,
    tail: Option<TailDescriptor>,
}

impl BranchedMap {
    pub fn new(kind: MapKind, branches: Vec<Branch>, tail: Option<TailDescriptor>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::Config("map needs at least one branch".into()));
        }
        let mut order: Vec<usize> = (0..branches.len()).collect();
        order.sort_by(|&i, &j| branches[i].a.total_cmp(&branches[j].a));
        for w in order.windows(2) {
            let (l, r) = (&branches[w[0]], &branches[w[1]]);
            if l.b > r.a + 1e-15 {
                return Err(Error::Config(format!(
                    "branches ({}, {}) and ({}, {}) overlap",
                    l.a, l.b, r.a, r.b
                )));
            }
        }
        let listed: f64 = branches.iter().map(Branch::length).sum();
        let tail_len = tail.map_or(0.0, |t| t.length);
        if (listed + tail_len - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "branch lengths {listed} plus declared tail {tail_len} do not add up to 1"
            )));
        }
        Ok(Self { kind, branches, order, tail })
    }

    /// `f(x) = 2x mod 1`.
    pub fn doubling() -> Self {
        let branches = vec![
            Branch::affine(0.0, 0.5, 2.0, 0.0).expect("valid branch"),
            Branch::affine(0.5, 1.0, 2.0, -1.0).expect("valid branch"),
        ];
        Self::new(MapKind::Doubling, branches, None).expect("valid map")
    }

    /// `f(x) = 2x - 2^-j` on `(2^-(j+1), 2^-j)`, branches `j = 0..=j_max`.
    pub fn cascade(j_max: usize) -> Result<Self> {
        if j_max > 60 {
            return Err(Error::Config(format!("cascade truncation j_max = {j_max} exceeds 60")));
        }
        let branches = (0..=j_max)
            .map(|j| {
                let b = 0.5f64.powi(j as i32);
                Branch::affine(0.5 * b, b, 2.0, -b)
            })
            .collect::<Result<Vec<_>>>()?;
        let edge = 0.5f64.powi(j_max as i32 + 1);
        let tail = TailDescriptor { length: edge, region: (0.0, edge), derivative_sup: 2.0 };
        Self::new(MapKind::Cascade { j_max }, branches, Some(tail))
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn tail(&self) -> Option<TailDescriptor> {
        self.tail
    }

    pub fn is_truncated(&self) -> bool {
        self.tail.is_some_and(|t| t.length > 0.0)
    }

    /// Sorted branch endpoints.
    pub fn singular_set(&self) -> Vec<f64> {
        let mut z: Vec<f64> = self.branches.iter().flat_map(|b| [b.a, b.b]).collect();
        z.sort_by(f64::total_cmp);
        z.dedup();
        z
    }

    pub fn branch_index(&self, x: f64) -> Result<usize> {
        // last branch (in position order) with a < x
        let pos = self.order.partition_point(|&i| self.branches[i].a < x);
        if pos > 0 {
            let j = self.order[pos - 1];
            if self.branches[j].contains(x) {
                return Ok(j);
            }
        }
        let z = self.singular_set();
        let lo = z.iter().copied().filter(|&e| e <= x).fold(0.0, f64::max);
        let hi = z.iter().copied().filter(|&e| e >= x).fold(1.0, f64::min);
        Err(Error::SingularPoint { x, lo, hi })
    }

    /// Containing branch, `f(x)` and `f'(x)`.
    pub fn evaluate(&self, x: f64) -> Result<(usize, f64, f64)> {
        let j = self.branch_index(x)?;
        let br = &self.branches[j];
        Ok((j, br.forward(x), br.derivative(x)))
    }

    /// Sampled infimum of `f'` over all listed branches.
    pub fn expansion_infimum(&self, samples: usize, depth: usize) -> f64 {
        self.branches
            .iter()
            .flat_map(|b| b.sample_points(samples, depth).into_iter().map(move |x| b.derivative(x)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Sample points of every branch, in listed-branch order.
    pub fn sample_points(&self, samples: usize, depth: usize) -> Vec<f64> {
        self.branches.iter().flat_map(|b| b.sample_points(samples, depth)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightKind {
    Constant { value: f64 },
    /// `1 / f'`, the pushforward weight.
    InverseDerivative,
    /// `x^delta / 2`.
    Power { delta: f64 },
    /// `(1 + (1/4) sum_{m<=terms} 2^-m cos(2 pi 4^m x)) / 2`, Hölder exponent 1/2.
    Weierstrass { terms: u32 },
    /// Piecewise-linear interpolation of samples at `x_i = i / (n - 1)`.
    Tabulated { values: Vec<f64> },
}

/// Weight `xi` together with its declared regularity data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub scale: f64,
    pub alpha: f64,
    pub p: f64,
    /// Analytic bound for `sum_j sup |xi|` over omitted branches; overrides the
    /// built-in descriptor.
    pub tail_sup_sum: Option<f64>,
}

impl WeightSpec {
    pub fn new(kind: WeightKind, alpha: f64, p: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("Hölder exponent alpha must lie in (0,1), got {alpha}")));
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::Config(format!("exponent p must be a finite number >= 1, got {p}")));
        }
        match &kind {
            WeightKind::Tabulated { values } if values.len() < 2 => {
                return Err(Error::Config("tabulated weight needs at least two samples".into()))
            }
            WeightKind::Tabulated { values } if values.iter().any(|v| !v.is_finite()) => {
                return Err(Error::Config("tabulated weight has non-finite samples".into()))
            }
            WeightKind::Constant { value } if !value.is_finite() => {
                return Err(Error::Config("constant weight must be finite".into()))
            }
            _ => {}
        }
        Ok(Self { kind, scale: 1.0, alpha, p, tail_sup_sum: None })
    }

    pub fn constant(value: f64) -> Self {
        Self::new(WeightKind::Constant { value }, 0.5, 4.0).expect("valid weight")
    }

    pub fn inverse_derivative() -> Self {
        Self::new(WeightKind::InverseDerivative, 0.5, 4.0).expect("valid weight")
    }

    pub fn power(delta: f64) -> Self {
        Self::new(WeightKind::Power { delta }, 0.5, 4.0).expect("valid weight")
    }

    pub fn weierstrass() -> Self {
        Self::new(WeightKind::Weierstrass { terms: 12 }, 0.5, 4.0).expect("valid weight")
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_exponents(mut self, alpha: f64, p: f64) -> Result<Self> {
        let checked = Self::new(self.kind.clone(), alpha, p)?;
        self.alpha = checked.alpha;
        self.p = checked.p;
        Ok(self)
    }

    pub fn with_tail_sup_sum(mut self, bound: f64) -> Self {
        self.tail_sup_sum = Some(bound);
        self
    }

    /// `xi(x)` for `x` in `branch`.
    pub fn value(&self, branch: &Branch, x: f64) -> f64 {
        self.scale * self.base_value(branch, x)
    }

    fn base_value(&self, branch: &Branch, x: f64) -> f64 {
        match &self.kind {
            WeightKind::Constant { value } => *value,
            WeightKind::InverseDerivative => 1.0 / branch.derivative(x),
            WeightKind::Power { delta } => 0.5 * x.powf(*delta),
            WeightKind::Weierstrass { terms } => weierstrass(x, *terms),
            WeightKind::Tabulated { values } => {
                let n = values.len() - 1;
                let s = (x.clamp(0.0, 1.0) * n as f64).min(n as f64);
                let i = (s.floor() as usize).min(n - 1);
                let t = s - i as f64;
                values[i] * (1.0 - t) + values[i + 1] * t
            }
        }
    }

    /// `sum_j sup |xi|` over the omitted branches of `map`, or `None` when the
    /// map is truncated and no descriptor is available.
    pub fn tail_sup_sum(&self, map: &BranchedMap) -> Option<f64> {
        if !map.is_truncated() {
            return Some(0.0);
        }
        if let Some(t) = self.tail_sup_sum {
            return Some(t);
        }
        let MapKind::Cascade { j_max } = map.kind() else {
            return None;
        };
        let s = self.scale.abs();
        if s == 0.0 {
            return Some(0.0);
        }
        match &self.kind {
            WeightKind::Constant { value } if *value == 0.0 => Some(0.0),
            WeightKind::Constant { .. } | WeightKind::InverseDerivative | WeightKind::Weierstrass { .. } => {
                Some(f64::INFINITY)
            }
            // sup over (2^-(j+1), 2^-j) of x^delta/2 is 2^-(j delta)/2
            WeightKind::Power { delta } if *delta > 0.0 => {
                let r = 0.5f64.powf(*delta);
                Some(s * 0.5 * r.powi(j_max as i32 + 1) / (1.0 - r))
            }
            WeightKind::Power { .. } => Some(f64::INFINITY),
            WeightKind::Tabulated { .. } => None,
        }
    }
}

impl WeightSpec {
    /// `int_{x0}^{x1} xi` in closed form, when the weight kind and branch
    /// shape admit one.
    pub fn integral(&self, branch: &Branch, x0: f64, x1: f64) -> Option<f64> {
        let base = match &self.kind {
            WeightKind::Constant { value } => value * (x1 - x0),
            WeightKind::InverseDerivative => match branch.shape() {
                BranchShape::Affine { slope, .. } => (x1 - x0) / slope,
                BranchShape::Power { .. } => return None,
            },
            WeightKind::Power { delta } if *delta > -1.0 => {
                (x1.powf(delta + 1.0) - x0.powf(delta + 1.0)) / (2.0 * (delta + 1.0))
            }
            WeightKind::Power { .. } => return None,
            WeightKind::Weierstrass { terms } => {
                let mut s = 0.0;
                let mut amp = 1.0;
                let mut omega = 2.0 * PI;
                for _ in 0..=*terms {
                    // sin(w x1) - sin(w x0) without cancellation
                    s += amp * 2.0 * (0.5 * omega * (x1 + x0)).cos() * (0.5 * omega * (x1 - x0)).sin() / omega;
                    amp *= 0.5;
                    omega *= 4.0;
                }
                0.5 * ((x1 - x0) + 0.25 * s)
            }
            WeightKind::Tabulated { values } => {
                let n = values.len() - 1;
                let h = 1.0 / n as f64;
                let lerp = |x: f64| self.base_value(branch, x);
                let (lo, hi) = (x0.clamp(0.0, 1.0), x1.clamp(0.0, 1.0));
                let mut acc = 0.0;
                let mut u = lo;
                while u < hi {
                    let next = (((u / h).floor() + 1.0) * h).min(hi);
                    let next = if next <= u { hi } else { next };
                    acc += 0.5 * (next - u) * (lerp(u) + lerp(next));
                    u = next;
                }
                acc
            }
        };
        Some(self.scale * base)
    }

    /// Mollified weight on `branch` (constant extension outside the branch),
    /// value and derivative at `x`. Trigonometric kinds are convolved in
    /// closed form, the rest through `smoother`.
    pub fn smoothed(&self, branch: &Branch, smoother: &FunctionSmoother, x: f64) -> (f64, f64) {
        let (a, b) = branch.interval();
        match (&self.kind, branch.shape()) {
            (WeightKind::Constant { value }, _) => (self.scale * value, 0.0),
            (WeightKind::InverseDerivative, BranchShape::Affine { slope, .. }) => (self.scale / slope, 0.0),
            (WeightKind::Weierstrass { terms }, _) => {
                let (v, d) = smoothed_weierstrass(*terms, smoother.epsilon(), a, b, x);
                (self.scale * v, self.scale * d)
            }
            _ => smoother.eval(|t| self.value(branch, t), a, b, x),
        }
    }
}

fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z * z / 6.0
    } else {
        z.sin() / z
    }
}

// int_lo^hi cos(c t + d) dt and int_lo^hi sin(c t + d) dt
fn int_cos(c: f64, d: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    w * (c * 0.5 * (lo + hi) + d).cos() * sinc(0.5 * c * w)
}

fn int_sin(c: f64, d: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    w * (c * 0.5 * (lo + hi) + d).sin() * sinc(0.5 * c * w)
}

/// Exact convolution of the truncated Weierstrass function, restricted to
/// `(a, b)` and extended by its endpoint values, with the raised-cosine
/// mollifier of radius `eps`. Returns value and derivative at `x`.
pub fn smoothed_weierstrass(terms: u32, eps: f64, a: f64, b: f64, x: f64) -> (f64, f64) {
    let m = Mollifier::new(eps).expect("positive radius");
    let fa = weierstrass(a, terms);
    let fb = weierstrass(b, terms);
    let mut value = fa * (1.0 - m.cdf(x - a)) + fb * m.cdf(x - b);
    let mut deriv = -fa * m.eval(x - a) + fb * m.eval(x - b);
    let lo = (x - eps).max(a);
    let hi = (x + eps).min(b);
    if hi > lo {
        // rho_eps(x - t) = (1 + cos(kappa (x - t))) / (2 eps)
        let kappa = PI / eps;
        let norm = 0.5 / eps;
        value += 0.5 * (m.cdf(x - lo) - m.cdf(x - hi));
        deriv += 0.5 * (m.eval(x - lo) - m.eval(x - hi));
        let mut amp = 0.125;
        let mut omega = 2.0 * PI;
        for _ in 0..=terms {
            let v = int_cos(omega, 0.0, lo, hi)
                + 0.5 * int_cos(omega + kappa, -kappa * x, lo, hi)
                + 0.5 * int_cos(omega - kappa, kappa * x, lo, hi);
            let d = 0.5 * int_sin(omega - kappa, kappa * x, lo, hi) + 0.5 * int_sin(-(omega + kappa), kappa * x, lo, hi);
            value += amp * norm * v;
            deriv -= amp * norm * kappa * d;
            amp *= 0.5;
            omega *= 4.0;
        }
    }
    (value, deriv)
}

/// The truncated Weierstrass function used as a weight of infinite variation.
pub fn weierstrass(x: f64, terms: u32) -> f64 {
    let mut s = 0.0;
    let mut amp = 1.0;
    let mut freq = 1.0;
    for _ in 0..=terms {
        s += amp * (2.0 * PI * freq * x).cos();
        amp *= 0.5;
        freq *= 4.0;
    }
    0.5 * (1.0 + 0.25 * s)
}

/// Sup-norm error and derivative of the branchwise mollified weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifySweep {
    pub eps: Vec<f64>,
    pub sup_error: Vec<f64>,
    pub sup_derivative: Vec<f64>,
    /// log–log slopes against `eps`
    pub error_slope: f64,
    pub derivative_slope: f64,
}

/// Evaluates `xi_eps` at the grid points `j / samples` inside each branch and
/// records `sup |xi_eps - xi|` and `sup |xi_eps'|` per radius.
pub fn mollify_sweep(map: &BranchedMap, weight: &WeightSpec, eps_list: &[f64], samples: usize) -> Result<MollifySweep> {
    if eps_list.len() < 2 {
        return Err(Error::Domain("mollifier sweep needs at least two radii".into()));
    }
    if samples < 2 {
        return Err(Error::Domain("mollifier sweep needs at least two sample points".into()));
    }
    let mut sup_error = Vec::with_capacity(eps_list.len());
    let mut sup_derivative = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let sm = FunctionSmoother::new(eps)?;
        let (mut e, mut d): (f64, f64) = (0.0, 0.0);
        for br in map.branches() {
            for j in 1..samples {
                let x = j as f64 / samples as f64;
                if br.contains(x) {
                    let (v, dv) = weight.smoothed(br, &sm, x);
                    e = e.max((v - weight.value(br, x)).abs());
                    d = d.max(dv.abs());
                }
            }
        }
        sup_error.push(e);
        sup_derivative.push(d);
    }
    let (error_slope, _) = loglog_slope(eps_list, &sup_error);
    let (derivative_slope, _) = loglog_slope(eps_list, &sup_derivative);
    Ok(MollifySweep { eps: eps_list.to_vec(), sup_error, sup_derivative, error_slope, derivative_slope })
}

/// Least-squares line through `(log x, log y)`; NaN when some `y <= 0`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    if y.iter().any(|v| !(*v > 0.0)) {
        return (f64::NAN, f64::NAN);
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Tolerances for the hypothesis checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Require `inf f' > 1 + expansion_margin`.
    pub expansion_margin: f64,
    /// Maximal relative change of `|f'|_p` between refinement depth `d/2` and `d`.
    pub lp_relative_change: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { expansion_margin: 0.0, lp_relative_change: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub expansion_infimum: f64,
    pub holder_per_branch: Vec<f64>,
    pub holder_uniform: f64,
    pub branch_sups: Vec<f64>,
    pub branch_sup_listed: f64,
    pub branch_sup_tail: f64,
    pub lp_derivative: f64,
    pub lp_derivative_coarse: f64,
    pub lp_relative_change: f64,
    pub xi_fprime_sup: f64,
    pub alpha: f64,
    pub p: f64,
    pub samples_per_branch: usize,
    pub refinement_depth: usize,
    pub tolerances: Tolerances,
    pub checks: Vec<AssumptionCheck>,
    /// Suprema are sample-based lower bounds of the true suprema.
    pub sample_based: bool,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect()
    }

    pub fn branch_sup_total(&self) -> f64 {
        self.branch_sup_listed + self.branch_sup_tail
    }
}

pub fn check_hypotheses(
    map: &BranchedMap,
    weight: &WeightSpec,
    samples_per_branch: usize,
    refinement_depth: usize,
    tol: &Tolerances,
) -> Result<HypothesisReport> {
    if samples_per_branch < 8 {
        return Err(Error::Domain(format!("need at least 8 samples per branch, got {samples_per_branch}")));
    }
    let tail_sup = weight.tail_sup_sum(map).ok_or_else(|| {
        Error::Config("map is truncated but the weight has no tail descriptor (tail_sup_sum)".into())
    })?;

    let mut expansion = f64::INFINITY;
    let mut holder = Vec::with_capacity(map.branches().len());
    let mut sups = Vec::with_capacity(map.branches().len());
    let mut xi_fprime: f64 = 0.0;
    for br in map.branches() {
        let pts = br.sample_points(samples_per_branch, refinement_depth);
        let mut sup: f64 = 0.0;
        for &x in &pts {
            let d = br.derivative(x);
            let xi = weight.value(br, x);
            expansion = expansion.min(d);
            sup = sup.max(xi.abs());
            xi_fprime = xi_fprime.max((xi * d).abs());
        }
        sups.push(sup);
        holder.push(holder_estimate(weight, br, &pts, weight.alpha));
    }
    let holder_uniform = holder.iter().copied().fold(0.0, f64::max);
    let listed: f64 = sups.iter().sum();

    let fine = derivative_lp_norm(map, weight.p, refinement_depth);
    let coarse = derivative_lp_norm(map, weight.p, refinement_depth / 2);
    let rel = if fine.is_finite() && fine > 0.0 { (fine - coarse).abs() / fine } else { f64::INFINITY };

    let mut checks = Vec::new();
    let lambda = 1.0 + tol.expansion_margin;
    checks.push(AssumptionCheck {
        name: "expansion".into(),
        passed: expansion > lambda,
        detail: format!("inf f' = {expansion} (required > {lambda})"),
    });
    checks.push(AssumptionCheck {
        name: "holder".into(),
        passed: holder_uniform.is_finite(),
        detail: format!("uniform Hölder-{} constant estimate {holder_uniform}", weight.alpha),
    });
    checks.push(AssumptionCheck {
        name: "branch-sup-series".into(),
        passed: (listed + tail_sup).is_finite(),
        detail: format!("sum of branch sups {listed} + tail {tail_sup}"),
    });
    checks.push(AssumptionCheck {
        name: "lp-derivative".into(),
        passed: fine.is_finite() && rel <= tol.lp_relative_change,
        detail: format!("|f'|_p = {fine} (coarse {coarse}, relative change {rel})"),
    });
    checks.push(AssumptionCheck {
        name: "xi-fprime-bounded".into(),
        passed: xi_fprime.is_finite(),
        detail: format!("sup |xi f'| = {xi_fprime}"),
    });
    let inv_alpha = 1.0 / weight.alpha;
    checks.push(AssumptionCheck {
        name: "exponent".into(),
        passed: weight.p > inv_alpha,
        detail: if weight.p > inv_alpha {
            format!("p > 1/alpha holds: p = {} > {inv_alpha}", weight.p)
        } else {
            format!("p > 1/alpha required, got p = {} <= 1/alpha = {inv_alpha}", weight.p)
        },
    });

    Ok(HypothesisReport {
        expansion_infimum: expansion,
        holder_per_branch: holder,
        holder_uniform,
        branch_sups: sups,
        branch_sup_listed: listed,
        branch_sup_tail: tail_sup,
        lp_derivative: fine,
        lp_derivative_coarse: coarse,
        lp_relative_change: rel,
        xi_fprime_sup: xi_fprime,
        alpha: weight.alpha,
        p: weight.p,
        samples_per_branch,
        refinement_depth,
        tolerances: *tol,
        checks,
        sample_based: true,
    })
}

/// Max of `|xi(x) - xi(x + delta)| / delta^alpha` over sample points and
/// dyadic separations `delta = |branch| 2^-s`.
fn holder_estimate(weight: &WeightSpec, br: &Branch, pts: &[f64], alpha: f64) -> f64 {
    let len = br.length();
    let levels = (pts.len().max(2) as f64).log2().ceil() as i32 + 4;
    let mut best: f64 = 0.0;
    for &x in pts {
        let fx = weight.value(br, x);
        for s in 1..=levels {
            let delta = len * 0.5f64.powi(s);
            let y = x + delta;
            if br.contains(y) {
                let r = (fx - weight.value(br, y)).abs() / delta.powf(alpha);
                best = best.max(r);
            }
        }
    }
    best
}

/// `|f'|_{L^p}` over listed branches plus the tail allowance
/// `derivative_sup^p * tail_length`.
pub fn derivative_lp_norm(map: &BranchedMap, p: f64, depth: usize) -> f64 {
    let gl = GaussLegendre::new(8);
    let mut total = 0.0;
    for br in map.branches() {
        let (a, b) = br.interval();
        for (u, v) in geometric_pieces(a, b, true, true, depth) {
            total += gl.integrate(u, v, |x| br.derivative(x).abs().powf(p));
        }
    }
    if let Some(t) = map.tail() {
        total += t.derivative_sup.powf(p) * t.length;
    }
    total.powf(1.0 / p)
}

/// Refinement toward the singular set of `map`.
pub fn singular_refinement(map: &BranchedMap, depth: usize) -> Refinement {
    Refinement { singular_points: map.singular_set(), depth }
}

/// `(xi^(n)(x), (f^n)'(x))` along the forward orbit of `x`.
pub fn cocycle(map: &BranchedMap, weight: &WeightSpec, n: usize, x: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Domain("cocycle order must be positive".into()));
    }
    let mut y = x;
    let mut prod_xi = 1.0;
    let mut prod_d = 1.0;
    for i in 0..n {
        let (j, fy, d) = map.evaluate(y).map_err(|_| Error::OrbitSingular { iterate: i, x: y })?;
        prod_xi *= weight.value(&map.branches()[j], y);
        prod_d *= d;
        y = fy;
    }
    Ok((prod_xi, prod_d))
}

/// Sampled growth rates `lambda_1(n)`, `lambda_2(n)` for `n = 1..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocycleBounds {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// `sup |xi^(n)|` over the sample set.
    pub sup1: Vec<f64>,
    /// `sup |xi^(n) (f^n)'|` over the sample set.
    pub sup2: Vec<f64>,
    pub valid_samples: Vec<usize>,
    pub grid: usize,
    pub refinement_depth: usize,
    pub total_samples: usize,
    /// The per-n roots are sample-based and not certified.
    pub certified: bool,
}

impl CocycleBounds {
    pub fn n_max(&self) -> usize {
        self.lambda1.len()
    }

    pub fn lambda1_at(&self, n: usize) -> f64 {
        self.lambda1[n - 1]
    }

    pub fn lambda2_at(&self, n: usize) -> f64 {
        self.lambda2[n - 1]
    }
}

pub fn lambda_estimates(
    map: &BranchedMap,
    weight: &WeightSpec,
    n_max: usize,
    grid: usize,
    refinement_depth: usize,
) -> Result<CocycleBounds> {
    if n_max == 0 {
        return Err(Error::Domain("n_max must be at least 1".into()));
    }
    if grid == 0 {
        return Err(Error::Domain("sample grid must be non-empty".into()));
    }
    let pts = map.sample_points(grid, refinement_depth);
    let mut sup1 = vec![0.0f64; n_max];
    let mut sup2 = vec![0.0f64; n_max];
    let mut valid = vec![0usize; n_max];
    for &x0 in &pts {
        let mut y = x0;
        let mut xi = 1.0;
        let mut d = 1.0;
        for n in 0..n_max {
            let Ok((j, fy, dy)) = map.evaluate(y) else { break };
            xi *= weight.value(&map.branches()[j], y);
            d *= dy;
            sup1[n] = sup1[n].max(xi.abs());
            sup2[n] = sup2[n].max((xi * d).abs());
            valid[n] += 1;
            y = fy;
        }
    }
    if let Some(n) = valid.iter().position(|&c| c == 0) {
        return Err(Error::InsufficientSampling(format!("every sampled orbit is singular before iterate {}", n + 1)));
    }
    let root = |s: &[f64]| -> Vec<f64> { s.iter().enumerate().map(|(i, v)| v.powf(1.0 / (i + 1) as f64)).collect() };
    Ok(CocycleBounds {
        lambda1: root(&sup1),
        lambda2: root(&sup2),
        sup1,
        sup2,
        valid_samples: valid,
        grid,
        refinement_depth,
        total_samples: pts.len(),
        certified: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_evaluation() {
        let m = BranchedMap::doubling();
        let (j, f, d) = m.evaluate(0.3).unwrap();
        assert_eq!((j, f, d), (0, 0.6, 2.0));
        let (j, f, d) = m.evaluate(0.75).unwrap();
        assert_eq!((j, f, d), (1, 0.5, 2.0));
        match m.evaluate(0.5) {
            Err(Error::SingularPoint { lo, hi, .. }) => assert_eq!((lo, hi), (0.5, 0.5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cascade_evaluation_and_tail() {
        let m = BranchedMap::cascade(40).unwrap();
        let (j, f, d) = m.evaluate(0.3).unwrap();
        assert_eq!(j, 1);
        assert!((f - 0.1).abs() < 1e-15);
        assert_eq!(d, 2.0);
        // inside the omitted tail
        assert!(matches!(m.evaluate(1e-14), Err(Error::SingularPoint { .. })));
        assert_eq!(m.branches().len(), 41);
    }

    #[test]
    fn branch_inverse_roundtrip() {
        let brs = [
            Branch::affine(0.2, 0.6, 2.5, -0.5).unwrap(),
            Branch::new(0.0, 0.5, BranchShape::Power { y0: 0.0, y1: 1.0, gamma: 0.5 }).unwrap(),
        ];
        for br in &brs {
            for x in br.sample_points(16, 10) {
                assert!((br.inverse(br.forward(x)) - x).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn malformed_maps_are_rejected() {
        assert!(Branch::affine(0.5, 0.5, 2.0, 0.0).is_err());
        assert!(Branch::affine(0.0, 0.5, 3.0, 0.0).is_err());
        let gap = vec![Branch::affine(0.0, 0.4, 2.0, 0.0).unwrap()];
        assert!(BranchedMap::new(MapKind::Custom, gap, None).is_err());
        let overlap = vec![Branch::affine(0.0, 0.6, 1.5, 0.0).unwrap(), Branch::affine(0.5, 1.0, 2.0, -1.0).unwrap()];
        assert!(BranchedMap::new(MapKind::Custom, overlap, None).is_err());
    }

    #[test]
    fn doubling_with_constant_half_passes() {
        let m = BranchedMap::doubling();
        let w = WeightSpec::constant(0.5);
        let r = check_hypotheses(&m, &w, 32, 20, &Tolerances::default()).unwrap();
        assert_eq!(r.expansion_infimum, 2.0);
        assert!((r.branch_sup_total() - 1.0).abs() < 1e-12);
        assert!((r.lp_derivative - 2.0).abs() < 1e-12);
        assert!((r.xi_fprime_sup - 1.0).abs() < 1e-12);
        assert!(r.all_passed(), "{:?}", r.failures());
    }

    #[test]
    fn cascade_with_linear_weight_passes() {
        let m = BranchedMap::cascade(40).unwrap();
        let w = WeightSpec::power(1.0);
        let r = check_hypotheses(&m, &w, 16, 20, &Tolerances::default()).unwrap();
        assert!(r.all_passed(), "{:?}", r.failures());
        assert!(r.branch_sup_tail < 1e-12);
        assert!((r.branch_sup_tail - 0.5f64.powi(41)).abs() < 1e-25);
        // listed sups approach 2^-j-1 from below (sampled)
        for (j, s) in r.branch_sups.iter().enumerate() {
            let exact = 0.5f64.powi(j as i32 + 1);
            assert!(*s <= exact && *s > exact * (1.0 - 1e-5));
        }
        assert!(r.xi_fprime_sup <= 1.0 && r.xi_fprime_sup > 1.0 - 1e-6);
    }

    #[test]
    fn exponent_failure_is_reported() {
        let m = BranchedMap::doubling();
        let w = WeightSpec::constant(0.5).with_exponents(0.5, 1.5).unwrap();
        let r = check_hypotheses(&m, &w, 16, 10, &Tolerances::default()).unwrap();
        assert!(!r.all_passed());
        let f = r.failures();
        assert_eq!(f.len(), 1);
        assert!(f[0].contains("p > 1/alpha") && f[0].contains("<= 1/alpha"), "{}", f[0]);
    }

    #[test]
    fn non_expanding_map_is_flagged_not_rejected() {
        let brs = vec![Branch::affine(0.0, 1.0, 1.0, 0.0).unwrap()];
        let m = BranchedMap::new(MapKind::Custom, brs, None).unwrap();
        let r = check_hypotheses(&m, &WeightSpec::constant(0.5), 8, 4, &Tolerances::default()).unwrap();
        assert!(!r.checks[0].passed);
    }

    #[test]
    fn truncated_map_needs_tail_descriptor() {
        let m = BranchedMap::cascade(10).unwrap();
        let w = WeightSpec::new(WeightKind::Tabulated { values: vec![0.1, 0.2] }, 0.5, 4.0).unwrap();
        assert!(matches!(check_hypotheses(&m, &w, 8, 4, &Tolerances::default()), Err(Error::Config(_))));
        let w = w.with_tail_sup_sum(1e-3);
        assert!(check_hypotheses(&m, &w, 8, 4, &Tolerances::default()).is_ok());
        assert!(matches!(check_hypotheses(&m, &WeightSpec::constant(0.5), 4, 4, &Tolerances::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_weight_on_cascade_is_not_summable() {
        let m = BranchedMap::cascade(20).unwrap();
        let r = check_hypotheses(&m, &WeightSpec::constant(0.5), 8, 8, &Tolerances::default()).unwrap();
        assert!(!r.checks.iter().find(|c| c.name == "branch-sup-series").unwrap().passed);
    }

    #[test]
    fn unbounded_derivative_lp_check() {
        // f' ~ t^(gamma - 1) is in L^p iff p (1 - gamma) < 1
        let mk = |gamma: f64| {
            let brs = vec![
                Branch::new(0.0, 0.5, BranchShape::Power { y0: 0.0, y1: 1.0, gamma }).unwrap(),
                Branch::affine(0.5, 1.0, 2.0, -1.0).unwrap(),
            ];
            BranchedMap::new(MapKind::Custom, brs, None).unwrap()
        };
        let w = WeightSpec::inverse_derivative().with_exponents(0.5, 2.5).unwrap();
        let ok = check_hypotheses(&mk(0.9), &w, 16, 40, &Tolerances::default()).unwrap();
        assert!(ok.checks.iter().find(|c| c.name == "lp-derivative").unwrap().passed, "{:?}", ok.failures());
        let bad = check_hypotheses(&mk(0.55), &w, 16, 40, &Tolerances::default()).unwrap();
        assert!(!bad.checks.iter().find(|c| c.name == "lp-derivative").unwrap().passed);
    }

    #[test]
    fn cocycle_closed_forms() {
        let m = BranchedMap::doubling();
        let w = WeightSpec::constant(0.5);
        let (xi, d) = cocycle(&m, &w, 5, 0.1).unwrap();
        assert_eq!(xi, 0.5f64.powi(5));
        assert_eq!(d, 32.0);
        assert_eq!(xi * d, 1.0);
        let (xi1, d1) = cocycle(&m, &w, 1, 0.3).unwrap();
        let (j, _, dd) = m.evaluate(0.3).unwrap();
        assert_eq!((xi1, d1), (w.value(&m.branches()[j], 0.3), dd));
        // orbit of 1/4 hits 1/2 at iterate 1
        assert!(matches!(cocycle(&m, &w, 3, 0.25), Err(Error::OrbitSingular { iterate: 1, .. })));
    }

    #[test]
    fn cascade_telescoping_product() {
        let m = BranchedMap::cascade(40).unwrap();
        let w = WeightSpec::power(1.0);
        for &x in &[0.9, 0.61, 0.3001, 0.77] {
            let (xi, d) = cocycle(&m, &w, 6, x).unwrap();
            let mut y = x;
            let mut prod = 1.0;
            for _ in 0..6 {
                prod *= y;
                y = m.evaluate(y).unwrap().1;
            }
            assert!((xi * d - prod).abs() < 1e-14);
            assert!(xi * d <= 1.0);
        }
    }

    #[test]
    fn doubling_lambda_estimates_are_exact() {
        let m = BranchedMap::doubling();
        let b = lambda_estimates(&m, &WeightSpec::constant(0.5), 24, 64, 20).unwrap();
        for n in 1..=24 {
            assert!((b.lambda1_at(n) - 0.5).abs() <= 1e-12);
            assert!((b.lambda2_at(n) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn cascade_lambda2_below_one_and_refines_upward() {
        let m = BranchedMap::cascade(40).unwrap();
        let w = WeightSpec::power(1.0);
        let coarse = lambda_estimates(&m, &w, 8, 16, 6).unwrap();
        let fine = lambda_estimates(&m, &w, 8, 16, 24).unwrap();
        for n in 1..=8 {
            assert!(fine.lambda2_at(n) <= 1.0 && coarse.lambda2_at(n) <= 1.0);
            assert!(fine.lambda2_at(n) >= coarse.lambda2_at(n));
        }
        assert!(fine.lambda2_at(1) > 1.0 - 1e-6);
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        let br = Branch::affine(0.5, 1.0, 2.0, -1.0).unwrap();
        let gl = GaussLegendre::new(12);
        let weights = [
            WeightSpec::constant(0.3),
            WeightSpec::inverse_derivative(),
            WeightSpec::power(1.5).with_scale(2.0),
            WeightSpec::new(WeightKind::Weierstrass { terms: 3 }, 0.5, 4.0).unwrap(),
            WeightSpec::new(WeightKind::Tabulated { values: vec![0.0, 1.0, 0.5, 2.0] }, 0.5, 4.0).unwrap(),
        ];
        for w in &weights {
            let (x0, x1) = (0.55, 0.93);
            let exact = w.integral(&br, x0, x1).unwrap();
            let num = gl.integrate_composite(x0, x1, 4096, |x| w.value(&br, x));
            assert!((exact - num).abs() < 1e-9, "{:?}: {exact} vs {num}", w.kind);
        }
    }

    #[test]
    fn smoothed_weierstrass_matches_generic_smoother() {
        let w = WeightSpec::new(WeightKind::Weierstrass { terms: 3 }, 0.5, 4.0).unwrap();
        let br = Branch::affine(0.0, 0.5, 2.0, 0.0).unwrap();
        let sm = FunctionSmoother::with_panels(1.0 / 64.0, 256).unwrap();
        for &x in &[0.001, 0.01, 0.2, 0.37, 0.499, 0.51] {
            let (v, d) = w.smoothed(&br, &sm, x);
            let (vg, dg) = sm.eval(|t| w.value(&br, t), 0.0, 0.5, x);
            assert!((v - vg).abs() < 1e-11, "x={x}: {v} vs {vg}");
            assert!((d - dg).abs() < 1e-8, "x={x}: {d} vs {dg}");
        }
    }

    #[test]
    fn smoothing_constants_is_identity() {
        let br = Branch::affine(0.0, 0.5, 2.0, 0.0).unwrap();
        let sm = FunctionSmoother::new(0.1).unwrap();
        assert_eq!(WeightSpec::constant(0.25).smoothed(&br, &sm, 0.01), (0.25, 0.0));
        assert_eq!(WeightSpec::inverse_derivative().smoothed(&br, &sm, 0.3), (0.5, 0.0));
    }

    #[test]
    fn weierstrass_sweep_rates() {
        let eps: Vec<f64> = (4..=10).map(|m| 0.5f64.powi(m)).collect();
        let sw = mollify_sweep(&BranchedMap::doubling(), &WeightSpec::weierstrass(), &eps, 1 << 12).unwrap();
        assert!((0.4..=0.6).contains(&sw.error_slope), "{sw:?}");
        assert!((-0.6..=-0.4).contains(&sw.derivative_slope), "{sw:?}");
    }
}
