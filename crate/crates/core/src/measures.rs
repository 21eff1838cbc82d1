//! Measures with piecewise-constant densities on a uniform grid of `(0,1)`.
//!
//! A [`GridDensity`] with `N` cells represents `mu(eta) = sum_i v_i * int_{cell i} eta`,
//! so its total variation is the L1 norm of the density and its distributional
//! derivative is the sum of the interior jumps. Jumps at 0 and 1 never enter:
//! test functions are compactly supported inside the open interval.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::quad::{geometric_pieces, GaussLegendre};
use crate::{Error, Result};

/// Piecewise-constant density; cell `i` is `(i/N, (i+1)/N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_cells(&values)?;
        Ok(Self { values })
    }

    pub fn constant(cells: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; cells])
    }

    pub fn zeros(cells: usize) -> Result<Self> {
        Self::constant(cells, 0.0)
    }

    /// Samples `f` at the cell midpoints.
    pub fn from_fn<F: Fn(f64) -> f64>(cells: usize, f: F) -> Result<Self> {
        Self::new(midpoints(cells).map(f).collect())
    }

    /// The normalised cell indicator `N * 1_{cell i}` (unit mass).
    pub fn cell_indicator(cells: usize, i: usize) -> Result<Self> {
        if i >= cells {
            return Err(Error::Domain(format!("cell {i} out of range for {cells} cells")));
        }
        let mut v = vec![0.0; cells];
        v[i] = cells as f64;
        Self::new(v)
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Signed total mass `mu(1)`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.cells() as f64
    }

    /// Mass in each cell, i.e. the coefficients in the basis of normalised
    /// cell indicators.
    pub fn cell_masses(&self) -> Vec<f64> {
        let n = self.cells() as f64;
        self.values.iter().map(|v| v / n).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| c * v).collect() }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.cells() != other.cells() {
            return Err(Error::Shape { left: self.cells(), right: other.cells() });
        }
        Self::new(self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    /// Exact refinement: each cell is split into `factor` equal cells with the
    /// same density value.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        Self::new(refine_values(&self.values, factor)?)
    }

    pub fn tv_norm(&self) -> f64 {
        tv_norm(self)
    }

    pub fn bv_norm(&self) -> f64 {
        bv_norm(self)
    }
}

/// Observable sampled at cell midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_cells(&values)?;
        Ok(Self { values })
    }

    pub fn constant(cells: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; cells])
    }

    pub fn from_fn<F: Fn(f64) -> f64>(cells: usize, f: F) -> Result<Self> {
        Self::new(midpoints(cells).map(f).collect())
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn refine(&self, factor: usize) -> Result<Self> {
        Self::new(refine_values(&self.values, factor)?)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| c * v).collect() }
    }
}

fn validate_cells(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain("grid needs at least one cell".into()));
    }
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value {v} in cell {i}")));
    }
    Ok(())
}

fn refine_values(values: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::Domain("refinement factor must be positive".into()));
    }
    Ok(values.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect())
}

/// Cell midpoints of the uniform `cells`-grid.
pub fn midpoints(cells: usize) -> impl Iterator<Item = f64> {
    let n = cells as f64;
    (0..cells).map(move |i| (i as f64 + 0.5) / n)
}

/// Total variation of the measure, i.e. the L1 norm of its density.
pub fn tv_norm(d: &GridDensity) -> f64 {
    d.values.iter().map(|v| v.abs()).sum::<f64>() / d.cells() as f64
}

/// `|D mu|_TV + |mu|_TV`, with `D mu` the sum of interior jumps.
pub fn bv_norm(d: &GridDensity) -> f64 {
    interior_variation(&d.values) + tv_norm(d)
}

/// Sum of `|v_{i+1} - v_i|` over interior cell boundaries.
pub fn interior_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// `(sum_i |v_i|^p / N)^(1/p)` for `p >= 1`.
pub fn lp_norm(g: &GridFunction, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let n = g.cells() as f64;
    if p.is_infinite() {
        return Ok(g.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let s: f64 = g.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / n;
    Ok(s.powf(1.0 / p))
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("Lp exponent must be >= 1, got {p}")));
    }
    Ok(())
}

/// Geometric refinement toward declared singular points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub singular_points: Vec<f64>,
    pub depth: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self { singular_points: Vec::new(), depth: 20 }
    }
}

/// Lp norm of a function on `(0,1)` by Gauss–Legendre quadrature on a uniform
/// grid whose cells touching a singular point are refined geometrically.
pub fn lp_norm_fn<F: Fn(f64) -> f64>(f: F, p: f64, cells: usize, refinement: &Refinement) -> Result<f64> {
    check_exponent(p)?;
    if cells == 0 {
        return Err(Error::Domain("quadrature needs at least one cell".into()));
    }
    let gl = GaussLegendre::new(6);
    let n = cells as f64;
    let near = |x: f64| refinement.singular_points.iter().any(|s| (s - x).abs() <= 1e-15);
    let mut total = 0.0;
    for i in 0..cells {
        let a = i as f64 / n;
        let b = (i + 1) as f64 / n;
        let touches = refinement.singular_points.iter().any(|&s| s > a && s < b);
        if touches {
            // split at interior singular points, refine toward each of them
            let mut cuts: Vec<f64> = refinement
                .singular_points
                .iter()
                .copied()
                .filter(|&s| s > a && s < b)
                .collect();
            cuts.sort_by(f64::total_cmp);
            let mut lo = a;
            for s in cuts.into_iter().chain(std::iter::once(b)) {
                for (u, v) in geometric_pieces(lo, s, near(lo), near(s), refinement.depth) {
                    total += gl.integrate(u, v, |x| f(x).abs().powf(p));
                }
                lo = s;
            }
        } else {
            for (u, v) in geometric_pieces(a, b, near(a), near(b), refinement.depth) {
                total += gl.integrate(u, v, |x| f(x).abs().powf(p));
            }
        }
    }
    Ok(total.powf(1.0 / p))
}

/// Raised-cosine mollifier `rho(x) = (1 + cos(pi x)) / 2` on `(-1, 1)`,
/// rescaled as `rho_eps(x) = rho(x / eps) / eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    epsilon: f64,
}

impl Mollifier {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Domain(format!("mollifier scale must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Unscaled profile.
    pub fn profile(x: f64) -> f64 {
        if x.abs() >= 1.0 {
            0.0
        } else {
            0.5 * (1.0 + (PI * x).cos())
        }
    }

    pub fn profile_derivative(x: f64) -> f64 {
        if x.abs() >= 1.0 {
            0.0
        } else {
            -0.5 * PI * (PI * x).sin()
        }
    }

    /// `int_{-inf}^x rho`.
    pub fn profile_cdf(x: f64) -> f64 {
        if x <= -1.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            0.5 * (x + 1.0) + (PI * x).sin() / (2.0 * PI)
        }
    }

    /// Second antiderivative, `int_{-inf}^x cdf`.
    pub fn profile_cdf2(x: f64) -> f64 {
        if x <= -1.0 {
            0.0
        } else if x >= 1.0 {
            x
        } else {
            let c = (0.5 * PI * x).cos();
            0.25 * (x + 1.0) * (x + 1.0) - c * c / (PI * PI)
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        Self::profile(x / self.epsilon) / self.epsilon
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        Self::profile_derivative(x / self.epsilon) / (self.epsilon * self.epsilon)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        Self::profile_cdf(x / self.epsilon)
    }

    pub fn cdf2(&self, x: f64) -> f64 {
        self.epsilon * Self::profile_cdf2(x / self.epsilon)
    }
}

/// Cell-averaged convolution `rho_eps * d~`, where `d~` extends `d` outside
/// `(0,1)` by its boundary cell values. Exact for the piecewise-constant input.
pub fn mollify(d: &GridDensity, eps: f64) -> Result<GridDensity> {
    let moll = Mollifier::new(eps)?;
    let n = d.cells();
    let nf = n as f64;
    let h = 1.0 / nf;
    let reach = ((eps * nf).ceil() as usize + 1).min(n - 1);

    // w[m]: cell-to-cell weight for offset m, from the second antiderivative
    let weights: Vec<f64> = (0..=reach)
        .map(|m| {
            let c = m as f64 * h;
            nf * (moll.cdf2(c + h) - 2.0 * moll.cdf2(c) + moll.cdf2(c - h))
        })
        .collect();

    let v = d.values();
    let (left_value, right_value) = (v[0], v[n - 1]);
    let out = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(n - 1);
            let mut acc = 0.0;
            for (j, vj) in v.iter().enumerate().take(hi + 1).skip(lo) {
                acc += vj * weights[i.abs_diff(j)];
            }
            let x0 = i as f64 / nf;
            let x1 = (i + 1) as f64 / nf;
            if x0 < eps {
                acc += left_value * nf * (h - (moll.cdf2(x1) - moll.cdf2(x0)));
            }
            if x1 > 1.0 - eps {
                acc += right_value * nf * (moll.cdf2(x1 - 1.0) - moll.cdf2(x0 - 1.0));
            }
            acc
        })
        .collect();
    GridDensity::new(out)
}

/// Pointwise mollification of a function living on one branch `(a, b)`,
/// extended by constants outside the branch. Returns `(f_eps(x), f_eps'(x))`.
#[derive(Debug, Clone)]
pub struct FunctionSmoother {
    mollifier: Mollifier,
    panels: usize,
    rule: GaussLegendre,
}

impl FunctionSmoother {
    pub const DEFAULT_PANELS: usize = 64;

    pub fn new(epsilon: f64) -> Result<Self> {
        Self::with_panels(epsilon, Self::DEFAULT_PANELS)
    }

    pub fn with_panels(epsilon: f64, panels: usize) -> Result<Self> {
        if panels == 0 {
            return Err(Error::Domain("smoother needs at least one panel".into()));
        }
        Ok(Self { mollifier: Mollifier::new(epsilon)?, panels, rule: GaussLegendre::new(8) })
    }

    pub fn epsilon(&self) -> f64 {
        self.mollifier.epsilon
    }

    pub fn eval<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, x: f64) -> (f64, f64) {
        let eps = self.mollifier.epsilon;
        let len = b - a;
        let inset = 1e-13 * len;
        let fa = f(a + inset);
        let fb = f(b - inset);

        let mut value = fa * (1.0 - self.mollifier.cdf(x - a)) + fb * self.mollifier.cdf(x - b);
        let mut deriv = -fa * self.mollifier.eval(x - a) + fb * self.mollifier.eval(x - b);

        let lo = (x - eps).max(a);
        let hi = (x + eps).min(b);
        if hi > lo {
            let step = (hi - lo) / self.panels as f64;
            for p in 0..self.panels {
                let u = lo + step * p as f64;
                let v = if p + 1 == self.panels { hi } else { u + step };
                for (y, w) in self.rule.mapped(u, v) {
                    let fy = f(y);
                    value += w * self.mollifier.eval(x - y) * fy;
                    deriv += w * self.mollifier.eval_derivative(x - y) * fy;
                }
            }
        }
        (value, deriv)
    }
}
