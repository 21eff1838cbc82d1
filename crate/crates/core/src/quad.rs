//! Gauss–Legendre rules and geometric refinement toward singular points.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on the Legendre
    /// polynomial, starting from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]` with a single panel.
    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Composite rule with `panels` equal panels on `[a, b]`.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: F,
    ) -> f64 {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + h * p as f64;
                let hi = if p + 1 == panels { b } else { lo + h };
                self.integrate(lo, hi, &mut f)
            })
            .sum()
    }

    /// Nodes mapped to `[a, b]` together with their scaled weights.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Splits `[a, b]` into pieces that shrink geometrically (factor 2) toward the
/// endpoints flagged in `toward_a` / `toward_b`. The pieces are returned in
/// increasing order and cover `[a, b]` exactly.
pub fn geometric_pieces(a: f64, b: f64, toward_a: bool, toward_b: bool, depth: usize) -> Vec<(f64, f64)> {
    if !(b > a) {
        return Vec::new();
    }
    match (toward_a, toward_b) {
        (false, false) => vec![(a, b)],
        (true, false) => {
            let mut out = Vec::with_capacity(depth + 1);
            let len = b - a;
            let mut hi = b;
            for r in 1..=depth {
                let lo = a + len * 0.5f64.powi(r as i32);
                out.push((lo, hi));
                hi = lo;
            }
            out.push((a, hi));
            out.reverse();
            out
        }
        (false, true) => {
            let len = b - a;
            let mut out = Vec::with_capacity(depth + 1);
            let mut lo = a;
            for r in 1..=depth {
                let hi = b - len * 0.5f64.powi(r as i32);
                out.push((lo, hi));
                lo = hi;
            }
            out.push((lo, b));
            out
        }
        (true, true) => {
            let mid = 0.5 * (a + b);
            let mut out = geometric_pieces(a, mid, true, false, depth);
            out.extend(geometric_pieces(mid, b, false, true, depth));
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in 1..=12 {
            let gl = GaussLegendre::new(n);
            for k in 0..(2 * n) {
                let got = gl.integrate(0.0, 1.0, |x| x.powi(k as i32));
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((got - exact).abs() < 1e-13, "n={n} k={k}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let gl = GaussLegendre::new(8);
        let s: f64 = gl.mapped(-0.25, 0.5).map(|(_, w)| w).sum();
        assert!((s - 0.75).abs() < 1e-15);
    }

    #[test]
    fn geometric_pieces_cover_interval() {
        let pieces = geometric_pieces(0.25, 0.75, true, true, 10);
        assert_eq!(pieces.first().unwrap().0, 0.25);
        assert_eq!(pieces.last().unwrap().1, 0.75);
        for w in pieces.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        let total: f64 = pieces.iter().map(|(a, b)| b - a).sum();
        assert!((total - 0.5).abs() < 1e-15);
    }

    #[test]
    fn refinement_integrates_inverse_sqrt() {
        let gl = GaussLegendre::new(6);
        let total: f64 = geometric_pieces(0.0, 1.0, true, false, 40)
            .into_iter()
            .map(|(a, b)| gl.integrate(a, b, |x| x.powf(-0.5)))
            .sum();
        assert!((total - 2.0).abs() < 1e-5, "{total}");
    }
}
