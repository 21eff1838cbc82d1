//! Seeded random densities and observables for ensembles and probes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::measures::{GridDensity, GridFunction};
use crate::{Error, Result};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Piecewise-constant density with `pieces` random breakpoints and values in
/// `[-1, 1]`.
pub fn random_step_density<R: Rng>(cells: usize, pieces: usize, rng: &mut R) -> Result<GridDensity> {
    if cells == 0 || pieces == 0 {
        return Err(Error::Domain("need at least one cell and one piece".into()));
    }
    let mut cuts: Vec<usize> = (1..pieces).map(|_| rng.random_range(1..cells.max(2))).collect();
    cuts.push(cells);
    cuts.sort_unstable();
    let mut values = Vec::with_capacity(cells);
    let mut start = 0;
    for c in cuts {
        let v: f64 = rng.random_range(-1.0..=1.0);
        values.extend(std::iter::repeat_n(v, c.saturating_sub(start)));
        start = start.max(c);
    }
    GridDensity::new(values)
}

/// A BV density: a random step function plus a smooth trigonometric part.
pub fn random_bv_density<R: Rng>(cells: usize, rng: &mut R) -> Result<GridDensity> {
    let pieces = rng.random_range(1..=8);
    let steps = random_step_density(cells, pieces, rng)?;
    let freq: f64 = rng.random_range(1.0..6.0);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let amp: f64 = rng.random_range(0.0..1.0);
    let offset: f64 = rng.random_range(-0.5..1.5);
    let smooth = GridDensity::from_fn(cells, |x| offset + amp * (freq * std::f64::consts::TAU * x + phase).sin())?;
    steps.combine(1.0, &smooth, 1.0)
}

pub fn bv_ensemble(cells: usize, size: usize, seed: u64) -> Result<Vec<GridDensity>> {
    let mut r = rng(seed);
    (0..size).map(|_| random_bv_density(cells, &mut r)).collect()
}

/// `a |x - x0|^-gamma` (cell averages) plus a bounded random step, with
/// `gamma < 0.9 / p` so the result lies in `L^p`.
pub fn random_lp_observable<R: Rng>(cells: usize, p: f64, rng: &mut R) -> Result<GridFunction> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("exponent p must be >= 1, got {p}")));
    }
    let gamma: f64 = rng.random_range(0.05..0.9) / p;
    let x0: f64 = rng.random_range(0.05..0.95);
    let a: f64 = rng.random_range(0.2..3.0);
    let steps = random_step_density(cells, rng.random_range(1..=6), rng)?;
    let n = cells as f64;
    // exact cell averages of |x - x0|^-gamma
    let prim = |x: f64| {
        let s = x - x0;
        s.signum() * s.abs().powf(1.0 - gamma) / (1.0 - gamma)
    };
    let values = (0..cells)
        .map(|i| {
            let (u, v) = (i as f64 / n, (i + 1) as f64 / n);
            a * n * (prim(v) - prim(u)) + steps.values()[i]
        })
        .collect();
    GridFunction::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = bv_ensemble(64, 5, 9).unwrap();
        let b = bv_ensemble(64, 5, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, bv_ensemble(64, 5, 10).unwrap());
    }

    #[test]
    fn step_density_has_bounded_pieces() {
        let mut r = rng(4);
        for _ in 0..50 {
            let d = random_step_density(100, 5, &mut r).unwrap();
            let jumps = d.values().windows(2).filter(|w| w[0] != w[1]).count();
            assert!(jumps <= 4);
            assert!(d.values().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn lp_observable_is_finite() {
        let mut r = rng(1);
        let g = random_lp_observable(256, 2.0, &mut r).unwrap();
        assert!(g.values().iter().all(|v| v.is_finite()));
    }
}
