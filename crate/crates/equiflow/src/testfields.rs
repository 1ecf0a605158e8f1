//! Deterministic generators of smooth test fields: random superpositions of
//! Gaussian bumps supported away from the origin and the truncation wall.
//! Used by the functional-inequality harness and the verification suites.

use num_complex::Complex64;
use rand::rngs::ChaCha8Rng;
use rand::RngExt;
use rand::SeedableRng;

use crate::geometry::RadialGrid;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth real bump field: a sum of Gaussians with centers in
/// `[lo, hi] * r_max` and widths well separated from both boundaries.
pub fn smooth_real(grid: &RadialGrid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec<f64> {
    let n_bumps = 6;
    // Widths capped so the Gaussian tails at both window ends are below
    // round-off relative to the bump height.
    let span = (hi - lo) * grid.r_max;
    let w_hi = (span / 16.0).clamp(0.05, 0.6);
    let mut centers = Vec::with_capacity(n_bumps);
    for _ in 0..n_bumps {
        centers.push((
            rng.random_range(lo * grid.r_max..hi * grid.r_max),
            rng.random_range(0.5 * w_hi..w_hi),
            rng.random_range(-1.0..1.0),
        ));
    }
    grid.nodes
        .iter()
        .map(|r| {
            centers
                .iter()
                .map(|(c, w, a)| a * (-(r - c) * (r - c) / (2.0 * w * w)).exp())
                .sum()
        })
        .collect()
}

pub fn smooth_complex(grid: &RadialGrid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec<Complex64> {
    let re = smooth_real(grid, rng, lo, hi);
    let im = smooth_real(grid, rng, lo, hi);
    re.into_iter()
        .zip(im)
        .map(|(a, b)| Complex64::new(a, b))
        .collect()
}

/// Random superposition of Gaussians with absolute center and width ranges.
pub fn bumps_in(
    grid: &RadialGrid,
    rng: &mut ChaCha8Rng,
    r_lo: f64,
    r_hi: f64,
    w_lo: f64,
    w_hi: f64,
) -> Vec<f64> {
    let n_bumps = 6;
    let mut centers = Vec::with_capacity(n_bumps);
    for _ in 0..n_bumps {
        centers.push((
            rng.random_range(r_lo..r_hi),
            rng.random_range(w_lo..w_hi),
            rng.random_range(-1.0..1.0),
        ));
    }
    grid.nodes
        .iter()
        .map(|r| {
            centers
                .iter()
                .map(|(c, w, a)| a * (-(r - c) * (r - c) / (2.0 * w * w)).exp())
                .sum()
        })
        .collect()
}

pub fn bumps_in_complex(
    grid: &RadialGrid,
    rng: &mut ChaCha8Rng,
    r_lo: f64,
    r_hi: f64,
    w_lo: f64,
    w_hi: f64,
) -> Vec<Complex64> {
    let re = bumps_in(grid, rng, r_lo, r_hi, w_lo, w_hi);
    let im = bumps_in(grid, rng, r_lo, r_hi, w_lo, w_hi);
    re.into_iter()
        .zip(im)
        .map(|(a, b)| Complex64::new(a, b))
        .collect()
}

/// Default support window `[r_max/10, r_max/2]`, away from the origin and
/// from the Dirichlet wall.
pub fn bump_complex(grid: &RadialGrid, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    smooth_complex(grid, rng, 0.1, 0.5)
}

pub fn bump_real(grid: &RadialGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    smooth_real(grid, rng, 0.1, 0.5)
}

/// Single deterministic bump profile for perturbation construction.
pub fn gaussian_bump(grid: &RadialGrid, center: f64, width: f64) -> Vec<f64> {
    grid.nodes
        .iter()
        .map(|r| (-(r - center) * (r - center) / (2.0 * width * width)).exp())
        .collect()
}

/// Genuinely compactly supported smooth bump: `exp(1 - 1/(1 - x^2))` on
/// `|x| < 1` with `x = (r - center) / half_width`, identically zero outside.
/// All derivatives exist but grow steeply toward the support edge; prefer
/// `regular_bump` where refinement studies depend on moderate derivative
/// constants.
pub fn compact_bump(grid: &RadialGrid, center: f64, half_width: f64) -> Vec<f64> {
    grid.nodes
        .iter()
        .map(|r| {
            let x = (r - center) / half_width;
            if x.abs() < 1.0 {
                (1.0 - 1.0 / (1.0 - x * x)).exp()
            } else {
                0.0
            }
        })
        .collect()
}

/// Gaussian bump with a smooth `tanh^2(r)` factor: analytic with moderate
/// derivatives, vanishing quadratically at the origin (so the stiff origin
/// cell of mode-1 operators carries no data) and exponentially small at the
/// wall.
pub fn regular_bump(grid: &RadialGrid, center: f64, width: f64) -> Vec<f64> {
    grid.nodes
        .iter()
        .map(|r| {
            let t = r.tanh();
            t * t * (-(r - center) * (r - center) / (2.0 * width * width)).exp()
        })
        .collect()
}

/// Adaptive Simpson quadrature, used as an independent oracle against the
/// grid quadrature and the closed-form energies.
pub fn simpson_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if depth > 50 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, left, tol / 2.0, depth + 1) + rec(f, m, b, right, tol / 2.0, depth + 1)
        }
    }
    rec(f, a, b, simpson(f, a, b), tol, 0)
}
