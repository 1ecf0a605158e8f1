//! Radial discretization of the hyperbolic plane: cell-centered grids with
//! `sinh r dr` quadrature, per-mode Laplacians in flux form, and dyadic
//! spatial annuli.

use num_complex::Complex64;

use crate::band::SymTridiag;
use crate::error::{Error, Result};

/// Angular Fourier mode: fields of the form `f(r) e^{i m theta}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeIndex(pub i32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScheme {
    Uniform,
    /// Node spacing proportional to `min(r, 1)` with a floor near the origin,
    /// so steep profiles concentrated at small `r` stay resolved.
    Graded {
        /// Spacing floor at the origin relative to the unit scale.
        epsilon_milli: u32,
    },
}

impl GridScheme {
    pub fn graded_default() -> Self {
        GridScheme::Graded { epsilon_milli: 20 }
    }
}

/// Truncated, sampled polar domain of the hyperbolic plane.
///
/// Nodes are cell centers of a partition `0 = e_0 < e_1 < ... < e_n = r_max`,
/// so `r_0 > 0` and the coordinate singularity is never sampled. Weights
/// approximate the area measure per node (`w_i ~ sinh(r_i) dr_i`); the `2 pi`
/// angular factor is applied by the inner products, not stored here.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub r_max: f64,
    pub n: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Cell edges, length `n + 1`, with `edges[0] = 0` and `edges[n] = r_max`.
    pub edges: Vec<f64>,
    pub scheme: GridScheme,
}

pub fn build_grid(r_max: f64, n: usize, scheme: GridScheme) -> Result<RadialGrid> {
    if !(r_max > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "r_max must be positive, got {r_max}"
        )));
    }
    if n < 16 {
        return Err(Error::InvalidGrid(format!(
            "need at least 16 nodes, got {n}"
        )));
    }
    let edges: Vec<f64> = match scheme {
        GridScheme::Uniform => {
            let h = r_max / n as f64;
            (0..=n).map(|j| j as f64 * h).collect()
        }
        GridScheme::Graded { epsilon_milli } => {
            let eps = epsilon_milli as f64 * 1e-3;
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidGrid(format!(
                    "graded spacing floor must lie in (0, 1000) milli, got {epsilon_milli}"
                )));
            }
            // Arclength coordinate xi with dr/dxi = min(sqrt(eps^2 + r^2), 1):
            // r = eps sinh(xi) up to r1 = sqrt(1 - eps^2), linear afterwards.
            let r1 = (1.0 - eps * eps).sqrt().min(r_max);
            let xi1 = (r1 / eps).asinh();
            let xi_max = if r_max > r1 {
                xi1 + (r_max - r1)
            } else {
                (r_max / eps).asinh()
            };
            (0..=n)
                .map(|j| {
                    let xi = xi_max * j as f64 / n as f64;
                    if xi <= xi1 {
                        eps * xi.sinh()
                    } else {
                        r1 + (xi - xi1)
                    }
                })
                .collect()
        }
    };
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for j in 0..n {
        let r = 0.5 * (edges[j] + edges[j + 1]);
        let dr = edges[j + 1] - edges[j];
        nodes.push(r);
        weights.push(r.sinh() * dr);
    }
    // Exact edge values: clamp the last edge to r_max against round-off.
    let grid = RadialGrid {
        r_max,
        n,
        nodes,
        weights,
        edges,
        scheme,
    };
    debug_assert!(grid.nodes.windows(2).all(|w| w[0] < w[1]));
    Ok(grid)
}

impl RadialGrid {
    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    /// Weighted inner product `2 pi sum w_i f_i conj(g_i)` of one angular mode.
    pub fn l2_inner(&self, f: &[Complex64], g: &[Complex64]) -> Result<Complex64> {
        self.check_len(f.len())?;
        self.check_len(g.len())?;
        let mut acc = Complex64::default();
        for i in 0..self.n {
            acc += f[i] * g[i].conj() * self.weights[i];
        }
        Ok(acc * std::f64::consts::TAU)
    }

    pub fn l2_inner_real(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f.len())?;
        self.check_len(g.len())?;
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += f[i] * g[i] * self.weights[i];
        }
        Ok(acc * std::f64::consts::TAU)
    }

    /// `L^p` norm of a mode sample; `p = f64::INFINITY` returns `max |f_i|`.
    pub fn lp_norm(&self, f: &[Complex64], p: f64) -> Result<f64> {
        self.check_len(f.len())?;
        if p == f64::INFINITY {
            return Ok(f.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        if !(1.0..f64::INFINITY).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "p must be in [1, inf], got {p}"
            )));
        }
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += f[i].norm().powf(p) * self.weights[i];
        }
        Ok((acc * std::f64::consts::TAU).powf(1.0 / p))
    }

    pub fn l2_norm(&self, f: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += f[i].norm_sqr() * self.weights[i];
        }
        (acc * std::f64::consts::TAU).sqrt()
    }

    pub fn l2_norm_real(&self, f: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            acc += f[i] * f[i] * self.weights[i];
        }
        (acc * std::f64::consts::TAU).sqrt()
    }

    /// Total measure `sum w_i`; converges to `cosh(r_max) - 1`.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// First derivative of a sampled function, second order on smooth grids,
    /// one-sided at the two boundary nodes.
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        derivative_on(&self.nodes, f)
    }

    pub fn derivative_complex(&self, f: &[Complex64]) -> Vec<Complex64> {
        let re: Vec<f64> = f.iter().map(|z| z.re).collect();
        let im: Vec<f64> = f.iter().map(|z| z.im).collect();
        let dre = self.derivative(&re);
        let dim = self.derivative(&im);
        dre.into_iter()
            .zip(dim)
            .map(|(a, b)| Complex64::new(a, b))
            .collect()
    }
}

pub fn derivative_on(nodes: &[f64], f: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    assert_eq!(f.len(), n);
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let hm = nodes[i] - nodes[i - 1];
        let hp = nodes[i + 1] - nodes[i];
        out[i] = -hp / (hm * (hm + hp)) * f[i - 1]
            + (hp - hm) / (hm * hp) * f[i]
            + hm / (hp * (hm + hp)) * f[i + 1];
    }
    if n >= 3 {
        let h1 = nodes[1] - nodes[0];
        let h2 = nodes[2] - nodes[1];
        out[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1]
            - h1 / (h2 * (h1 + h2)) * f[2];
        let g1 = nodes[n - 1] - nodes[n - 2];
        let g2 = nodes[n - 2] - nodes[n - 3];
        out[n - 1] = (2.0 * g1 + g2) / (g1 * (g1 + g2)) * f[n - 1]
            - (g1 + g2) / (g1 * g2) * f[n - 2]
            + g1 / (g2 * (g1 + g2)) * f[n - 3];
    }
    out
}

/// Banded radial operator stored through its symmetric quadratic form:
/// the action is `f -> W^{-1} T f`, which is self-adjoint in the weighted
/// inner product by construction.
#[derive(Debug, Clone)]
pub struct RadialOperator {
    pub form: SymTridiag,
}

impl RadialOperator {
    pub fn apply(&self, grid: &RadialGrid, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; grid.n];
        self.form.matvec(f, &mut out);
        for i in 0..grid.n {
            out[i] /= grid.weights[i];
        }
        out
    }

    pub fn apply_complex(&self, grid: &RadialGrid, f: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); grid.n];
        self.form.matvec_complex(f, &mut out);
        for i in 0..grid.n {
            out[i] /= grid.weights[i];
        }
        out
    }

    /// `2 pi (T f, f)`: the quadratic form `<Op f, f>` in the weighted space.
    pub fn quadratic_form(&self, f: &[Complex64]) -> f64 {
        let mut tf = vec![Complex64::default(); f.len()];
        self.form.matvec_complex(f, &mut tf);
        let acc: f64 = tf.iter().zip(f).map(|(a, b)| (a * b.conj()).re).sum();
        acc * std::f64::consts::TAU
    }
}

/// Flux-form discretization of `-Delta_m` on the grid: exactly symmetric in
/// the weighted inner product, natural (zero-flux) condition at the origin
/// edge where `sinh(0) = 0`, homogeneous Dirichlet at `r_max`. The angular
/// mode enters through the `m^2 / sinh^2 r` potential, which enforces the
/// `f ~ r^{|m|}` regularity at the origin.
pub fn mode_laplacian(grid: &RadialGrid, m: ModeIndex) -> RadialOperator {
    let msq = (m.0 as f64) * (m.0 as f64);
    neg_laplacian_with_potential(grid, move |r: f64| msq / (r.sinh() * r.sinh()))
}

/// Flux-form `-Delta`-type operator with an arbitrary radial potential.
pub fn neg_laplacian_with_potential(
    grid: &RadialGrid,
    potential: impl Fn(f64) -> f64,
) -> RadialOperator {
    let n = grid.n;
    let mut form = SymTridiag::zeros(n);
    // Interior edge conductances sinh(e_j) / (r_j - r_{j-1}).
    for j in 1..n {
        let c = grid.edges[j].sinh() / (grid.nodes[j] - grid.nodes[j - 1]);
        form.diag[j - 1] += c;
        form.diag[j] += c;
        form.off[j - 1] = -c;
    }
    // Origin edge: sinh(0) = 0, no flux. Dirichlet wall at r_max.
    let c_wall = grid.edges[n].sinh() / (grid.edges[n] - grid.nodes[n - 1]);
    form.diag[n - 1] += c_wall;
    for i in 0..n {
        form.diag[i] += potential(grid.nodes[i]) * grid.weights[i];
    }
    RadialOperator { form }
}

/// Dyadic spatial annuli `A_l = { 2^l <= r <= 2^{l+1} }` as node index
/// ranges, plus the ball/complement ranges used by the local smoothing norms.
#[derive(Debug, Clone)]
pub struct AnnulusDecomposition {
    nodes: Vec<f64>,
    pub l_min: i32,
    pub l_max: i32,
}

impl AnnulusDecomposition {
    pub fn new(grid: &RadialGrid) -> Self {
        let l_min = grid.nodes[0].log2().floor() as i32;
        let l_max = grid.r_max.log2().ceil() as i32;
        AnnulusDecomposition {
            nodes: grid.nodes.clone(),
            l_min,
            l_max,
        }
    }

    fn first_at_or_above(&self, r: f64) -> usize {
        self.nodes.partition_point(|x| *x < r)
    }

    /// Node index range of the shell `A_l`.
    pub fn shell(&self, l: i32) -> std::ops::Range<usize> {
        let lo = self.first_at_or_above(2f64.powi(l));
        let hi = self.first_at_or_above(2f64.powi(l + 1));
        lo..hi
    }

    /// Node index range of the ball `A_{<= l}` (`r <= 2^l`).
    pub fn ball(&self, l: i32) -> std::ops::Range<usize> {
        0..self.first_at_or_above(2f64.powi(l))
    }

    /// Node index range of `A_{>= l}` (`r >= 2^l`).
    pub fn exterior(&self, l: i32) -> std::ops::Range<usize> {
        self.first_at_or_above(2f64.powi(l))..self.nodes.len()
    }

    /// Dyadic frequency index of a heat time: `k_sigma = floor(log2(sigma^{-1/2}))`.
    pub fn k_sigma(sigma: f64) -> i32 {
        (-0.5 * sigma.log2()).floor() as i32
    }
}
