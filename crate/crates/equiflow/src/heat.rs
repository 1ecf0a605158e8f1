//! Linear heat semigroups for `-Delta_m` and for the linearized operator,
//! heat-flow Littlewood-Paley projections, and decay-rate fitting.

use num_complex::Complex64;

use crate::band::{SymTridiag, TridiagLu};
use crate::error::{Error, Result};
use crate::geometry::{mode_laplacian, ModeIndex, RadialGrid};
use crate::linop::ModeOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatScheme {
    /// Second order, non-smoothing; started with two backward-Euler substeps
    /// to damp rough data.
    CrankNicolson,
    /// First order, unconditionally monotone (discrete maximum principle).
    BackwardEuler,
}

/// Implicit stepper for `d/ds f = -G f` where `G` is a weighted-symmetric
/// banded generator (`-Delta_m` or a linearized operator `H_m`).
/// Unconditionally stable; for `G >= 0` the weighted L2 norm is nonincreasing.
#[derive(Debug, Clone)]
pub struct SemigroupStepper {
    pub grid: RadialGrid,
    /// Quadratic-form matrix of the generator: `G = W^{-1} T`.
    pub form: SymTridiag,
    pub scheme: HeatScheme,
    pub substeps: usize,
}

impl SemigroupStepper {
    /// Semigroup `e^{s Delta_m}`.
    pub fn laplacian(grid: &RadialGrid, m: ModeIndex, scheme: HeatScheme) -> Self {
        let op = mode_laplacian(grid, m);
        SemigroupStepper {
            grid: grid.clone(),
            form: op.form,
            scheme,
            substeps: 64,
        }
    }

    /// Semigroup `e^{-s H_m}` for a linearized mode operator.
    pub fn linearized(grid: &RadialGrid, op: &ModeOperator, scheme: HeatScheme) -> Self {
        SemigroupStepper {
            grid: grid.clone(),
            form: op.h.form.clone(),
            scheme,
            substeps: 64,
        }
    }

    /// Applies the generator `G = W^{-1} T` (so `-Delta_m` for the Laplacian
    /// stepper).
    pub fn generator_apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n;
        let mut out = vec![Complex64::default(); n];
        self.form.matvec_complex(f, &mut out);
        for i in 0..n {
            out[i] /= self.grid.weights[i];
        }
        out
    }

    /// One implicit substep of size `ds`: `(W + c T) f_new = (W - (ds - c) T) f_old`
    /// with `c = ds` (backward Euler) or `c = ds/2` (Crank-Nicolson).
    fn substep(&self, f: &mut [Complex64], ds: f64, backward_euler: bool) -> Result<()> {
        let n = self.grid.n;
        let c = if backward_euler { ds } else { 0.5 * ds };
        let sub: Vec<f64> = self.form.off.iter().map(|o| c * o).collect();
        let diag: Vec<f64> = self
            .form
            .diag
            .iter()
            .zip(&self.grid.weights)
            .map(|(t, w)| w + c * t)
            .collect();
        let lu = TridiagLu::factor(&sub, &diag, &sub)
            .map_err(|_| Error::StepRejected("heat substep factorization failed".into()))?;
        let e = ds - c;
        let mut tf = vec![Complex64::default(); n];
        self.form.matvec_complex(f, &mut tf);
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for i in 0..n {
            let rhs = f[i] * self.grid.weights[i] - tf[i] * e;
            re[i] = rhs.re;
            im[i] = rhs.im;
        }
        lu.solve_in_place(&mut re);
        lu.solve_in_place(&mut im);
        for i in 0..n {
            f[i] = Complex64::new(re[i], im[i]);
        }
        Ok(())
    }

    /// Approximates `e^{-s G} f`: a doubling ramp of tiny substeps first
    /// (two backward-Euler startup steps emulate parabolic smoothing of
    /// rough data), then uniform Crank-Nicolson steps capped at `s / n`,
    /// so the dominant spectral band at heat time `s` is always resolved.
    pub fn heat_apply(&self, f: &[Complex64], s: f64) -> Result<Vec<Complex64>> {
        if s < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "heat time must be >= 0, got {s}"
            )));
        }
        let mut out = f.to_vec();
        if s == 0.0 {
            return Ok(out);
        }
        let n_half = (self.substeps / 2).max(2) as i32;
        // Doubling ramp: total s/2 over n_half steps, smallest ~ s 2^{-n_half}.
        let ramp_total = 2f64.powi(n_half) - 1.0;
        for j in 0..n_half {
            let ds = 0.5 * s * 2f64.powi(j) / ramp_total;
            let be = matches!(self.scheme, HeatScheme::BackwardEuler) || j < 2;
            self.substep(&mut out, ds, be)?;
        }
        // Uniform tail: the remaining s/2 in n_half equal steps.
        let ds = 0.5 * s / n_half as f64;
        for _ in 0..n_half {
            let be = matches!(self.scheme, HeatScheme::BackwardEuler);
            self.substep(&mut out, ds, be)?;
        }
        Ok(out)
    }

    /// Continues an already-heated state from `s_from` to `s_to` with a fixed
    /// number of Crank-Nicolson substeps. Used to walk a sigma-grid
    /// incrementally.
    pub fn heat_continue(
        &self,
        f: &mut [Complex64],
        s_from: f64,
        s_to: f64,
        substeps: usize,
    ) -> Result<()> {
        let ds = (s_to - s_from) / substeps as f64;
        if ds < 0.0 {
            return Err(Error::InvalidParameter(
                "heat_continue requires s_to >= s_from".into(),
            ));
        }
        for _ in 0..substeps {
            let be = matches!(self.scheme, HeatScheme::BackwardEuler);
            self.substep(f, ds, be)?;
        }
        Ok(())
    }

    /// Littlewood-Paley pair at heat time `sigma`:
    /// `P_{>= sigma} f = e^{sigma Delta} f` and
    /// `P_sigma f = sigma (-Delta) e^{sigma Delta} f`.
    pub fn lp_project(
        &self,
        f: &[Complex64],
        sigma: f64,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        let p_geq = self.heat_apply(f, sigma)?;
        let mut p_at = self.generator_apply(&p_geq);
        for v in p_at.iter_mut() {
            *v *= sigma;
        }
        Ok((p_geq, p_at))
    }
}

/// Heated copies of one field along a sigma-grid, computed incrementally.
#[derive(Debug, Clone)]
pub struct LpDecomposition {
    pub sigmas: Vec<f64>,
    pub p_geq: Vec<Vec<Complex64>>,
    pub p_at: Vec<Vec<Complex64>>,
}

pub fn lp_decompose(
    stepper: &SemigroupStepper,
    f: &[Complex64],
    sigma_grid: &[f64],
) -> Result<LpDecomposition> {
    let mut p_geq = Vec::with_capacity(sigma_grid.len());
    let mut p_at = Vec::with_capacity(sigma_grid.len());
    let mut state = stepper.heat_apply(f, sigma_grid[0])?;
    for (j, sigma) in sigma_grid.iter().enumerate() {
        if j > 0 {
            let mut next = state.clone();
            stepper.heat_continue(&mut next, sigma_grid[j - 1], *sigma, 4)?;
            state = next;
        }
        let mut at = stepper.generator_apply(&state);
        for v in at.iter_mut() {
            *v *= *sigma;
        }
        p_geq.push(state.clone());
        p_at.push(at);
    }
    Ok(LpDecomposition {
        sigmas: sigma_grid.to_vec(),
        p_geq,
        p_at,
    })
}

/// Log-uniform heat-time grid with ratio `2^{1/per_octave}`.
pub fn geometric_s_grid(s_min: f64, s_max: f64, per_octave: u32) -> Vec<f64> {
    let q = 2f64.powf(1.0 / per_octave as f64);
    let mut out = vec![s_min];
    while *out.last().unwrap() < s_max {
        let next = out.last().unwrap() * q;
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Fitted exponential rate: `norm(s) ~ exp(-rate * s)`.
    pub rate: f64,
    pub stderr: f64,
}

/// Least-squares slope of `log norm` against `s`.
pub fn decay_fit(samples: &[(f64, f64)]) -> Result<DecayFit> {
    if samples.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "decay fit needs at least 4 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|(_, v)| !(*v > 0.0)) {
        return Err(Error::InvalidParameter(
            "decay fit requires positive norms".into(),
        ));
    }
    let n = samples.len() as f64;
    let sx: f64 = samples.iter().map(|(s, _)| s).sum();
    let sy: f64 = samples.iter().map(|(_, v)| v.ln()).sum();
    let xbar = sx / n;
    let ybar = sy / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (s, v) in samples {
        sxx += (s - xbar) * (s - xbar);
        sxy += (s - xbar) * (v.ln() - ybar);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "decay fit requires distinct s values".into(),
        ));
    }
    let slope = sxy / sxx;
    let mut ss_res = 0.0;
    for (s, v) in samples {
        let pred = ybar + slope * (s - xbar);
        let r = v.ln() - pred;
        ss_res += r * r;
    }
    let dof = (samples.len() - 2).max(1) as f64;
    let stderr = (ss_res / dof / sxx).sqrt();
    Ok(DecayFit {
        rate: -slope,
        stderr,
    })
}
