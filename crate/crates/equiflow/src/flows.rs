//! Nonlinear equivariant evolutions in the ambient (extrinsic) formulation:
//! the harmonic map heat flow in `s` and the Schroedinger maps flow in `t`,
//! with pointwise constraint projection, plus the Crank-Nicolson propagator
//! for the linear Schroedinger equation of one mode.
//!
//! The 1-equivariant ansatz `u(r, theta) = R_theta v(r)` reduces both flows
//! to the radial slice `v(r)` in R^3: ambient components 1 and 2 feel the
//! mode-1 Laplacian, component 3 the mode-0 Laplacian, and the rotation
//! generator acts as the standard so(2) block.

use num_complex::Complex64;

use crate::band::{solve_complex_sym_tridiag, BlockTridiag3, SymTridiag, TridiagLu};
use crate::error::{Error, Result};
use crate::geometry::{mode_laplacian, ModeIndex, RadialGrid};
use crate::linop::ModeOperator;
use crate::target::{energy, HarmonicProfile, MapSample, TargetGeometry};

/// Ambient unit-vector sample of an equivariant map at angle zero.
#[derive(Debug, Clone)]
pub struct MapState {
    pub t_or_s: f64,
    pub v: Vec<[f64; 3]>,
    pub geom: TargetGeometry,
    /// Value held at the Dirichlet wall (the map's trace at `r_max`).
    pub wall: [f64; 3],
}

impl MapState {
    /// Worst pointwise constraint defect `|v.v -+ 1|`.
    pub fn constraint_defect(&self) -> f64 {
        let c = self.geom.constraint();
        self.v
            .iter()
            .map(|p| (self.geom.dot(p, p) - c).abs())
            .fold(0.0, f64::max)
    }

    pub fn project(&mut self) -> Result<()> {
        for p in self.v.iter_mut() {
            *p = self.geom.project(p)?;
        }
        Ok(())
    }
}

/// Builds the ambient state of a harmonic profile, wall pinned to the
/// profile's trace.
pub fn state_from_profile(
    geom: &TargetGeometry,
    grid: &RadialGrid,
    profile: &HarmonicProfile,
) -> MapState {
    let v = crate::target::profile_to_ambient(geom, &profile.rho);
    let wall = geom.ambient_point(crate::target::profile_value(
        geom,
        profile.lambda,
        grid.r_max,
    ));
    MapState {
        t_or_s: 0.0,
        v,
        geom: *geom,
        wall,
    }
}

/// Tangent-frame pair of the pole-anchored coordinates along a profile:
/// `e1 = d/d rho` of the ambient point and `e2 = J e1` (equals `(0,1,0)`).
pub fn profile_frame(geom: &TargetGeometry, rho: f64) -> ([f64; 3], [f64; 3]) {
    let e1 = [geom.s_prime(rho), 0.0, -geom.tau() * geom.s(rho)];
    let base = geom.ambient_point(rho);
    let e2 = geom.cross(&base, &e1);
    (e1, e2)
}

/// Perturbs a harmonic map by the frame field `a * f(r)`: the mode-1 class in
/// the Coulomb frame, which is exactly the equivariant perturbation class
/// representable on the radial slice.
pub fn perturbed_state(
    geom: &TargetGeometry,
    grid: &RadialGrid,
    profile: &HarmonicProfile,
    f: &[Complex64],
    amplitude: f64,
) -> Result<MapState> {
    if f.len() != grid.n {
        return Err(Error::LengthMismatch {
            expected: grid.n,
            got: f.len(),
        });
    }
    let mut state = state_from_profile(geom, grid, profile);
    for i in 0..grid.n {
        let (e1, e2) = profile_frame(geom, profile.rho[i]);
        let x = [
            amplitude * (f[i].re * e1[0] + f[i].im * e2[0]),
            amplitude * (f[i].re * e1[1] + f[i].im * e2[1]),
            amplitude * (f[i].re * e1[2] + f[i].im * e2[2]),
        ];
        state.v[i] = geom.exp_map(&state.v[i], &x);
    }
    Ok(state)
}

/// Perturbs an arbitrary equivariant base state (for example the relaxed
/// discrete equilibrium) by the frame field `a * f(r)`.
pub fn perturb_around(
    geom: &TargetGeometry,
    grid: &RadialGrid,
    base: &MapState,
    f: &[Complex64],
    amplitude: f64,
) -> Result<MapState> {
    if f.len() != grid.n {
        return Err(Error::LengthMismatch {
            expected: grid.n,
            got: f.len(),
        });
    }
    let rho = crate::target::ambient_to_profile(geom, &base.v);
    let mut state = base.clone();
    for i in 0..grid.n {
        let (e1, e2) = profile_frame(geom, rho[i]);
        let x = [
            amplitude * (f[i].re * e1[0] + f[i].im * e2[0]),
            amplitude * (f[i].re * e1[1] + f[i].im * e2[1]),
            amplitude * (f[i].re * e1[2] + f[i].im * e2[2]),
        ];
        state.v[i] = geom.exp_map(&state.v[i], &x);
    }
    Ok(state)
}

/// Frame components of the difference to the harmonic map:
/// `phi_i = (log_{Q_i} v_i, e1) + i (log_{Q_i} v_i, e2)`.
pub fn frame_components(
    geom: &TargetGeometry,
    profile: &HarmonicProfile,
    state: &MapState,
) -> Vec<Complex64> {
    profile
        .rho
        .iter()
        .zip(&state.v)
        .map(|(rho, v)| {
            let base = geom.ambient_point(*rho);
            let x = geom.log_map(&base, v);
            let (e1, e2) = profile_frame(geom, *rho);
            Complex64::new(geom.dot(&x, &e1), geom.dot(&x, &e2))
        })
        .collect()
}

/// `H^1 + L^infty` distance surrogate between a state and a reference slice,
/// measured on Euclidean coordinate differences.
pub fn distance_surrogate(grid: &RadialGrid, state: &MapState, reference: &[[f64; 3]]) -> f64 {
    let n = grid.n;
    let diff: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            [
                state.v[i][0] - reference[i][0],
                state.v[i][1] - reference[i][1],
                state.v[i][2] - reference[i][2],
            ]
        })
        .collect();
    let comp = |c: usize| -> Vec<f64> { diff.iter().map(|d| d[c]).collect() };
    let (d0, d1, d2) = (comp(0), comp(1), comp(2));
    let (g0, g1, g2) = (
        grid.derivative(&d0),
        grid.derivative(&d1),
        grid.derivative(&d2),
    );
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut linf = 0.0f64;
    for i in 0..n {
        let dsq = d0[i] * d0[i] + d1[i] * d1[i] + d2[i] * d2[i];
        let gsq = g0[i] * g0[i] + g1[i] * g1[i] + g2[i] * g2[i];
        l2 += dsq * grid.weights[i];
        h1 += gsq * grid.weights[i];
        linf = linf.max(dsq.sqrt());
    }
    (std::f64::consts::TAU * l2).sqrt() + (std::f64::consts::TAU * h1).sqrt() + linf
}

/// Fraction of the squared difference mass sitting beyond `r_max / 2`;
/// monitors contamination reflected from the truncation wall.
pub fn outer_mass_fraction(grid: &RadialGrid, state: &MapState, reference: &[[f64; 3]]) -> f64 {
    let mut total = 0.0;
    let mut outer = 0.0;
    for i in 0..grid.n {
        let d = [
            state.v[i][0] - reference[i][0],
            state.v[i][1] - reference[i][1],
            state.v[i][2] - reference[i][2],
        ];
        let dsq = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) * grid.weights[i];
        total += dsq;
        if grid.nodes[i] > 0.5 * grid.r_max {
            outer += dsq;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    /// Constraint defect measured before the projection.
    pub constraint_defect_pre: f64,
    /// Times the step was halved to get the inner iteration to converge.
    pub halvings: u32,
    pub inner_iterations: usize,
}

/// Precomputed machinery for the two equivariant flows on one grid.
#[derive(Debug, Clone)]
pub struct FlowSolver {
    pub grid: RadialGrid,
    pub geom: TargetGeometry,
    /// Quadratic forms of `-Delta_1` (components 1, 2) and `-Delta_0`
    /// (component 3).
    form_planar: SymTridiag,
    form_axial: SymTridiag,
    wall_conductance: f64,
    /// Pre-projection defect above this rejects the step.
    pub defect_limit: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl FlowSolver {
    pub fn new(grid: &RadialGrid, geom: &TargetGeometry) -> Self {
        let n = grid.n;
        let wall_conductance = grid.edges[n].sinh() / (grid.edges[n] - grid.nodes[n - 1]);
        FlowSolver {
            grid: grid.clone(),
            geom: *geom,
            form_planar: mode_laplacian(grid, ModeIndex(1)).form,
            form_axial: mode_laplacian(grid, ModeIndex(0)).form,
            wall_conductance,
            defect_limit: 1e-2,
            inner_tol: 1e-13,
            max_inner: 50,
        }
    }

    fn component_form(&self, c: usize) -> &SymTridiag {
        if c < 2 {
            &self.form_planar
        } else {
            &self.form_axial
        }
    }

    /// Equivariant vector Laplacian `v'' + coth(r) v' + Omega~^2 v / sinh^2 r`
    /// with the wall ghost pinned to `wall`.
    pub fn lap(&self, v: &[[f64; 3]], wall: &[f64; 3]) -> Vec<[f64; 3]> {
        let n = self.grid.n;
        let mut out = vec![[0.0; 3]; n];
        let mut buf_in = vec![0.0; n];
        let mut buf_out = vec![0.0; n];
        for c in 0..3 {
            for i in 0..n {
                buf_in[i] = v[i][c];
            }
            self.component_form(c).matvec(&buf_in, &mut buf_out);
            for i in 0..n {
                out[i][c] = -buf_out[i] / self.grid.weights[i];
            }
            out[n - 1][c] += self.wall_conductance * wall[c] / self.grid.weights[n - 1];
        }
        out
    }

    /// Pointwise quadratic term of the extrinsic heat flow:
    /// `(eta(grad u, grad u) / eta(v, v)) v`, with the gradient energy built
    /// from the same edge differences as the flux Laplacian. On the
    /// constraint set this equals `-(eta(Lap v, v) / eta(v, v)) v` exactly,
    /// so the normal component of `Lap v + N(v)` vanishes identically and
    /// the discrete equilibria are independent of the step size, while the
    /// edge form itself stays nonstiff.
    fn second_fundamental_term(&self, v: &[[f64; 3]], wall: &[f64; 3]) -> Vec<[f64; 3]> {
        let n = self.grid.n;
        let c = self.geom.constraint();
        let edge = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
            let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
            self.geom.dot(&d, &d)
        };
        (0..n)
            .map(|i| {
                let mut ge = 0.0;
                if i > 0 {
                    let cond =
                        self.grid.edges[i].sinh() / (self.grid.nodes[i] - self.grid.nodes[i - 1]);
                    ge += cond * edge(&v[i], &v[i - 1]);
                }
                if i + 1 < n {
                    let cond = self.grid.edges[i + 1].sinh()
                        / (self.grid.nodes[i + 1] - self.grid.nodes[i]);
                    ge += cond * edge(&v[i + 1], &v[i]);
                } else {
                    ge += self.wall_conductance * edge(wall, &v[i]);
                }
                ge /= 2.0 * self.grid.weights[i];
                let sh = self.grid.nodes[i].sinh();
                ge += (v[i][0] * v[i][0] + v[i][1] * v[i][1]) / (sh * sh);
                let f = ge / c;
                [f * v[i][0], f * v[i][1], f * v[i][2]]
            })
            .collect()
    }

    /// One semi-implicit heat flow step: implicit in the linear Laplacian,
    /// explicit in the quadratic term, followed by constraint projection.
    pub fn hmhf_step(&self, state: &mut MapState, ds: f64) -> Result<StepDiagnostics> {
        if !(ds > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "heat flow step must be positive, got {ds}"
            )));
        }
        let n = self.grid.n;
        let nl = self.second_fundamental_term(&state.v, &state.wall);
        let mut new_v = vec![[0.0; 3]; n];
        for c in 0..3 {
            let form = self.component_form(c);
            let sub: Vec<f64> = form.off.iter().map(|o| ds * o).collect();
            let diag: Vec<f64> = form
                .diag
                .iter()
                .zip(&self.grid.weights)
                .map(|(t, w)| w + ds * t)
                .collect();
            let lu = TridiagLu::factor(&sub, &diag, &sub)
                .map_err(|_| Error::StepRejected("heat flow factorization failed".into()))?;
            let mut rhs = vec![0.0; n];
            for i in 0..n {
                rhs[i] = self.grid.weights[i] * (state.v[i][c] + ds * nl[i][c]);
            }
            rhs[n - 1] += ds * self.wall_conductance * state.wall[c];
            lu.solve_in_place(&mut rhs);
            for i in 0..n {
                new_v[i][c] = rhs[i];
            }
        }
        state.v = new_v;
        let defect = state.constraint_defect();
        if defect > self.defect_limit {
            return Err(Error::StepRejected(format!(
                "constraint defect {defect:.3e} before projection exceeds {:.1e}; ds too large",
                self.defect_limit
            )));
        }
        state.project()?;
        state.t_or_s += ds;
        Ok(StepDiagnostics {
            constraint_defect_pre: defect,
            halvings: 0,
            inner_iterations: 0,
        })
    }

    /// One implicit-midpoint heat flow step (second order in `ds`): solves
    /// `m = v + (ds/2)(Lap m + N(m))` by a fixed-point iteration that inverts
    /// the stiff linear part every sweep, then advances `v <- 2m - v` and
    /// projects. Used where the trajectory accuracy in `s` matters (caloric
    /// gauge construction); the basic `hmhf_step` remains the cheap default.
    pub fn hmhf_step_midpoint(&self, state: &mut MapState, ds: f64) -> Result<StepDiagnostics> {
        if !(ds > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "heat flow step must be positive, got {ds}"
            )));
        }
        let n = self.grid.n;
        let half = 0.5 * ds;
        // Pre-factor (W + half T_c) per component.
        let mut lus = Vec::with_capacity(3);
        for c in 0..3 {
            let form = self.component_form(c);
            let sub: Vec<f64> = form.off.iter().map(|o| half * o).collect();
            let diag: Vec<f64> = form
                .diag
                .iter()
                .zip(&self.grid.weights)
                .map(|(t, w)| w + half * t)
                .collect();
            lus.push(
                TridiagLu::factor(&sub, &diag, &sub)
                    .map_err(|_| Error::StepRejected("midpoint factorization failed".into()))?,
            );
        }
        let mut mid = state.v.clone();
        let mut residual = f64::INFINITY;
        let mut iters = 0;
        for it in 0..self.max_inner {
            iters = it + 1;
            let nl = self.second_fundamental_term(&mid, &state.wall);
            let mut next = vec![[0.0; 3]; n];
            for c in 0..3 {
                let mut rhs = vec![0.0; n];
                for i in 0..n {
                    rhs[i] = self.grid.weights[i] * (state.v[i][c] + half * nl[i][c]);
                }
                rhs[n - 1] += half * self.wall_conductance * state.wall[c];
                lus[c].solve_in_place(&mut rhs);
                for i in 0..n {
                    next[i][c] = rhs[i];
                }
            }
            residual = 0.0f64;
            for i in 0..n {
                for c in 0..3 {
                    residual = residual.max((next[i][c] - mid[i][c]).abs());
                }
            }
            mid = next;
            if residual <= self.inner_tol {
                break;
            }
        }
        if residual > self.inner_tol {
            return Err(Error::InnerIteration {
                iterations: iters,
                residual,
            });
        }
        for i in 0..n {
            for c in 0..3 {
                state.v[i][c] = 2.0 * mid[i][c] - state.v[i][c];
            }
        }
        let defect = state.constraint_defect();
        if defect > self.defect_limit {
            return Err(Error::StepRejected(format!(
                "constraint defect {defect:.3e} before projection exceeds {:.1e}; ds too large",
                self.defect_limit
            )));
        }
        state.project()?;
        state.t_or_s += ds;
        Ok(StepDiagnostics {
            constraint_defect_pre: defect,
            halvings: 0,
            inner_iterations: iters,
        })
    }

    /// One implicit-midpoint Schroedinger maps step. The midpoint equation is
    /// solved by a fixed-point iteration whose linear part (the stiff
    /// Laplacian) is inverted every iteration through a block-tridiagonal
    /// solve, so the contraction factor is `O(dt |Lap v|)` rather than
    /// `O(dt / h^2)`. Non-convergence halves the step and retries.
    pub fn smap_step(&self, state: &mut MapState, dt: f64) -> Result<StepDiagnostics> {
        if dt == 0.0 || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time step must be nonzero and finite, got {dt}"
            )));
        }
        self.smap_step_inner(state, dt, 0)
    }

    fn smap_step_inner(
        &self,
        state: &mut MapState,
        dt: f64,
        depth: u32,
    ) -> Result<StepDiagnostics> {
        match self.smap_midpoint(state, dt) {
            Ok(iters) => {
                let defect = state.constraint_defect();
                state.project()?;
                state.t_or_s += dt;
                Ok(StepDiagnostics {
                    constraint_defect_pre: defect,
                    halvings: depth,
                    inner_iterations: iters,
                })
            }
            Err(Error::InnerIteration {
                iterations,
                residual,
            }) if depth < 8 => {
                // Halve and take the two half-steps.
                let d1 = self.smap_step_inner(state, 0.5 * dt, depth + 1)?;
                let d2 = self.smap_step_inner(state, 0.5 * dt, depth + 1)?;
                let _ = (iterations, residual);
                Ok(StepDiagnostics {
                    constraint_defect_pre: d1.constraint_defect_pre.max(d2.constraint_defect_pre),
                    halvings: d1.halvings.max(d2.halvings),
                    inner_iterations: d1.inner_iterations + d2.inner_iterations,
                })
            }
            Err(e) => Err(e),
        }
    }

    /// Solves the midpoint equation `m = v + (dt/2) m x Lap(m)` for the
    /// midpoint `m`, then writes `v <- 2m - v`. Returns inner iterations.
    fn smap_midpoint(&self, state: &mut MapState, dt: f64) -> Result<usize> {
        let n = self.grid.n;
        let half = 0.5 * dt;
        let mut mid = state.v.clone();
        let mut iters = 0;
        let mut residual = f64::INFINITY;
        for it in 0..self.max_inner {
            iters = it + 1;
            // Linear system: mid_new - (dt/2) cross(mid_old) Lap(mid_new) = v,
            // with the wall term of Lap moved to the right-hand side.
            let cross_mats: Vec<[[f64; 3]; 3]> =
                mid.iter().map(|p| cross_matrix(&self.geom, p)).collect();
            let mut sub = vec![[[0.0; 3]; 3]; n - 1];
            let mut diag = vec![[[0.0; 3]; 3]; n];
            let mut sup = vec![[[0.0; 3]; 3]; n - 1];
            let mut rhs: Vec<[f64; 3]> = state.v.clone();
            for i in 0..n {
                let w = self.grid.weights[i];
                // Component Laplacian coefficients at row i.
                let lap_diag = [
                    -self.form_planar.diag[i] / w,
                    -self.form_planar.diag[i] / w,
                    -self.form_axial.diag[i] / w,
                ];
                let c = &cross_mats[i];
                for r in 0..3 {
                    for q in 0..3 {
                        diag[i][r][q] = ((r == q) as i32 as f64) - half * c[r][q] * lap_diag[q];
                    }
                }
                if i > 0 {
                    let lap_sub = [
                        -self.form_planar.off[i - 1] / w,
                        -self.form_planar.off[i - 1] / w,
                        -self.form_axial.off[i - 1] / w,
                    ];
                    for r in 0..3 {
                        for q in 0..3 {
                            sub[i - 1][r][q] = -half * c[r][q] * lap_sub[q];
                        }
                    }
                }
                if i + 1 < n {
                    let lap_sup = [
                        -self.form_planar.off[i] / w,
                        -self.form_planar.off[i] / w,
                        -self.form_axial.off[i] / w,
                    ];
                    for r in 0..3 {
                        for q in 0..3 {
                            sup[i][r][q] = -half * c[r][q] * lap_sup[q];
                        }
                    }
                }
            }
            // Wall contribution of Lap lands in the last row's RHS.
            {
                let w = self.grid.weights[n - 1];
                let wall_term = [
                    self.wall_conductance * state.wall[0] / w,
                    self.wall_conductance * state.wall[1] / w,
                    self.wall_conductance * state.wall[2] / w,
                ];
                let c = &cross_mats[n - 1];
                let add = crate::band::mat_vec(c, &wall_term);
                for q in 0..3 {
                    rhs[n - 1][q] += half * add[q];
                }
            }
            let block = BlockTridiag3 { sub, diag, sup };
            let next = block.solve(&rhs)?;
            residual = 0.0f64;
            for i in 0..n {
                for q in 0..3 {
                    residual = residual.max((next[i][q] - mid[i][q]).abs());
                }
            }
            mid = next;
            if residual <= self.inner_tol {
                break;
            }
        }
        if residual > self.inner_tol {
            return Err(Error::InnerIteration {
                iterations: iters,
                residual,
            });
        }
        for i in 0..n {
            for q in 0..3 {
                state.v[i][q] = 2.0 * mid[i][q] - state.v[i][q];
            }
        }
        Ok(iters)
    }

    pub fn energy(&self, state: &MapState) -> Result<f64> {
        energy(&self.geom, &self.grid, MapSample::Ambient(&state.v))
    }
}

fn cross_matrix(geom: &TargetGeometry, u: &[f64; 3]) -> [[f64; 3]; 3] {
    // Matrix of x -> u x_tau x.
    let base = [[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]];
    match geom.target {
        crate::target::Target::Sphere => base,
        crate::target::Target::Hyperbolic => {
            [base[0], base[1], [-base[2][0], -base[2][1], -base[2][2]]]
        }
    }
}

/// Crank-Nicolson propagator for the linear Schroedinger equation
/// `i d/dt phi = H_m phi` of one mode: exactly unitary in the discrete
/// weighted L2 up to the linear-solve round-off.
#[derive(Debug, Clone)]
pub struct SchrodingerStepper {
    pub grid: RadialGrid,
    form: SymTridiag,
}

impl SchrodingerStepper {
    pub fn new(grid: &RadialGrid, op: &ModeOperator) -> Self {
        SchrodingerStepper {
            grid: grid.clone(),
            form: op.h.form.clone(),
        }
    }

    /// `(1 + i dt/2 H) phi_new = (1 - i dt/2 H) phi_old`.
    pub fn step(&self, phi: &[Complex64], dt: f64) -> Result<Vec<Complex64>> {
        let n = self.grid.n;
        let c = 0.5 * dt;
        let diag: Vec<Complex64> = self
            .form
            .diag
            .iter()
            .zip(&self.grid.weights)
            .map(|(t, w)| Complex64::new(*w, c * t))
            .collect();
        let off: Vec<Complex64> = self
            .form
            .off
            .iter()
            .map(|t| Complex64::new(0.0, c * t))
            .collect();
        let mut tf = vec![Complex64::default(); n];
        self.form.matvec_complex(phi, &mut tf);
        let rhs: Vec<Complex64> = (0..n)
            .map(|i| phi[i] * self.grid.weights[i] - Complex64::i() * c * tf[i])
            .collect();
        solve_complex_sym_tridiag(&diag, &off, &rhs)
    }

    pub fn evolve(&self, phi0: &[Complex64], dt: f64, steps: usize) -> Result<Vec<Complex64>> {
        let mut phi = phi0.to_vec();
        for _ in 0..steps {
            phi = self.step(&phi, dt)?;
        }
        Ok(phi)
    }
}

/// Per-step time series of one nonlinear run.
#[derive(Debug, Clone)]
pub struct FlowRun {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub distances: Vec<f64>,
    pub constraint_defects: Vec<f64>,
    pub outer_mass: Vec<f64>,
    pub final_state: MapState,
    /// Set when the sup-distance to the reference left the configured
    /// neighborhood; the stability theory only covers a bounded neighborhood.
    pub left_neighborhood: bool,
}

pub struct RunConfig {
    pub step: f64,
    pub n_steps: usize,
    /// Record every `record_every` steps (step 0 always recorded).
    pub record_every: usize,
    pub neighborhood_radius: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            step: 1e-2,
            n_steps: 100,
            record_every: 1,
            neighborhood_radius: 1.0,
        }
    }
}

pub fn run_hmhf(
    solver: &FlowSolver,
    mut state: MapState,
    reference: &[[f64; 3]],
    cfg: &RunConfig,
) -> Result<FlowRun> {
    let mut run = FlowRun {
        times: vec![state.t_or_s],
        energies: vec![solver.energy(&state)?],
        distances: vec![distance_surrogate(&solver.grid, &state, reference)],
        constraint_defects: vec![state.constraint_defect()],
        outer_mass: vec![outer_mass_fraction(&solver.grid, &state, reference)],
        final_state: state.clone(),
        left_neighborhood: false,
    };
    for k in 0..cfg.n_steps {
        let diag = solver.hmhf_step(&mut state, cfg.step)?;
        if (k + 1) % cfg.record_every == 0 || k + 1 == cfg.n_steps {
            record(
                &mut run,
                solver,
                &state,
                reference,
                diag.constraint_defect_pre,
                cfg,
            )?;
        }
    }
    run.final_state = state;
    Ok(run)
}

/// Heat flow of a perturbed state with the *unperturbed base trajectory*
/// evolved alongside as the moving reference. Subtracting the base removes
/// the spurious drift of the sampled harmonic map toward its discrete
/// equilibrium, which otherwise floors the measured decay at `O(h^2)`.
pub fn run_hmhf_tracked(
    solver: &FlowSolver,
    mut state: MapState,
    mut base: MapState,
    cfg: &RunConfig,
) -> Result<FlowRun> {
    let mut run = FlowRun {
        times: vec![state.t_or_s],
        energies: vec![solver.energy(&state)?],
        distances: vec![distance_surrogate(&solver.grid, &state, &base.v)],
        constraint_defects: vec![state.constraint_defect()],
        outer_mass: vec![outer_mass_fraction(&solver.grid, &state, &base.v)],
        final_state: state.clone(),
        left_neighborhood: false,
    };
    for k in 0..cfg.n_steps {
        let diag = solver.hmhf_step(&mut state, cfg.step)?;
        solver.hmhf_step(&mut base, cfg.step)?;
        if (k + 1) % cfg.record_every == 0 || k + 1 == cfg.n_steps {
            record(
                &mut run,
                solver,
                &state,
                &base.v,
                diag.constraint_defect_pre,
                cfg,
            )?;
        }
    }
    run.final_state = state;
    Ok(run)
}

/// Flows the sampled harmonic map to its discrete equilibrium: runs the
/// midpoint heat flow until the displacement rate, measured over blocks of
/// steps so per-step solver noise averages out, drops below `tol`.
pub fn relax_to_equilibrium(
    solver: &FlowSolver,
    mut state: MapState,
    ds: f64,
    tol: f64,
    max_steps: usize,
) -> Result<MapState> {
    let block = 16usize;
    let mut snapshot = state.v.clone();
    for k in 1..=max_steps {
        solver.hmhf_step_midpoint(&mut state, ds)?;
        if k % block == 0 {
            let moved = distance_surrogate(&solver.grid, &state, &snapshot) / (block as f64 * ds);
            if moved < tol {
                return Ok(state);
            }
            snapshot = state.v.clone();
        }
    }
    Err(Error::TerminalTolerance(format!(
        "relaxation did not reach displacement rate {tol:.1e} within {max_steps} steps"
    )))
}

pub fn run_smap(
    solver: &FlowSolver,
    mut state: MapState,
    reference: &[[f64; 3]],
    cfg: &RunConfig,
) -> Result<FlowRun> {
    let mut run = FlowRun {
        times: vec![state.t_or_s],
        energies: vec![solver.energy(&state)?],
        distances: vec![distance_surrogate(&solver.grid, &state, reference)],
        constraint_defects: vec![state.constraint_defect()],
        outer_mass: vec![outer_mass_fraction(&solver.grid, &state, reference)],
        final_state: state.clone(),
        left_neighborhood: false,
    };
    for k in 0..cfg.n_steps {
        let diag = solver.smap_step(&mut state, cfg.step)?;
        if (k + 1) % cfg.record_every == 0 || k + 1 == cfg.n_steps {
            record(
                &mut run,
                solver,
                &state,
                reference,
                diag.constraint_defect_pre,
                cfg,
            )?;
        }
    }
    run.final_state = state;
    Ok(run)
}

fn record(
    run: &mut FlowRun,
    solver: &FlowSolver,
    state: &MapState,
    reference: &[[f64; 3]],
    defect_pre: f64,
    cfg: &RunConfig,
) -> Result<()> {
    run.times.push(state.t_or_s);
    run.energies.push(solver.energy(state)?);
    let d = distance_surrogate(&solver.grid, state, reference);
    // Sup-distance part of the surrogate against the neighborhood radius.
    let sup: f64 = state
        .v
        .iter()
        .zip(reference)
        .map(|(a, b)| {
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max);
    if sup > cfg.neighborhood_radius {
        run.left_neighborhood = true;
    }
    run.distances.push(d);
    run.constraint_defects.push(defect_pre);
    run.outer_mass
        .push(outer_mass_fraction(&solver.grid, state, reference));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::coulomb_frame;
    use crate::geometry::{build_grid, GridScheme};
    use crate::linop::assemble_h;
    use crate::target::harmonic_profile;
    use crate::testfields;

    fn bump_field(grid: &RadialGrid) -> Vec<Complex64> {
        testfields::gaussian_bump(grid, 0.25 * grid.r_max, 1.0)
            .into_iter()
            .map(|x| Complex64::new(x, 0.0))
            .collect()
    }

    #[test]
    fn harmonic_map_is_heat_flow_fixed_point() {
        let geom = TargetGeometry::hyperbolic();
        let grid = build_grid(20.0, 1000, GridScheme::Uniform).unwrap();
        let q = harmonic_profile(&geom, 0.5, &grid).unwrap();
        let solver = FlowSolver::new(&grid, &geom);
        let mut state = state_from_profile(&geom, &grid, &q);
        let before = state.v.clone();
        let ds = 0.02;
        solver.hmhf_step(&mut state, ds).unwrap();
        let moved = distance_surrogate(&grid, &state, &before) / ds;
        assert!(moved < 1e-3, "fixed-point drift rate {moved}");
    }

    #[test]
    fn heat_flow_decreases_energy_of_perturbation() {
        let geom = TargetGeometry::hyperbolic();
        let grid = build_grid(20.0, 800, GridScheme::Uniform).unwrap();
        let q = harmonic_profile(&geom, 0.5, &grid).unwrap();
        let solver = FlowSolver::new(&grid, &geom);
        let f = bump_field(&grid);
        let state = perturbed_state(&geom, &grid, &q, &f, 1e-2).unwrap();
        let reference = state_from_profile(&geom, &grid, &q).v;
        let cfg = RunConfig {
            step: 0.02,
            n_steps: 200,
            record_every: 1,
            neighborhood_radius: 1.0,
        };
        let run = run_hmhf(&solver, state, &reference, &cfg).unwrap();
        for w in run.energies.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "energy increased: {} -> {}",
                w[0],
                w[1]
            );
        }
        // Energy of Q is a local minimum among the tested perturbations.
        let e_q = solver
            .energy(&state_from_profile(&geom, &grid, &q))
            .unwrap();
        assert!(run.energies[0] > e_q);
        assert!(*run.energies.last().unwrap() >= e_q - 1e-9);
        assert!(!run.left_neighborhood);
        for d in &run.constraint_defects {
            assert!(*d < 1e-4);
        }
    }

    #[test]
    fn heat_flow_decay_rate_matches_linearized_bottom() {
        let geom = TargetGeometry::hyperbolic();
        let grid = build_grid(20.0, 1000, GridScheme::Uniform).unwrap();
        let q = harmonic_profile(&geom, 0.5, &grid).unwrap();
        let cf = coulomb_frame(&geom, &q, &grid).unwrap();
        let op = assemble_h(&geom, &q, &cf, &grid, ModeIndex(1)).unwrap();
        let bottom = crate::linop::lowest_spectrum(&op, &grid, 0.5, 1)
            .unwrap()
            .lowest_eigenvalues[0];

        let solver = FlowSolver::new(&grid, &geom);
        let f = bump_field(&grid);
        let state = perturbed_state(&geom, &grid, &q, &f, 1e-2).unwrap();
        let base = state_from_profile(&geom, &grid, &q);
        let cfg = RunConfig {
            step: 0.025,
            n_steps: 1600,
            record_every: 40,
            neighborhood_radius: 1.0,
        };
        let run = run_hmhf_tracked(&solver, state, base, &cfg).unwrap();
        // Fit the tail (s in [10, 40]).
        let samples: Vec<(f64, f64)> = run
            .times
            .iter()
            .zip(&run.distances)
            .filter(|(s, d)| **s >= 10.0 && **d > 0.0)
            .map(|(s, d)| (*s, *d))
            .collect();
        let fit = crate::heat::decay_fit(&samples).unwrap();
        assert!(
            (fit.rate - bottom).abs() / bottom < 0.15,
            "fitted {} vs spectral bottom {bottom}",
            fit.rate
        );
    }

    #[test]
    fn smap_stationarity_energy_conservation_and_reversibility() {
        let geom = TargetGeometry::hyperbolic();
        let grid = build_grid(20.0, 600, GridScheme::Uniform).unwrap();
        let q = harmonic_profile(&geom, 0.5, &grid).unwrap();
        let solver = FlowSolver::new(&grid, &geom);

        // Stationarity of the harmonic map under the Schroedinger flow.
        let mut state = state_from_profile(&geom, &grid, &q);
        let before = state.v.clone();
        let dt = 1e-2;
        solver.smap_step(&mut state, dt).unwrap();
        let moved = distance_surrogate(&grid, &state, &before) / dt;
        assert!(moved < 1e-3, "stationary drift rate {moved}");

        // Energy conservation and reversibility on a perturbed state.
        let f = bump_field(&grid);
        let state0 = perturbed_state(&geom, &grid, &q, &f, 1e-2).unwrap();
        let mut state = state0.clone();
        let e0 = solver.energy(&state).unwrap();
        for _ in 0..200 {
            solver.smap_step(&mut state, 1e-3).unwrap();
        }
        let drift = (solver.energy(&state).unwrap() - e0).abs() / e0;
        assert!(drift < 1e-7, "energy drift {drift}");
        assert!(state.constraint_defect() < 1e-10);

        // Evolve forward then backward: implicit midpoint is symmetric.
        let mut back = state.clone();
        solver.smap_step(&mut back, 1e-3).unwrap();
        solver.smap_step(&mut back, -1e-3).unwrap();
        let mut err = 0.0f64;
        for (a, b) in back.v.iter().zip(&state.v) {
            for c in 0..3 {
                err = err.max((a[c] - b[c]).abs());
            }
        }
        assert!(err < 1e-10, "reversibility defect {err}");
    }

    #[test]
    fn orbital_boundedness_near_stable_map() {
        let geom = TargetGeometry::hyperbolic();
        let grid = build_grid(20.0, 500, GridScheme::Uniform).unwrap();
        let q = harmonic_profile(&geom, 0.5, &grid).unwrap();
        let solver = FlowSolver::new(&grid, &geom);
        let f = bump_field(&grid);
        let state = perturbed_state(&geom, &grid, &q, &f, 1e-2).unwrap();
        let reference = state_from_profile(&geom, &grid, &q).v;
        let d0 = distance_surrogate(&grid, &state, &reference);
        let cfg = RunConfig {
            step: 2e-3,
            n_steps: 2500,
            record_every: 25,
            neighborhood_radius: 1.0,
        };
        let run = run_smap(&solver, state, &reference, &cfg).unwrap();
        let worst = run.distances.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 10.0 * d0, "sup distance {worst} vs initial {d0}");
        assert!(!run.left_neighborhood);
    }

    #[test]
    fn cayley_step_is_unitary_and_rotates_eigenfunctions() {
        let geom = TargetGeometry::hyperbolic();
        let grid = build_grid(20.0, 600, GridScheme::Uniform).unwrap();
        let q = harmonic_profile(&geom, 0.5, &grid).unwrap();
        let cf = coulomb_frame(&geom, &q, &grid).unwrap();
        let op = assemble_h(&geom, &q, &cf, &grid, ModeIndex(1)).unwrap();
        let stepper = SchrodingerStepper::new(&grid, &op);

        let mut rng = testfields::rng(111);
        let phi0 = testfields::bump_complex(&grid, &mut rng);
        let n0 = grid.l2_norm(&phi0);
        let phi = stepper.evolve(&phi0, 1e-2, 10_000).unwrap();
        assert!(
            (grid.l2_norm(&phi) - n0).abs() / n0 < 1e-10,
            "unitarity drift {}",
            (grid.l2_norm(&phi) - n0).abs() / n0
        );

        // Eigenfunction initial data rotates by a pure phase e^{-i mu t}.
        let pairs = crate::linop::lowest_eigenpairs(&op, &grid, 1).unwrap();
        let (mu, v) = &pairs[0];
        let f0: Vec<Complex64> = v.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        let dt = 1e-3;
        let steps = 1000;
        let f1 = stepper.evolve(&f0, dt, steps).unwrap();
        // Discrete Cayley phase per step: 2 atan(mu dt / 2).
        let phase = -(steps as f64) * 2.0 * (0.5 * mu * dt).atan();
        let rotated: Vec<Complex64> = f0
            .iter()
            .map(|z| z * Complex64::from_polar(1.0, phase))
            .collect();
        let diff: Vec<Complex64> = f1.iter().zip(&rotated).map(|(a, b)| a - b).collect();
        let rel = grid.l2_norm(&diff) / grid.l2_norm(&f0);
        assert!(rel < 1e-8, "phase rotation mismatch {rel}");
        // The Cayley phase itself matches -mu t to O(dt^2).
        assert!((phase + mu * dt * steps as f64).abs() < 1e-4);
    }

    #[test]
    fn linearization_consistency_small_amplitude() {
        let geom = TargetGeometry::hyperbolic();
        let grid = build_grid(20.0, 2000, GridScheme::Uniform).unwrap();
        let q = harmonic_profile(&geom, 0.5, &grid).unwrap();
        let cf = coulomb_frame(&geom, &q, &grid).unwrap();
        let op = assemble_h(&geom, &q, &cf, &grid, ModeIndex(1)).unwrap();
        let solver = FlowSolver::new(&grid, &geom);
        let stepper = SchrodingerStepper::new(&grid, &op);

        let f = bump_field(&grid);
        let eps = 1e-4;
        let dt = 1e-3;
        let steps = 1000;

        let mut state = perturbed_state(&geom, &grid, &q, &f, eps).unwrap();
        let mut base = state_from_profile(&geom, &grid, &q);
        for _ in 0..steps {
            solver.smap_step(&mut state, dt).unwrap();
            solver.smap_step(&mut base, dt).unwrap();
        }
        // Differencing against the evolved base removes the discretization
        // drift of the sampled map, which is not part of the linearization.
        let phi_pert = frame_components(&geom, &q, &state);
        let phi_base = frame_components(&geom, &q, &base);
        let nonlinear: Vec<Complex64> = phi_pert
            .iter()
            .zip(&phi_base)
            .map(|(a, b)| (a - b) / eps)
            .collect();
        let linear = stepper.evolve(&f, dt, steps).unwrap();
        let diff: Vec<Complex64> = nonlinear.iter().zip(&linear).map(|(a, b)| a - b).collect();
        let rel = grid.l2_norm(&diff) / grid.l2_norm(&linear);
        assert!(rel <= 10.0 * eps, "linearization mismatch {rel}");
    }

    #[test]
    fn step_rejection_and_bad_parameters() {
        let geom = TargetGeometry::sphere();
        let grid = build_grid(10.0, 200, GridScheme::Uniform).unwrap();
        let q = harmonic_profile(&geom, 1.0, &grid).unwrap();
        let solver = FlowSolver::new(&grid, &geom);
        let mut state = state_from_profile(&geom, &grid, &q);
        assert!(solver.hmhf_step(&mut state, -0.1).is_err());
        assert!(solver.smap_step(&mut state, 0.0).is_err());
        // A grotesquely large heat step trips the defect guard.
        let f = bump_field(&grid);
        let mut state = perturbed_state(&geom, &grid, &q, &f, 0.3).unwrap();
        let res = solver.hmhf_step(&mut state, 50.0);
        assert!(matches!(res, Err(Error::StepRejected(_))), "{res:?}");
    }
}
