//! Target-manifold geometry for the sphere and the hyperbolic plane, the
//! explicit equivariant harmonic map families, and the Dirichlet energy.
//!
//! Both targets are handled through one code path: the curvature sign `tau`
//! flips between `sin/cos` and `sinh/cosh`, and the ambient representation
//! lives in R^3 with signature `(+,+,+)` or `(+,+,-)` (hyperboloid model).

use crate::error::{Error, Result};
use crate::geometry::RadialGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Sphere,
    Hyperbolic,
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::Sphere => write!(f, "s2"),
            Target::Hyperbolic => write!(f, "h2"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TargetGeometry {
    pub target: Target,
}

impl TargetGeometry {
    pub fn sphere() -> Self {
        TargetGeometry {
            target: Target::Sphere,
        }
    }

    pub fn hyperbolic() -> Self {
        TargetGeometry {
            target: Target::Hyperbolic,
        }
    }

    pub fn new(target: Target) -> Self {
        TargetGeometry { target }
    }

    /// Gauss curvature sign: `+1` for the sphere, `-1` for the hyperbolic plane.
    pub fn tau(&self) -> f64 {
        match self.target {
            Target::Sphere => 1.0,
            Target::Hyperbolic => -1.0,
        }
    }

    /// Metric coefficient `S(rho)` with `g = d rho^2 + S^2 d vartheta^2`.
    pub fn s(&self, rho: f64) -> f64 {
        match self.target {
            Target::Sphere => rho.sin(),
            Target::Hyperbolic => rho.sinh(),
        }
    }

    pub fn s_prime(&self, rho: f64) -> f64 {
        match self.target {
            Target::Sphere => rho.cos(),
            Target::Hyperbolic => rho.cosh(),
        }
    }

    /// Ambient signature: `(+,+,+)` for the sphere, `(+,+,-)` for the
    /// hyperboloid in Minkowski space.
    pub fn signature(&self) -> [f64; 3] {
        match self.target {
            Target::Sphere => [1.0, 1.0, 1.0],
            Target::Hyperbolic => [1.0, 1.0, -1.0],
        }
    }

    /// Value of the pointwise constraint `v . v` on the embedded target.
    pub fn constraint(&self) -> f64 {
        self.tau()
    }

    pub fn dot(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let sig = self.signature();
        a[0] * b[0] * sig[0] + a[1] * b[1] * sig[1] + a[2] * b[2] * sig[2]
    }

    /// Complex structure `J(u) X` realized as the (signature-adapted) cross
    /// product of the base point with `X`.
    pub fn cross(&self, u: &[f64; 3], x: &[f64; 3]) -> [f64; 3] {
        let c = [
            u[1] * x[2] - u[2] * x[1],
            u[2] * x[0] - u[0] * x[2],
            u[0] * x[1] - u[1] * x[0],
        ];
        match self.target {
            Target::Sphere => c,
            Target::Hyperbolic => [c[0], c[1], -c[2]],
        }
    }

    /// Projects a near-constraint vector back onto the target:
    /// `v / sqrt(|v.v|)`.
    pub fn project(&self, v: &[f64; 3]) -> Result<[f64; 3]> {
        let q = self.dot(v, v) * self.tau();
        if !(q > 0.0) {
            return Err(Error::NonFinite("constraint projection"));
        }
        let s = q.sqrt();
        Ok([v[0] / s, v[1] / s, v[2] / s])
    }

    /// Ambient point of the pole-anchored polar coordinates at angle 0:
    /// `(S(rho), 0, S'(rho))`.
    pub fn ambient_point(&self, rho: f64) -> [f64; 3] {
        [self.s(rho), 0.0, self.s_prime(rho)]
    }

    /// Geodesic distance between two points on the target.
    pub fn distance(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        match self.target {
            Target::Sphere => self.dot(a, b).clamp(-1.0, 1.0).acos(),
            Target::Hyperbolic => (-self.dot(a, b)).max(1.0).acosh(),
        }
    }

    /// Exponential map at `base` applied to a tangent vector `x`.
    pub fn exp_map(&self, base: &[f64; 3], x: &[f64; 3]) -> [f64; 3] {
        let norm_sq = self.dot(x, x);
        if norm_sq <= 0.0 {
            return *base;
        }
        let t = norm_sq.sqrt();
        let (c, s) = match self.target {
            Target::Sphere => (t.cos(), t.sin()),
            Target::Hyperbolic => (t.cosh(), t.sinh()),
        };
        [
            c * base[0] + s * x[0] / t,
            c * base[1] + s * x[1] / t,
            c * base[2] + s * x[2] / t,
        ]
    }

    /// Logarithm map: tangent vector at `base` pointing to `v` with length
    /// equal to the geodesic distance. The distance is recovered from the
    /// tangential component (`atan2` / `asinh` form), which stays accurate
    /// for nearby points where `acos` / `acosh` of the projection loses half
    /// the significant digits.
    pub fn log_map(&self, base: &[f64; 3], v: &[f64; 3]) -> [f64; 3] {
        let tau = self.tau();
        // Component of v along the base point in the ambient metric.
        let c = self.dot(base, v) * tau;
        let dir = [v[0] - c * base[0], v[1] - c * base[1], v[2] - c * base[2]];
        let dir_norm_sq = self.dot(&dir, &dir).max(0.0);
        let nd = dir_norm_sq.sqrt();
        if nd == 0.0 {
            return [0.0; 3];
        }
        // nd = S(d), c = S'(d): d = atan2(nd, c) on the sphere, asinh(nd) on
        // the hyperboloid.
        let d = match self.target {
            Target::Sphere => nd.atan2(c),
            Target::Hyperbolic => nd.asinh(),
        };
        let scale = d / nd;
        [dir[0] * scale, dir[1] * scale, dir[2] * scale]
    }

    /// Infinitesimal rotation of the ambient space about the pole axis.
    pub fn rotation_generator(v: &[f64; 3]) -> [f64; 3] {
        [-v[1], v[0], 0.0]
    }
}

/// Sampled profile `rho(r)` of one of the explicit harmonic map families.
#[derive(Debug, Clone)]
pub struct HarmonicProfile {
    pub lambda: f64,
    pub rho: Vec<f64>,
    /// `2 arctan(lambda)` (sphere) or `2 arctanh(lambda)` (hyperbolic target).
    pub boundary_value: f64,
    pub target: Target,
}

/// Closed-form profile value: `2 arctan(lambda tanh(r/2))` for the sphere,
/// `2 arctanh(lambda tanh(r/2))` for the hyperbolic target.
pub fn profile_value(geom: &TargetGeometry, lambda: f64, r: f64) -> f64 {
    let t = lambda * (0.5 * r).tanh();
    match geom.target {
        Target::Sphere => 2.0 * t.atan(),
        Target::Hyperbolic => 2.0 * t.atanh(),
    }
}

/// Closed-form radial derivative of the profile.
pub fn profile_derivative(geom: &TargetGeometry, lambda: f64, r: f64) -> f64 {
    let t = (0.5 * r).tanh();
    let sech_sq = 1.0 - t * t;
    lambda * sech_sq / (1.0 + geom.tau() * lambda * lambda * t * t)
}

pub fn harmonic_profile(
    geom: &TargetGeometry,
    lambda: f64,
    grid: &RadialGrid,
) -> Result<HarmonicProfile> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    if geom.target == Target::Hyperbolic && lambda >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "hyperbolic target requires lambda in [0, 1), got {lambda}"
        )));
    }
    let rho: Vec<f64> = grid
        .nodes
        .iter()
        .map(|r| profile_value(geom, lambda, *r))
        .collect();
    let boundary_value = match geom.target {
        Target::Sphere => 2.0 * lambda.atan(),
        Target::Hyperbolic => 2.0 * lambda.atanh(),
    };
    Ok(HarmonicProfile {
        lambda,
        rho,
        boundary_value,
        target: geom.target,
    })
}

/// Equivariant map sample in either of the two interchangeable forms.
pub enum MapSample<'a> {
    Profile(&'a [f64]),
    Ambient(&'a [[f64; 3]]),
}

/// Dirichlet energy of an equivariant map,
/// `1/2 * 2 pi * sum w_i [ |d_r u|^2 + |d_theta u|^2 / sinh^2 r ]`.
pub fn energy(geom: &TargetGeometry, grid: &RadialGrid, sample: MapSample<'_>) -> Result<f64> {
    let integrand: Vec<f64> = match sample {
        MapSample::Profile(rho) => {
            if rho.len() != grid.n {
                return Err(Error::LengthMismatch {
                    expected: grid.n,
                    got: rho.len(),
                });
            }
            if rho.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("energy profile sample"));
            }
            let drho = grid.derivative(rho);
            (0..grid.n)
                .map(|i| {
                    let s = geom.s(rho[i]);
                    let sh = grid.nodes[i].sinh();
                    drho[i] * drho[i] + s * s / (sh * sh)
                })
                .collect()
        }
        MapSample::Ambient(v) => {
            if v.len() != grid.n {
                return Err(Error::LengthMismatch {
                    expected: grid.n,
                    got: v.len(),
                });
            }
            if v.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("energy ambient sample"));
            }
            let comp = |c: usize| -> Vec<f64> { v.iter().map(|p| p[c]).collect() };
            let d0 = grid.derivative(&comp(0));
            let d1 = grid.derivative(&comp(1));
            let d2 = grid.derivative(&comp(2));
            (0..grid.n)
                .map(|i| {
                    let dv = [d0[i], d1[i], d2[i]];
                    let radial = geom.dot(&dv, &dv);
                    // |Omega~ v|^2 = v_1^2 + v_2^2 in both signatures.
                    let angular = v[i][0] * v[i][0] + v[i][1] * v[i][1];
                    let sh = grid.nodes[i].sinh();
                    radial + angular / (sh * sh)
                })
                .collect()
        }
    };
    let mut acc = 0.0;
    for i in 0..grid.n {
        acc += integrand[i] * grid.weights[i];
    }
    let e = 0.5 * std::f64::consts::TAU * acc;
    if !e.is_finite() {
        return Err(Error::NonFinite("energy"));
    }
    Ok(e)
}

/// Weighted L^2 norm of the discrete harmonic-map residual
/// `rho'' + coth(r) rho' - S(rho) S'(rho) / sinh^2 r`
/// evaluated on interior nodes (for `HarmonicProfile` inputs this is
/// `O(n^{-2})`).
pub fn tension_residual(geom: &TargetGeometry, grid: &RadialGrid, rho: &[f64]) -> Result<f64> {
    if rho.len() != grid.n {
        return Err(Error::LengthMismatch {
            expected: grid.n,
            got: rho.len(),
        });
    }
    let res = tension_field(geom, grid, rho);
    Ok(grid.l2_norm_real(&res))
}

/// Pointwise discrete tension of a profile; zero at the two boundary nodes
/// where no centered stencil exists.
pub fn tension_field(geom: &TargetGeometry, grid: &RadialGrid, rho: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let mut res = vec![0.0; n];
    for i in 1..n - 1 {
        let hm = grid.nodes[i] - grid.nodes[i - 1];
        let hp = grid.nodes[i + 1] - grid.nodes[i];
        let d2 =
            2.0 * (hp * rho[i - 1] - (hm + hp) * rho[i] + hm * rho[i + 1]) / (hm * hp * (hm + hp));
        let d1 = -hp / (hm * (hm + hp)) * rho[i - 1]
            + (hp - hm) / (hm * hp) * rho[i]
            + hm / (hp * (hm + hp)) * rho[i + 1];
        let r: f64 = grid.nodes[i];
        let sh = r.sinh();
        res[i] = d2 + d1 / r.tanh() - geom.s(rho[i]) * geom.s_prime(rho[i]) / (sh * sh);
    }
    res
}

pub fn profile_to_ambient(geom: &TargetGeometry, rho: &[f64]) -> Vec<[f64; 3]> {
    rho.iter().map(|p| geom.ambient_point(*p)).collect()
}

/// Geodesic distance from the pole, the inverse of `profile_to_ambient` for
/// phase-free samples.
pub fn ambient_to_profile(geom: &TargetGeometry, v: &[[f64; 3]]) -> Vec<f64> {
    v.iter()
        .map(|p| match geom.target {
            Target::Sphere => {
                let planar = (p[0] * p[0] + p[1] * p[1]).sqrt();
                planar.atan2(p[2])
            }
            Target::Hyperbolic => p[2].max(1.0).acosh(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, GridScheme};

    #[test]
    fn pythagorean_identity_both_targets() {
        for geom in [TargetGeometry::sphere(), TargetGeometry::hyperbolic()] {
            for k in 0..200 {
                let rho = 0.013 * k as f64;
                let s = geom.s(rho);
                let sp = geom.s_prime(rho);
                assert!((sp * sp + geom.tau() * s * s - 1.0).abs() < 1e-12 * (1.0 + sp * sp));
            }
        }
    }

    #[test]
    fn lambda_zero_is_constant_map() {
        let grid = build_grid(10.0, 200, GridScheme::Uniform).unwrap();
        let geom = TargetGeometry::sphere();
        let q = harmonic_profile(&geom, 0.0, &grid).unwrap();
        assert!(q.rho.iter().all(|p| *p == 0.0));
        assert_eq!(q.boundary_value, 0.0);
        let e = energy(&geom, &grid, MapSample::Profile(&q.rho)).unwrap();
        assert!(e.abs() < 1e-14);
        assert_eq!(tension_residual(&geom, &grid, &q.rho).unwrap(), 0.0);
    }

    #[test]
    fn sphere_lambda_one_approaches_half_pi() {
        let grid = build_grid(40.0, 400, GridScheme::Uniform).unwrap();
        let geom = TargetGeometry::sphere();
        let q = harmonic_profile(&geom, 1.0, &grid).unwrap();
        assert!((q.boundary_value - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let last = *q.rho.last().unwrap();
        assert!((last - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
        // Monotone nondecreasing, zero limit at the origin.
        assert!(q.rho.windows(2).all(|w| w[0] <= w[1]));
        assert!(q.rho[0] < 0.1);
    }

    #[test]
    fn hyperbolic_target_rejects_lambda_at_least_one() {
        let grid = build_grid(10.0, 100, GridScheme::Uniform).unwrap();
        let geom = TargetGeometry::hyperbolic();
        assert!(harmonic_profile(&geom, 1.0, &grid).is_err());
        assert!(harmonic_profile(&geom, 0.999, &grid).is_ok());
    }

    #[test]
    fn boundary_value_strictly_increasing_in_lambda() {
        let grid = build_grid(5.0, 64, GridScheme::Uniform).unwrap();
        for geom in [TargetGeometry::sphere(), TargetGeometry::hyperbolic()] {
            let mut prev = -1.0;
            for k in 1..20 {
                let lambda = 0.045 * k as f64;
                let q = harmonic_profile(&geom, lambda, &grid).unwrap();
                assert!(q.boundary_value > prev);
                prev = q.boundary_value;
            }
        }
    }

    /// Independent oracle for the closed-form profile: shoot the second-order
    /// profile ODE `rho'' + coth r rho' = S(rho) S'(rho) / sinh^2 r` from the
    /// origin and bisect on the initial slope to hit the boundary value.
    fn shoot_profile(geom: &TargetGeometry, slope: f64, r_end: f64, record_at: f64) -> (f64, f64) {
        let mut r = 1e-3;
        let mut rho = slope * r;
        let mut drho = slope;
        let mut recorded = f64::NAN;
        let rhs = |r: f64, rho: f64, drho: f64| -> f64 {
            let sh = r.sinh();
            geom.s(rho) * geom.s_prime(rho) / (sh * sh) - drho / r.tanh()
        };
        let mut h = 1e-5;
        while r < r_end {
            if r > 0.1 {
                h = 1e-3;
            }
            // Classical RK4 on the first-order system.
            let k1 = (drho, rhs(r, rho, drho));
            let k2 = (
                drho + 0.5 * h * k1.1,
                rhs(r + 0.5 * h, rho + 0.5 * h * k1.0, drho + 0.5 * h * k1.1),
            );
            let k3 = (
                drho + 0.5 * h * k2.1,
                rhs(r + 0.5 * h, rho + 0.5 * h * k2.0, drho + 0.5 * h * k2.1),
            );
            let k4 = (drho + h * k3.1, rhs(r + h, rho + h * k3.0, drho + h * k3.1));
            let next_rho = rho + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            let next_drho = drho + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            if r < record_at && r + h >= record_at {
                // Linear interpolation to the recording radius.
                let frac = (record_at - r) / h;
                recorded = rho + frac * (next_rho - rho);
            }
            rho = next_rho;
            drho = next_drho;
            r += h;
        }
        (rho, recorded)
    }

    #[test]
    fn closed_form_matches_shooting_oracle() {
        let geom = TargetGeometry::hyperbolic();
        let lambda = 0.5;
        let beta = 2.0 * f64::atanh(lambda);
        // Bisect the initial slope so the shot profile hits beta at r = 25.
        let (mut lo, mut hi) = (0.3, 0.7);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (end, _) = shoot_profile(&geom, mid, 25.0, 2.0);
            if end < beta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let slope = 0.5 * (lo + hi);
        // The slope at the origin is lambda itself.
        assert!((slope - lambda).abs() < 1e-5, "slope {slope}");
        let (_, at_two) = shoot_profile(&geom, slope, 25.0, 2.0);
        let exact = 2.0 * (0.5 * 1f64.tanh()).atanh();
        assert!((at_two - exact).abs() < 1e-5, "{at_two} vs {exact}");
        // And the closed form evaluated directly.
        assert!((profile_value(&geom, lambda, 2.0) - exact).abs() < 1e-15);
    }

    #[test]
    fn energy_of_lambda_one_sphere_map_matches_quadrature_oracle() {
        // Oracle: adaptive quadrature of the analytic integrand
        // pi * (rho'^2 + sin^2 rho / sinh^2 r) sinh r with the closed-form
        // derivative. The analytic total over [0, infinity) is 2 pi.
        let geom = TargetGeometry::sphere();
        let integrand = |r: f64| {
            if r == 0.0 {
                return 0.0;
            }
            let rho = profile_value(&geom, 1.0, r);
            let drho = profile_derivative(&geom, 1.0, r);
            let s = geom.s(rho);
            let sh = r.sinh();
            std::f64::consts::PI * (drho * drho + s * s / (sh * sh)) * sh
        };
        let oracle = crate::testfields::simpson_adaptive(&integrand, 0.0, 20.0, 1e-13);
        assert!(
            (oracle - std::f64::consts::TAU).abs() < 1e-7,
            "oracle {oracle}"
        );

        let grid = build_grid(20.0, 2000, GridScheme::Uniform).unwrap();
        let q = harmonic_profile(&geom, 1.0, &grid).unwrap();
        let e = energy(&geom, &grid, MapSample::Profile(&q.rho)).unwrap();
        assert!(
            (e - oracle).abs() / oracle < 5e-4,
            "discrete {e} vs oracle {oracle}"
        );
        // Frozen regression value for this exact configuration.
        let frozen = 6.283_246_383_4;
        assert!(
            (e - frozen).abs() < 1e-9,
            "energy regression moved: {e:.10} vs {frozen:.10}"
        );
        // Ambient form agrees with the profile form.
        let v = profile_to_ambient(&geom, &q.rho);
        let e_amb = energy(&geom, &grid, MapSample::Ambient(&v)).unwrap();
        // The two derivative pipelines agree to discretization order.
        assert!((e_amb - e).abs() / e < 1e-4);
    }

    #[test]
    fn tension_residual_second_order_and_perturbation_detected() {
        let geom = TargetGeometry::sphere();
        let mut residuals = Vec::new();
        for n in [1000usize, 2000, 4000] {
            let grid = build_grid(20.0, n, GridScheme::Uniform).unwrap();
            let q = harmonic_profile(&geom, 1.0, &grid).unwrap();
            residuals.push(tension_residual(&geom, &grid, &q.rho).unwrap());
        }
        assert!(residuals[0] < 1e-3, "residual {}", residuals[0]);
        assert!(residuals[0] / residuals[1] > 3.4, "{residuals:?}");
        assert!(residuals[1] / residuals[2] > 3.4, "{residuals:?}");

        let grid = build_grid(20.0, 1000, GridScheme::Uniform).unwrap();
        let q = harmonic_profile(&geom, 1.0, &grid).unwrap();
        let bumped: Vec<f64> = grid
            .nodes
            .iter()
            .zip(&q.rho)
            .map(|(r, p)| p + 0.1 * (-(r - 5.0) * (r - 5.0)).exp())
            .collect();
        let res = tension_residual(&geom, &grid, &bumped).unwrap();
        assert!(res > 0.05, "perturbed residual {res}");
    }

    #[test]
    fn ambient_round_trip_and_geometry_ops() {
        let grid = build_grid(15.0, 300, GridScheme::Uniform).unwrap();
        for geom in [TargetGeometry::sphere(), TargetGeometry::hyperbolic()] {
            let lambda = if geom.target == Target::Sphere {
                1.3
            } else {
                0.7
            };
            let q = harmonic_profile(&geom, lambda, &grid).unwrap();
            let v = profile_to_ambient(&geom, &q.rho);
            for p in &v {
                assert!((geom.dot(p, p) - geom.constraint()).abs() < 1e-12);
            }
            let back = ambient_to_profile(&geom, &v);
            for (a, b) in back.iter().zip(&q.rho) {
                assert!((a - b).abs() < 1e-12);
            }
            // exp/log inverse pair at a few base points.
            for i in [0usize, 50, 299] {
                let base = v[i];
                let x = [0.01, -0.02, 0.03 * geom.tau()];
                // Make x tangent.
                let c = geom.dot(&base, &x) * geom.tau();
                let x = [x[0] - c * base[0], x[1] - c * base[1], x[2] - c * base[2]];
                let p = geom.exp_map(&base, &x);
                assert!((geom.dot(&p, &p) - geom.constraint()).abs() < 1e-10);
                let back = geom.log_map(&base, &p);
                for c in 0..3 {
                    assert!((back[c] - x[c]).abs() < 1e-10);
                }
            }
            // J is an isometry of tangent planes with J^2 = -1.
            let base = v[120];
            let x = {
                let raw = [0.4, 0.1, -0.2];
                let c = geom.dot(&base, &raw) * geom.tau();
                [
                    raw[0] - c * base[0],
                    raw[1] - c * base[1],
                    raw[2] - c * base[2],
                ]
            };
            let jx = geom.cross(&base, &x);
            assert!((geom.dot(&jx, &jx) - geom.dot(&x, &x)).abs() < 1e-12);
            assert!(geom.dot(&jx, &x).abs() < 1e-12);
            let jjx = geom.cross(&base, &jx);
            for c in 0..3 {
                assert!((jjx[c] + x[c]).abs() < 1e-12);
            }
        }
    }
}
