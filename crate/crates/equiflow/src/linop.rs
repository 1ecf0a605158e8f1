//! Discretized linearized operator about a harmonic map, per angular mode:
//! assembly in flux form, the first-order Bogomoln'yi factor, banded
//! symmetric-definite eigensolves, and the weak/strong stability certificates.

use num_complex::Complex64;

use crate::band::{inverse_iteration, lowest_eigenvalues, SymTridiag};
use crate::error::{Error, Result};
use crate::frame::FrameCoefficients;
use crate::geometry::{ModeIndex, RadialGrid, RadialOperator};
use crate::target::{HarmonicProfile, TargetGeometry};

/// Banded realization of the linearized operator restricted to the angular
/// mode `m`: `H_m f = -f'' - coth(r) f' + V_m f` with
/// `V_m = (m + A_theta)^2 / sinh^2 r - tau p^2`, together with the
/// Bogomoln'yi factor `L_m f = f' - (m + A_theta)/sinh(r) f`.
#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub m: ModeIndex,
    pub h: RadialOperator,
    pub potential: Vec<f64>,
    /// First-order factor stored as a general tridiagonal (sub, diag, sup).
    l_sub: Vec<f64>,
    l_diag: Vec<f64>,
    l_sup: Vec<f64>,
}

pub fn assemble_h(
    geom: &TargetGeometry,
    profile: &HarmonicProfile,
    coeffs: &FrameCoefficients,
    grid: &RadialGrid,
    m: ModeIndex,
) -> Result<ModeOperator> {
    if profile.rho.len() != grid.n || coeffs.a_theta.len() != grid.n {
        return Err(Error::LengthMismatch {
            expected: grid.n,
            got: profile.rho.len().min(coeffs.a_theta.len()),
        });
    }
    let n = grid.n;
    let tau = geom.tau();
    let mf = m.0 as f64;
    let mut potential = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let sh = grid.nodes[i].sinh();
        let a = mf + coeffs.a_theta[i];
        potential.push(a * a / (sh * sh) - tau * coeffs.p[i] * coeffs.p[i]);
        b.push(a / sh);
    }
    let h = neg_laplacian_with_sampled_potential(grid, &potential);

    // Centered first-derivative stencil minus the multiplication by b;
    // one-sided at the first node, Dirichlet ghost at the wall.
    let mut l_sub = vec![0.0; n - 1];
    let mut l_diag = vec![0.0; n];
    let mut l_sup = vec![0.0; n - 1];
    for i in 1..n - 1 {
        let hm = grid.nodes[i] - grid.nodes[i - 1];
        let hp = grid.nodes[i + 1] - grid.nodes[i];
        l_sub[i - 1] = -hp / (hm * (hm + hp));
        l_diag[i] = (hp - hm) / (hm * hp) - b[i];
        l_sup[i] = hm / (hp * (hm + hp));
    }
    {
        // One-sided second-order derivative at the first node, truncated to
        // the tridiagonal band (the dropped curvature term only affects the
        // origin row, whose quadrature weight vanishes like r^2).
        let h1 = grid.nodes[1] - grid.nodes[0];
        l_diag[0] = -1.0 / h1 - b[0];
        l_sup[0] = 1.0 / h1;
        // Wall row: ghost value 0 at the Dirichlet edge.
        let hm = grid.nodes[n - 1] - grid.nodes[n - 2];
        let hp = grid.edges[n] - grid.nodes[n - 1];
        l_sub[n - 2] = -hp / (hm * (hm + hp));
        l_diag[n - 1] = (hp - hm) / (hm * hp) - b[n - 1];
    }
    Ok(ModeOperator {
        m,
        h,
        potential,
        l_sub,
        l_diag,
        l_sup,
    })
}

fn neg_laplacian_with_sampled_potential(grid: &RadialGrid, v: &[f64]) -> RadialOperator {
    let n = grid.n;
    let mut op = crate::geometry::mode_laplacian(grid, ModeIndex(0));
    for i in 0..n {
        op.form.diag[i] += v[i] * grid.weights[i];
    }
    op
}

impl ModeOperator {
    pub fn apply(&self, grid: &RadialGrid, f: &[Complex64]) -> Vec<Complex64> {
        self.h.apply_complex(grid, f)
    }

    /// `L_m f = f' - (m + A_theta)/sinh(r) f`.
    pub fn apply_l(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = self.l_diag.len();
        let mut out = vec![Complex64::default(); n];
        for i in 0..n {
            let mut acc = f[i] * self.l_diag[i];
            if i > 0 {
                acc += f[i - 1] * self.l_sub[i - 1];
            }
            if i + 1 < n {
                acc += f[i + 1] * self.l_sup[i];
            }
            out[i] = acc;
        }
        out
    }

    /// Exact discrete adjoint of `L` in the weighted inner product:
    /// `L* = W^{-1} L^T W`. Consistent with `-g' - coth(r) g - b g`.
    pub fn apply_l_adjoint(&self, grid: &RadialGrid, g: &[Complex64]) -> Vec<Complex64> {
        let n = self.l_diag.len();
        let w = &grid.weights;
        let mut out = vec![Complex64::default(); n];
        for i in 0..n {
            let mut acc = g[i] * (self.l_diag[i] * w[i]);
            if i + 1 < n {
                acc += g[i + 1] * (self.l_sub[i] * w[i + 1]);
            }
            if i > 0 {
                acc += g[i - 1] * (self.l_sup[i - 1] * w[i - 1]);
            }
            out[i] = acc / w[i];
        }
        out
    }

    /// `L*(L f)`, the factored action to be compared against `H f`.
    pub fn apply_factored(&self, grid: &RadialGrid, f: &[Complex64]) -> Vec<Complex64> {
        self.apply_l_adjoint(grid, &self.apply_l(f))
    }
}

/// Lowest part of the spectrum of one mode operator plus the threshold
/// resonance surrogate.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub m: i32,
    pub lambda: f64,
    pub lowest_eigenvalues: Vec<f64>,
    /// Eigenvalues inside `(gap_floor, 1/4 - gap_margin)`.
    pub gap_eigenvalues: Vec<f64>,
    /// `inf <(H - 1/4) f, f> / || (1 + r^2)^{-1/2} f ||^2` over the discrete space.
    pub resonance_quotient: f64,
    /// Eigenpair residuals `||H f - lambda f||_W / ||f||_W`.
    pub residuals: Vec<f64>,
    pub solver_iterations: Vec<usize>,
}

pub const GAP_FLOOR: f64 = 0.0;
pub const GAP_MARGIN: f64 = 0.01;

pub fn lowest_spectrum(
    op: &ModeOperator,
    grid: &RadialGrid,
    lambda: f64,
    k: usize,
) -> Result<SpectrumReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let brackets = lowest_eigenvalues(&op.h.form, &grid.weights, k, 1e-14);
    let mut eigs = Vec::with_capacity(brackets.len());
    let mut residuals = Vec::with_capacity(brackets.len());
    let mut iterations = Vec::with_capacity(brackets.len());
    let mut deflate: Vec<Vec<f64>> = Vec::new();
    for e in &brackets {
        let pair = inverse_iteration(&op.h.form, &grid.weights, *e, &deflate, 60)?;
        eigs.push(pair.value);
        residuals.push(pair.residual);
        iterations.push(pair.iterations);
        deflate.push(pair.vector);
    }
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gap: Vec<f64> = eigs
        .iter()
        .copied()
        .filter(|e| *e > GAP_FLOOR && *e < 0.25 - GAP_MARGIN)
        .collect();
    Ok(SpectrumReport {
        m: op.m.0,
        lambda,
        lowest_eigenvalues: eigs,
        gap_eigenvalues: gap,
        resonance_quotient: resonance_quotient(op, grid),
        residuals,
        solver_iterations: iterations,
    })
}

/// Lowest `k` eigenpairs, M-orthonormal in the quadrature inner product.
pub fn lowest_eigenpairs(
    op: &ModeOperator,
    grid: &RadialGrid,
    k: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let brackets = lowest_eigenvalues(&op.h.form, &grid.weights, k, 1e-14);
    let mut out = Vec::with_capacity(k);
    let mut deflate: Vec<Vec<f64>> = Vec::new();
    for e in &brackets {
        let pair = inverse_iteration(&op.h.form, &grid.weights, *e, &deflate, 60)?;
        deflate.push(pair.vector.clone());
        out.push((pair.value, pair.vector));
    }
    Ok(out)
}

/// Threshold-resonance surrogate: the smallest eigenvalue of the pencil
/// `(T - 1/4 W, M)` with `M_ii = w_i / (1 + r_i^2)`. Positive iff
/// `<(H - 1/4) f, f> >= q || (1+r^2)^{-1/2} f ||^2` holds with `q > 0`.
pub fn resonance_quotient(op: &ModeOperator, grid: &RadialGrid) -> f64 {
    let n = grid.n;
    let mut shifted = SymTridiag {
        diag: op.h.form.diag.clone(),
        off: op.h.form.off.clone(),
    };
    let mut mass = Vec::with_capacity(n);
    for i in 0..n {
        shifted.diag[i] -= 0.25 * grid.weights[i];
        let r = grid.nodes[i];
        mass.push(grid.weights[i] / (1.0 + r * r));
    }
    lowest_eigenvalues(&shifted, &mass, 1, 1e-13)[0]
}

/// Discrete threshold norm
/// `||(d_r + 1/2) f|| + ||(m + A_theta)/sinh(r) f|| + ||(1 + r^2)^{-1/2} f||`.
pub fn h1thr_norm(
    grid: &RadialGrid,
    coeffs: &FrameCoefficients,
    field: &[Complex64],
    m: ModeIndex,
) -> Result<f64> {
    if field.len() != grid.n {
        return Err(Error::LengthMismatch {
            expected: grid.n,
            got: field.len(),
        });
    }
    let df = grid.derivative_complex(field);
    let mut radial = vec![Complex64::default(); grid.n];
    let mut angular = vec![Complex64::default(); grid.n];
    let mut weighted = vec![Complex64::default(); grid.n];
    for i in 0..grid.n {
        radial[i] = df[i] + 0.5 * field[i];
        let r = grid.nodes[i];
        angular[i] = field[i] * ((m.0 as f64 + coeffs.a_theta[i]) / r.sinh());
        weighted[i] = field[i] / (1.0 + r * r).sqrt();
    }
    Ok(grid.l2_norm(&radial) + grid.l2_norm(&angular) + grid.l2_norm(&weighted))
}

/// Margins used by the stability certificate; always reported back in the
/// result rather than hidden in the implementation.
#[derive(Debug, Clone, Copy)]
pub struct CertificateMargins {
    /// Lowest eigenvalue must exceed minus this for weak stability
    /// (allows discretization error below zero).
    pub weak: f64,
    /// Lowest eigenvalue must exceed `1/4 - strong` for strong stability.
    pub strong: f64,
    /// Resonance quotient must exceed this for strong stability.
    pub quotient: f64,
}

impl Default for CertificateMargins {
    fn default() -> Self {
        CertificateMargins {
            weak: 1e-6,
            strong: 0.01,
            quotient: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub weakly_stable: bool,
    pub strongly_stable: bool,
    pub margins: CertificateMargins,
    pub reports: Vec<SpectrumReport>,
    /// Pairs `(|m|, |m|+1)` where the lowest eigenvalue decreased in `|m|`;
    /// recorded as a flag, not a failure.
    pub mode_monotonicity_violations: Vec<(i32, i32)>,
}

/// Sweeps modes `-m_max ..= m_max`, certifying the weak and strong linearized
/// stability conditions with explicit margins.
pub fn stability_certificate(
    geom: &TargetGeometry,
    lambda: f64,
    grid: &RadialGrid,
    m_max: i32,
    margins: CertificateMargins,
) -> Result<StabilityCertificate> {
    if m_max < 2 {
        return Err(Error::InvalidParameter(format!(
            "certificate requires m_max >= 2, got {m_max}"
        )));
    }
    let profile = crate::target::harmonic_profile(geom, lambda, grid)?;
    let coeffs = crate::frame::coulomb_frame(geom, &profile, grid)?;
    let mut reports = Vec::new();
    for m in -m_max..=m_max {
        let op = assemble_h(geom, &profile, &coeffs, grid, ModeIndex(m))?;
        reports.push(lowest_spectrum(&op, grid, lambda, 3)?);
    }
    let lowest = |m: i32| -> f64 {
        reports
            .iter()
            .find(|r| r.m == m)
            .map(|r| r.lowest_eigenvalues[0])
            .unwrap()
    };
    let weakly_stable = reports
        .iter()
        .map(|r| r.lowest_eigenvalues[0])
        .fold(f64::INFINITY, f64::min)
        > -margins.weak;
    let strongly_stable = reports.iter().all(|r| {
        r.lowest_eigenvalues[0] >= 0.25 - margins.strong && r.resonance_quotient > margins.quotient
    });
    let mut violations = Vec::new();
    for sign in [1i32, -1] {
        for a in 0..m_max {
            let (ma, mb) = (sign * a, sign * (a + 1));
            if lowest(mb) < lowest(ma) - 1e-10 {
                violations.push((ma.abs(), mb.abs()));
            }
        }
    }
    violations.sort_unstable();
    violations.dedup();
    Ok(StabilityCertificate {
        weakly_stable,
        strongly_stable,
        margins,
        reports,
        mode_monotonicity_violations: violations,
    })
}

/// Gap-eigenvalue search entry: an eigenvalue counts only if it survives one
/// grid doubling inside `(GAP_FLOOR, 1/4 - 2 * GAP_MARGIN)`.
#[derive(Debug, Clone, Copy)]
pub struct GapEigenvalue {
    pub lambda: f64,
    pub m: i32,
    pub value: f64,
    pub value_refined: f64,
}

pub fn confirmed_gap_eigenvalue(
    geom: &TargetGeometry,
    lambda: f64,
    grid: &RadialGrid,
    grid_doubled: &RadialGrid,
    m: ModeIndex,
) -> Result<Option<GapEigenvalue>> {
    let coarse = gap_candidate(geom, lambda, grid, m)?;
    let fine = gap_candidate(geom, lambda, grid_doubled, m)?;
    match (coarse, fine) {
        (Some(c), Some(f)) => Ok(Some(GapEigenvalue {
            lambda,
            m: m.0,
            value: c,
            value_refined: f,
        })),
        _ => Ok(None),
    }
}

/// Numerical estimate of the sphere-target threshold: the smallest `lambda`
/// at which a grid-confirmed gap eigenvalue appears. The value is
/// conjecture-grade (it depends on the gap window and the refinement
/// policy), not ground truth.
pub fn critical_lambda_estimate(
    geom: &TargetGeometry,
    grid: &RadialGrid,
    grid_doubled: &RadialGrid,
    m: ModeIndex,
    bisections: usize,
) -> Result<f64> {
    let has_gap = |lambda: f64| -> Result<bool> {
        Ok(confirmed_gap_eigenvalue(geom, lambda, grid, grid_doubled, m)?.is_some())
    };
    let mut lo = 0.05;
    let mut hi = 0.05;
    while !has_gap(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::InvalidParameter(
                "no gap eigenvalue up to lambda = 64".into(),
            ));
        }
    }
    for _ in 0..bisections {
        let mid = 0.5 * (lo + hi);
        if has_gap(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn gap_candidate(
    geom: &TargetGeometry,
    lambda: f64,
    grid: &RadialGrid,
    m: ModeIndex,
) -> Result<Option<f64>> {
    let profile = crate::target::harmonic_profile(geom, lambda, grid)?;
    let coeffs = crate::frame::coulomb_frame(geom, &profile, grid)?;
    let op = assemble_h(geom, &profile, &coeffs, grid, m)?;
    let eigs = lowest_eigenvalues(&op.h.form, &grid.weights, 1, 1e-15);
    let e = eigs[0];
    if e > GAP_FLOOR && e < 0.25 - 2.0 * GAP_MARGIN {
        Ok(Some(e))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::coulomb_frame;
    use crate::geometry::{build_grid, mode_laplacian, GridScheme};
    use crate::target::harmonic_profile;
    use crate::testfields;

    fn setup(
        geom: &TargetGeometry,
        lambda: f64,
        r_max: f64,
        n: usize,
        scheme: GridScheme,
        m: i32,
    ) -> (RadialGrid, ModeOperator) {
        let grid = build_grid(r_max, n, scheme).unwrap();
        let q = harmonic_profile(geom, lambda, &grid).unwrap();
        let cf = coulomb_frame(geom, &q, &grid).unwrap();
        let op = assemble_h(geom, &q, &cf, &grid, ModeIndex(m)).unwrap();
        (grid, op)
    }

    #[test]
    fn lambda_zero_reduces_to_pure_laplacian() {
        let geom = TargetGeometry::sphere();
        let (grid, op) = setup(&geom, 0.0, 15.0, 400, GridScheme::Uniform, 2);
        let lap = mode_laplacian(&grid, ModeIndex(2));
        for i in 0..grid.n {
            assert!((op.h.form.diag[i] - lap.form.diag[i]).abs() < 1e-12);
        }
        for i in 0..grid.n - 1 {
            assert_eq!(op.h.form.off[i], lap.form.off[i]);
        }
    }

    #[test]
    fn symmetry_defect_below_tolerance() {
        let geom = TargetGeometry::hyperbolic();
        let (grid, op) = setup(&geom, 0.5, 18.0, 350, GridScheme::graded_default(), 1);
        let mut rng = testfields::rng(11);
        for _ in 0..50 {
            let f = testfields::smooth_complex(&grid, &mut rng, 0.02, 0.9);
            let g = testfields::smooth_complex(&grid, &mut rng, 0.02, 0.9);
            let hf = op.apply(&grid, &f);
            let hg = op.apply(&grid, &g);
            let lhs = grid.l2_inner(&hf, &g).unwrap();
            let rhs = grid.l2_inner(&f, &hg).unwrap();
            assert!((lhs - rhs).norm() < 1e-10 * grid.l2_norm(&f) * grid.l2_norm(&g));
        }
    }

    #[test]
    fn discrete_adjoint_exact_and_consistent_with_analytic_form() {
        let geom = TargetGeometry::sphere();
        let (grid, op) = setup(&geom, 1.0, 20.0, 800, GridScheme::Uniform, 1);
        let mut rng = testfields::rng(23);
        for _ in 0..20 {
            let f = testfields::bump_complex(&grid, &mut rng);
            let g = testfields::bump_complex(&grid, &mut rng);
            let lf = op.apply_l(&f);
            let lsg = op.apply_l_adjoint(&grid, &g);
            let lhs = grid.l2_inner(&lf, &g).unwrap();
            let rhs = grid.l2_inner(&f, &lsg).unwrap();
            assert!(
                (lhs - rhs).norm() < 1e-11 * grid.l2_norm(&f) * grid.l2_norm(&g),
                "adjoint defect {}",
                (lhs - rhs).norm()
            );
        }
        // Analytic adjoint form -g' - coth(r) g - b g on a smooth bump.
        let g = testfields::bump_complex(&grid, &mut rng);
        let lsg = op.apply_l_adjoint(&grid, &g);
        let dg = grid.derivative_complex(&g);
        let q = harmonic_profile(&geom, 1.0, &grid).unwrap();
        let cf = coulomb_frame(&geom, &q, &grid).unwrap();
        let mut analytic = vec![Complex64::default(); grid.n];
        for i in 0..grid.n {
            let r: f64 = grid.nodes[i];
            let b = (1.0 + cf.a_theta[i]) / r.sinh();
            analytic[i] = -dg[i] - g[i] * (1.0 / r.tanh() + b);
        }
        let diff: Vec<Complex64> = lsg.iter().zip(&analytic).map(|(a, b)| a - b).collect();
        assert!(grid.l2_norm(&diff) < 5e-3 * grid.l2_norm(&g));
    }

    #[test]
    fn factorization_defect_small_and_refinement_convergent() {
        for (geom, lambda) in [
            (TargetGeometry::sphere(), 1.0),
            (TargetGeometry::hyperbolic(), 0.5),
        ] {
            for m in [0, 1] {
                let mut defects = Vec::new();
                for n in [1000usize, 2000] {
                    let (grid, op) = setup(&geom, lambda, 20.0, n, GridScheme::Uniform, m);
                    let mut rng = testfields::rng(97);
                    let mut worst = 0.0f64;
                    for _ in 0..20 {
                        let f = testfields::bump_complex(&grid, &mut rng);
                        let hf = op.apply(&grid, &f);
                        let llf = op.apply_factored(&grid, &f);
                        let diff: Vec<Complex64> =
                            hf.iter().zip(&llf).map(|(a, b)| a - b).collect();
                        worst = worst.max(grid.l2_norm(&diff) / grid.l2_norm(&f));
                    }
                    defects.push(worst);
                }
                assert!(defects[1] < 1e-2, "defect at n=2000: {}", defects[1]);
                assert!(defects[0] / defects[1] > 3.0, "rate for m={m}: {defects:?}");
            }
        }
    }

    #[test]
    fn hyperbolic_target_spectra_stay_at_the_gap() {
        let geom = TargetGeometry::hyperbolic();
        for lambda in [0.3, 0.6, 0.9] {
            for m in [0, 1, 2] {
                let (grid, op) = setup(&geom, lambda, 20.0, 1000, GridScheme::Uniform, m);
                let report = lowest_spectrum(&op, &grid, lambda, 2).unwrap();
                assert!(
                    report.lowest_eigenvalues[0] >= 0.25 - 0.01,
                    "lambda={lambda} m={m}: {}",
                    report.lowest_eigenvalues[0]
                );
                assert!(report.gap_eigenvalues.is_empty());
                assert!(report.resonance_quotient > 0.0);
                assert!(report.residuals.iter().all(|r| *r <= 1e-8));
                // Sorted ascending.
                assert!(report.lowest_eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn sphere_large_lambda_exhibits_gap_eigenvalue() {
        let geom = TargetGeometry::sphere();
        let grid = build_grid(20.0, 1500, GridScheme::graded_default()).unwrap();
        let doubled = build_grid(20.0, 3000, GridScheme::graded_default()).unwrap();
        let mut found = None;
        for lambda in [5.0, 10.0, 20.0] {
            for m in [0, 1] {
                if let Some(gap) =
                    confirmed_gap_eigenvalue(&geom, lambda, &grid, &doubled, ModeIndex(m)).unwrap()
                {
                    found = Some(gap);
                }
            }
        }
        let gap = found.expect("no gap eigenvalue found for large lambda");
        assert!(gap.value > 0.0 && gap.value < 0.23, "gap {gap:?}");
        assert!((gap.value - gap.value_refined).abs() < 0.02, "{gap:?}");
    }

    #[test]
    fn certificates_match_expected_stability() {
        let grid = build_grid(20.0, 1600, GridScheme::graded_default()).unwrap();
        let cert = stability_certificate(
            &TargetGeometry::hyperbolic(),
            0.5,
            &grid,
            2,
            CertificateMargins::default(),
        )
        .unwrap();
        assert!(cert.weakly_stable && cert.strongly_stable);
        assert!(cert.mode_monotonicity_violations.is_empty());

        let cert = stability_certificate(
            &TargetGeometry::sphere(),
            0.1,
            &grid,
            2,
            CertificateMargins::default(),
        )
        .unwrap();
        assert!(cert.strongly_stable);

        let cert = stability_certificate(
            &TargetGeometry::sphere(),
            20.0,
            &grid,
            2,
            CertificateMargins::default(),
        )
        .unwrap();
        assert!(!cert.strongly_stable);
        assert!(
            cert.reports.iter().any(|r| !r.gap_eigenvalues.is_empty()),
            "expected a listed gap eigenvalue"
        );
        // Weak stability survives: H = L*L is nonnegative.
        assert!(cert.weakly_stable);
        assert!(stability_certificate(
            &TargetGeometry::sphere(),
            1.0,
            &grid,
            1,
            CertificateMargins::default()
        )
        .is_err());
    }

    #[test]
    fn eigenvalues_converge_at_second_order_in_the_grid() {
        // Richardson triple in n at fixed truncation radius.
        let geom = TargetGeometry::hyperbolic();
        let mut eigs = Vec::new();
        for n in [500usize, 1000, 2000] {
            let (grid, op) = setup(&geom, 0.5, 20.0, n, GridScheme::Uniform, 1);
            eigs.push(
                lowest_spectrum(&op, &grid, 0.5, 1)
                    .unwrap()
                    .lowest_eigenvalues[0],
            );
        }
        let d1 = (eigs[0] - eigs[1]).abs();
        let d2 = (eigs[1] - eigs[2]).abs();
        assert!(
            d1 / d2 > 3.5,
            "Richardson ratio {:.2} (eigs {eigs:?})",
            d1 / d2
        );
    }

    #[test]
    fn sphere_threshold_lambda_is_refinement_stable() {
        // Conjecture-grade estimate of the smallest lambda with a gap
        // eigenvalue; the estimate moves by less than 10% when the grids
        // used for confirmation are refined.
        let geom = TargetGeometry::sphere();
        let coarse = build_grid(20.0, 800, GridScheme::graded_default()).unwrap();
        let coarse2 = build_grid(20.0, 1600, GridScheme::graded_default()).unwrap();
        let fine = build_grid(20.0, 1600, GridScheme::graded_default()).unwrap();
        let fine2 = build_grid(20.0, 3200, GridScheme::graded_default()).unwrap();
        let a = critical_lambda_estimate(&geom, &coarse, &coarse2, ModeIndex(0), 10).unwrap();
        let b = critical_lambda_estimate(&geom, &fine, &fine2, ModeIndex(0), 10).unwrap();
        assert!(
            (a - b).abs() <= 0.1 * a.max(b),
            "threshold estimates {a:.4} vs {b:.4}"
        );
        // Strong stability holds for small boundary values, so the
        // threshold must sit away from zero.
        assert!(a > 0.2, "threshold {a}");
    }

    #[test]
    fn zero_mode_exactness_at_lambda_zero() {
        let geom = TargetGeometry::sphere();
        let (grid, op) = setup(&geom, 0.0, 20.0, 600, GridScheme::Uniform, 0);
        let lap = mode_laplacian(&grid, ModeIndex(0));
        let pairs_h = lowest_eigenpairs(&op, &grid, 2).unwrap();
        let lap_op = ModeOperator {
            m: ModeIndex(0),
            h: lap,
            potential: vec![0.0; grid.n],
            l_sub: op.l_sub.clone(),
            l_diag: op.l_diag.clone(),
            l_sup: op.l_sup.clone(),
        };
        let pairs_l = lowest_eigenpairs(&lap_op, &grid, 2).unwrap();
        for ((e1, v1), (e2, v2)) in pairs_h.iter().zip(&pairs_l) {
            assert!((e1 - e2).abs() < 1e-12);
            let align: f64 = v1
                .iter()
                .zip(v2)
                .zip(&grid.weights)
                .map(|((a, b), w)| a * b * w)
                .sum();
            assert!((align.abs() - 1.0).abs() < 1e-7, "alignment {align}");
        }
    }

    #[test]
    fn h1thr_norm_cases() {
        let geom = TargetGeometry::hyperbolic();
        let (grid, _) = setup(&geom, 0.5, 20.0, 1500, GridScheme::Uniform, 0);
        let q = harmonic_profile(&geom, 0.5, &grid).unwrap();
        let cf = coulomb_frame(&geom, &q, &grid).unwrap();

        let zero = vec![Complex64::default(); grid.n];
        assert_eq!(h1thr_norm(&grid, &cf, &zero, ModeIndex(0)).unwrap(), 0.0);

        // (d_r + 1/2) e^{-r/2} = 0: the radial term nearly vanishes.
        let f: Vec<Complex64> = grid
            .nodes
            .iter()
            .map(|r| Complex64::new((-0.5 * r).exp(), 0.0))
            .collect();
        let df = grid.derivative_complex(&f);
        let radial: Vec<Complex64> = (0..grid.n).map(|i| df[i] + 0.5 * f[i]).collect();
        assert!(grid.l2_norm(&radial) < 1e-4 * grid.l2_norm(&f));

        // Equivalence with the plain H^1 norm on compactly supported fields.
        let mut rng = testfields::rng(5);
        for _ in 0..20 {
            let f = testfields::bump_complex(&grid, &mut rng);
            let thr = h1thr_norm(&grid, &cf, &f, ModeIndex(1)).unwrap();
            let df = grid.derivative_complex(&f);
            let h1 = grid.l2_norm(&df) + grid.l2_norm(&f);
            let ratio = thr / h1;
            assert!(ratio > 0.05 && ratio < 20.0, "ratio {ratio}");
        }
    }
}
