//! Discrete evaluators for the dispersive function-space machinery: the
//! local smoothing norm LE and its dual, Strichartz norms over the standard
//! admissible pairs, the master dispersive norm combining them over heat
//! time, and an empirical functional-inequality harness.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{mode_laplacian, AnnulusDecomposition, ModeIndex, RadialGrid};
use crate::heat::{lp_decompose, SemigroupStepper};
use crate::testfields;

#[derive(Debug, Clone)]
pub struct NormConfig {
    /// Log-uniform heat times for the dyadic part of LE, inside `(0, 1/2]`.
    pub sigma_grid: Vec<f64>,
    /// Log-uniform heat times for the low band, inside `(1/8, 4]`.
    pub low_band: Vec<f64>,
    /// Weight exponent in `m(s) = max(s^{-delta}, 1)`; must lie in `(0, 1/4)`.
    pub delta: f64,
    /// Strichartz exponents `(p, q)`; `p = infinity` is allowed.
    pub admissible_pairs: Vec<(f64, f64)>,
}

impl NormConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.25) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1/4), got {delta}"
            )));
        }
        let log_grid = |lo: f64, hi: f64, per_octave: f64| -> Vec<f64> {
            let n = ((hi / lo).log2() * per_octave).ceil() as usize;
            (0..=n)
                .map(|j| lo * (hi / lo).powf(j as f64 / n as f64))
                .collect()
        };
        Ok(NormConfig {
            sigma_grid: log_grid(1e-4, 0.5, 4.0),
            low_band: log_grid(0.125 * 1.0001, 4.0, 4.0),
            delta,
            admissible_pairs: vec![(f64::INFINITY, 2.0), (4.0, 4.0), (8.0 / 3.0, 8.0 / 3.0)],
        })
    }

    pub fn weight_m(&self, s: f64) -> f64 {
        s.powf(-self.delta).max(1.0)
    }
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig::new(0.1).unwrap()
    }
}

/// A uniformly sampled time series of one angular mode.
pub struct TimeSeries<'a> {
    pub times: &'a [f64],
    pub fields: &'a [Vec<Complex64>],
}

impl<'a> TimeSeries<'a> {
    fn check(&self, n: usize) -> Result<()> {
        if self.times.len() != self.fields.len() || self.times.len() < 2 {
            return Err(Error::InvalidParameter(
                "time series needs matching times/fields with at least 2 samples".into(),
            ));
        }
        if self.fields.iter().any(|f| f.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self
                    .fields
                    .iter()
                    .map(|f| f.len())
                    .find(|l| *l != n)
                    .unwrap_or(0),
            });
        }
        Ok(())
    }

    fn trapezoid_weight(&self, k: usize) -> f64 {
        let t = self.times;
        if k == 0 {
            0.5 * (t[1] - t[0])
        } else if k + 1 == t.len() {
            0.5 * (t[k] - t[k - 1])
        } else {
            0.5 * (t[k + 1] - t[k - 1])
        }
    }
}

/// Spatial accumulators of one heat time: time-integrated squared masses over
/// the ball `A_{<= -k_sigma}`, the intermediate shells, the weighted
/// exterior, and the low-band weight.
struct SigmaAccum {
    ball: f64,
    shells: Vec<f64>,
    shell_indices: Vec<i32>,
    exterior: f64,
    low: f64,
}

fn accumulate_sigma(
    grid: &RadialGrid,
    ann: &AnnulusDecomposition,
    sigma: f64,
    field: &[Complex64],
    wt: f64,
    acc: &mut SigmaAccum,
    dual: bool,
) {
    let k_sigma = AnnulusDecomposition::k_sigma(sigma);
    let tau = std::f64::consts::TAU;
    let ball = ann.ball(-k_sigma);
    for i in ball.clone() {
        acc.ball += wt * tau * grid.weights[i] * field[i].norm_sqr();
    }
    if acc.shell_indices.is_empty() {
        acc.shell_indices = (-k_sigma..0).collect();
        acc.shells = vec![0.0; acc.shell_indices.len()];
    }
    for (slot, l) in acc.shell_indices.iter().enumerate() {
        for i in ann.shell(*l) {
            let r = grid.nodes[i];
            let w = if dual { r } else { 1.0 };
            acc.shells[slot] += wt * tau * grid.weights[i] * w * field[i].norm_sqr();
        }
    }
    for i in ann.exterior(0) {
        let r = grid.nodes[i];
        let w = if dual { r.powi(4) } else { r.powi(-4) };
        acc.exterior += wt * tau * grid.weights[i] * w * field[i].norm_sqr();
    }
    for i in 0..grid.n {
        let r = grid.nodes[i];
        let w2 = (1.0 + r * r).powi(2);
        let w = if dual { w2 } else { 1.0 / w2 };
        acc.low += wt * tau * grid.weights[i] * w * field[i].norm_sqr();
    }
}

fn sigma_component_norm(sigma: f64, acc: &SigmaAccum, dual: bool) -> f64 {
    if dual {
        // sigma^{1/4} ||.||_{ball} + sum_l ||r^{1/2} .||_{A_l} + ||r^2 .||_{ext}.
        let mut v = sigma.powf(0.25) * acc.ball.sqrt();
        for s in &acc.shells {
            v += s.sqrt();
        }
        v + acc.exterior.sqrt()
    } else {
        // sigma^{-1/4} ||.||_{ball} + sup_l 2^{-l/2} ||.||_{A_l} + ||r^{-2} .||_{ext}.
        let v = sigma.powf(-0.25) * acc.ball.sqrt();
        let mut shell_sup = 0.0f64;
        for (s, l) in acc.shells.iter().zip(&acc.shell_indices) {
            shell_sup = shell_sup.max(2f64.powf(-0.5 * *l as f64) * s.sqrt());
        }
        v + shell_sup + acc.exterior.sqrt()
    }
}

fn le_or_dual(
    series: &TimeSeries<'_>,
    grid: &RadialGrid,
    ann: &AnnulusDecomposition,
    stepper: &SemigroupStepper,
    cfg: &NormConfig,
    dual: bool,
) -> Result<f64> {
    series.check(grid.n)?;
    let n_sigma = cfg.sigma_grid.len();
    let n_low = cfg.low_band.len();
    let mut dyadic: Vec<SigmaAccum> = (0..n_sigma)
        .map(|_| SigmaAccum {
            ball: 0.0,
            shells: Vec::new(),
            shell_indices: Vec::new(),
            exterior: 0.0,
            low: 0.0,
        })
        .collect();
    let mut low: Vec<f64> = vec![0.0; n_low];
    // Combined sigma walk per time sample: the low band reuses the heated
    // states P_{>= sigma}, the dyadic part the projections P_sigma.
    let mut all_sigmas: Vec<f64> = cfg.sigma_grid.clone();
    all_sigmas.extend(cfg.low_band.iter().copied());
    all_sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all_sigmas.dedup();
    for (k, field) in series.fields.iter().enumerate() {
        let wt = series.trapezoid_weight(k);
        let dec = lp_decompose(stepper, field, &all_sigmas)?;
        for (j, sigma) in cfg.sigma_grid.iter().enumerate() {
            let idx = all_sigmas.partition_point(|s| s < sigma);
            accumulate_sigma(grid, ann, *sigma, &dec.p_at[idx], wt, &mut dyadic[j], dual);
        }
        for (j, sigma) in cfg.low_band.iter().enumerate() {
            let idx = all_sigmas.partition_point(|s| s < sigma);
            let tau = std::f64::consts::TAU;
            let mut acc = 0.0;
            for i in 0..grid.n {
                let r = grid.nodes[i];
                let w2 = (1.0 + r * r).powi(2);
                let w = if dual { w2 } else { 1.0 / w2 };
                acc += tau * grid.weights[i] * w * dec.p_geq[idx][i].norm_sqr();
            }
            low[j] += wt * acc;
        }
    }
    // Log-trapezoid integrals in sigma.
    let mut total = 0.0;
    for j in 0..n_sigma {
        let comp = sigma_component_norm(cfg.sigma_grid[j], &dyadic[j], dual);
        let weight = if dual {
            cfg.sigma_grid[j].sqrt()
        } else {
            cfg.sigma_grid[j].powf(-0.5)
        };
        total += weight * comp * comp * log_trapezoid_weight(&cfg.sigma_grid, j);
    }
    for j in 0..n_low {
        total += low[j] * log_trapezoid_weight(&cfg.low_band, j);
    }
    Ok(total.sqrt())
}

fn log_trapezoid_weight(gridv: &[f64], j: usize) -> f64 {
    let n = gridv.len();
    if n == 1 {
        return 1.0;
    }
    if j == 0 {
        0.5 * (gridv[1] / gridv[0]).ln()
    } else if j + 1 == n {
        0.5 * (gridv[n - 1] / gridv[n - 2]).ln()
    } else {
        0.5 * (gridv[j + 1] / gridv[j - 1]).ln()
    }
}

/// Local smoothing norm of a mode time series.
pub fn le_norm(
    series: &TimeSeries<'_>,
    grid: &RadialGrid,
    ann: &AnnulusDecomposition,
    stepper: &SemigroupStepper,
    cfg: &NormConfig,
) -> Result<f64> {
    le_or_dual(series, grid, ann, stepper, cfg, false)
}

/// Dual local smoothing norm (source norm).
pub fn le_star_norm(
    series: &TimeSeries<'_>,
    grid: &RadialGrid,
    ann: &AnnulusDecomposition,
    stepper: &SemigroupStepper,
    cfg: &NormConfig,
) -> Result<f64> {
    le_or_dual(series, grid, ann, stepper, cfg, true)
}

/// Strichartz norm: sup over the configured admissible pairs of
/// `|| v ||_{L^p_t L^q_x}`.
pub fn strichartz_norm(
    series: &TimeSeries<'_>,
    grid: &RadialGrid,
    cfg: &NormConfig,
) -> Result<f64> {
    series.check(grid.n)?;
    let mut worst = 0.0f64;
    for (p, q) in &cfg.admissible_pairs {
        let mut val: f64 = 0.0;
        if p.is_infinite() {
            for field in series.fields {
                val = val.max(grid.lp_norm(field, *q)?);
            }
        } else {
            let mut acc = 0.0;
            for (k, field) in series.fields.iter().enumerate() {
                let nq = grid.lp_norm(field, *q)?;
                acc += series.trapezoid_weight(k) * nq.powf(*p);
            }
            val = acc.powf(1.0 / p);
        }
        worst = worst.max(val);
    }
    Ok(worst)
}

/// Space-time pairing `int dt <F(t), v(t)>` used by the duality sanity check.
pub fn spacetime_pairing(
    f: &TimeSeries<'_>,
    v: &TimeSeries<'_>,
    grid: &RadialGrid,
) -> Result<Complex64> {
    f.check(grid.n)?;
    v.check(grid.n)?;
    let mut acc = Complex64::default();
    for k in 0..f.times.len() {
        acc += grid.l2_inner(&f.fields[k], &v.fields[k])? * f.trapezoid_weight(k);
    }
    Ok(acc)
}

/// Master dispersive norm of an s-indexed family of mode time series:
/// combines `m(s) s^{1/2} (LE + Str)` of the field and of its rotation
/// derivative (multiplication by `i m` per mode) in `L^infty a n d L^2`
/// against `ds/s` over the family's geometric s-grid.
pub struct SFamilyEntry<'a> {
    pub s: f64,
    pub series: TimeSeries<'a>,
}

pub fn s_norm(
    family: &[SFamilyEntry<'_>],
    m: ModeIndex,
    grid: &RadialGrid,
    ann: &AnnulusDecomposition,
    stepper: &SemigroupStepper,
    cfg: &NormConfig,
) -> Result<f64> {
    if family.is_empty() {
        return Ok(0.0);
    }
    let mut vals = Vec::with_capacity(family.len());
    for entry in family {
        let base = le_norm(&entry.series, grid, ann, stepper, cfg)?
            + strichartz_norm(&entry.series, grid, cfg)?;
        // Rotation derivative acts as multiplication by i m on one mode, so
        // its LE and Strichartz norms scale by |m|.
        let omega_factor = m.0.unsigned_abs() as f64;
        let weight = cfg.weight_m(entry.s) * entry.s.sqrt();
        vals.push(weight * base * (1.0 + omega_factor));
    }
    let sup = vals.iter().cloned().fold(0.0, f64::max);
    let s_points: Vec<f64> = family.iter().map(|e| e.s).collect();
    let mut l2 = 0.0;
    for (j, v) in vals.iter().enumerate() {
        l2 += v * v * log_trapezoid_weight(&s_points, j);
    }
    Ok(sup + l2.sqrt())
}

/// Empirical best constant of one functional inequality over a corpus.
#[derive(Debug, Clone)]
pub struct InequalityEntry {
    pub name: &'static str,
    pub mode: i32,
    pub constant: f64,
    /// Constant measured on the first half of the corpus (stability probe).
    pub constant_half: f64,
}

/// Runs the functional-inequality harness: for a corpus of randomized smooth
/// compactly supported mode fields, measures the best empirical constants of
/// the Poincare, Gagliardo-Nirenberg, and radial Sobolev inequalities.
pub fn inequality_suite(
    grid: &RadialGrid,
    corpus: usize,
    seed: u64,
) -> Result<Vec<InequalityEntry>> {
    let corpus = corpus.max(100);
    let mut out = Vec::new();
    for m in [0i32, 1, 2] {
        let lap = mode_laplacian(grid, ModeIndex(m));
        let mut rng = testfields::rng(seed + m as u64);
        let mut poincare = Vec::new();
        let mut gn = Vec::new();
        let mut radial = Vec::new();
        // Centers are stratified over a fixed ladder so the max statistics
        // are stable under halving or doubling the corpus.
        let ladder = [0.1, 0.2, 0.3, 0.4, 0.5];
        for k in 0..corpus {
            let c = ladder[k % ladder.len()];
            let f = testfields::smooth_complex(grid, &mut rng, c - 0.04, c + 0.04);
            let df = grid.derivative_complex(&f);
            let l2 = grid.l2_norm(&f);
            if l2 == 0.0 {
                continue;
            }
            // ||grad f||^2 = ||f'||^2 + m^2 || f / sinh ||^2 per mode.
            let mut grad_sq = 0.0;
            for i in 0..grid.n {
                let sh = grid.nodes[i].sinh();
                grad_sq += (df[i].norm_sqr() + (m * m) as f64 * f[i].norm_sqr() / (sh * sh))
                    * grid.weights[i];
            }
            let grad = (std::f64::consts::TAU * grad_sq).sqrt();
            poincare.push(l2 / grad);

            // Gagliardo-Nirenberg at s = 1:
            // ||f||_inf <= C s^{-1/2} (||f|| + ||s^{1/2} grad f|| + ||s lap f||).
            let linf = grid.lp_norm(&f, f64::INFINITY)?;
            let lapf = lap.apply_complex(grid, &f);
            let denom = l2 + grad + grid.l2_norm(&lapf);
            gn.push(linf / denom);

            // Radial Sobolev:
            // ||sinh^{1/2} r f||_inf <= C ||<Om> f||^{1/2} ||grad <Om> f||^{1/2},
            // with Omega realized as multiplication by i m.
            let mut weighted_sup = 0.0f64;
            for i in 0..grid.n {
                weighted_sup = weighted_sup.max(grid.nodes[i].sinh().sqrt() * f[i].norm());
            }
            let om_factor = 1.0 + m.unsigned_abs() as f64;
            let denom = (om_factor * l2).sqrt() * (om_factor * grad).sqrt();
            radial.push(weighted_sup / denom);
        }
        let best = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
        for (name, data) in [
            ("poincare", &poincare),
            ("gagliardo_nirenberg_linf", &gn),
            ("radial_sobolev", &radial),
        ] {
            out.push(InequalityEntry {
                name,
                mode: m,
                constant: best(data),
                constant_half: best(&data[..data.len() / 2]),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, GridScheme};
    use crate::heat::HeatScheme;

    fn env(
        n: usize,
    ) -> (
        RadialGrid,
        AnnulusDecomposition,
        SemigroupStepper,
        NormConfig,
    ) {
        let grid = build_grid(20.0, n, GridScheme::Uniform).unwrap();
        let ann = AnnulusDecomposition::new(&grid);
        let stepper = SemigroupStepper::laplacian(&grid, ModeIndex(0), HeatScheme::CrankNicolson);
        (grid, ann, stepper, NormConfig::default())
    }

    fn static_series(
        grid: &RadialGrid,
        t_max: f64,
        samples: usize,
    ) -> (Vec<f64>, Vec<Vec<Complex64>>) {
        let mut rng = testfields::rng(5);
        let f = testfields::bump_complex(grid, &mut rng);
        let times: Vec<f64> = (0..samples)
            .map(|k| t_max * k as f64 / (samples - 1) as f64)
            .collect();
        let fields = vec![f; samples];
        (times, fields)
    }

    #[test]
    fn zero_fields_have_zero_norms() {
        let (grid, ann, stepper, cfg) = env(300);
        let times = vec![0.0, 0.5, 1.0];
        let fields = vec![vec![Complex64::default(); grid.n]; 3];
        let series = TimeSeries {
            times: &times,
            fields: &fields,
        };
        assert_eq!(le_norm(&series, &grid, &ann, &stepper, &cfg).unwrap(), 0.0);
        assert_eq!(
            le_star_norm(&series, &grid, &ann, &stepper, &cfg).unwrap(),
            0.0
        );
        assert_eq!(strichartz_norm(&series, &grid, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn config_validates_delta() {
        assert!(NormConfig::new(0.3).is_err());
        assert!(NormConfig::new(0.0).is_err());
        assert!(NormConfig::new(0.12).is_ok());
    }

    #[test]
    fn static_field_scales_as_sqrt_of_interval() {
        let (grid, ann, stepper, cfg) = env(400);
        let (t1, f1) = static_series(&grid, 1.0, 21);
        let (t2, f2) = static_series(&grid, 2.0, 41);
        let s1 = TimeSeries {
            times: &t1,
            fields: &f1,
        };
        let s2 = TimeSeries {
            times: &t2,
            fields: &f2,
        };
        let le1 = le_norm(&s1, &grid, &ann, &stepper, &cfg).unwrap();
        let le2 = le_norm(&s2, &grid, &ann, &stepper, &cfg).unwrap();
        assert!(
            (le2 / le1 - std::f64::consts::SQRT_2).abs() < 0.01 * std::f64::consts::SQRT_2,
            "ratio {}",
            le2 / le1
        );
        // Monotone under time-interval inclusion.
        assert!(le2 > le1);
    }

    #[test]
    fn norms_absolutely_homogeneous_and_definite() {
        let (grid, ann, stepper, cfg) = env(300);
        let (times, fields) = static_series(&grid, 1.0, 9);
        let series = TimeSeries {
            times: &times,
            fields: &fields,
        };
        let base_le = le_norm(&series, &grid, &ann, &stepper, &cfg).unwrap();
        let base_str = strichartz_norm(&series, &grid, &cfg).unwrap();
        assert!(base_le > 0.0 && base_str > 0.0);
        for c in [0.5f64, 2.0, 7.3] {
            let scaled: Vec<Vec<Complex64>> = fields
                .iter()
                .map(|f| f.iter().map(|z| z * c).collect())
                .collect();
            let s = TimeSeries {
                times: &times,
                fields: &scaled,
            };
            let le = le_norm(&s, &grid, &ann, &stepper, &cfg).unwrap();
            let st = strichartz_norm(&s, &grid, &cfg).unwrap();
            assert!((le - c * base_le).abs() < 1e-9 * c * base_le);
            assert!((st - c * base_str).abs() < 1e-9 * c * base_str);
        }
    }

    #[test]
    fn strichartz_linf_l2_component_is_exact_on_unitary_evolution() {
        use crate::flows::SchrodingerStepper;
        use crate::frame::coulomb_frame;
        use crate::linop::assemble_h;
        use crate::target::{harmonic_profile, TargetGeometry};
        let (grid, _, _, cfg) = env(400);
        let geom = TargetGeometry::hyperbolic();
        let q = harmonic_profile(&geom, 0.5, &grid).unwrap();
        let cf = coulomb_frame(&geom, &q, &grid).unwrap();
        let op = assemble_h(&geom, &q, &cf, &grid, ModeIndex(1)).unwrap();
        let stepper = SchrodingerStepper::new(&grid, &op);
        let mut rng = testfields::rng(77);
        let phi0 = testfields::bump_complex(&grid, &mut rng);
        let n0 = grid.l2_norm(&phi0);
        let mut fields = vec![phi0.clone()];
        let mut times = vec![0.0];
        let mut phi = phi0;
        for k in 0..20 {
            phi = stepper.step(&phi, 0.05).unwrap();
            fields.push(phi.clone());
            times.push(0.05 * (k + 1) as f64);
        }
        let series = TimeSeries {
            times: &times,
            fields: &fields,
        };
        let only_linf_l2 = NormConfig {
            admissible_pairs: vec![(f64::INFINITY, 2.0)],
            ..cfg
        };
        let st = strichartz_norm(&series, &grid, &only_linf_l2).unwrap();
        assert!((st - n0).abs() < 1e-9 * n0, "{st} vs {n0}");
    }

    #[test]
    fn duality_pairing_bounded_by_norm_product() {
        let (grid, ann, stepper, cfg) = env(300);
        let mut rng = testfields::rng(91);
        let times: Vec<f64> = (0..9).map(|k| 0.25 * k as f64).collect();
        for _ in 0..5 {
            let fields_f: Vec<Vec<Complex64>> = (0..9)
                .map(|_| testfields::smooth_complex(&grid, &mut rng, 0.05, 0.7))
                .collect();
            let fields_v: Vec<Vec<Complex64>> = (0..9)
                .map(|_| testfields::smooth_complex(&grid, &mut rng, 0.05, 0.7))
                .collect();
            let f = TimeSeries {
                times: &times,
                fields: &fields_f,
            };
            let v = TimeSeries {
                times: &times,
                fields: &fields_v,
            };
            let pairing = spacetime_pairing(&f, &v, &grid).unwrap().norm();
            let bound = le_star_norm(&f, &grid, &ann, &stepper, &cfg).unwrap()
                * le_norm(&v, &grid, &ann, &stepper, &cfg).unwrap();
            assert!(
                pairing <= bound * 1.5,
                "pairing {pairing} vs bound {bound} (slack violated)"
            );
        }
    }

    #[test]
    fn s_norm_combines_le_and_strichartz() {
        let (grid, ann, stepper, cfg) = env(300);
        let (times, fields) = static_series(&grid, 1.0, 9);
        let series1 = TimeSeries {
            times: &times,
            fields: &fields,
        };
        let series2 = TimeSeries {
            times: &times,
            fields: &fields,
        };
        let family = vec![
            SFamilyEntry {
                s: 0.5,
                series: series1,
            },
            SFamilyEntry {
                s: 1.0,
                series: series2,
            },
        ];
        let total = s_norm(&family, ModeIndex(1), &grid, &ann, &stepper, &cfg).unwrap();
        assert!(total > 0.0);
        // Zero family vanishes.
        let zfields = vec![vec![Complex64::default(); grid.n]; times.len()];
        let zf = TimeSeries {
            times: &times,
            fields: &zfields,
        };
        let family = vec![SFamilyEntry { s: 1.0, series: zf }];
        assert_eq!(
            s_norm(&family, ModeIndex(1), &grid, &ann, &stepper, &cfg).unwrap(),
            0.0
        );
    }

    #[test]
    fn inequality_constants_finite_and_stable() {
        let grid = build_grid(20.0, 800, GridScheme::Uniform).unwrap();
        let entries = inequality_suite(&grid, 100, 7).unwrap();
        assert_eq!(entries.len(), 9);
        for e in &entries {
            assert!(e.constant.is_finite() && e.constant > 0.0, "{e:?}");
            // Stability under corpus doubling: halving the corpus moves the
            // empirical constant by less than 20%.
            assert!(
                (e.constant - e.constant_half).abs() <= 0.2 * e.constant,
                "{e:?}"
            );
        }
        // Poincare on the zero mode: the sharp constant is 2 (gap 1/4).
        let p0 = entries
            .iter()
            .find(|e| e.name == "poincare" && e.mode == 0)
            .unwrap();
        assert!(p0.constant <= 2.02, "Poincare constant {}", p0.constant);
        // Refinement stability: constants move by less than 20% per doubling.
        let fine = build_grid(20.0, 1600, GridScheme::Uniform).unwrap();
        let refined = inequality_suite(&fine, 100, 7).unwrap();
        for (a, b) in entries.iter().zip(&refined) {
            assert!(
                (a.constant - b.constant).abs() <= 0.2 * a.constant.max(b.constant),
                "{a:?} vs {b:?}"
            );
        }
    }
}
