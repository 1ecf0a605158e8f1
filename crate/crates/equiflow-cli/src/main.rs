//! Experiment driver: deterministic runs of the spectral certificates, the
//! nonlinear flows, the caloric gauge construction, and the norm harnesses,
//! all emitting CSV with a reproducibility header. Exit code 0 only if every
//! invariant declared by the run held.

mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use equiflow::caloric::{
    build_caloric_gauge, check_curvature_identity, check_frame, heat_eom_residual_profile,
    CaloricConfig,
};
use equiflow::flows::{
    perturb_around, relax_to_equilibrium, run_hmhf, run_smap, state_from_profile, FlowSolver,
    RunConfig, SchrodingerStepper,
};
use equiflow::frame::coulomb_frame;
use equiflow::geometry::{build_grid, AnnulusDecomposition, GridScheme, ModeIndex, RadialGrid};
use equiflow::heat::{decay_fit, HeatScheme, SemigroupStepper};
use equiflow::linop::{assemble_h, lowest_spectrum, stability_certificate, CertificateMargins};
use equiflow::norms::{inequality_suite, le_norm, le_star_norm, s_norm, strichartz_norm};
use equiflow::norms::{NormConfig, SFamilyEntry, TimeSeries};
use equiflow::target::{harmonic_profile, TargetGeometry};
use equiflow::testfields;

use config::{FileConfig, Resolver};

#[derive(Parser)]
#[command(
    name = "equiflow",
    version,
    about = "equivariant geometric flow laboratory"
)]
struct Cli {
    /// Optional `key = value` config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Eigenvalue sweep of the linearized operator per angular mode.
    Spectrum(SpectrumArgs),
    /// Harmonic map heat flow of a perturbed harmonic map.
    Hmhf(FlowArgs),
    /// Schroedinger maps evolution of a perturbed harmonic map.
    Smap(FlowArgs),
    /// Caloric gauge construction along a heat flow.
    Caloric(CaloricArgs),
    /// Linear semigroup decay curves per mode.
    HeatDecay(HeatDecayArgs),
    /// Dispersive norms of a linear mode evolution.
    Norms(NormArgs),
    /// Functional-inequality harness.
    Inequalities(IneqArgs),
    /// Runs the acceptance suite; one pass/fail line per criterion.
    Regress,
}

#[derive(Args)]
struct GridFlags {
    /// Target surface: s2 or h2.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rmax: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Grid scheme: uniform or graded.
    #[arg(long)]
    scheme: Option<String>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    grid: GridFlags,
    /// Largest |m| in the sweep.
    #[arg(long)]
    mmax: Option<i32>,
    /// Number of eigenvalues per mode.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated lambda list overriding the single --lambda.
    #[arg(long)]
    lambdas: Option<String>,
    /// Also run the stability certificate and fail the exit code if the
    /// strong condition does not hold.
    #[arg(long)]
    certify: bool,
    /// Optional CSV of the profile and Coulomb frame coefficients
    /// (lambda,r,rho,a_theta,p) for every swept lambda.
    #[arg(long)]
    profile_out: Option<PathBuf>,
}

#[derive(Args)]
struct FlowArgs {
    #[command(flatten)]
    grid: GridFlags,
    /// Perturbation frame mode (the equivariant class is mode 1).
    #[arg(long)]
    perturb_m: Option<i32>,
    #[arg(long)]
    perturb_amp: Option<f64>,
    #[arg(long)]
    perturb_center: Option<f64>,
    #[arg(long)]
    perturb_width: Option<f64>,
    /// Step size (ds for hmhf, dt for smap).
    #[arg(long)]
    step: Option<f64>,
    /// Evolution horizon (s_max for hmhf, t_max for smap).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Optional path for the final-state CSV (r, v1, v2, v3).
    #[arg(long)]
    final_out: Option<PathBuf>,
}

#[derive(Args)]
struct CaloricArgs {
    #[command(flatten)]
    grid: GridFlags,
    #[arg(long)]
    perturb_amp: Option<f64>,
    #[arg(long)]
    perturb_center: Option<f64>,
    #[arg(long)]
    perturb_width: Option<f64>,
    /// s-grid points per octave.
    #[arg(long)]
    per_octave: Option<u32>,
}

#[derive(Args)]
struct HeatDecayArgs {
    #[command(flatten)]
    grid: GridFlags,
    /// Comma-separated mode list.
    #[arg(long)]
    modes: Option<String>,
    /// Generator: laplacian or linearized.
    #[arg(long)]
    operator: Option<String>,
    #[arg(long)]
    smax: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct NormArgs {
    #[command(flatten)]
    grid: GridFlags,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    sample_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Weight exponent delta of the master norm.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct IneqArgs {
    #[command(flatten)]
    grid: GridFlags,
    #[arg(long)]
    corpus: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(ok) => {
            if ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    std::process::exit(code);
}

struct Output {
    sink: Box<dyn Write>,
}

impl Output {
    fn create(path: &Option<PathBuf>) -> Result<Self, String> {
        let sink: Box<dyn Write> = match path {
            Some(p) => Box::new(std::io::BufWriter::new(
                std::fs::File::create(p)
                    .map_err(|e| format!("cannot create {}: {e}", p.display()))?,
            )),
            None => Box::new(std::io::BufWriter::new(std::io::stdout())),
        };
        Ok(Output { sink })
    }

    fn line(&mut self, text: &str) -> Result<(), String> {
        writeln!(self.sink, "{text}").map_err(|e| format!("write failed: {e}"))
    }
}

fn parse_target(name: &str) -> Result<TargetGeometry, String> {
    match name {
        "s2" => Ok(TargetGeometry::sphere()),
        "h2" => Ok(TargetGeometry::hyperbolic()),
        other => Err(format!("unknown target `{other}` (expected s2 or h2)")),
    }
}

fn parse_scheme(name: &str) -> Result<GridScheme, String> {
    match name {
        "uniform" => Ok(GridScheme::Uniform),
        "graded" => Ok(GridScheme::graded_default()),
        other => Err(format!(
            "unknown scheme `{other}` (expected uniform or graded)"
        )),
    }
}

struct CommonSetup {
    geom: TargetGeometry,
    lambda: f64,
    grid: RadialGrid,
}

fn resolve_common(
    r: &mut Resolver<'_>,
    flags: &GridFlags,
    default_lambda: f64,
) -> Result<CommonSetup, String> {
    let target = r.get("target", flags.target.clone(), "h2".to_string())?;
    let lambda = r.get("lambda", flags.lambda, default_lambda)?;
    let rmax = r.get("r_max", flags.rmax, 20.0)?;
    let n = r.get("n", flags.n, 1000usize)?;
    let scheme = r.get("scheme", flags.scheme.clone(), "uniform".to_string())?;
    let geom = parse_target(&target)?;
    let grid = build_grid(rmax, n, parse_scheme(&scheme)?).map_err(|e| e.to_string())?;
    Ok(CommonSetup { geom, lambda, grid })
}

fn worker_pool() -> Result<rayon::ThreadPool, String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(cap) = std::env::var("EQUIFLOW_WORKERS") {
        let cap: usize = cap
            .parse()
            .map_err(|e| format!("EQUIFLOW_WORKERS must be a count: {e}"))?;
        builder = builder.num_threads(cap.max(1));
    }
    builder.build().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<bool, String> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut resolver = Resolver::new(&file);
    match cli.cmd {
        Cmd::Spectrum(args) => cmd_spectrum(&mut resolver, &cli.out, args),
        Cmd::Hmhf(args) => cmd_flow(&mut resolver, &cli.out, args, FlowKind::Heat),
        Cmd::Smap(args) => cmd_flow(&mut resolver, &cli.out, args, FlowKind::Schrodinger),
        Cmd::Caloric(args) => cmd_caloric(&mut resolver, &cli.out, args),
        Cmd::HeatDecay(args) => cmd_heat_decay(&mut resolver, &cli.out, args),
        Cmd::Norms(args) => cmd_norms(&mut resolver, &cli.out, args),
        Cmd::Inequalities(args) => cmd_inequalities(&mut resolver, &cli.out, args),
        Cmd::Regress => cmd_regress(&cli.out),
    }
}

fn cmd_spectrum(
    r: &mut Resolver<'_>,
    out: &Option<PathBuf>,
    args: SpectrumArgs,
) -> Result<bool, String> {
    let setup = resolve_common(r, &args.grid, 0.5)?;
    let mmax = r.get("m_max", args.mmax, 3i32)?;
    let k = r.get("k", args.k, 3usize)?;
    let lambdas_raw = r.get("lambdas", args.lambdas.clone(), format!("{}", setup.lambda))?;
    let lambdas: Vec<f64> = lambdas_raw
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("lambda list: {e}"))
        })
        .collect::<Result<_, _>>()?;

    let pool = worker_pool()?;
    let geom = setup.geom;
    let grid = setup.grid.clone();
    // Fan out over lambda, merge deterministically by the sorted key.
    let mut results: Vec<(usize, i32, Result<equiflow::linop::SpectrumReport, String>)> = pool
        .install(|| {
            use rayon::prelude::*;
            lambdas
                .par_iter()
                .enumerate()
                .flat_map_iter(|(idx, lambda)| {
                    let grid = grid.clone();
                    (-mmax..=mmax).map(move |m| {
                        let report = (|| {
                            let q = harmonic_profile(&geom, *lambda, &grid)
                                .map_err(|e| e.to_string())?;
                            let cf = coulomb_frame(&geom, &q, &grid).map_err(|e| e.to_string())?;
                            let op = assemble_h(&geom, &q, &cf, &grid, ModeIndex(m))
                                .map_err(|e| e.to_string())?;
                            lowest_spectrum(&op, &grid, *lambda, k).map_err(|e| e.to_string())
                        })();
                        (idx, m, report)
                    })
                })
                .collect()
        });
    results.sort_by_key(|(idx, m, _)| (*idx, *m));

    let mut output = Output::create(out)?;
    for line in r.header_lines("spectrum") {
        output.line(&line)?;
    }
    let eig_cols: Vec<String> = (1..=k).map(|j| format!("eig_{j}")).collect();
    output.line(&format!(
        "target,lambda,m,{},resonance_quotient,n,r_max",
        eig_cols.join(",")
    ))?;
    let mut ok = true;
    for (idx, m, report) in results {
        match report {
            Ok(rep) => {
                let eigs: Vec<String> = rep
                    .lowest_eigenvalues
                    .iter()
                    .map(|e| format!("{e:.12e}"))
                    .collect();
                output.line(&format!(
                    "{},{:.6e},{},{},{:.12e},{},{}",
                    geom.target,
                    lambdas[idx],
                    m,
                    eigs.join(","),
                    rep.resonance_quotient,
                    setup.grid.n,
                    setup.grid.r_max
                ))?;
            }
            Err(e) => {
                ok = false;
                output.line(&format!("# error lambda={} m={m}: {e}", lambdas[idx]))?;
            }
        }
    }
    if let Some(path) = &args.profile_out {
        let mut pout = Output::create(&Some(path.clone()))?;
        for line in r.header_lines("spectrum-profile") {
            pout.line(&line)?;
        }
        pout.line("lambda,r,rho,a_theta,p")?;
        for lambda in &lambdas {
            let q = harmonic_profile(&geom, *lambda, &setup.grid).map_err(|e| e.to_string())?;
            let cf = coulomb_frame(&geom, &q, &setup.grid).map_err(|e| e.to_string())?;
            for i in 0..setup.grid.n {
                pout.line(&format!(
                    "{:.6e},{:.12e},{:.12e},{:.12e},{:.12e}",
                    lambda, setup.grid.nodes[i], q.rho[i], cf.a_theta[i], cf.p[i]
                ))?;
            }
        }
    }
    if args.certify {
        for lambda in &lambdas {
            let cert = stability_certificate(
                &geom,
                *lambda,
                &setup.grid,
                mmax.max(2),
                CertificateMargins::default(),
            )
            .map_err(|e| e.to_string())?;
            output.line(&format!(
                "# certificate lambda={lambda}: weakly_stable={} strongly_stable={} \
                 margins=(weak {:.1e}, strong {:.1e}, quotient {:.1e}) monotonicity_violations={:?}",
                cert.weakly_stable,
                cert.strongly_stable,
                cert.margins.weak,
                cert.margins.strong,
                cert.margins.quotient,
                cert.mode_monotonicity_violations
            ))?;
            ok &= cert.strongly_stable;
        }
    }
    Ok(ok)
}

enum FlowKind {
    Heat,
    Schrodinger,
}

fn cmd_flow(
    r: &mut Resolver<'_>,
    out: &Option<PathBuf>,
    args: FlowArgs,
    kind: FlowKind,
) -> Result<bool, String> {
    let setup = resolve_common(r, &args.grid, 0.5)?;
    let perturb_m = r.get("perturb_m", args.perturb_m, 1i32)?;
    let amp = r.get("perturb_amp", args.perturb_amp, 1e-2)?;
    let center = r.get(
        "perturb_center",
        args.perturb_center,
        0.25 * setup.grid.r_max,
    )?;
    let width = r.get("perturb_width", args.perturb_width, 0.8)?;
    let default_step = match kind {
        FlowKind::Heat => 0.025,
        FlowKind::Schrodinger => 1e-3,
    };
    let default_horizon = match kind {
        FlowKind::Heat => 40.0,
        FlowKind::Schrodinger => 10.0,
    };
    let step = r.get("step", args.step, default_step)?;
    let horizon = r.get("horizon", args.horizon, default_horizon)?;
    let record_every = r.get("record_every", args.record_every, 10usize)?;
    if perturb_m != 1 {
        return Err(format!(
            "the radial solver hosts the equivariant perturbation class only \
             (frame mode 1); got perturb_m = {perturb_m}"
        ));
    }

    let geom = setup.geom;
    let q = harmonic_profile(&geom, setup.lambda, &setup.grid).map_err(|e| e.to_string())?;
    let solver = FlowSolver::new(&setup.grid, &geom);
    let bump: Vec<Complex64> = testfields::regular_bump(&setup.grid, center, width)
        .into_iter()
        .map(|x| Complex64::new(x, 0.0))
        .collect();
    let state = equiflow::flows::perturbed_state(&geom, &setup.grid, &q, &bump, amp)
        .map_err(|e| e.to_string())?;
    let reference = state_from_profile(&geom, &setup.grid, &q).v;
    let n_steps = (horizon / step).round() as usize;
    let cfg = RunConfig {
        step,
        n_steps,
        record_every,
        neighborhood_radius: 1.0,
    };
    let (label, run) = match kind {
        FlowKind::Heat => (
            "hmhf",
            run_hmhf(&solver, state, &reference, &cfg).map_err(|e| e.to_string())?,
        ),
        FlowKind::Schrodinger => (
            "smap",
            run_smap(&solver, state, &reference, &cfg).map_err(|e| e.to_string())?,
        ),
    };

    let mut output = Output::create(out)?;
    for line in r.header_lines(label) {
        output.line(&line)?;
    }
    output.line("t_or_s,energy,distance,constraint_defect,outer_mass_fraction")?;
    for i in 0..run.times.len() {
        output.line(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            run.times[i],
            run.energies[i],
            run.distances[i],
            run.constraint_defects[i],
            run.outer_mass[i]
        ))?;
    }
    let mut ok = true;
    match kind {
        FlowKind::Heat => {
            let monotone = run
                .energies
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-12 * (record_every as f64));
            let samples: Vec<(f64, f64)> = run
                .times
                .iter()
                .zip(&run.distances)
                .filter(|(s, d)| **s >= 0.25 * horizon && **d > 0.0)
                .map(|(s, d)| (*s, *d))
                .collect();
            if samples.len() >= 4 {
                let fit = decay_fit(&samples).map_err(|e| e.to_string())?;
                output.line(&format!(
                    "# fitted_decay_rate = {:.6e} (stderr {:.2e})",
                    fit.rate, fit.stderr
                ))?;
            }
            output.line(&format!("# energy_monotone = {monotone}"))?;
            ok &= monotone;
        }
        FlowKind::Schrodinger => {
            let e0 = run.energies[0];
            let drift = run
                .energies
                .iter()
                .map(|e| (e - e0).abs() / e0)
                .fold(0.0, f64::max);
            output.line(&format!("# relative_energy_drift = {drift:.6e}"))?;
        }
    }
    output.line(&format!("# left_neighborhood = {}", run.left_neighborhood))?;
    ok &= !run.left_neighborhood;
    if let Some(path) = &args.final_out {
        let mut fout = Output::create(&Some(path.clone()))?;
        for line in r.header_lines(&format!("{label}-final")) {
            fout.line(&line)?;
        }
        fout.line("r,v1,v2,v3")?;
        for (i, v) in run.final_state.v.iter().enumerate() {
            fout.line(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e}",
                setup.grid.nodes[i], v[0], v[1], v[2]
            ))?;
        }
    }
    Ok(ok)
}

fn cmd_caloric(
    r: &mut Resolver<'_>,
    out: &Option<PathBuf>,
    args: CaloricArgs,
) -> Result<bool, String> {
    let setup = resolve_common(r, &args.grid, 0.5)?;
    let amp = r.get("perturb_amp", args.perturb_amp, 1e-2)?;
    let center = r.get(
        "perturb_center",
        args.perturb_center,
        0.25 * setup.grid.r_max,
    )?;
    let width = r.get("perturb_width", args.perturb_width, 0.8)?;
    let per_octave = r.get("per_octave", args.per_octave, 8u32)?;

    let geom = setup.geom;
    let q = harmonic_profile(&geom, setup.lambda, &setup.grid).map_err(|e| e.to_string())?;
    let solver = FlowSolver::new(&setup.grid, &geom);
    let base = relax_to_equilibrium(
        &solver,
        state_from_profile(&geom, &setup.grid, &q),
        0.125,
        1e-8,
        8000,
    )
    .map_err(|e| e.to_string())?;
    let bump: Vec<Complex64> = testfields::regular_bump(&setup.grid, center, width)
        .into_iter()
        .map(|x| Complex64::new(x, 0.0))
        .collect();
    let state = perturb_around(&geom, &setup.grid, &base, &bump, amp).map_err(|e| e.to_string())?;
    let cfg = CaloricConfig {
        per_octave,
        ..CaloricConfig::default()
    };
    let traj = build_caloric_gauge(&solver, state, &q, &cfg).map_err(|e| e.to_string())?;
    let frame_check = check_frame(&traj);
    let curvature = check_curvature_identity(&traj);
    let eom = heat_eom_residual_profile(&traj);

    let mut output = Output::create(out)?;
    for line in r.header_lines("caloric") {
        output.line(&line)?;
    }
    output.line("s,psi_s_l2,a_ring_linf,a_s_max,heat_eom_l2")?;
    let last = traj.s_grid.len() - 1;
    for j in 0..traj.s_grid.len() {
        let psi_l2 = traj.grid.l2_norm(&traj.psi_s[j]);
        let mut a_ring: f64 = 0.0;
        let mut a_s: f64 = 0.0;
        for i in 0..traj.grid.n {
            a_ring = a_ring
                .max((traj.a_r[j][i] - traj.a_r[last][i]).abs())
                .max((traj.a_theta[j][i] - traj.a_theta[last][i]).abs());
            a_s = a_s.max(traj.a_s[j][i].abs());
        }
        output.line(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            traj.s_grid[j], psi_l2, a_ring, a_s, eom[j]
        ))?;
    }
    output.line(&format!(
        "# frame: orthonormality {:.3e}, tangency {:.3e}, a_s_max {:.3e}",
        frame_check.orthonormality, frame_check.tangency, frame_check.a_s_max
    ))?;
    output.line(&format!("# curvature_identity_max = {curvature:.6e}"))?;
    output.line(&format!("# terminal_rate = {:.6e}", traj.terminal_rate))?;
    let ok = frame_check.orthonormality < 1e-8
        && frame_check.tangency < 1e-8
        && frame_check.a_s_max < 1e-6;
    output.line(&format!("# frame_invariants_hold = {ok}"))?;
    Ok(ok)
}

fn cmd_heat_decay(
    r: &mut Resolver<'_>,
    out: &Option<PathBuf>,
    args: HeatDecayArgs,
) -> Result<bool, String> {
    let setup = resolve_common(r, &args.grid, 0.5)?;
    let modes_raw = r.get("modes", args.modes.clone(), "0,1".to_string())?;
    let operator = r.get("operator", args.operator.clone(), "laplacian".to_string())?;
    let smax = r.get("s_max", args.smax, 8.0)?;
    let seed = r.get("seed", args.seed, 7u64)?;
    let modes: Vec<i32> = modes_raw
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<i32>()
                .map_err(|e| format!("mode list: {e}"))
        })
        .collect::<Result<_, _>>()?;

    let geom = setup.geom;
    let mut output = Output::create(out)?;
    for line in r.header_lines("heat-decay") {
        output.line(&line)?;
    }
    output.line("m,s,l2_norm,linf_norm")?;
    let mut ok = true;
    for m in modes {
        let stepper = match operator.as_str() {
            "laplacian" => {
                SemigroupStepper::laplacian(&setup.grid, ModeIndex(m), HeatScheme::CrankNicolson)
            }
            "linearized" => {
                let q = harmonic_profile(&geom, setup.lambda, &setup.grid)
                    .map_err(|e| e.to_string())?;
                let cf = coulomb_frame(&geom, &q, &setup.grid).map_err(|e| e.to_string())?;
                let op = assemble_h(&geom, &q, &cf, &setup.grid, ModeIndex(m))
                    .map_err(|e| e.to_string())?;
                SemigroupStepper::linearized(&setup.grid, &op, HeatScheme::CrankNicolson)
            }
            other => return Err(format!("unknown operator `{other}`")),
        };
        let mut rng = testfields::rng(seed);
        let f = testfields::smooth_complex(&setup.grid, &mut rng, 0.1, 0.5);
        let mut state = f.clone();
        let mut s_now = 0.0;
        let ds = smax / 64.0;
        let mut samples = Vec::new();
        for k in 0..=64 {
            if k > 0 {
                stepper
                    .heat_continue(&mut state, s_now, s_now + ds, 8)
                    .map_err(|e| e.to_string())?;
                s_now += ds;
            }
            let l2 = setup.grid.l2_norm(&state);
            let linf = setup
                .grid
                .lp_norm(&state, f64::INFINITY)
                .map_err(|e| e.to_string())?;
            output.line(&format!("{m},{s_now:.12e},{l2:.12e},{linf:.12e}"))?;
            if s_now >= 0.5 * smax && l2 > 0.0 {
                samples.push((s_now, l2));
            }
        }
        if samples.len() >= 4 {
            let fit = decay_fit(&samples).map_err(|e| e.to_string())?;
            output.line(&format!(
                "# m={m}: fitted_rate = {:.6e} (stderr {:.2e})",
                fit.rate, fit.stderr
            ))?;
            ok &= fit.rate > 0.0;
        }
    }
    Ok(ok)
}

fn cmd_norms(r: &mut Resolver<'_>, out: &Option<PathBuf>, args: NormArgs) -> Result<bool, String> {
    let setup = resolve_common(r, &args.grid, 0.5)?;
    let tmax = r.get("t_max", args.tmax, 10.0)?;
    let dt = r.get("dt", args.dt, 0.025)?;
    let sample_every = r.get("sample_every", args.sample_every, 20usize)?;
    let seed = r.get("seed", args.seed, 11u64)?;
    let delta = r.get("delta", args.delta, 0.1)?;

    let geom = setup.geom;
    let q = harmonic_profile(&geom, setup.lambda, &setup.grid).map_err(|e| e.to_string())?;
    let cf = coulomb_frame(&geom, &q, &setup.grid).map_err(|e| e.to_string())?;
    let op = assemble_h(&geom, &q, &cf, &setup.grid, ModeIndex(1)).map_err(|e| e.to_string())?;
    let schro = SchrodingerStepper::new(&setup.grid, &op);
    let ann = AnnulusDecomposition::new(&setup.grid);
    let lp_stepper =
        SemigroupStepper::laplacian(&setup.grid, ModeIndex(1), HeatScheme::CrankNicolson);
    let cfg = NormConfig::new(delta).map_err(|e| e.to_string())?;

    let mut rng = testfields::rng(seed);
    let phi0 = testfields::bump_complex(&setup.grid, &mut rng);
    let steps = (tmax / dt).round() as usize;
    let mut phi = phi0.clone();
    let mut times = vec![0.0];
    let mut fields = vec![phi0];
    for k in 0..steps {
        phi = schro.step(&phi, dt).map_err(|e| e.to_string())?;
        if (k + 1) % sample_every == 0 {
            times.push(dt * (k + 1) as f64);
            fields.push(phi.clone());
        }
    }
    let series = TimeSeries {
        times: &times,
        fields: &fields,
    };
    let le = le_norm(&series, &setup.grid, &ann, &lp_stepper, &cfg).map_err(|e| e.to_string())?;
    let le_star =
        le_star_norm(&series, &setup.grid, &ann, &lp_stepper, &cfg).map_err(|e| e.to_string())?;
    let str_norm = strichartz_norm(&series, &setup.grid, &cfg).map_err(|e| e.to_string())?;
    // Master norm of the heat-projected family on a small geometric s-grid.
    let s_points = [0.25, 0.5, 1.0, 2.0];
    let mut heated: Vec<Vec<Vec<Complex64>>> = Vec::new();
    for s in s_points {
        let mut per_t = Vec::with_capacity(fields.len());
        for f in &fields {
            per_t.push(lp_stepper.heat_apply(f, s).map_err(|e| e.to_string())?);
        }
        heated.push(per_t);
    }
    let family: Vec<SFamilyEntry<'_>> = s_points
        .iter()
        .zip(&heated)
        .map(|(s, per_t)| SFamilyEntry {
            s: *s,
            series: TimeSeries {
                times: &times,
                fields: per_t,
            },
        })
        .collect();
    let master = s_norm(&family, ModeIndex(1), &setup.grid, &ann, &lp_stepper, &cfg)
        .map_err(|e| e.to_string())?;

    let mut output = Output::create(out)?;
    for line in r.header_lines("norms") {
        output.line(&line)?;
    }
    output.line("norm,value")?;
    output.line(&format!("le,{le:.12e}"))?;
    output.line(&format!("le_star,{le_star:.12e}"))?;
    output.line(&format!("strichartz,{str_norm:.12e}"))?;
    output.line(&format!("master_s,{master:.12e}"))?;
    Ok(le.is_finite() && le_star.is_finite() && str_norm.is_finite() && master.is_finite())
}

fn cmd_inequalities(
    r: &mut Resolver<'_>,
    out: &Option<PathBuf>,
    args: IneqArgs,
) -> Result<bool, String> {
    let setup = resolve_common(r, &args.grid, 0.5)?;
    let corpus = r.get("corpus", args.corpus, 100usize)?;
    let seed = r.get("seed", args.seed, 7u64)?;
    let entries = inequality_suite(&setup.grid, corpus, seed).map_err(|e| e.to_string())?;
    let mut output = Output::create(out)?;
    for line in r.header_lines("inequalities") {
        output.line(&line)?;
    }
    output.line("inequality,mode,empirical_constant,half_corpus_constant,n,r_max")?;
    let mut ok = true;
    for e in &entries {
        output.line(&format!(
            "{},{},{:.12e},{:.12e},{},{}",
            e.name, e.mode, e.constant, e.constant_half, setup.grid.n, setup.grid.r_max
        ))?;
        ok &= e.constant.is_finite() && (e.constant - e.constant_half).abs() <= 0.2 * e.constant;
    }
    output.line(&format!("# corpus_stability_within_20_percent = {ok}"))?;
    Ok(ok)
}

fn cmd_regress(out: &Option<PathBuf>) -> Result<bool, String> {
    let results = equiflow::accept::run_all();
    let mut output = Output::create(out)?;
    let mut ok = true;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        output.line(&format!("[{tag}] {}: {}", r.name, r.details))?;
        ok &= r.passed;
    }
    output.line(&format!(
        "# {} of {} criteria passed",
        results.iter().filter(|r| r.passed).count(),
        results.len()
    ))?;
    Ok(ok)
}
