use std::f64::consts::FRAC_PI_2;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use clap::Args;
use convnet::equilibrium::{
    condition1_threshold, default_guess, feasible_input, solve_equilibrium, synchronization_report, Condition1Record,
    Dispatch, Equilibrium, EquilibriumRecord, NewtonOptions, SyncReport,
};
use convnet::export::{write_matrix, write_region_csv, write_trajectory_csv, CertificateSummary};
use convnet::linearization::{lyapunov_certificate, sample_decrease, CertificateOptions, LyapunovCertificate, QMode};
use convnet::model::{Model, SystemState};
use convnet::network::NetworkSpec;
use convnet::simulation::region::{estimate_region, tangent_proxy, RegionEstimate, RegionSweep};
use convnet::simulation::{integrate, integrate_variational, Sampling, SimulationOptions, StepOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;
use crate::CommonArgs;

#[derive(Debug, Args)]
pub struct EquilibriumArgs {
    /// Perturb every coordinate of the default Newton start by a seeded
    /// uniform draw of this amplitude.
    #[arg(long, value_name = "AMPLITUDE", allow_negative_numbers = true)]
    pub random_start: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub q1: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub q2: f64,
    /// Ridge added to the decrease weight.
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    pub sigma: f64,
    /// Use the unregularised rank-deficient decrease weight.
    #[arg(long)]
    pub rank_one_q: bool,
    /// Random tangent vectors for the sampled decrease check.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Fixed step (rk4) or initial step (adaptive methods), seconds.
    #[arg(long, default_value_t = 1e-5, allow_negative_numbers = true)]
    pub dt: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub horizon: f64,
    /// Integrator: rk4, rk45 or ros23.
    #[arg(long, default_value = "rk4")]
    pub method: String,
    /// Initial angle offsets of the first two converters, e.g. `0.3,-0.2`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    pub dgamma: Vec<f64>,
    /// Output spacing in seconds; defaults to horizon / 1000.
    #[arg(long, allow_negative_numbers = true)]
    pub sample_interval: Option<f64>,
    #[arg(long, default_value_t = 1e-9, allow_negative_numbers = true)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-9, allow_negative_numbers = true)]
    pub atol: f64,
    /// Co-integrate the tangent proxy and record its Lyapunov value.
    #[arg(long)]
    pub lyapunov: bool,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[arg(long, default_value_t = 1e-5, allow_negative_numbers = true)]
    pub dt: f64,
    #[arg(long, default_value_t = 200.0, allow_negative_numbers = true)]
    pub horizon: f64,
    #[arg(long, default_value = "ros23")]
    pub method: String,
    /// Points per axis.
    #[arg(long, default_value_t = 41)]
    pub grid: usize,
    #[arg(long, default_value_t = 3.5, allow_negative_numbers = true)]
    pub epsilon: f64,
    /// Offsets span [-half_width, half_width] (rad).
    #[arg(long, default_value_t = FRAC_PI_2, allow_negative_numbers = true)]
    pub half_width: f64,
    /// Quotient-distance convergence threshold.
    #[arg(long, default_value_t = 1e-4, allow_negative_numbers = true)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-7, allow_negative_numbers = true)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-8, allow_negative_numbers = true)]
    pub atol: f64,
    /// Also co-integrate the tangent proxy and report Lyapunov increases.
    #[arg(long)]
    pub track_lyapunov: bool,
}

fn load_model(common: &CommonArgs) -> Result<Model, CliError> {
    let path = common
        .network
        .as_ref()
        .ok_or_else(|| CliError::Input("--network <FILE> is required".into()))?;
    let spec = NetworkSpec::from_file(path)?;
    Ok(spec.to_model(common.b_load_override)?)
}

fn newton_options(common: &CommonArgs) -> NewtonOptions {
    NewtonOptions {
        max_iter: common.max_iter,
        dispatch: if common.strict_input {
            Dispatch::Exact
        } else {
            Dispatch::Balanced
        },
        ..Default::default()
    }
}

fn solve(common: &CommonArgs, model: &Model, guess: Option<&SystemState>) -> Result<Equilibrium, CliError> {
    Ok(solve_equilibrium(
        model,
        &model.dispatch_input(),
        common.gauge,
        guess,
        &newton_options(common),
    )?)
}

fn prepare_out(common: &CommonArgs) -> Result<(), CliError> {
    fs::create_dir_all(&common.out)
        .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", common.out.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct EquilibriumReport {
    #[serde(flatten)]
    record: EquilibriumRecord,
    dispatch: Dispatch,
    feasible_input: Vec<f64>,
    synchronization: SyncReport,
}

pub fn equilibrium(common: &CommonArgs, args: &EquilibriumArgs) -> Result<(), CliError> {
    let model = load_model(common)?;
    prepare_out(common)?;
    let guess = match args.random_start {
        Some(amp) => {
            if !(amp.is_finite() && amp >= 0.0) {
                return Err(CliError::Input(format!("--random-start {amp} must be a finite non-negative amplitude")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            let mut z = default_guess(&model, common.gauge)?;
            for c in z.as_mut_slice() {
                *c += amp * rng.random_range(-1.0..1.0);
            }
            Some(z)
        }
        None => None,
    };
    let eq = solve(common, &model, guess.as_ref())?;
    let report = EquilibriumReport {
        record: eq.to_record(),
        dispatch: newton_options(common).dispatch,
        feasible_input: model.dc_block(&feasible_input(&model, &eq.z_star)).to_vec(),
        synchronization: synchronization_report(&model, &eq.z_star),
    };
    write_json(&common.out.join("equilibrium.json"), &report)?;
    println!(
        "equilibrium: residual {:.3e} after {} iterations, u_dc = {:?}",
        eq.residual_norm,
        eq.iterations,
        eq.u_dc()
    );
    Ok(())
}

#[derive(Serialize)]
struct ConditionReport {
    threshold: f64,
    all_pass: bool,
    records: Vec<Condition1Record>,
    equilibrium: EquilibriumRecord,
}

pub fn condition(common: &CommonArgs) -> Result<(), CliError> {
    let model = load_model(common)?;
    prepare_out(common)?;
    let eq = solve(common, &model, None)?;
    let report = ConditionReport {
        threshold: condition1_threshold(&model),
        all_pass: eq.condition1.iter().all(|c| c.pass),
        records: eq.condition1.clone(),
        equilibrium: eq.to_record(),
    };
    write_json(&common.out.join("condition.json"), &report)?;
    for c in &report.records {
        println!(
            "converter {}: Q_sw = {:.6} threshold = {:.6} margin = {:.6} {}",
            c.k,
            c.q_sw,
            c.threshold,
            c.margin,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    if report.all_pass {
        Ok(())
    } else {
        let failing: Vec<usize> = report.records.iter().filter(|c| !c.pass).map(|c| c.k).collect();
        Err(CliError::Condition(format!("condition fails at converter(s) {failing:?}")))
    }
}

fn certificate_options(args: &CertifyArgs) -> CertificateOptions {
    CertificateOptions {
        q1: args.q1,
        q2: args.q2,
        q_mode: if args.rank_one_q {
            QMode::RankOne
        } else {
            QMode::Regularized { sigma: args.sigma }
        },
        ..Default::default()
    }
}

pub fn certify(common: &CommonArgs, args: &CertifyArgs) -> Result<(), CliError> {
    let model = load_model(common)?;
    prepare_out(common)?;
    let eq = solve(common, &model, None)?;
    let cert = lyapunov_certificate(&model, &eq, &certificate_options(args))?;
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let sampled = sample_decrease(&cert, args.samples, &mut rng);
    let summary = CertificateSummary::new(&cert, Some(sampled));
    write_json(&common.out.join("certificate.json"), &summary)?;
    write_matrix(BufWriter::new(File::create(common.out.join("p_matrix.bin"))?), &cert.p_matrix)?;
    write_matrix(BufWriter::new(File::create(common.out.join("pi_matrix.bin"))?), &cert.pi_matrix)?;
    println!(
        "certificate: rank(Pi) = {}, {} zero eigenvalue(s) of A, sampled decrease max {:.3e} over {} vectors",
        summary.pi_rank, summary.zero_eigenvalues, sampled.max_normalized, sampled.samples
    );
    let mut problems = Vec::new();
    if !summary.p_positive_definite {
        problems.push("P is not positive definite".to_string());
    }
    if summary.pi_rank + 1 != summary.dim {
        problems.push(format!("rank(Pi) = {} instead of {}", summary.pi_rank, summary.dim - 1));
    }
    if !sampled.all_negative {
        problems.push(format!("sampled decrease reaches {:.3e}", sampled.max_normalized));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Certificate(format!("certificate does not validate: {}", problems.join("; "))))
    }
}

fn certificate_for(model: &Model, eq: &Equilibrium) -> Result<LyapunovCertificate, CliError> {
    Ok(lyapunov_certificate(model, eq, &CertificateOptions::default())?)
}

pub fn simulate(common: &CommonArgs, args: &SimulateArgs) -> Result<(), CliError> {
    let model = load_model(common)?;
    if args.dgamma.len() > model.n() {
        return Err(CliError::Input(format!(
            "--dgamma has {} entries but the network has {} converters",
            args.dgamma.len(),
            model.n()
        )));
    }
    prepare_out(common)?;
    let eq = solve(common, &model, None)?;
    let mut z0 = eq.z_star.clone();
    for (g, d) in z0.gamma_mut().iter_mut().zip(&args.dgamma) {
        *g += d;
    }
    let opts = SimulationOptions {
        t_end: args.horizon,
        method: args.method.clone(),
        step: StepOptions {
            dt: args.dt,
            rtol: args.rtol,
            atol: args.atol,
            ..Default::default()
        },
        sampling: Sampling::Interval(args.sample_interval.unwrap_or(args.horizon / 1000.0)),
    };
    let mut traj = if args.lyapunov {
        let cert = certificate_for(&model, &eq)?;
        let (dz0, _) = tangent_proxy(&z0, &eq.z_star);
        integrate_variational(&model, &z0, &dz0, &eq.u_star, &opts, Some(&cert))?
    } else {
        integrate(&model, &z0, &eq.u_star, &opts)?
    };
    traj.attach_distances(&eq.z_star);
    let file = File::create(common.out.join("trajectory.csv"))?;
    write_trajectory_csv(BufWriter::new(file), &traj, model.conv.v_dc_star)?;
    let last = traj.distances.as_ref().and_then(|d| d.last()).copied().unwrap_or(f64::NAN);
    println!(
        "simulate: {} samples to t = {}, final quotient distance {:.3e}",
        traj.len(),
        traj.times.last().copied().unwrap_or(0.0),
        last
    );
    Ok(())
}

#[derive(Serialize)]
struct RegionSummary<'a> {
    epsilon: f64,
    epsilon_star: f64,
    sublevel_contained: bool,
    samples: usize,
    converged: usize,
    diverged: usize,
    protocol: &'static str,
    estimate: &'a RegionEstimate,
}

pub fn region(common: &CommonArgs, args: &RegionArgs) -> Result<(), CliError> {
    let model = load_model(common)?;
    prepare_out(common)?;
    let eq = solve(common, &model, None)?;
    let cert = certificate_for(&model, &eq)?;
    let sweep = RegionSweep {
        grid: args.grid,
        half_width: args.half_width,
        horizon: args.horizon,
        method: args.method.clone(),
        step: StepOptions {
            dt: args.dt,
            rtol: args.rtol,
            atol: args.atol,
            ..Default::default()
        },
        tol: args.tol,
        epsilon: args.epsilon,
        track_lyapunov: args.track_lyapunov,
        ..Default::default()
    };
    let estimate = estimate_region(&model, &eq, &cert, &sweep)?;
    write_region_csv(BufWriter::new(File::create(common.out.join("region.csv"))?), &estimate)?;
    let summary = RegionSummary {
        epsilon: sweep.epsilon,
        epsilon_star: estimate.epsilon_star,
        sublevel_contained: estimate.sublevel_contained,
        samples: estimate.samples.len(),
        converged: estimate.converged,
        diverged: estimate.diverged,
        protocol: "initial angles offset, other states at equilibrium; V evaluated on the displacement from the nearest equilibrium-orbit point",
        estimate: &estimate,
    };
    write_json(&common.out.join("region.json"), &summary)?;
    println!(
        "region: {}/{} converged, epsilon_star = {:.6}, all samples with V <= {} converged: {}",
        estimate.converged,
        estimate.samples.len(),
        estimate.epsilon_star,
        sweep.epsilon,
        estimate.sublevel_contained
    );
    Ok(())
}
