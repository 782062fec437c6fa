use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use opfcert::case_io::{load_case, read_points, write_report, CaseError, PointsFile, Report};
use opfcert::certify::{
    build_hyperplane, certify_disconnected, grid_sample_feasible_space, rotate_hyperplane, scan_segment,
    search_nonconvexity, segment_point, write_samples_csv, CertPoint, CertifyError, CertifyOptions, Hyperplane,
    SampleOptions, SearchOptions, Verdict,
};
use opfcert::network::{
    constraint_check, newton_multistart, newton_solve, power_balance_residual, NetworkCase, NetworkError,
    NewtonOptions, SetpointLayout, SetpointVector,
};
use opfcert::relaxation::VariableBounds;
use opfcert::tightening::{obbt_fixpoint, write_trajectory_csv, ObbtOptions};

/// Exit codes.
mod code {
    pub const OK: u8 = 0;
    pub const MALFORMED: u8 = 1;
    pub const MISSING: u8 = 2;
    pub const NO_CONVERGENCE: u8 = 3;
    pub const INDETERMINATE: u8 = 4;
    pub const INFEASIBLE: u8 = 5;
}

#[derive(Parser)]
#[command(name = "opfcert", version, about = "Certify disconnected AC OPF feasible spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a case file and print a summary.
    Validate(CaseArgs),
    /// Solve the power flow at a setpoint and check the OPF constraints.
    Pf(PfArgs),
    /// Certify that two points lie in disconnected components.
    Certify(RunArgs),
    /// Run bound tightening alone and export the bound trajectories.
    Obbt(RunArgs),
    /// Grid-sample the feasible space of a tiny case.
    Sample(SampleArgs),
}

#[derive(Args)]
struct CaseArgs {
    #[arg(long)]
    case: PathBuf,
}

#[derive(Args)]
struct PfArgs {
    #[arg(long)]
    case: PathBuf,
    /// Points file; its point `--which` gives the setpoint. Defaults to the case dispatch.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long, default_value = "a", value_parser = ["a", "b", "c"])]
    which: String,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    case: PathBuf,
    /// JSON with points a and b (voltages or setpoints), optional c and lambda.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Rotate the hyperplane about a setpoint axis, e.g. `2:45` (1-based, repeatable).
    #[arg(long = "rotate", value_name = "AXIS:DEG")]
    rotate: Vec<String>,
    #[arg(long, default_value_t = 1e-4)]
    obbt_tol: f64,
    #[arg(long, default_value_t = 20)]
    max_sweeps: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Setpoint samples when searching for A and B.
    #[arg(long, default_value_t = 4000)]
    trials: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, default_value_t = 30)]
    resolution: usize,
    /// Three 1-based setpoint coordinates spanned by the grid.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    coords: Vec<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CaseError>() {
            return match e {
                CaseError::Io { kind, .. } if *kind == io::ErrorKind::NotFound => code::MISSING,
                _ => code::MALFORMED,
            };
        }
        if let Some(e) = cause.downcast_ref::<CertifyError>() {
            return match e {
                CertifyError::CaseTooLarge { .. } => code::MISSING,
                CertifyError::InfeasibleInput { .. } | CertifyError::PointsNotSeparated { .. } => code::INFEASIBLE,
                CertifyError::NotFound => code::INDETERMINATE,
                CertifyError::Network(NetworkError::NoConvergence { .. }) => code::NO_CONVERGENCE,
                _ => code::MALFORMED,
            };
        }
        if let Some(NetworkError::NoConvergence { .. }) = cause.downcast_ref::<NetworkError>() {
            return code::NO_CONVERGENCE;
        }
    }
    code::MALFORMED
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Pf(a) => cmd_pf(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Obbt(a) => cmd_obbt(&a),
        Command::Sample(a) => cmd_sample(&a),
    };
    match result {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!(CaseError::Invalid("--threads must be at least 1".into()));
        }
        // Fails only if the pool was already built, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).map_err(|e| CaseError::Invalid(format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_validate(a: &CaseArgs) -> Result<u8> {
    let case = load_case(&a.case)?;
    let layout = SetpointLayout::of(&case);
    let summary = json!({
        "case_id": case.name,
        "base_mva": case.base_mva,
        "buses": case.n_bus(),
        "generators": case.n_gen(),
        "branches": case.n_branch(),
        "reference_bus": case.buses[case.ref_index()].id,
        "setpoint_coordinates": layout.labels(&case),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(code::OK)
}

/// Setpoint of the case's own dispatch: `p_set` of non-reference generators
/// and `v_set` of generator buses.
fn case_setpoint(case: &NetworkCase) -> SetpointVector {
    let layout = SetpointLayout::of(case);
    let pg = layout.pg_gens.iter().map(|&g| case.generators[g].p_set).collect();
    let v = layout
        .v_buses
        .iter()
        .map(|&i| {
            let g = case.gens_at(i)[0];
            case.generators[g].v_set
        })
        .collect();
    SetpointVector::new(pg, v)
}

fn cmd_pf(a: &PfArgs) -> Result<u8> {
    let case = load_case(&a.case)?;
    let point = match &a.points {
        Some(p) => {
            let file = read_points(p)?;
            let spec = match a.which.as_str() {
                "a" => Some(file.a),
                "b" => Some(file.b),
                _ => file.c,
            };
            let spec = spec.ok_or_else(|| CaseError::Invalid(format!("points file has no point {}", a.which)))?;
            spec.to_cert_point(&case)?
        }
        None => CertPoint::from_setpoint(case_setpoint(&case)),
    };
    let opts = NewtonOptions::default();
    let solutions = match &point.point {
        Some(o) => vec![newton_solve(&case, &point.setpoint, Some((&o.vm, &o.va)), &opts)?],
        None => newton_multistart(&case, &point.setpoint, &[], &opts)?,
    };
    if solutions.is_empty() {
        return Err(NetworkError::NoConvergence { iterations: opts.max_iter, mismatch: f64::INFINITY }.into());
    }
    let mut any_feasible = false;
    let mut records = Vec::new();
    for pf in &solutions {
        let report = constraint_check(&case, &pf.point, 1e-6)?;
        let residual = power_balance_residual(&case, &pf.point)?
            .iter()
            .map(|(p, q)| p.abs().max(q.abs()))
            .fold(0.0, f64::max);
        any_feasible |= report.feasible;
        records.push(json!({
            "iterations": pf.iterations,
            "max_residual": residual,
            "vm": pf.point.vm,
            "va": pf.point.va,
            "pg": pf.point.pg,
            "qg": pf.point.qg,
            "feasible": report.feasible,
            "violations": report.violations,
        }));
    }
    let out = json!({ "setpoint": point.setpoint, "solutions": records });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if any_feasible { code::OK } else { code::INFEASIBLE })
}

fn parse_rotation(s: &str) -> Result<(usize, f64)> {
    let (axis, deg) = s
        .split_once(':')
        .ok_or_else(|| CaseError::Invalid(format!("rotation '{s}' is not AXIS:DEG")))?;
    let axis: usize = axis.trim().parse().map_err(|_| CaseError::Invalid(format!("bad rotation axis in '{s}'")))?;
    let deg: f64 = deg.trim().parse().map_err(|_| CaseError::Invalid(format!("bad rotation angle in '{s}'")))?;
    if axis == 0 {
        bail!(CertifyError::InvalidAxis { axis, dim: 3 });
    }
    Ok((axis - 1, deg))
}

fn obbt_options(a: &RunArgs) -> ObbtOptions {
    ObbtOptions { tol: a.obbt_tol, max_sweeps: a.max_sweeps, threads: a.threads, ..Default::default() }
}

/// A, B, C and λ for a run: from the points file when given, otherwise from
/// the nonconvexity search.
fn endpoints(case: &NetworkCase, a: &RunArgs, opts: &CertifyOptions) -> Result<(CertPoint, CertPoint, SetpointVector, Option<f64>)> {
    let Some(path) = &a.points else {
        let search = SearchOptions { trials: a.trials, seed: a.seed, obbt: opts.obbt, ..Default::default() };
        let found = search_nonconvexity(case, &search)?;
        return Ok((found.a, found.b, found.c, Some(found.lambda)));
    };
    let file: PointsFile = read_points(path)?;
    let pa = file.a.to_cert_point(case)?;
    let pb = file.b.to_cert_point(case)?;
    if let Some(c) = &file.c {
        return Ok((pa, pb, c.to_cert_point(case)?.setpoint, a.lambda.or(file.lambda)));
    }
    let lambda = match a.lambda.or(file.lambda) {
        Some(l) => l,
        None => {
            let grid: Vec<f64> = (1..20).map(|k| k as f64 * 0.05).collect();
            scan_segment(case, &pa.setpoint, &pb.setpoint, &grid, 3, &opts.newton, &opts.obbt)?
                .map(|(l, _, _)| l)
                .unwrap_or(0.5)
        }
    };
    let c = segment_point(&pa.setpoint, &pb.setpoint, lambda)?;
    Ok((pa, pb, c, Some(lambda)))
}

fn hyperplane(a: &RunArgs, pa: &CertPoint, pb: &CertPoint, c: &SetpointVector) -> Result<Hyperplane> {
    let mut h = build_hyperplane(&pa.setpoint, &pb.setpoint, c)?;
    for r in &a.rotate {
        let (axis, deg) = parse_rotation(r)?;
        h = rotate_hyperplane(&h, axis, deg)?;
    }
    Ok(h)
}

fn cmd_certify(a: &RunArgs) -> Result<u8> {
    set_threads(a.threads)?;
    let case = load_case(&a.case)?;
    let opts = CertifyOptions { obbt: obbt_options(a), ..Default::default() };
    let (pa, pb, c, lambda) = endpoints(&case, a, &opts)?;
    let h = hyperplane(a, &pa, &pb, &c)?;
    let cert = certify_disconnected(&case, &pa, &pb, &h, lambda, &opts)?;
    let report = match &a.out {
        Some(p) => write_report(&cert, &cert.obbt.tightened, p)?,
        None => {
            let r = Report::new(&cert, &cert.obbt.tightened);
            println!("{}", serde_json::to_string_pretty(&r)?);
            r
        }
    };
    eprintln!(
        "{}: {:?} after {} sweeps in {:.2} s",
        report.case_id, report.verdict, report.obbt_iterations, report.wall_time_s
    );
    Ok(match cert.verdict {
        Verdict::Disconnected => code::OK,
        Verdict::Indeterminate => code::INDETERMINATE,
    })
}

fn cmd_obbt(a: &RunArgs) -> Result<u8> {
    set_threads(a.threads)?;
    let case = load_case(&a.case)?;
    let opts = CertifyOptions { obbt: obbt_options(a), ..Default::default() };
    let extra = if a.points.is_some() {
        let (pa, pb, c, _) = endpoints(&case, a, &opts)?;
        vec![hyperplane(a, &pa, &pb, &c)?.constraint(&case)]
    } else {
        Vec::new()
    };
    let bounds = VariableBounds::from_case(&case)?;
    let out = obbt_fixpoint(&case, &bounds, &extra, &opts.obbt)?;
    if let Some(p) = &a.out {
        write_trajectory_csv(&out, p).map_err(|e| anyhow!(CaseError::Invalid(format!("{}: {e}", p.display()))))?;
    }
    let summary = json!({
        "case_id": case.name,
        "infeasible": out.infeasible,
        "converged": out.converged,
        "sweeps": out.iterations,
        "max_change_per_sweep": out.history,
        "unknown_subproblems": out.unknown_subproblems,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if out.infeasible || out.converged { code::OK } else { code::INDETERMINATE })
}

fn cmd_sample(a: &SampleArgs) -> Result<u8> {
    set_threads(a.threads)?;
    let case = load_case(&a.case)?;
    let coords: [usize; 3] = match a.coords.as_slice() {
        &[x, y, z] if x > 0 && y > 0 && z > 0 => [x - 1, y - 1, z - 1],
        _ => bail!(CaseError::Invalid("--coords needs three 1-based coordinates".into())),
    };
    let opts = SampleOptions { coords, resolution: a.resolution, ..Default::default() };
    let samples = grid_sample_feasible_space(&case, &opts)?;
    let out = open_out(a.out.as_deref())?;
    write_samples_csv(&case, coords, &samples, out).context("writing samples")?;
    let feasible = samples.iter().filter(|s| s.feasible).count();
    eprintln!("{} of {} samples feasible", feasible, samples.len());
    Ok(code::OK)
}
