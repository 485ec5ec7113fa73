#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

mod export;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lglab::basin::{
    constant_fit_rmse, extract_boundary, fit_boundary, monotonicity_report, sweep, FitFamily,
    GridSpec,
};
use lglab::bifurcate::{
    classify_equilibria, continue_cycles, find_bautin, find_cycle, hopf_in_c, hopf_on_locus,
    section_fixed_points, BautinBox, ContinuationOptions, OrbitStability, PeriodicOrbit,
    ReturnOptions, Section,
};
use lglab::blowup::{classify, InitialData, Label};
use lglab::claims::{claim_ids, run_claims_filtered, ClaimOptions};
use lglab::config::{ConfigError, RunConfig};
use lglab::model::{
    interior_equilibrium, stability_threshold_c, EquilibriumKind, Model, ParamName,
};
use lglab::solve::{integrate_dde, integrate_ode, EventSpec, History, Integration};
use lglab::State;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{failed} of {total} claims failed")]
    ClaimsFailed { failed: usize, total: usize },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Output { .. } => 2,
            CliError::Numerical(_) | CliError::ClaimsFailed { .. } => 3,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "lglab",
    version,
    about = "Blow-up, basin and bifurcation analysis for a Leslie-Gower predator-prey model"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run file with `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,
    /// Inline override, e.g. `--set D=0.4`; applied after the run file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Blow-up threshold.
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// Time horizon for bounded runs.
    #[arg(long, global = true)]
    tmax: Option<f64>,
    /// Step budget per integration
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Relative tolerance
    #[arg(long, global = true)]
    rtol: Option<f64>,
    /// Absolute tolerance
    #[arg(long, global = true)]
    atol: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory and classify it.
    Simulate(SimulateArgs),
    /// Label a grid of initial conditions.
    Basin(GridArgs),
    /// Extract the blow-up boundary and fit it.
    BoundaryFit(BoundaryFitArgs),
    /// Equilibria, their linear type and the critical C.
    Stability,
    /// Hopf point of the interior equilibrium in one parameter.
    Hopf(HopfArgs),
    /// Continue limit cycles in one parameter.
    Cycles(CyclesArgs),
    /// Locate a Bautin point on the Hopf locus in two parameters.
    Bautin(BautinArgs),
    /// Run the reproduction suite.
    CheckClaims(ClaimsArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Initial prey and predator densities.
    #[arg(long, num_args = 2, value_names = ["X", "Y"], required_unless_present = "at_equilibrium")]
    ic: Option<Vec<f64>>,
    /// Start at the interior equilibrium.
    #[arg(long, conflicts_with = "ic")]
    at_equilibrium: bool,
    /// Sampling interval for the CSV; accepted steps are written when absent.
    #[arg(long)]
    dt: Option<f64>,
    /// Logarithmic Y axis in the plot.
    #[arg(long)]
    log_y: bool,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, default_value_t = 300)]
    nx: usize,
    #[arg(long, default_value_t = 300)]
    ny: usize,
    #[arg(long, default_value_t = 0.0)]
    xmin: f64,
    #[arg(long, default_value_t = 100.0)]
    xmax: f64,
    #[arg(long, default_value_t = 0.0)]
    ymin: f64,
    #[arg(long, default_value_t = 100.0)]
    ymax: f64,
}

impl GridArgs {
    fn spec(&self) -> GridSpec {
        GridSpec {
            x_range: (self.xmin, self.xmax),
            y_range: (self.ymin, self.ymax),
            nx: self.nx,
            ny: self.ny,
        }
    }
}

#[derive(Debug, Args)]
struct BoundaryFitArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Fit family; both are fitted when absent.
    #[arg(long)]
    family: Vec<FitFamily>,
    /// Bisection tolerance in Y(0).
    #[arg(long, default_value_t = 1e-3)]
    dy_tol: f64,
}

#[derive(Debug, Args)]
struct HopfArgs {
    #[arg(long, default_value = "C")]
    vary: ParamName,
    /// Search range; required unless varying C.
    #[arg(long = "from")]
    from: Option<f64>,
    #[arg(long = "to")]
    to: Option<f64>,
}

#[derive(Debug, Args)]
struct CyclesArgs {
    #[arg(long, default_value = "D")]
    vary: ParamName,
    #[arg(long = "from")]
    from: f64,
    #[arg(long = "to")]
    to: f64,
    /// Parameter value where the branch starts (default: the configured
    /// value if it lies in the range, else the midpoint).
    #[arg(long)]
    start: Option<f64>,
    /// Seed state for the starting cycle (default: outermost stable fixed
    /// point of the return map).
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    seed: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct BautinArgs {
    #[arg(long, default_value = "D")]
    p1: ParamName,
    #[arg(long, default_value = "A")]
    p2: ParamName,
    /// Search box `P1_LO P1_HI P2_LO P2_HI`.
    #[arg(long = "box", num_args = 4, value_names = ["P1_LO", "P1_HI", "P2_LO", "P2_HI"], required = true)]
    bbox: Vec<f64>,
}

#[derive(Debug, Args)]
struct ClaimsArgs {
    /// Cells per side of the basin grid.
    #[arg(long, default_value_t = 300)]
    grid: usize,
    /// Run only these claims.
    #[arg(long)]
    only: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cfg = load_config(&cli.global)?;
    let ctx = Ctx {
        cfg,
        out: cli.global.out.clone(),
        plot: cli.global.plot,
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, &a),
        Command::Basin(a) => cmd_basin(&ctx, &a),
        Command::BoundaryFit(a) => cmd_boundary_fit(&ctx, &a),
        Command::Stability => cmd_stability(&ctx),
        Command::Hopf(a) => cmd_hopf(&ctx, &a),
        Command::Cycles(a) => cmd_cycles(&ctx, &a),
        Command::Bautin(a) => cmd_bautin(&ctx, &a),
        Command::CheckClaims(a) => cmd_check_claims(&ctx, &a),
    }
}

fn load_config(g: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.params {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for item in &g.set {
        cfg = apply_override(&cfg, item)?;
    }
    cfg.theta = g.theta.or(cfg.theta);
    cfg.t_max = g.tmax.or(cfg.t_max);
    cfg.max_steps = g.max_steps.or(cfg.max_steps);
    cfg.rtol = g.rtol.or(cfg.rtol);
    cfg.atol = g.atol.or(cfg.atol);
    cfg.blowup()
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Replaces one key in the canonical text form and reparses, so inline
/// overrides go through the same validation as run files.
fn apply_override(cfg: &RunConfig, item: &str) -> Result<RunConfig, CliError> {
    let Some((key, value)) = item.split_once('=') else {
        return Err(CliError::Usage(format!(
            "--set expects KEY=VALUE, got `{item}`"
        )));
    };
    let key = key.trim();
    let mut text: String = cfg
        .serialize()
        .lines()
        .filter(|l| l.split('=').next().map(str::trim) != Some(key))
        .map(|l| format!("{l}\n"))
        .collect();
    text.push_str(&format!("{key} = {}\n", value.trim()));
    RunConfig::parse(&text).map_err(|e| {
        let msg = e.to_string();
        let detail = msg.split_once(": ").map_or(msg.as_str(), |(_, d)| d);
        CliError::Usage(format!("--set {item}: {detail}"))
    })
}

struct Ctx {
    cfg: RunConfig,
    out: Option<PathBuf>,
    plot: bool,
}

impl Ctx {
    fn dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("."))
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let dir = self.dir();
        export::write(dir, name, contents).map_err(|source| CliError::Output {
            path: dir.join(name).display().to_string(),
            source,
        })
    }
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<(), CliError> {
    let params = ctx.cfg.params;
    let ic = if a.at_equilibrium {
        interior_equilibrium(&params).map_err(numerical)?.point
    } else {
        let v = a.ic.as_deref().unwrap_or_default();
        State::new(v[0], v[1])
    };
    if !(ic.x >= 0.0 && ic.y >= 0.0 && ic.is_finite()) {
        return Err(CliError::Usage(format!(
            "initial state must be nonnegative, got ({}, {})",
            ic.x, ic.y
        )));
    }
    let bcfg = ctx.cfg.blowup();
    let initial = InitialData::for_params(&params, ic);
    let outcome = classify(&params, &initial, &bcfg).map_err(numerical)?;

    let t_end = match (outcome.label, outcome.t_star) {
        (Label::BlowUp, Some(t)) if t > 0.0 => t,
        _ => bcfg.t_max,
    };
    let event = EventSpec::predator_above(bcfg.threshold.min(1e10));
    let integrate = |t: f64| -> Result<Integration<2>, String> {
        let icfg = ctx.cfg.integrator();
        let r = if params.is_delayed() {
            integrate_dde(
                &params,
                &History::constant(ic),
                (0.0, t),
                &icfg,
                Some(&event),
            )
        } else {
            integrate_ode(&params, ic, (0.0, t), &icfg, Some(&event))
        };
        r.map_err(|e| e.to_string())
    };
    // The underflow-terminated tail cannot be integrated to T* itself.
    let run = integrate(t_end).or_else(|_| integrate(t_end * (1.0 - 1e-6)));
    let traj = match run {
        Ok(r) => Some(r),
        Err(e) if outcome.label == Label::Failure => {
            eprintln!("trajectory unavailable: {e}");
            None
        }
        Err(e) => return Err(numerical(e)),
    };

    let event_json = traj.as_ref().and_then(|r| r.event.as_ref()).map(|h| {
        json!({
            "time": h.time,
            "state": { "X": h.state[0], "Y": h.state[1] },
            "component": h.component,
            "threshold": h.threshold,
        })
    });
    let doc = json!({
        "params": params,
        "initial": ic,
        "outcome": outcome,
        "event": event_json,
    });
    ctx.write("outcome.json", &export::to_json(&doc))?;
    if let Some(r) = &traj {
        let t = &r.trajectory;
        let rows: Vec<(f64, [f64; 2])> = match a.dt {
            Some(dt) if dt > 0.0 => t.sample(dt),
            Some(_) => return Err(CliError::Usage("--dt must be positive".into())),
            None => t
                .times()
                .iter()
                .copied()
                .zip(t.states().iter().copied())
                .collect(),
        };
        ctx.write("trajectory.csv", &export::trajectory_csv(&rows))?;
        if ctx.plot {
            let ts: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let xs: Vec<f64> = rows.iter().map(|r| r.1[0]).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.1[1]).collect();
            ctx.write("timeseries.svg", &svg::time_series(&ts, &xs, &ys, a.log_y))?;
        }
    }
    match outcome.t_star {
        Some(t) => println!(
            "{} T_star = {}",
            export::label_name(outcome.label),
            export::num(t)
        ),
        None => println!("{}", export::label_name(outcome.label)),
    }
    if outcome.label == Label::Failure {
        return Err(CliError::Numerical(
            outcome.cause.unwrap_or_else(|| "integration failed".into()),
        ));
    }
    Ok(())
}

fn cmd_basin(ctx: &Ctx, a: &GridArgs) -> Result<(), CliError> {
    let spec = a.spec();
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let grid = sweep(&ctx.cfg.params, &spec, &ctx.cfg.blowup()).map_err(numerical)?;
    ctx.write("basin.csv", &export::basin_csv(&grid))?;
    let summary = json!({
        "grid": spec,
        "params": ctx.cfg.params,
        "bounded": grid.count(Label::Bounded),
        "blowup": grid.count(Label::BlowUp),
        "failure": grid.count(Label::Failure),
        "failures": grid.failures,
    });
    ctx.write("basin.json", &export::to_json(&summary))?;
    if ctx.plot {
        ctx.write("basin.svg", &svg::basin_raster(&grid))?;
    }
    println!(
        "{} cells: {} Bounded, {} BlowUp, {} Failure",
        spec.cells(),
        grid.count(Label::Bounded),
        grid.count(Label::BlowUp),
        grid.count(Label::Failure)
    );
    Ok(())
}

fn cmd_boundary_fit(ctx: &Ctx, a: &BoundaryFitArgs) -> Result<(), CliError> {
    let spec = a.grid.spec();
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if !(a.dy_tol > 0.0) {
        return Err(CliError::Usage("--dy-tol must be positive".into()));
    }
    let bcfg = ctx.cfg.blowup();
    let grid = sweep(&ctx.cfg.params, &spec, &bcfg).map_err(numerical)?;
    let curve = extract_boundary(&grid, &ctx.cfg.params, &bcfg, a.dy_tol).map_err(numerical)?;
    ctx.write("boundary.csv", &export::boundary_csv(&curve))?;
    ctx.write("boundary.json", &export::to_json(&curve))?;
    let mono = monotonicity_report(&curve);
    let const_rmse = constant_fit_rmse(&curve.ys());
    println!(
        "boundary: {} points, {} skipped columns, monotone decreasing: {}, constant-fit RMSE {}",
        curve.points.len(),
        curve.skipped.len(),
        mono.monotone_decreasing,
        export::num(const_rmse)
    );
    let families = if a.family.is_empty() {
        vec![FitFamily::Rational, FitFamily::InverseLog]
    } else {
        a.family.clone()
    };
    let mut failed = None;
    for family in families {
        match fit_boundary(&curve, family) {
            Ok(fit) => {
                ctx.write(
                    &format!("fit_{}.json", family.name()),
                    &export::to_json(&fit),
                )?;
                println!(
                    "{}: params {:?}, RMSE {}, converged {}",
                    family.name(),
                    fit.params,
                    export::num(fit.rmse),
                    fit.report.converged
                );
            }
            Err(e) => {
                println!("{}: {e}", family.name());
                failed = Some(numerical(format!("{} fit: {e}", family.name())));
            }
        }
    }
    failed.map_or(Ok(()), Err)
}

fn equilibrium_name(kind: EquilibriumKind) -> &'static str {
    match kind {
        EquilibriumKind::Extinction => "E0",
        EquilibriumKind::PredatorFree => "E1",
        EquilibriumKind::Interior => "E2",
    }
}

fn cmd_stability(ctx: &Ctx) -> Result<(), CliError> {
    let params = ctx.cfg.params;
    let eqs = classify_equilibria(&params);
    for e in &eqs {
        println!(
            "{} X={} Y={} trace={:+.6e} det={:+.6e} {:?}{}",
            equilibrium_name(e.kind),
            e.point.x,
            e.point.y,
            e.trace,
            e.det,
            e.classification,
            if e.classification.is_stable() {
                " stable"
            } else {
                ""
            }
        );
    }
    let ch = stability_threshold_c(&params).ok();
    match ch {
        Some(c) => println!("C_H={c:.6}"),
        None => println!("C_H undefined"),
    }
    if ctx.out.is_some() {
        let doc = json!({ "params": params, "equilibria": eqs, "C_H": ch });
        ctx.write("stability.json", &export::to_json(&doc))?;
    }
    Ok(())
}

fn cmd_hopf(ctx: &Ctx, a: &HopfArgs) -> Result<(), CliError> {
    let params = ctx.cfg.params;
    let hopf = match (a.vary, a.from, a.to) {
        (ParamName::C, None, None) => hopf_in_c(&params).map_err(numerical)?,
        (p, Some(lo), Some(hi)) => {
            hopf_on_locus(&params, p, params.get(p), p, (lo, hi)).map_err(numerical)?
        }
        _ => {
            return Err(CliError::Usage(
                "--from and --to are required unless varying C".into(),
            ))
        }
    };
    println!(
        "Hopf at {} = {:.8}: equilibrium ({:.6}, {:.6}), omega {:.6}, l1 {:+.6e} ({})",
        hopf.param,
        hopf.value,
        hopf.equilibrium.x,
        hopf.equilibrium.y,
        hopf.omega,
        hopf.lyapunov,
        if hopf.lyapunov < 0.0 {
            "supercritical"
        } else {
            "subcritical"
        }
    );
    ctx.write("hopf.json", &export::to_json(&hopf))?;
    Ok(())
}

fn starting_cycle(
    ctx: &Ctx,
    a: &CyclesArgs,
    params: &lglab::ModelParams,
) -> Result<PeriodicOrbit, CliError> {
    if let Some(v) = &a.seed {
        return find_cycle(params, State::new(v[0], v[1]), None).map_err(numerical);
    }
    let model = Model::new(*params).map_err(numerical)?;
    let section = Section::through_equilibrium(params).map_err(numerical)?;
    let opts = ReturnOptions {
        integrator: ReturnOptions::default().integrator,
        t_max: ctx.cfg.t_max.unwrap_or(ReturnOptions::default().t_max),
    };
    let orbits = section_fixed_points(&model, &section, 2.0 * section.y_floor, 60, &opts)
        .map_err(numerical)?;
    orbits
        .into_iter()
        .rfind(|o| o.stability == OrbitStability::Stable)
        .ok_or_else(|| {
            CliError::Numerical(format!(
                "no stable cycle found at {} = {}; pass --seed X Y",
                a.vary,
                params.get(a.vary)
            ))
        })
}

fn cmd_cycles(ctx: &Ctx, a: &CyclesArgs) -> Result<(), CliError> {
    if !(a.to > a.from) {
        return Err(CliError::Usage("--to must exceed --from".into()));
    }
    let current = ctx.cfg.params.get(a.vary);
    let v0 = a.start.unwrap_or(if (a.from..=a.to).contains(&current) {
        current
    } else {
        0.5 * (a.from + a.to)
    });
    if !(a.from..=a.to).contains(&v0) {
        return Err(CliError::Usage(format!(
            "--start {v0} lies outside [{}, {}]",
            a.from, a.to
        )));
    }
    let params = ctx.cfg.params.with(a.vary, v0);
    let start = starting_cycle(ctx, a, &params)?;
    let branch = continue_cycles(
        &params,
        a.vary,
        (a.from, a.to),
        &start,
        &ContinuationOptions::default(),
    )
    .map_err(numerical)?;
    ctx.write("branch.csv", &export::branch_csv(&branch))?;
    let doc = json!({ "vary": a.vary, "folds": branch.folds, "stop_reasons": branch.stop_reasons });
    ctx.write("folds.json", &export::to_json(&doc))?;
    if ctx.plot {
        let rows: Vec<_> = branch.points.iter().filter(|p| !p.is_lpc).collect();
        let ps: Vec<f64> = rows.iter().map(|p| p.param).collect();
        let ts: Vec<f64> = rows.iter().map(|p| p.period).collect();
        let st: Vec<bool> = rows.iter().map(|p| p.stable).collect();
        let folds: Vec<(f64, f64)> = branch.folds.iter().map(|f| (f.param, f.period)).collect();
        ctx.write(
            "branch.svg",
            &svg::branch(&ps, &ts, &st, &folds, a.vary.as_str(), "period"),
        )?;
    }
    println!(
        "{} branch points from {} = {v0}",
        branch.points.len(),
        a.vary
    );
    for f in &branch.folds {
        println!(
            "LPC at {} = {:.6}: period {:.4}, coefficient {:+.4e}{}",
            a.vary,
            f.param,
            f.period,
            f.coefficient,
            if f.through_equilibrium {
                " (through the equilibrium)"
            } else {
                ""
            }
        );
    }
    Ok(())
}

fn cmd_bautin(ctx: &Ctx, a: &BautinArgs) -> Result<(), CliError> {
    let b = &a.bbox;
    if !(b[1] > b[0] && b[3] > b[2]) {
        return Err(CliError::Usage("--box bounds must be increasing".into()));
    }
    let bbox = BautinBox {
        p1: (b[0], b[1]),
        p2: (b[2], b[3]),
    };
    if a.p1 == a.p2 {
        return Err(CliError::Usage("--p1 and --p2 must differ".into()));
    }
    let point = find_bautin(&ctx.cfg.params, a.p1, a.p2, bbox).map_err(numerical)?;
    println!(
        "Bautin at ({}, {}) = ({:.6}, {:.6}), l1 {:+.3e}",
        a.p1, a.p2, point.v1, point.v2, point.hopf.lyapunov
    );
    ctx.write("bautin.json", &export::to_json(&point))?;
    Ok(())
}

fn cmd_check_claims(ctx: &Ctx, a: &ClaimsArgs) -> Result<(), CliError> {
    let known = claim_ids();
    if let Some(bad) = a.only.iter().find(|id| !known.contains(&id.as_str())) {
        return Err(CliError::Usage(format!(
            "unknown claim `{bad}`; known: {}",
            known.join(", ")
        )));
    }
    if a.grid < 2 {
        return Err(CliError::Usage("--grid must be at least 2".into()));
    }
    let opts = ClaimOptions {
        theta: ctx.cfg.theta.unwrap_or(ClaimOptions::default().theta),
        max_steps: ctx.cfg.max_steps,
        grid: a.grid,
    };
    let report = run_claims_filtered(&opts, |id| {
        a.only.is_empty() || a.only.iter().any(|o| o == id)
    });
    print!("{}", report.table());
    if ctx.out.is_some() {
        ctx.write("claims.json", &export::to_json(&report))?;
    }
    let failed = report.claims.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::ClaimsFailed {
            failed,
            total: report.claims.len(),
        });
    }
    Ok(())
}
