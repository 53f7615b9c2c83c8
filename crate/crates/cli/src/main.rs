//! `mrguide`: batch driver for the simulator, planner, workspace analysis,
//! targeting experiments and the control service.
//!
//! Coordinates are comma-separated millimetres. Results go to stdout as JSON;
//! the resolved configuration is echoed to stderr as one `config {...}` line.
//! Any failure prints `error kind=<Kind> message="<text>"` and exits with 1.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrguide_core::eval::{run_experiment, ExperimentSpec};
use mrguide_core::planner::{preview_plan, ExecOptions, PlanExecutor, StepOutcome, MAX_STEP_MM};
use mrguide_core::workspace::{
    coverage_ratio, sample_workspace, standin_organ, TriMesh, DEFAULT_STANDOFF_MM, DEFAULT_VOXEL_PITCH,
};
use mrguide_core::{
    forward_kinematics, incline_angle, solve_inverse_kinematics, AxisId, CarriagePose, Guard, Robot, RobotConfig,
    TargetPlan,
};
use mrguide_service::ServiceConfig;
use nalgebra::Point3;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "mrguide", version, about = "Needle-guidance robot simulator and analysis tools")]
struct Cli {
    /// Robot JSON config (geometry plus optional "axes"); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Carriage positions for an entry/target line.
    Ik {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        entry: [f64; 3],
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        target: [f64; 3],
    },
    /// Needle line of a carriage pose.
    Fk {
        /// x_u,y_u,x_l,y_l
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        pose: CarriagePose,
        /// Also report the tip on the plane this far below the lower bearing, mm.
        #[arg(long)]
        depth: Option<f64>,
    },
    /// Print the sequential move log from start to goal without executing it.
    Plan(MoveArgs),
    /// Execute a move on the simulator and write the trajectory.
    Run {
        #[command(flatten)]
        target: MoveArgs,
        #[arg(long, value_enum, default_value_t = GuardArg::On)]
        guard: GuardArg,
        /// Simulation step, s.
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        /// Trajectory CSV: t, true and encoder positions, incline, moving axis.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Sample the reachable workspace into a point cloud.
    Workspace {
        /// Depth range below the lower bearing, mm: d0,d1.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "0,100")]
        depth: [f64; 2],
        #[arg(long, default_value_t = 2.5)]
        resolution: f64,
        /// Cloud CSV (x,y,z).
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Cloud JSON with generating poses.
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
    /// Fraction of an organ mesh the needle can reach.
    Coverage {
        /// Binary or ASCII STL in robot coordinates; the 1147 ml stand-in ellipsoid when omitted.
        #[arg(long, value_name = "PATH")]
        mesh: Option<PathBuf>,
        /// Shift of the organ away from the robot, mm.
        #[arg(long, default_value_t = DEFAULT_STANDOFF_MM)]
        standoff: f64,
        /// Voxel pitch, mm.
        #[arg(long, default_value_t = DEFAULT_VOXEL_PITCH)]
        pitch: f64,
        /// Workspace sampling resolution, mm.
        #[arg(long, default_value_t = 5.0)]
        resolution: f64,
        /// Cloud CSV covering the organ depth range.
        #[arg(long, value_name = "PATH")]
        cloud: Option<PathBuf>,
    },
    /// Run a targeting experiment and write the report.
    Evaluate {
        /// `default` (calibrated noise), `ideal` (no noise) or an experiment JSON file.
        #[arg(long, default_value = "default")]
        spec: String,
        /// Overrides the experiment seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for records.csv and summary.json.
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
    /// Start the HTTP control service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Simulated seconds per wall second; 0 runs unthrottled.
        #[arg(long, default_value_t = 10.0)]
        time_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Telemetry rate while moving, Hz.
        #[arg(long, default_value_t = 10.0)]
        telemetry_hz: f64,
    },
}

#[derive(Debug, Args)]
struct MoveArgs {
    /// Goal pose x_u,y_u,x_l,y_l.
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true, conflicts_with_all = ["entry", "target"], required_unless_present = "entry")]
    goal: Option<CarriagePose>,
    /// Entry point; with --target, the goal is its IK solution.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true, requires = "target")]
    entry: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true, requires = "entry")]
    target: Option<[f64; 3]>,
    /// Start pose; the home pose when omitted.
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    start: Option<CarriagePose>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GuardArg {
    On,
    Off,
}

impl From<GuardArg> for Guard {
    fn from(g: GuardArg) -> Self {
        match g {
            GuardArg::On => Guard::On,
            GuardArg::Off => Guard::Off,
        }
    }
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers, got {}", parts.len()));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?;
        if !o.is_finite() {
            return Err(format!("{p:?} is not finite"));
        }
    }
    Ok(out)
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    parse_floats::<3>(s)
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    parse_floats::<2>(s)
}

fn parse_pose(s: &str) -> Result<CarriagePose, String> {
    parse_floats::<4>(s).map(CarriagePose::from_array)
}

/// A failure reported as one machine-parseable line.
#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
}

impl From<mrguide_core::Error> for Failure {
    fn from(e: mrguide_core::Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

macro_rules! impl_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                mrguide_core::Error::from(e).into()
            }
        }
    )*};
}

impl_failure!(
    std::io::Error,
    serde_json::Error,
    csv::Error,
    mrguide_core::KinematicsError,
    mrguide_core::PlanError,
    mrguide_core::workspace::WorkspaceError
);

type CliResult<T = ()> = Result<T, Failure>;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn echo_config(command: &str, extra: serde_json::Value) {
    eprintln!("config {}", json!({"command": command, "resolved": extra}));
}

fn print_json(value: &impl serde::Serialize) -> CliResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_robot(path: Option<&Path>) -> CliResult<RobotConfig> {
    match path {
        Some(p) => Ok(RobotConfig::load(p)?),
        None => Ok(RobotConfig::default()),
    }
}

fn resolve_goal(args: &MoveArgs, cfg: &RobotConfig) -> CliResult<(CarriagePose, CarriagePose)> {
    let goal = match (args.goal, args.entry, args.target) {
        (Some(g), _, _) => g,
        (None, Some(e), Some(t)) => {
            solve_inverse_kinematics(&TargetPlan::robot(Point3::from(e), Point3::from(t)), &cfg.robot)?.pose
        }
        _ => {
            return Err(Failure {
                kind: "InvalidArguments",
                message: "give --goal or both --entry and --target".into(),
            })
        }
    };
    goal.check_limits(&cfg.robot)?;
    let start = args.start.unwrap_or_else(|| cfg.robot.home_pose());
    start.check_limits(&cfg.robot)?;
    Ok((start, goal))
}

fn point_json(p: &Point3<f64>) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn cmd_ik(cfg: &RobotConfig, entry: [f64; 3], target: [f64; 3]) -> CliResult {
    echo_config("ik", json!({"robot": cfg, "entry": entry, "target": target}));
    let sol = solve_inverse_kinematics(&TargetPlan::robot(Point3::from(entry), Point3::from(target)), &cfg.robot)?;
    print_json(&sol)
}

fn cmd_fk(cfg: &RobotConfig, pose: CarriagePose, depth: Option<f64>) -> CliResult {
    echo_config("fk", json!({"robot": cfg, "pose": pose, "depth": depth}));
    pose.check_limits(&cfg.robot)?;
    let p = &cfg.robot;
    let line = forward_kinematics(&pose, p);
    let mut out = json!({
        "origin": point_json(&line.origin),
        "direction": [line.direction.x, line.direction.y, line.direction.z],
        "upper": point_json(&pose.upper_point(p)),
        "lower": point_json(&pose.lower_point(p)),
        "incline_deg": incline_angle(&pose, p),
    });
    if let Some(d) = depth {
        out["tip"] = json!(point_json(&mrguide_core::kinematics::tip_on_plane(&pose, p, d)));
    }
    print_json(&out)
}

fn cmd_plan(cfg: &RobotConfig, args: &MoveArgs) -> CliResult {
    let (start, goal) = resolve_goal(args, cfg)?;
    echo_config("plan", json!({"robot": cfg, "start": start, "goal": goal}));
    let max = ExecOptions::default().max_iterations;
    let moves = preview_plan(&start, &goal, max);
    let mut pose = start;
    let mut out = io::stdout().lock();
    for (i, (axis, delta)) in moves.iter().enumerate() {
        let (now, g) = (pose.get(*axis), goal.get(*axis));
        pose.set(*axis, if (g - now).abs() <= MAX_STEP_MM { g } else { now + delta });
        let line = json!({
            "iteration": i,
            "axis": axis.number(),
            "delta_mm": delta,
            "pose": pose,
            "incline_deg": incline_angle(&pose, &cfg.robot),
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn cmd_run(cfg: &RobotConfig, args: &MoveArgs, guard: Guard, dt: f64, path: &Path) -> CliResult {
    let (start, goal) = resolve_goal(args, cfg)?;
    let options = ExecOptions {
        guard,
        dt,
        ..ExecOptions::default()
    };
    echo_config("run", json!({"robot": cfg, "start": start, "goal": goal, "options": options}));
    let mut robot = cfg.robot_at(&start)?;
    let mut exec = PlanExecutor::new(goal, options, &robot)?;

    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "t", "x_u", "y_u", "x_l", "y_l", "enc_x_u", "enc_y_u", "enc_x_l", "enc_y_l", "incline_deg", "axis",
    ])?;
    let sample = |r: &Robot, t: f64| {
        let mut v = vec![t];
        v.extend(r.pose().to_array());
        v.extend(r.encoder_pose().to_array());
        v.push(r.incline());
        v
    };
    let write = |w: &mut csv::Writer<_>, v: &[f64], axis: Option<AxisId>| {
        let mut rec: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        rec.push(axis.map(|a| a.number().to_string()).unwrap_or_default());
        w.write_record(&rec)
    };
    write(&mut w, &sample(&robot, 0.0), None)?;
    loop {
        let mut ticks = Vec::new();
        let axis = match exec.step(&mut robot, |r, t| ticks.push(sample(r, t)))? {
            StepOutcome::Done => break,
            StepOutcome::Stepped(rec) => rec.axis,
        };
        for v in &ticks {
            write(&mut w, v, Some(axis))?;
        }
    }
    w.flush()?;
    let result = exec.finish(&robot, true, false);
    print_json(&result)
}

fn cmd_workspace(cfg: &RobotConfig, depth: [f64; 2], resolution: f64, out: &Path, json_out: Option<&Path>) -> CliResult {
    echo_config("workspace", json!({"robot": cfg, "depth": depth, "resolution": resolution}));
    let cloud = sample_workspace(&cfg.robot, depth, resolution)?;
    cloud.write_csv(create(out)?)?;
    if let Some(p) = json_out {
        cloud.write_json(create(p)?)?;
    }
    print_json(&json!({
        "samples": cloud.len(),
        "poses": cloud.poses.len(),
        "depth_range": cloud.depth_range,
        "resolution": cloud.resolution,
        "max_lateral_extent_mm": cloud.max_lateral_extent(depth[1]),
    }))
}

fn cmd_coverage(
    cfg: &RobotConfig,
    mesh: Option<&Path>,
    standoff: f64,
    pitch: f64,
    resolution: f64,
    cloud_out: Option<&Path>,
) -> CliResult {
    echo_config(
        "coverage",
        json!({"robot": cfg, "mesh": mesh, "standoff": standoff, "pitch": pitch, "resolution": resolution}),
    );
    let organ = match mesh {
        Some(p) => TriMesh::read_stl(File::open(p)?)?,
        None => standin_organ(&cfg.robot)?,
    };
    let (lo, _) = organ.bounds();
    let deepest = (cfg.robot.z_lower - (lo.z - standoff)).max(0.0);
    let cloud = sample_workspace(&cfg.robot, [0.0, deepest + resolution], resolution)?;
    if let Some(p) = cloud_out {
        cloud.write_csv(create(p)?)?;
    }
    let cov = coverage_ratio(&cloud, &organ, standoff, pitch)?;
    print_json(&json!({
        "ratio": cov.ratio,
        "pitch_mm": cov.pitch_mm,
        "standoff_mm": cov.standoff_mm,
        "reachable_voxels": cov.reachable_voxels,
        "total_voxels": cov.total_voxels,
        "organ_volume_ml": organ.volume() / 1000.0,
    }))
}

fn cmd_evaluate(config: Option<&Path>, spec: &str, seed: Option<u64>, jobs: usize, dir: &Path) -> CliResult {
    let mut exp = match spec {
        "default" => ExperimentSpec::calibrated(0),
        "ideal" => ExperimentSpec::default(),
        path => ExperimentSpec::load(Path::new(path))?,
    };
    if let Some(s) = seed {
        exp.model.seed = s;
    }
    if let Some(p) = config {
        exp.robot = RobotConfig::load(p)?;
    }
    echo_config("evaluate", json!({"spec": exp, "jobs": jobs, "out": dir}));
    let report = run_experiment(&exp, jobs)?;
    std::fs::create_dir_all(dir)?;
    report.write_csv(create(&dir.join("records.csv"))?)?;
    let mut summary = create(&dir.join("summary.json"))?;
    report.write_summary_json(&mut summary)?;
    writeln!(summary)?;
    summary.flush()?;
    print_json(&report.summary)
}

fn cmd_serve(cfg: RobotConfig, addr: SocketAddr, time_scale: f64, seed: u64, telemetry_hz: f64) -> CliResult {
    let config = ServiceConfig {
        robot: cfg,
        time_scale,
        telemetry_hz,
        seed,
        ..ServiceConfig::default()
    };
    echo_config("serve", json!({"service": config, "addr": addr.to_string()}));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(mrguide_service::serve(config, addr))?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Evaluate { spec, seed, out } => cmd_evaluate(config, spec, *seed, cli.jobs, out),
        cmd => {
            let cfg = load_robot(config)?;
            match cmd {
                Command::Ik { entry, target } => cmd_ik(&cfg, *entry, *target),
                Command::Fk { pose, depth } => cmd_fk(&cfg, *pose, *depth),
                Command::Plan(args) => cmd_plan(&cfg, args),
                Command::Run { target, guard, dt, out } => cmd_run(&cfg, target, (*guard).into(), *dt, out),
                Command::Workspace {
                    depth,
                    resolution,
                    out,
                    json,
                } => cmd_workspace(&cfg, *depth, *resolution, out, json.as_deref()),
                Command::Coverage {
                    mesh,
                    standoff,
                    pitch,
                    resolution,
                    cloud,
                } => cmd_coverage(&cfg, mesh.as_deref(), *standoff, *pitch, *resolution, cloud.as_deref()),
                Command::Serve {
                    host,
                    port,
                    time_scale,
                    seed,
                    telemetry_hz,
                } => cmd_serve(cfg, SocketAddr::new(*host, *port), *time_scale, *seed, *telemetry_hz),
                Command::Evaluate { .. } => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error kind={} message={:?}", f.kind, f.message);
            ExitCode::FAILURE
        }
    }
}
