use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pollisim::bench::{self, SweepSpec};
use pollisim::config::PipelineConfig;
use pollisim::dersim::{self, ElasticModel, NetworkFile, RodNetwork, SimConfig};
use pollisim::files::{self, FileError};
use pollisim::fusion::io::{load_view, read_pose_list, read_ply, save_view, write_ply};
use pollisim::graspplan::{GraspPose, StemPath};
use pollisim::pipeline::{self, exit, PipelineError};
use pollisim::skeleton::SimplifiedSkeleton;
use pollisim::synthetic::plant_registry;
use pollisim::validate::{self, Fault, ValidateOptions};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nconfig schema: 1\nformats: ply-ascii, pgm16+mask, skeleton-json, network-json, timeseries-csv"
);

#[derive(Parser)]
#[command(name = "pollisim", version, long_version = LONG_VERSION, about = "Plant skeletons, stem grasps and vibration simulation")]
struct Cli {
    /// Pipeline config JSON; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse masked depth views into one point cloud (ASCII PLY).
    Fuse(FuseArgs),
    /// Extract a simplified skeleton from a point cloud.
    Skeletonize(SkeletonizeArgs),
    /// Choose the main stem, grasp point and approach direction.
    PlanGrasp(PlanArgs),
    /// Run a rod-network simulation and write the recorded node tracks.
    Simulate(SimulateArgs),
    /// Run an amplitude or grasp-location sweep.
    Sweep(SweepArgs),
    /// Run the acceptance checks.
    Validate(ValidateArgs),
    /// Print the effective config.
    PrintConfig,
    /// Write a procedural test plant with its ground truth.
    #[command(hide = true)]
    GenSynthetic(GenArgs),
}

#[derive(Args)]
struct FuseArgs {
    /// View sidecar JSON files; depth and mask images sit next to each as `<stem>_depth.pgm` and `<stem>_mask.pgm`.
    #[arg(required = true)]
    views: Vec<PathBuf>,
    /// JSON array of poses replacing the sidecar poses, one per view.
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    no_icp: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SkeletonizeArgs {
    cloud: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Voxel size (m).
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long)]
    max_grid_dim: Option<usize>,
    #[arg(long)]
    knn_k: Option<usize>,
}

#[derive(Args)]
struct PlanArgs {
    skeleton: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    n_dirs: Option<usize>,
    #[arg(long)]
    max_angle_deg: Option<f64>,
    #[arg(long)]
    obstruction_radius: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Rod network JSON or skeleton JSON.
    input: PathBuf,
    /// Simulation config JSON; defaults to the `sim` section of the pipeline config.
    #[arg(long)]
    sim: Option<PathBuf>,
    /// Node tracks as CSV.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Where to write the rod network built from a skeleton input.
    #[arg(long)]
    write_network: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    no_gravity: bool,
}

#[derive(Args)]
struct SweepArgs {
    spec: PathBuf,
    /// SweepResult JSON.
    #[arg(short, long)]
    output: PathBuf,
    /// (x, amplitude) pairs as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write a gnuplot script that plots the CSV.
    #[arg(long)]
    emit_gnuplot: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    json: bool,
    /// Comma-separated criterion ids.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
    #[arg(long, hide = true)]
    inject_fault: Option<Fault>,
}

#[derive(Args)]
struct GenArgs {
    /// straight, y-plant or branched3.
    plant: String,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 4)]
    views: usize,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 480)]
    height: usize,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0} check(s) failed")]
    ValidationFailed(usize),
}

impl From<FileError> for CliError {
    fn from(e: FileError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Pipeline(e) => e.exit_code(),
            CliError::ValidationFailed(_) => exit::VALIDATION_FAILED,
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Pipeline(PipelineError::Input(msg.into()))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p).map_err(PipelineError::from)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn cmd_fuse(args: &FuseArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let poses = match &args.poses {
        Some(p) => {
            let list = read_pose_list(p)?;
            if list.len() != args.views.len() {
                return Err(FileError::format(p, format!("{} poses for {} views", list.len(), args.views.len())).into());
            }
            list.into_iter().map(Some).collect()
        }
        None => vec![None; args.views.len()],
    };
    let views = args
        .views
        .iter()
        .zip(poses)
        .map(|(v, pose)| load_view(v, pose))
        .collect::<Result<Vec<_>, _>>()?;
    let mut fcfg = cfg.fusion.clone();
    if args.no_icp {
        fcfg.icp = false;
    }
    let cloud = pipeline::fuse(&views, &fcfg)?;
    write_ply(&args.output, &cloud)?;
    eprintln!("fused {} views into {} points", views.len(), cloud.len());
    Ok(())
}

fn cmd_skeletonize(args: &SkeletonizeArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let mut scfg = cfg.skeleton.clone();
    if let Some(r) = args.resolution {
        scfg.resolution_m = r;
    }
    if let Some(m) = args.max_grid_dim {
        scfg.max_grid_dim = m;
    }
    if let Some(k) = args.knn_k {
        scfg.knn_k = k;
    }
    let cloud = read_ply(&args.cloud)?;
    let rec = pipeline::reconstruct(&cloud, &cfg.fusion, &scfg)?;
    rec.skeleton.save(&args.output)?;
    eprintln!(
        "{} points -> {} clustered -> grid {:?} ({} voxels) -> {} nodes, {} segments",
        cloud.len(),
        rec.cluster_points,
        rec.grid_dims,
        rec.occupied_voxels,
        rec.skeleton.nodes.len(),
        rec.skeleton.segments.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct GraspFile {
    pose: GraspPose,
    stem: StemPath,
    grasp_segment: usize,
}

fn cmd_plan(args: &PlanArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    if let Some(n) = args.n_dirs {
        cfg.grasp.n_dirs = n;
    }
    if let Some(a) = args.max_angle_deg {
        cfg.grasp.max_angle_deg = a;
    }
    if let Some(r) = args.obstruction_radius {
        cfg.grasp.obstruction_radius_m = r;
    }
    let skel = SimplifiedSkeleton::load(&args.skeleton)?;
    let plan = pipeline::plan(&skel, &cfg)?;
    files::write_json(
        &args.output,
        &GraspFile {
            pose: plan.pose,
            stem: plan.stem,
            grasp_segment: plan.grasp_segment,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SimSummary {
    status: &'static str,
    error: Option<String>,
    nodes: usize,
    steps: usize,
    samples: usize,
    newton_iterations: usize,
    max_newton_iterations: usize,
    presettle_iterations: usize,
    residuals: Option<Vec<f64>>,
}

enum SimInput {
    Network(NetworkFile),
    Skeleton(SimplifiedSkeleton),
}

fn read_sim_input(path: &Path) -> Result<SimInput, CliError> {
    let text = files::read_text(path)?;
    let as_network = serde_json::from_str::<NetworkFile>(&text);
    if let Ok(n) = as_network {
        return Ok(SimInput::Network(n));
    }
    match serde_json::from_str::<SimplifiedSkeleton>(&text) {
        Ok(s) => Ok(SimInput::Skeleton(s)),
        Err(e) => Err(FileError::format(
            path,
            format!(
                "neither a rod network ({}) nor a skeleton ({e})",
                as_network.err().map(|e| e.to_string()).unwrap_or_default()
            ),
        )
        .into()),
    }
}

fn cmd_simulate(args: &SimulateArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let net = match read_sim_input(&args.input)? {
        SimInput::Network(n) => RodNetwork::from_file(n).map_err(PipelineError::from)?,
        SimInput::Skeleton(s) => pipeline::rod_network(&s, cfg)?.0,
    };
    if let Some(p) = &args.write_network {
        net.save(p)?;
    }
    let mut sim: SimConfig = match &args.sim {
        Some(p) => files::read_json(p)?,
        None => cfg.sim.clone(),
    };
    if let Some(dt) = args.dt {
        sim.dt_s = dt;
    }
    if let Some(d) = args.duration {
        sim.duration_s = d;
    }
    if args.no_gravity {
        sim.gravity_on = false;
    }
    let result = dersim::run(&net, &ElasticModel::default(), &sim);
    let summary = match &result {
        Ok(out) => SimSummary {
            status: "ok",
            error: None,
            nodes: net.node_count(),
            steps: out.stats.steps,
            samples: out.series.len(),
            newton_iterations: out.stats.newton_iterations,
            max_newton_iterations: out.stats.max_newton_iterations,
            presettle_iterations: out.stats.presettle_iterations,
            residuals: None,
        },
        Err(e) => SimSummary {
            status: "failed",
            error: Some(e.to_string()),
            nodes: net.node_count(),
            steps: 0,
            samples: 0,
            newton_iterations: 0,
            max_newton_iterations: 0,
            presettle_iterations: 0,
            residuals: match e {
                dersim::DerError::NewtonDivergence { residuals, .. } => Some(residuals.clone()),
                _ => None,
            },
        },
    };
    if let Some(p) = &args.summary {
        files::write_json(p, &summary)?;
    }
    let out = result.map_err(PipelineError::from)?;
    out.series.write_csv(&args.output)?;
    eprintln!("{} steps, {} samples of {} nodes", out.stats.steps, out.series.len(), out.series.nodes.len());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let spec = SweepSpec::load(&args.spec)?;
    let res = bench::run_sweep(&spec).map_err(PipelineError::from)?;
    files::write_json(&args.output, &res)?;
    let csv_path = match (&args.csv, &args.emit_gnuplot) {
        (Some(c), _) => Some(c.clone()),
        (None, Some(_)) => Some(args.output.with_extension("csv")),
        (None, None) => None,
    };
    if let Some(c) = &csv_path {
        files::write_bytes(c, res.to_csv().as_bytes())?;
    }
    if let (Some(gp), Some(c)) = (&args.emit_gnuplot, &csv_path) {
        let name = c.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files::write_bytes(gp, res.gnuplot_script(&name).as_bytes())?;
    }
    eprintln!(
        "{} points, r = {}, monotone decreasing: {}",
        res.points.len(),
        res.pearson_r.map(|r| format!("{r:.4}")).unwrap_or_else(|| "undefined".into()),
        res.monotone_decreasing
    );
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let report = validate::run(&ValidateOptions {
        only: args.only.clone(),
        fault: args.inject_fault,
    })
    .map_err(input)?;
    if args.json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.table());
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::ValidationFailed(report.criteria.iter().filter(|c| !c.passed).count()))
    }
}

fn cmd_gen(args: &GenArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let plant = plant_registry()
        .build_named(&args.plant)
        .map_err(PipelineError::from)?
        .generate();
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|source| FileError::Io {
        path: dir.clone(),
        source,
    })?;
    write_ply(&dir.join("cloud.ply"), &plant.volume_cloud(cfg.skeleton.resolution_m / 2.0))?;
    plant.ground_truth().save(&dir.join("skeleton_gt.json"))?;
    files::write_json(
        &dir.join("ground_truth.json"),
        &serde_json::json!({
            "plant": plant.name,
            "main_stem_segments": plant.main_stem,
            "flower_node": plant.flower_node(),
        }),
    )?;
    let views_dir = dir.join("views");
    std::fs::create_dir_all(&views_dir).map_err(|source| FileError::Io {
        path: views_dir.clone(),
        source,
    })?;
    for (i, view) in plant.ring_views(args.views, 0.5, args.width, args.height).iter().enumerate() {
        save_view(&views_dir, &format!("view{i}"), view)?;
    }
    let (network, sim) = pipeline::plant_demo(&plant, cfg)?;
    files::write_json(&dir.join("network.json"), &network)?;
    files::write_json(&dir.join("sim.json"), &sim)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Fuse(a) => cmd_fuse(a, &cfg),
        Command::Skeletonize(a) => cmd_skeletonize(a, &cfg),
        Command::PlanGrasp(a) => cmd_plan(a, &cfg),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::PrintConfig => {
            print!("{}", cfg.to_json());
            Ok(())
        }
        Command::GenSynthetic(a) => cmd_gen(a, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn long_version_names_the_config_schema() {
        assert!(LONG_VERSION.contains(&format!("config schema: {}", pollisim::config::SCHEMA_VERSION)));
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
