use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use passage_map::bim::{load_prior, upgrade_kinds_from_prior, validate_against_prior, PriorConfig};
use passage_map::config::{defaults_table, load_config};
use passage_map::entities::DoorState;
use passage_map::graph::{load_rooms, read_graph, write_graph, Pipeline, SceneGraph};
use passage_map::ingest::{format_sply, load_sequence};
use passage_map::passage::PassageKind;
use passage_map::synth::{generate, load_scene, load_truth, office, score, write_dataset};

#[derive(Parser)]
#[command(name = "passmap", version, about = "Passage-aware structural mapping from labeled RGB-D keyframes")]
#[command(after_help = defaults_table())]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scene graph from a keyframe dataset.
    #[command(after_help = defaults_table())]
    Run(RunArgs),
    /// Generate a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Score a scene graph against ground truth or a building prior.
    Eval(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Dataset directory containing manifest.json.
    #[arg(long)]
    dataset: PathBuf,
    /// Output scene graph document.
    #[arg(long)]
    out: PathBuf,
    /// Configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set passages.d_max=1.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Room seeds (rooms/1) used for connectivity.
    #[arg(long)]
    rooms: Option<PathBuf>,
    /// Building prior (bimprior/1); matched passages adopt planned kinds.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Also write the accumulated wall and door points as a labeled cloud.
    #[arg(long, value_name = "PATH.sply")]
    map_cloud: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (scene/1).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scene: Option<PathBuf>,
    /// Built-in scene instead of a file.
    #[arg(long, value_parser = ["office"])]
    preset: Option<String>,
    /// Output directory for the dataset, truth.json and rooms.json.
    #[arg(long)]
    out: PathBuf,
    /// Replace the scene's random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Scene graph document (sgraph/1).
    #[arg(long)]
    graph: PathBuf,
    /// Ground truth written by `synth` (truth/1).
    #[arg(long, conflicts_with = "prior", required_unless_present = "prior")]
    truth: Option<PathBuf>,
    /// Building prior (bimprior/1).
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Matching radius (m).
    #[arg(long, default_value_t = 0.5)]
    match_radius: f64,
    /// Misalignment tolerance for prior checks (m).
    #[arg(long, default_value_t = 0.15)]
    align_tol: f64,
    /// Exit with status 4 when recall falls below this.
    #[arg(long)]
    min_recall: Option<f64>,
}

enum Failure {
    Usage(String),
    Input(String),
    Processing(String),
    Gate(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Input(_) => 2,
            Self::Processing(_) => 3,
            Self::Gate(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Input(m) | Self::Processing(m) | Self::Gate(m) => m,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn processing<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Processing(e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Processing(format!("{}: {e}", path.display())))
}

fn summary(graph: &SceneGraph, warnings: usize) -> String {
    let doors = |s: DoorState| graph.doors.iter().filter(|d| d.state == s).count();
    let kinds = |k: PassageKind| graph.passages.iter().filter(|p| p.kind == k).count();
    format!(
        "keyframes: {}\nwalls: {}\ndoors: {} (closed {}, open {}, unknown {})\npassages: {} (doorway {}, archway {}, unknown {})\nedges: {}\nwarnings: {}\n",
        graph.trajectory.len(),
        graph.walls.len(),
        graph.doors.len(),
        doors(DoorState::Closed),
        doors(DoorState::Open),
        doors(DoorState::Unknown),
        graph.passages.len(),
        kinds(PassageKind::Doorway),
        kinds(PassageKind::Archway),
        kinds(PassageKind::Unknown),
        graph.edges.len(),
        warnings,
    )
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let config = load_config(args.config.as_deref(), &args.overrides).map_err(|e| Failure::Usage(e.to_string()))?;
    let rooms = match &args.rooms {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            load_rooms(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
        None => Vec::new(),
    };
    let prior = args.prior.as_deref().map(load_prior).transpose().map_err(input)?;
    let frames = load_sequence(&args.dataset).map_err(input)?;

    let (mut graph, warnings) = Pipeline::run(config, rooms, &frames).map_err(processing)?;
    for w in &warnings {
        warn!("{w}");
    }
    if let Some(planned) = &prior {
        let report = validate_against_prior(&graph.passages, planned, &graph.config.prior);
        graph.passages = upgrade_kinds_from_prior(&graph.passages, &report, planned);
    }
    graph.check_integrity().map_err(processing)?;
    write_graph(&args.out, &graph).map_err(processing)?;
    if let Some(path) = &args.map_cloud {
        write_file(path, &format_sply(&graph.map_cloud()))?;
    }
    print!("{}", summary(&graph, warnings.len()));
    println!("graph: {}", args.out.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let mut spec = match (&args.scene, &args.preset) {
        (Some(path), _) => load_scene(path).map_err(input)?,
        _ => office(),
    };
    if let Some(seed) = args.seed {
        spec.rng_seed = seed;
    }
    let (frames, truth) = generate(&spec).map_err(input)?;
    write_dataset(&args.out, &frames, &truth).map_err(processing)?;
    let points: usize = frames.iter().map(|f| f.cloud.len()).sum();
    println!("keyframes: {}", frames.len());
    println!("points: {points}");
    println!("passages: {}", truth.passages.len());
    println!("dataset: {}", args.out.display());
    Ok(())
}

fn ids(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

fn gate(recall: f64, min: Option<f64>) -> Result<(), Failure> {
    match min {
        Some(min) if recall < min => Err(Failure::Gate(format!("recall {recall:.6} below --min-recall {min}"))),
        _ => Ok(()),
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Failure> {
    if !(args.match_radius > 0.0) {
        return Err(Failure::Usage("--match-radius must be positive".into()));
    }
    let graph = read_graph(&args.graph).map_err(|e| Failure::Input(format!("{}: {e}", args.graph.display())))?;
    if let Some(path) = &args.truth {
        let truth = load_truth(path).map_err(input)?;
        let m = score(&graph.passages, &truth, args.match_radius);
        print!("{}", m.report());
        return gate(m.recall, args.min_recall);
    }
    let path = args.prior.as_ref().expect("clap requires truth or prior");
    let planned = load_prior(path).map_err(input)?;
    let cfg = PriorConfig {
        match_radius: args.match_radius,
        align_tol: args.align_tol,
    };
    cfg.validate().map_err(Failure::Usage)?;
    let r = validate_against_prior(&graph.passages, &planned, &cfg);
    let pairs = |v: &[passage_map::bim::MatchedPair]| {
        v.iter().map(|m| format!("{}:{}", m.detected, m.planned)).collect::<Vec<_>>().join(",")
    };
    let recall = if planned.is_empty() { 1.0 } else { r.matched.len() as f64 / planned.len() as f64 };
    println!("detected={}", graph.passages.len());
    println!("planned={}", planned.len());
    println!("matched={}", r.matched.len());
    println!("matched_pairs={}", pairs(&r.matched));
    println!("missing={}", ids(&r.missing));
    println!("spurious={}", ids(&r.spurious));
    println!("misaligned={}", pairs(&r.misaligned));
    println!("recall={recall:.6}");
    gate(recall, args.min_recall)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
