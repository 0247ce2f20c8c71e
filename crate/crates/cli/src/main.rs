mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use mapf_core::env::{
    corridor_map, generate_map, parse_instance, parse_map, parse_trajectory, sample_instance, serialize_instance, serialize_map,
    serialize_trajectory, Cell, InstanceFile, ProblemInstance,
};
use mapf_core::eval::{check_paths, oracle_solve, rollout, run_eval, EvalSpec, Policy};
use mapf_core::neural::{load_checkpoint, Network};
use mapf_core::rng;
use mapf_core::trainer::{MapKind, TrainConfig, TrainError, Trainer};

/// Decentralized multi-agent path finding: training, evaluation and tooling.
#[derive(Debug, Parser)]
#[command(name = "mapf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MapKindArg {
    Random,
    Corridor,
}

impl From<MapKindArg> for MapKind {
    fn from(k: MapKindArg) -> Self {
        match k {
            MapKindArg::Random => MapKind::Random,
            MapKindArg::Corridor => MapKind::Corridor,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// Greedy network with communication.
    Network,
    /// Greedy network with every communication edge removed.
    NoComm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Ascii,
    Png,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy; writes checkpoint.dhc and metrics.csv into the output directory.
    Train {
        /// Training configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoints and metrics.
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Single-threaded run whose output is fixed by the configured seed.
        #[arg(long)]
        deterministic: bool,
    },
    /// Evaluate a checkpoint on seeded cases; writes a CSV report and a JSON summary.
    Eval {
        /// Network or training checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Side length of the square maps.
        #[arg(long, default_value_t = 40)]
        map_size: usize,
        /// Agents per case.
        #[arg(long, default_value_t = 4)]
        agents: usize,
        /// Obstacle density of random maps.
        #[arg(long, default_value_t = 0.3)]
        density: f64,
        /// Number of cases.
        #[arg(long, default_value_t = 200)]
        cases: usize,
        /// Step limit per case.
        #[arg(long, default_value_t = 256)]
        max_steps: usize,
        /// Seed of the case set.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Map generator.
        #[arg(long, value_enum, default_value = "random")]
        map_kind: MapKindArg,
        /// Evaluated policy variant.
        #[arg(long, value_enum, default_value = "network")]
        policy: PolicyArg,
        /// CSV report path; the summary goes next to it with a .json extension.
        /// Without it the summary is printed.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve an instance with prioritized space-time A*.
    Solve {
        /// Instance file.
        #[arg(long)]
        instance: PathBuf,
        /// Makespan limit.
        #[arg(long, default_value_t = 256)]
        max_steps: usize,
        /// Seed of the priority shuffles.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trajectory output path; printed when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw every step of a trajectory, or of a greedy rollout of a checkpoint.
    Render {
        /// Instance file.
        #[arg(long)]
        instance: PathBuf,
        /// Trajectory file to draw.
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        trajectory: Option<PathBuf>,
        /// Checkpoint whose greedy rollout is drawn.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Step limit of the rollout.
        #[arg(long, default_value_t = 256)]
        max_steps: usize,
        /// Output format.
        #[arg(long, value_enum, default_value = "ascii")]
        format: Format,
        /// Output path; ASCII goes to stdout when omitted, PNG requires it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate map and instance files.
    Gen {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Side length of the square maps.
        #[arg(long, default_value_t = 10)]
        size: usize,
        /// Agents per instance.
        #[arg(long, default_value_t = 1)]
        agents: usize,
        /// Obstacle density of random maps.
        #[arg(long, default_value_t = 0.3)]
        density: f64,
        /// Number of map/instance pairs.
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Root seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Map generator.
        #[arg(long, value_enum, default_value = "random")]
        map_kind: MapKindArg,
        /// Open-wall fraction of corridor maps.
        #[arg(long, default_value_t = 0.3)]
        loop_rate: f64,
    },
}

/// Error with a specific process exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn train_error(e: TrainError) -> anyhow::Error {
    match e {
        TrainError::Config(m) => Exit(2, format!("invalid training configuration: {m}")).into(),
        TrainError::ArchitectureMismatch(m) => Exit(3, format!("architecture mismatch: {m}")).into(),
        other => other.into(),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_instance(path: &Path) -> anyhow::Result<ProblemInstance> {
    let file = parse_instance(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let map_path = Path::new(&file.map_path);
    let map_path = if map_path.is_absolute() {
        map_path.to_path_buf()
    } else {
        path.parent().unwrap_or(Path::new(".")).join(map_path)
    };
    let map = parse_map(&read(&map_path)?).with_context(|| format!("parsing {}", map_path.display()))?;
    Ok(ProblemInstance::new(map, file.starts, file.goals).with_context(|| format!("instance {}", path.display()))?)
}

fn load_network(path: &Path) -> anyhow::Result<Arc<Network<f32>>> {
    let (_, net) = load_checkpoint::<f32>(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(Arc::new(net))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn train(config: &Path, out: &Path, resume: Option<&Path>, deterministic: bool) -> anyhow::Result<()> {
    let cfg = TrainConfig::from_json(&read(config)?).map_err(train_error)?;
    let mut trainer = match resume {
        Some(ck) => Trainer::resume(ck, cfg, Some(out)).map_err(train_error)?,
        None => Trainer::new(cfg, Some(out)).map_err(train_error)?,
    };
    let stop = trainer.stop_handle();
    ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)).context("installing the interrupt handler")?;
    let outcome = if deterministic { trainer.run_deterministic() } else { trainer.run_threaded() }.map_err(train_error)?;
    println!(
        "stopped ({:?}) after {} learner steps, {} environment steps, {} episodes",
        outcome.stop_reason, outcome.learner_steps, outcome.env_steps, outcome.episodes
    );
    for s in outcome.curriculum.stages() {
        println!("stage {} agents / {}x{}: success {:.3} over {} episodes", s.agents, s.size, s.size, s.success_rate(), s.episodes);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    checkpoint: &Path,
    spec: EvalSpec,
    policy: PolicyArg,
    report: Option<&Path>,
) -> anyhow::Result<()> {
    let net = load_network(checkpoint)?;
    let policy = match policy {
        PolicyArg::Network => Policy::Network(net),
        PolicyArg::NoComm => Policy::NoComm(net),
    };
    let r = run_eval(&policy, &spec)?;
    match report {
        Some(path) => {
            write(path, r.to_csv())?;
            write(&path.with_extension("json"), r.summary_json() + "\n")?;
            println!("success rate {:.4}, average step {:.2}", r.success_rate, r.average_step);
        }
        None => println!("{}", r.summary_json()),
    }
    Ok(())
}

fn solve(instance: &Path, max_steps: usize, seed: u64, out: Option<&Path>) -> anyhow::Result<()> {
    let inst = load_instance(instance)?;
    let Some(sol) = oracle_solve(&inst, max_steps, &mut rng::stream(seed, "oracle")) else {
        bail!("no solution within {max_steps} steps");
    };
    let positions: Vec<Vec<Cell>> = (0..=sol.makespan).map(|t| sol.paths.iter().map(|p| p[t]).collect()).collect();
    let text = serialize_trajectory(&positions);
    match out {
        Some(path) => {
            write(path, text)?;
            println!("makespan {}, sum of costs {}", sol.makespan, sol.sum_of_costs);
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// Checks a trajectory against the instance; errors name the first bad step.
fn check_trajectory(inst: &ProblemInstance, positions: &[Vec<Cell>]) -> anyhow::Result<()> {
    let n = inst.num_agents();
    if positions[0].len() != n {
        bail!("trajectory has {} agents, instance has {n}", positions[0].len());
    }
    for (i, (&got, &want)) in positions[0].iter().zip(&inst.starts).enumerate() {
        if got != want {
            bail!("step 0: agent {i} at {got}, instance start is {want}");
        }
    }
    let paths: Vec<Vec<Cell>> = (0..n).map(|i| positions.iter().map(|p| p[i]).collect()).collect();
    check_paths(&inst.map, &paths).map_err(|c| anyhow::anyhow!("invalid trajectory: {c}"))
}

fn render_cmd(
    instance: &Path,
    trajectory: Option<&Path>,
    checkpoint: Option<&Path>,
    max_steps: usize,
    format: Format,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let inst = load_instance(instance)?;
    let positions = match (trajectory, checkpoint) {
        (Some(t), _) => parse_trajectory(&read(t)?).with_context(|| format!("parsing {}", t.display()))?,
        (None, Some(c)) => rollout(&Policy::Network(load_network(c)?), Arc::new(inst.clone()), max_steps).trajectory,
        (None, None) => bail!("one of --trajectory or --checkpoint is required"),
    };
    check_trajectory(&inst, &positions)?;
    match format {
        Format::Ascii => {
            let text = render::ascii(&inst, &positions);
            match out {
                Some(p) => write(p, text)?,
                None => print!("{text}"),
            }
        }
        Format::Png => {
            let Some(p) = out else { bail!("--out is required for PNG output") };
            write(p, render::png(&inst, &positions)?)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gen(out: &Path, size: usize, agents: usize, density: f64, count: usize, seed: u64, kind: MapKind, loop_rate: f64) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    for i in 0..count {
        let mut r = rng::indexed_stream(seed, "gen", i as u64);
        let inst = loop {
            let map = match kind {
                MapKind::Random => generate_map(size, size, density, &mut r)?,
                MapKind::Corridor => corridor_map(size, size, loop_rate, &mut r)?,
            };
            if let Ok(inst) = sample_instance(&map, agents, &mut r) {
                break inst;
            }
        };
        let map_name = format!("map_{i:04}.map");
        write(&out.join(&map_name), serialize_map(&inst.map))?;
        let file = InstanceFile { map_path: map_name, starts: inst.starts, goals: inst.goals };
        write(&out.join(format!("instance_{i:04}.txt")), serialize_instance(&file))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, out, resume, deterministic } => train(&config, &out, resume.as_deref(), deterministic),
        Command::Eval { checkpoint, map_size, agents, density, cases, max_steps, seed, map_kind, policy, report } => {
            let spec = EvalSpec {
                map_kind: map_kind.into(),
                map_size,
                num_agents: agents,
                density,
                num_cases: cases,
                max_steps,
                seed,
                ..EvalSpec::default()
            };
            eval(&checkpoint, spec, policy, report.as_deref())
        }
        Command::Solve { instance, max_steps, seed, out } => solve(&instance, max_steps, seed, out.as_deref()),
        Command::Render { instance, trajectory, checkpoint, max_steps, format, out } => {
            render_cmd(&instance, trajectory.as_deref(), checkpoint.as_deref(), max_steps, format, out.as_deref())
        }
        Command::Gen { out, size, agents, density, count, seed, map_kind, loop_rate } => {
            gen(&out, size, agents, density, count, seed, map_kind.into(), loop_rate)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Exit>() {
                Some(Exit(code, _)) => ExitCode::from(*code),
                None => ExitCode::FAILURE,
            }
        }
    }
}
