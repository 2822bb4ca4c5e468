use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gplfd::admittance::{simulate, ForceModel, UncertaintyProfile};
use gplfd::alignment::{align_demonstrations, resample, unit_grid, Trajectory};
use gplfd::io::config::ForceKind;
use gplfd::io::manifest::MANIFEST_FORMAT;
use gplfd::io::{self, tables, DemoHeader, FileDigest, RunConfig, RunManifest};
use gplfd::policy::{learn_policy, learn_policy_from_aligned, streaming_evaluation, TaskPolicy, ViaPoint, ViaPointAdapter, DIMS};

#[derive(Parser)]
#[command(name = "gplfd", version, about = "Learn, adapt and execute SE(3) task policies from demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration field, e.g. `--set policy.grid_size=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Random seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the run manifest (default: next to the output).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic door-opening demonstrations, a held-out ground
    /// truth and via-points taken from it.
    GenData {
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Time-align demonstrations onto a common normalized clock.
    Align {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Learn a policy from demonstrations (aligned or raw).
    Fit {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a policy on an evenly spaced task-time grid.
    Query {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// First task time; values outside [0, 1] are extrapolated.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        to: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Condition a policy on via-points read from a normalized-time file.
    Adapt {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        via: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the uncertainty-modulated admittance controller.
    Simulate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth trajectory for the spring-to-truth environment.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Streaming via-point experiment: static vs adaptive prediction error.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-time static and adaptive predictions.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Rerun the command recorded in a manifest and verify its outputs.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Default)]
struct Files {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match dispatch(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli, argv: &[String]) -> Result<()> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest);
    }
    let common = common(&cli.command).clone();
    let config = resolve_config(&common)?;
    let files = run(&cli.command, &config)?;
    let manifest = build_manifest(&cli.command, argv, &config, &files)?;
    let path = common.manifest.clone().or(files.manifest).expect("every command names a manifest");
    manifest.write(&path)?;
    Ok(())
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::GenData { common, .. }
        | Command::Align { common, .. }
        | Command::Fit { common, .. }
        | Command::Query { common, .. }
        | Command::Adapt { common, .. }
        | Command::Simulate { common, .. }
        | Command::Eval { common, .. } => common,
        Command::Replay { .. } => unreachable!("replay has no run options"),
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::GenData { .. } => "gen-data",
        Command::Align { .. } => "align",
        Command::Fit { .. } => "fit",
        Command::Query { .. } => "query",
        Command::Adapt { .. } => "adapt",
        Command::Simulate { .. } => "simulate",
        Command::Eval { .. } => "eval",
        Command::Replay { .. } => "replay",
    }
}

fn resolve_config(common: &Common) -> Result<RunConfig> {
    let base = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    let mut config = base.with_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn build_manifest(cmd: &Command, argv: &[String], config: &RunConfig, files: &Files) -> Result<RunManifest> {
    Ok(RunManifest {
        format: MANIFEST_FORMAT.into(),
        command: name(cmd).into(),
        args: argv.to_vec(),
        seed: config.seed,
        config: config.to_toml(),
        config_sha256: config.hash(),
        version: env!("CARGO_PKG_VERSION").into(),
        inputs: files.inputs.iter().map(|p| FileDigest::of(p)).collect::<gplfd::Result<_>>()?,
        outputs: files.outputs.iter().map(|p| FileDigest::of(p)).collect::<gplfd::Result<_>>()?,
    })
}

fn replay(path: &Path) -> Result<()> {
    let m = RunManifest::read(path)?;
    if m.version != env!("CARGO_PKG_VERSION") {
        log::warn!("manifest was written by version {}, this is {}", m.version, env!("CARGO_PKG_VERSION"));
    }
    for input in &m.inputs {
        let now = io::sha256_file(&input.path)?;
        if now != input.sha256 {
            bail!("input {} changed since the recorded run", input.path.display());
        }
    }
    let config = RunConfig::from_toml(&m.config)?;
    if config.hash() != m.config_sha256 {
        bail!("recorded configuration does not match its hash");
    }
    let cli = Cli::try_parse_from(std::iter::once("gplfd".to_string()).chain(m.args.iter().cloned()))
        .context("recorded arguments no longer parse")?;
    if matches!(cli.command, Command::Replay { .. }) {
        bail!("a replay cannot be replayed");
    }
    run(&cli.command, &config)?;
    let bad = m.mismatched_outputs()?;
    if !bad.is_empty() {
        let list: Vec<String> = bad.iter().map(|p| p.display().to_string()).collect();
        bail!("outputs differ from the recorded run: {}", list.join(", "));
    }
    println!("reproduced {} output file(s) of '{}'", m.outputs.len(), m.command);
    Ok(())
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Truth trajectory on the normalized task clock, sampled on `grid`.
fn truth_on_grid(truth: &Trajectory, grid: &[f64]) -> Result<Trajectory> {
    Ok(resample(&truth.normalized(), grid)?)
}

fn run(cmd: &Command, config: &RunConfig) -> Result<Files> {
    let mut files = Files::default();
    match cmd {
        Command::GenData { out_dir, .. } => {
            create_dir(out_dir)?;
            let demos = io::generate_synthetic_door_set(config.seed, &config.data.door)?;
            for (i, d) in demos.iter().enumerate() {
                let p = out_dir.join(format!("demo_{i:02}.csv"));
                io::write_demo(&p, d, &DemoHeader::default())?;
                files.outputs.push(p);
            }
            let truth = io::door_ground_truth(config.seed, config.data.truth_radius, &config.data.door)?;
            let p = out_dir.join("truth.csv");
            io::write_demo(&p, &truth, &DemoHeader::default())?;
            files.outputs.push(p);
            if config.data.via_times.len() >= 2 {
                let via = resample(&truth.normalized(), &config.data.via_times)?;
                let p = out_dir.join("via.csv");
                io::write_demo(&p, &via, &DemoHeader::aligned())?;
                files.outputs.push(p);
            }
            files.manifest = Some(out_dir.join("gen-data.manifest.json"));
        }
        Command::Align { inputs, out_dir, .. } => {
            let (header, demos) = io::load_demonstrations(inputs)?;
            let aligned = align_demonstrations(&demos, &config.weights()?, &learn(config)?.align)?;
            for s in &aligned.skipped {
                eprintln!("warning: skipped {}: {}", inputs[s.index].display(), s.reason);
            }
            create_dir(out_dir)?;
            let out_header = DemoHeader { aligned: true, ..header };
            for (traj, &src) in aligned.trajectories.iter().zip(&aligned.source_indices) {
                let stem = inputs[src].file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("demo_{src}"));
                let p = out_dir.join(format!("{stem}.aligned.csv"));
                io::write_demo(&p, traj, &out_header)?;
                files.outputs.push(p);
            }
            files.inputs = inputs.clone();
            files.manifest = Some(out_dir.join("align.manifest.json"));
        }
        Command::Fit { inputs, out, .. } => {
            let (header, demos) = io::load_demonstrations(inputs)?;
            let cfg = learn(config)?;
            let policy = if header.aligned { learn_policy_from_aligned(&demos, &cfg)? } else { learn_policy(&demos, &cfg)? };
            io::save_policy(out, &policy)?;
            files.inputs = inputs.clone();
            files.outputs.push(out.clone());
            files.manifest = Some(sibling_manifest(out));
        }
        Command::Query { policy, out, from, to, .. } => {
            if !(from < to) {
                bail!("--from must be smaller than --to");
            }
            let p = io::load_policy(policy)?;
            let t: Vec<f64> = unit_grid(config.policy.query_points).iter().map(|s| from + s * (to - from)).collect();
            io::write_text(out, &tables::prediction_table(&p.query(&t), "query"))?;
            files.inputs.push(policy.clone());
            files.outputs.push(out.clone());
            files.manifest = Some(sibling_manifest(out));
        }
        Command::Adapt { policy, via, out, .. } => {
            let p = io::load_policy(policy)?;
            let file = io::read_demo(via)?;
            if !file.header.aligned {
                bail!("{}: via-points must be on the normalized task clock ('# aligned: true')", via.display());
            }
            let strength = config.via.strengths();
            let points = file
                .trajectory
                .stamps()
                .iter()
                .zip(file.trajectory.poses())
                .map(|(&t, &pose)| ViaPoint::new(t, pose, strength))
                .collect::<gplfd::Result<Vec<_>>>()?;
            let t = unit_grid(config.policy.query_points);
            let adapted = ViaPointAdapter::new(&p, &t).adapt(&points)?;
            io::write_text(out, &tables::prediction_table(&adapted, "adapt"))?;
            files.inputs.extend([policy.clone(), via.clone()]);
            files.outputs.push(out.clone());
            files.manifest = Some(sibling_manifest(out));
        }
        Command::Simulate { policy, out, truth, .. } => {
            let p = io::load_policy(policy)?;
            let sim = &config.simulation;
            let samples = ((sim.horizon / sim.dt).round() as usize + 1).clamp(2, 2001);
            let profile = UncertaintyProfile::from_policy(&p, sim.horizon, samples, sim.sigma_mode)?;
            let env = force_model(config, &p, truth.as_deref(), samples)?;
            let trace = simulate(&profile, &env, &config.axis_params(), sim)?;
            io::write_text(out, &tables::trace_table(&trace))?;
            files.inputs.push(policy.clone());
            files.inputs.extend(truth.clone());
            files.outputs.push(out.clone());
            files.manifest = Some(sibling_manifest(out));
        }
        Command::Eval { policy, truth, out, predictions, .. } => {
            let p = io::load_policy(policy)?;
            let truth_traj = io::read_demo(truth)?.trajectory;
            let on_grid = truth_on_grid(&truth_traj, p.grid())?;
            let report = streaming_evaluation(&p, &on_grid, config.via.strengths())?;
            let table = tables::mse_table(&report);
            io::write_text(out, &table)?;
            print!("{table}");
            files.inputs.extend([policy.clone(), truth.clone()]);
            files.outputs.push(out.clone());
            if let Some(pred) = predictions {
                io::write_text(pred, &tables::streaming_table(&report))?;
                files.outputs.push(pred.clone());
            }
            files.manifest = Some(sibling_manifest(out));
        }
        Command::Replay { .. } => unreachable!("handled before dispatch"),
    }
    Ok(files)
}

fn learn(config: &RunConfig) -> Result<gplfd::policy::LearnConfig> {
    Ok(config.learn_config()?)
}

fn force_model(config: &RunConfig, policy: &TaskPolicy, truth: Option<&Path>, samples: usize) -> Result<ForceModel> {
    let env = &config.environment;
    Ok(match env.force {
        ForceKind::Zero => ForceModel::Zero,
        ForceKind::Constant => ForceModel::Constant(env.constant_force),
        ForceKind::SpringToTruth => {
            let Some(path) = truth else { bail!("the spring-to-truth environment needs --truth") };
            let task = unit_grid(samples);
            let truth = truth_on_grid(&io::read_demo(path)?.trajectory, &task)?;
            let mean = policy.query(&task);
            let offset = mean
                .iter()
                .zip(truth.poses())
                .map(|(m, p)| {
                    let f = p.to_array();
                    std::array::from_fn::<f64, DIMS, _>(|d| m.mean[d] - f[d])
                })
                .collect();
            let stamps = task.iter().map(|s| s * config.simulation.horizon).collect();
            ForceModel::SpringToTruth { gain: env.spring_gain, stamps, offset }
        }
    })
}
