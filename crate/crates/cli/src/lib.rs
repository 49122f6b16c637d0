//! `qcbm train | eval | bench`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use qcbm::distributions::{kl_divergence, sample_target_with_cap, to_resolution, tv_distance};
use qcbm::gradients::{bench_gradients, write_bench_csv, BenchSize};
use qcbm::trainer::{sweep, write_summary_csv};
use qcbm::{Circuit, ExperimentConfig, QcbmError, Simulator, TargetSpec};

#[derive(Parser, Debug)]
#[command(name = "qcbm", version, about = "Train and evaluate quantum circuit Born machines")]
pub struct Cli {
    /// Worker threads for seed sweeps [default: physical cores]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Largest register the simulator may allocate, overriding the config
    #[arg(long, global = true)]
    pub qubit_cap: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run every experiment of a config file over its seeds
    Train(TrainArgs),
    /// Score a saved circuit against a target
    Eval(EvalArgs),
    /// Compare adjoint and finite-difference gradient cost
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,

    /// Parent of the run directory [default: the config's output_dir]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Circuit and parameters as written by `train`
    #[arg(long)]
    pub circuit: PathBuf,

    /// Experiment config whose target is used
    #[arg(long, conflicts_with = "target", required_unless_present = "target")]
    pub config: Option<PathBuf>,

    /// TOML file holding just a target table
    #[arg(long)]
    pub target: Option<PathBuf>,

    /// Bits per register for TV [default: the circuit's register size]
    #[arg(long)]
    pub resolution: Option<usize>,

    /// Directory for metrics and histogram dumps
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// `QUBITS:LAYERS`, layers as `4`, `1-6` or `1,3,5`; repeatable
    #[arg(long = "sizes")]
    pub sizes: Vec<String>,

    #[arg(long, default_value_t = 3)]
    pub repeats: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Write bench.csv here instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Best parameters of a run next to the circuit they belong to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedCircuit {
    pub config_id: String,
    pub seed: u64,
    pub final_tv: f64,
    pub circuit: Circuit,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub config_file: String,
    pub started: String,
    pub finished: String,
    /// Paths relative to the run directory.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub resolution: usize,
    pub kl: f64,
    pub tv: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs.unwrap_or_else(num_cpus::get_physical);
    if jobs == 0 {
        bail!("--jobs must be >= 1");
    }
    match cli.command {
        Command::Train(args) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
            let dir = pool.install(|| cmd_train(&args.config, args.output.as_deref(), cli.qubit_cap))?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Eval(args) => {
            let report = cmd_eval(&args, cli.qubit_cap)?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
        Command::Bench(args) => cmd_bench(&args),
    }
}

pub fn load_config(path: &Path, qubit_cap: Option<usize>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if qubit_cap.is_some() {
        config.qubit_cap = qubit_cap;
        config.validate()?;
    }
    Ok(config)
}

/// A new directory under `parent`, never reusing an existing one.
fn fresh_dir(parent: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let base = format!("{stem}-{}", Utc::now().format("%Y%m%dT%H%M%S"));
    for i in 0.. {
        let name = if i == 0 { base.clone() } else { format!("{base}-{i}") };
        let dir = parent.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Runs every experiment of the config and returns the run directory.
pub fn cmd_train(config_path: &Path, output: Option<&Path>, qubit_cap: Option<usize>) -> Result<PathBuf> {
    let started = Utc::now();
    let config = load_config(config_path, qubit_cap)?;
    let experiments = config.experiments()?;
    let seeds = config.seeds.to_vec();
    let stem = config.name.clone().unwrap_or_else(|| "run".into());
    let dir = fresh_dir(output.unwrap_or(&config.output_dir), &stem)?;
    let mut files = vec!["config.toml".to_string()];
    fs::copy(config_path, dir.join("config.toml"))?;

    let mut summaries = Vec::with_capacity(experiments.len());
    for (id, experiment) in &experiments {
        let outcome = sweep(experiment, id, &seeds)?;
        let sub = dir.join(id);
        fs::create_dir(&sub)?;
        for run in &outcome.runs {
            let name = format!("{id}/seed-{}.jsonl", run.seed);
            let mut w = BufWriter::new(File::create(dir.join(&name))?);
            for entry in run.entries() {
                serde_json::to_writer(&mut w, entry)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            files.push(name);
        }
        let best = outcome.best_run();
        let hist = format!("{id}/histogram.json");
        write_json(&dir.join(&hist), &experiment.distribution(best)?)?;
        let saved = format!("{id}/best_circuit.json");
        write_json(
            &dir.join(&saved),
            &SavedCircuit {
                config_id: id.clone(),
                seed: best.seed,
                final_tv: best.final_tv,
                circuit: best.circuit.clone(),
                params: best.final_params.clone(),
            },
        )?;
        files.extend([hist, saved]);
        let s = &outcome.summary;
        eprintln!(
            "{id}: {} seeds, TV min {:.4} median {:.4} max {:.4}",
            s.n_seeds, s.min, s.median, s.max
        );
        summaries.push(outcome.summary);
    }
    write_summary_csv(&summaries, File::create(dir.join("summary.csv"))?)?;
    files.push("summary.csv".into());

    let manifest = RunManifest {
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_file: config_path.display().to_string(),
        started: started.to_rfc3339(),
        finished: Utc::now().to_rfc3339(),
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(dir)
}

fn load_target(args: &EvalArgs, qubit_cap: Option<usize>) -> Result<(TargetSpec, usize)> {
    if let Some(path) = &args.config {
        let config = load_config(path, qubit_cap)?;
        let cap = config.qubit_cap();
        return Ok((config.target, cap));
    }
    let path = args.target.as_ref().expect("clap requires --config or --target");
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec: TargetSpec = toml::from_str(&text).map_err(|e| QcbmError::Config {
        field: "target".into(),
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok((spec, qubit_cap.unwrap_or(qcbm::statevec::DEFAULT_QUBIT_CAP)))
}

/// KL at the circuit's own resolution and TV at `resolution` bits per
/// register. The target is sampled at the finer of the two and coarsened.
pub fn cmd_eval(args: &EvalArgs, qubit_cap: Option<usize>) -> Result<EvalReport> {
    let text = fs::read_to_string(&args.circuit).with_context(|| format!("reading {}", args.circuit.display()))?;
    let saved: SavedCircuit = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.circuit.display()))?;
    let (spec, cap) = load_target(args, qubit_cap)?;
    let circuit = &saved.circuit;
    let shape = circuit.register_shape();
    let bits = shape.iter().copied().max().unwrap_or(0);
    let m = args.resolution.unwrap_or(bits);
    if m == 0 {
        bail!("--resolution must be >= 1");
    }
    let q = Simulator::new(cap).distribution(circuit, &saved.params)?;
    let fine = sample_target_with_cap(&spec, &vec![m.max(bits); shape.len()], cap)?;
    let p_native = to_resolution(&fine, bits, cap)?;
    let p_m = to_resolution(&fine, m, cap)?;
    let q_m = to_resolution(&q, m, cap)?;
    let report = EvalReport {
        resolution: m,
        kl: kl_divergence(&p_native, &q)?,
        tv: tv_distance(&p_m, &q_m)?,
    };
    if let Some(dir) = &args.output {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("metrics.json"), &report)?;
        write_json(&dir.join("model_histogram.json"), &q_m)?;
        write_json(&dir.join("target_histogram.json"), &p_m)?;
    }
    Ok(report)
}

/// Parses `10:1-6`, `10:4` or `10:1,3,5`.
pub fn parse_sizes(specs: &[String]) -> Result<Vec<BenchSize>> {
    let mut sizes = Vec::new();
    for spec in specs {
        let (n, layers) = spec
            .split_once(':')
            .with_context(|| format!("size `{spec}` is not QUBITS:LAYERS"))?;
        let n_qubits: usize = n.trim().parse().with_context(|| format!("bad qubit count in `{spec}`"))?;
        let layers: Vec<usize> = if let Some((a, b)) = layers.split_once('-') {
            let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
            (a..=b).collect()
        } else {
            layers
                .split(',')
                .map(|l| l.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("bad layer list in `{spec}`"))?
        };
        if layers.is_empty() || layers.contains(&0) || n_qubits == 0 {
            bail!("size `{spec}` needs >= 1 qubit and layers >= 1");
        }
        sizes.extend(layers.into_iter().map(|layers| BenchSize { n_qubits, layers }));
    }
    if sizes.is_empty() {
        bail!("no benchmark sizes given (use --sizes QUBITS:LAYERS)");
    }
    Ok(sizes)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let sizes = parse_sizes(&args.sizes)?;
    let rows = bench_gradients(&sizes, args.repeats, args.seed)?;
    match &args.output {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_bench_csv(&rows, File::create(dir.join("bench.csv"))?)?;
        }
        None => write_bench_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}
