//! Command-line entry point: dataset generation, training, evaluation,
//! threshold sweeps and a quick RIR sanity check. Every run validates its
//! configuration fully before touching the filesystem and writes a resolved
//! config snapshot beside its outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use doamask::corpus::Corpus;
use doamask::error::Error;
use doamask::features::record::write_feature_maps;
use doamask::nn::load_model;
use doamask::pipeline::{run_benchmark, train, train_resume, TrainConfig};
use doamask::room::{sample_scenario, schroeder_t60, ScenarioConfig};
use doamask::signal::{save_audio, TimeSignal, SAMPLE_RATE};

#[derive(Parser)]
#[command(name = "doamask", about = "Signal-informed DOA estimation toolkit")]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Results are independent of this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Shrink workloads to laptop scale.
    #[arg(long, global = true)]
    desk_scale: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a cached feature-map dataset.
    GenData(GenDataArgs),
    /// Train the classifier.
    Train(TrainArgs),
    /// Evaluate a trained model over J-interferer trials.
    Eval(EvalArgs),
    /// Sweep the masking percentile grid.
    Sweep(SweepArgs),
    /// Simulate one RIR and report its Schroeder T60 estimate.
    RirCheck(RirCheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    white_noise_fraction: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    samples_per_epoch: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    white_noise_fraction: Option<f64>,
    /// Training-time dropout override (the architecture default is 0.5).
    #[arg(long)]
    dropout: Option<f64>,
    /// Continue from the newest checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    j_set: Option<Vec<usize>>,
    #[arg(long)]
    trials_per_j: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    percentiles: Option<Vec<f64>>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    j_set: Option<Vec<usize>>,
    #[arg(long)]
    trials_per_j: Option<usize>,
}

#[derive(Args)]
struct RirCheckArgs {
    #[arg(long)]
    t60: Option<f64>,
}

// --- file config ------------------------------------------------------------

#[derive(Debug, Default, Clone, Deserialize)]
struct FileConfig {
    seed: Option<u64>,
    gen_data: Option<GenDataSection>,
    train: Option<TrainSection>,
    eval: Option<EvalSection>,
    sweep: Option<SweepSection>,
    rir_check: Option<RirCheckSection>,
}

#[derive(Debug, Default, Clone, Deserialize)]
struct GenDataSection {
    count: Option<usize>,
    corpus_dir: Option<PathBuf>,
    white_noise_fraction: Option<f64>,
    t60_min: Option<f64>,
    t60_max: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
struct TrainSection {
    corpus_dir: Option<PathBuf>,
    epochs: Option<usize>,
    samples_per_epoch: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    white_noise_fraction: Option<f64>,
    dropout: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
struct EvalSection {
    model: Option<PathBuf>,
    corpus_dir: Option<PathBuf>,
    j_set: Option<Vec<usize>>,
    trials_per_j: Option<usize>,
    percentiles: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
struct SweepSection {
    model: Option<PathBuf>,
    corpus_dir: Option<PathBuf>,
    j_set: Option<Vec<usize>>,
    trials_per_j: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
struct RirCheckSection {
    t60: Option<f64>,
}

// --- error/exit handling ----------------------------------------------------

enum CliError {
    /// Bad configuration or missing inputs: exit code 2.
    Config(String),
    /// Failure during execution: exit code 3.
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::FileNotFound(_)
            | Error::EmptyCorpus(_)
            | Error::CorpusTooSmall { .. }
            | Error::BadModelConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("bad config file: {e}")))
        }
    }
}

fn out_dir_required(cli_out: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    cli_out
        .clone()
        .ok_or_else(|| CliError::Config("--out is required for this command".into()))
}

fn write_snapshot<T: Serialize>(dir: &Path, resolved: &T) -> Result<(), CliError> {
    let text = toml::to_string_pretty(resolved)
        .map_err(|e| CliError::Runtime(format!("snapshot serialization: {e}")))?;
    std::fs::write(dir.join("resolved_config.toml"), text)?;
    Ok(())
}

fn load_corpus(dir: &Option<PathBuf>, required: bool) -> Result<Option<Corpus>, CliError> {
    match dir {
        Some(d) => {
            if !d.is_dir() {
                return Err(CliError::Config(format!(
                    "corpus directory not found: {}",
                    d.display()
                )));
            }
            Ok(Some(Corpus::load(d)?))
        }
        None if required => Err(CliError::Config("a corpus directory is required".into())),
        None => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    let file = load_file_config(cli.config.as_ref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match &cli.cmd {
        Cmd::GenData(args) => cmd_gen_data(&cli, &file, args, seed),
        Cmd::Train(args) => cmd_train(&cli, &file, args, seed),
        Cmd::Eval(args) => cmd_eval(&cli, &file, args, seed),
        Cmd::Sweep(args) => cmd_sweep(&cli, &file, args, seed),
        Cmd::RirCheck(args) => cmd_rir_check(&cli, &file, args, seed),
    }
}

// --- gen-data ---------------------------------------------------------------

#[derive(Debug, Serialize)]
struct GenDataResolved {
    seed: u64,
    count: usize,
    white_noise_fraction: f64,
    corpus_dir: Option<PathBuf>,
    scenario: ScenarioConfig,
}

fn cmd_gen_data(
    cli: &Cli,
    file: &FileConfig,
    args: &GenDataArgs,
    seed: u64,
) -> Result<(), CliError> {
    let sect = file.gen_data.as_ref().cloned_or_default();
    let mut scenario = ScenarioConfig::training();
    if let Some(t) = sect.t60_min {
        scenario.t60_min = t;
    }
    if let Some(t) = sect.t60_max {
        scenario.t60_max = t;
    }
    let resolved = GenDataResolved {
        seed,
        count: args.count.or(sect.count).unwrap_or(1000),
        white_noise_fraction: args
            .white_noise_fraction
            .or(sect.white_noise_fraction)
            .unwrap_or(0.5),
        corpus_dir: args.corpus.clone().or(sect.corpus_dir),
        scenario,
    };

    // full validation before side effects
    resolved.scenario.validate().map_err(CliError::from)?;
    if !(0.0..=1.0).contains(&resolved.white_noise_fraction) {
        return Err(CliError::Config("white_noise_fraction must be in [0, 1]".into()));
    }
    if resolved.count == 0 {
        return Err(CliError::Config("count must be >= 1".into()));
    }
    let corpus = load_corpus(&resolved.corpus_dir, resolved.white_noise_fraction < 1.0)?;
    let out = out_dir_required(&cli.out)?;

    std::fs::create_dir_all(&out)?;
    write_snapshot(&out, &resolved)?;
    let data = doamask::pipeline::gen_dataset(
        &resolved.scenario,
        corpus.as_ref(),
        resolved.white_noise_fraction,
        resolved.count,
        seed,
    )?;
    let maps: Vec<_> = data.iter().map(|(m, _)| m.clone()).collect();
    write_feature_maps(&out.join("maps.gccr"), &maps)?;
    let labels: String = data
        .iter()
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    std::fs::write(out.join("labels.txt"), labels)?;
    let manifest = serde_json::json!({
        "seed": seed,
        "count": resolved.count,
        "white_noise_fraction": resolved.white_noise_fraction,
        "scenario": resolved.scenario,
        "files": ["maps.gccr", "labels.txt"],
    });
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    println!("wrote {} feature maps to {}", resolved.count, out.display());
    Ok(())
}

trait CloneOrDefault<T> {
    fn cloned_or_default(self) -> T;
}

impl<T: Clone + Default> CloneOrDefault<T> for Option<&T> {
    fn cloned_or_default(self) -> T {
        self.cloned().unwrap_or_default()
    }
}

// --- train ------------------------------------------------------------------

fn cmd_train(cli: &Cli, file: &FileConfig, args: &TrainArgs, seed: u64) -> Result<(), CliError> {
    let sect = file.train.as_ref().cloned_or_default();
    // --desk-scale switches the hyperparameter defaults to the desk preset;
    // explicit flags still win.
    let defaults = if cli.desk_scale {
        TrainConfig::desk(seed, None)
    } else {
        TrainConfig::default()
    };
    let cfg = TrainConfig {
        samples_per_epoch: args
            .samples_per_epoch
            .or(sect.samples_per_epoch)
            .unwrap_or(defaults.samples_per_epoch),
        epochs: args.epochs.or(sect.epochs).unwrap_or(defaults.epochs),
        batch_size: args
            .batch_size
            .or(sect.batch_size)
            .unwrap_or(defaults.batch_size),
        lr: args.lr.or(sect.lr).unwrap_or(defaults.lr),
        seed,
        corpus_dir: args.corpus.clone().or(sect.corpus_dir),
        white_noise_fraction: args
            .white_noise_fraction
            .or(sect.white_noise_fraction)
            .unwrap_or(defaults.white_noise_fraction),
        dropout_override: args
            .dropout
            .or(sect.dropout)
            .map(Some)
            .unwrap_or(defaults.dropout_override),
        desk_scale: cli.desk_scale,
    };
    cfg.validate().map_err(CliError::from)?;
    load_corpus(&cfg.corpus_dir, cfg.white_noise_fraction < 1.0)?;
    let out = out_dir_required(&cli.out)?;

    std::fs::create_dir_all(&out)?;
    write_snapshot(&out, &cfg)?;
    let (_, logs) = if args.resume {
        train_resume(&cfg, &out)?
    } else {
        train(&cfg, Some(&out))?
    };
    if let Some(last) = logs.last() {
        println!(
            "trained {} epochs ({} steps), final mean loss {:.4}",
            logs.len(),
            last.steps,
            last.mean_loss
        );
    } else {
        println!("epochs=0: wrote initialized model");
    }
    println!("model written to {}", out.join("model.doam").display());
    Ok(())
}

// --- eval / sweep -----------------------------------------------------------

#[derive(Debug, Serialize)]
struct EvalResolved {
    seed: u64,
    model: PathBuf,
    corpus_dir: PathBuf,
    j_set: Vec<usize>,
    trials_per_j: usize,
    percentiles: Vec<f64>,
}

fn resolve_eval(
    cli: &Cli,
    seed: u64,
    model: Option<PathBuf>,
    corpus_dir: Option<PathBuf>,
    j_set: Option<Vec<usize>>,
    trials_per_j: Option<usize>,
    percentiles: Vec<f64>,
) -> Result<EvalResolved, CliError> {
    let model =
        model.ok_or_else(|| CliError::Config("--model is required".into()))?;
    if !model.is_file() {
        return Err(CliError::Config(format!(
            "model file not found: {}",
            model.display()
        )));
    }
    let corpus_dir =
        corpus_dir.ok_or_else(|| CliError::Config("a corpus directory is required".into()))?;
    let resolved = EvalResolved {
        seed,
        model,
        corpus_dir,
        j_set: j_set.unwrap_or_else(|| vec![0, 1, 2, 4]),
        trials_per_j: trials_per_j.unwrap_or(if cli.desk_scale { 100 } else { 5000 }),
        percentiles,
    };
    for &j in &resolved.j_set {
        if j > 8 {
            return Err(CliError::Config(format!("unreasonable interferer count {j}")));
        }
    }
    if resolved.trials_per_j == 0 {
        return Err(CliError::Config("trials_per_j must be >= 1".into()));
    }
    for &x in &resolved.percentiles {
        if !(0.0..=100.0).contains(&x) {
            return Err(CliError::Config(format!("percentile {x} out of [0, 100]")));
        }
    }
    Ok(resolved)
}

fn run_eval_like(resolved: &EvalResolved, out: &Path) -> Result<(), CliError> {
    let corpus = Corpus::load(&resolved.corpus_dir)?;
    let model = load_model(&resolved.model)?;
    std::fs::create_dir_all(out)?;
    write_snapshot(out, resolved)?;
    let report = run_benchmark(
        &model,
        &resolved.j_set,
        resolved.trials_per_j,
        &resolved.percentiles,
        &corpus,
        resolved.seed,
    )?;
    std::fs::write(out.join("aggregates.tsv"), report.to_delimited())?;
    std::fs::write(out.join("trials.tsv"), report.rows_delimited())?;
    std::fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    std::fs::write(out.join("histogram.tsv"), histogram_table(&report))?;
    print!("{}", report.to_delimited());
    Ok(())
}

/// 5-degree-binned error histogram per (J, condition), for external plotting.
fn histogram_table(report: &doamask::pipeline::BenchmarkReport) -> String {
    let mut s = String::from("j\tcondition\tbin_lo_deg\tcount\n");
    for a in &report.aggregates {
        let mut bins = [0usize; 37];
        for r in &report.rows {
            if r.j == a.j && r.condition == a.condition {
                if let Some(e) = r.error_deg {
                    bins[((e / 5.0).floor() as usize).min(36)] += 1;
                }
            }
        }
        let cond = match a.condition {
            Some(x) => format!("P{x:.0}"),
            None => "-".to_string(),
        };
        for (b, &count) in bins.iter().enumerate() {
            if count > 0 {
                s.push_str(&format!("{}\t{}\t{}\t{}\n", a.j, cond, b * 5, count));
            }
        }
    }
    s
}

fn cmd_eval(cli: &Cli, file: &FileConfig, args: &EvalArgs, seed: u64) -> Result<(), CliError> {
    let sect = file.eval.as_ref().cloned_or_default();
    let resolved = resolve_eval(
        cli,
        seed,
        args.model.clone().or(sect.model),
        args.corpus.clone().or(sect.corpus_dir),
        args.j_set.clone().or(sect.j_set),
        args.trials_per_j.or(sect.trials_per_j),
        args.percentiles
            .clone()
            .or(sect.percentiles)
            .unwrap_or_else(|| vec![50.0]),
    )?;
    let out = out_dir_required(&cli.out)?;
    run_eval_like(&resolved, &out)
}

/// Masking-threshold grid of Fig.-5 style sweeps.
pub const SWEEP_GRID: [f64; 5] = [0.0, 33.0, 50.0, 66.0, 90.0];

fn cmd_sweep(cli: &Cli, file: &FileConfig, args: &SweepArgs, seed: u64) -> Result<(), CliError> {
    let sect = file.sweep.as_ref().cloned_or_default();
    let resolved = resolve_eval(
        cli,
        seed,
        args.model.clone().or(sect.model),
        args.corpus.clone().or(sect.corpus_dir),
        args.j_set.clone().or(sect.j_set).or(Some(vec![2])),
        args.trials_per_j.or(sect.trials_per_j),
        SWEEP_GRID.to_vec(),
    )?;
    let out = out_dir_required(&cli.out)?;
    run_eval_like(&resolved, &out)?;

    // median-error matrix: one row per percentile, one column per J
    let report_json = std::fs::read_to_string(out.join("report.json"))?;
    let report: serde_json::Value =
        serde_json::from_str(&report_json).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut s = String::from("x");
    for j in &resolved.j_set {
        s.push_str(&format!("\tJ{j}"));
    }
    s.push('\n');
    let aggregates = report["aggregates"].as_array().cloned().unwrap_or_default();
    let mut grid: Vec<(String, Option<f64>)> = vec![("unmasked".into(), None)];
    grid.extend(SWEEP_GRID.iter().map(|&x| (format!("{x:.0}"), Some(x))));
    for (label, cond) in grid {
        s.push_str(&label);
        for j in &resolved.j_set {
            let median = aggregates
                .iter()
                .find(|a| {
                    a["j"].as_u64() == Some(*j as u64)
                        && a["condition"].as_f64() == cond
                })
                .and_then(|a| a["median_error_deg"].as_f64())
                .unwrap_or(f64::NAN);
            s.push_str(&format!("\t{median:.3}"));
        }
        s.push('\n');
    }
    std::fs::write(out.join("sweep.tsv"), s)?;
    Ok(())
}

// --- rir-check --------------------------------------------------------------

fn cmd_rir_check(
    cli: &Cli,
    file: &FileConfig,
    args: &RirCheckArgs,
    seed: u64,
) -> Result<(), CliError> {
    let sect = file.rir_check.as_ref().cloned_or_default();
    let t60 = args.t60.or(sect.t60).unwrap_or(0.5);
    if !(0.05..=3.0).contains(&t60) {
        return Err(CliError::Config(format!("t60 {t60} out of supported range")));
    }
    let cfg = ScenarioConfig {
        t60_min: t60,
        t60_max: t60,
        ..ScenarioConfig::evaluation()
    };
    let mut rng = doamask::rng::rng(seed);
    let scn = sample_scenario(&cfg, 0, &mut rng)?;
    let rir = &scn.rirs[0][doamask::room::CENTER_MIC];
    let est = schroeder_t60(rir);
    println!(
        "room {:.2} x {:.2} x {:.2} m, target T60 {:.3} s, Schroeder estimate {:.3} s ({:+.1}%)",
        scn.room.dimensions[0],
        scn.room.dimensions[1],
        scn.room.dimensions[2],
        t60,
        est,
        (est / t60 - 1.0) * 100.0
    );
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out)?;
        let sig = TimeSignal::new(rir.taps.clone(), SAMPLE_RATE);
        save_audio(&out.join("rir.wav"), &sig)?;
        println!("RIR written to {}", out.join("rir.wav").display());
    }
    Ok(())
}
