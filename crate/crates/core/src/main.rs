use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coco::bounds::{evaluate_theorem, run_verification, BoundArgs, Theorem, VerifyConfig};
use coco::data::{load_dataset, save_dataset, DataFormat};
use coco::error::{Error, ErrorClass};
use coco::harness::reference::published;
use coco::harness::table::{write_reliability, METRIC_NAMES};
use coco::harness::{run_experiment, ExperimentConfig, ExperimentOutput};
use coco::simulator::{collect_dataset, write_traces};
use coco::RngSeed;

#[derive(Parser)]
#[command(name = "coco", version, about = "Calibrate and compose assumption monitors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate mountain-car episodes and write the monitor dataset.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `simulation.episodes`.
        #[arg(long)]
        episodes: Option<usize>,
        /// Overrides `simulation.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the cross-validation protocol on a dataset.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Dataset (CSV or JSON); defaults to `dataset` in the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a closed-form bound, or verify bounds empirically.
    Bounds(BoundsCommand),
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct BoundsCommand {
    #[command(subcommand)]
    verify: Option<BoundsSub>,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Subcommand)]
enum BoundsSub {
    /// Check bounds on synthetic probability spaces; prints a JSON report.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// safety | lemma | ece-product | ece-weighted | cce-product-pointwise |
    /// cce-product | ece-end-to-end | cce-end-to-end
    #[arg(long)]
    theorem: Option<String>,
    #[arg(long)]
    e1: Option<f64>,
    #[arg(long)]
    e2: Option<f64>,
    #[arg(long)]
    e3: Option<f64>,
    #[arg(long, conflicts_with_all = ["w1", "w2"])]
    var1: Option<f64>,
    #[arg(long)]
    var2: Option<f64>,
    #[arg(long)]
    w1: Option<f64>,
    #[arg(long)]
    w2: Option<f64>,
    /// Confidence level for `lemma` and `cce-product-pointwise`.
    #[arg(long)]
    x: Option<f64>,
}

/// `println!` that ignores a closed stdout (for example when piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// An error together with the exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Other => 1,
        };
        Failure { code, error }
    }
}

fn config_error(e: Error) -> Failure {
    Failure { code: 2, error: e }
}

fn data_error(e: Error) -> Failure {
    Failure { code: 3, error: e }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            episodes,
            seed,
        } => simulate(&config, &out, episodes, seed),
        Command::Run { config, data, out } => run(&config, data.as_deref(), &out),
        Command::Bounds(b) => bounds(b),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: 1,
        error: e.into(),
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let f = fs::File::create(path).map_err(Error::from)?;
    serde_json::to_writer_pretty(BufWriter::new(f), value).map_err(Error::from)?;
    Ok(())
}

fn simulate(config: &Path, out: &Path, episodes: Option<usize>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config).map_err(config_error)?;
    let mut sim = cfg.simulation.clone();
    if let Some(n) = episodes {
        sim.episodes = n;
    }
    if let Some(s) = seed {
        sim.seed = s;
    }
    sim.validate().map_err(config_error)?;
    let base = base_dir(config);
    let sim = coco::simulator::SimulationConfig {
        controller: sim.controller.relative_to(&base),
        ..sim
    };
    create_dir(out)?;
    let region = sim.assumption_region(&base).map_err(config_error)?;
    region.save(&out.join("region.json"))?;
    let (dataset, traces) = collect_dataset(sim.episodes, &sim, RngSeed::new(sim.seed), &region)?;
    save_dataset(&dataset, &out.join("dataset.csv"), DataFormat::Csv)?;
    let f = fs::File::create(out.join("traces.jsonl")).map_err(Error::from)?;
    write_traces(&traces, BufWriter::new(f))?;
    let summary = coco::harness::summarize(&dataset, &cfg.formula).map_err(config_error)?;
    let clipped: usize = traces.iter().map(|t| t.header.clipped_actions).sum();
    let report = serde_json::json!({
        "episodes": sim.episodes,
        "seed": sim.seed,
        "samples": dataset.len(),
        "region_volume_fraction": region.volume_fraction(),
        "assumption_region": "grid surrogate built from noise-free corner simulations",
        "clipped_actions": clipped,
        "summary": summary,
    });
    write_json(&out.join("simulation.json"), &report)?;
    say!(
        "{} episodes, {} samples; safe fraction {:.3}; P(safe | formula violated) = {}",
        sim.episodes,
        dataset.len(),
        summary.safe_fraction,
        summary
            .safe_given_violation
            .map_or("n/a".to_string(), |p| format!("{p:.3}"))
    );
    say!("wrote {}", out.display());
    Ok(())
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for ch in s.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

fn run(config: &Path, data: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config).map_err(config_error)?;
    let data_path = match (data, &cfg.dataset) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => base_dir(config).join(p),
        (None, None) => {
            return Err(config_error(Error::Config(
                "no dataset given (use --data or set `dataset` in the config)".into(),
            )))
        }
    };
    let format = DataFormat::from_path(&data_path).map_err(data_error)?;
    let dataset = load_dataset(&data_path, format).map_err(data_error)?;
    let output = run_experiment(&cfg, &dataset)?;
    write_results(&output, out)?;

    let mut md = Vec::new();
    output.table.write_markdown(&mut md)?;
    say!("{}", String::from_utf8_lossy(&md));
    if let Some(p) = output.summary.safe_given_violation {
        say!("P(safe | formula violated) = {p:.3}");
    }
    for (i, s) in output.table.skipped.iter().enumerate().take(5) {
        eprintln!("warning: skipped repetition {} ({}/{}): {}", s.index, i + 1, output.table.skipped.len(), s.reason);
    }
    say!("wrote {}", out.display());
    Ok(())
}

fn write_results(output: &ExperimentOutput, out: &Path) -> Result<(), Failure> {
    create_dir(out)?;
    let create = |p: PathBuf| fs::File::create(p).map(BufWriter::new).map_err(Error::from);
    output.table.write_csv(create(out.join("results.csv"))?)?;
    output.table.write_json(create(out.join("results.json"))?)?;
    output.table.write_markdown(create(out.join("results.md"))?)?;
    write_json(&out.join("summary.json"), &output.summary)?;

    let cal: Vec<serde_json::Value> = output
        .calibration
        .iter()
        .map(|(lambda, ps)| serde_json::json!({ "lambda": lambda, "monitors": ps }))
        .collect();
    write_json(&out.join("calibration.json"), &cal)?;

    let rel = out.join("reliability");
    create_dir(&rel)?;
    for (key, bins) in &output.reliability {
        let name = format!("lambda-{}_{}_{}.csv", key.lambda, slug(&key.name), key.target);
        write_reliability(bins, create(rel.join(name))?)?;
    }

    let mut text = String::from(
        "Published mountain-car reference values (different controller and assumption region; orientation only).\n\n\
         | lambda | Monitor | Target | Metric | This run | Published |\n|---|---|---|---|---|---|\n",
    );
    for r in &output.table.rows {
        if let Some(p) = published(r.lambda, &r.name, r.target) {
            for ((name, a), (pm, ps)) in METRIC_NAMES.iter().zip(r.metrics.columns()).zip(p.metrics) {
                text.push_str(&format!(
                    "| {} | {} | {} | {} | {:.3} ± {:.3} | {} ± {} |\n",
                    r.lambda, r.name, r.target, name, a.mean, a.std, pm, ps
                ));
            }
        }
    }
    fs::write(out.join("reference.md"), text).map_err(Error::from)?;
    Ok(())
}

fn bounds(b: BoundsCommand) -> Result<(), Failure> {
    match b.verify {
        Some(BoundsSub::Verify { config, out }) => {
            let cfg = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p)
                        .map_err(|e| config_error(Error::Config(format!("cannot read {}: {e}", p.display()))))?;
                    toml::from_str::<VerifyConfig>(&text).map_err(|e| config_error(Error::Config(e.to_string())))?
                }
                None => VerifyConfig::default(),
            };
            let report = run_verification(&cfg)?;
            let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
            if let Some(p) = out {
                fs::write(p, &json).map_err(Error::from)?;
            }
            say!("{json}");
            Ok(())
        }
        None => {
            let a = b.eval;
            let name = a
                .theorem
                .ok_or_else(|| config_error(Error::Config("missing --theorem".into())))?;
            let theorem: Theorem = name.parse().map_err(config_error)?;
            let e1 = a
                .e1
                .ok_or_else(|| config_error(Error::InvalidArgument("missing argument --e1".into())))?;
            let args = BoundArgs {
                e1,
                e2: a.e2,
                e3: a.e3,
                var1: a.var1,
                var2: a.var2,
                w1: a.w1,
                w2: a.w2,
                x: a.x,
            };
            let v = evaluate_theorem(theorem, &args).map_err(config_error)?;
            say!("{}", serde_json::to_string(&v).map_err(Error::from)?);
            Ok(())
        }
    }
}
