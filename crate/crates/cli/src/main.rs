use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metasrm::harness::output::{read_results, write_distances, write_gammas, write_results};
use metasrm::harness::presets::{preset, presets};
use metasrm::harness::summary::write_summary;
use metasrm::harness::{run_experiment, summarize, ConfigMap, ExperimentConfig, Metric, SummaryOptions};
use metasrm::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "metasrm", version, about = "Meta simple-regret bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a preset.
    Run(RunArgs),
    /// Aggregate a result file into per-task means and standard errors.
    Summarize(SummarizeArgs),
    /// Inspect shipped presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Parse and check a config file without running it.
    ValidateConfig(ConfigArgs),
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names and descriptions.
    List,
    /// Print the config text of a preset.
    Show { name: String },
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file (`key = value` per line).
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set m=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run a shipped preset instead of a config file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Only run this variant of the preset.
    #[arg(long, requires = "preset")]
    variant: Option<String>,
    /// Result file path (single-config runs).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory that relative output paths are placed in.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Also write a summary next to each result file.
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    input: PathBuf,
    /// Summary file; defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Column to summarize: expected, realized or cumulative.
    #[arg(long, default_value = "expected")]
    metric: String,
    /// Skip the pointwise-best rows for swept agents.
    #[arg(long)]
    no_best: bool,
}

/// An error together with the exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

fn config_err(error: Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error,
    }
}

fn runtime_err(error: Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error,
    }
}

fn apply_flags(map: &mut ConfigMap, args: &ConfigArgs) -> Result<(), Failure> {
    for o in &args.overrides {
        map.apply_override(o).map_err(config_err)?;
    }
    let flags = [
        ("seed", args.seed.map(|v| v.to_string())),
        ("replications", args.replications.map(|v| v.to_string())),
        ("workers", args.workers.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            map.set(key, &v).map_err(config_err)?;
        }
    }
    Ok(())
}

fn load_config(path: &Path, args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(Error::Config(format!("cannot read {}: {e}", path.display()))))?;
    from_text(&text, args)
}

fn from_text(text: &str, args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let mut map = ConfigMap::parse(text).map_err(config_err)?;
    apply_flags(&mut map, args)?;
    ExperimentConfig::from_map(&map).map_err(config_err)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime_err(e.into()))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| {
        runtime_err(Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })
}

fn finish(mut w: BufWriter<File>) -> Result<(), Failure> {
    w.flush().map_err(|e| runtime_err(e.into()))
}

/// Config problems found only at run time (a bad worker count, say) still
/// exit with the config code.
fn classify(error: Error) -> Failure {
    match error {
        Error::Config(_) | Error::Parse { .. } => config_err(error),
        other => runtime_err(other),
    }
}

fn run_one(config: &ExperimentConfig, output: PathBuf, with_summary: bool) -> Result<(), Failure> {
    let result = run_experiment(config).map_err(classify)?;
    let mut w = create(&output)?;
    write_results(result.ledger.rows(), &mut w).map_err(runtime_err)?;
    finish(w)?;
    eprintln!("wrote {} rows to {}", result.ledger.len(), output.display());
    if !result.gammas.is_empty() {
        let path = sibling(&output, "gamma");
        let mut w = create(&path)?;
        write_gammas(&result.gammas, &mut w).map_err(runtime_err)?;
        finish(w)?;
    }
    if !result.distances.is_empty() {
        let path = sibling(&output, "distance");
        let mut w = create(&path)?;
        write_distances(&result.distances, &mut w).map_err(runtime_err)?;
        finish(w)?;
    }
    if with_summary {
        let options = SummaryOptions {
            pointwise_best: true,
            ..Default::default()
        };
        let rows = summarize(result.ledger.rows(), options).map_err(runtime_err)?;
        let path = sibling(&output, "summary");
        let mut w = create(&path)?;
        write_summary(&rows, &mut w).map_err(runtime_err)?;
        finish(w)?;
    }
    Ok(())
}

fn resolve_output(
    config: &ExperimentConfig,
    explicit: Option<&PathBuf>,
    dir: Option<&PathBuf>,
) -> Result<PathBuf, Failure> {
    let path = explicit
        .cloned()
        .or_else(|| config.output.clone())
        .ok_or_else(|| config_err(Error::Config("no output path: set `output` or pass --output".into())))?;
    Ok(match dir {
        Some(d) if path.is_relative() => d.join(path),
        _ => path,
    })
}

fn run(args: RunArgs) -> Result<(), Failure> {
    if let Some(name) = &args.preset {
        let p = preset(name).map_err(config_err)?;
        let variants: Vec<_> = match &args.variant {
            Some(label) => {
                let v: Vec<_> = p.variants.iter().filter(|v| &v.label == label).collect();
                if v.is_empty() {
                    return Err(config_err(Error::Config(format!(
                        "preset `{name}` has no variant `{label}`"
                    ))));
                }
                v
            }
            None => p.variants.iter().collect(),
        };
        if args.output.is_some() && variants.len() > 1 {
            return Err(config_err(Error::Config(
                "--output needs --variant for multi-variant presets; use --output-dir".into(),
            )));
        }
        let configs = variants
            .iter()
            .map(|v| from_text(&v.text, &args.config))
            .collect::<Result<Vec<_>, _>>()?;
        for config in &configs {
            let out = resolve_output(config, args.output.as_ref(), args.output_dir.as_ref())?;
            run_one(config, out, args.summary)?;
        }
        return Ok(());
    }
    let path = args
        .config
        .config
        .as_ref()
        .ok_or_else(|| config_err(Error::Config("give a config file or --preset".into())))?;
    let config = load_config(path, &args.config)?;
    let out = resolve_output(&config, args.output.as_ref(), args.output_dir.as_ref())?;
    run_one(&config, out, args.summary)
}

fn summarize_file(args: SummarizeArgs) -> Result<(), Failure> {
    let metric: Metric = args.metric.parse().map_err(config_err)?;
    let text = fs::read_to_string(&args.input)
        .map_err(|e| config_err(Error::Config(format!("cannot read {}: {e}", args.input.display()))))?;
    let rows = read_results(&text).map_err(config_err)?;
    let options = SummaryOptions {
        metric,
        pointwise_best: !args.no_best,
    };
    let summary = summarize(&rows, options).map_err(config_err)?;
    match &args.output {
        Some(path) => {
            let mut w = create(path)?;
            write_summary(&summary, &mut w).map_err(runtime_err)?;
            finish(w)
        }
        None => write_summary(&summary, std::io::stdout().lock()).map_err(runtime_err),
    }
}

fn validate(args: ConfigArgs) -> Result<(), Failure> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| config_err(Error::Config("give a config file".into())))?;
    let config = load_config(path, &args)?;
    let tags: Vec<&str> = config.agents.iter().map(|a| a.tag.as_str()).collect();
    println!(
        "ok: {} K={} d={} m={} n={} replications={} agents={}",
        config.family.name(),
        config.k,
        config.d,
        config.m,
        config.n,
        config.replications,
        tags.join(",")
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Summarize(args) => summarize_file(args),
        Command::Presets { action } => match action {
            PresetAction::List => {
                for p in presets() {
                    let labels: Vec<&str> = p.variants.iter().map(|v| v.label.as_str()).collect();
                    println!("{}\t{} [{}]", p.name, p.description, labels.join(", "));
                }
                Ok(())
            }
            PresetAction::Show { name } => preset(&name).map_err(config_err).map(|p| {
                for v in p.variants {
                    println!("# variant: {}\n{}", v.label, v.text);
                }
            }),
        },
        Command::ValidateConfig(args) => validate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
