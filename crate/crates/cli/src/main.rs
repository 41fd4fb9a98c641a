use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dtstyle::numerics::PoolMode;
use dtstyle_cli::{
    check_weights, distance_debug, generate, sweep, Axis, CliError, DebugRequest, Entries,
    RunManifest,
};

#[derive(Parser)]
#[command(name = "dtstyle", version, about = "Style transfer held to a silhouette by a distance-transform loss")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One optimization run.
    Generate(RunArgs),
    /// One run per value of a parameter, plus a labelled grid of the results.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// gamma, alpha_beta (the ratio alpha/beta) or power.
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values, at least two.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        /// Runs in flight at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write the binary mask and distance field of a content image.
    DistanceDebug {
        content: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        invert: bool,
        #[arg(long, default_value_t = 2)]
        power: u32,
        #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = true)]
        normalize_distance: bool,
        /// Resize to a square of this side first.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Decode a weight file and list its layers.
    CheckWeights { path: PathBuf },
}

/// Manifest file plus overrides. Every flag maps to the manifest key of the
/// same name.
#[derive(Args)]
struct RunArgs {
    /// Manifest file; flags override its entries.
    manifest: Option<PathBuf>,
    #[arg(long)]
    content: Option<PathBuf>,
    #[arg(long)]
    style: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    invert: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    normalize_distance: Option<bool>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    power: Option<u32>,
    #[arg(long)]
    content_layer: Option<String>,
    /// Comma-separated conv layer names.
    #[arg(long)]
    style_layers: Option<String>,
    #[arg(long)]
    pool: Option<PoolMode>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// A step count, or `none`.
    #[arg(long)]
    snapshot_every: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

impl RunArgs {
    fn resolve(&self) -> Result<RunManifest, CliError> {
        let mut entries = match &self.manifest {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    if path.exists() {
                        CliError::InputInvalid(format!("{}: {e}", path.display()))
                    } else {
                        CliError::missing("manifest", path)
                    }
                })?;
                Entries::parse(&text)?
            }
            None => Entries::default(),
        };
        let overrides = [
            ("content", self.content.as_deref().map(path_str)),
            ("style", self.style.as_deref().map(path_str)),
            ("out", self.out.as_deref().map(path_str)),
            ("weights", self.weights.as_deref().map(path_str)),
            ("resolution", self.resolution.map(|v| v.to_string())),
            ("threshold", self.threshold.map(|v| v.to_string())),
            ("invert", self.invert.map(|v| v.to_string())),
            ("normalize_distance", self.normalize_distance.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("power", self.power.map(|v| v.to_string())),
            ("content_layer", self.content_layer.clone()),
            ("style_layers", self.style_layers.clone()),
            ("pool", self.pool.map(|v| v.to_string())),
            ("iterations", self.iterations.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("snapshot_every", self.snapshot_every.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                entries.set(key, v);
            }
        }
        RunManifest::from_entries(&entries)
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(args) => {
            let report = generate(&args.resolve()?)?;
            println!("{}", report.final_png.display());
        }
        Command::Sweep {
            run,
            axis,
            values,
            jobs,
        } => {
            if jobs == 0 {
                return Err(CliError::BadArgs("--jobs must be at least 1".into()));
            }
            for r in sweep(&run.resolve()?, axis, &values, jobs)? {
                println!("{}\t{}", r.value, r.report.final_png.display());
            }
        }
        Command::DistanceDebug {
            content,
            out,
            threshold,
            invert,
            power,
            normalize_distance,
            resolution,
        } => {
            distance_debug(&DebugRequest {
                content,
                out: out.clone(),
                threshold,
                invert,
                power,
                normalize: normalize_distance,
                resolution,
            })?;
            println!("{}", out.join("mask.png").display());
            println!("{}", out.join("distance.png").display());
        }
        Command::CheckWeights { path } => print!("{}", check_weights(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::BadArgs(first.to_owned()).line());
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
