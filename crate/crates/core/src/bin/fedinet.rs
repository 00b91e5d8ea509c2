use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedinet::cli::{self, CommandError, Config};

#[derive(Parser)]
#[command(name = "fedinet", version, about = "Mastodon ego-network crawler and analysis toolkit")]
struct Args {
    /// TOML or JSON config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-ego work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Snowball-crawl Mastodon starting from a seed account.
    Crawl {
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        target_n: Option<usize>,
        #[arg(long)]
        t_end: Option<chrono::NaiveDate>,
        #[arg(long, default_value = "dataset")]
        out: PathBuf,
        /// Continue from a checkpoint file instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with planted circles.
    Synth {
        /// Planted model (TOML/JSON); the canonical layer model otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        n_egos: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "synth")]
        out: PathBuf,
    },
    /// Analyse a dataset into report tables.
    Analyze {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Check dataset invariants; exits non-zero on violations.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
}

fn run(args: Args) -> Result<ExitCode, CommandError> {
    let mut config = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let data = |p: &Path| cli::resolve_data_path(p);
    match args.cmd {
        Cmd::Crawl {
            seed,
            target_n,
            t_end,
            out,
            resume,
        } => {
            if let Some(n) = target_n {
                config.target_n = n;
            }
            if let Some(t) = t_end {
                config.t_end = t;
            }
            config.validate()?;
            run_crawl(&config, seed.as_deref(), &data(&out), resume.as_deref())?;
        }
        Cmd::Synth {
            model,
            n_egos,
            seed,
            out,
        } => {
            let model = cli::load_model(model.as_deref(), &config)?;
            let h = cli::cmd_synth(&config, &model, n_egos, seed, &data(&out))?;
            println!("{}", h.root().display());
        }
        Cmd::Analyze { dataset, out } => {
            let out = data(&out);
            cli::cmd_analyze(&data(&dataset), &config, &out)?;
            println!("{}", out.display());
        }
        Cmd::Validate { dataset } => {
            let violations = cli::cmd_validate(&data(&dataset), &config)?;
            for v in &violations {
                println!("{v}");
            }
            if !violations.is_empty() {
                eprintln!("{} invariant violation(s)", violations.len());
                return Ok(ExitCode::from(1));
            }
            println!("ok");
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(feature = "https")]
fn run_crawl(config: &Config, seed: Option<&str>, out: &Path, resume: Option<&Path>) -> Result<(), CommandError> {
    let transport = fedinet::fedi_client::HttpsTransport::default();
    let client = fedinet::FediClient::new(transport);
    let h = cli::cmd_crawl(config, &client, seed, out, resume)?;
    println!("{}", h.root().display());
    Ok(())
}

#[cfg(not(feature = "https"))]
fn run_crawl(_: &Config, _: Option<&str>, _: &Path, _: Option<&Path>) -> Result<(), CommandError> {
    Err(CommandError::Usage("built without the `https` feature".into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if let Some(jobs) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("fedinet: {e}");
            return ExitCode::from(2);
        }
    }
    match run(args) {
        Ok(code) => code,
        Err(e @ (CommandError::Config(_) | CommandError::Usage(_))) => {
            eprintln!("fedinet: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("fedinet: {e}");
            ExitCode::from(1)
        }
    }
}
