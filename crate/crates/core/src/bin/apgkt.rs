use std::path::PathBuf;
use std::process::ExitCode;

use apgkt::harness::experiment::compare_table;
use apgkt::harness::{compare_runs, reference_table, run_experiment, write_report, Alpha, ExperimentConfig};
use apgkt::model::{RecapMode, Variant};
use apgkt::synth::{generate_synthetic, SynthConfig};
use apgkt::KtError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "apgkt", version, about = "Knowledge tracing with skill graphs and knowledge modes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one model from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        recap: Option<RecapMode>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long = "att-bound", allow_negative_numbers = true)]
        att_bound: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        lambda: Option<f64>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank models over datasets from metrics files.
    Compare {
        #[arg(long, num_args = 1.., required_unless_present = "reference")]
        runs: Vec<PathBuf>,
        /// Use the published reference AUC table instead of run files.
        #[arg(long)]
        reference: bool,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write the skills graph, difficulty and mode vectors of a dataset.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON file with generator settings; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        students: Option<usize>,
        #[arg(long)]
        questions: Option<usize>,
        #[arg(long)]
        skills: Option<usize>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> apgkt::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|_| KtError::MissingFile(path.clone()))?;
    Ok(serde_json::from_str(&text)?)
}

fn execute(cmd: Command) -> apgkt::Result<()> {
    match cmd {
        Command::Run {
            config,
            lr,
            seed,
            variant,
            recap,
            k,
            att_bound,
            lambda,
            layers,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(KtError::at("config"))?;
            if let Some(v) = lr {
                cfg.lr = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = variant {
                cfg.model.variant = v;
            }
            if let Some(v) = recap {
                cfg.model.recap = v;
            }
            if let Some(v) = k {
                cfg.model.k = v;
            }
            if let Some(v) = att_bound {
                cfg.model.att_bound = v;
            }
            if let Some(v) = lambda {
                cfg.lambda = v;
            }
            if let Some(v) = layers {
                cfg.model.n_layers = v;
            }
            if let Some(v) = out {
                cfg.output_dir = v;
            }
            cfg.validate().map_err(KtError::at("config"))?;
            let report = run_experiment(&cfg)?;
            println!(
                "{} on {}: test AUC {:.4} (best epoch {}, {:.1}s) -> {}",
                report.variant,
                report.name,
                report.test_auc,
                report.best_epoch,
                report.wall_clock_secs,
                cfg.output_dir.join("metrics.json").display()
            );
        }
        Command::Compare {
            runs,
            reference,
            alpha,
            out,
        } => {
            let alpha = Alpha::from_f64(alpha).map_err(KtError::at("config"))?;
            let result = if reference {
                compare_table(&reference_table(), alpha, &out).map_err(KtError::at("nemenyi"))?
            } else {
                compare_runs(&runs, alpha, &out)?
            };
            for (m, r) in result.models.iter().zip(&result.average_ranks) {
                println!("{m:>16}  {r:.2}");
            }
            println!("critical difference {:.3}", result.critical_difference);
        }
        Command::Report { config, out } => {
            let cfg = ExperimentConfig::load(&config).map_err(KtError::at("config"))?;
            let inputs = write_report(&cfg, &out)?;
            println!(
                "{} questions, {} skills -> {}",
                inputs.n_questions(),
                inputs.n_skills(),
                out.display()
            );
        }
        Command::Synth {
            out,
            config,
            gamma,
            seed,
            students,
            questions,
            skills,
        } => {
            let mut sc: SynthConfig = match &config {
                Some(p) => read_json(p).map_err(KtError::at("config"))?,
                None => SynthConfig::default(),
            };
            if let Some(v) = gamma {
                sc.gamma = v;
            }
            if let Some(v) = seed {
                sc.seed = v;
            }
            if let Some(v) = students {
                sc.n_students = v;
            }
            if let Some(v) = questions {
                sc.n_questions = v;
            }
            if let Some(v) = skills {
                sc.n_skills = v;
            }
            let data = generate_synthetic(&sc).map_err(KtError::at("synth"))?;
            data.write(&out).map_err(KtError::at("write"))?;
            println!("{} interactions -> {}", data.log.n_interactions(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.root() {
                KtError::MissingFile(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
