use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kbqa::fixture::FixtureSpec;
use kbqa::pipeline::{self, PipelineError, Run};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "kbqa", version, about = "Few-shot KBQA: program sampling, translation, self-training")]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Overrides `rng_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground templates into executable programs.
    Sample,
    /// Turn sampled programs into synthetic question/program pairs.
    Translate,
    /// Train the ranker on synthetic and seed pairs.
    Train,
    /// Self-train on unlabeled questions.
    Egst {
        /// Run the staged filter schedule instead of the full chain.
        #[arg(long)]
        pegst: bool,
    },
    /// Report EM and F1 of a checkpoint.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Pairs to evaluate (JSONL); defaults to the dev set.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        ir_fallback: bool,
    },
    /// Answer one question.
    Answer {
        question: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        ir_fallback: bool,
    },
    /// Write a synthetic benchmark and its config.
    GenFixture(FixtureArgs),
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, default_value_t = 1000)]
    entities: usize,
    #[arg(long, default_value_t = 12)]
    relations: usize,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 200)]
    dev: usize,
    #[arg(long, default_value_t = 400)]
    unlabeled: usize,
    #[arg(long, default_value_t = 25)]
    seed_pairs: usize,
    #[arg(long, default_value_t = 20)]
    fallback: usize,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Command::GenFixture(a) = &cli.command {
        let spec = FixtureSpec {
            entities: a.entities,
            relations: a.relations,
            classes: a.classes,
            rng_seed: cli.seed.unwrap_or(7),
            noise: a.noise,
            dev_questions: a.dev,
            unlabeled_questions: a.unlabeled,
            seed_pairs: a.seed_pairs,
            fallback_questions: a.fallback,
            ..FixtureSpec::default()
        };
        if spec.entities == 0 || spec.relations == 0 || spec.classes == 0 {
            return Err(PipelineError::Config("fixture counts must be positive".into()));
        }
        let dir = cli.out.unwrap_or_else(|| PathBuf::from("fixture"));
        let config = pipeline::cmd_gen_fixture(&spec, &dir)?;
        println!("fixture written; config at {}", config.display());
        return Ok(());
    }
    let run = Run::load(&cli.config, cli.seed, cli.out)?;
    match cli.command {
        Command::Sample => {
            let programs = pipeline::cmd_sample(&run)?;
            println!("{} programs -> {}", programs.len(), run.out(pipeline::PROGRAMS_FILE).display());
        }
        Command::Translate => {
            let (pairs, report) = pipeline::cmd_translate(&run)?;
            println!("{} pairs ({} dropped) -> {}", pairs.len(), report.dropped, run.out(pipeline::SYNTHETIC_FILE).display());
        }
        Command::Train => {
            let params = pipeline::cmd_train(&run)?;
            println!("{} features -> {}", params.weights.len(), run.out(pipeline::MODEL_FILE).display());
        }
        Command::Egst { pegst } => {
            let out = pipeline::cmd_egst(&run, pegst)?;
            for r in &out.reports {
                let kept = r.kept.last().map_or(r.produced, |k| k.1);
                println!("stage {} iteration {}: kept {}/{} dev {}", r.stage, r.iteration, kept, r.produced, r.dev);
            }
        }
        Command::Eval { model, data, ir_fallback } => {
            let record = pipeline::cmd_eval(&run, model.as_deref(), data.as_deref(), ir_fallback)?;
            println!("{}", record.metrics);
        }
        Command::Answer { question, model, ir_fallback } => {
            let (answer, lines) = pipeline::cmd_answer(&run, &question, model.as_deref(), ir_fallback)?;
            println!("mode={}", answer.mode);
            for l in &lines {
                println!("{l}");
            }
            if lines.is_empty() {
                return Err(PipelineError::Empty("no answer".into()));
            }
        }
        Command::GenFixture(_) => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
