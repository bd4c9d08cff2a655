use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use clinic_prm::cli::{self, PoolSource, RunConfig, RunError, ScorerKind};
use clinic_prm::corpus::MaskVariant;
use clinic_prm::model::ScoreNormalization;
use clinic_prm::scoring::AggregationStrategy;
use clinic_prm::study::server::{serve, StudyService};

#[derive(Parser)]
#[command(name = "clinic-prm", version, about = "Step-level reward models for clinical notes")]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic toy cases and a held-out eval set.
    GenToy {
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long)]
        eval_cases: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
    },
    /// Corrupt the cases into a labeled dataset and print its statistics.
    BuildData {
        /// stored, local or http
        #[arg(long)]
        pools: Option<PoolSource>,
    },
    /// Serialize the dataset into a token corpus with loss masks.
    BuildCorpus {
        /// vanilla, score_only, special or notes_only
        #[arg(long)]
        mask: Option<MaskVariant>,
        /// Keep only the end-of-note label in every sample.
        #[arg(long)]
        vanilla_orm: bool,
    },
    /// Train the toy PRM on the corpus.
    Train {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Per-step and note-level scores for a JSONL file of candidates.
    Score {
        candidates: PathBuf,
        #[command(flatten)]
        scoring: ScoringArgs,
    },
    /// Best-of-N accuracy on an eval set.
    Eval {
        #[arg(long)]
        eval_set: Option<PathBuf>,
        #[command(flatten)]
        scoring: ScoringArgs,
    },
    /// Accuracy under all nine aggregation strategies.
    Sweep {
        #[arg(long)]
        eval_set: Option<PathBuf>,
        #[command(flatten)]
        scoring: ScoringArgs,
    },
    /// ROUGE-1, ROUGE-L and ROUGE-Lsum between two text files.
    Rouge { candidate: PathBuf, reference: PathBuf },
    /// Temperatures of each case's top-k samples.
    TempHist {
        samples: PathBuf,
        #[arg(long)]
        top_k: Option<usize>,
        #[command(flatten)]
        scoring: ScoringArgs,
    },
    /// Run the reader study service.
    ServeStudy {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        study_dir: Option<PathBuf>,
        /// Built annotation frontend, served at / when present.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Majority-vote win rates of a study.
    ReportStudy {
        study_id: String,
        #[arg(long)]
        study_dir: Option<PathBuf>,
        /// Report even when some case is below quorum.
        #[arg(long)]
        partial: bool,
    },
}

#[derive(clap::Args)]
struct ScoringArgs {
    #[arg(long)]
    strategy: Option<AggregationStrategy>,
    /// prm, oracle or inverted-oracle
    #[arg(long)]
    scorer: Option<ScorerKind>,
    #[arg(long)]
    oracle_noise: Option<f64>,
    /// Renormalize p(+) against p(-) only.
    #[arg(long)]
    two_way: bool,
}

impl ScoringArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.strategy {
            cfg.strategy = s;
        }
        if let Some(s) = self.scorer {
            cfg.scorer = s;
        }
        if let Some(n) = self.oracle_noise {
            cfg.oracle_noise = n;
        }
        if self.two_way {
            cfg.normalization = ScoreNormalization::TwoWay;
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, RunError> {
    let (mut cfg, seed_in_file) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))?;
            let table: toml::Table = text.parse().map_err(|e| RunError::Usage(format!("config: {e}")))?;
            (RunConfig::from_toml(&text)?, table.contains_key("seed"))
        }
        None => (RunConfig::default(), false),
    };
    if let Some(d) = &cli.run_dir {
        cfg.run_dir = d.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let needs_seed = matches!(cli.command, Command::GenToy { .. } | Command::BuildData { .. });
    if needs_seed && cli.seed.is_none() && !seed_in_file {
        return Err(RunError::Usage("data-producing commands need --seed (or `seed` in the config)".into()));
    }
    match &cli.command {
        Command::GenToy {
            cases,
            eval_cases,
            negatives,
        } => {
            cfg.toy_cases = cases.unwrap_or(cfg.toy_cases);
            cfg.eval_cases = eval_cases.unwrap_or(cfg.eval_cases);
            cfg.eval_negatives = negatives.unwrap_or(cfg.eval_negatives);
        }
        Command::BuildData { pools } => cfg.pool_source = pools.unwrap_or(cfg.pool_source),
        Command::BuildCorpus { mask, vanilla_orm } => {
            cfg.mask = mask.unwrap_or(cfg.mask);
            cfg.vanilla_orm |= vanilla_orm;
        }
        Command::Train {
            steps,
            learning_rate,
            batch_size,
        } => {
            cfg.train.steps = steps.unwrap_or(cfg.train.steps);
            cfg.train.learning_rate = learning_rate.unwrap_or(cfg.train.learning_rate);
            cfg.train.batch_size = batch_size.unwrap_or(cfg.train.batch_size);
        }
        Command::Score { scoring, .. } | Command::Eval { scoring, .. } | Command::Sweep { scoring, .. } => scoring.apply(&mut cfg),
        Command::TempHist { top_k, scoring, .. } => {
            scoring.apply(&mut cfg);
            cfg.top_k = top_k.unwrap_or(cfg.top_k);
        }
        Command::ServeStudy { study_dir, .. } | Command::ReportStudy { study_dir, .. } => {
            if study_dir.is_some() {
                cfg.study_dir = study_dir.clone();
            }
        }
        Command::Rouge { .. } => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, RunError> {
    let cfg = resolve(&cli)?;
    cfg.prepare()?;
    match cli.command {
        Command::GenToy { .. } => cli::gen_toy(&cfg),
        Command::BuildData { .. } => cli::build_data(&cfg),
        Command::BuildCorpus { .. } => cli::build_corpus(&cfg),
        Command::Train { .. } => cli::train(&cfg),
        Command::Score { candidates, .. } => cli::score(&cfg, &candidates),
        Command::Eval { eval_set, .. } => cli::eval(&cfg, eval_set.as_deref()),
        Command::Sweep { eval_set, .. } => cli::sweep(&cfg, eval_set.as_deref()),
        Command::Rouge { candidate, reference } => cli::rouge(&cfg, &candidate, &reference),
        Command::TempHist { samples, .. } => cli::temp_hist(&cfg, &samples),
        Command::ReportStudy { study_id, partial, .. } => cli::report_study(&cfg, &study_id, partial),
        Command::ServeStudy {
            port, host, static_dir, ..
        } => serve_study(&cfg, &host, port, static_dir).map_err(|e| RunError::Backend(format!("{e:#}"))),
    }
}

fn serve_study(cfg: &RunConfig, host: &str, port: u16, static_dir: Option<PathBuf>) -> anyhow::Result<String> {
    let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
    let service = Arc::new(StudyService::open(&cfg.study_root()).context("opening study store")?);
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("serving /v1 on http://{addr} (studies in {})", cfg.study_root().display());
    rt.block_on(serve(addr, service, static_dir)).context("server")?;
    Ok(String::new())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = RunError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_record());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_record());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
