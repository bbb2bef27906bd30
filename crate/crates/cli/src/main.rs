use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qauction_cli::dataset::read_dataset;
use qauction_cli::ledger::mint_lots;
use qauction_cli::report::{emit_report, label_for};
use qauction_cli::run::{
    baseline_checkpoint, evaluate_checkpoint, gen_data, load_checkpoint, regret_audit, train_run, OUT_DIR_ENV,
};
use qauction_cli::{ExperimentConfig, HarnessError, Result, RunPaths};
use qauction_core::auction::Checkpoint;
use qauction_core::Variant;

#[derive(Parser)]
#[command(name = "qauction", version, about = "Learned NFT auctions: data, training, evaluation, reports")]
struct Cli {
    /// Output directory for datasets, ledger, metrics and checkpoints.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train and test valuation datasets.
    GenData(ConfigArgs),
    /// Mint the lots of a dataset into the ledger.
    Mint {
        /// Dataset to mint (default: the run's test set).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "market")]
        creator_id: String,
    },
    /// Train a mechanism and record its test-set sales.
    Train(ConfigArgs),
    /// Revenue, regret and IR violations of a checkpoint or baseline.
    Eval {
        #[command(flatten)]
        target: Target,
        /// Only compute revenue and IR.
        #[arg(long)]
        skip_regret: bool,
    },
    /// Compare ascent regret with exhaustive grid regret.
    RegretAudit {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
        /// Audit only the first N profiles.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Revenue and regret charts (SVG + CSV) from metrics files.
    Report {
        #[arg(long = "metrics", required = true)]
        metrics: Vec<PathBuf>,
        /// SPA revenue line; measured on the run's test set when omitted.
        #[arg(long)]
        spa_value: Option<f64>,
    },
}

#[derive(Args)]
struct Target {
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = ["spa", "myerson"])]
    baseline: Option<String>,
    /// Dataset to evaluate on (default: the run's test set).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Dla,
    Qdla,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lstm_size: Option<usize>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lambda_init: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    misreport_steps: Option<usize>,
    #[arg(long)]
    misreport_step_size: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    /// Record wallclock_s as 0 for byte-reproducible metrics.
    #[arg(long)]
    no_wallclock: bool,
    #[arg(long)]
    creator_id: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    c.$field = v;
                }
            )*};
        }
        set!(n, m, train_count, test_count, seed, epochs, batch_size, lambda_init, rho);
        set!(misreport_steps, misreport_step_size, grid_step, creator_id);
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() {
                    c.$field = self.$field;
                }
            )*};
        }
        set_opt!(lr, lstm_size, hidden_size, qubits, layers);
        if let Some(v) = self.variant {
            c.variant = match v {
                VariantArg::Dla => Variant::Dla,
                VariantArg::Qdla => Variant::Qdla,
            };
        }
        if self.no_wallclock {
            c.record_wallclock = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn target_checkpoint(t: &Target, n: usize, m: usize) -> Result<Checkpoint> {
    match (&t.checkpoint, &t.baseline) {
        (Some(p), _) => load_checkpoint(p),
        (None, Some(b)) => baseline_checkpoint(b, n, m),
        (None, None) => Err(HarnessError::Validation(vec!["--checkpoint or --baseline is required".into()])),
    }
}

fn run(cli: Cli) -> Result<()> {
    let paths = RunPaths::resolve(cli.out_dir);
    match cli.command {
        Command::GenData(args) => {
            let cfg = args.resolve()?;
            gen_data(&cfg, &paths)?;
            println!(
                "wrote {} and {}",
                paths.train_data().display(),
                paths.test_data().display()
            );
        }
        Command::Mint { dataset, creator_id } => {
            let dataset = dataset.unwrap_or_else(|| paths.test_data());
            let s = mint_lots(&dataset, &paths.ledger(), &creator_id)?;
            println!("minted {} lots, {} already on the ledger", s.added, s.skipped);
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let summary = train_run(&cfg, &paths)?;
            if let Some(last) = summary.metrics.last() {
                println!(
                    "epoch {}: test revenue {:.4}, regret {:?}, IR violations {}",
                    last.epoch, last.revenue_test, last.regret_test, last.ir_violations
                );
            }
            println!(
                "metrics {}, checkpoint {}, {} sales recorded",
                summary.metrics_path.display(),
                summary.checkpoint_path.display(),
                summary.sales_recorded
            );
        }
        Command::Eval { target, skip_regret } => {
            let dataset = target.dataset.clone().unwrap_or_else(|| paths.test_data());
            let records = read_dataset(&dataset)?;
            let (n, m) = qauction_cli::dataset::shape_of(&records).unwrap_or((0, 0));
            let ckpt = target_checkpoint(&target, n, m)?;
            let report = evaluate_checkpoint(&ckpt, &records, !skip_regret)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::RegretAudit { target, grid_step, limit } => {
            let dataset = target.dataset.clone().unwrap_or_else(|| paths.test_data());
            let records = read_dataset(&dataset)?;
            let (n, m) = qauction_cli::dataset::shape_of(&records).unwrap_or((0, 0));
            let ckpt = target_checkpoint(&target, n, m)?;
            print!("{}", regret_audit(&ckpt, &records, grid_step, limit)?.render());
        }
        Command::Report { metrics, spa_value } => {
            let spa = match spa_value {
                Some(v) => v,
                None => {
                    let records = read_dataset(&paths.test_data())?;
                    let (n, m) = qauction_cli::dataset::shape_of(&records).unwrap_or((0, 0));
                    evaluate_checkpoint(&Checkpoint::spa(n, m), &records, false)?.revenue
                }
            };
            let inputs: Vec<(String, PathBuf)> = metrics.into_iter().map(|p| (label_for(&p), p)).collect();
            for f in emit_report(&inputs, spa, &paths.out_dir)? {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
