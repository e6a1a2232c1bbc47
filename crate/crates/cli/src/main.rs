//! `panelaudit` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 execution error.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use panelaudit::audit::{
    default_grid, enumerate_grid, read_results, render_summary, run_grid, summarize, write_plot_data, write_results,
    AuditSettings,
};
use panelaudit::cv::{folds_group_kfold, folds_random_kfold, folds_temporal, folds_unit_kfold, TemporalCv};
use panelaudit::features::{lint_features, Severity};
use panelaudit::split::{last_periods, verify_assignment, SplitStrategy};
use panelaudit::synth::generate_panel;
use panelaudit::{load_panel, Error, ErrorKind, PanelDataset, Parallelism, Result};

use config::{CvMethod, RunConfig, SplitMethod};

#[derive(Debug, Parser)]
#[command(name = "panelaudit", version, about = "Leakage-aware evaluation of models on panel data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Overrides the seed the command uses.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic panel described by the config.
    Synth(Common),
    /// Partition the panel and report open leakage channels.
    Split(Common),
    /// Write a cross-validation fold plan.
    CvPlan(Common),
    /// Check the feature plan against the leakage rules.
    Lint {
        config: PathBuf,
    },
    /// Run the model grid and write one result row per configuration.
    Audit {
        #[command(flatten)]
        common: Common,
        /// `auto`, `sequential`, or a thread count.
        #[arg(long, default_value = "auto", value_parser = parse_parallelism)]
        parallelism: Parallelism,
        /// Overrides the forest size.
        #[arg(long)]
        trees: Option<usize>,
    },
    /// Summarize an audit result file.
    Report {
        #[command(flatten)]
        common: Common,
        /// Result file; defaults to `results.csv` in the output directory.
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

fn parse_parallelism(s: &str) -> std::result::Result<Parallelism, String> {
    match s {
        "auto" => Ok(Parallelism::Auto),
        "sequential" => Ok(Parallelism::Sequential),
        n => n
            .parse::<usize>()
            .map(Parallelism::from_threads)
            .map_err(|_| format!("expected `auto`, `sequential` or a thread count, got `{n}`")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Execution => 3,
            })
        }
    }
}

struct Context {
    config: RunConfig,
    out: PathBuf,
}

impl Context {
    fn new(common: &Common) -> Result<Self> {
        let config = RunConfig::load(&common.config)?;
        let out = common.out.clone().unwrap_or_else(|| config.output_dir.clone());
        fs::create_dir_all(&out)?;
        Ok(Self { config, out })
    }

    fn dataset(&self) -> Result<PanelDataset> {
        let data = &self.config.data;
        match (&data.path, &data.synthetic) {
            (Some(path), _) => {
                let schema = data.schema.as_ref().expect("checked on load");
                load_panel(File::open(path)?, schema, data.policy)
            }
            (None, Some(spec)) => generate_panel(spec, self.config.seeds.data),
            (None, None) => unreachable!("checked on load"),
        }
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Synth(common) => cmd_synth(&common),
        Command::Split(common) => cmd_split(&common),
        Command::CvPlan(common) => cmd_cv_plan(&common),
        Command::Lint { config } => cmd_lint(&config),
        Command::Audit {
            common,
            parallelism,
            trees,
        } => cmd_audit(&common, parallelism, trees),
        Command::Report { common, results } => cmd_report(&common, results),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn echo_seed(seed: u64) {
    println!("seed: {seed}");
}

fn cmd_synth(common: &Common) -> Result<()> {
    let mut ctx = Context::new(common)?;
    let Some(spec) = ctx.config.data.synthetic.clone() else {
        return Err(Error::InvalidParameter("synth needs a `data.synthetic` section".into()));
    };
    if let Some(seed) = common.seed {
        ctx.config.seeds.data = seed;
    }
    echo_seed(ctx.config.seeds.data);
    let ds = generate_panel(&spec, ctx.config.seeds.data)?;
    let mut w = ctx.create("panel.csv")?;
    ds.write_csv(&mut w)?;
    w.flush()?;
    println!("wrote {} rows to {}", ds.n_rows(), ctx.out.join("panel.csv").display());
    Ok(())
}

fn cmd_split(common: &Common) -> Result<()> {
    let ctx = Context::new(common)?;
    let section = ctx
        .config
        .split
        .clone()
        .ok_or_else(|| Error::InvalidParameter("split needs a `split` section".into()))?;
    let seed = common.seed.unwrap_or(ctx.config.seeds.split);
    echo_seed(seed);
    let ds = ctx.dataset()?;
    let test_fraction = section.test_fraction;
    let strategy = match section.method {
        SplitMethod::ObservationRandom => SplitStrategy::ObservationRandom { test_fraction, seed },
        SplitMethod::UnitRandom => SplitStrategy::UnitRandom { test_fraction, seed },
        SplitMethod::GroupRandom => SplitStrategy::GroupRandom { test_fraction, seed },
        SplitMethod::TimeHoldout => SplitStrategy::TimeHoldout {
            test_periods: last_periods(&ds, section.test_periods),
        },
        SplitMethod::Combined => SplitStrategy::Combined {
            test_periods: last_periods(&ds, section.test_periods),
            test_fraction,
            seed,
        },
    };
    let assignment = strategy.apply(&ds)?;
    let mut w = ctx.create("split.csv")?;
    assignment.write_csv(&ds, &mut w)?;
    w.flush()?;
    let diagnosis = verify_assignment(&ds, &assignment);
    println!(
        "{}: train {} test {} excluded {}",
        strategy.name(),
        assignment.train_size,
        assignment.test_size,
        ds.n_rows() - assignment.train_size - assignment.test_size
    );
    println!("{}", diagnosis.consequence());
    Ok(())
}

fn cmd_cv_plan(common: &Common) -> Result<()> {
    let ctx = Context::new(common)?;
    let section = ctx
        .config
        .cv
        .clone()
        .ok_or_else(|| Error::InvalidParameter("cv-plan needs a `cv` section".into()))?;
    let seed = common.seed.unwrap_or(ctx.config.seeds.cv);
    echo_seed(seed);
    let ds = ctx.dataset()?;
    let rows: Vec<usize> = (0..ds.n_rows()).collect();
    let plan = match section.method {
        CvMethod::RandomKfold => folds_random_kfold(&ds, &rows, section.k, seed)?,
        CvMethod::UnitKfold => folds_unit_kfold(&ds, &rows, section.k, seed)?,
        CvMethod::GroupKfold => folds_group_kfold(&ds, &rows, section.k, seed)?,
        CvMethod::Temporal => {
            let params = section.temporal.unwrap_or_else(|| TemporalCv::default_for(ds.n_periods()));
            folds_temporal(&ds, &rows, params)?
        }
    };
    let mut w = ctx.create("folds.csv")?;
    plan.write_csv(&ds, &mut w)?;
    w.flush()?;
    println!("{} folds written to {}", plan.folds.len(), ctx.out.join("folds.csv").display());
    Ok(())
}

/// Prints nothing for a compliant plan; fails when any finding is an error.
fn cmd_lint(path: &Path) -> Result<()> {
    let config = RunConfig::load(path)?;
    let spec = config
        .features
        .ok_or_else(|| Error::InvalidParameter("lint needs a `features` section".into()))?;
    let findings = lint_features(&spec);
    for f in &findings {
        println!("{f}");
    }
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    if errors > 0 {
        return Err(Error::InvalidParameter(format!("{errors} lint error(s)")));
    }
    Ok(())
}

fn cmd_audit(common: &Common, parallelism: Parallelism, trees: Option<usize>) -> Result<()> {
    let ctx = Context::new(common)?;
    let section = ctx
        .config
        .audit
        .clone()
        .ok_or_else(|| Error::InvalidParameter("audit needs an `audit` section".into()))?;
    let seed = common.seed.unwrap_or(ctx.config.seeds.audit);
    echo_seed(seed);
    let mut settings = match (&section.settings, &ctx.config.data.synthetic) {
        (Some(s), _) => s.clone(),
        (None, Some(spec)) => AuditSettings::for_synthetic(spec),
        (None, None) => {
            return Err(Error::InvalidParameter("audit needs `audit.settings` for file data".into()));
        }
    };
    if let Some(n) = trees.or(section.trees) {
        settings.forest.n_trees = n;
    }
    settings.validate()?;
    let configs = match &section.axes {
        Some(axes) => enumerate_grid(&section.problems, axes)?,
        None => default_grid(&section.problems, section.profile),
    };
    let ds = ctx.dataset()?;
    let results = run_grid(&ds, &settings, &configs, parallelism, seed);
    let mut w = ctx.create("results.csv")?;
    write_results(&results, &mut w)?;
    w.flush()?;
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} configurations, {} failed; results in {}",
        results.len(),
        failed,
        ctx.out.join("results.csv").display()
    );
    Ok(())
}

fn cmd_report(common: &Common, results: Option<PathBuf>) -> Result<()> {
    let ctx = Context::new(common)?;
    echo_seed(common.seed.unwrap_or(ctx.config.seeds.audit));
    let path = results.unwrap_or_else(|| ctx.out.join("results.csv"));
    let records = read_results(File::open(&path)?)?;
    let report = summarize(&records)?;
    let text = render_summary(&report);
    let mut w = ctx.create("summary.txt")?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    let mut w = ctx.create("plot_data.csv")?;
    write_plot_data(&records, &report, &mut w)?;
    w.flush()?;
    print!("{text}");
    Ok(())
}
