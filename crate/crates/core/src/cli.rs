//! Command-line front end. Precedence for experiment settings is
//! flags, then the `--config` file, then built-in defaults.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::env::RewardMatrix;
use crate::error::{Error, Result};
use crate::harness::{self, emit_plot_svg, BatchSummary, Experiment, ExperimentConfig, Manifest};
use crate::oracle::{self, BipartiteGraph};
use crate::seed;

#[derive(Debug, Parser)]
#[command(
    name = "fair-bandit",
    version,
    about = "Max-min fair multi-player bandit simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ground-truth report for a reward matrix.
    Oracle(MatrixArg),
    /// One seeded game; writes a regret trace, epoch table, plot and manifest.
    Run(ExperimentArgs),
    /// Independent seeded games; writes mean/std regret, a plot and a manifest.
    Batch(ExperimentArgs),
    /// Absorption statistics of the matching dynamics on the threshold graph.
    Dynamics(DynamicsArgs),
}

#[derive(Debug, Args)]
pub struct MatrixArg {
    /// `u1`, `u2`, or a path to a whitespace-separated matrix file.
    #[arg(value_name = "MATRIX")]
    pub positional: Option<String>,
    #[arg(long = "matrix", value_name = "MATRIX", conflicts_with = "positional")]
    pub flag: Option<String>,
}

impl MatrixArg {
    fn selector(&self) -> Option<&str> {
        self.flag.as_deref().or(self.positional.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub matrix: MatrixArg,
    /// TOML file with experiment settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Half-width of the uniform reward noise.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long)]
    pub c3: Option<f64>,
    #[arg(long)]
    pub ci_scale: Option<f64>,
    #[arg(long)]
    pub epsilon_scale: Option<f64>,
    #[arg(long)]
    pub no_warm_start: bool,
    /// Smallest number of epochs between search-level resets.
    #[arg(long)]
    pub reset_min_period: Option<u64>,
    /// Turns between checkpoints.
    #[arg(long)]
    pub stride: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DynamicsArgs {
    #[command(flatten)]
    pub matrix: MatrixArg,
    /// Edge threshold; defaults to the max-min value of the matrix.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// Steps after which a trial counts as not absorbed.
    #[arg(long, default_value_t = 100_000)]
    pub cap: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ExperimentArgs {
    /// Applies defaults, the config file and the flags, in that order.
    pub fn resolve_config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                ExperimentConfig::from_toml_str(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(m) = self.matrix.selector() {
            c.matrix = m.to_string();
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    c.$field = v;
                }
            )*};
        }
        set!(
            horizon,
            runs,
            seed,
            noise,
            c1,
            c2,
            c3,
            ci_scale,
            epsilon_scale,
            stride,
            reset_min_period
        );
        if self.no_warm_start {
            c.warm_start = false;
        }
        Ok(c)
    }
}

/// Parses `args` and runs the command, writing the report to `stdout`.
pub fn run<I, T, W>(args: I, stdout: &mut W) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
    W: Write,
{
    use clap::error::ErrorKind;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            return write!(stdout, "{e}").map_err(stdout_err);
        }
        Err(e) => return Err(Error::InvalidConfig(e.to_string())),
    };
    execute(cli.command, stdout)
}

pub fn execute<W: Write>(command: Command, out: &mut W) -> Result<()> {
    match command {
        Command::Oracle(m) => cmd_oracle(&load(&m)?, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Batch(a) => cmd_batch(&a, out),
        Command::Dynamics(d) => cmd_dynamics(&d, out),
    }
}

fn load(m: &MatrixArg) -> Result<RewardMatrix> {
    let sel = m
        .selector()
        .ok_or_else(|| Error::InvalidConfig("no matrix given".into()))?;
    RewardMatrix::load(sel)
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

fn one_based(assignment: &[usize]) -> String {
    let arms: Vec<String> = assignment.iter().map(|a| (a + 1).to_string()).collect();
    format!("({})", arms.join(", "))
}

pub fn cmd_oracle<W: Write>(matrix: &RewardMatrix, out: &mut W) -> Result<()> {
    let mut report = String::new();
    let gs = oracle::gamma_star(matrix);
    report += &format!(
        "players = {}, arms = {}\n",
        matrix.n_players(),
        matrix.n_arms()
    );
    report += &format!("gamma_star = {}\n", gs.value);
    report += &format!("witness = {}\n", one_based(&gs.assignment));
    match oracle::matching_histogram(matrix) {
        Ok(h) => {
            report += &format!("assignments = {}\n", h.total);
            for (value, count) in &h.buckets {
                report += &format!("  bottleneck {value}: {count}\n");
            }
        }
        Err(Error::EnumerationTooLarge { count, limit }) => {
            report += &format!(
                "histogram skipped: {count} assignments exceed the enumeration limit of {limit}\n"
            );
        }
        Err(e) => return Err(e),
    }
    let ms = oracle::max_sum_matching(matrix);
    report += &format!(
        "max_sum = {} at {} (bottleneck {})\n",
        ms.matching.value,
        one_based(&ms.matching.assignment),
        ms.bottleneck
    );
    match oracle::minimal_gap(matrix) {
        Ok(g) => report += &format!("delta = {}\n", g.delta),
        Err(_) => report += "delta = undefined (single arm)\n",
    }
    out.write_all(report.as_bytes()).map_err(stdout_err)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok((path, BufWriter::new(file)))
}

fn write_file<F>(dir: &Path, name: &str, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let (path, mut w) = create(dir, name)?;
    write(&mut w).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn prepare(args: &ExperimentArgs) -> Result<Experiment> {
    let exp = args.resolve_config()?.resolve()?;
    fs::create_dir_all(&args.out).map_err(|source| Error::Io {
        path: args.out.display().to_string(),
        source,
    })?;
    Ok(exp)
}

fn epoch_label(e: Option<u64>) -> String {
    e.map_or_else(|| "none".into(), |k| k.to_string())
}

pub fn cmd_run<W: Write>(args: &ExperimentArgs, out: &mut W) -> Result<()> {
    let exp = prepare(args)?;
    let run_seed = seed::derive(exp.config.seed, 0);
    let trace = harness::run_single(&exp, run_seed)?;
    let summary = BatchSummary::from_traces(std::slice::from_ref(&trace))?;

    let mut manifest = Manifest::new(&exp);
    manifest.push("command", "run");
    manifest.push("run_seed", run_seed);
    manifest.push("epochs_started", trace.epochs_started);
    manifest.push("final_regret", trace.final_regret);
    manifest.push("convergence_epoch", epoch_label(trace.convergence_epoch()));

    let dir = &args.out;
    write_file(dir, "trace.csv", |w| harness::write_trace_csv(&trace, w))?;
    write_file(dir, "epochs.csv", |w| harness::write_epochs_csv(&trace, w))?;
    write_file(dir, "regret.svg", |w| {
        emit_plot_svg(
            &summary,
            &format!("cumulative regret, {}", exp.config.matrix),
            w,
        )
    })?;
    write_file(dir, "manifest.txt", |w| {
        harness::write_manifest(&manifest, w)
    })?;

    let report = format!(
        "final_regret = {}\nconvergence_epoch = {}\n",
        manifest.get("final_regret").unwrap(),
        manifest.get("convergence_epoch").unwrap()
    );
    out.write_all(report.as_bytes()).map_err(stdout_err)
}

pub fn cmd_batch<W: Write>(args: &ExperimentArgs, out: &mut W) -> Result<()> {
    let exp = prepare(args)?;
    let (summary, traces) = harness::run_batch(&exp)?;

    let finals: Vec<f64> = traces.iter().map(|t| t.final_regret).collect();
    let mean_final = finals.iter().sum::<f64>() / finals.len() as f64;
    let converged: Vec<String> = summary
        .convergence_epochs
        .iter()
        .map(|&e| epoch_label(e))
        .collect();
    let mut manifest = Manifest::new(&exp);
    manifest.push("command", "batch");
    manifest.push("runs", exp.config.runs);
    manifest.push("run_seeds", "derive(master_seed, r) for r in 0..runs");
    manifest.push("mean_final_regret", mean_final);
    manifest.push(
        "std_final_regret",
        summary.std_regret.last().copied().unwrap_or(0.0),
    );
    manifest.push("convergence_epochs", converged.join(" "));

    let dir = &args.out;
    write_file(dir, "summary.csv", |w| {
        harness::write_summary_csv(&summary, w)
    })?;
    write_file(dir, "regret.svg", |w| {
        emit_plot_svg(
            &summary,
            &format!(
                "mean cumulative regret over {} runs, {}",
                summary.runs, exp.config.matrix
            ),
            w,
        )
    })?;
    write_file(dir, "manifest.txt", |w| {
        harness::write_manifest(&manifest, w)
    })?;

    let report = [
        "mean_final_regret",
        "std_final_regret",
        "convergence_epochs",
    ]
    .iter()
    .map(|k| format!("{k} = {}\n", manifest.get(k).unwrap()))
    .collect::<String>();
    out.write_all(report.as_bytes()).map_err(stdout_err)
}

pub fn cmd_dynamics<W: Write>(args: &DynamicsArgs, out: &mut W) -> Result<()> {
    let matrix = load(&args.matrix)?;
    let gamma = args
        .gamma
        .unwrap_or_else(|| oracle::gamma_star(&matrix).value);
    let graph = BipartiteGraph::at_level(&matrix, gamma);
    let (size, _) = oracle::max_bipartite_matching(&graph);
    if size < matrix.n_players() {
        return Err(Error::NoPerfectMatching(format!(
            "the threshold graph at gamma = {gamma} (largest matching covers {size} of {} players)",
            matrix.n_players()
        )));
    }
    let s = oracle::estimate_absorption_time(&graph, args.trials, args.cap, args.seed)?;
    let report = format!(
        "gamma = {gamma}\ntrials = {}\ncap = {}\nabsorbed_fraction = {}\nmean_absorption_time = {}\nmax_absorption_time = {}\n",
        s.trials, s.cap, s.absorbed_fraction, s.mean, s.max
    );
    out.write_all(report.as_bytes()).map_err(stdout_err)
}
