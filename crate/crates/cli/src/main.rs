//! `nnct` command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand, ValueEnum};

use nnct::harness::{three_class_grid, two_class_grid};
use nnct::report::{AnalysisOptions, NullModel};
use nnct::{
    generate, load_points, run_experiment, AnalysisReport, ExperimentSpec, Family, McConfig, PValueRoute,
    PatternKind, PatternSpec, RadiusRule, Rect, TestSelector, TestTarget,
};

#[derive(Parser)]
#[command(name = "nnct", version, about = "Nearest-neighbor contingency table tests of segregation and association")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a labeled point file (CSV with header x,y,label).
    Analyze(AnalyzeArgs),
    /// Generate a synthetic labeled pattern as CSV.
    Simulate(SimulateArgs),
    /// Empirical size experiment; writes the experiment CSV.
    Size(ExperimentArgs),
    /// Empirical power experiment; writes the experiment CSV.
    Power(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NullArg {
    Csr,
    Rl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args)]
struct AnalyzeArgs {
    input: PathBuf,
    /// Null model for Monte Carlo p-values: CSR resimulation or random labeling.
    #[arg(long, value_enum, default_value = "csr")]
    null: NullArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Monte Carlo replicates; 0 reports asymptotic p-values only.
    #[arg(long, default_value_t = 0)]
    nmc: usize,
    /// Required when --nmc > 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of D,I,II,III,IV.
    #[arg(long, default_value = "D,I,III")]
    families: String,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// CSR resimulation window x0,y0,x1,y1 (default: bounding box of the data).
    #[arg(long)]
    region: Option<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PatternArg {
    Csr,
    Rl,
    Seg2,
    Seg3,
    Assoc2,
    Assoc3,
}

#[derive(Args)]
struct PatternArgs {
    #[arg(long, value_enum)]
    pattern: PatternArg,
    /// Segregation shift s.
    #[arg(long)]
    s: Option<f64>,
    /// Preset alternative level (1-3) for seg2/seg3/assoc2/assoc3.
    #[arg(long)]
    level: Option<u8>,
    /// RL preset case.
    #[arg(long, default_value_t = 1)]
    case: u8,
    /// Fixed association radius (assoc2).
    #[arg(long)]
    r: Option<f64>,
    /// Fixed association radii (assoc3).
    #[arg(long)]
    ry: Option<f64>,
    #[arg(long)]
    rz: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    pattern: PatternArgs,
    /// Comma-separated class sizes.
    #[arg(long)]
    sizes: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    TwoClass,
    ThreeClass,
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    Asy,
    Mc,
    Rand,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    pattern: PatternArgs,
    /// Class-size combinations, e.g. "50,50" or "10,10;30,30".
    #[arg(long, conflicts_with = "grid")]
    sizes: Option<String>,
    #[arg(long, value_enum)]
    grid: Option<GridArg>,
    /// Comma-separated test families.
    #[arg(long, default_value = "D,I,III")]
    tests: String,
    /// Targets such as cell(1,1), overall, ovr_cell(2), ovr_overall(1).
    /// Repeatable; default is every diagonal cell plus overall.
    #[arg(long = "target")]
    targets: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    nrep: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "asy")]
    route: RouteArg,
    /// Monte Carlo replicates per data set for the mc and rand routes.
    #[arg(long, default_value_t = 99)]
    nmc: usize,
    /// Redraw RL locations for every replicate.
    #[arg(long)]
    redraw: bool,
    /// Verdict thresholds from z_{1-alpha/2} instead of z_{1-alpha}.
    #[arg(long)]
    two_sided: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ArgumentConflict, msg).exit()
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|e| anyhow::anyhow!("invalid {what} {t:?}: {e}")))
        .collect()
}

fn parse_families(s: &str) -> Result<Vec<Family>> {
    parse_list(s, "family")
}

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    parse_list(s, "class size")
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn pattern_kind(args: &PatternArgs, m: usize) -> Result<PatternKind> {
    let level_or = |default: Option<PatternKind>, f: fn(u8) -> nnct::Result<PatternKind>| -> Result<PatternKind> {
        match (args.level, default) {
            (Some(l), None) => Ok(f(l)?),
            (None, Some(k)) => Ok(k),
            (Some(_), Some(_)) => bail!("give either a level or explicit parameters, not both"),
            (None, None) => bail!("pattern needs --level or explicit parameters"),
        }
    };
    Ok(match args.pattern {
        PatternArg::Csr => PatternKind::Csr,
        PatternArg::Rl => match m {
            2 => PatternKind::rl_two_class(args.case)?,
            3 => PatternKind::rl_three_class(args.case)?,
            _ => bail!("RL presets exist for two and three classes"),
        },
        PatternArg::Seg2 => level_or(args.s.map(|shift| PatternKind::Segregation2 { shift }), PatternKind::segregation2_level)?,
        PatternArg::Seg3 => level_or(args.s.map(|shift| PatternKind::Segregation3 { shift }), PatternKind::segregation3_level)?,
        PatternArg::Assoc2 => level_or(
            args.r.map(|r| PatternKind::Association2 { radius: RadiusRule::Fixed(r) }),
            PatternKind::association2_level,
        )?,
        PatternArg::Assoc3 => {
            let fixed = match (args.ry, args.rz) {
                (Some(ry), Some(rz)) => Some(PatternKind::Association3 {
                    ry: RadiusRule::Fixed(ry),
                    rz: RadiusRule::Fixed(rz),
                }),
                (None, None) => None,
                _ => bail!("assoc3 needs both --ry and --rz"),
            };
            level_or(fixed, PatternKind::association3_level)?
        }
    })
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    if args.nmc > 0 && args.seed.is_none() {
        usage_error("--seed is required when --nmc > 0");
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        usage_error("--alpha must lie in (0, 1)");
    }
    let families = parse_families(&args.families)?;
    let points = load_points(&args.input)?;
    let monte_carlo = if args.nmc > 0 {
        let mut cfg = McConfig::new(args.nmc, args.seed.expect("checked above"));
        if let Some(r) = &args.region {
            let v: Vec<f64> = parse_list(r, "region coordinate")?;
            let [x0, y0, x1, y1] = v[..] else { bail!("--region needs x0,y0,x1,y1") };
            cfg = cfg.with_region(Rect::new(x0, y0, x1, y1)?);
        }
        let null = match args.null {
            NullArg::Csr => NullModel::Csr,
            NullArg::Rl => NullModel::Rl,
        };
        Some((null, cfg))
    } else {
        None
    };
    let opts = AnalysisOptions {
        families,
        alpha: args.alpha,
        monte_carlo,
    };
    let report = AnalysisReport::analyze(&points, &opts)?;
    let mut out = open_output(args.output.as_deref())?;
    match args.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
        }
        Format::Table => out.write_all(report.render_table().as_bytes())?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let sizes = parse_sizes(&args.sizes)?;
    let kind = pattern_kind(&args.pattern, sizes.len())?;
    let points = generate(&PatternSpec::new(kind, sizes, args.seed))?;
    let mut out = open_output(args.output.as_deref())?;
    points.to_csv_writer(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs, power: bool) -> Result<()> {
    let combinations = match (&args.sizes, args.grid) {
        (Some(s), None) => s.split(';').map(parse_sizes).collect::<Result<Vec<_>>>()?,
        (None, Some(GridArg::TwoClass)) => two_class_grid(),
        (None, Some(GridArg::ThreeClass)) => three_class_grid(),
        (None, None) => usage_error("give --sizes or --grid"),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    };
    let m = combinations[0].len();
    if combinations.iter().any(|c| c.len() != m) {
        usage_error("all size combinations must have the same number of classes");
    }
    if power && args.pattern.pattern == PatternArg::Csr {
        eprintln!("note: power run under the CSR null measures size");
    }
    let kind = pattern_kind(&args.pattern, m)?;
    let families = parse_families(&args.tests)?;
    let targets: Vec<TestTarget> = if args.targets.is_empty() {
        (0..m).map(|i| TestTarget::Cell { row: i, col: i }).chain([TestTarget::Overall]).collect()
    } else {
        args.targets.iter().map(|t| t.parse()).collect::<nnct::Result<_>>()?
    };
    let tests = families
        .iter()
        .flat_map(|&f| targets.iter().map(move |&t| TestSelector::new(f, t)))
        .collect();
    let mut spec = ExperimentSpec::new(kind, combinations, tests, args.nrep, args.seed);
    spec.alpha = args.alpha;
    spec.redraw_locations = args.redraw;
    spec.two_sided_thresholds = args.two_sided;
    spec.route = match args.route {
        RouteArg::Asy => PValueRoute::Asymptotic,
        RouteArg::Mc => PValueRoute::MonteCarlo { n_mc: args.nmc },
        RouteArg::Rand => PValueRoute::Randomization { n_mc: args.nmc },
    };
    let result = run_experiment(&spec)?;
    for row in result.rows.iter().filter(|r| r.n_degenerate > 0) {
        eprintln!(
            "{:?} {} {}: {} of {} replicates degenerate (counted as non-rejections)",
            row.sizes, row.test.family, row.test.target, row.n_degenerate, row.n_rep
        );
    }
    let mut out = open_output(args.output.as_deref())?;
    result.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Size(a) => cmd_experiment(a, false),
        Command::Power(a) => cmd_experiment(a, true),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
