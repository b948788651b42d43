use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use plr_core::cbc::{cbc_construct, SweepMode};
use plr_core::discrepancy::{mc_mean_square_estimate, mean_square_criterion, warnock_l2sq};
use plr_core::scramble::DEFAULT_DEPTH;
use plr_core::sobol::{load_direction_table, sobol_points};
use plr_core::{find_irreducible, Gf2Poly, PointSet, Preset, RuleFile, WeightScheme};

mod tables;

#[derive(Parser)]
#[command(
    name = "plr",
    version,
    about = "Polynomial lattice rules with small mean square weighted L2 discrepancy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Smallest irreducible polynomial of degree m
    Irreducible {
        #[arg(long)]
        m: u32,
    },
    /// Build a generating vector by component-by-component search
    Construct(ConstructArgs),
    /// Write the points of a rule, or of a Sobol' net
    Points(PointsArgs),
    /// Squared weighted L2 discrepancy of a point set, or its scrambled mean by Monte Carlo
    Discrepancy(DiscrepancyArgs),
    /// Mean square weighted L2 discrepancy of a rule or digital point set
    Meansquare(MeansquareArgs),
    /// Compare the closed-form mean square discrepancy with a Monte Carlo estimate
    McVerify(McVerifyArgs),
    /// Reproduce the comparison tables
    Tables(tables::TablesArgs),
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long)]
    m: u32,
    #[arg(long)]
    s: usize,
    /// Preset name (unweighted, geo09, invsq) or weights JSON file
    #[arg(long)]
    weights: String,
    /// Modulus as 0x-prefixed hex; defaults to the smallest irreducible of degree m
    #[arg(long)]
    p: Option<Gf2Poly>,
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    mode: Mode,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub(crate) enum Mode {
    Naive,
    Fast,
    Auto,
}

impl From<Mode> for SweepMode {
    fn from(m: Mode) -> SweepMode {
        match m {
            Mode::Naive => SweepMode::Naive,
            Mode::Fast => SweepMode::Fast,
            Mode::Auto => SweepMode::Auto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PointFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct PointsArgs {
    #[arg(long, conflicts_with = "sobol")]
    rule: Option<PathBuf>,
    /// Sobol' points from a Joe–Kuo direction file (needs --dirs, --m, --s)
    #[arg(long, requires = "dirs")]
    sobol: bool,
    #[arg(long)]
    dirs: Option<PathBuf>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, value_enum, default_value_t = PointFormat::Json)]
    format: PointFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PointSource {
    /// Point set file (JSON, or CSV with --precision-bits)
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    precision_bits: Option<u32>,
}

#[derive(Args)]
struct DiscrepancyArgs {
    #[command(flatten)]
    source: PointSource,
    #[arg(long)]
    weights: String,
    /// Number of Owen scrambles; switches to the Monte Carlo estimator
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: u32,
}

#[derive(Args)]
struct MeansquareArgs {
    #[arg(long, conflicts_with = "points")]
    rule: Option<PathBuf>,
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    precision_bits: Option<u32>,
    /// Defaults to the weights recorded in the rule file
    #[arg(long)]
    weights: Option<String>,
}

#[derive(Args)]
struct McVerifyArgs {
    #[arg(long)]
    rule: PathBuf,
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, default_value_t = 2000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: u32,
}

/// Preset name or weights file, sized to `s` coordinates. Product weights
/// with more coordinates than needed are truncated.
pub(crate) fn load_weights(spec: &str, s: usize) -> Result<WeightScheme> {
    if let Ok(preset) = spec.parse::<Preset>() {
        return Ok(WeightScheme::preset(preset, s)?);
    }
    let w = WeightScheme::load(Path::new(spec)).with_context(|| format!("reading weights '{spec}'"))?;
    if w.is_product() && w.dim() > s {
        return Ok(w.truncate(s)?);
    }
    if w.dim() != s {
        bail!("weights '{spec}' cover {} coordinates, the points have {s}", w.dim());
    }
    Ok(w)
}

fn load_points(path: &Path, precision_bits: Option<u32>) -> Result<PointSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let ps = if is_csv {
        let bits = precision_bits.ok_or_else(|| anyhow!("CSV point files need --precision-bits"))?;
        PointSet::from_csv(&text, bits)?
    } else {
        PointSet::from_json(&text)?
    };
    Ok(ps)
}

fn load_rule(path: &Path) -> Result<RuleFile> {
    RuleFile::load(path).with_context(|| format!("reading rule {}", path.display()))
}

fn rule_weights(file: &RuleFile, explicit: Option<&str>) -> Result<WeightScheme> {
    let spec = explicit
        .or(file.weights.as_deref())
        .ok_or_else(|| anyhow!("the rule file records no weights; pass --weights"))?;
    load_weights(spec, file.q.len())
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn construct(args: ConstructArgs) -> Result<Value> {
    let w = load_weights(&args.weights, args.s)?;
    let outcome = cbc_construct(args.m, &w, args.p, args.mode.into())?;
    let mut file = outcome.rule.to_file();
    file.weights = Some(args.weights.clone());
    file.criteria = Some(outcome.criteria);
    file.version = Some(env!("CARGO_PKG_VERSION").to_string());
    if let Some(out) = &args.out {
        fs::write(out, file.to_json()?).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(serde_json::to_value(&file)?)
}

fn points(args: PointsArgs) -> Result<Option<Value>> {
    let ps = if args.sobol {
        let dirs = args.dirs.as_deref().expect("clap enforces --dirs");
        let m = args.m.ok_or_else(|| anyhow!("--sobol needs --m"))?;
        let s = args.s.ok_or_else(|| anyhow!("--sobol needs --s"))?;
        sobol_points(&load_direction_table(dirs)?, m, s)?
    } else {
        let rule = args.rule.ok_or_else(|| anyhow!("pass --rule FILE or --sobol"))?;
        load_rule(&rule)?.to_rule()?.generate_points()
    };
    let text = match args.format {
        PointFormat::Json => ps.to_json()?,
        PointFormat::Csv => ps.to_csv(),
    };
    match args.out {
        Some(out) => {
            fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            Ok(Some(json!({
                "out": out.display().to_string(),
                "n_points": ps.n_points(),
                "dim": ps.dim(),
                "precision_bits": ps.precision_bits(),
            })))
        }
        None => {
            write_or_print(None, text.trim_end())?;
            Ok(None)
        }
    }
}

fn discrepancy(args: DiscrepancyArgs) -> Result<Value> {
    let ps = load_points(&args.source.points, args.source.precision_bits)?;
    let w = load_weights(&args.weights, ps.dim())?;
    Ok(match args.mc {
        None => json!({ "l2sq": warnock_l2sq(&ps, &w)? }),
        Some(r) => {
            let est = mc_mean_square_estimate(&ps, &w, r, args.seed, args.depth)?;
            json!({
                "mean": est.mean,
                "stderr": est.stderr,
                "replicates": est.replicates,
                "seed": args.seed,
                "depth": args.depth,
            })
        }
    })
}

fn meansquare(args: MeansquareArgs) -> Result<Value> {
    let (ps, w) = match (&args.rule, &args.points) {
        (Some(rule), _) => {
            let file = load_rule(rule)?;
            let w = rule_weights(&file, args.weights.as_deref())?;
            (file.to_rule()?.generate_points(), w)
        }
        (None, Some(points)) => {
            let ps = load_points(points, args.precision_bits)?;
            let spec = args
                .weights
                .as_deref()
                .ok_or_else(|| anyhow!("--points needs --weights"))?;
            let w = load_weights(spec, ps.dim())?;
            (ps, w)
        }
        (None, None) => bail!("pass --rule FILE or --points FILE"),
    };
    Ok(json!({ "B": mean_square_criterion(&ps, &w)? }))
}

fn mc_verify(args: McVerifyArgs) -> Result<Value> {
    let file = load_rule(&args.rule)?;
    let w = rule_weights(&file, args.weights.as_deref())?;
    let ps = file.to_rule()?.generate_points();
    let b = mean_square_criterion(&ps, &w)?;
    let est = mc_mean_square_estimate(&ps, &w, args.replicates, args.seed, args.depth)?;
    let z = (est.mean - b).abs() / est.stderr;
    Ok(json!({
        "B": b,
        "mean": est.mean,
        "stderr": est.stderr,
        "z": z,
        "within_4_stderr": z < 4.0,
        "replicates": est.replicates,
        "seed": args.seed,
        "depth": args.depth,
    }))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PLR_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow!("PLR_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Option<Value>> {
    configure_threads()?;
    Ok(match cli.command {
        Command::Irreducible { m } => Some(json!({ "m": m, "p": find_irreducible(m)?.to_string() })),
        Command::Construct(a) => Some(construct(a)?),
        Command::Points(a) => points(a)?,
        Command::Discrepancy(a) => Some(discrepancy(a)?),
        Command::Meansquare(a) => Some(meansquare(a)?),
        Command::McVerify(a) => Some(mc_verify(a)?),
        Command::Tables(a) => tables::run(a)?,
    })
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end().to_string(), 2),
    };
    match run(cli) {
        Ok(Some(v)) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("values serialize"));
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.downcast_ref::<plr_core::Error>() {
                Some(plr_core::Error::Parse { .. }) => "parse",
                Some(plr_core::Error::BudgetExceeded(_)) => "budget",
                Some(plr_core::Error::Io(_)) => "io",
                Some(_) => "invalid",
                None if e.downcast_ref::<std::io::Error>().is_some() => "io",
                None => "error",
            };
            fail(kind, format!("{e:#}"), 1)
        }
    }
}
