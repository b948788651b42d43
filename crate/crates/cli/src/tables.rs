use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use plr_core::cbc::cbc_construct_product;
use plr_core::discrepancy::mean_square_criterion;
use plr_core::sobol::{sobol_points, DirectionTable};
use plr_core::{find_irreducible, Preset};

use crate::Mode;

const MAX_TABLE_M: u32 = 30;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum Generators {
    Plr,
    Sobol,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
pub(crate) enum TableFormat {
    Csv,
    Json,
    Markdown,
}

#[derive(Args)]
pub(crate) struct TablesArgs {
    #[arg(long)]
    preset: Preset,
    #[arg(long, default_value_t = 4)]
    m_min: u32,
    #[arg(long, default_value_t = 15)]
    m_max: u32,
    /// Comma-separated dimensions
    #[arg(long, value_delimiter = ',', default_value = "1,5,50,100")]
    s: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Generators::Both)]
    generators: Generators,
    #[arg(long, value_enum, default_value_t = TableFormat::Markdown)]
    format: TableFormat,
    /// Joe–Kuo direction-number file, required for Sobol' columns
    #[arg(long)]
    dirs: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    mode: Mode,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Three significant digits with a signed two-digit exponent, e.g. `6.51E-04`.
pub(crate) fn sci3(x: f64) -> String {
    let raw = format!("{x:.2E}");
    let (mantissa, exp) = raw.split_once('E').expect("E format has an exponent");
    let exp: i32 = exp.parse().expect("E format exponent is an integer");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}E{sign}{:02}", exp.abs())
}

struct Column {
    s: usize,
    generator: &'static str,
}

struct Row {
    m: u32,
    p: String,
    values: Vec<f64>,
}

pub(crate) fn run(args: TablesArgs) -> Result<Option<Value>> {
    if args.m_min == 0 || args.m_min > args.m_max || args.m_max > MAX_TABLE_M {
        bail!(
            "m range {}..={} must lie within 1..={MAX_TABLE_M}",
            args.m_min,
            args.m_max
        );
    }
    if args.s.is_empty() || args.s.contains(&0) {
        bail!("--s needs a non-empty list of positive dimensions");
    }
    let want_plr = args.generators != Generators::Sobol;
    let want_sobol = args.generators != Generators::Plr;

    let mut directions = None;
    if want_sobol {
        let Some(path) = args.dirs.as_ref() else {
            bail!("Sobol' columns need --dirs PATH (a Joe–Kuo direction-number file)");
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        let table = DirectionTable::parse(&text, &path.display().to_string())?;
        directions = Some((path.display().to_string(), digest, table));
    }

    let mut columns = Vec::new();
    for &s in &args.s {
        if want_sobol {
            columns.push(Column { s, generator: "sobol" });
        }
        if want_plr {
            columns.push(Column { s, generator: "plr" });
        }
    }
    let s_max = *args.s.iter().max().expect("non-empty");
    let gammas: Vec<f64> = (1..=s_max).map(|j| args.preset.gamma(j)).collect();

    let rows = (args.m_min..=args.m_max)
        .into_par_iter()
        .map(|m| -> Result<Row> {
            let p = find_irreducible(m)?;
            // one extensible construction per m serves every s column
            let plr = if want_plr {
                Some(cbc_construct_product(m, &gammas, Some(p), args.mode.into())?.criteria)
            } else {
                None
            };
            let values = columns
                .par_iter()
                .map(|c| -> Result<f64> {
                    match (c.generator, &plr, &directions) {
                        ("plr", Some(crit), _) => Ok(crit[c.s - 1]),
                        (_, _, Some((_, _, table))) => {
                            let ps = sobol_points(table, m, c.s)?;
                            Ok(mean_square_criterion(
                                &ps,
                                &plr_core::WeightScheme::product(gammas[..c.s].to_vec())?,
                            )?)
                        }
                        _ => unreachable!("columns follow the requested generators"),
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Row {
                m,
                p: p.to_string(),
                values,
            })
        })
        .collect::<Result<Vec<Row>>>()?;

    let dirs_meta = directions
        .as_ref()
        .map(|(path, digest, _)| (path.as_str(), digest.as_str()));
    let text = match args.format {
        TableFormat::Json => serde_json::to_string_pretty(&to_json(&args, &columns, &rows, dirs_meta))?,
        TableFormat::Csv => to_csv(&args, &columns, &rows, dirs_meta),
        TableFormat::Markdown => to_markdown(&args, &columns, &rows, dirs_meta),
    };
    match &args.out {
        Some(out) => fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?,
        None => println!("{}", text.trim_end()),
    }
    Ok(None)
}

fn to_json(args: &TablesArgs, columns: &[Column], rows: &[Row], dirs: Option<(&str, &str)>) -> Value {
    json!({
        "preset": args.preset.name(),
        "p_selection": "smallest irreducible of degree m",
        "directions": dirs.map(|(path, sha)| json!({ "path": path, "sha256": sha })),
        "columns": columns.iter().map(|c| json!({ "s": c.s, "generator": c.generator })).collect::<Vec<_>>(),
        "rows": rows.iter().map(|r| json!({
            "m": r.m,
            "p": r.p,
            "values": r.values.iter().map(|&v| sci3(v)).collect::<Vec<_>>(),
            "raw": r.values,
        })).collect::<Vec<_>>(),
    })
}

fn header_comment(args: &TablesArgs, dirs: Option<(&str, &str)>) -> String {
    let mut h = format!("preset={} p=smallest-irreducible", args.preset.name());
    if let Some((path, sha)) = dirs {
        let _ = write!(h, " directions={path} sha256={sha}");
    }
    h
}

fn to_csv(args: &TablesArgs, columns: &[Column], rows: &[Row], dirs: Option<(&str, &str)>) -> String {
    let mut out = format!("# {}\nm,p", header_comment(args, dirs));
    for c in columns {
        let _ = write!(out, ",s{}_{}", c.s, c.generator);
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.m, r.p);
        for &v in &r.values {
            let _ = write!(out, ",{}", sci3(v));
        }
        out.push('\n');
    }
    out
}

fn to_markdown(args: &TablesArgs, columns: &[Column], rows: &[Row], dirs: Option<(&str, &str)>) -> String {
    let mut out = format!("<!-- {} -->\n\n| m | p |", header_comment(args, dirs));
    for c in columns {
        let _ = write!(out, " s={} {} |", c.s, c.generator);
    }
    out.push_str("\n|---|---|");
    for _ in columns {
        out.push_str("---|");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "| {} | {} |", r.m, r.p);
        for &v in &r.values {
            let _ = write!(out, " {} |", sci3(v));
        }
        out.push('\n');
    }
    out
}
