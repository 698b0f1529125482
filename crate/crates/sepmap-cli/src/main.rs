//! `sepscan`: single-state separability checks, parameter-grid scans,
//! map-decomposition inspection, and tailor-made witness construction.
//!
//! Exit codes: 0 = all criteria passed (nothing detected), 1 = at least one
//! criterion violated (entanglement detected), 2 = error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use sepmap::criteria::{self, CriterionVerdict};
use sepmap::maps::choi_matrix;
use sepmap::matrix::{operator_norm, Subsystem};

use sepmap_cli::config::FileConfig;
use sepmap_cli::scan::{
    build_decomposition, emit_outputs, run_scan, state_from_spec,
    write_fraction_matrix, CriterionSpec, DecKind, FamilyGrid, MapKind, OutputFormat, ScanConfig,
};

#[derive(Parser)]
#[command(
    name = "sepscan",
    version,
    about = "Positive-map separability criteria: checks, scans, decompositions, witnesses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate criteria on a single state.
    Check(CheckArgs),
    /// Scan a state family over a parameter grid and write report files.
    Scan(ScanArgs),
    /// Print (xi, eta) and the Kraus lengths of a map decomposition.
    Decompose(DecomposeArgs),
    /// Build the tailor-made witness for a state and print its series.
    Witness(WitnessArgs),
}

/// Flags shared by the state-evaluating subcommands. Any flag may instead be
/// given in a `key = value` config file; explicit flags win.
#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Positive map: transposition, bh, reduction, choi:K, wh, epsilon.
    #[arg(long)]
    map: Option<String>,
    /// Decomposition: builtin, canonical, minimal, shiftK, preset1..3.
    #[arg(long)]
    dec: Option<String>,
    /// Subsystem the map acts on: A or B.
    #[arg(long)]
    side: Option<String>,
    /// Criteria, separated by ';' (e.g. "ppt;moment:2;theorem2_i:1,2").
    /// Criteria named without parameters draw them from --alpha/--beta.
    #[arg(long)]
    criterion: Option<String>,
    /// Comma-separated alpha grid for criteria without inline parameters.
    #[arg(long)]
    alpha: Option<String>,
    /// Comma-separated beta grid for criteria without inline parameters.
    #[arg(long)]
    beta: Option<String>,
    /// Violation tolerance on margins.
    #[arg(long)]
    tol: Option<f64>,
    /// Flat key = value config file providing defaults for the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// State literal (iso:d:p, rot:p:q:r:s, zh:a:q, sigma:p) or matrix file.
    #[arg(long)]
    state: String,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ScanArgs {
    /// Family: iso:d, rot:p, zh, sigma.
    #[arg(long)]
    family: Option<String>,
    /// Grid: start:stop:step for sweeps (iso, sigma), N for NxN grids
    /// (rot, zh).
    #[arg(long)]
    grid: Option<String>,
    /// Reference criterion for reference_fraction (default ppt).
    #[arg(long)]
    reference: Option<String>,
    /// RNG seed recorded in the report.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = library default); the report is identical for
    /// any value.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Records format: csv or json.
    #[arg(long)]
    format: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Positive map name (as in check).
    #[arg(long)]
    map: String,
    /// Local dimension the map acts on.
    #[arg(long)]
    dim: usize,
    /// Decomposition selector (default builtin).
    #[arg(long, default_value = "builtin")]
    dec: String,
}

#[derive(Args)]
struct WitnessArgs {
    /// State literal or matrix file (as in check).
    #[arg(long)]
    state: String,
    /// Optional CSV path for the approximation series.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

/// Die quietly when the consumer closes the pipe (`sepscan ... | head`),
/// like other unix filters, instead of panicking on EPIPE.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Check(args) => run_check(args),
        Command::Scan(args) => run_scan_cmd(args),
        Command::Decompose(args) => run_decompose(args),
        Command::Witness(args) => run_witness(args),
    }
}

/// Resolved common settings after the flag/file merge.
struct Settings {
    file: FileConfig,
    map: MapKind,
    dec_raw: String,
    side: Subsystem,
    criteria_raw: Option<String>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    tol: f64,
}

impl Settings {
    fn resolve(common: &CommonArgs) -> anyhow::Result<Self> {
        let file = match &common.config {
            Some(path) => FileConfig::load(path)
                .with_context(|| format!("config file {}", path.display()))?,
            None => FileConfig::default(),
        };
        let merged = |cli: &Option<String>, key: &str| -> Option<String> {
            cli.clone().or_else(|| file.get(key).map(String::from))
        };
        let map = MapKind::parse(
            &merged(&common.map, "map").unwrap_or_else(|| "transposition".to_string()),
        )?;
        let dec_raw = merged(&common.dec, "dec").unwrap_or_else(|| "builtin".to_string());
        let side: Subsystem = merged(&common.side, "side")
            .unwrap_or_else(|| "B".to_string())
            .parse()?;
        let criteria_raw = merged(&common.criterion, "criterion");
        let alphas = parse_f64_list(&merged(&common.alpha, "alpha").unwrap_or_default())?;
        let betas = parse_f64_list(&merged(&common.beta, "beta").unwrap_or_default())?;
        let tol = match common.tol {
            Some(t) => t,
            None => match file.get("tol") {
                Some(t) => t.parse::<f64>().context("tol in config file")?,
                None => criteria::VERDICT_TOL,
            },
        };
        if tol < 0.0 || !tol.is_finite() {
            bail!("tol must be a finite non-negative number, got {tol}");
        }
        Ok(Self {
            file,
            map,
            dec_raw,
            side,
            criteria_raw,
            alphas,
            betas,
            tol,
        })
    }

    fn decs(&self) -> anyhow::Result<Vec<(String, DecKind)>> {
        self.dec_raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| Ok((s.to_string(), DecKind::parse(s)?)))
            .collect()
    }

    fn criteria(&self, default: &str) -> anyhow::Result<Vec<CriterionSpec>> {
        let raw = self.criteria_raw.as_deref().unwrap_or(default);
        expand_criteria(raw, &self.alphas, &self.betas)
    }
}

fn parse_f64_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().with_context(|| format!("bad number '{p}'")))
        .collect()
}

const ONE_PARAM: &[&str] = &[
    "moment",
    "renyi",
    "tsallis",
    "channel_renyi_alpha",
    "channel_renyi",
    "channel_alpha_free",
    "aeq1",
    "beq1",
];
const TWO_PARAM: &[&str] = &["theorem2_i", "theorem2_ii"];

/// Expands a `;`-separated criterion list; names given without inline
/// parameters are instantiated over the alpha (and beta) grids.
fn expand_criteria(
    raw: &str,
    alphas: &[f64],
    betas: &[f64],
) -> anyhow::Result<Vec<CriterionSpec>> {
    let mut out = Vec::new();
    for item in raw
        .split([';', ' '])
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        if item.contains(':') {
            out.push(CriterionSpec::parse(item)?);
        } else if TWO_PARAM.contains(&item) {
            if alphas.is_empty() || betas.is_empty() {
                bail!("criterion '{item}' needs --alpha and --beta grids (or inline a,b)");
            }
            for &a in alphas {
                for &b in betas {
                    out.push(CriterionSpec::parse(&format!("{item}:{a},{b}"))?);
                }
            }
        } else if ONE_PARAM.contains(&item) {
            if alphas.is_empty() {
                bail!("criterion '{item}' needs an --alpha grid (or an inline value)");
            }
            for &a in alphas {
                out.push(CriterionSpec::parse(&format!("{item}:{a}"))?);
            }
        } else {
            out.push(CriterionSpec::parse(item)?);
        }
    }
    if out.is_empty() {
        bail!("criteria list is empty");
    }
    Ok(out)
}

fn verdict_line(key: &str, v: &CriterionVerdict) -> String {
    let mut flags = Vec::new();
    if v.weak_regime {
        flags.push("weak regime");
    }
    if v.deferred_to_map {
        flags.push("deferred to map");
    }
    if v.inconclusive {
        flags.push("inconclusive");
    }
    let status = if v.passed { "pass" } else { "VIOLATED" };
    let suffix = if flags.is_empty() {
        String::new()
    } else {
        format!(" ({})", flags.join(", "))
    };
    let note = v
        .note
        .as_deref()
        .map(|n| format!("  [{n}]"))
        .unwrap_or_default();
    format!(
        "{key:<42} side {}  margin {:>+.6e}  {status}{suffix}{note}",
        v.side, v.margin
    )
}

fn run_check(args: CheckArgs) -> anyhow::Result<ExitCode> {
    let settings = Settings::resolve(&args.common)?;
    let state_spec = args
        .common
        .config
        .as_ref()
        .and_then(|_| settings.file.get("state").map(String::from))
        .filter(|_| args.state.is_empty())
        .unwrap_or_else(|| args.state.clone());
    let rho = state_from_spec(&state_spec)?;
    let criteria_list = settings.criteria("positive_map;ppt")?;
    let decs = settings.decs()?;

    println!(
        "state {} ({} x {}), side {}, tol {:.1e}",
        state_spec,
        rho.d_a(),
        rho.d_b(),
        settings.side,
        settings.tol
    );
    let mut violated = false;
    for (label, deck) in &decs {
        let dec = build_decomposition(settings.map, *deck, rho.dim_of(settings.side))?;
        if decs.len() > 1 {
            println!("-- decomposition {label}");
        }
        for spec in &criteria_list {
            let verdicts = spec.evaluate(&rho, &dec, settings.side, settings.tol)?;
            for (key, v) in spec.keys().iter().zip(&verdicts) {
                println!("{}", verdict_line(key, v));
                violated |= !v.passed;
            }
        }
    }
    Ok(ExitCode::from(u8::from(violated)))
}

fn parse_family_grid(family: &str, grid: Option<&str>) -> anyhow::Result<FamilyGrid> {
    let parts: Vec<&str> = family.split(':').collect();
    let sweep = |grid: Option<&str>| -> anyhow::Result<(f64, f64, f64)> {
        let g = grid.unwrap_or("0:1:0.001");
        let p: Vec<&str> = g.split(':').collect();
        if p.len() != 3 {
            bail!("sweep grid must be start:stop:step, got '{g}'");
        }
        Ok((p[0].parse()?, p[1].parse()?, p[2].parse()?))
    };
    let square = |grid: Option<&str>, default: usize| -> anyhow::Result<usize> {
        Ok(match grid {
            Some(g) => g.parse().with_context(|| format!("grid size '{g}'"))?,
            None => default,
        })
    };
    match parts.as_slice() {
        ["iso", d] => {
            let (start, stop, step) = sweep(grid)?;
            Ok(FamilyGrid::Isotropic {
                d: d.parse().context("isotropic dimension")?,
                start,
                stop,
                step,
            })
        }
        ["rot", p] => Ok(FamilyGrid::RotTriangle {
            p: p.parse().context("rot p")?,
            n: square(grid, 200)?,
        }),
        ["zh"] => Ok(FamilyGrid::TwoQubit { n: square(grid, 99)? }),
        ["sigma"] => {
            let (start, stop, step) = sweep(grid)?;
            Ok(FamilyGrid::SigmaLine { start, stop, step })
        }
        _ => bail!("unknown family '{family}' (iso:d, rot:p, zh, sigma)"),
    }
}

fn sanitize(s: &str) -> String {
    s.replace([':', ',', '/'], "-")
}

fn run_scan_cmd(args: ScanArgs) -> anyhow::Result<ExitCode> {
    let settings = Settings::resolve(&args.common)?;
    let merged = |cli: &Option<String>, key: &str| -> Option<String> {
        cli.clone().or_else(|| settings.file.get(key).map(String::from))
    };
    let family_raw = merged(&args.family, "family")
        .ok_or_else(|| anyhow::anyhow!("scan needs --family (iso:d, rot:p, zh, sigma)"))?;
    let grid = merged(&args.grid, "grid");
    let family = parse_family_grid(&family_raw, grid.as_deref())?;
    let reference =
        CriterionSpec::parse(&merged(&args.reference, "reference").unwrap_or_else(|| "ppt".into()))?;
    let seed = match args.seed {
        Some(s) => s,
        None => settings
            .file
            .get("seed")
            .map(|s| s.parse::<u64>().context("seed in config file"))
            .transpose()?
            .unwrap_or(0),
    };
    let workers = match args.workers {
        Some(w) => w,
        None => settings
            .file
            .get("workers")
            .map(|s| s.parse::<usize>().context("workers in config file"))
            .transpose()?
            .unwrap_or(0),
    };
    let out_dir = args
        .out
        .or_else(|| settings.file.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sepscan_out"));
    let format = OutputFormat::parse(
        &merged(&args.format, "format").unwrap_or_else(|| "csv".to_string()),
    )?;
    let criteria_list = settings.criteria("positive_map;ppt")?;
    let decs = settings.decs()?;

    let mut any_detection = false;
    let mut labelled_reports = Vec::new();
    for (label, deck) in &decs {
        let mut cfg = ScanConfig::new(
            family.clone(),
            settings.map,
            *deck,
            settings.side,
            criteria_list.clone(),
        );
        cfg.reference = reference.clone();
        cfg.tolerance = settings.tol;
        cfg.seed = seed;
        cfg.workers = workers;
        let report = run_scan(&cfg)?;

        println!("scan: {}", report.config_summary);
        println!(
            "points: {} evaluated, {} infeasible skipped; reference {} detected {}",
            report.records.len(),
            report.skipped_infeasible,
            report.reference_key,
            report.reference_detected
        );
        for key in &report.criterion_keys {
            let f = &report.fractions[key];
            println!(
                "  {key:<42} detected {:>6}/{:<6} fraction {:.6}  ref_fraction {:.6}",
                f.detected, f.evaluated, f.detection_fraction, f.reference_fraction
            );
            any_detection |= f.detected > 0;
        }
        let base = format!(
            "{}_{}_{}_{}",
            sanitize(&family_raw),
            sanitize(&format!("{:?}", settings.map).to_lowercase()),
            sanitize(label),
            settings.side
        );
        let written = emit_outputs(&report, &out_dir, &base, format)?;
        for path in &written {
            println!("wrote {}", path.display());
        }
        labelled_reports.push((label.clone(), report));
    }

    if labelled_reports.len() > 1 {
        let path = out_dir.join(format!(
            "{}_{}_matrix.csv",
            sanitize(&family_raw),
            sanitize(&format!("{:?}", settings.map).to_lowercase())
        ));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        let refs: Vec<(String, &sepmap_cli::scan::ScanReport)> = labelled_reports
            .iter()
            .map(|(l, r)| (l.clone(), r))
            .collect();
        write_fraction_matrix(&refs, &mut f)?;
        f.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::from(u8::from(any_detection)))
}

fn run_decompose(args: DecomposeArgs) -> anyhow::Result<ExitCode> {
    let map = MapKind::parse(&args.map)?;
    let deck = DecKind::parse(&args.dec)?;
    let dec = build_decomposition(map, deck, args.dim)?;
    println!("map {} (d = {}, dec {})", dec.name(), dec.dim(), args.dec);
    match dec.trace_form() {
        Some(tf) => {
            println!("xi = {}", tf.xi);
            println!("eta = {}", tf.eta);
        }
        None => println!("trace form: not available for this decomposition"),
    }
    println!("kappa1 = {}", dec.lambda1().kappa());
    println!("kappa2 = {}", dec.lambda2().kappa());
    let choi = choi_matrix(&dec);
    println!("choi norm = {:.6}", operator_norm(&choi));
    Ok(ExitCode::SUCCESS)
}

fn run_witness(args: WitnessArgs) -> anyhow::Result<ExitCode> {
    let settings = Settings::resolve(&args.common)?;
    let rho = state_from_spec(&args.state)?;
    let decs = settings.decs()?;
    if decs.len() != 1 {
        bail!("witness takes exactly one decomposition");
    }
    let dec = build_decomposition(settings.map, decs[0].1, rho.dim_of(settings.side))?;
    let betas = if settings.betas.is_empty() {
        vec![1.0, 2.0, 3.0, 4.0, 5.0]
    } else {
        settings.betas.clone()
    };
    let report =
        criteria::tailor_made_witness(&rho, &dec, settings.side, &betas, settings.tol)?;
    println!(
        "witness on {} ({} x {}), side {}",
        args.state,
        rho.d_a(),
        rho.d_b(),
        report.side
    );
    println!(
        "lambda_minus = {:+.9e} (multiplicity {}), detected = {}",
        report.lambda_minus, report.multiplicity, report.detected
    );
    println!("mean value <W> = {:+.9e}", report.mean_value);
    println!("{:<8} {:<24} normalized", "beta", "series");
    for ((b, raw), (_, norm)) in report
        .approximation_series
        .iter()
        .zip(&report.normalized_series)
    {
        println!("{b:<8} {raw:<24.12e} {norm:.12e}");
    }
    if let Some(path) = &args.out {
        write_witness_csv(path, &report)?;
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::from(u8::from(report.detected)))
}

fn write_witness_csv(path: &Path, report: &criteria::WitnessReport) -> anyhow::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# sepscan witness series schema v1")?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["beta", "series", "normalized"])?;
    for ((b, raw), (_, norm)) in report
        .approximation_series
        .iter()
        .zip(&report.normalized_series)
    {
        wtr.write_record(&[format!("{b}"), format!("{raw:.12e}"), format!("{norm:.12e}")])?;
    }
    wtr.flush()?;
    Ok(())
}
