//! `equidist`: evaluate equi-affine distances, write fields, extract level
//! sets and run the scripted experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use equidist::estimate::{estimate_mc_with, estimate_quadrature_with, field_with, Normalization, Sampled};
use equidist::experiments::{self, FieldRun};
use equidist::geometry::{ConvexDomain, Point2};
use equidist::io::{field_from_csv, field_to_csv, levels_to_svg, to_json};
use equidist::levels::analyze_levels;
use equidist::moduli::ModuliPoint;
use equidist::tropical::{self, TropicalReport};
use equidist::Error;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "equidist", version, about = "Equi-affine distance functions of planar convex domains")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "EQUIDIST_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the distance at one point.
    Eval(EvalArgs),
    /// Tropical distance series of one lattice at one point.
    Tropical(TropicalArgs),
    /// Monte Carlo field on a grid, written as CSV.
    Field(FieldArgs),
    /// Level curves and their shape metrics from a field CSV.
    Levels(LevelsArgs),
    /// Run a scripted experiment and write its report.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Preset (square, disk, quadrant), inline JSON or a JSON file.
    #[arg(long)]
    domain: String,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    point: (f64, f64),
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Integrator::Mc)]
    integrator: Integrator,
    /// Cusp truncation height for the quadrature integrator.
    #[arg(long, default_value_t = 1000.0)]
    ymax: f64,
    /// Quadrature nodes in x, y and angle.
    #[arg(long, value_parser = parse_triple, default_value = "64,2048,16")]
    quad_nodes: (usize, usize, usize),
    /// Normalize by the total mass of the fundamental domain instead of
    /// averaging over a probability measure.
    #[arg(long)]
    literal_def: bool,
}

#[derive(Args, Debug)]
struct TropicalArgs {
    #[arg(long)]
    domain: String,
    /// Moduli coordinates `x,y,theta`.
    #[arg(long, value_parser = parse_triple_f64, allow_hyphen_values = true)]
    moduli: (f64, f64, f64),
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    point: (f64, f64),
}

#[derive(Args, Debug)]
struct FieldArgs {
    #[arg(long)]
    domain: String,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    /// `xmin,xmax,ymin,ymax`; defaults to the bounding box of a bounded
    /// domain.
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    bbox: Option<(f64, f64, f64, f64)>,
    /// `NXxNY`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    literal_def: bool,
    /// 101×101 nodes and 10⁴ samples unless given explicitly.
    #[arg(long)]
    quick: bool,
}

#[derive(Args, Debug)]
struct LevelsArgs {
    #[arg(long)]
    field: PathBuf,
    /// Comma-separated levels.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    levels: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    /// Domain of the hyperbola and ellipse-probe experiments.
    #[arg(long)]
    domain: Option<String>,
    /// Levels of the hyperbola experiment.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    levels: Option<Vec<f64>>,
    /// Number of levels of the ellipse probe.
    #[arg(long, default_value_t = 9)]
    n_levels: usize,
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    bbox: Option<(f64, f64, f64, f64)>,
    /// Random cases of the invariance suite.
    #[arg(long, default_value_t = 100)]
    cases: usize,
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Integrator {
    Mc,
    Quad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExperimentName {
    DiskCheck,
    QuadrantCheck,
    Hyperbola,
    EllipseProbe,
    Invariance,
}

fn parse_reals(s: &str, count: Option<usize>) -> Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(k) = count {
        if v.len() != k {
            return Err(format!("expected {k} comma-separated numbers, got {}", v.len()));
        }
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(format!("not a finite number: {bad}"));
    }
    Ok(v)
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_reals(s, Some(2))?;
    Ok((v[0], v[1]))
}

fn parse_triple_f64(s: &str) -> Result<(f64, f64, f64), String> {
    let v = parse_reals(s, Some(3))?;
    Ok((v[0], v[1], v[2]))
}

fn parse_triple(s: &str) -> Result<(usize, usize, usize), String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("not a count: {t:?}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected three comma-separated counts".into()),
    }
}

fn parse_bbox(s: &str) -> Result<(f64, f64, f64, f64), String> {
    let v = parse_reals(s, Some(4))?;
    if !(v[0] < v[1] && v[2] < v[3]) {
        return Err("bounding box needs xmin < xmax and ymin < ymax".into());
    }
    Ok((v[0], v[1], v[2], v[3]))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("grid must look like NXxNY")?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("not a count: {t:?}"));
    Ok((n(a)?, n(b)?))
}

/// Input that is wrong before any computation starts.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn load_domain(arg: &str) -> anyhow::Result<ConvexDomain> {
    if let Some(d) = ConvexDomain::preset(arg) {
        return Ok(d);
    }
    if arg == "truncated-quadrant" {
        return Ok(experiments::truncated_quadrant());
    }
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else if Path::new(arg).is_file() {
        std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?
    } else {
        return Err(usage(format!(
            "unknown domain {arg:?}: expected square, disk, quadrant, inline JSON or a JSON file"
        )));
    };
    ConvexDomain::from_json(&text).map_err(|e| usage(format!("domain: {e}")))
}

fn normalization(literal: bool) -> Normalization {
    if literal {
        Normalization::Literal
    } else {
        Normalization::Holder
    }
}

fn with_schema(v: Value) -> Value {
    match v {
        Value::Object(mut m) => {
            m.insert("schema".into(), json!(1));
            Value::Object(m)
        }
        other => other,
    }
}

fn write_output(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run_eval(a: EvalArgs) -> anyhow::Result<String> {
    let domain = load_domain(&a.domain)?;
    let p = Point2::new(a.point.0, a.point.1);
    if !(a.h > 0.0) || !a.h.is_finite() {
        return Err(usage("--h must be positive"));
    }
    let norm = normalization(a.literal_def);
    let est = match a.integrator {
        Integrator::Mc => {
            if a.samples == 0 {
                return Err(usage("--samples must be positive"));
            }
            estimate_mc_with(&domain, p, a.h, a.samples, &Sampled { seed: a.seed }, norm)?
        }
        Integrator::Quad => estimate_quadrature_with(&domain, p, a.h, a.ymax, a.quad_nodes, norm)?,
    };
    Ok(to_json(&with_schema(serde_json::to_value(est)?)))
}

fn run_tropical(a: TropicalArgs) -> anyhow::Result<String> {
    let domain = load_domain(&a.domain)?;
    let (x, y, theta) = a.moduli;
    let mp = ModuliPoint::new(x, y, theta).map_err(|e| usage(format!("moduli: {e}")))?;
    let v = tropical::eval(&domain, &mp.lattice(), Point2::new(a.point.0, a.point.1))?;
    Ok(to_json(&with_schema(serde_json::to_value(TropicalReport::from(&v))?)))
}

fn run_field(a: FieldArgs) -> anyhow::Result<String> {
    let domain = load_domain(&a.domain)?;
    let bbox = match (a.bbox, domain.bounding_box()) {
        (Some(b), _) => b,
        (None, Some(b)) => b,
        (None, None) => return Err(usage("--bbox is required for unbounded domains")),
    };
    let grid = a.grid.unwrap_or(if a.quick { (101, 101) } else { (201, 201) });
    let n = a.samples.unwrap_or(if a.quick { 10_000 } else { 1_000_000 });
    let f = field_with(
        &domain,
        a.h,
        bbox,
        grid,
        n,
        &Sampled { seed: a.seed },
        a.seed,
        normalization(a.literal_def),
    )?;
    write_output(&a.out, &field_to_csv(&f))?;
    Ok(String::new())
}

fn run_levels(a: LevelsArgs) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(&a.field).with_context(|| format!("reading {}", a.field.display()))?;
    let f = field_from_csv(&text).map_err(|e| usage(format!("{}: {e}", a.field.display())))?;
    let reports = analyze_levels(&f, &a.levels);
    write_output(&a.out, &to_json(&reports))?;
    if let Some(svg) = &a.svg {
        write_output(svg, &levels_to_svg(&reports, f.bbox))?;
    }
    Ok(String::new())
}

fn run_experiment(a: ExperimentArgs) -> anyhow::Result<String> {
    let quick = a.quick;
    let field_n = a.samples.unwrap_or(if quick { 10_000 } else { 1_000_000 });
    let grid = a.grid.unwrap_or(if quick { (101, 101) } else { (201, 201) });
    let run = FieldRun {
        h: a.h,
        grid,
        n: field_n,
        seed: a.seed,
    };
    let domain = a.domain.as_deref().map(load_domain).transpose()?;
    let report = match a.name {
        ExperimentName::DiskCheck => {
            experiments::disk_center_check(a.samples.unwrap_or(if quick { 100_000 } else { 1_000_000 }), a.seed)?
        }
        ExperimentName::QuadrantCheck => experiments::quadrant_check(
            a.h,
            a.samples.unwrap_or(if quick { 100_000 } else { 1_000_000 }),
            a.seed,
        )?,
        ExperimentName::Hyperbola => {
            let domain = domain.unwrap_or_else(experiments::truncated_quadrant);
            let levels = a.levels.unwrap_or_else(|| vec![2.0, 3.0, 4.0, 6.0, 8.0]);
            let bbox = a.bbox.unwrap_or((0.0, 12.0, 0.0, 12.0));
            experiments::hyperbola_convergence(&domain, &levels, bbox, run)?
        }
        ExperimentName::EllipseProbe => {
            let domain = domain.unwrap_or_else(ConvexDomain::square);
            experiments::ellipse_limit_probe(&domain, a.n_levels, run)?
        }
        ExperimentName::Invariance => experiments::invariance_suite(
            a.cases,
            a.samples.unwrap_or(if quick { 2_000 } else { 100_000 }),
            a.seed,
        )?,
    };
    let text = to_json(&report);
    match &a.out {
        Some(path) => {
            write_output(path, &text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn is_usage(e: &anyhow::Error) -> bool {
    if e.downcast_ref::<Usage>().is_some() {
        return true;
    }
    matches!(
        e.downcast_ref::<Error>(),
        Some(
            Error::InvalidDomain(_)
                | Error::PointOutside { .. }
                | Error::InvalidGrid(_)
                | Error::InvalidParameter(_)
                | Error::EmptyInput
        )
    )
}

fn dispatch(cli: Cli) -> anyhow::Result<String> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    match cli.command {
        Command::Eval(a) => run_eval(a),
        Command::Tropical(a) => run_tropical(a),
        Command::Field(a) => run_field(a),
        Command::Levels(a) => run_levels(a),
        Command::Experiment(a) => run_experiment(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
