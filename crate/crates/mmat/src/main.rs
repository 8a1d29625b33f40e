use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use manifold_matern::equivalence::{equivalence_verdict, Family, Verdict, DEFAULT_EQUIV_TOL};
use manifold_matern::inference::{mle_sigma2, Dataset, FitResult};
use manifold_matern::kernel::{matern_kernel, MaternParams, SqExpParams, TruncationPolicy};
use manifold_matern::montecarlo::{
    exp_consistency, exp_normality, exp_prediction, exp_truncation, parse_config,
    parse_manifold_name,
};
use manifold_matern::spectrum::{ManifoldSpec, Point};
use manifold_matern::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mmat",
    version,
    about = "Matern Gaussian processes on compact manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate a certified covariogram over a geodesic distance grid
    Kernel(KernelArgs),
    /// Fit the variance by maximum likelihood at fixed smoothness and range
    Fit(FitArgs),
    /// Run a named Monte Carlo experiment from a config file
    Experiment(ExperimentArgs),
    /// Decide whether two models on one manifold are equivalent or orthogonal
    Equiv(EquivArgs),
}

#[derive(Args)]
struct KernelArgs {
    /// circle or sphere2 (the manifolds with a pointwise kernel)
    #[arg(long)]
    manifold: String,
    /// Smoothness nu
    #[arg(long)]
    nu: f64,
    /// Inverse range alpha
    #[arg(long)]
    alpha: f64,
    /// Marginal variance
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Certified truncation tolerance per kernel value
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Number of grid points, both endpoints included
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV dataset: header theta,z on the circle, x,y,z,obs on sphere2
    dataset: PathBuf,
    #[arg(long)]
    manifold: String,
    #[arg(long)]
    nu: f64,
    #[arg(long)]
    alpha: f64,
    /// Certified truncation tolerance for correlation entries
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Also write the JSON result to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// consistency, normality, prediction, or truncation
    name: String,
    /// Config file, flat key = value lines or a JSON object
    config: PathBuf,
    /// Directory receiving <name>_records.csv and <name>_summary.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the seed from the config file
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EquivArgs {
    #[arg(long)]
    manifold: String,
    /// matern or sqexp
    #[arg(long, default_value = "matern")]
    family: String,
    /// First model: nu,sigma2,alpha for matern; sigma2,alpha for sqexp
    #[arg(long)]
    params1: String,
    /// Second model, same layout as --params1
    #[arg(long)]
    params2: String,
    /// Relative tolerance when comparing microergodic constants
    #[arg(long, default_value_t = DEFAULT_EQUIV_TOL)]
    tol: f64,
}

// Exit codes: 0 success, 2 bad arguments or malformed input, 1 computation
// failure (truncation, factorization, output I/O). Clap's own usage errors
// already exit 2.
fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("mmat: {e}");
        return ExitCode::from(2);
    }
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmat: {e}");
            ExitCode::from(failure_class(&e))
        }
    }
}

fn failure_class(e: &Error) -> u8 {
    match e {
        Error::TruncationFailure { .. } | Error::FactorizationFailure { .. } | Error::Io(_) => 1,
        _ => 2,
    }
}

/// MM_THREADS caps the worker pool; absent or 0 keeps rayon's default.
fn init_threads() -> Result<()> {
    let Some(raw) = std::env::var_os("MM_THREADS") else {
        return Ok(());
    };
    let raw = raw.to_string_lossy();
    let n: usize = raw.trim().parse().map_err(|_| {
        Error::Parse(format!(
            "MM_THREADS must be a nonnegative integer, got {raw:?}"
        ))
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Parse(format!("MM_THREADS: {e}")))?;
    }
    Ok(())
}

fn run(cmd: &Cmd) -> Result<()> {
    match cmd {
        Cmd::Kernel(a) => cmd_kernel(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Experiment(a) => cmd_experiment(a),
        Cmd::Equiv(a) => cmd_equiv(a),
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("must be a positive real, got {eps}"),
        })
    }
}

fn cmd_kernel(a: &KernelArgs) -> Result<()> {
    let m = parse_manifold_name(&a.manifold)?;
    check_eps(a.eps)?;
    let p = MaternParams::new(a.nu, a.sigma2, a.alpha)?;
    if a.grid < 2 {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: format!("needs at least 2 points, got {}", a.grid),
        });
    }
    // Distances run over the full injectivity range, so the last row sits at
    // the antipode.
    let top = match m {
        ManifoldSpec::Circle => 0.5,
        ManifoldSpec::Sphere2 => std::f64::consts::PI,
        _ => {
            return Err(Error::Parse(format!(
                "kernel grids cover circle and sphere2 only, got {}",
                a.manifold
            )))
        }
    };
    let policy = TruncationPolicy::new(a.eps);
    let mut csv = String::from("distance,k,error_bound\n");
    for i in 0..a.grid {
        let d = top * i as f64 / (a.grid - 1) as f64;
        let (x, y) = match m {
            ManifoldSpec::Circle => (Point::circle(0.0)?, Point::circle(d)?),
            _ => (
                Point::sphere2(0.0, 0.0, 1.0)?,
                Point::sphere2(d.sin(), 0.0, d.cos())?,
            ),
        };
        let tv = matern_kernel(&m, &p, &policy, &x, &y)?;
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e}\n",
            d, tv.value, tv.error_bound
        ));
    }
    match &a.out {
        None => print!("{csv}"),
        Some(path) => write_file(path, &csv)?,
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let m = parse_manifold_name(&a.manifold)?;
    check_eps(a.eps)?;
    let d = load_dataset(&m, &a.manifold, &a.dataset)?;
    let fit = mle_sigma2(&d, &m, a.nu, a.alpha, &TruncationPolicy::new(a.eps))?;
    let json = fit_json(&fit);
    print!("{json}");
    if let Some(path) = &a.out {
        write_file(path, &json)?;
    }
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).map_err(|e| {
        Error::Parse(format!("cannot read config {}: {e}", a.config.display()))
    })?;
    let (mut cfg, mut extras) = parse_config(&text)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let report = match a.name.as_str() {
        "consistency" => {
            reject_extras(&extras)?;
            exp_consistency(&cfg)?
        }
        "normality" => {
            let n = match extras.remove("normality_n") {
                None => 200,
                Some(v) => v.trim().parse::<usize>().map_err(|_| {
                    Error::Parse(format!("normality_n {v:?} is not an integer"))
                })?,
            };
            reject_extras(&extras)?;
            exp_normality(&cfg, n)?
        }
        "prediction" => {
            let x0 = match extras.remove("x0") {
                None => default_x0(&cfg.manifold)?,
                Some(v) => parse_x0(&v, &cfg.manifold)?,
            };
            reject_extras(&extras)?;
            exp_prediction(&cfg, &x0)?
        }
        "truncation" => {
            reject_extras(&extras)?;
            exp_truncation(&cfg)?
        }
        other => {
            return Err(Error::Parse(format!(
                "unknown experiment {other:?}; expected consistency, normality, prediction, or truncation"
            )))
        }
    };
    fs::create_dir_all(&a.out)
        .map_err(|e| Error::Io(format!("creating {}: {e}", a.out.display())))?;
    let records = a.out.join(format!("{}_records.csv", a.name));
    let summary = a.out.join(format!("{}_summary.json", a.name));
    write_file(&records, &report.to_csv())?;
    write_file(&summary, &report.summary_json())?;
    println!("wrote {}", records.display());
    println!("wrote {}", summary.display());
    Ok(())
}

fn cmd_equiv(a: &EquivArgs) -> Result<()> {
    let m = parse_manifold_name(&a.manifold)?;
    let family = match a.family.as_str() {
        "matern" => {
            let p1 = parse_reals(&a.params1, 3, "--params1")?;
            let p2 = parse_reals(&a.params2, 3, "--params2")?;
            Family::Matern(
                MaternParams::new(p1[0], p1[1], p1[2])?,
                MaternParams::new(p2[0], p2[1], p2[2])?,
            )
        }
        "sqexp" => {
            let p1 = parse_reals(&a.params1, 2, "--params1")?;
            let p2 = parse_reals(&a.params2, 2, "--params2")?;
            Family::SqExp(SqExpParams::new(p1[0], p1[1])?, SqExpParams::new(p2[0], p2[1])?)
        }
        other => {
            return Err(Error::Parse(format!(
                "unknown family {other:?}; expected matern or sqexp"
            )))
        }
    };
    let v = equivalence_verdict(&m, &family, a.tol)?;
    let verdict = match v.verdict {
        Verdict::Equivalent => "Equivalent",
        Verdict::Orthogonal => "Orthogonal",
        Verdict::Inconclusive => "Inconclusive",
    };
    println!("{verdict} ({})", v.rule);
    let diagnostic = match &v.diagnostic {
        None => "null".to_string(),
        Some(d) => format!(
            "{{\"partial_sum\": {}, \"tail_exponent\": {}}}",
            real_json(d.partial_sum),
            real_json(d.tail_exponent)
        ),
    };
    println!(
        "{{\"diagnostic\": {diagnostic}, \"rule\": \"{}\", \"verdict\": \"{verdict}\"}}",
        v.rule
    );
    Ok(())
}

fn parse_reals(s: &str, want: usize, flag: &str) -> Result<Vec<f64>> {
    let vals: Result<Vec<f64>> = s
        .split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>()
                .map_err(|_| Error::Parse(format!("{flag}: {p:?} is not a real number")))
        })
        .collect();
    let vals = vals?;
    if vals.len() != want {
        return Err(Error::Parse(format!(
            "{flag}: expected {want} comma-separated values, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}

fn default_x0(m: &ManifoldSpec) -> Result<Point> {
    match m {
        ManifoldSpec::Circle => Point::circle(0.123456789),
        ManifoldSpec::Sphere2 => Point::sphere2(0.3, -0.2, 0.93),
        _ => Err(Error::Parse(
            "prediction on this manifold needs an explicit x0 config key".into(),
        )),
    }
}

/// x0 syntax: one angle on the circle, three coordinates on sphere2, d+1
/// coordinates on sphere:<d>, comma separated.
fn parse_x0(spec: &str, m: &ManifoldSpec) -> Result<Point> {
    let vals: Result<Vec<f64>> = spec
        .split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>()
                .map_err(|_| Error::Parse(format!("x0 component {p:?} is not a real number")))
        })
        .collect();
    let vals = vals?;
    match (m, vals.len()) {
        (ManifoldSpec::Circle, 1) => Point::circle(vals[0]),
        (ManifoldSpec::Sphere2, 3) => Point::sphere2(vals[0], vals[1], vals[2]),
        (ManifoldSpec::SphereD { d }, k) if k as u32 == d + 1 => Point::sphere_d(vals),
        _ => Err(Error::Parse(format!(
            "x0 has {} components, which does not match the manifold",
            vals.len()
        ))),
    }
}

fn reject_extras(extras: &BTreeMap<String, String>) -> Result<()> {
    if let Some(k) = extras.keys().next() {
        return Err(Error::Parse(format!("unknown config key {k:?}")));
    }
    Ok(())
}

/// Circle datasets carry header theta,z; sphere2 datasets carry x,y,z,obs
/// with every site on the unit sphere. Other manifolds have no file format.
fn load_dataset(m: &ManifoldSpec, manifold_name: &str, path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read dataset {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.trim(),
        None => return Err(Error::Dataset("dataset file is empty".into())),
    };
    let mut sites = Vec::new();
    let mut obs = Vec::new();
    match m {
        ManifoldSpec::Circle => {
            if header != "theta,z" {
                return Err(Error::Dataset(format!(
                    "circle dataset header must be theta,z, got {header:?}"
                )));
            }
            for (idx, line) in lines {
                if line.trim().is_empty() {
                    continue;
                }
                let f = parse_row(line, 2, idx + 1)?;
                sites.push(Point::circle(f[0])?);
                obs.push(f[1]);
            }
        }
        ManifoldSpec::Sphere2 => {
            if header != "x,y,z,obs" {
                return Err(Error::Dataset(format!(
                    "sphere2 dataset header must be x,y,z,obs, got {header:?}"
                )));
            }
            for (idx, line) in lines {
                if line.trim().is_empty() {
                    continue;
                }
                let f = parse_row(line, 4, idx + 1)?;
                let norm = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(Error::Dataset(format!(
                        "row {}: site is off the unit sphere (norm {norm})",
                        idx + 1
                    )));
                }
                sites.push(Point::sphere2(f[0], f[1], f[2])?);
                obs.push(f[3]);
            }
        }
        _ => {
            return Err(Error::Dataset(format!(
                "no dataset format for manifold {manifold_name}"
            )))
        }
    }
    Dataset::new(m, sites, obs)
}

fn parse_row(line: &str, want: usize, rownum: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != want {
        return Err(Error::Dataset(format!(
            "row {rownum}: expected {want} fields, got {}",
            fields.len()
        )));
    }
    fields
        .iter()
        .map(|s| {
            let s = s.trim();
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Dataset(format!(
                    "row {rownum}: {s:?} is not a finite real number"
                ))),
            }
        })
        .collect()
}

/// 17 significant digits, or null where the value is not a finite real.
fn real_json(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".into()
    }
}

fn fit_json(f: &FitResult) -> String {
    format!(
        "{{\n  \"condition_estimate\": {},\n  \"jitter_used\": {},\n  \"log_likelihood\": {},\n  \"sigma2_hat\": {}\n}}\n",
        real_json(f.condition_estimate),
        real_json(f.jitter_used),
        real_json(f.log_likelihood),
        real_json(f.sigma2_hat),
    )
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
}
