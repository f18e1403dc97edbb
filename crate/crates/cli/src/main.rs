use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nudge_core::harness::{
    self, condsweep::CONDLAB_HEADER, converge::CONVERGENCE_HEADER, props::PROPS_HEADER, twin::write_twin_outputs,
    Mode, OutputSink, PropsOptions, RunConfig, RunSpec,
};
use nudge_core::predictability::{ErrorSeries, HorizonReport, NormKind, HORIZON_HEADER};
use nudge_core::timestepper::SchemeKind;

#[derive(Parser)]
#[command(name = "nudge", version, about = "Two-step nudging data assimilation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config; NUDGE_OUTPUT_DIR overrides both).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write two-column plot files, one per curve.
    #[arg(long)]
    plot: bool,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Temporal convergence against the manufactured solution.
    Converge {
        #[command(flatten)]
        common: Common,
    },
    /// Twin experiment: truth, observations and assimilation runs.
    Twin {
        #[command(flatten)]
        common: Common,
        /// Runs as `scheme:chi` pairs, e.g. `none:0,2a-explicit:10000`.
        #[arg(long, value_delimiter = ',')]
        runs: Vec<String>,
        /// Override the final time.
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Horizon report from an error-series CSV written by `twin`.
    Horizon {
        /// Series file (`errors_*.csv`).
        series: PathBuf,
        /// Column holding the error norm.
        #[arg(long, default_value = "e_l2")]
        column: String,
        /// Thresholds.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Window `t1,t2`; defaults to the second half of the series.
        #[arg(long, value_delimiter = ',')]
        window: Option<Vec<f64>>,
        /// Write `horizon.csv` here instead of printing.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Conditioning sweep of the reduced finite-element analysis system.
    Condlab {
        #[command(flatten)]
        common: Common,
    },
    /// Property suites; exits nonzero on any hard failure.
    Props {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Perturb the explicit gain by this relative amount (mutation check).
        #[arg(long, default_value_t = 0.0)]
        tamper_gain: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common, fallback: RunConfig) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => fallback,
    };
    if let Some(o) = &common.out {
        cfg.output_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn sink(cfg: &RunConfig, plot: bool) -> Result<OutputSink> {
    let dir = cfg.resolved_output_dir();
    OutputSink::new(&dir, plot).with_context(|| format!("creating {}", dir.display()))
}

fn parse_run(s: &str) -> Result<RunSpec> {
    let (scheme, chi) = s.split_once(':').context("runs are written scheme:chi")?;
    let scheme = SchemeKind::parse(scheme).with_context(|| format!("unknown scheme `{scheme}`"))?;
    Ok(RunSpec {
        scheme,
        chi: chi.parse().with_context(|| format!("bad chi `{chi}`"))?,
    })
}

fn print_config(cfg: &RunConfig) -> Result<()> {
    print!("{}", cfg.to_toml_string()?);
    Ok(())
}

fn converge(common: Common) -> Result<ExitCode> {
    let cfg = load(&common, RunConfig::manufactured())?;
    if common.print_config {
        print_config(&cfg)?;
        return Ok(ExitCode::SUCCESS);
    }
    if cfg.mode != Mode::Manufactured {
        bail!("converge needs mode = \"manufactured\"");
    }
    let tables = harness::run_converge(&cfg)?;
    let out = sink(&cfg, common.plot)?;
    let mut rows = Vec::new();
    for t in &tables {
        println!("{} (chi = {})", t.scheme.label(), t.chi);
        for r in &t.rows {
            let rate = r.rate.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
            println!("  k = {:<9} error = {:.4e}  rate = {rate}", r.k, r.error);
        }
        for (k, why) in &t.failures {
            println!("  k = {k}: failed: {why}");
        }
        rows.extend(t.csv_rows());
        let curve: Vec<(f64, f64)> = t.rows.iter().map(|r| (r.k, r.error)).collect();
        out.write_curve(&format!("plot_converge_{}.dat", t.scheme.label()), &curve)?;
    }
    let path = out.write_csv("convergence.csv", CONVERGENCE_HEADER, rows)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn twin(common: Common, runs: Vec<String>, t_end: Option<f64>) -> Result<ExitCode> {
    let mut cfg = load(&common, RunConfig::default())?;
    if !runs.is_empty() {
        cfg.twin.runs = runs.iter().map(|s| parse_run(s)).collect::<Result<_>>()?;
    }
    if let Some(t) = t_end {
        cfg.t_end = t;
        let (a, b) = cfg.twin.average_window;
        if b > t {
            cfg.twin.average_window = (a.min(t / 2.0), t);
        }
    }
    cfg.validate()?;
    if common.print_config {
        print_config(&cfg)?;
        return Ok(ExitCode::SUCCESS);
    }
    let report = harness::run_twin(&cfg)?;
    let out = sink(&cfg, common.plot)?;
    write_twin_outputs(&report, &out)?;
    let (a, b) = cfg.twin.average_window;
    println!("C1 estimate {:.4}, epsilon {:?}", report.c1_estimate, report.epsilons);
    for r in &report.runs {
        println!(
            "{:<24} mean rel error [{a},{b}] = {:.4e}  final = {:.4e}  max polarization = {:?}  max gradmono = {:?}",
            r.label(),
            r.mean_relative_error,
            r.final_relative_error,
            r.max_polarization,
            r.max_gradient_monotonicity
        );
        for w in r.hypotheses.warnings() {
            println!("  warning: hypothesis {} fails (margin {:.3e})", w.name, w.margin);
        }
    }
    println!("wrote {}", out.dir().display());
    Ok(ExitCode::SUCCESS)
}

fn read_series(path: &Path, column: &str) -> Result<ErrorSeries<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().context("empty series file")?.split(',').collect();
    let ti = header.iter().position(|h| *h == "t").context("no `t` column")?;
    let ci = header
        .iter()
        .position(|h| *h == column)
        .with_context(|| format!("no `{column}` column"))?;
    let (mut times, mut norms) = (Vec::new(), Vec::new());
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        times.push(cells[ti].parse::<f64>()?);
        norms.push(cells[ci].parse::<f64>()?);
    }
    let kind = if column.contains("h1") { NormKind::H1Semi } else { NormKind::L2 };
    Ok(ErrorSeries::from_parts(times, norms, kind)?)
}

fn horizon(series: PathBuf, column: String, eps: Vec<f64>, window: Option<Vec<f64>>, out: Option<PathBuf>) -> Result<ExitCode> {
    let s = read_series(&series, &column)?;
    let (t1, t2) = match window.as_deref() {
        Some(&[a, b]) => (a, b),
        Some(w) => bail!("--window takes two times t1,t2, got {} values", w.len()),
        None => s.default_window()?,
    };
    let label = series.file_stem().and_then(|x| x.to_str()).unwrap_or("series").to_string();
    let mut rows = Vec::new();
    for e in eps {
        let r = HorizonReport::compute(&s, t1, t2, e)?;
        rows.push(r.to_csv(&label));
    }
    match out {
        Some(dir) => {
            let path = OutputSink::new(dir, false)?.write_csv("horizon.csv", HORIZON_HEADER, &rows)?;
            println!("wrote {}", path.display());
        }
        None => {
            println!("{HORIZON_HEADER}");
            rows.iter().for_each(|r| println!("{r}"));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn condlab(common: Common) -> Result<ExitCode> {
    let cfg = load(&common, RunConfig::default())?;
    if common.print_config {
        print_config(&cfg)?;
        return Ok(ExitCode::SUCCESS);
    }
    let rows = harness::run_condlab(&cfg)?;
    let out = sink(&cfg, common.plot)?;
    println!("{CONDLAB_HEADER}");
    for r in &rows {
        println!("{}", r.to_csv());
    }
    for space in &cfg.condlab.spaces {
        let curve: Vec<(f64, f64)> = rows.iter().filter(|r| r.space == *space).map(|r| (r.k_chi, r.cond)).collect();
        out.write_curve(&format!("plot_cond_{space}.dat"), &curve)?;
    }
    let path = out.write_csv("condlab.csv", CONDLAB_HEADER, rows.iter().map(|r| r.to_csv()))?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn props(seed: u64, count: usize, tamper_gain: f64, out: Option<PathBuf>) -> Result<ExitCode> {
    let report = harness::run_props(&PropsOptions {
        seed,
        count,
        tamper_gain,
    });
    for o in &report.outcomes {
        println!("{o}");
    }
    if let Some(dir) = out {
        OutputSink::new(dir, false)?.write_csv("props.csv", PROPS_HEADER, report.csv_rows())?;
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Converge { common } => converge(common),
        Command::Twin { common, runs, t_end } => twin(common, runs, t_end),
        Command::Horizon {
            series,
            column,
            eps,
            window,
            out,
        } => horizon(series, column, eps, window, out),
        Command::Condlab { common } => condlab(common),
        Command::Props {
            seed,
            count,
            tamper_gain,
            out,
        } => props(seed, count, tamper_gain, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
