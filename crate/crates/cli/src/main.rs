use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use planckwave::ensemble::output::{fmt_f, Artifact, Table};
use planckwave::ensemble::{run_experiment, write_run, ExperimentConfig, ExperimentKind};
use planckwave::model::field::Window;
use planckwave::{sample_coefficients, Error, RandomWaveField, Result};

#[derive(Parser, Debug)]
#[command(name = "planckwave", version, about = "Random plane-wave equidistribution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Export the momentum lattice.
    Lattice,
    /// Export |u|^2 of one draw on a grid.
    Raster,
    /// F on a single segment.
    Xray,
    /// sup |F - 1| over the uniform segment grid.
    XrayUniform,
    /// G at a single phase-space point.
    Phase,
    /// sup G over a phase-space grid.
    PhaseSup,
    /// Tr(A), Tr(A^2) and top eigenvalue share over mu.
    Traces,
    /// Median tail curves of F.
    Tails,
    /// Every experiment.
    All,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed (overrides experiment.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "PLANCKWAVE_THREADS")]
    threads: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[arg(short, long, global = true)]
    verbose: bool,

    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    h: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Comma-separated h values.
    #[arg(long, global = true, value_delimiter = ',')]
    h_sweep: Option<Vec<f64>>,
    #[arg(long, global = true)]
    grid_budget: Option<u64>,
    /// Raster nodes per axis.
    #[arg(long, global = true, default_value_t = 256)]
    resolution: usize,
    /// Raster window half-width (the window is centred at the origin).
    #[arg(long, global = true, default_value_t = 1.0)]
    half_width: f64,
}

fn read_table(path: Option<&Path>) -> Result<toml::Table> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path).map_err(|source| Error::MissingInput {
        path: path.to_path_buf(),
        source,
    })?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn section<'a>(table: &'a mut toml::Table, name: &str) -> &'a mut toml::Table {
    let entry = table
        .entry(name)
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if !entry.is_table() {
        *entry = toml::Value::Table(toml::Table::new());
    }
    entry.as_table_mut().expect("table")
}

/// Config file with command-line overrides applied.
fn resolve_config(common: &Common, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut table = read_table(common.config.as_deref())?;
    let params = section(&mut table, "params");
    let float = |v: f64| toml::Value::Float(v);
    if let Some(n) = common.n {
        params.insert("n".into(), toml::Value::Integer(n as i64));
    }
    for (key, value) in [
        ("h", common.h),
        ("beta", common.beta),
        ("alpha", common.alpha),
        ("mu", common.mu),
        ("epsilon", common.epsilon),
    ] {
        if let Some(v) = value {
            params.insert(key.into(), float(v));
        }
    }
    let exp = section(&mut table, "experiment");
    if let Some(k) = kind {
        exp.insert("kind".into(), toml::Value::String(k.name().into()));
    }
    if let Some(s) = common.seed {
        exp.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    if let Some(s) = common.samples {
        exp.insert("samples".into(), toml::Value::Integer(s as i64));
    }
    if let Some(b) = common.grid_budget {
        exp.insert("grid_budget".into(), toml::Value::Integer(b as i64));
    }
    if let Some(sweep) = &common.h_sweep {
        exp.insert(
            "h_sweep".into(),
            toml::Value::Array(sweep.iter().map(|&v| float(v)).collect()),
        );
    }
    let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
    ExperimentConfig::from_toml(&text)
}

fn experiment_kind(command: Command) -> Option<ExperimentKind> {
    match command {
        Command::Xray => Some(ExperimentKind::XrayPoint),
        Command::XrayUniform => Some(ExperimentKind::XrayUniform),
        Command::Phase => Some(ExperimentKind::PhasePoint),
        Command::PhaseSup => Some(ExperimentKind::PhaseSup),
        Command::Traces => Some(ExperimentKind::Traces),
        Command::Tails => Some(ExperimentKind::Tails),
        Command::Lattice | Command::Raster | Command::All => None,
    }
}

fn lattice_artifacts(config: &ExperimentConfig) -> Result<(Vec<Artifact>, String)> {
    let lattice = config.lattice(&config.params)?;
    let n = lattice.dim();
    let mut header = vec!["j".to_string()];
    header.extend((1..=n).map(|k| format!("xi_{k}")));
    header.push("norm".into());
    let mut t = Table::new(&header);
    for (j, p) in lattice.iter().enumerate() {
        let mut row = vec![j.to_string()];
        row.extend(p.iter().map(|&v| fmt_f(v)));
        row.push(fmt_f(p.iter().map(|v| v * v).sum::<f64>().sqrt()));
        t.push(row);
    }
    let meta = json!({
        "params": config.params,
        "seed": config.experiment.seed,
        "N": lattice.len(),
        "min_separation": lattice.min_separation_within(config.params.h * 1.5),
        "count_ratio": lattice.count_ratio(),
    });
    let line = format!(
        "lattice: N={} N h^(n-beta)={:.3}",
        lattice.len(),
        lattice.count_ratio()
    );
    Ok((
        vec![Artifact::csv("lattice.csv", &t)?, Artifact::json("lattice.json", &meta)?],
        line,
    ))
}

fn raster_artifacts(config: &ExperimentConfig, common: &Common) -> Result<(Vec<Artifact>, String)> {
    let lattice = Arc::new(config.lattice(&config.params)?);
    let seed = config.experiment.seed;
    let coeffs = sample_coefficients(&lattice, seed)?;
    let field = RandomWaveField::new(lattice.clone(), coeffs)?;
    let n = lattice.dim();
    let w = common.half_width;
    let window = Window {
        lo: vec![-w; n],
        hi: vec![w; n],
    };
    let raster = field.raster(&window, common.resolution)?;
    let mut header: Vec<String> = (1..=n).map(|k| format!("x_{k}")).collect();
    header.push("abs_u_sq".into());
    let mut t = Table::new(&header);
    for (i, v) in raster.values.iter().enumerate() {
        let mut row: Vec<String> = raster.node(i).iter().map(|&x| fmt_f(x)).collect();
        row.push(fmt_f(*v));
        t.push(row);
    }
    let mean = raster.values.iter().sum::<f64>() / raster.values.len() as f64;
    let meta = json!({
        "params": config.params,
        "seed": seed,
        "N": lattice.len(),
        "resolution": common.resolution,
        "window": { "lo": window.lo, "hi": window.hi },
        "mean_abs_u_sq": mean,
    });
    Ok((
        vec![Artifact::csv("raster.csv", &t)?, Artifact::json("raster.json", &meta)?],
        format!("raster: N={} nodes={} mean |u|^2={:.4}", lattice.len(), raster.values.len(), mean),
    ))
}

fn run(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    if let Some(t) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let config = resolve_config(&cli.common, experiment_kind(cli.command))?;
    config.validate()?;
    if cli.common.verbose {
        eprintln!("config hash {}", config.hash());
    }
    let mut artifacts = Vec::new();
    let mut lines = Vec::new();
    match cli.command {
        Command::Lattice => {
            let (a, l) = lattice_artifacts(&config)?;
            artifacts.extend(a);
            lines.push(l);
        }
        Command::Raster => {
            let (a, l) = raster_artifacts(&config, &cli.common)?;
            artifacts.extend(a);
            lines.push(l);
        }
        Command::All => {
            for kind in ExperimentKind::ALL {
                let t = Instant::now();
                let out = run_experiment(kind, &config)?;
                if cli.common.verbose {
                    eprintln!("{} took {:.1}s", kind.name(), t.elapsed().as_secs_f64());
                }
                artifacts.extend(out.artifacts);
                lines.push(out.headline);
            }
        }
        other => {
            let kind = experiment_kind(other).expect("experiment subcommand");
            let out = run_experiment(kind, &config)?;
            artifacts.extend(out.artifacts);
            lines.push(out.headline);
        }
    }
    let config_json = serde_json::to_value(&config)?;
    artifacts.push(Artifact::json("config.json", &config_json)?);
    let manifest = write_run(
        &cli.common.out,
        &artifacts,
        &config.hash(),
        start.elapsed().as_secs_f64(),
        cli.common.force,
    )?;
    for l in lines {
        println!("{l}");
    }
    if cli.common.verbose {
        eprintln!("wrote {}", manifest.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
