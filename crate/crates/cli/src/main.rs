use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wflow_core::diagnostics::{compare_fields, singularity_census, DiagnosticsReport};
use wflow_core::heatmap::{export_heatmap, Palette};
use wflow_core::scenario::{
    compare_runs, comparison_csv, parse_potential, read_field_file, run, write_field_file, Scenario, PRESETS,
};
use wflow_core::{DerivativeScheme, SystemParams, WignerState, DEFAULT_EPSILON_REL};

#[derive(Parser)]
#[command(
    name = "wflow",
    version,
    about = "Wigner phase-space flow runs, comparisons and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset (fig1a, fig1b, fig1c, fig1d, friction) or a scenario file.
    Run(RunArgs),
    /// Compare two run directories at their shared recorded times.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report diagnostics of a field file (.csv or .wfld).
    Diagnose(DiagnoseArgs),
    /// Render a field file as a PPM heatmap, or convert it to .csv / .wfld.
    Export {
        field: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// bwr (blue-white-red) or bkr (blue-black-red).
        #[arg(long, default_value = "bwr")]
        palette: String,
    },
}

#[derive(Args)]
struct RunArgs {
    scenario: String,
    /// Nodes per axis, `N` or `NxM`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Final time; sets the step count to `t / dt`.
    #[arg(long)]
    t: Option<f64>,
    /// euler or rk4.
    #[arg(long)]
    method: Option<String>,
    /// spectral, spectral:<cutoff>, fd2, fd4 or fd6.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    epsilon_rel: Option<f64>,
    /// Friction coefficient of the friction scenario.
    #[arg(long)]
    gamma: Option<f64>,
    /// oracle, analytic or none.
    #[arg(long)]
    compare: Option<String>,
    #[arg(long)]
    evolver: Option<String>,
    #[arg(long)]
    record_stride: Option<usize>,
    /// Run directory; defaults to runs/<scenario name>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    field: PathBuf,
    /// Potential for the singularity census, e.g. quartic:1, harmonic:1, free.
    #[arg(long, default_value = "quartic:1")]
    potential: String,
    #[arg(long, default_value_t = 1.0)]
    hbar: f64,
    #[arg(long, default_value_t = 1.0)]
    mass: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON_REL)]
    epsilon_rel: f64,
    #[arg(long, default_value = "spectral")]
    scheme: String,
    /// Reference field for error norms.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Print JSON instead of key=value lines.
    #[arg(long)]
    json: bool,
}

fn load_scenario(args: &RunArgs) -> Result<Scenario> {
    let mut scenario = if PRESETS.contains(&args.scenario.as_str()) {
        Scenario::preset(&args.scenario)?
    } else {
        let text = std::fs::read_to_string(&args.scenario)
            .with_context(|| format!("'{}' is neither a preset nor a readable scenario file", args.scenario))?;
        Scenario::parse(&text)?
    };
    let mut overrides = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            overrides.insert(k.to_string(), v);
        }
    };
    put("grid", args.grid.clone());
    put("dt", args.dt.map(|v| v.to_string()));
    put("steps", args.steps.map(|v| v.to_string()));
    put("method", args.method.clone());
    put("scheme", args.scheme.clone());
    put("epsilon_rel", args.epsilon_rel.map(|v| v.to_string()));
    put("friction_gamma", args.gamma.map(|v| v.to_string()));
    put("compare", args.compare.clone());
    put("evolver", args.evolver.clone());
    put("record_stride", args.record_stride.map(|v| v.to_string()));
    scenario.apply(&overrides)?;
    if let Some(t) = args.t {
        if !(t > 0.0) {
            bail!("--t must be positive");
        }
        let steps = (t / scenario.evolution.dt).round() as usize;
        if steps == 0 || ((steps as f64 * scenario.evolution.dt) - t).abs() > 1e-9 * t {
            bail!(
                "--t {t} is not a whole number of steps of dt = {}",
                scenario.evolution.dt
            );
        }
        let stride = scenario.evolution.record_stride;
        scenario.evolution.n_steps = steps;
        if args.record_stride.is_none() && stride > steps {
            scenario.evolution.record_stride = steps;
        }
    }
    scenario.validate()?;
    Ok(scenario)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let scenario = load_scenario(&args)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(&scenario.name));
    log::info!("running '{}' into {}", scenario.name, out.display());
    let output = run(&scenario, &out).with_context(|| format!("run '{}' failed", scenario.name))?;
    print!("{}", output.report.to_key_value());
    if !output.comparisons.is_empty() {
        print!("{}", comparison_csv(&output.comparisons));
    }
    println!("run_dir={}", out.display());
    Ok(())
}

fn cmd_compare(a: &Path, b: &Path, out: Option<&Path>) -> Result<()> {
    let rows = compare_runs(a, b)?;
    let table = comparison_csv(&rows);
    print!("{table}");
    if let Some(path) = out {
        std::fs::write(path, &table).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let field = read_field_file(&args.field)?;
    let params = SystemParams::new(args.hbar, args.mass)?;
    let potential = parse_potential(&args.potential)?;
    let scheme = DerivativeScheme::parse(&args.scheme)?;
    let state = WignerState::evolved(field, params, args.field.display().to_string());
    let census = singularity_census(&state, &potential, args.epsilon_rel, scheme)?;
    let mut report = DiagnosticsReport::of_field(&state.field).with_census(&census);
    if let Some(r) = &args.reference {
        let reference = read_field_file(r)?;
        report = report.with_comparison(&compare_fields(&state.field, &reference)?);
    }
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_key_value());
    }
    Ok(())
}

fn cmd_export(field: &Path, out: &Path, palette: &str) -> Result<()> {
    let f = read_field_file(field)?;
    match out.extension().and_then(|e| e.to_str()) {
        Some("ppm") | None => export_heatmap(&f, out, Palette::parse(palette)?)?,
        Some("csv") | Some("wfld") => write_field_file(&f, out)?,
        Some(other) => bail!("unsupported export format '.{other}' (use .ppm, .csv or .wfld)"),
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("WFLOW_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("WFLOW_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            bail!("WFLOW_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare { run_a, run_b, out } => cmd_compare(&run_a, &run_b, out.as_deref()),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Export { field, out, palette } => cmd_export(&field, &out, &palette),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
