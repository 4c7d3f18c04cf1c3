use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gaussmark::channel::{
    evolve, marker_trajectory_cm, transmission_grid, ChannelSpec, GridScale, InferOptions,
};
use gaussmark::io::{csv_preamble, cm_to_json, parse_cm_json, parse_trace, write_trace};
use gaussmark::markers::region_grid;
use gaussmark::reconstruction::{
    bootstrap_markers, BootstrapOptions, BootstrapReport, CalibrationOptions, PipelineOptions,
    TraceSet, DEFAULT_BINS, DEFAULT_RESAMPLES,
};
use gaussmark::{
    classify_cm, simulate_all, CovarianceMatrix4, MarkerReport, SimConfig, StandardFormCM,
    TwoModeGaussian,
};
use serde::Deserialize;

const OUT_DIR_ENV: &str = "GAUSSMARK_OUT_DIR";
const DEFAULT_GRID: &str = "0.01:1:100:lin";
const C_REF: f64 = 0.866_025_403_784_438_6;

#[derive(Parser)]
#[command(name = "gaussmark", version, about = "Two-mode Gaussian state markers, loss sweeps and homodyne reconstruction")]
struct Cli {
    /// TOML file overriding built-in defaults; flags override the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print every marker of one covariance matrix.
    Analyze(AnalyzeArgs),
    /// Evolve a state through the lossy channel and tabulate the markers.
    Sweep(SweepArgs),
    /// Label a grid of balanced states by their strongest quantum property.
    Region(RegionArgs),
    /// Write the shot-noise trace and six mode traces of a state.
    Simulate(SimulateArgs),
    /// Estimate the covariance matrix and markers from a trace directory.
    Reconstruct(ReconstructArgs),
}

#[derive(Args)]
struct StateArgs {
    /// JSON file holding a covariance-matrix document or {"n","m","c1","c2"}.
    #[arg(long, conflicts_with = "state")]
    input: Option<PathBuf>,
    /// Inline state: `ref`, `vac` or `n,m,c1,c2`.
    #[arg(long, allow_hyphen_values = true)]
    state: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Report entropies in bits.
    #[arg(long)]
    bits: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    state: StateArgs,
    /// `min:max:count[:lin|log]`, transmissions inside (0, 1].
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    bits: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RegionArgs {
    /// Diagonal entry of the balanced state.
    #[arg(long, default_value_t = 1.0)]
    n: f64,
    #[arg(long, default_value_t = 201)]
    resolution: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Pass the state through a lossy channel first.
    #[arg(long)]
    transmission: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Unit visibility and no electronic noise.
    #[arg(long)]
    ideal: bool,
    /// Output directory; defaults to $GAUSSMARK_OUT_DIR, then `traces`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Directory holding the seven trace CSV files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also infer the channel transmission under the pure-source assumption.
    #[arg(long = "infer-T")]
    infer_t: bool,
    /// Electronic noise variance in raw units, removed before calibration.
    #[arg(long)]
    electronic_floor: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    bits: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    simulation: Option<SimConfig>,
    reconstruction: ReconstructionSection,
    sweep: SweepSection,
    output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReconstructionSection {
    bins: Option<usize>,
    resamples: Option<usize>,
    seed: Option<u64>,
    electronic_floor_raw: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    grid: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
    bits: Option<bool>,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_inline(spec: &str) -> anyhow::Result<CovarianceMatrix4> {
    let sf = match spec.trim().to_ascii_lowercase().as_str() {
        "ref" => StandardFormCM::new(1.0, 1.0, C_REF, -C_REF)?,
        "vac" => StandardFormCM::vacuum(),
        other => {
            let parts: Vec<f64> = other
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("invalid --state '{spec}'"))?;
            let [n, m, c1, c2] = parts[..] else {
                bail!("--state expects four numbers n,m,c1,c2, got {}", parts.len());
            };
            StandardFormCM::new(n, m, c1, c2)?
        }
    };
    Ok(sf.covariance())
}

fn load_state(args: &StateArgs) -> anyhow::Result<CovarianceMatrix4> {
    match (&args.input, &args.state) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_cm_json(&text).with_context(|| format!("in {}", path.display()))
        }
        (None, Some(spec)) => parse_inline(spec),
        (None, None) => bail!("give a state with --input FILE or --state n,m,c1,c2"),
    }
}

fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if !(parts.len() == 3 || parts.len() == 4) {
        bail!("grid '{spec}' is not min:max:count[:lin|log]");
    }
    let min: f64 = parts[0].parse().with_context(|| format!("grid minimum '{}'", parts[0]))?;
    let max: f64 = parts[1].parse().with_context(|| format!("grid maximum '{}'", parts[1]))?;
    let count: usize = parts[2].parse().with_context(|| format!("grid count '{}'", parts[2]))?;
    let scale = match parts.get(3).copied().unwrap_or("lin") {
        "lin" | "linear" => GridScale::Linear,
        "log" => GridScale::Log,
        other => bail!("grid scale '{other}' is neither lin nor log"),
    };
    Ok(transmission_grid(min, max, count, scale)?)
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fmt_value(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        "n/a".into()
    }
}

fn report_table(r: &MarkerReport) -> String {
    let nums = r.numeric_fields();
    let flags = [
        ("physical", r.physical),
        ("entangled_phs", r.entangled_phs),
        ("duan_sufficient", r.duan_sufficient),
        ("epr_1to2", r.epr_1to2),
        ("epr_2to1", r.epr_2to1),
        ("fidelity_quantum", r.fidelity_quantum),
        ("discord_sign_caveat", r.discord_sign_caveat),
    ];
    let mut s = String::new();
    for (name, v) in MarkerReport::CSV_COLUMNS.iter().zip(nums) {
        s.push_str(&format!("{name:<20} {}\n", fmt_value(v)));
    }
    for (name, v) in flags {
        s.push_str(&format!("{name:<20} {v}\n"));
    }
    s.push_str(&format!("{:<20} {}\n", "entropy_unit", if r.bits { "bits" } else { "nats" }));
    s
}

fn exit_for(physical: bool) -> u8 {
    if physical {
        0
    } else {
        2
    }
}

fn cmd_analyze(args: &AnalyzeArgs, cfg: &FileConfig) -> anyhow::Result<u8> {
    let cm = load_state(&args.state)?;
    let mut report = classify_cm(&cm)?;
    if args.bits || cfg.output.bits.unwrap_or(false) {
        report = report.in_bits();
    }
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => format!(
            "{}{}\n{}\n",
            csv_preamble("report", report.bits),
            MarkerReport::csv_header(),
            report.csv_row()
        ),
        Format::Table => report_table(&report),
    };
    emit(args.out.as_deref(), &text)?;
    if !report.physical {
        eprintln!("warning: the covariance matrix violates the uncertainty principle");
    }
    Ok(exit_for(report.physical))
}

fn cmd_sweep(args: &SweepArgs, cfg: &FileConfig) -> anyhow::Result<u8> {
    let cm = load_state(&args.state)?;
    let spec = args
        .grid
        .as_deref()
        .or(cfg.sweep.grid.as_deref())
        .unwrap_or(DEFAULT_GRID);
    let grid = parse_grid(spec)?;
    let physical = cm.is_physical();
    if !physical {
        eprintln!("error: the input state is unphysical");
        return Ok(2);
    }
    let table = marker_trajectory_cm(&cm, &grid)?;
    let bits = args.bits || cfg.output.bits.unwrap_or(false);
    emit(args.out.as_deref(), &table.to_csv(bits))?;
    Ok(0)
}

fn cmd_region(args: &RegionArgs) -> anyhow::Result<u8> {
    let grid = region_grid(args.n, args.resolution)?;
    let mut text = format!(
        "# gaussmark region v{} convention={} n={} resolution={}\n",
        gaussmark::io::CSV_VERSION,
        gaussmark::io::CONVENTION,
        args.n,
        args.resolution
    );
    text.push_str("i,j,c1_tilde,c2_tilde,label\n");
    for c in &grid {
        text.push_str(&format!("{},{},{},{},{}\n", c.i, c.j, c.c1_tilde, c.c2_tilde, c.label));
    }
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}

fn default_out_dir(cfg: &FileConfig) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("traces"))
}

fn trace_file_name(kind: gaussmark::TraceKind) -> String {
    match kind {
        gaussmark::TraceKind::Shot => "shot.csv".into(),
        gaussmark::TraceKind::Mode(m) => format!("mode_{m}.csv"),
    }
}

fn cmd_simulate(args: &SimulateArgs, cfg: &FileConfig) -> anyhow::Result<u8> {
    let mut cm = load_state(&args.state)?;
    if let Some(t) = args.transmission {
        cm = evolve(&cm, &ChannelSpec::new(t)?);
    }
    let mut sim = cfg.simulation.unwrap_or_default();
    if args.ideal {
        sim = SimConfig::ideal(sim.samples_per_trace, sim.seed);
    }
    if let Some(n) = args.samples {
        sim.samples_per_trace = n;
    }
    if let Some(seed) = args.seed {
        sim.seed = seed;
    }
    let dir = args.out.clone().unwrap_or_else(|| default_out_dir(cfg));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let traces = simulate_all(&cm, &sim)?;
    for t in &traces {
        let path = dir.join(trace_file_name(t.kind));
        fs::write(&path, write_trace(t)).with_context(|| format!("writing {}", path.display()))?;
    }
    fs::write(dir.join("state.json"), cm_to_json(&cm) + "\n")?;
    eprintln!(
        "wrote {} traces of {} samples to {}",
        traces.len(),
        sim.samples_per_trace,
        dir.display()
    );
    Ok(0)
}

fn load_traces(dir: &Path) -> anyhow::Result<TraceSet> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut traces = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        traces.push(parse_trace(&text).with_context(|| format!("in {}", p.display()))?);
    }
    Ok(TraceSet::new(traces)?)
}

fn bootstrap_table(r: &BootstrapReport) -> String {
    let mut s = format!(
        "{:<20} {:>12} {:>12} {:>12}\n",
        "field", "point", "mean", "sd"
    );
    for f in r.fields.iter().chain(r.transmission.iter()) {
        s.push_str(&format!(
            "{:<20} {:>12} {:>12} {:>12}\n",
            f.name,
            fmt_value(f.point),
            fmt_value(f.mean),
            fmt_value(f.sd)
        ));
    }
    s.push_str(&format!(
        "resamples {}, failed {}, physical {}\n",
        r.resamples, r.failed, r.reconstruction.physical
    ));
    s
}

fn cmd_reconstruct(args: &ReconstructArgs, cfg: &FileConfig) -> anyhow::Result<u8> {
    let set = load_traces(&args.input)?;
    for (a, b) in set.seed_collisions() {
        eprintln!("warning: traces {a} and {b} share a generator seed; their noise is correlated");
    }
    let rc = &cfg.reconstruction;
    let opts = BootstrapOptions {
        resamples: args.resamples.or(rc.resamples).unwrap_or(DEFAULT_RESAMPLES),
        seed: args.seed.or(rc.seed).unwrap_or(0),
        pipeline: PipelineOptions {
            bins: args.bins.or(rc.bins).unwrap_or(DEFAULT_BINS),
            calibration: CalibrationOptions {
                electronic_floor_raw: args.electronic_floor.or(rc.electronic_floor_raw),
            },
        },
        infer: args.infer_t.then(InferOptions::for_measured_data),
    };
    let mut report = bootstrap_markers(&set, &opts)?;
    for g in report.reconstruction.gaussianity.iter().filter(|g| g.flagged) {
        eprintln!("warning: trace {} fails the per-bin Gaussianity check", g.trace);
    }
    let bits = args.bits || cfg.output.bits.unwrap_or(false);
    if bits {
        report = report.in_bits();
    }
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => report.to_csv(bits),
        Format::Table => bootstrap_table(&report),
    };
    emit(args.out.as_deref(), &text)?;
    Ok(exit_for(report.reconstruction.physical))
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, &cfg),
        Command::Sweep(a) => cmd_sweep(a, &cfg),
        Command::Region(a) => cmd_region(a),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::Reconstruct(a) => cmd_reconstruct(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
