//! `lmem`: simulation, sweeps and count analysis for the Λ-memory model.

mod counts;
mod manifest;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use lambda_memory::analytics::{
    e2e_efficiency, fit_lifetime, g2_retrieved_model, g2_snr_limit, noise_floor, snr, time_bandwidth_product, Decay,
    LifetimePoint, Snr,
};
use lambda_memory::config::{parse_assignments, parse_override, resolve, to_config_string, Assignment};
use lambda_memory::ensemble::ensemble_run;
use lambda_memory::sweep::{
    optimize_alignment, read_sweep_csv, run_sweep_resuming, with_offset, write_sweep_csv, SweepSpec,
};
use lambda_memory::timetag::{
    arrival_histogram, bootstrap_g2, hbt_counts, parse_timetags, CoincidenceWindow, TimeTagFormat,
    DEFAULT_BIN_WIDTH_PS, DEFAULT_WINDOW_WIDTH_PS,
};
use lambda_memory::{default_experiment_config, Error, Experiment};

use crate::counts::parse_counts;
use crate::manifest::ManifestWriter;

/// Worker threads for parallel evaluation; defaults to all cores.
const THREADS_ENV: &str = "LMEM_THREADS";

#[derive(Parser)]
#[command(name = "lmem", version, about = "Warm-vapor Λ-memory simulation and photon-counting analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the storage protocol once at a configured operating point.
    Simulate(SimulateArgs),
    /// Sweep one parameter, optimizing the control timing per point.
    Sweep(SweepArgs),
    /// Efficiency, noise, SNR and g² from aggregate counts.
    Analyze(AnalyzeArgs),
    /// Arrival-time histogram (and optionally heralded g²) from time tags.
    Histogram(HistogramArgs),
    /// Exponential lifetime fit to efficiency-versus-storage-time data.
    FitLifetime(FitArgs),
    /// Print the default configuration in config-file syntax.
    PrintDefaults,
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value configuration file applied on top of the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `section.key=value` override, applied after the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
    /// Optimize the control timing before the final run.
    #[arg(long)]
    align: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Sweep spec: sweep.axis, sweep.values, sweep.align plus overrides.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep successful rows of an existing sweep.csv and compute the rest.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Counts file with `counts.<field> = value` lines.
    #[arg(long)]
    counts: Option<PathBuf>,
    /// `counts.<field>=value`, applied after the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Also write analysis.csv and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HistogramArgs {
    #[arg(long)]
    input: PathBuf,
    /// text_csv or binary_le
    #[arg(long, default_value = "text_csv")]
    format: String,
    #[arg(long, default_value_t = 0)]
    trigger: u16,
    #[arg(long, default_value_t = 1)]
    signal: u16,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH_PS)]
    bin_width_ps: u64,
    /// Smallest delay in the histogram.
    #[arg(long, default_value_t = 0)]
    origin_ps: u64,
    #[arg(long, default_value_t = 1_000_000)]
    range_ps: u64,
    /// Start of the counting window (delay); defaults to the origin.
    #[arg(long)]
    window_start_ps: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_WINDOW_WIDTH_PS)]
    window_width_ps: u64,
    /// Accepted backward jitter per channel.
    #[arg(long, default_value_t = 0)]
    tolerance_ps: u64,
    /// Heralded g² between two HBT channels, e.g. `1,2`, heralded by --trigger.
    #[arg(long, value_name = "A,B")]
    g2: Option<String>,
    #[arg(long, default_value_t = DEFAULT_WINDOW_WIDTH_PS)]
    coincidence_window_ps: u64,
    /// Gate relative to the herald, `start,width` in ps.
    #[arg(long, value_name = "START,WIDTH")]
    gate: Option<String>,
    /// Bootstrap resamples for the g² uncertainty.
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with header `storage_time_ns,eta,sigma`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failed command and its exit status.
#[derive(Debug)]
enum Failure {
    Core(Error),
    Io(PathBuf, io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Io(path.to_path_buf(), e)
}

fn core_exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericalInstability { .. } => 3,
        Error::Realization { source, .. } => core_exit_code(source),
        _ => 2,
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) => core_exit_code(e),
            Failure::Io(..) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(io_at(path))
}

fn parse_overrides(raw: &[String]) -> Result<Vec<Assignment>, Failure> {
    Ok(raw.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?)
}

fn resolve_config(args: &ConfigArgs) -> Result<(Experiment, Vec<&Path>), Failure> {
    let text = match &args.config {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let overrides = parse_overrides(&args.overrides)?;
    let e = resolve(&default_experiment_config(), &text, &overrides)?;
    Ok((e, args.config.iter().map(PathBuf::as_path).collect()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path).map_err(io_at(path))?))
}

fn simulate(args: &SimulateArgs) -> CmdResult {
    let (mut e, inputs) = resolve_config(&args.config)?;
    let outputs = ["summary.csv", "leakage_trace.csv", "retrieval_trace.csv", "spin_profile.csv"];
    let manifest = ManifestWriter::start(&args.out, Some(to_config_string(&e)), &inputs, &outputs)
        .map_err(io_at(&args.out))?;
    let mut offset = 0.0;
    if args.align {
        let a = optimize_alignment(&e)?;
        offset = a.offset;
        e = with_offset(&e, offset);
        info!("best control offset {offset:.3} ns");
    }
    let r = ensemble_run(&e)?;

    let path = args.out.join("summary.csv");
    let mut w = create(&path)?;
    writeln!(w, "eta_internal,eta_storage,eta_after_hold,leakage,control_offset_ns,storage_time_ns")
        .and_then(|_| {
            writeln!(w, "{},{},{},{},{},{}", r.eta_internal, r.eta_storage, r.eta_after_hold, r.leakage, offset, e.storage_time)
        })
        .and_then(|_| w.flush())
        .map_err(io_at(&path))?;
    let path = args.out.join("leakage_trace.csv");
    r.leakage_trace.write_csv(create(&path)?).map_err(io_at(&path))?;
    let path = args.out.join("retrieval_trace.csv");
    r.retrieval_trace.write_csv(create(&path)?).map_err(io_at(&path))?;
    let path = args.out.join("spin_profile.csv");
    r.write_spin_csv(create(&path)?).map_err(io_at(&path))?;

    println!("eta_internal  {:.6}", r.eta_internal);
    println!("eta_storage   {:.6}", r.eta_storage);
    println!("after hold    {:.6}", r.eta_after_hold);
    println!("leakage       {:.6}", r.leakage);
    manifest.finish("ok").map_err(io_at(&args.out))
}

fn sweep(args: &SweepArgs) -> CmdResult {
    let (base, mut inputs) = resolve_config(&args.config)?;
    let spec_text = read_text(&args.spec)?;
    let spec = SweepSpec::from_assignments(&parse_assignments(&spec_text)?)?;
    let first = spec.point(&base, spec.values[0])?;
    inputs.push(&args.spec);

    let csv_path = args.out.join("sweep.csv");
    let previous = if args.resume && csv_path.exists() {
        read_sweep_csv(BufReader::new(File::open(&csv_path).map_err(io_at(&csv_path))?))?
    } else {
        Vec::new()
    };
    let manifest = ManifestWriter::start(
        &args.out,
        Some(to_config_string(&first)),
        &inputs,
        &["sweep.csv", "sweep_config.txt"],
    )
    .map_err(io_at(&args.out))?;
    let sidecar = args.out.join("sweep_config.txt");
    let mut meta = to_config_string(&base);
    meta.push_str(&format!("# sweep\nsweep.axis = {}\nsweep.values = {}\nsweep.align = {}\n",
        spec.axis,
        spec.values.iter().map(f64::to_string).collect::<Vec<_>>().join(", "),
        spec.align));
    for a in &spec.overrides {
        meta.push_str(&format!("{} = {}\n", a.key, a.value));
    }
    fs::write(&sidecar, meta).map_err(io_at(&sidecar))?;

    // evaluate in thread-sized batches and rewrite the table after each so an
    // interrupted sweep can be resumed
    let batch = rayon::current_num_threads().max(1);
    let mut rows = Vec::with_capacity(spec.values.len());
    for chunk in spec.values.chunks(batch) {
        let part = SweepSpec { values: chunk.to_vec(), ..spec.clone() };
        rows.extend(run_sweep_resuming(&part, &base, &previous)?);
        write_sweep_csv(create(&csv_path)?, &rows).map_err(io_at(&csv_path))?;
        info!("{}/{} sweep points done", rows.len(), spec.values.len());
    }
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    for r in &rows {
        println!("{}", r.to_csv());
    }
    if failed > 0 {
        warn!("{failed} sweep point(s) failed; see the status column");
    }
    manifest
        .finish(if failed > 0 { "completed with failed points" } else { "ok" })
        .map_err(io_at(&args.out))
}

fn analyze(args: &AnalyzeArgs) -> CmdResult {
    let mut assignments = match &args.counts {
        Some(p) => parse_assignments(&read_text(p)?)?,
        None => Vec::new(),
    };
    assignments.extend(parse_overrides(&args.overrides)?);
    let input = parse_counts(&assignments)?;
    let r = &input.record;
    let eta = e2e_efficiency(r)?;
    let mu_mem = noise_floor(r.n_noise_mem, r.n_herald)?;
    let mu_tot = noise_floor(r.n_noise_tot, r.n_herald)?;
    let s = snr(r)?;
    let g2 = g2_retrieved_model(r, input.g2_noise)?;
    let limit = g2_snr_limit(s.value());
    let (b, eta_b) = time_bandwidth_product(input.lifetime_ns, input.bandwidth_mhz, eta.value)?;

    println!("end-to-end efficiency   {eta}");
    println!("noise floor (memory)    {mu_mem}");
    println!("noise floor (total)     {mu_tot}");
    println!("SNR                     {s}");
    println!("g2 model                {g2}");
    println!("g2 thermal limit        {limit:.6}");
    println!("time-bandwidth B        {b:.2}");
    println!("efficiency-scaled B     {eta_b:.4}");
    let snr_field = match s {
        Snr::Finite(e) => format!("{},{}", e.value, e.sigma()),
        Snr::Infinite => "inf,0".to_string(),
    };
    let header = "eta_e2e,eta_e2e_sigma,mu_mem,mu_mem_sigma,mu_tot,mu_tot_sigma,snr,snr_sigma,g2_model,g2_model_sigma,g2_limit,time_bandwidth,eta_time_bandwidth";
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        eta.value, eta.sigma(), mu_mem.value, mu_mem.sigma(), mu_tot.value, mu_tot.sigma(),
        snr_field, g2.value, g2.sigma(), limit, b, eta_b
    );
    println!("{header}");
    println!("{row}");
    if let Some(out) = &args.out {
        let inputs: Vec<&Path> = args.counts.iter().map(PathBuf::as_path).collect();
        let manifest = ManifestWriter::start(out, None, &inputs, &["analysis.csv"]).map_err(io_at(out))?;
        let path = out.join("analysis.csv");
        fs::write(&path, format!("{header}\n{row}\n")).map_err(io_at(&path))?;
        manifest.finish("ok").map_err(io_at(out))?;
    }
    Ok(())
}

fn parse_pair(s: &str, what: &str) -> Result<(u64, u64), Failure> {
    let bad = || Failure::Core(Error::Config(format!("{what}: expected two comma-separated integers, got `{s}`")));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn histogram(args: &HistogramArgs) -> CmdResult {
    let format: TimeTagFormat = args.format.parse()?;
    let file = File::open(&args.input).map_err(io_at(&args.input))?;
    let parsed = parse_timetags(BufReader::new(file), format, args.tolerance_ps)?;
    let hist = arrival_histogram(&parsed.events, args.trigger, args.signal, args.bin_width_ps, args.origin_ps, args.range_ps)?;
    let manifest = ManifestWriter::start(&args.out, None, &[&args.input], &["histogram.csv"]).map_err(io_at(&args.out))?;
    let path = args.out.join("histogram.csv");
    hist.write_csv(create(&path)?).map_err(io_at(&path))?;

    let start = args.window_start_ps.unwrap_or(args.origin_ps);
    println!("events                  {}", parsed.events.len());
    println!("malformed records       {}", parsed.malformed);
    println!("histogram total         {}", hist.total());
    println!("window counts           {}", hist.window_counts(start, args.window_width_ps)?);
    if let Some(channels) = &args.g2 {
        let (a, b) = parse_pair(channels, "--g2")?;
        let gate = args.gate.as_deref().map(|g| parse_pair(g, "--gate")).transpose()?;
        let window = CoincidenceWindow { width_ps: args.coincidence_window_ps, gate };
        let to_ch = |c: u64| u16::try_from(c).map_err(|_| Failure::Core(Error::Config(format!("channel {c} out of range"))));
        let (a, b) = (to_ch(a)?, to_ch(b)?);
        let counts = hbt_counts(&parsed.events, args.trigger, a, b, window)?;
        println!("heralds N_h             {}", counts.n_h);
        println!("N_hA, N_hB, N_hAB       {}, {}, {}", counts.n_ha, counts.n_hb, counts.n_hab);
        println!("conditional g2          {}", counts.g2()?);
        if args.bootstrap > 1 {
            let sd = bootstrap_g2(&parsed.events, args.trigger, a, b, window, args.bootstrap, 0)?;
            println!("bootstrap sigma         {sd:.3e}");
        }
    }
    manifest.finish("ok").map_err(io_at(&args.out))
}

fn read_lifetime_points(path: &Path) -> Result<Vec<LifetimePoint>, Failure> {
    let text = read_text(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("storage_time")) {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::Parse(format!("{}:{}: expected three numbers", path.display(), i + 1)))?;
        if v.len() != 3 {
            return Err(Error::Parse(format!("{}:{}: expected three numbers", path.display(), i + 1)).into());
        }
        points.push(LifetimePoint { storage_time: v[0], eta: v[1], sigma: v[2] });
    }
    Ok(points)
}

fn fit(args: &FitArgs) -> CmdResult {
    let points = read_lifetime_points(&args.input)?;
    let fit = fit_lifetime(&points)?;
    println!("eta0        {}", fit.eta0);
    let (tau, tau_sigma) = match fit.decay {
        Decay::Finite { tau, .. } => {
            println!("tau [ns]    {:.4} ± {:.4}", tau.value, tau.sigma());
            (tau.value.to_string(), tau.sigma().to_string())
        }
        Decay::None { rate } => {
            println!("tau [ns]    no decay resolved (rate {:.3e} ± {:.3e} /ns)", rate.value, rate.sigma());
            ("inf".to_string(), "inf".to_string())
        }
    };
    println!("chi2 / dof  {:.4} / {}", fit.chi2, fit.dof);
    if fit.excluded > 0 {
        println!("excluded    {} non-positive point(s)", fit.excluded);
    }
    if let Some(out) = &args.out {
        let manifest = ManifestWriter::start(out, None, &[&args.input], &["lifetime_fit.csv"]).map_err(io_at(out))?;
        let path = out.join("lifetime_fit.csv");
        let body = format!(
            "eta0,eta0_sigma,tau_ns,tau_sigma_ns,chi2,dof,excluded\n{},{},{},{},{},{},{}\n",
            fit.eta0.value, fit.eta0.sigma(), tau, tau_sigma, fit.chi2, fit.dof, fit.excluded
        );
        fs::write(&path, body).map_err(io_at(&path))?;
        manifest.finish("ok").map_err(io_at(out))?;
    }
    Ok(())
}

fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return };
    match raw.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                warn!("could not size the worker pool: {e}");
            }
        }
        _ => warn!("ignoring {THREADS_ENV}={raw}: expected a positive integer"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Analyze(a) => analyze(a),
        Command::Histogram(a) => histogram(a),
        Command::FitLifetime(a) => fit(a),
        Command::PrintDefaults => {
            print!("{}", to_config_string(&default_experiment_config()));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lmem: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
