use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vranslot::backends::{calibrate_model, create_device, load_observations, BackendOptions, ClockMode, Calibration};
use vranslot::deployment::{
    check_throughput, default_core_plan, run_deployment, validate_placement, DeploymentConfig, InstancePlan, Profile,
    ThroughputTargets, Violation,
};
use vranslot::highphy::SlotTimingRecord;
use vranslot::lpu::{DeviceRegistry, InterfaceGeneration, OpKind};
use vranslot::metrics::{
    export_records, export_report, record_blocks, summarize, Direction, InstanceMetrics, MetricsBundle, ReportFormat,
    RunInfo,
};
use vranslot::slot_api::{bench_csv, bench_json, run_interface_bench, BenchConfig, SlotExecutor};
use vranslot::Error;

#[derive(Parser)]
#[command(name = "vranslot", version, about = "Slot-batched LDPC coding benches, core planning and multi-instance deployments")]
struct Cli {
    /// Seed for payloads, devices and synthetic stage costs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Deployment config (TOML). Command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output format. `bench-interfaces` defaults to csv, everything else to json.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchDirection {
    Encode,
    Decode,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    Virtual,
    Wall,
}

#[derive(Subcommand)]
enum Command {
    /// Mean slot coding time per interface generation and blocks per slot.
    BenchInterfaces {
        #[arg(long, default_value = "t2-emulated")]
        backend: String,
        #[arg(long, value_enum, default_value = "both")]
        direction: BenchDirection,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Largest number of transport blocks per slot.
        #[arg(long, default_value_t = 8)]
        max_tbs: usize,
    },
    /// Fits service-time models to a `direction,generation,n_tb,mean_us` table.
    Calibrate { input: PathBuf },
    /// Default core plans of a server profile, validated.
    Plan {
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Runs several instances over one shared device and reports latencies.
    Deploy {
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        backend: Option<String>,
        /// Length of the run in slots.
        #[arg(long)]
        duration: Option<u64>,
        #[arg(long, value_enum)]
        clock: Option<Clock>,
        /// Also write raw slot records as JSON lines.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, default_value_t = ThroughputTargets::default().dl_mbps)]
        dl_target_mbps: f64,
        #[arg(long, default_value_t = ThroughputTargets::default().ul_mbps)]
        ul_target_mbps: f64,
    },
    /// Summarizes raw samples (one number per line) or slot records (JSON lines).
    Report {
        /// Input file, `-` for stdin.
        input: PathBuf,
    },
}

/// Why the command did not succeed.
enum Failure {
    /// Bad input, configuration or capacity.
    Usage(String),
    /// Ran, but a target was missed or the run itself broke.
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::Capacity(_)
            | Error::Parse(_)
            | Error::DataFile { .. }
            | Error::UnknownBackend(_)
            | Error::CalibrationFailed(_)
            | Error::EmptyInput => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => Some(DeploymentConfig::load(path)?),
        None => None,
    };
    let format = |default: Format| match cli.format.unwrap_or(default) {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    let io = |e: std::io::Error| Failure::Run(e.to_string());
    match cli.command {
        Command::BenchInterfaces { backend, direction, reps, max_tbs } => {
            let kinds = match direction {
                BenchDirection::Encode => vec![OpKind::Encode],
                BenchDirection::Decode => vec![OpKind::Decode],
                BenchDirection::Both => vec![OpKind::Encode, OpKind::Decode],
            };
            if max_tbs == 0 {
                return Err(Failure::Usage("--max-tbs must be at least 1".into()));
            }
            let seed = cli.seed.unwrap_or(BenchConfig::default().seed);
            let device = create_device(&backend, &BackendOptions { seed, ..BackendOptions::default() })?;
            let mut registry = DeviceRegistry::new();
            registry.register(backend.clone(), device);
            let mut exec = SlotExecutor::new(registry.open_queue(&backend, 0)?);
            let bench = BenchConfig { reps, seed, ..BenchConfig::default() };
            let counts: Vec<usize> = (1..=max_tbs).collect();
            let mut rows = Vec::new();
            for kind in kinds {
                rows.extend(run_interface_bench(&mut exec, &bench, kind, &InterfaceGeneration::ALL, &counts)?);
            }
            let text = match format(Format::Csv) {
                ReportFormat::Csv => bench_csv(&rows),
                ReportFormat::Json => bench_json(&rows)?,
            };
            out.write_all(text.as_bytes()).map_err(io)?;
        }
        Command::Calibrate { input } => {
            let cal = calibrate_model(&load_observations(&input)?)?;
            write_calibration(&cal, format(Format::Json), out).map_err(io)?;
        }
        Command::Plan { profile, instances } => {
            let base = config.unwrap_or_default();
            let profile = parse_profile(profile.as_deref())?.unwrap_or(base.profile);
            let n = instances.unwrap_or(base.n_instances);
            let topology = profile.topology();
            let plans = default_core_plan(&topology, n)?;
            let report = validate_placement(&topology, &plans);
            write_plans(profile, &plans, &report.violations, format(Format::Json), out).map_err(io)?;
            if !report.ok() {
                return Err(Failure::Run(format!("{} placement violation(s)", report.violations.len())));
            }
        }
        Command::Deploy { profile, instances, backend, duration, clock, records, dl_target_mbps, ul_target_mbps } => {
            let mut cfg = config.unwrap_or_default();
            if let Some(p) = parse_profile(profile.as_deref())? {
                cfg.profile = p;
            }
            if let Some(n) = instances {
                cfg.n_instances = n;
            }
            if let Some(b) = backend {
                cfg.backend = b;
            }
            if let Some(d) = duration {
                cfg.duration_slots = d;
            }
            if let Some(c) = clock {
                cfg.clock = match c {
                    Clock::Virtual => ClockMode::Virtual,
                    Clock::Wall => ClockMode::Wall,
                };
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let bundle = run_deployment(&cfg)?;
            export_report(&bundle, format(Format::Json), out)?;
            if let Some(path) = records {
                let mut f = std::fs::File::create(&path).map_err(io)?;
                export_records(&bundle.records, &mut f)?;
            }
            let verdicts = check_throughput(&bundle, ThroughputTargets { dl_mbps: dl_target_mbps, ul_mbps: ul_target_mbps });
            let failed: Vec<_> = verdicts.iter().filter(|v| !v.pass()).collect();
            for v in &verdicts {
                eprintln!(
                    "instance {}: DL {:.1} Mbps ({}), UL {:.1} Mbps ({})",
                    v.instance,
                    v.dl_mbps,
                    if v.dl_pass { "ok" } else { "below target" },
                    v.ul_mbps,
                    if v.ul_pass { "ok" } else { "below target" }
                );
            }
            if !failed.is_empty() {
                return Err(Failure::Run(format!("{} of {} instances missed the throughput targets", failed.len(), verdicts.len())));
            }
        }
        Command::Report { input } => {
            let text = read_input(&input).map_err(|e| Failure::Usage(format!("{}: {e}", input.display())))?;
            report(&text, format(Format::Json), out)?;
        }
    }
    Ok(())
}

fn parse_profile(s: Option<&str>) -> Result<Option<Profile>, Failure> {
    s.map(|s| Profile::parse(s).ok_or_else(|| Failure::Usage(format!("unknown profile `{s}` (hpp, ep-rfsoc, vranp)"))))
        .transpose()
}

fn read_input(path: &Path) -> std::io::Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path)
    }
}

fn direction_of(kind: OpKind) -> Direction {
    match kind {
        OpKind::Encode => Direction::Dl,
        OpKind::Decode => Direction::Ul,
    }
}

fn write_calibration(cal: &Calibration, format: ReportFormat, out: &mut dyn Write) -> std::io::Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, cal)?;
            writeln!(out)
        }
        ReportFormat::Csv => {
            writeln!(out, "direction,generation,fixed_per_call_us,per_cb_us,per_tb_us,per_kbit_us,max_rel_residual")?;
            for g in &cal.groups {
                let m = &g.model;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    direction_of(g.kind).as_str(),
                    g.generation.as_str(),
                    m.fixed_per_call_us,
                    m.per_cb_us,
                    m.per_tb_us,
                    m.per_kbit_us,
                    g.max_rel_residual
                )?;
            }
            Ok(())
        }
    }
}

fn write_plans(
    profile: Profile,
    plans: &[InstancePlan],
    violations: &[Violation],
    format: ReportFormat,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        profile: &'a str,
        plans: &'a [InstancePlan],
        violations: &'a [Violation],
    }
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &Doc { profile: profile.as_str(), plans, violations })?;
            writeln!(out)
        }
        ReportFormat::Csv => {
            writeln!(out, "instance,io,worker,l1_tx,l1_rx,system,ru,pool,cores")?;
            for p in plans {
                let r = &p.roles;
                let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    p.instance,
                    r.io,
                    r.worker,
                    r.l1_tx,
                    r.l1_rx,
                    r.system,
                    r.ru,
                    join(&r.pool),
                    join(&r.cores())
                )?;
            }
            Ok(())
        }
    }
}

/// Plain numbers give one distribution; JSON lines are read as slot
/// records and summarized per instance and direction.
fn report(text: &str, format: ReportFormat, out: &mut dyn Write) -> Result<(), Failure> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
    let io = |e: std::io::Error| Failure::Run(e.to_string());
    if lines.first().is_some_and(|l| l.starts_with('{')) {
        let mut records = Vec::with_capacity(lines.len());
        for (i, l) in lines.iter().enumerate() {
            let r: SlotTimingRecord =
                serde_json::from_str(l).map_err(|e| Failure::Usage(format!("record {}: {e}", i + 1)))?;
            records.push(r);
        }
        let mut ids: Vec<u32> = records.iter().map(|r| r.instance).collect();
        ids.sort_unstable();
        ids.dedup();
        let mut instances = Vec::new();
        for id in &ids {
            let own: Vec<SlotTimingRecord> = records.iter().filter(|r| r.instance == *id).cloned().collect();
            instances.push(InstanceMetrics {
                instance: *id,
                cores: Vec::new(),
                failed_at_slot: None,
                failure_reason: None,
                dl: Default::default(),
                ul: Default::default(),
                metrics: record_blocks(&own)?,
            });
        }
        let bundle = MetricsBundle {
            run: RunInfo { n_instances: ids.len(), ..RunInfo::default() },
            instances,
            ..MetricsBundle::default()
        };
        export_report(&bundle, format, out)?;
    } else {
        let mut samples = Vec::with_capacity(lines.len());
        for l in &lines {
            samples.push(l.parse::<f64>().map_err(|e| Failure::Usage(format!("`{l}`: {e}")))?);
        }
        let d = summarize(&samples)?;
        match format {
            ReportFormat::Json => {
                serde_json::to_writer_pretty(&mut *out, &d).map_err(|e| Failure::Run(e.to_string()))?;
                writeln!(out).map_err(io)?;
            }
            ReportFormat::Csv => {
                writeln!(out, "count,min,p10,q1,median,q3,p90,max,mean").map_err(io)?;
                writeln!(out, "{},{},{},{},{},{},{},{},{}", d.count, d.min, d.p10, d.q1, d.median, d.q3, d.p90, d.max, d.mean)
                    .map_err(io)?;
            }
        }
    }
    Ok(())
}
