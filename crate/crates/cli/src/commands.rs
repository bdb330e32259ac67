//! Subcommand implementations: flag resolution (config file < flags),
//! engine calls, and file emission.

use crate::output::{fmt_f64, write_json, CsvWriter};
use crate::CliError;
use burstq::analytic;
use burstq::records as rec;
use burstq::sim;
use burstq::solver;
use burstq::{PriorityDistribution, SelectionProtocol};
use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Read a JSON config file whose keys mirror the flags.
fn load_config<T: for<'de> Deserialize<'de> + Default>(
    path: &Option<PathBuf>,
) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| usage(format!("config file: {e}")))
        }
    }
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone()).or(default)
}

fn require<T: Clone>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| usage(format!("missing required option --{name}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ProtocolName {
    Barabasi,
    Proportional,
}

impl ProtocolName {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "barabasi" => Ok(ProtocolName::Barabasi),
            "proportional" => Ok(ProtocolName::Proportional),
            other => Err(usage(format!(
                "unknown protocol '{other}' (expected barabasi or proportional)"
            ))),
        }
    }
}

/// Parse a tabulated (x, pdf) CSV: one pair per line, '#' comments and an
/// optional `x,pdf` header skipped, linear interpolation between knots.
fn load_density_csv(path: &Path) -> Result<PriorityDistribution, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut xs = Vec::new();
    let mut pdf = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("x,pdf") {
            continue;
        }
        let mut parts = line.split(',');
        let bad = || usage(format!("{}:{}: expected 'x,pdf'", path.display(), lineno + 1));
        let x = parts.next().ok_or_else(bad)?.trim().parse::<f64>().map_err(|_| bad())?;
        let v = parts.next().ok_or_else(bad)?.trim().parse::<f64>().map_err(|_| bad())?;
        xs.push(x);
        pdf.push(v);
    }
    let dist = PriorityDistribution::tabulated(xs, pdf)?;
    dist.validate(256)?;
    Ok(dist)
}

/// Build (protocol, distribution) from resolved name/p/c or a tabulated
/// density file. For the coin-flip protocol c defaults to 0 (support [0,1]);
/// the proportional protocol defaults to the shifted support [0.2, 1].
fn build_model(
    name: ProtocolName,
    p: f64,
    c: Option<f64>,
    dist_csv: &Option<PathBuf>,
) -> Result<(SelectionProtocol, PriorityDistribution, f64), CliError> {
    if let Some(path) = dist_csv {
        if c.is_some() {
            return Err(usage("--c and --dist-csv both set the priority law; pass one"));
        }
        let dist = load_density_csv(path)?;
        let lo = dist.support_lo();
        let protocol = match name {
            ProtocolName::Barabasi if p == 1.0 => SelectionProtocol::highest_first(),
            ProtocolName::Barabasi => SelectionProtocol::barabasi(p)?,
            ProtocolName::Proportional => SelectionProtocol::proportional(p, lo.max(0.0))?,
        };
        return Ok((protocol, dist, lo));
    }
    match name {
        ProtocolName::Barabasi => {
            let c = c.unwrap_or(0.0);
            let protocol = if p == 1.0 {
                SelectionProtocol::highest_first()
            } else {
                SelectionProtocol::barabasi(p)?
            };
            Ok((protocol, PriorityDistribution::uniform(c, 1.0)?, c))
        }
        ProtocolName::Proportional => {
            let c = c.unwrap_or(0.2);
            Ok((
                SelectionProtocol::proportional(p, c)?,
                PriorityDistribution::uniform(c, 1.0)?,
                c,
            ))
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(suffix);
    prefix.with_file_name(name)
}

// ---------------------------------------------------------------- simulate

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// barabasi | proportional
    #[arg(long)]
    protocol: Option<String>,
    /// Mixing parameter in [0, 1].
    #[arg(long)]
    p: Option<f64>,
    /// Lower end of the Uniform(c, 1) priority support.
    #[arg(long)]
    c: Option<f64>,
    /// Buffer length (>= 2; > 2 requires the barabasi protocol).
    #[arg(long, short = 'L', visible_alias = "L")]
    l: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    /// Steps discarded before sampling (default 10000).
    #[arg(long)]
    burnin: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Independent replicas on ChaCha substreams, aggregated in order.
    #[arg(long)]
    replicas: Option<u64>,
    /// Tabulated (x, pdf) CSV priority law instead of Uniform(c, 1).
    #[arg(long)]
    dist_csv: Option<PathBuf>,
    /// Output path prefix (writes <out>_histogram.csv, <out>_summary.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write every post-burn-in old-task priority sample to this CSV.
    #[arg(long)]
    samples_out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateFile {
    protocol: Option<String>,
    p: Option<f64>,
    c: Option<f64>,
    l: Option<usize>,
    steps: Option<u64>,
    burnin: Option<u64>,
    seed: Option<u64>,
    replicas: Option<u64>,
    dist_csv: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SimulateConfig {
    command: &'static str,
    protocol: ProtocolName,
    p: f64,
    c: f64,
    l: usize,
    steps: u64,
    burnin: u64,
    seed: u64,
    replicas: u64,
    dist_csv: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    config: SimulateConfig,
    mean_tau: f64,
    residual_fraction: f64,
    total_executed: u64,
    renewal_count: Option<u64>,
    event_counts: Option<EventCounts>,
}

#[derive(Debug, Serialize)]
struct EventCounts {
    random_new: u64,
    random_old: u64,
    random_other: u64,
    priority: u64,
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let file: SimulateFile = load_config(&args.config)?;
    let name = ProtocolName::parse(&require(
        pick(&args.protocol, &file.protocol, None),
        "protocol",
    )?)?;
    let p = require(pick(&args.p, &file.p, None), "p")?;
    let c = pick(&args.c, &file.c, None);
    let dist_csv = pick(&args.dist_csv, &file.dist_csv, None);
    let config = SimulateConfig {
        command: "simulate",
        protocol: name,
        p,
        c: 0.0, // patched below once the support is resolved
        l: pick(&args.l, &file.l, Some(2)).unwrap(),
        steps: pick(&args.steps, &file.steps, Some(100_000)).unwrap(),
        burnin: pick(&args.burnin, &file.burnin, Some(sim::DEFAULT_BURNIN)).unwrap(),
        seed: pick(&args.seed, &file.seed, Some(0)).unwrap(),
        replicas: pick(&args.replicas, &file.replicas, Some(1)).unwrap(),
        dist_csv: dist_csv.clone(),
    };
    let (protocol, dist, c_resolved) = build_model(name, p, c, &dist_csv)?;
    let config = SimulateConfig { c: c_resolved, ..config };
    if config.replicas == 0 {
        return Err(usage("--replicas must be >= 1"));
    }
    let out = pick(&args.out, &file.out, Some(PathBuf::from("simulate"))).unwrap();

    let run_config = sim::RunConfig {
        l: config.l,
        protocol,
        dist,
        steps: config.steps,
        burnin: config.burnin,
        seed: config.seed,
    };
    let outputs = sim::run_replicas(&run_config, config.replicas)?;

    let mut histogram = sim::WaitingTimeHistogram::default();
    let mut events: Option<sim::EventStats> = None;
    let mut residual_total: u128 = 0;
    for output in &outputs {
        histogram.merge(&output.histogram);
        residual_total += output
            .histogram
            .residuals
            .iter()
            .map(|&r| r as u128)
            .sum::<u128>();
        if let Some(stats) = &output.event_stats {
            events.get_or_insert_with(sim::EventStats::default).merge(stats);
        }
    }

    let mut csv = CsvWriter::create(&with_suffix(&out, "_histogram.csv"), &config, "k,count")?;
    for (&k, &count) in &histogram.counts {
        csv.row(&[k.to_string(), count.to_string()])?;
    }
    csv.finish()?;

    if let Some(samples_path) = &args.samples_out {
        let mut csv = CsvWriter::create(samples_path, &config, "x")?;
        for output in &outputs {
            for &x in &output.old_priority_samples {
                csv.row(&[fmt_f64(x)])?;
            }
        }
        csv.finish()?;
    }

    let summary = SimulateSummary {
        mean_tau: histogram.mean_tau(),
        residual_fraction: residual_total as f64 / (config.steps * config.replicas) as f64,
        total_executed: histogram.total_executed,
        renewal_count: events.as_ref().map(|e| e.renewals),
        event_counts: events.as_ref().map(|e| EventCounts {
            random_new: e.random_new,
            random_old: e.random_old,
            random_other: e.random_other,
            priority: e.priority,
        }),
        config,
    };
    write_json(&with_suffix(&out, "_summary.json"), &summary)
}

// ------------------------------------------------------------------- solve

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mixing parameter of the proportional protocol.
    #[arg(long)]
    p: Option<f64>,
    /// Lower end of the Uniform(c, 1) support.
    #[arg(long)]
    c: Option<f64>,
    /// Quadrature nodes (default 256).
    #[arg(long)]
    nodes: Option<usize>,
    /// Splitting constant; defaults to (1-p)/2.
    #[arg(long)]
    c1_split: Option<f64>,
    /// Series truncation tolerance (default 1e-10).
    #[arg(long)]
    tol: Option<f64>,
    /// Maximum Neumann terms (default 200).
    #[arg(long)]
    max_terms: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveFile {
    p: Option<f64>,
    c: Option<f64>,
    nodes: Option<usize>,
    c1_split: Option<f64>,
    tol: Option<f64>,
    max_terms: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SolveConfig {
    command: &'static str,
    protocol: &'static str,
    p: f64,
    c: f64,
    nodes: usize,
    c1_split: Option<f64>,
    tol: f64,
    max_terms: usize,
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    config: SolveConfig,
    hs_norm: f64,
    n_terms: usize,
    converged: bool,
    residual: f64,
    tail_bound: f64,
    mass_raw: f64,
}

pub fn solve(args: SolveArgs) -> Result<(), CliError> {
    let file: SolveFile = load_config(&args.config)?;
    let config = SolveConfig {
        command: "solve",
        protocol: "proportional",
        p: require(pick(&args.p, &file.p, None), "p")?,
        c: require(pick(&args.c, &file.c, None), "c")?,
        nodes: pick(&args.nodes, &file.nodes, Some(256)).unwrap(),
        c1_split: pick(&args.c1_split, &file.c1_split, None),
        tol: pick(&args.tol, &file.tol, Some(solver::DEFAULT_TOL)).unwrap(),
        max_terms: pick(&args.max_terms, &file.max_terms, Some(solver::DEFAULT_MAX_TERMS))
            .unwrap(),
    };
    let out = pick(&args.out, &file.out, Some(PathBuf::from("solve"))).unwrap();

    let protocol = SelectionProtocol::proportional(config.p, config.c)?;
    let dist = PriorityDistribution::uniform(config.c, 1.0)?;
    let grid = burstq::QuadratureGrid::with_nodes(config.c, 1.0, config.nodes);
    let assembly = solver::assemble(&protocol, &dist, &grid, config.c1_split)?;
    let solution = solver::solve(&assembly, config.tol, config.max_terms)?;
    let mass = solution.mass();

    let mut csv = CsvWriter::create(
        &with_suffix(&out, "_density.csv"),
        &config,
        "x,r1_raw,r1_normalized",
    )?;
    for (i, &x) in solution.grid.nodes().iter().enumerate() {
        let raw = solution.r1[i];
        csv.row(&[fmt_f64(x), fmt_f64(raw), fmt_f64(raw / mass)])?;
    }
    csv.finish()?;

    let summary = SolveSummary {
        hs_norm: solution.hs_norm,
        n_terms: solution.n_terms,
        converged: solution.converged,
        residual: solution.residual,
        tail_bound: solution.tail_bound,
        mass_raw: mass,
        config,
    };
    write_json(&with_suffix(&out, "_summary.json"), &summary)
}

// -------------------------------------------------------------------- scan

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// c grid as start:end:step, e.g. 0.05:0.5:0.05.
    #[arg(long)]
    c_range: Option<String>,
    /// p grid as start:end:step, e.g. 0.1:0.99:0.01.
    #[arg(long)]
    p_range: Option<String>,
    /// Quadrature nodes per norm evaluation (default 128).
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanFile {
    c_range: Option<String>,
    p_range: Option<String>,
    nodes: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ScanConfig {
    command: &'static str,
    c_range: String,
    p_range: String,
    nodes: usize,
}

fn parse_range(text: &str, name: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(usage(format!("--{name} expects start:end:step, got '{text}'")));
    }
    let parse = |s: &str| -> Result<f64, CliError> {
        s.parse::<f64>()
            .map_err(|_| usage(format!("--{name}: '{s}' is not a number")))
    };
    let (start, end, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if step <= 0.0 || end < start {
        return Err(usage(format!("--{name}: need start <= end and step > 0")));
    }
    let mut values = Vec::new();
    let mut i = 0u32;
    loop {
        let v = start + step * i as f64;
        if v > end + 1e-12 {
            break;
        }
        values.push(v);
        i += 1;
    }
    Ok(values)
}

pub fn scan(args: ScanArgs) -> Result<(), CliError> {
    let file: ScanFile = load_config(&args.config)?;
    let config = ScanConfig {
        command: "scan",
        c_range: require(pick(&args.c_range, &file.c_range, None), "c-range")?,
        p_range: require(pick(&args.p_range, &file.p_range, None), "p-range")?,
        nodes: pick(&args.nodes, &file.nodes, Some(128)).unwrap(),
    };
    let out = pick(&args.out, &file.out, Some(PathBuf::from("scan"))).unwrap();
    let c_values = parse_range(&config.c_range, "c-range")?;
    let p_values = parse_range(&config.p_range, "p-range")?;
    let points = solver::scan_region(&c_values, &p_values, config.nodes)?;

    let mut csv = CsvWriter::create(
        &with_suffix(&out, "_region.csv"),
        &config,
        "p,c,hs_norm,converges",
    )?;
    for pt in &points {
        csv.row(&[
            fmt_f64(pt.p),
            fmt_f64(pt.c),
            fmt_f64(pt.hs_norm),
            pt.converges.to_string(),
        ])?;
    }
    csv.finish()
}

// --------------------------------------------------------------------- pmf

#[derive(Args, Debug)]
pub struct PmfArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// barabasi | proportional
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// Largest waiting time tabulated (default 100).
    #[arg(long)]
    kmax: Option<u32>,
    /// Quadrature nodes for the proportional solve (default 256).
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PmfFile {
    protocol: Option<String>,
    p: Option<f64>,
    c: Option<f64>,
    kmax: Option<u32>,
    nodes: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PmfConfig {
    command: &'static str,
    protocol: ProtocolName,
    p: f64,
    c: f64,
    kmax: u32,
    nodes: usize,
}

pub fn pmf(args: PmfArgs) -> Result<(), CliError> {
    let file: PmfFile = load_config(&args.config)?;
    let name = ProtocolName::parse(&require(
        pick(&args.protocol, &file.protocol, None),
        "protocol",
    )?)?;
    let p = require(pick(&args.p, &file.p, None), "p")?;
    let c = pick(&args.c, &file.c, None);
    let kmax = pick(&args.kmax, &file.kmax, Some(100)).unwrap();
    let nodes = pick(&args.nodes, &file.nodes, Some(256)).unwrap();
    let out = pick(&args.out, &file.out, Some(PathBuf::from("pmf"))).unwrap();
    if kmax == 0 {
        return Err(usage("--kmax must be >= 1"));
    }

    match name {
        ProtocolName::Barabasi => {
            if c.is_some_and(|c| c != 0.0) {
                return Err(usage(
                    "the closed-form pmf of the barabasi protocol applies to Uniform(0,1); \
                     omit --c or pass 0",
                ));
            }
            let config = PmfConfig {
                command: "pmf",
                protocol: name,
                p,
                c: 0.0,
                kmax,
                nodes,
            };
            let mut csv = CsvWriter::create(
                &with_suffix(&out, "_pmf.csv"),
                &config,
                "k,probability,ln_k,ln_probability",
            )?;
            for k in 1..=kmax {
                let prob = analytic::barabasi_tau_pmf(p, k)?;
                csv.row(&[
                    k.to_string(),
                    fmt_f64(prob),
                    fmt_f64((k as f64).ln()),
                    fmt_f64(prob.ln()),
                ])?;
            }
            csv.finish()
        }
        ProtocolName::Proportional => {
            let c = c.unwrap_or(0.2);
            let config = PmfConfig {
                command: "pmf",
                protocol: name,
                p,
                c,
                kmax,
                nodes,
            };
            let protocol = SelectionProtocol::proportional(p, c)?;
            let dist = PriorityDistribution::uniform(c, 1.0)?;
            let grid = burstq::QuadratureGrid::with_nodes(c, 1.0, nodes);
            let assembly = solver::assemble(&protocol, &dist, &grid, None)?;
            let solution =
                solver::solve(&assembly, solver::DEFAULT_TOL, solver::DEFAULT_MAX_TERMS)?;
            let r1 = solution.normalized().density();
            let pmf = analytic::tau_pmf_general_upto(&protocol, &dist, &r1, kmax)?;

            let mut csv = CsvWriter::create(
                &with_suffix(&out, "_pmf.csv"),
                &config,
                "k,probability,lower,upper,ln_k,ln_probability",
            )?;
            for k in 1..=kmax {
                let prob = pmf[k as usize - 1];
                let (lower, upper) = if k >= 2 {
                    let b = solver::tau_bounds(p, c, k)?;
                    (fmt_f64(b.lower), fmt_f64(b.upper))
                } else {
                    (String::new(), String::new())
                };
                csv.row(&[
                    k.to_string(),
                    fmt_f64(prob),
                    lower,
                    upper,
                    fmt_f64((k as f64).ln()),
                    fmt_f64(prob.ln()),
                ])?;
            }
            csv.finish()
        }
    }
}

// ----------------------------------------------------------------- records

#[derive(Args, Debug)]
pub struct RecordsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Record index the test battery targets (default 25).
    #[arg(long)]
    k_target: Option<usize>,
    /// Independent record chains (default 2000).
    #[arg(long)]
    n_runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordsFile {
    k_target: Option<usize>,
    n_runs: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct RecordsConfig {
    command: &'static str,
    k_target: usize,
    n_runs: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct RecordsBattery {
    config: RecordsConfig,
    slln_t: f64,
    slln_delta: f64,
    clt_ks_t: f64,
    clt_ks_delta: f64,
    ratio_ks: f64,
    lil_band: f64,
}

pub fn records(args: RecordsArgs) -> Result<(), CliError> {
    let file: RecordsFile = load_config(&args.config)?;
    let config = RecordsConfig {
        command: "records",
        k_target: pick(&args.k_target, &file.k_target, Some(25)).unwrap(),
        n_runs: pick(&args.n_runs, &file.n_runs, Some(2000)).unwrap(),
        seed: pick(&args.seed, &file.seed, Some(0)).unwrap(),
    };
    let out = pick(&args.out, &file.out, Some(PathBuf::from("records"))).unwrap();

    let stats = rec::asymptotic_tests(config.n_runs, config.k_target, config.seed)?;

    // trace of chain stream 1 (the first battery run)
    let chain = rec::sample_record_chain_seeded(config.k_target, config.seed, 1);
    let mut csv = CsvWriter::create(
        &with_suffix(&out, "_trace.csv"),
        &config,
        "k,T_k,delta_k,value",
    )?;
    const EXACT: f64 = 9.007199254740992e15; // 2^53
    let fmt_time = |ln_v: f64| {
        let v = ln_v.exp();
        if v < EXACT {
            format!("{}", v.round() as u64)
        } else {
            fmt_f64(v)
        }
    };
    for k in 1..=config.k_target {
        let delta = if k >= 2 {
            fmt_time(chain.ln_gaps[k - 2])
        } else {
            String::new()
        };
        csv.row(&[
            k.to_string(),
            fmt_time(chain.ln_times[k - 1]),
            delta,
            fmt_f64(chain.ln_values[k - 1].exp()),
        ])?;
    }
    csv.finish()?;

    let battery = RecordsBattery {
        config,
        slln_t: stats.slln_t,
        slln_delta: stats.slln_delta,
        clt_ks_t: stats.clt_ks_t,
        clt_ks_delta: stats.clt_ks_delta,
        ratio_ks: stats.ratio_ks,
        lil_band: stats.lil_band,
    };
    write_json(&with_suffix(&out, "_battery.json"), &battery)
}
