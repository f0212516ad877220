//! Command-line front end.
//!
//! Grid parameters come from built-in defaults, then an optional TOML
//! scenario file, then command-line flags, each overriding the previous.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::error::ConfigError;
use crate::heuristic::{compute_fiber_paths, PolicyParams, Request};
use crate::ilp::{build_model, export_lp, ModelParams};
use crate::oracle::cross_validate;
use crate::physics::FiberParams;
use crate::sim::{self, CellRow, Demand, Interval, Metrics, ProbeConfig, TrafficConfig};
use crate::spectrum::SpectrumState;
use crate::topology::{load_topology, Network, NodeId, TopologyConfig};

const BUILTIN_TOPOLOGIES: [(&str, &str); 3] = [
    ("us_backbone", include_str!("../topologies/us_backbone.txt")),
    ("abilene", include_str!("../topologies/abilene.txt")),
    ("ring15", include_str!("../topologies/ring15.txt")),
];

/// Differential-delay bound of the loose parallel policy, 128 ms.
pub const PT1_MAX_DD_PS: i64 = 128_000_000_000;
/// Differential-delay bound of the tight parallel policy, 250 µs.
pub const PT2_MAX_DD_PS: i64 = 250_000_000;

#[derive(Parser, Debug)]
#[command(name = "prsa", version, about = "Multipath routing and spectrum assignment simulator")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the dynamic-traffic grid and write blocking metrics.
    Simulate(GridArgs),
    /// Measure admission of large probe requests over background traffic.
    Probe(ProbeArgs),
    /// Build per-request integer programs and report their size.
    ExportIlp(ExportArgs),
    /// Cross-validate heuristic, exact search and constraint checker.
    #[command(hide = true)]
    OracleCheck(OracleArgs),
    /// Summarize a topology file.
    TopoInfo(TopoArgs),
}

#[derive(Args, Debug, Default, Clone)]
struct FiberArgs {
    /// Dispersion parameter, ps/(nm·km).
    #[arg(long)]
    dispersion: Option<f64>,
    /// Central frequency, THz.
    #[arg(long)]
    central_thz: Option<f64>,
    /// Slot width, GHz.
    #[arg(long)]
    slot_ghz: Option<f64>,
    /// Slot width in nm, overriding the value derived from GHz.
    #[arg(long)]
    slot_nm: Option<f64>,
    /// Propagation speed, km/s.
    #[arg(long)]
    speed: Option<f64>,
}

#[derive(Args, Debug, Default, Clone)]
struct GridArgs {
    /// TOML scenario file; flags override its values.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Topology file, or one of us_backbone, abilene, ring15.
    #[arg(long)]
    topology: Option<String>,
    /// Frequency slots per link.
    #[arg(long)]
    slots: Option<usize>,
    /// Policies: st, pt1 (128 ms), pt2 (250 µs), pt (uses --max-dd) or pt:<delay>.
    #[arg(long = "mode", alias = "policies", value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// Maximum fiber paths per request.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Guard band in slots.
    #[arg(long, value_delimiter = ',')]
    gb: Option<Vec<usize>>,
    /// Differential-delay bound for `pt`, e.g. 500us or 2ms (plain numbers are µs).
    #[arg(long)]
    max_dd: Option<String>,
    /// Demand per request: a slot count or an inclusive range like 1-4.
    #[arg(long, value_delimiter = ',')]
    tr: Option<Vec<String>>,
    /// Offered loads in Erlang.
    #[arg(long = "load", alias = "loads", value_delimiter = ',')]
    loads: Option<Vec<f64>>,
    /// Number of seeds per cell.
    #[arg(long)]
    seeds: Option<u64>,
    /// First seed.
    #[arg(long)]
    seed_base: Option<u64>,
    /// Requests per run.
    #[arg(long)]
    requests: Option<usize>,
    /// Leading fraction of requests excluded from metrics.
    #[arg(long)]
    warmup: Option<f64>,
    /// Output directory.
    #[arg(long, env = "PRSA_OUTPUT_DIR")]
    output: Option<PathBuf>,
    /// Base name of the output files.
    #[arg(long)]
    name: Option<String>,
    /// Maximum concurrent grid cells.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    fiber: FiberArgs,
}

#[derive(Args, Debug, Clone)]
struct ProbeArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Probe demand, e.g. 4-6.
    #[arg(long)]
    probe_tr: Option<String>,
    /// Probes per run.
    #[arg(long)]
    probes: Option<usize>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long, default_value = "us_backbone")]
    topology: String,
    /// Spectrum-path slots per request; routes repeat when fewer exist.
    #[arg(long, default_value_t = 4)]
    paths: usize,
    #[arg(long, default_value_t = 16)]
    slots: usize,
    #[arg(long, default_value_t = 0)]
    gb: usize,
    #[arg(long, default_value = "128ms")]
    max_dd: String,
    #[arg(long, default_value_t = 1)]
    tr: usize,
    /// Only this source node (by name).
    #[arg(long)]
    source: Option<String>,
    /// Only this destination node (by name).
    #[arg(long)]
    dest: Option<String>,
    /// Write the first pair's model in LP format to this file.
    #[arg(long)]
    lp: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    instances: usize,
}

#[derive(Args, Debug)]
struct TopoArgs {
    #[arg(long, default_value = "us_backbone")]
    topology: String,
    #[arg(long)]
    slots: Option<usize>,
}

/// Parses `argv` and runs; returns the process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(cli: Cli) -> Result<i32, ConfigError> {
    match cli.command {
        Command::Simulate(args) => {
            let plan = Plan::resolve(&args, None)?;
            let rows = plan.simulate()?;
            plan.write(&rows)?;
            print!("{}", summary(&rows));
            Ok(0)
        }
        Command::Probe(args) => {
            let plan = Plan::resolve(&args.grid, Some(&args))?;
            let rows = plan.probe()?;
            plan.write(&rows)?;
            print!("{}", summary(&rows));
            Ok(0)
        }
        Command::ExportIlp(args) => export_ilp(&args),
        Command::OracleCheck(args) => {
            let r = cross_validate(args.seed, args.instances);
            println!(
                "instances {}  oracle-feasible {}  heuristic-served {}  checker comparisons {}",
                r.instances, r.oracle_solved, r.heuristic_served, r.band_lists_compared
            );
            for f in &r.failures {
                println!("FAIL {f}");
            }
            Ok(if r.failures.is_empty() { 0 } else { 1 })
        }
        Command::TopoInfo(args) => {
            let net = resolve_topology(&args.topology, None, args.slots.unwrap_or(128), TopologyConfig::default().propagation_speed_km_s)?;
            print!("{}", topo_info(&net));
            Ok(0)
        }
    }
}

/// Loads a topology by path or built-in name. Relative paths are tried
/// against `base` first.
pub fn resolve_topology(spec: &str, base: Option<&Path>, slots: usize, speed: f64) -> Result<Network, ConfigError> {
    let config = TopologyConfig { slots_per_link: slots, propagation_speed_km_s: speed };
    let mut candidates = Vec::new();
    if let Some(b) = base {
        candidates.push(b.join(spec));
    }
    candidates.push(PathBuf::from(spec));
    for path in &candidates {
        if path.is_file() {
            let text = fs::read_to_string(path)
                .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
            return Ok(load_topology(&text, config)?);
        }
    }
    let stem = Path::new(spec).file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
    let stem = if stem == "us" { "us_backbone" } else { stem };
    match BUILTIN_TOPOLOGIES.iter().find(|(n, _)| *n == stem) {
        Some((_, text)) => Ok(load_topology(text, config)?),
        None => Err(ConfigError::Invalid(format!("topology `{spec}` is neither a file nor a built-in name"))),
    }
}

/// `250us`, `128ms`, `1.5s`, `40ns`; a bare number is µs.
pub fn parse_delay_ps(s: &str) -> Result<i64, ConfigError> {
    let t = s.trim();
    let split = t.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num.parse().map_err(|_| ConfigError::Invalid(format!("invalid delay `{s}`")))?;
    let scale = match unit.trim() {
        "" | "us" | "µs" => 1e6,
        "ns" => 1e3,
        "ps" => 1.0,
        "ms" => 1e9,
        "s" => 1e12,
        u => return Err(ConfigError::Invalid(format!("unknown delay unit `{u}` in `{s}`"))),
    };
    Ok((value * scale).round() as i64)
}

#[derive(Clone, Debug, PartialEq)]
struct PolicySpec {
    label: String,
    max_dd_ps: Option<i64>,
}

fn parse_policy(s: &str, max_dd: Option<i64>) -> Result<PolicySpec, ConfigError> {
    let lower = s.trim().to_ascii_lowercase();
    let (label, m) = match lower.as_str() {
        "st" => ("st".to_string(), None),
        "pt1" => ("pt1".to_string(), Some(PT1_MAX_DD_PS)),
        "pt2" => ("pt2".to_string(), Some(PT2_MAX_DD_PS)),
        "pt" => ("pt".to_string(), Some(max_dd.unwrap_or(PT1_MAX_DD_PS))),
        other => match other.strip_prefix("pt:") {
            Some(d) => (lower.clone(), Some(parse_delay_ps(d)?)),
            None => return Err(ConfigError::Invalid(format!("unknown policy `{s}`"))),
        },
    };
    Ok(PolicySpec { label, max_dd_ps: m })
}

/// Scenario-file values; every field optional.
#[derive(Debug, Default)]
struct ScenarioFile {
    dir: Option<PathBuf>,
    table: toml::Table,
}

const SCENARIO_KEYS: [&str; 22] = [
    "name", "topology", "slots", "policies", "k", "gb", "max_dd", "tr", "loads", "seeds", "seed_base",
    "requests", "warmup", "output", "jobs", "dispersion", "central_thz", "slot_ghz", "slot_nm", "speed",
    "probe_tr", "probes",
];

impl ScenarioFile {
    fn load(path: &Path) -> Result<ScenarioFile, ConfigError> {
        let text =
            fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Scenario(e.to_string()))?;
        if let Some(k) = table.keys().find(|k| !SCENARIO_KEYS.contains(&k.as_str())) {
            return Err(ConfigError::Scenario(format!("unknown key `{k}`")));
        }
        Ok(ScenarioFile { dir: path.parent().map(Path::to_path_buf), table })
    }

    fn values(&self, key: &str) -> Option<Vec<&toml::Value>> {
        self.table.get(key).map(|v| match v {
            toml::Value::Array(a) => a.iter().collect(),
            other => vec![other],
        })
    }

    fn strings(&self, key: &str) -> Result<Option<Vec<String>>, ConfigError> {
        self.values(key)
            .map(|vs| {
                vs.into_iter()
                    .map(|v| match v {
                        toml::Value::String(s) => Ok(s.clone()),
                        toml::Value::Integer(i) => Ok(i.to_string()),
                        toml::Value::Float(f) => Ok(f.to_string()),
                        _ => Err(ConfigError::Scenario(format!("`{key}` must hold strings or numbers"))),
                    })
                    .collect()
            })
            .transpose()
    }

    fn string(&self, key: &str) -> Result<Option<String>, ConfigError> {
        Ok(self.strings(key)?.and_then(|v| v.into_iter().next()))
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.values(key)
            .map(|vs| {
                vs.into_iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) => Ok(*i as f64),
                        toml::Value::Float(f) => Ok(*f),
                        _ => Err(ConfigError::Scenario(format!("`{key}` must be numeric"))),
                    })
                    .collect()
            })
            .transpose()
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        Ok(self.floats(key)?.and_then(|v| v.into_iter().next()))
    }

    fn uints(&self, key: &str) -> Result<Option<Vec<u64>>, ConfigError> {
        self.values(key)
            .map(|vs| {
                vs.into_iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                        _ => Err(ConfigError::Scenario(format!("`{key}` must be a non-negative integer"))),
                    })
                    .collect()
            })
            .transpose()
    }

    fn uint(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        Ok(self.uints(key)?.and_then(|v| v.into_iter().next()))
    }
}

/// A fully resolved run grid.
#[derive(Debug)]
struct Plan {
    net: Network,
    fiber: FiberParams,
    policies: Vec<PolicySpec>,
    ks: Vec<usize>,
    gbs: Vec<usize>,
    demands: Vec<Demand>,
    loads: Vec<f64>,
    seeds: Vec<u64>,
    requests: usize,
    warmup: f64,
    output: PathBuf,
    name: String,
    jobs: Option<usize>,
    probe_demand: Demand,
    probes: usize,
}

struct Cell {
    load: f64,
    policy: PolicySpec,
    params: PolicyParams,
    demand: Demand,
    seed: u64,
}

impl Plan {
    fn resolve(args: &GridArgs, probe: Option<&ProbeArgs>) -> Result<Plan, ConfigError> {
        let file = match &args.scenario {
            Some(p) => ScenarioFile::load(p)?,
            None => ScenarioFile::default(),
        };
        let fiber_default = FiberParams::default();
        let fa = &args.fiber;
        let mut fiber = FiberParams {
            dispersion_ps_per_nm_km: fa
                .dispersion
                .or(file.float("dispersion")?)
                .unwrap_or(fiber_default.dispersion_ps_per_nm_km),
            central_frequency_thz: fa
                .central_thz
                .or(file.float("central_thz")?)
                .unwrap_or(fiber_default.central_frequency_thz),
            slot_width_ghz: fa.slot_ghz.or(file.float("slot_ghz")?).unwrap_or(fiber_default.slot_width_ghz),
            propagation_speed_km_s: fa.speed.or(file.float("speed")?).unwrap_or(fiber_default.propagation_speed_km_s),
            slot_width_nm: None,
        };
        if let Some(nm) = fa.slot_nm.or(file.float("slot_nm")?) {
            fiber = fiber.with_slot_width_nm(nm);
        }
        fiber.validate()?;
        let speed = fiber.propagation_speed_km_s;

        let slots = args.slots.or(file.uint("slots")?.map(|v| v as usize)).unwrap_or(128);
        let topo = args.topology.clone().or(file.string("topology")?).unwrap_or_else(|| "us_backbone".into());
        let net = resolve_topology(&topo, file.dir.as_deref(), slots, speed)?;

        let max_dd = match args.max_dd.clone().or(file.string("max_dd")?) {
            Some(s) => Some(parse_delay_ps(&s)?),
            None => None,
        };
        let policy_names = args.policies.clone().or(file.strings("policies")?).unwrap_or_else(|| vec!["st".into(), "pt1".into()]);
        let policies = policy_names.iter().map(|p| parse_policy(p, max_dd)).collect::<Result<Vec<_>, _>>()?;
        let ks = args
            .k
            .clone()
            .or(file.uints("k")?.map(|v| v.into_iter().map(|x| x as usize).collect()))
            .unwrap_or_else(|| vec![30]);
        let gbs = args
            .gb
            .clone()
            .or(file.uints("gb")?.map(|v| v.into_iter().map(|x| x as usize).collect()))
            .unwrap_or_else(|| vec![0]);
        let default_tr = if probe.is_some() { "1-4" } else { "10" };
        let demands = args
            .tr
            .clone()
            .or(file.strings("tr")?)
            .unwrap_or_else(|| vec![default_tr.into()])
            .iter()
            .map(|s| s.parse::<Demand>().map_err(ConfigError::Invalid))
            .collect::<Result<Vec<_>, _>>()?;
        let loads = args.loads.clone().or(file.floats("loads")?).unwrap_or_else(|| vec![50.0]);
        let n_seeds = args.seeds.or(file.uint("seeds")?).unwrap_or(5);
        let seed_base = args.seed_base.or(file.uint("seed_base")?).unwrap_or(1);
        let requests = args.requests.or(file.uint("requests")?.map(|v| v as usize)).unwrap_or(20_000);
        let warmup = args.warmup.or(file.float("warmup")?).unwrap_or(0.1);
        let output = args
            .output
            .clone()
            .or(file.string("output")?.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"));
        let name = args
            .name
            .clone()
            .or(file.string("name")?)
            .unwrap_or_else(|| if probe.is_some() { "probe".into() } else { "simulate".into() });
        let jobs = args.jobs.or(file.uint("jobs")?.map(|v| v as usize));
        let probe_demand = probe
            .and_then(|p| p.probe_tr.clone())
            .or(file.string("probe_tr")?)
            .unwrap_or_else(|| "4-6".into())
            .parse::<Demand>()
            .map_err(ConfigError::Invalid)?;
        let probes = probe.and_then(|p| p.probes).or(file.uint("probes")?.map(|v| v as usize)).unwrap_or(50);

        let plan = Plan {
            net,
            fiber,
            policies,
            ks,
            gbs,
            demands,
            loads,
            seeds: (0..n_seeds).map(|i| seed_base + i).collect(),
            requests,
            warmup,
            output,
            name,
            jobs,
            probe_demand,
            probes,
        };
        plan.check(probe.is_some())?;
        Ok(plan)
    }

    fn check(&self, probing: bool) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let slots = self.net.slots_per_link();
        for grid in [self.policies.len(), self.ks.len(), self.gbs.len(), self.demands.len(), self.loads.len(), self.seeds.len()] {
            if grid == 0 {
                return bad("every grid dimension needs at least one value".into());
            }
        }
        if let Some(k) = self.ks.iter().find(|k| **k == 0) {
            return bad(format!("k must be at least 1, got {k}"));
        }
        if let Some(l) = self.loads.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return bad(format!("load must be positive, got {l}"));
        }
        if let Some(d) = self.demands.iter().find(|d| d.max() > slots) {
            return bad(format!("demand {} exceeds {} slots per link", d.label(), slots));
        }
        if probing && self.probe_demand.max() > slots {
            return bad(format!("probe demand {} exceeds {} slots per link", self.probe_demand.label(), slots));
        }
        if self.requests == 0 {
            return bad("requests must be positive".into());
        }
        if probing && self.probes == 0 {
            return bad("probes must be positive".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        for p in &self.policies {
            if p.max_dd_ps.is_some_and(|m| m < 0) {
                return bad(format!("policy {} has a negative delay bound", p.label));
            }
        }
        let t = TrafficConfig::at_load(self.loads[0], self.demands[0], self.requests, 0);
        TrafficConfig { warmup_fraction: self.warmup, ..t }.validate(&self.net)
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &load in &self.loads {
            for policy in &self.policies {
                for &k in &self.ks {
                    for &gb in &self.gbs {
                        for &demand in &self.demands {
                            for &seed in &self.seeds {
                                let params = match policy.max_dd_ps {
                                    None => PolicyParams::st(k, gb),
                                    Some(m) => PolicyParams::pt(k, gb, m),
                                };
                                cells.push(Cell { load, policy: policy.clone(), params, demand, seed });
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    fn traffic(&self, cell: &Cell) -> TrafficConfig {
        TrafficConfig { warmup_fraction: self.warmup, ..TrafficConfig::at_load(cell.load, cell.demand, self.requests, cell.seed) }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, ConfigError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            b = b.num_threads(j);
        }
        b.build().map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))
    }

    fn row(cell: &Cell, m: &Metrics) -> CellRow {
        CellRow {
            load: cell.load,
            policy: cell.policy.label.clone(),
            k: cell.params.k,
            gb: cell.params.gb,
            max_dd_ps: cell.params.max_dd_ps,
            demand: cell.demand,
            seed: cell.seed,
            offered: m.offered,
            blocked: m.blocked,
            histogram: m.histogram.clone(),
        }
    }

    fn simulate(&self) -> Result<Vec<CellRow>, ConfigError> {
        let cells = self.cells();
        let pool = self.pool()?;
        Ok(pool.install(|| {
            cells
                .par_iter()
                .map(|c| Plan::row(c, &sim::run(&self.net, &self.traffic(c), &c.params, &self.fiber)))
                .collect()
        }))
    }

    fn probe(&self) -> Result<Vec<CellRow>, ConfigError> {
        let cells = self.cells();
        let pool = self.pool()?;
        Ok(pool.install(|| {
            cells
                .par_iter()
                .map(|c| {
                    let cfg = ProbeConfig {
                        background: self.traffic(c),
                        probe_demand: self.probe_demand,
                        probes: self.probes,
                        background_policy: None,
                    };
                    let m = sim::probe(&self.net, &cfg, &c.params, &self.fiber);
                    let mut row = Plan::row(c, &Metrics { offered: m.probes, blocked: m.blocked, histogram: m.histogram });
                    row.demand = self.probe_demand;
                    row
                })
                .collect()
        }))
    }

    fn write(&self, rows: &[CellRow]) -> Result<(), ConfigError> {
        fs::create_dir_all(&self.output)
            .map_err(|source| ConfigError::Io { path: self.output.display().to_string(), source })?;
        write_atomic(&self.output.join(format!("{}.csv", self.name)), &sim::metrics_csv(rows))?;
        write_atomic(&self.output.join(format!("{}_paths.csv", self.name)), &sim::distribution_csv(rows))
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), ConfigError> {
    let io = |source| ConfigError::Io { path: path.display().to_string(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Mean blocking and aggregation per cell across seeds.
fn summary(rows: &[CellRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>8} {:>8} {:>4} {:>3} {:>6} {:>10} {:>10} {:>9}", "load", "policy", "k", "gb", "tr", "blocking", "ci95", "agg");
    let mut i = 0;
    while i < rows.len() {
        let r = &rows[i];
        let same = |o: &CellRow| (o.load, &o.policy, o.k, o.gb, o.demand) == (r.load, &r.policy, r.k, r.gb, r.demand);
        let group: Vec<&CellRow> = rows[i..].iter().take_while(|o| same(o)).collect();
        let blocking = Interval::from_samples(&group.iter().map(|g| g.blocking_probability()).collect::<Vec<_>>());
        let agg = Interval::from_samples(&group.iter().map(|g| g.aggregation_ratio()).collect::<Vec<_>>());
        let ci = if blocking.half_width.is_nan() { "-".to_string() } else { format!("{:.4}", blocking.half_width) };
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>4} {:>3} {:>6} {:>10.4} {:>10} {:>9.4}",
            r.load,
            r.policy,
            r.k,
            r.gb,
            r.demand.label(),
            blocking.mean,
            ci,
            agg.mean
        );
        i += group.len();
    }
    out
}

fn export_ilp(args: &ExportArgs) -> Result<i32, ConfigError> {
    if args.paths == 0 {
        return Err(ConfigError::Invalid("--paths must be at least 1".into()));
    }
    if args.tr == 0 || args.tr > args.slots {
        return Err(ConfigError::Invalid(format!("demand {} must be in 1..={}", args.tr, args.slots)));
    }
    let net = resolve_topology(&args.topology, None, args.slots, TopologyConfig::default().propagation_speed_km_s)?;
    let params = ModelParams {
        slots: args.slots,
        gb: args.gb,
        max_dd_ps: parse_delay_ps(&args.max_dd)?,
        fiber: FiberParams::default(),
        include_gvd: true,
    };
    let node = |n: &Option<String>| n.as_deref().map(|x| net.node(x)).transpose();
    let (only_s, only_d) = (node(&args.source)?, node(&args.dest)?);
    let pairs: Vec<(NodeId, NodeId)> = net
        .nodes()
        .flat_map(|s| net.nodes().map(move |d| (s, d)))
        .filter(|(s, d)| s != d && only_s.is_none_or(|x| x == *s) && only_d.is_none_or(|x| x == *d))
        .collect();
    let state = SpectrumState::for_network(&net);
    let mut totals = [0usize; 4];
    let mut unreachable = 0;
    let mut first_lp = None;
    for &(s, d) in &pairs {
        let routes = compute_fiber_paths(&net, s, d, args.paths);
        if routes.is_empty() {
            unreachable += 1;
            continue;
        }
        let candidates: Vec<_> = (0..args.paths).map(|i| routes[i % routes.len()].clone()).collect();
        let model = build_model(&net, &state, &Request::new(s, d, args.tr), &candidates, &params)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let st = model.stats();
        totals[0] += st.y_vars;
        totals[1] += st.xs_vars;
        totals[2] += st.variables;
        totals[3] += st.constraints;
        if first_lp.is_none() && args.lp.is_some() {
            first_lp = Some(export_lp(&model.system));
        }
    }
    let modeled = pairs.len() - unreachable;
    println!("node pairs: {modeled}");
    if unreachable > 0 {
        println!("unreachable pairs skipped: {unreachable}");
    }
    println!("y variables per request: {}", args.paths * args.slots);
    println!("y variables total: {}", totals[0]);
    println!("slot-arc variables total: {}", totals[1]);
    println!("variables total: {}", totals[2]);
    println!("constraints total: {}", totals[3]);
    if let (Some(path), Some(text)) = (&args.lp, first_lp) {
        write_atomic(path, &text)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn topo_info(net: &Network) -> String {
    let mut out = String::new();
    let lengths: Vec<f64> = net.links().iter().step_by(2).map(|l| l.length_km).collect();
    let total: f64 = lengths.iter().sum();
    let _ = writeln!(out, "nodes: {}", net.num_nodes());
    let _ = writeln!(out, "links: {}", lengths.len());
    let _ = writeln!(out, "arcs: {}", net.num_arcs());
    let _ = writeln!(out, "slots per link: {}", net.slots_per_link());
    let _ = writeln!(out, "max out-degree: {}", net.max_out_degree());
    if !lengths.is_empty() {
        let min = lengths.iter().copied().fold(f64::INFINITY, f64::min);
        let max = lengths.iter().copied().fold(0.0, f64::max);
        let _ = writeln!(out, "link length km: min {min:.1} mean {:.1} max {max:.1}", total / lengths.len() as f64);
    }
    let connected = net.nodes().skip(1).all(|d| !compute_fiber_paths(net, NodeId(0), d, 1).is_empty());
    let _ = writeln!(out, "connected: {}", if connected { "yes" } else { "no" });
    out
}
