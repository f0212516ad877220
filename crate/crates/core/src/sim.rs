//! Event-driven dynamic-traffic simulation.
//!
//! Arrivals are Poisson, holding times exponential. Every random quantity
//! comes from its own ChaCha8 stream derived from the run seed:
//!
//! | stream | purpose                  |
//! |--------|--------------------------|
//! | 0      | inter-arrival times      |
//! | 1      | holding times            |
//! | 2      | source/destination pairs |
//! | 3      | demands                  |
//! | 4      | probe pairs              |
//! | 5      | probe demands            |
//!
//! Each request consumes exactly one draw from streams 0 to 3 whether or not
//! it is served, so two policies run on the same seed see the same traffic.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::ConfigError;
use crate::heuristic::{
    assign_spectrum, commit, compute_fiber_paths, release_solution, FiberPath, Outcome, PolicyParams, Request,
    Solution,
};
use crate::physics::FiberParams;
use crate::spectrum::SpectrumState;
use crate::topology::{Network, NodeId};

const STREAM_ARRIVAL: u64 = 0;
const STREAM_HOLDING: u64 = 1;
const STREAM_PAIR: u64 = 2;
const STREAM_DEMAND: u64 = 3;
const STREAM_PROBE_PAIR: u64 = 4;
const STREAM_PROBE_DEMAND: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Demand {
    Fixed(usize),
    /// Inclusive range.
    Uniform { lo: usize, hi: usize },
}

impl Demand {
    pub fn max(&self) -> usize {
        match *self {
            Demand::Fixed(n) => n,
            Demand::Uniform { hi, .. } => hi,
        }
    }

    fn min(&self) -> usize {
        match *self {
            Demand::Fixed(n) => n,
            Demand::Uniform { lo, .. } => lo,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        match *self {
            Demand::Fixed(n) => n,
            Demand::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }

    /// `5` or `1-4`.
    pub fn label(&self) -> String {
        match *self {
            Demand::Fixed(n) => n.to_string(),
            Demand::Uniform { lo, hi } => format!("{lo}-{hi}"),
        }
    }
}

impl std::str::FromStr for Demand {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("invalid demand `{s}`"));
        match s.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if lo == 0 || lo > hi {
                    return Err(format!("invalid demand range `{s}`"));
                }
                Ok(if lo == hi { Demand::Fixed(lo) } else { Demand::Uniform { lo, hi } })
            }
            None => match num(s)? {
                0 => Err("demand must be at least one slot".into()),
                n => Ok(Demand::Fixed(n)),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PairSelection {
    /// Uniform over ordered pairs of distinct nodes.
    Uniform,
    /// Uniform over the listed pairs.
    Fixed(Vec<(NodeId, NodeId)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficConfig {
    pub arrival_rate: f64,
    pub mean_holding: f64,
    pub demand: Demand,
    pub requests: usize,
    pub seed: u64,
    /// Leading fraction of requests left out of the metrics.
    pub warmup_fraction: f64,
    pub pairs: PairSelection,
}

impl TrafficConfig {
    /// Unit arrival rate, holding time set by `load` in Erlang.
    pub fn at_load(load: f64, demand: Demand, requests: usize, seed: u64) -> TrafficConfig {
        TrafficConfig {
            arrival_rate: 1.0,
            mean_holding: load,
            demand,
            requests,
            seed,
            warmup_fraction: 0.1,
            pairs: PairSelection::Uniform,
        }
    }

    pub fn load(&self) -> f64 {
        self.arrival_rate * self.mean_holding
    }

    pub fn warmup(&self) -> usize {
        (self.requests as f64 * self.warmup_fraction).floor() as usize
    }

    pub fn validate(&self, net: &Network) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return bad(format!("arrival rate must be positive, got {}", self.arrival_rate));
        }
        if !(self.mean_holding.is_finite() && self.mean_holding > 0.0) {
            return bad(format!("mean holding time must be positive, got {}", self.mean_holding));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warm-up fraction must be in [0, 1), got {}", self.warmup_fraction));
        }
        if self.demand.min() == 0 || self.demand.min() > self.demand.max() {
            return bad(format!("invalid demand range {}", self.demand.label()));
        }
        if self.demand.max() > net.slots_per_link() {
            return bad(format!("demand {} exceeds {} slots per link", self.demand.max(), net.slots_per_link()));
        }
        match &self.pairs {
            PairSelection::Uniform if net.num_nodes() < 2 => bad("need at least two nodes".into()),
            PairSelection::Fixed(p) if p.is_empty() => bad("empty pair list".into()),
            PairSelection::Fixed(p) => match p.iter().find(|(s, d)| s == d || !net.contains(*s) || !net.contains(*d)) {
                Some(x) => bad(format!("invalid pair {x:?}")),
                None => Ok(()),
            },
            PairSelection::Uniform => Ok(()),
        }
    }
}

fn draw_pair(pairs: &PairSelection, n: usize, rng: &mut ChaCha8Rng) -> (NodeId, NodeId) {
    match pairs {
        PairSelection::Uniform => {
            let idx = rng.random_range(0..n * (n - 1));
            let s = idx / (n - 1);
            let d = idx % (n - 1);
            (NodeId(s), NodeId(if d >= s { d + 1 } else { d }))
        }
        PairSelection::Fixed(list) => list[rng.random_range(0..list.len())],
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    pub offered: u64,
    pub blocked: u64,
    /// `histogram[n - 1]` counts connections served over `n` spectrum paths.
    pub histogram: Vec<u64>,
}

impl Metrics {
    pub fn served(&self) -> u64 {
        self.offered - self.blocked
    }

    pub fn blocking_probability(&self) -> f64 {
        if self.offered == 0 {
            0.0
        } else {
            self.blocked as f64 / self.offered as f64
        }
    }

    /// Fraction of served connections that used two or more spectrum paths.
    pub fn aggregation_ratio(&self) -> f64 {
        let served = self.served();
        if served == 0 {
            0.0
        } else {
            1.0 - self.histogram.first().copied().unwrap_or(0) as f64 / served as f64
        }
    }

    fn record(&mut self, outcome: &Outcome) {
        self.offered += 1;
        match outcome {
            Outcome::Blocked => self.blocked += 1,
            Outcome::Served(s) => {
                let n = s.paths.len();
                if self.histogram.len() < n {
                    self.histogram.resize(n, 0);
                }
                self.histogram[n - 1] += 1;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Arrival,
    Departure(usize),
}

/// Pending events ordered by time, then insertion order.
#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Reverse<(Time, u64, Event)>>,
    seq: u64,
}

impl EventQueue {
    fn push(&mut self, at: f64, ev: Event) {
        self.heap.push(Reverse((Time(at), self.seq, ev)));
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<(f64, Event)> {
        self.heap.pop().map(|Reverse((t, _, e))| (t.0, e))
    }
}

/// Lazily computed fiber paths per node pair.
pub struct PathCache<'a> {
    net: &'a Network,
    k: usize,
    paths: HashMap<(NodeId, NodeId), Vec<FiberPath>>,
}

impl<'a> PathCache<'a> {
    pub fn new(net: &'a Network, k: usize) -> PathCache<'a> {
        PathCache { net, k, paths: HashMap::new() }
    }

    pub fn get(&mut self, s: NodeId, d: NodeId) -> &[FiberPath] {
        let (net, k) = (self.net, self.k);
        self.paths.entry((s, d)).or_insert_with(|| compute_fiber_paths(net, s, d, k))
    }
}

/// Runs traffic through the network, admitting with `policy`.
pub fn run(net: &Network, traffic: &TrafficConfig, policy: &PolicyParams, fiber: &FiberParams) -> Metrics {
    simulate(net, traffic, policy, fiber, false).expect("unaudited run cannot fail")
}

/// As [`run`], checking spectrum and admission invariants after every
/// event and that the network is empty at the end.
pub fn run_audited(
    net: &Network,
    traffic: &TrafficConfig,
    policy: &PolicyParams,
    fiber: &FiberParams,
) -> Result<Metrics, String> {
    simulate(net, traffic, policy, fiber, true)
}

fn simulate(
    net: &Network,
    traffic: &TrafficConfig,
    policy: &PolicyParams,
    fiber: &FiberParams,
    audit: bool,
) -> Result<Metrics, String> {
    let mut bg = Background::new(net, traffic, *policy, *fiber);
    let mut metrics = Metrics::default();
    let warmup = traffic.warmup();
    while let Some(step) = bg.step() {
        if let Step::Arrival { index, outcome, req } = &step {
            if *index >= warmup {
                metrics.record(outcome);
            }
            if audit {
                if let Outcome::Served(sol) = outcome {
                    sol.validate(req, policy).map_err(|e| format!("request {index}: {e}"))?;
                }
            }
        }
        if audit {
            bg.state.audit(policy.gb)?;
        }
    }
    if audit && !bg.state.is_clear() {
        return Err(format!("{} allocations left after the last departure", bg.state.active_count()));
    }
    Ok(metrics)
}

enum Step {
    Arrival { index: usize, req: Request, outcome: Outcome },
    Departure,
}

/// The arrival/departure process with its spectrum state.
struct Background<'a> {
    net: &'a Network,
    traffic: &'a TrafficConfig,
    policy: PolicyParams,
    fiber: FiberParams,
    state: SpectrumState,
    cache: PathCache<'a>,
    queue: EventQueue,
    live: HashMap<usize, Solution>,
    arrivals: ChaCha8Rng,
    holding: ChaCha8Rng,
    pairs: ChaCha8Rng,
    demands: ChaCha8Rng,
    inter: Exp<f64>,
    hold: Exp<f64>,
    issued: usize,
}

impl<'a> Background<'a> {
    fn new(net: &'a Network, traffic: &'a TrafficConfig, policy: PolicyParams, fiber: FiberParams) -> Background<'a> {
        let mut arrivals = stream(traffic.seed, STREAM_ARRIVAL);
        let inter = Exp::new(traffic.arrival_rate).expect("positive arrival rate");
        let hold = Exp::new(1.0 / traffic.mean_holding).expect("positive holding time");
        let mut queue = EventQueue::default();
        if traffic.requests > 0 {
            queue.push(inter.sample(&mut arrivals), Event::Arrival);
        }
        Background {
            net,
            traffic,
            policy,
            fiber,
            state: SpectrumState::for_network(net),
            cache: PathCache::new(net, policy.k),
            queue,
            live: HashMap::new(),
            arrivals,
            holding: stream(traffic.seed, STREAM_HOLDING),
            pairs: stream(traffic.seed, STREAM_PAIR),
            demands: stream(traffic.seed, STREAM_DEMAND),
            inter,
            hold,
            issued: 0,
        }
    }

    fn step(&mut self) -> Option<Step> {
        let (now, ev) = self.queue.pop()?;
        match ev {
            Event::Departure(id) => {
                if let Some(sol) = self.live.remove(&id) {
                    release_solution(&mut self.state, &sol);
                }
                Some(Step::Departure)
            }
            Event::Arrival => {
                let index = self.issued;
                self.issued += 1;
                if self.issued < self.traffic.requests {
                    let next = now + self.inter.sample(&mut self.arrivals);
                    self.queue.push(next, Event::Arrival);
                }
                let (s, d) = draw_pair(&self.traffic.pairs, self.net.num_nodes(), &mut self.pairs);
                let demand = self.traffic.demand.draw(&mut self.demands);
                let holding = self.hold.sample(&mut self.holding);
                let req = Request { source: s, destination: d, demand, arrival: now, holding };
                let paths = self.cache.get(s, d);
                let outcome = match assign_spectrum(&self.state, self.net, paths, &req, &self.policy, &self.fiber) {
                    Outcome::Served(mut sol) => {
                        if commit(&mut self.state, &mut sol, self.policy.gb) {
                            self.live.insert(index, sol.clone());
                            self.queue.push(now + holding, Event::Departure(index));
                            Outcome::Served(sol)
                        } else {
                            Outcome::Blocked
                        }
                    }
                    Outcome::Blocked => Outcome::Blocked,
                };
                Some(Step::Arrival { index, req, outcome })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub background: TrafficConfig,
    pub probe_demand: Demand,
    /// Probes per run, spread evenly over the post-warm-up arrivals.
    pub probes: usize,
    /// Policy serving background traffic; `None` uses the probed policy.
    pub background_policy: Option<PolicyParams>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProbeMetrics {
    pub probes: u64,
    pub blocked: u64,
    pub histogram: Vec<u64>,
    /// The background traffic's own metrics.
    pub background: Metrics,
}

impl ProbeMetrics {
    pub fn blocking_probability(&self) -> f64 {
        if self.probes == 0 {
            0.0
        } else {
            self.blocked as f64 / self.probes as f64
        }
    }
}

/// Measures whether probe requests would be admitted on top of running
/// background traffic. Probes never change the spectrum state.
pub fn probe(net: &Network, cfg: &ProbeConfig, policy: &PolicyParams, fiber: &FiberParams) -> ProbeMetrics {
    probe_many(net, cfg, std::slice::from_ref(policy), fiber).pop().unwrap()
}

/// Evaluates several policies against the same probe points. All policies
/// see one background run, served by `cfg.background_policy` (or the first
/// policy when unset).
pub fn probe_many(net: &Network, cfg: &ProbeConfig, policies: &[PolicyParams], fiber: &FiberParams) -> Vec<ProbeMetrics> {
    let traffic = &cfg.background;
    let bg_policy = cfg.background_policy.unwrap_or(policies[0]);
    let mut bg = Background::new(net, traffic, bg_policy, *fiber);
    let warmup = traffic.warmup();
    let window = traffic.requests.saturating_sub(warmup);
    let points: Vec<usize> = (1..=cfg.probes).map(|i| warmup + i * window / (cfg.probes + 1)).collect();
    let mut next_point = 0;
    let mut probe_pairs = stream(traffic.seed, STREAM_PROBE_PAIR);
    let mut probe_demands = stream(traffic.seed, STREAM_PROBE_DEMAND);
    let mut caches: Vec<PathCache> = policies.iter().map(|p| PathCache::new(net, p.k)).collect();
    let mut out = vec![ProbeMetrics::default(); policies.len()];

    while let Some(step) = bg.step() {
        let Step::Arrival { index, outcome, .. } = step else { continue };
        if index >= warmup {
            out[0].background.record(&outcome);
        }
        while next_point < points.len() && points[next_point] == index {
            next_point += 1;
            let (s, d) = draw_pair(&traffic.pairs, net.num_nodes(), &mut probe_pairs);
            let req = Request::new(s, d, cfg.probe_demand.draw(&mut probe_demands));
            for ((m, p), cache) in out.iter_mut().zip(policies).zip(caches.iter_mut()) {
                let o = assign_spectrum(&bg.state, net, cache.get(s, d), &req, p, fiber);
                m.probes += 1;
                match o {
                    Outcome::Blocked => m.blocked += 1,
                    Outcome::Served(sol) => {
                        let n = sol.paths.len();
                        if m.histogram.len() < n {
                            m.histogram.resize(n, 0);
                        }
                        m.histogram[n - 1] += 1;
                    }
                }
            }
        }
    }
    let bg_metrics = out[0].background.clone();
    for m in &mut out {
        m.background = bg_metrics.clone();
    }
    out
}

/// Mean with a two-sided 95% Student-t interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn from_samples(xs: &[f64]) -> Interval {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Interval { mean, half_width: f64::NAN };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n >= 2").inverse_cdf(0.975);
        Interval { mean, half_width: t * (var / n as f64).sqrt() }
    }

    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo() <= x && x <= self.hi()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Replication {
    pub seeds: Vec<u64>,
    pub runs: Vec<Metrics>,
    pub blocking: Interval,
    pub aggregation: Interval,
}

/// Runs `traffic` once per seed, in parallel, and summarizes.
pub fn replicate(
    net: &Network,
    traffic: &TrafficConfig,
    policy: &PolicyParams,
    fiber: &FiberParams,
    seeds: &[u64],
) -> Result<Replication, ConfigError> {
    if seeds.len() < 2 {
        return Err(ConfigError::Invalid("replication needs at least two seeds".into()));
    }
    traffic.validate(net)?;
    let runs: Vec<Metrics> = seeds
        .par_iter()
        .map(|&seed| run(net, &TrafficConfig { seed, ..traffic.clone() }, policy, fiber))
        .collect();
    let blocking: Vec<f64> = runs.iter().map(Metrics::blocking_probability).collect();
    let aggregation: Vec<f64> = runs.iter().map(Metrics::aggregation_ratio).collect();
    Ok(Replication {
        seeds: seeds.to_vec(),
        blocking: Interval::from_samples(&blocking),
        aggregation: Interval::from_samples(&aggregation),
        runs,
    })
}

/// One grid cell of a metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct CellRow {
    pub load: f64,
    pub policy: String,
    pub k: usize,
    pub gb: usize,
    pub max_dd_ps: i64,
    pub demand: Demand,
    pub seed: u64,
    pub offered: u64,
    pub blocked: u64,
    pub histogram: Vec<u64>,
}

impl CellRow {
    pub fn blocking_probability(&self) -> f64 {
        Metrics { offered: self.offered, blocked: self.blocked, histogram: self.histogram.clone() }.blocking_probability()
    }

    pub fn aggregation_ratio(&self) -> f64 {
        Metrics { offered: self.offered, blocked: self.blocked, histogram: self.histogram.clone() }.aggregation_ratio()
    }
}

fn key_fields(r: &CellRow) -> Vec<String> {
    vec![
        format!("{}", r.load),
        r.policy.clone(),
        r.k.to_string(),
        r.gb.to_string(),
        r.max_dd_ps.to_string(),
        r.demand.label(),
        r.seed.to_string(),
    ]
}

const KEY_HEADER: [&str; 7] = ["load", "policy", "k", "gb", "max_dd_ps", "tr", "seed"];

/// Wide table: one row per cell with `hist_1..hist_N` columns.
pub fn metrics_csv(rows: &[CellRow]) -> String {
    let width = rows.iter().map(|r| r.histogram.len()).max().unwrap_or(0).max(1);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = KEY_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(["offered", "blocked", "blocking_prob", "agg_ratio"].map(String::from));
    header.extend((1..=width).map(|i| format!("hist_{i}")));
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = key_fields(r);
        rec.push(r.offered.to_string());
        rec.push(r.blocked.to_string());
        rec.push(format!("{:.6}", r.blocking_probability()));
        rec.push(format!("{:.6}", r.aggregation_ratio()));
        rec.extend((0..width).map(|i| r.histogram.get(i).copied().unwrap_or(0).to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// Long table of the path-count distribution: one row per cell and count.
pub fn distribution_csv(rows: &[CellRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = KEY_HEADER.to_vec();
    header.extend(["paths", "connections", "fraction"]);
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let served: u64 = r.histogram.iter().sum();
        for (i, n) in r.histogram.iter().enumerate() {
            let mut rec = key_fields(r);
            rec.push((i + 1).to_string());
            rec.push(n.to_string());
            let frac = if served == 0 { 0.0 } else { *n as f64 / served as f64 };
            rec.push(format!("{frac:.6}"));
            w.write_record(&rec).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}
