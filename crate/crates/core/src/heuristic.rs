//! Two-phase provisioning: min-delay multipath enumeration followed by
//! single-spectrum-path-first assignment with fragment aggregation.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::physics::{gvd_coefficient, gvd_from_coefficients, FiberParams};
use crate::spectrum::{AllocId, SlotMask, SlotRange, SpectrumState};
use crate::topology::{ArcId, Network, NodeId};

/// A loop-free route through the network.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberPath {
    pub nodes: Vec<NodeId>,
    pub arcs: Vec<ArcId>,
    pub delay_ps: i64,
    pub length_km: f64,
}

impl FiberPath {
    pub fn hops(&self) -> usize {
        self.arcs.len()
    }

    pub fn shares_arc(&self, other: &FiberPath) -> bool {
        self.arcs.iter().any(|a| other.arcs.contains(a))
    }

    /// Dispersion spread of a `slots`-wide band carried on this path.
    pub fn gvd_ps(&self, net: &Network, fiber: &FiberParams, slots: usize) -> i64 {
        let coeff: i64 = self.arcs.iter().map(|a| gvd_coefficient(fiber, net.link(*a).length_km)).sum();
        gvd_from_coefficients(coeff, slots as i64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub source: NodeId,
    pub destination: NodeId,
    /// Required slots.
    pub demand: usize,
    pub arrival: f64,
    pub holding: f64,
}

impl Request {
    pub fn new(source: NodeId, destination: NodeId, demand: usize) -> Request {
        Request { source, destination, demand, arrival: 0.0, holding: 0.0 }
    }

    pub fn is_valid(&self) -> bool {
        self.source != self.destination && self.demand >= 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// One spectrum path only.
    St,
    /// Parallel transmission over several spectrum paths.
    Pt,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::St => "st",
            Mode::Pt => "pt",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "st" => Ok(Mode::St),
            "pt" => Ok(Mode::Pt),
            _ => Err(format!("unknown mode `{s}` (expected st or pt)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyParams {
    /// Maximum number of fiber-level paths.
    pub k: usize,
    /// Guard band in slots.
    pub gb: usize,
    /// Maximum differential delay, ps.
    pub max_dd_ps: i64,
    pub mode: Mode,
}

impl PolicyParams {
    pub fn st(k: usize, gb: usize) -> PolicyParams {
        PolicyParams { k, gb, max_dd_ps: 0, mode: Mode::St }
    }

    pub fn pt(k: usize, gb: usize, max_dd_ps: i64) -> PolicyParams {
        PolicyParams { k, gb, max_dd_ps, mode: Mode::Pt }
    }
}

/// One band on one fiber path.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumPath {
    pub alloc: Option<AllocId>,
    /// Position of the fiber path in the phase-1 list.
    pub rank: usize,
    pub fiber: FiberPath,
    pub range: SlotRange,
    pub delay_ps: i64,
    pub gvd_ps: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub paths: Vec<SpectrumPath>,
}

impl Solution {
    pub fn total_slots(&self) -> usize {
        self.paths.iter().map(|p| p.range.len).sum()
    }

    /// Slot-arc incidences.
    pub fn cost(&self) -> usize {
        self.paths.iter().map(|p| p.range.len * p.fiber.hops()).sum()
    }

    pub fn delay_spread_ps(&self) -> i64 {
        let max = self.paths.iter().map(|p| p.delay_ps).max().unwrap_or(0);
        let min = self.paths.iter().map(|p| p.delay_ps).min().unwrap_or(0);
        max - min
    }

    /// Checks the member-path invariants against a request and policy.
    pub fn validate(&self, req: &Request, policy: &PolicyParams) -> Result<(), String> {
        if self.paths.is_empty() {
            return Err("empty solution".into());
        }
        if self.total_slots() != req.demand {
            return Err(format!("{} slots for a demand of {}", self.total_slots(), req.demand));
        }
        if self.delay_spread_ps() > policy.max_dd_ps && self.paths.len() > 1 {
            return Err(format!("delay spread {} ps exceeds {}", self.delay_spread_ps(), policy.max_dd_ps));
        }
        if policy.mode == Mode::St && self.paths.len() != 1 {
            return Err("single-path mode returned several paths".into());
        }
        for (i, a) in self.paths.iter().enumerate() {
            let f = &a.fiber;
            if f.nodes.first() != Some(&req.source) || f.nodes.last() != Some(&req.destination) {
                return Err(format!("path {i} does not join source and destination"));
            }
            let mut seen = f.nodes.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != f.nodes.len() {
                return Err(format!("path {i} repeats a node"));
            }
            for b in &self.paths[i + 1..] {
                if a.fiber.shares_arc(&b.fiber) && !a.range.compatible(&b.range, policy.gb) {
                    return Err(format!("bands {:?} and {:?} violate the guard band", a.range, b.range));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Served(Solution),
    Blocked,
}

impl Outcome {
    pub fn solution(&self) -> Option<&Solution> {
        match self {
            Outcome::Served(s) => Some(s),
            Outcome::Blocked => None,
        }
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self, Outcome::Blocked)
    }
}

/// Operation counters for the complexity bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Effort {
    /// Partial paths popped and extended in phase 1.
    pub expansions: u64,
    /// Slot positions examined across arcs in phase 2.
    pub slot_inspections: u64,
}

#[derive(PartialEq, Eq)]
struct Partial {
    delay: i64,
    nodes: Vec<NodeId>,
    arcs: Vec<ArcId>,
}

impl Ord for Partial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.delay.cmp(&other.delay).then_with(|| self.nodes.cmp(&other.nodes))
    }
}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn reachable(net: &Network, from: NodeId, to: NodeId) -> bool {
    let mut seen = vec![false; net.num_nodes()];
    let mut queue = VecDeque::from([from]);
    seen[from.0] = true;
    while let Some(v) = queue.pop_front() {
        if v == to {
            return true;
        }
        for a in net.out_arcs(v) {
            let w = net.link(*a).dst;
            if !seen[w.0] {
                seen[w.0] = true;
                queue.push_back(w);
            }
        }
    }
    false
}

/// Up to `k` loop-free paths from `source` to `destination` in
/// nondecreasing delay; equal delays are ordered by node sequence.
pub fn compute_fiber_paths(net: &Network, source: NodeId, destination: NodeId, k: usize) -> Vec<FiberPath> {
    compute_fiber_paths_with_effort(net, source, destination, k).0
}

pub fn compute_fiber_paths_with_effort(
    net: &Network,
    source: NodeId,
    destination: NodeId,
    k: usize,
) -> (Vec<FiberPath>, u64) {
    let mut found = Vec::new();
    let mut expansions = 0;
    if k == 0
        || source == destination
        || !net.contains(source)
        || !net.contains(destination)
        || !reachable(net, source, destination)
    {
        return (found, expansions);
    }
    // Candidate set ordered by (delay, node sequence). A prefix always sorts
    // before its extensions, so completed paths leave the heap in final order.
    let mut frontier = BinaryHeap::new();
    frontier.push(Reverse(Partial { delay: 0, nodes: vec![source], arcs: Vec::new() }));
    while let Some(Reverse(p)) = frontier.pop() {
        let tail = *p.nodes.last().expect("non-empty");
        if tail == destination {
            let length_km = p.arcs.iter().map(|a| net.link(*a).length_km).sum();
            found.push(FiberPath { nodes: p.nodes, arcs: p.arcs, delay_ps: p.delay, length_km });
            if found.len() == k {
                break;
            }
            continue;
        }
        expansions += 1;
        for a in net.out_arcs(tail) {
            let link = net.link(*a);
            if p.nodes.contains(&link.dst) {
                continue;
            }
            let mut nodes = p.nodes.clone();
            nodes.push(link.dst);
            let mut arcs = p.arcs.clone();
            arcs.push(*a);
            frontier.push(Reverse(Partial { delay: p.delay + link.delay_ps, nodes, arcs }));
        }
    }
    (found, expansions)
}

/// Largest block, lowest start on ties.
fn largest(blocks: &[SlotRange]) -> Option<SlotRange> {
    blocks.iter().copied().max_by(|a, b| a.len.cmp(&b.len).then(b.start.cmp(&a.start)))
}

fn band(
    net: &Network,
    fiber: &FiberParams,
    paths: &[FiberPath],
    rank: usize,
    range: SlotRange,
) -> SpectrumPath {
    let fp = &paths[rank];
    SpectrumPath {
        alloc: None,
        rank,
        fiber: fp.clone(),
        range,
        delay_ps: fp.delay_ps,
        gvd_ps: fp.gvd_ps(net, fiber, range.len),
    }
}

/// Picks bands for `req` over `paths` without touching `state`.
pub fn assign_spectrum(
    state: &SpectrumState,
    net: &Network,
    paths: &[FiberPath],
    req: &Request,
    policy: &PolicyParams,
    fiber: &FiberParams,
) -> Outcome {
    assign_spectrum_with_effort(state, net, paths, req, policy, fiber).0
}

pub fn assign_spectrum_with_effort(
    state: &SpectrumState,
    net: &Network,
    paths: &[FiberPath],
    req: &Request,
    policy: &PolicyParams,
    fiber: &FiberParams,
) -> (Outcome, u64) {
    let gb = policy.gb;
    let demand = req.demand;
    let paths = &paths[..paths.len().min(policy.k)];
    let mut inspections = 0u64;
    if demand == 0 || demand > state.slots() {
        return (Outcome::Blocked, inspections);
    }

    let mut blocks = Vec::with_capacity(paths.len());
    for p in paths {
        inspections += (p.hops() * state.slots()) as u64;
        blocks.push(state.free_blocks(&p.arcs, gb).unwrap_or_default());
    }

    // Step 1: single spectrum path first.
    for (rank, bs) in blocks.iter().enumerate() {
        if let Some(b) = largest(bs) {
            if b.len >= demand {
                let sol = Solution { paths: vec![band(net, fiber, paths, rank, SlotRange::new(b.start, demand))] };
                return (Outcome::Served(sol), inspections);
            }
        }
    }
    if policy.mode == Mode::St {
        return (Outcome::Blocked, inspections);
    }

    // Step 2: aggregate fragments in nondecreasing delay.
    let mut cands: Vec<(i64, usize, usize, SlotRange)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(rank, bs)| bs.iter().map(move |b| (paths[rank].delay_ps, b.start, rank, *b)))
        .collect();
    cands.sort_by_key(|c| (c.0, c.1, c.2));
    let Some(head_delay) = cands.first().map(|c| c.0) else {
        return (Outcome::Blocked, inspections);
    };

    let mut accepted: Vec<SpectrumPath> = Vec::new();
    let mut total = 0;
    for (delay, _, rank, block) in cands {
        if delay - head_delay > policy.max_dd_ps {
            break;
        }
        let fp = &paths[rank];
        let mut taken = SlotMask::new(state.slots());
        for a in accepted.iter().filter(|a| a.fiber.shares_arc(fp)) {
            taken.set_range(a.range);
        }
        let taken = taken.dilate(gb);
        inspections += block.len as u64;
        let usable = taken
            .clear_runs()
            .into_iter()
            .filter_map(|r| {
                let s = r.start.max(block.start);
                let e = r.end().min(block.end());
                (s < e).then(|| SlotRange::new(s, e - s))
            })
            .collect::<Vec<_>>();
        let Some(run) = largest(&usable) else { continue };
        let take = run.len.min(demand - total);
        accepted.push(band(net, fiber, paths, rank, SlotRange::new(run.start, take)));
        total += take;
        if total == demand {
            return (Outcome::Served(Solution { paths: accepted }), inspections);
        }
    }
    (Outcome::Blocked, inspections)
}

/// Allocates every band of `sol` or none of them.
pub fn commit(state: &mut SpectrumState, sol: &mut Solution, gb: usize) -> bool {
    let mut done = Vec::new();
    for p in sol.paths.iter_mut() {
        match state.allocate(&p.fiber.arcs, p.range, gb) {
            Ok(id) => {
                p.alloc = Some(id);
                done.push(id);
            }
            Err(_) => {
                for id in done {
                    let _ = state.release(id);
                }
                for p in sol.paths.iter_mut() {
                    p.alloc = None;
                }
                return false;
            }
        }
    }
    true
}

/// Releases every allocated band of a committed solution.
pub fn release_solution(state: &mut SpectrumState, sol: &Solution) {
    for id in sol.paths.iter().filter_map(|p| p.alloc) {
        let _ = state.release(id);
    }
}

/// Path computation, assignment and allocation in one call.
pub fn serve(
    state: &mut SpectrumState,
    net: &Network,
    req: &Request,
    policy: &PolicyParams,
    fiber: &FiberParams,
) -> Outcome {
    if !req.is_valid() {
        return Outcome::Blocked;
    }
    let paths = compute_fiber_paths(net, req.source, req.destination, policy.k);
    match assign_spectrum(state, net, &paths, req, policy, fiber) {
        Outcome::Served(mut sol) => {
            if commit(state, &mut sol, policy.gb) {
                Outcome::Served(sol)
            } else {
                Outcome::Blocked
            }
        }
        Outcome::Blocked => Outcome::Blocked,
    }
}
