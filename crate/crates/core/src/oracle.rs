//! Exhaustive reference solver for tiny instances.
//!
//! Shares no search code with the heuristic: paths come from a plain
//! depth-first enumeration, and feasibility is checked slot by slot against
//! the spectrum state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::OracleError;
use crate::heuristic::{assign_spectrum, compute_fiber_paths, FiberPath, Mode, Outcome, PolicyParams, Request};
use crate::ilp::{build_model, ModelParams, Verdict};
use crate::physics::FiberParams;
use crate::spectrum::{SlotRange, SpectrumState};
use crate::topology::{ArcId, Network, NodeId, TopologyConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleParams {
    pub k: usize,
    pub gb: usize,
    pub max_dd_ps: i64,
    /// Add dispersion spread to the pairwise delay bound.
    pub include_gvd: bool,
    pub fiber: FiberParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_nodes: usize,
    pub max_slots: usize,
    pub max_bands: usize,
    pub max_bands_per_path: usize,
    /// Maximum search nodes visited before giving up.
    pub budget: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_nodes: 12, max_slots: 32, max_bands: 4, max_bands_per_path: 4, budget: 50_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    /// Index into the enumerated path list.
    pub path: usize,
    pub range: SlotRange,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub paths: Vec<FiberPath>,
    pub bands: Vec<Band>,
    pub cost: usize,
    /// Search nodes visited.
    pub visited: u64,
}

/// Every loop-free path by depth-first search, sorted by delay then node
/// sequence, truncated to `k`.
pub fn enumerate_paths(net: &Network, s: NodeId, d: NodeId, k: usize) -> Vec<FiberPath> {
    fn dfs(net: &Network, d: NodeId, nodes: &mut Vec<NodeId>, arcs: &mut Vec<ArcId>, out: &mut Vec<FiberPath>) {
        let v = *nodes.last().unwrap();
        if v == d {
            let delay_ps = arcs.iter().map(|a| net.link(*a).delay_ps).sum();
            let length_km = arcs.iter().map(|a| net.link(*a).length_km).sum();
            out.push(FiberPath { nodes: nodes.clone(), arcs: arcs.clone(), delay_ps, length_km });
            return;
        }
        for l in net.links().iter().filter(|l| l.src == v) {
            if nodes.contains(&l.dst) {
                continue;
            }
            nodes.push(l.dst);
            arcs.push(l.id);
            dfs(net, d, nodes, arcs, out);
            nodes.pop();
            arcs.pop();
        }
    }
    let mut out = Vec::new();
    if s != d {
        dfs(net, d, &mut vec![s], &mut Vec::new(), &mut out);
    }
    // Parallel links give equal node sequences; keep the lowest arc ids first.
    out.sort_by(|a, b| (a.delay_ps, &a.nodes, &a.arcs).cmp(&(b.delay_ps, &b.nodes, &b.arcs)));
    out.truncate(k);
    out
}

/// `range` and `gb` slots either side are free on every arc of `path`.
pub fn band_fits(state: &SpectrumState, path: &FiberPath, range: SlotRange, gb: usize) -> bool {
    if range.len == 0 || range.end() > state.slots() {
        return false;
    }
    let lo = range.start.saturating_sub(gb);
    let hi = (range.end() + gb).min(state.slots());
    path.arcs.iter().all(|a| (lo..hi).all(|i| state.is_free(*a, i)))
}

fn delay_ok(paths: &[FiberPath], bands: &[Band], gvd: &[Vec<i64>], params: &OracleParams) -> bool {
    for (i, a) in bands.iter().enumerate() {
        for b in &bands[i + 1..] {
            let mut spread = (paths[a.path].delay_ps - paths[b.path].delay_ps).abs();
            if params.include_gvd {
                spread += gvd[a.path][a.range.len] + gvd[b.path][b.range.len];
            }
            if spread > params.max_dd_ps {
                return false;
            }
        }
    }
    true
}

fn pair_ok(paths: &[FiberPath], a: &Band, b: &Band, gb: usize) -> bool {
    let pa = &paths[a.path];
    let pb = &paths[b.path];
    let shared = pa.arcs.iter().any(|x| pb.arcs.contains(x));
    let (x, y) = (a.range, b.range);
    !shared || x.start + x.len + gb <= y.start || y.start + y.len + gb <= x.start
}

/// Direct feasibility of a band list for `req`.
pub fn is_feasible(
    net: &Network,
    state: &SpectrumState,
    req: &Request,
    paths: &[FiberPath],
    bands: &[Band],
    params: &OracleParams,
) -> bool {
    if bands.is_empty() || bands.iter().map(|b| b.range.len).sum::<usize>() != req.demand {
        return false;
    }
    let gvd = gvd_table(net, paths, state.slots(), &params.fiber);
    bands.iter().all(|b| {
        let p = &paths[b.path];
        p.nodes.first() == Some(&req.source) && p.nodes.last() == Some(&req.destination)
            && band_fits(state, p, b.range, params.gb)
    }) && bands
        .iter()
        .enumerate()
        .all(|(i, a)| bands[i + 1..].iter().all(|b| pair_ok(paths, a, b, params.gb)))
        && delay_ok(paths, bands, &gvd, params)
}

fn gvd_table(net: &Network, paths: &[FiberPath], slots: usize, fiber: &FiberParams) -> Vec<Vec<i64>> {
    paths.iter().map(|p| (0..=slots).map(|n| p.gvd_ps(net, fiber, n)).collect()).collect()
}

struct Search<'a> {
    paths: &'a [FiberPath],
    cands: Vec<Band>,
    gvd: Vec<Vec<i64>>,
    params: &'a OracleParams,
    limits: &'a OracleLimits,
    demand: usize,
    min_hops: usize,
    visited: u64,
    best: Option<(usize, Vec<Band>)>,
}

impl Search<'_> {
    fn run(&mut self, from: usize, chosen: &mut Vec<Band>, total: usize, cost: usize) -> Result<(), OracleError> {
        self.visited += 1;
        if self.visited > self.limits.budget {
            return Err(OracleError::BudgetExceeded(self.limits.budget));
        }
        if total == self.demand {
            if delay_ok(self.paths, chosen, &self.gvd, self.params)
                && self.best.as_ref().is_none_or(|(c, b)| (cost, chosen.len()) < (*c, b.len()))
            {
                self.best = Some((cost, chosen.clone()));
            }
            return Ok(());
        }
        if chosen.len() == self.limits.max_bands {
            return Ok(());
        }
        for i in from..self.cands.len() {
            let c = self.cands[i].clone();
            if total + c.range.len > self.demand {
                continue;
            }
            let c_cost = c.range.len * self.paths[c.path].hops();
            let bound = cost + c_cost + (self.demand - total - c.range.len) * self.min_hops;
            if self.best.as_ref().is_some_and(|(b, _)| bound > *b) {
                continue;
            }
            if chosen.iter().filter(|b| b.path == c.path).count() == self.limits.max_bands_per_path {
                continue;
            }
            if !chosen.iter().all(|b| pair_ok(self.paths, b, &c, self.params.gb)) {
                continue;
            }
            chosen.push(c);
            self.run(i + 1, chosen, total + chosen.last().unwrap().range.len, cost + c_cost)?;
            chosen.pop();
        }
        Ok(())
    }
}

/// Minimum slot-arc cost band set over the first `k` paths, or `None` if
/// the request cannot be served. Ties go to fewer bands, then to the
/// lexicographically smallest list of `(path, start, len)`.
pub fn exact_solve(
    net: &Network,
    state: &SpectrumState,
    req: &Request,
    params: &OracleParams,
    limits: &OracleLimits,
) -> Result<Option<OracleSolution>, OracleError> {
    if net.num_nodes() > limits.max_nodes {
        return Err(OracleError::TooLarge(format!("{} nodes > {}", net.num_nodes(), limits.max_nodes)));
    }
    if state.slots() > limits.max_slots {
        return Err(OracleError::TooLarge(format!("{} slots > {}", state.slots(), limits.max_slots)));
    }
    let paths = enumerate_paths(net, req.source, req.destination, params.k);
    if req.demand == 0 || paths.is_empty() {
        return Ok(None);
    }
    let mut cands = Vec::new();
    for (p, fp) in paths.iter().enumerate() {
        for start in 0..state.slots() {
            for len in 1..=req.demand.min(state.slots() - start) {
                let range = SlotRange::new(start, len);
                if band_fits(state, fp, range, params.gb) {
                    cands.push(Band { path: p, range });
                }
            }
        }
    }
    let mut search = Search {
        paths: &paths,
        cands,
        gvd: gvd_table(net, &paths, state.slots(), &params.fiber),
        params,
        limits,
        demand: req.demand,
        min_hops: paths.iter().map(FiberPath::hops).min().unwrap_or(0),
        visited: 0,
        best: None,
    };
    search.run(0, &mut Vec::new(), 0, 0)?;
    let visited = search.visited;
    Ok(search.best.map(|(cost, bands)| OracleSolution { paths: paths.clone(), bands, cost, visited }))
}

/// A random tiny instance for cross-validation.
#[derive(Clone, Debug)]
pub struct Instance {
    pub net: Network,
    pub state: SpectrumState,
    pub req: Request,
    pub policy: PolicyParams,
}

/// Builds a connected graph of 3 to 5 nodes with 4 to 8 slots per link,
/// random single-slot occupancy and a random request and policy.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.random_range(3..=5);
    let slots = rng.random_range(4..=8);
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v, f64::from(rng.random_range(50..=1000u32))));
    }
    for a in 0..n {
        for b in a + 1..n {
            if !edges.iter().any(|e| (e.0, e.1) == (a, b)) && rng.random_bool(0.4) {
                edges.push((a, b, f64::from(rng.random_range(50..=1000u32))));
            }
        }
    }
    let net = Network::new(&names, &edges, TopologyConfig { slots_per_link: slots, ..Default::default() })
        .expect("generated topology is valid");
    let mut state = SpectrumState::for_network(&net);
    let busy = rng.random_range(0.0..0.5);
    for arc in 0..net.num_arcs() {
        for slot in 0..slots {
            if rng.random_bool(busy) {
                state.allocate(&[ArcId(arc)], SlotRange::new(slot, 1), 0).expect("slot is free");
            }
        }
    }
    let s = rng.random_range(0..n);
    let d = (s + rng.random_range(1..n)) % n;
    let req = Request::new(NodeId(s), NodeId(d), rng.random_range(1..=4.min(slots)));
    let k = rng.random_range(1..=3);
    let gb = rng.random_range(0..=2);
    let policy = if rng.random_bool(0.25) {
        PolicyParams::st(k, gb)
    } else {
        // zero, moderate (about one hop at 5 ms per 1000 km) or unbounded spread
        let m = [0, 2_500_000_000, 1_000_000_000_000][rng.random_range(0..3)];
        PolicyParams::pt(k, gb, m)
    };
    Instance { net, state, req, policy }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CrossReport {
    pub instances: usize,
    pub oracle_solved: usize,
    pub heuristic_served: usize,
    pub band_lists_compared: usize,
    pub band_lists_feasible: usize,
    pub failures: Vec<String>,
}

fn model_verdict(inst: &Instance, routes: &[FiberPath], bands: &[(usize, SlotRange)], max_dd_ps: i64, gvd: bool) -> Verdict {
    let params = ModelParams {
        slots: inst.state.slots(),
        gb: inst.policy.gb,
        max_dd_ps,
        fiber: FiberParams::default(),
        include_gvd: gvd,
    };
    let model = build_model(&inst.net, &inst.state, &inst.req, routes, &params).expect("non-empty routes");
    model.system.check(&model.encode(bands)).expect("encoding covers every variable")
}

/// Cross-checks oracle, heuristic and constraint checker on one instance.
/// Returns a description of every disagreement.
pub fn cross_check(inst: &Instance, rng: &mut impl Rng) -> CheckOutcome {
    let mut fail = Vec::new();
    let fiber = FiberParams::default();
    let p = &inst.policy;
    let params = OracleParams { k: p.k, gb: p.gb, max_dd_ps: p.max_dd_ps, include_gvd: false, fiber };
    let limits = OracleLimits { max_bands: 3, max_bands_per_path: 3, ..Default::default() };
    let oracle = exact_solve(&inst.net, &inst.state, &inst.req, &params, &limits).expect("instance within limits");

    if let Some(sol) = &oracle {
        let routes: Vec<FiberPath> = sol.bands.iter().map(|b| sol.paths[b.path].clone()).collect();
        let bands: Vec<(usize, SlotRange)> = sol.bands.iter().enumerate().map(|(i, b)| (i, b.range)).collect();
        let v = model_verdict(inst, &routes, &bands, p.max_dd_ps, false);
        if !v.is_feasible() {
            fail.push(format!("oracle solution rejected by checker: {:?}", v.families()));
        }
    }

    let paths = compute_fiber_paths(&inst.net, inst.req.source, inst.req.destination, p.k);
    let reference = enumerate_paths(&inst.net, inst.req.source, inst.req.destination, p.k);
    if paths.iter().map(|f| &f.nodes).ne(reference.iter().map(|f| &f.nodes)) {
        fail.push("path enumeration disagrees with reference".into());
    }
    let outcome = assign_spectrum(&inst.state, &inst.net, &paths, &inst.req, p, &fiber);
    let served = !outcome.is_blocked();
    if let Outcome::Served(h) = &outcome {
        if let Err(e) = h.validate(&inst.req, p) {
            fail.push(format!("heuristic solution invalid: {e}"));
        }
        let bands: Vec<Band> = h.paths.iter().map(|sp| Band { path: sp.rank, range: sp.range }).collect();
        if !is_feasible(&inst.net, &inst.state, &inst.req, &paths, &bands, &params) {
            fail.push("heuristic solution fails direct feasibility".into());
        }
        let reference = if h.paths.len() > limits.max_bands {
            let wide = OracleLimits { max_bands: h.paths.len(), max_bands_per_path: h.paths.len(), ..limits };
            exact_solve(&inst.net, &inst.state, &inst.req, &params, &wide).expect("instance within limits")
        } else {
            oracle.clone()
        };
        match reference {
            None => fail.push("heuristic served a request the oracle proves infeasible".into()),
            Some(o) if o.cost > h.cost() => fail.push(format!("oracle cost {} above heuristic cost {}", o.cost, h.cost())),
            Some(o) => {
                let min_hops = paths.iter().map(FiberPath::hops).min().unwrap_or(0);
                if h.paths.len() == 1 && h.paths[0].fiber.hops() == min_hops && o.cost != h.cost() {
                    fail.push(format!("single min-hop band cost {} differs from oracle {}", h.cost(), o.cost));
                }
            }
        }
        // With the bound widened by the dispersion terms the same bands must pass the model.
        let routes: Vec<FiberPath> = h.paths.iter().map(|sp| sp.fiber.clone()).collect();
        let gvd: Vec<i64> = h.paths.iter().map(|sp| sp.gvd_ps).collect();
        let widest = (0..gvd.len())
            .flat_map(|i| (i + 1..gvd.len()).map({ let gvd = &gvd; move |j| gvd[i] + gvd[j] }))
            .max()
            .unwrap_or(0);
        let bands: Vec<(usize, SlotRange)> = h.paths.iter().enumerate().map(|(i, sp)| (i, sp.range)).collect();
        let v = model_verdict(inst, &routes, &bands, p.max_dd_ps + widest, true);
        if !v.is_feasible() {
            fail.push(format!("heuristic solution rejected by checker: {:?}", v.families()));
        }
    } else if oracle.is_some() && p.mode == Mode::Pt && p.max_dd_ps >= 1_000_000_000_000 && oracle.as_ref().unwrap().bands.len() == 1 {
        // a single free block of the full demand is always found by the first step
        fail.push("heuristic blocked although a single band fits".into());
    }

    // Checker and direct feasibility agree on random band lists.
    let mut compared = 0;
    let mut feasible = 0;
    if !reference.is_empty() {
        for _ in 0..20 {
            let count = rng.random_range(1..=3.min(inst.req.demand));
            let mut lens = vec![1; count];
            for _ in count..inst.req.demand {
                lens[rng.random_range(0..count)] += 1;
            }
            let bands: Vec<Band> = lens
                .iter()
                .map(|&len| {
                    let path = rng.random_range(0..reference.len());
                    let start = rng.random_range(0..=inst.state.slots() - len.min(inst.state.slots()));
                    Band { path, range: SlotRange::new(start, len) }
                })
                .collect();
            if bands.iter().any(|b| b.range.end() > inst.state.slots()) {
                continue;
            }
            let direct = is_feasible(&inst.net, &inst.state, &inst.req, &reference, &bands, &params);
            let routes: Vec<FiberPath> = bands.iter().map(|b| reference[b.path].clone()).collect();
            let enc: Vec<(usize, SlotRange)> = bands.iter().enumerate().map(|(i, b)| (i, b.range)).collect();
            let model = model_verdict(inst, &routes, &enc, p.max_dd_ps, false).is_feasible();
            compared += 1;
            feasible += usize::from(direct);
            if direct != model {
                fail.push(format!("checker says {model}, direct test says {direct} for {bands:?}"));
            }
        }
    }
    CheckOutcome { failures: fail, oracle_solved: oracle.is_some(), served, compared, feasible }
}

pub struct CheckOutcome {
    pub failures: Vec<String>,
    pub oracle_solved: bool,
    pub served: bool,
    /// Random band lists checked both ways, and how many were feasible.
    pub compared: usize,
    pub feasible: usize,
}

/// Runs [`cross_check`] on `instances` random instances drawn from `seed`.
pub fn cross_validate(seed: u64, instances: usize) -> CrossReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CrossReport { instances, ..Default::default() };
    for i in 0..instances {
        let inst = random_instance(&mut rng);
        let c = cross_check(&inst, &mut rng);
        report.oracle_solved += usize::from(c.oracle_solved);
        report.heuristic_served += usize::from(c.served);
        report.band_lists_compared += c.compared;
        report.band_lists_feasible += c.feasible;
        report.failures.extend(c.failures.into_iter().map(|f| format!("instance {i}: {f}")));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: usize, gb: usize, max_dd_ps: i64) -> OracleParams {
        OracleParams { k, gb, max_dd_ps, include_gvd: false, fiber: FiberParams::default() }
    }

    fn diamond(slots: usize) -> Network {
        // A-B-D is shorter than A-C-D
        Network::new(
            &["A", "B", "C", "D"],
            &[(0, 1, 100.0), (1, 3, 100.0), (0, 2, 150.0), (2, 3, 150.0)],
            TopologyConfig { slots_per_link: slots, ..Default::default() },
        )
        .unwrap()
    }

    #[test]
    fn paths_in_delay_order() {
        let net = diamond(8);
        let p = enumerate_paths(&net, NodeId(0), NodeId(3), 5);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].nodes, vec![NodeId(0), NodeId(1), NodeId(3)]);
        assert!(enumerate_paths(&net, NodeId(0), NodeId(0), 5).is_empty());
    }

    #[test]
    fn blank_network_uses_one_band_at_zero() {
        let net = diamond(8);
        let st = SpectrumState::for_network(&net);
        let sol = exact_solve(&net, &st, &Request::new(NodeId(0), NodeId(3), 3), &params(2, 1, 0), &OracleLimits::default())
            .unwrap()
            .unwrap();
        assert_eq!(sol.bands, vec![Band { path: 0, range: SlotRange::new(0, 3) }]);
        assert_eq!(sol.cost, 6);
    }

    #[test]
    fn split_on_fragmented_path() {
        // path 1 arcs hold slots 2 and 5..8 busy: blocks (0,2) and (3,2) with gb = 0
        let net = diamond(8);
        let mut st = SpectrumState::for_network(&net);
        let p = enumerate_paths(&net, NodeId(0), NodeId(3), 2);
        st.allocate(&p[0].arcs, SlotRange::new(2, 1), 0).unwrap();
        st.allocate(&p[0].arcs, SlotRange::new(5, 3), 0).unwrap();
        st.allocate(&p[1].arcs, SlotRange::new(0, 8), 0).unwrap();
        let req = Request::new(NodeId(0), NodeId(3), 4);
        let sol = exact_solve(&net, &st, &req, &params(2, 0, 0), &OracleLimits::default()).unwrap().unwrap();
        assert_eq!(
            sol.bands,
            vec![Band { path: 0, range: SlotRange::new(0, 2) }, Band { path: 0, range: SlotRange::new(3, 2) }]
        );
        assert!(is_feasible(&net, &st, &req, &sol.paths, &sol.bands, &params(2, 0, 0)));
        // the same split needs a one-slot gap between its own bands under gb = 1
        assert!(exact_solve(&net, &st, &req, &params(2, 1, 0), &OracleLimits::default()).unwrap().is_none());
    }

    #[test]
    fn delay_bound_excludes_slow_path() {
        let net = diamond(4);
        let mut st = SpectrumState::for_network(&net);
        let p = enumerate_paths(&net, NodeId(0), NodeId(3), 2);
        st.allocate(&p[0].arcs, SlotRange::new(2, 2), 0).unwrap();
        st.allocate(&p[1].arcs, SlotRange::new(2, 2), 0).unwrap();
        let req = Request::new(NodeId(0), NodeId(3), 4);
        let spread = p[1].delay_ps - p[0].delay_ps;
        assert!(exact_solve(&net, &st, &req, &params(2, 0, spread - 1), &OracleLimits::default()).unwrap().is_none());
        let sol = exact_solve(&net, &st, &req, &params(2, 0, spread), &OracleLimits::default()).unwrap().unwrap();
        assert_eq!(sol.cost, 2 * 2 + 2 * 2);
    }

    #[test]
    fn limits() {
        let net = diamond(8);
        let st = SpectrumState::for_network(&net);
        let req = Request::new(NodeId(0), NodeId(3), 4);
        let tight = OracleLimits { budget: 3, ..Default::default() };
        assert_eq!(exact_solve(&net, &st, &req, &params(2, 0, 0), &tight), Err(OracleError::BudgetExceeded(3)));
        let small = OracleLimits { max_slots: 4, ..Default::default() };
        assert!(matches!(exact_solve(&net, &st, &req, &params(2, 0, 0), &small), Err(OracleError::TooLarge(_))));
    }

    #[test]
    fn cross_validation_agrees() {
        let r = cross_validate(3, 30);
        assert!(r.failures.is_empty(), "{:#?}", r.failures);
        assert!(r.oracle_solved > 0 && r.heuristic_served > 0);
    }
}
