use proptest::prelude::*;

use parallel_rsa::heuristic::{
    assign_spectrum, assign_spectrum_with_effort, commit, compute_fiber_paths, compute_fiber_paths_with_effort, Mode,
    Outcome, PolicyParams, Request,
};
use parallel_rsa::physics::{gvd_differential_delay_ps, propagation_delay_ps, FiberParams};
use parallel_rsa::sim::{self, Demand, TrafficConfig};
use parallel_rsa::spectrum::{SlotRange, SpectrumState};
use parallel_rsa::topology::{load_topology, ArcId, Network, NodeId, TopologyConfig};

const MS: i64 = 1_000_000_000;

/// A connected network: a random spanning tree plus extra edges.
fn network() -> impl Strategy<Value = Network> {
    (3usize..7, 8usize..25).prop_flat_map(|(n, slots)| {
        let tree = (1..n).map(|v| (0..v, 50u32..1500)).collect::<Vec<_>>();
        let extra = prop::collection::vec((0..n, 0..n, 50u32..1500), 0..n);
        (tree, extra).prop_map(move |(tree, extra)| {
            let mut edges: Vec<(usize, usize, f64)> =
                tree.into_iter().enumerate().map(|(i, (u, km))| (u, i + 1, km as f64)).collect();
            for (a, b, km) in extra {
                if a != b && !edges.iter().any(|&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a)) {
                    edges.push((a, b, km as f64));
                }
            }
            let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
            Network::new(&names, &edges, TopologyConfig { slots_per_link: slots, ..Default::default() }).unwrap()
        })
    })
}

/// Background traffic laid directly on single arcs.
fn occupied(net: &Network, seeds: &[(usize, usize, usize)]) -> SpectrumState {
    let mut st = SpectrumState::for_network(net);
    let f = net.slots_per_link();
    for &(a, s, l) in seeds {
        let arc = ArcId(a % net.num_arcs());
        let start = s % f;
        let len = 1 + l % (f - start).min(4);
        let _ = st.allocate(&[arc], SlotRange::new(start, len), 0);
    }
    st
}

type Case = (Network, Vec<(usize, usize, usize)>, usize, usize, usize);

fn case() -> impl Strategy<Value = Case> {
    (network(), prop::collection::vec((0usize..64, 0usize..32, 0usize..8), 0..30), 0usize..64, 0usize..64, 1usize..8)
}

fn endpoints(net: &Network, s: usize, d: usize) -> (NodeId, NodeId) {
    let n = net.num_nodes();
    let s = s % n;
    let d = (s + 1 + d % (n - 1)) % n;
    (NodeId(s), NodeId(d))
}

fn occupancy(st: &SpectrumState, net: &Network) -> Vec<String> {
    (0..net.num_arcs()).map(|a| format!("{:?}", st.occupancy(ArcId(a)))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arcs_come_in_reverse_pairs(net in network()) {
        let mut total = 0;
        for v in net.nodes() {
            total += net.outgoing(v).unwrap().len();
        }
        prop_assert_eq!(total, net.num_arcs());
        for l in net.links() {
            let r = net.link(l.id.reverse());
            prop_assert_eq!((r.src, r.dst), (l.dst, l.src));
            prop_assert_eq!(r.length_km, l.length_km);
            prop_assert_eq!(r.delay_ps, l.delay_ps);
        }
    }

    #[test]
    fn topology_text_round_trip(net in network()) {
        let cfg = TopologyConfig { slots_per_link: net.slots_per_link(), ..Default::default() };
        prop_assert_eq!(load_topology(&net.to_text(), cfg).unwrap(), net);
    }

    #[test]
    fn gvd_is_linear_in_length(slots in 1u32..128, km in 0.0f64..20_000.0) {
        let fiber = FiberParams::default();
        let one = gvd_differential_delay_ps(&fiber, slots, km);
        let two = gvd_differential_delay_ps(&fiber, slots, 2.0 * km);
        prop_assert!((two - 2 * one).abs() <= 1, "{one} {two}");
    }

    #[test]
    fn free_blocks_always_allocate((net, bg, _, _, _) in case(), gb in 0usize..3, a in 0usize..64) {
        let st = occupied(&net, &bg);
        let arcs = [ArcId(a % net.num_arcs())];
        for b in st.free_blocks(&arcs, gb).unwrap() {
            let mut copy = st.clone();
            prop_assert!(copy.allocate(&arcs, b, gb).is_ok());
            prop_assert!(copy.audit(0).is_ok());
        }
    }

    #[test]
    fn allocate_release_restores_occupancy((net, bg, s, d, tr) in case()) {
        let mut st = occupied(&net, &bg);
        let before = occupancy(&st, &net);
        let (s, d) = endpoints(&net, s, d);
        let path = compute_fiber_paths(&net, s, d, 1).remove(0);
        let tr = tr.min(net.slots_per_link());
        if let Some(b) = st.free_blocks(&path.arcs, 0).unwrap().into_iter().find(|b| b.len >= tr) {
            let id = st.allocate(&path.arcs, SlotRange::new(b.start, tr), 0).unwrap();
            prop_assert!(st.release(id).is_ok());
            prop_assert!(st.release(id).is_err());
        }
        prop_assert_eq!(occupancy(&st, &net), before);
    }

    #[test]
    fn fiber_paths_sorted_and_loop_free((net, _, s, d, _) in case(), k in 1usize..12) {
        let (s, d) = endpoints(&net, s, d);
        let paths = compute_fiber_paths(&net, s, d, k);
        prop_assert!(!paths.is_empty() && paths.len() <= k);
        for w in paths.windows(2) {
            prop_assert!((w[0].delay_ps, &w[0].nodes) < (w[1].delay_ps, &w[1].nodes));
        }
        for p in &paths {
            let mut nodes = p.nodes.clone();
            nodes.sort();
            nodes.dedup();
            prop_assert_eq!(nodes.len(), p.nodes.len());
            prop_assert_eq!(p.nodes.first(), Some(&s));
            prop_assert_eq!(p.nodes.last(), Some(&d));
            let delay: i64 = p.arcs.iter().map(|a| net.link(*a).delay_ps).sum();
            prop_assert_eq!(delay, p.delay_ps);
        }
    }

    #[test]
    fn served_solutions_are_valid_and_commit(
        (net, bg, s, d, tr) in case(),
        k in 1usize..6,
        gb in 0usize..3,
        pt in any::<bool>(),
        dd in prop::sample::select(vec![0, MS / 4, 2 * MS, 128 * MS]),
    ) {
        let mut st = occupied(&net, &bg);
        let (s, d) = endpoints(&net, s, d);
        let req = Request::new(s, d, tr);
        let policy = if pt { PolicyParams::pt(k, gb, dd) } else { PolicyParams::st(k, gb) };
        let paths = compute_fiber_paths(&net, s, d, k);
        if let Outcome::Served(mut sol) = assign_spectrum(&st, &net, &paths, &req, &policy, &FiberParams::default()) {
            prop_assert!(sol.validate(&req, &policy).is_ok(), "{:?}", sol.validate(&req, &policy));
            if policy.mode == Mode::St {
                prop_assert_eq!(sol.paths.len(), 1);
            }
            prop_assert!(commit(&mut st, &mut sol, gb));
            prop_assert!(st.audit(0).is_ok());
        }
    }

    #[test]
    fn single_path_success_implies_parallel_success(
        (net, bg, s, d, tr) in case(),
        k in 1usize..6,
        gb in 0usize..3,
        dd in prop::sample::select(vec![0, MS, 128 * MS]),
    ) {
        let st = occupied(&net, &bg);
        let (s, d) = endpoints(&net, s, d);
        let req = Request::new(s, d, tr);
        let fiber = FiberParams::default();
        let paths = compute_fiber_paths(&net, s, d, k);
        let single = assign_spectrum(&st, &net, &paths, &req, &PolicyParams::st(k, gb), &fiber);
        let parallel = assign_spectrum(&st, &net, &paths, &req, &PolicyParams::pt(k, gb, dd), &fiber);
        prop_assert!(single.is_blocked() || !parallel.is_blocked());
    }

    #[test]
    fn more_paths_serve_more((net, bg, s, d, tr) in case(), gb in 0usize..3, pt in any::<bool>()) {
        let st = occupied(&net, &bg);
        let (s, d) = endpoints(&net, s, d);
        let req = Request::new(s, d, tr);
        let fiber = FiberParams::default();
        let paths = compute_fiber_paths(&net, s, d, 40);
        let policy = |k| if pt { PolicyParams::pt(k, gb, 128 * MS) } else { PolicyParams::st(k, gb) };
        let few = assign_spectrum(&st, &net, &paths, &req, &policy(2), &fiber);
        let many = assign_spectrum(&st, &net, &paths, &req, &policy(40), &fiber);
        prop_assert!(few.is_blocked() || !many.is_blocked());
    }

    #[test]
    fn zero_spread_needs_equal_delays((net, bg, s, d, tr) in case(), k in 2usize..6) {
        let st = occupied(&net, &bg);
        let (s, d) = endpoints(&net, s, d);
        let req = Request::new(s, d, tr);
        let paths = compute_fiber_paths(&net, s, d, k);
        let out = assign_spectrum(&st, &net, &paths, &req, &PolicyParams::pt(k, 0, 0), &FiberParams::default());
        if let Outcome::Served(sol) = out {
            prop_assert_eq!(sol.delay_spread_ps(), 0);
            let equal_delays = paths.windows(2).any(|w| w[0].delay_ps == w[1].delay_ps);
            if !equal_delays {
                prop_assert!(sol.paths.iter().all(|p| p.rank == sol.paths[0].rank));
            }
        }
    }

    #[test]
    fn wider_guard_band_only_removes_placements((net, bg, s, d, _) in case(), start in 0usize..32, len in 1usize..6) {
        let st = occupied(&net, &bg);
        let (s, d) = endpoints(&net, s, d);
        let path = compute_fiber_paths(&net, s, d, 1).remove(0);
        let f = net.slots_per_link();
        let range = SlotRange::new(start % f, len.min(f - start % f));
        if st.clone().allocate(&path.arcs, range, 3).is_ok() {
            prop_assert!(st.clone().allocate(&path.arcs, range, 0).is_ok());
        }
    }

    #[test]
    fn effort_within_complexity_bounds((net, bg, s, d, tr) in case(), k in 1usize..10, gb in 0usize..3) {
        let st = occupied(&net, &bg);
        let (s, d) = endpoints(&net, s, d);
        let (paths, expansions) = compute_fiber_paths_with_effort(&net, s, d, k);
        let v = net.num_nodes() as u64;
        let deg = net.max_out_degree() as u64;
        prop_assert!(expansions <= 4 * v * v * deg * k as u64, "{expansions} expansions");
        let req = Request::new(s, d, tr);
        let (_, inspections) =
            assign_spectrum_with_effort(&st, &net, &paths, &req, &PolicyParams::pt(k, gb, 128 * MS), &FiberParams::default());
        let bound = 4 * k as u64 * net.slots_per_link() as u64 * net.num_arcs() as u64;
        prop_assert!(inspections <= bound, "{inspections} inspections, bound {bound}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn audited_simulation_conserves(net in network(), seed in 0u64..1000, pt in any::<bool>(), gb in 0usize..2) {
        let f = net.slots_per_link();
        let traffic = TrafficConfig::at_load(6.0, Demand::Uniform { lo: 1, hi: f.min(5) }, 600, seed);
        let policy = if pt { PolicyParams::pt(3, gb, 2 * MS) } else { PolicyParams::st(3, gb) };
        let m = sim::run_audited(&net, &traffic, &policy, &FiberParams::default()).unwrap();
        prop_assert_eq!(m.offered, m.served() + m.blocked);
        prop_assert_eq!(m.histogram.iter().sum::<u64>(), m.served());
        let p = m.blocking_probability();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(sim::run(&net, &traffic, &policy, &FiberParams::default()), m);
    }
}

#[test]
fn gvd_is_small_next_to_propagation() {
    let fiber = FiberParams::default();
    let ratio = gvd_differential_delay_ps(&fiber, 10, 1e4) as f64 / propagation_delay_ps(&fiber, 1e4) as f64;
    assert!(ratio < 1e-4, "{ratio}");
}

#[test]
fn replication_interval_is_tight_when_nothing_blocks() {
    let net = Network::new(&["A", "B", "C"], &[(0, 1, 100.0), (1, 2, 100.0)], TopologyConfig::default()).unwrap();
    let traffic = TrafficConfig::at_load(1.0, Demand::Fixed(1), 2000, 0);
    let rep = sim::replicate(&net, &traffic, &PolicyParams::st(2, 0), &FiberParams::default(), &[1, 2, 3, 4, 5]).unwrap();
    assert_eq!(rep.blocking.mean, 0.0);
    assert_eq!(rep.blocking.half_width, 0.0);
}

#[test]
fn parallel_blocks_no_more_than_single_on_backbone() {
    let text = std::fs::read_to_string(format!("{}/topologies/us_backbone.txt", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let net = load_topology(&text, TopologyConfig::default()).unwrap();
    let traffic = TrafficConfig::at_load(150.0, Demand::Fixed(10), 4000, 0);
    let seeds = [1, 2, 3, 4, 5];
    let fiber = FiberParams::default();
    let st = sim::replicate(&net, &traffic, &PolicyParams::st(30, 0), &fiber, &seeds).unwrap();
    let pt = sim::replicate(&net, &traffic, &PolicyParams::pt(30, 0, 128 * MS), &fiber, &seeds).unwrap();
    assert!(pt.blocking.mean <= st.blocking.mean, "{} > {}", pt.blocking.mean, st.blocking.mean);
}
