//! Network graph with per-arc physical attributes.
//!
//! Topology files are line oriented:
//!
//! ```text
//! # comment
//! node A
//! node B
//! link A B 812.5
//! ```
//!
//! Every `link` line is a bidirectional fiber pair and expands into two
//! directed arcs with the same length and delay. Arc `2i` runs in the
//! written direction, arc `2i + 1` is its reverse.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::TopologyError;
use crate::physics::{propagation_delay_ps_at, DEFAULT_PROPAGATION_SPEED_KM_S};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArcId(pub usize);

impl ArcId {
    /// The opposite direction of the same fiber pair.
    pub fn reverse(self) -> ArcId {
        ArcId(self.0 ^ 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub id: ArcId,
    pub src: NodeId,
    pub dst: NodeId,
    pub length_km: f64,
    pub delay_ps: i64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopologyConfig {
    pub propagation_speed_km_s: f64,
    pub slots_per_link: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig { propagation_speed_km_s: DEFAULT_PROPAGATION_SPEED_KM_S, slots_per_link: 128 }
    }
}

/// Immutable directed multigraph. Node ids are indices in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    names: Vec<String>,
    by_name: HashMap<String, NodeId>,
    links: Vec<Link>,
    out: Vec<Vec<ArcId>>,
    slots_per_link: usize,
    propagation_speed_km_s: f64,
}

impl Network {
    /// Builds a network from node names and undirected `(a, b, length_km)` edges.
    pub fn new<S: AsRef<str>>(
        names: &[S],
        edges: &[(usize, usize, f64)],
        config: TopologyConfig,
    ) -> Result<Network, TopologyError> {
        let mut builder = Builder::new(config)?;
        for (i, n) in names.iter().enumerate() {
            builder.add_node(n.as_ref(), i + 1)?;
        }
        for (i, &(a, b, len)) in edges.iter().enumerate() {
            let name = |x: usize| names.get(x).map(|s| s.as_ref().to_string()).unwrap_or_else(|| format!("#{x}"));
            builder.add_link(&name(a), &name(b), len, i + 1)?;
        }
        builder.finish()
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.links.len()
    }

    pub fn slots_per_link(&self) -> usize {
        self.slots_per_link
    }

    pub fn propagation_speed_km_s(&self) -> f64 {
        self.propagation_speed_km_s
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len()).map(NodeId)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, arc: ArcId) -> &Link {
        &self.links[arc.0]
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v.0]
    }

    pub fn node(&self, name: &str) -> Result<NodeId, TopologyError> {
        self.by_name.get(name).copied().ok_or_else(|| TopologyError::UnknownName(name.to_string()))
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.0 < self.names.len()
    }

    /// All arcs leaving `v`, ordered by destination then arc id.
    pub fn outgoing(&self, v: NodeId) -> Result<Vec<&Link>, TopologyError> {
        if !self.contains(v) {
            return Err(TopologyError::UnknownNode(v));
        }
        Ok(self.out[v.0].iter().map(|a| &self.links[a.0]).collect())
    }

    pub(crate) fn out_arcs(&self, v: NodeId) -> &[ArcId] {
        &self.out[v.0]
    }

    pub fn max_out_degree(&self) -> usize {
        self.out.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Serializes back into the topology file format. Each fiber pair is
    /// written once, in its original direction.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for n in &self.names {
            let _ = writeln!(s, "node {n}");
        }
        for l in self.links.iter().step_by(2) {
            let _ = writeln!(s, "link {} {} {}", self.names[l.src.0], self.names[l.dst.0], l.length_km);
        }
        s
    }

    /// Same graph with a different slot count per link.
    pub fn with_slots(&self, slots_per_link: usize) -> Result<Network, TopologyError> {
        if slots_per_link == 0 {
            return Err(TopologyError::NoSlots);
        }
        let mut n = self.clone();
        n.slots_per_link = slots_per_link;
        Ok(n)
    }
}

struct Builder {
    config: TopologyConfig,
    names: Vec<String>,
    by_name: HashMap<String, NodeId>,
    links: Vec<Link>,
}

impl Builder {
    fn new(config: TopologyConfig) -> Result<Builder, TopologyError> {
        if config.slots_per_link == 0 {
            return Err(TopologyError::NoSlots);
        }
        Ok(Builder { config, names: Vec::new(), by_name: HashMap::new(), links: Vec::new() })
    }

    fn add_node(&mut self, id: &str, line: usize) -> Result<(), TopologyError> {
        if self.by_name.contains_key(id) {
            return Err(TopologyError::DuplicateNode { line, id: id.to_string() });
        }
        self.by_name.insert(id.to_string(), NodeId(self.names.len()));
        self.names.push(id.to_string());
        Ok(())
    }

    fn add_link(&mut self, a: &str, b: &str, length_km: f64, line: usize) -> Result<(), TopologyError> {
        let lookup = |id: &str| {
            self.by_name
                .get(id)
                .copied()
                .ok_or_else(|| TopologyError::DanglingEndpoint { line, id: id.to_string() })
        };
        let (src, dst) = (lookup(a)?, lookup(b)?);
        if src == dst {
            return Err(TopologyError::SelfLoop { line, id: a.to_string() });
        }
        if !(length_km.is_finite() && length_km > 0.0) {
            return Err(TopologyError::NonPositiveLength { line, length: length_km });
        }
        let delay_ps = propagation_delay_ps_at(self.config.propagation_speed_km_s, length_km);
        let base = self.links.len();
        self.links.push(Link { id: ArcId(base), src, dst, length_km, delay_ps });
        self.links.push(Link { id: ArcId(base + 1), src: dst, dst: src, length_km, delay_ps });
        Ok(())
    }

    fn finish(self) -> Result<Network, TopologyError> {
        if self.names.is_empty() {
            return Err(TopologyError::NoNodes);
        }
        let mut out = vec![Vec::new(); self.names.len()];
        for l in &self.links {
            out[l.src.0].push(l.id);
        }
        for arcs in &mut out {
            arcs.sort_by_key(|a| (self.links[a.0].dst, *a));
        }
        Ok(Network {
            names: self.names,
            by_name: self.by_name,
            links: self.links,
            out,
            slots_per_link: self.config.slots_per_link,
            propagation_speed_km_s: self.config.propagation_speed_km_s,
        })
    }
}

/// Parses a topology file.
pub fn load_topology(text: &str, config: TopologyConfig) -> Result<Network, TopologyError> {
    let mut builder = Builder::new(config)?;
    let mut pending_links = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["node", id] => builder.add_node(id, line)?,
            ["node", ..] => return Err(TopologyError::Parse { line, msg: "expected `node <id>`".into() }),
            ["link", a, b, len] => {
                let length: f64 = len.parse().map_err(|_| TopologyError::Parse {
                    line,
                    msg: format!("invalid length `{len}`"),
                })?;
                pending_links.push((line, a.to_string(), b.to_string(), length));
            }
            ["link", ..] => {
                return Err(TopologyError::Parse { line, msg: "expected `link <src> <dst> <length_km>`".into() })
            }
            [kw, ..] => return Err(TopologyError::Parse { line, msg: format!("unknown directive `{kw}`") }),
        }
    }
    if builder.names.is_empty() {
        return Err(TopologyError::NoNodes);
    }
    for (line, a, b, len) in pending_links {
        builder.add_link(&a, &b, len, line)?;
    }
    builder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Network {
        Network::new(&["A", "B", "C"], &[(0, 1, 200.0), (1, 2, 200.0), (0, 2, 600.0)], TopologyConfig::default())
            .unwrap()
    }

    #[test]
    fn undirected_edges_are_doubled() {
        let net = triangle();
        assert_eq!(net.num_arcs(), 6);
        for l in net.links() {
            let r = net.link(l.id.reverse());
            assert_eq!((r.src, r.dst), (l.dst, l.src));
            assert_eq!(r.length_km, l.length_km);
            assert_eq!(r.delay_ps, l.delay_ps);
        }
        // 200 km at 2e5 km/s = 1 ms
        assert_eq!(net.links()[0].delay_ps, 1_000_000_000);
    }

    #[test]
    fn outgoing_order_and_counts() {
        let net = triangle();
        let a = net.outgoing(NodeId(0)).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].dst, NodeId(1));
        assert_eq!(a[1].dst, NodeId(2));

        let iso = Network::new(&["A", "B", "C"], &[(0, 1, 1.0)], TopologyConfig::default()).unwrap();
        assert!(iso.outgoing(NodeId(2)).unwrap().is_empty());
        assert_eq!(iso.outgoing(NodeId(7)), Err(TopologyError::UnknownNode(NodeId(7))));
    }

    #[test]
    fn parse_errors() {
        let cfg = TopologyConfig::default();
        assert_eq!(load_topology("# nothing here\n", cfg), Err(TopologyError::NoNodes));
        assert!(matches!(
            load_topology("node A\nnode A\n", cfg),
            Err(TopologyError::DuplicateNode { line: 2, .. })
        ));
        assert!(matches!(
            load_topology("node A\nlink A B 3\n", cfg),
            Err(TopologyError::DanglingEndpoint { line: 2, .. })
        ));
        assert!(matches!(
            load_topology("node A\nnode B\nlink A B 0\n", cfg),
            Err(TopologyError::NonPositiveLength { line: 3, .. })
        ));
        assert!(matches!(
            load_topology("node A\nnode B\nlink A B x\n", cfg),
            Err(TopologyError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            load_topology("node A\nbogus\n", cfg),
            Err(TopologyError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            load_topology("node A\nlink A A 2\n", cfg),
            Err(TopologyError::SelfLoop { line: 2, .. })
        ));
    }

    #[test]
    fn comments_and_blank_lines() {
        let net = load_topology("node A # first\n\nnode B\nlink A B 12.5 # fiber\n", TopologyConfig::default())
            .unwrap();
        assert_eq!(net.num_nodes(), 2);
        assert_eq!(net.link(ArcId(1)).length_km, 12.5);
    }

    #[test]
    fn round_trip() {
        let net = triangle();
        let again = load_topology(&net.to_text(), TopologyConfig::default()).unwrap();
        assert_eq!(net, again);
    }
}
