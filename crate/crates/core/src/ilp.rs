//! Per-request integer program over a fixed set of candidate routes.
//!
//! Each candidate route is a spectrum-path slot `p`. Routes are pinned: the
//! arc-usage variables of arcs outside route `p` are fixed to zero, and the
//! flow constraints then force the remaining ones to equal `x_p`. Everything
//! else (slot choice, band width, sharing, guard bands, delay spread) is left
//! to the solver. Several slots may carry the same route, which is how two
//! bands end up on one fiber path.
//!
//! Variable names:
//!
//! | name              | meaning                                       |
//! |-------------------|-----------------------------------------------|
//! | `x_p`             | slot `p` is used                              |
//! | `xe_p_a`          | slot `p` uses arc `a`                         |
//! | `y_p_i`           | slot `p` uses frequency slot `i`              |
//! | `xs_p_a_i`        | slot `p` uses frequency slot `i` on arc `a`   |
//! | `o_p_q`           | slots `p` and `q` share an arc                |
//! | `g_p_q_a`         | both `p` and `q` use arc `a`                  |
//! | `t_p`             | band width of `p`                             |
//! | `z_p_a`           | `t_p` if `p` uses `a`, else 0                 |
//! | `pd_p`            | propagation delay of `p`, ps                  |
//! | `gvd_p`           | dispersion spread of `p`, ps                  |

#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use crate::error::IlpError;
use crate::heuristic::{FiberPath, Request};
use crate::physics::{gvd_coefficient, gvd_from_coefficients, FiberParams, GVD_COEFF_SCALE};
use crate::spectrum::{SlotRange, SpectrumState};
use crate::topology::{ArcId, Network, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Routing,
    Continuity,
    Consecutive,
    NonOverlap,
    LinearizationGamma,
    GuardBand,
    Bandwidth,
    Gvd,
    LinearizationZ,
    Delay,
    DiffDelay,
}

impl Family {
    pub const ALL: [Family; 11] = [
        Family::Routing,
        Family::Continuity,
        Family::Consecutive,
        Family::NonOverlap,
        Family::LinearizationGamma,
        Family::GuardBand,
        Family::Bandwidth,
        Family::Gvd,
        Family::LinearizationZ,
        Family::Delay,
        Family::DiffDelay,
    ];

    /// Constraint-name prefix in exported models.
    pub fn prefix(self) -> &'static str {
        match self {
            Family::Routing => "rt",
            Family::Continuity => "ct",
            Family::Consecutive => "cs",
            Family::NonOverlap => "no",
            Family::LinearizationGamma => "lg",
            Family::GuardBand => "gb",
            Family::Bandwidth => "bw",
            Family::Gvd => "gv",
            Family::LinearizationZ => "lz",
            Family::Delay => "dl",
            Family::DiffDelay => "dd",
        }
    }

    pub fn from_prefix(p: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.prefix() == p)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Integer,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: i64,
    pub upper: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    pub family: Family,
    /// `(variable index, coefficient)`, ascending by index, no zero coefficients.
    pub terms: Vec<(usize, i64)>,
    pub relation: Relation,
    pub rhs: i64,
}

impl Constraint {
    pub fn holds(&self, value: impl Fn(usize) -> i64) -> bool {
        let lhs: i128 = self.terms.iter().map(|(v, c)| i128::from(*c) * i128::from(value(*v))).sum();
        let rhs = i128::from(self.rhs);
        match self.relation {
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Eq => lhs == rhs,
        }
    }
}

/// Variables, linear constraints and a minimization objective.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSystem {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, i64)>,
}

impl ConstraintSystem {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn family_counts(&self) -> BTreeMap<Family, usize> {
        let mut m = BTreeMap::new();
        for c in &self.constraints {
            *m.entry(c.family).or_insert(0) += 1;
        }
        m
    }

    /// Checks every bound and constraint of `a`.
    pub fn check(&self, a: &Assignment) -> Result<Verdict, IlpError> {
        let values = self
            .variables
            .iter()
            .map(|v| a.get(&v.name).ok_or_else(|| IlpError::MissingValue(v.name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut violations = Vec::new();
        for (i, (var, val)) in self.variables.iter().zip(&values).enumerate() {
            if *val < var.lower || *val > var.upper {
                violations.push(Violation::Bound { var: i });
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.holds(|v| values[v]) {
                violations.push(Violation::Constraint { family: c.family, index: i });
            }
        }
        Ok(if violations.is_empty() { Verdict::Feasible } else { Verdict::Violations(violations) })
    }

    pub fn objective_value(&self, a: &Assignment) -> Result<i64, IlpError> {
        self.objective
            .iter()
            .map(|(v, c)| {
                let name = &self.variables[*v].name;
                a.get(name).map(|x| x * c).ok_or_else(|| IlpError::MissingValue(name.clone()))
            })
            .sum()
    }
}

/// Value per variable name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment(BTreeMap<String, i64>);

impl Assignment {
    pub fn new() -> Assignment {
        Assignment::default()
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.0.get(name).copied()
    }

    pub fn set(&mut self, name: impl Into<String>, value: i64) {
        self.0.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Violation {
    Constraint { family: Family, index: usize },
    Bound { var: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Feasible,
    Violations(Vec<Violation>),
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible)
    }

    pub fn families(&self) -> BTreeSet<Family> {
        match self {
            Verdict::Feasible => BTreeSet::new(),
            Verdict::Violations(v) => v
                .iter()
                .filter_map(|x| match x {
                    Violation::Constraint { family, .. } => Some(*family),
                    Violation::Bound { .. } => None,
                })
                .collect(),
        }
    }
}

pub fn check_assignment(model: &ConstraintSystem, a: &Assignment) -> Result<Verdict, IlpError> {
    model.check(a)
}

/// Total slot-arc usage of a feasible assignment.
pub fn solution_cost(model: &ConstraintSystem, a: &Assignment) -> Result<i64, IlpError> {
    if !model.check(a)?.is_feasible() {
        return Err(IlpError::Infeasible);
    }
    model.objective_value(a)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub slots: usize,
    pub gb: usize,
    pub max_dd_ps: i64,
    pub fiber: FiberParams,
    /// Add the dispersion terms to the delay-spread constraint.
    pub include_gvd: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelStats {
    pub paths: usize,
    pub slots: usize,
    pub arcs_used: usize,
    pub variables: usize,
    pub y_vars: usize,
    pub xs_vars: usize,
    pub o_vars: usize,
    pub gamma_vars: usize,
    pub z_vars: usize,
    pub constraints: usize,
    pub by_family: BTreeMap<Family, usize>,
}

/// A built model plus the index layout needed to encode and decode bands.
#[derive(Clone, Debug)]
pub struct IlpModel {
    pub system: ConstraintSystem,
    pub routes: Vec<FiberPath>,
    pub arcs_used: Vec<ArcId>,
    pub slots: usize,
    pub demand: usize,
    source: NodeId,
    gvd_coeff: Vec<i64>,
    index: HashMap<String, usize>,
}

struct Builder {
    sys: ConstraintSystem,
    index: HashMap<String, usize>,
}

impl Builder {
    fn var(&mut self, name: String, kind: VarKind, lower: i64, upper: i64) -> usize {
        let i = self.sys.variables.len();
        self.index.insert(name.clone(), i);
        self.sys.variables.push(Variable { name, kind, lower, upper });
        i
    }

    fn bin(&mut self, name: String) -> usize {
        self.var(name, VarKind::Binary, 0, 1)
    }

    fn add(&mut self, family: Family, name: String, terms: Vec<(usize, i64)>, relation: Relation, rhs: i64) {
        let mut merged: BTreeMap<usize, i64> = BTreeMap::new();
        for (v, c) in terms {
            *merged.entry(v).or_insert(0) += c;
        }
        let terms: Vec<_> = merged.into_iter().filter(|(_, c)| *c != 0).collect();
        if terms.is_empty() {
            let ok = match relation {
                Relation::Le => 0 <= rhs,
                Relation::Ge => 0 >= rhs,
                Relation::Eq => rhs == 0,
            };
            assert!(ok, "constant constraint {name} is unsatisfiable");
            return;
        }
        self.sys.constraints.push(Constraint {
            name: format!("{}_{}", family.prefix(), name),
            family,
            terms,
            relation,
            rhs,
        });
    }
}

/// Builds the model for one request over `candidates` (one spectrum-path slot each).
///
/// `state` supplies the currently available slots per arc for the guard-band
/// exclusions; pass an empty state for a blank network.
pub fn build_model(
    net: &Network,
    state: &SpectrumState,
    req: &Request,
    candidates: &[FiberPath],
    params: &ModelParams,
) -> Result<IlpModel, IlpError> {
    if candidates.is_empty() {
        return Err(IlpError::NoCandidates);
    }
    if params.slots == 0 {
        return Err(IlpError::NoSlots);
    }
    let nf = params.slots;
    let big_f = nf as i64;
    let gb = params.gb;
    let (s, d) = (req.source, req.destination);
    let np = candidates.len();

    let arcs_used: Vec<ArcId> =
        candidates.iter().flat_map(|p| p.arcs.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let on_route: Vec<BTreeSet<ArcId>> = candidates.iter().map(|p| p.arcs.iter().copied().collect()).collect();
    let pairs: Vec<(usize, usize)> = (0..np).flat_map(|p| (p + 1..np).map(move |q| (p, q))).collect();

    let mut b = Builder { sys: ConstraintSystem::default(), index: HashMap::new() };

    let x: Vec<usize> = (0..np).map(|p| b.bin(format!("x_{p}"))).collect();
    let mut xe: Vec<HashMap<ArcId, usize>> = vec![HashMap::new(); np];
    for p in 0..np {
        for a in &arcs_used {
            let ub = i64::from(on_route[p].contains(a));
            xe[p].insert(*a, b.var(format!("xe_{p}_{}", a.0), VarKind::Binary, 0, ub));
        }
    }
    let y: Vec<Vec<usize>> = (0..np).map(|p| (0..nf).map(|i| b.bin(format!("y_{p}_{i}"))).collect()).collect();
    let mut xs: Vec<HashMap<ArcId, Vec<usize>>> = vec![HashMap::new(); np];
    for p in 0..np {
        for a in &arcs_used {
            let v = (0..nf).map(|i| b.bin(format!("xs_{p}_{}_{i}", a.0))).collect();
            xs[p].insert(*a, v);
        }
    }
    let o: HashMap<(usize, usize), usize> = pairs.iter().map(|&(p, q)| ((p, q), b.bin(format!("o_{p}_{q}")))).collect();
    let mut gamma: HashMap<(usize, usize, ArcId), usize> = HashMap::new();
    for &(p, q) in &pairs {
        for a in &arcs_used {
            gamma.insert((p, q, *a), b.bin(format!("g_{p}_{q}_{}", a.0)));
        }
    }
    let t: Vec<usize> = (0..np).map(|p| b.var(format!("t_{p}"), VarKind::Integer, 0, big_f)).collect();
    let mut z: Vec<Vec<(ArcId, usize)>> = vec![Vec::new(); np];
    for (p, route) in candidates.iter().enumerate() {
        let mut sorted = route.arcs.clone();
        sorted.sort();
        for a in sorted {
            z[p].push((a, b.var(format!("z_{p}_{}", a.0), VarKind::Integer, 0, big_f)));
        }
    }
    let route_delay: Vec<i64> =
        candidates.iter().map(|r| r.arcs.iter().map(|a| net.link(*a).delay_ps).sum()).collect();
    let gvd_coeff: Vec<i64> = candidates
        .iter()
        .map(|r| r.arcs.iter().map(|a| gvd_coefficient(&params.fiber, net.link(*a).length_km)).sum())
        .collect();
    let gvd_ub: Vec<i64> = gvd_coeff.iter().map(|c| gvd_from_coefficients(*c, big_f)).collect();
    let pd: Vec<usize> =
        (0..np).map(|p| b.var(format!("pd_{p}"), VarKind::Integer, 0, route_delay[p])).collect();
    let gvd: Vec<usize> = (0..np).map(|p| b.var(format!("gvd_{p}"), VarKind::Integer, 0, gvd_ub[p])).collect();

    let mut into: BTreeMap<NodeId, Vec<ArcId>> = BTreeMap::new();
    let mut outof: BTreeMap<NodeId, Vec<ArcId>> = BTreeMap::new();
    for a in &arcs_used {
        let l = net.link(*a);
        outof.entry(l.src).or_default().push(*a);
        into.entry(l.dst).or_default().push(*a);
    }
    let nodes: BTreeSet<NodeId> = into.keys().chain(outof.keys()).copied().collect();
    let ins = |v: NodeId| into.get(&v).cloned().unwrap_or_default();
    let outs = |v: NodeId| outof.get(&v).cloned().unwrap_or_default();

    for p in 0..np {
        // Routing: flow conservation over the pinned route.
        for &v in &nodes {
            if v == s || v == d {
                continue;
            }
            let mut terms: Vec<_> = ins(v).iter().map(|a| (xe[p][a], 1)).collect();
            terms.extend(outs(v).iter().map(|a| (xe[p][a], -1)));
            b.add(Family::Routing, format!("flow_p{p}_v{}", v.0), terms, Relation::Eq, 0);
        }
        let mut terms: Vec<_> = outs(s).iter().map(|a| (xe[p][a], 1)).collect();
        terms.push((x[p], -1));
        b.add(Family::Routing, format!("src_p{p}"), terms, Relation::Eq, 0);
        let mut terms: Vec<_> = ins(d).iter().map(|a| (xe[p][a], 1)).collect();
        terms.push((x[p], -1));
        b.add(Family::Routing, format!("dst_p{p}"), terms, Relation::Eq, 0);
        let terms: Vec<_> = ins(s).iter().chain(outs(d).iter()).map(|a| (xe[p][a], 1)).collect();
        b.add(Family::Routing, format!("noloop_p{p}"), terms, Relation::Eq, 0);

        // Continuity: slot index chosen at the source and carried along.
        for i in 0..nf {
            let mut terms: Vec<_> = outs(s).iter().map(|a| (xs[p][a][i], -1)).collect();
            terms.push((y[p][i], 1));
            b.add(Family::Continuity, format!("src_p{p}_i{i}"), terms, Relation::Eq, 0);
            for &v in &nodes {
                if v == s || v == d {
                    continue;
                }
                let mut terms: Vec<_> = ins(v).iter().map(|a| (xs[p][a][i], 1)).collect();
                terms.extend(outs(v).iter().map(|a| (xs[p][a][i], -1)));
                b.add(Family::Continuity, format!("flow_p{p}_v{}_i{i}", v.0), terms, Relation::Eq, 0);
            }
        }
        for a in &arcs_used {
            for i in 0..nf {
                b.add(
                    Family::Continuity,
                    format!("link_p{p}_a{}_i{i}", a.0),
                    vec![(xs[p][a][i], 1), (xe[p][a], -1)],
                    Relation::Le,
                    0,
                );
            }
        }

        // Consecutive: band width, and no two used slots further apart than it.
        let mut terms: Vec<_> = outs(s).iter().flat_map(|a| xs[p][a].iter().map(|v| (*v, -1))).collect();
        terms.push((t[p], 1));
        b.add(Family::Consecutive, format!("width_p{p}"), terms, Relation::Eq, 0);
        // Off-route arcs carry no slots (continuity link rows), so only route arcs need the gap rows.
        for a in candidates[p].arcs.iter() {
            for i in 0..nf {
                for j in i..nf {
                    let (xi, xj) = (xs[p][a][i], xs[p][a][j]);
                    b.add(
                        Family::Consecutive,
                        format!("gap_p{p}_a{}_i{i}_j{j}", a.0),
                        vec![(xj, j as i64 + big_f), (xi, big_f - i as i64), (t[p], -1)],
                        Relation::Le,
                        2 * big_f - 1,
                    );
                }
            }
        }

        // Non-overlap: slots only on used paths.
        for i in 0..nf {
            b.add(Family::NonOverlap, format!("use_p{p}_i{i}"), vec![(x[p], 1), (y[p][i], -1)], Relation::Ge, 0);
        }

        // Guard band against existing allocations.
        for a in candidates[p].arcs.iter() {
            for i in 0..nf {
                if !available(state, *a, i, gb) {
                    b.add(Family::GuardBand, format!("avail_p{p}_a{}_i{i}", a.0), vec![(xs[p][a][i], 1)], Relation::Le, 0);
                }
            }
        }

        // Dispersion spread, rounded half-up from milli-ps coefficients.
        let mut terms: Vec<_> = z[p]
            .iter()
            .map(|(a, v)| (*v, -gvd_coefficient(&params.fiber, net.link(*a).length_km)))
            .collect();
        terms.push((gvd[p], GVD_COEFF_SCALE));
        b.add(Family::Gvd, format!("lo_p{p}"), terms.clone(), Relation::Ge, -(GVD_COEFF_SCALE / 2) + 1);
        b.add(Family::Gvd, format!("hi_p{p}"), terms, Relation::Le, GVD_COEFF_SCALE / 2);

        for (a, zv) in &z[p] {
            let xa = xe[p][a];
            b.add(Family::LinearizationZ, format!("ub_p{p}_a{}", a.0), vec![(*zv, 1), (xa, -big_f)], Relation::Le, 0);
            b.add(Family::LinearizationZ, format!("t_p{p}_a{}", a.0), vec![(*zv, 1), (t[p], -1)], Relation::Le, 0);
            b.add(
                Family::LinearizationZ,
                format!("lb_p{p}_a{}", a.0),
                vec![(*zv, 1), (t[p], -1), (xa, -big_f)],
                Relation::Ge,
                -big_f,
            );
        }

        let mut terms: Vec<_> = candidates[p].arcs.iter().map(|a| (xe[p][a], -net.link(*a).delay_ps)).collect();
        terms.push((pd[p], 1));
        b.add(Family::Delay, format!("p{p}"), terms, Relation::Eq, 0);
    }

    let big_d = route_delay.iter().max().copied().unwrap_or(0) + 2 * gvd_ub.iter().max().copied().unwrap_or(0) + 1;
    for &(p, q) in &pairs {
        let ov = o[&(p, q)];
        for a in &arcs_used {
            let g = gamma[&(p, q, *a)];
            let (xp, xq) = (xe[p][a], xe[q][a]);
            b.add(Family::NonOverlap, format!("share_p{p}_q{q}_a{}", a.0), vec![(xp, 1), (xq, 1), (ov, -1)], Relation::Le, 1);
            b.add(Family::LinearizationGamma, format!("p_p{p}_q{q}_a{}", a.0), vec![(g, 1), (xp, -1)], Relation::Le, 0);
            b.add(Family::LinearizationGamma, format!("q_p{p}_q{q}_a{}", a.0), vec![(g, 1), (xq, -1)], Relation::Le, 0);
            b.add(
                Family::LinearizationGamma,
                format!("both_p{p}_q{q}_a{}", a.0),
                vec![(xp, 1), (xq, 1), (g, -1)],
                Relation::Le,
                1,
            );
        }
        let mut terms: Vec<_> = arcs_used.iter().map(|a| (gamma[&(p, q, *a)], -1)).collect();
        terms.push((ov, 1));
        b.add(Family::LinearizationGamma, format!("o_p{p}_q{q}"), terms, Relation::Le, 0);
        for i in 0..nf {
            b.add(
                Family::NonOverlap,
                format!("slot_p{p}_q{q}_i{i}"),
                vec![(y[p][i], 1), (y[q][i], 1), (ov, 1)],
                Relation::Le,
                2,
            );
        }

        // Pairwise guard band on shared arcs: slots within gb of each other exclude.
        if gb > 0 {
            for a in on_route[p].intersection(&on_route[q]) {
                for i in 0..nf {
                    if !available(state, *a, i, gb) {
                        continue;
                    }
                    let lo = i.saturating_sub(gb);
                    let hi = (i + gb).min(nf - 1);
                    for j in lo..=hi {
                        if !available(state, *a, j, gb) {
                            continue;
                        }
                        b.add(
                            Family::GuardBand,
                            format!("pair_p{p}_q{q}_a{}_i{i}_j{j}", a.0),
                            vec![(xs[p][a][i], 1), (xs[q][a][j], 1), (ov, 1)],
                            Relation::Le,
                            2,
                        );
                    }
                }
            }
        }

        // Delay spread, only binding when both slots are used.
        for (first, second) in [(p, q), (q, p)] {
            let mut terms = vec![(pd[first], 1), (pd[second], -1), (x[p], big_d), (x[q], big_d)];
            if params.include_gvd {
                terms.push((gvd[p], 1));
                terms.push((gvd[q], 1));
            }
            b.add(
                Family::DiffDelay,
                format!("p{first}_q{second}"),
                terms,
                Relation::Le,
                params.max_dd_ps + 2 * big_d,
            );
        }
    }

    let bw: Vec<_> = y.iter().flatten().map(|v| (*v, 1)).collect();
    b.add(Family::Bandwidth, "demand".into(), bw, Relation::Eq, req.demand as i64);

    let mut objective: Vec<(usize, i64)> =
        xs.iter().flat_map(|m| m.values().flatten().map(|v| (*v, 1))).collect();
    objective.sort();
    b.sys.objective = objective;

    Ok(IlpModel {
        system: b.sys,
        routes: candidates.to_vec(),
        arcs_used,
        slots: nf,
        demand: req.demand,
        source: s,
        gvd_coeff,
        index: b.index,
    })
}

/// Slot `i` of `arc` and every slot within `gb` of it are free in `state`.
fn available(state: &SpectrumState, arc: ArcId, i: usize, gb: usize) -> bool {
    let lo = i.saturating_sub(gb);
    let hi = (i + gb).min(state.slots() - 1);
    (lo..=hi).all(|s| state.is_free(arc, s))
}

impl IlpModel {
    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn stats(&self) -> ModelStats {
        let count = |prefix: &str| {
            self.system.variables.iter().filter(|v| v.name.split('_').next() == Some(prefix)).count()
        };
        ModelStats {
            paths: self.routes.len(),
            slots: self.slots,
            arcs_used: self.arcs_used.len(),
            variables: self.system.variables.len(),
            y_vars: count("y"),
            xs_vars: count("xs"),
            o_vars: count("o"),
            gamma_vars: count("g"),
            z_vars: count("z"),
            constraints: self.system.constraints.len(),
            by_family: self.system.family_counts(),
        }
    }

    /// Full assignment for bands `(slot p, range)`; unlisted slots are unused.
    pub fn encode(&self, bands: &[(usize, SlotRange)]) -> Assignment {
        let np = self.routes.len();
        let mut width = vec![None; np];
        for (p, r) in bands {
            width[*p] = Some(*r);
        }
        let mut a = Assignment::new();
        for p in 0..np {
            let route = &self.routes[p];
            let used = width[p].is_some();
            let len = width[p].map_or(0, |r| r.len) as i64;
            a.set(format!("x_{p}"), i64::from(used));
            for arc in &self.arcs_used {
                let on = used && route.arcs.contains(arc);
                a.set(format!("xe_{p}_{}", arc.0), i64::from(on));
                for i in 0..self.slots {
                    let hit = on && width[p].is_some_and(|r| i >= r.start && i < r.end());
                    a.set(format!("xs_{p}_{}_{i}", arc.0), i64::from(hit));
                }
            }
            for i in 0..self.slots {
                let hit = width[p].is_some_and(|r| i >= r.start && i < r.end());
                a.set(format!("y_{p}_{i}"), i64::from(hit));
            }
            a.set(format!("t_{p}"), len);
            for arc in &route.arcs {
                a.set(format!("z_{p}_{}", arc.0), if used { len } else { 0 });
            }
            a.set(format!("pd_{p}"), if used { route.delay_ps } else { 0 });
            a.set(format!("gvd_{p}"), gvd_from_coefficients(self.gvd_coeff[p], len));
        }
        for p in 0..np {
            for q in p + 1..np {
                let mut share = false;
                for arc in &self.arcs_used {
                    let both = width[p].is_some()
                        && width[q].is_some()
                        && self.routes[p].arcs.contains(arc)
                        && self.routes[q].arcs.contains(arc);
                    share |= both;
                    a.set(format!("g_{p}_{q}_{}", arc.0), i64::from(both));
                }
                a.set(format!("o_{p}_{q}"), i64::from(share));
            }
        }
        a
    }

    /// Bands read back from an assignment, via the slots used at the source.
    pub fn decode(&self, a: &Assignment) -> Vec<(usize, SlotRange)> {
        let mut out = Vec::new();
        for (p, route) in self.routes.iter().enumerate() {
            let Some(first) = route.arcs.first() else { continue };
            debug_assert_eq!(self.routes[p].nodes[0], self.source);
            let used: Vec<usize> = (0..self.slots)
                .filter(|i| a.get(&format!("xs_{p}_{}_{i}", first.0)) == Some(1))
                .collect();
            if let (Some(lo), Some(hi)) = (used.first(), used.last()) {
                out.push((p, SlotRange::new(*lo, hi - lo + 1)));
            }
        }
        out
    }
}

fn write_terms(out: &mut String, terms: &[(usize, i64)], vars: &[Variable]) {
    for (k, (v, c)) in terms.iter().enumerate() {
        if k > 0 && k % 8 == 0 {
            out.push_str("\n   ");
        }
        let name = &vars[*v].name;
        let sign = if *c < 0 { "-" } else { "+" };
        let mag = c.unsigned_abs();
        if k == 0 && *c > 0 {
            if mag == 1 {
                let _ = write!(out, " {name}");
            } else {
                let _ = write!(out, " {mag} {name}");
            }
        } else if mag == 1 {
            let _ = write!(out, " {sign} {name}");
        } else {
            let _ = write!(out, " {sign} {mag} {name}");
        }
    }
}

/// CPLEX LP text. Every variable appears in `Bounds`, in declaration order.
pub fn export_lp(model: &ConstraintSystem) -> String {
    let vars = &model.variables;
    let mut out = String::new();
    out.push_str("\\ parallel spectrum assignment model\n");
    out.push_str("Minimize\n obj:");
    write_terms(&mut out, &model.objective, vars);
    out.push_str("\nSubject To\n");
    for c in &model.constraints {
        let _ = write!(out, " {}:", c.name);
        write_terms(&mut out, &c.terms, vars);
        let _ = writeln!(out, " {} {}", c.relation.symbol(), c.rhs);
    }
    out.push_str("Bounds\n");
    for v in vars {
        if v.lower == v.upper {
            let _ = writeln!(out, " {} = {}", v.name, v.lower);
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", v.lower, v.name, v.upper);
        }
    }
    for (header, kind) in [("General", VarKind::Integer), ("Binary", VarKind::Binary)] {
        let names: Vec<&str> = vars.iter().filter(|v| v.kind == kind).map(|v| v.name.as_str()).collect();
        if names.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{header}");
        for chunk in names.chunks(10) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    General,
    Binary,
    End,
}

fn parse_int(tok: &str, line: usize) -> Result<i64, IlpError> {
    tok.parse().map_err(|_| IlpError::LpParse { line, msg: format!("expected integer, found `{tok}`") })
}

/// Parses `[name:] terms [rel rhs]` from a token stream.
/// Tokens tagged with their line number.
type Tokens = Vec<(usize, String)>;
type Expr = (Vec<(usize, i64)>, Option<(Relation, i64)>);

fn parse_expr(toks: &[(usize, String)], index: &HashMap<String, usize>) -> Result<Expr, IlpError> {
    let mut terms = Vec::new();
    let mut sign = 1i64;
    let mut coef: Option<i64> = None;
    let mut k = 0;
    while k < toks.len() {
        let (line, tok) = (toks[k].0, toks[k].1.as_str());
        match tok {
            "+" => sign = 1,
            "-" => sign = -1,
            "<=" | ">=" | "=" | "=<" | "=>" => {
                let rel = match tok {
                    "<=" | "=<" => Relation::Le,
                    ">=" | "=>" => Relation::Ge,
                    _ => Relation::Eq,
                };
                let rhs = toks
                    .get(k + 1)
                    .ok_or(IlpError::LpParse { line, msg: "missing right-hand side".into() })?;
                let rhs = parse_int(&rhs.1, rhs.0)?;
                if k + 2 != toks.len() {
                    return Err(IlpError::LpParse { line, msg: "trailing tokens after right-hand side".into() });
                }
                return Ok((terms, Some((rel, rhs))));
            }
            _ if tok.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+') => {
                coef = Some(parse_int(tok, line)?);
            }
            _ => {
                let v = *index
                    .get(tok)
                    .ok_or_else(|| IlpError::LpParse { line, msg: format!("undeclared variable `{tok}`") })?;
                terms.push((v, sign * coef.take().unwrap_or(1)));
                sign = 1;
            }
        }
        k += 1;
    }
    Ok((terms, None))
}

/// Reads back a model written by [`export_lp`].
pub fn parse_lp(text: &str) -> Result<ConstraintSystem, IlpError> {
    let mut section = Section::Preamble;
    let mut objective_toks: Tokens = Vec::new();
    let mut rows: Vec<(String, usize, Tokens)> = Vec::new();
    let mut variables: Vec<Variable> = Vec::new();
    let mut general = BTreeSet::new();
    let mut binary = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('\\').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let lower = content.to_ascii_lowercase();
        let next = match lower.as_str() {
            "minimize" | "minimum" | "min" => Some(Section::Objective),
            "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
            "bounds" => Some(Section::Bounds),
            "general" | "generals" | "gen" => Some(Section::General),
            "binary" | "binaries" | "bin" => Some(Section::Binary),
            "end" => Some(Section::End),
            _ => None,
        };
        if let Some(n) = next {
            section = n;
            continue;
        }
        let toks: Vec<String> = content.split_whitespace().map(str::to_string).collect();
        match section {
            Section::Preamble | Section::End => {
                return Err(IlpError::LpParse { line, msg: format!("unexpected content `{content}`") })
            }
            Section::Objective => {
                let mut it = toks.into_iter();
                if objective_toks.is_empty() {
                    if let Some(first) = it.next() {
                        if !first.ends_with(':') {
                            objective_toks.push((line, first));
                        }
                    }
                }
                objective_toks.extend(it.map(|t| (line, t)));
            }
            Section::Constraints => {
                if let Some(name) = toks[0].strip_suffix(':') {
                    rows.push((name.to_string(), line, toks[1..].iter().map(|t| (line, t.clone())).collect()));
                } else if let Some(row) = rows.last_mut() {
                    row.2.extend(toks.into_iter().map(|t| (line, t)));
                } else {
                    return Err(IlpError::LpParse { line, msg: "constraint without a name".into() });
                }
            }
            Section::Bounds => {
                let t: Vec<&str> = toks.iter().map(String::as_str).collect();
                let (name, lower, upper) = match t.as_slice() {
                    [lo, "<=", name, "<=", hi] => (*name, parse_int(lo, line)?, parse_int(hi, line)?),
                    [name, "=", val] => {
                        let v = parse_int(val, line)?;
                        (*name, v, v)
                    }
                    _ => return Err(IlpError::LpParse { line, msg: format!("unsupported bound `{content}`") }),
                };
                variables.push(Variable { name: name.to_string(), kind: VarKind::Integer, lower, upper });
            }
            Section::General => general.extend(toks),
            Section::Binary => binary.extend(toks),
        }
    }

    for v in &mut variables {
        if binary.contains(&v.name) {
            v.kind = VarKind::Binary;
        } else if !general.contains(&v.name) {
            return Err(IlpError::LpParse { line: 0, msg: format!("variable `{}` has no type", v.name) });
        }
    }
    let index: HashMap<String, usize> = variables.iter().enumerate().map(|(i, v)| (v.name.clone(), i)).collect();

    let (objective, rel) = parse_expr(&objective_toks, &index)?;
    if rel.is_some() {
        return Err(IlpError::LpParse { line: 0, msg: "relation in objective".into() });
    }
    let mut constraints = Vec::with_capacity(rows.len());
    for (name, line, toks) in rows {
        let (terms, rel) = parse_expr(&toks, &index)?;
        let (relation, rhs) = rel.ok_or(IlpError::LpParse { line, msg: format!("constraint `{name}` has no relation") })?;
        let family = name
            .split('_')
            .next()
            .and_then(Family::from_prefix)
            .ok_or_else(|| IlpError::LpParse { line, msg: format!("unknown family in `{name}`") })?;
        constraints.push(Constraint { name, family, terms, relation, rhs });
    }
    Ok(ConstraintSystem { variables, constraints, objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristic::compute_fiber_paths;
    use crate::topology::TopologyConfig;

    fn line3() -> Network {
        Network::new(
            &["A", "B", "C", "D"],
            &[(0, 1, 100.0), (1, 2, 100.0), (2, 3, 100.0)],
            TopologyConfig { slots_per_link: 8, ..Default::default() },
        )
        .unwrap()
    }

    fn params(slots: usize, gb: usize) -> ModelParams {
        ModelParams { slots, gb, max_dd_ps: 1_000_000_000_000, fiber: FiberParams::default(), include_gvd: true }
    }

    #[test]
    fn single_path_has_no_pair_structure() {
        let net = line3();
        let st = SpectrumState::for_network(&net);
        let req = Request::new(NodeId(0), NodeId(3), 2);
        let paths = compute_fiber_paths(&net, NodeId(0), NodeId(3), 1);
        let m = build_model(&net, &st, &req, &paths, &params(8, 1)).unwrap();
        let s = m.stats();
        assert_eq!(s.o_vars, 0);
        assert_eq!(s.gamma_vars, 0);
        assert_eq!(s.y_vars, 8);
        assert_eq!(s.xs_vars, 3 * 8);
        assert!(!s.by_family.contains_key(&Family::DiffDelay));
        assert!(!s.by_family.contains_key(&Family::LinearizationGamma));
        assert!(!m.system.constraints.iter().any(|c| c.name.starts_with("gb_pair")));
    }

    #[test]
    fn two_slots_on_shared_route_count_gamma() {
        let net = line3();
        let st = SpectrumState::for_network(&net);
        let req = Request::new(NodeId(0), NodeId(3), 2);
        let p = compute_fiber_paths(&net, NodeId(0), NodeId(3), 1);
        let cands = vec![p[0].clone(), p[0].clone()];
        let m = build_model(&net, &st, &req, &cands, &params(8, 0)).unwrap();
        let s = m.stats();
        assert_eq!(s.gamma_vars, 3);
        assert_eq!(s.o_vars, 1);
        // three linearization rows per gamma plus the o bound
        assert_eq!(s.by_family[&Family::LinearizationGamma], 3 * 3 + 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = line3();
        let st = SpectrumState::for_network(&net);
        let req = Request::new(NodeId(0), NodeId(3), 2);
        assert_eq!(build_model(&net, &st, &req, &[], &params(8, 0)).unwrap_err(), IlpError::NoCandidates);
        let p = compute_fiber_paths(&net, NodeId(0), NodeId(3), 1);
        assert_eq!(build_model(&net, &st, &req, &p, &params(0, 0)).unwrap_err(), IlpError::NoSlots);
    }

    #[test]
    fn zero_assignment_violates_bandwidth() {
        let net = line3();
        let st = SpectrumState::for_network(&net);
        let req = Request::new(NodeId(0), NodeId(3), 2);
        let p = compute_fiber_paths(&net, NodeId(0), NodeId(3), 1);
        let m = build_model(&net, &st, &req, &p, &params(8, 0)).unwrap();
        let v = m.system.check(&m.encode(&[])).unwrap();
        assert!(v.families().contains(&Family::Bandwidth));

        let mut incomplete = m.encode(&[]);
        incomplete.0.remove("t_0");
        assert_eq!(m.system.check(&incomplete), Err(IlpError::MissingValue("t_0".into())));
    }

    #[test]
    fn overlapping_slots_violate_non_overlap() {
        let net = line3();
        let st = SpectrumState::for_network(&net);
        let req = Request::new(NodeId(0), NodeId(3), 4);
        let p = compute_fiber_paths(&net, NodeId(0), NodeId(3), 1);
        let m = build_model(&net, &st, &req, &[p[0].clone(), p[0].clone()], &params(8, 0)).unwrap();
        let a = m.encode(&[(0, SlotRange::new(2, 2)), (1, SlotRange::new(2, 2))]);
        assert!(m.system.check(&a).unwrap().families().contains(&Family::NonOverlap));
        let ok = m.encode(&[(0, SlotRange::new(0, 2)), (1, SlotRange::new(2, 2))]);
        assert!(m.system.check(&ok).unwrap().is_feasible());
    }

    #[test]
    fn guard_band_pair_rows() {
        let net = line3();
        let st = SpectrumState::for_network(&net);
        let req = Request::new(NodeId(0), NodeId(3), 4);
        let p = compute_fiber_paths(&net, NodeId(0), NodeId(3), 1);
        let m = build_model(&net, &st, &req, &[p[0].clone(), p[0].clone()], &params(8, 1)).unwrap();
        let adjacent = m.encode(&[(0, SlotRange::new(0, 2)), (1, SlotRange::new(2, 2))]);
        assert_eq!(m.system.check(&adjacent).unwrap().families(), BTreeSet::from([Family::GuardBand]));
        let spaced = m.encode(&[(0, SlotRange::new(0, 2)), (1, SlotRange::new(3, 2))]);
        assert!(m.system.check(&spaced).unwrap().is_feasible());
    }

    #[test]
    fn occupied_slots_excluded() {
        let net = line3();
        let mut st = SpectrumState::for_network(&net);
        let p = compute_fiber_paths(&net, NodeId(0), NodeId(3), 1);
        st.allocate(&p[0].arcs[1..2], SlotRange::new(4, 1), 0).unwrap();
        let req = Request::new(NodeId(0), NodeId(3), 2);
        let m = build_model(&net, &st, &req, &p, &params(8, 1)).unwrap();
        // slot 3 is within one slot of the occupied slot 4
        assert!(!m.system.check(&m.encode(&[(0, SlotRange::new(2, 2))])).unwrap().is_feasible());
        assert!(m.system.check(&m.encode(&[(0, SlotRange::new(0, 2))])).unwrap().is_feasible());
        assert!(m.system.check(&m.encode(&[(0, SlotRange::new(6, 2))])).unwrap().is_feasible());
    }

    #[test]
    fn costs() {
        let net = line3();
        let st = SpectrumState::for_network(&net);
        let p = compute_fiber_paths(&net, NodeId(0), NodeId(3), 1);
        let m = build_model(&net, &st, &Request::new(NodeId(0), NodeId(3), 2), &p, &params(8, 0)).unwrap();
        assert_eq!(solution_cost(&m.system, &m.encode(&[(0, SlotRange::new(3, 2))])).unwrap(), 6);
        assert_eq!(solution_cost(&m.system, &m.encode(&[])), Err(IlpError::Infeasible));

        // one-slot bands over 2 and 3 arcs
        let net = Network::new(
            &["A", "B", "C", "D"],
            &[(0, 1, 100.0), (1, 3, 100.0), (0, 2, 100.0), (2, 1, 100.0)],
            TopologyConfig { slots_per_link: 4, ..Default::default() },
        )
        .unwrap();
        let st = SpectrumState::for_network(&net);
        let p = compute_fiber_paths(&net, NodeId(0), NodeId(3), 2);
        assert_eq!((p[0].hops(), p[1].hops()), (2, 3));
        let m = build_model(&net, &st, &Request::new(NodeId(0), NodeId(3), 2), &p, &params(4, 0)).unwrap();
        let a = m.encode(&[(0, SlotRange::new(0, 1)), (1, SlotRange::new(1, 1))]);
        assert_eq!(solution_cost(&m.system, &a).unwrap(), 5);
    }

    #[test]
    fn encode_decode() {
        let net = line3();
        let st = SpectrumState::for_network(&net);
        let p = compute_fiber_paths(&net, NodeId(0), NodeId(3), 1);
        let m = build_model(&net, &st, &Request::new(NodeId(0), NodeId(3), 5), &[p[0].clone(), p[0].clone()], &params(8, 0))
            .unwrap();
        let bands = vec![(0, SlotRange::new(0, 3)), (1, SlotRange::new(5, 2))];
        assert_eq!(m.decode(&m.encode(&bands)), bands);
    }

    #[test]
    fn lp_round_trip_and_objective() {
        let net = line3();
        let st = SpectrumState::for_network(&net);
        let p = compute_fiber_paths(&net, NodeId(0), NodeId(3), 1);
        let m = build_model(&net, &st, &Request::new(NodeId(0), NodeId(3), 1), &p, &params(2, 0)).unwrap();
        let text = export_lp(&m.system);
        assert_eq!(parse_lp(&text).unwrap(), m.system);
        assert_eq!(export_lp(&m.system), text);

        let obj: String = text.lines().skip_while(|l| !l.starts_with(" obj:")).take_while(|l| !l.starts_with("Subject")).collect();
        let xs = m.system.variables.iter().filter(|v| v.name.starts_with("xs_")).count();
        assert_eq!(obj.matches("xs_").count(), xs);
        assert!(!obj.contains(" - "));
        assert!(text.contains("gv_lo_p0:") && text.contains("dl_p0:"));
    }

    #[test]
    fn lp_parse_errors() {
        assert!(matches!(parse_lp("Minimize\n obj: x\nEnd\n"), Err(IlpError::LpParse { .. })));
        assert!(matches!(parse_lp("garbage\n"), Err(IlpError::LpParse { line: 1, .. })));
        let ok = "Minimize\n obj: a\nSubject To\n bw_x: a + 2 b = 2\nBounds\n 0 <= a <= 1\n 0 <= b <= 3\nGeneral\n b\nBinary\n a\nEnd\n";
        let sys = parse_lp(ok).unwrap();
        assert_eq!(sys.constraints[0].terms, vec![(0, 1), (1, 2)]);
        assert_eq!(sys.variables[1].kind, VarKind::Integer);
        let bad_family = ok.replace("bw_x", "qq_x");
        assert!(matches!(parse_lp(&bad_family), Err(IlpError::LpParse { line: 4, .. })));
    }
}
