//! Structural graphs over a model and the per-row heterogeneous graph
//! encoding consumed by the message-passing classifier.
//!
//! Row graphs contain the instructing xApp, the changed ICP, every violated
//! KPI with its KPI-parameter group node, the owners of the changed ICP and
//! the managers of each violated KPI. Edges:
//!
//! * owner xApp - ICP (P2X)
//! * manager xApp - KPI (K2X)
//! * group - KPI, and group - changed ICP when the ICP is in the group (P2K)
//! * changed ICP - violated KPI
//!
//! Node features are `one-hot kind (5) ++ flags (4) ++ scalar (1)`.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{ConflictLabel, IcpId, KpiId, MappingTables, SystemModel, XAppId};
use crate::error::{Error, Result};
use crate::genc::SnapshotRecord;
use crate::rule_engine::sorted_intersects;

pub const KIND_COUNT: usize = 5;
pub const FLAG_COUNT: usize = 4;
pub const FEATURE_WIDTH: usize = KIND_COUNT + FLAG_COUNT + 1;

const F_UNASSIGNED: usize = KIND_COUNT;
const F_CHANGED: usize = KIND_COUNT + 1;
const F_VIOLATED: usize = KIND_COUNT + 2;
const F_INSTRUCTING: usize = KIND_COUNT + 3;
const F_SCALAR: usize = KIND_COUNT + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    XApp,
    Parameter,
    Kpi,
    SharedParameter,
    KpiParamGroup,
}

impl NodeKind {
    pub fn index(self) -> usize {
        match self {
            NodeKind::XApp => 0,
            NodeKind::Parameter => 1,
            NodeKind::Kpi => 2,
            NodeKind::SharedParameter => 3,
            NodeKind::KpiParamGroup => 4,
        }
    }

    fn short(self) -> &'static str {
        match self {
            NodeKind::XApp => "xapp",
            NodeKind::Parameter => "param",
            NodeKind::Kpi => "kpi",
            NodeKind::SharedParameter => "shared",
            NodeKind::KpiParamGroup => "group",
        }
    }
}

/// The model entity a node stands for. Not part of the features; kept so
/// that graphs of different rows stay distinguishable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Entity {
    XApp(XAppId),
    Icp(IcpId),
    Kpi(KpiId),
    Group(KpiId),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeteroGraph {
    pub kinds: Vec<NodeKind>,
    /// Row-major `nodes × FEATURE_WIDTH`.
    pub features: Vec<f64>,
    pub entities: Vec<Option<Entity>>,
    /// Undirected, stored with `a < b`, no duplicates.
    pub edges: Vec<(u32, u32)>,
    pub target: Option<ConflictLabel>,
}

impl HeteroGraph {
    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn width(&self) -> usize {
        FEATURE_WIDTH
    }

    pub fn feature(&self, node: usize) -> &[f64] {
        &self.features[node * FEATURE_WIDTH..(node + 1) * FEATURE_WIDTH]
    }

    fn add_node(&mut self, kind: NodeKind, entity: Option<Entity>) -> usize {
        let id = self.kinds.len();
        self.kinds.push(kind);
        self.entities.push(entity);
        let mut f = [0.0; FEATURE_WIDTH];
        f[kind.index()] = 1.0;
        self.features.extend_from_slice(&f);
        id
    }

    fn set(&mut self, node: usize, feature: usize, value: f64) {
        self.features[node * FEATURE_WIDTH + feature] = value;
    }

    fn add_edge(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let e = (a.min(b) as u32, a.max(b) as u32);
        if !self.edges.contains(&e) {
            self.edges.push(e);
        }
    }

    /// Compressed adjacency: `(offsets, neighbors)` with `offsets.len() == n + 1`.
    pub fn adjacency(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.node_count();
        let mut deg = vec![0usize; n];
        for &(a, b) in &self.edges {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + deg[i];
        }
        let mut fill = offsets.clone();
        let mut nbrs = vec![0usize; offsets[n]];
        for &(a, b) in &self.edges {
            let (a, b) = (a as usize, b as usize);
            nbrs[fill[a]] = b;
            fill[a] += 1;
            nbrs[fill[b]] = a;
            fill[b] += 1;
        }
        (offsets, nbrs)
    }

    /// Relabels nodes so that old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> HeteroGraph {
        let n = self.node_count();
        assert_eq!(perm.len(), n, "permutation length");
        let mut g = HeteroGraph {
            kinds: vec![NodeKind::XApp; n],
            features: vec![0.0; n * FEATURE_WIDTH],
            entities: vec![None; n],
            edges: Vec::with_capacity(self.edges.len()),
            target: self.target,
        };
        for (old, &new) in perm.iter().enumerate() {
            g.kinds[new] = self.kinds[old];
            g.entities[new] = self.entities[old];
            g.features[new * FEATURE_WIDTH..(new + 1) * FEATURE_WIDTH]
                .copy_from_slice(self.feature(old));
        }
        for &(a, b) in &self.edges {
            g.add_edge(perm[a as usize], perm[b as usize]);
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        if self.features.len() != n * FEATURE_WIDTH || self.entities.len() != n {
            return Err(Error::WidthMismatch {
                expected: n * FEATURE_WIDTH,
                found: self.features.len(),
            });
        }
        for &(a, b) in &self.edges {
            if a >= b || b as usize >= n {
                return Err(Error::InvalidArgument(format!("bad edge ({a}, {b})")));
            }
        }
        Ok(())
    }

    /// Graphviz dump for debugging.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph row {\n");
        for i in 0..self.node_count() {
            let name = match self.entities[i] {
                Some(Entity::XApp(x)) => x.name(),
                Some(Entity::Icp(p)) => p.name(),
                Some(Entity::Kpi(k)) => k.name(),
                Some(Entity::Group(k)) => format!("P[{}]", k.name()),
                None => format!("n{i}"),
            };
            let f = self.feature(i);
            let mut flags = Vec::new();
            for (idx, tag) in [
                (F_UNASSIGNED, "unassigned"),
                (F_CHANGED, "changed"),
                (F_VIOLATED, "violated"),
                (F_INSTRUCTING, "instructing"),
            ] {
                if f[idx] != 0.0 {
                    flags.push(tag);
                }
            }
            let _ = writeln!(
                s,
                "  n{i} [label=\"{name}\\n{} {}\"];",
                self.kinds[i].short(),
                flags.join(",")
            );
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(s, "  n{a} -- n{b};");
        }
        s.push_str("}\n");
        s
    }
}

/// Shared-parameter graph over xApps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XpGraph {
    pub xapps: usize,
    pub edges: Vec<(XAppId, XAppId)>,
}

impl XpGraph {
    pub fn neighbors(&self, x: XAppId) -> Vec<XAppId> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == x {
                    Some(b)
                } else if b == x {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }
}

pub fn build_xp_graph(model: &SystemModel) -> XpGraph {
    let t = &model.mappings;
    let owned: Vec<Vec<IcpId>> = (0..t.xapps).map(|i| t.icps_of(XAppId::new(i))).collect();
    let mut edges = Vec::new();
    for i in 0..t.xapps {
        for j in i + 1..t.xapps {
            if sorted_intersects(&owned[i], &owned[j]) {
                edges.push((XAppId::new(i), XAppId::new(j)));
            }
        }
    }
    XpGraph {
        xapps: t.xapps,
        edges,
    }
}

/// Bipartite KPI-ICP coupling graph, one edge per group membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KpGraph {
    pub kpis: usize,
    pub icps: usize,
    pub edges: Vec<(KpiId, IcpId)>,
}

impl KpGraph {
    pub fn degree_of_kpi(&self, k: KpiId) -> usize {
        self.edges.iter().filter(|e| e.0 == k).count()
    }

    pub fn degree_of_icp(&self, p: IcpId) -> usize {
        self.edges.iter().filter(|e| e.1 == p).count()
    }
}

pub fn build_kp_graph(model: &SystemModel) -> KpGraph {
    let t = &model.mappings;
    let edges = t
        .p2k
        .iter()
        .enumerate()
        .flat_map(|(k, g)| g.iter().map(move |&p| (KpiId::new(k), p)))
        .collect();
    KpGraph {
        kpis: t.kpi_count(),
        icps: t.icp_count(),
        edges,
    }
}

fn placeholder(target: ConflictLabel) -> HeteroGraph {
    let mut g = HeteroGraph::default();
    g.add_node(NodeKind::XApp, None);
    g.target = Some(target);
    g
}

/// Encodes one row as a heterogeneous graph. Idle rows become a single
/// placeholder node.
pub fn encode_record(record: &SnapshotRecord, mappings: &MappingTables) -> Result<HeteroGraph> {
    let Some(rcp) = record.rcp else {
        return Ok(placeholder(record.label));
    };
    if rcp.xapp.index() >= mappings.xapps {
        return Err(Error::UnknownXApp(rcp.xapp));
    }
    let owners = mappings.owners(rcp.icp)?;
    let mut g = HeteroGraph {
        target: Some(record.label),
        ..Default::default()
    };
    let mut xapp_nodes: HashMap<XAppId, usize> = HashMap::new();
    let mut xapp_node = |g: &mut HeteroGraph, x: XAppId| -> usize {
        *xapp_nodes
            .entry(x)
            .or_insert_with(|| g.add_node(NodeKind::XApp, Some(Entity::XApp(x))))
    };

    let xi = xapp_node(&mut g, rcp.xapp);
    g.set(xi, F_INSTRUCTING, 1.0);

    let kind = if owners.len() >= 2 {
        NodeKind::SharedParameter
    } else {
        NodeKind::Parameter
    };
    let pc = g.add_node(kind, Some(Entity::Icp(rcp.icp)));
    g.set(pc, F_CHANGED, 1.0);
    if mappings.is_unassigned(rcp.icp) {
        g.set(pc, F_UNASSIGNED, 1.0);
    }
    g.set(pc, F_SCALAR, record.icp_values.get(rcp.icp.index()).copied().unwrap_or(0.0) / 100.0);
    for &o in owners {
        let on = xapp_node(&mut g, o);
        g.add_edge(on, pc);
    }

    for &k in &record.vk {
        let group = mappings.group(k)?;
        let managers = mappings.managers(k)?;
        let kn = g.add_node(NodeKind::Kpi, Some(Entity::Kpi(k)));
        g.set(kn, F_VIOLATED, 1.0);
        g.set(kn, F_SCALAR, record.kpi_values.get(k.index()).copied().unwrap_or(0.0));
        g.add_edge(pc, kn);
        let gn = g.add_node(NodeKind::KpiParamGroup, Some(Entity::Group(k)));
        g.add_edge(gn, kn);
        if group.binary_search(&rcp.icp).is_ok() {
            g.add_edge(gn, pc);
        }
        for &x in managers {
            let xn = xapp_node(&mut g, x);
            g.add_edge(xn, kn);
        }
    }
    Ok(g)
}

/// Number of violated-KPI slots in a [`signature`].
pub const SIG_SLOTS: usize = 4;
const SIG_GLOBALS: usize = 7;
const SIG_SLOT_WIDTH: usize = 6;
pub const SIG_WIDTH: usize = SIG_GLOBALS + SIG_SLOTS * SIG_SLOT_WIDTH;

/// Flat per-row vector of the set relations Alg. 1 reads, plus the raw
/// values. Used by the tabular baseline and by SMOTE.
///
/// Globals: `has_rcp, pc_unassigned, pc_shared, instr_owns_pc, |X_p|/2,
/// min(|V|, S)/S, icp_value/100`. Each of the `S` slots: `present,
/// instr_manages, other_owners_managing/2, foreign_managers/2,
/// pc_in_group, kpi_value`. KPIs beyond `S` are dropped.
pub fn signature(record: &SnapshotRecord, mappings: &MappingTables) -> Result<Vec<f64>> {
    let mut s = vec![0.0; SIG_WIDTH];
    let Some(rcp) = record.rcp else {
        return Ok(s);
    };
    if rcp.xapp.index() >= mappings.xapps {
        return Err(Error::UnknownXApp(rcp.xapp));
    }
    let xp = mappings.owners(rcp.icp)?;
    let instr_owns = xp.contains(&rcp.xapp);
    s[0] = 1.0;
    s[1] = mappings.is_unassigned(rcp.icp) as u8 as f64;
    s[2] = (xp.len() >= 2) as u8 as f64;
    s[3] = instr_owns as u8 as f64;
    s[4] = xp.len() as f64 / 2.0;
    s[5] = record.vk.len().min(SIG_SLOTS) as f64 / SIG_SLOTS as f64;
    s[6] = record.icp_values.get(rcp.icp.index()).copied().unwrap_or(0.0) / 100.0;
    for (slot, &k) in record.vk.iter().take(SIG_SLOTS).enumerate() {
        let xk = mappings.managers(k)?;
        let group = mappings.group(k)?;
        let o = SIG_GLOBALS + slot * SIG_SLOT_WIDTH;
        let other_owners = xk.iter().filter(|x| **x != rcp.xapp && xp.contains(x)).count();
        let foreign = xk.iter().filter(|x| **x != rcp.xapp && !xp.contains(x)).count();
        s[o] = 1.0;
        s[o + 1] = xk.contains(&rcp.xapp) as u8 as f64;
        s[o + 2] = other_owners as f64 / 2.0;
        s[o + 3] = foreign as f64 / 2.0;
        s[o + 4] = group.binary_search(&rcp.icp).is_ok() as u8 as f64;
        s[o + 5] = record.kpi_values.get(k.index()).copied().unwrap_or(0.0);
    }
    Ok(s)
}

fn flag(v: f64) -> bool {
    v >= 0.5
}

fn count(v: f64) -> usize {
    (v * 2.0).round().clamp(0.0, 2.0) as usize
}

/// Rounds flags to {0, 1} and counts to halves; value features are kept.
pub fn snap_signature(sig: &[f64]) -> Vec<f64> {
    let mut s = sig.to_vec();
    for i in [0, 1, 2, 3] {
        s[i] = flag(s[i]) as u8 as f64;
    }
    s[4] = count(s[4]) as f64 / 2.0;
    let present = (0..SIG_SLOTS)
        .filter(|slot| flag(s[SIG_GLOBALS + slot * SIG_SLOT_WIDTH]))
        .count();
    s[5] = present as f64 / SIG_SLOTS as f64;
    for slot in 0..SIG_SLOTS {
        let o = SIG_GLOBALS + slot * SIG_SLOT_WIDTH;
        for i in [o, o + 1, o + 4] {
            s[i] = flag(s[i]) as u8 as f64;
        }
        s[o + 2] = count(s[o + 2]) as f64 / 2.0;
        s[o + 3] = count(s[o + 3]) as f64 / 2.0;
    }
    s
}

/// The Alg. 1 label implied by a snapped signature.
pub fn signature_label(sig: &[f64]) -> ConflictLabel {
    let s = snap_signature(sig);
    if !flag(s[0]) {
        return ConflictLabel::NoConflict;
    }
    let (unassigned, instr_owns) = (flag(s[1]), flag(s[3]));
    let mut label = ConflictLabel::NoConflict;
    for slot in 0..SIG_SLOTS {
        let o = SIG_GLOBALS + slot * SIG_SLOT_WIDTH;
        if !flag(s[o]) {
            continue;
        }
        let instr_manages = flag(s[o + 1]);
        let (others, foreign) = (count(s[o + 2]), count(s[o + 3]));
        let verdict = if instr_manages && others == 0 && foreign == 0 {
            ConflictLabel::NoConflict
        } else if flag(s[o + 4]) {
            if (instr_owns && instr_manages) || others > 0 {
                ConflictLabel::Direct
            } else {
                ConflictLabel::Indirect
            }
        } else if unassigned {
            ConflictLabel::Implicit
        } else {
            ConflictLabel::NoConflict
        };
        label = label.worst(verdict);
    }
    label
}

/// Canonical graph for a (possibly synthetic) signature. For rows with a
/// single violated KPI this is isomorphic to [`encode_record`].
pub fn graph_from_signature(sig: &[f64], target: Option<ConflictLabel>) -> Result<HeteroGraph> {
    if sig.len() != SIG_WIDTH {
        return Err(Error::WidthMismatch {
            expected: SIG_WIDTH,
            found: sig.len(),
        });
    }
    if !flag(sig[0]) {
        let mut g = placeholder(ConflictLabel::NoConflict);
        g.target = target;
        return Ok(g);
    }
    let mut g = HeteroGraph {
        target,
        ..Default::default()
    };
    let xi = g.add_node(NodeKind::XApp, None);
    g.set(xi, F_INSTRUCTING, 1.0);
    let kind = if flag(sig[2]) {
        NodeKind::SharedParameter
    } else {
        NodeKind::Parameter
    };
    let pc = g.add_node(kind, None);
    g.set(pc, F_CHANGED, 1.0);
    if flag(sig[1]) {
        g.set(pc, F_UNASSIGNED, 1.0);
    }
    g.set(pc, F_SCALAR, sig[6]);
    let instr_owns = flag(sig[3]);
    if instr_owns {
        g.add_edge(xi, pc);
    }
    let others: Vec<usize> = (0..count(sig[4]).saturating_sub(instr_owns as usize))
        .map(|_| {
            let o = g.add_node(NodeKind::XApp, None);
            g.add_edge(o, pc);
            o
        })
        .collect();
    for slot in 0..SIG_SLOTS {
        let o = SIG_GLOBALS + slot * SIG_SLOT_WIDTH;
        if !flag(sig[o]) {
            continue;
        }
        let kn = g.add_node(NodeKind::Kpi, None);
        g.set(kn, F_VIOLATED, 1.0);
        g.set(kn, F_SCALAR, sig[o + 5]);
        g.add_edge(pc, kn);
        let gn = g.add_node(NodeKind::KpiParamGroup, None);
        g.add_edge(gn, kn);
        if flag(sig[o + 4]) {
            g.add_edge(gn, pc);
        }
        if flag(sig[o + 1]) {
            g.add_edge(xi, kn);
        }
        for &on in others.iter().take(count(sig[o + 2])) {
            g.add_edge(on, kn);
        }
        for _ in 0..count(sig[o + 3]) {
            let f = g.add_node(NodeKind::XApp, None);
            g.add_edge(f, kn);
        }
    }
    Ok(g)
}
