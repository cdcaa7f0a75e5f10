//! Identifiers, mapping tables and the synthesized system model.
//!
//! Every entity is addressed by a dense index. Display names (`x3`, `p7`,
//! `k2`) are derived from the index and never take part in any decision.
//! Sets inside the mapping tables are kept sorted so that serialization and
//! iteration order are reproducible.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! entity_id {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn new(index: usize) -> Self {
                Self(index as u32)
            }

            pub fn index(self) -> usize {
                self.0 as usize
            }

            pub fn name(self) -> String {
                format!(concat!($prefix, "{}"), self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

entity_id!(XAppId, "x");
entity_id!(IcpId, "p");
entity_id!(KpiId, "k");

/// Outcome of the rule-based annotation for one (record, KPI) pair or for a
/// whole row after severity aggregation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictLabel {
    NoConflict,
    Direct,
    Indirect,
    Implicit,
}

impl ConflictLabel {
    pub const ALL: [ConflictLabel; 4] = [
        ConflictLabel::NoConflict,
        ConflictLabel::Direct,
        ConflictLabel::Indirect,
        ConflictLabel::Implicit,
    ];
    pub const COUNT: usize = 4;

    /// Class index used by classifiers and confusion matrices.
    pub fn index(self) -> usize {
        match self {
            ConflictLabel::NoConflict => 0,
            ConflictLabel::Direct => 1,
            ConflictLabel::Indirect => 2,
            ConflictLabel::Implicit => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Aggregation rank: Direct > Indirect > Implicit > NoConflict.
    pub fn severity(self) -> u8 {
        match self {
            ConflictLabel::NoConflict => 0,
            ConflictLabel::Implicit => 1,
            ConflictLabel::Indirect => 2,
            ConflictLabel::Direct => 3,
        }
    }

    pub fn worst(self, other: Self) -> Self {
        if other.severity() > self.severity() {
            other
        } else {
            self
        }
    }

    pub fn is_conflict(self) -> bool {
        self != ConflictLabel::NoConflict
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConflictLabel::NoConflict => "NoConflict",
            ConflictLabel::Direct => "Direct",
            ConflictLabel::Indirect => "Indirect",
            ConflictLabel::Implicit => "Implicit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "NoConflict" => Ok(ConflictLabel::NoConflict),
            "Direct" => Ok(ConflictLabel::Direct),
            "Indirect" => Ok(ConflictLabel::Indirect),
            "Implicit" => Ok(ConflictLabel::Implicit),
            other => Err(Error::Parse(format!("unknown label {other:?}"))),
        }
    }
}

impl fmt::Display for ConflictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// P2X, P2K, K2X and the unassigned-parameter set, stored densely by index.
///
/// `p2x[i]` is empty exactly when ICP `i` is unassigned.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MappingTables {
    /// Number of xApps the tables may reference.
    pub xapps: usize,
    pub p2x: Vec<Vec<XAppId>>,
    pub p2k: Vec<Vec<IcpId>>,
    pub k2x: Vec<Vec<XAppId>>,
    pub unassigned: Vec<IcpId>,
}

impl MappingTables {
    pub fn icp_count(&self) -> usize {
        self.p2x.len()
    }

    pub fn kpi_count(&self) -> usize {
        self.k2x.len()
    }

    pub fn xapp_count(&self) -> usize {
        self.xapps
    }

    pub fn owners(&self, icp: IcpId) -> Result<&[XAppId]> {
        self.p2x
            .get(icp.index())
            .map(Vec::as_slice)
            .ok_or(Error::UnknownIcp(icp))
    }

    pub fn group(&self, kpi: KpiId) -> Result<&[IcpId]> {
        self.p2k
            .get(kpi.index())
            .map(Vec::as_slice)
            .ok_or(Error::UnknownKpi(kpi))
    }

    pub fn managers(&self, kpi: KpiId) -> Result<&[XAppId]> {
        self.k2x
            .get(kpi.index())
            .map(Vec::as_slice)
            .ok_or(Error::UnknownKpi(kpi))
    }

    pub fn is_unassigned(&self, icp: IcpId) -> bool {
        self.unassigned.binary_search(&icp).is_ok()
    }

    /// ICPs owned by `x`, ascending.
    pub fn icps_of(&self, x: XAppId) -> Vec<IcpId> {
        self.p2x
            .iter()
            .enumerate()
            .filter(|(_, owners)| owners.contains(&x))
            .map(|(i, _)| IcpId::new(i))
            .collect()
    }

    /// KPIs whose group contains `icp`, ascending.
    pub fn kpis_containing(&self, icp: IcpId) -> Vec<KpiId> {
        self.p2k
            .iter()
            .enumerate()
            .filter(|(_, g)| g.binary_search(&icp).is_ok())
            .map(|(k, _)| KpiId::new(k))
            .collect()
    }

    /// Sort and deduplicate every set in place.
    pub fn normalize(&mut self) {
        for s in self.p2x.iter_mut().chain(self.k2x.iter_mut()) {
            s.sort_unstable();
            s.dedup();
        }
        for s in &mut self.p2k {
            s.sort_unstable();
            s.dedup();
        }
        self.unassigned.sort_unstable();
        self.unassigned.dedup();
    }
}

/// The synthesized ecosystem of `m` xApps, their ICPs and KPIs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemModel {
    pub m: usize,
    pub p_count: usize,
    pub k_count: usize,
    pub mappings: MappingTables,
    pub exclusive_icp: Vec<IcpId>,
    pub exclusive_kpi: Vec<KpiId>,
    /// Hidden couplings of unassigned ICPs to KPIs. They are not part of any
    /// KPI group, so the rule engine only sees them as implicit effects.
    pub latent: BTreeMap<IcpId, Vec<KpiId>>,
}

/// `P = 2M + floor(M/2)`.
pub fn icp_count_for(m: usize) -> usize {
    2 * m + m / 2
}

/// `K = floor(P/2)`.
pub fn kpi_count_for(m: usize) -> usize {
    icp_count_for(m) / 2
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    IcpCount { expected: usize, found: usize },
    KpiCount { expected: usize, found: usize },
    TableShape(String),
    UnassignedEmpty,
    OwnedAndUnassigned(IcpId),
    Orphan(IcpId),
    OwnerCount(IcpId, usize),
    ManagerCount(KpiId, usize),
    EmptyGroup(KpiId),
    UnknownReference(String),
    GroupMissingExclusive { kpi: KpiId, xapp: XAppId, icp: IcpId },
    NotInjective(&'static str),
    ExclusiveNotOwned { xapp: XAppId, icp: IcpId },
    LatentOnAssigned(IcpId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IcpCount { expected, found } => {
                write!(f, "ICP count rule: expected P = {expected}, found {found}")
            }
            Violation::KpiCount { expected, found } => {
                write!(f, "KPI count rule: expected K = {expected}, found {found}")
            }
            Violation::TableShape(s) => write!(f, "table shape: {s}"),
            Violation::UnassignedEmpty => f.write_str("unassigned-set rule: no unassigned ICP"),
            Violation::OwnedAndUnassigned(p) => {
                write!(f, "disjointness rule: {p} is both owned and unassigned")
            }
            Violation::Orphan(p) => write!(f, "coverage rule: {p} is neither owned nor unassigned"),
            Violation::OwnerCount(p, n) => write!(f, "owner-count rule: {p} has {n} owners"),
            Violation::ManagerCount(k, n) => write!(f, "manager-count rule: {k} has {n} managers"),
            Violation::EmptyGroup(k) => write!(f, "group rule: {k} has an empty ICP group"),
            Violation::UnknownReference(s) => write!(f, "reference rule: {s}"),
            Violation::GroupMissingExclusive { kpi, xapp, icp } => write!(
                f,
                "group-union rule: {kpi} is managed by {xapp} but its group lacks {icp}"
            ),
            Violation::NotInjective(which) => write!(f, "exclusivity rule: {which} is not injective"),
            Violation::ExclusiveNotOwned { xapp, icp } => {
                write!(f, "exclusivity rule: {icp} is not owned solely by {xapp}")
            }
            Violation::LatentOnAssigned(p) => {
                write!(f, "latent-coupling rule: {p} is assigned but has latent couplings")
            }
        }
    }
}

/// Table-level invariants, independent of how the tables were produced.
pub fn validate_mappings(t: &MappingTables) -> Vec<Violation> {
    let mut out = Vec::new();
    if t.p2k.len() != t.k2x.len() {
        out.push(Violation::TableShape(format!(
            "p2k has {} KPIs but k2x has {}",
            t.p2k.len(),
            t.k2x.len()
        )));
    }
    let p = t.icp_count();
    if t.unassigned.is_empty() {
        out.push(Violation::UnassignedEmpty);
    }
    for u in &t.unassigned {
        if u.index() >= p {
            out.push(Violation::UnknownReference(format!("unassigned {u} out of range")));
        }
    }
    for (i, owners) in t.p2x.iter().enumerate() {
        let icp = IcpId::new(i);
        let unassigned = t.is_unassigned(icp);
        match (owners.is_empty(), unassigned) {
            (false, true) => out.push(Violation::OwnedAndUnassigned(icp)),
            (true, false) => out.push(Violation::Orphan(icp)),
            _ => {}
        }
        if !owners.is_empty() && !(1..=2).contains(&owners.len()) {
            out.push(Violation::OwnerCount(icp, owners.len()));
        }
    }
    for x in t.p2x.iter().chain(t.k2x.iter()).flatten() {
        if x.index() >= t.xapps {
            out.push(Violation::UnknownReference(format!("{x} out of range")));
        }
    }
    for (k, managers) in t.k2x.iter().enumerate() {
        let kpi = KpiId::new(k);
        if !(1..=2).contains(&managers.len()) {
            out.push(Violation::ManagerCount(kpi, managers.len()));
        }
        match t.p2k.get(k) {
            Some(g) if g.is_empty() => out.push(Violation::EmptyGroup(kpi)),
            Some(g) => {
                for icp in g {
                    if icp.index() >= p {
                        out.push(Violation::UnknownReference(format!(
                            "group of {kpi} references {icp}"
                        )));
                    }
                }
            }
            None => {}
        }
    }
    out
}

/// Every broken invariant of `model`; an empty list means the model is valid.
pub fn validate_model(model: &SystemModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let expected_p = icp_count_for(model.m);
    let expected_k = kpi_count_for(model.m);
    if model.p_count != expected_p {
        out.push(Violation::IcpCount {
            expected: expected_p,
            found: model.p_count,
        });
    }
    if model.k_count != expected_k {
        out.push(Violation::KpiCount {
            expected: expected_k,
            found: model.k_count,
        });
    }
    out.extend(validate_tables(model));

    let t = &model.mappings;
    if model.exclusive_icp.len() != model.m || model.exclusive_kpi.len() != model.m {
        out.push(Violation::TableShape(
            "exclusive maps must cover every xApp".to_string(),
        ));
    }
    if !is_injective(&model.exclusive_icp) {
        out.push(Violation::NotInjective("exclusive_icp"));
    }
    if !is_injective(&model.exclusive_kpi) {
        out.push(Violation::NotInjective("exclusive_kpi"));
    }
    for (x, icp) in model.exclusive_icp.iter().enumerate() {
        let xapp = XAppId::new(x);
        if t.p2x.get(icp.index()).map(|o| o.as_slice()) != Some(&[xapp][..]) {
            out.push(Violation::ExclusiveNotOwned { xapp, icp: *icp });
        }
    }
    for (k, managers) in t.k2x.iter().enumerate() {
        let kpi = KpiId::new(k);
        let Some(group) = t.p2k.get(k) else { continue };
        for x in managers {
            if let Some(&icp) = model.exclusive_icp.get(x.index()) {
                if group.binary_search(&icp).is_err() {
                    out.push(Violation::GroupMissingExclusive {
                        kpi,
                        xapp: *x,
                        icp,
                    });
                }
            }
        }
    }
    out
}

/// The subset of [`validate_model`] that hand-built models (such as the
/// ES/MRO scenario) must also satisfy: table shapes, mapping-table rules and
/// latent couplings. Count formulas and exclusivity are GenC-specific.
pub fn validate_tables(model: &SystemModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let t = &model.mappings;
    if t.p2x.len() != model.p_count {
        out.push(Violation::TableShape(format!(
            "p2x covers {} ICPs, model has {}",
            t.p2x.len(),
            model.p_count
        )));
    }
    if t.k2x.len() != model.k_count {
        out.push(Violation::TableShape(format!(
            "k2x covers {} KPIs, model has {}",
            t.k2x.len(),
            model.k_count
        )));
    }
    if t.xapps != model.m {
        out.push(Violation::TableShape(format!(
            "tables declare {} xApps, model has {}",
            t.xapps, model.m
        )));
    }
    out.extend(validate_mappings(t));
    for (icp, kpis) in &model.latent {
        if !t.is_unassigned(*icp) {
            out.push(Violation::LatentOnAssigned(*icp));
        }
        for k in kpis {
            if k.index() >= model.k_count {
                out.push(Violation::UnknownReference(format!(
                    "latent coupling of {icp} references {k}"
                )));
            }
        }
    }
    out
}

fn is_injective<T: Ord + Copy>(v: &[T]) -> bool {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.windows(2).all(|w| w[0] != w[1])
}

/// JSON sidecar stored next to every generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub m: usize,
    pub p_count: usize,
    pub k_count: usize,
    pub p2x: BTreeMap<String, Vec<u32>>,
    pub p2k: BTreeMap<String, Vec<u32>>,
    pub k2x: BTreeMap<String, Vec<u32>>,
    pub unassigned: Vec<u32>,
    pub exclusive_icp: BTreeMap<String, u32>,
    pub exclusive_kpi: BTreeMap<String, u32>,
    #[serde(default)]
    pub latent: BTreeMap<String, Vec<u32>>,
    pub seed: u64,
    pub share_prob: f64,
    pub sigma: f64,
    pub profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

fn ids<T: Copy>(v: &[T], f: impl Fn(T) -> u32) -> Vec<u32> {
    v.iter().map(|x| f(*x)).collect()
}

impl Sidecar {
    pub fn from_model(
        model: &SystemModel,
        seed: u64,
        share_prob: f64,
        sigma: f64,
        profile: &str,
    ) -> Self {
        let t = &model.mappings;
        let p2x = t
            .p2x
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.is_empty())
            .map(|(i, o)| (i.to_string(), ids(o, |x| x.0)))
            .collect();
        let p2k = t
            .p2k
            .iter()
            .enumerate()
            .map(|(k, g)| (k.to_string(), ids(g, |p| p.0)))
            .collect();
        let k2x = t
            .k2x
            .iter()
            .enumerate()
            .map(|(k, x)| (k.to_string(), ids(x, |x| x.0)))
            .collect();
        Sidecar {
            m: model.m,
            p_count: model.p_count,
            k_count: model.k_count,
            p2x,
            p2k,
            k2x,
            unassigned: ids(&t.unassigned, |p| p.0),
            exclusive_icp: model
                .exclusive_icp
                .iter()
                .enumerate()
                .map(|(x, p)| (x.to_string(), p.0))
                .collect(),
            exclusive_kpi: model
                .exclusive_kpi
                .iter()
                .enumerate()
                .map(|(x, k)| (x.to_string(), k.0))
                .collect(),
            latent: model
                .latent
                .iter()
                .map(|(p, ks)| (p.0.to_string(), ids(ks, |k| k.0)))
                .collect(),
            seed,
            share_prob,
            sigma,
            profile: profile.to_string(),
            config: None,
        }
    }

    pub fn to_model(&self) -> Result<SystemModel> {
        fn key(s: &str) -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("non-integer map key {s:?}")))
        }
        fn dense<T: Clone>(
            map: &BTreeMap<String, Vec<u32>>,
            len: usize,
            what: &str,
            f: impl Fn(u32) -> T,
        ) -> Result<Vec<Vec<T>>> {
            let mut out = vec![Vec::new(); len];
            for (k, v) in map {
                let i = key(k)?;
                let slot = out
                    .get_mut(i)
                    .ok_or_else(|| Error::Parse(format!("{what} key {i} out of range")))?;
                *slot = v.iter().map(|x| f(*x)).collect();
            }
            Ok(out)
        }
        fn flat<T>(
            map: &BTreeMap<String, u32>,
            len: usize,
            f: impl Fn(u32) -> T,
        ) -> Result<Vec<T>> {
            let mut pairs = map
                .iter()
                .map(|(k, v)| key(k).map(|k| (k, *v)))
                .collect::<Result<Vec<_>>>()?;
            pairs.sort_unstable();
            if pairs.len() != len || pairs.iter().enumerate().any(|(i, (k, _))| i != *k) {
                return Err(Error::Parse("exclusive map must cover 0..m".into()));
            }
            Ok(pairs.into_iter().map(|(_, v)| f(v)).collect())
        }
        let mut mappings = MappingTables {
            xapps: self.m,
            p2x: dense(&self.p2x, self.p_count, "p2x", XAppId)?,
            p2k: dense(&self.p2k, self.k_count, "p2k", IcpId)?,
            k2x: dense(&self.k2x, self.k_count, "k2x", XAppId)?,
            unassigned: self.unassigned.iter().map(|p| IcpId(*p)).collect(),
        };
        mappings.normalize();
        let mut latent = BTreeMap::new();
        for (k, v) in &self.latent {
            latent.insert(IcpId::new(key(k)?), v.iter().map(|k| KpiId(*k)).collect());
        }
        Ok(SystemModel {
            m: self.m,
            p_count: self.p_count,
            k_count: self.k_count,
            mappings,
            exclusive_icp: flat(&self.exclusive_icp, self.m, IcpId)?,
            exclusive_kpi: flat(&self.exclusive_kpi, self.m, KpiId)?,
            latent,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// x0 owns p0; x1 owns p1; p2 shared; p3 unassigned.
    fn tiny() -> SystemModel {
        SystemModel {
            m: 2,
            p_count: 5,
            k_count: 2,
            mappings: MappingTables {
                xapps: 2,
                p2x: vec![
                    vec![XAppId(0)],
                    vec![XAppId(1)],
                    vec![XAppId(0), XAppId(1)],
                    vec![],
                    vec![XAppId(1)],
                ],
                p2k: vec![
                    vec![IcpId(0), IcpId(2)],
                    vec![IcpId(0), IcpId(1), IcpId(2), IcpId(4)],
                ],
                k2x: vec![vec![XAppId(0)], vec![XAppId(1)]],
                unassigned: vec![IcpId(3)],
            },
            exclusive_icp: vec![IcpId(0), IcpId(1)],
            exclusive_kpi: vec![KpiId(0), KpiId(1)],
            latent: BTreeMap::from([(IcpId(3), vec![KpiId(1)])]),
        }
    }

    #[test]
    fn counts_follow_formula() {
        assert_eq!(icp_count_for(5), 12);
        assert_eq!(icp_count_for(10), 25);
        assert_eq!(icp_count_for(20), 50);
        assert_eq!(icp_count_for(50), 125);
        assert_eq!(kpi_count_for(10), 12);
        assert_eq!(kpi_count_for(1), 1);
    }

    #[test]
    fn names_are_derived_from_index() {
        assert_eq!(XAppId(3).name(), "x3");
        assert_eq!(IcpId(7).to_string(), "p7");
        assert_eq!(KpiId::new(2).name(), "k2");
    }

    #[test]
    fn tiny_model_is_valid() {
        assert_eq!(validate_model(&tiny()), vec![]);
    }

    #[test]
    fn empty_unassigned_set_is_one_violation() {
        let mut m = tiny();
        m.mappings.unassigned.clear();
        m.mappings.p2x[3] = vec![XAppId(0)];
        m.latent.clear();
        let v = validate_model(&m);
        assert_eq!(v, vec![Violation::UnassignedEmpty]);
        assert!(v[0].to_string().contains("unassigned-set"));
    }

    #[test]
    fn owned_and_unassigned_is_one_violation() {
        let mut m = tiny();
        m.mappings.p2x[3] = vec![XAppId(0)];
        let v = validate_model(&m);
        assert_eq!(v, vec![Violation::OwnedAndUnassigned(IcpId(3))]);
        assert!(v[0].to_string().contains("disjointness"));
    }

    #[test]
    fn missing_exclusive_in_group_is_reported() {
        let mut m = tiny();
        m.mappings.p2k[1].retain(|p| *p != IcpId(1));
        let v = validate_model(&m);
        assert!(v.contains(&Violation::GroupMissingExclusive {
            kpi: KpiId(1),
            xapp: XAppId(1),
            icp: IcpId(1)
        }));
    }

    #[test]
    fn worst_label_uses_severity_order() {
        use ConflictLabel::*;
        assert_eq!(NoConflict.worst(Implicit), Implicit);
        assert_eq!(Implicit.worst(Indirect), Indirect);
        assert_eq!(Direct.worst(Indirect), Direct);
        for l in ConflictLabel::ALL {
            assert_eq!(ConflictLabel::from_index(l.index()), Some(l));
            assert_eq!(ConflictLabel::parse(l.as_str()).unwrap(), l);
        }
    }

    #[test]
    fn sidecar_roundtrip() {
        let m = tiny();
        let s = Sidecar::from_model(&m, 9, 0.3, 50.0, "low");
        let back = Sidecar::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_model().unwrap(), m);
        assert!(s.to_json().unwrap().contains("\"p2x\""));
    }
}
