use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{ConflictLabel, IcpId, KpiId, MappingTables, XAppId};
use crate::error::Result;
use crate::genc::{Rcp, SnapshotRecord};
use crate::learn::{ClassifierModel, EncodedSet};
use crate::rule_engine::{classify, AnnotationResult, TouchedSets};

/// Who changed a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    XApp(XAppId),
    Cms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcpEntry {
    pub t: u64,
    pub actor: Actor,
    pub icp: IcpId,
    pub old: f64,
    pub new: f64,
}

#[derive(Clone, Debug)]
pub enum Classifier {
    RuleEngine,
    Learned(Box<ClassifierModel>),
}

impl Classifier {
    pub fn name(&self) -> String {
        match self {
            Classifier::RuleEngine => "rule".to_string(),
            Classifier::Learned(m) => m.architecture.to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CmsState {
    pub rcp_log: Vec<RcpEntry>,
    /// KPIs currently below threshold, with the first step they were seen below.
    pub vk_store: BTreeMap<KpiId, u64>,
    /// KPIs whose current violation episode has already raised a trigger.
    pub triggered: BTreeSet<KpiId>,
    pub persistence_required: u64,
    pub control_interval: u64,
    pub classifier: Classifier,
}

impl CmsState {
    pub const DEFAULT_PERSISTENCE: u64 = 10;

    pub fn new(classifier: Classifier) -> Self {
        CmsState {
            rcp_log: Vec::new(),
            vk_store: BTreeMap::new(),
            triggered: BTreeSet::new(),
            persistence_required: Self::DEFAULT_PERSISTENCE,
            control_interval: 1,
            classifier,
        }
    }

    /// Appends to the RCP log, keeping timestamps non-decreasing.
    pub fn log_change(&mut self, entry: RcpEntry) {
        debug_assert!(self.rcp_log.last().is_none_or(|e| e.t <= entry.t));
        self.rcp_log.push(entry);
    }

    /// Latest change made by an xApp; CMS-made changes are not conflicts.
    pub fn latest_xapp_change(&self) -> Option<&RcpEntry> {
        self.rcp_log.iter().rev().find(|e| matches!(e.actor, Actor::XApp(_)))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmonReport {
    /// KPIs that crossed below threshold at this step.
    pub new_violations: Vec<KpiId>,
    pub recovered: Vec<KpiId>,
    /// KPIs whose violation reached the persistence requirement at this step.
    pub persistent: Vec<KpiId>,
    pub trigger: bool,
}

/// Threshold monitor. A KPI triggers once per violation episode, at the
/// first step where `t - start >= persistence_required`; it re-arms after
/// it recovers.
pub fn pmon_step(kpi_values: &[f64], sla: &[f64], t: u64, state: &mut CmsState) -> PmonReport {
    debug_assert_eq!(kpi_values.len(), sla.len());
    let mut report = PmonReport::default();
    for (j, (&v, &tau)) in kpi_values.iter().zip(sla).enumerate() {
        let k = KpiId::new(j);
        if v < tau {
            let start = *state.vk_store.entry(k).or_insert_with(|| {
                report.new_violations.push(k);
                t
            });
            if t.saturating_sub(start) >= state.persistence_required && state.triggered.insert(k) {
                report.persistent.push(k);
            }
        } else if state.vk_store.remove(&k).is_some() {
            state.triggered.remove(&k);
            report.recovered.push(k);
        }
    }
    report.trigger = !report.persistent.is_empty();
    report
}

#[derive(Clone, Debug, PartialEq)]
pub struct CdcOutcome {
    /// Stage 1: persistent violation and a logged xApp change.
    pub alarm: bool,
    pub result: AnnotationResult,
    pub record: Option<SnapshotRecord>,
    pub xapps: Vec<XAppId>,
    pub icp: Option<IcpId>,
    pub note: Option<String>,
}

/// Two-stage detection: a binary alarm, then classification of the latest
/// xApp change against the persistent violations.
pub fn cdc_classify(
    state: &CmsState,
    mappings: &MappingTables,
    vk: &[KpiId],
    t: u64,
    icp_values: &[f64],
    kpi_values: &[f64],
    sla: &[f64],
) -> Result<CdcOutcome> {
    let latest = state.latest_xapp_change();
    let alarm = !vk.is_empty() && latest.is_some();
    let none = |note: &str| CdcOutcome {
        alarm,
        result: AnnotationResult {
            label: ConflictLabel::NoConflict,
            per_kpi: Vec::new(),
            touched: TouchedSets {
                v: vk.len(),
                ..Default::default()
            },
        },
        record: None,
        xapps: Vec::new(),
        icp: None,
        note: Some(note.to_string()),
    };
    if vk.is_empty() {
        return Ok(none("no persistent violation"));
    }
    let Some(entry) = latest else {
        return Ok(none("alarm without a logged parameter change"));
    };
    let Actor::XApp(xi) = entry.actor else {
        unreachable!("latest_xapp_change only returns xApp entries")
    };
    let rcp = Rcp {
        xapp: xi,
        icp: entry.icp,
    };
    let mut vk = vk.to_vec();
    vk.sort_unstable();
    let mut record = SnapshotRecord {
        t,
        rcp: Some(rcp),
        icp_values: icp_values.to_vec(),
        kpi_values: kpi_values.to_vec(),
        sla: sla.to_vec(),
        vk,
        label: ConflictLabel::NoConflict,
    };
    let result = match &state.classifier {
        Classifier::RuleEngine => classify(record.rcp, &record.vk, mappings)?,
        Classifier::Learned(model) => {
            let input = EncodedSet::encode_one(&record, mappings, model.encoding.input)?;
            let label = model.predict(&input)?;
            AnnotationResult {
                label,
                per_kpi: Vec::new(),
                touched: TouchedSets {
                    v: record.vk.len(),
                    ..Default::default()
                },
            }
        }
    };
    record.label = result.label;
    let mut xapps: BTreeSet<XAppId> = mappings.owners(entry.icp)?.iter().copied().collect();
    xapps.insert(xi);
    for k in &record.vk {
        xapps.extend(mappings.managers(*k)?.iter().copied());
    }
    Ok(CdcOutcome {
        alarm,
        result,
        record: Some(record),
        xapps: xapps.into_iter().collect(),
        icp: Some(entry.icp),
        note: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> CmsState {
        CmsState::new(Classifier::RuleEngine)
    }

    #[test]
    fn healthy_kpis_never_trigger() {
        let mut s = state();
        for t in 0..50 {
            let r = pmon_step(&[0.9, 0.95], &[0.8, 0.8], t, &mut s);
            assert_eq!(r, PmonReport::default());
        }
    }

    #[test]
    fn trigger_after_ten_seconds_below() {
        let mut s = state();
        let tau = [0.8];
        for t in 100..110 {
            let r = pmon_step(&[0.5], &tau, t, &mut s);
            assert!(!r.trigger, "t={t}");
            assert_eq!(r.new_violations.is_empty(), t != 100);
        }
        let r = pmon_step(&[0.5], &tau, 110, &mut s);
        assert!(r.trigger);
        assert_eq!(r.persistent, vec![KpiId(0)]);
        // one trigger per episode
        assert!(!pmon_step(&[0.5], &tau, 111, &mut s).trigger);
        let r = pmon_step(&[0.9], &tau, 112, &mut s);
        assert_eq!(r.recovered, vec![KpiId(0)]);
        assert!(s.vk_store.is_empty() && s.triggered.is_empty());
    }

    #[test]
    fn short_dip_never_triggers() {
        let mut s = state();
        let r = pmon_step(&[0.5], &[0.8], 5, &mut s);
        assert_eq!(r.new_violations, vec![KpiId(0)]);
        assert_eq!(s.vk_store.get(&KpiId(0)), Some(&5));
        let r = pmon_step(&[0.85], &[0.8], 6, &mut s);
        assert_eq!(r.recovered, vec![KpiId(0)]);
        for t in 7..40 {
            assert!(!pmon_step(&[0.85], &[0.8], t, &mut s).trigger);
        }
    }

    #[test]
    fn alarm_without_rcp_is_no_conflict() {
        let s = state();
        let t = crate::rule_engine::tests::micro();
        let out = cdc_classify(&s, &t, &[KpiId(2)], 10, &[0.0; 5], &[0.5; 3], &[0.8; 3]).unwrap();
        assert!(!out.alarm);
        assert_eq!(out.result.label, ConflictLabel::NoConflict);
        assert!(out.note.is_some());
    }

    #[test]
    fn cdc_uses_latest_xapp_change() {
        let mut s = state();
        let t = crate::rule_engine::tests::micro();
        s.log_change(RcpEntry {
            t: 1,
            actor: Actor::XApp(XAppId(1)),
            icp: IcpId(3),
            old: 0.0,
            new: -40.0,
        });
        s.log_change(RcpEntry {
            t: 2,
            actor: Actor::Cms,
            icp: IcpId(1),
            old: 0.0,
            new: 1.0,
        });
        let out = cdc_classify(&s, &t, &[KpiId(2)], 3, &[0.0; 5], &[0.5; 3], &[0.8; 3]).unwrap();
        assert!(out.alarm);
        assert_eq!(out.result.label, ConflictLabel::Direct);
        assert_eq!(out.icp, Some(IcpId(3)));
        assert_eq!(out.xapps, vec![XAppId(1), XAppId(2)]);
    }
}
