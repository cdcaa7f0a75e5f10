use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cells::Cell;
use super::mitigate::{cmc_mitigate, Surrogate};
use super::monitor::{cdc_classify, pmon_step, Actor, Classifier, CmsState, RcpEntry};
use crate::domain::{validate_tables, ConflictLabel, IcpId, KpiId, MappingTables, SystemModel, XAppId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpSpec {
    pub name: String,
    #[serde(default)]
    pub initial: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XAppSpec {
    pub name: String,
    pub owns: Vec<String>,
    pub manages: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiSpec {
    pub name: String,
    pub driver: String,
    #[serde(default)]
    pub center: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub t: u64,
    pub xapp: String,
    pub icp: String,
    pub value: f64,
}

fn default_persistence() -> u64 {
    CmsState::DEFAULT_PERSISTENCE
}

fn one() -> u64 {
    1
}

fn default_deadline() -> f64 {
    1000.0
}

/// Scenario file contents (TOML or JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration: u64,
    pub sigma: f64,
    #[serde(default = "default_persistence")]
    pub persistence: u64,
    #[serde(default = "one")]
    pub control_interval: u64,
    /// Classification budget per trigger; exceeding it logs a timeout.
    #[serde(default = "default_deadline")]
    pub deadline_ms: f64,
    /// Uniform additive KPI measurement noise amplitude.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ue_count: Option<u32>,
    pub icps: Vec<IcpSpec>,
    pub xapps: Vec<XAppSpec>,
    pub kpis: Vec<KpiSpec>,
    #[serde(default)]
    pub actions: Vec<ActionSpec>,
}

impl ScenarioConfig {
    /// Energy Saving and Mobility Robustness Optimization sharing TXP.
    pub fn es_mro() -> Self {
        let icp = |n: &str| IcpSpec {
            name: n.into(),
            initial: 0.0,
        };
        let kpi = |n: &str, d: &str, c: f64| KpiSpec {
            name: n.into(),
            driver: d.into(),
            center: c,
            threshold: 0.8,
        };
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        ScenarioConfig {
            name: "es-mro".into(),
            duration: 540,
            sigma: 50.0,
            persistence: 10,
            control_interval: 1,
            deadline_ms: default_deadline(),
            noise: 0.0,
            seed: 1,
            ue_count: Some(117),
            icps: ["TXP", "TTT", "CIO", "NL", "HYS", "RET"].iter().map(|n| icp(n)).collect(),
            xapps: vec![
                XAppSpec {
                    name: "ES".into(),
                    owns: names(&["TXP"]),
                    manages: names(&["EnergyEfficiency", "PowerConsumption"]),
                },
                XAppSpec {
                    name: "MRO".into(),
                    owns: names(&["TXP", "TTT", "CIO", "NL", "HYS"]),
                    manages: names(&["Throughput", "HandoverRate", "CallDropRate", "HandoverFailureRate"]),
                },
            ],
            kpis: vec![
                kpi("EnergyEfficiency", "TXP", -20.0),
                kpi("PowerConsumption", "TXP", -20.0),
                kpi("Throughput", "TXP", 20.0),
                kpi("HandoverRate", "TTT", 0.0),
                kpi("CallDropRate", "CIO", 0.0),
                kpi("HandoverFailureRate", "HYS", 0.0),
            ],
            actions: vec![ActionSpec {
                t: 100,
                xapp: "ES".into(),
                icp: "TXP".into(),
                value: -40.0,
            }],
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAction {
    pub t: u64,
    pub xapp: XAppId,
    pub icp: IcpId,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub model: SystemModel,
    pub xapp_names: Vec<String>,
    pub icp_names: Vec<String>,
    pub kpi_names: Vec<String>,
    pub surrogate: Surrogate,
    pub thresholds: Vec<f64>,
    pub initial: Vec<f64>,
    pub actions: Vec<ScriptedAction>,
    pub duration: u64,
    pub persistence: u64,
    pub control_interval: u64,
    pub deadline: Duration,
    pub noise: f64,
    pub seed: u64,
    pub ue_count: Option<u32>,
    pub topology: Vec<Cell>,
    pub config: ScenarioConfig,
}

fn lookup(names: &[String], name: &str, what: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown {what} {name:?}")))
}

impl Scenario {
    pub fn es_mro() -> Self {
        Scenario::from_config(ScenarioConfig::es_mro()).expect("built-in preset is valid")
    }

    pub fn from_config(cfg: ScenarioConfig) -> Result<Self> {
        if !(cfg.sigma > 0.0) {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        if cfg.control_interval == 0 {
            return Err(Error::InvalidArgument("control_interval must be positive".into()));
        }
        let icp_names: Vec<String> = cfg.icps.iter().map(|i| i.name.clone()).collect();
        let kpi_names: Vec<String> = cfg.kpis.iter().map(|k| k.name.clone()).collect();
        let xapp_names: Vec<String> = cfg.xapps.iter().map(|x| x.name.clone()).collect();
        let (p, k, m) = (icp_names.len(), kpi_names.len(), xapp_names.len());

        let mut p2x: Vec<Vec<XAppId>> = vec![Vec::new(); p];
        let mut k2x: Vec<Vec<XAppId>> = vec![Vec::new(); k];
        let mut owned: Vec<BTreeSet<IcpId>> = vec![BTreeSet::new(); m];
        for (xi, x) in cfg.xapps.iter().enumerate() {
            for name in &x.owns {
                let i = lookup(&icp_names, name, "ICP")?;
                p2x[i].push(XAppId::new(xi));
                owned[xi].insert(IcpId::new(i));
            }
            for name in &x.manages {
                k2x[lookup(&kpi_names, name, "KPI")?].push(XAppId::new(xi));
            }
        }
        let p2k = k2x
            .iter()
            .map(|managers| {
                managers
                    .iter()
                    .flat_map(|x| owned[x.index()].iter().copied())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect()
            })
            .collect();
        let unassigned = (0..p)
            .filter(|&i| p2x[i].is_empty())
            .map(IcpId::new)
            .collect();
        let mut mappings = MappingTables {
            xapps: m,
            p2x,
            p2k,
            k2x,
            unassigned,
        };
        mappings.normalize();
        let first_owned = |x: usize| -> IcpId {
            owned[x]
                .iter()
                .copied()
                .find(|i| mappings.p2x[i.index()].len() == 1)
                .or_else(|| owned[x].iter().next().copied())
                .unwrap_or(IcpId(0))
        };
        let exclusive_icp = (0..m).map(first_owned).collect();
        let exclusive_kpi = (0..m)
            .map(|x| {
                (0..k)
                    .find(|&j| mappings.k2x[j].contains(&XAppId::new(x)))
                    .map(KpiId::new)
                    .unwrap_or(KpiId(0))
            })
            .collect();
        let model = SystemModel {
            m,
            p_count: p,
            k_count: k,
            mappings,
            exclusive_icp,
            exclusive_kpi,
            latent: BTreeMap::new(),
        };
        if let Some(v) = validate_tables(&model).first() {
            return Err(Error::InvalidArgument(format!("scenario mappings: {v}")));
        }

        let drivers = cfg
            .kpis
            .iter()
            .map(|kpi| lookup(&icp_names, &kpi.driver, "ICP").map(IcpId::new))
            .collect::<Result<Vec<_>>>()?;
        let actions = cfg
            .actions
            .iter()
            .map(|a| {
                Ok(ScriptedAction {
                    t: a.t,
                    xapp: XAppId::new(lookup(&xapp_names, &a.xapp, "xApp")?),
                    icp: IcpId::new(lookup(&icp_names, &a.icp, "ICP")?),
                    value: a.value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for a in &actions {
            if !model.mappings.p2x[a.icp.index()].contains(&a.xapp) {
                log::warn!(
                    "{} changes {} which it does not own",
                    xapp_names[a.xapp.index()],
                    icp_names[a.icp.index()]
                );
            }
        }
        Ok(Scenario {
            name: cfg.name.clone(),
            model,
            surrogate: Surrogate {
                sigma: cfg.sigma,
                drivers,
                centers: cfg.kpis.iter().map(|k| k.center).collect(),
            },
            thresholds: cfg.kpis.iter().map(|k| k.threshold).collect(),
            initial: cfg.icps.iter().map(|i| i.initial).collect(),
            actions,
            duration: cfg.duration,
            persistence: cfg.persistence,
            control_interval: cfg.control_interval,
            deadline: Duration::from_secs_f64(cfg.deadline_ms.max(0.0) / 1e3),
            noise: cfg.noise,
            seed: cfg.seed,
            ue_count: cfg.ue_count,
            topology: Vec::new(),
            xapp_names,
            icp_names,
            kpi_names,
            config: cfg,
        })
    }

    pub fn kpi_id(&self, name: &str) -> Result<KpiId> {
        lookup(&self.kpi_names, name, "KPI").map(KpiId::new)
    }

    pub fn icp_id(&self, name: &str) -> Result<IcpId> {
        lookup(&self.icp_names, name, "ICP").map(IcpId::new)
    }

    fn actor_name(&self, a: Actor) -> String {
        match a {
            Actor::XApp(x) => self.xapp_names[x.index()].clone(),
            Actor::Cms => "CMS".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Action {
        actor: String,
        icp: String,
        old: f64,
        new: f64,
    },
    Violation {
        kpi: String,
        value: f64,
        threshold: f64,
    },
    Recovery {
        kpi: String,
        value: f64,
    },
    Trigger {
        kpis: Vec<String>,
        since: Vec<u64>,
    },
    Classification {
        trigger_seq: u64,
        alarm: bool,
        label: ConflictLabel,
        classifier: String,
        xapps: Vec<String>,
        icp: Option<String>,
        kpis: Vec<String>,
        note: Option<String>,
        elapsed_us: f64,
    },
    Mitigation {
        classification_seq: u64,
        icp: String,
        old: f64,
        new: f64,
        kpis: Vec<String>,
        margins_before: Vec<f64>,
        margins_after: Vec<f64>,
        feasible: bool,
    },
    Timeout {
        elapsed_us: f64,
        deadline_us: f64,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Action { .. } => "action",
            EventKind::Violation { .. } => "violation",
            EventKind::Recovery { .. } => "recovery",
            EventKind::Trigger { .. } => "trigger",
            EventKind::Classification { .. } => "classification",
            EventKind::Mitigation { .. } => "mitigation",
            EventKind::Timeout { .. } => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub t: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub icp_values: Vec<f64>,
    pub kpi_values: Vec<f64>,
    pub events: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ControlRun {
    pub events: Vec<Event>,
    pub trace: Vec<TraceRow>,
    pub rcp_log: Vec<RcpEntry>,
}

impl ControlRun {
    pub fn of_kind<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.kind.name() == name)
    }

    pub fn write_events_jsonl(&self, mut w: impl Write) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_trace_csv(&self, scenario: &Scenario, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(scenario.icp_names.iter().cloned());
        header.extend(scenario.kpi_names.iter().cloned());
        header.extend(scenario.kpi_names.iter().map(|k| format!("tau_{k}")));
        header.push("events".into());
        out.write_record(&header)?;
        for row in &self.trace {
            let mut rec = vec![row.t.to_string()];
            rec.extend(row.icp_values.iter().map(|v| v.to_string()));
            rec.extend(row.kpi_values.iter().map(|v| v.to_string()));
            rec.extend(scenario.thresholds.iter().map(|v| v.to_string()));
            rec.push(row.events.join(";"));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Log {
    events: Vec<Event>,
}

impl Log {
    fn push(&mut self, t: u64, kind: EventKind) -> u64 {
        let seq = self.events.len() as u64;
        self.events.push(Event { seq, t, kind });
        seq
    }
}

/// Runs the monitor, detect, classify and mitigate cycle for `steps` control
/// intervals, applying `actions` at their scheduled times.
pub fn run_control_loop(
    scenario: &Scenario,
    actions: &[ScriptedAction],
    steps: u64,
    classifier: Classifier,
) -> Result<ControlRun> {
    let mut state = CmsState::new(classifier);
    state.persistence_required = scenario.persistence;
    state.control_interval = scenario.control_interval;
    let classifier_name = state.classifier.name();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut icp = scenario.initial.clone();
    let sla = &scenario.thresholds;
    let mut log = Log { events: Vec::new() };
    let mut trace = Vec::with_capacity(steps as usize);
    let names = |ks: &[KpiId]| -> Vec<String> {
        ks.iter().map(|k| scenario.kpi_names[k.index()].clone()).collect()
    };

    for step in 0..steps {
        let t = step * scenario.control_interval;
        let first_event = log.events.len();
        for a in actions.iter().filter(|a| a.t == t) {
            let old = icp[a.icp.index()];
            icp[a.icp.index()] = a.value;
            state.log_change(RcpEntry {
                t,
                actor: Actor::XApp(a.xapp),
                icp: a.icp,
                old,
                new: a.value,
            });
            log.push(
                t,
                EventKind::Action {
                    actor: scenario.actor_name(Actor::XApp(a.xapp)),
                    icp: scenario.icp_names[a.icp.index()].clone(),
                    old,
                    new: a.value,
                },
            );
        }

        let mut kpis = scenario.surrogate.kpis(&icp)?;
        if scenario.noise > 0.0 {
            for k in &mut kpis {
                *k = (*k + rng.gen_range(-scenario.noise..scenario.noise)).clamp(f64::MIN_POSITIVE, 1.0);
            }
        }
        let report = pmon_step(&kpis, sla, t, &mut state);
        for k in &report.new_violations {
            log.push(
                t,
                EventKind::Violation {
                    kpi: scenario.kpi_names[k.index()].clone(),
                    value: kpis[k.index()],
                    threshold: sla[k.index()],
                },
            );
        }
        for k in &report.recovered {
            log.push(
                t,
                EventKind::Recovery {
                    kpi: scenario.kpi_names[k.index()].clone(),
                    value: kpis[k.index()],
                },
            );
        }

        if report.trigger {
            let persistent: Vec<KpiId> = state
                .vk_store
                .iter()
                .filter(|(_, &start)| t - start >= state.persistence_required)
                .map(|(k, _)| *k)
                .collect();
            let trigger_seq = log.push(
                t,
                EventKind::Trigger {
                    kpis: names(&persistent),
                    since: persistent.iter().map(|k| state.vk_store[k]).collect(),
                },
            );
            let started = Instant::now();
            let cdc = cdc_classify(&state, &scenario.model.mappings, &persistent, t, &icp, &kpis, sla)?;
            let elapsed = started.elapsed();
            if elapsed > scenario.deadline {
                log.push(
                    t,
                    EventKind::Timeout {
                        elapsed_us: elapsed.as_secs_f64() * 1e6,
                        deadline_us: scenario.deadline.as_secs_f64() * 1e6,
                    },
                );
            }
            let classification_seq = log.push(
                t,
                EventKind::Classification {
                    trigger_seq,
                    alarm: cdc.alarm,
                    label: cdc.result.label,
                    classifier: classifier_name.clone(),
                    xapps: cdc.xapps.iter().map(|x| scenario.xapp_names[x.index()].clone()).collect(),
                    icp: cdc.icp.map(|p| scenario.icp_names[p.index()].clone()),
                    kpis: names(&persistent),
                    note: cdc.note.clone(),
                    elapsed_us: elapsed.as_secs_f64() * 1e6,
                },
            );
            if let (true, Some(target)) = (cdc.result.label.is_conflict(), cdc.icp) {
                let affected = scenario.surrogate.affected_by(target);
                if affected.is_empty() {
                    log::warn!("no surrogate KPI responds to {}", scenario.icp_names[target.index()]);
                } else {
                    let m = cmc_mitigate(target, &affected, &icp, sla, &scenario.surrogate)?;
                    icp[target.index()] = m.new;
                    state.log_change(RcpEntry {
                        t,
                        actor: Actor::Cms,
                        icp: target,
                        old: m.old,
                        new: m.new,
                    });
                    log.push(
                        t,
                        EventKind::Mitigation {
                            classification_seq,
                            icp: scenario.icp_names[target.index()].clone(),
                            old: m.old,
                            new: m.new,
                            kpis: names(&m.kpis),
                            margins_before: m.margins_before.clone(),
                            margins_after: m.margins_after.clone(),
                            feasible: m.feasible,
                        },
                    );
                }
            }
        }
        trace.push(TraceRow {
            t,
            icp_values: icp.clone(),
            kpi_values: kpis,
            events: log.events[first_event..]
                .iter()
                .map(|e| e.kind.name().to_string())
                .collect(),
        });
    }
    Ok(ControlRun {
        events: log.events,
        trace,
        rcp_log: state.rcp_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_shape() {
        let s = Scenario::es_mro();
        let txp = s.icp_id("TXP").unwrap();
        assert_eq!(s.model.mappings.p2x[txp.index()], vec![XAppId(0), XAppId(1)]);
        assert_eq!((s.model.p_count, s.model.k_count), (6, 6));
        assert_eq!(s.model.mappings.unassigned, vec![s.icp_id("RET").unwrap()]);
        assert_eq!(s.duration, 540);
        let thr = s.kpi_id("Throughput").unwrap();
        assert!(s.model.mappings.p2k[thr.index()].contains(&txp));
    }

    #[test]
    fn quiet_run_has_no_triggers() {
        let s = Scenario::es_mro();
        let run = run_control_loop(&s, &[], s.duration, Classifier::RuleEngine).unwrap();
        assert_eq!(run.events.len(), 0);
        assert_eq!(run.trace.len(), 540);
    }

    #[test]
    fn scripted_txp_cut_is_direct_and_recovers() {
        let s = Scenario::es_mro();
        let run = run_control_loop(&s, &s.actions, s.duration, Classifier::RuleEngine).unwrap();
        let trig: Vec<_> = run.of_kind("trigger").collect();
        assert_eq!(trig.len(), 1);
        assert_eq!(trig[0].t, 110);
        let cls = run.of_kind("classification").next().unwrap();
        match &cls.kind {
            EventKind::Classification { label, trigger_seq, .. } => {
                assert_eq!(*label, ConflictLabel::Direct);
                assert_eq!(*trigger_seq, trig[0].seq);
            }
            _ => unreachable!(),
        }
        let mit = run.of_kind("mitigation").next().unwrap();
        assert!(run.rcp_log.iter().any(|e| e.actor == Actor::Cms && e.t == mit.t));
        let row = &run.trace[115];
        for (v, tau) in row.kpi_values.iter().zip(&s.thresholds) {
            assert!(v >= tau);
        }
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = ScenarioConfig::es_mro();
        let back = ScenarioConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_names_are_rejected() {
        let mut cfg = ScenarioConfig::es_mro();
        cfg.actions[0].icp = "XYZ".into();
        assert!(Scenario::from_config(cfg).is_err());
    }

    #[test]
    fn zero_deadline_logs_timeout() {
        let mut cfg = ScenarioConfig::es_mro();
        cfg.deadline_ms = 0.0;
        let s = Scenario::from_config(cfg).unwrap();
        let run = run_control_loop(&s, &s.actions, 200, Classifier::RuleEngine).unwrap();
        assert_eq!(run.of_kind("timeout").count(), 1);
    }
}
