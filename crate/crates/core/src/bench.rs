//! Latency measurement helpers and synthetic stress workloads.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::{icp_count_for, kpi_count_for, ConflictLabel, IcpId, KpiId, MappingTables, XAppId};
use crate::genc::{Rcp, SnapshotRecord};
use crate::rule_engine::annotate;

/// Target wall-clock length of one trial.
pub const TRIAL_TARGET: Duration = Duration::from_millis(20);
pub const MIN_TRIALS: usize = 5;

/// Per-item timing over repeated trials.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub trials: usize,
    pub calls_per_trial: usize,
    pub items_per_call: usize,
    pub mean_ns: f64,
    pub se_ns: f64,
    pub median_ns: f64,
    pub per_trial_ns: Vec<f64>,
}

impl Timing {
    fn from_trials(per_trial_ns: Vec<f64>, calls_per_trial: usize, items_per_call: usize) -> Self {
        let n = per_trial_ns.len();
        let mean = per_trial_ns.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            per_trial_ns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let mut sorted = per_trial_ns.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Timing {
            trials: n,
            calls_per_trial,
            items_per_call,
            mean_ns: mean,
            se_ns: (var / n as f64).sqrt(),
            median_ns: median,
            per_trial_ns,
        }
    }
}

/// Times `f`, which processes `items_per_call` items per invocation and is
/// passed a running call counter. After `warmup_calls` untimed calls, each of
/// `trials` (at least [`MIN_TRIALS`]) trials runs enough calls to last about
/// [`TRIAL_TARGET`].
pub fn time_per_item(
    items_per_call: usize,
    warmup_calls: usize,
    trials: usize,
    mut f: impl FnMut(usize),
) -> Timing {
    let items = items_per_call.max(1);
    let mut call = 0usize;
    for _ in 0..warmup_calls {
        f(call);
        call += 1;
    }
    let probe = Instant::now();
    f(call);
    call += 1;
    let one = probe.elapsed().max(Duration::from_nanos(1));
    let calls = ((TRIAL_TARGET.as_nanos() / one.as_nanos()) as usize).clamp(1, 1_000_000);
    let trials = trials.max(MIN_TRIALS);
    let per_trial = (0..trials)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..calls {
                f(call);
                call += 1;
            }
            start.elapsed().as_nanos() as f64 / (calls * items) as f64
        })
        .collect();
    Timing::from_trials(per_trial, calls, items)
}

/// Per-row rule-engine time over `records`, measured around `annotate` only.
pub fn rule_engine_latency(records: &[SnapshotRecord], mappings: &MappingTables) -> Timing {
    let n = records.len().max(1);
    let batch = records.len().clamp(1, 256);
    let mut sink = 0usize;
    let t = time_per_item(batch, 10, MIN_TRIALS, |call| {
        let start = (call * batch) % n;
        for k in 0..batch {
            if let Some(r) = records.get((start + k) % n) {
                if let Ok(a) = annotate(r, mappings) {
                    sink = sink.wrapping_add(a.label.index());
                }
            }
        }
    });
    std::hint::black_box(sink);
    t
}

/// Mapping tables sized for `m` xApps in which every ICP is owned by the
/// first half of the xApps, every KPI is managed by the other half and every
/// group holds every owned ICP. Owner and manager sets are disjoint, so each
/// intersection test scans both sets in full. The last ICP is unassigned.
///
/// These tables deliberately break the 1-2 owner/manager rule.
pub fn stress_tables(m: usize) -> MappingTables {
    let m = m.max(2);
    let p = icp_count_for(m);
    let k = kpi_count_for(m);
    let half = m.div_ceil(2);
    let owners: Vec<XAppId> = (0..half).map(XAppId::new).collect();
    let managers: Vec<XAppId> = (half..m).map(XAppId::new).collect();
    let mut p2x = vec![owners; p];
    p2x[p - 1].clear();
    let group: Vec<IcpId> = (0..p - 1).map(IcpId::new).collect();
    let mut t = MappingTables {
        xapps: m,
        p2x,
        p2k: vec![group; k],
        k2x: vec![managers; k],
        unassigned: vec![IcpId::new(p - 1)],
    };
    t.normalize();
    t
}

/// Stress rows: the first owner changes ICP 0 and `v` KPIs (all by default)
/// are newly violated.
pub fn stress_records(tables: &MappingTables, rows: usize, v: Option<usize>) -> Vec<SnapshotRecord> {
    let k = tables.kpi_count();
    let v = v.unwrap_or(k).min(k);
    let vk: Vec<KpiId> = (0..v).map(KpiId::new).collect();
    (0..rows)
        .map(|t| SnapshotRecord {
            t: t as u64 + 1,
            rcp: Some(Rcp {
                xapp: XAppId(0),
                icp: IcpId(0),
            }),
            icp_values: vec![0.0; tables.icp_count()],
            kpi_values: vec![0.5; k],
            sla: vec![0.8; k],
            vk: vk.clone(),
            label: ConflictLabel::Indirect,
        })
        .collect()
}

/// Stress rows with `v` violated KPIs over tables with exactly `v` KPIs and
/// fixed set sizes, for checking linear growth in |V|.
pub fn stress_tables_with_kpis(xapps: usize, kpis: usize) -> MappingTables {
    let mut t = stress_tables(xapps);
    let group = t.p2k[0].clone();
    let managers = t.k2x[0].clone();
    t.p2k = vec![group; kpis];
    t.k2x = vec![managers; kpis];
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule_engine::annotate;

    #[test]
    fn timing_statistics() {
        let t = Timing::from_trials(vec![4.0, 1.0, 3.0, 2.0, 5.0], 10, 2);
        assert_eq!(t.median_ns, 3.0);
        assert_eq!(t.mean_ns, 3.0);
        assert!((t.se_ns - (2.5f64 / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn harness_runs_at_least_five_trials() {
        let mut calls = 0;
        let t = time_per_item(4, 3, 1, |_| calls += 1);
        assert_eq!(t.trials, MIN_TRIALS);
        assert!(calls >= 3 + 1 + MIN_TRIALS);
        assert!(t.mean_ns >= 0.0);
    }

    #[test]
    fn stress_rows_touch_inflated_sets() {
        for m in [5, 10, 50] {
            let t = stress_tables(m);
            let rows = stress_records(&t, 3, None);
            let a = annotate(&rows[0], &t).unwrap();
            assert_eq!(a.label, ConflictLabel::Indirect);
            assert_eq!(a.touched.v, kpi_count_for(m));
            assert_eq!(a.touched.x_p, m.div_ceil(2));
            assert_eq!(a.touched.x_k, kpi_count_for(m) * (m - m.div_ceil(2)));
        }
    }
}
