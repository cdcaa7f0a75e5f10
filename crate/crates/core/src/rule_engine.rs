//! Rule-based conflict annotation.
//!
//! A direct transcription of the annotation listing: early exit on an empty
//! RCP or VK, then one verdict per violated KPI. The row label is the most
//! severe per-KPI verdict (Direct > Indirect > Implicit > NoConflict).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{ConflictLabel, IcpId, KpiId, MappingTables, XAppId};
use crate::error::{Error, Result};
use crate::genc::{Rcp, SnapshotRecord};
use crate::par::{self, Exec};

/// Sizes of the sets touched while annotating one row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TouchedSets {
    pub v: usize,
    pub x_k: usize,
    pub x_p: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationResult {
    pub label: ConflictLabel,
    pub per_kpi: Vec<(KpiId, ConflictLabel)>,
    pub touched: TouchedSets,
}

impl AnnotationResult {
    fn no_conflict(v: usize) -> Self {
        AnnotationResult {
            label: ConflictLabel::NoConflict,
            per_kpi: Vec::new(),
            touched: TouchedSets {
                v,
                ..Default::default()
            },
        }
    }
}

pub fn annotate(record: &SnapshotRecord, mappings: &MappingTables) -> Result<AnnotationResult> {
    classify(record.rcp, &record.vk, mappings)
}

/// Alg. 1 on the three fields it reads: the RCP entry and the new violations.
pub fn classify(rcp: Option<Rcp>, vk: &[KpiId], mappings: &MappingTables) -> Result<AnnotationResult> {
    let Some(Rcp { xapp: xi, icp: pc }) = rcp else {
        return Ok(AnnotationResult::no_conflict(vk.len()));
    };
    if vk.is_empty() {
        return Ok(AnnotationResult::no_conflict(0));
    }
    if xi.index() >= mappings.xapps {
        return Err(Error::UnknownXApp(xi));
    }
    let x_p = mappings.owners(pc)?;

    let mut label = ConflictLabel::NoConflict;
    let mut per_kpi = Vec::with_capacity(vk.len());
    let mut touched = TouchedSets {
        v: vk.len(),
        x_k: 0,
        x_p: x_p.len(),
    };
    for &kpi in vk {
        let p_k = mappings.group(kpi)?;
        let x_k = mappings.managers(kpi)?;
        touched.x_k += x_k.len();
        let verdict = kpi_verdict(xi, pc, p_k, x_k, x_p, mappings);
        per_kpi.push((kpi, verdict));
        label = label.worst(verdict);
    }
    Ok(AnnotationResult {
        label,
        per_kpi,
        touched,
    })
}

fn kpi_verdict(
    xi: XAppId,
    pc: IcpId,
    p_k: &[IcpId],
    x_k: &[XAppId],
    x_p: &[XAppId],
    mappings: &MappingTables,
) -> ConflictLabel {
    // sole manager acting on its own KPI
    if x_k.len() == 1 && x_k[0] == xi {
        return ConflictLabel::NoConflict;
    }
    if p_k.binary_search(&pc).is_ok() {
        if sorted_intersects(x_p, x_k) {
            ConflictLabel::Direct
        } else {
            ConflictLabel::Indirect
        }
    } else if mappings.is_unassigned(pc) {
        ConflictLabel::Implicit
    } else {
        ConflictLabel::NoConflict
    }
}

/// Merge-style intersection test over two ascending slices, O(|a| + |b|).
pub fn sorted_intersects<T: Ord>(a: &[T], b: &[T]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConflictStats {
    pub rows: usize,
    /// Indexed by [`ConflictLabel::index`].
    pub counts: [usize; 4],
    pub conflict_ratio: f64,
    pub total_ns: u128,
    pub mean_ns: f64,
}

impl ConflictStats {
    pub fn from_labels(labels: &[ConflictLabel]) -> Self {
        let mut counts = [0usize; 4];
        for l in labels {
            counts[l.index()] += 1;
        }
        let rows = labels.len();
        let conflicts = rows - counts[0];
        ConflictStats {
            rows,
            counts,
            conflict_ratio: if rows == 0 {
                0.0
            } else {
                conflicts as f64 / rows as f64
            },
            total_ns: 0,
            mean_ns: 0.0,
        }
    }

    pub fn count(&self, label: ConflictLabel) -> usize {
        self.counts[label.index()]
    }

    pub fn conflicts(&self) -> usize {
        self.rows - self.counts[0]
    }
}

pub fn annotate_dataset(
    records: &[SnapshotRecord],
    mappings: &MappingTables,
) -> Result<(Vec<ConflictLabel>, ConflictStats)> {
    annotate_dataset_with(Exec::Parallel, records, mappings)
}

pub fn annotate_dataset_with(
    exec: Exec,
    records: &[SnapshotRecord],
    mappings: &MappingTables,
) -> Result<(Vec<ConflictLabel>, ConflictStats)> {
    let start = Instant::now();
    let results = par::map(exec, records, |i, r| {
        annotate(r, mappings).map(|a| a.label).map_err(|e| e.at_row(i))
    });
    let elapsed = start.elapsed().as_nanos();
    let labels = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut stats = ConflictStats::from_labels(&labels);
    stats.total_ns = elapsed;
    stats.mean_ns = if labels.is_empty() {
        0.0
    } else {
        elapsed as f64 / labels.len() as f64
    };
    Ok((labels, stats))
}
