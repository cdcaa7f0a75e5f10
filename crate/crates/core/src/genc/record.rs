use serde::{Deserialize, Serialize};

use crate::domain::{ConflictLabel, IcpId, KpiId, XAppId};

/// Recently changed parameter: which xApp changed which ICP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rcp {
    pub xapp: XAppId,
    pub icp: IcpId,
}

/// One simulated time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub t: u64,
    pub rcp: Option<Rcp>,
    pub icp_values: Vec<f64>,
    pub kpi_values: Vec<f64>,
    pub sla: Vec<f64>,
    /// KPIs that crossed below their threshold at this step, ascending.
    pub vk: Vec<KpiId>,
    pub label: ConflictLabel,
}

impl SnapshotRecord {
    pub fn rcp_xapp(&self) -> Option<XAppId> {
        self.rcp.map(|r| r.xapp)
    }

    pub fn rcp_icp(&self) -> Option<IcpId> {
        self.rcp.map(|r| r.icp)
    }

    pub fn is_idle(&self) -> bool {
        self.rcp.is_none()
    }
}
