use serde::{Deserialize, Serialize};

use crate::domain::{IcpId, KpiId};
use crate::error::{Error, Result};
use crate::genc::gaussian_response;

/// KPI response to its driving ICP: `k = exp(-(p - center)^2 / (2 sigma^2))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub sigma: f64,
    /// Per KPI: the driving ICP.
    pub drivers: Vec<IcpId>,
    /// Per KPI: the driver value at which the KPI peaks.
    pub centers: Vec<f64>,
}

impl Surrogate {
    pub fn kpi(&self, k: KpiId, icp_values: &[f64]) -> Result<f64> {
        let d = self.drivers.get(k.index()).ok_or(Error::UnknownKpi(k))?;
        let p = icp_values.get(d.index()).ok_or(Error::UnknownIcp(*d))?;
        gaussian_response(*p, -self.centers[k.index()], self.sigma)
    }

    pub fn kpis(&self, icp_values: &[f64]) -> Result<Vec<f64>> {
        (0..self.drivers.len())
            .map(|k| self.kpi(KpiId::new(k), icp_values))
            .collect()
    }

    /// KPIs whose response depends on `icp`.
    pub fn affected_by(&self, icp: IcpId) -> Vec<KpiId> {
        self.drivers
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == icp)
            .map(|(k, _)| KpiId::new(k))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mitigation {
    pub icp: IcpId,
    pub old: f64,
    pub new: f64,
    pub kpis: Vec<KpiId>,
    pub margins_before: Vec<f64>,
    pub margins_after: Vec<f64>,
    /// False when no point gives every affected KPI a positive margin.
    pub feasible: bool,
}

impl Mitigation {
    pub fn min_before(&self) -> f64 {
        self.margins_before.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn min_after(&self) -> f64 {
        self.margins_after.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

pub const GRID_POINTS: usize = 1001;
const GOLDEN_TOL: f64 = 1e-9;

/// Maximizes `f` over `[lo, hi]`: a uniform grid, then golden-section
/// refinement inside the bracket around the best grid point.
pub fn grid_golden_max(lo: f64, hi: f64, points: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let points = points.max(3);
    let step = (hi - lo) / (points - 1) as f64;
    let at = |i: usize| lo + step * i as f64;
    let (mut best_i, mut best_v) = (0, f64::NEG_INFINITY);
    for i in 0..points {
        let v = f(at(i));
        if v > best_v {
            best_i = i;
            best_v = v;
        }
    }
    let (mut a, mut b) = (at(best_i.saturating_sub(1)), at((best_i + 1).min(points - 1)));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let v = f(x);
    if v >= best_v {
        (x, v)
    } else {
        (at(best_i), best_v)
    }
}

/// Compromise point for `icp`: the value in `[-3 sigma, 3 sigma]` that
/// maximizes the smallest SLA margin `k_j(p) - tau_j` over `kpis`. The
/// current value is kept if nothing beats it.
pub fn cmc_mitigate(
    icp: IcpId,
    kpis: &[KpiId],
    icp_values: &[f64],
    sla: &[f64],
    surrogate: &Surrogate,
) -> Result<Mitigation> {
    if kpis.is_empty() {
        return Err(Error::InvalidArgument(format!("no KPIs respond to {icp}")));
    }
    let old = *icp_values.get(icp.index()).ok_or(Error::UnknownIcp(icp))?;
    let mut probe = icp_values.to_vec();
    let margins = |values: &[f64]| -> Result<Vec<f64>> {
        kpis.iter()
            .map(|k| Ok(surrogate.kpi(*k, values)? - sla[k.index()]))
            .collect()
    };
    let before = margins(icp_values)?;
    let min_before = before.iter().cloned().fold(f64::INFINITY, f64::min);

    let s = surrogate.sigma;
    let objective = |p: f64| -> f64 {
        kpis.iter()
            .map(|k| {
                let c = surrogate.centers[k.index()];
                (-(p - c).powi(2) / (2.0 * s * s)).exp() - sla[k.index()]
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (mut best, mut best_v) = grid_golden_max(-3.0 * s, 3.0 * s, GRID_POINTS, objective);
    if min_before >= best_v {
        best = old;
        best_v = min_before;
    }
    probe[icp.index()] = best;
    let after = margins(&probe)?;
    Ok(Mitigation {
        icp,
        old,
        new: best,
        kpis: kpis.to_vec(),
        margins_before: before,
        margins_after: after,
        feasible: best_v > 0.0,
    })
}
