//! The stochastic time-series loop.
//!
//! Each step is idle, a benign update or a breach-shaped update. An update
//! picks an ICP from one of three buckets, drifts it, recomputes every KPI
//! the ICP touches through the Gaussian response, records the KPIs that
//! newly fell below their thresholds and labels the row with the rule
//! engine.
//!
//! Drift is stratified: a breach-shaped update draws the new operating point
//! from the breach band of one target KPI (keeping the other touched KPIs
//! healthy when that is reachable); a benign update draws it from the region
//! where every touched KPI stays at or above its threshold. Both draws stay
//! within the `±MAX_DRIFT` window around the current value.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::profile::{sample_threshold, IntensityProfile};
use super::record::{Rcp, SnapshotRecord};
use super::synth::Buckets;
use crate::domain::{validate_tables, ConflictLabel, IcpId, KpiId, SystemModel, XAppId};
use crate::error::{Error, Result};
use crate::rule_engine;

pub const MAX_DRIFT: f64 = 70.0;
pub const NOISE: f64 = 20.0;
pub const DEFAULT_SIGMA: f64 = 50.0;
/// Width of the breach band beyond the threshold radius, as a multiple of σ.
pub const BREACH_BAND: f64 = 0.4;

/// `exp(-(p + xi)^2 / (2 sigma^2))`.
pub fn gaussian_response(p_value: f64, xi: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(response(p_value + xi, sigma))
}

#[inline]
fn response(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp()
}

/// Displacement at which the response equals `tau`.
pub fn breach_radius(tau: f64, sigma: f64) -> f64 {
    sigma * (-2.0 * tau.ln()).sqrt()
}

/// Uniform ICP selection: bucket by profile probabilities, then uniform
/// within the bucket.
pub fn select_icp<R: Rng + ?Sized>(
    buckets: &Buckets,
    profile: &IntensityProfile,
    rng: &mut R,
) -> Option<IcpId> {
    let b = buckets.pick(&profile.bucket_probs, rng.gen::<f64>())?;
    buckets.get(b).choose(rng).copied()
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub t_max: u64,
    pub sigma: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(t_max: u64, sigma: f64, seed: u64) -> Self {
        SimConfig { t_max, sigma, seed }
    }
}

/// Streaming simulator; yields exactly `t_max` records.
pub struct Simulator<'a> {
    model: &'a SystemModel,
    profile: IntensityProfile,
    sigma: f64,
    t_max: u64,
    t: u64,
    rng: ChaCha8Rng,
    buckets: Buckets,
    /// KPIs recomputed when an ICP changes: its groups plus latent couplings.
    affected: Vec<Vec<KpiId>>,
    icp_values: Vec<f64>,
    kpi_values: Vec<f64>,
    sla: Vec<f64>,
    radii: Vec<f64>,
    /// Updates whose drift window could not reach the target region.
    pub saturated_draws: u64,
}

pub fn simulate<'a>(
    model: &'a SystemModel,
    profile: &IntensityProfile,
    config: &SimConfig,
) -> Result<Simulator<'a>> {
    profile.validate()?;
    if config.t_max == 0 {
        return Err(Error::InvalidArgument("t_max must be at least 1".into()));
    }
    if !(config.sigma > 0.0) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let violations = validate_tables(model);
    if let Some(v) = violations.first() {
        return Err(Error::InvalidArgument(format!("invalid model: {v}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sla: Vec<f64> = (0..model.k_count)
        .map(|_| sample_threshold(&mut rng, profile))
        .collect();
    let radii = sla.iter().map(|t| breach_radius(*t, config.sigma)).collect();
    let t = &model.mappings;
    let affected = (0..model.p_count)
        .map(|i| {
            let icp = IcpId::new(i);
            let mut ks = t.kpis_containing(icp);
            if let Some(extra) = model.latent.get(&icp) {
                ks.extend(extra.iter().copied());
            }
            ks.sort_unstable();
            ks.dedup();
            ks
        })
        .collect();
    Ok(Simulator {
        model,
        profile: *profile,
        sigma: config.sigma,
        t_max: config.t_max,
        t: 0,
        rng,
        buckets: Buckets::of(t),
        affected,
        icp_values: vec![0.0; model.p_count],
        kpi_values: vec![1.0; model.k_count],
        sla,
        radii,
        saturated_draws: 0,
    })
}

impl Simulator<'_> {
    pub fn thresholds(&self) -> &[f64] {
        &self.sla
    }

    fn instructors(&self, icp: IcpId) -> Vec<XAppId> {
        let owners = &self.model.mappings.p2x[icp.index()];
        if owners.is_empty() {
            (0..self.model.m).map(XAppId::new).collect()
        } else {
            owners.clone()
        }
    }

    fn healthy(&self, k: KpiId) -> bool {
        self.kpi_values[k.index()] >= self.sla[k.index()]
    }

    /// A violation of `k` is labeled a conflict unless `xi` is its sole manager.
    fn eligible(&self, k: KpiId, xi: XAppId) -> bool {
        let managers = &self.model.mappings.k2x[k.index()];
        !(managers.len() == 1 && managers[0] == xi)
    }

    fn viable(&self, icp: IcpId, xi: XAppId) -> bool {
        self.affected[icp.index()]
            .iter()
            .any(|&k| self.eligible(k, xi) && self.healthy(k))
    }

    fn pick_update(&mut self, breach: bool) -> Option<(IcpId, XAppId)> {
        let b = self
            .buckets
            .pick(&self.profile.bucket_probs, self.rng.gen::<f64>())?;
        let bucket = self.buckets.get(b).to_vec();
        if breach {
            let pairs: Vec<(IcpId, XAppId)> = bucket
                .iter()
                .flat_map(|&c| self.instructors(c).into_iter().map(move |x| (c, x)))
                .filter(|&(c, x)| self.viable(c, x))
                .collect();
            if let Some(&pair) = pairs.choose(&mut self.rng) {
                return Some(pair);
            }
        }
        let icp = *bucket.choose(&mut self.rng)?;
        let xi = *self.instructors(icp).choose(&mut self.rng)?;
        Some((icp, xi))
    }

    fn safe_interval(&self, ks: &[KpiId], noise: &[f64]) -> (f64, f64) {
        ks.iter()
            .zip(noise)
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), (k, xi)| {
                let r = self.radii[k.index()];
                (lo.max(-r - xi), hi.min(r - xi))
            })
    }

    fn draw_point(&mut self, current: f64, segments: &[(f64, f64)]) -> f64 {
        let (wlo, whi) = (current - MAX_DRIFT, current + MAX_DRIFT);
        let reach: Vec<(f64, f64)> = segments
            .iter()
            .map(|&(a, b)| (a.max(wlo), b.min(whi)))
            .filter(|(a, b)| b > a)
            .collect();
        let total: f64 = reach.iter().map(|(a, b)| b - a).sum();
        if total > 0.0 {
            let mut z = self.rng.gen::<f64>() * total;
            for &(a, b) in &reach {
                if z <= b - a {
                    return a + z;
                }
                z -= b - a;
            }
            return reach.last().map(|s| s.1).unwrap_or(current);
        }
        // target region out of drift reach: move to its nearest point
        self.saturated_draws += 1;
        segments
            .iter()
            .map(|&(a, b)| current.clamp(a, b))
            .min_by(|x, y| (x - current).abs().total_cmp(&(y - current).abs()))
            .unwrap_or(current)
    }

    fn update(&mut self, breach: bool) -> Option<(Rcp, Vec<KpiId>)> {
        let (icp, xi) = self.pick_update(breach)?;
        let ks = self.affected[icp.index()].clone();
        let noise: Vec<f64> = ks
            .iter()
            .map(|_| self.rng.gen_range(-NOISE..=NOISE))
            .collect();
        let current = self.icp_values[icp.index()];

        let segments = if ks.is_empty() {
            vec![(f64::NEG_INFINITY, f64::INFINITY)]
        } else if breach {
            self.breach_segments(&ks, &noise, xi, current)
        } else {
            let (lo, hi) = self.safe_interval(&ks, &noise);
            vec![(lo, hi)]
        };
        let x = self.draw_point(current, &segments);
        self.icp_values[icp.index()] = x;

        let mut vk = Vec::new();
        for (k, xi_k) in ks.iter().zip(&noise) {
            let was_healthy = self.healthy(*k);
            let value = response(x + xi_k, self.sigma);
            self.kpi_values[k.index()] = value;
            if was_healthy && value < self.sla[k.index()] {
                vk.push(*k);
            }
        }
        Some((Rcp { xapp: xi, icp }, vk))
    }

    fn breach_segments(&mut self, ks: &[KpiId], noise: &[f64], xi: XAppId, current: f64) -> Vec<(f64, f64)> {
        let pick = |pred: &dyn Fn(KpiId) -> bool| -> Vec<usize> {
            (0..ks.len()).filter(|&i| pred(ks[i])).collect()
        };
        let mut targets = pick(&|k| self.eligible(k, xi) && self.healthy(k));
        if targets.is_empty() {
            targets = pick(&|k| self.healthy(k));
        }
        if targets.is_empty() {
            targets = (0..ks.len()).collect();
        }
        let v = *targets.choose(&mut self.rng).expect("non-empty affected set");
        let r = self.radii[ks[v].index()];
        let band = BREACH_BAND * self.sigma;
        let xi_v = noise[v];
        let mut segments = vec![(r - xi_v, r - xi_v + band), (-r - xi_v - band, -r - xi_v)];

        let others: Vec<KpiId> = ks.iter().enumerate().filter(|(i, _)| *i != v).map(|(_, k)| *k).collect();
        if !others.is_empty() {
            let other_noise: Vec<f64> = (0..ks.len()).filter(|i| *i != v).map(|i| noise[i]).collect();
            let (lo, hi) = self.safe_interval(&others, &other_noise);
            let isolated: Vec<(f64, f64)> = segments
                .iter()
                .map(|&(a, b)| (a.max(lo), b.min(hi)))
                .filter(|(a, b)| b > a)
                .collect();
            let reachable = isolated
                .iter()
                .any(|&(a, b)| b.min(current + MAX_DRIFT) > a.max(current - MAX_DRIFT));
            if reachable {
                segments = isolated;
            }
        }
        segments
    }
}

impl Iterator for Simulator<'_> {
    type Item = SnapshotRecord;

    fn next(&mut self) -> Option<SnapshotRecord> {
        if self.t >= self.t_max {
            return None;
        }
        self.t += 1;
        let u = self.rng.gen::<f64>();
        let step = if u < self.profile.breach_prob {
            self.update(true)
        } else if u < self.profile.update_freq {
            self.update(false)
        } else {
            None
        };
        let (rcp, vk) = match step {
            Some((rcp, vk)) => (Some(rcp), vk),
            None => (None, Vec::new()),
        };
        let label = rule_engine::classify(rcp, &vk, &self.model.mappings)
            .map(|a| a.label)
            .unwrap_or(ConflictLabel::NoConflict);
        Some(SnapshotRecord {
            t: self.t,
            rcp,
            icp_values: self.icp_values.clone(),
            kpi_values: self.kpi_values.clone(),
            sla: self.sla.clone(),
            vk,
            label,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.t_max - self.t) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Simulator<'_> {}

/// Convenience: synthesize nothing, just collect a full run.
pub fn simulate_to_vec(
    model: &SystemModel,
    profile: &IntensityProfile,
    config: &SimConfig,
) -> Result<Vec<SnapshotRecord>> {
    Ok(simulate(model, profile, config)?.collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genc::synth::synthesize_entities;
    use rand::rngs::mock::StepRng;

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_response(-10.0, 10.0, 50.0).unwrap(), 1.0);
        let at_sigma = gaussian_response(30.0, 20.0, 50.0).unwrap();
        assert!((at_sigma - (-0.5f64).exp()).abs() < 1e-15);
        assert!((at_sigma - 0.60653).abs() < 1e-5);
        let v = gaussian_response(30.0, 10.0, 50.0).unwrap();
        assert!((v - 0.726_149_037_073_690_7).abs() < 1e-12, "{v}");
        assert!(gaussian_response(1.0, 0.0, 0.0).is_err());
        assert!(gaussian_response(1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn radius_inverts_response() {
        for tau in [0.6, 0.75, 0.9] {
            let r = breach_radius(tau, 50.0);
            assert!((response(r, 50.0) - tau).abs() < 1e-12);
        }
    }

    #[test]
    fn select_icp_low_draw_hits_shared_bucket() {
        let model = synthesize_entities(6, 0.3, 5).unwrap();
        let buckets = Buckets::of(&model.mappings);
        assert!(!buckets.shared.is_empty());
        // StepRng(0, 0) yields 0.0 for every f64 draw
        let mut rng = StepRng::new(0, 0);
        let icp = select_icp(&buckets, &IntensityProfile::low(), &mut rng).unwrap();
        assert_eq!(model.mappings.p2x[icp.index()].len(), 2);
    }

    #[test]
    fn select_icp_falls_back_without_shared_bucket() {
        let model = synthesize_entities(1, 0.3, 5).unwrap();
        let buckets = Buckets::of(&model.mappings);
        assert!(buckets.shared.is_empty());
        let mut rng = StepRng::new(0, 0);
        let icp = select_icp(&buckets, &IntensityProfile::low(), &mut rng).unwrap();
        assert!(model.mappings.is_unassigned(icp) || buckets.indirect.contains(&icp));
    }

    #[test]
    fn idle_rows_are_no_conflict_and_length_matches() {
        let model = synthesize_entities(5, 0.3, 1).unwrap();
        let recs = simulate_to_vec(&model, &IntensityProfile::low(), &SimConfig::new(100, 50.0, 3)).unwrap();
        assert_eq!(recs.len(), 100);
        assert_eq!(recs[0].t, 1);
        for r in recs.iter().filter(|r| r.is_idle()) {
            assert_eq!(r.label, ConflictLabel::NoConflict);
            assert!(r.vk.is_empty());
        }
    }

    #[test]
    fn vk_holds_only_new_violations() {
        let model = synthesize_entities(5, 0.3, 2).unwrap();
        let recs = simulate_to_vec(&model, &IntensityProfile::high(), &SimConfig::new(20_000, 50.0, 9)).unwrap();
        let mut seen_new = 0;
        for w in recs.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            for k in &cur.vk {
                let j = k.index();
                assert!(cur.kpi_values[j] < cur.sla[j]);
                assert!(prev.kpi_values[j] >= prev.sla[j]);
                seen_new += 1;
            }
            // a KPI that stays below threshold is never reported again
            for j in 0..cur.kpi_values.len() {
                if prev.kpi_values[j] < prev.sla[j] && cur.kpi_values[j] < cur.sla[j] {
                    assert!(!cur.vk.contains(&KpiId::new(j)));
                }
            }
        }
        assert!(seen_new > 0);
    }

    #[test]
    fn kpis_stay_in_unit_interval() {
        let model = synthesize_entities(4, 0.3, 8).unwrap();
        for r in simulate(&model, &IntensityProfile::high(), &SimConfig::new(5_000, 50.0, 1)).unwrap() {
            assert!(r.kpi_values.iter().all(|k| *k > 0.0 && *k <= 1.0));
        }
    }

    #[test]
    fn rejects_zero_steps() {
        let model = synthesize_entities(2, 0.3, 1).unwrap();
        assert!(simulate(&model, &IntensityProfile::low(), &SimConfig::new(0, 50.0, 1)).is_err());
    }
}
