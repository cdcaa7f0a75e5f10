//! Entity synthesis: ICP/KPI enumeration, exclusive seeding, controlled
//! sharing, KPI-parameter groups, indirect-coupling injection and the
//! unassigned parameter.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    icp_count_for, kpi_count_for, IcpId, KpiId, MappingTables, SystemModel, XAppId,
};
use crate::error::{Error, Result};

/// Number of KPIs each unassigned ICP is latently coupled to.
pub const LATENT_FANOUT: usize = 2;

pub fn synthesize_entities(m: usize, share_prob: f64, seed: u64) -> Result<SystemModel> {
    if m == 0 {
        return Err(Error::InvalidArgument("at least one xApp is required".into()));
    }
    if !(0.0..1.0).contains(&share_prob) {
        return Err(Error::InvalidArgument(format!(
            "share_prob must lie in [0,1), got {share_prob}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_count = icp_count_for(m);
    let k_count = kpi_count_for(m);

    let draw_owners = |rng: &mut ChaCha8Rng| -> Vec<XAppId> {
        if m >= 2 && rng.gen::<f64>() < share_prob {
            let mut pair: Vec<XAppId> = (0..m)
                .choose_multiple(rng, 2)
                .into_iter()
                .map(XAppId::new)
                .collect();
            pair.sort_unstable();
            pair
        } else {
            vec![XAppId::new(rng.gen_range(0..m))]
        }
    };

    // exclusive seeding: xApp i gets ICP i and KPI i
    let mut p2x: Vec<Vec<XAppId>> = (0..p_count).map(|_| Vec::new()).collect();
    for (i, owners) in p2x.iter_mut().enumerate().take(m) {
        owners.push(XAppId::new(i));
    }
    // the last ICP stays unassigned; the rest are drawn with controlled sharing
    let unassigned = vec![IcpId::new(p_count - 1)];
    for owners in p2x.iter_mut().take(p_count - 1).skip(m) {
        *owners = draw_owners(&mut rng);
    }
    let mut k2x: Vec<Vec<XAppId>> = (0..k_count).map(|_| Vec::new()).collect();
    for (k, managers) in k2x.iter_mut().enumerate() {
        *managers = if k < m {
            vec![XAppId::new(k)]
        } else {
            draw_owners(&mut rng)
        };
    }

    let icps_of: Vec<BTreeSet<IcpId>> = (0..m)
        .map(|x| {
            p2x.iter()
                .enumerate()
                .filter(|(_, o)| o.contains(&XAppId::new(x)))
                .map(|(i, _)| IcpId::new(i))
                .collect()
        })
        .collect();

    let mut p2k = Vec::with_capacity(k_count);
    for managers in &k2x {
        let mut group: BTreeSet<IcpId> = managers
            .iter()
            .flat_map(|x| icps_of[x.index()].iter().copied())
            .collect();
        // one parameter of a different xApp, not already coupled
        let foreign: Vec<IcpId> = p2x
            .iter()
            .enumerate()
            .filter(|(i, owners)| {
                !owners.is_empty()
                    && !group.contains(&IcpId::new(*i))
                    && owners.iter().all(|o| !managers.contains(o))
            })
            .map(|(i, _)| IcpId::new(i))
            .collect();
        if let Some(&extra) = foreign.choose(&mut rng) {
            group.insert(extra);
        }
        p2k.push(group.into_iter().collect::<Vec<_>>());
    }

    let mut latent = BTreeMap::new();
    for &u in &unassigned {
        let mut ks: Vec<KpiId> = (0..k_count)
            .choose_multiple(&mut rng, LATENT_FANOUT.min(k_count))
            .into_iter()
            .map(KpiId::new)
            .collect();
        ks.sort_unstable();
        latent.insert(u, ks);
    }

    let mut mappings = MappingTables {
        xapps: m,
        p2x,
        p2k,
        k2x,
        unassigned,
    };
    mappings.normalize();
    Ok(SystemModel {
        m,
        p_count,
        k_count,
        mappings,
        exclusive_icp: (0..m).map(IcpId::new).collect(),
        exclusive_kpi: (0..m).map(KpiId::new).collect(),
        latent,
    })
}

/// ICPs of a model grouped into the three selection buckets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Buckets {
    /// ICPs with two owners.
    pub shared: Vec<IcpId>,
    /// ICPs injected into the group of a KPI none of their owners manage.
    pub indirect: Vec<IcpId>,
    pub unassigned: Vec<IcpId>,
}

impl Buckets {
    pub fn of(t: &MappingTables) -> Self {
        let shared = t
            .p2x
            .iter()
            .enumerate()
            .filter(|(_, o)| o.len() == 2)
            .map(|(i, _)| IcpId::new(i))
            .collect();
        let mut indirect = BTreeSet::new();
        for (k, group) in t.p2k.iter().enumerate() {
            for &icp in group {
                let owners = &t.p2x[icp.index()];
                if !owners.is_empty() && owners.iter().all(|o| !t.k2x[k].contains(o)) {
                    indirect.insert(icp);
                }
            }
        }
        Buckets {
            shared,
            indirect: indirect.into_iter().collect(),
            unassigned: t.unassigned.clone(),
        }
    }

    pub fn get(&self, i: usize) -> &[IcpId] {
        match i {
            0 => &self.shared,
            1 => &self.indirect,
            _ => &self.unassigned,
        }
    }

    /// Bucket index for a unit draw `u`, renormalizing over non-empty buckets.
    pub fn pick(&self, probs: &[f64; 3], u: f64) -> Option<usize> {
        let total: f64 = (0..3)
            .filter(|&i| !self.get(i).is_empty())
            .map(|i| probs[i])
            .sum();
        if total <= 0.0 {
            return None;
        }
        let mut acc = 0.0;
        let target = u * total;
        let mut last = None;
        for (i, p) in probs.iter().enumerate() {
            if self.get(i).is_empty() {
                continue;
            }
            acc += p;
            last = Some(i);
            if target < acc {
                return Some(i);
            }
        }
        last
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_model;

    #[test]
    fn m5_counts() {
        let model = synthesize_entities(5, 0.3, 1).unwrap();
        assert_eq!((model.p_count, model.k_count), (12, 6));
        assert_eq!(validate_model(&model), vec![]);
    }

    #[test]
    fn m1_has_one_exclusive_and_one_unassigned() {
        for share in [0.0, 0.5, 0.99] {
            let model = synthesize_entities(1, share, 4).unwrap();
            assert_eq!((model.p_count, model.k_count), (2, 1));
            assert_eq!(model.mappings.p2x[0], vec![XAppId(0)]);
            assert_eq!(model.mappings.unassigned, vec![IcpId(1)]);
            assert_eq!(validate_model(&model), vec![]);
        }
    }

    #[test]
    fn m10_counts_with_flooring() {
        let model = synthesize_entities(10, 0.3, 2).unwrap();
        assert_eq!((model.p_count, model.k_count), (25, 12));
        assert_eq!(validate_model(&model), vec![]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(synthesize_entities(0, 0.3, 1).is_err());
        assert!(synthesize_entities(3, 1.0, 1).is_err());
        assert!(synthesize_entities(3, -0.1, 1).is_err());
    }

    #[test]
    fn each_group_gets_one_foreign_icp() {
        let model = synthesize_entities(8, 0.3, 11).unwrap();
        let t = &model.mappings;
        for (k, group) in t.p2k.iter().enumerate() {
            let foreign = group
                .iter()
                .filter(|p| t.p2x[p.index()].iter().all(|o| !t.k2x[k].contains(o)))
                .count();
            assert_eq!(foreign, 1, "kpi {k}");
        }
    }

    #[test]
    fn bucket_pick_renormalizes() {
        let b = Buckets {
            shared: vec![],
            indirect: vec![IcpId(0)],
            unassigned: vec![IcpId(1)],
        };
        let probs = [0.3, 0.5, 0.2];
        // (indirect, unassigned) renormalized to (5/7, 2/7)
        assert_eq!(b.pick(&probs, 0.1), Some(1));
        assert_eq!(b.pick(&probs, 0.70), Some(1));
        assert_eq!(b.pick(&probs, 0.72), Some(2));
        assert_eq!(Buckets::default().pick(&probs, 0.5), None);
    }
}
