use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::ConflictLabel;
use crate::error::{Error, Result};

/// Where a synthetic row came from: `a + lambda * (b - a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Provenance {
    pub a: usize,
    pub b: usize,
    pub lambda: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SmoteOutput {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<ConflictLabel>,
    /// Parallel to `rows`; `None` for originals.
    pub provenance: Vec<Option<Provenance>>,
    /// Candidates rejected by the acceptance predicate.
    pub rejected: usize,
}

impl SmoteOutput {
    pub fn synthetic_count(&self) -> usize {
        self.provenance.iter().filter(|p| p.is_some()).count()
    }

    pub fn class_counts(&self) -> [usize; ConflictLabel::COUNT] {
        let mut c = [0; ConflictLabel::COUNT];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Per-class target; `None` means the majority count.
    pub target: Option<usize>,
    /// Upper bound applied to the (default or explicit) target.
    pub cap: Option<usize>,
    pub seed: u64,
    /// Redraws per synthetic row before falling back to a copy of `a`.
    pub max_redraws: usize,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: 5,
            target: None,
            cap: None,
            seed: 0,
            max_redraws: 20,
        }
    }
}

pub fn smote(rows: &[Vec<f64>], labels: &[ConflictLabel], config: &SmoteConfig) -> Result<SmoteOutput> {
    smote_filtered(rows, labels, config, |_, _| true)
}

/// SMOTE with an acceptance predicate on each candidate. Rejected
/// candidates are redrawn; after `max_redraws` the row `a` itself is used
/// (lambda = 0), which always lies on a same-class segment.
pub fn smote_filtered(
    rows: &[Vec<f64>],
    labels: &[ConflictLabel],
    config: &SmoteConfig,
    accept: impl Fn(&[f64], ConflictLabel) -> bool,
) -> Result<SmoteOutput> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidArgument("rows and labels differ in length".into()));
    }
    if config.k_neighbors == 0 {
        return Err(Error::InvalidArgument("k_neighbors must be at least 1".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ConflictLabel::COUNT];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    let missing: Vec<&str> = ConflictLabel::ALL
        .iter()
        .filter(|l| by_class[l.index()].is_empty())
        .map(|l| l.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::EmptyClass(missing.join(", ")));
    }
    let majority = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut target = config.target.unwrap_or(majority);
    if let Some(cap) = config.cap {
        target = target.min(cap);
    }

    let mut out = SmoteOutput {
        rows: rows.to_vec(),
        labels: labels.to_vec(),
        provenance: vec![None; rows.len()],
        rejected: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for label in ConflictLabel::ALL {
        let members = &by_class[label.index()];
        if members.len() >= target {
            continue;
        }
        let mut knn_cache: Vec<Option<Vec<usize>>> = vec![None; members.len()];
        for _ in members.len()..target {
            let mut chosen = None;
            for _ in 0..=config.max_redraws {
                let ia = rng.gen_range(0..members.len());
                let nbrs = knn_cache[ia]
                    .get_or_insert_with(|| neighbors(rows, members, ia, config.k_neighbors));
                let b = nbrs[rng.gen_range(0..nbrs.len())];
                let lambda: f64 = rng.gen();
                let a = members[ia];
                let cand = interpolate(&rows[a], &rows[b], lambda);
                if accept(&cand, label) {
                    chosen = Some((cand, Provenance { a, b, lambda }));
                    break;
                }
                out.rejected += 1;
            }
            let (row, prov) = chosen.unwrap_or_else(|| {
                let a = members[rng.gen_range(0..members.len())];
                (rows[a].clone(), Provenance { a, b: a, lambda: 0.0 })
            });
            out.rows.push(row);
            out.labels.push(label);
            out.provenance.push(Some(prov));
        }
    }
    Ok(out)
}

pub fn interpolate(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest same-class rows of `members[ia]` (excluding itself).
/// Classes with at most `k` rows use every other member; singletons pair
/// with themselves.
fn neighbors(rows: &[Vec<f64>], members: &[usize], ia: usize, k: usize) -> Vec<usize> {
    let a = members[ia];
    let mut others: Vec<usize> = members.iter().copied().filter(|&j| j != a).collect();
    if others.is_empty() {
        return vec![a];
    }
    if others.len() > k {
        let d = |j: &usize| dist2(&rows[a], &rows[*j]);
        others.select_nth_unstable_by(k - 1, |x, y| d(x).total_cmp(&d(y)).then(x.cmp(y)));
        others.truncate(k);
        others.sort_unstable();
    }
    others
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(counts: [usize; 4]) -> (Vec<Vec<f64>>, Vec<ConflictLabel>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                rows.push(vec![c as f64 * 10.0 + (i % 17) as f64 * 0.1, (i % 5) as f64]);
                labels.push(ConflictLabel::from_index(c).unwrap());
            }
        }
        (rows, labels)
    }

    #[test]
    fn grows_every_class_to_majority() {
        let (rows, labels) = dataset([900, 40, 50, 10]);
        let out = smote(&rows, &labels, &SmoteConfig::default()).unwrap();
        assert_eq!(out.class_counts(), [900, 900, 900, 900]);
        assert_eq!(out.synthetic_count(), 3 * 900 - 100);
    }

    #[test]
    fn cap_limits_target() {
        let (rows, labels) = dataset([900, 40, 50, 10]);
        let cfg = SmoteConfig {
            cap: Some(100),
            ..Default::default()
        };
        let out = smote(&rows, &labels, &cfg).unwrap();
        assert_eq!(out.class_counts(), [900, 100, 100, 100]);
    }

    #[test]
    fn singleton_class_yields_copies() {
        let (rows, labels) = dataset([20, 1, 5, 5]);
        let out = smote(&rows, &labels, &SmoteConfig::default()).unwrap();
        let single = labels.iter().position(|l| *l == ConflictLabel::Direct).unwrap();
        for (r, l) in out.rows.iter().zip(&out.labels).skip(rows.len()) {
            if *l == ConflictLabel::Direct {
                assert_eq!(r, &rows[single]);
            }
        }
    }

    #[test]
    fn midpoint_interpolation() {
        assert_eq!(interpolate(&[0.0, 2.0], &[2.0, 4.0], 0.5), vec![1.0, 3.0]);
    }

    #[test]
    fn empty_class_is_named() {
        let (rows, labels) = dataset([10, 0, 3, 0]);
        match smote(&rows, &labels, &SmoteConfig::default()).unwrap_err() {
            Error::EmptyClass(s) => assert_eq!(s, "Direct, Implicit"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn synthetic_points_lie_on_same_class_segments() {
        let (rows, labels) = dataset([200, 7, 30, 3]);
        let out = smote(&rows, &labels, &SmoteConfig { seed: 3, ..Default::default() }).unwrap();
        for (i, p) in out.provenance.iter().enumerate() {
            let Some(p) = p else { continue };
            assert_eq!(labels[p.a], out.labels[i]);
            assert_eq!(labels[p.b], out.labels[i]);
            assert!((0.0..=1.0).contains(&p.lambda));
            assert_eq!(out.rows[i], interpolate(&rows[p.a], &rows[p.b], p.lambda));
        }
    }

    #[test]
    fn rejected_candidates_are_redrawn() {
        let (rows, labels) = dataset([50, 10, 10, 10]);
        let out = smote_filtered(&rows, &labels, &SmoteConfig::default(), |r, _| r[1] < 2.5).unwrap();
        for r in &out.rows[rows.len()..] {
            assert!(r[1] < 2.5);
        }
        assert!(out.rejected > 0);
    }
}
