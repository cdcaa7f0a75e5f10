use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{Confusion, MeanSe, RunMetrics};
use super::model::{argmax_label, Architecture, Cache, ClassifierModel, Input, InputKind, CLASSES};
use super::smote::{smote_filtered, SmoteConfig};
use crate::bench::{time_per_item, Timing};
use crate::domain::{ConflictLabel, MappingTables};
use crate::error::{Error, Result};
use crate::genc::SnapshotRecord;
use crate::graph::{encode_record, graph_from_signature, signature, signature_label};
use crate::par::{self, Exec};

/// Upper bound on the per-class SMOTE target. Growing every minority class
/// to the idle-dominated majority would multiply training cost by ~30.
pub const DEFAULT_SMOTE_CAP: usize = 8_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden: usize,
    pub mp_layers: usize,
    pub k_neighbors: usize,
    pub smote_cap: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            batch: 64,
            lr: 3e-3,
            seed: 1,
            hidden: 64,
            mp_layers: 2,
            k_neighbors: 5,
            smote_cap: Some(DEFAULT_SMOTE_CAP),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub epochs: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub samples: usize,
    pub unique_inputs: usize,
    pub synthetic: usize,
    pub smote_rejected: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: ClassifierModel,
    pub metrics: TrainMetrics,
}

/// Encoded rows with bitwise-identical inputs collapsed. Idle rows all share
/// one placeholder entry, which keeps mini-batches cheap.
#[derive(Clone, Debug)]
pub struct EncodedSet {
    pub kind: InputKind,
    pub unique: Vec<Input>,
    pub unique_labels: Vec<ConflictLabel>,
    pub index: Vec<u32>,
    seen: HashMap<(Vec<u64>, ConflictLabel), u32>,
}

impl EncodedSet {
    pub fn new(kind: InputKind) -> Self {
        EncodedSet {
            kind,
            unique: Vec::new(),
            unique_labels: Vec::new(),
            index: Vec::new(),
            seen: HashMap::new(),
        }
    }

    pub fn push(&mut self, input: Input, label: ConflictLabel) {
        let next = self.unique.len() as u32;
        let id = *self.seen.entry((input.key(), label)).or_insert(next);
        if id == next {
            self.unique.push(input);
            self.unique_labels.push(label);
        }
        self.index.push(id);
    }

    pub fn encode_one(record: &SnapshotRecord, mappings: &MappingTables, kind: InputKind) -> Result<Input> {
        Ok(match kind {
            InputKind::RowGraph => Input::from_graph(&encode_record(record, mappings)?),
            InputKind::Signature => Input::from_signature(&signature(record, mappings)?),
        })
    }

    /// Encodes every record, labelled with its stored (oracle) label.
    pub fn encode(
        records: &[SnapshotRecord],
        mappings: &MappingTables,
        kind: InputKind,
        exec: Exec,
    ) -> Result<Self> {
        let inputs = par::map(exec, records, |i, r| {
            Self::encode_one(r, mappings, kind).map_err(|e| e.at_row(i))
        });
        let mut set = EncodedSet::new(kind);
        for (input, r) in inputs.into_iter().zip(records) {
            set.push(input?, r.label);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn input(&self, row: usize) -> &Input {
        &self.unique[self.index[row] as usize]
    }

    pub fn label(&self, row: usize) -> ConflictLabel {
        self.unique_labels[self.index[row] as usize]
    }

    pub fn labels(&self) -> Vec<ConflictLabel> {
        (0..self.len()).map(|r| self.label(r)).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut s = EncodedSet::new(self.kind);
        let mut remap: HashMap<u32, u32> = HashMap::new();
        for &r in rows {
            let old = self.index[r];
            let id = *remap.entry(old).or_insert_with(|| {
                s.unique.push(self.unique[old as usize].clone());
                s.unique_labels.push(self.unique_labels[old as usize]);
                (s.unique.len() - 1) as u32
            });
            s.index.push(id);
        }
        s
    }
}

/// 80/20-style split that keeps each class's share; returns sorted row
/// indices `(train, test)`.
pub fn stratified_split(labels: &[ConflictLabel], train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in ConflictLabel::ALL {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        let cut = (rows.len() as f64 * train_frac).round() as usize;
        train.extend_from_slice(&rows[..cut]);
        test.extend_from_slice(&rows[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// Mini-batch Adam on mean cross-entropy. Duplicate inputs inside a batch
/// are evaluated once and weighted by their multiplicity, which is exact.
pub fn fit(set: &EncodedSet, arch: Architecture, config: &TrainConfig) -> Result<TrainOutput> {
    if set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if config.batch == 0 || config.hidden == 0 || config.mp_layers == 0 {
        return Err(Error::InvalidArgument("batch, hidden and mp_layers must be positive".into()));
    }
    let expected = if arch.uses_graphs() {
        InputKind::RowGraph
    } else {
        InputKind::Signature
    };
    if set.kind != expected {
        return Err(Error::InvalidArgument(format!("{arch} cannot train on {:?} inputs", set.kind)));
    }
    let start = Instant::now();
    let mut model = ClassifierModel::init(arch, config.hidden, config.mp_layers, config.seed);
    if let Some(first) = set.unique.first() {
        if first.width != model.input_width() {
            return Err(Error::WidthMismatch {
                expected: model.input_width(),
                found: first.width,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xa5a5);
    let mut order: Vec<u32> = (0..set.len() as u32).collect();
    let mut adam = Adam::new(model.params.len());
    let mut grad = vec![0.0; model.params.len()];
    let mut cache = Cache::default();
    let mut ids: Vec<u32> = Vec::with_capacity(config.batch);
    let mut final_loss = f64::NAN;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch) {
            ids.clear();
            ids.extend(chunk.iter().map(|&r| set.index[r as usize]));
            ids.sort_unstable();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            let mut i = 0;
            while i < ids.len() {
                let id = ids[i];
                let mut j = i;
                while j < ids.len() && ids[j] == id {
                    j += 1;
                }
                let count = (j - i) as f64;
                let input = &set.unique[id as usize];
                let target = set.unique_labels[id as usize].index();
                let probs = model.forward_cached(input, &mut cache);
                batch_loss -= count * probs[target].ln();
                model.backward(input, &mut cache, &probs, target, count * scale, &mut grad);
                i = j;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            adam.step(&mut model.params, &grad, config.lr);
        }
        final_loss = epoch_loss / set.len() as f64;
        log::debug!("{arch} epoch {epoch}: loss {final_loss:.6}");
    }

    let preds = predict_unique(&model, set, Exec::Sequential)?;
    let correct = set
        .index
        .iter()
        .filter(|&&u| preds[u as usize] == set.unique_labels[u as usize])
        .count();
    Ok(TrainOutput {
        metrics: TrainMetrics {
            epochs: config.epochs,
            final_loss,
            train_accuracy: 100.0 * correct as f64 / set.len() as f64,
            samples: set.len(),
            unique_inputs: set.unique.len(),
            synthetic: 0,
            smote_rejected: 0,
            seconds: start.elapsed().as_secs_f64(),
        },
        model,
    })
}

/// Builds the training set for `arch` from the given rows (SMOTE-expanded
/// for `GraphMpSmote`) and fits it. `labels` are the oracle labels.
pub fn train(
    records: &[SnapshotRecord],
    labels: &[ConflictLabel],
    mappings: &MappingTables,
    arch: Architecture,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    if records.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if records.len() != labels.len() {
        return Err(Error::InvalidArgument("records and labels differ in length".into()));
    }
    let kind = if arch.uses_graphs() {
        InputKind::RowGraph
    } else {
        InputKind::Signature
    };
    let mut set = EncodedSet::new(kind);
    for (i, (r, l)) in records.iter().zip(labels).enumerate() {
        set.push(EncodedSet::encode_one(r, mappings, kind).map_err(|e| e.at_row(i))?, *l);
    }
    let (synthetic, rejected) = if arch == Architecture::GraphMpSmote {
        augment_with_smote(&mut set, records, labels, mappings, config)?
    } else {
        (0, 0)
    };
    let mut out = fit(&set, arch, config)?;
    out.metrics.synthetic = synthetic;
    out.metrics.smote_rejected = rejected;
    Ok(out)
}

/// Appends SMOTE rows, generated on flat signatures and re-encoded as
/// canonical graphs. Candidates whose rounded structure would carry a
/// different rule label than their class are redrawn.
fn augment_with_smote(
    set: &mut EncodedSet,
    records: &[SnapshotRecord],
    labels: &[ConflictLabel],
    mappings: &MappingTables,
    config: &TrainConfig,
) -> Result<(usize, usize)> {
    let sigs = records
        .iter()
        .enumerate()
        .map(|(i, r)| signature(r, mappings).map_err(|e| e.at_row(i)))
        .collect::<Result<Vec<_>>>()?;
    let smote_cfg = SmoteConfig {
        k_neighbors: config.k_neighbors,
        target: None,
        cap: config.smote_cap,
        seed: config.seed ^ 0x5307,
        max_redraws: 20,
    };
    let out = smote_filtered(&sigs, labels, &smote_cfg, |s, l| signature_label(s) == l)?;
    let synthetic = out.synthetic_count();
    for (row, label) in out.rows.iter().zip(&out.labels).skip(sigs.len()) {
        set.push(Input::from_graph(&graph_from_signature(row, Some(*label))?), *label);
    }
    Ok((synthetic, out.rejected))
}

fn predict_unique(model: &ClassifierModel, set: &EncodedSet, exec: Exec) -> Result<Vec<ConflictLabel>> {
    predict_batch(model, &set.unique, exec)
}

/// Batched inference; one prediction per input.
pub fn predict_batch(model: &ClassifierModel, inputs: &[Input], exec: Exec) -> Result<Vec<ConflictLabel>> {
    if let Some(bad) = inputs.iter().find(|i| i.width != model.input_width()) {
        return Err(Error::WidthMismatch {
            expected: model.input_width(),
            found: bad.width,
        });
    }
    Ok(par::map(exec, inputs, |_, input| {
        let mut cache = Cache::default();
        argmax_label(&model.forward_cached(input, &mut cache))
    }))
}

pub fn predict_probs(model: &ClassifierModel, input: &Input) -> Result<[f64; CLASSES]> {
    model.forward(input)
}

/// Confusion of `model` on an encoded test set.
pub fn evaluate(model: &ClassifierModel, test: &EncodedSet, exec: Exec) -> Result<Confusion> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let preds = predict_unique(model, test, exec)?;
    let mut c = Confusion::default();
    for &u in &test.index {
        c.matrix[test.unique_labels[u as usize].index()][preds[u as usize].index()] += 1;
    }
    Ok(c)
}

pub const LATENCY_BATCH: usize = 256;
pub const LATENCY_WARMUP_BATCHES: usize = 100;
pub const LATENCY_TRIALS: usize = 5;

/// Per-row batched inference time over the rows of `set` (every row is
/// evaluated, duplicates included).
pub fn inference_latency(model: &ClassifierModel, set: &EncodedSet) -> Result<Timing> {
    if set.is_empty() {
        return Err(Error::Empty("latency set"));
    }
    let mut cache = Cache::default();
    let n = set.len();
    let mut sink = 0usize;
    let timing = time_per_item(LATENCY_BATCH, LATENCY_WARMUP_BATCHES, LATENCY_TRIALS, |call| {
        let start = (call * LATENCY_BATCH) % n;
        for k in 0..LATENCY_BATCH {
            let p = model.forward_cached(set.input((start + k) % n), &mut cache);
            sink = sink.wrapping_add(argmax_label(&p).index());
        }
    });
    std::hint::black_box(sink);
    Ok(timing)
}

/// One training run per seed on a fresh stratified split; `encoded` must
/// hold every record in `records` with the input kind of `arch`.
pub fn run_seeds(
    records: &[SnapshotRecord],
    encoded: &EncodedSet,
    mappings: &MappingTables,
    arch: Architecture,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<(RunMetrics, TrainOutput)>> {
    let labels: Vec<ConflictLabel> = records.iter().map(|r| r.label).collect();
    seeds
        .iter()
        .map(|&seed| {
            let (train_rows, test_rows) = stratified_split(&labels, 0.8, seed);
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            let mut set = encoded.subset(&train_rows);
            let (synthetic, rejected) = if arch == Architecture::GraphMpSmote {
                let recs: Vec<SnapshotRecord> = train_rows.iter().map(|&i| records[i].clone()).collect();
                let labs: Vec<ConflictLabel> = recs.iter().map(|r| r.label).collect();
                augment_with_smote(&mut set, &recs, &labs, mappings, &cfg)?
            } else {
                (0, 0)
            };
            let mut out = fit(&set, arch, &cfg)?;
            out.metrics.synthetic = synthetic;
            out.metrics.smote_rejected = rejected;
            let test = encoded.subset(&test_rows);
            let confusion = evaluate(&out.model, &test, Exec::default())?;
            Ok((RunMetrics::new(seed, confusion), out))
        })
        .collect()
}

/// Latency summary helper for reports.
pub fn latency_us(t: &Timing) -> MeanSe {
    MeanSe {
        mean: t.mean_ns / 1e3,
        se: t.se_ns / 1e3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genc::{simulate_to_vec, synthesize_entities, IntensityProfile, SimConfig};

    fn dataset(t: u64) -> (crate::SystemModel, Vec<SnapshotRecord>) {
        let model = synthesize_entities(5, 0.3, 1).unwrap();
        let recs = simulate_to_vec(&model, &IntensityProfile::low(), &SimConfig::new(t, 50.0, 1)).unwrap();
        (model, recs)
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let (_, recs) = dataset(20_000);
        let labels: Vec<ConflictLabel> = recs.iter().map(|r| r.label).collect();
        let (tr, te) = stratified_split(&labels, 0.8, 3);
        assert_eq!(tr.len() + te.len(), labels.len());
        assert!(tr.iter().all(|i| te.binary_search(i).is_err()));
        for c in ConflictLabel::ALL {
            let all = labels.iter().filter(|l| **l == c).count() as f64;
            let t = tr.iter().filter(|&&i| labels[i] == c).count() as f64;
            assert!((t - 0.8 * all).abs() <= 1.0);
        }
    }

    #[test]
    fn idle_rows_collapse_to_one_input() {
        let (model, recs) = dataset(5_000);
        let set = EncodedSet::encode(&recs, &model.mappings, InputKind::RowGraph, Exec::Sequential).unwrap();
        let idle = recs.iter().filter(|r| r.is_idle()).count();
        assert!(set.unique.len() <= recs.len() - idle + 1);
        assert_eq!(set.labels(), recs.iter().map(|r| r.label).collect::<Vec<_>>());
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let (model, recs) = dataset(2_000);
        let labels: Vec<_> = recs.iter().map(|r| r.label).collect();
        let cfg = TrainConfig {
            epochs: 2,
            lr: 0.0,
            hidden: 8,
            ..Default::default()
        };
        let out = train(&recs, &labels, &model.mappings, Architecture::GraphMp, &cfg).unwrap();
        let init = ClassifierModel::init(Architecture::GraphMp, 8, 2, cfg.seed);
        assert_eq!(out.model.params, init.params);
    }

    #[test]
    fn same_seed_same_model() {
        let (model, recs) = dataset(3_000);
        let labels: Vec<_> = recs.iter().map(|r| r.label).collect();
        let cfg = TrainConfig {
            epochs: 2,
            hidden: 8,
            ..Default::default()
        };
        let a = train(&recs, &labels, &model.mappings, Architecture::Tabular, &cfg).unwrap();
        let b = train(&recs, &labels, &model.mappings, Architecture::Tabular, &cfg).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn graphmp_fits_small_low_dataset() {
        let (model, recs) = dataset(5_000);
        let labels: Vec<_> = recs.iter().map(|r| r.label).collect();
        let cfg = TrainConfig {
            epochs: 30,
            ..Default::default()
        };
        let out = train(&recs, &labels, &model.mappings, Architecture::GraphMp, &cfg).unwrap();
        assert!(out.metrics.train_accuracy >= 99.0, "{:?}", out.metrics);
    }

    #[test]
    fn divergence_is_reported() {
        let (model, recs) = dataset(3_000);
        let labels: Vec<_> = recs.iter().map(|r| r.label).collect();
        let cfg = TrainConfig {
            epochs: 3,
            lr: f64::INFINITY,
            hidden: 8,
            ..Default::default()
        };
        let err = train(&recs, &labels, &model.mappings, Architecture::Tabular, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }
}
