use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ConflictLabel;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, FEATURE_WIDTH, SIG_SLOTS, SIG_WIDTH};

pub const CLASSES: usize = ConflictLabel::COUNT;
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Tabular,
    #[serde(rename = "graphmp")]
    GraphMp,
    #[serde(rename = "graphmp-smote")]
    GraphMpSmote,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::Tabular,
        Architecture::GraphMp,
        Architecture::GraphMpSmote,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Tabular => "tabular",
            Architecture::GraphMp => "graphmp",
            Architecture::GraphMpSmote => "graphmp-smote",
        }
    }

    pub fn uses_graphs(self) -> bool {
        !matches!(self, Architecture::Tabular)
    }

    pub fn input_width(self) -> usize {
        if self.uses_graphs() {
            FEATURE_WIDTH
        } else {
            SIG_WIDTH
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown architecture {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// One node per entity, features per [`crate::graph`].
    RowGraph,
    /// A single node carrying the flat row signature.
    Signature,
}

/// How rows were turned into model inputs; stored with the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingDescriptor {
    pub input: InputKind,
    pub feature_width: usize,
    pub icp_scale: f64,
    pub signature_slots: usize,
}

impl EncodingDescriptor {
    pub fn for_architecture(arch: Architecture) -> Self {
        EncodingDescriptor {
            input: if arch.uses_graphs() {
                InputKind::RowGraph
            } else {
                InputKind::Signature
            },
            feature_width: arch.input_width(),
            icp_scale: 100.0,
            signature_slots: SIG_SLOTS,
        }
    }
}

/// A model input: node features plus compressed adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct Input {
    pub nodes: usize,
    pub width: usize,
    pub x: Vec<f64>,
    pub offsets: Vec<usize>,
    pub nbrs: Vec<usize>,
}

impl Input {
    pub fn from_graph(g: &HeteroGraph) -> Self {
        let (offsets, nbrs) = g.adjacency();
        Input {
            nodes: g.node_count(),
            width: FEATURE_WIDTH,
            x: g.features.clone(),
            offsets,
            nbrs,
        }
    }

    pub fn from_signature(sig: &[f64]) -> Self {
        Input {
            nodes: 1,
            width: sig.len(),
            x: sig.to_vec(),
            offsets: vec![0, 0],
            nbrs: Vec::new(),
        }
    }

    fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    fn neighbors(&self, i: usize) -> &[usize] {
        &self.nbrs[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Bitwise identity key, used to collapse duplicate rows.
    pub fn key(&self) -> Vec<u64> {
        let mut k = Vec::with_capacity(2 + self.x.len() + self.nbrs.len() + self.offsets.len());
        k.push(self.nodes as u64);
        k.push(self.width as u64);
        k.extend(self.x.iter().map(|v| v.to_bits()));
        k.extend(self.offsets.iter().map(|&v| v as u64));
        k.extend(self.nbrs.iter().map(|&v| v as u64));
        k
    }
}

#[derive(Clone, Copy, Debug)]
struct LayerSlots {
    input: usize,
    w_self: usize,
    w_neigh: Option<usize>,
    bias: usize,
}

/// Trained classifier: `mp_layers` GraphSAGE-style mean-aggregation layers
/// (plain dense layers for the tabular baseline), mean readout, softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub architecture: Architecture,
    pub encoding: EncodingDescriptor,
    pub hidden: usize,
    pub mp_layers: usize,
    pub params: Vec<f64>,
}

impl ClassifierModel {
    pub fn zeros(architecture: Architecture, hidden: usize, mp_layers: usize) -> Self {
        let mut m = ClassifierModel {
            format_version: MODEL_FORMAT_VERSION,
            architecture,
            encoding: EncodingDescriptor::for_architecture(architecture),
            hidden,
            mp_layers,
            params: Vec::new(),
        };
        m.params = vec![0.0; m.param_count()];
        m
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(architecture: Architecture, hidden: usize, mp_layers: usize, seed: u64) -> Self {
        let mut m = Self::zeros(architecture, hidden, mp_layers);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (layers, out_w, _) = m.layout();
        for l in &layers {
            let bound = (6.0 / (l.input + hidden) as f64).sqrt();
            let n = hidden * l.input;
            for start in std::iter::once(l.w_self).chain(l.w_neigh) {
                for p in &mut m.params[start..start + n] {
                    *p = rng.gen_range(-bound..bound);
                }
            }
        }
        let bound = (6.0 / (hidden + CLASSES) as f64).sqrt();
        for p in &mut m.params[out_w..out_w + CLASSES * hidden] {
            *p = rng.gen_range(-bound..bound);
        }
        m
    }

    pub fn input_width(&self) -> usize {
        self.encoding.feature_width
    }

    fn has_neigh(&self) -> bool {
        self.encoding.input == InputKind::RowGraph
    }

    fn layout(&self) -> (Vec<LayerSlots>, usize, usize) {
        let mut at = 0;
        let mut layers = Vec::with_capacity(self.mp_layers);
        for l in 0..self.mp_layers {
            let input = if l == 0 { self.input_width() } else { self.hidden };
            let w_self = at;
            at += self.hidden * input;
            let w_neigh = if self.has_neigh() {
                let w = at;
                at += self.hidden * input;
                Some(w)
            } else {
                None
            };
            let bias = at;
            at += self.hidden;
            layers.push(LayerSlots {
                input,
                w_self,
                w_neigh,
                bias,
            });
        }
        let out_w = at;
        let out_b = at + CLASSES * self.hidden;
        (layers, out_w, out_b)
    }

    pub fn param_count(&self) -> usize {
        let (_, _, out_b) = self.layout();
        out_b + CLASSES
    }

    /// Ranges of neighbour weights, in layer order.
    pub fn neighbor_weight_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.layout()
            .0
            .iter()
            .filter_map(|l| l.w_neigh.map(|w| w..w + self.hidden * l.input))
            .collect()
    }

    fn check(&self, input: &Input) -> Result<()> {
        if input.width != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                found: input.width,
            });
        }
        if input.nodes == 0 {
            return Err(Error::Empty("graph without nodes"));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Input) -> Result<[f64; CLASSES]> {
        self.check(input)?;
        let mut cache = Cache::default();
        Ok(self.forward_cached(input, &mut cache))
    }

    pub fn predict(&self, input: &Input) -> Result<ConflictLabel> {
        Ok(argmax_label(&self.forward(input)?))
    }

    pub(crate) fn forward_cached(&self, input: &Input, c: &mut Cache) -> [f64; CLASSES] {
        let n = input.nodes;
        let h = self.hidden;
        let (layers, out_w, out_b) = self.layout();
        let p = &self.params;
        c.resize(layers.len());
        c.h[0].clear();
        c.h[0].extend_from_slice(&input.x);
        for (l, slots) in layers.iter().enumerate() {
            let d = slots.input;
            let (before, after) = c.h.split_at_mut(l + 1);
            let hin = &before[l];
            let agg = &mut c.agg[l];
            agg.clear();
            agg.resize(n * d, 0.0);
            if slots.w_neigh.is_some() {
                for i in 0..n {
                    let deg = input.degree(i);
                    if deg == 0 {
                        continue;
                    }
                    let row = &mut agg[i * d..(i + 1) * d];
                    for &j in input.neighbors(i) {
                        for (a, v) in row.iter_mut().zip(&hin[j * d..(j + 1) * d]) {
                            *a += v;
                        }
                    }
                    let inv = 1.0 / deg as f64;
                    row.iter_mut().for_each(|a| *a *= inv);
                }
            }
            let z = &mut c.z[l];
            z.clear();
            z.resize(n * h, 0.0);
            let ws = &p[slots.w_self..slots.w_self + h * d];
            let b = &p[slots.bias..slots.bias + h];
            for i in 0..n {
                let xi = &hin[i * d..(i + 1) * d];
                let ai = &agg[i * d..(i + 1) * d];
                for o in 0..h {
                    let mut s = b[o] + dot(&ws[o * d..(o + 1) * d], xi);
                    if let Some(wn) = slots.w_neigh {
                        s += dot(&p[wn + o * d..wn + (o + 1) * d], ai);
                    }
                    z[i * h + o] = s;
                }
            }
            let hout = &mut after[0];
            hout.clear();
            hout.extend(z.iter().map(|v| v.max(0.0)));
        }
        let last = &c.h[layers.len()];
        c.readout.clear();
        c.readout.resize(h, 0.0);
        for i in 0..n {
            for (r, v) in c.readout.iter_mut().zip(&last[i * h..(i + 1) * h]) {
                *r += v;
            }
        }
        let inv = 1.0 / n as f64;
        c.readout.iter_mut().for_each(|r| *r *= inv);
        let mut logits = [0.0; CLASSES];
        for (k, lg) in logits.iter_mut().enumerate() {
            *lg = p[out_b + k] + dot(&p[out_w + k * h..out_w + (k + 1) * h], &c.readout);
        }
        softmax(&logits)
    }

    /// Accumulates `scale · ∂CE/∂θ` into `grad`, given the probabilities
    /// returned by the matching [`Self::forward_cached`] call.
    pub(crate) fn backward(
        &self,
        input: &Input,
        c: &mut Cache,
        probs: &[f64; CLASSES],
        target: usize,
        scale: f64,
        grad: &mut [f64],
    ) {
        let n = input.nodes;
        let h = self.hidden;
        let (layers, out_w, out_b) = self.layout();
        let p = &self.params;

        let mut dlogits = *probs;
        dlogits[target] -= 1.0;
        dlogits.iter_mut().for_each(|d| *d *= scale);

        let mut dread = vec![0.0; h];
        for k in 0..CLASSES {
            grad[out_b + k] += dlogits[k];
            let w = &p[out_w + k * h..out_w + (k + 1) * h];
            let g = &mut grad[out_w + k * h..out_w + (k + 1) * h];
            for j in 0..h {
                g[j] += dlogits[k] * c.readout[j];
                dread[j] += dlogits[k] * w[j];
            }
        }
        let inv = 1.0 / n as f64;
        let dh = &mut c.dh;
        dh.clear();
        for _ in 0..n {
            dh.extend(dread.iter().map(|v| v * inv));
        }

        for (l, slots) in layers.iter().enumerate().rev() {
            let d = slots.input;
            let z = &c.z[l];
            let hin = &c.h[l];
            let agg = &c.agg[l];
            let dz = &mut c.dz;
            dz.clear();
            dz.extend(dh.iter().zip(z.iter()).map(|(g, z)| if *z > 0.0 { *g } else { 0.0 }));

            for o in 0..h {
                let mut gb = 0.0;
                for i in 0..n {
                    gb += dz[i * h + o];
                }
                grad[slots.bias + o] += gb;
            }
            for i in 0..n {
                let xi = &hin[i * d..(i + 1) * d];
                for o in 0..h {
                    let g = dz[i * h + o];
                    if g == 0.0 {
                        continue;
                    }
                    axpy(g, xi, &mut grad[slots.w_self + o * d..slots.w_self + (o + 1) * d]);
                    if let Some(wn) = slots.w_neigh {
                        axpy(g, &agg[i * d..(i + 1) * d], &mut grad[wn + o * d..wn + (o + 1) * d]);
                    }
                }
            }
            if l == 0 {
                break;
            }
            let dprev = &mut c.dprev;
            dprev.clear();
            dprev.resize(n * d, 0.0);
            let ws = &p[slots.w_self..slots.w_self + h * d];
            for i in 0..n {
                let row = &mut dprev[i * d..(i + 1) * d];
                for o in 0..h {
                    let g = dz[i * h + o];
                    if g != 0.0 {
                        axpy(g, &ws[o * d..(o + 1) * d], row);
                    }
                }
            }
            if let Some(wn) = slots.w_neigh {
                let wn = &p[wn..wn + h * d];
                let mut da = vec![0.0; d];
                for i in 0..n {
                    let deg = input.degree(i);
                    if deg == 0 {
                        continue;
                    }
                    da.iter_mut().for_each(|v| *v = 0.0);
                    for o in 0..h {
                        let g = dz[i * h + o];
                        if g != 0.0 {
                            axpy(g, &wn[o * d..(o + 1) * d], &mut da);
                        }
                    }
                    let inv = 1.0 / deg as f64;
                    for &j in input.neighbors(i) {
                        for (t, v) in dprev[j * d..(j + 1) * d].iter_mut().zip(&da) {
                            *t += v * inv;
                        }
                    }
                }
            }
            std::mem::swap(dh, dprev);
        }
    }

    /// Cross-entropy loss and its gradient for one labelled input.
    pub fn loss_and_grad(&self, input: &Input, label: ConflictLabel) -> Result<(f64, Vec<f64>)> {
        self.check(input)?;
        let mut cache = Cache::default();
        let probs = self.forward_cached(input, &mut cache);
        let mut grad = vec![0.0; self.params.len()];
        self.backward(input, &mut cache, &probs, label.index(), 1.0, &mut grad);
        Ok((-probs[label.index()].ln(), grad))
    }

    pub fn loss(&self, input: &Input, label: ConflictLabel) -> Result<f64> {
        Ok(-self.forward(input)?[label.index()].ln())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ClassifierModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "model format {} is not supported",
                m.format_version
            )));
        }
        if m.params.len() != m.param_count() {
            return Err(Error::WidthMismatch {
                expected: m.param_count(),
                found: m.params.len(),
            });
        }
        Ok(m)
    }
}

/// Scratch buffers reused across forward/backward calls.
#[derive(Default)]
pub(crate) struct Cache {
    h: Vec<Vec<f64>>,
    agg: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    readout: Vec<f64>,
    dh: Vec<f64>,
    dz: Vec<f64>,
    dprev: Vec<f64>,
}

impl Cache {
    fn resize(&mut self, layers: usize) {
        self.h.resize_with(layers + 1, Vec::new);
        self.agg.resize_with(layers, Vec::new);
        self.z.resize_with(layers, Vec::new);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (t, v) in y.iter_mut().zip(x) {
        *t += a * v;
    }
}

pub fn softmax(logits: &[f64; CLASSES]) -> [f64; CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; CLASSES];
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    out
}

pub fn argmax_label(probs: &[f64; CLASSES]) -> ConflictLabel {
    let mut best = 0;
    for k in 1..CLASSES {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    ConflictLabel::from_index(best).expect("class index in range")
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so that gradients that are
/// zero up to rounding do not produce spurious failures.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative error between analytic and central-difference gradients
/// of the cross-entropy over every parameter.
pub fn gradient_check(model: &ClassifierModel, input: &Input, label: ConflictLabel) -> Result<f64> {
    let (_, analytic) = model.loss_and_grad(input, label)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..model.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + GRAD_CHECK_STEP;
        let up = probe.loss(input, label)?;
        probe.params[i] = orig - GRAD_CHECK_STEP;
        let down = probe.loss(input, label)?;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genc::{Rcp, SnapshotRecord};
    use crate::graph::{encode_record, signature};
    use crate::rule_engine::tests::micro;
    use crate::{IcpId, KpiId, XAppId};

    pub(crate) fn direct_input() -> Input {
        let r = SnapshotRecord {
            t: 1,
            rcp: Some(Rcp {
                xapp: XAppId(1),
                icp: IcpId(3),
            }),
            icp_values: vec![12.0; 5],
            kpi_values: vec![0.4, 0.6, 0.7],
            sla: vec![0.8; 3],
            vk: vec![KpiId(1), KpiId(2)],
            label: ConflictLabel::Direct,
        };
        Input::from_graph(&encode_record(&r, &micro()).unwrap())
    }

    #[test]
    fn zero_model_is_uniform() {
        for arch in Architecture::ALL {
            let m = ClassifierModel::zeros(arch, 8, 2);
            let input = if arch.uses_graphs() {
                direct_input()
            } else {
                Input::from_signature(&vec![0.3; SIG_WIDTH])
            };
            let p = m.forward(&input).unwrap();
            for v in p {
                assert_eq!(v, 0.25);
            }
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let m = ClassifierModel::init(Architecture::GraphMp, 8, 2, 1);
        let err = m.forward(&Input::from_signature(&[0.0; 3])).unwrap_err();
        assert!(matches!(err, Error::WidthMismatch { expected: FEATURE_WIDTH, found: 3 }));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let input = direct_input();
        for seed in 0..3 {
            let m = ClassifierModel::init(Architecture::GraphMp, 8, 2, seed);
            let err = gradient_check(&m, &input, ConflictLabel::Indirect).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
        let r = SnapshotRecord {
            t: 3,
            rcp: Some(Rcp {
                xapp: XAppId(1),
                icp: IcpId(4),
            }),
            icp_values: vec![-30.0; 5],
            kpi_values: vec![0.5; 3],
            sla: vec![0.8; 3],
            vk: vec![KpiId(2)],
            label: ConflictLabel::Implicit,
        };
        let sig = Input::from_signature(&signature(&r, &micro()).unwrap());
        let m = ClassifierModel::init(Architecture::Tabular, 8, 2, 9);
        assert!(gradient_check(&m, &sig, ConflictLabel::Implicit).unwrap() < 1e-4);
    }

    #[test]
    fn isolated_zero_features_give_zero_neighbor_gradients() {
        let mut m = ClassifierModel::init(Architecture::GraphMp, 8, 2, 4);
        // non-zero biases so hidden states are non-trivial
        let n = m.params.len();
        for (i, p) in m.params.iter_mut().enumerate() {
            if *p == 0.0 {
                *p = 0.01 * ((i % 7) as f64 - 3.0) / (n as f64).sqrt();
            }
        }
        let input = Input {
            nodes: 3,
            width: FEATURE_WIDTH,
            x: vec![0.0; 3 * FEATURE_WIDTH],
            offsets: vec![0, 0, 0, 0],
            nbrs: vec![],
        };
        let (_, grad) = m.loss_and_grad(&input, ConflictLabel::Direct).unwrap();
        for r in m.neighbor_weight_ranges() {
            assert!(grad[r].iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn gradient_is_linear_in_loss_scale() {
        let m = ClassifierModel::init(Architecture::GraphMp, 8, 2, 5);
        let input = direct_input();
        let mut c = Cache::default();
        let p = m.forward_cached(&input, &mut c);
        let mut g1 = vec![0.0; m.params.len()];
        m.backward(&input, &mut c, &p, 1, 1.0, &mut g1);
        let p = m.forward_cached(&input, &mut c);
        let mut g2 = vec![0.0; m.params.len()];
        m.backward(&input, &mut c, &p, 1, 2.0, &mut g2);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let m = ClassifierModel::init(Architecture::GraphMpSmote, 8, 2, 11);
        let back = ClassifierModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.clone();
        bad.params.pop();
        assert!(ClassifierModel::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn architecture_names_parse() {
        for a in Architecture::ALL {
            assert_eq!(a.as_str().parse::<Architecture>().unwrap(), a);
        }
        assert!("lstm".parse::<Architecture>().is_err());
    }
}
