use serde::{Deserialize, Serialize};

use crate::domain::ConflictLabel;
use crate::error::{Error, Result};

const N: usize = ConflictLabel::COUNT;

/// `matrix[truth][predicted]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub matrix: [[usize; N]; N],
}

impl Confusion {
    pub fn from_pairs(truth: &[ConflictLabel], pred: &[ConflictLabel]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels but {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let mut c = Confusion::default();
        for (t, p) in truth.iter().zip(pred) {
            c.matrix[t.index()][p.index()] += 1;
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.matrix.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> usize {
        self.matrix[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> usize {
        self.matrix.iter().map(|r| r[class]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let trace: usize = (0..N).map(|i| self.matrix[i][i]).sum();
        100.0 * trace as f64 / total as f64
    }

    pub fn class_metrics(&self, class: usize) -> ClassMetrics {
        let tp = self.matrix[class][class] as f64;
        let support = self.support(class);
        let predicted = self.predicted(class);
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if support == 0 { 0.0 } else { tp / support as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            label: ConflictLabel::from_index(class).expect("class in range"),
            precision: 100.0 * precision,
            recall: 100.0 * recall,
            f1: 100.0 * f1,
            support,
        }
    }

    /// Unweighted mean F1 over classes that occur in the truth or the
    /// predictions; a class that is never predicted scores 0.
    pub fn macro_f1(&self) -> f64 {
        let present: Vec<usize> = (0..N)
            .filter(|&c| self.support(c) > 0 || self.predicted(c) > 0)
            .collect();
        if present.is_empty() {
            return 0.0;
        }
        present.iter().map(|&c| self.class_metrics(c).f1).sum::<f64>() / present.len() as f64
    }

    pub fn add(&mut self, other: &Confusion) {
        for i in 0..N {
            for j in 0..N {
                self.matrix[i][j] += other.matrix[i][j];
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: ConflictLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Metrics of a single training/evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Confusion,
}

impl RunMetrics {
    pub fn new(seed: u64, confusion: Confusion) -> Self {
        RunMetrics {
            seed,
            accuracy: confusion.accuracy(),
            macro_f1: confusion.macro_f1(),
            confusion,
        }
    }
}

/// Mean and standard error of the mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanSe::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return MeanSe { mean, se: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        MeanSe {
            mean,
            se: (var / n as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub m: Option<usize>,
    pub intensity: Option<String>,
    pub runs: usize,
    pub accuracy: MeanSe,
    pub macro_f1: MeanSe,
    /// Per-class metrics of the confusion matrix summed over runs.
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Confusion,
    /// Per-sample batched inference time in microseconds.
    pub latency_us: Option<MeanSe>,
    pub seeds: Vec<u64>,
}

impl EvalReport {
    pub fn from_runs(method: &str, runs: &[RunMetrics]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Empty("no evaluation runs"));
        }
        let mut confusion = Confusion::default();
        for r in runs {
            confusion.add(&r.confusion);
        }
        let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let f1: Vec<f64> = runs.iter().map(|r| r.macro_f1).collect();
        Ok(EvalReport {
            method: method.to_string(),
            m: None,
            intensity: None,
            runs: runs.len(),
            accuracy: MeanSe::of(&acc),
            macro_f1: MeanSe::of(&f1),
            per_class: (0..N).map(|c| confusion.class_metrics(c)).collect(),
            confusion,
            latency_us: None,
            seeds: runs.iter().map(|r| r.seed).collect(),
        })
    }

    pub const CSV_HEADER: &'static str =
        "method,m,intensity,runs,accuracy,accuracy_se,macro_f1,macro_f1_se,latency_us,latency_se_us";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4},{},{}",
            self.method,
            self.m.map(|m| m.to_string()).unwrap_or_default(),
            self.intensity.clone().unwrap_or_default(),
            self.runs,
            self.accuracy.mean,
            self.accuracy.se,
            self.macro_f1.mean,
            self.macro_f1.se,
            opt(self.latency_us.map(|l| l.mean)),
            opt(self.latency_us.map(|l| l.se)),
        )
    }
}
