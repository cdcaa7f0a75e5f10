use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Low,
    Medium,
    High,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Low, Intensity::Medium, Intensity::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Intensity::Low => "low",
            Intensity::Medium => "medium",
            Intensity::High => "high",
        }
    }

    pub fn profile(self) -> IntensityProfile {
        IntensityProfile::of(self)
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Intensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Intensity::Low),
            "medium" => Ok(Intensity::Medium),
            "high" => Ok(Intensity::High),
            other => Err(Error::Parse(format!("unknown intensity {other:?}"))),
        }
    }
}

/// Upper edge of every SLA threshold band.
pub const SLA_CEILING: f64 = 0.9;

/// Dynamic generator factors for one conflict intensity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityProfile {
    pub name: Intensity,
    /// Selection probabilities of the (shared, indirect, unassigned) buckets.
    pub bucket_probs: [f64; 3],
    /// Probability that a time step carries a parameter update.
    pub update_freq: f64,
    /// Width of the threshold band below [`SLA_CEILING`].
    pub sla_band: f64,
    /// Probability that a time step carries a breach-shaped update.
    pub breach_prob: f64,
    /// Expected share of conflict rows, in percent.
    pub expected_conflict_ratio: (f64, f64),
}

impl IntensityProfile {
    pub const BUCKETS: [f64; 3] = [0.30, 0.50, 0.20];

    pub fn low() -> Self {
        IntensityProfile {
            name: Intensity::Low,
            bucket_probs: Self::BUCKETS,
            update_freq: 0.05,
            sla_band: 0.30,
            breach_prob: 0.03,
            expected_conflict_ratio: (1.0, 4.0),
        }
    }

    pub fn medium() -> Self {
        IntensityProfile {
            name: Intensity::Medium,
            bucket_probs: Self::BUCKETS,
            update_freq: 0.10,
            sla_band: 0.20,
            breach_prob: 0.06,
            expected_conflict_ratio: (5.0, 7.0),
        }
    }

    pub fn high() -> Self {
        IntensityProfile {
            name: Intensity::High,
            bucket_probs: Self::BUCKETS,
            update_freq: 0.15,
            sla_band: 0.15,
            breach_prob: 0.10,
            expected_conflict_ratio: (8.0, 10.0),
        }
    }

    pub fn of(i: Intensity) -> Self {
        match i {
            Intensity::Low => Self::low(),
            Intensity::Medium => Self::medium(),
            Intensity::High => Self::high(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.bucket_probs.iter().sum();
        if self.bucket_probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidArgument(format!(
                "bucket probabilities must be a distribution, got {:?}",
                self.bucket_probs
            )));
        }
        if !(0.0..=1.0).contains(&self.update_freq) {
            return Err(Error::InvalidArgument("update_freq outside [0,1]".into()));
        }
        if !(0.0..=self.update_freq).contains(&self.breach_prob) {
            return Err(Error::InvalidArgument(
                "breach_prob must lie in [0, update_freq]".into(),
            ));
        }
        if !(self.sla_band > 0.0 && self.sla_band < SLA_CEILING) {
            return Err(Error::InvalidArgument("sla_band outside (0, 0.9)".into()));
        }
        Ok(())
    }

    /// Support of the threshold distribution, `[0.9 - band, 0.9]`.
    pub fn threshold_range(&self) -> (f64, f64) {
        (SLA_CEILING - self.sla_band, SLA_CEILING)
    }

    /// Maps a unit draw onto the threshold band.
    pub fn threshold_from_unit(&self, u: f64) -> f64 {
        let (lo, hi) = self.threshold_range();
        lo + u.clamp(0.0, 1.0) * (hi - lo)
    }
}

pub fn sample_threshold<R: Rng + ?Sized>(rng: &mut R, profile: &IntensityProfile) -> f64 {
    profile.threshold_from_unit(rng.gen::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_values() {
        let l = IntensityProfile::low();
        assert_eq!(l.bucket_probs, [0.30, 0.50, 0.20]);
        assert_eq!((l.update_freq, l.sla_band, l.breach_prob), (0.05, 0.30, 0.03));
        let m = IntensityProfile::medium();
        assert_eq!((m.update_freq, m.sla_band, m.breach_prob), (0.10, 0.20, 0.06));
        assert_eq!(m.expected_conflict_ratio, (5.0, 7.0));
        let h = IntensityProfile::high();
        assert_eq!((h.update_freq, h.sla_band, h.breach_prob), (0.15, 0.15, 0.10));
        for i in Intensity::ALL {
            i.profile().validate().unwrap();
        }
    }

    #[test]
    fn threshold_edges() {
        let low = IntensityProfile::low();
        assert!((low.threshold_from_unit(0.0) - 0.60).abs() < 1e-12);
        assert!((low.threshold_from_unit(1.0) - 0.90).abs() < 1e-12);
        let high = IntensityProfile::high();
        assert!((high.threshold_from_unit(0.0) - 0.75).abs() < 1e-12);
        assert!((high.threshold_from_unit(1.0) - 0.90).abs() < 1e-12);
    }

    #[test]
    fn medium_threshold_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = IntensityProfile::medium();
        let n = 100_000;
        let mean = (0..n).map(|_| sample_threshold(&mut rng, &p)).sum::<f64>() / n as f64;
        assert!((mean - 0.80).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn intensity_parses() {
        assert_eq!("HIGH".parse::<Intensity>().unwrap(), Intensity::High);
        assert!("extreme".parse::<Intensity>().is_err());
    }
}
