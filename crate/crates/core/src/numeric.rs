//! Small numerical helpers shared across modules: compensated summation,
//! replication statistics and the seed-mixing function.

use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Mean and standard error of the mean over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    /// Sample mean and `sd / sqrt(count)` with the unbiased variance. A single
    /// value has SE 0.
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return MeanSe {
                mean: f64::NAN,
                se: f64::NAN,
                count,
            };
        }
        let n = count as f64;
        let mean = compensated_sum(values.iter().copied()) / n;
        let se = if count > 1 {
            let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
            (ss / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        MeanSe { mean, se, count }
    }

    pub fn scaled(self, factor: f64) -> Self {
        MeanSe {
            mean: self.mean * factor,
            se: self.se * factor.abs(),
            count: self.count,
        }
    }
}

/// `sqrt(a^2 + b^2)`, the SE of a difference of independent means.
pub fn combined_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Sample covariance of paired values divided by the count, i.e. the
/// covariance of the two sample means.
pub fn covariance_of_means(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let count = a.len();
    if count < 2 {
        return 0.0;
    }
    let n = count as f64;
    let ma = compensated_sum(a.iter().copied()) / n;
    let mb = compensated_sum(b.iter().copied()) / n;
    let s = compensated_sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)));
    s / (n - 1.0) / n
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed ladder mixing: folds each part into the state with
/// `h = splitmix64(h + GOLDEN_GAMMA + part)`, starting from
/// `h = splitmix64(master)`.
pub fn mix_seed(master: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &p in parts {
        h = splitmix64(h.wrapping_add(GOLDEN_GAMMA).wrapping_add(p));
    }
    h
}

/// Purpose tags for the seed ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedPurpose {
    Data = 0x6461_7461,
    Mcmc = 0x6d63_6d63,
    XQuad = 0x7871_7561,
    PriorVolume = 0x7072_766f,
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut values = vec![1e16, 1.0, -1e16];
        values.extend(std::iter::repeat(1e-3).take(1000));
        let s = compensated_sum(values.iter().copied());
        assert!((s - 2.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn mean_se_matches_hand_values() {
        let m = MeanSe::from_values(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        // sd = sqrt(5/3), se = sd / 2
        assert!((m.se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(MeanSe::from_values(&[7.0]).se, 0.0);
    }

    #[test]
    fn seed_mixing_separates_streams() {
        let a = mix_seed(42, &[0, 1, SeedPurpose::Data as u64]);
        let b = mix_seed(42, &[1, 0, SeedPurpose::Data as u64]);
        let c = mix_seed(42, &[0, 1, SeedPurpose::Mcmc as u64]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, mix_seed(42, &[0, 1, SeedPurpose::Data as u64]));
    }

    #[test]
    fn seventeen_digit_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
