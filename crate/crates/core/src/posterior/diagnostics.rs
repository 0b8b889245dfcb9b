use serde::{Deserialize, Serialize};

/// Convergence summary attached to MCMC output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub acceptance_rate: Vec<f64>,
    pub effective_sample_size: Vec<f64>,
    pub rhat: Vec<f64>,
    pub n_chains: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub converged: bool,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NAN, f64::max)
    }
    pub fn min_ess(&self) -> f64 {
        self.effective_sample_size.iter().copied().fold(f64::NAN, f64::min)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-chain potential scale reduction: each chain is halved and the
/// between/within variance ratio is taken over the `2·chains` halves.
/// Returns 1 for constant input.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect();
    let n = halves[0].len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| var(h)).sum::<f64>() / halves.len() as f64;
    let b = n * var(&means);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// estimator on the combined autocorrelation.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let total = (m * n) as f64;
    let centred: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mu = mean(&c[..n]);
            c[..n].iter().map(|v| v - mu).collect()
        })
        .collect();
    let autocov = |lag: usize| -> f64 {
        centred
            .iter()
            .map(|c| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let w = chains.iter().map(|c| var(&c[..n])).sum::<f64>() / m as f64;
    let b_over_n = if m > 1 { var(&chain_means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return total;
    }
    let rho = |lag: usize| 1.0 - (w - autocov(lag)) / var_plus;
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    total / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                x = phi * x + e;
                x
            })
            .collect()
    }

    #[test]
    fn iid_chains_have_rhat_near_one_and_full_ess() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| ar1(0.0, 5000, s)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        assert!((split_rhat(&refs) - 1.0).abs() < 0.01);
        let ess = effective_sample_size(&refs);
        assert!(ess > 15_000.0 && ess < 25_000.0, "{ess}");
    }

    #[test]
    fn ar1_ess_matches_integrated_autocorrelation() {
        // τ = (1 + φ)/(1 − φ) = 9 for φ = 0.8
        let chains: Vec<Vec<f64>> = (0..4).map(|s| ar1(0.8, 20_000, 10 + s)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let ess = effective_sample_size(&refs);
        let expected = 80_000.0 / 9.0;
        assert!((ess / expected - 1.0).abs() < 0.15, "{ess} vs {expected}");
    }

    #[test]
    fn shifted_chains_are_flagged() {
        let mut chains: Vec<Vec<f64>> = (0..4).map(|s| ar1(0.0, 1000, s)).collect();
        chains[0].iter_mut().for_each(|v| *v += 3.0);
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        assert!(split_rhat(&refs) > 1.2);
    }

    #[test]
    fn constant_chains() {
        let c = vec![0.5; 100];
        assert_eq!(split_rhat(&[&c, &c]), 1.0);
    }
}
