//! The birational invariants: `λ` and `m` exactly from normal-crossing chart
//! data, `λ̂` from the scaling of the prior volume `Prior{K ≤ t}`, `ν̂` from
//! the mean functional variance, and `(λ̂, ν̂)` from the scaled error curves.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, PopulationK, TrueProcess};
use crate::numeric::MeanSe;
use crate::posterior::XQuadrature;

/// One local coordinate after resolution: `K = u^{2k}`, prior Jacobian
/// `∝ |u^h|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chart {
    pub k: Vec<u32>,
    pub h: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChartSet {
    pub charts: Vec<Chart>,
}

impl ChartSet {
    pub fn new(charts: Vec<Chart>) -> Result<Self> {
        let cs = ChartSet { charts };
        cs.validate()?;
        Ok(cs)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cs: ChartSet = serde_json::from_str(text)?;
        cs.validate()?;
        Ok(cs)
    }

    pub fn validate(&self) -> Result<()> {
        let d = match self.charts.first() {
            Some(c) => c.k.len(),
            None => return Err(Error::invalid("chart set is empty")),
        };
        for (a, c) in self.charts.iter().enumerate() {
            if c.k.is_empty() || c.k.len() != d || c.h.len() != d {
                return Err(Error::invalid(format!(
                    "chart {a}: k and h must both have length {d}"
                )));
            }
            if c.k.iter().all(|k| *k == 0) {
                return Err(Error::invalid(format!(
                    "chart {a}: all k_j = 0, K does not vanish there"
                )));
            }
        }
        Ok(())
    }

    /// Reference resolution of `K ∝ |w|²` in `d` dimensions: the blow-up
    /// chart `w₁ = u₁, wⱼ = u₁uⱼ` gives `k = e₁`, `h = (d−1)e₁`, hence
    /// `λ = d/2`, `m = 1`.
    pub fn quadratic_reference(d: usize) -> Self {
        let mut k = vec![0; d];
        let mut h = vec![0; d];
        k[0] = 1;
        h[0] = d as u32 - 1;
        ChartSet {
            charts: vec![Chart { k, h }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactRlct {
    pub lambda: Ratio<u64>,
    pub multiplicity: usize,
}

/// `λ = min_α min_j (h_j+1)/(2k_j)` and `m = max_α #{j attaining λ}`, in
/// exact rational arithmetic with `k_j = 0` treated as `+∞`.
pub fn rlct_from_charts(cs: &ChartSet) -> Result<ExactRlct> {
    cs.validate()?;
    let ratios = |c: &Chart| -> Vec<Option<Ratio<u64>>> {
        c.k.iter()
            .zip(&c.h)
            .map(|(&k, &h)| (k > 0).then(|| Ratio::new(h as u64 + 1, 2 * k as u64)))
            .collect()
    };
    let lambda = cs
        .charts
        .iter()
        .flat_map(|c| ratios(c).into_iter().flatten())
        .min()
        .expect("validated charts have some k_j >= 1");
    let multiplicity = cs
        .charts
        .iter()
        .map(|c| ratios(c).into_iter().filter(|r| *r == Some(lambda)).count())
        .max()
        .unwrap_or(0);
    Ok(ExactRlct { lambda, multiplicity })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ChartExact,
    VolumeFit,
    ErrorInversion,
    VLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantEstimate {
    pub method: Method,
    pub lambda: Option<f64>,
    pub lambda_se: Option<f64>,
    pub multiplicity: Option<usize>,
    pub nu: Option<f64>,
    pub nu_se: Option<f64>,
    /// False when the estimate contradicts `λ > 0`, `ν ≥ 0`.
    pub consistent: bool,
}

impl InvariantEstimate {
    pub fn from_exact(e: ExactRlct) -> Self {
        InvariantEstimate {
            method: Method::ChartExact,
            lambda: Some(*e.lambda.numer() as f64 / *e.lambda.denom() as f64),
            lambda_se: None,
            multiplicity: Some(e.multiplicity),
            nu: None,
            nu_se: None,
            consistent: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub t: f64,
    pub v: f64,
    /// Prior draws with `K ≤ t`; `None` for analytic profiles.
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeProfile {
    pub points: Vec<ProfilePoint>,
    pub n_samples: Option<usize>,
    pub median_k: Option<f64>,
    pub warning: Option<String>,
}

impl VolumeProfile {
    /// Profile from an analytic `V(t)`, for testing the fit.
    pub fn synthetic(t_grid: &[f64], v: impl Fn(f64) -> f64) -> Self {
        VolumeProfile {
            points: t_grid.iter().map(|&t| ProfilePoint { t, v: v(t), count: None }).collect(),
            n_samples: None,
            median_k: None,
            warning: None,
        }
    }
}

pub const DEFAULT_T_POINTS: usize = 12;
pub const MIN_PRIOR_SAMPLES: usize = 100_000;

/// `points` logarithmic values from `1e-1·scale` down to `1e-5·scale`.
pub fn default_t_grid(scale: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| scale * 10f64.powf(-1.0 - 4.0 * i as f64 / (points - 1) as f64))
        .collect()
}

/// Fraction of prior draws with `K(w) ≤ t` for each `t`, all on one shared
/// set of draws. `t_grid = None` uses [`default_t_grid`] scaled by the
/// median of `K` over the draws.
pub fn volume_profile(
    model: &ModelSpec,
    truth: &TrueProcess,
    xq: &XQuadrature,
    t_grid: Option<&[f64]>,
    n_prior_samples: usize,
    seed: u64,
) -> Result<VolumeProfile> {
    if n_prior_samples < MIN_PRIOR_SAMPLES {
        return Err(Error::invalid(format!(
            "volume profile needs at least {MIN_PRIOR_SAMPLES} prior draws"
        )));
    }
    if let Some(ts) = t_grid {
        if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::invalid("t grid must hold positive finite values"));
        }
        if ts.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::invalid("t grid must be strictly decreasing"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..n_prior_samples).map(|_| model.prior.sample(&mut rng)).collect();
    let kfun = PopulationK::new(model, truth, xq);
    let mut ks: Vec<f64> = draws.par_iter().map(|w| kfun.eval(w)).collect();
    ks.sort_by(f64::total_cmp);
    let median = ks[ks.len() / 2];
    let grid = match t_grid {
        Some(ts) => ts.to_vec(),
        None => default_t_grid(median, DEFAULT_T_POINTS),
    };
    let n = ks.len() as f64;
    let points: Vec<ProfilePoint> = grid
        .iter()
        .map(|&t| {
            let count = ks.partition_point(|k| *k <= t);
            ProfilePoint {
                t,
                v: count as f64 / n,
                count: Some(count),
            }
        })
        .collect();
    let smallest = points
        .iter()
        .min_by(|a, b| a.t.total_cmp(&b.t))
        .and_then(|p| p.count)
        .unwrap_or(0);
    let warning = (smallest < 100).then(|| {
        let msg = format!("only {smallest} prior draws fall below the smallest t; the fit is unreliable");
        log::warn!("{msg}");
        msg
    });
    Ok(VolumeProfile {
        points,
        n_samples: Some(ks.len()),
        median_k: Some(median),
        warning,
    })
}

/// Minimum draws below `t` for a Monte Carlo point to enter the fit.
pub const MIN_FIT_COUNT: usize = 10;

/// Weighted least squares of `log V̂(t) − (m−1)·log log(1/t)` on
/// `[1, log t]` for each `m ∈ {1..d}`; returns the `m` with the smallest
/// residual and its slope as `λ̂`.
///
/// Monte Carlo points get the delta-method weight `count/(1 − V̂)`.
pub fn rlct_volume_fit(profile: &VolumeProfile, d: usize) -> Result<InvariantEstimate> {
    let usable: Vec<(f64, f64, f64)> = profile
        .points
        .iter()
        .filter(|p| p.t > 0.0 && p.t < 1.0 && p.v > 0.0 && p.v < 1.0)
        .filter(|p| p.count.is_none_or(|c| c >= MIN_FIT_COUNT))
        .map(|p| {
            let weight = p.count.map_or(1.0, |c| c as f64 / (1.0 - p.v));
            (p.t, p.v, weight)
        })
        .collect();
    if usable.len() < 8 {
        return Err(Error::invalid(format!(
            "volume fit needs at least 8 usable points, got {}",
            usable.len()
        )));
    }
    let (tmin, tmax) = usable
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    if (tmax / tmin).log10() < 2.0 {
        return Err(Error::IllConditioned(format!(
            "t range spans {:.2} decades, need at least 2",
            (tmax / tmin).log10()
        )));
    }

    let mut best: Option<(f64, usize, f64, f64)> = None;
    for m in 1..=d.max(1) {
        let pts: Vec<(f64, f64, f64)> = usable
            .iter()
            .map(|&(t, v, w)| (t.ln(), v.ln() - (m as f64 - 1.0) * (1.0 / t).ln().ln(), w))
            .collect();
        let (slope, se, ssr) = weighted_line(&pts);
        let better = match best {
            None => true,
            Some((r, ..)) => ssr < r * (1.0 - 1e-12) - 1e-300,
        };
        if better {
            best = Some((ssr, m, slope, se));
        }
    }
    let (_, m, slope, se) = best.expect("at least one candidate");
    if !(slope > 0.0) {
        return Err(Error::IllConditioned(format!("fitted λ = {slope} is not positive")));
    }
    Ok(InvariantEstimate {
        method: Method::VolumeFit,
        lambda: Some(slope),
        lambda_se: Some(se),
        multiplicity: Some(m),
        nu: None,
        nu_se: None,
        consistent: true,
    })
}

/// Weighted fit `y ≈ a + b x`; returns `(b, se(b), weighted SSR)`.
fn weighted_line(pts: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ssr: f64 = pts.iter().map(|p| p.2 * (p.1 - a - b * p.0).powi(2)).sum();
    let sigma2 = ssr / (pts.len() as f64 - 2.0);
    (b, (sigma2 / sxx).sqrt(), ssr)
}

/// `ν̂ = β·mean(V)/2`, SE scaled alike.
pub fn nu_from_v(mean_v: f64, beta: f64, se_v: f64) -> InvariantEstimate {
    let nu = beta * mean_v / 2.0;
    InvariantEstimate {
        method: Method::VLimit,
        lambda: None,
        lambda_se: None,
        multiplicity: None,
        nu: Some(nu),
        nu_se: Some(beta * se_v / 2.0),
        consistent: nu >= 0.0,
    }
}

/// Inverts `g = (λ−ν)/β + νσ²`, `t = (λ−ν)/β − νσ²` for
/// `g = n(E[G]−S)`, `t = n(E[T]−S)`:
/// `ν = (g − t)/(2σ²)`, `λ = ν + β(g + t)/2`. SEs follow the linear map,
/// using the covariance of the two means (`cov_gt`, 0 if unpaired).
pub fn invariants_from_errors(g: MeanSe, t: MeanSe, cov_gt: f64, beta: f64, sigma: f64) -> InvariantEstimate {
    let s2 = sigma * sigma;
    let nu = (g.mean - t.mean) / (2.0 * s2);
    let lambda = nu + beta * (g.mean + t.mean) / 2.0;
    let lin_var = |a: f64, b: f64| (a * a * g.se * g.se + b * b * t.se * t.se + 2.0 * a * b * cov_gt).max(0.0);
    let nu_se = lin_var(1.0 / (2.0 * s2), -1.0 / (2.0 * s2)).sqrt();
    let lambda_se = lin_var(1.0 / (2.0 * s2) + beta / 2.0, -1.0 / (2.0 * s2) + beta / 2.0).sqrt();
    let consistent = nu >= 0.0 && lambda > 0.0;
    if !consistent {
        log::info!("error inversion gives λ = {lambda}, ν = {nu}: inconsistent with theory at this n");
    }
    InvariantEstimate {
        method: Method::ErrorInversion,
        lambda: Some(lambda),
        lambda_se: Some(lambda_se),
        multiplicity: None,
        nu: Some(nu),
        nu_se: Some(nu_se),
        consistent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{catalog, PriorKind};

    fn chart(k: &[u32], h: &[u32]) -> Chart {
        Chart {
            k: k.to_vec(),
            h: h.to_vec(),
        }
    }

    #[test]
    fn chart_examples() {
        let half = Ratio::new(1, 2);
        let one = ChartSet::new(vec![chart(&[1, 0], &[0, 0])]).unwrap();
        assert_eq!(rlct_from_charts(&one).unwrap(), ExactRlct { lambda: half, multiplicity: 1 });
        let two = ChartSet::new(vec![chart(&[1, 1], &[0, 0])]).unwrap();
        assert_eq!(rlct_from_charts(&two).unwrap(), ExactRlct { lambda: half, multiplicity: 2 });
        let multi = ChartSet::new(vec![chart(&[2], &[3]), chart(&[1], &[0])]).unwrap();
        assert_eq!(rlct_from_charts(&multi).unwrap(), ExactRlct { lambda: half, multiplicity: 1 });
    }

    #[test]
    fn quadratic_reference_gives_half_dimension() {
        for d in 1..6 {
            let e = rlct_from_charts(&ChartSet::quadratic_reference(d)).unwrap();
            assert_eq!(e.lambda, Ratio::new(d as u64, 2));
            assert_eq!(e.multiplicity, 1);
        }
    }

    #[test]
    fn invalid_charts() {
        assert!(ChartSet::new(vec![chart(&[0, 0], &[1, 1])]).is_err());
        assert!(ChartSet::new(vec![chart(&[1], &[0, 0])]).is_err());
        assert!(ChartSet::new(vec![]).is_err());
        assert!(ChartSet::from_json(r#"[{"k":[1,0],"h":[0,0]},{"k":[1],"h":[0]}]"#).is_err());
        let cs = ChartSet::from_json(r#"[{"k":[1,2],"h":[0,1]}]"#).unwrap();
        assert_eq!(rlct_from_charts(&cs).unwrap().lambda, Ratio::new(1, 2));
    }

    #[test]
    fn synthetic_sqrt_profile() {
        let grid = default_t_grid(1e-1, 12);
        let p = VolumeProfile::synthetic(&grid, |t| (6.0 * t).sqrt().min(1.0));
        let e = rlct_volume_fit(&p, 2).unwrap();
        assert_eq!(e.multiplicity, Some(1));
        assert!((e.lambda.unwrap() - 0.5).abs() < 0.02, "{e:?}");
    }

    #[test]
    fn synthetic_log_corrected_profile() {
        let grid = default_t_grid(1e-1, 12);
        let p = VolumeProfile::synthetic(&grid, |t| t * (1.0 / t).ln());
        let e = rlct_volume_fit(&p, 3).unwrap();
        assert_eq!(e.multiplicity, Some(2));
        assert!((e.lambda.unwrap() - 1.0).abs() < 0.05, "{e:?}");
    }

    #[test]
    fn narrow_profiles_are_rejected() {
        let grid: Vec<f64> = (0..10).map(|i| 1e-2 * 0.8f64.powi(i)).collect();
        let p = VolumeProfile::synthetic(&grid, |t| t.sqrt());
        assert!(matches!(rlct_volume_fit(&p, 1), Err(Error::IllConditioned(_))));
        let p = VolumeProfile::synthetic(&grid[..5], |t| t.sqrt());
        assert!(rlct_volume_fit(&p, 1).is_err());
    }

    #[test]
    fn linear_one_profile_matches_closed_form() {
        let spec = catalog::model_spec("linear-1", PriorKind::Uniform).unwrap();
        let truth = catalog::truth(&spec, 0.1, None).unwrap();
        let xq = XQuadrature::iid(&truth, 10_000, 1).unwrap();
        let n = 100_000;
        let profile = volume_profile(&spec, &truth, &xq, None, n, 2).unwrap();
        // K(w) = c·w² with c = mean of x²/2 over the nodes (≈ 1/6)
        let c = xq.flat().iter().map(|x| x * x).sum::<f64>() / xq.len() as f64 / 2.0;
        assert!((c - 1.0 / 6.0).abs() < 0.005);
        for p in &profile.points {
            let exact = (p.t / c).sqrt().min(1.0);
            let band = 3.0 * (exact * (1.0 - exact) / n as f64).sqrt();
            assert!((p.v - exact).abs() <= band + 1e-12, "{p:?} vs {exact}");
        }
        assert!(profile.points.windows(2).all(|w| w[0].v >= w[1].v));
        let e = rlct_volume_fit(&profile, 1).unwrap();
        assert!((e.lambda.unwrap() - 0.5).abs() < 0.05, "{e:?}");

        let full = volume_profile(&spec, &truth, &xq, Some(&[10.0, 1.0]), n, 2).unwrap();
        assert_eq!(full.points[0].v, 1.0);
        assert!(volume_profile(&spec, &truth, &xq, Some(&[1.0, 2.0]), n, 2).is_err());
        assert!(volume_profile(&spec, &truth, &xq, None, 1000, 2).is_err());
    }

    #[test]
    fn nu_and_inversion_arithmetic() {
        assert_eq!(nu_from_v(2.0, 1.0, 0.1).nu, Some(1.0));
        assert_eq!(nu_from_v(1.0, 2.0, 0.1).nu, Some(1.0));
        let ms = |m| MeanSe { mean: m, se: 0.0, count: 10 };
        let e = invariants_from_errors(ms(1.0), ms(-1.0), 0.0, 1.0, 1.0);
        assert_eq!((e.lambda, e.nu), (Some(1.0), Some(1.0)));
        let e = invariants_from_errors(ms(0.3), ms(0.3), 0.0, 2.0, 0.5);
        assert_eq!(e.nu, Some(0.0));
        assert!((e.lambda.unwrap() - 0.6).abs() < 1e-15);
        let bad = invariants_from_errors(ms(-1.0), ms(1.0), 0.0, 1.0, 1.0);
        assert!(!bad.consistent);
    }
}
