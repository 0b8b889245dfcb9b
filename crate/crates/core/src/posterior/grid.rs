//! Deterministic tensor-grid oracle for the Gibbs posterior in `d ≤ 4`.

use serde::{Deserialize, Serialize};

use super::{expectation, GibbsTarget, PosteriorSamples};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points_per_axis: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { points_per_axis: 256 }
    }
}

const LOG_WEIGHT_FLOOR: f64 = -50.0;

/// Midpoint grid over the region's bounding box with weights
/// `exp(−βH + log φ − max)`; nodes outside the region or with negligible
/// weight are dropped.
pub fn grid_posterior(target: &GibbsTarget<'_>, grid: &GridConfig) -> Result<PosteriorSamples> {
    let d = target.model.d();
    if d > 4 {
        return Err(Error::GridDimension(d));
    }
    let p = grid.points_per_axis;
    if p < 16 {
        return Err(Error::invalid("grid needs at least 16 points per axis"));
    }
    let (lo, hi) = target.prior().region().bounding_box();
    let steps: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) / p as f64).collect();
    let total = p.pow(d as u32);
    let mut eval = target.evaluator();
    let mut nodes = Vec::with_capacity(total * d);
    let mut logw = Vec::with_capacity(total);
    let mut w = vec![0.0; d];
    for idx in 0..total {
        let mut rest = idx;
        // first coordinate fastest: runs of atoms share every later
        // coordinate, which point evaluators can exploit
        for j in 0..d {
            w[j] = lo[j] + ((rest % p) as f64 + 0.5) * steps[j];
            rest /= p;
        }
        let lw = eval.log_density(&w);
        if lw > f64::NEG_INFINITY {
            nodes.extend_from_slice(&w);
            logw.push(lw);
        }
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Underflow);
    }
    // atoms below e^LOG_WEIGHT_FLOOR of the largest cannot move any
    // expectation at double precision; dropping them keeps estimation cheap
    let mut kept = Vec::with_capacity(nodes.len());
    let mut weights = Vec::with_capacity(logw.len());
    for (l, w) in logw.iter().zip(nodes.chunks_exact(d)) {
        if l - max > LOG_WEIGHT_FLOOR {
            kept.extend_from_slice(w);
            weights.push((l - max).exp());
        }
    }
    PosteriorSamples::weighted(d, kept, weights, target.beta)
}

/// `∫ f exp(−βH) φ / ∫ exp(−βH) φ` on the tensor grid.
pub fn quadrature_expectation<F>(target: &GibbsTarget<'_>, f: F, grid: &GridConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let atoms = grid_posterior(target, grid)?;
    Ok(expectation(&atoms, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{catalog, PriorKind};

    #[test]
    fn constant_and_beta_zero_cases() {
        let spec = catalog::model_spec("linear-2", PriorKind::Uniform).unwrap();
        let truth = catalog::truth(&spec, 0.1, None).unwrap();
        let data = crate::data::generate(&truth, 50, 1).unwrap();
        let target = GibbsTarget::new(&spec, &data, 1.0).unwrap();
        let g = GridConfig { points_per_axis: 32 };
        assert_eq!(quadrature_expectation(&target, |_| vec![2.5], &g).unwrap(), vec![2.5]);

        // β = 0: plain average over the 16 midpoints of [-1, 1] of w²
        let flat = GibbsTarget::new(&spec, &data, 0.0).unwrap();
        let g16 = GridConfig { points_per_axis: 16 };
        let got = quadrature_expectation(&flat, |w| vec![w[0] * w[0]], &g16).unwrap()[0];
        let plain: f64 = (0..16).map(|i| (-1.0 + (i as f64 + 0.5) / 8.0).powi(2)).sum::<f64>() / 16.0;
        assert!((got - plain).abs() < 1e-15, "{got} {plain}");
    }

    #[test]
    fn rejects_bad_grids() {
        let spec = catalog::model_spec("tanh-3", PriorKind::Uniform).unwrap();
        let target = GibbsTarget::prior_only(&spec);
        assert!(matches!(
            grid_posterior(&target, &GridConfig { points_per_axis: 16 }),
            Err(Error::GridDimension(6))
        ));
        let spec = catalog::model_spec("linear-1", PriorKind::Uniform).unwrap();
        let target = GibbsTarget::prior_only(&spec);
        assert!(grid_posterior(&target, &GridConfig { points_per_axis: 15 }).is_err());
    }
}
