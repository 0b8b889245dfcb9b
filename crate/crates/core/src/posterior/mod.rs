//! The Gibbs posterior `∝ exp(−βH(w)) φ(w)` and posterior expectations,
//! computed either from MCMC draws or from a weighted tensor grid.

mod diagnostics;
mod grid;
mod mcmc;
mod xquad;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub use diagnostics::{effective_sample_size, split_rhat, Diagnostics};
pub use grid::{grid_posterior, quadrature_expectation, GridConfig};
pub use mcmc::{sample_posterior, McmcConfig, TemperingConfig};
pub use xquad::{XQuadScheme, XQuadrature};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Prior, SquareErrorEval};
use crate::numeric::{fmt_f64, CompensatedSum};

/// Unnormalized log posterior `−β H(w) + log φ(w)`.
#[derive(Debug, Clone, Copy)]
pub struct GibbsTarget<'a> {
    pub model: &'a ModelSpec,
    dataset: Option<&'a Dataset>,
    pub beta: f64,
}

impl<'a> GibbsTarget<'a> {
    pub fn new(model: &'a ModelSpec, dataset: &'a Dataset, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::invalid("beta must be finite and >= 0"));
        }
        if dataset.m_in() != model.m_in() || dataset.n_out() != model.n_out() {
            return Err(Error::invalid("dataset dimensions do not match the model"));
        }
        Ok(GibbsTarget {
            model,
            dataset: Some(dataset),
            beta,
        })
    }

    /// Target with `βH ≡ 0`, i.e. the prior itself. Meant for tests of the
    /// samplers.
    pub fn prior_only(model: &'a ModelSpec) -> Self {
        GibbsTarget {
            model,
            dataset: None,
            beta: 0.0,
        }
    }

    pub fn dataset(&self) -> Option<&'a Dataset> {
        self.dataset
    }

    pub fn prior(&self) -> &'a Prior {
        &self.model.prior
    }

    /// `−∞` outside the region, `−βH(w) + log φ(w)` inside.
    pub fn log_unnormalized(&self, w: &[f64]) -> f64 {
        self.evaluator().log_density(w)
    }

    /// Stateful evaluator reusing the model's fast `H` path.
    pub fn evaluator(&self) -> TargetEval<'a> {
        TargetEval {
            prior: &self.model.prior,
            beta: self.beta,
            h: self
                .dataset
                .map(|d| self.model.model.square_error_evaluator(d.xs(), d.ys())),
        }
    }
}

pub struct TargetEval<'a> {
    prior: &'a Prior,
    beta: f64,
    h: Option<Box<dyn SquareErrorEval + 'a>>,
}

impl TargetEval<'_> {
    /// `(log φ(w), H(w))`, with `H = 0` for prior-only targets and
    /// `log φ = −∞` outside the region (H is then not evaluated).
    pub fn parts(&mut self, w: &[f64]) -> (f64, f64) {
        let lp = self.prior.log_density(w);
        if lp == f64::NEG_INFINITY {
            return (lp, f64::INFINITY);
        }
        let h = self.h.as_mut().map_or(0.0, |e| e.square_error(w));
        (lp, h)
    }

    pub fn log_density(&mut self, w: &[f64]) -> f64 {
        let (lp, h) = self.parts(w);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp - self.beta * h
    }
}

/// Draws (optionally weighted) representing the Gibbs posterior.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    dim: usize,
    draws: Vec<f64>,
    weights: Option<Vec<f64>>,
    beta: f64,
    diagnostics: Option<Diagnostics>,
}

impl PosteriorSamples {
    /// Equally weighted draws, row-major `R × d`.
    pub fn from_draws(dim: usize, draws: Vec<f64>, beta: f64) -> Result<Self> {
        if dim == 0 || draws.is_empty() || draws.len() % dim != 0 {
            return Err(Error::invalid("draws must be a nonempty R × d matrix"));
        }
        Ok(PosteriorSamples {
            dim,
            draws,
            weights: None,
            beta,
            diagnostics: None,
        })
    }

    /// Degenerate posterior concentrated at `w`.
    pub fn point_mass(w: &[f64], beta: f64) -> Self {
        PosteriorSamples {
            dim: w.len(),
            draws: w.to_vec(),
            weights: None,
            beta,
            diagnostics: None,
        }
    }

    /// Weighted atoms; weights are normalized to sum to one and zero-weight
    /// atoms are dropped.
    pub fn weighted(dim: usize, draws: Vec<f64>, weights: Vec<f64>, beta: f64) -> Result<Self> {
        if dim == 0 || draws.len() != weights.len() * dim || weights.is_empty() {
            return Err(Error::invalid("weights must match the number of atoms"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().copied().collect::<CompensatedSum>().value();
        if !(total > 0.0) {
            return Err(Error::Underflow);
        }
        let mut kept_draws = Vec::with_capacity(draws.len());
        let mut kept = Vec::with_capacity(weights.len());
        for (w, atom) in weights.iter().zip(draws.chunks_exact(dim)) {
            if *w > 0.0 {
                kept.push(w / total);
                kept_draws.extend_from_slice(atom);
            }
        }
        Ok(PosteriorSamples {
            dim,
            draws: kept_draws,
            weights: Some(kept),
            beta,
            diagnostics: None,
        })
    }

    pub(crate) fn with_diagnostics(mut self, diagnostics: Diagnostics) -> Self {
        self.diagnostics = Some(diagnostics);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.draws.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn draws(&self) -> &[f64] {
        &self.draws
    }
    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }
    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.draws.chunks_exact(self.dim)
    }
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }
    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }
    pub fn diagnostics(&self) -> Option<&Diagnostics> {
        self.diagnostics.as_ref()
    }
    pub fn converged(&self) -> bool {
        self.diagnostics.as_ref().is_none_or(|d| d.converged)
    }

    /// Writes `w_1..w_d, chain, iteration` (and `weight` for weighted atoms).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = csv::Writer::from_writer(BufWriter::new(file));
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("w_{j}")).collect();
        header.extend(["chain".to_string(), "iteration".to_string()]);
        if self.weights.is_some() {
            header.push("weight".into());
        }
        out.write_record(&header)?;
        let (per_chain, burn_in, thinning) = self
            .diagnostics
            .as_ref()
            .map_or((self.len(), 0, 1), |d| (self.len() / d.n_chains, d.burn_in, d.thinning));
        for (i, w) in self.iter().enumerate() {
            let mut row: Vec<String> = w.iter().map(|v| fmt_f64(*v)).collect();
            row.push((i / per_chain).to_string());
            row.push((burn_in + (i % per_chain + 1) * thinning - 1).to_string());
            if let Some(ws) = &self.weights {
                row.push(fmt_f64(ws[i]));
            }
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Posterior mean of a vector-valued `f`.
///
/// Computed as `f(w₁) + Σᵢ pᵢ (f(wᵢ) − f(w₁))` with compensated sums, so a
/// constant function returns its value exactly.
pub fn expectation<F>(samples: &PosteriorSamples, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let reference = f(samples.draw(0));
    let mut acc = vec![CompensatedSum::new(); reference.len()];
    for (i, w) in samples.iter().enumerate() {
        let p = samples.weight(i);
        for (a, (v, r)) in acc.iter_mut().zip(f(w).iter().zip(&reference)) {
            a.add(p * (v - r));
        }
    }
    reference.iter().zip(&acc).map(|(r, a)| r + a.value()).collect()
}

/// `(E[f], E[f²] − E[f]²)` per component, the latter computed about the
/// mean so it is never negative beyond rounding.
pub fn mean_and_variance<F>(samples: &PosteriorSamples, f: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mean = expectation(samples, &f);
    let mut acc = vec![CompensatedSum::new(); mean.len()];
    for (i, w) in samples.iter().enumerate() {
        let p = samples.weight(i);
        for (a, (v, m)) in acc.iter_mut().zip(f(w).iter().zip(&mean)) {
            a.add(p * (v - m) * (v - m));
        }
    }
    (mean, acc.iter().map(|a| a.value().max(0.0)).collect())
}
