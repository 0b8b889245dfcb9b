//! Per-dataset observables: training error `T`, generalization error `G`,
//! functional variance `V`, the WAIC-style estimate `Ĝ`, the D-statistics and
//! the Stein-identity statistic.
//!
//! All of them are functions of per-point posterior predictive moments, which
//! are computed in one pass over the draws with compensated summation about a
//! reference draw. Models linear in `w` use the posterior mean and covariance
//! of `w` instead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, TrueProcess};
use crate::numeric::{fmt_f64, CompensatedSum};
use crate::posterior::{PosteriorSamples, XQuadrature};

/// Posterior predictive moments at a list of inputs.
#[derive(Debug, Clone)]
pub struct PredictiveMoments {
    n_out: usize,
    /// `E_w r(xᵢ, w)`, row-major `points × N`.
    pub mean_r: Vec<f64>,
    /// `Σₖ Var_w r_k(xᵢ, w)` per point.
    pub variance: Vec<f64>,
    /// `E_w |r(xᵢ, w) − r₀(xᵢ)|²` per point (only when `r₀` was supplied).
    pub mean_sq_f: Option<Vec<f64>>,
}

impl PredictiveMoments {
    pub fn points(&self) -> usize {
        self.variance.len()
    }
    pub fn mean(&self, i: usize) -> &[f64] {
        &self.mean_r[i * self.n_out..(i + 1) * self.n_out]
    }
}

const POINT_BLOCK: usize = 256;
const FLUSH_EVERY: usize = 32;

/// Moments of `r(x, w)` under the posterior at every row of `xs`. With
/// `r0s = Some(..)` also accumulates `E_w|f|²` for `f = r − r₀`.
pub fn predictive_moments(
    samples: &PosteriorSamples,
    model: &ModelSpec,
    xs: &[f64],
    r0s: Option<&[f64]>,
) -> PredictiveMoments {
    let m = model.m_in();
    let n_out = model.n_out();
    let d = model.d();
    let points = xs.len() / m;
    let mut phi = vec![0.0; n_out * d];
    let linear = points > 0 && model.model.linear_features(&xs[..m], &mut phi);
    if linear {
        return linear_moments(samples, model, xs, r0s);
    }

    // Blocks of points are independent; within a block the draws are swept
    // in order so the model's point evaluator can reuse work across them.
    let blocks: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..points.div_ceil(POINT_BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * POINT_BLOCK;
            let hi = (lo + POINT_BLOCK).min(points);
            let len = hi - lo;
            let mut eval = model.model.point_evaluator(&xs[lo * m..hi * m]);
            let r0 = r0s.map(|r| &r[lo * n_out..hi * n_out]);
            let mut reference = vec![0.0; len * n_out];
            eval.eval_all(samples.draw(0), &mut reference);
            let mut out = vec![0.0; len * n_out];
            let mut s1 = vec![CompensatedSum::new(); len * n_out];
            let mut s2 = vec![CompensatedSum::new(); len * n_out];
            let mut sf = vec![CompensatedSum::new(); len];
            // short plain partial sums, flushed into the compensated ones
            let mut p1 = vec![0.0; len * n_out];
            let mut p2 = vec![0.0; len * n_out];
            let mut pf = vec![0.0; len];
            let flush = |p1: &mut [f64], p2: &mut [f64], pf: &mut [f64], s1: &mut [CompensatedSum], s2: &mut [CompensatedSum], sf: &mut [CompensatedSum]| {
                for (p, s) in p1.iter_mut().zip(s1).chain(p2.iter_mut().zip(s2)).chain(pf.iter_mut().zip(sf)) {
                    s.add(*p);
                    *p = 0.0;
                }
            };
            for (k, w) in samples.iter().enumerate() {
                let p = samples.weight(k);
                eval.eval_all(w, &mut out);
                for ((a, s), (t1, t2)) in out.iter().zip(&reference).zip(p1.iter_mut().zip(p2.iter_mut())) {
                    let dv = a - s;
                    *t1 += p * dv;
                    *t2 += p * dv * dv;
                }
                if let Some(r0) = r0 {
                    for (i, acc) in pf.iter_mut().enumerate() {
                        let sq: f64 = out[i * n_out..(i + 1) * n_out]
                            .iter()
                            .zip(&r0[i * n_out..(i + 1) * n_out])
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        *acc += p * sq;
                    }
                }
                if (k + 1) % FLUSH_EVERY == 0 {
                    flush(&mut p1, &mut p2, &mut pf, &mut s1, &mut s2, &mut sf);
                }
            }
            flush(&mut p1, &mut p2, &mut pf, &mut s1, &mut s2, &mut sf);
            let mut mean = vec![0.0; len * n_out];
            let mut var = vec![0.0; len];
            for i in 0..len {
                for c in 0..n_out {
                    let j = i * n_out + c;
                    let e1 = s1[j].value();
                    mean[j] = reference[j] + e1;
                    var[i] += (s2[j].value() - e1 * e1).max(0.0);
                }
            }
            (mean, var, sf.iter().map(CompensatedSum::value).collect())
        })
        .collect();

    let mut mean_r = Vec::with_capacity(points * n_out);
    let mut variance = Vec::with_capacity(points);
    let mut mean_sq = Vec::with_capacity(points);
    for (mean, var, sq) in blocks {
        mean_r.extend(mean);
        variance.extend(var);
        mean_sq.extend(sq);
    }
    PredictiveMoments {
        n_out,
        mean_r,
        variance,
        mean_sq_f: r0s.map(|_| mean_sq),
    }
}

/// Posterior mean and covariance of `w` (weighted), both about a reference
/// draw for stability.
fn parameter_moments(samples: &PosteriorSamples) -> (Vec<f64>, Vec<f64>) {
    let d = samples.dim();
    let reference = samples.draw(0).to_vec();
    let mut s1 = vec![CompensatedSum::new(); d];
    for (k, w) in samples.iter().enumerate() {
        let p = samples.weight(k);
        for j in 0..d {
            s1[j].add(p * (w[j] - reference[j]));
        }
    }
    let shift: Vec<f64> = s1.iter().map(CompensatedSum::value).collect();
    let mean: Vec<f64> = reference.iter().zip(&shift).map(|(r, s)| r + s).collect();
    let mut s2 = vec![CompensatedSum::new(); d * d];
    let mut dev = vec![0.0; d];
    for (k, w) in samples.iter().enumerate() {
        let p = samples.weight(k);
        for j in 0..d {
            dev[j] = (w[j] - reference[j]) - shift[j];
        }
        for j in 0..d {
            for l in j..d {
                s2[j * d + l].add(p * dev[j] * dev[l]);
            }
        }
    }
    let mut cov = vec![0.0; d * d];
    for j in 0..d {
        for l in j..d {
            cov[j * d + l] = s2[j * d + l].value();
            cov[l * d + j] = cov[j * d + l];
        }
    }
    (mean, cov)
}

fn linear_moments(
    samples: &PosteriorSamples,
    model: &ModelSpec,
    xs: &[f64],
    r0s: Option<&[f64]>,
) -> PredictiveMoments {
    let m = model.m_in();
    let n_out = model.n_out();
    let d = model.d();
    let (mean_w, cov) = parameter_moments(samples);
    let points = xs.len() / m;
    let mut phi = vec![0.0; n_out * d];
    let mut mean_r = Vec::with_capacity(points * n_out);
    let mut variance = Vec::with_capacity(points);
    let mut mean_sq = Vec::with_capacity(points);
    for i in 0..points {
        model.model.linear_features(&xs[i * m..(i + 1) * m], &mut phi);
        let mut var = 0.0;
        let mut sq = 0.0;
        for (c, row) in phi.chunks_exact(d).enumerate() {
            let mu: f64 = row.iter().zip(&mean_w).map(|(a, b)| a * b).sum();
            let mut v = 0.0;
            for j in 0..d {
                v += row[j] * cov[j * d..(j + 1) * d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
            let v = v.max(0.0);
            mean_r.push(mu);
            var += v;
            if let Some(r0) = r0s {
                let f = mu - r0[i * n_out + c];
                sq += f * f + v;
            }
        }
        variance.push(var);
        mean_sq.push(sq);
    }
    PredictiveMoments {
        n_out,
        mean_r,
        variance,
        mean_sq_f: r0s.map(|_| mean_sq),
    }
}

fn r0_at(truth: &TrueProcess, xs: &[f64]) -> Vec<f64> {
    let m = truth.m_in();
    let n_out = truth.n_out();
    let mut out = vec![0.0; xs.len() / m * n_out];
    for (x, o) in xs.chunks_exact(m).zip(out.chunks_exact_mut(n_out)) {
        truth.r0.eval(x, o);
    }
    out
}

/// `T = (1/2n) Σᵢ |Yᵢ − E_w r(Xᵢ, w)|²`.
pub fn training_error(samples: &PosteriorSamples, dataset: &Dataset, model: &ModelSpec) -> f64 {
    let mom = predictive_moments(samples, model, dataset.xs(), None);
    training_error_from(&mom, dataset)
}

fn training_error_from(mom: &PredictiveMoments, dataset: &Dataset) -> f64 {
    let mut acc = CompensatedSum::new();
    for i in 0..dataset.n() {
        let sq: f64 = dataset
            .y(i)
            .iter()
            .zip(mom.mean(i))
            .map(|(y, m)| (y - m) * (y - m))
            .sum();
        acc.add(sq);
    }
    acc.value() / (2.0 * dataset.n() as f64)
}

/// `G = S + ½ E_X |E_w f(X, w)|²` with `E_X` over the quadrature nodes.
pub fn generalization_error(
    samples: &PosteriorSamples,
    truth: &TrueProcess,
    model: &ModelSpec,
    xq: &XQuadrature,
) -> f64 {
    let r0 = r0_at(truth, xq.flat());
    let mom = predictive_moments(samples, model, xq.flat(), None);
    truth.s_value() + 0.5 * mean_sq_bias(&mom, &r0)
}

/// `E_X |E_w r − r₀|²` over the moment points.
fn mean_sq_bias(mom: &PredictiveMoments, r0: &[f64]) -> f64 {
    let acc: CompensatedSum = mom
        .mean_r
        .iter()
        .zip(r0)
        .map(|(m, t)| (m - t) * (m - t))
        .collect();
    acc.value() / mom.points() as f64
}

/// `V = Σᵢ (E_w|r(Xᵢ, w)|² − |E_w r(Xᵢ, w)|²)`.
pub fn functional_variance(samples: &PosteriorSamples, dataset: &Dataset, model: &ModelSpec) -> f64 {
    let mom = predictive_moments(samples, model, dataset.xs(), None);
    mom.variance.iter().copied().collect::<CompensatedSum>().value()
}

/// `V` computed from `f = r − r₀` instead of `r`, via the moments of the
/// shifted function. Equal to [`functional_variance`] up to rounding.
pub fn functional_variance_of_f(
    samples: &PosteriorSamples,
    dataset: &Dataset,
    model: &ModelSpec,
    truth: &TrueProcess,
) -> f64 {
    let r0 = r0_at(truth, dataset.xs());
    let m = model.m_in();
    let n_out = model.n_out();
    let mut total = CompensatedSum::new();
    let mut out = vec![0.0; n_out];
    for i in 0..dataset.n() {
        let x = &dataset.xs()[i * m..(i + 1) * m];
        let t = &r0[i * n_out..(i + 1) * n_out];
        let mut s1 = vec![CompensatedSum::new(); n_out];
        let mut s2 = vec![CompensatedSum::new(); n_out];
        for (k, w) in samples.iter().enumerate() {
            let p = samples.weight(k);
            model.model.eval(x, w, &mut out);
            for c in 0..n_out {
                let f = out[c] - t[c];
                s1[c].add(p * f);
                s2[c].add(p * f * f);
            }
        }
        for c in 0..n_out {
            let e1 = s1[c].value();
            total.add(s2[c].value() - e1 * e1);
        }
    }
    total.value().max(0.0)
}

/// `Ĝ = (1 + 2βV/(nN)) · T`.
pub fn waic_estimate(t: f64, v: f64, n: usize, n_out: usize, beta: f64) -> f64 {
    (1.0 + 2.0 * beta * v / (n as f64 * n_out as f64)) * t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DStatistics {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
}

/// `D1 = n E_w E_X|f|²`, `D2 = n E_X|E_w f|²`, `D3 = Σᵢ E_w|f(Xᵢ)|²`,
/// `D4 = Σᵢ |E_w f(Xᵢ)|²`.
pub fn d_statistics(
    samples: &PosteriorSamples,
    dataset: &Dataset,
    truth: &TrueProcess,
    model: &ModelSpec,
    xq: &XQuadrature,
) -> DStatistics {
    compute(samples, dataset, truth, model, xq).1
}

/// `Σᵢ (Yᵢ − r₀(Xᵢ)) · E_w f(Xᵢ, w)`.
pub fn stein_diagnostic(
    samples: &PosteriorSamples,
    dataset: &Dataset,
    truth: &TrueProcess,
    model: &ModelSpec,
) -> f64 {
    let r0 = r0_at(truth, dataset.xs());
    let mom = predictive_moments(samples, model, dataset.xs(), None);
    stein_from(&mom, dataset, &r0)
}

fn stein_from(mom: &PredictiveMoments, dataset: &Dataset, r0: &[f64]) -> f64 {
    let acc: CompensatedSum = dataset
        .ys()
        .iter()
        .zip(&mom.mean_r)
        .zip(r0)
        .map(|((y, m), t)| (y - t) * (m - t))
        .collect();
    acc.value()
}

struct Observables {
    t: f64,
    g: f64,
    v: f64,
    stein: f64,
}

fn compute(
    samples: &PosteriorSamples,
    dataset: &Dataset,
    truth: &TrueProcess,
    model: &ModelSpec,
    xq: &XQuadrature,
) -> (Observables, DStatistics) {
    let n = dataset.n() as f64;
    let r0_train = r0_at(truth, dataset.xs());
    let train = predictive_moments(samples, model, dataset.xs(), Some(&r0_train));
    let r0_nodes = r0_at(truth, xq.flat());
    let nodes = predictive_moments(samples, model, xq.flat(), Some(&r0_nodes));

    let bias_nodes = mean_sq_bias(&nodes, &r0_nodes);
    let q = nodes.points() as f64;
    let d1 = n * nodes
        .mean_sq_f
        .as_ref()
        .expect("r0 supplied")
        .iter()
        .copied()
        .collect::<CompensatedSum>()
        .value()
        / q;
    let d2 = n * bias_nodes;
    let d3 = train
        .mean_sq_f
        .as_ref()
        .expect("r0 supplied")
        .iter()
        .copied()
        .collect::<CompensatedSum>()
        .value();
    let d4 = mean_sq_bias(&train, &r0_train) * n;
    let obs = Observables {
        t: training_error_from(&train, dataset),
        g: truth.s_value() + 0.5 * bias_nodes,
        v: train.variance.iter().copied().collect::<CompensatedSum>().value(),
        stein: stein_from(&train, dataset, &r0_train),
    };
    (obs, DStatistics { d1, d2, d3, d4 })
}

/// One replication's estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n: usize,
    pub beta: f64,
    pub replication: usize,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "G_hat")]
    pub g_hat: f64,
    #[serde(rename = "D1")]
    pub d1: f64,
    #[serde(rename = "D2")]
    pub d2: f64,
    #[serde(rename = "D3")]
    pub d3: f64,
    #[serde(rename = "D4")]
    pub d4: f64,
    pub stein_lhs: f64,
    /// Dataset seed from the seed ladder.
    pub seed: u64,
    pub converged: bool,
    pub max_rhat: f64,
    pub min_ess: f64,
}

pub const REPORT_COLUMNS: [&str; 17] = [
    "n", "beta", "replication", "T", "G", "V", "S", "G_hat", "D1", "D2", "D3", "D4", "stein_lhs", "seed",
    "converged", "max_rhat", "min_ess",
];

impl ErrorReport {
    /// Computes every observable for one dataset and posterior.
    pub fn compute(
        samples: &PosteriorSamples,
        dataset: &Dataset,
        truth: &TrueProcess,
        model: &ModelSpec,
        xq: &XQuadrature,
        replication: usize,
    ) -> Self {
        let (obs, ds) = compute(samples, dataset, truth, model, xq);
        let n = dataset.n();
        let beta = samples.beta();
        let diag = samples.diagnostics();
        ErrorReport {
            n,
            beta,
            replication,
            t: obs.t,
            g: obs.g,
            v: obs.v,
            s: truth.s_value(),
            g_hat: waic_estimate(obs.t, obs.v, n, model.n_out(), beta),
            d1: ds.d1,
            d2: ds.d2,
            d3: ds.d3,
            d4: ds.d4,
            stein_lhs: obs.stein,
            seed: dataset.seed(),
            converged: samples.converged(),
            max_rhat: diag.map_or(f64::NAN, |d| d.max_rhat()),
            min_ess: diag.map_or(f64::NAN, |d| d.min_ess()),
        }
    }

    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_f64(self.beta),
            self.replication.to_string(),
            fmt_f64(self.t),
            fmt_f64(self.g),
            fmt_f64(self.v),
            fmt_f64(self.s),
            fmt_f64(self.g_hat),
            fmt_f64(self.d1),
            fmt_f64(self.d2),
            fmt_f64(self.d3),
            fmt_f64(self.d4),
            fmt_f64(self.stein_lhs),
            self.seed.to_string(),
            self.converged.to_string(),
            fmt_f64(self.max_rhat),
            fmt_f64(self.min_ess),
        ]
    }

    /// Parses one row given the header; a missing column is a schema error
    /// naming it.
    pub fn from_record(headers: &csv::StringRecord, rec: &csv::StringRecord) -> Result<Self> {
        let get = |name: &str| -> Result<&str> {
            let idx = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
            Ok(rec.get(idx).unwrap_or("").trim())
        };
        let num = |name: &str| -> Result<f64> {
            let s = get(name)?;
            s.parse()
                .map_err(|_| Error::invalid(format!("column `{name}`: bad number `{s}`")))
        };
        let int = |name: &str| -> Result<u64> {
            let s = get(name)?;
            s.parse()
                .map_err(|_| Error::invalid(format!("column `{name}`: bad integer `{s}`")))
        };
        Ok(ErrorReport {
            n: int("n")? as usize,
            beta: num("beta")?,
            replication: int("replication")? as usize,
            t: num("T")?,
            g: num("G")?,
            v: num("V")?,
            s: num("S")?,
            g_hat: num("G_hat")?,
            d1: num("D1")?,
            d2: num("D2")?,
            d3: num("D3")?,
            d4: num("D4")?,
            stein_lhs: num("stein_lhs")?,
            seed: int("seed")?,
            converged: match get("converged")? {
                "true" => true,
                "false" => false,
                other => return Err(Error::invalid(format!("column `converged`: bad flag `{other}`"))),
            },
            max_rhat: num("max_rhat")?,
            min_ess: num("min_ess")?,
        })
    }

    /// Structural identities that hold for every replication; returns the
    /// first violated one.
    pub fn check_identities(&self, n_out: usize) -> std::result::Result<(), String> {
        let close = |a: f64, b: f64| (a - b).abs() <= IDENTITY_TOL * a.abs().max(b.abs()).max(1.0);
        if !(self.v >= 0.0) {
            return Err(format!("V = {} < 0", self.v));
        }
        if !(self.t >= 0.0) {
            return Err(format!("T = {} < 0", self.t));
        }
        if !(self.g >= self.s) {
            return Err(format!("G = {} < S = {}", self.g, self.s));
        }
        if !close(self.v, self.d3 - self.d4) {
            return Err(format!("V = {} but D3 - D4 = {}", self.v, self.d3 - self.d4));
        }
        if !close(2.0 * self.n as f64 * (self.g - self.s), self.d2) {
            return Err(format!("2n(G - S) = {} but D2 = {}", 2.0 * self.n as f64 * (self.g - self.s), self.d2));
        }
        if self.g_hat != waic_estimate(self.t, self.v, self.n, n_out, self.beta) {
            return Err(format!("G_hat = {} does not match the formula", self.g_hat));
        }
        if !(0.0 <= self.d4 && self.d4 <= self.d3 * (1.0 + IDENTITY_TOL) && 0.0 <= self.d2 && self.d2 <= self.d1 * (1.0 + IDENTITY_TOL)) {
            return Err("D-statistics ordering violated".into());
        }
        Ok(())
    }
}

/// Relative tolerance for the exact per-replication identities.
pub const IDENTITY_TOL: f64 = 1e-10;
