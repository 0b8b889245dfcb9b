//! Regression model families, parameter regions, priors, the data-generating
//! truth, and the two scalar functionals built from them: the empirical
//! square error `H(w)` and the population half mean-squared deviation `K(w)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::posterior::XQuadrature;

/// A parameterized regression family `r(x, w)`.
///
/// Implementations must be deterministic and finite on their parameter
/// region and on the support of the input density they are paired with.
pub trait RegressionModel: Send + Sync + fmt::Debug {
    fn family(&self) -> &str;
    /// Parameter dimension `d`.
    fn dim(&self) -> usize;
    /// Input dimension `M`.
    fn input_dim(&self) -> usize;
    /// Output dimension `N`.
    fn output_dim(&self) -> usize;

    fn eval(&self, x: &[f64], w: &[f64], out: &mut [f64]);

    /// For models of the form `r(x, w) = Φ(x) w`, writes `Φ(x)` row-major
    /// (`N × d`) into `phi` and returns true.
    fn linear_features(&self, _x: &[f64], _phi: &mut [f64]) -> bool {
        false
    }

    /// Evaluator of `H(w)` on a fixed dataset for use inside samplers. It may
    /// cache intermediate results between calls; values agree with
    /// [`empirical_square_error`] up to rounding.
    fn square_error_evaluator<'a>(
        &'a self,
        xs: &'a [f64],
        ys: &'a [f64],
    ) -> Box<dyn SquareErrorEval + 'a> {
        Box::new(DirectSquareError {
            model: self,
            xs,
            ys,
            buf: vec![0.0; self.output_dim()],
        })
    }

    /// Evaluator of `r(xᵢ, w)` at every row of a fixed input list, for
    /// sweeping many posterior draws over the same points.
    fn point_evaluator<'a>(&'a self, xs: &'a [f64]) -> Box<dyn PointEval + 'a> {
        Box::new(DirectPointEval { model: self, xs })
    }
}

pub trait SquareErrorEval {
    fn square_error(&mut self, w: &[f64]) -> f64;
}

pub trait PointEval {
    /// Writes `r(xᵢ, w)` row-major (`points × N`) into `out`.
    fn eval_all(&mut self, w: &[f64], out: &mut [f64]);
}

struct DirectPointEval<'a, M: RegressionModel + ?Sized> {
    model: &'a M,
    xs: &'a [f64],
}

impl<M: RegressionModel + ?Sized> PointEval for DirectPointEval<'_, M> {
    fn eval_all(&mut self, w: &[f64], out: &mut [f64]) {
        let m = self.model.input_dim();
        let n_out = self.model.output_dim();
        for (x, o) in self.xs.chunks_exact(m).zip(out.chunks_exact_mut(n_out)) {
            self.model.eval(x, w, o);
        }
    }
}

/// `Σₖ aₖ g(bₖ xᵢ)` over scalar inputs with `g(bₖ x)` cached per frequency:
/// consecutive MCMC draws mostly share their frequencies.
struct UnitSumPointEval<'a> {
    xs: &'a [f64],
    g: fn(f64) -> f64,
    capacity: usize,
    entries: Vec<(u64, u64, Vec<f64>)>,
    clock: u64,
}

impl<'a> UnitSumPointEval<'a> {
    fn new(xs: &'a [f64], g: fn(f64) -> f64, units: usize) -> Self {
        UnitSumPointEval {
            xs,
            g,
            capacity: 2 * units,
            entries: Vec::new(),
            clock: 0,
        }
    }

    fn entry(&mut self, freq: f64) -> usize {
        self.clock += 1;
        let bits = freq.to_bits();
        if let Some(i) = self.entries.iter().position(|e| e.0 == bits) {
            self.entries[i].1 = self.clock;
            return i;
        }
        let g = self.g;
        let values: Vec<f64> = self.xs.iter().map(|x| g(freq * x)).collect();
        if self.entries.len() < self.capacity {
            self.entries.push((bits, self.clock, values));
            self.entries.len() - 1
        } else {
            let i = (0..self.entries.len())
                .min_by_key(|&i| self.entries[i].1)
                .expect("cache is non-empty");
            self.entries[i] = (bits, self.clock, values);
            i
        }
    }
}

impl PointEval for UnitSumPointEval<'_> {
    fn eval_all(&mut self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for ab in w.chunks_exact(2) {
            let i = self.entry(ab[1]);
            let a = ab[0];
            for (o, v) in out.iter_mut().zip(&self.entries[i].2) {
                *o += a * v;
            }
        }
    }
}


struct DirectSquareError<'a, M: RegressionModel + ?Sized> {
    model: &'a M,
    xs: &'a [f64],
    ys: &'a [f64],
    buf: Vec<f64>,
}

impl<M: RegressionModel + ?Sized> SquareErrorEval for DirectSquareError<'_, M> {
    fn square_error(&mut self, w: &[f64]) -> f64 {
        let m = self.model.input_dim();
        let n_out = self.model.output_dim();
        let mut acc = CompensatedSum::new();
        for (x, y) in self.xs.chunks_exact(m).zip(self.ys.chunks_exact(n_out)) {
            self.model.eval(x, w, &mut self.buf);
            let sq: f64 = y.iter().zip(&self.buf).map(|(a, b)| (a - b) * (a - b)).sum();
            acc.add(sq);
        }
        0.5 * acc.value()
    }
}

/// `r(x, w) = w · x` with `M = d`, `N = 1`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    dim: usize,
}

impl LinearModel {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("linear model needs d >= 1"));
        }
        Ok(LinearModel { dim })
    }
}

impl RegressionModel for LinearModel {
    fn family(&self) -> &str {
        "linear"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        out[0] = x.iter().zip(w).map(|(a, b)| a * b).sum();
    }
    fn linear_features(&self, x: &[f64], phi: &mut [f64]) -> bool {
        phi.copy_from_slice(x);
        true
    }
    fn square_error_evaluator<'a>(
        &'a self,
        xs: &'a [f64],
        ys: &'a [f64],
    ) -> Box<dyn SquareErrorEval + 'a> {
        Box::new(LinearSquareError::new(self.dim, xs, ys))
    }
}

/// `H(w) = ½ (Σy² − 2 wᵀXᵀy + wᵀXᵀXw)` from sufficient statistics.
struct LinearSquareError {
    dim: usize,
    yy: f64,
    xy: Vec<f64>,
    xx: Vec<f64>,
}

impl LinearSquareError {
    fn new(dim: usize, xs: &[f64], ys: &[f64]) -> Self {
        let mut yy = CompensatedSum::new();
        let mut xy = vec![CompensatedSum::new(); dim];
        let mut xx = vec![CompensatedSum::new(); dim * dim];
        for (x, &y) in xs.chunks_exact(dim).zip(ys) {
            yy.add(y * y);
            for j in 0..dim {
                xy[j].add(x[j] * y);
                for k in 0..dim {
                    xx[j * dim + k].add(x[j] * x[k]);
                }
            }
        }
        LinearSquareError {
            dim,
            yy: yy.value(),
            xy: xy.iter().map(CompensatedSum::value).collect(),
            xx: xx.iter().map(CompensatedSum::value).collect(),
        }
    }
}

impl SquareErrorEval for LinearSquareError {
    fn square_error(&mut self, w: &[f64]) -> f64 {
        let d = self.dim;
        let mut quad = 0.0;
        for j in 0..d {
            let row = &self.xx[j * d..(j + 1) * d];
            quad += w[j] * row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
        let lin: f64 = self.xy.iter().zip(w).map(|(a, b)| a * b).sum();
        0.5 * (self.yy - 2.0 * lin + quad)
    }
}

/// `r(x, w) = a sin(bx) + c sin(dx)` with `w = (a, b, c, d)`, `M = N = 1`.
#[derive(Debug, Clone, Default)]
pub struct SinMixture;

impl RegressionModel for SinMixture {
    fn family(&self) -> &str {
        "sinmix"
    }
    fn dim(&self) -> usize {
        4
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        out[0] = w[0] * (w[1] * x[0]).sin() + w[2] * (w[3] * x[0]).sin();
    }
    fn square_error_evaluator<'a>(
        &'a self,
        xs: &'a [f64],
        ys: &'a [f64],
    ) -> Box<dyn SquareErrorEval + 'a> {
        Box::new(SinMixSquareError::new(xs, ys))
    }
    fn point_evaluator<'a>(&'a self, xs: &'a [f64]) -> Box<dyn PointEval + 'a> {
        Box::new(UnitSumPointEval::new(xs, f64::sin, 2))
    }
}

/// Caches `sin(f·xᵢ)` per frequency `f`. Component-wise samplers change one
/// coordinate at a time, so an amplitude move reuses both cached vectors and
/// a frequency move recomputes a single one.
struct SinMixSquareError<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    yy: f64,
    entries: Vec<FrequencyEntry>,
    clock: u64,
}

struct FrequencyEntry {
    freq_bits: u64,
    last_used: u64,
    sines: Vec<f64>,
    sum_ys: f64,
    sum_ss: f64,
}

const SINMIX_CACHE: usize = 4;

impl<'a> SinMixSquareError<'a> {
    fn new(xs: &'a [f64], ys: &'a [f64]) -> Self {
        let yy = ys.iter().map(|y| y * y).collect::<CompensatedSum>().value();
        SinMixSquareError {
            xs,
            ys,
            yy,
            entries: Vec::with_capacity(SINMIX_CACHE),
            clock: 0,
        }
    }

    fn entry(&mut self, freq: f64) -> usize {
        self.clock += 1;
        let bits = freq.to_bits();
        if let Some(i) = self.entries.iter().position(|e| e.freq_bits == bits) {
            self.entries[i].last_used = self.clock;
            return i;
        }
        let sines: Vec<f64> = self.xs.iter().map(|x| (freq * x).sin()).collect();
        let sum_ys = self
            .ys
            .iter()
            .zip(&sines)
            .map(|(y, s)| y * s)
            .collect::<CompensatedSum>()
            .value();
        let sum_ss = sines.iter().map(|s| s * s).collect::<CompensatedSum>().value();
        let entry = FrequencyEntry {
            freq_bits: bits,
            last_used: self.clock,
            sines,
            sum_ys,
            sum_ss,
        };
        if self.entries.len() < SINMIX_CACHE {
            self.entries.push(entry);
            self.entries.len() - 1
        } else {
            let (i, _) = self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| e.last_used)
                .expect("cache is non-empty");
            self.entries[i] = entry;
            i
        }
    }
}

impl SquareErrorEval for SinMixSquareError<'_> {
    fn square_error(&mut self, w: &[f64]) -> f64 {
        let (a, c) = (w[0], w[2]);
        let ib = self.entry(w[1]);
        let id = self.entry(w[3]);
        let eb = &self.entries[ib];
        let ed = &self.entries[id];
        let cross: f64 = eb.sines.iter().zip(&ed.sines).map(|(s, t)| s * t).sum();
        let lin = a * eb.sum_ys + c * ed.sum_ys;
        let quad = a * a * eb.sum_ss + 2.0 * a * c * cross + c * c * ed.sum_ss;
        0.5 * (self.yy - 2.0 * lin + quad)
    }
}

/// `r(x, w) = Σₖ aₖ tanh(bₖ x)` with `w = (a₁, b₁, …, a_K, b_K)`.
#[derive(Debug, Clone)]
pub struct TanhMixture {
    units: usize,
}

impl TanhMixture {
    pub fn new(units: usize) -> Result<Self> {
        if units == 0 {
            return Err(Error::invalid("tanh mixture needs at least one unit"));
        }
        Ok(TanhMixture { units })
    }
}

impl RegressionModel for TanhMixture {
    fn family(&self) -> &str {
        "tanh"
    }
    fn dim(&self) -> usize {
        2 * self.units
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        out[0] = w
            .chunks_exact(2)
            .map(|ab| ab[0] * (ab[1] * x[0]).tanh())
            .sum();
    }
    fn point_evaluator<'a>(&'a self, xs: &'a [f64]) -> Box<dyn PointEval + 'a> {
        Box::new(UnitSumPointEval::new(xs, f64::tanh, self.units))
    }
}

/// Compact parameter set `W` with nonempty interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterRegion {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { dim: usize, radius: f64 },
}

impl ParameterRegion {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let region = ParameterRegion::Box { lo, hi };
        region.validate()?;
        Ok(region)
    }

    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new_box(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn new_ball(dim: usize, radius: f64) -> Result<Self> {
        let region = ParameterRegion::Ball { dim, radius };
        region.validate()?;
        Ok(region)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ParameterRegion::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::invalid("box bounds must be nonempty with equal lengths"));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
                    return Err(Error::invalid("box bounds need finite lo_j < hi_j"));
                }
            }
            ParameterRegion::Ball { dim, radius } => {
                if *dim == 0 || !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::invalid("ball needs dim >= 1 and finite radius > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ParameterRegion::Box { lo, .. } => lo.len(),
            ParameterRegion::Ball { dim, .. } => *dim,
        }
    }

    /// Exact membership: coordinatewise for boxes, `|w| ≤ ρ` for balls.
    pub fn contains(&self, w: &[f64]) -> bool {
        if w.len() != self.dim() {
            return false;
        }
        match self {
            ParameterRegion::Box { lo, hi } => w
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h),
            ParameterRegion::Ball { radius, .. } => {
                w.iter().map(|v| v * v).sum::<f64>() <= radius * radius
            }
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            ParameterRegion::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
            ParameterRegion::Ball { dim, radius } => unit_ball_volume(*dim) * radius.powi(*dim as i32),
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ParameterRegion::Box { lo, hi } => (lo.clone(), hi.clone()),
            ParameterRegion::Ball { dim, radius } => (vec![-radius; *dim], vec![*radius; *dim]),
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ParameterRegion::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            ParameterRegion::Ball { dim, radius } => {
                let mut z: Vec<f64> = loop {
                    let z: Vec<f64> = (0..*dim).map(|_| rng.sample(StandardNormal)).collect();
                    if z.iter().any(|v: &f64| *v != 0.0) {
                        break z;
                    }
                };
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                let r = radius * rng.random::<f64>().powf(1.0 / *dim as f64);
                z.iter_mut().for_each(|v| *v *= r / norm);
                if !self.contains(&z) {
                    // rounding can push |w| a hair past ρ
                    let fix = radius / z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    z.iter_mut().for_each(|v| *v *= fix * (1.0 - f64::EPSILON));
                }
                z
            }
        }
    }
}

fn unit_ball_volume(dim: usize) -> f64 {
    // V_d = V_{d-2} · 2π / d with V_0 = 1, V_1 = 2
    let mut v = if dim % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if dim % 2 == 0 { 2 } else { 3 };
    while k <= dim {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorKind {
    #[default]
    Uniform,
    TruncatedGaussian { scale: f64 },
}

/// Prior density `φ(w)` on a parameter region.
#[derive(Debug, Clone)]
pub struct Prior {
    kind: PriorKind,
    region: ParameterRegion,
    log_normalizer: f64,
}

impl Prior {
    /// Builds the prior and, for `d ≤ 3`, checks by midpoint quadrature that
    /// the density integrates to one within relative error `1e-3`.
    pub fn new(kind: PriorKind, region: ParameterRegion) -> Result<Self> {
        region.validate()?;
        let log_normalizer = match kind {
            PriorKind::Uniform => region.volume().ln(),
            PriorKind::TruncatedGaussian { scale } => {
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::invalid("truncated gaussian scale must be > 0"));
                }
                truncated_gaussian_log_mass(&region, scale)
            }
        };
        let prior = Prior {
            kind,
            region,
            log_normalizer,
        };
        if prior.region.dim() <= 3 {
            let mass = prior.quadrature_mass();
            if (mass - 1.0).abs() > 1e-3 {
                return Err(Error::invalid(format!(
                    "prior density integrates to {mass} instead of 1"
                )));
            }
        }
        Ok(prior)
    }

    pub fn uniform(region: ParameterRegion) -> Result<Self> {
        Self::new(PriorKind::Uniform, region)
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn region(&self) -> &ParameterRegion {
        &self.region
    }

    /// `log φ(w)`, `-∞` outside the region.
    pub fn log_density(&self, w: &[f64]) -> f64 {
        if !self.region.contains(w) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            PriorKind::Uniform => -self.log_normalizer,
            PriorKind::TruncatedGaussian { scale } => {
                let r2: f64 = w.iter().map(|v| v * v).sum();
                -0.5 * r2 / (scale * scale) - self.log_normalizer
            }
        }
    }

    pub fn density(&self, w: &[f64]) -> f64 {
        self.log_density(w).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            PriorKind::Uniform => self.region.sample_uniform(rng),
            PriorKind::TruncatedGaussian { scale } => loop {
                let w = self.region.sample_uniform(rng);
                let r2: f64 = w.iter().map(|v| v * v).sum();
                if rng.random::<f64>() < (-0.5 * r2 / (scale * scale)).exp() {
                    break w;
                }
            },
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        // both kinds are symmetric about the box centre / origin
        let (lo, hi) = self.region.bounding_box();
        match (&self.region, self.kind) {
            (ParameterRegion::Box { .. }, PriorKind::Uniform) => {
                lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect()
            }
            (ParameterRegion::Ball { dim, .. }, _) => vec![0.0; *dim],
            (ParameterRegion::Box { .. }, PriorKind::TruncatedGaussian { scale }) => lo
                .iter()
                .zip(&hi)
                .map(|(&l, &h)| truncated_normal_mean(l, h, scale))
                .collect(),
        }
    }

    fn quadrature_mass(&self) -> f64 {
        let d = self.region.dim();
        let per_axis = match d {
            1 => 20_000,
            2 => 1_500,
            _ => 200,
        };
        let (lo, hi) = self.region.bounding_box();
        let steps: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) / per_axis as f64).collect();
        let cell: f64 = steps.iter().product();
        let mut idx = vec![0usize; d];
        let mut w = vec![0.0; d];
        let mut acc = CompensatedSum::new();
        loop {
            for j in 0..d {
                w[j] = lo[j] + (idx[j] as f64 + 0.5) * steps[j];
            }
            acc.add(self.density(&w));
            let mut j = 0;
            loop {
                idx[j] += 1;
                if idx[j] < per_axis {
                    break;
                }
                idx[j] = 0;
                j += 1;
                if j == d {
                    return acc.value() * cell;
                }
            }
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(z / std::f64::consts::SQRT_2))
}

fn truncated_gaussian_log_mass(region: &ParameterRegion, scale: f64) -> f64 {
    match region {
        ParameterRegion::Box { lo, hi } => lo
            .iter()
            .zip(hi)
            .map(|(l, h)| {
                let p = std_normal_cdf(h / scale) - std_normal_cdf(l / scale);
                (scale * (2.0 * PI).sqrt() * p).ln()
            })
            .sum(),
        ParameterRegion::Ball { dim, radius } => {
            let half = *dim as f64 / 2.0;
            let p = statrs::function::gamma::gamma_lr(half, radius * radius / (2.0 * scale * scale));
            half * (2.0 * PI * scale * scale).ln() + p.ln()
        }
    }
}

fn truncated_normal_mean(lo: f64, hi: f64, scale: f64) -> f64 {
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    let (a, b) = (lo / scale, hi / scale);
    scale * (pdf(a) - pdf(b)) / (std_normal_cdf(b) - std_normal_cdf(a))
}

/// A regression family together with its parameter region and prior.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub id: String,
    pub model: Arc<dyn RegressionModel>,
    pub prior: Prior,
}

impl ModelSpec {
    pub fn new(id: impl Into<String>, model: Arc<dyn RegressionModel>, prior: Prior) -> Result<Self> {
        if prior.region().dim() != model.dim() {
            return Err(Error::invalid(format!(
                "region dimension {} does not match model dimension {}",
                prior.region().dim(),
                model.dim()
            )));
        }
        Ok(ModelSpec {
            id: id.into(),
            model,
            prior,
        })
    }

    pub fn d(&self) -> usize {
        self.model.dim()
    }
    pub fn m_in(&self) -> usize {
        self.model.input_dim()
    }
    pub fn n_out(&self) -> usize {
        self.model.output_dim()
    }
    pub fn region(&self) -> &ParameterRegion {
        self.prior.region()
    }

    pub fn evaluate(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_out()];
        self.model.eval(x, w, &mut out);
        out
    }

    fn check_param(&self, w: &[f64]) -> Result<()> {
        if !self.region().contains(w) {
            return Err(Error::OutsideRegion(w.to_vec()));
        }
        Ok(())
    }
}

/// The input law `q(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputDensity {
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl InputDensity {
    pub fn uniform_cube(dim: usize, half_width: f64) -> Self {
        InputDensity::UniformBox {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputDensity::UniformBox { lo, .. } => lo.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            InputDensity::UniformBox { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h),
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        match self {
            InputDensity::UniformBox { lo, hi } => {
                if self.contains(x) {
                    1.0 / lo.iter().zip(hi).map(|(l, h)| h - l).product::<f64>()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            InputDensity::UniformBox { lo, hi } => {
                for (o, (l, h)) in out.iter_mut().zip(lo.iter().zip(hi)) {
                    *o = l + (h - l) * rng.random::<f64>();
                }
            }
        }
    }

    /// Draw whose coordinate `j` lies in stratum `strata[j]` of `count`
    /// equal slices of the box.
    pub(crate) fn sample_stratum<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        strata: &[usize],
        count: usize,
        out: &mut [f64],
    ) {
        match self {
            InputDensity::UniformBox { lo, hi } => {
                for (j, o) in out.iter_mut().enumerate() {
                    let u = (strata[j] as f64 + rng.random::<f64>()) / count as f64;
                    *o = (lo[j] + (hi[j] - lo[j]) * u).clamp(lo[j], hi[j]);
                }
            }
        }
    }
}

/// The true regression function `r₀(x)`.
pub trait TargetFunction: Send + Sync + fmt::Debug {
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub struct ZeroFunction {
    pub n_out: usize,
}

impl TargetFunction for ZeroFunction {
    fn output_dim(&self) -> usize {
        self.n_out
    }
    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `r₀(x) = r(x, w₀)` for a fixed true parameter.
#[derive(Debug, Clone)]
pub struct ParametricTruth {
    pub model: Arc<dyn RegressionModel>,
    pub w0: Vec<f64>,
}

impl TargetFunction for ParametricTruth {
    fn output_dim(&self) -> usize {
        self.model.output_dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.model.eval(x, &self.w0, out);
    }
}

/// The data-generating process: `X ~ q`, `Y | X ~ N(r₀(X), σ² I_N)`.
#[derive(Debug, Clone)]
pub struct TrueProcess {
    pub input: InputDensity,
    pub r0: Arc<dyn TargetFunction>,
    sigma: f64,
    s_value: f64,
}

impl TrueProcess {
    pub fn new(input: InputDensity, r0: Arc<dyn TargetFunction>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("sigma must be finite and > 0"));
        }
        let s_value = r0.output_dim() as f64 * sigma * sigma / 2.0;
        Ok(TrueProcess {
            input,
            r0,
            sigma,
            s_value,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `S = Nσ²/2`.
    pub fn s_value(&self) -> f64 {
        self.s_value
    }

    pub fn m_in(&self) -> usize {
        self.input.dim()
    }

    pub fn n_out(&self) -> usize {
        self.r0.output_dim()
    }

    pub fn r0(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_out()];
        self.r0.eval(x, &mut out);
        out
    }

    /// Draws `n` pairs and checks that the residuals `Y − r₀(X)` have mean
    /// within `4σ/√n` of 0 and variance ratio within `4√(2/n)` of 1 in each
    /// output coordinate.
    pub fn noise_self_test(&self, n: usize, seed: u64) -> Result<()> {
        let data = crate::data::generate(self, n, seed)?;
        let n_out = self.n_out();
        let mut r0 = vec![0.0; n_out];
        for k in 0..n_out {
            let resid: Vec<f64> = (0..n)
                .map(|i| {
                    self.r0.eval(data.x(i), &mut r0);
                    data.y(i)[k] - r0[k]
                })
                .collect();
            let (mean, var) = sample_mean_var(&resid);
            let nf = n as f64;
            if mean.abs() >= 4.0 * self.sigma / nf.sqrt()
                || (var / (self.sigma * self.sigma) - 1.0).abs() >= 4.0 * (2.0 / nf).sqrt()
            {
                return Err(Error::invalid(format!(
                    "noise self-test failed in output {k}: mean {mean}, variance {var}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn sample_mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .value()
        / (n - 1.0);
    (mean, var)
}

/// `H(w) = ½ Σᵢ |Yᵢ − r(Xᵢ, w)|²`, summed directly.
pub fn empirical_square_error(model: &ModelSpec, dataset: &Dataset, w: &[f64]) -> Result<f64> {
    model.check_param(w)?;
    if dataset.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut eval = DirectSquareError {
        model: model.model.as_ref(),
        xs: dataset.xs(),
        ys: dataset.ys(),
        buf: vec![0.0; model.n_out()],
    };
    Ok(eval.square_error(w))
}

/// `K(w) = ½ E_X |r(X, w) − r₀(X)|²` with `E_X` the mean over the quadrature
/// nodes.
pub fn population_k(model: &ModelSpec, truth: &TrueProcess, w: &[f64], xq: &XQuadrature) -> Result<f64> {
    model.check_param(w)?;
    Ok(PopulationK::direct(model, truth, xq).eval(w))
}

/// Repeated evaluation of `K(w)` on one node set. With `r₀` cached on the
/// nodes, and for models linear in `w`, reduced to the quadratic form
/// `½(wᵀAw − 2bᵀw + c)` of node-averaged feature moments.
#[derive(Debug, Clone)]
pub struct PopulationK<'a> {
    model: &'a ModelSpec,
    xq: &'a XQuadrature,
    r0_nodes: Vec<f64>,
    gram: Option<(Vec<f64>, Vec<f64>, f64)>,
}

impl<'a> PopulationK<'a> {
    fn direct(model: &'a ModelSpec, truth: &TrueProcess, xq: &'a XQuadrature) -> Self {
        let n_out = model.n_out();
        let mut r0_nodes = vec![0.0; xq.len() * n_out];
        for (x, out) in xq.nodes().zip(r0_nodes.chunks_exact_mut(n_out)) {
            truth.r0.eval(x, out);
        }
        PopulationK {
            model,
            xq,
            r0_nodes,
            gram: None,
        }
    }

    pub fn new(model: &'a ModelSpec, truth: &TrueProcess, xq: &'a XQuadrature) -> Self {
        let mut k = Self::direct(model, truth, xq);
        let d = model.d();
        let n_out = model.n_out();
        let mut phi = vec![0.0; n_out * d];
        let first = xq.nodes().next();
        if first.is_some_and(|x| model.model.linear_features(x, &mut phi)) {
            let mut a = vec![CompensatedSum::new(); d * d];
            let mut b = vec![CompensatedSum::new(); d];
            let mut c = CompensatedSum::new();
            for (x, r0) in xq.nodes().zip(k.r0_nodes.chunks_exact(n_out)) {
                model.model.linear_features(x, &mut phi);
                for (row, &target) in phi.chunks_exact(d).zip(r0) {
                    c.add(target * target);
                    for j in 0..d {
                        b[j].add(row[j] * target);
                        for l in 0..d {
                            a[j * d + l].add(row[j] * row[l]);
                        }
                    }
                }
            }
            let q = xq.len() as f64;
            k.gram = Some((
                a.iter().map(|s| s.value() / q).collect(),
                b.iter().map(|s| s.value() / q).collect(),
                c.value() / q,
            ));
        }
        k
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        if let Some((a, b, c)) = &self.gram {
            let d = w.len();
            let mut quad = 0.0;
            for j in 0..d {
                quad += w[j] * a[j * d..(j + 1) * d].iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
            }
            let lin: f64 = b.iter().zip(w).map(|(x, y)| x * y).sum();
            return (0.5 * (quad - 2.0 * lin + c)).max(0.0);
        }
        let n_out = self.model.n_out();
        let mut buf = vec![0.0; n_out];
        let mut acc = CompensatedSum::new();
        for (x, r0) in self.xq.nodes().zip(self.r0_nodes.chunks_exact(n_out)) {
            self.model.model.eval(x, w, &mut buf);
            acc.add(buf.iter().zip(r0).map(|(r, t)| (r - t) * (r - t)).sum());
        }
        0.5 * acc.value() / self.xq.len() as f64
    }
}

/// Built-in model catalog.
pub mod catalog {
    use super::*;

    /// Parses `linear-<d>`, `sinmix` or `tanh-<k>` and builds the family with
    /// its region: `[-1,1]^d` for linear, the unit ball otherwise.
    pub fn model_spec(id: &str, prior: PriorKind) -> Result<ModelSpec> {
        let (model, region): (Arc<dyn RegressionModel>, ParameterRegion) = match parse_id(id)? {
            Family::Linear(d) => (Arc::new(LinearModel::new(d)?), ParameterRegion::cube(d, 1.0)?),
            Family::SinMix => (Arc::new(SinMixture), ParameterRegion::new_ball(4, 1.0)?),
            Family::Tanh(k) => {
                let m = TanhMixture::new(k)?;
                let d = m.dim();
                (Arc::new(m), ParameterRegion::new_ball(d, 1.0)?)
            }
        };
        ModelSpec::new(id, model, Prior::new(prior, region)?)
    }

    /// Truth paired with a built-in model: `q = Uniform[-1,1]^d` and
    /// `r₀(x) = w₀·x` (default `w₀ = 0`) for linear; `q = Uniform[-π,π]`
    /// and `r₀ = 0` for the nonlinear families.
    pub fn truth(spec: &ModelSpec, sigma: f64, true_w: Option<&[f64]>) -> Result<TrueProcess> {
        match parse_id(&spec.id)? {
            Family::Linear(d) => {
                let w0 = true_w.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; d]);
                if !spec.region().contains(&w0) {
                    return Err(Error::OutsideRegion(w0));
                }
                TrueProcess::new(
                    InputDensity::uniform_cube(d, 1.0),
                    Arc::new(ParametricTruth {
                        model: spec.model.clone(),
                        w0,
                    }),
                    sigma,
                )
            }
            Family::SinMix | Family::Tanh(_) => {
                if true_w.is_some_and(|w| w.iter().any(|v| *v != 0.0)) {
                    return Err(Error::invalid("nonlinear built-ins use r0 = 0; true_w must be zero"));
                }
                TrueProcess::new(
                    InputDensity::uniform_cube(1, PI),
                    Arc::new(ZeroFunction { n_out: 1 }),
                    sigma,
                )
            }
        }
    }

    enum Family {
        Linear(usize),
        SinMix,
        Tanh(usize),
    }

    fn parse_id(id: &str) -> Result<Family> {
        let unknown = || Error::UnknownModel(id.to_string());
        if id == "sinmix" {
            return Ok(Family::SinMix);
        }
        if let Some(d) = id.strip_prefix("linear-") {
            return d.parse().ok().filter(|d| *d >= 1).map(Family::Linear).ok_or_else(unknown);
        }
        if let Some(k) = id.strip_prefix("tanh-") {
            return k.parse().ok().filter(|k| *k >= 1).map(Family::Tanh).ok_or_else(unknown);
        }
        Err(unknown())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::posterior::XQuadrature;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(d: usize) -> ModelSpec {
        catalog::model_spec(&format!("linear-{d}"), PriorKind::Uniform).unwrap()
    }

    #[test]
    fn square_error_exact_fit_is_zero() {
        let spec = linear(2);
        let w = [0.3, -0.7];
        let xs = vec![0.1, 0.2, -0.5, 0.9, 0.4, 0.4];
        let ys: Vec<f64> = xs.chunks(2).map(|x| spec.evaluate(x, &w)[0]).collect();
        let data = Dataset::from_parts(xs, ys, 2, 1, 0).unwrap();
        assert_eq!(empirical_square_error(&spec, &data, &w).unwrap(), 0.0);
    }

    #[test]
    fn square_error_single_pair() {
        // r(x, 0) = 0 and y = 3 gives ½·3²
        let spec = linear(1);
        let data = Dataset::from_parts(vec![0.5], vec![3.0], 1, 1, 0).unwrap();
        assert_eq!(empirical_square_error(&spec, &data, &[0.0]).unwrap(), 4.5);
    }

    #[test]
    fn square_error_linear_hand_sum() {
        let spec = linear(2);
        let xs = vec![1.0, 0.0, 0.0, 1.0, 0.5, -0.5, -1.0, 0.25, 0.75, 0.75];
        let ys = vec![1.0, -1.0, 0.0, 2.0, 0.5];
        let w = [0.5, -0.25];
        let data = Dataset::from_parts(xs.clone(), ys.clone(), 2, 1, 0).unwrap();
        // predictions: 0.5, -0.25, 0.375, -0.5625, 0.1875
        let preds = [0.5, -0.25, 0.375, -0.5625, 0.1875];
        let expected = 0.5
            * ys.iter()
                .zip(preds)
                .map(|(y, p)| (y - p) * (y - p))
                .sum::<f64>();
        // (0.5² + 0.75² + 0.375² + 2.5625² + 0.3125²) / 2 = 3.80859375
        assert!((expected - 3.80859375).abs() < 1e-15);
        let h = empirical_square_error(&spec, &data, &w).unwrap();
        assert!((h - expected).abs() < 1e-14, "{h}");
    }

    #[test]
    fn square_error_rejects_bad_input() {
        let spec = linear(1);
        let data = Dataset::from_parts(vec![0.5], vec![3.0], 1, 1, 0).unwrap();
        assert!(matches!(
            empirical_square_error(&spec, &data, &[1.5]),
            Err(Error::OutsideRegion(_))
        ));
        let empty = Dataset::empty_for_tests(1, 1);
        assert!(matches!(
            empirical_square_error(&spec, &empty, &[0.0]),
            Err(Error::EmptyDataset)
        ));
    }

    fn sinmix_k_exact(w: &[f64]) -> f64 {
        // E[sin(bX) sin(dX)] for X ~ U[-π, π] = ½(sinc((b-d)π) - sinc((b+d)π))
        let sinc = |z: f64| if z == 0.0 { 1.0 } else { z.sin() / z };
        let cross = |b: f64, d: f64| 0.5 * (sinc((b - d) * PI) - sinc((b + d) * PI));
        let (a, b, c, d) = (w[0], w[1], w[2], w[3]);
        0.5 * (a * a * cross(b, b) + 2.0 * a * c * cross(b, d) + c * c * cross(d, d))
    }

    #[test]
    fn population_k_zero_at_truth() {
        let spec = linear(2);
        let truth = catalog::truth(&spec, 0.1, Some(&[0.2, -0.1])).unwrap();
        let xq = XQuadrature::iid(&truth, 1000, 7).unwrap();
        assert_eq!(population_k(&spec, &truth, &[0.2, -0.1], &xq).unwrap(), 0.0);
    }

    #[test]
    fn population_k_sinmix_zero_set_and_value() {
        let spec = catalog::model_spec("sinmix", PriorKind::Uniform).unwrap();
        let truth = catalog::truth(&spec, 0.1, None).unwrap();
        let xq = XQuadrature::iid(&truth, 10_000, 11).unwrap();
        for (a, c) in [(0.3, -0.5), (0.9, 0.1), (-0.6, 0.6)] {
            assert_eq!(population_k(&spec, &truth, &[a, 0.0, c, 0.0], &xq).unwrap(), 0.0);
        }
        for b in [-0.8, -0.3, 0.0, 0.4, 0.7] {
            for d in [-0.6, 0.2, 0.5] {
                assert_eq!(population_k(&spec, &truth, &[0.0, b, 0.0, d], &xq).unwrap(), 0.0);
            }
        }
        // K(1,1,0,0) = ½ E[sin²X] = 1/4 with E over U[-π, π]
        let exact = sinmix_k_exact(&[1.0, 1.0, 0.0, 0.0]);
        assert!((exact - 0.25).abs() < 1e-15);
        // (1,1,0,0) lies outside the unit ball; check an interior point instead
        let w = [0.7, 0.7, 0.0, 0.0];
        let k = population_k(&spec, &truth, &w, &xq).unwrap();
        // the integrand is bounded by 0.245, so its sd is < 0.125; 4 SE at Q = 1e4
        assert!((k - sinmix_k_exact(&w)).abs() < 4.0 * 0.125 / 100.0, "{k}");
    }

    #[test]
    fn population_k_converges_with_node_count() {
        let spec = catalog::model_spec("sinmix", PriorKind::Uniform).unwrap();
        let truth = catalog::truth(&spec, 0.1, None).unwrap();
        let w = [0.5, 0.7, -0.3, 0.2];
        let exact = sinmix_k_exact(&w);
        let errs: Vec<f64> = [1_000usize, 10_000, 100_000]
            .iter()
            .map(|&q| {
                // average over several node sets to expose the Q^{-1/2} law
                (0..8)
                    .map(|s| {
                        let xq = XQuadrature::iid(&truth, q, 100 + s).unwrap();
                        (population_k(&spec, &truth, &w, &xq).unwrap() - exact).abs()
                    })
                    .sum::<f64>()
                    / 8.0
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
        // stratified nodes are far more accurate for smooth integrands
        let xs = XQuadrature::stratified(&truth, 1_000, 5).unwrap();
        let strat_err = (population_k(&spec, &truth, &w, &xs).unwrap() - exact).abs();
        assert!(strat_err < errs[2], "{strat_err} vs {errs:?}");
    }

    #[test]
    fn population_k_gram_path_matches_direct() {
        let spec = linear(3);
        let truth = catalog::truth(&spec, 0.1, Some(&[0.1, 0.0, -0.2])).unwrap();
        let xq = XQuadrature::iid(&truth, 2000, 3).unwrap();
        let fast = PopulationK::new(&spec, &truth, &xq);
        for w in [[0.5, -0.5, 0.2], [0.1, 0.0, -0.19], [-1.0, 1.0, 1.0]] {
            let direct = population_k(&spec, &truth, &w, &xq).unwrap();
            assert!((fast.eval(&w) - direct).abs() < 1e-12 * (1.0 + direct), "{w:?}");
        }
        // K(w) = |w - w0|²/6 in expectation
        let k = population_k(&spec, &truth, &[0.7, 0.0, -0.2], &xq).unwrap();
        assert!((k - 0.36 / 6.0).abs() < 0.004, "{k}");
    }

    #[test]
    fn fast_square_error_evaluators_match_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for id in ["linear-3", "sinmix", "tanh-2"] {
            let spec = catalog::model_spec(id, PriorKind::Uniform).unwrap();
            let truth = catalog::truth(&spec, 0.3, None).unwrap();
            let data = crate::data::generate(&truth, 300, 4).unwrap();
            let mut fast = spec.model.square_error_evaluator(data.xs(), data.ys());
            let mut w = spec.prior.sample(&mut rng);
            for step in 0..40 {
                // component-wise moves exercise the frequency cache
                let j = step % spec.d();
                let mut prop = w.clone();
                prop[j] *= 0.9;
                let direct = empirical_square_error(&spec, &data, &prop).unwrap();
                let f = fast.square_error(&prop);
                assert!((f - direct).abs() < 1e-10 * direct.max(1.0), "{id} {f} {direct}");
                if step % 3 == 0 {
                    w = prop;
                }
            }
        }
    }

    #[test]
    fn priors_integrate_to_one_and_reject_bad_regions() {
        for region in [
            ParameterRegion::cube(1, 1.0).unwrap(),
            ParameterRegion::new_ball(2, 1.0).unwrap(),
            ParameterRegion::new_ball(3, 0.5).unwrap(),
            ParameterRegion::new_box(vec![-1.0, 0.0, 2.0], vec![1.0, 0.5, 3.0]).unwrap(),
        ] {
            Prior::uniform(region.clone()).unwrap();
            Prior::new(PriorKind::TruncatedGaussian { scale: 0.4 }, region).unwrap();
        }
        assert!(ParameterRegion::new_box(vec![0.0], vec![0.0]).is_err());
        assert!(ParameterRegion::new_ball(2, 0.0).is_err());
        assert!(Prior::new(
            PriorKind::TruncatedGaussian { scale: -1.0 },
            ParameterRegion::cube(1, 1.0).unwrap()
        )
        .is_err());
    }

    #[test]
    fn region_membership_is_exact() {
        let ball = ParameterRegion::new_ball(2, 1.0).unwrap();
        assert!(ball.contains(&[1.0, 0.0]));
        assert!(!ball.contains(&[1.0, 1e-7]));
        let cube = ParameterRegion::cube(2, 1.0).unwrap();
        assert!(cube.contains(&[1.0, -1.0]));
        assert!(!cube.contains(&[1.0 + f64::EPSILON, 0.0]));
        assert!(!cube.contains(&[0.0]));
    }

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn truth_noise_self_test_passes() {
        let spec = linear(2);
        let truth = catalog::truth(&spec, 0.1, Some(&[0.5, 0.5])).unwrap();
        assert_eq!(truth.s_value(), 1.0 * 0.1 * 0.1 / 2.0);
        truth.noise_self_test(20_000, 1).unwrap();
    }

    #[test]
    fn catalog_rejects_unknown_ids() {
        for id in ["linear-0", "linear-x", "foo", "tanh-"] {
            assert!(matches!(
                catalog::model_spec(id, PriorKind::Uniform),
                Err(Error::UnknownModel(_))
            ));
        }
    }

    #[test]
    fn square_error_at_truth_averages_to_n_s() {
        let spec = linear(2);
        let truth = catalog::truth(&spec, 0.1, None).unwrap();
        let n = 50;
        let vals: Vec<f64> = (0..400)
            .map(|r| {
                let data = crate::data::generate(&truth, n, 1000 + r).unwrap();
                empirical_square_error(&spec, &data, &[0.0, 0.0]).unwrap()
            })
            .collect();
        let m = crate::numeric::MeanSe::from_values(&vals);
        let target = n as f64 * truth.s_value();
        assert!((m.mean - target).abs() < 4.0 * m.se, "{m:?} vs {target}");
    }

    proptest! {
        #[test]
        fn h_and_k_are_nonnegative(w in proptest::collection::vec(-0.49f64..0.49, 4), seed in 0u64..50) {
            let spec = catalog::model_spec("sinmix", PriorKind::Uniform).unwrap();
            let truth = catalog::truth(&spec, 0.2, None).unwrap();
            let data = crate::data::generate(&truth, 20, seed).unwrap();
            let xq = XQuadrature::iid(&truth, 200, seed).unwrap();
            prop_assert!(empirical_square_error(&spec, &data, &w).unwrap() >= 0.0);
            prop_assert!(population_k(&spec, &truth, &w, &xq).unwrap() >= 0.0);
        }

        #[test]
        fn evaluate_is_deterministic(w in proptest::collection::vec(-0.49f64..0.49, 4), x in -3.0f64..3.0) {
            let spec = catalog::model_spec("sinmix", PriorKind::Uniform).unwrap();
            let a = spec.evaluate(&[x], &w);
            let b = spec.evaluate(&[x], &w);
            prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
            prop_assert!(a[0].is_finite());
        }
    }
}
