//! Synthetic datasets drawn from a [`TrueProcess`], with CSV persistence.
//!
//! Generation uses `ChaCha8Rng::seed_from_u64(seed)`; inputs are drawn first
//! (`M` uniforms per pair) followed by `N` standard normals from the ziggurat
//! sampler of `rand_distr::StandardNormal`, pair by pair.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TrueProcess;
use crate::numeric::fmt_f64;

pub const RNG_NAME: &str = "chacha8";
pub const GAUSSIAN_TRANSFORM: &str = "ziggurat";

/// `n` pairs `(Xᵢ, Yᵢ)` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m_in: usize,
    n_out: usize,
    seed: u64,
}

impl Dataset {
    /// Builds a dataset from flat row-major buffers (`n × M` and `n × N`).
    pub fn from_parts(xs: Vec<f64>, ys: Vec<f64>, m_in: usize, n_out: usize, seed: u64) -> Result<Self> {
        if m_in == 0 || n_out == 0 {
            return Err(Error::invalid("dataset dimensions must be positive"));
        }
        if xs.len() % m_in != 0 || ys.len() % n_out != 0 || xs.len() / m_in != ys.len() / n_out {
            return Err(Error::invalid("xs and ys hold different numbers of pairs"));
        }
        if xs.len() / m_in == 0 {
            return Err(Error::EmptyDataset);
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset entries must be finite"));
        }
        Ok(Dataset {
            xs,
            ys,
            m_in,
            n_out,
            seed,
        })
    }

    #[cfg(test)]
    pub(crate) fn empty_for_tests(m_in: usize, n_out: usize) -> Self {
        Dataset {
            xs: Vec::new(),
            ys: Vec::new(),
            m_in,
            n_out,
            seed: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.xs.len() / self.m_in
    }
    pub fn m_in(&self) -> usize {
        self.m_in
    }
    pub fn n_out(&self) -> usize {
        self.n_out
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }
    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.m_in..(i + 1) * self.m_in]
    }
    pub fn y(&self, i: usize) -> &[f64] {
        &self.ys[i * self.n_out..(i + 1) * self.n_out]
    }

    /// First `n` pairs; generation order makes this the dataset one would get
    /// with the same seed and size `n`.
    pub fn prefix(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.n() {
            return Err(Error::invalid(format!("prefix {n} out of range 1..={}", self.n())));
        }
        Ok(Dataset {
            xs: self.xs[..n * self.m_in].to_vec(),
            ys: self.ys[..n * self.n_out].to_vec(),
            m_in: self.m_in,
            n_out: self.n_out,
            seed: self.seed,
        })
    }
}

/// Draws `n` i.i.d. pairs: `X ~ q`, `Y = r₀(X) + ε`, `ε ~ N(0, σ² I_N)`.
pub fn generate(truth: &TrueProcess, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let m_in = truth.m_in();
    let n_out = truth.n_out();
    let sigma = truth.sigma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = vec![0.0; n * m_in];
    let mut ys = vec![0.0; n * n_out];
    for (x, y) in xs.chunks_exact_mut(m_in).zip(ys.chunks_exact_mut(n_out)) {
        truth.input.sample_into(&mut rng, x);
        truth.r0.eval(x, y);
        for v in y.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += sigma * e;
        }
    }
    Dataset::from_parts(xs, ys, m_in, n_out, seed)
}

/// JSON sidecar stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub seed: u64,
    pub model_id: String,
    pub sigma: f64,
    #[serde(default)]
    pub rng: Option<String>,
    #[serde(default)]
    pub gaussian: Option<String>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `x_1..x_M, y_1..y_N` with 17 significant digits plus the sidecar.
pub fn save_csv(dataset: &Dataset, path: &Path, model_id: &str, sigma: f64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let header: Vec<String> = (1..=dataset.m_in)
        .map(|j| format!("x_{j}"))
        .chain((1..=dataset.n_out).map(|k| format!("y_{k}")))
        .collect();
    w.write_record(&header)?;
    for i in 0..dataset.n() {
        let row: Vec<String> = dataset.x(i).iter().chain(dataset.y(i)).map(|v| fmt_f64(*v)).collect();
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let meta = DatasetMeta {
        n: dataset.n(),
        seed: dataset.seed,
        model_id: model_id.to_string(),
        sigma,
        rng: Some(RNG_NAME.into()),
        gaussian: Some(GAUSSIAN_TRANSFORM.into()),
    };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

/// Reads a dataset CSV and its sidecar.
pub fn load_csv(path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let side = sidecar_path(path);
    let meta_text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    let m_in = headers.iter().filter(|h| h.starts_with("x_")).count();
    let n_out = headers.iter().filter(|h| h.starts_with("y_")).count();
    let mut columns = Vec::with_capacity(m_in + n_out);
    for name in (1..=m_in).map(|j| format!("x_{j}")).chain((1..=n_out).map(|k| format!("y_{k}"))) {
        columns.push(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or(Error::MissingColumn(name))?,
        );
    }
    if m_in == 0 {
        return Err(Error::MissingColumn("x_1".into()));
    }
    if n_out == 0 {
        return Err(Error::MissingColumn("y_1".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        for (k, &c) in columns.iter().enumerate() {
            let field = rec.get(c).unwrap_or("");
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad number `{field}` in {}", path.display())))?;
            if k < m_in {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let data = Dataset::from_parts(xs, ys, m_in, n_out, meta.seed)?;
    if data.n() != meta.n {
        return Err(Error::invalid(format!(
            "sidecar says n = {} but the CSV holds {} rows",
            meta.n,
            data.n()
        )));
    }
    Ok((data, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{catalog, PriorKind};

    fn truth(id: &str, sigma: f64) -> TrueProcess {
        let spec = catalog::model_spec(id, PriorKind::Uniform).unwrap();
        catalog::truth(&spec, sigma, None).unwrap()
    }

    #[test]
    fn noiseless_limit() {
        let t = truth("sinmix", 1e-12);
        let d = generate(&t, 500, 3).unwrap();
        let worst = (0..d.n()).map(|i| (d.y(i)[0] - t.r0(d.x(i))[0]).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn noise_variance_at_large_n() {
        let t = truth("sinmix", 0.1);
        let d = generate(&t, 100_000, 17).unwrap();
        let (_, var) = crate::model::sample_mean_var(d.ys());
        assert!((0.0095..=0.0105).contains(&var), "{var}");
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let t = truth("linear-2", 0.1);
        let a = generate(&t, 50, 1).unwrap();
        let b = generate(&t, 50, 1).unwrap();
        let c = generate(&t, 50, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.xs().iter().zip(b.xs()).all(|(u, v)| u.to_bits() == v.to_bits()));
        assert_ne!(a.x(0), c.x(0));
    }

    #[test]
    fn nested_prefixes() {
        let t = truth("linear-2", 0.1);
        let big = generate(&t, 400, 9).unwrap();
        assert_eq!(big.prefix(100).unwrap(), generate(&t, 100, 9).unwrap());
    }

    #[test]
    fn residual_moments_and_support() {
        let spec = catalog::model_spec("linear-3", PriorKind::Uniform).unwrap();
        let t = catalog::truth(&spec, 0.3, Some(&[0.5, -0.2, 0.1])).unwrap();
        t.noise_self_test(50_000, 5).unwrap();
        let d = generate(&t, 2000, 5).unwrap();
        assert!(d.xs().iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn zero_n_rejected() {
        assert!(generate(&truth("linear-1", 0.1), 0, 0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = generate(&truth("linear-2", 0.1), 64, 123).unwrap();
        save_csv(&d, &path, "linear-2", 0.1).unwrap();
        let (back, meta) = load_csv(&path).unwrap();
        assert_eq!(back, d);
        assert_eq!(meta.model_id, "linear-2");
        assert_eq!(meta.seed, 123);
        assert_eq!(meta.gaussian.as_deref(), Some(GAUSSIAN_TRANSFORM));
    }

    #[test]
    fn csv_missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x_1,x_2\n0.1,0.2\n").unwrap();
        std::fs::write(
            sidecar_path(&path),
            r#"{"n":1,"seed":0,"model_id":"linear-2","sigma":0.1}"#,
        )
        .unwrap();
        match load_csv(&path) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "y_1"),
            other => panic!("{other:?}"),
        }
    }
}
