use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Backend, ExperimentConfig};
use crate::birational::{self, InvariantEstimate, VolumeProfile};
use crate::data::{generate, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{ErrorReport, REPORT_COLUMNS};
use crate::model::{catalog, ModelSpec, TrueProcess};
use crate::numeric::{covariance_of_means, mix_seed, MeanSe, SeedPurpose};
use crate::posterior::{grid_posterior, sample_posterior, GibbsTarget, PosteriorSamples, XQuadrature};

/// Dataset seed for a replication. It does not depend on `n` or `β`, so the
/// datasets of one replication are nested across `n` and shared across `β`.
pub fn data_seed(master: u64, replication: usize) -> u64 {
    mix_seed(master, &[replication as u64, SeedPurpose::Data as u64])
}

pub fn mcmc_seed(master: u64, n: usize, beta: f64, replication: usize) -> u64 {
    mix_seed(
        master,
        &[n as u64, beta.to_bits(), replication as u64, SeedPurpose::Mcmc as u64],
    )
}

pub fn xquad_seed(master: u64) -> u64 {
    mix_seed(master, &[SeedPurpose::XQuad as u64])
}

pub fn prior_volume_seed(master: u64) -> u64 {
    mix_seed(master, &[SeedPurpose::PriorVolume as u64])
}

/// Everything shared by the replications of one config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub truth: TrueProcess,
    pub xq: XQuadrature,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = catalog::model_spec(&config.model, config.prior)?;
        let truth = catalog::truth(&spec, config.sigma, config.true_w.as_deref())?;
        let xq = XQuadrature::new(&truth, config.xq_size, xquad_seed(config.master_seed), config.xq_scheme)?;
        Ok(Experiment {
            config,
            spec,
            truth,
            xq,
        })
    }

    pub fn dataset(&self, n: usize, replication: usize) -> Result<Dataset> {
        generate(&self.truth, n, data_seed(self.config.master_seed, replication))
    }

    /// Posterior for one cell by the configured backend. MCMC output that
    /// fails the R̂ check is rerun with doubled burn-in and draws up to
    /// `mcmc_retries` times.
    pub fn posterior(&self, dataset: &Dataset, n: usize, beta: f64, replication: usize) -> Result<PosteriorSamples> {
        let target = GibbsTarget::new(&self.spec, dataset, beta)?;
        match self.config.backend {
            Backend::Oracle => grid_posterior(&target, &self.config.grid),
            Backend::Mcmc => {
                let seed = mcmc_seed(self.config.master_seed, n, beta, replication);
                let mut cfg = self.config.mcmc.clone();
                let mut samples = sample_posterior(&target, &cfg, seed)?;
                for attempt in 1..=self.config.mcmc_retries {
                    if samples.converged() {
                        break;
                    }
                    cfg.burn_in *= 2;
                    cfg.draws_per_chain *= 2;
                    log::info!("n={n} beta={beta} rep={replication}: retry {attempt} with {} draws", cfg.draws_per_chain);
                    samples = sample_posterior(&target, &cfg, mix_seed(seed, &[attempt as u64]))?;
                }
                Ok(samples)
            }
        }
    }

    /// Dataset → posterior → estimators for one `(n, β, replication)`.
    pub fn run_replication(&self, n: usize, beta: f64, replication: usize) -> Result<ErrorReport> {
        let data = self.dataset(n, replication)?;
        let samples = self.posterior(&data, n, beta, replication)?;
        Ok(ErrorReport::compute(&samples, &data, &self.truth, &self.spec, &self.xq, replication))
    }

    /// Replications `reps` of one cell, in replication order.
    pub fn run_cell(&self, n: usize, beta: f64, reps: std::ops::Range<usize>) -> Result<Vec<ErrorReport>> {
        reps.into_par_iter()
            .map(|r| self.run_replication(n, beta, r))
            .collect()
    }

    /// Prior-volume profile on the experiment's node set.
    pub fn volume_profile(&self) -> Result<VolumeProfile> {
        birational::volume_profile(
            &self.spec,
            &self.truth,
            &self.xq,
            self.config.volume.t_grid.as_deref(),
            self.config.volume.n_prior_samples,
            prior_volume_seed(self.config.master_seed),
        )
    }
}

/// Convenience wrapper around [`Experiment::run_replication`].
pub fn run_replication(config: &ExperimentConfig, n: usize, beta: f64, replication: usize) -> Result<ErrorReport> {
    Experiment::new(config.clone())?.run_replication(n, beta, replication)
}

/// Aggregates for one `(n, β)` cell. Statistics are over converged rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub beta: f64,
    pub rows: usize,
    pub converged: usize,
    pub flagged: usize,
    pub fields: BTreeMap<String, MeanSe>,
    /// `n(G − S)`.
    pub g_scaled: MeanSe,
    /// `n(T − S)`.
    pub t_scaled: MeanSe,
    /// Covariance of the means of `n(G − S)` and `n(T − S)`.
    pub cov_gt_scaled: f64,
    pub mean_v: MeanSe,
    /// `mean Ĝ − mean G` with the combined SE `√(se_Ĝ² + se_G²)`.
    pub ghat_minus_g: MeanSe,
    /// `mean stein − σ²β·mean V` with the combined SE.
    pub stein_gap: MeanSe,
    pub error_inversion: InvariantEstimate,
    pub nu_from_v: InvariantEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub model: String,
    pub sigma: f64,
    pub n_out: usize,
    pub d: usize,
    pub cells: Vec<CellSummary>,
    pub flagged_rows: usize,
    pub total_rows: usize,
    #[serde(default)]
    pub volume_fit: Option<InvariantEstimate>,
}

impl SweepResult {
    pub fn cell(&self, n: usize, beta: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.n == n && c.beta == beta)
    }

    pub fn converged_fraction(&self) -> f64 {
        if self.total_rows == 0 {
            return f64::NAN;
        }
        1.0 - self.flagged_rows as f64 / self.total_rows as f64
    }
}

fn field_values(rows: &[&ErrorReport], f: impl Fn(&ErrorReport) -> f64) -> Vec<f64> {
    rows.iter().map(|r| f(r)).collect()
}

/// Summary of one cell's rows (any order; flagged rows are counted but left
/// out of the statistics).
pub fn summarize_cell(rows: &[ErrorReport], sigma: f64) -> Result<CellSummary> {
    let first = rows.first().ok_or_else(|| Error::NoData("cell has no rows".into()))?;
    let (n, beta) = (first.n, first.beta);
    let mut sorted: Vec<&ErrorReport> = rows.iter().filter(|r| r.converged).collect();
    sorted.sort_by_key(|r| r.replication);
    if sorted.is_empty() {
        return Err(Error::NoData(format!("no converged rows at n={n}, beta={beta}")));
    }
    let nf = n as f64;
    let mut fields = BTreeMap::new();
    let getters: [(&str, fn(&ErrorReport) -> f64); 11] = [
        ("T", |r| r.t),
        ("G", |r| r.g),
        ("V", |r| r.v),
        ("S", |r| r.s),
        ("G_hat", |r| r.g_hat),
        ("D1", |r| r.d1),
        ("D2", |r| r.d2),
        ("D3", |r| r.d3),
        ("D4", |r| r.d4),
        ("stein_lhs", |r| r.stein_lhs),
        ("G_hat_minus_G", |r| r.g_hat - r.g),
    ];
    for (name, get) in getters {
        fields.insert(name.to_string(), MeanSe::from_values(&field_values(&sorted, get)));
    }
    let gs = field_values(&sorted, |r| nf * (r.g - r.s));
    let ts = field_values(&sorted, |r| nf * (r.t - r.s));
    let g_scaled = MeanSe::from_values(&gs);
    let t_scaled = MeanSe::from_values(&ts);
    let cov_gt_scaled = covariance_of_means(&gs, &ts);
    let mean_v = fields["V"];
    let (g, gh) = (fields["G"], fields["G_hat"]);
    let ghat_minus_g = MeanSe {
        mean: gh.mean - g.mean,
        se: crate::numeric::combined_se(gh.se, g.se),
        count: g.count,
    };
    let stein = fields["stein_lhs"];
    let target = mean_v.scaled(sigma * sigma * beta);
    let stein_gap = MeanSe {
        mean: stein.mean - target.mean,
        se: crate::numeric::combined_se(stein.se, target.se),
        count: stein.count,
    };
    Ok(CellSummary {
        n,
        beta,
        rows: rows.len(),
        converged: sorted.len(),
        flagged: rows.len() - sorted.len(),
        fields,
        g_scaled,
        t_scaled,
        cov_gt_scaled,
        mean_v,
        ghat_minus_g,
        stein_gap,
        error_inversion: birational::invariants_from_errors(g_scaled, t_scaled, cov_gt_scaled, beta, sigma),
        nu_from_v: birational::nu_from_v(mean_v.mean, beta, mean_v.se),
    })
}

/// Groups rows by `(n, β)` (ordered by `n`, then `β`) and summarizes each.
pub fn summarize(
    rows: &[ErrorReport],
    model: &str,
    sigma: f64,
    n_out: usize,
    d: usize,
    volume_fit: Option<InvariantEstimate>,
) -> Result<SweepResult> {
    if rows.is_empty() {
        return Err(Error::NoData("sweep has no rows".into()));
    }
    let mut groups: BTreeMap<(usize, u64), Vec<ErrorReport>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.n, r.beta.to_bits())).or_default().push(r.clone());
    }
    let mut keys: Vec<(usize, u64)> = groups.keys().copied().collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(f64::from_bits(a.1).total_cmp(&f64::from_bits(b.1))));
    let cells = keys
        .iter()
        .map(|k| summarize_cell(&groups[k], sigma))
        .collect::<Result<Vec<_>>>()?;
    let flagged = rows.iter().filter(|r| !r.converged).count();
    Ok(SweepResult {
        schema_version: super::config::SCHEMA_VERSION,
        model: model.to_string(),
        sigma,
        n_out,
        d,
        cells,
        flagged_rows: flagged,
        total_rows: rows.len(),
        volume_fit,
    })
}

pub const RAW_CSV: &str = "raw.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CONFIG_JSON: &str = "config.json";
pub const VOLUME_JSON: &str = "volume.json";
const ROWS_DIR: &str = "rows";

fn row_path(dir: &Path, n: usize, beta_index: usize, rep: usize) -> PathBuf {
    dir.join(ROWS_DIR).join(format!("n{n}_b{beta_index}_r{rep}.csv"))
}

pub fn write_rows(path: &Path, rows: &[ErrorReport]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(REPORT_COLUMNS)?;
    for r in rows {
        w.write_record(r.to_record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ErrorReport>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    for col in REPORT_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    r.records()
        .map(|rec| ErrorReport::from_record(&headers, &rec?))
        .collect()
}

/// A previously written row file is reused if it parses and matches the
/// cell; anything else is recomputed.
fn cached_row(path: &Path, n: usize, beta: f64, rep: usize) -> Option<ErrorReport> {
    let rows = read_rows(path).ok()?;
    match rows.as_slice() {
        [r] if r.n == n && r.beta == beta && r.replication == rep => Some(r.clone()),
        _ => None,
    }
}

/// Runs every `(n, β, replication)` of the config into `out_dir`:
/// per-replication row files under `rows/` (reused on rerun), the merged
/// `raw.csv`, `summary.json`, a copy of the config and, when enabled, the
/// volume profile.
pub fn run_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<SweepResult> {
    let exp = Experiment::new(config.clone())?;
    fs::create_dir_all(out_dir.join(ROWS_DIR)).map_err(|e| Error::io(out_dir, e))?;
    config.save(&out_dir.join(CONFIG_JSON))?;

    let mut tasks = Vec::new();
    for &n in &config.ns {
        for (bi, &beta) in config.betas.iter().enumerate() {
            for rep in 0..config.replications {
                tasks.push((n, bi, beta, rep));
            }
        }
    }
    let work = || -> Result<Vec<ErrorReport>> {
        tasks
            .par_iter()
            .map(|&(n, bi, beta, rep)| {
                let path = row_path(out_dir, n, bi, rep);
                if let Some(row) = cached_row(&path, n, beta, rep) {
                    return Ok(row);
                }
                let row = exp.run_replication(n, beta, rep)?;
                if !row.converged {
                    log::warn!("n={n} beta={beta} rep={rep} did not converge; row flagged");
                }
                let tmp = path.with_extension("tmp");
                write_rows(&tmp, std::slice::from_ref(&row))?;
                fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
                Ok(row)
            })
            .collect()
    };
    let rows = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    write_rows(&out_dir.join(RAW_CSV), &rows)?;

    let volume_fit = if config.volume.enabled {
        let profile = exp.volume_profile()?;
        let path = out_dir.join(VOLUME_JSON);
        fs::write(&path, serde_json::to_string_pretty(&profile)?).map_err(|e| Error::io(&path, e))?;
        match birational::rlct_volume_fit(&profile, exp.spec.d()) {
            Ok(e) => Some(e),
            Err(e) => {
                log::warn!("volume fit failed: {e}");
                None
            }
        }
    } else {
        None
    };
    let result = summarize(&rows, &config.model, config.sigma, exp.spec.n_out(), exp.spec.d(), volume_fit)?;
    let path = out_dir.join(SUMMARY_JSON);
    fs::write(&path, serde_json::to_string_pretty(&result)?).map_err(|e| Error::io(&path, e))?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::McmcConfig;

    fn small(model: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(model, 0.1, vec![1.0, 2.0], vec![20, 40], 2, 11);
        c.mcmc = McmcConfig {
            burn_in: 200,
            draws_per_chain: 300,
            ..McmcConfig::default()
        };
        c.xq_size = 300;
        c
    }

    #[test]
    fn seeds_are_distinct_across_purposes() {
        let s = [data_seed(1, 0), mcmc_seed(1, 100, 1.0, 0), xquad_seed(1), prior_volume_seed(1)];
        for i in 0..s.len() {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_ne!(mcmc_seed(1, 100, 1.0, 0), mcmc_seed(1, 100, 0.5, 0));
    }

    #[test]
    fn replication_is_deterministic() {
        let cfg = small("sinmix");
        let a = run_replication(&cfg, 20, 1.0, 3).unwrap();
        let b = run_replication(&cfg, 20, 1.0, 3).unwrap();
        assert_eq!(a.to_record(), b.to_record());
    }

    #[test]
    fn sweep_accounting_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small("linear-2");
        cfg.replications = 1;
        let res = run_sweep(&cfg, dir.path()).unwrap();
        let raw = read_rows(&dir.path().join(RAW_CSV)).unwrap();
        assert_eq!(raw.len(), cfg.ns.len() * cfg.betas.len());
        assert_eq!(res.cells.len(), 4);
        let before = fs::read(dir.path().join(RAW_CSV)).unwrap();
        // remove one row file; the rerun recomputes it and reuses the rest
        fs::remove_file(row_path(dir.path(), 40, 1, 0)).unwrap();
        run_sweep(&cfg, dir.path()).unwrap();
        assert_eq!(before, fs::read(dir.path().join(RAW_CSV)).unwrap());
    }

    #[test]
    fn serial_and_parallel_agree() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let mut cfg = small("sinmix");
        cfg.ns = vec![20];
        cfg.workers = Some(1);
        run_sweep(&cfg, d1.path()).unwrap();
        cfg.workers = Some(3);
        run_sweep(&cfg, d2.path()).unwrap();
        assert_eq!(
            fs::read(d1.path().join(RAW_CSV)).unwrap(),
            fs::read(d2.path().join(RAW_CSV)).unwrap()
        );
    }

    #[test]
    fn summary_is_recomputable_from_raw() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small("linear-1");
        let res = run_sweep(&cfg, dir.path()).unwrap();
        let raw = read_rows(&dir.path().join(RAW_CSV)).unwrap();
        let again = summarize(&raw, &cfg.model, cfg.sigma, 1, 1, None).unwrap();
        let stored: SweepResult =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_JSON)).unwrap()).unwrap();
        assert_eq!(again, stored);
        assert_eq!(res, stored);
        for c in &stored.cells {
            let g = c.fields["G"].mean;
            let s = c.fields["S"].mean;
            assert!((c.g_scaled.mean - c.n as f64 * (g - s)).abs() < 1e-12);
        }
    }

    #[test]
    fn unwritable_output_fails_fast() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, "x").unwrap();
        let err = run_sweep(&small("linear-1"), &file.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn empty_rows_are_no_data() {
        assert!(matches!(summarize(&[], "linear-1", 0.1, 1, 1, None), Err(Error::NoData(_))));
    }
}
