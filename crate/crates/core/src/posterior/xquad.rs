use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TrueProcess;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum XQuadScheme {
    /// Independent draws from `q`.
    #[default]
    Iid,
    /// Latin-hypercube draws: each coordinate hits each of `Q` equal strata
    /// exactly once (plain stratified sampling when `M = 1`).
    Stratified,
}

/// Fixed node set discretizing `E_X[·]` under `q`, shared by every `w` in an
/// experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct XQuadrature {
    nodes: Vec<f64>,
    m_in: usize,
    seed: u64,
    scheme: XQuadScheme,
}

impl XQuadrature {
    pub fn new(truth: &TrueProcess, q: usize, seed: u64, scheme: XQuadScheme) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid("quadrature needs at least one node"));
        }
        let m_in = truth.m_in();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = vec![0.0; q * m_in];
        match scheme {
            XQuadScheme::Iid => {
                for x in nodes.chunks_exact_mut(m_in) {
                    truth.input.sample_into(&mut rng, x);
                }
            }
            XQuadScheme::Stratified => {
                let perms: Vec<Vec<usize>> = (0..m_in)
                    .map(|_| {
                        let mut p: Vec<usize> = (0..q).collect();
                        p.shuffle(&mut rng);
                        p
                    })
                    .collect();
                let mut strata = vec![0; m_in];
                for (i, x) in nodes.chunks_exact_mut(m_in).enumerate() {
                    for (s, p) in strata.iter_mut().zip(&perms) {
                        *s = p[i];
                    }
                    truth.input.sample_stratum(&mut rng, &strata, q, x);
                }
            }
        }
        Ok(XQuadrature {
            nodes,
            m_in,
            seed,
            scheme,
        })
    }

    pub fn iid(truth: &TrueProcess, q: usize, seed: u64) -> Result<Self> {
        Self::new(truth, q, seed, XQuadScheme::Iid)
    }

    pub fn stratified(truth: &TrueProcess, q: usize, seed: u64) -> Result<Self> {
        Self::new(truth, q, seed, XQuadScheme::Stratified)
    }

    pub fn len(&self) -> usize {
        self.nodes.len() / self.m_in
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn m_in(&self) -> usize {
        self.m_in
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn scheme(&self) -> XQuadScheme {
        self.scheme
    }
    pub fn flat(&self) -> &[f64] {
        &self.nodes
    }
    pub fn nodes(&self) -> std::slice::ChunksExact<'_, f64> {
        self.nodes.chunks_exact(self.m_in)
    }
}
