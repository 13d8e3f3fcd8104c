//! Synthetic choice data: Monte Carlo random-utility shares under correlated
//! errors, and closed-form logit datasets whose criterion vanishes at the truth.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::ParamPoint;
use crate::data::{Dataset, Market, ShareTotal};
use crate::error::{Error, Result};
use crate::registry;
use crate::seed::{self, stream};

pub const MIN_MC_DRAWS: usize = 1000;

/// Draws one error vector per call.
pub trait ErrorLaw: Send + Sync {
    fn name(&self) -> &'static str;

    /// Fills `out` (length `d`) with one draw of the error vector.
    fn sample(&self, rng: &mut ChaCha8Rng, scratch: &mut Vec<f64>, out: &mut [f64]);
}

/// `eps_j = weight * sum_{l < window} eta_{j+l}`, `eta` i.i.d. N(0,1); a draw
/// uses `d + window - 1` innovations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovingWindow {
    pub window: usize,
    pub weight: f64,
}

impl Default for MovingWindow {
    fn default() -> Self {
        Self {
            window: 4,
            weight: 1.0 / 3.0,
        }
    }
}

impl ErrorLaw for MovingWindow {
    fn name(&self) -> &'static str {
        "ma-window"
    }

    fn sample(&self, rng: &mut ChaCha8Rng, scratch: &mut Vec<f64>, out: &mut [f64]) {
        let d = out.len();
        let w = self.window.max(1);
        scratch.clear();
        scratch.extend((0..d + w - 1).map(|_| -> f64 { StandardNormal.sample(rng) }));
        let mut acc: f64 = scratch[..w].iter().sum();
        out[0] = self.weight * acc;
        for j in 1..d {
            acc += scratch[j + w - 1] - scratch[j - 1];
            out[j] = self.weight * acc;
        }
    }
}

/// I.i.d. standard Gumbel errors; argmax frequencies converge to logit shares.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IidGumbel;

impl ErrorLaw for IidGumbel {
    fn name(&self) -> &'static str {
        "iid-gumbel"
    }

    fn sample(&self, rng: &mut ChaCha8Rng, _scratch: &mut Vec<f64>, out: &mut [f64]) {
        for e in out.iter_mut() {
            let u: f64 = rng.random();
            // u in [0, 1); guard the zero endpoint.
            *e = -(-(u.max(f64::MIN_POSITIVE)).ln()).ln();
        }
    }
}

/// Covariate generator producing `n` matrices of size `d x 2`.
pub trait CovariateDesign: Send + Sync {
    fn name(&self) -> &'static str;

    fn draw(&self, n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<DMatrix<f64>>;
}

const MEANS: [f64; 2] = [1.0, -1.0];
const EFFECT_VAR: f64 = 0.5;

fn normal(mean: f64, var: f64) -> Normal<f64> {
    Normal::new(mean, var.sqrt()).expect("finite normal parameters")
}

/// `X_{1,j} ~ N(1,1)`, `X_{2,j} ~ N(-1,1)`, independent across choices and markets.
#[derive(Clone, Copy, Debug, Default)]
pub struct IidCovariates;

impl CovariateDesign for IidCovariates {
    fn name(&self) -> &'static str {
        "iid"
    }

    fn draw(&self, n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<DMatrix<f64>> {
        let dists = MEANS.map(|m| normal(m, 1.0));
        (0..n)
            .map(|_| DMatrix::from_fn(d, 2, |_, c| dists[c].sample(rng)))
            .collect()
    }
}

/// A choice-level effect `N(+-1, 0.5)` shared by all markets plus N(0,1) noise.
#[derive(Clone, Copy, Debug, Default)]
pub struct BrandEffects;

impl CovariateDesign for BrandEffects {
    fn name(&self) -> &'static str {
        "brand-effects"
    }

    fn draw(&self, n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<DMatrix<f64>> {
        let dists = MEANS.map(|m| normal(m, EFFECT_VAR));
        let base = DMatrix::from_fn(d, 2, |_, c| dists[c].sample(rng));
        (0..n)
            .map(|_| base.map(|v| v + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)))
            .collect()
    }
}

/// A market-level effect `N(+-1, 0.5)` shared by all choices in a market plus
/// N(0,1) noise.
#[derive(Clone, Copy, Debug, Default)]
pub struct MarketEffects;

impl CovariateDesign for MarketEffects {
    fn name(&self) -> &'static str {
        "market-effects"
    }

    fn draw(&self, n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<DMatrix<f64>> {
        let dists = MEANS.map(|m| normal(m, EFFECT_VAR));
        (0..n)
            .map(|_| {
                let effect = [dists[0].sample(rng), dists[1].sample(rng)];
                DMatrix::from_fn(d, 2, |_, c| {
                    effect[c] + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub kind: String,
}

impl ErrorSpec {
    pub fn ma_window() -> Self {
        Self {
            kind: "ma-window".into(),
        }
    }

    pub fn iid_gumbel() -> Self {
        Self {
            kind: "iid-gumbel".into(),
        }
    }

    pub fn law(&self) -> Result<Box<dyn ErrorLaw>> {
        registry::error_laws().create(&self.kind, &())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub d: usize,
    pub theta0: f64,
    pub covariate_mode: String,
    pub error: ErrorSpec,
    pub mc_draws: usize,
    pub seed: u64,
}

pub const THETA0: f64 = 0.75 * PI;

/// Named designs `(preset, d, k)`.
pub const PRESETS: [(&str, usize, usize); 5] = [
    ("d100k10", 100, 10),
    ("d500k100", 500, 100),
    ("d1000k100", 1000, 100),
    ("d5000k100", 5000, 100),
    ("d5000k500", 5000, 500),
];

impl SimConfig {
    /// Default design with `d` choices: 30 markets, i.i.d. covariates,
    /// moving-window errors, 10^5 draws (10^4 above d = 1000).
    pub fn new(d: usize, seed: u64) -> Self {
        Self {
            n: 30,
            d,
            theta0: THETA0,
            covariate_mode: "iid".into(),
            error: ErrorSpec::ma_window(),
            mc_draws: default_mc_draws(d),
            seed,
        }
    }

    /// Config and suggested `k` for a named design.
    pub fn preset(name: &str, seed: u64) -> Result<(Self, usize)> {
        PRESETS
            .iter()
            .find(|(p, _, _)| *p == name)
            .map(|(_, d, k)| (Self::new(*d, seed), *k))
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
                Error::parameter("preset", format!("unknown preset '{name}'; available: {}", names.join(", ")))
            })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::parameter("n", "need at least 2 markets"));
        }
        if self.d < 2 {
            return Err(Error::parameter("d", "need at least 2 choices"));
        }
        if self.mc_draws < MIN_MC_DRAWS {
            return Err(Error::parameter("mc_draws", format!("{} < {MIN_MC_DRAWS}", self.mc_draws)));
        }
        if !self.theta0.is_finite() {
            return Err(Error::parameter("theta0", "must be finite"));
        }
        Ok(())
    }

    pub fn beta0(&self) -> DVector<f64> {
        ParamPoint::from_angle(self.theta0).into_vector()
    }
}

pub fn default_mc_draws(d: usize) -> usize {
    if d <= 1000 {
        100_000
    } else {
        10_000
    }
}

pub fn draw_covariates(config: &SimConfig) -> Result<Vec<DMatrix<f64>>> {
    config.validate()?;
    let design = registry::covariate_designs().create(&config.covariate_mode, &())?;
    let mut rng = seed::rng(seed::split(config.seed, stream::COVARIATES));
    Ok(design.draw(config.n, config.d, &mut rng))
}

/// Frequencies of `argmax_j (u_j + eps_j)` over `mc_draws` error draws. Ties go
/// to the lowest index.
pub fn compute_shares_mc(utilities: &[f64], error: &dyn ErrorLaw, mc_draws: usize, seed: u64) -> Result<DVector<f64>> {
    if mc_draws < MIN_MC_DRAWS {
        return Err(Error::parameter("mc_draws", format!("{mc_draws} < {MIN_MC_DRAWS}")));
    }
    if utilities.is_empty() {
        return Err(Error::parameter("utilities", "empty"));
    }
    let d = utilities.len();
    let mut rng = seed::rng(seed);
    let mut counts = vec![0u64; d];
    let mut eps = vec![0.0; d];
    let mut scratch = Vec::with_capacity(d + 8);
    for _ in 0..mc_draws {
        error.sample(&mut rng, &mut scratch, &mut eps);
        let mut best = 0;
        let mut best_v = utilities[0] + eps[0];
        for j in 1..d {
            let v = utilities[j] + eps[j];
            if v > best_v {
                best = j;
                best_v = v;
            }
        }
        counts[best] += 1;
    }
    Ok(DVector::from_iterator(d, counts.iter().map(|c| *c as f64 / mc_draws as f64)))
}

fn labels(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

fn assemble(covariates: Vec<DMatrix<f64>>, shares: Vec<DVector<f64>>) -> Result<Dataset> {
    let n = covariates.len();
    let d = covariates[0].nrows();
    let b = covariates[0].ncols();
    let markets = covariates
        .into_iter()
        .zip(shares)
        .map(|(x, p)| Market::new(x, p))
        .collect::<Result<Vec<_>>>()?;
    Dataset::with_labels(
        markets,
        ShareTotal::Complete,
        labels("", n),
        labels("", d),
        labels("x", b),
    )
}

/// Covariates, utilities `X beta(theta0)`, and Monte Carlo shares per market
/// (each market on its own sub-seed).
pub fn simulate_dataset(config: &SimConfig) -> Result<Dataset> {
    let covariates = draw_covariates(config)?;
    let law = config.error.law()?;
    let beta = config.beta0();
    let shares = covariates
        .par_iter()
        .enumerate()
        .map(|(m, x)| {
            let u = x * &beta;
            compute_shares_mc(u.as_slice(), law.as_ref(), config.mc_draws, seed::split2(config.seed, stream::SHARES, m as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(covariates, shares)
}

/// Numerically stable softmax.
pub fn logit_shares(utilities: &[f64]) -> DVector<f64> {
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = utilities.iter().map(|u| (u - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    DVector::from_iterator(utilities.len(), exps.into_iter().map(|e| e / total))
}

/// `n` markets of `d x b` standard-normal covariates with closed-form logit
/// shares at `beta_true`.
pub fn logit_oracle_dataset(n: usize, d: usize, b: usize, beta_true: &DVector<f64>, seed: u64) -> Result<Dataset> {
    if n < 2 || d < 2 || b < 1 {
        return Err(Error::parameter("logit oracle", format!("need n >= 2, d >= 2, b >= 1; got {n}, {d}, {b}")));
    }
    if beta_true.len() != b {
        return Err(Error::dimension("beta_true", b, beta_true.len()));
    }
    let mut rng = seed::rng(seed::split(seed, stream::COVARIATES));
    let covariates: Vec<DMatrix<f64>> = (0..n)
        .map(|_| DMatrix::from_fn(d, b, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let shares = covariates.iter().map(|x| logit_shares((x * beta_true).as_slice())).collect();
    assemble(covariates, shares)
}
