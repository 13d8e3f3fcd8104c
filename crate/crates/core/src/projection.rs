//! Sparse random projection matrices and the streaming compression kernel.
//!
//! Entries are `sqrt(s / k) * {+1, 0, -1}` with probabilities
//! `1/(2s), 1 - 1/s, 1/(2s)`. The `1/sqrt(k)` factor makes `|Ru|^2` an unbiased
//! estimate of `|u|^2`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ChoiceData, ColumnScaling, Dataset};
use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

/// The sparsity parameter `s`, either a named preset or an explicit value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sparsity {
    /// `s = 1`: every entry nonzero, minimum variance.
    Optimal,
    /// `s = 3`: same variance as a dense Gaussian projection.
    GaussianEquivalent,
    /// `s = sqrt(d)`.
    Sparse,
    Custom(f64),
}

impl Sparsity {
    pub fn value(&self, d: usize) -> f64 {
        match self {
            Sparsity::Optimal => 1.0,
            Sparsity::GaussianEquivalent => 3.0,
            Sparsity::Sparse => (d as f64).sqrt(),
            Sparsity::Custom(s) => *s,
        }
    }
}

impl FromStr for Sparsity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "optimal" => Ok(Sparsity::Optimal),
            "3" | "gaussian" | "gaussian-equivalent" => Ok(Sparsity::GaussianEquivalent),
            "sqrt" | "sparse" => Ok(Sparsity::Sparse),
            other => other
                .parse::<f64>()
                .map(Sparsity::Custom)
                .map_err(|_| Error::parameter("s", format!("`{other}` is not 1, 3, sqrt or a real"))),
        }
    }
}

impl fmt::Display for Sparsity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sparsity::Optimal => write!(f, "1"),
            Sparsity::GaussianEquivalent => write!(f, "3"),
            Sparsity::Sparse => write!(f, "sqrt"),
            Sparsity::Custom(s) => write!(f, "{s}"),
        }
    }
}

/// Human label for a sparsity value relative to `d`.
pub fn sparsity_label(s: f64, d: usize) -> &'static str {
    if s == 1.0 {
        "optimal"
    } else if s == 3.0 {
        "gaussian-equivalent"
    } else if s == (d as f64).sqrt() {
        "sparse"
    } else {
        "custom"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub k: usize,
    pub d: usize,
    pub s: f64,
    pub seed: u64,
}

impl ProjectionSpec {
    pub fn new(k: usize, d: usize, sparsity: Sparsity, seed: u64) -> Result<Self> {
        let spec = Self {
            k,
            d,
            s: sparsity.value(d),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::parameter("k", "must be at least 1"));
        }
        if self.k > self.d {
            return Err(Error::dimension("k (must not exceed d)", self.d, self.k));
        }
        if !(self.s == 1.0 || (self.s > 1.0 && self.s <= self.d as f64)) {
            return Err(Error::parameter(
                "s",
                format!("{} must be 1 or lie in (1, d = {}]", self.s, self.d),
            ));
        }
        if self.k > u32::MAX as usize || self.d > u32::MAX as usize {
            return Err(Error::parameter("k, d", "must fit in 32 bits"));
        }
        Ok(())
    }

    /// Entry magnitude `sqrt(s / k)`.
    pub fn magnitude(&self) -> f64 {
        (self.s / self.k as f64).sqrt()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    /// Variance of `|R(u - v)|^2` for `w = u - v`:
    /// `(2 |w|^4 + (s - 3) sum w_j^4) / k`.
    pub fn predicted_variance(&self, w: &[f64]) -> f64 {
        let sq = stats::neumaier_sum(w.iter().map(|x| x * x));
        let quartic = stats::neumaier_sum(w.iter().map(|x| x.powi(4)));
        (2.0 * sq * sq + (self.s - 3.0) * quartic) / self.k as f64
    }
}

/// Sequential source of entry signs in {-1, 0, +1}. For `s = 1` each 64-bit draw
/// yields 64 signs (one per bit, low bit first). For moderate `s` each draw
/// yields two cells from its 32-bit halves (low half first); for very large `s`
/// one full 64-bit draw is used per cell to keep the probabilities exact.
struct SignStream {
    rng: ChaCha8Rng,
    mode: SignMode,
    buf: u64,
    left: u32,
}

#[derive(Clone, Copy)]
enum SignMode {
    Dense,
    Half { plus_below: u32, nonzero_below: u32 },
    Full { plus_below: u64, nonzero_below: u64 },
}

impl SignStream {
    const HALF_MAX_S: f64 = 1_048_576.0;

    fn new(spec: &ProjectionSpec) -> Self {
        let s = spec.s;
        let mode = if s == 1.0 {
            SignMode::Dense
        } else if s <= Self::HALF_MAX_S {
            let two32 = 4_294_967_296.0_f64;
            SignMode::Half {
                plus_below: (two32 / (2.0 * s)).round() as u32,
                nonzero_below: (two32 / s).round() as u32,
            }
        } else {
            let two64 = 18_446_744_073_709_551_616.0_f64;
            SignMode::Full {
                plus_below: (two64 / (2.0 * s)) as u64,
                nonzero_below: (two64 / s) as u64,
            }
        };
        Self {
            rng: seed::rng(spec.seed),
            mode,
            buf: 0,
            left: 0,
        }
    }

    #[inline]
    fn next(&mut self) -> i8 {
        match self.mode {
            SignMode::Dense => {
                if self.left == 0 {
                    self.buf = self.rng.next_u64();
                    self.left = 64;
                }
                let bit = self.buf & 1;
                self.buf >>= 1;
                self.left -= 1;
                1 - 2 * bit as i8
            }
            SignMode::Half {
                plus_below,
                nonzero_below,
            } => {
                if self.left == 0 {
                    self.buf = self.rng.next_u64();
                    self.left = 2;
                }
                let r = self.buf as u32;
                self.buf >>= 32;
                self.left -= 1;
                if r < plus_below {
                    1
                } else if r < nonzero_below {
                    -1
                } else {
                    0
                }
            }
            SignMode::Full {
                plus_below,
                nonzero_below,
            } => {
                let r = self.rng.next_u64();
                if r < plus_below {
                    1
                } else if r < nonzero_below {
                    -1
                } else {
                    0
                }
            }
        }
    }
}

/// Visits the nonzero entries of the matrix determined by `spec` in row-major
/// draw order.
fn for_each_entry(spec: &ProjectionSpec, mut visit: impl FnMut(usize, usize, i8)) {
    let mut signs = SignStream::new(spec);
    for row in 0..spec.k {
        for col in 0..spec.d {
            let sign = signs.next();
            if sign != 0 {
                visit(row, col, sign);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triplet {
    pub row: u32,
    pub col: u32,
    pub value: f64,
}

/// A `k x d` sparse projection in triplet form, sorted by column then row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseProjection {
    spec: ProjectionSpec,
    entries: Vec<Triplet>,
    col_start: Vec<usize>,
}

impl SparseProjection {
    pub fn generate(spec: &ProjectionSpec) -> Result<Self> {
        spec.validate()?;
        let mag = spec.magnitude();
        let mut entries = Vec::with_capacity(((spec.k * spec.d) as f64 / spec.s * 1.05) as usize);
        for_each_entry(spec, |row, col, sign| {
            entries.push(Triplet {
                row: row as u32,
                col: col as u32,
                value: if sign > 0 { mag } else { -mag },
            })
        });
        entries.sort_unstable_by_key(|t| (t.col, t.row));
        Ok(Self::from_sorted(*spec, entries))
    }

    fn from_sorted(spec: ProjectionSpec, entries: Vec<Triplet>) -> Self {
        let mut col_start = vec![0usize; spec.d + 1];
        for t in &entries {
            col_start[t.col as usize + 1] += 1;
        }
        for c in 0..spec.d {
            col_start[c + 1] += col_start[c];
        }
        Self {
            spec,
            entries,
            col_start,
        }
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn entries(&self) -> &[Triplet] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Fraction of matrix cells that are nonzero.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.spec.k * self.spec.d) as f64
    }

    /// Nonzero entries in column `col`.
    pub fn column(&self, col: usize) -> &[Triplet] {
        &self.entries[self.col_start[col]..self.col_start[col + 1]]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.spec.k, self.spec.d);
        for t in &self.entries {
            m[(t.row as usize, t.col as usize)] = t.value;
        }
        m
    }

    pub fn apply_vector(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.spec.d {
            return Err(Error::dimension("projected vector", self.spec.d, v.len()));
        }
        let mut out = vec![0.0; self.spec.k];
        for (col, x) in v.iter().enumerate() {
            for t in self.column(col) {
                out[t.row as usize] += t.value * x;
            }
        }
        Ok(out)
    }

    /// Compresses one market from a stream of its choice rows `(covariates, share)`,
    /// which must arrive in choice order. Only the `k`-row output is held in memory.
    pub fn apply_rows<'r, I>(&self, b: usize, rows: I) -> Result<CompressedMarket>
    where
        I: IntoIterator<Item = (&'r [f64], f64)>,
    {
        let k = self.spec.k;
        let mut x = DMatrix::zeros(k, b);
        let mut p = DVector::zeros(k);
        let mut seen = 0usize;
        for (col, (covs, share)) in rows.into_iter().enumerate() {
            if col >= self.spec.d {
                return Err(Error::dimension("market rows", self.spec.d, col + 1));
            }
            if covs.len() != b {
                return Err(Error::dimension("covariate row", b, covs.len()));
            }
            for t in self.column(col) {
                let r = t.row as usize;
                for (c, v) in covs.iter().enumerate() {
                    x[(r, c)] += t.value * v;
                }
                p[r] += t.value * share;
            }
            seen = col + 1;
        }
        if seen != self.spec.d {
            return Err(Error::dimension("market rows", self.spec.d, seen));
        }
        Ok(CompressedMarket {
            covariates: x,
            shares: p,
        })
    }

    pub fn apply_market(&self, covariates: &DMatrix<f64>, shares: &DVector<f64>) -> Result<CompressedMarket> {
        if covariates.nrows() != self.spec.d {
            return Err(Error::dimension("market rows", self.spec.d, covariates.nrows()));
        }
        let b = covariates.ncols();
        let mut row = vec![0.0; b];
        let k = self.spec.k;
        let mut x = DMatrix::zeros(k, b);
        let mut p = DVector::zeros(k);
        for col in 0..self.spec.d {
            for (c, r) in row.iter_mut().enumerate() {
                *r = covariates[(col, c)];
            }
            let share = shares[col];
            for t in self.column(col) {
                let r = t.row as usize;
                for (c, v) in row.iter().enumerate() {
                    x[(r, c)] += t.value * v;
                }
                p[r] += t.value * share;
            }
        }
        Ok(CompressedMarket {
            covariates: x,
            shares: p,
        })
    }

    /// Compresses every market, in parallel across markets.
    pub fn apply(&self, data: &Dataset) -> Result<CompressedDataset> {
        if data.d() != self.spec.d {
            return Err(Error::dimension("dataset choice dimension", self.spec.d, data.d()));
        }
        let markets = data
            .markets()
            .par_iter()
            .map(|m| self.apply_market(m.covariates(), m.shares()))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompressedDataset {
            markets,
            b: data.b(),
            spec: self.spec,
            scaling: data.scaling().clone(),
        })
    }

    const MAGIC: &'static [u8; 4] = b"RPSP";
    const VERSION: u32 = 1;

    /// Binary cache: magic `RPSP`, version (u32), k, d (u64), s (f64), seed, nnz
    /// (u64), then nnz records of (row u32, col u32, value f64). Little-endian.
    pub fn write_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(Self::MAGIC).map_err(io)?;
        w.write_all(&Self::VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.spec.k as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.spec.d as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&self.spec.s.to_le_bytes()).map_err(io)?;
        w.write_all(&self.spec.seed.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes()).map_err(io)?;
        for t in &self.entries {
            w.write_all(&t.row.to_le_bytes()).map_err(io)?;
            w.write_all(&t.col.to_le_bytes()).map_err(io)?;
            w.write_all(&t.value.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_cache(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(io)?;
        if &b4 != Self::MAGIC {
            return Err(Error::parameter("projection cache", "bad magic"));
        }
        r.read_exact(&mut b4).map_err(io)?;
        if u32::from_le_bytes(b4) != Self::VERSION {
            return Err(Error::parameter("projection cache", "unsupported version"));
        }
        let mut next_u64 = |r: &mut BufReader<File>| -> Result<u64> {
            r.read_exact(&mut b8).map_err(io)?;
            Ok(u64::from_le_bytes(b8))
        };
        let k = next_u64(&mut r)? as usize;
        let d = next_u64(&mut r)? as usize;
        let s = f64::from_bits(next_u64(&mut r)?);
        let seed = next_u64(&mut r)?;
        let nnz = next_u64(&mut r)? as usize;
        let spec = ProjectionSpec { k, d, s, seed };
        spec.validate()?;
        if nnz > k * d {
            return Err(Error::parameter("projection cache", "more entries than cells"));
        }
        let mag = spec.magnitude();
        let mut entries = Vec::with_capacity(nnz);
        let mut rec = [0u8; 16];
        for _ in 0..nnz {
            r.read_exact(&mut rec).map_err(io)?;
            let t = Triplet {
                row: u32::from_le_bytes(rec[0..4].try_into().unwrap()),
                col: u32::from_le_bytes(rec[4..8].try_into().unwrap()),
                value: f64::from_le_bytes(rec[8..16].try_into().unwrap()),
            };
            if t.row as usize >= k || t.col as usize >= d || t.value.abs() != mag {
                return Err(Error::parameter("projection cache", format!("invalid entry {t:?}")));
            }
            if let Some(prev) = entries.last() {
                let prev: &Triplet = prev;
                if (prev.col, prev.row) >= (t.col, t.row) {
                    return Err(Error::parameter("projection cache", "entries not sorted or duplicated"));
                }
            }
            entries.push(t);
        }
        Ok(Self::from_sorted(spec, entries))
    }
}

/// One projected market: `k x b` covariates and a `k`-vector of projected shares.
/// Projected shares are not probabilities and may be negative.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedMarket {
    pub covariates: DMatrix<f64>,
    pub shares: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedDataset {
    markets: Vec<CompressedMarket>,
    b: usize,
    spec: ProjectionSpec,
    scaling: ColumnScaling,
}

impl CompressedDataset {
    pub fn from_parts(markets: Vec<CompressedMarket>, b: usize, spec: ProjectionSpec, scaling: ColumnScaling) -> Self {
        Self {
            markets,
            b,
            spec,
            scaling,
        }
    }

    pub fn markets(&self) -> &[CompressedMarket] {
        &self.markets
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn scaling(&self) -> &ColumnScaling {
        &self.scaling
    }
}

impl ChoiceData for CompressedDataset {
    fn n_markets(&self) -> usize {
        self.markets.len()
    }

    fn n_rows(&self) -> usize {
        self.spec.k
    }

    fn n_covariates(&self) -> usize {
        self.b
    }

    fn covariates(&self, market: usize) -> &DMatrix<f64> {
        &self.markets[market].covariates
    }

    fn shares(&self, market: usize) -> &DVector<f64> {
        &self.markets[market].shares
    }
}

/// `|Rw|^2` for the matrix `R` that `spec` generates, computed row by row without
/// materializing `R`.
pub fn projected_norm_sq(spec: &ProjectionSpec, w: &[f64]) -> f64 {
    let mut signs = SignStream::new(spec);
    let mut total = 0.0;
    for _ in 0..spec.k {
        let mut acc = 0.0;
        for x in w {
            match signs.next() {
                1 => acc += x,
                -1 => acc -= x,
                _ => {}
            }
        }
        total += acc * acc;
    }
    total * spec.s / spec.k as f64
}

/// Monte Carlo check of the distance-preservation law for one pair of vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JlReport {
    pub k: usize,
    pub d: usize,
    pub s: f64,
    pub label: String,
    pub draws: usize,
    pub true_sq_dist: f64,
    pub mean_sq_dist: f64,
    pub var_sq_dist: f64,
    pub predicted_var: f64,
}

impl JlReport {
    pub fn mean_rel_error(&self) -> f64 {
        if self.true_sq_dist == 0.0 {
            self.mean_sq_dist.abs()
        } else {
            (self.mean_sq_dist - self.true_sq_dist).abs() / self.true_sq_dist
        }
    }

    pub fn var_rel_error(&self) -> f64 {
        if self.predicted_var == 0.0 {
            self.var_sq_dist.abs()
        } else {
            (self.var_sq_dist - self.predicted_var).abs() / self.predicted_var
        }
    }
}

pub const MIN_JL_DRAWS: usize = 1000;

/// Draws `draws` independent projections (draw `t` uses seed `split(spec.seed, t)`)
/// and reports the empirical mean and variance of `|Ru - Rv|^2`.
pub fn jl_diagnostic(u: &[f64], v: &[f64], spec: &ProjectionSpec, draws: usize) -> Result<JlReport> {
    spec.validate()?;
    if u.len() != spec.d || v.len() != spec.d {
        return Err(Error::dimension("diagnostic vectors", spec.d, u.len().max(v.len())));
    }
    if draws < MIN_JL_DRAWS {
        return Err(Error::parameter(
            "draws",
            format!("{draws} is below the minimum of {MIN_JL_DRAWS}"),
        ));
    }
    let w: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let samples: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|t| projected_norm_sq(&spec.with_seed(seed::split(spec.seed, t)), &w))
        .collect();
    Ok(JlReport {
        k: spec.k,
        d: spec.d,
        s: spec.s,
        label: sparsity_label(spec.s, spec.d).to_string(),
        draws,
        true_sq_dist: stats::neumaier_sum(w.iter().map(|x| x * x)),
        mean_sq_dist: stats::mean(&samples),
        var_sq_dist: stats::variance(&samples),
        predicted_var: spec.predicted_variance(&w),
    })
}
