//! Market-level choice data: covariate matrices and share vectors.
//!
//! Choice identity is positional once a [`Dataset`] is built: row `j` of every
//! market refers to the same alternative.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::neumaier_sum;

/// Absolute tolerance on share totals.
pub const SHARE_SUM_TOL: f64 = 1e-9;

/// Choice id given to the appended outside option.
pub const OUTSIDE_CHOICE_ID: &str = "__outside__";

/// Read access shared by raw and compressed datasets, so the criterion can run
/// unchanged on either.
pub trait ChoiceData: Sync {
    fn n_markets(&self) -> usize;
    /// Rows per market: `d` for raw data, `k` after projection.
    fn n_rows(&self) -> usize;
    fn n_covariates(&self) -> usize;
    fn covariates(&self, market: usize) -> &DMatrix<f64>;
    fn shares(&self, market: usize) -> &DVector<f64>;
}

/// One market: a `d x b` covariate matrix and its `d` choice probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Market {
    covariates: DMatrix<f64>,
    shares: DVector<f64>,
}

impl Market {
    pub fn new(covariates: DMatrix<f64>, shares: DVector<f64>) -> Result<Self> {
        if covariates.nrows() != shares.len() {
            return Err(Error::dimension(
                "share vector length",
                covariates.nrows(),
                shares.len(),
            ));
        }
        if let Some(bad) = covariates.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation("?", format!("non-finite covariate {bad}")));
        }
        if let Some(bad) = shares.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::validation("?", format!("share {bad} is negative or non-finite")));
        }
        Ok(Self { covariates, shares })
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn shares(&self) -> &DVector<f64> {
        &self.shares
    }

    pub fn share_total(&self) -> f64 {
        neumaier_sum(self.shares.iter().copied())
    }
}

/// How market share totals are validated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShareTotal {
    /// Shares sum to one: the listed alternatives are exhaustive.
    Complete,
    /// Shares sum to at most one; the remainder belongs to an unlisted outside good.
    ImplicitOutside,
}

/// Per-column multipliers applied to covariates. Coefficients estimated on the
/// scaled data map back to original units through [`ColumnScaling::to_original_units`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    factors: Vec<f64>,
}

impl ColumnScaling {
    pub fn identity(b: usize) -> Self {
        Self {
            factors: vec![1.0; b],
        }
    }

    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if let Some((i, f)) = factors
            .iter()
            .enumerate()
            .find(|(_, f)| !(f.is_finite() && **f > 0.0))
        {
            return Err(Error::parameter(
                format!("scaling factor {i}"),
                format!("{f} is not strictly positive and finite"),
            ));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    /// Factors of applying `self` first, then `other`.
    pub fn then(&self, other: &ColumnScaling) -> ColumnScaling {
        ColumnScaling {
            factors: self
                .factors
                .iter()
                .zip(&other.factors)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    /// Maps a coefficient vector estimated on scaled covariates back to original
    /// units and renormalizes to unit length.
    ///
    /// With `x' = a * x`, utility `x' b' = x (a b')`, so the original-unit
    /// coefficient is `a * b'` per column.
    pub fn to_original_units(&self, beta: &DVector<f64>) -> DVector<f64> {
        let raw = DVector::from_iterator(
            beta.len(),
            beta.iter().zip(&self.factors).map(|(b, a)| a * b),
        );
        let norm = raw.norm();
        if norm > 0.0 {
            raw / norm
        } else {
            raw
        }
    }
}

/// Policy for [`rescale_columns`].
#[derive(Clone, Debug, PartialEq)]
pub enum ScalingPolicy {
    /// Scale every column so its norm, stacked over all markets, equals that of
    /// the reference column.
    UnitNorm { reference: usize },
    Explicit(Vec<f64>),
}

impl Default for ScalingPolicy {
    fn default() -> Self {
        ScalingPolicy::UnitNorm { reference: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    markets: Vec<Market>,
    d: usize,
    b: usize,
    scaling: ColumnScaling,
    share_total: ShareTotal,
    market_ids: Vec<String>,
    choice_ids: Vec<String>,
    covariate_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with default ids `0..n`, `0..d` and covariate names `x1..xb`.
    pub fn new(markets: Vec<Market>, share_total: ShareTotal) -> Result<Self> {
        let n = markets.len();
        let (d, b) = markets
            .first()
            .map(|m| m.covariates.shape())
            .unwrap_or((0, 0));
        Self::with_labels(
            markets,
            share_total,
            (0..n).map(|i| i.to_string()).collect(),
            (0..d).map(|j| j.to_string()).collect(),
            (1..=b).map(|c| format!("x{c}")).collect(),
        )
    }

    pub fn with_labels(
        markets: Vec<Market>,
        share_total: ShareTotal,
        market_ids: Vec<String>,
        choice_ids: Vec<String>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if markets.len() < 2 {
            return Err(Error::parameter(
                "markets",
                format!("need at least 2 markets to form a cycle, got {}", markets.len()),
            ));
        }
        let (d, b) = markets[0].covariates.shape();
        if d == 0 || b == 0 {
            return Err(Error::parameter("markets", "empty covariate matrix"));
        }
        for (i, m) in markets.iter().enumerate() {
            let id = market_ids.get(i).cloned().unwrap_or_else(|| i.to_string());
            if m.covariates.shape() != (d, b) {
                return Err(Error::Validation {
                    market: id,
                    reason: format!(
                        "covariates are {:?}, expected {:?}",
                        m.covariates.shape(),
                        (d, b)
                    ),
                });
            }
            let total = m.share_total();
            let ok = match share_total {
                ShareTotal::Complete => (total - 1.0).abs() <= SHARE_SUM_TOL,
                ShareTotal::ImplicitOutside => total <= 1.0 + SHARE_SUM_TOL,
            };
            if !ok {
                return Err(Error::validation(
                    id,
                    format!("shares sum to {total}, violating {share_total:?} total"),
                ));
            }
        }
        if market_ids.len() != markets.len() {
            return Err(Error::dimension("market ids", markets.len(), market_ids.len()));
        }
        if choice_ids.len() != d {
            return Err(Error::dimension("choice ids", d, choice_ids.len()));
        }
        if covariate_names.len() != b {
            return Err(Error::dimension("covariate names", b, covariate_names.len()));
        }
        Ok(Self {
            markets,
            d,
            b,
            scaling: ColumnScaling::identity(b),
            share_total,
            market_ids,
            choice_ids,
            covariate_names,
        })
    }

    pub fn markets(&self) -> &[Market] {
        &self.markets
    }

    pub fn n(&self) -> usize {
        self.markets.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn scaling(&self) -> &ColumnScaling {
        &self.scaling
    }

    pub fn share_total(&self) -> ShareTotal {
        self.share_total
    }

    pub fn market_ids(&self) -> &[String] {
        &self.market_ids
    }

    pub fn choice_ids(&self) -> &[String] {
        &self.choice_ids
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            n: self.n(),
            d: self.d,
            b: self.b,
            covariates: self.covariate_names.clone(),
            scaling: self.scaling.factors.clone(),
            share_total: self.share_total,
        }
    }

    /// Stacked Euclidean norm of covariate column `c` across all markets.
    pub fn column_norm(&self, c: usize) -> f64 {
        neumaier_sum(
            self.markets
                .iter()
                .flat_map(|m| m.covariates.as_slice()[c * self.d..(c + 1) * self.d].iter())
                .map(|v| v * v),
        )
        .sqrt()
    }
}

impl ChoiceData for Dataset {
    fn n_markets(&self) -> usize {
        self.markets.len()
    }

    fn n_rows(&self) -> usize {
        self.d
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

/// JSON-exportable summary of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    pub b: usize,
    pub covariates: Vec<String>,
    pub scaling: Vec<f64>,
    pub share_total: ShareTotal,
}

/// Turns per-choice unit counts into shares `quantity / custcount` and appends
/// the outside share `1 - sum`. The result has length `d + 1`.
pub fn build_outside_option(quantities: &[f64], custcount: f64) -> Result<Vec<f64>> {
    if !(custcount.is_finite() && custcount > 0.0) {
        return Err(Error::parameter("custcount", format!("{custcount} must be positive")));
    }
    if let Some(q) = quantities.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
        return Err(Error::parameter("quantity", format!("{q} must be nonnegative")));
    }
    let total = neumaier_sum(quantities.iter().copied());
    if total > custcount {
        return Err(Error::Infeasible { custcount, total });
    }
    let mut shares: Vec<f64> = quantities.iter().map(|q| q / custcount).collect();
    let inside = neumaier_sum(shares.iter().copied());
    shares.push((1.0 - inside).max(0.0));
    Ok(shares)
}

/// Rescales covariate columns. Returns the new dataset (whose cumulative scaling
/// includes this step) and the factors applied by this call.
pub fn rescale_columns(data: &Dataset, policy: &ScalingPolicy) -> Result<(Dataset, ColumnScaling)> {
    let factors = match policy {
        ScalingPolicy::Explicit(f) => {
            if f.len() != data.b {
                return Err(Error::dimension("scaling factors", data.b, f.len()));
            }
            ColumnScaling::new(f.clone())?
        }
        ScalingPolicy::UnitNorm { reference } => {
            if *reference >= data.b {
                return Err(Error::parameter(
                    "reference column",
                    format!("{reference} out of range for b = {}", data.b),
                ));
            }
            let norms: Vec<f64> = (0..data.b).map(|c| data.column_norm(c)).collect();
            if let Some(c) = norms.iter().position(|n| *n == 0.0) {
                return Err(Error::Scaling {
                    column: data.covariate_names[c].clone(),
                    reason: "all entries are zero".into(),
                });
            }
            let target = norms[*reference];
            ColumnScaling::new(norms.iter().map(|n| target / n).collect())?
        }
    };
    let markets = data
        .markets
        .iter()
        .map(|m| {
            let mut x = m.covariates.clone();
            for (c, f) in factors.factors.iter().enumerate() {
                x.column_mut(c).scale_mut(*f);
            }
            Market {
                covariates: x,
                shares: m.shares.clone(),
            }
        })
        .collect();
    let scaled = Dataset {
        markets,
        scaling: data.scaling.then(&factors),
        ..data.clone()
    };
    Ok((scaled, factors))
}

/// Where shares come from in a long-format CSV.
#[derive(Clone, Debug, PartialEq)]
pub enum ShareSource {
    /// A share column, already in probability units.
    Column(String),
    /// A unit-count column plus a sidecar CSV with columns `market,custcount`.
    /// Shares become `quantity / custcount` and an outside option is appended.
    Quantity { column: String, custcount: PathBuf },
}

/// Column mapping for [`load_csv`].
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub market: String,
    pub choice: String,
    /// Covariate column names, in order. Empty means every column not otherwise claimed.
    pub covariates: Vec<String>,
    pub shares: ShareSource,
    /// Fill absent (market, choice) rows with zero share and zero covariates.
    pub fill_missing: bool,
    /// With a share column: allow totals below one (unlisted outside good).
    pub outside_option: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            market: "market".into(),
            choice: "choice".into(),
            covariates: Vec::new(),
            shares: ShareSource::Column("share".into()),
            fill_missing: false,
            outside_option: false,
        }
    }
}

/// Sort key for ids: numeric when every id parses as an integer, else lexicographic.
fn sorted_ids(ids: impl IntoIterator<Item = String>) -> Vec<String> {
    let set: BTreeSet<String> = ids.into_iter().collect();
    let mut out: Vec<String> = set.into_iter().collect();
    if out.iter().all(|s| s.parse::<i64>().is_ok()) {
        out.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    out
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse {
            row: 1,
            reason: format!("missing column `{name}`"),
        })
}

fn parse_cell(record: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            row,
            reason: format!("column `{name}`: `{raw}` is not a finite number"),
        })
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn load_custcounts(path: &Path) -> Result<HashMap<String, f64>> {
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let mi = column_index(&headers, "market")?;
    let ci = column_index(&headers, "custcount")?;
    let mut out = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        out.insert(rec.get(mi).unwrap_or("").to_string(), parse_cell(&rec, ci, row, "custcount")?);
    }
    Ok(out)
}

/// Loads a long-format CSV (`market,choice,<covariates>,share`) into a validated
/// [`Dataset`]. Markets and choices are ordered by id (numerically when every id
/// is an integer, lexicographically otherwise). Row numbers in errors are 1-based
/// file lines, counting the header.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = open(path)?;
    let headers = reader.headers()?.clone();
    let mi = column_index(&headers, &schema.market)?;
    let ci = column_index(&headers, &schema.choice)?;
    let share_col = match &schema.shares {
        ShareSource::Column(c) => c.clone(),
        ShareSource::Quantity { column, .. } => column.clone(),
    };
    let si = column_index(&headers, &share_col)?;
    let cov_names: Vec<String> = if schema.covariates.is_empty() {
        headers
            .iter()
            .map(|h| h.trim().to_string())
            .filter(|h| *h != schema.market && *h != schema.choice && *h != share_col)
            .collect()
    } else {
        schema.covariates.clone()
    };
    if cov_names.is_empty() {
        return Err(Error::Parse {
            row: 1,
            reason: "no covariate columns".into(),
        });
    }
    let cov_idx = cov_names
        .iter()
        .map(|n| column_index(&headers, n))
        .collect::<Result<Vec<_>>>()?;

    // market -> choice -> (covariates, share-or-quantity)
    let mut cells: BTreeMap<String, BTreeMap<String, (Vec<f64>, f64)>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        let market = rec.get(mi).unwrap_or("").to_string();
        let choice = rec.get(ci).unwrap_or("").to_string();
        let covs = cov_idx
            .iter()
            .zip(&cov_names)
            .map(|(&idx, name)| parse_cell(&rec, idx, row, name))
            .collect::<Result<Vec<_>>>()?;
        let value = parse_cell(&rec, si, row, &share_col)?;
        if value < 0.0 {
            return Err(Error::Parse {
                row,
                reason: format!("column `{share_col}`: negative value {value}"),
            });
        }
        if cells
            .entry(market.clone())
            .or_default()
            .insert(choice.clone(), (covs, value))
            .is_some()
        {
            return Err(Error::Parse {
                row,
                reason: format!("duplicate row for market `{market}`, choice `{choice}`"),
            });
        }
    }

    let market_ids = sorted_ids(cells.keys().cloned());
    let mut choice_ids = sorted_ids(cells.values().flat_map(|m| m.keys().cloned()));
    let d_inside = choice_ids.len();
    let b = cov_names.len();

    let custcounts = match &schema.shares {
        ShareSource::Quantity { custcount, .. } => Some(load_custcounts(custcount)?),
        ShareSource::Column(_) => None,
    };

    let mut markets = Vec::with_capacity(market_ids.len());
    for id in &market_ids {
        let rows = &cells[id];
        if rows.len() != d_inside && !schema.fill_missing {
            return Err(Error::dimension(
                format!("choice set of market `{id}` (set fill_missing to pad)"),
                d_inside,
                rows.len(),
            ));
        }
        let mut x = DMatrix::zeros(d_inside, b);
        let mut values = vec![0.0; d_inside];
        for (j, choice) in choice_ids.iter().enumerate() {
            if let Some((covs, v)) = rows.get(choice) {
                for (c, val) in covs.iter().enumerate() {
                    x[(j, c)] = *val;
                }
                values[j] = *v;
            }
        }
        let market = match &custcounts {
            None => Market::new(x, DVector::from_vec(values)),
            Some(counts) => {
                let cc = *counts.get(id).ok_or_else(|| {
                    Error::validation(id.clone(), "no custcount in sidecar file")
                })?;
                let shares = build_outside_option(&values, cc).map_err(|e| match e {
                    Error::Infeasible { .. } => Error::validation(id.clone(), e.to_string()),
                    other => other,
                })?;
                Market::new(x.insert_row(d_inside, 0.0), DVector::from_vec(shares))
            }
        }
        .map_err(|e| match e {
            Error::Validation { reason, .. } => Error::validation(id.clone(), reason),
            other => other,
        })?;
        markets.push(market);
    }

    let share_total = match (&schema.shares, schema.outside_option) {
        (ShareSource::Quantity { .. }, _) => {
            choice_ids.push(OUTSIDE_CHOICE_ID.to_string());
            ShareTotal::Complete
        }
        (ShareSource::Column(_), true) => ShareTotal::ImplicitOutside,
        (ShareSource::Column(_), false) => ShareTotal::Complete,
    };
    Dataset::with_labels(markets, share_total, market_ids, choice_ids, cov_names)
}

/// Writes `market,choice,<covariates>,share`. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["market".to_string(), "choice".to_string()];
    header.extend(data.covariate_names.iter().cloned());
    header.push("share".into());
    w.write_record(&header)?;
    for (m, market) in data.markets.iter().enumerate() {
        for j in 0..data.d {
            let mut rec = vec![data.market_ids[m].clone(), data.choice_ids[j].clone()];
            rec.extend((0..data.b).map(|c| market.covariates[(j, c)].to_string()));
            rec.push(market.shares[j].to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market(x: &[f64], b: usize, p: &[f64]) -> Market {
        Market::new(
            DMatrix::from_row_slice(p.len(), b, x),
            DVector::from_row_slice(p),
        )
        .unwrap()
    }

    #[test]
    fn outside_option_all_zero_and_full() {
        assert_eq!(build_outside_option(&[0.0, 0.0, 0.0], 100.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        let full = build_outside_option(&[60.0, 40.0], 100.0).unwrap();
        assert_eq!(full[2], 0.0);
    }

    #[test]
    fn outside_option_arithmetic() {
        let s = build_outside_option(&[50.0, 25.0], 100.0).unwrap();
        assert_eq!(s, vec![0.5, 0.25, 0.25]);
        assert_eq!(neumaier_sum(s), 1.0);
        let s = build_outside_option(&[30.0, 10.0], 100.0).unwrap();
        assert_eq!(s, vec![0.3, 0.1, 0.6]);
    }

    #[test]
    fn outside_option_infeasible() {
        assert!(matches!(
            build_outside_option(&[80.0, 30.0], 100.0),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn dataset_rejects_bad_share_total() {
        let a = market(&[1.0, 2.0, 3.0, 4.0], 2, &[0.5, 0.5]);
        let b = market(&[1.0, 2.0, 3.0, 4.0], 2, &[0.7, 0.5]);
        let err = Dataset::new(vec![a.clone(), b], ShareTotal::Complete).unwrap_err();
        assert!(matches!(err, Error::Validation { ref market, .. } if market == "1"));
        let c = market(&[1.0, 2.0, 3.0, 4.0], 2, &[0.2, 0.5]);
        assert!(Dataset::new(vec![a.clone(), c.clone()], ShareTotal::Complete).is_err());
        assert!(Dataset::new(vec![a, c], ShareTotal::ImplicitOutside).is_ok());
    }

    #[test]
    fn dataset_needs_two_markets() {
        let a = market(&[1.0, 2.0], 1, &[0.5, 0.5]);
        assert!(Dataset::new(vec![a], ShareTotal::Complete).is_err());
    }

    #[test]
    fn zero_shares_allowed() {
        let a = market(&[1.0, 2.0], 1, &[0.0, 1.0]);
        let b = market(&[1.0, 2.0], 1, &[1.0, 0.0]);
        assert!(Dataset::new(vec![a, b], ShareTotal::Complete).is_ok());
        assert!(Market::new(DMatrix::zeros(1, 1), DVector::from_element(1, -0.1)).is_err());
        assert!(Market::new(DMatrix::from_element(1, 1, f64::NAN), DVector::from_element(1, 1.0)).is_err());
    }

    #[test]
    fn explicit_identity_scaling_is_noop() {
        let a = market(&[1.0, 2.0, 3.0, 4.0], 2, &[0.5, 0.5]);
        let b = market(&[5.0, 6.0, 7.0, 8.0], 2, &[0.25, 0.75]);
        let data = Dataset::new(vec![a, b], ShareTotal::Complete).unwrap();
        let (scaled, f) = rescale_columns(&data, &ScalingPolicy::Explicit(vec![1.0, 1.0])).unwrap();
        assert_eq!(scaled, data);
        assert_eq!(f.factors(), &[1.0, 1.0]);
    }

    #[test]
    fn unit_norm_scaling_matches_reference() {
        // Column 1 stacks to (6, 8) -> norm 10; column 2 to (0, 2) -> norm 2.
        let a = market(&[6.0, 0.0], 2, &[1.0]);
        let b = market(&[8.0, 2.0], 2, &[1.0]);
        let data = Dataset::new(vec![a, b], ShareTotal::Complete).unwrap();
        let (scaled, f) = rescale_columns(&data, &ScalingPolicy::default()).unwrap();
        assert_eq!(f.factors(), &[1.0, 5.0]);
        assert_eq!(scaled.covariates(1)[(0, 1)], 10.0);
        assert!((scaled.column_norm(1) - 10.0).abs() < 1e-12);
        assert_eq!(scaled.scaling().factors(), &[1.0, 5.0]);
    }

    #[test]
    fn all_zero_column_cannot_be_scaled() {
        let a = market(&[6.0, 0.0], 2, &[1.0]);
        let b = market(&[8.0, 0.0], 2, &[1.0]);
        let data = Dataset::new(vec![a, b], ShareTotal::Complete).unwrap();
        assert!(matches!(
            rescale_columns(&data, &ScalingPolicy::default()),
            Err(Error::Scaling { .. })
        ));
    }

    #[test]
    fn original_units_undo_scaling() {
        let s = ColumnScaling::new(vec![1.0, 4.0]).unwrap();
        let beta = DVector::from_vec(vec![0.8, 0.15]);
        let orig = s.to_original_units(&beta);
        let expect = DVector::from_vec(vec![0.8, 0.6]).normalize();
        assert!((orig - expect).norm() < 1e-15);
        assert!(ColumnScaling::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn id_ordering_is_numeric_when_possible() {
        let ids = sorted_ids(["10", "2", "1"].map(String::from));
        assert_eq!(ids, vec!["1", "2", "10"]);
        let ids = sorted_ids(["b", "a10", "a2"].map(String::from));
        assert_eq!(ids, vec!["a10", "a2", "b"]);
    }
}
