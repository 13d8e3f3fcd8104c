//! Cyclic-monotonicity moment inequalities and the sum-of-squared-violations
//! criterion.
//!
//! For a cycle of markets `(a_1, ..., a_L, a_1)` and utilities `u_i = X_i beta`,
//! the inequality reads
//!
//! ```text
//! r(beta) = sum_l (u_{a_{l+1}} - u_{a_l}) . p_{a_l} <= 0
//! ```
//!
//! and `Q(beta) = sum over cycles of max(r, 0)^2`. The Euclidean-norm form
//! `sum_l |u_{a_l} - p_{a_l}|^2 - |u_{a_l} - p_{a_{l-1}}|^2` equals `2 r`, so its
//! criterion is `4 Q`.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ChoiceData;
use crate::error::{Error, Result};

/// Ordered sequence of distinct market indices, implicitly closed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cycle(Vec<usize>);

impl Cycle {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::parameter("cycle", "length must be at least 2"));
        }
        let distinct: BTreeSet<_> = indices.iter().collect();
        if distinct.len() != indices.len() {
            return Err(Error::parameter("cycle", format!("{indices:?} repeats a market")));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reversed(&self) -> Cycle {
        Cycle(self.0.iter().rev().copied().collect())
    }

    /// `(a_l, a_{l+1})` pairs including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.0.len();
        (0..n).map(move |l| (self.0[l], self.0[(l + 1) % n]))
    }
}

impl fmt::Display for Cycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "({})", parts.join(" "))
    }
}

/// Which orientations of cycles of length three or more to keep. Length-2
/// cycles are always stored once, since `(a, b)` and `(b, a)` give the same
/// inequality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    Both,
    Single,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleSet {
    n: usize,
    lengths: BTreeSet<usize>,
    cycles: Vec<Cycle>,
}

impl CycleSet {
    /// Every cycle of the requested lengths over `n` markets, anchored at its
    /// smallest index so rotations are not repeated.
    pub fn enumerate(n: usize, lengths: &[usize], orientation: Orientation) -> Result<Self> {
        if n < 2 {
            return Err(Error::parameter("n", "need at least 2 markets"));
        }
        let lengths: BTreeSet<usize> = lengths.iter().copied().collect();
        if lengths.is_empty() {
            return Err(Error::parameter("cycle lengths", "empty"));
        }
        if let Some(&bad) = lengths.iter().find(|&&l| l < 2 || l > n) {
            return Err(Error::parameter(
                "cycle length",
                format!("{bad} is outside [2, n = {n}]"),
            ));
        }
        let mut cycles = Vec::new();
        for &len in &lengths {
            for anchor in 0..n {
                let mut path = vec![anchor];
                let mut used = vec![false; n];
                used[anchor] = true;
                extend(n, len, &mut path, &mut used, &mut |p| {
                    let keep = len == 2
                        || orientation == Orientation::Both
                        || p[1] < p[len - 1];
                    if keep {
                        cycles.push(Cycle(p.to_vec()));
                    }
                });
            }
        }
        Ok(Self { n, lengths, cycles })
    }

    /// Builds a set from explicit cycles over `n` markets.
    pub fn from_cycles(n: usize, cycles: Vec<Cycle>) -> Result<Self> {
        if let Some(c) = cycles.iter().find(|c| c.0.iter().any(|&i| i >= n)) {
            return Err(Error::parameter("cycle", format!("{c} references a market >= {n}")));
        }
        let lengths = cycles.iter().map(Cycle::len).collect();
        Ok(Self { n, lengths, cycles })
    }

    pub fn cycles(&self) -> &[Cycle] {
        &self.cycles
    }

    pub fn lengths(&self) -> &BTreeSet<usize> {
        &self.lengths
    }

    pub fn n_markets(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }
}

fn extend(n: usize, len: usize, path: &mut Vec<usize>, used: &mut [bool], emit: &mut dyn FnMut(&[usize])) {
    if path.len() == len {
        emit(path);
        return;
    }
    // Anchor is the smallest index; later positions draw from larger ones.
    for next in path[0] + 1..n {
        if !used[next] {
            used[next] = true;
            path.push(next);
            extend(n, len, path, used, emit);
            path.pop();
            used[next] = false;
        }
    }
}

/// A unit-norm coefficient vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint(DVector<f64>);

impl ParamPoint {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(beta: DVector<f64>) -> Result<Self> {
        let norm = beta.norm();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::parameter("beta", format!("norm {norm} is not 1")));
        }
        Ok(Self(beta))
    }

    /// Projects a nonzero vector onto the unit sphere.
    pub fn normalized(beta: DVector<f64>) -> Result<Self> {
        let norm = beta.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::parameter("beta", "cannot normalize a zero or non-finite vector"));
        }
        Ok(Self(beta / norm))
    }

    /// `(cos theta, sin theta)`.
    pub fn from_angle(theta: f64) -> Self {
        Self(DVector::from_vec(vec![theta.cos(), theta.sin()]))
    }

    /// Polar angle in `[0, 2 pi)` of the first two coefficients.
    pub fn angle(&self) -> f64 {
        wrap_angle(self.0[1].atan2(self.0[0]))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Maps an angle into `[0, 2 pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(std::f64::consts::TAU);
    if t >= std::f64::consts::TAU {
        0.0
    } else {
        t
    }
}

fn check_beta(beta: &DVector<f64>, data: &dyn ChoiceData) -> Result<()> {
    if beta.len() != data.n_covariates() {
        return Err(Error::dimension("beta", data.n_covariates(), beta.len()));
    }
    Ok(())
}

/// Inner-product residual of one cycle, evaluated directly from the data.
pub fn cycle_residual_dot(cycle: &Cycle, beta: &DVector<f64>, data: &dyn ChoiceData) -> f64 {
    cycle
        .edges()
        .map(|(a, next)| {
            let diff = data.covariates(next) * beta - data.covariates(a) * beta;
            diff.dot(data.shares(a))
        })
        .sum()
}

/// Euclidean-norm residual of one cycle: `sum_l |u_l - p_l|^2 - |u_l - p_{l-1}|^2`.
pub fn cycle_residual_euclid(cycle: &Cycle, beta: &DVector<f64>, data: &dyn ChoiceData) -> f64 {
    let idx = cycle.indices();
    let len = idx.len();
    (0..len)
        .map(|l| {
            let cur = idx[l];
            let prev = idx[(l + len - 1) % len];
            let u = data.covariates(cur) * beta;
            (&u - data.shares(cur)).norm_squared() - (&u - data.shares(prev)).norm_squared()
        })
        .sum()
}

/// A criterion bound to one dataset and cycle set.
pub trait Criterion: Send + Sync {
    fn form(&self) -> &'static str;

    /// Number of coefficients.
    fn dim(&self) -> usize;

    fn n_cycles(&self) -> usize;

    /// Residual of every cycle, in cycle-set order.
    fn residuals(&self, beta: &DVector<f64>) -> Vec<f64>;

    fn value(&self, beta: &DVector<f64>) -> f64 {
        self.residuals(beta)
            .into_iter()
            .map(|r| {
                let v = r.max(0.0);
                v * v
            })
            .sum()
    }

    fn subgradient(&self, beta: &DVector<f64>) -> DVector<f64>;

    /// `Q / n_cycles`, comparable across cycle sets.
    fn normalized_value(&self, beta: &DVector<f64>) -> f64 {
        self.value(beta) / self.n_cycles() as f64
    }
}

/// Strategy for building a [`Criterion`] from data.
pub trait CriterionForm: Send + Sync {
    fn name(&self) -> &'static str;

    fn bind<'a>(&self, data: &'a dyn ChoiceData, cycles: &'a CycleSet) -> Result<Box<dyn Criterion + 'a>>;
}

fn check_bind(data: &dyn ChoiceData, cycles: &CycleSet) -> Result<()> {
    if cycles.is_empty() {
        return Err(Error::parameter("cycles", "cycle set is empty"));
    }
    if cycles.n_markets() > data.n_markets() {
        return Err(Error::dimension("markets", cycles.n_markets(), data.n_markets()));
    }
    Ok(())
}

/// Inner-product form. Each residual is linear in beta,
/// `r_c(beta) = m_c . beta` with `m_c = sum_l X_{a_{l+1}}' p_{a_l} - X_{a_l}' p_{a_l}`,
/// so the cycle vectors `m_c` are computed once from the `n x n` blocks
/// `X_i' p_j` and every evaluation is `O(cycles * b)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DotForm;

/// Euclidean-norm form, evaluated literally from squared distances for every
/// beta. Slower; kept as an independent route to the same argmin.
#[derive(Clone, Copy, Debug, Default)]
pub struct EuclidForm;

impl CriterionForm for DotForm {
    fn name(&self) -> &'static str {
        "dot"
    }

    fn bind<'a>(&self, data: &'a dyn ChoiceData, cycles: &'a CycleSet) -> Result<Box<dyn Criterion + 'a>> {
        Ok(Box::new(DotCriterion::new(data, cycles)?))
    }
}

impl CriterionForm for EuclidForm {
    fn name(&self) -> &'static str {
        "euclid"
    }

    fn bind<'a>(&self, data: &'a dyn ChoiceData, cycles: &'a CycleSet) -> Result<Box<dyn Criterion + 'a>> {
        check_bind(data, cycles)?;
        Ok(Box::new(EuclidCriterion { data, cycles }))
    }
}

#[derive(Clone, Debug)]
pub struct DotCriterion {
    b: usize,
    /// Row `c` holds `m_c`.
    moments: DMatrix<f64>,
}

impl DotCriterion {
    pub fn new(data: &dyn ChoiceData, cycles: &CycleSet) -> Result<Self> {
        check_bind(data, cycles)?;
        let n = data.n_markets();
        let b = data.n_covariates();
        let rows = data.n_rows();
        let mut shares = DMatrix::zeros(rows, n);
        for j in 0..n {
            shares.set_column(j, data.shares(j));
        }
        // gram[i] is b x n: column j holds X_i' p_j.
        let gram: Vec<DMatrix<f64>> = (0..n).map(|i| data.covariates(i).tr_mul(&shares)).collect();
        let mut moments = DMatrix::zeros(cycles.len(), b);
        for (c, cycle) in cycles.cycles().iter().enumerate() {
            for (a, next) in cycle.edges() {
                for k in 0..b {
                    moments[(c, k)] += gram[next][(k, a)] - gram[a][(k, a)];
                }
            }
        }
        Ok(Self { b, moments })
    }

    pub fn moments(&self) -> &DMatrix<f64> {
        &self.moments
    }
}

impl Criterion for DotCriterion {
    fn form(&self) -> &'static str {
        "dot"
    }

    fn dim(&self) -> usize {
        self.b
    }

    fn n_cycles(&self) -> usize {
        self.moments.nrows()
    }

    fn residuals(&self, beta: &DVector<f64>) -> Vec<f64> {
        (&self.moments * beta).iter().copied().collect()
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        let mut q = 0.0;
        for c in 0..self.moments.nrows() {
            let mut r = 0.0;
            for k in 0..self.b {
                r += self.moments[(c, k)] * beta[k];
            }
            if r > 0.0 {
                q += r * r;
            }
        }
        q
    }

    fn subgradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.b);
        for (c, r) in self.residuals(beta).into_iter().enumerate() {
            if r > 0.0 {
                for k in 0..self.b {
                    g[k] += 2.0 * r * self.moments[(c, k)];
                }
            }
        }
        g
    }
}

pub struct EuclidCriterion<'a> {
    data: &'a dyn ChoiceData,
    cycles: &'a CycleSet,
}

impl EuclidCriterion<'_> {
    /// `dist[i][j] = |u_i - p_j|^2`.
    fn distances(&self, utilities: &[DVector<f64>]) -> DMatrix<f64> {
        let n = self.data.n_markets();
        DMatrix::from_fn(n, n, |i, j| (&utilities[i] - self.data.shares(j)).norm_squared())
    }

    fn utilities(&self, beta: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.data.n_markets())
            .map(|i| self.data.covariates(i) * beta)
            .collect()
    }
}

impl Criterion for EuclidCriterion<'_> {
    fn form(&self) -> &'static str {
        "euclid"
    }

    fn dim(&self) -> usize {
        self.data.n_covariates()
    }

    fn n_cycles(&self) -> usize {
        self.cycles.len()
    }

    fn residuals(&self, beta: &DVector<f64>) -> Vec<f64> {
        let dist = self.distances(&self.utilities(beta));
        self.cycles
            .cycles()
            .iter()
            .map(|cycle| {
                let idx = cycle.indices();
                let len = idx.len();
                (0..len)
                    .map(|l| {
                        let cur = idx[l];
                        let prev = idx[(l + len - 1) % len];
                        dist[(cur, cur)] - dist[(cur, prev)]
                    })
                    .sum()
            })
            .collect()
    }

    fn subgradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        // d/dbeta of |X_i beta - p_j|^2 is 2 X_i' (X_i beta - p_j), so each cycle
        // term contributes 2 X_cur' (p_prev - p_cur).
        let residuals = self.residuals(beta);
        let mut g = DVector::zeros(self.dim());
        for (cycle, r) in self.cycles.cycles().iter().zip(residuals) {
            if r <= 0.0 {
                continue;
            }
            let idx = cycle.indices();
            let len = idx.len();
            for l in 0..len {
                let cur = idx[l];
                let prev = idx[(l + len - 1) % len];
                let delta = self.data.shares(prev) - self.data.shares(cur);
                g += (2.0 * r) * 2.0 * self.data.covariates(cur).tr_mul(&delta);
            }
        }
        g
    }
}

/// Looks up a criterion form by name.
pub fn form_by_name(name: &str) -> Result<Box<dyn CriterionForm>> {
    crate::registry::criterion_forms().create(name, &())
}

/// `Q(beta)` in the given form.
pub fn criterion(beta: &DVector<f64>, data: &dyn ChoiceData, cycles: &CycleSet, form: &dyn CriterionForm) -> Result<f64> {
    check_beta(beta, data)?;
    let value = form.bind(data, cycles)?.value(beta);
    if !value.is_finite() {
        return Err(Error::numerical("criterion", format!("Q = {value}")));
    }
    Ok(value)
}

/// Subgradient of the inner-product form of `Q` at `beta`.
pub fn criterion_subgradient(beta: &DVector<f64>, data: &dyn ChoiceData, cycles: &CycleSet) -> Result<DVector<f64>> {
    check_beta(beta, data)?;
    Ok(DotForm.bind(data, cycles)?.subgradient(beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Market, ShareTotal};

    /// Two markets whose utilities at `diag_beta()` are `u1 = (1, 0)` and
    /// `u2 = (0, 1)`.
    fn utility_pair(p1: [f64; 2], p2: [f64; 2]) -> Dataset {
        let s = std::f64::consts::SQRT_2;
        let x1 = DMatrix::from_row_slice(2, 2, &[s, 0.0, 0.0, 0.0]);
        let x2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, s]);
        Dataset::new(
            vec![
                Market::new(x1, DVector::from_row_slice(&p1)).unwrap(),
                Market::new(x2, DVector::from_row_slice(&p2)).unwrap(),
            ],
            ShareTotal::Complete,
        )
        .unwrap()
    }

    fn diag_beta() -> DVector<f64> {
        DVector::from_vec(vec![1.0, 1.0]).normalize()
    }

    #[test]
    fn cycle_counts() {
        assert_eq!(CycleSet::enumerate(2, &[2], Orientation::Both).unwrap().len(), 1);
        assert_eq!(CycleSet::enumerate(3, &[2, 3], Orientation::Both).unwrap().len(), 5);
        assert_eq!(CycleSet::enumerate(3, &[2, 3], Orientation::Single).unwrap().len(), 4);
        // (L - 1)! orderings per subset with both orientations.
        assert_eq!(CycleSet::enumerate(5, &[4], Orientation::Both).unwrap().len(), 5 * 6);
        assert_eq!(CycleSet::enumerate(5, &[4], Orientation::Single).unwrap().len(), 5 * 3);
        assert!(CycleSet::enumerate(3, &[4], Orientation::Both).is_err());
        assert!(CycleSet::enumerate(3, &[], Orientation::Both).is_err());
    }

    #[test]
    fn cycle_validation() {
        assert!(Cycle::new(vec![1]).is_err());
        assert!(Cycle::new(vec![1, 2, 1]).is_err());
        assert!(CycleSet::from_cycles(2, vec![Cycle::new(vec![0, 2]).unwrap()]).is_err());
    }

    #[test]
    fn hand_sized_residuals() {
        let beta = diag_beta();
        let cycle = Cycle::new(vec![0, 1]).unwrap();
        let sat = utility_pair([1.0, 0.0], [0.0, 1.0]);
        assert!((cycle_residual_dot(&cycle, &beta, &sat) + 2.0).abs() < 1e-12);
        assert!((cycle_residual_euclid(&cycle, &beta, &sat) + 4.0).abs() < 1e-12);
        let viol = utility_pair([0.0, 1.0], [1.0, 0.0]);
        assert!((cycle_residual_dot(&cycle, &beta, &viol) - 2.0).abs() < 1e-12);

        let cycles = CycleSet::enumerate(2, &[2], Orientation::Both).unwrap();
        assert_eq!(criterion(&beta, &sat, &cycles, &DotForm).unwrap(), 0.0);
        let q = criterion(&beta, &viol, &cycles, &DotForm).unwrap();
        assert!((q - 4.0).abs() < 1e-12);
        let qe = criterion(&beta, &viol, &cycles, &EuclidForm).unwrap();
        assert!((qe - 16.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_markets_give_zero() {
        let data = utility_pair([0.3, 0.7], [0.3, 0.7]);
        let dup = Dataset::new(vec![data.markets()[0].clone(), data.markets()[0].clone()], ShareTotal::Complete).unwrap();
        let beta = DVector::from_vec(vec![0.6, -0.8]);
        let c = Cycle::new(vec![1, 0]).unwrap();
        assert_eq!(cycle_residual_dot(&c, &beta, &dup), 0.0);
        assert_eq!(cycle_residual_euclid(&c, &beta, &dup), 0.0);
    }

    #[test]
    fn zero_criterion_has_zero_subgradient() {
        let sat = utility_pair([1.0, 0.0], [0.0, 1.0]);
        let cycles = CycleSet::enumerate(2, &[2], Orientation::Both).unwrap();
        let g = criterion_subgradient(&diag_beta(), &sat, &cycles).unwrap();
        assert_eq!(g, DVector::zeros(2));
    }

    #[test]
    fn empty_cycle_set_is_an_error() {
        let sat = utility_pair([1.0, 0.0], [0.0, 1.0]);
        let empty = CycleSet::from_cycles(2, vec![]).unwrap();
        assert!(criterion(&diag_beta(), &sat, &empty, &DotForm).is_err());
        assert!(criterion(&DVector::zeros(3), &sat, &CycleSet::enumerate(2, &[2], Orientation::Both).unwrap(), &DotForm).is_err());
    }

    #[test]
    fn param_point_invariants() {
        assert!(ParamPoint::new(DVector::from_vec(vec![1.0, 1.0])).is_err());
        let p = ParamPoint::normalized(DVector::from_vec(vec![-1.0, 1.0])).unwrap();
        assert!((p.angle() - 0.75 * std::f64::consts::PI).abs() < 1e-15);
        assert!(ParamPoint::normalized(DVector::zeros(2)).is_err());
        assert_eq!(wrap_angle(-0.5), std::f64::consts::TAU - 0.5);
    }

    #[test]
    fn forms_by_name() {
        assert_eq!(form_by_name("dot").unwrap().name(), "dot");
        assert_eq!(form_by_name("euclid").unwrap().name(), "euclid");
        assert!(form_by_name("rank").is_err());
    }
}
