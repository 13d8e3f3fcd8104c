//! Minimizing the criterion over the unit sphere, replication studies over
//! independent projections, and convergence diagnostics in `k`.

use std::f64::consts::TAU;
use std::fs::File;
use std::path::Path;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{wrap_angle, Criterion, CriterionForm, CycleSet, Orientation, ParamPoint};
use crate::data::{ChoiceData, Dataset};
use crate::error::{Error, Result};
use crate::projection::{ProjectionSpec, SparseProjection, Sparsity};
use crate::registry;
use crate::seed::{self, stream};
use crate::stats;

/// Criterion values on `G` equally spaced angles `2 pi i / G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
}

impl AngleGrid {
    pub const MIN_POINTS: usize = 8;

    pub fn evaluate(criterion: &dyn Criterion, points: usize) -> Result<Self> {
        if criterion.dim() != 2 {
            return Err(Error::dimension(
                "polar grid needs b = 2; use the subgradient estimator for b",
                2,
                criterion.dim(),
            ));
        }
        if points < Self::MIN_POINTS {
            return Err(Error::parameter(
                "grid points",
                format!("{points} < {}", Self::MIN_POINTS),
            ));
        }
        let thetas: Vec<f64> = (0..points).map(|i| TAU * i as f64 / points as f64).collect();
        let values = eval_angles(criterion, &thetas)?;
        Ok(Self { thetas, values })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn step(&self) -> f64 {
        TAU / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the first minimal value.
    pub fn argmin(&self) -> usize {
        let m = self.min();
        self.values.iter().position(|v| *v == m).unwrap_or(0)
    }

    /// Writes `theta,q` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["theta", "q"])?;
        for (t, q) in self.thetas.iter().zip(&self.values) {
            w.write_record([t.to_string(), q.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn eval_angles(criterion: &dyn Criterion, thetas: &[f64]) -> Result<Vec<f64>> {
    let values: Vec<f64> = thetas
        .par_iter()
        .map(|t| criterion.value(ParamPoint::from_angle(*t).as_vector()))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(
            "grid evaluation",
            format!("Q({}) = {}", thetas[i], values[i]),
        ));
    }
    Ok(values)
}

/// A closed arc `[lb, ub]` on the circle; when `ub < lb` the arc wraps through 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleInterval {
    pub lb: f64,
    pub ub: f64,
}

impl AngleInterval {
    pub fn new(lb: f64, ub: f64) -> Self {
        Self {
            lb: wrap_angle(lb),
            ub: wrap_angle(ub),
        }
    }

    pub fn point(theta: f64) -> Self {
        Self::new(theta, theta)
    }

    pub fn wraps(&self) -> bool {
        self.ub < self.lb
    }

    pub fn width(&self) -> f64 {
        wrap_angle(self.ub - self.lb)
    }

    pub fn midpoint(&self) -> f64 {
        wrap_angle(self.lb + 0.5 * self.width())
    }

    /// Whether `theta` lies on the arc, allowing `slack` radians at either end.
    pub fn contains(&self, theta: f64, slack: f64) -> bool {
        let off = wrap_angle(theta - self.lb + slack);
        off <= self.width() + 2.0 * slack
    }

    /// Whether `other` lies within this arc, allowing `slack` at either end.
    pub fn contains_interval(&self, other: &AngleInterval, slack: f64) -> bool {
        let start = wrap_angle(other.lb - self.lb + slack);
        start + other.width() <= self.width() + 2.0 * slack
    }
}

/// Level set `{theta : Q(theta) <= q_min + tolerance}` of a grid, as disjoint arcs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedSet {
    pub intervals: Vec<AngleInterval>,
    pub q_min: f64,
    pub tolerance: f64,
    /// Every grid point is in the level set (criterion flat on the circle).
    pub full_circle: bool,
}

impl IdentifiedSet {
    /// `max(1e-12, 1e-6 * max Q)`.
    pub fn default_tolerance(grid: &AngleGrid) -> f64 {
        (1e-6 * grid.max()).max(1e-12)
    }

    pub fn from_grid(grid: &AngleGrid, tolerance: f64) -> Self {
        let q_min = grid.min();
        let members: Vec<bool> = grid.values.iter().map(|v| *v <= q_min + tolerance).collect();
        let runs = circular_runs(&members);
        let intervals = if runs.is_empty() {
            vec![AngleInterval::new(0.0, grid.thetas[grid.len() - 1])]
        } else {
            let mut iv: Vec<AngleInterval> = runs
                .iter()
                .map(|(s, e)| AngleInterval::new(grid.thetas[*s], grid.thetas[*e]))
                .collect();
            iv.sort_by(|a, b| a.lb.total_cmp(&b.lb));
            iv
        };
        Self {
            intervals,
            q_min,
            tolerance,
            full_circle: runs.is_empty(),
        }
    }

    pub fn contains(&self, theta: f64, slack: f64) -> bool {
        self.full_circle || self.intervals.iter().any(|i| i.contains(theta, slack))
    }

    pub fn contains_interval(&self, other: &AngleInterval, slack: f64) -> bool {
        self.full_circle || self.intervals.iter().any(|i| i.contains_interval(other, slack))
    }

    /// The arc containing `theta`, if any.
    pub fn arc_containing(&self, theta: f64) -> Option<AngleInterval> {
        self.intervals.iter().copied().find(|i| i.contains(theta, 1e-12))
    }
}

/// Maximal runs `(start, end)` of `true` on a circular index set. Returns an
/// empty list when every entry is `true` (no boundary to anchor on).
fn circular_runs(members: &[bool]) -> Vec<(usize, usize)> {
    let n = members.len();
    let Some(anchor) = members.iter().position(|m| !m) else {
        return Vec::new();
    };
    let mut runs = Vec::new();
    let mut start = None;
    for step in 1..=n {
        let i = (anchor + step) % n;
        match (members[i], start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, (i + n - 1) % n));
                start = None;
            }
            _ => {}
        }
    }
    runs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub points: usize,
    /// Subdivisions per coarse step when refining the minimizing arc; 1 disables.
    pub refine: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: 2000,
            refine: 10,
        }
    }
}

/// Result of a polar-grid search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarEstimate {
    pub grid: AngleGrid,
    /// Level set after refinement; arc endpoints lie on the fine lattice.
    pub set: IdentifiedSet,
    /// Refined arc holding the global minimizer.
    pub interval: AngleInterval,
    pub argmin: f64,
    pub q_min: f64,
    /// Spacing of the lattice the arc endpoints lie on.
    pub resolution: f64,
}

/// Evaluates `Q` on the angle grid and extracts the level set. Each arc is then
/// re-evaluated, one coarse step beyond either end, on the lattice
/// `2 pi i / (points * refine)`, so endpoints from different runs with the same
/// grid settings are directly comparable.
pub fn estimate_polar_grid(criterion: &dyn Criterion, config: &GridConfig) -> Result<PolarEstimate> {
    let grid = AngleGrid::evaluate(criterion, config.points)?;
    let tolerance = IdentifiedSet::default_tolerance(&grid);
    let coarse = IdentifiedSet::from_grid(&grid, tolerance);
    let coarse_arg = grid.thetas[grid.argmin()];
    if coarse.full_circle || config.refine <= 1 {
        let interval = coarse
            .arc_containing(coarse_arg)
            .unwrap_or_else(|| AngleInterval::point(coarse_arg));
        return Ok(PolarEstimate {
            argmin: coarse_arg,
            q_min: grid.min(),
            interval,
            resolution: grid.step(),
            grid,
            set: coarse,
        });
    }

    let h = grid.step();
    let lattice = config.points * config.refine;
    let fine_step = TAU / lattice as f64;
    let mut fine: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(coarse.intervals.len());
    for arc in &coarse.intervals {
        let first = (arc.lb / fine_step).round() as usize + lattice - config.refine;
        let m = (arc.width() / fine_step).round() as usize + 2 * config.refine + 1;
        let thetas: Vec<f64> = (0..m)
            .map(|i| TAU * ((first + i) % lattice) as f64 / lattice as f64)
            .collect();
        let values = eval_angles(criterion, &thetas)?;
        fine.push((thetas, values));
    }
    let mut q_min = grid.min();
    let mut argmin = coarse_arg;
    for (thetas, values) in &fine {
        for (t, v) in thetas.iter().zip(values) {
            if *v < q_min {
                q_min = *v;
                argmin = *t;
            }
        }
    }
    let level = q_min + tolerance;
    let mut intervals = Vec::new();
    for (thetas, values) in &fine {
        let mut start = None;
        for i in 0..=values.len() {
            let inside = i < values.len() && values[i] <= level;
            match (inside, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    intervals.push(AngleInterval::new(thetas[s], thetas[i - 1]));
                    start = None;
                }
                _ => {}
            }
        }
    }
    intervals.sort_by(|a, b| a.lb.total_cmp(&b.lb));
    let set = IdentifiedSet {
        intervals,
        q_min,
        tolerance,
        full_circle: false,
    };
    let interval = set
        .arc_containing(argmin)
        .ok_or_else(|| Error::numerical("level set", "global minimizer outside its own level set"))?;
    Ok(PolarEstimate {
        grid,
        set,
        interval,
        argmin,
        q_min,
        resolution: fine_step.min(h),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgradientConfig {
    pub restarts: usize,
    pub steps: usize,
    /// Initial step length in radians; step `t` moves `step_scale / sqrt(t)`
    /// along the sphere.
    pub step_scale: f64,
    /// Replaces the first random start.
    pub initial: Option<Vec<f64>>,
}

impl Default for SubgradientConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            steps: 5000,
            step_scale: 0.1,
            initial: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereOptimum {
    pub beta: ParamPoint,
    pub value: f64,
    pub restart: usize,
}

/// Projected subgradient descent on the unit sphere: step against the tangential
/// part of the subgradient, a length of `c / sqrt(t)` radians, renormalize, and
/// keep the best iterate over all restarts. Restart points are uniform on the sphere, drawn from `seed`.
pub fn estimate_subgradient(criterion: &dyn Criterion, config: &SubgradientConfig, seed: u64) -> Result<SphereOptimum> {
    let b = criterion.dim();
    if b < 2 {
        return Err(Error::parameter("b", "sphere search needs at least 2 coefficients"));
    }
    if config.restarts == 0 {
        return Err(Error::parameter("restarts", "must be at least 1"));
    }
    let mut best: Option<SphereOptimum> = None;
    for restart in 0..config.restarts {
        let start = match (&config.initial, restart) {
            (Some(init), 0) => {
                if init.len() != b {
                    return Err(Error::dimension("initial beta", b, init.len()));
                }
                DVector::from_column_slice(init)
            }
            _ => {
                let mut rng = seed::rng(seed::split(seed, restart as u64));
                DVector::from_fn(b, |_, _| StandardNormal.sample(&mut rng))
            }
        };
        let found = descend(criterion, ParamPoint::normalized(start)?, config, restart)?;
        if best.as_ref().is_none_or(|b| found.value < b.value) {
            best = Some(found);
        }
        if best.as_ref().is_some_and(|b| b.value == 0.0) {
            break;
        }
    }
    Ok(best.expect("at least one restart"))
}

fn descend(criterion: &dyn Criterion, start: ParamPoint, config: &SubgradientConfig, restart: usize) -> Result<SphereOptimum> {
    let check = |beta: &DVector<f64>, q: f64, step: usize| -> Result<()> {
        if q.is_finite() {
            Ok(())
        } else {
            Err(Error::numerical(
                "subgradient descent",
                format!("Q = {q} at restart {restart}, step {step}, beta = {:?}", beta.as_slice()),
            ))
        }
    };
    let mut beta = start.into_vector();
    let mut q = criterion.value(&beta);
    check(&beta, q, 0)?;
    let mut best = (beta.clone(), q);
    for t in 1..=config.steps {
        if q == 0.0 {
            break;
        }
        let g = criterion.subgradient(&beta);
        let tangent = &g - &beta * g.dot(&beta);
        let gn = tangent.norm();
        if gn == 0.0 {
            break;
        }
        beta -= (config.step_scale / (t as f64).sqrt() / gn) * tangent;
        let norm = beta.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::numerical(
                "subgradient descent",
                format!("iterate norm {norm} at restart {restart}, step {t}"),
            ));
        }
        beta /= norm;
        q = criterion.value(&beta);
        check(&beta, q, t)?;
        if q < best.1 {
            best = (beta.clone(), q);
        }
    }
    Ok(SphereOptimum {
        beta: ParamPoint::normalized(best.0)?,
        value: best.1,
        restart,
    })
}

/// Uniform output of any estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub beta: ParamPoint,
    pub value: f64,
    /// Angle arc of the estimate; present when `b = 2`.
    pub interval: Option<AngleInterval>,
    pub polar: Option<PolarEstimate>,
}

impl Estimate {
    /// Midpoint of the interval when `b = 2`.
    pub fn point_angle(&self) -> Option<f64> {
        self.interval.map(|i| i.midpoint())
    }
}

/// A method for minimizing a bound criterion over the unit sphere.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;

    fn estimate(&self, criterion: &dyn Criterion, seed: u64) -> Result<Estimate>;
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub grid: GridConfig,
    pub subgradient: SubgradientConfig,
}

pub struct PolarGrid {
    config: GridConfig,
}

impl PolarGrid {
    pub fn new(config: GridConfig) -> Result<Self> {
        if config.points < AngleGrid::MIN_POINTS {
            return Err(Error::parameter("grid points", format!("{} < {}", config.points, AngleGrid::MIN_POINTS)));
        }
        Ok(Self { config })
    }
}

impl Estimator for PolarGrid {
    fn name(&self) -> &'static str {
        "polar-grid"
    }

    fn estimate(&self, criterion: &dyn Criterion, _seed: u64) -> Result<Estimate> {
        let polar = estimate_polar_grid(criterion, &self.config)?;
        Ok(Estimate {
            beta: ParamPoint::from_angle(polar.argmin),
            value: polar.q_min,
            interval: Some(polar.interval),
            polar: Some(polar),
        })
    }
}

pub struct SphereSubgradient {
    config: SubgradientConfig,
}

impl SphereSubgradient {
    pub fn new(config: SubgradientConfig) -> Result<Self> {
        if config.restarts == 0 || config.steps == 0 {
            return Err(Error::parameter("subgradient", "restarts and steps must be positive"));
        }
        if !(config.step_scale.is_finite() && config.step_scale > 0.0) {
            return Err(Error::parameter("step scale", "must be positive"));
        }
        Ok(Self { config })
    }
}

impl Estimator for SphereSubgradient {
    fn name(&self) -> &'static str {
        "subgradient"
    }

    fn estimate(&self, criterion: &dyn Criterion, seed: u64) -> Result<Estimate> {
        let opt = estimate_subgradient(criterion, &self.config, seed)?;
        let interval = (opt.beta.dim() == 2).then(|| AngleInterval::point(opt.beta.angle()));
        Ok(Estimate {
            beta: opt.beta,
            value: opt.value,
            interval,
            polar: None,
        })
    }
}

/// Everything a replication study needs besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationConfig {
    pub label: String,
    pub k: usize,
    pub sparsity: Sparsity,
    pub replications: usize,
    pub master_seed: u64,
    pub cycle_lengths: Vec<usize>,
    pub orientation: Orientation,
    pub form: String,
    pub estimator: String,
    pub estimator_config: EstimatorConfig,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            label: String::new(),
            k: 10,
            sparsity: Sparsity::Optimal,
            replications: 100,
            master_seed: 0,
            cycle_lengths: vec![2, 3],
            orientation: Orientation::Both,
            form: "dot".into(),
            estimator: "polar-grid".into(),
            estimator_config: EstimatorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub projection_seed: u64,
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub point: Option<f64>,
    pub q_min: Option<f64>,
    /// Coefficients in original (unscaled) covariate units, unit norm.
    pub beta: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Interval-statistics over successful replications. Quantiles use the type-7
/// rule (linear interpolation, `h = (n - 1) q`); standard deviations use `n - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleSummary {
    pub mean_lb: f64,
    pub sd_lb: f64,
    pub mean_ub: f64,
    pub sd_ub: f64,
    pub q25_lb: f64,
    pub q75_ub: f64,
    pub min_lb: f64,
    pub max_ub: f64,
    pub mean_point: f64,
    pub sd_point: f64,
    /// Replications whose `[lb, ub]` lies inside the unprojected identified set.
    pub nested: usize,
    /// Replications whose point estimate lies within one grid step of it.
    pub point_within_step: usize,
    pub unprojected: Option<IdentifiedSet>,
    pub unprojected_interval: Option<AngleInterval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub label: String,
    pub n: usize,
    pub d: usize,
    pub b: usize,
    pub k: usize,
    pub s: f64,
    pub master_seed: u64,
    pub n_cycles: usize,
    pub estimator: String,
    pub replications: Vec<ReplicationRecord>,
    pub succeeded: usize,
    pub failed: usize,
    pub angles: Option<AngleSummary>,
    pub coefficients: Vec<CoefficientSummary>,
}

/// Seed of the projection used by replication `r`.
pub fn replication_seed(master: u64, r: usize) -> u64 {
    seed::split2(master, stream::PROJECTION, r as u64)
}

/// Runs `R` independent projection/estimation rounds on `data` and aggregates
/// interval statistics. Failed replications are recorded, not fatal.
pub fn run_replications(data: &Dataset, config: &ReplicationConfig) -> Result<ReplicationSummary> {
    if config.replications == 0 {
        return Err(Error::parameter("replications", "must be at least 1"));
    }
    let form = registry::criterion_forms().create(&config.form, &())?;
    let estimator = registry::estimators().create(&config.estimator, &config.estimator_config)?;
    let cycles = CycleSet::enumerate(data.n(), &config.cycle_lengths, config.orientation)?;
    let base = ProjectionSpec::new(config.k, data.d(), config.sparsity, 0)?;

    let unprojected = if data.b() == 2 {
        let crit = form.bind(data, &cycles)?;
        Some(estimate_polar_grid(crit.as_ref(), &config.estimator_config.grid)?)
    } else {
        None
    };

    let records: Vec<ReplicationRecord> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let spec = base.with_seed(replication_seed(config.master_seed, r));
            let restart_seed = seed::split2(config.master_seed, stream::RESTARTS, r as u64);
            let outcome = one_replication(data, &cycles, form.as_ref(), estimator.as_ref(), &spec, restart_seed);
            match outcome {
                Ok(est) => ReplicationRecord {
                    index: r,
                    projection_seed: spec.seed,
                    lb: est.interval.map(|i| i.lb),
                    ub: est.interval.map(|i| i.ub),
                    point: est.point_angle(),
                    q_min: Some(est.value),
                    beta: Some(data.scaling().to_original_units(est.beta.as_vector()).iter().copied().collect()),
                    error: None,
                },
                Err(e) => ReplicationRecord {
                    index: r,
                    projection_seed: spec.seed,
                    lb: None,
                    ub: None,
                    point: None,
                    q_min: None,
                    beta: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let angles = if data.b() == 2 && !ok.is_empty() {
        let lbs: Vec<f64> = ok.iter().filter_map(|r| r.lb).collect();
        let ubs: Vec<f64> = ok.iter().filter_map(|r| r.ub).collect();
        let points: Vec<f64> = ok.iter().filter_map(|r| r.point).collect();
        let unproj_set = unprojected.as_ref().map(|u| u.set.clone());
        let step = TAU / config.estimator_config.grid.points as f64;
        let nested = ok
            .iter()
            .filter(|r| match (&unproj_set, r.lb, r.ub) {
                (Some(set), Some(lb), Some(ub)) => set.contains_interval(&AngleInterval { lb, ub }, 1e-9),
                _ => false,
            })
            .count();
        let point_within_step = points
            .iter()
            .filter(|p| unproj_set.as_ref().is_some_and(|s| s.contains(**p, step)))
            .count();
        Some(AngleSummary {
            mean_lb: stats::mean(&lbs),
            sd_lb: stats::std_dev(&lbs),
            mean_ub: stats::mean(&ubs),
            sd_ub: stats::std_dev(&ubs),
            q25_lb: stats::quantile(&lbs, 0.25),
            q75_ub: stats::quantile(&ubs, 0.75),
            min_lb: lbs.iter().copied().fold(f64::INFINITY, f64::min),
            max_ub: ubs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_point: stats::mean(&points),
            sd_point: stats::std_dev(&points),
            nested,
            point_within_step,
            unprojected: unproj_set,
            unprojected_interval: unprojected.as_ref().map(|u| u.interval),
        })
    } else {
        None
    };

    let coefficients = (0..data.b())
        .map(|c| {
            let vals: Vec<f64> = ok.iter().filter_map(|r| r.beta.as_ref().map(|b| b[c])).collect();
            CoefficientSummary {
                name: data.covariate_names()[c].clone(),
                median: stats::quantile(&vals, 0.5),
                q25: stats::quantile(&vals, 0.25),
                q75: stats::quantile(&vals, 0.75),
            }
        })
        .collect();

    Ok(ReplicationSummary {
        label: config.label.clone(),
        n: data.n(),
        d: data.d(),
        b: data.b(),
        k: config.k,
        s: base.s,
        master_seed: config.master_seed,
        n_cycles: cycles.len(),
        estimator: estimator.name().to_string(),
        succeeded: ok.len(),
        failed: records.len() - ok.len(),
        replications: records,
        angles,
        coefficients,
    })
}

fn one_replication(
    data: &Dataset,
    cycles: &CycleSet,
    form: &dyn CriterionForm,
    estimator: &dyn Estimator,
    spec: &ProjectionSpec,
    restart_seed: u64,
) -> Result<Estimate> {
    let projection = SparseProjection::generate(spec)?;
    let compressed = projection.apply(data)?;
    let criterion = form.bind(&compressed, cycles)?;
    estimator.estimate(criterion.as_ref(), restart_seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    /// Per-draw sup-gap `max_theta |Q~(theta) - Q(theta)| / n_cycles`.
    pub gaps: Vec<f64>,
    pub mean_gap: f64,
    pub sd_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Consecutive `k` pairs whose mean gap strictly decreases.
    pub decreasing_pairs: usize,
    pub total_pairs: usize,
}

impl ConvergenceTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.decreasing_pairs == self.total_pairs
    }
}

/// Sup-norm distance over the angle grid between the projected and unprojected
/// criteria (both divided by the cycle count), averaged over `draws`
/// projections for each `k`.
pub fn convergence_diagnostic(
    data: &dyn ChoiceData,
    cycles: &CycleSet,
    k_list: &[usize],
    sparsity: Sparsity,
    draws: usize,
    grid_points: usize,
    master_seed: u64,
) -> Result<ConvergenceTable>
where
{
    if draws == 0 {
        return Err(Error::parameter("draws", "must be at least 1"));
    }
    let d = data.n_rows();
    let raw = crate::criterion::DotForm.bind(data, cycles)?;
    let reference = AngleGrid::evaluate(raw.as_ref(), grid_points)?;
    let norm = cycles.len() as f64;
    let base_seed = seed::split(master_seed, stream::DIAGNOSTIC);
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let base = ProjectionSpec::new(k, d, sparsity, 0)?;
        let gaps = (0..draws)
            .into_par_iter()
            .map(|t| {
                let spec = base.with_seed(seed::split2(base_seed, k as u64, t as u64));
                let proj = SparseProjection::generate(&spec)?;
                let compressed = apply_any(&proj, data)?;
                let crit = crate::criterion::DotForm.bind(&compressed, cycles)?;
                let grid = AngleGrid::evaluate(crit.as_ref(), grid_points)?;
                Ok(grid
                    .values
                    .iter()
                    .zip(&reference.values)
                    .map(|(a, b)| (a - b).abs() / norm)
                    .fold(0.0, f64::max))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(ConvergenceRow {
            k,
            mean_gap: stats::mean(&gaps),
            sd_gap: stats::std_dev(&gaps),
            gaps,
        });
    }
    let total_pairs = rows.len().saturating_sub(1);
    let decreasing_pairs = rows.windows(2).filter(|w| w[1].mean_gap < w[0].mean_gap).count();
    Ok(ConvergenceTable {
        rows,
        decreasing_pairs,
        total_pairs,
    })
}

fn apply_any(proj: &SparseProjection, data: &dyn ChoiceData) -> Result<crate::projection::CompressedDataset> {
    let markets = (0..data.n_markets())
        .map(|i| proj.apply_market(data.covariates(i), data.shares(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::projection::CompressedDataset::from_parts(
        markets,
        data.n_covariates(),
        *proj.spec(),
        crate::data::ColumnScaling::identity(data.n_covariates()),
    ))
}
