//! Name-keyed registries for the interchangeable strategies: criterion forms,
//! estimators, utility-error laws and covariate designs. The CLI resolves
//! user-supplied names through these.

use crate::criterion::{CriterionForm, DotForm, EuclidForm};
use crate::error::{Error, Result};
use crate::estimate::{Estimator, EstimatorConfig, PolarGrid, SphereSubgradient};
use crate::simulate::{BrandEffects, CovariateDesign, ErrorLaw, IidCovariates, IidGumbel, MarketEffects, MovingWindow};

type Constructor<T, C> = fn(&C) -> Result<Box<T>>;

pub struct Registry<T: ?Sized, C> {
    kind: &'static str,
    entries: Vec<(&'static str, Constructor<T, C>)>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds (or replaces) the constructor registered under `name`.
    pub fn register(&mut self, name: &'static str, ctor: Constructor<T, C>) -> &mut Self {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, ctor));
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn create(&self, name: &str, config: &C) -> Result<Box<T>> {
        let (_, ctor) = self
            .entries
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })?;
        ctor(config)
    }
}

pub fn criterion_forms() -> Registry<dyn CriterionForm, ()> {
    let mut r: Registry<dyn CriterionForm, ()> = Registry::new("criterion form");
    r.register("dot", |_| Ok(Box::new(DotForm)))
        .register("euclid", |_| Ok(Box::new(EuclidForm)));
    r
}

pub fn estimators() -> Registry<dyn Estimator, EstimatorConfig> {
    let mut r: Registry<dyn Estimator, EstimatorConfig> = Registry::new("estimator");
    r.register("polar-grid", |c| Ok(Box::new(PolarGrid::new(c.grid.clone())?)))
        .register("subgradient", |c| Ok(Box::new(SphereSubgradient::new(c.subgradient.clone())?)));
    r
}

pub fn error_laws() -> Registry<dyn ErrorLaw, ()> {
    let mut r: Registry<dyn ErrorLaw, ()> = Registry::new("error law");
    r.register("ma-window", |_| Ok(Box::new(MovingWindow::default())))
        .register("iid-gumbel", |_| Ok(Box::new(IidGumbel)));
    r
}

pub fn covariate_designs() -> Registry<dyn CovariateDesign, ()> {
    let mut r: Registry<dyn CovariateDesign, ()> = Registry::new("covariate design");
    r.register("iid", |_| Ok(Box::new(IidCovariates)))
        .register("brand-effects", |_| Ok(Box::new(BrandEffects)))
        .register("market-effects", |_| Ok(Box::new(MarketEffects)));
    r
}
