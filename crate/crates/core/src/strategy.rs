//! Named warm-start strategies selectable at runtime.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::experiment::{AblationMask, GroundTruth, Scenario};
use crate::ipm::WarmStart;
use crate::mtl::{Architecture, MtlModel};

/// Produces the starting point handed to the solver for one scenario.
pub trait WarmStartStrategy: Send + Sync {
    fn name(&self) -> &str;

    /// `None` means a cold start. `truth` is available when the scenario
    /// comes from a solved dataset.
    fn warm_start(&self, scenario: &Scenario, truth: Option<&GroundTruth>) -> Result<Option<WarmStart>>;

    /// Whether the strategy needs ground truth to run.
    fn needs_truth(&self) -> bool {
        false
    }
}

pub struct Cold;

impl WarmStartStrategy for Cold {
    fn name(&self) -> &str {
        "cold"
    }

    fn warm_start(&self, _: &Scenario, _: Option<&GroundTruth>) -> Result<Option<WarmStart>> {
        Ok(None)
    }
}

/// Ground-truth components selected by a mask.
pub struct Masked {
    name: String,
    mask: AblationMask,
}

impl Masked {
    pub fn new(name: impl Into<String>, mask: AblationMask) -> Self {
        Self { name: name.into(), mask }
    }
}

impl WarmStartStrategy for Masked {
    fn name(&self) -> &str {
        &self.name
    }

    fn warm_start(&self, s: &Scenario, truth: Option<&GroundTruth>) -> Result<Option<WarmStart>> {
        let t = truth.ok_or_else(|| Error::Invalid(format!("strategy '{}' needs ground truth for scenario {}", self.name, s.id)))?;
        Ok(Some(self.mask.warm_start(t)))
    }

    fn needs_truth(&self) -> bool {
        true
    }
}

/// Forward pass of a trained network.
pub struct Learned {
    name: String,
    model: Arc<MtlModel>,
}

impl Learned {
    pub fn new(model: Arc<MtlModel>) -> Self {
        let name = match model.topology.architecture {
            Architecture::Shared => "mtl",
            Architecture::Separate => "separate",
        };
        Self { name: name.into(), model }
    }
}

impl WarmStartStrategy for Learned {
    fn name(&self) -> &str {
        &self.name
    }

    fn warm_start(&self, s: &Scenario, _: Option<&GroundTruth>) -> Result<Option<WarmStart>> {
        Ok(Some(self.model.predict_warm_start(&s.pd, &s.qd)?))
    }
}

/// Inputs a strategy may draw on when it is built.
#[derive(Default, Clone)]
pub struct StrategyContext {
    pub model: Option<Arc<MtlModel>>,
}

type Builder = Box<dyn Fn(&StrategyContext) -> Result<Box<dyn WarmStartStrategy>> + Send + Sync>;

pub struct StrategyRegistry {
    builders: BTreeMap<String, Builder>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self { builders: BTreeMap::new() }
    }

    pub fn register<F>(&mut self, name: &str, build: F)
    where
        F: Fn(&StrategyContext) -> Result<Box<dyn WarmStartStrategy>> + Send + Sync + 'static,
    {
        self.builders.insert(name.to_string(), Box::new(build));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, ctx: &StrategyContext) -> Result<Box<dyn WarmStartStrategy>> {
        let b = self
            .builders
            .get(name)
            .ok_or_else(|| Error::Unknown { kind: "strategy", name: name.to_string() })?;
        b(ctx)
    }
}

impl Default for StrategyRegistry {
    /// `cold`, `oracle`, `mask-0000` … `mask-1111` and `model`.
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("cold", |_| Ok(Box::new(Cold)));
        r.register("oracle", |_| Ok(Box::new(Masked::new("oracle", AblationMask::from_bits(15)))));
        for m in AblationMask::all() {
            let name = format!("mask-{}", m.label());
            let n = name.clone();
            r.register(&name, move |_| Ok(Box::new(Masked::new(n.clone(), m))));
        }
        r.register("model", |ctx| {
            let model = ctx.model.clone().ok_or_else(|| Error::Invalid("strategy 'model' needs a trained model".into()))?;
            Ok(Box::new(Learned::new(model)))
        });
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> GroundTruth {
        GroundTruth {
            x: vec![1.0],
            lambda: vec![2.0],
            mu: vec![3.0],
            z: vec![4.0],
            f0: 0.0,
            solve_time: 0.0,
            iterations: 1,
        }
    }

    #[test]
    fn default_registry_resolves_names() {
        let r = StrategyRegistry::default();
        let s = Scenario { id: 1, pd: vec![], qd: vec![] };
        let ctx = StrategyContext::default();
        assert!(r.build("cold", &ctx).unwrap().warm_start(&s, None).unwrap().is_none());
        let ws = r.build("mask-1000", &ctx).unwrap().warm_start(&s, Some(&truth())).unwrap().unwrap();
        assert_eq!(ws.x, Some(vec![1.0]));
        assert!(ws.lambda.is_none() && ws.mu.is_none() && ws.z.is_none());
        let o = r.build("oracle", &ctx).unwrap();
        assert!(o.needs_truth());
        assert_eq!(o.warm_start(&s, Some(&truth())).unwrap().unwrap(), truth_ws());
        assert!(o.warm_start(&s, None).is_err());
        assert!(matches!(r.build("nope", &ctx), Err(Error::Unknown { .. })));
        assert!(r.build("model", &ctx).is_err());
        assert_eq!(r.names().count(), 19);
    }

    fn truth_ws() -> WarmStart {
        WarmStart { x: Some(vec![1.0]), lambda: Some(vec![2.0]), mu: Some(vec![3.0]), z: Some(vec![4.0]) }
    }
}
