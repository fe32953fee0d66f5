//! Name-keyed registries of interchangeable strategies.
//!
//! Each strategy family (skeleton edge costs, elastic energy terms, amplitude
//! metrics, synthetic plant generators) is a trait; implementations register a
//! factory under a stable name and are instantiated at runtime from a
//! [`StrategySpec`] taken from the pipeline configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown {family} strategy `{name}` (available: {available})")]
    Unknown {
        family: &'static str,
        name: String,
        available: String,
    },
    #[error("invalid parameters for {family} strategy `{name}`: {reason}")]
    BadParams {
        family: &'static str,
        name: String,
        reason: String,
    },
    #[error("{family} strategy `{name}` registered twice")]
    Duplicate { family: &'static str, name: String },
}

/// A strategy selection: a registered name plus a free-form parameter object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub name: String,
    #[serde(default = "empty_params")]
    pub params: serde_json::Value,
}

fn empty_params() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl StrategySpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: empty_params(),
        }
    }

    pub fn with_params(name: &str, params: serde_json::Value) -> Self {
        Self {
            name: name.to_string(),
            params,
        }
    }
}

type Factory<T> = Box<dyn Fn(&serde_json::Value) -> Result<Box<T>, String> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    family: &'static str,
    factories: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &str, factory: F) -> Result<(), RegistryError>
    where
        F: Fn(&serde_json::Value) -> Result<Box<T>, String> + Send + Sync + 'static,
    {
        if self.factories.contains_key(name) {
            return Err(RegistryError::Duplicate {
                family: self.family,
                name: name.to_string(),
            });
        }
        self.factories.insert(name.to_string(), Box::new(factory));
        Ok(())
    }

    pub fn build(&self, spec: &StrategySpec) -> Result<Box<T>, RegistryError> {
        let factory = self
            .factories
            .get(&spec.name)
            .ok_or_else(|| RegistryError::Unknown {
                family: self.family,
                name: spec.name.clone(),
                available: self.names().join(", "),
            })?;
        factory(&spec.params).map_err(|reason| RegistryError::BadParams {
            family: self.family,
            name: spec.name.clone(),
            reason,
        })
    }

    pub fn build_named(&self, name: &str) -> Result<Box<T>, RegistryError> {
        self.build(&StrategySpec::named(name))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn family(&self) -> &'static str {
        self.family
    }
}

/// Deserialize strategy parameters, rejecting unknown keys via the target's serde attributes.
pub fn parse_params<P: serde::de::DeserializeOwned>(params: &serde_json::Value) -> Result<P, String> {
    let value = if params.is_null() {
        empty_params()
    } else {
        params.clone()
    };
    serde_json::from_value(value).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Plain;
    impl Greeter for Plain {
        fn greet(&self) -> String {
            "hi".into()
        }
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct LoudParams {
        times: usize,
    }
    struct Loud(usize);
    impl Greeter for Loud {
        fn greet(&self) -> String {
            "HI".repeat(self.0)
        }
    }

    fn registry() -> Registry<dyn Greeter> {
        let mut r: Registry<dyn Greeter> = Registry::new("greeter");
        r.register("plain", |_| Ok(Box::new(Plain))).unwrap();
        r.register("loud", |p| {
            let p: LoudParams = parse_params(p)?;
            Ok(Box::new(Loud(p.times)))
        })
        .unwrap();
        r
    }

    #[test]
    fn builds_by_name_with_params() {
        let r = registry();
        assert_eq!(r.build_named("plain").unwrap().greet(), "hi");
        let spec = StrategySpec::with_params("loud", serde_json::json!({"times": 2}));
        assert_eq!(r.build(&spec).unwrap().greet(), "HIHI");
        assert_eq!(r.names(), vec!["loud", "plain"]);
    }

    #[test]
    fn unknown_and_bad_params_are_errors() {
        let r = registry();
        assert!(matches!(r.build_named("nope"), Err(RegistryError::Unknown { .. })));
        let spec = StrategySpec::with_params("loud", serde_json::json!({"times": 2, "x": 1}));
        assert!(matches!(r.build(&spec), Err(RegistryError::BadParams { .. })));
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut r = registry();
        assert!(r.register("plain", |_| Ok(Box::new(Plain))).is_err());
    }
}
