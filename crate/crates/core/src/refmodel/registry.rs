use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use super::DtApiKind;

pub const BUILTIN_MODELS: &str = include_str!("../../models/kernel.toml");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("malformed registry: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("{0} is registered in more than one section")]
    Duplicate(String),
    #[error("{api}: {message}")]
    Invalid { api: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefOpKind {
    Inc,
    Dec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefOpReturn {
    /// The call result aliases the refcounted argument.
    Arg,
    /// The result, if any, is a nondet value of the declared type.
    Nondet,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefOp {
    pub op: RefOpKind,
    pub class: String,
    #[serde(default)]
    pub arg: usize,
    #[serde(default = "default_return")]
    pub returns: RefOpReturn,
}

fn default_return() -> RefOpReturn {
    RefOpReturn::Nondet
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtApi {
    pub decrements: bool,
    pub null_on_null: bool,
    pub class: String,
    #[serde(default)]
    pub input: usize,
    /// Argument whose nullness selects the null-input behavior; defaults
    /// to `input`.
    #[serde(default)]
    pub null_input: Option<usize>,
}

impl DtApi {
    pub fn null_arg(&self) -> usize {
        self.null_input.unwrap_or(self.input)
    }

    pub fn kind(&self) -> DtApiKind {
        DtApiKind {
            decrements_input_rc: self.decrements,
            may_return_null_on_null_input: self.null_on_null,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusFinder {
    pub aggregate: String,
    pub field: String,
    #[serde(default = "default_bus_class")]
    pub class: String,
}

fn default_bus_class() -> String {
    "device".to_string()
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Devres {
    pub cleanup: usize,
    pub payload: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevLink {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsmSemantics {
    /// No effect; a result, if any, is nondet.
    Noop,
    /// The result is the first operand.
    Identity,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegistry {
    #[serde(default)]
    refops: BTreeMap<String, RefOp>,
    #[serde(default)]
    dt: BTreeMap<String, DtApi>,
    #[serde(default)]
    bus: BTreeMap<String, BusFinder>,
    #[serde(default)]
    devres: BTreeMap<String, Devres>,
    #[serde(default)]
    devlink: BTreeMap<String, DevLink>,
    #[serde(default)]
    asm: BTreeMap<String, AsmSemantics>,
}

/// Immutable table of modeled kernel APIs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModelRegistry {
    pub refops: BTreeMap<String, RefOp>,
    pub dt: BTreeMap<String, DtApi>,
    pub bus: BTreeMap<String, BusFinder>,
    pub devres: BTreeMap<String, Devres>,
    pub devlink: BTreeSet<String>,
    pub asm: BTreeMap<String, AsmSemantics>,
}

impl ModelRegistry {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_MODELS).expect("bundled registry is well formed")
    }

    pub fn from_toml(text: &str) -> Result<Self, RegistryError> {
        let raw: RawRegistry = toml::from_str(text)?;
        let reg = ModelRegistry {
            refops: raw.refops,
            dt: raw.dt,
            bus: raw.bus,
            devres: raw.devres,
            devlink: raw.devlink.into_keys().collect(),
            asm: raw.asm,
        };
        let mut seen = BTreeSet::new();
        for name in reg.api_names() {
            if !seen.insert(name) {
                return Err(RegistryError::Duplicate(name.to_string()));
            }
        }
        for (api, d) in &reg.devres {
            if d.cleanup == d.payload {
                return Err(RegistryError::Invalid {
                    api: api.clone(),
                    message: "cleanup and payload must be different arguments".into(),
                });
            }
        }
        Ok(reg)
    }

    /// Every registered call name, in section order (may repeat across
    /// sections in a malformed table).
    pub fn api_names(&self) -> impl Iterator<Item = &str> {
        self.refops
            .keys()
            .chain(self.dt.keys())
            .chain(self.bus.keys())
            .chain(self.devres.keys())
            .chain(self.devlink.iter())
            .map(String::as_str)
    }

    pub fn is_registered(&self, name: &str) -> bool {
        self.refops.contains_key(name)
            || self.dt.contains_key(name)
            || self.bus.contains_key(name)
            || self.devres.contains_key(name)
            || self.devlink.contains(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_registry_loads() {
        let r = ModelRegistry::builtin();
        assert_eq!(r.refops["get_device"].op, RefOpKind::Inc);
        assert_eq!(r.refops["get_device"].returns, RefOpReturn::Arg);
        assert_eq!(r.refops["put_device"].returns, RefOpReturn::Nondet);
        assert_eq!(r.dt.len(), 8);
        assert!(r.devlink.contains("device_link_add"));
        assert_eq!(r.asm["mov"], AsmSemantics::Identity);
    }

    #[test]
    fn table_quadrants() {
        let r = ModelRegistry::builtin();
        let k = |n: &str| {
            let d = r.dt[n].kind();
            (d.decrements_input_rc, d.may_return_null_on_null_input)
        };
        assert_eq!(k("of_get_next_child"), (true, true));
        assert_eq!(k("of_find_node_by_name"), (true, false));
        assert_eq!(k("of_get_parent"), (false, true));
        assert_eq!(k("of_find_next_cache_node"), (false, false));
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = "[refops.x]\nop = \"inc\"\nclass = \"device\"\n[devlink.x]\n";
        assert!(matches!(
            ModelRegistry::from_toml(text),
            Err(RegistryError::Duplicate(_))
        ));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "[refops.x]\nop = \"inc\"\nclass = \"device\"\ncolour = 1\n";
        assert!(ModelRegistry::from_toml(text).is_err());
    }
}
