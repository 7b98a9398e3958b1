//! Single-line textual representation of entities, e.g.
//! `Type: Alarm | time: 08:06 PM; label: brush hair; status: Off`.

use std::collections::HashMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::screen::Entity;

const BUILTIN_RULES: &str = include_str!("../data/entity_rules.toml");

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Field {
    pub key: String,
    /// Rendered as `label: value` when set, as the bare value otherwise.
    #[serde(default)]
    pub label: Option<String>,
}

impl Field {
    pub fn bare(key: impl Into<String>) -> Self {
        Self { key: key.into(), label: None }
    }

    pub fn labeled(key: impl Into<String>, label: impl Into<String>) -> Self {
        Self { key: key.into(), label: Some(label.into()) }
    }
}

fn default_field_separator() -> String {
    " | ".into()
}

fn default_sub_separator() -> String {
    "; ".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextualizationRule {
    /// Lower-case entity type name this rule applies to.
    pub name: String,
    /// Type tag emitted after `Type: `; defaults to the CamelCase name.
    #[serde(default)]
    pub alias: Option<String>,
    #[serde(default)]
    pub segments: Vec<Vec<Field>>,
    #[serde(default = "default_field_separator")]
    pub field_separator: String,
    #[serde(default = "default_sub_separator")]
    pub sub_separator: String,
}

impl TextualizationRule {
    pub fn new(name: impl Into<String>, segments: Vec<Vec<Field>>) -> Self {
        Self {
            name: name.into().to_lowercase(),
            alias: None,
            segments,
            field_separator: default_field_separator(),
            sub_separator: default_sub_separator(),
        }
    }

    pub fn with_alias(mut self, alias: impl Into<String>) -> Self {
        self.alias = Some(alias.into());
        self
    }

    /// Fallback for unregistered types: every property in stored order, one
    /// per segment. A property keyed `value` is emitted bare.
    fn generic(entity: &Entity) -> Self {
        let segments = entity
            .properties()
            .iter()
            .map(|(k, _)| {
                vec![if k == "value" {
                    Field::bare(k.clone())
                } else {
                    Field::labeled(k.clone(), k.clone())
                }]
            })
            .collect();
        Self::new(entity.entity_type().as_str(), segments)
    }

    pub fn type_tag(&self) -> String {
        self.alias.clone().unwrap_or_else(|| camel_case(&self.name))
    }

    pub fn apply(&self, entity: &Entity) -> String {
        let mut out = format!("Type: {}", clean(&self.type_tag()));
        for segment in &self.segments {
            let parts: Vec<String> = segment
                .iter()
                .filter_map(|f| {
                    entity.property(&f.key).map(|v| match &f.label {
                        Some(label) => format!("{}: {}", clean(label), clean(v)),
                        None => clean(v),
                    })
                })
                .collect();
            if !parts.is_empty() {
                out.push_str(&self.field_separator);
                out.push_str(&parts.join(&self.sub_separator));
            }
        }
        out
    }
}

/// `"local business"` → `"LocalBusiness"`.
pub fn camel_case(name: &str) -> String {
    name.split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().chain(chars).collect::<String>(),
                None => String::new(),
            }
        })
        .collect()
}

// Rendered entities live on one prompt line.
fn clean(s: &str) -> String {
    s.replace(['\n', '\t', '\r'], " ")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    #[serde(default)]
    rule: Vec<TextualizationRule>,
}

/// Entity-type → rule lookup. Unregistered types fall back to a generic rule.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    rules: HashMap<String, TextualizationRule>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The bundled rules covering the common entity domains.
    pub fn builtin() -> Self {
        let mut registry = Self::new();
        registry
            .load_toml(BUILTIN_RULES, false)
            .expect("bundled rules are valid");
        registry
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut registry = Self::new();
        registry.load_toml(text, false)?;
        Ok(registry)
    }

    /// Adds every rule in a TOML rule file (`[[rule]]` tables).
    pub fn load_toml(&mut self, text: &str, overwrite: bool) -> Result<()> {
        let file: RuleFile = toml::from_str(text).map_err(|e| Error::RuleFile(e.to_string()))?;
        for rule in file.rule {
            if overwrite {
                self.register_or_replace(rule);
            } else {
                self.register(rule)?;
            }
        }
        Ok(())
    }

    pub fn register(&mut self, mut rule: TextualizationRule) -> Result<()> {
        rule.name = rule.name.to_lowercase();
        if self.rules.contains_key(&rule.name) {
            return Err(Error::DuplicateRule(rule.name));
        }
        self.rules.insert(rule.name.clone(), rule);
        Ok(())
    }

    pub fn register_or_replace(&mut self, mut rule: TextualizationRule) {
        rule.name = rule.name.to_lowercase();
        self.rules.insert(rule.name.clone(), rule);
    }

    pub fn rule(&self, type_name: &str) -> Option<&TextualizationRule> {
        self.rules
            .get(type_name)
            .or_else(|| self.rules.get(&type_name.to_lowercase()))
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn textualize(&self, entity: &Entity) -> String {
        match self.rule(entity.entity_type().as_str()) {
            Some(rule) => rule.apply(entity),
            None => TextualizationRule::generic(entity).apply(entity),
        }
    }
}
