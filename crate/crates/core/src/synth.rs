//! Template-driven synthetic datapoints.
//!
//! A language template holds query variations with `[slot]` placeholders; its
//! slot list supplies the values and the entity types the mention resolves
//! to. Every combination of slot values yields one query. Each query is
//! paired with one positive entity per ground-truth type, drawn from a value
//! bank, plus randomly sampled negatives of other types.
//!
//! Template files are plain text:
//!
//! ```text
//! # comment
//! template: share_address
//! variations:
//!   share [mention] with [name]
//! slots:
//!   mention: this address | that address
//!   name: Mom | Dad
//! ground_truth_types:
//!   email address
//!   physical address
//! ```
//!
//! A file may hold several templates, each opened by a `template:` line.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::screen::{DataKind, DataPoint, Entity, EntityType};

const BUNDLED_TEMPLATES: &str = include_str!("../data/templates.txt");
const BUNDLED_BANK: &str = include_str!("../data/value_bank.toml");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageTemplate {
    pub id: String,
    pub variations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotList {
    pub slots: BTreeMap<String, Vec<String>>,
    pub ground_truth_types: Vec<EntityType>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSpec {
    pub template: LanguageTemplate,
    pub slots: SlotList,
}

impl TemplateSpec {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Template { template: self.template.id.clone(), message: message.into() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.template.variations.is_empty() {
            return Err(self.err("no variations"));
        }
        if self.slots.ground_truth_types.is_empty() {
            return Err(self.err("no ground truth types"));
        }
        for variation in &self.template.variations {
            for name in placeholders(variation) {
                match self.slots.slots.get(name) {
                    None => return Err(self.err(format!("placeholder [{name}] has no slot"))),
                    Some(values) if values.is_empty() => {
                        return Err(self.err(format!("placeholder [{name}] has no values")))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    /// Number of queries `expand_template` will produce.
    pub fn expansion_count(&self) -> usize {
        self.template
            .variations
            .iter()
            .map(|v| {
                placeholders(v)
                    .iter()
                    .map(|p| self.slots.slots.get(*p).map_or(0, Vec::len))
                    .product::<usize>()
            })
            .sum()
    }
}

/// Distinct placeholder names in order of first appearance.
pub fn placeholders(variation: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    let mut rest = variation;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else { break };
        let name = &after[..close];
        if !name.is_empty() && !out.contains(&name) {
            out.push(name);
        }
        rest = &after[close + 1..];
    }
    out
}

/// Every query obtained by filling the placeholders of every variation. A
/// placeholder repeated within one variation takes the same value each time.
pub fn expand_template(template: &LanguageTemplate, slots: &SlotList) -> Result<Vec<String>> {
    let spec = TemplateSpec { template: template.clone(), slots: slots.clone() };
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.expansion_count());
    for variation in &template.variations {
        let names = placeholders(variation);
        let values: Vec<&Vec<String>> = names.iter().map(|n| &slots.slots[*n]).collect();
        let total: usize = values.iter().map(|v| v.len()).product();
        for combo in 0..total {
            // mixed radix, last placeholder varies fastest
            let mut rest = combo;
            let mut choice = vec![0; names.len()];
            for k in (0..names.len()).rev() {
                choice[k] = rest % values[k].len();
                rest /= values[k].len();
            }
            let mut query = variation.clone();
            for (k, name) in names.iter().enumerate() {
                query = query.replace(&format!("[{name}]"), &values[k][choice[k]]);
            }
            out.push(query);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Variations,
    Slots,
    GroundTruth,
}

/// Parses a template file; errors carry 1-based line numbers.
pub fn parse_templates(text: &str) -> Result<Vec<TemplateSpec>> {
    let mut specs: Vec<(usize, TemplateSpec)> = Vec::new();
    let mut section = Section::None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Parse { line: line_no, message };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let indented = raw.starts_with([' ', '\t']);
        if !indented {
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| err(format!("expected a section header, found {line:?}")))?;
            let value = value.trim();
            match key.trim() {
                "template" => {
                    if value.is_empty() {
                        return Err(err("template id is empty".into()));
                    }
                    specs.push((
                        line_no,
                        TemplateSpec {
                            template: LanguageTemplate { id: value.to_owned(), variations: Vec::new() },
                            slots: SlotList { slots: BTreeMap::new(), ground_truth_types: Vec::new() },
                        },
                    ));
                    section = Section::None;
                }
                other => {
                    if specs.is_empty() {
                        return Err(err(format!("section '{other}' before any 'template:' line")));
                    }
                    if !value.is_empty() {
                        return Err(err(format!("section '{other}' takes no inline value")));
                    }
                    section = match other {
                        "variations" => Section::Variations,
                        "slots" => Section::Slots,
                        "ground_truth_types" => Section::GroundTruth,
                        _ => return Err(err(format!("unknown section '{other}'"))),
                    };
                }
            }
            continue;
        }
        let Some((_, spec)) = specs.last_mut() else {
            return Err(err("indented line outside a template".into()));
        };
        match section {
            Section::None => return Err(err("indented line outside a section".into())),
            Section::Variations => spec.template.variations.push(line.to_owned()),
            Section::Slots => {
                let (name, values) = line
                    .split_once(':')
                    .ok_or_else(|| err(format!("expected 'slot: value | value', found {line:?}")))?;
                let name = name.trim().trim_start_matches('[').trim_end_matches(']');
                let values: Vec<String> = values
                    .split('|')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(str::to_owned)
                    .collect();
                if values.is_empty() {
                    return Err(err(format!("slot '{name}' has no values")));
                }
                if spec.slots.slots.insert(name.to_owned(), values).is_some() {
                    return Err(err(format!("slot '{name}' defined twice")));
                }
            }
            Section::GroundTruth => spec
                .slots
                .ground_truth_types
                .push(EntityType::new(line).map_err(|e| err(e.to_string()))?),
        }
    }
    for (line, spec) in &specs {
        spec.validate().map_err(|e| Error::Parse { line: *line, message: e.to_string() })?;
    }
    Ok(specs.into_iter().map(|(_, s)| s).collect())
}

pub fn bundled_templates() -> Vec<TemplateSpec> {
    parse_templates(BUNDLED_TEMPLATES).expect("bundled templates are valid")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankFile {
    entry: Vec<BankEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankEntry {
    #[serde(rename = "type")]
    entity_type: String,
    properties: Vec<(String, String)>,
}

/// Surface forms per entity type, used for synthetic positives and negatives.
#[derive(Debug, Clone, Default)]
pub struct ValueBank {
    entries: BTreeMap<EntityType, Vec<Entity>>,
}

impl ValueBank {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: BankFile = toml::from_str(text).map_err(|e| Error::RuleFile(e.to_string()))?;
        let mut bank = Self::default();
        for entry in file.entry {
            let t = EntityType::new(entry.entity_type)?;
            let entity = Entity::new(t.clone(), entry.properties)?;
            bank.entries.entry(t).or_default().push(entity);
        }
        Ok(bank)
    }

    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_BANK).expect("bundled value bank is valid")
    }

    pub fn types(&self) -> impl Iterator<Item = &EntityType> {
        self.entries.keys()
    }

    pub fn values(&self, t: &EntityType) -> Option<&[Entity]> {
        self.entries.get(t).map(Vec::as_slice)
    }

    /// Every banked entity whose type is not in `exclude`.
    pub fn negative_pool(&self, exclude: &[EntityType]) -> Vec<Entity> {
        self.entries
            .iter()
            .filter(|(t, _)| !exclude.contains(t))
            .flat_map(|(_, v)| v.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub per_query_negatives: usize,
    pub seed: u64,
    /// Uniform seeded subsample of the expanded queries when set.
    pub max_samples: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { per_query_negatives: 3, seed: 0, max_samples: None }
    }
}

/// One datapoint per expanded query.
pub fn generate_datapoints(
    spec: &TemplateSpec,
    bank: &ValueBank,
    negative_pool: &[Entity],
    config: &SynthConfig,
) -> Result<Vec<DataPoint>> {
    let gt_types = &spec.slots.ground_truth_types;
    if let Some(bad) = negative_pool.iter().find(|e| gt_types.contains(e.entity_type())) {
        return Err(spec.err(format!(
            "negative pool contains a ground-truth typed entity ({})",
            bad.entity_type()
        )));
    }
    if negative_pool.len() < config.per_query_negatives {
        return Err(Error::NegativePoolTooSmall {
            available: negative_pool.len(),
            requested: config.per_query_negatives,
        });
    }
    let positives_by_type: Vec<&[Entity]> = gt_types
        .iter()
        .map(|t| {
            bank.values(t)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::UnknownBankType(t.to_string()))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut queries = expand_template(&spec.template, &spec.slots)?;
    if let Some(cap) = config.max_samples {
        if queries.len() > cap {
            let mut keep: Vec<usize> = rand::seq::index::sample(&mut rng, queries.len(), cap).into_vec();
            keep.sort_unstable();
            let keep: HashSet<usize> = keep.into_iter().collect();
            queries = queries
                .into_iter()
                .enumerate()
                .filter(|(i, _)| keep.contains(i))
                .map(|(_, q)| q)
                .collect();
        }
    }

    let mut out = Vec::with_capacity(queries.len());
    for query in queries {
        let mut tagged: Vec<(Entity, bool)> = positives_by_type
            .iter()
            .map(|values| (values.choose(&mut rng).expect("non-empty").clone(), true))
            .collect();
        tagged.extend(
            negative_pool
                .choose_multiple(&mut rng, config.per_query_negatives)
                .map(|e| (e.clone(), false)),
        );
        tagged.shuffle(&mut rng);
        let ground_truth: Vec<usize> = tagged
            .iter()
            .enumerate()
            .filter(|(_, (_, positive))| *positive)
            .map(|(i, _)| i + 1)
            .collect();
        let entities = tagged.into_iter().map(|(e, _)| e).collect();
        out.push(DataPoint::new(query, entities, ground_truth, None, DataKind::Synthetic)?);
    }
    Ok(out)
}

/// Generates from several templates, each with its own seed derived from
/// `config.seed` and the template position.
pub fn generate_all(specs: &[TemplateSpec], bank: &ValueBank, config: &SynthConfig) -> Result<Vec<DataPoint>> {
    let mut out = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let pool = bank.negative_pool(&spec.slots.ground_truth_types);
        let per_template = SynthConfig {
            seed: config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64),
            ..config.clone()
        };
        out.extend(generate_datapoints(spec, bank, &pool, &per_template)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slots(pairs: &[(&str, &[&str])], gt: &[&str]) -> SlotList {
        SlotList {
            slots: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
            ground_truth_types: gt.iter().map(|t| EntityType::new(*t).unwrap()).collect(),
        }
    }

    fn template(vs: &[&str]) -> LanguageTemplate {
        LanguageTemplate { id: "t".into(), variations: vs.iter().map(|s| s.to_string()).collect() }
    }

    /// Enumeration by nested loops over explicit value lists.
    fn brute_force(variation: &str, slots: &SlotList) -> Vec<String> {
        let names = placeholders(variation);
        let mut acc = vec![variation.to_string()];
        for name in names {
            let mut next = Vec::new();
            for partial in &acc {
                for v in &slots.slots[name] {
                    next.push(partial.replace(&format!("[{name}]"), v));
                }
            }
            acc = next;
        }
        acc
    }

    #[test]
    fn share_address_expansion() {
        let s = slots(&[("mention", &["this address", "that address"]), ("name", &["Mom"])], &["email address"]);
        let q = expand_template(&template(&["share [mention] with [name]"]), &s).unwrap();
        assert_eq!(q, vec!["share this address with Mom", "share that address with Mom"]);
    }

    #[test]
    fn zero_placeholders_yield_itself_once() {
        let s = slots(&[], &["music"]);
        assert_eq!(expand_template(&template(&["play it"]), &s).unwrap(), vec!["play it"]);
    }

    #[test]
    fn count_formula_matches_enumeration() {
        let s = slots(&[("mention", &["a", "b"]), ("name", &["x", "y", "z"])], &["person"]);
        let t = template(&["share [mention] with [name]", "send [mention] to [name] please"]);
        let q = expand_template(&t, &s).unwrap();
        let expected: Vec<String> = t.variations.iter().flat_map(|v| brute_force(v, &s)).collect();
        assert_eq!(q.len(), 12);
        assert_eq!(q, expected);
        assert_eq!(TemplateSpec { template: t, slots: s }.expansion_count(), 12);
    }

    #[test]
    fn repeated_placeholder_shares_value() {
        let s = slots(&[("x", &["a", "b"])], &["person"]);
        assert_eq!(expand_template(&template(&["[x] and [x]"]), &s).unwrap(), vec!["a and a", "b and b"]);
    }

    #[test]
    fn missing_or_empty_slot_is_error() {
        let s = slots(&[("mention", &[])], &["person"]);
        assert!(expand_template(&template(&["call [mention]"]), &s).is_err());
        let s = slots(&[], &["person"]);
        assert!(expand_template(&template(&["call [mention]"]), &s).is_err());
    }

    #[test]
    fn parses_template_file() {
        let text = "# demo\ntemplate: share\nvariations:\n  share [mention] with [name]\nslots:\n  mention: this address | that address\n  [name]: Mom\nground_truth_types:\n  email address\n  physical address\n";
        let specs = parse_templates(text).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].expansion_count(), 2);
        assert_eq!(specs[0].slots.ground_truth_types.len(), 2);
    }

    #[test]
    fn template_diagnostics_name_lines() {
        let bad = "template: a\nvariations:\n  x\nbogus:\n";
        assert!(matches!(parse_templates(bad), Err(Error::Parse { line: 4, .. })));
        let bad = "variations:\n  x\n";
        assert!(matches!(parse_templates(bad), Err(Error::Parse { line: 1, .. })));
        let bad = "template: a\nvariations:\n  call [who]\nground_truth_types:\n  person\n";
        assert!(matches!(parse_templates(bad), Err(Error::Parse { line: 1, .. })));
        let bad = "template: a\nslots:\n  who:\n";
        assert!(matches!(parse_templates(bad), Err(Error::Parse { line: 3, .. })));
    }

    fn bank() -> ValueBank {
        ValueBank::bundled()
    }

    fn play_it() -> TemplateSpec {
        TemplateSpec { template: template(&["play it"]), slots: slots(&[], &["music", "video"]) }
    }

    #[test]
    fn multi_type_ground_truth() {
        let b = bank();
        let spec = play_it();
        let pool = b.negative_pool(&spec.slots.ground_truth_types);
        let dps = generate_datapoints(&spec, &b, &pool, &SynthConfig::default()).unwrap();
        assert_eq!(dps.len(), 1);
        let dp = &dps[0];
        assert_eq!(dp.entities().len(), 5);
        let gt_types: Vec<&str> = dp.ground_truth().iter().map(|&i| dp.entities()[i - 1].entity_type().as_str()).collect();
        assert_eq!(gt_types.len(), 2);
        assert!(gt_types.contains(&"music") && gt_types.contains(&"video"));
    }

    #[test]
    fn zero_negatives_gives_positives_only() {
        let b = bank();
        let spec = play_it();
        let config = SynthConfig { per_query_negatives: 0, ..Default::default() };
        let dps = generate_datapoints(&spec, &b, &[], &config).unwrap();
        assert_eq!(dps[0].entities().len(), 2);
        assert_eq!(dps[0].ground_truth().len(), 2);
    }

    #[test]
    fn pool_errors() {
        let b = bank();
        let spec = play_it();
        let config = SynthConfig { per_query_negatives: 2, ..Default::default() };
        let pool = b.negative_pool(&spec.slots.ground_truth_types);
        assert!(matches!(
            generate_datapoints(&spec, &b, &pool[..1], &config),
            Err(Error::NegativePoolTooSmall { available: 1, requested: 2 })
        ));
        let tainted = b.values(&EntityType::new("music").unwrap()).unwrap().to_vec();
        assert!(generate_datapoints(&spec, &b, &tainted, &config).is_err());
        let unknown = TemplateSpec { template: template(&["x"]), slots: slots(&[], &["gizmo"]) };
        assert!(matches!(generate_datapoints(&unknown, &b, &pool, &config), Err(Error::UnknownBankType(_))));
    }

    #[test]
    fn max_samples_caps_output() {
        let b = bank();
        let specs = bundled_templates();
        let spec = specs.iter().max_by_key(|s| s.expansion_count()).unwrap();
        let pool = b.negative_pool(&spec.slots.ground_truth_types);
        let config = SynthConfig { max_samples: Some(5), ..Default::default() };
        let dps = generate_datapoints(spec, &b, &pool, &config).unwrap();
        assert_eq!(dps.len(), 5);
        let all = expand_template(&spec.template, &spec.slots).unwrap();
        assert!(dps.iter().all(|d| all.iter().any(|q| q == d.request())));
    }

    #[test]
    fn bundled_data_is_consistent() {
        let b = bank();
        for spec in bundled_templates() {
            for t in &spec.slots.ground_truth_types {
                assert!(b.values(t).is_some(), "{} lacks bank values for {t}", spec.template.id);
            }
            assert!(b.negative_pool(&spec.slots.ground_truth_types).len() >= 3);
        }
    }

    #[test]
    fn generated_labels_are_exact() {
        let b = bank();
        let specs = bundled_templates();
        let data = generate_all(&specs, &b, &SynthConfig { seed: 11, ..Default::default() }).unwrap();
        let expected: usize = specs.iter().map(TemplateSpec::expansion_count).sum();
        assert_eq!(data.len(), expected);
        let mut offset = 0;
        for spec in &specs {
            let gt_types = &spec.slots.ground_truth_types;
            for dp in &data[offset..offset + spec.expansion_count()] {
                let positive: Vec<usize> = dp
                    .entities()
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| gt_types.contains(e.entity_type()))
                    .map(|(i, _)| i + 1)
                    .collect();
                assert_eq!(dp.ground_truth().iter().copied().collect::<Vec<_>>(), positive);
                assert_eq!(positive.len(), gt_types.len());
            }
            offset += spec.expansion_count();
        }
    }
}
