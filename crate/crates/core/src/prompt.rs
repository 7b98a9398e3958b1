//! Multiple-choice prompts for a reference resolver.
//!
//! Conversational prompts list the textualized candidates after a `0. None`
//! option, in a seeded shuffled order. On-screen prompts embed the screen
//! parse, whose injected markers carry the entity numbers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cluster::{encode_clusters, ClusterConfig, ClusterEncoding};
use crate::error::{Error, Result};
use crate::layout::{encode_screen, EncoderConfig, OnscreenParse};
use crate::screen::{DataKind, DataPoint, Entity};
use crate::textualize::Registry;

pub const INSTRUCTION: &str = "Select which among the following entities, if any, are required to understand the user request below. Output 0 if none of the entities are relevant.";
pub const TRAILER: &str = "Relevant entity:";
pub const NONE_OPTION: &str = "0. None";

/// Maps 1-based prompt positions to 1-based original entity indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    to_original: Vec<usize>,
    to_prompt: Vec<usize>,
}

impl IndexMap {
    pub fn identity(n: usize) -> Self {
        Self::from_order((1..=n).collect())
    }

    /// `order[p - 1]` is the original index shown at prompt position `p`.
    /// Panics unless `order` is a permutation of `1..=n`.
    pub fn from_order(order: Vec<usize>) -> Self {
        let n = order.len();
        let mut to_prompt = vec![0; n];
        for (p, &orig) in order.iter().enumerate() {
            assert!((1..=n).contains(&orig) && to_prompt[orig - 1] == 0, "not a permutation: {order:?}");
            to_prompt[orig - 1] = p + 1;
        }
        Self { to_original: order, to_prompt }
    }

    pub fn len(&self) -> usize {
        self.to_original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_original.is_empty()
    }

    pub fn original(&self, prompt_position: usize) -> Option<usize> {
        prompt_position.checked_sub(1).and_then(|i| self.to_original.get(i).copied())
    }

    pub fn prompt_position(&self, original: usize) -> Option<usize> {
        original.checked_sub(1).and_then(|i| self.to_prompt.get(i).copied())
    }

    pub fn order(&self) -> &[usize] {
        &self.to_original
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Conversational,
    Onscreen,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub index_map: IndexMap,
    pub variant: Variant,
}

/// How on-screen datapoints are encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Screen parse with entity markers injected in place.
    #[default]
    Injected,
    /// Screen parse with raw entity text, entities listed separately.
    Grab,
    /// Per-entity cluster context, no screen parse.
    Cluster,
}

impl Strategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "injected" => Some(Strategy::Injected),
            "grab" => Some(Strategy::Grab),
            "cluster" => Some(Strategy::Cluster),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Injected => "injected",
            Strategy::Grab => "grab",
            Strategy::Cluster => "cluster",
        }
    }
}

/// Seeded permutation of the candidates.
pub fn shuffle_entities(entities: &[Entity], seed: u64) -> (Vec<Entity>, IndexMap) {
    let mut order: Vec<usize> = (1..=entities.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let shuffled = order.iter().map(|&i| entities[i - 1].clone()).collect();
    (shuffled, IndexMap::from_order(order))
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn header(request: &str) -> String {
    format!("{INSTRUCTION}\n\nUser request: {}\n", one_line(request))
}

fn entity_list<'a>(lines: impl Iterator<Item = String> + 'a) -> String {
    let mut out = String::from("User Entities:\n");
    out.push_str(NONE_OPTION);
    out.push('\n');
    for (i, line) in lines.enumerate() {
        out.push_str(&format!("{}. {line}\n", i + 1));
    }
    out
}

pub fn build_conversational_prompt(
    request: &str,
    entities: &[Entity],
    registry: &Registry,
    seed: u64,
) -> Result<Prompt> {
    if entities.is_empty() {
        return Err(Error::NoCandidates);
    }
    let (_, index_map) = shuffle_entities(entities, seed);
    conversational_prompt_in_order(request, entities, registry, index_map)
}

/// Conversational prompt listing the candidates in the order given by
/// `index_map`.
pub fn conversational_prompt_in_order(
    request: &str,
    entities: &[Entity],
    registry: &Registry,
    index_map: IndexMap,
) -> Result<Prompt> {
    if entities.is_empty() {
        return Err(Error::NoCandidates);
    }
    assert_eq!(index_map.len(), entities.len(), "index map does not cover the entities");
    let mut text = header(request);
    text.push_str(&entity_list(
        index_map.order().iter().map(|&i| registry.textualize(&entities[i - 1])),
    ));
    text.push_str(TRAILER);
    Ok(Prompt { text, index_map, variant: Variant::Conversational })
}

pub fn build_onscreen_prompt(request: &str, parse: &OnscreenParse) -> Result<Prompt> {
    if parse.marker_spans.is_empty() {
        return Err(Error::NoMarkers);
    }
    let mut text = header(request);
    text.push_str("Screen:\n");
    text.push_str(&parse.text);
    text.push('\n');
    text.push_str(TRAILER);
    Ok(Prompt {
        text,
        index_map: IndexMap::identity(parse.marker_spans.len()),
        variant: Variant::Onscreen,
    })
}

/// Raw screen parse followed by the candidate list, entities in their
/// original order.
pub fn build_grab_prompt(
    request: &str,
    parse: &OnscreenParse,
    entities: &[Entity],
    registry: &Registry,
) -> Result<Prompt> {
    if entities.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut text = header(request);
    text.push_str("Screen:\n");
    text.push_str(&parse.text);
    text.push('\n');
    text.push_str(&entity_list(entities.iter().map(|e| registry.textualize(e))));
    text.push_str(TRAILER);
    Ok(Prompt {
        text,
        index_map: IndexMap::identity(entities.len()),
        variant: Variant::Onscreen,
    })
}

/// One candidate line of the clustering encoding.
pub fn cluster_entity_line(entity: &Entity, encoding: &ClusterEncoding, registry: &Registry) -> String {
    let mut line = registry.textualize(entity);
    if !encoding.surrounding_prompt.is_empty() {
        line.push_str(" | surr_objects: ");
        line.push_str(&one_line(&encoding.surrounding_prompt.join(", ")));
    }
    line.push_str(&format!(
        " | distance_from_top: {}; distance_from_left: {}",
        encoding.distance_from_top, encoding.distance_from_left
    ));
    line
}

pub fn build_cluster_prompt(
    request: &str,
    entities: &[Entity],
    encodings: &[ClusterEncoding],
    registry: &Registry,
) -> Result<Prompt> {
    if entities.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut text = header(request);
    text.push_str(&entity_list(
        entities
            .iter()
            .zip(encodings)
            .map(|(e, enc)| cluster_entity_line(e, enc, registry)),
    ));
    text.push_str(TRAILER);
    Ok(Prompt {
        text,
        index_map: IndexMap::identity(entities.len()),
        variant: Variant::Onscreen,
    })
}

/// Chooses the prompt form for a datapoint from its kind and the on-screen
/// strategy.
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    pub registry: Registry,
    pub encoder: EncoderConfig,
    pub cluster: ClusterConfig,
    pub strategy: Strategy,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self {
            registry: Registry::builtin(),
            encoder: EncoderConfig::default(),
            cluster: ClusterConfig::default(),
            strategy: Strategy::Injected,
        }
    }
}

impl PromptBuilder {
    pub fn build(&self, dp: &DataPoint, seed: u64) -> Result<Prompt> {
        match dp.kind() {
            DataKind::Conversational | DataKind::Synthetic => {
                build_conversational_prompt(dp.request(), dp.entities(), &self.registry, seed)
            }
            DataKind::Onscreen => {
                let screen = dp.screen().unwrap_or_default();
                match self.strategy {
                    Strategy::Injected => {
                        let mut config = self.encoder.clone();
                        config.inject_markers = true;
                        build_onscreen_prompt(dp.request(), &encode_screen(screen, dp.entities(), &config)?)
                    }
                    Strategy::Grab => {
                        let config = self.encoder.clone().without_markers();
                        let parse = encode_screen(screen, dp.entities(), &config)?;
                        build_grab_prompt(dp.request(), &parse, dp.entities(), &self.registry)
                    }
                    Strategy::Cluster => {
                        let encodings = encode_clusters(screen, dp.entities(), &self.cluster)?;
                        build_cluster_prompt(dp.request(), dp.entities(), &encodings, &self.registry)
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::screen::{BBox, EntityType};
    use proptest::prelude::*;

    fn person(name: &str) -> Entity {
        Entity::new(EntityType::new("person").unwrap(), [("name", name)]).unwrap()
    }

    #[test]
    fn single_entity_shuffle_is_identity() {
        for seed in 0..20 {
            let (_, map) = shuffle_entities(&[person("a")], seed);
            assert_eq!(map, IndexMap::identity(1));
        }
    }

    #[test]
    fn shuffle_is_deterministic() {
        let es: Vec<_> = ["a", "b", "c", "d", "e"].iter().map(|n| person(n)).collect();
        let (a, ma) = shuffle_entities(&es, 42);
        let (b, mb) = shuffle_entities(&es, 42);
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        for p in 1..=5 {
            assert_eq!(a[p - 1], es[ma.original(p).unwrap() - 1]);
        }
    }

    #[test]
    fn ground_truth_remaps_through_index_map() {
        let map = IndexMap::from_order(vec![3, 1, 5, 2, 4]);
        // original 2 is shown at position 4
        assert_eq!(map.prompt_position(2), Some(4));
        assert_eq!(map.original(4), Some(2));
        assert_eq!(map.original(0), None);
        assert_eq!(map.original(6), None);
    }

    #[test]
    fn single_candidate_prompt() {
        let p = build_conversational_prompt("call her", &[person("Ann")], &Registry::builtin(), 7).unwrap();
        assert_eq!(
            p.text,
            format!("{INSTRUCTION}\n\nUser request: call her\nUser Entities:\n0. None\n1. Type: Person | Ann\nRelevant entity:")
        );
        assert!(build_conversational_prompt("x", &[], &Registry::builtin(), 0).is_err());
    }

    #[test]
    fn onscreen_prompt_requires_markers() {
        let parse = OnscreenParse { text: "plain".into(), marker_spans: vec![] };
        assert!(matches!(build_onscreen_prompt("r", &parse), Err(Error::NoMarkers)));
    }

    #[test]
    fn single_marker_prompt() {
        let e = Entity::new(EntityType::new("phone number").unwrap(), [("value", "555")])
            .unwrap()
            .with_display_text("555")
            .unwrap()
            .with_placement(BBox::new(0.0, 0.0, 5.0, 1.0).unwrap(), vec![])
            .unwrap();
        let parse = encode_screen(&[], &[e], &EncoderConfig::default()).unwrap();
        let p = build_onscreen_prompt("save it", &parse).unwrap();
        assert_eq!(p.text.matches("{{1. ").count(), 1);
        assert!(p.text.ends_with("Screen:\n{{1. 555}}\nRelevant entity:"));
        assert!(!p.text.contains(NONE_OPTION));
    }

    proptest! {
        #[test]
        fn index_map_round_trips(n in 1usize..12, seed in any::<u64>()) {
            let es: Vec<_> = (0..n).map(|i| person(&format!("p{i}"))).collect();
            let (_, map) = shuffle_entities(&es, seed);
            for i in 1..=n {
                prop_assert_eq!(map.original(map.prompt_position(i).unwrap()), Some(i));
                prop_assert_eq!(map.prompt_position(map.original(i).unwrap()), Some(i));
            }
        }

        #[test]
        fn every_prompt_carries_instruction(n in 1usize..6, seed in any::<u64>(), req in "[a-z ]{1,20}") {
            let es: Vec<_> = (0..n).map(|i| person(&format!("p{i}"))).collect();
            let p = build_conversational_prompt(&req, &es, &Registry::builtin(), seed).unwrap();
            prop_assert!(p.text.contains(INSTRUCTION));
            prop_assert_eq!(p.text.lines().filter(|l| l.starts_with("Type: ") || l.contains(". Type: ")).count(), n);
        }
    }
}
