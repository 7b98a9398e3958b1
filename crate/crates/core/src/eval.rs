//! Scoring resolver output against ground truth.
//!
//! A prediction is the set of indices found in the raw output. It is correct
//! only when it is valid and equals the ground-truth set exactly; order and
//! repeats are ignored. Index `0` means "none of the entities" and may not
//! appear alongside any other index.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::record_to_string;
use crate::error::{Error, Result};
use crate::prompt::{Prompt, PromptBuilder};
use crate::screen::{DataKind, DataPoint};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub indices: BTreeSet<usize>,
    pub raw: String,
    pub valid: bool,
}

impl Prediction {
    /// Indices in ascending order, comma separated.
    pub fn canonical(&self) -> String {
        self.indices
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Reads integer tokens separated by commas or whitespace. Anything that is
/// not a non-negative integer in `0..=n`, an empty answer, or `0` mixed with
/// other indices makes the prediction invalid.
pub fn parse_prediction(raw: &str, n: usize) -> Prediction {
    let mut indices = BTreeSet::new();
    let mut valid = true;
    let mut saw_token = false;
    for token in raw.split(|c: char| c == ',' || c.is_whitespace()) {
        let token = token.trim_end_matches('.');
        if token.is_empty() {
            continue;
        }
        saw_token = true;
        match token.parse::<i64>() {
            Ok(v) if v >= 0 && (v as u64) <= n as u64 => {
                indices.insert(v as usize);
            }
            _ => valid = false,
        }
    }
    if !saw_token || (indices.contains(&0) && indices.len() > 1) {
        valid = false;
    }
    Prediction { indices, raw: raw.to_owned(), valid }
}

/// Empty ground truth is compared as `{0}`.
pub fn canonical_ground_truth(gt: &BTreeSet<usize>) -> BTreeSet<usize> {
    if gt.is_empty() {
        BTreeSet::from([0])
    } else {
        gt.clone()
    }
}

pub fn score(pred: &Prediction, gt: &BTreeSet<usize>) -> bool {
    pred.valid && pred.indices == canonical_ground_truth(gt)
}

/// Maps a prediction made against prompt positions back to original entity
/// indices. Invalid predictions are returned unchanged.
pub fn translate_prediction(pred: &Prediction, prompt: &Prompt) -> Prediction {
    if !pred.valid {
        return pred.clone();
    }
    let indices = pred
        .indices
        .iter()
        .map(|&p| if p == 0 { Some(0) } else { prompt.index_map.original(p) })
        .collect::<Option<BTreeSet<usize>>>();
    match indices {
        Some(indices) => Prediction { indices, raw: pred.raw.clone(), valid: true },
        None => Prediction { valid: false, ..pred.clone() },
    }
}

/// What a resolver sees for one item. Remote resolvers use only the prompt.
pub struct ResolveRequest<'a> {
    pub prompt: &'a Prompt,
    pub datapoint: &'a DataPoint,
}

pub trait Resolver: Sync {
    fn name(&self) -> &str;
    fn resolve(&self, request: &ResolveRequest<'_>) -> Result<String>;
}

/// Test double that answers from the ground truth. Indices are emitted in
/// descending prompt order with the last one repeated, so scoring has to
/// ignore order and duplicates.
#[derive(Debug, Default, Clone, Copy)]
pub struct OracleResolver;

impl OracleResolver {
    pub fn answer(prompt: &Prompt, dp: &DataPoint) -> String {
        let mut positions: Vec<usize> = dp
            .ground_truth()
            .iter()
            .filter_map(|&i| prompt.index_map.prompt_position(i))
            .collect();
        if positions.is_empty() {
            return "0".into();
        }
        positions.sort_unstable_by(|a, b| b.cmp(a));
        if positions.len() > 1 {
            positions.push(*positions.last().expect("non-empty"));
        }
        positions.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
    }
}

impl Resolver for OracleResolver {
    fn name(&self) -> &str {
        "oracle"
    }

    fn resolve(&self, request: &ResolveRequest<'_>) -> Result<String> {
        Ok(Self::answer(request.prompt, request.datapoint))
    }
}

/// Always returns the same text.
#[derive(Debug, Clone)]
pub struct ConstantResolver {
    pub output: String,
}

impl Resolver for ConstantResolver {
    fn name(&self) -> &str {
        "constant"
    }

    fn resolve(&self, _request: &ResolveRequest<'_>) -> Result<String> {
        Ok(self.output.clone())
    }
}

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    text: String,
}

/// Remote completion endpoint: POST `{"prompt", "max_tokens"}`, expects
/// `{"text"}` back. One request per item, no retries.
pub struct HttpResolver {
    url: String,
    token: Option<String>,
    max_tokens: u32,
    agent: ureq::Agent,
}

impl HttpResolver {
    pub fn new(url: impl Into<String>, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(true)
            .build()
            .new_agent();
        Self { url: url.into(), token, max_tokens: 16, agent }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }
}

impl Resolver for HttpResolver {
    fn name(&self) -> &str {
        &self.url
    }

    fn resolve(&self, request: &ResolveRequest<'_>) -> Result<String> {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let body = CompletionRequest { prompt: &request.prompt.text, max_tokens: self.max_tokens };
        let mut resp = req
            .send_json(&body)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let parsed: CompletionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(parsed.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemError {
    Prompt,
    Transport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ItemResult {
    pub position: usize,
    pub kind: String,
    pub raw: Option<String>,
    pub valid: bool,
    pub correct: bool,
    pub error: Option<ItemError>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct KindStats {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub dataset: String,
    pub model: String,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub invalid: usize,
    pub invalid_rate: f64,
    pub transport_errors: usize,
    pub unseen_domain: bool,
    pub per_kind: BTreeMap<String, KindStats>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl AccuracyReport {
    pub fn from_items(dataset: &str, model: &str, items: &[ItemResult], unseen_domain: bool) -> Self {
        let mut per_kind: BTreeMap<String, KindStats> = BTreeMap::new();
        for item in items {
            let stats = per_kind.entry(item.kind.clone()).or_default();
            stats.total += 1;
            stats.correct += usize::from(item.correct);
        }
        for stats in per_kind.values_mut() {
            stats.accuracy = ratio(stats.correct, stats.total);
        }
        let total = items.len();
        let correct = items.iter().filter(|i| i.correct).count();
        let invalid = items.iter().filter(|i| i.error.is_none() && !i.valid).count();
        Self {
            dataset: dataset.to_owned(),
            model: model.to_owned(),
            total,
            correct,
            accuracy: ratio(correct, total),
            invalid,
            invalid_rate: ratio(invalid, total),
            transport_errors: items.iter().filter(|i| i.error == Some(ItemError::Transport)).count(),
            unseen_domain,
            per_kind,
        }
    }

    /// Model row with Conv / Synth / Screen / Unseen columns, accuracies in
    /// percent. Columns without data show `-`. A held-out-domain run reports
    /// its overall accuracy under Unseen only.
    pub fn table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |a| format!("{:.1}", a * 100.0));
        let kind = |k: DataKind| {
            if self.unseen_domain {
                None
            } else {
                self.per_kind.get(k.as_str()).map(|s| s.accuracy)
            }
        };
        let unseen = (self.unseen_domain && self.total > 0).then_some(self.accuracy);
        let width = self.model.len().max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}", "Model", "Conv", "Synth", "Screen", "Unseen");
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}",
            self.model,
            cell(kind(DataKind::Conversational)),
            cell(kind(DataKind::Synthetic)),
            cell(kind(DataKind::Onscreen)),
            cell(unseen),
        );
        out
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub dataset_name: String,
    pub seed: u64,
    pub max_in_flight: usize,
    /// Fraction of transport failures above which the run fails.
    pub max_transport_failure_rate: f64,
    pub unseen_domain: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            dataset_name: "dataset".into(),
            seed: 0,
            max_in_flight: 8,
            max_transport_failure_rate: 0.10,
            unseen_domain: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: AccuracyReport,
    pub items: Vec<ItemResult>,
}

/// Shuffle seed for one datapoint, derived from the run seed and the record
/// content so that it does not depend on the datapoint's position.
pub fn item_seed(run_seed: u64, dp: &DataPoint) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    hasher.update(record_to_string(dp).as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn evaluate_item(
    position: usize,
    dp: &DataPoint,
    resolver: &dyn Resolver,
    builder: &PromptBuilder,
    seed: u64,
) -> ItemResult {
    let kind = dp.kind().as_str().to_owned();
    let failed = |error, message: String| ItemResult {
        position,
        kind: kind.clone(),
        raw: None,
        valid: false,
        correct: false,
        error: Some(error),
        message: Some(message),
    };
    let prompt = match builder.build(dp, item_seed(seed, dp)) {
        Ok(p) => p,
        Err(e) => return failed(ItemError::Prompt, e.to_string()),
    };
    let raw = match resolver.resolve(&ResolveRequest { prompt: &prompt, datapoint: dp }) {
        Ok(raw) => raw,
        Err(e) => return failed(ItemError::Transport, e.to_string()),
    };
    let pred = translate_prediction(&parse_prediction(&raw, prompt.index_map.len()), &prompt);
    ItemResult {
        position,
        kind: kind.clone(),
        correct: score(&pred, dp.ground_truth()),
        valid: pred.valid,
        raw: Some(raw),
        error: None,
        message: None,
    }
}

/// Prompts the resolver for every datapoint and scores the answers.
/// Up to `max_in_flight` requests run at once; results are assembled in
/// input order once all have finished.
pub fn evaluate_dataset(
    datapoints: &[DataPoint],
    resolver: &dyn Resolver,
    builder: &PromptBuilder,
    options: &EvalOptions,
) -> Result<EvalOutcome> {
    let workers = options.max_in_flight.max(1).min(datapoints.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ItemResult>>> = Mutex::new(vec![None; datapoints.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(dp) = datapoints.get(i) else { break };
                let result = evaluate_item(i, dp, resolver, builder, options.seed);
                slots.lock().expect("result lock")[i] = Some(result);
            });
        }
    });
    let items: Vec<ItemResult> = slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every item evaluated"))
        .collect();

    let failed = items.iter().filter(|i| i.error == Some(ItemError::Transport)).count();
    if ratio(failed, items.len()) > options.max_transport_failure_rate {
        return Err(Error::TooManyTransportFailures { failed, total: items.len() });
    }
    let report = AccuracyReport::from_items(&options.dataset_name, resolver.name(), &items, options.unseen_domain);
    Ok(EvalOutcome { report, items })
}
