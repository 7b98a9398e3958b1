use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use refres_core::cluster::{encode_clusters, ClusterConfig};
use refres_core::dataset::{load_dataset, save_dataset};
use refres_core::eval::{
    evaluate_dataset, ConstantResolver, EvalOptions, HttpResolver, OracleResolver, Resolver,
};
use refres_core::layout::{encode_screen, EncoderConfig};
use refres_core::prompt::{PromptBuilder, Strategy};
use refres_core::synth::{bundled_templates, generate_all, parse_templates, SynthConfig, ValueBank};
use refres_core::textualize::Registry;
use refres_core::{DataKind, DataPoint};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "refres", version, about = "Text-only reference resolution: encode screens, build prompts, generate data, evaluate resolvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode the screens of on-screen datapoints.
    Encode(EncodeArgs),
    /// Generate synthetic datapoints from language templates.
    Generate(GenerateArgs),
    /// Build the prompt for every datapoint.
    Prompt(PromptArgs),
    /// Score a resolver on a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Injected,
    Grab,
    Cluster,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Injected => Strategy::Injected,
            StrategyArg::Grab => Strategy::Grab,
            StrategyArg::Cluster => Strategy::Cluster,
        }
    }
}

#[derive(Args)]
struct EncodingOptions {
    /// On-screen encoding strategy.
    #[arg(long, value_enum, default_value = "injected")]
    strategy: StrategyArg,
    /// Same-line margin in screen units (default: half the median object height).
    #[arg(long)]
    margin: Option<f64>,
    /// Clustering radius for the cluster strategy (default: median object height).
    #[arg(long)]
    eps: Option<f64>,
}

impl EncodingOptions {
    fn encoder(&self) -> EncoderConfig {
        let config = EncoderConfig::default();
        match self.margin {
            Some(m) => config.with_margin(m),
            None => config,
        }
    }

    fn cluster(&self) -> ClusterConfig {
        ClusterConfig { eps: self.eps, ..Default::default() }
    }
}

#[derive(Args)]
struct EncodeArgs {
    /// Input dataset (JSONL).
    #[arg(long)]
    input: PathBuf,
    /// Output file (JSONL); standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    encoding: EncodingOptions,
}

#[derive(Args)]
struct GenerateArgs {
    /// Template file; the bundled templates when omitted.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Value bank (TOML); the bundled bank when omitted.
    #[arg(long)]
    value_bank: Option<PathBuf>,
    /// Negative candidates per query.
    #[arg(long, default_value_t = 3)]
    negatives: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep at most this many queries per template.
    #[arg(long)]
    max_samples: Option<usize>,
    /// Output dataset (JSONL); standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run seed for candidate shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra textualization rules (TOML), overriding built-in rules of the same name.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[command(flatten)]
    encoding: EncodingOptions,
}

#[derive(Args)]
#[group(id = "resolver", required = true, multiple = false, args = ["oracle", "endpoint", "constant"])]
struct EvaluateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Answer every item with the ground truth.
    #[arg(long)]
    oracle: bool,
    /// HTTP completion endpoint.
    #[arg(long)]
    endpoint: Option<String>,
    /// Answer every item with this fixed text.
    #[arg(long)]
    constant: Option<String>,
    /// Bearer token for the endpoint.
    #[arg(long, env = "REFRES_API_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Concurrent resolver calls.
    #[arg(long, default_value_t = 8)]
    max_in_flight: usize,
    /// Dataset name recorded in the report (default: input file stem).
    #[arg(long)]
    dataset_name: Option<String>,
    /// Report the overall accuracy under the unseen-domain column.
    #[arg(long)]
    unseen_domain: bool,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Report file (JSON); standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-item results (JSONL).
    #[arg(long)]
    items: Option<PathBuf>,
    #[command(flatten)]
    encoding: EncodingOptions,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_dataset(path: &Path) -> Result<Vec<DataPoint>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    load_dataset(BufReader::new(file)).with_context(|| format!("invalid dataset {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn registry(rules: Option<&Path>) -> Result<Registry> {
    let mut registry = Registry::builtin();
    if let Some(path) = rules {
        registry
            .load_toml(&read_text(path)?, true)
            .with_context(|| format!("invalid rules file {}", path.display()))?;
    }
    Ok(registry)
}

fn write_jsonl<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct ParseLine<'a> {
    id: usize,
    parse_text: &'a str,
}

#[derive(Serialize)]
struct ClusterEntityLine<'a> {
    entity_index: usize,
    surrounding: &'a [String],
    distance_from_top: f64,
    distance_from_left: f64,
}

#[derive(Serialize)]
struct ClusterLine<'a> {
    id: usize,
    encodings: Vec<ClusterEntityLine<'a>>,
}

fn encode(args: EncodeArgs) -> Result<()> {
    let data = read_dataset(&args.input)?;
    let strategy = Strategy::from(args.encoding.strategy);
    let mut out = open_output(args.output.as_deref())?;
    let mut skipped = 0usize;
    for (i, dp) in data.iter().enumerate() {
        let id = i + 1;
        if dp.kind() != DataKind::Onscreen {
            skipped += 1;
            continue;
        }
        let screen = dp.screen().unwrap_or_default();
        match strategy {
            Strategy::Injected | Strategy::Grab => {
                let mut config = args.encoding.encoder();
                config.inject_markers = strategy == Strategy::Injected;
                let parse = encode_screen(screen, dp.entities(), &config)
                    .with_context(|| format!("record {id}"))?;
                write_jsonl(&mut out, &ParseLine { id, parse_text: &parse.text })?;
            }
            Strategy::Cluster => {
                let encodings = encode_clusters(screen, dp.entities(), &args.encoding.cluster())
                    .with_context(|| format!("record {id}"))?;
                let encodings = encodings
                    .iter()
                    .map(|e| ClusterEntityLine {
                        entity_index: e.entity_index,
                        surrounding: &e.surrounding_prompt,
                        distance_from_top: e.distance_from_top,
                        distance_from_left: e.distance_from_left,
                    })
                    .collect();
                write_jsonl(&mut out, &ClusterLine { id, encodings })?;
            }
        }
    }
    out.flush()?;
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} datapoint(s) without a screen");
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let specs = match &args.templates {
        Some(path) => parse_templates(&read_text(path)?)
            .with_context(|| format!("malformed template file {}", path.display()))?,
        None => bundled_templates(),
    };
    let bank = match &args.value_bank {
        Some(path) => ValueBank::from_toml(&read_text(path)?)
            .with_context(|| format!("invalid value bank {}", path.display()))?,
        None => ValueBank::bundled(),
    };
    let config = SynthConfig {
        per_query_negatives: args.negatives,
        seed: args.seed,
        max_samples: args.max_samples,
    };
    let data = generate_all(&specs, &bank, &config)?;
    let expansions: usize = specs.iter().map(|s| s.expansion_count()).sum();
    let mut out = open_output(args.output.as_deref())?;
    save_dataset(&mut out, &data)?;
    out.flush()?;
    eprintln!(
        "{} template(s), {expansions} expanded queries, {} datapoint(s) written",
        specs.len(),
        data.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct PromptLine<'a> {
    id: usize,
    prompt: &'a str,
    /// Original (1-based) entity index at each prompt position 1..=n.
    index_map: &'a [usize],
}

fn builder(encoding: &EncodingOptions, rules: Option<&Path>) -> Result<PromptBuilder> {
    Ok(PromptBuilder {
        registry: registry(rules)?,
        encoder: encoding.encoder(),
        cluster: encoding.cluster(),
        strategy: encoding.strategy.into(),
    })
}

fn prompt(args: PromptArgs) -> Result<()> {
    let data = read_dataset(&args.input)?;
    let builder = builder(&args.encoding, args.rules.as_deref())?;
    let mut out = open_output(args.output.as_deref())?;
    for (i, dp) in data.iter().enumerate() {
        let id = i + 1;
        let seed = refres_core::eval::item_seed(args.seed, dp);
        let p = builder.build(dp, seed).with_context(|| format!("record {id}"))?;
        write_jsonl(&mut out, &PromptLine { id, prompt: &p.text, index_map: p.index_map.order() })?;
    }
    out.flush()?;
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let data = read_dataset(&args.input)?;
    let builder = builder(&args.encoding, args.rules.as_deref())?;
    let resolver: Box<dyn Resolver> = match (&args.endpoint, &args.constant) {
        (Some(url), _) => Box::new(HttpResolver::new(url.clone(), args.token.clone())),
        (None, Some(text)) => Box::new(ConstantResolver { output: text.clone() }),
        (None, None) if args.oracle => Box::new(OracleResolver),
        (None, None) => bail!("choose one of --oracle, --endpoint or --constant"),
    };
    let dataset_name = args.dataset_name.clone().unwrap_or_else(|| {
        args.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    let options = EvalOptions {
        dataset_name,
        seed: args.seed,
        max_in_flight: args.max_in_flight.max(1),
        unseen_domain: args.unseen_domain,
        ..Default::default()
    };
    let outcome = evaluate_dataset(&data, resolver.as_ref(), &builder, &options)?;

    if let Some(path) = &args.items {
        let mut out = open_output(Some(path))?;
        for item in &outcome.items {
            write_jsonl(&mut out, item)?;
        }
        out.flush()?;
    }
    let mut out = open_output(args.report.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &outcome.report)?;
    out.write_all(b"\n")?;
    out.flush()?;
    eprintln!("{}", outcome.report.table().trim_end());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encode(a) => encode(a),
        Command::Generate(a) => generate(a),
        Command::Prompt(a) => prompt(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
