//! The `uknow` command line.
//!
//! Machine-readable results go to stdout as JSON; progress and summaries
//! go to stderr. Exit status: 0 success, 1 usage error, 2 data error,
//! 3 internal error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use uknow_core::construct::{build_graph, BuildConfig, Graph};
use uknow_core::features::{stub_corpus_records, FeatureStore};
use uknow_core::reasoning::{
    evaluate, graph_triples, split_triples, train, FilterIndex, KgData, Norm, PluginConfig,
    TrainConfig,
};
use uknow_core::scoring::{
    build_zk, classification_eval, retrieval_eval, score_tik, NodeEmbeddings, RetrievalMode,
};
use uknow_core::split::{split, Scheme, SplitMode};
use uknow_core::stats::{compute_stats, tau_sweep};
use uknow_core::symbolize::{EdgeOverride, EdgeRegistry, NodeKind, Origin};

use crate::error::{Error, Result};
use crate::ingest::{load_corpus, write_news, write_pairs, NEWS_FILE, PAIRS_FILE};
use crate::manifest::{load_feature_manifest, write_feature_records};
use crate::run_manifest::RunManifest;
use crate::store::{self, write_atomic};

#[derive(Debug, Parser)]
#[command(
    name = "uknow",
    version,
    about = "Build, analyse and learn from multimodal news knowledge graphs"
)]
pub struct Cli {
    /// Also write the run manifest here (commands with an output directory
    /// always write one next to it).
    #[arg(long, global = true, value_name = "FILE")]
    pub run_manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus directory and report its counts.
    Ingest(IngestArgs),
    /// Write a deterministic stub feature manifest for a corpus.
    Featurize(FeaturizeArgs),
    /// Build a knowledge graph from a corpus and its features.
    Build(BuildArgs),
    /// Degree and view statistics of a stored graph.
    Stats(StatsArgs),
    /// Similarity edge counts and densities over a range of thresholds.
    Sweep(SweepArgs),
    /// Partition the edges of a stored graph.
    Split(SplitArgs),
    /// Train a link-prediction model on a split.
    Train(TrainArgs),
    /// Filtered ranking metrics of a trained model.
    Eval(EvalArgs),
    /// Knowledge-augmented similarity of one image / text pair.
    Score(ScoreArgs),
    /// Event-level retrieval recall.
    Retrieve(RetrieveArgs),
    /// Top-K accuracy of a class score matrix.
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory holding news.jsonl and/or pairs.tsv.
    pub corpus: PathBuf,
    /// Write the normalized corpus here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature manifest (JSON lines) to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Feature manifest; stub features are computed when absent.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Dimension of stub features.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    #[arg(long, default_value_t = 0.8)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep at most this many similarity edges per node and code.
    #[arg(long)]
    pub sim_topk: Option<usize>,
    /// JSON list of edge-type overrides `{code, name, view, method}`.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub graph: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub graph: PathBuf,
    /// Inclusive range `start:stop:step`.
    #[arg(long, default_value = "0.5:0.95:0.05")]
    pub taus: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Triple,
    Fact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    TrainValTest,
    PretrainFinetuneTest,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub graph: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.15,0.05")]
    pub ratios: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Triple)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "default")]
    pub name: String,
    #[arg(long, value_enum, default_value_t = SchemeArg::TrainValTest)]
    pub scheme: SchemeArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Transe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    L1,
    L2,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub graph: PathBuf,
    /// Name of a split made with `split`.
    #[arg(long, default_value = "default")]
    pub split: String,
    #[arg(long, value_enum, default_value_t = ModelArg::Transe)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub plugin: Switch,
    /// Neighbours aggregated by the plug-in.
    #[arg(long, default_value_t = 8)]
    pub neighbors: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub negatives: usize,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = NormArg::L1)]
    pub norm: NormArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub model: PathBuf,
    pub graph: PathBuf,
    /// Partition to rank (`train`, `val`, `test` or the pretrain scheme names).
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, value_delimiter = ',', default_value = "mrr,h@1,h@3,h@10",
          value_parser = ["mrr", "h@1", "h@3", "h@10"])]
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Graph,
    Model,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    pub graph: PathBuf,
    #[arg(long)]
    pub image_node: u32,
    #[arg(long)]
    pub text_node: u32,
    #[arg(long, value_enum, default_value_t = SourceArg::Graph)]
    pub source: SourceArg,
    /// Trained model directory, required with `--source model`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RetrieveMode {
    Img2txt,
    Txt2img,
    Img2img,
    Txt2txt,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value_t = RetrieveMode::Img2txt)]
    pub mode: RetrieveMode,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10",
          value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Vec<u64>,
    #[arg(long, value_enum, default_value_t = SourceArg::Graph)]
    pub source: SourceArg,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// JSON matrix, one row of class scores per query.
    #[arg(long)]
    pub scores: PathBuf,
    /// JSON array with the true class of every row.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5",
          value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Vec<u64>,
}

/// Output streams of one invocation.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

impl Io<'_> {
    fn json(&mut self, v: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(self.out, "{text}").map_err(|e| Error::io("<stdout>", e))
    }

    fn note(&mut self, msg: impl std::fmt::Display) {
        // A closed stderr must not turn a successful run into a failure.
        let _ = writeln!(self.err, "{msg}");
    }
}

/// Parses `argv` and runs the command, returning the exit status. Errors
/// are reported as one JSON line on `err`.
pub fn dispatch<I, T>(argv: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(io.out, "{}", e.render());
                    0
                }
                _ => {
                    let msg = e.render().to_string();
                    let text: Vec<&str> = msg
                        .lines()
                        .take_while(|l| !l.trim().is_empty())
                        .map(str::trim)
                        .collect();
                    let text = text.join(" ");
                    diagnostic(
                        io,
                        &Error::Usage(text.trim_start_matches("error: ").to_string()),
                    );
                    1
                }
            };
        }
    };
    match run(cli, io) {
        Ok(()) => 0,
        Err(e) => {
            diagnostic(io, &e);
            e.exit_code()
        }
    }
}

fn diagnostic(io: &mut Io<'_>, e: &Error) {
    let line = json!({ "error": e.kind(), "message": e.to_string(), "status": e.exit_code() });
    let _ = writeln!(io.err, "{line}");
}

pub fn run(cli: Cli, io: &mut Io<'_>) -> Result<()> {
    let extra = cli.run_manifest.clone();
    let (manifest, out_dir) = match cli.command {
        Command::Ingest(a) => ingest(a, io)?,
        Command::Featurize(a) => featurize(a, io)?,
        Command::Build(a) => build(a, io)?,
        Command::Stats(a) => stats(a, io)?,
        Command::Sweep(a) => sweep(a, io)?,
        Command::Split(a) => split_cmd(a, io)?,
        Command::Train(a) => train_cmd(a, io)?,
        Command::Eval(a) => eval(a, io)?,
        Command::Score(a) => score(a, io)?,
        Command::Retrieve(a) => retrieve(a, io)?,
        Command::Classify(a) => classify(a, io)?,
    };
    if let Some(dir) = out_dir {
        manifest.write(&dir)?;
    }
    if let Some(path) = extra {
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_atomic(&path, text.as_bytes())?;
    }
    Ok(())
}

type Outcome = (RunManifest, Option<PathBuf>);

fn ingest(a: IngestArgs, io: &mut Io<'_>) -> Result<Outcome> {
    let (corpus, summary) = load_corpus(&a.corpus)?;
    io.note(format_args!(
        "{} news, {} pairs, {} images, {} texts",
        summary.n_news, summary.n_pairs, summary.n_images, summary.n_texts
    ));
    let m = RunManifest::new("ingest").input(&a.corpus)?;
    if let Some(out) = &a.out {
        if !corpus.news.is_empty() {
            write_atomic(&out.join(NEWS_FILE), write_news(&corpus.news).as_bytes())?;
        }
        if !corpus.pairs.is_empty() {
            write_atomic(&out.join(PAIRS_FILE), write_pairs(&corpus.pairs).as_bytes())?;
        }
    }
    io.json(&summary)?;
    Ok((
        m.param("out", a.out.as_ref().map(|p| p.display().to_string())),
        a.out,
    ))
}

/// Stands in for image content: the file bytes when the path resolves
/// under the corpus directory, the path string otherwise.
fn image_content(corpus_dir: &Path) -> impl Fn(&str) -> Vec<u8> + '_ {
    move |p: &str| fs::read(corpus_dir.join(p)).unwrap_or_else(|_| p.as_bytes().to_vec())
}

fn featurize(a: FeaturizeArgs, io: &mut Io<'_>) -> Result<Outcome> {
    let (corpus, _) = load_corpus(&a.corpus)?;
    let records = stub_corpus_records(&corpus, a.dim as usize, a.seed, &image_content(&a.corpus))?;
    write_atomic(&a.out, write_feature_records(&records).as_bytes())?;
    io.note(format_args!(
        "{} feature records written to {}",
        records.len(),
        a.out.display()
    ));
    io.json(&json!({ "records": records.len(), "dim": a.dim, "out": a.out }))?;
    let m = RunManifest::new("featurize")
        .input(&a.corpus)?
        .param("dim", a.dim)
        .param("out", &a.out)
        .seed("features", a.seed);
    Ok((m, Some(sibling_dir(&a.out))))
}

fn sibling_dir(file: &Path) -> PathBuf {
    file.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideLine {
    code: u32,
    #[serde(flatten)]
    edge: EdgeOverride,
}

fn load_registry(path: &Path) -> Result<EdgeRegistry> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<OverrideLine> =
        serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.line(), e))?;
    Ok(EdgeRegistry::default().with_overrides(lines.into_iter().map(|l| (l.code, l.edge)))?)
}

fn build(a: BuildArgs, io: &mut Io<'_>) -> Result<Outcome> {
    if !(0.0..=1.0).contains(&a.tau) {
        return Err(Error::Usage(format!(
            "--tau must lie in [0, 1], got {}",
            a.tau
        )));
    }
    let (corpus, _) = load_corpus(&a.corpus)?;
    let features = match &a.features {
        Some(path) => load_feature_manifest(path, &corpus)?,
        None => FeatureStore::from_records(stub_corpus_records(
            &corpus,
            a.dim as usize,
            a.seed,
            &image_content(&a.corpus),
        )?)?,
    };
    let registry = match &a.registry {
        Some(path) => load_registry(path)?,
        None => EdgeRegistry::default(),
    };
    let cfg = BuildConfig {
        tau: a.tau,
        seed: a.seed,
        sim_topk: a.sim_topk,
        registry,
    };
    let graph = build_graph(&corpus, &features, &cfg)?;
    store::save_graph(&graph, &a.out)?;
    io.note(format_args!(
        "{} nodes, {} edges written to {}",
        graph.num_nodes(),
        graph.num_triples(),
        a.out.display()
    ));
    io.json(&json!({ "nodes": graph.num_nodes(), "edges": graph.num_triples(), "tau": a.tau, "out": a.out }))?;

    let mut m = RunManifest::new("build").input(&a.corpus)?;
    for p in a.features.iter().chain(&a.registry) {
        m = m.input(p)?;
    }
    let m = m
        .param("tau", a.tau)
        .param("sim_topk", a.sim_topk)
        .param(
            "features",
            if a.features.is_some() {
                "manifest"
            } else {
                "stub"
            },
        )
        .param("dim", a.dim)
        .seed("build", a.seed);
    Ok((m, Some(a.out)))
}

fn stats(a: StatsArgs, io: &mut Io<'_>) -> Result<Outcome> {
    let graph = store::load_graph(&a.graph)?;
    let s = compute_stats(&graph);
    io.note(format_args!(
        "{} nodes, {} edges, mean degree {:.3}",
        s.num_nodes, s.num_edges, s.rho_mean
    ));
    io.json(&s)?;
    Ok((RunManifest::new("stats").input(&a.graph)?, None))
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
pub fn parse_taus(range: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("--taus expects start:stop:step, got {range:?}"));
    let parts: Vec<f64> = range
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0)
        || !(start <= stop)
        || !(0.0..=1.0).contains(&start)
        || !(0.0..=1.0).contains(&stop)
    {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // Round to the step's decimal grid so 0.5 + 9·0.05 prints as 0.95.
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

fn sweep(a: SweepArgs, io: &mut Io<'_>) -> Result<Outcome> {
    let taus = parse_taus(&a.taus)?;
    let graph = store::load_graph(&a.graph)?;
    let points = tau_sweep(&graph, &taus)?;
    for p in &points {
        io.note(format_args!(
            "tau {:.3}: {} similarity edges, mean degree {:.3}",
            p.tau, p.edge_count, p.rho_mean
        ));
    }
    io.json(&points)?;
    Ok((
        RunManifest::new("sweep")
            .input(&a.graph)?
            .param("taus", &a.taus),
        None,
    ))
}

fn split_cmd(a: SplitArgs, io: &mut Io<'_>) -> Result<Outcome> {
    let [r0, r1, r2] = a.ratios[..] else {
        return Err(Error::Usage(format!(
            "--ratios needs three values, got {}",
            a.ratios.len()
        )));
    };
    let graph = store::load_graph(&a.graph)?;
    let mode = match a.mode {
        ModeArg::Triple => SplitMode::Triple,
        ModeArg::Fact => SplitMode::Fact,
    };
    let scheme = match a.scheme {
        SchemeArg::TrainValTest => Scheme::TrainValTest,
        SchemeArg::PretrainFinetuneTest => Scheme::PretrainFinetuneTest,
    };
    let mut s = split(&graph, [r0, r1, r2], mode, a.seed)?;
    s.scheme = scheme;
    let path = store::save_split(&a.graph, &a.name, &graph, &s)?;
    let counts = s.counts();
    let named: BTreeMap<&str, usize> = uknow_core::split::Partition::ALL
        .iter()
        .map(|&p| (scheme.name(p), counts[p.index()]))
        .collect();
    io.note(format_args!(
        "split {:?} written to {}",
        a.name,
        path.display()
    ));
    io.json(&json!({ "name": a.name, "counts": named, "mode": mode, "seed": a.seed }))?;
    let m = RunManifest::new("split")
        .input(&graph_files(&a.graph))?
        .param("ratios", &a.ratios)
        .param("mode", mode)
        .param("scheme", scheme)
        .param("name", &a.name)
        .seed("split", a.seed);
    Ok((
        m,
        Some(
            path.parent()
                .expect("split file has a directory")
                .to_path_buf(),
        ),
    ))
}

/// The graph's metadata file, which pins every data file by checksum.
fn graph_files(dir: &Path) -> PathBuf {
    dir.join("meta.json")
}

fn train_cmd(a: TrainArgs, io: &mut Io<'_>) -> Result<Outcome> {
    let graph = store::load_graph(&a.graph)?;
    let s = store::load_split(&a.graph, &a.split, &graph)?;
    let data = KgData::from_split(&graph, &s, uknow_core::split::Partition::Train)?;
    let ModelArg::Transe = a.model;
    let cfg = TrainConfig {
        dim: a.dim,
        margin: a.margin,
        lr: a.lr,
        epochs: a.epochs,
        negatives: a.negatives,
        batch_size: a.batch_size,
        norm: match a.norm {
            NormArg::L1 => Norm::L1,
            NormArg::L2 => Norm::L2,
        },
        seed: a.seed,
        plugin: (a.plugin == Switch::On).then(|| PluginConfig {
            neighbors: a.neighbors,
            ..PluginConfig::default()
        }),
    };
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    io.note(format_args!(
        "training on {} triples, {} entities",
        data.train.len(),
        data.num_entities
    ));
    let model = train(&data, cfg)?;
    store::save_model(&model, &store::graph_fingerprint(&graph), &a.split, &a.out)?;
    let final_loss = model.loss_curve.last().copied();
    io.note(format_args!(
        "final epoch loss {:?}; model written to {}",
        final_loss,
        a.out.display()
    ));
    io.json(&json!({ "out": a.out, "epochs": a.epochs, "final_loss": final_loss, "train_triples": data.train.len() }))?;
    let m = RunManifest::new("train")
        .input(&graph_files(&a.graph))?
        .input(&store::split_path(&a.graph, &a.split))?
        .param("config", cfg)
        .param("model", "transe")
        .param("split", &a.split)
        .seed("train", a.seed);
    Ok((m, Some(a.out)))
}

fn eval(a: EvalArgs, io: &mut Io<'_>) -> Result<Outcome> {
    let stored = store::load_model(&a.model)?;
    let graph = store::load_graph(&a.graph)?;
    if stored.graph != store::graph_fingerprint(&graph) {
        return Err(Error::corrupt(
            &a.model,
            "model was trained on a different graph",
        ));
    }
    let s = store::load_split(&a.graph, &stored.split, &graph)?;
    let part = s.scheme.parse(&a.split).ok_or_else(|| {
        Error::Usage(format!(
            "split {:?} has no partition {:?}",
            stored.split, a.split
        ))
    })?;
    let test = split_triples(&graph, &s, part)?;
    let all = graph_triples(&graph);
    let filter = FilterIndex::new(all.iter());
    let (metrics, _) = evaluate(&stored.model.scorer(), &test, &filter)?;
    let mut report = serde_json::Map::new();
    for name in &a.metrics {
        let v = match name.as_str() {
            "mrr" => metrics.mrr,
            "h@1" => metrics.hits1,
            "h@3" => metrics.hits3,
            _ => metrics.hits10,
        };
        report.insert(name.clone(), json!(v));
    }
    report.insert("n_queries".into(), json!(metrics.n_queries));
    report.insert("seed".into(), json!(stored.model.config.seed));
    io.note(format_args!(
        "MRR {:.4} over {} queries",
        metrics.mrr, metrics.n_queries
    ));
    io.json(&Value::Object(report))?;
    let m = RunManifest::new("eval")
        .input(&a.model)?
        .input(&graph_files(&a.graph))?
        .param("split", &a.split)
        .param("metrics", &a.metrics);
    Ok((m, None))
}

/// Embedding source for scoring and retrieval.
fn embedding_source(
    graph: &Graph,
    source: SourceArg,
    model: Option<&Path>,
) -> Result<Box<dyn NodeEmbeddings>> {
    match (source, model) {
        (SourceArg::Graph, _) => Ok(Box::new(graph.nodes().clone())),
        (SourceArg::Model, None) => Err(Error::Usage("--source model requires --model DIR".into())),
        (SourceArg::Model, Some(dir)) => {
            let stored = store::load_model(dir)?;
            if stored.graph != store::graph_fingerprint(graph) {
                return Err(Error::corrupt(
                    dir,
                    "model was trained on a different graph",
                ));
            }
            Ok(Box::new(stored.model.scorer()))
        }
    }
}

fn score(a: ScoreArgs, io: &mut Io<'_>) -> Result<Outcome> {
    let graph = store::load_graph(&a.graph)?;
    let source = embedding_source(&graph, a.source, a.model.as_deref())?;
    let zk = build_zk(a.image_node, a.text_node, &graph, source.as_ref())?;
    let vector = |id: u32| {
        source.vector(id).ok_or_else(|| {
            Error::Usage(format!(
                "node {id} has no embedding in the {:?} source",
                a.source
            ))
        })
    };
    let s = score_tik(&vector(a.text_node)?, &vector(a.image_node)?, &zk)?;
    io.json(&json!({ "terms": s.terms, "total": s.total, "image_node": a.image_node, "text_node": a.text_node }))?;
    let mut m = RunManifest::new("score")
        .input(&graph_files(&a.graph))?
        .param("image_node", a.image_node)
        .param("text_node", a.text_node)
        .param("source", format!("{:?}", a.source).to_lowercase());
    if let Some(dir) = &a.model {
        m = m.input(dir)?;
    }
    Ok((m, None))
}

/// News images and titles with embeddings, labelled by their fact's
/// hierarchical event. Facts without a fine event are left out.
fn retrieval_items(
    graph: &Graph,
    source: &dyn NodeEmbeddings,
    kind: NodeKind,
) -> (Vec<Vec<f64>>, Vec<String>) {
    let nodes = graph.nodes();
    let mut vecs = Vec::new();
    let mut labels = Vec::new();
    for n in nodes.nodes() {
        if n.kind != kind {
            continue;
        }
        let Some(fact) = n.parent.and_then(|p| nodes.node(p)) else {
            continue;
        };
        if !matches!(fact.origin, Origin::Fact { .. }) {
            continue;
        }
        let (Some(coarse), Some(fine)) = (
            fact.attributes.get("event_coarse"),
            fact.attributes.get("event_fine"),
        ) else {
            continue;
        };
        if fine.is_empty() {
            continue;
        }
        let Some(v) = source.vector(n.id) else {
            continue;
        };
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        vecs.push(v);
        labels.push(format!("{coarse}→{fine}"));
    }
    (vecs, labels)
}

fn retrieve(a: RetrieveArgs, io: &mut Io<'_>) -> Result<Outcome> {
    let graph = store::load_graph(&a.graph)?;
    let source = embedding_source(&graph, a.source, a.model.as_deref())?;
    let images = retrieval_items(&graph, source.as_ref(), NodeKind::Image);
    let texts = retrieval_items(&graph, source.as_ref(), NodeKind::Title);
    let (q, g, mode) = match a.mode {
        RetrieveMode::Img2txt => (&images, &texts, RetrievalMode::Cross),
        RetrieveMode::Txt2img => (&texts, &images, RetrievalMode::Cross),
        RetrieveMode::Img2img => (&images, &images, RetrievalMode::SameSet),
        RetrieveMode::Txt2txt => (&texts, &texts, RetrievalMode::SameSet),
    };
    let mut report = serde_json::Map::new();
    let mode_name = format!("{:?}", a.mode).to_lowercase();
    report.insert("mode".into(), json!(mode_name));
    report.insert("n_queries".into(), json!(q.0.len()));
    for &k in &a.k {
        let r = retrieval_eval(&q.0, &q.1, &g.0, &g.1, k as usize, mode)?;
        io.note(format_args!(
            "R@{k}: {}",
            r.map_or("undefined (no eligible query)".to_string(), |v| format!(
                "{v:.4}"
            ))
        ));
        report.insert(format!("R@{k}"), json!(r));
    }
    io.json(&Value::Object(report))?;
    let m = RunManifest::new("retrieve")
        .input(&graph_files(&a.graph))?
        .param("mode", mode_name)
        .param("k", &a.k)
        .param("source", format!("{:?}", a.source).to_lowercase());
    Ok((m, None))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.line(), e))
}

fn classify(a: ClassifyArgs, io: &mut Io<'_>) -> Result<Outcome> {
    let scores: Vec<Vec<f64>> = read_json(&a.scores)?;
    let labels: Vec<usize> = read_json(&a.labels)?;
    let mut report = serde_json::Map::new();
    report.insert("n_rows".into(), json!(scores.len()));
    for &k in &a.k {
        let acc = classification_eval(&scores, &labels, k as usize)?;
        io.note(format_args!("ACC@{k}: {acc:.4}"));
        report.insert(format!("ACC@{k}"), json!(acc));
    }
    io.json(&Value::Object(report))?;
    let m = RunManifest::new("classify")
        .input(&a.scores)?
        .input(&a.labels)?
        .param("k", &a.k);
    Ok((m, None))
}
