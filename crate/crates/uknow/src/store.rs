//! On-disk graph, split and model directories.
//!
//! A graph directory holds `meta.json` (format version, τ, seeds, counts
//! and a SHA-256 per data file), `nodes.jsonl`, `edges.jsonl`,
//! `registry.json`, `embeddings.bin` and `splits/<name>.json`. Every file
//! is a pure function of the graph, so two saves produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uknow_core::construct::{Edge, Graph};
use uknow_core::reasoning::{EmbeddingTable, Model, PluginParams, TrainConfig};
use uknow_core::split::Split;
use uknow_core::symbolize::{
    EdgeOverride, EdgeRegistry, EdgeType, EmbeddingMatrix, Node, NodeTable,
};

use crate::error::{Error, Result};

pub const GRAPH_FORMAT: &str = "uknow-graph";
pub const MODEL_FORMAT: &str = "uknow-model";
pub const FORMAT_VERSION: u32 = 1;

const META: &str = "meta.json";
const NODES: &str = "nodes.jsonl";
const EDGES: &str = "edges.jsonl";
const REGISTRY: &str = "registry.json";
const EMBEDDINGS: &str = "embeddings.bin";
const SPLITS: &str = "splits";
const MODEL_META: &str = "model.json";
const TENSORS: &str = "tensors.bin";

const EMB_MAGIC: &[u8; 8] = b"UKEMB\0\0\0";
const TENSOR_MAGIC: &[u8; 8] = b"UKTENS\0\0";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a sibling temporary file and a rename, so readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("store records serialize")
}

fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = String::new();
    for it in items {
        out.push_str(&to_json(&it));
        out.push('\n');
    }
    out.into_bytes()
}

fn from_jsonl<T: DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<Vec<T>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::corrupt(path, e))?;
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(Error::corrupt(path, "truncated final line"));
    }
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::corrupt(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Metadata files always end in a newline; a missing one means the file
/// was cut short even if the JSON still parses.
fn read_meta<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    if !bytes.ends_with(b"\n") {
        return Err(Error::corrupt(path, "truncated metadata"));
    }
    from_json(&bytes, path)
}

fn from_json<T: DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::corrupt(path, e))
}

/// Header (magic, version, row count, dim) followed by row-major
/// little-endian `f32`s.
pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + 4 * m.data.len());
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.dim as u64).to_le_bytes());
    for x in &m.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_embeddings(bytes: &[u8], path: &Path) -> Result<EmbeddingMatrix> {
    let bad = |why: &str| Error::corrupt(path, why);
    if bytes.len() < 28 || &bytes[..8] != EMB_MAGIC {
        return Err(bad("bad embedding header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    if u32_at(8) != FORMAT_VERSION {
        return Err(bad("unsupported embedding version"));
    }
    let (rows, dim) = (u64_at(12) as usize, u64_at(20) as usize);
    let body = &bytes[28..];
    if rows.checked_mul(dim).and_then(|n| n.checked_mul(4)) != Some(body.len()) {
        return Err(bad("embedding payload length disagrees with header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(EmbeddingMatrix { dim, data })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphMeta {
    format: String,
    version: u32,
    tau: f64,
    build_seed: u64,
    node_seed: u64,
    num_nodes: usize,
    num_edges: usize,
    embedding_dim: usize,
    provenance: BTreeMap<String, String>,
    /// SHA-256 of every data file.
    checksums: BTreeMap<String, String>,
}

fn graph_files(graph: &Graph) -> Vec<(&'static str, Vec<u8>)> {
    let nodes = graph.nodes();
    vec![
        (NODES, to_jsonl(nodes.nodes())),
        (EDGES, to_jsonl(graph.edges())),
        (
            REGISTRY,
            (to_json(&graph.registry().entries()) + "\n").into_bytes(),
        ),
        (EMBEDDINGS, encode_embeddings(nodes.embeddings())),
    ]
}

/// SHA-256 of the edge list as stored; splits and models record it to
/// detect use against a different graph.
pub fn graph_fingerprint(graph: &Graph) -> String {
    sha256_hex(&to_jsonl(graph.edges()))
}

pub fn save_graph(graph: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = graph_files(graph);
    let mut checksums = BTreeMap::new();
    for (name, bytes) in &files {
        write_atomic(&dir.join(name), bytes)?;
        checksums.insert(name.to_string(), sha256_hex(bytes));
    }
    let meta = GraphMeta {
        format: GRAPH_FORMAT.into(),
        version: FORMAT_VERSION,
        tau: graph.tau(),
        build_seed: graph.build_seed(),
        node_seed: graph.nodes().seed(),
        num_nodes: graph.num_nodes(),
        num_edges: graph.num_triples(),
        embedding_dim: graph.nodes().embeddings().dim,
        provenance: graph.provenance().clone(),
        checksums,
    };
    // The manifest goes last: a directory without it is not a graph.
    write_atomic(
        &dir.join(META),
        (serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n").as_bytes(),
    )
}

/// Rebuilds a registry from stored entries, re-validating every change
/// against the defaults.
fn registry_from_entries(entries: Vec<EdgeType>, path: &Path) -> Result<EdgeRegistry> {
    let defaults = EdgeRegistry::default();
    if entries.len() != defaults.entries().len() {
        return Err(Error::corrupt(
            path,
            format!("registry has {} entries", entries.len()),
        ));
    }
    let mut overrides = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        if e.code as usize != i {
            return Err(Error::corrupt(
                path,
                format!("registry entry {i} carries code {}", e.code),
            ));
        }
        if e != &defaults.entries()[i] {
            overrides.push((
                i as u32,
                EdgeOverride {
                    name: e.name.clone(),
                    view: e.view,
                    method: e.method,
                },
            ));
        }
    }
    Ok(defaults.with_overrides(overrides)?)
}

fn verify(dir: &Path, name: &str, meta_sums: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::corrupt(&path, "file missing"))
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let want = meta_sums
        .get(name)
        .ok_or_else(|| Error::corrupt(dir.join(META), format!("no checksum for {name}")))?;
    if &sha256_hex(&bytes) != want {
        return Err(Error::corrupt(&path, "checksum mismatch"));
    }
    Ok(bytes)
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META);
    if !meta_path.is_file() {
        return Err(Error::MissingManifest(dir.to_path_buf()));
    }
    let meta: GraphMeta = read_meta(&meta_path)?;
    if meta.format != GRAPH_FORMAT || meta.version != FORMAT_VERSION {
        return Err(Error::corrupt(
            &meta_path,
            format!("unsupported format {} v{}", meta.format, meta.version),
        ));
    }
    let nodes: Vec<Node> = from_jsonl(&verify(dir, NODES, &meta.checksums)?, &dir.join(NODES))?;
    let edges: Vec<Edge> = from_jsonl(&verify(dir, EDGES, &meta.checksums)?, &dir.join(EDGES))?;
    let entries: Vec<EdgeType> = from_json(
        &verify(dir, REGISTRY, &meta.checksums)?,
        &dir.join(REGISTRY),
    )?;
    let registry = registry_from_entries(entries, &dir.join(REGISTRY))?;
    let embeddings = decode_embeddings(
        &verify(dir, EMBEDDINGS, &meta.checksums)?,
        &dir.join(EMBEDDINGS),
    )?;
    if nodes.len() != meta.num_nodes
        || edges.len() != meta.num_edges
        || embeddings.dim != meta.embedding_dim
    {
        return Err(Error::corrupt(
            &meta_path,
            "counts disagree with the data files",
        ));
    }
    let table = NodeTable::from_parts(nodes, meta.node_seed, embeddings)
        .map_err(|e| Error::corrupt(dir.join(NODES), e))?;
    Graph::from_parts(
        table,
        edges,
        registry,
        meta.tau,
        meta.build_seed,
        meta.provenance,
    )
    .map_err(|e| Error::corrupt(dir.join(EDGES), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitFile {
    graph: String,
    split: Split,
}

pub fn split_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(SPLITS).join(format!("{name}.json"))
}

pub fn save_split(
    dir: impl AsRef<Path>,
    name: &str,
    graph: &Graph,
    split: &Split,
) -> Result<PathBuf> {
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
    {
        return Err(Error::Usage(format!(
            "split name {name:?} must be non-empty [A-Za-z0-9._-]"
        )));
    }
    let path = split_path(dir.as_ref(), name);
    let file = SplitFile {
        graph: graph_fingerprint(graph),
        split: split.clone(),
    };
    write_atomic(&path, (to_json(&file) + "\n").as_bytes())?;
    Ok(path)
}

pub fn load_split(dir: impl AsRef<Path>, name: &str, graph: &Graph) -> Result<Split> {
    let path = split_path(dir.as_ref(), name);
    if !path.is_file() {
        return Err(Error::MissingManifest(path));
    }
    let file: SplitFile = from_json(&read_bytes(&path)?, &path)?;
    if file.graph != graph_fingerprint(graph) || file.split.edges.len() != graph.num_triples() {
        return Err(Error::corrupt(
            &path,
            "split was made for a different graph",
        ));
    }
    Ok(file.split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    format: String,
    version: u32,
    config: TrainConfig,
    graph: String,
    split: String,
    num_entities: usize,
    num_relations: usize,
    plugin: Option<PluginShape>,
    neighbor_samples: Vec<Vec<u32>>,
    loss_curve: Vec<f64>,
    checksums: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PluginShape {
    rows: usize,
    kernel: (usize, usize),
    channels: usize,
    hidden: usize,
}

/// A trained model plus the graph and split it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredModel {
    pub model: Model,
    pub graph: String,
    pub split: String,
}

fn encode_tensors(blocks: &[&[f64]]) -> Vec<u8> {
    let n: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = Vec::with_capacity(20 + 8 * n);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for b in blocks {
        for x in *b {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn model_blocks(m: &Model) -> Vec<&[f64]> {
    let mut blocks: Vec<&[f64]> = vec![&m.table.entities, &m.table.relations];
    if let Some(p) = &m.plugin {
        blocks.extend([&p.conv[..], &p.conv_bias, &p.w1, &p.b1, &p.w2, &p.b2]);
    }
    blocks
}

pub fn save_model(model: &Model, graph: &str, split: &str, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let tensors = encode_tensors(&model_blocks(model));
    write_atomic(&dir.join(TENSORS), &tensors)?;
    let meta = ModelMeta {
        format: MODEL_FORMAT.into(),
        version: FORMAT_VERSION,
        config: model.config,
        graph: graph.into(),
        split: split.into(),
        num_entities: model.table.num_entities,
        num_relations: model.table.num_relations,
        plugin: model.plugin.as_ref().map(|p| PluginShape {
            rows: p.rows,
            kernel: p.kernel,
            channels: p.channels,
            hidden: p.hidden,
        }),
        neighbor_samples: model.neighbor_samples.clone(),
        loss_curve: model.loss_curve.clone(),
        checksums: [(TENSORS.to_string(), sha256_hex(&tensors))]
            .into_iter()
            .collect(),
    };
    write_atomic(&dir.join(MODEL_META), (to_json(&meta) + "\n").as_bytes())
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<StoredModel> {
    let dir = dir.as_ref();
    let meta_path = dir.join(MODEL_META);
    if !meta_path.is_file() {
        return Err(Error::MissingManifest(dir.to_path_buf()));
    }
    let meta: ModelMeta = read_meta(&meta_path)?;
    if meta.format != MODEL_FORMAT || meta.version != FORMAT_VERSION {
        return Err(Error::corrupt(&meta_path, "unsupported model format"));
    }
    let path = dir.join(TENSORS);
    let bytes = verify(dir, TENSORS, &meta.checksums)?;
    if bytes.len() < 20 || &bytes[..8] != TENSOR_MAGIC {
        return Err(Error::corrupt(&path, "bad tensor header"));
    }
    let mut values = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = values.by_ref().take(n).collect();
        if v.len() == n {
            Ok(v)
        } else {
            Err(Error::corrupt(&path, "tensor payload too short"))
        }
    };
    let d = meta.config.dim;
    let table = EmbeddingTable {
        dim: d,
        num_entities: meta.num_entities,
        num_relations: meta.num_relations,
        entities: take(meta.num_entities * d)?,
        relations: take(meta.num_relations * d)?,
    };
    let plugin = match meta.plugin {
        None => None,
        Some(s) => {
            let (kh, kw) = s.kernel;
            let flat = s.channels * s.rows * d;
            Some(PluginParams {
                dim: d,
                rows: s.rows,
                kernel: s.kernel,
                channels: s.channels,
                hidden: s.hidden,
                conv: take(s.channels * kh * kw)?,
                conv_bias: take(s.channels)?,
                w1: take(flat * s.hidden)?,
                b1: take(s.hidden)?,
                w2: take(d * s.hidden)?,
                b2: take(d)?,
            })
        }
    };
    if values.next().is_some() {
        return Err(Error::corrupt(&path, "trailing tensor data"));
    }
    let model = Model {
        config: meta.config,
        table,
        plugin,
        neighbor_samples: meta.neighbor_samples,
        loss_curve: meta.loss_curve,
    };
    Ok(StoredModel {
        model,
        graph: meta.graph,
        split: meta.split,
    })
}
