use super::metrics::{rouge_l, token_f1};
use crate::builder::{build_graph, BuildError};
use crate::graph::{self, BuildConfig, Hwdag, PersistError};
use crate::ingest::{read_jsonl, Document, IngestError};
use crate::providers::{Provider, ProviderError};
use crate::search::{embed_nodes, run_search_with, SearchConfig, SearchError, StopReason};
use crate::tokenizer::Tokenizer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// One LongBench-style question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalExample {
    pub id: String,
    pub doc_id: String,
    pub query: String,
    pub answers: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("example {id} has no reference answers")]
    NoAnswers { id: String },
    #[error("graph for {doc_id}: {source}")]
    Persist {
        doc_id: String,
        #[source]
        source: PersistError,
    },
    #[error("building {doc_id}: {source}")]
    Build {
        doc_id: String,
        #[source]
        source: Box<BuildError>,
    },
    #[error("embedding nodes of {doc_id}: {source}")]
    Embed {
        doc_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("example {id}: {source}")]
    Search {
        id: String,
        #[source]
        source: SearchError,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Reads a JSONL dataset, one [`EvalExample`] per line.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<EvalExample>, EvalError> {
    let examples: Vec<EvalExample> = read_jsonl(path)?;
    if let Some(e) = examples.iter().find(|e| e.answers.is_empty()) {
        return Err(EvalError::NoAnswers { id: e.id.clone() });
    }
    Ok(examples)
}

/// File name under which a document's graph is stored in a graphs directory.
pub fn graph_file_name(doc_id: &str) -> String {
    let stem: String = doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    format!("{stem}.json")
}

/// Documents plus their graphs, loaded from `graphs_dir` or built on demand.
pub struct GraphStore {
    corpus: HashMap<String, Document>,
    graphs_dir: Option<PathBuf>,
    build: BuildConfig,
    cache: HashMap<String, Arc<Hwdag>>,
}

impl GraphStore {
    pub fn new(corpus: Vec<Document>, build: BuildConfig, graphs_dir: Option<PathBuf>) -> Self {
        Self {
            corpus: corpus.into_iter().map(|d| (d.doc_id.clone(), d)).collect(),
            graphs_dir,
            build,
            cache: HashMap::new(),
        }
    }

    pub fn build_config(&self) -> &BuildConfig {
        &self.build
    }

    pub fn graph_path(&self, doc_id: &str) -> Option<PathBuf> {
        self.graphs_dir
            .as_ref()
            .map(|d| d.join(graph_file_name(doc_id)))
    }

    /// Graph for `doc_id`, or `None` when the document is unknown and no
    /// stored graph exists.
    pub fn get(
        &mut self,
        doc_id: &str,
        provider: &dyn Provider,
        tokenizer: &dyn Tokenizer,
    ) -> Result<Option<Arc<Hwdag>>, EvalError> {
        if let Some(g) = self.cache.get(doc_id) {
            return Ok(Some(g.clone()));
        }
        let path = self.graph_path(doc_id);
        let persist_err = |source| EvalError::Persist {
            doc_id: doc_id.to_string(),
            source,
        };
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            let g = graph::load(p).map_err(persist_err)?;
            if g.meta().config_hash == self.build.hash() || !self.corpus.contains_key(doc_id) {
                let g = Arc::new(g);
                self.cache.insert(doc_id.to_string(), g.clone());
                return Ok(Some(g));
            }
            log::warn!("{}: stored graph was built with a different config; rebuilding", p.display());
        }
        let Some(doc) = self.corpus.get(doc_id) else {
            return Ok(None);
        };
        let (g, _) = build_graph(doc, provider, &self.build, tokenizer).map_err(|e| EvalError::Build {
            doc_id: doc_id.to_string(),
            source: Box::new(e),
        })?;
        if let Some(p) = &path {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir).map_err(|e| persist_err(PersistError::Io(e)))?;
            }
            graph::save(&g, p).map_err(persist_err)?;
        }
        let g = Arc::new(g);
        self.cache.insert(doc_id.to_string(), g.clone());
        Ok(Some(g))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub id: String,
    pub doc_id: String,
    pub answer: String,
    pub f1: f64,
    pub rouge_l: f64,
    /// Nodes retrieved after the top-level seed.
    pub nodes_retrieved: usize,
    pub visited: usize,
    pub tokens_processed: u64,
    pub tflops: f64,
    pub stop_reason: StopReason,
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedExample {
    pub id: String,
    pub doc_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregates {
    pub count: usize,
    pub mean_f1: f64,
    pub mean_rouge_l: f64,
    pub mean_nodes_retrieved: f64,
    pub mean_tokens_processed: f64,
    pub mean_tflops: f64,
}

impl Aggregates {
    pub fn from_results(results: &[ExampleResult]) -> Self {
        let n = results.len();
        if n == 0 {
            return Self::default();
        }
        let mean = |f: &dyn Fn(&ExampleResult) -> f64| results.iter().map(f).sum::<f64>() / n as f64;
        Self {
            count: n,
            mean_f1: mean(&|r| r.f1),
            mean_rouge_l: mean(&|r| r.rouge_l),
            mean_nodes_retrieved: mean(&|r| r.nodes_retrieved as f64),
            mean_tokens_processed: mean(&|r| r.tokens_processed as f64),
            mean_tflops: mean(&|r| r.tflops),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub nodes_retrieved: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub provider: String,
    pub flops_formula: String,
    pub model_params: f64,
    pub rouge_l_variant: String,
    pub build_config_hash: String,
    pub search_config: SearchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub aggregates: Aggregates,
    pub histogram: Vec<HistogramBin>,
    pub examples: Vec<ExampleResult>,
    pub skipped: Vec<SkippedExample>,
}

fn histogram(results: &[ExampleResult]) -> Vec<HistogramBin> {
    let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
    for r in results {
        *bins.entry(r.nodes_retrieved).or_default() += 1;
    }
    bins.into_iter()
        .map(|(nodes_retrieved, count)| HistogramBin { nodes_retrieved, count })
        .collect()
}

struct Prepared {
    graph: Arc<Hwdag>,
    vectors: Option<Vec<Vec<f64>>>,
}

/// Evaluates every example whose graph can be found or built. Examples run
/// on a pool of `workers` threads; results keep dataset order.
pub fn run_benchmark(
    examples: &[EvalExample],
    store: &mut GraphStore,
    provider: &dyn Provider,
    tokenizer: &dyn Tokenizer,
    cfg: &SearchConfig,
    workers: usize,
) -> Result<EvalReport, EvalError> {
    cfg.check().map_err(|source| EvalError::Search {
        id: "config".into(),
        source,
    })?;
    let mut prepared: HashMap<String, Option<Prepared>> = HashMap::new();
    for ex in examples {
        if prepared.contains_key(&ex.doc_id) {
            continue;
        }
        let entry = match store.get(&ex.doc_id, provider, tokenizer)? {
            Some(graph) => {
                let vectors = if cfg.embedding_similarity {
                    Some(embed_nodes(&graph, provider).map_err(|source| EvalError::Embed {
                        doc_id: ex.doc_id.clone(),
                        source,
                    })?)
                } else {
                    None
                };
                Some(Prepared { graph, vectors })
            }
            None => None,
        };
        prepared.insert(ex.doc_id.clone(), entry);
    }

    let mut skipped = Vec::new();
    let mut runnable = Vec::new();
    for ex in examples {
        match &prepared[&ex.doc_id] {
            Some(p) => runnable.push((ex, p)),
            None => {
                log::warn!("example {}: document {} not found; skipped", ex.id, ex.doc_id);
                skipped.push(SkippedExample {
                    id: ex.id.clone(),
                    doc_id: ex.doc_id.clone(),
                    reason: "document not found".into(),
                });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let results: Result<Vec<ExampleResult>, EvalError> = pool.install(|| {
        runnable
            .par_iter()
            .map(|(ex, p)| {
                let res = run_search_with(&p.graph, &ex.query, provider, cfg, p.vectors.as_deref()).map_err(
                    |source| EvalError::Search {
                        id: ex.id.clone(),
                        source,
                    },
                )?;
                Ok(ExampleResult {
                    id: ex.id.clone(),
                    doc_id: ex.doc_id.clone(),
                    f1: token_f1(&res.answer, &ex.answers),
                    rouge_l: rouge_l(&res.answer, &ex.answers),
                    nodes_retrieved: res.retrievals,
                    visited: res.visited.len(),
                    tokens_processed: res.tokens_processed,
                    tflops: res.flops_estimate,
                    stop_reason: res.stop_reason,
                    exhausted: res.exhausted,
                    answer: res.answer,
                })
            })
            .collect()
    });
    let results = results?;

    Ok(EvalReport {
        meta: ReportMeta {
            provider: provider.identity(),
            flops_formula: "TFLOPs = 2 * model_params * new_tokens / 1e12 (attention term ignored)".into(),
            model_params: cfg.model_params,
            rouge_l_variant: "LCS F1 on lowercased, punctuation-stripped tokens; no stemming".into(),
            build_config_hash: store.build_config().hash(),
            search_config: cfg.clone(),
        },
        aggregates: Aggregates::from_results(&results),
        histogram: histogram(&results),
        examples: results,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepParam {
    StopPatience(Vec<usize>),
    Threshold(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    #[serde(flatten)]
    pub aggregates: Aggregates,
}

/// Runs the benchmark once per parameter value.
pub fn run_sweep(
    examples: &[EvalExample],
    store: &mut GraphStore,
    provider: &dyn Provider,
    tokenizer: &dyn Tokenizer,
    base: &SearchConfig,
    param: &SweepParam,
    workers: usize,
) -> Result<Vec<SweepRow>, EvalError> {
    let configs: Vec<(String, f64, SearchConfig)> = match param {
        SweepParam::StopPatience(values) => values
            .iter()
            .map(|&t_n| ("t_n".to_string(), t_n as f64, SearchConfig { t_n, ..base.clone() }))
            .collect(),
        SweepParam::Threshold(values) => values
            .iter()
            .map(|&t_p| ("t_p".to_string(), t_p, SearchConfig { t_p, ..base.clone() }))
            .collect(),
    };
    configs
        .into_iter()
        .map(|(param, value, cfg)| {
            let report = run_benchmark(examples, store, provider, tokenizer, &cfg, workers)?;
            Ok(SweepRow {
                param,
                value,
                aggregates: report.aggregates,
            })
        })
        .collect()
}

pub fn histogram_csv(report: &EvalReport) -> String {
    let mut out = String::from("nodes_retrieved,count\n");
    for b in &report.histogram {
        out.push_str(&format!("{},{}\n", b.nodes_retrieved, b.count));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("param,value,count,mean_f1,mean_rouge_l,mean_nodes_retrieved,mean_tokens_processed,mean_tflops\n");
    for r in rows {
        let a = &r.aggregates;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.param,
            r.value,
            a.count,
            a.mean_f1,
            a.mean_rouge_l,
            a.mean_nodes_retrieved,
            a.mean_tokens_processed,
            a.mean_tflops
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::MockProvider;
    use crate::tokenizer::SimpleTokenizer;

    fn corpus() -> Vec<Document> {
        vec![
            Document::new("d1", "Tabitha sends the kittens to the garden. Tom loses his buttons."),
            Document::new("d2", "Moppet and Mittens play in the dust. Mrs. Puddle-duck finds the clothes."),
        ]
    }

    fn examples() -> Vec<EvalExample> {
        let ex = |id: &str, doc: &str, q: &str, a: &str| EvalExample {
            id: id.into(),
            doc_id: doc.into(),
            query: q.into(),
            answers: vec![a.into()],
        };
        vec![
            ex("q1", "d1", "Where does Tabitha send the kittens?", "to the garden"),
            ex("q2", "d2", "Who finds the clothes?", "Mrs. Puddle-duck"),
            ex("q3", "missing", "Anything?", "no"),
        ]
    }

    #[test]
    fn benchmark_skips_missing_docs_and_averages() {
        let mut store = GraphStore::new(corpus(), BuildConfig::default(), None);
        let p = MockProvider::seeded(1);
        let report =
            run_benchmark(&examples(), &mut store, &p, &SimpleTokenizer, &SearchConfig::default(), 2).unwrap();
        assert_eq!(report.examples.len(), 2);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].id, "q3");
        let mean_f1 = (report.examples[0].f1 + report.examples[1].f1) / 2.0;
        assert!((report.aggregates.mean_f1 - mean_f1).abs() < 1e-15);
        let hist_total: usize = report.histogram.iter().map(|b| b.count).sum();
        assert_eq!(hist_total, 2);
        assert_eq!(histogram_csv(&report).lines().count(), report.histogram.len() + 1);
    }

    #[test]
    fn graphs_are_persisted_and_reused() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = GraphStore::new(corpus(), BuildConfig::default(), Some(dir.path().to_path_buf()));
        let p = MockProvider::seeded(1);
        store.get("d1", &p, &SimpleTokenizer).unwrap().unwrap();
        let path = store.graph_path("d1").unwrap();
        assert!(path.exists());
        let mut fresh = GraphStore::new(vec![], BuildConfig::default(), Some(dir.path().to_path_buf()));
        assert!(fresh.get("d1", &p, &SimpleTokenizer).unwrap().is_some());
        assert!(fresh.get("d2", &p, &SimpleTokenizer).unwrap().is_none());
    }

    #[test]
    fn sweep_rows_follow_values() {
        let mut store = GraphStore::new(corpus(), BuildConfig::default(), None);
        let p = MockProvider::seeded(1);
        let rows = run_sweep(
            &examples(),
            &mut store,
            &p,
            &SimpleTokenizer,
            &SearchConfig::default(),
            &SweepParam::StopPatience(vec![1, 2]),
            1,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].value, 2.0);
        assert!(rows[1].aggregates.mean_nodes_retrieved >= rows[0].aggregates.mean_nodes_retrieved);
        assert_eq!(sweep_csv(&rows).lines().count(), 3);
    }

    #[test]
    fn rejects_examples_without_answers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, r#"{"id":"x","doc_id":"d","query":"q","answers":[]}"#).unwrap();
        assert!(matches!(load_dataset(&path), Err(EvalError::NoAnswers { .. })));
    }
}
