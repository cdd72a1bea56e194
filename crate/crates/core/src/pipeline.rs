//! Batch driver: clean, vectorize, adjust, project, cluster and validate a
//! corpus described by a TOML config, and write the run artifact.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    self, ClusterError, ClusterResult, DmmOptions, GmmOptions, Label, LdaOptions, MouOptions, MultiStartPolicy,
};
use crate::corpus::{self, CleanDocument, CleaningConfig, CorpusError, LossEvent};
use crate::lsa::{self, LsaError, Projection2D};
use crate::semantic::{self, EmbeddingTable, SemanticError};
use crate::validate::{self, TagSet, ValidateError, ValidationReport, UNTAGGED};
use crate::vectorize::{self, DocTermMatrix, VectorizeError, Weighting};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage `{stage}`: {source}")]
    Corpus {
        stage: &'static str,
        #[source]
        source: CorpusError,
    },
    #[error("stage `{stage}`: {source}")]
    Vectorize {
        stage: &'static str,
        #[source]
        source: VectorizeError,
    },
    #[error("stage `{stage}`: {source}")]
    Semantic {
        stage: &'static str,
        #[source]
        source: SemanticError,
    },
    #[error("stage `lsa`: {0}")]
    Lsa(#[from] LsaError),
    #[error("stage `cluster:{method}`: {source}")]
    Cluster {
        method: String,
        #[source]
        source: ClusterError,
    },
    #[error("tags file line {line}: {message}")]
    Tags { line: usize, message: String },
    #[error("tags: {0}")]
    TagSet(#[from] ValidateError),
    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("sweep: {0}")]
    Sweep(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Weighting applied before the semantic adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BaseWeighting {
    #[default]
    Tf,
    Tfidf,
}

fn default_kmeans_restarts() -> usize {
    1000
}
fn default_mixture_restarts() -> usize {
    100
}
fn default_alpha() -> f64 {
    0.02
}

/// One clustering method and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    Kmeans {
        k: usize,
        #[serde(default = "default_kmeans_restarts")]
        restarts: usize,
    },
    Skmeans {
        k: usize,
        #[serde(default = "default_kmeans_restarts")]
        restarts: usize,
    },
    GmmSpherical {
        k: usize,
        #[serde(default = "default_mixture_restarts")]
        restarts: usize,
        #[serde(flatten)]
        options: GmmOptions,
    },
    TrimmedKmeans {
        k: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_kmeans_restarts")]
        restarts: usize,
    },
    Mou {
        k: usize,
        #[serde(default = "default_mixture_restarts")]
        restarts: usize,
        #[serde(flatten)]
        options: MouOptions,
    },
    Dmm {
        k: usize,
        #[serde(default = "default_mixture_restarts")]
        restarts: usize,
        #[serde(flatten)]
        options: DmmOptions,
    },
    Lda {
        k: usize,
        #[serde(default = "LdaDefaults::iterations")]
        iterations: usize,
        #[serde(default = "LdaDefaults::burn_in")]
        burn_in: usize,
        #[serde(default = "LdaDefaults::alpha")]
        alpha: f64,
        #[serde(default = "LdaDefaults::beta")]
        beta: f64,
    },
}

struct LdaDefaults;

impl LdaDefaults {
    fn iterations() -> usize {
        LdaOptions::default().iterations
    }
    fn burn_in() -> usize {
        LdaOptions::default().burn_in
    }
    fn alpha() -> f64 {
        LdaOptions::default().alpha
    }
    fn beta() -> f64 {
        LdaOptions::default().beta
    }
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Kmeans { .. } => "kmeans",
            MethodSpec::Skmeans { .. } => "skmeans",
            MethodSpec::GmmSpherical { .. } => "gmm_spherical",
            MethodSpec::TrimmedKmeans { .. } => "trimmed_kmeans",
            MethodSpec::Mou { .. } => "mou",
            MethodSpec::Dmm { .. } => "dmm",
            MethodSpec::Lda { .. } => "lda",
        }
    }

    pub fn k(&self) -> usize {
        match self {
            MethodSpec::Kmeans { k, .. }
            | MethodSpec::Skmeans { k, .. }
            | MethodSpec::GmmSpherical { k, .. }
            | MethodSpec::TrimmedKmeans { k, .. }
            | MethodSpec::Mou { k, .. }
            | MethodSpec::Dmm { k, .. }
            | MethodSpec::Lda { k, .. } => *k,
        }
    }

    /// Whether the method clusters LSA coordinates (otherwise the semantic
    /// document-by-term matrix).
    pub fn uses_lsa_space(&self) -> bool {
        matches!(
            self,
            MethodSpec::Kmeans { .. }
                | MethodSpec::Skmeans { .. }
                | MethodSpec::GmmSpherical { .. }
                | MethodSpec::TrimmedKmeans { .. }
        )
    }

    fn run(&self, lsa_coords: &Array2<f64>, dtm: &DocTermMatrix, seed: u64) -> Result<ClusterResult, ClusterError> {
        let points = lsa_coords.view();
        let counts = dtm.weights().view();
        match *self {
            MethodSpec::Kmeans { k, restarts } => cluster::kmeans(points, k, &MultiStartPolicy::new(restarts, seed)),
            MethodSpec::Skmeans { k, restarts } => {
                cluster::spherical_kmeans(points, k, &MultiStartPolicy::new(restarts, seed))
            }
            MethodSpec::GmmSpherical { k, restarts, options } => {
                cluster::gmm::gmm_spherical_with(points, k, &MultiStartPolicy::new(restarts, seed), &options)
            }
            MethodSpec::TrimmedKmeans { k, alpha, restarts } => {
                cluster::trimmed_kmeans(points, k, alpha, &MultiStartPolicy::new(restarts, seed))
            }
            MethodSpec::Mou { k, restarts, options } => {
                cluster::mixtures_of_unigrams(counts, k, &MultiStartPolicy::new(restarts, seed), &options)
            }
            MethodSpec::Dmm { k, restarts, options } => {
                cluster::dirichlet_multinomial(counts, k, &MultiStartPolicy::new(restarts, seed), &options)
            }
            MethodSpec::Lda {
                k,
                iterations,
                burn_in,
                alpha,
                beta,
            } => cluster::lda_gibbs(
                counts,
                k,
                &LdaOptions {
                    iterations,
                    burn_in,
                    alpha,
                    beta,
                    seed,
                },
            ),
        }
    }
}

fn default_threshold() -> f64 {
    0.8
}
fn default_rank() -> usize {
    2
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Pipeline settings. Relative paths are resolved against the directory of
/// the config file when it is loaded, so the echoed config is location-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    /// Bundled English list when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopword_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma_path: Option<PathBuf>,
    pub embedding_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags_path: Option<PathBuf>,
    #[serde(default)]
    pub weighting: BaseWeighting,
    #[serde(default = "default_threshold")]
    pub similarity_threshold: f64,
    #[serde(default = "default_rank")]
    pub lsa_rank: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    /// Parses TOML and resolves relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.corpus_path);
        resolve(&mut cfg.embedding_path);
        resolve(&mut cfg.output_dir);
        for p in [&mut cfg.stopword_path, &mut cfg.lemma_path, &mut cfg.tags_path].into_iter().flatten() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(PipelineError::Config(format!(
                "similarity_threshold {} outside (0, 1]",
                self.similarity_threshold
            )));
        }
        if self.lsa_rank < 2 {
            return Err(PipelineError::Config(format!("lsa_rank {} is below 2", self.lsa_rank)));
        }
        for m in &self.methods {
            if m.k() == 0 {
                return Err(PipelineError::Config(format!("{}: k must be at least 1", m.name())));
            }
        }
        Ok(())
    }
}

/// Inputs that do not depend on the threshold, weighting or methods.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub events: Vec<LossEvent>,
    pub docs: Vec<CleanDocument>,
    pub tf: DocTermMatrix,
    pub embeddings: EmbeddingTable,
}

impl PreparedCorpus {
    pub fn load(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let events = corpus::load_corpus(&cfg.corpus_path).map_err(|source| PipelineError::Corpus { stage: "load", source })?;
        let stopwords = match &cfg.stopword_path {
            Some(p) => corpus::load_stopwords(p).map_err(|source| PipelineError::Corpus { stage: "load", source })?,
            None => corpus::english_stopwords(),
        };
        let lemmas = match &cfg.lemma_path {
            Some(p) => corpus::load_lemmas(p).map_err(|source| PipelineError::Corpus { stage: "load", source })?,
            None => HashMap::new(),
        };
        let cleaning = CleaningConfig::new(stopwords, lemmas, corpus::Alphabet::default())
            .map_err(|source| PipelineError::Corpus { stage: "clean", source })?;
        let docs: Vec<CleanDocument> = events.iter().map(|e| corpus::clean(e, &cleaning)).collect();
        let tf = vectorize::build_tf(&docs).map_err(|source| PipelineError::Vectorize { stage: "vectorize", source })?;
        let embeddings = semantic::load_embeddings(&cfg.embedding_path, tf.vocab())
            .map_err(|source| PipelineError::Semantic { stage: "semantic", source })?;
        Ok(Self {
            events,
            docs,
            tf,
            embeddings,
        })
    }

    pub fn doc_ids(&self) -> &[String] {
        self.tf.doc_ids()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub n_docs: usize,
    pub n_terms: usize,
    pub weighting: Weighting,
    /// Off-diagonal word pairs at or above the threshold.
    pub linked_pairs: usize,
    pub nonzero_before: usize,
    pub nonzero_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub description: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    /// Unique key within the run: the method name, suffixed when repeated.
    pub id: String,
    pub spec: MethodSpec,
    pub result: ClusterResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
    /// Why the report is missing when tags were supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

/// Stage order of every run.
pub const STAGES: [&str; 6] = ["clean", "vectorize", "semantic", "lsa", "cluster", "validate"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: PipelineConfig,
    pub stages: Vec<String>,
    pub matrix: MatrixSummary,
    pub singular_values: Vec<f64>,
    pub projection: Projection2D,
    /// Document coordinates in the rank-`lsa_rank` LSA space.
    pub lsa_coords: Vec<Vec<f64>>,
    pub documents: Vec<DocumentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<TagSet>,
    pub results: Vec<MethodOutcome>,
    pub timings: Vec<StageTiming>,
}

impl RunArtifact {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_err(path))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }

    pub fn lsa_matrix(&self) -> Array2<f64> {
        let n = self.lsa_coords.len();
        let d = self.lsa_coords.first().map_or(0, Vec::len);
        Array2::from_shape_fn((n, d), |(i, j)| self.lsa_coords[i][j])
    }

    pub fn outcome(&self, id: &str) -> Option<&MethodOutcome> {
        self.results.iter().find(|o| o.id == id)
    }
}

struct Clock {
    timings: Vec<StageTiming>,
    last: Instant,
}

impl Clock {
    fn new() -> Self {
        Self {
            timings: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: impl Into<String>) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.into(),
            millis: (now - self.last).as_secs_f64() * 1e3,
        });
        self.last = now;
    }
}

/// Loads every input named by `cfg` and runs the pipeline.
pub fn run_pipeline(cfg: &PipelineConfig, tags: Option<&TagSet>) -> Result<RunArtifact, PipelineError> {
    cfg.validate()?;
    let prepared = PreparedCorpus::load(cfg)?;
    run_prepared(cfg, &prepared, tags)
}

/// Runs the stages after cleaning on an already loaded corpus.
pub fn run_prepared(cfg: &PipelineConfig, prepared: &PreparedCorpus, tags: Option<&TagSet>) -> Result<RunArtifact, PipelineError> {
    cfg.validate()?;
    let mut clock = Clock::new();
    let n = prepared.events.len();
    if let Some(t) = tags {
        if t.len() != n {
            return Err(ValidateError::Alignment {
                what: "tags",
                expected: n,
                actual: t.len(),
            }
            .into());
        }
    }
    clock.lap("clean");

    let weighted = match cfg.weighting {
        BaseWeighting::Tf => prepared.tf.clone(),
        BaseWeighting::Tfidf => {
            vectorize::apply_idf(&prepared.tf).map_err(|source| PipelineError::Vectorize { stage: "vectorize", source })?
        }
    };
    clock.lap("vectorize");

    let sim = semantic::build_similarity(&prepared.embeddings, weighted.vocab(), cfg.similarity_threshold)
        .map_err(|source| PipelineError::Semantic { stage: "semantic", source })?;
    let adjusted =
        semantic::semantic_adjust(&weighted, &sim).map_err(|source| PipelineError::Semantic { stage: "semantic", source })?;
    clock.lap("semantic");

    let max_rank = adjusted.n_docs().min(adjusted.n_terms());
    let rank = cfg.lsa_rank.min(max_rank);
    let factors = lsa::truncated_svd(&adjusted, rank)?;
    let lsa_coords = factors.scaled_u();
    let projection = if rank >= 2 {
        lsa::project_2d(&factors, adjusted.doc_ids())?
    } else {
        // a single-document or single-term corpus only has one direction
        let mut coords = Array2::zeros((n, 2));
        coords.slice_mut(s![.., ..rank]).assign(&lsa_coords);
        Projection2D {
            doc_ids: adjusted.doc_ids().to_vec(),
            coords,
        }
    };
    clock.lap("lsa");

    let mut results = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for spec in &cfg.methods {
        let count = seen.entry(spec.name()).or_insert(0);
        *count += 1;
        let id = if *count == 1 {
            spec.name().to_string()
        } else {
            format!("{}#{}", spec.name(), count)
        };
        let result = spec.run(&lsa_coords, &adjusted, cfg.seed).map_err(|source| PipelineError::Cluster {
            method: id.clone(),
            source,
        })?;
        clock.lap(format!("cluster:{id}"));
        let (report, report_error) = match tags {
            Some(t) => match validate::validate(lsa_coords.view(), &result, t) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            },
            None => (None, None),
        };
        if tags.is_some() {
            clock.lap(format!("validate:{id}"));
        }
        results.push(MethodOutcome {
            id,
            spec: spec.clone(),
            result,
            report,
            report_error,
        });
    }

    let count_nonzero = |m: &DocTermMatrix| m.weights().iter().filter(|v| **v != 0.0).count();
    Ok(RunArtifact {
        config: cfg.clone(),
        stages: STAGES.iter().map(|s| s.to_string()).collect(),
        matrix: MatrixSummary {
            n_docs: adjusted.n_docs(),
            n_terms: adjusted.n_terms(),
            weighting: adjusted.weighting(),
            linked_pairs: sim.linked_pairs(),
            nonzero_before: count_nonzero(&weighted),
            nonzero_after: count_nonzero(&adjusted),
        },
        singular_values: factors.singular_values.to_vec(),
        projection,
        lsa_coords: lsa_coords.outer_iter().map(|r| r.to_vec()).collect(),
        documents: prepared
            .events
            .iter()
            .zip(&prepared.docs)
            .map(|(e, d)| DocumentRecord {
                doc_id: e.event_id.clone(),
                description: e.description.clone(),
                tokens: d.tokens.clone(),
            })
            .collect(),
        tags: tags.cloned(),
        results,
        timings: clock.timings,
    })
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub const FILE: &'static str = ".riskclust.lock";

    pub fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(Self::FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(dir.to_path_buf())),
            Err(e) => Err(PipelineError::Io { path, source: e }),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes `run.json`, `projection.csv` and `silhouette.csv` into `dir`.
pub fn write_artifact(artifact: &RunArtifact, dir: &Path) -> Result<(), PipelineError> {
    let _lock = OutputLock::acquire(dir)?;
    let run_path = dir.join("run.json");
    let file = File::create(&run_path).map_err(io_err(&run_path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, artifact)?;
    w.flush().map_err(io_err(&run_path))?;

    let tag_of = |i: usize| -> String {
        artifact
            .tags
            .as_ref()
            .and_then(|t| t.labels()[i].clone())
            .unwrap_or_default()
    };
    let first = artifact.results.first();
    let mut proj = csv::Writer::from_path(dir.join("projection.csv"))?;
    proj.write_record(["doc_id", "v1", "v2", "cluster", "tag"])?;
    for (i, p) in artifact.projection.points().iter().enumerate() {
        let cluster = first.map(|o| o.result.assignment[i].to_string()).unwrap_or_default();
        proj.write_record([p.doc_id.clone(), p.v1.to_string(), p.v2.to_string(), cluster, tag_of(i)])?;
    }
    proj.flush().map_err(io_err(dir))?;

    let mut sil = csv::Writer::from_path(dir.join("silhouette.csv"))?;
    sil.write_record(["method", "cluster", "doc_id", "silhouette"])?;
    for o in &artifact.results {
        if let Some(report) = &o.report {
            let s = validate::Silhouette {
                index: report.silhouette_index,
                per_point: report.per_point_silhouette.clone(),
            };
            for bar in validate::silhouette_plot(&s, &o.result) {
                sil.write_record([
                    o.id.clone(),
                    bar.cluster.to_string(),
                    artifact.projection.doc_ids[bar.doc_index].clone(),
                    bar.value.to_string(),
                ])?;
            }
        }
    }
    sil.flush().map_err(io_err(dir))?;
    Ok(())
}

/// Reads an `event_id,tag` CSV against the corpus document order. Blank tags
/// and `UNTAGGED` leave a document untagged; so does being absent.
pub fn read_tags<R: Read>(reader: R, doc_ids: &[String]) -> Result<TagSet, PipelineError> {
    let index: HashMap<&str, usize> = doc_ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or(PipelineError::Tags {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (id_col, tag_col) = (col("event_id")?, col("tag")?);
    let mut labels: Vec<Option<String>> = vec![None; doc_ids.len()];
    let mut seen = vec![false; doc_ids.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let id = record.get(id_col).unwrap_or("");
        let tag = record.get(tag_col).unwrap_or("");
        let &i = index.get(id).ok_or_else(|| PipelineError::Tags {
            line,
            message: format!("unknown event_id `{id}`"),
        })?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(PipelineError::Tags {
                line,
                message: format!("duplicate event_id `{id}`"),
            });
        }
        labels[i] = (!tag.is_empty() && tag != UNTAGGED).then(|| tag.to_string());
    }
    Ok(TagSet::new(labels)?)
}

pub fn load_tags(path: impl AsRef<Path>, doc_ids: &[String]) -> Result<TagSet, PipelineError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_tags(file, doc_ids)
}

pub fn write_tags<W: Write>(writer: W, doc_ids: &[String], tags: &TagSet) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["event_id", "tag"])?;
    for (id, tag) in doc_ids.iter().zip(tags.labels()) {
        wtr.write_record([id.as_str(), tag.as_deref().unwrap_or(UNTAGGED)])?;
    }
    wtr.flush().map_err(|source| PipelineError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Threshold,
    Alpha,
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "threshold" => Ok(SweepParam::Threshold),
            "alpha" => Ok(SweepParam::Alpha),
            _ => Err(format!("unknown sweep parameter `{s}` (threshold or alpha)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub accuracy: f64,
}

/// Re-runs the pipeline once per value with the seed held fixed. The
/// threshold sweep scores the first method; the alpha sweep changes and
/// scores the first trimmed k-means method, and runs only that method.
pub fn sensitivity_sweep(
    cfg: &PipelineConfig,
    prepared: &PreparedCorpus,
    tags: &TagSet,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::Sweep("no values to sweep".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut run_cfg = cfg.clone();
        match param {
            SweepParam::Threshold => {
                if run_cfg.methods.is_empty() {
                    return Err(PipelineError::Sweep("the config lists no methods".into()));
                }
                run_cfg.similarity_threshold = value;
                run_cfg.methods.truncate(1);
            }
            SweepParam::Alpha => {
                let spec = run_cfg
                    .methods
                    .iter()
                    .find(|m| matches!(m, MethodSpec::TrimmedKmeans { .. }))
                    .cloned()
                    .ok_or_else(|| PipelineError::Sweep("alpha sweep needs a trimmed_kmeans method".into()))?;
                let MethodSpec::TrimmedKmeans { k, restarts, .. } = spec else { unreachable!() };
                run_cfg.methods = vec![MethodSpec::TrimmedKmeans { k, alpha: value, restarts }];
            }
        }
        let artifact = run_prepared(&run_cfg, prepared, Some(tags))?;
        let outcome = &artifact.results[0];
        let report = outcome.report.as_ref().ok_or_else(|| {
            PipelineError::Sweep(format!(
                "no accuracy at {value}: {}",
                outcome.report_error.as_deref().unwrap_or("validation failed")
            ))
        })?;
        rows.push(SweepRow {
            value,
            accuracy: report.accuracy,
        });
    }
    Ok(rows)
}

pub fn write_sweep<W: Write>(writer: W, rows: &[SweepRow]) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["value", "accuracy"])?;
    for r in rows {
        wtr.write_record([r.value.to_string(), format!("{:.6}", r.accuracy)])?;
    }
    wtr.flush().map_err(|source| PipelineError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// Hard labels of the first method, for quick inspection.
pub fn first_assignment(artifact: &RunArtifact) -> Option<&[Label]> {
    artifact.results.first().map(|o| o.result.assignment.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
corpus_path = "corpus.csv"
embedding_path = "emb.txt"

[[methods]]
method = "kmeans"
k = 3

[[methods]]
method = "mou"
k = 2
tol = 1e-6

[[methods]]
method = "lda"
k = 2
iterations = 50
burn_in = 10
"#;

    #[test]
    fn config_defaults_and_resolution() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/data/run")).unwrap();
        assert_eq!(cfg.corpus_path, Path::new("/data/run/corpus.csv"));
        assert_eq!(cfg.output_dir, Path::new("/data/run/out"));
        assert_eq!(cfg.similarity_threshold, 0.8);
        assert_eq!(cfg.lsa_rank, 2);
        assert_eq!(cfg.weighting, BaseWeighting::Tf);
        assert_eq!(cfg.methods[0], MethodSpec::Kmeans { k: 3, restarts: 1000 });
        assert_eq!(
            cfg.methods[1],
            MethodSpec::Mou {
                k: 2,
                restarts: 100,
                options: MouOptions { max_iter: 1000, tol: 1e-6 }
            }
        );
        assert!(matches!(cfg.methods[2], MethodSpec::Lda { alpha, beta, .. } if alpha == 0.1 && beta == 0.05));
    }

    #[test]
    fn config_echo_round_trips() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/data/run")).unwrap();
        let text = cfg.to_toml().unwrap();
        let back = PipelineConfig::from_toml(&text, Path::new("/elsewhere")).unwrap();
        assert_eq!(back, cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn config_rejections() {
        let base = Path::new("/");
        let bad_threshold = format!("similarity_threshold = 0.0\n{MINIMAL}");
        assert!(matches!(PipelineConfig::from_toml(&bad_threshold, base), Err(PipelineError::Config(_))));
        let bad_rank = format!("lsa_rank = 1\n{MINIMAL}");
        assert!(PipelineConfig::from_toml(&bad_rank, base).is_err());
        let unknown = format!("colour = 1\n{MINIMAL}");
        assert!(PipelineConfig::from_toml(&unknown, base).is_err());
        let bad_method = "corpus_path='a'\nembedding_path='b'\n[[methods]]\nmethod='deep_mou'\nk=2\n";
        assert!(PipelineConfig::from_toml(bad_method, base).is_err());
    }

    #[test]
    fn tags_csv() {
        let ids: Vec<String> = ["e1", "e2", "e3"].iter().map(|s| s.to_string()).collect();
        let t = read_tags("event_id,tag\ne2, fraud \ne1,UNTAGGED\n".as_bytes(), &ids).unwrap();
        assert_eq!(t.labels(), [None, Some("fraud".to_string()), None]);
        let mut out = Vec::new();
        write_tags(&mut out, &ids, &t).unwrap();
        assert_eq!(read_tags(out.as_slice(), &ids).unwrap(), t);
        assert!(matches!(
            read_tags("event_id,tag\nzz,a\n".as_bytes(), &ids),
            Err(PipelineError::Tags { line: 2, .. })
        ));
        assert!(matches!(
            read_tags("event_id,tag\ne1,a\ne1,b\n".as_bytes(), &ids),
            Err(PipelineError::Tags { line: 3, .. })
        ));
        assert!(matches!(read_tags("id,tag\n".as_bytes(), &ids), Err(PipelineError::Tags { line: 1, .. })));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(PipelineError::Locked(_))));
        drop(lock);
        OutputLock::acquire(dir.path()).unwrap();
    }
}
