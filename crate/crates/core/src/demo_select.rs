//! Diverse demonstration selection: embed questions, cluster with k-means,
//! and take the question nearest each cluster center.
//!
//! Everything here is deterministic for a fixed seed. Clustering uses
//! k-means++ seeding, Lloyd iterations until assignments stabilize (or
//! `max_iters`), repair of empty clusters, and a handful of restarts keeping
//! the lowest-inertia run. Ties always resolve to the lowest index.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::client::{RetryPolicy, SharedEmbedder};
use crate::corpus::Question;
use crate::error::{Error, Result};
use crate::util::{bounded_map, sha256_hex, write_atomic};

/// N question embeddings, rows aligned with `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::validation(format!(
                "embedding matrix has {} ids but {} rows",
                ids.len(),
                vectors.len()
            )));
        }
        if vectors.is_empty() {
            return Err(Error::validation("embedding matrix must be non-empty"));
        }
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        for (row, vector) in vectors.iter().enumerate() {
            if vector.len() != dim {
                return Err(Error::validation(format!(
                    "row {row} has dimension {} but row 0 has {dim}",
                    vector.len()
                )));
            }
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!(
                    "row {row} contains a non-finite entry"
                )));
            }
        }
        Ok(EmbeddingMatrix { ids, vectors })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }
}

/// Embeds question texts through an [`crate::client::Embedder`] with a
/// memory cache and an optional content-addressed on-disk cache keyed by
/// (embedder id, SHA-256 of text).
pub struct EmbeddingService {
    embedder: SharedEmbedder,
    cache_dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Vec<f64>>>,
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl EmbeddingService {
    pub fn new(embedder: SharedEmbedder, cache_dir: Option<PathBuf>) -> Self {
        EmbeddingService {
            embedder,
            cache_dir,
            memory: Mutex::new(HashMap::new()),
            parallelism: 4,
            retry: RetryPolicy::default(),
        }
    }

    /// A service with only the in-memory cache layer.
    pub fn in_memory(embedder: SharedEmbedder) -> Self {
        EmbeddingService::new(embedder, None)
    }

    fn cache_key(&self, text: &str) -> String {
        format!("{}:{}", self.embedder.id(), sha256_hex(text.as_bytes()))
    }

    fn disk_path(&self, key: &str) -> Option<PathBuf> {
        let dir = self.cache_dir.as_ref()?;
        // The key already starts with the embedder id; sanitize for the fs.
        let file: String = key
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == ':' { c } else { '_' })
            .collect();
        Some(dir.join(file.replace(':', "_") + ".json"))
    }

    fn cache_get(&self, key: &str) -> Option<Vec<f64>> {
        if let Some(hit) = self.memory.lock().expect("cache poisoned").get(key) {
            return Some(hit.clone());
        }
        let path = self.disk_path(key)?;
        let bytes = std::fs::read(&path).ok()?;
        let vector: Vec<f64> = serde_json::from_slice(&bytes).ok()?;
        self.memory
            .lock()
            .expect("cache poisoned")
            .insert(key.to_string(), vector.clone());
        Some(vector)
    }

    fn cache_put(&self, key: &str, vector: &[f64]) {
        self.memory
            .lock()
            .expect("cache poisoned")
            .insert(key.to_string(), vector.to_vec());
        if let Some(path) = self.disk_path(key) {
            let bytes = serde_json::to_vec(vector).expect("vector serializes");
            if let Err(err) = write_atomic(&path, &bytes) {
                log::warn!("embedding cache write failed for {}: {err}", path.display());
            }
        }
    }

    /// Embed the questions' texts, row i for question i. Repeated texts hit
    /// the cache instead of the client.
    pub fn embed_questions(&self, questions: &[Question]) -> Result<EmbeddingMatrix> {
        if questions.is_empty() {
            return Err(Error::validation("no questions to embed"));
        }
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; questions.len()];
        let mut missing: Vec<(usize, String, String)> = Vec::new();
        let mut claimed: HashMap<String, usize> = HashMap::new();
        for (idx, question) in questions.iter().enumerate() {
            let key = self.cache_key(&question.text);
            if let Some(hit) = self.cache_get(&key) {
                rows[idx] = Some(hit);
            } else if claimed.contains_key(&key) {
                // Same text appears twice in this batch: embed once.
            } else {
                claimed.insert(key.clone(), idx);
                missing.push((idx, question.id.clone(), question.text.clone()));
            }
        }

        let fetched = bounded_map(missing, self.parallelism, |(idx, id, text)| {
            let result = self.retry.run(|| self.embedder.embed(&text)).map_err(|err| {
                Error::Embedding {
                    id,
                    message: err.to_string(),
                }
            });
            (idx, text, result)
        });
        for (idx, text, result) in fetched {
            let vector = result?;
            self.cache_put(&self.cache_key(&text), &vector);
            rows[idx] = Some(vector);
        }

        // Fill rows that were waiting on a duplicate text's fetch.
        let mut vectors = Vec::with_capacity(questions.len());
        for (idx, question) in questions.iter().enumerate() {
            let vector = match rows[idx].take() {
                Some(v) => v,
                None => self
                    .cache_get(&self.cache_key(&question.text))
                    .expect("duplicate text was embedded in this batch"),
            };
            vectors.push(vector);
        }
        EmbeddingMatrix::new(questions.iter().map(|q| q.id.clone()).collect(), vectors)
    }
}

/// Distance metric for clustering and selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Euclidean distance on raw embeddings.
    #[default]
    Euclidean,
    /// Cosine distance (1 − cosine similarity); opt-in.
    Cosine,
}

impl Metric {
    fn squared(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Cosine => {
                let d = self.distance(a, b);
                d * d
            }
        }
    }

    fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => self.squared(a, b).sqrt(),
            Metric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    return 1.0;
                }
                (1.0 - dot / (na * nb)).max(0.0)
            }
        }
    }
}

/// Tunables for [`kmeans_with`]; [`kmeans`] uses the defaults.
#[derive(Debug, Clone)]
pub struct KmeansParams {
    pub max_iters: usize,
    /// Independent k-means++ restarts; the lowest-inertia run wins.
    pub restarts: usize,
    pub metric: Metric,
}

impl Default for KmeansParams {
    fn default() -> Self {
        KmeansParams {
            max_iters: 300,
            restarts: 24,
            metric: Metric::Euclidean,
        }
    }
}

/// Clustering output. `assignments[i]` is the cluster of row i; at
/// convergence every point sits with its nearest center.
#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances of each point to its assigned center.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia measured after each assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

/// K-means with default parameters. Deterministic for a fixed seed.
pub fn kmeans(embeddings: &EmbeddingMatrix, k: usize, seed: u64) -> Result<ClusterResult> {
    kmeans_with(embeddings, k, seed, &KmeansParams::default())
}

pub fn kmeans_with(
    embeddings: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    params: &KmeansParams,
) -> Result<ClusterResult> {
    let n = embeddings.len();
    if k == 0 {
        return Err(Error::validation("k must be positive"));
    }
    if k > n {
        return Err(Error::validation(format!(
            "k = {k} exceeds the number of points ({n})"
        )));
    }

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<ClusterResult> = None;
    for _ in 0..params.restarts.max(1) {
        let run_seed = master.gen::<u64>();
        let result = lloyd_run(embeddings, k, run_seed, params)?;
        let better = match &best {
            Some(current) => result.inertia < current.inertia,
            None => true,
        };
        if better {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart ran"))
}

fn lloyd_run(
    embeddings: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    params: &KmeansParams,
) -> Result<ClusterResult> {
    let points = embeddings.rows();
    let n = points.len();
    let dim = embeddings.dim();
    let metric = params.metric;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding: first center uniform, then D²-weighted picks.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| metric.squared(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            WeightedIndex::new(&d2)
                .map(|w| w.sample(&mut rng))
                .unwrap_or_else(|_| rng.gen_range(0..n))
        } else {
            // All remaining distances zero (duplicate points): uniform pick.
            rng.gen_range(0..n)
        };
        let center = points[next].clone();
        for (i, point) in points.iter().enumerate() {
            d2[i] = d2[i].min(metric.squared(point, &center));
        }
        centers.push(center);
    }

    let assign = |centers: &[Vec<f64>]| -> (Vec<usize>, f64) {
        let mut assignments = vec![0usize; n];
        let mut inertia = 0.0;
        for (i, point) in points.iter().enumerate() {
            let mut best_c = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = metric.squared(point, center);
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            assignments[i] = best_c;
            inertia += best_d;
        }
        (assignments, inertia)
    };

    let (mut assignments, mut inertia) = assign(&centers);
    let mut trace = vec![inertia];
    let mut iterations = 0usize;

    for _ in 0..params.max_iters {
        iterations += 1;

        // Update step: move each center to the mean of its members.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, point) in points.iter().enumerate() {
            let c = assignments[i];
            counts[c] += 1;
            for (s, &x) in sums[c].iter_mut().zip(point.iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centers[c] = sums[c].clone();
            }
        }

        // Empty-cluster repair: seed each empty cluster with the point
        // farthest from its current center (ties to the lowest index),
        // never stealing a singleton's only member.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut farthest: Option<(usize, f64)> = None;
            for (i, point) in points.iter().enumerate() {
                if counts[assignments[i]] <= 1 {
                    continue;
                }
                let d = metric.squared(point, &centers[assignments[i]]);
                let better = match farthest {
                    Some((_, best_d)) => d > best_d,
                    None => true,
                };
                if better {
                    farthest = Some((i, d));
                }
            }
            if let Some((i, _)) = farthest {
                counts[assignments[i]] -= 1;
                centers[c] = points[i].clone();
                assignments[i] = c;
                counts[c] = 1;
            }
        }

        let (next_assignments, next_inertia) = assign(&centers);
        debug_assert!(
            next_inertia <= trace.last().copied().unwrap_or(f64::INFINITY) + 1e-9,
            "inertia increased: {} -> {}",
            trace.last().unwrap(),
            next_inertia
        );
        trace.push(next_inertia);
        let converged = next_assignments == assignments;
        assignments = next_assignments;
        inertia = next_inertia;
        if converged {
            break;
        }
    }

    Ok(ClusterResult {
        centers,
        assignments,
        inertia,
        iterations,
        inertia_trace: trace,
    })
}

/// Pick `min(k, N)` diverse questions: cluster, then for each center take the
/// nearest in-dataset question, stepping to the next-nearest unused point when
/// two centers would pick the same question.
pub fn select_demonstrations(
    questions: &[Question],
    embeddings: &EmbeddingMatrix,
    k: usize,
    seed: u64,
) -> Result<Vec<Question>> {
    if k == 0 {
        return Err(Error::validation("k must be positive"));
    }
    if questions.len() != embeddings.len() {
        return Err(Error::validation(format!(
            "{} questions but {} embedding rows",
            questions.len(),
            embeddings.len()
        )));
    }
    for (question, id) in questions.iter().zip(embeddings.ids()) {
        if &question.id != id {
            return Err(Error::validation(format!(
                "embedding rows misaligned: question {} vs row id {id}",
                question.id
            )));
        }
    }
    if k >= questions.len() {
        return Ok(questions.to_vec());
    }

    let result = kmeans(embeddings, k, seed)?;
    select_nearest_to_centers(questions, embeddings, &result, Metric::Euclidean)
}

/// Nearest-to-center selection given an existing clustering.
pub fn select_nearest_to_centers(
    questions: &[Question],
    embeddings: &EmbeddingMatrix,
    clusters: &ClusterResult,
    metric: Metric,
) -> Result<Vec<Question>> {
    let mut used = vec![false; questions.len()];
    let mut picked = Vec::with_capacity(clusters.centers.len());
    for center in &clusters.centers {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in embeddings.rows().iter().enumerate() {
            if used[i] {
                continue;
            }
            let d = metric.squared(row, center);
            let better = match best {
                Some((_, best_d)) => d < best_d,
                None => true,
            };
            if better {
                best = Some((i, d));
            }
        }
        let (idx, _) = best.ok_or_else(|| {
            Error::validation("more centers than available points during selection")
        })?;
        used[idx] = true;
        picked.push(questions[idx].clone());
    }
    Ok(picked)
}
