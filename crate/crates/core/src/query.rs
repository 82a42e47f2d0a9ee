//! Online queries: terms already in the offline table return their stored
//! capacity; unseen terms are counted against the frozen anchor terms, get
//! their own thresholded association set, and a single new embedding is
//! optimized with the offline loss machinery while every anchor stays put.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    match_terms, normalize, CooccurrenceCounts, CorpusDocument, DocumentSource, TermId, Vocabulary,
};
use crate::error::{Error, Result};
use crate::manifold::LorentzPoint;
use crate::stats::Association;
use crate::training::{
    apply_updates, batch_loss_and_grads, sample_negatives, EmbeddingTable, Points, INIT_RANGE,
};

const CACHE_MAGIC: &[u8; 8] = b"SCSTC001";

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct QueryConfig {
    pub window: usize,
    pub delta: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives_per_pair: usize,
    pub seed: u64,
    pub include_positive_in_denominator: bool,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig {
            window: 20,
            delta: 0.1,
            epochs: 200,
            learning_rate: 0.5,
            negatives_per_pair: 50,
            seed: 0,
            include_positive_in_denominator: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QueryRequest {
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryStatus {
    AlreadyKnown,
    NewlyEmbedded,
    InsufficientSignal,
}

impl QueryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryStatus::AlreadyKnown => "AlreadyKnown",
            QueryStatus::NewlyEmbedded => "NewlyEmbedded",
            QueryStatus::InsufficientSignal => "InsufficientSignal",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TermQueryOutcome {
    pub term: String,
    pub status: QueryStatus,
    pub capacity: Option<f64>,
    /// Size of the thresholded association set built for this term; zero for
    /// terms answered straight from the table.
    pub association_count: usize,
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub outcomes: Vec<TermQueryOutcome>,
    /// How many full corpus passes the request needed; cache hits keep this
    /// at zero.
    pub corpus_scans: usize,
}

/// TSV rows `term \t status \t capacity \t association_count`.
pub fn write_query_tsv(out: &mut impl Write, result: &QueryResult) -> std::io::Result<()> {
    for o in &result.outcomes {
        let capacity = match o.capacity {
            Some(c) => c.to_string(),
            None => "-".to_owned(),
        };
        writeln!(
            out,
            "{}\t{}\t{capacity}\t{}",
            o.term,
            o.status.as_str(),
            o.association_count
        )?;
    }
    Ok(())
}

/// One candidate's co-occurrence row against the anchor terms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnchorRow {
    /// Occurrences of the candidate n-gram itself.
    pub occurrences: u64,
    /// Sparse `(anchor, count)` entries, ascending by id.
    pub counts: Vec<(TermId, u64)>,
}

/// Candidate occurrences are every raw position where the token n-gram
/// appears; anchors keep their offline greedy segmentation. A pair counts
/// once per occurrence pair with start distance <= window, per document.
fn accumulate_row(
    tokens: &[String],
    anchors: &[(usize, TermId)],
    candidate: &[String],
    window: usize,
    row: &mut HashMap<TermId, u64>,
) -> u64 {
    let n = candidate.len();
    if n == 0 || tokens.len() < n {
        return 0;
    }
    let mut occurrences = 0;
    for s in 0..=tokens.len() - n {
        if tokens[s..s + n] != candidate[..] {
            continue;
        }
        occurrences += 1;
        for &(q, id) in anchors {
            if s.abs_diff(q) <= window {
                *row.entry(id).or_insert(0) += 1;
            }
        }
    }
    occurrences
}

fn finish_row(occurrences: u64, row: HashMap<TermId, u64>) -> AnchorRow {
    let mut counts: Vec<(TermId, u64)> = row.into_iter().collect();
    counts.sort_unstable_by_key(|&(id, _)| id);
    AnchorRow {
        occurrences,
        counts,
    }
}

/// Scans the corpus once for a single candidate term.
pub fn scan_anchor_row(
    corpus: &DocumentSource,
    vocab: &Vocabulary,
    candidate: &[String],
    window: usize,
) -> Result<AnchorRow> {
    let mut row = HashMap::new();
    let mut occurrences = 0;
    corpus.for_each_document(|doc: CorpusDocument| {
        let anchors = match_terms(doc.tokens(), vocab);
        occurrences += accumulate_row(doc.tokens(), &anchors, candidate, window, &mut row);
        Ok(())
    })?;
    Ok(finish_row(occurrences, row))
}

/// Precomputed anchor rows for every candidate n-gram in the corpus, so
/// queries can skip the corpus entirely.
#[derive(Debug, Clone)]
pub struct StatsCache {
    vocab_fingerprint: u64,
    n_terms: usize,
    window: usize,
    max_tokens: usize,
    min_count: u64,
    rows: HashMap<String, AnchorRow>,
}

impl StatsCache {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn lookup(&self, normalized_term: &str) -> Option<&AnchorRow> {
        self.rows.get(normalized_term)
    }

    pub fn matches_vocab(&self, vocab: &Vocabulary) -> bool {
        self.vocab_fingerprint == vocab.fingerprint() && self.n_terms == vocab.len()
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        out.write_all(CACHE_MAGIC).map_err(io)?;
        out.write_all(&self.vocab_fingerprint.to_le_bytes())
            .map_err(io)?;
        out.write_all(&(self.n_terms as u32).to_le_bytes())
            .map_err(io)?;
        out.write_all(&(self.window as u32).to_le_bytes())
            .map_err(io)?;
        out.write_all(&(self.max_tokens as u32).to_le_bytes())
            .map_err(io)?;
        out.write_all(&self.min_count.to_le_bytes()).map_err(io)?;
        out.write_all(&(self.rows.len() as u64).to_le_bytes())
            .map_err(io)?;
        let mut keys: Vec<&String> = self.rows.keys().collect();
        keys.sort_unstable();
        for key in keys {
            let row = &self.rows[key];
            out.write_all(&(key.len() as u32).to_le_bytes())
                .map_err(io)?;
            out.write_all(key.as_bytes()).map_err(io)?;
            out.write_all(&row.occurrences.to_le_bytes()).map_err(io)?;
            out.write_all(&(row.counts.len() as u32).to_le_bytes())
                .map_err(io)?;
            for &(id, n) in &row.counts {
                out.write_all(&id.0.to_le_bytes()).map_err(io)?;
                out.write_all(&n.to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read_file(path: &Path, vocab: &Vocabulary) -> Result<StatsCache> {
        let mut reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic).map_err(io)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::format(Some(path.to_owned()), "bad cache magic"));
        }
        let mut u64buf = [0u8; 8];
        let mut u32buf = [0u8; 4];
        reader.read_exact(&mut u64buf).map_err(io)?;
        let vocab_fingerprint = u64::from_le_bytes(u64buf);
        if vocab_fingerprint != vocab.fingerprint() {
            return Err(Error::format(
                Some(path.to_owned()),
                "cache was built from a different vocabulary",
            ));
        }
        reader.read_exact(&mut u32buf).map_err(io)?;
        let n_terms = u32::from_le_bytes(u32buf) as usize;
        reader.read_exact(&mut u32buf).map_err(io)?;
        let window = u32::from_le_bytes(u32buf) as usize;
        reader.read_exact(&mut u32buf).map_err(io)?;
        let max_tokens = u32::from_le_bytes(u32buf) as usize;
        reader.read_exact(&mut u64buf).map_err(io)?;
        let min_count = u64::from_le_bytes(u64buf);
        reader.read_exact(&mut u64buf).map_err(io)?;
        let n_rows = u64::from_le_bytes(u64buf);
        let mut rows = HashMap::with_capacity(n_rows as usize);
        for _ in 0..n_rows {
            reader.read_exact(&mut u32buf).map_err(io)?;
            let mut key = vec![0u8; u32::from_le_bytes(u32buf) as usize];
            reader.read_exact(&mut key).map_err(io)?;
            let key = String::from_utf8(key)
                .map_err(|_| Error::format(Some(path.to_owned()), "corrupt cache key"))?;
            reader.read_exact(&mut u64buf).map_err(io)?;
            let occurrences = u64::from_le_bytes(u64buf);
            reader.read_exact(&mut u32buf).map_err(io)?;
            let n_entries = u32::from_le_bytes(u32buf);
            let mut counts = Vec::with_capacity(n_entries as usize);
            for _ in 0..n_entries {
                reader.read_exact(&mut u32buf).map_err(io)?;
                let id = TermId(u32::from_le_bytes(u32buf));
                reader.read_exact(&mut u64buf).map_err(io)?;
                counts.push((id, u64::from_le_bytes(u64buf)));
            }
            rows.insert(
                key,
                AnchorRow {
                    occurrences,
                    counts,
                },
            );
        }
        Ok(StatsCache {
            vocab_fingerprint,
            n_terms,
            window,
            max_tokens,
            min_count,
            rows,
        })
    }
}

/// One corpus pass that persists the anchor row of every candidate n-gram of
/// up to `max_tokens` tokens seen at least `min_count` times. Vocabulary
/// terms themselves are skipped; they are answered from the table.
pub fn build_stats_cache(
    corpus: &DocumentSource,
    vocab: &Vocabulary,
    window: usize,
    max_tokens: usize,
    min_count: u64,
) -> Result<StatsCache> {
    if window == 0 || max_tokens == 0 {
        return Err(Error::InvalidConfig(
            "window and max-tokens must be >= 1".into(),
        ));
    }
    let mut occurrences: HashMap<String, u64> = HashMap::new();
    let mut rows: HashMap<String, HashMap<TermId, u64>> = HashMap::new();
    corpus.for_each_document(|doc| {
        let tokens = doc.tokens();
        let anchors = match_terms(tokens, vocab);
        for n in 1..=max_tokens {
            if tokens.len() < n {
                break;
            }
            for s in 0..=tokens.len() - n {
                let candidate = tokens[s..s + n].join(" ");
                if vocab.id_of_normalized(&candidate).is_some() {
                    continue;
                }
                *occurrences.entry(candidate.clone()).or_insert(0) += 1;
                let row = rows.entry(candidate).or_default();
                for &(q, id) in &anchors {
                    if s.abs_diff(q) <= window {
                        *row.entry(id).or_insert(0) += 1;
                    }
                }
            }
        }
        Ok(())
    })?;

    let rows: HashMap<String, AnchorRow> = occurrences
        .into_iter()
        .filter(|&(_, occ)| occ >= min_count)
        .map(|(key, occ)| {
            let row = rows.remove(&key).unwrap_or_default();
            (key, finish_row(occ, row))
        })
        .collect();
    Ok(StatsCache {
        vocab_fingerprint: vocab.fingerprint(),
        n_terms: vocab.len(),
        window,
        max_tokens,
        min_count,
        rows,
    })
}

/// Serves capacity queries against a frozen offline table and its counts.
pub struct QueryEngine<'a> {
    table: &'a EmbeddingTable,
    counts: &'a CooccurrenceCounts,
    cache: Option<&'a StatsCache>,
    config: QueryConfig,
}

impl<'a> QueryEngine<'a> {
    pub fn new(
        table: &'a EmbeddingTable,
        counts: &'a CooccurrenceCounts,
        config: QueryConfig,
    ) -> Result<Self> {
        if counts.n_terms() != table.len() {
            return Err(Error::InvalidInput(
                "counts and embedding table cover different vocabularies".into(),
            ));
        }
        if counts.total() == 0 {
            return Err(Error::EmptyStatistics);
        }
        Ok(QueryEngine {
            table,
            counts,
            cache: None,
            config,
        })
    }

    pub fn with_cache(mut self, cache: &'a StatsCache) -> Result<Self> {
        if !cache.matches_vocab(self.table.vocab()) {
            return Err(Error::InvalidInput(
                "cache was built from a different vocabulary".into(),
            ));
        }
        if cache.window() != self.config.window {
            return Err(Error::InvalidInput(format!(
                "cache window {} differs from query window {}",
                cache.window(),
                self.config.window
            )));
        }
        self.cache = Some(cache);
        Ok(self)
    }

    /// Answers every requested term; the corpus is only touched on cache
    /// misses for unseen terms.
    pub fn query(&self, request: &QueryRequest, corpus: &DocumentSource) -> Result<QueryResult> {
        if request.terms.is_empty() {
            return Err(Error::InvalidInput("no terms requested".into()));
        }
        // Validate the whole request before doing any work.
        let mut normalized = Vec::with_capacity(request.terms.len());
        for term in &request.terms {
            let tokens = normalize(term);
            if tokens.is_empty() {
                return Err(Error::EmptyTerm(term.clone()));
            }
            normalized.push(tokens);
        }

        let mut outcomes = Vec::with_capacity(request.terms.len());
        let mut corpus_scans = 0;
        for (term, tokens) in request.terms.iter().zip(&normalized) {
            let joined = tokens.join(" ");
            if let Some(id) = self.table.vocab().id_of_normalized(&joined) {
                outcomes.push(TermQueryOutcome {
                    term: term.clone(),
                    status: QueryStatus::AlreadyKnown,
                    capacity: Some(self.table.capacity(id)),
                    association_count: 0,
                });
                continue;
            }

            let cached = self
                .cache
                .filter(|c| tokens.len() <= c.max_tokens())
                .and_then(|c| c.lookup(&joined).cloned());
            let row = match cached {
                Some(row) => row,
                None => {
                    corpus_scans += 1;
                    scan_anchor_row(corpus, self.table.vocab(), tokens, self.config.window)?
                }
            };

            let associations = self.threshold_row(&row);
            if associations.is_empty() {
                outcomes.push(TermQueryOutcome {
                    term: term.clone(),
                    status: QueryStatus::InsufficientSignal,
                    capacity: None,
                    association_count: 0,
                });
                continue;
            }
            let capacity = self.embed_new_term(&joined, &associations)?;
            outcomes.push(TermQueryOutcome {
                term: term.clone(),
                status: QueryStatus::NewlyEmbedded,
                capacity: Some(capacity),
                association_count: associations.len(),
            });
        }
        Ok(QueryResult {
            outcomes,
            corpus_scans,
        })
    }

    /// NPMI of the new term against each anchor, over the offline Z extended
    /// by the new term's marginal: `Z_q = Z + 2 sum_y freq(a, y)`. Anchor
    /// probabilities keep their offline numerators.
    fn threshold_row(&self, row: &AnchorRow) -> Vec<(TermId, f64)> {
        let marginal: u64 = row.counts.iter().map(|&(_, n)| n).sum();
        if marginal == 0 {
            return Vec::new();
        }
        let z_query = (self.counts.total() + 2 * marginal) as f64;
        let p_a = marginal as f64 / z_query;
        let mut kept = Vec::new();
        for &(anchor, freq) in &row.counts {
            let p_ay = 2.0 * freq as f64 / z_query;
            let p_y = self.counts.marginal(anchor) as f64 / z_query;
            if p_y == 0.0 {
                continue;
            }
            let value = -(p_ay / (p_a * p_y)).ln() / p_ay.ln();
            if value > self.config.delta {
                kept.push((anchor, value));
            }
        }
        kept
    }

    /// Optimizes the single new embedding against the frozen anchors with
    /// the offline loss machinery restricted to one trainable point.
    fn embed_new_term(&self, normalized: &str, associations: &[(TermId, f64)]) -> Result<f64> {
        let new_id = TermId(self.table.len() as u32);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(fnv1a(normalized.as_bytes()));

        let spatial: Vec<f64> = (0..self.table.dim())
            .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        let mut points = self.table.points().clone();
        match &mut points {
            Points::Lorentz(pts) => pts.push(LorentzPoint::from_spatial(&spatial)),
            Points::Euclidean(pts) => pts.push(spatial),
        }

        let mut batch: Vec<Association> = associations
            .iter()
            .map(|&(anchor, weight)| Association {
                x: new_id,
                y: anchor,
                weight,
            })
            .collect();
        let partners: std::collections::HashSet<TermId> =
            associations.iter().map(|&(a, _)| a).collect();

        for _ in 0..self.config.epochs {
            batch.shuffle(&mut rng);
            let negatives: Vec<Vec<TermId>> = batch
                .iter()
                .map(|_| {
                    sample_negatives(
                        new_id,
                        &partners,
                        self.table.len() + 1,
                        self.config.negatives_per_pair,
                        &mut rng,
                    )
                })
                .collect();
            let (_, grads) = batch_loss_and_grads(
                &points,
                self.table.dim(),
                &batch,
                &negatives,
                self.config.include_positive_in_denominator,
            )?;
            apply_updates(&mut points, &grads, self.config.learning_rate, |id| {
                id == new_id
            })?;
        }
        Ok(points.capacity(new_id))
    }
}
