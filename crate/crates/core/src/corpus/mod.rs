//! Corpus streaming, multi-word term recognition, and windowed
//! co-occurrence counting.

mod counts;

pub use counts::{CooccurrenceCounts, CountsBuilder};

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Dense 0-based identifier of a vocabulary term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermId(pub u32);

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Lowercases and splits on every non-alphanumeric character, so hyphens,
/// punctuation, and underscores all act as separators. Idempotent on its own
/// output.
pub fn normalize(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Canonical single-string form of a (possibly multi-word) term.
pub fn normalize_term(raw: &str) -> String {
    normalize(raw).join(" ")
}

/// Bijection between normalized term strings and dense [`TermId`]s.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, TermId>,
    /// Distinct term lengths in tokens, longest first; drives greedy matching.
    match_lengths: Vec<usize>,
    /// First tokens of all terms, to skip hopeless match positions fast.
    first_tokens: HashSet<String>,
}

impl Vocabulary {
    /// Builds from raw term strings, normalizing each. Terms that normalize
    /// to nothing or collide after normalization are rejected.
    pub fn new<I, S>(raw_terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocabulary {
            terms: Vec::new(),
            index: HashMap::new(),
            match_lengths: Vec::new(),
            first_tokens: HashSet::new(),
        };
        for raw in raw_terms {
            vocab.push(raw.as_ref())?;
        }
        Ok(vocab)
    }

    fn push(&mut self, raw: &str) -> Result<TermId> {
        let tokens = normalize(raw);
        if tokens.is_empty() {
            return Err(Error::EmptyTerm(raw.to_owned()));
        }
        let term = tokens.join(" ");
        if self.index.contains_key(&term) {
            return Err(Error::InvalidInput(format!(
                "duplicate term after normalization: {term:?}"
            )));
        }
        let id = TermId(self.terms.len() as u32);
        self.index.insert(term.clone(), id);
        self.first_tokens.insert(tokens[0].clone());
        if !self.match_lengths.contains(&tokens.len()) {
            self.match_lengths.push(tokens.len());
            self.match_lengths.sort_unstable_by(|a, b| b.cmp(a));
        }
        self.terms.push(term);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, id: TermId) -> &str {
        &self.terms[id.index()]
    }

    /// Looks up a raw string, normalizing it first.
    pub fn id(&self, raw: &str) -> Option<TermId> {
        self.index.get(&normalize_term(raw)).copied()
    }

    /// Exact lookup of an already-normalized term.
    pub fn id_of_normalized(&self, term: &str) -> Option<TermId> {
        self.index.get(term).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TermId, &str)> {
        self.terms
            .iter()
            .enumerate()
            .map(|(i, t)| (TermId(i as u32), t.as_str()))
    }

    /// Order-sensitive FNV-1a digest of the term list; used to pair binary
    /// artifacts with the vocabulary they were built from.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for term in &self.terms {
            for &b in term.as_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    /// Reads a vocabulary file: one term per line, optional tab-separated
    /// category level (integer >= 1) in the second column.
    pub fn read_file(path: &Path) -> Result<(Vocabulary, Vec<Option<u32>>)> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vocab = Vocabulary::new(Vec::<String>::new())?;
        let mut levels = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.splitn(2, '\t');
            let term = cols.next().unwrap_or("");
            let level = match cols.next() {
                Some(col) => {
                    let level: u32 = col.trim().parse().map_err(|_| {
                        Error::format(
                            Some(path.to_owned()),
                            format!("line {}: level {col:?} is not an integer", lineno + 1),
                        )
                    })?;
                    if level < 1 {
                        return Err(Error::format(
                            Some(path.to_owned()),
                            format!("line {}: level must be >= 1", lineno + 1),
                        ));
                    }
                    Some(level)
                }
                None => None,
            };
            vocab.push(term)?;
            levels.push(level);
        }
        Ok((vocab, levels))
    }

    pub fn write_file(&self, path: &Path, levels: Option<&[u32]>) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for (id, term) in self.iter() {
            match levels {
                Some(levels) => writeln!(out, "{term}\t{}", levels[id.index()]),
                None => writeln!(out, "{term}"),
            }
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// One corpus document as its normalized token sequence.
#[derive(Debug, Clone)]
pub struct CorpusDocument {
    tokens: Vec<String>,
}

impl CorpusDocument {
    pub fn from_raw(text: &str) -> Self {
        CorpusDocument {
            tokens: normalize(text),
        }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        CorpusDocument { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Deserialize)]
struct MetadataRecord {
    #[serde(default)]
    title: String,
    #[serde(default, rename = "abstract")]
    abstract_text: String,
}

/// Where documents come from: plain text (one document per line), JSON lines
/// with `title`/`abstract` fields, or an in-memory list.
#[derive(Debug, Clone)]
pub enum DocumentSource {
    PlainText(PathBuf),
    JsonLines(PathBuf),
    Memory(Vec<String>),
}

impl DocumentSource {
    /// Picks the format from the extension: `.jsonl`, `.ndjson`, and `.json`
    /// parse as JSON lines, everything else as plain text.
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") | Some("json") => DocumentSource::JsonLines(path),
            _ => DocumentSource::PlainText(path),
        }
    }

    /// Streams documents through `f` without holding the corpus in memory.
    pub fn for_each_document<F>(&self, mut f: F) -> Result<()>
    where
        F: FnMut(CorpusDocument) -> Result<()>,
    {
        match self {
            DocumentSource::Memory(lines) => {
                for line in lines {
                    f(CorpusDocument::from_raw(line))?;
                }
                Ok(())
            }
            DocumentSource::PlainText(path) => {
                let file = File::open(path).map_err(|e| Error::io(path, e))?;
                for line in BufReader::new(file).lines() {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    f(CorpusDocument::from_raw(&line))?;
                }
                Ok(())
            }
            DocumentSource::JsonLines(path) => {
                let file = File::open(path).map_err(|e| Error::io(path, e))?;
                for (lineno, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let record: MetadataRecord = serde_json::from_str(&line).map_err(|e| {
                        Error::format(Some(path.clone()), format!("line {}: {e}", lineno + 1))
                    })?;
                    let text = format!("{} {}", record.title, record.abstract_text);
                    f(CorpusDocument::from_raw(&text))?;
                }
                Ok(())
            }
        }
    }

    pub fn read_all(&self) -> Result<Vec<CorpusDocument>> {
        let mut docs = Vec::new();
        self.for_each_document(|d| {
            docs.push(d);
            Ok(())
        })?;
        Ok(docs)
    }
}

/// Greedy longest-match recognition of vocabulary terms in a token stream.
///
/// Scans left to right; at each position the longest matching term n-gram
/// wins and the scan resumes after it, so matched spans never overlap.
/// Returns `(start_token_index, id)` pairs in document order.
pub fn match_terms(tokens: &[String], vocab: &Vocabulary) -> Vec<(usize, TermId)> {
    let mut matches = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !vocab.first_tokens.contains(&tokens[i]) {
            i += 1;
            continue;
        }
        let mut advanced = false;
        for &len in &vocab.match_lengths {
            if i + len > tokens.len() {
                continue;
            }
            let candidate = tokens[i..i + len].join(" ");
            if let Some(id) = vocab.id_of_normalized(&candidate) {
                matches.push((i, id));
                i += len;
                advanced = true;
                break;
            }
        }
        if !advanced {
            i += 1;
        }
    }
    matches
}

/// Counts unordered co-occurrences of distinct terms whose match start
/// positions lie within `window` tokens of each other, per document.
///
/// Occurrence pairs are the unit: every qualifying pair of occurrences
/// contributes one count. Same-term pairs contribute nothing, and counting
/// never crosses document boundaries.
pub fn count_documents<I>(docs: I, vocab: &Vocabulary, window: usize) -> Result<CooccurrenceCounts>
where
    I: IntoIterator<Item = CorpusDocument>,
{
    let mut builder = CountsBuilder::new(vocab.len());
    count_into(&mut builder, docs, vocab, window)?;
    Ok(builder.finalize())
}

fn count_into<I>(
    builder: &mut CountsBuilder,
    docs: I,
    vocab: &Vocabulary,
    window: usize,
) -> Result<()>
where
    I: IntoIterator<Item = CorpusDocument>,
{
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    if window == 0 {
        return Err(Error::InvalidConfig("window must be >= 1".into()));
    }
    for doc in docs {
        let occurrences = match_terms(doc.tokens(), vocab);
        for i in 0..occurrences.len() {
            let (pos_i, id_i) = occurrences[i];
            for &(pos_j, id_j) in &occurrences[i + 1..] {
                if pos_j - pos_i > window {
                    break;
                }
                if id_i != id_j {
                    builder.record(id_i, id_j);
                }
            }
        }
    }
    Ok(())
}

/// Counts a whole source, sharding documents over `jobs` threads when asked.
///
/// Shard counts merge by exact integer addition, so the result is
/// bit-identical to a single pass regardless of `jobs`.
pub fn count_source(
    source: &DocumentSource,
    vocab: &Vocabulary,
    window: usize,
    jobs: usize,
) -> Result<CooccurrenceCounts> {
    if jobs <= 1 {
        let mut builder = CountsBuilder::new(vocab.len());
        if vocab.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if window == 0 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        source.for_each_document(|doc| {
            count_into(&mut builder, std::iter::once(doc), vocab, window)
        })?;
        return Ok(builder.finalize());
    }
    let docs = source.read_all()?;
    let chunk = docs.len().div_ceil(jobs).max(1);
    let shards: Vec<Result<CountsBuilder>> = std::thread::scope(|scope| {
        let handles: Vec<_> = docs
            .chunks(chunk)
            .map(|shard| {
                scope.spawn(move || {
                    let mut builder = CountsBuilder::new(vocab.len());
                    count_into(&mut builder, shard.iter().cloned(), vocab, window)?;
                    Ok(builder)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut merged = CountsBuilder::new(vocab.len());
    for shard in shards {
        merged.merge(shard?);
    }
    Ok(merged.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(terms: &[&str]) -> Vocabulary {
        Vocabulary::new(terms.iter().copied()).unwrap()
    }

    fn ids(v: &Vocabulary, terms: &[&str]) -> Vec<TermId> {
        terms.iter().map(|t| v.id(t).unwrap()).collect()
    }

    #[test]
    fn normalize_lowercases_and_splits() {
        assert_eq!(
            normalize("Machine Learning, and AI."),
            ["machine", "learning", "and", "ai"]
        );
        assert_eq!(normalize(""), Vec::<String>::new());
        assert_eq!(normalize("state-of-the-art"), ["state", "of", "the", "art"]);
        // Idempotent on stored forms.
        assert_eq!(
            normalize_term(&normalize_term("Graph  Theory!")),
            "graph theory"
        );
    }

    #[test]
    fn vocabulary_is_a_bijection() {
        let v = vocab(&["Machine Learning", "graph theory", "AI"]);
        assert_eq!(v.len(), 3);
        for (id, term) in v.iter() {
            assert_eq!(v.id_of_normalized(term), Some(id));
            assert_eq!(v.term(id), term);
        }
        assert!(matches!(
            Vocabulary::new(["ai", "AI!"]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(Vocabulary::new(["..."]), Err(Error::EmptyTerm(_))));
    }

    #[test]
    fn longest_match_wins() {
        let v = vocab(&["machine learning", "learning"]);
        let tokens = normalize("machine learning rocks");
        let matches = match_terms(&tokens, &v);
        assert_eq!(matches, vec![(0, v.id("machine learning").unwrap())]);
    }

    #[test]
    fn matching_never_reorders_spans() {
        let v = vocab(&["machine learning", "learning"]);
        let tokens = normalize("learning machine");
        let matches = match_terms(&tokens, &v);
        assert_eq!(matches, vec![(0, v.id("learning").unwrap())]);
    }

    #[test]
    fn repeated_matches_are_kept() {
        let v = vocab(&["a"]);
        let tokens = normalize("a b a");
        let a = v.id("a").unwrap();
        assert_eq!(match_terms(&tokens, &v), vec![(0, a), (2, a)]);
    }

    #[test]
    fn counts_single_pair_within_window() {
        let v = vocab(&["a", "b"]);
        let doc = CorpusDocument::from_raw("a x x x x b");
        let counts = count_documents([doc], &v, 20).unwrap();
        let [a, b] = ids(&v, &["a", "b"])[..] else {
            unreachable!()
        };
        assert_eq!(counts.pair_count(a, b), 1);
        assert_eq!(counts.marginal(a), 1);
        assert_eq!(counts.marginal(b), 1);
        assert_eq!(counts.total(), 2);
    }

    #[test]
    fn window_bound_is_respected() {
        let v = vocab(&["a", "b", "c"]);
        // a@0, b@5, c@25: b-c exactly at the window edge, a-c past it.
        let mut text = vec!["a"];
        text.extend(std::iter::repeat_n("x", 4));
        text.push("b");
        text.extend(std::iter::repeat_n("x", 19));
        text.push("c");
        let doc = CorpusDocument::from_raw(&text.join(" "));
        let counts = count_documents([doc], &v, 20).unwrap();
        let [a, b, c] = ids(&v, &["a", "b", "c"])[..] else {
            unreachable!()
        };
        assert_eq!(counts.pair_count(a, b), 1);
        assert_eq!(counts.pair_count(b, c), 1);
        assert_eq!(counts.pair_count(a, c), 0);
    }

    #[test]
    fn same_term_occurrences_do_not_count() {
        let v = vocab(&["a", "b"]);
        let doc = CorpusDocument::from_raw("a a b a");
        let counts = count_documents([doc], &v, 20).unwrap();
        let [a, b] = ids(&v, &["a", "b"])[..] else {
            unreachable!()
        };
        assert_eq!(counts.pair_count(a, a), 0);
        assert_eq!(counts.pair_count(a, b), 3);
    }

    #[test]
    fn documents_bound_the_window() {
        let v = vocab(&["a", "b"]);
        let docs = [CorpusDocument::from_raw("a"), CorpusDocument::from_raw("b")];
        let counts = count_documents(docs, &v, 20).unwrap();
        let [a, b] = ids(&v, &["a", "b"])[..] else {
            unreachable!()
        };
        assert_eq!(counts.pair_count(a, b), 0);
        assert_eq!(counts.total(), 0);
    }

    #[test]
    fn empty_stream_is_valid() {
        let v = vocab(&["a"]);
        let counts = count_documents(Vec::new(), &v, 5).unwrap();
        assert_eq!(counts.total(), 0);
        assert_eq!(counts.n_pairs(), 0);
    }

    /// Independent O(n^2) all-pairs recount over raw occurrence lists.
    fn brute_force(
        docs: &[CorpusDocument],
        vocab: &Vocabulary,
        window: usize,
    ) -> std::collections::HashMap<(TermId, TermId), u64> {
        let mut acc = std::collections::HashMap::new();
        for doc in docs {
            let occ = match_terms(doc.tokens(), vocab);
            for (i, &(pi, xi)) in occ.iter().enumerate() {
                for &(pj, xj) in &occ[..i] {
                    if pi.abs_diff(pj) <= window && xi != xj {
                        let key = if xi < xj { (xi, xj) } else { (xj, xi) };
                        *acc.entry(key).or_insert(0) += 1;
                    }
                }
            }
        }
        acc
    }

    /// Deterministic toy corpus used by the oracle and merge tests.
    fn synthetic_docs(seed: u64, n_docs: usize) -> Vec<CorpusDocument> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let words = ["a", "b", "c", "d", "e", "x", "y", "z"];
        (0..n_docs)
            .map(|_| {
                let len = rng.gen_range(0..40);
                let tokens: Vec<String> = (0..len)
                    .map(|_| words[rng.gen_range(0..words.len())].to_owned())
                    .collect();
                CorpusDocument::from_tokens(tokens)
            })
            .collect()
    }

    #[test]
    fn counting_matches_brute_force_oracle() {
        let v = vocab(&["a", "b", "c", "d", "e"]);
        let docs = synthetic_docs(42, 10);
        let counts = count_documents(docs.clone(), &v, 7).unwrap();
        let expected = brute_force(&docs, &v, 7);
        assert_eq!(counts.n_pairs(), expected.len());
        for (&(x, y), &n) in &expected {
            assert_eq!(counts.pair_count(x, y), n, "pair {x:?},{y:?}");
        }
    }

    #[test]
    fn sharded_merge_equals_single_pass() {
        let v = vocab(&["a", "b", "c", "d", "e"]);
        let docs = synthetic_docs(43, 30);
        let single = count_documents(docs.clone(), &v, 10).unwrap();
        for split in [1, 2, 3, 7] {
            let chunk = docs.len().div_ceil(split);
            let mut merged = CountsBuilder::new(v.len());
            for shard in docs.chunks(chunk) {
                let mut b = CountsBuilder::new(v.len());
                count_into(&mut b, shard.iter().cloned(), &v, 10).unwrap();
                merged.merge(b);
            }
            let merged = merged.finalize();
            assert_eq!(merged.pairs_sorted(), single.pairs_sorted());
            assert_eq!(merged.total(), single.total());
        }

        let source = DocumentSource::Memory(docs.iter().map(|d| d.tokens().join(" ")).collect());
        let threaded = count_source(&source, &v, 10, 3).unwrap();
        assert_eq!(threaded.pairs_sorted(), single.pairs_sorted());
    }

    #[test]
    fn jsonl_source_concatenates_title_and_abstract() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("docs.jsonl");
        std::fs::write(
            &path,
            r#"{"title": "Graph Theory", "abstract": "spanning trees"}
{"title": "Only title"}
"#,
        )
        .unwrap();
        let docs = DocumentSource::from_path(&path).read_all().unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].tokens(), ["graph", "theory", "spanning", "trees"]);
        assert_eq!(docs[1].tokens(), ["only", "title"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Shrinking the window never increases any pair count, and Z stays
        /// even under every window.
        #[test]
        fn window_monotonicity(seed in 0u64..500, w1 in 1usize..12, w2 in 1usize..12) {
            let (small, large) = (w1.min(w2), w1.max(w2));
            let v = vocab(&["a", "b", "c", "d", "e"]);
            let docs = synthetic_docs(seed, 8);
            let counts_small = count_documents(docs.clone(), &v, small).unwrap();
            let counts_large = count_documents(docs, &v, large).unwrap();
            prop_assert_eq!(counts_small.total() % 2, 0);
            for ((x, y), n) in counts_small.pairs_sorted() {
                prop_assert!(n <= counts_large.pair_count(x, y));
            }
        }
    }
}
