//! Evaluation harness: comparison accuracy and average-rank metrics against
//! hypernym-hyponym ground truth, the popularity baseline, the four ablation
//! variants, and a synthetic tree-corpus generator for desk-scale runs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CooccurrenceCounts, TermId, Vocabulary};
use crate::error::{Error, Result};
use crate::stats::{build_association_set, WeightScheme};
use crate::training::{train_offline, Space, TrainConfig};

/// One broader/narrower ground-truth edge; the level is the hypernym's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypernymPair {
    pub hypernym: String,
    pub hyponym: String,
    pub hypernym_level: u32,
}

/// A vocabulary whose terms carry category levels (1 = broadest).
///
/// `W_k` is the set of terms at levels 1..=k, so the level sets are nested.
#[derive(Debug, Clone)]
pub struct LevelledVocabulary {
    vocab: Vocabulary,
    levels: Vec<u32>,
}

impl LevelledVocabulary {
    pub fn new(vocab: Vocabulary, levels: Vec<u32>) -> Result<Self> {
        if levels.len() != vocab.len() {
            return Err(Error::InvalidInput("one level per term required".into()));
        }
        let max = levels.iter().copied().max().unwrap_or(0);
        for l in 1..=max {
            if !levels.contains(&l) {
                return Err(Error::InvalidInput(format!(
                    "levels must cover 1..={max}; level {l} is unused"
                )));
            }
        }
        if levels.iter().any(|&l| l < 1) {
            return Err(Error::InvalidInput("levels start at 1".into()));
        }
        Ok(LevelledVocabulary { vocab, levels })
    }

    /// Reads a vocabulary file whose second column must be present.
    pub fn read_file(path: &Path) -> Result<Self> {
        let (vocab, levels) = Vocabulary::read_file(path)?;
        let levels: Vec<u32> = levels
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                l.ok_or_else(|| {
                    Error::format(
                        Some(path.to_owned()),
                        format!(
                            "term {:?} has no level column",
                            vocab.term(TermId(i as u32))
                        ),
                    )
                })
            })
            .collect::<Result<_>>()?;
        LevelledVocabulary::new(vocab, levels)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn level(&self, id: TermId) -> u32 {
        self.levels[id.index()]
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn max_level(&self) -> u32 {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    /// Terms with level <= k.
    pub fn w_k(&self, k: u32) -> Vec<TermId> {
        self.levels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l <= k)
            .map(|(i, _)| TermId(i as u32))
            .collect()
    }
}

/// Per-term capacity scores and the induced ranking.
///
/// Ranks are 1-based, descending in score; ties break toward the smaller
/// term id so equal score multisets always rank identically.
#[derive(Debug, Clone)]
pub struct CapacityReport {
    scores: Vec<f64>,
    ranking: Vec<TermId>,
    rank_of: Vec<usize>,
}

impl CapacityReport {
    pub fn from_scores(scores: Vec<f64>) -> CapacityReport {
        let mut ranking: Vec<TermId> = (0..scores.len() as u32).map(TermId).collect();
        ranking.sort_by(|a, b| {
            scores[b.index()]
                .total_cmp(&scores[a.index()])
                .then(a.0.cmp(&b.0))
        });
        let mut rank_of = vec![0usize; scores.len()];
        for (pos, id) in ranking.iter().enumerate() {
            rank_of[id.index()] = pos + 1;
        }
        CapacityReport {
            scores,
            ranking,
            rank_of,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn score(&self, id: TermId) -> f64 {
        self.scores[id.index()]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// 1-based rank of a term.
    pub fn rank(&self, id: TermId) -> usize {
        self.rank_of[id.index()]
    }

    /// Ids from rank 1 downward.
    pub fn ranking(&self) -> &[TermId] {
        &self.ranking
    }

    /// TSV rows `term \t sc \t rank` in term-id order.
    pub fn write_tsv(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        if vocab.len() != self.len() {
            return Err(Error::InvalidInput(
                "report/vocabulary size mismatch".into(),
            ));
        }
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for (id, term) in vocab.iter() {
            writeln!(out, "{term}\t{}\t{}", self.score(id), self.rank(id))
                .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Reads a report TSV back, reconstructing the vocabulary from its rows.
    pub fn read_tsv(path: &Path) -> Result<(Vocabulary, CapacityReport)> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut terms = Vec::new();
        let mut scores = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let bad = || {
                Error::format(
                    Some(path.to_owned()),
                    format!("line {}: expected term<TAB>sc<TAB>rank", lineno + 1),
                )
            };
            let mut cols = line.split('\t');
            let term = cols.next().ok_or_else(bad)?;
            let sc: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            terms.push(term.to_owned());
            scores.push(sc);
        }
        Ok((Vocabulary::new(terms)?, CapacityReport::from_scores(scores)))
    }
}

fn pair_ids(vocab: &Vocabulary, pair: &HypernymPair) -> Result<(TermId, TermId)> {
    let hyper = vocab
        .id(&pair.hypernym)
        .ok_or_else(|| Error::UnknownTerm(pair.hypernym.clone()))?;
    let hypo = vocab
        .id(&pair.hyponym)
        .ok_or_else(|| Error::UnknownTerm(pair.hyponym.clone()))?;
    Ok((hyper, hypo))
}

/// Fraction of pairs whose hypernym scores strictly higher than its hyponym;
/// ties count as wrong. `level_filter` keeps pairs with hypernym level <= k.
pub fn comparison_accuracy(
    report: &CapacityReport,
    vocab: &Vocabulary,
    pairs: &[HypernymPair],
    level_filter: Option<u32>,
) -> Result<f64> {
    let mut kept = 0usize;
    let mut correct = 0usize;
    for pair in pairs {
        if let Some(k) = level_filter {
            if pair.hypernym_level > k {
                continue;
            }
        }
        let (hyper, hypo) = pair_ids(vocab, pair)?;
        kept += 1;
        if report.score(hyper) > report.score(hypo) {
            correct += 1;
        }
    }
    if kept == 0 {
        return Err(Error::EmptyEvaluationSet);
    }
    Ok(correct as f64 / kept as f64)
}

/// Mean normalized rank of the terms at levels 1..=k:
/// `AR_k = (1/|W_k|) sum_{x in W_k} rank(x)/|W|`. Lower is better for small k.
pub fn average_rank(report: &CapacityReport, vocab: &LevelledVocabulary, k: u32) -> Result<f64> {
    if report.len() != vocab.vocab().len() {
        return Err(Error::InvalidInput(
            "report/vocabulary size mismatch".into(),
        ));
    }
    let w_k = vocab.w_k(k);
    if w_k.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    // Integer rank sum first, one division after: the closed-form values
    // (|W_k|+1)/(2|W|) come out exact this way.
    let rank_sum: u64 = w_k.iter().map(|&id| report.rank(id) as u64).sum();
    Ok(rank_sum as f64 / (report.len() * w_k.len()) as f64)
}

/// Frequency baseline: a term's capacity is just its co-occurrence marginal.
pub fn popularity_baseline(counts: &CooccurrenceCounts) -> Result<CapacityReport> {
    if counts.n_terms() == 0 {
        return Err(Error::EmptyStatistics);
    }
    Ok(CapacityReport::from_scores(
        counts.marginals().iter().map(|&m| m as f64).collect(),
    ))
}

/// The two-axis ablation grid: geometry x weighting. `LorentzNpmi` is the
/// full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    EuclidCooc,
    EuclidNpmi,
    LorentzCooc,
    LorentzNpmi,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::EuclidCooc,
        AblationVariant::EuclidNpmi,
        AblationVariant::LorentzCooc,
        AblationVariant::LorentzNpmi,
    ];

    pub fn space(self) -> Space {
        match self {
            AblationVariant::EuclidCooc | AblationVariant::EuclidNpmi => Space::Euclidean,
            AblationVariant::LorentzCooc | AblationVariant::LorentzNpmi => Space::Lorentz,
        }
    }

    pub fn scheme(self) -> WeightScheme {
        match self {
            AblationVariant::EuclidCooc | AblationVariant::LorentzCooc => {
                WeightScheme::RawCooccurrence
            }
            AblationVariant::EuclidNpmi | AblationVariant::LorentzNpmi => WeightScheme::Npmi,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AblationVariant::EuclidCooc => "euclid-cooc",
            AblationVariant::EuclidNpmi => "euclid-npmi",
            AblationVariant::LorentzCooc => "lorentz-cooc",
            AblationVariant::LorentzNpmi => "lorentz-npmi",
        }
    }
}

/// Trains one ablation variant end to end and reads off its capacity report.
///
/// The association set depends only on the counts, the variant's weighting
/// scheme, and `delta`; the geometry enters afterwards.
pub fn run_ablation(
    variant: AblationVariant,
    counts: &CooccurrenceCounts,
    vocab: &Vocabulary,
    config: &TrainConfig,
    delta: f64,
) -> Result<CapacityReport> {
    let associations = build_association_set(counts, variant.scheme(), delta)?;
    let config = TrainConfig {
        space: variant.space(),
        ..config.clone()
    };
    let outcome = train_offline(&associations, vocab, &config)?;
    Ok(CapacityReport::from_scores(outcome.table.capacities()))
}

/// Pairs file rows: `hypernym \t hyponym \t hypernym_level`.
pub fn read_pairs(path: &Path) -> Result<Vec<HypernymPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let bad = || {
            Error::format(
                Some(path.to_owned()),
                format!(
                    "line {}: expected hypernym<TAB>hyponym<TAB>level",
                    lineno + 1
                ),
            )
        };
        let mut cols = line.split('\t');
        let hypernym = cols.next().ok_or_else(bad)?.to_owned();
        let hyponym = cols.next().ok_or_else(bad)?.to_owned();
        let hypernym_level: u32 = cols
            .next()
            .ok_or_else(bad)?
            .trim()
            .parse()
            .map_err(|_| bad())?;
        if hypernym_level < 1 {
            return Err(bad());
        }
        if crate::corpus::normalize_term(&hypernym) == crate::corpus::normalize_term(&hyponym) {
            return Err(Error::format(
                Some(path.to_owned()),
                format!("line {}: hypernym equals hyponym", lineno + 1),
            ));
        }
        pairs.push(HypernymPair {
            hypernym,
            hyponym,
            hypernym_level,
        });
    }
    Ok(pairs)
}

pub fn write_pairs(path: &Path, pairs: &[HypernymPair]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for p in pairs {
        writeln!(out, "{}\t{}\t{}", p.hypernym, p.hyponym, p.hypernym_level)
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// The JSON metrics block emitted next to a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub accuracy_all: f64,
    pub accuracy_top1: f64,
    pub accuracy_top2: f64,
    pub ar_top1: f64,
    pub ar_top2: f64,
}

pub fn compute_metrics(
    report: &CapacityReport,
    vocab: &LevelledVocabulary,
    pairs: &[HypernymPair],
) -> Result<MetricsSummary> {
    Ok(MetricsSummary {
        accuracy_all: comparison_accuracy(report, vocab.vocab(), pairs, None)?,
        accuracy_top1: comparison_accuracy(report, vocab.vocab(), pairs, Some(1))?,
        accuracy_top2: comparison_accuracy(report, vocab.vocab(), pairs, Some(2))?,
        ar_top1: average_rank(report, vocab, 1)?,
        ar_top2: average_rank(report, vocab, 2)?,
    })
}

// ---------------------------------------------------------------------------
// Synthetic tree corpus
// ---------------------------------------------------------------------------

/// Mention probability of an ancestor decays with this factor per tree level.
const ANCESTOR_DECAY: f64 = 0.65;
/// Dampening for the deliberately understated nodes: broad but rarely written
/// terms, the case frequency baselines get wrong.
const UNDERSTATED_ROOT_FACTOR: f64 = 0.12;
const UNDERSTATED_MID_FACTOR: f64 = 0.5;
const FILLER_TOKENS: usize = 50;

/// Mention probability of a sibling of a path node, by the sibling's level.
/// Broad terms are co-mentioned much more readily than narrow ones; that is
/// what ties the root tier together and keeps nephew links weak.
fn sibling_prob(level: u32) -> f64 {
    match level {
        1 => 0.5,
        2 => 0.07,
        _ => 0.1,
    }
}

#[derive(Debug, Clone)]
struct TreeNode {
    name: String,
    level: u32,
    parent: Option<usize>,
    children: Vec<usize>,
}

fn build_tree(branching: usize, depth: usize) -> Vec<TreeNode> {
    const DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut frontier: Vec<usize> = Vec::new();
    for (i, &digit) in DIGITS.iter().enumerate().take(branching) {
        nodes.push(TreeNode {
            name: format!("t{}", digit as char),
            level: 1,
            parent: None,
            children: Vec::new(),
        });
        frontier.push(i);
    }
    for level in 2..=depth {
        let mut next = Vec::new();
        for &parent in &frontier {
            for &digit in DIGITS.iter().take(branching) {
                let idx = nodes.len();
                let name = format!("{}{}", nodes[parent].name, digit as char);
                nodes.push(TreeNode {
                    name,
                    level: level as u32,
                    parent: Some(parent),
                    children: Vec::new(),
                });
                nodes[parent].children.push(idx);
                next.push(idx);
            }
        }
        frontier = next;
    }
    nodes
}

/// Everything the generator hands back: raw document lines, the levelled
/// term set, and the tree edges as ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub documents: Vec<String>,
    pub vocab: LevelledVocabulary,
    pub pairs: Vec<HypernymPair>,
}

/// Per-node mention dampening; two broad nodes are deliberately understated
/// so that raw frequency dissociates from semantic breadth.
fn dampening(nodes: &[TreeNode], branching: usize) -> Vec<f64> {
    let mut damp = vec![1.0; nodes.len()];
    damp[0] = UNDERSTATED_ROOT_FACTOR;
    if branching >= 2 {
        if let Some(&mid) = nodes[1].children.first() {
            damp[mid] = UNDERSTATED_MID_FACTOR;
        }
    }
    damp
}

/// Builds a complete `branching`-ary tree of synthetic terms, `depth` levels
/// deep, and emits documents around uniformly sampled leaves: the leaf
/// itself, its ancestors with probability decaying in tree distance, and the
/// siblings of every node on the leaf's path with small probability, all
/// padded with filler tokens.
pub fn generate_synthetic_tree_corpus(
    branching: usize,
    depth: usize,
    docs: usize,
    seed: u64,
) -> Result<SyntheticCorpus> {
    if branching < 2 {
        return Err(Error::InvalidConfig("branching must be >= 2".into()));
    }
    if !(3..=8).contains(&depth) {
        return Err(Error::InvalidConfig("depth must be in 3..=8".into()));
    }
    if branching > 36 {
        return Err(Error::InvalidConfig("branching must be <= 36".into()));
    }

    let nodes = build_tree(branching, depth);
    let damp = dampening(&nodes, branching);
    let leaves: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.level == depth as u32)
        .map(|(i, _)| i)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut documents = Vec::with_capacity(docs);
    let mut mentioned: Vec<usize> = Vec::new();
    for _ in 0..docs {
        let leaf = leaves[rng.gen_range(0..leaves.len())];
        mentioned.clear();

        let mut path = Vec::new();
        let mut cursor = Some(leaf);
        while let Some(idx) = cursor {
            path.push(idx);
            cursor = nodes[idx].parent;
        }
        for (dist, &idx) in path.iter().enumerate() {
            let base = ANCESTOR_DECAY.powi(dist as i32);
            if rng.gen_bool(base * damp[idx]) {
                mentioned.push(idx);
            }
            // Siblings of every node on the path, each with a probability set
            // by the sibling's level: broad terms are co-mentioned much more
            // readily than narrow ones.
            if let Some(parent) = nodes[idx].parent {
                for &sib in &nodes[parent].children {
                    if sib != idx && rng.gen_bool(sibling_prob(nodes[sib].level) * damp[sib]) {
                        mentioned.push(sib);
                    }
                }
            } else {
                for (root, node) in nodes.iter().enumerate() {
                    if node.parent.is_none()
                        && root != idx
                        && rng.gen_bool(sibling_prob(1) * damp[root])
                    {
                        mentioned.push(root);
                    }
                }
            }
        }
        mentioned.shuffle(&mut rng);

        let mut tokens: Vec<String> = Vec::new();
        let pad = |tokens: &mut Vec<String>, rng: &mut ChaCha8Rng, lo: usize, hi: usize| {
            for _ in 0..rng.gen_range(lo..=hi) {
                tokens.push(format!("w{}", rng.gen_range(0..FILLER_TOKENS)));
            }
        };
        pad(&mut tokens, &mut rng, 0, 3);
        for (i, &idx) in mentioned.iter().enumerate() {
            if i > 0 {
                pad(&mut tokens, &mut rng, 1, 3);
            }
            tokens.push(nodes[idx].name.clone());
        }
        pad(&mut tokens, &mut rng, 0, 3);
        documents.push(tokens.join(" "));
    }

    let vocab = Vocabulary::new(nodes.iter().map(|n| n.name.clone()))?;
    let levels: Vec<u32> = nodes.iter().map(|n| n.level).collect();
    let vocab = LevelledVocabulary::new(vocab, levels)?;
    let pairs: Vec<HypernymPair> = nodes
        .iter()
        .filter_map(|n| {
            n.parent.map(|p| HypernymPair {
                hypernym: nodes[p].name.clone(),
                hyponym: n.name.clone(),
                hypernym_level: nodes[p].level,
            })
        })
        .collect();
    Ok(SyntheticCorpus {
        documents,
        vocab,
        pairs,
    })
}
