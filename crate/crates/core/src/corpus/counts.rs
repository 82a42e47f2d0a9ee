//! Sparse symmetric co-occurrence counts with exact merge and two
//! serializations: a human-readable TSV and a compact binary cache.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::{TermId, Vocabulary};
use crate::error::{Error, Result};

const BINARY_MAGIC: &[u8; 8] = b"SCCNT001";

fn canonical(x: TermId, y: TermId) -> (TermId, TermId) {
    if x <= y {
        (x, y)
    } else {
        (y, x)
    }
}

/// Accumulates pair counts; cheap to merge across shards.
#[derive(Debug, Clone)]
pub struct CountsBuilder {
    n_terms: usize,
    pairs: HashMap<(TermId, TermId), u64>,
}

impl CountsBuilder {
    pub fn new(n_terms: usize) -> Self {
        CountsBuilder {
            n_terms,
            pairs: HashMap::new(),
        }
    }

    /// Adds one observed co-occurrence of the unordered pair `{x, y}`.
    pub fn record(&mut self, x: TermId, y: TermId) {
        debug_assert_ne!(x, y, "diagonal entries are never stored");
        *self.pairs.entry(canonical(x, y)).or_insert(0) += 1;
    }

    /// Exact integer merge; associative and commutative, so sharded counting
    /// is bit-identical to a single pass.
    pub fn merge(&mut self, other: CountsBuilder) {
        debug_assert_eq!(self.n_terms, other.n_terms);
        for (key, n) in other.pairs {
            *self.pairs.entry(key).or_insert(0) += n;
        }
    }

    /// Freezes the counts, deriving marginals and the grand total.
    pub fn finalize(self) -> CooccurrenceCounts {
        let mut marginals = vec![0u64; self.n_terms];
        for (&(x, y), &n) in &self.pairs {
            marginals[x.index()] += n;
            marginals[y.index()] += n;
        }
        let total = marginals.iter().sum();
        CooccurrenceCounts {
            n_terms: self.n_terms,
            pairs: self.pairs,
            marginals,
            total,
        }
    }
}

/// Immutable windowed pair frequencies `freq(x, y)` with per-term marginals
/// `freq(x)` and the grand total `Z = sum_x freq(x)`.
///
/// One canonical entry per unordered pair (`id_low <= id_high`), never a
/// diagonal; `Z` is therefore always twice the sum of the pair counts.
#[derive(Debug, Clone)]
pub struct CooccurrenceCounts {
    n_terms: usize,
    pairs: HashMap<(TermId, TermId), u64>,
    marginals: Vec<u64>,
    total: u64,
}

impl CooccurrenceCounts {
    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// `freq(x, y)` in either argument order; zero for unseen pairs and for
    /// the diagonal.
    pub fn pair_count(&self, x: TermId, y: TermId) -> u64 {
        if x == y {
            return 0;
        }
        self.pairs.get(&canonical(x, y)).copied().unwrap_or(0)
    }

    /// `freq(x) = sum_y freq(x, y)`.
    pub fn marginal(&self, x: TermId) -> u64 {
        self.marginals[x.index()]
    }

    pub fn marginals(&self) -> &[u64] {
        &self.marginals
    }

    /// `Z`; always even.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter_pairs(&self) -> impl Iterator<Item = ((TermId, TermId), u64)> + '_ {
        self.pairs.iter().map(|(&k, &v)| (k, v))
    }

    /// Pairs in canonical `(id_low, id_high)` order; the deterministic view
    /// used by every serialization.
    pub fn pairs_sorted(&self) -> Vec<((TermId, TermId), u64)> {
        let mut v: Vec<_> = self.iter_pairs().collect();
        v.sort_unstable_by_key(|&(k, _)| k);
        v
    }

    /// Every count multiplied by `k`. NPMI is invariant under this.
    pub fn scaled(&self, k: u64) -> CooccurrenceCounts {
        CooccurrenceCounts {
            n_terms: self.n_terms,
            pairs: self.pairs.iter().map(|(&key, &n)| (key, n * k)).collect(),
            marginals: self.marginals.iter().map(|&m| m * k).collect(),
            total: self.total * k,
        }
    }

    /// Writes `#Z=<int>` then `term_a \t term_b \t count` rows in canonical
    /// id order.
    pub fn write_tsv(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        writeln!(out, "#Z={}", self.total).map_err(io)?;
        for ((x, y), n) in self.pairs_sorted() {
            writeln!(out, "{}\t{}\t{n}", vocab.term(x), vocab.term(y)).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_tsv(path: &Path, vocab: &Vocabulary) -> Result<CooccurrenceCounts> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .unwrap_or_default();
        let declared_z: u64 = header
            .strip_prefix("#Z=")
            .and_then(|z| z.trim().parse().ok())
            .ok_or_else(|| Error::format(Some(path.to_owned()), "missing #Z= header"))?;
        let mut builder = CountsBuilder::new(vocab.len());
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let bad = || {
                Error::format(
                    Some(path.to_owned()),
                    format!("line {}: expected term_a<TAB>term_b<TAB>count", lineno + 2),
                )
            };
            let mut cols = line.split('\t');
            let a = cols.next().ok_or_else(bad)?;
            let b = cols.next().ok_or_else(bad)?;
            let n: u64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let x = vocab
                .id_of_normalized(a)
                .ok_or_else(|| Error::UnknownTerm(a.to_owned()))?;
            let y = vocab
                .id_of_normalized(b)
                .ok_or_else(|| Error::UnknownTerm(b.to_owned()))?;
            if x == y {
                return Err(Error::format(
                    Some(path.to_owned()),
                    format!("line {}: diagonal entry {a:?}", lineno + 2),
                ));
            }
            *builder.pairs.entry(canonical(x, y)).or_insert(0) += n;
        }
        let counts = builder.finalize();
        if counts.total() != declared_z {
            return Err(Error::format(
                Some(path.to_owned()),
                format!("header Z={declared_z} but rows sum to Z={}", counts.total()),
            ));
        }
        Ok(counts)
    }

    /// Compact id-pair cache, paired to a vocabulary by its fingerprint.
    pub fn write_binary(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        out.write_all(BINARY_MAGIC).map_err(io)?;
        out.write_all(&vocab.fingerprint().to_le_bytes())
            .map_err(io)?;
        out.write_all(&(self.n_terms as u32).to_le_bytes())
            .map_err(io)?;
        out.write_all(&(self.pairs.len() as u64).to_le_bytes())
            .map_err(io)?;
        for ((x, y), n) in self.pairs_sorted() {
            out.write_all(&x.0.to_le_bytes()).map_err(io)?;
            out.write_all(&y.0.to_le_bytes()).map_err(io)?;
            out.write_all(&n.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_binary(path: &Path, vocab: &Vocabulary) -> Result<CooccurrenceCounts> {
        let mut reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic).map_err(io)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::format(Some(path.to_owned()), "bad counts magic"));
        }
        let mut u64buf = [0u8; 8];
        let mut u32buf = [0u8; 4];
        reader.read_exact(&mut u64buf).map_err(io)?;
        if u64::from_le_bytes(u64buf) != vocab.fingerprint() {
            return Err(Error::format(
                Some(path.to_owned()),
                "counts were built from a different vocabulary",
            ));
        }
        reader.read_exact(&mut u32buf).map_err(io)?;
        let n_terms = u32::from_le_bytes(u32buf) as usize;
        if n_terms != vocab.len() {
            return Err(Error::format(Some(path.to_owned()), "term count mismatch"));
        }
        reader.read_exact(&mut u64buf).map_err(io)?;
        let n_pairs = u64::from_le_bytes(u64buf);
        let mut builder = CountsBuilder::new(n_terms);
        for _ in 0..n_pairs {
            reader.read_exact(&mut u32buf).map_err(io)?;
            let x = TermId(u32::from_le_bytes(u32buf));
            reader.read_exact(&mut u32buf).map_err(io)?;
            let y = TermId(u32::from_le_bytes(u32buf));
            reader.read_exact(&mut u64buf).map_err(io)?;
            let n = u64::from_le_bytes(u64buf);
            if x >= y || y.index() >= n_terms {
                return Err(Error::format(Some(path.to_owned()), "corrupt pair record"));
            }
            builder.pairs.insert((x, y), n);
        }
        Ok(builder.finalize())
    }

    /// Reads either serialization, sniffing the binary magic.
    pub fn read_auto(path: &Path, vocab: &Vocabulary) -> Result<CooccurrenceCounts> {
        let mut head = [0u8; 8];
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
        if n == 8 && &head == BINARY_MAGIC {
            CooccurrenceCounts::read_binary(path, vocab)
        } else {
            CooccurrenceCounts::read_tsv(path, vocab)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vocabulary, CooccurrenceCounts) {
        let vocab = Vocabulary::new(["a", "b", "c"]).unwrap();
        let mut b = CountsBuilder::new(3);
        for _ in 0..3 {
            b.record(TermId(1), TermId(0)); // stored canonically as (0, 1)
        }
        b.record(TermId(0), TermId(2));
        b.record(TermId(1), TermId(2));
        (vocab, b.finalize())
    }

    #[test]
    fn symmetric_lookup_and_derived_totals() {
        let (_, counts) = toy();
        assert_eq!(counts.pair_count(TermId(0), TermId(1)), 3);
        assert_eq!(counts.pair_count(TermId(1), TermId(0)), 3);
        assert_eq!(counts.pair_count(TermId(2), TermId(2)), 0);
        assert_eq!(counts.marginal(TermId(0)), 4);
        assert_eq!(counts.marginal(TermId(1)), 4);
        assert_eq!(counts.marginal(TermId(2)), 2);
        assert_eq!(counts.total(), 10);
        assert_eq!(counts.total() % 2, 0);
        let pair_sum: u64 = counts.iter_pairs().map(|(_, n)| n).sum();
        assert_eq!(counts.total(), 2 * pair_sum);
    }

    #[test]
    fn tsv_round_trip() {
        let (vocab, counts) = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counts.tsv");
        counts.write_tsv(&path, &vocab).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("#Z=10\n"));
        let back = CooccurrenceCounts::read_tsv(&path, &vocab).unwrap();
        assert_eq!(back.pairs_sorted(), counts.pairs_sorted());
        assert_eq!(back.total(), counts.total());
    }

    #[test]
    fn binary_round_trip_checks_magic_and_vocab() {
        let (vocab, counts) = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counts.bin");
        counts.write_binary(&path, &vocab).unwrap();
        let back = CooccurrenceCounts::read_auto(&path, &vocab).unwrap();
        assert_eq!(back.pairs_sorted(), counts.pairs_sorted());

        let other = Vocabulary::new(["a", "b", "d"]).unwrap();
        assert!(matches!(
            CooccurrenceCounts::read_binary(&path, &other),
            Err(Error::Format { .. })
        ));

        std::fs::write(&path, b"NOTMAGIC").unwrap();
        assert!(CooccurrenceCounts::read_binary(&path, &vocab).is_err());
    }

    #[test]
    fn tsv_header_mismatch_is_rejected() {
        let (vocab, _) = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, "#Z=4\na\tb\t3\n").unwrap();
        assert!(matches!(
            CooccurrenceCounts::read_tsv(&path, &vocab),
            Err(Error::Format { .. })
        ));
    }
}
