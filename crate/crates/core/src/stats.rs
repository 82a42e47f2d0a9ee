//! Association weights from raw co-occurrence counts: normalized pointwise
//! mutual information, or max-rescaled raw counts for the ablation, filtered
//! by a threshold into the positive training set D.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::{CooccurrenceCounts, TermId, Vocabulary};
use crate::error::{Error, Result};

/// How pair weights are derived from counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    Npmi,
    RawCooccurrence,
}

impl WeightScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightScheme::Npmi => "NPMI",
            WeightScheme::RawCooccurrence => "RAW",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "NPMI" | "npmi" => Ok(WeightScheme::Npmi),
            "RAW" | "raw" => Ok(WeightScheme::RawCooccurrence),
            other => Err(Error::InvalidConfig(format!("unknown scheme {other:?}"))),
        }
    }
}

/// The probabilities behind NPMI: `p(x,y) = 2 freq(x,y)/Z`, `p(x) = freq(x)/Z`.
///
/// Note that under this normalization `p(x,y)` can exceed `p(x)`; the
/// definitions are applied exactly as given.
pub fn probabilities(counts: &CooccurrenceCounts, x: TermId, y: TermId) -> Result<(f64, f64, f64)> {
    let z = counts.total();
    if z == 0 {
        return Err(Error::EmptyStatistics);
    }
    let z = z as f64;
    Ok((
        2.0 * counts.pair_count(x, y) as f64 / z,
        counts.marginal(x) as f64 / z,
        counts.marginal(y) as f64 / z,
    ))
}

/// Normalized pointwise mutual information
/// `-log(p(x,y)/(p(x)p(y))) / log p(x,y)` with natural logs.
///
/// Pairs that never co-occur return negative infinity as the "never" sentinel;
/// a pair holding the entire co-occurrence mass returns +1 (the co-occur-
/// completely endpoint, taken by continuity where the quotient is 0/0).
pub fn npmi(counts: &CooccurrenceCounts, x: TermId, y: TermId) -> Result<f64> {
    if x == y {
        return Err(Error::SelfPair);
    }
    if counts.total() == 0 {
        return Err(Error::EmptyStatistics);
    }
    let joint = counts.pair_count(x, y);
    if joint == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    if 2 * joint == counts.total() {
        return Ok(1.0);
    }
    let (p_xy, p_x, p_y) = probabilities(counts, x, y)?;
    Ok(-(p_xy / (p_x * p_y)).ln() / p_xy.ln())
}

/// One weighted positive pair, stored with `x < y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    pub x: TermId,
    pub y: TermId,
    pub weight: f64,
}

/// The thresholded positive-pair set D used to train embeddings.
#[derive(Debug, Clone)]
pub struct AssociationSet {
    entries: Vec<Association>,
    scheme: WeightScheme,
    delta: f64,
}

impl AssociationSet {
    pub fn entries(&self) -> &[Association] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Per-term partner sets; a term's partners are excluded from its
    /// negative samples.
    pub fn partner_sets(&self, n_terms: usize) -> Vec<HashSet<TermId>> {
        let mut sets = vec![HashSet::new(); n_terms];
        for a in &self.entries {
            sets[a.x.index()].insert(a.y);
            sets[a.y.index()].insert(a.x);
        }
        sets
    }

    /// Content digest over ids and weight bits; equal sets hash equal.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for a in &self.entries {
            eat(&a.x.0.to_le_bytes());
            eat(&a.y.0.to_le_bytes());
            eat(&a.weight.to_bits().to_le_bytes());
        }
        h
    }

    /// TSV with a `#scheme=... #delta=...` header, rows in canonical order.
    pub fn write_tsv(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        writeln!(
            out,
            "#scheme={} #delta={}",
            self.scheme.as_str(),
            self.delta
        )
        .map_err(io)?;
        for a in &self.entries {
            writeln!(
                out,
                "{}\t{}\t{}",
                vocab.term(a.x),
                vocab.term(a.y),
                a.weight
            )
            .map_err(io)?;
        }
        Ok(())
    }

    pub fn read_tsv(path: &Path, vocab: &Vocabulary) -> Result<AssociationSet> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .unwrap_or_default();
        let bad_header = || {
            Error::format(
                Some(path.to_owned()),
                "expected #scheme=... #delta=... header",
            )
        };
        let rest = header.strip_prefix("#scheme=").ok_or_else(bad_header)?;
        let (scheme, rest) = rest.split_once(" #delta=").ok_or_else(bad_header)?;
        let scheme = WeightScheme::parse(scheme)?;
        let delta: f64 = rest.trim().parse().map_err(|_| bad_header())?;
        let mut entries = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let bad = || {
                Error::format(
                    Some(path.to_owned()),
                    format!("line {}: expected term_a<TAB>term_b<TAB>weight", lineno + 2),
                )
            };
            let mut cols = line.split('\t');
            let a = cols.next().ok_or_else(bad)?;
            let b = cols.next().ok_or_else(bad)?;
            let weight: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let x = vocab
                .id_of_normalized(a)
                .ok_or_else(|| Error::UnknownTerm(a.to_owned()))?;
            let y = vocab
                .id_of_normalized(b)
                .ok_or_else(|| Error::UnknownTerm(b.to_owned()))?;
            let (x, y) = if x < y { (x, y) } else { (y, x) };
            entries.push(Association { x, y, weight });
        }
        Ok(AssociationSet {
            entries,
            scheme,
            delta,
        })
    }
}

/// Filters counted pairs into the association set D.
///
/// Under NPMI the pairs with `npmi > delta` survive, weighted by their NPMI
/// value. Under raw co-occurrence every counted pair survives, weighted by
/// its count divided by the maximum pair count, so weights land in (0, 1]
/// and learning rates can be shared across schemes.
pub fn build_association_set(
    counts: &CooccurrenceCounts,
    scheme: WeightScheme,
    delta: f64,
) -> Result<AssociationSet> {
    if scheme == WeightScheme::Npmi && delta <= 0.0 {
        return Err(Error::InvalidConfig(
            "NPMI threshold delta must be > 0".into(),
        ));
    }
    let mut entries = Vec::new();
    match scheme {
        WeightScheme::Npmi => {
            for ((x, y), _) in counts.pairs_sorted() {
                let value = npmi(counts, x, y)?;
                if value > delta {
                    entries.push(Association {
                        x,
                        y,
                        weight: value,
                    });
                }
            }
        }
        WeightScheme::RawCooccurrence => {
            let max = counts.iter_pairs().map(|(_, n)| n).max().unwrap_or(0);
            for ((x, y), n) in counts.pairs_sorted() {
                entries.push(Association {
                    x,
                    y,
                    weight: n as f64 / max as f64,
                });
            }
        }
    }
    Ok(AssociationSet {
        entries,
        scheme,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CountsBuilder;
    use proptest::prelude::*;

    fn counts_from(pairs: &[(u32, u32, u64)], n_terms: usize) -> CooccurrenceCounts {
        let mut b = CountsBuilder::new(n_terms);
        for &(x, y, n) in pairs {
            for _ in 0..n {
                b.record(TermId(x), TermId(y));
            }
        }
        b.finalize()
    }

    #[test]
    fn probabilities_follow_definitions() {
        // {(a,b):3, (a,c):1, (b,c):1}: Z = 10.
        let counts = counts_from(&[(0, 1, 3), (0, 2, 1), (1, 2, 1)], 3);
        let (p_xy, p_x, p_y) = probabilities(&counts, TermId(0), TermId(1)).unwrap();
        assert_eq!((p_xy, p_x, p_y), (0.6, 0.4, 0.4));

        // A single pair: p(x,y) = 1, p(x) = p(y) = 1/2, whatever the count.
        for k in [1, 5, 1000] {
            let counts = counts_from(&[(0, 1, k)], 2);
            let (p_xy, p_x, p_y) = probabilities(&counts, TermId(0), TermId(1)).unwrap();
            assert_eq!((p_xy, p_x, p_y), (1.0, 0.5, 0.5));
        }

        // Unseen pair.
        let counts = counts_from(&[(0, 1, 3)], 3);
        let (p_xy, _, _) = probabilities(&counts, TermId(0), TermId(2)).unwrap();
        assert_eq!(p_xy, 0.0);
    }

    #[test]
    fn empty_statistics_are_rejected() {
        let counts = counts_from(&[], 2);
        assert!(matches!(
            probabilities(&counts, TermId(0), TermId(1)),
            Err(Error::EmptyStatistics)
        ));
        assert!(matches!(
            npmi(&counts, TermId(0), TermId(1)),
            Err(Error::EmptyStatistics)
        ));
    }

    #[test]
    fn npmi_frozen_values() {
        let counts = counts_from(&[(0, 1, 3), (0, 2, 1), (1, 2, 1)], 3);
        // -ln(0.6/0.16)/ln(0.6), to arbitrary precision.
        let ab = npmi(&counts, TermId(0), TermId(1)).unwrap();
        assert!((ab - 2.587_489_308_460_799).abs() < 1e-14, "ab = {ab}");
        let ac = npmi(&counts, TermId(0), TermId(2)).unwrap();
        assert!((ac - 0.5693234419266069).abs() < 1e-14, "ac = {ac}");
        assert_eq!(ac, npmi(&counts, TermId(1), TermId(2)).unwrap());
    }

    #[test]
    fn npmi_edge_cases() {
        // Exact independence: p(a,b) = p(a)p(b) built from powers of two.
        // {(a,b):1, (a,c):7, (b,d):7, (e,f):1}: Z = 32, p(a,b) = 1/16 = p(a)p(b).
        let counts = counts_from(&[(0, 1, 1), (0, 2, 7), (1, 3, 7), (4, 5, 1)], 6);
        assert_eq!(npmi(&counts, TermId(0), TermId(1)).unwrap(), 0.0);

        // Never co-occur.
        assert_eq!(
            npmi(&counts, TermId(2), TermId(3)).unwrap(),
            f64::NEG_INFINITY
        );

        // A pair holding all mass co-occurs completely.
        let single = counts_from(&[(0, 1, 9)], 2);
        assert_eq!(npmi(&single, TermId(0), TermId(1)).unwrap(), 1.0);

        assert!(matches!(
            npmi(&single, TermId(1), TermId(1)),
            Err(Error::SelfPair)
        ));
    }

    /// Exhaustive recomputation of D membership from first principles.
    fn exhaustive_npmi_filter(counts: &CooccurrenceCounts, delta: f64) -> Vec<(TermId, TermId)> {
        let z = counts.total() as f64;
        let mut kept = Vec::new();
        for i in 0..counts.n_terms() as u32 {
            for j in (i + 1)..counts.n_terms() as u32 {
                let (x, y) = (TermId(i), TermId(j));
                let f = counts.pair_count(x, y);
                if f == 0 {
                    continue;
                }
                let p_xy = 2.0 * f as f64 / z;
                let value = if p_xy == 1.0 {
                    1.0
                } else {
                    let p_x = counts.marginal(x) as f64 / z;
                    let p_y = counts.marginal(y) as f64 / z;
                    -(p_xy / (p_x * p_y)).ln() / p_xy.ln()
                };
                if value > delta {
                    kept.push((x, y));
                }
            }
        }
        kept
    }

    #[test]
    fn association_set_matches_exhaustive_filter() {
        let counts = counts_from(&[(0, 1, 3), (0, 2, 1), (1, 2, 1)], 3);
        let set = build_association_set(&counts, WeightScheme::Npmi, 0.1).unwrap();
        let got: Vec<_> = set.entries().iter().map(|a| (a.x, a.y)).collect();
        assert_eq!(got, exhaustive_npmi_filter(&counts, 0.1));
        // All three pairs clear delta = 0.1 here.
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn independent_and_absent_pairs_are_excluded() {
        let counts = counts_from(&[(0, 1, 1), (0, 2, 7), (1, 3, 7), (4, 5, 1)], 6);
        let set = build_association_set(&counts, WeightScheme::Npmi, 0.1).unwrap();
        for a in set.entries() {
            assert!(counts.pair_count(a.x, a.y) > 0);
            assert!(a.weight > 0.1);
        }
        assert!(!set
            .entries()
            .iter()
            .any(|a| (a.x, a.y) == (TermId(0), TermId(1))));

        // An unreachable threshold empties D; training rejects that later.
        let set = build_association_set(&counts, WeightScheme::Npmi, 1e6).unwrap();
        assert!(set.is_empty());

        let empty = build_association_set(&counts_from(&[], 3), WeightScheme::Npmi, 0.1).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn raw_scheme_rescales_by_max() {
        let counts = counts_from(&[(0, 1, 3), (0, 2, 1)], 3);
        let set = build_association_set(&counts, WeightScheme::RawCooccurrence, 0.1).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.entries()[0].weight, 1.0);
        assert_eq!(set.entries()[1].weight, 1.0 / 3.0);
    }

    #[test]
    fn delta_must_be_positive_for_npmi() {
        let counts = counts_from(&[(0, 1, 1)], 2);
        assert!(build_association_set(&counts, WeightScheme::Npmi, 0.0).is_err());
        assert!(build_association_set(&counts, WeightScheme::RawCooccurrence, 0.0).is_ok());
    }

    #[test]
    fn tsv_round_trip() {
        let vocab = Vocabulary::new(["alpha", "beta decay", "gamma"]).unwrap();
        let counts = counts_from(&[(0, 1, 3), (0, 2, 1), (1, 2, 1)], 3);
        let set = build_association_set(&counts, WeightScheme::Npmi, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("assoc.tsv");
        set.write_tsv(&path, &vocab).unwrap();
        let back = AssociationSet::read_tsv(&path, &vocab).unwrap();
        assert_eq!(back.checksum(), set.checksum());
        assert_eq!(back.scheme(), WeightScheme::Npmi);
        assert_eq!(back.delta(), 0.1);
    }

    fn arb_counts() -> impl Strategy<Value = CooccurrenceCounts> {
        proptest::collection::vec((0u32..8, 0u32..7, 1u64..50), 1..20).prop_map(|raw| {
            let mut b = CountsBuilder::new(8);
            for (x, y_raw, n) in raw {
                // Skew the second index off the diagonal.
                let y = if y_raw >= x { y_raw + 1 } else { y_raw };
                for _ in 0..n {
                    b.record(TermId(x), TermId(y));
                }
            }
            b.finalize()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Multiplying every count by the same factor changes no NPMI value,
        /// bit for bit.
        #[test]
        fn npmi_is_scale_invariant(counts in arb_counts(), k in 2u64..10) {
            let scaled = counts.scaled(k);
            for i in 0..8u32 {
                for j in (i + 1)..8u32 {
                    let a = npmi(&counts, TermId(i), TermId(j)).unwrap();
                    let b = npmi(&scaled, TermId(i), TermId(j)).unwrap();
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }

        /// Raising the threshold only ever shrinks D.
        #[test]
        fn thresholds_are_monotone(counts in arb_counts(), d1 in 0.01f64..2.0, d2 in 0.01f64..2.0) {
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            let wide = build_association_set(&counts, WeightScheme::Npmi, lo).unwrap();
            let narrow = build_association_set(&counts, WeightScheme::Npmi, hi).unwrap();
            let wide_pairs: std::collections::HashSet<_> =
                wide.entries().iter().map(|a| (a.x, a.y)).collect();
            for a in narrow.entries() {
                prop_assert!(wide_pairs.contains(&(a.x, a.y)));
            }
        }
    }
}
