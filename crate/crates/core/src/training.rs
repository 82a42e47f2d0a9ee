//! Offline embedding construction: weighted negative-sampling loss over the
//! association set, minimized by Riemannian SGD on the hyperboloid (or plain
//! SGD in Euclidean space for the ablation variants).

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TermId, Vocabulary};
use crate::error::{Error, Result};
use crate::manifold::{self, exp_map, lorentz_inner, tangent_project, LorentzPoint, TangentVector};
use crate::stats::{Association, AssociationSet};

/// Half-width of the uniform spatial initialization range.
pub(crate) const INIT_RANGE: f64 = 1e-3;

/// Below this arccosh-argument excess two points are treated as coincident
/// and the (direction-free) distance gradient is zero.
const COINCIDENT_GUARD: f64 = 1e-9;

/// Which geometry the embeddings live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Lorentz,
    Euclidean,
}

impl Space {
    pub fn as_str(self) -> &'static str {
        match self {
            Space::Lorentz => "lorentz",
            Space::Euclidean => "euclidean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lorentz" => Ok(Space::Lorentz),
            "euclidean" => Ok(Space::Euclidean),
            other => Err(Error::InvalidConfig(format!("unknown space {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Spatial dimension n; hyperboloid points carry n+1 ambient coordinates.
    pub dim: usize,
    pub batch_size: usize,
    pub negatives_per_pair: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Initial epochs run at `learning_rate / burn_in_lr_divisor` so the
    /// cloud spreads gently before full-rate updates.
    pub burn_in_epochs: usize,
    pub burn_in_lr_divisor: f64,
    pub seed: u64,
    pub space: Space,
    /// The positive pair's own exp(-d) term is left out of the softmax
    /// denominator by default; flip this to get the convention where it is
    /// included.
    pub include_positive_in_denominator: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 20,
            batch_size: 512,
            negatives_per_pair: 50,
            epochs: 300,
            learning_rate: 0.5,
            burn_in_epochs: 10,
            burn_in_lr_divisor: 10.0,
            seed: 0,
            space: Space::Lorentz,
            include_positive_in_denominator: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidConfig("dim must be >= 2".into()));
        }
        if self.batch_size == 0 || self.negatives_per_pair == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("counts must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if self.burn_in_lr_divisor.is_nan() || self.burn_in_lr_divisor <= 0.0 {
            return Err(Error::InvalidConfig("burn-in divisor must be > 0".into()));
        }
        Ok(())
    }
}

/// Point storage for one table; the variant fixes the geometry.
#[derive(Debug, Clone)]
pub(crate) enum Points {
    Lorentz(Vec<LorentzPoint>),
    Euclidean(Vec<Vec<f64>>),
}

impl Points {
    pub(crate) fn len(&self) -> usize {
        match self {
            Points::Lorentz(p) => p.len(),
            Points::Euclidean(p) => p.len(),
        }
    }

    pub(crate) fn distance(&self, i: TermId, j: TermId) -> Result<f64> {
        match self {
            Points::Lorentz(p) => manifold::lorentz_distance(&p[i.index()], &p[j.index()]),
            Points::Euclidean(p) => Ok(euclidean_distance(&p[i.index()], &p[j.index()])),
        }
    }

    pub(crate) fn capacity(&self, i: TermId) -> f64 {
        match self {
            Points::Lorentz(p) => manifold::semantic_capacity(&p[i.index()]),
            Points::Euclidean(p) => manifold::euclidean_capacity(&p[i.index()]),
        }
    }

    fn ambient_len(&self, dim: usize) -> usize {
        match self {
            Points::Lorentz(_) => dim + 1,
            Points::Euclidean(_) => dim,
        }
    }
}

fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// One embedding per vocabulary term, plus the geometry they live in.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vocab: Vocabulary,
    dim: usize,
    points: Points,
}

impl EmbeddingTable {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.len() == 0
    }

    pub fn space(&self) -> Space {
        match self.points {
            Points::Lorentz(_) => Space::Lorentz,
            Points::Euclidean(_) => Space::Euclidean,
        }
    }

    pub fn lorentz_point(&self, id: TermId) -> Result<&LorentzPoint> {
        match &self.points {
            Points::Lorentz(p) => Ok(&p[id.index()]),
            Points::Euclidean(_) => Err(Error::InvalidInput("table is Euclidean".into())),
        }
    }

    pub fn euclidean_point(&self, id: TermId) -> Result<&[f64]> {
        match &self.points {
            Points::Euclidean(p) => Ok(&p[id.index()]),
            Points::Lorentz(_) => Err(Error::InvalidInput("table is hyperbolic".into())),
        }
    }

    pub fn set_lorentz_point(&mut self, id: TermId, point: LorentzPoint) -> Result<()> {
        match &mut self.points {
            Points::Lorentz(p) => {
                p[id.index()] = point;
                Ok(())
            }
            Points::Euclidean(_) => Err(Error::InvalidInput("table is Euclidean".into())),
        }
    }

    /// Geodesic (or Euclidean) distance between two stored terms.
    pub fn distance(&self, i: TermId, j: TermId) -> Result<f64> {
        self.points.distance(i, j)
    }

    /// Capacity readout for one term.
    pub fn capacity(&self, id: TermId) -> f64 {
        self.points.capacity(id)
    }

    pub fn capacities(&self) -> Vec<f64> {
        (0..self.len() as u32)
            .map(|i| self.capacity(TermId(i)))
            .collect()
    }

    /// Worst hyperboloid-constraint violation across the table; zero for
    /// Euclidean tables.
    pub fn max_constraint_residual(&self) -> f64 {
        match &self.points {
            Points::Lorentz(p) => p
                .iter()
                .map(|x| x.constraint_residual().abs())
                .fold(0.0, f64::max),
            Points::Euclidean(_) => 0.0,
        }
    }

    /// Order-sensitive digest of every coordinate bit; equal digests mean
    /// bit-identical tables.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        match &self.points {
            Points::Lorentz(pts) => {
                for p in pts {
                    for c in p.coords() {
                        eat(c.to_bits());
                    }
                }
            }
            Points::Euclidean(pts) => {
                for p in pts {
                    for c in p {
                        eat(c.to_bits());
                    }
                }
            }
        }
        h
    }

    pub(crate) fn points(&self) -> &Points {
        &self.points
    }

    /// Writes `#dim=.. #model=.. #terms=..`, an optional `#config` echo, then
    /// one full-precision row per term.
    pub fn write_file(&self, path: &Path, config: Option<&TrainConfig>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        writeln!(
            out,
            "#dim={} #model={} #terms={}",
            self.dim,
            self.space().as_str(),
            self.len()
        )
        .map_err(io)?;
        if let Some(config) = config {
            let echo = serde_json::to_string(config)
                .map_err(|e| Error::format(Some(path.to_owned()), e.to_string()))?;
            writeln!(out, "#config {echo}").map_err(io)?;
        }
        for (id, term) in self.vocab.iter() {
            write!(out, "{term}").map_err(io)?;
            let coords: &[f64] = match &self.points {
                Points::Lorentz(p) => p[id.index()].coords(),
                Points::Euclidean(p) => &p[id.index()],
            };
            for c in coords {
                write!(out, "\t{c}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<EmbeddingTable> {
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
                "expected #dim=.. #model=.. #terms=.. header",
            )
        };
        let mut dim = None;
        let mut model = None;
        let mut declared_terms = None;
        for field in header.split_whitespace() {
            if let Some(v) = field.strip_prefix("#dim=") {
                dim = v.parse::<usize>().ok();
            } else if let Some(v) = field.strip_prefix("#model=") {
                model = Some(Space::parse(v)?);
            } else if let Some(v) = field.strip_prefix("#terms=") {
                declared_terms = v.parse::<usize>().ok();
            }
        }
        let dim = dim.ok_or_else(bad_header)?;
        let space = model.ok_or_else(bad_header)?;
        let declared_terms = declared_terms.ok_or_else(bad_header)?;
        let expected_cols = match space {
            Space::Lorentz => dim + 1,
            Space::Euclidean => dim,
        };

        let mut terms = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let term = cols.next().unwrap_or("").to_owned();
            let coords: std::result::Result<Vec<f64>, _> = cols.map(|c| c.parse::<f64>()).collect();
            let coords = coords.map_err(|_| {
                Error::format(
                    Some(path.to_owned()),
                    format!("line {}: bad coordinate", lineno + 2),
                )
            })?;
            if coords.len() != expected_cols {
                return Err(Error::format(
                    Some(path.to_owned()),
                    format!(
                        "line {}: expected {expected_cols} coordinates, found {}",
                        lineno + 2,
                        coords.len()
                    ),
                ));
            }
            terms.push(term);
            rows.push(coords);
        }
        if terms.len() != declared_terms {
            return Err(Error::format(
                Some(path.to_owned()),
                format!(
                    "header declared {declared_terms} terms, found {}",
                    terms.len()
                ),
            ));
        }
        let vocab = Vocabulary::new(terms)?;
        let points = match space {
            Space::Lorentz => Points::Lorentz(
                rows.into_iter()
                    .map(LorentzPoint::new)
                    .collect::<Result<Vec<_>>>()?,
            ),
            Space::Euclidean => Points::Euclidean(rows),
        };
        Ok(EmbeddingTable { vocab, dim, points })
    }
}

/// Spatial components drawn uniformly from [-1e-3, 1e-3] with the seeded
/// generator; hyperboloid points get `x0` completed exactly. Bit-identical
/// for a fixed seed.
pub fn init_embeddings(vocab: &Vocabulary, config: &TrainConfig) -> Result<EmbeddingTable> {
    config.validate()?;
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let spatial: Vec<Vec<f64>> = (0..vocab.len())
        .map(|_| {
            (0..config.dim)
                .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
                .collect()
        })
        .collect();
    let points = match config.space {
        Space::Lorentz => Points::Lorentz(
            spatial
                .iter()
                .map(|s| LorentzPoint::from_spatial(s))
                .collect(),
        ),
        Space::Euclidean => Points::Euclidean(spatial),
    };
    Ok(EmbeddingTable {
        vocab: vocab.clone(),
        dim: config.dim,
        points,
    })
}

/// Draws `count` negatives for `x` uniformly with replacement from the terms
/// that are neither `x` nor one of its association partners, then appends `x`
/// itself so the softmax denominator keeps its exp(0) self term.
///
/// When nothing but `x` is available the result degenerates to `[x]` alone.
pub fn sample_negatives(
    x: TermId,
    positives_of_x: &HashSet<TermId>,
    n_terms: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<TermId> {
    let excluded = positives_of_x.len() + 1;
    if n_terms <= excluded {
        log::debug!("negative set for term {} degenerates to itself", x.0);
        return vec![x];
    }
    let mut negatives = Vec::with_capacity(count + 1);
    while negatives.len() < count {
        let candidate = TermId(rng.gen_range(0..n_terms as u32));
        if candidate != x && !positives_of_x.contains(&candidate) {
            negatives.push(candidate);
        }
    }
    negatives.push(x);
    negatives
}

fn check_finite(value: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what()))
    }
}

/// Distance plus a closure-friendly gradient: for the hyperboloid the ambient
/// gradient of `d(a, b) = arccosh(u)` w.r.t. `a` is
/// `(b0, -b1, ..., -bn) / sqrt(u^2 - 1)`; coincident points get a zero
/// gradient since no direction is defined (and none is needed).
fn lorentz_dist_and_scale(a: &LorentzPoint, b: &LorentzPoint) -> Result<(f64, f64)> {
    // Same coordinates, same point: distance exactly 0 and no direction to
    // move in. This keeps the self term of the softmax at exp(0) = 1.
    if a.coords() == b.coords() {
        return Ok((0.0, 0.0));
    }
    let u = -lorentz_inner(a.coords(), b.coords());
    if u < 1.0 - manifold::ON_MANIFOLD_TOL {
        return Err(Error::OffManifold(format!("arccosh argument {u} < 1")));
    }
    let d = u.max(1.0).acosh();
    let scale = if u - 1.0 < COINCIDENT_GUARD {
        0.0
    } else {
        1.0 / (u * u - 1.0).sqrt()
    };
    Ok((d, scale))
}

fn add_grad(
    grads: &mut HashMap<TermId, Vec<f64>>,
    id: TermId,
    len: usize,
    f: impl Fn(usize) -> f64,
) {
    let g = grads.entry(id).or_insert_with(|| vec![0.0; len]);
    for (i, slot) in g.iter_mut().enumerate() {
        *slot += f(i);
    }
}

/// Batch loss and the ambient gradient accumulated per touched term.
///
/// Per pair (x, y, w) with sampled negatives N:
/// `w * (d(x,y) + ln sum_{y' in N} exp(-d(x,y')))`, where the trailing self
/// entry of N contributes exp(0) = 1 and the positive's own term joins the
/// sum only when `include_positive` is set.
pub(crate) fn batch_loss_and_grads(
    points: &Points,
    dim: usize,
    batch: &[Association],
    negatives: &[Vec<TermId>],
    include_positive: bool,
) -> Result<(f64, HashMap<TermId, Vec<f64>>)> {
    assert_eq!(batch.len(), negatives.len());
    let len = points.ambient_len(dim);
    let mut grads: HashMap<TermId, Vec<f64>> = HashMap::new();
    let mut total = 0.0;

    match points {
        Points::Lorentz(pts) => {
            for (assoc, negs) in batch.iter().zip(negatives) {
                let x = &pts[assoc.x.index()];
                let y = &pts[assoc.y.index()];
                let (d_pos, scale_pos) = lorentz_dist_and_scale(x, y)?;
                let e_pos = (-d_pos).exp();
                let mut denom = if include_positive { e_pos } else { 0.0 };
                let mut neg_exp = Vec::with_capacity(negs.len());
                for &n in negs {
                    let (d, _) = lorentz_dist_and_scale(x, &pts[n.index()])?;
                    let e = (-d).exp();
                    neg_exp.push(e);
                    denom += e;
                }
                if denom <= 0.0 {
                    return Err(Error::NonFinite(format!(
                        "softmax denominator for pair ({}, {})",
                        assoc.x.0, assoc.y.0
                    )));
                }
                total = check_finite(total + assoc.weight * (d_pos + denom.ln()), || {
                    format!("loss at pair ({}, {})", assoc.x.0, assoc.y.0)
                })?;

                let coeff_pos =
                    assoc.weight * (1.0 - if include_positive { e_pos / denom } else { 0.0 });
                let c = coeff_pos * scale_pos;
                add_grad(&mut grads, assoc.x, len, |i| {
                    c * if i == 0 {
                        y.coords()[0]
                    } else {
                        -y.coords()[i]
                    }
                });
                add_grad(&mut grads, assoc.y, len, |i| {
                    c * if i == 0 {
                        x.coords()[0]
                    } else {
                        -x.coords()[i]
                    }
                });
                for (&n, &e) in negs.iter().zip(&neg_exp) {
                    let other = &pts[n.index()];
                    let (_, scale) = lorentz_dist_and_scale(x, other)?;
                    let c = -assoc.weight * e / denom * scale;
                    if c == 0.0 {
                        continue;
                    }
                    add_grad(&mut grads, assoc.x, len, |i| {
                        c * if i == 0 {
                            other.coords()[0]
                        } else {
                            -other.coords()[i]
                        }
                    });
                    add_grad(&mut grads, n, len, |i| {
                        c * if i == 0 {
                            x.coords()[0]
                        } else {
                            -x.coords()[i]
                        }
                    });
                }
            }
        }
        Points::Euclidean(pts) => {
            for (assoc, negs) in batch.iter().zip(negatives) {
                let x = &pts[assoc.x.index()];
                let y = &pts[assoc.y.index()];
                let d_pos = euclidean_distance(x, y);
                let e_pos = (-d_pos).exp();
                let mut denom = if include_positive { e_pos } else { 0.0 };
                let mut neg_exp = Vec::with_capacity(negs.len());
                for &n in negs {
                    let e = (-euclidean_distance(x, &pts[n.index()])).exp();
                    neg_exp.push(e);
                    denom += e;
                }
                if denom <= 0.0 {
                    return Err(Error::NonFinite(format!(
                        "softmax denominator for pair ({}, {})",
                        assoc.x.0, assoc.y.0
                    )));
                }
                total = check_finite(total + assoc.weight * (d_pos + denom.ln()), || {
                    format!("loss at pair ({}, {})", assoc.x.0, assoc.y.0)
                })?;

                let coeff_pos =
                    assoc.weight * (1.0 - if include_positive { e_pos / denom } else { 0.0 });
                if d_pos > 1e-12 {
                    let c = coeff_pos / d_pos;
                    add_grad(&mut grads, assoc.x, len, |i| c * (x[i] - y[i]));
                    add_grad(&mut grads, assoc.y, len, |i| c * (y[i] - x[i]));
                }
                for (&n, &e) in negs.iter().zip(&neg_exp) {
                    let other = &pts[n.index()];
                    let d = euclidean_distance(x, other);
                    if d <= 1e-12 {
                        continue;
                    }
                    let c = -assoc.weight * e / denom / d;
                    add_grad(&mut grads, assoc.x, len, |i| c * (x[i] - other[i]));
                    add_grad(&mut grads, n, len, |i| c * (other[i] - x[i]));
                }
            }
        }
    }
    Ok((total, grads))
}

/// Weighted negative-sampling loss of one batch under fixed negatives.
pub fn loss(
    batch: &[Association],
    table: &EmbeddingTable,
    negatives: &[Vec<TermId>],
    include_positive: bool,
) -> Result<f64> {
    let (value, _) =
        batch_loss_and_grads(&table.points, table.dim, batch, negatives, include_positive)?;
    Ok(value)
}

/// Batch loss plus the ambient-space gradient accumulated per touched term.
pub fn loss_gradients(
    batch: &[Association],
    table: &EmbeddingTable,
    negatives: &[Vec<TermId>],
    include_positive: bool,
) -> Result<(f64, HashMap<TermId, Vec<f64>>)> {
    batch_loss_and_grads(&table.points, table.dim, batch, negatives, include_positive)
}

/// The Riemannian gradient at `point` for an ambient gradient `h`: rescale by
/// the inverse metric (negate the 0th component) and project onto the tangent
/// space.
pub fn riemannian_gradient(point: &LorentzPoint, ambient: &[f64]) -> TangentVector {
    let mut rescaled = ambient.to_vec();
    rescaled[0] = -rescaled[0];
    tangent_project(point, &rescaled)
}

pub(crate) fn apply_updates(
    points: &mut Points,
    grads: &HashMap<TermId, Vec<f64>>,
    lr: f64,
    trainable: impl Fn(TermId) -> bool,
) -> Result<()> {
    for (&id, grad) in grads {
        if !trainable(id) {
            continue;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient for term {}", id.0)));
        }
        match points {
            Points::Lorentz(pts) => {
                let point = &pts[id.index()];
                // Step -lr along the Riemannian gradient; projection is
                // linear, so the scaling happens on the ambient vector.
                let step: Vec<f64> = grad
                    .iter()
                    .enumerate()
                    .map(|(i, g)| if i == 0 { lr * g } else { -lr * g })
                    .collect();
                let tangent = tangent_project(point, &step);
                pts[id.index()] = exp_map(point, &tangent)?;
            }
            Points::Euclidean(pts) => {
                let point = &mut pts[id.index()];
                for (slot, g) in point.iter_mut().zip(grad) {
                    *slot -= lr * g;
                }
            }
        }
    }
    Ok(())
}

/// One SGD step over a batch with the negatives given explicitly; returns the
/// batch loss evaluated before the update. Only `trainable` points move.
pub(crate) fn sgd_step_masked(
    table: &mut EmbeddingTable,
    batch: &[Association],
    negatives: &[Vec<TermId>],
    lr: f64,
    include_positive: bool,
    trainable: impl Fn(TermId) -> bool,
) -> Result<f64> {
    let (value, grads) =
        batch_loss_and_grads(&table.points, table.dim, batch, negatives, include_positive)?;
    apply_updates(&mut table.points, &grads, lr, trainable)?;
    Ok(value)
}

/// One SGD step over a batch with explicitly supplied negatives.
pub fn sgd_step_with_negatives(
    table: &mut EmbeddingTable,
    batch: &[Association],
    negatives: &[Vec<TermId>],
    lr: f64,
    include_positive: bool,
) -> Result<f64> {
    sgd_step_masked(table, batch, negatives, lr, include_positive, |_| true)
}

/// One SGD step over a batch, sampling fresh negatives for every pair.
pub fn sgd_step(
    table: &mut EmbeddingTable,
    batch: &[Association],
    positives: &[HashSet<TermId>],
    lr: f64,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n_terms = table.len();
    let negatives: Vec<Vec<TermId>> = batch
        .iter()
        .map(|a| {
            sample_negatives(
                a.x,
                &positives[a.x.index()],
                n_terms,
                config.negatives_per_pair,
                rng,
            )
        })
        .collect();
    sgd_step_with_negatives(
        table,
        batch,
        &negatives,
        lr,
        config.include_positive_in_denominator,
    )
}

/// Per-epoch training log entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

pub fn write_training_log(path: &Path, log: &[EpochRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(out, "epoch,loss,lr").map_err(io)?;
    for r in log {
        writeln!(out, "{},{},{}", r.epoch, r.loss, r.lr).map_err(io)?;
    }
    Ok(())
}

pub struct TrainOutcome {
    pub table: EmbeddingTable,
    pub log: Vec<EpochRecord>,
}

/// Full offline optimization: burn-in epochs at a reduced rate, then the main
/// schedule; pairs are reshuffled and negatives resampled every epoch with
/// the seeded generator, so a fixed seed reproduces the table bit for bit.
pub fn train_offline(
    associations: &AssociationSet,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if associations.is_empty() {
        return Err(Error::EmptyAssociations);
    }
    for a in associations.entries() {
        if a.x.index() >= vocab.len() || a.y.index() >= vocab.len() {
            return Err(Error::InvalidInput(format!(
                "association ({}, {}) references terms outside the vocabulary",
                a.x.0, a.y.0
            )));
        }
        if a.weight.is_nan() || a.weight <= 0.0 {
            return Err(Error::InvalidInput(
                "association weights must be > 0".into(),
            ));
        }
    }

    let mut table = init_embeddings(vocab, config)?;
    let positives = associations.partner_sets(vocab.len());
    for (index, partners) in positives.iter().enumerate() {
        if partners.len() + 1 >= vocab.len() && !partners.is_empty() {
            log::warn!(
                "term {:?} is associated with every other term; it trains without negatives",
                vocab.term(TermId(index as u32))
            );
        }
    }
    let mut pairs = associations.entries().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1); // keep the shuffling stream clear of the init stream
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = if epoch < config.burn_in_epochs {
            config.learning_rate / config.burn_in_lr_divisor
        } else {
            config.learning_rate
        };
        pairs.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in pairs.chunks(config.batch_size) {
            epoch_loss += sgd_step(&mut table, batch, &positives, lr, config, &mut rng)?;
        }
        log.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            lr,
        });
    }
    Ok(TrainOutcome { table, log })
}
