//! Geometry of the hyperboloid model H^n and the Poincaré ball B^n.
//!
//! Points live on the upper sheet of the two-sheeted hyperboloid
//! `x0^2 - x1^2 - ... - xn^2 = 1, x0 > 0`, where optimization is stable, and
//! are mapped into the open unit ball when a norm is to be read off. The two
//! models are isometric; the distance functions are cross-checked against
//! each other in the tests.

use crate::error::{Error, Result};

/// Tolerance for the hyperboloid constraint on accepted inputs.
pub const ON_MANIFOLD_TOL: f64 = 1e-6;

/// Reciprocal-norm cap for points at (or numerically at) the ball origin.
pub const CAPACITY_CAP: f64 = 1e12;

/// Lorentzian inner product `<a, b> = -a0*b0 + sum_i ai*bi`.
pub fn lorentz_inner(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = -a[0] * b[0];
    for i in 1..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A point on H^n, stored as the full ambient vector `(x0, x1, ..., xn)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzPoint {
    coords: Vec<f64>,
}

impl LorentzPoint {
    /// Accepts an ambient vector, checking the hyperboloid constraint.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::OffManifold(
                "need at least one spatial component".into(),
            ));
        }
        let p = LorentzPoint { coords };
        let residual = p.constraint_residual();
        if residual.abs() > ON_MANIFOLD_TOL || p.coords[0] <= 0.0 {
            return Err(Error::OffManifold(format!(
                "constraint residual {residual:.3e}, x0 = {}",
                p.coords[0]
            )));
        }
        Ok(p)
    }

    /// Completes `x0 = sqrt(1 + |spatial|^2)`, which lands exactly on the sheet.
    pub fn from_spatial(spatial: &[f64]) -> Self {
        let sq: f64 = spatial.iter().map(|x| x * x).sum();
        let mut coords = Vec::with_capacity(spatial.len() + 1);
        coords.push((1.0 + sq).sqrt());
        coords.extend_from_slice(spatial);
        LorentzPoint { coords }
    }

    /// The apex `(1, 0, ..., 0)`, which maps to the ball origin.
    pub fn base_point(spatial_dim: usize) -> Self {
        let mut coords = vec![0.0; spatial_dim + 1];
        coords[0] = 1.0;
        LorentzPoint { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn time(&self) -> f64 {
        self.coords[0]
    }

    pub fn spatial(&self) -> &[f64] {
        &self.coords[1..]
    }

    pub fn spatial_dim(&self) -> usize {
        self.coords.len() - 1
    }

    /// `x0^2 - sum_i xi^2 - 1`; zero on the manifold.
    pub fn constraint_residual(&self) -> f64 {
        let spatial_sq: f64 = self.spatial().iter().map(|x| x * x).sum();
        self.coords[0] * self.coords[0] - spatial_sq - 1.0
    }

    /// Recomputes `x0` from the spatial components, absorbing round-off.
    pub fn renormalize(&mut self) {
        let sq: f64 = self.spatial().iter().map(|x| x * x).sum();
        self.coords[0] = (1.0 + sq).sqrt();
    }
}

/// A point strictly inside the open unit ball B^n.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePoint {
    coords: Vec<f64>,
}

impl PoincarePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if euclidean_norm(&coords) >= 1.0 {
            return Err(Error::OutsideBall);
        }
        Ok(PoincarePoint { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        euclidean_norm(&self.coords)
    }
}

/// A vector in the tangent space of H^n at `at`: Lorentz-orthogonal to its base.
#[derive(Debug, Clone)]
pub struct TangentVector {
    at: LorentzPoint,
    coords: Vec<f64>,
}

impl TangentVector {
    pub fn at(&self) -> &LorentzPoint {
        &self.at
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// `sqrt(<v, v>)`; non-negative on tangent spaces of H^n.
    pub fn lorentz_norm(&self) -> f64 {
        lorentz_inner(&self.coords, &self.coords).max(0.0).sqrt()
    }
}

/// Geodesic distance `arccosh(x0*y0 - sum_i xi*yi)` on the hyperboloid.
///
/// The arccosh argument is clamped to 1 from below to absorb round-off;
/// arguments below `1 - 1e-6` indicate a genuinely off-manifold input and
/// are rejected.
pub fn lorentz_distance(x: &LorentzPoint, y: &LorentzPoint) -> Result<f64> {
    // Identical coordinates are the same point; skip the arccosh so the
    // round-off in <x, x> cannot surface as a spurious ~1e-8 distance.
    if x.coords == y.coords {
        return Ok(0.0);
    }
    let arg = -lorentz_inner(x.coords(), y.coords());
    if arg < 1.0 - ON_MANIFOLD_TOL {
        return Err(Error::OffManifold(format!("arccosh argument {arg} < 1")));
    }
    Ok(arg.max(1.0).acosh())
}

/// Geodesic distance on the Poincaré ball:
/// `arccosh(1 + 2|x-y|^2 / ((1-|x|^2)(1-|y|^2)))`.
pub fn poincare_distance(x: &PoincarePoint, y: &PoincarePoint) -> Result<f64> {
    let xs: f64 = x.coords().iter().map(|v| v * v).sum();
    let ys: f64 = y.coords().iter().map(|v| v * v).sum();
    if xs >= 1.0 || ys >= 1.0 {
        return Err(Error::OutsideBall);
    }
    let diff_sq: f64 = x
        .coords()
        .iter()
        .zip(y.coords())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let arg = 1.0 + 2.0 * diff_sq / ((1.0 - xs) * (1.0 - ys));
    Ok(arg.max(1.0).acosh())
}

/// Diffeomorphism onto the ball: `p_i = x_i / (x0 + 1)`. Distance-preserving.
pub fn to_poincare(x: &LorentzPoint) -> PoincarePoint {
    let denom = x.time() + 1.0;
    PoincarePoint {
        coords: x.spatial().iter().map(|v| v / denom).collect(),
    }
}

/// Inverse of [`to_poincare`]: `x0 = (1+|p|^2)/(1-|p|^2)`, `x_i = 2 p_i/(1-|p|^2)`.
pub fn to_lorentz(p: &PoincarePoint) -> Result<LorentzPoint> {
    let sq: f64 = p.coords().iter().map(|v| v * v).sum();
    if sq >= 1.0 {
        return Err(Error::OutsideBall);
    }
    let denom = 1.0 - sq;
    let mut coords = Vec::with_capacity(p.coords().len() + 1);
    coords.push((1.0 + sq) / denom);
    coords.extend(p.coords().iter().map(|v| 2.0 * v / denom));
    Ok(LorentzPoint { coords })
}

/// Projects an ambient vector onto the tangent space at `x`:
/// `proj_x(h) = h + <x, h> * x`.
pub fn tangent_project(x: &LorentzPoint, h: &[f64]) -> TangentVector {
    debug_assert_eq!(h.len(), x.coords().len());
    let inner = lorentz_inner(x.coords(), h);
    let coords = h
        .iter()
        .zip(x.coords())
        .map(|(hi, xi)| hi + inner * xi)
        .collect();
    TangentVector {
        at: x.clone(),
        coords,
    }
}

/// Exponential map: `exp_x(v) = cosh(|v|) x + sinh(|v|) v/|v|` with the
/// Lorentzian norm `|v| = sqrt(<v, v>)`. Steps of norm below 1e-12 return `x`.
pub fn exp_map(x: &LorentzPoint, v: &TangentVector) -> Result<LorentzPoint> {
    let inner = lorentz_inner(x.coords(), v.coords());
    let scale = euclidean_norm(x.coords()) * euclidean_norm(v.coords());
    if inner.abs() > ON_MANIFOLD_TOL * scale.max(1.0) {
        return Err(Error::NotTangent(format!("<x, v> = {inner:.3e}")));
    }
    let norm_sq = lorentz_inner(v.coords(), v.coords());
    if norm_sq < 0.0 && norm_sq.abs() > ON_MANIFOLD_TOL {
        return Err(Error::NotTangent(format!("<v, v> = {norm_sq:.3e} < 0")));
    }
    let norm = norm_sq.max(0.0).sqrt();
    if norm < 1e-12 {
        return Ok(x.clone());
    }
    if !norm.is_finite() {
        return Err(Error::NonFinite("exponential-map step length".into()));
    }
    let (sinh, cosh) = (norm.sinh(), norm.cosh());
    let coords = x
        .coords()
        .iter()
        .zip(v.coords())
        .map(|(xi, vi)| cosh * xi + sinh * vi / norm)
        .collect();
    let mut out = LorentzPoint { coords };
    out.renormalize();
    Ok(out)
}

/// Semantic capacity readout: the reciprocal Poincaré norm `1 / |p(x)|`,
/// capped at [`CAPACITY_CAP`] for points at the origin. Larger means a
/// broader meaning scope.
pub fn semantic_capacity(x: &LorentzPoint) -> f64 {
    let norm = euclidean_norm(x.spatial()) / (x.time() + 1.0);
    1.0 / norm.max(1.0 / CAPACITY_CAP)
}

/// Reciprocal Euclidean norm with the same origin cap, for flat-space tables.
pub fn euclidean_capacity(coords: &[f64]) -> f64 {
    1.0 / euclidean_norm(coords).max(1.0 / CAPACITY_CAP)
}
