//! Pure kernels for Lorentzian, Euclidean, and hyperbolic distances,
//! light-cone membership, and density-adaptive horizons.
//!
//! Everything here is plain `f64` and reentrant. The attention path in
//! [`crate::model`] rebuilds the same formulas out of differentiable tensor
//! ops; these kernels are the reference the model is tested against.

use thiserror::Error;

/// Guard added under square roots and to denominators.
pub const EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("spatial dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("level index {0} out of range (expected 0..{1})")]
    LevelOutOfRange(usize, usize),
    #[error("k-NN density needs more than k={k} points, got {n}")]
    TooFewPoints { k: usize, n: usize },
    #[error("Poincaré ball input must be finite")]
    NonFiniteBallVector,
}

/// An event `(t, x)` with one temporal and `d` spatial coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianEvent {
    pub t: f64,
    pub x: Vec<f64>,
}

impl LorentzianEvent {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        LorentzianEvent { t, x }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Separation class under the Minkowski quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Separation {
    Timelike,
    Spacelike,
    Lightlike,
}

/// Cone geometry constants: per-level base horizons, density modulation
/// strength, and the past/spacelike penalties.
#[derive(Debug, Clone)]
pub struct ConeParams {
    pub base_horizons: [f64; 3],
    pub horizon_scale: f64,
    pub past_penalty: f64,
    pub spacelike_penalty: f64,
    pub eps: f64,
}

impl Default for ConeParams {
    fn default() -> Self {
        ConeParams {
            base_horizons: [0.90, 0.60, 0.30],
            horizon_scale: 0.3,
            past_penalty: 10.0,
            spacelike_penalty: 5.0,
            eps: EPS,
        }
    }
}

impl ConeParams {
    pub fn validate(&self) {
        assert!(
            self.base_horizons[0] > self.base_horizons[1]
                && self.base_horizons[1] > self.base_horizons[2],
            "base horizons must be strictly decreasing"
        );
        assert!(self.past_penalty > 0.0 && self.spacelike_penalty > 0.0);
    }
}

/// Minkowski inner product with signature `(+, -, -, ...)`:
/// `<a, b>_L = a.t * b.t - dot(a.x, b.x)`.
pub fn minkowski_inner(a: &LorentzianEvent, b: &LorentzianEvent) -> Result<f64, GeometryError> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimMismatch(a.dim(), b.dim()));
    }
    let spatial: f64 = a.x.iter().zip(&b.x).map(|(p, q)| p * q).sum();
    Ok(a.t * b.t - spatial)
}

fn interval(a: &LorentzianEvent, b: &LorentzianEvent) -> Result<f64, GeometryError> {
    let delta = LorentzianEvent::new(a.t - b.t, a.x.iter().zip(&b.x).map(|(p, q)| p - q).collect());
    if a.dim() != b.dim() {
        return Err(GeometryError::DimMismatch(a.dim(), b.dim()));
    }
    minkowski_inner(&delta, &delta)
}

/// Signed proper time: `sign(q) * sqrt(|q| + eps)` with `q = <Δ,Δ>_L`.
/// `sign(0) := 0`, so coincident events are at distance exactly zero.
pub fn proper_time_distance(
    a: &LorentzianEvent,
    b: &LorentzianEvent,
) -> Result<f64, GeometryError> {
    let q = interval(a, b)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    Ok(q.signum() * (q.abs() + EPS).sqrt())
}

/// Separation class of a pair of events, with tolerance `1e-9` around the
/// light cone.
pub fn classify(a: &LorentzianEvent, b: &LorentzianEvent) -> Result<Separation, GeometryError> {
    const TOL: f64 = 1e-9;
    let q = interval(a, b)?;
    Ok(if q > TOL {
        Separation::Timelike
    } else if q < -TOL {
        Separation::Spacelike
    } else {
        Separation::Lightlike
    })
}

/// Whether `x` lies in the future light cone of `p`: `x.t > p.t` and the
/// separation is non-spacelike.
pub fn in_future_cone(p: &LorentzianEvent, x: &LorentzianEvent) -> Result<bool, GeometryError> {
    let q = interval(x, p)?;
    Ok(x.t > p.t && q >= 0.0)
}

/// Density-adaptive horizon `h_j = w_j + alpha * (rho - 0.5)` for hierarchy
/// level `j`.
pub fn adaptive_horizon(
    level_index: usize,
    rho: f64,
    params: &ConeParams,
) -> Result<f64, GeometryError> {
    if level_index >= params.base_horizons.len() {
        return Err(GeometryError::LevelOutOfRange(
            level_index,
            params.base_horizons.len(),
        ));
    }
    Ok(params.base_horizons[level_index] + params.horizon_scale * (rho - 0.5))
}

/// Cone membership score
/// `h - r/(|tau|+eps) - past_penalty*ReLU(-tau) - spacelike_penalty*ReLU(r-|tau|)`
/// with `tau = feature.t - slot.t` and `r = ||feature.x - slot.x||`.
pub fn cone_score(
    feature: &LorentzianEvent,
    slot: &LorentzianEvent,
    h: f64,
    params: &ConeParams,
) -> Result<f64, GeometryError> {
    if feature.dim() != slot.dim() {
        return Err(GeometryError::DimMismatch(feature.dim(), slot.dim()));
    }
    let tau = feature.t - slot.t;
    let r = feature
        .x
        .iter()
        .zip(&slot.x)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    Ok(h - r / (tau.abs() + params.eps)
        - params.past_penalty * (-tau).max(0.0)
        - params.spacelike_penalty * (r - tau.abs()).max(0.0))
}

/// Poincaré ball distance
/// `arcosh(1 + 2||u-v||^2 / ((1-||u||^2)(1-||v||^2)))`.
/// Inputs are clamped to norm `<= 1 - 1e-5` before evaluation.
pub fn poincare_distance(u: &[f64], v: &[f64]) -> Result<f64, GeometryError> {
    if u.len() != v.len() {
        return Err(GeometryError::DimMismatch(u.len(), v.len()));
    }
    if !u.iter().chain(v).all(|c| c.is_finite()) {
        return Err(GeometryError::NonFiniteBallVector);
    }
    const MAX_NORM: f64 = 1.0 - 1e-5;
    let clamp = |p: &[f64]| -> Vec<f64> {
        let n = p.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > MAX_NORM {
            p.iter().map(|c| c * MAX_NORM / n).collect()
        } else {
            p.to_vec()
        }
    };
    let uc = clamp(u);
    let vc = clamp(v);
    let nu = uc.iter().map(|c| c * c).sum::<f64>();
    let nv = vc.iter().map(|c| c * c).sum::<f64>();
    let d2: f64 = uc.iter().zip(&vc).map(|(p, q)| (p - q) * (p - q)).sum();
    let arg = 1.0 + 2.0 * d2 / ((1.0 - nu) * (1.0 - nv));
    Ok(arg.acosh())
}

/// Raw and normalized k-NN density of a 2-D point cloud.
///
/// Raw value: mean Euclidean distance to the `k` nearest neighbors
/// (excluding self). Normalized `rho`: per-scene min-max rescale into
/// `[0, 1]`; a degenerate scene where every raw value coincides maps to 0.5.
pub fn knn_density(points: &[[f64; 2]], k: usize) -> Result<KnnDensity, GeometryError> {
    let n = points.len();
    if n <= k {
        return Err(GeometryError::TooFewPoints { k, n });
    }
    let mut raw = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n - 1);
    for (i, p) in points.iter().enumerate() {
        dists.clear();
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let dx = p[0] - q[0];
            let dy = p[1] - q[1];
            dists.push((dx * dx + dy * dy).sqrt());
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        raw.push(dists[..k].iter().sum::<f64>() / k as f64);
    }
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rho = if max - min < 1e-12 {
        vec![0.5; n]
    } else {
        raw.iter().map(|v| (v - min) / (max - min)).collect()
    };
    Ok(KnnDensity { raw, rho })
}

/// Output of [`knn_density`].
#[derive(Debug, Clone)]
pub struct KnnDensity {
    pub raw: Vec<f64>,
    pub rho: Vec<f64>,
}
