//! Geometry kernel for latent manifolds.
//!
//! Points and tangent vectors are plain `f64` slices in ambient coordinates.
//! Supported manifolds:
//! - `Euclidean`: flat `R^n`.
//! - `Sphere`: unit hypersphere `S^n` embedded in `R^(n+1)`.
//! - `Lorentz`: hyperboloid `{x : <x,x>_L = -1/c, x_0 > 0}` in `R^(n+1)`, with
//!   Minkowski product `<u,v>_L = -u_0 v_0 + sum_i u_i v_i`.
//! - `Product`: concatenation of factors, e.g. the torus `S^1 x S^1`.
//!
//! Lorentz points can be mapped to the Poincare disk for plotting with
//! [`lorentz_to_poincare`].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points with `<x,y>` below `-1 + ANTIPODAL_TOL` have no unique sphere logarithm.
pub const ANTIPODAL_TOL: f64 = 1e-10;

/// Upper bound on `sqrt(c) * |v|_L` in the hyperboloid exponential map. Keeps
/// `cosh` finite for very large noise draws.
pub const MAX_LORENTZ_ANGLE: f64 = 40.0;

pub const SPHERE_TOL: f64 = 1e-9;
pub const LORENTZ_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("zero vector cannot be projected onto the sphere")]
    DegenerateInput,
    #[error("logarithm is not unique for antipodal points")]
    NonUniqueLog,
    #[error("uniform sampling is undefined on non-compact manifold {0:?}")]
    UnsupportedSampling(ManifoldKind),
    #[error("expected vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid manifold: {0}")]
    InvalidSpec(String),
    #[error("point violates manifold constraint by {0:e}")]
    OffManifold(f64),
    #[error("non-finite coordinates")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Euclidean,
    Sphere,
    Product,
    Lorentz,
}

/// Which geometry latents live on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ManifoldSpec {
    Euclidean { dim: usize },
    Sphere { ambient_dim: usize },
    Lorentz { ambient_dim: usize, curvature: f64 },
    Product { factors: Vec<ManifoldSpec> },
}

impl ManifoldSpec {
    pub fn euclidean(dim: usize) -> Self {
        ManifoldSpec::Euclidean { dim }
    }

    /// `S^n` embedded in `R^(n+1)`.
    pub fn sphere(intrinsic_dim: usize) -> Self {
        ManifoldSpec::Sphere {
            ambient_dim: intrinsic_dim + 1,
        }
    }

    /// `H^n` of curvature `-c` embedded in `R^(n+1)`.
    pub fn lorentz(intrinsic_dim: usize, curvature: f64) -> Self {
        ManifoldSpec::Lorentz {
            ambient_dim: intrinsic_dim + 1,
            curvature,
        }
    }

    pub fn product(factors: Vec<ManifoldSpec>) -> Self {
        ManifoldSpec::Product { factors }
    }

    /// `S^1 x S^1` with ambient dimension 4.
    pub fn torus() -> Self {
        Self::product(vec![Self::sphere(1), Self::sphere(1)])
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            ManifoldSpec::Euclidean { .. } => ManifoldKind::Euclidean,
            ManifoldSpec::Sphere { .. } => ManifoldKind::Sphere,
            ManifoldSpec::Lorentz { .. } => ManifoldKind::Lorentz,
            ManifoldSpec::Product { .. } => ManifoldKind::Product,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ManifoldSpec::Euclidean { dim } => *dim,
            ManifoldSpec::Sphere { ambient_dim } | ManifoldSpec::Lorentz { ambient_dim, .. } => {
                *ambient_dim
            }
            ManifoldSpec::Product { factors } => factors.iter().map(|f| f.ambient_dim()).sum(),
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            ManifoldSpec::Euclidean { dim } => *dim,
            ManifoldSpec::Sphere { ambient_dim } | ManifoldSpec::Lorentz { ambient_dim, .. } => {
                ambient_dim.saturating_sub(1)
            }
            ManifoldSpec::Product { factors } => factors.iter().map(|f| f.intrinsic_dim()).sum(),
        }
    }

    /// Curvature parameter `c` of a Lorentz manifold.
    pub fn curvature(&self) -> Option<f64> {
        match self {
            ManifoldSpec::Lorentz { curvature, .. } => Some(*curvature),
            _ => None,
        }
    }

    /// Returns a copy with every Lorentz curvature replaced by `c`.
    pub fn with_curvature(&self, c: f64) -> Self {
        match self {
            ManifoldSpec::Lorentz { ambient_dim, .. } => ManifoldSpec::Lorentz {
                ambient_dim: *ambient_dim,
                curvature: c,
            },
            ManifoldSpec::Product { factors } => ManifoldSpec::Product {
                factors: factors.iter().map(|f| f.with_curvature(c)).collect(),
            },
            other => other.clone(),
        }
    }

    pub fn is_compact(&self) -> bool {
        match self {
            ManifoldSpec::Sphere { .. } => true,
            ManifoldSpec::Euclidean { .. } | ManifoldSpec::Lorentz { .. } => false,
            ManifoldSpec::Product { factors } => factors.iter().all(|f| f.is_compact()),
        }
    }

    /// True for the sphere and products made only of spheres.
    pub fn is_spherical(&self) -> bool {
        self.is_compact()
    }

    pub fn validate(&self) -> Result<(), ManifoldError> {
        match self {
            ManifoldSpec::Euclidean { dim } => {
                if *dim == 0 {
                    return Err(ManifoldError::InvalidSpec(
                        "euclidean dim must be positive".into(),
                    ));
                }
            }
            ManifoldSpec::Sphere { ambient_dim } => {
                if *ambient_dim < 2 {
                    return Err(ManifoldError::InvalidSpec(
                        "sphere needs ambient dim >= 2".into(),
                    ));
                }
            }
            ManifoldSpec::Lorentz {
                ambient_dim,
                curvature,
            } => {
                if *ambient_dim < 2 {
                    return Err(ManifoldError::InvalidSpec(
                        "lorentz needs ambient dim >= 2".into(),
                    ));
                }
                if !(curvature.is_finite() && *curvature > 0.0) {
                    return Err(ManifoldError::InvalidSpec(format!(
                        "lorentz curvature must be positive, got {curvature}"
                    )));
                }
            }
            ManifoldSpec::Product { factors } => {
                if factors.is_empty() {
                    return Err(ManifoldError::InvalidSpec("product needs factors".into()));
                }
                for f in factors {
                    f.validate()?;
                }
            }
        }
        Ok(())
    }

    fn check_len(&self, v: &[f64]) -> Result<(), ManifoldError> {
        let expected = self.ambient_dim();
        if v.len() != expected {
            return Err(ManifoldError::DimensionMismatch {
                expected,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Base point: origin, north pole `e_0`, or hyperboloid apex `(1/sqrt c, 0, ...)`.
    pub fn base_point(&self) -> Vec<f64> {
        match self {
            ManifoldSpec::Euclidean { dim } => vec![0.0; *dim],
            ManifoldSpec::Sphere { ambient_dim } => {
                let mut x = vec![0.0; *ambient_dim];
                x[0] = 1.0;
                x
            }
            ManifoldSpec::Lorentz {
                ambient_dim,
                curvature,
            } => {
                let mut x = vec![0.0; *ambient_dim];
                x[0] = 1.0 / curvature.sqrt();
                x
            }
            ManifoldSpec::Product { factors } => {
                factors.iter().flat_map(|f| f.base_point()).collect()
            }
        }
    }

    /// Nearest point on the manifold. Lorentz keeps the spatial part and
    /// recomputes `x_0 = sqrt(1/c + |x_{1:}|^2)`.
    pub fn project(&self, ambient: &[f64]) -> Result<Vec<f64>, ManifoldError> {
        self.check_len(ambient)?;
        if ambient.iter().any(|a| !a.is_finite()) {
            return Err(ManifoldError::NonFinite);
        }
        match self {
            ManifoldSpec::Euclidean { .. } => Ok(ambient.to_vec()),
            ManifoldSpec::Sphere { .. } => {
                let n = norm2(ambient);
                if n == 0.0 {
                    return Err(ManifoldError::DegenerateInput);
                }
                Ok(ambient.iter().map(|a| a / n).collect())
            }
            ManifoldSpec::Lorentz { curvature, .. } => {
                let mut x = ambient.to_vec();
                x[0] = lorentz_time(&ambient[1..], *curvature);
                Ok(x)
            }
            ManifoldSpec::Product { factors } => {
                let mut out = Vec::with_capacity(ambient.len());
                for (f, r) in factors.iter().zip(self.factor_ranges()) {
                    out.extend(f.project(&ambient[r])?);
                }
                Ok(out)
            }
        }
    }

    /// Magnitude of the manifold constraint violation at `x` (0 for Euclidean).
    pub fn constraint_violation(&self, x: &[f64]) -> f64 {
        match self {
            ManifoldSpec::Euclidean { .. } => 0.0,
            ManifoldSpec::Sphere { .. } => (norm2(x) - 1.0).abs(),
            ManifoldSpec::Lorentz { curvature, .. } => {
                if x[0] > 0.0 {
                    (minkowski(x, x) + 1.0 / curvature).abs()
                } else {
                    f64::INFINITY
                }
            }
            ManifoldSpec::Product { factors } => factors
                .iter()
                .zip(self.factor_ranges())
                .map(|(f, r)| f.constraint_violation(&x[r]))
                .fold(0.0, f64::max),
        }
    }

    /// Checks the point invariant at the stated tolerances.
    pub fn check_point(&self, x: &[f64]) -> Result<(), ManifoldError> {
        self.check_len(x)?;
        if x.iter().any(|a| !a.is_finite()) {
            return Err(ManifoldError::NonFinite);
        }
        match self {
            ManifoldSpec::Product { factors } => {
                for (f, r) in factors.iter().zip(self.factor_ranges()) {
                    f.check_point(&x[r])?;
                }
                Ok(())
            }
            _ => {
                let tol = match self.kind() {
                    ManifoldKind::Sphere => SPHERE_TOL,
                    _ => LORENTZ_TOL,
                };
                let viol = self.constraint_violation(x);
                if viol > tol {
                    Err(ManifoldError::OffManifold(viol))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Non-tangency of `v` at `x`: `|<x,v>|` (sphere) or `|<x,v>_L|` (Lorentz).
    pub fn tangent_violation(&self, x: &[f64], v: &[f64]) -> f64 {
        match self {
            ManifoldSpec::Euclidean { .. } => 0.0,
            ManifoldSpec::Sphere { .. } => dot(x, v).abs(),
            ManifoldSpec::Lorentz { .. } => minkowski(x, v).abs(),
            ManifoldSpec::Product { factors } => factors
                .iter()
                .zip(self.factor_ranges())
                .map(|(f, r)| f.tangent_violation(&x[r.clone()], &v[r]))
                .fold(0.0, f64::max),
        }
    }

    /// Orthogonal projection of an ambient vector onto the tangent space at `x`.
    pub fn proj_tangent(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            ManifoldSpec::Euclidean { .. } => v.to_vec(),
            ManifoldSpec::Sphere { .. } => {
                let a = dot(x, v);
                v.iter().zip(x).map(|(vi, xi)| vi - a * xi).collect()
            }
            ManifoldSpec::Lorentz { curvature, .. } => {
                let a = curvature * minkowski(x, v);
                v.iter().zip(x).map(|(vi, xi)| vi + a * xi).collect()
            }
            ManifoldSpec::Product { factors } => {
                self.per_factor2(factors, x, v, |f, x, v| f.proj_tangent(x, v))
            }
        }
    }

    /// Riemannian inner product of tangent vectors at `x`.
    pub fn inner(&self, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        match self {
            ManifoldSpec::Euclidean { .. } | ManifoldSpec::Sphere { .. } => dot(u, v),
            ManifoldSpec::Lorentz { .. } => minkowski(u, v),
            ManifoldSpec::Product { factors } => factors
                .iter()
                .zip(self.factor_ranges())
                .map(|(f, r)| f.inner(&x[r.clone()], &u[r.clone()], &v[r]))
                .sum(),
        }
    }

    pub fn norm(&self, x: &[f64], v: &[f64]) -> f64 {
        self.inner(x, v, v).max(0.0).sqrt()
    }

    pub fn exp_map(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            ManifoldSpec::Euclidean { .. } => x.iter().zip(v).map(|(a, b)| a + b).collect(),
            ManifoldSpec::Sphere { .. } => {
                let nv = norm2(v);
                if nv == 0.0 {
                    return x.to_vec();
                }
                let (s, c) = nv.sin_cos();
                let k = s / nv;
                x.iter().zip(v).map(|(xi, vi)| c * xi + k * vi).collect()
            }
            ManifoldSpec::Lorentz { curvature, .. } => {
                let nv = minkowski(v, v).max(0.0).sqrt();
                if nv == 0.0 {
                    return x.to_vec();
                }
                let sc = curvature.sqrt();
                let theta = sc * nv;
                let (ch, k) = if theta > MAX_LORENTZ_ANGLE {
                    (MAX_LORENTZ_ANGLE.cosh(), MAX_LORENTZ_ANGLE.sinh() / theta)
                } else {
                    (theta.cosh(), theta.sinh() / theta)
                };
                x.iter().zip(v).map(|(xi, vi)| ch * xi + k * vi).collect()
            }
            ManifoldSpec::Product { factors } => {
                self.per_factor2(factors, x, v, |f, x, v| f.exp_map(x, v))
            }
        }
    }

    /// Retraction. Every supported manifold has a closed-form exponential map,
    /// so this coincides with [`ManifoldSpec::exp_map`].
    pub fn retract(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.exp_map(x, v)
    }

    pub fn log_map(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, ManifoldError> {
        match self {
            ManifoldSpec::Euclidean { .. } => Ok(y.iter().zip(x).map(|(a, b)| a - b).collect()),
            ManifoldSpec::Sphere { .. } => {
                let cos = dot(x, y);
                if cos < -1.0 + ANTIPODAL_TOL {
                    return Err(ManifoldError::NonUniqueLog);
                }
                let u: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| yi - cos * xi).collect();
                let nu = norm2(&u);
                if nu == 0.0 {
                    return Ok(vec![0.0; x.len()]);
                }
                let theta = nu.atan2(cos);
                Ok(u.iter().map(|ui| ui * theta / nu).collect())
            }
            ManifoldSpec::Lorentz { curvature, .. } => {
                let c = *curvature;
                let m = lorentz_chord2(x, y);
                let alpha = 1.0 + 0.5 * c * m;
                let u: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| yi - alpha * xi).collect();
                let nu = ((alpha - 1.0) * (alpha + 1.0) / c).max(0.0).sqrt();
                if nu == 0.0 {
                    return Ok(vec![0.0; x.len()]);
                }
                let d = lorentz_dist_from_chord2(m, c);
                Ok(u.iter().map(|ui| ui * (d / nu)).collect())
            }
            ManifoldSpec::Product { factors } => {
                let mut out = Vec::with_capacity(x.len());
                for (f, r) in factors.iter().zip(self.factor_ranges()) {
                    out.extend(f.log_map(&x[r.clone()], &y[r])?);
                }
                Ok(out)
            }
        }
    }

    /// Riemannian gradient from a Euclidean (ambient) gradient.
    pub fn egrad2rgrad(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        match self {
            ManifoldSpec::Euclidean { .. } => g.to_vec(),
            ManifoldSpec::Sphere { .. } => self.proj_tangent(x, g),
            ManifoldSpec::Lorentz { .. } => {
                let mut h = g.to_vec();
                h[0] = -h[0];
                self.proj_tangent(x, &h)
            }
            ManifoldSpec::Product { factors } => {
                self.per_factor2(factors, x, g, |f, x, g| f.egrad2rgrad(x, g))
            }
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        if x == y {
            return 0.0;
        }
        match self {
            ManifoldSpec::Euclidean { .. } => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            ManifoldSpec::Sphere { .. } => {
                // atan2 form of the clamped arccos; accurate for nearby points too.
                let cos = dot(x, y).clamp(-1.0, 1.0);
                let sin = y
                    .iter()
                    .zip(x)
                    .map(|(yi, xi)| {
                        let r = yi - cos * xi;
                        r * r
                    })
                    .sum::<f64>()
                    .sqrt();
                sin.atan2(cos)
            }
            ManifoldSpec::Lorentz { curvature, .. } => {
                lorentz_dist_from_chord2(lorentz_chord2(x, y), *curvature)
            }
            ManifoldSpec::Product { factors } => factors
                .iter()
                .zip(self.factor_ranges())
                .map(|(f, r)| {
                    let d = f.distance(&x[r.clone()], &y[r]);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Parallel transport of `v` from `x` to `y` along the connecting geodesic.
    pub fn parallel_transport(&self, x: &[f64], y: &[f64], v: &[f64]) -> Vec<f64> {
        if x == y {
            return v.to_vec();
        }
        match self {
            ManifoldSpec::Euclidean { .. } => v.to_vec(),
            ManifoldSpec::Sphere { .. } => {
                let denom = 1.0 + dot(x, y);
                if denom < 1e-12 {
                    // Antipodal: geodesic not unique.
                    return self.proj_tangent(y, v);
                }
                let a = dot(y, v) / denom;
                v.iter()
                    .zip(x.iter().zip(y))
                    .map(|(vi, (xi, yi))| vi - a * (xi + yi))
                    .collect()
            }
            ManifoldSpec::Lorentz { curvature, .. } => {
                let c = *curvature;
                let a = c * minkowski(y, v) / (1.0 - c * minkowski(x, y));
                v.iter()
                    .zip(x.iter().zip(y))
                    .map(|(vi, (xi, yi))| vi + a * (xi + yi))
                    .collect()
            }
            ManifoldSpec::Product { factors } => {
                let mut out = Vec::with_capacity(v.len());
                for (f, r) in factors.iter().zip(self.factor_ranges()) {
                    out.extend(f.parallel_transport(&x[r.clone()], &y[r.clone()], &v[r]));
                }
                out
            }
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>, ManifoldError> {
        match self {
            ManifoldSpec::Euclidean { .. } | ManifoldSpec::Lorentz { .. } => {
                Err(ManifoldError::UnsupportedSampling(self.kind()))
            }
            ManifoldSpec::Sphere { ambient_dim } => loop {
                let g: Vec<f64> = (0..*ambient_dim)
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                let n = norm2(&g);
                if n > 1e-300 {
                    break Ok(g.iter().map(|a| a / n).collect());
                }
            },
            ManifoldSpec::Product { factors } => {
                if !self.is_compact() {
                    return Err(ManifoldError::UnsupportedSampling(self.kind()));
                }
                let mut out = Vec::with_capacity(self.ambient_dim());
                for f in factors {
                    out.extend(f.sample_uniform(rng)?);
                }
                Ok(out)
            }
        }
    }

    /// Per-component squared norm of a tangent vector, used as the Riemannian
    /// Adam second moment: per coordinate on Euclidean space, one scalar per
    /// curved factor.
    pub fn component_inner(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            ManifoldSpec::Euclidean { .. } => u.iter().map(|a| a * a).collect(),
            ManifoldSpec::Sphere { .. } | ManifoldSpec::Lorentz { .. } => vec![self.inner(x, u, u)],
            ManifoldSpec::Product { factors } => factors
                .iter()
                .zip(self.factor_ranges())
                .flat_map(|(f, r)| f.component_inner(&x[r.clone()], &u[r]))
                .collect(),
        }
    }

    /// Length of [`ManifoldSpec::component_inner`]'s output.
    pub fn n_components(&self) -> usize {
        match self {
            ManifoldSpec::Euclidean { dim } => *dim,
            ManifoldSpec::Sphere { .. } | ManifoldSpec::Lorentz { .. } => 1,
            ManifoldSpec::Product { factors } => factors.iter().map(|f| f.n_components()).sum(),
        }
    }

    /// Coordinate span of each component in an ambient vector.
    #[allow(clippy::single_range_in_vec_init)]
    pub fn component_ranges(&self) -> Vec<std::ops::Range<usize>> {
        match self {
            ManifoldSpec::Euclidean { dim } => (0..*dim).map(|i| i..i + 1).collect(),
            ManifoldSpec::Sphere { ambient_dim } | ManifoldSpec::Lorentz { ambient_dim, .. } => {
                vec![0..*ambient_dim]
            }
            ManifoldSpec::Product { factors } => {
                let mut out = Vec::new();
                for (f, r) in factors.iter().zip(self.factor_ranges()) {
                    out.extend(
                        f.component_ranges()
                            .into_iter()
                            .map(|cr| cr.start + r.start..cr.end + r.start),
                    );
                }
                out
            }
        }
    }

    /// Riemannian metric at `x`. Euclidean, sphere and product use ambient
    /// coordinates; Lorentz uses the Poincare-ball chart of curvature `c`.
    pub fn metric_at(&self, x: &[f64]) -> MetricAt {
        match self {
            ManifoldSpec::Euclidean { dim } => MetricAt::identity(*dim),
            ManifoldSpec::Sphere { .. } => {
                let n = x.len();
                let mut p = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        p[i * n + j] = if i == j { 1.0 } else { 0.0 } - x[i] * x[j];
                    }
                }
                MetricAt {
                    dim: n,
                    chart: Chart::Ambient,
                    metric: p.clone(),
                    inverse: p,
                }
            }
            ManifoldSpec::Lorentz { curvature, .. } => {
                let c = *curvature;
                let ball: Vec<f64> = lorentz_to_poincare(x, c)
                    .iter()
                    .map(|y| y / c.sqrt())
                    .collect();
                ball_metric(&ball, c)
            }
            ManifoldSpec::Product { factors } => {
                let blocks: Vec<MetricAt> = factors
                    .iter()
                    .zip(self.factor_ranges())
                    .map(|(f, r)| f.metric_at(&x[r]))
                    .collect();
                MetricAt::block_diagonal(&blocks)
            }
        }
    }

    /// Ambient coordinate ranges of the product factors (a single range otherwise).
    #[allow(clippy::single_range_in_vec_init)]
    pub fn factor_ranges(&self) -> Vec<std::ops::Range<usize>> {
        match self {
            ManifoldSpec::Product { factors } => {
                let mut start = 0;
                factors
                    .iter()
                    .map(|f| {
                        let r = start..start + f.ambient_dim();
                        start = r.end;
                        r
                    })
                    .collect()
            }
            _ => vec![0..self.ambient_dim()],
        }
    }

    fn per_factor2(
        &self,
        factors: &[ManifoldSpec],
        a: &[f64],
        b: &[f64],
        op: impl Fn(&ManifoldSpec, &[f64], &[f64]) -> Vec<f64>,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(a.len());
        for (f, r) in factors.iter().zip(self.factor_ranges()) {
            out.extend(op(f, &a[r.clone()], &b[r]));
        }
        out
    }
}

/// Coordinate chart a [`MetricAt`] is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    Ambient,
    PoincareBall,
    Mixed,
}

/// Riemannian metric `G(z)` and its inverse at a point, as dense row-major
/// symmetric matrices. For embedded manifolds both are the tangent projector,
/// so `G G^-1` is the identity on the tangent space.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAt {
    pub dim: usize,
    pub chart: Chart,
    pub metric: Vec<f64>,
    pub inverse: Vec<f64>,
}

impl MetricAt {
    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0, Chart::Ambient)
    }

    pub fn scaled_identity(dim: usize, scale: f64, chart: Chart) -> Self {
        let mut metric = vec![0.0; dim * dim];
        let mut inverse = vec![0.0; dim * dim];
        for i in 0..dim {
            metric[i * dim + i] = scale;
            inverse[i * dim + i] = 1.0 / scale;
        }
        MetricAt {
            dim,
            chart,
            metric,
            inverse,
        }
    }

    pub fn block_diagonal(blocks: &[MetricAt]) -> Self {
        let dim: usize = blocks.iter().map(|b| b.dim).sum();
        let mut metric = vec![0.0; dim * dim];
        let mut inverse = vec![0.0; dim * dim];
        let mut off = 0;
        for b in blocks {
            for i in 0..b.dim {
                for j in 0..b.dim {
                    metric[(off + i) * dim + off + j] = b.metric[i * b.dim + j];
                    inverse[(off + i) * dim + off + j] = b.inverse[i * b.dim + j];
                }
            }
            off += b.dim;
        }
        let chart = if blocks.iter().all(|b| b.chart == Chart::Ambient) {
            Chart::Ambient
        } else if blocks.iter().all(|b| b.chart == Chart::PoincareBall) {
            Chart::PoincareBall
        } else {
            Chart::Mixed
        };
        MetricAt {
            dim,
            chart,
            metric,
            inverse,
        }
    }

    pub fn metric_entry(&self, i: usize, j: usize) -> f64 {
        self.metric[i * self.dim + j]
    }

    pub fn inverse_entry(&self, i: usize, j: usize) -> f64 {
        self.inverse[i * self.dim + j]
    }

    /// `G * G^-1` as a dense row-major matrix.
    pub fn product(&self) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.metric[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * self.inverse[k * n + j];
                }
            }
        }
        out
    }
}

/// Metric of the Poincare ball of curvature `-c` at ball coordinates `z`:
/// `G = 4 / (1 - c|z|^2)^2 I`.
pub fn ball_metric(z: &[f64], c: f64) -> MetricAt {
    let r2: f64 = z.iter().map(|a| a * a).sum();
    let lambda = 2.0 / (1.0 - c * r2);
    MetricAt::scaled_identity(z.len(), lambda * lambda, Chart::PoincareBall)
}

/// Stereographic projection of a hyperboloid point of curvature `c` to the unit
/// Poincare disk: `x_{1:} / (x_0 + 1/sqrt c)`. Equals `sqrt(c)` times the
/// coordinates in the ball of curvature `c`; unit-disk distances equal
/// `sqrt(c)` times hyperboloid distances.
pub fn lorentz_to_poincare(x: &[f64], c: f64) -> Vec<f64> {
    let denom = x[0] + 1.0 / c.sqrt();
    x[1..].iter().map(|a| a / denom).collect()
}

/// Inverse of [`lorentz_to_poincare`].
pub fn poincare_to_lorentz(y: &[f64], c: f64) -> Vec<f64> {
    let r2: f64 = y.iter().map(|a| a * a).sum();
    let s = 1.0 / (c.sqrt() * (1.0 - r2));
    let mut x = Vec::with_capacity(y.len() + 1);
    x.push((1.0 + r2) * s);
    x.extend(y.iter().map(|a| 2.0 * a * s));
    x
}

/// Geodesic distance in the unit Poincare disk.
pub fn poincare_distance(u: &[f64], v: &[f64]) -> f64 {
    let du: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum();
    let nv: f64 = v.iter().map(|a| a * a).sum();
    (1.0 + 2.0 * du / ((1.0 - nu) * (1.0 - nv))).acosh()
}

/// Local standard deviation of geometric noise in the Poincare-ball chart
/// at radius `norm_z`: `sigma (1 - c |z|^2) / 2`.
pub fn local_noise_std(sigma: f64, c: f64, norm_z: f64) -> f64 {
    sigma * (1.0 - c * norm_z * norm_z) / 2.0
}

pub fn minkowski(u: &[f64], v: &[f64]) -> f64 {
    let spatial: f64 = u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
    spatial - u[0] * v[0]
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm2(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

fn lorentz_time(spatial: &[f64], c: f64) -> f64 {
    (1.0 / c + spatial.iter().map(|a| a * a).sum::<f64>()).sqrt()
}

/// `<x-y, x-y>_L`, clamped at zero. Equals `2(alpha - 1)/c` with `alpha = -c<x,y>_L`.
fn lorentz_chord2(x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    minkowski(&d, &d).max(0.0)
}

fn lorentz_dist_from_chord2(m: f64, c: f64) -> f64 {
    let sc = c.sqrt();
    2.0 / sc * (sc * m.sqrt() / 2.0).asinh()
}
