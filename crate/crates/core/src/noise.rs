//! Geometry-aware latent noise and the trace penalty it induces.
//!
//! A latent `z` is perturbed by drawing `e0 ~ N(0, sigma^2 I)` in ambient
//! coordinates, mapping it to the tangent space with `egrad2rgrad` (which
//! applies the inverse metric) and retracting. To second order the expected
//! squared-error loss grows by `sigma^2 Tr(J G^-1 J^T)`, `J` the decoder
//! Jacobian.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::decoder::{Decoder, DecoderError};
use crate::manifold::{Chart, ManifoldSpec, MetricAt};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    /// Offset mixed into the run seed for the noise rng stream.
    #[serde(default)]
    pub stream: u64,
}

fn enabled_default() -> bool {
    true
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma: 0.0,
            enabled: true,
            stream: 0,
        }
    }
}

impl NoiseConfig {
    pub fn new(sigma: f64) -> Self {
        NoiseConfig {
            sigma,
            ..Default::default()
        }
    }

    pub fn is_active(&self) -> bool {
        self.enabled && self.sigma > 0.0
    }
}

/// Perturbs one latent. `sigma == 0` returns `z` unchanged.
pub fn add_geometric_noise<R: Rng + ?Sized>(
    spec: &ManifoldSpec,
    z: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Vec<f64> {
    if sigma == 0.0 {
        return z.to_vec();
    }
    let e0: Vec<f64> = (0..z.len())
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let e = spec.egrad2rgrad(z, &e0);
    spec.retract(z, &e)
}

/// Row-wise [`add_geometric_noise`] on a batch copy.
pub fn perturb_batch<R: Rng + ?Sized>(
    spec: &ManifoldSpec,
    z: ArrayView2<f64>,
    sigma: f64,
    rng: &mut R,
) -> Array2<f64> {
    let mut out = z.to_owned();
    if sigma == 0.0 {
        return out;
    }
    for mut row in out.outer_iter_mut() {
        let x = row.to_vec();
        let y = add_geometric_noise(spec, &x, sigma, rng);
        row.assign(&ndarray::ArrayView1::from(&y[..]));
    }
    out
}

/// Decoder Jacobian `(output_dim, ambient_dim)` at `z`.
pub fn jacobian(decoder: &Decoder, z: &[f64]) -> Result<Array2<f64>, DecoderError> {
    decoder.jacobian(z)
}

/// `sigma^2 Tr(J G^-1 J^T)`, summing `J_k G^-1 J_k^T` over output rows.
pub fn regularizer_trace(j: ArrayView2<f64>, metric: &MetricAt, sigma: f64) -> f64 {
    assert_eq!(
        j.ncols(),
        metric.dim,
        "jacobian columns must match metric dim"
    );
    if sigma == 0.0 {
        return 0.0;
    }
    let n = metric.dim;
    let mut tr = 0.0;
    for row in j.outer_iter() {
        for a in 0..n {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            for b in 0..n {
                tr += ra * metric.inverse[a * n + b] * row[b];
            }
        }
    }
    sigma * sigma * tr
}

/// Covariance (per unit `sigma^2`) of the tangent noise `egrad2rgrad(z, e0)` in
/// ambient coordinates, returned as the `inverse` of a [`MetricAt`]. For
/// Euclidean space and the sphere this equals `metric_at(z).inverse`.
pub fn noise_covariance(spec: &ManifoldSpec, z: &[f64]) -> MetricAt {
    let n = z.len();
    // Columns of the linear map e0 -> egrad2rgrad(z, e0).
    let mut a = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = spec.egrad2rgrad(z, &e);
        for i in 0..n {
            a[i * n + j] = col[i];
        }
        e[j] = 0.0;
    }
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            cov[i * n + k] = (0..n).map(|j| a[i * n + j] * a[k * n + j]).sum();
        }
    }
    MetricAt {
        dim: n,
        chart: Chart::Ambient,
        metric: vec![f64::NAN; n * n],
        inverse: cov,
    }
}

/// Monte-Carlo check of the noise penalty against its analytic trace form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePenaltyCheck {
    /// Mean of `L(z') - L(z)` over the draws.
    pub mc_estimate: f64,
    /// Standard error of `mc_estimate`.
    pub std_error: f64,
    /// `sigma^2 Tr(J C J^T)`, `C` from [`noise_covariance`].
    pub analytic: f64,
    pub abs_gap: f64,
}

/// Compares `E[L(z')] - L(z)` with `L(v) = |f(v) - target|^2` against the
/// analytic penalty.
pub fn verify_noise_penalty<R: Rng + ?Sized>(
    decoder: &Decoder,
    spec: &ManifoldSpec,
    z: &[f64],
    target: &[f64],
    sigma: f64,
    n_mc: usize,
    rng: &mut R,
) -> Result<NoisePenaltyCheck, DecoderError> {
    if target.len() != decoder.output_dim() {
        return Err(DecoderError::Shape {
            what: "target length",
            expected: decoder.output_dim(),
            got: target.len(),
        });
    }
    if sigma == 0.0 || n_mc == 0 {
        return Ok(NoisePenaltyCheck {
            mc_estimate: 0.0,
            std_error: 0.0,
            analytic: 0.0,
            abs_gap: 0.0,
        });
    }
    let sq_err = |out: ndarray::ArrayView1<f64>| -> f64 {
        out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum()
    };
    let base = decoder.forward(ndarray::ArrayView2::from_shape((1, z.len()), z).unwrap())?;
    let l0 = sq_err(base.row(0));

    const CHUNK: usize = 4096;
    let d = z.len();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut done = 0;
    while done < n_mc {
        let m = CHUNK.min(n_mc - done);
        let mut batch = Array2::zeros((m, d));
        for mut row in batch.outer_iter_mut() {
            let y = add_geometric_noise(spec, z, sigma, rng);
            row.assign(&ndarray::ArrayView1::from(&y[..]));
        }
        let out = decoder.forward(batch.view())?;
        for row in out.outer_iter() {
            let diff = sq_err(row) - l0;
            sum += diff;
            sum_sq += diff * diff;
        }
        done += m;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    let jac = decoder.jacobian(z)?;
    let analytic = regularizer_trace(jac.view(), &noise_covariance(spec, z), sigma);
    Ok(NoisePenaltyCheck {
        mc_estimate: mean,
        std_error: (var / n).sqrt(),
        analytic,
        abs_gap: (mean - analytic).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{Activation, Dense};
    use crate::manifold::ball_metric;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = ManifoldSpec::lorentz(2, 5.0);
        let z = spec.project(&[0.0, 0.3, 0.1]).unwrap();
        assert_eq!(add_geometric_noise(&spec, &z, 0.0, &mut rng), z);
    }

    #[test]
    fn euclidean_noise_is_additive() {
        let spec = ManifoldSpec::euclidean(3);
        let z = [0.5, -1.0, 2.0];
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let y = add_geometric_noise(&spec, &z, 0.3, &mut a);
        for (i, zi) in z.iter().enumerate() {
            let e: f64 = b.sample(StandardNormal);
            assert_eq!(y[i], zi + 0.3 * e);
        }
    }

    #[test]
    fn noise_stays_on_manifold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [
            ManifoldSpec::sphere(2),
            ManifoldSpec::lorentz(2, 5.0),
            ManifoldSpec::torus(),
        ] {
            for _ in 0..500 {
                let z = crate::riemannian::init_point(&spec, &mut rng);
                let y = add_geometric_noise(&spec, &z, 1.0, &mut rng);
                assert!(spec.constraint_violation(&y) < 1e-6);
            }
        }
    }

    #[test]
    fn trace_examples() {
        let eye = Array2::<f64>::eye(2);
        assert_eq!(
            regularizer_trace(eye.view(), &MetricAt::identity(2), 0.0),
            0.0
        );
        assert_abs_diff_eq!(
            regularizer_trace(eye.view(), &MetricAt::identity(2), 0.1),
            0.02,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            regularizer_trace(eye.view(), &ball_metric(&[0.0, 0.0], 1.0), 0.2),
            0.02,
            epsilon = 1e-15
        );
        let zero = Array2::<f64>::zeros((3, 2));
        assert_eq!(
            regularizer_trace(zero.view(), &MetricAt::identity(2), 0.5),
            0.0
        );
    }

    #[test]
    fn noise_covariance_matches_metric_for_embedded() {
        let spec = ManifoldSpec::sphere(2);
        let z = spec.project(&[0.3, -0.2, 0.9]).unwrap();
        let cov = noise_covariance(&spec, &z);
        let g = spec.metric_at(&z);
        for (a, b) in cov.inverse.iter().zip(&g.inverse) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_sigma_penalty_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dec = Decoder::new(2, &[4], 3, &mut rng);
        let r = verify_noise_penalty(
            &dec,
            &ManifoldSpec::euclidean(2),
            &[0.1, 0.2],
            &[0.0; 3],
            0.0,
            100,
            &mut rng,
        )
        .unwrap();
        assert_eq!((r.mc_estimate, r.analytic, r.abs_gap), (0.0, 0.0, 0.0));
    }

    #[test]
    fn linear_penalty_is_frobenius_norm() {
        let a = array![[1.0, -2.0], [0.5, 0.3], [0.0, 1.0]];
        let dec = Decoder::from_layers(
            vec![Dense {
                weight: a.clone(),
                bias: Array1::zeros(3),
            }],
            Activation::Silu,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = verify_noise_penalty(
            &dec,
            &ManifoldSpec::euclidean(2),
            &[0.2, 0.1],
            &[1.0, 0.0, -1.0],
            0.05,
            20_000,
            &mut rng,
        )
        .unwrap();
        let fro: f64 = a.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(r.analytic, 0.0025 * fro, epsilon = 1e-15);
        assert!(r.abs_gap < 3.0 * r.std_error, "{r:?}");
    }
}
