#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rgd_core::ManifoldSpec;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Manifolds exercised by the identity suites.
pub fn catalog() -> Vec<(&'static str, ManifoldSpec)> {
    vec![
        ("euclidean(3)", ManifoldSpec::euclidean(3)),
        ("sphere(2)", ManifoldSpec::sphere(2)),
        ("sphere(5)", ManifoldSpec::sphere(5)),
        ("lorentz(2, c=1)", ManifoldSpec::lorentz(2, 1.0)),
        ("lorentz(2, c=0.2)", ManifoldSpec::lorentz(2, 0.2)),
        ("lorentz(3, c=5)", ManifoldSpec::lorentz(3, 5.0)),
        ("torus", ManifoldSpec::torus()),
    ]
}

pub fn gaussian<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// A point whose Lorentz spatial part has norm at most about 3/sqrt(c).
pub fn random_point<R: Rng + ?Sized>(spec: &ManifoldSpec, rng: &mut R) -> Vec<f64> {
    let scale = spec.curvature().map_or(1.0, |c| 1.0 / c.sqrt());
    let raw = gaussian(spec.ambient_dim(), scale, rng);
    spec.project(&raw).expect("non-degenerate draw")
}

/// A tangent vector at `x` with Riemannian norm drawn uniformly from `(0, max_norm]`.
pub fn random_tangent<R: Rng + ?Sized>(
    spec: &ManifoldSpec,
    x: &[f64],
    max_norm: f64,
    rng: &mut R,
) -> Vec<f64> {
    loop {
        let v = spec.proj_tangent(x, &gaussian(spec.ambient_dim(), 1.0, rng));
        let n = spec.norm(x, &v);
        if n > 1e-6 {
            let target = max_norm * rng.random_range(1e-3..=1.0);
            return v.iter().map(|a| a * target / n).collect();
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Parallel transport along the geodesic `x -> y` by Schild's ladder with
/// `rungs` steps. `v` is scaled down for the construction and back up after.
pub fn schild_transport(
    spec: &ManifoldSpec,
    x: &[f64],
    y: &[f64],
    v: &[f64],
    rungs: usize,
) -> Vec<f64> {
    let scale = 1e-5 / spec.norm(x, v).max(1e-300);
    let dir = spec.log_map(x, y).unwrap();
    let mut prev = x.to_vec();
    let mut w: Vec<f64> = v.iter().map(|a| a * scale).collect();
    for k in 1..=rungs {
        let t = k as f64 / rungs as f64;
        let step: Vec<f64> = dir.iter().map(|a| a * t).collect();
        let next = spec.exp_map(x, &step);
        let tip = spec.exp_map(&prev, &w);
        let half: Vec<f64> = spec
            .log_map(&tip, &next)
            .unwrap()
            .iter()
            .map(|a| a * 0.5)
            .collect();
        let mid = spec.exp_map(&tip, &half);
        let to_mid: Vec<f64> = spec
            .log_map(&prev, &mid)
            .unwrap()
            .iter()
            .map(|a| a * 2.0)
            .collect();
        let far = spec.exp_map(&prev, &to_mid);
        w = spec.log_map(&next, &far).unwrap();
        prev = next;
    }
    w.iter().map(|a| a / scale).collect()
}
