//! Per-sample manifold latents and the Riemannian Adam optimizer over them.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::{ManifoldError, ManifoldSpec};

/// Standard deviation of the Gaussian used to initialize non-compact latents.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("latent table has {rows} rows but {ids} ids")]
    IdCount { rows: usize, ids: usize },
    #[error("expected {expected} columns, got {got}")]
    Columns { expected: usize, got: usize },
    #[error("gradient shape ({got_rows}, {got_cols}) does not match table ({rows}, {cols})")]
    GradShape {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("row {row}: {source}")]
    Point { row: usize, source: ManifoldError },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `N` manifold points, one per sample, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTable {
    spec: ManifoldSpec,
    points: Array2<f64>,
    ids: Vec<usize>,
}

/// Draws one initial point: uniform on compact factors, Gaussian (std 0.1) on
/// Euclidean factors, and `exp` of a Gaussian tangent at the apex for Lorentz.
pub fn init_point<R: Rng + ?Sized>(spec: &ManifoldSpec, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    match spec {
        ManifoldSpec::Sphere { .. } => spec.sample_uniform(rng).expect("sphere is compact"),
        ManifoldSpec::Euclidean { dim } => (0..*dim).map(|_| normal.sample(rng)).collect(),
        ManifoldSpec::Lorentz { ambient_dim, .. } => {
            let mut v = vec![0.0; *ambient_dim];
            for vi in v.iter_mut().skip(1) {
                *vi = normal.sample(rng);
            }
            let x = spec.base_point();
            spec.exp_map(&x, &v)
        }
        ManifoldSpec::Product { factors } => {
            factors.iter().flat_map(|f| init_point(f, rng)).collect()
        }
    }
}

impl LatentTable {
    pub fn new(
        spec: ManifoldSpec,
        points: Array2<f64>,
        ids: Vec<usize>,
    ) -> Result<Self, LatentError> {
        if points.ncols() != spec.ambient_dim() {
            return Err(LatentError::Columns {
                expected: spec.ambient_dim(),
                got: points.ncols(),
            });
        }
        if points.nrows() != ids.len() {
            return Err(LatentError::IdCount {
                rows: points.nrows(),
                ids: ids.len(),
            });
        }
        Ok(LatentTable { spec, points, ids })
    }

    /// `n` fresh latents with ids `0..n`.
    pub fn init<R: Rng + ?Sized>(spec: &ManifoldSpec, n: usize, rng: &mut R) -> Self {
        Self::init_with_ids(spec, (0..n).collect(), rng)
    }

    pub fn init_with_ids<R: Rng + ?Sized>(
        spec: &ManifoldSpec,
        ids: Vec<usize>,
        rng: &mut R,
    ) -> Self {
        let d = spec.ambient_dim();
        let mut points = Array2::zeros((ids.len(), d));
        for mut row in points.outer_iter_mut() {
            let p = init_point(spec, rng);
            for (dst, src) in row.iter_mut().zip(p) {
                *dst = src;
            }
        }
        LatentTable {
            spec: spec.clone(),
            points,
            ids,
        }
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.points
            .row(i)
            .to_slice()
            .expect("rows of a standard-layout matrix are contiguous")
    }

    pub fn set_row(&mut self, i: usize, x: &[f64]) {
        self.points.row_mut(i).assign(&ndarray::ArrayView1::from(x));
    }

    /// Rows at `idx`, in order.
    pub fn gather(&self, idx: &[usize]) -> Array2<f64> {
        self.points.select(ndarray::Axis(0), idx)
    }

    pub fn into_points(self) -> Array2<f64> {
        self.points
    }

    /// Largest constraint violation over all rows.
    pub fn max_violation(&self) -> f64 {
        (0..self.len())
            .map(|i| self.spec.constraint_violation(self.row(i)))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), LatentError> {
        for i in 0..self.len() {
            self.spec
                .check_point(self.row(i))
                .map_err(|source| LatentError::Point { row: i, source })?;
        }
        Ok(())
    }

    /// Re-projects every row onto the manifold.
    pub fn stabilize(&mut self) {
        for i in 0..self.len() {
            if let Ok(p) = self.spec.project(self.row(i)) {
                self.set_row(i, &p);
            }
        }
    }

    /// CSV with header `id,x0,x1,...`; values use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LatentError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim()).map(|j| format!("x{j}")));
        wr.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), LatentError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(spec: &ManifoldSpec, r: R) -> Result<Self, LatentError> {
        let mut rd = csv::Reader::from_reader(r);
        let d = spec.ambient_dim();
        let ncols = rd.headers()?.len();
        if ncols != d + 1 {
            return Err(LatentError::Columns {
                expected: d + 1,
                got: ncols.saturating_sub(1),
            });
        }
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse_err = |msg: String| LatentError::Parse { line, msg };
            let id = rec[0]
                .trim()
                .parse::<usize>()
                .map_err(|e| parse_err(format!("id {:?}: {e}", &rec[0])))?;
            ids.push(id);
            for field in rec.iter().skip(1) {
                flat.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(format!("{field:?}: {e}")))?,
                );
            }
        }
        let points =
            Array2::from_shape_vec((ids.len(), d), flat).expect("row lengths checked by csv");
        Self::new(spec.clone(), points, ids)
    }

    pub fn load_csv(spec: &ManifoldSpec, path: impl AsRef<Path>) -> Result<Self, LatentError> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(spec, std::io::BufReader::new(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiemannianAdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Re-project points and moments every this many steps; 0 disables.
    pub stabilize_period: u64,
}

impl Default for RiemannianAdamConfig {
    fn default() -> Self {
        RiemannianAdamConfig {
            lr: 1e-1,
            beta1: 0.5,
            beta2: 0.7,
            eps: 1e-8,
            stabilize_period: 5,
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// Rows whose gradient had non-finite entries; left untouched.
    pub skipped: Vec<usize>,
    pub stabilized: bool,
}

/// Riemannian Adam: tangent first moments transported along each step,
/// second moments per [`ManifoldSpec::component_inner`] component.
#[derive(Debug, Clone)]
pub struct RiemannianAdam {
    pub config: RiemannianAdamConfig,
    m: Array2<f64>,
    v: Array2<f64>,
    component_of: Vec<usize>,
    step: u64,
    skipped_total: u64,
}

impl RiemannianAdam {
    pub fn new(config: RiemannianAdamConfig, table: &LatentTable) -> Self {
        let spec = table.spec();
        let mut component_of = vec![0; spec.ambient_dim()];
        for (k, r) in spec.component_ranges().into_iter().enumerate() {
            for j in r {
                component_of[j] = k;
            }
        }
        RiemannianAdam {
            config,
            m: Array2::zeros((table.len(), spec.ambient_dim())),
            v: Array2::zeros((table.len(), spec.n_components())),
            component_of,
            step: 0,
            skipped_total: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn skipped_total(&self) -> u64 {
        self.skipped_total
    }

    pub fn first_moment(&self) -> ArrayView2<'_, f64> {
        self.m.view()
    }

    pub fn step(
        &mut self,
        table: &mut LatentTable,
        egrads: ArrayView2<f64>,
    ) -> Result<StepReport, LatentError> {
        let lr = self.config.lr;
        self.step_with_lr(table, egrads, lr)
    }

    /// One step at an explicit learning rate.
    pub fn step_with_lr(
        &mut self,
        table: &mut LatentTable,
        egrads: ArrayView2<f64>,
        lr: f64,
    ) -> Result<StepReport, LatentError> {
        if egrads.dim() != table.points.dim() || self.m.nrows() != table.len() {
            return Err(LatentError::GradShape {
                rows: table.len(),
                cols: table.dim(),
                got_rows: egrads.nrows(),
                got_cols: egrads.ncols(),
            });
        }
        self.step += 1;
        let RiemannianAdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let spec = table.spec.clone();
        let mut report = StepReport::default();
        let d = spec.ambient_dim();
        let mut u = vec![0.0; d];
        for i in 0..table.len() {
            let g = egrads.row(i);
            if g.iter().any(|a| !a.is_finite()) {
                report.skipped.push(i);
                continue;
            }
            let g = g.to_vec();
            let x = table.row(i).to_vec();
            let rg = spec.egrad2rgrad(&x, &g);
            let ci = spec.component_inner(&x, &rg);
            let mut m = self.m.row_mut(i);
            for j in 0..d {
                m[j] = beta1 * m[j] + (1.0 - beta1) * rg[j];
            }
            let mut v = self.v.row_mut(i);
            for k in 0..ci.len() {
                v[k] = beta2 * v[k] + (1.0 - beta2) * ci[k];
            }
            for j in 0..d {
                let mhat = m[j] / bc1;
                let vhat = v[self.component_of[j]] / bc2;
                u[j] = -(lr * mhat / (vhat.sqrt() + eps));
            }
            let x_new = spec.retract(&x, &u);
            let m_old = m.to_vec();
            let m_new = spec.parallel_transport(&x, &x_new, &m_old);
            m.assign(&ndarray::ArrayView1::from(&m_new[..]));
            table.set_row(i, &x_new);
        }
        self.skipped_total += report.skipped.len() as u64;
        let period = self.config.stabilize_period;
        if period > 0 && self.step.is_multiple_of(period) {
            self.stabilize(table);
            report.stabilized = true;
        }
        Ok(report)
    }

    /// Re-projects points onto the manifold and first moments onto the tangent spaces.
    pub fn stabilize(&mut self, table: &mut LatentTable) {
        table.stabilize();
        let spec = table.spec.clone();
        for i in 0..table.len() {
            let m = self.m.row(i).to_vec();
            let p = spec.proj_tangent(table.row(i), &m);
            self.m.row_mut(i).assign(&ndarray::ArrayView1::from(&p[..]));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = LatentTable::init(&ManifoldSpec::sphere(2), 1000, &mut rng);
        s.validate().unwrap();
        let l = LatentTable::init(&ManifoldSpec::lorentz(2, 5.0), 1000, &mut rng);
        for i in 0..l.len() {
            let x = l.row(i);
            assert!((crate::manifold::minkowski(x, x) + 0.2).abs() < 1e-7);
            assert!(x[0] > 0.0);
        }
        let e = LatentTable::init(&ManifoldSpec::euclidean(2), 10_000, &mut rng);
        for j in 0..2 {
            let col = e.points().column(j).to_owned();
            let mean = col.mean().unwrap();
            let std = (col.mapv(|v| (v - mean).powi(2)).sum() / col.len() as f64).sqrt();
            assert!((0.09..=0.11).contains(&std), "std {std}");
        }
    }

    #[test]
    fn zero_gradient_leaves_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [
            ManifoldSpec::sphere(2),
            ManifoldSpec::lorentz(2, 5.0),
            ManifoldSpec::torus(),
            ManifoldSpec::euclidean(3),
        ] {
            let mut t = LatentTable::init(&spec, 20, &mut rng);
            let before = t.clone();
            let mut opt = RiemannianAdam::new(
                RiemannianAdamConfig {
                    stabilize_period: 0,
                    ..Default::default()
                },
                &t,
            );
            let g = Array2::zeros((20, spec.ambient_dim()));
            opt.step(&mut t, g.view()).unwrap();
            assert_eq!(t, before);
            assert_eq!(opt.steps(), 1);
        }
    }

    #[test]
    fn non_finite_rows_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = ManifoldSpec::sphere(2);
        let mut t = LatentTable::init(&spec, 3, &mut rng);
        let before = t.clone();
        let mut opt = RiemannianAdam::new(RiemannianAdamConfig::default(), &t);
        let mut g = Array2::from_elem((3, 3), 0.5);
        g[[1, 2]] = f64::NAN;
        let rep = opt.step(&mut t, g.view()).unwrap();
        assert_eq!(rep.skipped, vec![1]);
        assert_eq!(t.row(1), before.row(1));
        assert_ne!(t.row(0), before.row(0));
        assert_eq!(opt.skipped_total(), 1);
    }

    #[test]
    fn gradient_shape_is_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = LatentTable::init(&ManifoldSpec::sphere(2), 3, &mut rng);
        let mut opt = RiemannianAdam::new(RiemannianAdamConfig::default(), &t);
        let g = Array2::zeros((3, 2));
        assert!(matches!(
            opt.step(&mut t, g.view()),
            Err(LatentError::GradShape { .. })
        ));
    }

    #[test]
    fn stabilize_examples() {
        let spec = ManifoldSpec::sphere(2);
        let mut t = LatentTable::new(
            spec.clone(),
            ndarray::array![[1.0 + 1e-7, 0.0, 0.0], [0.0, 0.6, 0.8]],
            vec![0, 1],
        )
        .unwrap();
        t.stabilize();
        assert!((t.row(0)[0] - 1.0).abs() <= 1e-15);
        let once = t.clone();
        t.stabilize();
        for i in 0..2 {
            for j in 0..3 {
                assert!((t.row(i)[j] - once.row(i)[j]).abs() <= 1e-15);
            }
        }
        let l = ManifoldSpec::lorentz(2, 1.0);
        let mut lt =
            LatentTable::new(l.clone(), ndarray::array![[3.0, 0.3, -0.4]], vec![0]).unwrap();
        lt.stabilize();
        assert_eq!(lt.row(0), &[(1.0f64 + 0.09 + 0.16).sqrt(), 0.3, -0.4]);
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = ManifoldSpec::lorentz(2, 5.0);
        let t = LatentTable::init_with_ids(&spec, vec![4, 8, 15, 16], &mut rng);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = LatentTable::read_csv(&spec, &buf[..]).unwrap();
        assert_eq!(back, t);
        let wrong = LatentTable::read_csv(&ManifoldSpec::euclidean(2), &buf[..]);
        assert!(matches!(wrong, Err(LatentError::Columns { .. })));
    }
}
