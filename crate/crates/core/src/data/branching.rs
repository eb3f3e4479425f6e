//! Hierarchical branching diffusion: a tree of Gaussian random-walk nodes in
//! `R^d` with noisy sibling observations around every node.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use ndarray::Array2;

use super::{DataError, Dataset, GroundTruth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchingConfig {
    /// Ambient data dimension.
    pub dim: usize,
    /// Number of tree levels, root included.
    pub depth: usize,
    /// Children per node.
    pub children: usize,
    /// Base noise level.
    pub sigma: f64,
    /// Variance decay per level (`p >= 1`).
    pub decay: f64,
    /// Noisy observations per node.
    pub siblings: usize,
    /// Observation-noise factor (`f > 1`).
    pub obs_noise_factor: f64,
    pub seed: u64,
}

impl Default for BranchingConfig {
    fn default() -> Self {
        BranchingConfig {
            dim: 50,
            depth: 7,
            children: 2,
            sigma: 1.0,
            decay: 1.0,
            siblings: 50,
            obs_noise_factor: 8.0,
            seed: 0,
        }
    }
}

impl BranchingConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.depth == 0 {
            return bad("depth must be >= 1");
        }
        if self.children == 0 {
            return bad("children must be >= 1");
        }
        if self.siblings == 0 {
            return bad("siblings must be >= 1");
        }
        if self.decay.is_nan() || self.decay < 1.0 {
            return bad("decay must be >= 1");
        }
        if self.obs_noise_factor.is_nan() || self.obs_noise_factor <= 1.0 {
            return bad("obs_noise_factor must be > 1");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be a non-negative finite number");
        }
        Ok(())
    }

    /// `sum_{l < depth} children^l`.
    pub fn node_count(&self) -> usize {
        (0..self.depth).map(|l| self.children.pow(l as u32)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub depth: usize,
    pub latent: Vec<f64>,
}

/// Tree in breadth-first order; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Path length in edges between two nodes.
    pub fn distance(&self, mut a: usize, mut b: usize) -> usize {
        let mut hops = 0;
        while self.nodes[a].depth > self.nodes[b].depth {
            a = self.nodes[a].parent.expect("non-root has parent");
            hops += 1;
        }
        while self.nodes[b].depth > self.nodes[a].depth {
            b = self.nodes[b].parent.expect("non-root has parent");
            hops += 1;
        }
        while a != b {
            a = self.nodes[a]
                .parent
                .expect("distinct nodes meet below root");
            b = self.nodes[b]
                .parent
                .expect("distinct nodes meet below root");
            hops += 2;
        }
        hops
    }

    /// Euclidean distance between the noiseless node latents.
    pub fn latent_distance(&self, a: usize, b: usize) -> f64 {
        self.nodes[a]
            .latent
            .iter()
            .zip(&self.nodes[b].latent)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// CSV `node,parent,depth,z0..`; the root has an empty parent.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.nodes.first().map_or(0, |n| n.latent.len());
        let mut header = vec!["node".to_string(), "parent".into(), "depth".into()];
        header.extend((0..d).map(|j| format!("z{j}")));
        wr.write_record(&header)?;
        for (i, n) in self.nodes.iter().enumerate() {
            let mut rec = vec![
                i.to_string(),
                n.parent.map(|p| p.to_string()).unwrap_or_default(),
                n.depth.to_string(),
            ];
            rec.extend(n.latent.iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, DataError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut nodes = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let perr = |msg: String| DataError::Parse { line, msg };
            if rec.len() < 3 {
                return Err(perr("expected node,parent,depth".into()));
            }
            let node: usize = rec[0].parse().map_err(|e| perr(format!("node: {e}")))?;
            if node != nodes.len() {
                return Err(perr(format!("node ids must be 0..n in order, got {node}")));
            }
            let parent = if rec[1].is_empty() {
                None
            } else {
                let p: usize = rec[1].parse().map_err(|e| perr(format!("parent: {e}")))?;
                if p >= node {
                    return Err(perr(format!("parent {p} must precede node {node}")));
                }
                Some(p)
            };
            let depth: usize = rec[2].parse().map_err(|e| perr(format!("depth: {e}")))?;
            let latent = rec
                .iter()
                .skip(3)
                .map(|f| f.parse::<f64>().map_err(|e| perr(format!("{f:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            nodes.push(TreeNode {
                parent,
                depth,
                latent,
            });
        }
        Ok(Tree { nodes })
    }
}

/// Generates the tree and its observations. Nodes are drawn breadth-first, then
/// observations node by node; the data are not standardized here.
pub fn generate_branching_diffusion(cfg: &BranchingConfig) -> Result<(Tree, Dataset), DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let mut nodes = vec![TreeNode {
        parent: None,
        depth: 0,
        latent: vec![0.0; d],
    }];
    let mut frontier = vec![0usize];
    for level in 0..cfg.depth - 1 {
        let std = cfg.sigma / cfg.decay.powi(level as i32).sqrt();
        let mut next = Vec::with_capacity(frontier.len() * cfg.children);
        for &p in &frontier {
            for _ in 0..cfg.children {
                let latent: Vec<f64> = nodes[p]
                    .latent
                    .iter()
                    .map(|x| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x + std * e
                    })
                    .collect::<Vec<f64>>();
                nodes.push(TreeNode {
                    parent: Some(p),
                    depth: level + 1,
                    latent,
                });
                next.push(nodes.len() - 1);
            }
        }
        frontier = next;
    }
    let n_obs = nodes.len() * cfg.siblings;
    let mut x = Array2::zeros((n_obs, d));
    let mut node_of = Vec::with_capacity(n_obs);
    let mut row = 0;
    for (i, node) in nodes.iter().enumerate() {
        let var =
            cfg.sigma * cfg.sigma / (cfg.obs_noise_factor * cfg.decay.powi(node.depth as i32));
        let std = var.sqrt();
        for _ in 0..cfg.siblings {
            for j in 0..d {
                let e: f64 = StandardNormal.sample(&mut rng);
                x[[row, j]] = node.latent[j] + std * e;
            }
            node_of.push(i);
            row += 1;
        }
    }
    let tree = Tree { nodes };
    let labels = node_of.iter().map(|n| n.to_string()).collect();
    let dataset = Dataset {
        x,
        ids: (0..n_obs).collect(),
        labels: Some(labels),
        phases: None,
        truth: Some(GroundTruth::Tree {
            tree: std::sync::Arc::new(tree.clone()),
            nodes: node_of,
        }),
    };
    Ok((tree, dataset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn bfs(tree: &Tree, a: usize, b: usize) -> usize {
        let n = tree.len();
        let mut adj = vec![Vec::new(); n];
        for (i, node) in tree.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                adj[i].push(p);
                adj[p].push(i);
            }
        }
        let mut dist = vec![usize::MAX; n];
        dist[a] = 0;
        let mut q = VecDeque::from([a]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        dist[b]
    }

    #[test]
    fn default_counts() {
        let cfg = BranchingConfig::default();
        let (tree, data) = generate_branching_diffusion(&cfg).unwrap();
        assert_eq!(tree.len(), 127);
        assert_eq!(data.len(), 6350);
        assert_eq!(data.dim(), 50);
        assert!(data.x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn depth_one_is_root_only() {
        let cfg = BranchingConfig {
            depth: 1,
            siblings: 4000,
            dim: 5,
            ..Default::default()
        };
        let (tree, data) = generate_branching_diffusion(&cfg).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(data.len(), 4000);
        let var = data.x.iter().map(|v| v * v).sum::<f64>() / data.x.len() as f64;
        assert!((var - 1.0 / 8.0).abs() < 0.0125, "var {var}");
    }

    #[test]
    fn observation_noise_variance() {
        let cfg = BranchingConfig::default();
        let (tree, data) = generate_branching_diffusion(&cfg).unwrap();
        let Some(GroundTruth::Tree { nodes, .. }) = &data.truth else {
            panic!("tree truth")
        };
        // Pooled variance of observations around their node's empirical mean.
        let s = cfg.siblings as f64;
        let mut ss = 0.0;
        for n in 0..tree.len() {
            let rows: Vec<usize> = (0..data.len()).filter(|&r| nodes[r] == n).collect();
            for j in 0..cfg.dim {
                let mean = rows.iter().map(|&r| data.x[[r, j]]).sum::<f64>() / s;
                ss += rows
                    .iter()
                    .map(|&r| (data.x[[r, j]] - mean).powi(2))
                    .sum::<f64>();
            }
        }
        let var = ss / (tree.len() as f64 * (s - 1.0) * cfg.dim as f64);
        assert!((var - 0.125).abs() < 0.0125, "var {var}");
    }

    #[test]
    fn node_count_formula() {
        for children in 1..=3 {
            for depth in 1..=7 {
                let cfg = BranchingConfig {
                    children,
                    depth,
                    dim: 2,
                    siblings: 1,
                    ..Default::default()
                };
                let (tree, data) = generate_branching_diffusion(&cfg).unwrap();
                assert_eq!(tree.len(), cfg.node_count());
                assert_eq!(data.len(), cfg.node_count());
                let expected: usize = (0..depth).map(|l| children.pow(l as u32)).sum();
                assert_eq!(tree.len(), expected);
            }
        }
    }

    #[test]
    fn tree_distance_examples() {
        let (tree, _) = generate_branching_diffusion(&BranchingConfig {
            dim: 2,
            siblings: 1,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(tree.distance(0, 1), 1);
        assert_eq!(tree.distance(5, 5), 0);
        // First and last leaf sit under different children of the root.
        let leaves: Vec<usize> = (0..tree.len())
            .filter(|&i| tree.nodes[i].depth == 6)
            .collect();
        let (a, b) = (leaves[0], *leaves.last().unwrap());
        assert_eq!(bfs(&tree, a, b), 12);
        assert_eq!(tree.distance(a, b), 12);
        for a in (0..tree.len()).step_by(7) {
            for b in (0..tree.len()).step_by(5) {
                assert_eq!(tree.distance(a, b), bfs(&tree, a, b));
                assert_eq!(tree.distance(a, b), tree.distance(b, a));
            }
        }
    }

    #[test]
    fn observations_nearest_to_own_node() {
        let (tree, data) = generate_branching_diffusion(&BranchingConfig::default()).unwrap();
        let Some(GroundTruth::Tree { nodes, .. }) = &data.truth else {
            panic!()
        };
        let mut hits = 0;
        for (r, x) in data.x.outer_iter().enumerate() {
            let best = (0..tree.len())
                .min_by(|&a, &b| {
                    let da: f64 = x
                        .iter()
                        .zip(&tree.nodes[a].latent)
                        .map(|(u, v)| (u - v).powi(2))
                        .sum();
                    let db: f64 = x
                        .iter()
                        .zip(&tree.nodes[b].latent)
                        .map(|(u, v)| (u - v).powi(2))
                        .sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            hits += usize::from(best == nodes[r]);
        }
        assert!(hits as f64 >= 0.99 * data.len() as f64, "hits {hits}");
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            BranchingConfig {
                depth: 0,
                ..Default::default()
            },
            BranchingConfig {
                children: 0,
                ..Default::default()
            },
            BranchingConfig {
                decay: 0.5,
                ..Default::default()
            },
            BranchingConfig {
                obs_noise_factor: 1.0,
                ..Default::default()
            },
            BranchingConfig {
                siblings: 0,
                ..Default::default()
            },
        ] {
            assert!(generate_branching_diffusion(&cfg).is_err());
        }
    }

    #[test]
    fn tree_csv_round_trip() {
        let (tree, _) = generate_branching_diffusion(&BranchingConfig {
            depth: 3,
            dim: 3,
            siblings: 1,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        tree.write_csv(&mut buf).unwrap();
        assert_eq!(Tree::read_csv(&buf[..]).unwrap(), tree);
    }
}
