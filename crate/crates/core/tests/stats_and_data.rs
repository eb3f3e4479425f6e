mod common;

use std::collections::VecDeque;

use common::{gaussian, rng};
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rgd_core::data::{
    circular_distance, generate_branching_diffusion, split_indices, split_sizes, BranchingConfig,
    Dataset, Oracle, OracleKind, Tree,
};
use rgd_core::metrics::{distance_correlations, pearson, spearman, MetricError};
use rgd_core::riemannian::LatentTable;
use rgd_core::ManifoldSpec;

/// Textbook two-pass Pearson, accumulated in a different order.
fn reference_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().rev().sum::<f64>() / n;
    let mb = b.iter().rev().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

/// Quadratic-time average ranks: 1 + #smaller + (#equal - 1) / 2.
fn reference_ranks(a: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|x| {
            let less = a.iter().filter(|y| *y < x).count() as f64;
            let equal = a.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

#[test]
fn correlations_match_brute_force_reference() {
    let mut r = rng(31);
    for case in 0..50 {
        let n = r.random_range(3..80);
        let a = gaussian(n, 1.0, &mut r);
        let mut b: Vec<f64> = a.iter().map(|x| x + gaussian(1, 1.5, &mut r)[0]).collect();
        if case % 2 == 1 {
            // Coarse values force ties.
            b.iter_mut().for_each(|x| *x = (*x * 2.0).round());
        }
        let p = pearson(&a, &b).unwrap();
        assert!((p - reference_pearson(&a, &b)).abs() < 1e-12, "case {case}");
        let s = spearman(&a, &b).unwrap();
        let s_ref = reference_pearson(&reference_ranks(&a), &reference_ranks(&b));
        assert!((s - s_ref).abs() < 1e-12, "case {case}: {s} vs {s_ref}");
    }
}

proptest! {
    #[test]
    fn spearman_ignores_increasing_transforms(perm_seed in any::<u64>(), n in 3usize..60) {
        let mut r = rng(perm_seed);
        // Distinct values with room between them so no transform merges two.
        let mut a: Vec<f64> = (0..n).map(|i| i as f64 * 0.37 - 5.0).collect();
        let mut b = a.clone();
        a.shuffle(&mut r);
        b.shuffle(&mut r);
        let base = spearman(&a, &b).unwrap();
        let cubed: Vec<f64> = b.iter().map(|x| x.powi(3) + x).collect();
        let exp: Vec<f64> = b.iter().map(|x| x.exp()).collect();
        prop_assert_eq!(spearman(&a, &cubed).unwrap(), base);
        prop_assert_eq!(spearman(&a, &exp).unwrap(), base);
    }

    #[test]
    fn circular_distance_is_a_metric(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let (ab, bc, ac) = (circular_distance(a, b), circular_distance(b, c), circular_distance(a, c));
        prop_assert!((0.0..=0.5).contains(&ab));
        prop_assert_eq!(ab, circular_distance(b, a));
        prop_assert_eq!(circular_distance(a, a), 0.0);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive(n in 1usize..400, seed in any::<u64>(), w in 0.0f64..1.0) {
        let ratios = [w * 0.8, w * 0.2, 1.0 - w];
        let parts = split_indices(n, ratios, seed).unwrap();
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes = split_sizes(n, ratios).unwrap();
        for k in 0..3 {
            prop_assert_eq!(parts[k].len(), sizes[k]);
            prop_assert!((sizes[k] as f64 - ratios[k] * n as f64).abs() < 1.0);
        }
        prop_assert_eq!(split_indices(n, ratios, seed).unwrap(), parts);
    }
}

#[test]
fn isometric_latents_correlate_perfectly() {
    let mut r = rng(2);
    let x = Array2::from_shape_vec((60, 2), gaussian(120, 1.0, &mut r)).unwrap();
    let table = LatentTable::new(ManifoldSpec::euclidean(2), x.clone(), (0..60).collect()).unwrap();
    let c = distance_correlations(&table, &Oracle::DataSpace(x.view()), 5000, 0).unwrap();
    assert!((c.pearson - 1.0).abs() < 1e-12 && (c.spearman - 1.0).abs() < 1e-12);
    assert_eq!((c.n_points, c.n_pairs), (60, 60 * 59 / 2));
    let err = distance_correlations(&table, &Oracle::DataSpace(x.view()), 2, 0).unwrap_err();
    assert!(matches!(err, MetricError::UndefinedCorrelation(_)));
}

#[test]
fn monotone_warp_keeps_spearman_but_not_pearson() {
    // Points on an arc shorter than pi: the chord 2 sin(theta / 2) is an
    // increasing, non-linear function of the arc length theta.
    let mut r = rng(5);
    let n = 80;
    let mut pts = Array2::zeros((n, 2));
    for i in 0..n {
        let t: f64 = r.random_range(0.0..3.0);
        pts[[i, 0]] = t.cos();
        pts[[i, 1]] = t.sin();
    }
    let table = LatentTable::new(ManifoldSpec::sphere(1), pts.clone(), (0..n).collect()).unwrap();
    let c = distance_correlations(&table, &Oracle::DataSpace(pts.view()), 5000, 0).unwrap();
    assert_eq!(c.spearman, 1.0);
    assert!(c.pearson < 1.0 - 1e-4, "{}", c.pearson);
}

/// Hop distances by breadth-first search over the undirected tree.
fn bfs_hops(tree: &Tree, from: usize) -> Vec<usize> {
    let n = tree.len();
    let mut adj = vec![Vec::new(); n];
    for (i, node) in tree.nodes.iter().enumerate() {
        if let Some(p) = node.parent {
            adj[i].push(p);
            adj[p].push(i);
        }
    }
    let mut dist = vec![usize::MAX; n];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

#[test]
fn tree_distance_matches_bfs() {
    let cfg = BranchingConfig {
        siblings: 1,
        ..Default::default()
    };
    let (tree, _) = generate_branching_diffusion(&cfg).unwrap();
    for from in [0, 1, 2, 5, 63, 126] {
        let bfs = bfs_hops(&tree, from);
        for (to, &want) in bfs.iter().enumerate() {
            assert_eq!(tree.distance(from, to), want);
            assert_eq!(tree.distance(to, from), want);
        }
    }
    let leaves: Vec<usize> = (0..tree.len())
        .filter(|&i| tree.nodes[i].depth == 6)
        .collect();
    let in_subtree = |mut i: usize, root_child: usize| {
        while let Some(p) = tree.nodes[i].parent {
            if i == root_child {
                return true;
            }
            i = p;
        }
        false
    };
    let left = *leaves.iter().find(|&&l| in_subtree(l, 1)).unwrap();
    let right = *leaves.iter().find(|&&l| in_subtree(l, 2)).unwrap();
    assert_eq!(tree.distance(left, right), 12);
}

#[test]
fn node_count_matches_construction() {
    for children in 1..=3 {
        for depth in 1..=7 {
            let cfg = BranchingConfig {
                children,
                depth,
                siblings: 2,
                dim: 3,
                ..Default::default()
            };
            let (tree, data) = generate_branching_diffusion(&cfg).unwrap();
            let formula: usize = (0..depth).map(|l| children.pow(l as u32)).sum();
            assert_eq!(tree.len(), formula);
            assert_eq!(data.len(), 2 * formula);
        }
    }
}

#[test]
fn oracles_on_branching_data() {
    let cfg = BranchingConfig {
        depth: 3,
        siblings: 3,
        dim: 4,
        ..Default::default()
    };
    let (tree, data) = generate_branching_diffusion(&cfg).unwrap();
    let hops = data.oracle(OracleKind::Hops).unwrap();
    let latent = data.oracle(OracleKind::TreeLatent).unwrap();
    // Rows 0..3 observe the root, rows 3..6 its first child.
    assert_eq!(hops.distance(0, 1), 0.0);
    assert_eq!(hops.distance(0, 3), 1.0);
    let direct: f64 = tree.nodes[0]
        .latent
        .iter()
        .zip(&tree.nodes[1].latent)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!((latent.distance(0, 3) - direct).abs() < 1e-12);
    assert!(Dataset::from_matrix(data.x.clone())
        .oracle(OracleKind::Hops)
        .is_err());
}
