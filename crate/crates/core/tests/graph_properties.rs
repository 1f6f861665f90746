use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use netfx::graph::{unit_suffix_labeling, Dag, Node, NodeSet, Role};
use netfx::rng;

/// Random DAG on `v0..v{n-1}`: returns the graph and its edges by index.
fn random_dag(seed: u64, n: usize, density: f64) -> (Dag, Vec<(usize, usize)>) {
    let mut r = rng::stream(seed, &[]);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < density {
                edges.push((order[i], order[j]));
            }
        }
    }
    let nodes = (0..n).map(|v| Node {
        id: format!("v{v}"),
        role: Role::Other,
    });
    let labelled: Vec<(String, String)> = edges
        .iter()
        .map(|(a, b)| (format!("v{a}"), format!("v{b}")))
        .collect();
    (Dag::new(nodes, labelled).unwrap(), edges)
}

fn subset(bits: u32, n: usize) -> NodeSet {
    (0..n)
        .filter(|k| bits >> k & 1 == 1)
        .map(|k| format!("v{k}"))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn d_separation_is_symmetric(seed in 0u64..10_000, n in 3usize..9, density in 0.1f64..0.7, a in 0u32..256, b in 0u32..256, z in 0u32..256) {
        let (g, _) = random_dag(seed, n, density);
        let mask = (1u32 << n) - 1;
        let (a, b) = (a & mask, b & mask & !a);
        let z = z & mask & !a & !b;
        prop_assume!(a != 0 && b != 0);
        let (sa, sb, sz) = (subset(a, n), subset(b, n), subset(z, n));
        prop_assert_eq!(g.d_separated(&sa, &sb, &sz).unwrap(), g.d_separated(&sb, &sa, &sz).unwrap());
    }

    #[test]
    fn enumeration_matches_pointwise_check(seed in 0u64..10_000, n in 3usize..8, density in 0.2f64..0.7) {
        let (g, _) = random_dag(seed, n, density);
        let a: NodeSet = ["v0"].into_iter().collect();
        let outcome = format!("v{}", n - 1);
        let candidates: NodeSet = (1..n - 1).map(|k| format!("v{k}")).collect();
        let found = g.enumerate_valid_adjustment_sets(&a, &outcome, &candidates).unwrap();
        let mut expected: Vec<NodeSet> = Vec::new();
        for bits in 0u32..(1 << (n - 2)) {
            let z: NodeSet = (0..n - 2).filter(|k| bits >> k & 1 == 1).map(|k| format!("v{}", k + 1)).collect();
            if g.is_valid_adjustment(&a, &outcome, &z).unwrap() {
                expected.push(z);
            }
        }
        expected.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.to_vec().cmp(&y.to_vec())));
        prop_assert_eq!(found, expected);
    }

    #[test]
    fn stacking_replicated_units_recovers_generic_graph(seed in 0u64..10_000, n in 2usize..7, units in 1usize..5, density in 0.1f64..0.8) {
        let (g, edges) = random_dag(seed, n, density);
        let mut r = rng::stream(seed, &[1]);
        let nodes = (0..units).flat_map(|u| (0..n).map(move |v| Node {
            id: format!("v{v}_{u}"),
            role: Role::Other,
        }));
        let mut explicit: Vec<(String, String)> = Vec::new();
        for &(a, b) in &edges {
            for u in 0..units {
                explicit.push((format!("v{a}_{u}"), format!("v{b}_{u}")));
                // Between-unit copies of the same generic edge keep the graph acyclic.
                let other = r.random_range(0..units);
                if other != u && r.random::<bool>() {
                    explicit.push((format!("v{a}_{u}"), format!("v{b}_{other}")));
                }
            }
        }
        let e = Dag::new(nodes, explicit).unwrap();
        let stacked = e.stack_generic(unit_suffix_labeling('_')).unwrap();
        prop_assert_eq!(&stacked, &g);
        // Already generic: stacking again changes nothing.
        prop_assert_eq!(stacked.stack_generic(unit_suffix_labeling('_')).unwrap(), g);
    }

    #[test]
    fn projection_without_latents_keeps_edges(seed in 0u64..10_000, n in 2usize..8, density in 0.1f64..0.8) {
        let (g, _) = random_dag(seed, n, density);
        let p = g.latent_projection(&NodeSet::new()).unwrap();
        prop_assert!(p.bidirected.is_empty());
        prop_assert_eq!(p.directed_part().unwrap(), g);
    }
}
