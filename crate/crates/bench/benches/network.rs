use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use netfx::depgraph::dependency_graph_from_map;
use netfx::features::{FeatureKind, FeatureMap, FeatureSpec};
use netfx::generators::{EdgeProb, NetworkGenerator};
use netfx::rng;

fn features(c: &mut Criterion) {
    let spec = FeatureSpec::new(vec![
        FeatureKind::FracTreatedParents,
        FeatureKind::FracTreatedParentsOfParents,
    ])
    .unwrap();
    let mut g = c.benchmark_group("features");
    for n in [1200, 4800] {
        let net = NetworkGenerator::ErdosRenyi {
            p: EdgeProb::Scaled(10.0),
        }
        .generate(n, &mut rng::stream(1, &[n as u64]))
        .unwrap();
        let map = FeatureMap::new(&net, &spec).unwrap();
        let w: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        g.bench_with_input(BenchmarkId::new("compute", n), &n, |b, _| {
            b.iter(|| map.compute(black_box(&w)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("dependency_graph", n), &n, |b, _| {
            b.iter(|| dependency_graph_from_map(black_box(&map)).max_degree())
        });
    }
    g.finish();
}

fn generators(c: &mut Criterion) {
    let mut g = c.benchmark_group("generate");
    for (name, p) in [
        ("er_10_over_n", EdgeProb::Scaled(10.0)),
        ("er_dense", EdgeProb::Constant(0.2)),
    ] {
        let gen = NetworkGenerator::ErdosRenyi { p };
        g.bench_function(name, |b| {
            let mut r = rng::stream(2, &[]);
            b.iter(|| gen.generate(2400, &mut r).unwrap().n_edges())
        });
    }
    g.finish();
}

criterion_group!(benches, features, generators);
criterion_main!(benches);
