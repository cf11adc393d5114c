use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use pira_bench::fixture;
use pira_core::aggregate::{backbone_rerun_aggregate, dual_aggregate, AggregationConfig};
use pira_core::RngKey;

fn backbone(c: &mut Criterion) {
    let f = fixture();
    let ex = &f.examples[0];
    c.bench_function("backbone_forward", |b| {
        b.iter(|| f.model.hidden(&f.set, 0, black_box(&ex.question), black_box(&ex.chosen)).unwrap())
    });
    let u = f.model.hidden(&f.set, 0, &ex.question, &ex.chosen).unwrap();
    c.bench_function("head_pass", |b| {
        b.iter(|| f.model.head(black_box(&u), 0.25, RngKey::new(1)).unwrap())
    });
}

fn aggregation(c: &mut Criterion) {
    let f = fixture();
    let ex = &f.examples[0];
    let mut g = c.benchmark_group("aggregate_k1");
    for m in [1, 4, 12] {
        let agg = AggregationConfig {
            k: 1,
            m,
            ..AggregationConfig::pira()
        };
        g.bench_with_input(BenchmarkId::new("head_only", m), &agg, |b, agg| {
            b.iter(|| dual_aggregate(&f.model, &f.set, &ex.question, &ex.chosen, agg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("backbone_rerun", m), &agg, |b, agg| {
            b.iter(|| backbone_rerun_aggregate(&f.model, &f.set, &ex.question, &ex.chosen, agg).unwrap())
        });
    }
    g.finish();
    c.bench_function("aggregate_pira_k6_m12", |b| {
        b.iter(|| dual_aggregate(&f.model, &f.set, &ex.question, &ex.chosen, &AggregationConfig::pira()).unwrap())
    });
}

criterion_group!(benches, backbone, aggregation);
criterion_main!(benches);
