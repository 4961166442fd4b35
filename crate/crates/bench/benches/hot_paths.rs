use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use uadx::data::{split_dataset, Completeness, SplitKey, SplitRatios};
use uadx::metrics::{bootstrap_ci, meteor, stable_mean, BootstrapConfig, MetricError};

fn bench_meteor(c: &mut Criterion) {
    let reference = "Labs were notable for an ALT of 212 and the patient reported jaundice for six days";
    let candidate = "The patient reported jaundice for 6 days and labs showed ALT 212";
    c.bench_function("meteor/sentence", |b| b.iter(|| meteor(black_box(candidate), black_box(reference))));
}

fn mean(xs: &[&f64]) -> Result<f64, MetricError> {
    Ok(stable_mean(xs.iter().map(|x| **x)))
}

fn bench_bootstrap(c: &mut Criterion) {
    let mut group = c.benchmark_group("bootstrap");
    for n in [100usize, 1000] {
        let data: Vec<f64> = (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect();
        for parallel in [false, true] {
            let cfg = BootstrapConfig { iterations: 200, seed: 1, parallel };
            let id = BenchmarkId::new(if parallel { "parallel" } else { "serial" }, n);
            group.bench_with_input(id, &data, |b, d| b.iter(|| bootstrap_ci("m", d, mean, cfg).unwrap()));
        }
    }
    group.finish();
}

fn bench_split(c: &mut Criterion) {
    let keys: Vec<SplitKey> = (0..24_000)
        .map(|i| SplitKey {
            note_id: format!("n{i:06}"),
            disease_id: format!("d{}", i % 12),
            completeness: if i % 2 == 0 { Completeness::EvidenceComplete } else { Completeness::EvidenceIncomplete },
        })
        .collect();
    c.bench_function("split/24k", |b| b.iter(|| split_dataset(black_box(&keys), SplitRatios::default(), 7).unwrap()));
}

criterion_group!(benches, bench_meteor, bench_bootstrap, bench_split);
criterion_main!(benches);
