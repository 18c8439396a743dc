//! Throughput of the hot paths: distortions, featurization, the reference MLP, the robustness
//! counter and PGD.

use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use natrob_core::dataset::{FrameManifest, ManifestEntry, Split};
use natrob_core::distortions::{self, DistortionSpec};
use natrob_core::metrics::conditional_robustness;
use natrob_core::predictor::{PredictionRecord, PredictionTable, TransformRef};
use natrob_core::preprocess::featurize;
use natrob_core::trainer::{default_layer_sizes, loss_and_grad, pgd_attack, MlpModel, PgdParams, Sample, Technique, TrainConfig};
use natrob_core::{Family, Image, SeverityTable};

fn test_image(side: usize) -> Image {
    Image::from_fn(side, side, |x, y| {
        [(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) * 3 % 256) as u8]
    })
    .unwrap()
}

fn bench_distortions(c: &mut Criterion) {
    let frame = test_image(256);
    let table = SeverityTable::default();
    let mut group = c.benchmark_group("distortion_sev3_224");
    for family in Family::ALL {
        let spec = DistortionSpec::keyed(family, 3, 0, "bench");
        group.bench_with_input(BenchmarkId::from_parameter(family.name()), &spec, |b, spec| {
            b.iter(|| distortions::apply(black_box(spec), &frame, &table, 224).unwrap())
        });
    }
    group.finish();
}

fn bench_model(c: &mut Criterion) {
    let img = test_image(224);
    let model = MlpModel::init(&default_layer_sizes(8), 0).unwrap();
    c.bench_function("featurize_224", |b| b.iter(|| featurize(black_box(&img))));
    let x = featurize(&img);
    c.bench_function("mlp_forward", |b| b.iter(|| model.forward(black_box(&x)).unwrap()));
    let samples: Vec<Sample> = (0..32).map(|i| Sample { features: x.clone(), label: i % 8 }).collect();
    let batch: Vec<&Sample> = samples.iter().collect();
    for technique in [Technique::Baseline, Technique::CleanLogitPairing, Technique::AdversarialLogitPairing] {
        let pgd = (technique == Technique::AdversarialLogitPairing).then(PgdParams::default);
        let cfg = TrainConfig { technique, lambda: 0.1, pgd, ..Default::default() };
        c.bench_function(&format!("loss_and_grad_b32_{technique}"), |b| {
            b.iter(|| loss_and_grad(&model, black_box(&batch), &cfg).unwrap())
        });
    }
    c.bench_function("pgd_5_steps", |b| b.iter(|| pgd_attack(&model, black_box(&x), 3, &PgdParams::default()).unwrap()));
}

fn bench_metric(c: &mut Criterion) {
    let n = 1000;
    let entries: Vec<ManifestEntry> = (0..n)
        .map(|i| ManifestEntry {
            video_id: format!("v{i}"),
            shot_id: format!("s{i:04}"),
            split: Split::Test,
            label: i % 23,
            anchor_path: PathBuf::from("a.png"),
            neighbor_paths: Default::default(),
        })
        .collect();
    let manifest = FrameManifest::new(entries, 23, ".").unwrap();
    let t = TransformRef::Distortion { family: Family::Hue, severity: 2, seed: None };
    let mut table = PredictionTable::new(Some(23));
    for i in 0..n {
        let shot = format!("s{i:04}");
        table.insert(PredictionRecord::from_label("m", &shot, TransformRef::Identity, i % 23)).unwrap();
        table.insert(PredictionRecord::from_label("m", &shot, t, (i * 7) % 23)).unwrap();
    }
    c.bench_function("conditional_robustness_1000", |b| {
        b.iter(|| conditional_robustness(black_box(&table), &manifest, t, "m").unwrap())
    });
}

criterion_group!(benches, bench_distortions, bench_model, bench_metric);
criterion_main!(benches);
