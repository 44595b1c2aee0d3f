use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use segcrowd_bench::{fundus_like, fundus_png, stroke_layer, two_class_lseg, two_class_mask, DFI_SIDE};
use segcrowd_core::mask::{decode_rle, deserialize_mask, encode_rle, serialize_mask};
use segcrowd_core::store::{Durability, Store, VersionKind};
use segcrowd_core::vision::{enhance_contrast, vesselness, VesselnessParams};

fn rle(c: &mut Criterion) {
    let layer = stroke_layer(DFI_SIDE, DFI_SIDE, 1);
    let bytes = encode_rle(&layer);
    let mut g = c.benchmark_group("rle");
    g.throughput(Throughput::Elements((DFI_SIDE * DFI_SIDE) as u64));
    g.bench_function("encode_1444", |b| b.iter(|| encode_rle(black_box(&layer))));
    g.bench_function("decode_1444", |b| b.iter(|| decode_rle(black_box(&bytes), DFI_SIDE, DFI_SIDE).unwrap()));
    g.finish();

    let mask = two_class_mask(DFI_SIDE, DFI_SIDE, 2);
    let lseg = serialize_mask(&mask);
    let mut g = c.benchmark_group("container");
    g.bench_function("serialize_1444x2", |b| b.iter(|| serialize_mask(black_box(&mask))));
    g.bench_function("deserialize_1444x2", |b| b.iter(|| deserialize_mask(black_box(&lseg)).unwrap()));
    g.finish();
}

fn vision(c: &mut Criterion) {
    let mut g = c.benchmark_group("vision");
    g.sample_size(10);
    let small = fundus_like(256);
    let params = VesselnessParams::default();
    g.bench_function("vesselness_256", |b| b.iter(|| vesselness(black_box(&small), &params).unwrap()));
    let dfi = fundus_like(DFI_SIDE);
    g.bench_function("vesselness_1444", |b| b.iter(|| vesselness(black_box(&dfi), &params).unwrap()));
    g.bench_function("clahe_1444", |b| b.iter(|| enhance_contrast(black_box(&dfi))));
    g.finish();
}

fn store(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut g = c.benchmark_group("store");
    for (name, durability) in [("append_flush", Durability::Flush), ("append_fsync", Durability::Fsync)] {
        let root = dir.path().join(name);
        let store = Store::open(&root, durability).unwrap();
        let lead = store.bootstrap_researcher("bench").unwrap().unwrap().annotator;
        let (image, _) = store.enroll(&lead, &fundus_png(128), "bench.png").unwrap();
        let mut seed = 0u64;
        g.bench_function(name, |b| {
            b.iter_batched(
                || {
                    seed += 1;
                    two_class_lseg(128, 128, seed)
                },
                |lseg| {
                    let blob = store.put_blob(&lseg).unwrap();
                    store.append_version(&image.image_id, &blob, &lead.annotator_id, VersionKind::Manual, None).unwrap()
                },
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, rle, vision, store);
criterion_main!(benches);
