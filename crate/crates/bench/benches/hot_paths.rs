//! The three query-path hot spots: per-query table construction (dense vs
//! sparse dictionaries), batch ICM encoding, and the table-lookup scan.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};

use vqann_bench::{batch, dense_model, query, random_codes, sparse_model};
use vqann_core::quant::IcmEncoder;
use vqann_core::search::{adc_scan, TableBuilder};

/// Dense vs sparse dictionaries at the same shape. The sparse model carries
/// the default K·D nonzero budget, so its table should build roughly M times
/// faster than the dense one.
fn table_build(c: &mut Criterion) {
    let (m, k, d) = (8, 256, 128);
    let q = query(d, 13);
    let mut g = c.benchmark_group("table_build");
    g.throughput(Throughput::Elements((m * k) as u64));

    let dense = dense_model(m, k, d, 11);
    let builder = TableBuilder::new(&dense);
    g.bench_function("dense_m8_k256_d128", |b| {
        b.iter(|| black_box(builder.distance_table(q.view()).unwrap()))
    });

    let sparse = sparse_model(m, k, d, 12);
    let builder = TableBuilder::new(&sparse);
    g.bench_function("sparse_m8_k256_d128", |b| {
        b.iter(|| black_box(builder.distance_table(q.view()).unwrap()))
    });

    g.finish();
}

/// Batch encoding from greedy init; the encoder's element-product cache is
/// built once outside the loop, matching how trainers reuse it.
fn icm_encode(c: &mut Criterion) {
    let (m, k, d, n) = (8, 64, 64, 32);
    let model = dense_model(m, k, d, 21);
    let data = batch(n, d, 22);
    let encoder = IcmEncoder::new(&model.codebooks, 0.05, 0.0, 3).unwrap();
    let mut g = c.benchmark_group("icm_encode");
    g.throughput(Throughput::Elements(n as u64));
    g.bench_function("batch32_m8_k64_d64_sweeps3", |b| {
        b.iter(|| black_box(encoder.encode_dataset(&data, None).unwrap()))
    });
    g.finish();
}

/// Scan 100k codes against a prebuilt table, keeping the top 10.
fn scan(c: &mut Criterion) {
    let (m, k, d, n) = (8, 256, 128, 100_000);
    let model = dense_model(m, k, d, 31);
    let codes = random_codes(n, m, k, 32);
    let q = query(d, 33);
    let table = TableBuilder::new(&model).distance_table(q.view()).unwrap();
    let mut g = c.benchmark_group("adc_scan");
    g.throughput(Throughput::Elements(n as u64));
    g.bench_function("n100k_m8_k256_r10", |b| {
        b.iter(|| black_box(adc_scan(&model, &table, &codes, 10).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, table_build, icm_encode, scan);
criterion_main!(benches);
