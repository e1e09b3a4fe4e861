use std::hint::black_box;

use covert_bench::{reference_channel, REFERENCE_NBAR_S};
use covert_core::finite_blocklength::lemma1_bound;
use covert_core::fock_oracle::{ea_pair_fock, rel_ent_moments};
use covert_core::scalar_capacity::ea_capacity;
use covert_core::symplectic_gaussian::{ea_variance_closed, output_and_reference_cms, symplectic_spectrum};
use covert_core::{BoundInputs, TruncationConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn closed_forms(c: &mut Criterion) {
    let ch = reference_channel();
    c.bench_function("ea_capacity", |b| b.iter(|| ea_capacity(black_box(&ch), black_box(REFERENCE_NBAR_S))));
    c.bench_function("ea_variance_closed", |b| b.iter(|| ea_variance_closed(black_box(&ch), black_box(REFERENCE_NBAR_S))));
    let (rho, _) = output_and_reference_cms(&ch, REFERENCE_NBAR_S).unwrap();
    c.bench_function("symplectic_spectrum", |b| b.iter(|| symplectic_spectrum(black_box(&rho))));
    let inputs = BoundInputs::new(0.01, 0.1, 0.5, 0.1, 1_000_000).unwrap();
    c.bench_function("lemma1_bound", |b| b.iter(|| lemma1_bound(black_box(&inputs))));
}

fn fock(c: &mut Criterion) {
    let ch = reference_channel();
    let cfg = TruncationConfig::default();
    let mut g = c.benchmark_group("fock");
    g.sample_size(10);
    g.bench_function("ea_pair_k20", |b| b.iter(|| ea_pair_fock(black_box(&ch), REFERENCE_NBAR_S, 20, &cfg)));
    let (rho, sigma) = ea_pair_fock(&ch, REFERENCE_NBAR_S, 20, &cfg).unwrap();
    g.bench_function("rel_ent_moments_k20", |b| b.iter(|| rel_ent_moments(black_box(&rho), black_box(&sigma))));
    g.finish();
}

criterion_group!(benches, closed_forms, fock);
criterion_main!(benches);
