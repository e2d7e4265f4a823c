//! Benchmarks for the hot paths: Stallings folding, subgroup intersection,
//! and Cartan decomposition over both coefficient fields.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use num::rational::BigRational;
use num::BigInt;

use subdyn_core::projdyn::{cartan, Mat, PadicField, RealField};
use subdyn_core::stallings::CoreGraph;
use subdyn_core::words::Word;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Deterministic pseudo-random reduced words (xorshift; no RNG dependency).
fn words(rank: usize, count: usize, len: usize, seed: u64) -> Vec<Word> {
    let mut state = seed | 1;
    let mut step = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    (0..count)
        .map(|_| {
            let mut letters: Vec<i32> = Vec::with_capacity(len);
            while letters.len() < len {
                let gen = (step() % rank as u64) as i32 + 1;
                let signed = if step() % 2 == 0 { gen } else { -gen };
                if letters.last() != Some(&-signed) {
                    letters.push(signed);
                }
            }
            Word::reduce(rank, &letters).unwrap()
        })
        .collect()
}

fn bench_folding(c: &mut Criterion) {
    let gens = words(3, 12, 40, 0x9e3779b9);
    c.bench_function("stallings_fold_12x40", |b| {
        b.iter_batched(
            || gens.clone(),
            |g| CoreGraph::from_generators(3, &g).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn bench_intersection(c: &mut Criterion) {
    let g1 = CoreGraph::from_generators(2, &words(2, 6, 25, 0x5151_5151)).unwrap();
    let g2 = CoreGraph::from_generators(2, &words(2, 6, 25, 0xdead_beef)).unwrap();
    c.bench_function("core_graph_intersect_6x25", |b| {
        b.iter(|| g1.intersect(&g2).unwrap())
    });
}

fn bench_cartan(c: &mut Criterion) {
    let real = RealField { tolerance: 1e-9 };
    let m_real = Mat::from_rationals(
        &real,
        &[
            vec![rat(109, 1), rat(33, 1), rat(7, 2)],
            vec![rat(33, 1), rat(10, 1), rat(-5, 3)],
            vec![rat(7, 2), rat(-5, 3), rat(4, 1)],
        ],
    );
    c.bench_function("cartan_real_3x3", |b| b.iter(|| cartan(&real, &m_real).unwrap()));

    let padic = PadicField::new(5, 12);
    let m_padic = Mat::from_rationals(
        &padic,
        &[
            vec![rat(25, 1), rat(3, 1), rat(1, 5)],
            vec![rat(10, 1), rat(1, 1), rat(2, 1)],
            vec![rat(4, 1), rat(15, 1), rat(7, 1)],
        ],
    );
    c.bench_function("cartan_padic_3x3", |b| b.iter(|| cartan(&padic, &m_padic).unwrap()));
}

criterion_group!(benches, bench_folding, bench_intersection, bench_cartan);
criterion_main!(benches);
