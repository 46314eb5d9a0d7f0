use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use seqbell::bell::BellParams;
use seqbell::lab::{self, ConjectureOptions, Method};
use seqbell::nelder_mead::NelderMeadOptions;
use seqbell::par::Exec;
use seqbell::protocol::{run_sequence_with, SequenceOptions};

const EXECS: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn sequence_table(c: &mut Criterion) {
    let mut g = c.benchmark_group("sequence_table");
    for n in [4usize, 6] {
        let xis = vec![0.05; n];
        for (name, exec) in EXECS {
            let opts = SequenceOptions {
                exec,
                ..SequenceOptions::default()
            };
            g.bench_with_input(BenchmarkId::new(name, n), &xis, |b, xis| {
                b.iter(|| run_sequence_with(black_box(FRAC_PI_4), xis, &opts).unwrap())
            });
        }
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("sweep_npa2");
    g.sample_size(10);
    let grid: Vec<f64> = lab::table_grid().into_iter().step_by(4).collect();
    for (name, exec) in EXECS {
        g.bench_function(name, |b| {
            b.iter(|| lab::sweep_xi(black_box(FRAC_PI_8), &grid, Method::Npa(2), exec).unwrap())
        });
    }
    g.finish();
}

fn conjecture(c: &mut Criterion) {
    let mut g = c.benchmark_group("conjecture_restarts");
    g.sample_size(10);
    let p = BellParams::new(1.5, 0.3).unwrap();
    for (name, exec) in EXECS {
        let opts = ConjectureOptions {
            restarts: 16,
            samples: 2000,
            seed: 1,
            nelder_mead: NelderMeadOptions {
                max_evals: 500,
                ..NelderMeadOptions::default()
            },
            exec,
        };
        g.bench_function(name, |b| {
            b.iter(|| lab::conjecture_search_with(black_box(&p), &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sequence_table, sweep, conjecture);
criterion_main!(benches);
