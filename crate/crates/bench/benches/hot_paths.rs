//! Hot-path benchmarks: one explicit-dynamics substep, flat and
//! hierarchical surrogate forward passes, and nearest-neighbour queries.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sheetform_bench::{bench_case, bench_trajectory, forward_fixture};
use sheetform_core::fe::{lumped_mass, stable_dt, step_explicit, SimState};
use sheetform_core::hier::{brute_force_knn, KdTree};
use sheetform_core::model::model_forward;
use sheetform_core::nn::Tape;

fn fe_substep(c: &mut Criterion) {
    let setup = bench_case(17, 24.0, 13.0);
    let masses = lumped_mass(&setup.mesh, &setup.material).unwrap();
    let dt = stable_dt(&setup.mesh, &setup.material);
    let state = SimState::initial(&setup.mesh);
    c.bench_function("fe_substep_17x17", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| {
                step_explicit(
                    &mut s,
                    &setup.mesh,
                    &setup.material,
                    &setup.tools,
                    &masses,
                    dt,
                    5.0,
                    0.5,
                )
                .unwrap();
                s
            },
            BatchSize::SmallInput,
        )
    });
}

fn surrogate_forward(c: &mut Criterion) {
    let traj = bench_trajectory(9);

    let flat = forward_fixture(&traj, 32, 8, false);
    c.bench_function("flat_forward_9x9_h32_l8", |b| {
        b.iter(|| {
            let mut tape = Tape::<f32>::new();
            let out =
                model_forward(&mut tape, &flat.params, &flat.config, black_box(&flat.tensors))
                    .unwrap();
            black_box(tape.value(out.node_out).get(0, 0))
        })
    });

    let hier = forward_fixture(&traj, 32, 8, true);
    let hierarchy = hier.hierarchy.as_ref().unwrap();
    c.bench_function("hier_forward_9x9_h32_l8", |b| {
        b.iter(|| {
            let mut tape = Tape::<f32>::new();
            let out = sheetform_core::hier::hierarchical_forward(
                &mut tape,
                &hier.params,
                &hier.config,
                hierarchy,
                black_box(&hier.tensors),
            )
            .unwrap();
            black_box(tape.value(out.node_out).get(0, 0))
        })
    });
}

fn nearest_neighbours(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<[f64; 3]> =
        (0..2000).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let queries: Vec<[f64; 3]> =
        (0..200).map(|_| [rng.random(), rng.random(), rng.random()]).collect();

    let tree = KdTree::build(&points).unwrap();
    c.bench_function("kdtree_200_queries_k8_n2000", |b| {
        b.iter(|| {
            for &q in &queries {
                black_box(tree.nearest(black_box(q), 8).unwrap());
            }
        })
    });
    c.bench_function("brute_force_200_queries_k8_n2000", |b| {
        b.iter(|| {
            for &q in &queries {
                black_box(brute_force_knn(&points, black_box(q), 8).unwrap());
            }
        })
    });
}

criterion_group!(benches, fe_substep, surrogate_forward, nearest_neighbours);
criterion_main!(benches);
