use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use esbo_core::{make_task, run_episode, TaskId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn full_episodes(c: &mut Criterion) {
    let mut g = c.benchmark_group("episode");
    for id in TaskId::ALL {
        let task = make_task(id);
        let theta = task.domain().from_unit(&vec![0.5; task.dim()]);
        g.bench_function(id.as_str(), |b| {
            b.iter(|| {
                run_episode(
                    &task,
                    black_box(&theta),
                    f64::INFINITY,
                    false,
                    &mut ChaCha8Rng::seed_from_u64(0),
                )
            })
        });
    }
    g.finish();
}

criterion_group!(benches, full_episodes);
criterion_main!(benches);
