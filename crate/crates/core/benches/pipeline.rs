use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use dfr_core::basis::enumerate_modes;
use dfr_core::experiments::{build_rhs, case_spec, CaseId};
use dfr_core::network::{default_architecture, init_params, CandidateField};
use dfr_core::pipeline::LossPipeline;
use dfr_core::residual::{ChannelData, ResidualAssembler};
use dfr_core::{Execution, MidpointGrid};

const POLICIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn projection(c: &mut Criterion) {
    let grid = MidpointGrid::uniform(2, 128).unwrap();
    let modes = enumerate_modes(2, &[64, 64]).unwrap();
    let n = grid.len();
    let data = ChannelData {
        values: vec![(0..n).map(|i| (i as f64 * 0.01).sin()).collect(); 2],
        curls: vec![(0..n).map(|i| (i as f64 * 0.02).cos()).collect()],
    };
    let mut group = c.benchmark_group("project_128sq_64modes");
    for (name, exec) in POLICIES {
        let asm = ResidualAssembler::new(&grid, &modes, exec).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(asm.project(&data).unwrap()))
        });
    }
    group.finish();
}

fn loss_and_gradient(c: &mut Criterion) {
    let spec = case_spec(CaseId::Case1);
    let grid = MidpointGrid::uniform(2, spec.desk.train_points).unwrap();
    let modes = enumerate_modes(2, &[spec.desk.modes; 2]).unwrap();
    let field = CandidateField::new(init_params(1, &default_architecture(2)).unwrap()).unwrap();
    let mut group = c.benchmark_group("case1_desk_loss_and_gradient");
    for (name, exec) in POLICIES {
        let rhs = build_rhs(CaseId::Case1, &grid, &modes, exec).unwrap();
        let pipe = LossPipeline::new(&grid, &modes, &spec.material, rhs, exec).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(pipe.loss_and_gradient(&field).unwrap()))
        });
    }
    group.finish();
}

fn forward_with_curl(c: &mut Criterion) {
    let grid = MidpointGrid::uniform(3, 20).unwrap();
    let points = grid.points();
    let field = CandidateField::new(init_params(2, &default_architecture(3)).unwrap()).unwrap();
    let mut group = c.benchmark_group("forward_with_curl_3d_8000pts");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(field.forward_with_curl(&points, exec)))
        });
    }
    group.finish();
}

criterion_group!(benches, projection, loss_and_gradient, forward_with_curl);
criterion_main!(benches);
