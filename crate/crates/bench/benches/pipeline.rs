use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use critflow::critpoint::{winding_along, DEFAULT_G_MIN};
use critflow::pipeline::{execute, preset};
use critflow::{analyze, assemble, extract_level_lines, generate_mesh, solve, AnalysisOptions, ContourPolyline, Point};
use critflow_bench::{fixture, solved};

fn mesh_generation(c: &mut Criterion) {
    let mut g = c.benchmark_group("mesh");
    for h in [0.04, 0.02, 0.01] {
        let domain = preset("disc3holes_radiussq", h).unwrap().domain;
        g.bench_with_input(BenchmarkId::new("disc3holes", h), &h, |b, &h| b.iter(|| generate_mesh(black_box(&domain), h).unwrap()));
    }
    g.finish();
}

fn assembly_and_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("fem");
    for h in [0.04, 0.02] {
        let (mesh, rho) = fixture("annulus_smooth", h);
        g.bench_with_input(BenchmarkId::new("assemble", h), &h, |b, _| b.iter(|| assemble(&mesh, &rho).unwrap()));
        let sys = assemble(&mesh, &rho).unwrap();
        g.bench_with_input(BenchmarkId::new("pcg", h), &h, |b, _| b.iter(|| solve(black_box(&sys), 1e-10, None).unwrap()));
    }
    g.finish();
}

fn analysis(c: &mut Criterion) {
    let sol = solved("disc3holes_radiussq", 0.02);
    let contour = ContourPolyline::circle(Point::ORIGIN, 0.1, 64);
    c.bench_function("winding/64", |b| b.iter(|| winding_along(&sol, black_box(&contour.points), DEFAULT_G_MIN).unwrap()));
    c.bench_function("level_lines/0.5", |b| b.iter(|| extract_level_lines(&sol, black_box(0.5))));
    let opts = AnalysisOptions::default();
    c.bench_function("analyze/disc3holes", |b| b.iter(|| analyze(&sol, &opts).unwrap()));
}

fn end_to_end(c: &mut Criterion) {
    let cfg = preset("halfdisc3holes_radiussq", 0.04).unwrap();
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("halfdisc3holes/0.04", |b| b.iter(|| execute(&cfg, 1).unwrap()));
    g.finish();
}

criterion_group!(benches, mesh_generation, assembly_and_solve, analysis, end_to_end);
criterion_main!(benches);
