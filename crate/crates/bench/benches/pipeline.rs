use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cacti_core::forward::{build_mask_stack, gen_mask};
use cacti_core::operator::{CsOperator, PsiOperator};
use cacti_core::transforms::{Basis1D, Transform3D, WaveletVariant};
use cacti_core::tree::{build_tree, TreeLayout};
use cacti_core::vb::{run_inference, HyperParams, InferenceOptions};
use cacti_core::{ShiftSchedule, VideoCube};
use ndarray::Array3;

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()
}

fn hybrid_transform(nx: usize, ny: usize, nt: usize) -> Transform3D {
    Transform3D::new(
        Basis1D::wavelet(nx, 3, WaveletVariant::EightTap).unwrap(),
        Basis1D::wavelet(ny, 3, WaveletVariant::EightTap).unwrap(),
        Basis1D::dct(nt).unwrap(),
    )
}

fn bench_transforms(c: &mut Criterion) {
    let dct = Basis1D::dct(256).unwrap();
    let wav = Basis1D::wavelet(256, 3, WaveletVariant::EightTap).unwrap();
    let v = random_vec(256, 1);
    c.bench_function("dct_forward_256", |b| b.iter(|| dct.forward(black_box(&v)).unwrap()));
    c.bench_function("wavelet_forward_256", |b| b.iter(|| wav.forward(black_box(&v)).unwrap()));

    let t3 = hybrid_transform(64, 64, 8);
    let cube = VideoCube::new(Array3::from_shape_fn((64, 64, 8), |(i, j, k)| {
        ((i * 31 + j * 7 + k) % 97) as f64 / 97.0
    }));
    c.bench_function("transform3d_forward_64x64x8", |b| {
        b.iter(|| t3.forward(black_box(&cube)).unwrap())
    });
}

fn bench_operator(c: &mut Criterion) {
    let (nx, ny, nt) = (64usize, 64usize, 8usize);
    let pattern = gen_mask(nx, ny + nt - 1, 0.5, 3).unwrap();
    let stack = build_mask_stack(&pattern, &ShiftSchedule::horizontal_unit(nt), nx, ny, false).unwrap();
    let op = PsiOperator::new(stack, hybrid_transform(nx, ny, nt)).unwrap();
    let theta = random_vec(nx * ny * nt, 4);
    let y = random_vec(nx * ny, 5);
    c.bench_function("psi_apply_64x64x8", |b| b.iter(|| op.apply(black_box(&theta)).unwrap()));
    c.bench_function("psi_adjoint_64x64x8", |b| {
        b.iter(|| op.apply_adjoint(black_box(&y)).unwrap())
    });
}

fn bench_inference(c: &mut Criterion) {
    let (nx, ny, nt) = (16usize, 16usize, 8usize);
    let pattern = gen_mask(nx, ny + nt - 1, 0.5, 6).unwrap();
    let stack = build_mask_stack(&pattern, &ShiftSchedule::horizontal_unit(nt), nx, ny, false).unwrap();
    let op = PsiOperator::new(stack, hybrid_transform(nx, ny, nt)).unwrap();
    let tree = build_tree(TreeLayout::hybrid((nx, ny, nt), 3).unwrap()).unwrap();
    let hyper = HyperParams::from_level_counts(tree.level_counts());
    let y = random_vec(nx * ny, 7);
    let opts = InferenceOptions { max_sweeps: 5, tolerance: 0.0, ..Default::default() };
    c.bench_function("vb_5_sweeps_16x16x8", |b| {
        b.iter(|| run_inference(black_box(&y), &op, &tree, &hyper, &opts).unwrap())
    });
}

criterion_group!(benches, bench_transforms, bench_operator, bench_inference);
criterion_main!(benches);
