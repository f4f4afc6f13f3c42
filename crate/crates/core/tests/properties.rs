use proptest::prelude::*;

use hpca_core::codec::{compress, reconstruct, BasisModel, SignalWindow};
use hpca_core::estimator::{train_hpca, HpcaConfig, HpcaState};
use hpca_core::gaussian::GaussianSource;
use hpca_core::io::{decode_model, encode_model, window_stream};
use hpca_core::linalg::{gram_apply, matmul, orthonormality_error, qr_thin, sym_eig, Matrix};

fn matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::new(rows, cols, GaussianSource::new(seed).fill(rows * cols)).unwrap()
}

fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    let mut d = a.clone();
    d.add_scaled(b, -1.0).unwrap();
    d.frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_is_associative(p in 1usize..8, q in 1usize..8, r in 1usize..8, s in 1usize..8, seed in any::<u64>()) {
        let (a, b, c) = (matrix(p, q, seed), matrix(q, r, seed ^ 1), matrix(r, s, seed ^ 2));
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(rel_diff(&left, &right) <= 1e-10);
    }

    #[test]
    fn gram_apply_matches_explicit_product(d in 1usize..100, n in 1usize..12, k in 1usize..6, seed in any::<u64>()) {
        let x = matrix(d, n, seed);
        let q = matrix(d, k, seed ^ 3);
        let explicit = matmul(&matmul(&x, &x.transpose()).unwrap(), &q).unwrap().scaled(0.25);
        prop_assert!(rel_diff(&gram_apply(&x, &q, 0.25).unwrap(), &explicit) <= 1e-11);
    }

    #[test]
    fn qr_is_orthonormal_and_deterministic(m in 1usize..40, n_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let n = 1 + ((m - 1) as f64 * n_frac) as usize;
        let a = matrix(m, n, seed);
        let f = qr_thin(&a).unwrap();
        prop_assert!(orthonormality_error(&f.q) <= 1e-12);
        prop_assert_eq!(f, qr_thin(&a).unwrap());
    }

    #[test]
    fn sym_eig_preserves_trace(n in 1usize..16, seed in any::<u64>()) {
        let a = matrix(n, n, seed);
        let c = matmul(&a, &a.transpose()).unwrap();
        let trace: f64 = (0..n).map(|i| c.get(i, i)).sum();
        let e = sym_eig(&c).unwrap();
        prop_assert!((e.eigenvalues.iter().sum::<f64>() - trace).abs() <= 1e-9 * trace.abs());
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn scalar_stream_weights_every_block_equally(xs in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let mut s = HpcaState::new(HpcaConfig::new(1, 1, 1, 1, 0)).unwrap();
        for &x in &xs {
            s.absorb_block(&Matrix::new(1, 1, vec![x]).unwrap()).unwrap();
        }
        let expect = (1.0 + xs.iter().map(|v| v * v).sum::<f64>()) / xs.len() as f64;
        prop_assert!((s.lambdas()[0] - expect).abs() <= 1e-10 * expect);
    }

    #[test]
    fn windows_reassemble_the_retained_prefix(len in 0usize..200, d in 1usize..20) {
        let samples: Vec<f64> = (0..len).map(|i| i as f64 * 0.5 - 3.0).collect();
        let ws = window_stream(&samples, d).unwrap();
        prop_assert_eq!(ws.len(), len / d);
        let joined: Vec<f64> = ws.into_iter().flat_map(SignalWindow::into_samples).collect();
        prop_assert_eq!(&joined[..], &samples[..(len / d) * d]);
    }

    #[test]
    fn model_files_round_trip_bit_exactly(d in 1usize..30, k_frac in 0.0f64..1.0, tau in any::<u64>(), seed in any::<u64>()) {
        let k = 1 + ((d - 1) as f64 * k_frac) as usize;
        let q = qr_thin(&matrix(d, k, seed)).unwrap().q;
        let mut lambdas = GaussianSource::new(seed ^ 9).fill(k).into_iter().map(f64::abs).collect::<Vec<_>>();
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let model = BasisModel::new(q, lambdas, tau, "hpca").unwrap();
        let bytes = encode_model(&model).unwrap();
        let back = decode_model(&bytes).unwrap();
        prop_assert_eq!(encode_model(&back).unwrap(), bytes);
    }

    #[test]
    fn projection_splits_energy(d in 2usize..40, k_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = 1 + ((d - 1) as f64 * k_frac) as usize;
        let q = qr_thin(&matrix(d, k, seed)).unwrap().q;
        let model = BasisModel::new(q, vec![0.0; k], 0, "test").unwrap();
        let x = SignalWindow::new(GaussianSource::new(seed ^ 5).fill(d)).unwrap();
        let x_hat = reconstruct(&model, &compress(&model, &x).unwrap()).unwrap();
        let nx: f64 = x.samples().iter().map(|v| v * v).sum();
        let nh: f64 = x_hat.samples().iter().map(|v| v * v).sum();
        let ne: f64 = x.samples().iter().zip(x_hat.samples()).map(|(a, b)| (a - b).powi(2)).sum();
        prop_assert!((nx - nh - ne).abs() <= 1e-9 * nx);
    }
}

#[test]
fn training_is_deterministic() {
    let mut g = GaussianSource::new(31);
    let windows: Vec<SignalWindow> = (0..120).map(|_| SignalWindow::new(g.fill(16)).unwrap()).collect();
    let config = HpcaConfig::new(16, 4, 8, 3, 99);
    let a = train_hpca(config, &windows).unwrap();
    let b = train_hpca(config, &windows).unwrap();
    assert_eq!(encode_model(&a).unwrap(), encode_model(&b).unwrap());
    assert_eq!(a.trained_tau(), 15);
}
