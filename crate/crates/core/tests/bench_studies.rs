use std::sync::Mutex;

use hpca_core::bench::{
    hpca_memory_bytes, run_step_timing, run_sweep, synthetic_corpus, SweepOptions,
};

// tests here time things, so they run one at a time
static TIMING: Mutex<()> = Mutex::new(());

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / 3.0;
    let my = ly.iter().sum::<f64>() / 3.0;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

#[test]
fn step_cost_is_linear_in_d_at_fixed_k() {
    let _g = TIMING.lock().unwrap_or_else(|e| e.into_inner());
    let ds = [500.0, 1000.0, 2000.0];
    let t: Vec<_> = ds
        .iter()
        .map(|&d| run_step_timing(d as usize, 50, 1, 3, 7, 1).unwrap().median)
        .collect();
    let mm = slope(&ds, &t.iter().map(|s| s.matmul_s).collect::<Vec<_>>());
    let qr = slope(&ds, &t.iter().map(|s| s.qr_s).collect::<Vec<_>>());
    assert!((mm - 1.0).abs() <= 0.3, "matmul slope {mm}");
    assert!((qr - 1.0).abs() <= 0.3, "qr slope {qr}");
}

#[test]
fn products_and_qr_dominate_a_large_step() {
    let _g = TIMING.lock().unwrap_or_else(|e| e.into_inner());
    let r = run_step_timing(5000, 500, 1, 3, 1, 0).unwrap();
    let t = r.median;
    assert!(t.matmul_s + t.qr_s >= 0.8 * t.total_s, "{t:?}");
    assert!(t.matmul_s + t.qr_s + t.other_s <= 1.01 * t.total_s);
}

#[test]
fn larger_blocks_train_faster() {
    let _g = TIMING.lock().unwrap_or_else(|e| e.into_inner());
    let corpus = synthetic_corpus(5, 100, 1000, 100).unwrap();
    let report = run_sweep(&corpus, 100, 10, &[1, 50], &[3], SweepOptions { seed: 5, parallel: false }).unwrap();
    let t1 = report.get(1, 3).unwrap().wall_time_s;
    let t50 = report.get(50, 3).unwrap().wall_time_s;
    assert!(t50 < t1, "B=50 took {t50}s, B=1 took {t1}s");
}

#[test]
fn sweep_rows_follow_the_memory_model() {
    let _g = TIMING.lock().unwrap_or_else(|e| e.into_inner());
    let corpus = synthetic_corpus(6, 100, 300, 50).unwrap();
    let report = run_sweep(&corpus, 100, 10, &[1, 10, 50], &[1, 2], SweepOptions::default()).unwrap();
    assert_eq!(report.rows.len(), 6);
    for row in &report.rows {
        assert_eq!(row.memory_bytes, hpca_memory_bytes(100, 10, row.block_size as u64, 4));
        assert_eq!(row.memory_bytes_f64, 2 * row.memory_bytes);
        assert!((row.gap_db - (row.mean_rsnr_db_batch - row.mean_rsnr_db_hpca)).abs() < 1e-12);
    }
}
