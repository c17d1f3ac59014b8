use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use ser_probe_core::probe::{gradient_check, init_probe, train_probe, ProbeConfig, ProbeSplits};
use ser_probe_core::seed::stream_rng;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:05}")).collect()
}

fn linear_task(n: usize, dim: usize, seed: u64) -> (Array2<f32>, Vec<f64>) {
    let mut rng = stream_rng(seed, "linear-task", 0);
    let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let x = Array2::from_shape_fn((n, dim), |_| rng.sample::<f64, _>(StandardNormal) as f32);
    let t = x
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(&w).map(|(a, b)| f64::from(*a) * b).sum::<f64>())
        .collect();
    (x, t)
}

fn small() -> ProbeConfig {
    ProbeConfig {
        hidden_sizes: vec![64, 16],
        epochs: 30,
        learning_rate: 1e-3,
        ..ProbeConfig::default()
    }
}

#[test]
fn gradients_on_full_size_probes() {
    for seed in 0..5u64 {
        let dim = 8 + seed as usize * 7;
        let m = init_probe(dim, &ProbeConfig { seed, ..Default::default() }).unwrap();
        let mut rng = stream_rng(seed, "gc", 1);
        let n = 1 + seed as usize;
        let x = Array2::from_shape_fn((n, dim), |_| rng.sample(StandardNormal));
        let t: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let e = gradient_check(&m, x.view(), &t, seed).unwrap();
        assert!(e < 1e-4, "seed {seed}: {e:e}");
    }
}

#[test]
fn plateau_schedule_fires_on_a_stalled_run() {
    // lr so small that val loss never moves by the relative threshold
    let (x, t) = linear_task(200, 4, 5);
    let s = ProbeSplits::by_id_hash(&ids(200), 5).unwrap();
    let cfg = ProbeConfig {
        learning_rate: 1e-12,
        epochs: 17,
        ..small()
    };
    let (_, out) = train_probe(x.view(), &t, &s, &cfg).unwrap();
    let lrs: Vec<f64> = out.history.iter().map(|h| h.lr).collect();
    // epoch 1 sets the reference; epochs 2–6 are the 5 bad ones
    assert!(lrs[..6].iter().all(|&l| l == 1e-12));
    assert_eq!(lrs[6], 1e-12 * 0.9);
    assert!(lrs[7..11].iter().all(|&l| l == lrs[6]));
    assert_eq!(lrs[11], 1e-12 * 0.9 * 0.9);
    assert_eq!(lrs[16], 1e-12 * 0.9 * 0.9 * 0.9);
}

#[test]
fn no_decay_while_improving() {
    let (x, t) = linear_task(400, 4, 6);
    let s = ProbeSplits::by_id_hash(&ids(400), 6).unwrap();
    let (_, out) = train_probe(x.view(), &t, &s, &ProbeConfig { epochs: 8, ..small() }).unwrap();
    assert!(out.history.iter().all(|h| h.lr == 1e-3));
    assert!(out.history.windows(2).all(|w| w[1].val_loss < w[0].val_loss));
}

#[test]
fn standardized_training_is_affine_equivariant() {
    let (x, t) = linear_task(300, 4, 8);
    let s = ProbeSplits::by_id_hash(&ids(300), 8).unwrap();
    let cfg = small();
    let (_, base) = train_probe(x.view(), &t, &s, &cfg).unwrap();
    // positive scale only: a sign flip changes the standardized targets
    let moved: Vec<f64> = t.iter().map(|v| 2.5 * v + 40.0).collect();
    let (_, aff) = train_probe(x.view(), &moved, &s, &cfg).unwrap();
    assert!((aff.rmse_test / 2.5 - base.rmse_test).abs() < 1e-6);
    assert!((aff.rmse_test_standardized - base.rmse_test_standardized).abs() < 1e-6);
}

#[test]
fn standardization_is_a_no_op_on_zscored_targets() {
    let (x, t) = linear_task(300, 4, 9);
    let s = ProbeSplits::by_id_hash(&ids(300), 9).unwrap();
    let train: Vec<f64> = s.train.iter().map(|&i| t[i]).collect();
    let m = train.iter().sum::<f64>() / train.len() as f64;
    let sd = (train.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / train.len() as f64).sqrt();
    let z: Vec<f64> = t.iter().map(|v| (v - m) / sd).collect();
    let on = train_probe(x.view(), &z, &s, &small()).unwrap().1;
    let off = train_probe(x.view(), &z, &s, &ProbeConfig { target_standardization: false, ..small() }).unwrap().1;
    assert!((on.rmse_test - off.rmse_test).abs() < 1e-6, "{} vs {}", on.rmse_test, off.rmse_test);
}

#[test]
fn train_loss_mostly_decreases() {
    let (x, t) = linear_task(600, 8, 10);
    let s = ProbeSplits::by_id_hash(&ids(600), 10).unwrap();
    let (_, out) = train_probe(x.view(), &t, &s, &ProbeConfig { epochs: 40, ..small() }).unwrap();
    let steps = out.history.len() - 1;
    let down = out.history.windows(2).filter(|w| w[1].train_loss <= w[0].train_loss).count();
    assert!(down as f64 >= 0.8 * steps as f64, "{down}/{steps}");
}
