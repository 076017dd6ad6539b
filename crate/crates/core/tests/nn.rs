//! Network checks: finite-difference gradient verification, overfit sanity,
//! training stability, dropout statistics and model file handling.

use doamask::error::Error;
use doamask::features::GccFeatureMap;
use doamask::nn::{
    self, load_model, loss_and_grads, model_init, param_count, predict, save_model, train_step,
    AdamState, Batch, Model, ModelConfig,
};
use doamask::rng::rng;
use rand::Rng;

fn random_batch(n: usize, seed: u64) -> Batch {
    let mut r = rng(seed);
    let inputs: Vec<f64> = (0..n * nn::INPUT_LEN)
        .map(|_| r.gen_range(-1.0..1.0))
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..72)).collect();
    Batch { inputs, labels }
}

fn loss_only(model: &Model, batch: &Batch) -> f64 {
    let mut r = rng(0);
    let (loss, _, _) = loss_and_grads(model, batch, &mut r, false);
    loss
}

#[test]
fn gradients_match_finite_differences() {
    let cfg = ModelConfig::default();
    let mut model = model_init(&cfg, 11).unwrap();
    let batch = random_batch(2, 5);
    let mut r = rng(0);
    let (_, grads, _) = loss_and_grads(&model, &batch, &mut r, false);

    let h = 1e-5;
    let mut probe = rng(99);
    let n_tensors = grads.tensors.len();
    let mut worst = 0.0f64;
    for t in 0..n_tensors {
        let len = grads.tensors[t].len();
        let n_samples = 12.min(len);
        for _ in 0..n_samples {
            let i = probe.gen_range(0..len);
            let analytic = grads.tensors[t][i];
            perturb(&mut model, t, i, h);
            let lp = loss_only(&model, &batch);
            perturb(&mut model, t, i, -2.0 * h);
            let lm = loss_only(&model, &batch);
            perturb(&mut model, t, i, h);
            let numeric = (lp - lm) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic - numeric).abs() / denom;
            worst = worst.max(rel);
            assert!(
                rel < 1e-4,
                "tensor {} ({}) index {}: analytic {analytic:.3e} vs numeric {numeric:.3e} (rel {rel:.3e})",
                t,
                model.tensor_names()[t],
                i
            );
        }
    }
    println!("worst relative gradient error: {worst:.3e}");
}

fn perturb(model: &mut Model, tensor: usize, index: usize, delta: f64) {
    let mut t = 0;
    model.visit_params_mut(|p| {
        if t == tensor {
            p[index] += delta;
        }
        t += 1;
    });
}

#[test]
fn overfits_small_batch() {
    let cfg = ModelConfig {
        dropout_rate: 0.0,
        ..ModelConfig::default()
    };
    let mut model = model_init(&cfg, 3).unwrap();
    let mut adam = AdamState::new(&model, 2e-3);
    let batch = random_batch(4, 8);
    let mut r = rng(1);
    let mut loss = f64::INFINITY;
    for _ in 0..400 {
        loss = train_step(&mut model, &mut adam, &batch, &mut r);
        if loss < 0.05 {
            break;
        }
    }
    assert!(loss < 0.1, "failed to overfit 4 samples: final loss {loss}");
}

#[test]
fn training_stays_finite() {
    let mut model = model_init(&ModelConfig::default(), 7).unwrap();
    let mut adam = AdamState::new(&model, nn::ADAM_LR);
    let mut r = rng(2);
    for step in 0..1000 {
        let batch = random_batch(4, 1000 + step);
        let loss = train_step(&mut model, &mut adam, &batch, &mut r);
        assert!(loss.is_finite(), "non-finite loss at step {step}");
    }
    let mut all_finite = true;
    model.visit_params(|t| all_finite &= t.iter().all(|v| v.is_finite()));
    assert!(all_finite, "non-finite parameter after 1000 steps");
}

#[test]
fn dropout_statistics() {
    let mut x = vec![1.0; 100_000];
    let mut r = rng(4);
    let mask = doamask::nn::layers::dropout_forward(&mut x, 0.5, &mut r);
    let kept = x.iter().filter(|v| **v != 0.0).count() as f64 / x.len() as f64;
    assert!((kept - 0.5).abs() < 0.03, "keep fraction {kept}");
    for (&v, &m) in x.iter().zip(mask.iter()) {
        if m != 0.0 {
            assert_eq!(v, 2.0); // inverted dropout rescales survivors
        }
    }
}

#[test]
fn uniform_logits_loss_is_ln_72() {
    let mut model = model_init(&ModelConfig::default(), 5).unwrap();
    // zero the output layer: logits identically zero -> uniform softmax
    model.dense[2].w.fill(0.0);
    model.dense[2].b.fill(0.0);
    let batch = random_batch(3, 6);
    let loss = loss_only(&model, &batch);
    assert!((loss - (72.0f64).ln()).abs() < 1e-12, "loss {loss}");
}

#[test]
fn predict_breaks_ties_toward_lowest_class() {
    let mut model = model_init(&ModelConfig::default(), 5).unwrap();
    model.dense[2].w.fill(0.0);
    model.dense[2].b.fill(0.0);
    let mut map = GccFeatureMap::zeros(0);
    let mut r = rng(7);
    for v in map.values.iter_mut() {
        *v = r.gen_range(-1.0..1.0);
    }
    assert_eq!(predict(&model, &map), 0);
}

#[test]
fn init_and_training_deterministic() {
    let cfg = ModelConfig::default();
    let a = model_init(&cfg, 42).unwrap();
    let b = model_init(&cfg, 42).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, model_init(&cfg, 43).unwrap());

    let batch = random_batch(3, 9);
    let mut m1 = a.clone();
    let mut m2 = b.clone();
    let mut ad1 = AdamState::new(&m1, nn::ADAM_LR);
    let mut ad2 = AdamState::new(&m2, nn::ADAM_LR);
    let mut r1 = rng(10);
    let mut r2 = rng(10);
    for _ in 0..3 {
        let l1 = train_step(&mut m1, &mut ad1, &batch, &mut r1);
        let l2 = train_step(&mut m2, &mut ad2, &batch, &mut r2);
        assert_eq!(l1, l2);
    }
    assert_eq!(m1, m2);
}

#[test]
fn expected_param_count() {
    let cfg = ModelConfig::default();
    let model = model_init(&cfg, 1).unwrap();
    assert_eq!(param_count(&model), cfg.param_count());
    assert_eq!(param_count(&model), 36184);
}

#[test]
fn save_load_roundtrip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.doam");
    let mut model = model_init(&ModelConfig::default(), 21).unwrap();
    // make running stats non-trivial so the roundtrip covers them
    let batch = random_batch(2, 2);
    let mut adam = AdamState::new(&model, nn::ADAM_LR);
    let mut r = rng(3);
    train_step(&mut model, &mut adam, &batch, &mut r);

    save_model(&path, &model).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(model, back);

    let bytes = std::fs::read(&path).unwrap();

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    std::fs::write(&path, &bad_magic).unwrap();
    assert!(matches!(load_model(&path), Err(Error::NotAModelFile)));

    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    std::fs::write(&path, &bad_version).unwrap();
    assert!(matches!(
        load_model(&path),
        Err(Error::VersionMismatch { found: 9, .. })
    ));

    std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
    assert!(matches!(load_model(&path), Err(Error::CorruptContainer(_))));

    std::fs::write(&path, &bytes).unwrap();
    let mut extended = bytes.clone();
    extended.extend_from_slice(&[0u8; 8]);
    std::fs::write(&path, &extended).unwrap();
    assert!(matches!(load_model(&path), Err(Error::CorruptContainer(_))));

    assert!(matches!(
        load_model(&dir.path().join("missing.doam")),
        Err(Error::FileNotFound(_))
    ));
}
