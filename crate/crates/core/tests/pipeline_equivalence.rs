use dac_core::nn::Mlp;
use dac_core::noise::gen_blobs;
use dac_core::pipeline::{train_dac_observed, train_plain_observed, TrainConfig};

/// Parameters of an abstaining network with the abstention unit removed.
fn real_part(model: &Mlp) -> Vec<f64> {
    let dims = model.dims();
    let last = dims.len() - 2;
    let (fan_in, outputs) = (dims[last], dims[last + 1]);
    let mut out = Vec::new();
    for layer in 0..last {
        let (w, b) = model.layer(layer);
        out.extend_from_slice(w);
        out.extend_from_slice(b);
    }
    let (w, b) = model.layer(last);
    out.extend_from_slice(&w[..fan_in * (outputs - 1)]);
    out.extend_from_slice(&b[..outputs - 1]);
    out
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        warmup: 2,
        hidden: vec![16],
        initial_lr: 0.05,
        anneal_epochs: vec![3],
        batch_size: 32,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn masked_abstention_unit_tracks_plain_training() {
    let train = gen_blobs(3, 2, 100, 4.0, 1).unwrap();
    let val = gen_blobs(3, 2, 20, 4.0, 2).unwrap();
    let config = small_config();

    let mut plain = Vec::new();
    train_plain_observed(&train, None, &config, &mut |_, m| plain.push(m.params().to_vec())).unwrap();

    let masked = TrainConfig {
        fixed_alpha: Some(f64::INFINITY),
        ..config
    };
    let mut dac = Vec::new();
    let run = train_dac_observed(&train, &val, &masked, &mut |_, m| dac.push(real_part(m))).unwrap();
    assert_eq!(plain.len(), 5);
    for (epoch, (a, b)) in plain.iter().zip(&dac).enumerate() {
        assert_eq!(a.len(), b.len());
        let worst = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-12, "epoch {epoch}: {worst}");
    }
    assert!(run.stats.iter().all(|s| s.alpha.is_none()));
}

#[test]
fn identical_seeds_give_identical_runs() {
    let train = gen_blobs(3, 2, 60, 4.0, 1).unwrap();
    let val = gen_blobs(3, 2, 20, 4.0, 2).unwrap();
    let config = small_config();
    let a = dac_core::pipeline::train_dac(&train, &val, &config).unwrap();
    let b = dac_core::pipeline::train_dac(&train, &val, &config).unwrap();
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.last, b.last);
    assert_eq!(a.best, b.best);
    let other = dac_core::pipeline::train_dac(&train, &val, &TrainConfig { seed: 5, ..config }).unwrap();
    assert_ne!(a.last.model, other.last.model);
}

#[test]
fn scheduled_alpha_appears_after_warmup() {
    let train = gen_blobs(3, 2, 60, 4.0, 1).unwrap();
    let val = gen_blobs(3, 2, 20, 4.0, 2).unwrap();
    let run = dac_core::pipeline::train_dac(&train, &val, &small_config()).unwrap();
    for s in &run.stats {
        assert_eq!(s.alpha.is_some(), s.epoch >= 2, "epoch {}", s.epoch);
    }
    assert!(run.best.epoch >= 2);
}
