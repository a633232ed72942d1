use fedcycle_core::client::{draw_local_epochs, local_train, ClientState};
use fedcycle_core::data::generate_blobs;
use fedcycle_core::model::{init_params, loss_and_grad, Sample, StrategyContext};
use fedcycle_core::{ClientConfig, ClientDataset, EpochRange, LossStrategy, ModelSpec};

fn config(batch_size: usize, local_lr: f64, strategy: LossStrategy) -> ClientConfig {
    ClientConfig {
        batch_size,
        local_lr,
        strategy,
        epoch_range: EpochRange(1, 5),
    }
}

fn dataset(seed: u64) -> ClientDataset {
    ClientDataset::new(4, generate_blobs(3, 5, 12, 0.3, seed).unwrap())
}

#[test]
fn training_is_deterministic() {
    let spec = ModelSpec::mlp1(5, 6, 3);
    let data = dataset(1);
    let global = init_params(&spec, 2);
    for strategy in [
        LossStrategy::FedAvg,
        LossStrategy::FedProx { mu: 0.1 },
        LossStrategy::Moon { tau: 0.5, weight: 1.0 },
        LossStrategy::FedRs { alpha: 0.5 },
    ] {
        let cfg = config(5, 0.1, strategy);
        let state = ClientState::new(4, 77);
        let a = local_train(&spec, &global, &data, &state, &cfg, 3).unwrap();
        let b = local_train(&spec, &global, &data, &state, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.num_samples, 36);
        assert_eq!(a.0.epochs_used, 3);
        assert_eq!(a.1.prev_local_params.as_ref(), Some(&a.0.params));
        assert_ne!(a.1.rng_seed, state.rng_seed);
    }
}

#[test]
fn full_batch_loss_descends_each_epoch() {
    let spec = ModelSpec::softmax_linear(5, 3);
    for seed in 0..20 {
        let data = dataset(seed);
        let global = init_params(&spec, seed + 100);
        let cfg = config(data.len(), 1e-3, LossStrategy::FedAvg);
        let state = ClientState::new(4, seed);
        let ctx = StrategyContext {
            global_params: Some(&global),
            prev_local_params: None,
            present_classes: Some(&data.present_classes),
        };
        let samples: Vec<Sample<'_>> = data.data.samples().collect();
        let loss_at = |p: &fedcycle_core::ParamVector| {
            loss_and_grad(&spec, &LossStrategy::FedAvg, p, &samples, &ctx)
                .unwrap()
                .0
        };
        let mut prev = loss_at(&global);
        for epochs in 1..=5 {
            let (update, _) = local_train(&spec, &global, &data, &state, &cfg, epochs).unwrap();
            let now = loss_at(&update.params);
            assert!(now <= prev, "seed {seed} epoch {epochs}: {now} > {prev}");
            prev = now;
        }
    }
}

#[test]
fn prox_pulls_towards_global() {
    let spec = ModelSpec::softmax_linear(5, 3);
    let data = dataset(3);
    let global = init_params(&spec, 9);
    let state = ClientState::new(4, 1);
    let dist = |mu: f64| {
        let cfg = config(4, 0.05, LossStrategy::FedProx { mu });
        let (u, _) = local_train(&spec, &global, &data, &state, &cfg, 4).unwrap();
        u.params.distance(&global).unwrap()
    };
    let ds: Vec<f64> = [0.0, 1.0, 5.0].into_iter().map(dist).collect();
    assert!(ds.windows(2).all(|w| w[1] < w[0]), "{ds:?}");
}

#[test]
fn epoch_draws_cover_the_range() {
    let cfg = config(1, 0.1, LossStrategy::FedAvg);
    let mut counts = [0usize; 6];
    for round in 0..2000 {
        let e = draw_local_epochs(&cfg, round, 3, 11);
        assert!((1..=5).contains(&e));
        counts[e] += 1;
    }
    for &c in &counts[1..] {
        assert!((c as f64 - 400.0).abs() < 80.0, "{counts:?}");
    }
    assert_eq!(draw_local_epochs(&cfg, 8, 3, 11), draw_local_epochs(&cfg, 8, 3, 11));
}
