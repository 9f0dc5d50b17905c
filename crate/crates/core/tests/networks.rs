use oscguard_core::dataset::{split, synthesize_dataset, DatasetConfig};
use oscguard_core::fleet::WINDOW_TICKS;
use oscguard_core::nn::{
    grad_check, train_hyper, ArchFamily, Checkpoint, CheckpointMeta, Hyperparams, Model, NnError, Tensor,
};
use oscguard_core::rng::rng_from_seed;
use rand::Rng;

fn random_batch(n: usize, ticks: usize, seed: u64) -> Tensor {
    let mut rng = rng_from_seed(seed);
    let len = 2 * ticks;
    Tensor::new(vec![n, ticks, 2], (0..n * len).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

// Desk layer stacks with batch norm and dropout included. Over 240 steps a
// small-init LSTM has recurrent gradients near 1e-9, which central differences
// cannot resolve, so the LSTM stack runs on 24 steps.
#[test]
fn desk_networks_pass_gradient_check() {
    for (family, ticks, init_std) in [(ArchFamily::Lstm, 24, 0.2), (ArchFamily::ConvLstm, WINDOW_TICKS, 0.3)] {
        let mut h = Hyperparams::desk(family);
        h.units1 = h.units1.min(8);
        let mut spec = h.spec(family);
        spec.input_shape[0] = ticks;
        spec.init_std = init_std;
        let mut model = Model::new(spec, 4).unwrap();
        let x = random_batch(3, ticks, 9);
        let report = grad_check(&mut model, &x, &[1.0, 0.0, 1.0], 1e-5, 60, 2).unwrap();
        assert!(report.max_rel_error < 1e-4, "{family:?}: {report:?}");
        assert!(report.per_kind.iter().any(|k| k.kind == "batch_norm"));
    }
}

#[test]
fn training_is_reproducible_and_checkpoints_round_trip() {
    let ds = synthesize_dataset(&DatasetConfig { normal: 30, attack: 30, ..DatasetConfig::default() }, 8).unwrap();
    let (train, test) = split(&ds, 0.8, &mut rng_from_seed(0)).unwrap();
    let mut h = Hyperparams::desk(ArchFamily::Lstm);
    h.epochs = 2;
    let a = train_hyper(ArchFamily::Lstm, &h, &train, 5).unwrap();
    let b = train_hyper(ArchFamily::Lstm, &h, &train, 5).unwrap();
    assert_eq!(a.history.epoch_loss, b.history.epoch_loss);

    let mut bytes = Vec::new();
    a.checkpoint.write(&mut bytes).unwrap();
    let back = Checkpoint::read(&bytes[..]).unwrap();
    let mut restored = back.to_model().unwrap();
    let mut original = a.model;
    let test = oscguard_core::dataset::Dataset { bounds: train.bounds, ..test };
    for i in 0..test.len() {
        let w = test.window(i);
        assert_eq!(original.predict(&w).unwrap().0, restored.predict(&w).unwrap().0);
    }
    assert_eq!(back.meta.norm_bounds, Some(train.bounds));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let model = Model::new(Hyperparams::desk(ArchFamily::Lstm).spec(ArchFamily::Lstm), 1).unwrap();
    let ck = Checkpoint::from_model(
        &model,
        CheckpointMeta {
            family: None,
            hyperparams: None,
            epochs: 0,
            seed: 1,
            final_loss: 0.0,
            loss_history: Vec::new(),
            norm_bounds: None,
            regime: None,
        },
    );
    let mut bytes = Vec::new();
    ck.write(&mut bytes).unwrap();
    bytes[1] = b'X';
    let err = Checkpoint::read(&bytes[..]).unwrap_err();
    assert!(matches!(err, NnError::BadMagic));
    assert!(err.to_string().contains("bad magic"));
}
