use rand::Rng;
use urban_lrp::nn::*;
use urban_lrp::rng::seeded;

fn image_batch(shape: [usize; 3], n: usize, seed: u64) -> Tensor<f32> {
    let mut rng = seeded(seed);
    let len = n * shape.iter().product::<usize>();
    Tensor::from_vec(&[n, shape[0], shape[1], shape[2]], (0..len).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

fn record_len(layer: &Layer<f32>) -> usize {
    match layer {
        Layer::Conv2d(_) => 20,
        Layer::BatchNorm(_) => 12,
        Layer::MaxPool(_) => 8,
        Layer::Dropout(_) => 4,
        Layer::Dense(_) => 8,
        Layer::Relu | Layer::Softmax => 0,
    }
}

#[test]
fn canonical_checkpoint_roundtrip_and_size() {
    let net = Network::<f32>::build(&Architecture::canonical(), 11).unwrap();
    let mut bytes = Vec::new();
    write_model(&net, &mut bytes).unwrap();

    // Trainable: conv 3·3·cin·cout + cout, BN scale and shift, dense
    // in·out + out. Batch norm also stores its two running statistics.
    let convs = [(3, 32), (32, 32), (32, 64), (64, 64), (64, 128)];
    let denses = [(6 * 6 * 128, 512), (512, 512), (512, 10)];
    let trainable: usize = convs.iter().map(|&(i, o)| 9 * i * o + o + 2 * o).sum::<usize>()
        + denses.iter().map(|&(i, o)| i * o + o).sum::<usize>();
    assert_eq!(net.param_count(), trainable);
    let running: usize = convs.iter().map(|&(_, o)| 2 * o).sum();
    let records: usize = net.layers().iter().map(|l| 8 + record_len(l)).sum();
    assert_eq!(bytes.len(), HEADER_LEN + records + 4 * (trainable + running));

    let back = read_model(&bytes[..]).unwrap();
    assert_eq!(back, net);
    let mut again = Vec::new();
    write_model(&back, &mut again).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn reloaded_model_predicts_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rmdl");
    let net = Network::<f32>::build(&Architecture::reduced(4), 2).unwrap();
    save_model(&net, &path).unwrap();
    let back = load_model(&path).unwrap();
    let x = image_batch([64, 64, 3], 10, 3);
    let a = net.forward(&x).unwrap();
    let b = back.forward(&x).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let net = Network::<f32>::build(&Architecture::reduced(4), 2).unwrap();
    let mut bytes = Vec::new();
    write_model(&net, &mut bytes).unwrap();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_model(&bad[..]), Err(NnError::Format(_))));
    let mut bad = bytes.clone();
    bad[4] = 2;
    assert!(matches!(read_model(&bad[..]), Err(NnError::Format(_))));
    match read_model(&bytes[..bytes.len() - 3]) {
        Err(NnError::Io(e)) => assert_eq!(e.kind(), std::io::ErrorKind::UnexpectedEof),
        other => panic!("expected an IO error, got {other:?}"),
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(read_model(&long[..]).is_err());
}

#[test]
fn dropout_zero_fraction() {
    let d = Dropout { rate: 0.4 };
    let x = Tensor::<f64>::from_vec(&[1, 10_000], vec![1.0; 10_000]).unwrap();
    let (y, mask) = d.forward_train(&x, &mut seeded(99));
    let zeros = mask.iter().filter(|m| **m == 0.0).count() as f64 / 1e4;
    assert!((zeros - 0.4).abs() <= 0.02, "{zeros}");
    let kept = 1.0 / (1.0 - 0.4f32 as f64);
    assert!(y.data().iter().all(|&v| v == 0.0 || (v - kept).abs() < 1e-12));
}

#[test]
fn batchnorm_inference_matches_train_mode_under_batch_statistics() {
    let mut rng = seeded(1);
    let (n, h, w, c) = (4, 3, 3, 2);
    let data: Vec<f64> = (0..n * h * w * c).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let x = Tensor::from_vec(&[n, h, w, c], data.clone()).unwrap();
    let mut bn = BatchNorm::<f64>::new(c);
    bn.gamma = vec![1.5, 0.5];
    bn.beta = vec![0.1, -0.2];
    for ch in 0..c {
        let vals: Vec<f64> = data.iter().skip(ch).step_by(c).copied().collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        bn.running_mean[ch] = mean;
        bn.running_var[ch] = var;
    }
    let infer = bn.forward_infer(&x).unwrap();
    let (train, _) = bn.clone().forward_train(&x, false).unwrap();
    for (a, b) in infer.data().iter().zip(train.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

/// Averaged over ten initializations (three random inputs each), no class
/// is favoured: the mean probability of every class lies in [0.02, 0.3].
#[test]
fn fresh_models_are_near_uniform_on_average() {
    let mut mean = vec![0.0f64; 10];
    for seed in 0..10 {
        let net = Network::<f32>::build(&Architecture::canonical(), seed).unwrap();
        let p = net.forward(&image_batch([220, 220, 3], 3, seed + 50)).unwrap();
        for row in p.data().chunks_exact(10) {
            let sum: f32 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64 / 30.0;
            }
        }
    }
    assert!(mean.iter().all(|v| (0.02..=0.3).contains(v)), "{mean:?}");
}

fn toy_split(n: usize, seed: u64) -> LabeledSamples<f32> {
    // Class 1 iff x0 + x1 > 1 on 1×1×2 "images".
    let mut rng = seeded(seed);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    while labels.len() < n {
        let (a, b): (f32, f32) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        if (a + b - 1.0).abs() < 0.1 {
            continue;
        }
        data.extend([a, b]);
        labels.push(usize::from(a + b > 1.0));
    }
    LabeledSamples::new([1, 1, 2], data, labels).unwrap()
}

fn dense_stub(seed: u64) -> Network<f32> {
    let mut d = Dense::new(2, 2);
    d.init_he(&mut seeded(seed));
    Network::new([1, 1, 2], vec![Layer::Dense(d), Layer::Softmax]).unwrap()
}

#[test]
fn linearly_separable_toy_converges() {
    let (tr, va) = (toy_split(200, 1), toy_split(100, 2));
    let mut net = dense_stub(3);
    let cfg = TrainConfig {
        max_epochs: 20,
        patience: 19,
        batch_size: 8,
        optimizer: NadamConfig { lr: 0.05, ..NadamConfig::default() },
        seed: 4,
        class_weights: None,
    };
    let report = train(&mut net, &tr, &va, &cfg).unwrap();
    assert!(report.epochs.iter().any(|e| e.val_acc == 1.0), "{}", report.to_csv());
    assert!(report.best_epoch <= report.stopped_epoch && report.stopped_epoch <= 20);
}

#[test]
fn frozen_training_stops_after_patience() {
    let (tr, va) = (toy_split(40, 5), toy_split(20, 6));
    let mut net = dense_stub(3);
    let before = net.clone();
    let cfg = TrainConfig {
        optimizer: NadamConfig { lr: 0.0, ..NadamConfig::default() },
        ..TrainConfig::default()
    };
    let report = train(&mut net, &tr, &va, &cfg).unwrap();
    assert_eq!((report.best_epoch, report.stopped_epoch), (1, 11));
    assert_eq!(net, before);
}

#[test]
fn training_is_deterministic() {
    let (tr, va) = (toy_split(64, 7), toy_split(32, 8));
    let arch = Architecture {
        input_size: 1,
        input_channels: 2,
        conv_channels: vec![],
        kernel: 3,
        dense_units: vec![8],
        dropout: 0.4,
        num_classes: 2,
    };
    let run = || {
        let mut net = Network::<f32>::build(&arch, 9).unwrap();
        let cfg = TrainConfig { max_epochs: 6, patience: 3, seed: 10, ..TrainConfig::default() };
        let report = train(&mut net, &tr, &va, &cfg).unwrap();
        let mut bytes = Vec::new();
        write_model(&net, &mut bytes).unwrap();
        (bytes, report.to_csv())
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_inputs_abort_training() {
    let mut tr = toy_split(16, 1);
    tr.data[3] = f32::NAN;
    let va = toy_split(8, 2);
    let mut net = dense_stub(1);
    let err = train(&mut net, &tr, &va, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, NnError::NonFinite { epoch: 1, .. }), "{err}");
}
