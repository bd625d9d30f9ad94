use ids_core::dbn::{fine_tune, pretrain, pretrain_with, FineTuneConfig, LayerSpec, Network, Upward};
use ids_core::energy::CdConfig;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn two_clusters(rows: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..2)).collect();
    let x = Array2::from_shape_fn((rows, 4), |(r, c)| {
        let centre = if labels[r] == 0 { -1.5 } else { 1.5 };
        let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
        let z: f64 = StandardNormal.sample(&mut rng);
        sign * centre + 0.5 * z
    });
    (x, labels)
}

#[test]
fn first_layer_reconstruction_improves() {
    let (x, _) = two_clusters(200, 1);
    let spec = LayerSpec::new(vec![4, 8, 8]).unwrap();
    let cfg = CdConfig {
        learning_rate: 0.01,
        k: 1,
        batch_size: 20,
        epochs: 50,
        rng_seed: 3,
    };
    for upward in [Upward::Probabilities, Upward::Samples] {
        let pre = pretrain_with(x.view(), &spec, &cfg, upward).unwrap();
        let grbm = &pre.reconstruction[0];
        assert_eq!(grbm.len(), 50);
        assert!(grbm[49] < grbm[0], "{upward:?}: epoch 1 {} vs epoch 50 {}", grbm[0], grbm[49]);
        assert_eq!(pre.rbms.len(), 1);
    }
}

#[test]
fn fine_tuning_lowers_the_loss_and_separates_clusters() {
    let (x, y) = two_clusters(200, 2);
    let spec = LayerSpec::new(vec![4, 8, 6]).unwrap();
    let cd = CdConfig {
        learning_rate: 0.01,
        k: 1,
        batch_size: 20,
        epochs: 10,
        rng_seed: 4,
    };
    let pre = pretrain(x.view(), &spec, &cd).unwrap();
    let mut net = Network::new(pre.grbm, pre.rbms, 2).unwrap();
    let start = net.mean_cross_entropy(x.view(), &y).unwrap();
    assert!((start - 2f64.ln()).abs() < 1e-12, "zero head starts at ln 2");
    let cfg = FineTuneConfig {
        learning_rate: 0.2,
        batch_size: 10,
        epochs: 40,
        rng_seed: 5,
    };
    let (loss, acc) = fine_tune(&mut net, x.view(), &y, &cfg).unwrap();
    assert!(loss[39] < loss[0] && loss[0] < start, "{loss:?}");
    assert!(acc[39] > 0.95, "final accuracy {}", acc[39]);
}
