mod common;

use ids_core::energy::{gibbs_chain, sample_bernoulli, RbmParams};
use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_lib(rbm: &common::TinyRbm) -> RbmParams {
    RbmParams {
        weights: rbm.w.clone(),
        visible_bias: rbm.a.clone(),
        hidden_bias: rbm.b.clone(),
    }
}

#[test]
fn one_step_statistics_match_the_enumerated_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let oracle = common::TinyRbm::random(2, 2, 1.0, &mut rng);
    let model = to_lib(&oracle);
    let v0 = common::bits(0b01, 2);
    let (exact_vh, exact_v, exact_h) = oracle.one_step_negative(&v0);

    let chains = 100_000;
    let start = Array2::from_shape_fn((chains, 2), |(_, c)| v0[c]);
    let out = gibbs_chain(&model, start.view(), 1, &mut rng).unwrap();
    let n = chains as f64;

    let check = |name: String, samples: Vec<f64>, expected: f64| {
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt().max(1e-12);
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "{name}: empirical {mean:.5}, exact {expected:.5}, se {se:.2e}"
        );
    };
    for i in 0..2 {
        for j in 0..2 {
            let s: Vec<f64> = (0..chains).map(|r| out.visible[[r, i]] * out.model_hidden[[r, j]]).collect();
            check(format!("<v{i} h{j}>"), s, exact_vh[[i, j]]);
        }
        check(format!("<v{i}>"), out.visible.column(i).to_vec(), exact_v[i]);
        check(format!("<h{i}>"), out.model_hidden.column(i).to_vec(), exact_h[i]);
    }
}

/// Upper 1% point of the chi-squared distribution with 15 degrees of freedom.
const CHI2_15_AT_001: f64 = 30.578;

#[test]
fn long_chains_reach_the_boltzmann_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let oracle = common::TinyRbm::random(2, 2, 1.0, &mut rng);
    let model = to_lib(&oracle);
    let joint = oracle.joint();

    let mut counts = [0u64; 16];
    let per_block = 100_000;
    for _ in 0..10 {
        let start = Array2::from_shape_fn((per_block, 2), |(r, c)| ((r >> c) & 1) as f64);
        let out = gibbs_chain(&model, start.view(), 50, &mut rng).unwrap();
        let hidden = sample_bernoulli(&out.model_hidden, &mut rng);
        for (v, h) in out.visible.axis_iter(Axis(0)).zip(hidden.axis_iter(Axis(0))) {
            let vs = v[0] as usize | (v[1] as usize) << 1;
            let hs = h[0] as usize | (h[1] as usize) << 1;
            counts[(vs << 2) | hs] += 1;
        }
    }
    let total = (10 * per_block) as f64;
    let chi2: f64 = counts
        .iter()
        .zip(&joint)
        .map(|(&o, &p)| {
            let e = p * total;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    assert!(chi2 < CHI2_15_AT_001, "chi-squared {chi2:.2} over 10^6 samples");
}
