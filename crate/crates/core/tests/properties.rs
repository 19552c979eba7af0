use koopgait::lds::{apply_koopman, KoopmanOperator, LatentState, LATENT_CHANNELS};
use koopgait::nn::Parameterized;
use koopgait::pose::{mat_vec3, orthonormality_error, rotation_from_triple, triple_from_rotation};
use koopgait::recognition::{cosine_similarity, triplet_loss, GaitEmbedding};
use koopgait::train::adam::{AdamState, BETA1, BETA2};
use proptest::prelude::*;

fn latent() -> impl Strategy<Value = LatentState> {
    (prop::collection::vec(-5.0..5.0f64, LATENT_CHANNELS), prop::collection::vec(-5.0..5.0f64, LATENT_CHANNELS))
        .prop_map(|(re, im)| LatentState::new(re, im).unwrap())
}

fn operator() -> impl Strategy<Value = KoopmanOperator> {
    prop::collection::vec(-3.14..3.14f64, LATENT_CHANNELS).prop_map(|p| KoopmanOperator::from_phases(p).unwrap())
}

fn unit(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|v| GaitEmbedding::normalized(v).unwrap().values().to_vec())
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn rotations_preserve_norm_and_log_is_canonical(t in prop::array::uniform3(-12.0..12.0f64), v in prop::array::uniform3(-1.0..1.0f64)) {
        let m = rotation_from_triple(t).unwrap();
        prop_assert!(orthonormality_error(&m) < 1e-12);
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        prop_assume!(n > 1e-3);
        let u = [v[0] / n, v[1] / n, v[2] / n];
        let mu = mat_vec3(&m, &u);
        prop_assert!(((mu[0] * mu[0] + mu[1] * mu[1] + mu[2] * mu[2]).sqrt() - 1.0).abs() < 1e-12);
        let back = triple_from_rotation(&m).unwrap();
        prop_assert!((back[0] * back[0] + back[1] * back[1] + back[2] * back[2]).sqrt() <= std::f64::consts::PI + 1e-12);
    }

    #[test]
    fn koopman_is_an_isometric_semigroup(k in operator(), z in latent(), a in 0i64..500_000, b in 0i64..500_000) {
        let ab = apply_koopman(&k, &z, a + b).unwrap();
        prop_assert!((ab.norm() - z.norm()).abs() < 1e-9);
        let stepwise = apply_koopman(&k, &apply_koopman(&k, &z, a).unwrap(), b).unwrap();
        for (x, y) in ab.stacked().iter().zip(stepwise.stacked()) {
            prop_assert!((x - y).abs() < 1e-10 * (1.0 + z.norm()), "{x} vs {y}");
        }
        prop_assert!(k.max_modulus_error() < 1e-12);
    }

    #[test]
    fn cosine_is_symmetric_bounded_and_matches_euclidean(a in unit(16), b in unit(16)) {
        let ab = cosine_similarity(&a, &b).unwrap();
        prop_assert_eq!(ab.to_bits(), cosine_similarity(&b, &a).unwrap().to_bits());
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
        prop_assert!((distance(&a, &b).powi(2) - (2.0 - 2.0 * ab)).abs() < 1e-10);
    }

    #[test]
    fn satisfied_triplets_cost_nothing(a in unit(8), dp in unit(8), dn in unit(8), spread in 0.0..0.6f64, margin in 0.0..1.0f64) {
        let p = GaitEmbedding::normalized(a.iter().zip(&dp).map(|(x, d)| x + spread * d).collect()).unwrap().values().to_vec();
        let n = GaitEmbedding::normalized(a.iter().zip(&dn).map(|(x, d)| -x + spread * d).collect()).unwrap().values().to_vec();
        prop_assume!(distance(&a, &n) >= distance(&a, &p) + margin);
        prop_assert_eq!(triplet_loss(&a, &p, &n, margin).unwrap(), 0.0);
    }

    #[test]
    fn adam_updates_stay_within_the_moment_bound(
        grads in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 4), 1..150),
        scales in prop::collection::vec(-6i32..3, 150),
    ) {
        #[derive(Clone)]
        struct P(Vec<f64>);
        impl Parameterized for P {
            fn param_slices(&self) -> Vec<(&'static str, &[f64])> { vec![("p", &self.0)] }
            fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> { vec![("p", &mut self.0)] }
        }
        let lr = 1e-3;
        let mut params = P(vec![0.0; 4]);
        let mut adam = AdamState::new(&params, lr);
        let gamma = BETA1 * BETA1 / BETA2;
        for (t, (g, s)) in grads.iter().zip(&scales).enumerate() {
            let t = t as i32 + 1;
            let g = P(g.iter().map(|v| v * 10f64.powi(*s)).collect());
            let update = adam.step(&mut params, &g).unwrap();
            let sum = (1.0 - gamma.powi(t)) / (1.0 - gamma);
            let bound = (1.0 - BETA1) * (sum * (1.0 - BETA2.powi(t))).sqrt() / ((1.0 - BETA1.powi(t)) * (1.0 - BETA2).sqrt());
            prop_assert!(update <= lr * bound * (1.0 + 1e-12), "step {t}: {update} > {}", lr * bound);
        }
    }
}

#[test]
fn adam_first_step_equals_the_learning_rate_but_spikes_can_exceed_it() {
    #[derive(Clone)]
    struct P(Vec<f64>);
    impl Parameterized for P {
        fn param_slices(&self) -> Vec<(&'static str, &[f64])> {
            vec![("p", &self.0)]
        }
        fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
            vec![("p", &mut self.0)]
        }
    }
    let lr = 1e-3;
    let mut params = P(vec![0.0]);
    let mut adam = AdamState::new(&params, lr);
    let first = adam.step(&mut params, &P(vec![5.0])).unwrap();
    assert!((first - lr).abs() < 1e-8 * lr);
    let mut last = 0.0;
    for _ in 0..20_000 {
        last = adam.step(&mut params, &P(vec![0.0])).unwrap();
    }
    assert!(last < 1e-12);
    let spike = adam.step(&mut params, &P(vec![1.0])).unwrap();
    assert!(spike > 3.0 * lr && spike < 3.17 * lr, "{spike}");
}
