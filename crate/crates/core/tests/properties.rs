use num_complex::Complex;
use proptest::prelude::*;
use zeroforge::channel::{apply_flat_fading_with_gain, ebn0_to_noise_var, ChannelKind};
use zeroforge::constellation::{bits_to_zeros, encode, BitMessage, Constellation, ConstellationParams};
use zeroforge::decoders::{dizet_decode, nn_decode, real_bijection, real_bijection_inv, MlpParams};
use zeroforge::montecarlo::{wilson_center, wilson_half_width};
use zeroforge::poly::{multiset_distance, roots, ZeroPattern};
use zeroforge::training::{bce_loss, hinge_loss, lr_schedule, AdamState, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn message(k: usize) -> impl Strategy<Value = BitMessage> {
    prop::collection::vec(0u8..=1, k).prop_map(|b| BitMessage::new(b).unwrap())
}

fn k_and_message(max_k: usize) -> impl Strategy<Value = (usize, BitMessage)> {
    (2..=max_k).prop_flat_map(|k| (Just(k), message(k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn encoded_blocks_have_energy_k_plus_one_and_known_roots(
        (k, m) in k_and_message(10),
        lambda in 0.2f64..1.2,
    ) {
        let c = Constellation::<f64>::canonical(k, lambda).unwrap();
        let x = encode(&m, &c).unwrap();
        prop_assert!((x.energy() - (k + 1) as f64).abs() < 1e-10);
        let z = bits_to_zeros(&m, &c).unwrap();
        let r = roots(&x).unwrap();
        prop_assert!(multiset_distance(z.as_slice(), r.as_slice()).unwrap() < 1e-8);
    }

    #[test]
    fn dizet_is_perfect_without_noise((k, m) in k_and_message(10), lambda in 0.3f64..1.2) {
        let c = Constellation::<f64>::canonical(k, lambda).unwrap();
        prop_assert_eq!(dizet_decode(&encode(&m, &c).unwrap(), &c, k + 1).unwrap(), m);
    }

    #[test]
    fn dizet_ignores_complex_scaling(
        (k, m) in k_and_message(8),
        seed in any::<u64>(),
        mag in 0.01f64..100.0,
        arg in -3.14f64..3.14,
    ) {
        let c = Constellation::<f64>::canonical(k, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = ChannelKind::Awgn.apply(&encode(&m, &c).unwrap(), 0.3, &mut rng);
        let s = Complex::from_polar(mag, arg);
        prop_assert_eq!(dizet_decode(&y, &c, k + 1).unwrap(), dizet_decode(&y.scale(s), &c, k + 1).unwrap());
    }

    #[test]
    fn nn_decision_survives_fading_gain((k, m) in k_and_message(6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Constellation::<f64>::canonical(k, 0.5).unwrap();
        let mlp = MlpParams::<f64>::random(k, 16, &mut rng).unwrap();
        let (y, h) = apply_flat_fading_with_gain(&encode(&m, &c).unwrap(), 0.05, &mut rng);
        let unfaded = y.scale(h.inv());
        prop_assert_eq!(nn_decode(&y, &mlp, k).unwrap(), nn_decode(&unfaded, &mlp, k).unwrap());
    }

    #[test]
    fn real_bijection_round_trips(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..12)) {
        let z = ZeroPattern(v.iter().map(|&(a, b)| Complex::new(a, b)).collect());
        prop_assert_eq!(real_bijection_inv(&real_bijection(&z)).unwrap(), z);
    }

    #[test]
    fn parameterized_radius_exceeds_one(rho in -20.0f64..30.0, k in 2usize..12) {
        let mut p = ConstellationParams::<f64>::initial(k).unwrap();
        p.rho = rho;
        prop_assert!(p.radius() > 1.0);
        let back = ConstellationParams::from_constellation(&p.to_constellation().unwrap());
        prop_assert!((back.radius() - p.radius()).abs() < 1e-12 * p.radius());
    }

    #[test]
    fn lr_schedule_is_decreasing(n in 1usize..5000, hi in 1e-4f64..1.0, ratio in 1.5f64..1e4) {
        let mut cfg = TrainConfig::dizet(4);
        cfg.n_epoch = n;
        cfg.lr_initial = hi;
        cfg.lr_final = hi / ratio;
        prop_assert_eq!(lr_schedule(0, &cfg), cfg.lr_initial);
        prop_assert_eq!(lr_schedule(n, &cfg), cfg.lr_final);
        let step = (n / 50).max(1);
        let mut e = step;
        while e <= n {
            prop_assert!(lr_schedule(e, &cfg) < lr_schedule(e - step, &cfg));
            e += step;
        }
    }

    #[test]
    fn hinge_zero_exactly_when_margin_met(tau in -5.0f64..5.0, t in 0.1f64..3.0, neg in any::<bool>()) {
        let label = if neg { -1.0 } else { 1.0 };
        prop_assert_eq!(hinge_loss(tau, label, t) == 0.0, label * tau >= t);
        prop_assert!(hinge_loss(tau, label, t) >= 0.0);
    }

    #[test]
    fn bce_strictly_positive(p in -30.0f64..30.0, b in 0u8..=1) {
        prop_assert!(bce_loss(p, b) > 0.0);
    }

    #[test]
    fn adam_ignores_zero_gradients(p0 in prop::collection::vec(-10.0f64..10.0, 1..8), steps in 1usize..20) {
        let mut a = AdamState::<f64>::new(&[p0.len()]);
        let mut p = p0.clone();
        let g = vec![0.0; p.len()];
        for _ in 0..steps {
            a.step(&mut [&mut p], &[&g], 0.1).unwrap();
        }
        prop_assert_eq!(p, p0);
    }

    #[test]
    fn wilson_interval_stays_in_unit_range(n in 1u64..1_000_000, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac).floor() as u64;
        let (c, h) = (wilson_center(s, n), wilson_half_width(s, n));
        prop_assert!(h > 0.0 && h <= 0.5);
        prop_assert!(c - h >= -1e-12 && c + h <= 1.0 + 1e-12);
        let p = s as f64 / n as f64;
        prop_assert!(c - h <= p + 1e-12 && p <= c + h + 1e-12);
    }

    #[test]
    fn noise_variance_falls_with_ebn0(k in 1usize..16, a in -10.0f64..20.0, d in 0.01f64..10.0) {
        prop_assert!(ebn0_to_noise_var(a + d, k).unwrap() < ebn0_to_noise_var(a, k).unwrap());
    }
}
