use proptest::prelude::*;

use steering_core::io;
use steering_core::lhs::{is_lhs, LhsModel};
use steering_core::linalg::{classical_relative_entropy, quantum_relative_entropy};
use steering_core::monotones::{robustness, steerable_weight};
use steering_core::random::{random_density, rng_from_seed};
use steering_core::snio::{random_snio, RandomSnioSpec};
use steering_core::suite::random_steerable;
use steering_core::{Assemblage, ProbTable};

fn lhs_assemblage(seed: u64, d: usize) -> Assemblage {
    LhsModel::random(2, 2, d, &mut rng_from_seed(seed)).assemble().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn assemblage_json_round_trips_exactly(seed in any::<u64>(), d in 2usize..=3) {
        let ass = lhs_assemblage(seed, d);
        let text = io::assemblage_to_json(&ass);
        let back = io::assemblage_from_json(&text).unwrap();
        prop_assert_eq!(back.max_distance(&ass), 0.0);
        prop_assert_eq!(io::assemblage_to_json(&back), text);
    }

    #[test]
    fn snio_json_round_trips(seed in any::<u64>(), n in 1usize..=3) {
        let snio = random_snio(&RandomSnioSpec::square(2, 2, 2, n), &mut rng_from_seed(seed)).unwrap();
        let back = io::snio_from_json(&io::snio_to_json(&snio)).unwrap();
        let ass = lhs_assemblage(seed ^ 1, 2);
        prop_assert!(back.apply(&ass).unwrap().max_distance(&snio.apply(&ass).unwrap()) < 1e-15);
    }

    #[test]
    fn composition_acts_sequentially(seed in any::<u64>(), n1 in 1usize..=2, n2 in 2usize..=3) {
        let mut rng = rng_from_seed(seed);
        let mut first_spec = RandomSnioSpec::square(2, 2, 2, n1);
        first_spec.r_f = 3;
        first_spec.d_f = 3;
        let first = random_snio(&first_spec, &mut rng).unwrap();
        let mut second_spec = RandomSnioSpec::square(3, 2, 3, n2);
        second_spec.r_f = 2;
        second_spec.d_f = 2;
        let second = random_snio(&second_spec, &mut rng).unwrap();
        let both = first.then(&second).unwrap();
        prop_assert!(both.validate().valid);
        let ass = lhs_assemblage(seed ^ 2, 2);
        let chained = second.apply(&first.apply(&ass).unwrap()).unwrap();
        prop_assert!(both.apply(&ass).unwrap().max_distance(&chained) < 1e-12);
    }

    #[test]
    fn divergences_are_nonnegative(seed in any::<u64>(), d in 2usize..=4) {
        let mut rng = rng_from_seed(seed);
        let rho = random_density(d, &mut rng);
        let sigma = random_density(d, &mut rng);
        prop_assert!(quantum_relative_entropy(&rho, &sigma).unwrap().to_f64() >= -1e-12);
        let p = ProbTable::joint(vec![d], rho.matrix().diagonal().iter().map(|z| z.re).collect()).unwrap();
        let q = ProbTable::joint(vec![d], sigma.matrix().diagonal().iter().map(|z| z.re).collect()).unwrap();
        prop_assert!(classical_relative_entropy(&p, &q).unwrap().to_f64() >= -1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn measures_are_bounded_and_certified(seed in 1u64..10_000) {
        let ass = random_steerable(2, 2, 2, seed).unwrap();
        let (w, ww) = steerable_weight(&ass).unwrap();
        let (r, rw) = robustness(&ass).unwrap();
        prop_assert!((0.05..=1.0 + 1e-9).contains(&w));
        prop_assert!(r > 0.0);
        for witness in [&ww, &rw] {
            prop_assert!(witness.reconstruction_error(&ass).unwrap() < 1e-6);
            prop_assert!(witness.min_eigenvalue().unwrap() > -1e-8);
            prop_assert!(is_lhs(&witness.lhs_part, 1e-6).unwrap().is_member);
        }
    }

    #[test]
    fn mixing_with_lhs_never_raises_the_weight(seed in 1u64..10_000, mu in 0.0f64..1.0) {
        let ass = random_steerable(2, 2, 2, seed).unwrap();
        let lhs = lhs_assemblage(seed, 2);
        let mixed = Assemblage::mix(&ass, &lhs, mu).unwrap();
        let (w0, _) = steerable_weight(&ass).unwrap();
        let (w, _) = steerable_weight(&mixed).unwrap();
        prop_assert!(w <= mu * w0 + 1e-6, "w = {w}, mu·w0 = {}", mu * w0);
    }

    #[test]
    fn snio_images_of_lhs_models_are_lhs(seed in any::<u64>(), n in 1usize..=3) {
        let ass = lhs_assemblage(seed, 2);
        let snio = random_snio(&RandomSnioSpec::square(2, 2, 2, n), &mut rng_from_seed(seed ^ 3)).unwrap();
        prop_assert!(is_lhs(&snio.apply(&ass).unwrap(), 1e-6).unwrap().is_member);
    }
}
