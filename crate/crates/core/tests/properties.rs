use std::collections::BTreeMap;

use mnar_core::estimate::{fold_assignment, onestep_theta, plugin_theta, stable_sum};
use mnar_core::identify::{
    identified_full_law, psi_prop1, theta_binary, theta_binary_with_rho, theta_prop1, selection_odds_ratio,
};
use mnar_core::mdag::{build_mdag, d_separated, split, GraphSpec, NodeKind};
use mnar_core::nuisance::{fit_nuisances, nuisances_from_law, perturb, BumpSpec, NuisanceName, SmoothingConfig};
use mnar_core::permlaw::{Dataset, X_FULL, Y_FULL};
use mnar_core::strata::ObservedStrata;
use mnar_core::tabular::TabularLaw;
use mnar_core::vonmises::{expansion_check, expansion_check_binary, influence_mean, random_rational_law};
use mnar_core::{ExactLaw, Law, Model, Rational};
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn law(seed: u64, x_card: usize) -> Model {
    Model::random(&mut ChaCha8Rng::seed_from_u64(seed), 2, x_card, 0.05)
}

fn exact_law(seed: u64, x_card: usize) -> mnar_core::ExactModel {
    random_rational_law(&mut ChaCha8Rng::seed_from_u64(seed), x_card, 12).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identification_is_exact_in_rationals(seed in any::<u64>(), x_card in 2usize..5) {
        let m = exact_law(seed, x_card);
        let obs = m.observed_law();
        prop_assert_eq!(theta_prop1(&obs).unwrap(), m.true_theta().unwrap());
        prop_assert_eq!(psi_prop1(&obs).unwrap(), m.true_psi().unwrap());
        prop_assert_eq!(theta_binary(&obs).unwrap(), m.true_theta().unwrap());
        let full = identified_full_law(&obs).unwrap();
        prop_assert_eq!(full, m.full_law().marginal(&[Y_FULL, X_FULL]).unwrap());
    }

    #[test]
    fn expansion_identity_has_zero_residual_in_rationals(seed in any::<u64>(), x_card in 2usize..4) {
        let p = exact_law(seed, x_card).observed_law();
        let pbar = exact_law(seed.wrapping_add(1), x_card).observed_law();
        let r = expansion_check(&p, &pbar).unwrap();
        prop_assert!(r.identity_residual.as_ref().unwrap().is_zero());
        prop_assert!(influence_mean(&p).unwrap().is_zero());
        let rho = selection_odds_ratio(&p).unwrap();
        let b = expansion_check_binary(&p, &pbar, &rho).unwrap();
        prop_assert!(b.identity_residual.as_ref().unwrap().is_zero());
        prop_assert_eq!(b.piece("s2").unwrap(), b.piece("s2_direct").unwrap());
    }

    #[test]
    fn identical_laws_have_zero_expansion(seed in any::<u64>(), x_card in 2usize..5) {
        let p = law(seed, x_card).observed_law();
        let r = expansion_check(&p, &p).unwrap();
        prop_assert_eq!(r.if_integral, 0.0);
        prop_assert_eq!(r.remainder_identity, 0.0);
        prop_assert!(r.pieces.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn binary_form_with_true_rho_matches_general(seed in any::<u64>(), x_card in 2usize..5) {
        let obs = law(seed, x_card).observed_law();
        let rho = selection_odds_ratio(&obs).unwrap();
        let gap = (theta_binary_with_rho(&obs, &rho).unwrap() - theta_prop1(&obs).unwrap()).abs();
        prop_assert!(gap < 1e-12, "gap {}", gap);
    }

    #[test]
    fn mix_endpoints_are_exact(seed in any::<u64>()) {
        let p = exact_law(seed, 3).observed_law();
        let q = exact_law(seed ^ 0xFF, 3).observed_law();
        prop_assert_eq!(&p.mix(&q, Rational::zero()).unwrap(), &p);
        prop_assert_eq!(&p.mix(&q, Rational::one()).unwrap(), &q);
    }

    #[test]
    fn law_json_round_trip(seed in any::<u64>(), x_card in 2usize..5) {
        let m = law(seed, x_card);
        prop_assert_eq!(&Model::from_json(&m.to_json()).unwrap(), &m);
        let obs = m.observed_law();
        prop_assert_eq!(&Law::from_json(&obs.to_json()).unwrap(), &obs);
    }

    #[test]
    fn strata_round_trip(seed in any::<u64>(), x_card in 2usize..5) {
        let obs: ExactLaw = exact_law(seed, x_card).observed_law();
        let back = ObservedStrata::from_law(&obs).unwrap().to_law().unwrap();
        prop_assert_eq!(back, obs);
    }

    #[test]
    fn dataset_csv_round_trip(seed in any::<u64>(), n in 1usize..200) {
        let d = law(seed, 3).sample(n, seed).unwrap();
        let text = d.to_csv();
        prop_assert!(!text.contains('\r'));
        prop_assert_eq!(Dataset::from_csv(&text).unwrap().to_csv(), text);
    }

    #[test]
    fn estimators_ignore_record_order(seed in any::<u64>()) {
        let d = law(seed, 3).sample(300, seed).unwrap();
        let mut idx: Vec<usize> = (0..d.len()).collect();
        idx.reverse();
        let rev = d.subset(&idx);
        let cfg = SmoothingConfig::default();
        let (a, b) = (fit_nuisances(&d, &cfg, None).unwrap(), fit_nuisances(&rev, &cfg, None).unwrap());
        prop_assert_eq!(plugin_theta(&a, &d).unwrap().value, plugin_theta(&b, &rev).unwrap().value);
        prop_assert_eq!(onestep_theta(&a, &d).unwrap().value, onestep_theta(&b, &rev).unwrap().value);
    }

    #[test]
    fn stable_sum_is_permutation_invariant(mut v in prop::collection::vec(-1e6f64..1e6, 0..64), rot in 0usize..64) {
        let s = stable_sum(&v);
        if !v.is_empty() {
            let k = rot % v.len();
            v.rotate_left(k);
        }
        prop_assert_eq!(stable_sum(&v), s);
    }

    #[test]
    fn folds_are_balanced(n in 2usize..500, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let f = fold_assignment(n, k, seed);
        let sizes: Vec<usize> = (0..k).map(|j| f.iter().filter(|&&g| g == j).count()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(f, fold_assignment(n, k, seed));
    }

    #[test]
    fn zero_bump_is_identity(seed in any::<u64>()) {
        let ns = nuisances_from_law(&law(seed, 3).observed_law()).unwrap();
        let spec = BumpSpec::random(&ns, &NuisanceName::ALL, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(perturb(&ns, 0.0, &spec).unwrap(), ns);
    }

    #[test]
    fn dsep_is_symmetric_and_empty_split_is_identity(seed in any::<u64>()) {
        // random DAG over context nodes v0..v6, edges only forward
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names: Vec<String> = (0..7).map(|i| format!("v{i}")).collect();
        let mut spec = GraphSpec::default();
        for n in &names {
            spec = spec.node(n, NodeKind::Context);
        }
        for i in 0..7 {
            for j in i + 1..7 {
                if rand::Rng::gen_bool(&mut rng, 0.35) {
                    spec = spec.edge(&names[i], &names[j]);
                }
            }
        }
        let g = build_mdag(&spec).unwrap();
        let same = split(&g, &BTreeMap::new()).unwrap();
        prop_assert_eq!(same.graph(), g.graph());
        for a in 0..7 {
            for b in 0..7 {
                if a == b {
                    continue;
                }
                let z: Vec<&str> = (0..7)
                    .filter(|&k| k != a && k != b && (seed >> k) & 1 == 1)
                    .map(|k| names[k].as_str())
                    .collect();
                let ab = d_separated(&g, &[names[a].as_str()], &[names[b].as_str()], &z).unwrap();
                let ba = d_separated(&g, &[names[b].as_str()], &[names[a].as_str()], &z).unwrap();
                prop_assert_eq!(ab, ba);
            }
        }
    }
}

/// Observed laws built from random full laws are normalized and keep the
/// missing token out of observed strata.
#[test]
fn observed_law_has_no_mass_on_impossible_cells() {
    for seed in 0..20 {
        let obs: TabularLaw<f64> = law(seed, 3).observed_law();
        obs.for_each_cell(|c, p| {
            let r1 = c.label("R_1") == "1";
            let r2 = c.label("R_2") == "1";
            let y_missing = c.label("Y") == "?";
            let x_missing = c.label("X") == "?";
            if r1 == y_missing || r2 == x_missing {
                assert_eq!(*p, 0.0, "mass on impossible cell");
            }
        });
        let total: f64 = obs.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
