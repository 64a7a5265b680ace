//! Envelopment checking, composition, and discrimination-advantage tests
//! beyond what the acceptance sweep covers.

mod common;

use std::collections::BTreeMap;

use qmwb::discrimination::{bayes_posterior, eve_advantage, helstrom_error, Prior};
use qmwb::envelopment::{
    check_envelopment, compose_envelopments, envelop_with_leakage, EnvelopmentMap, FactoredMap,
    ExtraPovmPolicy,
};
use qmwb::model::{Command, CommandSet, Povm, QmModel};
use qmwb::protocols::{b92_model, bb84_model, leakage_attack_model, AttackSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_state_model(second_angle: f64) -> QmModel {
    let commands = CommandSet::new(
        vec!["a0".to_string(), "a1".to_string()],
        vec!["b".to_string()],
        vec!["e0".to_string()],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut states = BTreeMap::new();
    let basis0 = common::random_state(&mut rng, 2);
    states.insert("a0".to_string(), {
        let mut v = basis0.clone();
        v[0] = (1.0).into();
        v[1] = (0.0).into();
        v
    });
    states.insert("a1".to_string(), {
        let mut v = basis0;
        v[0] = second_angle.cos().into();
        v[1] = second_angle.sin().into();
        v
    });
    let mut povms = BTreeMap::new();
    povms.insert(
        ("b".to_string(), "e0".to_string()),
        common::random_projective_povm(&mut ChaCha8Rng::seed_from_u64(9), 2),
    );
    QmModel::new(2, commands, states, BTreeMap::new(), povms).unwrap()
}

#[test]
fn identity_map_checks_with_zero_deviation() {
    let model = bb84_model(&AttackSpec::None).unwrap();
    let f = EnvelopmentMap::identity(&model).unwrap();
    let check = check_envelopment(&model, &model, &f, 1e-15).unwrap();
    assert!(check.holds);
    assert_eq!(check.max_deviation, 0.0);
    assert!(check.witness.is_none());
}

#[test]
fn perturbed_state_deviation_matches_direct_enumeration() {
    let alpha = two_state_model(0.9);
    let beta = two_state_model(0.9 + 0.07);
    let f = EnvelopmentMap::identity(&alpha).unwrap();
    let check = check_envelopment(&alpha, &beta, &f, 1e-10).unwrap();
    assert!(!check.holds);

    // Independent oracle: with an identity map every preimage group is a
    // single pair, so the deviation is a plain max over the table.
    let mut oracle = 0.0f64;
    for (cmd, row) in alpha.probability_table().unwrap() {
        for (o, p) in row {
            let pb = beta.born_probability(&cmd, &o).unwrap();
            oracle = oracle.max((p - pb).abs());
        }
    }
    assert!(oracle > 1e-3, "perturbation should be visible");
    assert!((check.max_deviation - oracle).abs() <= 1e-12);
    let (wcmd, wout) = check.witness.expect("failing check names a witness");
    let pw_a = alpha.born_probability(&wcmd, &wout).unwrap();
    let pw_b = beta.born_probability(&wcmd, &wout).unwrap();
    assert!(((pw_a - pw_b).abs() - oracle).abs() <= 1e-12);
}

/// A map whose outcome component is many-to-one: the enveloping model splits
/// one projector into two half-weight elements, and the check must regroup
/// them before comparing.
#[test]
fn coarse_graining_map_preserves_probabilities() {
    let alpha = two_state_model(0.6);
    let old = alpha.povm("b", "e0").unwrap();
    let outs: Vec<String> = old.outcomes().to_vec();
    let m0 = old.element(&outs[0]).unwrap().clone();
    let m1 = old.element(&outs[1]).unwrap().clone();
    let split = Povm::new(vec![
        ("o0x".to_string(), m0.clone() * qmwb::linalg::C64::new(0.5, 0.0)),
        ("o0y".to_string(), m0 * qmwb::linalg::C64::new(0.5, 0.0)),
        ("o1z".to_string(), m1),
    ])
    .unwrap();
    let mut povms = BTreeMap::new();
    povms.insert(("b".to_string(), "e0".to_string()), split);
    let mut states = BTreeMap::new();
    for a in alpha.commands().alice() {
        states.insert(a.clone(), alpha.state(a).unwrap().clone());
    }
    let beta = QmModel::new(
        2,
        alpha.commands().clone(),
        states,
        BTreeMap::new(),
        povms,
    )
    .unwrap();

    let mut mapping = BTreeMap::new();
    let mut g = BTreeMap::new();
    let h: BTreeMap<String, String> = [
        ("o0x".to_string(), outs[0].clone()),
        ("o0y".to_string(), outs[0].clone()),
        ("o1z".to_string(), outs[1].clone()),
    ]
    .into();
    for c in beta.commands().iter() {
        g.insert(c.clone(), c.clone());
        for (j, tj) in &h {
            mapping.insert((c.clone(), j.clone()), (c.clone(), tj.clone()));
        }
    }
    let f = EnvelopmentMap::new(mapping, Some(FactoredMap { g, h })).unwrap();
    let check = check_envelopment(&alpha, &beta, &f, 1e-12).unwrap();
    assert!(check.holds, "deviation {:e}", check.max_deviation);
}

#[test]
fn stacked_leakage_layers_compose() {
    let alpha = b92_model(std::f64::consts::PI / 8.0, &AttackSpec::None).unwrap();
    let (beta, f1) = envelop_with_leakage(&alpha, 0.5, ExtraPovmPolicy::Helstrom).unwrap();
    let (gamma, f2) = envelop_with_leakage(&beta, 0.4, ExtraPovmPolicy::Helstrom).unwrap();
    let f21 = compose_envelopments(&f2, &f1).unwrap();

    let check = check_envelopment(&alpha, &gamma, &f21, 1e-10).unwrap();
    assert!(check.holds, "deviation {:e}", check.max_deviation);

    // Overlaps factor through both layers: r1 * r2 against the base model.
    let s_alpha = alpha.overlap("send0", "send1").unwrap();
    let s_gamma = gamma.overlap("send0", "send1").unwrap();
    assert!((s_gamma / s_alpha - 0.5 * 0.4).abs() <= 1e-9);
}

#[test]
fn composition_rejects_mismatched_maps() {
    let alpha = b92_model(std::f64::consts::PI / 8.0, &AttackSpec::None).unwrap();
    let other = bb84_model(&AttackSpec::None).unwrap();
    let (_, f1) = envelop_with_leakage(&alpha, 0.5, ExtraPovmPolicy::Helstrom).unwrap();
    let f_other = EnvelopmentMap::identity(&other).unwrap();
    assert!(compose_envelopments(&f_other, &f1).is_err());
}

#[test]
fn eve_error_shrinks_monotonically_with_leakage() {
    let theta = std::f64::consts::PI / 8.0;
    let alpha = b92_model(theta, &AttackSpec::None).unwrap();
    let s_alpha = alpha.overlap("send0", "send1").unwrap();
    let mut previous = -1.0;
    for &r in &[0.0, 0.25, 0.5, 0.75, 0.95] {
        let (beta, f) = leakage_attack_model(&alpha, r).unwrap();
        let adv = eve_advantage(&alpha, &beta, &f, ("send0", "send1"), (0.5, 0.5)).unwrap();
        assert!((adv.err_alpha - helstrom_error(s_alpha, 0.5, 0.5)).abs() <= 1e-12);
        let expected = helstrom_error(r * s_alpha, 0.5, 0.5);
        assert!(
            (adv.err_beta - expected).abs() <= 1e-9,
            "r={r}: err_beta {} vs expected {expected}",
            adv.err_beta
        );
        assert!(adv.err_beta >= previous - 1e-12, "error must not shrink as r grows");
        previous = adv.err_beta;
    }
    let (beta0, f0) = leakage_attack_model(&alpha, 0.0).unwrap();
    let adv0 = eve_advantage(&alpha, &beta0, &f0, ("send0", "send1"), (0.5, 0.5)).unwrap();
    assert!(adv0.err_beta.abs() <= 1e-10);
}

#[test]
fn posterior_matches_hand_computation_for_bb84() {
    let model = bb84_model(&AttackSpec::None).unwrap();
    let prior = Prior::uniform(model.commands().alice().iter().cloned()).unwrap();
    let post = bayes_posterior(&model, &prior, "measZ", "idle", "b0").unwrap();
    // Likelihoods for outcome b0 under measZ: Z0 -> 1, Z1 -> 0, X0 and X1
    // -> 1/2; with a uniform prior the posterior is (1/2, 0, 1/4, 1/4).
    assert!((post["Z0"] - 0.5).abs() <= 1e-12);
    assert!(post["Z1"].abs() <= 1e-12);
    assert!((post["X0"] - 0.25).abs() <= 1e-12);
    assert!((post["X1"] - 0.25).abs() <= 1e-12);
}

#[test]
fn leakage_readout_posterior_is_deterministic_at_r_zero() {
    let alpha = b92_model(std::f64::consts::PI / 8.0, &AttackSpec::None).unwrap();
    let (beta, _) = leakage_attack_model(&alpha, 0.0).unwrap();
    let readout: Vec<String> = beta
        .eve_private()
        .iter()
        .cloned()
        .collect();
    assert_eq!(readout.len(), 1);
    let prior = Prior::uniform(beta.commands().alice().iter().cloned()).unwrap();
    // Orthogonal leakage vectors make the readout outcome decisive.
    let post = bayes_posterior(&beta, &prior, "filter0", &readout[0], "guess0").unwrap();
    assert!((post["send0"] - 1.0).abs() <= 1e-10);
    assert!(post["send1"].abs() <= 1e-10);
}

#[test]
fn helstrom_pair_policy_reads_out_the_named_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let alpha = common::random_model(&mut rng, 3, 3, 1);
    let policy = ExtraPovmPolicy::HelstromPair("a0".to_string(), "a2".to_string());
    let (beta, f) = envelop_with_leakage(&alpha, 0.25, policy).unwrap();
    let check = check_envelopment(&alpha, &beta, &f, 1e-10).unwrap();
    assert!(check.holds);
}

#[test]
fn pretty_good_policy_also_envelops() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let alpha = common::random_model(&mut rng, 2, 4, 2);
    let (beta, f) = envelop_with_leakage(&alpha, 0.3, ExtraPovmPolicy::PrettyGood).unwrap();
    let check = check_envelopment(&alpha, &beta, &f, 1e-10).unwrap();
    assert!(check.holds, "deviation {:e}", check.max_deviation);
    assert!(beta.validate().is_valid());
}

#[test]
fn extra_readout_command_label_avoids_collisions() {
    let commands = CommandSet::new(
        vec!["a0".to_string(), "a1".to_string()],
        vec!["b".to_string()],
        vec!["leak#readout".to_string()],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut states = BTreeMap::new();
    states.insert("a0".to_string(), common::random_state(&mut rng, 2));
    states.insert("a1".to_string(), common::random_state(&mut rng, 2));
    let mut povms = BTreeMap::new();
    povms.insert(
        ("b".to_string(), "leak#readout".to_string()),
        common::random_projective_povm(&mut rng, 2),
    );
    let alpha = QmModel::new(2, commands, states, BTreeMap::new(), povms).unwrap();
    let (beta, _) = envelop_with_leakage(&alpha, 0.5, ExtraPovmPolicy::Helstrom).unwrap();
    let new_cmds: Vec<&String> = beta
        .commands()
        .eve()
        .iter()
        .filter(|e| !alpha.commands().eve().contains(e))
        .collect();
    assert_eq!(new_cmds.len(), 1);
    assert_ne!(new_cmds[0], "leak#readout");
    let _ = Command::new("a0", "b", new_cmds[0].clone());
}
