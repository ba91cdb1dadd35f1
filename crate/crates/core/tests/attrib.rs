use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use dilemma_core::agents::{decision_records, JointWeight, PolicyParams, SyntheticAgent, WeightSlot};
use dilemma_core::attrib::{
    attribute, brute_force_shap, fit_gbdt, shap_interactions, AttribParams, AttributionReport, Explainer, GbdtParams,
    Node, Tree, TreeEnsemble, ENSEMBLE_VERSION,
};
use dilemma_core::eval::EvalMode;
use dilemma_core::generate::{generate, GenParams};
use dilemma_core::rng::stream_for;
use dilemma_core::scenario::{builtin_fixtures, SampleIndex, ScenarioSample, Subset};
use dilemma_core::stats::join;

fn random_tree(rng: &mut ChaCha8Rng, n_features: usize, depth: usize) -> Tree {
    fn go(rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>, n: usize, left_depth: usize) -> usize {
        let id = nodes.len();
        if left_depth == 0 || rng.random_bool(0.15) {
            nodes.push(Node::Leaf { value: rng.random_range(-1.0..1.0) });
            return id;
        }
        nodes.push(Node::Leaf { value: 0.0 });
        let feature = rng.random_range(0..n);
        let left = go(rng, nodes, n, left_depth - 1);
        let right = go(rng, nodes, n, left_depth - 1);
        nodes[id] = Node::Split { feature, left, right };
        id
    }
    let mut nodes = Vec::new();
    go(rng, &mut nodes, n_features, depth);
    Tree { nodes }
}

fn random_ensemble(rng: &mut ChaCha8Rng, n_features: usize) -> TreeEnsemble {
    let n_trees = rng.random_range(1..6);
    let trees: Vec<Tree> = (0..n_trees)
        .map(|_| {
            let d = rng.random_range(1..=4);
            random_tree(rng, n_features, d)
        })
        .collect();
    let base_score = rng.random_range(-1.0..1.0);
    TreeEnsemble {
        version: ENSEMBLE_VERSION,
        n_features,
        base_score,
        learning_rate: 1.0,
        trees,
        degenerate: false,
        train_accuracy: 0.0,
        train_logloss: 0.0,
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<u8>> {
    (0..n).map(|_| (0..k).map(|_| rng.random_bool(0.5) as u8).collect()).collect()
}

#[test]
fn matches_brute_force_on_random_ensembles() {
    for case in 0..100 {
        let mut rng = stream_for(case, &["oracle"]);
        let k = rng.random_range(2..=8);
        let e = random_ensemble(&mut rng, k);
        let n_bg = rng.random_range(1..40);
        let bg = random_rows(&mut rng, n_bg, k);
        for x in random_rows(&mut rng, 3, k) {
            let fast = shap_interactions(&e, &x, &bg).unwrap();
            let slow = brute_force_shap(&e, &x, &bg).unwrap();
            assert!((fast.base - slow.base).abs() < 1e-9, "case {case}");
            for (a, b) in fast.phi.iter().zip(&slow.phi) {
                assert!((a - b).abs() < 1e-9, "case {case}: {a} vs {b}");
            }
            for i in 0..k {
                for j in 0..k {
                    assert_eq!(fast.get(i, j), fast.get(j, i));
                }
            }
        }
    }
}

#[test]
fn efficiency_and_row_sums() {
    let mut rng = stream_for(1, &["sweep"]);
    let k = 12;
    let x = random_rows(&mut rng, 600, k);
    let y: Vec<f64> = x.iter().map(|r| ((r[0] & r[1]) ^ r[5] | (r[3] & r[7])) as f64).collect();
    let e = fit_gbdt(&x, &y, &GbdtParams { rounds: 60, ..GbdtParams::default() }).unwrap();
    let bg = &x[..200];
    let ex = Explainer::new(&e, bg).unwrap();
    let mean_f = bg.iter().map(|r| e.predict(r)).sum::<f64>() / bg.len() as f64;
    assert!((ex.base() - mean_f).abs() < 1e-9);
    let inst = random_rows(&mut rng, 1000, k);
    for m in ex.explain_all(&inst) {
        assert!(m.efficiency_gap().abs() < 1e-9, "{}", m.efficiency_gap());
        let phi = m.shapley();
        assert!((phi.iter().sum::<f64>() - (m.value - m.base)).abs() < 1e-9);
    }
}

#[test]
fn constant_ensemble_and_permutation() {
    let mut rng = stream_for(2, &["perm"]);
    let constant = TreeEnsemble { trees: vec![Tree { nodes: vec![Node::Leaf { value: 0.4 }] }], ..random_ensemble(&mut rng, 4) };
    let bg = random_rows(&mut rng, 10, 4);
    assert!(brute_force_shap(&constant, &[1, 0, 1, 0], &bg).unwrap().phi.iter().all(|&v| v == 0.0));

    let e = random_ensemble(&mut rng, 6);
    let perm = [3usize, 5, 0, 1, 4, 2]; // new column c holds old feature perm[c]
    let inv: Vec<usize> = (0..6).map(|f| perm.iter().position(|&p| p == f).unwrap()).collect();
    let mut p = e.clone();
    for t in &mut p.trees {
        for n in &mut t.nodes {
            if let Node::Split { feature, .. } = n {
                *feature = inv[*feature];
            }
        }
    }
    let remap = |r: &Vec<u8>| -> Vec<u8> { perm.iter().map(|&f| r[f]).collect() };
    let x = random_rows(&mut rng, 1, 6).remove(0);
    let a = brute_force_shap(&e, &x, &bg.iter().map(|r| [r.clone(), vec![0, 1]].concat()).collect::<Vec<_>>()).unwrap();
    let bg6: Vec<Vec<u8>> = bg.iter().map(|r| [r.clone(), vec![0, 1]].concat()).collect();
    let b = brute_force_shap(&p, &remap(&x), &bg6.iter().map(remap).collect::<Vec<_>>()).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            assert!((a.get(i, j) - b.get(inv[i], inv[j])).abs() < 1e-12);
        }
    }
}

fn interaction_samples() -> Vec<ScenarioSample> {
    generate(&GenParams::new(Subset::Interaction, 11), &builtin_fixtures()).unwrap().samples
}

fn run(samples: &[ScenarioSample], params: PolicyParams) -> AttributionReport {
    let agent = SyntheticAgent::new("probe", params).unwrap();
    let recs = decision_records(&agent, samples, EvalMode::Text, 1);
    let idx = SampleIndex::new(samples);
    let trials = join(&recs, &idx).unwrap();
    attribute(&trials, &AttribParams { seed: 3, ..AttribParams::default() }).unwrap()
}

fn slot_weights(slot: WeightSlot, w: &[(&str, f64)]) -> BTreeMap<WeightSlot, BTreeMap<String, f64>> {
    BTreeMap::from([(slot, w.iter().map(|(k, v)| (k.to_string(), *v)).collect())])
}

#[test]
fn quantity_only_and_constant_agents() {
    let s = interaction_samples();
    // net benefit here is 0, 1, 4 or 9; alpha centres the logit near 0
    let q = run(&s, PolicyParams { alpha: -1.05, beta_net: 0.3, seed: 1, ..PolicyParams::default() });
    assert!(q.composition.quantity > 0.8, "{:?}", q.composition);
    let c = run(&s, PolicyParams { alpha: (0.95f64 / 0.05).ln(), seed: 2, ..PolicyParams::default() });
    assert!(c.composition.action_bias > 0.9, "{:?}", c.composition);
    for r in [&q, &c] {
        let t = r.composition.quantity + r.composition.character + r.composition.action_bias;
        assert!((t - 1.0).abs() < 1e-12);
    }
}

#[test]
fn additive_policy_directions_and_intensity() {
    let s = interaction_samples();
    let a = run(
        &s,
        PolicyParams {
            alpha: -1.0,
            beta_net: 0.3,
            feature_weights: slot_weights(WeightSlot::Saved, &[("gender=female", 0.8), ("color=black", -0.6)]),
            seed: 3,
            ..PolicyParams::default()
        },
    );
    let i = a.intensity;
    assert!(i.quant1v1_x_char < 0.02 && i.intra_char < 0.02 && i.inter_char < 0.02, "{i:?}");
    let at = |name: &str| a.directions[a.registry.index(name).unwrap()];
    assert_eq!(at("saved.gender"), 1);
    assert_eq!(at("saved.color"), -1);
    assert_eq!(at("ratio=1:10"), 1);
    assert_eq!(at("ratio=1:1"), -1);
}

#[test]
fn constructed_interactions_are_located() {
    let s = interaction_samples();
    let joint = run(
        &s,
        PolicyParams {
            joint_weights: vec![JointWeight { slot: WeightSlot::Saved, a: "color=black".into(), b: "gender=female".into(), weight: 1.5 }],
            seed: 4,
            ..PolicyParams::default()
        },
    );
    assert!(joint.intensity.intra_char > joint.intensity.inter_char, "{:?}", joint.intensity);

    let gated = run(
        &s,
        PolicyParams {
            feature_weights: slot_weights(WeightSlot::Saved, &[("gender=female", 1.5)]),
            weights_only_at_ratio: Some((1, 1)),
            seed: 5,
            ..PolicyParams::default()
        },
    );
    let i = gated.intensity;
    assert!(i.quant1v1_x_char > i.intra_char && i.quant1v1_x_char > i.inter_char, "{i:?}");
}

#[test]
fn report_is_seeded() {
    let s: Vec<_> = interaction_samples().into_iter().take(3000).collect();
    let p = PolicyParams { beta_net: 0.3, seed: 6, ..PolicyParams::default() };
    let a = run(&s, p.clone());
    let b = run(&s, p);
    assert_eq!(a, b);
    assert_eq!(a.n_train + a.n_test, 3000);
    assert_eq!(a.n_test, 600);
}
