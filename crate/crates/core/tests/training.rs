mod common;

use contractive_gnn::layers::ModelKind;
use contractive_gnn::train::{
    default_model, evaluate, history_to_json_lines, robustness_eval, synth_sbm, train_projected, TrainConfig,
};
use contractive_gnn::{Activation, AlphaSplit};

#[test]
fn sbm_within_block_edges_near_expectation() {
    let (n, p_in) = (40usize, 0.5);
    // Two blocks of 20: 2 · C(20, 2) within-block pairs.
    let pairs: f64 = 2.0 * (20.0 * 19.0 / 2.0);
    let mean = pairs * p_in;
    let sd = (pairs * p_in * (1.0 - p_in)).sqrt();
    let mut outside = 0;
    for seed in 0..100 {
        let t = synth_sbm(n, 2, p_in, 0.05, seed).unwrap();
        let within = t
            .graph
            .edges()
            .filter(|&(u, v)| t.labels[u] == t.labels[v])
            .count() as f64;
        if (within - mean).abs() > 3.0 * sd {
            outside += 1;
        }
    }
    // A 3σ excursion has probability about 0.003 per seed.
    assert!(outside <= 2, "{outside} seeds outside 3σ");
}

#[test]
fn sbm_split_and_determinism() {
    let a = synth_sbm(40, 2, 0.5, 0.05, 7).unwrap();
    let b = synth_sbm(40, 2, 0.5, 0.05, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.train_mask.iter().filter(|&&m| m).count(), 32);
    assert!(a.train_mask.iter().zip(&a.test_mask).all(|(&x, &y)| x != y));
    assert!(synth_sbm(41, 2, 0.5, 0.05, 0).is_err());
}

#[test]
fn small_learning_rate_decreases_loss() {
    let task = synth_sbm(40, 2, 0.5, 0.05, 1).unwrap();
    let m = default_model(ModelKind::Graphconv, &task, 8, Activation::Tanh, 1).unwrap();
    let mut lr = 0.1;
    for _ in 0..20 {
        let cfg = TrainConfig { epochs: 11, lr, project_every: 0, ..TrainConfig::default() };
        let (_, h) = train_projected(&m, &task, &cfg).unwrap();
        if h[10].loss < h[0].loss {
            return;
        }
        lr /= 2.0;
    }
    panic!("loss never decreased");
}

#[test]
fn every_epoch_is_certified_when_projecting_each_step() {
    let task = synth_sbm(40, 2, 0.5, 0.05, 2).unwrap();
    for kind in [ModelKind::Gcn, ModelKind::Graphconv] {
        let m = default_model(kind, &task, 8, Activation::Relu, 2).unwrap();
        let cfg = TrainConfig { epochs: 30, ..TrainConfig::default() };
        let (trained, h) = train_projected(&m, &task, &cfg).unwrap();
        assert!(h.iter().all(|r| r.min_margin >= -1e-9));
        let rep = robustness_eval(&trained, &task, 0.1, 200, 3).unwrap();
        assert!(rep.contracts(), "{}", rep.to_json());
    }
}

#[test]
fn training_is_bit_deterministic() {
    let task = synth_sbm(40, 2, 0.5, 0.05, 0).unwrap();
    let m = default_model(ModelKind::Graphconv, &task, 8, Activation::Relu, 0).unwrap();
    let cfg = TrainConfig { epochs: 25, alpha: AlphaSplit::new(0.3).unwrap(), ..TrainConfig::default() };
    let (m1, h1) = train_projected(&m, &task, &cfg).unwrap();
    let (m2, h2) = train_projected(&m, &task, &cfg).unwrap();
    assert_eq!(m1.to_json(), m2.to_json());
    assert_eq!(history_to_json_lines(&h1), history_to_json_lines(&h2));
    assert_eq!(evaluate(&m1, &task).unwrap(), evaluate(&m2, &task).unwrap());
}

#[test]
fn history_lines_are_json() {
    let task = synth_sbm(20, 2, 0.6, 0.05, 5).unwrap();
    let m = default_model(ModelKind::Gcn, &task, 4, Activation::Tanh, 5).unwrap();
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let (_, h) = train_projected(&m, &task, &cfg).unwrap();
    let text = history_to_json_lines(&h);
    assert_eq!(text.lines().count(), 3);
    for (i, line) in text.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["epoch"], i + 1);
        assert!(v.get("layer_margins").is_none());
    }
}
