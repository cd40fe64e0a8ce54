mod common;

use common::*;
use contractive_gnn::layers::{
    gcn_backward, gcn_forward, gcn_forward_cached, graphconv_backward, graphconv_forward,
    graphconv_forward_cached, ModelGrads, ModelKind, DEFAULT_LEAKY_SLOPE,
};
use contractive_gnn::train::softmax_cross_entropy;
use contractive_gnn::{Activation, AdjacencyMode, GcnLayer, GraphConvLayer, Matrix, Model};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;
const TOL: f64 = 1e-5;

fn activation_for(i: usize) -> Activation {
    [
        Activation::Tanh,
        Activation::Identity,
        Activation::LeakyRelu(0.3),
        Activation::Relu,
        Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
    ][i % 5]
}

/// Pre-activations within this distance of the kink make central
/// differences straddle it.
fn near_kink(act: Activation, z: &Matrix) -> bool {
    matches!(act, Activation::Relu | Activation::LeakyRelu(_))
        && z.as_slice().iter().any(|v| v.abs() < 1e-2)
}

struct Instance {
    a: Matrix,
    x: Matrix,
    w1: Matrix,
    w2: Matrix,
    g: Matrix,
}

fn instance(r: &mut ChaCha8Rng) -> Instance {
    let n = r.random_range(1..=6);
    let c_in = r.random_range(1..=4);
    let c_out = r.random_range(1..=4);
    let a = random_graph(r, n, 0.5).adjacency(AdjacencyMode::Raw);
    Instance {
        a,
        x: gaussian(r, n, c_in),
        w1: gaussian(r, c_in, c_out),
        w2: gaussian(r, c_in, c_out),
        g: gaussian(r, n, c_out),
    }
}

#[test]
fn gcn_backward_matches_finite_differences() {
    let mut r = rng(31);
    let mut checked = 0;
    let mut i = 0;
    while checked < 25 {
        let act = activation_for(i);
        i += 1;
        let inst = instance(&mut r);
        let layer = GcnLayer::new(inst.w1.clone());
        let (_, cache) = gcn_forward_cached(&layer, &inst.a, &inst.x, act).unwrap();
        if near_kink(act, &cache.z) {
            continue;
        }
        let grads = gcn_backward(&cache, &inst.g).unwrap();
        let fd_w = central_diff(&inst.w1, STEP, |w| {
            contract(&inst.g, &gcn_forward(&GcnLayer::new(w.clone()), &inst.a, &inst.x, act).unwrap())
        });
        let fd_x = central_diff(&inst.x, STEP, |x| {
            contract(&inst.g, &gcn_forward(&layer, &inst.a, x, act).unwrap())
        });
        assert!(relative_error(&grads.w, &fd_w) < TOL, "{act:?} w: {}", relative_error(&grads.w, &fd_w));
        assert!(relative_error(&grads.x, &fd_x) < TOL, "{act:?} x: {}", relative_error(&grads.x, &fd_x));
        checked += 1;
    }
}

#[test]
fn graphconv_backward_matches_finite_differences() {
    let mut r = rng(32);
    let mut checked = 0;
    let mut i = 0;
    while checked < 25 {
        let act = activation_for(i);
        i += 1;
        let inst = instance(&mut r);
        let layer = GraphConvLayer::new(inst.w1.clone(), inst.w2.clone()).unwrap();
        let (_, cache) = graphconv_forward_cached(&layer, &inst.a, &inst.x, act).unwrap();
        if near_kink(act, &cache.z) {
            continue;
        }
        let grads = graphconv_backward(&cache, &inst.g).unwrap();
        let eval = |w1: &Matrix, w2: &Matrix, x: &Matrix| {
            let l = GraphConvLayer::new(w1.clone(), w2.clone()).unwrap();
            contract(&inst.g, &graphconv_forward(&l, &inst.a, x, act).unwrap())
        };
        let fd_w1 = central_diff(&inst.w1, STEP, |w| eval(w, &inst.w2, &inst.x));
        let fd_w2 = central_diff(&inst.w2, STEP, |w| eval(&inst.w1, w, &inst.x));
        let fd_x = central_diff(&inst.x, STEP, |x| eval(&inst.w1, &inst.w2, x));
        assert!(relative_error(&grads.w1, &fd_w1) < TOL);
        assert!(relative_error(&grads.w2, &fd_w2) < TOL);
        assert!(relative_error(&grads.x, &fd_x) < TOL);
        checked += 1;
    }
}

#[test]
fn model_backward_matches_finite_differences() {
    let mut r = rng(33);
    for (i, kind) in [ModelKind::Gcn, ModelKind::Graphconv].into_iter().cycle().take(20).enumerate() {
        let n = r.random_range(2..=6);
        let dims = [r.random_range(1..=4), r.random_range(1..=4), r.random_range(1..=3)];
        let act = if i % 2 == 0 { Activation::Tanh } else { Activation::Identity };
        let m = Model::random(kind, &dims, act, kind.default_adjacency(), &mut r).unwrap();
        let a = m.adjacency(&random_graph(&mut r, n, 0.5));
        let x = gaussian(&mut r, n, dims[0]);
        let g = gaussian(&mut r, n, dims[2]);
        let (_, cache) = m.forward_cached(&a, &x).unwrap();
        let (grads, gx) = m.backward(&cache, &g).unwrap();
        let fd_x = central_diff(&x, STEP, |x| contract(&g, &m.forward(&a, x).unwrap()));
        assert!(relative_error(&gx, &fd_x) < TOL);
        // Check the first layer's weight gradient by perturbing it in place.
        match (m.layers(), &grads) {
            (contractive_gnn::Layers::Gcn(ls), ModelGrads::Gcn(gs)) => {
                let fd = central_diff(&ls[0].w, STEP, |w| {
                    let mut mm = m.clone();
                    if let contractive_gnn::Layers::Gcn(ls) = mm.layers_mut() {
                        ls[0].w = w.clone();
                    }
                    contract(&g, &mm.forward(&a, &x).unwrap())
                });
                assert!(relative_error(&gs[0], &fd) < TOL);
            }
            (contractive_gnn::Layers::GraphConv(ls), ModelGrads::GraphConv(gs)) => {
                let fd = central_diff(&ls[0].w2, STEP, |w| {
                    let mut mm = m.clone();
                    if let contractive_gnn::Layers::GraphConv(ls) = mm.layers_mut() {
                        ls[0].w2 = w.clone();
                    }
                    contract(&g, &mm.forward(&a, &x).unwrap())
                });
                assert!(relative_error(&gs[0].1, &fd) < TOL);
            }
            _ => unreachable!(),
        }
    }
}

#[test]
fn softmax_cross_entropy_gradient() {
    let mut r = rng(34);
    for _ in 0..20 {
        let n = r.random_range(1..=8);
        let k = r.random_range(2..=5);
        let logits = gaussian(&mut r, n, k).scale(3.0).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| r.random_bool(0.7)).collect();
        mask[0] = true;
        let (_, grad) = softmax_cross_entropy(&logits, &labels, &mask).unwrap();
        let fd = central_diff(&logits, 1e-5, |z| softmax_cross_entropy(z, &labels, &mask).unwrap().0);
        assert!(relative_error(&grad, &fd) < 1e-6, "{}", relative_error(&grad, &fd));
    }
}

#[test]
fn activations_are_one_lipschitz() {
    let mut r = rng(35);
    let kinds = [
        Activation::Relu,
        Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
        Activation::LeakyRelu(1.0),
        Activation::Tanh,
        Activation::Identity,
    ];
    for act in kinds {
        for _ in 0..100_000 {
            let scale = 10f64.powi(r.random_range(-3..=3));
            let a = scale * (2.0 * r.random::<f64>() - 1.0);
            let b = scale * (2.0 * r.random::<f64>() - 1.0);
            assert!((act.apply(a) - act.apply(b)).abs() <= (a - b).abs() + 1e-12);
        }
    }
}

#[test]
fn zero_weights_output_sigma_zero() {
    let mut r = rng(36);
    let x = gaussian(&mut r, 4, 3);
    let a = random_graph(&mut r, 4, 0.5).adjacency(AdjacencyMode::Raw);
    for act in Activation::all() {
        let out = gcn_forward(&GcnLayer::new(Matrix::zeros(3, 2)), &a, &x, act).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == act.apply(0.0)));
        let gc = GraphConvLayer::new(Matrix::zeros(3, 2), Matrix::zeros(3, 2)).unwrap();
        let out = graphconv_forward(&gc, &a, &x, act).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == act.apply(0.0)));
    }
}

#[test]
fn forward_is_bit_deterministic() {
    let mut r = rng(37);
    let m = Model::random(ModelKind::Graphconv, &[3, 5, 2], Activation::Tanh, AdjacencyMode::NoSelfLoops, &mut r)
        .unwrap();
    let a = m.adjacency(&random_graph(&mut r, 6, 0.5));
    let x = gaussian(&mut r, 6, 3);
    let first = m.forward(&a, &x).unwrap();
    let second = m.forward(&a, &x).unwrap();
    assert_eq!(
        first.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        second.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}
