//! Finite-difference harness shared by the gradient tests and the acceptance suite.

use pathlink::encoders::{Encoder, EncoderConfig, EncoderKind, GraphContext, PropagationMode};
use pathlink::generators::gnp;
use pathlink::models::{model_visit_order, LinkModel, LinkScorerConfig, Phi, PhiConfig, PhiKind, ScorerKind};
use pathlink::nn::Mlp;
use pathlink::paths::build_index_ordered;
use pathlink::rng::{stream, Rng};
use pathlink::tensor::{Bound, ParamSet, Tape, Tensor, Var};
use pathlink::Graph;
use pathlink_oracles::{central_difference, relative_error};
use rand::Rng as _;

pub const PROBES: usize = 20;
pub const H: f64 = 1e-4;
pub const TOL: f64 = 1e-4;

/// Largest relative error between backprop and central differences over
/// random parameter coordinates. The loss is a fixed random projection of
/// the block output so every output entry matters.
fn check<F>(mut ps: ParamSet<f64>, forward: F, rng: &mut Rng) -> f64
where
    F: Fn(&mut Tape<f64>, &Bound) -> Var,
{
    let probe_out = {
        let mut tape = Tape::new();
        let b = ps.bind_frozen(&mut tape);
        let y = forward(&mut tape, &b);
        tape.value(y).shape().to_vec()
    };
    let n: usize = probe_out.iter().product();
    let weights = Tensor::new(probe_out, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let loss_of = |tape: &mut Tape<f64>, b: &Bound| {
        let y = forward(tape, b);
        let w = tape.constant(weights.clone());
        let prod = tape.mul(y, w).unwrap();
        tape.sum(prod)
    };

    let mut tape = Tape::new();
    let b = ps.bind(&mut tape);
    let loss = loss_of(&mut tape, &b);
    let mut grads = tape.backward(loss).unwrap();
    ps.accumulate(&b, &mut grads);
    let analytic = ps.flatten_grads();
    let x0 = ps.flatten();

    let mut eval = |x: &[f64]| {
        let mut q = ps.clone();
        q.unflatten(x).unwrap();
        let mut tape = Tape::new();
        let b = q.bind_frozen(&mut tape);
        let l = loss_of(&mut tape, &b);
        tape.value(l).item()
    };
    let mut worst = 0.0f64;
    for _ in 0..PROBES {
        let i = rng.gen_range(0..x0.len());
        let numeric = central_difference(&mut eval, &x0, i, H);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

fn graph(seed: u64) -> Graph {
    let mut rng = stream(seed, "graph");
    let g = gnp(9, 0.35, &mut rng);
    let feats: Vec<f64> = (0..g.n() * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    g.with_features(feats, 3).unwrap()
}

pub fn encoder_layer(kind: EncoderKind) -> f64 {
    let g = graph(1);
    let ctx = GraphContext::<f64>::new(&g, kind, PropagationMode::Dense).unwrap();
    let mut rng = stream(2, "params");
    let mut ps = ParamSet::new();
    let cfg = EncoderConfig {
        kind,
        layers: 1,
        hidden: 5,
        ..Default::default()
    };
    let enc = Encoder::new(&mut ps, "enc", cfg, 3, &mut rng).unwrap();
    check(
        ps,
        |tape, p| {
            let mut r = stream(0, "dropout");
            let h = enc.forward(tape, p, &ctx, false, &mut r).unwrap();
            tape.tanh(h)
        },
        &mut rng,
    )
}

pub fn phi_block(kind: PhiKind) -> f64 {
    let mut rng = stream(3, "params");
    let mut ps = ParamSet::new();
    let cfg = PhiConfig {
        kind,
        hidden: 6,
        heads: 2,
        layers: 1,
        max_len: 8,
    };
    let phi = Phi::new(&mut ps, "phi", cfg, 4, &mut rng).unwrap();
    let x = Tensor::new(vec![7, 4], (0..28).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let seqs = vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 0, 1], vec![2, 2]];
    check(
        ps,
        |tape, p| {
            let xv = tape.constant(x.clone());
            phi.forward(tape, p, xv, &seqs).unwrap()
        },
        &mut rng,
    )
}

pub fn rho_mlp() -> f64 {
    let mut rng = stream(4, "params");
    let mut ps = ParamSet::new();
    let mlp = Mlp::new(&mut ps, "rho", &[5, 8, 8, 1], &mut rng);
    let x = Tensor::new(vec![6, 5], (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    check(
        ps,
        |tape, p| {
            let xv = tape.constant(x.clone());
            mlp.forward(tape, p, xv).unwrap()
        },
        &mut rng,
    )
}

pub fn sp4lp_logit() -> f64 {
    let g = graph(5);
    let mut cfg = LinkScorerConfig::new(ScorerKind::Sp4lp);
    cfg.encoder.hidden = 6;
    cfg.hidden = 6;
    cfg.phi.as_mut().unwrap().hidden = 6;
    let model = LinkModel::<f64>::new(cfg, g.feature_dim(), 6).unwrap();
    let ctx = model.context(&g, PropagationMode::Sparse).unwrap();
    let order = model_visit_order(&g).unwrap();
    let idx = build_index_ordered(&g, &(0..g.n()).collect::<Vec<_>>(), &order).unwrap();
    let pairs = vec![(0, 1), (2, 7), (3, 8), (4, 5)];
    let batch = model.prepare(&g, Some(&idx), pairs).unwrap();
    let mut rng = stream(7, "probes");
    check(
        model.params.clone(),
        |tape, p| {
            let mut r = stream(0, "dropout");
            let emb = model.embed(tape, p, &ctx, false, &mut r).unwrap();
            model.score(tape, p, emb, &batch).unwrap()
        },
        &mut rng,
    )
}

/// Every trainable block with its worst relative error.
pub fn all_blocks() -> Vec<(&'static str, f64)> {
    vec![
        ("GCN layer", encoder_layer(EncoderKind::Gcn)),
        ("SAGE layer", encoder_layer(EncoderKind::Sage)),
        ("LSTM cell", phi_block(PhiKind::Recurrent)),
        ("attention block", phi_block(PhiKind::Attention)),
        ("injective-sum phi", phi_block(PhiKind::InjectiveSum)),
        ("rho MLP", rho_mlp()),
        ("full SP4LP logit", sp4lp_logit()),
    ]
}
