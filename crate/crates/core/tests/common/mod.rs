#![allow(dead_code)]

use hst_core::nn::{loss_eval, Activation, GraphBuilder, LossKind, Network, Segment};
use hst_core::tensor::Tensor;
use hst_core::BlockSymbol;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// (head index, loss, target) triples defining a scalar objective.
pub type Objective = Vec<(usize, LossKind, Tensor<f64>)>;

pub fn objective(net: &Network<f64>, x: &Tensor<f64>, obj: &Objective) -> f64 {
    let outs = net.predict(x).unwrap();
    obj.iter()
        .map(|(h, k, t)| loss_eval(*k, &outs[*h], t).unwrap().value)
        .sum()
}

pub fn analytic(net: &Network<f64>, x: &Tensor<f64>, obj: &Objective) -> Vec<f64> {
    let acts = net.forward(x).unwrap();
    let mut grads = vec![None; net.heads().len()];
    for (h, k, t) in obj {
        let g = loss_eval(*k, acts.segment_output(net.heads()[*h].1), t).unwrap().grad;
        grads[*h] = Some(g);
    }
    Network::flatten_grads(net.backward(&acts, &grads).unwrap())
        .into_iter()
        .flat_map(Tensor::into_data)
        .collect()
}

/// Central differences over every parameter element.
pub fn numeric(net: &Network<f64>, x: &Tensor<f64>, obj: &Objective) -> Vec<f64> {
    let mut probe = net.clone();
    let sizes: Vec<usize> = probe.params_mut().iter().map(|(_, p)| p.len()).collect();
    let mut out = Vec::new();
    for (pi, &n) in sizes.iter().enumerate() {
        for e in 0..n {
            let orig = probe.params_mut()[pi].1.data()[e];
            probe.params_mut()[pi].1.data_mut()[e] = orig + FD_STEP;
            let up = objective(&probe, x, obj);
            probe.params_mut()[pi].1.data_mut()[e] = orig - FD_STEP;
            let down = objective(&probe, x, obj);
            probe.params_mut()[pi].1.data_mut()[e] = orig;
            out.push((up - down) / (2.0 * FD_STEP));
        }
    }
    out
}

/// `|a − n| / max(|a| + |n|, 1e-6)`, maximized over elements.
pub fn max_rel_err(a: &[f64], n: &[f64]) -> f64 {
    assert_eq!(a.len(), n.len());
    a.iter()
        .zip(n)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

pub fn grad_error(net: &Network<f64>, x: &Tensor<f64>, obj: &Objective) -> f64 {
    max_rel_err(&analytic(net, x, obj), &numeric(net, x, obj))
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn one_hot(rng: &mut ChaCha8Rng, rows: usize, classes: usize) -> Tensor<f64> {
    let mut t = Tensor::zeros(&[rows, classes]);
    for r in 0..rows {
        let c = rng.gen_range(0..classes);
        t.data_mut()[r * classes + c] = 1.0;
    }
    t
}

pub fn binary(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let n = rows * cols;
    Tensor::new(vec![rows, cols], (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect()).unwrap()
}

pub fn output_activation(loss: LossKind) -> Activation {
    match loss {
        LossKind::Mse => Activation::Linear,
        LossKind::Bce => Activation::Sigmoid,
        LossKind::Ce => Activation::Softmax,
    }
}

pub fn target(rng: &mut ChaCha8Rng, loss: LossKind, rows: usize, cols: usize) -> Tensor<f64> {
    match loss {
        LossKind::Mse => uniform(rng, &[rows, cols], -1.0, 1.0),
        LossKind::Bce => binary(rng, rows, cols),
        LossKind::Ce => one_hot(rng, rows, cols),
    }
}

pub const HIDDEN: [Activation; 5] = [
    Activation::Elu,
    Activation::Tanh,
    Activation::Sigmoid,
    Activation::Softmax,
    Activation::Linear,
];
pub const LOSSES: [LossKind; 3] = [LossKind::Mse, LossKind::Bce, LossKind::Ce];

/// Dense(3→4) · hidden · Dense(4→3) · output activation: 31 parameters.
pub fn dense_case(hidden: Activation, loss: LossKind, seed: u64) -> (Network<f64>, Tensor<f64>, Objective) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = GraphBuilder::new(3)
        .block(BlockSymbol::Encoder)
        .dense(4, hidden)
        .block(BlockSymbol::C)
        .dense(3, output_activation(loss))
        .build(seed)
        .unwrap();
    let x = uniform(&mut rng, &[4, 3], -1.0, 1.0);
    let t = target(&mut rng, loss, 4, 3);
    (Network::chain(g), x, vec![(0, loss, t)])
}

/// Conv1D(1→2, k3) over length 6 · hidden · Flatten · Dense(8→2): 26 parameters.
pub fn conv_case(hidden: Activation, loss: LossKind, seed: u64) -> (Network<f64>, Tensor<f64>, Objective) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = GraphBuilder::new(6)
        .block(BlockSymbol::Cf)
        .conv1d(1, 2, 3, hidden)
        .flatten()
        .block(BlockSymbol::Hf)
        .dense(2, output_activation(loss))
        .build(seed)
        .unwrap();
    let x = uniform(&mut rng, &[3, 6], -1.0, 1.0);
    let t = target(&mut rng, loss, 3, 2);
    (Network::chain(g), x, vec![(0, loss, t)])
}

/// Two-channel input through a 2→2 conv (k2) so channel mixing is covered: 12 + 14 parameters.
pub fn multichannel_conv_case(seed: u64) -> (Network<f64>, Tensor<f64>, Objective) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = GraphBuilder::new(8)
        .block(BlockSymbol::Cl)
        .conv1d(2, 2, 2, Activation::Tanh)
        .flatten()
        .block(BlockSymbol::Hl)
        .dense(2, Activation::Linear)
        .build(seed)
        .unwrap();
    let x = uniform(&mut rng, &[3, 8], -1.0, 1.0);
    let t = target(&mut rng, LossKind::Mse, 3, 2);
    (Network::chain(g), x, vec![(0, LossKind::Mse, t)])
}

/// Shared trunk feeding a sigmoid/BCE head and a linear/MSE head: 16 + 10 + 6 parameters.
pub fn multi_head_case(seed: u64) -> (Network<f64>, Tensor<f64>, Objective) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trunk = GraphBuilder::new(3).block(BlockSymbol::Encoder).dense(4, Activation::Elu).build(seed).unwrap();
    let cls = GraphBuilder::new(4).block(BlockSymbol::C).dense(2, Activation::Sigmoid).build(seed + 1).unwrap();
    let reg = GraphBuilder::new(4).block(BlockSymbol::R).dense(2, Activation::Linear).build(seed + 2).unwrap();
    let net = Network::new(
        vec![
            Segment { name: "trunk".into(), source: None, graph: trunk },
            Segment { name: "cls".into(), source: Some(0), graph: cls },
            Segment { name: "reg".into(), source: Some(0), graph: reg },
        ],
        vec![("cls".into(), 1), ("reg".into(), 2)],
    )
    .unwrap();
    let x = uniform(&mut rng, &[4, 3], -1.0, 1.0);
    let obj = vec![
        (0, LossKind::Bce, binary(&mut rng, 4, 2)),
        (1, LossKind::Mse, uniform(&mut rng, &[4, 2], -1.0, 1.0)),
    ];
    (net, x, obj)
}

pub fn param_count(net: &Network<f64>) -> usize {
    net.param_count()
}

use hst_core::data::{generate_synthetic, SyntheticConfig, SyntheticSite};
use hst_core::experiment::ExperimentConfig;
use hst_core::models::{ArchConfig, ConvSpec, ModelKind};

/// Narrow layers so full pipelines run in seconds.
pub fn small_arch() -> ArchConfig {
    ArchConfig {
        encoder_widths: vec![24, 16, 12],
        common_widths: vec![16, 16],
        regression_hidden: vec![16],
        building_hidden: vec![12, 12],
        conv: vec![ConvSpec { channels: 4, kernel: 3 }, ConvSpec { channels: 3, kernel: 3 }],
        ..ArchConfig::default()
    }
}

pub fn small_site(seed: u64) -> SyntheticSite {
    let cfg = SyntheticConfig {
        aps: 20,
        train_records: 240,
        test_records: 60,
        ..SyntheticConfig::default()
    };
    generate_synthetic(&cfg, seed).unwrap()
}

pub fn quick_cfg(kind: ModelKind, seed: u64, epochs: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(kind, seed).with_max_epochs(epochs);
    c.arch = small_arch();
    for s in c.stages.iter_mut().chain(c.sae.as_mut()) {
        s.learning_rate = 1e-2;
    }
    c
}

pub struct OverfitResult {
    pub stage1_bce: f64,
    pub stage2_mse: f64,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub stage1_monotone_share: f64,
}

/// Trains both linked-DNN stages on a 10-record subset with the published
/// architecture and learning rates, at most 2000 Adam steps each.
pub fn overfit_linked_dnn(seed: u64) -> OverfitResult {
    use hst_core::experiment::build_plans;
    use hst_core::staged::{resolve_init, train_stage};
    use hst_core::data::Provenance;
    use hst_core::train::evaluate_loss;

    let site = generate_synthetic(&SyntheticConfig::default(), seed).unwrap();
    let idx: Vec<usize> = (0..10).map(|i| i * site.train.len() / 10).collect();
    let tiny = site.train.subset(&idx, Provenance::Train);
    let mut cfg = ExperimentConfig::defaults(ModelKind::LinkedDnn, seed);
    for s in &mut cfg.stages {
        s.max_epochs = 2000;
        s.max_steps = Some(2000);
        s.early_stopping_patience = None;
    }
    let plans = build_plans::<f32>(&cfg, &tiny, None, None).unwrap();
    let s1 = train_stage(&plans[0], resolve_init(&plans[0], &[]).unwrap()).unwrap();
    let init2 = resolve_init(&plans[1], std::slice::from_ref(&s1)).unwrap();
    let s2 = train_stage(&plans[1], init2).unwrap();
    let trace = &s1.outcome.trace;
    let down = trace.windows(2).filter(|w| w[1].train_loss <= w[0].train_loss).count();
    OverfitResult {
        stage1_bce: evaluate_loss(&s1.network, &plans[0].train).unwrap(),
        stage2_mse: evaluate_loss(&s2.network, &plans[1].train).unwrap(),
        stage1_steps: s1.outcome.steps,
        stage2_steps: s2.outcome.steps,
        stage1_monotone_share: down as f64 / (trace.len() - 1).max(1) as f64,
    }
}
