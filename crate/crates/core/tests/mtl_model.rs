mod common;

use smartpg::ad::Tape;
use smartpg::experiment::{generate_dataset, sample_loads, split, Sample};
use smartpg::ipm::IpmOptions;
use smartpg::mtl::{
    build_separate_topology, build_topology, deepen, forward, loss_supervised, train, widen, LossWeights, MtlModel,
    Task, TrainConfig, EPSILON, FORMAT_VERSION,
};
use smartpg::pf::Network;
use smartpg::Error;

use common::network;

fn dataset(net: &Network, n: usize) -> Vec<Sample> {
    let sc = sample_loads(net, n, 0.1, 21).unwrap();
    generate_dataset(net, &sc, &IpmOptions::default(), false).unwrap().0
}

fn outputs(model: &MtlModel, data: &[Sample]) -> Vec<Vec<f64>> {
    data.iter()
        .map(|s| model.predict(&s.scenario.pd, &s.scenario.qd).unwrap().0.concat())
        .collect()
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_learning_rate_leaves_weights_and_losses_unchanged() {
    let net = network("case9");
    let data = dataset(&net, 40);
    let (tr, va) = split(&data);
    let mut model = MtlModel::new(build_topology(&net.dims), &tr, 4).unwrap();
    let before = model.clone();
    let cfg = TrainConfig { epochs: 2, learning_rate: 0.0, batch_size: 8, ..TrainConfig::default() };
    let log = train(&mut model, &net, &tr, &va, &cfg).unwrap();
    assert_eq!(model, before);
    let (a, b) = (log.epochs[0].val.unwrap(), log.epochs[1].val.unwrap());
    assert_eq!(a, b);
}

#[test]
fn detached_trunk_gets_no_auxiliary_gradient() {
    let net = network("case9");
    let data = dataset(&net, 8);
    let model = MtlModel::new(build_topology(&net.dims), &data, 2).unwrap();
    let n_trunk = 2 * model.topology.shared_dims.len();
    let loads: Vec<(&[f64], &[f64])> = data.iter().map(|s| (&s.scenario.pd[..], &s.scenario.qd[..])).collect();
    let aux_only = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let trunk_grad = |detach: bool| {
        let mut t = Tape::new();
        let input = t.leaf(model.input_tensor(&loads).unwrap());
        let (bound, out) = forward(&mut t, &model.topology, &model.params, input, detach).unwrap();
        // Perturbed auxiliary targets: zero tensors of the output shapes.
        let truth = out.0.map(|v| {
            let (r, c) = t.value(v).shape();
            t.leaf(smartpg::ad::Tensor::zeros(r, c))
        });
        let l = loss_supervised(&mut t, &out.0, &truth, &aux_only, EPSILON).unwrap();
        let g = t.backward(l).unwrap();
        bound.vars[..n_trunk]
            .iter()
            .map(|&v| g.get(v).map_or(0.0, |t| t.data.iter().map(|x| x.abs()).sum::<f64>()))
            .sum::<f64>()
    };
    assert_eq!(trunk_grad(true), 0.0);
    assert!(trunk_grad(false) > 0.0);
}

#[test]
fn save_load_reproduces_outputs_bitwise() {
    let net = network("case9");
    let data = dataset(&net, 10);
    let model = MtlModel::new(build_topology(&net.dims), &data, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = MtlModel::load(&path, Some(&net.dims)).unwrap();
    assert_eq!(outputs(&model, &data), outputs(&loaded, &data));
    assert_eq!(loaded, model);

    let text = std::fs::read_to_string(&path).unwrap();
    assert!(MtlModel::from_json(&text[..text.len() / 2], None).is_err());

    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["format_version"], FORMAT_VERSION);
    doc["format_version"] = "2".into();
    match MtlModel::from_json(&doc.to_string(), None) {
        Err(Error::Version { found, .. }) => assert_eq!(found, "2"),
        other => panic!("expected a version error, got {other:?}"),
    }

    let other = network("case14");
    assert!(matches!(MtlModel::from_json(&text, Some(&other.dims)), Err(Error::Dimension(_))));
}

#[test]
fn untrained_prediction_is_well_formed_with_nonnegative_duals() {
    let net = network("case14");
    let data = dataset(&net, 10);
    for topo in [build_topology(&net.dims), build_separate_topology(&net.dims)] {
        let model = MtlModel::new(topo, &data, 5).unwrap();
        let mut rng = common::rng(1);
        use rand::Rng;
        for _ in 0..20 {
            let pd: Vec<f64> = net.pd.iter().map(|p| p * net.base_mva * rng.gen_range(0.0..3.0)).collect();
            let qd: Vec<f64> = net.qd.iter().map(|q| q * net.base_mva * rng.gen_range(-2.0..2.0)).collect();
            let ws = model.predict_warm_start(&pd, &qd).unwrap();
            assert_eq!(ws.x.as_ref().unwrap().len(), net.dims.n_x);
            assert_eq!(ws.lambda.as_ref().unwrap().len(), net.dims.n_eq);
            assert!(ws.mu.as_ref().unwrap().iter().all(|&m| m >= 0.0));
            assert!(ws.z.as_ref().unwrap().iter().all(|&z| z >= 0.0));
            assert_eq!(ws.z.as_ref().unwrap().len(), net.dims.n_ineq);
        }
    }
}

#[test]
fn widen_and_deepen_preserve_the_function() {
    let net = network("case9");
    let data = dataset(&net, 10);
    let mut topo = build_topology(&net.dims);
    topo.shared_dims = vec![40, 50];
    let mut model = MtlModel::new(topo, &data, 6).unwrap();
    let before = outputs(&model, &data);
    assert_eq!(widen(&mut model, 0.1, 1).unwrap(), 55);
    assert_eq!(model.params.trunks[0].last().unwrap().w.shape(), (40, 55));
    assert!(max_diff(&before, &outputs(&model, &data)) < 1e-12);
    deepen(&mut model).unwrap();
    assert_eq!(model.topology.shared_dims, vec![40, 55, 55]);
    assert!(max_diff(&before, &outputs(&model, &data)) < 1e-12);
    model.check(Some(&net.dims)).unwrap();

    let mut sep = MtlModel::new(build_separate_topology(&net.dims), &data, 6).unwrap();
    assert!(widen(&mut sep, 0.1, 1).is_err());
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let net = network("case9");
    let data = dataset(&net, 80);
    let (tr, va) = split(&data);
    let cfg = TrainConfig { epochs: 6, batch_size: 16, seed: 3, ..TrainConfig::default() };
    let run = || {
        let mut m = MtlModel::new(build_topology(&net.dims), &tr, 3).unwrap();
        let log = train(&mut m, &net, &tr, &va, &cfg).unwrap();
        (m, log)
    };
    let (m1, l1) = run();
    let (m2, l2) = run();
    assert_eq!(m1, m2);
    assert_eq!(l1.to_csv(), l2.to_csv());
    let first = l1.epochs.first().unwrap().train.total;
    let last = l1.epochs.last().unwrap().train.total;
    assert!(last < first, "{first} -> {last}");
    assert!(l1.epochs.iter().any(|e| e.detached) && l1.epochs.iter().any(|e| !e.detached));
}

#[test]
fn supervised_only_log_has_zero_physics_columns() {
    let net = network("case9");
    let data = dataset(&net, 30);
    let (tr, va) = split(&data);
    let base = TrainConfig { epochs: 2, batch_size: 8, ..TrainConfig::default() };
    let sup = TrainConfig { weights: LossWeights::supervised_only(), ..base.clone() };
    let mut a = MtlModel::new(build_topology(&net.dims), &tr, 1).unwrap();
    let mut b = a.clone();
    let la = train(&mut a, &net, &tr, &va, &sup).unwrap();
    train(&mut b, &net, &tr, &va, &base).unwrap();
    assert_ne!(a, b);
    for e in &la.epochs {
        assert_eq!((e.train.eqn, e.train.ieq, e.train.lag, e.train.cost), (0.0, 0.0, 0.0, 0.0));
    }
}

#[test]
fn main_heads_only_cover_x() {
    let dims = network("case9").dims;
    let main: usize = Task::X.iter().map(|t| t.width(&dims)).sum();
    assert_eq!(main, dims.n_x);
}
