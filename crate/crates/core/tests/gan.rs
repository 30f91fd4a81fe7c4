use dtaigen::benchmark::{make_synthetic_dataset, ProblemSpec};
use dtaigen::config::TargetsConfig;
use dtaigen::data::{fit_normalizer, Dataset, DesignColumn, Direction, ObjectiveSpec, TargetSpec};
use dtaigen::dpp::{DppTerm, KernelConfig};
use dtaigen::gan::{
    sample_generator, train, GanConfig, GanTrainer, GeneratorCheckpoint, GeneratorModel, QualityModel, Variant,
};
use dtaigen::linalg::Matrix;
use dtaigen::metrics::{feasibility_rate, target_metrics, Judge};
use dtaigen::nn::{
    train_surrogates, Activation, NetParams, NetSpec, Network, SurrogateConfig, Surrogates,
};
use dtaigen::stats::median;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

struct Fixture {
    data: Dataset,
    surrogates: Surrogates,
    targets: TargetSpec,
}

fn fixture(n: usize, seed: u64, epochs: usize) -> Fixture {
    let data = make_synthetic_dataset(&ProblemSpec::by_id("ring8").unwrap(), n, seed).unwrap();
    let norm = fit_normalizer(&data).unwrap();
    let mut cfg = SurrogateConfig::default().with_seed(seed);
    cfg.epochs = Some(epochs);
    let (surrogates, _) = train_surrogates(&data, &norm, &cfg).unwrap();
    let targets = TargetsConfig::default().compute(&data).unwrap();
    Fixture {
        data,
        surrogates,
        targets,
    }
}

fn short(variant: Variant, gamma1: f64, steps: usize) -> GanConfig {
    GanConfig {
        variant,
        gamma1,
        steps,
        seed: 4,
        log_every: 1,
        ..GanConfig::default()
    }
}

#[test]
fn zero_weight_matches_vanilla_bitwise() {
    let f = fixture(400, 1, 2);
    let (a, la) = train(&f.data, &f.surrogates, &f.targets, &short(Variant::Proposed, 0.0, 30)).unwrap();
    let (b, lb) = train(&f.data, &f.surrogates, &f.targets, &short(Variant::Vanilla, 0.5, 30)).unwrap();
    assert_eq!(a.network.params.fingerprint(), b.network.params.fingerprint());
    assert_eq!(a.network.params, b.network.params);
    let d: Vec<f64> = la.rows.iter().map(|r| r.d_loss).collect();
    let e: Vec<f64> = lb.rows.iter().map(|r| r.d_loss).collect();
    assert_eq!(d, e);
}

#[test]
fn training_is_deterministic() {
    let f = fixture(400, 2, 2);
    let cfg = short(Variant::Proposed, 0.5, 25);
    let (a, la) = train(&f.data, &f.surrogates, &f.targets, &cfg).unwrap();
    let (b, lb) = train(&f.data, &f.surrogates, &f.targets, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(la.rows, lb.rows);
    let other = GanConfig { seed: 5, ..cfg };
    let (c, _) = train(&f.data, &f.surrogates, &f.targets, &other).unwrap();
    assert_ne!(a.network.params, c.network.params);
}

#[test]
fn zero_steps_returns_seeded_initial_generator() {
    let f = fixture(400, 3, 2);
    let cfg = short(Variant::Proposed, 0.5, 0);
    let (model, log) = train(&f.data, &f.surrogates, &f.targets, &cfg).unwrap();
    assert!(log.rows.is_empty());
    let quality = QualityModel::new(&f.surrogates, &f.targets, &f.data).unwrap();
    let trainer = GanTrainer::new(&cfg, &f.data.layout(), quality).unwrap();
    assert_eq!(model.network.params, trainer.init_state().generator);
}

#[test]
fn each_variant_trains() {
    let f = fixture(400, 4, 2);
    for v in Variant::ALL {
        let (model, log) = train(&f.data, &f.surrogates, &f.targets, &short(v, 0.5, 5)).unwrap();
        assert!(model.network.params.is_finite(), "{v:?}");
        assert!(log.rows.iter().all(|r| r.d_loss.is_finite() && r.g_loss.is_finite()));
    }
}

#[test]
fn collapsed_batch_costs_more_than_spread_batch() {
    let cfg = KernelConfig::default_for_width(8);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let q = vec![0.5; 32];
    let mut spread = Matrix::zeros(32, 8);
    spread.as_mut_slice().iter_mut().for_each(|v| *v = rng.random());
    let mut collapsed = Matrix::zeros(32, 8);
    for i in 0..32 {
        for j in 0..8 {
            collapsed[(i, j)] = 0.5 + 1e-4 * rng.random::<f64>();
        }
    }
    let a = DppTerm::evaluate(&collapsed, &q, &cfg).unwrap().loss.loss;
    let b = DppTerm::evaluate(&spread, &q, &cfg).unwrap().loss.loss;
    assert!(a > b + 1.0, "collapsed {a}, spread {b}");
}

fn constant_surrogates(r: f64) -> (Surrogates, TargetSpec, Dataset) {
    let cols = vec![DesignColumn::Continuous {
        name: "x".into(),
        min: 0.0,
        max: 1.0,
    }];
    let objs = vec![ObjectiveSpec::new("p", Direction::Maximize)];
    let x = Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
    let p = Matrix::from_vec(2, 1, vec![1.0, 3.0]).unwrap();
    let data = Dataset::new(cols, objs, x, p, vec![true, false]).unwrap();
    let mut norm = fit_normalizer(&data).unwrap();
    norm.perf_mean = vec![0.0];
    norm.perf_std = vec![1.0];
    let reg_spec = NetSpec::mlp(1, &[3], 1, Activation::Relu, Activation::Identity).unwrap();
    let mut reg = NetParams::zeros(&reg_spec);
    reg.layers[1].b[0] = r;
    let clf_spec = NetSpec::mlp(1, &[3], 1, Activation::Relu, Activation::Sigmoid).unwrap();
    let surrogates = Surrogates {
        regressor: Network { spec: reg_spec, params: reg },
        classifier: Network { params: NetParams::zeros(&clf_spec), spec: clf_spec },
        normalizer: norm,
    };
    let targets = TargetSpec::new(vec![1.0], vec![1.0], vec![1.0], vec![Direction::Maximize]).unwrap();
    (surrogates, targets, data)
}

#[test]
fn quality_is_dtai_times_feasibility() {
    // DTAI = 0.8 needs s = 0.6, i.e. 1 - exp(1 - r) = 0.6
    let r = 1.0 + 2.5f64.ln();
    let (s, t, data) = constant_surrogates(r);
    let model = QualityModel::new(&s, &t, &data).unwrap();
    let x = Matrix::from_vec(3, 1, vec![0.1, 0.5, 0.9]).unwrap();
    let q = model.compute_quality(&x, Variant::Proposed, None).unwrap();
    for i in 0..3 {
        assert!((q.dtai_hat[i] - 0.8).abs() < 1e-12);
        assert_eq!(q.feasibility[i], 0.5);
        assert!((q.q[i] - 0.4).abs() < 1e-12);
    }
    let nc = model.compute_quality(&x, Variant::NoClf, None).unwrap();
    assert_eq!(nc.q, nc.performance_score);
    assert_eq!(nc.q, q.dtai_hat);
}

fn untrained(data: &Dataset, seed: u64) -> GeneratorModel {
    let cfg = GanConfig::default();
    let layout = data.layout();
    let spec = cfg.generator_spec(&layout).unwrap();
    GeneratorModel {
        network: Network {
            params: NetParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed)),
            spec,
        },
        normalizer: fit_normalizer(data).unwrap(),
        design_columns: data.design_columns().to_vec(),
        latent_dim: cfg.latent_dim,
    }
}

fn mixed_dataset() -> Dataset {
    let cols = vec![
        DesignColumn::Continuous { name: "a".into(), min: 0.0, max: 2.0 },
        DesignColumn::Categorical { name: "m".into(), levels: vec!["s".into(), "t".into(), "u".into()] },
        DesignColumn::Continuous { name: "b".into(), min: -1.0, max: 1.0 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 30;
    let mut x = Matrix::zeros(n, 5);
    let mut p = Matrix::zeros(n, 1);
    for i in 0..n {
        let lvl = i % 3;
        let row = x.row_mut(i);
        row[0] = 2.0 * rng.random::<f64>();
        row[1 + lvl] = 1.0;
        row[4] = 2.0 * rng.random::<f64>() - 1.0;
        p[(i, 0)] = 1.0 + rng.random::<f64>();
    }
    let feasible = (0..n).map(|i| i % 2 == 0).collect();
    Dataset::new(cols, vec![ObjectiveSpec::new("p", Direction::Maximize)], x, p, feasible).unwrap()
}

#[test]
fn sampling_contracts() {
    let data = mixed_dataset();
    let g = untrained(&data, 1);
    assert_eq!(sample_generator(&g, 1, 9, false).unwrap(), sample_generator(&g, 1, 9, false).unwrap());

    let soft = sample_generator(&g, 250, 3, false).unwrap();
    assert!(soft.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));

    let hard = sample_generator(&g, 250, 3, true).unwrap();
    for row in hard.row_iter() {
        let group = &row[1..4];
        assert_eq!(group.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(group.iter().filter(|&&v| v == 0.0).count(), 2);
    }
    let raw = g.to_raw(&hard).unwrap();
    for row in raw.row_iter() {
        assert!((0.0..=2.0).contains(&row[0]));
        assert!((-1.0..=1.0).contains(&row[4]));
    }
    assert!(sample_generator(&g, 0, 3, true).is_err());
}

#[test]
fn generator_checkpoint_round_trips() {
    let data = mixed_dataset();
    let g = untrained(&data, 2);
    let ckpt = GeneratorCheckpoint::new(&g, Variant::NoDtai, 2, "d");
    let text = serde_json::to_string(&ckpt).unwrap();
    let back: GeneratorCheckpoint = serde_json::from_str(&text).unwrap();
    assert_eq!(back.to_model().unwrap(), g);
}

/// Oracle-evaluated DTAI and feasibility of `n` hard samples.
fn oracle_scores(model: &GeneratorModel, f: &Fixture, seed: u64) -> (f64, f64) {
    let spec = ProblemSpec::by_id("ring8").unwrap();
    let raw = model.to_raw(&sample_generator(model, 250, seed, true).unwrap()).unwrap();
    let mut perf = Matrix::zeros(raw.rows(), 3);
    for i in 0..raw.rows() {
        let (p, _) = spec.oracle().evaluate(raw.row(i)).unwrap();
        perf.row_mut(i).copy_from_slice(&p);
    }
    let dtai = target_metrics(&perf, &f.targets).unwrap().mean_dtai();
    let gfr = feasibility_rate(&raw, &f.surrogates.normalizer, Some(&Judge::Oracle(spec.oracle())))
        .unwrap()
        .rate;
    (dtai, gfr)
}

struct EndToEnd {
    initial_dtai: Vec<f64>,
    proposed_dtai: Vec<f64>,
    feasibility_gap: Vec<f64>,
}

/// Default-config runs on the 4500-row benchmark, seeds 0..3, shared by the
/// end-to-end checks below.
fn end_to_end() -> &'static EndToEnd {
    static RUNS: OnceLock<EndToEnd> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut out = EndToEnd {
            initial_dtai: Vec::new(),
            proposed_dtai: Vec::new(),
            feasibility_gap: Vec::new(),
        };
        for seed in 0..3 {
            let f = fixture(4500, seed, 200);
            let base = GanConfig { seed, ..GanConfig::default() };
            let (init, _) = train(&f.data, &f.surrogates, &f.targets, &GanConfig { steps: 0, ..base.clone() }).unwrap();
            let (proposed, _) = train(&f.data, &f.surrogates, &f.targets, &base).unwrap();
            let (vanilla, _) =
                train(&f.data, &f.surrogates, &f.targets, &GanConfig { variant: Variant::Vanilla, ..base }).unwrap();
            let (d0, _) = oracle_scores(&init, &f, seed);
            let (dp, gp) = oracle_scores(&proposed, &f, seed);
            let (_, gv) = oracle_scores(&vanilla, &f, seed);
            out.initial_dtai.push(d0);
            out.proposed_dtai.push(dp);
            out.feasibility_gap.push(gp - gv);
        }
        out
    })
}

#[test]
fn training_raises_oracle_dtai_over_step_zero() {
    let r = end_to_end();
    let improved = (0..3).all(|s| r.proposed_dtai[s] > r.initial_dtai[s]);
    assert!(
        improved,
        "trained DTAI {:?} vs initial {:?}",
        r.proposed_dtai, r.initial_dtai
    );
}

#[test]
fn proposed_is_more_feasible_than_vanilla() {
    let gap = &end_to_end().feasibility_gap;
    let m = median(gap).unwrap();
    assert!(m >= 0.05, "median feasibility gap {m} ({gap:?})");
}
