//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Set `ACCEPTANCE_ONLY=1,5` to run a subset. The process fails when a criterion
//! fails unless it is listed in `KNOWN_DEVIATIONS`, which are still reported as FAIL.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use mvgf_core::autodiff::{finite_difference_at, relative_error, Tensor};
use mvgf_core::data::{
    build_batch, generate_synthetic_dataset, minmax_normalize, write_dataset, FieldDataset, GeneratorConfig,
    MultiViewSample, NormStats, ViewWeights,
};
use mvgf_core::evaluation::{
    bhattacharyya, coverage_split, loyo_split, metrics, metrics_vs_mean, stratified_group_kfold,
};
use mvgf_core::experiment::{
    ablation_csv, ablation_variants, run_ablation, run_cross_validation, write_training, AblationAxis,
    ExperimentConfig,
};
use mvgf_core::fusion::{GateConfig, GatedUnit, Granularity};
use mvgf_core::model::{Merger, Model, ModelConfig, ModelKind};
use mvgf_core::nn::{Mode, ParamStore, Session};
use mvgf_core::training::{mse_loss, train_step, Adam, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Criteria whose stated values contradict their own definitions.
const KNOWN_DEVIATIONS: &[u8] = &[7];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (u8, &'static str, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    (1, "gradient correctness", gradient_correctness),
    (2, "parameter-count anchors", parameter_counts),
    (3, "fusion-weight simplex", fusion_simplex),
    (4, "linear-head identity", linear_head_identity),
    (5, "capacity check", capacity),
    (6, "directional fusion behavior", directional_fusion),
    (7, "metric oracles", metric_oracles),
    (8, "splitter invariants", splitter_invariants),
    (9, "determinism", determinism),
    (10, "ablation table shapes", ablation_shapes),
    (11, "bhattacharyya", bhattacharyya_cases),
];

fn main() {
    let only: Option<BTreeSet<u8>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut unexpected = Vec::new();
    for &(id, title, run) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Outcome::new(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let known = !outcome.pass && KNOWN_DEVIATIONS.contains(&id);
        println!(
            "criterion {id:>2} {:<28} {}{} ({:.1} s) {}",
            title,
            if outcome.pass { "PASS" } else { "FAIL" },
            if known { " [known deviation]" } else { "" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.pass && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn desk(n_farms: usize, fields_per_farm: usize, pixels: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig { n_farms, fields_per_farm, pixels_per_field: pixels, ..GeneratorConfig::desk(seed) }
}

fn normalized(cfg: &GeneratorConfig) -> (FieldDataset, NormStats) {
    let raw = generate_synthetic_dataset(cfg).expect("generator");
    let stats = NormStats::fit(&raw.samples).expect("stats");
    (minmax_normalize(&raw, &stats), stats)
}

fn randomize(store: &mut ParamStore, name: &str, scale: f64, rng: &mut ChaCha8Rng) {
    let id = store.find(name).expect("parameter exists");
    for v in store.get_mut(id).data_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = scale * z;
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let (ds, stats) = normalized(&desk(2, 5, 2, 11));
    let mut model = Model::new(ModelConfig { seed: 5, ..ModelConfig::default() }).expect("model");
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    randomize(&mut model.store, "gate.theta", 0.05, &mut rng);
    let refs: Vec<&MultiViewSample> = ds.samples.iter().collect();
    assert_eq!(refs.len(), 20);
    let batch = build_batch(&refs, &model.input_spec(), &stats).expect("batch");
    let loss_of = |store: &ParamStore| -> mvgf_core::Result<f64> {
        let mut s = Session::new(store, Mode::Train, 3);
        let out = model.forward(&mut s, &batch)?;
        let loss = mse_loss(&mut s, out.prediction, &batch.targets)?;
        Ok(s.value(loss).item())
    };
    let grads = {
        let mut s = Session::new(&model.store, Mode::Train, 3);
        let out = model.forward(&mut s, &batch).expect("forward");
        let loss = mse_loss(&mut s, out.prediction, &batch.targets).expect("loss");
        s.backward(loss).expect("backward")
    };

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut groups = Vec::new();
    for (group, ids) in model.param_groups() {
        let ids: Vec<_> = ids.into_iter().filter(|&id| model.store.is_trainable(id)).collect();
        for _ in 0..8 {
            let id = ids[rng.random_range(0..ids.len())];
            let value = model.store.get(id).clone();
            let analytic = grads.get(id).data();
            // central differences resolve about 1e-9 here, so probe the largest of a few random coordinates
            let index = (0..32)
                .map(|_| rng.random_range(0..value.numel()))
                .max_by(|&a, &b| analytic[a].abs().total_cmp(&analytic[b].abs()))
                .expect("candidates");
            let mut probe_store = model.store.clone();
            let numeric = finite_difference_at(
                |t: &Tensor| {
                    probe_store.set(id, t.clone())?;
                    loss_of(&probe_store)
                },
                &value,
                1e-6,
                &[index],
            )
            .expect("finite difference")[0];
            worst = worst.max(relative_error(analytic[index], numeric, 1e-7));
            checked += 1;
        }
        groups.push(group);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst <= 1e-4 && groups.len() == 6 && secs < 60.0,
        format!("max rel err {worst:.2e} over {checked} coordinates in groups {}", groups.join("/")),
    )
}

fn parameter_counts() -> Outcome {
    let counts: BTreeMap<String, usize> =
        Model::new(ModelConfig::default()).expect("model").component_counts().into_iter().collect();
    let fw = GateConfig { granularity: Granularity::FeatureWise, ..GateConfig::default() };
    let fw_model = Model::new(ModelConfig { merger: Merger::Gated(fw), ..ModelConfig::default() }).expect("model");
    let fw_gate = fw_model.component_counts().into_iter().find(|(n, _)| n == "gate").expect("gate").1;
    let s2 = counts["s2"];
    let encoders = counts["s2"] + counts["weather"] + counts["dem"] + counts["soil"];
    let pass = counts["gate"] == 2_048
        && fw_gate == 262_144
        && s2 == 227_968
        && (s2 as f64 - 228_000.0).abs() / 228_000.0 <= 0.005
        && (encoders as f64 - 483_000.0).abs() / 483_000.0 <= 0.02;
    Outcome::new(
        pass,
        format!("gate {} / {fw_gate}, S2-R encoder {s2}, four encoders {encoders}", counts["gate"]),
    )
}

fn fusion_simplex() -> Outcome {
    const N: usize = 10_000;
    const D: usize = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let gate = GatedUnit::new(&mut store, "gate", 4, D, GateConfig::default());
    let z: Vec<Tensor> = (0..4)
        .map(|_| Tensor::matrix(N, D, (0..N * D).map(|_| StandardNormal.sample(&mut rng)).collect()).expect("z"))
        .collect();
    let weights = |store: &ParamStore| {
        let mut s = Session::new(store, Mode::Eval, 0);
        let zs: Vec<_> = z.iter().map(|t| s.constant(t.clone())).collect();
        let a = gate.weights(&mut s, &zs).expect("weights");
        s.value(a).clone()
    };
    let uniform = weights(&store).data().iter().all(|&a| a == 0.25);
    randomize(&mut store, "gate.theta", 1.0 / (4.0 * D as f64).sqrt(), &mut rng);
    let alpha = weights(&store);
    let mut worst_sum = 0.0f64;
    let mut inside = true;
    for i in 0..N {
        let row = alpha.row(i);
        inside &= row.iter().all(|&a| a > 0.0 && a < 1.0);
        worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    Outcome::new(
        uniform && inside && worst_sum <= 1e-9,
        format!("θ=0 uniform: {uniform}; {N} samples inside (0,1): {inside}; max |Σα−1| {worst_sum:.1e}"),
    )
}

fn linear_head_identity() -> Outcome {
    let (ds, stats) = normalized(&desk(4, 5, 5, 12));
    let mut model = Model::new(ModelConfig { seed: 8, ..ModelConfig::with_kind(ModelKind::MvgfLr) }).expect("model");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    randomize(&mut model.store, "gate.theta", 0.05, &mut rng);
    let refs: Vec<&MultiViewSample> = ds.samples.iter().collect();
    let decomposition = model.decompose(&build_batch(&refs, &model.input_spec(), &stats).expect("batch")).expect("decompose");
    let worst = decomposition.iter().map(|d| d.residual().abs()).fold(0.0, f64::max);
    let spread = decomposition.iter().map(|d| d.alpha[0]).fold(f64::INFINITY, f64::min) < 0.25;
    Outcome::new(
        decomposition.len() == 100 && worst <= 1e-9 && spread,
        format!("{} samples, max |ŷ − (Σ α_v C_v + b)| {worst:.1e}", decomposition.len()),
    )
}

fn r2_of(model: &Model, samples: &[MultiViewSample], stats: &NormStats) -> f64 {
    let refs: Vec<&MultiViewSample> = samples.iter().collect();
    let p = model.predict(&build_batch(&refs, &model.input_spec(), stats).expect("batch")).expect("predict");
    let y: Vec<f64> = samples.iter().map(|s| s.yield_t_ha).collect();
    metrics_vs_mean(&y, &p.yhat).expect("metrics").r2
}

fn capacity() -> Outcome {
    let start = Instant::now();
    let (ds, stats) = normalized(&desk(2, 4, 8, 13));
    let mut model = Model::new(ModelConfig { seed: 2, ..ModelConfig::default() }).expect("model");
    let refs: Vec<&MultiViewSample> = ds.samples.iter().collect();
    let batch = build_batch(&refs, &model.input_spec(), &stats).expect("batch");
    let cfg = TrainConfig { max_epochs: 500, patience: 500, batch_size: 64, ..TrainConfig::default() };
    let mut adam = Adam::new(&model.store, &cfg);
    let mut r2 = f64::NAN;
    let mut epochs = 0;
    for epoch in 1..=cfg.max_epochs {
        train_step(&mut model, &mut adam, &batch, epoch as u64).expect("step");
        epochs = epoch;
        if epoch % 10 == 0 {
            r2 = r2_of(&model, &ds.samples, &stats);
            if r2 > 0.99 {
                break;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        ds.len() == 64 && r2 > 0.99 && secs < 180.0,
        format!("{} pixels, training R² {r2:.4} after {epochs} epochs", ds.len()),
    )
}

fn planted(seed: u64, weights: ViewWeights) -> FieldDataset {
    let cfg = GeneratorConfig { informativeness: weights, noise: 0.3, ..desk(20, 10, 8, seed) };
    generate_synthetic_dataset(&cfg).expect("generator")
}

fn fold_r2(ds: &FieldDataset, kind: ModelKind, seed: u64) -> (f64, Option<f64>) {
    let cfg = ExperimentConfig {
        model: ModelConfig { kind, d: 32, hidden: 32, ..ModelConfig::default() },
        train: TrainConfig { batch_size: 64, max_epochs: 40, patience: 8, learning_rate: 3e-3, ..TrainConfig::default() },
        folds: 5,
        fold_limit: Some(1),
        seed,
        ..ExperimentConfig::default()
    };
    let cv = run_cross_validation(ds, &cfg).expect("cross validation");
    let e = &cv.evaluations[0];
    (e.subfield.r2, e.fold_alpha.as_ref().map(|a| a[0]))
}

fn directional_fusion() -> Outcome {
    let seeds = [1u64, 2, 3];
    let optical = ViewWeights { s2: 1.0, weather: 0.0, dem: 0.0, soil: 0.0 };
    let split = ViewWeights { s2: 1.0, weather: 0.0, dem: 0.0, soil: 1.0 };
    let mut alpha = 0.0;
    let mut gap_optical = 0.0;
    let mut gap_split = 0.0;
    let mut optical_r2 = [0.0; 2];
    for &seed in &seeds {
        let ds = planted(seed, optical);
        let (fused, a) = fold_r2(&ds, ModelKind::Mvgf, seed);
        let (single, _) = fold_r2(&ds, ModelKind::LstmS2r, seed);
        alpha += a.expect("gated model") / seeds.len() as f64;
        gap_optical += (fused - single) / seeds.len() as f64;
        optical_r2[0] += fused / seeds.len() as f64;
        optical_r2[1] += single / seeds.len() as f64;

        let ds = planted(seed + 100, split);
        let (fused, _) = fold_r2(&ds, ModelKind::Mvgf, seed);
        let (single, _) = fold_r2(&ds, ModelKind::LstmS2r, seed);
        gap_split += (fused - single) / seeds.len() as f64;
    }
    Outcome::new(
        alpha > 0.4 && gap_optical >= -0.02 && gap_split >= 0.05,
        format!(
            "optical-only: mean α_s2 {alpha:.3}, R² MVGF {:.3} vs S2-R {:.3} ({gap_optical:+.3}); optical+soil: R² MVGF − S2-R {gap_split:+.3}",
            optical_r2[0], optical_r2[1]
        ),
    )
}

fn scalar_oracle(y: &[f64], yhat: &[f64], y_bar: f64) -> [f64; 3] {
    let (mut abs, mut pct, mut res, mut tot) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        abs += (y[i] - yhat[i]).abs();
        pct += (y[i] - yhat[i]).abs() / y[i];
        res += (y[i] - yhat[i]).powi(2);
        tot += (y[i] - y_bar).powi(2);
    }
    let n = y.len() as f64;
    [abs / n, 100.0 * pct / n, 1.0 - res / tot]
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let n = rng.random_range(2..200);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..8.0)).collect();
        let yhat: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..8.0)).collect();
        let y_bar = y.iter().sum::<f64>() / n as f64;
        let m = metrics(&y, &yhat, y_bar).expect("metrics");
        let o = scalar_oracle(&y, &yhat, y_bar);
        for (a, b) in [m.mae, m.mape, m.r2].iter().zip(o) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    let hand = metrics(&[2.0, 4.0], &[3.0, 3.0], 3.0).expect("metrics");
    let hand_ok = (hand.mae - 1.0).abs() < 1e-12 && hand.r2.abs() < 1e-12;
    let mape_ok = (hand.mape - 41.67).abs() < 0.005;
    Outcome::new(
        worst <= 1e-12 && hand_ok && mape_ok,
        format!(
            "oracle max diff {worst:.1e}; hand case MAE {} R² {} MAPE {:.2}% (stated 41.67%)",
            hand.mae, hand.r2, hand.mape
        ),
    )
}

fn splitter_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut plans = 0;
    for trial in 0..200u64 {
        let n_fields = rng.random_range(10..120u32);
        let n_farms = rng.random_range(1..12u32);
        let field_farm: BTreeMap<u32, u32> = (0..n_fields).map(|f| (f * 7 + 3, rng.random_range(0..n_farms))).collect();
        let fields: BTreeSet<u32> = field_farm.keys().copied().collect();
        let plan = stratified_group_kfold(&field_farm, 10, trial).expect("kfold");
        if plan.folds.len() != 10 || plan.check_partition(&fields).is_err() {
            return Outcome::new(false, format!("k-fold partition violated in trial {trial}"));
        }

        let field_year: BTreeMap<u32, i32> = fields.iter().map(|&f| (f, 2017 + rng.random_range(0..5))).collect();
        let years: BTreeSet<i32> = field_year.values().copied().collect();
        if years.len() >= 2 {
            let plan = loyo_split(&field_year).expect("loyo");
            for fold in &plan.folds {
                let year = fold.year.expect("year");
                let expected = field_year.values().filter(|&&y| y == year).count();
                if fold.validation.len() != expected || fold.train.iter().any(|f| field_year[f] == year) {
                    return Outcome::new(false, format!("LOYO fold {year} mismatched in trial {trial}"));
                }
            }
            plan.check_partition(&fields).expect("loyo partition");
        }

        let coverage: BTreeMap<u32, f64> = fields.iter().map(|&f| (f, rng.random_range(0..8) as f64 / 8.0)).collect();
        let split = coverage_split(&coverage).expect("coverage");
        let mut sorted: Vec<f64> = coverage.values().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let threshold_ok = split.threshold == sorted[4];
        let low_ok = split.low.iter().all(|f| coverage[f] <= split.threshold) && split.low.len() >= 5;
        let high_ok = split.high.iter().all(|f| coverage[f] > split.threshold);
        if !(threshold_ok && low_ok && high_ok && split.low.len() + split.high.len() == fields.len()) {
            return Outcome::new(false, format!("coverage split rule violated in trial {trial}"));
        }
        plans += 1;
    }
    let exact: BTreeMap<u32, u32> = (0..40).map(|f| (f, f / 10)).collect();
    let plan = stratified_group_kfold(&exact, 10, 0).expect("kfold");
    let balanced = plan
        .folds
        .iter()
        .all(|f| f.validation.iter().map(|x| exact[x]).collect::<BTreeSet<_>>().len() == 4 && f.validation.len() == 4);
    let ties: BTreeMap<u32, f64> = (0..9).map(|f| (f, if f < 3 { 0.1 } else if f < 7 { 0.5 } else { 0.9 })).collect();
    let tie_low = coverage_split(&ties).expect("coverage").low.len();
    Outcome::new(
        balanced && tie_low == 7,
        format!("{plans} random configurations; 40 fields/4 farms one per farm per fold: {balanced}; tie case low = {tie_low}"),
    )
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("run dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).expect("read")))
        .collect()
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().expect("tempdir");
    let run = |tag: &str| {
        let dir = root.path().join(tag);
        fs::create_dir_all(&dir).expect("dir");
        let gen = desk(3, 4, 4, 99);
        let ds = generate_synthetic_dataset(&gen).expect("generator");
        write_dataset(&dir.join("dataset.jsonl"), &ds, Some(&gen)).expect("write");
        let cfg = ExperimentConfig {
            model: ModelConfig { d: 16, hidden: 16, ..ModelConfig::default() },
            train: TrainConfig { batch_size: 16, max_epochs: 3, patience: 3, ..TrainConfig::default() },
            folds: 3,
            seed: 99,
            ..ExperimentConfig::default()
        };
        let cv = run_cross_validation(&ds, &cfg).expect("cross validation");
        write_training(&dir, &cv).expect("write run");
        files(&dir)
    };
    let a = run("a");
    let b = run("b");
    let names: Vec<&String> = a.keys().collect();
    let identical = a == b;
    let has_all = ["dataset.jsonl", "fold0.bin", "fold2.bin", "metrics.csv"].iter().all(|n| a.contains_key(*n));
    Outcome::new(identical && has_all, format!("{} files compared byte for byte, identical: {identical}", names.len()))
}

fn ablation_shapes() -> Outcome {
    let start = Instant::now();
    let ds = generate_synthetic_dataset(&desk(4, 5, 6, 21)).expect("generator");
    let cfg = ExperimentConfig {
        model: ModelConfig { d: 16, hidden: 16, ..ModelConfig::default() },
        train: TrainConfig { batch_size: 32, max_epochs: 4, patience: 4, learning_rate: 3e-3, ..TrainConfig::default() },
        folds: 3,
        seed: 4,
        workers: std::thread::available_parallelism().map_or(1, |n| n.get().min(4)),
        ..ExperimentConfig::default()
    };
    let metric_columns = "field_mae,field_mape,field_r2,subfield_mae,subfield_mape,subfield_r2";
    let expected: [(AblationAxis, &str, Vec<&str>); 4] = [
        (
            AblationAxis::Views,
            "model,input_views",
            vec!["lstm,s2-r", "mvgf,s2-r+weather", "mvgf,s2-r+dem", "mvgf,s2-r+soil", "mvgf,s2-r+weather+dem+soil"],
        ),
        (
            AblationAxis::Merger,
            "approach,merge",
            vec![
                "feature-fusion,product",
                "feature-fusion,maximum",
                "feature-fusion,concat",
                "feature-fusion,uniform-sum",
                "adaptive-fusion,sigmoid-weighted-sum",
                "adaptive-fusion,softmax-weighted-sum",
            ],
        ),
        (AblationAxis::GuVariant, "gu_input,across", vec!["average,views+features", "concat,views+features", "concat,views"]),
        (AblationAxis::Regularization, "technique", vec!["none", "dropout", "bn", "bn+dropout"]),
    ];
    let mut shapes = Vec::new();
    for (axis, labels, rows) in expected {
        let table = run_ablation(&ds, axis, &cfg).expect("ablation");
        let csv = ablation_csv(axis, &table, false);
        let mut lines = csv.lines();
        let header_ok = lines.next() == Some(format!("{labels},{metric_columns}").as_str());
        let got: Vec<String> = lines.map(|l| l.splitn(labels.split(',').count() + 1, ',').take(labels.split(',').count()).collect::<Vec<_>>().join(",")).collect();
        let finite = table.iter().all(|r| [r.field.mae.mean, r.subfield.r2.mean].iter().all(|v| v.is_finite()));
        if !(header_ok && got == rows && finite && ablation_variants(axis, &cfg.model).len() == rows.len()) {
            return Outcome::new(false, format!("{axis:?} table shape mismatch: {got:?}"));
        }
        shapes.push(format!("{axis:?} {}×{}", rows.len(), labels.split(',').count() + 6));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(secs < 1800.0, format!("{} with {} workers", shapes.join(", "), cfg.workers))
}

fn bhattacharyya_cases() -> Outcome {
    let p = [0.1, 0.2, 0.3, 0.4];
    let same = bhattacharyya(&p, &p).expect("same");
    let disjoint = bhattacharyya(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.3, 0.7]).expect("disjoint");
    let half = bhattacharyya(&[0.5, 0.5], &[1.0, 0.0]).expect("half");
    Outcome::new(
        (same - 1.0).abs() < 1e-12 && disjoint == 0.0 && (half - 0.70711).abs() <= 1e-5,
        format!("identical {same}, disjoint {disjoint}, [0.5,0.5] vs [1,0] {half:.5}"),
    )
}
