//! Acceptance suite. Runs every gating criterion at its stated tolerance and
//! prints one PASS/FAIL line each; exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p hiergi --test acceptance`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use hiergi::config::{ExperimentConfig, ScheduleConfig};
use hiergi::data::synthetic::{make_classification, make_segmentation};
use hiergi::data::{
    load_classification_manifest, load_segmentation_manifest, AugmentConfig, ClassificationData, InputSpec,
    SegmentationData,
};
use hiergi::hierarchy::{aggregate_logits, aggregate_probs, DEFAULT_TAXONOMY_JSON};
use hiergi::losses::sigmoid;
use hiergi::metrics::{f1_micro, mcc, seg_scores};
use hiergi::models::{ChannelProbe, Checkpoint, ClassificationModel, DoubleEncoderDecoder, Module, ModelSpec};
use hiergi::training::{
    cv_classify, lr_at, lr_trace, predict_class_probs, predict_mask_probs, segmentation_report, train_classifier,
    train_segmenter, Split, TrainOptions,
};
use hiergi::{Aggregation, CategoryGrouping, ConfusionMatrix, Execution, HierLoss, HierLossWeights, LabelHierarchy, SegLoss, Task};
use ndarray::{s, Array2, Array4, ArrayD, Axis, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

// ── independent oracles ────────────────────────────────────────────────────

/// Group sizes read straight from the taxonomy document, keyed by name.
struct DocCounts {
    n_find: usize,
    /// finding name -> (tract, category)
    parents: BTreeMap<String, (String, String)>,
    tracts: Vec<String>,
    categories: Vec<String>,
}

impl DocCounts {
    fn parse(json: &str) -> Self {
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        let names = |k: &str| -> Vec<String> {
            v[k].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
        };
        let mut parents = BTreeMap::new();
        for f in v["findings"].as_array().unwrap() {
            parents.insert(
                f["name"].as_str().unwrap().to_string(),
                (f["tract"].as_str().unwrap().to_string(), f["category"].as_str().unwrap().to_string()),
            );
        }
        Self {
            n_find: parents.len(),
            parents,
            tracts: names("tracts"),
            categories: names("categories"),
        }
    }

    fn tract_size(&self, tract: &str) -> usize {
        self.parents.values().filter(|(t, _)| t == tract).count()
    }

    fn category_size(&self, cat: &str) -> usize {
        self.parents.values().filter(|(_, c)| c == cat).count()
    }

    fn cell_size(&self, tract: &str, cat: &str) -> usize {
        self.parents.values().filter(|(t, c)| t == tract && c == cat).count()
    }
}

/// Compensated summation.
fn neumaier(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        c += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + c
}

/// Direct evaluation at all-zero logits: every finding has
/// probability 1/N, so each coarse term is −log(group size / N).
fn zero_logit_loss(w: (f64, f64, f64), tract_size: usize, cat_size: usize, n: usize) -> f64 {
    let n = n as f64;
    w.0 * -(tract_size as f64 / n).ln() + w.1 * -(cat_size as f64 / n).ln() + w.2 * n.ln()
}

fn softmax64(z: &[f32]) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b as f64));
    let e: Vec<f64> = z.iter().map(|&v| (v as f64 - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

// ── criteria ───────────────────────────────────────────────────────────────

fn gradient_suite() -> Outcome {
    let t0 = Instant::now();
    let h = LabelHierarchy::default_taxonomy();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let normal = Normal::new(0.0, 3.0).unwrap();
    let step = 1e-5;
    let mut worst = 0.0f64;
    for draw in 0..100 {
        let grouping = if draw % 2 == 0 { CategoryGrouping::Global } else { CategoryGrouping::PerTract };
        let loss = HierLoss::with_grouping(&h, grouping);
        let z: Vec<f64> = (0..h.n_find()).map(|_| normal.sample(&mut rng)).collect();
        let target = loss.target(rng.random_range(0..h.n_find())).map_err(|e| e.to_string())?;
        let (_, grad) = loss.loss_and_grad(&z, &target).map_err(|e| e.to_string())?;
        let fd: Vec<f64> = (0..z.len())
            .map(|k| {
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[k] += step;
                zm[k] -= step;
                (loss.loss(&zp, &target).unwrap() - loss.loss(&zm, &target).unwrap()) / (2.0 * step)
            })
            .collect();
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(diff / norm.max(1e-300));
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok((
        worst < 1e-4 && secs < 30.0,
        format!("100 draws, worst relative error {worst:.2e} (< 1e-4), {secs:.2}s (< 30s)"),
    ))
}

fn aggregation_oracle() -> Outcome {
    let h = LabelHierarchy::default_taxonomy();
    let doc = DocCounts::parse(DEFAULT_TAXONOMY_JSON);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_rel, mut worst_sum) = (0.0f64, 0.0f64);
    for trial in 0..1000 {
        // Dirichlet draws whose concentration varies from peaked to flat.
        let sharp = 1.0 + (trial % 10) as f64;
        let e: Vec<f64> = (0..h.n_find())
            .map(|_| {
                let x: f64 = Exp1.sample(&mut rng);
                x.powf(sharp)
            })
            .collect();
        let total = neumaier(e.iter().copied());
        let p: Vec<f64> = e.iter().map(|v| v / total).collect();
        let z: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        for (map, names, pick) in [
            (h.tract_map(), &doc.tracts, 0usize),
            (h.category_map(CategoryGrouping::Global), &doc.categories, 1usize),
        ] {
            let out = aggregate_logits(&z, map).map_err(|e| e.to_string())?;
            for (g, name) in map.names.iter().enumerate() {
                assert!(names.contains(name));
                let oracle = neumaier(h.findings().iter().enumerate().filter_map(|(k, f)| {
                    let parent = &doc.parents[f];
                    let group = if pick == 0 { &parent.0 } else { &parent.1 };
                    (group == name).then_some(p[k])
                }));
                worst_rel = worst_rel.max((out[g].exp() - oracle).abs() / oracle);
            }
            let s_logits = neumaier(out.iter().map(|v| v.exp()));
            let s_probs = neumaier(aggregate_probs(&p, map).map_err(|e| e.to_string())?);
            worst_sum = worst_sum.max((s_logits - 1.0).abs()).max((s_probs - 1.0).abs());
        }
    }
    Ok((
        worst_rel < 1e-9 && worst_sum < 1e-6,
        format!("1000 vectors, worst relative error {worst_rel:.2e} (< 1e-9), worst |sum - 1| {worst_sum:.2e} (< 1e-6)"),
    ))
}

fn closed_forms() -> Outcome {
    let h = LabelHierarchy::default_taxonomy();
    let doc = DocCounts::parse(DEFAULT_TAXONOMY_JSON);
    let n = doc.n_find;
    let zeros = vec![0.0; n];

    // Every finding under the bundled weights.
    let global = HierLoss::new(&h);
    let w = global.weights;
    let mut worst = 0.0f64;
    for (k, name) in h.findings().iter().enumerate() {
        let (t, c) = &doc.parents[name];
        let oracle = zero_logit_loss((w.tract, w.category, w.finding), doc.tract_size(t), doc.category_size(c), n);
        let got = global.loss(&zeros, &global.target(k).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle).abs());
    }

    // Lower-tract finding in an 8-member category: the pathological findings
    // of the lower tract form such a group when categories are split per
    // tract; weights stay log of the level sizes (2, 4, 23).
    let polyp = h.finding_index("polyps").map_err(|e| e.to_string())?;
    let (t, c) = doc.parents["polyps"].clone();
    let cell = doc.cell_size(&t, &c);
    let weights = HierLossWeights {
        tract: (doc.tracts.len() as f64).ln(),
        category: (doc.categories.len() as f64).ln(),
        finding: (n as f64).ln(),
    };
    let per_tract = HierLoss::with_grouping(&h, CategoryGrouping::PerTract).weights(weights);
    let oracle = zero_logit_loss((weights.tract, weights.category, weights.finding), doc.tract_size(&t), cell, n);
    let got = per_tract.loss(&zeros, &per_tract.target(polyp).unwrap()).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mask = ArrayD::from_shape_fn(IxDyn(&[2, 1, 16, 16]), |_| f32::from(rng.random_bool(0.3)));
    let z = ArrayD::<f32>::zeros(IxDyn(&[2, 1, 16, 16]));
    let seg = SegLoss::default().loss(z.view(), z.view(), mask.view()).map_err(|e| e.to_string())?;
    let seg_err = (seg - 2.0 * 2f64.ln()).abs();

    let ok = cell == 8 && (got - oracle).abs() < 1e-3 && (oracle - 11.55).abs() < 5e-3 && worst < 1e-9 && seg_err < 1e-9;
    Ok((
        ok,
        format!(
            "8-member group: loss {got:.6} vs oracle {oracle:.6} (≈11.55, tol 1e-3); all 23 findings vs oracle max err {worst:.1e}; seg_loss(0) err {seg_err:.1e} (< 1e-9)"
        ),
    ))
}

fn metric_oracles() -> Outcome {
    let cm = ConfusionMatrix::from_rows(&[vec![2, 1], vec![0, 3]]);
    let m = mcc(&cm).map_err(|e| e.to_string())?;
    let mcc_err = (m - 6.0 / 72f64.sqrt()).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut f1_err = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(2..12);
        let len = rng.random_range(1..300);
        let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.random_bool(0.6) { t } else { rng.random_range(0..k) })
            .collect();
        let acc = truth.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / len as f64;
        let cm = ConfusionMatrix::from_labels(&truth, &pred, k).map_err(|e| e.to_string())?;
        f1_err = f1_err.max((f1_micro(&cm).map_err(|e| e.to_string())? - acc).abs());
    }

    let mut jf_err = 0.0f64;
    for _ in 0..100 {
        let (hgt, wid) = (rng.random_range(1..40), rng.random_range(1..40));
        let (pp, pg) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let pred = ArrayD::from_shape_fn(IxDyn(&[1, hgt, wid]), |_| f32::from(rng.random_bool(pp)));
        let gt = ArrayD::from_shape_fn(IxDyn(&[1, hgt, wid]), |_| f32::from(rng.random_bool(pg)));
        let sc = seg_scores(&pred.view(), &gt.view()).map_err(|e| e.to_string())?;
        jf_err = jf_err.max((sc.f1 - 2.0 * sc.jaccard / (1.0 + sc.jaccard)).abs());
    }
    Ok((
        mcc_err < 1e-9 && f1_err < 1e-12 && jf_err < 1e-12,
        format!("mcc err {mcc_err:.1e} (< 1e-9); f1_micro vs accuracy {f1_err:.1e} (< 1e-12); f1 vs 2j/(1+j) {jf_err:.1e} over 100 mask pairs"),
    ))
}

fn schedule() -> Outcome {
    let cfg = ScheduleConfig::for_task(Task::Classify);
    let n = cfg.epochs_per_cycle as f64;
    let at = |t: f64| lr_at(t, &cfg).map_err(|e| e.to_string());
    let e0 = (at(0.0)? - 0.01).abs();
    let en = (at(n)? - 1e-8).abs();
    let emid = (at(n / 2.0)? - (0.01 + 1e-8) / 2.0).abs();
    let grid: Vec<f64> = (0..1000).map(|i| at(n * i as f64 / 999.0)).collect::<Result<_, _>>()?;
    let monotone = grid.windows(2).all(|w| w[1] < w[0]);

    let mut restarts_ok = true;
    let mut counts = Vec::new();
    for task in [Task::Classify, Task::Segment] {
        let c = ScheduleConfig::for_task(task);
        let tr = lr_trace(&c);
        let starts: Vec<usize> = (0..tr.len()).filter(|&i| i == 0 || tr[i] > tr[i - 1]).collect();
        let expected: Vec<usize> = (0..c.cycles).map(|k| k * c.epochs_per_cycle).collect();
        restarts_ok &= starts == expected && starts.iter().all(|&i| tr[i] == c.lr_init);
        counts.push(format!("{}/{}", starts.len(), c.cycles));
    }
    let ok = e0 < 1e-15 && en < 1e-18 && emid < 1e-15 && monotone && restarts_ok;
    Ok((
        ok,
        format!(
            "endpoint errs {e0:.1e}, {en:.1e}, midpoint {emid:.1e}; strictly decreasing on 1000 points: {monotone}; cycle starts {}",
            counts.join(", ")
        ),
    ))
}

fn toy_input() -> InputSpec {
    InputSpec {
        mean: [0.5; 3],
        std: [0.25; 3],
        ..InputSpec::toy(80, 64)
    }
}

fn load_class(dir: &Path, h: &LabelHierarchy, spec: &InputSpec) -> Result<ClassificationData, String> {
    let m = load_classification_manifest(&dir.join("manifest.csv"), h).map_err(|e| e.to_string())?;
    ClassificationData::load(&m, spec, Execution::default()).map_err(|e| e.to_string())
}

fn classification_overfit() -> Outcome {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let h = LabelHierarchy::default_taxonomy();
    make_classification(tmp.path(), 230, 7, &h, 80, 64).map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::defaults(Task::Classify);
    cfg.input = toy_input();
    cfg.augment = AugmentConfig::disabled();
    cfg.schedule.epochs_per_cycle = 10;
    cfg.schedule.cycles = 1;
    cfg.schedule.lr_init = 0.003;
    let data = load_class(tmp.path(), &h, &cfg.input)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut model = cfg.model.build_classifier(h.n_find(), cfg.seed).map_err(|e| e.to_string())?;
    let state = train_classifier(
        &mut model,
        &h,
        Split { train: &data, train_idx: &idx, val: &data, val_idx: &idx },
        &cfg,
        &TrainOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let probs = predict_class_probs(std::slice::from_ref(&model), &data, &idx, false, Execution::default())
        .map_err(|e| e.to_string())?;
    let pred = hiergi::models::argmax_rows(&probs);
    let acc = pred.iter().zip(&data.labels).filter(|(a, b)| a == b).count() as f64 / data.len() as f64;
    let losses = state.losses();
    let ratio = losses[0] / losses[losses.len() - 1];
    let secs = t0.elapsed().as_secs_f64();
    Ok((
        acc >= 0.95 && ratio >= 10.0 && secs < 600.0,
        format!(
            "230 images, 23 classes, {} epochs: train accuracy {acc:.3} (>= 0.95), loss {:.3} -> {:.4} ({ratio:.1}x, >= 10x), {secs:.0}s (< 600s)",
            losses.len(),
            losses[0],
            losses[losses.len() - 1]
        ),
    ))
}

fn stacking_probe() -> Result<bool, String> {
    let probe = DoubleEncoderDecoder::new(
        ChannelProbe { in_ch: 3, channel: 1 },
        ChannelProbe { in_ch: 4, channel: 3 },
    )
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let normal = Normal::new(0.0f32, 4.0).unwrap();
    let x = Array4::from_shape_fn((2, 3, 12, 20), |_| normal.sample(&mut rng));
    let (_, stacked) = probe.stacked_input(&x).map_err(|e| e.to_string())?;
    let out = probe.forward(&x).map_err(|e| e.to_string())?;
    let rgb_kept = stacked.slice(s![.., 0..3, .., ..]) == x;
    let expected = x.slice(s![.., 1..2, .., ..]).mapv(|v| sigmoid(v as f64) as f32);
    let fourth = stacked.slice(s![.., 3..4, .., ..]) == expected;
    let routed = out.second == expected && out.first == x.slice(s![.., 1..2, .., ..]);
    Ok(rgb_kept && fourth && routed)
}

fn segmentation_run() -> Outcome {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (tr_dir, va_dir) = (tmp.path().join("train"), tmp.path().join("val"));
    make_segmentation(&tr_dir, 200, 11, 80, 64).map_err(|e| e.to_string())?;
    make_segmentation(&va_dir, 50, 12, 80, 64).map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::defaults(Task::Segment);
    cfg.input = InputSpec::toy(80, 64);
    cfg.schedule.epochs_per_cycle = 10;
    cfg.schedule.cycles = 1;
    let exec = Execution::default();
    let load = |d: &Path| -> Result<SegmentationData, String> {
        let pairs = load_segmentation_manifest(&d.join("manifest.csv")).map_err(|e| e.to_string())?;
        SegmentationData::load(&pairs, &cfg.input, exec).map_err(|e| e.to_string())
    };
    let (train, val) = (load(&tr_dir)?, load(&va_dir)?);
    let (ti, vi): (Vec<usize>, Vec<usize>) = ((0..train.len()).collect(), (0..val.len()).collect());
    let mut model = cfg.model.build_segmenter(cfg.seed).map_err(|e| e.to_string())?;
    train_segmenter(
        &mut model,
        Split { train: &train, train_idx: &ti, val: &val, val_idx: &vi },
        &cfg,
        &TrainOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let probs = predict_mask_probs(std::slice::from_ref(&model), &val, &vi, false, exec).map_err(|e| e.to_string())?;
    let masks: Vec<_> = val.masks.iter().collect();
    let report = segmentation_report(&probs, &masks, Aggregation::PerImageMean, exec).map_err(|e| e.to_string())?;
    let dice = report.f1.unwrap_or(f64::NAN);
    let probe = stacking_probe()?;
    let secs = t0.elapsed().as_secs_f64();
    Ok((
        dice >= 0.95 && probe && secs < 1200.0,
        format!("200/50 blobs, 10 epochs: held-out Dice {dice:.4} (>= 0.95); 4-channel probe exact: {probe}; {secs:.0}s (< 1200s)"),
    ))
}

fn cv_wiring() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let h = LabelHierarchy::default_taxonomy();
    let (tr_dir, te_dir, run) = (tmp.path().join("train"), tmp.path().join("test"), tmp.path().join("run"));
    make_classification(&tr_dir, 115, 3, &h, 80, 64).map_err(|e| e.to_string())?;
    make_classification(&te_dir, 46, 4, &h, 80, 64).map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::defaults(Task::Classify);
    cfg.input = toy_input();
    cfg.augment = AugmentConfig::disabled();
    cfg.model = ModelSpec::TinyCnn { width: 8 };
    cfg.schedule.epochs_per_cycle = 2;
    cfg.schedule.cycles = 1;
    cfg.schedule.lr_init = 0.003;
    let exec = Execution::default();
    let (train, test) = (load_class(&tr_dir, &h, &cfg.input)?, load_class(&te_dir, &h, &cfg.input)?);
    let opts = TrainOptions {
        run_dir: Some(run.clone()),
        ..TrainOptions::default()
    };
    let out = cv_classify(&cfg, &h, &train, Some(&test), &opts).map_err(|e| e.to_string())?;

    // Five checkpoints on disk, reloaded into fresh models.
    let mut reloaded = Vec::new();
    for f in 0..5 {
        let stem = run.join(format!("fold{f}")).join("checkpoints").join("best");
        if !Checkpoint::weights_path(&stem).is_file() || !Checkpoint::sidecar_path(&stem).is_file() {
            return Ok((false, format!("missing checkpoint for fold {f}")));
        }
        let mut m = cfg.model.build_classifier(h.n_find(), 0).map_err(|e| e.to_string())?;
        Checkpoint::load(&stem)
            .and_then(|c| c.restore_into(&mut m))
            .map_err(|e| e.to_string())?;
        reloaded.push(m);
    }
    let n_ckpt = reloaded.len();

    let mut mean_err = 0.0f64;
    for get in [|r: &hiergi::MetricReport| r.mcc, |r: &hiergi::MetricReport| r.f1_micro] {
        let vals: Vec<f64> = out.fold_reports.iter().map(|r| get(r).unwrap()).collect();
        let manual = vals.iter().sum::<f64>() / vals.len() as f64;
        mean_err = mean_err.max((get(&out.mean).unwrap() - manual).abs());
    }

    // Manual TTA + ensemble: flip, softmax, average over flips then members.
    let idx: Vec<usize> = (0..test.len()).collect();
    let (x, _) = test.batch(&idx, 0, None, exec);
    let flips = [
        x.clone(),
        x.slice(s![.., .., .., ..;-1]).to_owned(),
        x.slice(s![.., .., ..;-1, ..]).to_owned(),
        x.slice(s![.., .., ..;-1, ..;-1]).to_owned(),
    ];
    let mut oracle = Array2::<f64>::zeros((test.len(), h.n_find()));
    for m in &reloaded {
        for v in &flips {
            let logits = m.class_logits(v).map_err(|e| e.to_string())?;
            for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
                let p = softmax64(row.as_slice().unwrap());
                for (k, pk) in p.into_iter().enumerate() {
                    oracle[[i, k]] += pk / (4.0 * reloaded.len() as f64);
                }
            }
        }
    }
    let got = &out.test.as_ref().ok_or("no test outcome")?.predictions;
    let ens_err = (got - &oracle).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let ok = n_ckpt == 5 && out.states.len() == 5 && mean_err < 1e-12 && ens_err < 1e-12;
    Ok((
        ok,
        format!("{n_ckpt} checkpoints; mean vs fold mean err {mean_err:.1e} (< 1e-12); TTA ensemble vs manual oracle err {ens_err:.1e}"),
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("hierarchical-loss gradients", gradient_suite),
        ("aggregation oracle", aggregation_oracle),
        ("loss closed forms", closed_forms),
        ("metric oracles", metric_oracles),
        ("cosine warm-restart schedule", schedule),
        ("synthetic classification overfit", classification_overfit),
        ("synthetic segmentation", segmentation_run),
        ("cross-validation and ensembling", cv_wiring),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (ok, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("[{}] {} {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
        failed += usize::from(!ok);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
