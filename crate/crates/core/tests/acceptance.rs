//! Acceptance suite. Each test prints one `PASS`/`FAIL` line, written straight to
//! stdout so it shows up even when the harness captures output.
//!
//! The tests share one lock: several have wall-clock budgets, and running them side
//! by side on a small machine would measure contention rather than the code.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use emodan::config::KeyValues;
use emodan::dataset::{
    generate_synthetic, remap_7_to_3, synthesize, write_dataset, EmotionLabel7, GenParams,
    LabelMap3, Sample,
};
use emodan::evalcli::gradcheck::{model_checks, op_checks};
use emodan::evalcli::{evaluate, evaluate_predictions, EvalReport, COMPARE_HEADER};
use emodan::geometry::{
    estimate_similarity, normalized_landmark_error, rasterize_heatmap, Point, Shape,
    SimilarityTransform, N_LANDMARKS,
};
use emodan::model::{batch_loss, forward_batch, init_params, LossWeights, ModelConfig, Prediction};
use emodan::train::{
    train, train_samples, Mode, Split, TrainConfig, TrainOutcome, BEST_CHECKPOINT, LAST_CHECKPOINT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

trait OrFail<T> {
    fn or_fail(self, what: &str) -> Result<T, String>;
}

impl<T, E: std::fmt::Display> OrFail<T> for Result<T, E> {
    fn or_fail(self, what: &str) -> Result<T, String> {
        self.map_err(|e| format!("{what}: {e}"))
    }
}

fn run_criterion(name: &str, body: impl FnOnce() -> Outcome) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = body();
    let secs = start.elapsed().as_secs_f64();
    let line = match &outcome {
        Ok(detail) => format!("PASS {name}: {detail} [{secs:.1}s]"),
        Err(why) => format!("FAIL {name}: {why} [{secs:.1}s]"),
    };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
    if let Err(why) = outcome {
        panic!("{name}: {why}");
    }
}

fn scratch() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

/// Every file under `root`, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, std::fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let (ta, tb) = (tree(a), tree(b));
    ensure!(
        ta.keys().eq(tb.keys()),
        "{} and {} hold different files",
        a.display(),
        b.display()
    );
    for (path, bytes) in &ta {
        ensure!(
            *bytes == tb[path],
            "{} differs between runs",
            path.display()
        );
    }
    Ok(ta.len())
}

fn same_file(a: &Path, b: &Path) -> Result<(), String> {
    let fa = std::fs::read(a).or_fail(&a.display().to_string())?;
    let fb = std::fs::read(b).or_fail(&b.display().to_string())?;
    ensure!(fa == fb, "{} and {} differ", a.display(), b.display());
    Ok(())
}

fn coarsening_holds(r: &EvalReport, context: &str) -> Result<(), String> {
    ensure!(
        r.acc3 >= r.acc7,
        "{context}: acc3 {} < acc7 {}",
        r.acc3,
        r.acc7
    );
    Ok(())
}

fn random_shape(rng: &mut ChaCha8Rng) -> Shape {
    Shape::new(
        (0..N_LANDMARKS)
            .map(|_| Point::new(rng.random_range(4.0..60.0), rng.random_range(4.0..60.0)))
            .collect(),
    )
    .expect("68 points")
}

fn random_transform(rng: &mut ChaCha8Rng) -> SimilarityTransform {
    let scale = rng.random_range(0.3..3.0);
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    SimilarityTransform::new(
        scale * angle.cos(),
        scale * angle.sin(),
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
    )
}

fn max_param_gap(a: &SimilarityTransform, b: &SimilarityTransform) -> f64 {
    a.to_affine()
        .iter()
        .zip(b.to_affine())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

#[test]
fn gradient_correctness() {
    run_criterion("gradient_correctness", || {
        let start = Instant::now();
        let one = synthesize(&GenParams {
            count: 1,
            ..GenParams::default()
        })
        .or_fail("synthesize")?;
        let sizes: BTreeMap<String, usize> =
            init_params(&ModelConfig::default(), 0, &[one[0].shape.clone()])
                .or_fail("init")?
                .tensors()
                .iter()
                .map(|(name, t)| (format!("joint loss / {name}"), t.len()))
                .collect();
        let (mut checks, mut worst_ratio, mut worst, mut worst_name) =
            (0usize, 0.0f64, 0.0f64, String::new());
        for seed in 0..5 {
            let mut results = op_checks(seed).or_fail("op checks")?;
            let models = model_checks(seed).or_fail("model checks")?;
            ensure!(
                models.len() == sizes.len(),
                "seed {seed}: {} of {} parameter tensors checked",
                models.len(),
                sizes.len()
            );
            for r in &models {
                let need = sizes[&r.name].min(20);
                ensure!(
                    r.coords >= need,
                    "seed {seed}: {} has {} coordinates, needs {need}",
                    r.name,
                    r.coords
                );
            }
            results.extend(models);
            for r in results {
                ensure!(r.coords > 0, "seed {seed}: {} checked nothing", r.name);
                ensure!(
                    r.passed(),
                    "seed {seed}: {} relative error {:.3e} >= {:.0e}",
                    r.name,
                    r.worst,
                    r.tolerance
                );
                let linear = r.tolerance <= 1e-6;
                let is_op = r.name.starts_with("op ");
                ensure!(
                    !is_op
                        || linear
                        || matches!(r.name.as_str(), "op softmax_ce" | "op landmark_error"),
                    "{} is not held to the linear tolerance",
                    r.name
                );
                if r.worst / r.tolerance > worst_ratio {
                    worst_ratio = r.worst / r.tolerance;
                    worst = r.worst;
                    worst_name = r.name.clone();
                }
                checks += 1;
            }
        }
        let secs = start.elapsed().as_secs_f64();
        ensure!(secs < 120.0, "took {secs:.1}s, budget 120s");
        Ok(format!(
            "{checks} checks over 5 seeds, worst relative error {worst:.3e} ({worst_name})"
        ))
    });
}

#[test]
fn geometry_suite() {
    run_criterion("geometry_suite", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut fit_residual = 0.0f64;
        let mut law_gap = 0.0f64;
        for _ in 0..100 {
            let t = random_transform(&mut rng);
            let src = random_shape(&mut rng);
            let dst = t.apply_shape(&src);
            let fit = estimate_similarity(src.points(), dst.points()).or_fail("fit")?;
            fit_residual = fit_residual.max(max_param_gap(&fit, &t));
            for (p, q) in src.points().iter().zip(dst.points()) {
                fit_residual = fit_residual.max(fit.apply(*p).dist(*q));
            }

            let (u, v) = (random_transform(&mut rng), random_transform(&mut rng));
            let inv = t.invert().or_fail("invert")?;
            law_gap = law_gap
                .max(max_param_gap(
                    &t.compose(&SimilarityTransform::IDENTITY),
                    &t,
                ))
                .max(max_param_gap(
                    &SimilarityTransform::IDENTITY.compose(&t),
                    &t,
                ))
                .max(max_param_gap(
                    &t.compose(&inv),
                    &SimilarityTransform::IDENTITY,
                ))
                .max(max_param_gap(
                    &inv.compose(&t),
                    &SimilarityTransform::IDENTITY,
                ))
                .max(max_param_gap(
                    &t.compose(&u).compose(&v),
                    &t.compose(&u.compose(&v)),
                ));
            let p = Point::new(rng.random_range(-20.0..80.0), rng.random_range(-20.0..80.0));
            law_gap = law_gap.max(t.compose(&u).apply(p).dist(t.apply(u.apply(p))));
        }
        ensure!(fit_residual < 1e-9, "exact-fit residual {fit_residual:.3e}");
        ensure!(law_gap < 1e-9, "group law gap {law_gap:.3e}");

        let mut nme_gap = 0.0f64;
        for _ in 0..100 {
            let gt = random_shape(&mut rng);
            let pred = gt.map(|p| {
                Point::new(
                    p.x + rng.random_range(-3.0..3.0),
                    p.y + rng.random_range(-3.0..3.0),
                )
            });
            let t = random_transform(&mut rng);
            let base = normalized_landmark_error(&pred, &gt).or_fail("nme")?;
            let moved = normalized_landmark_error(&t.apply_shape(&pred), &t.apply_shape(&gt))
                .or_fail("nme")?;
            // Oracle: mean point distance over the distance between eye-ring centroids.
            let eye = |s: &Shape, r: std::ops::Range<usize>| {
                let n = r.len() as f64;
                let (x, y) = r.fold((0.0, 0.0), |(x, y), i| {
                    (x + s.points()[i].x, y + s.points()[i].y)
                });
                Point::new(x / n, y / n)
            };
            let d = eye(&gt, 36..42).dist(eye(&gt, 42..48));
            let mean: f64 = pred
                .points()
                .iter()
                .zip(gt.points())
                .map(|(a, b)| a.dist(*b))
                .sum::<f64>()
                / 68.0;
            nme_gap = nme_gap
                .max((base - moved).abs())
                .max((base - mean / d).abs());
        }
        ensure!(nme_gap < 1e-9, "nme invariance gap {nme_gap:.3e}");

        let mut heat_checks = 0usize;
        for trial in 0..20 {
            let mut shape = random_shape(&mut rng);
            if trial % 2 == 0 {
                shape = shape.map(|p| Point::new(p.x.round(), p.y.round()));
            }
            let sigma = rng.random_range(0.8..4.0);
            let h = rasterize_heatmap(shape.points(), 64, 64, sigma).or_fail("heatmap")?;
            let mut by_distance: Vec<(f64, f64)> = Vec::with_capacity(64 * 64);
            for y in 0..64 {
                for x in 0..64 {
                    let v = h.get(x, y);
                    ensure!((0.0..=1.0).contains(&v), "heatmap value {v} outside [0, 1]");
                    let pix = Point::new(x as f64, y as f64);
                    let d2 = shape
                        .points()
                        .iter()
                        .map(|s| pix.dist2(*s))
                        .fold(f64::INFINITY, f64::min);
                    let expect = (-d2 / (2.0 * sigma * sigma)).exp();
                    ensure!(
                        (v - expect).abs() < 1e-12,
                        "heatmap ({x},{y}) {v} vs {expect}"
                    );
                    by_distance.push((d2, v));
                    heat_checks += 1;
                }
            }
            if trial % 2 == 0 {
                for p in shape.points() {
                    let v = h.get(p.x as usize, p.y as usize);
                    ensure!(v == 1.0, "peak at landmark ({}, {}) is {v}", p.x, p.y);
                }
            }
            by_distance.sort_by(|a, b| a.0.total_cmp(&b.0));
            ensure!(
                by_distance.windows(2).all(|w| w[1].1 <= w[0].1),
                "heatmap is not monotone in distance to the nearest landmark"
            );
        }

        let secs = start.elapsed().as_secs_f64();
        ensure!(secs < 30.0, "took {secs:.1}s, budget 30s");
        Ok(format!(
            "fit residual {fit_residual:.1e}, group laws {law_gap:.1e}, nme invariance {nme_gap:.1e} over 100 trials, \
             {heat_checks} heatmap pixels"
        ))
    });
}

#[test]
fn loss_decomposition() {
    run_criterion("loss_decomposition", || {
        let default = TrainConfig::default();
        ensure!(
            (default.model.alpha, default.model.beta) == (0.4, 0.6),
            "built-in weights are {} / {}",
            default.model.alpha,
            default.model.beta
        );
        let bare = TrainConfig::from_kv(&KeyValues::default()).or_fail("empty config")?;
        ensure!(
            (bare.model.alpha, bare.model.beta) == (0.4, 0.6),
            "config without keys changes the weights"
        );
        let shipped =
            TrainConfig::load(&workspace_file("configs/train.cfg")).or_fail("configs/train.cfg")?;
        ensure!(
            (shipped.model.alpha, shipped.model.beta) == (0.4, 0.6),
            "shipped config uses {} / {}",
            shipped.model.alpha,
            shipped.model.beta
        );
        ensure!(
            shipped.digest() == default.digest(),
            "shipped config differs from the defaults"
        );

        let samples = synthesize(&GenParams {
            seed: 5,
            count: 24,
            ..GenParams::default()
        })
        .or_fail("synthesize")?;
        let images: Vec<_> = samples.iter().map(Sample::image).collect();
        let shapes: Vec<Shape> = samples.iter().map(|s| s.shape.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst = 0.0f64;
        let mut cases = 0;
        for seed in 0..4u64 {
            let params = init_params(&ModelConfig::default(), seed, &shapes).or_fail("init")?;
            for chunk in (0..samples.len()).collect::<Vec<_>>().chunks(6) {
                let refs: Vec<_> = chunk.iter().map(|&i| &images[i]).collect();
                let shapes: Vec<&Shape> = chunk.iter().map(|&i| &samples[i].shape).collect();
                let labels: Vec<EmotionLabel7> = chunk.iter().map(|&i| samples[i].label).collect();
                let weights = LossWeights {
                    alpha: rng.random_range(0.01..2.0),
                    beta: rng.random_range(0.01..2.0),
                };
                for w in [
                    LossWeights {
                        alpha: 0.4,
                        beta: 0.6,
                    },
                    weights,
                ] {
                    let mut pass = forward_batch(&params, &refs, 2, None).or_fail("forward")?;
                    let loss = batch_loss(&mut pass, &shapes, &labels, w).or_fail("loss")?;
                    let b = loss.breakdown;
                    let recorded = pass.graph.value(loss.total).item();

                    // Independent terms: per-sample NME and log-sum-exp cross-entropy.
                    let (mut nme, mut ce) = (0.0, 0.0);
                    for (k, &i) in chunk.iter().enumerate() {
                        nme += normalized_landmark_error(&pass.shape_of(1, k), &samples[i].shape)
                            .or_fail("nme")?;
                        let z = pass.logits_of(k).ok_or("no logits")?;
                        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                        ce += lse - z[samples[i].label.index()];
                    }
                    let n = chunk.len() as f64;
                    let (nme, ce) = (nme / n, ce / n);
                    let gaps = [
                        (b.total - (w.alpha * b.landmark_term + w.beta * b.emotion_term)).abs(),
                        (recorded - b.total).abs(),
                        (b.landmark_term - nme).abs(),
                        (b.emotion_term - ce).abs(),
                        (b.total - (w.alpha * nme + w.beta * ce)).abs(),
                    ];
                    worst = gaps.iter().cloned().fold(worst, f64::max);

                    let doubled = LossWeights {
                        alpha: 2.0 * w.alpha,
                        beta: 2.0 * w.beta,
                    };
                    let mut pass2 = forward_batch(&params, &refs, 2, None).or_fail("forward")?;
                    let loss2 =
                        batch_loss(&mut pass2, &shapes, &labels, doubled).or_fail("loss")?;
                    ensure!(
                        loss2.breakdown.total == 2.0 * b.total,
                        "doubling the weights gives {} instead of {}",
                        loss2.breakdown.total,
                        2.0 * b.total
                    );
                    cases += 1;
                }
            }
        }
        ensure!(worst < 1e-12, "decomposition gap {worst:.3e}");
        Ok(format!(
            "shipped weights 0.4/0.6, {cases} batches decompose within {worst:.1e}, doubling exact"
        ))
    });
}

fn overfit_config(dir: &Path) -> TrainConfig {
    TrainConfig {
        mode: Mode::Joint,
        epochs_a: 50,
        epochs_b: 250,
        batch_size: 8,
        seed: 0,
        patience: 300,
        val_fraction: 0.0,
        dataset: dir.join("data"),
        checkpoint_dir: dir.join("run"),
        log_file: dir.join("run").join("log.csv"),
        ..TrainConfig::default()
    }
}

#[test]
fn overfit_certificate() {
    run_criterion("overfit_certificate", || {
        let start = Instant::now();
        let dir = scratch();
        let samples = synthesize(&GenParams {
            seed: 0,
            count: 32,
            ..GenParams::default()
        })
        .or_fail("synthesize")?;
        let config = overfit_config(dir.path());
        write_dataset(&config.dataset, &samples).or_fail("write dataset")?;
        ensure!(config.total_epochs() <= 300, "budget exceeds 300 epochs");
        let outcome = train(&config).or_fail("train")?;

        let (report, _) = evaluate(
            &config.checkpoint_dir.join(LAST_CHECKPOINT),
            &config.dataset,
            LabelMap3::default(),
        )
        .or_fail("evaluate")?;
        coarsening_holds(&report, "overfit evaluation")?;
        ensure!(report.n == 32, "evaluated {} samples", report.n);
        ensure!(report.acc7 == 1.0, "train acc7 {}", report.acc7);
        ensure!(report.nme < 0.05, "train nme {:.4}", report.nme);

        let val: Vec<f64> = outcome
            .log
            .iter()
            .filter(|r| r.split == Split::Val)
            .map(|r| r.total)
            .collect();
        let best = outcome.best.best_val.ok_or("no best validation total")?;
        ensure!(
            best <= val[0],
            "best validation total {best} above epoch 1's {}",
            val[0]
        );

        // Same seed, same trajectory: a second run cut short reproduces the log prefix.
        let rerun = TrainConfig {
            checkpoint_dir: dir.path().join("rerun"),
            log_file: dir.path().join("rerun").join("log.csv"),
            stop_after_epoch: Some(20),
            ..config.clone()
        };
        let short = train(&rerun).or_fail("rerun")?;
        ensure!(
            short.log == outcome.log[..short.log.len()],
            "rerun diverges within the first 20 epochs"
        );
        let full_log = std::fs::read_to_string(&config.log_file).or_fail("log")?;
        let short_log = std::fs::read_to_string(&rerun.log_file).or_fail("log")?;
        ensure!(
            full_log.starts_with(&short_log),
            "rerun log is not a byte prefix of the full log"
        );

        let secs = start.elapsed().as_secs_f64();
        ensure!(secs < 600.0, "took {secs:.1}s, budget 600s");
        Ok(format!(
            "after {} epochs: acc7 {:.3}, nme {:.4}, acc3 {:.3}; rerun prefix identical",
            outcome.last.epoch, report.acc7, report.nme, report.acc3
        ))
    });
}

#[test]
fn synthetic_end_to_end() {
    run_criterion("synthetic_end_to_end", || {
        let start = Instant::now();
        let dir = scratch();
        let root = dir.path();
        let all = synthesize(&GenParams {
            seed: 0,
            count: 8000,
            ..GenParams::default()
        })
        .or_fail("synthesize")?;
        let (train_part, test_part) = all.split_at(7000);
        write_dataset(&root.join("train"), train_part).or_fail("write train")?;
        write_dataset(&root.join("test"), test_part).or_fail("write test")?;

        let budget = |mode: Mode| TrainConfig {
            mode,
            epochs_a: 1,
            epochs_b: 2,
            batch_size: 32,
            seed: 0,
            val_fraction: 0.05,
            dataset: root.join("train"),
            checkpoint_dir: root.join(mode.name()),
            log_file: root.join(mode.name()).join("log.csv"),
            ..TrainConfig::default()
        };
        let mut reports = Vec::new();
        for mode in [Mode::Joint, Mode::EmotionOnly] {
            let config = budget(mode);
            let outcome: TrainOutcome = train(&config).or_fail(mode.name())?;
            for row in &outcome.log {
                if let (Some(a7), Some(a3)) = (row.acc7, row.acc3) {
                    ensure!(
                        a3 >= a7,
                        "{mode} epoch {} log: acc3 {a3} < acc7 {a7}",
                        row.epoch
                    );
                }
            }
            let (report, records) = evaluate(
                &config.checkpoint_dir.join(BEST_CHECKPOINT),
                &root.join("test"),
                LabelMap3::default(),
            )
            .or_fail("evaluate")?;
            coarsening_holds(&report, mode.name())?;
            let out = root.join("reports").join(mode.name());
            report.write(&records, &out).or_fail("write report")?;
            reports.push((out, report));
        }
        let (joint, ablation) = (&reports[0].1, &reports[1].1);

        let cmp_dir = root.join("compare");
        let args: Vec<std::ffi::OsString> = vec![
            "emodan".into(),
            "compare".into(),
            reports[0].0.clone().into(),
            reports[1].0.clone().into(),
            "--out".into(),
            cmp_dir.clone().into(),
        ];
        ensure!(emodan::evalcli::cli::run(args) == 0, "compare failed");
        let csv = std::fs::read_to_string(cmp_dir.join("compare.csv")).or_fail("compare.csv")?;
        let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
        ensure!(rows.len() == 4, "compare.csv has {} lines", rows.len());
        ensure!(
            csv.lines().next() == Some(COMPARE_HEADER),
            "compare.csv header"
        );
        ensure!(
            rows.iter().all(|r| r.len() == rows[0].len()),
            "compare.csv rows differ in width"
        );
        ensure!(
            rows[1][0] == "joint" && rows[2][0] == "emotion_only" && rows[3][0] == "delta",
            "compare.csv row labels"
        );
        for r in &rows[1..] {
            for cell in &r[4..] {
                cell.parse::<f64>().or_fail("compare.csv cell")?;
            }
        }
        let text = std::fs::read_to_string(cmp_dir.join("compare.txt")).or_fail("compare.txt")?;
        ensure!(
            text.lines().count() == 5,
            "compare.txt has {} lines",
            text.lines().count()
        );

        ensure!(
            joint.nme < ablation.nme,
            "joint nme {:.4} does not beat emotion_only {:.4}",
            joint.nme,
            ablation.nme
        );
        ensure!(
            joint.acc7 >= 3.0 / 7.0,
            "joint acc7 {:.4} below 3/7",
            joint.acc7
        );

        let secs = start.elapsed().as_secs_f64();
        ensure!(secs < 7200.0, "took {secs:.1}s, budget 7200s");
        Ok(format!(
            "test nme joint {:.4} vs emotion_only {:.4}; acc7 joint {:.4} vs {:.4} (delta {:+.4}); acc3 {:.4} vs {:.4}",
            joint.nme,
            ablation.nme,
            joint.acc7,
            ablation.acc7,
            joint.acc7 - ablation.acc7,
            joint.acc3,
            ablation.acc3
        ))
    });
}

#[test]
fn coarsening_inequality() {
    run_criterion("coarsening_inequality", || {
        let dir = scratch();
        let data = dir.path().join("data");
        let samples = generate_synthetic(
            &GenParams {
                seed: 3,
                count: 96,
                ..GenParams::default()
            },
            &data,
        )
        .or_fail("gen")?;
        let mut evaluations = 0usize;

        // Trained checkpoints, including their per-epoch metric rows.
        let config = TrainConfig {
            epochs_a: 1,
            epochs_b: 3,
            batch_size: 16,
            val_fraction: 0.25,
            dataset: data.clone(),
            checkpoint_dir: dir.path().join("run"),
            log_file: dir.path().join("run").join("log.csv"),
            ..TrainConfig::default()
        };
        let outcome = train_samples(&config, samples.clone(), &mut |_| {}).or_fail("train")?;
        for row in &outcome.log {
            if let (Some(a7), Some(a3)) = (row.acc7, row.acc3) {
                ensure!(
                    a3 >= a7,
                    "epoch {} {:?}: acc3 {a3} < acc7 {a7}",
                    row.epoch,
                    row.split
                );
                evaluations += 1;
            }
        }
        for ckpt in [LAST_CHECKPOINT, BEST_CHECKPOINT] {
            for map in [LabelMap3::SurprisedPositive, LabelMap3::SurprisedNegative] {
                let (r, _) =
                    evaluate(&config.checkpoint_dir.join(ckpt), &data, map).or_fail("evaluate")?;
                coarsening_holds(&r, ckpt)?;
                evaluations += 1;
            }
        }

        // Arbitrary predictors: the 3-class hit set contains the 7-class one.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..500 {
            let bias = rng.random_range(0..7);
            let preds: Vec<Prediction> = samples
                .iter()
                .map(|s| {
                    let k = if rng.random_bool(0.3) {
                        s.label.index()
                    } else {
                        (bias + rng.random_range(0..2)) % 7
                    };
                    let mut probs = vec![0.0; 7];
                    probs[k] = 1.0;
                    Prediction {
                        shape: s.shape.clone(),
                        label: EmotionLabel7::from_index(k).expect("class index"),
                        probs,
                    }
                })
                .collect();
            let map = if trial % 2 == 0 {
                LabelMap3::SurprisedPositive
            } else {
                LabelMap3::SurprisedNegative
            };
            let (r, _) =
                evaluate_predictions("random", &samples, &preds, map, "none").or_fail("score")?;
            coarsening_holds(&r, &format!("random predictor {trial}"))?;
            if map == LabelMap3::SurprisedPositive {
                let hits3 = samples
                    .iter()
                    .zip(&preds)
                    .filter(|(s, p)| remap_7_to_3(s.label) == remap_7_to_3(p.label))
                    .count();
                ensure!(
                    r.acc3 == hits3 as f64 / 96.0,
                    "acc3 disagrees with the direct count"
                );
            }
            evaluations += 1;
        }
        Ok(format!("acc3 >= acc7 on {evaluations} evaluations"))
    });
}

fn small_run(dir: &Path, data: &Path) -> TrainConfig {
    TrainConfig {
        epochs_a: 2,
        epochs_b: 3,
        batch_size: 8,
        seed: 7,
        patience: 5,
        val_fraction: 0.25,
        dataset: data.to_path_buf(),
        checkpoint_dir: dir.to_path_buf(),
        log_file: dir.join("log.csv"),
        ..TrainConfig::default()
    }
}

#[test]
fn determinism_and_resume() {
    run_criterion("determinism_and_resume", || {
        let dir = scratch();
        let root = dir.path();
        let params = GenParams {
            seed: 4,
            count: 40,
            ..GenParams::default()
        };
        generate_synthetic(&params, &root.join("data_a")).or_fail("gen")?;
        generate_synthetic(&params, &root.join("data_b")).or_fail("gen")?;
        let files = same_tree(&root.join("data_a"), &root.join("data_b"))?;
        let data = root.join("data_a");

        let a = small_run(&root.join("run_a"), &data);
        let b = small_run(&root.join("run_b"), &root.join("data_b"));
        train(&a).or_fail("train a")?;
        train(&b).or_fail("train b")?;
        for name in ["log.csv", LAST_CHECKPOINT, BEST_CHECKPOINT] {
            same_file(&a.checkpoint_dir.join(name), &b.checkpoint_dir.join(name))?;
        }
        for (run, out) in [(&a, "report_a"), (&b, "report_b")] {
            let (r, records) = evaluate(
                &run.checkpoint_dir.join(LAST_CHECKPOINT),
                &data,
                LabelMap3::default(),
            )
            .or_fail("evaluate")?;
            coarsening_holds(&r, out)?;
            r.write(&records, &root.join(out)).or_fail("write report")?;
        }
        let report_files = same_tree(&root.join("report_a"), &root.join("report_b"))?;

        // Interrupted at the phase boundary and again mid-phase, then finished.
        let c = small_run(&root.join("run_c"), &data);
        train(&TrainConfig {
            stop_after_epoch: Some(2),
            ..c.clone()
        })
        .or_fail("first leg")?;
        let resume = Some(c.checkpoint_dir.join(LAST_CHECKPOINT));
        train(&TrainConfig {
            stop_after_epoch: Some(4),
            resume: resume.clone(),
            ..c.clone()
        })
        .or_fail("second leg")?;
        train(&TrainConfig {
            resume,
            ..c.clone()
        })
        .or_fail("third leg")?;
        for name in ["log.csv", LAST_CHECKPOINT, BEST_CHECKPOINT] {
            same_file(&a.checkpoint_dir.join(name), &c.checkpoint_dir.join(name))?;
        }
        Ok(format!(
            "dataset ({files} files), log, checkpoints and report ({report_files} files) byte-identical; \
             resume after epochs 2 and 4 matches the straight run"
        ))
    });
}
