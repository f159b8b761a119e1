//! Finite-difference verification of every differentiable operation and of the full
//! joint loss, shared by the `gradcheck` command and the test suites.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{synthesize, GenParams};
use crate::geometry::{GrayImage, Shape};
use crate::model::{batch_loss, forward_batch, init_params, LossWeights, ModelConfig, ModelParams};
use crate::numgrad::{grad_check_coords, relative_error, Graph, Tensor, Var};
use crate::Result;

/// Tolerance for operations that are linear (or piecewise linear away from kinks) in
/// the probed input.
pub const LINEAR_TOLERANCE: f64 = 1e-6;
pub const NONLINEAR_TOLERANCE: f64 = 1e-4;
/// Coordinates probed per tensor; tensors with fewer are probed exhaustively.
pub const COORDS_PER_TENSOR: usize = 20;

const LINEAR_STEP: f64 = 1e-3;
const NONLINEAR_STEP: f64 = 1e-5;
/// Central-difference steps for model parameters, largest first. The largest keeps
/// rounding noise far below the smallest gradients; smaller ones are tried only when
/// a larger step would cross a ReLU or pooling switch.
const MODEL_STEPS: [f64; 6] = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
/// Coordinates tried per model tensor before giving up on finding smooth ones.
const MAX_CANDIDATES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Largest relative error over every seed and probed coordinate.
    pub worst: f64,
    pub tolerance: f64,
    pub coords: usize,
    /// Probes discarded because they straddled a ReLU or pooling switch.
    pub skipped: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

/// Runs every check for seeds `base_seed .. base_seed + n_seeds` and merges the
/// results per check, keeping the worst error.
pub fn run_suite(base_seed: u64, n_seeds: usize) -> Result<Vec<CheckResult>> {
    let mut merged: Vec<CheckResult> = Vec::new();
    for seed in base_seed..base_seed + n_seeds as u64 {
        let mut results = op_checks(seed)?;
        results.extend(model_checks(seed)?);
        for r in results {
            match merged.iter_mut().find(|m| m.name == r.name) {
                Some(m) => {
                    m.worst = m.worst.max(r.worst);
                    m.coords += r.coords;
                    m.skipped += r.skipped;
                }
                None => merged.push(r),
            }
        }
    }
    Ok(merged)
}

fn normal(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let values = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::new(shape, values).expect("consistent shape")
}

/// Normal values pushed at least `gap` away from zero.
fn off_zero(rng: &mut ChaCha8Rng, shape: Vec<usize>, gap: f64) -> Tensor {
    let mut t = normal(rng, shape);
    for v in t.values_mut() {
        *v += gap.copysign(*v);
    }
    t
}

/// A shuffled ladder of distinct values, so no 2x2 window has a near tie.
fn ladder(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.5).collect();
    values.shuffle(rng);
    Tensor::new(shape, values).expect("consistent shape")
}

fn coords(rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    if len <= COORDS_PER_TENSOR {
        (0..len).collect()
    } else {
        let mut c = sample(rng, len, COORDS_PER_TENSOR).into_vec();
        c.sort_unstable();
        c
    }
}

/// Reduces `y` to a scalar through a fixed random projection.
fn project(g: &mut Graph, y: Var, weights: &Tensor) -> Result<Var> {
    let r = g.constant(weights.clone());
    let prod = g.mul(y, r)?;
    Ok(g.sum(prod))
}

type Body = Box<dyn Fn(&mut Graph, Var) -> Result<Var>>;

struct OpCase {
    name: &'static str,
    input: Tensor,
    tolerance: f64,
    step: f64,
    body: Body,
}

/// Every tape operation, checked against its own random projection for one seed.
pub fn op_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<OpCase> = Vec::new();
    let linear = |name, input, body: Body| OpCase {
        name,
        input,
        tolerance: LINEAR_TOLERANCE,
        step: LINEAR_STEP,
        body,
    };

    // dense: [3, 5] x [5, 4] + [4]
    let (x, w, b) = (
        normal(&mut rng, vec![3, 5]),
        normal(&mut rng, vec![5, 4]),
        normal(&mut rng, vec![4]),
    );
    let proj = normal(&mut rng, vec![3, 4]);
    for (which, input) in [("dense.x", &x), ("dense.w", &w), ("dense.b", &b)] {
        let (x, w, b, proj) = (x.clone(), w.clone(), b.clone(), proj.clone());
        let body: Body = Box::new(move |g, v| {
            let args = match which {
                "dense.x" => (v, g.constant(w.clone()), g.constant(b.clone())),
                "dense.w" => (g.constant(x.clone()), v, g.constant(b.clone())),
                _ => (g.constant(x.clone()), g.constant(w.clone()), v),
            };
            let y = g.dense(args.0, args.1, args.2)?;
            project(g, y, &proj)
        });
        cases.push(linear(which, input.clone(), body));
    }

    // conv2d: [2, 2, 6, 5] with [3, 2, 3, 3] kernels
    let (x, k, b) = (
        normal(&mut rng, vec![2, 2, 6, 5]),
        normal(&mut rng, vec![3, 2, 3, 3]),
        normal(&mut rng, vec![3]),
    );
    let proj = normal(&mut rng, vec![2, 3, 6, 5]);
    for (which, input) in [("conv2d.x", &x), ("conv2d.k", &k), ("conv2d.b", &b)] {
        let (x, k, b, proj) = (x.clone(), k.clone(), b.clone(), proj.clone());
        let body: Body = Box::new(move |g, v| {
            let args = match which {
                "conv2d.x" => (v, g.constant(k.clone()), g.constant(b.clone())),
                "conv2d.k" => (g.constant(x.clone()), v, g.constant(b.clone())),
                _ => (g.constant(x.clone()), g.constant(k.clone()), v),
            };
            let y = g.conv2d(args.0, args.1, args.2)?;
            project(g, y, &proj)
        });
        cases.push(linear(which, input.clone(), body));
    }

    let proj = normal(&mut rng, vec![2, 3, 2, 3]);
    cases.push(linear(
        "maxpool2",
        ladder(&mut rng, vec![2, 3, 4, 6]),
        Box::new(move |g, v| {
            let y = g.maxpool2(v)?;
            project(g, y, &proj)
        }),
    ));

    let proj = normal(&mut rng, vec![4, 6]);
    cases.push(linear(
        "relu",
        off_zero(&mut rng, vec![4, 6], 0.05),
        Box::new(move |g, v| {
            let y = g.relu(v);
            project(g, y, &proj)
        }),
    ));

    let proj = normal(&mut rng, vec![6, 4]);
    cases.push(linear(
        "reshape",
        normal(&mut rng, vec![4, 6]),
        Box::new(move |g, v| {
            let y = g.reshape(v, vec![6, 4])?;
            project(g, y, &proj)
        }),
    ));

    let (other, proj) = (normal(&mut rng, vec![3, 4]), normal(&mut rng, vec![3, 4]));
    cases.push(linear(
        "add",
        normal(&mut rng, vec![3, 4]),
        Box::new(move |g, v| {
            let o = g.constant(other.clone());
            let y = g.add(v, o)?;
            project(g, y, &proj)
        }),
    ));

    let other = normal(&mut rng, vec![3, 4]);
    cases.push(linear(
        "mul",
        normal(&mut rng, vec![3, 4]),
        Box::new(move |g, v| {
            let o = g.constant(other.clone());
            let y = g.mul(v, o)?;
            Ok(g.sum(y))
        }),
    ));

    let proj = normal(&mut rng, vec![5]);
    cases.push(linear(
        "scale",
        normal(&mut rng, vec![5]),
        Box::new(move |g, v| {
            let y = g.scale(v, -1.7);
            project(g, y, &proj)
        }),
    ));

    let maps: Vec<[f64; 6]> = (0..2)
        .map(|_| std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let proj = normal(&mut rng, vec![2, 8]);
    cases.push(linear(
        "affine_rows",
        normal(&mut rng, vec![2, 8]),
        Box::new(move |g, v| {
            let y = g.affine_rows(v, maps.clone())?;
            project(g, y, &proj)
        }),
    ));

    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..7)).collect();
    cases.push(OpCase {
        name: "softmax_ce",
        input: normal(&mut rng, vec![4, 7]),
        tolerance: NONLINEAR_TOLERANCE,
        step: NONLINEAR_STEP,
        body: Box::new(move |g, v| g.softmax_ce(v, &labels)),
    });

    let target: Vec<f64> = (0..2 * 10).map(|_| rng.random_range(0.0..64.0)).collect();
    let norms = vec![rng.random_range(5.0..20.0), rng.random_range(5.0..20.0)];
    cases.push(OpCase {
        name: "landmark_error",
        input: Tensor::new(
            vec![2, 10],
            target
                .iter()
                .map(|t| t + rng.random_range(-3.0..3.0))
                .collect(),
        )?,
        tolerance: NONLINEAR_TOLERANCE,
        step: NONLINEAR_STEP,
        body: Box::new(move |g, v| g.landmark_error(v, &target, &norms)),
    });

    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        let c = coords(&mut rng, case.input.len());
        let worst = grad_check_coords(&case.body, &case.input, case.step, &c)?;
        out.push(CheckResult {
            name: format!("op {}", case.name),
            worst,
            tolerance: case.tolerance,
            coords: c.len(),
            skipped: 0,
        });
    }
    Ok(out)
}

/// Joint loss of the default two-stage model on a small synthetic batch, checked for
/// every parameter tensor.
///
/// Stage bridges are recorded once and held fixed while probing, matching the
/// stop-gradient they receive in training. Biases are randomised so that the empty
/// image background does not sit exactly on ReLU kinks, and probes whose two
/// evaluations switch any ReLU or pooling branch are discarded.
pub fn model_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6465_6c00);
    let samples = synthesize(&GenParams {
        count: 2,
        seed,
        ..GenParams::default()
    })?;
    let shapes: Vec<Shape> = samples.iter().map(|s| s.shape.clone()).collect();
    let mut params = init_params(&ModelConfig::default(), seed, &shapes)?;
    for (name, t) in params.tensors_mut() {
        if name.ends_with(".b") {
            for v in t.values_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    let images: Vec<GrayImage> = samples.iter().map(|s| s.image()).collect();
    let refs: Vec<&GrayImage> = images.iter().collect();
    let shape_refs: Vec<&Shape> = shapes.iter().collect();
    let labels: Vec<_> = samples.iter().map(|s| s.label).collect();
    let weights = LossWeights::of(&params.config);
    let stages = params.config.n_stages;

    let mut pass = forward_batch(&params, &refs, stages, None)?;
    let loss = batch_loss(&mut pass, &shape_refs, &labels, weights)?;
    pass.graph.backward(loss.total)?;
    let bridges = pass.bridges.clone();

    let base_pattern = pass.graph.branch_pattern();
    let eval = |p: &ModelParams| -> Result<(f64, bool)> {
        let mut pass = forward_batch(p, &refs, stages, Some(&bridges))?;
        let total = batch_loss(&mut pass, &shape_refs, &labels, weights)?
            .breakdown
            .total;
        Ok((total, pass.graph.branch_pattern() == base_pattern))
    };

    let mut out = Vec::new();
    for i in 0..params.tensors().len() {
        let name = params.tensors()[i].0.clone();
        let len = params.tensors()[i].1.len();
        let analytic = match pass.param_vars[i].and_then(|v| pass.graph.grad(v)) {
            Some(g) => g.to_vec(),
            None => vec![0.0; len],
        };
        let wanted = COORDS_PER_TENSOR.min(len);
        let candidates = sample(&mut rng, len, len.min(MAX_CANDIDATES)).into_vec();
        let (mut worst, mut used, mut skipped) = (0.0f64, 0, 0);
        for k in candidates {
            if used == wanted {
                break;
            }
            let orig = params.tensors()[i].1.values()[k];
            let mut numeric = None;
            for &step in &MODEL_STEPS {
                params.tensors_mut()[i].1.values_mut()[k] = orig + step;
                let (plus, same_plus) = eval(&params)?;
                params.tensors_mut()[i].1.values_mut()[k] = orig - step;
                let (minus, same_minus) = eval(&params)?;
                params.tensors_mut()[i].1.values_mut()[k] = orig;
                if same_plus && same_minus {
                    numeric = Some((plus - minus) / (2.0 * step));
                    break;
                }
            }
            // A probe that crosses a ReLU or pooling switch at every step measures the
            // kink, not the derivative; it is replaced by another coordinate.
            let Some(numeric) = numeric else {
                skipped += 1;
                continue;
            };
            worst = worst.max(relative_error(analytic[k], numeric));
            used += 1;
        }
        out.push(CheckResult {
            name: format!("joint loss / {name}"),
            // Too few smooth coordinates is a failure, not a pass.
            worst: if used < wanted { f64::INFINITY } else { worst },
            tolerance: NONLINEAR_TOLERANCE,
            coords: used,
            skipped,
        });
    }
    Ok(out)
}

/// Plain-text table of results, one line per check.
pub fn format_results(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        s.push_str(&format!(
            "{:<width$}  worst {:.3e}  tol {:.0e}  coords {:>4}  skipped {:>3}  {}\n",
            r.name,
            r.worst,
            r.tolerance,
            r.coords,
            r.skipped,
            if r.passed() { "ok" } else { "FAIL" }
        ));
    }
    s
}
