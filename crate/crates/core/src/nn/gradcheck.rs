use ndarray::{Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DenseNet, Forward, Grads, Head, NnError, OutputGrad};
use crate::Scalar;

/// Scalar test losses, each averaged over the batch.
#[derive(Clone, Debug)]
pub enum LossSpec<F> {
    /// `sum_ij w_ij y_ij / B`
    Weighted(Array2<F>),
    /// `sum_ij (y_ij - t_ij)^2 / (2B)`
    SquaredError(Array2<F>),
    /// `-sum_ij t_ij ln y_ij / B`; softmax heads only.
    CrossEntropy(Array2<F>),
}

impl<F: Scalar> LossSpec<F> {
    fn target(&self) -> &Array2<F> {
        match self {
            LossSpec::Weighted(t) | LossSpec::SquaredError(t) | LossSpec::CrossEntropy(t) => t,
        }
    }

    pub fn value(&self, fwd: &Forward<F>) -> F {
        let b = F::of(fwd.batch_size() as f64);
        let y = &fwd.outputs;
        let total = match self {
            LossSpec::Weighted(w) => Zip::from(y)
                .and(w)
                .fold(F::zero(), |acc, &y, &w| acc + w * y),
            LossSpec::SquaredError(t) => {
                Zip::from(y)
                    .and(t)
                    .fold(F::zero(), |acc, &y, &t| acc + (y - t) * (y - t))
                    / F::of(2.0)
            }
            LossSpec::CrossEntropy(t) => {
                let logp = fwd.log_outputs.as_ref().unwrap_or(y);
                -Zip::from(logp)
                    .and(t)
                    .fold(F::zero(), |acc, &lp, &t| acc + t * lp)
            }
        };
        total / b
    }

    pub fn output_grad(&self, fwd: &Forward<F>) -> Array2<F> {
        let b = F::of(fwd.batch_size() as f64);
        let y = &fwd.outputs;
        match self {
            LossSpec::Weighted(w) => w.mapv(|w| w / b),
            LossSpec::SquaredError(t) => (y - t).mapv(|d| d / b),
            LossSpec::CrossEntropy(t) => Zip::from(y).and(t).map_collect(|&y, &t| -t / (y * b)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ParamKind {
    Weight { row: usize, col: usize },
    Bias { index: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParamLocation {
    pub layer: usize,
    pub kind: ParamKind,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst: Option<ParamLocation>,
    pub checked: usize,
    /// Parameters whose central difference straddled a rectifier kink.
    pub skipped_at_kinks: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Relative error with a floor on the denominator so that two values that
/// are both near zero compare by absolute difference.
fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compare [`DenseNet::backward`] with central finite differences.
pub fn grad_check<F: Scalar>(
    net: &DenseNet<F>,
    batch: ArrayView2<F>,
    loss: &LossSpec<F>,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport, NnError> {
    grad_check_with(net, batch, loss, step, tolerance, |n, f, g| {
        n.backward(f, g)
    })
}

/// As [`grad_check`], with the analytic gradient supplied by `backward`.
pub fn grad_check_with<F, B>(
    net: &DenseNet<F>,
    batch: ArrayView2<F>,
    loss: &LossSpec<F>,
    step: f64,
    tolerance: f64,
    backward: B,
) -> Result<GradCheckReport, NnError>
where
    F: Scalar,
    B: Fn(&DenseNet<F>, &Forward<F>, OutputGrad<F>) -> Result<Grads<F>, NnError>,
{
    if matches!(loss, LossSpec::CrossEntropy(_)) && matches!(net.head(), Head::Linear { .. }) {
        return Err(NnError::Shape("cross-entropy needs a softmax head".into()));
    }
    let fwd = net.forward(batch)?;
    if loss.target().dim() != fwd.outputs.dim() {
        return Err(NnError::Shape("loss target does not match outputs".into()));
    }
    let analytic = backward(net, &fwd, OutputGrad::Outputs(loss.output_grad(&fwd)))?;
    let base_pattern = fwd.relu_pattern();

    let mut probe = net.clone();
    let h = F::of(step);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
        skipped_at_kinks: 0,
        tolerance,
        pass: true,
    };

    let mut locations = Vec::new();
    for (li, layer) in net.layers().iter().enumerate() {
        let (rows, cols) = layer.weights.dim();
        for r in 0..rows {
            for c in 0..cols {
                locations.push((li, ParamKind::Weight { row: r, col: c }));
            }
        }
        for i in 0..layer.bias.len() {
            locations.push((li, ParamKind::Bias { index: i }));
        }
    }

    for (li, kind) in locations {
        let nudge = |probe: &mut DenseNet<F>, delta: F| {
            let layer = &mut probe.layers_mut()[li];
            match kind {
                ParamKind::Weight { row, col } => layer.weights[[row, col]] += delta,
                ParamKind::Bias { index } => layer.bias[index] += delta,
            }
        };
        nudge(&mut probe, h);
        let plus = probe.forward(batch)?;
        nudge(&mut probe, -h - h);
        let minus = probe.forward(batch)?;
        nudge(&mut probe, h);
        // Restore exactly; repeated +-h can drift by an ulp.
        {
            let src = &net.layers()[li];
            let dst = &mut probe.layers_mut()[li];
            match kind {
                ParamKind::Weight { row, col } => dst.weights[[row, col]] = src.weights[[row, col]],
                ParamKind::Bias { index } => dst.bias[index] = src.bias[index],
            }
        }
        if plus.relu_pattern() != base_pattern || minus.relu_pattern() != base_pattern {
            report.skipped_at_kinks += 1;
            continue;
        }
        let numeric = ((loss.value(&plus) - loss.value(&minus)) / (h + h)).as_f64();
        let g = &analytic.layers[li];
        let a = match kind {
            ParamKind::Weight { row, col } => g.weights[[row, col]],
            ParamKind::Bias { index } => g.bias[index],
        }
        .as_f64();
        let err = relative_error(a, numeric);
        report.checked += 1;
        if err > report.max_relative_error || err.is_nan() {
            report.max_relative_error = err;
            report.worst = Some(ParamLocation {
                layer: li,
                kind,
                analytic: a,
                numeric,
            });
        }
    }
    report.pass = report.max_relative_error < tolerance;
    Ok(report)
}

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Rows made of `groups` probability vectors of length `size`.
fn distribution_rows<R: Rng>(rng: &mut R, rows: usize, groups: usize, size: usize) -> Array2<f64> {
    let mut t = Array2::zeros((rows, groups * size));
    for r in 0..rows {
        for g in 0..groups {
            let w: Vec<f64> = (0..size).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = w.iter().sum();
            for (k, v) in w.iter().enumerate() {
                t[[r, g * size + k]] = v / s;
            }
        }
    }
    t
}

#[derive(Clone, Debug, Serialize)]
pub struct RandomCheckSummary {
    pub nets: usize,
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped_at_kinks: usize,
    pub failures: usize,
    pub tolerance: f64,
}

impl RandomCheckSummary {
    pub fn pass(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

/// Grad-check `count` random small f64 networks, cycling through linear,
/// categorical and policy heads.
pub fn grad_check_random(
    count: usize,
    seed: u64,
    step: f64,
    tolerance: f64,
) -> Result<RandomCheckSummary, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = RandomCheckSummary {
        nets: count,
        max_relative_error: 0.0,
        checked: 0,
        skipped_at_kinks: 0,
        failures: 0,
        tolerance,
    };
    for i in 0..count {
        let input = rng.random_range(1..=10);
        let depth = rng.random_range(0..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=12)).collect();
        let actions = rng.random_range(1..=4);
        let rows = rng.random_range(1..=8);
        let (head, loss) = match i % 3 {
            0 => {
                let outputs = rng.random_range(1..=5);
                (
                    Head::Linear { outputs },
                    LossSpec::SquaredError(random_matrix(&mut rng, rows, outputs)),
                )
            }
            1 => {
                let atoms = rng.random_range(2..=11);
                let t = distribution_rows(&mut rng, rows, actions, atoms);
                (
                    Head::Categorical { actions, atoms },
                    LossSpec::CrossEntropy(t),
                )
            }
            _ => {
                let loss = if rng.random_bool(0.5) {
                    LossSpec::Weighted(random_matrix(&mut rng, rows, actions))
                } else {
                    LossSpec::CrossEntropy(distribution_rows(&mut rng, rows, 1, actions))
                };
                (Head::Policy { actions }, loss)
            }
        };
        let net = DenseNet::<f64>::new(input, &hidden, head, &mut rng);
        let x = random_matrix(&mut rng, rows, input);
        let r = grad_check(&net, x.view(), &loss, step, tolerance)?;
        summary.checked += r.checked;
        summary.skipped_at_kinks += r.skipped_at_kinks;
        summary.max_relative_error = summary.max_relative_error.max(r.max_relative_error);
        if !r.pass {
            summary.failures += 1;
        }
    }
    Ok(summary)
}
