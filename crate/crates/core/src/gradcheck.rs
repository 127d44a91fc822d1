//! Central-difference verification of tape gradients (64-bit).

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;

/// Threshold on the relative error used by the gradient suite.
pub const TOLERANCE: f64 = 1e-4;

/// A computation `leaves -> scalar loss` recorded on a fresh tape.
pub type Computation<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// Probed coordinates left out because the stencil straddles a point
    /// where the computation is not differentiable.
    pub skipped: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    /// Below tolerance, with at least one coordinate actually compared.
    pub fn passed(&self) -> bool {
        self.coordinates > 0 && self.max_rel_error < self.tolerance
    }
}

/// Which coordinates of each leaf to probe: all of them, or a seeded
/// sample of at most `n` per leaf.
#[derive(Clone, Copy, Debug)]
pub enum Coverage {
    All,
    Sample { per_leaf: usize, seed: u64 },
}

fn evaluate(leaves: &[Tensor<f64>], f: &Computation) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone(), false)).collect();
    let loss = f(&mut tape, &vars)?;
    let v = tape.value(loss);
    if v.len() != 1 {
        return Err(Error::Tape("computation must return a scalar".into()));
    }
    let x = v.data()[0];
    if !x.is_finite() {
        return Err(Error::NonFinite("loss during gradient check".into()));
    }
    Ok(x)
}

/// Gradients of the computation from [`Tape::backward`].
pub fn analytic_gradients(leaves: &[Tensor<f64>], f: &Computation) -> Result<Vec<Tensor<f64>>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let grads: Vec<Tensor<f64>> = vars
        .iter()
        .zip(leaves)
        .map(|(&v, t)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    if grads.iter().any(|g| !g.all_finite()) {
        return Err(Error::NonFinite("analytic gradient".into()));
    }
    Ok(grads)
}

fn coordinates(leaves: &[Tensor<f64>], coverage: Coverage) -> Vec<(usize, usize)> {
    match coverage {
        Coverage::All => leaves
            .iter()
            .enumerate()
            .flat_map(|(l, t)| (0..t.len()).map(move |i| (l, i)))
            .collect(),
        Coverage::Sample { per_leaf, seed } => {
            let mut rng = SeededRng::new(seed);
            let mut out = Vec::new();
            for (l, t) in leaves.iter().enumerate() {
                if t.len() <= per_leaf {
                    out.extend((0..t.len()).map(|i| (l, i)));
                } else {
                    out.extend((0..per_leaf).map(|_| (l, rng.index(t.len()))));
                }
            }
            out
        }
    }
}

/// Central differences `(f(x+h) - f(x-h)) / 2h` at the selected coordinates.
/// Unprobed coordinates are left `NaN`.
pub fn numeric_gradients(leaves: &[Tensor<f64>], f: &Computation, coverage: Coverage) -> Result<Vec<Tensor<f64>>> {
    Ok(probe(leaves, f, coverage, false)?.0)
}

/// Like [`numeric_gradients`], but a coordinate whose forward and backward
/// one-sided slopes disagree by more than [`TOLERANCE`] (relative) is left
/// `NaN`: a ReLU or max-pool switch lies inside the stencil there. Returns
/// the number of such coordinates.
pub fn screened_numeric_gradients(
    leaves: &[Tensor<f64>],
    f: &Computation,
    coverage: Coverage,
) -> Result<(Vec<Tensor<f64>>, usize)> {
    probe(leaves, f, coverage, true)
}

fn probe(
    leaves: &[Tensor<f64>],
    f: &Computation,
    coverage: Coverage,
    screen: bool,
) -> Result<(Vec<Tensor<f64>>, usize)> {
    let mut work: Vec<Tensor<f64>> = leaves.to_vec();
    let mut out: Vec<Tensor<f64>> = leaves.iter().map(|t| Tensor::full(t.shape(), f64::NAN)).collect();
    let base = if screen { evaluate(leaves, f)? } else { 0.0 };
    let mut skipped = 0;
    for (l, i) in coordinates(leaves, coverage) {
        let orig = work[l].data()[i];
        work[l].data_mut()[i] = orig + STEP;
        let up = evaluate(&work, f)?;
        work[l].data_mut()[i] = orig - STEP;
        let down = evaluate(&work, f)?;
        work[l].data_mut()[i] = orig;
        if screen {
            let fwd = (up - base) / STEP;
            let bwd = (base - down) / STEP;
            if (fwd - bwd).abs() / 1f64.max(fwd.abs()).max(bwd.abs()) > TOLERANCE {
                skipped += 1;
                continue;
            }
        }
        out[l].data_mut()[i] = (up - down) / (2.0 * STEP);
    }
    Ok((out, skipped))
}

/// `max |a - n| / max(1, |a|, |n|)` over the coordinates where `numeric`
/// is defined. Returns the error and the number of coordinates compared.
pub fn compare(analytic: &[Tensor<f64>], numeric: &[Tensor<f64>]) -> Result<(f64, usize)> {
    if analytic.len() != numeric.len() {
        return Err(Error::shape("grad_check", "leaf count mismatch"));
    }
    let mut worst = 0.0f64;
    let mut count = 0;
    for (a, n) in analytic.iter().zip(numeric) {
        a.check_same_shape(n, "grad_check")?;
        for (&a, &n) in a.data().iter().zip(n.data()) {
            if n.is_nan() {
                continue;
            }
            if !a.is_finite() || !n.is_finite() {
                return Err(Error::NonFinite("gradient comparison".into()));
            }
            let err = (a - n).abs() / 1f64.max(a.abs()).max(n.abs());
            worst = worst.max(err);
            count += 1;
        }
    }
    Ok((worst, count))
}

/// Compares tape gradients of `f` with central differences at `leaves`.
pub fn grad_check(
    leaves: &[Tensor<f64>],
    f: &Computation,
    coverage: Coverage,
    tolerance: f64,
) -> Result<GradCheckReport> {
    for t in leaves {
        if !t.all_finite() {
            return Err(Error::NonFinite("gradient check input".into()));
        }
    }
    let analytic = analytic_gradients(leaves, f)?;
    let (numeric, skipped) = screened_numeric_gradients(leaves, f, coverage)?;
    let (max_rel_error, coordinates) = compare(&analytic, &numeric)?;
    Ok(GradCheckReport {
        max_rel_error,
        coordinates,
        skipped,
        tolerance,
    })
}

fn random(shape: &[usize], rng: &mut SeededRng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform_range(-1.0, 1.0))
}

/// One named check per differentiable tape operation, each reduced to a
/// scalar through an MSE against a random target.
pub fn op_suite(seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = SeededRng::new(seed);
    let mut results = Vec::new();
    let mut run = |name: &'static str, leaves: Vec<Tensor<f64>>, f: &Computation| -> Result<()> {
        let r = grad_check(&leaves, f, Coverage::All, TOLERANCE)?;
        results.push((name, r));
        Ok(())
    };

    let target_3x4x4 = random(&[3, 4, 4], &mut rng);
    run(
        "conv2d_same",
        vec![
            random(&[2, 4, 4], &mut rng),
            random(&[3, 2, 3, 3], &mut rng),
            random(&[3], &mut rng),
        ],
        &|t, v| {
            let y = t.conv2d(v[0], v[1], v[2])?;
            let tg = t.constant(target_3x4x4.clone());
            t.mse(y, tg)
        },
    )?;

    let target_2x2x2 = random(&[2, 2, 2], &mut rng);
    run("maxpool2", vec![random(&[2, 4, 4], &mut rng)], &|t, v| {
        let y = t.maxpool2(v[0])?;
        let tg = t.constant(target_2x2x2.clone());
        t.mse(y, tg)
    })?;
    run("avgpool2", vec![random(&[2, 4, 4], &mut rng)], &|t, v| {
        let y = t.avgpool2(v[0])?;
        let tg = t.constant(target_2x2x2.clone());
        t.mse(y, tg)
    })?;

    let target_2x6x6 = random(&[2, 6, 6], &mut rng);
    run("upsample2", vec![random(&[2, 3, 3], &mut rng)], &|t, v| {
        let y = t.upsample2(v[0])?;
        let tg = t.constant(target_2x6x6.clone());
        t.mse(y, tg)
    })?;

    let target_1x5x5 = random(&[1, 5, 5], &mut rng);
    // keep inputs away from the kink at zero
    let away = Tensor::from_fn(&[1, 5, 5], |i| {
        let v: f64 = 0.1 + 0.9 * ((i * 7919) % 97) as f64 / 97.0;
        if i % 2 == 0 {
            v
        } else {
            -v
        }
    });
    run("relu", vec![away], &|t, v| {
        let y = t.relu(v[0])?;
        let tg = t.constant(target_1x5x5.clone());
        t.mse(y, tg)
    })?;
    run("bounded_out", vec![random(&[1, 5, 5], &mut rng)], &|t, v| {
        let y = t.bounded_out(v[0])?;
        let tg = t.constant(target_1x5x5.clone());
        t.mse(y, tg)
    })?;

    let target_3x3x3 = random(&[3, 3, 3], &mut rng);
    run(
        "concat",
        vec![random(&[1, 3, 3], &mut rng), random(&[2, 3, 3], &mut rng)],
        &|t, v| {
            let y = t.concat(&[v[0], v[1]])?;
            let tg = t.constant(target_3x3x3.clone());
            t.mse(y, tg)
        },
    )?;

    let target_2x2x3 = random(&[2, 2, 3], &mut rng);
    run("crop", vec![random(&[2, 5, 5], &mut rng)], &|t, v| {
        let y = t.crop(v[0], 1, 2, 2, 3)?;
        let tg = t.constant(target_2x2x3.clone());
        t.mse(y, tg)
    })?;

    run("select", vec![random(&[2, 3, 3], &mut rng)], &|t, v| {
        let y = t.select(v[0], 7)?;
        let half = t.constant(Tensor::scalar(0.5));
        t.mse(y, half)
    })?;

    run(
        "mse",
        vec![random(&[2, 3], &mut rng), random(&[2, 3], &mut rng)],
        &|t, v| t.mse(v[0], v[1]),
    )?;

    run(
        "add",
        vec![random(&[2, 3], &mut rng), random(&[2, 3], &mut rng)],
        &|t, v| {
            let s = t.add(v[0], v[1])?;
            let z = t.constant(Tensor::full(&[2, 3], 0.3));
            t.mse(s, z)
        },
    )?;

    Ok(results)
}
