use crate::error::Result;
use crate::gradcheck::{grad_check, op_suite, Coverage, GradCheckReport, TOLERANCE};
use crate::model::{Cmsc, CmscConfig};
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// One line of the gradient-check report.
#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub seed: u64,
    pub report: GradCheckReport,
}

/// A single coarsest level with the desk filter widths.
pub fn level_check_config() -> CmscConfig {
    CmscConfig {
        n_levels: 1,
        patch: 4,
        context: 12,
        n_input_frames: 4,
        filters: CmscConfig::desk().filters,
        deep_supervision: false,
    }
}

/// Two narrow levels, so the coarse-to-fine path is covered too.
pub fn guided_check_config() -> CmscConfig {
    CmscConfig {
        n_levels: 2,
        patch: 8,
        context: 24,
        n_input_frames: 2,
        filters: [2, 3, 4, 3, 2],
        deep_supervision: true,
    }
}

/// Checks every parameter and the input frames of `config` against central
/// differences.
pub fn model_check(config: &CmscConfig, seed: u64, coverage: Coverage) -> Result<GradCheckReport> {
    let mut rng = SeededRng::new(seed);
    let model = Cmsc::<f64>::new(config.clone(), &rng.split(0))?;
    let c = config.context;
    let p = config.patch;
    let mut leaves: Vec<Tensor<f64>> = model
        .params()
        .iter()
        .map(|prm| {
            if prm.value.shape().len() == 1 {
                Tensor::from_fn(prm.value.shape(), |_| rng.uniform_range(-0.1, 0.1))
            } else {
                prm.value.clone()
            }
        })
        .collect();
    leaves.push(Tensor::from_fn(&[config.n_input_frames, c, c], |_| rng.uniform()));
    let target = Tensor::from_fn(&[1, p, p], |_| rng.uniform());
    let n_params = model.params().len();
    let f = |tape: &mut Tape<f64>, vars: &[Var]| {
        let fv = model.forward_on(tape, &vars[..n_params], vars[n_params])?;
        model.loss_on(tape, &fv, &target)
    };
    grad_check(&leaves, &f, coverage, TOLERANCE)
}

/// Every tape operation and two model configurations, for each seed.
pub fn gradcheck_suite(seeds: &[u64]) -> Result<Vec<GradCheckEntry>> {
    let mut out = Vec::new();
    for &seed in seeds {
        for (name, report) in op_suite(seed)? {
            out.push(GradCheckEntry {
                name: name.to_string(),
                seed,
                report,
            });
        }
        out.push(GradCheckEntry {
            name: "cmsc_level".into(),
            seed,
            report: model_check(&level_check_config(), seed, Coverage::Sample { per_leaf: 6, seed })?,
        });
        out.push(GradCheckEntry {
            name: "cmsc_two_levels".into(),
            seed,
            report: model_check(&guided_check_config(), seed, Coverage::Sample { per_leaf: 12, seed })?,
        });
    }
    Ok(out)
}
