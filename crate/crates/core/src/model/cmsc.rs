//! The coarse-to-fine convolutional predictor.
//!
//! Each level is a ten-layer fully convolutional stack
//! (conv conv pool conv conv pool conv conv up conv conv up conv conv) with
//! ReLU after every convolution but the last, which is squashed into
//! `[0, 1]`. Level `k` reads the input frames average-pooled to its scale
//! and, except for the coarsest, the upsampled prediction of level `k-1`.
//! Only the central patch of the finest output is used as the prediction.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::ops;
use crate::params::ParamStore;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::config::{CmscConfig, LevelSpec};

const CONVS_PER_LEVEL: usize = 10;
const PARAMS_PER_LEVEL: usize = 2 * CONVS_PER_LEVEL;

#[derive(Clone, Debug, PartialEq)]
pub struct Cmsc<T> {
    config: CmscConfig,
    params: ParamStore<T>,
}

/// Tape handles produced by [`Cmsc::forward_on`].
#[derive(Clone, Debug)]
pub struct ForwardVars {
    /// Level outputs, coarse to fine, each `1 x s x s`.
    pub levels: Vec<Var>,
    /// Central `1 x patch x patch` crop of the finest level.
    pub prediction: Var,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    pub prediction: Tensor<T>,
    pub levels: Vec<Tensor<T>>,
}

/// Inclusive pixel rectangle in context-window coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    /// Smallest box holding both.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            top: self.top.min(other.top),
            left: self.left.min(other.left),
            bottom: self.bottom.max(other.bottom),
            right: self.right.max(other.right),
        }
    }
}

/// Input region with nonzero gradient for one output pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Footprint {
    /// Through the finest level's own convolution stack only.
    pub direct: BBox,
    /// Through every path, including the coarser levels.
    pub full: Option<BBox>,
}

pub(crate) fn param_name(scale: usize, conv: usize, bias: bool) -> String {
    format!("L{scale}.conv{}.{}", conv + 1, if bias { "bias" } else { "weight" })
}

impl<T: Scalar> Cmsc<T> {
    /// Builds the model with fan-in scaled uniform weights
    /// (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) and zero biases.
    pub fn new(config: CmscConfig, rng: &SeededRng) -> Result<Self> {
        Self::build(config, |index, fan_in, len| {
            let mut r = rng.split(index as u64);
            let bound = (6.0 / fan_in as f64).sqrt();
            (0..len)
                .map(|_| T::from_f64_lossy(r.uniform_range(-bound, bound)))
                .collect()
        })
    }

    /// Every weight equal to `value`, biases zero.
    pub fn with_constant_weights(config: CmscConfig, value: f64) -> Result<Self> {
        Self::build(config, |_, _, len| vec![T::from_f64_lossy(value); len])
    }

    fn build(config: CmscConfig, mut weights: impl FnMut(usize, usize, usize) -> Vec<T>) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        for level in config.levels() {
            for (j, (cin, cout)) in level.conv_channels().into_iter().enumerate() {
                let shape = [cout, cin, 3, 3];
                let w = weights(params.len(), cin * 9, cout * cin * 9);
                params.push(param_name(level.scale, j, false), Tensor::from_vec(&shape, w)?)?;
                params.push(param_name(level.scale, j, true), Tensor::zeros(&[cout]))?;
            }
        }
        Ok(Cmsc { config, params })
    }

    /// Wraps existing parameters, checking names and shapes against the
    /// architecture. The first offending parameter is named in the error.
    pub fn from_params(config: CmscConfig, params: ParamStore<T>) -> Result<Self> {
        let reference = Self::with_constant_weights(config.clone(), 0.0)?;
        if params.len() != reference.params.len() {
            return Err(Error::shape(
                "load",
                format!(
                    "architecture has {} parameters, got {}",
                    reference.params.len(),
                    params.len()
                ),
            ));
        }
        for (expected, got) in reference.params.iter().zip(params.iter()) {
            if expected.name != got.name || expected.value.shape() != got.value.shape() {
                return Err(Error::shape(
                    "load",
                    format!(
                        "parameter {}: expected shape {:?}, got {} {:?}",
                        expected.name,
                        expected.value.shape(),
                        got.name,
                        got.value.shape()
                    ),
                ));
            }
        }
        Ok(Cmsc { config, params })
    }

    pub fn config(&self) -> &CmscConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn cast<U: Scalar>(&self) -> Cmsc<U> {
        Cmsc {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// Indices into the parameter store owned by `level` (coarse = 0).
    pub fn level_param_range(&self, level: usize) -> Range<usize> {
        level * PARAMS_PER_LEVEL..(level + 1) * PARAMS_PER_LEVEL
    }

    /// Sets the output bias of every level so that a zero pre-activation
    /// from the last layer maps to `rate` instead of 0.5.
    pub fn set_output_rate(&mut self, rate: f64) -> Result<()> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::Config(format!("output rate {rate} outside (0, 1)")));
        }
        let bias = T::from_f64_lossy((2.0 * rate - 1.0).atanh());
        for level in 0..self.config.n_levels {
            let last = self.level_param_range(level).end - 1;
            for b in self.params.get_mut(last).value.data_mut() {
                *b = bias;
            }
        }
        Ok(())
    }

    /// Runs one level's stack on an already assembled `C x s x s` input.
    /// `params` are the level's 20 variables (weight, bias per conv).
    pub fn forward_level(&self, tape: &mut Tape<T>, params: &[Var], input: Var) -> Result<Var> {
        if params.len() != PARAMS_PER_LEVEL {
            return Err(Error::Tape(format!(
                "a level takes {PARAMS_PER_LEVEL} parameters, got {}",
                params.len()
            )));
        }
        let conv = |tape: &mut Tape<T>, j: usize, x: Var| tape.conv2d(x, params[2 * j], params[2 * j + 1]);
        let conv_relu = |tape: &mut Tape<T>, j: usize, x: Var| -> Result<Var> {
            let y = conv(tape, j, x)?;
            tape.relu(y)
        };
        let mut h = input;
        h = conv_relu(tape, 0, h)?;
        h = conv_relu(tape, 1, h)?;
        h = tape.maxpool2(h)?;
        h = conv_relu(tape, 2, h)?;
        h = conv_relu(tape, 3, h)?;
        h = tape.maxpool2(h)?;
        h = conv_relu(tape, 4, h)?;
        h = conv_relu(tape, 5, h)?;
        h = tape.upsample2(h)?;
        h = conv_relu(tape, 6, h)?;
        h = conv_relu(tape, 7, h)?;
        h = tape.upsample2(h)?;
        h = conv_relu(tape, 8, h)?;
        h = conv(tape, 9, h)?;
        tape.bounded_out(h)
    }

    fn check_frames(&self, frames: &Tensor<T>) -> Result<()> {
        let (n, h, w) = frames.chw()?;
        let c = &self.config;
        if n != c.n_input_frames {
            return Err(Error::shape(
                "forward",
                format!("expected {} input frames, got {n}", c.n_input_frames),
            ));
        }
        if h != w || h != c.context {
            return Err(Error::shape(
                "forward",
                format!("frames must be {0}x{0}, got {h}x{w}", c.context),
            ));
        }
        Ok(())
    }

    /// Records the forward pass. `direct` feeds the finest level; `pyramid`
    /// is average-pooled down for the coarser ones. Usually both are the
    /// same variable.
    pub fn forward_split(&self, tape: &mut Tape<T>, params: &[Var], direct: Var, pyramid: Var) -> Result<ForwardVars> {
        self.check_frames(tape.value(direct))?;
        self.check_frames(tape.value(pyramid))?;
        if params.len() != self.params.len() {
            return Err(Error::Tape(format!(
                "expected {} parameter variables, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let n_levels = self.config.n_levels;
        // inputs per level, coarse to fine
        let mut inputs = vec![direct; n_levels];
        let mut x = pyramid;
        for k in (0..n_levels - 1).rev() {
            x = tape.avgpool2(x)?;
            inputs[k] = x;
        }

        let mut levels = Vec::with_capacity(n_levels);
        for (k, &frames) in inputs.iter().enumerate() {
            let input = match levels.last() {
                None => frames,
                Some(&coarser) => {
                    let up = tape.upsample2(coarser)?;
                    tape.concat(&[frames, up])?
                }
            };
            let out = self.forward_level(tape, &params[self.level_param_range(k)], input)?;
            levels.push(out);
        }
        let c = &self.config;
        let off = c.patch_offset();
        let prediction = tape.crop(*levels.last().unwrap(), off, off, c.patch, c.patch)?;
        Ok(ForwardVars { levels, prediction })
    }

    pub fn forward_on(&self, tape: &mut Tape<T>, params: &[Var], frames: Var) -> Result<ForwardVars> {
        self.forward_split(tape, params, frames, frames)
    }

    /// Inference on one `n x context x context` window.
    pub fn forward(&self, frames: &Tensor<T>) -> Result<ForwardOutput<T>> {
        self.check_frames(frames)?;
        let mut tape = Tape::new();
        let params = self.params.bind(&mut tape, false);
        let x = tape.constant(frames.clone());
        let fv = self.forward_on(&mut tape, &params, x)?;
        Ok(ForwardOutput {
            prediction: tape.value(fv.prediction).clone(),
            levels: fv.levels.iter().map(|&v| tape.value(v).clone()).collect(),
        })
    }

    /// Records the training loss for a forward pass. `target` is either the
    /// `1 x patch x patch` central patch of the next frame or the full
    /// `1 x context x context` next-frame window.
    pub fn loss_on(&self, tape: &mut Tape<T>, fv: &ForwardVars, target: &Tensor<T>) -> Result<Var> {
        let targets = supervision_targets(&self.config, target)?;
        let c = &self.config;
        let supervised: Vec<usize> = if c.deep_supervision {
            (0..c.n_levels).collect()
        } else {
            vec![c.n_levels - 1]
        };
        let mut total: Option<Var> = None;
        for k in supervised {
            let out = fv.levels[k];
            let scale = tape.value(out).chw()?.1;
            let crop = c.crop_at(scale);
            let off = (scale - crop) / 2;
            let pred = tape.crop(out, off, off, crop, crop)?;
            let tgt = tape.constant(targets[k].clone());
            let l = tape.mse(pred, tgt)?;
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l)?,
            });
        }
        Ok(total.expect("at least one supervised level"))
    }

    /// Forward, loss and backward for one sample; gradients are added to
    /// the parameter buffers. Returns the loss.
    pub fn accumulate_gradients(&mut self, frames: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
        let mut tape = Tape::new();
        let params = self.params.bind(&mut tape, true);
        let x = tape.constant(frames.clone());
        let fv = self.forward_on(&mut tape, &params, x)?;
        let loss = self.loss_on(&mut tape, &fv, target)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss {value}")));
        }
        tape.backward(loss)?;
        self.params.accumulate_grads(&tape, &params)?;
        Ok(value)
    }

    /// Back-propagates from one pixel `(row, col)` of the central patch and
    /// reports bounding boxes, in context coordinates, of input pixels with
    /// nonzero gradient. `direct` covers the finest level alone, fed a
    /// constant in every channel so that max-pool ties spread the gradient
    /// over the whole window; `full` adds the paths through the coarser
    /// levels. Pair with [`Cmsc::with_constant_weights`] and a small
    /// positive weight so no unit is inactive.
    pub fn receptive_field_probe(&self, row: usize, col: usize) -> Result<Footprint> {
        let c = &self.config;
        if row >= c.patch || col >= c.patch {
            return Err(Error::shape(
                "receptive_field_probe",
                format!("pixel ({row},{col}) outside the {0}x{0} patch", c.patch),
            ));
        }
        let off = c.patch_offset();
        let pixel = (off + row) * c.context + off + col;
        let nonzero_box = |g: &Tensor<T>| -> Option<BBox> {
            let side = c.context;
            let mut b: Option<BBox> = None;
            for (i, v) in g.data().iter().enumerate() {
                if *v == T::zero() {
                    continue;
                }
                let (y, x) = ((i / side) % side, i % side);
                b = Some(match b {
                    None => BBox {
                        top: y,
                        left: x,
                        bottom: y,
                        right: x,
                    },
                    Some(b) => b.union(&BBox {
                        top: y,
                        left: x,
                        bottom: y,
                        right: x,
                    }),
                });
            }
            b
        };

        let finest = self.config.levels().pop().expect("at least one level");
        let mut tape = Tape::new();
        let params = self.params.bind(&mut tape, false);
        let input = tape.leaf(
            Tensor::full(&[finest.in_channels(), c.context, c.context], T::one()),
            true,
        );
        let out = self.forward_level(&mut tape, &params[self.level_param_range(c.n_levels - 1)], input)?;
        let out = tape.select(out, pixel)?;
        tape.backward(out)?;
        let direct = tape
            .grad(input)
            .and_then(nonzero_box)
            .ok_or_else(|| Error::NonFinite("output pixel has no gradient path to the input".into()))?;

        let frames = Tensor::full(&[c.n_input_frames, c.context, c.context], T::one());
        let mut tape = Tape::new();
        let params = self.params.bind(&mut tape, false);
        let x = tape.leaf(frames, true);
        let fv = self.forward_on(&mut tape, &params, x)?;
        let out = tape.select(fv.prediction, row * c.patch + col)?;
        tape.backward(out)?;
        let full = tape.grad(x).and_then(nonzero_box).map(|b| b.union(&direct));
        Ok(Footprint { direct, full })
    }
}

/// Per-level loss targets: the central patch of the next frame, averaged
/// down to each level's crop size. Coarse to fine.
pub fn supervision_targets<T: Scalar>(config: &CmscConfig, target: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let (c, h, w) = target.chw()?;
    if c != 1 || h != w {
        return Err(Error::shape(
            "training_loss",
            format!("target must be a single square plane, got {:?}", target.shape()),
        ));
    }
    let patch = if h == config.patch {
        target.clone()
    } else if h == config.context {
        let off = config.patch_offset();
        let mut data = Vec::with_capacity(config.patch * config.patch);
        for y in off..off + config.patch {
            data.extend_from_slice(&target.data()[y * w + off..y * w + off + config.patch]);
        }
        Tensor::from_vec(&[1, config.patch, config.patch], data)?
    } else {
        return Err(Error::shape(
            "training_loss",
            format!(
                "target side {h} is neither the patch ({}) nor the context ({})",
                config.patch, config.context
            ),
        ));
    };
    let mut out = vec![patch];
    for _ in 1..config.n_levels {
        let coarser = ops::avgpool2(out.last().unwrap())?;
        out.push(coarser);
    }
    out.reverse();
    Ok(out)
}

/// Repeated 2x2 averaging of `n x context x context` frames; coarse to fine.
pub fn downsample_pyramid<T: Scalar>(config: &CmscConfig, frames: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let (_, h, w) = frames.chw()?;
    if h != w || h != config.context {
        return Err(Error::shape(
            "downsample_pyramid",
            format!("frames must be {0}x{0}, got {h}x{w}", config.context),
        ));
    }
    let mut out = vec![frames.clone()];
    for _ in 1..config.n_levels {
        let next = ops::avgpool2(out.last().unwrap())?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

/// The training objective evaluated on finished level outputs (coarse to
/// fine): the sum over supervised levels of the MSE between the level's
/// central crop and the down-averaged target.
pub fn training_loss<T: Scalar>(config: &CmscConfig, levels: &[Tensor<T>], target: &Tensor<T>) -> Result<T> {
    if levels.len() != config.n_levels {
        return Err(Error::shape(
            "training_loss",
            format!("{} level outputs for {} levels", levels.len(), config.n_levels),
        ));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = levels.iter().map(|l| tape.constant(l.clone())).collect();
    let prediction = vars[vars.len() - 1];
    let fv = ForwardVars {
        levels: vars,
        prediction,
    };
    // the loss recorder only needs the config
    let shell: Cmsc<T> = Cmsc {
        config: config.clone(),
        params: ParamStore::new(),
    };
    let loss = shell.loss_on(&mut tape, &fv, target)?;
    Ok(tape.value(loss).data()[0])
}

/// Scalar weight count of an architecture: sum over levels and layers of
/// `9 * in * out + out`.
pub fn parameter_count(config: &CmscConfig) -> usize {
    config
        .levels()
        .iter()
        .flat_map(LevelSpec::conv_channels)
        .map(|(i, o)| 9 * i * o + o)
        .sum()
}
