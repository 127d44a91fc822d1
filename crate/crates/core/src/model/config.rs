use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CmscConfig {
    /// Number of pyramid levels, coarse to fine, scales doubling.
    pub n_levels: usize,
    /// Side of the predicted central patch.
    pub patch: usize,
    /// Side of the observed window: `3 * patch`, or `patch` for the
    /// no-context ablation.
    pub context: usize,
    /// Number of stacked input frames.
    pub n_input_frames: usize,
    /// Widths of the five convolution sets; the final layer always has
    /// one filter.
    pub filters: [usize; 5],
    /// Supervise every level (on down-averaged targets) rather than only
    /// the finest one.
    pub deep_supervision: bool,
}

/// One pyramid level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelSpec {
    pub scale: usize,
    pub filters: [usize; 5],
    pub in_frames: usize,
    pub has_coarser_input: bool,
}

impl LevelSpec {
    pub fn in_channels(&self) -> usize {
        self.in_frames + usize::from(self.has_coarser_input)
    }

    /// `(in, out)` channels of the ten convolutions.
    pub fn conv_channels(&self) -> [(usize, usize); 10] {
        let f = self.filters;
        [
            (self.in_channels(), f[0]),
            (f[0], f[0]),
            (f[0], f[1]),
            (f[1], f[1]),
            (f[1], f[2]),
            (f[2], f[2]),
            (f[2], f[3]),
            (f[3], f[3]),
            (f[3], f[4]),
            (f[4], 1),
        ]
    }
}

impl CmscConfig {
    /// Four levels (12 to 96), 32-pixel patches in a 96-pixel context.
    pub fn full() -> Self {
        CmscConfig {
            n_levels: 4,
            patch: 32,
            context: 96,
            n_input_frames: 4,
            filters: [32, 64, 128, 64, 32],
            deep_supervision: true,
        }
    }

    /// As [`CmscConfig::full`] with six input frames.
    pub fn full_six_frames() -> Self {
        CmscConfig {
            n_input_frames: 6,
            ..Self::full()
        }
    }

    /// Scaled-down model for single-core experiments: three levels
    /// (12, 24, 48), 16-pixel patches.
    pub fn desk() -> Self {
        CmscConfig {
            n_levels: 3,
            patch: 16,
            context: 48,
            n_input_frames: 4,
            filters: [16, 32, 64, 32, 16],
            deep_supervision: true,
        }
    }

    /// The same model observing only the patch it predicts.
    pub fn without_context(&self) -> Self {
        CmscConfig {
            context: self.patch,
            ..self.clone()
        }
    }

    pub fn has_context(&self) -> bool {
        self.context != self.patch
    }

    /// Offset of the central patch inside the context window.
    pub fn patch_offset(&self) -> usize {
        (self.context - self.patch) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_levels == 0 || self.n_levels > 8 {
            return bad(format!("n_levels must be in 1..=8, got {}", self.n_levels));
        }
        if self.n_input_frames == 0 {
            return bad("n_input_frames must be positive".into());
        }
        if self.filters.contains(&0) {
            return bad(format!("filter widths must be positive: {:?}", self.filters));
        }
        if self.patch == 0 || (self.context != 3 * self.patch && self.context != self.patch) {
            return bad(format!(
                "context ({}) must be 3x the patch ({}) or equal to it",
                self.context, self.patch
            ));
        }
        let factor = 1usize << (self.n_levels - 1);
        if !self.patch.is_multiple_of(factor) {
            return bad(format!(
                "patch {} must be divisible by 2^(n_levels-1) = {factor}",
                self.patch
            ));
        }
        for level in self.levels() {
            if level.scale % 4 != 0 {
                return bad(format!(
                    "level scale {} must be divisible by 4 (two 2x2 pools)",
                    level.scale
                ));
            }
        }
        Ok(())
    }

    /// Levels from coarsest to finest. The finest operates at the context
    /// size.
    pub fn levels(&self) -> Vec<LevelSpec> {
        (0..self.n_levels)
            .map(|k| LevelSpec {
                scale: self.context >> (self.n_levels - 1 - k),
                filters: self.filters,
                in_frames: self.n_input_frames,
                has_coarser_input: k > 0,
            })
            .collect()
    }

    /// Side of the supervised central crop at a level of side `scale`.
    pub fn crop_at(&self, scale: usize) -> usize {
        scale * self.patch / self.context
    }

    /// Serializes as `key=value` lines.
    pub fn to_kv(&self) -> String {
        let f = self.filters;
        format!(
            "n_levels={}\npatch={}\ncontext={}\nn_input_frames={}\nfilters={},{},{},{},{}\ndeep_supervision={}\n",
            self.n_levels,
            self.patch,
            self.context,
            self.n_input_frames,
            f[0],
            f[1],
            f[2],
            f[3],
            f[4],
            self.deep_supervision
        )
    }

    /// Applies one `key=value` setting. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = |v: &str| -> Result<usize> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: expected an integer, got {v:?}")))
        };
        match key {
            "n_levels" => self.n_levels = num(value)?,
            "patch" => self.patch = num(value)?,
            "context" => self.context = num(value)?,
            "n_input_frames" => self.n_input_frames = num(value)?,
            "filters" => {
                let parts: Vec<usize> = value.split(',').map(num).collect::<Result<_>>()?;
                self.filters = parts
                    .try_into()
                    .map_err(|p: Vec<usize>| Error::Config(format!("filters: expected 5 widths, got {}", p.len())))?;
            }
            "deep_supervision" => {
                self.deep_supervision = match value.trim() {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => {
                        return Err(Error::Config(format!(
                            "deep_supervision: expected a boolean, got {other:?}"
                        )))
                    }
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_levels() {
        let c = CmscConfig::full();
        c.validate().unwrap();
        let scales: Vec<usize> = c.levels().iter().map(|l| l.scale).collect();
        assert_eq!(scales, vec![12, 24, 48, 96]);
        assert_eq!(c.levels()[0].in_channels(), 4);
        assert!(c.levels()[1..].iter().all(|l| l.in_channels() == 5));
        assert_eq!(c.crop_at(12), 4);
        assert_eq!(c.crop_at(96), 32);
    }

    #[test]
    fn ablation_configs_validate() {
        CmscConfig::desk().validate().unwrap();
        CmscConfig::desk().without_context().validate().unwrap();
        let single = CmscConfig {
            n_levels: 1,
            ..CmscConfig::desk()
        };
        single.validate().unwrap();
    }

    #[test]
    fn rejects_bad_scales() {
        let c = CmscConfig {
            patch: 10,
            context: 30,
            n_levels: 2,
            ..CmscConfig::desk()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = CmscConfig {
            context: 64,
            ..CmscConfig::desk()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let c = CmscConfig::full_six_frames();
        let mut d = CmscConfig::desk();
        for line in c.to_kv().lines() {
            let (k, v) = line.split_once('=').unwrap();
            assert!(d.set(k, v).unwrap());
        }
        assert_eq!(c, d);
        assert!(!d.set("nope", "1").unwrap());
    }
}
