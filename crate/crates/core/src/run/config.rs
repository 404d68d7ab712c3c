use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gs::segment_sum_solutions;
use crate::model::{Arch, ModelConfig, Precision};

/// Everything that determines a run. Unset fields take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub sample_size: usize,
    pub training_size: usize,
    pub learning_rate: f64,
    pub training_steps: usize,
    pub temperature: f64,
    pub num_improve: usize,
    /// Absolute segment sums `k1..k4`, in any order.
    pub segment_sums: Option<[u32; 4]>,
    pub stacking: u32,
    pub n_layer: usize,
    pub n_embd: usize,
    pub n_head: usize,
    pub transformer_uses_score: bool,
    pub generations: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub precision: Precision,
    pub augment: bool,
    /// Resumed generations train for this fraction of `training_steps`.
    pub resume_fraction: f64,
    /// and at this multiple of `learning_rate`.
    pub resume_lr_scale: f64,
    /// Warmup length as a fraction of the steps, used with fixed segment sums.
    pub warmup_fraction: f64,
    pub rungs: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub tempering_sweeps: usize,
    /// Record elapsed time in the statistics; off gives reproducible files.
    pub wall_clock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 36,
            sample_size: 4096,
            training_size: 512,
            learning_rate: 3e-4,
            training_steps: 300,
            temperature: 1.0,
            num_improve: 2,
            segment_sums: None,
            stacking: 3,
            n_layer: 4,
            n_embd: 128,
            n_head: 4,
            transformer_uses_score: false,
            generations: 5,
            seed: 0,
            batch_size: 64,
            weight_decay: 0.01,
            precision: Precision::F32,
            augment: true,
            resume_fraction: 0.2,
            resume_lr_scale: 0.5,
            warmup_fraction: 0.1,
            rungs: 4,
            t_min: 0.05,
            t_max: 0.5,
            tempering_sweeps: 4,
            wall_clock: true,
        }
    }
}

fn positive(field: &'static str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config { field, msg: "must be positive".into() });
    }
    Ok(())
}

fn positive_f(field: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config { field, msg: format!("must be positive and finite, got {v}") });
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || !self.n.is_multiple_of(4) {
            return Err(Error::InvalidOrder(self.n));
        }
        for (field, v) in [
            ("sample_size", self.sample_size),
            ("training_size", self.training_size),
            ("training_steps", self.training_steps),
            ("generations", self.generations),
            ("batch_size", self.batch_size),
        ] {
            positive(field, v)?;
        }
        if self.training_size > self.sample_size {
            return Err(Error::Config {
                field: "training_size",
                msg: format!("{} exceeds sample_size {}", self.training_size, self.sample_size),
            });
        }
        positive_f("learning_rate", self.learning_rate)?;
        positive_f("temperature", self.temperature)?;
        positive_f("resume_lr_scale", self.resume_lr_scale)?;
        if !(self.resume_fraction > 0.0 && self.resume_fraction <= 1.0) {
            return Err(Error::Config { field: "resume_fraction", msg: format!("must be in (0, 1], got {}", self.resume_fraction) });
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config { field: "warmup_fraction", msg: format!("must be in [0, 1], got {}", self.warmup_fraction) });
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config { field: "weight_decay", msg: format!("must be non-negative, got {}", self.weight_decay) });
        }
        if let Some(k) = self.segment_sums {
            let mut sorted = k;
            sorted.sort_unstable();
            let valid = segment_sum_solutions(self.n);
            if !valid.contains(&sorted) {
                let list: Vec<String> = valid.iter().map(|v| format!("{},{},{},{}", v[0], v[1], v[2], v[3])).collect();
                return Err(Error::InfeasibleSegmentSums { n: self.n, sums: k, valid: list.join(" ") });
            }
        }
        if self.rungs < 2 {
            return Err(Error::Config { field: "rungs", msg: format!("need at least 2, got {}", self.rungs) });
        }
        positive_f("t_min", self.t_min)?;
        if self.t_max <= self.t_min || !self.t_max.is_finite() {
            return Err(Error::Config { field: "t_max", msg: format!("must exceed t_min {}", self.t_min) });
        }
        self.model_config()?;
        Ok(())
    }

    pub fn arch(&self) -> Arch {
        Arch { n_layer: self.n_layer, n_embd: self.n_embd, n_head: self.n_head }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        ModelConfig::new(self.n, self.stacking, self.arch(), self.transformer_uses_score, self.precision)
    }
}
