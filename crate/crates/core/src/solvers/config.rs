use serde::{Deserialize, Serialize};

use crate::metrics::{StopRule, MAX_ITERS, MSE_TOL, REL_RESIDUAL_TOL};

use super::{InitStrategy, Schedule, SolverError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    ScaledSgd,
    Sgd,
    Als,
    #[serde(rename = "ccd++", alias = "ccdpp")]
    Ccdpp,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::ScaledSgd,
        SolverKind::Sgd,
        SolverKind::Als,
        SolverKind::Ccdpp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::ScaledSgd => "scaled-sgd",
            SolverKind::Sgd => "sgd",
            SolverKind::Als => "als",
            SolverKind::Ccdpp => "ccd++",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "scaled-sgd" => Some(Self::ScaledSgd),
            "sgd" => Some(Self::Sgd),
            "als" => Some(Self::Als),
            "ccd++" | "ccdpp" => Some(Self::Ccdpp),
            _ => None,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, SolverKind::ScaledSgd | SolverKind::Sgd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoStep {
    Auto,
}

/// `"auto"` (linearized line search on the full data) or a fixed number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialStep {
    Value(f64),
    Auto(AutoStep),
}

impl Default for InitialStep {
    fn default() -> Self {
        InitialStep::Auto(AutoStep::Auto)
    }
}

/// When the cached `L^T L`, `R^T R` are recomputed from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramRefresh {
    EveryStep,
    #[default]
    EveryEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    #[serde(default = "defaults::mu")]
    pub mu: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub initial_step: InitialStep,
    /// Used when the automatic initial step finds a stationary start.
    #[serde(default = "defaults::fallback_step")]
    pub fallback_step: f64,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default = "defaults::mse_tol")]
    pub mse_tol: f64,
    #[serde(default = "defaults::rel_residual_tol")]
    pub rel_residual_tol: f64,
    #[serde(default)]
    pub seed: u64,
    /// Ridge weight; ALS and CCD++ only.
    #[serde(default)]
    pub regularization: f64,
    #[serde(default = "defaults::ccd_inner_iters")]
    pub ccd_inner_iters: usize,
    #[serde(default)]
    pub gram_refresh: GramRefresh,
    /// Sherman-Morrison updates for single-entry batches.
    #[serde(default = "defaults::yes")]
    pub rank1_fast_path: bool,
    #[serde(default)]
    pub init: InitStrategy,
    /// Undo an epoch that blows up and halve the stepsize (SGD engines).
    #[serde(default = "defaults::yes")]
    pub divergence_guard: bool,
}

mod defaults {
    pub fn mu() -> f64 {
        0.5
    }
    pub fn batch_size() -> usize {
        10
    }
    pub fn fallback_step() -> f64 {
        1e-2
    }
    pub fn max_iters() -> usize {
        super::MAX_ITERS
    }
    pub fn mse_tol() -> f64 {
        super::MSE_TOL
    }
    pub fn rel_residual_tol() -> f64 {
        super::REL_RESIDUAL_TOL
    }
    pub fn ccd_inner_iters() -> usize {
        5
    }
    pub fn yes() -> bool {
        true
    }
}

impl SolverConfig {
    pub fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            mu: defaults::mu(),
            batch_size: defaults::batch_size(),
            schedule: Schedule::default(),
            initial_step: InitialStep::default(),
            fallback_step: defaults::fallback_step(),
            max_iters: MAX_ITERS,
            mse_tol: MSE_TOL,
            rel_residual_tol: REL_RESIDUAL_TOL,
            seed: 0,
            regularization: 0.0,
            ccd_inner_iters: defaults::ccd_inner_iters(),
            gram_refresh: GramRefresh::default(),
            rank1_fast_path: true,
            init: InitStrategy::default(),
            divergence_guard: true,
        }
    }

    pub fn scaled_sgd(mu: f64, batch_size: usize) -> Self {
        Self {
            mu,
            batch_size,
            ..Self::new(SolverKind::ScaledSgd)
        }
    }

    pub fn sgd(batch_size: usize) -> Self {
        Self {
            batch_size,
            ..Self::new(SolverKind::Sgd)
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_initial_step(mut self, step: InitialStep) -> Self {
        self.initial_step = step;
        self
    }

    pub fn with_regularization(mut self, lambda: f64) -> Self {
        self.regularization = lambda;
        self
    }

    pub fn with_init(mut self, init: InitStrategy) -> Self {
        self.init = init;
        self
    }

    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            mse_tol: self.mse_tol,
            rel_residual_tol: self.rel_residual_tol,
            max_iters: self.max_iters,
        }
    }

    /// Static checks; `known_entries` enables the batch-size bound.
    pub fn validate(&self, known_entries: Option<usize>) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("mu out of [0,1]: {}", self.mu));
        }
        if self.kind.is_stochastic() {
            if self.batch_size == 0 {
                return bad("batch_size must be at least 1".into());
            }
            if let Some(total) = known_entries {
                if self.batch_size > total {
                    return bad(format!(
                        "batch_size {} exceeds the number of known entries {total}",
                        self.batch_size
                    ));
                }
            }
        }
        if let InitialStep::Value(t) = self.initial_step {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("initial_step must be positive, got {t}"));
            }
        }
        if !(self.fallback_step > 0.0 && self.fallback_step.is_finite()) {
            return bad(format!(
                "fallback_step must be positive, got {}",
                self.fallback_step
            ));
        }
        match self.schedule {
            Schedule::BoldDriver { up, down } if !(up > 0.0 && down > 0.0) => {
                return bad("bold driver factors must be positive".into());
            }
            Schedule::ExponentialDecay { rate } if !(rate > 0.0) => {
                return bad(format!("decay rate must be positive, got {rate}"));
            }
            _ => {}
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return bad(format!(
                "regularization must be >= 0, got {}",
                self.regularization
            ));
        }
        if self.kind == SolverKind::Ccdpp && self.ccd_inner_iters == 0 {
            return bad("ccd_inner_iters must be at least 1".into());
        }
        if let InitStrategy::Unbalanced { ratio } = self.init {
            if !(ratio > 0.0 && ratio.is_finite()) {
                return bad(format!("init ratio must be positive, got {ratio}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_range_checked() {
        let mut c = SolverConfig::scaled_sgd(1.5, 10);
        let err = c.validate(None).unwrap_err();
        assert!(err.to_string().contains("mu out of [0,1]"));
        c.mu = 1.0;
        assert!(c.validate(Some(100)).is_ok());
    }

    #[test]
    fn batch_bound_checked() {
        let c = SolverConfig::sgd(50);
        assert!(c.validate(Some(49)).is_err());
        assert!(c.validate(Some(50)).is_ok());
        assert!(SolverConfig::sgd(0).validate(None).is_err());
    }

    #[test]
    fn serde_defaults_and_names() {
        let c: SolverConfig = serde_json::from_str(r#"{"kind": "ccd++"}"#).unwrap();
        assert_eq!(c.kind, SolverKind::Ccdpp);
        assert_eq!(c.ccd_inner_iters, 5);
        assert_eq!(c.initial_step, InitialStep::default());
        let c: SolverConfig = serde_json::from_str(
            r#"{"kind": "scaled-sgd", "initial_step": 0.25, "schedule": {"kind": "fixed"}}"#,
        )
        .unwrap();
        assert_eq!(c.initial_step, InitialStep::Value(0.25));
        assert_eq!(c.schedule, Schedule::Fixed);
        assert!(serde_json::from_str::<SolverConfig>(r#"{"kind": "grouse"}"#).is_err());
        for k in SolverKind::ALL {
            assert_eq!(SolverKind::from_name(k.name()), Some(k));
        }
    }
}
