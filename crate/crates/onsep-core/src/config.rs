//! Tunables for the online loop.

use crate::error::{OnsepError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    /// Deterministic frequency-plus-recency scorer; no network.
    Stub,
    /// External inference service speaking the `/score` wire protocol.
    Http,
}

/// All knobs of a run. Defaults follow the best self-consistent published
/// configuration: λ=0.1, L=200, θ=0.25, β=0.2, with α=0.5 and k=10 for the
/// two contested knobs and conf_min=0.01 for the pruning threshold.
#[derive(Debug, Clone)]
pub struct OnlineConfig {
    /// L: maximum events per retrieved history chain.
    pub history_len: usize,
    /// λ: weight of the long-term branch in the ensemble.
    pub lambda: f64,
    /// α: weight of the scorer probability vs. coverage in rule confidence.
    pub alpha: f64,
    /// θ: smoothing factor of the confidence update.
    pub theta: f64,
    /// β: growth factor applied to the previous confidence.
    pub beta: f64,
    /// k: number of top candidates kept per mining pass.
    pub topk_rules: usize,
    /// Rules below this confidence are pruned at snapshot boundaries.
    pub conf_min: f64,
    pub scorer: ScorerKind,
    pub scorer_url: Option<String>,
    pub seed: u64,
    /// When false the rule base is never updated during the run.
    pub mining_enabled: bool,
    /// Upper bound on intra-snapshot prediction parallelism.
    pub workers: usize,
    /// Capture every per-query ranking in the run report.
    pub record_predictions: bool,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            history_len: 200,
            lambda: 0.1,
            alpha: 0.5,
            theta: 0.25,
            beta: 0.2,
            topk_rules: 10,
            conf_min: 0.01,
            scorer: ScorerKind::Stub,
            scorer_url: None,
            seed: 0,
            mining_enabled: true,
            workers: 1,
            record_predictions: false,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        fn unit(name: &str, v: f64) -> Result<()> {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(OnsepError::Argument(format!("{name} must be in [0, 1], got {v}")));
            }
            Ok(())
        }
        if self.history_len == 0 {
            return Err(OnsepError::Argument("history_len must be >= 1".into()));
        }
        unit("lambda", self.lambda)?;
        unit("alpha", self.alpha)?;
        unit("theta", self.theta)?;
        unit("conf_min", self.conf_min)?;
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(OnsepError::Argument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.topk_rules == 0 {
            return Err(OnsepError::Argument("topk_rules must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(OnsepError::Argument("workers must be >= 1".into()));
        }
        if self.scorer == ScorerKind::Http && self.scorer_url.is_none() {
            return Err(OnsepError::Argument(
                "http scorer requires a scorer url".into(),
            ));
        }
        Ok(())
    }
}
