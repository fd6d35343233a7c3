//! Online neural-symbolic event prediction over temporal knowledge graphs.
//!
//! The engine answers object queries `(s, r, ?, t)` one snapshot at a time.
//! Two components drive it:
//!
//! - **Rule mining** ([`dcrm`]): every revealed outcome is compared against
//!   the subject's earlier events; relations that previously linked the same
//!   subject to the same object become confidence-scored causal rules in a
//!   [`rulebase::CausalRuleBase`] that is updated and pruned at every
//!   snapshot boundary.
//! - **Dual-history inference** ([`dhag`]): each query is answered from two
//!   retrieved contexts — the most recent events, and the rule-guided cause
//!   events — scored separately by a pluggable [`scorer::ScorerBackend`] and
//!   blended into one ranking.
//!
//! The scorer is either a deterministic stub (so the whole pipeline is
//! reproducible and desk-checkable) or an external inference service behind
//! a small JSON protocol. [`eval::run_online`] wires everything into the
//! evaluation loop with time-aware Hit@k metrics, and [`synth`] generates
//! planted-rule datasets for end-to-end verification at desk scale.

pub mod config;
pub mod dcrm;
pub mod dhag;
pub mod error;
pub mod eval;
pub mod rulebase;
pub mod scorer;
pub mod synth;
pub mod tkg;

pub use config::{OnlineConfig, ScorerKind};
pub use dcrm::{CandidateCause, Feedback, RuleUpdate};
pub use dhag::{Prediction, PredictionFlag};
pub use error::{OnsepError, Result};
pub use eval::{run_online, Metrics, RunReport};
pub use rulebase::{CausalRule, CausalRuleBase};
pub use scorer::{
    HttpScorer, LabelMapping, MappingKind, PromptText, ScoreDistribution, ScorerBackend, StubScorer,
};
pub use synth::{generate_synthetic, PlantedRule, SyntheticSpec};
pub use tkg::{Dataset, EntityId, EventChain, Quadruple, Query, RelationId, Timestamp, TkgStore};
