use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{BeliefState, DirectorAction, FilterError, MODEL_MISMATCH, ON_TRACK};

/// Thresholds for the Director's decision cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectorPolicy {
    pub accept_threshold: f64,
    pub abort_floor: f64,
    pub reselect_threshold: f64,
}

impl Default for DirectorPolicy {
    fn default() -> Self {
        Self {
            accept_threshold: 0.70,
            abort_floor: 0.05,
            reselect_threshold: 0.50,
        }
    }
}

impl DirectorPolicy {
    pub fn validate(&self) -> Result<(), FilterError> {
        let ok = 0.0 < self.abort_floor
            && self.abort_floor < self.accept_threshold
            && self.accept_threshold <= 1.0
            && (0.0..=1.0).contains(&self.reselect_threshold);
        if ok {
            Ok(())
        } else {
            Err(FilterError::InvalidTable(format!(
                "policy thresholds must satisfy 0 < abort_floor < accept_threshold <= 1: {self:?}"
            )))
        }
    }
}

/// Picks the next action. Pure: the cascade is
///
/// 1. no attempts left: `ABORT`
/// 2. `p(ON_TRACK) >= accept_threshold`: `ACCEPT`
/// 3. `p(MODEL_MISMATCH) >= reselect_threshold` and an unused ranked model exists:
///    `RESELECT` to the best such model
/// 4. `p(ON_TRACK) < abort_floor`: `ABORT`
/// 5. otherwise `REFINE`
///
/// A model counts as used when it is in `used_models` or is `current_model`.
pub fn select_action(
    belief: &BeliefState,
    policy: &DirectorPolicy,
    ranked_models: &[String],
    attempts_left: u32,
    current_model: Option<&str>,
    used_models: &BTreeSet<String>,
) -> DirectorAction {
    if attempts_left == 0 {
        return DirectorAction::abort();
    }
    let on_track = belief.prob_of(ON_TRACK);
    if on_track >= policy.accept_threshold {
        return DirectorAction::accept();
    }
    if belief.prob_of(MODEL_MISMATCH) >= policy.reselect_threshold {
        let unused = ranked_models
            .iter()
            .find(|m| !used_models.contains(*m) && current_model != Some(m.as_str()));
        if let Some(model) = unused {
            return DirectorAction::reselect(model.clone());
        }
    }
    if on_track < policy.abort_floor {
        return DirectorAction::abort();
    }
    DirectorAction::refine()
}
