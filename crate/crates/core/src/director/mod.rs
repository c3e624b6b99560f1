//! State estimation and action selection for the Director.
//!
//! The Director tracks a discrete belief over latent translation-quality states. After
//! every attempt it folds in one observation (compile/test/agent signal) and one
//! advisory suggestion, then picks the next action with a fixed threshold cascade.

mod config;
mod filter;
mod policy;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{FilterConfig, FilterDocument};
pub use filter::{belief_update, brute_force_posterior, HistoryStep};
pub use policy::{select_action, DirectorPolicy};

pub const ON_TRACK: &str = "ON_TRACK";
pub const MINOR_DEFECTS: &str = "MINOR_DEFECTS";
pub const MODEL_MISMATCH: &str = "MODEL_MISMATCH";
pub const SEMANTIC_DRIFT: &str = "SEMANTIC_DRIFT";

pub const COMPILE_OK: &str = "COMPILE_OK";
pub const COMPILE_ERR: &str = "COMPILE_ERR";
pub const TESTS_PASS: &str = "TESTS_PASS";
pub const TESTS_FAIL: &str = "TESTS_FAIL";
pub const AGENTS_PASS: &str = "AGENTS_PASS";
pub const AGENTS_FAIL: &str = "AGENTS_FAIL";

pub const DEFAULT_OBSERVATIONS: [&str; 6] = [
    COMPILE_OK,
    COMPILE_ERR,
    TESTS_PASS,
    TESTS_FAIL,
    AGENTS_PASS,
    AGENTS_FAIL,
];
pub const DEFAULT_SUGGESTIONS: [&str; 4] = ["KEEP", "SWITCH", "SIMPLIFY", "NONE"];
pub const NO_SUGGESTION: &str = "NONE";

/// Simplex tolerance for probability vectors produced by the filter.
pub const BELIEF_TOLERANCE: f64 = 1e-12;
/// Simplex tolerance for configured likelihood and transition tables.
pub const TABLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("degenerate update at step {step}: observation is impossible under every state")]
    DegenerateUpdate { step: u32 },
    #[error("unknown {what} `{symbol}`")]
    UnknownSymbol { what: &'static str, symbol: String },
    #[error("belief and model disagree on the state space ({belief} vs {model} states)")]
    SpaceMismatch { belief: usize, model: usize },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("invalid state space: {0}")]
    InvalidSpace(String),
    #[error("history is empty")]
    EmptyHistory,
}

/// Ordered, finite set of latent states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    states: Vec<String>,
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(states: Vec<String>, labels: Vec<String>) -> Result<Self, FilterError> {
        if states.is_empty() {
            return Err(FilterError::InvalidSpace("no states".into()));
        }
        if labels.len() != states.len() {
            return Err(FilterError::InvalidSpace(
                "labels must align with states".into(),
            ));
        }
        for (i, s) in states.iter().enumerate() {
            if states[..i].contains(s) {
                return Err(FilterError::InvalidSpace(format!("duplicate state `{s}`")));
            }
        }
        Ok(Self { states, labels })
    }

    /// A space whose labels equal its ids.
    pub fn unlabeled<I: IntoIterator<Item = S>, S: Into<String>>(
        states: I,
    ) -> Result<Self, FilterError> {
        let states: Vec<String> = states.into_iter().map(Into::into).collect();
        let labels = states.clone();
        Self::new(states, labels)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl Default for StateSpace {
    fn default() -> Self {
        Self::new(
            vec![
                ON_TRACK.into(),
                MINOR_DEFECTS.into(),
                MODEL_MISMATCH.into(),
                SEMANTIC_DRIFT.into(),
            ],
            vec![
                "translation is converging".into(),
                "fixable defects remain".into(),
                "current model is unsuited to the pair".into(),
                "translation drifted from source semantics".into(),
            ],
        )
        .expect("default space is valid")
    }
}

/// Probability distribution over a [`StateSpace`] at filter step `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    space: Arc<StateSpace>,
    probs: Vec<f64>,
    step: u32,
}

impl BeliefState {
    /// Builds a belief from a probability vector that sums to one within
    /// [`TABLE_TOLERANCE`]; the stored vector is renormalized.
    pub fn new(space: Arc<StateSpace>, probs: Vec<f64>) -> Result<Self, FilterError> {
        Self::at_step(space, probs, 0)
    }

    pub fn at_step(
        space: Arc<StateSpace>,
        probs: Vec<f64>,
        step: u32,
    ) -> Result<Self, FilterError> {
        if probs.len() != space.len() {
            return Err(FilterError::InvalidBelief(format!(
                "{} probabilities for {} states",
                probs.len(),
                space.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(FilterError::InvalidBelief(
                "entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > TABLE_TOLERANCE {
            return Err(FilterError::InvalidBelief(format!("entries sum to {total}")));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(Self { space, probs, step })
    }

    pub fn uniform(space: Arc<StateSpace>) -> Self {
        let n = space.len();
        Self {
            space,
            probs: vec![1.0 / n as f64; n],
            step: 0,
        }
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    /// Probability of the named state; zero when the space lacks it.
    pub fn prob_of(&self, state: &str) -> f64 {
        self.space.index_of(state).map_or(0.0, |i| self.probs[i])
    }

    pub(crate) fn from_normalized(space: Arc<StateSpace>, probs: Vec<f64>, step: u32) -> Self {
        Self { space, probs, step }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    SelectModel,
    Refine,
    Reselect,
    Accept,
    Abort,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::SelectModel,
        ActionKind::Refine,
        ActionKind::Reselect,
        ActionKind::Accept,
        ActionKind::Abort,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::SelectModel => "SELECT_MODEL",
            ActionKind::Refine => "REFINE",
            ActionKind::Reselect => "RESELECT",
            ActionKind::Accept => "ACCEPT",
            ActionKind::Abort => "ABORT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn needs_model(self) -> bool {
        matches!(self, ActionKind::SelectModel | ActionKind::Reselect)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAction")]
pub struct DirectorAction {
    pub kind: ActionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

#[derive(Deserialize)]
struct RawAction {
    kind: ActionKind,
    #[serde(default)]
    model_id: Option<String>,
}

impl TryFrom<RawAction> for DirectorAction {
    type Error = String;

    fn try_from(raw: RawAction) -> Result<Self, Self::Error> {
        if raw.kind.needs_model() != raw.model_id.is_some() {
            return Err(format!("{} and model_id presence disagree", raw.kind));
        }
        Ok(Self {
            kind: raw.kind,
            model_id: raw.model_id,
        })
    }
}

impl DirectorAction {
    pub fn select_model(model_id: impl Into<String>) -> Self {
        Self {
            kind: ActionKind::SelectModel,
            model_id: Some(model_id.into()),
        }
    }

    pub fn reselect(model_id: impl Into<String>) -> Self {
        Self {
            kind: ActionKind::Reselect,
            model_id: Some(model_id.into()),
        }
    }

    pub fn refine() -> Self {
        Self::bare(ActionKind::Refine)
    }

    pub fn accept() -> Self {
        Self::bare(ActionKind::Accept)
    }

    pub fn abort() -> Self {
        Self::bare(ActionKind::Abort)
    }

    /// An action of a kind that carries no model.
    ///
    /// # Panics
    /// If `kind` requires a model.
    pub fn bare(kind: ActionKind) -> Self {
        assert!(!kind.needs_model(), "{kind} requires a model_id");
        Self {
            kind,
            model_id: None,
        }
    }
}

impl fmt::Display for DirectorAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.model_id {
            Some(m) => write!(f, "{}({m})", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<u64>,
}

impl Observation {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            payload_ref: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub kind: String,
    pub source: String,
}

impl Suggestion {
    pub fn new(kind: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            source: source.into(),
        }
    }

    /// The neutral suggestion used when no advisory agent speaks.
    pub fn none() -> Self {
        Self::new(NO_SUGGESTION, "director")
    }
}

/// Finite ordered symbol set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet(Vec<String>);

impl Alphabet {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(symbols: I) -> Result<Self, FilterError> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(FilterError::InvalidTable("empty alphabet".into()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(FilterError::InvalidTable(format!("duplicate symbol `{s}`")));
            }
        }
        Ok(Self(symbols))
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.0.iter().position(|s| s == symbol)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.0
    }
}

fn check_simplex(row: &[f64], what: &str) -> Result<(), FilterError> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(FilterError::InvalidTable(format!(
            "{what}: entries must be finite and non-negative"
        )));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > TABLE_TOLERANCE {
        return Err(FilterError::InvalidTable(format!("{what}: sums to {total}")));
    }
    Ok(())
}

/// Observation likelihoods `p(o | s, a)` and suggestion likelihoods `p(o^s | s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    n_states: usize,
    actions: Vec<ActionKind>,
    observations: Alphabet,
    suggestions: Alphabet,
    /// `[action][state][observation]`
    obs_like: Vec<f64>,
    /// `[state][suggestion]`
    sugg_like: Vec<f64>,
}

impl ObservationModel {
    /// `obs_like[a][s]` is the distribution over `observations` in state `s` after action
    /// `actions[a]`; `sugg_like[s]` is the distribution over `suggestions` in state `s`.
    pub fn new(
        n_states: usize,
        actions: Vec<ActionKind>,
        observations: Alphabet,
        suggestions: Alphabet,
        obs_like: Vec<Vec<Vec<f64>>>,
        sugg_like: Vec<Vec<f64>>,
    ) -> Result<Self, FilterError> {
        check_actions(&actions)?;
        if obs_like.len() != actions.len() {
            return Err(FilterError::InvalidTable(
                "obs_like needs one block per action".into(),
            ));
        }
        let mut flat_obs = Vec::with_capacity(actions.len() * n_states * observations.len());
        for (a, block) in obs_like.iter().enumerate() {
            if block.len() != n_states {
                return Err(FilterError::InvalidTable(format!(
                    "obs_like[{}] needs {n_states} rows",
                    actions[a]
                )));
            }
            for (s, row) in block.iter().enumerate() {
                if row.len() != observations.len() {
                    return Err(FilterError::InvalidTable(format!(
                        "obs_like[{}][{s}] needs {} entries",
                        actions[a],
                        observations.len()
                    )));
                }
                check_simplex(row, &format!("obs_like[{}][{s}]", actions[a]))?;
                flat_obs.extend_from_slice(row);
            }
        }
        if sugg_like.len() != n_states {
            return Err(FilterError::InvalidTable(format!(
                "sugg_like needs {n_states} rows"
            )));
        }
        let mut flat_sugg = Vec::with_capacity(n_states * suggestions.len());
        for (s, row) in sugg_like.iter().enumerate() {
            if row.len() != suggestions.len() {
                return Err(FilterError::InvalidTable(format!(
                    "sugg_like[{s}] needs {} entries",
                    suggestions.len()
                )));
            }
            check_simplex(row, &format!("sugg_like[{s}]"))?;
            flat_sugg.extend_from_slice(row);
        }
        Ok(Self {
            n_states,
            actions,
            observations,
            suggestions,
            obs_like: flat_obs,
            sugg_like: flat_sugg,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn observations(&self) -> &Alphabet {
        &self.observations
    }

    pub fn suggestions(&self) -> &Alphabet {
        &self.suggestions
    }

    pub fn actions(&self) -> &[ActionKind] {
        &self.actions
    }

    fn action_index(&self, action: ActionKind) -> Result<usize, FilterError> {
        self.actions
            .iter()
            .position(|a| *a == action)
            .ok_or_else(|| FilterError::UnknownSymbol {
                what: "action",
                symbol: action.to_string(),
            })
    }

    /// `p(o | s, a)` for every state, in state order.
    pub fn observation_column(
        &self,
        obs: &str,
        action: ActionKind,
    ) -> Result<Vec<f64>, FilterError> {
        let a = self.action_index(action)?;
        let o = self
            .observations
            .index_of(obs)
            .ok_or_else(|| FilterError::UnknownSymbol {
                what: "observation",
                symbol: obs.to_string(),
            })?;
        let n_obs = self.observations.len();
        Ok((0..self.n_states)
            .map(|s| self.obs_like[(a * self.n_states + s) * n_obs + o])
            .collect())
    }

    /// `p(o^s | s)` for every state, in state order.
    pub fn suggestion_column(&self, sugg: &str) -> Result<Vec<f64>, FilterError> {
        let g = self
            .suggestions
            .index_of(sugg)
            .ok_or_else(|| FilterError::UnknownSymbol {
                what: "suggestion",
                symbol: sugg.to_string(),
            })?;
        let n = self.suggestions.len();
        Ok((0..self.n_states)
            .map(|s| self.sugg_like[s * n + g])
            .collect())
    }

    /// A copy whose column `p(obs | ., action)` is multiplied by `factor`. The result is
    /// no longer normalized over observations; it exists for sensitivity analysis.
    pub fn with_scaled_observation(
        &self,
        obs: &str,
        action: ActionKind,
        factor: f64,
    ) -> Result<Self, FilterError> {
        let a = self.action_index(action)?;
        let o = self
            .observations
            .index_of(obs)
            .ok_or_else(|| FilterError::UnknownSymbol {
                what: "observation",
                symbol: obs.to_string(),
            })?;
        let mut next = self.clone();
        let n_obs = self.observations.len();
        for s in 0..self.n_states {
            next.obs_like[(a * self.n_states + s) * n_obs + o] *= factor;
        }
        Ok(next)
    }
}

/// State transitions `p(s' | s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    n_states: usize,
    actions: Vec<ActionKind>,
    /// `[action][previous][next]`
    trans: Vec<f64>,
}

impl TransitionModel {
    /// `trans[a][prev]` is the distribution over next states after `actions[a]`.
    pub fn new(
        n_states: usize,
        actions: Vec<ActionKind>,
        trans: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, FilterError> {
        check_actions(&actions)?;
        if trans.len() != actions.len() {
            return Err(FilterError::InvalidTable(
                "trans needs one block per action".into(),
            ));
        }
        let mut flat = Vec::with_capacity(actions.len() * n_states * n_states);
        for (a, block) in trans.iter().enumerate() {
            if block.len() != n_states {
                return Err(FilterError::InvalidTable(format!(
                    "trans[{}] needs {n_states} rows",
                    actions[a]
                )));
            }
            for (s, row) in block.iter().enumerate() {
                if row.len() != n_states {
                    return Err(FilterError::InvalidTable(format!(
                        "trans[{}][{s}] needs {n_states} entries",
                        actions[a]
                    )));
                }
                check_simplex(row, &format!("trans[{}][{s}]", actions[a]))?;
                flat.extend_from_slice(row);
            }
        }
        Ok(Self {
            n_states,
            actions,
            trans: flat,
        })
    }

    /// Identity transitions for every listed action.
    pub fn identity(n_states: usize, actions: Vec<ActionKind>) -> Result<Self, FilterError> {
        let block: Vec<Vec<f64>> = (0..n_states)
            .map(|i| (0..n_states).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let trans = actions.iter().map(|_| block.clone()).collect();
        Self::new(n_states, actions, trans)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn actions(&self) -> &[ActionKind] {
        &self.actions
    }

    /// `p(next | prev, action)` as a row-major matrix `[prev][next]`.
    pub fn matrix(&self, action: ActionKind) -> Result<&[f64], FilterError> {
        let a = self
            .actions
            .iter()
            .position(|k| *k == action)
            .ok_or_else(|| FilterError::UnknownSymbol {
                what: "action",
                symbol: action.to_string(),
            })?;
        let n2 = self.n_states * self.n_states;
        Ok(&self.trans[a * n2..(a + 1) * n2])
    }
}

fn check_actions(actions: &[ActionKind]) -> Result<(), FilterError> {
    if actions.is_empty() {
        return Err(FilterError::InvalidTable("no actions".into()));
    }
    for (i, a) in actions.iter().enumerate() {
        if actions[..i].contains(a) {
            return Err(FilterError::InvalidTable(format!("duplicate action {a}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_model_presence_is_enforced_on_parse() {
        let ok: DirectorAction =
            serde_json::from_str(r#"{"kind":"RESELECT","model_id":"starcoder2"}"#).unwrap();
        assert_eq!(ok, DirectorAction::reselect("starcoder2"));
        assert!(serde_json::from_str::<DirectorAction>(r#"{"kind":"RESELECT"}"#).is_err());
        assert!(
            serde_json::from_str::<DirectorAction>(r#"{"kind":"ACCEPT","model_id":"x"}"#).is_err()
        );
        assert_eq!(
            serde_json::to_string(&DirectorAction::refine()).unwrap(),
            r#"{"kind":"REFINE"}"#
        );
    }

    #[test]
    fn state_space_rejects_duplicates_and_empty() {
        assert!(StateSpace::unlabeled(Vec::<String>::new()).is_err());
        assert!(StateSpace::unlabeled(["a", "a"]).is_err());
        assert_eq!(StateSpace::default().len(), 4);
    }

    #[test]
    fn belief_requires_simplex() {
        let space = Arc::new(StateSpace::unlabeled(["a", "b"]).unwrap());
        assert!(BeliefState::new(space.clone(), vec![0.6, 0.6]).is_err());
        assert!(BeliefState::new(space.clone(), vec![-0.5, 1.5]).is_err());
        assert!(BeliefState::new(space.clone(), vec![1.0]).is_err());
        let b = BeliefState::new(space, vec![0.25, 0.75]).unwrap();
        assert_eq!(b.prob_of("b"), 0.75);
        assert_eq!(b.prob_of("zzz"), 0.0);
    }

    #[test]
    fn tables_must_be_stochastic() {
        let obs = Alphabet::new(["x", "y"]).unwrap();
        let sugg = Alphabet::new(["NONE"]).unwrap();
        let bad = ObservationModel::new(
            1,
            vec![ActionKind::Refine],
            obs.clone(),
            sugg.clone(),
            vec![vec![vec![0.5, 0.6]]],
            vec![vec![1.0]],
        );
        assert!(matches!(bad, Err(FilterError::InvalidTable(_))));
        let good = ObservationModel::new(
            1,
            vec![ActionKind::Refine],
            obs,
            sugg,
            vec![vec![vec![0.4, 0.6]]],
            vec![vec![1.0]],
        );
        assert!(good.is_ok());
        assert!(TransitionModel::new(2, vec![ActionKind::Refine], vec![vec![
            vec![1.0, 0.0],
            vec![0.3, 0.3]
        ]])
        .is_err());
    }
}
