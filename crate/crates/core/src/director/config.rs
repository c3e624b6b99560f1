use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    ActionKind, Alphabet, BeliefState, DirectorPolicy, FilterError, ObservationModel, StateSpace,
    TransitionModel, DEFAULT_OBSERVATIONS, DEFAULT_SUGGESTIONS, MODEL_MISMATCH, ON_TRACK,
};

/// Key in `obs_like`, `sugg_like` and `trans` that applies to every action (or state)
/// without an explicit entry.
pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateEntry {
    Id(String),
    Labeled { id: String, label: String },
}

/// On-disk filter configuration. Tables are keyed by name; absent entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterDocument {
    pub states: Vec<StateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<BTreeMap<String, f64>>,
    pub observations: Vec<String>,
    pub suggestions: Vec<String>,
    /// action -> state -> observation -> p(o | s, a)
    pub obs_like: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    /// state -> suggestion -> p(o^s | s)
    pub sugg_like: BTreeMap<String, BTreeMap<String, f64>>,
    /// action -> previous state -> next state -> p(s' | s, a)
    pub trans: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    #[serde(default)]
    pub policy: DirectorPolicy,
}

/// Everything the Director needs: state space, prior, tables and policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub space: Arc<StateSpace>,
    pub prior: BeliefState,
    pub observation_model: ObservationModel,
    pub transition_model: TransitionModel,
    pub policy: DirectorPolicy,
}

impl FilterConfig {
    pub fn from_document(doc: &FilterDocument) -> Result<Self, FilterError> {
        let (ids, labels): (Vec<String>, Vec<String>) = doc
            .states
            .iter()
            .map(|e| match e {
                StateEntry::Id(id) => (id.clone(), id.clone()),
                StateEntry::Labeled { id, label } => (id.clone(), label.clone()),
            })
            .unzip();
        let space = Arc::new(StateSpace::new(ids, labels)?);
        for required in [ON_TRACK, MODEL_MISMATCH] {
            if space.index_of(required).is_none() {
                return Err(FilterError::InvalidSpace(format!(
                    "state space must contain {required}"
                )));
            }
        }
        let observations = Alphabet::new(doc.observations.iter().cloned())?;
        let suggestions = Alphabet::new(doc.suggestions.iter().cloned())?;

        let prior = match &doc.prior {
            None => BeliefState::uniform(space.clone()),
            Some(map) => {
                check_keys(map.keys(), |k| space.index_of(k).is_some(), "prior state")?;
                let probs = space
                    .states()
                    .iter()
                    .map(|s| map.get(s).copied().unwrap_or(0.0))
                    .collect();
                BeliefState::new(space.clone(), probs)?
            }
        };

        let (obs_actions, obs_blocks) = expand_actions(&doc.obs_like, "obs_like", |per_state| {
            state_rows(&space, per_state, "obs_like", |row| {
                dense_row(row, &observations, "observation")
            })
        })?;
        let sugg_rows = state_rows(&space, &doc.sugg_like, "sugg_like", |row| {
            dense_row(row, &suggestions, "suggestion")
        })?;
        let observation_model = ObservationModel::new(
            space.len(),
            obs_actions,
            observations,
            suggestions,
            obs_blocks,
            sugg_rows,
        )?;

        let state_alphabet = Alphabet::new(space.states().iter().cloned())?;
        let (trans_actions, trans_blocks) = expand_actions(&doc.trans, "trans", |per_state| {
            state_rows(&space, per_state, "trans", |row| {
                dense_row(row, &state_alphabet, "state")
            })
        })?;
        let transition_model = TransitionModel::new(space.len(), trans_actions, trans_blocks)?;

        doc.policy.validate()?;
        Ok(Self {
            space,
            prior,
            observation_model,
            transition_model,
            policy: doc.policy,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, FilterError> {
        let doc: FilterDocument = serde_json::from_str(text)
            .map_err(|e| FilterError::InvalidTable(format!("malformed filter config: {e}")))?;
        Self::from_document(&doc)
    }

    pub fn load(path: &Path) -> Result<Self, FilterError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            FilterError::InvalidTable(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    /// The shipped tables, as an editable document.
    pub fn default_document() -> FilterDocument {
        let states = StateSpace::default();
        let ids = states.states();
        let row = |values: [f64; 4], names: &[String]| -> BTreeMap<String, f64> {
            names.iter().cloned().zip(values).collect()
        };
        let obs_names: Vec<String> = DEFAULT_OBSERVATIONS.iter().map(|s| s.to_string()).collect();
        // Columns: COMPILE_OK, COMPILE_ERR, TESTS_PASS, TESTS_FAIL, AGENTS_PASS, AGENTS_FAIL.
        let obs_rows: [[f64; 6]; 4] = [
            [0.30, 0.05, 0.30, 0.05, 0.25, 0.05],
            [0.10, 0.35, 0.05, 0.20, 0.10, 0.20],
            [0.05, 0.50, 0.02, 0.18, 0.05, 0.20],
            [0.15, 0.10, 0.03, 0.30, 0.05, 0.37],
        ];
        let per_state_obs: BTreeMap<String, BTreeMap<String, f64>> = ids
            .iter()
            .zip(obs_rows)
            .map(|(s, r)| (s.clone(), obs_names.iter().cloned().zip(r).collect()))
            .collect();

        let sugg_names: Vec<String> = DEFAULT_SUGGESTIONS.iter().map(|s| s.to_string()).collect();
        let flat_sugg: BTreeMap<String, f64> =
            sugg_names.iter().map(|s| (s.clone(), 0.25)).collect();

        // A fresh model forgets the previous state.
        let fresh = row([0.45, 0.30, 0.15, 0.10], ids);
        let restart: BTreeMap<String, BTreeMap<String, f64>> =
            ids.iter().map(|s| (s.clone(), fresh.clone())).collect();
        let refine_rows = [
            [0.90, 0.05, 0.03, 0.02],
            [0.50, 0.40, 0.05, 0.05],
            [0.05, 0.10, 0.80, 0.05],
            [0.10, 0.10, 0.10, 0.70],
        ];
        let refine: BTreeMap<String, BTreeMap<String, f64>> = ids
            .iter()
            .zip(refine_rows)
            .map(|(s, r)| (s.clone(), row(r, ids)))
            .collect();
        let identity: BTreeMap<String, BTreeMap<String, f64>> = ids
            .iter()
            .map(|s| (s.clone(), BTreeMap::from([(s.clone(), 1.0)])))
            .collect();

        FilterDocument {
            states: ids
                .iter()
                .zip(states.labels())
                .map(|(id, label)| StateEntry::Labeled {
                    id: id.clone(),
                    label: label.clone(),
                })
                .collect(),
            prior: Some(row([0.40, 0.30, 0.20, 0.10], ids)),
            observations: obs_names,
            suggestions: sugg_names,
            obs_like: BTreeMap::from([(WILDCARD.to_string(), per_state_obs)]),
            sugg_like: BTreeMap::from([(WILDCARD.to_string(), flat_sugg)]),
            trans: BTreeMap::from([
                (ActionKind::SelectModel.as_str().to_string(), restart.clone()),
                (ActionKind::Reselect.as_str().to_string(), restart),
                (ActionKind::Refine.as_str().to_string(), refine),
                (WILDCARD.to_string(), identity),
            ]),
            policy: DirectorPolicy::default(),
        }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self::from_document(&Self::default_document()).expect("default filter config is valid")
    }
}

fn check_keys<'a>(
    keys: impl Iterator<Item = &'a String>,
    known: impl Fn(&str) -> bool,
    what: &str,
) -> Result<(), FilterError> {
    for k in keys {
        if k != WILDCARD && !known(k) {
            return Err(FilterError::InvalidTable(format!("unknown {what} `{k}`")));
        }
    }
    Ok(())
}

/// Resolves an action-keyed table into explicit blocks; `*` fills every action kind
/// that has no entry of its own.
fn expand_actions<T, B>(
    table: &BTreeMap<String, T>,
    what: &str,
    mut build: impl FnMut(&T) -> Result<B, FilterError>,
) -> Result<(Vec<ActionKind>, Vec<B>), FilterError> {
    check_keys(table.keys(), |k| ActionKind::parse(k).is_some(), &format!("{what} action"))?;
    let mut actions = Vec::new();
    let mut blocks = Vec::new();
    for kind in ActionKind::ALL {
        let entry = table.get(kind.as_str()).or_else(|| table.get(WILDCARD));
        if let Some(entry) = entry {
            actions.push(kind);
            blocks.push(build(entry)?);
        }
    }
    if actions.is_empty() {
        return Err(FilterError::InvalidTable(format!("{what} is empty")));
    }
    Ok((actions, blocks))
}

fn state_rows<T>(
    space: &StateSpace,
    per_state: &BTreeMap<String, T>,
    what: &str,
    mut build: impl FnMut(&T) -> Result<Vec<f64>, FilterError>,
) -> Result<Vec<Vec<f64>>, FilterError> {
    check_keys(per_state.keys(), |k| space.index_of(k).is_some(), &format!("{what} state"))?;
    space
        .states()
        .iter()
        .map(|s| {
            let entry = per_state
                .get(s)
                .or_else(|| per_state.get(WILDCARD))
                .ok_or_else(|| FilterError::InvalidTable(format!("{what}: no row for {s}")))?;
            build(entry)
        })
        .collect()
}

fn dense_row(
    row: &BTreeMap<String, f64>,
    alphabet: &Alphabet,
    what: &str,
) -> Result<Vec<f64>, FilterError> {
    for k in row.keys() {
        if alphabet.index_of(k).is_none() {
            return Err(FilterError::InvalidTable(format!("unknown {what} `{k}`")));
        }
    }
    Ok(alphabet
        .symbols()
        .iter()
        .map(|s| row.get(s).copied().unwrap_or(0.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::director::{
        belief_update, select_action, DirectorAction, Observation, Suggestion, AGENTS_PASS,
        COMPILE_ERR,
    };
    use std::collections::BTreeSet;

    #[test]
    fn default_document_round_trips_through_json() {
        let doc = FilterConfig::default_document();
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let back = FilterConfig::from_json(&text).unwrap();
        assert_eq!(back, FilterConfig::default());
    }

    #[test]
    fn rejects_non_stochastic_rows_and_unknown_names() {
        let mut doc = FilterConfig::default_document();
        doc.sugg_like
            .get_mut(WILDCARD)
            .unwrap()
            .insert("KEEP".into(), 0.9);
        assert!(FilterConfig::from_document(&doc).is_err());

        let mut doc = FilterConfig::default_document();
        doc.trans.insert("JUMP".into(), BTreeMap::new());
        assert!(FilterConfig::from_document(&doc).is_err());

        let mut doc = FilterConfig::default_document();
        doc.policy.abort_floor = 0.0;
        assert!(FilterConfig::from_document(&doc).is_err());
    }

    #[test]
    fn default_tables_trace_refine_reselect_accept() {
        // Hand trace (see README): two compile errors then an agent pass with a new model.
        let cfg = FilterConfig::default();
        let ranked: Vec<String> = vec!["m1".into(), "m2".into()];
        let mut used = BTreeSet::from(["m1".to_string()]);
        let (om, tm) = (&cfg.observation_model, &cfg.transition_model);

        let b1 = belief_update(
            &cfg.prior,
            &DirectorAction::select_model("m1"),
            &Observation::new(COMPILE_ERR),
            &Suggestion::none(),
            om,
            tm,
        )
        .unwrap();
        // (0.0225, 0.105, 0.075, 0.01) / 0.2125
        assert!((b1.probs()[0] - 0.0225 / 0.2125).abs() < 1e-12);
        let a1 = select_action(&b1, &cfg.policy, &ranked, 4, Some("m1"), &used);
        assert_eq!(a1, DirectorAction::refine());

        let b2 = belief_update(&b1, &a1, &Observation::new(COMPILE_ERR), &Suggestion::none(), om, tm)
            .unwrap();
        let a2 = select_action(&b2, &cfg.policy, &ranked, 3, Some("m1"), &used);
        assert_eq!(a2, DirectorAction::reselect("m2"));
        used.insert("m2".into());

        let b3 = belief_update(&b2, &a2, &Observation::new(AGENTS_PASS), &Suggestion::none(), om, tm)
            .unwrap();
        // (0.1125, 0.03, 0.0075, 0.005) / 0.155
        assert!((b3.probs()[0] - 0.1125 / 0.155).abs() < 1e-12);
        assert_eq!(
            select_action(&b3, &cfg.policy, &ranked, 2, Some("m2"), &used),
            DirectorAction::accept()
        );
    }
}
