use super::{
    BeliefState, DirectorAction, FilterError, Observation, ObservationModel, Suggestion,
    TransitionModel,
};

/// One `(action, observation, suggestion)` triple: the action taken, then what was seen.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryStep {
    pub action: DirectorAction,
    pub observation: Observation,
    pub suggestion: Suggestion,
}

impl HistoryStep {
    pub fn new(action: DirectorAction, observation: Observation, suggestion: Suggestion) -> Self {
        Self {
            action,
            observation,
            suggestion,
        }
    }
}

fn check_shapes(
    belief: &BeliefState,
    om: &ObservationModel,
    tm: &TransitionModel,
) -> Result<(), FilterError> {
    let n = belief.space().len();
    for model in [om.n_states(), tm.n_states()] {
        if model != n {
            return Err(FilterError::SpaceMismatch { belief: n, model });
        }
    }
    Ok(())
}

/// Joint per-state weight `p(o^s | s) * p(o | s, a)` for one step.
fn step_likelihood(step: &HistoryStep, om: &ObservationModel) -> Result<Vec<f64>, FilterError> {
    let obs = om.observation_column(&step.observation.kind, step.action.kind)?;
    let sugg = om.suggestion_column(&step.suggestion.kind)?;
    Ok(obs.iter().zip(&sugg).map(|(o, g)| o * g).collect())
}

/// One recursive filter step: predict through the transition for `action`, weight by
/// the observation and suggestion likelihoods, normalize.
pub fn belief_update(
    belief: &BeliefState,
    action: &DirectorAction,
    obs: &Observation,
    sugg: &Suggestion,
    om: &ObservationModel,
    tm: &TransitionModel,
) -> Result<BeliefState, FilterError> {
    check_shapes(belief, om, tm)?;
    let n = belief.space().len();
    let step = HistoryStep::new(action.clone(), obs.clone(), sugg.clone());
    let likelihood = step_likelihood(&step, om)?;
    let trans = tm.matrix(action.kind)?;

    let mut posterior = vec![0.0; n];
    for (next, slot) in posterior.iter_mut().enumerate() {
        let predicted: f64 = (0..n)
            .map(|prev| trans[prev * n + next] * belief.probs()[prev])
            .sum();
        *slot = likelihood[next] * predicted;
    }
    let next_step = belief.step() + 1;
    let probs = normalize(posterior).ok_or(FilterError::DegenerateUpdate { step: next_step })?;
    Ok(BeliefState::from_normalized(
        belief.space().clone(),
        probs,
        next_step,
    ))
}

/// Posterior over the final state by explicit enumeration of every state trajectory
/// `s_0 .. s_T`, with no recursion. Cost is `|S|^(T+1)`.
pub fn brute_force_posterior(
    prior: &BeliefState,
    history: &[HistoryStep],
    om: &ObservationModel,
    tm: &TransitionModel,
) -> Result<BeliefState, FilterError> {
    if history.is_empty() {
        return Err(FilterError::EmptyHistory);
    }
    check_shapes(prior, om, tm)?;
    let n = prior.space().len();
    let horizon = history.len();

    let likelihoods = history
        .iter()
        .map(|step| step_likelihood(step, om))
        .collect::<Result<Vec<_>, _>>()?;
    let transitions = history
        .iter()
        .map(|step| tm.matrix(step.action.kind))
        .collect::<Result<Vec<_>, _>>()?;

    let mut final_mass = vec![0.0; n];
    // Odometer over trajectories: path[t] is the state at time t.
    let mut path = vec![0usize; horizon + 1];
    loop {
        let mut joint = prior.probs()[path[0]];
        for t in 1..=horizon {
            if joint == 0.0 {
                break;
            }
            let (prev, cur) = (path[t - 1], path[t]);
            joint *= transitions[t - 1][prev * n + cur] * likelihoods[t - 1][cur];
        }
        final_mass[path[horizon]] += joint;

        let mut digit = 0;
        loop {
            if digit > horizon {
                let step = prior.step() + horizon as u32;
                let probs = normalize(final_mass).ok_or(FilterError::DegenerateUpdate { step })?;
                return Ok(BeliefState::from_normalized(
                    prior.space().clone(),
                    probs,
                    step,
                ));
            }
            path[digit] += 1;
            if path[digit] < n {
                break;
            }
            path[digit] = 0;
            digit += 1;
        }
    }
}

fn normalize(mut weights: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    for w in &mut weights {
        *w /= total;
    }
    Some(weights)
}
