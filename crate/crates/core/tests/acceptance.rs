//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use quorum_core::agents::{lint_translation, nli_check, Claim, ClaimLabel, FactBase, HintKind, LintRules, Verdict};
use quorum_core::bench::{run_benchmark, BenchmarkManifest};
use quorum_core::compiler::{
    parse_diagnostics, CompileResult, CompileStatus, CompilerGarden, Diagnostic, ProcessGarden, Severity, TestReport,
    TestStatus, ToolchainConfig,
};
use quorum_core::config::Engine;
use quorum_core::director::{
    belief_update, brute_force_posterior, ActionKind, Alphabet, BeliefState, DirectorAction, FilterConfig,
    HistoryStep, Observation, ObservationModel, StateSpace, Suggestion, TransitionModel,
};
use quorum_core::gateway::{load_scenario, ChatRequest, ChatResponse, GatewayError, TokenCounts};
use quorum_core::metrics::{bleu, codebleu_lite, success_rate, CodeBleuWeights};
use quorum_core::pipeline::{
    check_events, read_ledger, replay, step, translate, Convergence, EngineDeps, EventBody, Ledger, LiveWorkbench,
    OutcomeStatus, Phase, PipelineError, PipelineEvent, PipelineState, TranslationTask, Workbench, WorkbenchError,
};
use quorum_core::registry::{ModelProfile, Registry, RegistryContext};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

// ---------------------------------------------------------------------------
// Random filter configurations

const ACTIONS: [ActionKind; 5] = [
    ActionKind::SelectModel,
    ActionKind::Refine,
    ActionKind::Reselect,
    ActionKind::Accept,
    ActionKind::Abort,
];

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

struct RandomFilter {
    prior: BeliefState,
    om: ObservationModel,
    tm: TransitionModel,
    history: Vec<HistoryStep>,
}

fn random_filter(rng: &mut ChaCha8Rng) -> RandomFilter {
    let n = rng.gen_range(2..=4);
    let n_obs = rng.gen_range(2..=4);
    let n_sugg = rng.gen_range(1..=4);
    let horizon = rng.gen_range(1..=5);
    let mut actions = ACTIONS.to_vec();
    actions.shuffle(rng);
    actions.truncate(rng.gen_range(1..=ACTIONS.len()));

    let space = Arc::new(StateSpace::unlabeled((0..n).map(|i| format!("s{i}"))).unwrap());
    let prior = BeliefState::new(space, simplex(rng, n)).unwrap();
    let obs: Vec<String> = (0..n_obs).map(|i| format!("o{i}")).collect();
    let sugg: Vec<String> = (0..n_sugg).map(|i| format!("g{i}")).collect();
    let obs_like = actions.iter().map(|_| (0..n).map(|_| simplex(rng, n_obs)).collect()).collect();
    let sugg_like = (0..n).map(|_| simplex(rng, n_sugg)).collect();
    let om = ObservationModel::new(
        n,
        actions.clone(),
        Alphabet::new(obs.clone()).unwrap(),
        Alphabet::new(sugg.clone()).unwrap(),
        obs_like,
        sugg_like,
    )
    .unwrap();
    let trans = actions.iter().map(|_| (0..n).map(|_| simplex(rng, n)).collect()).collect();
    let tm = TransitionModel::new(n, actions.clone(), trans).unwrap();
    let history = (0..horizon)
        .map(|_| {
            HistoryStep::new(
                action(*actions.choose(rng).unwrap()),
                Observation::new(obs.choose(rng).unwrap().clone()),
                Suggestion::new(sugg.choose(rng).unwrap().clone(), "oracle"),
            )
        })
        .collect();
    RandomFilter { prior, om, tm, history }
}

fn action(kind: ActionKind) -> DirectorAction {
    match kind {
        ActionKind::SelectModel => DirectorAction::select_model("m"),
        ActionKind::Reselect => DirectorAction::reselect("m"),
        other => DirectorAction::bare(other),
    }
}

fn on_simplex(b: &BeliefState) -> bool {
    let total: f64 = b.probs().iter().sum();
    (total - 1.0).abs() <= 1e-12 && b.probs().iter().all(|&p| p >= 0.0)
}

fn filter_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst = 0.0f64;
    for case in 0..500 {
        let f = random_filter(&mut rng);
        let mut belief = f.prior.clone();
        for h in &f.history {
            belief = belief_update(&belief, &h.action, &h.observation, &h.suggestion, &f.om, &f.tm)
                .map_err(|e| format!("case {case}: {e}"))?;
        }
        let oracle = brute_force_posterior(&f.prior, &f.history, &f.om, &f.tm).map_err(|e| format!("case {case}: {e}"))?;
        for (a, b) in belief.probs().iter().zip(oracle.probs()) {
            worst = worst.max((a - b).abs());
        }
        ensure(worst <= 1e-9, || format!("case {case}: deviation {worst:e}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("500 configs, max deviation {worst:.1e}, {elapsed:.2?}"))
}

fn belief_simplex() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut posteriors = 0;
    let mut worst_scale = 0.0f64;
    for case in 0..2000 {
        let f = random_filter(&mut rng);
        let mut belief = f.prior.clone();
        for h in &f.history {
            belief = belief_update(&belief, &h.action, &h.observation, &h.suggestion, &f.om, &f.tm).unwrap();
            posteriors += 1;
            ensure(on_simplex(&belief), || format!("case {case}: {:?} off the simplex", belief.probs()))?;
        }
        let oracle = brute_force_posterior(&f.prior, &f.history, &f.om, &f.tm).unwrap();
        ensure(on_simplex(&oracle), || format!("case {case}: oracle off the simplex"))?;

        // Scaling one observation column by a positive constant leaves the posterior unchanged.
        let h = &f.history[0];
        let factor = rng.gen_range(0.05..20.0);
        let scaled = f.om.with_scaled_observation(&h.observation.kind, h.action.kind, factor).unwrap();
        let plain = belief_update(&f.prior, &h.action, &h.observation, &h.suggestion, &f.om, &f.tm).unwrap();
        let rescaled = belief_update(&f.prior, &h.action, &h.observation, &h.suggestion, &scaled, &f.tm).unwrap();
        for (a, b) in plain.probs().iter().zip(rescaled.probs()) {
            worst_scale = worst_scale.max((a - b).abs());
        }
        ensure(worst_scale <= 1e-12, || format!("case {case}: scaling changed the posterior by {worst_scale:e}"))?;
    }
    Ok(format!("{posteriors} posteriors on the simplex, scaling deviation {worst_scale:.1e}"))
}

// ---------------------------------------------------------------------------
// State machine

#[derive(Clone, Copy, Debug)]
enum Ev {
    Start,
    ModelSelected,
    ResponseWithCode,
    ResponseWithoutCode,
    AgentsCompleted,
    CompileCompleted,
    BeliefUpdated,
    Action(ActionKind),
    Infra,
}

const EVENTS: [Ev; 13] = [
    Ev::Start,
    Ev::ModelSelected,
    Ev::ResponseWithCode,
    Ev::ResponseWithoutCode,
    Ev::AgentsCompleted,
    Ev::CompileCompleted,
    Ev::BeliefUpdated,
    Ev::Action(ActionKind::SelectModel),
    Ev::Action(ActionKind::Refine),
    Ev::Action(ActionKind::Reselect),
    Ev::Action(ActionKind::Accept),
    Ev::Action(ActionKind::Abort),
    Ev::Infra,
];

/// The transition table written out independently of the implementation.
fn table(phase: Phase, ev: Ev) -> Option<(Phase, u32)> {
    use Phase::*;
    match (phase, ev) {
        (Done | Failed, _) => None,
        (_, Ev::Infra) => Some((Failed, 0)),
        (Init, Ev::Start) => Some((Select, 0)),
        (Select, Ev::ModelSelected) => Some((Translate, 1)),
        (Translate, Ev::ResponseWithCode) => Some((Verify, 0)),
        (Translate, Ev::ResponseWithoutCode) => Some((Feedback, 0)),
        (Verify, Ev::AgentsCompleted) => Some((Compile, 0)),
        (Compile, Ev::CompileCompleted) => Some((Feedback, 0)),
        (Feedback, Ev::BeliefUpdated) => Some((Feedback, 0)),
        (Feedback, Ev::Action(ActionKind::Accept)) => Some((Done, 0)),
        (Feedback, Ev::Action(ActionKind::Refine)) => Some((Translate, 1)),
        (Feedback, Ev::Action(ActionKind::Reselect)) => Some((Select, 0)),
        (Feedback, Ev::Action(ActionKind::Abort)) => Some((Failed, 0)),
        _ => None,
    }
}

fn event(ev: Ev, prior: &BeliefState) -> PipelineEvent {
    match ev {
        Ev::Start => PipelineEvent::Start,
        Ev::ModelSelected => PipelineEvent::ModelSelected { model_id: "fresh".into() },
        Ev::ResponseWithCode => PipelineEvent::LlmResponse {
            code: Some("int main(void){return 0;}".into()),
            hint: None,
        },
        Ev::ResponseWithoutCode => PipelineEvent::LlmResponse { code: None, hint: None },
        Ev::AgentsCompleted => PipelineEvent::AgentsCompleted,
        Ev::CompileCompleted => PipelineEvent::CompileCompleted { hints: vec![] },
        Ev::BeliefUpdated => PipelineEvent::BeliefUpdated { belief: prior.clone() },
        Ev::Action(kind) => PipelineEvent::ActionChosen {
            action: match kind {
                ActionKind::SelectModel => DirectorAction::select_model("fresh"),
                ActionKind::Reselect => DirectorAction::reselect("fresh"),
                other => action(other),
            },
        },
        Ev::Infra => PipelineEvent::InfraFailure { reason: "x".into() },
    }
}

fn exhaustive_table() -> Result<usize, String> {
    let prior = FilterConfig::default().prior;
    let mut checked = 0;
    for phase in Phase::ALL {
        for ev in EVENTS {
            let mut state = PipelineState::new(prior.clone(), 5);
            state.phase = phase;
            state.attempt_no = 2;
            state.used_models.insert("m1".into());
            state.current_model = Some("m1".into());
            state.last_output = Some("int x;".into());
            let got = step(&state, &event(ev, &prior));
            match (table(phase, ev), got) {
                (Some((next, inc)), Ok(s)) => {
                    ensure(s.phase == next && s.attempt_no == 2 + inc, || {
                        format!("{phase} + {ev:?}: got {} attempt {}", s.phase, s.attempt_no)
                    })?;
                }
                (None, Err(_)) => {}
                (want, got) => return Err(format!("{phase} + {ev:?}: expected {want:?}, got {got:?}")),
            }
            checked += 1;
        }
    }
    // Guards: no attempt beyond the budget, no revisits, no accept without output.
    let mut s = PipelineState::new(prior.clone(), 2);
    s.phase = Phase::Feedback;
    s.attempt_no = 2;
    ensure(step(&s, &event(Ev::Action(ActionKind::Refine), &prior)).is_err(), || "refine past budget".into())?;
    ensure(step(&s, &event(Ev::Action(ActionKind::Reselect), &prior)).is_err(), || "reselect past budget".into())?;
    ensure(step(&s, &event(Ev::Action(ActionKind::Accept), &prior)).is_err(), || "accept without output".into())?;
    s.phase = Phase::Select;
    s.attempt_no = 1;
    s.used_models.insert("fresh".into());
    ensure(step(&s, &event(Ev::ModelSelected, &prior)).is_err(), || "revisited a used model".into())?;
    Ok(checked)
}

/// A workbench answering every call at random.
struct RandomBench {
    rng: ChaCha8Rng,
    toolchain: bool,
}

const GOOD_C: &str = "```c\nint main(void) {\n    return 0;\n}\n```";

impl Workbench for RandomBench {
    fn has_toolchain(&mut self, _: &ToolchainConfig) -> bool {
        self.toolchain
    }

    fn chat(&mut self, req: &ChatRequest) -> Result<ChatResponse, WorkbenchError> {
        let transcript = req.transcript();
        let roll = self.rng.gen_range(0..100);
        if roll < 3 {
            return Err(WorkbenchError::Gateway(GatewayError::Transport {
                request_id: req.request_id.clone(),
                attempts: 3,
                message: "connection reset".into(),
            }));
        }
        let content = if transcript.contains("Task: verify-concepts") {
            if roll < 70 { "VERDICT: PASS" } else { "VERDICT: FAIL\nmissing: iteration" }.to_string()
        } else if transcript.contains("Task: generate-tests") {
            "```c\nint main(void) { puts(\"PASS t\"); return 0; }\n```".to_string()
        } else if transcript.contains("Task: explain") {
            "concepts: iteration, arithmetic\nThe program loops and prints.".to_string()
        } else {
            match roll {
                0..=69 => GOOD_C.to_string(),
                70..=84 => "I cannot translate this program.".to_string(),
                _ => String::new(),
            }
        };
        Ok(ChatResponse {
            request_id: req.request_id.clone(),
            content,
            finish_reason: Default::default(),
            latency_ms: 0,
            token_counts: TokenCounts::default(),
        })
    }

    fn compile(&mut self, _: &str, _: &ToolchainConfig) -> Result<CompileResult, WorkbenchError> {
        let status = match self.rng.gen_range(0..100) {
            0..=54 => CompileStatus::Ok,
            55..=89 => CompileStatus::CompileError,
            90..=97 => CompileStatus::Timeout,
            _ => CompileStatus::ToolMissing,
        };
        let diagnostics = if status == CompileStatus::CompileError {
            vec![Diagnostic {
                severity: Severity::Error,
                file: "main.c".into(),
                line: self.rng.gen_range(1..5),
                column: 1,
                code: None,
                message: "expected ';'".into(),
            }]
        } else {
            vec![]
        };
        Ok(CompileResult {
            status,
            diagnostics,
            raw_output: String::new(),
            duration_ms: 0,
        })
    }

    fn run_tests(&mut self, _: &str, _: &str, _: &ToolchainConfig) -> Result<TestReport, WorkbenchError> {
        let (status, passed, failed) = match self.rng.gen_range(0..4) {
            0 | 1 => (TestStatus::AllPass, 3, 0),
            2 => (TestStatus::SomeFail, 2, 1),
            _ => (TestStatus::RunError, 0, 0),
        };
        Ok(TestReport {
            status,
            passed,
            failed,
            raw_output: String::new(),
        })
    }
}

fn random_deps(rng: &mut ChaCha8Rng) -> EngineDeps {
    let n_models = rng.gen_range(1..=3);
    let profiles = (0..n_models)
        .map(|i| ModelProfile {
            model_id: format!("m{i}"),
            display_name: format!("m{i}"),
            proficiency: [("python".to_string(), rng.gen_range(0.1..1.0)), ("c".to_string(), rng.gen_range(0.1..1.0))]
                .into_iter()
                .collect(),
            context_window: 8192,
            backend_ref: "local".into(),
            tags: BTreeSet::new(),
        })
        .collect();
    let registry = Registry::from_profiles(1, profiles, &RegistryContext::default()).unwrap();
    let mut deps = EngineDeps::new(registry);
    let toolchain =
        ToolchainConfig::from_json(r#"{"language":"c","compile_command":["cc","{IN}"],"run_command":["{OUT}"]}"#).unwrap();
    deps.toolchains.insert("c".into(), toolchain);
    deps
}

fn randomized_runs() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let modes = [Convergence::CompileOnly, Convergence::CompileAndAgents, Convergence::CompileAgentsTests];
    let mut tally = std::collections::BTreeMap::new();
    for run in 0..1000 {
        let deps = random_deps(&mut rng);
        let mut task = TranslationTask::new(format!("run-{run}"), "python", "c", "print(sum(range(10)))\n");
        task.max_attempts = rng.gen_range(1..=6);
        task.convergence = *modes.choose(&mut rng).unwrap();
        let mut bench = RandomBench {
            rng: ChaCha8Rng::seed_from_u64(rng.gen()),
            toolchain: rng.gen_range(0..50) != 0,
        };
        let mut ledger = Ledger::in_memory(&task.task_id);
        let outcome = translate(&task, &deps, &mut bench, &mut ledger).map_err(|e| format!("run {run}: {e}"))?;
        let events = ledger.events();
        check_events(events).map_err(|e| format!("run {run}: {e}"))?;
        let entries = events
            .iter()
            .filter(|e| match &e.body {
                EventBody::ModelSelected(_) => true,
                EventBody::ActionChosen(a) => a.action.kind == ActionKind::Refine,
                _ => false,
            })
            .count() as u32;
        ensure(outcome.attempts_used <= task.max_attempts && entries == outcome.attempts_used, || {
            format!("run {run}: {} attempts, {entries} entries, budget {}", outcome.attempts_used, task.max_attempts)
        })?;
        let terminal = &events.last().unwrap().body;
        let consistent = match outcome.status {
            OutcomeStatus::Success => {
                matches!(terminal, EventBody::TaskDone(_)) && outcome.final_code.is_some() && outcome.attempts_used >= 1
            }
            _ => matches!(terminal, EventBody::TaskFailed(_)),
        };
        ensure(consistent, || format!("run {run}: {:?} with terminal {}", outcome.status, terminal.kind()))?;
        *tally.entry(outcome.status.as_str()).or_insert(0) += 1;
    }
    let summary: Vec<String> = tally.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Ok(summary.join(" "))
}

fn state_machine_totality() -> Outcome {
    let started = Instant::now();
    let checked = exhaustive_table()?;
    let runs = randomized_runs()?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} phase/event pairs match; 1000 runs terminate ({runs}), {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------

fn deterministic_replay() -> Outcome {
    let engine = Engine::load(&root().join("demo/engine.json")).map_err(|e| e.to_string())?;
    let scenario = load_scenario(&root().join("demo/scenario.json")).map_err(|e| e.to_string())?;
    let task = engine.scenario_task(scenario.task.as_ref().unwrap()).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demo.jsonl");
    let pool = engine.backend_pool().map_err(|e| e.to_string())?;
    let garden = engine.garden();
    let mut bench = LiveWorkbench::new(&engine.deps.registry, pool.instantiate(), &garden);
    let mut ledger = Ledger::create(&task.task_id, &path).map_err(|e| e.to_string())?;
    let outcome = translate(&task, &engine.deps, &mut bench, &mut ledger).map_err(|e| e.to_string())?;
    ensure(outcome.status == OutcomeStatus::Success && outcome.attempts_used == 3, || {
        format!("demo ended {:?} after {} attempts", outcome.status, outcome.attempts_used)
    })?;
    let actions: Vec<String> = read_ledger(&path)
        .map_err(|e| e.to_string())?
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::ActionChosen(a) => Some(a.action.to_string()),
            _ => None,
        })
        .collect();
    ensure(actions == ["REFINE", "RESELECT(m2)", "ACCEPT"], || format!("actions {actions:?}"))?;

    let replayed = replay(&path, &engine.deps, true).map_err(|e| format!("verify failed: {e}"))?;
    ensure(replayed.status == outcome.status && replayed.final_code == outcome.final_code, || {
        "replay outcome differs".into()
    })?;

    let mut strict = engine.deps.clone();
    strict.filter.policy.accept_threshold = 0.99;
    match replay(&path, &strict, true) {
        Err(PipelineError::ReplayDivergence { seq, .. }) => {
            Ok(format!("SUCCESS in 3, zero divergences, threshold 0.99 diverges at seq {seq}"))
        }
        other => Err(format!("edited threshold was not detected: {other:?}")),
    }
}

fn metrics_fidelity() -> Outcome {
    let rate = success_rate((0..734).map(|i| i < 452)).map_err(|e| e.to_string())?;
    ensure(rate.tenths() == 616, || format!("734/452 gave {rate}"))?;
    let score = bleu(&["a", "b", "c", "d"], &["a", "b", "c", "d", "e"], 4);
    ensure((score - 0.7788).abs() <= 1e-4, || format!("bleu fixture gave {score}"))?;

    let mut files: Vec<PathBuf> = std::fs::read_dir(fixtures().join("codebleu"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    ensure(files.len() == 20, || format!("{} codebleu fixtures", files.len()))?;
    for f in &files {
        let lang = match f.extension().and_then(|e| e.to_str()) {
            Some("py") => "python",
            Some("c") => "c",
            Some("cpp") => "cpp",
            Some("java") => "java",
            Some("go") => "go",
            Some("sol") => "solidity",
            Some("move") => "move",
            Some("rs") => "rust",
            Some("js") => "javascript",
            other => return Err(format!("unknown fixture extension {other:?}")),
        };
        let text = std::fs::read_to_string(f).unwrap();
        let s = codebleu_lite(&text, &text, lang, CodeBleuWeights::default()).map_err(|e| e.to_string())?;
        ensure(s.total == 1.0, || format!("{}: self-score {}", f.display(), s.total))?;
    }
    Ok(format!("734/452 = {rate}, bleu fixture {score:.4}, 20 self-scores = 1.0"))
}

fn compiler_round_trip() -> Outcome {
    let garden = ProcessGarden::default();
    let dir = fixtures().join("compiler");
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap();
    let cases = [("c", "c", "gcc_bad.txt"), ("cpp", "cpp", "gpp_bad.txt"), ("python", "py", "py_bad.txt")];
    let mut exercised = Vec::new();
    for (lang, ext, captured) in cases {
        let cfg = ToolchainConfig::load(&root().join(format!("demo/toolchains/{lang}.json"))).map_err(|e| e.to_string())?;
        if !garden.has_toolchain(&cfg) {
            continue;
        }
        let good = garden.compile(&read(&format!("good.{ext}")), &cfg);
        ensure(good.status == CompileStatus::Ok && good.errors().count() == 0, || {
            format!("{lang}: good fixture gave {:?}: {}", good.status, good.raw_output)
        })?;
        let bad = garden.compile(&read(&format!("bad.{ext}")), &cfg);
        let oracle = parse_diagnostics(&read(captured), &cfg.diagnostic_format).map_err(|e| e.to_string())?;
        let want = oracle.iter().find(|d| d.severity == Severity::Error).map(|d| d.line);
        let got = bad.errors().next().map(|d| d.line);
        ensure(bad.status == CompileStatus::CompileError && got.is_some() && got == want, || {
            format!("{lang}: bad fixture gave {:?} line {got:?}, oracle {want:?}", bad.status)
        })?;
        exercised.push(lang);
    }
    ensure(exercised.len() >= 2, || format!("only {exercised:?} provisioned"))?;

    let mut cfg = ToolchainConfig::load(&root().join("demo/toolchains/c.json")).map_err(|e| e.to_string())?;
    cfg.timeout = 2.0;
    let started = Instant::now();
    let report = garden.run_tests(&read("loop.c"), "", &cfg);
    let elapsed = started.elapsed();
    ensure(report.status == TestStatus::Timeout, || format!("loop fixture gave {:?}", report.status))?;
    ensure(elapsed <= Duration::from_secs_f64(cfg.timeout) + Duration::from_secs(5), || {
        format!("timeout took {elapsed:?}")
    })?;
    Ok(format!("toolchains {exercised:?} round-trip, loop timed out in {elapsed:.2?}"))
}

#[derive(Deserialize)]
struct LabeledClaim {
    text: String,
    expected: ClaimLabel,
}

fn agent_determinism() -> Outcome {
    let dir = fixtures();
    let facts = FactBase::load(&dir.join("nli/facts.json")).map_err(|e| e.to_string())?;
    let labeled: Vec<LabeledClaim> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("nli/claims.json")).unwrap()).map_err(|e| e.to_string())?;
    let per_label = |l: ClaimLabel| labeled.iter().filter(|c| c.expected == l).count();
    ensure(
        labeled.len() == 30
            && per_label(ClaimLabel::Entailed) == 10
            && per_label(ClaimLabel::Contradicted) == 10
            && per_label(ClaimLabel::Neutral) == 10,
        || "claim fixture is not 10/10/10".into(),
    )?;
    let claims: Vec<Claim> = labeled
        .iter()
        .map(|c| Claim {
            text: c.text.clone(),
            label: ClaimLabel::Neutral,
            evidence: None,
        })
        .collect();
    let out = nli_check(&claims, &facts);
    let wrong: Vec<String> = out
        .iter()
        .zip(&labeled)
        .filter(|(got, want)| got.label != want.expected)
        .map(|(got, want)| format!("{:?} -> {:?} (want {:?})", want.text, got.label, want.expected))
        .collect();
    ensure(wrong.is_empty(), || format!("nli disagreements: {wrong:?}"))?;

    let rules = LintRules::load(&dir.join("lint/python-c.json")).map_err(|e| e.to_string())?;
    let lint = |name: &str| {
        let src = std::fs::read_to_string(dir.join(format!("lint/{name}.py"))).unwrap();
        let dst = std::fs::read_to_string(dir.join(format!("lint/{name}.c"))).unwrap();
        lint_translation(&src, &dst, "python", "c", &rules).unwrap()
    };
    let has = |v: &quorum_core::agents::AgentVerdict, k: HintKind| v.hints.iter().any(|h| h.kind == k);
    let leak = lint("leak");
    ensure(leak.verdict == Verdict::Fail && has(&leak, HintKind::SyntaxLeak), || format!("leak: {leak:?}"))?;
    let dropped = lint("dropped");
    ensure(dropped.verdict == Verdict::Fail && has(&dropped, HintKind::LogicRemoved), || {
        format!("dropped: {dropped:?}")
    })?;
    let clean = lint("clean");
    ensure(clean.verdict == Verdict::Pass && clean.hints.is_empty(), || format!("clean: {clean:?}"))?;
    Ok("30/30 claims agree; leak and dropped logic flagged, clean pair passes".into())
}

fn end_to_end_bench() -> Outcome {
    let bench = fixtures().join("bench");
    let started = Instant::now();
    let engine = Engine::load(&bench.join("engine.json")).map_err(|e| e.to_string())?;
    let manifest = BenchmarkManifest::load(&bench.join("manifest.json")).map_err(|e| e.to_string())?;
    ensure(manifest.entries.len() == 10, || format!("{} entries", manifest.entries.len()))?;
    let out = tempfile::tempdir().unwrap();
    let pool = engine.backend_pool().map_err(|e| e.to_string())?;
    let report = run_benchmark(&manifest, &engine, &pool, out.path(), engine.config.workers).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let done = report.count_done_events().map_err(|e| e.to_string())?;
    ensure(report.totals.attempted == 10, || format!("attempted {}", report.totals.attempted))?;
    ensure(done == report.totals.succeeded, || {
        format!("report says {} succeeded, ledgers hold {done} TASK_DONE", report.totals.succeeded)
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} of 10 succeeded ({}), {done} TASK_DONE events, {elapsed:.2?}",
        report.totals.succeeded, report.totals.success_rate
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("filter matches trajectory enumeration", filter_oracle_equivalence),
        ("belief stays on the simplex", belief_simplex),
        ("state machine is total", state_machine_totality),
        ("demo replays deterministically", deterministic_replay),
        ("metrics fidelity", metrics_fidelity),
        ("compiler garden round-trip", compiler_round_trip),
        ("agent garden determinism", agent_determinism),
        ("end-to-end bench", end_to_end_bench),
    ];
    // Failures are reported through the result line, not the default panic message.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
