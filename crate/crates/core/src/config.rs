//! Engine configuration file: one JSON document pointing at the registry, filter,
//! toolchains, backends and agent resources. Relative paths resolve against the
//! directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{AgentError, AgentKind, ConceptDef, ConceptVocabulary, FactBase, LintRules};
use crate::compiler::{CompilerError, ProcessGarden, ToolchainConfig};
use crate::director::{DirectorPolicy, FilterConfig, FilterError};
use crate::gateway::{BackendPool, BackendSpec, ScenarioError, ScenarioTask, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::lang::LanguageSet;
use crate::pipeline::{pair_key, Convergence, EngineDeps, TranslationTask, DEFAULT_MAX_ATTEMPTS};
use crate::prompt::{load_few_shots, PromptError, PromptTemplate, DEFAULT_SHOT_CAP};
use crate::registry::{load_registry, RegistryContext, RegistryError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Toolchain(#[from] CompilerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<PathBuf>,
}

fn default_agents() -> Vec<AgentKind> {
    vec![
        AgentKind::Explainer,
        AgentKind::FactChecker,
        AgentKind::ConceptVerifier,
        AgentKind::ArtifactLinter,
    ]
}

fn default_shot_cap() -> usize {
    DEFAULT_SHOT_CAP
}

fn default_max_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

fn default_workers() -> usize {
    4
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub registry: PathBuf,
    /// Accepted language ids; defaults to the built-in set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub languages: Option<Vec<String>>,
    /// Filter tables; the built-in tables when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<PathBuf>,
    /// Replaces the filter document's policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<DirectorPolicy>,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendSpec>,
    /// Target language -> toolchain file.
    #[serde(default)]
    pub toolchains: BTreeMap<String, PathBuf>,
    #[serde(default = "default_agents")]
    pub agents: Vec<AgentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_model: Option<String>,
    #[serde(default)]
    pub templates: TemplatePaths,
    /// `"src->tgt"` -> few-shot file.
    #[serde(default)]
    pub few_shots: BTreeMap<String, PathBuf>,
    #[serde(default = "default_shot_cap")]
    pub shot_cap: usize,
    /// Target language -> fact base file.
    #[serde(default)]
    pub fact_bases: BTreeMap<String, PathBuf>,
    /// `"src->tgt"` -> lint rules file.
    #[serde(default)]
    pub lint: BTreeMap<String, PathBuf>,
    /// Concept vocabulary file; the built-in vocabulary when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concepts: Option<PathBuf>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub convergence: Convergence,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub keep_artifacts: bool,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

/// A loaded, validated engine.
#[derive(Debug, Clone)]
pub struct Engine {
    pub config: EngineConfig,
    pub deps: EngineDeps,
    /// Backend specs with scenario paths resolved.
    pub backends: BTreeMap<String, BackendSpec>,
    pub path: PathBuf,
    /// sha256 over the config file and every file it references, in load order.
    pub digest: String,
}

struct Loader {
    base: PathBuf,
    hasher: Sha256,
}

impl Loader {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Resolves `p` and feeds the file's bytes into the digest.
    fn track(&mut self, p: &Path) -> Result<PathBuf, ConfigError> {
        let path = self.resolve(p);
        let bytes = std::fs::read(&path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        self.hasher.update(path.to_string_lossy().as_bytes());
        self.hasher.update(&bytes);
        Ok(path)
    }
}

fn split_pair(key: &str) -> Result<(&str, &str), ConfigError> {
    key.split_once("->")
        .filter(|(s, t)| !s.is_empty() && !t.is_empty())
        .ok_or_else(|| ConfigError::Invalid(format!("`{key}` is not a `src->tgt` pair")))
}

impl Engine {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: EngineConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let mut loader = Loader {
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            hasher: Sha256::new(),
        };
        loader.hasher.update(text.as_bytes());
        Self::build(config, path, &mut loader)
    }

    fn build(config: EngineConfig, path: &Path, loader: &mut Loader) -> Result<Self, ConfigError> {
        if config.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if config.max_attempts == 0 {
            return Err(ConfigError::Invalid("max_attempts must be at least 1".into()));
        }

        let backends: BTreeMap<String, BackendSpec> = config
            .backends
            .iter()
            .map(|(name, spec)| {
                let spec = match spec {
                    BackendSpec::Scripted { scenario } => BackendSpec::Scripted {
                        scenario: loader.resolve(scenario),
                    },
                    other => other.clone(),
                };
                (name.clone(), spec)
            })
            .collect();

        let languages = config
            .languages
            .as_ref()
            .map_or_else(LanguageSet::default, |l| LanguageSet::new(l.iter().cloned()));
        let ctx = RegistryContext {
            languages,
            backends: Some(backends.keys().cloned().collect()),
        };
        let registry = load_registry(&loader.track(&config.registry)?, &ctx)?;
        let mut deps = EngineDeps::new(registry);

        if let Some(p) = &config.filter {
            deps.filter = FilterConfig::load(&loader.track(p)?)?;
        }
        if let Some(policy) = config.policy {
            policy.validate()?;
            deps.filter.policy = policy;
        }

        for (lang, p) in &config.toolchains {
            let tc = ToolchainConfig::load(&loader.track(p)?)?;
            if &tc.language != lang {
                return Err(ConfigError::Invalid(format!(
                    "toolchain for `{lang}` declares language `{}`",
                    tc.language
                )));
            }
            deps.toolchains.insert(lang.clone(), tc);
        }

        if let Some(p) = &config.templates.translation {
            deps.translation_template = PromptTemplate::load(&loader.track(p)?)?;
        }
        if let Some(p) = &config.templates.refinement {
            deps.refinement_template = PromptTemplate::load(&loader.track(p)?)?;
        }
        deps.translation_template.check_translation()?;
        deps.refinement_template.check_refinement()?;

        for (key, p) in &config.few_shots {
            let (src, tgt) = split_pair(key)?;
            let shots = load_few_shots(&loader.track(p)?)?;
            if let Some(bad) = shots.iter().find(|s| s.source_lang != src || s.target_lang != tgt) {
                return Err(PromptError::ShotLanguageMismatch {
                    expected: key.clone(),
                    found: pair_key(&bad.source_lang, &bad.target_lang),
                }
                .into());
            }
            deps.few_shots.insert(key.clone(), shots);
        }
        deps.shot_cap = config.shot_cap;

        for (lang, p) in &config.fact_bases {
            let base = FactBase::load(&loader.track(p)?)?;
            if &base.language != lang {
                return Err(ConfigError::Invalid(format!(
                    "fact base for `{lang}` declares language `{}`",
                    base.language
                )));
            }
            deps.fact_bases.insert(lang.clone(), base);
        }
        for (key, p) in &config.lint {
            split_pair(key)?;
            deps.lint_rules.insert(key.clone(), LintRules::load(&loader.track(p)?)?);
        }
        if let Some(p) = &config.concepts {
            let path = loader.track(p)?;
            let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            let defs: Vec<ConceptDef> =
                serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path, source })?;
            deps.vocabulary = ConceptVocabulary(defs);
        }

        if let Some(model) = &config.agent_model {
            if deps.registry.get(model).is_none() {
                return Err(ConfigError::Invalid(format!("agent_model `{model}` is not in the registry")));
            }
        }
        deps.agents = config.agents.clone();
        deps.agent_model = config.agent_model.clone();
        deps.temperature = config.temperature;
        deps.max_tokens = config.max_tokens;

        let digest = hex::encode(loader.hasher.clone().finalize());
        Ok(Self {
            config,
            deps,
            backends,
            path: path.to_path_buf(),
            digest,
        })
    }

    /// Live backends as configured.
    pub fn backend_pool(&self) -> Result<BackendPool, ConfigError> {
        Ok(BackendPool::from_specs(&self.backends)?)
    }

    pub fn garden(&self) -> ProcessGarden {
        ProcessGarden::new(self.config.keep_artifacts)
    }

    /// A task carrying the configured attempt budget and convergence mode.
    pub fn task(&self, task_id: &str, source_lang: &str, target_lang: &str, source_code: &str) -> TranslationTask {
        let mut task = TranslationTask::new(task_id, source_lang, target_lang, source_code);
        task.max_attempts = self.config.max_attempts;
        task.convergence = self.config.convergence;
        task
    }

    /// The task a scripted scenario was written for, with its source read from disk
    /// when given by path.
    pub fn scenario_task(&self, scenario: &ScenarioTask) -> Result<TranslationTask, ConfigError> {
        let source = match (&scenario.source_code, &scenario.source_path) {
            (Some(code), _) => code.clone(),
            (None, Some(path)) => std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?,
            (None, None) => return Err(ConfigError::Invalid("scenario task has no source".into())),
        };
        let id = scenario.task_id.as_deref().unwrap_or("scenario");
        let mut task = self.task(id, &scenario.source_lang, &scenario.target_lang, &source);
        if let Some(n) = scenario.max_attempts {
            task.max_attempts = n;
        }
        Ok(task)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        std::fs::write(dir.join(name), text).unwrap();
    }

    fn fixture() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        write(
            d,
            "registry.json",
            r#"{"version":1,"models":[{"model_id":"m1","display_name":"M1","proficiency":{"python":0.9,"c":0.8},
                "context_window":8192,"backend_ref":"local"}]}"#,
        );
        write(d, "scenario.json", r#"{"default_response":"x"}"#);
        write(d, "c.json", r#"{"language":"c","compile_command":["gcc","-o","{OUT}","{IN}"]}"#);
        dir
    }

    #[test]
    fn loads_and_resolves() {
        let dir = fixture();
        write(
            dir.path(),
            "engine.json",
            r#"{"registry":"registry.json","backends":{"local":{"kind":"scripted","scenario":"scenario.json"}},
                "toolchains":{"c":"c.json"},"policy":{"accept_threshold":0.9},"max_attempts":3}"#,
        );
        let engine = Engine::load(&dir.path().join("engine.json")).unwrap();
        assert_eq!(engine.deps.filter.policy.accept_threshold, 0.9);
        assert_eq!(engine.deps.filter.policy.abort_floor, 0.05);
        assert!(engine.deps.toolchains.contains_key("c"));
        assert_eq!(engine.task("t", "python", "c", "x").max_attempts, 3);
        match &engine.backends["local"] {
            BackendSpec::Scripted { scenario } => assert!(scenario.is_absolute() || scenario.starts_with(dir.path())),
            other => panic!("{other:?}"),
        }
        engine.backend_pool().unwrap();
        assert_eq!(engine.digest.len(), 64);
    }

    #[test]
    fn digest_tracks_referenced_files() {
        let dir = fixture();
        write(dir.path(), "engine.json", r#"{"registry":"registry.json","backends":{"local":{"kind":"scripted","scenario":"s.json"}}}"#);
        let a = Engine::load(&dir.path().join("engine.json")).unwrap().digest;
        let text = std::fs::read_to_string(dir.path().join("registry.json")).unwrap();
        write(dir.path(), "registry.json", &text.replace("0.9", "0.7"));
        let b = Engine::load(&dir.path().join("engine.json")).unwrap().digest;
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = fixture();
        let load = |body: &str| {
            write(dir.path(), "engine.json", body);
            Engine::load(&dir.path().join("engine.json"))
        };
        assert!(matches!(load(r#"{"registry":"registry.json"}"#), Err(ConfigError::Registry(_))));
        assert!(matches!(load(r#"{"registry":"nope.json"}"#), Err(ConfigError::Io { .. })));
        assert!(matches!(load(r#"{"registry":"registry.json","bogus":1}"#), Err(ConfigError::Parse { .. })));
        let base = r#""registry":"registry.json","backends":{"local":{"kind":"scripted","scenario":"scenario.json"}}"#;
        assert!(matches!(load(&format!("{{{base},\"workers\":0}}")), Err(ConfigError::Invalid(_))));
        assert!(matches!(load(&format!("{{{base},\"toolchains\":{{\"cpp\":\"c.json\"}}}}")), Err(ConfigError::Invalid(_))));
        assert!(matches!(load(&format!("{{{base},\"toolchains\":{{\"c\":\"missing.json\"}}}}")), Err(ConfigError::Io { .. })));
        assert!(matches!(
            load(&format!("{{{base},\"policy\":{{\"accept_threshold\":0.01}}}}")),
            Err(ConfigError::Filter(_))
        ));
    }
}
