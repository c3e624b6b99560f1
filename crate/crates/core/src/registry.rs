//! Per-model proficiency profiles and candidate ranking.
//!
//! A [`Registry`] is an immutable value. Every mutation returns a new registry whose
//! `version` is exactly one higher than its parent, so a single writer can republish
//! snapshots while readers keep using the old one.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{self, LanguageSet};

/// Scores closer than this are ranked as ties.
pub const SCORE_TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("failed to read registry {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed registry document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid registry: {0}")]
    Validation(String),
    #[error("no model covers both {source_lang} and {target_lang}")]
    NoCandidate {
        source_lang: String,
        target_lang: String,
    },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: String,
    pub display_name: String,
    pub proficiency: BTreeMap<String, f64>,
    pub context_window: u32,
    pub backend_ref: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

impl ModelProfile {
    /// Geometric mean of the source and target proficiency, or `None` when either
    /// language is missing from the profile.
    pub fn pair_score(&self, source_lang: &str, target_lang: &str) -> Option<f64> {
        let src = self.proficiency.get(source_lang)?;
        let tgt = self.proficiency.get(target_lang)?;
        Some((src * tgt).sqrt())
    }
}

/// What a registry document is validated against.
#[derive(Debug, Clone, Default)]
pub struct RegistryContext {
    pub languages: LanguageSet,
    /// Configured gateway endpoints. `None` skips the backend check.
    pub backends: Option<BTreeSet<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryDocument {
    version: u64,
    #[serde(default)]
    models: Vec<ModelProfile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    profiles: BTreeMap<String, ModelProfile>,
    version: u64,
    source_path: Option<PathBuf>,
}

impl Registry {
    pub fn from_profiles(
        version: u64,
        profiles: Vec<ModelProfile>,
        ctx: &RegistryContext,
    ) -> Result<Self, RegistryError> {
        let mut map = BTreeMap::new();
        for profile in profiles {
            validate_profile(&profile, ctx)?;
            if map.contains_key(&profile.model_id) {
                return Err(RegistryError::Validation(format!(
                    "duplicate model_id `{}`",
                    profile.model_id
                )));
            }
            map.insert(profile.model_id.clone(), profile);
        }
        Ok(Self {
            profiles: map,
            version,
            source_path: None,
        })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelProfile> {
        self.profiles.get(model_id)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &ModelProfile> {
        self.profiles.values()
    }

    /// Models able to handle `source_lang -> target_lang`, best first.
    pub fn rank_models(
        &self,
        source_lang: &str,
        target_lang: &str,
        k: usize,
    ) -> Result<Vec<String>, RegistryError> {
        assert!(k >= 1, "rank_models requires k >= 1");
        let mut scored: Vec<(f64, &str)> = self
            .profiles
            .values()
            .filter_map(|p| {
                p.pair_score(source_lang, target_lang)
                    .map(|s| (s, p.model_id.as_str()))
            })
            .collect();
        if scored.is_empty() {
            return Err(RegistryError::NoCandidate {
                source_lang: source_lang.to_string(),
                target_lang: target_lang.to_string(),
            });
        }
        scored.sort_by(|(sa, ia), (sb, ib)| {
            if (sa - sb).abs() <= SCORE_TIE_EPSILON {
                ia.cmp(ib)
            } else {
                sb.total_cmp(sa)
            }
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(_, id)| id.to_string())
            .collect())
    }

    /// Returns a copy with one proficiency entry set.
    pub fn update_profile(
        &self,
        model_id: &str,
        lang: &str,
        score: f64,
    ) -> Result<Self, RegistryError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(RegistryError::ScoreOutOfRange(score));
        }
        let mut next = self.clone();
        let profile = next
            .profiles
            .get_mut(model_id)
            .ok_or_else(|| RegistryError::UnknownModel(model_id.to_string()))?;
        profile.proficiency.insert(lang.to_string(), score);
        next.version += 1;
        Ok(next)
    }

    /// Returns a copy with a new profile added.
    pub fn add_profile(
        &self,
        profile: ModelProfile,
        ctx: &RegistryContext,
    ) -> Result<Self, RegistryError> {
        validate_profile(&profile, ctx)?;
        if self.profiles.contains_key(&profile.model_id) {
            return Err(RegistryError::Validation(format!(
                "duplicate model_id `{}`",
                profile.model_id
            )));
        }
        let mut next = self.clone();
        next.profiles.insert(profile.model_id.clone(), profile);
        next.version += 1;
        Ok(next)
    }

    pub fn to_json(&self) -> String {
        let doc = RegistryDocument {
            version: self.version,
            models: self.profiles.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("registry serializes")
    }

    pub fn from_json(text: &str, ctx: &RegistryContext) -> Result<Self, RegistryError> {
        let doc: RegistryDocument = serde_json::from_str(text)?;
        Self::from_profiles(doc.version, doc.models, ctx)
    }
}

fn validate_profile(profile: &ModelProfile, ctx: &RegistryContext) -> Result<(), RegistryError> {
    let invalid = |msg: String| Err(RegistryError::Validation(msg));
    if profile.model_id.trim().is_empty() {
        return invalid("empty model_id".into());
    }
    if profile.context_window == 0 {
        return invalid(format!("{}: context_window must be positive", profile.model_id));
    }
    for (lang, score) in &profile.proficiency {
        if !lang::is_valid_id(lang) || !ctx.languages.contains(lang) {
            return invalid(format!("{}: unknown language `{lang}`", profile.model_id));
        }
        if !(0.0..=1.0).contains(score) || score.is_nan() {
            return invalid(format!(
                "{}: proficiency[{lang}] = {score} is outside [0, 1]",
                profile.model_id
            ));
        }
    }
    if let Some(backends) = &ctx.backends {
        if !backends.contains(&profile.backend_ref) {
            return invalid(format!(
                "{}: backend_ref `{}` is not a configured endpoint",
                profile.model_id, profile.backend_ref
            ));
        }
    }
    Ok(())
}

pub fn load_registry(path: &Path, ctx: &RegistryContext) -> Result<Registry, RegistryError> {
    let text = fs::read_to_string(path).map_err(|source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut registry = Registry::from_json(&text, ctx)?;
    registry.source_path = Some(path.to_path_buf());
    Ok(registry)
}

pub fn write_registry(registry: &Registry, path: &Path) -> Result<(), RegistryError> {
    fs::write(path, registry.to_json() + "\n").map_err(|source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(id: &str, scores: &[(&str, f64)]) -> ModelProfile {
        ModelProfile {
            model_id: id.to_string(),
            display_name: id.to_string(),
            proficiency: scores.iter().map(|(l, s)| (l.to_string(), *s)).collect(),
            context_window: 8192,
            backend_ref: "local".to_string(),
            tags: BTreeSet::new(),
        }
    }

    fn ctx() -> RegistryContext {
        RegistryContext {
            languages: LanguageSet::default(),
            backends: Some(["local".to_string()].into()),
        }
    }

    #[test]
    fn single_profile_document() {
        let text = r#"{"version": 3, "models": [{"model_id": "codegemma", "display_name": "CodeGemma",
            "proficiency": {"python": 0.8}, "context_window": 8192, "backend_ref": "local", "tags": ["code"]}]}"#;
        let reg = Registry::from_json(text, &ctx()).unwrap();
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.version(), 3);
        assert_eq!(reg.get("codegemma").unwrap().proficiency["python"], 0.8);
    }

    #[test]
    fn empty_document_is_valid() {
        let reg = Registry::from_json(r#"{"version": 1, "models": []}"#, &ctx()).unwrap();
        assert!(reg.is_empty());
    }

    #[test]
    fn rejects_out_of_range_duplicate_and_dangling() {
        let bad = Registry::from_profiles(1, vec![profile("m", &[("python", 1.3)])], &ctx());
        assert!(matches!(bad, Err(RegistryError::Validation(_))));

        let dup = Registry::from_profiles(
            1,
            vec![profile("m", &[("python", 0.3)]), profile("m", &[("c", 0.3)])],
            &ctx(),
        );
        assert!(matches!(dup, Err(RegistryError::Validation(_))));

        let mut p = profile("m", &[("python", 0.3)]);
        p.backend_ref = "nowhere".into();
        assert!(matches!(
            Registry::from_profiles(1, vec![p], &ctx()),
            Err(RegistryError::Validation(_))
        ));

        assert!(matches!(
            Registry::from_json("{\"version\": ", &ctx()),
            Err(RegistryError::Parse(_))
        ));
    }

    #[test]
    fn ranking_orders_by_geometric_mean_then_id() {
        // sqrt(0.9 * 0.4) = 0.6 = sqrt(0.6 * 0.6): a tie broken by id.
        let reg = Registry::from_profiles(
            1,
            vec![
                profile("B", &[("python", 0.6), ("c", 0.6)]),
                profile("A", &[("python", 0.9), ("c", 0.4)]),
                profile("C", &[("python", 0.5), ("c", 0.5)]),
                profile("D", &[("python", 1.0)]),
            ],
            &ctx(),
        )
        .unwrap();
        assert_eq!(reg.rank_models("python", "c", 10).unwrap(), ["A", "B", "C"]);
        assert_eq!(reg.rank_models("python", "c", 1).unwrap(), ["A"]);
        assert!(matches!(
            reg.rank_models("python", "go", 3),
            Err(RegistryError::NoCandidate { .. })
        ));
    }

    #[test]
    fn singleton_ranks_first() {
        let reg =
            Registry::from_profiles(1, vec![profile("only", &[("python", 0.1), ("c", 0.2)])], &ctx())
                .unwrap();
        assert_eq!(reg.rank_models("python", "c", 3).unwrap(), ["only"]);
    }

    #[test]
    fn update_profile_has_value_semantics() {
        let reg = Registry::from_profiles(1, vec![profile("m", &[("python", 0.5)])], &ctx()).unwrap();
        let same = reg.update_profile("m", "python", 0.5).unwrap();
        assert_eq!(same.version(), 2);
        assert_eq!(reg.version(), 1);
        let next = same.update_profile("m", "c", 0.7).unwrap();
        assert_eq!(next.version(), 3);
        assert!(same.get("m").unwrap().proficiency.get("c").is_none());
        assert!(matches!(
            reg.update_profile("x", "python", 0.5),
            Err(RegistryError::UnknownModel(_))
        ));
        assert!(matches!(
            reg.update_profile("m", "python", -0.1),
            Err(RegistryError::ScoreOutOfRange(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.json");
        let reg = Registry::from_profiles(
            7,
            vec![profile("a", &[("python", 0.25)]), profile("b", &[("go", 1.0), ("c", 0.0)])],
            &ctx(),
        )
        .unwrap();
        write_registry(&reg, &path).unwrap();
        let back = load_registry(&path, &ctx()).unwrap();
        assert_eq!(back.source_path(), Some(path.as_path()));
        assert_eq!(back.to_json(), reg.to_json());
        assert_eq!(back.version(), 7);
    }

    fn arb_registry() -> impl Strategy<Value = Registry> {
        let langs = ["python", "c", "go", "java"];
        proptest::collection::vec(
            proptest::collection::vec(proptest::option::of(0.0f64..=1.0), 4),
            0..8,
        )
        .prop_map(move |rows| {
            let profiles = rows
                .into_iter()
                .enumerate()
                .map(|(i, scores)| {
                    let entries: Vec<(&str, f64)> = langs
                        .iter()
                        .zip(scores)
                        .filter_map(|(l, s)| s.map(|s| (*l, s)))
                        .collect();
                    profile(&format!("m{i}"), &entries)
                })
                .collect();
            Registry::from_profiles(1, profiles, &ctx()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn ranking_is_totally_ordered(reg in arb_registry(), k in 1usize..10) {
            if let Ok(ranked) = reg.rank_models("python", "c", k) {
                prop_assert!(ranked.len() <= k);
                let scores: Vec<f64> = ranked
                    .iter()
                    .map(|id| reg.get(id).unwrap().pair_score("python", "c").unwrap())
                    .collect();
                for i in 1..ranked.len() {
                    let tie = (scores[i - 1] - scores[i]).abs() <= SCORE_TIE_EPSILON;
                    prop_assert!(
                        (!tie && scores[i - 1] > scores[i]) || (tie && ranked[i - 1] < ranked[i])
                    );
                }
            } else {
                prop_assert!(reg.profiles().all(|p| p.pair_score("python", "c").is_none()));
            }
        }

        #[test]
        fn json_round_trip(reg in arb_registry()) {
            let back = Registry::from_json(&reg.to_json(), &ctx()).unwrap();
            prop_assert_eq!(back, reg);
        }
    }
}
