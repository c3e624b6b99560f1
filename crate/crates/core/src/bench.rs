//! Benchmark harness: runs a manifest of translation tasks and tallies success rates
//! and similarity scores per language pair.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Engine;
use crate::gateway::BackendPool;
use crate::lang::LanguageId;
use crate::metrics::{codebleu_lite, CodeBleuWeights, Percent};
use crate::pipeline::{
    pair_key, read_ledger, translate, EventBody, Ledger, LiveWorkbench, OutcomeStatus, TranslationOutcome,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid manifest: {0}")]
    Validation(String),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub entry_id: String,
    pub source_lang: LanguageId,
    pub target_lang: LanguageId,
    pub source_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests_path: Option<PathBuf>,
}

impl ManifestEntry {
    pub fn pair(&self) -> String {
        pair_key(&self.source_lang, &self.target_lang)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkManifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
}

impl BenchmarkManifest {
    /// Parses a manifest, resolves relative paths against its directory and checks that
    /// ids are unique and every referenced file exists.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: Self = serde_json::from_str(&text).map_err(|source| BenchError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for entry in &mut manifest.entries {
            let resolve = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            resolve(&mut entry.source_path);
            entry.reference_path.as_mut().map(resolve);
            entry.tests_path.as_mut().map(resolve);
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let invalid = |m: String| Err(BenchError::Validation(m));
        if self.entries.is_empty() {
            return invalid("manifest has no entries".into());
        }
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if e.entry_id.trim().is_empty() {
                return invalid("empty entry_id".into());
            }
            if !ids.insert(e.entry_id.as_str()) {
                return invalid(format!("duplicate entry_id `{}`", e.entry_id));
            }
            if e.entry_id.contains(['/', '\\']) {
                return invalid(format!("entry_id `{}` must not contain path separators", e.entry_id));
            }
            if e.source_lang == e.target_lang {
                return invalid(format!("`{}`: source and target language are the same", e.entry_id));
            }
            let files = std::iter::once(&e.source_path)
                .chain(e.reference_path.as_ref())
                .chain(e.tests_path.as_ref());
            for f in files {
                if !f.is_file() {
                    return invalid(format!("`{}`: missing file {}", e.entry_id, f.display()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub attempted: u64,
    pub succeeded: u64,
    pub success_rate: Percent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_codebleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub attempted: u64,
    pub succeeded: u64,
    pub success_rate: Percent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryResult {
    pub entry_id: String,
    pub pair: String,
    pub status: OutcomeStatus,
    pub attempts_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebleu: Option<f64>,
    pub ledger: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub name: String,
    /// Keyed by `src->tgt`.
    pub per_pair: BTreeMap<String, PairStats>,
    pub totals: Totals,
    pub config_digest: String,
    pub entries: Vec<EntryResult>,
}

impl BenchmarkReport {
    /// Plain-text table with one row per language pair.
    pub fn summary_table(&self) -> String {
        let width = self.per_pair.keys().map(String::len).max().unwrap_or(0).max("Language".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>7}  {:>8}  {:>8}", "Language", "Samples", "Success", "CodeBLEU");
        for (pair, s) in &self.per_pair {
            let cb = s.mean_codebleu.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(out, "{pair:<width$}  {:>7}  {:>8}  {:>8}", s.attempted, s.success_rate.to_string(), cb);
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>8}",
            "Total",
            self.totals.attempted,
            self.totals.success_rate.to_string()
        );
        out
    }

    /// Number of ledgers among `entries` that end in TASK_DONE.
    pub fn count_done_events(&self) -> Result<u64, crate::pipeline::LedgerError> {
        let mut done = 0;
        for e in &self.entries {
            let events = read_ledger(&e.ledger)?;
            done += events.iter().filter(|ev| matches!(ev.body, EventBody::TaskDone(_))).count() as u64;
        }
        Ok(done)
    }
}

fn infra(task_id: &str, reason: String) -> TranslationOutcome {
    TranslationOutcome {
        task_id: task_id.to_string(),
        status: OutcomeStatus::FailedInfra,
        final_code: None,
        attempts_used: 0,
        model_id: None,
        reason: Some(reason),
        ledger_path: None,
    }
}

fn run_entry(entry: &ManifestEntry, engine: &Engine, pool: &BackendPool, ledger_path: &Path) -> TranslationOutcome {
    let source = match std::fs::read_to_string(&entry.source_path) {
        Ok(s) => s,
        Err(e) => return infra(&entry.entry_id, format!("cannot read {}: {e}", entry.source_path.display())),
    };
    let task = engine.task(&entry.entry_id, &entry.source_lang, &entry.target_lang, &source);
    let mut ledger = match Ledger::create(&task.task_id, ledger_path) {
        Ok(l) => l,
        Err(e) => return infra(&entry.entry_id, e.to_string()),
    };
    let garden = engine.garden();
    let mut bench = LiveWorkbench::new(&engine.deps.registry, pool.instantiate(), &garden);
    match translate(&task, &engine.deps, &mut bench, &mut ledger) {
        Ok(outcome) => outcome,
        Err(e) => {
            tracing::warn!(entry = %entry.entry_id, error = %e, "entry aborted");
            infra(&entry.entry_id, e.to_string())
        }
    }
}

fn score(entry: &ManifestEntry, outcome: &TranslationOutcome) -> Option<f64> {
    let (Some(reference), Some(code)) = (&entry.reference_path, &outcome.final_code) else {
        return None;
    };
    let reference = std::fs::read_to_string(reference).ok()?;
    match codebleu_lite(code, &reference, &entry.target_lang, CodeBleuWeights::default()) {
        Ok(s) => Some(s.total),
        Err(e) => {
            tracing::warn!(entry = %entry.entry_id, error = %e, "codebleu skipped");
            None
        }
    }
}

/// Runs every entry on a pool of `workers` threads, writes one ledger per entry under
/// `out_dir/ledgers` and the report to `out_dir/report.json`.
pub fn run_benchmark(
    manifest: &BenchmarkManifest,
    engine: &Engine,
    pool: &BackendPool,
    out_dir: &Path,
    workers: usize,
) -> Result<BenchmarkReport, BenchError> {
    manifest.validate()?;
    if workers == 0 {
        return Err(BenchError::Validation("workers must be at least 1".into()));
    }
    let ledgers = out_dir.join("ledgers");
    std::fs::create_dir_all(&ledgers).map_err(|source| BenchError::Io {
        path: ledgers.clone(),
        source,
    })?;
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let results: Vec<EntryResult> = threads.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|entry| {
                let ledger = ledgers.join(format!("{}.jsonl", entry.entry_id));
                let outcome = run_entry(entry, engine, pool, &ledger);
                tracing::info!(entry = %entry.entry_id, status = outcome.status.as_str(), "entry finished");
                EntryResult {
                    entry_id: entry.entry_id.clone(),
                    pair: entry.pair(),
                    status: outcome.status,
                    attempts_used: outcome.attempts_used,
                    codebleu: score(entry, &outcome),
                    model_id: outcome.model_id,
                    reason: outcome.reason,
                    ledger,
                }
            })
            .collect()
    });

    let report = assemble(&manifest.name, &engine.digest, results);
    let path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&path, json + "\n").map_err(|source| BenchError::Io { path, source })?;
    Ok(report)
}

fn assemble(name: &str, digest: &str, entries: Vec<EntryResult>) -> BenchmarkReport {
    #[derive(Default)]
    struct Acc {
        attempted: u64,
        succeeded: u64,
        scores: Vec<f64>,
    }
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    for e in &entries {
        let a = acc.entry(e.pair.clone()).or_default();
        a.attempted += 1;
        a.succeeded += u64::from(e.status == OutcomeStatus::Success);
        a.scores.extend(e.codebleu);
    }
    let per_pair = acc
        .into_iter()
        .map(|(pair, a)| {
            let mean = (!a.scores.is_empty()).then(|| a.scores.iter().sum::<f64>() / a.scores.len() as f64);
            let stats = PairStats {
                attempted: a.attempted,
                succeeded: a.succeeded,
                success_rate: Percent::ratio(a.succeeded, a.attempted).expect("pair has entries"),
                mean_codebleu: mean,
            };
            (pair, stats)
        })
        .collect::<BTreeMap<_, _>>();
    let attempted = entries.len() as u64;
    let succeeded = entries.iter().filter(|e| e.status == OutcomeStatus::Success).count() as u64;
    BenchmarkReport {
        name: name.to_string(),
        per_pair,
        totals: Totals {
            attempted,
            succeeded,
            success_rate: Percent::ratio(succeeded, attempted.max(1)).expect("non-zero"),
        },
        config_digest: digest.to_string(),
        entries,
    }
}
