//! The run configuration: a TOML file whose values command-line flags
//! override.
//!
//! Top-level keys name the language profile, alphabets, prior and data
//! paths; a `[train]` table holds training settings with the same names as
//! the library's `TrainConfig`. Relative paths in the file are resolved
//! against the file's directory.
//!
//! ```toml
//! language = "russian"
//! prior = "combined"
//! lm_corpus = "data/ru.txt"
//! lm_dir = "lm"
//!
//! [train]
//! restarts = 5
//! seed = 17
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use romdecipher::channel::LanguageProfile;
use romdecipher::training::TrainConfig;

use crate::failure::{Failure, Outcome};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub language: Option<String>,
    /// Replaces the profile's original-script alphabet.
    pub source_alphabet: Option<String>,
    /// Replaces the profile's Latin alphabet.
    pub latin_alphabet: Option<String>,
    /// Witten–Bell constant.
    pub k: Option<f64>,
    /// Built-in prior kind: phonetic, visual, combined, none or uniform.
    pub prior: Option<String>,
    pub prior_files: Vec<PathBuf>,
    pub lm_corpus: Option<PathBuf>,
    pub train_corpus: Option<PathBuf>,
    pub parallel: Option<PathBuf>,
    pub lm_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub train: Option<toml::Table>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Outcome<FileConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let mut config = FileConfig::parse(&text).map_err(|e| e.context(path.display()))?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Outcome<FileConfig> {
        toml::from_str(text).map_err(|e| Failure::config(e.to_string()))
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        self.prior_files.iter_mut().for_each(fix);
        for p in [
            &mut self.lm_corpus,
            &mut self.train_corpus,
            &mut self.parallel,
            &mut self.lm_dir,
            &mut self.model,
            &mut self.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// The language profile with any alphabet overrides applied.
    pub fn profile(&self, language: Option<&str>) -> Outcome<LanguageProfile> {
        let name = language.or(self.language.as_deref()).unwrap_or("russian");
        let mut profile = LanguageProfile::by_name(name)?;
        if let Some(a) = &self.source_alphabet {
            profile.source_alphabet = sorted_chars(a);
        }
        if let Some(a) = &self.latin_alphabet {
            profile.latin_alphabet = sorted_chars(a);
        }
        if profile.source_alphabet.is_empty() || profile.latin_alphabet.is_empty() {
            return Err(Failure::config("alphabets must be nonempty"));
        }
        Ok(profile)
    }

    /// Training settings from the `[train]` table. The delay limit falls
    /// back to the profile's when the table does not set it.
    pub fn train_config(&self, profile: &LanguageProfile) -> Outcome<TrainConfig> {
        let table = self.train.clone().unwrap_or_default();
        let has_delay = table.contains_key("delay");
        let mut config: TrainConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Failure::config(format!("[train]: {e}")))?;
        if !has_delay {
            config.delay = profile.delay;
        }
        Ok(config)
    }
}

fn sorted_chars(s: &str) -> Vec<char> {
    let mut cs: Vec<char> = s.chars().collect();
    cs.sort_unstable();
    cs.dedup();
    cs
}

/// `flag`, else `file`, else a config error naming both; the path must exist.
pub fn required_path(
    flag: &Option<PathBuf>,
    file: &Option<PathBuf>,
    flag_name: &str,
    key: &str,
) -> Outcome<PathBuf> {
    let path = flag.clone().or_else(|| file.clone()).ok_or_else(|| {
        Failure::config(format!(
            "missing --{flag_name} (or `{key}` in the config file)"
        ))
    })?;
    existing(path)
}

pub fn existing(path: PathBuf) -> Outcome<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Failure::config(format!(
            "{}: no such file or directory",
            path.display()
        )))
    }
}

/// What a training run was started with, recorded at the head of its log.
#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub event: &'static str,
    pub mode: &'a str,
    pub language: &'a str,
    pub source_alphabet: String,
    pub latin_alphabet: String,
    pub prior: &'a str,
    pub prior_files: &'a [PathBuf],
    pub data: &'a Path,
    pub lm_dir: &'a Path,
    pub config: &'a TrainConfig,
}
