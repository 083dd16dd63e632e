//! Optional TOML settings file. Every key mirrors a command-line flag (with
//! underscores); flags given on the command line take precedence.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

/// A scalar or a list, so `rows = 200` and `rows = [200, 400]` both work.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    pub fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub variant: Option<OneOrMany<String>>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub rse_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub t: Option<OneOrMany<f64>>,
    pub rows: Option<OneOrMany<usize>>,
    pub cols: Option<OneOrMany<usize>>,
    pub rule: Option<String>,
    pub out: Option<PathBuf>,
    pub synthetic: Option<String>,
    pub matrix: Option<OneOrMany<PathBuf>>,
    pub rhs: Option<PathBuf>,
    pub axis: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
