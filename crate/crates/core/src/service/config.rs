use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::io;
use crate::pipeline::ModelPaths;

/// Service settings. Precedence: defaults < JSON file < environment <
/// command-line flags (applied by the caller).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub models: ModelPaths,
    /// Items offered for annotation; also supplies subjects.
    pub corpus: Option<PathBuf>,
    /// Gold source for run reports; defaults to `corpus`.
    pub eval_corpus: Option<PathBuf>,
    /// Sessions, ratings log and `runs/`; in-memory only when unset.
    pub data_dir: Option<PathBuf>,
    pub host: String,
    pub port: u16,
    pub default_k: usize,
    /// Shuffle seed for requests that bring none.
    pub seed: u64,
    pub fusion: FusionConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            models: ModelPaths::default(),
            corpus: None,
            eval_corpus: None,
            data_dir: None,
            host: "127.0.0.1".into(),
            port: 8080,
            default_k: 10,
            seed: 0,
            fusion: FusionConfig::default(),
        }
    }
}

pub const ENV_PREFIX: &str = "DISTRACTOR_";

fn parse<T: std::str::FromStr>(name: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{ENV_PREFIX}{name}={value:?} is not valid")))
}

impl ServiceConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        io::read_json(path)
    }

    /// Applies `DISTRACTOR_*` overrides from `vars`; other names are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            let Some(name) = k.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            let v = v.as_ref();
            let path = || Some(PathBuf::from(v));
            match name {
                "POOL" => self.models.pool = path(),
                "BASELINE" => self.models.baseline = path(),
                "DSIM" => self.models.dsim = path(),
                "QSIM" => self.models.qsim = path(),
                "CORPUS" => self.corpus = path(),
                "EVAL_CORPUS" => self.eval_corpus = path(),
                "DATA_DIR" => self.data_dir = path(),
                "HOST" => self.host = v.to_string(),
                "PORT" => self.port = parse(name, v)?,
                "DEFAULT_K" => self.default_k = parse(name, v)?,
                "SEED" => self.seed = parse(name, v)?,
                "ALPHA" => self.fusion.alpha = parse(name, v)?,
                "FUSION_MODE" => self.fusion.mode = v.parse()?,
                "FUSION_NORM" => self.fusion.norm = v.parse()?,
                _ => log::debug!("ignoring unknown setting {ENV_PREFIX}{name}"),
            }
        }
        Ok(())
    }

    /// Defaults, then `file` if given, then the process environment.
    pub fn load(file: Option<&Path>) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.default_k == 0 {
            return Err(Error::InvalidConfig("default_k must be at least 1".into()));
        }
        self.fusion.validate()
    }
}
