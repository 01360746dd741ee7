//! Flag values merged over the optional config file.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use concord_core::classifier::{BackendDescriptor, BackendKind, TrainConfig};
use concord_core::triage::{EvalScope, PipelineConfig};
use concord_core::SplitSpec;
use serde::Deserialize;
use url::Url;

use crate::args::{BackendArgs, PipelineArgs, SplitArgs};

pub const BACKEND_URL_ENV: &str = "CONCORD_BACKEND_URL";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_REFERENCE_ADDR: &str = "127.0.0.1:8090";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    seed: Option<u64>,
    min_label_count: Option<usize>,
    fractions: Option<[f64; 3]>,
    counts: Option<[usize; 3]>,
    group_by_question: Option<bool>,
    stratified: Option<bool>,
    scope: Option<String>,
    backend: Option<String>,
    endpoint: Option<String>,
    threshold: Option<f64>,
    batch_size: Option<usize>,
    max_in_flight: Option<usize>,
    timeout_secs: Option<u64>,
    data_dir: Option<PathBuf>,
    poll_interval_secs: Option<u64>,
    train_timeout_secs: Option<u64>,
    train_config: Option<toml::Table>,
    addr: Option<String>,
    token: Option<String>,
}

#[derive(Debug, Default)]
pub struct Settings {
    file: FileConfig,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file = toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(Settings { file })
    }

    pub fn min_label_count(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.min_label_count).unwrap_or(2)
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.file.seed).unwrap_or(SplitSpec::default().seed)
    }

    pub fn split_spec(&self, args: &SplitArgs) -> Result<SplitSpec> {
        let defaults = SplitSpec::default();
        let fractions = match &args.fractions {
            Some(f) => <[f64; 3]>::try_from(f.as_slice())
                .map_err(|_| anyhow::anyhow!("--fractions takes exactly three values, got {}", f.len()))?,
            None => self.file.fractions.unwrap_or(defaults.fractions),
        };
        let counts = match &args.counts {
            Some(c) => Some(
                <[usize; 3]>::try_from(c.as_slice())
                    .map_err(|_| anyhow::anyhow!("--counts takes exactly three values, got {}", c.len()))?,
            ),
            None => self.file.counts,
        };
        let spec = SplitSpec {
            fractions,
            counts,
            seed: self.seed(args.seed),
            stratified: !args.no_stratify && self.file.stratified.unwrap_or(defaults.stratified),
            group_by_question: args.group_by_question || self.file.group_by_question.unwrap_or(false),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn pipeline(&self, args: &PipelineArgs) -> Result<PipelineConfig> {
        let defaults = PipelineConfig::default();
        let eval_scope = match (args.scope, &self.file.scope) {
            (Some(scope), _) => scope,
            (None, Some(raw)) => raw.parse::<EvalScope>().map_err(anyhow::Error::msg)?,
            (None, None) => defaults.eval_scope,
        };
        let train_config = self.train_config(args.train_config.as_deref())?;
        Ok(PipelineConfig {
            min_count: self.min_label_count(args.min_label_count),
            split: self.split_spec(&args.split)?,
            eval_scope,
            train_config,
            poll_interval: self.poll().0,
            train_timeout: self.poll().1,
        })
    }

    /// Poll interval and timeout for training jobs.
    pub fn poll(&self) -> (Duration, Duration) {
        let defaults = PipelineConfig::default();
        (
            self.file
                .poll_interval_secs
                .map_or(defaults.poll_interval, Duration::from_secs),
            self.file
                .train_timeout_secs
                .map_or(defaults.train_timeout, Duration::from_secs),
        )
    }

    pub fn train_config(&self, flag: Option<&Path>) -> Result<TrainConfig> {
        match (flag, &self.file.train_config) {
            (Some(path), _) => read_train_config(path),
            (None, Some(table)) => serde_json::to_value(table)
                .ok()
                .and_then(|v| serde_json::from_value(v).ok())
                .context("train_config in the config file must be a table"),
            (None, None) => Ok(TrainConfig::new()),
        }
    }

    /// Resolves the backend. Conflicting flags are rejected here, before
    /// anything runs.
    pub fn backend(&self, args: &BackendArgs) -> Result<BackendDescriptor> {
        let file_kind = self
            .file
            .backend
            .as_deref()
            .map(|raw| raw.parse::<BackendKind>().map_err(anyhow::Error::msg))
            .transpose()?;
        let file_endpoint = self
            .file
            .endpoint
            .as_deref()
            .map(|raw| Url::parse(raw).with_context(|| format!("endpoint {raw:?} in the config file")))
            .transpose()?;
        if let (Some(kind), Some(_)) = (file_kind, &file_endpoint) {
            if kind != BackendKind::Remote {
                bail!("config file sets endpoint together with backend = \"{kind}\"");
            }
        }
        let env_endpoint = std::env::var(BACKEND_URL_ENV)
            .ok()
            .filter(|v| !v.trim().is_empty())
            .map(|raw| Url::parse(&raw).with_context(|| format!("{BACKEND_URL_ENV}={raw:?}")))
            .transpose()?;

        let endpoint_known = args.endpoint.is_some() || file_endpoint.is_some() || env_endpoint.is_some();
        let kind = match args.backend.or(file_kind) {
            Some(kind) => kind,
            None if endpoint_known => BackendKind::Remote,
            None => bail!("no backend selected: pass --backend or set {BACKEND_URL_ENV}"),
        };

        let remote_only = [
            ("--batch-size", args.batch_size.is_some()),
            ("--max-in-flight", args.max_in_flight.is_some()),
            ("--timeout-secs", args.timeout_secs.is_some()),
            ("--data-dir", args.data_dir.is_some()),
            ("--endpoint", args.endpoint.is_some()),
        ];
        if kind != BackendKind::Remote {
            if let Some((flag, _)) = remote_only.iter().find(|(_, set)| *set) {
                bail!("{flag} only applies to --backend remote, not {kind}");
            }
        }
        if kind == BackendKind::Oracle && args.threshold.is_some() {
            bail!("--threshold does not apply to the oracle backend");
        }

        let mut descriptor = match kind {
            BackendKind::Oracle => BackendDescriptor::oracle(),
            BackendKind::Lexical => BackendDescriptor {
                kind,
                endpoint: None,
                params: BTreeMap::new(),
            },
            BackendKind::Remote => {
                let endpoint = args
                    .endpoint
                    .clone()
                    .or(file_endpoint)
                    .or(env_endpoint)
                    .with_context(|| format!("the remote backend needs --endpoint or {BACKEND_URL_ENV}"))?;
                BackendDescriptor::remote(endpoint)
            }
        };
        let mut params = BTreeMap::new();
        if kind != BackendKind::Oracle {
            if let Some(t) = args.threshold.or(self.file.threshold) {
                params.insert("threshold", t.to_string());
            }
        }
        if kind == BackendKind::Remote {
            let numeric = [
                (
                    "batch_size",
                    args.batch_size.or(self.file.batch_size).map(|v| v.to_string()),
                ),
                (
                    "max_in_flight",
                    args.max_in_flight.or(self.file.max_in_flight).map(|v| v.to_string()),
                ),
                (
                    "timeout_secs",
                    args.timeout_secs.or(self.file.timeout_secs).map(|v| v.to_string()),
                ),
            ];
            for (key, value) in numeric {
                if let Some(v) = value {
                    params.insert(key, v);
                }
            }
            if let Some(dir) = args.data_dir.as_ref().or(self.file.data_dir.as_ref()) {
                params.insert("data_dir", dir.display().to_string());
            }
        }
        descriptor
            .params
            .extend(params.into_iter().map(|(k, v)| (k.to_string(), v)));
        descriptor.validate()?;
        descriptor.threshold()?;
        Ok(descriptor)
    }

    pub fn addr(&self, flag: Option<SocketAddr>, default: &str) -> Result<SocketAddr> {
        match (flag, &self.file.addr) {
            (Some(addr), _) => Ok(addr),
            (None, Some(raw)) => raw.parse().with_context(|| format!("addr {raw:?} in the config file")),
            (None, None) => Ok(default.parse().expect("default address parses")),
        }
    }

    pub fn token(&self, flag: Option<String>) -> Option<String> {
        flag.or_else(|| self.file.token.clone())
    }

    pub fn threshold(&self, flag: Option<f64>) -> Option<f64> {
        flag.or(self.file.threshold)
    }
}

fn read_train_config(path: &Path) -> Result<TrainConfig> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("{} must hold a JSON object", path.display()))
}
