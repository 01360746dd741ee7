use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use reqwest::blocking::{Client, Response};
use serde::de::DeserializeOwned;
use url::Url;

use super::wire::{HealthResponse, PredictRequest, PredictResponse, TrainRequest, TrainResponse, WirePair};
use super::{
    BackendError, BackendKind, ClassifierBackend, DecisionThreshold, JobHandle, JobState, PredictionRecord, TrainConfig,
};
use crate::pairs::{export_pairs, PairDataset, PairInstance, Split};

#[derive(Debug, Clone)]
pub struct RemoteOptions {
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub timeout: Duration,
    /// Where training TSVs are written for the backend to read. Defaults to
    /// the system temp dir; the backend must be able to see this path.
    pub data_dir: Option<PathBuf>,
    pub threshold: DecisionThreshold,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        RemoteOptions {
            batch_size: 256,
            max_in_flight: 4,
            timeout: Duration::from_secs(60),
            data_dir: None,
            threshold: DecisionThreshold::default(),
        }
    }
}

/// Blocking client for a `/v1` classifier service.
#[derive(Debug)]
pub struct RemoteBackend {
    base: Url,
    client: Client,
    options: RemoteOptions,
}

type BatchResult = Result<Vec<PredictionRecord>, BackendError>;

fn transport(err: reqwest::Error) -> BackendError {
    BackendError::Transport(err.to_string())
}

impl RemoteBackend {
    pub fn new(endpoint: Url, options: RemoteOptions) -> Result<RemoteBackend, BackendError> {
        if options.batch_size == 0 || options.max_in_flight == 0 {
            return Err(BackendError::Config(
                "batch_size and max_in_flight must be positive".into(),
            ));
        }
        if !matches!(endpoint.scheme(), "http" | "https") {
            return Err(BackendError::Config(format!("unsupported endpoint {endpoint}")));
        }
        let mut base = endpoint;
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        let client = Client::builder().timeout(options.timeout).build().map_err(transport)?;
        Ok(RemoteBackend { base, client, options })
    }

    pub fn endpoint(&self) -> &Url {
        &self.base
    }

    fn url(&self, path: &str) -> Result<Url, BackendError> {
        self.base
            .join(path)
            .map_err(|e| BackendError::Config(format!("bad path {path}: {e}")))
    }

    fn decode<T: DeserializeOwned>(response: Response) -> Result<T, BackendError> {
        let status = response.status();
        let body = response.text().map_err(transport)?;
        if status.is_client_error() && status != reqwest::StatusCode::NOT_FOUND {
            return Err(BackendError::Rejected(format!("HTTP {}: {body}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(BackendError::Http {
                status: status.as_u16(),
                body,
            });
        }
        serde_json::from_str(&body).map_err(|e| BackendError::Protocol(format!("undecodable response: {e}")))
    }

    pub fn health(&self) -> Result<HealthResponse, BackendError> {
        let response = self.client.get(self.url("v1/health")?).send().map_err(transport)?;
        Self::decode(response)
    }

    fn write_slice(&self, pairs: &[PairInstance], split: Split, tag: &str) -> Result<Url, BackendError> {
        let dir = self.options.data_dir.clone().unwrap_or_else(std::env::temp_dir);
        std::fs::create_dir_all(&dir).map_err(|e| BackendError::Io(e.to_string()))?;
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos());
        let path = dir.join(format!("concord-{tag}-{}-{stamp}.tsv", std::process::id()));
        let dataset = PairDataset::new(pairs.to_vec(), Some(vec![split; pairs.len()]), None, 0);
        let file = std::fs::File::create(&path).map_err(|e| BackendError::Io(e.to_string()))?;
        export_pairs(&dataset, std::io::BufWriter::new(file)).map_err(|e| BackendError::Io(e.to_string()))?;
        let path = path.canonicalize().map_err(|e| BackendError::Io(e.to_string()))?;
        Url::from_file_path(&path).map_err(|_| BackendError::Io(format!("cannot express {} as a URI", path.display())))
    }

    fn predict_batch(&self, batch: &[PairInstance]) -> Result<Vec<PredictionRecord>, BackendError> {
        let request = PredictRequest {
            pairs: batch
                .iter()
                .map(|p| WirePair {
                    pair_id: p.pair_id.to_string(),
                    text1: p.text1.to_string(),
                    text2: p.text2.to_string(),
                })
                .collect(),
        };
        let response = self
            .client
            .post(self.url("v1/predict")?)
            .json(&request)
            .send()
            .map_err(transport)?;
        let body: PredictResponse = Self::decode(response)?;
        if body.predictions.len() != batch.len() {
            return Err(BackendError::Protocol(format!(
                "sent {} pairs, got {} predictions",
                batch.len(),
                body.predictions.len()
            )));
        }
        let mut by_id = HashMap::with_capacity(batch.len());
        for p in &body.predictions {
            if p.label > 1 {
                return Err(BackendError::Protocol(format!(
                    "label {} for {} is not 0 or 1",
                    p.label, p.pair_id
                )));
            }
            if !(0.0..=1.0).contains(&p.score) {
                return Err(BackendError::Protocol(format!(
                    "score {} for {} is outside [0, 1]",
                    p.score, p.pair_id
                )));
            }
            if by_id.insert(p.pair_id.as_str(), p.score).is_some() {
                return Err(BackendError::Protocol(format!(
                    "duplicate prediction for {}",
                    p.pair_id
                )));
            }
        }
        batch
            .iter()
            .map(|pair| {
                let score = by_id
                    .get(pair.pair_id.as_ref())
                    .ok_or_else(|| BackendError::Protocol(format!("no prediction for {}", pair.pair_id)))?;
                Ok(PredictionRecord::from_score(
                    pair.pair_id.to_string(),
                    *score,
                    self.options.threshold,
                ))
            })
            .collect()
    }
}

impl ClassifierBackend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn train(
        &self,
        train: &[PairInstance],
        val: &[PairInstance],
        config: &TrainConfig,
    ) -> Result<JobHandle, BackendError> {
        let request = TrainRequest {
            train_uri: self.write_slice(train, Split::Train, "train")?.to_string(),
            val_uri: self.write_slice(val, Split::Val, "val")?.to_string(),
            config: config.clone(),
        };
        let response = self
            .client
            .post(self.url("v1/train")?)
            .json(&request)
            .send()
            .map_err(transport)?;
        let TrainResponse { job_id } = Self::decode(response)?;
        Ok(JobHandle { job_id })
    }

    fn job_status(&self, job: &JobHandle) -> Result<JobState, BackendError> {
        let mut url = self.url("v1/train/")?;
        url.path_segments_mut()
            .map_err(|_| BackendError::Config("endpoint cannot be a base URL".into()))?
            .pop_if_empty()
            .push(&job.job_id);
        let response = self.client.get(url).send().map_err(transport)?;
        Self::decode(response)
    }

    /// Sends `batch_size` chunks with at most `max_in_flight` outstanding
    /// and reassembles them in input order.
    fn predict(&self, pairs: &[PairInstance]) -> Result<Vec<PredictionRecord>, BackendError> {
        let chunks: Vec<&[PairInstance]> = pairs.chunks(self.options.batch_size).collect();
        let results: Mutex<Vec<Option<BatchResult>>> = Mutex::new((0..chunks.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let failed = std::sync::atomic::AtomicBool::new(false);
        let workers = self.options.max_in_flight.min(chunks.len());

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if failed.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(chunk) = chunks.get(i) else { break };
                    let result = self.predict_batch(chunk);
                    if result.is_err() {
                        failed.store(true, Ordering::Relaxed);
                    }
                    results.lock().expect("no panics while held")[i] = Some(result);
                });
            }
        });

        let mut out = Vec::with_capacity(pairs.len());
        for result in results.into_inner().expect("workers joined") {
            match result {
                Some(Ok(records)) => out.extend(records),
                Some(Err(err)) => return Err(err),
                // skipped after an earlier failure
                None => continue,
            }
        }
        if out.len() != pairs.len() {
            return Err(BackendError::Protocol("prediction aborted".into()));
        }
        Ok(out)
    }
}
