//! JSON bodies of the `/v1` classifier protocol.
//!
//! ```text
//! POST /v1/train          TrainRequest       -> TrainResponse
//! GET  /v1/train/{job_id}                    -> JobState
//! POST /v1/predict        PredictRequest     -> PredictResponse
//! GET  /v1/health                            -> HealthResponse
//! ```

use serde::{Deserialize, Serialize};

use super::TrainConfig;

pub use super::JobState as TrainStatusResponse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub train_uri: String,
    pub val_uri: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePair {
    pub pair_id: String,
    pub text1: String,
    pub text2: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub pairs: Vec<WirePair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePrediction {
    pub pair_id: String,
    pub label: u8,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub predictions: Vec<WirePrediction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub ok: bool,
    pub model: String,
}
