//! HTTP client for a remote promptable segmenter.
//!
//! `POST {endpoint}/v1/segment` with
//! `{"image_id", "height", "width", "points": [[row, col], ...]}`; the server
//! answers `{"results": [{"point_index", "masks": [{"score", "rle"}]}]}` where
//! `point_index` is relative to the request's `points`. Non-2xx responses carry
//! `{"error": "..."}`.
//!
//! Anchors are sent in chunks of `chunk_size`; up to `max_in_flight` chunks run
//! at once. A failing chunk is reported for its anchor range and the remaining
//! chunks still contribute masks.

use std::ops::Range;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    AnchorFailure, BackendError, CandidateMask, SegmentOutcome, Segmenter, SegmenterRequest,
};
use crate::entropy::Anchor;
use crate::tensor::{rle_decode, RunLengthEncoding};

pub const SEGMENT_PATH: &str = "/v1/segment";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub points: Vec<Anchor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMask {
    pub score: f64,
    pub rle: RunLengthEncoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePointResult {
    pub point_index: usize,
    pub masks: Vec<WireMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub results: Vec<WirePointResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct HttpBackend {
    endpoint: String,
    chunk_size: usize,
    max_in_flight: usize,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            chunk_size: 64,
            max_in_flight: 4,
            agent,
        }
    }

    /// Anchors per request; zero is treated as one.
    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size.max(1);
        self
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Self {
        self.max_in_flight = max_in_flight.max(1);
        self
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.endpoint, SEGMENT_PATH)
    }

    fn post_chunk(
        &self,
        request: &SegmenterRequest,
        batch: Range<usize>,
    ) -> Result<Vec<CandidateMask>, BackendError> {
        let body = WireRequest {
            image_id: request.image_id.clone(),
            height: request.height,
            width: request.width,
            points: request.anchors[batch.clone()].to_vec(),
        };
        let mut response = self.agent.post(&self.url()).send_json(&body).map_err(|e| {
            BackendError::Connection {
                batch: batch.clone(),
                message: e.to_string(),
            }
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Connection {
                batch: batch.clone(),
                message: format!("reading body: {e}"),
            })?;
        if !(200..300).contains(&status) {
            let body = serde_json::from_str::<WireError>(&text)
                .map(|e| e.error)
                .unwrap_or(text);
            return Err(BackendError::Status {
                batch,
                status,
                body,
            });
        }
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol {
                batch: batch.clone(),
                message: format!("malformed response: {e}"),
            })?;
        decode_response(parsed, request.height, request.width, batch)
    }
}

type ChunkResult = Result<Vec<CandidateMask>, BackendError>;

/// Validates and decodes one chunk's response. `batch.start` is added to each
/// `point_index` to recover the global anchor index.
pub(crate) fn decode_response(
    response: WireResponse,
    height: usize,
    width: usize,
    batch: Range<usize>,
) -> Result<Vec<CandidateMask>, BackendError> {
    let protocol = |message: String| BackendError::Protocol {
        batch: batch.clone(),
        message,
    };
    let mut results = response.results;
    results.sort_by_key(|r| r.point_index);
    let mut out = Vec::new();
    for result in results {
        if result.point_index >= batch.len() {
            return Err(protocol(format!(
                "point_index {} out of range for {} points",
                result.point_index,
                batch.len()
            )));
        }
        for (j, wire) in result.masks.into_iter().enumerate() {
            if wire.rle.size != [height, width] {
                return Err(protocol(format!(
                    "point {} mask {j}: RLE size {:?} does not match {height}x{width}",
                    result.point_index, wire.rle.size
                )));
            }
            if !(0.0..=1.0).contains(&wire.score) {
                return Err(protocol(format!(
                    "point {} mask {j}: score {} outside [0, 1]",
                    result.point_index, wire.score
                )));
            }
            let mask = rle_decode(&wire.rle)
                .map_err(|e| protocol(format!("point {} mask {j}: {e}", result.point_index)))?;
            out.push(CandidateMask::new(
                mask,
                wire.score,
                batch.start + result.point_index,
            )?);
        }
    }
    Ok(out)
}

impl Segmenter for HttpBackend {
    fn segment(&self, request: &SegmenterRequest) -> Result<SegmentOutcome, BackendError> {
        request.validate()?;
        let n = request.anchors.len();
        let batches: Vec<Range<usize>> = (0..n)
            .step_by(self.chunk_size)
            .map(|s| s..(s + self.chunk_size).min(n))
            .collect();

        let mut results: Vec<(Range<usize>, ChunkResult)> = Vec::with_capacity(batches.len());
        for group in batches.chunks(self.max_in_flight) {
            std::thread::scope(|scope| {
                let handles: Vec<_> = group
                    .iter()
                    .cloned()
                    .map(|b| {
                        let b2 = b.clone();
                        (b, scope.spawn(move || self.post_chunk(request, b2)))
                    })
                    .collect();
                for (b, handle) in handles {
                    let res = handle.join().unwrap_or_else(|_| {
                        Err(BackendError::Connection {
                            batch: b.clone(),
                            message: "request thread panicked".into(),
                        })
                    });
                    results.push((b, res));
                }
            });
        }

        let mut outcome = SegmentOutcome::default();
        for (batch, res) in results {
            match res {
                Ok(masks) => outcome.masks.extend(masks),
                Err(error) => outcome.failures.push(AnchorFailure {
                    anchors: batch,
                    error,
                }),
            }
        }
        Ok(outcome)
    }
}
