//! Line-delimited JSON messages shared by the stdio and HTTP transports.
//!
//! ```text
//! request  {"id": 7, "png": "<base64 PNG>", "class_hint": 3}
//!          {"id": 8, "text": "the [MASK] [MASK]"}
//! response {"id": 7, "scores": [0.1, 0.9], "kind": "softmax"}
//! error    {"id": 7, "error": "message"}
//! ```
//!
//! Scorers must be deterministic: the same request payload always yields the
//! same scores.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use pami_core::{Image, ScoreError, ScoreKind, ScoreVector};
use serde::{Deserialize, Serialize};

use crate::io::{decode_png, encode_png, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_hint: Option<u64>,
}

/// What a request carries, before an id is attached.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Png(String),
    Text(String),
}

impl Payload {
    pub fn image(img: &Image) -> Result<Self, IoError> {
        Ok(Payload::Png(STANDARD.encode(encode_png(img)?)))
    }

    pub fn into_request(self, id: u64, class_hint: Option<u64>) -> Request {
        let (png, text) = match self {
            Payload::Png(p) => (Some(p), None),
            Payload::Text(t) => (None, Some(t)),
        };
        Request {
            id,
            png,
            text,
            class_hint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Softmax,
    Independent,
}

impl From<ScoreKind> for Kind {
    fn from(k: ScoreKind) -> Self {
        match k {
            ScoreKind::Softmax => Kind::Softmax,
            ScoreKind::Independent => Kind::Independent,
        }
    }
}

impl From<Kind> for ScoreKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Softmax => ScoreKind::Softmax,
            Kind::Independent => ScoreKind::Independent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Scores { id: u64, scores: Vec<f64>, kind: Kind },
    Error { id: u64, error: String },
}

impl Response {
    pub fn id(&self) -> u64 {
        match self {
            Response::Scores { id, .. } | Response::Error { id, .. } => *id,
        }
    }

    pub fn from_result(id: u64, r: Result<ScoreVector, String>) -> Self {
        match r {
            Ok(v) => Response::Scores {
                id,
                scores: v.scores().to_vec(),
                kind: v.kind().into(),
            },
            Err(error) => Response::Error { id, error },
        }
    }

    /// Validates the scores; `raw` is the reply as received, kept for diagnostics.
    pub fn into_scores(self, raw: &str) -> Result<ScoreVector, ScoreError> {
        match self {
            Response::Scores { id, scores, kind } => ScoreVector::new(scores, kind.into())
                .map_err(|e| ScoreError::new(format!("invalid scores: {e}")).with_request(id).with_payload(raw)),
            Response::Error { id, error } => Err(ScoreError::new(error).with_request(id).with_payload(raw)),
        }
    }
}

/// Parses one reply line.
pub fn parse_response(line: &str) -> Result<Response, ScoreError> {
    serde_json::from_str(line).map_err(|e| {
        let err = ScoreError::new(format!("malformed reply: {e}")).with_payload(line);
        match salvage_id(line) {
            Some(id) => err.with_request(id),
            None => err,
        }
    })
}

/// The `id` of a message that failed to parse as a whole, if it has one.
pub fn salvage_id(line: &str) -> Option<u64> {
    serde_json::from_str::<serde_json::Value>(line).ok()?.get("id")?.as_u64()
}

/// Decodes a request payload for a server-side handler.
pub enum Input {
    Image(Image),
    Text(String),
}

pub fn decode_request(req: &Request) -> Result<Input, String> {
    match (&req.png, &req.text) {
        (Some(png), None) => {
            let bytes = STANDARD.decode(png).map_err(|e| format!("bad base64: {e}"))?;
            decode_png(&bytes).map(Input::Image).map_err(|e| e.to_string())
        }
        (None, Some(t)) => Ok(Input::Text(t.clone())),
        _ => Err("request needs exactly one of \"png\" and \"text\"".into()),
    }
}

/// Answers one request line with one response line (no trailing newline).
pub fn answer_line(line: &str, handler: &(dyn Fn(Input, Option<u64>) -> Result<ScoreVector, String> + Sync)) -> String {
    let resp = match serde_json::from_str::<Request>(line) {
        Ok(req) => {
            let r = decode_request(&req).and_then(|input| handler(input, req.class_hint));
            Response::from_result(req.id, r)
        }
        Err(e) => Response::Error {
            id: salvage_id(line).unwrap_or(0),
            error: format!("malformed request: {e}"),
        },
    };
    serde_json::to_string(&resp).expect("responses serialize")
}
