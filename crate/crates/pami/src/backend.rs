//! Scorer selection from a `--scorer` string.
//!
//! ```text
//! stdio:<command>                      process speaking the protocol on stdin/stdout
//! http://host:port                     POST /score
//! builtin:constant[:p[:classes]]       every class scores p (default 0.5, 1 class)
//! builtin:blob[:r,g,b[:tolerance]]     visible fraction of the target color (default red, 0.1)
//! builtin:linear:<weights.json>        clamp(<w, x> / <w, 1>, 0, 1)
//! builtin:checksum[:classes]           softmax scores derived from the input checksum
//! builtin:keyword:<word>[:present:absent]   text only
//! ```

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use pami_core::scorer::{BlobScorer, ChecksumScorer, ConstantScorer, KeywordScorer, LinearScorer, Scorer, TextScorer};
use pami_core::Image;

use crate::client::{HttpScorer, StdioScorer};
use crate::parallel::ParallelScorer;

pub type SharedScorer = Arc<dyn Scorer + Send + Sync>;
pub type SharedTextScorer = Arc<dyn TextScorer + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    Stdio(String),
    Http(String),
    Constant { value: f64, classes: usize },
    Blob { target: [f64; 3], tolerance: f64 },
    Linear(String),
    Checksum(usize),
    Keyword { word: String, present: f64, absent: f64 },
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad {what} {s:?}"))
}

impl std::str::FromStr for ScorerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(cmd) = s.strip_prefix("stdio:") {
            let cmd = cmd.trim();
            if cmd.is_empty() {
                return Err("stdio scorer needs a command".into());
            }
            return Ok(ScorerSpec::Stdio(cmd.to_owned()));
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            if s.split("://").nth(1).is_none_or(str::is_empty) {
                return Err("http scorer needs a host".into());
            }
            return Ok(ScorerSpec::Http(s.to_owned()));
        }
        let Some(rest) = s.strip_prefix("builtin:") else {
            return Err(format!("unknown scorer {s:?} (expected stdio:<cmd>, http://host:port or builtin:<name>)"));
        };
        let parts: Vec<&str> = rest.split(':').collect();
        match parts.as_slice() {
            ["constant", args @ ..] if args.len() <= 2 => Ok(ScorerSpec::Constant {
                value: args.first().map_or(Ok(0.5), |a| num(a, "constant"))?,
                classes: args.get(1).map_or(Ok(1), |a| num(a, "class count"))?,
            }),
            ["blob", args @ ..] if args.len() <= 2 => {
                let target = match args.first() {
                    None => [1.0, 0.0, 0.0],
                    Some(c) => {
                        let v: Vec<f64> = c.split(',').map(|x| num(x, "color component")).collect::<Result<_, _>>()?;
                        <[f64; 3]>::try_from(v).map_err(|_| "blob color needs three components".to_owned())?
                    }
                };
                Ok(ScorerSpec::Blob {
                    target,
                    tolerance: args.get(1).map_or(Ok(BlobScorer::DEFAULT_TOLERANCE), |a| num(a, "tolerance"))?,
                })
            }
            ["linear", path] if !path.is_empty() => Ok(ScorerSpec::Linear((*path).to_owned())),
            ["checksum"] => Ok(ScorerSpec::Checksum(10)),
            ["checksum", n] => Ok(ScorerSpec::Checksum(num(n, "class count")?)),
            ["keyword", word, args @ ..] if args.is_empty() || args.len() == 2 => Ok(ScorerSpec::Keyword {
                word: (*word).to_owned(),
                present: args.first().map_or(Ok(0.9), |a| num(a, "score"))?,
                absent: args.get(1).map_or(Ok(0.1), |a| num(a, "score"))?,
            }),
            _ => Err(format!("unknown builtin scorer {rest:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    /// The scorer string or its parameters are wrong.
    #[error("{0}")]
    Invalid(String),
    /// The scorer could not be started or reached.
    #[error("{0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, Copy)]
pub struct Connection {
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub class_hint: Option<usize>,
}

enum External {
    Stdio(Arc<StdioScorer>),
    Http(Arc<HttpScorer>),
}

/// A started scorer; builtins are instantiated per input.
pub struct Backend {
    spec: ScorerSpec,
    external: Option<External>,
}

impl Backend {
    pub fn connect(spec: ScorerSpec, conn: Connection) -> Result<Self, BackendError> {
        let external = match &spec {
            ScorerSpec::Stdio(cmd) => {
                let s = StdioScorer::spawn(cmd, conn.max_in_flight)
                    .map_err(|e| BackendError::Unavailable(format!("cannot start {cmd:?}: {e}")))?
                    .with_timeout(conn.timeout)
                    .with_class_hint(conn.class_hint);
                Some(External::Stdio(Arc::new(s)))
            }
            ScorerSpec::Http(url) => Some(External::Http(Arc::new(
                HttpScorer::with_timeout(url, conn.max_in_flight, conn.timeout).with_class_hint(conn.class_hint),
            ))),
            _ => None,
        };
        let b = Backend { spec, external };
        b.check_builtin()?;
        Ok(b)
    }

    fn check_builtin(&self) -> Result<(), BackendError> {
        let bad = |e: pami_core::Error| BackendError::Invalid(e.to_string());
        match &self.spec {
            ScorerSpec::Constant { value, classes } => ConstantScorer::new(*value, *classes).map(drop).map_err(bad),
            ScorerSpec::Blob { target, tolerance } => BlobScorer::new(*target, *tolerance).map(drop).map_err(bad),
            ScorerSpec::Checksum(n) => ChecksumScorer::new(*n).map(drop).map_err(bad),
            ScorerSpec::Keyword { word, present, absent } => KeywordScorer::new(word.clone(), *present, *absent).map(drop).map_err(bad),
            ScorerSpec::Linear(path) => read_weights(path).map(drop),
            ScorerSpec::Stdio(_) | ScorerSpec::Http(_) => Ok(()),
        }
    }

    pub fn spec(&self) -> &ScorerSpec {
        &self.spec
    }

    /// The scorer for explaining `original`; the blob scorer is calibrated on it.
    pub fn image_scorer(&self, original: &Image) -> Result<SharedScorer, BackendError> {
        let bad = |e: pami_core::Error| BackendError::Invalid(e.to_string());
        Ok(match (&self.external, &self.spec) {
            (Some(External::Stdio(s)), _) => s.clone(),
            (Some(External::Http(s)), _) => s.clone(),
            (None, ScorerSpec::Constant { value, classes }) => Arc::new(ConstantScorer::new(*value, *classes).map_err(bad)?),
            (None, ScorerSpec::Blob { target, tolerance }) => Arc::new(ParallelScorer(
                BlobScorer::new(*target, *tolerance).map_err(bad)?.calibrated(original),
            )),
            (None, ScorerSpec::Linear(path)) => {
                let w = read_weights(path)?;
                if w.len() != original.data().len() {
                    return Err(BackendError::Invalid(format!(
                        "{path} holds {} weights, the image has {} values",
                        w.len(),
                        original.data().len()
                    )));
                }
                Arc::new(ParallelScorer(LinearScorer::new(w).map_err(bad)?))
            }
            (None, ScorerSpec::Checksum(n)) => Arc::new(ParallelScorer(ChecksumScorer::new(*n).map_err(bad)?)),
            (None, ScorerSpec::Keyword { .. }) => {
                return Err(BackendError::Invalid("the keyword scorer only accepts text".into()))
            }
            (None, _) => unreachable!("external specs always connect"),
        })
    }

    pub fn text_scorer(&self) -> Result<SharedTextScorer, BackendError> {
        let bad = |e: pami_core::Error| BackendError::Invalid(e.to_string());
        Ok(match (&self.external, &self.spec) {
            (Some(External::Stdio(s)), _) => s.clone(),
            (Some(External::Http(s)), _) => s.clone(),
            (None, ScorerSpec::Constant { value, classes }) => Arc::new(ConstantScorer::new(*value, *classes).map_err(bad)?),
            (None, ScorerSpec::Checksum(n)) => Arc::new(ChecksumScorer::new(*n).map_err(bad)?),
            (None, ScorerSpec::Keyword { word, present, absent }) => {
                Arc::new(KeywordScorer::new(word.clone(), *present, *absent).map_err(bad)?)
            }
            (None, other) => {
                return Err(BackendError::Invalid(format!("scorer {other:?} does not accept text")))
            }
        })
    }
}

fn read_weights(path: &str) -> Result<Vec<f64>, BackendError> {
    let text = std::fs::read_to_string(Path::new(path))
        .map_err(|e| BackendError::Invalid(format!("cannot read weights {path}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| BackendError::Invalid(format!("weights {path}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!("stdio:python bridge.py".parse(), Ok(ScorerSpec::Stdio("python bridge.py".into())));
        assert_eq!("http://127.0.0.1:9000".parse(), Ok(ScorerSpec::Http("http://127.0.0.1:9000".into())));
        assert_eq!(
            "builtin:constant:0.7:3".parse(),
            Ok(ScorerSpec::Constant {
                value: 0.7,
                classes: 3
            })
        );
        assert_eq!(
            "builtin:blob:0,1,0".parse(),
            Ok(ScorerSpec::Blob {
                target: [0.0, 1.0, 0.0],
                tolerance: 0.1
            })
        );
        assert_eq!("builtin:checksum".parse(), Ok(ScorerSpec::Checksum(10)));
        assert!("stdio:".parse::<ScorerSpec>().is_err());
        assert!("http://".parse::<ScorerSpec>().is_err());
        assert!("builtin:blob:1,0".parse::<ScorerSpec>().is_err());
        assert!("builtin:nope".parse::<ScorerSpec>().is_err());
        assert!("ftp://x".parse::<ScorerSpec>().is_err());
    }

    #[test]
    fn builtin_parameters_validated() {
        let conn = Connection {
            max_in_flight: 1,
            timeout: Duration::from_secs(1),
            class_hint: None,
        };
        let spec = ScorerSpec::Constant {
            value: 2.0,
            classes: 1,
        };
        assert!(matches!(Backend::connect(spec, conn), Err(BackendError::Invalid(_))));
        let b = Backend::connect("builtin:keyword:good".parse().unwrap(), conn).unwrap();
        assert!(b.text_scorer().is_ok());
        assert!(b.image_scorer(&Image::filled(1, 1, 1, 0.0).unwrap()).is_err());
    }
}
