//! Serving a scorer over the protocol, for test doubles and local models.

use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use pami_core::scorer::{ChecksumScorer, Scorer, TextScorer};
use pami_core::ScoreVector;

use crate::protocol::{answer_line, Input};

pub type Handler = dyn Fn(Input, Option<u64>) -> Result<ScoreVector, String> + Send + Sync;

/// Handler answering with the checksum scorer: scores depend only on the
/// image bytes (or the text), identically on both transports.
pub fn checksum_handler(classes: usize) -> Arc<Handler> {
    let s = ChecksumScorer::new(classes).expect("at least one class");
    Arc::new(move |input, _| {
        match input {
            Input::Image(img) => s.score(&img),
            Input::Text(t) => s.score_text(&t),
        }
        .map_err(|e| e.message)
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StdioOptions {
    /// Answer each request on its own thread after a per-request delay of
    /// up to this many milliseconds, so replies come back out of order.
    pub jitter_ms: u64,
}

/// Serves until `input` ends; returns the peak number of requests read but
/// not yet answered.
pub fn serve_stdio(input: impl BufRead, output: impl Write + Send, handler: Arc<Handler>, opts: StdioOptions) -> std::io::Result<usize> {
    let output = Mutex::new(output);
    let open = Mutex::new((0usize, 0usize));
    let write = |line: String| -> std::io::Result<()> {
        let mut out = output.lock().unwrap();
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()
    };
    thread::scope(|s| {
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            {
                let mut o = open.lock().unwrap();
                o.0 += 1;
                o.1 = o.1.max(o.0);
            }
            let answer = |line: String| {
                let reply = answer_line(&line, &*handler);
                open.lock().unwrap().0 -= 1;
                write(reply)
            };
            if opts.jitter_ms == 0 {
                answer(line)?;
            } else {
                let delay = pami_core::fnv1a64(line.as_bytes()) % (opts.jitter_ms + 1);
                s.spawn(move || {
                    thread::sleep(Duration::from_millis(delay));
                    if let Err(e) = answer(line) {
                        log::error!("cannot write reply: {e}");
                    }
                });
            }
        }
        Ok::<(), std::io::Error>(())
    })?;
    let peak = open.lock().unwrap().1;
    Ok(peak)
}

/// Serves `POST /score` on `workers` threads until the server is dropped.
pub fn serve_http(server: Arc<tiny_http::Server>, handler: Arc<Handler>, workers: usize) -> Vec<thread::JoinHandle<()>> {
    (0..workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let handler = Arc::clone(&handler);
            thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let (status, body) = if req.url() != "/score" {
                        (404, r#"{"id":0,"error":"not found"}"#.to_owned())
                    } else if *req.method() != tiny_http::Method::Post {
                        (405, r#"{"id":0,"error":"use POST"}"#.to_owned())
                    } else {
                        let mut body = String::new();
                        match req.as_reader().read_to_string(&mut body) {
                            Ok(_) => (200, answer_line(body.trim_end(), &*handler)),
                            Err(e) => (400, format!(r#"{{"id":0,"error":"unreadable body: {e}"}}"#)),
                        }
                    };
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
                    let resp = tiny_http::Response::from_string(body).with_status_code(status).with_header(header);
                    if let Err(e) = req.respond(resp) {
                        log::warn!("cannot send reply: {e}");
                    }
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stdio_answers_every_line() {
        let input = "{\"id\":1,\"text\":\"a\"}\n\n{\"id\":2,\"text\":\"b\"}\n";
        let mut out = Vec::new();
        let peak = serve_stdio(input.as_bytes(), &mut out, checksum_handler(3), StdioOptions::default()).unwrap();
        assert_eq!(peak, 1);
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with(r#"{"id":1,"scores""#));
        assert!(lines[1].starts_with(r#"{"id":2,"scores""#));
    }
}
