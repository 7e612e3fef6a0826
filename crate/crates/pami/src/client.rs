//! Clients for scorers running in another process.
//!
//! Both clients keep at most `max_in_flight` requests outstanding across all
//! threads sharing them. Replies are matched by id, so a scorer may answer
//! out of order.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{channel, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use pami_core::scorer::{BatchError, Scorer, TextScorer};
use pami_core::{Image, ScoreError, ScoreVector};

use crate::protocol::{parse_response, Payload};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

/// Counting semaphore.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Permits {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
    }

    fn try_acquire(&self) -> bool {
        let mut free = self.free.lock().unwrap();
        if *free == 0 {
            return false;
        }
        *free -= 1;
        true
    }

    fn release(&self, n: usize) {
        if n == 0 {
            return;
        }
        *self.free.lock().unwrap() += n;
        self.cv.notify_all();
    }
}

fn payloads_for_images(imgs: &[Image]) -> Result<Vec<Payload>, BatchError> {
    imgs.iter()
        .enumerate()
        .map(|(index, img)| {
            Payload::image(img).map_err(|e| BatchError {
                index,
                source: ScoreError::new(format!("cannot encode image: {e}")),
            })
        })
        .collect()
}

fn single(r: Result<Vec<ScoreVector>, BatchError>) -> Result<ScoreVector, ScoreError> {
    r.map(|mut v| v.pop().expect("one reply per request")).map_err(|e| e.source)
}

type Reply = Result<ScoreVector, ScoreError>;

#[derive(Default)]
struct Routes {
    pending: HashMap<u64, Sender<(u64, Reply)>>,
    closed: Option<String>,
}

impl Routes {
    fn fail_all(&mut self, why: &str, payload: Option<&str>) {
        for (id, tx) in self.pending.drain() {
            let mut e = ScoreError::new(why).with_request(id);
            if let Some(p) = payload {
                e = e.with_payload(p);
            }
            let _ = tx.send((id, Err(e)));
        }
    }
}

/// A scorer process speaking the protocol on its stdin/stdout.
pub struct StdioScorer {
    child: Mutex<Child>,
    stdin: Mutex<Option<ChildStdin>>,
    routes: Arc<Mutex<Routes>>,
    permits: Permits,
    max_in_flight: usize,
    next_id: AtomicU64,
    timeout: Duration,
    class_hint: Option<u64>,
}

impl StdioScorer {
    /// Runs `command` through `sh -c`.
    pub fn spawn(command: &str, max_in_flight: usize) -> std::io::Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let routes = Arc::new(Mutex::new(Routes::default()));
        let reader_routes = Arc::clone(&routes);
        thread::Builder::new()
            .name("pami-stdio-reader".into())
            .spawn(move || read_replies(BufReader::new(stdout), &reader_routes))?;
        Ok(StdioScorer {
            child: Mutex::new(child),
            stdin: Mutex::new(stdin),
            routes,
            permits: Permits::new(max_in_flight),
            max_in_flight: max_in_flight.max(1),
            next_id: AtomicU64::new(1),
            timeout: DEFAULT_TIMEOUT,
            class_hint: None,
        })
    }

    pub fn with_timeout(mut self, t: Duration) -> Self {
        self.timeout = t;
        self
    }

    pub fn with_class_hint(mut self, class: Option<usize>) -> Self {
        self.class_hint = class.map(|c| c as u64);
        self
    }

    fn send(&self, id: u64, payload: Payload, tx: &Sender<(u64, Reply)>) -> Result<(), ScoreError> {
        {
            let mut routes = self.routes.lock().unwrap();
            if let Some(why) = &routes.closed {
                return Err(ScoreError::new(format!("scorer process unavailable: {why}")).with_request(id));
            }
            routes.pending.insert(id, tx.clone());
        }
        let mut line = serde_json::to_string(&payload.into_request(id, self.class_hint)).expect("requests serialize");
        line.push('\n');
        let mut stdin = self.stdin.lock().unwrap();
        let res = match stdin.as_mut() {
            Some(w) => w.write_all(line.as_bytes()).and_then(|_| w.flush()),
            None => Err(std::io::Error::new(std::io::ErrorKind::BrokenPipe, "stdin closed")),
        };
        res.map_err(|e| {
            self.routes.lock().unwrap().pending.remove(&id);
            ScoreError::new(format!("cannot write to scorer process: {e}")).with_request(id)
        })
    }

    fn forget(&self, ids: impl Iterator<Item = u64>) {
        let mut routes = self.routes.lock().unwrap();
        for id in ids {
            routes.pending.remove(&id);
        }
    }

    fn run(&self, payloads: Vec<Payload>) -> Result<Vec<ScoreVector>, BatchError> {
        let n = payloads.len();
        let (tx, rx) = channel();
        let mut out: Vec<Option<ScoreVector>> = vec![None; n];
        let mut index_of: HashMap<u64, usize> = HashMap::new();
        let mut queue = payloads.into_iter().enumerate();
        let mut done = 0;
        let abort = |index_of: &HashMap<u64, usize>, index: usize, source: ScoreError| {
            self.permits.release(index_of.len());
            self.forget(index_of.keys().copied());
            Err(BatchError { index, source })
        };
        while done < n {
            while index_of.len() < self.max_in_flight {
                let have = if index_of.is_empty() {
                    self.permits.acquire();
                    true
                } else {
                    self.permits.try_acquire()
                };
                if !have {
                    break;
                }
                let Some((index, payload)) = queue.next() else {
                    self.permits.release(1);
                    break;
                };
                let id = self.next_id.fetch_add(1, Ordering::Relaxed);
                if let Err(e) = self.send(id, payload, &tx) {
                    self.permits.release(1);
                    return abort(&index_of, index, e);
                }
                index_of.insert(id, index);
            }
            match rx.recv_timeout(self.timeout) {
                Ok((id, reply)) => {
                    let Some(index) = index_of.remove(&id) else { continue };
                    self.permits.release(1);
                    match reply {
                        Ok(v) => {
                            out[index] = Some(v);
                            done += 1;
                        }
                        Err(e) => return abort(&index_of, index, e),
                    }
                }
                Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {
                    let (&id, &index) = index_of.iter().min_by_key(|(_, &i)| i).expect("a request is outstanding");
                    let e = ScoreError::new(format!("no reply within {:?}", self.timeout)).with_request(id);
                    return abort(&index_of, index, e);
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }
}

fn read_replies(mut reader: impl BufRead, routes: &Mutex<Routes>) {
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                let mut r = routes.lock().unwrap();
                r.closed = Some(format!("read error: {e}"));
                r.fail_all("scorer output unreadable", None);
                return;
            }
        }
        let raw = line.trim_end();
        if raw.is_empty() {
            continue;
        }
        let (id, reply) = match parse_response(raw) {
            Ok(resp) => (resp.id(), resp.into_scores(raw)),
            Err(e) => match e.request_id {
                Some(id) => (id, Err(e)),
                None => {
                    log::warn!("unattributable scorer reply: {raw}");
                    routes.lock().unwrap().fail_all("malformed reply without an id", Some(raw));
                    continue;
                }
            },
        };
        let tx = routes.lock().unwrap().pending.remove(&id);
        match tx {
            Some(tx) => {
                let _ = tx.send((id, reply));
            }
            None => log::warn!("reply for unknown request {id}"),
        }
    }
    let mut r = routes.lock().unwrap();
    r.closed = Some("process closed its output".into());
    r.fail_all("scorer process exited before replying", None);
}

impl Scorer for StdioScorer {
    fn score(&self, img: &Image) -> Result<ScoreVector, ScoreError> {
        single(self.score_batch(std::slice::from_ref(img)))
    }

    fn score_batch(&self, imgs: &[Image]) -> Result<Vec<ScoreVector>, BatchError> {
        self.run(payloads_for_images(imgs)?)
    }
}

impl TextScorer for StdioScorer {
    fn score_text(&self, text: &str) -> Result<ScoreVector, ScoreError> {
        single(self.run(vec![Payload::Text(text.to_owned())]))
    }

    fn score_text_batch(&self, texts: &[String]) -> Result<Vec<ScoreVector>, BatchError> {
        self.run(texts.iter().cloned().map(Payload::Text).collect())
    }
}

impl Drop for StdioScorer {
    fn drop(&mut self) {
        self.stdin.lock().unwrap().take();
        let mut child = self.child.lock().unwrap();
        for _ in 0..50 {
            if let Ok(Some(_)) = child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = child.kill();
        let _ = child.wait();
    }
}

/// A scorer behind `POST /score`.
pub struct HttpScorer {
    agent: ureq::Agent,
    url: String,
    permits: Permits,
    max_in_flight: usize,
    next_id: AtomicU64,
    class_hint: Option<u64>,
}

impl HttpScorer {
    /// `base` is `http://host:port`; a trailing `/score` is optional.
    pub fn new(base: &str, max_in_flight: usize) -> Self {
        Self::with_timeout(base, max_in_flight, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base: &str, max_in_flight: usize, timeout: Duration) -> Self {
        let base = base.trim_end_matches('/');
        let url = if base.ends_with("/score") {
            base.to_owned()
        } else {
            format!("{base}/score")
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpScorer {
            agent,
            url,
            permits: Permits::new(max_in_flight),
            max_in_flight: max_in_flight.max(1),
            next_id: AtomicU64::new(1),
            class_hint: None,
        }
    }

    pub fn with_class_hint(mut self, class: Option<usize>) -> Self {
        self.class_hint = class.map(|c| c as u64);
        self
    }

    fn post(&self, payload: Payload) -> Reply {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let body = serde_json::to_string(&payload.into_request(id, self.class_hint)).expect("requests serialize");
        self.permits.acquire();
        let res = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(body.as_str())
            .and_then(|mut r| r.body_mut().read_to_string());
        self.permits.release(1);
        let raw = res.map_err(|e| ScoreError::new(format!("HTTP request failed: {e}")).with_request(id))?;
        let raw = raw.trim_end();
        let resp = parse_response(raw)?;
        if resp.id() != id {
            return Err(ScoreError::new(format!("reply carries id {}", resp.id()))
                .with_request(id)
                .with_payload(raw));
        }
        resp.into_scores(raw)
    }

    fn run(&self, payloads: Vec<Payload>) -> Result<Vec<ScoreVector>, BatchError> {
        let n = payloads.len();
        let slots: Vec<Mutex<Option<Reply>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let payloads: Vec<Mutex<Option<Payload>>> = payloads.into_iter().map(|p| Mutex::new(Some(p))).collect();
        thread::scope(|s| {
            for _ in 0..self.max_in_flight.min(n) {
                s.spawn(|| loop {
                    if failed.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let p = payloads[i].lock().unwrap().take().expect("each payload taken once");
                    let r = self.post(p);
                    if r.is_err() {
                        failed.store(true, Ordering::Relaxed);
                    }
                    *slots[i].lock().unwrap() = Some(r);
                });
            }
        });
        let mut out = Vec::with_capacity(n);
        for (index, slot) in slots.into_iter().enumerate() {
            match slot.into_inner().unwrap() {
                Some(Ok(v)) => out.push(v),
                Some(Err(source)) => return Err(BatchError { index, source }),
                None => {}
            }
        }
        Ok(out)
    }
}

impl Scorer for HttpScorer {
    fn score(&self, img: &Image) -> Result<ScoreVector, ScoreError> {
        single(self.score_batch(std::slice::from_ref(img)))
    }

    fn score_batch(&self, imgs: &[Image]) -> Result<Vec<ScoreVector>, BatchError> {
        self.run(payloads_for_images(imgs)?)
    }
}

impl TextScorer for HttpScorer {
    fn score_text(&self, text: &str) -> Result<ScoreVector, ScoreError> {
        self.post(Payload::Text(text.to_owned()))
    }

    fn score_text_batch(&self, texts: &[String]) -> Result<Vec<ScoreVector>, BatchError> {
        self.run(texts.iter().cloned().map(Payload::Text).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permits_count() {
        let p = Permits::new(2);
        assert!(p.try_acquire());
        assert!(p.try_acquire());
        assert!(!p.try_acquire());
        p.release(1);
        assert!(p.try_acquire());
    }

    #[test]
    fn reader_routes_by_id() {
        let routes = Mutex::new(Routes::default());
        let (tx, rx) = channel();
        routes.lock().unwrap().pending.insert(2, tx.clone());
        routes.lock().unwrap().pending.insert(1, tx);
        let input = "{\"id\":2,\"scores\":[1.0],\"kind\":\"independent\"}\n{\"id\":1,\"error\":\"no\"}\n";
        read_replies(input.as_bytes(), &routes);
        let (a, ra) = rx.recv().unwrap();
        let (b, rb) = rx.recv().unwrap();
        assert_eq!((a, b), (2, 1));
        assert_eq!(ra.unwrap().scores(), &[1.0]);
        assert_eq!(rb.unwrap_err().message, "no");
        assert!(routes.lock().unwrap().closed.is_some());
    }

    #[test]
    fn eof_fails_pending() {
        let routes = Mutex::new(Routes::default());
        let (tx, rx) = channel();
        routes.lock().unwrap().pending.insert(4, tx);
        read_replies(&b""[..], &routes);
        let (id, r) = rx.recv().unwrap();
        assert_eq!(id, 4);
        assert_eq!(r.unwrap_err().request_id, Some(4));
    }
}
