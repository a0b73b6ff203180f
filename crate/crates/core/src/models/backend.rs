//! Client side of the line-delimited JSON protocol spoken by external
//! classifier backends (a companion process on stdin/stdout, or a local TCP
//! endpoint).
//!
//! ```text
//! -> {"kind":"hello"}
//! <- {"kind":"ready","tasks":["informative",...]}
//! -> {"kind":"predict","id":1,"task":"intent","texts":["...",...]}
//! <- {"kind":"result","id":1,"labels":[["need"],...],"scores":[[0.9,0.2],...]}
//! <- {"kind":"error","id":1,"message":"..."}
//! ```
//!
//! Request ids start at 1 and strictly increase per connection; a response
//! must carry the id of the request it answers.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ModelError, Prediction, TaskPredictor};
use crate::corpus::Task;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Shell command started with `sh -c`; speaks on its stdin/stdout.
    Command(String),
    /// `host:port`.
    Tcp(String),
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(cmd) = s.strip_prefix("cmd:") {
            Ok(Endpoint::Command(cmd.trim().to_string()))
        } else if let Some(addr) = s.strip_prefix("tcp:") {
            Ok(Endpoint::Tcp(addr.trim().to_string()))
        } else {
            Err(format!("endpoint {s:?} must start with cmd: or tcp:"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendRef {
    pub endpoint: Endpoint,
    pub task: Task,
    pub timeout: Duration,
}

impl BackendRef {
    pub fn new(endpoint: Endpoint, task: Task) -> Self {
        BackendRef { endpoint, task, timeout: Duration::from_secs(60) }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Request<'a> {
    Hello,
    Predict { id: u64, task: Task, texts: &'a [&'a str] },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Response {
    Ready {
        tasks: Vec<String>,
    },
    Result {
        id: u64,
        labels: Vec<Vec<String>>,
        scores: Vec<Vec<f64>>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

pub struct ExternalBackend {
    task: Task,
    tasks: Vec<String>,
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    timeout: Duration,
    child: Option<Child>,
}

fn io_err(e: impl std::fmt::Display) -> ModelError {
    ModelError::BackendIo(e.to_string())
}

fn violation(message: impl Into<String>, line: &str) -> ModelError {
    ModelError::Protocol { message: message.into(), line: line.to_string() }
}

impl ExternalBackend {
    /// Starts or dials the endpoint and performs the handshake.
    pub fn connect(r: &BackendRef) -> Result<Self, ModelError> {
        match &r.endpoint {
            Endpoint::Command(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(io_err)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let mut b = Self::unconnected(BufReader::new(stdout), stdin, r.task, r.timeout);
                b.child = Some(child);
                b.handshake()?;
                Ok(b)
            }
            Endpoint::Tcp(addr) => {
                let sock = addr
                    .to_socket_addrs()
                    .map_err(io_err)?
                    .next()
                    .ok_or_else(|| io_err(format!("cannot resolve {addr}")))?;
                let stream = TcpStream::connect_timeout(&sock, r.timeout).map_err(io_err)?;
                let reader = BufReader::new(stream.try_clone().map_err(io_err)?);
                Self::from_streams(reader, stream, r.task, r.timeout)
            }
        }
    }

    /// Speaks the protocol over arbitrary streams and performs the handshake.
    pub fn from_streams<R, W>(reader: R, writer: W, task: Task, timeout: Duration) -> Result<Self, ModelError>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let mut b = Self::unconnected(reader, writer, task, timeout);
        b.handshake()?;
        Ok(b)
    }

    fn unconnected<R, W>(mut reader: R, writer: W, task: Task, timeout: Duration) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || loop {
            let mut line = String::new();
            let msg = match reader.read_line(&mut line) {
                Ok(0) => Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "backend closed the stream")),
                Ok(_) => Ok(line),
                Err(e) => Err(e),
            };
            let stop = msg.is_err();
            if tx.send(msg).is_err() || stop {
                break;
            }
        });
        ExternalBackend {
            task,
            tasks: Vec::new(),
            writer: Box::new(writer),
            lines: rx,
            next_id: 1,
            timeout,
            child: None,
        }
    }

    /// Task names announced by the backend in its handshake.
    pub fn served_tasks(&self) -> &[String] {
        &self.tasks
    }

    fn send(&mut self, req: &Request<'_>) -> Result<(), ModelError> {
        let mut line = serde_json::to_vec(req).expect("request serializes");
        line.push(b'\n');
        self.writer.write_all(&line).map_err(io_err)?;
        self.writer.flush().map_err(io_err)
    }

    fn receive(&mut self) -> Result<(String, Response), ModelError> {
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(left) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(io_err(e)),
                Err(RecvTimeoutError::Timeout) => return Err(ModelError::Timeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => return Err(io_err("backend reader stopped")),
            };
            let line = line.trim_end().to_string();
            if line.trim().is_empty() {
                continue;
            }
            let resp = serde_json::from_str(&line).map_err(|e| violation(format!("unparseable frame: {e}"), &line))?;
            return Ok((line, resp));
        }
    }

    fn handshake(&mut self) -> Result<(), ModelError> {
        self.send(&Request::Hello)?;
        match self.receive()? {
            (_, Response::Ready { tasks }) => {
                if !tasks.iter().any(|t| t == self.task.as_str()) {
                    return Err(ModelError::UnsupportedTask(self.task));
                }
                self.tasks = tasks;
                Ok(())
            }
            (_, Response::Error { message, .. }) => Err(ModelError::Backend(message)),
            (line, _) => Err(violation("expected a ready frame", &line)),
        }
    }

    /// One prediction per text, in order.
    pub fn predict(&mut self, texts: &[&str]) -> Result<Vec<Prediction>, ModelError> {
        let id = self.next_id;
        self.next_id += 1;
        self.send(&Request::Predict { id, task: self.task, texts })?;
        let (line, resp) = self.receive()?;
        let (got, labels, scores) = match resp {
            Response::Result { id, labels, scores } => (id, labels, scores),
            Response::Error { id: Some(eid), .. } if eid != id => {
                return Err(violation(format!("error frame id {eid} does not answer request {id}"), &line))
            }
            Response::Error { message, .. } => return Err(ModelError::Backend(message)),
            Response::Ready { .. } => return Err(violation("unexpected ready frame", &line)),
        };
        if got != id {
            return Err(violation(format!("response id {got} does not answer request {id}"), &line));
        }
        if labels.len() != texts.len() || scores.len() != texts.len() {
            return Err(violation(
                format!("{} texts but {} label rows and {} score rows", texts.len(), labels.len(), scores.len()),
                &line,
            ));
        }
        let known = self.task.label_names();
        let mut out = Vec::with_capacity(texts.len());
        for (ls, ss) in labels.into_iter().zip(scores) {
            if let Some(bad) = ls.iter().find(|l| !known.contains(&l.as_str())) {
                return Err(violation(format!("unknown label {bad:?} for task {}", self.task), &line));
            }
            if ss.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(violation("score outside [0, 1]", &line));
            }
            // canonical label order
            let labels = known.iter().filter(|k| ls.iter().any(|l| l == *k)).map(|k| k.to_string()).collect();
            out.push(Prediction { labels, scores: ss });
        }
        Ok(out)
    }
}

impl TaskPredictor for ExternalBackend {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_batch(&mut self, texts: &[&str]) -> Result<Vec<Prediction>, ModelError> {
        self.predict(texts)
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        // closing stdin asks a well-behaved companion process to exit
        self.writer = Box::new(std::io::sink());
        if let Some(mut child) = self.child.take() {
            let deadline = Instant::now() + Duration::from_millis(500);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn endpoint_parsing() {
        assert_eq!("tcp:127.0.0.1:9000".parse::<Endpoint>().unwrap(), Endpoint::Tcp("127.0.0.1:9000".into()));
        assert_eq!("cmd: python serve.py".parse::<Endpoint>().unwrap(), Endpoint::Command("python serve.py".into()));
        assert!("http://x".parse::<Endpoint>().is_err());
    }

    #[test]
    fn request_wire_format() {
        let texts = ["a", "b"];
        let json = serde_json::to_string(&Request::Predict { id: 3, task: Task::Aid, texts: &texts }).unwrap();
        assert_eq!(json, r#"{"kind":"predict","id":3,"task":"aid","texts":["a","b"]}"#);
        assert_eq!(serde_json::to_string(&Request::Hello).unwrap(), r#"{"kind":"hello"}"#);
    }

    /// Serves `frames` after reading a request for each one.
    fn scripted(frames: Vec<String>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut w = stream;
            for f in frames {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    return;
                }
                writeln!(w, "{f}").unwrap();
            }
            let mut rest = String::new();
            let _ = reader.read_line(&mut rest);
        });
        addr
    }

    fn connect(addr: String, task: Task) -> Result<ExternalBackend, ModelError> {
        let mut r = BackendRef::new(Endpoint::Tcp(addr), task);
        r.timeout = Duration::from_secs(5);
        ExternalBackend::connect(&r)
    }

    #[test]
    fn tcp_round_trip() {
        let addr = scripted(vec![
            r#"{"kind":"ready","tasks":["intent"]}"#.into(),
            r#"{"kind":"result","id":1,"labels":[["supply","need"],[]],"scores":[[0.9,0.8],[0.1,0.2]]}"#.into(),
            r#"{"kind":"result","id":2,"labels":[],"scores":[]}"#.into(),
        ]);
        let mut b = connect(addr, Task::Intent).unwrap();
        assert_eq!(b.served_tasks(), ["intent"]);
        let out = b.predict(&["x", "y"]).unwrap();
        assert_eq!(out[0].labels, vec!["need", "supply"]);
        assert!(out[1].labels.is_empty());
        assert!(b.predict(&[]).unwrap().is_empty());
    }

    #[test]
    fn protocol_violations() {
        let addr = scripted(vec![
            r#"{"kind":"ready","tasks":["aid"]}"#.into(),
            r#"{"kind":"result","id":7,"labels":[["food"]],"scores":[[0.9]]}"#.into(),
        ]);
        let err = connect(addr, Task::Aid).unwrap().predict(&["x"]).unwrap_err();
        assert!(matches!(err, ModelError::Protocol { ref line, .. } if line.contains("\"id\":7")), "{err}");

        let addr = scripted(vec![r#"{"kind":"ready","tasks":["aid"]}"#.into(), "not json".into()]);
        assert!(matches!(connect(addr, Task::Aid).unwrap().predict(&["x"]), Err(ModelError::Protocol { .. })));

        let addr = scripted(vec![
            r#"{"kind":"ready","tasks":["aid"]}"#.into(),
            r#"{"kind":"result","id":1,"labels":[["water"]],"scores":[[0.9]]}"#.into(),
        ]);
        assert!(matches!(connect(addr, Task::Aid).unwrap().predict(&["x"]), Err(ModelError::Protocol { .. })));

        let addr = scripted(vec![
            r#"{"kind":"ready","tasks":["aid"]}"#.into(),
            r#"{"kind":"error","id":1,"message":"cuda out of memory"}"#.into(),
        ]);
        assert!(
            matches!(connect(addr, Task::Aid).unwrap().predict(&["x"]), Err(ModelError::Backend(m)) if m.contains("memory"))
        );

        let addr = scripted(vec![r#"{"kind":"ready","tasks":["informative"]}"#.into()]);
        assert!(matches!(connect(addr, Task::Aid), Err(ModelError::UnsupportedTask(Task::Aid))));
    }

    #[test]
    fn silent_backend_times_out() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let hold = thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            thread::sleep(Duration::from_millis(600));
            drop(s);
        });
        let mut r = BackendRef::new(Endpoint::Tcp(addr), Task::Aid);
        r.timeout = Duration::from_millis(200);
        assert!(matches!(ExternalBackend::connect(&r), Err(ModelError::Timeout(_))));
        hold.join().unwrap();
    }

    #[test]
    fn companion_process_round_trip() {
        let script = r#"while IFS= read -r line; do
  case "$line" in
    *hello*) echo '{"kind":"ready","tasks":["intent"]}' ;;
    *) id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/')
       echo "{\"kind\":\"result\",\"id\":$id,\"labels\":[[\"need\"]],\"scores\":[[0.9,0.1]]}" ;;
  esac
done"#;
        let r = BackendRef::new(Endpoint::Command(script.into()), Task::Intent);
        let mut b = ExternalBackend::connect(&r).unwrap();
        for _ in 0..3 {
            let out = b.predict(&["we need water"]).unwrap();
            assert_eq!(out[0].labels, vec!["need"]);
            assert_eq!(out[0].scores, vec![0.9, 0.1]);
        }
    }
}
