//! Client for scorers speaking the line protocol over TCP or a child
//! process's stdio.
//!
//! TCP endpoints get one connection per concurrent caller, opened lazily and
//! reused afterwards. A stdio endpoint has exactly one connection, so callers
//! take turns.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::protocol::{Request, Response};
use super::{Embedder, MaskQuery, Scorer, Vocabulary};
use crate::error::{Error, Result};
use crate::mechanism::LogitVector;

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Stdio(Vec<String>),
}

impl Endpoint {
    /// `tcp:HOST:PORT`, `stdio:PROGRAM ARGS...`, or a bare `HOST:PORT`.
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(cmd) = spec.strip_prefix("stdio:") {
            let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if argv.is_empty() {
                return Err(Error::InvalidArgument(
                    "stdio endpoint needs a command".into(),
                ));
            }
            return Ok(Endpoint::Stdio(argv));
        }
        let addr = spec.strip_prefix("tcp:").unwrap_or(spec);
        if addr.is_empty() {
            return Err(Error::InvalidArgument("empty remote address".into()));
        }
        Ok(Endpoint::Tcp(addr.to_string()))
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Tcp(addr) => write!(f, "tcp:{addr}"),
            Endpoint::Stdio(argv) => write!(f, "stdio:{}", argv.join(" ")),
        }
    }
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl Connection {
    fn open(endpoint: &Endpoint) -> Result<Self> {
        match endpoint {
            Endpoint::Tcp(addr) => {
                let unavailable =
                    |e: std::io::Error| Error::RemoteUnavailable(format!("{addr}: {e}"));
                let mut last = None;
                for sock in addr.to_socket_addrs().map_err(unavailable)? {
                    match TcpStream::connect_timeout(&sock, CONNECT_TIMEOUT) {
                        Ok(stream) => {
                            let _ = stream.set_nodelay(true);
                            let reader = BufReader::new(stream.try_clone().map_err(unavailable)?);
                            return Ok(Self {
                                reader: Box::new(reader),
                                writer: Box::new(stream),
                                child: None,
                            });
                        }
                        Err(e) => last = Some(e),
                    }
                }
                Err(Error::RemoteUnavailable(match last {
                    Some(e) => format!("{addr}: {e}"),
                    None => format!("{addr}: no addresses resolved"),
                }))
            }
            Endpoint::Stdio(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| Error::RemoteUnavailable(format!("{}: {e}", argv[0])))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Self {
                    reader: Box::new(BufReader::new(stdout)),
                    writer: Box::new(stdin),
                    child: Some(child),
                })
            }
        }
    }

    fn call(&mut self, request: &Request) -> Result<Response> {
        let gone = |e: std::io::Error| Error::RemoteUnavailable(format!("connection lost: {e}"));
        let mut line = serde_json::to_string(request)
            .map_err(|e| Error::InvalidArgument(format!("unserializable request: {e}")))?;
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(gone)?;
        self.writer.flush().map_err(gone)?;

        let mut reply = String::new();
        if self.reader.read_line(&mut reply).map_err(gone)? == 0 {
            return Err(Error::RemoteUnavailable(
                "connection closed by scorer".into(),
            ));
        }
        serde_json::from_str(&reply)
            .map_err(|e| Error::ProtocolViolation(format!("unparseable response: {e}")))
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

struct Pool {
    idle: Vec<Connection>,
    open: usize,
}

pub struct RemoteScorer {
    endpoint: Endpoint,
    vocab: Vocabulary,
    pool: Mutex<Pool>,
    returned: Condvar,
    max_connections: usize,
    embed_supported: bool,
}

impl RemoteScorer {
    /// Connect, fetch the vocabulary, and probe the embed capability.
    pub fn connect(endpoint: Endpoint) -> Result<Self> {
        let mut first = Connection::open(&endpoint)?;
        let vocab = vocab_from(first.call(&Request::Vocab)?)?;
        let embed_supported = first
            .call(&Request::Embed {
                text: "capability probe".into(),
            })
            .map(|r| r.ok && r.vector.is_some())?;
        let max_connections = match endpoint {
            Endpoint::Tcp(_) => usize::MAX,
            Endpoint::Stdio(_) => 1,
        };
        Ok(Self {
            endpoint,
            vocab,
            pool: Mutex::new(Pool {
                idle: vec![first],
                open: 1,
            }),
            returned: Condvar::new(),
            max_connections,
            embed_supported,
        })
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    fn acquire(&self) -> Result<Connection> {
        let mut pool = self.pool.lock().expect("pool lock");
        loop {
            if let Some(conn) = pool.idle.pop() {
                return Ok(conn);
            }
            if pool.open < self.max_connections {
                pool.open += 1;
                drop(pool);
                return Connection::open(&self.endpoint).inspect_err(|_| {
                    self.pool.lock().expect("pool lock").open -= 1;
                });
            }
            pool = self.returned.wait(pool).expect("pool lock");
        }
    }

    fn release(&self, conn: Option<Connection>) {
        let mut pool = self.pool.lock().expect("pool lock");
        match conn {
            Some(c) => pool.idle.push(c),
            None => pool.open -= 1,
        }
        self.returned.notify_one();
    }

    /// Send one request; `ok:false` replies become [`Error::Backend`].
    fn call(&self, request: &Request) -> Result<Response> {
        let mut conn = self.acquire()?;
        match conn.call(request) {
            Ok(response) => {
                self.release(Some(conn));
                if response.ok {
                    Ok(response)
                } else {
                    Err(Error::Backend(
                        response.error.unwrap_or_else(|| "unspecified error".into()),
                    ))
                }
            }
            Err(e) => {
                // transport state is unknown after a failure; do not reuse
                let reusable = matches!(e, Error::ProtocolViolation(_));
                self.release(reusable.then_some(conn));
                Err(e)
            }
        }
    }
}

fn vocab_from(response: Response) -> Result<Vocabulary> {
    if !response.ok {
        return Err(Error::Backend(
            response
                .error
                .unwrap_or_else(|| "vocab request failed".into()),
        ));
    }
    let missing =
        |field: &str| Error::ProtocolViolation(format!("vocab response missing {field:?}"));
    let tokens = response.tokens.ok_or_else(|| missing("tokens"))?;
    let mask = response.mask.ok_or_else(|| missing("mask"))?;
    let sep = response.sep.ok_or_else(|| missing("sep"))?;
    Vocabulary::new(tokens, mask, sep).map_err(|e| Error::ProtocolViolation(e.to_string()))
}

impl Scorer for RemoteScorer {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        self.call(&Request::Tokenize {
            text: text.to_string(),
        })?
        .tokens
        .ok_or_else(|| Error::ProtocolViolation("tokenize response missing \"tokens\"".into()))
    }

    fn detokenize(&self, tokens: &[String]) -> Result<String> {
        self.call(&Request::Detokenize {
            tokens: tokens.to_vec(),
        })?
        .text
        .ok_or_else(|| Error::ProtocolViolation("detokenize response missing \"text\"".into()))
    }

    fn score_masked(&self, query: &MaskQuery) -> Result<LogitVector> {
        let logits = self
            .call(&Request::Score {
                context: query.context().to_vec(),
                private: query.private().to_vec(),
                mask_index: query.mask_index(),
            })?
            .logits
            .ok_or_else(|| Error::ProtocolViolation("score response missing \"logits\"".into()))?;
        if logits.len() != self.vocab.len() {
            return Err(Error::ProtocolViolation(format!(
                "expected {} logits, got {}",
                self.vocab.len(),
                logits.len()
            )));
        }
        LogitVector::new(logits).map_err(|e| Error::ProtocolViolation(e.to_string()))
    }

    fn embedder(&self) -> Option<&dyn Embedder> {
        self.embed_supported.then_some(self as &dyn Embedder)
    }

    fn describe(&self) -> String {
        format!("remote({}, vocab={})", self.endpoint, self.vocab.len())
    }
}

impl Embedder for RemoteScorer {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if !self.embed_supported {
            return Err(Error::EmbedderUnavailable(self.endpoint.to_string()));
        }
        let vector = self
            .call(&Request::Embed {
                text: text.to_string(),
            })?
            .vector
            .ok_or_else(|| Error::ProtocolViolation("embed response missing \"vector\"".into()))?;
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::ProtocolViolation(
                "non-finite embedding component".into(),
            ));
        }
        Ok(vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            Endpoint::parse("127.0.0.1:9000").unwrap(),
            Endpoint::Tcp("127.0.0.1:9000".into())
        );
        assert_eq!(
            Endpoint::parse("tcp:localhost:1").unwrap(),
            Endpoint::Tcp("localhost:1".into())
        );
        assert_eq!(
            Endpoint::parse("stdio:python3 sidecar.py --stdio").unwrap(),
            Endpoint::Stdio(vec![
                "python3".into(),
                "sidecar.py".into(),
                "--stdio".into()
            ])
        );
        assert!(Endpoint::parse("stdio:").is_err());
        assert!(Endpoint::parse("").is_err());
    }

    #[test]
    fn unreachable_tcp() {
        // bind then drop to get a port with nothing listening
        let port = std::net::TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let err = RemoteScorer::connect(Endpoint::Tcp(format!("127.0.0.1:{port}")))
            .err()
            .unwrap();
        assert!(matches!(err, Error::RemoteUnavailable(_)));
    }

    #[test]
    fn missing_program() {
        let err = RemoteScorer::connect(Endpoint::Stdio(vec!["/nonexistent/scorer-binary".into()]))
            .err()
            .unwrap();
        assert!(matches!(err, Error::RemoteUnavailable(_)));
    }
}
