//! Adapter for scorer backends reached over a line channel: a spawned
//! subprocess's standard streams or a TCP socket.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::protocol::{parse_response, Request};
use super::{RawScore, ScoreError, ScorerBackend};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelError {
    Timeout,
    Closed,
    Io(String),
}

/// A bidirectional line transport.
pub trait LineChannel: Send {
    fn send_line(&mut self, line: &str) -> Result<(), ChannelError>;
    fn recv_line(&mut self, timeout: Duration) -> Result<String, ChannelError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Program and arguments to spawn.
    Process(Vec<String>),
    /// `host:port` of a listening backend.
    Tcp(String),
}

impl Endpoint {
    /// `tcp://host:port` selects a socket; anything else is a command line
    /// split on whitespace.
    pub fn parse(s: &str) -> Result<Self, ScoreError> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err(ScoreError::Connection("empty tcp address".into()));
            }
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        let argv: Vec<String> = s.split_whitespace().map(str::to_string).collect();
        if argv.is_empty() {
            return Err(ScoreError::Connection("empty backend command".into()));
        }
        Ok(Endpoint::Process(argv))
    }

    pub fn connect(&self) -> Result<Box<dyn LineChannel>, ScoreError> {
        match self {
            Endpoint::Process(argv) => Ok(Box::new(ProcessChannel::spawn(argv)?)),
            Endpoint::Tcp(addr) => Ok(Box::new(TcpChannel::connect(addr)?)),
        }
    }
}

pub struct ProcessChannel {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl ProcessChannel {
    pub fn spawn(argv: &[String]) -> Result<Self, ScoreError> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| ScoreError::Connection("empty backend command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScoreError::Connection(format!("spawning {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ProcessChannel {
            child,
            stdin,
            lines: rx,
        })
    }
}

impl LineChannel for ProcessChannel {
    fn send_line(&mut self, line: &str) -> Result<(), ChannelError> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::BrokenPipe => ChannelError::Closed,
                _ => ChannelError::Io(e.to_string()),
            })
    }

    fn recv_line(&mut self, timeout: Duration) -> Result<String, ChannelError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(ChannelError::Io(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(ChannelError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(ChannelError::Closed),
        }
    }
}

impl Drop for ProcessChannel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct TcpChannel {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl TcpChannel {
    pub fn connect(addr: &str) -> Result<Self, ScoreError> {
        let stream =
            TcpStream::connect(addr).map_err(|e| ScoreError::Connection(format!("{addr}: {e}")))?;
        let reader = BufReader::new(
            stream
                .try_clone()
                .map_err(|e| ScoreError::Connection(e.to_string()))?,
        );
        Ok(TcpChannel {
            writer: stream,
            reader,
        })
    }
}

impl LineChannel for TcpChannel {
    fn send_line(&mut self, line: &str) -> Result<(), ChannelError> {
        writeln!(self.writer, "{line}")
            .and_then(|_| self.writer.flush())
            .map_err(|e| ChannelError::Io(e.to_string()))
    }

    fn recv_line(&mut self, timeout: Duration) -> Result<String, ChannelError> {
        self.reader
            .get_ref()
            .set_read_timeout(Some(timeout))
            .map_err(|e| ChannelError::Io(e.to_string()))?;
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => Err(ChannelError::Closed),
            Ok(_) => Ok(line.trim_end_matches(['\n', '\r']).to_string()),
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) =>
            {
                Err(ChannelError::Timeout)
            }
            Err(e) => Err(ChannelError::Io(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExternalConfig {
    pub batch_size: usize,
    pub timeout: Duration,
    /// Number of connections opened to the endpoint; batches are spread
    /// across them round-robin.
    pub connections: usize,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        ExternalConfig {
            batch_size: 64,
            timeout: Duration::from_secs(60),
            connections: 1,
        }
    }
}

/// Scores sentences by forwarding batches to one or more line channels.
pub struct ExternalScorer {
    channels: Vec<Mutex<Box<dyn LineChannel>>>,
    config: ExternalConfig,
    next_id: AtomicU64,
    round_trips: AtomicUsize,
}

impl ExternalScorer {
    pub fn connect(endpoint: &Endpoint, config: ExternalConfig) -> Result<Self, ScoreError> {
        let channels = (0..config.connections.max(1))
            .map(|_| endpoint.connect())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::with_channels(channels, config))
    }

    pub fn with_channels(channels: Vec<Box<dyn LineChannel>>, config: ExternalConfig) -> Self {
        assert!(!channels.is_empty(), "at least one channel");
        assert!(config.batch_size > 0, "batch size must be positive");
        ExternalScorer {
            channels: channels.into_iter().map(Mutex::new).collect(),
            config,
            next_id: AtomicU64::new(0),
            round_trips: AtomicUsize::new(0),
        }
    }

    /// Completed request/response exchanges so far.
    pub fn round_trips(&self) -> usize {
        self.round_trips.load(Ordering::SeqCst)
    }

    fn exchange(&self, channel: usize, batch: &[String]) -> Result<Vec<RawScore>, ScoreError> {
        let mut ch = self.channels[channel].lock().expect("channel lock");
        // Ids are drawn under the channel lock so they increase per channel.
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let req = Request {
            id,
            sentences: batch.to_vec(),
        };
        let conn_err = |e: ChannelError| match e {
            ChannelError::Timeout => ScoreError::Timeout { request: id },
            ChannelError::Closed => ScoreError::Connection(format!(
                "backend closed the channel during request {id}"
            )),
            ChannelError::Io(msg) => ScoreError::Connection(msg),
        };
        ch.send_line(&req.to_line()).map_err(conn_err)?;
        let line = ch.recv_line(self.config.timeout).map_err(conn_err)?;
        let scores = parse_response(&line, id, batch.len())?;
        self.round_trips.fetch_add(1, Ordering::SeqCst);
        Ok(scores)
    }
}

impl ScorerBackend for ExternalScorer {
    fn score_batch(&self, sentences: &[String]) -> Result<Vec<RawScore>, ScoreError> {
        let batches: Vec<&[String]> = sentences.chunks(self.config.batch_size).collect();
        let k = self.channels.len();
        let mut results: Vec<Option<Result<Vec<RawScore>, ScoreError>>> =
            (0..batches.len()).map(|_| None).collect();
        if k == 1 {
            for (i, b) in batches.iter().enumerate() {
                let r = self.exchange(0, b);
                let failed = r.is_err();
                results[i] = Some(r);
                if failed {
                    break;
                }
            }
        } else {
            thread::scope(|scope| {
                let handles: Vec<_> = (0..k)
                    .map(|c| {
                        let batches = &batches;
                        scope.spawn(move || {
                            let mut mine = Vec::new();
                            for i in (c..batches.len()).step_by(k) {
                                let r = self.exchange(c, batches[i]);
                                let failed = r.is_err();
                                mine.push((i, r));
                                if failed {
                                    break;
                                }
                            }
                            mine
                        })
                    })
                    .collect();
                for h in handles {
                    for (i, r) in h.join().expect("scorer worker panicked") {
                        results[i] = Some(r);
                    }
                }
            });
        }
        let mut out = Vec::with_capacity(sentences.len());
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Some(Ok(scores)) => out.extend(scores),
                Some(Err(e)) => return Err(e.offset(i * self.config.batch_size)),
                None => {
                    return Err(ScoreError::Connection(format!(
                        "batch {i} was not attempted after an earlier failure"
                    )))
                }
            }
        }
        Ok(out)
    }
}
