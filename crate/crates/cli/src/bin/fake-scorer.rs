//! Reference scorer backend speaking the line protocol on stdin/stdout (or
//! a TCP socket with `--tcp ADDR`). Each character is one token with
//! logprob `-(1 + (codepoint % 7) / 10)`. `--mode` injects a protocol
//! violation into the response to request `--at` (default 0).

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use minpair::scoring::protocol::{Request, Response};
use minpair::scoring::RawScore;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Ok,
    Malformed,
    NoId,
    WrongId,
    NoScores,
    WrongCount,
    NoTokens,
    NoLogprobs,
    ZeroTokens,
    LengthMismatch,
    Positive,
    NonStringToken,
    Hang,
    Close,
}

#[derive(Parser)]
#[command(about = "Reference scorer backend for the minpair line protocol")]
struct Args {
    #[arg(long, value_enum, default_value = "ok")]
    mode: Mode,
    /// Request id whose response carries the injected fault.
    #[arg(long, default_value_t = 0)]
    at: u64,
    /// Serve one connection at a time on this address instead of stdio.
    #[arg(long)]
    tcp: Option<String>,
}

fn score(sentence: &str) -> RawScore {
    let tokens: Vec<String> = sentence.chars().map(String::from).collect();
    let logprobs = sentence
        .chars()
        .map(|c| -(1.0 + (c as u32 % 7) as f64 / 10.0))
        .collect();
    RawScore { tokens, logprobs }
}

/// Returns the response line, or `None` to stop answering.
fn respond(args: &Args, req: &Request) -> Option<String> {
    let scores: Vec<RawScore> = req.sentences.iter().map(|s| score(s)).collect();
    let ok = Response { id: req.id, scores: scores.clone() }.to_line();
    if req.id != args.at {
        return Some(ok);
    }
    let first = json!(scores[0]);
    let mut tail: Vec<serde_json::Value> = scores[1..].iter().map(|s| json!(s)).collect();
    let with_first = |v: serde_json::Value, tail: &mut Vec<serde_json::Value>| {
        let mut all = vec![v];
        all.append(tail);
        json!({"id": req.id, "scores": all}).to_string()
    };
    Some(match args.mode {
        Mode::Ok => ok,
        Mode::Malformed => "{not json".to_string(),
        Mode::NoId => json!({"scores": scores}).to_string(),
        Mode::WrongId => json!({"id": req.id + 1, "scores": scores}).to_string(),
        Mode::NoScores => json!({"id": req.id}).to_string(),
        Mode::WrongCount => json!({"id": req.id, "scores": &scores[1..]}).to_string(),
        Mode::NoTokens => with_first(json!({"logprobs": first["logprobs"]}), &mut tail),
        Mode::NoLogprobs => with_first(json!({"tokens": first["tokens"]}), &mut tail),
        Mode::ZeroTokens => with_first(json!({"tokens": [], "logprobs": []}), &mut tail),
        Mode::LengthMismatch => with_first(json!({"tokens": first["tokens"], "logprobs": [-1.0]}), &mut tail),
        Mode::Positive => {
            let mut lp = first["logprobs"].clone();
            lp[0] = json!(0.5);
            with_first(json!({"tokens": first["tokens"], "logprobs": lp}), &mut tail)
        }
        Mode::NonStringToken => {
            let mut toks = first["tokens"].clone();
            toks[0] = json!(7);
            with_first(json!({"tokens": toks, "logprobs": first["logprobs"]}), &mut tail)
        }
        Mode::Hang => {
            thread::sleep(Duration::from_secs(3600));
            return None;
        }
        Mode::Close => return None,
    })
}

fn run<R: BufRead, W: Write>(args: &Args, reader: R, mut writer: W) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        match respond(args, &req) {
            Some(out) => {
                writeln!(writer, "{out}")?;
                writer.flush()?;
            }
            None => return Ok(()),
        }
    }
    Ok(())
}

fn main() -> std::io::Result<()> {
    let args = Args::parse();
    match &args.tcp {
        None => run(&args, std::io::stdin().lock(), std::io::stdout().lock()),
        Some(addr) => {
            let listener = TcpListener::bind(addr)?;
            eprintln!("fake-scorer listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                let reader = BufReader::new(stream.try_clone()?);
                if let Err(e) = run(&args, reader, stream) {
                    eprintln!("connection error: {e}");
                }
            }
            Ok(())
        }
    }
}
