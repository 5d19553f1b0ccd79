//! Backend speaking the Isabelle server protocol over TCP.
//!
//! Each check writes the theory to `Scratch.thy` in a scratch directory and
//! runs `use_theories` on it within a long-lived session.

use super::{BackendError, CounterexampleReport, CounterexampleSource, RawOutcome, VerifierBackend};
use parking_lot::Mutex;
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct IsabelleConfig {
    pub address: String,
    pub password: String,
    pub session: String,
    pub scratch_dir: PathBuf,
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    session_id: String,
}

pub struct IsabelleBackend {
    config: IsabelleConfig,
    conn: Mutex<Option<Connection>>,
}

/// One server reply: `OK`, `ERROR`, `FINISHED`, `FAILED`, `NOTE`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub kind: String,
    pub body: Value,
}

pub fn parse_reply(msg: &str) -> Reply {
    let msg = msg.trim();
    let (kind, rest) = msg.split_once(' ').unwrap_or((msg, ""));
    let body = serde_json::from_str(rest).unwrap_or(Value::String(rest.to_string()));
    Reply { kind: kind.to_string(), body }
}

/// Read one message. Long messages are sent as a byte count on its own line
/// followed by the payload.
fn read_message(reader: &mut impl BufRead) -> std::io::Result<String> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "server closed"));
    }
    let t = line.trim_end();
    if !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()) {
        let n: usize = t.parse().unwrap();
        let mut buf = vec![0; n];
        reader.read_exact(&mut buf)?;
        return Ok(String::from_utf8_lossy(&buf).into_owned());
    }
    Ok(t.to_string())
}

/// Errors (1-based theory line) and `writeln` output from a finished
/// `use_theories` result.
pub fn interpret_use_theories(body: &Value) -> RawOutcome {
    let mut errors = Vec::new();
    let mut output = Vec::new();
    let line_of = |m: &Value| m["pos"]["line"].as_u64().map(|l| l.saturating_sub(1) as usize).unwrap_or(0);
    if let Some(errs) = body["errors"].as_array() {
        for e in errs {
            errors.push((line_of(e), e["message"].as_str().unwrap_or("").to_string()));
        }
    }
    if let Some(nodes) = body["nodes"].as_array() {
        for node in nodes {
            for m in node["messages"].as_array().into_iter().flatten() {
                let text = m["message"].as_str().unwrap_or("").to_string();
                match m["kind"].as_str() {
                    Some("error") => {
                        let entry = (line_of(m), text);
                        if !errors.contains(&entry) {
                            errors.push(entry);
                        }
                    }
                    Some("writeln") => output.push(text),
                    _ => {}
                }
            }
        }
    }
    errors.sort();
    let ok = body["ok"].as_bool().unwrap_or(false);
    RawOutcome {
        accepted: ok && errors.is_empty(),
        state_hint: output.join("\n"),
        errors,
    }
}

/// Variable bindings from quickcheck or nitpick output.
pub fn parse_counterexample(output: &str) -> Option<CounterexampleReport> {
    let source = if output.contains("Quickcheck found a counterexample") {
        CounterexampleSource::QuickcheckLike
    } else if output.contains("Nitpick found a counterexample") {
        CounterexampleSource::NitpickLike
    } else {
        return None;
    };
    let bindings: Vec<(String, String)> = output
        .lines()
        .filter_map(|l| {
            let (var, val) = l.trim().split_once(" = ")?;
            let var = var.trim();
            (!var.is_empty() && !var.contains(' ')).then(|| (var.to_string(), val.trim().to_string()))
        })
        .collect();
    (!bindings.is_empty()).then_some(CounterexampleReport { bindings, source })
}

impl IsabelleBackend {
    pub fn new(config: IsabelleConfig) -> Self {
        IsabelleBackend { config, conn: Mutex::new(None) }
    }

    fn connect(&self) -> Result<Connection, BackendError> {
        let down = |e: std::io::Error| BackendError::Down(e.to_string());
        let stream = TcpStream::connect(&self.config.address).map_err(down)?;
        let mut writer = stream.try_clone().map_err(down)?;
        let mut reader = BufReader::new(stream);
        writeln!(writer, "{}", self.config.password).map_err(down)?;
        let hello = parse_reply(&read_message(&mut reader).map_err(down)?);
        if hello.kind != "OK" {
            return Err(BackendError::Down(format!("server refused password: {}", hello.body)));
        }
        let mut conn = Connection { reader, writer, session_id: String::new() };
        let done = self.call(&mut conn, "session_start", json!({ "session": self.config.session }), None)?;
        conn.session_id = done.body["session_id"]
            .as_str()
            .ok_or_else(|| BackendError::Down("no session id".into()))?
            .to_string();
        Ok(conn)
    }

    /// Send a command and wait for its final reply, skipping notes.
    fn call(
        &self,
        conn: &mut Connection,
        command: &str,
        args: Value,
        timeout: Option<Duration>,
    ) -> Result<Reply, BackendError> {
        let io = |e: std::io::Error| match e.kind() {
            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => BackendError::Timeout,
            _ => BackendError::Down(e.to_string()),
        };
        conn.reader.get_ref().set_read_timeout(timeout).map_err(io)?;
        writeln!(conn.writer, "{command} {args}").map_err(io)?;
        loop {
            let reply = parse_reply(&read_message(&mut conn.reader).map_err(io)?);
            match reply.kind.as_str() {
                "NOTE" => continue,
                // async commands acknowledge with a task id first
                "OK" if reply.body.get("task").is_some() => continue,
                "OK" | "FINISHED" => return Ok(reply),
                "FAILED" | "ERROR" => return Err(BackendError::Down(reply.body.to_string())),
                other => return Err(BackendError::Down(format!("unexpected reply {other}"))),
            }
        }
    }

    fn run(&self, theory: &str, timeout: Duration) -> Result<Value, BackendError> {
        let mut guard = self.conn.lock();
        if guard.is_none() {
            *guard = Some(self.connect()?);
        }
        std::fs::create_dir_all(&self.config.scratch_dir).map_err(|e| BackendError::Down(e.to_string()))?;
        std::fs::write(self.config.scratch_dir.join("Scratch.thy"), theory)
            .map_err(|e| BackendError::Down(e.to_string()))?;
        let conn = guard.as_mut().unwrap();
        let args = json!({
            "session_id": conn.session_id,
            "theories": ["Scratch"],
            "master_dir": self.config.scratch_dir,
            "unicode_symbols": true,
        });
        let sid = conn.session_id.clone();
        let result = self.call(conn, "use_theories", args, Some(timeout));
        match result {
            Ok(r) => {
                let purge = json!({ "session_id": sid, "theories": ["Scratch"], "master_dir": self.config.scratch_dir });
                let _ = self.call(guard.as_mut().unwrap(), "purge_theories", purge, Some(timeout));
                Ok(r.body)
            }
            Err(e) => {
                // the session is in an unknown state after a timeout or failure
                *guard = None;
                Err(e)
            }
        }
    }
}

impl VerifierBackend for IsabelleBackend {
    fn check_theory(&self, theory: &str, timeout: Duration) -> Result<RawOutcome, BackendError> {
        Ok(interpret_use_theories(&self.run(theory, timeout)?))
    }

    fn restart(&self) -> Result<(), BackendError> {
        let mut guard = self.conn.lock();
        *guard = None;
        *guard = Some(self.connect()?);
        Ok(())
    }

    fn refute(&self, goal_or_state: &str, timeout: Duration) -> Option<CounterexampleReport> {
        let theory = format!(
            "{}\nlemma \"{}\"\n  quickcheck\n  nitpick\n  oops\nend",
            super::THEORY_HEADER,
            goal_or_state.replace('"', "\\\"")
        );
        let body = self.run(&theory, timeout).ok()?;
        parse_counterexample(&interpret_use_theories(&body).state_hint)
    }

    fn requires_serialization(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "isabelle"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_parsing() {
        let r = parse_reply("OK {\"isabelle_id\":\"x\"}");
        assert_eq!(r.kind, "OK");
        assert_eq!(r.body["isabelle_id"], "x");
        assert_eq!(parse_reply("OK").body, Value::String(String::new()));
    }

    #[test]
    fn length_prefixed_messages() {
        let payload = "FINISHED {\"ok\":true}";
        let wire = format!("{}\n{}OK\n", payload.len(), payload);
        let mut r = BufReader::new(wire.as_bytes());
        assert_eq!(read_message(&mut r).unwrap(), payload);
        assert_eq!(read_message(&mut r).unwrap(), "OK");
        assert!(read_message(&mut r).is_err());
    }

    #[test]
    fn use_theories_result() {
        let body = json!({
            "ok": false,
            "errors": [{"kind": "error", "message": "Failed to apply proof method", "pos": {"line": 3}}],
            "nodes": [{"messages": [
                {"kind": "writeln", "message": "goal (1 subgoal):\n 1. P", "pos": {"line": 4}},
                {"kind": "error", "message": "Failed to apply proof method", "pos": {"line": 3}}
            ]}]
        });
        let out = interpret_use_theories(&body);
        assert!(!out.accepted);
        assert_eq!(out.errors, vec![(2, "Failed to apply proof method".to_string())]);
        assert_eq!(out.state_hint, "goal (1 subgoal):\n 1. P");
    }

    #[test]
    fn counterexample_output() {
        let out = "Quickcheck found a counterexample:\n  xs = [a1]\n  n = 0";
        let r = parse_counterexample(out).unwrap();
        assert_eq!(r.source, CounterexampleSource::QuickcheckLike);
        assert_eq!(r.bindings, vec![("xs".into(), "[a1]".into()), ("n".into(), "0".into())]);
        assert!(parse_counterexample("Quickcheck found no counterexample.").is_none());
    }
}
