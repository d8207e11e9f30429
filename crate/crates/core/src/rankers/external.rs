//! Adapter for scorers running in a child process.
//!
//! Protocol, one line per message over the child's stdin/stdout:
//!
//! ```text
//! -> SCORE 0.5,0,1.25
//! <- 3.75
//! -> QUIT
//! ```

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use super::{ModelKind, Ranker};
use crate::error::{Error, Result};

struct Channel {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ExternalScorer {
    command: String,
    child: Mutex<Child>,
    channel: Mutex<Option<Channel>>,
    feature_count: Option<usize>,
}

impl std::fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalScorer").field("command", &self.command).finish()
    }
}

impl ExternalScorer {
    /// Starts `command` through `sh -c`.
    pub fn spawn(command: &str, feature_count: Option<usize>) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Scorer(format!("cannot start {:?}: {}", command, e)))?;
        let stdin = child.stdin.take().ok_or_else(|| Error::Scorer("no stdin".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| Error::Scorer("no stdout".into()))?;
        Ok(ExternalScorer {
            command: command.to_string(),
            child: Mutex::new(child),
            channel: Mutex::new(Some(Channel { stdin, stdout: BufReader::new(stdout) })),
            feature_count,
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

impl Ranker for ExternalScorer {
    fn kind(&self) -> ModelKind {
        ModelKind::External
    }

    fn feature_count(&self) -> Option<usize> {
        self.feature_count
    }

    fn score(&self, features: &[f64]) -> Result<f64> {
        if let Some(m) = self.feature_count {
            if m != features.len() {
                return Err(Error::Dimension { expected: m, got: features.len() });
            }
        }
        let mut request = String::with_capacity(8 + features.len() * 8);
        request.push_str("SCORE ");
        for (i, v) in features.iter().enumerate() {
            if i > 0 {
                request.push(',');
            }
            // f64 Display never uses exponent notation
            let _ = write!(request, "{}", v);
        }
        request.push('\n');

        let mut guard = self.channel.lock().map_err(|_| Error::Scorer("channel poisoned".into()))?;
        let ch = guard.as_mut().ok_or_else(|| Error::Scorer("scorer already shut down".into()))?;
        ch.stdin
            .write_all(request.as_bytes())
            .and_then(|_| ch.stdin.flush())
            .map_err(|e| Error::Scorer(format!("write to {:?} failed: {}", self.command, e)))?;
        let mut line = String::new();
        let read = ch
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Scorer(format!("read from {:?} failed: {}", self.command, e)))?;
        if read == 0 {
            return Err(Error::Scorer(format!("{:?} exited before answering", self.command)));
        }
        let trimmed = line.trim();
        trimmed
            .parse::<f64>()
            .map_err(|_| Error::Scorer(format!("malformed response {:?}, expected one decimal number", trimmed)))
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Ok(slot) = self.channel.get_mut() {
            if let Some(mut ch) = slot.take() {
                let _ = ch.stdin.write_all(b"QUIT\n");
                let _ = ch.stdin.flush();
                // dropping the pipes lets scorers that ignore QUIT see EOF
            }
        }
        if let Ok(child) = self.child.get_mut() {
            let _ = child.wait();
        }
    }
}
