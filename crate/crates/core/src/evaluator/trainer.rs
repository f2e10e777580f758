use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{EvalRequest, LossOracle, OracleError};
use crate::search_space::Configuration;

/// The JSON line written to a trainer's standard input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerRequest {
    pub trial_id: u64,
    pub arm_id: u64,
    pub config: Option<Configuration>,
    pub resource: u64,
    pub resource_unit: String,
    pub checkpoint_dir: PathBuf,
}

#[derive(Deserialize)]
struct TrainerReply {
    loss: f64,
}

/// Runs an external command once per evaluation.
///
/// The command receives one [`TrainerRequest`] line on stdin and must print
/// `{"loss": <finite number>}` as the last line of stdout and exit 0. Each arm
/// gets its own checkpoint directory so a trainer can resume from earlier
/// levels.
#[derive(Debug, Clone)]
pub struct TrainerOracle {
    program: String,
    args: Vec<String>,
    resource_unit: String,
    checkpoint_root: PathBuf,
    timeout: Option<Duration>,
}

const POLL: Duration = Duration::from_millis(5);

impl TrainerOracle {
    pub fn new(command: &[String], checkpoint_root: impl Into<PathBuf>) -> Result<Self, OracleError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| OracleError::Failed("empty trainer command".into()))?;
        Ok(Self {
            program: program.clone(),
            args: args.to_vec(),
            resource_unit: "unit".into(),
            checkpoint_root: checkpoint_root.into(),
            timeout: None,
        })
    }

    pub fn resource_unit(mut self, unit: impl Into<String>) -> Self {
        self.resource_unit = unit.into();
        self
    }

    pub fn timeout(mut self, timeout: Option<Duration>) -> Self {
        self.timeout = timeout;
        self
    }

    fn checkpoint_dir(&self, arm_id: u64) -> PathBuf {
        self.checkpoint_root.join(format!("arm_{arm_id}"))
    }
}

impl LossOracle for TrainerOracle {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<f64, OracleError> {
        let failed = |m: String| OracleError::Failed(m);
        let checkpoint_dir = self.checkpoint_dir(request.arm.id);
        std::fs::create_dir_all(&checkpoint_dir)
            .map_err(|e| failed(format!("creating {}: {e}", checkpoint_dir.display())))?;
        let line = serde_json::to_string(&TrainerRequest {
            trial_id: request.trial_id,
            arm_id: request.arm.id,
            config: request.arm.config.clone(),
            resource: request.resource,
            resource_unit: self.resource_unit.clone(),
            checkpoint_dir,
        })
        .map_err(|e| failed(e.to_string()))?;

        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| failed(format!("spawning `{}`: {e}", self.program)))?;

        // A trainer may exit without reading stdin; a broken pipe is not fatal.
        if let Some(mut stdin) = child.stdin.take() {
            let _ = stdin.write_all(line.as_bytes());
            let _ = stdin.write_all(b"\n");
        }
        let mut stdout = child.stdout.take().expect("stdout piped");
        let mut stderr = child.stderr.take().expect("stderr piped");
        let out_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout.read_to_string(&mut buf);
            buf
        });
        let err_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) => {}
                Err(e) => return Err(failed(format!("waiting for trainer: {e}"))),
            }
            if let Some(limit) = self.timeout {
                if start.elapsed() >= limit {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(OracleError::Timeout(limit.as_secs_f64()));
                }
            }
            thread::sleep(POLL);
        };
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();

        if !status.success() {
            let tail = err.lines().last().unwrap_or("").trim();
            return Err(failed(format!("trainer exited with {status}: {tail}")));
        }
        let last = out
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| failed("trainer printed nothing".into()))?;
        let reply: TrainerReply = serde_json::from_str(last.trim())
            .map_err(|e| failed(format!("unparsable trainer output `{}`: {e}", last.trim())))?;
        if !reply.loss.is_finite() {
            return Err(failed(format!("non-finite loss {}", reply.loss)));
        }
        Ok(reply.loss)
    }

    fn resumable(&self) -> bool {
        true
    }
}
