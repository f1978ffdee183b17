//! Evaluator driven by operator-supplied shell commands.
//!
//! Each command template runs under `sh -c`. Before running, `{tuple_file}`
//! is replaced by the path of a file listing the rules of the current phase
//! (one id per line) and `{worker}` by the worker number. The same values are
//! exported as `BREAKPROBE_TUPLE_FILE` and `BREAKPROBE_WORKER`, plus
//! `BREAKPROBE_PHASE`.
//!
//! `test_cmd` exits 0 when every test passes; otherwise the non-empty lines
//! of its standard output name the failing tests. `compliance_cmd` prints the
//! ids of rules that are not in effect.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{Evaluator, Session, TestOutcome};
use crate::error::{Error, Result};
use crate::model::RuleId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalConfig {
    pub apply_cmd: String,
    pub test_cmd: String,
    pub revert_cmd: String,
    #[serde(default)]
    pub compliance_cmd: Option<String>,
    /// Run between tuples under a hard reset policy.
    #[serde(default)]
    pub recreate_cmd: Option<String>,
    /// Limit for every single command.
    pub timeout_s: u64,
}

#[derive(Debug, Clone)]
pub struct ExternalEvaluator {
    config: ExternalConfig,
}

impl ExternalEvaluator {
    pub fn new(config: ExternalConfig) -> Result<Self> {
        for (name, cmd) in [
            ("apply", &config.apply_cmd),
            ("test", &config.test_cmd),
            ("revert", &config.revert_cmd),
        ] {
            if cmd.trim().is_empty() {
                return Err(Error::Validation(format!("{name} command must not be empty")));
            }
        }
        if config.timeout_s == 0 {
            return Err(Error::Validation("command timeout must be at least one second".into()));
        }
        Ok(ExternalEvaluator { config })
    }

    pub fn config(&self) -> &ExternalConfig {
        &self.config
    }
}

impl Evaluator for ExternalEvaluator {
    fn session(&self, worker: usize) -> Result<Box<dyn Session + '_>> {
        let dir = tempfile::Builder::new()
            .prefix(&format!("breakprobe-w{worker}-"))
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let tuple_file = dir.path().join("tuple.txt");
        std::fs::write(&tuple_file, "").map_err(|e| Error::io(&tuple_file, e))?;
        Ok(Box::new(ExternalSession {
            config: &self.config,
            worker,
            _dir: dir,
            tuple_file,
        }))
    }
}

struct ExternalSession<'a> {
    config: &'a ExternalConfig,
    worker: usize,
    _dir: tempfile::TempDir,
    tuple_file: PathBuf,
}

struct Finished {
    status: ExitStatus,
    stdout: String,
    stderr: String,
}

impl ExternalSession<'_> {
    fn write_rules(&self, rules: &BTreeSet<RuleId>) -> Result<()> {
        let mut text = String::new();
        for rule in rules {
            text.push_str(rule.as_str());
            text.push('\n');
        }
        std::fs::write(&self.tuple_file, text).map_err(|e| Error::io(&self.tuple_file, e))
    }

    fn run(&self, phase: &'static str, template: &str) -> Result<Finished> {
        run_command(phase, template, &self.tuple_file, self.worker, self.config.timeout_s)
    }

    fn run_checked(&self, phase: &'static str, template: &str) -> Result<Finished> {
        let done = self.run(phase, template)?;
        if !done.status.success() {
            return Err(Error::CommandFailed {
                phase,
                message: describe_failure(&done),
            });
        }
        Ok(done)
    }
}

impl Session for ExternalSession<'_> {
    fn apply(&mut self, rules: &BTreeSet<RuleId>) -> Result<()> {
        self.write_rules(rules)?;
        self.run_checked("apply", &self.config.apply_cmd).map(drop)
    }

    fn test(&mut self) -> Result<TestOutcome> {
        let done = self.run("test", &self.config.test_cmd)?;
        if done.status.success() {
            return Ok(TestOutcome::passed());
        }
        if done.status.code().is_none() {
            return Err(Error::CommandFailed {
                phase: "test",
                message: describe_failure(&done),
            });
        }
        let mut names: Vec<String> = done
            .stdout
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if names.is_empty() {
            names.push(format!("test command exit status {}", done.status.code().unwrap_or(-1)));
        }
        Ok(TestOutcome::failed(names))
    }

    fn revert(&mut self, rules: &BTreeSet<RuleId>) -> Result<()> {
        self.write_rules(rules)?;
        self.run_checked("revert", &self.config.revert_cmd).map(drop)
    }

    fn recreate(&mut self) -> Result<()> {
        match &self.config.recreate_cmd {
            Some(cmd) => self.run_checked("recreate", cmd).map(drop),
            None => Ok(()),
        }
    }

    fn noncompliant(&mut self, rules: &BTreeSet<RuleId>) -> Result<Option<BTreeSet<RuleId>>> {
        let Some(cmd) = &self.config.compliance_cmd else {
            return Ok(None);
        };
        self.write_rules(rules)?;
        let done = self.run_checked("compliance", cmd)?;
        let ids = done
            .stdout
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(RuleId::new)
            .collect::<Result<BTreeSet<_>>>()?;
        Ok(Some(ids))
    }
}

fn describe_failure(done: &Finished) -> String {
    let status = match done.status.code() {
        Some(code) => format!("exit status {code}"),
        None => "terminated by a signal".to_string(),
    };
    let stderr = done.stderr.trim();
    if stderr.is_empty() {
        status
    } else {
        let tail: Vec<&str> = stderr.lines().rev().take(5).collect();
        let tail: Vec<&str> = tail.into_iter().rev().collect();
        format!("{status}: {}", tail.join(" | "))
    }
}

fn run_command(
    phase: &'static str,
    template: &str,
    tuple_file: &Path,
    worker: usize,
    timeout_s: u64,
) -> Result<Finished> {
    let path = tuple_file.to_string_lossy();
    let script = template
        .replace("{tuple_file}", &path)
        .replace("{worker}", &worker.to_string());
    tracing::trace!(phase, worker, %script, "running command");
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&script)
        .env("BREAKPROBE_TUPLE_FILE", tuple_file)
        .env("BREAKPROBE_WORKER", worker.to_string())
        .env("BREAKPROBE_PHASE", phase)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::CommandFailed {
            phase,
            message: format!("cannot start sh: {e}"),
        })?;

    let reader = |mut pipe: Box<dyn Read + Send>| {
        thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = pipe.read_to_end(&mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        })
    };
    let out = reader(Box::new(child.stdout.take().expect("stdout is piped")));
    let err = reader(Box::new(child.stderr.take().expect("stderr is piped")));

    let waited = child
        .wait_timeout(Duration::from_secs(timeout_s))
        .map_err(|e| Error::CommandFailed {
            phase,
            message: format!("waiting for command: {e}"),
        })?;
    let Some(status) = waited else {
        let _ = child.kill();
        let _ = child.wait();
        // Grandchildren may keep the pipes open; the reader threads are left
        // to finish on their own.
        return Err(Error::CommandTimeout {
            phase,
            seconds: timeout_s,
        });
    };
    Ok(Finished {
        status,
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
    })
}
