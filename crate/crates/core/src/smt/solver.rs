//! Running an external SMT-LIB solver.
//!
//! The command template is split on whitespace. If an argument contains
//! `{file}` the script is written to a temporary file whose path replaces the
//! placeholder; otherwise the script is piped to stdin. The first token on
//! stdout must be `sat`, `unsat` or `unknown`; after `sat` the next expression
//! is read as the model. A nonzero exit status is only an error when no verdict
//! was printed (z3 exits 1 when `(get-model)` follows `unsat`).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use super::sexp::{parse_all, Sexp};

/// Environment variable overriding the solver command template.
pub const SOLVER_ENV: &str = "SLICEALLOC_SOLVER";
pub const DEFAULT_SOLVER: &str = "z3 -in -smt2";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("empty solver command")]
    EmptyCommand,
    #[error("cannot start solver `{command}`: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("solver failed ({status}): {stderr}")]
    Process { status: String, stderr: String },
    #[error("cannot parse solver output: {0}")]
    Parse(String),
    #[error("solver i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl SolverCommand {
    pub fn parse(template: &str) -> Result<Self, SolverError> {
        let mut parts = template.split_whitespace().map(str::to_string);
        let program = parts.next().ok_or(SolverError::EmptyCommand)?;
        Ok(Self {
            program,
            args: parts.collect(),
        })
    }

    /// Explicit template, else the environment override, else z3.
    pub fn resolve(explicit: Option<&str>) -> Result<Self, SolverError> {
        match explicit {
            Some(t) => Self::parse(t),
            None => match std::env::var(SOLVER_ENV) {
                Ok(t) if !t.trim().is_empty() => Self::parse(&t),
                _ => Self::parse(DEFAULT_SOLVER),
            },
        }
    }

    pub fn uses_file(&self) -> bool {
        self.args.iter().any(|a| a.contains("{file}"))
    }

    pub fn display(&self) -> String {
        std::iter::once(self.program.as_str())
            .chain(self.args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Sat,
    Unsat,
    Unknown,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

pub type Model = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverVerdict {
    pub status: Status,
    /// Present iff `status` is `Sat`.
    pub model: Option<Model>,
    /// Seconds from spawn to exit.
    pub wall_time: f64,
}

fn drain<R: Read + Send + 'static>(mut r: R) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = String::new();
        let _ = r.read_to_string(&mut buf);
        buf
    })
}

/// Runs `script` through the solver, killing it after `timeout`.
pub fn solve(cmd: &SolverCommand, script: &str, timeout: Duration) -> Result<SolverVerdict, SolverError> {
    let file = if cmd.uses_file() {
        let mut f = tempfile::Builder::new().suffix(".smt2").tempfile()?;
        f.write_all(script.as_bytes())?;
        f.flush()?;
        Some(f)
    } else {
        None
    };
    let args: Vec<String> = match &file {
        Some(f) => {
            let path = f.path().to_string_lossy();
            cmd.args.iter().map(|a| a.replace("{file}", &path)).collect()
        }
        None => cmd.args.clone(),
    };

    let start = Instant::now();
    let mut child = Command::new(&cmd.program)
        .args(&args)
        .stdin(if file.is_some() { Stdio::null() } else { Stdio::piped() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| SolverError::Spawn {
            command: cmd.display(),
            source,
        })?;

    let writer = child.stdin.take().map(|mut stdin| {
        let text = script.to_owned();
        thread::spawn(move || {
            // a solver that exits early closes the pipe; that is not our error
            let _ = stdin.write_all(text.as_bytes());
        })
    });
    let stdout = drain(child.stdout.take().expect("stdout piped"));
    let stderr = drain(child.stderr.take().expect("stderr piped"));

    let exit = match child.wait_timeout(timeout)? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(SolverVerdict {
                status: Status::Timeout,
                model: None,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
    };
    let wall_time = start.elapsed().as_secs_f64();
    if let Some(w) = writer {
        let _ = w.join();
    }
    let out = stdout.join().unwrap_or_default();
    let err = stderr.join().unwrap_or_default();

    match parse_output(&out) {
        Ok((status, model)) => Ok(SolverVerdict {
            status,
            model,
            wall_time,
        }),
        Err(_) if !exit.success() => Err(SolverError::Process {
            status: exit.to_string(),
            stderr: if err.trim().is_empty() { out } else { err },
        }),
        Err(e) => Err(e),
    }
}

/// Splits solver stdout into a verdict and, after `sat`, a model.
pub fn parse_output(out: &str) -> Result<(Status, Option<Model>), SolverError> {
    let items = parse_all(out).map_err(SolverError::Parse)?;
    let mut iter = items.iter();
    let status = match iter.next() {
        Some(Sexp::Atom(a)) if a == "sat" => Status::Sat,
        Some(Sexp::Atom(a)) if a == "unsat" => Status::Unsat,
        Some(Sexp::Atom(a)) if a == "unknown" => Status::Unknown,
        Some(other) => return Err(SolverError::Parse(format!("expected a verdict, got {other}"))),
        None => return Err(SolverError::Parse("no output".into())),
    };
    if status != Status::Sat {
        return Ok((status, None));
    }
    let model = iter
        .next()
        .ok_or_else(|| SolverError::Parse("sat without a model".into()))?;
    Ok((status, Some(parse_model(model)?)))
}

fn parse_model(model: &Sexp) -> Result<Model, SolverError> {
    let mut items = model
        .as_list()
        .ok_or_else(|| SolverError::Parse(format!("model is not a list: {model}")))?;
    // older solvers wrap the definitions as (model ...)
    if items.first().and_then(Sexp::as_atom) == Some("model") {
        items = &items[1..];
    }
    if let Some(Sexp::Atom(a)) = items.first() {
        if a == "error" {
            return Err(SolverError::Parse(format!("solver error: {model}")));
        }
    }
    let mut out = Model::new();
    for def in items {
        let parts = def
            .as_list()
            .ok_or_else(|| SolverError::Parse(format!("unexpected model entry {def}")))?;
        match parts {
            [Sexp::Atom(kw), Sexp::Atom(name), Sexp::List(params), Sexp::Atom(_sort), value]
                if kw == "define-fun" && params.is_empty() =>
            {
                out.insert(name.clone(), parse_value(value)?);
            }
            _ => return Err(SolverError::Parse(format!("unexpected model entry {def}"))),
        }
    }
    Ok(out)
}

fn parse_value(v: &Sexp) -> Result<Value, SolverError> {
    let bad = || SolverError::Parse(format!("unsupported model value {v}"));
    match v {
        Sexp::Atom(a) if a == "true" => Ok(Value::Bool(true)),
        Sexp::Atom(a) if a == "false" => Ok(Value::Bool(false)),
        Sexp::Atom(a) => a.parse().map(Value::Int).map_err(|_| bad()),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(minus), Sexp::Atom(n)] if minus == "-" => {
                n.parse::<i64>().map(|n| Value::Int(-n)).map_err(|_| bad())
            }
            _ => Err(bad()),
        },
        Sexp::Str(_) => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_verdicts() {
        assert_eq!(parse_output("unsat\n(error \"no model\")\n").unwrap(), (Status::Unsat, None));
        assert_eq!(parse_output("unknown\n").unwrap().0, Status::Unknown);
        let (status, model) =
            parse_output("sat\n(\n  (define-fun x () Int\n    (- 3))\n  (define-fun b () Bool false))\n")
                .unwrap();
        assert_eq!(status, Status::Sat);
        let model = model.unwrap();
        assert_eq!(model["x"], Value::Int(-3));
        assert_eq!(model["b"], Value::Bool(false));
        assert_eq!(
            parse_output("sat\n(model (define-fun y () Int 4))").unwrap().1.unwrap()["y"],
            Value::Int(4)
        );
    }

    #[test]
    fn parse_errors_are_distinct() {
        assert!(matches!(parse_output(""), Err(SolverError::Parse(_))));
        assert!(matches!(parse_output("sat\n"), Err(SolverError::Parse(_))));
        assert!(matches!(parse_output("(error \"x\")"), Err(SolverError::Parse(_))));
        assert!(matches!(
            parse_output("sat\n((define-fun r () Real 0.5))"),
            Err(SolverError::Parse(_))
        ));
    }

    #[test]
    fn command_templates() {
        let c = SolverCommand::parse("  z3  -in -smt2 ").unwrap();
        assert_eq!(c.program, "z3");
        assert_eq!(c.args, ["-in", "-smt2"]);
        assert!(!c.uses_file());
        assert!(SolverCommand::parse("z3 -smt2 {file}").unwrap().uses_file());
        assert!(matches!(SolverCommand::parse("   "), Err(SolverError::EmptyCommand)));
        assert_eq!(SolverCommand::resolve(Some("cvc5 x")).unwrap().program, "cvc5");
    }

    #[test]
    fn missing_program_is_a_spawn_error() {
        let c = SolverCommand::parse("/nonexistent/solver-binary").unwrap();
        assert!(matches!(
            solve(&c, "(check-sat)", Duration::from_secs(5)),
            Err(SolverError::Spawn { .. })
        ));
    }

    #[test]
    fn timeout_and_process_failure() {
        let c = SolverCommand::parse("sleep 5").unwrap();
        let v = solve(&c, "", Duration::from_millis(200)).unwrap();
        assert_eq!(v.status, Status::Timeout);
        assert!(v.model.is_none());
        assert!(v.wall_time < 4.0);
        let c = SolverCommand::parse("false").unwrap();
        assert!(matches!(
            solve(&c, "(check-sat)", Duration::from_secs(5)),
            Err(SolverError::Process { .. })
        ));
    }

    #[test]
    fn stdin_and_file_modes_use_a_fake_solver() {
        // `cat` echoes the script, which is not a verdict
        let c = SolverCommand::parse("cat").unwrap();
        assert!(matches!(
            solve(&c, "sat\n((define-fun a () Int 1))", Duration::from_secs(5))
                .unwrap()
                .model
                .unwrap()["a"],
            Value::Int(1)
        ));
        let c = SolverCommand::parse("cat {file}").unwrap();
        let v = solve(&c, "unsat\n", Duration::from_secs(5)).unwrap();
        assert_eq!(v.status, Status::Unsat);
    }
}
