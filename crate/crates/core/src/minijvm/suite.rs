//! JSON test suites run against the interpreter.
//!
//! ```json
//! [{"id": "nan", "class": "FloatTools", "method": "sign", "descriptor": "(F)I",
//!   "args": [{"kind": "float", "value": "NaN"}],
//!   "expect": {"kind": "int", "value": -2}}]
//! ```
//!
//! Kinds are `int`, `long`, `float`, `double`, `void` and `throws` (value:
//! optional exception class). Float and double values may be JSON numbers,
//! `"NaN"`, `"Infinity"`, `"-Infinity"` or a hex bit pattern such as
//! `"0x7fc00000"`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use super::{Outcome, Value, Vm, VmError};
use crate::classfile::ClassModel;
use crate::covdb::{DbError, SessionRecorder};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("invalid test suite: {0}")]
    Parse(String),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Vm(#[from] VmError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypedValue {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Box<RawValue>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub class: String,
    pub method: String,
    pub descriptor: String,
    #[serde(default)]
    pub args: Vec<TypedValue>,
    /// Without an expectation a test passes when nothing escapes.
    #[serde(default)]
    pub expect: Option<TypedValue>,
}

#[derive(Debug, Clone, PartialEq)]
enum Expected {
    Value(Value),
    Void,
    Throws(Option<String>),
}

fn text_of(raw: &RawValue) -> Result<String, String> {
    let s = raw.get().trim();
    if s.starts_with('"') {
        serde_json::from_str::<String>(s).map_err(|e| e.to_string())
    } else {
        Ok(s.to_owned())
    }
}

fn parse_float_text(t: &str) -> Option<f32> {
    match t {
        "NaN" => Some(f32::NAN),
        "Infinity" | "+Infinity" => Some(f32::INFINITY),
        "-Infinity" => Some(f32::NEG_INFINITY),
        _ => match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
            Some(hex) => u32::from_str_radix(hex, 16).ok().map(f32::from_bits),
            None => t.parse().ok(),
        },
    }
}

fn parse_double_text(t: &str) -> Option<f64> {
    match t {
        "NaN" => Some(f64::NAN),
        "Infinity" | "+Infinity" => Some(f64::INFINITY),
        "-Infinity" => Some(f64::NEG_INFINITY),
        _ => match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
            Some(hex) => u64::from_str_radix(hex, 16).ok().map(f64::from_bits),
            None => t.parse().ok(),
        },
    }
}

impl TypedValue {
    fn expected(&self) -> Result<Expected, String> {
        let text = || -> Result<String, String> {
            let raw = self.value.as_deref().ok_or_else(|| format!("{} value missing", self.kind))?;
            text_of(raw)
        };
        let bad = |t: &str| format!("{t:?} is not a valid {}", self.kind);
        Ok(match self.kind.as_str() {
            "int" => {
                let t = text()?;
                Expected::Value(Value::Int(t.parse().map_err(|_| bad(&t))?))
            }
            "long" => {
                let t = text()?;
                Expected::Value(Value::Long(t.parse().map_err(|_| bad(&t))?))
            }
            "float" => {
                let t = text()?;
                Expected::Value(Value::Float(parse_float_text(&t).ok_or_else(|| bad(&t))?))
            }
            "double" => {
                let t = text()?;
                Expected::Value(Value::Double(parse_double_text(&t).ok_or_else(|| bad(&t))?))
            }
            "void" => Expected::Void,
            "throws" => Expected::Throws(match &self.value {
                Some(raw) => Some(text_of(raw)?.replace('.', "/")),
                None => None,
            }),
            other => return Err(format!("unknown kind {other:?}")),
        })
    }

    /// The argument value; `void` and `throws` are not arguments.
    pub fn to_value(&self) -> Result<Value, String> {
        match self.expected()? {
            Expected::Value(v) => Ok(v),
            _ => Err(format!("{} cannot be an argument", self.kind)),
        }
    }
}

impl TestCase {
    pub fn arguments(&self) -> Result<Vec<Value>, String> {
        self.args.iter().map(TypedValue::to_value).collect()
    }
}

/// Parses a suite and checks every value, so a bad file fails before
/// anything runs.
pub fn parse_suite(text: &str) -> Result<Vec<TestCase>, SuiteError> {
    let tests: Vec<TestCase> = serde_json::from_str(text).map_err(|e| SuiteError::Parse(e.to_string()))?;
    for t in &tests {
        t.arguments().map_err(|e| SuiteError::Parse(format!("test {}: {e}", t.id)))?;
        if let Some(e) = &t.expect {
            e.expected().map_err(|e| SuiteError::Parse(format!("test {}: expect: {e}", t.id)))?;
        }
    }
    Ok(tests)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestStatus {
    Pass,
    Fail,
    /// The interpreter could not run the test.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub id: String,
    pub status: TestStatus,
    pub actual: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub results: Vec<TestResult>,
    /// UIDs merged into the database.
    pub flushed: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.status == TestStatus::Pass).count()
    }

    pub fn all_passed(&self) -> bool {
        self.passed() == self.results.len()
    }
}

fn describe(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Returned(Some(v)) => v.to_string(),
        Outcome::Returned(None) => "void".into(),
        Outcome::Threw(c) => format!("throws {c}"),
    }
}

fn describe_expected(e: &Expected) -> String {
    match e {
        Expected::Value(v) => v.to_string(),
        Expected::Void => "void".into(),
        Expected::Throws(Some(c)) => format!("throws {c}"),
        Expected::Throws(None) => "throws".into(),
    }
}

fn matches(expected: Option<&Expected>, actual: &Outcome) -> bool {
    match (expected, actual) {
        (None, Outcome::Returned(_)) => true,
        (Some(Expected::Value(e)), Outcome::Returned(Some(a))) => e == a,
        (Some(Expected::Void), Outcome::Returned(None)) => true,
        (Some(Expected::Throws(None)), Outcome::Threw(_)) => true,
        (Some(Expected::Throws(Some(e))), Outcome::Threw(a)) => e == a,
        _ => false,
    }
}

/// Merges the session into the database when dropped, unless
/// [`FlushGuard::finish`] already did.
struct FlushGuard<'a> {
    recorder: Arc<SessionRecorder>,
    path: &'a Path,
    armed: bool,
}

impl FlushGuard<'_> {
    fn finish(mut self) -> Result<usize, DbError> {
        self.armed = false;
        self.recorder.flush(self.path)
    }
}

impl Drop for FlushGuard<'_> {
    fn drop(&mut self) {
        if self.armed {
            if let Err(e) = self.recorder.flush(self.path) {
                log::error!("flushing coverage to {} failed: {e}", self.path.display());
            }
        }
    }
}

pub fn run_suite(
    classes: Vec<ClassModel>,
    tests: &[TestCase],
    db_path: &Path,
    first_hit: bool,
) -> Result<SuiteReport, SuiteError> {
    run_suite_with(classes, tests, db_path, first_hit, |_| {})
}

/// Runs every test in one interpreter instance, then merges the recorded
/// hits into the database once. A test that throws or cannot be run fails
/// without stopping the suite. Hits are also flushed if the run is cut
/// short by a panic, including one raised from `after_each`.
pub fn run_suite_with(
    classes: Vec<ClassModel>,
    tests: &[TestCase],
    db_path: &Path,
    first_hit: bool,
    mut after_each: impl FnMut(&TestResult),
) -> Result<SuiteReport, SuiteError> {
    let recorder = Arc::new(SessionRecorder::with_first_hit(first_hit));
    let guard = FlushGuard { recorder: recorder.clone(), path: db_path, armed: true };
    let mut vm = Vm::new(classes, recorder)?;
    let mut results = Vec::with_capacity(tests.len());
    for t in tests {
        let expected = match t.expect.as_ref().map(TypedValue::expected).transpose() {
            Ok(e) => e,
            Err(e) => return Err(SuiteError::Parse(format!("test {}: {e}", t.id))),
        };
        let args = t.arguments().map_err(|e| SuiteError::Parse(format!("test {}: {e}", t.id)))?;
        let result = match vm.execute(&t.class, &t.method, &t.descriptor, &args) {
            Ok(outcome) => TestResult {
                id: t.id.clone(),
                status: if matches(expected.as_ref(), &outcome) { TestStatus::Pass } else { TestStatus::Fail },
                actual: describe(&outcome),
                expected: expected.as_ref().map(describe_expected),
                message: None,
            },
            Err(e) => TestResult {
                id: t.id.clone(),
                status: TestStatus::Error,
                actual: "error".into(),
                expected: expected.as_ref().map(describe_expected),
                message: Some(e.to_string()),
            },
        };
        log::info!("test {}: {:?} ({})", result.id, result.status, result.actual);
        after_each(&result);
        results.push(result);
    }
    let flushed = guard.finish()?;
    Ok(SuiteReport { results, flushed })
}
