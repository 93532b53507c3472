//! Coverage goals produced by the test generator, and their UIDs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::classfile::MethodDescriptor;
use crate::covdb::{GoalMeta, HitCountDb};

/// Dense identifier of one instrumentation site, loaded by the inserted
/// `ldc` as an `int`.
pub type GoalUid = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageGoal {
    pub name: String,
    pub description: String,
    pub covered_lines: String,
    pub file: String,
    /// e.g. `FloatTools.sign:(F)I`
    pub function: String,
    pub line: u32,
    /// Instruction ordinal within the method.
    pub bytecode_index: usize,
}

impl CoverageGoal {
    pub fn key(&self) -> GoalKey {
        GoalKey::new(&self.function, self.bytecode_index)
    }

    pub fn signature(&self) -> Result<FunctionSignature, SignatureError> {
        parse_function_signature(&self.function)
    }
}

/// Persisted identity of a site: `Class.method:(desc)Ret@index`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GoalKey(String);

impl GoalKey {
    pub fn new(function: &str, bytecode_index: usize) -> Self {
        GoalKey(format!("{function}@{bytecode_index}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GoalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("goal file {path}: {reason}")]
pub struct GoalParseError {
    /// JSON path of the offending element, e.g. `$[3].sourceLocation.line`.
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad function signature {signature:?}: {reason}")]
pub struct SignatureError {
    pub signature: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSignature {
    /// Internal form, `a/b/C$D`.
    pub class_name: String,
    pub method: String,
    pub descriptor: String,
}

pub fn parse_function_signature(s: &str) -> Result<FunctionSignature, SignatureError> {
    let fail = |reason: &str| SignatureError { signature: s.to_owned(), reason: reason.to_owned() };
    let colon = s.find(':').ok_or_else(|| fail("missing ':'"))?;
    let (qualified, descriptor) = (&s[..colon], &s[colon + 1..]);
    let dot = qualified.rfind('.').ok_or_else(|| fail("missing class name"))?;
    let (class, method) = (&qualified[..dot], &qualified[dot + 1..]);
    if class.is_empty() || class.split('.').any(str::is_empty) {
        return Err(fail("empty class name segment"));
    }
    if method.is_empty() {
        return Err(fail("empty method name"));
    }
    MethodDescriptor::parse(descriptor).map_err(|e| fail(&e.to_string()))?;
    Ok(FunctionSignature {
        class_name: class.replace('.', "/"),
        method: method.to_owned(),
        descriptor: descriptor.to_owned(),
    })
}

fn err(path: &str, reason: impl Into<String>) -> GoalParseError {
    GoalParseError { path: path.to_owned(), reason: reason.into() }
}

fn string_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<String>, GoalParseError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(_) => Err(err(&format!("{path}.{key}"), "expected a string")),
    }
}

/// Accepts JSON numbers and numeric strings such as `"5"`.
fn integer_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<u64, GoalParseError> {
    let at = format!("{path}.{key}");
    match obj.get(key) {
        Some(Value::Number(n)) => n.as_u64().ok_or_else(|| err(&at, "expected a non-negative integer")),
        Some(Value::String(s)) => s
            .trim()
            .parse::<u64>()
            .map_err(|_| err(&at, format!("expected a non-negative integer, found {s:?}"))),
        Some(_) => Err(err(&at, "expected a non-negative integer")),
        None => Err(err(&at, "missing required field")),
    }
}

fn goal_from_entry(obj: &Map<String, Value>, path: &str) -> Result<CoverageGoal, GoalParseError> {
    let name = string_field(obj, "name", path)?.ok_or_else(|| err(&format!("{path}.name"), "missing required field"))?;
    let location_path = format!("{path}.sourceLocation");
    let location = match obj.get("sourceLocation") {
        Some(Value::Object(l)) => l,
        Some(_) => return Err(err(&location_path, "expected an object")),
        None => return Err(err(&location_path, "missing required field")),
    };
    let function = string_field(location, "function", &location_path)?
        .ok_or_else(|| err(&format!("{location_path}.function"), "missing required field"))?;
    parse_function_signature(&function).map_err(|e| err(&format!("{location_path}.function"), e.to_string()))?;
    let bytecode_index = integer_field(location, "bytecodeIndex", &location_path)?;
    let line = integer_field(location, "line", &location_path)?;
    if line == 0 || line > u32::MAX as u64 {
        return Err(err(&format!("{location_path}.line"), "line must be between 1 and 2^32-1"));
    }
    Ok(CoverageGoal {
        name,
        description: string_field(obj, "description", path)?.unwrap_or_default(),
        covered_lines: string_field(obj, "coveredLines", path)?.unwrap_or_default(),
        file: string_field(location, "file", &location_path)?.unwrap_or_default(),
        function,
        line: line as u32,
        bytecode_index: usize::try_from(bytecode_index)
            .map_err(|_| err(&format!("{location_path}.bytecodeIndex"), "index too large"))?,
    })
}

fn collect(value: &Value, path: &str, out: &mut Vec<CoverageGoal>) -> Result<(), GoalParseError> {
    match value {
        Value::Object(obj) => {
            if obj.get("class").and_then(Value::as_str) == Some("coverage") {
                out.push(goal_from_entry(obj, path)?);
            } else {
                for (k, v) in obj {
                    collect(v, &format!("{path}.{k}"), out)?;
                }
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                collect(v, &format!("{path}[{i}]"), out)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Extracts every `"class": "coverage"` entry, wherever it appears in the
/// document, in document order.
pub fn parse_goals(text: &str) -> Result<Vec<CoverageGoal>, GoalParseError> {
    let value: Value = serde_json::from_str(text).map_err(|e| err("$", format!("invalid JSON: {e}")))?;
    let mut goals = Vec::new();
    collect(&value, "$", &mut goals)?;
    let mut seen = HashSet::new();
    for g in &goals {
        if !seen.insert(g.name.as_str()) {
            return Err(err("$", format!("duplicate goal name {:?}", g.name)));
        }
    }
    Ok(goals)
}

/// Writes goals in the generator's format (numeric fields as strings).
pub fn serialize_goals(goals: &[CoverageGoal]) -> String {
    let entries: Vec<Value> = goals
        .iter()
        .map(|g| {
            serde_json::json!({
                "class": "coverage",
                "coveredLines": g.covered_lines,
                "description": g.description,
                "expression": "false",
                "name": g.name,
                "sourceLocation": {
                    "bytecodeIndex": g.bytecode_index.to_string(),
                    "file": g.file,
                    "function": g.function,
                    "line": g.line.to_string(),
                }
            })
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("JSON values always serialize")
}

/// Gives every goal site a UID. Keys already in `db` keep theirs; new keys
/// are numbered from the current maximum + 1 in goal order. Goals sharing a
/// site share a UID, and the first goal's name is recorded.
pub fn assign_uids(goals: &[CoverageGoal], db: &mut HitCountDb) -> BTreeMap<GoalKey, GoalUid> {
    let mut known: HashMap<String, GoalUid> = db.meta.iter().map(|(uid, m)| (m.key.clone(), *uid)).collect();
    let mut next = db.next_uid();
    let mut mapping = BTreeMap::new();
    for goal in goals {
        let key = goal.key();
        let uid = *known.entry(key.as_str().to_owned()).or_insert_with(|| {
            let uid = next;
            next += 1;
            db.meta.insert(uid, GoalMeta { key: key.as_str().to_owned(), name: goal.name.clone() });
            uid
        });
        mapping.insert(key, uid);
    }
    mapping
}
