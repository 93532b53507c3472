//! Inserts hit recording in front of goal sites.
//!
//! Each site gets `getstatic <this>.company_coverage_reporter`, `ldc <uid>`
//! and `invokevirtual CoverageLog.record:(I)V`. The field is filled by a
//! `getInstance` call at the start of `<clinit>`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::classfile::opcodes as op;
use crate::classfile::{
    self, ClassFileError, ClassModel, CodeModel, ConstantPool, FieldModel, Instruction, MethodAttribute,
    MethodModel, Ordinal,
};
use crate::goals::{CoverageGoal, GoalKey, GoalUid, SignatureError};

pub const RECORDER_CLASS: &str = "org/cprover/coverage/CoverageLog";
pub const RECORDER_DESCRIPTOR: &str = "Lorg/cprover/coverage/CoverageLog;";
pub const REPORTER_FIELD: &str = "company_coverage_reporter";
pub const RECORD_METHOD: &str = "record";
pub const RECORD_DESCRIPTOR: &str = "(I)V";
pub const GET_INSTANCE_METHOD: &str = "getInstance";
pub const GET_INSTANCE_DESCRIPTOR: &str = "()Lorg/cprover/coverage/CoverageLog;";

/// Instructions added per site.
pub const SEQUENCE_LEN: usize = 3;

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("goal {goal}: bytecode index {index} out of range, {method} has {count} instructions")]
    OrdinalOutOfRange { goal: String, method: String, index: usize, count: usize },
    #[error("class {class} already has field {REPORTER_FIELD} with descriptor {descriptor}")]
    FieldClash { class: String, descriptor: String },
    #[error("class {class} is already instrumented")]
    AlreadyInstrumented { class: String },
    #[error(transparent)]
    ClassFile(#[from] ClassFileError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarningKind {
    /// The goal names a different class.
    OtherClass,
    MissingMethod,
    /// Abstract or native target.
    NoCode,
    NoUid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrumentationWarning {
    pub goal: String,
    pub kind: WarningKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodPlan {
    pub method_index: usize,
    pub name: String,
    pub descriptor: String,
    pub sites: BTreeMap<Ordinal, GoalUid>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstrumentationPlan {
    pub class_name: String,
    pub methods: Vec<MethodPlan>,
    pub warnings: Vec<InstrumentationWarning>,
}

impl InstrumentationPlan {
    pub fn site_count(&self) -> usize {
        self.methods.iter().map(|m| m.sites.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.site_count() == 0
    }

    pub fn uids(&self) -> BTreeSet<GoalUid> {
        self.methods.iter().flat_map(|m| m.sites.values().copied()).collect()
    }
}

pub fn build_plan(
    goals: &[CoverageGoal],
    uids: &BTreeMap<GoalKey, GoalUid>,
    model: &ClassModel,
) -> Result<InstrumentationPlan, InstrumentError> {
    let class_name = model.name().into_owned();
    let mut methods: BTreeMap<usize, MethodPlan> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut warn = |goal: &CoverageGoal, kind, message: String| {
        log::debug!("goal {}: {message}", goal.name);
        warnings.push(InstrumentationWarning { goal: goal.name.clone(), kind, message });
    };
    for goal in goals {
        let sig = goal.signature()?;
        if sig.class_name != class_name {
            warn(goal, WarningKind::OtherClass, format!("targets class {}, not {class_name}", sig.class_name));
            continue;
        }
        let Some(index) = model.find_method(&sig.method, &sig.descriptor) else {
            warn(goal, WarningKind::MissingMethod, format!("method {}{} not found in {class_name}", sig.method, sig.descriptor));
            continue;
        };
        let Some(code) = model.methods[index].code() else {
            warn(goal, WarningKind::NoCode, format!("method {}{} is abstract or native", sig.method, sig.descriptor));
            continue;
        };
        if goal.bytecode_index >= code.len() {
            return Err(InstrumentError::OrdinalOutOfRange {
                goal: goal.name.clone(),
                method: format!("{class_name}.{}{}", sig.method, sig.descriptor),
                index: goal.bytecode_index,
                count: code.len(),
            });
        }
        let Some(&uid) = uids.get(&goal.key()) else {
            warn(goal, WarningKind::NoUid, format!("no UID assigned for {}", goal.key()));
            continue;
        };
        methods
            .entry(index)
            .or_insert_with(|| MethodPlan {
                method_index: index,
                name: sig.method.clone(),
                descriptor: sig.descriptor.clone(),
                sites: BTreeMap::new(),
            })
            .sites
            .insert(goal.bytecode_index, uid);
    }
    Ok(InstrumentationPlan { class_name, methods: methods.into_values().collect(), warnings })
}

/// The recording sequence for one UID.
pub fn recording_sequence(
    pool: &mut ConstantPool,
    class_name: &str,
    uid: GoalUid,
) -> Result<Vec<Instruction>, ClassFileError> {
    let field = pool.intern_fieldref(class_name, REPORTER_FIELD, RECORDER_DESCRIPTOR)?;
    let record = pool.intern_methodref(RECORDER_CLASS, RECORD_METHOD, RECORD_DESCRIPTOR)?;
    let value = i32::try_from(uid).map_err(|_| ClassFileError::InvalidModel(format!("uid {uid} exceeds int range")))?;
    let constant = pool.intern_integer(value)?;
    let load = if constant <= 255 { op::LDC } else { op::LDC_W };
    Ok(vec![
        Instruction::pool(op::GETSTATIC, field),
        Instruction::pool(load, constant),
        Instruction::pool(op::INVOKEVIRTUAL, record),
    ])
}

/// Returns a copy of `code` with the recording sequence before every site.
/// Whatever pointed at a site (branches, handler ranges and entry points,
/// line numbers, frames) now points at the start of its sequence.
pub fn instrument_method(
    code: &CodeModel,
    sites: &BTreeMap<Ordinal, GoalUid>,
    class_name: &str,
    pool: &mut ConstantPool,
) -> Result<CodeModel, ClassFileError> {
    let mut out = code.clone();
    if sites.is_empty() {
        return Ok(out);
    }
    if let Some((&last, _)) = sites.iter().next_back() {
        if last >= code.len() {
            return Err(ClassFileError::InvalidModel(format!("site {last} beyond code of {} instructions", code.len())));
        }
    }
    let mut insertions = BTreeMap::new();
    for (&ordinal, &uid) in sites.iter().rev() {
        insertions.insert(ordinal, recording_sequence(pool, class_name, uid)?);
    }
    out.insert_before(insertions, true)?;
    out.max_stack = code
        .max_stack
        .checked_add(2)
        .ok_or_else(|| ClassFileError::EncodeOverflow("max_stack exceeds 65535".into()))?;
    Ok(out)
}

/// Adds the reporter field and the `<clinit>` code that fills it. Returns
/// false when the field already exists, in which case nothing changes.
pub fn ensure_runtime_field(model: &mut ClassModel) -> Result<bool, InstrumentError> {
    if let Some(f) = model.find_field(REPORTER_FIELD) {
        let descriptor = model.field_descriptor(f);
        if descriptor == RECORDER_DESCRIPTOR {
            return Ok(false);
        }
        return Err(InstrumentError::FieldClash { class: model.name().into_owned(), descriptor: descriptor.into_owned() });
    }
    let class_name = model.name().into_owned();
    let is_interface = model.access_flags & classfile::ACC_INTERFACE != 0;
    let clinit = model.find_method("<clinit>", "()V");
    let pool = &mut model.pool;
    let name_index = pool.intern_utf8(REPORTER_FIELD)?;
    let descriptor_index = pool.intern_utf8(RECORDER_DESCRIPTOR)?;
    let access_flags = if is_interface {
        classfile::ACC_PUBLIC | classfile::ACC_STATIC | classfile::ACC_FINAL
    } else {
        classfile::ACC_STATIC
    };
    model.fields.push(FieldModel { access_flags, name_index, descriptor_index, attributes: Vec::new() });

    let get_instance = pool.intern_methodref(RECORDER_CLASS, GET_INSTANCE_METHOD, GET_INSTANCE_DESCRIPTOR)?;
    let field = pool.intern_fieldref(&class_name, REPORTER_FIELD, RECORDER_DESCRIPTOR)?;
    let prologue = vec![Instruction::pool(op::INVOKESTATIC, get_instance), Instruction::pool(op::PUTSTATIC, field)];

    match clinit {
        Some(index) => {
            let code = model.methods[index]
                .code_mut()
                .ok_or_else(|| ClassFileError::InvalidModel("<clinit> without code".into()))?;
            // Plain shift: branches back to the original first instruction
            // must not re-run the prologue.
            code.insert_before(BTreeMap::from([(0, prologue)]), false)?;
            code.max_stack = code.max_stack.max(1);
        }
        None => {
            let name_index = pool.intern_utf8("<clinit>")?;
            let descriptor_index = pool.intern_utf8("()V")?;
            let code_name = pool.intern_utf8("Code")?;
            let mut instructions = prologue;
            instructions.push(Instruction::simple(op::RETURN));
            model.methods.push(MethodModel {
                access_flags: classfile::ACC_STATIC,
                name_index,
                descriptor_index,
                attributes: vec![MethodAttribute::Code {
                    name_index: code_name,
                    code: CodeModel {
                        max_stack: 1,
                        max_locals: 0,
                        instructions,
                        exception_table: Vec::new(),
                        attributes: Vec::new(),
                    },
                }],
            });
        }
    }
    Ok(true)
}

#[derive(Debug, Clone)]
pub struct InstrumentedClass {
    pub class_name: String,
    pub bytes: Vec<u8>,
    /// UIDs placed, ascending.
    pub uids: Vec<GoalUid>,
    pub plan: InstrumentationPlan,
}

/// Parses, instruments every planned method, adds the runtime field and
/// re-emits. A class with no matching goals is returned byte for byte.
pub fn instrument_class(
    bytes: &[u8],
    goals: &[CoverageGoal],
    uids: &BTreeMap<GoalKey, GoalUid>,
) -> Result<InstrumentedClass, InstrumentError> {
    let mut model = classfile::parse_class(bytes)?;
    let class_name = model.name().into_owned();
    if let Some(f) = model.find_field(REPORTER_FIELD) {
        let descriptor = model.field_descriptor(f).into_owned();
        return Err(if descriptor == RECORDER_DESCRIPTOR {
            InstrumentError::AlreadyInstrumented { class: class_name }
        } else {
            InstrumentError::FieldClash { class: class_name, descriptor }
        });
    }
    let plan = build_plan(goals, uids, &model)?;
    if plan.is_empty() {
        return Ok(InstrumentedClass { class_name, bytes: bytes.to_vec(), uids: Vec::new(), plan });
    }
    for m in &plan.methods {
        let original = model.methods[m.method_index].code().expect("planned methods have code").clone();
        let code = instrument_method(&original, &m.sites, &class_name, &mut model.pool)?;
        *model.methods[m.method_index].code_mut().expect("planned methods have code") = code;
    }
    ensure_runtime_field(&mut model)?;
    let bytes = classfile::emit_class(&model)?;
    let uids = plan.uids().into_iter().collect();
    Ok(InstrumentedClass { class_name, bytes, uids, plan })
}
