//! A small JVM interpreter for running fixture and instrumented classes
//! without a Java runtime.
//!
//! It covers the integer, long, float and double instruction set, static
//! fields and calls, `new`/`athrow` of exception objects, exception tables
//! and switches. Arrays, instance fields, monitors, `invokeinterface` and
//! `invokedynamic` are not supported. `java.lang.Math.abs` and the
//! `CoverageLog` runtime are built in.

mod suite;
mod value;

pub use suite::{
    parse_suite, run_suite, run_suite_with, SuiteError, SuiteReport, TestCase, TestResult, TestStatus, TypedValue,
};
pub use value::{Ref, Value};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::classfile::opcodes as op;
use crate::classfile::{
    self, ClassFileError, ClassModel, CodeModel, Constant, FieldType, MethodDescriptor, Operand, Ordinal,
};
use crate::covdb::SessionRecorder;
use crate::instrument::{GET_INSTANCE_DESCRIPTOR, GET_INSTANCE_METHOD, RECORDER_CLASS, RECORD_DESCRIPTOR, RECORD_METHOD};

#[derive(Debug, Error)]
pub enum VmError {
    #[error("unsupported instruction {mnemonic} at {at}")]
    UnsupportedOpcode { mnemonic: String, at: String },
    #[error("stack or local variable violation at {at}: {reason}")]
    StackViolation { at: String, reason: String },
    #[error("unresolved method {0}")]
    UnresolvedMethod(String),
    #[error("unresolved field {0}")]
    UnresolvedField(String),
    #[error("class {0} is not loaded")]
    UnknownClass(String),
    #[error("class {0} supplied twice")]
    DuplicateClass(String),
    #[error("bad arguments for {method}: {reason}")]
    BadArguments { method: String, reason: String },
    #[error("step limit of {0} exceeded")]
    StepLimit(u64),
    #[error("call depth limit of {0} exceeded")]
    DepthLimit(usize),
    #[error("execution ran past the last instruction of {0}")]
    FellOffCode(String),
    #[error(transparent)]
    ClassFile(#[from] ClassFileError),
}

/// How a call ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Returned(Option<Value>),
    /// Uncaught guest exception, by internal class name.
    Threw(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_steps: u64,
    pub max_depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_steps: 10_000_000, max_depth: 200 }
    }
}

/// One executed instruction position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub class: String,
    pub method: String,
    pub descriptor: String,
    pub ordinal: Ordinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Running,
    Done,
}

const ARITHMETIC: &str = "java/lang/ArithmeticException";
const NULL_POINTER: &str = "java/lang/NullPointerException";
const INIT_ERROR: &str = "java/lang/ExceptionInInitializerError";

pub struct Vm {
    classes: Vec<Arc<ClassModel>>,
    by_name: HashMap<String, usize>,
    statics: HashMap<(usize, String), Value>,
    init: HashMap<usize, Init>,
    recorder: Arc<SessionRecorder>,
    limits: Limits,
    steps: u64,
    trace: Option<HashSet<(usize, usize, Ordinal)>>,
}

impl Vm {
    pub fn new(classes: Vec<ClassModel>, recorder: Arc<SessionRecorder>) -> Result<Vm, VmError> {
        Vm::with_shared(classes.into_iter().map(Arc::new).collect(), recorder)
    }

    /// Like [`Vm::new`], sharing already loaded models between instances.
    pub fn with_shared(classes: Vec<Arc<ClassModel>>, recorder: Arc<SessionRecorder>) -> Result<Vm, VmError> {
        let mut vm = Vm {
            classes: Vec::new(),
            by_name: HashMap::new(),
            statics: HashMap::new(),
            init: HashMap::new(),
            recorder,
            limits: Limits::default(),
            steps: 0,
            trace: None,
        };
        for model in classes {
            let name = model.name().into_owned();
            let index = vm.classes.len();
            if vm.by_name.insert(name.clone(), index).is_some() {
                return Err(VmError::DuplicateClass(name));
            }
            for field in model.fields.iter().filter(|f| f.access_flags & classfile::ACC_STATIC != 0) {
                let ty = FieldType::parse(&model.field_descriptor(field))
                    .map_err(|e| ClassFileError::InvalidModel(e.to_string()))?;
                vm.statics.insert((index, model.field_name(field).into_owned()), Value::default_for(&ty));
            }
            vm.classes.push(model);
        }
        Ok(vm)
    }

    pub fn from_bytes<B: AsRef<[u8]>>(classes: &[B], recorder: Arc<SessionRecorder>) -> Result<Vm, VmError> {
        let models = classes.iter().map(|b| classfile::parse_class(b.as_ref())).collect::<Result<Vec<_>, _>>()?;
        Vm::new(models, recorder)
    }

    pub fn with_limits(mut self, limits: Limits) -> Vm {
        self.limits = limits;
        self
    }

    pub fn recorder(&self) -> &Arc<SessionRecorder> {
        &self.recorder
    }

    /// Starts recording executed positions, discarding any earlier trace.
    pub fn enable_trace(&mut self) {
        self.trace = Some(HashSet::new());
    }

    pub fn take_trace(&mut self) -> BTreeSet<Site> {
        let raw = self.trace.replace(HashSet::new()).unwrap_or_default();
        raw.into_iter()
            .map(|(ci, mi, ordinal)| {
                let class = &self.classes[ci];
                let m = &class.methods[mi];
                Site {
                    class: class.name().into_owned(),
                    method: class.method_name(m).into_owned(),
                    descriptor: class.method_descriptor(m).into_owned(),
                    ordinal,
                }
            })
            .collect()
    }

    pub fn static_value(&self, class: &str, field: &str) -> Option<&Value> {
        let ci = *self.by_name.get(class)?;
        self.statics.get(&(ci, field.to_owned()))
    }

    /// Calls a static method. Class names may use `.` or `/`.
    pub fn execute(&mut self, class: &str, method: &str, descriptor: &str, args: &[Value]) -> Result<Outcome, VmError> {
        let class = class.replace('.', "/");
        let full = format!("{class}.{method}{descriptor}");
        let ci = *self.by_name.get(&class).ok_or_else(|| VmError::UnknownClass(class.clone()))?;
        let mi = self.classes[ci]
            .find_method(method, descriptor)
            .filter(|&mi| self.classes[ci].methods[mi].is_static())
            .ok_or_else(|| VmError::UnresolvedMethod(full.clone()))?;
        let desc = MethodDescriptor::parse(descriptor).map_err(|e| ClassFileError::InvalidModel(e.to_string()))?;
        if desc.params.len() != args.len() {
            return Err(VmError::BadArguments {
                method: full,
                reason: format!("expected {} arguments, got {}", desc.params.len(), args.len()),
            });
        }
        for (i, (ty, v)) in desc.params.iter().zip(args).enumerate() {
            if !v.fits(ty) {
                return Err(VmError::BadArguments { method: full, reason: format!("argument {i} is a {}", v.kind()) });
            }
        }
        self.steps = 0;
        if self.ensure_init(ci, 0)?.is_some() {
            return Ok(Outcome::Threw(INIT_ERROR.into()));
        }
        self.invoke(ci, mi, args.to_vec(), 0)
    }

    /// Runs `<clinit>` of `ci` (superclass first) the first time it is
    /// needed. Returns the exception class if initialization threw.
    fn ensure_init(&mut self, ci: usize, depth: usize) -> Result<Option<String>, VmError> {
        if self.init.contains_key(&ci) {
            return Ok(None);
        }
        self.init.insert(ci, Init::Running);
        let class = self.classes[ci].clone();
        if let Some(sup) = class.super_name().and_then(|s| self.by_name.get(s.as_ref()).copied()) {
            if let Some(thrown) = self.ensure_init(sup, depth)? {
                self.init.insert(ci, Init::Done);
                return Ok(Some(thrown));
            }
        }
        let result = match class.find_method("<clinit>", "()V") {
            Some(mi) => match self.invoke(ci, mi, Vec::new(), depth)? {
                Outcome::Threw(c) => Some(c),
                Outcome::Returned(_) => None,
            },
            None => None,
        };
        self.init.insert(ci, Init::Done);
        Ok(result)
    }

    fn lookup_method(&self, mut ci: usize, name: &str, descriptor: &str) -> Option<(usize, usize)> {
        loop {
            let class = &self.classes[ci];
            if let Some(mi) = class.find_method(name, descriptor) {
                return Some((ci, mi));
            }
            ci = *self.by_name.get(class.super_name()?.as_ref())?;
        }
    }

    fn lookup_field(&self, mut ci: usize, name: &str) -> Option<usize> {
        loop {
            let key = (ci, name.to_owned());
            if self.statics.contains_key(&key) {
                return Some(ci);
            }
            ci = *self.by_name.get(self.classes[ci].super_name()?.as_ref())?;
        }
    }

    /// Whether an exception of class `thrown` is caught by `catch`.
    fn catches(&self, catch: &str, thrown: &str) -> bool {
        let mut current = thrown.to_owned();
        for _ in 0..64 {
            if current == catch {
                return true;
            }
            let next = match self.by_name.get(&current) {
                Some(&ci) => self.classes[ci].super_name().map(|s| s.into_owned()),
                None => builtin_super(&current).map(str::to_owned),
            };
            match next {
                Some(n) => current = n,
                None => return false,
            }
        }
        false
    }

    fn invoke(&mut self, ci: usize, mi: usize, args: Vec<Value>, depth: usize) -> Result<Outcome, VmError> {
        if depth >= self.limits.max_depth {
            return Err(VmError::DepthLimit(self.limits.max_depth));
        }
        let class = self.classes[ci].clone();
        let code = class.methods[mi].code().ok_or_else(|| {
            VmError::UnresolvedMethod(format!(
                "{}.{}{} has no code",
                class.name(),
                class.method_name(&class.methods[mi]),
                class.method_descriptor(&class.methods[mi])
            ))
        })?;
        let mut frame = Frame::new(class.clone(), ci, mi, code);
        let mut slot = 0usize;
        for v in args {
            let width = v.slots();
            frame.store(slot, v)?;
            slot += width;
        }
        self.run(&mut frame, code, depth)
    }

    fn run(&mut self, fr: &mut Frame, code: &CodeModel, depth: usize) -> Result<Outcome, VmError> {
        loop {
            self.steps += 1;
            if self.steps > self.limits.max_steps {
                return Err(VmError::StepLimit(self.limits.max_steps));
            }
            if let Some(t) = &mut self.trace {
                t.insert((fr.ci, fr.mi, fr.pc));
            }
            let insn = code.instructions.get(fr.pc).ok_or_else(|| VmError::FellOffCode(fr.method_name()))?;
            let mut next = fr.pc + 1;
            let mut thrown: Option<String> = None;
            let opc = insn.opcode;
            match opc {
                op::NOP => {}
                op::ACONST_NULL => fr.push(Value::Ref(Ref::Null))?,
                op::ICONST_M1..=op::ICONST_5 => fr.push(Value::Int(i32::from(opc) - i32::from(op::ICONST_0)))?,
                op::LCONST_0 | op::LCONST_1 => fr.push(Value::Long(i64::from(opc - op::LCONST_0)))?,
                op::FCONST_0..=op::FCONST_2 => fr.push(Value::Float(f32::from(opc - op::FCONST_0)))?,
                op::DCONST_0 | op::DCONST_1 => fr.push(Value::Double(f64::from(opc - op::DCONST_0)))?,
                op::BIPUSH | op::SIPUSH => {
                    let v = match insn.operand {
                        Operand::Byte(b) => i32::from(b),
                        Operand::Short(s) => i32::from(s),
                        _ => return Err(fr.violation("malformed push operand")),
                    };
                    fr.push(Value::Int(v))?;
                }
                op::LDC | op::LDC_W | op::LDC2_W => {
                    let index = insn.pool_index().ok_or_else(|| fr.violation("ldc without pool index"))?;
                    let v = match fr.class.pool.get(index) {
                        Some(Constant::Integer(i)) => Value::Int(*i),
                        Some(Constant::Float(bits)) => Value::Float(f32::from_bits(*bits)),
                        Some(Constant::Long(l)) => Value::Long(*l),
                        Some(Constant::Double(bits)) => Value::Double(f64::from_bits(*bits)),
                        Some(Constant::String { value }) => Value::Ref(Ref::Str(fr.class.pool.utf8(*value)?.into_owned())),
                        _ => return Err(fr.unsupported(insn.mnemonic())),
                    };
                    fr.push(v)?;
                }
                op::ILOAD..=op::ALOAD => {
                    let Operand::Local(i) = insn.operand else { return Err(fr.violation("load without index")) };
                    fr.load(usize::from(i), opc - op::ILOAD)?;
                }
                op::ILOAD_0..=op::ALOAD_3 => {
                    let k = opc - op::ILOAD_0;
                    fr.load(usize::from(k % 4), k / 4)?;
                }
                op::ISTORE..=op::ASTORE => {
                    let Operand::Local(i) = insn.operand else { return Err(fr.violation("store without index")) };
                    let v = fr.pop_kind(opc - op::ISTORE)?;
                    fr.store(usize::from(i), v)?;
                }
                op::ISTORE_0..=op::ASTORE_3 => {
                    let k = opc - op::ISTORE_0;
                    let v = fr.pop_kind(k / 4)?;
                    fr.store(usize::from(k % 4), v)?;
                }
                op::POP => drop(fr.pop_slots(1)?),
                op::POP2 => drop(fr.pop_slots(2)?),
                op::DUP | op::DUP_X1 | op::DUP_X2 | op::DUP2 | op::DUP2_X1 | op::DUP2_X2 => {
                    let (top, under) = match opc {
                        op::DUP => (1, 0),
                        op::DUP_X1 => (1, 1),
                        op::DUP_X2 => (1, 2),
                        op::DUP2 => (2, 0),
                        op::DUP2_X1 => (2, 1),
                        _ => (2, 2),
                    };
                    let a = fr.pop_slots(top)?;
                    let b = fr.pop_slots(under)?;
                    fr.push_all(a.clone())?;
                    fr.push_all(b)?;
                    fr.push_all(a)?;
                }
                op::SWAP => {
                    let a = fr.pop_slots(1)?;
                    let b = fr.pop_slots(1)?;
                    fr.push_all(a)?;
                    fr.push_all(b)?;
                }
                op::IADD..=op::LXOR => thrown = self.arithmetic(fr, opc)?,
                op::IINC => {
                    let Operand::Iinc { index, delta } = insn.operand else {
                        return Err(fr.violation("iinc without operands"));
                    };
                    let v = fr.local_int(usize::from(index))?;
                    fr.store(usize::from(index), Value::Int(v.wrapping_add(i32::from(delta))))?;
                }
                op::I2L..=op::I2S => convert(fr, opc)?,
                op::LCMP => {
                    let b = fr.pop_long()?;
                    let a = fr.pop_long()?;
                    fr.push(Value::Int(a.cmp(&b) as i32))?;
                }
                op::FCMPL | op::FCMPG => {
                    let b = fr.pop_float()?;
                    let a = fr.pop_float()?;
                    fr.push(Value::Int(compare(f64::from(a), f64::from(b), opc == op::FCMPG)))?;
                }
                op::DCMPL | op::DCMPG => {
                    let b = fr.pop_double()?;
                    let a = fr.pop_double()?;
                    fr.push(Value::Int(compare(a, b, opc == op::DCMPG)))?;
                }
                op::IFEQ..=op::IFLE => {
                    let v = fr.pop_int()?;
                    if int_condition(opc - op::IFEQ, v, 0) {
                        next = branch_target(fr, &insn.operand)?;
                    }
                }
                op::IF_ICMPEQ..=op::IF_ICMPLE => {
                    let b = fr.pop_int()?;
                    let a = fr.pop_int()?;
                    if int_condition(opc - op::IF_ICMPEQ, a, b) {
                        next = branch_target(fr, &insn.operand)?;
                    }
                }
                op::IF_ACMPEQ | op::IF_ACMPNE => {
                    let b = fr.pop_ref()?;
                    let a = fr.pop_ref()?;
                    if (a == b) == (opc == op::IF_ACMPEQ) {
                        next = branch_target(fr, &insn.operand)?;
                    }
                }
                op::IFNULL | op::IFNONNULL => {
                    let r = fr.pop_ref()?;
                    if (r == Ref::Null) == (opc == op::IFNULL) {
                        next = branch_target(fr, &insn.operand)?;
                    }
                }
                op::GOTO | op::GOTO_W => next = branch_target(fr, &insn.operand)?,
                op::TABLESWITCH => {
                    let key = fr.pop_int()?;
                    let Operand::TableSwitch { default, low, targets } = &insn.operand else {
                        return Err(fr.violation("malformed tableswitch"));
                    };
                    let slot = i64::from(key) - i64::from(*low);
                    next = usize::try_from(slot).ok().and_then(|s| targets.get(s)).copied().unwrap_or(*default);
                }
                op::LOOKUPSWITCH => {
                    let key = fr.pop_int()?;
                    let Operand::LookupSwitch { default, pairs } = &insn.operand else {
                        return Err(fr.violation("malformed lookupswitch"));
                    };
                    next = pairs.iter().find(|(k, _)| *k == key).map_or(*default, |(_, t)| *t);
                }
                op::IRETURN..=op::ARETURN => {
                    let v = fr.pop_kind(opc - op::IRETURN)?;
                    return Ok(Outcome::Returned(Some(v)));
                }
                op::RETURN => return Ok(Outcome::Returned(None)),
                op::GETSTATIC | op::PUTSTATIC => thrown = self.static_field(fr, insn.pool_index(), opc, depth)?,
                op::INVOKESTATIC | op::INVOKEVIRTUAL | op::INVOKESPECIAL => {
                    thrown = self.call(fr, insn.pool_index(), opc, depth)?;
                }
                op::NEW => {
                    let index = insn.pool_index().ok_or_else(|| fr.violation("new without class"))?;
                    let class = fr.class.pool.class_name(index)?.into_owned();
                    if let Some(&ci) = self.by_name.get(&class) {
                        if let Some(t) = self.ensure_init(ci, depth + 1)? {
                            thrown = Some(t);
                        }
                    }
                    if thrown.is_none() {
                        fr.push(Value::Ref(Ref::Object { class }))?;
                    }
                }
                op::ATHROW => {
                    thrown = Some(match fr.pop_ref()? {
                        Ref::Null => NULL_POINTER.into(),
                        Ref::Object { class } => class,
                        other => return Err(fr.violation(format!("athrow of {}", Value::Ref(other)))),
                    });
                }
                _ => return Err(fr.unsupported(insn.mnemonic())),
            }
            match thrown {
                None => fr.pc = next,
                Some(class) => match self.find_handler(fr, code, &class) {
                    Some(handler) => {
                        fr.clear_stack();
                        fr.push(Value::Ref(Ref::Object { class }))?;
                        fr.pc = handler;
                    }
                    None => return Ok(Outcome::Threw(class)),
                },
            }
        }
    }

    fn find_handler(&self, fr: &Frame, code: &CodeModel, thrown: &str) -> Option<Ordinal> {
        code.exception_table.iter().find_map(|h| {
            if fr.pc < h.start || fr.pc >= h.end {
                return None;
            }
            let matches = h.catch_type == 0
                || fr.class.pool.class_name(h.catch_type).map(|c| self.catches(&c, thrown)).unwrap_or(false);
            matches.then_some(h.handler)
        })
    }

    fn arithmetic(&mut self, fr: &mut Frame, opc: u8) -> Result<Option<String>, VmError> {
        // IADD..=DNEG are laid out as int/long/float/double rows.
        if opc <= op::DNEG {
            let row = (opc - op::IADD) / 4;
            let kind = (opc - op::IADD) % 4;
            if row == 5 {
                match kind {
                    0 => {
                        let v = fr.pop_int()?;
                        fr.push(Value::Int(v.wrapping_neg()))?;
                    }
                    1 => {
                        let v = fr.pop_long()?;
                        fr.push(Value::Long(v.wrapping_neg()))?;
                    }
                    2 => {
                        let v = fr.pop_float()?;
                        fr.push(Value::Float(-v))?;
                    }
                    _ => {
                        let v = fr.pop_double()?;
                        fr.push(Value::Double(-v))?;
                    }
                }
                return Ok(None);
            }
            match kind {
                0 => {
                    let b = fr.pop_int()?;
                    let a = fr.pop_int()?;
                    let r = match row {
                        0 => a.wrapping_add(b),
                        1 => a.wrapping_sub(b),
                        2 => a.wrapping_mul(b),
                        _ if b == 0 => return Ok(Some(ARITHMETIC.into())),
                        3 => a.wrapping_div(b),
                        _ => a.wrapping_rem(b),
                    };
                    fr.push(Value::Int(r))?;
                }
                1 => {
                    let b = fr.pop_long()?;
                    let a = fr.pop_long()?;
                    let r = match row {
                        0 => a.wrapping_add(b),
                        1 => a.wrapping_sub(b),
                        2 => a.wrapping_mul(b),
                        _ if b == 0 => return Ok(Some(ARITHMETIC.into())),
                        3 => a.wrapping_div(b),
                        _ => a.wrapping_rem(b),
                    };
                    fr.push(Value::Long(r))?;
                }
                2 => {
                    let b = fr.pop_float()?;
                    let a = fr.pop_float()?;
                    fr.push(Value::Float(match row {
                        0 => a + b,
                        1 => a - b,
                        2 => a * b,
                        3 => a / b,
                        _ => a % b,
                    }))?;
                }
                _ => {
                    let b = fr.pop_double()?;
                    let a = fr.pop_double()?;
                    fr.push(Value::Double(match row {
                        0 => a + b,
                        1 => a - b,
                        2 => a * b,
                        3 => a / b,
                        _ => a % b,
                    }))?;
                }
            }
            return Ok(None);
        }
        // Shifts and bitwise ops alternate int/long.
        let long = (opc - op::ISHL) % 2 == 1;
        let kind = (opc - op::ISHL) / 2;
        if long {
            let b = if kind < 3 { i64::from(fr.pop_int()?) } else { fr.pop_long()? };
            let a = fr.pop_long()?;
            let s = (b & 0x3f) as u32;
            fr.push(Value::Long(match kind {
                0 => a.wrapping_shl(s),
                1 => a.wrapping_shr(s),
                2 => ((a as u64) >> s) as i64,
                3 => a & b,
                4 => a | b,
                _ => a ^ b,
            }))?;
        } else {
            let b = fr.pop_int()?;
            let a = fr.pop_int()?;
            let s = (b & 0x1f) as u32;
            fr.push(Value::Int(match kind {
                0 => a.wrapping_shl(s),
                1 => a.wrapping_shr(s),
                2 => ((a as u32) >> s) as i32,
                3 => a & b,
                4 => a | b,
                _ => a ^ b,
            }))?;
        }
        Ok(None)
    }

    fn static_field(
        &mut self,
        fr: &mut Frame,
        index: Option<u16>,
        opc: u8,
        depth: usize,
    ) -> Result<Option<String>, VmError> {
        let index = index.ok_or_else(|| fr.violation("field access without pool index"))?;
        let m = fr.class.pool.member_ref(index)?;
        let describe = || format!("{}.{}:{}", m.class, m.name, m.descriptor);
        let ci = *self.by_name.get(m.class.as_ref()).ok_or_else(|| VmError::UnresolvedField(describe()))?;
        let owner = self.lookup_field(ci, &m.name).ok_or_else(|| VmError::UnresolvedField(describe()))?;
        if let Some(t) = self.ensure_init(owner, depth + 1)? {
            return Ok(Some(t));
        }
        let key = (owner, m.name.into_owned());
        if opc == op::GETSTATIC {
            let v = self.statics[&key].clone();
            fr.push(v)?;
        } else {
            let v = fr.pop()?;
            if v.kind() != self.statics[&key].kind() {
                return Err(fr.violation(format!("putstatic of a {} into {}", v.kind(), key.1)));
            }
            self.statics.insert(key, v);
        }
        Ok(None)
    }

    fn call(&mut self, fr: &mut Frame, index: Option<u16>, opc: u8, depth: usize) -> Result<Option<String>, VmError> {
        let index = index.ok_or_else(|| fr.violation("invoke without pool index"))?;
        let m = fr.class.pool.member_ref(index)?;
        let (class, name, descriptor) = (m.class.into_owned(), m.name.into_owned(), m.descriptor.into_owned());
        let desc = MethodDescriptor::parse(&descriptor).map_err(|e| ClassFileError::InvalidModel(e.to_string()))?;
        let mut args = Vec::with_capacity(desc.params.len() + 1);
        for ty in desc.params.iter().rev() {
            let v = fr.pop()?;
            if !v.fits(ty) {
                return Err(fr.violation(format!("{} passed for {ty:?} to {class}.{name}", v.kind())));
            }
            args.push(v);
        }
        if opc != op::INVOKESTATIC {
            args.push(Value::Ref(fr.pop_ref()?));
        }
        args.reverse();
        let full = || format!("{class}.{name}{descriptor}");

        let result = if let Some(&ci) = self.by_name.get(&class) {
            let target = match opc {
                op::INVOKEVIRTUAL => match &args[0] {
                    Value::Ref(Ref::Null) => return Ok(Some(NULL_POINTER.into())),
                    Value::Ref(Ref::Object { class: dynamic }) => {
                        let start = self.by_name.get(dynamic).copied().unwrap_or(ci);
                        self.lookup_method(start, &name, &descriptor)
                    }
                    _ => None,
                },
                _ => self.lookup_method(ci, &name, &descriptor),
            };
            match target {
                Some((tc, tm)) => {
                    if opc == op::INVOKESTATIC {
                        if let Some(t) = self.ensure_init(tc, depth + 1)? {
                            return Ok(Some(t));
                        }
                    }
                    self.invoke(tc, tm, args, depth + 1)?
                }
                // Constructors inherited from library classes.
                None if name == "<init>" => Outcome::Returned(None),
                None => return Err(VmError::UnresolvedMethod(full())),
            }
        } else {
            match self.intrinsic(&class, &name, &descriptor, &args)? {
                Some(outcome) => outcome,
                None => return Err(VmError::UnresolvedMethod(full())),
            }
        };
        match result {
            Outcome::Returned(Some(v)) => {
                if !desc.ret.as_ref().is_some_and(|t| v.fits(t)) {
                    return Err(fr.violation(format!("{} returned a {}", full(), v.kind())));
                }
                fr.push(v)?;
                Ok(None)
            }
            Outcome::Returned(None) => Ok(None),
            Outcome::Threw(c) => Ok(Some(c)),
        }
    }

    /// Library and runtime methods that are not loaded as classes.
    fn intrinsic(&mut self, class: &str, name: &str, descriptor: &str, args: &[Value]) -> Result<Option<Outcome>, VmError> {
        let returned = |v: Value| Ok(Some(Outcome::Returned(Some(v))));
        match (class, name, descriptor, args) {
            ("java/lang/Math", "abs", "(F)F", [Value::Float(a)]) => {
                returned(Value::Float(if *a <= 0.0 { 0.0 - a } else { *a }))
            }
            ("java/lang/Math", "abs", "(D)D", [Value::Double(a)]) => {
                returned(Value::Double(if *a <= 0.0 { 0.0 - a } else { *a }))
            }
            ("java/lang/Math", "abs", "(I)I", [Value::Int(a)]) => returned(Value::Int(a.wrapping_abs())),
            (RECORDER_CLASS, GET_INSTANCE_METHOD, GET_INSTANCE_DESCRIPTOR, []) => returned(Value::Ref(Ref::Recorder)),
            (RECORDER_CLASS, RECORD_METHOD, RECORD_DESCRIPTOR, [receiver, Value::Int(uid)]) => match receiver {
                Value::Ref(Ref::Recorder) => {
                    self.recorder.record(*uid as u32);
                    Ok(Some(Outcome::Returned(None)))
                }
                Value::Ref(Ref::Null) => Ok(Some(Outcome::Threw(NULL_POINTER.into()))),
                _ => Ok(None),
            },
            // Library constructors only need their arguments consumed.
            (_, "<init>", _, [Value::Ref(Ref::Object { .. }), ..]) => Ok(Some(Outcome::Returned(None))),
            _ => Ok(None),
        }
    }
}

/// Superclass of library exception types the interpreter knows about.
fn builtin_super(class: &str) -> Option<&'static str> {
    Some(match class {
        "java/lang/Object" => return None,
        "java/lang/Throwable" => "java/lang/Object",
        "java/lang/Exception" | "java/lang/Error" => "java/lang/Throwable",
        "java/lang/RuntimeException" => "java/lang/Exception",
        "java/lang/ExceptionInInitializerError" => "java/lang/LinkageError",
        "java/lang/LinkageError" => "java/lang/Error",
        c if c.ends_with("Error") => "java/lang/Error",
        c if c.ends_with("Exception") && c.starts_with("java/lang/") => "java/lang/RuntimeException",
        _ => "java/lang/Exception",
    })
}

/// `*cmpl` pushes -1 for NaN, `*cmpg` pushes 1.
fn compare(a: f64, b: f64, nan_greater: bool) -> i32 {
    match a.partial_cmp(&b) {
        Some(o) => o as i32,
        None if nan_greater => 1,
        None => -1,
    }
}

/// eq, ne, lt, ge, gt, le
fn int_condition(which: u8, a: i32, b: i32) -> bool {
    match which {
        0 => a == b,
        1 => a != b,
        2 => a < b,
        3 => a >= b,
        4 => a > b,
        _ => a <= b,
    }
}

fn branch_target(fr: &Frame, operand: &Operand) -> Result<Ordinal, VmError> {
    match operand {
        Operand::Branch(t) => Ok(*t),
        _ => Err(fr.violation("branch without target")),
    }
}

fn convert(fr: &mut Frame, opc: u8) -> Result<(), VmError> {
    let v = match opc {
        op::I2L | op::I2F | op::I2D | op::I2B | op::I2C | op::I2S => {
            let i = fr.pop_int()?;
            match opc {
                op::I2L => Value::Long(i64::from(i)),
                op::I2F => Value::Float(i as f32),
                op::I2D => Value::Double(f64::from(i)),
                op::I2B => Value::Int(i32::from(i as i8)),
                op::I2C => Value::Int(i32::from(i as u16)),
                _ => Value::Int(i32::from(i as i16)),
            }
        }
        op::L2I | op::L2F | op::L2D => {
            let l = fr.pop_long()?;
            match opc {
                op::L2I => Value::Int(l as i32),
                op::L2F => Value::Float(l as f32),
                _ => Value::Double(l as f64),
            }
        }
        // Rust float-to-int casts saturate and map NaN to 0, as the JVM does.
        op::F2I | op::F2L | op::F2D => {
            let x = fr.pop_float()?;
            match opc {
                op::F2I => Value::Int(x as i32),
                op::F2L => Value::Long(x as i64),
                _ => Value::Double(f64::from(x)),
            }
        }
        _ => {
            let x = fr.pop_double()?;
            match opc {
                op::D2I => Value::Int(x as i32),
                op::D2L => Value::Long(x as i64),
                _ => Value::Float(x as f32),
            }
        }
    };
    fr.push(v)
}

struct Frame {
    class: Arc<ClassModel>,
    ci: usize,
    mi: usize,
    pc: Ordinal,
    stack: Vec<Value>,
    slots: usize,
    max_stack: usize,
    locals: Vec<Option<Value>>,
}

const KINDS: [&str; 5] = ["int", "long", "float", "double", "reference"];

impl Frame {
    fn new(class: Arc<ClassModel>, ci: usize, mi: usize, code: &CodeModel) -> Frame {
        Frame {
            class,
            ci,
            mi,
            pc: 0,
            stack: Vec::with_capacity(usize::from(code.max_stack)),
            slots: 0,
            max_stack: usize::from(code.max_stack),
            locals: vec![None; usize::from(code.max_locals)],
        }
    }

    fn method_name(&self) -> String {
        let m = &self.class.methods[self.mi];
        format!("{}.{}{}", self.class.name(), self.class.method_name(m), self.class.method_descriptor(m))
    }

    fn at(&self) -> String {
        format!("{} #{}", self.method_name(), self.pc)
    }

    fn violation(&self, reason: impl Into<String>) -> VmError {
        VmError::StackViolation { at: self.at(), reason: reason.into() }
    }

    fn unsupported(&self, mnemonic: &str) -> VmError {
        VmError::UnsupportedOpcode { mnemonic: mnemonic.to_owned(), at: self.at() }
    }

    fn push(&mut self, v: Value) -> Result<(), VmError> {
        self.slots += v.slots();
        if self.slots > self.max_stack {
            return Err(self.violation(format!("operand stack exceeds max_stack {}", self.max_stack)));
        }
        self.stack.push(v);
        Ok(())
    }

    fn push_all(&mut self, values: Vec<Value>) -> Result<(), VmError> {
        values.into_iter().try_for_each(|v| self.push(v))
    }

    fn pop(&mut self) -> Result<Value, VmError> {
        let v = self.stack.pop().ok_or_else(|| self.violation("pop from empty operand stack"))?;
        self.slots -= v.slots();
        Ok(v)
    }

    fn clear_stack(&mut self) {
        self.stack.clear();
        self.slots = 0;
    }

    /// Pops values covering exactly `n` slots, returned bottom first.
    fn pop_slots(&mut self, n: usize) -> Result<Vec<Value>, VmError> {
        let mut out = Vec::new();
        let mut taken = 0;
        while taken < n {
            let v = self.pop()?;
            taken += v.slots();
            out.push(v);
        }
        if taken != n {
            return Err(self.violation("stack manipulation splits a two-slot value"));
        }
        out.reverse();
        Ok(out)
    }

    /// Pops a value of kind `k` (0 int, 1 long, 2 float, 3 double, 4 reference).
    fn pop_kind(&mut self, k: u8) -> Result<Value, VmError> {
        let v = self.pop()?;
        if v.kind() != KINDS[usize::from(k)] {
            return Err(self.violation(format!("expected {}, found {}", KINDS[usize::from(k)], v.kind())));
        }
        Ok(v)
    }

    fn pop_int(&mut self) -> Result<i32, VmError> {
        match self.pop_kind(0)? {
            Value::Int(v) => Ok(v),
            _ => unreachable!(),
        }
    }

    fn pop_long(&mut self) -> Result<i64, VmError> {
        match self.pop_kind(1)? {
            Value::Long(v) => Ok(v),
            _ => unreachable!(),
        }
    }

    fn pop_float(&mut self) -> Result<f32, VmError> {
        match self.pop_kind(2)? {
            Value::Float(v) => Ok(v),
            _ => unreachable!(),
        }
    }

    fn pop_double(&mut self) -> Result<f64, VmError> {
        match self.pop_kind(3)? {
            Value::Double(v) => Ok(v),
            _ => unreachable!(),
        }
    }

    fn pop_ref(&mut self) -> Result<Ref, VmError> {
        match self.pop_kind(4)? {
            Value::Ref(r) => Ok(r),
            _ => unreachable!(),
        }
    }

    fn load(&mut self, index: usize, k: u8) -> Result<(), VmError> {
        let v = match self.locals.get(index) {
            Some(Some(v)) if v.kind() == KINDS[usize::from(k)] => v.clone(),
            Some(Some(v)) => {
                return Err(self.violation(format!("local {index} holds {}, not {}", v.kind(), KINDS[usize::from(k)])))
            }
            Some(None) => return Err(self.violation(format!("local {index} is unset"))),
            None => return Err(self.violation(format!("local {index} beyond max_locals {}", self.locals.len()))),
        };
        self.push(v)
    }

    fn local_int(&self, index: usize) -> Result<i32, VmError> {
        match self.locals.get(index) {
            Some(Some(Value::Int(v))) => Ok(*v),
            _ => Err(self.violation(format!("local {index} is not an int"))),
        }
    }

    fn store(&mut self, index: usize, v: Value) -> Result<(), VmError> {
        let width = v.slots();
        if index + width > self.locals.len() {
            return Err(self.violation(format!("local {index} beyond max_locals {}", self.locals.len())));
        }
        if index > 0 && self.locals[index - 1].as_ref().is_some_and(|p| p.slots() == 2) {
            self.locals[index - 1] = None;
        }
        if width == 2 {
            self.locals[index + 1] = None;
        }
        self.locals[index] = Some(v);
        Ok(())
    }
}
