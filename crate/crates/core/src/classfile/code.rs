//! The `Code` attribute as an ordinal-indexed instruction list.
//!
//! Every byte offset found in the attribute (branch operands, exception
//! ranges, line and local variable tables, stack map frames) is converted to
//! an instruction ordinal on decode and back to a byte offset on encode, so
//! instructions can be inserted without manual offset bookkeeping.

use std::collections::BTreeMap;

use super::opcodes::{self as op, OperandLayout};
use super::pool::{self, ConstantPool};
use super::{ClassFileError, RawAttribute, Reader};

/// Position of an instruction in a method, counting from 0. For ranges, the
/// instruction count `n` denotes the end of the code.
pub type Ordinal = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    None,
    Local(u16),
    Iinc { index: u16, delta: i16 },
    Byte(i8),
    Short(i16),
    /// Constant pool index; `ldc` requires it to fit in a byte.
    Pool(u16),
    InvokeInterface { index: u16, count: u8 },
    MultiANewArray { index: u16, dimensions: u8 },
    ArrayType(u8),
    Branch(Ordinal),
    TableSwitch { default: Ordinal, low: i32, targets: Vec<Ordinal> },
    LookupSwitch { default: Ordinal, pairs: Vec<(i32, Ordinal)> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub opcode: u8,
    /// Encoded with the `wide` prefix.
    pub wide: bool,
    pub operand: Operand,
}

impl Instruction {
    pub fn simple(opcode: u8) -> Self {
        Instruction { opcode, wide: false, operand: Operand::None }
    }

    pub fn pool(opcode: u8, index: u16) -> Self {
        Instruction { opcode, wide: false, operand: Operand::Pool(index) }
    }

    pub fn branch(opcode: u8, target: Ordinal) -> Self {
        Instruction { opcode, wide: false, operand: Operand::Branch(target) }
    }

    pub fn local(opcode: u8, index: u16) -> Self {
        Instruction { opcode, wide: index > 255, operand: Operand::Local(index) }
    }

    pub fn mnemonic(&self) -> &'static str {
        op::mnemonic(self.opcode).unwrap_or("<invalid>")
    }

    pub fn pool_index(&self) -> Option<u16> {
        match self.operand {
            Operand::Pool(i)
            | Operand::InvokeInterface { index: i, .. }
            | Operand::MultiANewArray { index: i, .. } => Some(i),
            _ => None,
        }
    }

    pub fn targets(&self) -> Vec<Ordinal> {
        let mut out = Vec::new();
        self.for_each_target(|t| out.push(t));
        out
    }

    fn for_each_target(&self, mut f: impl FnMut(Ordinal)) {
        match &self.operand {
            Operand::Branch(t) => f(*t),
            Operand::TableSwitch { default, targets, .. } => {
                f(*default);
                targets.iter().copied().for_each(f);
            }
            Operand::LookupSwitch { default, pairs } => {
                f(*default);
                pairs.iter().for_each(|(_, t)| f(*t));
            }
            _ => {}
        }
    }

    pub(crate) fn map_targets(&mut self, mut f: impl FnMut(Ordinal) -> Ordinal) {
        match &mut self.operand {
            Operand::Branch(t) => *t = f(*t),
            Operand::TableSwitch { default, targets, .. } => {
                *default = f(*default);
                for t in targets {
                    *t = f(*t);
                }
            }
            Operand::LookupSwitch { default, pairs } => {
                *default = f(*default);
                for (_, t) in pairs {
                    *t = f(*t);
                }
            }
            _ => {}
        }
    }

    /// Encoded size in bytes when placed at `offset`, without branch widening.
    pub fn encoded_len(&self, offset: usize) -> usize {
        let pad = 3 - (offset % 4);
        match (&self.operand, op::layout(self.opcode)) {
            (Operand::TableSwitch { targets, .. }, _) => 1 + pad + 12 + 4 * targets.len(),
            (Operand::LookupSwitch { pairs, .. }, _) => 1 + pad + 8 + 8 * pairs.len(),
            (_, Some(OperandLayout::Local)) => if self.wide { 4 } else { 2 },
            (_, Some(OperandLayout::Iinc)) => if self.wide { 6 } else { 3 },
            (_, Some(OperandLayout::Byte | OperandLayout::PoolByte | OperandLayout::ArrayType)) => 2,
            (_, Some(OperandLayout::Short | OperandLayout::Pool | OperandLayout::Branch16)) => 3,
            (_, Some(OperandLayout::MultiANewArray)) => 4,
            (_, Some(OperandLayout::InvokeInterface | OperandLayout::InvokeDynamic | OperandLayout::Branch32)) => 5,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExceptionHandler {
    pub start: Ordinal,
    /// Exclusive.
    pub end: Ordinal,
    pub handler: Ordinal,
    /// 0 catches everything.
    pub catch_type: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineNumber {
    pub start: Ordinal,
    pub line: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalVariable {
    pub start: Ordinal,
    /// Exclusive.
    pub end: Ordinal,
    pub name_index: u16,
    pub descriptor_index: u16,
    pub index: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerificationType {
    Top,
    Integer,
    Float,
    Double,
    Long,
    Null,
    UninitializedThis,
    Object(u16),
    /// Object created by the `new` at this ordinal, not yet initialized.
    Uninitialized(Ordinal),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameKind {
    /// `extended` selects the `same_frame_extended` encoding even when the
    /// delta would fit the short form.
    Same { extended: bool },
    SameLocals1StackItem { stack: VerificationType, extended: bool },
    Chop(u8),
    Append(Vec<VerificationType>),
    Full { locals: Vec<VerificationType>, stack: Vec<VerificationType> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackMapFrame {
    pub ordinal: Ordinal,
    pub kind: FrameKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodeAttribute {
    LineNumberTable { name_index: u16, entries: Vec<LineNumber> },
    LocalVariableTable { name_index: u16, entries: Vec<LocalVariable> },
    LocalVariableTypeTable { name_index: u16, entries: Vec<LocalVariable> },
    StackMapTable { name_index: u16, frames: Vec<StackMapFrame> },
    /// Preserved byte for byte.
    Other(RawAttribute),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeModel {
    pub max_stack: u16,
    pub max_locals: u16,
    pub instructions: Vec<Instruction>,
    pub exception_table: Vec<ExceptionHandler>,
    pub attributes: Vec<CodeAttribute>,
}

impl CodeModel {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn line_numbers(&self) -> impl Iterator<Item = &LineNumber> {
        self.attributes.iter().flat_map(|a| match a {
            CodeAttribute::LineNumberTable { entries, .. } => entries.as_slice(),
            _ => &[],
        })
    }

    pub fn stack_map_frames(&self) -> impl Iterator<Item = &StackMapFrame> {
        self.attributes.iter().flat_map(|a| match a {
            CodeAttribute::StackMapTable { frames, .. } => frames.as_slice(),
            _ => &[],
        })
    }

    /// Byte offset of every instruction in the current encoding, plus the
    /// code length as a final element.
    pub fn byte_offsets(&self) -> Result<Vec<usize>, ClassFileError> {
        Ok(compute_layout(self)?.offsets)
    }

    /// Inserts each sequence immediately before the instruction at its key.
    ///
    /// With `absorb_targets`, everything that referred to the start of a
    /// keyed instruction (branches, handler ranges and entry points, line
    /// numbers, local variable scopes, stack map frames) now refers to the
    /// start of the inserted sequence, so the sequence runs whenever control
    /// reaches that instruction. Without it, references keep pointing at the
    /// original instruction. `Uninitialized` verification types always
    /// follow their `new` instruction.
    pub fn insert_before(
        &mut self,
        insertions: BTreeMap<Ordinal, Vec<Instruction>>,
        absorb_targets: bool,
    ) -> Result<(), ClassFileError> {
        let n = self.instructions.len();
        if let Some((&last, _)) = insertions.iter().next_back() {
            if last >= n {
                return Err(ClassFileError::InvalidModel(format!(
                    "insertion point {last} beyond last instruction {}",
                    n.saturating_sub(1)
                )));
            }
        }
        // new_pos[o] for o in 0..=n, and the length inserted before o.
        let mut new_pos = Vec::with_capacity(n + 1);
        let mut inserted_before = vec![0usize; n + 1];
        let mut shift = 0;
        for (o, before) in inserted_before.iter_mut().enumerate() {
            if let Some(seq) = insertions.get(&o) {
                shift += seq.len();
                *before = seq.len();
            }
            new_pos.push(o + shift);
        }
        let target = |o: Ordinal| -> Ordinal {
            if absorb_targets {
                new_pos[o] - inserted_before[o]
            } else {
                new_pos[o]
            }
        };

        let old = std::mem::take(&mut self.instructions);
        let mut insertions = insertions;
        let mut out = Vec::with_capacity(new_pos[n]);
        for (o, mut insn) in old.into_iter().enumerate() {
            if let Some(seq) = insertions.remove(&o) {
                for mut s in seq {
                    s.map_targets(&target);
                    out.push(s);
                }
            }
            insn.map_targets(&target);
            out.push(insn);
        }
        self.instructions = out;

        for h in &mut self.exception_table {
            h.start = target(h.start);
            h.end = target(h.end);
            h.handler = target(h.handler);
        }
        let remap_vtype = |v: &mut VerificationType| {
            if let VerificationType::Uninitialized(o) = v {
                *o = new_pos[*o];
            }
        };
        for attr in &mut self.attributes {
            match attr {
                CodeAttribute::LineNumberTable { entries, .. } => {
                    entries.iter_mut().for_each(|e| e.start = target(e.start));
                }
                CodeAttribute::LocalVariableTable { entries, .. }
                | CodeAttribute::LocalVariableTypeTable { entries, .. } => {
                    for e in entries {
                        e.start = target(e.start);
                        e.end = target(e.end);
                    }
                }
                CodeAttribute::StackMapTable { frames, .. } => {
                    for f in frames {
                        f.ordinal = target(f.ordinal);
                        match &mut f.kind {
                            FrameKind::SameLocals1StackItem { stack, .. } => remap_vtype(stack),
                            FrameKind::Append(locals) => locals.iter_mut().for_each(remap_vtype),
                            FrameKind::Full { locals, stack } => {
                                locals.iter_mut().chain(stack.iter_mut()).for_each(remap_vtype)
                            }
                            _ => {}
                        }
                    }
                }
                CodeAttribute::Other(_) => {}
            }
        }
        Ok(())
    }

    fn check_invariants(&self) -> Result<(), ClassFileError> {
        let n = self.instructions.len();
        let bad = |what: String| Err(ClassFileError::InvalidModel(what));
        if n == 0 {
            return bad("code has no instructions".into());
        }
        for (i, insn) in self.instructions.iter().enumerate() {
            if matches!(insn.opcode, op::JSR | op::JSR_W | op::RET) {
                return bad(format!("ordinal {i}: subroutine instructions are not supported"));
            }
            if let Some(t) = insn.targets().into_iter().find(|&t| t >= n) {
                return bad(format!("ordinal {i}: branch target {t} out of range"));
            }
        }
        for h in &self.exception_table {
            if h.start >= h.end || h.end > n || h.handler >= n {
                return bad(format!("exception handler {h:?} out of range"));
            }
        }
        for attr in &self.attributes {
            match attr {
                CodeAttribute::LineNumberTable { entries, .. } => {
                    if entries.iter().any(|e| e.start >= n) {
                        return bad("line number entry out of range".into());
                    }
                }
                CodeAttribute::LocalVariableTable { entries, .. }
                | CodeAttribute::LocalVariableTypeTable { entries, .. } => {
                    if entries.iter().any(|e| e.start > e.end || e.end > n) {
                        return bad("local variable entry out of range".into());
                    }
                }
                CodeAttribute::StackMapTable { frames, .. } => {
                    if frames.windows(2).any(|w| w[0].ordinal >= w[1].ordinal)
                        || frames.iter().any(|f| f.ordinal >= n)
                    {
                        return bad("stack map frames out of order or out of range".into());
                    }
                }
                CodeAttribute::Other(_) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Widening {
    None,
    /// `goto` emitted as `goto_w`.
    Goto,
    /// `if<cond> L` emitted as `if<!cond> +8; goto_w L`.
    Conditional,
}

struct Layout {
    offsets: Vec<usize>,
    widening: Vec<Widening>,
}

fn compute_layout(code: &CodeModel) -> Result<Layout, ClassFileError> {
    let n = code.instructions.len();
    let mut widening = vec![Widening::None; n];
    loop {
        let mut offsets = Vec::with_capacity(n + 1);
        let mut pc = 0usize;
        for (insn, w) in code.instructions.iter().zip(&widening) {
            offsets.push(pc);
            pc += match w {
                Widening::None => insn.encoded_len(pc),
                Widening::Goto => 5,
                Widening::Conditional => 8,
            };
        }
        offsets.push(pc);

        let mut changed = false;
        for (i, insn) in code.instructions.iter().enumerate() {
            if widening[i] != Widening::None || op::layout(insn.opcode) != Some(OperandLayout::Branch16) {
                continue;
            }
            let Operand::Branch(t) = insn.operand else { continue };
            let Some(&to) = offsets.get(t) else { continue };
            let displacement = to as i64 - offsets[i] as i64;
            if i16::try_from(displacement).is_err() {
                widening[i] = if insn.opcode == op::GOTO {
                    Widening::Goto
                } else if op::is_conditional_branch(insn.opcode) {
                    Widening::Conditional
                } else {
                    return Err(ClassFileError::EncodeOverflow(format!(
                        "ordinal {i}: {} displacement {displacement} has no wide form",
                        insn.mnemonic()
                    )));
                };
                changed = true;
            }
        }
        if !changed {
            return Ok(Layout { offsets, widening });
        }
    }
}

/// Encodes a code model into the payload of a `Code` attribute.
pub fn encode_code(code: &CodeModel) -> Result<Vec<u8>, ClassFileError> {
    code.check_invariants()?;
    let Layout { offsets, widening } = compute_layout(code)?;
    let code_len = offsets[code.instructions.len()];
    if code_len > 65535 {
        return Err(ClassFileError::EncodeOverflow(format!(
            "code length {code_len} exceeds 65535 bytes"
        )));
    }
    let mut out = Vec::with_capacity(code_len + 64);
    out.extend_from_slice(&code.max_stack.to_be_bytes());
    out.extend_from_slice(&code.max_locals.to_be_bytes());
    out.extend_from_slice(&(code_len as u32).to_be_bytes());
    let code_start = out.len();
    for (i, insn) in code.instructions.iter().enumerate() {
        let pc = offsets[i];
        debug_assert_eq!(out.len() - code_start, pc);
        emit_instruction(&mut out, insn, i, pc, widening[i], &offsets)?;
    }

    out.extend_from_slice(&(code.exception_table.len() as u16).to_be_bytes());
    for h in &code.exception_table {
        for v in [offsets[h.start], offsets[h.end], offsets[h.handler]] {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
        out.extend_from_slice(&h.catch_type.to_be_bytes());
    }

    out.extend_from_slice(&(code.attributes.len() as u16).to_be_bytes());
    for attr in &code.attributes {
        let (name_index, body) = encode_code_attribute(attr, &offsets)?;
        out.extend_from_slice(&name_index.to_be_bytes());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    Ok(out)
}

fn emit_instruction(
    out: &mut Vec<u8>,
    insn: &Instruction,
    ordinal: Ordinal,
    pc: usize,
    widening: Widening,
    offsets: &[usize],
) -> Result<(), ClassFileError> {
    let invalid = |why: &str| {
        Err(ClassFileError::InvalidModel(format!(
            "ordinal {ordinal} ({}): {why}",
            insn.mnemonic()
        )))
    };
    let rel = |t: Ordinal, from: usize| offsets[t] as i64 - from as i64;
    let Some(layout) = op::layout(insn.opcode) else {
        return invalid("undefined opcode");
    };
    if insn.wide && !matches!(layout, OperandLayout::Local | OperandLayout::Iinc) {
        return invalid("wide prefix on an opcode that has no wide form");
    }
    match widening {
        Widening::Goto => {
            let Operand::Branch(t) = insn.operand else { unreachable!() };
            out.push(op::GOTO_W);
            out.extend_from_slice(&(rel(t, pc) as i32).to_be_bytes());
            return Ok(());
        }
        Widening::Conditional => {
            let Operand::Branch(t) = insn.operand else { unreachable!() };
            out.push(op::invert_condition(insn.opcode).expect("conditional branch"));
            out.extend_from_slice(&8i16.to_be_bytes());
            out.push(op::GOTO_W);
            out.extend_from_slice(&(rel(t, pc + 3) as i32).to_be_bytes());
            return Ok(());
        }
        Widening::None => {}
    }
    if insn.wide {
        out.push(op::WIDE);
    }
    out.push(insn.opcode);
    match (layout, &insn.operand) {
        (OperandLayout::None, Operand::None) => {}
        (OperandLayout::Local, Operand::Local(index)) => {
            if insn.wide {
                out.extend_from_slice(&index.to_be_bytes());
            } else if let Ok(b) = u8::try_from(*index) {
                out.push(b);
            } else {
                return invalid("local index above 255 requires the wide form");
            }
        }
        (OperandLayout::Iinc, Operand::Iinc { index, delta }) => {
            if insn.wide {
                out.extend_from_slice(&index.to_be_bytes());
                out.extend_from_slice(&delta.to_be_bytes());
            } else {
                match (u8::try_from(*index), i8::try_from(*delta)) {
                    (Ok(i), Ok(d)) => {
                        out.push(i);
                        out.push(d as u8);
                    }
                    _ => return invalid("iinc operands require the wide form"),
                }
            }
        }
        (OperandLayout::Byte, Operand::Byte(v)) => out.push(*v as u8),
        (OperandLayout::Short, Operand::Short(v)) => out.extend_from_slice(&v.to_be_bytes()),
        (OperandLayout::PoolByte, Operand::Pool(index)) => match u8::try_from(*index) {
            Ok(b) => out.push(b),
            Err(_) => return invalid("pool index above 255 requires ldc_w"),
        },
        (OperandLayout::Pool, Operand::Pool(index)) => out.extend_from_slice(&index.to_be_bytes()),
        (OperandLayout::InvokeInterface, Operand::InvokeInterface { index, count }) => {
            out.extend_from_slice(&index.to_be_bytes());
            out.push(*count);
            out.push(0);
        }
        (OperandLayout::InvokeDynamic, Operand::Pool(index)) => {
            out.extend_from_slice(&index.to_be_bytes());
            out.extend_from_slice(&[0, 0]);
        }
        (OperandLayout::MultiANewArray, Operand::MultiANewArray { index, dimensions }) => {
            out.extend_from_slice(&index.to_be_bytes());
            out.push(*dimensions);
        }
        (OperandLayout::ArrayType, Operand::ArrayType(t)) => out.push(*t),
        (OperandLayout::Branch16, Operand::Branch(t)) => {
            out.extend_from_slice(&(rel(*t, pc) as i16).to_be_bytes());
        }
        (OperandLayout::Branch32, Operand::Branch(t)) => {
            out.extend_from_slice(&(rel(*t, pc) as i32).to_be_bytes());
        }
        (OperandLayout::TableSwitch, Operand::TableSwitch { default, low, targets }) => {
            if targets.is_empty() {
                return invalid("tableswitch without targets");
            }
            out.resize(out.len() + 3 - pc % 4, 0);
            let high = *low as i64 + targets.len() as i64 - 1;
            let Ok(high) = i32::try_from(high) else {
                return invalid("tableswitch range overflows");
            };
            out.extend_from_slice(&(rel(*default, pc) as i32).to_be_bytes());
            out.extend_from_slice(&low.to_be_bytes());
            out.extend_from_slice(&high.to_be_bytes());
            for t in targets {
                out.extend_from_slice(&(rel(*t, pc) as i32).to_be_bytes());
            }
        }
        (OperandLayout::LookupSwitch, Operand::LookupSwitch { default, pairs }) => {
            out.resize(out.len() + 3 - pc % 4, 0);
            out.extend_from_slice(&(rel(*default, pc) as i32).to_be_bytes());
            out.extend_from_slice(&(pairs.len() as i32).to_be_bytes());
            for (key, t) in pairs {
                out.extend_from_slice(&key.to_be_bytes());
                out.extend_from_slice(&(rel(*t, pc) as i32).to_be_bytes());
            }
        }
        _ => return invalid("operand does not match opcode"),
    }
    Ok(())
}

fn encode_vtype(out: &mut Vec<u8>, v: &VerificationType, offsets: &[usize]) {
    match v {
        VerificationType::Top => out.push(0),
        VerificationType::Integer => out.push(1),
        VerificationType::Float => out.push(2),
        VerificationType::Double => out.push(3),
        VerificationType::Long => out.push(4),
        VerificationType::Null => out.push(5),
        VerificationType::UninitializedThis => out.push(6),
        VerificationType::Object(index) => {
            out.push(7);
            out.extend_from_slice(&index.to_be_bytes());
        }
        VerificationType::Uninitialized(o) => {
            out.push(8);
            out.extend_from_slice(&(offsets[*o] as u16).to_be_bytes());
        }
    }
}

fn encode_code_attribute(attr: &CodeAttribute, offsets: &[usize]) -> Result<(u16, Vec<u8>), ClassFileError> {
    let mut body = Vec::new();
    let name_index = match attr {
        CodeAttribute::LineNumberTable { name_index, entries } => {
            body.extend_from_slice(&(entries.len() as u16).to_be_bytes());
            for e in entries {
                body.extend_from_slice(&(offsets[e.start] as u16).to_be_bytes());
                body.extend_from_slice(&e.line.to_be_bytes());
            }
            *name_index
        }
        CodeAttribute::LocalVariableTable { name_index, entries }
        | CodeAttribute::LocalVariableTypeTable { name_index, entries } => {
            body.extend_from_slice(&(entries.len() as u16).to_be_bytes());
            for e in entries {
                let start = offsets[e.start];
                body.extend_from_slice(&(start as u16).to_be_bytes());
                body.extend_from_slice(&((offsets[e.end] - start) as u16).to_be_bytes());
                body.extend_from_slice(&e.name_index.to_be_bytes());
                body.extend_from_slice(&e.descriptor_index.to_be_bytes());
                body.extend_from_slice(&e.index.to_be_bytes());
            }
            *name_index
        }
        CodeAttribute::StackMapTable { name_index, frames } => {
            body.extend_from_slice(&(frames.len() as u16).to_be_bytes());
            let mut previous: Option<usize> = None;
            for f in frames {
                let offset = offsets[f.ordinal];
                let delta = match previous {
                    None => offset,
                    Some(p) => offset - p - 1,
                };
                previous = Some(offset);
                let delta16 = u16::try_from(delta)
                    .map_err(|_| ClassFileError::EncodeOverflow("stack map delta overflow".into()))?;
                match &f.kind {
                    FrameKind::Same { extended } => {
                        if !extended && delta < 64 {
                            body.push(delta as u8);
                        } else {
                            body.push(251);
                            body.extend_from_slice(&delta16.to_be_bytes());
                        }
                    }
                    FrameKind::SameLocals1StackItem { stack, extended } => {
                        if !extended && delta < 64 {
                            body.push(64 + delta as u8);
                        } else {
                            body.push(247);
                            body.extend_from_slice(&delta16.to_be_bytes());
                        }
                        encode_vtype(&mut body, stack, offsets);
                    }
                    FrameKind::Chop(k) => {
                        body.push(251 - k);
                        body.extend_from_slice(&delta16.to_be_bytes());
                    }
                    FrameKind::Append(locals) => {
                        body.push(251 + locals.len() as u8);
                        body.extend_from_slice(&delta16.to_be_bytes());
                        locals.iter().for_each(|v| encode_vtype(&mut body, v, offsets));
                    }
                    FrameKind::Full { locals, stack } => {
                        body.push(255);
                        body.extend_from_slice(&delta16.to_be_bytes());
                        body.extend_from_slice(&(locals.len() as u16).to_be_bytes());
                        locals.iter().for_each(|v| encode_vtype(&mut body, v, offsets));
                        body.extend_from_slice(&(stack.len() as u16).to_be_bytes());
                        stack.iter().for_each(|v| encode_vtype(&mut body, v, offsets));
                    }
                }
            }
            *name_index
        }
        CodeAttribute::Other(raw) => {
            body.extend_from_slice(&raw.data);
            raw.name_index
        }
    };
    Ok((name_index, body))
}

/// Maps byte offsets of the original encoding to ordinals.
struct OffsetIndex {
    starts: Vec<usize>,
    code_len: usize,
}

impl OffsetIndex {
    fn ordinal(&self, offset: usize) -> Option<Ordinal> {
        self.starts.binary_search(&offset).ok()
    }

    fn ordinal_or_end(&self, offset: usize) -> Option<Ordinal> {
        if offset == self.code_len {
            Some(self.starts.len())
        } else {
            self.ordinal(offset)
        }
    }
}

fn malformed_code(offset: usize, reason: impl Into<String>) -> ClassFileError {
    ClassFileError::MalformedCode { offset, reason: reason.into() }
}

/// Pool tags an instruction's pool operand may refer to.
fn expected_pool_tags(opcode: u8) -> &'static [u8] {
    match opcode {
        op::LDC | op::LDC_W => &[
            pool::TAG_INTEGER,
            pool::TAG_FLOAT,
            pool::TAG_STRING,
            pool::TAG_CLASS,
            pool::TAG_METHOD_TYPE,
            pool::TAG_METHOD_HANDLE,
            pool::TAG_DYNAMIC,
        ],
        op::LDC2_W => &[pool::TAG_LONG, pool::TAG_DOUBLE, pool::TAG_DYNAMIC],
        op::GETSTATIC..=op::PUTFIELD => &[pool::TAG_FIELDREF],
        op::INVOKEVIRTUAL => &[pool::TAG_METHODREF],
        op::INVOKESPECIAL | op::INVOKESTATIC => &[pool::TAG_METHODREF, pool::TAG_INTERFACE_METHODREF],
        op::INVOKEINTERFACE => &[pool::TAG_INTERFACE_METHODREF],
        op::INVOKEDYNAMIC => &[pool::TAG_INVOKE_DYNAMIC],
        _ => &[pool::TAG_CLASS],
    }
}

/// Decodes the payload of a `Code` attribute.
pub fn decode_code(data: &[u8], pool: &ConstantPool) -> Result<CodeModel, ClassFileError> {
    decode_code_at(data, pool, 0)
}

/// `base` is the file offset of `data`, used in error reports.
pub(crate) fn decode_code_at(data: &[u8], pool: &ConstantPool, base: usize) -> Result<CodeModel, ClassFileError> {
    let mut r = Reader::new(data, base);
    let max_stack = r.u16()?;
    let max_locals = r.u16()?;
    let code_len_at = r.file_offset();
    let code_len = r.u32()? as usize;
    if code_len == 0 || code_len > 65535 {
        return Err(ClassFileError::MalformedClassFile {
            offset: code_len_at,
            reason: format!("invalid code length {code_len}"),
        });
    }
    let code_file_offset = r.file_offset();
    let bytes = r.bytes(code_len)?;
    let (mut instructions, starts) = decode_instructions(bytes)?;
    let index = OffsetIndex { starts, code_len };

    // Branch operands hold absolute byte offsets until here.
    for (i, insn) in instructions.iter_mut().enumerate() {
        let pc = index.starts[i];
        let mut bad_target = None;
        insn.map_targets(|t| {
            index.ordinal(t).unwrap_or_else(|| {
                bad_target.get_or_insert(t);
                0
            })
        });
        if let Some(t) = bad_target {
            return Err(malformed_code(pc, format!("branch target {t} is not an instruction start")));
        }
        if let Some(pool_index) = insn.pool_index() {
            let allowed = expected_pool_tags(insn.opcode);
            match pool.get(pool_index) {
                Some(c) if allowed.contains(&c.tag()) => {}
                found => {
                    return Err(ClassFileError::MalformedClassFile {
                        offset: code_file_offset + pc,
                        reason: format!(
                            "{} refers to pool #{pool_index} ({}), expected {}",
                            insn.mnemonic(),
                            found.map_or("nothing", |c| c.kind_name()),
                            allowed.iter().map(|t| pool::tag_name(*t)).collect::<Vec<_>>().join("/"),
                        ),
                    });
                }
            }
        }
    }

    let table_len = r.u16()?;
    let mut exception_table = Vec::with_capacity(table_len as usize);
    for _ in 0..table_len {
        let at = r.file_offset();
        let (start, end, handler, catch_type) = (r.u16()?, r.u16()?, r.u16()?, r.u16()?);
        let start_o = index.ordinal(start as usize);
        let end_o = index.ordinal_or_end(end as usize);
        let handler_o = index.ordinal(handler as usize);
        match (start_o, end_o, handler_o) {
            (Some(s), Some(e), Some(h)) if s < e => exception_table.push(ExceptionHandler {
                start: s,
                end: e,
                handler: h,
                catch_type,
            }),
            _ => {
                return Err(malformed_code(
                    start as usize,
                    format!("exception range {start}..{end} -> {handler} does not align with instructions"),
                ))
            }
        }
        if catch_type != 0 && pool.get(catch_type).map(|c| c.tag()) != Some(pool::TAG_CLASS) {
            return Err(ClassFileError::MalformedClassFile {
                offset: at + 6,
                reason: format!("catch type #{catch_type} is not a Class entry"),
            });
        }
    }

    let attr_count = r.u16()?;
    let mut attributes = Vec::with_capacity(attr_count as usize);
    for _ in 0..attr_count {
        let name_at = r.file_offset();
        let name_index = r.u16()?;
        let len = r.u32()? as usize;
        let body_at = r.file_offset();
        let body = r.bytes(len)?;
        let name = pool.utf8(name_index).map_err(|_| ClassFileError::MalformedClassFile {
            offset: name_at,
            reason: format!("attribute name #{name_index} is not a Utf8 entry"),
        })?;
        let attr = match name.as_ref() {
            "LineNumberTable" => decode_line_numbers(body, name_index, &index, body_at)?,
            "LocalVariableTable" | "LocalVariableTypeTable" => {
                let entries = decode_local_variables(body, &index, body_at)?;
                if name == "LocalVariableTable" {
                    CodeAttribute::LocalVariableTable { name_index, entries }
                } else {
                    CodeAttribute::LocalVariableTypeTable { name_index, entries }
                }
            }
            "StackMapTable" => decode_stack_map(body, name_index, &index, pool, body_at)?,
            _ => CodeAttribute::Other(RawAttribute { name_index, data: body.to_vec() }),
        };
        attributes.push(attr);
    }
    r.finish()?;

    Ok(CodeModel {
        max_stack,
        max_locals,
        instructions,
        exception_table,
        attributes,
    })
}

/// Returns the instructions (branch targets still as byte offsets) and the
/// byte offset at which each starts.
fn decode_instructions(code: &[u8]) -> Result<(Vec<Instruction>, Vec<usize>), ClassFileError> {
    let mut instructions = Vec::new();
    let mut starts = Vec::new();
    let mut pc = 0usize;
    while pc < code.len() {
        let start = pc;
        let truncated = || malformed_code(start, "instruction runs past the end of the code");
        let byte = |i: usize| code.get(i).copied().ok_or_else(truncated);
        let u16_at = |i: usize| Ok::<u16, ClassFileError>(u16::from_be_bytes([byte(i)?, byte(i + 1)?]));
        let i32_at = |i: usize| {
            Ok::<i32, ClassFileError>(i32::from_be_bytes([byte(i)?, byte(i + 1)?, byte(i + 2)?, byte(i + 3)?]))
        };
        let target = |disp: i64| -> Result<usize, ClassFileError> {
            let t = start as i64 + disp;
            if t < 0 || t as usize >= code.len() {
                Err(malformed_code(start, format!("branch target {t} outside the code")))
            } else {
                Ok(t as usize)
            }
        };

        let mut opcode = code[pc];
        let mut wide = false;
        if opcode == op::WIDE {
            wide = true;
            opcode = byte(pc + 1)?;
            pc += 1;
        }
        if matches!(opcode, op::JSR | op::JSR_W | op::RET) {
            return Err(malformed_code(start, "subroutine instructions (jsr/ret) are not supported"));
        }
        let layout = op::layout(opcode)
            .ok_or_else(|| malformed_code(start, format!("undefined opcode 0x{opcode:02x}")))?;
        if wide && !matches!(layout, OperandLayout::Local | OperandLayout::Iinc) {
            return Err(malformed_code(start, format!("wide prefix before {}", op::mnemonic(opcode).unwrap_or("?"))));
        }
        let operand = match layout {
            OperandLayout::None => Operand::None,
            OperandLayout::Wide => return Err(malformed_code(start, "nested wide prefix")),
            OperandLayout::Local => {
                if wide {
                    Operand::Local(u16_at(pc + 1)?)
                } else {
                    Operand::Local(byte(pc + 1)? as u16)
                }
            }
            OperandLayout::Iinc => {
                if wide {
                    Operand::Iinc { index: u16_at(pc + 1)?, delta: u16_at(pc + 3)? as i16 }
                } else {
                    Operand::Iinc { index: byte(pc + 1)? as u16, delta: byte(pc + 2)? as i8 as i16 }
                }
            }
            OperandLayout::Byte => Operand::Byte(byte(pc + 1)? as i8),
            OperandLayout::Short => Operand::Short(u16_at(pc + 1)? as i16),
            OperandLayout::PoolByte => Operand::Pool(byte(pc + 1)? as u16),
            OperandLayout::Pool => Operand::Pool(u16_at(pc + 1)?),
            OperandLayout::InvokeInterface => {
                let index = u16_at(pc + 1)?;
                let count = byte(pc + 3)?;
                if byte(pc + 4)? != 0 {
                    return Err(malformed_code(start, "invokeinterface fourth operand byte must be zero"));
                }
                Operand::InvokeInterface { index, count }
            }
            OperandLayout::InvokeDynamic => {
                let index = u16_at(pc + 1)?;
                if byte(pc + 3)? != 0 || byte(pc + 4)? != 0 {
                    return Err(malformed_code(start, "invokedynamic operand bytes 3-4 must be zero"));
                }
                Operand::Pool(index)
            }
            OperandLayout::MultiANewArray => Operand::MultiANewArray {
                index: u16_at(pc + 1)?,
                dimensions: byte(pc + 3)?,
            },
            OperandLayout::ArrayType => Operand::ArrayType(byte(pc + 1)?),
            OperandLayout::Branch16 => Operand::Branch(target(u16_at(pc + 1)? as i16 as i64)?),
            OperandLayout::Branch32 => Operand::Branch(target(i32_at(pc + 1)? as i64)?),
            OperandLayout::TableSwitch | OperandLayout::LookupSwitch => {
                let mut p = pc + 1 + (3 - pc % 4);
                if (pc + 1..p).any(|i| code.get(i) != Some(&0)) {
                    return Err(malformed_code(start, "switch padding must be zero"));
                }
                let default = target(i32_at(p)? as i64)?;
                p += 4;
                if layout == OperandLayout::TableSwitch {
                    let low = i32_at(p)?;
                    let high = i32_at(p + 4)?;
                    p += 8;
                    if high < low {
                        return Err(malformed_code(start, "tableswitch high < low"));
                    }
                    let count = (high as i64 - low as i64 + 1) as usize;
                    if p + count * 4 > code.len() {
                        return Err(truncated());
                    }
                    let targets = (0..count)
                        .map(|k| target(i32_at(p + 4 * k)? as i64))
                        .collect::<Result<Vec<_>, _>>()?;
                    Operand::TableSwitch { default, low, targets }
                } else {
                    let count = i32_at(p)?;
                    p += 4;
                    if count < 0 || p + count as usize * 8 > code.len() {
                        return Err(malformed_code(start, "bad lookupswitch pair count"));
                    }
                    let pairs = (0..count as usize)
                        .map(|k| Ok((i32_at(p + 8 * k)?, target(i32_at(p + 8 * k + 4)? as i64)?)))
                        .collect::<Result<Vec<_>, ClassFileError>>()?;
                    Operand::LookupSwitch { default, pairs }
                }
            }
        };
        let insn = Instruction { opcode, wide, operand };
        // Width of the wide form counts its prefix byte once.
        pc = start + insn.encoded_len(start);
        if pc > code.len() {
            return Err(truncated());
        }
        starts.push(start);
        instructions.push(insn);
    }
    Ok((instructions, starts))
}

fn decode_line_numbers(
    body: &[u8],
    name_index: u16,
    index: &OffsetIndex,
    base: usize,
) -> Result<CodeAttribute, ClassFileError> {
    let mut r = Reader::new(body, base);
    let count = r.u16()?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let pc = r.u16()? as usize;
        let line = r.u16()?;
        let start = index
            .ordinal(pc)
            .ok_or_else(|| malformed_code(pc, "line number entry is not at an instruction start"))?;
        entries.push(LineNumber { start, line });
    }
    r.finish()?;
    Ok(CodeAttribute::LineNumberTable { name_index, entries })
}

fn decode_local_variables(body: &[u8], index: &OffsetIndex, base: usize) -> Result<Vec<LocalVariable>, ClassFileError> {
    let mut r = Reader::new(body, base);
    let count = r.u16()?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let pc = r.u16()? as usize;
        let len = r.u16()? as usize;
        let (name_index, descriptor_index, slot) = (r.u16()?, r.u16()?, r.u16()?);
        let (Some(start), Some(end)) = (index.ordinal_or_end(pc), index.ordinal_or_end(pc + len)) else {
            return Err(malformed_code(pc, "local variable range does not align with instructions"));
        };
        entries.push(LocalVariable {
            start,
            end,
            name_index,
            descriptor_index,
            index: slot,
        });
    }
    r.finish()?;
    Ok(entries)
}

fn decode_vtype(
    r: &mut Reader<'_>,
    index: &OffsetIndex,
    pool: &ConstantPool,
) -> Result<VerificationType, ClassFileError> {
    let at = r.file_offset();
    Ok(match r.u8()? {
        0 => VerificationType::Top,
        1 => VerificationType::Integer,
        2 => VerificationType::Float,
        3 => VerificationType::Double,
        4 => VerificationType::Long,
        5 => VerificationType::Null,
        6 => VerificationType::UninitializedThis,
        7 => {
            let class = r.u16()?;
            if pool.get(class).map(|c| c.tag()) != Some(pool::TAG_CLASS) {
                return Err(ClassFileError::MalformedClassFile {
                    offset: at,
                    reason: format!("verification type refers to #{class}, expected Class"),
                });
            }
            VerificationType::Object(class)
        }
        8 => {
            let pc = r.u16()? as usize;
            let o = index
                .ordinal(pc)
                .ok_or_else(|| malformed_code(pc, "uninitialized type offset is not an instruction start"))?;
            VerificationType::Uninitialized(o)
        }
        tag => {
            return Err(ClassFileError::MalformedClassFile {
                offset: at,
                reason: format!("unknown verification type tag {tag}"),
            })
        }
    })
}

fn decode_stack_map(
    body: &[u8],
    name_index: u16,
    index: &OffsetIndex,
    pool: &ConstantPool,
    base: usize,
) -> Result<CodeAttribute, ClassFileError> {
    let mut r = Reader::new(body, base);
    let count = r.u16()?;
    let mut frames = Vec::with_capacity(count as usize);
    let mut previous: Option<usize> = None;
    for _ in 0..count {
        let at = r.file_offset();
        let frame_type = r.u8()?;
        let (delta, kind) = match frame_type {
            0..=63 => (frame_type as usize, FrameKind::Same { extended: false }),
            64..=127 => {
                let stack = decode_vtype(&mut r, index, pool)?;
                (frame_type as usize - 64, FrameKind::SameLocals1StackItem { stack, extended: false })
            }
            247 => {
                let delta = r.u16()? as usize;
                let stack = decode_vtype(&mut r, index, pool)?;
                (delta, FrameKind::SameLocals1StackItem { stack, extended: true })
            }
            248..=250 => (r.u16()? as usize, FrameKind::Chop(251 - frame_type)),
            251 => (r.u16()? as usize, FrameKind::Same { extended: true }),
            252..=254 => {
                let delta = r.u16()? as usize;
                let locals = (0..frame_type - 251)
                    .map(|_| decode_vtype(&mut r, index, pool))
                    .collect::<Result<Vec<_>, _>>()?;
                (delta, FrameKind::Append(locals))
            }
            255 => {
                let delta = r.u16()? as usize;
                let n_locals = r.u16()?;
                let locals = (0..n_locals)
                    .map(|_| decode_vtype(&mut r, index, pool))
                    .collect::<Result<Vec<_>, _>>()?;
                let n_stack = r.u16()?;
                let stack = (0..n_stack)
                    .map(|_| decode_vtype(&mut r, index, pool))
                    .collect::<Result<Vec<_>, _>>()?;
                (delta, FrameKind::Full { locals, stack })
            }
            _ => {
                return Err(ClassFileError::MalformedClassFile {
                    offset: at,
                    reason: format!("reserved stack map frame type {frame_type}"),
                })
            }
        };
        let offset = match previous {
            None => delta,
            Some(p) => p + delta + 1,
        };
        previous = Some(offset);
        let ordinal = index
            .ordinal(offset)
            .ok_or_else(|| malformed_code(offset, "stack map frame is not at an instruction start"))?;
        frames.push(StackMapFrame { ordinal, kind });
    }
    r.finish()?;
    Ok(CodeAttribute::StackMapTable { name_index, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code_of(instructions: Vec<Instruction>) -> CodeModel {
        CodeModel {
            max_stack: 4,
            max_locals: 4,
            instructions,
            exception_table: Vec::new(),
            attributes: Vec::new(),
        }
    }

    fn raw_code(bytes: &[u8]) -> Vec<u8> {
        let mut out = vec![0, 2, 0, 1];
        out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(bytes);
        out.extend_from_slice(&[0, 0, 0, 0]);
        out
    }

    #[test]
    fn single_return_is_ordinal_zero() {
        let code = decode_code(&raw_code(&[op::RETURN]), &ConstantPool::new()).unwrap();
        assert_eq!(code.instructions, vec![Instruction::simple(op::RETURN)]);
    }

    #[test]
    fn ordinals_ignore_byte_widths() {
        // iload 0 (2 bytes), iload_0 (1), wide iload 300 (4), bipush (2), ireturn
        let bytes = [op::ILOAD, 0, op::ILOAD_0, op::WIDE, op::ILOAD, 1, 44, op::BIPUSH, 7, op::IRETURN];
        let code = decode_code(&raw_code(&bytes), &ConstantPool::new()).unwrap();
        let mnemonics: Vec<_> = code.instructions.iter().map(Instruction::mnemonic).collect();
        assert_eq!(mnemonics, ["iload", "iload_0", "iload", "bipush", "ireturn"]);
        assert!(code.instructions[2].wide);
        assert_eq!(code.instructions[2].operand, Operand::Local(300));
        assert_eq!(code.byte_offsets().unwrap(), vec![0, 2, 3, 7, 9, 10]);
        assert_eq!(encode_code(&code).unwrap(), raw_code(&bytes));
    }

    #[test]
    fn branch_into_instruction_middle_is_rejected() {
        // sipush occupies bytes 0..3; goto at 3 jumps to byte 1.
        let bytes = [op::SIPUSH, 0, 1, op::GOTO, 0xff, 0xfe, op::RETURN];
        let err = decode_code(&raw_code(&bytes), &ConstantPool::new()).unwrap_err();
        assert!(matches!(err, ClassFileError::MalformedCode { offset: 3, .. }), "{err:?}");
    }

    #[test]
    fn truncated_and_undefined_opcodes_are_rejected() {
        let err = decode_code(&raw_code(&[op::SIPUSH, 0]), &ConstantPool::new()).unwrap_err();
        assert!(matches!(err, ClassFileError::MalformedCode { offset: 0, .. }));
        let err = decode_code(&raw_code(&[op::NOP, 0xfe]), &ConstantPool::new()).unwrap_err();
        assert!(matches!(err, ClassFileError::MalformedCode { offset: 1, .. }));
        let err = decode_code(&raw_code(&[op::JSR, 0, 3, op::RETURN]), &ConstantPool::new()).unwrap_err();
        assert!(matches!(err, ClassFileError::MalformedCode { offset: 0, .. }));
    }

    #[test]
    fn branch_targets_become_ordinals() {
        // 0: iload_0  1: ifeq +5 -> byte 6   4: iconst_1  5: ireturn  6: iconst_0  7: ireturn
        let bytes = [op::ILOAD_0, op::IFEQ, 0, 5, op::ICONST_1, op::IRETURN, op::ICONST_0, op::IRETURN];
        let code = decode_code(&raw_code(&bytes), &ConstantPool::new()).unwrap();
        assert_eq!(code.instructions[1], Instruction::branch(op::IFEQ, 4));
        assert_eq!(encode_code(&code).unwrap(), raw_code(&bytes));
    }

    #[test]
    fn switch_padding_tracks_offset() {
        let mut code = code_of(vec![
            Instruction::simple(op::ILOAD_0),
            Instruction {
                opcode: op::TABLESWITCH,
                wide: false,
                operand: Operand::TableSwitch { default: 2, low: 0, targets: vec![3, 2] },
            },
            Instruction::simple(op::ICONST_0),
            Instruction::simple(op::IRETURN),
        ]);
        let bytes = encode_code(&code).unwrap();
        let decoded = decode_code(&bytes, &ConstantPool::new()).unwrap();
        assert_eq!(decoded, code);
        // Shifting the switch by one byte changes its padding from 2 to 1.
        code.insert_before(BTreeMap::from([(0, vec![Instruction::simple(op::NOP)])]), true).unwrap();
        assert_eq!(code.byte_offsets().unwrap()[2], 2);
        let decoded = decode_code(&encode_code(&code).unwrap(), &ConstantPool::new()).unwrap();
        assert_eq!(decoded, code);
    }

    #[test]
    fn long_forward_goto_is_widened() {
        let filler = 33_000;
        let mut instructions = vec![Instruction::branch(op::GOTO, filler + 1)];
        instructions.extend(std::iter::repeat_n(Instruction::simple(op::NOP), filler));
        instructions.push(Instruction::simple(op::RETURN));
        let code = code_of(instructions);
        let bytes = encode_code(&code).unwrap();
        let decoded = decode_code(&bytes, &ConstantPool::new()).unwrap();
        assert_eq!(decoded.instructions[0], Instruction::branch(op::GOTO_W, filler + 1));
        assert_eq!(decoded.byte_offsets().unwrap()[1], 5);
    }

    #[test]
    fn long_conditional_is_inverted_over_goto_w() {
        let filler = 33_000;
        let mut instructions = vec![
            Instruction::simple(op::ILOAD_0),
            Instruction::branch(op::IFEQ, filler + 2),
        ];
        instructions.extend(std::iter::repeat_n(Instruction::simple(op::NOP), filler));
        instructions.push(Instruction::simple(op::RETURN));
        let bytes = encode_code(&code_of(instructions)).unwrap();
        let decoded = decode_code(&bytes, &ConstantPool::new()).unwrap();
        assert_eq!(decoded.instructions[1], Instruction::branch(op::IFNE, 3));
        assert_eq!(decoded.instructions[2], Instruction::branch(op::GOTO_W, filler + 3));
        assert_eq!(decoded.len(), filler + 4);
    }

    #[test]
    fn backward_branches_widen_too() {
        let filler = 40_000;
        let mut instructions = vec![Instruction::simple(op::NOP)];
        instructions.extend(std::iter::repeat_n(Instruction::simple(op::NOP), filler));
        instructions.push(Instruction::branch(op::GOTO, 0));
        let bytes = encode_code(&code_of(instructions)).unwrap();
        let decoded = decode_code(&bytes, &ConstantPool::new()).unwrap();
        assert_eq!(decoded.instructions[filler + 1], Instruction::branch(op::GOTO_W, 0));
    }

    #[test]
    fn oversized_code_overflows() {
        let mut instructions = vec![Instruction::simple(op::NOP); 70_000];
        instructions.push(Instruction::simple(op::RETURN));
        let err = encode_code(&code_of(instructions)).unwrap_err();
        assert!(matches!(err, ClassFileError::EncodeOverflow(_)));
    }

    #[test]
    fn insertion_retargets_branches_and_tables() {
        let mut code = code_of(vec![
            Instruction::simple(op::ILOAD_0),     // 0
            Instruction::branch(op::IFEQ, 3),     // 1
            Instruction::simple(op::ICONST_1),    // 2
            Instruction::simple(op::ICONST_0),    // 3 (target, site)
            Instruction::simple(op::IRETURN),     // 4
        ]);
        code.exception_table.push(ExceptionHandler { start: 3, end: 4, handler: 3, catch_type: 0 });
        code.attributes.push(CodeAttribute::LineNumberTable {
            name_index: 1,
            entries: vec![LineNumber { start: 3, line: 9 }],
        });
        let seq = vec![Instruction::simple(op::NOP), Instruction::simple(op::NOP)];
        code.insert_before(BTreeMap::from([(3, seq)]), true).unwrap();
        assert_eq!(code.instructions[1], Instruction::branch(op::IFEQ, 3));
        assert_eq!(code.instructions[5].opcode, op::ICONST_0);
        assert_eq!(code.exception_table[0], ExceptionHandler { start: 3, end: 6, handler: 3, catch_type: 0 });
        assert_eq!(code.line_numbers().next().unwrap().start, 3);

        let mut plain = code_of(vec![
            Instruction::branch(op::GOTO, 0),
        ]);
        plain.insert_before(BTreeMap::from([(0, vec![Instruction::simple(op::NOP)])]), false).unwrap();
        assert_eq!(plain.instructions[1], Instruction::branch(op::GOTO, 1));
    }
}
