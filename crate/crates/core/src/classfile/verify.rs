//! Operand stack height simulation.
//!
//! A lightweight structural check: every instruction is reached with a
//! single consistent stack height that stays within `max_stack`. It does not
//! check types.

use super::code::{CodeModel, Operand};
use super::descriptor::{FieldType, MethodDescriptor};
use super::opcodes as op;
use super::pool::ConstantPool;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("ordinal {ordinal}: {reason}")]
pub struct StackError {
    pub ordinal: usize,
    pub reason: String,
}

fn err(ordinal: usize, reason: impl Into<String>) -> StackError {
    StackError { ordinal, reason: reason.into() }
}

/// (popped, pushed) slot counts of the instruction at `ordinal`.
fn effect(code: &CodeModel, ordinal: usize, pool: &ConstantPool) -> Result<(u32, u32), StackError> {
    use op::*;
    let insn = &code.instructions[ordinal];
    let member = |index: u16| {
        pool.member_ref(index)
            .map_err(|e| err(ordinal, e.to_string()))
    };
    let field_slots = |index: u16| -> Result<u32, StackError> {
        let m = member(index)?;
        FieldType::parse(&m.descriptor)
            .map(|t| t.slots() as u32)
            .map_err(|e| err(ordinal, e.to_string()))
    };
    let method = |descriptor: &str| {
        MethodDescriptor::parse(descriptor).map_err(|e| err(ordinal, e.to_string()))
    };
    let index = insn.pool_index().unwrap_or(0);
    Ok(match insn.opcode {
        NOP | IINC | GOTO | GOTO_W | RETURN => (0, 0),
        ACONST_NULL..=ICONST_5 | FCONST_0..=FCONST_2 | BIPUSH | SIPUSH | LDC | LDC_W => (0, 1),
        LCONST_0 | LCONST_1 | DCONST_0 | DCONST_1 | LDC2_W => (0, 2),
        ILOAD | FLOAD | ALOAD | ILOAD_0..=ILOAD_3 | FLOAD_0..=FLOAD_3 | ALOAD_0..=ALOAD_3 => (0, 1),
        LLOAD | DLOAD | LLOAD_0..=LLOAD_3 | DLOAD_0..=DLOAD_3 => (0, 2),
        0x2f /* laload */ | 0x31 /* daload */ => (2, 2),
        IALOAD..=SALOAD => (2, 1),
        ISTORE | FSTORE | ASTORE | ISTORE_0..=ISTORE_3 | FSTORE_0..=FSTORE_3 | ASTORE_0..=ASTORE_3 => (1, 0),
        LSTORE | DSTORE | LSTORE_0..=LSTORE_3 | DSTORE_0..=DSTORE_3 => (2, 0),
        0x50 /* lastore */ | 0x52 /* dastore */ => (4, 0),
        IASTORE..=SASTORE => (3, 0),
        POP => (1, 0),
        POP2 => (2, 0),
        DUP => (1, 2),
        DUP_X1 => (2, 3),
        DUP_X2 => (3, 4),
        DUP2 => (2, 4),
        DUP2_X1 => (3, 5),
        DUP2_X2 => (4, 6),
        SWAP => (2, 2),
        // Arithmetic opcodes cycle through int, long, float, double.
        IADD..=DREM => match (insn.opcode - IADD) % 4 {
            0 | 2 => (2, 1),
            _ => (4, 2),
        },
        IAND | IOR | IXOR => (2, 1),
        LAND | LOR | LXOR => (4, 2),
        INEG | FNEG => (1, 1),
        LNEG | DNEG => (2, 2),
        ISHL | ISHR | IUSHR => (2, 1),
        LSHL | LSHR | LUSHR => (3, 2),
        I2L | I2D | F2L | F2D => (1, 2),
        I2F | F2I | I2B | I2C | I2S => (1, 1),
        L2I | L2F | D2I | D2F => (2, 1),
        L2D | D2L => (2, 2),
        LCMP | DCMPL | DCMPG => (4, 1),
        FCMPL | FCMPG => (2, 1),
        IFEQ..=IFLE | IFNULL | IFNONNULL | TABLESWITCH | LOOKUPSWITCH => (1, 0),
        IF_ICMPEQ..=IF_ACMPNE => (2, 0),
        IRETURN | FRETURN | ARETURN | ATHROW | MONITORENTER | MONITOREXIT => (1, 0),
        LRETURN | DRETURN => (2, 0),
        GETSTATIC => (0, field_slots(index)?),
        PUTSTATIC => (field_slots(index)?, 0),
        GETFIELD => (1, field_slots(index)?),
        PUTFIELD => (1 + field_slots(index)?, 0),
        INVOKEVIRTUAL | INVOKESPECIAL | INVOKESTATIC | INVOKEINTERFACE => {
            let m = member(index)?;
            let d = method(&m.descriptor)?;
            let receiver = u32::from(insn.opcode != INVOKESTATIC);
            (d.param_slots() as u32 + receiver, d.return_slots() as u32)
        }
        INVOKEDYNAMIC => {
            let descriptor = pool.dynamic_descriptor(index).map_err(|e| err(ordinal, e.to_string()))?;
            let d = method(&descriptor)?;
            (d.param_slots() as u32, d.return_slots() as u32)
        }
        NEW => (0, 1),
        NEWARRAY | ANEWARRAY | ARRAYLENGTH | CHECKCAST | INSTANCEOF => (1, 1),
        MULTIANEWARRAY => match insn.operand {
            Operand::MultiANewArray { dimensions, .. } => (dimensions as u32, 1),
            _ => return Err(err(ordinal, "malformed multianewarray")),
        },
        other => {
            return Err(err(
                ordinal,
                format!("no stack effect known for {}", op::mnemonic(other).unwrap_or("?")),
            ))
        }
    })
}

/// Simulates stack heights over all reachable paths and returns the maximum
/// height reached.
pub fn simulate_stack(code: &CodeModel, pool: &ConstantPool) -> Result<u16, StackError> {
    let n = code.instructions.len();
    let mut heights: Vec<Option<u32>> = vec![None; n];
    let mut work = Vec::new();
    let mut max = 0u32;

    let enter = |heights: &mut Vec<Option<u32>>, work: &mut Vec<usize>, at: usize, h: u32, from: usize| {
        if at >= n {
            return Err(err(from, "control falls off the end of the code"));
        }
        match heights[at] {
            None => {
                heights[at] = Some(h);
                work.push(at);
                Ok(())
            }
            Some(existing) if existing == h => Ok(()),
            Some(existing) => Err(err(at, format!("inconsistent stack height {existing} vs {h}"))),
        }
    };

    enter(&mut heights, &mut work, 0, 0, 0)?;
    for h in &code.exception_table {
        enter(&mut heights, &mut work, h.handler, 1, h.handler)?;
    }
    while let Some(i) = work.pop() {
        let height = heights[i].expect("queued instructions have a height");
        let (pop, push) = effect(code, i, pool)?;
        if pop > height {
            return Err(err(i, format!("pops {pop} slots from a stack of {height}")));
        }
        let after = height - pop + push;
        max = max.max(after).max(height);
        if max > code.max_stack as u32 {
            return Err(err(i, format!("stack height {max} exceeds max_stack {}", code.max_stack)));
        }
        let insn = &code.instructions[i];
        for t in insn.targets() {
            enter(&mut heights, &mut work, t, after, i)?;
        }
        if !op::ends_block(insn.opcode) {
            enter(&mut heights, &mut work, i + 1, after, i)?;
        }
    }
    Ok(max as u16)
}
