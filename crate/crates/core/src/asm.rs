//! A small byte-level class file assembler.
//!
//! Used to build test fixtures without a Java compiler. It writes class file
//! bytes directly (labels are patched in place, frames are delta-encoded
//! here) and shares no layout code with [`crate::classfile`], so fixtures can
//! act as an independent check on the decoder.

use std::collections::HashMap;

use crate::classfile::opcodes as op;
use crate::classfile::pool::encode_modified_utf8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Label(usize);

#[derive(Debug, Clone, PartialEq)]
pub enum VType {
    Top,
    Int,
    Float,
    Double,
    Long,
    Null,
    UninitializedThis,
    Object(String),
    /// The `new` instruction at this label.
    Uninitialized(Label),
}

impl VType {
    pub fn object(name: &str) -> VType {
        VType::Object(name.to_owned())
    }
}

struct Pool {
    entries: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, u16>,
    /// Next free index, which is also the pool count.
    next: u16,
}

impl Default for Pool {
    fn default() -> Self {
        Pool { entries: Vec::new(), index: HashMap::new(), next: 1 }
    }
}

impl Pool {
    fn add(&mut self, entry: Vec<u8>) -> u16 {
        if let Some(&i) = self.index.get(&entry) {
            return i;
        }
        let i = self.next;
        let wide = matches!(entry[0], 5 | 6);
        self.next += if wide { 2 } else { 1 };
        self.index.insert(entry.clone(), i);
        self.entries.push(entry);
        i
    }

    fn add_unique(&mut self, entry: Vec<u8>) -> u16 {
        let i = self.next;
        self.next += 1;
        self.entries.push(entry);
        i
    }

    fn ref1(tag: u8, a: u16) -> Vec<u8> {
        let mut e = vec![tag];
        e.extend_from_slice(&a.to_be_bytes());
        e
    }

    fn ref2(tag: u8, a: u16, b: u16) -> Vec<u8> {
        let mut e = Self::ref1(tag, a);
        e.extend_from_slice(&b.to_be_bytes());
        e
    }

    fn utf8(&mut self, s: &str) -> u16 {
        let bytes = encode_modified_utf8(s);
        let mut e = vec![1];
        e.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
        e.extend_from_slice(&bytes);
        self.add(e)
    }

    fn class(&mut self, name: &str) -> u16 {
        let n = self.utf8(name);
        self.add(Self::ref1(7, n))
    }

    fn string(&mut self, s: &str) -> u16 {
        let n = self.utf8(s);
        self.add(Self::ref1(8, n))
    }

    fn name_and_type(&mut self, name: &str, desc: &str) -> u16 {
        let n = self.utf8(name);
        let d = self.utf8(desc);
        self.add(Self::ref2(12, n, d))
    }

    fn member(&mut self, tag: u8, class: &str, name: &str, desc: &str) -> u16 {
        let c = self.class(class);
        let nt = self.name_and_type(name, desc);
        self.add(Self::ref2(tag, c, nt))
    }

    fn integer(&mut self, v: i32) -> u16 {
        let mut e = vec![3];
        e.extend_from_slice(&v.to_be_bytes());
        self.add(e)
    }

    fn float(&mut self, v: f32) -> u16 {
        let mut e = vec![4];
        e.extend_from_slice(&v.to_bits().to_be_bytes());
        self.add(e)
    }

    fn long(&mut self, v: i64) -> u16 {
        let mut e = vec![5];
        e.extend_from_slice(&v.to_be_bytes());
        self.add(e)
    }

    fn double(&mut self, v: f64) -> u16 {
        let mut e = vec![6];
        e.extend_from_slice(&v.to_bits().to_be_bytes());
        self.add(e)
    }
}

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

struct Method {
    flags: u16,
    name: u16,
    desc: u16,
    attributes: Vec<(u16, Vec<u8>)>,
}

pub struct ClassAssembler {
    pool: Pool,
    major: u16,
    flags: u16,
    this: u16,
    super_class: u16,
    super_name: String,
    interfaces: Vec<u16>,
    fields: Vec<(u16, u16, u16)>,
    methods: Vec<Method>,
    attributes: Vec<(u16, Vec<u8>)>,
    bootstrap: Vec<(u16, Vec<u16>)>,
}

impl ClassAssembler {
    pub fn new(name: &str, super_class_name: &str) -> Self {
        let mut pool = Pool::default();
        let this = pool.class(name);
        let super_class = pool.class(super_class_name);
        ClassAssembler {
            pool,
            major: 52,
            flags: op_flags::PUBLIC | op_flags::SUPER,
            this,
            super_class,
            super_name: super_class_name.to_owned(),
            interfaces: Vec::new(),
            fields: Vec::new(),
            methods: Vec::new(),
            attributes: Vec::new(),
            bootstrap: Vec::new(),
        }
    }

    pub fn version(mut self, major: u16) -> Self {
        self.major = major;
        self
    }

    pub fn access(mut self, flags: u16) -> Self {
        self.flags = flags;
        self
    }

    pub fn interface(&mut self, name: &str) {
        let i = self.pool.class(name);
        self.interfaces.push(i);
    }

    pub fn field(&mut self, flags: u16, name: &str, desc: &str) {
        let n = self.pool.utf8(name);
        let d = self.pool.utf8(desc);
        self.fields.push((flags, n, d));
    }

    pub fn source_file(&mut self, file: &str) {
        let name = self.pool.utf8("SourceFile");
        let f = self.pool.utf8(file);
        self.attributes.push((name, f.to_be_bytes().to_vec()));
    }

    /// Adds `count` distinct Utf8 entries, to push later constants past
    /// index 255.
    pub fn pad_pool(&mut self, count: usize) {
        for i in 0..count {
            self.pool.utf8(&format!("pad{i:04}"));
        }
    }

    /// Adds an entry without deduplication and returns its index.
    pub fn unique_integer(&mut self, v: i32) -> u16 {
        let mut e = vec![3];
        e.extend_from_slice(&v.to_be_bytes());
        self.pool.add_unique(e)
    }

    /// Registers a bootstrap method whose handle is `REF_invokeStatic` on the
    /// given method, returning its BootstrapMethods index.
    pub fn bootstrap_method(&mut self, class: &str, name: &str, desc: &str, string_args: &[&str]) -> u16 {
        let m = self.pool.member(10, class, name, desc);
        let mut e = vec![15, 6];
        e.extend_from_slice(&m.to_be_bytes());
        let handle = self.pool.add(e);
        let args = string_args.iter().map(|s| self.pool.string(s)).collect();
        self.bootstrap.push((handle, args));
        (self.bootstrap.len() - 1) as u16
    }

    /// A method without a body (abstract or native).
    pub fn declare(&mut self, flags: u16, name: &str, desc: &str) {
        let n = self.pool.utf8(name);
        let d = self.pool.utf8(desc);
        self.methods.push(Method { flags, name: n, desc: d, attributes: Vec::new() });
    }

    pub fn method(&mut self, flags: u16, name: &str, desc: &str, body: impl FnOnce(&mut CodeAssembler<'_>)) {
        let n = self.pool.utf8(name);
        let d = self.pool.utf8(desc);
        let mut code = CodeAssembler::new(&mut self.pool);
        body(&mut code);
        let attr = code.finish();
        let code_name = self.pool.utf8("Code");
        self.methods.push(Method { flags, name: n, desc: d, attributes: vec![(code_name, attr)] });
    }

    /// The usual `super()` constructor.
    pub fn default_constructor(&mut self) {
        let super_name = self.super_name.clone();
        self.method(op_flags::PUBLIC, "<init>", "()V", |c| {
            c.max(1, 1);
            c.op(op::ALOAD_0);
            c.invokespecial(&super_name, "<init>", "()V");
            c.op(op::RETURN);
        });
    }

    pub fn finish(mut self) -> Vec<u8> {
        if !self.bootstrap.is_empty() {
            let name = self.pool.utf8("BootstrapMethods");
            let mut body = Vec::new();
            push_u16(&mut body, self.bootstrap.len() as u16);
            for (handle, args) in &self.bootstrap {
                push_u16(&mut body, *handle);
                push_u16(&mut body, args.len() as u16);
                args.iter().for_each(|a| push_u16(&mut body, *a));
            }
            self.attributes.push((name, body));
        }
        let mut out = Vec::new();
        push_u32(&mut out, 0xCAFE_BABE);
        push_u16(&mut out, 0);
        push_u16(&mut out, self.major);
        push_u16(&mut out, self.pool.next);
        for e in &self.pool.entries {
            out.extend_from_slice(e);
        }
        push_u16(&mut out, self.flags);
        push_u16(&mut out, self.this);
        push_u16(&mut out, self.super_class);
        push_u16(&mut out, self.interfaces.len() as u16);
        self.interfaces.iter().for_each(|i| push_u16(&mut out, *i));
        push_u16(&mut out, self.fields.len() as u16);
        for (flags, name, desc) in &self.fields {
            push_u16(&mut out, *flags);
            push_u16(&mut out, *name);
            push_u16(&mut out, *desc);
            push_u16(&mut out, 0);
        }
        push_u16(&mut out, self.methods.len() as u16);
        for m in &self.methods {
            push_u16(&mut out, m.flags);
            push_u16(&mut out, m.name);
            push_u16(&mut out, m.desc);
            push_u16(&mut out, m.attributes.len() as u16);
            for (name, body) in &m.attributes {
                push_u16(&mut out, *name);
                push_u32(&mut out, body.len() as u32);
                out.extend_from_slice(body);
            }
        }
        push_u16(&mut out, self.attributes.len() as u16);
        for (name, body) in &self.attributes {
            push_u16(&mut out, *name);
            push_u32(&mut out, body.len() as u32);
            out.extend_from_slice(body);
        }
        out
    }
}

/// Access flags, repeated here so fixture code reads naturally.
pub mod op_flags {
    pub const PUBLIC: u16 = 0x0001;
    pub const PRIVATE: u16 = 0x0002;
    pub const STATIC: u16 = 0x0008;
    pub const FINAL: u16 = 0x0010;
    pub const SUPER: u16 = 0x0020;
    pub const NATIVE: u16 = 0x0100;
    pub const INTERFACE: u16 = 0x0200;
    pub const ABSTRACT: u16 = 0x0400;
}

enum Fixup {
    /// Branch displacement relative to `insn`, written at `at`.
    Rel16 { at: usize, insn: usize, label: Label },
    Rel32 { at: usize, insn: usize, label: Label },
}

enum Frame {
    Same,
    Same1(VType),
    Chop(u8),
    Append(Vec<VType>),
    Full(Vec<VType>, Vec<VType>),
}

pub struct CodeAssembler<'p> {
    pool: &'p mut Pool,
    code: Vec<u8>,
    labels: Vec<Option<usize>>,
    fixups: Vec<Fixup>,
    max_stack: u16,
    max_locals: u16,
    handlers: Vec<(Label, Label, Label, u16)>,
    lines: Vec<(usize, u16)>,
    locals: Vec<(Label, Label, u16, u16, u16)>,
    frames: Vec<(usize, Frame)>,
    omit_stack_map: bool,
}

impl<'p> CodeAssembler<'p> {
    fn new(pool: &'p mut Pool) -> Self {
        CodeAssembler {
            pool,
            code: Vec::new(),
            labels: Vec::new(),
            fixups: Vec::new(),
            max_stack: 0,
            max_locals: 0,
            handlers: Vec::new(),
            lines: Vec::new(),
            locals: Vec::new(),
            frames: Vec::new(),
            omit_stack_map: false,
        }
    }

    pub fn max(&mut self, stack: u16, locals: u16) {
        self.max_stack = stack;
        self.max_locals = locals;
    }

    /// Current byte offset.
    pub fn offset(&self) -> usize {
        self.code.len()
    }

    pub fn label(&mut self) -> Label {
        self.labels.push(None);
        Label(self.labels.len() - 1)
    }

    pub fn bind(&mut self, label: Label) {
        assert!(self.labels[label.0].is_none(), "label bound twice");
        self.labels[label.0] = Some(self.code.len());
    }

    pub fn here(&mut self) -> Label {
        let l = self.label();
        self.bind(l);
        l
    }

    pub fn line(&mut self, line: u16) {
        self.lines.push((self.code.len(), line));
    }

    pub fn op(&mut self, opcode: u8) {
        self.code.push(opcode);
    }

    pub fn ops(&mut self, opcodes: &[u8]) {
        self.code.extend_from_slice(opcodes);
    }

    pub fn byte_op(&mut self, opcode: u8, operand: u8) {
        self.code.extend_from_slice(&[opcode, operand]);
    }

    pub fn short_op(&mut self, opcode: u8, operand: u16) {
        self.code.push(opcode);
        push_u16(&mut self.code, operand);
    }

    pub fn bipush(&mut self, v: i8) {
        self.byte_op(op::BIPUSH, v as u8);
    }

    pub fn sipush(&mut self, v: i16) {
        self.short_op(op::SIPUSH, v as u16);
    }

    /// `iload`/`istore`-style instruction, using `wide` above 255.
    pub fn local(&mut self, opcode: u8, index: u16) {
        if index > 255 {
            self.code.extend_from_slice(&[op::WIDE, opcode]);
            push_u16(&mut self.code, index);
        } else {
            self.byte_op(opcode, index as u8);
        }
    }

    pub fn iinc(&mut self, index: u16, delta: i16) {
        if index > 255 || i8::try_from(delta).is_err() {
            self.code.extend_from_slice(&[op::WIDE, op::IINC]);
            push_u16(&mut self.code, index);
            push_u16(&mut self.code, delta as u16);
        } else {
            self.code.extend_from_slice(&[op::IINC, index as u8, delta as u8]);
        }
    }

    fn ldc_index(&mut self, index: u16) {
        if index > 255 {
            self.short_op(op::LDC_W, index);
        } else {
            self.byte_op(op::LDC, index as u8);
        }
    }

    pub fn ldc_int(&mut self, v: i32) {
        let i = self.pool.integer(v);
        self.ldc_index(i);
    }

    pub fn ldc_float(&mut self, v: f32) {
        let i = self.pool.float(v);
        self.ldc_index(i);
    }

    pub fn ldc_string(&mut self, s: &str) {
        let i = self.pool.string(s);
        self.ldc_index(i);
    }

    /// `ldc`/`ldc_w` of an already allocated pool entry.
    pub fn ldc_entry(&mut self, index: u16) {
        self.ldc_index(index);
    }

    pub fn ldc2_long(&mut self, v: i64) {
        let i = self.pool.long(v);
        self.short_op(op::LDC2_W, i);
    }

    pub fn ldc2_double(&mut self, v: f64) {
        let i = self.pool.double(v);
        self.short_op(op::LDC2_W, i);
    }

    pub fn field_op(&mut self, opcode: u8, class: &str, name: &str, desc: &str) {
        let i = self.pool.member(9, class, name, desc);
        self.short_op(opcode, i);
    }

    pub fn invokestatic(&mut self, class: &str, name: &str, desc: &str) {
        let i = self.pool.member(10, class, name, desc);
        self.short_op(op::INVOKESTATIC, i);
    }

    pub fn invokespecial(&mut self, class: &str, name: &str, desc: &str) {
        let i = self.pool.member(10, class, name, desc);
        self.short_op(op::INVOKESPECIAL, i);
    }

    pub fn invokevirtual(&mut self, class: &str, name: &str, desc: &str) {
        let i = self.pool.member(10, class, name, desc);
        self.short_op(op::INVOKEVIRTUAL, i);
    }

    pub fn invokeinterface(&mut self, class: &str, name: &str, desc: &str, arg_slots: u8) {
        let i = self.pool.member(11, class, name, desc);
        self.short_op(op::INVOKEINTERFACE, i);
        self.code.extend_from_slice(&[arg_slots + 1, 0]);
    }

    pub fn invokedynamic(&mut self, bootstrap: u16, name: &str, desc: &str) {
        let nt = self.pool.name_and_type(name, desc);
        let i = self.pool.add(Pool::ref2(18, bootstrap, nt));
        self.short_op(op::INVOKEDYNAMIC, i);
        self.code.extend_from_slice(&[0, 0]);
    }

    pub fn class_op(&mut self, opcode: u8, class: &str) {
        let i = self.pool.class(class);
        self.short_op(opcode, i);
    }

    /// 16-bit branch (`goto`, `if*`).
    pub fn jump(&mut self, opcode: u8, label: Label) {
        let insn = self.code.len();
        self.code.push(opcode);
        self.fixups.push(Fixup::Rel16 { at: self.code.len(), insn, label });
        self.code.extend_from_slice(&[0, 0]);
    }

    pub fn goto_w(&mut self, label: Label) {
        let insn = self.code.len();
        self.code.push(op::GOTO_W);
        self.fixups.push(Fixup::Rel32 { at: self.code.len(), insn, label });
        self.code.extend_from_slice(&[0; 4]);
    }

    fn pad(&mut self) {
        while !self.code.len().is_multiple_of(4) {
            self.code.push(0);
        }
    }

    pub fn tableswitch(&mut self, low: i32, default: Label, targets: &[Label]) {
        let insn = self.code.len();
        self.code.push(op::TABLESWITCH);
        self.pad();
        self.fixups.push(Fixup::Rel32 { at: self.code.len(), insn, label: default });
        self.code.extend_from_slice(&[0; 4]);
        push_u32(&mut self.code, low as u32);
        push_u32(&mut self.code, (low + targets.len() as i32 - 1) as u32);
        for t in targets {
            self.fixups.push(Fixup::Rel32 { at: self.code.len(), insn, label: *t });
            self.code.extend_from_slice(&[0; 4]);
        }
    }

    pub fn lookupswitch(&mut self, default: Label, pairs: &[(i32, Label)]) {
        let insn = self.code.len();
        self.code.push(op::LOOKUPSWITCH);
        self.pad();
        self.fixups.push(Fixup::Rel32 { at: self.code.len(), insn, label: default });
        self.code.extend_from_slice(&[0; 4]);
        push_u32(&mut self.code, pairs.len() as u32);
        for (key, t) in pairs {
            push_u32(&mut self.code, *key as u32);
            self.fixups.push(Fixup::Rel32 { at: self.code.len(), insn, label: *t });
            self.code.extend_from_slice(&[0; 4]);
        }
    }

    /// `catch_type` of `None` catches everything.
    pub fn handler(&mut self, start: Label, end: Label, handler: Label, catch_type: Option<&str>) {
        let c = catch_type.map_or(0, |c| self.pool.class(c));
        self.handlers.push((start, end, handler, c));
    }

    pub fn local_var(&mut self, start: Label, end: Label, name: &str, desc: &str, index: u16) {
        let n = self.pool.utf8(name);
        let d = self.pool.utf8(desc);
        self.locals.push((start, end, n, d, index));
    }

    pub fn frame_same(&mut self) {
        self.frames.push((self.code.len(), Frame::Same));
    }

    pub fn frame_same1(&mut self, stack: VType) {
        self.frames.push((self.code.len(), Frame::Same1(stack)));
    }

    pub fn frame_chop(&mut self, k: u8) {
        self.frames.push((self.code.len(), Frame::Chop(k)));
    }

    pub fn frame_append(&mut self, locals: &[VType]) {
        self.frames.push((self.code.len(), Frame::Append(locals.to_vec())));
    }

    pub fn frame_full(&mut self, locals: &[VType], stack: &[VType]) {
        self.frames.push((self.code.len(), Frame::Full(locals.to_vec(), stack.to_vec())));
    }

    /// Leaves out the StackMapTable (valid for class versions below 50).
    pub fn no_stack_map(&mut self) {
        self.omit_stack_map = true;
    }

    fn resolve(&self, label: Label) -> usize {
        self.labels[label.0].expect("label never bound")
    }

    fn vtype(&mut self, out: &mut Vec<u8>, v: &VType) {
        match v {
            VType::Top => out.push(0),
            VType::Int => out.push(1),
            VType::Float => out.push(2),
            VType::Double => out.push(3),
            VType::Long => out.push(4),
            VType::Null => out.push(5),
            VType::UninitializedThis => out.push(6),
            VType::Object(name) => {
                out.push(7);
                let c = self.pool.class(name);
                push_u16(out, c);
            }
            VType::Uninitialized(l) => {
                out.push(8);
                push_u16(out, self.resolve(*l) as u16);
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        for f in std::mem::take(&mut self.fixups) {
            match f {
                Fixup::Rel16 { at, insn, label } => {
                    let d = self.resolve(label) as i64 - insn as i64;
                    let d = i16::try_from(d).expect("16-bit branch out of range");
                    self.code[at..at + 2].copy_from_slice(&d.to_be_bytes());
                }
                Fixup::Rel32 { at, insn, label } => {
                    let d = (self.resolve(label) as i64 - insn as i64) as i32;
                    self.code[at..at + 4].copy_from_slice(&d.to_be_bytes());
                }
            }
        }

        let mut sub = Vec::new();
        if !self.lines.is_empty() {
            let name = self.pool.utf8("LineNumberTable");
            let mut body = Vec::new();
            push_u16(&mut body, self.lines.len() as u16);
            for (pc, line) in &self.lines {
                push_u16(&mut body, *pc as u16);
                push_u16(&mut body, *line);
            }
            sub.push((name, body));
        }
        if !self.locals.is_empty() {
            let name = self.pool.utf8("LocalVariableTable");
            let mut body = Vec::new();
            push_u16(&mut body, self.locals.len() as u16);
            for (start, end, n, d, index) in self.locals.clone() {
                let s = self.resolve(start);
                push_u16(&mut body, s as u16);
                push_u16(&mut body, (self.resolve(end) - s) as u16);
                push_u16(&mut body, n);
                push_u16(&mut body, d);
                push_u16(&mut body, index);
            }
            sub.push((name, body));
        }
        if !self.frames.is_empty() && !self.omit_stack_map {
            let name = self.pool.utf8("StackMapTable");
            let mut body = Vec::new();
            push_u16(&mut body, self.frames.len() as u16);
            let mut previous: Option<usize> = None;
            for (pc, frame) in std::mem::take(&mut self.frames) {
                let delta = match previous {
                    None => pc,
                    Some(p) => pc - p - 1,
                };
                previous = Some(pc);
                match frame {
                    Frame::Same if delta < 64 => body.push(delta as u8),
                    Frame::Same => {
                        body.push(251);
                        push_u16(&mut body, delta as u16);
                    }
                    Frame::Same1(v) => {
                        if delta < 64 {
                            body.push(64 + delta as u8);
                        } else {
                            body.push(247);
                            push_u16(&mut body, delta as u16);
                        }
                        self.vtype(&mut body, &v);
                    }
                    Frame::Chop(k) => {
                        body.push(251 - k);
                        push_u16(&mut body, delta as u16);
                    }
                    Frame::Append(locals) => {
                        body.push(251 + locals.len() as u8);
                        push_u16(&mut body, delta as u16);
                        locals.iter().for_each(|v| self.vtype(&mut body, v));
                    }
                    Frame::Full(locals, stack) => {
                        body.push(255);
                        push_u16(&mut body, delta as u16);
                        push_u16(&mut body, locals.len() as u16);
                        locals.iter().for_each(|v| self.vtype(&mut body, v));
                        push_u16(&mut body, stack.len() as u16);
                        stack.iter().for_each(|v| self.vtype(&mut body, v));
                    }
                }
            }
            sub.push((name, body));
        }

        let mut out = Vec::new();
        push_u16(&mut out, self.max_stack);
        push_u16(&mut out, self.max_locals);
        push_u32(&mut out, self.code.len() as u32);
        out.extend_from_slice(&self.code);
        push_u16(&mut out, self.handlers.len() as u16);
        for (s, e, h, c) in self.handlers.clone() {
            push_u16(&mut out, self.resolve(s) as u16);
            push_u16(&mut out, self.resolve(e) as u16);
            push_u16(&mut out, self.resolve(h) as u16);
            push_u16(&mut out, c);
        }
        push_u16(&mut out, sub.len() as u16);
        for (name, body) in sub {
            push_u16(&mut out, name);
            push_u32(&mut out, body.len() as u32);
            out.extend_from_slice(&body);
        }
        out
    }
}
