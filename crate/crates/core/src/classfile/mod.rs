//! Class file parsing and emission.
//!
//! [`parse_class`] and [`emit_class`] are inverses on well-formed input:
//! the constant pool keeps its order, unknown attributes are carried as raw
//! bytes, and only `Code` attributes are decoded (see [`code`]).

use std::borrow::Cow;

use thiserror::Error;

pub mod code;
pub mod descriptor;
pub mod opcodes;
pub mod pool;
pub mod verify;

pub use code::{
    decode_code, encode_code, CodeAttribute, CodeModel, ExceptionHandler, FrameKind, Instruction, LineNumber,
    LocalVariable, Operand, Ordinal, StackMapFrame, VerificationType,
};
pub use descriptor::{DescriptorError, FieldType, MethodDescriptor};
pub use pool::{Constant, ConstantPool, MemberRef};

pub const MAGIC: u32 = 0xCAFE_BABE;

pub const ACC_PUBLIC: u16 = 0x0001;
pub const ACC_PRIVATE: u16 = 0x0002;
pub const ACC_STATIC: u16 = 0x0008;
pub const ACC_FINAL: u16 = 0x0010;
pub const ACC_SUPER: u16 = 0x0020;
pub const ACC_NATIVE: u16 = 0x0100;
pub const ACC_INTERFACE: u16 = 0x0200;
pub const ACC_ABSTRACT: u16 = 0x0400;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassFileError {
    #[error("malformed class file at byte {offset}: {reason}")]
    MalformedClassFile { offset: usize, reason: String },
    #[error("malformed code at bytecode offset {offset}: {reason}")]
    MalformedCode { offset: usize, reason: String },
    #[error("cannot encode: {0}")]
    EncodeOverflow(String),
    #[error("constant pool would exceed 65535 entries")]
    PoolOverflow,
    #[error("invalid class model: {0}")]
    InvalidModel(String),
}

/// An attribute kept as uninterpreted bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAttribute {
    pub name_index: u16,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldModel {
    pub access_flags: u16,
    pub name_index: u16,
    pub descriptor_index: u16,
    pub attributes: Vec<RawAttribute>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MethodAttribute {
    Code { name_index: u16, code: CodeModel },
    Raw(RawAttribute),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodModel {
    pub access_flags: u16,
    pub name_index: u16,
    pub descriptor_index: u16,
    pub attributes: Vec<MethodAttribute>,
}

impl MethodModel {
    pub fn code(&self) -> Option<&CodeModel> {
        self.attributes.iter().find_map(|a| match a {
            MethodAttribute::Code { code, .. } => Some(code),
            MethodAttribute::Raw(_) => None,
        })
    }

    pub fn code_mut(&mut self) -> Option<&mut CodeModel> {
        self.attributes.iter_mut().find_map(|a| match a {
            MethodAttribute::Code { code, .. } => Some(code),
            MethodAttribute::Raw(_) => None,
        })
    }

    pub fn is_static(&self) -> bool {
        self.access_flags & ACC_STATIC != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassModel {
    pub minor_version: u16,
    pub major_version: u16,
    pub pool: ConstantPool,
    pub access_flags: u16,
    pub this_class: u16,
    /// 0 only for `java/lang/Object`.
    pub super_class: u16,
    pub interfaces: Vec<u16>,
    pub fields: Vec<FieldModel>,
    pub methods: Vec<MethodModel>,
    pub attributes: Vec<RawAttribute>,
}

impl ClassModel {
    /// Internal name, e.g. `com/example/FloatTools`.
    pub fn name(&self) -> Cow<'_, str> {
        self.pool.class_name(self.this_class).unwrap_or(Cow::Borrowed("<invalid>"))
    }

    pub fn super_name(&self) -> Option<Cow<'_, str>> {
        (self.super_class != 0).then(|| self.pool.class_name(self.super_class).ok()).flatten()
    }

    pub fn method_name(&self, method: &MethodModel) -> Cow<'_, str> {
        self.pool.utf8(method.name_index).unwrap_or(Cow::Borrowed("<invalid>"))
    }

    pub fn method_descriptor(&self, method: &MethodModel) -> Cow<'_, str> {
        self.pool.utf8(method.descriptor_index).unwrap_or(Cow::Borrowed("<invalid>"))
    }

    pub fn find_method(&self, name: &str, descriptor: &str) -> Option<usize> {
        self.methods
            .iter()
            .position(|m| self.method_name(m) == name && self.method_descriptor(m) == descriptor)
    }

    pub fn field_name(&self, field: &FieldModel) -> Cow<'_, str> {
        self.pool.utf8(field.name_index).unwrap_or(Cow::Borrowed("<invalid>"))
    }

    pub fn field_descriptor(&self, field: &FieldModel) -> Cow<'_, str> {
        self.pool.utf8(field.descriptor_index).unwrap_or(Cow::Borrowed("<invalid>"))
    }

    pub fn find_field(&self, name: &str) -> Option<&FieldModel> {
        self.fields.iter().find(|f| self.field_name(f) == name)
    }
}

/// Big-endian cursor that reports errors with absolute file offsets.
pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(data: &'a [u8], base: usize) -> Self {
        Reader { data, pos: 0, base }
    }

    pub(crate) fn file_offset(&self) -> usize {
        self.base + self.pos
    }

    fn truncated(&self) -> ClassFileError {
        ClassFileError::MalformedClassFile {
            offset: self.file_offset(),
            reason: "unexpected end of data".into(),
        }
    }

    pub(crate) fn bytes(&mut self, len: usize) -> Result<&'a [u8], ClassFileError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.data.len());
        match end {
            Some(end) => {
                let out = &self.data[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(self.truncated()),
        }
    }

    pub(crate) fn u8(&mut self) -> Result<u8, ClassFileError> {
        Ok(self.bytes(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, ClassFileError> {
        let b = self.bytes(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, ClassFileError> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, ClassFileError> {
        Ok(((self.u32()? as u64) << 32) | self.u32()? as u64)
    }

    pub(crate) fn finish(&self) -> Result<(), ClassFileError> {
        if self.pos == self.data.len() {
            Ok(())
        } else {
            Err(ClassFileError::MalformedClassFile {
                offset: self.file_offset(),
                reason: format!("{} trailing bytes", self.data.len() - self.pos),
            })
        }
    }
}

fn malformed(offset: usize, reason: impl Into<String>) -> ClassFileError {
    ClassFileError::MalformedClassFile { offset, reason: reason.into() }
}

fn expect_tag(pool: &ConstantPool, index: u16, allowed: &[u8], offset: usize, what: &str) -> Result<(), ClassFileError> {
    match pool.get(index) {
        Some(c) if allowed.contains(&c.tag()) => Ok(()),
        other => Err(malformed(
            offset,
            format!(
                "{what} refers to #{index} ({}), expected {}",
                other.map_or("nothing", |c| c.kind_name()),
                allowed.iter().map(|t| pool::tag_name(*t)).collect::<Vec<_>>().join("/")
            ),
        )),
    }
}

fn read_pool(r: &mut Reader<'_>) -> Result<ConstantPool, ClassFileError> {
    let count = r.u16()? as usize;
    if count == 0 {
        return Err(malformed(r.file_offset() - 2, "constant pool count is zero"));
    }
    let mut entries: Vec<Option<Constant>> = vec![None];
    let mut offsets = vec![0usize];
    while entries.len() < count {
        let at = r.file_offset();
        let tag = r.u8()?;
        let constant = match tag {
            pool::TAG_UTF8 => {
                let len = r.u16()? as usize;
                Constant::Utf8(r.bytes(len)?.to_vec())
            }
            pool::TAG_INTEGER => Constant::Integer(r.u32()? as i32),
            pool::TAG_FLOAT => Constant::Float(r.u32()?),
            pool::TAG_LONG => Constant::Long(r.u64()? as i64),
            pool::TAG_DOUBLE => Constant::Double(r.u64()?),
            pool::TAG_CLASS => Constant::Class { name: r.u16()? },
            pool::TAG_STRING => Constant::String { value: r.u16()? },
            pool::TAG_FIELDREF => Constant::Fieldref { class: r.u16()?, name_and_type: r.u16()? },
            pool::TAG_METHODREF => Constant::Methodref { class: r.u16()?, name_and_type: r.u16()? },
            pool::TAG_INTERFACE_METHODREF => Constant::InterfaceMethodref { class: r.u16()?, name_and_type: r.u16()? },
            pool::TAG_NAME_AND_TYPE => Constant::NameAndType { name: r.u16()?, descriptor: r.u16()? },
            pool::TAG_METHOD_HANDLE => {
                let kind = r.u8()?;
                if !(1..=9).contains(&kind) {
                    return Err(malformed(at, format!("invalid method handle kind {kind}")));
                }
                Constant::MethodHandle { kind, reference: r.u16()? }
            }
            pool::TAG_METHOD_TYPE => Constant::MethodType { descriptor: r.u16()? },
            pool::TAG_DYNAMIC => Constant::Dynamic { bootstrap: r.u16()?, name_and_type: r.u16()? },
            pool::TAG_INVOKE_DYNAMIC => Constant::InvokeDynamic { bootstrap: r.u16()?, name_and_type: r.u16()? },
            pool::TAG_MODULE => Constant::Module { name: r.u16()? },
            pool::TAG_PACKAGE => Constant::Package { name: r.u16()? },
            _ => return Err(malformed(at, format!("unknown constant pool tag {tag}"))),
        };
        let wide = constant.is_wide();
        entries.push(Some(constant));
        offsets.push(at);
        if wide {
            if entries.len() >= count {
                return Err(malformed(at, "8-byte constant occupies the last pool slot"));
            }
            entries.push(None);
            offsets.push(at);
        }
    }
    let pool = ConstantPool::from_entries(entries);
    for (index, constant) in pool.iter() {
        for (target, allowed) in constant.references() {
            expect_tag(&pool, target, allowed, offsets[index as usize], &format!("pool #{index}"))?;
        }
    }
    Ok(pool)
}

fn read_raw_attributes(r: &mut Reader<'_>, pool: &ConstantPool) -> Result<Vec<RawAttribute>, ClassFileError> {
    let count = r.u16()?;
    (0..count)
        .map(|_| {
            let at = r.file_offset();
            let name_index = r.u16()?;
            expect_tag(pool, name_index, &[pool::TAG_UTF8], at, "attribute name")?;
            let len = r.u32()? as usize;
            Ok(RawAttribute { name_index, data: r.bytes(len)?.to_vec() })
        })
        .collect()
}

/// Parses a class file. Every pool reference held by the resulting model
/// resolves to an entry of the expected kind.
pub fn parse_class(bytes: &[u8]) -> Result<ClassModel, ClassFileError> {
    let mut r = Reader::new(bytes, 0);
    if r.u32()? != MAGIC {
        return Err(malformed(0, "bad magic number"));
    }
    let minor_version = r.u16()?;
    let major_version = r.u16()?;
    let pool = read_pool(&mut r)?;
    let access_flags = r.u16()?;
    let at = r.file_offset();
    let this_class = r.u16()?;
    expect_tag(&pool, this_class, &[pool::TAG_CLASS], at, "this_class")?;
    let at = r.file_offset();
    let super_class = r.u16()?;
    if super_class != 0 {
        expect_tag(&pool, super_class, &[pool::TAG_CLASS], at, "super_class")?;
    }
    let interface_count = r.u16()?;
    let mut interfaces = Vec::with_capacity(interface_count as usize);
    for _ in 0..interface_count {
        let at = r.file_offset();
        let i = r.u16()?;
        expect_tag(&pool, i, &[pool::TAG_CLASS], at, "interface")?;
        interfaces.push(i);
    }

    let field_count = r.u16()?;
    let mut fields = Vec::with_capacity(field_count as usize);
    for _ in 0..field_count {
        let at = r.file_offset();
        let access_flags = r.u16()?;
        let name_index = r.u16()?;
        let descriptor_index = r.u16()?;
        expect_tag(&pool, name_index, &[pool::TAG_UTF8], at + 2, "field name")?;
        expect_tag(&pool, descriptor_index, &[pool::TAG_UTF8], at + 4, "field descriptor")?;
        let descriptor = pool.utf8(descriptor_index)?;
        FieldType::parse(&descriptor).map_err(|e| malformed(at + 4, e.to_string()))?;
        let attributes = read_raw_attributes(&mut r, &pool)?;
        fields.push(FieldModel { access_flags, name_index, descriptor_index, attributes });
    }

    let method_count = r.u16()?;
    let mut methods = Vec::with_capacity(method_count as usize);
    for _ in 0..method_count {
        let at = r.file_offset();
        let access_flags = r.u16()?;
        let name_index = r.u16()?;
        let descriptor_index = r.u16()?;
        expect_tag(&pool, name_index, &[pool::TAG_UTF8], at + 2, "method name")?;
        expect_tag(&pool, descriptor_index, &[pool::TAG_UTF8], at + 4, "method descriptor")?;
        let descriptor = pool.utf8(descriptor_index)?;
        MethodDescriptor::parse(&descriptor).map_err(|e| malformed(at + 4, e.to_string()))?;
        let attr_count = r.u16()?;
        let mut attributes = Vec::with_capacity(attr_count as usize);
        let mut seen_code = false;
        for _ in 0..attr_count {
            let attr_at = r.file_offset();
            let name_index = r.u16()?;
            expect_tag(&pool, name_index, &[pool::TAG_UTF8], attr_at, "attribute name")?;
            let len = r.u32()? as usize;
            let body_at = r.file_offset();
            let body = r.bytes(len)?;
            if pool.utf8(name_index)? == "Code" {
                if seen_code {
                    return Err(malformed(attr_at, "method has more than one Code attribute"));
                }
                seen_code = true;
                let code = code::decode_code_at(body, &pool, body_at)?;
                attributes.push(MethodAttribute::Code { name_index, code });
            } else {
                attributes.push(MethodAttribute::Raw(RawAttribute { name_index, data: body.to_vec() }));
            }
        }
        methods.push(MethodModel { access_flags, name_index, descriptor_index, attributes });
    }

    let attributes = read_raw_attributes(&mut r, &pool)?;
    r.finish()?;
    Ok(ClassModel {
        minor_version,
        major_version,
        pool,
        access_flags,
        this_class,
        super_class,
        interfaces,
        fields,
        methods,
        attributes,
    })
}

fn write_attribute(out: &mut Vec<u8>, name_index: u16, data: &[u8]) -> Result<(), ClassFileError> {
    let len = u32::try_from(data.len()).map_err(|_| ClassFileError::EncodeOverflow("attribute too long".into()))?;
    out.extend_from_slice(&name_index.to_be_bytes());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(data);
    Ok(())
}

fn count_u16(n: usize, what: &str) -> Result<[u8; 2], ClassFileError> {
    u16::try_from(n)
        .map(u16::to_be_bytes)
        .map_err(|_| ClassFileError::EncodeOverflow(format!("too many {what}")))
}

/// Serializes a class model.
pub fn emit_class(class: &ClassModel) -> Result<Vec<u8>, ClassFileError> {
    let mut out = Vec::with_capacity(4096);
    out.extend_from_slice(&MAGIC.to_be_bytes());
    out.extend_from_slice(&class.minor_version.to_be_bytes());
    out.extend_from_slice(&class.major_version.to_be_bytes());
    class.pool.write(&mut out)?;
    out.extend_from_slice(&class.access_flags.to_be_bytes());
    out.extend_from_slice(&class.this_class.to_be_bytes());
    out.extend_from_slice(&class.super_class.to_be_bytes());
    out.extend_from_slice(&count_u16(class.interfaces.len(), "interfaces")?);
    for i in &class.interfaces {
        out.extend_from_slice(&i.to_be_bytes());
    }
    out.extend_from_slice(&count_u16(class.fields.len(), "fields")?);
    for f in &class.fields {
        out.extend_from_slice(&f.access_flags.to_be_bytes());
        out.extend_from_slice(&f.name_index.to_be_bytes());
        out.extend_from_slice(&f.descriptor_index.to_be_bytes());
        out.extend_from_slice(&count_u16(f.attributes.len(), "field attributes")?);
        for a in &f.attributes {
            write_attribute(&mut out, a.name_index, &a.data)?;
        }
    }
    out.extend_from_slice(&count_u16(class.methods.len(), "methods")?);
    for m in &class.methods {
        out.extend_from_slice(&m.access_flags.to_be_bytes());
        out.extend_from_slice(&m.name_index.to_be_bytes());
        out.extend_from_slice(&m.descriptor_index.to_be_bytes());
        out.extend_from_slice(&count_u16(m.attributes.len(), "method attributes")?);
        for a in &m.attributes {
            match a {
                MethodAttribute::Code { name_index, code } => {
                    write_attribute(&mut out, *name_index, &encode_code(code)?)?;
                }
                MethodAttribute::Raw(raw) => write_attribute(&mut out, raw.name_index, &raw.data)?,
            }
        }
    }
    out.extend_from_slice(&count_u16(class.attributes.len(), "class attributes")?);
    for a in &class.attributes {
        write_attribute(&mut out, a.name_index, &a.data)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_class() -> Vec<u8> {
        let mut pool = ConstantPool::new();
        let this = pool.intern_class("Min").unwrap();
        let sup = pool.intern_class("java/lang/Object").unwrap();
        let name = pool.intern_utf8("run").unwrap();
        let desc = pool.intern_utf8("()V").unwrap();
        let code_name = pool.intern_utf8("Code").unwrap();
        let class = ClassModel {
            minor_version: 0,
            major_version: 52,
            pool,
            access_flags: ACC_PUBLIC | ACC_SUPER,
            this_class: this,
            super_class: sup,
            interfaces: vec![],
            fields: vec![],
            methods: vec![MethodModel {
                access_flags: ACC_PUBLIC | ACC_STATIC,
                name_index: name,
                descriptor_index: desc,
                attributes: vec![MethodAttribute::Code {
                    name_index: code_name,
                    code: CodeModel {
                        max_stack: 0,
                        max_locals: 0,
                        instructions: vec![Instruction::simple(opcodes::RETURN)],
                        exception_table: vec![],
                        attributes: vec![],
                    },
                }],
            }],
            attributes: vec![],
        };
        emit_class(&class).unwrap()
    }

    #[test]
    fn minimal_class_round_trips() {
        let bytes = minimal_class();
        let model = parse_class(&bytes).unwrap();
        assert_eq!(model.name(), "Min");
        assert_eq!(model.find_method("run", "()V"), Some(0));
        assert_eq!(emit_class(&model).unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_magic_truncation_and_trailing_bytes() {
        let bytes = minimal_class();
        let mut bad = bytes.clone();
        bad[0] = 0;
        assert!(matches!(parse_class(&bad), Err(ClassFileError::MalformedClassFile { offset: 0, .. })));
        for cut in [3, 9, bytes.len() - 1] {
            assert!(matches!(parse_class(&bytes[..cut]), Err(ClassFileError::MalformedClassFile { .. })));
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(parse_class(&long), Err(ClassFileError::MalformedClassFile { .. })));
    }

    #[test]
    fn rejects_dangling_pool_reference() {
        let mut bytes = minimal_class();
        // this_class sits right after the pool and access flags.
        let mut model = parse_class(&bytes).unwrap();
        model.this_class = 200;
        bytes = emit_class(&model).unwrap();
        let err = parse_class(&bytes).unwrap_err();
        assert!(matches!(err, ClassFileError::MalformedClassFile { .. }), "{err}");
        assert!(err.to_string().contains("this_class"));
    }
}
