//! Constant pool model.
//!
//! Entries are kept exactly as read: `Utf8` holds the raw modified UTF-8
//! bytes and floating point constants keep their bit patterns, so a pool
//! always re-encodes to the bytes it was decoded from.

use std::borrow::Cow;

use super::ClassFileError;

pub const TAG_UTF8: u8 = 1;
pub const TAG_INTEGER: u8 = 3;
pub const TAG_FLOAT: u8 = 4;
pub const TAG_LONG: u8 = 5;
pub const TAG_DOUBLE: u8 = 6;
pub const TAG_CLASS: u8 = 7;
pub const TAG_STRING: u8 = 8;
pub const TAG_FIELDREF: u8 = 9;
pub const TAG_METHODREF: u8 = 10;
pub const TAG_INTERFACE_METHODREF: u8 = 11;
pub const TAG_NAME_AND_TYPE: u8 = 12;
pub const TAG_METHOD_HANDLE: u8 = 15;
pub const TAG_METHOD_TYPE: u8 = 16;
pub const TAG_DYNAMIC: u8 = 17;
pub const TAG_INVOKE_DYNAMIC: u8 = 18;
pub const TAG_MODULE: u8 = 19;
pub const TAG_PACKAGE: u8 = 20;

/// Largest usable constant pool index (`constant_pool_count` is a u16).
pub const MAX_POOL_INDEX: usize = 65534;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Constant {
    Utf8(Vec<u8>),
    Integer(i32),
    /// IEEE-754 bit pattern.
    Float(u32),
    Long(i64),
    /// IEEE-754 bit pattern.
    Double(u64),
    Class { name: u16 },
    String { value: u16 },
    Fieldref { class: u16, name_and_type: u16 },
    Methodref { class: u16, name_and_type: u16 },
    InterfaceMethodref { class: u16, name_and_type: u16 },
    NameAndType { name: u16, descriptor: u16 },
    MethodHandle { kind: u8, reference: u16 },
    MethodType { descriptor: u16 },
    Dynamic { bootstrap: u16, name_and_type: u16 },
    InvokeDynamic { bootstrap: u16, name_and_type: u16 },
    Module { name: u16 },
    Package { name: u16 },
}

impl Constant {
    pub fn tag(&self) -> u8 {
        match self {
            Constant::Utf8(_) => TAG_UTF8,
            Constant::Integer(_) => TAG_INTEGER,
            Constant::Float(_) => TAG_FLOAT,
            Constant::Long(_) => TAG_LONG,
            Constant::Double(_) => TAG_DOUBLE,
            Constant::Class { .. } => TAG_CLASS,
            Constant::String { .. } => TAG_STRING,
            Constant::Fieldref { .. } => TAG_FIELDREF,
            Constant::Methodref { .. } => TAG_METHODREF,
            Constant::InterfaceMethodref { .. } => TAG_INTERFACE_METHODREF,
            Constant::NameAndType { .. } => TAG_NAME_AND_TYPE,
            Constant::MethodHandle { .. } => TAG_METHOD_HANDLE,
            Constant::MethodType { .. } => TAG_METHOD_TYPE,
            Constant::Dynamic { .. } => TAG_DYNAMIC,
            Constant::InvokeDynamic { .. } => TAG_INVOKE_DYNAMIC,
            Constant::Module { .. } => TAG_MODULE,
            Constant::Package { .. } => TAG_PACKAGE,
        }
    }

    /// Long and Double occupy two pool slots.
    pub fn is_wide(&self) -> bool {
        matches!(self, Constant::Long(_) | Constant::Double(_))
    }

    pub fn kind_name(&self) -> &'static str {
        tag_name(self.tag())
    }

    /// Pool indices this entry refers to, paired with the tags they must carry.
    pub(crate) fn references(&self) -> Vec<(u16, &'static [u8])> {
        const UTF8: &[u8] = &[TAG_UTF8];
        const CLASS: &[u8] = &[TAG_CLASS];
        const NAT: &[u8] = &[TAG_NAME_AND_TYPE];
        const MEMBER: &[u8] = &[TAG_FIELDREF, TAG_METHODREF, TAG_INTERFACE_METHODREF];
        match *self {
            Constant::Class { name } => vec![(name, UTF8)],
            Constant::String { value } => vec![(value, UTF8)],
            Constant::Fieldref { class, name_and_type }
            | Constant::Methodref { class, name_and_type }
            | Constant::InterfaceMethodref { class, name_and_type } => {
                vec![(class, CLASS), (name_and_type, NAT)]
            }
            Constant::NameAndType { name, descriptor } => vec![(name, UTF8), (descriptor, UTF8)],
            Constant::MethodHandle { reference, .. } => vec![(reference, MEMBER)],
            Constant::MethodType { descriptor } => vec![(descriptor, UTF8)],
            // The bootstrap index points into the BootstrapMethods attribute, not the pool.
            Constant::Dynamic { name_and_type, .. }
            | Constant::InvokeDynamic { name_and_type, .. } => vec![(name_and_type, NAT)],
            Constant::Module { name } | Constant::Package { name } => vec![(name, UTF8)],
            _ => Vec::new(),
        }
    }
}

pub fn tag_name(tag: u8) -> &'static str {
    match tag {
        TAG_UTF8 => "Utf8",
        TAG_INTEGER => "Integer",
        TAG_FLOAT => "Float",
        TAG_LONG => "Long",
        TAG_DOUBLE => "Double",
        TAG_CLASS => "Class",
        TAG_STRING => "String",
        TAG_FIELDREF => "Fieldref",
        TAG_METHODREF => "Methodref",
        TAG_INTERFACE_METHODREF => "InterfaceMethodref",
        TAG_NAME_AND_TYPE => "NameAndType",
        TAG_METHOD_HANDLE => "MethodHandle",
        TAG_METHOD_TYPE => "MethodType",
        TAG_DYNAMIC => "Dynamic",
        TAG_INVOKE_DYNAMIC => "InvokeDynamic",
        TAG_MODULE => "Module",
        TAG_PACKAGE => "Package",
        _ => "unknown",
    }
}

/// A resolved field or method reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberRef<'a> {
    pub class: Cow<'a, str>,
    pub name: Cow<'a, str>,
    pub descriptor: Cow<'a, str>,
}

/// The constant pool, indexed from 1. Slot 0 and the slot following each
/// Long/Double entry are `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstantPool {
    entries: Vec<Option<Constant>>,
}

impl Default for ConstantPool {
    fn default() -> Self {
        Self::new()
    }
}

impl ConstantPool {
    pub fn new() -> Self {
        ConstantPool {
            entries: vec![None],
        }
    }

    /// Value of the class file's `constant_pool_count` field.
    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: u16) -> Option<&Constant> {
        self.entries.get(index as usize).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u16, &Constant)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|c| (i as u16, c)))
    }

    /// Appends an entry without deduplication.
    pub fn push(&mut self, constant: Constant) -> Result<u16, ClassFileError> {
        let slots = if constant.is_wide() { 2 } else { 1 };
        let index = self.entries.len();
        if index + slots - 1 > MAX_POOL_INDEX {
            return Err(ClassFileError::PoolOverflow);
        }
        self.entries.push(Some(constant));
        if slots == 2 {
            self.entries.push(None);
        }
        Ok(index as u16)
    }

    fn find(&self, constant: &Constant) -> Option<u16> {
        self.iter().find(|(_, c)| *c == constant).map(|(i, _)| i)
    }

    /// Index of an equal entry, appending one if none exists.
    pub fn intern(&mut self, constant: Constant) -> Result<u16, ClassFileError> {
        match self.find(&constant) {
            Some(index) => Ok(index),
            None => self.push(constant),
        }
    }

    pub fn intern_utf8(&mut self, s: &str) -> Result<u16, ClassFileError> {
        self.intern(Constant::Utf8(encode_modified_utf8(s)))
    }

    pub fn intern_class(&mut self, internal_name: &str) -> Result<u16, ClassFileError> {
        let name = self.intern_utf8(internal_name)?;
        self.intern(Constant::Class { name })
    }

    pub fn intern_name_and_type(&mut self, name: &str, descriptor: &str) -> Result<u16, ClassFileError> {
        let name = self.intern_utf8(name)?;
        let descriptor = self.intern_utf8(descriptor)?;
        self.intern(Constant::NameAndType { name, descriptor })
    }

    pub fn intern_fieldref(&mut self, class: &str, name: &str, descriptor: &str) -> Result<u16, ClassFileError> {
        let class = self.intern_class(class)?;
        let name_and_type = self.intern_name_and_type(name, descriptor)?;
        self.intern(Constant::Fieldref { class, name_and_type })
    }

    pub fn intern_methodref(&mut self, class: &str, name: &str, descriptor: &str) -> Result<u16, ClassFileError> {
        let class = self.intern_class(class)?;
        let name_and_type = self.intern_name_and_type(name, descriptor)?;
        self.intern(Constant::Methodref { class, name_and_type })
    }

    pub fn intern_integer(&mut self, value: i32) -> Result<u16, ClassFileError> {
        self.intern(Constant::Integer(value))
    }

    fn expect(&self, index: u16, what: &str) -> Result<&Constant, ClassFileError> {
        self.get(index).ok_or_else(|| {
            ClassFileError::InvalidModel(format!("pool index #{index} ({what}) is not a valid entry"))
        })
    }

    pub fn utf8(&self, index: u16) -> Result<Cow<'_, str>, ClassFileError> {
        match self.expect(index, "Utf8")? {
            Constant::Utf8(bytes) => Ok(decode_modified_utf8(bytes)),
            other => Err(ClassFileError::InvalidModel(format!(
                "pool index #{index} is {}, expected Utf8",
                other.kind_name()
            ))),
        }
    }

    pub fn class_name(&self, index: u16) -> Result<Cow<'_, str>, ClassFileError> {
        match self.expect(index, "Class")? {
            Constant::Class { name } => self.utf8(*name),
            other => Err(ClassFileError::InvalidModel(format!(
                "pool index #{index} is {}, expected Class",
                other.kind_name()
            ))),
        }
    }

    pub fn name_and_type(&self, index: u16) -> Result<(Cow<'_, str>, Cow<'_, str>), ClassFileError> {
        match self.expect(index, "NameAndType")? {
            Constant::NameAndType { name, descriptor } => Ok((self.utf8(*name)?, self.utf8(*descriptor)?)),
            other => Err(ClassFileError::InvalidModel(format!(
                "pool index #{index} is {}, expected NameAndType",
                other.kind_name()
            ))),
        }
    }

    /// Resolves a Fieldref, Methodref or InterfaceMethodref.
    pub fn member_ref(&self, index: u16) -> Result<MemberRef<'_>, ClassFileError> {
        match self.expect(index, "member reference")? {
            Constant::Fieldref { class, name_and_type }
            | Constant::Methodref { class, name_and_type }
            | Constant::InterfaceMethodref { class, name_and_type } => {
                let (name, descriptor) = self.name_and_type(*name_and_type)?;
                Ok(MemberRef {
                    class: self.class_name(*class)?,
                    name,
                    descriptor,
                })
            }
            other => Err(ClassFileError::InvalidModel(format!(
                "pool index #{index} is {}, expected a member reference",
                other.kind_name()
            ))),
        }
    }

    /// Descriptor of an InvokeDynamic or Dynamic entry.
    pub fn dynamic_descriptor(&self, index: u16) -> Result<Cow<'_, str>, ClassFileError> {
        match self.expect(index, "InvokeDynamic")? {
            Constant::InvokeDynamic { name_and_type, .. } | Constant::Dynamic { name_and_type, .. } => {
                Ok(self.name_and_type(*name_and_type)?.1)
            }
            other => Err(ClassFileError::InvalidModel(format!(
                "pool index #{index} is {}, expected InvokeDynamic",
                other.kind_name()
            ))),
        }
    }

    pub(crate) fn from_entries(entries: Vec<Option<Constant>>) -> Self {
        ConstantPool { entries }
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) -> Result<(), ClassFileError> {
        if self.entries.len() > MAX_POOL_INDEX + 1 {
            return Err(ClassFileError::PoolOverflow);
        }
        out.extend_from_slice(&(self.entries.len() as u16).to_be_bytes());
        for constant in self.entries.iter().flatten() {
            out.push(constant.tag());
            match constant {
                Constant::Utf8(bytes) => {
                    out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
                    out.extend_from_slice(bytes);
                }
                Constant::Integer(v) => out.extend_from_slice(&v.to_be_bytes()),
                Constant::Float(bits) => out.extend_from_slice(&bits.to_be_bytes()),
                Constant::Long(v) => out.extend_from_slice(&v.to_be_bytes()),
                Constant::Double(bits) => out.extend_from_slice(&bits.to_be_bytes()),
                Constant::Class { name: a }
                | Constant::String { value: a }
                | Constant::MethodType { descriptor: a }
                | Constant::Module { name: a }
                | Constant::Package { name: a } => out.extend_from_slice(&a.to_be_bytes()),
                Constant::Fieldref { class: a, name_and_type: b }
                | Constant::Methodref { class: a, name_and_type: b }
                | Constant::InterfaceMethodref { class: a, name_and_type: b }
                | Constant::NameAndType { name: a, descriptor: b }
                | Constant::Dynamic { bootstrap: a, name_and_type: b }
                | Constant::InvokeDynamic { bootstrap: a, name_and_type: b } => {
                    out.extend_from_slice(&a.to_be_bytes());
                    out.extend_from_slice(&b.to_be_bytes());
                }
                Constant::MethodHandle { kind, reference } => {
                    out.push(*kind);
                    out.extend_from_slice(&reference.to_be_bytes());
                }
            }
        }
        Ok(())
    }
}

/// Encodes a string in the JVM's modified UTF-8: NUL becomes `C0 80` and
/// supplementary characters are written as surrogate pairs.
pub fn encode_modified_utf8(s: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(s.len());
    for unit in s.encode_utf16() {
        match unit {
            0x0001..=0x007f => out.push(unit as u8),
            0x0000 | 0x0080..=0x07ff => {
                out.push(0xc0 | (unit >> 6) as u8);
                out.push(0x80 | (unit & 0x3f) as u8);
            }
            _ => {
                out.push(0xe0 | (unit >> 12) as u8);
                out.push(0x80 | ((unit >> 6) & 0x3f) as u8);
                out.push(0x80 | (unit & 0x3f) as u8);
            }
        }
    }
    out
}

/// Lossy decode of modified UTF-8. Plain UTF-8 (the common case) is borrowed.
pub fn decode_modified_utf8(bytes: &[u8]) -> Cow<'_, str> {
    if let Ok(s) = std::str::from_utf8(bytes) {
        return Cow::Borrowed(s);
    }
    let mut units = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b & 0x80 == 0 {
            units.push(b as u16);
            i += 1;
        } else if b & 0xe0 == 0xc0 && i + 1 < bytes.len() {
            units.push(((b as u16 & 0x1f) << 6) | (bytes[i + 1] as u16 & 0x3f));
            i += 2;
        } else if b & 0xf0 == 0xe0 && i + 2 < bytes.len() {
            units.push(
                ((b as u16 & 0x0f) << 12) | ((bytes[i + 1] as u16 & 0x3f) << 6) | (bytes[i + 2] as u16 & 0x3f),
            );
            i += 3;
        } else {
            units.push(0xfffd);
            i += 1;
        }
    }
    Cow::Owned(String::from_utf16_lossy(&units))
}
