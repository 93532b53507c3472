//! Field and method descriptor parsing.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed descriptor {descriptor:?}: {reason}")]
pub struct DescriptorError {
    pub descriptor: String,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldType {
    Byte,
    Char,
    Double,
    Float,
    Int,
    Long,
    Short,
    Boolean,
    /// Internal class name, e.g. `java/lang/String`.
    Object(String),
    Array(Box<FieldType>),
}

impl FieldType {
    /// Operand stack / local variable slots a value of this type occupies.
    pub fn slots(&self) -> u16 {
        match self {
            FieldType::Long | FieldType::Double => 2,
            _ => 1,
        }
    }

    pub fn parse(descriptor: &str) -> Result<FieldType, DescriptorError> {
        let (ty, rest) = parse_field(descriptor, descriptor)?;
        if !rest.is_empty() {
            return Err(error(descriptor, "trailing characters"));
        }
        Ok(ty)
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldType::Byte => f.write_str("B"),
            FieldType::Char => f.write_str("C"),
            FieldType::Double => f.write_str("D"),
            FieldType::Float => f.write_str("F"),
            FieldType::Int => f.write_str("I"),
            FieldType::Long => f.write_str("J"),
            FieldType::Short => f.write_str("S"),
            FieldType::Boolean => f.write_str("Z"),
            FieldType::Object(name) => write!(f, "L{name};"),
            FieldType::Array(inner) => write!(f, "[{inner}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDescriptor {
    pub params: Vec<FieldType>,
    /// `None` for `V`.
    pub ret: Option<FieldType>,
}

impl MethodDescriptor {
    pub fn parse(descriptor: &str) -> Result<MethodDescriptor, DescriptorError> {
        let mut rest = descriptor
            .strip_prefix('(')
            .ok_or_else(|| error(descriptor, "missing '('"))?;
        let mut params = Vec::new();
        loop {
            if let Some(after) = rest.strip_prefix(')') {
                rest = after;
                break;
            }
            if rest.is_empty() {
                return Err(error(descriptor, "missing ')'"));
            }
            let (ty, after) = parse_field(rest, descriptor)?;
            params.push(ty);
            rest = after;
        }
        let ret = if rest == "V" {
            None
        } else {
            Some(FieldType::parse(rest).map_err(|_| error(descriptor, "bad return type"))?)
        };
        if params.iter().map(FieldType::slots).sum::<u16>() > 255 {
            return Err(error(descriptor, "more than 255 parameter slots"));
        }
        Ok(MethodDescriptor { params, ret })
    }

    pub fn param_slots(&self) -> u16 {
        self.params.iter().map(FieldType::slots).sum()
    }

    pub fn return_slots(&self) -> u16 {
        self.ret.as_ref().map_or(0, FieldType::slots)
    }
}

impl fmt::Display for MethodDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for p in &self.params {
            write!(f, "{p}")?;
        }
        f.write_str(")")?;
        match &self.ret {
            Some(ty) => write!(f, "{ty}"),
            None => f.write_str("V"),
        }
    }
}

fn error(descriptor: &str, reason: &'static str) -> DescriptorError {
    DescriptorError {
        descriptor: descriptor.to_owned(),
        reason,
    }
}

fn parse_field<'a>(s: &'a str, whole: &str) -> Result<(FieldType, &'a str), DescriptorError> {
    let mut chars = s.chars();
    let ty = match chars.next() {
        Some('B') => FieldType::Byte,
        Some('C') => FieldType::Char,
        Some('D') => FieldType::Double,
        Some('F') => FieldType::Float,
        Some('I') => FieldType::Int,
        Some('J') => FieldType::Long,
        Some('S') => FieldType::Short,
        Some('Z') => FieldType::Boolean,
        Some('L') => {
            let body = &s[1..];
            let end = body.find(';').ok_or_else(|| error(whole, "unterminated class name"))?;
            let name = &body[..end];
            if name.is_empty() || name.contains(['.', '[', '(', ')']) {
                return Err(error(whole, "bad class name"));
            }
            return Ok((FieldType::Object(name.to_owned()), &body[end + 1..]));
        }
        Some('[') => {
            let (inner, rest) = parse_field(&s[1..], whole)?;
            return Ok((FieldType::Array(Box::new(inner)), rest));
        }
        Some(_) => return Err(error(whole, "unknown type character")),
        None => return Err(error(whole, "unexpected end")),
    };
    Ok((ty, chars.as_str()))
}
