use std::fmt;

use crate::classfile::FieldType;

/// A reference value. There is no heap: objects carry only their class,
/// which is all the supported code paths observe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ref {
    Null,
    /// The `CoverageLog` singleton.
    Recorder,
    Object { class: String },
    Str(String),
}

#[derive(Debug, Clone)]
pub enum Value {
    Int(i32),
    Long(i64),
    Float(f32),
    Double(f64),
    Ref(Ref),
}

/// Floats compare by bit pattern, except that all NaNs are equal.
impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Long(a), Value::Long(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            (Value::Double(a), Value::Double(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            (Value::Ref(a), Value::Ref(b)) => a == b,
            _ => false,
        }
    }
}

impl Value {
    /// Operand stack / local variable slots taken.
    pub fn slots(&self) -> usize {
        match self {
            Value::Long(_) | Value::Double(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Long(_) => "long",
            Value::Float(_) => "float",
            Value::Double(_) => "double",
            Value::Ref(_) => "reference",
        }
    }

    /// Zero value of a field type.
    pub fn default_for(ty: &FieldType) -> Value {
        match ty {
            FieldType::Long => Value::Long(0),
            FieldType::Float => Value::Float(0.0),
            FieldType::Double => Value::Double(0.0),
            FieldType::Object(_) | FieldType::Array(_) => Value::Ref(Ref::Null),
            _ => Value::Int(0),
        }
    }

    /// Whether this value can be passed where `ty` is expected.
    pub fn fits(&self, ty: &FieldType) -> bool {
        matches!(
            (self, ty),
            (Value::Long(_), FieldType::Long)
                | (Value::Float(_), FieldType::Float)
                | (Value::Double(_), FieldType::Double)
                | (Value::Ref(_), FieldType::Object(_) | FieldType::Array(_))
                | (
                    Value::Int(_),
                    FieldType::Int | FieldType::Short | FieldType::Char | FieldType::Byte | FieldType::Boolean
                )
        )
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Long(v) => write!(f, "{v}L"),
            Value::Float(v) => write!(f, "{v:?}f"),
            Value::Double(v) => write!(f, "{v:?}d"),
            Value::Ref(Ref::Null) => f.write_str("null"),
            Value::Ref(Ref::Recorder) => f.write_str("<CoverageLog>"),
            Value::Ref(Ref::Object { class }) => write!(f, "<{class}>"),
            Value::Ref(Ref::Str(s)) => write!(f, "{s:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_payloads_compare_equal() {
        assert_eq!(Value::Float(f32::NAN), Value::Float(f32::from_bits(0x7fc0_0001)));
        assert_ne!(Value::Float(0.0), Value::Float(-0.0));
        assert_ne!(Value::Int(1), Value::Long(1));
        assert_eq!(Value::Double(f64::NAN), Value::Double(-f64::NAN));
    }

    #[test]
    fn slots_and_defaults() {
        assert_eq!(Value::Long(1).slots(), 2);
        assert_eq!(Value::default_for(&FieldType::Boolean), Value::Int(0));
        assert!(Value::Int(3).fits(&FieldType::Char));
        assert!(!Value::Float(3.0).fits(&FieldType::Double));
    }
}
