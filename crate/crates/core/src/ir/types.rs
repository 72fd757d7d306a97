//! Structural model of IR type expressions.
//!
//! Types are stored on instructions as canonical text; this AST is what the
//! parser builds and what normalization walks when it inlines named types.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Type {
    Void,
    Int(u32),
    Half,
    Float,
    Double,
    X86Fp80,
    Fp128,
    Label,
    Metadata,
    /// Opaque `ptr`, optionally in a non-default address space.
    Ptr(Option<u32>),
    /// Typed pointer `T*`.
    Pointer(Box<Type>, Option<u32>),
    Named(String),
    Struct { fields: Vec<Type>, packed: bool },
    Array(u64, Box<Type>),
    Vector(u64, Box<Type>),
    Function { ret: Box<Type>, params: Vec<Type>, varargs: bool },
    /// `opaque` body of a forward-declared struct, and the cycle marker used
    /// when inlining recursive named types.
    Opaque,
    /// Anything the grammar does not model (token, x86_mmx, target types).
    Other(String),
}

impl Type {
    pub fn pointer_to(self) -> Type {
        Type::Pointer(Box::new(self), None)
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self, Type::Ptr(_) | Type::Pointer(..))
    }

    pub fn pointee(&self) -> Option<&Type> {
        match self {
            Type::Pointer(inner, _) => Some(inner),
            _ => None,
        }
    }

    /// Parse a canonical type string, e.g. `{ i32, [4 x i8] }*`.
    pub fn parse(text: &str) -> Option<Type> {
        let tokens = crate::ir::lexer::tokenize(text).ok()?;
        let mut cursor = crate::ir::parser::Cursor::new(&tokens);
        let ty = cursor.parse_type().ok()?;
        cursor.at_end().then_some(ty)
    }

    /// Replace named types by their bodies. A name reached again while it is
    /// being expanded becomes [`Type::Opaque`].
    pub fn inline_named(&self, lookup: &dyn Fn(&str) -> Option<Type>) -> Type {
        let mut stack = Vec::new();
        self.inline_with(lookup, &mut stack)
    }

    fn inline_with(&self, lookup: &dyn Fn(&str) -> Option<Type>, stack: &mut Vec<String>) -> Type {
        match self {
            Type::Named(name) => {
                if stack.iter().any(|n| n == name) {
                    return Type::Opaque;
                }
                match lookup(name) {
                    Some(body) => {
                        stack.push(name.clone());
                        let out = body.inline_with(lookup, stack);
                        stack.pop();
                        out
                    }
                    None => Type::Opaque,
                }
            }
            Type::Pointer(inner, space) => Type::Pointer(Box::new(inner.inline_with(lookup, stack)), *space),
            Type::Struct { fields, packed } => Type::Struct {
                fields: fields.iter().map(|f| f.inline_with(lookup, stack)).collect(),
                packed: *packed,
            },
            Type::Array(n, inner) => Type::Array(*n, Box::new(inner.inline_with(lookup, stack))),
            Type::Vector(n, inner) => Type::Vector(*n, Box::new(inner.inline_with(lookup, stack))),
            Type::Function { ret, params, varargs } => Type::Function {
                ret: Box::new(ret.inline_with(lookup, stack)),
                params: params.iter().map(|p| p.inline_with(lookup, stack)).collect(),
                varargs: *varargs,
            },
            other => other.clone(),
        }
    }

    /// Element type reached by one aggregate index step.
    pub fn index_into(&self, index: Option<i64>, lookup: &dyn Fn(&str) -> Option<Type>) -> Option<Type> {
        match self {
            Type::Array(_, inner) | Type::Vector(_, inner) => Some((**inner).clone()),
            Type::Struct { fields, .. } => {
                let i = usize::try_from(index?).ok()?;
                fields.get(i).cloned()
            }
            Type::Named(name) => lookup(name)?.index_into(index, lookup),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Void => f.write_str("void"),
            Type::Int(bits) => write!(f, "i{bits}"),
            Type::Half => f.write_str("half"),
            Type::Float => f.write_str("float"),
            Type::Double => f.write_str("double"),
            Type::X86Fp80 => f.write_str("x86_fp80"),
            Type::Fp128 => f.write_str("fp128"),
            Type::Label => f.write_str("label"),
            Type::Metadata => f.write_str("metadata"),
            Type::Ptr(None) => f.write_str("ptr"),
            Type::Ptr(Some(space)) => write!(f, "ptr addrspace({space})"),
            Type::Pointer(inner, None) => write!(f, "{inner}*"),
            Type::Pointer(inner, Some(space)) => write!(f, "{inner} addrspace({space})*"),
            Type::Named(name) => f.write_str(name),
            Type::Struct { fields, packed } => {
                if *packed {
                    f.write_str("<")?;
                }
                if fields.is_empty() {
                    f.write_str("{}")?;
                } else {
                    f.write_str("{ ")?;
                    for (i, field) in fields.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{field}")?;
                    }
                    f.write_str(" }")?;
                }
                if *packed {
                    f.write_str(">")?;
                }
                Ok(())
            }
            Type::Array(n, inner) => write!(f, "[{n} x {inner}]"),
            Type::Vector(n, inner) => write!(f, "<{n} x {inner}>"),
            Type::Function { ret, params, varargs } => {
                write!(f, "{ret} (")?;
                for (i, p) in params.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{p}")?;
                }
                if *varargs {
                    if !params.is_empty() {
                        f.write_str(", ")?;
                    }
                    f.write_str("...")?;
                }
                f.write_str(")")
            }
            Type::Opaque => f.write_str("opaque"),
            Type::Other(text) => f.write_str(text),
        }
    }
}

impl From<Type> for String {
    fn from(ty: Type) -> String {
        ty.to_string()
    }
}
