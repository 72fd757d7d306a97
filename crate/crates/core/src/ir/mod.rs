//! In-memory model of a textual LLVM-style IR subset.
//!
//! [`parse_ir`] covers function definitions and declarations, global
//! variables and constants, named struct types and the common instruction
//! set. Opcodes outside the modeled set are kept as generic instructions with
//! [`IRInstruction::lossy`] set, so real-world files still yield graphs.
//! Metadata, attribute groups and `align` clauses are dropped while parsing.

pub(crate) mod lexer;
pub(crate) mod parser;
mod print;
pub mod types;
mod validate;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use types::Type;
pub use validate::{validate, Diagnostic, Severity};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("validation failed: {}", .0.first().map(|d| d.message.as_str()).unwrap_or("<no diagnostics>"))]
    Validation(Vec<Diagnostic>),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IRModule {
    pub source_path: String,
    pub functions: Vec<IRFunction>,
    pub globals: Vec<GlobalConstant>,
    /// Named struct types in declaration order (`%struct.S = type { ... }`).
    pub type_defs: Vec<TypeDef>,
    /// Callee names that resolve to neither a definition nor a declaration.
    pub unresolved_callees: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDef {
    pub name: String,
    pub body: String,
}

#[derive(Clone, Debug)]
pub struct GlobalConstant {
    pub name: String,
    /// Value type of the global; the symbol itself is a pointer to it.
    pub type_text: String,
    /// Empty for `external` globals.
    pub initializer: String,
    pub is_constant: bool,
    pub line: u32,
}

impl PartialEq for GlobalConstant {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.type_text == other.type_text
            && self.initializer == other.initializer
            && self.is_constant == other.is_constant
    }
}

impl Eq for GlobalConstant {}

impl GlobalConstant {
    pub fn pointer_type(&self) -> String {
        let mut out = self.type_text.clone();
        out.push('*');
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub type_text: String,
}

#[derive(Clone, Debug)]
pub struct IRFunction {
    pub name: String,
    pub is_definition: bool,
    pub is_externally_visible: bool,
    pub return_type: String,
    pub params: Vec<Param>,
    pub varargs: bool,
    pub blocks: Vec<IRBlock>,
    pub line: u32,
}

impl IRFunction {
    pub fn instructions(&self) -> impl Iterator<Item = &IRInstruction> {
        self.blocks.iter().flat_map(|b| b.instructions.iter())
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }
}

#[derive(Clone, Debug)]
pub struct IRBlock {
    /// Label with its `%` sigil, e.g. `%entry` or `%3`.
    pub label: String,
    pub instructions: Vec<IRInstruction>,
    pub line: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperandKind {
    Variable,
    Constant,
    FunctionRef,
    Label,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operand {
    pub kind: OperandKind,
    pub text: String,
    pub type_text: String,
}

impl Operand {
    pub fn is_value(&self) -> bool {
        matches!(self.kind, OperandKind::Variable | OperandKind::Constant)
    }
}

#[derive(Clone, Debug)]
pub struct IRInstruction {
    pub opcode: String,
    pub result: Option<String>,
    pub result_type: Option<String>,
    pub operands: Vec<Operand>,
    /// Keywords between the opcode and the first type in written order:
    /// `nsw`, `inbounds`, `volatile`, comparison predicates, `tail`.
    pub flags: Vec<String>,
    /// Type written separately from the operands: the loaded type of `load`,
    /// the allocated type of `alloca`, the source element type of
    /// `getelementptr`, the callee signature of `call`.
    pub explicit_type: Option<String>,
    pub raw_text: String,
    pub block: usize,
    pub index_in_block: usize,
    pub lossy: bool,
    pub line: u32,
    pub col: u32,
}

impl PartialEq for IRFunction {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.is_definition == other.is_definition
            && self.is_externally_visible == other.is_externally_visible
            && self.return_type == other.return_type
            && self.params == other.params
            && self.varargs == other.varargs
            && self.blocks == other.blocks
    }
}

impl Eq for IRFunction {}

impl PartialEq for IRBlock {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.instructions == other.instructions
    }
}

impl Eq for IRBlock {}

/// Structural equality: source text and location are not compared.
impl PartialEq for IRInstruction {
    fn eq(&self, other: &Self) -> bool {
        self.opcode == other.opcode
            && self.result == other.result
            && self.result_type == other.result_type
            && self.operands == other.operands
            && self.flags == other.flags
            && self.explicit_type == other.explicit_type
            && self.block == other.block
            && self.index_in_block == other.index_in_block
            && self.lossy == other.lossy
    }
}

impl Eq for IRInstruction {}

pub const TERMINATORS: &[&str] = &["ret", "br", "switch", "unreachable"];

/// Terminators that parse only as generic instructions.
pub const GENERIC_TERMINATORS: &[&str] =
    &["invoke", "resume", "indirectbr", "callbr", "catchswitch", "catchret", "cleanupret"];

pub const BINARY_OPS: &[&str] = &[
    "add", "sub", "mul", "sdiv", "udiv", "srem", "urem", "fadd", "fsub", "fmul", "fdiv", "frem", "and", "or",
    "xor", "shl", "lshr", "ashr",
];

pub const CAST_OPS: &[&str] = &[
    "zext", "sext", "trunc", "bitcast", "ptrtoint", "inttoptr", "fpext", "fptrunc", "sitofp", "uitofp", "fptosi",
    "fptoui", "addrspacecast",
];

impl IRInstruction {
    pub fn is_terminator(&self) -> bool {
        TERMINATORS.contains(&self.opcode.as_str()) || GENERIC_TERMINATORS.contains(&self.opcode.as_str())
    }

    /// Successor block labels in written order.
    pub fn successor_labels(&self) -> impl Iterator<Item = &str> {
        let take = self.is_terminator();
        self.operands
            .iter()
            .filter(move |o| take && o.kind == OperandKind::Label)
            .map(|o| o.text.as_str())
    }

    /// The called function or function pointer of a `call`.
    pub fn callee(&self) -> Option<&Operand> {
        if self.opcode == "call" {
            self.operands.first()
        } else {
            None
        }
    }
}

impl IRModule {
    pub fn function(&self, name: &str) -> Option<&IRFunction> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn type_def(&self, name: &str) -> Option<Type> {
        self.type_defs.iter().find(|t| t.name == name).and_then(|t| Type::parse(&t.body))
    }

    pub fn definitions(&self) -> impl Iterator<Item = &IRFunction> {
        self.functions.iter().filter(|f| f.is_definition)
    }
}

/// Parse and validate. Any error-severity diagnostic fails the parse.
pub fn parse_ir(source: &str) -> Result<IRModule, ParseError> {
    let module = parser::parse_module(source)?;
    let diagnostics = validate(&module);
    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        return Err(ParseError::Validation(diagnostics));
    }
    Ok(module)
}

/// Parse without running validation; structural problems such as missing
/// terminators are left for [`validate`] to report.
pub fn parse_unvalidated(source: &str) -> Result<IRModule, SyntaxError> {
    parser::parse_module(source)
}

impl fmt::Display for IRInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_instruction(f, self)
    }
}

impl fmt::Display for IRModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_module(f, self)
    }
}
