use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{IRModule, OperandKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: u32,
    pub col: u32,
    pub function: Option<String>,
    pub message: String,
}

impl Diagnostic {
    /// `path:line:col: severity: message`
    pub fn render(&self, path: &str) -> String {
        format!("{path}:{}:{}: {}: {}", self.line, self.col, self.severity, self.message)
    }
}

struct Sink {
    out: Vec<Diagnostic>,
}

impl Sink {
    fn push(&mut self, severity: Severity, line: u32, col: u32, function: Option<&str>, message: String) {
        self.out.push(Diagnostic { severity, line, col, function: function.map(String::from), message });
    }
}

/// Structural checks over a parsed module. Errors mark invariant breaches;
/// warnings flag uses of values that are never defined.
pub fn validate(module: &IRModule) -> Vec<Diagnostic> {
    let mut sink = Sink { out: Vec::new() };
    let mut seen_functions = BTreeSet::new();
    for func in &module.functions {
        if !seen_functions.insert(func.name.as_str()) {
            sink.push(Severity::Error, func.line, 1, Some(&func.name), format!("duplicate definition of function {}", func.name));
        }
    }
    let known_functions: BTreeSet<&str> = module.functions.iter().map(|f| f.name.as_str()).collect();
    let unresolved: BTreeSet<&str> = module.unresolved_callees.iter().map(String::as_str).collect();
    let globals: BTreeSet<&str> = module.globals.iter().map(|g| g.name.as_str()).collect();

    for func in &module.functions {
        let fname = Some(func.name.as_str());
        if func.is_definition && func.blocks.is_empty() {
            sink.push(Severity::Error, func.line, 1, fname, format!("function {} has no blocks", func.name));
        }
        if !func.is_definition && !func.blocks.is_empty() {
            sink.push(Severity::Error, func.line, 1, fname, format!("declaration {} has a body", func.name));
        }
        let mut labels = BTreeMap::new();
        for block in &func.blocks {
            if labels.insert(block.label.as_str(), ()).is_some() {
                sink.push(Severity::Error, block.line, 1, fname, format!("duplicate block label {}", block.label));
            }
        }
        let mut defined: BTreeSet<&str> = BTreeSet::new();
        for p in &func.params {
            if !defined.insert(p.name.as_str()) {
                sink.push(Severity::Error, func.line, 1, fname, format!("duplicate definition of {}", p.name));
            }
        }
        for block in &func.blocks {
            let Some(last) = block.instructions.last() else {
                sink.push(Severity::Error, block.line, 1, fname, format!("block {} is empty", block.label));
                continue;
            };
            if !last.is_terminator() {
                sink.push(
                    Severity::Error,
                    last.line,
                    last.col,
                    fname,
                    format!("block {} lacks a terminator", block.label),
                );
            }
            let n = block.instructions.len();
            for (i, inst) in block.instructions.iter().enumerate() {
                if i + 1 < n && inst.is_terminator() {
                    sink.push(
                        Severity::Error,
                        inst.line,
                        inst.col,
                        fname,
                        format!("terminator '{}' in non-final position of block {}", inst.opcode, block.label),
                    );
                }
                if let Some(r) = &inst.result {
                    if !defined.insert(r.as_str()) {
                        sink.push(Severity::Error, inst.line, inst.col, fname, format!("duplicate definition of {r}"));
                    }
                }
                let label_ok = inst.is_terminator() || inst.opcode == "phi";
                for op in &inst.operands {
                    match op.kind {
                        OperandKind::Label => {
                            if !label_ok {
                                sink.push(
                                    Severity::Error,
                                    inst.line,
                                    inst.col,
                                    fname,
                                    format!("label operand {} outside a terminator or phi", op.text),
                                );
                            }
                            if !labels.contains_key(op.text.as_str()) {
                                sink.push(
                                    Severity::Error,
                                    inst.line,
                                    inst.col,
                                    fname,
                                    format!("undefined block label {}", op.text),
                                );
                            }
                        }
                        OperandKind::FunctionRef => {
                            if !known_functions.contains(op.text.as_str()) && !unresolved.contains(op.text.as_str()) {
                                sink.push(
                                    Severity::Error,
                                    inst.line,
                                    inst.col,
                                    fname,
                                    format!("unresolved function reference {}", op.text),
                                );
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        // second pass so phi uses of later definitions are not flagged
        for inst in func.instructions() {
            for op in &inst.operands {
                if op.kind == OperandKind::Variable {
                    let known = if op.text.starts_with('@') {
                        globals.contains(op.text.as_str())
                    } else {
                        defined.contains(op.text.as_str())
                    };
                    if !known {
                        sink.push(
                            Severity::Warning,
                            inst.line,
                            inst.col,
                            fname,
                            format!("use of undefined value {}", op.text),
                        );
                    }
                }
            }
        }
    }
    sink.out
}
