//! Canonical text form. Parsing the printed form yields a structurally equal
//! module; metadata, attributes and alignment are not reproduced.

use alloc::string::String;
use core::fmt::{self, Write};

use super::{IRBlock, IRFunction, IRInstruction, IRModule, Operand, BINARY_OPS, CAST_OPS};

struct Typed<'a>(&'a Operand);

impl fmt::Display for Typed<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.type_text.is_empty() {
            f.write_str(&self.0.text)
        } else {
            write!(f, "{} {}", self.0.type_text, self.0.text)
        }
    }
}

fn flags(f: &mut fmt::Formatter<'_>, flags: &[String]) -> fmt::Result {
    for flag in flags {
        write!(f, " {flag}")?;
    }
    Ok(())
}

fn typed_list(f: &mut fmt::Formatter<'_>, ops: &[Operand]) -> fmt::Result {
    for (i, op) in ops.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{}", Typed(op))?;
    }
    Ok(())
}

pub(super) fn write_instruction(f: &mut fmt::Formatter<'_>, inst: &IRInstruction) -> fmt::Result {
    if inst.lossy {
        return f.write_str(&inst.raw_text);
    }
    if let Some(result) = &inst.result {
        write!(f, "{result} = ")?;
    }
    let ops = &inst.operands;
    let op = inst.opcode.as_str();
    match op {
        "ret" => match ops.first() {
            Some(v) => write!(f, "ret {}", Typed(v)),
            None => f.write_str("ret void"),
        },
        "br" => {
            if ops.len() == 1 {
                write!(f, "br label {}", ops[0].text)
            } else {
                write!(f, "br {}, label {}, label {}", Typed(&ops[0]), ops[1].text, ops[2].text)
            }
        }
        "switch" => {
            write!(f, "switch {}, label {} [", Typed(&ops[0]), ops[1].text)?;
            for pair in ops[2..].chunks(2) {
                write!(f, " {}, label {}", Typed(&pair[0]), pair[1].text)?;
            }
            f.write_str(" ]")
        }
        "unreachable" => f.write_str("unreachable"),
        "icmp" | "fcmp" => {
            f.write_str(op)?;
            flags(f, &inst.flags)?;
            write!(f, " {}, {}", Typed(&ops[0]), ops[1].text)
        }
        "load" => {
            f.write_str("load")?;
            flags(f, &inst.flags)?;
            match &inst.explicit_type {
                Some(ty) => write!(f, " {ty}, {}", Typed(&ops[0])),
                None => write!(f, " {}", Typed(&ops[0])),
            }
        }
        "store" => {
            f.write_str("store")?;
            flags(f, &inst.flags)?;
            write!(f, " {}, {}", Typed(&ops[0]), Typed(&ops[1]))
        }
        "alloca" => {
            f.write_str("alloca")?;
            flags(f, &inst.flags)?;
            write!(f, " {}", inst.explicit_type.as_deref().unwrap_or("i8"))?;
            for o in ops {
                write!(f, ", {}", Typed(o))?;
            }
            Ok(())
        }
        "getelementptr" => {
            f.write_str("getelementptr")?;
            flags(f, &inst.flags)?;
            f.write_char(' ')?;
            if let Some(ty) = &inst.explicit_type {
                write!(f, "{ty}, ")?;
            }
            typed_list(f, ops)
        }
        "select" => {
            f.write_str("select")?;
            flags(f, &inst.flags)?;
            f.write_char(' ')?;
            typed_list(f, ops)
        }
        "phi" => {
            f.write_str("phi")?;
            flags(f, &inst.flags)?;
            write!(f, " {}", inst.result_type.as_deref().unwrap_or(""))?;
            for (i, pair) in ops.chunks(2).enumerate() {
                let sep = if i == 0 { " " } else { ", " };
                write!(f, "{sep}[ {}, {} ]", pair[0].text, pair.get(1).map_or("", |l| l.text.as_str()))?;
            }
            Ok(())
        }
        "call" => {
            let (tail, rest): (alloc::vec::Vec<&String>, alloc::vec::Vec<&String>) =
                inst.flags.iter().partition(|fl| matches!(fl.as_str(), "tail" | "musttail" | "notail"));
            for t in tail {
                write!(f, "{t} ")?;
            }
            f.write_str("call")?;
            for r in rest {
                write!(f, " {r}")?;
            }
            write!(f, " {} {}(", inst.explicit_type.as_deref().unwrap_or("void"), ops[0].text)?;
            typed_list(f, &ops[1..])?;
            f.write_char(')')
        }
        _ if BINARY_OPS.contains(&op) => {
            f.write_str(op)?;
            flags(f, &inst.flags)?;
            write!(f, " {}, {}", Typed(&ops[0]), ops[1].text)
        }
        _ if CAST_OPS.contains(&op) => {
            f.write_str(op)?;
            flags(f, &inst.flags)?;
            write!(f, " {} to {}", Typed(&ops[0]), inst.result_type.as_deref().unwrap_or("void"))
        }
        _ => f.write_str(&inst.raw_text),
    }
}

fn label_def(label: &str) -> &str {
    label.strip_prefix('%').unwrap_or(label)
}

fn write_block(f: &mut fmt::Formatter<'_>, block: &IRBlock) -> fmt::Result {
    writeln!(f, "{}:", label_def(&block.label))?;
    for inst in &block.instructions {
        writeln!(f, "  {inst}")?;
    }
    Ok(())
}

fn write_function(f: &mut fmt::Formatter<'_>, func: &IRFunction) -> fmt::Result {
    let keyword = if func.is_definition { "define" } else { "declare" };
    let linkage = if func.is_externally_visible { "" } else { "internal " };
    write!(f, "{keyword} {linkage}{} {}(", func.return_type, func.name)?;
    for (i, p) in func.params.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        if func.is_definition {
            write!(f, "{} {}", p.type_text, p.name)?;
        } else {
            f.write_str(&p.type_text)?;
        }
    }
    if func.varargs {
        f.write_str(if func.params.is_empty() { "..." } else { ", ..." })?;
    }
    f.write_char(')')?;
    if !func.is_definition {
        return f.write_char('\n');
    }
    f.write_str(" {\n")?;
    for block in &func.blocks {
        write_block(f, block)?;
    }
    f.write_str("}\n")
}

pub(super) fn write_module(f: &mut fmt::Formatter<'_>, module: &IRModule) -> fmt::Result {
    for t in &module.type_defs {
        writeln!(f, "{} = type {}", t.name, t.body)?;
    }
    for g in &module.globals {
        let kind = if g.is_constant { "constant" } else { "global" };
        if g.initializer.is_empty() {
            writeln!(f, "{} = external {kind} {}", g.name, g.type_text)?;
        } else {
            writeln!(f, "{} = {kind} {} {}", g.name, g.type_text, g.initializer)?;
        }
    }
    for func in &module.functions {
        f.write_char('\n')?;
        write_function(f, func)?;
    }
    Ok(())
}
