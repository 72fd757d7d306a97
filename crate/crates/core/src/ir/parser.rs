use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::lexer::{tokenize, Tok, Token};
use super::types::Type;
use super::{
    GlobalConstant, IRBlock, IRFunction, IRInstruction, IRModule, Operand, OperandKind, Param, SyntaxError, TypeDef,
    BINARY_OPS, CAST_OPS,
};

const CONST_WORDS: &[&str] = &["true", "false", "null", "undef", "poison", "zeroinitializer", "none"];

const CONST_EXPR_WORDS: &[&str] = &[
    "getelementptr", "bitcast", "ptrtoint", "inttoptr", "addrspacecast", "trunc", "zext", "sext", "fptrunc", "fpext",
    "fptoui", "fptosi", "uitofp", "sitofp", "add", "sub", "mul", "shl", "lshr", "ashr", "and", "or", "xor", "icmp",
    "fcmp", "select", "extractelement", "insertelement", "shufflevector", "blockaddress", "dso_local_equivalent",
    "no_cfi",
];

fn is_int_type_word(w: &str) -> Option<u32> {
    let bits = w.strip_prefix('i')?;
    if bits.is_empty() || !bits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    bits.parse().ok()
}

fn is_type_word(w: &str) -> bool {
    is_int_type_word(w).is_some()
        || matches!(
            w,
            "void"
                | "half"
                | "bfloat"
                | "float"
                | "double"
                | "x86_fp80"
                | "fp128"
                | "ppc_fp128"
                | "ptr"
                | "label"
                | "metadata"
                | "token"
                | "x86_mmx"
                | "x86_amx"
                | "opaque"
        )
}

fn is_attribute_word(w: &str) -> bool {
    !is_type_word(w) && !CONST_WORDS.contains(&w) && !CONST_EXPR_WORDS.contains(&w) && w != "asm"
}

/// Render a token run as canonical text. Used for constants the grammar
/// keeps opaque (aggregates, constant expressions, inline asm).
pub(crate) fn render_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    let mut prev: Option<&Tok> = None;
    for t in tokens {
        let glue = match (&prev, &t.tok) {
            (None, _) => false,
            (_, Tok::Punct(',' | ')' | '*' | ']' | '>')) => true,
            (Some(Tok::Punct('(' | '[' | '<')), _) => true,
            (Some(Tok::Global(_) | Tok::Local(_)), Tok::Punct('(')) => true,
            _ => false,
        };
        if prev.is_some() && !glue {
            out.push(' ');
        }
        match &t.tok {
            Tok::Local(s) | Tok::Global(s) | Tok::Int(s) | Tok::Float(s) | Tok::Str(s) | Tok::Word(s) | Tok::Meta(s)
            | Tok::Attr(s) => out.push_str(s),
            Tok::LabelDef(s) => {
                out.push_str(s.trim_start_matches('%'));
                out.push(':');
            }
            Tok::Punct(c) => out.push(*c),
            Tok::Ellipsis => out.push_str("..."),
            Tok::Newline => {}
        }
        prev = Some(&t.tok);
    }
    out
}

pub(crate) struct Cursor<'t> {
    toks: &'t [Token],
    pos: usize,
}

impl<'t> Cursor<'t> {
    pub(crate) fn new(toks: &'t [Token]) -> Self {
        Cursor { toks, pos: 0 }
    }

    fn peek(&self) -> Option<&'t Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, ahead: usize) -> Option<&'t Tok> {
        self.toks.get(self.pos + ahead).map(|t| &t.tok)
    }

    fn bump(&mut self) -> Option<&'t Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn err(&self, message: impl Into<String>) -> SyntaxError {
        let (line, col) = match self.toks.get(self.pos).or_else(|| self.toks.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        };
        SyntaxError { line, col, message: message.into() }
    }

    fn is_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Tok::Punct(p)) if *p == c)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.is_punct(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), SyntaxError> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<(), SyntaxError> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{w}'")))
        }
    }

    fn word(&self) -> Option<&'t str> {
        match self.peek() {
            Some(Tok::Word(w)) => Some(w.as_str()),
            _ => None,
        }
    }

    fn expect_int(&mut self) -> Result<u64, SyntaxError> {
        match self.peek() {
            Some(Tok::Int(s)) => {
                let v = s.parse().map_err(|_| self.err("integer out of range"))?;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected integer")),
        }
    }

    /// Skip from an opening bracket to its match, inclusive.
    fn skip_balanced(&mut self) -> Result<&'t [Token], SyntaxError> {
        let start = self.pos;
        let mut depth = 0usize;
        loop {
            let Some(t) = self.bump() else {
                return Err(self.err("unbalanced brackets"));
            };
            match t.tok {
                Tok::Punct('(' | '[' | '{' | '<') => depth += 1,
                Tok::Punct(')' | ']' | '}' | '>') => {
                    depth = depth.checked_sub(1).ok_or_else(|| self.err("unbalanced brackets"))?;
                    if depth == 0 {
                        return Ok(&self.toks[start..self.pos]);
                    }
                }
                _ => {}
            }
            if depth == 0 {
                return Ok(&self.toks[start..self.pos]);
            }
        }
    }

    fn type_starts(&self) -> bool {
        match self.peek() {
            Some(Tok::Word(w)) => is_type_word(w),
            Some(Tok::Punct('{' | '[' | '<')) | Some(Tok::Local(_)) => true,
            _ => false,
        }
    }

    fn addrspace(&mut self) -> Result<Option<u32>, SyntaxError> {
        if !self.eat_word("addrspace") {
            return Ok(None);
        }
        self.expect_punct('(')?;
        let n = self.expect_int()?;
        self.expect_punct(')')?;
        Ok(Some(n as u32))
    }

    pub(crate) fn parse_type(&mut self) -> Result<Type, SyntaxError> {
        let mut ty = self.parse_base_type()?;
        loop {
            if self.is_word("addrspace") && matches!(self.peek_at(4), Some(Tok::Punct('*'))) {
                let space = self.addrspace()?;
                self.expect_punct('*')?;
                ty = Type::Pointer(Box::new(ty), space);
            } else if self.eat_punct('*') {
                ty = Type::Pointer(Box::new(ty), None);
            } else if self.is_punct('(') {
                self.pos += 1;
                let mut params = Vec::new();
                let mut varargs = false;
                if !self.eat_punct(')') {
                    loop {
                        if matches!(self.peek(), Some(Tok::Ellipsis)) {
                            self.pos += 1;
                            varargs = true;
                        } else {
                            params.push(self.parse_type()?);
                            self.skip_param_attributes()?;
                        }
                        if self.eat_punct(')') {
                            break;
                        }
                        self.expect_punct(',')?;
                    }
                }
                ty = Type::Function { ret: Box::new(ty), params, varargs };
            } else {
                return Ok(ty);
            }
        }
    }

    fn parse_base_type(&mut self) -> Result<Type, SyntaxError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.as_str();
                if let Some(bits) = is_int_type_word(w) {
                    self.pos += 1;
                    return Ok(Type::Int(bits));
                }
                let ty = match w {
                    "void" => Type::Void,
                    "half" => Type::Half,
                    "float" => Type::Float,
                    "double" => Type::Double,
                    "x86_fp80" => Type::X86Fp80,
                    "fp128" => Type::Fp128,
                    "label" => Type::Label,
                    "metadata" => Type::Metadata,
                    "opaque" => Type::Opaque,
                    "ptr" => {
                        self.pos += 1;
                        return Ok(Type::Ptr(self.addrspace()?));
                    }
                    "bfloat" | "ppc_fp128" | "token" | "x86_mmx" | "x86_amx" => Type::Other(w.to_string()),
                    _ => return Err(self.err(format!("expected type, found '{w}'"))),
                };
                self.pos += 1;
                Ok(ty)
            }
            Some(Tok::Local(name)) => {
                self.pos += 1;
                Ok(Type::Named(name.clone()))
            }
            Some(Tok::Punct('{')) => {
                self.pos += 1;
                let fields = self.type_list('}')?;
                Ok(Type::Struct { fields, packed: false })
            }
            Some(Tok::Punct('<')) if matches!(self.peek_at(1), Some(Tok::Punct('{'))) => {
                self.pos += 2;
                let fields = self.type_list('}')?;
                self.expect_punct('>')?;
                Ok(Type::Struct { fields, packed: true })
            }
            Some(Tok::Punct(open @ ('[' | '<'))) => {
                let open = *open;
                self.pos += 1;
                // `<vscale x 4 x i32>`
                let scalable = open == '<' && self.eat_word("vscale");
                if scalable {
                    self.expect_word("x")?;
                }
                let n = self.expect_int()?;
                self.expect_word("x")?;
                let inner = self.parse_type()?;
                self.expect_punct(if open == '[' { ']' } else { '>' })?;
                Ok(if open == '[' { Type::Array(n, Box::new(inner)) } else { Type::Vector(n, Box::new(inner)) })
            }
            _ => Err(self.err("expected type")),
        }
    }

    fn type_list(&mut self, close: char) -> Result<Vec<Type>, SyntaxError> {
        let mut out = Vec::new();
        if self.eat_punct(close) {
            return Ok(out);
        }
        loop {
            out.push(self.parse_type()?);
            if self.eat_punct(close) {
                return Ok(out);
            }
            self.expect_punct(',')?;
        }
    }

    /// Skip parameter / return attributes: `noundef`, `align 4`,
    /// `dereferenceable(8)`, `byval(%T)`, string attributes.
    fn skip_param_attributes(&mut self) -> Result<(), SyntaxError> {
        loop {
            match self.peek() {
                Some(Tok::Word(w)) if is_attribute_word(w) => self.skip_attribute()?,
                Some(Tok::Str(_)) if matches!(self.peek_at(1), Some(Tok::Punct('='))) => {
                    self.pos += 3;
                }
                _ => return Ok(()),
            }
        }
    }

    fn skip_attribute(&mut self) -> Result<(), SyntaxError> {
        let align = self.is_word("align");
        self.pos += 1;
        if self.is_punct('(') {
            self.skip_balanced()?;
        } else if align && matches!(self.peek(), Some(Tok::Int(_))) {
            self.pos += 1;
        }
        Ok(())
    }

    /// A value of type `ty`: identifier, literal or opaque constant.
    fn parse_value(&mut self, ty: &Type) -> Result<Operand, SyntaxError> {
        let type_text = ty.to_string();
        let (kind, text) = match self.peek() {
            Some(Tok::Local(name)) => {
                self.pos += 1;
                let kind = if *ty == Type::Label { OperandKind::Label } else { OperandKind::Variable };
                (kind, name.clone())
            }
            // Resolved against the module's symbols after parsing.
            Some(Tok::Global(name)) => {
                self.pos += 1;
                (OperandKind::Variable, name.clone())
            }
            Some(Tok::Int(s) | Tok::Float(s) | Tok::Str(s)) => {
                self.pos += 1;
                (OperandKind::Constant, s.clone())
            }
            Some(Tok::Word(w)) if CONST_WORDS.contains(&w.as_str()) => {
                self.pos += 1;
                (OperandKind::Constant, w.clone())
            }
            Some(Tok::Word(w)) if CONST_EXPR_WORDS.contains(&w.as_str()) => {
                let start = self.pos;
                while !self.is_punct('(') {
                    if self.bump().is_none() {
                        return Err(self.err("unterminated constant expression"));
                    }
                }
                self.skip_balanced()?;
                (OperandKind::Constant, render_tokens(&self.toks[start..self.pos]))
            }
            Some(Tok::Punct('{' | '[' | '<')) => {
                let toks = self.skip_balanced()?;
                (OperandKind::Constant, render_tokens(toks))
            }
            Some(Tok::Word(w)) if w == "asm" => {
                let start = self.pos;
                while !self.is_punct('(') {
                    if self.bump().is_none() {
                        return Err(self.err("unterminated inline asm"));
                    }
                }
                (OperandKind::Constant, render_tokens(&self.toks[start..self.pos]))
            }
            _ => return Err(self.err("expected value")),
        };
        Ok(Operand { kind, text, type_text })
    }

    fn parse_typed_value(&mut self) -> Result<Operand, SyntaxError> {
        let ty = self.parse_type()?;
        self.skip_param_attributes()?;
        self.parse_value(&ty)
    }

    fn parse_label(&mut self) -> Result<Operand, SyntaxError> {
        self.expect_word("label")?;
        match self.peek() {
            Some(Tok::Local(name)) => {
                self.pos += 1;
                Ok(Operand { kind: OperandKind::Label, text: name.clone(), type_text: "label".into() })
            }
            _ => Err(self.err("expected block label")),
        }
    }

    fn expect_end(&self) -> Result<(), SyntaxError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing tokens"))
        }
    }

    fn collect_flags(&mut self, allowed: &[&str], flags: &mut Vec<String>) {
        while let Some(w) = self.word() {
            if !allowed.contains(&w) {
                break;
            }
            flags.push(w.to_string());
            self.pos += 1;
        }
    }
}

const FMF: &[&str] = &["fast", "nnan", "ninf", "nsz", "arcp", "contract", "afn", "reassoc"];
const WRAP_FLAGS: &[&str] = &["nuw", "nsw", "exact", "disjoint", "nneg", "samesign"];
const ICMP_PREDICATES: &[&str] = &["eq", "ne", "ugt", "uge", "ult", "ule", "sgt", "sge", "slt", "sle"];
const FCMP_PREDICATES: &[&str] = &[
    "false", "oeq", "ogt", "oge", "olt", "ole", "one", "ord", "ueq", "ugt", "uge", "ult", "ule", "une", "uno", "true",
];

/// Drop attribute-group references, trailing metadata attachments and
/// `align` clauses. Returns the tokens the instruction grammar sees.
fn strip_decorations(tokens: &[Token]) -> Vec<Token> {
    let mut toks: Vec<Token> = tokens.iter().filter(|t| !matches!(t.tok, Tok::Attr(_) | Tok::Newline)).cloned().collect();
    loop {
        let n = toks.len();
        let is = |i: usize, f: &dyn Fn(&Tok) -> bool| n >= i && f(&toks[n - i].tok);
        let attachment = is(2, &|t| matches!(t, Tok::Meta(_))) && is(1, &|t| matches!(t, Tok::Meta(_)));
        let align = is(2, &|t| matches!(t, Tok::Word(w) if w == "align")) && is(1, &|t| matches!(t, Tok::Int(_)));
        if is(3, &|t| matches!(t, Tok::Punct(','))) && (attachment || align) {
            toks.truncate(n - 3);
        } else if let Some(start) = trailing_meta_node(&toks) {
            toks.truncate(start);
        } else {
            return toks;
        }
    }
}

/// `, !name !{...}` at the end of an instruction.
fn trailing_meta_node(toks: &[Token]) -> Option<usize> {
    if !matches!(toks.last()?.tok, Tok::Punct('}')) {
        return None;
    }
    let mut depth = 0i32;
    for i in (0..toks.len()).rev() {
        match toks[i].tok {
            Tok::Punct('}') => depth += 1,
            Tok::Punct('{') => {
                depth -= 1;
                if depth == 0 {
                    if i >= 3
                        && matches!(toks[i - 1].tok, Tok::Meta(ref m) if m == "!")
                        && matches!(toks[i - 2].tok, Tok::Meta(_))
                        && matches!(toks[i - 3].tok, Tok::Punct(','))
                    {
                        return Some(i - 3);
                    }
                    return None;
                }
            }
            _ => {}
        }
    }
    None
}

struct InstructionParts {
    opcode: String,
    result_type: Option<String>,
    operands: Vec<Operand>,
    flags: Vec<String>,
    explicit_type: Option<String>,
    lossy: bool,
}

impl InstructionParts {
    fn new(opcode: &str) -> Self {
        InstructionParts {
            opcode: opcode.to_string(),
            result_type: None,
            operands: Vec::new(),
            flags: Vec::new(),
            explicit_type: None,
            lossy: false,
        }
    }
}

struct TypeEnv<'a> {
    defs: &'a [TypeDef],
}

impl TypeEnv<'_> {
    fn lookup(&self, name: &str) -> Option<Type> {
        self.defs.iter().find(|d| d.name == name).and_then(|d| Type::parse(&d.body))
    }
}

fn parse_constant_index(op: &Operand) -> Option<i64> {
    if op.kind == OperandKind::Constant {
        op.text.parse().ok()
    } else {
        None
    }
}

fn parse_instruction_body(c: &mut Cursor<'_>, has_result: bool, env: &TypeEnv<'_>) -> Result<InstructionParts, SyntaxError> {
    let mut flags = Vec::new();
    let mut opcode = c.word().ok_or_else(|| c.err("expected opcode"))?.to_string();
    c.pos += 1;
    if matches!(opcode.as_str(), "tail" | "musttail" | "notail") {
        flags.push(opcode.clone());
        opcode = c.word().ok_or_else(|| c.err("expected opcode"))?.to_string();
        c.pos += 1;
        if opcode != "call" {
            return Err(c.err("expected 'call' after tail marker"));
        }
    }
    let mut p = InstructionParts::new(&opcode);
    p.flags = flags;
    match opcode.as_str() {
        "ret" => {
            if c.eat_word("void") {
            } else {
                p.operands.push(c.parse_typed_value()?);
            }
            c.expect_end()?;
        }
        "br" => {
            if c.is_word("label") {
                p.operands.push(c.parse_label()?);
            } else {
                p.operands.push(c.parse_typed_value()?);
                c.expect_punct(',')?;
                p.operands.push(c.parse_label()?);
                c.expect_punct(',')?;
                p.operands.push(c.parse_label()?);
            }
            c.expect_end()?;
        }
        "switch" => {
            p.operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            p.operands.push(c.parse_label()?);
            c.expect_punct('[')?;
            while !c.eat_punct(']') {
                if c.at_end() {
                    return Err(c.err("unterminated switch case list"));
                }
                p.operands.push(c.parse_typed_value()?);
                c.expect_punct(',')?;
                p.operands.push(c.parse_label()?);
            }
            c.expect_end()?;
        }
        "unreachable" => c.expect_end()?,
        op if BINARY_OPS.contains(&op) => {
            c.collect_flags(WRAP_FLAGS, &mut p.flags);
            c.collect_flags(FMF, &mut p.flags);
            let ty = c.parse_type()?;
            p.operands.push(c.parse_value(&ty)?);
            c.expect_punct(',')?;
            p.operands.push(c.parse_value(&ty)?);
            p.result_type = Some(ty.to_string());
            c.expect_end()?;
        }
        "icmp" | "fcmp" => {
            c.collect_flags(FMF, &mut p.flags);
            c.collect_flags(&["samesign"], &mut p.flags);
            let preds = if opcode == "icmp" { ICMP_PREDICATES } else { FCMP_PREDICATES };
            match c.word() {
                Some(w) if preds.contains(&w) => {
                    p.flags.push(w.to_string());
                    c.pos += 1;
                }
                _ => return Err(c.err("expected comparison predicate")),
            }
            let ty = c.parse_type()?;
            p.operands.push(c.parse_value(&ty)?);
            c.expect_punct(',')?;
            p.operands.push(c.parse_value(&ty)?);
            p.result_type = Some(match ty {
                Type::Vector(n, _) => Type::Vector(n, Box::new(Type::Int(1))).to_string(),
                _ => "i1".to_string(),
            });
            c.expect_end()?;
        }
        "load" => {
            c.collect_flags(&["atomic", "volatile"], &mut p.flags);
            let ty = c.parse_type()?;
            if c.eat_punct(',') {
                p.operands.push(c.parse_typed_value()?);
                p.explicit_type = Some(ty.to_string());
                p.result_type = Some(ty.to_string());
            } else {
                p.operands.push(c.parse_value(&ty)?);
                let pointee = ty.pointee().cloned().ok_or_else(|| c.err("load from non-pointer type"))?;
                p.result_type = Some(pointee.to_string());
            }
            // atomic ordering and syncscope
            while !c.at_end() {
                c.pos += 1;
            }
        }
        "store" => {
            c.collect_flags(&["atomic", "volatile"], &mut p.flags);
            p.operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            p.operands.push(c.parse_typed_value()?);
            while !c.at_end() {
                c.pos += 1;
            }
        }
        "alloca" => {
            c.collect_flags(&["inalloca"], &mut p.flags);
            let ty = c.parse_type()?;
            p.explicit_type = Some(ty.to_string());
            p.result_type = Some(ty.pointer_to().to_string());
            while c.eat_punct(',') {
                if c.is_word("addrspace") {
                    c.addrspace()?;
                } else {
                    p.operands.push(c.parse_typed_value()?);
                }
            }
            c.expect_end()?;
        }
        "getelementptr" => {
            c.collect_flags(&["inbounds", "nuw", "nusw"], &mut p.flags);
            let first = c.parse_type()?;
            let source = if c.eat_punct(',') {
                p.explicit_type = Some(first.to_string());
                let base = c.parse_typed_value()?;
                p.operands.push(base);
                Some(first)
            } else {
                let base = c.parse_value(&first)?;
                p.operands.push(base);
                first.pointee().cloned()
            };
            while c.eat_punct(',') {
                c.eat_word("inrange");
                p.operands.push(c.parse_typed_value()?);
            }
            c.expect_end()?;
            let base_ty = Type::parse(&p.operands[0].type_text);
            p.result_type = Some(gep_result_type(source, base_ty, &p.operands[1..], env));
        }
        op if CAST_OPS.contains(&op) => {
            c.collect_flags(&["nneg", "nuw", "nsw"], &mut p.flags);
            p.operands.push(c.parse_typed_value()?);
            c.expect_word("to")?;
            let to = c.parse_type()?;
            p.result_type = Some(to.to_string());
            c.expect_end()?;
        }
        "select" => {
            c.collect_flags(FMF, &mut p.flags);
            p.operands.push(c.parse_typed_value()?);
            c.expect_punct(',')?;
            let a = c.parse_typed_value()?;
            p.result_type = Some(a.type_text.clone());
            p.operands.push(a);
            c.expect_punct(',')?;
            p.operands.push(c.parse_typed_value()?);
            c.expect_end()?;
        }
        "phi" => {
            c.collect_flags(FMF, &mut p.flags);
            let ty = c.parse_type()?;
            loop {
                c.expect_punct('[')?;
                p.operands.push(c.parse_value(&ty)?);
                c.expect_punct(',')?;
                match c.peek() {
                    Some(Tok::Local(label)) => {
                        c.pos += 1;
                        p.operands.push(Operand {
                            kind: OperandKind::Label,
                            text: label.clone(),
                            type_text: "label".into(),
                        });
                    }
                    _ => return Err(c.err("expected incoming block label")),
                }
                c.expect_punct(']')?;
                if !c.eat_punct(',') {
                    break;
                }
            }
            p.result_type = Some(ty.to_string());
            c.expect_end()?;
        }
        "call" => parse_call(c, &mut p)?,
        _ => {
            parse_generic(c, &mut p)?;
        }
    }
    if has_result && p.result_type.is_none() && !p.lossy {
        return Err(c.err(format!("'{opcode}' does not produce a value")));
    }
    Ok(p)
}

fn parse_call(c: &mut Cursor<'_>, p: &mut InstructionParts) -> Result<(), SyntaxError> {
    // fast-math flags, calling convention, return attributes
    loop {
        match c.word() {
            Some(w) if FMF.contains(&w) => {
                p.flags.push(w.to_string());
                c.pos += 1;
            }
            Some("cc") => {
                c.pos += 1;
                c.expect_int()?;
            }
            Some(w) if is_attribute_word(w) => c.skip_attribute()?,
            _ => break,
        }
    }
    let sig = c.parse_type()?;
    let ret = match &sig {
        Type::Function { ret, .. } => (**ret).clone(),
        other => other.clone(),
    };
    let sig_text = sig.to_string();
    let mut callee = c.parse_value(&sig)?;
    if callee.kind == OperandKind::Variable && callee.text.starts_with('@') {
        callee.kind = OperandKind::FunctionRef;
    }
    p.operands.push(callee);
    p.explicit_type = Some(sig_text);
    if ret != Type::Void {
        p.result_type = Some(ret.to_string());
    }
    c.expect_punct('(')?;
    if !c.eat_punct(')') {
        loop {
            let ty = c.parse_type()?;
            c.skip_param_attributes()?;
            if ty == Type::Metadata {
                // debug-info arguments never become operands
                let mut depth = 0i32;
                while let Some(t) = c.peek() {
                    match t {
                        Tok::Punct('(' | '{' | '[') => depth += 1,
                        Tok::Punct(')' | '}' | ']') if depth > 0 => depth -= 1,
                        Tok::Punct(',' | ')') if depth == 0 => break,
                        _ => {}
                    }
                    c.pos += 1;
                }
            } else {
                p.operands.push(c.parse_value(&ty)?);
            }
            if c.eat_punct(')') {
                break;
            }
            c.expect_punct(',')?;
        }
    }
    // function attributes and operand bundles are ignored
    Ok(())
}

fn parse_generic(c: &mut Cursor<'_>, p: &mut InstructionParts) -> Result<(), SyntaxError> {
    p.lossy = true;
    let rest = &c.toks[c.pos..];
    c.pos = c.toks.len();
    let mut chunks: Vec<&[Token]> = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, t) in rest.iter().enumerate() {
        match t.tok {
            Tok::Punct('(' | '[' | '{') => depth += 1,
            Tok::Punct(')' | ']' | '}') => depth -= 1,
            Tok::Punct(',') if depth == 0 => {
                chunks.push(&rest[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    chunks.push(&rest[start..]);
    for chunk in chunks {
        let mut value: Option<(OperandKind, String, usize)> = None;
        let mut labels = Vec::new();
        for (i, t) in chunk.iter().enumerate() {
            let after_label = i > 0 && matches!(&chunk[i - 1].tok, Tok::Word(w) if w == "label");
            let candidate = match &t.tok {
                Tok::Local(name) if after_label => {
                    labels.push(name.clone());
                    continue;
                }
                Tok::Local(name) | Tok::Global(name) => (OperandKind::Variable, name.clone()),
                Tok::Int(s) | Tok::Float(s) => (OperandKind::Constant, s.clone()),
                Tok::Word(w) if CONST_WORDS.contains(&w.as_str()) => (OperandKind::Constant, w.clone()),
                _ => continue,
            };
            value = Some((candidate.0, candidate.1, i));
        }
        if let Some((kind, text, at)) = value {
            let type_text = render_tokens(&chunk[..at]);
            if p.result_type.is_none() {
                if let Some(ty) = Type::parse(&type_text) {
                    p.result_type = Some(ty.to_string());
                }
            }
            p.operands.push(Operand { kind, text, type_text });
        }
        for label in labels {
            p.operands.push(Operand { kind: OperandKind::Label, text: label, type_text: "label".into() });
        }
    }
    Ok(())
}

fn gep_result_type(source: Option<Type>, base_ty: Option<Type>, indices: &[Operand], env: &TypeEnv<'_>) -> String {
    let lookup = |name: &str| env.lookup(name);
    if let Some(Type::Ptr(space)) = base_ty {
        return Type::Ptr(space).to_string();
    }
    let Some(mut current) = source else {
        return "ptr".to_string();
    };
    for idx in indices.iter().skip(1) {
        match current.index_into(parse_constant_index(idx), &lookup) {
            Some(next) => current = next,
            None => return "ptr".to_string(),
        }
    }
    let space = match base_ty {
        Some(Type::Pointer(_, space)) => space,
        _ => None,
    };
    Type::Pointer(Box::new(current), space).to_string()
}

struct ModuleParser<'t> {
    toks: &'t [Token],
    pos: usize,
    module: IRModule,
}

impl<'t> ModuleParser<'t> {
    fn err_at(&self, i: usize, message: impl Into<String>) -> SyntaxError {
        let t = self.toks.get(i).or_else(|| self.toks.last());
        SyntaxError { line: t.map_or(1, |t| t.line), col: t.map_or(1, |t| t.col), message: message.into() }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.toks.get(self.pos).map(|t| &t.tok), Some(Tok::Newline)) {
            self.pos += 1;
        }
    }

    /// Tokens up to the end of the logical line. Newlines inside brackets do
    /// not end it (multi-line `switch`).
    fn logical_line(&mut self) -> &'t [Token] {
        let start = self.pos;
        let mut depth = 0i32;
        while let Some(t) = self.toks.get(self.pos) {
            match t.tok {
                Tok::Newline if depth <= 0 => break,
                // closing brace of a one-line function body
                Tok::Punct('}') if depth == 0 => break,
                Tok::Punct('(' | '[' | '{') => depth += 1,
                Tok::Punct(')' | ']' | '}') => depth -= 1,
                _ => {}
            }
            self.pos += 1;
        }
        &self.toks[start..self.pos]
    }

    fn run(mut self) -> Result<IRModule, SyntaxError> {
        loop {
            self.skip_newlines();
            let Some(t) = self.toks.get(self.pos) else { break };
            match &t.tok {
                Tok::Word(w) if w == "define" || w == "declare" => self.function()?,
                Tok::Word(_) | Tok::Meta(_) => {
                    self.logical_line();
                }
                Tok::Local(_) => {
                    let line = self.logical_line();
                    self.type_def(line)?;
                }
                Tok::Global(_) => {
                    let line = self.logical_line();
                    self.global(line)?;
                }
                _ => return Err(self.err_at(self.pos, "unexpected token at top level")),
            }
        }
        Ok(self.module)
    }

    fn type_def(&mut self, line: &[Token]) -> Result<(), SyntaxError> {
        let mut c = Cursor::new(line);
        let Some(Tok::Local(name)) = c.peek() else { unreachable!() };
        c.pos += 1;
        c.expect_punct('=')?;
        c.expect_word("type")?;
        let body = if c.eat_word("opaque") { Type::Opaque } else { c.parse_type()? };
        c.expect_end()?;
        self.module.type_defs.push(TypeDef { name: name.clone(), body: body.to_string() });
        Ok(())
    }

    fn global(&mut self, line: &[Token]) -> Result<(), SyntaxError> {
        let mut c = Cursor::new(line);
        let first = &line[0];
        let Tok::Global(name) = &first.tok else { unreachable!() };
        c.pos += 1;
        c.expect_punct('=')?;
        let mut is_constant = None;
        while let Some(w) = c.word() {
            c.pos += 1;
            match w {
                "global" => is_constant = Some(false),
                "constant" => is_constant = Some(true),
                "alias" | "ifunc" => return Ok(()),
                _ => {
                    if c.is_punct('(') {
                        c.skip_balanced()?;
                    }
                    continue;
                }
            }
            break;
        }
        let Some(is_constant) = is_constant else {
            return Err(c.err("expected 'global' or 'constant'"));
        };
        let ty = c.parse_type()?;
        let initializer = if c.at_end() || c.is_punct(',') { String::new() } else { c.parse_value(&ty)?.text };
        self.module.globals.push(GlobalConstant {
            name: name.clone(),
            type_text: ty.to_string(),
            initializer,
            is_constant,
            line: first.line,
        });
        Ok(())
    }

    fn function(&mut self) -> Result<(), SyntaxError> {
        let header_start = self.pos;
        let is_definition = matches!(&self.toks[self.pos].tok, Tok::Word(w) if w == "define");
        let def_line = self.toks[self.pos].line;
        // header ends at `{` for definitions, end of line for declarations
        let mut end = self.pos;
        let mut depth = 0i32;
        let mut seen_params = false;
        while let Some(t) = self.toks.get(end) {
            match t.tok {
                Tok::Newline if !is_definition && depth == 0 => break,
                Tok::Punct('{') if is_definition && depth == 0 && seen_params => break,
                Tok::Punct('(' | '[' | '{') => depth += 1,
                Tok::Punct(')' | ']' | '}') => {
                    depth -= 1;
                    if depth == 0 && matches!(t.tok, Tok::Punct(')')) {
                        seen_params = true;
                    }
                }
                _ => {}
            }
            end += 1;
        }
        if is_definition && end >= self.toks.len() {
            return Err(self.err_at(header_start, "expected '{' after function header"));
        }
        let header = &self.toks[header_start + 1..end];
        let mut c = Cursor::new(header);
        let mut visible = true;
        while !c.type_starts() {
            match c.word() {
                Some(w) => {
                    if matches!(w, "internal" | "private") {
                        visible = false;
                    }
                    c.pos += 1;
                    if c.is_punct('(') {
                        c.skip_balanced()?;
                    } else if w == "align" || w == "cc" {
                        c.expect_int()?;
                    }
                }
                None => return Err(c.err("expected return type")),
            }
        }
        let ret = c.parse_type()?;
        let name = match c.peek() {
            Some(Tok::Global(n)) => n.clone(),
            _ => return Err(c.err("expected function name")),
        };
        c.pos += 1;
        c.expect_punct('(')?;
        let mut params = Vec::new();
        let mut varargs = false;
        let mut unnamed = 0usize;
        if !c.eat_punct(')') {
            loop {
                if matches!(c.peek(), Some(Tok::Ellipsis)) {
                    c.pos += 1;
                    varargs = true;
                } else {
                    let ty = c.parse_type()?;
                    c.skip_param_attributes()?;
                    let pname = match c.peek() {
                        Some(Tok::Local(n)) => {
                            c.pos += 1;
                            if let Ok(k) = n[1..].parse::<usize>() {
                                unnamed = unnamed.max(k + 1);
                            }
                            n.clone()
                        }
                        _ => {
                            let n = format!("%{unnamed}");
                            unnamed += 1;
                            n
                        }
                    };
                    params.push(Param { name: pname, type_text: ty.to_string() });
                }
                if c.eat_punct(')') {
                    break;
                }
                c.expect_punct(',')?;
            }
        }
        self.pos = end;
        let mut function = IRFunction {
            name,
            is_definition,
            is_externally_visible: visible,
            return_type: ret.to_string(),
            params,
            varargs,
            blocks: Vec::new(),
            line: def_line,
        };
        if is_definition {
            self.pos += 1; // `{`
            self.body(&mut function, unnamed)?;
        }
        self.module.functions.push(function);
        Ok(())
    }

    fn body(&mut self, function: &mut IRFunction, next_unnamed: usize) -> Result<(), SyntaxError> {
        let env_defs = self.module.type_defs.clone();
        let env = TypeEnv { defs: &env_defs };
        loop {
            self.skip_newlines();
            let Some(t) = self.toks.get(self.pos) else {
                return Err(self.err_at(self.pos, "unterminated function body"));
            };
            match &t.tok {
                Tok::Punct('}') => {
                    self.pos += 1;
                    return Ok(());
                }
                Tok::LabelDef(label) => {
                    function.blocks.push(IRBlock { label: label.clone(), instructions: Vec::new(), line: t.line });
                    self.pos += 1;
                }
                _ => {
                    if function.blocks.is_empty() {
                        function.blocks.push(IRBlock {
                            label: format!("%{next_unnamed}"),
                            instructions: Vec::new(),
                            line: t.line,
                        });
                    }
                    let line = self.logical_line();
                    let block = function.blocks.len() - 1;
                    let index = function.blocks[block].instructions.len();
                    let inst = parse_instruction(line, &env, block, index)?;
                    function.blocks[block].instructions.push(inst);
                }
            }
        }
    }
}

fn parse_instruction(line: &[Token], env: &TypeEnv<'_>, block: usize, index: usize) -> Result<IRInstruction, SyntaxError> {
    let toks = strip_decorations(line);
    let mut c = Cursor::new(&toks);
    let result = match (c.peek(), c.peek_at(1)) {
        (Some(Tok::Local(name)), Some(Tok::Punct('='))) => {
            c.pos += 2;
            Some(name.clone())
        }
        _ => None,
    };
    let parts = parse_instruction_body(&mut c, result.is_some(), env)?;
    Ok(IRInstruction {
        opcode: parts.opcode,
        result_type: if result.is_some() { parts.result_type } else { None },
        result,
        operands: parts.operands,
        flags: parts.flags,
        explicit_type: parts.explicit_type,
        raw_text: render_tokens(line),
        block,
        index_in_block: index,
        lossy: parts.lossy,
        line: line[0].line,
        col: line[0].col,
    })
}

/// Resolve `@name` operands to functions, global constants or variables and
/// record callees that name no known function.
fn resolve_globals(module: &mut IRModule) {
    let functions: BTreeSet<String> = module.functions.iter().map(|f| f.name.clone()).collect();
    let constants: BTreeSet<String> =
        module.globals.iter().filter(|g| g.is_constant).map(|g| g.name.clone()).collect();
    let mut unresolved = BTreeSet::new();
    for f in &mut module.functions {
        for b in &mut f.blocks {
            for inst in &mut b.instructions {
                let is_call = inst.opcode == "call";
                for (i, op) in inst.operands.iter_mut().enumerate() {
                    if !op.text.starts_with('@') || op.kind == OperandKind::Label {
                        continue;
                    }
                    let callee_slot = is_call && i == 0;
                    if functions.contains(&op.text) {
                        op.kind = OperandKind::FunctionRef;
                    } else if callee_slot {
                        op.kind = OperandKind::FunctionRef;
                        unresolved.insert(op.text.clone());
                    } else if constants.contains(&op.text) {
                        op.kind = OperandKind::Constant;
                    } else {
                        op.kind = OperandKind::Variable;
                    }
                }
            }
        }
    }
    module.unresolved_callees = unresolved.into_iter().collect();
}

pub(crate) fn parse_module(source: &str) -> Result<IRModule, SyntaxError> {
    let tokens = tokenize(source)?;
    let mut module = ModuleParser { toks: &tokens, pos: 0, module: IRModule::default() }.run()?;
    resolve_globals(&mut module);
    Ok(module)
}
