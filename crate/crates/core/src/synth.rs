//! Random IR programs for corpora and tests.
//!
//! [`structured_program`] emits well-formed SSA code built from nested
//! conditionals, counted loops, calls and memory traffic.
//! [`random_cfg_program`] wires blocks together arbitrarily (irreducible
//! loops included) and uses values without regard to dominance.
//! [`loop_nest_program`] and [`ladder_program`] build control flow of known
//! loop connectedness.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub max_depth: usize,
    pub max_statements: usize,
    pub max_helpers: usize,
    pub max_params: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { max_depth: 2, max_statements: 4, max_helpers: 1, max_params: 3 }
    }
}

const ARITH: &[&str] = &["add", "sub", "mul", "sdiv", "srem", "and", "or", "xor", "shl", "ashr"];
const PREDICATES: &[&str] = &["eq", "ne", "slt", "sgt", "sle", "sge", "ult"];
const COMMUTATIVE: &[&str] = &["add", "mul", "and", "or", "xor"];

struct Block {
    label: String,
    lines: Vec<String>,
}

#[derive(Clone)]
struct Expr {
    op: &'static str,
    a: String,
    b: String,
}

struct FnGen<'r, R: Rng> {
    rng: &'r mut R,
    cfg: &'r SynthConfig,
    blocks: Vec<Block>,
    next_value: usize,
    next_label: usize,
    /// Values usable at the current point; one frame per open region.
    scope: Vec<Vec<String>>,
    exprs: Vec<Expr>,
    callees: Vec<(String, usize)>,
    budget: usize,
}

impl<'r, R: Rng> FnGen<'r, R> {
    fn value(&mut self) -> String {
        self.next_value += 1;
        format!("%v{}", self.next_value - 1)
    }

    fn label(&mut self, stem: &str) -> String {
        self.next_label += 1;
        format!("{stem}{}", self.next_label - 1)
    }

    fn emit(&mut self, line: String) {
        self.blocks.last_mut().unwrap().lines.push(line);
        self.budget = self.budget.saturating_sub(1);
    }

    fn open_block(&mut self, label: String) {
        self.blocks.push(Block { label, lines: Vec::new() });
    }

    fn current_label(&self) -> String {
        format!("%{}", self.blocks.last().unwrap().label)
    }

    fn in_scope(&self) -> Vec<&String> {
        self.scope.iter().flatten().collect()
    }

    fn define(&mut self, v: String) {
        self.scope.last_mut().unwrap().push(v);
    }

    /// An operand, biased toward recent values.
    fn operand(&mut self, allow_const: bool) -> String {
        let n = self.scope.iter().map(Vec::len).sum::<usize>();
        if n == 0 || (allow_const && self.rng.gen_bool(0.25)) {
            return format!("{}", self.rng.gen_range(0..8));
        }
        let i = if self.rng.gen_bool(0.6) { n - 1 - self.rng.gen_range(0..n.min(3)) } else { self.rng.gen_range(0..n) };
        self.in_scope()[i].clone()
    }

    fn arith(&mut self) {
        let op = *ARITH.choose(self.rng).unwrap();
        let a = self.operand(false);
        let b = self.operand(true);
        let v = self.value();
        self.emit(format!("{v} = {op} i32 {a}, {b}"));
        self.exprs.push(Expr { op, a, b });
        self.define(v);
    }

    fn repeat(&mut self) {
        let live: Vec<Expr> = {
            let vals = self.in_scope();
            let ok = |s: &String| !s.starts_with('%') || vals.contains(&s);
            self.exprs.iter().filter(|e| ok(&e.a) && ok(&e.b)).cloned().collect()
        };
        let Some(e) = live.choose(self.rng).cloned() else { return self.arith() };
        let (a, b) = if COMMUTATIVE.contains(&e.op) && self.rng.gen_bool(0.5) { (e.b, e.a) } else { (e.a, e.b) };
        let v = self.value();
        self.emit(format!("{v} = {} i32 {a}, {b}", e.op));
        self.define(v);
    }

    fn memory(&mut self) {
        let p = self.value();
        let a = self.operand(true);
        let v = self.value();
        self.emit(format!("{p} = alloca i32, align 4"));
        self.emit(format!("store i32 {a}, i32* {p}, align 4"));
        self.emit(format!("{v} = load i32, i32* {p}, align 4"));
        self.define(v);
    }

    fn call(&mut self) {
        let Some((name, arity)) = self.callees.choose(self.rng).cloned() else { return self.arith() };
        let args: Vec<String> = (0..arity).map(|_| format!("i32 {}", self.operand(true))).collect();
        let v = self.value();
        self.emit(format!("{v} = call i32 {name}({})", args.join(", ")));
        self.define(v);
    }

    fn condition(&mut self) -> String {
        let pred = *PREDICATES.choose(self.rng).unwrap();
        let a = self.operand(false);
        let b = self.operand(true);
        let c = self.value();
        self.emit(format!("{c} = icmp {pred} i32 {a}, {b}"));
        c
    }

    fn branch(&mut self, depth: usize) {
        let c = self.condition();
        let then_l = self.label("then");
        let else_l = if self.rng.gen_bool(0.5) { Some(self.label("else")) } else { None };
        let join_l = self.label("join");
        let false_target = else_l.clone().unwrap_or_else(|| join_l.clone());
        self.emit(format!("br i1 {c}, label %{then_l}, label %{false_target}"));
        let before = self.current_label();

        self.open_block(then_l);
        self.scope.push(Vec::new());
        self.statements(depth + 1);
        let then_val = self.operand(true);
        self.scope.pop();
        let then_end = self.current_label();
        self.emit(format!("br label %{join_l}"));

        let (else_end, else_val) = match else_l {
            Some(l) => {
                self.open_block(l);
                self.scope.push(Vec::new());
                self.statements(depth + 1);
                let val = self.operand(true);
                self.scope.pop();
                let end = self.current_label();
                self.emit(format!("br label %{join_l}"));
                (end, val)
            }
            None => (before, self.operand(true)),
        };
        self.open_block(join_l);
        if self.rng.gen_bool(0.6) {
            let v = self.value();
            self.emit(format!("{v} = phi i32 [ {then_val}, {then_end} ], [ {else_val}, {else_end} ]"));
            self.define(v);
        }
    }

    fn counted_loop(&mut self, depth: usize) {
        let init = self.operand(true);
        let acc_init = self.operand(true);
        let bound = self.operand(true);
        let header = self.label("loop");
        let exit = self.label("exit");
        let pre = self.current_label();
        self.emit(format!("br label %{header}"));
        self.open_block(header.clone());
        let header_idx = self.blocks.len() - 1;
        let (i, acc, inext, acc_next) = (self.value(), self.value(), self.value(), self.value());
        self.emit(String::new());
        self.emit(String::new());
        self.scope.push(alloc::vec![i.clone(), acc.clone()]);
        self.statements(depth + 1);
        let step = self.operand(true);
        self.emit(format!("{acc_next} = add i32 {acc}, {step}"));
        self.emit(format!("{inext} = add i32 {i}, 1"));
        let c = self.value();
        self.emit(format!("{c} = icmp slt i32 {inext}, {bound}"));
        self.emit(format!("br i1 {c}, label %{header}, label %{exit}"));
        let latch = self.current_label();
        self.scope.pop();
        let h = &mut self.blocks[header_idx].lines;
        h[0] = format!("{i} = phi i32 [ {init}, {pre} ], [ {inext}, {latch} ]");
        h[1] = format!("{acc} = phi i32 [ {acc_init}, {pre} ], [ {acc_next}, {latch} ]");
        self.open_block(exit);
        self.define(acc_next);
    }

    fn statements(&mut self, depth: usize) {
        let n = self.rng.gen_range(1..=self.cfg.max_statements);
        for _ in 0..n {
            if self.budget == 0 {
                return;
            }
            let nested = depth < self.cfg.max_depth;
            let roll = self.rng.gen_range(0..20);
            match roll {
                0..=7 => self.arith(),
                8..=10 => self.repeat(),
                11..=13 if nested => self.branch(depth),
                14..=15 if nested => self.counted_loop(depth),
                16 => self.memory(),
                17..=18 => self.call(),
                _ => self.arith(),
            }
        }
    }

    fn finish(mut self, header: String) -> String {
        let r = self.operand(true);
        self.emit(format!("ret i32 {r}"));
        let mut out = header;
        out.push_str(" {\n");
        for b in &self.blocks {
            let _ = writeln!(out, "{}:", b.label);
            for l in &b.lines {
                let _ = writeln!(out, "  {l}");
            }
        }
        out.push_str("}\n");
        out
    }
}

fn gen_function<R: Rng>(
    rng: &mut R,
    cfg: &SynthConfig,
    name: &str,
    linkage: &str,
    params: usize,
    callees: Vec<(String, usize)>,
    budget: usize,
) -> String {
    let names: Vec<String> = (0..params).map(|i| format!("%a{i}")).collect();
    let header = format!(
        "define {linkage}i32 {name}({})",
        names.iter().map(|n| format!("i32 {n}")).collect::<Vec<_>>().join(", ")
    );
    let mut g = FnGen {
        rng,
        cfg,
        blocks: alloc::vec![Block { label: String::from("entry"), lines: Vec::new() }],
        next_value: 0,
        next_label: 0,
        scope: alloc::vec![names],
        exprs: Vec::new(),
        callees,
        budget,
    };
    g.statements(0);
    g.finish(header)
}

/// A module with a main function, optional helpers it calls and optional
/// external declarations.
pub fn structured_program<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> String {
    let mut out = String::new();
    let mut callees: Vec<(String, usize)> = Vec::new();
    if rng.gen_bool(0.4) {
        let arity = rng.gen_range(1..=2);
        let _ = writeln!(out, "declare i32 @ext{}({})\n", arity, alloc::vec!["i32"; arity].join(", "));
        callees.push((format!("@ext{arity}"), arity));
    }
    let helpers = rng.gen_range(0..=cfg.max_helpers);
    let small = SynthConfig { max_depth: 1, max_statements: 3, ..cfg.clone() };
    for h in 0..helpers {
        let arity = rng.gen_range(1..=2);
        let name = format!("@helper{h}");
        let linkage = if rng.gen_bool(0.5) { "internal " } else { "" };
        out.push_str(&gen_function(rng, &small, &name, linkage, arity, callees.clone(), 6));
        out.push('\n');
        callees.push((name, arity));
    }
    let params = rng.gen_range(1..=cfg.max_params);
    out.push_str(&gen_function(rng, cfg, "@main", "", params, callees, 24));
    out
}

/// A single function over `blocks` blocks with random terminators. Values
/// may be used in blocks their definition does not dominate.
pub fn random_cfg_program<R: Rng>(rng: &mut R, blocks: usize, max_per_block: usize) -> String {
    let blocks = blocks.max(1);
    let mut values: Vec<String> = alloc::vec![String::from("%p0"), String::from("%p1")];
    let mut next = 0usize;
    let mut exprs: Vec<(&str, String, String)> = Vec::new();
    let mut body: Vec<Vec<String>> = Vec::new();
    for _ in 0..blocks {
        let mut lines = Vec::new();
        for _ in 0..rng.gen_range(0..=max_per_block) {
            let v = format!("%v{next}");
            next += 1;
            let pick = |rng: &mut R, values: &Vec<String>| -> String {
                if rng.gen_bool(0.2) {
                    format!("{}", rng.gen_range(0..4))
                } else {
                    values.choose(rng).unwrap().clone()
                }
            };
            if !exprs.is_empty() && rng.gen_bool(0.3) {
                let (op, a, b) = exprs.choose(rng).unwrap().clone();
                let (a, b) = if COMMUTATIVE.contains(&op) && rng.gen_bool(0.5) { (b, a) } else { (a, b) };
                lines.push(format!("{v} = {op} i32 {a}, {b}"));
            } else {
                let op = *ARITH.choose(rng).unwrap();
                let a = values.choose(rng).unwrap().clone();
                let b = pick(rng, &values);
                lines.push(format!("{v} = {op} i32 {a}, {b}"));
                exprs.push((op, a, b));
            }
            values.push(v);
        }
        body.push(lines);
    }
    let mut out = String::from("define i32 @f(i32 %p0, i32 %p1) {\n");
    for (i, mut lines) in body.into_iter().enumerate() {
        let target = |rng: &mut R| format!("%b{}", rng.gen_range(0..blocks));
        let roll = rng.gen_range(0..10);
        let term = if i + 1 == blocks || roll < 2 {
            format!("ret i32 {}", values.choose(rng).unwrap())
        } else if roll < 5 {
            format!("br label {}", target(rng))
        } else if roll < 9 {
            let c = format!("%c{i}");
            lines.push(format!("{c} = icmp slt i32 {}, {}", values.choose(rng).unwrap(), values.choose(rng).unwrap()));
            let (t, f) = (target(rng), target(rng));
            format!("br i1 {c}, label {t}, label {f}")
        } else {
            let cases: Vec<String> = (0..rng.gen_range(1..=3)).map(|k| format!("i32 {k}, label {}", target(rng))).collect();
            format!("switch i32 {}, label {} [ {} ]", values.choose(rng).unwrap(), target(rng), cases.join(" "))
        };
        lines.push(term);
        let _ = writeln!(out, "b{i}:");
        for l in lines {
            let _ = writeln!(out, "  {l}");
        }
    }
    out.push_str("}\n");
    out
}

/// `depth` perfectly nested counted loops. Each level carries an
/// accumulator that the next level reads. However deep the nest, no acyclic
/// path crosses more than one back edge, so the loop connectedness is 1
/// (0 without loops).
pub fn loop_nest_program(depth: usize) -> String {
    if depth == 0 {
        return String::from("define i32 @nest(i32 %n) {\nentry:\n  %r = add i32 %n, 1\n  ret i32 %r\n}\n");
    }
    let mut out = String::from("define i32 @nest(i32 %n) {\nentry:\n  br label %h0\n");
    for k in 0..depth {
        let pred = if k == 0 { String::from("%entry") } else { format!("%h{}", k - 1) };
        let outer_acc = if k == 0 { String::from("%n") } else { format!("%acc{}", k - 1) };
        let _ = writeln!(out, "h{k}:");
        let _ = writeln!(out, "  %i{k} = phi i32 [ 0, {pred} ], [ %inext{k}, %l{k} ]");
        let _ = writeln!(out, "  %acc{k} = phi i32 [ {outer_acc}, {pred} ], [ %accnext{k}, %l{k} ]");
        if k + 1 < depth {
            let _ = writeln!(out, "  br label %h{}", k + 1);
        } else {
            let _ = writeln!(out, "  %body = add i32 %acc{k}, %i{k}");
            let _ = writeln!(out, "  br label %l{k}");
        }
    }
    for k in (0..depth).rev() {
        let inner = if k + 1 == depth { String::from("%body") } else { format!("%accnext{}", k + 1) };
        let _ = writeln!(out, "l{k}:");
        let _ = writeln!(out, "  %accnext{k} = add i32 {inner}, %i{k}");
        let _ = writeln!(out, "  %inext{k} = add i32 %i{k}, 1");
        let _ = writeln!(out, "  %c{k} = icmp slt i32 %inext{k}, %n");
        let exit = if k == 0 { String::from("%done") } else { format!("%l{}", k - 1) };
        let _ = writeln!(out, "  br i1 %c{k}, label %h{k}, label {exit}");
    }
    out.push_str("done:\n  ret i32 %accnext0\n}\n");
    out
}

/// A chain of `rungs` blocks `x1..xk` below a head `x0`. Each `xi` either
/// falls through to `x(i+1)` or steps to a side block `yi` that jumps back
/// to `x(i-1)`. The path `yk, x(k-1), y(k-1), ..., x0` is acyclic and
/// crosses `rungs` back edges, which is the loop connectedness. `%m` is read
/// only in the head, so its liveness has to climb the whole ladder.
pub fn ladder_program(rungs: usize) -> String {
    let mut out = String::from("define i32 @ladder(i32 %n, i32 %m) {\nentry:\n  br label %x0\n");
    out.push_str("x0:\n  %u = add i32 %m, 1\n  %c0 = icmp slt i32 %u, %n\n");
    if rungs == 0 {
        out.push_str("  br i1 %c0, label %x0, label %done\n");
    } else {
        out.push_str("  br i1 %c0, label %x1, label %done\n");
    }
    for i in 1..=rungs {
        let next = if i == rungs { String::from("%done") } else { format!("%x{}", i + 1) };
        let _ = writeln!(out, "x{i}:\n  %c{i} = icmp slt i32 %n, {i}\n  br i1 %c{i}, label {next}, label %y{i}");
        let _ = writeln!(out, "y{i}:\n  br label %x{}", i - 1);
    }
    out.push_str("done:\n  ret i32 0\n}\n");
    out
}
