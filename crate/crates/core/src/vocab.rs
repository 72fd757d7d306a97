//! Statement normalization and the token vocabulary.
//!
//! A normalized statement keeps opcodes, flags and fully inlined types but
//! replaces every identifier by `<%ID>` and every immediate by `<INT>` or
//! `<FLOAT>`. Array and vector lengths are part of the type and are kept.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::graph::{ProgramGraph, Vertex, VertexKind};
use crate::ir::lexer::{tokenize, Tok, Token};
use crate::ir::parser::render_tokens;
use crate::ir::{IRInstruction, IRModule, Type};

pub const UNKNOWN: u32 = 0;
pub const ID: u32 = 1;
pub const VAL: u32 = 2;
pub const EXTERNAL: u32 = 3;

pub const RESERVED: [&str; 4] = ["<unknown>", "<id>", "<val>", "<external>"];

pub const ID_TOKEN: &str = "<%ID>";
pub const INT_TOKEN: &str = "<INT>";
pub const FLOAT_TOKEN: &str = "<FLOAT>";
pub const STR_TOKEN: &str = "<STR>";

/// Normalizes statements of one module. Named type bodies are parsed once.
pub struct Normalizer {
    types: BTreeMap<String, Type>,
}

impl Normalizer {
    pub fn new(module: &IRModule) -> Self {
        let types = module
            .type_defs
            .iter()
            .filter_map(|t| Type::parse(&t.body).map(|ty| (t.name.clone(), ty)))
            .collect();
        Normalizer { types }
    }

    pub fn normalize(&self, inst: &IRInstruction) -> String {
        let text = inst.to_string();
        match tokenize(&text) {
            Ok(tokens) => self.rewrite(&tokens),
            // printed forms always tokenize; keep something deterministic anyway
            Err(_) => text.split_whitespace().collect::<Vec<_>>().join(" "),
        }
    }

    fn inline(&self, name: &str) -> String {
        let lookup = |n: &str| self.types.get(n).cloned();
        Type::Named(name.to_string()).inline_named(&lookup).to_string()
    }

    fn rewrite(&self, tokens: &[Token]) -> String {
        let mut out: Vec<Token> = Vec::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            let replaced = match &t.tok {
                Tok::Local(name) if self.types.contains_key(name) => Tok::Word(self.inline(name)),
                // kept as an identifier token so `<%ID>(` renders like `@f(`
                Tok::Local(_) | Tok::Global(_) => Tok::Global(ID_TOKEN.to_string()),
                Tok::Int(_) => {
                    let is_length = matches!(tokens.get(i + 1).map(|n| &n.tok), Some(Tok::Word(w)) if w == "x");
                    if is_length {
                        t.tok.clone()
                    } else {
                        Tok::Word(INT_TOKEN.to_string())
                    }
                }
                Tok::Float(_) => Tok::Word(FLOAT_TOKEN.to_string()),
                Tok::Str(_) => Tok::Word(STR_TOKEN.to_string()),
                Tok::Meta(_) | Tok::Attr(_) | Tok::Newline => continue,
                other => other.clone(),
            };
            out.push(Token { tok: replaced, line: t.line, col: t.col });
        }
        render_tokens(&out)
    }
}

/// Normalize one instruction in the context of its module.
pub fn normalize(inst: &IRInstruction, module: &IRModule) -> String {
    Normalizer::new(module).normalize(inst)
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "VocabularyRecord", into = "VocabularyRecord"))]
pub struct Vocabulary {
    /// Tokens by id; the first four are the reserved tokens.
    pub tokens: Vec<String>,
    /// Corpus frequency per id; zero for reserved tokens.
    pub counts: Vec<u64>,
    pub min_count: u64,
    index: BTreeMap<String, u32>,
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct VocabularyRecord {
    tokens: Vec<String>,
    counts: Vec<u64>,
    min_count: u64,
}

#[cfg(feature = "serde")]
impl From<Vocabulary> for VocabularyRecord {
    fn from(v: Vocabulary) -> Self {
        VocabularyRecord { tokens: v.tokens, counts: v.counts, min_count: v.min_count }
    }
}

#[cfg(feature = "serde")]
impl TryFrom<VocabularyRecord> for Vocabulary {
    type Error = VocabError;

    fn try_from(r: VocabularyRecord) -> Result<Self, VocabError> {
        if r.tokens.len() != r.counts.len() || r.tokens.len() < RESERVED.len() {
            return Err(VocabError::Malformed("token and count lists differ".into()));
        }
        let entries = r.tokens.into_iter().zip(r.counts).skip(RESERVED.len()).collect();
        Vocabulary::from_entries(entries, r.min_count)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("corpus contains no instruction vertices")]
    EmptyCorpus,
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("malformed vocabulary: {0}")]
    Malformed(String),
}

impl Vocabulary {
    /// A vocabulary holding only the reserved tokens.
    pub fn reserved_only() -> Self {
        Self::from_entries(Vec::new(), 1).expect("reserved tokens are well formed")
    }

    /// Build from non-reserved `(token, count)` pairs in id order.
    pub fn from_entries(entries: Vec<(String, u64)>, min_count: u64) -> Result<Self, VocabError> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut counts = alloc::vec![0; RESERVED.len()];
        for (tok, count) in entries {
            tokens.push(tok);
            counts.push(count);
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate().skip(RESERVED.len()) {
            if RESERVED.contains(&t.as_str()) || index.insert(t.clone(), i as u32).is_some() {
                return Err(VocabError::Malformed(alloc::format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, counts, min_count, index })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn lookup(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNKNOWN)
    }

    /// Fraction of instruction vertices that map to a known token.
    pub fn coverage<'a>(&self, graphs: impl IntoIterator<Item = &'a ProgramGraph>) -> f64 {
        let (mut known, mut total) = (0u64, 0u64);
        for g in graphs {
            for v in g.vertices.iter().filter(|v| v.kind == VertexKind::Instruction) {
                total += 1;
                if self.lookup(&v.text) != UNKNOWN {
                    known += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            known as f64 / total as f64
        }
    }
}

/// Frequency of every instruction text over a corpus.
pub fn count_tokens<'a>(graphs: impl IntoIterator<Item = &'a ProgramGraph>) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for g in graphs {
        for v in g.vertices.iter().filter(|v| v.kind == VertexKind::Instruction) {
            *counts.entry(v.text.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Tokens with frequency at least `min_count`, most frequent first, ties
/// broken lexicographically.
pub fn vocab_from_counts(counts: BTreeMap<String, u64>, min_count: u64) -> Result<Vocabulary, VocabError> {
    if min_count == 0 {
        return Err(VocabError::InvalidMinCount);
    }
    if counts.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    let mut entries: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_entries(entries, min_count)
}

pub fn build_vocab<'a>(
    graphs: impl IntoIterator<Item = &'a ProgramGraph>,
    min_count: u64,
) -> Result<Vocabulary, VocabError> {
    vocab_from_counts(count_tokens(graphs), min_count)
}

pub fn encode_vertex(vertex: &Vertex, vocab: &Vocabulary) -> u32 {
    match vertex.kind {
        VertexKind::Instruction => vocab.lookup(&vertex.text),
        VertexKind::Variable => ID,
        VertexKind::Constant => VAL,
        VertexKind::External => EXTERNAL,
    }
}

pub fn encode_graph(graph: &ProgramGraph, vocab: &Vocabulary) -> Vec<u32> {
    graph.vertices.iter().map(|v| encode_vertex(v, vocab)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::ir::parse_ir;

    fn norm_all(src: &str) -> Vec<String> {
        let m = parse_ir(src).unwrap();
        let n = Normalizer::new(&m);
        m.definitions().flat_map(|f| f.instructions()).map(|i| n.normalize(i)).collect()
    }

    #[test]
    fn strips_identifiers() {
        let out = norm_all("define i32 @f(i32 %3, i32 %4) {\n  %5 = add i32 %3, %4\n  ret i32 %5\n}");
        assert_eq!(out, ["<%ID> = add i32 <%ID>, <%ID>", "ret i32 <%ID>"]);
    }

    #[test]
    fn inlines_struct_types() {
        let out = norm_all(
            "%struct.Point = type { float, float }\n\
             define float @f(%struct.Point** %p) {\n  %q = load %struct.Point*, %struct.Point** %p, align 8, !tbaa !3\n  \
             %x = getelementptr inbounds %struct.Point, %struct.Point* %q, i32 0, i32 1\n  %v = load float, float* %x, align 4\n  ret float %v\n}",
        );
        assert_eq!(out[0], "<%ID> = load { float, float }*, { float, float }** <%ID>");
        assert_eq!(
            out[1],
            "<%ID> = getelementptr inbounds { float, float }, { float, float }* <%ID>, i32 <INT>, i32 <INT>"
        );
    }

    #[test]
    fn recursive_types_become_opaque() {
        let out = norm_all(
            "%struct.node = type { i32, %struct.node* }\n\
             define %struct.node* @next(%struct.node* %n) {\n  %p = getelementptr %struct.node, %struct.node* %n, i32 0, i32 1\n  \
             %q = load %struct.node*, %struct.node** %p\n  ret %struct.node* %q\n}",
        );
        assert_eq!(out[2], "ret { i32, opaque* }* <%ID>");
    }

    #[test]
    fn literals_are_abstracted_but_lengths_kept() {
        let out = norm_all(
            "@s = constant [4 x i8] c\"abc\\00\"\n\
             define double @f(double %a) {\n  %p = getelementptr inbounds [4 x i8], [4 x i8]* @s, i64 0, i64 2\n  \
             %b = fmul double %a, 2.5\n  %c = fcmp olt double %b, 0x3FF0000000000000\n  ret double %b\n}",
        );
        assert_eq!(out[0], "<%ID> = getelementptr inbounds [4 x i8], [4 x i8]* <%ID>, i64 <INT>, i64 <INT>");
        assert_eq!(out[1], "<%ID> = fmul double <%ID>, <FLOAT>");
        assert_eq!(out[2], "<%ID> = fcmp olt double <%ID>, <FLOAT>");
    }

    #[test]
    fn calls_and_branches() {
        let out = norm_all(
            "declare i32 @printf(i8*, ...)\n@s = constant [3 x i8] c\"%d\\00\"\n\
             define void @f(i32 %x) {\nentry:\n  %r = call i32 (i8*, ...) @printf(i8* getelementptr ([3 x i8], [3 x i8]* @s, i32 0, i32 0), i32 %x)\n  br label %done\ndone:\n  ret void\n}",
        );
        assert_eq!(
            out[0],
            "<%ID> = call i32 (i8*, ...) <%ID>(i8* getelementptr ([3 x i8], [3 x i8]* <%ID>, i32 <INT>, i32 <INT>), i32 <%ID>)"
        );
        assert_eq!(out[1], "br label <%ID>");
    }

    #[test]
    fn trivial_vocabulary() {
        let g = build_graph(&parse_ir("define i32 @f() {\n  ret i32 0\n}").unwrap()).unwrap();
        let v = build_vocab([&g], 1).unwrap();
        assert_eq!(v.size(), 5);
        assert_eq!(v.tokens[4], "ret i32 <INT>");
        assert_eq!(v.lookup("ret i32 <INT>"), 4);
        assert_eq!(encode_graph(&g, &v), [EXTERNAL, 4, VAL]);
        let empty = build_vocab([&g], 2).unwrap();
        assert_eq!(empty.size(), RESERVED.len());
        assert_eq!(encode_graph(&g, &empty), [EXTERNAL, UNKNOWN, VAL]);
        assert_eq!(build_vocab([&g], 0), Err(VocabError::InvalidMinCount));
        assert_eq!(build_vocab(core::iter::empty(), 1), Err(VocabError::EmptyCorpus));
    }

    #[test]
    fn ids_by_frequency_then_text() {
        let counts: BTreeMap<String, u64> =
            [("b".to_string(), 3), ("a".to_string(), 3), ("c".to_string(), 7), ("d".to_string(), 1)].into_iter().collect();
        let v = vocab_from_counts(counts, 2).unwrap();
        assert_eq!(&v.tokens[4..], ["c", "a", "b"]);
        assert_eq!(&v.counts[4..], [7, 3, 3]);
        assert_eq!(v.lookup("d"), UNKNOWN);
    }
}
