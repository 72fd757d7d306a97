use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::SyntaxError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    /// `%name`, stored with its sigil.
    Local(String),
    /// `@name`, stored with its sigil.
    Global(String),
    /// `name:` at the start of a block, stored as `%name`.
    LabelDef(String),
    Int(String),
    Float(String),
    /// String literal including quotes and an optional `c` prefix.
    Str(String),
    Word(String),
    /// `!name` / `!0`; metadata payloads are skipped by the parser.
    Meta(String),
    /// `#0` attribute group reference.
    Attr(String),
    Punct(char),
    Ellipsis,
    Newline,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

fn is_word_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || matches!(c, b'_' | b'$' | b'.')
}

fn is_word_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'_' | b'$' | b'.' | b'-')
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    line_start: usize,
    out: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn col(&self) -> u32 {
        (self.pos - self.line_start) as u32 + 1
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.src.get(self.pos + ahead).copied()
    }

    fn err(&self, message: &str) -> SyntaxError {
        SyntaxError { line: self.line, col: self.col(), message: message.to_string() }
    }

    fn push(&mut self, tok: Tok, line: u32, col: u32) {
        self.out.push(Token { tok, line, col });
    }

    fn text(&self, start: usize) -> String {
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) {
        while let Some(c) = self.peek(0) {
            if !pred(c) {
                break;
            }
            self.pos += 1;
        }
    }

    fn quoted(&mut self) -> Result<(), SyntaxError> {
        // at the opening quote
        self.pos += 1;
        loop {
            match self.peek(0) {
                None | Some(b'\n') => return Err(self.err("unterminated string literal")),
                Some(b'"') => {
                    self.pos += 1;
                    return Ok(());
                }
                Some(_) => self.pos += 1,
            }
        }
    }

    fn sigil_name(&mut self) -> Result<(), SyntaxError> {
        // after the sigil
        match self.peek(0) {
            Some(b'"') => self.quoted(),
            Some(c) if is_word_char(c) => {
                self.take_while(is_word_char);
                Ok(())
            }
            _ => Err(self.err("expected identifier after sigil")),
        }
    }

    fn number(&mut self, start: usize, line: u32, col: u32) {
        if self.peek(0) == Some(b'-') {
            self.pos += 1;
        }
        if self.peek(0) == Some(b'0') && self.peek(1) == Some(b'x') {
            self.pos += 2;
            self.take_while(|c| c.is_ascii_alphanumeric());
            let text = self.text(start);
            self.push(Tok::Float(text), line, col);
            return;
        }
        self.take_while(|c| c.is_ascii_digit());
        let mut float = false;
        if self.peek(0) == Some(b'.') && self.peek(1).is_some_and(|c| c.is_ascii_digit()) {
            float = true;
            self.pos += 1;
            self.take_while(|c| c.is_ascii_digit());
        }
        if matches!(self.peek(0), Some(b'e' | b'E'))
            && (self.peek(1).is_some_and(|c| c.is_ascii_digit())
                || (matches!(self.peek(1), Some(b'+' | b'-')) && self.peek(2).is_some_and(|c| c.is_ascii_digit())))
        {
            float = true;
            self.pos += 2;
            self.take_while(|c| c.is_ascii_digit());
        }
        let text = self.text(start);
        if !float && self.peek(0) == Some(b':') {
            self.pos += 1;
            let mut label = String::from("%");
            label.push_str(&text);
            self.push(Tok::LabelDef(label), line, col);
        } else if float {
            self.push(Tok::Float(text), line, col);
        } else {
            self.push(Tok::Int(text), line, col);
        }
    }

    fn comment(&mut self, line: u32, col: u32) {
        let start = self.pos;
        self.take_while(|c| c != b'\n');
        let body = self.text(start);
        // Older printers emit unnamed block labels as `; <label>:5:`.
        if let Some(rest) = body.strip_prefix("; <label>:") {
            let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
            if !digits.is_empty() {
                let mut label = String::from("%");
                label.push_str(&digits);
                self.push(Tok::LabelDef(label), line, col);
            }
        }
    }

    fn run(mut self) -> Result<Vec<Token>, SyntaxError> {
        while let Some(c) = self.peek(0) {
            let (line, col, start) = (self.line, self.col(), self.pos);
            match c {
                b'\n' => {
                    self.pos += 1;
                    self.push(Tok::Newline, line, col);
                    self.line += 1;
                    self.line_start = self.pos;
                }
                b' ' | b'\t' | b'\r' => self.pos += 1,
                b';' => self.comment(line, col),
                b'%' | b'@' => {
                    self.pos += 1;
                    self.sigil_name()?;
                    let text = self.text(start);
                    self.push(if c == b'%' { Tok::Local(text) } else { Tok::Global(text) }, line, col);
                }
                b'!' => {
                    self.pos += 1;
                    if self.peek(0) == Some(b'"') {
                        self.quoted()?;
                    } else {
                        self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, b'_' | b'.' | b'-' | b'$'));
                    }
                    let text = self.text(start);
                    self.push(Tok::Meta(text), line, col);
                }
                b'#' => {
                    self.pos += 1;
                    self.take_while(|c| c.is_ascii_digit());
                    let text = self.text(start);
                    self.push(Tok::Attr(text), line, col);
                }
                b'"' => {
                    self.quoted()?;
                    if self.peek(0) == Some(b':') {
                        let quoted = self.text(start);
                        self.pos += 1;
                        let mut label = String::from("%");
                        label.push_str(&quoted);
                        self.push(Tok::LabelDef(label), line, col);
                    } else {
                        let text = self.text(start);
                        self.push(Tok::Str(text), line, col);
                    }
                }
                b'.' if self.peek(1) == Some(b'.') && self.peek(2) == Some(b'.') => {
                    self.pos += 3;
                    self.push(Tok::Ellipsis, line, col);
                }
                b'0'..=b'9' => self.number(start, line, col),
                b'-' if self.peek(1).is_some_and(|d| d.is_ascii_digit()) => self.number(start, line, col),
                b'c' if self.peek(1) == Some(b'"') => {
                    self.pos += 1;
                    self.quoted()?;
                    let text = self.text(start);
                    self.push(Tok::Str(text), line, col);
                }
                c if is_word_start(c) => {
                    self.take_while(is_word_char);
                    let text = self.text(start);
                    if self.peek(0) == Some(b':') {
                        self.pos += 1;
                        let mut label = String::from("%");
                        label.push_str(&text);
                        self.push(Tok::LabelDef(label), line, col);
                    } else {
                        self.push(Tok::Word(text), line, col);
                    }
                }
                b'=' | b',' | b'(' | b')' | b'[' | b']' | b'{' | b'}' | b'<' | b'>' | b'*' | b':' | b'|' => {
                    self.pos += 1;
                    self.push(Tok::Punct(c as char), line, col);
                }
                _ => return Err(self.err("unexpected character")),
            }
        }
        Ok(self.out)
    }
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, SyntaxError> {
    Lexer { src: source.as_bytes(), pos: 0, line: 1, line_start: 0, out: Vec::new() }.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn labels_and_values() {
        assert_eq!(
            toks("entry:\n  %x = add i32 %a, -1"),
            vec![
                Tok::LabelDef("%entry".into()),
                Tok::Newline,
                Tok::Local("%x".into()),
                Tok::Punct('='),
                Tok::Word("add".into()),
                Tok::Word("i32".into()),
                Tok::Local("%a".into()),
                Tok::Punct(','),
                Tok::Int("-1".into()),
            ]
        );
    }

    #[test]
    fn numeric_and_legacy_labels() {
        assert_eq!(toks("5:"), vec![Tok::LabelDef("%5".into())]);
        assert_eq!(toks("; <label>:7:   ; preds = %3"), vec![Tok::LabelDef("%7".into())]);
    }

    #[test]
    fn floats() {
        assert_eq!(toks("1.5e+03 0x3FF0000000000000 2.0"), vec![
            Tok::Float("1.5e+03".into()),
            Tok::Float("0x3FF0000000000000".into()),
            Tok::Float("2.0".into()),
        ]);
    }

    #[test]
    fn unterminated_string_is_an_error() {
        let err = tokenize("@s = constant [3 x i8] c\"ab\n").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn rejects_stray_bytes() {
        assert!(tokenize("define ~").is_err());
    }
}
