//! Brace-matching function recognizer for C and C++ sources.
//!
//! The scanner strips comments, string/char literals and preprocessor lines,
//! then a small scope machine looks for `name(args) ... {` at file, namespace
//! or class scope and matches the body to its closing brace.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A function definition found in a source file. Lines are 1-based and inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpan {
    pub name: String,
    pub start_line: usize,
    pub end_line: usize,
}

impl FunctionSpan {
    pub fn contains(&self, line: usize) -> bool {
        self.start_line <= line && line <= self.end_line
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced braces near line {line}")]
    UnbalancedBraces { line: usize },
    #[error("unterminated block comment starting at line {line}")]
    UnterminatedComment { line: usize },
}

/// Decodes raw file bytes, replacing invalid UTF-8. The flag is true when
/// any replacement happened.
pub fn decode_source(bytes: &[u8]) -> (Cow<'_, str>, bool) {
    match std::str::from_utf8(bytes) {
        Ok(s) => (Cow::Borrowed(s), false),
        Err(_) => (String::from_utf8_lossy(bytes), true),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TokKind {
    Ident(String),
    Punct(char),
    /// `::`
    Scope,
    Literal,
}

#[derive(Debug, Clone)]
struct Tok {
    kind: TokKind,
    line: usize,
}

impl Tok {
    fn is_punct(&self, c: char) -> bool {
        self.kind == TokKind::Punct(c)
    }

    fn ident(&self) -> Option<&str> {
        match &self.kind {
            TokKind::Ident(s) => Some(s),
            _ => None,
        }
    }
}

const STRING_PREFIXES: &[&str] = &["L", "u", "U", "u8"];
const RAW_PREFIXES: &[&str] = &["R", "LR", "uR", "UR", "u8R"];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    at_line_start: bool,
    toks: Vec<Tok>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            at_line_start: true,
            toks: Vec::new(),
        }
    }

    fn peek(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek(0)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.at_line_start = true;
        }
        Some(c)
    }

    fn push(&mut self, kind: TokKind, line: usize) {
        self.toks.push(Tok { kind, line });
    }

    fn run(mut self) -> Result<Vec<Tok>, ParseError> {
        while let Some(c) = self.peek(0) {
            if c == b'\n' {
                self.bump();
                continue;
            }
            if c.is_ascii_whitespace() {
                self.pos += 1;
                continue;
            }
            if c == b'#' && self.at_line_start {
                self.skip_preprocessor()?;
                continue;
            }
            self.at_line_start = false;
            match c {
                b'/' if self.peek(1) == Some(b'/') => self.skip_line_comment(),
                b'/' if self.peek(1) == Some(b'*') => self.skip_block_comment()?,
                b'"' => {
                    let line = self.line;
                    self.pos += 1;
                    self.skip_quoted(b'"');
                    self.push(TokKind::Literal, line);
                }
                b'\'' => {
                    let line = self.line;
                    self.pos += 1;
                    self.skip_quoted(b'\'');
                    self.push(TokKind::Literal, line);
                }
                b'0'..=b'9' => self.number(),
                b'.' if self.peek(1).is_some_and(|d| d.is_ascii_digit()) => self.number(),
                c if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 => self.ident(),
                b':' if self.peek(1) == Some(b':') => {
                    self.push(TokKind::Scope, self.line);
                    self.pos += 2;
                }
                _ => {
                    self.push(TokKind::Punct(c as char), self.line);
                    self.pos += 1;
                }
            }
        }
        Ok(self.toks)
    }

    fn skip_line_comment(&mut self) {
        while let Some(c) = self.peek(0) {
            if c == b'\n' {
                return;
            }
            // a backslash-newline continues a line comment
            if c == b'\\' && self.peek(1) == Some(b'\n') {
                self.pos += 1;
                self.bump();
                continue;
            }
            self.pos += 1;
        }
    }

    fn skip_block_comment(&mut self) -> Result<(), ParseError> {
        let start = self.line;
        self.pos += 2;
        let at_start = self.at_line_start;
        loop {
            match self.peek(0) {
                None => return Err(ParseError::UnterminatedComment { line: start }),
                Some(b'*') if self.peek(1) == Some(b'/') => {
                    self.pos += 2;
                    break;
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
        // a comment does not make a following `#` lose its line-start status
        if self.line == start {
            self.at_line_start = at_start;
        }
        Ok(())
    }

    fn skip_preprocessor(&mut self) -> Result<(), ParseError> {
        while let Some(c) = self.peek(0) {
            match c {
                b'\n' => return Ok(()),
                b'\\' if self.peek(1) == Some(b'\n') => {
                    self.pos += 1;
                    self.bump();
                }
                b'\\' if self.peek(1) == Some(b'\r') && self.peek(2) == Some(b'\n') => {
                    self.pos += 2;
                    self.bump();
                }
                b'/' if self.peek(1) == Some(b'*') => self.skip_block_comment()?,
                b'/' if self.peek(1) == Some(b'/') => {
                    self.skip_line_comment();
                    return Ok(());
                }
                _ => self.pos += 1,
            }
        }
        Ok(())
    }

    /// Skips to the closing quote. Stops at an unescaped newline so a stray
    /// quote cannot swallow the rest of the file.
    fn skip_quoted(&mut self, quote: u8) {
        while let Some(c) = self.peek(0) {
            match c {
                b'\\' => {
                    self.pos += 1;
                    if self.peek(0).is_some() {
                        self.bump();
                    }
                }
                b'\n' => return,
                c if c == quote => {
                    self.pos += 1;
                    return;
                }
                _ => self.pos += 1,
            }
        }
    }

    /// `R"delim( ... )delim"`; `pos` sits on the opening quote.
    fn skip_raw_string(&mut self) {
        self.pos += 1;
        let delim_start = self.pos;
        while let Some(c) = self.peek(0) {
            if c == b'(' || c == b'\n' || c == b'"' || self.pos - delim_start > 16 {
                break;
            }
            self.pos += 1;
        }
        if self.peek(0) != Some(b'(') {
            // not a raw string after all; fall back to an ordinary literal
            self.pos = delim_start;
            self.skip_quoted(b'"');
            return;
        }
        let mut closing = Vec::with_capacity(self.pos - delim_start + 2);
        closing.push(b')');
        closing.extend_from_slice(&self.src[delim_start..self.pos]);
        closing.push(b'"');
        self.pos += 1;
        while self.peek(0).is_some() {
            if self.src[self.pos..].starts_with(&closing) {
                self.pos += closing.len();
                return;
            }
            self.bump();
        }
    }

    fn number(&mut self) {
        let line = self.line;
        let mut prev = 0u8;
        while let Some(c) = self.peek(0) {
            let exp_sign =
                (c == b'+' || c == b'-') && matches!(prev, b'e' | b'E' | b'p' | b'P');
            if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' || c == b'\'' || exp_sign {
                prev = c;
                self.pos += 1;
            } else {
                break;
            }
        }
        self.push(TokKind::Literal, line);
    }

    fn ident(&mut self) {
        let line = self.line;
        let start = self.pos;
        while let Some(c) = self.peek(0) {
            if c == b'_' || c.is_ascii_alphanumeric() || c >= 0x80 {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        match self.peek(0) {
            Some(b'"') if RAW_PREFIXES.contains(&text.as_str()) => {
                self.skip_raw_string();
                self.push(TokKind::Literal, line);
            }
            Some(q @ (b'"' | b'\'')) if STRING_PREFIXES.contains(&text.as_str()) => {
                self.pos += 1;
                self.skip_quoted(q);
                self.push(TokKind::Literal, line);
            }
            _ => self.push(TokKind::Ident(text), line),
        }
    }
}

/// Identifiers that look like calls but never name a function definition.
const NOT_A_NAME: &[&str] = &[
    "if",
    "while",
    "for",
    "switch",
    "return",
    "sizeof",
    "alignof",
    "alignas",
    "decltype",
    "typeof",
    "__typeof__",
    "__attribute__",
    "__declspec",
    "static_assert",
    "_Static_assert",
    "catch",
    "throw",
    "noexcept",
    "defined",
    "requires",
];

const ACCESS: &[&str] = &["public", "private", "protected"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    /// namespace, class, struct, union, `extern "C"`
    Container,
    /// index into the output span list
    Function(usize),
    Other,
}

enum BlockKind {
    Function(String),
    Container,
    Other,
}

fn classify(prefix: &[Tok]) -> BlockKind {
    if prefix.is_empty() {
        return BlockKind::Other;
    }
    let mut depth = 0i32;
    let mut first_paren = None;
    let mut operator_at = None;
    let mut has_assign = false;
    for (i, t) in prefix.iter().enumerate() {
        match &t.kind {
            TokKind::Punct('(') => {
                if depth == 0 && first_paren.is_none() && operator_at.is_none() {
                    let named = i > 0
                        && prefix[i - 1]
                            .ident()
                            .is_some_and(|s| !NOT_A_NAME.contains(&s));
                    if named {
                        first_paren = Some(i);
                    }
                }
                depth += 1;
            }
            TokKind::Punct(')') => depth -= 1,
            TokKind::Punct('=') if depth == 0 && operator_at.is_none() && first_paren.is_none() => {
                // `operator=` is handled through operator_at
                has_assign = true;
            }
            TokKind::Ident(s) if depth == 0 && s == "operator" && first_paren.is_none() => {
                operator_at = Some(i);
            }
            _ => {}
        }
    }
    if has_assign {
        return BlockKind::Other;
    }
    if let Some(op) = operator_at {
        if let Some(name) = operator_name(prefix, op) {
            return BlockKind::Function(name);
        }
    }
    if let Some(p) = first_paren {
        return BlockKind::Function(qualified_name(prefix, p - 1, String::new()));
    }
    let idents: Vec<&str> = prefix.iter().filter_map(Tok::ident).collect();
    if idents.iter().any(|s| *s == "enum") {
        return BlockKind::Other;
    }
    if idents
        .iter()
        .any(|s| matches!(*s, "namespace" | "class" | "struct" | "union"))
    {
        return BlockKind::Container;
    }
    if idents.first() == Some(&"extern") && idents.len() == 1 {
        return BlockKind::Container;
    }
    BlockKind::Other
}

/// Walks backwards from `last` over `A::B::~C` style chains.
fn qualified_name(prefix: &[Tok], last: usize, tail: String) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut i = last as isize;
    let mut expect_ident = true;
    while i >= 0 {
        let t = &prefix[i as usize];
        match (&t.kind, expect_ident) {
            (TokKind::Ident(s), true) => {
                parts.push(s.clone());
                expect_ident = false;
            }
            (TokKind::Punct('~'), false) => {
                // destructor marker binds to the identifier already taken
                let last = parts.pop().unwrap_or_default();
                parts.push(format!("~{last}"));
            }
            (TokKind::Scope, false) => {
                parts.push("::".to_string());
                expect_ident = true;
            }
            _ => break,
        }
        i -= 1;
    }
    parts.reverse();
    let mut name: String = parts.concat();
    while let Some(stripped) = name.strip_prefix("::") {
        name = stripped.to_string();
    }
    name.push_str(&tail);
    name
}

fn operator_name(prefix: &[Tok], op: usize) -> Option<String> {
    let mut j = op + 1;
    let mut sym = String::new();
    if prefix.get(j).is_some_and(|t| t.is_punct('('))
        && prefix.get(j + 1).is_some_and(|t| t.is_punct(')'))
    {
        sym.push_str("()");
        j += 2;
    }
    while let Some(t) = prefix.get(j) {
        if t.is_punct('(') {
            break;
        }
        match &t.kind {
            TokKind::Punct(c) => sym.push(*c),
            TokKind::Ident(s) => {
                if !sym.is_empty() {
                    sym.push(' ');
                }
                sym.push_str(s);
            }
            TokKind::Scope => sym.push_str("::"),
            TokKind::Literal => sym.push_str("\"\""),
        }
        j += 1;
    }
    prefix.get(j)?;
    let head = if op > 0 {
        let base = qualified_name(prefix, op - 1, String::new());
        // only keep the chain when it ends in `::` (i.e. `A::operator=`)
        if matches!(prefix[op - 1].kind, TokKind::Scope) {
            format!("{base}::")
        } else {
            String::new()
        }
    } else {
        String::new()
    };
    Some(format!("{head}operator{sym}"))
}

/// Finds function definitions in `source`.
///
/// Files that contain no definitions (headers with declarations only,
/// macro tables) yield an empty list. Braces inside comments, string and
/// character literals and preprocessor lines are ignored.
pub fn parse_functions(source: &str) -> Result<Vec<FunctionSpan>, ParseError> {
    let toks = Lexer::new(source).run()?;
    let mut spans: Vec<FunctionSpan> = Vec::new();
    let mut stack: Vec<Scope> = Vec::new();
    let mut prefix: Vec<Tok> = Vec::new();
    // only tracked while collecting at file/container level
    let mut paren_depth = 0i32;

    for tok in &toks {
        let collecting = matches!(stack.last(), None | Some(Scope::Container));
        match tok.kind {
            TokKind::Punct('{') => {
                if collecting && paren_depth == 0 {
                    let scope = match classify(&prefix) {
                        BlockKind::Function(name) => {
                            let start = prefix.first().map_or(tok.line, |t| t.line);
                            spans.push(FunctionSpan {
                                name,
                                start_line: start,
                                end_line: tok.line,
                            });
                            Scope::Function(spans.len() - 1)
                        }
                        BlockKind::Container => Scope::Container,
                        BlockKind::Other => Scope::Other,
                    };
                    stack.push(scope);
                    prefix.clear();
                } else {
                    if collecting {
                        prefix.push(tok.clone());
                    }
                    stack.push(Scope::Other);
                }
            }
            TokKind::Punct('}') => {
                let Some(scope) = stack.pop() else {
                    return Err(ParseError::UnbalancedBraces { line: tok.line });
                };
                if let Scope::Function(i) = scope {
                    spans[i].end_line = tok.line;
                }
                let now_collecting = matches!(stack.last(), None | Some(Scope::Container));
                if now_collecting {
                    // a brace block nested inside parentheses at container
                    // level (e.g. a lambda default argument) continues the prefix
                    if paren_depth == 0 {
                        prefix.clear();
                    } else {
                        prefix.push(tok.clone());
                    }
                }
            }
            _ if !collecting => {}
            TokKind::Punct('(') => {
                paren_depth += 1;
                prefix.push(tok.clone());
            }
            TokKind::Punct(')') => {
                paren_depth = (paren_depth - 1).max(0);
                prefix.push(tok.clone());
            }
            TokKind::Punct(';') if paren_depth == 0 => prefix.clear(),
            TokKind::Punct(':')
                if paren_depth == 0
                    && prefix.len() == 1
                    && prefix[0].ident().is_some_and(|s| ACCESS.contains(&s)) =>
            {
                prefix.clear();
            }
            _ => prefix.push(tok.clone()),
        }
    }
    if !stack.is_empty() {
        let line = toks.last().map_or(1, |t| t.line);
        return Err(ParseError::UnbalancedBraces { line });
    }

    // keep spans non-overlapping when a definition starts on the line where
    // the previous one ends
    let mut out: Vec<FunctionSpan> = Vec::with_capacity(spans.len());
    for mut span in spans {
        if let Some(prev) = out.last() {
            if span.start_line <= prev.end_line {
                span.start_line = prev.end_line + 1;
            }
        }
        if span.start_line <= span.end_line {
            out.push(span);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(src: &str) -> Vec<(String, usize, usize)> {
        parse_functions(src)
            .unwrap()
            .into_iter()
            .map(|s| (s.name, s.start_line, s.end_line))
            .collect()
    }

    #[test]
    fn empty_source() {
        assert!(parse_functions("").unwrap().is_empty());
    }

    #[test]
    fn one_line_function() {
        assert_eq!(names("int f(int x) { return x; }"), vec![("f".into(), 1, 1)]);
    }

    #[test]
    fn string_brace_does_not_close_body() {
        let src = "int f(void)\n{\n    puts(\"}\");\n    char c = '}';\n    return 0;\n}\nint g(void) { return 1; }\n";
        assert_eq!(
            names(src),
            vec![("f".into(), 1, 6), ("g".into(), 7, 7)]
        );
    }

    #[test]
    fn comments_and_preprocessor_are_ignored() {
        let src = "/* { */\n#define OPEN {\n// }\nstatic int\nadd(int a, int b)\n{\n  return a + b; /* } */\n}\n";
        assert_eq!(names(src), vec![("add".into(), 4, 8)]);
    }

    #[test]
    fn declarations_only_header() {
        let src = "#ifndef X_H\n#define X_H\nint f(int);\nstruct s { int a; };\nenum e { A, B };\n#endif\n";
        assert!(parse_functions(src).unwrap().is_empty());
    }

    #[test]
    fn globals_and_initializers_are_not_functions() {
        let src = "static int table[] = { 1, 2, 3 };\nstruct p origin = { .x = f(0) };\nint h(void) { return table[0]; }\n";
        assert_eq!(names(src), vec![("h".into(), 3, 3)]);
    }

    #[test]
    fn namespace_and_class_members() {
        let src = r#"namespace ns {
class A : public B {
public:
    A(int x) : m_(x) {}
    ~A() { }
    int get() const { return m_; }
    bool operator==(const A& o) const { return m_ == o.m_; }
private:
    int m_;
};
int A::twice() { return 2 * m_; }
}
extern "C" {
void c_entry(void) { }
}
"#;
        let got: Vec<String> = names(src).into_iter().map(|n| n.0).collect();
        assert_eq!(got, vec!["A", "~A", "get", "operator==", "A::twice", "c_entry"]);
    }

    #[test]
    fn template_and_qualified_destructor() {
        let src = "template <typename T>\nT max(T a, T b) {\n  return a > b ? a : b;\n}\nFoo::~Foo() {\n}\n";
        assert_eq!(
            names(src),
            vec![("max".into(), 1, 4), ("Foo::~Foo".into(), 5, 6)]
        );
    }

    #[test]
    fn raw_strings_and_digit_separators() {
        let src = "const char* f() { return R\"x(}{)x\"; }\nint g() { return 1'000; }\n";
        assert_eq!(names(src), vec![("f".into(), 1, 1), ("g".into(), 2, 2)]);
    }

    #[test]
    fn lambda_inside_body_is_not_a_span() {
        let src = "void run() {\n  auto l = [](int x) { return x; };\n  l(1);\n}\n";
        assert_eq!(names(src), vec![("run".into(), 1, 4)]);
    }

    #[test]
    fn unbalanced_braces_rejected() {
        assert!(matches!(
            parse_functions("int f() {\n"),
            Err(ParseError::UnbalancedBraces { .. })
        ));
        assert!(matches!(
            parse_functions("}\n"),
            Err(ParseError::UnbalancedBraces { line: 1 })
        ));
    }

    #[test]
    fn unterminated_comment_rejected() {
        assert!(matches!(
            parse_functions("int f() { /* \n}"),
            Err(ParseError::UnterminatedComment { line: 1 })
        ));
    }

    #[test]
    fn adjacent_definitions_do_not_overlap() {
        let src = "int f(){return 1;}\nint g(){\nreturn 2;} int h(){\nreturn 3;\n}\n";
        let spans = parse_functions(src).unwrap();
        for w in spans.windows(2) {
            assert!(w[0].end_line < w[1].start_line);
        }
        assert_eq!(spans[0].name, "f");
    }

    #[test]
    fn lossy_decoding_is_flagged() {
        let (text, lossy) = decode_source(b"int f() { return 0; }\xff\n");
        assert!(lossy);
        assert_eq!(parse_functions(&text).unwrap().len(), 1);
        assert!(!decode_source(b"int x;").1);
    }
}
