//! Infix notation: `(S\NP)/NP`, `S[dcl]`, `((N\N)\(N\N))/NP`.
//!
//! Unparenthesized slash chains associate to the left, so `S\NP/NP` is
//! `(S\NP)/NP`. Serialization parenthesizes every functor child and never the
//! root.

use super::{is_reserved, AtomLabel, Category, CategoryError, Slash, DEFAULT_MAX_DEPTH};

const MAX_NESTING: usize = 256;

/// Parses an infix category, rejecting trees deeper than [`DEFAULT_MAX_DEPTH`].
pub fn parse_infix(text: &str) -> Result<Category, CategoryError> {
    parse_infix_with_max_depth(text, DEFAULT_MAX_DEPTH)
}

pub fn parse_infix_with_max_depth(text: &str, max_depth: usize) -> Result<Category, CategoryError> {
    let mut parser = Parser {
        src: text,
        pos: 0,
        nesting: 0,
    };
    parser.skip_ws();
    if parser.at_end() {
        return Err(parser.error("empty category"));
    }
    let cat = parser.expr()?;
    parser.skip_ws();
    if let Some(c) = parser.peek() {
        let msg = if c == ')' {
            "unbalanced ')'".to_string()
        } else {
            format!("unexpected {c:?} after complete category")
        };
        return Err(parser.error(msg));
    }
    let depth = cat.depth();
    if depth > max_depth {
        return Err(CategoryError::DepthExceeded { depth, max: max_depth });
    }
    Ok(cat)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    nesting: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += c.len_utf8();
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn error(&self, message: impl Into<String>) -> CategoryError {
        CategoryError::Syntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Category, CategoryError> {
        let mut left = self.term()?;
        loop {
            self.skip_ws();
            let slash = match self.peek() {
                Some('/') => Slash::Forward,
                Some('\\') => Slash::Backward,
                _ => return Ok(left),
            };
            self.bump();
            self.skip_ws();
            if matches!(self.peek(), None | Some(')')) {
                return Err(self.error("dangling slash"));
            }
            let right = self.term()?;
            left = Category::functor(slash, left, right);
        }
    }

    fn term(&mut self) -> Result<Category, CategoryError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.nesting += 1;
                if self.nesting > MAX_NESTING {
                    return Err(self.error("parentheses nested too deeply"));
                }
                self.bump();
                self.skip_ws();
                if self.peek() == Some(')') {
                    return Err(self.error("empty atom"));
                }
                let inner = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(self.error("unbalanced '('"));
                }
                self.bump();
                self.nesting -= 1;
                Ok(inner)
            }
            Some('/') | Some('\\') => Err(self.error("dangling slash")),
            Some(')') => Err(self.error("unbalanced ')'")),
            None => Err(self.error("unexpected end of input")),
            Some(_) => self.atom().map(Category::Atom),
        }
    }

    fn atom(&mut self) -> Result<AtomLabel, CategoryError> {
        let base = self.name();
        if base.is_empty() {
            let c = self.peek().unwrap_or(' ');
            return Err(self.error(format!("empty atom before reserved character {c:?}")));
        }
        let attribute = if self.peek() == Some('[') {
            self.bump();
            let attr = self.name();
            if attr.is_empty() {
                return Err(self.error("empty attribute"));
            }
            if self.peek() != Some(']') {
                return Err(self.error("unterminated attribute"));
            }
            self.bump();
            Some(attr)
        } else {
            None
        };
        if self.peek() == Some(']') {
            return Err(self.error("reserved character ']' in atom"));
        }
        AtomLabel::new(base, attribute).map_err(|_| self.error("invalid atom"))
    }

    fn name(&mut self) -> &'a str {
        let src = self.src;
        let start = self.pos;
        while self.peek().is_some_and(|c| !is_reserved(c)) {
            self.bump();
        }
        &src[start..self.pos]
    }
}

/// Serializes with the minimal display convention: functor children are
/// parenthesized, atoms and the root are not.
pub fn to_infix(cat: &Category) -> String {
    let mut out = String::new();
    write_infix(cat, false, &mut out);
    out
}

fn write_infix(cat: &Category, wrap: bool, out: &mut String) {
    match cat {
        Category::Atom(atom) => out.push_str(&atom.to_string()),
        Category::Functor { slash, result, argument } => {
            if wrap {
                out.push('(');
            }
            write_infix(result, true, out);
            out.push(slash.symbol());
            write_infix(argument, true, out);
            if wrap {
                out.push(')');
            }
        }
    }
}
