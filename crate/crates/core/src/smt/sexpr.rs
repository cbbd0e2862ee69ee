//! Positioned s-expression reader.
//!
//! Comments run from `;` to the end of the line and are dropped by the
//! tokenizer. Atoms are kept verbatim; identifier validation is left to the
//! schema and formula layers, which know what they accept.

use std::fmt;

/// One-based line and column of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExpr {
    Atom { text: String, pos: Pos },
    List { items: Vec<SExpr>, pos: Pos },
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Atom { pos, .. } | SExpr::List { pos, .. } => *pos,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom { text, .. } => Some(text),
            SExpr::List { .. } => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List { items, .. } => Some(items),
            SExpr::Atom { .. } => None,
        }
    }

    /// Head atom of a non-empty list.
    pub fn head(&self) -> Option<&str> {
        self.as_list().and_then(|l| l.first()).and_then(SExpr::as_atom)
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom { text, .. } => f.write_str(text),
            SExpr::List { items, .. } => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{pos}: {message}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
}

impl SyntaxError {
    fn new(pos: Pos, message: impl Into<String>) -> Self {
        SyntaxError {
            pos,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open(Pos),
    Close(Pos),
    Atom(String, Pos),
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn tokens(mut self) -> Result<Vec<Token>, SyntaxError> {
        let mut out = Vec::new();
        while let Some(&c) = self.chars.peek() {
            let pos = self.pos();
            match c {
                c if c.is_whitespace() => {
                    self.bump();
                }
                ';' => {
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                '(' => {
                    self.bump();
                    out.push(Token::Open(pos));
                }
                ')' => {
                    self.bump();
                    out.push(Token::Close(pos));
                }
                '"' => {
                    let mut text = String::from('"');
                    self.bump();
                    loop {
                        match self.bump() {
                            None => return Err(SyntaxError::new(pos, "unterminated string literal")),
                            Some('"') => {
                                // SMT-LIB escapes a quote by doubling it
                                if self.chars.peek() == Some(&'"') {
                                    self.bump();
                                    text.push_str("\"\"");
                                } else {
                                    text.push('"');
                                    break;
                                }
                            }
                            Some(c) => text.push(c),
                        }
                    }
                    out.push(Token::Atom(text, pos));
                }
                '|' => {
                    let mut text = String::from('|');
                    self.bump();
                    loop {
                        match self.bump() {
                            None => return Err(SyntaxError::new(pos, "unterminated quoted symbol")),
                            Some('|') => {
                                text.push('|');
                                break;
                            }
                            Some(c) => text.push(c),
                        }
                    }
                    out.push(Token::Atom(text, pos));
                }
                _ => {
                    let mut text = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '"' {
                            break;
                        }
                        text.push(c);
                        self.bump();
                    }
                    out.push(Token::Atom(text, pos));
                }
            }
        }
        Ok(out)
    }
}

/// Parses every top-level s-expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<SExpr>, SyntaxError> {
    let tokens = Lexer::new(text).tokens()?;
    let mut stack: Vec<(Pos, Vec<SExpr>)> = Vec::new();
    let mut top = Vec::new();
    for tok in tokens {
        match tok {
            Token::Open(pos) => stack.push((pos, Vec::new())),
            Token::Close(pos) => {
                let (open, items) = stack
                    .pop()
                    .ok_or_else(|| SyntaxError::new(pos, "unexpected ')'"))?;
                let node = SExpr::List { items, pos: open };
                match stack.last_mut() {
                    Some((_, parent)) => parent.push(node),
                    None => top.push(node),
                }
            }
            Token::Atom(text, pos) => {
                let node = SExpr::Atom { text, pos };
                match stack.last_mut() {
                    Some((_, parent)) => parent.push(node),
                    None => top.push(node),
                }
            }
        }
    }
    if let Some((pos, _)) = stack.pop() {
        return Err(SyntaxError::new(pos, "unclosed '('"));
    }
    Ok(top)
}

/// Parses exactly one s-expression.
pub fn parse_one(text: &str) -> Result<SExpr, SyntaxError> {
    let mut all = parse_all(text)?;
    match all.len() {
        0 => Err(SyntaxError::new(Pos { line: 1, col: 1 }, "empty input")),
        1 => Ok(all.pop().unwrap()),
        _ => Err(SyntaxError::new(all[1].pos(), "trailing input after expression")),
    }
}

/// True for identifiers of the accepted shape: an ASCII letter followed by
/// letters, digits or underscores.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_and_comments() {
        let all = parse_all("; header\n(a (b c)) ; trailing\n  d").unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].pos(), Pos { line: 2, col: 1 });
        assert_eq!(all[1].pos(), Pos { line: 3, col: 3 });
        assert_eq!(all[0].to_string(), "(a (b c))");
    }

    #[test]
    fn unbalanced_reports_position() {
        let err = parse_all("(a\n  (b c)").unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, col: 1 });
        let err = parse_all("a)\n").unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, col: 2 });
    }

    #[test]
    fn strings_keep_quotes() {
        let e = parse_one("(error \"line 1 column 2: bad \"\"x\"\"\")").unwrap();
        assert_eq!(e.as_list().unwrap()[1].as_atom().unwrap(), "\"line 1 column 2: bad \"\"x\"\"\"");
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("on_roadway"));
        assert!(is_identifier("V2"));
        assert!(!is_identifier("_x"));
        assert!(!is_identifier("2x"));
        assert!(!is_identifier("Vehicle!val!0"));
        assert!(!is_identifier(""));
    }
}
