use super::{ParseError, SourceSpan};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// `%name`
    Local(String),
    /// `@name`
    Global(String),
    /// `^name`
    Label(String),
    Int(i64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Eq,
    Dot,
    Lt,
    Gt,
    Arrow,
    Newline,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => s.clone(),
            Tok::Local(s) => format!("%{s}"),
            Tok::Global(s) => format!("@{s}"),
            Tok::Label(s) => format!("^{s}"),
            Tok::Int(i) => i.to_string(),
            Tok::Str(s) => format!("{s:?}"),
            Tok::LBrace => "{".into(),
            Tok::RBrace => "}".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::LBracket => "[".into(),
            Tok::RBracket => "]".into(),
            Tok::Comma => ",".into(),
            Tok::Colon => ":".into(),
            Tok::Eq => "=".into(),
            Tok::Dot => ".".into(),
            Tok::Lt => "<".into(),
            Tok::Gt => ">".into(),
            Tok::Arrow => "->".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn is_sigil_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

pub fn lex(text: &str, file: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut last_span = SourceSpan::new(file, 1, 1, 1);
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c == ';' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            let tok = match c {
                '{' => {
                    i += 1;
                    Tok::LBrace
                }
                '}' => {
                    i += 1;
                    Tok::RBrace
                }
                '(' => {
                    i += 1;
                    Tok::LParen
                }
                ')' => {
                    i += 1;
                    Tok::RParen
                }
                '[' => {
                    i += 1;
                    Tok::LBracket
                }
                ']' => {
                    i += 1;
                    Tok::RBracket
                }
                ',' => {
                    i += 1;
                    Tok::Comma
                }
                ':' => {
                    i += 1;
                    Tok::Colon
                }
                '=' => {
                    i += 1;
                    Tok::Eq
                }
                '.' => {
                    i += 1;
                    Tok::Dot
                }
                '<' => {
                    i += 1;
                    Tok::Lt
                }
                '>' => {
                    i += 1;
                    Tok::Gt
                }
                '-' if chars.get(i + 1) == Some(&'>') => {
                    i += 2;
                    Tok::Arrow
                }
                '-' | '0'..='9' => {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    let lexeme: String = chars[start..i].iter().collect();
                    match lexeme.parse::<i64>() {
                        Ok(v) => Tok::Int(v),
                        Err(_) => {
                            return Err(ParseError::new(
                                SourceSpan::new(file, line_no, col, i),
                                "integer literal",
                                lexeme,
                            ))
                        }
                    }
                }
                '%' | '@' | '^' => {
                    i += 1;
                    while i < chars.len() && is_sigil_char(chars[i]) {
                        i += 1;
                    }
                    let name: String = chars[start + 1..i].iter().collect();
                    if name.is_empty() {
                        return Err(ParseError::new(
                            SourceSpan::new(file, line_no, col, col),
                            "name after sigil",
                            c.to_string(),
                        ));
                    }
                    match c {
                        '%' => Tok::Local(name),
                        '@' => Tok::Global(name),
                        _ => Tok::Label(name),
                    }
                }
                '"' => {
                    i += 1;
                    while i < chars.len() && chars[i] != '"' {
                        i += 1;
                    }
                    if i >= chars.len() {
                        return Err(ParseError::new(
                            SourceSpan::new(file, line_no, col, chars.len()),
                            "closing '\"'",
                            "end of line",
                        ));
                    }
                    let s: String = chars[start + 1..i].iter().collect();
                    i += 1;
                    Tok::Str(s)
                }
                c if is_ident_start(c) => {
                    while i < chars.len() && is_ident_char(chars[i]) {
                        i += 1;
                    }
                    Tok::Ident(chars[start..i].iter().collect())
                }
                other => {
                    return Err(ParseError::new(
                        SourceSpan::new(file, line_no, col, col),
                        "a token",
                        other.to_string(),
                    ))
                }
            };
            let span = SourceSpan::new(file, line_no, col, i.max(col));
            last_span = span.clone();
            tokens.push(Token { tok, span });
        }
        if !matches!(tokens.last(), None | Some(Token { tok: Tok::Newline, .. })) {
            let end = last_span.col_end;
            tokens.push(Token {
                tok: Tok::Newline,
                span: SourceSpan::new(file, last_span.line, end, end),
            });
        }
    }
    let end = last_span.col_end;
    tokens.push(Token {
        tok: Tok::Eof,
        span: SourceSpan::new(file, last_span.line, end, end),
    });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_sigils_and_arrows() {
        let toks = lex("fn @f(%a.b: ptr<x>) -> i32 ; comment\n^l:", "t").unwrap();
        let kinds: Vec<Tok> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("fn".into()),
                Tok::Global("f".into()),
                Tok::LParen,
                Tok::Local("a.b".into()),
                Tok::Colon,
                Tok::Ident("ptr".into()),
                Tok::Lt,
                Tok::Ident("x".into()),
                Tok::Gt,
                Tok::RParen,
                Tok::Arrow,
                Tok::Ident("i32".into()),
                Tok::Newline,
                Tok::Label("l".into()),
                Tok::Colon,
                Tok::Newline,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn negative_literals() {
        let toks = lex("ret i32 -12", "t").unwrap();
        assert_eq!(toks[2].tok, Tok::Int(-12));
        assert_eq!(toks[2].span.col_start, 9);
        assert_eq!(toks[2].span.col_end, 11);
    }
}
