use crate::error::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Hex(Vec<u8>),
    Number(u64),
    Sym(char),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("'{s}'"),
            Tok::Hex(b) => format!("0x{}", hex::encode(b)),
            Tok::Number(n) => n.to_string(),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: usize,
}

fn syntax(pos: usize, expected: &str, found: String) -> ParseError {
    ParseError::Syntax { pos, expected: expected.into(), found }
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'\'' => {
                let mut s = Vec::new();
                i += 1;
                loop {
                    match bytes.get(i) {
                        None => return Err(syntax(text.len(), "closing quote", "end of input".into())),
                        Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                            s.push(b'\'');
                            i += 2;
                        }
                        Some(b'\'') => {
                            i += 1;
                            break;
                        }
                        Some(&b) => {
                            s.push(b);
                            i += 1;
                        }
                    }
                }
                // input is a &str and quotes are ASCII, so the slice is valid UTF-8
                Tok::Str(String::from_utf8(s).expect("utf-8 between ASCII quotes"))
            }
            b'0' if matches!(bytes.get(i + 1), Some(b'x' | b'X')) => {
                i += 2;
                let digits = i;
                while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
                    i += 1;
                }
                let hex_text = &text[digits..i];
                if !hex_text.len().is_multiple_of(2) {
                    return Err(syntax(start, "even number of hex digits", hex_text.into()));
                }
                Tok::Hex(hex::decode(hex_text).expect("validated hex digits"))
            }
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let digits = &text[start..i];
                match digits.parse() {
                    Ok(n) => Tok::Number(n),
                    Err(_) => return Err(syntax(start, "number below 2^64", digits.into())),
                }
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'-') {
                    i += 1;
                }
                Tok::Ident(text[start..i].to_string())
            }
            b'(' | b')' | b',' | b'=' | b'{' | b'}' | b'*' | b';' => {
                i += 1;
                Tok::Sym(c as char)
            }
            _ => {
                let ch = text[start..].chars().next().expect("non-empty remainder");
                return Err(syntax(start, "token", format!("`{ch}`")));
            }
        };
        out.push(Token { tok, pos: start });
    }
    out.push(Token { tok: Tok::Eof, pos: text.len() });
    Ok(out)
}
