use super::ast::Span;
use super::error::FrontendError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(u64),
    /// Punctuation and operators, stored as their source text.
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest first so that "<<" wins over "<".
const PUNCT: &[&str] = &[
    "<<", ">>", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", ";", ",", ".", "=", "<",
    ">", "+", "-", "*", "&", "|", "^", "!", "~", "?", ":", "@",
];

pub fn lex(src: &str) -> Result<Vec<Token>, FrontendError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, n: usize| {
        for k in 0..n {
            if chars[*i + k] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        }
        *i += n;
    };

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let start = Span::new(line, col);
            advance(&mut i, &mut line, &mut col, 2);
            loop {
                if i + 1 >= chars.len() {
                    return Err(FrontendError::syntax(start, "unterminated comment"));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    advance(&mut i, &mut line, &mut col, 2);
                    break;
                }
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let span = Span::new(line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            let n = j - i;
            advance(&mut i, &mut line, &mut col, n);
            out.push(Token {
                tok: Tok::Ident(word),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let text: String = chars[i..j].iter().filter(|c| **c != '_').collect();
            let parsed = if let Some(h) = text.strip_prefix("0x") {
                u64::from_str_radix(h, 16)
            } else if let Some(b) = text.strip_prefix("0b") {
                u64::from_str_radix(b, 2)
            } else {
                text.parse::<u64>()
            };
            let value = parsed
                .map_err(|_| FrontendError::syntax(span, format!("malformed number `{text}`")))?;
            let n = j - i;
            advance(&mut i, &mut line, &mut col, n);
            out.push(Token {
                tok: Tok::Num(value),
                span,
            });
            continue;
        }
        let rest = &chars[i..];
        let p = PUNCT.iter().find(|p| {
            let pc: Vec<char> = p.chars().collect();
            rest.len() >= pc.len() && rest[..pc.len()] == pc[..]
        });
        match p {
            Some(p) => {
                advance(&mut i, &mut line, &mut col, p.len());
                out.push(Token {
                    tok: Tok::Punct(p),
                    span,
                });
            }
            None => {
                return Err(FrontendError::syntax(
                    span,
                    format!("unexpected character `{c}`"),
                ));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_columns_and_longest_match() {
        let toks = lex("a <<= 0x1f\n  b").unwrap();
        assert_eq!(toks[1].tok, Tok::Punct("<<"));
        assert_eq!(toks[2].tok, Tok::Punct("="));
        assert_eq!(toks[3].tok, Tok::Num(31));
        assert_eq!((toks[4].span.line, toks[4].span.col), (2, 3));
    }

    #[test]
    fn skips_comments() {
        let toks = lex("// hi\n/* a\n b */ x").unwrap();
        assert_eq!(toks.len(), 2);
        assert_eq!(toks[0].span.line, 3);
    }

    #[test]
    fn rejects_division() {
        assert!(matches!(lex("a / b"), Err(FrontendError::Syntax { .. })));
    }
}
