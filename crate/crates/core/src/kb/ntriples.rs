//! Line-oriented N-Triples subset parser.
//!
//! One statement per line, terms separated by whitespace, terminated by
//! `" ."`. IRIs in `<>`; literals in double quotes with optional `@lang`
//! or `^^<datatype>` suffix (both stripped — only the lexical form is
//! kept). Blank nodes and multi-line literals are out of scope.

/// Object position of a parsed statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Iri(String),
    Literal(String),
}

impl Term {
    /// The lexical value, brackets/quotes already stripped.
    pub fn as_str(&self) -> &str {
        match self {
            Term::Iri(s) | Term::Literal(s) => s,
        }
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{0}")]
pub struct MalformedTriple(pub String);

/// Parse one physical line. Returns `Ok(None)` for blank lines and `#`
/// comments; malformed statements (missing `" ."` terminator, unbalanced
/// brackets or quotes, wrong term count) are recoverable errors the caller
/// counts and skips.
pub fn parse_triple_line(line: &str) -> Result<Option<Triple>, MalformedTriple> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }

    let Some(body) = trimmed.strip_suffix('.') else {
        return Err(MalformedTriple("no terminating \" .\"".into()));
    };
    if !body.ends_with(|c: char| c.is_whitespace()) {
        return Err(MalformedTriple("no whitespace before terminating '.'".into()));
    }
    let mut cur = Cursor { rest: body };

    let subject = cur.parse_iri()?;
    let predicate = cur.parse_iri()?;
    let object = cur.parse_object()?;
    cur.skip_ws();
    if !cur.rest.is_empty() {
        return Err(MalformedTriple(format!(
            "unexpected trailing content: {:?}",
            cur.rest
        )));
    }

    Ok(Some(Triple {
        subject,
        predicate,
        object,
    }))
}

struct Cursor<'a> {
    rest: &'a str,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn parse_iri(&mut self) -> Result<String, MalformedTriple> {
        self.skip_ws();
        let Some(after) = self.rest.strip_prefix('<') else {
            return Err(MalformedTriple(format!(
                "expected '<' at {:?}",
                head(self.rest)
            )));
        };
        let Some(end) = after.find('>') else {
            return Err(MalformedTriple("unbalanced '<'".into()));
        };
        let iri = &after[..end];
        self.rest = &after[end + 1..];
        Ok(iri.to_owned())
    }

    fn parse_object(&mut self) -> Result<Term, MalformedTriple> {
        self.skip_ws();
        if self.rest.starts_with('<') {
            return Ok(Term::Iri(self.parse_iri()?));
        }
        let Some(after) = self.rest.strip_prefix('"') else {
            return Err(MalformedTriple(format!(
                "expected IRI or literal at {:?}",
                head(self.rest)
            )));
        };

        // Scan for the closing quote, honoring backslash escapes.
        let mut value = String::new();
        let mut chars = after.char_indices();
        let close = loop {
            let Some((i, c)) = chars.next() else {
                return Err(MalformedTriple("unbalanced '\"'".into()));
            };
            match c {
                '"' => break i,
                '\\' => match chars.next() {
                    Some((_, 'n')) => value.push('\n'),
                    Some((_, 't')) => value.push('\t'),
                    Some((_, 'r')) => value.push('\r'),
                    Some((_, '"')) => value.push('"'),
                    Some((_, '\\')) => value.push('\\'),
                    Some((_, 'u')) | Some((_, 'U')) => {
                        let width = if after.as_bytes()[i + 1] == b'u' { 4 } else { 8 };
                        let hex_start = i + 2;
                        let hex = after
                            .get(hex_start..hex_start + width)
                            .ok_or_else(|| MalformedTriple("truncated \\u escape".into()))?;
                        let code = u32::from_str_radix(hex, 16)
                            .map_err(|_| MalformedTriple("bad \\u escape".into()))?;
                        value.push(
                            char::from_u32(code)
                                .ok_or_else(|| MalformedTriple("bad \\u code point".into()))?,
                        );
                        for _ in 0..width {
                            chars.next();
                        }
                    }
                    Some((_, other)) => {
                        // Unknown escape: keep the character as-is.
                        value.push(other);
                    }
                    None => return Err(MalformedTriple("trailing backslash".into())),
                },
                c => value.push(c),
            }
        };

        // Optional @lang or ^^<datatype> suffix, both discarded.
        let mut tail = &after[close + 1..];
        if let Some(after_at) = tail.strip_prefix('@') {
            let end = after_at
                .find(|c: char| c.is_whitespace())
                .unwrap_or(after_at.len());
            tail = &after_at[end..];
        } else if let Some(after_caret) = tail.strip_prefix("^^") {
            let mut cur = Cursor { rest: after_caret };
            cur.parse_iri()?;
            tail = cur.rest;
        }
        self.rest = tail;
        Ok(Term::Literal(value))
    }
}

fn head(s: &str) -> &str {
    &s[..s.len().min(20)]
}
