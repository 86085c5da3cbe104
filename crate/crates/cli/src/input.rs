//! Data files: one entry per line, `a`, `a+bi`, `a-bi`, `bi` or `?` for a
//! missing value. Blank lines and lines starting with `#` are ignored.

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entries {
    pub values: Vec<Option<Complex64>>,
    /// Whether any entry was written with an imaginary part.
    pub complex: bool,
}

impl Entries {
    pub fn has_missing(&self) -> bool {
        self.values.iter().any(Option::is_none)
    }

    pub fn to_real(&self) -> Vec<Option<f64>> {
        self.values.iter().map(|v| v.map(|z| z.re)).collect()
    }
}

fn number(s: &str, line: usize, column: usize) -> Result<f64, ParseError> {
    let v: f64 = s.parse().map_err(|_| ParseError {
        line,
        column,
        message: format!("invalid number {s:?}"),
    })?;
    if !v.is_finite() {
        return Err(ParseError {
            line,
            column,
            message: format!("non-finite value {s:?}"),
        });
    }
    Ok(v)
}

/// Byte offset of the sign that starts the imaginary part, if any.
fn imaginary_split(body: &str) -> Option<usize> {
    let bytes = body.as_bytes();
    (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'))
}

fn parse_token(
    tok: &str,
    line: usize,
    column: usize,
) -> Result<(Option<Complex64>, bool), ParseError> {
    if tok == "?" {
        return Ok((None, false));
    }
    let Some(body) = tok.strip_suffix('i') else {
        return Ok((Some(Complex64::new(number(tok, line, column)?, 0.0)), false));
    };
    let unit = |s: &str, col: usize| match s {
        "" | "+" => Ok(1.0),
        "-" => Ok(-1.0),
        _ => number(s, line, col),
    };
    let z = match imaginary_split(body) {
        Some(k) => Complex64::new(
            number(&body[..k], line, column)?,
            unit(&body[k..], column + k)?,
        ),
        None => Complex64::new(0.0, unit(body, column)?),
    };
    Ok((Some(z), true))
}

pub fn parse_entries(text: &str) -> Result<Entries, ParseError> {
    let mut values = Vec::new();
    let mut complex = false;
    for (i, raw) in text.lines().enumerate() {
        let tok = raw.trim();
        if tok.is_empty() || tok.starts_with('#') {
            continue;
        }
        let column = raw.len() - raw.trim_start().len() + 1;
        if let Some(k) = tok.find(char::is_whitespace) {
            return Err(ParseError {
                line: i + 1,
                column: column + k,
                message: "expected a single entry per line".into(),
            });
        }
        let (v, c) = parse_token(tok, i + 1, column)?;
        complex |= c;
        values.push(v);
    }
    if values.is_empty() {
        return Err(ParseError {
            line: text.lines().count().max(1),
            column: 1,
            message: "no entries".into(),
        });
    }
    Ok(Entries { values, complex })
}

/// Real vector without missing entries, such as a weight file.
pub fn parse_real(text: &str) -> Result<Vec<f64>, ParseError> {
    let entries = parse_entries(text)?;
    let mut line_of = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim().starts_with('#'))
        .map(|(i, l)| (i + 1, l.len() - l.trim_start().len() + 1));
    entries
        .values
        .iter()
        .map(|v| {
            let (line, column) = line_of.next().unwrap_or((0, 0));
            match v {
                Some(z) if z.im == 0.0 => Ok(z.re),
                Some(_) => Err(ParseError {
                    line,
                    column,
                    message: "expected a real value".into(),
                }),
                None => Err(ParseError {
                    line,
                    column,
                    message: "missing values are not allowed here".into(),
                }),
            }
        })
        .collect()
}

pub fn format_complex(z: Complex64) -> String {
    if z.im < 0.0 || (z.im == 0.0 && z.im.is_sign_negative()) {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}
