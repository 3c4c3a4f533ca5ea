//! Plain-text match files: one `x1 y1 x2 y2` correspondence per line, blank
//! lines and lines starting with `#` ignored.

use std::fmt::Write as _;

use thiserror::Error;

use crate::epipolar::PointMatch;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("need at least 8 matches, found {0}")]
    TooFewMatches(usize),
}

/// Parses every match in `text` without enforcing a minimum count.
pub fn parse_matches_unchecked(text: &str) -> Result<Vec<PointMatch>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(ParseError::Syntax {
                line: i + 1,
                message: format!("expected 4 values, found {}", fields.len()),
            });
        }
        let mut v = [0.0; 4];
        for (slot, tok) in v.iter_mut().zip(&fields) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ParseError::Syntax {
                    line: i + 1,
                    message: format!("invalid number {tok:?}"),
                })?;
        }
        out.push(PointMatch::new(v[0], v[1], v[2], v[3]));
    }
    Ok(out)
}

/// Parses a match file; at least 8 matches are required.
pub fn parse_matches(text: &str) -> Result<Vec<PointMatch>, ParseError> {
    let out = parse_matches_unchecked(text)?;
    if out.len() < 8 {
        return Err(ParseError::TooFewMatches(out.len()));
    }
    Ok(out)
}

/// Serializes matches with shortest round-trip float formatting.
pub fn write_matches(matches: &[PointMatch]) -> String {
    let mut s = String::new();
    for m in matches {
        writeln!(s, "{} {} {} {}", m.q.x, m.q.y, m.qp.x, m.qp.y).expect("writing to a String");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_matches_are_accepted() {
        let m = parse_matches(&"0 0 0 0\n".repeat(8)).unwrap();
        assert_eq!(m.len(), 8);
        assert!(m.iter().all(|p| p.q.z == 1.0 && p.q.x == 0.0));
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!("# header\n\n{}  \n", "1 2 3 4\n".repeat(8));
        assert_eq!(parse_matches(&text).unwrap().len(), 8);
    }

    #[test]
    fn arity_error_reports_line() {
        let text = "# c\n1 2 3 4\n1 2 3\n";
        assert_eq!(
            parse_matches(text).unwrap_err(),
            ParseError::Syntax {
                line: 3,
                message: "expected 4 values, found 3".into()
            }
        );
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(matches!(parse_matches_unchecked("1 2 nan 4"), Err(ParseError::Syntax { line: 1, .. })));
        assert!(matches!(parse_matches_unchecked("1 2 x 4"), Err(ParseError::Syntax { line: 1, .. })));
    }

    #[test]
    fn too_few() {
        assert_eq!(parse_matches("1 2 3 4\n").unwrap_err(), ParseError::TooFewMatches(1));
    }

    #[test]
    fn round_trip() {
        let m = vec![PointMatch::new(0.1, -2.5e-300, 1e300, 123.456); 8];
        let back = parse_matches(&write_matches(&m)).unwrap();
        assert_eq!(back, m);
    }
}
