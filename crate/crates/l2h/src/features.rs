//! Feature files: a `K=<int> L=<int>` header, then one example per line as
//! `L` comma-separated floats followed by a 1-based integer label.

use std::fmt::Write as _;
use std::path::Path;

use l2h_core::{Dataset, FeatureVector, Label, LabeledExample};

use crate::error::{malformed, read, write, FormatError};
use crate::kv::fmt_float;

pub fn parse(text: &str) -> Result<Dataset, FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "empty feature file"))?;
    let (k, l) = parse_header(header)?;
    let mut examples = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != l + 1 {
            return Err(malformed(
                n,
                format!("expected {} fields, found {}", l + 1, fields.len()),
            ));
        }
        let x = fields[..l]
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(malformed(n, format!("not a finite number: `{f}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let raw: usize = fields[l]
            .parse()
            .map_err(|_| malformed(n, format!("label is not an integer: `{}`", fields[l])))?;
        let y = Label::from_one_based(raw, k)
            .map_err(|_| malformed(n, format!("label {raw} not in 1..={k}")))?;
        examples.push(LabeledExample {
            x: FeatureVector(x),
            y,
        });
    }
    Ok(Dataset::new(examples, k, l)?)
}

fn parse_header(line: &str) -> Result<(usize, usize), FormatError> {
    let mut k = None;
    let mut l = None;
    for tok in line.split_whitespace() {
        match tok.split_once('=') {
            Some(("K", v)) => k = v.parse().ok(),
            Some(("L", v)) => l = v.parse().ok(),
            _ => return Err(malformed(1, format!("unexpected header token `{tok}`"))),
        }
    }
    match (k, l) {
        (Some(k), Some(l)) if k >= 1 && l >= 1 => Ok((k, l)),
        _ => Err(malformed(
            1,
            "header must be `K=<int> L=<int>` with both positive",
        )),
    }
}

pub fn to_text(data: &Dataset) -> String {
    let mut out = format!("K={} L={}\n", data.num_classes(), data.dim());
    for e in data.examples() {
        for v in e.x.as_slice() {
            out.push_str(&fmt_float(*v));
            out.push(',');
        }
        let _ = writeln!(out, "{}", e.y.one_based());
    }
    out
}

pub fn load(path: &Path) -> Result<Dataset, FormatError> {
    parse(&read(path)?)
}

pub fn save(path: &Path, data: &Dataset) -> Result<(), FormatError> {
    write(path, &to_text(data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_file() {
        let d = parse("K=2 L=2\n0.5,1,1\n-1,2e-3,2\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.examples()[1].y, Label(1));
        assert_eq!(parse(&to_text(&d)).unwrap(), d);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(
            parse("K=2 L=2\n1,2\n"),
            Err(FormatError::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            parse("K=2 L=2\n1,x,1\n"),
            Err(FormatError::Malformed { .. })
        ));
        assert!(matches!(
            parse("K=2 L=2\n1,1,3\n"),
            Err(FormatError::Malformed { .. })
        ));
        assert!(matches!(
            parse("K=2 L=2\n1,1,0\n"),
            Err(FormatError::Malformed { .. })
        ));
        assert!(parse("K=2\n1,1\n").is_err());
        assert!(parse("").is_err());
    }
}
