use std::fmt::Write as _;

use deautoconv::{IterationTrace, Signal};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// One value per line, optionally preceded by a header line `y` (or `x`).
pub fn parse_signal(text: &str) -> Result<Signal, ParseError> {
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if values.is_empty() && matches!(line.trim_matches('"'), "y" | "x") {
            continue;
        }
        let err = |message: String| ParseError {
            line: idx + 1,
            message,
        };
        if line.contains(',') {
            return Err(err("expected a single column".into()));
        }
        let v: f64 = line
            .parse()
            .map_err(|_| err(format!("cannot parse {line:?} as a number")))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(err(format!("{line} is not a finite nonnegative value")));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(ParseError {
            line: 0,
            message: "no values".into(),
        });
    }
    Ok(Signal::new(values).expect("values validated above"))
}

pub fn signal_csv(values: &[f64], header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(h);
        out.push('\n');
    }
    for v in values {
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    out
}

pub fn trace_csv(trace: &IterationTrace) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut out = String::from("t,divergence,gain,w_gain,kkt_residual,mass\n");
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t,
            fmt_f64(r.divergence),
            opt(r.gain),
            opt(r.w_gain),
            fmt_f64(r.kkt_residual),
            fmt_f64(r.mass)
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_and_headed_input() {
        assert_eq!(parse_signal("4\n4\n").unwrap().as_slice(), &[4.0, 4.0]);
        assert_eq!(
            parse_signal("y\n1\n\n2.5e0\n").unwrap().as_slice(),
            &[1.0, 2.5]
        );
        assert_eq!(parse_signal("\"y\"\r\n3\r\n").unwrap().as_slice(), &[3.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(parse_signal("1\n-2\n").unwrap_err().line, 2);
        assert!(parse_signal("1,2\n").is_err());
        assert!(parse_signal("abc\n").is_err());
        assert!(parse_signal("inf\n").is_err());
        assert!(parse_signal("y\n").is_err());
        assert!(parse_signal("").is_err());
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [
            0.1,
            1.0 / 3.0,
            2f64.sqrt() * 1e-300,
            123_456_789.123_456_79,
            0.0,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
        let text = signal_csv(&[0.1, 1.0 / 3.0], Some("y"));
        assert_eq!(parse_signal(&text).unwrap().as_slice(), &[0.1, 1.0 / 3.0]);
    }
}
