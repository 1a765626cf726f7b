//! Report plumbing: provenance-tagged numbers, tri-state verdicts and CSV
//! helpers shared by the machine-readable outputs.

use std::fmt::Write as _;

use serde::{Serialize, Serializer};

/// How a reported number was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Discrete computation on a mesh/grid.
    Numeric,
    /// Exact formula evaluated in floating point.
    ClosedForm,
    /// Alternative form of a formula, kept for comparison only.
    AlternateFormula,
    /// Arithmetic combination of other reported values.
    Derived,
    /// Echo of user input.
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tagged {
    pub value: f64,
    pub source: Source,
}

impl Tagged {
    pub fn numeric(value: f64) -> Self {
        Self { value, source: Source::Numeric }
    }

    pub fn closed(value: f64) -> Self {
        Self { value, source: Source::ClosedForm }
    }

    pub fn derived(value: f64) -> Self {
        Self { value, source: Source::Derived }
    }

    pub fn input(value: f64) -> Self {
        Self { value, source: Source::Input }
    }

    pub fn alternate(value: f64) -> Self {
        Self { value, source: Source::AlternateFormula }
    }
}

/// A decision that abstains inside its tolerance band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    True,
    False,
    Inconclusive,
}

impl Verdict {
    /// `value < threshold` with an abstention band of half-width `tol`.
    pub fn less_than(value: f64, threshold: f64, tol: f64) -> Self {
        if value < threshold - tol {
            Verdict::True
        } else if value > threshold + tol {
            Verdict::False
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::False, _) | (_, Verdict::False) => Verdict::False,
            (Verdict::True, Verdict::True) => Verdict::True,
            _ => Verdict::Inconclusive,
        }
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Verdict::True
        } else {
            Verdict::False
        }
    }

    pub fn is_true(self) -> bool {
        self == Verdict::True
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Verdict::True => s.serialize_bool(true),
            Verdict::False => s.serialize_bool(false),
            Verdict::Inconclusive => s.serialize_str("inconclusive"),
        }
    }
}

/// Numeric value next to the closed form it should reproduce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDelta {
    pub quantity: String,
    pub numeric: f64,
    pub closed_form: f64,
    pub delta: f64,
}

impl OracleDelta {
    pub fn new(quantity: &str, numeric: f64, closed_form: f64) -> Self {
        Self { quantity: quantity.into(), numeric, closed_form, delta: numeric - closed_form }
    }
}

/// Machine-output float format: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV table; `rows` are already formatted cells.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|c| csv_escape(c)).collect();
        writeln!(s, "{}", cells.join(",")).unwrap();
    }
    s
}

fn csv_escape(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_band() {
        assert_eq!(Verdict::less_than(1.0, 2.0, 0.1), Verdict::True);
        assert_eq!(Verdict::less_than(2.05, 2.0, 0.1), Verdict::Inconclusive);
        assert_eq!(Verdict::less_than(3.0, 2.0, 0.1), Verdict::False);
        assert_eq!(Verdict::True.and(Verdict::Inconclusive), Verdict::Inconclusive);
        assert_eq!(Verdict::Inconclusive.and(Verdict::False), Verdict::False);
        assert_eq!(serde_json::to_string(&Verdict::Inconclusive).unwrap(), "\"inconclusive\"");
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 6.02e23, 5e-324] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_quotes_commas() {
        let t = csv_table(&["a", "b"], &[vec!["x,y".into(), "1".into()]]);
        assert_eq!(t, "a,b\n\"x,y\",1\n");
    }
}
