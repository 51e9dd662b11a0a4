// SPDX-License-Identifier: Apache-2.0

//! Standard allocation rules, their scaled versions, inverses and the
//! cumulative inverse integral G.

use std::f64::consts::E;
use std::fmt;
use std::io::Read;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// e - 1, the zero point of the canonical rules.
pub const E_MINUS_1: f64 = E - 1.0;

/// A nonincreasing curve f with f(0) = 1 that reaches 0 at its zero point.
#[derive(Debug, Clone, PartialEq)]
pub enum StandardRule {
    /// 1 on [0, e-1), 0 afterwards.
    Uniform,
    /// 1 on [0, t), t on [t, 1), 0 afterwards.
    Step {
        t: f64,
    },
    /// ln(e - x) on [0, e-1].
    LogOptimal,
    /// 1 - x on [0, 1].
    Linear,
    Tabulated(TabulatedRule),
}

impl StandardRule {
    pub fn step(t: f64) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(invalid("t", format!("step height must lie in (0, 1), got {t}")));
        }
        Ok(StandardRule::Step { t })
    }

    /// Parses `uniform`, `log`, `linear`, `step:T` or `tabulated:PATH`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (spec, None),
        };
        match (head.to_ascii_lowercase().as_str(), arg) {
            ("uniform", None) => Ok(StandardRule::Uniform),
            ("log" | "log-optimal" | "logoptimal", None) => Ok(StandardRule::LogOptimal),
            ("linear", None) => Ok(StandardRule::Linear),
            ("step", Some(t)) => {
                let t: f64 = t.parse().map_err(|_| invalid("rule", format!("bad step height `{t}`")))?;
                StandardRule::step(t)
            }
            ("tabulated", Some(path)) => Ok(StandardRule::Tabulated(TabulatedRule::from_csv_path(path)?)),
            _ => Err(invalid("rule", format!("unknown rule `{spec}`"))),
        }
    }

    /// Smallest rate at which the allocation is 0.
    pub fn zero_point(&self) -> f64 {
        match self {
            StandardRule::Uniform | StandardRule::LogOptimal => E_MINUS_1,
            StandardRule::Step { .. } | StandardRule::Linear => 1.0,
            StandardRule::Tabulated(t) => t.zero_point(),
        }
    }

    /// True when f has no jumps, so the budget equation is continuous in r.
    pub fn is_continuous(&self) -> bool {
        matches!(self, StandardRule::LogOptimal | StandardRule::Linear | StandardRule::Tabulated(_))
    }

    /// Rates where f or its derivative is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            StandardRule::Uniform | StandardRule::LogOptimal | StandardRule::Linear => vec![self.zero_point()],
            StandardRule::Step { t } => vec![*t, 1.0],
            StandardRule::Tabulated(t) => t.knots.iter().map(|k| k.0).collect(),
        }
    }

    /// f(x), right-continuous at jumps.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match self {
            StandardRule::Uniform => {
                if x < E_MINUS_1 {
                    1.0
                } else {
                    0.0
                }
            }
            StandardRule::Step { t } => {
                if x < *t {
                    1.0
                } else if x < 1.0 {
                    *t
                } else {
                    0.0
                }
            }
            StandardRule::LogOptimal => {
                let h = E_MINUS_1 - x;
                if h > 0.5 {
                    (E - x).ln().min(1.0)
                } else if h > 0.0 {
                    h.ln_1p()
                } else {
                    0.0
                }
            }
            StandardRule::Linear => (1.0 - x).max(0.0),
            StandardRule::Tabulated(t) => t.eval(x),
        }
    }

    /// g(y): the largest rate whose allocation is at least y. g(0) is the zero point.
    pub fn inverse(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        if y == 0.0 {
            return self.zero_point();
        }
        match self {
            StandardRule::Uniform => E_MINUS_1,
            StandardRule::Step { t } => {
                if y > *t {
                    *t
                } else {
                    1.0
                }
            }
            StandardRule::LogOptimal => (E - y.exp()).max(0.0),
            StandardRule::Linear => 1.0 - y,
            StandardRule::Tabulated(t) => t.inverse(y),
        }
    }

    /// G(y) = ∫_0^y g, which also equals ∫_0^∞ min(f(x), y) dx.
    pub fn big_g(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        match self {
            StandardRule::Uniform => E_MINUS_1 * y,
            StandardRule::Step { t } => {
                if y <= *t {
                    y
                } else {
                    t + (y - t) * t
                }
            }
            StandardRule::LogOptimal => E * y - y.exp() + 1.0,
            StandardRule::Linear => y - 0.5 * y * y,
            StandardRule::Tabulated(t) => t.big_g(y),
        }
    }

    pub fn scaled(&self, r: f64) -> ScaledRule<'_> {
        ScaledRule { base: self, r }
    }
}

impl fmt::Display for StandardRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StandardRule::Uniform => write!(f, "uniform"),
            StandardRule::Step { t } => write!(f, "step:{t}"),
            StandardRule::LogOptimal => write!(f, "log"),
            StandardRule::Linear => write!(f, "linear"),
            StandardRule::Tabulated(t) => write!(f, "tabulated[{}]", t.knots.len()),
        }
    }
}

/// f stretched horizontally by `r`: f_r(x) = f(x / r).
#[derive(Debug, Clone, Copy)]
pub struct ScaledRule<'a> {
    pub base: &'a StandardRule,
    pub r: f64,
}

impl ScaledRule<'_> {
    pub fn eval(&self, x: f64) -> f64 {
        self.base.eval(x / self.r)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        self.r * self.base.inverse(y)
    }

    pub fn zero_point(&self) -> f64 {
        self.r * self.base.zero_point()
    }
}

/// Piecewise-linear rule through (rate, allocation) knots; 1 before the first
/// knot and 0 from the last knot on.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedRule {
    knots: Vec<(f64, f64)>,
}

impl TabulatedRule {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidTable("need at least two knots".into()));
        }
        for (i, &(x, y)) in knots.iter().enumerate() {
            if !(x.is_finite() && x >= 0.0) || !(0.0..=1.0).contains(&y) {
                return Err(Error::InvalidTable(format!("knot {i} = ({x}, {y}) out of range")));
            }
            if i > 0 {
                let (px, py) = knots[i - 1];
                if x <= px {
                    return Err(Error::InvalidTable(format!("rates must strictly increase at knot {i}")));
                }
                if y > py {
                    return Err(Error::InvalidTable(format!("allocation increases at knot {i}")));
                }
            }
        }
        if knots[0].1 != 1.0 {
            return Err(Error::InvalidTable("first allocation must be 1".into()));
        }
        if knots[knots.len() - 1].1 != 0.0 {
            return Err(Error::InvalidTable("last allocation must be 0".into()));
        }
        Ok(TabulatedRule { knots })
    }

    /// Reads a two-column (rate, allocation) CSV; a non-numeric first row is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut knots = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidTable(e.to_string()))?;
            if rec.len() != 2 {
                return Err(Error::InvalidTable(format!("row {row}: expected 2 columns, got {}", rec.len())));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(x), Ok(y)) => knots.push((x, y)),
                _ if row == 0 => continue,
                _ => return Err(Error::InvalidTable(format!("row {row}: non-numeric value"))),
            }
        }
        TabulatedRule::new(knots)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::Io(e.to_string()))?;
        TabulatedRule::from_csv_reader(file)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn zero_point(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    fn eval(&self, x: f64) -> f64 {
        let idx = self.knots.partition_point(|k| k.0 <= x);
        if idx == 0 {
            return 1.0;
        }
        if idx == self.knots.len() {
            return 0.0;
        }
        let (xa, ya) = self.knots[idx - 1];
        let (xb, yb) = self.knots[idx];
        ya + (yb - ya) * (x - xa) / (xb - xa)
    }

    fn inverse(&self, y: f64) -> f64 {
        // last knot whose allocation is still >= y
        let k = self.knots.iter().rposition(|kn| kn.1 >= y).unwrap_or(0);
        if k + 1 == self.knots.len() {
            return self.knots[k].0;
        }
        let (xa, ya) = self.knots[k];
        let (xb, yb) = self.knots[k + 1];
        xa + (ya - y) / (ya - yb) * (xb - xa)
    }

    fn big_g(&self, y: f64) -> f64 {
        let mut area = y * self.knots[0].0;
        for w in self.knots.windows(2) {
            let ((xa, ya), (xb, yb)) = (w[0], w[1]);
            area += min_area(xa, ya, xb, yb, y);
        }
        area
    }

    /// ∫_c^∞ f.
    pub(crate) fn tail_area(&self, c: f64) -> f64 {
        let mut area = 0.0;
        let first = self.knots[0].0;
        if c < first {
            area += first - c;
        }
        for w in self.knots.windows(2) {
            let ((xa, ya), (xb, yb)) = (w[0], w[1]);
            if xb <= c {
                continue;
            }
            if xa >= c {
                area += 0.5 * (ya + yb) * (xb - xa);
            } else {
                let yc = ya + (yb - ya) * (c - xa) / (xb - xa);
                area += 0.5 * (yc + yb) * (xb - c);
            }
        }
        area
    }
}

/// ∫ min(segment, level) over one linear segment with ya >= yb.
fn min_area(xa: f64, ya: f64, xb: f64, yb: f64, level: f64) -> f64 {
    let w = xb - xa;
    if yb >= level {
        level * w
    } else if ya <= level {
        0.5 * (ya + yb) * w
    } else {
        let xc = xa + (ya - level) / (ya - yb) * w;
        level * (xc - xa) + 0.5 * (level + yb) * (xb - xc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn log_optimal_endpoints() {
        let f = StandardRule::LogOptimal;
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(E_MINUS_1), 0.0);
        let c = E - (1.0 - 1.0 / E).exp();
        assert!(close(f.eval(c), 1.0 - 1.0 / E, 1e-14));
        assert!(close(f.inverse(0.0), E_MINUS_1, 0.0));
        assert!(close(f.inverse(1.0), 0.0, 1e-15));
        assert!(close(f.inverse(1.0 - 1.0 / E), 0.836_685_440_927_4, 1e-12));
    }

    #[test]
    fn big_g_values() {
        assert_eq!(StandardRule::LogOptimal.big_g(0.0), 0.0);
        assert!(close(StandardRule::LogOptimal.big_g(1.0), 1.0, 1e-15));
        assert!(close(StandardRule::Uniform.big_g(1.0), E_MINUS_1, 1e-15));
        let t = 0.4;
        assert!(close(StandardRule::step(t).unwrap().big_g(1.0), 2.0 * t - t * t, 1e-15));
    }

    #[test]
    fn jumps_are_right_continuous() {
        let u = StandardRule::Uniform;
        assert_eq!(u.eval(E_MINUS_1), 0.0);
        assert_eq!(u.eval(E_MINUS_1 - 1e-12), 1.0);
        assert_eq!(u.inverse(0.3), E_MINUS_1);
        let s = StandardRule::step(0.55).unwrap();
        assert_eq!(s.eval(0.55), 0.55);
        assert_eq!(s.eval(0.549), 1.0);
        assert_eq!(s.eval(1.0), 0.0);
        assert_eq!(s.inverse(0.9), 0.55);
        assert_eq!(s.inverse(0.55), 1.0);
    }

    #[test]
    fn scaled_rule_stretches() {
        let f = StandardRule::LogOptimal;
        let s = f.scaled(3.0);
        assert_eq!(s.eval(0.0), 1.0);
        assert_eq!(s.eval(3.0 * E_MINUS_1), 0.0);
        assert!(close(s.eval(1.5), f.eval(0.5), 1e-15));
        assert!(close(s.inverse(0.5), 3.0 * f.inverse(0.5), 1e-15));
    }

    #[test]
    fn tabulated_matches_linear() {
        let t = StandardRule::Tabulated(TabulatedRule::new(vec![(0.0, 1.0), (1.0, 0.0)]).unwrap());
        let l = StandardRule::Linear;
        for i in 0..=20 {
            let x = i as f64 * 0.06;
            assert!(close(t.eval(x), l.eval(x), 1e-15));
            let y = i as f64 / 20.0;
            assert!(close(t.inverse(y), l.inverse(y), 1e-15));
            assert!(close(t.big_g(y), l.big_g(y), 1e-15));
        }
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(TabulatedRule::new(vec![(0.0, 1.0)]).is_err());
        assert!(TabulatedRule::new(vec![(0.0, 1.0), (0.0, 0.0)]).is_err());
        assert!(TabulatedRule::new(vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.7), (3.0, 0.0)]).is_err());
        assert!(TabulatedRule::new(vec![(0.0, 0.9), (1.0, 0.0)]).is_err());
        assert!(TabulatedRule::new(vec![(0.0, 1.0), (1.0, 0.1)]).is_err());
    }

    #[test]
    fn tabulated_csv_with_header() {
        let text = "rate,allocation\n0,1\n0.5,0.5\n2,0\n";
        let t = TabulatedRule::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(t.knots().len(), 3);
        assert!(TabulatedRule::from_csv_reader("0,1\nx,0\n".as_bytes()).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!(StandardRule::parse("log").unwrap(), StandardRule::LogOptimal);
        assert_eq!(StandardRule::parse("step:0.55").unwrap(), StandardRule::Step { t: 0.55 });
        assert!(StandardRule::parse("step:1.5").is_err());
        assert!(StandardRule::parse("nope").is_err());
        let r = StandardRule::step(0.3).unwrap();
        assert_eq!(StandardRule::parse(&r.to_string()).unwrap(), r);
    }
}
