//! Problem-file diagnostics without running any optimization.

use serde::Serialize;
use serde_json::Value;
use sideinfo::gaussian::{cond_rd, Cov2};
use sideinfo::JointDist;

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Sccsi,
    Wz,
    Functional,
    Gauss,
}

/// Which solver the problem is meant for, to check its extra hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Request {
    EtaLower,
    EtaUpper,
    EtaSp,
    ThetaLower,
    ThetaUpper,
    GaussUpper,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub kind: Kind,
    pub request: Option<Request>,
    pub ok: bool,
    pub violations: Vec<Violation>,
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.out.push(Violation { field: field.into(), message: message.into() });
    }

    fn number(&mut self, v: &Value, field: &str) -> Option<f64> {
        match v.get(field).and_then(Value::as_f64) {
            Some(x) if x.is_finite() => Some(x),
            Some(_) => {
                self.push(field, "must be finite");
                None
            }
            None => {
                self.push(field, "missing or not a number");
                None
            }
        }
    }

    /// Checks a joint given as `{"axis_sizes": [..], "probs": nested}`.
    fn joint(&mut self, v: &Value, field: &str) -> Option<JointDist> {
        let Some(j) = v.get(field) else {
            self.push(field, "missing");
            return None;
        };
        let sizes: Option<Vec<usize>> = j
            .get("axis_sizes")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|s| s.as_u64().map(|s| s as usize)).collect());
        let Some(sizes) = sizes else {
            self.push(field, "axis_sizes missing");
            return None;
        };
        let mut flat = Vec::new();
        fn walk(v: &Value, flat: &mut Vec<Option<f64>>) {
            match v {
                Value::Array(a) => a.iter().for_each(|x| walk(x, flat)),
                other => flat.push(other.as_f64()),
            }
        }
        if let Some(p) = j.get("probs") {
            walk(p, &mut flat);
        }
        let expected: usize = sizes.iter().product();
        if flat.len() != expected || flat.iter().any(Option::is_none) {
            self.push(field, format!("expected {expected} numeric probabilities matching axis_sizes {sizes:?}"));
            return None;
        }
        let flat: Vec<f64> = flat.into_iter().map(Option::unwrap).collect();
        if let Some(x) = flat.iter().find(|x| !(**x >= 0.0)) {
            self.push(field, format!("negative or invalid probability {x}"));
            return None;
        }
        let sum: f64 = flat.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            self.push(field, format!("probabilities sum to {sum}, expected 1"));
            return None;
        }
        match JointDist::new(sizes, flat) {
            Ok(d) => Some(d),
            Err(e) => {
                self.push(field, e.to_string());
                None
            }
        }
    }

    fn stochastic_rows(&mut self, v: &Value, field: &str) {
        let Some(rows) = v.get(field).and_then(Value::as_array) else { return };
        for (i, r) in rows.iter().enumerate() {
            let vals: Vec<f64> = r.as_array().map(|a| a.iter().filter_map(Value::as_f64).collect()).unwrap_or_default();
            let sum: f64 = vals.iter().sum();
            if vals.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > SUM_TOL {
                self.push(field, format!("row {i} is not a probability vector (sum {sum})"));
            }
        }
    }
}

pub fn diagnose(v: &Value, kind: Kind, request: Option<Request>) -> Diagnostics {
    let mut c = Checker { out: Vec::new() };
    match kind {
        Kind::Sccsi => {
            let joint = c.joint(v, "p_xy");
            for f in ["r1", "r2"] {
                if let Some(r) = c.number(v, f) {
                    if r < 0.0 {
                        c.push(f, "rate must be non-negative");
                    }
                }
            }
            if let Some(j) = &joint {
                if j.num_axes() != 2 {
                    c.push("p_xy", "must have two axes (X, Y)");
                } else if request == Some(Request::EtaUpper) && j.probs().iter().any(|&p| p <= 0.0) {
                    c.push("p_xy", "eta_upper hypothesis violated: every P_XY(x, y) must be positive");
                }
            }
        }
        Kind::Wz | Kind::Functional => {
            let joint = c.joint(v, "p_xy");
            c.number(v, "rate");
            if kind == Kind::Wz {
                if let Some(d) = c.number(v, "delta") {
                    if d < 0.0 {
                        c.push("delta", "distortion level must be non-negative");
                    }
                }
                match v.get("dist").and_then(Value::as_array) {
                    None => c.push("dist", "missing distortion table"),
                    Some(rows) => {
                        let nx = joint.as_ref().map(|j| j.axis_sizes()[0]);
                        if nx.is_some_and(|nx| nx != rows.len()) {
                            c.push("dist", "row count must equal |X|");
                        }
                        if rows.iter().flat_map(|r| r.as_array().into_iter().flatten()).any(|x| !(x.as_f64().unwrap_or(-1.0) >= 0.0)) {
                            c.push("dist", "entries must be non-negative numbers");
                        }
                    }
                }
            } else if v.get("g").and_then(Value::as_array).is_none() {
                c.push("g", "missing function table");
            }
            c.stochastic_rows(v, "channel");
        }
        Kind::Gauss => {
            let zeta = c.number(v, "zeta");
            let delta = c.number(v, "delta");
            let rate = c.number(v, "rate");
            if zeta.is_some_and(|z| z.abs() >= 1.0) {
                c.push("zeta", "|zeta| must be below 1");
            }
            if delta.is_some_and(|d| d <= 0.0) {
                c.push("delta", "must be positive");
            }
            if let Some(pi) = v.get("pi") {
                let m: Option<Vec<Vec<f64>>> = serde_json::from_value(pi.clone()).ok();
                match m.filter(|m| m.len() == 2 && m.iter().all(|r| r.len() == 2)) {
                    Some(m) => {
                        if let Err(e) = Cov2::new([[m[0][0], m[0][1]], [m[1][0], m[1][1]]]) {
                            c.push("pi", e.to_string());
                        }
                    }
                    None => c.push("pi", "must be a 2x2 matrix"),
                }
            }
            if request == Some(Request::GaussUpper) {
                if let (Some(z), Some(d), Some(r)) = (zeta, delta, rate) {
                    if z.abs() < 1.0 && d > 0.0 {
                        let rd = cond_rd(&Cov2 { m: [[1.0, z], [z, 1.0]] }, d);
                        if r <= rd {
                            c.push("rate", format!("upper-bound hypothesis violated: rate must exceed the conditional rate-distortion value {rd}"));
                        }
                    }
                }
            }
        }
    }
    Diagnostics { kind, request, ok: c.out.is_empty(), violations: c.out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn row_sum_violation_is_named() {
        let v = json!({"p_xy": {"axis_sizes": [2, 2], "probs": [[0.4, 0.1], [0.1, 0.3]]}, "r1": 0.5, "r2": 0.5});
        let d = diagnose(&v, Kind::Sccsi, None);
        assert!(!d.ok);
        assert!(d.violations[0].message.contains("sum to"));
    }

    #[test]
    fn zero_entry_blocks_eta_upper_only() {
        let v = json!({"p_xy": {"axis_sizes": [2, 2], "probs": [[0.5, 0.0], [0.1, 0.4]]}, "r1": 0.5, "r2": 0.5});
        assert!(diagnose(&v, Kind::Sccsi, Some(Request::EtaLower)).ok);
        let d = diagnose(&v, Kind::Sccsi, Some(Request::EtaUpper));
        assert!(d.violations[0].message.contains("hypothesis violated"));
    }

    #[test]
    fn non_psd_pi_is_named() {
        let v = json!({"zeta": 0.7, "delta": 0.4, "rate": 0.3, "pi": [[1.0, 2.0], [2.0, 1.0]]});
        let d = diagnose(&v, Kind::Gauss, None);
        assert_eq!(d.violations[0].field, "pi");
        assert!(d.violations[0].message.contains("semidefinite"));
    }

    #[test]
    fn rate_below_conditional_rd_fails_upper() {
        let v = json!({"zeta": 0.7, "delta": 0.4, "rate": 0.1});
        assert!(diagnose(&v, Kind::Gauss, None).ok);
        assert!(!diagnose(&v, Kind::Gauss, Some(Request::GaussUpper)).ok);
    }
}
