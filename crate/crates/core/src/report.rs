//! Machine-readable check reports.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

/// Named residuals compared against one tolerance. The JSON text has sorted
/// keys at every level, so it is reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub parameters: BTreeMap<String, Value>,
    /// Extra top-level fields a check wants to expose next to the residuals.
    #[serde(flatten)]
    pub details: BTreeMap<String, Value>,
    pub residuals: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(check: impl Into<String>, tolerance: f64) -> Self {
        CheckReport {
            check: check.into(),
            parameters: BTreeMap::new(),
            details: BTreeMap::new(),
            residuals: BTreeMap::new(),
            tolerance,
            pass: true,
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    pub fn detail(&mut self, key: &str, value: impl Into<Value>) {
        self.details.insert(key.to_string(), value.into());
    }

    /// Records a residual and refreshes `pass`. A NaN residual fails.
    pub fn residual(&mut self, key: &str, value: f64) {
        self.residuals.insert(key.to_string(), value);
        self.pass = self.residuals.values().all(|r| *r <= self.tolerance);
    }

    /// Non-finite floats become JSON strings (`"inf"`, `"-inf"`, `"nan"`);
    /// serde_json would otherwise write `null`.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Value::Object(map) = &mut v {
            if let Some(Value::Object(res)) = map.get_mut("residuals") {
                for (k, x) in res.iter_mut() {
                    if x.is_null() {
                        *x = Value::String(non_finite(self.residuals[k]));
                    }
                }
            }
        }
        serde_json::to_string(&v).expect("report serializes")
    }
}

fn non_finite(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_tracks_every_residual() {
        let mut r = CheckReport::new("demo", 1e-8);
        assert!(r.pass);
        r.residual("a", 1e-9);
        assert!(r.pass);
        r.residual("b", 1e-7);
        assert!(!r.pass);
        r.residual("b", 0.0);
        assert!(r.pass);
        r.residual("c", f64::NAN);
        assert!(!r.pass);
    }

    #[test]
    fn json_keys_are_sorted_and_flat() {
        let mut r = CheckReport::new("demo", 0.5).param("seed", 7).param("n", 3);
        r.detail("extra", true);
        r.residual("z", 0.25);
        r.residual("a", f64::INFINITY);
        let text = r.to_json();
        assert_eq!(
            text,
            r#"{"check":"demo","extra":true,"parameters":{"n":3,"seed":7},"pass":false,"residuals":{"a":"inf","z":0.25},"tolerance":0.5}"#
        );
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["extra"], true);
    }
}
