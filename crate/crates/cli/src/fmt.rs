//! Six-significant-digit rendering for every number the CLI emits.

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const SIG_DIGITS: usize = 6;

/// `x` rounded to six significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap()
}

/// Plain decimal with six significant digits, trailing zeros trimmed;
/// scientific notation outside `[1e-4, 1e9)`.
pub fn sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..9).contains(&mag) {
        return format!("{:.*e}", SIG_DIGITS - 1, x);
    }
    let decimals = (SIG_DIGITS as i32 - 1 - mag).max(0) as usize;
    let s = format!("{:.*}", decimals, round_sig(x));
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig(n.as_f64().unwrap());
            *v = serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to six significant digits, newline-terminated.
pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut v = serde_json::to_value(value).map_err(|e| CliError::Data(e.to_string()))?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_six_significant_digits() {
        assert_eq!(round_sig(15.953_612_3), 15.9536);
        assert_eq!(round_sig(0.000_123_456_78), 0.000_123_457);
        assert_eq!(round_sig(-2.0), -2.0);
        assert_eq!(sig(15.953_612_3), "15.9536");
        assert_eq!(sig(2.0), "2");
        assert_eq!(sig(123_456_789.0), "123457000");
        assert_eq!(sig(154.8e12), "1.54800e14");
        assert_eq!(sig(0.1f32 as f64), "0.1");
    }

    #[test]
    fn json_floats_are_rounded() {
        let s = to_json(&serde_json::json!({"a": 0.1f32, "b": [1.0 / 3.0], "c": 7})).unwrap();
        assert!(s.contains("\"a\": 0.1,"), "{s}");
        assert!(s.contains("0.333333"));
        assert!(s.contains("\"c\": 7"));
    }
}
