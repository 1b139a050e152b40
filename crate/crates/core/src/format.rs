/// Formats `x` with 17 significant digits, in the style of C's `%.17g`.
///
/// Seventeen significant digits are enough for any `f64` to round-trip
/// through text exactly. Trailing zeros of the fraction are dropped.
pub(crate) fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        strip_fraction_zeros(format!("{:.*}", decimals, x))
    } else {
        let mantissa = strip_fraction_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

fn strip_fraction_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// A JSON number token carrying the 17-significant-digit text of `x`.
pub(crate) fn json_number(x: f64) -> Box<serde_json::value::RawValue> {
    let text = if x.is_finite() { fmt_f64(x) } else { "null".to_string() };
    serde_json::value::RawValue::from_string(text).expect("formatted float is valid JSON")
}
