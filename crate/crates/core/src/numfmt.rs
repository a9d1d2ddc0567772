//! Fixed significant-digit formatting for CSV and JSON output.

use serde::Serializer;

/// Rounds `x` to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), x);
    s.parse().unwrap_or(x)
}

/// Formats `x` with `digits` significant digits, plain notation for moderate
/// magnitudes and scientific notation otherwise.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..9).contains(&exp) {
        let s = format!("{:.*e}", digits.saturating_sub(1), x);
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        return format!("{}e{e}", trim_zeros(mantissa));
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, x);
    // "-0.000" style outputs read back as zero anyway; normalize the sign.
    if s.trim_start_matches('-')
        .chars()
        .all(|ch| ch == '0' || ch == '.')
    {
        return "0".to_string();
    }
    trim_zeros(&s).to_string()
}

/// Drops trailing fractional zeros (and a bare trailing point).
fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn ser_sig12<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*x, 12))
}

pub fn ser_sig12_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_f64(round_sig(*v, 12)),
        None => s.serialize_none(),
    }
}

pub fn ser_sig12_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| round_sig(*x, 12)))
}

pub fn ser_sig12_opt_vec<S: Serializer>(xs: &[Option<f64>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| x.map(|v| round_sig(v, 12))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(fmt_sig(123.456789012, 9), "123.456789");
        assert_eq!(fmt_sig(-2.5, 9), "-2.5");
        assert_eq!(fmt_sig(0.0, 9), "0");
        assert_eq!(fmt_sig(100.0, 9), "100");
        assert_eq!(fmt_sig(0.814, 12), "0.814");
        assert_eq!(fmt_sig(1.5e-7, 9), "1.5e-7");
    }

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(1.0 / 9.0, 12), 0.111111111111);
        assert_eq!(round_sig(0.25, 12), 0.25);
    }
}
