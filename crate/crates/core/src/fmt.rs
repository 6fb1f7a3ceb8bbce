//! Reproducible float formatting for report outputs.

/// Formats `x` with at most six significant digits, trimming trailing zeros.
///
/// Non-finite values are written as `inf`, `-inf` and `nan`.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.into()
    }
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn formats() {
        assert_eq!(sig6(120.0), "120");
        assert_eq!(sig6(0.5), "0.5");
        assert_eq!(sig6(3.5355339059), "3.53553");
        assert_eq!(sig6(2.6457513110645907), "2.64575");
        assert_eq!(sig6(-0.000012345678), "-1.23457e-5");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(999999.7), "1e6");
        assert_eq!(sig6(0.0001), "0.0001");
        assert_eq!(sig6(f64::INFINITY), "inf");
        assert_eq!(sig6(-0.0), "0");
    }
}
