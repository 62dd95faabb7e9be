use crate::Error;

/// Parse a duration such as `200us`, `1.5ms`, `2s` or a bare number of
/// seconds. Negative values parse; callers decide whether they are allowed.
pub fn parse_duration(text: &str) -> Result<f64, Error> {
    let s = text.trim();
    let (number, scale) = if let Some(n) = s.strip_suffix("us") {
        (n, 1e-6)
    } else if let Some(n) = s.strip_suffix("µs") {
        (n, 1e-6)
    } else if let Some(n) = s.strip_suffix("ms") {
        (n, 1e-3)
    } else if let Some(n) = s.strip_suffix("ns") {
        (n, 1e-9)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, 1.0)
    } else {
        (s, 1.0)
    };
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| Error::InvalidDuration(text.to_string()))?;
    if !value.is_finite() {
        return Err(Error::InvalidDuration(text.to_string()));
    }
    Ok(if scale == 1.0 { value } else { value * scale })
}

/// Shortest text that parses back to exactly `seconds`.
pub fn format_duration(seconds: f64) -> String {
    format!("{seconds:?}s")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units() {
        assert_eq!(parse_duration("200us").unwrap(), 200.0 * 1e-6);
        assert_eq!(parse_duration("1ms").unwrap(), 1e-3);
        assert_eq!(parse_duration("2s").unwrap(), 2.0);
        assert_eq!(parse_duration("0.25").unwrap(), 0.25);
        assert_eq!(parse_duration("-1ms").unwrap(), -1e-3);
        assert!(parse_duration("3 fortnights").is_err());
        assert!(parse_duration("").is_err());
    }

    #[test]
    fn formatted_durations_parse_back_exactly() {
        for v in [1e-3, 2e-4, 0.1 + 0.2, 8.5e-3, 1.0 / 3.0] {
            assert_eq!(parse_duration(&format_duration(v)).unwrap(), v);
        }
    }
}
