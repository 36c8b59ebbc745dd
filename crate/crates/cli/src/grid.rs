//! Sweep grid parsing.

use std::str::FromStr;

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|_| format!("invalid number {p:?} in {s:?}"))
    };
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, d) = (num(start)?, num(stop)?, num(step)?);
            if !(d > 0.0) || b < a {
                return Err(format!("range {s:?} needs step > 0 and stop >= start"));
            }
            let n = ((b - a) / d + 1e-9).floor() as usize;
            (0..=n).map(|i| a + i as f64 * d).collect()
        }
        [_] => s.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("expected start:stop:step or a list, got {s:?}")),
    };
    if values.is_empty() {
        return Err("empty grid".into());
    }
    Ok(values)
}

/// Comma-separated list of any parseable type.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use spiketrum::Strategy;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_values("100:500:100").unwrap(), vec![100.0, 200.0, 300.0, 400.0, 500.0]);
        assert!(parse_values("1100:100:-100").is_err());
        assert_eq!(parse_values("3,1.5").unwrap(), vec![3.0, 1.5]);
        assert!(parse_values("a:b").is_err());
        assert_eq!(parse_list::<usize>("5,30,100").unwrap(), vec![5, 30, 100]);
        assert_eq!(
            parse_list::<Strategy>("log,linear").unwrap(),
            vec![Strategy::Log, Strategy::Linear]
        );
        assert!(parse_list::<Strategy>("log,cubic").is_err());
    }
}
