//! SNR grid and list parsing.

use crate::{CliError, CliResult};

fn number(s: &str) -> CliResult<f64> {
    let v: f64 = s.trim().parse().map_err(|_| CliError::Invalid(format!("'{s}' is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Invalid(format!("'{s}' is not finite")))
    }
}

/// `start:stop:step` with both ends included, or a single value.
pub fn parse_snr_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![number(v)?]),
        [a, b, c] => {
            let (start, stop, step) = (number(a)?, number(b)?, number(c)?);
            if step <= 0.0 || stop < start {
                return Err(CliError::Invalid(format!("grid '{text}' needs step > 0 and stop >= start")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if n > 10_000 {
                return Err(CliError::Invalid(format!("grid '{text}' has {n} points")));
            }
            Ok((0..n).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(CliError::Invalid(format!("grid '{text}' is not start:stop:step"))),
    }
}

/// Comma-separated values.
pub fn parse_ebn0_list(text: &str) -> CliResult<Vec<f64>> {
    let v = text.split(',').map(number).collect::<CliResult<Vec<_>>>()?;
    if v.is_empty() {
        return Err(CliError::Invalid("empty E_b/N_0 list".into()));
    }
    Ok(v)
}
