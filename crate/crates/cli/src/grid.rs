//! Grids given as `a,b,c` lists or `start:stop:points[:log]` ranges.

use crate::error::CliError;

pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    if text.contains(':') {
        return parse_range(text);
    }
    text.split(',').map(|s| parse_number(s.trim())).collect()
}

fn parse_number(s: &str) -> Result<f64, CliError> {
    let v: f64 = s.parse().map_err(|_| CliError::Input(format!("not a number: `{s}`")))?;
    if !v.is_finite() {
        return Err(CliError::Input(format!("not a finite number: `{s}`")));
    }
    Ok(v)
}

fn parse_range(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let log = match parts.as_slice() {
        [_, _, _] => false,
        [_, _, _, "log"] => true,
        [_, _, _, "lin"] => false,
        _ => return Err(CliError::Input(format!("expected start:stop:points[:log], got `{text}`"))),
    };
    let start = parse_number(parts[0])?;
    let stop = parse_number(parts[1])?;
    let points: usize = parts[2]
        .parse()
        .map_err(|_| CliError::Input(format!("point count must be a whole number, got `{}`", parts[2])))?;
    if log && !(start > 0.0 && stop > 0.0) {
        return Err(CliError::Input("a log range needs positive end points".into()));
    }
    let at = |i: usize| -> f64 {
        if points == 1 {
            return start;
        }
        let u = i as f64 / (points - 1) as f64;
        if log {
            (start.ln() + u * (stop.ln() - start.ln())).exp()
        } else {
            start + u * (stop - start)
        }
    };
    let mut grid: Vec<f64> = (0..points).map(at).collect();
    // Pin the end point against rounding in exp/ln.
    if points > 1 {
        grid[points - 1] = stop;
    }
    Ok(grid)
}

/// Integers from a comma list.
pub fn parse_counts(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Input(format!("not a whole number: `{}`", s.trim())))
        })
        .collect()
}

/// Positive, strictly ascending.
pub fn require_ascending(name: &str, grid: &[f64], allow_zero: bool) -> Result<(), CliError> {
    if grid.iter().any(|&g| g < 0.0 || (!allow_zero && g == 0.0)) {
        return Err(CliError::Input(format!("{name} grid must be positive")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Input(format!("{name} grid must be strictly ascending")));
    }
    Ok(())
}
