//! Angle strings: plain radians (`0.785`) or multiples of π such as `pi/4`,
//! `-3pi/4`, `3*pi/2`, `π`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub fn parse_angle(input: &str) -> Result<f64> {
    let s: String = input
        .trim()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    if s.is_empty() {
        return Err(Error::Parse("empty angle".into()));
    }
    let lower = s.to_ascii_lowercase().replace('π', "pi");
    let Some(pos) = lower.find("pi") else {
        return lower
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad angle `{input}`")));
    };
    let (head, tail) = (&lower[..pos], &lower[pos + 2..]);
    let head = head.strip_suffix('*').unwrap_or(head);
    let coef = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad coefficient in angle `{input}`")))?,
    };
    let denom = match tail {
        "" => 1.0,
        t => {
            let d = t
                .strip_prefix('/')
                .ok_or_else(|| Error::Parse(format!("bad angle `{input}`")))?
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad denominator in angle `{input}`")))?;
            if d == 0.0 {
                return Err(Error::Parse(format!("zero denominator in `{input}`")));
            }
            d
        }
    };
    Ok(coef * PI / denom)
}

/// Comma-separated list of angles.
pub fn parse_angle_list(input: &str) -> Result<Vec<f64>> {
    input.split(',').map(parse_angle).collect()
}
