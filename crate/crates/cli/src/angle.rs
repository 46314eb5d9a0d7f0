//! Angle arguments: decimal radians or π-fractions such as `pi/8`, `3pi/16`,
//! `3*pi/16` or `π/4`.

use std::f64::consts::PI;

pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t: String = s
        .trim()
        .to_ascii_lowercase()
        .replace('π', "pi")
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    let value = match t.find("pi") {
        None => t
            .parse::<f64>()
            .map_err(|_| format!("not an angle: {s:?}"))?,
        Some(at) => {
            let (head, tail) = (&t[..at], &t[at + 2..]);
            let (neg, head) = match head.strip_prefix('-') {
                Some(h) => (true, h),
                None => (false, head),
            };
            let head = head.strip_suffix('*').unwrap_or(head);
            let num = if head.is_empty() {
                1
            } else {
                head.parse::<u64>()
                    .map_err(|_| format!("bad numerator in {s:?}"))?
            };
            let den = match tail {
                "" => 1,
                _ => tail
                    .strip_prefix('/')
                    .and_then(|d| d.parse::<u64>().ok())
                    .filter(|&d| d > 0)
                    .ok_or_else(|| format!("bad denominator in {s:?}"))?,
            };
            let v = PI * num as f64 / den as f64;
            if neg {
                -v
            } else {
                v
            }
        }
    };
    if !value.is_finite() {
        return Err(format!("not a finite angle: {s:?}"));
    }
    Ok(value)
}
