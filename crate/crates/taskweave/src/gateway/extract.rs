//! Robust JSON extraction from model output.
//!
//! Models wrap JSON in prose, code fences, or "here you go" chatter. We
//! scan for the first balanced object or array (string- and escape-aware)
//! that parses, and keep scanning past candidates that do not.

use serde_json::Value;

use crate::error::GatewayError;

/// Find and parse the first balanced JSON object/array in `raw`.
pub fn extract_json(raw: &str) -> Result<Value, GatewayError> {
    let bytes = raw.as_bytes();
    let mut saw_opener = false;
    let mut last_parse_error: Option<String> = None;

    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'{' || b == b'[' {
            saw_opener = true;
            if let Some(end) = balanced_end(bytes, i) {
                let span = &raw[i..=end];
                match serde_json::from_str::<Value>(span) {
                    Ok(value) => return Ok(value),
                    Err(e) => {
                        last_parse_error = Some(e.to_string());
                        // A failed candidate may still contain real JSON
                        // deeper in; continue from the next byte.
                    }
                }
            }
        }
        i += 1;
    }

    if !saw_opener {
        Err(GatewayError::NoJsonFound)
    } else {
        Err(GatewayError::MalformedJson(
            last_parse_error.unwrap_or_else(|| "unbalanced braces".to_string()),
        ))
    }
}

/// Index of the byte closing the bracket opened at `start`, honoring JSON
/// string literals and escapes. None when the input ends unbalanced.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' | b'[' => depth += 1,
            b'}' | b']' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return Some(start + offset);
                }
            }
            _ => {}
        }
    }
    None
}

/// Coerce a score field to an integer. Judge prompts show the score slot
/// as a string ("Score from 1 to 5"), so models return "4" as often as 4.
pub fn coerce_integer(value: &Value) -> Option<i64> {
    match value {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Some(i)
            } else {
                n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)
            }
        }
        Value::String(s) => {
            let trimmed = s.trim();
            trimmed.parse::<i64>().ok().or_else(|| {
                trimmed
                    .parse::<f64>()
                    .ok()
                    .filter(|f| f.fract() == 0.0)
                    .map(|f| f as i64)
            })
        }
        _ => None,
    }
}

/// Pull a 1..=5 score (plus optional reason) out of a judge response
/// object.
pub fn parse_score_response(value: &Value) -> Result<(u8, String), String> {
    let obj = value.as_object().ok_or("response is not a JSON object")?;
    let score_value = obj.get("score").ok_or("missing `score` field")?;
    let score = coerce_integer(score_value)
        .ok_or_else(|| format!("`score` not an integer: {score_value}"))?;
    if !(1..=5).contains(&score) {
        return Err(format!("score {score} outside 1..=5"));
    }
    let reason = obj
        .get("reason")
        .and_then(|r| r.as_str())
        .unwrap_or_default()
        .to_string();
    Ok((score as u8, reason))
}

/// Read a yes/no style field, tolerating case and booleans.
pub fn parse_yes_no(value: &Value) -> Option<bool> {
    match value {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_lowercase().as_str() {
            "yes" | "true" => Some(true),
            "no" | "false" => Some(false),
            _ => None,
        },
        _ => None,
    }
}
