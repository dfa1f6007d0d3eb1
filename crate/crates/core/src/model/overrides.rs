use serde_json::Value;

use super::ConfigDocuments;
use crate::error::{Error, Result};

/// A `key=value` override. The key is a dotted path into one of the config
/// documents, optionally prefixed with `robot.`, `gait.` or `scenario.`.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: Value,
}

/// Parses `key=value`. The value is read as JSON when possible, otherwise as a
/// bare string.
pub fn parse_override(text: &str) -> Result<Override> {
    let (key, raw) = text.split_once('=').ok_or_else(|| Error::Override {
        key: text.to_string(),
        reason: "expected key=value".into(),
    })?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Override {
            key: text.to_string(),
            reason: "empty key".into(),
        });
    }
    let raw = raw.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(Override {
        key: key.to_string(),
        value,
    })
}

impl std::str::FromStr for Override {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_override(s)
    }
}

fn lookup<'a>(doc: &'a mut Value, path: &[&str]) -> Option<&'a mut Value> {
    let mut node = doc;
    for seg in path {
        node = match node {
            Value::Object(map) => map.get_mut(*seg)?,
            Value::Array(items) => items.get_mut(seg.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(node)
}

fn same_kind(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(_), Value::Number(_))
        | (Value::Bool(_), Value::Bool(_))
        | (Value::String(_), Value::String(_))
        | (Value::Null, _)
        | (_, Value::Null) => true,
        (Value::Array(x), Value::Array(y)) => match (x.first(), y.first()) {
            (Some(p), Some(q)) => same_kind(p, q),
            _ => true,
        },
        _ => false,
    }
}

/// Applies one override. Bare keys must resolve in exactly one document; the
/// replacement must have the same JSON kind as the value it replaces.
pub fn apply_override(docs: &mut ConfigDocuments, ov: &Override) -> Result<()> {
    let err = |reason: String| Error::Override {
        key: ov.key.clone(),
        reason,
    };
    let segments: Vec<&str> = ov.key.split('.').collect();
    let (targets, path): (Vec<&mut Value>, &[&str]) = match segments[0] {
        "robot" => (vec![&mut docs.robot], &segments[1..]),
        "gait" => (vec![&mut docs.gait], &segments[1..]),
        "scenario" => (vec![&mut docs.scenario], &segments[1..]),
        _ => (vec![&mut docs.robot, &mut docs.gait, &mut docs.scenario], &segments[..]),
    };
    if path.is_empty() {
        return Err(err("cannot replace a whole document".into()));
    }
    let mut hits: Vec<&mut Value> = targets.into_iter().filter_map(|d| lookup(d, path)).collect();
    let slot = match hits.len() {
        0 => return Err(err("no such field in the robot, gait or scenario config".into())),
        1 => hits.pop().unwrap(),
        _ => return Err(err("ambiguous key; prefix it with robot., gait. or scenario.".into())),
    };
    if slot.is_object() {
        return Err(err("cannot replace a whole object".into()));
    }
    if !same_kind(slot, &ov.value) {
        return Err(err(format!("type mismatch: cannot replace {slot} with {}", ov.value)));
    }
    *slot = ov.value.clone();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConfigSet;

    fn apply(text: &str) -> Result<ConfigSet> {
        let mut docs = ConfigDocuments::bundled();
        docs.apply(&parse_override(text)?)?;
        docs.into_configs()
    }

    #[test]
    fn bare_and_prefixed_keys() {
        assert_eq!(apply("wind_mps=1.5").unwrap().scenario.wind_mps, 1.5);
        assert_eq!(apply("scenario.wind_mps=0.5").unwrap().scenario.wind_mps, 0.5);
        assert_eq!(apply("robot.n_elements=8").unwrap().robot.n_elements, 8);
        let cs = apply("waveform.shoulder.amplitude_rad=0.3").unwrap();
        match cs.gait.waveform {
            crate::model::Waveform::Sinusoid { shoulder, .. } => assert_eq!(shoulder.amplitude_rad, 0.3),
            _ => unreachable!(),
        }
        assert_eq!(apply("initial_attitude_rad.1=-0.1").unwrap().scenario.initial_attitude_rad[1], -0.1);
    }

    #[test]
    fn zero_span_fails_validation() {
        let err = apply("span_m=0").unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "span_m"));
    }

    #[test]
    fn type_and_name_checks() {
        assert!(matches!(apply("span_m=wide"), Err(Error::Override { .. })));
        assert!(matches!(apply("spam_m=0.3"), Err(Error::Override { .. })));
        assert!(matches!(apply("span_m"), Err(Error::Override { .. })));
        assert!(matches!(apply("wing=1"), Err(Error::Override { .. })));
    }

    #[test]
    fn mode_is_a_string_override() {
        assert_eq!(apply("mode=free_flight").unwrap().scenario.mode, crate::model::Mode::FreeFlight);
        assert!(matches!(apply("mode=hovering"), Err(Error::Parse { .. })));
    }
}
