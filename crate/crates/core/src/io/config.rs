use crate::error::{Error, Result};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyValue {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// `key = value` lines; blank lines and lines starting with `#` are ignored.
pub fn parse_key_values(text: &str) -> Result<Vec<KeyValue>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(i + 1, format!("expected key=value, found {line:?}")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::parse(i + 1, "empty key"));
        }
        out.push(KeyValue { line: i + 1, key: key.to_string(), value: v.trim().to_string() });
    }
    Ok(out)
}

/// Applies a configuration file on top of `config`, then validates the result.
pub fn apply_train_config(text: &str, config: &mut TrainConfig) -> Result<()> {
    for kv in parse_key_values(text)? {
        config.set(&kv.key, &kv.value).map_err(|e| Error::parse(kv.line, e.to_string()))?;
    }
    config.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn applies_and_reports_lines() {
        let mut c = TrainConfig::default();
        apply_train_config("# comment\n\nlr = 0.001\nmax_epochs=3\ngrad_clip=none\n", &mut c).unwrap();
        assert_eq!((c.learning_rate, c.max_epochs, c.grad_clip), (0.001, 3, None));
        assert!(matches!(apply_train_config("lr=1\nnot a pair\n", &mut c), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(apply_train_config("\nbogus=1\n", &mut c), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_key_values("x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(apply_train_config("learning_rate=-1\n", &mut TrainConfig::default()).is_err());
    }

    #[test]
    fn defaults_round_trip_through_text() {
        let c = TrainConfig { seed: 7, max_steps: Some(4), ..Default::default() };
        let text: String = c.to_key_values().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let mut back = TrainConfig::default();
        apply_train_config(&text, &mut back).unwrap();
        assert_eq!(back, c);
    }
}
