use crate::error::{Error, Result};

/// Hyper-parameters shared by the LDS and recognition training loops.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Upper bound on optimizer steps across all epochs.
    pub max_steps: Option<u64>,
    /// Sequences per optimizer step when training the LDS alone.
    pub batch_size: usize,
    pub seed: u64,
    pub lambda_id: f64,
    pub lambda_soft: f64,
    pub lambda_motion: f64,
    pub lambda_pose: f64,
    pub margin: f64,
    /// Training window length; longer sequences are cropped at a random offset each epoch.
    pub sequence_length: Option<usize>,
    pub identities_per_batch: usize,
    pub sequences_per_identity: usize,
    /// Global gradient-norm clipping threshold, off unless set.
    pub grad_clip: Option<f64>,
    /// Whether recognition training also updates the LDS parameters.
    pub train_lds_jointly: bool,
    pub early_stop_patience: usize,
    pub early_stop_tolerance: f64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
}

pub const DEFAULT_GRAD_CLIP: f64 = 10.0;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            max_epochs: 100,
            max_steps: None,
            batch_size: 8,
            seed: 0,
            lambda_id: 1.0,
            lambda_soft: 0.06,
            lambda_motion: 1.0,
            lambda_pose: 1000.0,
            margin: 1.0,
            sequence_length: None,
            identities_per_batch: 8,
            sequences_per_identity: 2,
            grad_clip: None,
            train_lds_jointly: false,
            early_stop_patience: 10,
            early_stop_tolerance: 1e-6,
            embedding_dim: 64,
            hidden_dim: 2048,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("learning_rate", self.learning_rate), ("early_stop_tolerance", self.early_stop_tolerance)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let weights = [
            ("lambda_id", self.lambda_id),
            ("lambda_soft", self.lambda_soft),
            ("lambda_motion", self.lambda_motion),
            ("lambda_pose", self.lambda_pose),
            ("margin", self.margin),
        ];
        for (name, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid("batch_size, max_epochs, embedding_dim and hidden_dim must be positive"));
        }
        if self.identities_per_batch < 2 || self.sequences_per_identity < 2 {
            return Err(Error::invalid("batches need at least 2 identities with 2 sequences each"));
        }
        if let Some(n) = self.sequence_length {
            if n < 2 {
                return Err(Error::invalid(format!("sequence_length must be at least 2, got {n}")));
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::invalid(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// Sets one field from its `key=value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse().map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
        }
        let opt = |v: &str| matches!(v.trim(), "" | "none" | "off");
        match key.trim() {
            "learning_rate" | "lr" => self.learning_rate = num(key, value)?,
            "max_epochs" | "epochs" => self.max_epochs = num(key, value)?,
            "max_steps" => self.max_steps = if opt(value) { None } else { Some(num(key, value)?) },
            "batch_size" => self.batch_size = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "lambda_id" => self.lambda_id = num(key, value)?,
            "lambda_soft" => self.lambda_soft = num(key, value)?,
            "lambda_motion" => self.lambda_motion = num(key, value)?,
            "lambda_pose" => self.lambda_pose = num(key, value)?,
            "margin" => self.margin = num(key, value)?,
            "sequence_length" => self.sequence_length = if opt(value) { None } else { Some(num(key, value)?) },
            "identities_per_batch" => self.identities_per_batch = num(key, value)?,
            "sequences_per_identity" => self.sequences_per_identity = num(key, value)?,
            "grad_clip" => self.grad_clip = if opt(value) { None } else { Some(num(key, value)?) },
            "train_lds_jointly" => self.train_lds_jointly = num(key, value)?,
            "early_stop_patience" => self.early_stop_patience = num(key, value)?,
            "early_stop_tolerance" => self.early_stop_tolerance = num(key, value)?,
            "embedding_dim" => self.embedding_dim = num(key, value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// `key=value` lines for every field, in a stable order.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".to_string());
        vec![
            ("learning_rate", self.learning_rate.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("max_steps", opt(self.max_steps.map(|v| v.to_string()))),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("lambda_id", self.lambda_id.to_string()),
            ("lambda_soft", self.lambda_soft.to_string()),
            ("lambda_motion", self.lambda_motion.to_string()),
            ("lambda_pose", self.lambda_pose.to_string()),
            ("margin", self.margin.to_string()),
            ("sequence_length", opt(self.sequence_length.map(|v| v.to_string()))),
            ("identities_per_batch", self.identities_per_batch.to_string()),
            ("sequences_per_identity", self.sequences_per_identity.to_string()),
            ("grad_clip", opt(self.grad_clip.map(|v| v.to_string()))),
            ("train_lds_jointly", self.train_lds_jointly.to_string()),
            ("early_stop_patience", self.early_stop_patience.to_string()),
            ("early_stop_tolerance", self.early_stop_tolerance.to_string()),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_settings() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate, 5e-5);
        assert_eq!(c.max_epochs, 100);
        assert_eq!(c.lambda_soft, 0.06);
        assert_eq!(c.lambda_motion, 1.0);
        assert_eq!(c.lambda_pose, 1000.0);
        assert_eq!(c.margin, 1.0);
        assert_eq!((c.identities_per_batch, c.sequences_per_identity), (8, 2));
        assert_eq!(c.grad_clip, None);
        c.validate().unwrap();
    }

    #[test]
    fn key_values_round_trip() {
        let mut c = TrainConfig { learning_rate: 1e-3, grad_clip: Some(DEFAULT_GRAD_CLIP), ..Default::default() };
        c.sequence_length = Some(60);
        let mut d = TrainConfig::default();
        for (k, v) in c.to_key_values() {
            d.set(k, &v).unwrap();
        }
        assert_eq!(c, d);
        assert!(d.set("nonsense", "1").is_err());
        assert!(d.set("lr", "abc").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { margin: -1.0, ..Default::default() },
            TrainConfig { identities_per_batch: 1, ..Default::default() },
            TrainConfig { sequence_length: Some(1), ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
