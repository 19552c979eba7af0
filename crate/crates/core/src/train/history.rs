/// Per-epoch loss components; unused components stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recons: f64,
    pub linearity: f64,
    pub recons_rec: f64,
    pub triplet_shape: f64,
    pub triplet_motion: f64,
    pub triplet_gait: f64,
    pub identity: f64,
    pub soft: f64,
    pub total: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str =
        "epoch,l_recons,l_linearity,l_recons_rec,l_triplet_shape,l_triplet_motion,l_triplet_gait,l_id,l_soft,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.recons,
            self.linearity,
            self.recons_rec,
            self.triplet_shape,
            self.triplet_motion,
            self.triplet_gait,
            self.identity,
            self.soft,
            self.total
        )
    }

    pub(crate) fn accumulate(&mut self, other: &EpochRecord, weight: f64) {
        self.recons += weight * other.recons;
        self.linearity += weight * other.linearity;
        self.recons_rec += weight * other.recons_rec;
        self.triplet_shape += weight * other.triplet_shape;
        self.triplet_motion += weight * other.triplet_motion;
        self.triplet_gait += weight * other.triplet_gait;
        self.identity += weight * other.identity;
        self.soft += weight * other.soft;
        self.total += weight * other.total;
    }
}

/// Tracks the "relative improvement below tolerance for `patience` epochs" stop rule.
#[derive(Debug, Clone)]
pub(crate) struct EarlyStop {
    patience: usize,
    tolerance: f64,
    previous: Option<f64>,
    stalled: usize,
}

impl EarlyStop {
    pub fn new(patience: usize, tolerance: f64) -> Self {
        Self { patience, tolerance, previous: None, stalled: 0 }
    }

    /// Records an epoch loss; returns true when training should stop.
    pub fn update(&mut self, loss: f64) -> bool {
        if let Some(prev) = self.previous {
            let improvement = (prev - loss) / prev.abs().max(f64::MIN_POSITIVE);
            if improvement < self.tolerance {
                self.stalled += 1;
            } else {
                self.stalled = 0;
            }
        }
        self.previous = Some(loss);
        self.patience > 0 && self.stalled >= self.patience
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stop_after_patience_flat_epochs() {
        let mut s = EarlyStop::new(3, 1e-6);
        assert!(!s.update(1.0));
        assert!(!s.update(0.5));
        assert!(!s.update(0.5));
        assert!(!s.update(0.5));
        assert!(s.update(0.5));
        let mut s = EarlyStop::new(2, 1e-6);
        for l in [1.0, 0.9, 0.8, 0.7] {
            assert!(!s.update(l));
        }
    }

    #[test]
    fn csv_row_has_header_arity() {
        let r = EpochRecord { epoch: 3, total: 1.5, ..Default::default() };
        assert_eq!(r.csv_row().split(',').count(), EpochRecord::CSV_HEADER.split(',').count());
    }
}
