use serde::{Deserialize, Serialize};

/// Patience-based stopping on validation Dice. Only a strictly larger value
/// counts as an improvement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub patience: usize,
    pub best_metric: f64,
    /// Zero-based epoch of `best_metric`; `None` before the first update.
    pub best_epoch: Option<usize>,
    pub epochs_since_improvement: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopState {
    pub fn new(patience: usize) -> Self {
        EarlyStopState {
            patience,
            best_metric: f64::NEG_INFINITY,
            best_epoch: None,
            epochs_since_improvement: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, metric: f64) -> StopDecision {
        let improved = metric > self.best_metric;
        if improved {
            self.best_metric = metric;
            self.best_epoch = Some(epoch);
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        StopDecision {
            improved,
            stop: self.epochs_since_improvement >= self.patience,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improving_never_stops() {
        let mut s = EarlyStopState::new(2);
        for e in 0..20 {
            assert!(!s.update(e, e as f64).stop);
        }
    }

    #[test]
    fn stops_after_patience_flat_epochs() {
        let mut s = EarlyStopState::new(10);
        let mut stopped_at = None;
        for epoch in 1..=30 {
            let v = if epoch <= 3 { epoch as f64 } else { 3.0 };
            if s.update(epoch, v).stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(13));
        assert_eq!(s.best_epoch, Some(3));
    }

    #[test]
    fn ties_are_not_improvements() {
        let mut s = EarlyStopState::new(5);
        s.update(0, 0.5);
        assert!(!s.update(1, 0.5).improved);
        assert_eq!(s.epochs_since_improvement, 1);
    }
}
