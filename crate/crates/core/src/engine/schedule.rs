use serde::{Deserialize, Serialize};

/// Softmax temperature as a function of the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TauSchedule {
    /// `start * (end/start)^(epoch/horizon)`, held at `end` afterwards.
    Exponential { start: f64, end: f64, horizon: usize },
    Constant { value: f64 },
}

impl TauSchedule {
    pub fn temperature(&self, epoch: usize) -> f64 {
        match *self {
            TauSchedule::Exponential { start, end, horizon } => {
                if horizon == 0 || epoch >= horizon {
                    end
                } else {
                    let frac = epoch as f64 / horizon as f64;
                    (start * (end / start).powf(frac)).max(end)
                }
            }
            TauSchedule::Constant { value } => value,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            TauSchedule::Exponential { start, end, .. } => end > 0.0 && start >= end,
            TauSchedule::Constant { value } => value > 0.0,
        }
    }
}

/// Temperature for `epoch` under `schedule`.
pub fn temperature(epoch: usize, schedule: &TauSchedule) -> f64 {
    schedule.temperature(epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let s = TauSchedule::Exponential {
            start: 5.0,
            end: 0.5,
            horizon: 1000,
        };
        assert_eq!(temperature(0, &s), 5.0);
        assert!((temperature(1000, &s) - 0.5).abs() < 1e-15);
        assert!((temperature(500, &s) - (2.5f64).sqrt()).abs() < 1e-12);
        assert_eq!(temperature(5000, &s), 0.5);
        let c = TauSchedule::Constant { value: 5.0 };
        assert!((0..100).all(|e| temperature(e, &c) == 5.0));
    }

    #[test]
    fn monotone_decay() {
        let s = TauSchedule::Exponential {
            start: 5.0,
            end: 0.5,
            horizon: 37,
        };
        let taus: Vec<f64> = (0..50).map(|e| s.temperature(e)).collect();
        assert!(taus.windows(2).all(|w| w[1] <= w[0]));
        assert!(!TauSchedule::Exponential { start: 0.5, end: 5.0, horizon: 1 }.is_valid());
    }
}
