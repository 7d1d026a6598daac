use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingMode {
    Always,
    InverseSigmoid,
    Linear,
}

/// Probability of feeding the ground-truth frame to the decoder, by training step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherForcingSchedule {
    pub mode: ForcingMode,
    /// Decay constant: steps scale for inverse-sigmoid, steps to reach the floor for linear.
    pub k: f64,
    pub floor: f64,
}

impl Default for TeacherForcingSchedule {
    fn default() -> Self {
        TeacherForcingSchedule {
            mode: ForcingMode::InverseSigmoid,
            k: 200.0,
            floor: 0.0,
        }
    }
}

impl TeacherForcingSchedule {
    pub fn always() -> Self {
        TeacherForcingSchedule {
            mode: ForcingMode::Always,
            ..Self::default()
        }
    }

    pub fn probability(&self, step: usize) -> f64 {
        let s = step as f64;
        let p = match self.mode {
            ForcingMode::Always => return 1.0,
            ForcingMode::InverseSigmoid => {
                let e = (s / self.k).exp();
                if e.is_finite() {
                    self.k / (self.k + e)
                } else {
                    0.0
                }
            }
            ForcingMode::Linear => 1.0 - s / self.k,
        };
        p.clamp(self.floor, 1.0)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.k > 0.0 && self.k.is_finite()) {
            v.push(format!("teacher.k must be positive, got {}", self.k));
        }
        if !(0.0..=1.0).contains(&self.floor) {
            v.push(format!("teacher.floor must lie in [0, 1], got {}", self.floor));
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn always_is_one() {
        let s = TeacherForcingSchedule::always();
        assert!((0..5000).step_by(97).all(|t| s.probability(t) == 1.0));
    }

    #[test]
    fn inverse_sigmoid_values() {
        let s = TeacherForcingSchedule::default();
        assert!((s.probability(0) - 200.0 / 201.0).abs() < 1e-12);
        assert!((s.probability(1000) - 200.0 / (200.0 + 5f64.exp())).abs() < 1e-12);
        assert_eq!(s.probability(10_000_000), 0.0);
    }

    #[test]
    fn linear_hits_floor() {
        let s = TeacherForcingSchedule {
            mode: ForcingMode::Linear,
            k: 100.0,
            floor: 0.25,
        };
        assert_eq!(s.probability(0), 1.0);
        assert_eq!(s.probability(50), 0.5);
        assert_eq!(s.probability(90), 0.25);
    }
}
