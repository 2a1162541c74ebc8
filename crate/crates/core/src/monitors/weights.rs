/// Importance weights kept in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights {
    log: Vec<f64>,
}

impl LogWeights {
    pub fn uniform(n: usize) -> Self {
        LogWeights {
            log: vec![-(n as f64).ln(); n],
        }
    }

    pub fn from_weights(w: &[f64]) -> Self {
        LogWeights {
            log: w.iter().map(|x| x.ln()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn add(&mut self, i: usize, log_likelihood: f64) {
        self.log[i] += log_likelihood;
    }

    /// Shifts so the weights sum to one. Returns false when every weight
    /// vanished (all `-inf` or NaN), leaving the weights untouched.
    pub fn normalize(&mut self) -> bool {
        let max = self
            .log
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return false;
        }
        let sum: f64 = self
            .log
            .iter()
            .map(|v| if v.is_nan() { 0.0 } else { (v - max).exp() })
            .sum();
        let shift = max + sum.ln();
        for v in &mut self.log {
            *v = if v.is_nan() { f64::NEG_INFINITY } else { *v - shift };
        }
        true
    }

    pub fn normalized(&self) -> Vec<f64> {
        let mut copy = self.clone();
        if !copy.normalize() {
            return vec![1.0 / self.len() as f64; self.len()];
        }
        copy.log.iter().map(|v| v.exp()).collect()
    }

    /// `1 / Σ w²` of the normalized weights.
    pub fn effective_sample_size(&self) -> f64 {
        let w = self.normalized();
        1.0 / w.iter().map(|x| x * x).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_survives_large_offsets() {
        let mut w = LogWeights::uniform(3);
        w.add(0, -2000.0);
        w.add(1, -2000.0 + 2f64.ln());
        w.add(2, f64::NEG_INFINITY);
        assert!(w.normalize());
        let n = w.normalized();
        assert!((n[0] - 1.0 / 3.0).abs() < 1e-12 && (n[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(n[2], 0.0);
    }

    #[test]
    fn all_vanished_is_reported() {
        let mut w = LogWeights::uniform(2);
        w.add(0, f64::NEG_INFINITY);
        w.add(1, f64::NAN);
        assert!(!w.normalize());
    }

    #[test]
    fn ess_of_uniform_is_count() {
        assert!((LogWeights::uniform(7).effective_sample_size() - 7.0).abs() < 1e-9);
        let w = LogWeights::from_weights(&[1.0, 0.0, 0.0]);
        assert!((w.effective_sample_size() - 1.0).abs() < 1e-12);
    }
}
