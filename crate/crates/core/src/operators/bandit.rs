use serde::{Deserialize, Serialize};

/// UCB1 arm selector over exponentially averaged success rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcbBandit {
    rates: Vec<f64>,
    pulls: Vec<u64>,
    total: u64,
    c: f64,
    alpha: f64,
}

impl UcbBandit {
    pub fn new(arms: usize, c: f64, alpha: f64) -> Self {
        assert!(arms > 0, "bandit needs at least one arm");
        assert!((0.0..=1.0).contains(&alpha) && c >= 0.0);
        Self {
            rates: vec![0.0; arms],
            pulls: vec![0; arms],
            total: 0,
            c,
            alpha,
        }
    }

    /// `c = sqrt(2)`, `alpha = 0.05`.
    pub fn with_defaults(arms: usize) -> Self {
        Self::new(arms, std::f64::consts::SQRT_2, 0.05)
    }

    pub fn arms(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    pub fn total_pulls(&self) -> u64 {
        self.total
    }

    /// Unpulled arms first (lowest index), then the highest upper confidence bound.
    pub fn select(&self) -> usize {
        if let Some(a) = self.pulls.iter().position(|&n| n == 0) {
            return a;
        }
        let ln_t = (self.total as f64).ln();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (a, (&rate, &n)) in self.rates.iter().zip(&self.pulls).enumerate() {
            let score = rate + self.c * (ln_t / n as f64).sqrt();
            if score > best_score {
                best = a;
                best_score = score;
            }
        }
        best
    }

    /// Counts a pull without an outcome yet; used to plan a whole batch ahead.
    pub fn note_pull(&mut self, arm: usize) {
        self.pulls[arm] += 1;
        self.total += 1;
    }

    pub(crate) fn record(&mut self, arm: usize, success: bool) {
        let s = if success { 1.0 } else { 0.0 };
        self.rates[arm] = (1.0 - self.alpha) * self.rates[arm] + self.alpha * s;
    }
}

/// Moves the arm's rate towards the outcome and counts the pull.
pub fn ucb_update(bandit: &mut UcbBandit, arm: usize, success: bool) {
    bandit.record(arm, success);
    bandit.note_pull(arm);
}
