//! Poisson mixing weights for uniformization.
//!
//! `exp(Q t) = sum_k Pois(k; Lambda t) * P^k` with `P = I + Q / Lambda`. The
//! weights are generated from the mode outwards by the ratio recurrence and
//! normalised over the retained window `[left, right]`, which is widened until
//! both omitted tails are below `tail_tol` (relative to the retained mass).

#[derive(Debug, Clone)]
pub struct PoissonWeights {
    pub left: usize,
    /// Normalised weights for `k = left ..= left + weights.len() - 1`.
    pub weights: Vec<f64>,
}

impl PoissonWeights {
    pub fn new(mean: f64, tail_tol: f64) -> Self {
        assert!(mean >= 0.0 && mean.is_finite(), "poisson mean must be finite and >= 0");
        if mean == 0.0 {
            return PoissonWeights {
                left: 0,
                weights: vec![1.0],
            };
        }
        let mode = mean.floor() as usize;

        let mut right_part = Vec::new();
        let mut w = 1.0_f64;
        let mut total = 1.0_f64;
        let mut k = mode;
        loop {
            w *= mean / (k + 1) as f64;
            k += 1;
            right_part.push(w);
            total += w;
            let ratio = mean / (k + 1) as f64;
            if ratio < 1.0 && w * ratio / (1.0 - ratio) < tail_tol * total {
                break;
            }
        }

        let mut left_part = Vec::new();
        let mut w = 1.0_f64;
        let mut k = mode;
        while k > 0 {
            w *= k as f64 / mean;
            k -= 1;
            left_part.push(w);
            total += w;
            let ratio = k as f64 / mean;
            if ratio < 1.0 && w * ratio / (1.0 - ratio) < tail_tol * total {
                break;
            }
        }

        let left = k;
        let mut weights: Vec<f64> = left_part.into_iter().rev().collect();
        weights.push(1.0);
        weights.extend(right_part);
        for w in &mut weights {
            *w /= total;
        }
        PoissonWeights { left, weights }
    }

    pub fn right(&self) -> usize {
        self.left + self.weights.len() - 1
    }

    /// Weight for `k`, zero outside the window.
    pub fn get(&self, k: usize) -> f64 {
        if k < self.left {
            0.0
        } else {
            self.weights.get(k - self.left).copied().unwrap_or(0.0)
        }
    }
}
