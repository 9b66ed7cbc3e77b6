use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Two-state participation chain: probabilities of forecasting next period
/// given that the expert did (`stay`) or did not (`enter`) forecast now.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateChain {
    pub stay: f64,
    pub enter: f64,
}

impl TwoStateChain {
    /// Long-run share of periods in which the expert participates.
    pub fn stationary(&self) -> f64 {
        self.enter / (1.0 - self.stay + self.enter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Participation {
    /// Share of experts designated frequent participants (rounded).
    pub frequent_share: f64,
    pub frequent: TwoStateChain,
    pub infrequent: TwoStateChain,
}

impl Default for Participation {
    fn default() -> Self {
        Self {
            frequent_share: 0.4,
            frequent: TwoStateChain { stay: 0.95, enter: 0.5 },
            infrequent: TwoStateChain { stay: 0.5, enter: 0.2 },
        }
    }
}

/// An `n x p` availability mask.
///
/// A random `frequent_share` of the experts is marked frequent; each
/// (variable, expert) cell is present with the stationary participation
/// probability of the expert's class, independently across variables. A
/// variable left without any expert is redrawn.
pub fn participation_mask<R: Rng>(n: usize, p: usize, cfg: &Participation, rng: &mut R) -> DMatrix<bool> {
    let n_frequent = ((cfg.frequent_share * p as f64).round() as usize).min(p);
    let mut frequent = vec![false; p];
    for j in index::sample(rng, p, n_frequent) {
        frequent[j] = true;
    }
    let prob: Vec<f64> = frequent
        .iter()
        .map(|&f| if f { cfg.frequent.stationary() } else { cfg.infrequent.stationary() })
        .collect();
    let mut mask = DMatrix::from_element(n, p, false);
    for i in 0..n {
        loop {
            for j in 0..p {
                mask[(i, j)] = rng.random::<f64>() < prob[j];
            }
            if (0..p).any(|j| mask[(i, j)]) {
                break;
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stationary_probability() {
        let c = TwoStateChain { stay: 0.9, enter: 0.1 };
        assert!((c.stationary() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn every_variable_is_covered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = participation_mask(7, 4, &Participation::default(), &mut rng);
            for i in 0..7 {
                assert!((0..4).any(|j| m[(i, j)]));
            }
        }
    }

    #[test]
    fn frequent_experts_participate_more() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = Participation::default();
        let mut total = 0usize;
        let reps = 2000;
        for _ in 0..reps {
            let m = participation_mask(7, 10, &cfg, &mut rng);
            total += m.iter().filter(|&&b| b).count();
        }
        let share = total as f64 / (reps * 70) as f64;
        let expected = 0.4 * cfg.frequent.stationary() + 0.6 * cfg.infrequent.stationary();
        assert!((share - expected).abs() < 0.02, "{share} vs {expected}");
    }
}
