use rand::Rng;

use super::Hyperparams;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

/// Uniform over actions with probability `epsilon`, greedy otherwise.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// Exponentially decayed exploration rate with a floor.
pub fn epsilon_schedule(decision_step: u64, hp: &Hyperparams) -> f64 {
    let exp = i32::try_from(decision_step).unwrap_or(i32::MAX);
    (hp.epsilon_start * hp.epsilon_decay.powi(exp)).max(hp.epsilon_min)
}
