//! Scoring, loss, negative sampling, optimization, and checkpoints.

mod checkpoint;
mod optim;
mod sampling;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointEntry, MAGIC};
pub use optim::{clip_global_norm, global_norm, Adam};
pub use sampling::{build_groups, draw_negatives, sample_negatives, SampleGroup, TrainingSample};
pub use trainer::{batch_gradients, batch_loss, batches, fit, train_epoch, EpochStats, FitReport};

use crate::autograd::{sigmoid, NLL_CLAMP};

/// Click probability `sigmoid(r · c)`.
pub fn score(reader: &[f64], candidate: &[f64]) -> f64 {
    sigmoid(reader.iter().zip(candidate).map(|(a, b)| a * b).sum())
}

/// Summed negative log-likelihood with probabilities clamped away from 0
/// and 1.
pub fn nll_loss(samples: &[(f64, u8)]) -> f64 {
    samples
        .iter()
        .map(|(p, y)| {
            let p = p.clamp(NLL_CLAMP, 1.0 - NLL_CLAMP);
            if *y > 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        assert_eq!(score(&[1.0, 0.0], &[0.0, 1.0]), 0.5);
        assert_eq!(score(&[0.0], &[0.0]), 0.5);
        assert!((score(&[3f64.ln()], &[1.0]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn nll_examples() {
        assert!((nll_loss(&[(0.5, 1), (0.5, 0)]) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!(nll_loss(&[(1.0, 1)]) < 1e-11);
        assert!(nll_loss(&[(0.0, 1)]).is_finite());
    }
}
