use crate::error::{Error, Result};

/// Max-shifted softmax followed by cross-entropy against `target`.
///
/// Returns `(loss, probabilities)`; the gradient with respect to the logits is
/// `probabilities - one_hot(target)`.
pub fn softmax_xent(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    let mut probs = vec![0.0; logits.len()];
    let loss = softmax_xent_into(logits, target, &mut probs)?;
    Ok((loss, probs))
}

pub(crate) fn softmax_xent_into(logits: &[f64], target: usize, probs: &mut [f64]) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::Shape(format!(
            "softmax needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    if target >= logits.len() {
        return Err(Error::TargetOutOfRange {
            target,
            classes: logits.len(),
        });
    }
    let log_z = softmax_into(logits, probs);
    Ok(log_z - logits[target])
}

/// Writes softmax probabilities and returns the log partition function.
pub(crate) fn softmax_into(logits: &[f64], probs: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits) {
        *p = (z - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    max + sum.ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut probs = vec![0.0; logits.len()];
    softmax_into(logits, &mut probs);
    probs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let (loss, p) = softmax_xent(&[0.3; 5], 2).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-15);
        assert!(p.iter().all(|&q| (q - 0.2).abs() < 1e-15));
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let (loss, p) = softmax_xent(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.abs() < 1e-300 || loss == 0.0);
        assert!(p.iter().all(|q| q.is_finite()));
        let (loss, _) = softmax_xent(&[1000.0, 0.0], 1).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn bad_target_and_arity() {
        assert!(matches!(
            softmax_xent(&[0.0, 1.0], 2),
            Err(Error::TargetOutOfRange { .. })
        ));
        assert!(softmax_xent(&[0.0], 0).is_err());
    }

    /// Compensated (double-double) recomputation of log-sum-exp.
    fn lse_oracle(logits: &[f64]) -> f64 {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for &z in logits {
            let term = (z - max).exp();
            let s = hi + term;
            let bb = s - hi;
            lo += (hi - (s - bb)) + (term - bb);
            hi = s;
        }
        max + (hi + lo).ln()
    }

    #[test]
    fn random_logits_match_compensated_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.random_range(2..12);
            let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
            let t = rng.random_range(0..n);
            let (loss, p) = softmax_xent(&logits, t).unwrap();
            assert!((loss - (lse_oracle(&logits) - logits[t])).abs() < 1e-10);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
