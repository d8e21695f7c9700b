use super::PerceptionError;

fn check_finite(scores: &[f64]) -> Result<(), PerceptionError> {
    if scores.is_empty() {
        return Err(PerceptionError::EmptyScores);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(PerceptionError::NonFiniteScore);
    }
    Ok(())
}

fn max_of(scores: &[f64]) -> f64 {
    scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Temperature-scaled softmax over label similarities, computed after
/// subtracting the maximum score.
pub fn class_distribution(scores: &[f64], temperature: f64) -> Result<Vec<f64>, PerceptionError> {
    check_finite(scores)?;
    let tau = 1.0 / temperature;
    let m = max_of(scores);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - m) * tau).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// `-T * ln(sum_j exp(S_j / T))`, evaluated as a shifted log-sum-exp.
pub fn energy_score(scores: &[f64], temperature: f64) -> Result<f64, PerceptionError> {
    check_finite(scores)?;
    let tau = 1.0 / temperature;
    let m = max_of(scores);
    let sum: f64 = scores.iter().map(|s| ((s - m) * tau).exp()).sum();
    Ok(-m - temperature * sum.ln())
}

/// Candidates whose energy exceeds the threshold are rejected.
pub fn passes_energy(energy: f64, threshold: f64) -> bool {
    energy <= threshold
}

/// Down-weight each label probability by `exp(-beta * eta_j)` and renormalize.
pub fn reweight_degradation(
    p: &[f64],
    eta: &[f64],
    beta: f64,
) -> Result<Vec<f64>, PerceptionError> {
    if p.len() != eta.len() {
        return Err(PerceptionError::LengthMismatch {
            expected: p.len(),
            got: eta.len(),
        });
    }
    if eta.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(PerceptionError::InvalidDegradation);
    }
    // The common factor exp(-beta * min eta) cancels in the normalization;
    // dropping it keeps weights away from underflow, and a constant eta
    // leaves p untouched.
    let eta_min = eta.iter().copied().fold(f64::INFINITY, f64::min);
    if eta.iter().all(|e| *e == eta_min) {
        return Ok(p.to_vec());
    }
    let w: Vec<f64> = p
        .iter()
        .zip(eta)
        .map(|(pj, ej)| pj * (-beta * (ej - eta_min)).exp())
        .collect();
    let z: f64 = w.iter().sum();
    if !(z.is_finite() && z > 0.0) {
        return Err(PerceptionError::AllMassDegraded);
    }
    Ok(w.into_iter().map(|x| x / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn symmetric_scores_split_evenly() {
        let p = class_distribution(&[0.4, 0.4], 0.07).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn single_label_is_certain() {
        assert_eq!(class_distribution(&[-3.7], 0.07).unwrap(), vec![1.0]);
        assert_eq!(energy_score(&[0.42], 0.07).unwrap(), -0.42);
    }

    #[test]
    fn pair_energy_closed_form() {
        let e = energy_score(&[0.5, 0.5], 0.07).unwrap();
        assert_abs_diff_eq!(e, -0.5 - 0.07 * std::f64::consts::LN_2, epsilon = 1e-12);
        assert!(!passes_energy(0.5, 0.45));
        assert!(passes_energy(e, 0.45));
    }

    #[test]
    fn degradation_example() {
        let p = reweight_degradation(&[0.7, 0.3], &[std::f64::consts::LN_2, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(p[0], 0.35 / 0.65, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.3 / 0.65, epsilon = 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(
            class_distribution(&[f64::NAN], 0.07),
            Err(PerceptionError::NonFiniteScore)
        );
        assert_eq!(
            reweight_degradation(&[0.0, 0.0], &[0.0, 1.0], 1.0),
            Err(PerceptionError::AllMassDegraded)
        );
    }
}
