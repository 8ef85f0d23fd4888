use super::AttackError;

/// `Σ (ŷ − y)² / Σ (y − ȳ)²` with `ȳ` the mean over every value in `truth`.
/// 1.0 is the score of always predicting that mean.
pub fn normalized_error(predicted: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64, AttackError> {
    if truth.is_empty() {
        return Err(AttackError::EmptyData);
    }
    if predicted.len() != truth.len() {
        return Err(AttackError::InvalidConfig(format!("{} predictions for {} episodes", predicted.len(), truth.len())));
    }
    let mut count = 0usize;
    let mut sum = 0.0;
    for (index, (p, y)) in predicted.iter().zip(truth).enumerate() {
        if p.len() != y.len() {
            return Err(AttackError::Length { index, expected: y.len(), actual: p.len() });
        }
        count += y.len();
        sum += y.iter().sum::<f64>();
    }
    let mean = sum / count as f64;
    let (mut err, mut var) = (0.0, 0.0);
    for (p, y) in predicted.iter().zip(truth) {
        for (a, b) in p.iter().zip(y) {
            err += (a - b).powi(2);
            var += (b - mean).powi(2);
        }
    }
    if var <= 0.0 {
        return Err(AttackError::ZeroVariance);
    }
    Ok(err / var)
}

/// `(TPR + TNR) / 2`; errors if either class is absent from `truth`.
pub fn balanced_accuracy(predicted: &[bool], truth: &[bool]) -> Result<f64, AttackError> {
    if truth.is_empty() {
        return Err(AttackError::EmptyData);
    }
    if predicted.len() != truth.len() {
        return Err(AttackError::InvalidConfig(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        if t {
            pos += 1;
            tp += p as usize;
        } else {
            neg += 1;
            tn += !p as usize;
        }
    }
    if pos == 0 {
        return Err(AttackError::MissingClass("occupied"));
    }
    if neg == 0 {
        return Err(AttackError::MissingClass("vacant"));
    }
    Ok(0.5 * (tp as f64 / pos as f64 + tn as f64 / neg as f64))
}
