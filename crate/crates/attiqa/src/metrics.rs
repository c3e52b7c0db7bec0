//! Rank and linear correlation statistics plus the protocol aggregates
//! (median over splits, pairwise win rate).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("degenerate input: sequence is constant")]
    DegenerateInput,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("empty input")]
    Empty,
}

/// A correlation value together with the sample count it was computed on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationResult {
    pub value: f64,
    pub n: usize,
}

/// Spearman rank-order correlation: Pearson correlation of fractional
/// (average) ranks. Exactly +/-1 for perfectly (anti)monotone tie-free inputs.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<CorrelationResult, MetricError> {
    check_pair(x, y)?;
    let rx = fractional_ranks(x);
    let ry = fractional_ranks(y);
    let value = pearson_value(&rx, &ry)?;
    Ok(CorrelationResult { value, n: x.len() })
}

/// Pearson linear correlation on the raw values.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<CorrelationResult, MetricError> {
    check_pair(x, y)?;
    let value = pearson_value(x, y)?;
    Ok(CorrelationResult { value, n: x.len() })
}

/// Standard median; an even count averages the central pair.
pub fn median(values: &[f64]) -> Result<f64, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values are ordered"));
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Fraction of positions on which two binary choice sequences agree.
pub fn win_rate(model_choice: &[bool], human_choice: &[bool]) -> Result<f64, MetricError> {
    if model_choice.len() != human_choice.len() {
        return Err(MetricError::LengthMismatch(
            model_choice.len(),
            human_choice.len(),
        ));
    }
    if model_choice.is_empty() {
        return Err(MetricError::Empty);
    }
    let agree = model_choice
        .iter()
        .zip(human_choice)
        .filter(|(m, h)| m == h)
        .count();
    Ok(agree as f64 / model_choice.len() as f64)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

/// Fractional (average) ranks, 1-based: ties share the mean of the rank
/// positions they occupy.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average 1-based rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

// Two-pass deviation form. The denominator takes a single sqrt of the
// variance product so that identical (or exactly mirrored) deviation
// sequences yield exactly +/-1.
fn pearson_value(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::DegenerateInput);
    }
    Ok(sxy / (sxx * syy).sqrt())
}
