//! Word and character edit distances.

use super::MetricError;

/// Levenshtein distance with unit substitution/insertion/deletion costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, xa) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, xb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(xa != xb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word error rate as a percentage of the reference length; may exceed 100.
pub fn wer(reference: &[&str], hypothesis: &[&str]) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok(100.0 * levenshtein(reference, hypothesis) as f64 / reference.len() as f64)
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)` over characters; two empty
/// strings are perfectly similar.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let ca: Vec<char> = a.chars().collect();
    let cb: Vec<char> = b.chars().collect();
    let denom = ca.len().max(cb.len());
    if denom == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&ca, &cb) as f64 / denom as f64
}
