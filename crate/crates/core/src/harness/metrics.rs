/// Average precision of `ranked` against the sorted id list `relevant`:
/// `(1 / |relevant|) * sum over relevant ranks r of precision@r`. Relevant
/// items missing from the ranking contribute nothing. `None` when nothing
/// is relevant.
pub fn average_precision(ranked: &[u32], relevant: &[u32]) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, c) in ranked.iter().enumerate() {
        if relevant.binary_search(c).is_ok() {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

/// Mean of the defined entries and the number of undefined ones.
pub fn mean_average_precision(aps: &[Option<f64>]) -> (f64, usize) {
    let defined: Vec<f64> = aps.iter().flatten().copied().collect();
    let skipped = aps.len() - defined.len();
    if defined.is_empty() {
        return (0.0, skipped);
    }
    (defined.iter().sum::<f64>() / defined.len() as f64, skipped)
}
