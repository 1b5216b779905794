//! Systematic resampling.

/// Ancestor indices for `weights` (non-negative, not necessarily normalized)
/// using one uniform `u0 ∈ [0, 1)`. Returns `weights.len()` indices.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    if !(total > 0.0) {
        out.extend(0..n);
        return out;
    }
    let step = total / n as f64;
    let mut target = u0 * step;
    let mut cum = weights[0];
    let mut i = 0;
    for _ in 0..n {
        while target >= cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
        target += step;
    }
    out
}

/// `(Σw)² / Σw²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}
