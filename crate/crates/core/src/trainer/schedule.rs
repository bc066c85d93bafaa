use std::f64::consts::PI;

/// Cosine-annealed learning rate at iteration `t` of `total`.
///
/// `t` is clamped to `total`, so the rate never drops below `eta_min`.
pub fn cosine_lr(t: usize, total: usize, lr0: f64, eta_min: f64) -> f64 {
    let total = total.max(1);
    let t = t.min(total);
    eta_min + 0.5 * (lr0 - eta_min) * (1.0 + (PI * t as f64 / total as f64).cos())
}
