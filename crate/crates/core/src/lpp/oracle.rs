//! Population d_MV in closed form for the two worked processes.

use super::DriftSpec;

/// d_MV between `X_t` and `X_s` for drift-plus-Brownian-motion:
/// `sqrt((a(t) - a(s))^2 ||v||^2 + sigma^2 |t - s|)`.
pub fn dmv_oracle_bm(spec: &DriftSpec, t: f64, s: f64) -> f64 {
    let da = spec.a(t) - spec.a(s);
    let vn2 = spec.v.iter().map(|x| x * x).sum::<f64>();
    (da * da * vn2 + spec.sigma * spec.sigma * (t - s).abs()).sqrt()
}

/// d_MV for linear drift plus integrated Brownian motion:
/// `sqrt(a^2 (t - t')^2 ||v||^2 + sigma^2 (t - t')^2 (t + 2t') / 3)` with
/// `t'` the earlier time.
pub fn dmv_oracle_ibm(a: f64, v: &[f64], sigma: f64, t: f64, s: f64) -> f64 {
    let (late, early) = if t >= s { (t, s) } else { (s, t) };
    let dt = late - early;
    let vn2 = v.iter().map(|x| x * x).sum::<f64>();
    (a * a * dt * dt * vn2 + sigma * sigma * dt * dt * (late + 2.0 * early) / 3.0).sqrt()
}
