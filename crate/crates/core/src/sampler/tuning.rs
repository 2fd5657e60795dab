//! Proposal-scale adaptation between the tuning phases.

use crate::model::math::logit;

/// Shrinks the proposal sd by 5 when acceptance is below `a0`, grows it by
/// 5 above `a1`, and leaves it unchanged in between.
pub fn adapt_factor5(acc_rate: f64, a0: f64, a1: f64, sd: f64) -> f64 {
    if acc_rate < a0 {
        sd / 5.0
    } else if acc_rate > a1 {
        sd * 5.0
    } else {
        sd
    }
}

/// Interpolates `log sd` linearly in `logit(acceptance)` through the two
/// observed (sd, acceptance) pairs to hit `a_star`.
///
/// Acceptance rates are clamped to `[0.01, 0.99]`; the result is clamped
/// to `[min(sd2, sd3)/5, max(sd2, sd3)*5]`. Equal sds or equal clamped
/// rates return `sd3`.
pub fn adapt_interpolate(sd2: f64, acc2: f64, sd3: f64, acc3: f64, a_star: f64) -> f64 {
    if sd2 == sd3 {
        return sd3;
    }
    let acc2 = acc2.clamp(0.01, 0.99);
    let acc3 = acc3.clamp(0.01, 0.99);
    if acc2 == acc3 {
        return sd3;
    }
    let (l2, l3) = (sd2.ln(), sd3.ln());
    let slope = (l3 - l2) / (logit(acc3) - logit(acc2));
    let sd4 = (l2 + (logit(a_star) - logit(acc2)) * slope).exp();
    sd4.clamp(sd2.min(sd3) / 5.0, sd2.max(sd3) * 5.0)
}
