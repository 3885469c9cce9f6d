//! Special functions needed by the sampler and the hyperparameter update.
//!
//! Both functions shift small arguments up with the recurrence relation and
//! then evaluate the asymptotic (Stirling-type) series, which is accurate to
//! about 1e-13 once the argument is at least 6.

use crate::num::Scalar;

const SHIFT_THRESHOLD: f64 = 6.0;

/// Digamma function for `x > 0`.
pub fn digamma<T: Scalar>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let mut x = x;
    let mut acc = T::zero();
    let threshold = T::lit(SHIFT_THRESHOLD);
    while x < threshold {
        acc -= x.recip();
        x += T::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    // ln x - 1/(2x) - sum B_2n / (2n x^2n)
    let series = inv2
        * (T::lit(1.0 / 12.0)
            - inv2
                * (T::lit(1.0 / 120.0)
                    - inv2
                        * (T::lit(1.0 / 252.0)
                            - inv2
                                * (T::lit(1.0 / 240.0)
                                    - inv2
                                        * (T::lit(1.0 / 132.0)
                                            - inv2 * (T::lit(691.0 / 32760.0) - inv2 * T::lit(1.0 / 12.0)))))));
    acc + x.ln() - T::lit(0.5) * inv - series
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let mut x = x;
    let mut prod = T::one();
    let threshold = T::lit(SHIFT_THRESHOLD);
    while x < threshold {
        prod *= x;
        x += T::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv
        * (T::lit(1.0 / 12.0)
            - inv2
                * (T::lit(1.0 / 360.0)
                    - inv2
                        * (T::lit(1.0 / 1260.0)
                            - inv2
                                * (T::lit(1.0 / 1680.0)
                                    - inv2
                                        * (T::lit(1.0 / 1188.0)
                                            - inv2 * (T::lit(691.0 / 360360.0) - inv2 * T::lit(1.0 / 156.0)))))));
    let half_ln_two_pi = T::lit(0.918_938_533_204_672_8);
    (x - T::lit(0.5)) * x.ln() - x + half_ln_two_pi + series - prod.ln()
}
