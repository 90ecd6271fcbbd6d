//! Scalar special functions.

/// Standard normal cumulative distribution function.
///
/// Evaluated as `erfc(-t / sqrt 2) / 2` so the lower tail keeps full
/// relative precision.
pub fn gaussian_cdf(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn gaussian_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
