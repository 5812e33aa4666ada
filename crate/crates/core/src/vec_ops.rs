//! Small dense-vector helpers used throughout the crate.

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub(crate) fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// y ← y + a·x
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn scaled(x: &[f64], a: f64) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

pub(crate) fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub(crate) fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// |v|^e with the conventions 0^e = 0 for e > 0 and |v|^0 = 1. `powf`
/// evaluates exp(e·ln|v|) in extended precision, keeping each term in the
/// log domain so large exponents do not overflow until the value does.
pub(crate) fn abs_pow(v: f64, e: f64) -> f64 {
    if v == 0.0 {
        return if e == 0.0 { 1.0 } else { 0.0 };
    }
    if e == 0.0 {
        return 1.0;
    }
    v.abs().powf(e)
}

/// sign(v)·|v|^e, the odd power used for gradients.
pub(crate) fn signed_pow(v: f64, e: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum() * abs_pow(v, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_pow_conventions() {
        assert_eq!(abs_pow(0.0, 3.0), 0.0);
        assert_eq!(abs_pow(0.0, 0.0), 1.0);
        assert_eq!(abs_pow(-2.0, 0.0), 1.0);
        assert!((abs_pow(-2.0, 3.0) - 8.0).abs() < 1e-12);
        assert!((signed_pow(-2.0, 3.0) + 8.0).abs() < 1e-12);
    }

    #[test]
    fn abs_pow_large_exponent_stays_finite_for_unit_scale() {
        let v = abs_pow(0.5, 1000.0);
        assert!(v > 0.0 && v < 1e-300);
    }
}
