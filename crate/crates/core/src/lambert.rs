//! Principal branch of the Lambert W function.

use crate::error::{Error, Result};

/// `-1/e`, the branch point.
pub const BRANCH_POINT: f64 = -0.367_879_441_171_442_33;

const MAX_ITER: usize = 64;

/// `W₀(x)`: the `w ≥ -1` with `w·eʷ = x`.
///
/// Halley iteration from a branch-point series, a small-argument series or
/// the two-term asymptotic expansion, depending on where `x` falls.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < BRANCH_POINT {
        return Err(Error::LambertDomain(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if x == BRANCH_POINT {
        return Ok(-1.0);
    }

    let mut w = initial_guess(x);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if f == 0.0 || wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w.max(-1.0))
}

fn initial_guess(x: f64) -> f64 {
    if x < -0.32 {
        // expansion in p = sqrt(2(ex + 1)) around the branch point
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x.abs() < 0.25 {
        x * (1.0 - x * (1.0 - 1.5 * x))
    } else if x < 3.0 {
        x.ln_1p() * 0.8
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// `W₀(eˡ)` without forming `eˡ` when it would overflow.
///
/// For large `l` this solves `w + ln w = l` by Newton's method instead.
pub fn lambert_w0_of_exp(l: f64) -> f64 {
    if l <= 500.0 {
        // exp(500) is finite and the argument is positive, so this cannot fail
        return lambert_w0(l.exp()).unwrap_or(f64::NAN);
    }
    let mut w = l - l.ln();
    for _ in 0..MAX_ITER {
        let g = w + w.ln() - l;
        let step = g / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(x: f64) -> f64 {
        let w = lambert_w0(x).unwrap();
        (w * w.exp() - x).abs() / x.abs().max(1.0)
    }

    #[test]
    fn fixed_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w0(BRANCH_POINT).unwrap(), -1.0);
    }

    #[test]
    fn omega_constant() {
        // Newton on w e^w = 1, run to a fixed point independently of Halley
        let mut w = 0.5f64;
        for _ in 0..100 {
            w -= (w * w.exp() - 1.0) / ((w + 1.0) * w.exp());
        }
        let got = lambert_w0(1.0).unwrap();
        assert!((got - w).abs() < 1e-15);
        assert!((got - 0.567_143_290_409_783_8).abs() < 1e-15);
    }

    #[test]
    fn domain_error_below_branch_point() {
        assert!(matches!(lambert_w0(-0.5), Err(Error::LambertDomain(_))));
        assert!(lambert_w0(f64::NAN).is_err());
    }

    #[test]
    fn residual_bound_across_range() {
        let mut xs = vec![-0.367_879, -0.36, -0.3, -0.1, -1e-8, 1e-12, 0.1, 0.5, 2.0, 10.0];
        xs.extend((1..=300).step_by(7).map(|e| 10f64.powi(e)));
        for x in xs {
            assert!(residual(x) <= 1e-12, "x = {x}, residual = {}", residual(x));
        }
    }

    #[test]
    fn log_domain_branch_agrees_with_direct() {
        for l in [-5.0, 0.0, 3.0, 50.0, 400.0, 499.0] {
            let direct = lambert_w0(f64::exp(l)).unwrap();
            assert!((lambert_w0_of_exp(l) - direct).abs() <= 1e-13 * direct.abs().max(1.0));
        }
        for l in [501.0, 1e4, 1e8] {
            let w = lambert_w0_of_exp(l);
            assert!((w + w.ln() - l).abs() <= 1e-12 * l);
        }
    }
}
