//! Special functions needed by the Student-t predictive.

use libm::{exp, fabs, lgamma, log};

const MAX_CF_ITER: usize = 300;
const CF_EPS: f64 = 1e-15;
const FPMIN: f64 = 1e-300;

/// Regularized incomplete beta function `I_x(a, b)` for `a, b > 0`,
/// `0 <= x <= 1`.
///
/// Modified Lentz evaluation of the continued fraction, using the symmetry
/// `I_x(a, b) = 1 - I_{1-x}(b, a)` to stay in the fast-converging region.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(1.0 - x);
    let front = exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if fabs(d) < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_CF_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if fabs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if fabs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if fabs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if fabs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if fabs(del - 1.0) < CF_EPS {
            break;
        }
    }
    h
}

/// CDF of the standard Student-t with `dof` degrees of freedom.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    let t2 = t * t;
    if t2 < dof {
        // Near the centre, the complementary argument keeps full precision.
        let half = 0.5 * regularized_beta(t2 / (dof + t2), 0.5, 0.5 * dof);
        return if t >= 0.0 { 0.5 + half } else { 0.5 - half };
    }
    let tail = 0.5 * regularized_beta(dof / (dof + t2), 0.5 * dof, 0.5);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of the standard Student-t by bisection on `[-50, 50]`.
///
/// The CDF is strictly increasing, so bisection to a 1e-10 bracket leaves the
/// probability error far below 1e-6.
pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let (mut lo, mut hi) = (-50.0_f64, 50.0_f64);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
