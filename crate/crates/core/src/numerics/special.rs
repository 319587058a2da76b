use std::f64::consts::SQRT_2;

use libm::erfc;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{domain, Result};

pub use statrs::function::gamma::ln_gamma;

/// Poisson mass left out of the noncentral series.
const SERIES_MASS_TOL: f64 = 1e-12;

fn reg_lower(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(a, x)
    }
}

fn reg_upper(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma_ur(a, x)
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Inverse of the standard normal CDF for `p` in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    if p > 0.5 {
        // 1 − p is exact here
        return -normal_quantile(1.0 - p);
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    if x.is_finite() {
        // Newton polish on the lower tail, where Φ is computed to full precision
        for _ in 0..2 {
            let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            if density <= 0.0 {
                break;
            }
            x -= (normal_cdf(x) - p) / density;
        }
    }
    x
}

pub fn chi2_cdf(x: f64, k: usize) -> f64 {
    reg_lower(k as f64 / 2.0, x / 2.0)
}

pub fn chi2_sf(x: f64, k: usize) -> f64 {
    reg_upper(k as f64 / 2.0, x / 2.0)
}

/// Gamma(shape, rate) CDF.
pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> f64 {
    reg_lower(shape, x * rate)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tail {
    Lower,
    Upper,
}

/// Quantile of the unit-rate gamma distribution. For `Tail::Lower` solves
/// P(shape, y) = target, for `Tail::Upper` solves Q(shape, y) = target.
///
/// Newton iteration from a Wilson-Hilferty start, safeguarded by a bracket
/// that falls back to bisection whenever a step leaves it.
fn std_gamma_quantile(shape: f64, target: f64, tail: Tail) -> f64 {
    let at_origin = match tail {
        Tail::Lower => target <= 0.0,
        Tail::Upper => target >= 1.0,
    };
    if at_origin {
        return 0.0;
    }
    // Increasing in y for both tails; derivative is the gamma density.
    let residual = |y: f64| match tail {
        Tail::Lower => reg_lower(shape, y) - target,
        Tail::Upper => target - reg_upper(shape, y),
    };
    let ln_norm = ln_gamma(shape);
    let density = |y: f64| ((shape - 1.0) * y.ln() - y - ln_norm).exp();

    let z = match tail {
        Tail::Lower => normal_quantile(target),
        Tail::Upper => -normal_quantile(target),
    };
    let wh = 1.0 - 1.0 / (9.0 * shape) + z / (3.0 * shape.sqrt());
    let mut y = shape * wh * wh * wh;
    if !(y.is_finite() && y > 0.0) {
        // Small-y behaviour P(a, y) ~ y^a / Gamma(a + 1).
        let p_lower = match tail {
            Tail::Lower => target,
            Tail::Upper => 1.0 - target,
        };
        y = ((p_lower.max(1e-300)).ln() + ln_gamma(shape + 1.0)) / shape;
        y = y.exp().max(f64::MIN_POSITIVE);
    }

    let mut lo = 0.0_f64;
    let mut hi = y.max(1.0);
    while residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..400 {
        let r = residual(y);
        if r == 0.0 {
            return y;
        }
        if r < 0.0 {
            lo = lo.max(y);
        } else {
            hi = hi.min(y);
        }
        let d = density(y);
        let mut next = y - r / d;
        if !(next.is_finite() && next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-15 * y || hi - lo <= 1e-15 * hi {
            return next;
        }
        y = next;
    }
    y
}

/// Upper-`alpha` point of the chi-square distribution: P(χ²_k ≤ x) = 1 − alpha.
pub fn chi2_quantile(k: usize, alpha: f64) -> Result<f64> {
    if k == 0 {
        return domain("chi-square degrees of freedom must be positive");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha {alpha} outside (0, 1)"));
    }
    Ok(2.0 * std_gamma_quantile(k as f64 / 2.0, alpha, Tail::Upper))
}

fn check_gamma_params(shape: f64, rate: f64) -> Result<()> {
    if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
        return domain(format!("invalid gamma parameters shape={shape}, rate={rate}"));
    }
    Ok(())
}

/// Gamma(shape, rate) quantile for p in [0, 1).
pub fn gamma_quantile(shape: f64, rate: f64, p: f64) -> Result<f64> {
    check_gamma_params(shape, rate)?;
    if !(0.0..1.0).contains(&p) {
        return domain(format!("gamma quantile probability {p} outside [0, 1)"));
    }
    Ok(std_gamma_quantile(shape, p, Tail::Lower) / rate)
}

/// Gamma(shape, rate) quantile addressed by upper-tail probability q in (0, 1].
/// Accurate where 1 − q would round to 1.
pub fn gamma_quantile_upper(shape: f64, rate: f64, q: f64) -> Result<f64> {
    check_gamma_params(shape, rate)?;
    if !(q > 0.0 && q <= 1.0) {
        return domain(format!("gamma upper-tail probability {q} outside (0, 1]"));
    }
    Ok(std_gamma_quantile(shape, q, Tail::Upper) / rate)
}

fn check_noncentral(x: f64, k: usize, delta: f64) -> Result<()> {
    if k == 0 {
        return domain("chi-square degrees of freedom must be positive");
    }
    if !(x >= 0.0) || !(delta >= 0.0) || !delta.is_finite() {
        return domain(format!("noncentral chi-square needs x ≥ 0 and delta ≥ 0 (x={x}, delta={delta})"));
    }
    Ok(())
}

/// Poisson(delta/2)-weighted sum of `term(k/2 + j, x/2)` starting at the
/// Poisson mode and extending both ways until the omitted mass is below
/// `SERIES_MASS_TOL`.
fn poisson_mixture(x: f64, k: usize, delta: f64, term: impl Fn(f64, f64) -> f64) -> f64 {
    let half_k = k as f64 / 2.0;
    let half_x = x / 2.0;
    let lam = delta / 2.0;
    if lam == 0.0 {
        return term(half_k, half_x);
    }
    let ln_lam = lam.ln();
    let weight = |j: f64| (-lam + j * ln_lam - ln_gamma(j + 1.0)).exp();
    let mode = lam.floor();

    let mut sum = 0.0;
    let mut mass = 0.0;
    let mut j = mode;
    while j >= 1.0 {
        j -= 1.0;
        let w = weight(j);
        mass += w;
        sum += w * term(half_k + j, half_x);
        if w < 1e-17 {
            break;
        }
    }
    let mut j = mode;
    for _ in 0..1_000_000 {
        let w = weight(j);
        mass += w;
        sum += w * term(half_k + j, half_x);
        if 1.0 - mass <= SERIES_MASS_TOL {
            break;
        }
        j += 1.0;
    }
    sum
}

/// CDF of the noncentral chi-square with `k` degrees of freedom and
/// noncentrality `delta`.
pub fn noncentral_chi2_cdf(x: f64, k: usize, delta: f64) -> Result<f64> {
    check_noncentral(x, k, delta)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(poisson_mixture(x, k, delta, reg_lower).clamp(0.0, 1.0))
}

/// Upper tail 1 − CDF, summed directly so small tails keep their precision.
pub fn noncentral_chi2_sf(x: f64, k: usize, delta: f64) -> Result<f64> {
    check_noncentral(x, k, delta)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    Ok(poisson_mixture(x, k, delta, reg_upper).clamp(0.0, 1.0))
}
