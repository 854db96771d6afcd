use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Standard normal CDF via `erfc`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Inverse of the standard normal CDF.
///
/// Wichura's AS241 rational approximation followed by one Halley step
/// against the `erfc`-based CDF. Computed on the lower tail and reflected, so
/// that `inverse_normal_cdf(1 - u) == -inverse_normal_cdf(u)`.
pub fn inverse_normal_cdf(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!("inverse normal CDF needs 0 < u < 1 (got {u})")));
    }
    if u == 0.5 {
        return Ok(0.0);
    }
    let (q, sign) = if u < 0.5 { (u, -1.0) } else { (1.0 - u, 1.0) };
    let mut x = -as241(q);
    // Halley refinement of the lower-tail root of Phi(x) = q
    let e = normal_cdf(x) - q;
    let r = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x -= r / (1.0 + 0.5 * x * r);
    Ok(sign * -x)
}

/// AS241 (PPND16) upper quantile for `0 < q < 0.5`, returned as a positive number.
fn as241(q: f64) -> f64 {
    let dq = q - 0.5;
    if dq.abs() <= 0.425 {
        let r = 0.180625 - dq * dq;
        let num = (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
            + 45921.953931549871457)
            * r
            + 13731.693765509461125)
            * r
            + 1971.5909503065514427)
            * r
            + 133.14166789178437745)
            * r
            + 3.387132872796366608)
            * dq;
        let den = ((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
            + 21213.794301586595867)
            * r
            + 5394.1960214247511077)
            * r
            + 687.1870074920579083)
            * r
            + 42.313330701600911252)
            * r
            + 1.0;
        return -num / den;
    }
    let mut r = (-q.ln()).sqrt();
    if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734;
        let den = ((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r
            + 0.14810397642748007459)
            * r
            + 0.68976733498510000455)
            * r
            + 1.6763848301838038494)
            * r
            + 2.05319162663775882187)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772;
        let den = ((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5)
            * r
            + 7.868691311456132591e-4)
            * r
            + 0.0148753612908506148525)
            * r
            + 0.13692988092273580531)
            * r
            + 0.59983220655588793769)
            * r
            + 1.0;
        num / den
    }
}
