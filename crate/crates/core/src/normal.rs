//! Standard normal CDF and quantile function.
//!
//! `norm_cdf` uses Hart's double-precision rational approximation (absolute
//! error below 1e-15). `norm_inv_cdf` is Wichura's AS241 (PPND16), relative
//! error around 1e-16 over the full open interval.

use crate::error::{Error, Result};
use crate::num::Scalar;

#[inline]
fn horner<T: Scalar>(coeffs: &[f64], x: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

/// Standard normal CDF.
pub fn norm_cdf<T: Scalar>(z: T) -> T {
    const P: [f64; 7] = [
        220.206867912376,
        221.213596169931,
        112.079291497871,
        33.912866078383,
        6.37396220353165,
        0.700383064443688,
        0.0352624965998911,
    ];
    const Q: [f64; 8] = [
        440.413735824752,
        793.826512519948,
        637.333633378831,
        296.564248779674,
        86.7807322029461,
        16.064177579207,
        1.75566716318264,
        0.0883883476483184,
    ];
    if z.is_nan() {
        return z;
    }
    let a = z.abs();
    let tail = if a > T::lit(37.0) {
        T::zero()
    } else {
        let e = (-a * a / T::lit(2.0)).exp();
        if a < T::lit(7.07106781186547) {
            e * horner(&P, a) / horner(&Q, a)
        } else {
            let two = T::lit(2.0);
            let b = a + T::one() / (a + two / (a + T::lit(3.0) / (a + T::lit(4.0) / (a + T::lit(0.65)))));
            e / (b * T::lit(2.506628274631))
        }
    };
    if z > T::zero() {
        T::one() - tail
    } else {
        tail
    }
}

const A: [f64; 8] = [
    3.3871328727963665,
    133.14166789178438,
    1971.5909503065513,
    13731.69376550946,
    45921.95393154987,
    67265.7709270087,
    33430.57558358813,
    2509.0809287301227,
];
const B: [f64; 8] = [
    1.0,
    42.31333070160091,
    687.1870074920579,
    5394.196021424751,
    21213.794301586597,
    39307.89580009271,
    28729.085735721943,
    5226.495278852854,
];
const C: [f64; 8] = [
    1.4234371107496835,
    4.630337846156546,
    5.769497221460691,
    3.6478483247632045,
    1.2704582524523684,
    0.2417807251774506,
    0.022723844989269184,
    0.0007745450142783414,
];
const D: [f64; 8] = [
    1.0,
    2.053191626637759,
    1.6763848301838038,
    0.6897673349851,
    0.14810397642748008,
    0.015198666563616457,
    0.0005475938084995345,
    1.0507500716444169e-09,
];
const E: [f64; 8] = [
    6.657904643501103,
    5.463784911164114,
    1.7848265399172913,
    0.29656057182850487,
    0.026532189526576124,
    0.0012426609473880784,
    2.7115555687434876e-05,
    2.0103343992922881e-07,
];
const F: [f64; 8] = [
    1.0,
    0.599832206555888,
    0.1369298809227358,
    0.014875361290850615,
    0.0007868691311456133,
    1.8463183175100548e-05,
    1.421511758316446e-07,
    2.0442631033899397e-15,
];

/// Standard normal quantile function; `u` must lie strictly inside (0, 1).
pub fn norm_inv_cdf<T: Scalar>(u: T) -> Result<T> {
    if !(u > T::zero() && u < T::one()) {
        return Err(Error::InvalidProbability(u.to_f64_lossy()));
    }
    Ok(norm_inv_cdf_unchecked(u))
}

pub(crate) fn norm_inv_cdf_unchecked<T: Scalar>(u: T) -> T {
    let half = T::lit(0.5);
    let q = u - half;
    if q.abs() <= T::lit(0.425) {
        let r = T::lit(0.180625) - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let tail = if q < T::zero() { u } else { T::one() - u };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= T::lit(5.0) {
        r = r - T::lit(1.6);
        horner(&C, r) / horner(&D, r)
    } else {
        r = r - T::lit(5.0);
        horner(&E, r) / horner(&F, r)
    };
    if q < T::zero() {
        -x
    } else {
        x
    }
}
