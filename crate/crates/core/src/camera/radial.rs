//! Fourth-order radial distortion, normalized by the principal point.
//!
//! `n = ((pₓ−cₓ)/cₓ, (p_y−c_y)/c_y)`, `d = 1 + k₁n² + k₂n⁴` per axis, and the
//! distorted homogeneous pixel is `(pₓdₓ, p_y d_y, 1)`. Note the coefficients
//! are not interchangeable with Brown-Conrady ones: the normalization uses the
//! principal point, not the focal length, and each axis is scaled separately.

use crate::diff::Scalar;
use crate::error::{Error, Result};

/// Newton iterations used to invert the radial map during projection.
pub const INVERSE_ITERATIONS: usize = 10;
/// Largest acceptable forward-map residual (pixels) after inversion.
pub const INVERSE_TOLERANCE: f64 = 1e-6;

#[inline]
fn axis_factor<S: Scalar>(p: S, c: S, k: &[S; 2]) -> S {
    let n = (p - c) / c;
    let n2 = n * n;
    k[0] * n2 + k[1] * n2 * n2 + 1.0
}

pub fn apply_radial<S: Scalar>(p: [S; 2], c: [S; 2], k: [S; 2]) -> [S; 3] {
    let dx = axis_factor(p[0], c[0], &k);
    let dy = axis_factor(p[1], c[1], &k);
    [p[0] * dx, p[1] * dy, S::cst(1.0)]
}

/// Solves `p·d(p) = target` on one axis with unrolled Newton steps, starting
/// from `p = target`. Derivatives flow through every step.
fn invert_axis<S: Scalar>(target: S, c: S, k: &[S; 2]) -> Result<S> {
    let mut p = target;
    for _ in 0..INVERSE_ITERATIONS {
        let n = (p - c) / c;
        let n2 = n * n;
        let d = k[0] * n2 + k[1] * n2 * n2 + 1.0;
        let g = p * d - target;
        let slope = d + p * (k[0] * n * 2.0 + k[1] * n * n2 * 4.0) / c;
        if slope.value().abs() < 1e-12 || !slope.value().is_finite() {
            return Err(Error::NonConvergent {
                residual: g.value().abs(),
            });
        }
        // Even when g is already zero this step refreshes the partials.
        p = p - g / slope;
    }
    let residual = (p.value() * axis_factor(p.value(), c.value(), &[k[0].value(), k[1].value()])
        - target.value())
    .abs();
    if !(residual <= INVERSE_TOLERANCE) {
        return Err(Error::NonConvergent { residual });
    }
    Ok(p)
}

/// Inverse of [`apply_radial`]: the pixel whose distorted image is `target`.
pub fn invert_radial<S: Scalar>(target: [S; 2], c: [S; 2], k: [S; 2]) -> Result<[S; 2]> {
    Ok([invert_axis(target[0], c[0], &k)?, invert_axis(target[1], c[1], &k)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Jet;

    #[test]
    fn zero_coefficients_are_identity() {
        for p in [[0.0, 0.0], [13.5, 77.25], [640.0, -3.0]] {
            let q = apply_radial(p, [100.0, 80.0], [0.0, 0.0]);
            assert_eq!(q, [p[0], p[1], 1.0]);
        }
    }

    #[test]
    fn principal_point_is_fixed() {
        let q = apply_radial([100.0, 80.0], [100.0, 80.0], [0.3, -0.2]);
        assert_eq!(q, [100.0, 80.0, 1.0]);
    }

    #[test]
    fn hand_evaluated_example() {
        // n_x = (200-100)/100 = 1, d_x = 1 + 0.1 = 1.1
        let q = apply_radial([200.0, 100.0], [100.0, 100.0], [0.1, 0.0]);
        assert!((q[0] - 220.0).abs() < 1e-12);
        assert_eq!(q[1], 100.0);
        assert_eq!(q[2], 1.0);
    }

    #[test]
    fn inversion_recovers_hand_example() {
        let p = invert_radial([220.0, 100.0], [100.0, 100.0], [0.1, 0.0]).unwrap();
        assert!((p[0] - 200.0).abs() < 1e-6);
        assert!((p[1] - 100.0).abs() < 1e-6);
    }

    #[test]
    fn inversion_partials_satisfy_implicit_function_theorem() {
        // p(k1) solves p·d(p, k1) = 220; dp/dk1 = -(∂g/∂k1)/(∂g/∂p).
        let k1 = Jet::<1>::var(0.1, 0);
        let p = invert_radial(
            [Jet::cst(220.0), Jet::cst(100.0)],
            [Jet::cst(100.0), Jet::cst(100.0)],
            [k1, Jet::cst(0.0)],
        )
        .unwrap();
        let (pv, c) = (p[0].v, 100.0);
        let n = (pv - c) / c;
        let dg_dk1 = pv * n * n;
        let dg_dp = 1.0 + 0.1 * n * n + pv * 0.1 * 2.0 * n / c;
        assert!((p[0].d[0] - (-dg_dk1 / dg_dp)).abs() < 1e-9);
    }

    #[test]
    fn hopeless_distortion_reports_nonconvergence() {
        let r = invert_radial([190.0, 100.0], [100.0, 100.0], [-1.2, 0.0]);
        assert!(matches!(r, Err(Error::NonConvergent { .. })));
    }
}
