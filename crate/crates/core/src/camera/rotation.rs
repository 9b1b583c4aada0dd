//! Continuous 6-vector rotation parameterization.
//!
//! The two columns `a₁, a₂` are orthonormalized by Gram-Schmidt into
//! `b₁, b₂`, and `b₃ = b₁ × b₂` completes a right-handed frame.

use crate::diff::Scalar;
use crate::error::{Error, Result};
use crate::math::{cross, dot, scale, sub, M3, V3};

const DEGENERATE_EPS: f64 = 1e-12;

pub fn rotation_from_6vec<S: Scalar>(a: &[S; 6]) -> Result<M3<S>> {
    let a1 = [a[0], a[1], a[2]];
    let a2 = [a[3], a[4], a[5]];

    let n1 = dot(a1, a1).value().sqrt();
    if !(n1 >= DEGENERATE_EPS) {
        return Err(Error::DegenerateRotation("first column is (near) zero"));
    }
    let b1 = normalize(a1);
    let proj = sub(a2, scale(b1, dot(b1, a2)));
    let n2 = dot(proj, proj).value().sqrt();
    if !(n2 >= DEGENERATE_EPS) {
        return Err(Error::DegenerateRotation("second column is parallel to the first"));
    }
    let b2 = normalize(proj);
    let b3 = cross(b1, b2);
    Ok([
        [b1[0], b2[0], b3[0]],
        [b1[1], b2[1], b3[1]],
        [b1[2], b2[2], b3[2]],
    ])
}

/// Inverse of [`rotation_from_6vec`] up to column scale: the first two columns.
pub fn six_vec_from_rotation(r: &M3) -> [f64; 6] {
    [r[0][0], r[1][0], r[2][0], r[0][1], r[1][1], r[2][1]]
}

fn normalize<S: Scalar>(v: V3<S>) -> V3<S> {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Jet;
    use crate::math::{det, mat_mul, transpose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const EYE: M3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    /// Textbook modified Gram-Schmidt written independently of the
    /// implementation above (explicit loops, no shared helpers).
    fn gram_schmidt_oracle(a: &[f64; 6]) -> M3 {
        let mut c1 = [a[0], a[1], a[2]];
        let l1 = (c1[0] * c1[0] + c1[1] * c1[1] + c1[2] * c1[2]).sqrt();
        for x in &mut c1 {
            *x /= l1;
        }
        let mut c2 = [a[3], a[4], a[5]];
        let p = c1[0] * c2[0] + c1[1] * c2[1] + c1[2] * c2[2];
        for i in 0..3 {
            c2[i] -= p * c1[i];
        }
        let l2 = (c2[0] * c2[0] + c2[1] * c2[1] + c2[2] * c2[2]).sqrt();
        for x in &mut c2 {
            *x /= l2;
        }
        let c3 = [
            c1[1] * c2[2] - c1[2] * c2[1],
            c1[2] * c2[0] - c1[0] * c2[2],
            c1[0] * c2[1] - c1[1] * c2[0],
        ];
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i] = [c1[i], c2[i], c3[i]];
        }
        m
    }

    fn max_abs_diff(a: &M3, b: &M3) -> f64 {
        let mut m: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                m = m.max((a[r][c] - b[r][c]).abs());
            }
        }
        m
    }

    #[test]
    fn unit_axes_give_identity() {
        let r = rotation_from_6vec(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r, EYE);
    }

    #[test]
    fn scaled_axes_give_identity() {
        let r = rotation_from_6vec(&[2.0, 0.0, 0.0, 0.0, 5.0, 0.0]).unwrap();
        assert_eq!(r, EYE);
    }

    #[test]
    fn random_inputs_are_orthonormal_and_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let r = rotation_from_6vec(&a).unwrap();
            let rtr = mat_mul(&transpose(&r), &r);
            assert!(max_abs_diff(&rtr, &EYE) < 1e-12);
            assert!((det(&r) - 1.0).abs() < 1e-12);
            assert!(max_abs_diff(&r, &gram_schmidt_oracle(&a)) < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            rotation_from_6vec(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Err(Error::DegenerateRotation(_))
        ));
        assert!(matches!(
            rotation_from_6vec(&[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]),
            Err(Error::DegenerateRotation(_))
        ));
    }

    #[test]
    fn jet_partials_match_finite_differences() {
        let a = [0.9, 0.1, -0.2, 0.05, 1.1, 0.3];
        let seeded: [Jet<6>; 6] = std::array::from_fn(|i| Jet::var(a[i], i));
        let r = rotation_from_6vec(&seeded).unwrap();
        let h = 1e-6;
        for k in 0..6 {
            let mut ap = a;
            let mut am = a;
            ap[k] += h;
            am[k] -= h;
            let rp = rotation_from_6vec(&ap).unwrap();
            let rm = rotation_from_6vec(&am).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let fd = (rp[i][j] - rm[i][j]) / (2.0 * h);
                    assert!((r[i][j].d[k] - fd).abs() < 1e-8);
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn positive_column_scaling_is_invariant(
            a in proptest::array::uniform6(-3.0f64..3.0),
            s1 in 0.1f64..10.0,
            s2 in 0.1f64..10.0,
        ) {
            let Ok(r) = rotation_from_6vec(&a) else { return Ok(()); };
            let scaled = [a[0] * s1, a[1] * s1, a[2] * s1, a[3] * s2, a[4] * s2, a[5] * s2];
            let rs = rotation_from_6vec(&scaled).unwrap();
            // Conditioning of the projection step scales with 1/|sin(a1, a2)|.
            let b1 = normalize(crate::math::lift3::<f64>([a[0], a[1], a[2]]));
            let a2 = [a[3], a[4], a[5]];
            let perp = crate::math::norm(sub(a2, scale(b1, dot(b1, a2)))) / crate::math::norm(a2);
            proptest::prop_assume!(perp > 1e-3);
            proptest::prop_assert!(max_abs_diff(&r, &rs) < 1e-15 / perp * 16.0);
        }
    }
}
