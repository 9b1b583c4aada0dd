//! Small fixed-size vector helpers, generic over [`Scalar`] so the same code
//! serves plain evaluation and derivative propagation.

use crate::diff::Scalar;

pub type V3<S = f64> = [S; 3];
/// Row-major 3×3 matrix, `m[row][col]`.
pub type M3<S = f64> = [[S; 3]; 3];

#[inline]
pub fn lift3<S: Scalar>(v: V3) -> V3<S> {
    [S::cst(v[0]), S::cst(v[1]), S::cst(v[2])]
}

#[inline]
pub fn value3<S: Scalar>(v: &V3<S>) -> V3 {
    [v[0].value(), v[1].value(), v[2].value()]
}

#[inline]
pub fn add<S: Scalar>(a: V3<S>, b: V3<S>) -> V3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub<S: Scalar>(a: V3<S>, b: V3<S>) -> V3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale<S: Scalar>(a: V3<S>, s: S) -> V3<S> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot<S: Scalar>(a: V3<S>, b: V3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<S: Scalar>(a: V3<S>, b: V3<S>) -> V3<S> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm_sq<S: Scalar>(a: V3<S>) -> S {
    dot(a, a)
}

/// Euclidean norm of a 2- or 3-vector given its squared norm; zero maps to a
/// zero value with zero partials instead of an infinite derivative.
#[inline]
pub fn safe_sqrt<S: Scalar>(sq: S) -> S {
    if sq.value() > 0.0 {
        sq.sqrt()
    } else {
        S::zero()
    }
}

#[inline]
pub fn norm<S: Scalar>(a: V3<S>) -> S {
    safe_sqrt(norm_sq(a))
}

#[inline]
pub fn mat_vec<S: Scalar>(m: &M3<S>, v: V3<S>) -> V3<S> {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// `mᵀ v`.
#[inline]
pub fn mat_t_vec<S: Scalar>(m: &M3<S>, v: V3<S>) -> V3<S> {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_mul(a: &M3, b: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, x) in row.iter_mut().enumerate() {
            *x = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub fn transpose(m: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = m[c][r];
        }
    }
    out
}

pub fn det(m: &M3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Rodrigues' formula for a rotation of `angle` radians about `axis`.
pub fn axis_angle(axis: V3, angle: f64) -> M3 {
    let n = norm(axis);
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Geodesic angle (radians) between two rotations.
pub fn rotation_angle_between(a: &M3, b: &M3) -> f64 {
    let rel = mat_mul(&transpose(a), b);
    let tr = rel[0][0] + rel[1][1] + rel[2][2];
    // atan2 form of arccos((tr - 1) / 2); stays accurate near zero.
    let w = [rel[2][1] - rel[1][2], rel[0][2] - rel[2][0], rel[1][0] - rel[0][1]];
    norm(w).atan2(tr - 1.0)
}
