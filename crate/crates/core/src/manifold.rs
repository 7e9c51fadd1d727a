//! SE(2) poses and their tangent-space chart.
//!
//! Perturbations are applied on the right: `p ⊕ v = p · Exp(v)` and
//! `local(a, b) = Log(a⁻¹ · b)`. Tangent coordinates are ordered
//! `(dx, dy, dtheta)` with translation first.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// A planar rigid transform. The heading is always kept in `(-π, π]`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2 {
    x: f64,
    y: f64,
    theta: f64,
}

impl fmt::Debug for Pose2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pose2({}, {}, {})", self.x, self.y, self.theta)
    }
}

impl From<[f64; 3]> for Pose2 {
    fn from(v: [f64; 3]) -> Self {
        Pose2::new(v[0], v[1], v[2])
    }
}

impl From<Pose2> for [f64; 3] {
    fn from(p: Pose2) -> Self {
        [p.x, p.y, p.theta]
    }
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.theta.sin_cos();
        Self::new(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &Pose2) -> Self {
        let (s, c) = self.theta.sin_cos();
        Self::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    /// `self⁻¹ · other`: `other` expressed in the frame of `self`.
    pub fn between(&self, other: &Pose2) -> Self {
        let (s, c) = self.theta.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Self::new(c * dx + s * dy, -s * dx + c * dy, other.theta - self.theta)
    }

    pub fn retract(&self, v: &TangentVec) -> Self {
        self.compose(&exp(v))
    }

    pub fn local(&self, other: &Pose2) -> TangentVec {
        log(&self.between(other))
    }

    /// Adjoint action on tangent vectors: `Ad(p) v` with `p Exp(v) p⁻¹ = Exp(Ad(p) v)`.
    pub fn adjoint(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.y, s, c, -self.x, 0.0, 0.0, 1.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Tangent coordinates `(dx, dy, dtheta)`; the angle is never wrapped.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TangentVec {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl TangentVec {
    pub const fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self { dx, dy, dtheta }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.dx, self.dy, self.dtheta)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }
}

impl From<Vector3<f64>> for TangentVec {
    fn from(v: Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<TangentVec> for Vector3<f64> {
    fn from(v: TangentVec) -> Self {
        v.as_vector()
    }
}

// Series-safe coefficients of the SE(2) exponential.
//   a = sin φ / φ, b = (1 - cos φ) / φ, c = (φ - sin φ) / φ², d = (1 - cos φ) / φ²
struct ExpCoeffs {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

fn exp_coeffs(phi: f64) -> ExpCoeffs {
    let p2 = phi * phi;
    if phi.abs() < 1e-4 {
        ExpCoeffs {
            a: 1.0 - p2 / 6.0 + p2 * p2 / 120.0,
            b: phi / 2.0 - phi * p2 / 24.0,
            c: phi / 6.0 - phi * p2 / 120.0,
            d: 0.5 - p2 / 24.0 + p2 * p2 / 720.0,
        }
    } else {
        let (s, co) = phi.sin_cos();
        ExpCoeffs {
            a: s / phi,
            b: (1.0 - co) / phi,
            c: (phi - s) / p2,
            d: (1.0 - co) / p2,
        }
    }
}

/// Group exponential.
pub fn exp(v: &TangentVec) -> Pose2 {
    let k = exp_coeffs(v.dtheta);
    Pose2::new(
        k.a * v.dx - k.b * v.dy,
        k.b * v.dx + k.a * v.dy,
        v.dtheta,
    )
}

/// Group logarithm; the returned angle lies in `(-π, π]`.
pub fn log(p: &Pose2) -> TangentVec {
    let phi = p.theta;
    let k = exp_coeffs(phi);
    // V = [[a, -b], [b, a]], det = a² + b²
    let det = k.a * k.a + k.b * k.b;
    let dx = (k.a * p.x + k.b * p.y) / det;
    let dy = (-k.b * p.x + k.a * p.y) / det;
    TangentVec::new(dx, dy, phi)
}

/// Right Jacobian: `Exp(v + dv) ≈ Exp(v) · Exp(Jr(v) dv)`.
pub fn right_jacobian(v: &TangentVec) -> Matrix3<f64> {
    let k = exp_coeffs(v.dtheta);
    let (r1, r2) = (v.dx, v.dy);
    Matrix3::new(
        k.a,
        k.b,
        r1 * k.c - r2 * k.d,
        -k.b,
        k.a,
        r1 * k.d + r2 * k.c,
        0.0,
        0.0,
        1.0,
    )
}

/// Left Jacobian: `Exp(v + dv) ≈ Exp(Jl(v) dv) · Exp(v)`.
pub fn left_jacobian(v: &TangentVec) -> Matrix3<f64> {
    let k = exp_coeffs(v.dtheta);
    let (r1, r2) = (v.dx, v.dy);
    Matrix3::new(
        k.a,
        -k.b,
        r1 * k.c + r2 * k.d,
        k.b,
        k.a,
        -r1 * k.d + r2 * k.c,
        0.0,
        0.0,
        1.0,
    )
}

// Both Jacobians have the shape [[M, w], [0, 1]].
fn invert_affine_block(j: &Matrix3<f64>) -> Matrix3<f64> {
    let m = j.fixed_view::<2, 2>(0, 0).into_owned();
    let w = Vector2::new(j[(0, 2)], j[(1, 2)]);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let mi = Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det;
    let wi = -(mi * w);
    Matrix3::new(
        mi[(0, 0)],
        mi[(0, 1)],
        wi[0],
        mi[(1, 0)],
        mi[(1, 1)],
        wi[1],
        0.0,
        0.0,
        1.0,
    )
}

pub fn right_jacobian_inv(v: &TangentVec) -> Matrix3<f64> {
    invert_affine_block(&right_jacobian(v))
}

pub fn left_jacobian_inv(v: &TangentVec) -> Matrix3<f64> {
    invert_affine_block(&left_jacobian(v))
}
