//! Fixed-size rotation and vector helpers shared by the rest of the crate.
//!
//! Everything here is a pure function on `nalgebra` value types. Rotations are
//! exposed as matrices; the two newtypes below only exist to carry their
//! invariants (unit norm, membership in SO(3)) through the type system.

use std::ops::Deref;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Tolerance for invariant checks on unit vectors and rotations.
pub const INVARIANT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("matrix is not skew-symmetric (|M + M^T| = {0:e})")]
    NotSkewSymmetric(f64),
    #[error("matrix has non-positive determinant ({0:e}) and cannot be projected onto SO(3)")]
    DegenerateMatrix(f64),
    #[error("cannot normalize a vector of norm {0:e}")]
    ZeroVector(f64),
}

/// A vector on the unit sphere S².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3(Vector3<f64>);

impl UnitVector3 {
    /// Normalizes `v`. Fails on (near) zero or non-finite input.
    pub fn new_normalize(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !(n > f64::EPSILON) || !n.is_finite() {
            return Err(GeometryError::ZeroVector(n));
        }
        Ok(Self(v / n))
    }

    /// Wraps `v` without normalizing. The caller guarantees `|v| = 1`.
    pub fn new_unchecked(v: Vector3<f64>) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-6, "not a unit vector: {v:?}");
        Self(v)
    }

    pub fn x_axis() -> Self {
        Self(Vector3::x())
    }

    pub fn y_axis() -> Self {
        Self(Vector3::y())
    }

    pub fn z_axis() -> Self {
        Self(Vector3::z())
    }

    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }
}

impl Deref for UnitVector3 {
    type Target = Vector3<f64>;

    fn deref(&self) -> &Vector3<f64> {
        &self.0
    }
}

impl TryFrom<Vector3<f64>> for UnitVector3 {
    type Error = GeometryError;

    fn try_from(v: Vector3<f64>) -> Result<Self, Self::Error> {
        Self::new_normalize(v)
    }
}

impl From<UnitVector3> for Vector3<f64> {
    fn from(u: UnitVector3) -> Self {
        u.0
    }
}

/// A rotation matrix, body-to-inertial when used as a vehicle attitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Accepts `m` only if it already satisfies the SO(3) invariants within
    /// [`INVARIANT_TOL`]; otherwise the matrix is projected with [`renormalize`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if is_rotation(&m, INVARIANT_TOL) {
            Ok(Self(m))
        } else {
            renormalize(&m)
        }
    }

    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn inverse_rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.tr_mul(v)
    }

    /// Third column, i.e. the body z-axis expressed in the inertial frame.
    pub fn z_axis(&self) -> UnitVector3 {
        UnitVector3(self.0.column(2).into_owned())
    }

    pub fn compose(&self, other: &Rotation3) -> Rotation3 {
        Self(self.0 * other.0)
    }
}

impl Deref for Rotation3 {
    type Target = Matrix3<f64>;

    fn deref(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// True when `RᵀR = I` and `det R = 1`, both within `tol`.
pub fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    let orth = (m.transpose() * m - Matrix3::identity()).amax();
    orth <= tol && (m.determinant() - 1.0).abs() <= tol
}

/// Matrix of the cross product: `skew(v) * y == v × y`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Inverse of [`skew`].
pub fn unskew(m: &Matrix3<f64>) -> Result<Vector3<f64>, GeometryError> {
    let asym = (m + m.transpose()).norm();
    if asym > INVARIANT_TOL {
        return Err(GeometryError::NotSkewSymmetric(asym));
    }
    Ok(unskew_unchecked(m))
}

/// Vee map of the antisymmetric part of `m`; no symmetry check.
pub(crate) fn unskew_unchecked(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// `Π_y x = (I − y yᵀ) x`, the component of `x` orthogonal to `y`.
pub fn project_orthogonal(y: &UnitVector3, x: &Vector3<f64>) -> Vector3<f64> {
    x - y.0 * y.0.dot(x)
}

/// The projector `I − y yᵀ` as a matrix.
pub fn projector(y: &UnitVector3) -> Matrix3<f64> {
    Matrix3::identity() - y.0 * y.0.transpose()
}

/// Rotation by `angle` about `axis`, right-hand rule:
/// `I + sin ψ S(a) + (1 − cos ψ) S(a)²`.
pub fn rodrigues(angle: f64, axis: &UnitVector3) -> Rotation3 {
    let k = skew(&axis.0);
    Rotation3(Matrix3::identity() + k * angle.sin() + (k * k) * (1.0 - angle.cos()))
}

/// Nearest rotation in the Frobenius sense (orthogonal polar factor).
///
/// Used to remove drift after integrating `Ṙ = R S(ω)`.
pub fn renormalize(m: &Matrix3<f64>) -> Result<Rotation3, GeometryError> {
    let det = m.determinant();
    if !(det > 0.0) {
        return Err(GeometryError::DegenerateMatrix(det));
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::DegenerateMatrix(det)),
    };
    let r = u * v_t;
    // det(m) > 0 already rules out the reflection case; one extra Newton-polar
    // step squeezes the SVD round-off down to a few ulps.
    let r = 0.5 * (r + r.try_inverse().unwrap_or(r).transpose());
    Ok(Rotation3(r))
}
