//! Exact Lie theory of `sl2(R)` in the frame `{V, X, U}`.
//!
//! ```text
//!     V = [[0, 0], [1, 0]]    X = [[1/2, 0], [0, -1/2]]    U = [[0, 1], [0, 0]]
//! ```
//!
//! `V`, `X`, `U` generate the unstable horocycle flow, the geodesic flow and the
//! (stable) horocycle flow. Every flow acts by right multiplication,
//! `p -> p * exp(t W)`, and the adjoint is the right-action convention
//! `Ad_g(W) = g^-1 W g`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::dd::Mat2Dd;
use crate::error::{Error, Result};

/// Real 2x2 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// A point of `SL(2,R)`: a [`Mat2`] with unit determinant.
///
/// Unit determinant is a convention checked by [`Mat2::is_unimodular`], not a
/// type-level guarantee; corrupted inputs are detected where it matters
/// (adjoint, lattice validation).
pub type GroupElement = Mat2;

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// Inverse of a unimodular matrix (the adjugate).
    pub fn inverse(&self) -> Mat2 {
        Mat2::new(self.d, -self.b, -self.c, self.a)
    }

    /// Inverse dividing by the actual determinant.
    pub fn inverse_exact(&self) -> Mat2 {
        self.inverse().scale(1.0 / self.det())
    }

    pub fn scale(&self, k: f64) -> Mat2 {
        Mat2::new(k * self.a, k * self.b, k * self.c, k * self.d)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.a
            .abs()
            .max(self.b.abs())
            .max(self.c.abs())
            .max(self.d.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    pub fn is_unimodular(&self, tol: f64) -> bool {
        (self.det() - 1.0).abs() <= tol
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// Largest entrywise difference.
    pub fn max_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }

    /// Rotation matrix `[[cos a, -sin a], [sin a, cos a]]`; acts on the upper
    /// half-plane as a rotation by `2a` about `i`.
    pub fn rotation(angle: f64) -> Mat2 {
        let (s, c) = angle.sin_cos();
        Mat2::new(c, -s, s, c)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    #[inline]
    fn mul(self, r: Mat2) -> Mat2 {
        Mat2 {
            a: self.a * r.a + self.b * r.c,
            b: self.a * r.b + self.b * r.d,
            c: self.c * r.a + self.d * r.c,
            d: self.c * r.b + self.d * r.d,
        }
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, r: Mat2) -> Mat2 {
        Mat2::new(self.a + r.a, self.b + r.b, self.c + r.c, self.d + r.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, r: Mat2) -> Mat2 {
        Mat2::new(self.a - r.a, self.b - r.b, self.c - r.c, self.d - r.d)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// `W = v V + x X + u U`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct AlgebraVector {
    pub v: f64,
    pub x: f64,
    pub u: f64,
}

impl AlgebraVector {
    pub const V: AlgebraVector = AlgebraVector::new(1.0, 0.0, 0.0);
    pub const X: AlgebraVector = AlgebraVector::new(0.0, 1.0, 0.0);
    pub const U: AlgebraVector = AlgebraVector::new(0.0, 0.0, 1.0);

    pub const fn new(v: f64, x: f64, u: f64) -> Self {
        AlgebraVector { v, x, u }
    }

    pub fn scale(&self, k: f64) -> Self {
        AlgebraVector::new(k * self.v, k * self.x, k * self.u)
    }

    pub fn max_abs(&self) -> f64 {
        self.v.abs().max(self.x.abs()).max(self.u.abs())
    }

    /// Euclidean norm with `{V, X, U}` declared orthonormal.
    pub fn norm(&self) -> f64 {
        (self.v * self.v + self.x * self.x + self.u * self.u).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.x.is_finite() && self.u.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.v == 0.0 && self.x == 0.0 && self.u == 0.0
    }

    pub fn components(&self) -> [f64; 3] {
        [self.v, self.x, self.u]
    }

    /// `x^2/4 + u v`; the square of the matrix of `W` is this multiple of the identity.
    pub fn discriminant(&self) -> f64 {
        self.x * self.x / 4.0 + self.u * self.v
    }

    /// Hyperbolic speed of `g exp(sW) . i` in the upper half-plane; constant in `s`.
    pub fn surface_speed(&self) -> f64 {
        (self.x * self.x + (self.u + self.v) * (self.u + self.v)).sqrt()
    }

    /// Largest componentwise difference relative to `max(1, |other|)`.
    pub fn rel_diff(&self, other: &AlgebraVector) -> f64 {
        let scale = other.max_abs().max(1.0);
        (*self - *other).max_abs() / scale
    }
}

impl Add for AlgebraVector {
    type Output = AlgebraVector;
    fn add(self, r: AlgebraVector) -> AlgebraVector {
        AlgebraVector::new(self.v + r.v, self.x + r.x, self.u + r.u)
    }
}

impl Sub for AlgebraVector {
    type Output = AlgebraVector;
    fn sub(self, r: AlgebraVector) -> AlgebraVector {
        AlgebraVector::new(self.v - r.v, self.x - r.x, self.u - r.u)
    }
}

impl fmt::Display for AlgebraVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}V + {}X + {}U", self.v, self.x, self.u)
    }
}

/// Trace-zero matrix `[[x/2, u], [v, -x/2]]` of `W`.
pub fn basis_matrix(w: &AlgebraVector) -> Mat2 {
    Mat2::new(w.x / 2.0, w.u, w.v, -w.x / 2.0)
}

/// Coordinates of a matrix in the frame, plus the trace residual it had.
pub fn decompose(m: &Mat2) -> (AlgebraVector, f64) {
    (AlgebraVector::new(m.c, m.a - m.d, m.b), m.a + m.d)
}

// Below this |s^2 Δ| the cosh/sinh (or cos/sin) branches are replaced by their
// Taylor series; above it the closed forms are accurate to a few ulps.
const SERIES_CUTOFF: f64 = 1e-3;
// |Δ| at or below this is treated as nilpotent.
const NILPOTENT_CUTOFF: f64 = 1e-14;

/// `(cosh(s√Δ), sinh(s√Δ)/√Δ)`, continued analytically through `Δ <= 0`.
fn exp_coefficients(delta: f64, s: f64) -> (f64, f64) {
    if delta.abs() <= NILPOTENT_CUTOFF && (s * s * delta).abs() <= NILPOTENT_CUTOFF {
        return (1.0, s);
    }
    let z = s * s * delta;
    if z.abs() < SERIES_CUTOFF {
        let c = 1.0 + z / 2.0 * (1.0 + z / 12.0 * (1.0 + z / 30.0 * (1.0 + z / 56.0)));
        let sh = s * (1.0 + z / 6.0 * (1.0 + z / 20.0 * (1.0 + z / 42.0 * (1.0 + z / 72.0))));
        (c, sh)
    } else if delta > 0.0 {
        let r = delta.sqrt();
        ((s * r).cosh(), (s * r).sinh() / r)
    } else {
        let r = (-delta).sqrt();
        ((s * r).cos(), (s * r).sin() / r)
    }
}

/// `exp(s W)` in closed form.
///
/// The matrix `M` of `W` satisfies `M^2 = Δ I` with `Δ = x^2/4 + uv`, so
/// `exp(sM) = C(s) I + S(s) M` where `(C, S)` are `(cosh, sinh/√Δ)`,
/// `(cos, sin/√-Δ)` or `(1, s)` depending on the sign of `Δ`.
pub fn exp_algebra(w: &AlgebraVector, s: f64) -> GroupElement {
    let m = basis_matrix(w);
    let delta = w.discriminant();
    if delta > 0.0 && s.abs() * delta.sqrt() > 1.0 {
        // Spectral projectors (I ± M/r)/2 avoid the cancellation in cosh − sinh.
        let r = delta.sqrt();
        let (ep, em) = ((s * r).exp() / 2.0, (-s * r).exp() / 2.0);
        let diff = (ep - em) / r;
        return Mat2::new(
            ep * (1.0 + m.a / r) + em * (1.0 - m.a / r),
            diff * m.b,
            diff * m.c,
            ep * (1.0 + m.d / r) + em * (1.0 - m.d / r),
        );
    }
    let (c, sh) = exp_coefficients(delta, s);
    Mat2::new(c + sh * m.a, sh * m.b, sh * m.c, c + sh * m.d)
}

/// `Ad_g(W) = g^-1 W g`, expressed in the frame.
pub fn adjoint(g: &GroupElement, w: &AlgebraVector) -> Result<AlgebraVector> {
    let det = g.det();
    if !g.is_finite() || (det - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnimodular { det });
    }
    let conj = g.inverse() * basis_matrix(w) * *g;
    let (coords, trace) = decompose(&conj);
    let scale = conj.max_abs().max(1.0);
    if !coords.is_finite() || trace.abs() > 1e-9 * scale {
        return Err(Error::Decomposition { residual: trace });
    }
    Ok(coords)
}

/// Tangent of `s -> p exp(sW) exp(tU)`: `Ad_{exp(tU)} W`.
pub fn sheared_tangent(w: &AlgebraVector, t: f64) -> AlgebraVector {
    AlgebraVector::new(w.v, w.x - 2.0 * t * w.v, w.u + w.x * t - w.v * t * t)
}

/// Tangent of the sheared arc after `h^u_{-t} ∘ g_{2 log t}`:
/// `-u V - (x + 2u/t) X + (u/t^2 + x/t - v) U`.
///
/// Bounded by 3 in every component once `t >= 1` and `max |coeff| <= 1`.
pub fn renormalized_tangent(w: &AlgebraVector, t: f64) -> AlgebraVector {
    AlgebraVector::new(-w.u, -(w.x + 2.0 * w.u / t), w.u / (t * t) + w.x / t - w.v)
}

/// The group element `exp(tU) exp(2 log t X) exp(-tV) = [[0, 1], [-1, 1/t]]`
/// whose adjoint maps a direction to its renormalized sheared tangent.
///
/// The product is formed in double-double with `exp(2 log t X) = diag(t, 1/t)`,
/// since its upper-left entry cancels from size `t`.
pub fn renormalizing_element(t: f64) -> GroupElement {
    let one = TwoFloat::from(1.0);
    let zero = TwoFloat::from(0.0);
    let tt = TwoFloat::from(t);
    let shear = Mat2Dd {
        a: one,
        b: tt,
        c: zero,
        d: one,
    };
    let geodesic = Mat2Dd {
        a: tt,
        b: zero,
        c: zero,
        d: TwoFloat::new_div(1.0, t),
    };
    let back = Mat2Dd {
        a: one,
        b: zero,
        c: -tt,
        d: one,
    };
    (shear * geodesic * back).to_f64()
}

/// Logarithm of an element of `SL(2,R)` near the identity (trace > -2), in the frame.
pub fn log_near_identity(h: &GroupElement) -> Result<AlgebraVector> {
    let half_tr = h.trace() / 2.0;
    if !(half_tr > -1.0) {
        return Err(Error::InvalidArgument(format!(
            "no real logarithm: trace {} <= -2",
            h.trace()
        )));
    }
    // h = cosh θ I + (sinh θ / θ) log h, so log h = θ / sinh θ (h - cosh θ I).
    let q = half_tr * half_tr - 1.0;
    let factor = if q.abs() < 1e-6 {
        // θ / sinh θ as a series in q = sinh^2 θ.
        1.0 - q / 6.0 + 3.0 * q * q / 40.0
    } else if q > 0.0 {
        let th = half_tr.acosh();
        th / th.sinh()
    } else {
        let th = half_tr.clamp(-1.0, 1.0).acos();
        th / th.sin()
    };
    let m = Mat2::new(h.a - half_tr, h.b, h.c, h.d - half_tr).scale(factor);
    Ok(decompose(&m).0)
}

/// Spectral data attached to the bottom `mu0` of the nonzero Laplace spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub mu0: f64,
    pub nu0: f64,
    pub eps0: u8,
    pub delta0: u8,
}

impl SpectralProfile {
    pub fn from_mu0(mu0: f64) -> Result<Self> {
        if !(mu0 > 0.0) || !mu0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mu0 must be positive, got {mu0}"
            )));
        }
        let nu0 = if mu0 < 0.25 {
            (1.0 - 4.0 * mu0).sqrt()
        } else {
            0.0
        };
        let eps0 = u8::from(mu0 == 0.25);
        let delta0 = u8::from(mu0 >= 0.25);
        Ok(SpectralProfile {
            mu0,
            nu0,
            eps0,
            delta0,
        })
    }

    /// Exponent of `t^-(1-ν0)/2` governing geodesic-arc equidistribution.
    pub fn geodesic_exponent(&self) -> f64 {
        -(1.0 - self.nu0) / 2.0
    }

    /// Exponent of `t^-(1-ν0)` governing arcs with a nonzero `V` component.
    pub fn transverse_exponent(&self) -> f64 {
        -(1.0 - self.nu0)
    }
}
