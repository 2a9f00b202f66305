//! Sheared arcs `s -> p exp(sW) exp(tU)`, their renormalization, the
//! partition into short windows and the shadow curves living in `{X, U}`-leaves.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dd::Precision;
use crate::error::{Error, Result};
use crate::lattice::{FuchsianGroupModel, QuotientPoint};
use crate::lie::{
    adjoint, basis_matrix, exp_algebra, log_near_identity, sheared_tangent, AlgebraVector, Mat2,
};
use crate::observables::Observable;
use crate::summation::Neumaier;

/// The arc `s -> h_t(φ^W_s(p))`, `0 <= s <= S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub base: QuotientPoint,
    pub direction: AlgebraVector,
    pub length: f64,
    pub sigma: f64,
    pub horocycle_time: f64,
}

impl ArcSpec {
    pub fn new(
        base: QuotientPoint,
        direction: AlgebraVector,
        length: f64,
        sigma: f64,
        t: f64,
    ) -> Result<Self> {
        if direction.is_zero() {
            return Err(Error::ZeroDirection);
        }
        if !direction.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "direction {direction} is not finite"
            )));
        }
        if !(sigma > 0.0) || !(0.0..=sigma).contains(&length) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= S <= σ and σ > 0, got S = {length}, σ = {sigma}"
            )));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horocycle time must be >= 0, got {t}"
            )));
        }
        Ok(ArcSpec {
            base,
            direction,
            length,
            sigma,
            horocycle_time: t,
        })
    }

    /// The same arc with `max(|v|, |x|, |u|) = 1`, and the scale factor used.
    pub fn normalized(&self) -> Result<(ArcSpec, f64)> {
        let (w, s, sigma, c) = normalize_direction(&self.direction, self.length, self.sigma)?;
        let spec = ArcSpec {
            direction: w,
            length: s,
            sigma,
            ..self.clone()
        };
        Ok((spec, c))
    }
}

/// `(W/c, cS, cσ, c)` with `c = max(|v|, |x|, |u|)`; the arcs `exp(sW)`,
/// `s ∈ [0, S]`, and `exp(s'W/c)`, `s' ∈ [0, cS]`, coincide.
pub fn normalize_direction(
    w: &AlgebraVector,
    s: f64,
    sigma: f64,
) -> Result<(AlgebraVector, f64, f64, f64)> {
    if w.is_zero() {
        return Err(Error::ZeroDirection);
    }
    let c = w.max_abs();
    Ok((w.scale(1.0 / c), c * s, c * sigma, c))
}

/// `ℓ(σ) = 4 max |entries of d/ds exp(sW)|` over `s ∈ [0, σ]`, using
/// `d/ds exp(sW) = exp(sW) W`, on a grid of `10^4` points inflated by 1%.
pub fn ell_constant(w: &AlgebraVector, sigma: f64) -> f64 {
    const GRID: usize = 10_000;
    let m = basis_matrix(w);
    let mut best: f64 = 0.0;
    for j in 0..=GRID {
        let s = sigma * j as f64 / GRID as f64;
        best = best.max((exp_algebra(w, s) * m).max_abs());
    }
    4.0 * best * 1.01
}

/// Nodes per coarse quadrature grid:
/// `ceil(κ S max(1, |v|t² + |x|t + |u|) / r_b)`.
///
/// The sheared arc sweeps a `Û`-length of about `S |u + xt − vt²|`, and the
/// observable varies on the scale `r_b`.
pub fn node_count(w: &AlgebraVector, length: f64, t: f64, bump_radius: f64, kappa: f64) -> usize {
    let speed = (w.v.abs() * t * t + w.x.abs() * t + w.u.abs()).max(1.0);
    ((kappa * length * speed / bump_radius).ceil() as usize).max(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Sheared,
    Renormalized,
    Shadow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveNode {
    pub s: f64,
    pub point: QuotientPoint,
    pub tangent: AlgebraVector,
}

/// A sampled rectifiable arc in `M` with its tangents in the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    pub nodes: Vec<CurveNode>,
}

impl Curve {
    pub fn new(kind: CurveKind, nodes: Vec<CurveNode>) -> Result<Self> {
        if nodes.windows(2).any(|w| !(w[1].s > w[0].s)) {
            return Err(Error::InvalidArgument(
                "curve parameters must increase strictly".into(),
            ));
        }
        if nodes.iter().any(|n| !n.tangent.is_finite()) {
            return Err(Error::InvalidArgument(
                "curve tangents must be finite".into(),
            ));
        }
        Ok(Curve { kind, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trapezoid integral of `g(node)` over the parameter.
    fn integrate<F: FnMut(&CurveNode) -> f64>(&self, mut g: F) -> f64 {
        let mut acc = Neumaier::default();
        let mut prev: Option<(f64, f64)> = None;
        for node in &self.nodes {
            let val = g(node);
            if let Some((s0, v0)) = prev {
                acc.add(0.5 * (node.s - s0) * (v0 + val));
            }
            prev = Some((node.s, val));
        }
        acc.total()
    }

    /// `(∫|V̂|, ∫|X̂|, ∫|Û|)` along the curve.
    pub fn one_form_lengths(&self) -> AlgebraVector {
        AlgebraVector::new(
            self.integrate(|n| n.tangent.v.abs()),
            self.integrate(|n| n.tangent.x.abs()),
            self.integrate(|n| n.tangent.u.abs()),
        )
    }

    /// Length in the left-invariant metric with `{V, X, U}` orthonormal.
    pub fn arclength(&self) -> f64 {
        self.integrate(|n| n.tangent.norm())
    }

    /// Splits at node `k`, which both halves share.
    pub fn split_at(&self, k: usize) -> Result<(Curve, Curve)> {
        if k == 0 || k + 1 >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "split index {k} must be interior"
            )));
        }
        Ok((
            Curve {
                kind: self.kind,
                nodes: self.nodes[..=k].to_vec(),
            },
            Curve {
                kind: self.kind,
                nodes: self.nodes[k..].to_vec(),
            },
        ))
    }

    /// The curve `s -> γ(s) g`, reduced, with tangents `Ad_g`.
    pub fn translate(&self, group: &FuchsianGroupModel, g: &Mat2) -> Result<Curve> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                Ok(CurveNode {
                    s: n.s,
                    point: group.reduce(&(n.point.rep * *g))?,
                    tangent: adjoint(g, &n.tangent)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Curve {
            kind: self.kind,
            nodes,
        })
    }

    /// Writes `s, a, b, c, d, v, x, u` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "a", "b", "c", "d", "v", "x", "u"])?;
        for n in &self.nodes {
            let r = n.point.rep;
            let t = n.tangent;
            w.write_record(
                [n.s, r.a, r.b, r.c, r.d, t.v, t.x, t.u]
                    .iter()
                    .map(|x| x.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Nodes at `s_j = jS/(n-1)`: `h_t(φ^W_{s_j}(p))` with tangent `Ad_{exp(tU)} W`.
///
/// The geodesic/transverse part is flowed in bounded steps; the horocycle
/// push is a single product reduced afterwards (its entries grow only linearly in `t`).
pub fn sheared_arc(group: &FuchsianGroupModel, spec: &ArcSpec, n: usize) -> Result<Curve> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a curve needs at least 2 nodes, got {n}"
        )));
    }
    let t = spec.horocycle_time;
    let shear = exp_algebra(&AlgebraVector::U, t);
    let tangent = sheared_tangent(&spec.direction, t);
    let nodes = (0..n)
        .map(|j| {
            let s = spec.length * j as f64 / (n - 1) as f64;
            let moved = group.quotient_flow(&spec.base, &spec.direction, s)?;
            Ok(CurveNode {
                s,
                point: group.reduce(&(moved.rep * shear))?,
                tangent,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Curve::new(CurveKind::Sheared, nodes)
}

/// Applies `h^u_{-t} ∘ g_{2 log t}` to a sheared arc at time `t >= 1`.
pub fn renormalize_arc(group: &FuchsianGroupModel, curve: &Curve, t: f64) -> Result<Curve> {
    if !(t >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "renormalization needs t >= 1, got {t}"
        )));
    }
    if curve.kind != CurveKind::Sheared {
        return Err(Error::InvalidArgument(
            "only sheared arcs can be renormalized".into(),
        ));
    }
    let r = exp_algebra(&AlgebraVector::X, 2.0 * t.ln()) * exp_algebra(&AlgebraVector::V, -t);
    let mut out = curve.translate(group, &r)?;
    out.kind = CurveKind::Renormalized;
    Ok(out)
}

/// `p_k = φ^W_{k/(ℓt)}(p)` for `k = 0 .. ⌊Sℓt⌋ − 1`.
pub fn partition_arc(
    group: &FuchsianGroupModel,
    spec: &ArcSpec,
    ell: f64,
) -> Result<Vec<QuotientPoint>> {
    let t = spec.horocycle_time;
    if !(t >= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "partition needs t >= 2, got {t}"
        )));
    }
    let count = (spec.length * ell * t).floor() as usize;
    let step = exp_algebra(&spec.direction, 1.0 / (ell * t));
    let mut out = Vec::with_capacity(count);
    let mut p = spec.base.clone();
    for k in 0..count {
        if k > 0 {
            let next = group.reduce(&(p.rep * step))?;
            p = QuotientPoint {
                rep: next.rep,
                word: Vec::new(),
            };
        }
        out.push(p.clone());
    }
    Ok(out)
}

/// Coordinates of the shadow point:
/// `exp(sW) exp(tU) exp(J0 V) = exp(J2 U) exp(J1 X)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowFrame {
    pub j0: f64,
    pub j1: f64,
    pub j2: f64,
}

/// `J0 = −c/(d+ct)`, `J1 = −2 log(d+ct)`, `J2 = (b+at)/(d+ct)` for `exp(sW) = [[a, b], [c, d]]`.
pub fn shadow_frame(w: &AlgebraVector, t: f64, s: f64) -> Result<ShadowFrame> {
    let e = exp_algebra(w, s);
    let q = e.d + e.c * t;
    if !(q.abs() >= 0.5) {
        return Err(Error::ShadowWindow { value: q.abs() });
    }
    Ok(ShadowFrame {
        j0: -e.c / q,
        j1: -2.0 * q.ln(),
        j2: (e.b + e.a * t) / q,
    })
}

/// Tangent of `s -> exp(J2(s) U) exp(J1(s) X)`: `J1' X + J2' e^{−J1} U`.
///
/// With `P = at + b`, `Q = ct + d`: `J1' = −2Q'/Q` and the `Û`-component is
/// `P'Q − PQ'`, which equals `u + xt − vt²` for every `s`.
pub fn shadow_tangent(w: &AlgebraVector, t: f64, s: f64) -> Result<AlgebraVector> {
    let e = exp_algebra(w, s);
    let de = e * basis_matrix(w);
    let (p, q) = (e.a * t + e.b, e.c * t + e.d);
    let (dp, dq) = (de.a * t + de.b, de.c * t + de.d);
    if !(q.abs() >= 0.5) {
        return Err(Error::ShadowWindow { value: q.abs() });
    }
    Ok(AlgebraVector::new(0.0, -2.0 * dq / q, dp * q - p * dq))
}

/// Leaf-local lift `p_k exp(J2 U) exp(J1 X)` of the shadow point at `s`.
pub fn shadow_point(p_k: &Mat2, frame: &ShadowFrame) -> Mat2 {
    *p_k * exp_algebra(&AlgebraVector::U, frame.j2) * exp_algebra(&AlgebraVector::X, frame.j1)
}

/// Shadow curve `γ̄_k(s) = h⁻_{J0(s)} γ_{p_k,t}(s)` on `s ∈ [0, 1/(ℓt)]`.
///
/// Points are kept as leaf-local lifts of `p_k` (not re-reduced).
pub fn shadow_curve(
    p_k: &QuotientPoint,
    w: &AlgebraVector,
    t: f64,
    ell: f64,
    n: usize,
) -> Result<Curve> {
    if !(t >= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "shadow curves need t >= 2, got {t}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a curve needs at least 2 nodes, got {n}"
        )));
    }
    let window = 1.0 / (ell * t);
    let nodes = (0..n)
        .map(|j| {
            let s = window * j as f64 / (n - 1) as f64;
            let frame = shadow_frame(w, t, s)?;
            Ok(CurveNode {
                s,
                point: QuotientPoint::from_rep(shadow_point(&p_k.rep, &frame)),
                tangent: shadow_tangent(w, t, s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Curve::new(CurveKind::Shadow, nodes)
}

/// Distance between the sheared-arc point and its shadow at `s`, in the
/// left-invariant metric with `{V, X, U}` orthonormal, measured between the
/// two lifts of `p_k`.
pub fn shadow_distance(p_k: &Mat2, w: &AlgebraVector, t: f64, s: f64) -> Result<f64> {
    let frame = shadow_frame(w, t, s)?;
    let on_arc = *p_k * exp_algebra(w, s) * exp_algebra(&AlgebraVector::U, t);
    let shadow = shadow_point(p_k, &frame);
    Ok(log_near_identity(&(on_arc.inverse() * shadow))?.norm())
}

/// `∫_γ f Û`: trapezoid rule in the curve parameter against the `Û`-component of the tangent.
pub fn line_integral_u(f: &Observable, curve: &Curve) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::InvalidArgument(
            "line integral needs at least 2 nodes".into(),
        ));
    }
    Ok(curve.integrate(|n| f.eval(&n.point) * n.tangent.u))
}

/// Walks the sheared arc `s_j = s0 + jh`, `j = 0..n`, calling `visit(j, rep)`
/// with a reduced representative of `p exp(s_j W) exp(tU)`.
///
/// Consecutive nodes differ by right multiplication with `exp(h Ad_{exp(tU)} W)`;
/// every block of nodes sweeping about 8 units of length restarts from an
/// anchor formed directly (in the requested precision), so rounding drift
/// stays bounded. Block boundaries depend only on the arguments.
#[allow(clippy::too_many_arguments)]
pub fn walk_sheared_arc<F: FnMut(usize, &Mat2)>(
    group: &FuchsianGroupModel,
    base: &Mat2,
    w: &AlgebraVector,
    t: f64,
    s0: f64,
    h: f64,
    n: usize,
    precision: Precision,
    mut visit: F,
) -> Result<()> {
    let tangent = sheared_tangent(w, t);
    let step = exp_algebra(&tangent, h);
    let shear = exp_algebra(&AlgebraVector::U, t);
    let per_step = (h * tangent.norm()).abs().max(f64::MIN_POSITIVE);
    let block = ((8.0 / per_step).floor() as usize).clamp(1, 1 << 20);
    let mut rep = Mat2::IDENTITY;
    for j in 0..n {
        if j % block == 0 {
            let s = s0 + j as f64 * h;
            rep = group.reduce_product(&[*base, exp_algebra(w, s), shear], precision)?;
        } else {
            rep = rep * step;
            group.reduce_in_place(&mut rep)?;
        }
        visit(j, &rep);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::hyp_dist;
    use crate::rng;
    use approx::assert_relative_eq;

    fn bolza() -> FuchsianGroupModel {
        FuchsianGroupModel::bolza()
    }

    #[test]
    fn normalize_examples() {
        let (w, s, sigma, c) =
            normalize_direction(&AlgebraVector::new(0.5, -1.0, 0.2), 0.7, 1.0).unwrap();
        assert_eq!(
            (w, s, sigma, c),
            (AlgebraVector::new(0.5, -1.0, 0.2), 0.7, 1.0, 1.0)
        );
        let (w, s, _, c) =
            normalize_direction(&AlgebraVector::new(2.0, 0.0, 0.0), 1.0, 1.0).unwrap();
        assert_eq!((w, s, c), (AlgebraVector::V, 2.0, 2.0));
        assert!(exp_algebra(&w, s).max_diff(&exp_algebra(&AlgebraVector::V, 2.0)) == 0.0);
        assert!(matches!(
            normalize_direction(&AlgebraVector::default(), 1.0, 1.0),
            Err(Error::ZeroDirection)
        ));
    }

    #[test]
    fn ell_constant_closed_forms() {
        assert_relative_eq!(
            ell_constant(&AlgebraVector::V, 1.0) / 1.01,
            4.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            ell_constant(&AlgebraVector::U, 1.0) / 1.01,
            4.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            ell_constant(&AlgebraVector::X, 1.0) / 1.01,
            2.0 * 0.5f64.exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn arc_spec_validation() {
        let p = QuotientPoint::from_rep(Mat2::IDENTITY);
        assert!(ArcSpec::new(p.clone(), AlgebraVector::default(), 0.5, 1.0, 1.0).is_err());
        assert!(ArcSpec::new(p.clone(), AlgebraVector::X, 1.5, 1.0, 1.0).is_err());
        assert!(ArcSpec::new(p.clone(), AlgebraVector::X, 0.5, 1.0, -1.0).is_err());
        assert!(ArcSpec::new(p, AlgebraVector::X, 0.5, 1.0, 1.0).is_ok());
    }

    #[test]
    fn sheared_arc_at_time_zero_is_the_plain_arc() {
        let g = bolza();
        let mut r = rng::stream(2, 0);
        let p = g.haar_sample(&mut r).unwrap();
        let w = AlgebraVector::new(0.3, 1.0, -0.5);
        let spec = ArcSpec::new(p.clone(), w, 0.8, 1.0, 0.0).unwrap();
        let curve = sheared_arc(&g, &spec, 9).unwrap();
        for node in &curve.nodes {
            let direct = g.reduce(&(p.rep * exp_algebra(&w, node.s))).unwrap();
            assert!(hyp_dist(direct.surface_point(), node.point.surface_point()) < 1e-10);
            assert_eq!(node.tangent, w);
        }
    }

    #[test]
    fn partition_count() {
        let g = bolza();
        let p = QuotientPoint::from_rep(Mat2::IDENTITY);
        let spec = ArcSpec::new(p.clone(), AlgebraVector::X, 1.0, 1.0, 10.0).unwrap();
        let pts = partition_arc(&g, &spec, 4.0).unwrap();
        assert_eq!(pts.len(), 40);
        assert_eq!(pts[0], p);
        let direct = g
            .reduce(&exp_algebra(&AlgebraVector::X, 7.0 / 40.0))
            .unwrap();
        assert!(hyp_dist(direct.surface_point(), pts[7].surface_point()) < 1e-12);
    }

    #[test]
    fn shadow_frame_examples() {
        let f = shadow_frame(&AlgebraVector::V, 7.0, 0.0).unwrap();
        assert_eq!((f.j0, f.j1, f.j2), (0.0, 0.0, 7.0));
        let (s, t) = (0.01, 5.0);
        let f = shadow_frame(&AlgebraVector::V, t, s).unwrap();
        assert_relative_eq!(f.j0, -s / (1.0 + s * t), max_relative = 1e-14);
        assert_relative_eq!(f.j1, -2.0 * (1.0 + s * t).ln(), max_relative = 1e-14);
        assert_relative_eq!(f.j2, t / (1.0 + s * t), max_relative = 1e-14);
        // Outside the window d + ct drops below 1/2.
        assert!(matches!(
            shadow_frame(&AlgebraVector::V, 2.0, -0.3),
            Err(Error::ShadowWindow { .. })
        ));
    }

    #[test]
    fn shadow_tangent_for_v() {
        let tan = shadow_tangent(&AlgebraVector::V, 2.0, 0.01).unwrap();
        assert_relative_eq!(tan.u, -4.0, max_relative = 1e-14);
        assert_eq!(tan.v, 0.0);
    }

    #[test]
    fn walker_matches_direct_reduction() {
        let g = bolza();
        let mut r = rng::stream(8, 0);
        let p = g.haar_sample(&mut r).unwrap();
        let w = AlgebraVector::new(1.0, 0.4, -0.2);
        let t = 40.0;
        let h = 1e-4;
        let mut seen = Vec::new();
        walk_sheared_arc(
            &g,
            &p.rep,
            &w,
            t,
            0.0,
            h,
            3000,
            Precision::Double,
            |j, rep| {
                if j % 97 == 0 {
                    seen.push((j, *rep));
                }
            },
        )
        .unwrap();
        let shear = exp_algebra(&AlgebraVector::U, t);
        for (j, rep) in seen {
            let direct = g
                .reduce(&(p.rep * exp_algebra(&w, j as f64 * h) * shear))
                .unwrap();
            let a = QuotientPoint::from_rep(rep).surface_point();
            assert!(hyp_dist(a, direct.surface_point()) < 1e-9);
        }
    }

    #[test]
    fn node_count_policy() {
        assert_eq!(node_count(&AlgebraVector::V, 1.0, 10.0, 1.0, 20.0), 2000);
        assert_eq!(node_count(&AlgebraVector::X, 0.5, 0.0, 1.0, 20.0), 10);
        assert_eq!(node_count(&AlgebraVector::X, 0.0, 0.0, 1.0, 20.0), 2);
    }

    #[test]
    fn curve_split_and_csv() {
        let g = bolza();
        let spec = ArcSpec::new(
            QuotientPoint::from_rep(Mat2::IDENTITY),
            AlgebraVector::X,
            1.0,
            1.0,
            3.0,
        )
        .unwrap();
        let c = sheared_arc(&g, &spec, 11).unwrap();
        let (a, b) = c.split_at(4).unwrap();
        assert_eq!(a.len() + b.len(), 12);
        assert!(c.split_at(0).is_err());
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,a,b,c,d,v,x,u\n"));
        assert_eq!(text.lines().count(), 12);
    }
}
