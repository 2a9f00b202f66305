//! The compact quotient `M = Γ \ SL(2,R)`.
//!
//! `Γ` acts on the left; the surface point of `g` is `g . i` in the upper
//! half-plane. A coset is represented by the element of the coset whose surface
//! point lies in the Dirichlet domain of `Γ` centered at the model's center.
//! Greedy descent over the face-pairing generators finds that representative.

use std::f64::consts::{FRAC_PI_8, PI, SQRT_2};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dd::{Mat2Dd, Precision};
use crate::error::{Error, Result};
use crate::lie::{exp_algebra, AlgebraVector, GroupElement, Mat2};

/// Point of the upper half-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint {
    pub re: f64,
    pub im: f64,
}

impl HalfPlanePoint {
    pub const I: HalfPlanePoint = HalfPlanePoint { re: 0.0, im: 1.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        HalfPlanePoint { re, im }
    }

    /// The element `[[√y, x/√y], [0, 1/√y]]` sending `i` to this point.
    pub fn frame(&self) -> Mat2 {
        let sy = self.im.sqrt();
        Mat2::new(sy, self.re / sy, 0.0, 1.0 / sy)
    }
}

/// `(az + b) / (cz + d)`.
pub fn mobius(g: &GroupElement, z: HalfPlanePoint) -> Result<HalfPlanePoint> {
    if !(z.im > 0.0) {
        return Err(Error::NotInHalfPlane { im: z.im });
    }
    // (a z + b) / (c z + d) with z = x + iy; numerator times conj(denominator).
    let (nr, ni) = (g.a * z.re + g.b, g.a * z.im);
    let (dr, di) = (g.c * z.re + g.d, g.c * z.im);
    let den = dr * dr + di * di;
    if den.sqrt() < 1e-30 {
        return Err(Error::SingularMobius {
            denominator: den.sqrt(),
        });
    }
    let re = (nr * dr + ni * di) / den;
    // Im((az+b)/(cz+d)) = det(g) y / |cz+d|^2.
    let im = g.det() * z.im / den;
    Ok(HalfPlanePoint::new(re, im))
}

/// Hyperbolic distance, `2 asinh(|z - w| / (2 sqrt(Im z Im w)))`.
pub fn hyp_dist(z: HalfPlanePoint, w: HalfPlanePoint) -> f64 {
    let dx = z.re - w.re;
    let dy = z.im - w.im;
    let chord = (dx * dx + dy * dy).sqrt() / (2.0 * (z.im * w.im).sqrt());
    2.0 * chord.asinh()
}

/// Axis-aligned box in the upper half-plane enclosing the fundamental domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BoundingBox {
    /// Hyperbolic area `∫∫ dx dy / y^2`.
    pub fn hyperbolic_area(&self) -> f64 {
        (self.x_max - self.x_min) * (1.0 / self.y_min - 1.0 / self.y_max)
    }

    /// Box around the hyperbolic disc of the given radius about `i`.
    pub fn around_disc(radius: f64) -> Self {
        BoundingBox {
            x_min: -radius.sinh(),
            x_max: radius.sinh(),
            y_min: (-radius).exp(),
            y_max: radius.exp(),
        }
    }

    fn is_valid(&self) -> bool {
        self.x_min < self.x_max && 0.0 < self.y_min && self.y_min < self.y_max
    }
}

/// A reduced coset `Γ g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientPoint {
    pub rep: GroupElement,
    /// Generator indices applied (on the left) during reduction, in order.
    pub word: Vec<usize>,
}

impl QuotientPoint {
    pub fn from_rep(rep: GroupElement) -> Self {
        QuotientPoint {
            rep,
            word: Vec::new(),
        }
    }

    pub fn surface_point(&self) -> HalfPlanePoint {
        mobius(&self.rep, HalfPlanePoint::I).expect("reduced representatives are unimodular")
    }
}

/// Co-compact Fuchsian group given by face-pairing generators of a Dirichlet domain.
#[derive(Clone, Debug)]
pub struct FuchsianGroupModel {
    pub label: String,
    /// Generators, closed under inverses.
    pub generators: Vec<GroupElement>,
    /// `inverse_of[k]` is the index of the inverse of generator `k`.
    pub inverse_of: Vec<usize>,
    pub center: HalfPlanePoint,
    pub bounding_box: BoundingBox,
    /// Greedy reduction gives up after this many generator applications.
    pub reduction_cap: usize,
    /// Haar sampling fails when its acceptance rate drops below this.
    pub acceptance_floor: f64,
    /// Genus of the quotient surface when known; fixes the area by Gauss–Bonnet.
    pub genus: Option<u32>,
    /// `c^-1` for the frame `c` of the center, `None` when the center is `i`.
    center_inv: Option<Mat2>,
    /// Points with `cosh d(z, center)` below this lie inside the domain.
    inner_cosh: f64,
    circumradius: OnceLock<f64>,
}

/// Greedy descent stops unless a generator improves the distance by this much.
const DESCENT_TOL: f64 = 1e-12;

impl FuchsianGroupModel {
    /// Builds a model without checking determinants or discreteness.
    ///
    /// Missing inverses are appended.
    pub fn new_unchecked(
        label: impl Into<String>,
        generators: Vec<GroupElement>,
        center: HalfPlanePoint,
        bounding_box: BoundingBox,
    ) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidArgument(
                "group needs at least one generator".into(),
            ));
        }
        if !(center.im > 0.0) {
            return Err(Error::NotInHalfPlane { im: center.im });
        }
        if !bounding_box.is_valid() {
            return Err(Error::InvalidArgument(format!(
                "degenerate bounding box {bounding_box:?}"
            )));
        }
        let mut gens = generators;
        let n0 = gens.len();
        let mut inverse_of = vec![usize::MAX; n0];
        for k in 0..n0 {
            if inverse_of[k] != usize::MAX {
                continue;
            }
            let inv = gens[k].inverse_exact();
            let scale = inv.max_abs().max(1.0);
            let found = (0..gens.len()).find(|&j| gens[j].max_diff(&inv) <= 1e-9 * scale);
            let j = match found {
                Some(j) => j,
                None => {
                    gens.push(inv);
                    inverse_of.push(k);
                    gens.len() - 1
                }
            };
            inverse_of[k] = j;
            inverse_of[j] = k;
        }

        let center_inv = if center == HalfPlanePoint::I {
            None
        } else {
            Some(center.frame().inverse())
        };
        let mut model = FuchsianGroupModel {
            label: label.into(),
            generators: gens,
            inverse_of,
            center,
            bounding_box,
            reduction_cap: 10_000,
            acceptance_floor: 0.02,
            genus: None,
            center_inv,
            inner_cosh: 1.0,
            circumradius: OnceLock::new(),
        };
        // Inside the inscribed disc (half the shortest generator translation)
        // no generator can bring a point closer to the center.
        let min_cosh = model
            .generators
            .iter()
            .map(|g| model.center_cosh(g))
            .fold(f64::INFINITY, f64::min);
        if min_cosh.is_finite() && min_cosh > 1.0 {
            let half = min_cosh.acosh() / 2.0;
            model.inner_cosh = (half * (1.0 - 1e-9)).cosh();
        }
        Ok(model)
    }

    /// Builds and validates a model.
    pub fn new(
        label: impl Into<String>,
        generators: Vec<GroupElement>,
        center: HalfPlanePoint,
        bounding_box: BoundingBox,
    ) -> Result<Self> {
        let model = Self::new_unchecked(label, generators, center, bounding_box)?;
        model.validate()?;
        Ok(model)
    }

    /// The genus-2 Bolza surface group.
    ///
    /// Generators `R^k T R^-k`, `k = 0..3`, and their inverses, where `T` is the
    /// hyperbolic translation of length `2 acosh(1 + √2)` along the unit circle
    /// and `R` rotates the half-plane by `π/4` about `i`. The Dirichlet domain
    /// at `i` is the regular octagon with interior angles `π/4`.
    pub fn bolza() -> Self {
        let mut model = Self::new_unchecked(
            "bolza",
            bolza_generators(),
            HalfPlanePoint::I,
            bolza_bounding_box(),
        )
        .expect("bolza generators are well formed");
        debug_assert!(model.validate().is_ok());
        model.genus = Some(2);
        let _ = model.circumradius.set(bolza_circumradius());
        model
    }

    /// Area of the quotient surface, when the genus is known.
    pub fn area(&self) -> Option<f64> {
        self.genus.map(genus_area)
    }

    /// Checks unit determinants and runs the discreteness probe.
    pub fn validate(&self) -> Result<()> {
        for g in &self.generators {
            if !g.is_finite() || !g.is_unimodular(1e-9) {
                return Err(Error::NotUnimodular { det: g.det() });
            }
        }
        self.discreteness_probe(4, 1e-3)
    }

    /// Fails if a nontrivial element of the word ball moves the center less than `min_displacement`.
    pub fn discreteness_probe(&self, max_len: usize, min_displacement: f64) -> Result<()> {
        for (g, word) in self.word_ball(max_len) {
            if word.is_empty() || is_central(&g) {
                continue;
            }
            let disp = self.center_distance(&g);
            if disp < min_displacement {
                return Err(Error::NotDiscrete {
                    word,
                    displacement: disp,
                });
            }
        }
        Ok(())
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    /// `cosh d(g . i, center)`.
    #[inline]
    pub fn center_cosh(&self, g: &Mat2) -> f64 {
        match &self.center_inv {
            None => 0.5 * g.frobenius_sq(),
            Some(ci) => 0.5 * (*ci * *g).frobenius_sq(),
        }
    }

    /// `d(g . i, center)`.
    pub fn center_distance(&self, g: &Mat2) -> f64 {
        self.center_cosh(g).max(1.0).acosh()
    }

    /// Inradius of the Dirichlet domain (half the shortest generator translation).
    pub fn inradius(&self) -> f64 {
        self.inner_cosh.acosh()
    }

    /// Largest distance from the center to a point of the Dirichlet domain.
    ///
    /// Exact for the Bolza group; otherwise the maximum over a fixed set of
    /// domain samples, which slightly underestimates it.
    pub fn domain_radius(&self) -> f64 {
        *self.circumradius.get_or_init(|| {
            let mut rng = crate::rng::stream(0x0d0a_1a2d, 0);
            let mut sampler = HaarSampler::new(self);
            let mut r = self.inradius();
            for _ in 0..20_000 {
                if let Some(z) = sampler.propose(&mut rng) {
                    r = r.max(self.center_distance(&z.frame()));
                }
            }
            r
        })
    }

    /// All elements given by reduced words of length `<= max_len`, with their words.
    pub fn word_ball(&self, max_len: usize) -> Vec<(Mat2, Vec<usize>)> {
        let mut out = vec![(Mat2::IDENTITY, Vec::new())];
        let mut frontier = vec![(Mat2::IDENTITY, Vec::<usize>::new())];
        for _ in 0..max_len {
            let mut next = Vec::with_capacity(frontier.len() * self.generators.len());
            for (g, word) in &frontier {
                for (k, gen) in self.generators.iter().enumerate() {
                    if let Some(&last) = word.last() {
                        if self.inverse_of[last] == k {
                            continue;
                        }
                    }
                    let mut w = word.clone();
                    w.push(k);
                    next.push((*gen * *g, w));
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    /// Margin by which `g` satisfies the Dirichlet condition:
    /// `min_γ d(γ g . i, center) - d(g . i, center)`.
    pub fn dirichlet_slack(&self, g: &Mat2) -> f64 {
        let here = self.center_distance(g);
        self.generators
            .iter()
            .map(|gen| self.center_distance(&(*gen * *g)) - here)
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the generator giving the largest strict decrease of the distance, if any.
    #[inline]
    fn best_descent(&self, g: &Mat2) -> Option<(usize, Mat2)> {
        let here = self.center_cosh(g);
        if here <= self.inner_cosh {
            return None;
        }
        let mut best: Option<(usize, Mat2, f64)> = None;
        for (k, gen) in self.generators.iter().enumerate() {
            let cand = *gen * *g;
            let c = self.center_cosh(&cand);
            if best.as_ref().is_none_or(|b| c < b.2) {
                best = Some((k, cand, c));
            }
        }
        let (k, cand, c) = best?;
        if c.max(1.0).acosh() < here.max(1.0).acosh() - DESCENT_TOL {
            Some((k, cand))
        } else {
            None
        }
    }

    /// Reduces `g` in place; returns the number of generator applications.
    #[inline]
    pub fn reduce_in_place(&self, g: &mut Mat2) -> Result<usize> {
        let mut steps = 0;
        while let Some((_, next)) = self.best_descent(g) {
            *g = next;
            steps += 1;
            if steps > self.reduction_cap {
                return Err(Error::ReductionCap { iterations: steps });
            }
        }
        Ok(steps)
    }

    /// Representative of `Γ g` whose surface point lies in the Dirichlet domain.
    pub fn reduce(&self, g: &GroupElement) -> Result<QuotientPoint> {
        let mut rep = *g;
        let mut word = Vec::new();
        while let Some((k, next)) = self.best_descent(&rep) {
            rep = next;
            word.push(k);
            if word.len() > self.reduction_cap {
                return Err(Error::ReductionCap {
                    iterations: word.len(),
                });
            }
        }
        Ok(QuotientPoint { rep, word })
    }

    /// Reduces the product of `factors` (left to right), forming it in the requested precision.
    pub fn reduce_product(&self, factors: &[Mat2], precision: Precision) -> Result<Mat2> {
        match precision {
            Precision::Double => {
                let mut g = factors.iter().fold(Mat2::IDENTITY, |acc, m| acc * *m);
                self.reduce_in_place(&mut g)?;
                Ok(g)
            }
            Precision::DoubleDouble => {
                let g = factors.iter().fold(Mat2Dd::from(Mat2::IDENTITY), |acc, m| {
                    acc * Mat2Dd::from(*m)
                });
                self.reduce_dd(g)
            }
        }
    }

    /// Greedy reduction with double-double products.
    pub fn reduce_dd(&self, g: Mat2Dd) -> Result<Mat2> {
        let gens: Vec<Mat2Dd> = self.generators.iter().map(|&m| Mat2Dd::from(m)).collect();
        let center_inv = self.center_inv.map(Mat2Dd::from);
        let cosh = |m: &Mat2Dd| match &center_inv {
            None => 0.5 * m.frobenius_sq(),
            Some(ci) => 0.5 * (*ci * *m).frobenius_sq(),
        };
        let mut g = g;
        let mut steps = 0;
        loop {
            let here = cosh(&g);
            if here <= self.inner_cosh {
                break;
            }
            let (cand, c) = gens
                .iter()
                .map(|gen| {
                    let m = *gen * g;
                    (m, cosh(&m))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one generator");
            if c.max(1.0).acosh() >= here.max(1.0).acosh() - DESCENT_TOL {
                break;
            }
            g = cand;
            steps += 1;
            if steps > self.reduction_cap {
                return Err(Error::ReductionCap { iterations: steps });
            }
        }
        Ok(g.to_f64())
    }

    /// Number of equal steps used to flow by `W` for time `t`, keeping each
    /// step's displacement of the surface point at most `max_displacement`.
    pub fn flow_steps(w: &AlgebraVector, t: f64, max_displacement: f64) -> usize {
        let length = t.abs() * w.surface_speed();
        ((length / max_displacement).ceil() as usize).max(1)
    }

    /// `Γ g -> Γ g exp(tW)`, in steps of surface displacement at most 1 with a
    /// reduction after each step.
    pub fn quotient_flow(
        &self,
        p: &QuotientPoint,
        w: &AlgebraVector,
        t: f64,
    ) -> Result<QuotientPoint> {
        if t == 0.0 {
            return Ok(p.clone());
        }
        let steps = Self::flow_steps(w, t, 1.0);
        let step = exp_algebra(w, t / steps as f64);
        let mut out = p.clone();
        for _ in 0..steps {
            let next = self.reduce(&(out.rep * step))?;
            out.rep = next.rep;
            out.word.extend(next.word);
        }
        Ok(out)
    }

    /// One Haar-distributed point of `M`, by rejection from the bounding box.
    pub fn haar_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<QuotientPoint> {
        let mut sampler = HaarSampler::new(self);
        sampler.sample(rng)
    }

    /// Deterministic set of Haar samples of `M`.
    pub fn haar_samples(&self, n: usize, seed: u64) -> Result<Vec<QuotientPoint>> {
        let mut rng = crate::rng::stream(seed, 0);
        let mut sampler = HaarSampler::new(self);
        (0..n).map(|_| sampler.sample(&mut rng)).collect()
    }

    /// Writes the model as a group definition file.
    pub fn to_definition(&self) -> GroupDefinition {
        GroupDefinition {
            label: self.label.clone(),
            generators: self
                .generators
                .iter()
                .map(|g| g.entries().map(|e| format!("{e:?}")))
                .collect(),
            center: [
                format!("{:?}", self.center.re),
                format!("{:?}", self.center.im),
            ],
            bounding_box: self.bounding_box,
            genus: self.genus,
        }
    }
}

fn is_central(g: &Mat2) -> bool {
    g.max_diff(&Mat2::IDENTITY) < 1e-9 || g.max_diff(&-Mat2::IDENTITY) < 1e-9
}

/// Generators of the Bolza group, with `g_{k+4} = g_k^-1`.
pub fn bolza_generators() -> Vec<Mat2> {
    let diag = 1.0 + SQRT_2;
    let off = (2.0 + 2.0 * SQRT_2).sqrt();
    let t = Mat2::new(diag, off, off, diag);
    let mut gens: Vec<Mat2> = (0..4)
        .map(|k| {
            let r = Mat2::rotation(k as f64 * FRAC_PI_8);
            r * t * r.inverse()
        })
        .collect();
    let inverses: Vec<Mat2> = gens.iter().map(|g| g.inverse()).collect();
    gens.extend(inverses);
    gens
}

/// Circumradius of the Bolza octagon: `cosh R = (1 + √2)^2`.
pub fn bolza_circumradius() -> f64 {
    ((1.0 + SQRT_2) * (1.0 + SQRT_2)).acosh()
}

fn bolza_bounding_box() -> BoundingBox {
    BoundingBox::around_disc(bolza_circumradius() * 1.01)
}

/// Area of a closed hyperbolic surface of the given genus (Gauss–Bonnet).
pub fn genus_area(genus: u32) -> f64 {
    2.0 * PI * (2.0 * genus as f64 - 2.0)
}

/// Rejection sampler for the normalized Haar measure on `M`.
pub struct HaarSampler<'a> {
    group: &'a FuchsianGroupModel,
    pub attempts: u64,
    pub accepted: u64,
}

impl<'a> HaarSampler<'a> {
    pub fn new(group: &'a FuchsianGroupModel) -> Self {
        HaarSampler {
            group,
            attempts: 0,
            accepted: 0,
        }
    }

    /// Proposes a box point with density `∝ 1/y^2`; returns it if it lies in the domain.
    pub fn propose<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<HalfPlanePoint> {
        let bb = &self.group.bounding_box;
        self.attempts += 1;
        let x = bb.x_min + (bb.x_max - bb.x_min) * rng.random::<f64>();
        // 1/y is uniform on [1/y_max, 1/y_min].
        let inv_y = 1.0 / bb.y_max + (1.0 / bb.y_min - 1.0 / bb.y_max) * rng.random::<f64>();
        let z = HalfPlanePoint::new(x, 1.0 / inv_y);
        let g = z.frame();
        if self.group.best_descent(&g).is_none() {
            self.accepted += 1;
            Some(z)
        } else {
            None
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            1.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<QuotientPoint> {
        let floor = self.group.acceptance_floor;
        let patience = (50.0 / floor).ceil() as u64;
        let mut misses = 0;
        loop {
            if let Some(z) = self.propose(rng) {
                let theta = 2.0 * PI * rng.random::<f64>();
                return Ok(QuotientPoint::from_rep(z.frame() * Mat2::rotation(theta)));
            }
            misses += 1;
            if (self.attempts >= 2000 && self.acceptance_rate() < floor) || misses >= patience {
                return Err(Error::AcceptanceTooLow {
                    rate: self.acceptance_rate(),
                    floor,
                });
            }
        }
    }
}

/// Monte Carlo estimate of the hyperbolic area of the Dirichlet domain.
/// Returns `(area, standard error)`.
pub fn estimate_domain_area<R: Rng + ?Sized>(
    group: &FuchsianGroupModel,
    n: u64,
    rng: &mut R,
) -> (f64, f64) {
    let mut sampler = HaarSampler::new(group);
    for _ in 0..n {
        sampler.propose(rng);
    }
    let p = sampler.acceptance_rate();
    let box_area = group.bounding_box.hyperbolic_area();
    (box_area * p, box_area * (p * (1.0 - p) / n as f64).sqrt())
}

/// Group definition file: generators as row-major decimal strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDefinition {
    pub label: String,
    pub generators: Vec<[String; 4]>,
    pub center: [String; 2],
    pub bounding_box: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genus: Option<u32>,
}

fn parse_decimal(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        what: format!("decimal `{s}`"),
        reason: e.to_string(),
    })
}

impl GroupDefinition {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Builds the model without validation.
    pub fn to_model_unchecked(&self) -> Result<FuchsianGroupModel> {
        let generators = self
            .generators
            .iter()
            .map(|e| {
                Ok(Mat2::new(
                    parse_decimal(&e[0])?,
                    parse_decimal(&e[1])?,
                    parse_decimal(&e[2])?,
                    parse_decimal(&e[3])?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let center = HalfPlanePoint::new(
            parse_decimal(&self.center[0])?,
            parse_decimal(&self.center[1])?,
        );
        let mut model = FuchsianGroupModel::new_unchecked(
            self.label.clone(),
            generators,
            center,
            self.bounding_box,
        )?;
        model.genus = self.genus;
        Ok(model)
    }

    pub fn to_model(&self) -> Result<FuchsianGroupModel> {
        let m = self.to_model_unchecked()?;
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mobius_examples() {
        let z = HalfPlanePoint::new(0.3, 1.7);
        assert_eq!(mobius(&Mat2::IDENTITY, z).unwrap(), z);
        let w = mobius(&exp_algebra(&AlgebraVector::U, 2.5), z).unwrap();
        assert_abs_diff_eq!(w.re, 2.8, epsilon = 1e-15);
        assert_abs_diff_eq!(w.im, 1.7, epsilon = 1e-15);
        let s: f64 = 0.8;
        let w = mobius(&exp_algebra(&AlgebraVector::X, s), z).unwrap();
        assert_abs_diff_eq!(w.re, s.exp() * 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(w.im, s.exp() * 1.7, epsilon = 1e-14);
        assert!(mobius(&Mat2::IDENTITY, HalfPlanePoint::new(0.0, -1.0)).is_err());
        assert!(matches!(
            mobius(
                &Mat2::new(1.0, 0.0, 0.0, 0.0),
                HalfPlanePoint::new(0.0, 1e-40)
            ),
            Err(Error::SingularMobius { .. })
        ));
    }

    #[test]
    fn hyp_dist_examples() {
        assert_eq!(hyp_dist(HalfPlanePoint::I, HalfPlanePoint::I), 0.0);
        let e = HalfPlanePoint::new(0.0, std::f64::consts::E);
        assert_abs_diff_eq!(hyp_dist(HalfPlanePoint::I, e), 1.0, epsilon = 1e-15);
        let (z, w) = (
            HalfPlanePoint::new(-0.4, 0.2),
            HalfPlanePoint::new(1.1, 2.3),
        );
        assert_abs_diff_eq!(hyp_dist(z, w), hyp_dist(w, z), epsilon = 1e-15);
        let g = bolza_generators()[2] * exp_algebra(&AlgebraVector::new(0.3, -1.0, 0.5), 0.7);
        let d = hyp_dist(mobius(&g, z).unwrap(), mobius(&g, w).unwrap());
        assert_abs_diff_eq!(d, hyp_dist(z, w), epsilon = 1e-10);
    }

    #[test]
    fn bolza_generators_are_valid() {
        let g = FuchsianGroupModel::bolza();
        assert_eq!(g.num_generators(), 8);
        for (k, gen) in g.generators.iter().enumerate() {
            assert_abs_diff_eq!(gen.det(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(gen.trace(), 2.0 + 2.0 * SQRT_2, epsilon = 1e-12);
            assert!((*gen * g.generators[g.inverse_of[k]]).max_diff(&Mat2::IDENTITY) < 1e-12);
        }
        g.validate().unwrap();
        // Inradius of the regular octagon with angles π/4 is acosh(1 + √2).
        assert_abs_diff_eq!(g.inradius(), (1.0 + SQRT_2).acosh(), epsilon = 1e-8);
    }

    #[test]
    fn corrupted_generator_fails_validation() {
        let mut gens = bolza_generators();
        gens[1].a *= 1.001;
        let m =
            FuchsianGroupModel::new_unchecked("bad", gens, HalfPlanePoint::I, bolza_bounding_box())
                .unwrap();
        assert!(matches!(m.validate(), Err(Error::NotUnimodular { .. })));
    }

    #[test]
    fn indiscrete_group_fails_probe() {
        // A translation so short that a word of length 4 barely moves the center.
        let tiny = exp_algebra(&AlgebraVector::X, 1e-4);
        let m = FuchsianGroupModel::new_unchecked(
            "tiny",
            vec![tiny],
            HalfPlanePoint::I,
            bolza_bounding_box(),
        )
        .unwrap();
        assert!(matches!(m.validate(), Err(Error::NotDiscrete { .. })));
    }

    #[test]
    fn inverses_are_appended() {
        let gens = bolza_generators()[..4].to_vec();
        let m = FuchsianGroupModel::new_unchecked(
            "half",
            gens,
            HalfPlanePoint::I,
            bolza_bounding_box(),
        )
        .unwrap();
        assert_eq!(m.num_generators(), 8);
        for k in 0..8 {
            assert_eq!(m.inverse_of[m.inverse_of[k]], k);
        }
    }

    #[test]
    fn reduce_examples() {
        let g = FuchsianGroupModel::bolza();
        let p = g.reduce(&Mat2::IDENTITY).unwrap();
        assert_eq!(p.rep, Mat2::IDENTITY);
        assert!(p.word.is_empty());
        for gen in &g.generators {
            let p = g.reduce(gen).unwrap();
            let z = p.surface_point();
            assert!(hyp_dist(z, HalfPlanePoint::I) < 1e-9);
        }
    }

    #[test]
    fn estimated_radius_matches_bolza_circumradius() {
        let exact = FuchsianGroupModel::bolza();
        let est = FuchsianGroupModel::new_unchecked(
            "b",
            bolza_generators(),
            HalfPlanePoint::I,
            bolza_bounding_box(),
        )
        .unwrap();
        let r = est.domain_radius();
        assert!(r <= exact.domain_radius() + 1e-9);
        assert!(r > 0.95 * exact.domain_radius(), "{r}");
    }

    #[test]
    fn reduction_cap_is_enforced() {
        let mut g = FuchsianGroupModel::bolza();
        g.reduction_cap = 2;
        let far = exp_algebra(&AlgebraVector::X, 30.0);
        assert!(matches!(g.reduce(&far), Err(Error::ReductionCap { .. })));
    }

    #[test]
    fn dd_reduction_matches_double() {
        let g = FuchsianGroupModel::bolza();
        let mut r = rng::stream(3, 0);
        for _ in 0..50 {
            let p = g.haar_sample(&mut r).unwrap();
            let h = exp_algebra(&AlgebraVector::U, 300.0);
            let a = g.reduce_product(&[p.rep, h], Precision::Double).unwrap();
            let b = g
                .reduce_product(&[p.rep, h], Precision::DoubleDouble)
                .unwrap();
            assert!(a.max_diff(&b) < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn flow_composition() {
        let g = FuchsianGroupModel::bolza();
        let mut r = rng::stream(5, 0);
        let w = AlgebraVector::new(0.2, 1.0, -0.4);
        for _ in 0..10 {
            let p = g.haar_sample(&mut r).unwrap();
            assert_eq!(g.quotient_flow(&p, &w, 0.0).unwrap(), p);
            let a = g
                .quotient_flow(&g.quotient_flow(&p, &w, 2.3).unwrap(), &w, 1.4)
                .unwrap();
            let b = g.quotient_flow(&p, &w, 3.7).unwrap();
            assert!(hyp_dist(a.surface_point(), b.surface_point()) < 1e-8);
        }
    }

    #[test]
    fn haar_frames_cover_the_circle() {
        let g = FuchsianGroupModel::bolza();
        let mut r = rng::stream(11, 0);
        let bins = 16;
        let n = 16_000;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let p = g.haar_sample(&mut r).unwrap();
            // rep = frame(z) * rotation(θ): recover θ from rep and the frame.
            let z = p.surface_point();
            let k = z.frame().inverse() * p.rep;
            let theta = k.c.atan2(k.a).rem_euclid(2.0 * PI);
            counts[((theta / (2.0 * PI) * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 1% critical value of chi-square with 15 degrees of freedom.
        assert!(chi2 < 30.58, "chi2 = {chi2}");
    }

    #[test]
    fn acceptance_floor_rejects_wrong_box() {
        let mut g = FuchsianGroupModel::bolza();
        // A box far from the domain never accepts.
        g.bounding_box = BoundingBox {
            x_min: 50.0,
            x_max: 60.0,
            y_min: 0.5,
            y_max: 2.0,
        };
        let mut r = rng::stream(1, 0);
        assert!(matches!(
            g.haar_sample(&mut r),
            Err(Error::AcceptanceTooLow { .. })
        ));
    }

    #[test]
    fn definition_round_trip() {
        let g = FuchsianGroupModel::bolza();
        let def = g.to_definition();
        let text = serde_json::to_string_pretty(&def).unwrap();
        let back = GroupDefinition::from_json(&text)
            .unwrap()
            .to_model()
            .unwrap();
        for (a, b) in g.generators.iter().zip(&back.generators) {
            assert_eq!(a, b);
        }
        assert_eq!(back.center, g.center);
    }

    #[test]
    fn definition_rejects_bad_decimal() {
        let mut def = FuchsianGroupModel::bolza().to_definition();
        def.generators[0][0] = "1.2.3".into();
        assert!(matches!(def.to_model_unchecked(), Err(Error::Parse { .. })));
    }
}
