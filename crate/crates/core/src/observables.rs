//! Smooth zero-average test functions on `M`.
//!
//! An observable is a compactly supported bump on `SL(2,R)`, periodized over
//! `Γ` by a finite Poincaré sum and centered by a Monte Carlo estimate of its
//! mean. Bumps are even under `g -> -g`, so they descend to the quotient
//! whether or not `-I` belongs to `Γ`.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{FuchsianGroupModel, HaarSampler, HalfPlanePoint, QuotientPoint};
use crate::lie::{exp_algebra, AlgebraVector, GroupElement, Mat2};
use crate::rng;
use crate::summation::Neumaier;

/// How the deviation `ρ` from the bump center is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpProfile {
    /// `ρ = ‖g0⁻¹ g − I‖_F`, a bump on the frame bundle.
    Frame,
    /// `ρ² = ‖g0⁻¹ g‖_F² − 2 = 2 (cosh d − 1)` with `d` the distance between
    /// the surface points of `g` and `g0`; invariant under right rotations.
    Surface,
}

/// `φ(g) = amplitude · (1 − ρ²/r_b²)₊^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub center: GroupElement,
    pub radius: f64,
    pub smoothness: u32,
    pub amplitude: f64,
    pub profile: BumpProfile,
}

impl BumpSpec {
    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Observable(format!(
                "bump radius must be positive, got {}",
                self.radius
            )));
        }
        if self.smoothness < 6 {
            return Err(Error::Observable(format!(
                "smoothness must be at least 6, got {}",
                self.smoothness
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Observable("amplitude must be finite".into()));
        }
        if !self.center.is_unimodular(1e-9) {
            return Err(Error::NotUnimodular {
                det: self.center.det(),
            });
        }
        if self.profile == BumpProfile::Frame && self.radius >= std::f64::consts::SQRT_2 {
            // Keeps the supports around g0 and -g0 disjoint.
            return Err(Error::Observable(format!(
                "frame bump radius {} must be below √2",
                self.radius
            )));
        }
        Ok(())
    }

    #[inline]
    fn profile_value(&self, rho_sq: f64) -> f64 {
        let x = 1.0 - rho_sq / (self.radius * self.radius);
        if x <= 0.0 {
            0.0
        } else {
            self.amplitude * x.powi(self.smoothness as i32)
        }
    }

    /// The bump at `h = g0⁻¹ g`.
    #[inline]
    fn eval_relative(&self, h: &Mat2) -> f64 {
        match self.profile {
            BumpProfile::Frame => {
                let minus = (h.a - 1.0).powi(2) + h.b * h.b + h.c * h.c + (h.d - 1.0).powi(2);
                let plus = (h.a + 1.0).powi(2) + h.b * h.b + h.c * h.c + (h.d + 1.0).powi(2);
                self.profile_value(minus) + self.profile_value(plus)
            }
            BumpProfile::Surface => self.profile_value(h.frobenius_sq() - 2.0),
        }
    }

    /// `φ(g)`.
    pub fn eval(&self, g: &GroupElement) -> f64 {
        self.eval_relative(&(self.center.inverse() * *g))
    }

    /// `∫ φ` over `PSL(2,R)` for the Haar measure that projects to hyperbolic
    /// area with unit fibre mass; the mean of the periodized bump is this
    /// integral over the area of `M`.
    pub fn integral(&self) -> f64 {
        let k = self.smoothness as f64;
        let rb2 = self.radius * self.radius;
        match self.profile {
            // With u = cosh d the radial integral of (1 − 2(u − 1)/r_b²)^k is r_b²/(2(k + 1)).
            BumpProfile::Surface => self.amplitude * PI * rb2 / (k + 1.0),
            // For h = k(a) diag(e^{r/2}, e^{-r/2}) k(b), ‖h − I‖² = 2 cosh r + 2 − 4 cosh(r/2) cos(a + b);
            // the two sheets ±g0 contribute equally.
            BumpProfile::Frame => {
                let r_max = 2.0 * ((1.0 + (1.0 + rb2).sqrt()) / 2.0).acosh();
                let inner = |r: f64| {
                    let c = (r / 2.0).cosh();
                    let cos_max = ((2.0 * r.cosh() + 2.0 - rb2) / (4.0 * c)).clamp(-1.0, 1.0);
                    let psi_max = cos_max.acos();
                    simpson(-psi_max, psi_max, FRAME_QUADRATURE_NODES, |psi| {
                        self.profile_value(2.0 * r.cosh() + 2.0 - 4.0 * c * psi.cos())
                    })
                };
                2.0 * simpson(0.0, r_max, FRAME_QUADRATURE_NODES, |r| r.sinh() * inner(r))
            }
        }
    }

    /// A draw `g0 x` with `x` distributed on `SL(2,R)` proportionally to one
    /// sheet of `|φ|`; its image in `PSL(2,R)` has density proportional to `|φ|`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GroupElement> {
        if self.amplitude == 0.0 {
            return Err(Error::Observable("cannot sample a zero bump".into()));
        }
        if self.profile == BumpProfile::Surface {
            let spin = |rng: &mut R, r: f64| {
                let a = Mat2::new((r / 2.0).exp(), 0.0, 0.0, (-r / 2.0).exp());
                Mat2::rotation(rng.random::<f64>() * TAU)
                    * a
                    * Mat2::rotation(rng.random::<f64>() * TAU)
            };
            // With w = 2 (cosh r − 1)/r_b² the radial density is ∝ (1 − w)^k on [0, 1].
            let w = 1.0
                - rng
                    .random::<f64>()
                    .powf(1.0 / (self.smoothness as f64 + 1.0));
            let r = (1.0 + w * self.radius * self.radius / 2.0).acosh();
            return Ok(self.center * spin(rng, r));
        }
        // For x = k(a) diag(e^{r/2}, e^{-r/2}) k(b) the Haar density is ∝ sinh r and
        // ‖x − I‖² depends on r and ψ = a + b only. The support needs r <= r_max and
        // |ψ| <= acos(1 − r_b²/4) (the widest window, at r = 0), so propose
        // cosh r uniform, ψ uniform in that window, and accept by the profile.
        let rb2 = self.radius * self.radius;
        let cosh_max = (2.0 * ((1.0 + (1.0 + rb2).sqrt()) / 2.0).acosh()).cosh();
        let psi_max = (1.0 - rb2 / 4.0).acos();
        let amp = self.amplitude.abs();
        for _ in 0..1_000_000 {
            let r = (1.0 + rng.random::<f64>() * (cosh_max - 1.0)).acosh();
            let psi = psi_max * (2.0 * rng.random::<f64>() - 1.0);
            let a = rng.random::<f64>() * TAU;
            let x = Mat2::rotation(a)
                * Mat2::new((r / 2.0).exp(), 0.0, 0.0, (-r / 2.0).exp())
                * Mat2::rotation(psi - a);
            let rho_sq = (x.a - 1.0).powi(2) + x.b * x.b + x.c * x.c + (x.d - 1.0).powi(2);
            if rng.random::<f64>() * amp < self.profile_value(rho_sq).abs() {
                return Ok(self.center * x);
            }
        }
        Err(Error::Observable("bump sampler failed to accept".into()))
    }

    /// Radius of the surface disc around `g0 . i` containing the support.
    pub fn support_surface_radius(&self) -> f64 {
        let cosh = match self.profile {
            // ‖h‖ ≤ √2 + r_b and cosh d(h.i, i) = ‖h‖²/2.
            BumpProfile::Frame => (std::f64::consts::SQRT_2 + self.radius).powi(2) / 2.0,
            BumpProfile::Surface => 1.0 + self.radius * self.radius / 2.0,
        };
        cosh.acosh()
    }
}

/// `φ(g)` for a bump spec.
pub fn bump_eval(spec: &BumpSpec, g: &GroupElement) -> f64 {
    spec.eval(g)
}

/// A truncated Poincaré series `f(Γg) = Σ_{γ ∈ ball} φ(γ g) − mean`.
#[derive(Clone, Debug)]
pub struct Observable {
    pub bump: BumpSpec,
    /// Every `γ` with `φ(γ g) ≠ 0` for some `g` whose surface point lies in
    /// the inflated disc around the domain center. One element per `±γ`.
    pub lattice_ball: Vec<GroupElement>,
    pub mean_hat: f64,
    pub mean_stderr: f64,
    pub sup_hat: f64,
    pub sobolev_hat: f64,
    pub sobolev_order: u32,
    pub k_invariant: bool,
    group: Arc<FuchsianGroupModel>,
    /// `g0⁻¹ γ` for `γ` in the ball.
    shifted: Vec<Mat2>,
    /// Representatives with `cosh d(rep . i, center)` above this are reduced before evaluation.
    raw_cosh_limit: f64,
}

/// Inflation of the domain radius covered by the lattice ball.
const DOMAIN_MARGIN: f64 = 1.1;

pub const DEFAULT_SOBOLEV_ORDER: u32 = 6;

/// Purpose tag for the centering stream.
const MEAN_STREAM: u64 = 0x6d65_616e;

impl Observable {
    /// Builds the uncentered observable (`mean_hat = 0`).
    pub fn new(group: Arc<FuchsianGroupModel>, bump: BumpSpec, sobolev_order: u32) -> Result<Self> {
        bump.validate()?;
        if sobolev_order > 6 {
            return Err(Error::Observable(format!(
                "Sobolev proxy order {sobolev_order} exceeds 6"
            )));
        }
        check_injectivity(&group, &bump)?;

        let domain_radius = group.domain_radius() * DOMAIN_MARGIN;
        let mut reach = bump.support_surface_radius() + domain_radius;
        let mut obs = None;
        for _ in 0..4 {
            let ball = enumerate_ball(&group, &bump.center, reach, domain_radius)?;
            let candidate = Observable {
                shifted: ball.iter().map(|g| bump.center.inverse() * *g).collect(),
                lattice_ball: ball,
                bump: bump.clone(),
                mean_hat: 0.0,
                mean_stderr: 0.0,
                sup_hat: 0.0,
                sobolev_hat: 0.0,
                sobolev_order,
                k_invariant: bump.profile == BumpProfile::Surface,
                raw_cosh_limit: domain_radius.cosh(),
                group: group.clone(),
            };
            if candidate.truncation_defect(256, 0x7275_6e63) <= 1e-8 {
                obs = Some(candidate);
                break;
            }
            reach *= 1.25;
        }
        let mut obs = obs.ok_or_else(|| {
            Error::Observable(
                "lattice ball still incomplete after enlarging the search radius".into(),
            )
        })?;
        obs.sup_hat = obs.bump.amplitude.abs();
        obs.sobolev_hat = obs.sobolev_proxy(sobolev_order);
        if obs.k_invariant {
            let dev = obs.rotation_defect(16, 32, 0x6b69_6e76);
            if dev > 1e-8 {
                return Err(Error::Observable(format!(
                    "K-invariance check failed: deviation {dev:e}"
                )));
            }
        }
        Ok(obs)
    }

    /// Right-rotation-invariant observable depending only on the surface point.
    pub fn k_invariant(
        group: Arc<FuchsianGroupModel>,
        center: HalfPlanePoint,
        radius: f64,
        smoothness: u32,
        amplitude: f64,
    ) -> Result<Self> {
        let bump = BumpSpec {
            center: center.frame(),
            radius,
            smoothness,
            amplitude,
            profile: BumpProfile::Surface,
        };
        Self::new(group, bump, DEFAULT_SOBOLEV_ORDER)
    }

    pub fn group(&self) -> &Arc<FuchsianGroupModel> {
        &self.group
    }

    /// Truncated series without mean subtraction, at an unreduced element.
    ///
    /// Exact when the surface point of `g` lies within the inflated domain disc.
    #[inline]
    pub fn eval_raw(&self, g: &Mat2) -> f64 {
        let mut s = 0.0;
        for m in &self.shifted {
            s += self.bump.eval_relative(&(*m * *g));
        }
        s
    }

    /// `f(Γ g)` for a representative in (or near) the fundamental domain.
    #[inline]
    pub fn eval(&self, p: &QuotientPoint) -> f64 {
        self.eval_group(&p.rep)
    }

    /// `f(Γ g)` for any `g`; reduces first when `g` lies far from the domain.
    #[inline]
    pub fn eval_group(&self, g: &Mat2) -> f64 {
        if self.group.center_cosh(g) <= self.raw_cosh_limit {
            self.eval_raw(g) - self.mean_hat
        } else {
            let mut r = *g;
            match self.group.reduce_in_place(&mut r) {
                Ok(_) => self.eval_raw(&r) - self.mean_hat,
                Err(_) => f64::NAN,
            }
        }
    }

    /// Series summed over every distinct `±γ` of word length `<= depth`, minus the mean.
    pub fn eval_brute_force(&self, g: &Mat2, depth: usize) -> f64 {
        let mut seen = HashMap::new();
        let mut s = 0.0;
        for (gamma, _) in self.group.word_ball(depth) {
            if seen.insert(sign_key(&gamma), ()).is_none() {
                s += self.bump.eval(&(gamma * *g));
            }
        }
        s - self.mean_hat
    }

    /// Sets `mean_hat` to the Monte Carlo mean of the uncentered series over
    /// `n` Haar samples and records its standard error.
    pub fn make_zero_average(mut self, n: usize, seed: u64) -> Result<Self> {
        if n < 10_000 {
            return Err(Error::InvalidArgument(format!(
                "centering needs at least 10^4 samples, got {n}"
            )));
        }
        let mut rng = rng::task_stream(seed, MEAN_STREAM, 0, 0);
        let mut sampler = HaarSampler::new(&self.group);
        let mut sum = Neumaier::default();
        let mut sum_sq = Neumaier::default();
        for _ in 0..n {
            let p = sampler.sample(&mut rng)?;
            let v = self.eval_raw(&p.rep);
            sum.add(v);
            sum_sq.add(v * v);
        }
        let nf = n as f64;
        let mean = sum.total() / nf;
        let var = ((sum_sq.total() / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
        self.mean_hat = mean;
        self.mean_stderr = (var / nf).sqrt();
        self.sup_hat = self.bump.amplitude.abs() + mean.abs();
        Ok(self)
    }

    /// Sets `mean_hat` to the exact mean `∫ φ / area(M)`, available when the
    /// genus of the quotient is known.
    pub fn center_exactly(mut self) -> Result<Self> {
        let area = self.group.area().ok_or_else(|| {
            Error::Observable("exact centering needs the genus of the quotient".into())
        })?;
        let mean = self.bump.integral() / area;
        self.mean_hat = mean;
        self.mean_stderr = 0.0;
        self.sup_hat = self.bump.amplitude.abs() + mean.abs();
        Ok(self)
    }

    /// Largest disagreement between the truncated sums at `g` and at `γ g` for
    /// generators `γ`, over domain samples where both lie in the inflated disc.
    pub fn truncation_defect(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = rng::stream(seed, 0);
        let mut sampler = HaarSampler::new(&self.group);
        let mut worst: f64 = 0.0;
        let mut taken = 0;
        let mut tries = 0;
        while taken < samples && tries < 200 * samples.max(1) {
            tries += 1;
            let Some(z) = sampler.propose(&mut rng) else {
                continue;
            };
            taken += 1;
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            let g = z.frame() * Mat2::rotation(theta);
            let here = self.eval_raw(&g);
            for gen in &self.group.generators {
                let moved = *gen * g;
                if self.group.center_cosh(&moved) <= self.raw_cosh_limit {
                    worst = worst.max((self.eval_raw(&moved) - here).abs());
                }
            }
        }
        worst
    }

    /// Largest change of `f` under right rotations, over random points near the support.
    pub fn rotation_defect(&self, points: usize, angles: usize, seed: u64) -> f64 {
        let mut rng = rng::stream(seed, 0);
        let mut worst: f64 = 0.0;
        for p in self.probe_points(points, seed) {
            let base = self.eval_group(&p);
            for _ in 0..angles {
                let k = Mat2::rotation(std::f64::consts::TAU * rng.random::<f64>());
                worst = worst.max((self.eval_group(&(p * k)) - base).abs());
            }
        }
        worst
    }

    /// Deterministic points `g0 exp(W)` spread over the bump support.
    pub fn probe_points(&self, n: usize, seed: u64) -> Vec<Mat2> {
        let mut rng = rng::stream(seed, 1);
        let r = self.bump.radius;
        let mut out = vec![self.bump.center];
        while out.len() < n {
            let w = AlgebraVector::new(
                r * (rng.random::<f64>() - 0.5),
                r * (rng.random::<f64>() - 0.5),
                r * (rng.random::<f64>() - 0.5),
            );
            out.push(self.bump.center * exp_algebra(&w, 1.0));
        }
        out
    }

    /// Frame-derivative proxy for the order-`order` Sobolev norm: the maximum,
    /// over probe points near the support, of `Σ |W1 ⋯ Wk f|` over all words
    /// in `{V, X, U}` of length `k <= order`, by nested central differences.
    ///
    /// This is a proxy for comparisons only; it is not the `(1 + Δ)^{r/2}` norm.
    pub fn sobolev_proxy(&self, order: u32) -> f64 {
        let steps: Vec<[Mat2; 6]> = (0..=order)
            .map(|k| {
                let h = sobolev_step(k);
                [
                    exp_algebra(&AlgebraVector::V, h),
                    exp_algebra(&AlgebraVector::V, -h),
                    exp_algebra(&AlgebraVector::X, h),
                    exp_algebra(&AlgebraVector::X, -h),
                    exp_algebra(&AlgebraVector::U, h),
                    exp_algebra(&AlgebraVector::U, -h),
                ]
            })
            .collect();
        let mut best: f64 = 0.0;
        for p in self.probe_points(24, 0x736f_626f) {
            let mut total = Neumaier::default();
            for (k, steps_k) in steps.iter().enumerate() {
                let h = sobolev_step(k as u32);
                let mut word = vec![0usize; k];
                loop {
                    total.add(self.nested_difference(&p, &word, steps_k, h).abs());
                    if !next_word(&mut word) {
                        break;
                    }
                }
            }
            best = best.max(total.total());
        }
        best
    }

    /// Central-difference estimate of `(W_{w[0]} ⋯ W_{w[k-1]} f)(g)`.
    fn nested_difference(&self, g: &Mat2, word: &[usize], steps: &[Mat2; 6], h: f64) -> f64 {
        match word.split_first() {
            None => self.eval_group(g),
            Some((&w, rest)) => {
                let plus = self.nested_difference(&(*g * steps[2 * w]), rest, steps, h);
                let minus = self.nested_difference(&(*g * steps[2 * w + 1]), rest, steps, h);
                (plus - minus) / (2.0 * h)
            }
        }
    }

    /// Central difference of `s -> f(g exp(sW))` at `s = 0`.
    pub fn directional_derivative(&self, g: &Mat2, w: &AlgebraVector, h: f64) -> f64 {
        let plus = self.eval_group(&(*g * exp_algebra(w, h)));
        let minus = self.eval_group(&(*g * exp_algebra(w, -h)));
        (plus - minus) / (2.0 * h)
    }

    /// Scaled copy: amplitude and mean multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.bump.amplitude *= k;
        out.mean_hat *= k;
        out.mean_stderr *= k.abs();
        out.sup_hat *= k.abs();
        out.sobolev_hat *= k.abs();
        out
    }
}

/// Difference step for derivatives of order `k`: `max(1e-3, ε^{1/(k+2)})`,
/// balancing `O(h²)` truncation against `ε/h^k` roundoff.
pub fn sobolev_step(k: u32) -> f64 {
    f64::EPSILON.powf(1.0 / (k as f64 + 2.0)).max(1e-3)
}

const FRAME_QUADRATURE_NODES: usize = 2000;

/// Composite Simpson rule on `n` (even) intervals.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = Neumaier::default();
    for j in 0..=n {
        let w = if j == 0 || j == n {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc.add(w * f(a + j as f64 * h));
    }
    acc.total() * h / 3.0
}

/// Advances a word over a 3-letter alphabet; false after the last word.
fn next_word(word: &mut [usize]) -> bool {
    for letter in word.iter_mut().rev() {
        if *letter < 2 {
            *letter += 1;
            return true;
        }
        *letter = 0;
    }
    false
}

/// Key identifying `γ` up to sign, rounded to `1e-6`.
fn sign_key(g: &Mat2) -> [i64; 4] {
    let e = g.entries();
    let lead = e.iter().copied().find(|x| x.abs() > 1e-6).unwrap_or(1.0);
    let s = lead.signum();
    e.map(|x| (s * x * 1e6).round() as i64)
}

/// Orbit elements `γ` with `d(γ . center, z0) < reach`, by breadth-first search over tiles.
///
/// Tiles `γD` meeting a geodesic from `z0` are face-adjacent in sequence and
/// each has its center within the domain radius of that geodesic, so the
/// search only walks through tiles with centers within `reach + domain_radius`.
fn enumerate_ball(
    group: &FuchsianGroupModel,
    bump_center: &Mat2,
    reach: f64,
    domain_radius: f64,
) -> Result<Vec<Mat2>> {
    let z0_inv = bump_center.inverse();
    // cosh d(γ . center, g0 . i) = ‖g0⁻¹ γ c‖² / 2 with c the center frame.
    let c = group.center.frame();
    let dist = |g: &Mat2| (0.5 * (z0_inv * *g * c).frobenius_sq()).max(1.0).acosh();

    let start = {
        let r = group.reduce(bump_center)?;
        *bump_center * r.rep.inverse()
    };
    let walk_limit = reach + domain_radius;
    let mut seen = HashMap::new();
    let mut queue = VecDeque::from([start]);
    seen.insert(sign_key(&start), ());
    let mut out = Vec::new();
    while let Some(g) = queue.pop_front() {
        let d = dist(&g);
        if d < reach {
            out.push(g);
        }
        for gen in &group.generators {
            let next = g * *gen;
            if dist(&next) < walk_limit && seen.insert(sign_key(&next), ()).is_none() {
                queue.push_back(next);
            }
        }
        if seen.len() > 200_000 {
            return Err(Error::Observable(
                "lattice ball enumeration exploded".into(),
            ));
        }
    }
    Ok(out)
}

/// Rejects bumps whose support could overlap its own translates.
fn check_injectivity(group: &FuchsianGroupModel, bump: &BumpSpec) -> Result<()> {
    let rep = group.reduce(&bump.center)?.rep;
    let z = crate::lattice::mobius(&rep, HalfPlanePoint::I)?;
    let mut displacement = f64::INFINITY;
    for (gamma, word) in group.word_ball(3) {
        if word.is_empty() {
            continue;
        }
        if gamma.max_diff(&Mat2::IDENTITY) < 1e-9 || gamma.max_diff(&-Mat2::IDENTITY) < 1e-9 {
            continue;
        }
        let w = crate::lattice::mobius(&gamma, z)?;
        displacement = displacement.min(crate::lattice::hyp_dist(z, w));
    }
    let support = bump.support_surface_radius();
    if support >= displacement / 2.0 {
        return Err(Error::Observable(format!(
            "support radius {support:.4} is not below the injectivity radius {:.4} at the bump center",
            displacement / 2.0
        )));
    }
    Ok(())
}

/// JSON description of an observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    #[serde(default = "default_center")]
    pub center: Mat2,
    pub radius: f64,
    #[serde(default = "default_smoothness")]
    pub smoothness: u32,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub k_invariant: bool,
    pub seed: u64,
    #[serde(default = "default_centering_samples")]
    pub centering_samples: usize,
    #[serde(default = "default_sobolev_order")]
    pub sobolev_order: u32,
    #[serde(default)]
    pub centering: Centering,
}

/// How an observable spec estimates the mean it subtracts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Monte Carlo over `centering_samples` Haar samples.
    #[default]
    MonteCarlo,
    /// `∫ φ / area(M)`; needs the genus.
    Exact,
}

fn default_center() -> Mat2 {
    Mat2::IDENTITY
}
fn default_smoothness() -> u32 {
    6
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_centering_samples() -> usize {
    100_000
}
fn default_sobolev_order() -> u32 {
    DEFAULT_SOBOLEV_ORDER
}

impl ObservableSpec {
    /// Builds and centers the observable.
    pub fn build(&self, group: Arc<FuchsianGroupModel>) -> Result<Observable> {
        let bump = BumpSpec {
            center: self.center,
            radius: self.radius,
            smoothness: self.smoothness,
            amplitude: self.amplitude,
            profile: if self.k_invariant {
                BumpProfile::Surface
            } else {
                BumpProfile::Frame
            },
        };
        let obs = Observable::new(group, bump, self.sobolev_order)?;
        match self.centering {
            Centering::MonteCarlo => obs.make_zero_average(self.centering_samples, self.seed),
            Centering::Exact => obs.center_exactly(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bolza() -> Arc<FuchsianGroupModel> {
        Arc::new(FuchsianGroupModel::bolza())
    }

    fn frame_bump(radius: f64, amplitude: f64) -> BumpSpec {
        BumpSpec {
            center: exp_algebra(&AlgebraVector::new(0.3, 0.5, -0.2), 1.0),
            radius,
            smoothness: 6,
            amplitude,
            profile: BumpProfile::Frame,
        }
    }

    #[test]
    fn bump_eval_examples() {
        let b = frame_bump(0.8, 1.0);
        assert_eq!(bump_eval(&b, &b.center), 1.0);
        // ρ = r_b / 2 along a diagonal deviation.
        let h = Mat2::new(
            1.0 + 0.2 * std::f64::consts::SQRT_2,
            0.0,
            0.0,
            1.0 + 0.2 * std::f64::consts::SQRT_2,
        );
        let g = b.center * h;
        let direct = (1.0f64 - 0.25).powi(6);
        assert_relative_eq!(bump_eval(&b, &g), direct, max_relative = 1e-12);
        assert_relative_eq!(bump_eval(&b, &g), 0.177_978_515_625, max_relative = 1e-12);
        let far = b.center * Mat2::new(2.0, 0.0, 0.0, 0.5);
        assert_eq!(bump_eval(&b, &far), 0.0);
    }

    #[test]
    fn surface_bump_is_rotation_invariant() {
        let b = BumpSpec {
            profile: BumpProfile::Surface,
            ..frame_bump(1.0, 1.0)
        };
        let g = b.center * exp_algebra(&AlgebraVector::new(0.1, 0.2, 0.3), 1.0);
        for k in 0..20 {
            let r = Mat2::rotation(0.37 * k as f64);
            assert!((bump_eval(&b, &(g * r)) - bump_eval(&b, &g)).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_bumps_are_rejected() {
        let g = bolza();
        assert!(Observable::new(g.clone(), frame_bump(-1.0, 1.0), 2).is_err());
        assert!(Observable::new(
            g.clone(),
            BumpSpec {
                smoothness: 4,
                ..frame_bump(0.5, 1.0)
            },
            2
        )
        .is_err());
        assert!(Observable::new(g.clone(), frame_bump(1.5, 1.0), 2).is_err());
        // Surface radius 3 reaches past the injectivity radius everywhere.
        let big = BumpSpec {
            profile: BumpProfile::Surface,
            ..frame_bump(3.0, 1.0)
        };
        assert!(matches!(
            Observable::new(g, big, 2),
            Err(Error::Observable(_))
        ));
    }

    #[test]
    fn centered_surface_bump_needs_the_neighbouring_tiles() {
        let f = Observable::k_invariant(bolza(), HalfPlanePoint::I, 1.2, 6, 1.0).unwrap();
        assert!(f.lattice_ball.len() > 1);
        assert!(f
            .lattice_ball
            .iter()
            .any(|g| g.max_diff(&Mat2::IDENTITY) < 1e-12));
        assert!(f.truncation_defect(500, 9) <= 1e-12);
    }

    #[test]
    fn zero_amplitude_is_identically_zero() {
        let f = Observable::new(bolza(), frame_bump(0.6, 0.0), 2)
            .unwrap()
            .make_zero_average(10_000, 1)
            .unwrap();
        assert_eq!(f.mean_hat, 0.0);
        assert_eq!(f.eval(&QuotientPoint::from_rep(f.bump.center)), 0.0);
        assert_eq!(f.sobolev_proxy(2), 0.0);
    }

    #[test]
    fn centering_rejects_small_samples() {
        let f = Observable::new(bolza(), frame_bump(0.6, 1.0), 2).unwrap();
        assert!(f.make_zero_average(100, 1).is_err());
    }

    #[test]
    fn sobolev_proxy_is_homogeneous() {
        let f = Observable::new(bolza(), frame_bump(0.6, 1.0), 3).unwrap();
        let g = Observable::new(bolza(), frame_bump(0.6, 2.0), 3).unwrap();
        assert_relative_eq!(
            g.sobolev_proxy(3),
            2.0 * f.sobolev_proxy(3),
            max_relative = 1e-6
        );
    }

    #[test]
    fn sobolev_step_schedule() {
        assert_eq!(sobolev_step(1), 1e-3);
        assert!(sobolev_step(6) > sobolev_step(4));
        assert!(sobolev_step(6) < 0.02);
    }

    #[test]
    fn word_enumeration_covers_all_words() {
        let mut w = vec![0usize; 3];
        let mut count = 1;
        while next_word(&mut w) {
            count += 1;
        }
        assert_eq!(count, 27);
        assert!(!next_word(&mut []));
    }

    #[test]
    fn spec_round_trip() {
        let spec = ObservableSpec {
            center: Mat2::IDENTITY,
            radius: 1.2,
            smoothness: 6,
            amplitude: 1.0,
            k_invariant: true,
            seed: 4,
            centering_samples: 10_000,
            sobolev_order: 2,
            centering: Centering::Exact,
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ObservableSpec>(&text).unwrap(), spec);
        let minimal: ObservableSpec =
            serde_json::from_str(r#"{"radius": 1.0, "seed": 3}"#).unwrap();
        assert_eq!(minimal.smoothness, 6);
        assert!(!minimal.k_invariant);
    }

    #[test]
    fn exact_mean_matches_monte_carlo() {
        let g = bolza();
        let surface =
            Observable::k_invariant(g.clone(), HalfPlanePoint::new(0.2, 1.3), 1.2, 6, 1.0).unwrap();
        let frame = Observable::new(g, frame_bump(0.6, 1.0), 2).unwrap();
        for obs in [surface, frame] {
            let exact = obs.clone().center_exactly().unwrap();
            let mc = obs.make_zero_average(200_000, 21).unwrap();
            assert!(
                (exact.mean_hat - mc.mean_hat).abs() < 4.0 * mc.mean_stderr,
                "exact {} vs Monte Carlo {} ± {}",
                exact.mean_hat,
                mc.mean_hat,
                mc.mean_stderr
            );
            assert_eq!(exact.mean_stderr, 0.0);
        }
    }

    #[test]
    fn exact_mean_needs_the_genus() {
        let mut g = FuchsianGroupModel::bolza();
        g.genus = None;
        let obs = Observable::k_invariant(Arc::new(g), HalfPlanePoint::I, 1.0, 6, 1.0).unwrap();
        assert!(obs.center_exactly().is_err());
    }

    #[test]
    fn surface_integral_closed_form_matches_quadrature() {
        let b = BumpSpec {
            center: Mat2::IDENTITY,
            radius: 1.1,
            smoothness: 7,
            amplitude: 2.0,
            profile: BumpProfile::Surface,
        };
        let r_max = b.support_surface_radius();
        let num = 2.0
            * PI
            * simpson(0.0, r_max, 4000, |r| {
                r.sinh() * b.profile_value(2.0 * r.cosh() - 2.0)
            });
        assert_relative_eq!(b.integral(), num, max_relative = 1e-9);
    }
}
