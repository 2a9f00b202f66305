//! Push-forward integrals of sheared arcs, decay fits, horocycle mixing and
//! the shadow-distance sweep.
//!
//! Every random draw comes from a stream keyed by the master seed and the
//! task's coordinates, and parallel results are combined in index order, so
//! outputs do not depend on the number of workers.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arcs::{
    ell_constant, node_count, partition_arc, shadow_distance, walk_sheared_arc, ArcSpec,
};
use crate::dd::Precision;
use crate::error::{Error, Result};
use crate::lattice::{FuchsianGroupModel, HaarSampler, QuotientPoint};
use crate::lie::{exp_algebra, sheared_tangent, AlgebraVector, SpectralProfile};
use crate::observables::Observable;
use crate::rng;
use crate::summation::Neumaier;

const BASE_POINT_STREAM: u64 = 0x6261_7365;
const MIXING_STREAM: u64 = 0x6d69_7869;
const SHEARING_STREAM: u64 = 0x7368_6561;
const SHADOW_STREAM: u64 = 0x7368_6164;

/// Spectral bookkeeping for a bottom eigenvalue `mu0`.
pub fn spectral_profile(mu0: f64) -> Result<SpectralProfile> {
    SpectralProfile::from_mu0(mu0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Nodes per bump radius of swept `Û`-length.
    pub kappa: f64,
    pub precision: Precision,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            kappa: 20.0,
            precision: Precision::Double,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushforwardResult {
    pub value: f64,
    /// `|T_n − T_2n|` for the trapezoid sums on `n` and `2n` intervals.
    pub error: f64,
    /// Intervals of the fine grid.
    pub n_nodes: usize,
    pub converged: bool,
}

/// Trapezoid sums on `2n` and `n` intervals from one fine walk.
fn trapezoid_pair(
    f: &Observable,
    base: &QuotientPoint,
    w: &AlgebraVector,
    length: f64,
    t: f64,
    n: usize,
    precision: Precision,
) -> Result<(f64, f64)> {
    let fine = 2 * n;
    let h = length / fine as f64;
    let mut all = Neumaier::default();
    let mut even = Neumaier::default();
    let mut ends = 0.0;
    walk_sheared_arc(
        f.group(),
        &base.rep,
        w,
        t,
        0.0,
        h,
        fine + 1,
        precision,
        |j, rep| {
            let v = f.eval_raw(rep);
            all.add(v);
            if j % 2 == 0 {
                even.add(v);
            }
            if j == 0 || j == fine {
                ends += v;
            }
        },
    )?;
    // The mean is constant, so it is subtracted once per sum.
    let fine_sum = h * (all.total() - 0.5 * ends) - f.mean_hat * length;
    let coarse_sum = 2.0 * h * (even.total() - 0.5 * ends) - f.mean_hat * length;
    Ok((fine_sum, coarse_sum))
}

/// `∫₀^S f(h_t(φ^W_s(p))) ds` by the composite trapezoid rule with the
/// node policy of [`node_count`], refined once if the Richardson probe
/// exceeds `10⁻³ · sup_hat · S`.
pub fn pushforward_integral(
    f: &Observable,
    p: &QuotientPoint,
    w: &AlgebraVector,
    length: f64,
    t: f64,
    opts: &QuadratureOptions,
) -> Result<PushforwardResult> {
    if length == 0.0 {
        return Ok(PushforwardResult {
            value: 0.0,
            error: 0.0,
            n_nodes: 0,
            converged: true,
        });
    }
    if !(length > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "arc length must be positive, got {length}"
        )));
    }
    let threshold = 1e-3 * f.sup_hat * length;
    let mut n = node_count(w, length, t, f.bump.radius, opts.kappa);
    let mut attempt = 0;
    loop {
        let (fine, coarse) = trapezoid_pair(f, p, w, length, t, n, opts.precision)?;
        let error = (fine - coarse).abs();
        if error <= threshold || attempt == 1 {
            return Ok(PushforwardResult {
                value: fine,
                error,
                n_nodes: 2 * n,
                converged: error <= threshold,
            });
        }
        attempt += 1;
        n *= 2;
    }
}

/// `n` Haar-random base points, each from its own stream.
pub fn haar_base_points(
    group: &FuchsianGroupModel,
    n: usize,
    seed: u64,
) -> Result<Vec<QuotientPoint>> {
    (0..n)
        .map(|i| {
            let mut r = rng::task_stream(seed, BASE_POINT_STREAM, i as u64, 0);
            group.haar_sample(&mut r)
        })
        .collect()
}

/// `I(t)` at one base point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    pub t: f64,
    pub base_point: usize,
    pub value: f64,
    pub quad_error: f64,
    pub n_nodes: usize,
    pub converged: bool,
}

/// RMS of `|I(t)|` over the base points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayEntry {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
    pub n_nodes: usize,
    /// Largest per-point quadrature error.
    pub quad_error: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayMetadata {
    pub observable: String,
    pub direction: AlgebraVector,
    pub length: f64,
    pub kappa: f64,
    pub seed: u64,
    pub base_points: usize,
    pub precision: Precision,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    pub entries: Vec<DecayEntry>,
    pub samples: Vec<PointSample>,
    pub metadata: DecayMetadata,
}

impl DecaySeries {
    pub fn all_converged(&self) -> bool {
        self.entries.iter().all(|e| e.converged)
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("empty t grid".into()));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(
            "t grid values must be finite and >= 0".into(),
        ));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "t grid must increase strictly".into(),
        ));
    }
    Ok(())
}

/// `|I(t)|` over `t_grid`, aggregated by RMS over the base points.
///
/// Tasks `(t, base point)` run on the current rayon pool.
pub fn run_decay_experiment(
    f: &Observable,
    w: &AlgebraVector,
    length: f64,
    t_grid: &[f64],
    base_points: &[QuotientPoint],
    opts: &QuadratureOptions,
    metadata: DecayMetadata,
) -> Result<DecaySeries> {
    check_grid(t_grid)?;
    if base_points.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 base points, got {}",
            base_points.len()
        )));
    }
    let tasks: Vec<(usize, usize)> = (0..t_grid.len())
        .flat_map(|i| (0..base_points.len()).map(move |j| (i, j)))
        .collect();
    let samples = tasks
        .par_iter()
        .map(|&(i, j)| {
            let t = t_grid[i];
            let r = pushforward_integral(f, &base_points[j], w, length, t, opts)?;
            Ok(PointSample {
                t,
                base_point: j,
                value: r.value,
                quad_error: r.error,
                n_nodes: r.n_nodes,
                converged: r.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let nb = base_points.len();
    let entries = samples
        .chunks(nb)
        .map(|chunk| {
            let squares: Vec<f64> = chunk.iter().map(|s| s.value * s.value).collect();
            let (m2, se_m2) = mean_and_stderr(&squares);
            let value = m2.sqrt();
            // Delta method for the square root.
            let stderr = if value > 0.0 {
                se_m2 / (2.0 * value)
            } else {
                0.0
            };
            DecayEntry {
                t: chunk[0].t,
                value,
                stderr,
                n_nodes: chunk.iter().map(|s| s.n_nodes).max().unwrap_or(0),
                quad_error: chunk.iter().map(|s| s.quad_error).fold(0.0, f64::max),
                converged: chunk.iter().all(|s| s.converged),
            }
        })
        .collect();
    Ok(DecaySeries {
        entries,
        samples,
        metadata,
    })
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mut acc = Neumaier::default();
    xs.iter().for_each(|&x| acc.add(x));
    let mean = acc.total() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let mut var = Neumaier::default();
    xs.iter().for_each(|&x| var.add((x - mean) * (x - mean)));
    (mean, (var.total() / (n - 1.0) / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `log y = a + b log t`.
    PurePower,
    /// `log y = a + b log t + c log log t`.
    PowerTimesLog,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub log_correction: bool,
    /// Exponent of `log t` in the corrected model.
    pub log_coefficient: Option<f64>,
    pub slope_stderr: f64,
    /// RMS of the unweighted residuals in log space.
    pub residual_rms: f64,
    pub n_points: usize,
}

/// A point for the log-log regression.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitPoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Regression weights for [`fit_points`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWeights {
    /// `(value/stderr)²`, the inverse variance of `log value`; falls back to
    /// unit weights if any standard error is zero.
    InverseVariance,
    Unit,
}

/// Weighted least squares of `log value` against `log t` (and `log log t`).
pub fn fit_points(
    points: &[FitPoint],
    model: DecayModel,
    weights: FitWeights,
) -> Result<FitResult> {
    if points.len() < 5 {
        return Err(Error::Fit(format!(
            "need at least 5 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !(p.value > 0.0) || !(p.t > 1.0)) {
        return Err(Error::Fit(format!(
            "nonpositive value or t <= 1 at t = {} (value {})",
            p.t, p.value
        )));
    }
    let cols = match model {
        DecayModel::PurePower => 2,
        DecayModel::PowerTimesLog => 3,
    };
    let unit = weights == FitWeights::Unit || points.iter().any(|p| !(p.stderr > 0.0));
    let n = points.len();
    let mut a = DMatrix::<f64>::zeros(n, cols);
    let mut b = DVector::<f64>::zeros(n);
    let mut raw = DMatrix::<f64>::zeros(n, cols);
    for (i, p) in points.iter().enumerate() {
        let w = if unit { 1.0 } else { p.value / p.stderr };
        let lt = p.t.ln();
        let row = [1.0, lt, lt.ln()];
        for c in 0..cols {
            a[(i, c)] = w * row[c];
            raw[(i, c)] = row[c];
        }
        b[i] = w * p.value.ln();
    }
    let svd = a.clone().svd(true, true);
    let coef = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let resid_raw: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| p.value.ln() - (raw.row(i) * &coef)[(0, 0)])
        .collect();
    let residual_rms = (resid_raw.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    // Covariance (AᵀA)⁻¹ scaled by the weighted residual variance.
    let dof = (n - cols).max(1) as f64;
    let wres = &b - &a * &coef;
    let scale = wres.norm_squared() / dof;
    let slope_stderr = (a.transpose() * &a)
        .try_inverse()
        .map(|inv| (inv[(1, 1)] * scale).sqrt())
        .unwrap_or(f64::NAN);
    Ok(FitResult {
        slope: coef[1],
        intercept: coef[0],
        log_correction: cols == 3,
        log_coefficient: (cols == 3).then(|| coef[2]),
        slope_stderr,
        residual_rms,
        n_points: n,
    })
}

/// Fits a decay series, excluding entries below ten times their quadrature error.
pub fn fit_decay(series: &DecaySeries, model: DecayModel) -> Result<FitResult> {
    let points: Vec<FitPoint> = series
        .entries
        .iter()
        .filter(|e| e.value >= 10.0 * e.quad_error)
        .map(|e| FitPoint {
            t: e.t,
            value: e.value,
            stderr: e.stderr,
        })
        .collect();
    fit_points(&points, model, FitWeights::InverseVariance)
}

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Running first and second moments.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    sum: Neumaier,
    sum_sq: Neumaier,
    n: usize,
}

impl Moments {
    fn add(&mut self, x: f64) {
        self.sum.add(x);
        self.sum_sq.add(x * x);
        self.n += 1;
    }

    fn merge(&mut self, o: &Moments) {
        self.sum.add(o.sum.total());
        self.sum_sq.add(o.sum_sq.total());
        self.n += o.n;
    }

    fn estimate(&self) -> Estimate {
        if self.n == 0 {
            return Estimate::default();
        }
        let n = self.n as f64;
        let mean = self.sum.total() / n;
        let var = if self.n > 1 {
            ((self.sum_sq.total() - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            value: mean,
            stderr: (var / n).sqrt(),
            samples: self.n,
        }
    }
}

const CHUNK: usize = 1 << 15;

/// Samples split into fixed chunks with their own streams, folded in chunk order.
///
/// `per_chunk` receives the chunk's stream and sample count and returns one
/// accumulator per tracked quantity.
fn chunked<F>(n: usize, seed: u64, purpose: u64, key: u64, per_chunk: F) -> Result<Vec<Moments>>
where
    F: Fn(&mut rng::TaskRng, usize) -> Result<Vec<Moments>> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::task_stream(seed, purpose, key, c as u64);
            per_chunk(&mut r, CHUNK.min(n - c * CHUNK))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total: Vec<Moments> = Vec::new();
    for part in parts {
        if total.is_empty() {
            total = vec![Moments::default(); part.len()];
        }
        for (m, p) in total.iter_mut().zip(&part) {
            m.merge(p);
        }
    }
    Ok(total)
}

/// Haar samples of `K` quantities per point.
fn chunked_haar<const K: usize, F>(
    group: &FuchsianGroupModel,
    n: usize,
    seed: u64,
    purpose: u64,
    key: u64,
    per_sample: F,
) -> Result<Vec<Moments>>
where
    F: Fn(&QuotientPoint) -> [f64; K] + Sync,
{
    chunked(n, seed, purpose, key, |r, count| {
        let mut sampler = HaarSampler::new(group);
        let mut acc = vec![Moments::default(); K];
        for _ in 0..count {
            let p = sampler.sample(r)?;
            for (m, v) in acc.iter_mut().zip(per_sample(&p)) {
                m.add(v);
            }
        }
        Ok(acc)
    })
}

/// How the correlation `⟨f∘h_t, g⟩` is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingEstimator {
    /// Average of `f(h_t p) g(p)` over Haar samples `p`.
    Haar,
    /// Average of `f(h e^{tU})` over `h` drawn with density `∝ |φ_g|` on the
    /// group, scaled by `∫ φ_g / area(M)`; needs the genus.
    #[default]
    Importance,
}

/// `⟨f∘h_t, g⟩` by Monte Carlo over `n_mc` Haar samples.
pub fn mixing_correlation(
    f: &Observable,
    g: &Observable,
    t: f64,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    let shear = exp_algebra(&AlgebraVector::U, t);
    let m = chunked_haar(f.group(), n_mc, seed, MIXING_STREAM, t.to_bits(), |p| {
        [f.eval_group(&(p.rep * shear)) * g.eval(p)]
    })?;
    Ok(m[0].estimate())
}

/// `⟨f∘h_t, g⟩` by importance sampling the bump of `g`.
///
/// Unfolding the Poincaré series of `g` gives
/// `⟨f∘h_t, g⟩ = (∫ φ_g / area) E[f(h e^{tU})] − m_g (∫ φ_f / area − m_f)`
/// with `h` drawn from `|φ_g|` and `m` the subtracted means.
pub fn mixing_correlation_importance(
    f: &Observable,
    g: &Observable,
    t: f64,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    let area = f.group().area().ok_or_else(|| {
        Error::InvalidArgument(
            "importance-sampled correlations need the genus of the quotient".into(),
        )
    })?;
    let offset = g.mean_hat * (f.bump.integral() / area - f.mean_hat);
    if g.bump.amplitude == 0.0 {
        return Ok(Estimate {
            value: -offset,
            stderr: 0.0,
            samples: n_mc,
        });
    }
    let scale = g.bump.integral() / area;
    let shear = exp_algebra(&AlgebraVector::U, t);
    let m = chunked(n_mc, seed, MIXING_STREAM, t.to_bits(), |r, count| {
        let mut acc = Moments::default();
        for _ in 0..count {
            let h = g.bump.sample(r)?;
            acc.add(f.eval_group(&(h * shear)));
        }
        Ok(vec![acc])
    })?;
    let e = m[0].estimate();
    Ok(Estimate {
        value: scale * e.value - offset,
        stderr: scale.abs() * e.stderr,
        samples: e.samples,
    })
}

/// Samples spent at time `t` when `n_mc` go to the largest time `t_max`.
///
/// Correlations shrink like `1/t` while the per-sample spread does not, so the
/// count grows like `t²` to keep the relative precision level; it never drops
/// below one chunk.
pub fn mixing_samples(t: f64, t_max: f64, n_mc: usize) -> usize {
    if !(t_max > 0.0) {
        return n_mc;
    }
    let scaled = (n_mc as f64 * (t / t_max).powi(2)).ceil() as usize;
    scaled.clamp(CHUNK.min(n_mc), n_mc)
}

/// Correlations over a time grid with the chosen estimator; the sample count
/// follows [`mixing_samples`].
pub fn run_mixing_experiment(
    f: &Observable,
    g: &Observable,
    t_grid: &[f64],
    n_mc: usize,
    seed: u64,
    estimator: MixingEstimator,
) -> Result<Vec<MixingEntry>> {
    check_grid(t_grid)?;
    let t_max = t_grid[t_grid.len() - 1];
    t_grid
        .iter()
        .map(|&t| {
            let n_mc = mixing_samples(t, t_max, n_mc);
            let e = match estimator {
                MixingEstimator::Haar => mixing_correlation(f, g, t, n_mc, seed)?,
                MixingEstimator::Importance => mixing_correlation_importance(f, g, t, n_mc, seed)?,
            };
            Ok(MixingEntry {
                t,
                value: e.value,
                stderr: e.stderr,
                samples: e.samples,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShearingOptions {
    pub sigma: f64,
    pub n_mc: usize,
    /// Quadrature nodes spent on the arc-averaged side, across all arcs.
    pub node_budget: usize,
    pub min_arcs: usize,
    pub kappa: f64,
    /// Central-difference step for `Vg`.
    pub vg_step: f64,
}

impl Default for ShearingOptions {
    fn default() -> Self {
        ShearingOptions {
            sigma: 1.0,
            n_mc: 1 << 20,
            node_budget: 1 << 24,
            min_arcs: 32,
            kappa: 20.0,
            vg_step: 1e-3,
        }
    }
}

/// Both sides of `⟨f∘h_t, g⟩ = (1/σ)∫₀^σ ⟨f∘h_t∘h^u_s, g∘h^u_s⟩ ds` and the
/// bound `|⟨f∘h_t, g⟩| <= (‖g‖₂ + ‖Vg‖₂)/σ · sup_{S<=σ, p} |∫₀^S f∘h_t∘h^u_s(p) ds|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShearingReport {
    pub t: f64,
    pub direct: Estimate,
    pub arc_averaged: Estimate,
    /// `|direct − arc_averaged|` in combined standard errors.
    pub z_score: f64,
    pub identity_holds: bool,
    pub g_norm: Estimate,
    pub vg_norm: Estimate,
    /// Largest `|∫₀^S f∘h_t∘h^u_s(p) ds|` over the sampled arcs and `S <= σ`.
    pub sup_arc_integral: f64,
    pub bound: f64,
    pub bound_holds: bool,
    pub arcs: usize,
}

/// Estimates both sides of the shearing identity at time `t` and checks the mixing bound.
///
/// The direct side is [`mixing_correlation`]; `‖g‖₂` and `‖Vg‖₂` come from the
/// same samples. The arc-averaged side draws independent base points and
/// integrates along each `V`-arc with the trapezoid rule.
pub fn shearing_identity_check(
    f: &Observable,
    g: &Observable,
    t: f64,
    opts: &ShearingOptions,
    seed: u64,
) -> Result<ShearingReport> {
    if !(opts.sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "σ must be positive, got {}",
            opts.sigma
        )));
    }
    let group = f.group();
    let shear = exp_algebra(&AlgebraVector::U, t);
    let hv = opts.vg_step;
    let (vp, vm) = (
        exp_algebra(&AlgebraVector::V, hv),
        exp_algebra(&AlgebraVector::V, -hv),
    );
    let m = chunked_haar(group, opts.n_mc, seed, MIXING_STREAM, t.to_bits(), |p| {
        let gp = g.eval(p);
        let vg = (g.eval_group(&(p.rep * vp)) - g.eval_group(&(p.rep * vm))) / (2.0 * hv);
        [f.eval_group(&(p.rep * shear)) * gp, gp * gp, vg * vg]
    })?;
    let direct = m[0].estimate();
    let g_sq = m[1].estimate();
    let vg_sq = m[2].estimate();
    let norm = |e: Estimate| {
        let v = e.value.max(0.0).sqrt();
        Estimate {
            value: v,
            stderr: if v > 0.0 { e.stderr / (2.0 * v) } else { 0.0 },
            samples: e.samples,
        }
    };
    let (g_norm, vg_norm) = (norm(g_sq), norm(vg_sq));

    let n = node_count(&AlgebraVector::V, opts.sigma, t, f.bump.radius, opts.kappa);
    let arcs = (opts.node_budget / (n + 1)).max(opts.min_arcs);
    let h = opts.sigma / n as f64;
    let per_arc = (0..arcs)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::task_stream(seed, SHEARING_STREAM, t.to_bits(), k as u64);
            let p = group.haar_sample(&mut r)?;
            let mut gs = Vec::with_capacity(n + 1);
            walk_sheared_arc(
                group,
                &p.rep,
                &AlgebraVector::V,
                0.0,
                0.0,
                h,
                n + 1,
                Precision::Double,
                |_, rep| {
                    gs.push(g.eval_raw(rep) - g.mean_hat);
                },
            )?;
            let mut prod = Neumaier::default();
            let mut partial = Neumaier::default();
            let mut sup: f64 = 0.0;
            let mut prev: Option<(f64, f64)> = None;
            walk_sheared_arc(
                group,
                &p.rep,
                &AlgebraVector::V,
                t,
                0.0,
                h,
                n + 1,
                Precision::Double,
                |j, rep| {
                    let fv = f.eval_raw(rep) - f.mean_hat;
                    let pv = fv * gs[j];
                    if let Some((f0, p0)) = prev {
                        partial.add(0.5 * h * (f0 + fv));
                        prod.add(0.5 * h * (p0 + pv));
                        sup = sup.max(partial.total().abs());
                    }
                    prev = Some((fv, pv));
                },
            )?;
            Ok((prod.total() / opts.sigma, sup))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut arc_m = Moments::default();
    let mut sup_arc_integral: f64 = 0.0;
    for (y, s) in &per_arc {
        arc_m.add(*y);
        sup_arc_integral = sup_arc_integral.max(*s);
    }
    let arc_averaged = arc_m.estimate();
    let combined = (direct.stderr.powi(2) + arc_averaged.stderr.powi(2)).sqrt();
    let diff = (direct.value - arc_averaged.value).abs();
    let z_score = if combined > 0.0 {
        diff / combined
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let bound = (g_norm.value + vg_norm.value) / opts.sigma * sup_arc_integral;
    Ok(ShearingReport {
        t,
        direct,
        arc_averaged,
        z_score,
        identity_holds: z_score <= 3.0,
        g_norm,
        vg_norm,
        sup_arc_integral,
        bound,
        bound_holds: direct.value.abs() <= bound + 3.0 * direct.stderr,
        arcs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingEntry {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Fits `|⟨f∘h_t, g⟩|` against `t`, dropping entries not resolved above three
/// standard errors.
///
/// Correlations oscillate in `log t`, so the misfit of a power law is
/// deterministic rather than Monte Carlo noise; the regression uses unit
/// weights instead of the sampling variances.
pub fn fit_mixing(entries: &[MixingEntry], model: DecayModel) -> Result<FitResult> {
    let points: Vec<FitPoint> = entries
        .iter()
        .filter(|e| e.value.abs() > 3.0 * e.stderr)
        .map(|e| FitPoint {
            t: e.t,
            value: e.value.abs(),
            stderr: e.stderr,
        })
        .collect();
    fit_points(&points, model, FitWeights::Unit)
}

/// Shadow distances over the partition windows at one `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowEntry {
    pub t: f64,
    pub base_point: usize,
    pub max_distance: f64,
    pub windows: usize,
}

/// Largest distance between the sheared arc and the shadow curves of its
/// partition windows, sampling each window at `nodes` parameters.
#[allow(clippy::too_many_arguments)]
pub fn shadow_sweep(
    group: &FuchsianGroupModel,
    w: &AlgebraVector,
    length: f64,
    sigma: f64,
    t_grid: &[f64],
    base_points: usize,
    nodes: usize,
    seed: u64,
) -> Result<Vec<ShadowEntry>> {
    check_grid(t_grid)?;
    let (w, length, sigma, _) = crate::arcs::normalize_direction(w, length, sigma)?;
    let ell = ell_constant(&w, sigma);
    let tasks: Vec<(usize, usize)> = (0..t_grid.len())
        .flat_map(|i| (0..base_points).map(move |j| (i, j)))
        .collect();
    tasks
        .par_iter()
        .map(|&(i, j)| {
            let t = t_grid[i];
            let mut r = rng::task_stream(seed, SHADOW_STREAM, j as u64, 0);
            let p = group.haar_sample(&mut r)?;
            let spec = ArcSpec::new(p, w, length, sigma, t)?;
            let parts = partition_arc(group, &spec, ell)?;
            let window = 1.0 / (ell * t);
            let mut worst: f64 = 0.0;
            for pk in &parts {
                for m in 0..nodes.max(2) {
                    let s = window * m as f64 / (nodes.max(2) - 1) as f64;
                    worst = worst.max(shadow_distance(&pk.rep, &w, t, s)?);
                }
            }
            Ok(ShadowEntry {
                t,
                base_point: j,
                max_distance: worst,
                windows: parts.len(),
            })
        })
        .collect()
}

/// `u + xt − vt²`, the constant `Û`-component of the sheared tangent.
pub fn u_speed(w: &AlgebraVector, t: f64) -> f64 {
    sheared_tangent(w, t).u
}

fn fmt(x: f64) -> String {
    x.to_string()
}

/// Columns `t, base_point, value, stderr, n_nodes, quad_error`; one row per
/// base point (empty `stderr`) followed by the aggregate row for each `t`.
pub fn write_decay_csv<W: Write>(series: &DecaySeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t",
        "base_point",
        "value",
        "stderr",
        "n_nodes",
        "quad_error",
    ])?;
    let nb = series.metadata.base_points.max(1);
    for (entry, chunk) in series.entries.iter().zip(series.samples.chunks(nb)) {
        for s in chunk {
            w.write_record([
                fmt(s.t),
                s.base_point.to_string(),
                fmt(s.value),
                String::new(),
                s.n_nodes.to_string(),
                fmt(s.quad_error),
            ])?;
        }
        w.write_record([
            fmt(entry.t),
            "aggregate".to_string(),
            fmt(entry.value),
            fmt(entry.stderr),
            entry.n_nodes.to_string(),
            fmt(entry.quad_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t, value, stderr, samples`.
pub fn write_mixing_csv<W: Write>(entries: &[MixingEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "value", "stderr", "samples"])?;
    for e in entries {
        w.write_record([fmt(e.t), fmt(e.value), fmt(e.stderr), e.samples.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t, base_point, max_distance, windows`.
pub fn write_shadow_csv<W: Write>(entries: &[ShadowEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "base_point", "max_distance", "windows"])?;
    for e in entries {
        w.write_record([
            fmt(e.t),
            e.base_point.to_string(),
            fmt(e.max_distance),
            e.windows.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pts(f: impl Fn(f64) -> f64) -> Vec<FitPoint> {
        [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
            .iter()
            .map(|&t| FitPoint {
                t,
                value: f(t),
                stderr: 0.0,
            })
            .collect()
    }

    #[test]
    fn exact_power_law_fit() {
        let fit = fit_points(
            &pts(|t| 1.0 / t),
            DecayModel::PurePower,
            FitWeights::InverseVariance,
        )
        .unwrap();
        assert_abs_diff_eq!(fit.slope, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.residual_rms, 0.0, epsilon = 1e-12);
        assert!(!fit.log_correction);
    }

    #[test]
    fn log_corrected_fit() {
        let fit = fit_points(
            &pts(|t| t.ln() / t),
            DecayModel::PowerTimesLog,
            FitWeights::InverseVariance,
        )
        .unwrap();
        assert_abs_diff_eq!(fit.slope, -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.log_coefficient.unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn fit_rejects_short_or_nonpositive_series() {
        let mut p = pts(|t| 1.0 / t);
        p.truncate(4);
        assert!(matches!(
            fit_points(&p, DecayModel::PurePower, FitWeights::Unit),
            Err(Error::Fit(_))
        ));
        let mut p = pts(|t| 1.0 / t);
        p[2].value = 0.0;
        assert!(matches!(
            fit_points(&p, DecayModel::PurePower, FitWeights::Unit),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn moments_merge_in_order() {
        let mut a = Moments::default();
        let mut b = Moments::default();
        for x in [1.0, 2.0, 3.0] {
            a.add(x);
        }
        b.add(4.0);
        a.merge(&b);
        let e = a.estimate();
        assert_eq!(e.samples, 4);
        assert_abs_diff_eq!(e.value, 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.stderr, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn mixing_sample_schedule() {
        assert_eq!(mixing_samples(256.0, 256.0, 1 << 24), 1 << 24);
        assert_eq!(mixing_samples(128.0, 256.0, 1 << 24), 1 << 22);
        assert_eq!(mixing_samples(2.0, 256.0, 1 << 24), CHUNK);
        assert_eq!(mixing_samples(0.0, 0.0, 1000), 1000);
        assert_eq!(mixing_samples(1.0, 256.0, 1000), 1000);
    }

    #[test]
    fn grid_validation() {
        assert!(check_grid(&[2.0, 4.0]).is_ok());
        assert!(check_grid(&[4.0, 2.0]).is_err());
        assert!(check_grid(&[]).is_err());
        assert!(check_grid(&[-1.0]).is_err());
    }

    #[test]
    fn spectral_profile_examples() {
        let p = spectral_profile(3.0 / 16.0).unwrap();
        assert_abs_diff_eq!(p.nu0, 0.5, epsilon = 1e-15);
        assert!(spectral_profile(0.0).is_err());
    }
}
