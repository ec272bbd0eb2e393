//! Chaotic cavity with uniform absorption.
//!
//! The reflection matrix comes from the resonance (Heidelberg) construction
//!
//! ```text
//! r = 1 − 2πi W† (E − H + iπWW† + iΓ/2)⁻¹ W
//! ```
//!
//! with H an M×M Gaussian ensemble whose semicircle has radius 2 (mean level
//! spacing Δ = π/M at the band center), ideal coupling W_mn = δ_mn/√π and a
//! uniform absorption width Γ = γNΔ/2π. Everything is evaluated at E = 0.
//!
//! A finite band of M levels only mimics a wide band while Γ is small
//! compared with the bandwidth, so M grows with γ (see [`CavityModel`]).
//! Beyond the largest γ that can be sampled the moment table continues with
//! a power law fitted to its last decade.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlator::{correlators_from_moments, CorrelatorResult, DetectorPair, SpectralMoments, Units};
use crate::error::{domain, Error, Result};
use crate::line::LorentzianLine;
use crate::linalg::{gaussian_ensemble_tridiagonal, solve, TridiagonalLu, C64};
use crate::quadrature::QuadratureConfig;
use crate::rmt::{ScatteringSystem, SystemSampler};
use crate::rng::StreamKey;
use crate::stats::{jackknife, linear_fit};

/// Smallest accepted ratio M/N of internal levels to open channels.
pub const MIN_RESONANCE_FACTOR: usize = 5;

/// Strong-absorption limit of C_kl/√(Ī_kĪ_l) in units of f√(α_kα_l)/N.
pub const STRONG_CROSS_RATIO: f64 = 0.062;
/// Strong-absorption limit of (C_kk − Ī_k)/Ī_k in units of fα_k.
pub const STRONG_SHORT_RATIO: f64 = 0.5;

const JACKKNIFE_BLOCKS: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ensemble {
    /// Real symmetric H: time-reversal symmetric, reciprocal r = rᵀ.
    #[default]
    Orthogonal,
    /// Complex Hermitian H.
    Unitary,
}

impl Ensemble {
    fn beta(self) -> u32 {
        match self {
            Self::Orthogonal => 1,
            Self::Unitary => 2,
        }
    }
}

/// Random-matrix model settings shared by every sample.
///
/// The construction needs a band much wider than the absorption width, so
/// the level count grows with γ: M = max(`resonance_factor`·N, γN/(4η_max)),
/// which keeps Γ/2 ≤ η_max (η_max = `max_half_width`, in units of the
/// semicircle radius over two).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityModel {
    /// Smallest M/N. A finite channel fraction N/M biases ⟨1 − σ̄⟩ low by
    /// roughly 0.3·N/M at weak absorption, independent of N.
    pub resonance_factor: usize,
    pub ensemble: Ensemble,
    pub max_half_width: f64,
    /// Refuse to build systems with more levels than this.
    pub max_levels: usize,
    /// Tables are sampled up to this γ and continued by a fitted tail above it.
    pub max_sampled_gamma: f64,
}

impl Default for CavityModel {
    fn default() -> Self {
        Self {
            resonance_factor: 20,
            ensemble: Ensemble::Orthogonal,
            max_half_width: 0.05,
            max_levels: 200_000,
            max_sampled_gamma: 100.0,
        }
    }
}

impl CavityModel {
    fn validate(&self, mode_count: usize, gamma: f64) -> Result<()> {
        if mode_count == 0 {
            return Err(domain("mode count must be at least 1"));
        }
        if self.resonance_factor < MIN_RESONANCE_FACTOR {
            return Err(domain(format!(
                "resonance factor {} below {MIN_RESONANCE_FACTOR}",
                self.resonance_factor
            )));
        }
        if !(self.max_half_width > 0.0) {
            return Err(domain("maximum half-width must be positive"));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(domain(format!("absorption rate must be non-negative, got {gamma}")));
        }
        let m = self.level_count(mode_count, gamma);
        if m > self.max_levels {
            return Err(domain(format!(
                "γ = {gamma} with N = {mode_count} needs {m} levels, above the limit {}",
                self.max_levels
            )));
        }
        Ok(())
    }

    /// Internal level count M used at absorption rate γ.
    pub fn level_count(&self, mode_count: usize, gamma: f64) -> usize {
        let base = self.resonance_factor * mode_count;
        let wide = (gamma * mode_count as f64 / (4.0 * self.max_half_width)).ceil();
        if wide > base as f64 {
            wide.min(usize::MAX as f64 / 2.0) as usize
        } else {
            base
        }
    }

    /// Largest γ the model samples at mode count N within `max_levels`.
    pub fn max_gamma(&self, mode_count: usize) -> f64 {
        4.0 * self.max_half_width * self.max_levels as f64 / mode_count as f64
    }
}

/// Half the absorption width, Γ/2 = γN/(4M), in units where Δ = π/M.
fn half_width(gamma: f64, mode_count: usize, levels: usize) -> f64 {
    gamma * mode_count as f64 / (4.0 * levels as f64)
}

/// Open channels, line-center absorption rate and resonance factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub mode_count: usize,
    pub gamma0: f64,
    pub resonance_factor: usize,
}

impl CavityParams {
    pub fn new(mode_count: usize, gamma0: f64, resonance_factor: usize) -> Result<Self> {
        if mode_count == 0 {
            return Err(domain("mode count must be at least 1"));
        }
        if resonance_factor < MIN_RESONANCE_FACTOR {
            return Err(domain(format!(
                "resonance factor {resonance_factor} below {MIN_RESONANCE_FACTOR}"
            )));
        }
        if !(gamma0 >= 0.0 && gamma0.is_finite()) {
            return Err(domain(format!("absorption rate must be non-negative, got {gamma0}")));
        }
        Ok(Self {
            mode_count,
            gamma0,
            resonance_factor,
        })
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Hermitian Gaussian matrix with off-diagonal variance `scale²`.
fn gaussian_matrix<R: Rng>(rng: &mut R, n: usize, ensemble: Ensemble, scale: f64) -> DMatrix<C64> {
    let mut h = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        match ensemble {
            Ensemble::Orthogonal => h[(i, i)] = C64::new(scale * 2f64.sqrt() * gaussian(rng), 0.0),
            Ensemble::Unitary => h[(i, i)] = C64::new(scale * gaussian(rng), 0.0),
        }
        for j in i + 1..n {
            let z = match ensemble {
                Ensemble::Orthogonal => C64::new(scale * gaussian(rng), 0.0),
                Ensemble::Unitary => {
                    C64::new(gaussian(rng), gaussian(rng)) * (scale / 2f64.sqrt())
                }
            };
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

/// S = (1 − iπK)(1 + iπK)⁻¹ from the channel K-matrix.
fn reflection_from_k(i_pi_k: DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = i_pi_k.nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let plus = &id + &i_pi_k;
    let minus = &id - &i_pi_k;
    // plus and minus commute, so plus⁻¹ minus = minus plus⁻¹.
    solve(plus, &minus)
}

/// One reflection matrix from a dense M×M Hamiltonian with M = `levels`.
///
/// This is the construction written out literally; [`sample_cavity_reflection`]
/// draws from the same distribution at a fraction of the cost.
pub fn sample_dense_cavity_reflection(
    mode_count: usize,
    gamma: f64,
    levels: usize,
    ensemble: Ensemble,
    rng: &mut ChaCha8Rng,
) -> Result<ScatteringSystem> {
    if mode_count == 0 || levels < MIN_RESONANCE_FACTOR * mode_count {
        return Err(domain(format!(
            "need N ≥ 1 and at least {MIN_RESONANCE_FACTOR}N levels"
        )));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(domain(format!("absorption rate must be non-negative, got {gamma}")));
    }
    let m = levels;
    let h = gaussian_matrix(rng, m, ensemble, 1.0 / (m as f64).sqrt());
    let eta = half_width(gamma, mode_count, m);
    let z = DMatrix::<C64>::identity(m, m) * C64::new(0.0, eta) - h;
    let rhs = DMatrix::<C64>::identity(m, mode_count);
    let y = solve(z, &rhs)?;
    // iπK = iπ w² [(z − H)⁻¹]_NN with w² = 1/π.
    let i_pi_k = y.rows(0, mode_count).into_owned() * C64::new(0.0, 1.0);
    ScatteringSystem::reflection(reflection_from_k(i_pi_k)?)
}

/// One reflection matrix with M = `model.level_count(N, γ)` internal levels.
pub fn sample_cavity_reflection(
    mode_count: usize,
    gamma: f64,
    model: &CavityModel,
    rng: &mut ChaCha8Rng,
) -> Result<ScatteringSystem> {
    model.validate(mode_count, gamma)?;
    let levels = model.level_count(mode_count, gamma);
    let draw = CavityDraw::new(mode_count, levels, model.ensemble, rng);
    ScatteringSystem::reflection(draw.reflection(gamma)?)
}

/// Cavity reflection matrices at a fixed γ, as input to the [`crate::rmt`] checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavitySampler {
    pub gamma: f64,
    pub model: CavityModel,
}

impl SystemSampler for CavitySampler {
    fn sample(&self, mode_count: usize, rng: &mut ChaCha8Rng) -> Result<ScatteringSystem> {
        sample_cavity_reflection(mode_count, self.gamma, &self.model, rng)
    }
}

/// The random ingredients of one cavity, reusable across absorption rates.
///
/// H is split into the channel block A (N×N), the coupling B to the other
/// K = M − N levels and their block D. Then
/// [(z − H)⁻¹]_NN = (z − A − B(z − D)⁻¹B†)⁻¹, which is all the reflection
/// matrix needs. D is orthogonally (unitarily) similar to a tridiagonal matrix
/// T, and the same rotation leaves B Gaussian, so D can be replaced by T drawn
/// from the tridiagonal model and B(z − T)⁻¹B† costs O(N²K).
struct CavityDraw {
    levels: usize,
    channel_block: DMatrix<C64>,
    coupling: Coupling,
    diag: Vec<f64>,
    off: Vec<f64>,
}

enum Coupling {
    Real(DMatrix<f64>),
    Complex(DMatrix<C64>),
}

impl CavityDraw {
    fn new(mode_count: usize, levels: usize, ensemble: Ensemble, rng: &mut ChaCha8Rng) -> Self {
        let rest = levels - mode_count;
        let scale = 1.0 / (levels as f64).sqrt();
        let channel_block = gaussian_matrix(rng, mode_count, ensemble, scale);
        let coupling = match ensemble {
            Ensemble::Orthogonal => {
                Coupling::Real(DMatrix::from_fn(mode_count, rest, |_, _| scale * gaussian(rng)))
            }
            Ensemble::Unitary => Coupling::Complex(DMatrix::from_fn(mode_count, rest, |_, _| {
                C64::new(gaussian(rng), gaussian(rng)) * (scale / 2f64.sqrt())
            })),
        };
        let (diag, off) = gaussian_ensemble_tridiagonal(rng, rest, ensemble.beta(), scale);
        Self {
            levels,
            channel_block,
            coupling,
            diag,
            off,
        }
    }

    /// B (iη − T)⁻¹ B†.
    fn self_energy(&self, eta: f64) -> Result<DMatrix<C64>> {
        let n = self.channel_block.nrows();
        let k = self.diag.len();
        let band: Vec<C64> = self.off.iter().map(|&e| C64::new(-e, 0.0)).collect();
        let lu = TridiagonalLu::new(
            band.clone(),
            self.diag.iter().map(|&d| C64::new(-d, eta)).collect(),
            band,
        )?;
        let mut y = DMatrix::<C64>::zeros(k, n);
        for (i, mut col) in y.column_iter_mut().enumerate() {
            match &self.coupling {
                Coupling::Real(b) => {
                    for (j, z) in col.iter_mut().enumerate() {
                        *z = C64::new(b[(i, j)], 0.0);
                    }
                }
                Coupling::Complex(b) => {
                    for (j, z) in col.iter_mut().enumerate() {
                        *z = b[(i, j)].conj();
                    }
                }
            }
            lu.solve_in_place(col.as_mut_slice());
        }
        Ok(match &self.coupling {
            Coupling::Real(b) => {
                let re = b * y.map(|z| z.re);
                let im = b * y.map(|z| z.im);
                re.zip_map(&im, C64::new)
            }
            Coupling::Complex(b) => b * y,
        })
    }

    fn reflection(&self, gamma: f64) -> Result<DMatrix<C64>> {
        let n = self.channel_block.nrows();
        let eta = half_width(gamma, n, self.levels);
        let x = DMatrix::<C64>::identity(n, n) * C64::new(0.0, eta)
            - &self.channel_block
            - self.self_energy(eta)?;
        // iπK = i X⁻¹, so S = (X + i)⁻¹(X − i).
        let i = DMatrix::<C64>::identity(n, n) * C64::new(0.0, 1.0);
        solve(&x + &i, &(x - i))
    }
}

/// Per-sample absorptance N⁻¹tr QQ† and second moment N⁻¹tr (QQ†)².
fn sample_observables(r: &DMatrix<C64>) -> (f64, f64) {
    let n = r.nrows();
    let q = DMatrix::<C64>::identity(n, n) - r * r.adjoint();
    let nf = n as f64;
    let first = q.trace().re / nf;
    let second = q.iter().map(|z| z.norm_sqr()).sum::<f64>() / nf;
    (first, second)
}

/// Smallest per-point sample count when the count is scaled down for large M.
pub const MIN_SCALED_SAMPLES: usize = 100;

/// Samples used at a γ that needs `levels` levels, given `samples` at the base level count.
fn scaled_samples(samples: usize, base_levels: usize, levels: usize) -> usize {
    let scaled = (samples as f64 * base_levels as f64 / levels as f64).ceil() as usize;
    scaled.max(samples.min(MIN_SCALED_SAMPLES))
}

/// Monte Carlo columns (absorptance, second moment) per sample for each γ.
///
/// Absorption rates sharing a level count share their random draws. Where
/// the level count exceeds the base value the sample count is reduced in
/// proportion (not below [`MIN_SCALED_SAMPLES`]); these points self-average.
fn sample_columns(
    mode_count: usize,
    gammas: &[f64],
    samples: usize,
    key: StreamKey,
    model: &CavityModel,
    scale_samples: bool,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    for &g in gammas {
        model.validate(mode_count, g)?;
    }
    let key = key.child(mode_count as u64);
    let base = model.resonance_factor * mode_count;
    let mut out = vec![(Vec::new(), Vec::new()); gammas.len()];
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (j, &g) in gammas.iter().enumerate() {
        let m = model.level_count(mode_count, g);
        match groups.iter_mut().find(|(lm, _)| *lm == m) {
            Some((_, idx)) => idx.push(j),
            None => groups.push((m, vec![j])),
        }
    }
    for (levels, idx) in groups {
        let count = if scale_samples {
            scaled_samples(samples, base, levels)
        } else {
            samples
        };
        let gkey = key.child(levels as u64);
        let per_sample: Vec<Vec<(f64, f64)>> = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = gkey.rng(i as u64);
                let draw = CavityDraw::new(mode_count, levels, model.ensemble, &mut rng);
                idx.iter()
                    .map(|&j| draw.reflection(gammas[j]).map(|r| sample_observables(&r)))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (pos, &j) in idx.iter().enumerate() {
            out[j] = per_sample.iter().map(|row| row[pos]).unzip();
        }
    }
    Ok(out)
}

fn moments_from_columns(first: &[f64], second: &[f64]) -> SpectralMoments {
    let cols = [first, second];
    let (a, se_a) = jackknife(&cols, JACKKNIFE_BLOCKS, |m| m[0]);
    let (var, se_var) = jackknife(&cols, JACKKNIFE_BLOCKS, |m| m[1] - m[0] * m[0]);
    let (_, se_sq) = jackknife(&cols, JACKKNIFE_BLOCKS, |m| 1.0 - 2.0 * m[0] + m[1]);
    SpectralMoments::from_absorptance(a, var).with_errors(se_a, se_sq, se_var)
}

/// Monte Carlo spectral moments at one absorption rate, from exactly `samples` draws.
pub fn estimate_moments(
    mode_count: usize,
    gamma: f64,
    samples: usize,
    key: StreamKey,
    model: &CavityModel,
) -> Result<SpectralMoments> {
    if samples < 2 {
        return Err(domain("need at least two samples"));
    }
    model.validate(mode_count, gamma)?;
    if gamma == 0.0 {
        return Ok(SpectralMoments::lossless());
    }
    let cols = sample_columns(mode_count, &[gamma], samples, key, model, false)?;
    Ok(moments_from_columns(&cols[0].0, &cols[0].1))
}

/// Combine estimates at two mode counts, linear in 1/N, to N = ∞.
pub fn extrapolate_in_inverse_n(
    (n1, m1): (usize, &SpectralMoments),
    (n2, m2): (usize, &SpectralMoments),
) -> Result<SpectralMoments> {
    if n1 == n2 {
        return Err(domain("extrapolation needs two different mode counts"));
    }
    let (w1, w2) = (n1 as f64, n2 as f64);
    let lin = |a: f64, b: f64| (w2 * b - w1 * a) / (w2 - w1);
    let err = |a: f64, b: f64| (w2 * w2 * b * b + w1 * w1 * a * a).sqrt() / (w2 - w1).abs();
    let a = lin(m1.mean_absorptance(), m2.mean_absorptance());
    let var = lin(m1.variance(), m2.variance());
    let se_a = err(m1.se_mean, m2.se_mean);
    let se_var = err(m1.se_variance, m2.se_variance);
    let se_sq = se_var.hypot(2.0 * (1.0 - a) * se_a);
    Ok(SpectralMoments::from_absorptance(a, var).with_errors(se_a, se_sq, se_var))
}

/// Moments at one grid point, for one mode count (0 marks the N → ∞ extrapolation).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub gamma: f64,
    pub moments: SpectralMoments,
    pub mode_count: usize,
    pub samples: usize,
}

/// Quality notes gathered while building a table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TableDiagnostics {
    /// γ values where ⟨σ̄⟩ failed to decrease beyond 3σ relative to the previous point.
    pub non_monotone: Vec<f64>,
    /// γ values with a variance below −3σ.
    pub negative_variance: Vec<f64>,
}

/// Spectral moments tabulated over the absorption rate.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    rows: Vec<MomentRow>,
    diagnostics: TableDiagnostics,
}

/// First line of a serialized table.
pub const TABLE_FORMAT: &str = "# format: moment-table/1";
const TABLE_HEADER: [&str; 7] = ["gamma", "mean_sigma", "mean_sigma_sq", "se_mean", "se_sq", "N", "samples"];

/// Number of sampled points the strong-absorption tail is fitted to.
pub const TAIL_FIT_POINTS: usize = 3;

/// Continue moments above the sampled range with power laws in γ.
///
/// ⟨σ̄⟩ and the variance are fitted as straight lines in log-log over the last
/// [`TAIL_FIT_POINTS`] sampled rows. Both decay (as 1/γ and 1/γ² for large N),
/// so the tail carries little weight in the line integrals.
fn tail_moments(sampled: &[(f64, SpectralMoments)], gamma: f64) -> Result<SpectralMoments> {
    let last = &sampled[sampled.len().saturating_sub(TAIL_FIT_POINTS)..];
    if last.len() < 2 {
        return Err(domain("tail fit needs at least two sampled absorption rates"));
    }
    let x: Vec<f64> = last.iter().map(|(g, _)| g.ln()).collect();
    let fit = |values: Vec<f64>| -> Result<f64> {
        if values.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::TailFit("non-positive moment at the end of the sampled range".into()));
        }
        let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let f = linear_fit(&x, &y);
        Ok((f.intercept + f.slope * gamma.ln()).exp())
    };
    let sigma = fit(last.iter().map(|(_, m)| m.mean_sigma()).collect())?;
    let var = fit(last.iter().map(|(_, m)| m.variance()).collect())?;
    Ok(SpectralMoments::from_absorptance(1.0 - sigma, var))
}

/// Monte Carlo table over `gammas` for each mode count, extrapolated in 1/N
/// when exactly two mode counts are given.
///
/// Points above `model.max_sampled_gamma` are filled from [`tail_moments`] and
/// carry `samples = 0`.
/// (γ, moments, samples) at one sampled grid point.
type SampledPoint = (f64, SpectralMoments, usize);

pub fn build_moment_table(
    mode_counts: &[usize],
    gammas: &[f64],
    samples: usize,
    key: StreamKey,
    model: &CavityModel,
) -> Result<MomentTable> {
    if mode_counts.is_empty() || mode_counts.len() > 2 {
        return Err(domain("give one or two mode counts"));
    }
    if samples < 2 {
        return Err(domain("need at least two samples"));
    }
    if gammas.windows(2).any(|w| w[0] >= w[1]) || gammas.first().is_some_and(|&g| g < 0.0) {
        return Err(domain("absorption grid must be non-negative and strictly ascending"));
    }
    let ceiling = mode_counts
        .iter()
        .map(|&n| model.max_gamma(n))
        .fold(model.max_sampled_gamma, f64::min);
    let sampled: Vec<f64> = gammas.iter().copied().filter(|&g| g > 0.0 && g <= ceiling).collect();
    let tail: Vec<f64> = gammas.iter().copied().filter(|&g| g > ceiling).collect();
    if !tail.is_empty() && sampled.len() < 2 {
        return Err(domain(format!(
            "need at least two sampled absorption rates below {ceiling} to continue the table"
        )));
    }

    // Per column (each mode count, then the extrapolation): (γ, moments, samples).
    let mut columns: Vec<(usize, Vec<SampledPoint>)> = Vec::new();
    for &n in mode_counts {
        let cols = sample_columns(n, &sampled, samples, key, model, true)?;
        let pts = sampled
            .iter()
            .zip(&cols)
            .map(|(&g, (a, q))| (g, moments_from_columns(a, q), a.len()))
            .collect();
        columns.push((n, pts));
    }
    if let [n1, n2] = *mode_counts {
        let pts = columns[0]
            .1
            .iter()
            .zip(&columns[1].1)
            .map(|(p1, p2)| {
                extrapolate_in_inverse_n((n1, &p1.1), (n2, &p2.1)).map(|m| (p1.0, m, p1.2.min(p2.2)))
            })
            .collect::<Result<_>>()?;
        columns.push((0, pts));
    }

    let mut rows = Vec::new();
    for (n, pts) in &columns {
        if gammas.first() == Some(&0.0) {
            rows.push(MomentRow {
                gamma: 0.0,
                moments: SpectralMoments::lossless(),
                mode_count: *n,
                samples,
            });
        }
        for &(g, moments, count) in pts {
            rows.push(MomentRow {
                gamma: g,
                moments,
                mode_count: *n,
                samples: count,
            });
        }
        let fitted: Vec<(f64, SpectralMoments)> = pts.iter().map(|p| (p.0, p.1)).collect();
        for &g in &tail {
            rows.push(MomentRow {
                gamma: g,
                moments: tail_moments(&fitted, g)?,
                mode_count: *n,
                samples: 0,
            });
        }
    }
    rows.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(b.mode_count.cmp(&a.mode_count).reverse()));
    Ok(MomentTable::from_rows(rows))
}

impl MomentTable {
    pub fn from_rows(rows: Vec<MomentRow>) -> Self {
        let mut table = Self {
            rows,
            diagnostics: TableDiagnostics::default(),
        };
        table.diagnose();
        table
    }

    pub fn rows(&self) -> &[MomentRow] {
        &self.rows
    }

    pub fn diagnostics(&self) -> &TableDiagnostics {
        &self.diagnostics
    }

    /// The mode count used for interpolation: the extrapolated rows if
    /// present, else the largest N.
    pub fn primary_mode_count(&self) -> Option<usize> {
        if self.rows.iter().any(|r| r.mode_count == 0) {
            Some(0)
        } else {
            self.rows.iter().map(|r| r.mode_count).max()
        }
    }

    /// Rows used for interpolation, ascending in γ.
    pub fn primary_rows(&self) -> Vec<MomentRow> {
        let n = self.primary_mode_count();
        let mut rows: Vec<MomentRow> = self.rows.iter().filter(|r| Some(r.mode_count) == n).copied().collect();
        rows.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
        rows
    }

    fn diagnose(&mut self) {
        let rows = self.primary_rows();
        let mut d = TableDiagnostics::default();
        for w in rows.windows(2) {
            let (a, b) = (&w[0].moments, &w[1].moments);
            let slack = 3.0 * a.se_mean.hypot(b.se_mean);
            if b.mean_sigma() >= a.mean_sigma() + slack && !(a.se_mean == 0.0 && b.se_mean == 0.0 && a == b) {
                d.non_monotone.push(w[1].gamma);
            }
        }
        for r in &rows {
            if r.moments.variance() < -3.0 * r.moments.se_variance - 1e-12 {
                d.negative_variance.push(r.gamma);
            }
        }
        self.diagnostics = d;
    }

    /// Smallest and largest positive γ among the primary rows.
    pub fn gamma_range(&self) -> Option<(f64, f64)> {
        let rows = self.primary_rows();
        let pos: Vec<f64> = rows.iter().map(|r| r.gamma).filter(|&g| g > 0.0).collect();
        Some((*pos.first()?, *pos.last()?))
    }

    /// Moments at γ: monotone cubic in ln γ through ln⟨1 − σ̄⟩ and ln(variance);
    /// below the table the weak-absorption forms ⟨1 − σ̄⟩ = γ, variance = γ².
    pub fn moments_at(&self, gamma: f64) -> Result<SpectralMoments> {
        let rows = self.primary_rows();
        let pos: Vec<&MomentRow> = rows.iter().filter(|r| r.gamma > 0.0).collect();
        let (lo, hi) = match (pos.first(), pos.last()) {
            (Some(a), Some(b)) => (a.gamma, b.gamma),
            _ => return Err(domain("moment table has no positive absorption rates")),
        };
        if !(gamma >= 0.0) {
            return Err(domain(format!("absorption rate must be non-negative, got {gamma}")));
        }
        if gamma == 0.0 {
            return Ok(SpectralMoments::lossless());
        }
        if gamma > hi * (1.0 + 1e-12) {
            return Err(Error::Range { gamma, min: lo, max: hi });
        }
        if gamma < lo {
            return Ok(SpectralMoments::from_absorptance(gamma, gamma * gamma));
        }
        let x: Vec<f64> = pos.iter().map(|r| r.gamma.ln()).collect();
        let t = gamma.ln().min(*x.last().unwrap_or(&0.0));
        let interp = |values: Vec<f64>| -> f64 {
            if values.iter().all(|&v| v > 0.0) {
                let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
                pchip(&x, &logs, t).exp()
            } else {
                pchip(&x, &values, t)
            }
        };
        let a = interp(pos.iter().map(|r| r.moments.mean_absorptance()).collect());
        let var = interp(pos.iter().map(|r| r.moments.variance()).collect());
        let lin = |f: &dyn Fn(&SpectralMoments) -> f64| -> f64 {
            let values: Vec<f64> = pos.iter().map(|r| f(&r.moments)).collect();
            linear(&x, &values, t)
        };
        Ok(SpectralMoments::from_absorptance(a, var).with_errors(
            lin(&|m| m.se_mean),
            lin(&|m| m.se_sq),
            lin(&|m| m.se_variance),
        ))
    }

    /// Write the versioned CSV: the given `#` metadata lines, the format line, then the rows.
    pub fn write_csv<W: Write>(&self, mut out: W, metadata: &[String]) -> Result<()> {
        for line in metadata {
            writeln!(out, "{line}")?;
        }
        writeln!(out, "{TABLE_FORMAT}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TABLE_HEADER)?;
        for r in &self.rows {
            let m = &r.moments;
            w.write_record([
                sig12(r.gamma),
                sig12(m.mean_sigma()),
                sig12(m.mean_sigma_sq()),
                sig12(m.se_mean),
                sig12(m.se_sq),
                r.mode_count.to_string(),
                r.samples.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a table written by [`MomentTable::write_csv`]; `#` lines are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut body = String::new();
        let mut versioned = false;
        for line in input.lines() {
            let line = line?;
            if line.trim() == TABLE_FORMAT {
                versioned = true;
            }
            if !line.starts_with('#') {
                body.push_str(&line);
                body.push('\n');
            }
        }
        if !versioned {
            return Err(Error::Parse(format!("missing `{TABLE_FORMAT}` line")));
        }
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().ne(TABLE_HEADER) {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("column {}: {e}", TABLE_HEADER[i])))
            };
            let int = |i: usize| -> Result<usize> {
                rec[i]
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("column {}: {e}", TABLE_HEADER[i])))
            };
            let (mean, sq, se_mean, se_sq) = (num(1)?, num(2)?, num(3)?, num(4)?);
            // Variance error is not stored; bound it from the other two.
            let se_var = se_sq.hypot(2.0 * mean * se_mean);
            rows.push(MomentRow {
                gamma: num(0)?,
                moments: SpectralMoments::exact(mean, sq).with_errors(se_mean, se_sq, se_var),
                mode_count: int(5)?,
                samples: int(6)?,
            });
        }
        Ok(Self::from_rows(rows))
    }
}

/// Twelve significant digits.
pub(crate) fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    format!("{:.11e}", x)
}

fn linear(x: &[f64], y: &[f64], t: f64) -> f64 {
    if x.len() == 1 {
        return y[0];
    }
    let k = x.partition_point(|&v| v <= t).clamp(1, x.len() - 1);
    let h = x[k] - x[k - 1];
    let u = (t - x[k - 1]) / h;
    y[k - 1] * (1.0 - u) + y[k] * u
}

/// Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).
fn pchip(x: &[f64], y: &[f64], t: f64) -> f64 {
    let n = x.len();
    if n == 1 {
        return y[0];
    }
    if n == 2 {
        return linear(x, y, t);
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);

    let k = x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
    let s = (t - x[k]) / h[k];
    let (h00, h10) = ((1.0 + 2.0 * s) * (1.0 - s).powi(2), s * (1.0 - s).powi(2));
    let (h01, h11) = (s * s * (3.0 - 2.0 * s), s * s * (s - 1.0));
    h00 * y[k] + h10 * h[k] * d[k] + h01 * y[k + 1] + h11 * h[k] * d[k + 1]
}

/// Reduced correlators and the two normalized ratios.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityCorrelators {
    /// In units of Ω_c f²α_kα_l/N, Ω_c f²α_k² and Ω_c fα_k.
    pub reduced: CorrelatorResult,
    /// C_kl/√(Ī_kĪ_l).
    pub cross_ratio: f64,
    /// (C_kk − Ī_k)/Ī_k.
    pub short_ratio: f64,
}

/// Correlators for a Lorentzian absorption line γ(x) = γ₀/(1 + x²), with the
/// moments interpolated from `table`.
pub fn cavity_correlators(
    params: &CavityParams,
    detectors: &DetectorPair,
    table: &MomentTable,
    config: &QuadratureConfig,
) -> Result<CavityCorrelators> {
    let n = params.mode_count;
    if params.gamma0 == 0.0 {
        return Ok(CavityCorrelators {
            reduced: CorrelatorResult::zero(Units::CavityReduced),
            cross_ratio: 0.0,
            short_ratio: 0.0,
        });
    }
    let (lo, hi) = table
        .gamma_range()
        .ok_or_else(|| domain("moment table has no positive absorption rates"))?;
    if params.gamma0 > hi * (1.0 + 1e-12) {
        return Err(Error::Range {
            gamma: params.gamma0,
            min: lo,
            max: hi,
        });
    }
    let line = LorentzianLine::unit_width(params.gamma0)?;
    let failure = std::cell::RefCell::new(None);
    let profile = |x: f64| match table.moments_at(line.cavity_strength(x)) {
        Ok(m) => m,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            SpectralMoments::lossless()
        }
    };
    let raw = correlators_from_moments(profile, &line, &DetectorPair::ideal(), 1, config)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let reduced = CorrelatorResult {
        units: Units::CavityReduced,
        ..raw
    };
    let DetectorPair {
        alpha_k,
        alpha_l,
        occupation: f,
    } = *detectors;
    let (cross_ratio, short_ratio) = if reduced.mean_current > 0.0 {
        (
            f * (alpha_k * alpha_l).sqrt() / n as f64 * reduced.cross / reduced.mean_current,
            f * alpha_k * reduced.excess_auto / reduced.mean_current,
        )
    } else {
        (0.0, 0.0)
    };
    Ok(CavityCorrelators {
        reduced,
        cross_ratio,
        short_ratio,
    })
}

/// Strong-absorption limits of the two normalized ratios.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongAbsorptionLimits {
    pub cross_ratio_limit: f64,
    pub short_range_ratio_limit: f64,
}

pub fn cavity_strong_limits(detectors: &DetectorPair, mode_count: usize) -> Result<StrongAbsorptionLimits> {
    if mode_count == 0 {
        return Err(domain("mode count must be at least 1"));
    }
    let f = detectors.occupation;
    Ok(StrongAbsorptionLimits {
        cross_ratio_limit: STRONG_CROSS_RATIO * f * (detectors.alpha_k * detectors.alpha_l).sqrt()
            / mode_count as f64,
        short_range_ratio_limit: STRONG_SHORT_RATIO * f * detectors.alpha_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn literal_heidelberg(n: usize, gamma: f64, h: &DMatrix<C64>) -> DMatrix<C64> {
        // 1 − 2πi W†(−H + iπWW† + iΓ/2)⁻¹W with W the first n columns over √π.
        let m = h.nrows();
        let w2 = 1.0 / std::f64::consts::PI;
        let mut a = -h.clone();
        let eta = half_width(gamma, n, m);
        for i in 0..m {
            a[(i, i)] += C64::new(0.0, eta);
        }
        for i in 0..n {
            a[(i, i)] += C64::new(0.0, std::f64::consts::PI * w2);
        }
        let y = solve(a, &DMatrix::identity(m, n)).unwrap();
        let k = y.rows(0, n).into_owned() * C64::new(0.0, -2.0 * std::f64::consts::PI * w2);
        DMatrix::identity(n, n) + k
    }

    #[test]
    fn dense_k_matrix_form_matches_resonance_formula() {
        for gamma in [0.0, 0.5, 20.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let sys = sample_dense_cavity_reflection(3, gamma, 30, Ensemble::Orthogonal, &mut rng).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let h = gaussian_matrix(&mut rng, 30, Ensemble::Orthogonal, 1.0 / 30f64.sqrt());
            let want = literal_heidelberg(3, gamma, &h);
            assert!(max_abs_diff(sys.r(), &want) < 1e-10);
        }
    }

    #[test]
    fn tridiagonal_reduction_matches_dense_hamiltonian() {
        // Assemble H = [[A, B], [B†, T]] from one draw and compare.
        for ensemble in [Ensemble::Orthogonal, Ensemble::Unitary] {
            let (n, m) = (3, 40);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let draw = CavityDraw::new(n, m, ensemble, &mut rng);
            let mut h = DMatrix::<C64>::zeros(m, m);
            h.view_mut((0, 0), (n, n)).copy_from(&draw.channel_block);
            let b = match &draw.coupling {
                Coupling::Real(b) => b.map(|x| C64::new(x, 0.0)),
                Coupling::Complex(b) => b.clone(),
            };
            h.view_mut((0, n), (n, m - n)).copy_from(&b);
            h.view_mut((n, 0), (m - n, n)).copy_from(&b.adjoint());
            for (i, &d) in draw.diag.iter().enumerate() {
                h[(n + i, n + i)] = C64::new(d, 0.0);
            }
            for (i, &e) in draw.off.iter().enumerate() {
                h[(n + i, n + i + 1)] = C64::new(e, 0.0);
                h[(n + i + 1, n + i)] = C64::new(e, 0.0);
            }
            for gamma in [0.0, 0.7, 9.0] {
                let fast = draw.reflection(gamma).unwrap();
                let want = literal_heidelberg(n, gamma, &h);
                assert!(max_abs_diff(&fast, &want) < 1e-9, "{ensemble:?} γ = {gamma}");
            }
        }
    }

    #[test]
    fn level_count_keeps_absorption_width_small() {
        let model = CavityModel::default();
        assert_eq!(model.level_count(30, 0.1), 600);
        for gamma in [1.0, 10.0, 100.0] {
            let m = model.level_count(30, gamma);
            assert!(half_width(gamma, 30, m) <= model.max_half_width + 1e-12);
        }
        assert!(model.validate(30, 1e6).is_err());
    }

    #[test]
    fn tail_continues_power_laws() {
        let pts: Vec<(f64, SpectralMoments)> = [10.0, 30.0, 100.0]
            .iter()
            .map(|&g: &f64| (g, SpectralMoments::from_absorptance(1.0 - 2.0 / g, 3.0 / (g * g))))
            .collect();
        let m = tail_moments(&pts, 1000.0).unwrap();
        assert_relative_eq!(m.mean_sigma(), 2e-3, max_relative = 1e-10);
        assert_relative_eq!(m.variance(), 3e-6, max_relative = 1e-10);
    }

    #[test]
    fn table_marks_tail_rows() {
        let model = CavityModel {
            max_sampled_gamma: 2.0,
            ..Default::default()
        };
        let t = build_moment_table(&[2], &[0.5, 1.0, 2.0, 8.0], 20, StreamKey::new(3), &model).unwrap();
        let samples: Vec<usize> = t.rows().iter().map(|r| r.samples).collect();
        assert_eq!(samples, vec![20, 20, 20, 0]);
    }

    #[test]
    fn lossless_cavity_is_unitary_and_reciprocal() {
        let model = CavityModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = sample_cavity_reflection(4, 0.0, &model, &mut rng).unwrap();
        let r = sys.r();
        assert!(max_abs_diff(&(r * r.adjoint()), &DMatrix::identity(4, 4)) < 1e-10);
        assert!(sys.reciprocity_defect() < 1e-10);
    }

    #[test]
    fn strong_absorption_swallows_everything() {
        let model = CavityModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let sys = sample_cavity_reflection(3, 1e4, &model, &mut rng).unwrap();
            let p = sys.r() * sys.r().adjoint();
            let top = p.symmetric_eigenvalues().max();
            assert!(top < 1e-2, "{top}");
        }
    }

    #[test]
    fn fast_and_full_samplers_agree_in_distribution() {
        let key = StreamKey::new(8);
        for ensemble in [Ensemble::Orthogonal, Ensemble::Unitary] {
            let model = CavityModel {
                ensemble,
                ..Default::default()
            };
            let gamma = 1.0;
            let n = 4;
            let samples = 3000;
            let fast = estimate_moments(n, gamma, samples, key, &model).unwrap();
            let full: Vec<(f64, f64)> = (0..samples as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = key.child(99).rng(i);
                    let m = model.level_count(n, gamma);
                    let sys = sample_dense_cavity_reflection(n, gamma, m, ensemble, &mut rng).unwrap();
                    sample_observables(sys.r())
                })
                .collect();
            let (a, q): (Vec<f64>, Vec<f64>) = full.into_iter().unzip();
            let slow = moments_from_columns(&a, &q);
            let z = (fast.mean_absorptance() - slow.mean_absorptance()) / fast.se_mean.hypot(slow.se_mean);
            assert!(z.abs() < 4.0, "{ensemble:?}: z = {z}");
            let z = (fast.variance() - slow.variance()) / fast.se_variance.hypot(slow.se_variance);
            assert!(z.abs() < 4.0, "{ensemble:?}: z = {z}");
        }
    }

    #[test]
    fn estimates_are_reproducible() {
        let key = StreamKey::new(21);
        let model = CavityModel::default();
        let a = estimate_moments(3, 0.3, 200, key, &model).unwrap();
        let b = estimate_moments(3, 0.3, 200, key, &model).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_absorption_is_exact() {
        let m = estimate_moments(5, 0.0, 100, StreamKey::new(1), &CavityModel::default()).unwrap();
        assert_eq!(m, SpectralMoments::lossless());
        let t = build_moment_table(&[4], &[0.0], 10, StreamKey::new(1), &CavityModel::default()).unwrap();
        assert_eq!(t.rows()[0].moments, SpectralMoments::lossless());
    }

    #[test]
    fn resonance_factor_is_validated() {
        let model = CavityModel {
            resonance_factor: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_cavity_reflection(2, 1.0, &model, &mut rng).is_err());
        assert!(CavityParams::new(2, 1.0, 4).is_err());
    }

    #[test]
    fn pchip_is_monotone_and_exact_at_nodes() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.1, 0.9, 1.0, 1.0];
        for (xi, yi) in x.iter().zip(&y) {
            assert_relative_eq!(pchip(&x, &y, *xi), *yi, epsilon = 1e-14);
        }
        let mut prev = -1.0;
        for k in 0..=400 {
            let v = pchip(&x, &y, k as f64 / 100.0);
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            MomentRow {
                gamma: 0.01,
                moments: SpectralMoments::from_absorptance(0.0098, 9.5e-5).with_errors(1e-5, 2e-5, 1e-6),
                mode_count: 8,
                samples: 100,
            },
            MomentRow {
                gamma: 1.0,
                moments: SpectralMoments::from_absorptance(0.5, 0.04).with_errors(1e-3, 2e-3, 1e-3),
                mode_count: 8,
                samples: 100,
            },
        ];
        let table = MomentTable::from_rows(rows);
        let mut buf = Vec::new();
        table.write_csv(&mut buf, &["# seed: 1".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("gamma,mean_sigma,mean_sigma_sq,se_mean,se_sq,N,samples"));
        let back = MomentTable::read_csv(buf.as_slice()).unwrap();
        for (a, b) in table.rows().iter().zip(back.rows()) {
            assert_relative_eq!(a.gamma, b.gamma, max_relative = 1e-11);
            assert_relative_eq!(
                a.moments.mean_absorptance(),
                b.moments.mean_absorptance(),
                max_relative = 1e-9
            );
            assert_relative_eq!(a.moments.variance(), b.moments.variance(), max_relative = 1e-6);
        }
    }

    #[test]
    fn interpolation_reproduces_power_laws() {
        let rows: Vec<MomentRow> = [1e-3, 1e-2, 1e-1, 1.0]
            .iter()
            .map(|&g: &f64| MomentRow {
                gamma: g,
                moments: SpectralMoments::from_absorptance(g, g * g),
                mode_count: 0,
                samples: 1,
            })
            .collect();
        let table = MomentTable::from_rows(rows);
        let m = table.moments_at(0.03).unwrap();
        assert_relative_eq!(m.mean_absorptance(), 0.03, max_relative = 1e-12);
        assert_relative_eq!(m.variance(), 9e-4, max_relative = 1e-12);
        let below = table.moments_at(1e-5).unwrap();
        assert_relative_eq!(below.variance(), 1e-10);
        assert!(matches!(table.moments_at(2.0), Err(Error::Range { .. })));
    }

    #[test]
    fn strong_limits_scale_with_detectors() {
        let l = cavity_strong_limits(&DetectorPair::ideal(), 1).unwrap();
        assert_relative_eq!(l.cross_ratio_limit, 0.062);
        assert_relative_eq!(l.short_range_ratio_limit, 0.5);
        let d = DetectorPair::new(0.5, 0.5, 2.0).unwrap();
        let l = cavity_strong_limits(&d, 10).unwrap();
        assert_relative_eq!(l.cross_ratio_limit, 0.0062, max_relative = 1e-12);
        assert_relative_eq!(l.short_range_ratio_limit, 0.5);
        let d = DetectorPair::new(0.0, 1.0, 1.0).unwrap();
        let l = cavity_strong_limits(&d, 3).unwrap();
        assert_eq!((l.cross_ratio_limit, l.short_range_ratio_limit), (0.0, 0.0));
    }
}
