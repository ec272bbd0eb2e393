//! Random-matrix utilities and numerical checks of the large-N approximations
//! that turn matrix-element averages of QQ† into trace moments.
//!
//! Three statements are checked against a channel-symmetric sampler:
//!
//! * equivalent channels: ⟨tr(QQ†)²⟩ = N(N−1)⟨|(QQ†)_kl|²⟩ + N⟨(QQ†)_kk²⟩ with the
//!   same ⟨|(QQ†)_kl|²⟩ for every pair k ≠ l;
//! * factorization: ⟨(QQ†)_kk²⟩ = ⟨(QQ†)_kk⟩²[1 + O(1/N)];
//! * the covariance identity ⟨|(QQ†)_kl|²⟩ = N⁻²⟨tr(QQ†)²⟩ − N⁻³⟨tr QQ†⟩² + O(N⁻²).

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{max_abs_diff, C64};
use crate::rng::StreamKey;
use crate::stats::{jackknife, weighted_linear_fit};

/// Eigenvalues of QQ† this far outside [0, 1] are clamped as rounding noise.
pub const CLAMP_TOLERANCE: f64 = 1e-8;

/// Scattering matrix blocks.
#[derive(Clone, Debug, PartialEq)]
pub enum Blocks {
    /// Only the reflection block, for a medium with no transmission.
    Reflection { r: DMatrix<C64> },
    /// Both sides: S = [[r, t], [t′, r′]].
    TwoSided {
        r: DMatrix<C64>,
        t: DMatrix<C64>,
        t_prime: DMatrix<C64>,
        r_prime: DMatrix<C64>,
    },
}

/// An N-mode (reflection only) or 2N-mode scattering system.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringSystem {
    blocks: Blocks,
}

impl ScatteringSystem {
    pub fn reflection(r: DMatrix<C64>) -> Result<Self> {
        if !r.is_square() {
            return Err(domain("reflection block must be square"));
        }
        Ok(Self {
            blocks: Blocks::Reflection { r },
        })
    }

    /// Split a 2N×2N matrix into its four N×N blocks.
    pub fn two_sided(s: &DMatrix<C64>) -> Result<Self> {
        if !s.is_square() || !s.nrows().is_multiple_of(2) {
            return Err(domain("two-sided scattering matrix must be 2N×2N"));
        }
        let n = s.nrows() / 2;
        Ok(Self {
            blocks: Blocks::TwoSided {
                r: s.view((0, 0), (n, n)).into_owned(),
                t: s.view((0, n), (n, n)).into_owned(),
                t_prime: s.view((n, 0), (n, n)).into_owned(),
                r_prime: s.view((n, n), (n, n)).into_owned(),
            },
        })
    }

    pub fn mode_count(&self) -> usize {
        self.r().nrows()
    }

    pub fn blocks(&self) -> &Blocks {
        &self.blocks
    }

    pub fn r(&self) -> &DMatrix<C64> {
        match &self.blocks {
            Blocks::Reflection { r } | Blocks::TwoSided { r, .. } => r,
        }
    }

    pub fn t(&self) -> Option<&DMatrix<C64>> {
        match &self.blocks {
            Blocks::Reflection { .. } => None,
            Blocks::TwoSided { t, .. } => Some(t),
        }
    }

    /// Largest deviation from r = rᵀ, r′ = r′ᵀ, t = t′ᵀ.
    pub fn reciprocity_defect(&self) -> f64 {
        match &self.blocks {
            Blocks::Reflection { r } => max_abs_diff(r, &r.transpose()),
            Blocks::TwoSided {
                r,
                t,
                t_prime,
                r_prime,
            } => max_abs_diff(r, &r.transpose())
                .max(max_abs_diff(r_prime, &r_prime.transpose()))
                .max(max_abs_diff(t, &t_prime.transpose())),
        }
    }

    /// 1 − rr† − tt† without any checks.
    pub fn raw_qq_dagger(&self) -> DMatrix<C64> {
        let n = self.mode_count();
        let mut q = DMatrix::<C64>::identity(n, n) - self.r() * self.r().adjoint();
        if let Some(t) = self.t() {
            q -= t * t.adjoint();
        }
        (&q + q.adjoint()) * C64::new(0.5, 0.0)
    }
}

/// QQ† = 1 − rr† − tt† (or 1 − rr†), with its spectrum forced into [0, 1].
///
/// Eigenvalues up to [`CLAMP_TOLERANCE`] outside the interval are clamped;
/// anything further out is a [`Error::SubUnitarity`].
pub fn qq_dagger(system: &ScatteringSystem) -> Result<DMatrix<C64>> {
    let q = system.raw_qq_dagger();
    let eig = q.clone().symmetric_eigen();
    let mut clamp = false;
    for &ev in eig.eigenvalues.iter() {
        if !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&ev) {
            return Err(Error::SubUnitarity(ev));
        }
        clamp |= !(0.0..=1.0).contains(&ev);
    }
    if !clamp {
        return Ok(q);
    }
    let vals = eig.eigenvalues.map(|v| C64::new(v.clamp(0.0, 1.0), 0.0));
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&vals) * v.adjoint())
}

/// Haar-distributed n×n unitary: QR of a complex Gaussian matrix with the
/// phases of R's diagonal moved into Q.
pub fn haar_unitary<R: Rng>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let z = DMatrix::<C64>::from_fn(n, n, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// A family of random scattering systems indexed by the mode count.
pub trait SystemSampler: Sync {
    fn sample(&self, mode_count: usize, rng: &mut ChaCha8Rng) -> Result<ScatteringSystem>;
}

impl<F> SystemSampler for F
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<ScatteringSystem> + Sync,
{
    fn sample(&self, mode_count: usize, rng: &mut ChaCha8Rng) -> Result<ScatteringSystem> {
        self(mode_count, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// QQ† vanishes identically, so the check has nothing to test.
    Degenerate,
}

/// Outcome of one validation check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    #[serde(rename = "N")]
    pub mode_counts: Vec<usize>,
    pub samples: usize,
    pub estimate: f64,
    pub error: f64,
    pub verdict: Verdict,
    #[serde(default)]
    pub details: serde_json::Value,
}

impl CheckReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

const JACKKNIFE_BLOCKS: usize = 100;

fn sample_qq<S: SystemSampler + ?Sized>(
    sampler: &S,
    mode_count: usize,
    samples: usize,
    key: StreamKey,
) -> Result<Vec<DMatrix<C64>>> {
    let key = key.child(mode_count as u64);
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.rng(i as u64);
            qq_dagger(&sampler.sample(mode_count, &mut rng)?)
        })
        .collect()
}

fn is_degenerate(qs: &[DMatrix<C64>]) -> bool {
    qs.iter().all(|q| q.iter().all(|z| z.norm() < 1e-12))
}

fn degenerate_report(check: &str, mode_counts: Vec<usize>, samples: usize) -> CheckReport {
    CheckReport {
        check: check.into(),
        mode_counts,
        samples,
        estimate: 0.0,
        error: 0.0,
        verdict: Verdict::Degenerate,
        details: serde_json::json!({ "reason": "QQ† vanishes for every sample" }),
    }
}

/// Equivalent-channel check at one mode count.
///
/// Per sample the residual tr(QQ†)² − N(N−1)|(QQ†)₀₁|² − N(QQ†)₀₀² is formed;
/// its mean must vanish within 3σ. Each pair mean ⟨|(QQ†)_kl|²⟩ is also
/// compared with the all-pair mean; a pair more than 5σ away fails the check.
pub fn equivalent_channel_check<S: SystemSampler + ?Sized>(
    sampler: &S,
    mode_count: usize,
    samples: usize,
    key: StreamKey,
) -> Result<CheckReport> {
    const NAME: &str = "equivalent-channel";
    if mode_count == 0 || samples < 2 {
        return Err(domain("need N ≥ 1 and at least two samples"));
    }
    let qs = sample_qq(sampler, mode_count, samples, key)?;
    if is_degenerate(&qs) {
        return Ok(degenerate_report(NAME, vec![mode_count], samples));
    }
    let n = mode_count;
    let nf = n as f64;
    let residual: Vec<f64> = qs
        .iter()
        .map(|q| {
            let tr_sq: f64 = q.iter().map(|z| z.norm_sqr()).sum();
            let off = if n > 1 { q[(0, 1)].norm_sqr() } else { 0.0 };
            tr_sq - nf * (nf - 1.0) * off - nf * q[(0, 0)].re.powi(2)
        })
        .collect();
    let (estimate, error) = jackknife(&[&residual], JACKKNIFE_BLOCKS, |m| m[0]);
    let residual_ok = estimate.abs() <= 3.0 * error;

    let mut worst = serde_json::Value::Null;
    let mut pairs_ok = true;
    if n > 1 {
        let pair_count = n * (n - 1) / 2;
        let all: Vec<f64> = qs
            .iter()
            .map(|q| {
                let mut s = 0.0;
                for k in 0..n {
                    for l in k + 1..n {
                        s += q[(k, l)].norm_sqr();
                    }
                }
                s / pair_count as f64
            })
            .collect();
        let mut worst_z = 0.0f64;
        for k in 0..n {
            for l in k + 1..n {
                let diff: Vec<f64> = qs
                    .iter()
                    .zip(&all)
                    .map(|(q, a)| q[(k, l)].norm_sqr() - a)
                    .collect();
                let (d, se) = jackknife(&[&diff], JACKKNIFE_BLOCKS, |m| m[0]);
                let z = if se > 0.0 { d / se } else { 0.0 };
                if z.abs() > worst_z.abs() {
                    worst_z = z;
                    worst = serde_json::json!({ "k": k, "l": l, "z": z });
                }
            }
        }
        pairs_ok = worst_z.abs() <= 5.0;
    }
    Ok(CheckReport {
        check: NAME.into(),
        mode_counts: vec![mode_count],
        samples,
        estimate,
        error,
        verdict: if residual_ok && pairs_ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        details: serde_json::json!({ "worst_pair": worst }),
    })
}

/// Relative factorization deficit d(N) = ⟨A_kk²⟩/⟨A_kk⟩² − 1 at each mode
/// count (A = QQ†, diagonal entries pooled), fitted as d ∝ N^(−p).
///
/// The estimate is p; the verdict passes when p lies within 1 ± 0.3.
pub fn factorization_check<S: SystemSampler + ?Sized>(
    sampler: &S,
    mode_counts: &[usize],
    samples: usize,
    key: StreamKey,
) -> Result<CheckReport> {
    const NAME: &str = "factorization";
    if mode_counts.len() < 2 || mode_counts.contains(&0) || samples < 2 {
        return Err(domain("need at least two positive mode counts and two samples"));
    }
    let mut deficits = Vec::with_capacity(mode_counts.len());
    for &n in mode_counts {
        let qs = sample_qq(sampler, n, samples, key)?;
        if is_degenerate(&qs) {
            return Ok(degenerate_report(NAME, mode_counts.to_vec(), samples));
        }
        let first: Vec<f64> = qs
            .iter()
            .map(|q| q.diagonal().iter().map(|z| z.re).sum::<f64>() / n as f64)
            .collect();
        let second: Vec<f64> = qs
            .iter()
            .map(|q| q.diagonal().iter().map(|z| z.re * z.re).sum::<f64>() / n as f64)
            .collect();
        deficits.push(jackknife(&[&first, &second], JACKKNIFE_BLOCKS, |m| {
            m[1] / (m[0] * m[0]) - 1.0
        }));
    }
    let per_n: Vec<_> = mode_counts
        .iter()
        .zip(&deficits)
        .map(|(n, (d, se))| serde_json::json!({ "N": n, "deficit": d, "error": se }))
        .collect();
    if deficits.iter().any(|(d, _)| *d <= 0.0) {
        return Ok(CheckReport {
            check: NAME.into(),
            mode_counts: mode_counts.to_vec(),
            samples,
            estimate: f64::NAN,
            error: f64::NAN,
            verdict: Verdict::Fail,
            details: serde_json::json!({ "deficits": per_n, "reason": "nonpositive deficit" }),
        });
    }
    let x: Vec<f64> = mode_counts.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = deficits.iter().map(|(d, _)| d.ln()).collect();
    let s: Vec<f64> = deficits.iter().map(|(d, se)| se / d).collect();
    let fit = weighted_linear_fit(&x, &y, &s);
    let p = -fit.slope;
    Ok(CheckReport {
        check: NAME.into(),
        mode_counts: mode_counts.to_vec(),
        samples,
        estimate: p,
        error: fit.slope_error,
        verdict: if (p - 1.0).abs() <= 0.3 {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        details: serde_json::json!({ "deficits": per_n }),
    })
}

/// Direct ⟨|A_kl|²⟩ (k ≠ l pooled) minus N⁻²⟨tr A²⟩ − N⁻³⟨tr A⟩².
///
/// Passes when the difference is within 3σ + C/N², with C = `remainder_scale`.
pub fn covariance_identity_check<S: SystemSampler + ?Sized>(
    sampler: &S,
    mode_count: usize,
    samples: usize,
    remainder_scale: f64,
    key: StreamKey,
) -> Result<CheckReport> {
    const NAME: &str = "covariance-identity";
    if mode_count < 2 || samples < 2 {
        return Err(domain("need N ≥ 2 and at least two samples"));
    }
    let qs = sample_qq(sampler, mode_count, samples, key)?;
    if is_degenerate(&qs) {
        return Ok(degenerate_report(NAME, vec![mode_count], samples));
    }
    let n = mode_count as f64;
    let mut off = Vec::with_capacity(samples);
    let mut tr_sq = Vec::with_capacity(samples);
    let mut tr = Vec::with_capacity(samples);
    for q in &qs {
        let total: f64 = q.iter().map(|z| z.norm_sqr()).sum();
        let diag_sq: f64 = q.diagonal().iter().map(|z| z.re * z.re).sum();
        off.push((total - diag_sq) / (n * (n - 1.0)));
        tr_sq.push(total);
        tr.push(q.trace().re);
    }
    let (deviation, error) = jackknife(&[&off, &tr_sq, &tr], JACKKNIFE_BLOCKS, |m| {
        m[0] - (m[1] / (n * n) - m[2] * m[2] / (n * n * n))
    });
    let (direct, direct_error) = jackknife(&[&off], JACKKNIFE_BLOCKS, |m| m[0]);
    let band = 3.0 * error + remainder_scale / (n * n);
    Ok(CheckReport {
        check: NAME.into(),
        mode_counts: vec![mode_count],
        samples,
        estimate: deviation,
        error,
        verdict: if deviation.abs() <= band {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        details: serde_json::json!({
            "direct": direct,
            "direct_error": direct_error,
            "band": band,
            "scaled_deviation": deviation * n * n,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn haar_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 3, 16] {
            let u = haar_unitary(n, &mut rng);
            let err = max_abs_diff(&(&u * u.adjoint()), &DMatrix::identity(n, n));
            assert!(err < 1e-12, "n = {n}: {err}");
            if n == 1 {
                assert_relative_eq!(u[(0, 0)].norm(), 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn unitary_scattering_has_no_emission() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = haar_unitary(6, &mut rng);
        let sys = ScatteringSystem::two_sided(&s).unwrap();
        let q = qq_dagger(&sys).unwrap();
        assert!(q.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn black_body_has_unit_qq() {
        let sys = ScatteringSystem::reflection(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(qq_dagger(&sys).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn amplifying_reflection_is_rejected() {
        let sys = ScatteringSystem::reflection(DMatrix::from_element(1, 1, c(1.01))).unwrap();
        assert!(matches!(qq_dagger(&sys), Err(Error::SubUnitarity(_))));
    }

    #[test]
    fn rounding_noise_is_clamped() {
        let sys = ScatteringSystem::reflection(DMatrix::from_element(1, 1, c(1.0 + 1e-11))).unwrap();
        let q = qq_dagger(&sys).unwrap();
        assert!(q[(0, 0)].re >= 0.0);
    }

    #[test]
    fn deterministic_diagonal_system() {
        let sampler = |n: usize, _: &mut ChaCha8Rng| {
            ScatteringSystem::reflection(DMatrix::identity(n, n) * c(0.6))
        };
        let key = StreamKey::new(1);
        let rep = equivalent_channel_check(&sampler, 4, 50, key).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass);
        assert!(rep.estimate.abs() < 1e-12);
        let rep = factorization_check(&sampler, &[4, 8], 20, key).unwrap();
        assert_eq!(rep.verdict, Verdict::Fail);
        assert!(rep.details["deficits"][0]["deficit"].as_f64().unwrap().abs() < 1e-12);
    }

    #[test]
    fn lossless_system_is_degenerate() {
        let sampler = |n: usize, rng: &mut ChaCha8Rng| ScatteringSystem::reflection(haar_unitary(n, rng));
        let rep = factorization_check(&sampler, &[2, 4], 10, StreamKey::new(2)).unwrap();
        assert_eq!(rep.verdict, Verdict::Degenerate);
        let json = rep.to_json().unwrap();
        assert!(json.contains("\"verdict\": \"degenerate\""));
    }

    #[test]
    fn single_mode_identity_is_trivial() {
        let sampler = |_: usize, rng: &mut ChaCha8Rng| {
            let x: f64 = rng.random();
            ScatteringSystem::reflection(DMatrix::from_element(1, 1, c(x)))
        };
        let rep = equivalent_channel_check(&sampler, 1, 100, StreamKey::new(3)).unwrap();
        assert!(rep.estimate.abs() < 1e-14);
    }
}
