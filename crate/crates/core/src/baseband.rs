//! Symbol-level synthetic oracle for the SSINR model.
//!
//! A slot is the superposition `r = sum_i x_i v_i h_i + n` of unit-envelope
//! QPSK packets. Cancelling user `k` subtracts a replica `x_k h_k (1 + eps_k)`
//! re-created from a reference slot, which also carries that slot's noise.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::phy_model::{ssinr_with, CancellationContext, Eq3Reading, LinkParams, LinkSet, UserId, UserSet};
use crate::rng;
use crate::scenario::Estimate;

/// How often the multiplicative hardware coefficient is redrawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HardwareNoiseMode {
    #[default]
    PerSymbol,
    /// One coefficient for the whole packet.
    PerPacket,
}

impl FromStr for HardwareNoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-symbol" => Ok(HardwareNoiseMode::PerSymbol),
            "per-packet" => Ok(HardwareNoiseMode::PerPacket),
            _ => Err(Error::invalid("hardware_noise_mode", format!("expected per-symbol or per-packet, got `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotOptions {
    pub symbols: usize,
    pub hardware_noise: HardwareNoiseMode,
    /// AWGN power of the slot; defaults to the first user's `noise_power`.
    pub noise_power: Option<f64>,
    /// Constant phase offset added to every channel in the slot.
    pub phase_drift: f64,
}

impl Default for SlotOptions {
    fn default() -> Self {
        SlotOptions { symbols: 100_000, hardware_noise: HardwareNoiseMode::PerSymbol, noise_power: None, phase_drift: 0.0 }
    }
}

/// Ground truth of one user in a slot.
#[derive(Clone, Debug, PartialEq)]
pub struct UserTruth {
    pub link: LinkParams,
    pub h: Complex64,
    pub symbols: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub phase_drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasebandSlot {
    pub samples: Vec<Complex64>,
    pub truth: Vec<UserTruth>,
    pub noise_sigma2: f64,
    seed: u64,
}

impl BasebandSlot {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

fn mean_power(samples: &[Complex64]) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Circularly symmetric complex Gaussian with total variance `var`.
fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

fn qpsk<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let bits: u8 = rng.random_range(0..4);
    let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

/// Unit-envelope QPSK payload determined by `payload_seed`.
pub fn qpsk_payload(payload_seed: u64, symbols: usize) -> Vec<Complex64> {
    let mut rng = rng::stream(payload_seed, u64::MAX);
    (0..symbols).map(|_| qpsk(&mut rng)).collect()
}

/// Superpose `users` (link, payload seed) into one slot. Equal seeds give
/// bit-identical samples.
pub fn synthesize_slot(users: &[(LinkParams, u64)], opts: &SlotOptions, seed: u64) -> Result<BasebandSlot> {
    if users.is_empty() {
        return Err(Error::EmptyActiveSet);
    }
    if opts.symbols == 0 {
        return Err(Error::invalid("symbols", "must be >= 1"));
    }
    for (link, _) in users {
        link.validate()?;
    }
    let noise = opts.noise_power.unwrap_or(users[0].0.noise_power);
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("noise_power", format!("must be finite and >= 0, got {noise}")));
    }
    let n = opts.symbols;
    let mut truth = Vec::with_capacity(users.len());
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    for (index, &(link, payload_seed)) in users.iter().enumerate() {
        let mut rng = rng::stream(seed, 1 + index as u64);
        let phase = rng.random_range(0.0..2.0 * PI) + opts.phase_drift;
        let h = Complex64::from_polar(link.gamma.sqrt(), phase);
        let symbols = qpsk_payload(payload_seed, n);
        let v: Vec<Complex64> = match opts.hardware_noise {
            HardwareNoiseMode::PerSymbol => (0..n).map(|_| 1.0 + cn(&mut rng, link.sigma_v2)).collect(),
            HardwareNoiseMode::PerPacket => vec![1.0 + cn(&mut rng, link.sigma_v2); n],
        };
        for ((s, x), vi) in samples.iter_mut().zip(&symbols).zip(&v) {
            *s += x * vi * h;
        }
        truth.push(UserTruth { link, h, symbols, v, phase_drift: opts.phase_drift });
    }
    let mut rng = rng::stream(seed, 0);
    for s in &mut samples {
        *s += cn(&mut rng, noise);
    }
    Ok(BasebandSlot { samples, truth, noise_sigma2: noise, seed })
}

/// Circular mean of `arg(received) - arg(reference)`.
pub fn estimate_phase_drift(reference: &[Complex64], received: &[Complex64]) -> Result<f64> {
    if reference.len() != received.len() {
        return Err(Error::LengthMismatch { left: reference.len(), right: received.len() });
    }
    if reference.is_empty() {
        return Err(Error::invalid("reference", "must not be empty"));
    }
    let sum: Complex64 = reference
        .iter()
        .zip(received)
        .map(|(x, r)| {
            let d = r * x.conj();
            if d.norm() > 0.0 { d / d.norm() } else { d }
        })
        .sum();
    Ok(sum.arg())
}

/// Empirical SINR with a 95% confidence interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinrMeasurement {
    pub sinr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SinrMeasurement {
    pub fn db(&self) -> f64 {
        10.0 * self.sinr.log10()
    }

    /// Largest distance of the CI bounds from the estimate, in dB.
    pub fn ci_half_width_db(&self) -> f64 {
        let d = self.db();
        (10.0 * self.ci_high.log10() - d).max(d - 10.0 * self.ci_low.log10())
    }
}

const BATCHES: usize = 50;

/// Batch-means 95% interval of the mean of `values`.
fn mean_with_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let batches = BATCHES.min(n);
    if batches < 2 {
        return (mean, 0.0);
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (batches - 1) as f64).expect("df > 0").inverse_cdf(0.975);
    (mean, t * (var / batches as f64).sqrt())
}

/// Per-user estimation error by role: `eps_self` for the target, `eps_cross` otherwise.
pub fn role_eps(slot: &BasebandSlot, target: UserId) -> Vec<f64> {
    slot.truth
        .iter()
        .enumerate()
        .map(|(k, t)| if k == target { t.link.eps_self } else { t.link.eps_cross })
        .collect()
}

/// Cancel `cancelled` from the slot with `h_k (1 + eps[k])` replicas and
/// measure the target's SINR as `|h_target|^2` over the mean remaining power.
///
/// Every replica of a user other than the target is re-created from its own
/// reference slot and therefore brings an independent noise draw of the slot
/// noise power.
pub fn cancel_and_measure(slot: &BasebandSlot, target: UserId, cancelled: UserSet, eps: &[f64]) -> Result<SinrMeasurement> {
    let users = UserSet::first_n(slot.truth.len());
    CancellationContext::new(users, cancelled, target)?;
    if eps.len() != slot.truth.len() {
        return Err(Error::LengthMismatch { left: eps.len(), right: slot.truth.len() });
    }
    let mut residual = slot.samples.clone();
    for k in cancelled.iter() {
        let t = &slot.truth[k];
        let h_hat = t.h * (1.0 + eps[k]);
        for (r, x) in residual.iter_mut().zip(&t.symbols) {
            *r -= x * h_hat;
        }
        if k != target {
            let mut rng = rng::stream(slot.seed, 1_000_000 + k as u64);
            for r in &mut residual {
                *r -= cn(&mut rng, slot.noise_sigma2);
            }
        }
    }
    let powers: Vec<f64> = residual.iter().map(|r| r.norm_sqr()).collect();
    let (mean, half) = mean_with_ci(&powers);
    if mean <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let signal = slot.truth[target].h.norm_sqr();
    Ok(SinrMeasurement {
        sinr: signal / mean,
        ci_low: signal / (mean + half),
        ci_high: if mean > half { signal / (mean - half) } else { f64::INFINITY },
    })
}

/// Mean power of `x v h - x h (1 + eps)` for one link, the quantity the
/// closed-form residual powers approximate.
pub fn residual_power_oracle(link: &LinkParams, self_cancellation: bool, symbols: usize, seed: u64) -> Result<Estimate> {
    link.validate()?;
    if symbols < 2 {
        return Err(Error::invalid("symbols", "must be >= 2"));
    }
    let eps = if self_cancellation { link.eps_self } else { link.eps_cross };
    let mut rng = rng::stream(seed, 0);
    let h = Complex64::from_polar(link.gamma.sqrt(), rng.random_range(0.0..2.0 * PI));
    let values: Vec<f64> = (0..symbols)
        .map(|_| {
            let x = qpsk(&mut rng);
            let v = 1.0 + cn(&mut rng, link.sigma_v2);
            (x * v * h - x * h * (1.0 + eps)).norm_sqr()
        })
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Estimate { mean, std_error: (var / n).sqrt(), trials: symbols as u64 })
}

/// Monte Carlo QPSK symbol error rate over Rician block fading with
/// coherent detection; an independent check of the MGF integral.
pub fn rician_ser_monte_carlo(gamma: f64, k_factor: f64, trials: u64, seed: u64) -> Result<Estimate> {
    if !(gamma >= 0.0 && gamma.is_finite()) || !(k_factor >= 0.0 && k_factor.is_finite()) {
        return Err(Error::invalid("gamma", "gamma and k_factor must be finite and >= 0"));
    }
    if trials < 2 {
        return Err(Error::invalid("trials", "must be >= 2"));
    }
    let los = (k_factor / (k_factor + 1.0)).sqrt();
    let scatter = 1.0 / (k_factor + 1.0);
    let errors: u64 = rng::chunks(trials, 1 << 16)
        .into_par_iter()
        .map(|(index, n)| {
            let mut rng = rng::stream(seed, index);
            let mut errors = 0u64;
            for _ in 0..n {
                let h = Complex64::new(los, 0.0) + cn(&mut rng, scatter);
                let x = qpsk(&mut rng);
                let y = x * h * gamma.sqrt() + cn(&mut rng, 1.0);
                let z = y * h.conj();
                if z.re.signum() != x.re.signum() || z.im.signum() != x.im.signum() {
                    errors += 1;
                }
            }
            errors
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let p = errors as f64 / trials as f64;
    Ok(Estimate { mean: p, std_error: (p * (1.0 - p) / trials as f64).sqrt(), trials })
}

/// One row of the model-versus-simulation comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationRow {
    /// Packets cancelled besides the target's own.
    pub cancelled_others: usize,
    pub analytical: f64,
    pub empirical: SinrMeasurement,
}

impl ValidationRow {
    pub fn analytical_db(&self) -> f64 {
        10.0 * self.analytical.log10()
    }

    pub fn gap_db(&self) -> f64 {
        (self.analytical_db() - self.empirical.db()).abs()
    }
}

/// Analytical and empirical SSINR of one configuration.
pub fn compare(
    links: &[LinkParams],
    target: UserId,
    cancelled: UserSet,
    opts: &SlotOptions,
    eq3: Eq3Reading,
    seed: u64,
) -> Result<ValidationRow> {
    let users: Vec<(LinkParams, u64)> =
        links.iter().enumerate().map(|(i, &l)| (l, seed.wrapping_mul(31).wrapping_add(i as u64))).collect();
    let slot = synthesize_slot(&users, opts, seed)?;
    let all = UserSet::first_n(links.len());
    let ctx = CancellationContext::new(all, cancelled, target)?;
    let link_set = LinkSet::from_map(links.iter().copied().enumerate().collect());
    let analytical = ssinr_with(&ctx, &link_set, eq3)?;
    let empirical = cancel_and_measure(&slot, target, cancelled, &role_eps(&slot, target))?;
    Ok(ValidationRow { cancelled_others: cancelled.len() - 1, analytical, empirical })
}

/// Slots of `c + 1` identical users with every packet cancelled, `c = 0..=max_others`.
pub fn validation_rows(link: &LinkParams, max_others: usize, opts: &SlotOptions, seed: u64) -> Result<Vec<ValidationRow>> {
    (0..=max_others)
        .into_par_iter()
        .map(|c| {
            let links = vec![*link; c + 1];
            compare(&links, 0, UserSet::first_n(c + 1), opts, Eq3Reading::Corrected, rng::stream(seed, c as u64).random())
        })
        .collect()
}

/// Write the slot as little-endian interleaved `f32` I/Q to `path` and a
/// one-line description to `path` with a `.txt` extension appended.
pub fn write_raw_slot(slot: &BasebandSlot, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in &slot.samples {
        out.write_all(&(s.re as f32).to_le_bytes())?;
        out.write_all(&(s.im as f32).to_le_bytes())?;
    }
    out.flush()?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".txt");
    std::fs::write(
        sidecar,
        format!(
            "format=f32le-iq samples={} users={} noise_power={}\n",
            slot.samples.len(),
            slot.truth.len(),
            slot.noise_sigma2
        ),
    )?;
    Ok(())
}
