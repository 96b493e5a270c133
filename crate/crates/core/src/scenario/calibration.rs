//! Fitting homogeneous link parameters to target resolution probabilities.

use std::fmt;
use std::str::FromStr;

use super::{enumerate_scenarios, AddressModel, AddressModelKind, DecodeCache, PhyModel};
use crate::error::{Error, Result};
use crate::link_abstraction::RicianLink;
use crate::phy_model::{Eq3Reading, LinkParams, LinkSet};
use crate::sicqta::{DecodeChain, SicqtaEngine};

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationTarget {
    pub label: String,
    pub p_res: f64,
}

impl CalibrationTarget {
    pub fn new(label: impl Into<String>, p_res: f64) -> Self {
        CalibrationTarget { label: label.into(), p_res }
    }
}

impl FromStr for CalibrationTarget {
    type Err = Error;

    /// `label:p_res`
    fn from_str(s: &str) -> Result<Self> {
        let (label, p) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid("targets", format!("expected label:p_res, got `{s}`")))?;
        let p: f64 = p.trim().parse().map_err(|_| Error::invalid("targets", format!("bad probability in `{s}`")))?;
        Ok(CalibrationTarget::new(label.trim(), p))
    }
}

pub const DEFAULT_TARGETS: [(&str, f64); 2] = [("21", 0.9324), ("221", 0.9954)];

/// Which two scalars the fit is free to move.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FitParameters {
    /// Interference-free SNR and hardware-noise variance; `eps_cross` fixed.
    #[default]
    SnrAndHardwareNoise,
    /// Interference-free SNR and cross estimation error; `sigma_v2` fixed.
    SnrAndCrossEstimation,
}

impl FitParameters {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitParameters::SnrAndHardwareNoise => "snr-sigma-v2",
            FitParameters::SnrAndCrossEstimation => "snr-eps-cross",
        }
    }

    /// log10 bounds of the second free parameter.
    fn second_bounds(&self, eps_self: f64) -> (f64, f64) {
        match self {
            FitParameters::SnrAndHardwareNoise => (-10.0, -0.5),
            // the cross error may not undercut the self error
            FitParameters::SnrAndCrossEstimation => (eps_self.max(1e-5).log10(), -0.3),
        }
    }
}

impl fmt::Display for FitParameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitParameters {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr-sigma-v2" => Ok(FitParameters::SnrAndHardwareNoise),
            "snr-eps-cross" => Ok(FitParameters::SnrAndCrossEstimation),
            _ => Err(Error::invalid("fit", format!("expected snr-sigma-v2 or snr-eps-cross, got `{s}`"))),
        }
    }
}

/// Fixed quantities of a calibration run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationSetup {
    /// Signal power; the noise power follows from the fitted SNR.
    pub gamma: f64,
    pub eps_self: f64,
    pub eps_cross: f64,
    pub sigma_v2: f64,
    pub rician: RicianLink,
    pub eq3: Eq3Reading,
    /// Tree depth used to find each label's decode chain.
    pub address_bits: u8,
    pub fit: FitParameters,
    /// Largest accepted absolute residual.
    pub tolerance: f64,
}

impl Default for CalibrationSetup {
    fn default() -> Self {
        CalibrationSetup {
            gamma: 1.0,
            eps_self: 0.001,
            eps_cross: 0.2,
            sigma_v2: 0.0,
            rician: RicianLink::default(),
            eq3: Eq3Reading::Corrected,
            address_bits: 3,
            fit: FitParameters::SnrAndHardwareNoise,
            tolerance: 1e-4,
        }
    }
}

/// log10 bounds of the interference-free SNR.
const SNR_BOUNDS: (f64, f64) = (-1.0, 9.0);

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub link: LinkParams,
    pub fit: FitParameters,
    pub rician: RicianLink,
    pub eq3: Eq3Reading,
    /// Each target with the fitted prediction.
    pub predictions: Vec<(CalibrationTarget, f64)>,
    pub max_residual: f64,
}

impl Calibration {
    /// The fitted link applied uniformly to every user.
    pub fn phy(&self) -> PhyModel {
        PhyModel { links: LinkSet::uniform(self.link), rician: self.rician, eq3: self.eq3 }
    }
}

/// Decode chain of the most probable configuration carrying `label`, with
/// the user count taken from the label's first (root) occupancy.
pub fn chain_for_label(label: &str, address_bits: u8) -> Result<DecodeChain> {
    let first = if label.contains('.') { label.split('.').next() } else { label.get(..1) };
    let users: usize = first
        .and_then(|s| s.parse().ok())
        .filter(|&m| m >= 1)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    let model = AddressModel::new(AddressModelKind::IidBits, address_bits, users)
        .map_err(|_| Error::UnknownLabel(label.to_string()))?;
    let engine = SicqtaEngine::new(address_bits)?;
    enumerate_scenarios(&model, &engine)?
        .into_iter()
        .find(|s| s.label == label)
        .map(|s| s.chain)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))
}

/// Resolution probability of `label` with `link` applied to every user.
pub fn predict_label(label: &str, link: &LinkParams, rician: &RicianLink, eq3: Eq3Reading, address_bits: u8) -> Result<f64> {
    let chain = chain_for_label(label, address_bits)?;
    let phy = PhyModel { links: LinkSet::uniform(*link), rician: *rician, eq3 };
    DecodeCache::new(&phy).resolution(&chain, &phy.links)
}

struct Problem<'a> {
    setup: &'a CalibrationSetup,
    chains: Vec<DecodeChain>,
    targets: &'a [CalibrationTarget],
    bounds: [(f64, f64); 2],
}

impl Problem<'_> {
    fn link(&self, x: [f64; 2]) -> Result<LinkParams> {
        let s = self.setup;
        let noise = s.gamma / 10f64.powf(x[0]);
        let second = 10f64.powf(x[1]);
        match s.fit {
            FitParameters::SnrAndHardwareNoise => LinkParams::new(s.gamma, second, s.eps_self, s.eps_cross, noise),
            FitParameters::SnrAndCrossEstimation => LinkParams::new(s.gamma, s.sigma_v2, s.eps_self, second, noise),
        }
    }

    fn residuals(&self, x: [f64; 2]) -> Result<Vec<f64>> {
        let phy = PhyModel { links: LinkSet::uniform(self.link(x)?), rician: self.setup.rician, eq3: self.setup.eq3 };
        let mut cache = DecodeCache::new(&phy);
        self.chains
            .iter()
            .zip(self.targets)
            .map(|(chain, t)| Ok(cache.resolution(chain, &phy.links)? - t.p_res))
            .collect()
    }

    fn clamp(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0].clamp(self.bounds[0].0, self.bounds[0].1), x[1].clamp(self.bounds[1].0, self.bounds[1].1)]
    }

    /// Damped Gauss-Newton on the sum of squared residuals, kept in the box.
    fn levenberg_marquardt(&self, start: [f64; 2]) -> Result<([f64; 2], f64)> {
        let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
        let mut x = start;
        let mut r = self.residuals(x)?;
        let mut c = cost(&r);
        let mut lambda = 1e-3;
        for _ in 0..300 {
            if max_abs(&r) < self.setup.tolerance * 1e-3 {
                break;
            }
            let h = 1e-6;
            let mut jac = vec![[0.0; 2]; r.len()];
            for p in 0..2 {
                let mut hi = x;
                let mut lo = x;
                hi[p] += h;
                lo[p] -= h;
                let (hi, lo) = (self.clamp(hi), self.clamp(lo));
                let (rh, rl) = (self.residuals(hi)?, self.residuals(lo)?);
                let span = hi[p] - lo[p];
                for (row, (a, b)) in jac.iter_mut().zip(rh.iter().zip(&rl)) {
                    row[p] = (a - b) / span;
                }
            }
            let mut a = [[0.0; 2]; 2];
            let mut g = [0.0; 2];
            for (row, ri) in jac.iter().zip(&r) {
                for i in 0..2 {
                    g[i] += row[i] * ri;
                    for j in 0..2 {
                        a[i][j] += row[i] * row[j];
                    }
                }
            }
            let mut improved = false;
            while lambda < 1e12 {
                let m = [
                    [a[0][0] * (1.0 + lambda) + 1e-300, a[0][1]],
                    [a[1][0], a[1][1] * (1.0 + lambda) + 1e-300],
                ];
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() > 0.0 && det.is_finite() {
                    let dx = [(-g[0] * m[1][1] + g[1] * m[0][1]) / det, (-g[1] * m[0][0] + g[0] * m[1][0]) / det];
                    let trial = self.clamp([x[0] + dx[0], x[1] + dx[1]]);
                    let rt = self.residuals(trial)?;
                    let ct = cost(&rt);
                    if ct < c {
                        x = trial;
                        r = rt;
                        c = ct;
                        lambda = (lambda / 3.0).max(1e-12);
                        improved = true;
                        break;
                    }
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        Ok((x, max_abs(&r)))
    }
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Best fit of the two free scalars, whatever its residual.
pub fn fit_links(targets: &[CalibrationTarget], setup: &CalibrationSetup) -> Result<Calibration> {
    if targets.len() < 2 {
        return Err(Error::invalid("targets", "at least two targets are needed to fit two parameters"));
    }
    for t in targets {
        if !(t.p_res > 0.0 && t.p_res <= 1.0) {
            return Err(Error::invalid("targets", format!("p_res of `{}` must be in (0, 1], got {}", t.label, t.p_res)));
        }
    }
    if !(setup.gamma > 0.0 && setup.gamma.is_finite()) {
        return Err(Error::invalid("gamma", "must be finite and > 0"));
    }
    setup.rician.validate()?;
    let chains = targets.iter().map(|t| chain_for_label(&t.label, setup.address_bits)).collect::<Result<Vec<_>>>()?;
    let problem = Problem { setup, chains, targets, bounds: [SNR_BOUNDS, setup.fit.second_bounds(setup.eps_self)] };

    // coarse grid, then refine the most promising starts
    let (n0, n1) = (61, 41);
    let mut grid = Vec::with_capacity(n0 * n1);
    for i in 0..n0 {
        for j in 0..n1 {
            let x = [
                SNR_BOUNDS.0 + (SNR_BOUNDS.1 - SNR_BOUNDS.0) * i as f64 / (n0 - 1) as f64,
                problem.bounds[1].0 + (problem.bounds[1].1 - problem.bounds[1].0) * j as f64 / (n1 - 1) as f64,
            ];
            let r = problem.residuals(x)?;
            grid.push((r.iter().map(|v| v * v).sum::<f64>(), x));
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<([f64; 2], f64)> = None;
    for &(_, start) in grid.iter().take(5) {
        let (x, res) = problem.levenberg_marquardt(start)?;
        if best.is_none_or(|(_, b)| res < b) {
            best = Some((x, res));
        }
    }
    let (x, max_residual) = best.expect("grid is non-empty");
    let residuals = problem.residuals(x)?;
    Ok(Calibration {
        link: problem.link(x)?,
        fit: setup.fit,
        rician: setup.rician,
        eq3: setup.eq3,
        predictions: targets.iter().cloned().zip(residuals).map(|(t, r)| {
            let p = t.p_res + r;
            (t, p)
        }).collect(),
        max_residual,
    })
}

/// Fit and require every target to be matched within `setup.tolerance`.
pub fn calibrate_links(targets: &[CalibrationTarget], setup: &CalibrationSetup) -> Result<Calibration> {
    let cal = fit_links(targets, setup)?;
    cal.check(setup.tolerance)?;
    Ok(cal)
}

impl Calibration {
    /// Error unless every target is matched within `tolerance`.
    pub fn check(&self, tolerance: f64) -> Result<()> {
        if self.max_residual <= tolerance {
            return Ok(());
        }
        let l = self.link;
        Err(Error::Calibration {
            message: format!(
                "no ({}) pair in the search box reproduces the targets; best fit snr={:.6e} sigma_v2={:.6e} eps_cross={:.6e}",
                self.fit,
                l.snr(),
                l.sigma_v2,
                l.eps_cross
            ),
            best_residual: self.max_residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> Vec<CalibrationTarget> {
        DEFAULT_TARGETS.iter().map(|&(l, p)| CalibrationTarget::new(l, p)).collect()
    }

    #[test]
    fn label_chains() {
        assert_eq!(chain_for_label("21", 3).unwrap().signature(), [(1, 1), (2, 1)]);
        assert_eq!(chain_for_label("2221", 3).unwrap().signature(), [(1, 1), (2, 3)]);
        assert_eq!(chain_for_label("3121", 3).unwrap().signature(), [(1, 1), (1, 1), (2, 1)]);
        assert!(matches!(chain_for_label("25", 3), Err(Error::UnknownLabel(_))));
        assert!(matches!(chain_for_label("x", 3), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn fixed_cross_error_cannot_reach_targets() {
        // two-user steps see SSINR <= 1/eps_cross^2 = 25
        let err = calibrate_links(&defaults(), &CalibrationSetup::default()).unwrap_err();
        match err {
            Error::Calibration { best_residual, .. } => assert!(best_residual > 0.5),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn free_cross_error_fits_targets() {
        let setup = CalibrationSetup { fit: FitParameters::SnrAndCrossEstimation, ..Default::default() };
        let cal = calibrate_links(&defaults(), &setup).unwrap();
        assert!(cal.max_residual < 1e-4);
        for (t, p) in &cal.predictions {
            assert!((t.p_res - p).abs() < 1e-4);
            let again = predict_label(&t.label, &cal.link, &cal.rician, cal.eq3, 3).unwrap();
            assert!((again - p).abs() < 1e-12);
        }
    }

    #[test]
    fn target_parsing() {
        let t: CalibrationTarget = "221:0.9954".parse().unwrap();
        assert_eq!(t, CalibrationTarget::new("221", 0.9954));
        assert!("221".parse::<CalibrationTarget>().is_err());
        assert!(fit_links(&defaults()[..1], &CalibrationSetup::default()).is_err());
    }
}
