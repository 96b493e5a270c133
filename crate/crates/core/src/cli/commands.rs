use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{RunConfig, SweepParam};
use crate::baseband::{validation_rows, SlotOptions, ValidationRow};
use crate::error::{Error, Result};
use crate::phy_model::{LinkParams, LinkSet};
use crate::scenario::reference::{RESOLUTION_TABLE, THROUGHPUT_TABLE};
use crate::scenario::{
    evaluate_scenarios, fit_links, mac_throughput, monte_carlo_throughput, predict_label, sensitivity_table,
    slotted_aloha_throughput, total_throughput, Calibration, PhyModel,
};

/// Noise power standing in for "no noise" in the ideal preset.
pub const IDEAL_NOISE_POWER: f64 = 1e-12;

/// Tolerance used to flag sensitivity rows that reproduce a reference value.
pub const MAC_MATCH_TOLERANCE: f64 = 0.005;

/// Round to 6 significant digits and print the shortest representation
/// that parses back to the rounded value.
pub fn fmt6(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn writer(dir: &Path, name: &str) -> Result<(csv::Writer<fs::File>, PathBuf)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    Ok((csv::Writer::from_path(&path)?, path))
}

pub fn enumerate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let model = cfg.model(cfg.users)?;
    let phy = cfg.phy()?;
    let scenarios = evaluate_scenarios(&model, &cfg.engine()?, phy.as_ref())?;
    let (mut w, path) = writer(&cfg.out_dir, "scenarios.csv")?;
    w.write_record(["label", "slots_used", "p_occ", "rho", "p_res", "contribution", "cumulative", "latency_ms"])?;
    let mut cumulative = 0.0;
    for s in &scenarios {
        cumulative += s.contribution();
        w.write_record([
            s.label.clone(),
            s.slots_used.to_string(),
            fmt6(s.p_occ),
            fmt6(s.rho),
            fmt6(s.p_res.unwrap_or(1.0)),
            fmt6(s.contribution()),
            fmt6(cumulative),
            fmt6(s.latency_ms()),
        ])?;
    }
    w.flush()?;
    Ok(vec![path])
}

pub fn throughput(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let engine = cfg.engine()?;
    let phy = cfg.phy()?;
    let (mut w, path) = writer(&cfg.out_dir, "throughput.csv")?;
    let mut header = vec!["M", "u", "mac_tpt", "total_tpt", "aloha_baseline"];
    if cfg.mc_trials > 0 {
        header.extend(["mc_mac_tpt", "mc_mac_se", "mc_total_tpt", "mc_total_se"]);
    }
    w.write_record(&header)?;
    let aloha = slotted_aloha_throughput(1.0)?;
    for m in 1..=cfg.users {
        let model = cfg.model(m)?;
        let mac = mac_throughput(&model, &engine)?;
        let total = match &phy {
            Some(phy) => total_throughput(&model, &engine, phy)?,
            None => mac,
        };
        let mut row = vec![m.to_string(), cfg.address_bits.to_string(), fmt6(mac), fmt6(total), fmt6(aloha)];
        if cfg.mc_trials > 0 {
            let seed = cfg.seed.wrapping_add(m as u64);
            let mc = monte_carlo_throughput(&model, &engine, phy.as_ref(), cfg.mc_trials, seed)?;
            row.extend([fmt6(mc.mac.mean), fmt6(mc.mac.std_error), fmt6(mc.total.mean), fmt6(mc.total.std_error)]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(vec![path])
}

fn write_calibration(cfg: &RunConfig, cal: &Calibration) -> Result<PathBuf> {
    let (mut w, path) = writer(&cfg.out_dir, "calibration.csv")?;
    let l = cal.link;
    let status = if cal.max_residual <= cfg.calibration_setup().tolerance { "ok" } else { "failed" };
    w.write_record(["quantity", "value"])?;
    let rows: Vec<(String, String)> = vec![
        ("fit".into(), cal.fit.to_string()),
        ("status".into(), status.into()),
        ("gamma".into(), fmt6(l.gamma)),
        ("noise_power".into(), fmt6(l.noise_power)),
        ("snr".into(), fmt6(l.snr())),
        ("snr_db".into(), fmt6(10.0 * l.snr().log10())),
        ("sigma_v2".into(), fmt6(l.sigma_v2)),
        ("eps_self".into(), fmt6(l.eps_self)),
        ("eps_cross".into(), fmt6(l.eps_cross)),
        ("max_residual".into(), fmt6(cal.max_residual)),
    ];
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    for (t, p) in &cal.predictions {
        w.write_record([format!("target.{}", t.label), fmt6(t.p_res)])?;
        w.write_record([format!("fitted.{}", t.label), fmt6(*p)])?;
    }
    w.flush()?;
    Ok(path)
}

/// Fit, write `calibration.csv` whatever the outcome, then fail when the
/// residual exceeds the tolerance.
pub fn calibrate(cfg: &RunConfig) -> Result<(Calibration, Vec<PathBuf>)> {
    let setup = cfg.calibration_setup();
    let cal = fit_links(&cfg.targets, &setup)?;
    let path = write_calibration(cfg, &cal)?;
    cal.check(setup.tolerance)?;
    Ok((cal, vec![path]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// No estimation error and negligible noise.
    Ideal,
    /// `eps = 0.2, n = 0.1, sigma_v2 = 0.001`.
    Measured,
}

impl Preset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Ideal => "ideal",
            Preset::Measured => "measured",
        }
    }

    pub fn link(&self, gamma: f64, sigma_v2: f64) -> LinkParams {
        match self {
            Preset::Ideal => LinkParams { gamma, sigma_v2, eps_self: 0.0, eps_cross: 0.0, noise_power: IDEAL_NOISE_POWER },
            Preset::Measured => LinkParams { gamma, sigma_v2: 0.001, eps_self: 0.001, eps_cross: 0.2, noise_power: 0.1 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub preset: Preset,
    pub users: usize,
    pub mac_tpt: f64,
    pub total_tpt: f64,
}

fn swept_link(preset: Preset, param: SweepParam, value: f64, cfg: &RunConfig) -> Result<LinkParams> {
    let mut link = preset.link(cfg.gamma, cfg.sigma_v2);
    match param {
        SweepParam::SigmaV2 => link.sigma_v2 = value,
        SweepParam::ChannelGain => link.gamma = value * value,
        SweepParam::NoisePower => link.noise_power = value,
        SweepParam::EpsCross => {
            link.eps_cross = value;
            link.eps_self = link.eps_self.min(value);
        }
    }
    link.validate().map_err(|e| Error::Config(format!("key `sweep_from`: {} = {value}: {e}", param.as_str())))?;
    Ok(link)
}

/// Total throughput for M = 2, 3, 4 at every sweep point under both presets.
pub fn sweep_rows(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let engine = cfg.engine()?;
    let spec = cfg.sweep;
    let points: Vec<(f64, Preset)> =
        spec.values().into_iter().flat_map(|v| [(v, Preset::Ideal), (v, Preset::Measured)]).collect();
    let macs: Vec<(usize, f64)> = [2, 3, 4]
        .into_iter()
        .map(|m| Ok((m, mac_throughput(&cfg.model(m)?, &engine)?)))
        .collect::<Result<_>>()?;
    let per_point: Vec<Vec<SweepRow>> = points
        .into_par_iter()
        .map(|(value, preset)| {
            let link = swept_link(preset, spec.param, value, cfg)?;
            let phy = PhyModel::new(LinkSet::uniform(link), cfg.rician())?.with_eq3(cfg.eq3());
            macs.iter()
                .map(|&(m, mac)| {
                    let total = total_throughput(&cfg.model(m)?, &engine, &phy)?;
                    Ok(SweepRow { param: spec.param, value, preset, users: m, mac_tpt: mac, total_tpt: total })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

pub fn sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let rows = sweep_rows(cfg)?;
    let (mut w, path) = writer(&cfg.out_dir, "sweep.csv")?;
    w.write_record(["param", "value", "preset", "M", "mac_tpt", "total_tpt"])?;
    for r in rows {
        w.write_record([
            r.param.as_str().to_string(),
            fmt6(r.value),
            r.preset.as_str().to_string(),
            r.users.to_string(),
            fmt6(r.mac_tpt),
            fmt6(r.total_tpt),
        ])?;
    }
    w.flush()?;
    Ok(vec![path])
}

pub fn baseband_rows(cfg: &RunConfig) -> Result<Vec<ValidationRow>> {
    let opts = SlotOptions { symbols: cfg.symbols, hardware_noise: cfg.hardware_noise_mode, ..Default::default() };
    validation_rows(&cfg.base_link()?, 3, &opts, cfg.seed)
}

pub fn validate_baseband(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let rows = baseband_rows(cfg)?;
    let (mut w, path) = writer(&cfg.out_dir, "fig1.csv")?;
    w.write_record([
        "cancelled_others",
        "analytical_db",
        "empirical_db",
        "ci_half_width_db",
        "analytical_linear",
        "empirical_linear",
        "ci_low_linear",
        "ci_high_linear",
    ])?;
    for r in rows {
        w.write_record([
            r.cancelled_others.to_string(),
            fmt6(r.analytical_db()),
            fmt6(r.empirical.db()),
            fmt6(r.empirical.ci_half_width_db()),
            fmt6(r.analytical),
            fmt6(r.empirical.sinr),
            fmt6(r.empirical.ci_low),
            fmt6(r.empirical.ci_high),
        ])?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// Sensitivity table first, then calibration; table 1 and 2 only when the
/// calibration succeeds or the PHY is perfect.
pub fn report_tables(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let rows = sensitivity_table(&[2, 3, 4], &[3, 4, 5])?;
    let (mut w, path) = writer(&cfg.out_dir, "sensitivity.csv")?;
    w.write_record(["address_model", "u", "count_idle_slots", "M", "mac_tpt", "reference", "matches"])?;
    for r in &rows {
        let reference = THROUGHPUT_TABLE.iter().find(|t| t.users == r.users).map(|t| t.mac).unwrap_or(f64::NAN);
        w.write_record([
            r.kind.to_string(),
            r.address_bits.to_string(),
            r.count_idle_slots.to_string(),
            r.users.to_string(),
            fmt6(r.mac_throughput),
            fmt6(reference),
            ((r.mac_throughput - reference).abs() <= MAC_MATCH_TOLERANCE).to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);

    let phy = if cfg.perfect_phy {
        None
    } else {
        let (cal, paths) = calibrate(cfg)?;
        written.extend(paths);
        Some(cal)
    };

    let engine = cfg.engine()?;
    let (mut w, path) = writer(&cfg.out_dir, "table1.csv")?;
    w.write_record([
        "M",
        "mac_reference",
        "mac_reproduced",
        "mac_abs_dev",
        "model_reference",
        "model_reproduced",
        "model_abs_dev",
        "measured_reference",
    ])?;
    for t in &THROUGHPUT_TABLE {
        let model = cfg.model(t.users)?;
        let mac = mac_throughput(&model, &engine)?;
        let total = match &phy {
            Some(cal) => total_throughput(&model, &engine, &cal.phy())?,
            None => mac,
        };
        w.write_record([
            t.users.to_string(),
            fmt6(t.mac),
            fmt6(mac),
            fmt6((mac - t.mac).abs()),
            fmt6(t.model),
            fmt6(total),
            fmt6((total - t.model).abs()),
            fmt6(t.measured),
        ])?;
    }
    w.flush()?;
    written.push(path);

    let (mut w, path) = writer(&cfg.out_dir, "table2.csv")?;
    w.write_record(["label", "chain", "model_reference", "model_reproduced", "abs_dev", "measured_reference"])?;
    for r in &RESOLUTION_TABLE {
        let chain = crate::scenario::chain_for_label(r.label, cfg.address_bits)?;
        let signature = chain.signature().iter().map(|(n, k)| format!("{n}x{k}")).collect::<Vec<_>>().join(";");
        let p = match &phy {
            Some(cal) => predict_label(r.label, &cal.link, &cal.rician, cal.eq3, cfg.address_bits)?,
            None => 1.0,
        };
        w.write_record([
            r.label.to_string(),
            signature,
            fmt6(r.model),
            fmt6(p),
            fmt6((p - r.model).abs()),
            fmt6(r.measured),
        ])?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

pub fn trace(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    if cfg.addresses.is_empty() {
        return Err(Error::Config("key `addresses`: required for trace".into()));
    }
    let t = cfg.engine()?.run(&cfg.addresses).map_err(|e| Error::Config(format!("key `addresses`: {e}")))?;
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("trace.csv");
    fs::write(&path, t.to_text())?;
    Ok(vec![path])
}
