//! Flat `key = value` run configuration.
//!
//! Sources are applied in order (defaults, file, `--set`, dedicated flags) so
//! later values win. Every value is checked when it is applied and again as
//! a whole in [`RunConfig::validate`]; failures name the key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baseband::HardwareNoiseMode;
use crate::error::{Error, Result};
use crate::link_abstraction::{MgfForm, RicianLink};
use crate::phy_model::{Eq3Reading, LinkParams, LinkSet, UserId};
use crate::scenario::{AddressModel, AddressModelKind, CalibrationSetup, CalibrationTarget, FitParameters, PhyModel, DEFAULT_TARGETS};
use crate::sicqta::{Address, SicqtaEngine};

/// Quantity swept by the `sweep` command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    SigmaV2,
    /// `|h|`, with `gamma = |h|^2`.
    ChannelGain,
    NoisePower,
    EpsCross,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::SigmaV2 => "sigma_v2",
            SweepParam::ChannelGain => "channel_gain",
            SweepParam::NoisePower => "noise_power",
            SweepParam::EpsCross => "eps_cross",
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sigma_v2" => Ok(SweepParam::SigmaV2),
            "channel_gain" => Ok(SweepParam::ChannelGain),
            "noise_power" => Ok(SweepParam::NoisePower),
            "eps_cross" => Ok(SweepParam::EpsCross),
            _ => Err(format!("unknown sweep parameter `{s}` (sigma_v2, channel_gain, noise_power, eps_cross)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    pub log_scale: bool,
}

impl SweepSpec {
    /// Sweep points; a single step yields `from`.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.from];
        }
        let n = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                let t = i as f64 / n;
                if self.log_scale {
                    (self.from.ln() + (self.to.ln() - self.from.ln()) * t).exp()
                } else {
                    self.from + (self.to - self.from) * t
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub address_model: AddressModelKind,
    pub address_bits: u8,
    pub users: usize,
    pub gamma: f64,
    pub sigma_v2: f64,
    pub eps_self: f64,
    pub eps_cross: f64,
    pub noise_power: f64,
    /// `user.N.<field>` overrides.
    pub user_overrides: BTreeMap<UserId, BTreeMap<&'static str, f64>>,
    pub k_factor: f64,
    pub packet_len_bits: u32,
    pub sweep: SweepSpec,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub eq3_as_printed: bool,
    pub mgf_as_printed: bool,
    pub count_idle_slots: bool,
    pub perfect_phy: bool,
    pub hardware_noise_mode: HardwareNoiseMode,
    pub symbols: usize,
    pub mc_trials: u64,
    pub fit: FitParameters,
    pub targets: Vec<CalibrationTarget>,
    /// Addresses for the `trace` command.
    pub addresses: Vec<Address>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            address_model: AddressModelKind::IidBits,
            address_bits: 3,
            users: 2,
            gamma: 1.0,
            sigma_v2: 0.001,
            eps_self: 0.001,
            eps_cross: 0.2,
            noise_power: 0.1,
            user_overrides: BTreeMap::new(),
            k_factor: 4.0,
            packet_len_bits: 1024,
            sweep: SweepSpec { param: SweepParam::SigmaV2, from: 1e-4, to: 0.1, steps: 16, log_scale: true },
            seed: 1,
            out_dir: PathBuf::from("out"),
            eq3_as_printed: false,
            mgf_as_printed: false,
            count_idle_slots: true,
            perfect_phy: false,
            hardware_noise_mode: HardwareNoiseMode::PerSymbol,
            symbols: 100_000,
            mc_trials: 0,
            fit: FitParameters::SnrAndHardwareNoise,
            targets: DEFAULT_TARGETS.iter().map(|&(l, p)| CalibrationTarget::new(l, p)).collect(),
            addresses: Vec::new(),
        }
    }
}

const LINK_FIELDS: [&str; 5] = ["gamma", "sigma_v2", "eps_self", "eps_cross", "noise_power"];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("key `{key}`: cannot parse `{value}`"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("key `{key}`: expected true or false, got `{value}`")),
    }
}

fn non_negative(key: &str, value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse(key, value)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("key `{key}`: must be finite and >= 0, got {value}"))
    }
}

impl RunConfig {
    /// Apply one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key {
            "address_model" => self.address_model = value.parse().map_err(|e: Error| format!("key `{key}`: {e}"))?,
            "address_bits" => self.address_bits = parse(key, value)?,
            "users" => self.users = parse(key, value)?,
            "gamma" => self.gamma = non_negative(key, value)?,
            "channel_gain" => self.gamma = non_negative(key, value)?.powi(2),
            "sigma_v2" => self.sigma_v2 = non_negative(key, value)?,
            "eps_self" => self.eps_self = non_negative(key, value)?,
            "eps_cross" => self.eps_cross = non_negative(key, value)?,
            "noise_power" => self.noise_power = non_negative(key, value)?,
            "k_factor" => self.k_factor = non_negative(key, value)?,
            "packet_len_bits" => self.packet_len_bits = parse(key, value)?,
            "sweep_param" => self.sweep.param = value.parse().map_err(|e| format!("key `{key}`: {e}"))?,
            "sweep_from" => self.sweep.from = parse(key, value)?,
            "sweep_to" => self.sweep.to = parse(key, value)?,
            "sweep_steps" => self.sweep.steps = parse(key, value)?,
            "sweep_scale" => {
                self.sweep.log_scale = match value {
                    "log" => true,
                    "linear" => false,
                    _ => return Err(format!("key `{key}`: expected linear or log, got `{value}`")),
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "eq3_as_printed" => self.eq3_as_printed = parse_bool(key, value)?,
            "mgf_as_printed" => self.mgf_as_printed = parse_bool(key, value)?,
            "count_idle_slots" => self.count_idle_slots = parse_bool(key, value)?,
            "perfect_phy" => self.perfect_phy = parse_bool(key, value)?,
            "hardware_noise_mode" => {
                self.hardware_noise_mode = value.parse().map_err(|e: Error| format!("key `{key}`: {e}"))?
            }
            "symbols" => self.symbols = parse(key, value)?,
            "mc_trials" => self.mc_trials = parse(key, value)?,
            "fit" => self.fit = value.parse().map_err(|e: Error| format!("key `{key}`: {e}"))?,
            "targets" => {
                self.targets = value
                    .split(',')
                    .map(|t| t.parse::<CalibrationTarget>())
                    .collect::<Result<_>>()
                    .map_err(|e| format!("key `{key}`: {e}"))?
            }
            "addresses" => {
                self.addresses = value
                    .split(',')
                    .map(|a| a.trim().parse::<Address>())
                    .collect::<Result<_>>()
                    .map_err(|e| format!("key `{key}`: {e}"))?
            }
            _ => return self.set_user_override(key, value),
        }
        Ok(())
    }

    fn set_user_override(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let unknown = || format!("unknown key `{key}`");
        let rest = key.strip_prefix("user.").ok_or_else(unknown)?;
        let (user, field) = rest.split_once('.').ok_or_else(unknown)?;
        let user: UserId = user.parse().map_err(|_| unknown())?;
        let field = LINK_FIELDS.iter().find(|f| **f == field).ok_or_else(unknown)?;
        self.user_overrides.entry(user).or_default().insert(field, non_negative(key, value)?);
        Ok(())
    }

    /// Apply a config file; errors carry the file name and line number.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", index + 1)))?;
            self.set(key.trim(), value).map_err(|msg| Error::Config(format!("line {}: {msg}", index + 1)))?;
        }
        Ok(())
    }

    /// Check cross-field domains and build every derived object once.
    pub fn validate(&self) -> Result<()> {
        let wrap = |key: &str, e: Error| Error::Config(format!("key `{key}`: {e}"));
        AddressModel::new(self.address_model, self.address_bits, self.users).map_err(|e| wrap("users", e))?;
        SicqtaEngine::new(self.address_bits).map_err(|e| wrap("address_bits", e))?;
        self.rician().validate().map_err(|e| wrap("packet_len_bits", e))?;
        self.base_link().map_err(|e| wrap("link", e))?;
        for (user, fields) in &self.user_overrides {
            if *user >= self.users {
                return Err(Error::Config(format!("key `user.{user}`: only {} users are active", self.users)));
            }
            self.link_for(*user).map_err(|e| Error::Config(format!("key `user.{user}`: {e}")))?;
            debug_assert!(!fields.is_empty());
        }
        let s = &self.sweep;
        if s.steps == 0 {
            return Err(Error::Config("key `sweep_steps`: must be >= 1".into()));
        }
        if !(s.from.is_finite() && s.to.is_finite() && s.from >= 0.0 && s.to >= s.from) {
            return Err(Error::Config(format!("key `sweep_from`/`sweep_to`: need 0 <= from <= to, got {} and {}", s.from, s.to)));
        }
        if s.log_scale && s.from <= 0.0 {
            return Err(Error::Config("key `sweep_from`: must be > 0 on a log scale".into()));
        }
        if self.symbols < 2 {
            return Err(Error::Config("key `symbols`: must be >= 2".into()));
        }
        if self.targets.len() < 2 {
            return Err(Error::Config("key `targets`: at least two targets are needed".into()));
        }
        if let Some(t) = self.targets.iter().find(|t| !(t.p_res > 0.0 && t.p_res <= 1.0)) {
            return Err(Error::Config(format!("key `targets`: p_res of `{}` must be in (0, 1]", t.label)));
        }
        Ok(())
    }

    pub fn base_link(&self) -> Result<LinkParams> {
        LinkParams::new(self.gamma, self.sigma_v2, self.eps_self, self.eps_cross, self.noise_power)
    }

    fn link_for(&self, user: UserId) -> Result<LinkParams> {
        let mut link = self.base_link()?;
        if let Some(fields) = self.user_overrides.get(&user) {
            for (&field, &v) in fields {
                match field {
                    "gamma" => link.gamma = v,
                    "sigma_v2" => link.sigma_v2 = v,
                    "eps_self" => link.eps_self = v,
                    "eps_cross" => link.eps_cross = v,
                    _ => link.noise_power = v,
                }
            }
        }
        link.validate()?;
        Ok(link)
    }

    pub fn links(&self) -> Result<LinkSet> {
        let mut set = LinkSet::uniform(self.base_link()?);
        for &user in self.user_overrides.keys() {
            set = set.with_override(user, self.link_for(user)?);
        }
        Ok(set)
    }

    pub fn rician(&self) -> RicianLink {
        let mgf = if self.mgf_as_printed { MgfForm::AsPrinted } else { MgfForm::Standard };
        RicianLink { k_factor: self.k_factor, packet_len_bits: self.packet_len_bits, mgf }
    }

    pub fn eq3(&self) -> Eq3Reading {
        if self.eq3_as_printed { Eq3Reading::AsPrinted } else { Eq3Reading::Corrected }
    }

    /// `None` when the PHY is taken as perfect.
    pub fn phy(&self) -> Result<Option<PhyModel>> {
        if self.perfect_phy {
            return Ok(None);
        }
        Ok(Some(PhyModel::new(self.links()?, self.rician())?.with_eq3(self.eq3())))
    }

    pub fn model(&self, users: usize) -> Result<AddressModel> {
        AddressModel::new(self.address_model, self.address_bits, users)
    }

    pub fn engine(&self) -> Result<SicqtaEngine> {
        Ok(SicqtaEngine::new(self.address_bits)?.count_idle_slots(self.count_idle_slots))
    }

    pub fn calibration_setup(&self) -> CalibrationSetup {
        CalibrationSetup {
            gamma: self.gamma,
            eps_self: self.eps_self,
            eps_cross: self.eps_cross,
            // pinned value in the SNR / eps_cross fit; hardware noise is
            // then left to the fitted cross error
            sigma_v2: 0.0,
            rician: self.rician(),
            eq3: self.eq3(),
            address_bits: self.address_bits,
            fit: self.fit,
            ..CalibrationSetup::default()
        }
    }
}
