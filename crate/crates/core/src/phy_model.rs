//! Analytical SSINR model for imperfect inter-slot cancellation.
//!
//! A packet re-created from an interference-free replica and subtracted from
//! a collision slot leaves two residuals behind: the transmitter hardware
//! noise `v` (mean 1, variance `sigma_v2`) and the channel estimation error
//! `eps`. Each cancellation also injects the noise of the reference slot.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

pub type UserId = usize;

/// Set of user ids stored as a 64-bit mask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserSet(u64);

impl UserSet {
    pub const MAX_USERS: usize = 64;

    pub const fn empty() -> Self {
        UserSet(0)
    }

    pub fn singleton(user: UserId) -> Self {
        debug_assert!(user < Self::MAX_USERS);
        UserSet(1 << user)
    }

    /// `{0, 1, .., n-1}`
    pub fn first_n(n: usize) -> Self {
        debug_assert!(n <= Self::MAX_USERS);
        if n == Self::MAX_USERS {
            UserSet(u64::MAX)
        } else {
            UserSet((1u64 << n) - 1)
        }
    }

    pub const fn from_bits(bits: u64) -> Self {
        UserSet(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn insert(&mut self, user: UserId) {
        self.0 |= 1 << user;
    }

    pub fn remove(&mut self, user: UserId) {
        self.0 &= !(1 << user);
    }

    pub fn contains(self, user: UserId) -> bool {
        user < Self::MAX_USERS && self.0 & (1 << user) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        UserSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        UserSet(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        UserSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    /// The only member, if the set has exactly one.
    pub fn single(self) -> Option<UserId> {
        (self.len() == 1).then(|| self.0.trailing_zeros() as UserId)
    }

    pub fn iter(self) -> impl Iterator<Item = UserId> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let user = rest.trailing_zeros() as UserId;
                rest &= rest - 1;
                Some(user)
            }
        })
    }
}

impl FromIterator<UserId> for UserSet {
    fn from_iter<I: IntoIterator<Item = UserId>>(iter: I) -> Self {
        let mut set = UserSet::empty();
        for user in iter {
            set.insert(user);
        }
        set
    }
}

impl fmt::Debug for UserSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Per-user link parameters, all in linear units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkParams {
    /// Received signal power `|h|^2` at unit transmit power.
    pub gamma: f64,
    /// Variance of the multiplicative hardware-noise coefficient `v`.
    pub sigma_v2: f64,
    /// Channel estimation error when estimating from the packet's own clean slot.
    pub eps_self: f64,
    /// Channel estimation error when estimating inside a collision.
    pub eps_cross: f64,
    /// AWGN power.
    pub noise_power: f64,
}

impl LinkParams {
    pub fn new(gamma: f64, sigma_v2: f64, eps_self: f64, eps_cross: f64, noise_power: f64) -> Result<Self> {
        let link = LinkParams { gamma, sigma_v2, eps_self, eps_cross, noise_power };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", format!("must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.sigma_v2 >= 0.0 && self.sigma_v2.is_finite()) {
            return Err(Error::invalid("sigma_v2", format!("must be finite and >= 0, got {}", self.sigma_v2)));
        }
        if !(self.eps_self >= 0.0) {
            return Err(Error::invalid("eps_self", format!("must be >= 0, got {}", self.eps_self)));
        }
        if !(self.eps_self <= self.eps_cross && self.eps_cross < 1.0) {
            return Err(Error::invalid(
                "eps_cross",
                format!("need eps_self <= eps_cross < 1, got eps_self={} eps_cross={}", self.eps_self, self.eps_cross),
            ));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::invalid("noise_power", format!("must be finite and > 0, got {}", self.noise_power)));
        }
        Ok(())
    }

    /// Interference-free SNR `gamma / noise_power`.
    pub fn snr(&self) -> f64 {
        self.gamma / self.noise_power
    }

    fn eps(&self, self_cancellation: bool) -> f64 {
        if self_cancellation {
            self.eps_self
        } else {
            self.eps_cross
        }
    }
}

/// Residual power left by cancelling one packet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualPowers {
    pub hardware: f64,
    pub channel_estimation: f64,
}

impl ResidualPowers {
    pub fn total(&self) -> f64 {
        self.hardware + self.channel_estimation
    }
}

/// Closed-form residual powers of cancelling a packet with link `link`.
///
/// `hardware = gamma * sigma_v2` and `channel_estimation = gamma * eps^2 * (1 + sigma_v2)`,
/// where `eps` is the self or cross estimation error. The correlation between
/// the two residuals is ignored.
pub fn residual_powers(link: &LinkParams, self_cancellation: bool) -> ResidualPowers {
    let eps = link.eps(self_cancellation);
    ResidualPowers {
        hardware: link.gamma * link.sigma_v2,
        channel_estimation: link.gamma * eps * eps * (1.0 + link.sigma_v2),
    }
}

/// Which users share a slot, which of them are cancelled, and whose packet
/// is being decoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CancellationContext {
    transmitters: UserSet,
    cancelled: UserSet,
    target: UserId,
}

impl CancellationContext {
    pub fn new(transmitters: UserSet, cancelled: UserSet, target: UserId) -> Result<Self> {
        if !cancelled.is_subset(transmitters) {
            return Err(Error::InvalidContext(format!(
                "cancelled set {cancelled:?} is not a subset of transmitters {transmitters:?}"
            )));
        }
        if !transmitters.contains(target) {
            return Err(Error::InvalidContext(format!("target {target} did not transmit in {transmitters:?}")));
        }
        if !cancelled.contains(target) {
            return Err(Error::InvalidContext(format!("target {target} missing from cancelled set {cancelled:?}")));
        }
        Ok(CancellationContext { transmitters, cancelled, target })
    }

    /// Every transmitter cancelled, the usual decode step of a chain.
    pub fn full(transmitters: UserSet, target: UserId) -> Result<Self> {
        Self::new(transmitters, transmitters, target)
    }

    pub fn transmitters(&self) -> UserSet {
        self.transmitters
    }

    pub fn cancelled(&self) -> UserSet {
        self.cancelled
    }

    pub fn target(&self) -> UserId {
        self.target
    }
}

/// Link parameters per user: a shared default plus optional overrides.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LinkSet {
    default: Option<LinkParams>,
    overrides: BTreeMap<UserId, LinkParams>,
}

impl LinkSet {
    pub fn uniform(link: LinkParams) -> Self {
        LinkSet { default: Some(link), overrides: BTreeMap::new() }
    }

    pub fn from_map(links: BTreeMap<UserId, LinkParams>) -> Self {
        LinkSet { default: None, overrides: links }
    }

    pub fn with_override(mut self, user: UserId, link: LinkParams) -> Self {
        self.overrides.insert(user, link);
        self
    }

    pub fn get(&self, user: UserId) -> Option<&LinkParams> {
        self.overrides.get(&user).or(self.default.as_ref())
    }

    pub fn default_link(&self) -> Option<&LinkParams> {
        self.default.as_ref()
    }

    /// True when every user resolves to the same parameters.
    pub fn is_homogeneous(&self) -> bool {
        match self.default {
            Some(d) => self.overrides.values().all(|l| *l == d),
            None => self.overrides.values().all(|l| Some(l) == self.overrides.values().next()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.default.iter().chain(self.overrides.values()).try_for_each(LinkParams::validate)
    }

    /// Copy with the user ids remapped through `perm` (`new user u` gets the
    /// link of `perm[u]`). Users outside `perm` keep their entries.
    pub fn permuted(&self, perm: &[UserId]) -> LinkSet {
        let mut out = LinkSet { default: self.default, overrides: BTreeMap::new() };
        for (user, &from) in perm.iter().enumerate() {
            if let Some(link) = self.get(from) {
                out.overrides.insert(user, *link);
            }
        }
        out
    }
}

/// How the residual sum of the SSINR denominator is indexed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Eq3Reading {
    /// Residuals over the cancelled set, full power over the rest.
    #[default]
    Corrected,
    /// Residuals over every transmitter plus full power of the uncancelled
    /// ones, as typeset.
    AsPrinted,
}

/// SSINR of the target after cancelling `ctx.cancelled()`.
pub fn ssinr(ctx: &CancellationContext, links: &LinkSet) -> Result<f64> {
    ssinr_with(ctx, links, Eq3Reading::Corrected)
}

pub fn ssinr_with(ctx: &CancellationContext, links: &LinkSet, reading: Eq3Reading) -> Result<f64> {
    let link = |u: UserId| links.get(u).ok_or(Error::MissingLink(u));
    let target = link(ctx.target)?;

    let residual_users = match reading {
        Eq3Reading::Corrected => ctx.cancelled,
        Eq3Reading::AsPrinted => ctx.transmitters,
    };
    let mut denominator = 0.0;
    for k in residual_users.iter() {
        let lk = link(k)?;
        denominator += residual_powers(lk, k == ctx.target).total() + lk.noise_power;
    }
    for j in ctx.transmitters.difference(ctx.cancelled).iter() {
        denominator += link(j)?.gamma;
    }
    if denominator <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(target.gamma / denominator)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
