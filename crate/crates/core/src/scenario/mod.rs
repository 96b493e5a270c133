//! Scenario enumeration and throughput analysis.
//!
//! A configuration is one assignment of addresses to the `M` active users.
//! Running the tree on it yields an occupancy label, a slot count and a
//! decode chain. Configurations sharing `(label, slots_used)` are grouped
//! into a [`Scenario`] with summed occurrence probability.

mod calibration;
mod monte_carlo;
pub mod reference;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::link_abstraction::RicianLink;
use crate::phy_model::{ssinr_with, Eq3Reading, LinkSet, UserId};
use crate::sicqta::{Address, DecodeChain, SicqtaEngine};

pub use calibration::{
    calibrate_links, chain_for_label, fit_links, predict_label, Calibration, CalibrationSetup, CalibrationTarget,
    FitParameters, DEFAULT_TARGETS,
};
pub use monte_carlo::{monte_carlo_throughput, sample_addresses, Estimate, McThroughput, MC_CHUNK};

/// Slot duration used for the latency column.
pub const SLOT_MS: f64 = 4.0;

/// Largest number of configurations enumerated exactly.
pub const MAX_CONFIGURATIONS: usize = 2_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AddressModelKind {
    /// Every user draws each address bit uniformly; at every collision the
    /// split is conditioned so that both subtrees can still hold their users.
    #[default]
    IidBits,
    /// The `M` addresses are a uniformly random set of distinct values.
    DistinctUniform,
}

impl AddressModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AddressModelKind::IidBits => "iid-bits",
            AddressModelKind::DistinctUniform => "distinct-uniform",
        }
    }
}

impl fmt::Display for AddressModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AddressModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid-bits" => Ok(AddressModelKind::IidBits),
            "distinct-uniform" => Ok(AddressModelKind::DistinctUniform),
            _ => Err(Error::invalid("address_model", format!("expected iid-bits or distinct-uniform, got `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddressModel {
    pub kind: AddressModelKind,
    pub address_bits: u8,
    pub users: usize,
}

impl AddressModel {
    pub fn new(kind: AddressModelKind, address_bits: u8, users: usize) -> Result<Self> {
        let model = AddressModel { kind, address_bits, users };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::invalid("users", "must be >= 1"));
        }
        if self.users > crate::UserSet::MAX_USERS {
            return Err(Error::invalid("users", format!("at most {} users", crate::UserSet::MAX_USERS)));
        }
        if self.address_bits == 0 || self.address_bits > Address::MAX_BITS {
            return Err(Error::invalid(
                "address_bits",
                format!("must be in 1..={}, got {}", Address::MAX_BITS, self.address_bits),
            ));
        }
        // both models need room for distinct addresses
        if (self.users as u64) > 1u64 << self.address_bits {
            return Err(Error::TooManyUsers { users: self.users, bits: self.address_bits });
        }
        Ok(())
    }
}

/// One address assignment with its exact probability; user `i` owns `addresses[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub probability: f64,
    pub addresses: Vec<Address>,
}

/// Every configuration of `model` with non-zero probability.
pub fn configurations(model: &AddressModel) -> Result<Vec<Configuration>> {
    model.validate()?;
    match model.kind {
        AddressModelKind::IidBits => Ok(iid_bits_configurations(model)),
        AddressModelKind::DistinctUniform => distinct_configurations(model),
    }
}

struct Pending {
    users: Vec<UserId>,
    prefix: u32,
    depth: u8,
}

fn iid_bits_configurations(model: &AddressModel) -> Vec<Configuration> {
    let bits = model.address_bits;
    let mut out = Vec::new();
    let root = Pending { users: (0..model.users).collect(), prefix: 0, depth: 0 };
    let mut values = vec![0u32; model.users];
    expand(bits, 1.0, vec![root], &mut values, &mut out);
    out
}

/// Depth-first product over the pending collision groups.
fn expand(bits: u8, probability: f64, mut pending: Vec<Pending>, values: &mut [u32], out: &mut Vec<Configuration>) {
    let Some(group) = pending.pop() else {
        let addresses = values.iter().map(|&v| Address::new(v, bits).expect("value fits")).collect();
        out.push(Configuration { probability, addresses });
        return;
    };
    let rest = u32::from(bits - group.depth);
    if group.users.len() <= 1 || group.depth == bits {
        // a lone user is resolved here; its remaining bits do not matter
        for &u in &group.users {
            values[u] = group.prefix << rest;
        }
        expand(bits, probability, pending, values, out);
        return;
    }
    let g = group.users.len();
    let cap = 1usize << (rest - 1);
    let splits: Vec<u64> = (0..1u64 << g)
        .filter(|mask| {
            let left = mask.count_ones() as usize;
            left <= cap && g - left <= cap
        })
        .collect();
    let p = 1.0 / splits.len() as f64;
    for mask in splits {
        let (left, right): (Vec<UserId>, Vec<UserId>) =
            group.users.iter().enumerate().partition_map(|(i, &u)| {
                if mask >> i & 1 == 1 {
                    itertools::Either::Left(u)
                } else {
                    itertools::Either::Right(u)
                }
            });
        let mut next: Vec<Pending> = pending.iter().map(|p| Pending { users: p.users.clone(), ..*p }).collect();
        next.push(Pending { users: right, prefix: group.prefix << 1 | 1, depth: group.depth + 1 });
        next.push(Pending { users: left, prefix: group.prefix << 1, depth: group.depth + 1 });
        expand(bits, probability * p, next, values, out);
    }
}

fn distinct_configurations(model: &AddressModel) -> Result<Vec<Configuration>> {
    let space = 1u64 << model.address_bits;
    let count = binomial(space, model.users as u64);
    if count > MAX_CONFIGURATIONS as f64 {
        return Err(Error::invalid(
            "address_bits",
            format!("{count:.0} configurations exceed the enumeration limit {MAX_CONFIGURATIONS}; use Monte Carlo"),
        ));
    }
    let p = 1.0 / count;
    Ok((0..space as u32)
        .combinations(model.users)
        .map(|values| Configuration {
            probability: p,
            addresses: values.into_iter().map(|v| Address::new(v, model.address_bits).expect("value fits")).collect(),
        })
        .collect())
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability that `users` unconstrained iid addresses are not all distinct,
/// the event the tree cannot resolve and both address models exclude.
pub fn identical_address_probability(users: usize, address_bits: u8) -> f64 {
    let space = 2f64.powi(i32::from(address_bits));
    1.0 - (0..users).map(|k| (1.0 - k as f64 / space).max(0.0)).product::<f64>()
}

/// PHY abstraction used to turn decode chains into resolution probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PhyModel {
    pub links: LinkSet,
    pub rician: RicianLink,
    pub eq3: Eq3Reading,
}

impl PhyModel {
    pub fn new(links: LinkSet, rician: RicianLink) -> Result<Self> {
        links.validate()?;
        rician.validate()?;
        Ok(PhyModel { links, rician, eq3: Eq3Reading::Corrected })
    }

    pub fn with_eq3(self, eq3: Eq3Reading) -> Self {
        PhyModel { eq3, ..self }
    }
}

/// Memoised SSINR to decode-probability map for one PHY model.
pub(crate) struct DecodeCache<'a> {
    phy: &'a PhyModel,
    memo: HashMap<u64, f64>,
}

impl<'a> DecodeCache<'a> {
    pub(crate) fn new(phy: &'a PhyModel) -> Self {
        DecodeCache { phy, memo: HashMap::new() }
    }

    pub(crate) fn step_probabilities(&mut self, chain: &DecodeChain, links: &LinkSet) -> Result<Vec<f64>> {
        chain
            .steps
            .iter()
            .map(|step| {
                let s = ssinr_with(&step.context(), links, self.phy.eq3)?;
                self.decode(s)
            })
            .collect()
    }

    fn decode(&mut self, ssinr: f64) -> Result<f64> {
        if let Some(&p) = self.memo.get(&ssinr.to_bits()) {
            return Ok(p);
        }
        let p = self.phy.rician.decode_prob(ssinr)?;
        self.memo.insert(ssinr.to_bits(), p);
        Ok(p)
    }

    pub(crate) fn resolution(&mut self, chain: &DecodeChain, links: &LinkSet) -> Result<f64> {
        let probs = self.step_probabilities(chain, links)?;
        Ok(chain.steps.iter().zip(probs).map(|(step, pd)| group_factor(pd, step.repeats())).product())
    }
}

/// Probability that at least one of `k` identical slots delivers the packet.
pub fn group_factor(decode_prob: f64, k: usize) -> f64 {
    1.0 - (1.0 - decode_prob).powi(k as i32)
}

/// Probability that every step of `chain` succeeds under `phy`.
pub fn resolution_probability(chain: &DecodeChain, phy: &PhyModel) -> Result<f64> {
    DecodeCache::new(phy).resolution(chain, &phy.links)
}

/// Resolution probability averaged over which user holds which address, so
/// heterogeneous links are assigned independently of the address draw.
fn exchangeable_resolution(cache: &mut DecodeCache<'_>, chain: &DecodeChain, users: usize) -> Result<f64> {
    let links = &cache.phy.links;
    if links.is_homogeneous() {
        let links = links.clone();
        return cache.resolution(chain, &links);
    }
    if users > 6 {
        return Err(Error::invalid("users", "heterogeneous links are averaged exactly for at most 6 users"));
    }
    let links = links.clone();
    let mut sum = 0.0;
    let mut count = 0usize;
    for perm in (0..users).permutations(users) {
        sum += cache.resolution(chain, &links.permuted(&perm))?;
        count += 1;
    }
    Ok(sum / count as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// Occupancy sequence of the non-idle slots.
    pub label: String,
    pub occupancies: Vec<usize>,
    pub slots_used: usize,
    pub p_occ: f64,
    /// Packets per slot, `M / slots_used`.
    pub rho: f64,
    /// Occurrence-weighted resolution probability, when a PHY was given.
    pub p_res: Option<f64>,
    /// Decode chain of the most probable configuration in the group.
    pub chain: DecodeChain,
    pub configurations: usize,
}

impl Scenario {
    /// `p_occ * rho * p_res`, with `p_res = 1` when unset.
    pub fn contribution(&self) -> f64 {
        self.p_occ * self.rho * self.p_res.unwrap_or(1.0)
    }

    pub fn latency_ms(&self) -> f64 {
        self.slots_used as f64 * SLOT_MS
    }
}

/// All scenarios of `model`, `p_res` unset, most probable first.
pub fn enumerate_scenarios(model: &AddressModel, engine: &SicqtaEngine) -> Result<Vec<Scenario>> {
    evaluate_scenarios(model, engine, None)
}

/// Scenarios with `p_res` filled in when `phy` is given.
pub fn evaluate_scenarios(model: &AddressModel, engine: &SicqtaEngine, phy: Option<&PhyModel>) -> Result<Vec<Scenario>> {
    check_engine(model, engine)?;
    let mut cache = phy.map(DecodeCache::new);
    let mut groups: BTreeMap<(String, usize), (Scenario, f64, f64)> = BTreeMap::new();
    for config in configurations(model)? {
        let trace = engine.run(&config.addresses)?;
        let chain = trace.decode_chain();
        let p_res = match cache.as_mut() {
            Some(cache) => exchangeable_resolution(cache, &chain, model.users)?,
            None => 1.0,
        };
        let key = (trace.label(), trace.slots_used());
        let entry = groups.entry(key).or_insert_with(|| {
            let scenario = Scenario {
                label: trace.label(),
                occupancies: trace.occupancies(),
                slots_used: trace.slots_used(),
                p_occ: 0.0,
                rho: model.users as f64 / trace.slots_used() as f64,
                p_res: None,
                chain: chain.clone(),
                configurations: 0,
            };
            (scenario, f64::NEG_INFINITY, 0.0)
        });
        let (scenario, best, weighted) = entry;
        scenario.p_occ += config.probability;
        scenario.configurations += 1;
        *weighted += config.probability * p_res;
        if config.probability > *best {
            *best = config.probability;
            scenario.chain = chain;
        }
    }
    let mut scenarios: Vec<Scenario> = groups
        .into_values()
        .map(|(mut s, _, weighted)| {
            if phy.is_some() {
                s.p_res = Some((weighted / s.p_occ).clamp(0.0, 1.0));
            }
            s
        })
        .collect();
    scenarios.sort_by(|a, b| {
        b.p_occ
            .total_cmp(&a.p_occ)
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| a.slots_used.cmp(&b.slots_used))
    });
    Ok(scenarios)
}

fn check_engine(model: &AddressModel, engine: &SicqtaEngine) -> Result<()> {
    if engine.address_bits() != model.address_bits {
        return Err(Error::invalid(
            "address_bits",
            format!("engine uses {} bits, model {}", engine.address_bits(), model.address_bits),
        ));
    }
    Ok(())
}

/// `sum p_occ * rho`: throughput with every decode succeeding.
pub fn mac_throughput(model: &AddressModel, engine: &SicqtaEngine) -> Result<f64> {
    check_engine(model, engine)?;
    let mut total = 0.0;
    for config in configurations(model)? {
        let trace = engine.run(&config.addresses)?;
        total += config.probability * model.users as f64 / trace.slots_used() as f64;
    }
    Ok(total)
}

/// `sum p_occ * p_res * rho`.
pub fn total_throughput(model: &AddressModel, engine: &SicqtaEngine, phy: &PhyModel) -> Result<f64> {
    Ok(evaluate_scenarios(model, engine, Some(phy))?.iter().map(Scenario::contribution).sum())
}

/// `G e^{-G}` for offered load `G` packets per slot.
pub fn slotted_aloha_throughput(load: f64) -> Result<f64> {
    if !(load >= 0.0) || load.is_infinite() {
        return Err(Error::invalid("load", format!("must be finite and >= 0, got {load}")));
    }
    Ok(load * (-load).exp())
}

/// Grid maximiser of [`slotted_aloha_throughput`] over `[0, max_load]`.
pub fn slotted_aloha_peak(max_load: f64, points: usize) -> Result<(f64, f64)> {
    let points = points.max(2);
    let mut best = (0.0, 0.0);
    for i in 0..points {
        let g = max_load * i as f64 / (points - 1) as f64;
        let s = slotted_aloha_throughput(g)?;
        if s > best.1 {
            best = (g, s);
        }
    }
    Ok(best)
}

/// One row of the MAC-throughput sensitivity table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensitivityRow {
    pub kind: AddressModelKind,
    pub address_bits: u8,
    pub count_idle_slots: bool,
    pub users: usize,
    pub mac_throughput: f64,
}

/// MAC throughput over both address models, both idle accountings and the
/// given depths and user counts.
pub fn sensitivity_table(users: &[usize], depths: &[u8]) -> Result<Vec<SensitivityRow>> {
    let mut rows = Vec::new();
    for kind in [AddressModelKind::IidBits, AddressModelKind::DistinctUniform] {
        for &bits in depths {
            for count_idle_slots in [true, false] {
                let engine = SicqtaEngine::new(bits)?.count_idle_slots(count_idle_slots);
                for &m in users {
                    let model = AddressModel::new(kind, bits, m)?;
                    rows.push(SensitivityRow {
                        kind,
                        address_bits: bits,
                        count_idle_slots,
                        users: m,
                        mac_throughput: mac_throughput(&model, &engine)?,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy_model::LinkParams;

    fn iid(bits: u8, users: usize) -> (AddressModel, SicqtaEngine) {
        (AddressModel::new(AddressModelKind::IidBits, bits, users).unwrap(), SicqtaEngine::new(bits).unwrap())
    }

    fn find<'a>(scenarios: &'a [Scenario], label: &str) -> &'a Scenario {
        scenarios.iter().find(|s| s.label == label).unwrap()
    }

    #[test]
    fn probabilities_close() {
        for kind in [AddressModelKind::IidBits, AddressModelKind::DistinctUniform] {
            for bits in 1..=5u8 {
                for m in 1..=4usize.min(1 << bits) {
                    let model = AddressModel::new(kind, bits, m).unwrap();
                    let total: f64 = configurations(&model).unwrap().iter().map(|c| c.probability).sum();
                    assert!((total - 1.0).abs() < 1e-12, "{kind} u={bits} M={m}: {total}");
                }
            }
        }
    }

    #[test]
    fn two_users_depth_three() {
        let (model, engine) = iid(3, 2);
        let s = enumerate_scenarios(&model, &engine).unwrap();
        let labels: Vec<&str> = s.iter().map(|s| s.label.as_str()).unique().collect();
        assert_eq!(labels, ["21", "221", "2221"]);
        // best case splits at the root, worst goes left-left
        assert!((find(&s, "21").p_occ - 0.5).abs() < 1e-15 && find(&s, "21").slots_used == 2);
        assert_eq!(find(&s, "21").rho, 1.0);
        assert!((find(&s, "2221").p_occ - 1.0 / 16.0).abs() < 1e-15);
        // 21 also arises from splits one level down: right-right gives an idle slot
        let total: f64 = s.iter().filter(|s| s.label == "21").map(|s| s.p_occ).sum();
        assert!((total - 11.0 / 16.0).abs() < 1e-15);
        assert!((mac_throughput(&model, &engine).unwrap() - 19.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_mac_throughputs() {
        let cases = [
            (AddressModelKind::IidBits, 3, 3, 0.84375),
            (AddressModelKind::IidBits, 3, 4, 0.90625),
            (AddressModelKind::DistinctUniform, 3, 2, 5.0 / 6.0),
        ];
        for (kind, bits, m, expected) in cases {
            let model = AddressModel::new(kind, bits, m).unwrap();
            let engine = SicqtaEngine::new(bits).unwrap();
            let v = mac_throughput(&model, &engine).unwrap();
            assert!((v - expected).abs() < 1e-12, "{kind} M={m}: {v}");
        }
        let model = AddressModel::new(AddressModelKind::DistinctUniform, 4, 3).unwrap();
        let v = mac_throughput(&model, &SicqtaEngine::new(4).unwrap()).unwrap();
        assert!((v - 0.8343).abs() < 5e-5, "{v}");
    }

    #[test]
    fn single_user_is_one_scenario() {
        for bits in 1..=5 {
            let (model, engine) = iid(bits, 1);
            let s = enumerate_scenarios(&model, &engine).unwrap();
            assert_eq!(s.len(), 1);
            assert_eq!(s[0].label, "1");
            assert_eq!(s[0].rho, 1.0);
            assert!((s[0].p_occ - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn fig2_configuration_is_enumerated() {
        let (model, engine) = iid(3, 4);
        let s = enumerate_scenarios(&model, &engine).unwrap();
        assert!(s.iter().any(|s| s.label == "422121" && s.slots_used == 6));
        assert!(s.windows(2).all(|w| w[0].p_occ >= w[1].p_occ));
    }

    #[test]
    fn rejects_overfull_models() {
        assert!(matches!(
            AddressModel::new(AddressModelKind::DistinctUniform, 2, 5),
            Err(Error::TooManyUsers { .. })
        ));
        assert!(AddressModel::new(AddressModelKind::IidBits, 3, 0).is_err());
        let (model, _) = iid(3, 2);
        assert!(mac_throughput(&model, &SicqtaEngine::new(4).unwrap()).is_err());
    }

    #[test]
    fn perfect_links_keep_mac_throughput() {
        let link = LinkParams::new(1.0, 0.0, 0.0, 0.0, 1e-12).unwrap();
        let phy = PhyModel::new(LinkSet::uniform(link), RicianLink::default()).unwrap();
        for m in 2..=4 {
            let (model, engine) = iid(3, m);
            let mac = mac_throughput(&model, &engine).unwrap();
            let total = total_throughput(&model, &engine, &phy).unwrap();
            assert!((mac - total).abs() < 1e-9, "{mac} {total}");
        }
    }

    #[test]
    fn imperfect_links_lose_throughput() {
        let link = LinkParams::new(1.0, 0.001, 0.001, 0.03, 1e-5).unwrap();
        let phy = PhyModel::new(LinkSet::uniform(link), RicianLink::default()).unwrap();
        let (model, engine) = iid(3, 3);
        let mac = mac_throughput(&model, &engine).unwrap();
        let total = total_throughput(&model, &engine, &phy).unwrap();
        assert!(total < mac && total > 0.0);
        for s in evaluate_scenarios(&model, &engine, Some(&phy)).unwrap() {
            let p = s.p_res.unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn heterogeneous_links_average_over_owners() {
        let strong = LinkParams::new(1.0, 0.0, 0.001, 0.03, 1e-5).unwrap();
        let weak = LinkParams { gamma: 0.3, ..strong };
        let links = LinkSet::uniform(strong).with_override(1, weak);
        let phy = PhyModel::new(links, RicianLink::default()).unwrap();
        // distinct-uniform orders users by address, so without averaging
        // user 1 would always hold the larger address
        let model = AddressModel::new(AddressModelKind::DistinctUniform, 3, 2).unwrap();
        let engine = SicqtaEngine::new(3).unwrap();
        let swapped = PhyModel {
            links: LinkSet::uniform(strong).with_override(0, weak),
            ..phy.clone()
        };
        let a = total_throughput(&model, &engine, &phy).unwrap();
        let b = total_throughput(&model, &engine, &swapped).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn group_factor_grows_with_repeats() {
        for pd in [0.5, 0.9, 0.99] {
            for k in 1..=5 {
                assert!(group_factor(pd, k + 1) > group_factor(pd, k));
                assert_eq!(group_factor(pd, k), 1.0 - (1.0 - pd).powi(k as i32));
            }
        }
        assert_eq!(group_factor(1.0, 3), 1.0);
        assert_eq!(group_factor(0.0, 3), 0.0);
    }

    #[test]
    fn aloha_baseline() {
        assert_eq!(slotted_aloha_throughput(0.0).unwrap(), 0.0);
        assert!((slotted_aloha_throughput(1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        let (g, s) = slotted_aloha_peak(5.0, 5001).unwrap();
        assert!((g - 1.0).abs() < 1e-3 && (s - 0.36788).abs() < 1e-5);
        assert!(slotted_aloha_throughput(-0.1).is_err());
    }

    #[test]
    fn identical_address_event() {
        assert!((identical_address_probability(2, 3) - 0.125).abs() < 1e-15);
        assert_eq!(identical_address_probability(1, 3), 0.0);
        assert_eq!(identical_address_probability(3, 1), 1.0);
    }

    #[test]
    fn model_kind_round_trips() {
        for kind in [AddressModelKind::IidBits, AddressModelKind::DistinctUniform] {
            assert_eq!(kind.to_string().parse::<AddressModelKind>().unwrap(), kind);
        }
        assert!("uniform".parse::<AddressModelKind>().is_err());
    }
}
