//! Query tree collision resolution with inter-slot SIC (SICQTA).
//!
//! The receiver queries address prefixes depth first, appending `0` after
//! every collision. After each slot it cancels every decoded packet from all
//! earlier slots; a slot whose residual is a single user yields that user.
//! The right sibling of a resolved subtree is never queried directly: its
//! content is the parent's content minus the left child's, so it is skipped
//! when already decoded, and otherwise the walk continues at its left child.
//!
//! Feedback is perfect ternary (idle / success / collision); decoding
//! failures are handled probabilistically by [`crate::scenario`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::phy_model::{CancellationContext, UserId, UserSet};

/// Device address of `len` bits, most significant bit first.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    value: u32,
    len: u8,
}

impl Address {
    pub const MAX_BITS: u8 = 30;

    pub fn new(value: u32, len: u8) -> Result<Self> {
        if len == 0 || len > Self::MAX_BITS {
            return Err(Error::invalid("address_bits", format!("must be in 1..={}, got {len}", Self::MAX_BITS)));
        }
        if value >> len != 0 {
            return Err(Error::invalid("address", format!("{value} does not fit in {len} bits")));
        }
        Ok(Address { value, len })
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn len(&self) -> usize {
        usize::from(self.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit `i`, counted from the left.
    pub fn bit(&self, i: usize) -> u8 {
        ((self.value >> (self.len() - 1 - i)) & 1) as u8
    }

    pub fn has_prefix(&self, query: &Query) -> bool {
        query.len <= self.len && self.value >> (self.len - query.len) == query.prefix
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        (0..self.len()).try_for_each(|i| write!(f, "{}", self.bit(i)))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

impl FromStr for Address {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut value = 0u32;
        for c in s.chars() {
            value = (value << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(Error::invalid("address", format!("`{s}` is not a bit string"))),
                };
            if s.len() > usize::from(Self::MAX_BITS) {
                return Err(Error::invalid("address", format!("`{s}` is longer than {} bits", Self::MAX_BITS)));
            }
        }
        Address::new(value, s.len() as u8)
    }
}

/// Address prefix broadcast by the central station. The root query is empty.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Query {
    prefix: u32,
    len: u8,
}

impl Query {
    pub fn root() -> Self {
        Query::default()
    }

    pub fn child(&self, bit: u8) -> Self {
        Query { prefix: (self.prefix << 1) | u32::from(bit & 1), len: self.len + 1 }
    }

    pub fn len(&self) -> usize {
        usize::from(self.len)
    }

    pub fn is_root(&self) -> bool {
        self.len == 0
    }

    pub fn is_empty(&self) -> bool {
        self.is_root()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            return f.write_str("*");
        }
        (0..self.len()).try_for_each(|i| write!(f, "{}", (self.prefix >> (self.len() - 1 - i)) & 1))
    }
}

impl fmt::Debug for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Query({self})")
    }
}

impl FromStr for Query {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "*" {
            return Ok(Query::root());
        }
        let a: Address = s.parse()?;
        Ok(Query { prefix: a.value, len: a.len })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Idle,
    Success,
    Collision,
}

impl Outcome {
    fn of(transmitters: UserSet) -> Self {
        match transmitters.len() {
            0 => Outcome::Idle,
            1 => Outcome::Success,
            _ => Outcome::Collision,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Idle => "idle",
            Outcome::Success => "success",
            Outcome::Collision => "collision",
        }
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idle" => Ok(Outcome::Idle),
            "success" => Ok(Outcome::Success),
            "collision" => Ok(Outcome::Collision),
            _ => Err(Error::invalid("outcome", format!("unknown outcome `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotRecord {
    pub query: Query,
    pub transmitters: UserSet,
    pub outcome: Outcome,
    /// Users recovered from this slot by cancelling already decoded packets.
    pub recovered_by_sic: UserSet,
}

fn users_field(set: UserSet) -> String {
    set.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(";")
}

fn parse_users(field: &str) -> Result<UserSet> {
    if field.is_empty() {
        return Ok(UserSet::empty());
    }
    field
        .split(';')
        .map(|u| {
            u.parse::<UserId>()
                .ok()
                .filter(|&u| u < UserSet::MAX_USERS)
                .ok_or_else(|| Error::invalid("transmitters", format!("bad user id `{u}`")))
        })
        .collect()
}

impl SlotRecord {
    /// `query,transmitters,outcome,sic_recovered`, user ids separated by `;`.
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{}",
            self.query,
            users_field(self.transmitters),
            self.outcome.as_str(),
            users_field(self.recovered_by_sic)
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        let [query, transmitters, outcome, recovered] = fields[..] else {
            return Err(Error::invalid("trace", format!("expected 4 fields in `{line}`")));
        };
        let record = SlotRecord {
            query: query.parse()?,
            transmitters: parse_users(transmitters)?,
            outcome: outcome.parse()?,
            recovered_by_sic: parse_users(recovered)?,
        };
        if record.outcome != Outcome::of(record.transmitters) {
            return Err(Error::invalid("trace", format!("outcome inconsistent with transmitters in `{line}`")));
        }
        Ok(record)
    }
}

pub const TRACE_HEADER: &str = "query,transmitters,outcome,sic_recovered";

/// Every slot of one tree walk, in query order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolutionTrace {
    slots: Vec<SlotRecord>,
    resolved: UserSet,
    decode_order: Vec<UserId>,
    count_idle_slots: bool,
}

impl ResolutionTrace {
    pub fn slots(&self) -> &[SlotRecord] {
        &self.slots
    }

    pub fn resolved(&self) -> UserSet {
        self.resolved
    }

    /// Users in the order the engine decoded them.
    pub fn decode_order(&self) -> &[UserId] {
        &self.decode_order
    }

    /// Issued queries; idle slots are left out only when idle accounting is off.
    pub fn slots_used(&self) -> usize {
        if self.count_idle_slots {
            self.slots.len()
        } else {
            self.slots.iter().filter(|s| s.outcome != Outcome::Idle).count()
        }
    }

    pub fn idle_slots(&self) -> usize {
        self.slots.iter().filter(|s| s.outcome == Outcome::Idle).count()
    }

    /// Occupancies of the non-idle slots in query order.
    pub fn occupancies(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.transmitters.len()).filter(|&n| n > 0).collect()
    }

    pub fn label(&self) -> String {
        label_of(&self.occupancies())
    }

    pub fn throughput(&self) -> f64 {
        throughput_of_trace(self)
    }

    pub fn decode_chain(&self) -> DecodeChain {
        decode_chain_of_trace(self)
    }

    /// Line-oriented export, header first.
    pub fn to_text(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for slot in &self.slots {
            out.push_str(&slot.to_line());
            out.push('\n');
        }
        out
    }
}

/// Occupancy sequence as a string; digits are separated by `.` once a slot
/// holds ten or more packets.
pub fn label_of(occupancies: &[usize]) -> String {
    let sep = if occupancies.iter().any(|&n| n >= 10) { "." } else { "" };
    occupancies.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(sep)
}

/// Decoded packets per slot used.
pub fn throughput_of_trace(trace: &ResolutionTrace) -> f64 {
    trace.resolved.len() as f64 / trace.slots_used() as f64
}

/// Cancel decoded users from every slot until no residual is a singleton.
/// Returns the users newly decoded, in order, with the slot they came from.
/// Later slots are examined first, so a user is credited to the most recent
/// slot that yields it.
pub fn sic_fixpoint(slots: &[SlotRecord], decoded: &mut UserSet) -> Vec<(UserId, usize)> {
    let mut found = Vec::new();
    loop {
        let before = found.len();
        for (index, slot) in slots.iter().enumerate().rev() {
            if let Some(user) = slot.transmitters.difference(*decoded).single() {
                decoded.insert(user);
                found.push((user, index));
            }
        }
        if found.len() == before {
            return found;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SicqtaEngine {
    address_bits: u8,
    count_idle_slots: bool,
}

impl SicqtaEngine {
    pub fn new(address_bits: u8) -> Result<Self> {
        if address_bits == 0 || address_bits > Address::MAX_BITS {
            return Err(Error::invalid(
                "address_bits",
                format!("must be in 1..={}, got {address_bits}", Address::MAX_BITS),
            ));
        }
        Ok(SicqtaEngine { address_bits, count_idle_slots: true })
    }

    pub fn count_idle_slots(self, count: bool) -> Self {
        SicqtaEngine { count_idle_slots: count, ..self }
    }

    pub fn address_bits(&self) -> u8 {
        self.address_bits
    }

    pub fn counts_idle_slots(&self) -> bool {
        self.count_idle_slots
    }

    /// Resolve `active`; user `i` is the owner of `active[i]`.
    pub fn run(&self, active: &[Address]) -> Result<ResolutionTrace> {
        if active.is_empty() {
            return Err(Error::EmptyActiveSet);
        }
        if active.len() > UserSet::MAX_USERS {
            return Err(Error::invalid("users", format!("at most {} active users", UserSet::MAX_USERS)));
        }
        for (i, a) in active.iter().enumerate() {
            if a.len() != usize::from(self.address_bits) {
                return Err(Error::AddressLength {
                    address: a.to_string(),
                    len: a.len(),
                    expected: usize::from(self.address_bits),
                });
            }
            if active[..i].contains(a) {
                return Err(Error::DuplicateAddress(a.to_string()));
            }
        }
        let mut walk = Walk { active, depth: usize::from(self.address_bits), slots: Vec::new(), decoded: UserSet::empty(), order: Vec::new() };
        walk.resolve(Query::root(), None);
        debug_assert_eq!(walk.decoded, UserSet::first_n(active.len()));
        Ok(ResolutionTrace {
            slots: walk.slots,
            resolved: walk.decoded,
            decode_order: walk.order,
            count_idle_slots: self.count_idle_slots,
        })
    }
}

/// Run SICQTA with idle slots counted.
pub fn run_tree(active: &[Address], address_bits: u8) -> Result<ResolutionTrace> {
    SicqtaEngine::new(address_bits)?.run(active)
}

struct Walk<'a> {
    active: &'a [Address],
    depth: usize,
    slots: Vec<SlotRecord>,
    decoded: UserSet,
    order: Vec<UserId>,
}

impl Walk<'_> {
    fn members(&self, query: &Query) -> UserSet {
        self.active.iter().enumerate().filter(|(_, a)| a.has_prefix(query)).map(|(i, _)| i).collect()
    }

    fn issue(&mut self, query: Query) -> UserSet {
        let transmitters = self.members(&query);
        self.slots.push(SlotRecord {
            query,
            transmitters,
            outcome: Outcome::of(transmitters),
            recovered_by_sic: UserSet::empty(),
        });
        for (user, index) in sic_fixpoint(&self.slots, &mut self.decoded) {
            let slot = &mut self.slots[index];
            if slot.transmitters.len() > 1 {
                slot.recovered_by_sic.insert(user);
            }
            self.order.push(user);
        }
        transmitters
    }

    /// Resolve the subtree at `query`. `known` carries content derived by
    /// subtraction, in which case no slot is spent on the query itself.
    fn resolve(&mut self, query: Query, known: Option<UserSet>) -> UserSet {
        let content = match known {
            Some(content) => content,
            None => self.issue(query),
        };
        if content.is_subset(self.decoded) || query.len() >= self.depth {
            return content;
        }
        let left = self.resolve(query.child(0), None);
        let right = content.difference(left);
        if !right.is_subset(self.decoded) {
            self.resolve(query.child(1), Some(right));
        }
        content
    }
}

/// One decoding step: `target` is decoded from the `slots` (all carrying the
/// same transmitter set) after cancelling everyone else in them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeStep {
    pub target: UserId,
    pub transmitters: UserSet,
    pub cancelled: UserSet,
    pub slots: Vec<usize>,
}

impl DecodeStep {
    /// Number of identical slots that can each deliver the target.
    pub fn repeats(&self) -> usize {
        self.slots.len()
    }

    pub fn context(&self) -> CancellationContext {
        CancellationContext::new(self.transmitters, self.cancelled, self.target)
            .expect("decode steps always cancel within their own slot")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DecodeChain {
    pub steps: Vec<DecodeStep>,
}

impl DecodeChain {
    /// `(|S|, k)` per step; fully determines P_res under homogeneous links.
    pub fn signature(&self) -> Vec<(usize, usize)> {
        self.steps.iter().map(|s| (s.transmitters.len(), s.repeats())).collect()
    }
}

/// Receiver-side decoding schedule of a completed trace.
///
/// Decoding proceeds in rounds as the receiver would process a recorded
/// frame: every slot whose residual is a single user delivers that user, then
/// the new packets are cancelled everywhere and the next round starts. A user
/// reachable from several slots is taken from the smallest transmitter set;
/// all slots with exactly that set count as repetitions.
pub fn decode_chain_of_trace(trace: &ResolutionTrace) -> DecodeChain {
    let slots = &trace.slots;
    let mut decoded = UserSet::empty();
    let mut steps = Vec::new();
    loop {
        // best (slot index) per user in this round
        let mut round: Vec<(UserId, usize)> = Vec::new();
        for (index, slot) in slots.iter().enumerate() {
            let Some(user) = slot.transmitters.difference(decoded).single() else { continue };
            match round.iter_mut().find(|(u, _)| *u == user) {
                Some(entry) => {
                    if slot.transmitters.len() < slots[entry.1].transmitters.len() {
                        entry.1 = index;
                    }
                }
                None => round.push((user, index)),
            }
        }
        if round.is_empty() {
            break;
        }
        round.sort_by_key(|&(_, index)| index);
        for &(user, index) in &round {
            let set = slots[index].transmitters;
            steps.push(DecodeStep {
                target: user,
                transmitters: set,
                cancelled: set,
                slots: slots.iter().enumerate().filter(|(_, s)| s.transmitters == set).map(|(i, _)| i).collect(),
            });
        }
        for &(user, _) in &round {
            decoded.insert(user);
        }
    }
    DecodeChain { steps }
}
