//! C ABI over the `iessic` library.
//!
//! Every function returns an [`IessicStatus`] and writes results through out
//! pointers. Objects with internal state are handed out as opaque pointers
//! and released with the matching `_free` function. The message of the last
//! failure on the calling thread is available from
//! [`iessic_last_error_message`].

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use iessic::link_abstraction::{decode_prob, rician_ser, RicianLink};
use iessic::phy_model::{ssinr, CancellationContext};
use iessic::scenario::{self, AddressModel, AddressModelKind, PhyModel};
use iessic::sicqta::{Address, ResolutionTrace, SicqtaEngine};
use iessic::{Error, LinkParams, LinkSet, UserSet};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IessicStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    CalibrationFailed = 4,
    Internal = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IessicAddressModel {
    IidBits = 0,
    DistinctUniform = 1,
}

/// Per-user link parameters, all linear.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IessicLinkParams {
    pub gamma: f64,
    pub sigma_v2: f64,
    pub eps_self: f64,
    pub eps_cross: f64,
    pub noise_power: f64,
}

impl From<IessicLinkParams> for LinkParams {
    fn from(l: IessicLinkParams) -> Self {
        LinkParams {
            gamma: l.gamma,
            sigma_v2: l.sigma_v2,
            eps_self: l.eps_self,
            eps_cross: l.eps_cross,
            noise_power: l.noise_power,
        }
    }
}

/// Link set and Rician link abstraction.
pub struct IessicPhy(PhyModel);

/// Slot trace of one tree resolution.
pub struct IessicTrace(ResolutionTrace);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> IessicStatus {
    match err {
        Error::Quadrature { .. } | Error::ZeroDenominator => IessicStatus::Numerical,
        Error::Calibration { .. } => IessicStatus::CalibrationFailed,
        Error::Io(_) | Error::Csv(_) => IessicStatus::Internal,
        _ => IessicStatus::InvalidArgument,
    }
}

/// Run `f`, turning errors and panics into status codes.
fn guard<F>(f: F) -> IessicStatus
where
    F: FnOnce() -> Result<(), IessicStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IessicStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            IessicStatus::Internal
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, IessicStatus>;
}

impl<T> OrStatus<T> for iessic::Result<T> {
    fn or_status(self) -> Result<T, IessicStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), IessicStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        return Err(IessicStatus::NullPointer);
    }
    Ok(())
}

fn model_kind(kind: IessicAddressModel) -> AddressModelKind {
    match kind {
        IessicAddressModel::IidBits => AddressModelKind::IidBits,
        IessicAddressModel::DistinctUniform => AddressModelKind::DistinctUniform,
    }
}

/// Copy the last error message into `buf` (NUL terminated, truncated to
/// `len`). Returns the full message length without the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn iessic_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// SSINR of `target` among users `0..n_users`. `transmitters` and
/// `cancelled` are bit masks over user ids.
///
/// # Safety
/// `links` must point to `n_users` elements and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_ssinr(
    links: *const IessicLinkParams,
    n_users: usize,
    transmitters: u64,
    cancelled: u64,
    target: usize,
    out: *mut f64,
) -> IessicStatus {
    guard(|| {
        non_null(links, "links")?;
        non_null(out, "out")?;
        let links = std::slice::from_raw_parts(links, n_users);
        let set = LinkSet::from_map(links.iter().map(|&l| LinkParams::from(l)).enumerate().collect());
        set.validate().or_status()?;
        let ctx = CancellationContext::new(UserSet::from_bits(transmitters), UserSet::from_bits(cancelled), target)
            .or_status()?;
        *out = ssinr(&ctx, &set).or_status()?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_rician_ser(gamma: f64, k_factor: f64, out: *mut f64) -> IessicStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = rician_ser(gamma, k_factor).or_status()?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_decode_prob(gamma: f64, k_factor: f64, packet_len_bits: u32, out: *mut f64) -> IessicStatus {
    guard(|| {
        non_null(out, "out")?;
        let link = RicianLink::new(k_factor, packet_len_bits).or_status()?;
        *out = decode_prob(gamma, &link).or_status()?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_slotted_aloha(load: f64, out: *mut f64) -> IessicStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = scenario::slotted_aloha_throughput(load).or_status()?;
        Ok(())
    })
}

/// Create a PHY model with `link` applied to every user.
///
/// # Safety
/// `link` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_phy_new(
    link: *const IessicLinkParams,
    k_factor: f64,
    packet_len_bits: u32,
    out: *mut *mut IessicPhy,
) -> IessicStatus {
    guard(|| {
        non_null(link, "link")?;
        non_null(out, "out")?;
        let rician = RicianLink::new(k_factor, packet_len_bits).or_status()?;
        let phy = PhyModel::new(LinkSet::uniform((*link).into()), rician).or_status()?;
        *out = Box::into_raw(Box::new(IessicPhy(phy)));
        Ok(())
    })
}

/// Give `user` its own link parameters.
///
/// # Safety
/// `phy` must come from [`iessic_phy_new`]; `link` must be readable.
#[no_mangle]
pub unsafe extern "C" fn iessic_phy_set_user_link(
    phy: *mut IessicPhy,
    user: usize,
    link: *const IessicLinkParams,
) -> IessicStatus {
    guard(|| {
        non_null(phy, "phy")?;
        non_null(link, "link")?;
        if user >= UserSet::MAX_USERS {
            set_error(format!("user {user} out of range"));
            return Err(IessicStatus::InvalidArgument);
        }
        let link: LinkParams = (*link).into();
        link.validate().or_status()?;
        let phy = &mut (*phy).0;
        phy.links = std::mem::take(&mut phy.links).with_override(user, link);
        Ok(())
    })
}

/// # Safety
/// `phy` must be null or come from [`iessic_phy_new`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn iessic_phy_free(phy: *mut IessicPhy) {
    if !phy.is_null() {
        drop(Box::from_raw(phy));
    }
}

/// Resolve `n` addresses of `address_bits` bits; user `i` owns `addresses[i]`.
///
/// # Safety
/// `addresses` must point to `n` elements and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_run_tree(
    addresses: *const u32,
    n: usize,
    address_bits: u8,
    count_idle_slots: bool,
    out: *mut *mut IessicTrace,
) -> IessicStatus {
    guard(|| {
        non_null(addresses, "addresses")?;
        non_null(out, "out")?;
        let active = std::slice::from_raw_parts(addresses, n)
            .iter()
            .map(|&v| Address::new(v, address_bits))
            .collect::<iessic::Result<Vec<_>>>()
            .or_status()?;
        let engine = SicqtaEngine::new(address_bits).or_status()?.count_idle_slots(count_idle_slots);
        let trace = engine.run(&active).or_status()?;
        *out = Box::into_raw(Box::new(IessicTrace(trace)));
        Ok(())
    })
}

/// # Safety
/// `trace` must come from [`iessic_run_tree`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_trace_slots_used(trace: *const IessicTrace, out: *mut usize) -> IessicStatus {
    guard(|| {
        non_null(trace, "trace")?;
        non_null(out, "out")?;
        *out = (*trace).0.slots_used();
        Ok(())
    })
}

/// # Safety
/// `trace` must come from [`iessic_run_tree`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_trace_throughput(trace: *const IessicTrace, out: *mut f64) -> IessicStatus {
    guard(|| {
        non_null(trace, "trace")?;
        non_null(out, "out")?;
        *out = (*trace).0.throughput();
        Ok(())
    })
}

/// Write the occupancy label, NUL terminated, into `buf`. `needed` receives
/// the label length; a too small buffer yields `InvalidArgument`.
///
/// # Safety
/// `trace` must come from [`iessic_run_tree`]; `buf` must be valid for `len`
/// bytes or null; `needed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_trace_label(
    trace: *const IessicTrace,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> IessicStatus {
    guard(|| {
        non_null(trace, "trace")?;
        non_null(needed, "needed")?;
        let label = (*trace).0.label();
        *needed = label.len();
        if buf.is_null() || len <= label.len() {
            set_error(format!("label needs {} bytes plus terminator", label.len()));
            return Err(IessicStatus::InvalidArgument);
        }
        std::ptr::copy_nonoverlapping(label.as_ptr(), buf as *mut u8, label.len());
        *buf.add(label.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or come from [`iessic_run_tree`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn iessic_trace_free(trace: *mut IessicTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Exact MAC throughput by enumeration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_mac_throughput(
    model: IessicAddressModel,
    address_bits: u8,
    users: usize,
    count_idle_slots: bool,
    out: *mut f64,
) -> IessicStatus {
    guard(|| {
        non_null(out, "out")?;
        let model = AddressModel::new(model_kind(model), address_bits, users).or_status()?;
        let engine = SicqtaEngine::new(address_bits).or_status()?.count_idle_slots(count_idle_slots);
        *out = scenario::mac_throughput(&model, &engine).or_status()?;
        Ok(())
    })
}

/// Exact total throughput by enumeration under `phy`.
///
/// # Safety
/// `phy` must come from [`iessic_phy_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn iessic_total_throughput(
    model: IessicAddressModel,
    address_bits: u8,
    users: usize,
    count_idle_slots: bool,
    phy: *const IessicPhy,
    out: *mut f64,
) -> IessicStatus {
    guard(|| {
        non_null(phy, "phy")?;
        non_null(out, "out")?;
        let model = AddressModel::new(model_kind(model), address_bits, users).or_status()?;
        let engine = SicqtaEngine::new(address_bits).or_status()?.count_idle_slots(count_idle_slots);
        *out = scenario::total_throughput(&model, &engine, &(*phy).0).or_status()?;
        Ok(())
    })
}
