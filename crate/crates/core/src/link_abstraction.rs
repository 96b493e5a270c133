//! SSINR to decode probability over a Rician channel.
//!
//! The per-symbol error of coherent QPSK is evaluated with the MGF form
//! `(1/pi) * int_0^{3pi/4} M(-sin^2(pi/4) / sin^2(theta)) dtheta` and raised to
//! the packet length to obtain the probability that a whole packet decodes.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// Absolute tolerance of the symbol-error quadrature.
pub const SER_TOLERANCE: f64 = 1e-10;

/// Which closed form of the Rician MGF to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MgfForm {
    /// `(1+K)/(1+K-s*g) * exp(K*s*g / (1+K-s*g))`
    #[default]
    Standard,
    /// Exponent without the factor `s`, kept for comparison.
    AsPrinted,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RicianLink {
    pub k_factor: f64,
    pub packet_len_bits: u32,
    pub mgf: MgfForm,
}

impl Default for RicianLink {
    fn default() -> Self {
        RicianLink { k_factor: 4.0, packet_len_bits: 1024, mgf: MgfForm::Standard }
    }
}

impl RicianLink {
    pub fn new(k_factor: f64, packet_len_bits: u32) -> Result<Self> {
        let link = RicianLink { k_factor, packet_len_bits, mgf: MgfForm::Standard };
        link.validate()?;
        Ok(link)
    }

    pub fn with_mgf(self, mgf: MgfForm) -> Self {
        RicianLink { mgf, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_factor >= 0.0 && self.k_factor.is_finite()) {
            return Err(Error::invalid("k_factor", format!("must be finite and >= 0, got {}", self.k_factor)));
        }
        if self.packet_len_bits == 0 {
            return Err(Error::invalid("packet_len_bits", "must be >= 1"));
        }
        Ok(())
    }

    /// Symbol error probability at SSINR `gamma`.
    pub fn ser(&self, gamma: f64) -> Result<f64> {
        rician_ser_with(gamma, self.k_factor, self.mgf, SER_TOLERANCE)
    }

    /// Packet decode probability at SSINR `gamma`.
    pub fn decode_prob(&self, gamma: f64) -> Result<f64> {
        decode_prob(gamma, self)
    }
}

/// Rician moment generating function of the SNR, evaluated at `s`.
pub fn rician_mgf(s: f64, gamma: f64, k_factor: f64, form: MgfForm) -> f64 {
    let denom = 1.0 + k_factor - s * gamma;
    let exponent = match form {
        MgfForm::Standard => k_factor * s * gamma / denom,
        MgfForm::AsPrinted => k_factor * gamma / denom,
    };
    (1.0 + k_factor) / denom * exponent.exp()
}

/// QPSK symbol error probability over Rician fading with factor `k_factor`.
pub fn rician_ser(gamma: f64, k_factor: f64) -> Result<f64> {
    rician_ser_with(gamma, k_factor, MgfForm::Standard, SER_TOLERANCE)
}

pub fn rician_ser_with(gamma: f64, k_factor: f64, form: MgfForm, tolerance: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma", format!("must be >= 0, got {gamma}")));
    }
    if !(k_factor >= 0.0 && k_factor.is_finite()) {
        return Err(Error::invalid("k_factor", format!("must be finite and >= 0, got {k_factor}")));
    }
    if gamma == 0.0 {
        // the MGF is identically 1
        return Ok(0.75);
    }
    if gamma.is_infinite() {
        return Ok(0.0);
    }
    let g = FRAC_PI_4.sin().powi(2);
    let integrand = |theta: f64| {
        let sin2 = theta.sin().powi(2);
        if sin2 < 1e-300 {
            // s -> -inf drives the MGF to zero
            return 0.0;
        }
        rician_mgf(-g / sin2, gamma, k_factor, form)
    };
    // scale the target so the error bound holds after dividing by pi
    let out = quadrature::integrate(integrand, 0.0, 3.0 * PI / 4.0, tolerance * PI);
    let estimate = out.error_estimate / PI;
    if !(estimate <= tolerance) || !out.integral.is_finite() {
        return Err(Error::Quadrature { estimate, tolerance });
    }
    Ok((out.integral / PI).clamp(0.0, 0.75))
}

/// `(1 - ser)^bits`, computed in log space so long packets keep precision.
pub fn packet_success(ser: f64, bits: u32) -> f64 {
    if bits == 0 {
        return 1.0;
    }
    if ser >= 1.0 {
        return 0.0;
    }
    ((-ser).ln_1p() * f64::from(bits)).exp()
}

/// Probability that a packet of `link.packet_len_bits` bits decodes at SSINR `gamma`.
pub fn decode_prob(gamma: f64, link: &RicianLink) -> Result<f64> {
    let ser = rician_ser_with(gamma, link.k_factor, link.mgf, SER_TOLERANCE)?;
    Ok(packet_success(ser, link.packet_len_bits))
}
