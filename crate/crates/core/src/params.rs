//! Physical parameters, the probe pulse, and the helpers relating atomic
//! quantities to the effective rates of the superatom model.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Effective rates of the superatom model, all in µs⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Collectively enhanced emission into the probe mode.
    pub kappa: f64,
    /// Spontaneous (Raman) decay of the Rydberg excitation.
    pub gamma_r: f64,
    /// Dephasing from the bright state into the dark manifold.
    pub gamma_d: f64,
}

impl SystemParams {
    /// Rates fitted to the measured transmission traces.
    pub const FITTED: SystemParams = SystemParams {
        kappa: 0.55,
        gamma_r: 0.14,
        gamma_d: 1.49,
    };

    pub fn new(kappa: f64, gamma_r: f64, gamma_d: f64) -> Result<Self> {
        let p = SystemParams {
            kappa,
            gamma_r,
            gamma_d,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds the rates from microscopic inputs; the dephasing rate is not
    /// derivable from them and is passed through.
    pub fn from_atomic(atomic: &AtomicInputs, gamma_d: f64) -> Result<Self> {
        Self::new(collective_kappa(atomic)?, raman_decay_rate(atomic)?, gamma_d)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("kappa", self.kappa)?;
        check_rate("gamma_r", self.gamma_r)?;
        check_rate("gamma_d", self.gamma_d)
    }

    /// Total decay rate of the bright state.
    pub fn bright_decay(&self) -> f64 {
        self.kappa + self.gamma_r + self.gamma_d
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::FITTED
    }
}

fn check_rate(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::invalid(name, format!("{value} is not finite")));
    }
    if value < 0.0 {
        return Err(Error::invalid(name, format!("{value} is negative")));
    }
    Ok(())
}

/// Microscopic single-atom and ensemble quantities.
///
/// Angular frequencies are in rad/µs, so `2π × 12 MHz` is `2π * 12.0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomicInputs {
    /// Control-field Rabi frequency Ω.
    pub omega: f64,
    /// Single-photon detuning Δ from the intermediate state.
    pub delta: f64,
    /// Intermediate-state linewidth Γₑ.
    pub gamma_e: f64,
    /// Number of atoms inside the blockaded probe volume.
    pub n_atoms: u64,
    /// Single-atom probe coupling g₀ in µs^(-1/2).
    pub g0: f64,
}

impl AtomicInputs {
    fn mixing(&self) -> Result<f64> {
        if self.delta == 0.0 || !self.delta.is_finite() {
            return Err(Error::Domain(format!(
                "single-photon detuning must be finite and nonzero, got {}",
                self.delta
            )));
        }
        Ok(self.omega / (2.0 * self.delta))
    }
}

/// Raman decay rate Γ = (Ω / 2Δ)² Γₑ of the adiabatically eliminated ladder.
pub fn raman_decay_rate(a: &AtomicInputs) -> Result<f64> {
    let m = a.mixing()?;
    Ok(m * m * a.gamma_e)
}

/// Collective emission rate κ = g_col² / 4 with g_col = √N g₀ Ω / (2Δ).
pub fn collective_kappa(a: &AtomicInputs) -> Result<f64> {
    let g_col = (a.n_atoms as f64).sqrt() * a.g0 * a.mixing()?;
    Ok(g_col * g_col / 4.0)
}

/// Flat-top probe pulse with raised-cosine ramps on both sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    /// Peak input photon rate R_in in photons/µs.
    pub peak_rate: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Duration of each raised-cosine ramp.
    pub ramp: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        PulseSpec {
            peak_rate: 6.7,
            t_start: 0.0,
            t_end: 6.0,
            ramp: 0.5,
        }
    }
}

impl PulseSpec {
    pub fn new(peak_rate: f64, t_start: f64, t_end: f64, ramp: f64) -> Result<Self> {
        let p = PulseSpec {
            peak_rate,
            t_start,
            t_end,
            ramp,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_peak_rate(mut self, peak_rate: f64) -> Result<Self> {
        self.peak_rate = peak_rate;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("peak_rate", self.peak_rate)?;
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.ramp.is_finite()) {
            return Err(Error::invalid("pulse", "timing values must be finite"));
        }
        if self.ramp <= 0.0 {
            return Err(Error::invalid("ramp", format!("{} must be positive", self.ramp)));
        }
        if self.t_end - self.t_start < 2.0 * self.ramp {
            return Err(Error::invalid(
                "t_end",
                format!(
                    "pulse [{}, {}] is shorter than its two ramps of {}",
                    self.t_start, self.t_end, self.ramp
                ),
            ));
        }
        Ok(())
    }

    /// Times where the envelope changes functional form, in ascending order.
    pub fn knots(&self) -> [f64; 4] {
        [
            self.t_start,
            self.t_start + self.ramp,
            self.t_end - self.ramp,
            self.t_end,
        ]
    }

    pub fn flat_top(&self) -> (f64, f64) {
        (self.t_start + self.ramp, self.t_end - self.ramp)
    }

    pub fn envelope(&self, t: f64) -> f64 {
        if t <= self.t_start || t >= self.t_end {
            return 0.0;
        }
        let rise = t - self.t_start;
        let fall = self.t_end - t;
        let edge = rise.min(fall);
        if edge >= self.ramp {
            1.0
        } else {
            0.5 * (1.0 - (PI * edge / self.ramp).cos())
        }
    }

    /// Coherent drive amplitude α(t), taken real and nonnegative.
    pub fn amplitude(&self, t: f64) -> f64 {
        self.peak_rate.sqrt() * self.envelope(t)
    }

    /// Input photon rate |α(t)|².
    pub fn input_rate(&self, t: f64) -> f64 {
        let a = self.amplitude(t);
        a * a
    }

    /// Mean number of photons in the pulse, ∫|α|² dt.
    ///
    /// Each ramp carries ∫₀ʳ ¼(1 − cos πu/r)² du = 3r/8 of a flat-top stretch.
    pub fn mean_photon_number(&self) -> f64 {
        let flat = self.t_end - self.t_start - 2.0 * self.ramp;
        self.peak_rate * (flat + 0.75 * self.ramp)
    }
}

/// Envelope of the Tukey pulse at `t`, in [0, 1].
pub fn tukey_envelope(t: f64, pulse: &PulseSpec) -> f64 {
    pulse.envelope(t)
}

/// Drive amplitude α(t) = √R_in · envelope(t).
pub fn drive_amplitude(t: f64, pulse: &PulseSpec) -> f64 {
    pulse.amplitude(t)
}
