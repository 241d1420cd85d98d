//! Physical model types shared by the solver, the ensemble average and the
//! sweeps.
//!
//! Units: time in ns, angular frequencies in rad/ns, cell length in mm and
//! beam waists in µm. Configuration files speak ordinary frequencies in MHz;
//! [`mhz`] and [`to_mhz`] convert.

use std::f64::consts::{LN_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BOLTZMANN: f64 = 1.380_649e-23;
const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
const ZERO_CELSIUS: f64 = 273.15;

/// Γ(9/8), the integral constant of the eighth-order super-Gaussian.
const GAMMA_NINE_EIGHTHS: f64 = 0.941_742_699_849_701_4;

/// Ordinary frequency in MHz to angular frequency in rad/ns.
pub fn mhz(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e-3
}

/// Angular frequency in rad/ns to ordinary frequency in MHz.
pub fn to_mhz(omega: f64) -> f64 {
    omega / TAU * 1e3
}

/// The four-level Λ system: ground states |g⟩, |s⟩ and excited states
/// |e1⟩, |e2⟩ separated by the hyperfine splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    /// Signal detuning from |e1⟩.
    pub delta_signal: f64,
    /// Two-photon detuning, control detuning minus signal detuning.
    pub delta_twophoton: f64,
    /// Splitting between |e1⟩ and |e2⟩ (|e2⟩ above).
    pub hyperfine_splitting: f64,
    /// Radiative half-width of the optical coherences.
    pub gamma_rad: f64,
    /// Buffer-gas broadening half-width.
    pub gamma_coll: f64,
    /// Ground-state coherence decay rate while the pulses are on.
    pub gamma_spin: f64,
    /// Relative signal couplings (c1, c2) to |e1⟩, |e2⟩.
    pub coupling_signal: [f64; 2],
    /// Relative control couplings (b1, b2) to |e1⟩, |e2⟩.
    pub coupling_control: [f64; 2],
}

impl LevelScheme {
    /// Total decay rate of the optical coherences.
    pub fn gamma(&self) -> f64 {
        self.gamma_rad + self.gamma_coll
    }

    /// Signal detunings of the two excited states.
    pub fn excited_detunings(&self) -> [f64; 2] {
        [self.delta_signal, self.delta_signal - self.hyperfine_splitting]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.delta_signal,
            self.delta_twophoton,
            self.hyperfine_splitting,
            self.gamma_rad,
            self.gamma_coll,
            self.gamma_spin,
            self.coupling_signal[0],
            self.coupling_signal[1],
            self.coupling_control[0],
            self.coupling_control[1],
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("level scheme contains non-finite values"));
        }
        if self.gamma_rad <= 0.0 {
            return Err(Error::config("scheme.gamma_rad must be positive"));
        }
        if self.gamma_coll < 0.0 || self.gamma_spin < 0.0 {
            return Err(Error::config("scheme decay rates must be non-negative"));
        }
        if self.hyperfine_splitting <= 0.0 {
            return Err(Error::config("scheme.hyperfine_splitting must be positive"));
        }
        let [c1, c2] = self.coupling_signal;
        if ((c1 * c1 + c2 * c2) - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "signal couplings must satisfy c1^2 + c2^2 = 1, got {}",
                c1 * c1 + c2 * c2
            )));
        }
        Ok(())
    }

    /// True when the two storage pathways c_j·b_j have opposite signs.
    pub fn pathways_opposed(&self) -> bool {
        let p1 = self.coupling_signal[0] * self.coupling_control[0];
        let p2 = self.coupling_signal[1] * self.coupling_control[1];
        p1 * p2 < 0.0
    }
}

/// Vapor, beam and discretization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Resonant intensity optical depth on the signal transition, as measured
    /// on the Doppler-broadened line.
    pub optical_depth: f64,
    /// mm
    pub cell_length: f64,
    /// 1σ one-photon Doppler shift, rad/ns.
    pub doppler_sigma: f64,
    pub twophoton_doppler_fraction: f64,
    pub n_velocity_classes: usize,
    pub n_rings: usize,
    /// 1/e² intensity radius, µm.
    pub signal_waist: f64,
    /// 1/e² intensity radius, µm.
    pub control_waist: f64,
    pub n_z: usize,
    /// ns
    pub dt: f64,
    /// 1/e decay time of the retrieval efficiency during the hold, ns.
    pub memory_lifetime: f64,
}

impl EnsembleConfig {
    /// Optical depth the same atoms would show without Doppler broadening,
    /// for a homogeneous width `gamma`.
    pub fn homogeneous_optical_depth(&self, gamma: f64) -> f64 {
        self.optical_depth / voigt_peak_ratio(self.doppler_sigma, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ensemble.cell_length", self.cell_length),
            ("ensemble.signal_waist", self.signal_waist),
            ("ensemble.control_waist", self.control_waist),
            ("ensemble.dt", self.dt),
            ("ensemble.memory_lifetime", self.memory_lifetime),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.optical_depth >= 0.0) || !self.optical_depth.is_finite() {
            return Err(Error::config("ensemble.optical_depth must be finite and >= 0"));
        }
        if !(self.doppler_sigma >= 0.0) || !self.doppler_sigma.is_finite() {
            return Err(Error::config("ensemble.doppler_sigma must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.twophoton_doppler_fraction) {
            return Err(Error::config(
                "ensemble.twophoton_doppler_fraction must lie in [0, 1]",
            ));
        }
        if self.n_velocity_classes < 1 || self.n_rings < 1 {
            return Err(Error::config("need at least one velocity class and one ring"));
        }
        if self.n_z < 8 {
            return Err(Error::config(format!("ensemble.n_z must be >= 8, got {}", self.n_z)));
        }
        Ok(())
    }
}

/// Line-center absorption of a Lorentzian of half-width `gamma` convolved
/// with a Gaussian of standard deviation `sigma`, relative to the bare
/// Lorentzian: ∫ N(δ; σ) γ²/(γ² + δ²) dδ.
pub fn voigt_peak_ratio(sigma: f64, gamma: f64) -> f64 {
    let s2 = (sigma / gamma).powi(2);
    if s2 < 2.5e-3 {
        // moments of the Gaussian: 1 - ⟨x²⟩ + ⟨x⁴⟩ - ⟨x⁶⟩ with x = δ/γ
        return 1.0 - s2 + 3.0 * s2 * s2 - 15.0 * s2 * s2 * s2;
    }
    // δ = γ tan θ turns the Lorentzian into a flat measure on (-π/2, π/2)
    const N: usize = 4096;
    let h = PI / N as f64;
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let f = |theta: f64| {
        let delta = gamma * theta.tan();
        norm * (-0.5 * (delta / sigma).powi(2)).exp()
    };
    let mut sum = 0.0;
    for k in 1..N {
        let theta = -PI / 2.0 + k as f64 * h;
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(theta);
    }
    gamma * sum * h / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    Gaussian,
    DoubleExponential,
    FlatTop,
}

impl PulseShape {
    pub fn as_str(self) -> &'static str {
        match self {
            PulseShape::Gaussian => "gaussian",
            PulseShape::DoubleExponential => "double_exponential",
            PulseShape::FlatTop => "flat_top",
        }
    }

    /// Normalized intensity envelope, 1 at the center and 1/2 at ±fwhm/2.
    fn intensity(self, x: f64, fwhm: f64) -> f64 {
        let u = x / fwhm;
        match self {
            PulseShape::Gaussian => (-4.0 * LN_2 * u * u).exp(),
            PulseShape::DoubleExponential => (-2.0 * LN_2 * u.abs()).exp(),
            PulseShape::FlatTop => (-LN_2 * (2.0 * u).powi(8)).exp(),
        }
    }

    /// Time integral of the normalized intensity envelope.
    fn intensity_integral(self, fwhm: f64) -> f64 {
        match self {
            PulseShape::Gaussian => fwhm * (PI / (4.0 * LN_2)).sqrt(),
            PulseShape::DoubleExponential => fwhm / LN_2,
            PulseShape::FlatTop => fwhm * GAMMA_NINE_EIGHTHS / LN_2.powf(0.125),
        }
    }
}

impl std::str::FromStr for PulseShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(PulseShape::Gaussian),
            "double_exponential" => Ok(PulseShape::DoubleExponential),
            "flat_top" => Ok(PulseShape::FlatTop),
            other => Err(Error::config(format!("unknown pulse shape `{other}`"))),
        }
    }
}

/// A temporal envelope. `fwhm` always refers to the intensity profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub shape: PulseShape,
    /// Peak Rabi frequency (rad/ns) for control pulses, peak field amplitude
    /// for the signal.
    pub peak_amplitude: f64,
    /// ns
    pub fwhm: f64,
    /// ns
    pub center: f64,
}

impl PulseSpec {
    /// A signal envelope whose squared modulus integrates to one photon.
    pub fn photon(shape: PulseShape, fwhm: f64, center: f64) -> Self {
        let peak = shape.intensity_integral(fwhm).recip().sqrt();
        PulseSpec { shape, peak_amplitude: peak, fwhm, center }
    }

    /// Time integral of the squared envelope.
    pub fn energy(&self) -> f64 {
        self.peak_amplitude * self.peak_amplitude * self.shape.intensity_integral(self.fwhm)
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        pulse_envelope(self, t)
    }

    pub fn with_peak(mut self, peak: f64) -> Self {
        self.peak_amplitude = peak;
        self
    }

    pub fn with_center(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.fwhm > 0.0) || !self.fwhm.is_finite() {
            return Err(Error::config(format!("{name}.fwhm must be positive")));
        }
        if !(self.peak_amplitude >= 0.0) || !self.peak_amplitude.is_finite() {
            return Err(Error::config(format!("{name}.peak must be finite and >= 0")));
        }
        if !self.center.is_finite() {
            return Err(Error::config(format!("{name}.center must be finite")));
        }
        Ok(())
    }
}

/// Field amplitude of the pulse at time `t`.
///
/// The envelopes are real; the amplitude is the square root of the intensity
/// profile so that `fwhm` is the intensity full width at half maximum.
pub fn pulse_envelope(spec: &PulseSpec, t: f64) -> f64 {
    spec.peak_amplitude * spec.shape.intensity(t - spec.center, spec.fwhm).sqrt()
}

/// Intensity FWHM of the two-sided exponential photon whose spectrum has the
/// given Lorentzian linewidth (amplitude decaying as exp(-π·Δν·|t|)).
pub fn double_exponential_fwhm(bandwidth_mhz: f64) -> f64 {
    LN_2 / (PI * bandwidth_mhz * 1e-3)
}

/// One-photon Doppler width k·σ_v (rad/ns) of a thermal vapor.
pub fn derive_doppler_sigma(temperature_c: f64, atomic_mass_amu: f64, wavelength_nm: f64) -> Result<f64> {
    if !(temperature_c > -ZERO_CELSIUS) {
        return Err(Error::domain(format!(
            "temperature {temperature_c} °C is at or below absolute zero"
        )));
    }
    if !(atomic_mass_amu > 0.0) {
        return Err(Error::domain("atomic mass must be positive"));
    }
    if !(wavelength_nm > 0.0) {
        return Err(Error::domain("wavelength must be positive"));
    }
    let kelvin = temperature_c + ZERO_CELSIUS;
    let sigma_v = (BOLTZMANN * kelvin / (atomic_mass_amu * ATOMIC_MASS_UNIT)).sqrt();
    let k = TAU / (wavelength_nm * 1e-9);
    // rad/s -> rad/ns
    Ok(k * sigma_v * 1e-9)
}

/// Residual two-photon Doppler shift, as a fraction of the one-photon shift,
/// for signal and control crossing at a small angle (radians).
pub fn twophoton_doppler_fraction(crossing_angle: f64) -> f64 {
    2.0 * (crossing_angle / 2.0).sin()
}

/// Buffer-gas pressure broadening; the half-width is linear in pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferGas {
    pub pressure_torr: f64,
    pub broadening_mhz_per_torr: f64,
}

impl BufferGas {
    /// Collisional half-width, rad/ns.
    pub fn gamma_coll(&self) -> f64 {
        mhz(self.pressure_torr * self.broadening_mhz_per_torr)
    }
}

/// A complete protocol configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub scheme: LevelScheme,
    pub buffer_gas: BufferGas,
    pub ensemble: EnsembleConfig,
    pub signal: PulseSpec,
    /// Read-in control; its center is measured from the signal center.
    pub control_in: PulseSpec,
    /// Read-out control; its center is measured from the read-out reference time.
    pub control_out: PulseSpec,
    /// ns
    pub storage_time: f64,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.ensemble.validate()?;
        self.signal.validate("signal")?;
        self.control_in.validate("control_in")?;
        self.control_out.validate("control_out")?;
        if !(self.storage_time >= 0.0) || !self.storage_time.is_finite() {
            return Err(Error::config("protocol.storage_time must be finite and >= 0"));
        }
        Ok(())
    }
}

pub const DEFAULT_TEMPERATURE_C: f64 = 50.0;
pub const RB87_MASS_AMU: f64 = 86.909_180_527;
pub const D1_WAVELENGTH_NM: f64 = 794.979;
pub const SIGNAL_BANDWIDTH_MHZ: f64 = 370.0;
pub const CROSSING_ANGLE_RAD: f64 = 2.95e-3;
/// Read-in control center relative to the signal center, ns.
pub const DEFAULT_CONTROL_OFFSET: f64 = 0.0;

/// The experimental operating point.
pub fn default_experiment_config() -> Experiment {
    let buffer_gas = BufferGas { pressure_torr: 5.0, broadening_mhz_per_torr: 10.0 };
    // ⁸⁷Rb D1, |F=2,m=2⟩ → |F'=1,2; m'=1⟩ ← |F=1,m=0⟩ with σ−/σ+ light,
    // normalized so that c1² + c2² = 1 and b1 = 1.
    let scheme = LevelScheme {
        delta_signal: mhz(-700.0),
        delta_twophoton: mhz(-130.0),
        hyperfine_splitting: mhz(814.5),
        gamma_rad: mhz(5.75),
        gamma_coll: buffer_gas.gamma_coll(),
        gamma_spin: 0.0,
        coupling_signal: [3f64.sqrt() / 2.0, -0.5],
        coupling_control: [1.0, 3f64.sqrt()],
    };
    let ensemble = EnsembleConfig {
        optical_depth: 25.0,
        cell_length: 75.0,
        doppler_sigma: derive_doppler_sigma(DEFAULT_TEMPERATURE_C, RB87_MASS_AMU, D1_WAVELENGTH_NM)
            .expect("constants are physical"),
        twophoton_doppler_fraction: twophoton_doppler_fraction(CROSSING_ANGLE_RAD),
        n_velocity_classes: 16,
        n_rings: 8,
        signal_waist: 240.0,
        control_waist: 260.0,
        n_z: 48,
        dt: 0.01,
        memory_lifetime: 680.0,
    };
    let control = PulseSpec {
        shape: PulseShape::Gaussian,
        peak_amplitude: mhz(400.0),
        fwhm: 3.77,
        center: 0.0,
    };
    Experiment {
        scheme,
        buffer_gas,
        ensemble,
        signal: PulseSpec::photon(
            PulseShape::DoubleExponential,
            double_exponential_fwhm(SIGNAL_BANDWIDTH_MHZ),
            0.0,
        ),
        control_in: control.with_center(DEFAULT_CONTROL_OFFSET),
        control_out: control,
        storage_time: 160.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voigt_peak_ratio_matches_scaled_complementary_error_function() {
        // sqrt(π/2)·a·erfcx(a/√2) with a = γ/σ, evaluated with scipy
        assert!((voigt_peak_ratio(1.0, 1.0) - 0.6556795424187984).abs() < 1e-10);
        let r = voigt_peak_ratio(TAU * 0.221, TAU * 0.05575);
        assert!((r - 0.2613820630311717).abs() < 1e-10, "{r}");
        assert_eq!(voigt_peak_ratio(0.0, 1.0), 1.0);
        // both sides of the series cutoff agree
        let below = voigt_peak_ratio(0.0499, 1.0);
        let above = voigt_peak_ratio(0.0501, 1.0);
        assert!((below - above).abs() < 1e-3 && below > above);
        // Doppler limit: sqrt(π/2)·γ/σ
        let wide = voigt_peak_ratio(1000.0, 1.0);
        assert!((wide / ((PI / 2.0).sqrt() / 1000.0) - 1.0).abs() < 1e-3);
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn doppler_width_of_rubidium_at_fifty_celsius() {
        let sigma = derive_doppler_sigma(50.0, 86.909, 795.0).unwrap();
        // sqrt(kB·323.15 K / 86.909 u) / 795 nm, evaluated independently.
        let expected = TAU * 0.221_17;
        assert!((sigma / expected - 1.0).abs() < 1e-3, "{}", to_mhz(sigma));
    }

    #[test]
    fn doppler_width_limits_and_scaling() {
        let base = derive_doppler_sigma(50.0, 86.909, 795.0).unwrap();
        let cold = derive_doppler_sigma(-273.15 + 1e-9, 86.909, 795.0).unwrap();
        // sqrt(1e-9 K / 323 K) ≈ 1.8e-6
        assert!(cold < 3e-6 * base);
        let heavy = derive_doppler_sigma(50.0, 4.0 * 86.909, 795.0).unwrap();
        assert!((heavy / base - 0.5).abs() < 1e-12);
        let long = derive_doppler_sigma(50.0, 86.909, 2.0 * 795.0).unwrap();
        assert!((long / base - 0.5).abs() < 1e-12);
        // sqrt(T) in kelvin
        let t1 = derive_doppler_sigma(100.0, 86.909, 795.0).unwrap();
        let t4 = derive_doppler_sigma(4.0 * 373.15 - 273.15, 86.909, 795.0).unwrap();
        assert!((t4 / t1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn doppler_width_rejects_unphysical_input() {
        assert!(derive_doppler_sigma(50.0, 0.0, 795.0).is_err());
        assert!(derive_doppler_sigma(50.0, 86.9, -1.0).is_err());
        assert!(derive_doppler_sigma(-273.15, 86.9, 795.0).is_err());
    }

    #[test]
    fn gaussian_envelope_peak_and_tails() {
        let p = PulseSpec { shape: PulseShape::Gaussian, peak_amplitude: 1.0, fwhm: 3.77, center: 0.0 };
        assert_eq!(pulse_envelope(&p, 0.0), 1.0);
        assert!(pulse_envelope(&p, 100.0) < 1e-300);
        assert!(pulse_envelope(&p, -100.0) < 1e-300);
        let half = pulse_envelope(&p, 3.77 / 2.0);
        assert!((half * half - 0.5).abs() < 1e-12);
    }

    #[test]
    fn every_shape_has_intensity_fwhm() {
        for shape in [PulseShape::Gaussian, PulseShape::DoubleExponential, PulseShape::FlatTop] {
            let p = PulseSpec { shape, peak_amplitude: 2.0, fwhm: 1.3, center: 0.4 };
            let a = pulse_envelope(&p, 0.4 + 0.65) / 2.0;
            assert!((a * a - 0.5).abs() < 1e-12, "{shape:?}");
        }
    }

    #[test]
    fn double_exponential_width_from_bandwidth() {
        let fwhm = double_exponential_fwhm(370.0);
        assert!((fwhm - LN_2 / (PI * 0.370)).abs() < 1e-12);
        assert!((fwhm - 0.5963).abs() < 1e-4);
        let p = PulseSpec::photon(PulseShape::DoubleExponential, fwhm, 0.0);
        // amplitude decays as exp(-π·Δν·|t|)
        let ratio = pulse_envelope(&p, 1.0) / pulse_envelope(&p, 0.0);
        assert!((ratio - (-PI * 0.370f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn photon_envelopes_are_normalized() {
        for shape in [PulseShape::Gaussian, PulseShape::DoubleExponential, PulseShape::FlatTop] {
            for &(fwhm, center) in &[(0.5963, 0.0), (3.77, -2.0), (1.0, 7.5)] {
                let p = PulseSpec::photon(shape, fwhm, center);
                let f = |t: f64| pulse_envelope(&p, t).powi(2);
                let span = 60.0 * fwhm;
                // split at the center: the double exponential has a kink there
                let e = simpson(f, center - span, center, 400_000) + simpson(f, center, center + span, 400_000);
                assert!((e - 1.0).abs() < 1e-9, "{shape:?} {fwhm}: {e}");
                assert!((p.energy() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_operating_point() {
        let e = default_experiment_config();
        e.validate().unwrap();
        assert!((to_mhz(e.scheme.delta_signal) + 700.0).abs() < 1e-9);
        assert!((to_mhz(e.scheme.gamma_rad) - 5.75).abs() < 1e-9);
        assert!((to_mhz(e.control_in.peak_amplitude) - 400.0).abs() < 1e-9);
        assert_eq!(e.control_in.fwhm, 3.77);
        assert_eq!(e.ensemble.memory_lifetime, 680.0);
        assert_eq!(e.ensemble.optical_depth, 25.0);
        assert_eq!(e.ensemble.signal_waist, 240.0);
        assert_eq!(e.ensemble.control_waist, 260.0);
        assert!((to_mhz(e.scheme.gamma_coll) - 50.0).abs() < 1e-9);
        assert!(e.scheme.pathways_opposed());
        let [c1, c2] = e.scheme.coupling_signal;
        let [b1, b2] = e.scheme.coupling_control;
        assert!((c1 * b1 + c2 * b2).abs() < 1e-12);
    }

    #[test]
    fn scheme_validation() {
        let mut s = default_experiment_config().scheme;
        s.coupling_signal = [1.0, 0.5];
        assert!(s.validate().is_err());
        let mut s = default_experiment_config().scheme;
        s.gamma_rad = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn ensemble_validation() {
        let mut c = default_experiment_config().ensemble;
        c.n_z = 7;
        assert!(c.validate().is_err());
        let mut c = default_experiment_config().ensemble;
        c.twophoton_doppler_fraction = 1.5;
        assert!(c.validate().is_err());
        let mut c = default_experiment_config().ensemble;
        c.signal_waist = 400.0;
        c.control_waist = 100.0;
        c.validate().unwrap();
    }
}
