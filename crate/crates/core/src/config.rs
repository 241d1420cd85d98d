//! Plain-text `section.key = value` configuration.
//!
//! Frequencies are written as ordinary frequencies in MHz, times in ns and
//! waists in µm. Assignments apply in order on top of a base experiment, so a
//! later assignment to the same key wins. Unless `signal.peak` is given, the
//! signal is renormalized to one photon after all assignments.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{double_exponential_fwhm, mhz, to_mhz, Experiment, PulseShape, PulseSpec};

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub key: String,
    pub value: String,
    /// 1-based source line, 0 for command-line overrides.
    pub line: usize,
}

/// Splits a key-value text into assignments. `#` starts a comment; blank
/// lines are ignored.
pub fn parse_assignments(text: &str) -> Result<Vec<Assignment>> {
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => out.push(Assignment {
                key: k.trim().to_string(),
                value: v.trim().to_string(),
                line: i + 1,
            }),
            _ => bad.push(format!("line {}: expected `key = value`", i + 1)),
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(Error::Parse(bad.join("; ")))
    }
}

/// Parses a `key=value` override as given on the command line.
pub fn parse_override(text: &str) -> Result<Assignment> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok(Assignment {
            key: k.trim().to_string(),
            value: v.trim().to_string(),
            line: 0,
        }),
        _ => Err(Error::Parse(format!("override `{text}` is not of the form key=value"))),
    }
}

fn number(a: &Assignment) -> std::result::Result<f64, String> {
    a.value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{}` is not a finite number", a.value))
}

fn count(a: &Assignment) -> std::result::Result<usize, String> {
    a.value.parse::<usize>().map_err(|_| format!("`{}` is not a non-negative integer", a.value))
}

fn apply_pulse(p: &mut PulseSpec, field: &str, a: &Assignment, rabi: bool) -> std::result::Result<(), String> {
    match field {
        "shape" => p.shape = a.value.parse().map_err(|e: Error| e.to_string())?,
        "fwhm_ns" => p.fwhm = number(a)?,
        "center_ns" => p.center = number(a)?,
        "peak_mhz" if rabi => p.peak_amplitude = mhz(number(a)?),
        "peak" if !rabi => p.peak_amplitude = number(a)?,
        "bandwidth_mhz" if !rabi => {
            p.shape = PulseShape::DoubleExponential;
            p.fwhm = double_exponential_fwhm(number(a)?);
        }
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

/// Applies one assignment to `e`. Returns whether it fixed the signal peak.
fn apply_one(e: &mut Experiment, a: &Assignment) -> std::result::Result<bool, String> {
    let (section, field) = a.key.split_once('.').ok_or("keys have the form section.key")?;
    let s = &mut e.scheme;
    let n = &mut e.ensemble;
    match (section, field) {
        ("scheme", "delta_signal_mhz") => s.delta_signal = mhz(number(a)?),
        ("scheme", "delta_twophoton_mhz") => s.delta_twophoton = mhz(number(a)?),
        ("scheme", "hyperfine_splitting_mhz") => s.hyperfine_splitting = mhz(number(a)?),
        ("scheme", "gamma_rad_mhz") => s.gamma_rad = mhz(number(a)?),
        ("scheme", "gamma_coll_mhz") => s.gamma_coll = mhz(number(a)?),
        ("scheme", "gamma_spin_mhz") => s.gamma_spin = mhz(number(a)?),
        ("scheme", "c1") => s.coupling_signal[0] = number(a)?,
        ("scheme", "c2") => s.coupling_signal[1] = number(a)?,
        ("scheme", "b1") => s.coupling_control[0] = number(a)?,
        ("scheme", "b2") => s.coupling_control[1] = number(a)?,
        ("buffer_gas", "pressure_torr") => {
            e.buffer_gas.pressure_torr = number(a)?;
            e.scheme.gamma_coll = e.buffer_gas.gamma_coll();
        }
        ("buffer_gas", "broadening_mhz_per_torr") => {
            e.buffer_gas.broadening_mhz_per_torr = number(a)?;
            e.scheme.gamma_coll = e.buffer_gas.gamma_coll();
        }
        ("ensemble", "optical_depth") => n.optical_depth = number(a)?,
        ("ensemble", "cell_length_mm") => n.cell_length = number(a)?,
        ("ensemble", "doppler_sigma_mhz") => n.doppler_sigma = mhz(number(a)?),
        ("ensemble", "twophoton_doppler_fraction") => n.twophoton_doppler_fraction = number(a)?,
        ("ensemble", "n_velocity_classes") => n.n_velocity_classes = count(a)?,
        ("ensemble", "n_rings") => n.n_rings = count(a)?,
        ("ensemble", "signal_waist_um") => n.signal_waist = number(a)?,
        ("ensemble", "control_waist_um") => n.control_waist = number(a)?,
        ("ensemble", "n_z") => n.n_z = count(a)?,
        ("ensemble", "dt_ns") => n.dt = number(a)?,
        ("ensemble", "memory_lifetime_ns") => n.memory_lifetime = number(a)?,
        ("signal", f) => {
            apply_pulse(&mut e.signal, f, a, false)?;
            return Ok(f == "peak");
        }
        ("control", f) => {
            apply_pulse(&mut e.control_in, f, a, true)?;
            apply_pulse(&mut e.control_out, f, a, true)?;
        }
        ("control_in", f) => apply_pulse(&mut e.control_in, f, a, true)?,
        ("control_out", f) => apply_pulse(&mut e.control_out, f, a, true)?,
        ("protocol", "storage_time_ns") => e.storage_time = number(a)?,
        _ => return Err("unknown key".into()),
    }
    Ok(false)
}

/// Applies `assignments` in order to `base` and validates the result. All
/// offending keys are reported together.
pub fn apply_assignments(base: &Experiment, assignments: &[Assignment]) -> Result<Experiment> {
    let mut e = *base;
    let mut errors = Vec::new();
    let mut peak_given = false;
    let signal_before = base.signal;
    for a in assignments {
        match apply_one(&mut e, a) {
            Ok(fixed) => peak_given |= fixed,
            Err(msg) if a.line > 0 => errors.push(format!("{} (line {}): {msg}", a.key, a.line)),
            Err(msg) => errors.push(format!("{}: {msg}", a.key)),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors.join("; ")));
    }
    let reshaped = e.signal.shape != signal_before.shape || e.signal.fwhm != signal_before.fwhm;
    if reshaped && !peak_given && e.signal.fwhm > 0.0 {
        e.signal = PulseSpec::photon(e.signal.shape, e.signal.fwhm, e.signal.center);
    }
    e.validate()?;
    Ok(e)
}

/// Resolves a configuration text plus overrides against `base`.
pub fn resolve(base: &Experiment, text: &str, overrides: &[Assignment]) -> Result<Experiment> {
    let mut all = parse_assignments(text)?;
    all.extend_from_slice(overrides);
    apply_assignments(base, &all)
}

/// Every parameter of `e` in the configuration syntax. Numbers use the
/// shortest representation that parses back to the same value, so
/// `resolve(base, &to_config_string(e), &[])` reproduces `e` up to the
/// unit conversions.
pub fn to_config_string(e: &Experiment) -> String {
    let mut out = String::new();
    let s = &e.scheme;
    let n = &e.ensemble;
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("scheme.delta_signal_mhz", to_mhz(s.delta_signal).to_string());
    kv("scheme.delta_twophoton_mhz", to_mhz(s.delta_twophoton).to_string());
    kv("scheme.hyperfine_splitting_mhz", to_mhz(s.hyperfine_splitting).to_string());
    kv("scheme.gamma_rad_mhz", to_mhz(s.gamma_rad).to_string());
    kv("scheme.gamma_coll_mhz", to_mhz(s.gamma_coll).to_string());
    kv("scheme.gamma_spin_mhz", to_mhz(s.gamma_spin).to_string());
    kv("scheme.c1", s.coupling_signal[0].to_string());
    kv("scheme.c2", s.coupling_signal[1].to_string());
    kv("scheme.b1", s.coupling_control[0].to_string());
    kv("scheme.b2", s.coupling_control[1].to_string());
    kv("ensemble.optical_depth", n.optical_depth.to_string());
    kv("ensemble.cell_length_mm", n.cell_length.to_string());
    kv("ensemble.doppler_sigma_mhz", to_mhz(n.doppler_sigma).to_string());
    kv("ensemble.twophoton_doppler_fraction", n.twophoton_doppler_fraction.to_string());
    kv("ensemble.n_velocity_classes", n.n_velocity_classes.to_string());
    kv("ensemble.n_rings", n.n_rings.to_string());
    kv("ensemble.signal_waist_um", n.signal_waist.to_string());
    kv("ensemble.control_waist_um", n.control_waist.to_string());
    kv("ensemble.n_z", n.n_z.to_string());
    kv("ensemble.dt_ns", n.dt.to_string());
    kv("ensemble.memory_lifetime_ns", n.memory_lifetime.to_string());
    for (name, p, rabi) in [("signal", &e.signal, false), ("control_in", &e.control_in, true), ("control_out", &e.control_out, true)] {
        kv(&format!("{name}.shape"), p.shape.as_str().to_string());
        kv(&format!("{name}.fwhm_ns"), p.fwhm.to_string());
        kv(&format!("{name}.center_ns"), p.center.to_string());
        if rabi {
            kv(&format!("{name}.peak_mhz"), to_mhz(p.peak_amplitude).to_string());
        } else {
            kv(&format!("{name}.peak"), p.peak_amplitude.to_string());
        }
    }
    kv("protocol.storage_time_ns", e.storage_time.to_string());
    out
}
