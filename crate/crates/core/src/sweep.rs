//! Parameter sweeps with per-point optimization of the control timing.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{apply_assignments, Assignment};
use crate::ensemble::ensemble_run;
use crate::error::{Error, Result};
use crate::model::{mhz, Experiment};

pub const COARSE_STEP_NS: f64 = 0.25;
pub const REFINE_TOLERANCE_NS: f64 = 0.01;
pub const CSV_HEADER: &str = "axis,value,eta_internal,eta_storage,best_offset_ns,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Peak control Rabi frequency of both pulses, MHz.
    RabiPeak,
    /// MHz
    TwoPhotonDetuning,
    /// µm
    ControlWaist,
    /// ns
    StorageTime,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::RabiPeak => "rabi_peak",
            SweepAxis::TwoPhotonDetuning => "two_photon_detuning",
            SweepAxis::ControlWaist => "control_waist",
            SweepAxis::StorageTime => "storage_time",
        }
    }

    /// Sets the axis parameter of `e` to `value` (axis units).
    pub fn apply(self, e: &mut Experiment, value: f64) {
        match self {
            SweepAxis::RabiPeak => {
                e.control_in.peak_amplitude = mhz(value);
                e.control_out.peak_amplitude = mhz(value);
            }
            SweepAxis::TwoPhotonDetuning => e.scheme.delta_twophoton = mhz(value),
            SweepAxis::ControlWaist => e.ensemble.control_waist = value,
            SweepAxis::StorageTime => e.storage_time = value,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rabi_peak" => Ok(SweepAxis::RabiPeak),
            "two_photon_detuning" => Ok(SweepAxis::TwoPhotonDetuning),
            "control_waist" => Ok(SweepAxis::ControlWaist),
            "storage_time" => Ok(SweepAxis::StorageTime),
            other => Err(Error::config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Applied to the base configuration before the axis value.
    pub overrides: Vec<Assignment>,
    pub align: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep has no values"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep values must be finite"));
        }
        let rising = self.values.windows(2).all(|w| w[1] > w[0]);
        let falling = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(rising || falling) {
            return Err(Error::config("sweep values must be strictly monotone"));
        }
        Ok(())
    }

    /// Reads `sweep.axis`, `sweep.values` (comma separated) and `sweep.align`;
    /// any other key is an override of the base configuration.
    pub fn from_assignments(assignments: &[Assignment]) -> Result<Self> {
        let mut axis = None;
        let mut values = None;
        let mut align = true;
        let mut overrides = Vec::new();
        for a in assignments {
            match a.key.as_str() {
                "sweep.axis" => axis = Some(a.value.parse::<SweepAxis>()?),
                "sweep.values" => {
                    let parsed: std::result::Result<Vec<f64>, _> =
                        a.value.split(',').map(|v| v.trim().parse::<f64>()).collect();
                    values = Some(parsed.map_err(|_| {
                        Error::config(format!("sweep.values (line {}): not a list of numbers", a.line))
                    })?);
                }
                "sweep.align" => {
                    align = a.value.parse().map_err(|_| {
                        Error::config(format!("sweep.align (line {}): expected true or false", a.line))
                    })?
                }
                _ => overrides.push(a.clone()),
            }
        }
        let missing: Vec<&str> = [("sweep.axis", axis.is_none()), ("sweep.values", values.is_none())]
            .iter()
            .filter(|(_, m)| *m)
            .map(|(k, _)| *k)
            .collect();
        if !missing.is_empty() {
            return Err(Error::config(format!("sweep spec is missing {}", missing.join(", "))));
        }
        let spec = SweepSpec { axis: axis.unwrap(), values: values.unwrap(), overrides, align };
        spec.validate()?;
        Ok(spec)
    }

    /// The experiment evaluated at one axis value.
    pub fn point(&self, base: &Experiment, value: f64) -> Result<Experiment> {
        let mut e = apply_assignments(base, &self.overrides)?;
        self.axis.apply(&mut e, value);
        e.validate()?;
        Ok(e)
    }
}

/// Best read-in control timing relative to the configured one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub offset: f64,
    pub value: f64,
    /// The objective vanished everywhere on the coarse scan.
    pub flat: bool,
}

/// Maximizes `objective(offset)` on `[-half_range, half_range]`: a scan on a
/// `COARSE_STEP_NS` grid through zero, then golden-section refinement around
/// the best grid point down to `REFINE_TOLERANCE_NS`. The result is never
/// worse than the best grid point.
pub fn maximize_offset<F>(objective: F, half_range: f64) -> Result<Alignment>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if !(half_range >= 0.0) || !half_range.is_finite() {
        return Err(Error::domain("alignment range must be finite and non-negative"));
    }
    let k_max = (half_range / COARSE_STEP_NS + 1e-9).floor() as i64;
    let grid: Vec<f64> = (-k_max..=k_max).map(|k| k as f64 * COARSE_STEP_NS).collect();
    let values = grid
        .par_iter()
        .map(|&x| objective(x))
        .collect::<Result<Vec<f64>>>()?;
    let (best_i, &best) = values
        .iter()
        .enumerate()
        .fold((k_max as usize, &values[k_max as usize]), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    if !(best > 0.0) {
        warn!("alignment objective is zero over the whole scan; keeping offset 0");
        return Ok(Alignment { offset: 0.0, value: values[k_max as usize], flat: true });
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (grid[best_i] - COARSE_STEP_NS, grid[best_i] + COARSE_STEP_NS);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    while b - a > REFINE_TOLERANCE_NS {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2)?;
        }
    }
    let (x, f) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    Ok(if f >= best {
        Alignment { offset: x, value: f, flat: false }
    } else {
        Alignment { offset: grid[best_i], value: best, flat: false }
    })
}

/// Read-in and read-out controls shifted by `offset` from their configured
/// centers.
pub fn with_offset(e: &Experiment, offset: f64) -> Experiment {
    let mut shifted = *e;
    shifted.control_in.center += offset;
    shifted.control_out.center += offset;
    shifted
}

/// Scan half-range for an experiment: twice the summed pulse widths.
pub fn alignment_range(e: &Experiment) -> f64 {
    2.0 * (e.signal.fwhm + e.control_in.fwhm)
}

/// Optimizes the control timing of `e` for the internal efficiency.
pub fn optimize_alignment(e: &Experiment) -> Result<Alignment> {
    e.validate()?;
    maximize_offset(|x| Ok(ensemble_run(&with_offset(e, x))?.eta_internal), alignment_range(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RowStatus {
    Ok,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub eta_internal: f64,
    pub eta_storage: f64,
    pub best_offset: f64,
    pub status: RowStatus,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }

    pub fn to_csv(&self) -> String {
        let status = match &self.status {
            RowStatus::Ok => "ok".to_string(),
            RowStatus::Error(msg) => format!("error: {}", msg.replace([',', '\n', '\r'], ";")),
        };
        format!(
            "{},{},{},{},{},{}",
            self.axis, self.value, self.eta_internal, self.eta_storage, self.best_offset, status
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.splitn(6, ',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse(format!("sweep row `{line}` has {} fields", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}` in sweep row")));
        let status = match fields[5] {
            "ok" => RowStatus::Ok,
            other => RowStatus::Error(other.trim_start_matches("error: ").to_string()),
        };
        Ok(SweepRow {
            axis: fields[0].parse()?,
            value: num(fields[1])?,
            eta_internal: num(fields[2])?,
            eta_storage: num(fields[3])?,
            best_offset: num(fields[4])?,
            status,
        })
    }
}

fn evaluate_point(spec: &SweepSpec, base: &Experiment, value: f64) -> Result<SweepRow> {
    let e = spec.point(base, value)?;
    let offset = if spec.align { optimize_alignment(&e)?.offset } else { 0.0 };
    let r = ensemble_run(&with_offset(&e, offset))?;
    Ok(SweepRow {
        axis: spec.axis,
        value,
        eta_internal: r.eta_internal,
        eta_storage: r.eta_storage,
        best_offset: offset,
        status: RowStatus::Ok,
    })
}

/// Evaluates every sweep point; rows keep the order of `spec.values`. Points
/// that fail become error rows.
pub fn run_sweep(spec: &SweepSpec, base: &Experiment) -> Result<Vec<SweepRow>> {
    run_sweep_resuming(spec, base, &[])
}

/// Like [`run_sweep`], reusing successful rows of `previous` whose axis and
/// value match a sweep point.
pub fn run_sweep_resuming(spec: &SweepSpec, base: &Experiment, previous: &[SweepRow]) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    // configuration errors are common to all points
    spec.point(base, spec.values[0])?;
    Ok(spec
        .values
        .par_iter()
        .map(|&value| {
            if let Some(done) = previous.iter().find(|r| r.is_ok() && r.axis == spec.axis && r.value == value) {
                return done.clone();
            }
            evaluate_point(spec, base, value).unwrap_or_else(|err| {
                warn!("sweep point {}={value} failed: {err}", spec.axis);
                SweepRow {
                    axis: spec.axis,
                    value,
                    eta_internal: f64::NAN,
                    eta_storage: f64::NAN,
                    best_offset: f64::NAN,
                    status: RowStatus::Error(err.to_string()),
                }
            })
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    w.flush()
}

/// Reads rows written by [`write_sweep_csv`]; truncated trailing lines are
/// skipped.
pub fn read_sweep_csv<R: BufRead>(r: R) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if i == 0 {
            if line.trim() != CSV_HEADER {
                return Err(Error::Parse("sweep file has an unexpected header".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        match SweepRow::from_csv(&line) {
            Ok(row) => rows.push(row),
            Err(err) => warn!("ignoring unreadable sweep row {}: {err}", i + 1),
        }
    }
    Ok(rows)
}
