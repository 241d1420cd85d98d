//! Counts files for `lmem analyze`: `counts.<field> = value` lines.

use lambda_memory::analytics::{CountsRecord, Systematics};
use lambda_memory::config::Assignment;
use lambda_memory::Error;

/// A complete analysis input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisInput {
    pub record: CountsRecord,
    pub g2_noise: f64,
    pub lifetime_ns: f64,
    pub bandwidth_mhz: f64,
}

const REQUIRED: [&str; 7] = ["n_herald", "n_ret", "n_noise_tot", "n_noise_mem", "eta_h", "eta_det", "g2_input"];

pub fn parse_counts(assignments: &[Assignment]) -> Result<AnalysisInput, Error> {
    let mut counts = [None::<u64>; 4];
    let mut reals = [None::<f64>; 3];
    let sys = Systematics::default();
    let mut input = AnalysisInput {
        record: CountsRecord {
            n_herald: 0,
            n_ret: 0,
            n_noise_tot: 0,
            n_noise_mem: 0,
            eta_h: 0.0,
            eta_det: 0.0,
            g2_input: 0.0,
            systematics: sys,
        },
        g2_noise: 2.0,
        lifetime_ns: 680.0,
        bandwidth_mhz: 370.0,
    };
    let mut errors = Vec::new();
    for a in assignments {
        let field = a.key.strip_prefix("counts.").unwrap_or(&a.key);
        if let Some(i) = REQUIRED[..4].iter().position(|f| *f == field) {
            match a.value.parse::<u64>() {
                Ok(v) => counts[i] = Some(v),
                Err(_) => errors.push(format!("{}: `{}` is not a non-negative integer count", a.key, a.value)),
            }
            continue;
        }
        let value = match a.value.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                errors.push(format!("{}: `{}` is not a finite number", a.key, a.value));
                continue;
            }
        };
        match field {
            "eta_h" => reals[0] = Some(value),
            "eta_det" => reals[1] = Some(value),
            "g2_input" => reals[2] = Some(value),
            "g2_noise" => input.g2_noise = value,
            "eta_h_rel_sys" => input.record.systematics.eta_h_rel = value,
            "eta_det_rel_sys" => input.record.systematics.eta_det_rel = value,
            "g2_input_sigma" => input.record.systematics.g2_input_sigma = value,
            "lifetime_ns" => input.lifetime_ns = value,
            "bandwidth_mhz" => input.bandwidth_mhz = value,
            _ => errors.push(format!("{}: unknown field", a.key)),
        }
    }
    let missing: Vec<&str> = REQUIRED
        .iter()
        .zip(counts.iter().map(Option::is_some).chain(reals.iter().map(Option::is_some)))
        .filter(|(_, present)| !present)
        .map(|(name, _)| *name)
        .collect();
    if !missing.is_empty() {
        errors.push(format!("missing fields: {}", missing.join(", ")));
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors.join("; ")));
    }
    let r = &mut input.record;
    [r.n_herald, r.n_ret, r.n_noise_tot, r.n_noise_mem] = counts.map(Option::unwrap);
    [r.eta_h, r.eta_det, r.g2_input] = reals.map(Option::unwrap);
    r.validate()?;
    Ok(input)
}
