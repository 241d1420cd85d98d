//! Detector time-tag streams: parsing, arrival-time histograms, window counts
//! and heralded autocorrelation.

use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::Estimate;
use crate::error::{Error, Result};

/// Tagger clock granularity.
pub const TAGGER_RESOLUTION_PS: u64 = 81;
pub const DEFAULT_BIN_WIDTH_PS: u64 = 162;
/// 80 tagger bins.
pub const DEFAULT_WINDOW_WIDTH_PS: u64 = 6480;
const BINARY_RECORD_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTagEvent {
    pub timestamp_ps: u64,
    pub channel: u16,
}

impl TimeTagEvent {
    pub fn new(timestamp_ps: u64, channel: u16) -> Self {
        TimeTagEvent { timestamp_ps, channel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeTagFormat {
    /// `timestamp_ps,channel` per line, no header.
    TextCsv,
    /// 10-byte records: u64 LE timestamp, u16 LE channel.
    BinaryLe,
}

impl FromStr for TimeTagFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text_csv" | "csv" | "text" => Ok(TimeTagFormat::TextCsv),
            "binary_le" | "binary" | "bin" => Ok(TimeTagFormat::BinaryLe),
            other => Err(Error::Parse(format!("unknown time-tag format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTags {
    /// Merged stream ordered by timestamp; ties keep input order.
    pub events: Vec<TimeTagEvent>,
    /// Lines or records that could not be decoded.
    pub malformed: usize,
}

/// Reads a time-tag stream. A timestamp that steps back by more than
/// `tolerance_ps` relative to the previous event on its channel is an error;
/// smaller jitter is accepted and sorted out.
pub fn parse_timetags<R: Read>(source: R, format: TimeTagFormat, tolerance_ps: u64) -> Result<ParsedTags> {
    let mut parsed = match format {
        TimeTagFormat::TextCsv => parse_text(std::io::BufReader::new(source))?,
        TimeTagFormat::BinaryLe => parse_binary(source)?,
    };
    let mut last: std::collections::HashMap<u16, u64> = std::collections::HashMap::new();
    for (i, ev) in parsed.events.iter().enumerate() {
        if let Some(&prev) = last.get(&ev.channel) {
            if ev.timestamp_ps + tolerance_ps < prev {
                return Err(Error::Parse(format!(
                    "event {i}: channel {} timestamp {} precedes {} by more than {} ps",
                    ev.channel, ev.timestamp_ps, prev, tolerance_ps
                )));
            }
        }
        let entry = last.entry(ev.channel).or_insert(ev.timestamp_ps);
        *entry = (*entry).max(ev.timestamp_ps);
    }
    if parsed.malformed > 0 {
        warn!("skipped {} malformed time-tag record(s)", parsed.malformed);
    }
    parsed.events.sort_by_key(|e| e.timestamp_ps);
    Ok(parsed)
}

fn parse_text<R: BufRead>(reader: R) -> Result<ParsedTags> {
    let mut out = ParsedTags::default();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let event = match (fields.next(), fields.next(), fields.next()) {
            (Some(ts), Some(ch), None) => match (ts.trim().parse(), ch.trim().parse()) {
                (Ok(ts), Ok(ch)) => Some(TimeTagEvent::new(ts, ch)),
                _ => None,
            },
            _ => None,
        };
        match event {
            Some(ev) => out.events.push(ev),
            None => out.malformed += 1,
        }
    }
    Ok(out)
}

fn parse_binary<R: Read>(mut source: R) -> Result<ParsedTags> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes).map_err(|e| Error::Parse(e.to_string()))?;
    let chunks = bytes.chunks_exact(BINARY_RECORD_LEN);
    let malformed = usize::from(!chunks.remainder().is_empty());
    let events = chunks
        .map(|rec| {
            let ts = u64::from_le_bytes(rec[..8].try_into().expect("8-byte slice"));
            let ch = u16::from_le_bytes(rec[8..].try_into().expect("2-byte slice"));
            TimeTagEvent::new(ts, ch)
        })
        .collect();
    Ok(ParsedTags { events, malformed })
}

pub fn write_timetags<W: Write>(mut sink: W, events: &[TimeTagEvent], format: TimeTagFormat) -> std::io::Result<()> {
    match format {
        TimeTagFormat::TextCsv => {
            let mut w = std::io::BufWriter::new(sink);
            for ev in events {
                writeln!(w, "{},{}", ev.timestamp_ps, ev.channel)?;
            }
            w.flush()
        }
        TimeTagFormat::BinaryLe => {
            let mut buf = Vec::with_capacity(events.len() * BINARY_RECORD_LEN);
            for ev in events {
                buf.extend_from_slice(&ev.timestamp_ps.to_le_bytes());
                buf.extend_from_slice(&ev.channel.to_le_bytes());
            }
            sink.write_all(&buf)
        }
    }
}

/// Histogram of delays; bin `i` covers `[origin + i·w, origin + (i+1)·w)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ps: u64,
    pub origin_ps: u64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_start(&self, i: usize) -> u64 {
        self.origin_ps + i as u64 * self.bin_width_ps
    }

    pub fn end_ps(&self) -> u64 {
        self.bin_start(self.counts.len())
    }

    /// Merges groups of `factor` bins; a trailing partial group becomes one bin.
    pub fn rebin(&self, factor: usize) -> Result<Histogram> {
        if factor == 0 {
            return Err(Error::domain("rebin factor must be positive"));
        }
        Ok(Histogram {
            bin_width_ps: self.bin_width_ps * factor as u64,
            origin_ps: self.origin_ps,
            counts: self.counts.chunks(factor).map(|c| c.iter().sum()).collect(),
        })
    }

    /// Counts in every bin that overlaps `[start, start + width)`.
    pub fn window_counts(&self, start_ps: u64, width_ps: u64) -> Result<u64> {
        if width_ps == 0 {
            return Err(Error::domain("window width must be positive"));
        }
        let stop = start_ps.saturating_add(width_ps);
        Ok(self
            .counts
            .iter()
            .enumerate()
            .filter(|&(i, _)| self.bin_start(i) < stop && self.bin_start(i + 1) > start_ps)
            .map(|(_, c)| c)
            .sum())
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(sink);
        writeln!(w, "bin_start_ps,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.bin_start(i), c)?;
        }
        w.flush()
    }
}

fn channel_times(events: &[TimeTagEvent], channel: u16) -> Vec<u64> {
    let mut t: Vec<u64> = events.iter().filter(|e| e.channel == channel).map(|e| e.timestamp_ps).collect();
    t.sort_unstable();
    t
}

fn check_bin_width(bin_width_ps: u64) -> Result<()> {
    if bin_width_ps == 0 || bin_width_ps % TAGGER_RESOLUTION_PS != 0 {
        return Err(Error::domain(format!(
            "bin width {bin_width_ps} ps is not a positive multiple of {TAGGER_RESOLUTION_PS} ps"
        )));
    }
    Ok(())
}

/// Start-multi-stop delay histogram: every trigger pairs with every signal
/// event whose delay falls in `[origin, origin + range)`. The range is
/// rounded up to whole bins.
pub fn arrival_histogram(
    events: &[TimeTagEvent],
    trigger_ch: u16,
    signal_ch: u16,
    bin_width_ps: u64,
    origin_ps: u64,
    range_ps: u64,
) -> Result<Histogram> {
    check_bin_width(bin_width_ps)?;
    if range_ps == 0 {
        return Err(Error::domain("histogram range must be positive"));
    }
    let n_bins = range_ps.div_ceil(bin_width_ps) as usize;
    let mut hist = Histogram { bin_width_ps, origin_ps, counts: vec![0; n_bins] };
    let triggers = channel_times(events, trigger_ch);
    if triggers.is_empty() {
        warn!("no trigger events on channel {trigger_ch}; histogram is empty");
        return Ok(hist);
    }
    let span = hist.end_ps() - origin_ps;
    for s in channel_times(events, signal_ch) {
        // triggers with s - t in [origin, origin + span)
        let Some(hi) = s.checked_sub(origin_ps) else { continue };
        let lo = hi.saturating_sub(span - 1);
        let first = triggers.partition_point(|&t| t < lo);
        for &t in triggers[first..].iter().take_while(|&&t| t <= hi) {
            let delay = s - t - origin_ps;
            hist.counts[(delay / bin_width_ps) as usize] += 1;
        }
    }
    Ok(hist)
}

/// Events on `channel` with timestamp in `[start, start + width)`.
pub fn window_counts(events: &[TimeTagEvent], channel: u16, start_ps: u64, width_ps: u64) -> Result<u64> {
    if width_ps == 0 {
        return Err(Error::domain("window width must be positive"));
    }
    let stop = start_ps.saturating_add(width_ps);
    Ok(events
        .iter()
        .filter(|e| e.channel == channel && e.timestamp_ps >= start_ps && e.timestamp_ps < stop)
        .count() as u64)
}

/// Heralded HBT measurement: which heralds saw a detection on A and on B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HbtCounts {
    pub n_h: u64,
    pub n_ha: u64,
    pub n_hb: u64,
    pub n_hab: u64,
}

impl HbtCounts {
    /// g²_c = N_hAB·N_h / (N_hA·N_hB) with Poisson propagation.
    pub fn g2(&self) -> Result<Estimate> {
        if self.n_ha == 0 || self.n_hb == 0 {
            return Err(Error::UndefinedEstimate(format!(
                "conditional g2 needs detections on both arms (N_hA = {}, N_hB = {})",
                self.n_ha, self.n_hb
            )));
        }
        let (h, a, b, ab) = (self.n_h as f64, self.n_ha as f64, self.n_hb as f64, self.n_hab as f64);
        let value = ab * h / (a * b);
        let scale = h / (a * b);
        // an empty coincidence bin still carries a one-count uncertainty
        let stat = (scale * scale * ab.max(1.0) + value * value * (1.0 / a + 1.0 / b + 1.0 / h)).sqrt();
        Ok(Estimate::with_stat(value, stat))
    }
}

/// Coincidence window relative to each herald.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoincidenceWindow {
    pub width_ps: u64,
    /// Optional `(start, width)` gate, also relative to the herald.
    pub gate: Option<(u64, u64)>,
}

impl CoincidenceWindow {
    fn bounds(&self) -> Result<(u64, u64)> {
        if self.width_ps == 0 {
            return Err(Error::domain("coincidence window must be positive"));
        }
        let (mut lo, mut hi) = (0, self.width_ps);
        if let Some((start, width)) = self.gate {
            if width == 0 {
                return Err(Error::domain("gate width must be positive"));
            }
            lo = lo.max(start);
            hi = hi.min(start.saturating_add(width));
        }
        Ok((lo, hi))
    }
}

fn any_in(times: &[u64], lo: u64, hi: u64) -> bool {
    let i = times.partition_point(|&t| t < lo);
    i < times.len() && times[i] < hi
}

/// Per-herald detection flags `(A, B)`.
fn herald_flags(
    events: &[TimeTagEvent],
    herald_ch: u16,
    ch_a: u16,
    ch_b: u16,
    window: CoincidenceWindow,
) -> Result<Vec<(bool, bool)>> {
    if herald_ch == ch_a || herald_ch == ch_b || ch_a == ch_b {
        return Err(Error::domain("herald and HBT channels must be distinct"));
    }
    let (lo, hi) = window.bounds()?;
    let a = channel_times(events, ch_a);
    let b = channel_times(events, ch_b);
    Ok(channel_times(events, herald_ch)
        .into_iter()
        .map(|h| {
            if lo >= hi {
                return (false, false);
            }
            let (s, e) = (h.saturating_add(lo), h.saturating_add(hi));
            (any_in(&a, s, e), any_in(&b, s, e))
        })
        .collect())
}

fn tally(flags: impl Iterator<Item = (bool, bool)>) -> HbtCounts {
    let mut c = HbtCounts::default();
    for (a, b) in flags {
        c.n_h += 1;
        c.n_ha += u64::from(a);
        c.n_hb += u64::from(b);
        c.n_hab += u64::from(a && b);
    }
    c
}

pub fn hbt_counts(
    events: &[TimeTagEvent],
    herald_ch: u16,
    ch_a: u16,
    ch_b: u16,
    window: CoincidenceWindow,
) -> Result<HbtCounts> {
    Ok(tally(herald_flags(events, herald_ch, ch_a, ch_b, window)?.into_iter()))
}

/// Heralded second-order autocorrelation between arms A and B.
pub fn conditional_g2(
    events: &[TimeTagEvent],
    herald_ch: u16,
    ch_a: u16,
    ch_b: u16,
    window: CoincidenceWindow,
) -> Result<Estimate> {
    hbt_counts(events, herald_ch, ch_a, ch_b, window)?.g2()
}

/// Bootstrap standard deviation of g²_c from resampling heralds. Resamples
/// with an undefined estimate are skipped.
pub fn bootstrap_g2(
    events: &[TimeTagEvent],
    herald_ch: u16,
    ch_a: u16,
    ch_b: u16,
    window: CoincidenceWindow,
    n_resamples: usize,
    seed: u64,
) -> Result<f64> {
    let flags = herald_flags(events, herald_ch, ch_a, ch_b, window)?;
    if flags.is_empty() || n_resamples < 2 {
        return Err(Error::UndefinedEstimate("bootstrap needs heralds and at least 2 resamples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let sample = (0..flags.len()).map(|_| flags[rng.random_range(0..flags.len())]);
        if let Ok(g) = tally(sample).g2() {
            values.push(g.value);
        }
    }
    if values.len() < 2 {
        return Err(Error::UndefinedEstimate("too few defined bootstrap resamples".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_and_malformed_lines() {
        let text = "10,0\n20,1\n\n30,2\nbogus\n40\n";
        let parsed = parse_timetags(text.as_bytes(), TimeTagFormat::TextCsv, 0).unwrap();
        assert_eq!(
            parsed.events,
            vec![TimeTagEvent::new(10, 0), TimeTagEvent::new(20, 1), TimeTagEvent::new(30, 2)]
        );
        assert_eq!(parsed.malformed, 2);
        assert!(parse_timetags(&b""[..], TimeTagFormat::TextCsv, 0).unwrap().events.is_empty());
    }

    #[test]
    fn monotonicity_tolerance() {
        let text = "100,1\n95,1\n";
        assert!(parse_timetags(text.as_bytes(), TimeTagFormat::TextCsv, 0).is_err());
        let ok = parse_timetags(text.as_bytes(), TimeTagFormat::TextCsv, 10).unwrap();
        assert_eq!(ok.events[0].timestamp_ps, 95);
        // other channels are independent
        let mixed = "100,1\n50,2\n";
        assert_eq!(parse_timetags(mixed.as_bytes(), TimeTagFormat::TextCsv, 0).unwrap().events.len(), 2);
    }

    #[test]
    fn binary_truncated_record_is_counted() {
        let mut buf = Vec::new();
        write_timetags(&mut buf, &[TimeTagEvent::new(7, 3)], TimeTagFormat::BinaryLe).unwrap();
        buf.extend_from_slice(&[1, 2, 3]);
        let parsed = parse_timetags(buf.as_slice(), TimeTagFormat::BinaryLe, 0).unwrap();
        assert_eq!(parsed.events, vec![TimeTagEvent::new(7, 3)]);
        assert_eq!(parsed.malformed, 1);
        assert!("hdf5".parse::<TimeTagFormat>().is_err());
    }

    #[test]
    fn constructed_arrival_histogram() {
        let mut events = vec![TimeTagEvent::new(0, 0)];
        events.extend((0..10).map(|k| TimeTagEvent::new(160_000 + k * 162, 1)));
        let h = arrival_histogram(&events, 0, 1, 162, 0, 400_000).unwrap();
        let nonzero: Vec<usize> = (0..h.counts.len()).filter(|&i| h.counts[i] > 0).collect();
        assert_eq!(nonzero.len(), 10);
        assert!(nonzero.windows(2).all(|w| w[1] == w[0] + 1));
        assert_eq!(h.bin_start(nonzero[0]), 160_000 / 162 * 162);
        assert_eq!(h.window_counts(160_000, DEFAULT_WINDOW_WIDTH_PS).unwrap(), 10);
        assert_eq!(h.window_counts(0, h.end_ps()).unwrap(), 10);
        assert!(h.window_counts(0, 0).is_err());
    }

    #[test]
    fn histogram_edge_cases() {
        let only_triggers = [TimeTagEvent::new(0, 0), TimeTagEvent::new(1000, 0)];
        let h = arrival_histogram(&only_triggers, 0, 1, 162, 0, 10_000).unwrap();
        assert_eq!(h.total(), 0);
        let no_triggers = [TimeTagEvent::new(0, 1)];
        assert_eq!(arrival_histogram(&no_triggers, 0, 1, 162, 0, 10_000).unwrap().total(), 0);
        assert!(arrival_histogram(&no_triggers, 0, 1, 100, 0, 10_000).is_err());
    }

    #[test]
    fn rebinning_preserves_counts() {
        let h = Histogram { bin_width_ps: 81, origin_ps: 0, counts: vec![1, 2, 3, 4, 5] };
        let r = h.rebin(2).unwrap();
        assert_eq!(r.counts, vec![3, 7, 5]);
        assert_eq!(r.bin_width_ps, 162);
        assert_eq!(r.total(), h.total());
    }

    #[test]
    fn event_window_counts() {
        let ev = [TimeTagEvent::new(5, 1), TimeTagEvent::new(10, 1), TimeTagEvent::new(10, 2)];
        assert_eq!(window_counts(&ev, 1, 5, 5).unwrap(), 1);
        assert_eq!(window_counts(&ev, 1, 0, 100).unwrap(), 2);
        assert!(window_counts(&ev, 1, 0, 0).is_err());
    }

    #[test]
    fn g2_requires_detections_and_distinct_channels() {
        let w = CoincidenceWindow { width_ps: 100, gate: None };
        let ev = [TimeTagEvent::new(0, 0), TimeTagEvent::new(10, 1)];
        assert!(matches!(conditional_g2(&ev, 0, 1, 2, w), Err(Error::UndefinedEstimate(_))));
        assert!(conditional_g2(&ev, 0, 1, 1, w).is_err());
    }

    #[test]
    fn gate_restricts_the_window() {
        let ev = [
            TimeTagEvent::new(0, 0),
            TimeTagEvent::new(10, 1),
            TimeTagEvent::new(50, 2),
            TimeTagEvent::new(1000, 0),
            TimeTagEvent::new(1060, 1),
            TimeTagEvent::new(1070, 2),
        ];
        let open = hbt_counts(&ev, 0, 1, 2, CoincidenceWindow { width_ps: 100, gate: None }).unwrap();
        assert_eq!(open, HbtCounts { n_h: 2, n_ha: 2, n_hb: 2, n_hab: 2 });
        let gated = hbt_counts(&ev, 0, 1, 2, CoincidenceWindow { width_ps: 100, gate: Some((40, 100)) }).unwrap();
        assert_eq!(gated, HbtCounts { n_h: 2, n_ha: 1, n_hb: 2, n_hab: 1 });
    }
}
