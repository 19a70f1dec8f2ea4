//! Request-arrival traces: piecewise-constant step profiles, a seeded
//! bursty generator built from a long diurnal trace compressed in time,
//! and two-column CSV ingestion.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Requests sent during one experiment.
pub const EXPERIMENT_REQUESTS: f64 = 1e6;
/// Experiment duration in seconds (two hours).
pub const EXPERIMENT_SECONDS: f64 = 7200.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    /// Start of the interval, seconds.
    pub t: f64,
    /// Mean arrival rate over `[t, t + spacing)`, requests per second.
    pub rate: f64,
}

/// Uniformly spaced arrival rates.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTrace {
    points: Vec<TracePoint>,
    spacing: f64,
}

impl WorkloadTrace {
    pub fn new(points: Vec<TracePoint>, spacing: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("trace", "no samples"));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(
                "spacing",
                format!("must be > 0, got {spacing}"),
            ));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.t.is_finite() {
                return Err(Error::invalid("t", format!("sample {i} is not finite")));
            }
            if !(p.rate.is_finite() && p.rate >= 0.0) {
                return Err(Error::invalid(
                    "rate",
                    format!("sample {i} (t = {}) has rate {}", p.t, p.rate),
                ));
            }
        }
        for (i, pair) in points.windows(2).enumerate() {
            let dt = pair[1].t - pair[0].t;
            if dt <= 0.0 {
                return Err(Error::invalid(
                    "t",
                    format!("timestamps not increasing at sample {}", i + 1),
                ));
            }
            if (dt - spacing).abs() > 1e-6 * spacing {
                return Err(Error::invalid(
                    "t",
                    format!("non-uniform spacing at sample {}: {dt} vs {spacing}", i + 1),
                ));
            }
        }
        Ok(WorkloadTrace { points, spacing })
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.rate)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.points.len() as f64 * self.spacing
    }

    pub fn total_requests(&self) -> f64 {
        self.rates().sum::<f64>() * self.spacing
    }

    /// Re-grids onto `spacing`, which must be an integer multiple or
    /// divisor of the current spacing. Totals are preserved.
    pub fn resample(&self, spacing: f64) -> Result<WorkloadTrace> {
        let ratio = self.spacing / spacing;
        if (ratio - 1.0).abs() < 1e-9 {
            return Ok(self.clone());
        }
        let t0 = self.points[0].t;
        if ratio > 1.0 {
            let k = ratio.round();
            if (ratio - k).abs() > 1e-6 {
                return Err(Error::invalid(
                    "spacing",
                    format!("{} is not a multiple of {spacing}", self.spacing),
                ));
            }
            let k = k as usize;
            let points = self
                .points
                .iter()
                .enumerate()
                .flat_map(|(i, p)| {
                    (0..k).map(move |j| TracePoint {
                        t: t0 + (i * k + j) as f64 * spacing,
                        rate: p.rate,
                    })
                })
                .collect();
            WorkloadTrace::new(points, spacing)
        } else {
            let inv = 1.0 / ratio;
            let k = inv.round();
            if (inv - k).abs() > 1e-6 {
                return Err(Error::invalid(
                    "spacing",
                    format!("{spacing} is not a multiple of {}", self.spacing),
                ));
            }
            let k = k as usize;
            if !self.points.len().is_multiple_of(k) {
                return Err(Error::invalid(
                    "spacing",
                    format!(
                        "duration {} is not a multiple of {spacing}",
                        self.duration()
                    ),
                ));
            }
            let points = self
                .points
                .chunks(k)
                .enumerate()
                .map(|(i, c)| TracePoint {
                    t: t0 + i as f64 * spacing,
                    rate: c.iter().map(|p| p.rate).sum::<f64>() / k as f64,
                })
                .collect();
            WorkloadTrace::new(points, spacing)
        }
    }
}

/// Piecewise-constant trace from `(duration_seconds, rate)` levels.
///
/// Each sample holds the mean rate over its interval, so level boundaries
/// need not fall on the grid; the total duration must.
pub fn step_trace(levels: &[(f64, f64)], spacing: f64) -> Result<WorkloadTrace> {
    if levels.is_empty() {
        return Err(Error::invalid("levels", "at least one level is required"));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::invalid(
            "spacing",
            format!("must be > 0, got {spacing}"),
        ));
    }
    for &(d, r) in levels {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::invalid(
                "levels",
                format!("duration {d} must be > 0"),
            ));
        }
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::invalid("levels", format!("rate {r} must be >= 0")));
        }
    }
    let total: f64 = levels.iter().map(|l| l.0).sum();
    let n = (total / spacing).round();
    if n < 1.0 || (n * spacing - total).abs() > 1e-6 * spacing {
        return Err(Error::invalid(
            "levels",
            format!("total duration {total} is not a multiple of spacing {spacing}"),
        ));
    }

    let mut bounds = Vec::with_capacity(levels.len());
    let mut acc = 0.0;
    for &(d, r) in levels {
        bounds.push((acc, acc + d, r));
        acc += d;
    }
    let points = (0..n as usize)
        .map(|i| {
            let a = i as f64 * spacing;
            let b = a + spacing;
            let mass: f64 = bounds
                .iter()
                .map(|&(lo, hi, r)| (hi.min(b) - lo.max(a)).max(0.0) * r)
                .sum();
            TracePoint {
                t: a,
                rate: mass / spacing,
            }
        })
        .collect();
    WorkloadTrace::new(points, spacing)
}

/// Scales every rate so the trace carries exactly `total` requests.
pub fn normalize_total(trace: &WorkloadTrace, total: f64) -> Result<WorkloadTrace> {
    if !(total.is_finite() && total >= 0.0) {
        return Err(Error::invalid(
            "total",
            format!("must be >= 0, got {total}"),
        ));
    }
    let current = trace.total_requests();
    if current <= 0.0 {
        return Err(Error::invalid(
            "trace",
            "cannot normalize a trace with no requests",
        ));
    }
    let scale = total / current;
    let points = trace
        .points
        .iter()
        .map(|p| TracePoint {
            t: p.t,
            rate: p.rate * scale,
        })
        .collect();
    WorkloadTrace::new(points, trace.spacing)
}

/// Plays `trace` `factor` times faster: timestamps divided, rates
/// multiplied, request total unchanged.
pub fn compress_trace(trace: &WorkloadTrace, factor: f64) -> Result<WorkloadTrace> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::invalid(
            "factor",
            format!("must be > 0, got {factor}"),
        ));
    }
    let points = trace
        .points
        .iter()
        .map(|p| TracePoint {
            t: p.t / factor,
            rate: p.rate * factor,
        })
        .collect();
    WorkloadTrace::new(points, trace.spacing / factor)
}

/// Relative step profile: eight 15-minute plateaus, low / medium / high /
/// medium / low.
pub fn default_step_levels() -> Vec<(f64, f64)> {
    [1.0, 3.0, 3.0, 6.0, 6.0, 3.0, 3.0, 1.0]
        .into_iter()
        .map(|r| (900.0, r))
        .collect()
}

/// The default step profile carrying one million requests over two hours.
pub fn default_step_trace(spacing: f64) -> Result<WorkloadTrace> {
    normalize_total(
        &step_trace(&default_step_levels(), spacing)?,
        EXPERIMENT_REQUESTS,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikyParams {
    /// Length of the uncompressed source trace, hours.
    pub source_hours: u32,
    /// Time compression applied to the source trace.
    pub compression: f64,
    /// Relative amplitude of the daily sinusoid.
    pub diurnal_amplitude: f64,
    pub bursts: u32,
    /// Burst height relative to the mean diurnal level, drawn uniformly.
    pub burst_amplitude: (f64, f64),
    /// Burst length in source hours, drawn uniformly (inclusive).
    pub burst_hours: (u32, u32),
    /// Multiplicative per-sample noise, uniform in `±jitter`.
    pub jitter: f64,
    pub total_requests: f64,
    /// Minimum peak-to-trough ratio of the generated trace.
    pub min_peak_to_trough: f64,
    /// The trace must grow by more than this factor within 300 s at least once.
    pub min_five_minute_growth: f64,
}

impl Default for SpikyParams {
    fn default() -> Self {
        SpikyParams {
            source_hours: 120,
            compression: 60.0,
            diurnal_amplitude: 0.3,
            bursts: 4,
            burst_amplitude: (1.5, 3.0),
            burst_hours: (12, 24),
            jitter: 0.03,
            total_requests: EXPERIMENT_REQUESTS,
            min_peak_to_trough: 5.0,
            min_five_minute_growth: 1.5,
        }
    }
}

const SPIKY_MAX_ATTEMPTS: usize = 256;

/// Seeded bursty trace: a diurnal baseline over `source_hours` with
/// rectangular bursts, compressed by `compression` onto a grid of
/// `spacing` seconds and normalized to `total_requests`.
///
/// Candidates failing the peak-to-trough or five-minute-growth checks are
/// discarded and redrawn from the same random stream.
pub fn spiky_trace(seed: u64, spacing: f64, params: &SpikyParams) -> Result<WorkloadTrace> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::invalid(
            "spacing",
            format!("must be > 0, got {spacing}"),
        ));
    }
    let p = params;
    if p.source_hours == 0 || !(p.compression.is_finite() && p.compression > 0.0) {
        return Err(Error::invalid(
            "params",
            "source_hours and compression must be > 0",
        ));
    }
    if p.burst_amplitude.0 > p.burst_amplitude.1
        || p.burst_hours.0 > p.burst_hours.1
        || p.burst_hours.0 == 0
        || !(0.0..1.0).contains(&p.diurnal_amplitude)
        || !(0.0..1.0).contains(&p.jitter)
    {
        return Err(Error::invalid(
            "params",
            "inconsistent burst or noise ranges",
        ));
    }

    let source_spacing = spacing * p.compression;
    let source_seconds = p.source_hours as f64 * 3600.0;
    let n = (source_seconds / source_spacing).round() as usize;
    if n < 2 {
        return Err(Error::invalid(
            "spacing",
            "source trace would have fewer than 2 samples",
        ));
    }
    let window = (300.0 / spacing).round().max(1.0) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SPIKY_MAX_ATTEMPTS {
        let mut rates: Vec<f64> = (0..n)
            .map(|i| {
                let hour = i as f64 * source_spacing / 3600.0;
                let phase = 2.0 * std::f64::consts::PI * (hour - 6.0) / 24.0;
                1.0 + p.diurnal_amplitude * phase.sin()
            })
            .collect();
        for _ in 0..p.bursts {
            let len_h = rng.gen_range(p.burst_hours.0..=p.burst_hours.1) as f64;
            let len = ((len_h * 3600.0 / source_spacing).round() as usize).max(1);
            let start = rng.gen_range(0..n);
            let amp = rng.gen_range(p.burst_amplitude.0..=p.burst_amplitude.1);
            for r in rates.iter_mut().skip(start).take(len) {
                *r += amp;
            }
        }
        for r in rates.iter_mut() {
            *r *= 1.0 + p.jitter * rng.gen_range(-1.0..=1.0);
        }

        let source = WorkloadTrace::new(
            rates
                .iter()
                .enumerate()
                .map(|(i, &rate)| TracePoint {
                    t: i as f64 * source_spacing,
                    rate,
                })
                .collect(),
            source_spacing,
        )?;
        let trace = normalize_total(&compress_trace(&source, p.compression)?, p.total_requests)?;
        let trace = snap_to_grid(trace, spacing)?;
        if peak_to_trough(&trace) >= p.min_peak_to_trough
            && max_growth(&trace, window) > p.min_five_minute_growth
        {
            return Ok(trace);
        }
    }
    Err(Error::invalid(
        "params",
        format!("no trace met the burst checks after {SPIKY_MAX_ATTEMPTS} draws"),
    ))
}

// Compression leaves timestamps like 3600/60 with rounding noise; put them
// back on exact multiples of `spacing`.
fn snap_to_grid(trace: WorkloadTrace, spacing: f64) -> Result<WorkloadTrace> {
    let points = trace
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| TracePoint {
            t: i as f64 * spacing,
            rate: p.rate,
        })
        .collect();
    WorkloadTrace::new(points, spacing)
}

/// Largest over smallest rate (infinite when the trough is zero).
pub fn peak_to_trough(trace: &WorkloadTrace) -> f64 {
    let max = trace.rates().fold(f64::NEG_INFINITY, f64::max);
    let min = trace.rates().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// `max_t rate(t + lag)/rate(t)` with `lag` counted in samples.
pub fn max_growth(trace: &WorkloadTrace, lag: usize) -> f64 {
    trace
        .points
        .iter()
        .zip(trace.points.iter().skip(lag))
        .filter(|(a, _)| a.rate > 0.0)
        .map(|(a, b)| b.rate / a.rate)
        .fold(0.0, f64::max)
}

/// Reads a `t_seconds,rate_rps` CSV. A header row is optional. Spacing is
/// taken from the timestamps; `single_row_spacing` is used when the file
/// has one row.
pub fn load_trace_csv(path: &Path, single_row_spacing: f64) -> Result<WorkloadTrace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut points = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let parse_err = |line: u64, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(idx as u64 + 1);
        if record.len() != 2 {
            return Err(parse_err(
                line,
                format!("expected 2 columns, found {}", record.len()),
            ));
        }
        let t = record[0].parse::<f64>();
        let rate = record[1].parse::<f64>();
        match (t, rate) {
            (Ok(t), Ok(rate)) => {
                if !(rate.is_finite() && rate >= 0.0) {
                    return Err(parse_err(line, format!("rate must be >= 0, got {rate}")));
                }
                if let Some(prev) = points.last().map(|p: &TracePoint| p.t) {
                    if t <= prev {
                        return Err(parse_err(
                            line,
                            format!("timestamp {t} does not increase (previous {prev})"),
                        ));
                    }
                }
                points.push(TracePoint { t, rate });
            }
            // a non-numeric first row is a header
            _ if idx == 0 => continue,
            _ => {
                return Err(parse_err(
                    line,
                    format!(
                        "cannot parse `{}` as numbers",
                        record.iter().collect::<Vec<_>>().join(",")
                    ),
                ))
            }
        }
    }
    let spacing = match points.as_slice() {
        [a, b, ..] => b.t - a.t,
        _ => single_row_spacing,
    };
    WorkloadTrace::new(points, spacing).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })
}

pub fn write_trace_csv(trace: &WorkloadTrace, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t_seconds,rate_rps")?;
    for p in &trace.points {
        writeln!(out, "{},{}", p.t, p.rate)?;
    }
    out.flush()?;
    Ok(())
}
