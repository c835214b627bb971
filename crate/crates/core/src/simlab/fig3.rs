use std::fmt::Write as _;

use super::config::{RunConfig, StimulusSchedule};
use super::session::{MetricsLog, Session, SessionError};
use super::world::Overlay;
use crate::ids::Millis;

/// Average reward summed over repetitions, binned from stimulus onset.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve {
    pub bin_ms: u64,
    pub sums: Vec<f64>,
}

impl ResponseCurve {
    /// Start of the bin with the largest sum (first one on ties).
    pub fn peak_ms(&self) -> u64 {
        let mut best = 0;
        for (i, &v) in self.sums.iter().enumerate() {
            if v > self.sums[best] {
                best = i;
            }
        }
        best as u64 * self.bin_ms
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_ms,sum_R\n");
        for (i, v) in self.sums.iter().enumerate() {
            let _ = writeln!(out, "{},{:.12}", i as u64 * self.bin_ms, v);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Fig3Result {
    pub curve: ResponseCurve,
    pub peak_ms: u64,
    pub log: MetricsLog,
}

/// Learn undisturbed through the warmup, then repeatedly overlay a strong
/// signal on the visual field while learning continues, and collect the
/// average reward relative to each onset.
pub fn fig3_experiment(cfg: &RunConfig, schedule: &StimulusSchedule) -> Result<Fig3Result, SessionError> {
    let mut session = Session::new(cfg)?;
    let onsets: Vec<Millis> = schedule.onsets().collect();
    for &t in &onsets {
        session.inject(Overlay {
            start: t,
            end: t + schedule.stimulus_ms,
            cells: schedule.cells.clone(),
            magnitude: schedule.magnitude,
        });
    }
    let bins = schedule.bins();
    let mut sums = vec![0.0; bins];
    session.run_until(schedule.warmup_ms.saturating_sub(1))?;
    for &onset in &onsets {
        for (b, sum) in sums.iter_mut().enumerate() {
            session.run_until(onset + b as u64 * schedule.bin_ms)?;
            *sum += session.reward();
        }
    }
    session.run_until(schedule.total_ms())?;
    let curve = ResponseCurve {
        bin_ms: schedule.bin_ms,
        sums,
    };
    Ok(Fig3Result {
        peak_ms: curve.peak_ms(),
        curve,
        log: session.finish(),
    })
}
