//! Run reports: what a coordinator records while serving requests.
//!
//! A report is plain data — per-request timings, per-stage arrivals, decode
//! actions, observed failures — produced by whichever transport ran the job
//! and consumed by the analytics in this crate.

use alloc::string::String;
use alloc::vec::Vec;

/// One subtraction-decode: which device's partial was reconstructed, from
/// which coded group, and how much work it took.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecodeEvent {
    pub request: u64,
    pub layer_id: u32,
    pub group: u32,
    pub recovered_device: u32,
    pub subtractions: u64,
}

/// When (virtual ms) a device's partial reached the coordinator; `None` if
/// it never did.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Arrival {
    pub device: u32,
    pub at_ms: Option<f64>,
    pub coded: bool,
}

/// One stage of one request.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageRecord {
    pub layer_id: u32,
    pub arrivals: Vec<Arrival>,
    /// When the stage's completion predicate was satisfied. Decode work, if
    /// any, is accounted separately in `decode_ms`.
    pub completed_at_ms: f64,
    pub decode_ms: f64,
    pub decode_events: Vec<DecodeEvent>,
    /// Partials that arrived after completion and were discarded.
    pub discarded_late: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RequestRecord {
    pub request: u64,
    pub latency_ms: f64,
    pub timed_out: bool,
    pub stages: Vec<StageRecord>,
    /// Devices that failed to deliver anything this request.
    pub failures_observed: Vec<u32>,
    /// Set when this request triggered a switch to a fallback allocation.
    pub fallback_switch: Option<String>,
}

/// Everything recorded over a run of sequential single-batch requests.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunReport {
    pub records: Vec<RequestRecord>,
}

impl RunReport {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Latencies of requests that completed (timeouts excluded).
    pub fn latencies_ms(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| !r.timed_out)
            .map(|r| r.latency_ms)
            .collect()
    }

    pub fn timeouts(&self) -> usize {
        self.records.iter().filter(|r| r.timed_out).count()
    }

    pub fn decode_event_count(&self) -> usize {
        self.records
            .iter()
            .flat_map(|r| &r.stages)
            .map(|s| s.decode_events.len())
            .sum()
    }

    /// First request index that switched allocations, if any.
    pub fn fallback_switch_at(&self) -> Option<usize> {
        self.records
            .iter()
            .position(|r| r.fallback_switch.is_some())
    }
}
