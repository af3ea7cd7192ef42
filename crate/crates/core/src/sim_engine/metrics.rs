//! Per-packet records, pooled statistics and requirement checks.

use crate::latency_engine::LatencyBreakdown;
use crate::time::{Ticks, TICKS_PER_MS};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketDisposition {
    Delivered,
    DroppedAtTx,
    DeliveryFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacketRecord {
    pub vehicle: u32,
    pub packet: u64,
    pub generated: Ticks,
    pub ul: Option<LatencyBreakdown>,
    pub dl: Vec<LatencyBreakdown>,
    /// UL total plus the slowest DL leg; `None` unless delivered.
    pub l_radio: Option<Ticks>,
    pub disposition: PacketDisposition,
}

/// Raw output of one replication, restricted to the measurement window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplicationOutput {
    /// l_radio of delivered packets, in ticks.
    pub latencies: Vec<u32>,
    pub ul_total: u64,
    pub dl_total: u64,
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub failed: u64,
    pub infeasible: u64,
    pub utilization_ul: f64,
    pub utilization_dl: f64,
    pub records: Vec<PacketRecord>,
}

impl ReplicationOutput {
    pub fn mean_latency_ms(&self) -> f64 {
        if self.latencies.is_empty() {
            return f64::NAN;
        }
        let sum: u64 = self.latencies.iter().map(|&t| t as u64).sum();
        sum as f64 / self.latencies.len() as f64 / TICKS_PER_MS as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Service {
    #[serde(rename = "LLoA")]
    Lloa,
    #[serde(rename = "HLoA")]
    Hloa,
}

impl Service {
    pub fn budget_ms(self) -> f64 {
        match self {
            Service::Lloa => 23.0,
            Service::Hloa => 6.0,
        }
    }

    pub fn quantile(self) -> f64 {
        match self {
            Service::Lloa => 0.90,
            Service::Hloa => 0.9999,
        }
    }
}

impl fmt::Display for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Service::Lloa => "LLoA",
            Service::Hloa => "HLoA",
        })
    }
}

/// Nearest-rank percentile over `sorted` finite samples plus `infinite`
/// samples at +inf. `None` means the percentile is infinite.
pub fn percentile(sorted: &[u32], infinite: u64, q: f64) -> Option<u32> {
    let n = sorted.len() as u64 + infinite;
    if n == 0 {
        return None;
    }
    const SCALE: u64 = 1_000_000;
    let q_scaled = (q * SCALE as f64).round() as u64;
    let rank = (q_scaled as u128 * n as u128).div_ceil(SCALE as u128).max(1) as u64;
    sorted.get(rank as usize - 1).copied()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub replications: u32,
    pub packets: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub failed: u64,
    pub infeasible_packets: u64,
    /// Over delivered packets only.
    pub mean_l_radio_ms: f64,
    pub mean_ul_ms: f64,
    pub mean_dl_ms: f64,
    /// `None` is an infinite percentile (too many drops).
    pub p90_ms: Option<f64>,
    pub p9999_ms: Option<f64>,
    /// Share of delivered + dropped packets lost at the transmitter.
    pub drop_fraction: f64,
    /// Share of generated packets lost to residual errors.
    pub failure_fraction: f64,
    pub fraction_within_lloa: f64,
    pub fraction_within_hloa: f64,
    pub rb_utilization_ul: f64,
    pub rb_utilization_dl: f64,
    pub lloa_pass: bool,
    pub hloa_pass: bool,
    pub ci_half_width_ms: f64,
    pub ci_relative_error: f64,
}

impl MetricsReport {
    pub fn latency_at_percentile(&self, q: f64) -> Option<f64> {
        if (q - 0.90).abs() < 1e-12 {
            self.p90_ms
        } else if (q - 0.9999).abs() < 1e-12 {
            self.p9999_ms
        } else {
            None
        }
    }
}

/// 95% confidence half-width over replication means.
pub fn ci_half_width(means: &[f64]) -> f64 {
    let r = means.len();
    if r < 2 {
        return f64::INFINITY;
    }
    let mean = means.iter().sum::<f64>() / r as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (r - 1) as f64).expect("dof >= 1").inverse_cdf(0.975);
    t * (var / r as f64).sqrt()
}

fn to_ms(t: u32) -> f64 {
    t as f64 / TICKS_PER_MS as f64
}

/// Pools packet-level samples across replications.
pub fn aggregate(reps: &[ReplicationOutput]) -> MetricsReport {
    let mut all: Vec<u32> = reps.iter().flat_map(|r| r.latencies.iter().copied()).collect();
    all.sort_unstable();
    let sum = |f: fn(&ReplicationOutput) -> u64| reps.iter().map(f).sum::<u64>();
    let (generated, delivered, dropped, failed) =
        (sum(|r| r.generated), sum(|r| r.delivered), sum(|r| r.dropped), sum(|r| r.failed));
    let ticks_sum: u64 = all.iter().map(|&t| t as u64).sum();
    let per_delivered = |total: u64| {
        if delivered == 0 {
            f64::NAN
        } else {
            total as f64 / delivered as f64 / TICKS_PER_MS as f64
        }
    };
    let mean = per_delivered(ticks_sum);
    let population = delivered + dropped;
    let within = |budget_ms: f64| {
        if population == 0 {
            return 0.0;
        }
        let limit = (budget_ms * TICKS_PER_MS as f64).round() as u32;
        all.partition_point(|&t| t <= limit) as f64 / population as f64
    };
    let p90 = percentile(&all, dropped, 0.90).map(to_ms);
    let p9999 = percentile(&all, dropped, 0.9999).map(to_ms);
    let means: Vec<f64> = reps.iter().map(|r| r.mean_latency_ms()).filter(|m| m.is_finite()).collect();
    let half = if reps.len() == 1 { 0.0 } else { ci_half_width(&means) };
    let avg = |f: fn(&ReplicationOutput) -> f64| reps.iter().map(f).sum::<f64>() / reps.len().max(1) as f64;
    MetricsReport {
        replications: reps.len() as u32,
        packets: generated,
        delivered,
        dropped,
        failed,
        infeasible_packets: sum(|r| r.infeasible),
        mean_l_radio_ms: mean,
        mean_ul_ms: per_delivered(sum(|r| r.ul_total)),
        mean_dl_ms: per_delivered(sum(|r| r.dl_total)),
        p90_ms: p90,
        p9999_ms: p9999,
        drop_fraction: if population == 0 { 0.0 } else { dropped as f64 / population as f64 },
        failure_fraction: if generated == 0 { 0.0 } else { failed as f64 / generated as f64 },
        fraction_within_lloa: within(Service::Lloa.budget_ms()),
        fraction_within_hloa: within(Service::Hloa.budget_ms()),
        rb_utilization_ul: avg(|r| r.utilization_ul),
        rb_utilization_dl: avg(|r| r.utilization_dl),
        lloa_pass: p90.is_some_and(|p| p <= Service::Lloa.budget_ms()),
        hloa_pass: p9999.is_some_and(|p| p <= Service::Hloa.budget_ms()),
        ci_half_width_ms: half,
        ci_relative_error: if mean > 0.0 { half / mean } else { f64::INFINITY },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RequirementCheck {
    pub service: Service,
    pub pass: bool,
    pub percentile_ms: Option<f64>,
    pub budget_ms: f64,
    /// Budget minus percentile; `None` when the percentile is infinite.
    pub margin_ms: Option<f64>,
}

pub fn check_requirement(report: &MetricsReport, service: Service) -> RequirementCheck {
    let p = match service {
        Service::Lloa => report.p90_ms,
        Service::Hloa => report.p9999_ms,
    };
    let budget = service.budget_ms();
    RequirementCheck {
        service,
        pass: p.is_some_and(|v| v <= budget),
        percentile_ms: p,
        budget_ms: budget,
        margin_ms: p.map(|v| budget - v),
    }
}
