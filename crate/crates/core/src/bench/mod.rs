//! Desk-scale benchmarks: memory vs disk bag I/O, runtime scaling, and a
//! cluster-size calculator.

pub mod cache;
pub mod report;
pub mod scale;

use std::io;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::bag::BagError;
use crate::runtime::RuntimeError;
use crate::store::StoreError;

pub use cache::{
    compare_backends, run_cache_bench, run_cache_bench_pooled, Backend, BufferPool,
    CacheBenchConfig, CacheTimes, CompareConfig, Phase, Workload, WorkloadSpec,
};
pub use report::{BenchReport, CacheRow, ReportParseError, ScaleReport, ScaleRow};
pub use scale::{run_scale_bench, ScaleBenchConfig};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("empty benchmark: {0}")]
    Empty(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient {resource}: need {needed} bytes, {available} available")]
    Insufficient {
        resource: &'static str,
        needed: u64,
        available: u64,
    },
    #[error(transparent)]
    Bag(#[from] BagError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Hours a workload takes on `workers` machines running at `efficiency`.
pub fn estimate_cluster_hours(
    single_machine_hours: f64,
    workers: u64,
    efficiency: f64,
) -> Result<f64, BenchError> {
    if !(single_machine_hours.is_finite() && single_machine_hours >= 0.0) {
        return Err(BenchError::InvalidParameter(format!(
            "hours must be finite and non-negative, got {single_machine_hours}"
        )));
    }
    if workers == 0 {
        return Err(BenchError::InvalidParameter(
            "workers must be at least 1".into(),
        ));
    }
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(BenchError::InvalidParameter(format!(
            "efficiency must be in (0, 1], got {efficiency}"
        )));
    }
    Ok(single_machine_hours / (workers as f64 * efficiency))
}

/// Architecture, OS, CPU count and host name, on one line.
pub fn machine_descriptor() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let host = std::fs::read_to_string("/proc/sys/kernel/hostname")
        .map(|h| h.trim().to_string())
        .unwrap_or_else(|_| "unknown".into());
    format!(
        "{}-{} cpus={cpus} host={host}",
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Sample standard deviation over mean; zero for fewer than two samples.
pub(crate) fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    var.sqrt() / mean
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_domain() {
        assert!(estimate_cluster_hours(10.0, 0, 0.5).is_err());
        assert!(estimate_cluster_hours(10.0, 1, 0.0).is_err());
        assert!(estimate_cluster_hours(10.0, 1, 1.5).is_err());
        assert!(estimate_cluster_hours(-1.0, 1, 1.0).is_err());
        assert!(estimate_cluster_hours(f64::NAN, 1, 1.0).is_err());
        assert_eq!(estimate_cluster_hours(42.5, 1, 1.0).unwrap(), 42.5);
    }

    #[test]
    fn median_and_cv() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(coefficient_of_variation(&[2.0, 2.0, 2.0]), 0.0);
        // mean 2, sample sd 1
        assert!((coefficient_of_variation(&[1.0, 2.0, 3.0]) - 0.5).abs() < 1e-12);
    }
}
