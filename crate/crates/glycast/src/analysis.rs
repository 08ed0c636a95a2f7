//! Descriptive statistics over patient logs: per-day entry counts,
//! per-hour histograms, meal-delay histograms and lagged
//! cross-correlation of binned event streams.

use serde::{Deserialize, Serialize};

use crate::data::{PatientLog, Stream};
use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StreamDailyStats {
    pub median: f64,
    pub mean: f64,
    pub std_dev: f64,
}

/// Per-stream statistics of entries per study day. Days run from the
/// first to the last event date inclusive; activity counts only
/// intervals with at least 10 steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DailyStats {
    pub n_days: usize,
    pub glucose: StreamDailyStats,
    pub carbs: StreamDailyStats,
    pub insulin: StreamDailyStats,
    pub active_intervals: StreamDailyStats,
}

fn stats_of_counts(counts: &[u32]) -> StreamDailyStats {
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
    let mut sorted: Vec<u32> = counts.to_vec();
    sorted.sort_unstable();
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2] as f64
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) as f64 / 2.0
    };
    StreamDailyStats { median, mean, std_dev: var.sqrt() }
}

pub fn entries_per_day(log: &PatientLog) -> Result<DailyStats> {
    let mut times: Vec<i64> = Vec::new();
    times.extend(log.glucose.iter().map(|e| e.t));
    times.extend(log.carbs.iter().map(|e| e.t));
    times.extend(log.insulin.iter().map(|e| e.t));
    times.extend(log.activity.iter().map(|e| e.start));
    let (first, last) = match (times.iter().min(), times.iter().max()) {
        (Some(&a), Some(&b)) => (log.local_day(a), log.local_day(b)),
        _ => return Err(Error::Evaluation("cannot compute daily stats of an empty log".into())),
    };
    let n_days = (last - first + 1) as usize;

    let count = |stream_times: Vec<i64>| -> Vec<u32> {
        let mut counts = vec![0u32; n_days];
        for t in stream_times {
            counts[(log.local_day(t) - first) as usize] += 1;
        }
        counts
    };
    Ok(DailyStats {
        n_days,
        glucose: stats_of_counts(&count(log.glucose.iter().map(|e| e.t).collect())),
        carbs: stats_of_counts(&count(log.carbs.iter().map(|e| e.t).collect())),
        insulin: stats_of_counts(&count(log.insulin.iter().map(|e| e.t).collect())),
        active_intervals: stats_of_counts(&count(
            log.activity.iter().filter(|a| a.steps >= 10).map(|a| a.start).collect(),
        )),
    })
}

/// 24 bins of (event count, value sum) keyed by local hour.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HourlyHistogram {
    pub stream: Stream,
    pub counts: [u32; 24],
    pub value_sums: [f64; 24],
}

pub fn hourly_histogram(log: &PatientLog, stream: Stream) -> HourlyHistogram {
    let mut hist = HourlyHistogram { stream, counts: [0; 24], value_sums: [0.0; 24] };
    let mut add = |t: i64, v: f64| {
        let hour = (log.seconds_of_day(t) / 3600) as usize;
        hist.counts[hour] += 1;
        hist.value_sums[hour] += v;
    };
    match stream {
        Stream::Glucose => log.glucose.iter().for_each(|e| add(e.t, e.value)),
        Stream::Carb => log.carbs.iter().for_each(|e| add(e.t, e.grams)),
        Stream::Insulin => log.insulin.iter().for_each(|e| add(e.t, e.units)),
        Stream::Activity => log.activity.iter().for_each(|e| add(e.start, e.steps as f64)),
    }
    hist
}

/// Minutes since the last / until the next glucose measurement around
/// each carbohydrate entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MealDelayEntry {
    pub carb_t: i64,
    /// Minutes since the latest glucose at or before the meal.
    pub since_last_min: Option<f64>,
    /// Minutes until the earliest glucose after the meal.
    pub to_next_min: Option<f64>,
    /// Whether a glucose measurement exists within `pre_window` before
    /// the meal (strictly: since_last <= pre_window).
    pub measured_before: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MealDelayHistogram {
    pub pre_window_secs: i64,
    pub entries: Vec<MealDelayEntry>,
    pub bin_edges_min: Vec<f64>,
    /// Histogram of since_last delays; the final slot is the open-ended
    /// "no prior glucose" bucket.
    pub since_last_bins: Vec<u32>,
    /// to_next histograms stratified by the measured-before flag.
    pub to_next_bins_measured: Vec<u32>,
    pub to_next_bins_unmeasured: Vec<u32>,
}

fn bin_index(edges: &[f64], value_min: Option<f64>) -> usize {
    match value_min {
        None => edges.len(), // open-ended bucket
        Some(v) => edges.iter().position(|&e| v < e).unwrap_or(edges.len()),
    }
}

pub fn meal_delay_histogram(
    log: &PatientLog,
    pre_window_secs: i64,
    bin_edges_min: &[f64],
) -> MealDelayHistogram {
    let mut entries = Vec::new();
    for meal in &log.carbs {
        let since_last = log
            .glucose
            .iter()
            .take_while(|g| g.t <= meal.t)
            .last()
            .map(|g| (meal.t - g.t) as f64 / 60.0);
        let to_next = log
            .glucose
            .iter()
            .find(|g| g.t > meal.t)
            .map(|g| (g.t - meal.t) as f64 / 60.0);
        let measured_before =
            since_last.is_some_and(|m| m * 60.0 <= pre_window_secs as f64);
        entries.push(MealDelayEntry {
            carb_t: meal.t,
            since_last_min: since_last,
            to_next_min: to_next,
            measured_before,
        });
    }

    let n_bins = bin_edges_min.len() + 1;
    let mut since_last_bins = vec![0u32; n_bins];
    let mut to_next_bins_measured = vec![0u32; n_bins];
    let mut to_next_bins_unmeasured = vec![0u32; n_bins];
    for e in &entries {
        since_last_bins[bin_index(bin_edges_min, e.since_last_min)] += 1;
        let target = if e.measured_before {
            &mut to_next_bins_measured
        } else {
            &mut to_next_bins_unmeasured
        };
        target[bin_index(bin_edges_min, e.to_next_min)] += 1;
    }
    MealDelayHistogram {
        pre_window_secs,
        entries,
        bin_edges_min: bin_edges_min.to_vec(),
        since_last_bins,
        to_next_bins_measured,
        to_next_bins_unmeasured,
    }
}

/// Pearson correlation per lag between two binned event streams.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagCorrelation {
    pub bin_width: i64,
    /// (lag in bins, r); lags with fewer than 3 overlapping bins are
    /// reported absent.
    pub lags: Vec<(i64, f64)>,
}

impl LagCorrelation {
    pub fn peak(&self) -> Option<(i64, f64)> {
        self.lags
            .iter()
            .copied()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    }
}

/// Bins both series by sum onto a shared grid (empty bins are zero) and
/// correlates `a_t` with `b_{t+lag}`.
pub fn cross_correlation(
    a: &[(i64, f64)],
    b: &[(i64, f64)],
    bin_width: i64,
    max_lag: i64,
) -> Result<LagCorrelation> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Evaluation("cross-correlation needs non-empty streams".into()));
    }
    if bin_width <= 0 || max_lag < 0 {
        return Err(Error::Config("bin_width must be > 0 and max_lag >= 0".into()));
    }
    let t_min = a.iter().chain(b).map(|(t, _)| *t).min().unwrap();
    let t_max = a.iter().chain(b).map(|(t, _)| *t).max().unwrap();
    let n_bins = ((t_max - t_min) / bin_width + 1) as usize;
    let binned = |events: &[(i64, f64)]| -> Vec<f64> {
        let mut bins = vec![0.0; n_bins];
        for &(t, v) in events {
            bins[((t - t_min) / bin_width) as usize] += v;
        }
        bins
    };
    let sa = binned(a);
    let sb = binned(b);

    let mut lags = Vec::new();
    for lag in -max_lag..=max_lag {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n_bins as i64 {
            let j = i + lag;
            if (0..n_bins as i64).contains(&j) {
                xs.push(sa[i as usize]);
                ys.push(sb[j as usize]);
            }
        }
        if xs.len() < 3 {
            continue;
        }
        if let Some(r) = pearson(&xs, &ys) {
            lags.push((lag, r));
        }
    }
    Ok(LagCorrelation { bin_width, lags })
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None; // constant series have no correlation
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{test_profile, ActivityInterval, CarbEvent, GlucoseEvent, PatientLog, DAY};

    fn local(h: f64) -> i64 {
        // profile offset is +01:00; build UTC times from local hours
        (h * 3600.0) as i64 - 3600
    }

    #[test]
    fn one_event_per_day_stats() {
        let mut log = PatientLog::empty(test_profile("p1"));
        for d in 0..10 {
            log.glucose.push(GlucoseEvent { t: local(8.0) + d * DAY, value: 5.5 });
        }
        let stats = entries_per_day(&log).unwrap();
        assert_eq!(stats.n_days, 10);
        assert_eq!(stats.glucose.median, 1.0);
        assert_eq!(stats.glucose.mean, 1.0);
        assert_eq!(stats.glucose.std_dev, 0.0);
    }

    #[test]
    fn active_interval_threshold() {
        let mut log = PatientLog::empty(test_profile("p1"));
        log.glucose.push(GlucoseEvent { t: local(8.0), value: 5.5 });
        for (i, steps) in [5u32, 10, 50].iter().enumerate() {
            log.activity
                .push(ActivityInterval { start: local(9.0) + i as i64 * 600, steps: *steps });
        }
        let stats = entries_per_day(&log).unwrap();
        assert_eq!(stats.active_intervals.mean, 2.0);
    }

    #[test]
    fn empty_log_rejected() {
        let log = PatientLog::empty(test_profile("p1"));
        assert!(entries_per_day(&log).is_err());
    }

    #[test]
    fn hourly_bins() {
        let mut log = PatientLog::empty(test_profile("p1"));
        let empty = hourly_histogram(&log, Stream::Carb);
        assert!(empty.counts.iter().all(|&c| c == 0));

        log.carbs.push(CarbEvent { t: local(8.0) + 600, grams: 30.0 });
        log.carbs.push(CarbEvent { t: local(8.0) + 3000, grams: 30.0 });
        let hist = hourly_histogram(&log, Stream::Carb);
        assert_eq!(hist.counts[8], 2);
        assert_eq!(hist.value_sums[8], 60.0);

        log.glucose.push(GlucoseEvent { t: local(24.0) - 1, value: 6.0 });
        let hist = hourly_histogram(&log, Stream::Glucose);
        assert_eq!(hist.counts[23], 1);
    }

    #[test]
    fn meal_delays() {
        let mut log = PatientLog::empty(test_profile("p1"));
        log.glucose.push(GlucoseEvent { t: local(8.0), value: 5.0 });
        log.glucose.push(GlucoseEvent { t: local(12.0) + 300, value: 7.0 });
        log.carbs.push(CarbEvent { t: local(8.0) + 300, grams: 40.0 });
        let hist = meal_delay_histogram(&log, 1800, &[15.0, 60.0, 240.0]);
        let entry = &hist.entries[0];
        assert_eq!(entry.since_last_min, Some(5.0));
        assert_eq!(entry.to_next_min, Some(240.0));
        assert!(entry.measured_before);

        // meal before any glucose: open-ended bucket
        let mut log2 = PatientLog::empty(test_profile("p1"));
        log2.carbs.push(CarbEvent { t: local(7.0), grams: 40.0 });
        log2.glucose.push(GlucoseEvent { t: local(9.0), value: 5.0 });
        let hist2 = meal_delay_histogram(&log2, 1800, &[15.0, 60.0]);
        assert_eq!(hist2.entries[0].since_last_min, None);
        assert_eq!(*hist2.since_last_bins.last().unwrap(), 1);

        // glucose 31 minutes earlier: strict 30-minute rule fails
        let mut log3 = PatientLog::empty(test_profile("p1"));
        log3.glucose.push(GlucoseEvent { t: local(8.0), value: 5.0 });
        log3.carbs.push(CarbEvent { t: local(8.0) + 31 * 60, grams: 40.0 });
        let hist3 = meal_delay_histogram(&log3, 1800, &[15.0]);
        assert!(!hist3.entries[0].measured_before);
    }

    #[test]
    fn histogram_totals_match_event_counts() {
        let mut log = PatientLog::empty(test_profile("p1"));
        for i in 0..17 {
            log.carbs.push(CarbEvent { t: local(6.0) + i * 5000, grams: 25.0 });
        }
        let hist = hourly_histogram(&log, Stream::Carb);
        assert_eq!(hist.counts.iter().sum::<u32>() as usize, log.carbs.len());
        let delays = meal_delay_histogram(&log, 1800, &[30.0, 120.0]);
        assert_eq!(delays.since_last_bins.iter().sum::<u32>() as usize, log.carbs.len());
    }

    #[test]
    fn identical_series_correlate_at_zero() {
        let a: Vec<(i64, f64)> = (0..50).map(|i| (i * 3600, ((i * 13) % 7) as f64 + 1.0)).collect();
        let corr = cross_correlation(&a, &a, 3600, 4).unwrap();
        let r0 = corr.lags.iter().find(|(l, _)| *l == 0).unwrap().1;
        assert!((r0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_series_peak_at_shift() {
        let a: Vec<(i64, f64)> =
            (0..100).map(|i| (i * 3600, ((i * 31 + 7) % 11) as f64)).collect();
        for k in [-3i64, -1, 0, 2, 4] {
            let b: Vec<(i64, f64)> = a.iter().map(|&(t, v)| (t + k * 3600, v)).collect();
            let corr = cross_correlation(&a, &b, 3600, 5).unwrap();
            let (peak_lag, peak_r) = corr.peak().unwrap();
            assert_eq!(peak_lag, k, "peak {peak_lag} r={peak_r}");
        }
    }

    #[test]
    fn correlation_symmetry_under_swap() {
        let a: Vec<(i64, f64)> = (0..60).map(|i| (i * 3600, ((i * 17) % 9) as f64)).collect();
        let b: Vec<(i64, f64)> = (0..60).map(|i| (i * 3600, ((i * 23 + 3) % 13) as f64)).collect();
        let ab = cross_correlation(&a, &b, 3600, 4).unwrap();
        let ba = cross_correlation(&b, &a, 3600, 4).unwrap();
        for &(lag, r) in &ab.lags {
            let swapped = ba.lags.iter().find(|(l, _)| *l == -lag).unwrap().1;
            assert!((r - swapped).abs() < 1e-12);
        }
    }
}
