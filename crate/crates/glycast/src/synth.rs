//! Seeded synthetic patient-log generator.
//!
//! Logs follow a latent glucose curve — baseline plus a circadian
//! sinusoid, meal-absorption bumps and rapid-insulin action curves —
//! sampled at meal-adjacent and random daytime moments, with per-day
//! entry counts calibrated to configurable medians. Generation is fully
//! deterministic given the seed.
//!
//! ```
//! use glycast::synth::{generate_patient, GeneratorConfig};
//!
//! let profile = glycast::data::parse_profiles(
//!     "patient_id,age,gender,weight,bmi,diabetes_type,years_since_diagnosis,hba1c\n\
//!      p01,34,m,68.5,22.6,1,18,8.2\n",
//! ).unwrap().remove(0);
//! let cfg = GeneratorConfig { n_days: 7, seed: 42, ..GeneratorConfig::default() };
//! let log = generate_patient(&cfg, &profile).unwrap();
//! assert!(!log.glucose.is_empty());
//! assert_eq!(log, generate_patient(&cfg, &log.profile).unwrap()); // deterministic
//! ```

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    ActivityInterval, CarbEvent, GlucoseEvent, InsulinEvent, InsulinKind, PatientLog,
    PatientProfile, DAY,
};
use crate::error::Error;
use crate::Result;

/// Local midnight of the first study day, as UTC seconds before the
/// profile offset is applied (2017-03-01T00:00:00Z).
const STUDY_EPOCH_UTC: i64 = 1_488_326_400;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_days: u32,
    /// Median target for glucose measurements per day.
    pub glucose_per_day: u32,
    /// Median target for carbohydrate entries per day.
    pub carbs_per_day: u32,
    /// Median target for insulin applications per day (rapid + basal).
    pub insulin_per_day: u32,
    /// Median target for active 10-minute intervals (>= 10 steps) per day.
    pub active_intervals_per_day: u32,
    /// mmol/L.
    pub baseline_glucose: f64,
    /// mmol/L, peak deviation of the circadian sinusoid.
    pub circadian_amplitude: f64,
    /// mmol/L per 10 g of carbohydrate at bump peak.
    pub carb_effect: f64,
    /// mmol/L per insulin unit at action peak.
    pub insulin_effect: f64,
    /// mmol/L, standard deviation of observation noise.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_days: 30,
            glucose_per_day: 4,
            carbs_per_day: 3,
            insulin_per_day: 4,
            active_intervals_per_day: 6,
            baseline_glucose: 7.0,
            circadian_amplitude: 1.2,
            carb_effect: 0.8,
            insulin_effect: 0.5,
            noise_sd: 0.4,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_days < 1
            || self.glucose_per_day < 1
            || self.carbs_per_day < 1
            || self.insulin_per_day < 1
            || self.active_intervals_per_day < 1
        {
            return Err(Error::Config("generator counts must be >= 1".into()));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::Config("noise_sd must be >= 0".into()));
        }
        if self.circadian_amplitude < 0.0 || self.carb_effect < 0.0 || self.insulin_effect < 0.0 {
            return Err(Error::Config("effect magnitudes must be >= 0".into()));
        }
        Ok(())
    }
}

/// One patient entry of a cohort specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortEntry {
    pub profile: PatientProfile,
    pub config: GeneratorConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortSpec {
    pub patients: Vec<CohortEntry>,
}

impl CohortSpec {
    /// Derives each patient's seed from a cohort seed and the patient id,
    /// so regeneration does not depend on list order.
    pub fn with_derived_seeds(mut self, cohort_seed: u64) -> Self {
        for entry in &mut self.patients {
            entry.config.seed = derive_seed(cohort_seed, id_hash(&entry.profile.patient_id));
        }
        self
    }
}

/// splitmix64 step; used to derive independent seed streams.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a hash of a patient id; stable across platforms, used to derive
/// per-patient seed streams.
pub fn id_hash(id: &str) -> u64 {
    // FNV-1a; stable across platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Piecewise-linear meal absorption: rises over 1 h, decays over 3 h.
fn carb_bump(dt: i64) -> f64 {
    const RISE: f64 = 3600.0;
    const DECAY: f64 = 10_800.0;
    let dt = dt as f64;
    if dt < 0.0 {
        0.0
    } else if dt < RISE {
        dt / RISE
    } else if dt < RISE + DECAY {
        1.0 - (dt - RISE) / DECAY
    } else {
        0.0
    }
}

/// Piecewise-linear rapid-insulin action: onset 15 min, peak 1.5 h,
/// duration 4 h.
fn insulin_action(dt: i64) -> f64 {
    const ONSET: f64 = 900.0;
    const PEAK: f64 = 5400.0;
    const END: f64 = 14_400.0;
    let dt = dt as f64;
    if dt < ONSET {
        0.0
    } else if dt < PEAK {
        (dt - ONSET) / (PEAK - ONSET)
    } else if dt < END {
        1.0 - (dt - PEAK) / (END - PEAK)
    } else {
        0.0
    }
}

/// Noise-free latent glucose at time `t`, reconstructed from the log's
/// carb and rapid-insulin streams under `cfg`.
pub fn latent_glucose(cfg: &GeneratorConfig, log: &PatientLog, t: i64) -> f64 {
    let sod = log.seconds_of_day(t) as f64;
    // Circadian peak around 08:00 local (dawn effect).
    let circadian =
        cfg.circadian_amplitude * (2.0 * std::f64::consts::PI * (sod - 28_800.0) / DAY as f64).cos();
    let mut g = cfg.baseline_glucose + circadian;
    for meal in &log.carbs {
        let dt = t - meal.t;
        if (0..=14_400).contains(&dt) {
            g += cfg.carb_effect * (meal.grams / 10.0) * carb_bump(dt);
        }
    }
    for dose in &log.insulin {
        if dose.kind == InsulinKind::Rapid {
            let dt = t - dose.t;
            if (0..=14_400).contains(&dt) {
                g -= cfg.insulin_effect * dose.units * insulin_action(dt);
            }
        }
    }
    g
}

/// count +/- 1 jitter with median at `target`.
fn jitter_count(rng: &mut impl Rng, target: u32) -> u32 {
    match rng.gen_range(0..4u32) {
        0 => target.saturating_sub(1).max(1),
        3 => target + 1,
        _ => target,
    }
}

fn gauss(rng: &mut impl Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    // Box-Muller.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// Meal slots in local seconds-of-day, in routine priority order:
// breakfast, lunch, dinner, then snacks.
const MEAL_SLOTS: [i64; 8] = [
    27_000,  // 07:30
    45_000,  // 12:30
    66_600,  // 18:30
    37_800,  // 10:30
    57_600,  // 16:00
    75_600,  // 21:00
    32_400,  // 09:00
    50_400,  // 14:00
];

/// Generates one patient's log; deterministic given `cfg.seed`.
pub fn generate_patient(cfg: &GeneratorConfig, profile: &PatientProfile) -> Result<PatientLog> {
    cfg.validate()?;
    let mut log = PatientLog::empty(profile.clone());
    let day0 = STUDY_EPOCH_UTC - profile.utc_offset;

    // First pass: meals, insulin and activity for every day.
    for d in 0..cfg.n_days as i64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, d as u64));
        let day_start = day0 + d * DAY;

        let n_meals = jitter_count(&mut rng, cfg.carbs_per_day).min(MEAL_SLOTS.len() as u32);
        let mut meals: Vec<(i64, f64)> = Vec::new();
        for slot in MEAL_SLOTS.iter().take(n_meals as usize) {
            let t = day_start + slot + rng.gen_range(-1800..=1800);
            let grams = (rng.gen_range(4..=16) * 5) as f64; // 20..80 g
            meals.push((t, grams));
        }
        meals.sort_by_key(|(t, _)| *t);
        for &(t, grams) in &meals {
            log.carbs.push(CarbEvent { t, grams });
        }

        // Rapid insulin with each meal (dose follows carbs), basal in the
        // evening; extra correction doses if the target asks for more.
        let n_rapid_target = cfg.insulin_per_day.saturating_sub(1).max(1);
        for &(t, grams) in meals.iter().take(n_rapid_target as usize) {
            let units = (grams / 10.0).round().max(1.0) + rng.gen_range(0..=1) as f64;
            log.insulin.push(InsulinEvent { t: t + rng.gen_range(0..600), units, kind: InsulinKind::Rapid });
        }
        let extra = n_rapid_target as i64 - meals.len() as i64;
        for _ in 0..extra.max(0) {
            let t = day_start + rng.gen_range(28_800..79_200);
            log.insulin.push(InsulinEvent { t, units: rng.gen_range(1..=3) as f64, kind: InsulinKind::Basal });
        }
        let basal_t = day_start + 73_800 + rng.gen_range(-1800..=1800); // ~20:30
        log.insulin.push(InsulinEvent {
            t: basal_t,
            units: rng.gen_range(12..=18) as f64,
            kind: InsulinKind::Basal,
        });

        let n_active = jitter_count(&mut rng, cfg.active_intervals_per_day);
        for _ in 0..n_active {
            let grid_slot = rng.gen_range(48..126); // 08:00..21:00 on the 600 s grid
            let start = day_start + grid_slot * 600;
            log.activity.push(ActivityInterval { start, steps: rng.gen_range(200..1500) });
        }
        if rng.gen_bool(0.3) {
            // a low-step interval; does not count as active
            let start = day_start + rng.gen_range(48..126i64) * 600;
            log.activity.push(ActivityInterval { start, steps: rng.gen_range(1..10) });
        }
    }
    log.sort_streams();

    // Second pass: glucose observations sampling the latent curve.
    for d in 0..cfg.n_days as i64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x8000_0000 | d as u64));
        let day_start = day0 + d * DAY;
        let day_meals: Vec<i64> = log
            .carbs
            .iter()
            .map(|m| m.t)
            .filter(|t| (day_start..day_start + DAY).contains(t))
            .collect();

        let n_obs = jitter_count(&mut rng, cfg.glucose_per_day);
        let mut times: Vec<i64> = Vec::new();
        // Alternate pre-meal and post-meal samples, then random daytime.
        let mut candidates: Vec<i64> = Vec::new();
        for &m in &day_meals {
            candidates.push(m - rng.gen_range(300..900)); // just before the meal
            candidates.push(m + rng.gen_range(5400..9000)); // 1.5-2.5 h after
        }
        for i in 0..n_obs as usize {
            let t = if i < candidates.len() {
                candidates[i]
            } else {
                day_start + rng.gen_range(25_200..81_000) // 07:00..22:30
            };
            times.push(t);
        }
        // Occasionally one night measurement (00:00-06:00); kept rare.
        if rng.gen_bool(0.03) && !times.is_empty() {
            let last = times.len() - 1;
            times[last] = day_start + rng.gen_range(7_200..18_000);
        }
        times.sort_unstable();
        for t in times {
            let value = latent_glucose(cfg, &log, t) + gauss(&mut rng, cfg.noise_sd);
            let value = (value.clamp(1.5, 33.0) * 10.0).round() / 10.0;
            log.glucose.push(GlucoseEvent { t, value });
        }
    }
    log.sort_streams();
    Ok(log)
}

/// Generates one log per cohort entry. Patient ids must be unique.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<PatientLog>> {
    let mut seen = std::collections::HashSet::new();
    for entry in &spec.patients {
        if !seen.insert(entry.profile.patient_id.as_str()) {
            return Err(Error::Config(format!(
                "duplicate patient_id `{}`",
                entry.profile.patient_id
            )));
        }
    }
    spec.patients
        .iter()
        .map(|entry| generate_patient(&entry.config, &entry.profile))
        .collect()
}
