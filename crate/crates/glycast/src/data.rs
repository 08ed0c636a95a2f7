//! Domain types for patient self-monitoring logs, CSV ingestion and
//! plausibility validation.
//!
//! A [`PatientLog`] holds four timestamped event streams (glucose,
//! carbohydrates, insulin, activity) together with the patient's
//! [`PatientProfile`]. All timestamps are UTC seconds; time-of-day
//! computations use the fixed UTC offset stored on the profile.

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Seconds in a day.
pub const DAY: i64 = 86_400;

/// Activity intervals are aligned to a 10-minute grid.
pub const ACTIVITY_GRID: i64 = 600;

/// Default plausible glucose range in mmol/L.
pub const DEFAULT_GLUCOSE_RANGE: (f64, f64) = (1.0, 35.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    M,
    W,
}

/// Diabetes type as recorded in the study: 1, 1.5 (LADA) or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiabetesType {
    #[serde(rename = "1")]
    Type1,
    #[serde(rename = "1.5")]
    Type1_5,
    #[serde(rename = "2")]
    Type2,
}

impl DiabetesType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "1" => Some(DiabetesType::Type1),
            "1.5" => Some(DiabetesType::Type1_5),
            "2" => Some(DiabetesType::Type2),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DiabetesType::Type1 => "1",
            DiabetesType::Type1_5 => "1.5",
            DiabetesType::Type2 => "2",
        }
    }
}

/// Static patient context: demographics plus diabetes history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub patient_id: String,
    /// Age in years.
    pub age: f64,
    pub gender: Gender,
    /// Weight in kg.
    pub weight: f64,
    pub bmi: f64,
    pub diabetes_type: DiabetesType,
    pub years_since_diagnosis: f64,
    /// HbA1c percentage; missing for some patients.
    pub hba1c: Option<f64>,
    /// Fixed UTC offset in seconds used for all local-time computations.
    #[serde(default = "default_utc_offset")]
    pub utc_offset: i64,
}

pub fn default_utc_offset() -> i64 {
    3600 // +01:00
}

impl PatientProfile {
    /// Checks the profile's field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.age <= 0.0 {
            return Err(Error::Config(format!("{}: age must be > 0", self.patient_id)));
        }
        if self.weight <= 0.0 {
            return Err(Error::Config(format!("{}: weight must be > 0", self.patient_id)));
        }
        if self.bmi <= 0.0 {
            return Err(Error::Config(format!("{}: bmi must be > 0", self.patient_id)));
        }
        if self.years_since_diagnosis < 0.0 {
            return Err(Error::Config(format!(
                "{}: years_since_diagnosis must be >= 0",
                self.patient_id
            )));
        }
        if let Some(h) = self.hba1c {
            if h <= 3.0 || h >= 20.0 {
                return Err(Error::Config(format!(
                    "{}: hba1c {} outside (3, 20)",
                    self.patient_id, h
                )));
            }
        }
        Ok(())
    }
}

/// A blood glucose measurement in mmol/L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlucoseEvent {
    /// UTC seconds.
    pub t: i64,
    pub value: f64,
}

/// A carbohydrate log entry in grams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbEvent {
    pub t: i64,
    pub grams: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InsulinKind {
    Rapid,
    Basal,
}

/// An insulin application in units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsulinEvent {
    pub t: i64,
    pub units: f64,
    pub kind: InsulinKind,
}

/// A 10-minute step-count interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityInterval {
    /// Interval start, aligned to the 10-minute grid.
    pub start: i64,
    pub steps: u32,
}

/// One patient's profile and four event streams, each sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientLog {
    pub profile: PatientProfile,
    pub glucose: Vec<GlucoseEvent>,
    pub carbs: Vec<CarbEvent>,
    pub insulin: Vec<InsulinEvent>,
    pub activity: Vec<ActivityInterval>,
}

impl PatientLog {
    pub fn empty(profile: PatientProfile) -> Self {
        PatientLog {
            profile,
            glucose: Vec::new(),
            carbs: Vec::new(),
            insulin: Vec::new(),
            activity: Vec::new(),
        }
    }

    /// Stable sort of every stream by timestamp; order among equal
    /// timestamps is preserved as parsed.
    pub fn sort_streams(&mut self) {
        self.glucose.sort_by_key(|e| e.t);
        self.carbs.sort_by_key(|e| e.t);
        self.insulin.sort_by_key(|e| e.t);
        self.activity.sort_by_key(|e| e.start);
    }

    /// Local seconds-of-day for a UTC timestamp under this log's offset.
    pub fn seconds_of_day(&self, t: i64) -> i64 {
        (t + self.profile.utc_offset).rem_euclid(DAY)
    }

    /// Local calendar day index (days since the UTC epoch, local clock).
    pub fn local_day(&self, t: i64) -> i64 {
        (t + self.profile.utc_offset).div_euclid(DAY)
    }
}

/// Formats a UTC timestamp as RFC 3339 with a trailing `Z`.
pub fn format_timestamp(t: i64) -> String {
    let dt: DateTime<Utc> = Utc.timestamp_opt(t, 0).unwrap();
    dt.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Parses an RFC 3339 timestamp to UTC seconds.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    DateTime::parse_from_rfc3339(s.trim()).ok().map(|dt| dt.timestamp())
}

/// Parses the event-log CSV (`stream,timestamp,value,kind`) into a
/// [`PatientLog`]. Rows may appear in any time order; the output streams
/// are sorted. Duplicate timestamps within a stream are legal.
pub fn parse_patient_log(csv_text: &str, profile: PatientProfile) -> Result<PatientLog> {
    let mut log = PatientLog::empty(profile);
    let mut lines = csv_text.lines().enumerate();

    match lines.next() {
        Some((_, header)) if header.trim() == "stream,timestamp,value,kind" => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `stream,timestamp,value,kind`, got `{}`", header.trim()),
            })
        }
        None => {
            return Err(Error::Parse { line: 1, msg: "empty input, header required".into() })
        }
    }

    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 4 columns, got {}", fields.len()),
            });
        }
        let t = parse_timestamp(fields[1]).ok_or_else(|| Error::Parse {
            line: lineno,
            msg: format!("unparsable timestamp `{}`", fields[1]),
        })?;
        let value: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("unparsable number `{}`", fields[2]),
        })?;
        match fields[0].trim() {
            "glucose" => log.glucose.push(GlucoseEvent { t, value }),
            "carb" => log.carbs.push(CarbEvent { t, grams: value }),
            "insulin" => {
                let kind = match fields[3].trim() {
                    "rapid" => InsulinKind::Rapid,
                    "basal" => InsulinKind::Basal,
                    other => {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("unknown insulin kind `{other}`"),
                        })
                    }
                };
                log.insulin.push(InsulinEvent { t, units: value, kind });
            }
            "activity" => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("steps must be a nonnegative integer, got `{}`", fields[2]),
                    });
                }
                log.activity.push(ActivityInterval { start: t, steps: value as u32 });
            }
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("unknown stream tag `{other}`"),
                })
            }
        }
    }

    log.sort_streams();
    Ok(log)
}

/// Serializes a log back to the event-log CSV format. Inverse of
/// [`parse_patient_log`] on well-formed logs.
pub fn serialize_patient_log(log: &PatientLog) -> String {
    let mut out = String::from("stream,timestamp,value,kind\n");
    let mut rows: Vec<(i64, usize, String)> = Vec::new();
    for (i, e) in log.glucose.iter().enumerate() {
        rows.push((e.t, i, format!("glucose,{},{},", format_timestamp(e.t), e.value)));
    }
    for (i, e) in log.carbs.iter().enumerate() {
        rows.push((e.t, i, format!("carb,{},{},", format_timestamp(e.t), e.grams)));
    }
    for (i, e) in log.insulin.iter().enumerate() {
        let kind = match e.kind {
            InsulinKind::Rapid => "rapid",
            InsulinKind::Basal => "basal",
        };
        rows.push((e.t, i, format!("insulin,{},{},{}", format_timestamp(e.t), e.units, kind)));
    }
    for (i, e) in log.activity.iter().enumerate() {
        rows.push((e.start, i, format!("activity,{},{},", format_timestamp(e.start), e.steps)));
    }
    rows.sort_by_key(|(t, i, _)| (*t, *i));
    for (_, _, row) in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// Plausible-range configuration for validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangeConfig {
    /// Plausible glucose range in mmol/L, inclusive.
    pub glucose_range: (f64, f64),
}

impl Default for RangeConfig {
    fn default() -> Self {
        RangeConfig { glucose_range: DEFAULT_GLUCOSE_RANGE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Glucose,
    Carb,
    Insulin,
    Activity,
}

/// One plausibility violation found by [`validate_log`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub stream: Stream,
    /// Index of the offending event within its stream.
    pub index: usize,
    pub reason: String,
}

/// Validation never fails; it reports.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Flags implausible events: glucose outside the configured range,
/// nonpositive carb/insulin amounts, activity starts off the 10-minute
/// grid. The log itself is untouched.
pub fn validate_log(log: &PatientLog, cfg: &RangeConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (lo, hi) = cfg.glucose_range;
    for (i, e) in log.glucose.iter().enumerate() {
        if !(lo..=hi).contains(&e.value) {
            report.violations.push(Violation {
                stream: Stream::Glucose,
                index: i,
                reason: format!("glucose {} outside [{lo}, {hi}]", e.value),
            });
        }
    }
    for (i, e) in log.carbs.iter().enumerate() {
        if e.grams <= 0.0 {
            report.violations.push(Violation {
                stream: Stream::Carb,
                index: i,
                reason: format!("carb grams {} must be > 0", e.grams),
            });
        }
    }
    for (i, e) in log.insulin.iter().enumerate() {
        if e.units <= 0.0 {
            report.violations.push(Violation {
                stream: Stream::Insulin,
                index: i,
                reason: format!("insulin units {} must be > 0", e.units),
            });
        }
    }
    for (i, e) in log.activity.iter().enumerate() {
        if e.start.rem_euclid(ACTIVITY_GRID) != 0 {
            report.violations.push(Violation {
                stream: Stream::Activity,
                index: i,
                reason: format!("activity start {} not on the {ACTIVITY_GRID}s grid", e.start),
            });
        }
    }
    report
}

/// Reads a profile CSV (one row per patient, `hba1c` may be empty).
pub fn parse_profiles(csv_text: &str) -> Result<Vec<PatientProfile>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = ["patient_id", "age", "gender", "weight", "bmi", "diabetes_type", "years_since_diagnosis"];
    for name in required {
        if col(name).is_none() {
            return Err(Error::Parse { line: 1, msg: format!("profile CSV missing column `{name}`") });
        }
    }
    let hba1c_col = col("hba1c");
    let offset_col = col("utc_offset");

    let mut profiles = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let lineno = i + 2;
        let get = |name: &str| -> Result<&str> {
            record
                .get(col(name).unwrap())
                .ok_or_else(|| Error::Parse { line: lineno, msg: format!("missing field `{name}`") })
        };
        let num = |name: &str| -> Result<f64> {
            get(name)?.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("unparsable number in `{name}`"),
            })
        };
        let gender = match get("gender")? {
            "m" => Gender::M,
            "w" => Gender::W,
            other => {
                return Err(Error::Parse { line: lineno, msg: format!("unknown gender `{other}`") })
            }
        };
        let diabetes_type = DiabetesType::parse(get("diabetes_type")?).ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "diabetes_type must be 1, 1.5 or 2".into(),
        })?;
        let hba1c = match hba1c_col.and_then(|c| record.get(c)) {
            None => None,
            Some("") | Some("-") => None,
            Some(s) => Some(s.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("unparsable hba1c `{s}`"),
            })?),
        };
        let utc_offset = match offset_col.and_then(|c| record.get(c)) {
            None | Some("") => default_utc_offset(),
            Some(s) => s.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("unparsable utc_offset `{s}`"),
            })?,
        };
        let profile = PatientProfile {
            patient_id: get("patient_id")?.to_string(),
            age: num("age")?,
            gender,
            weight: num("weight")?,
            bmi: num("bmi")?,
            diabetes_type,
            years_since_diagnosis: num("years_since_diagnosis")?,
            hba1c,
            utc_offset,
        };
        profile.validate()?;
        profiles.push(profile);
    }
    Ok(profiles)
}

/// Writes profiles back to the profile CSV format.
pub fn serialize_profiles(profiles: &[PatientProfile]) -> String {
    let mut out = String::from(
        "patient_id,age,gender,weight,bmi,diabetes_type,years_since_diagnosis,hba1c,utc_offset\n",
    );
    for p in profiles {
        let gender = match p.gender {
            Gender::M => "m",
            Gender::W => "w",
        };
        let hba1c = p.hba1c.map(|h| h.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.patient_id,
            p.age,
            gender,
            p.weight,
            p.bmi,
            p.diabetes_type.as_str(),
            p.years_since_diagnosis,
            hba1c,
            p.utc_offset
        ));
    }
    out
}

#[cfg(test)]
pub(crate) fn test_profile(id: &str) -> PatientProfile {
    PatientProfile {
        patient_id: id.to_string(),
        age: 45.0,
        gender: Gender::M,
        weight: 80.0,
        bmi: 26.0,
        diabetes_type: DiabetesType::Type1,
        years_since_diagnosis: 10.0,
        hba1c: Some(7.2),
        utc_offset: 3600,
    }
}
