//! Listening-test aggregation: rater screening, item-major averaging,
//! normalization onto [0, 100] and the weighted final score.
//!
//! Ratings are read from CSV with the header
//!
//! ```text
//! condition,mode,item,rater,rating,response,correct,validation_ok,attention_ok,hearing_ok
//! ```
//!
//! `mode` is `ulb` or `lb`. Rating tests fill `rating`; DRT trials leave it
//! empty and fill `response` (the chosen word, informational) and
//! `correct`. Flags accept `1/0`, `true/false`, `yes/no` or `pass/fail`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::Read;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("battery: {0}")]
    Battery(String),
    #[error("ratings line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("unknown condition {0}")]
    UnknownCondition(String),
    #[error("{condition}/{mode}, item {item}, rater {rater}: rating {rating} outside [{lo}, {hi}]")]
    RatingRange {
        condition: String,
        mode: Mode,
        item: String,
        rater: String,
        rating: f64,
        lo: f64,
        hi: f64,
    },
    #[error("{condition}/{mode}, item {item}, rater {rater}: {what} missing")]
    MissingField {
        condition: String,
        mode: Mode,
        item: String,
        rater: String,
        what: &'static str,
    },
    #[error("{condition}/{mode}: no records")]
    NoRecords { condition: String, mode: Mode },
    #[error("{condition}/{mode}: item {item} has no surviving records")]
    EmptyItem {
        condition: String,
        mode: Mode,
        item: String,
    },
    #[error("raw score {raw} outside [{lo}, {hi}]")]
    OutOfRange { raw: f64, lo: f64, hi: f64 },
    #[error("missing normalized scores for {}", .0.join(", "))]
    Missing(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Ultra-low bitrate, ≤ 1 kbit/s.
    Ulb,
    /// Low bitrate, ≤ 6 kbit/s.
    Lb,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ulb => "ulb",
            Mode::Lb => "lb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestType {
    #[serde(rename = "MUSHRA1S")]
    Mushra1s,
    #[serde(rename = "DCR")]
    Dcr,
    #[serde(rename = "ACR")]
    Acr,
    #[serde(rename = "DRT")]
    Drt,
}

impl TestType {
    pub fn default_range(self) -> (f64, f64) {
        match self {
            TestType::Mushra1s => (0.0, 100.0),
            TestType::Dcr | TestType::Acr => (1.0, 5.0),
            TestType::Drt => (-100.0, 100.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestType::Mushra1s => "MUSHRA1S",
            TestType::Dcr => "DCR",
            TestType::Acr => "ACR",
            TestType::Drt => "DRT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub id: String,
    pub test: TestType,
    /// Raw score range mapped linearly onto [0, 100]; defaults per test type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
    /// Percent; absent means the condition is not run in that mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_ulb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_lb: Option<f64>,
}

impl Condition {
    pub fn range(&self) -> (f64, f64) {
        self.range.unwrap_or_else(|| self.test.default_range())
    }

    pub fn weight(&self, mode: Mode) -> Option<f64> {
        match mode {
            Mode::Ulb => self.weight_ulb,
            Mode::Lb => self.weight_lb,
        }
    }

    /// Modes with a positive weight.
    pub fn scored_modes(&self) -> impl Iterator<Item = Mode> + '_ {
        [Mode::Ulb, Mode::Lb]
            .into_iter()
            .filter(|&m| self.weight(m).is_some_and(|w| w > 0.0))
    }
}

fn cond(id: &str, test: TestType, ulb: Option<f64>, lb: Option<f64>) -> Condition {
    Condition {
        id: id.into(),
        test,
        range: None,
        weight_ulb: ulb,
        weight_lb: lb,
    }
}

/// Conditions, test types and weights of one track.
///
/// TOML form:
///
/// ```toml
/// track = 2
/// [[condition]]
/// id = "2a"
/// test = "MUSHRA1S"   # MUSHRA1S | DCR | ACR | DRT
/// weight_ulb = 10
/// weight_lb = 15      # omit a weight for a mode the condition skips
/// # range = [0, 100]  # optional override of the raw range
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Battery {
    pub track: u8,
    #[serde(rename = "condition")]
    pub conditions: Vec<Condition>,
}

impl Battery {
    pub fn track1() -> Self {
        use TestType::*;
        Self {
            track: 1,
            conditions: vec![
                cond("1a", Mushra1s, Some(20.0), Some(20.0)),
                cond("1b", Dcr, Some(20.0), Some(20.0)),
                cond("1c", Dcr, Some(5.0), Some(5.0)),
                cond("1d", Drt, Some(10.0), None),
            ],
        }
    }

    pub fn track2() -> Self {
        use TestType::*;
        Self {
            track: 2,
            conditions: vec![
                cond("2a", Mushra1s, Some(10.0), Some(15.0)),
                cond("2b", Acr, Some(10.0), Some(20.0)),
                cond("2c", Acr, Some(10.0), Some(20.0)),
                cond("2d", Drt, Some(5.0), None),
                cond("2e", Drt, None, Some(10.0)),
            ],
        }
    }

    pub fn for_track(track: u8) -> Result<Self, ScoreError> {
        match track {
            1 => Ok(Self::track1()),
            2 => Ok(Self::track2()),
            t => Err(ScoreError::Battery(format!("unknown track {t}"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ScoreError> {
        let b: Self = toml::from_str(text).map_err(|e| ScoreError::Battery(e.to_string()))?;
        b.validate()?;
        Ok(b)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("battery serializes")
    }

    pub fn weight_sum(&self) -> f64 {
        self.conditions
            .iter()
            .flat_map(|c| [c.weight_ulb, c.weight_lb])
            .flatten()
            .sum()
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        let bad = |m: String| Err(ScoreError::Battery(m));
        let mut seen = BTreeSet::new();
        for c in &self.conditions {
            if !seen.insert(c.id.as_str()) {
                return bad(format!("duplicate condition {}", c.id));
            }
            for w in [c.weight_ulb, c.weight_lb].into_iter().flatten() {
                if !(w.is_finite() && w >= 0.0) {
                    return bad(format!("condition {}: weight {w} must be non-negative", c.id));
                }
            }
            let (lo, hi) = c.range();
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("condition {}: empty range [{lo}, {hi}]", c.id));
            }
        }
        let sum = self.weight_sum();
        if (sum - 100.0).abs() > 1e-9 {
            return bad(format!("weights sum to {sum}, expected 100"));
        }
        Ok(())
    }

    pub fn condition(&self, id: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.id == id)
    }
}

/// One listener response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub condition: String,
    pub mode: Mode,
    pub item: String,
    pub rater: String,
    #[serde(default, deserialize_with = "opt_f64")]
    pub rating: Option<f64>,
    #[serde(default, deserialize_with = "opt_string")]
    pub response: Option<String>,
    #[serde(default, deserialize_with = "opt_flag")]
    pub correct: Option<bool>,
    #[serde(deserialize_with = "flag")]
    pub validation_ok: bool,
    #[serde(deserialize_with = "flag")]
    pub attention_ok: bool,
    #[serde(deserialize_with = "flag")]
    pub hearing_ok: bool,
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "pass" | "y" | "t" => Some(true),
        "0" | "false" | "no" | "fail" | "n" | "f" => Some(false),
        _ => None,
    }
}

fn flag<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    parse_flag(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid flag {s:?}")))
}

fn opt_flag<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
    let s = String::deserialize(d)?;
    if s.trim().is_empty() {
        return Ok(None);
    }
    parse_flag(&s)
        .map(Some)
        .ok_or_else(|| serde::de::Error::custom(format!("invalid flag {s:?}")))
}

fn opt_f64<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    let s = String::deserialize(d)?;
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| serde::de::Error::custom(format!("invalid rating {s:?}")))
}

fn opt_string<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let s = String::deserialize(d)?;
    Ok(Some(s).filter(|s| !s.trim().is_empty()))
}

pub fn read_ratings<R: Read>(reader: R) -> Result<Vec<RatingRecord>, ScoreError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let rec: RatingRecord = rec.map_err(|e: csv::Error| ScoreError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_ratings(records: &[RatingRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "condition",
        "mode",
        "item",
        "rater",
        "rating",
        "response",
        "correct",
        "validation_ok",
        "attention_ok",
        "hearing_ok",
    ])
    .unwrap();
    let b = |v: bool| if v { "1" } else { "0" };
    for r in records {
        w.write_record([
            r.condition.as_str(),
            &r.mode.to_string(),
            &r.item,
            &r.rater,
            &r.rating.map(|v| v.to_string()).unwrap_or_default(),
            r.response.as_deref().unwrap_or(""),
            r.correct.map(b).unwrap_or(""),
            b(r.validation_ok),
            b(r.attention_ok),
            b(r.hearing_ok),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Raters removed by each screen. A rater failing several screens appears
/// under each of them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub failed_validation: usize,
    pub failed_attention: usize,
    pub failed_hearing: usize,
    pub raters_dropped: usize,
    pub records_dropped: usize,
}

/// Drops every record of any rater who failed a screen on any record.
pub fn filter_raters(records: &[RatingRecord]) -> (Vec<RatingRecord>, FilterReport) {
    let mut validation = BTreeSet::new();
    let mut attention = BTreeSet::new();
    let mut hearing = BTreeSet::new();
    for r in records {
        if !r.validation_ok {
            validation.insert(r.rater.as_str());
        }
        if !r.attention_ok {
            attention.insert(r.rater.as_str());
        }
        if !r.hearing_ok {
            hearing.insert(r.rater.as_str());
        }
    }
    let dropped: BTreeSet<&str> = validation.iter().chain(&attention).chain(&hearing).copied().collect();
    let kept: Vec<RatingRecord> = records
        .iter()
        .filter(|r| !dropped.contains(r.rater.as_str()))
        .cloned()
        .collect();
    let report = FilterReport {
        failed_validation: validation.len(),
        failed_attention: attention.len(),
        failed_hearing: hearing.len(),
        raters_dropped: dropped.len(),
        records_dropped: records.len() - kept.len(),
    };
    (kept, report)
}

fn by_item<'a>(
    records: &'a [RatingRecord],
    condition: &str,
    mode: Mode,
) -> Result<BTreeMap<&'a str, Vec<&'a RatingRecord>>, ScoreError> {
    let mut items: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.condition == condition && r.mode == mode) {
        items.entry(r.item.as_str()).or_default().push(r);
    }
    if items.is_empty() {
        return Err(ScoreError::NoRecords {
            condition: condition.into(),
            mode,
        });
    }
    Ok(items)
}

fn missing(r: &RatingRecord, what: &'static str) -> ScoreError {
    ScoreError::MissingField {
        condition: r.condition.clone(),
        mode: r.mode,
        item: r.item.clone(),
        rater: r.rater.clone(),
        what,
    }
}

/// Mean of per-item mean ratings.
pub fn aggregate_raw(records: &[RatingRecord], condition: &str, mode: Mode) -> Result<f64, ScoreError> {
    let items = by_item(records, condition, mode)?;
    let mut total = 0.0;
    for recs in items.values() {
        let mut sum = 0.0;
        for r in recs {
            sum += r.rating.ok_or_else(|| missing(r, "rating"))?;
        }
        total += sum / recs.len() as f64;
    }
    Ok(total / items.len() as f64)
}

/// Mean over items of `100 (R − W) / (R + W)`.
pub fn drt_raw(records: &[RatingRecord], condition: &str, mode: Mode) -> Result<f64, ScoreError> {
    let items = by_item(records, condition, mode)?;
    let mut total = 0.0;
    for recs in items.values() {
        let (mut right, mut wrong) = (0usize, 0usize);
        for r in recs {
            match r.correct.ok_or_else(|| missing(r, "correct"))? {
                true => right += 1,
                false => wrong += 1,
            }
        }
        total += 100.0 * (right as f64 - wrong as f64) / (right + wrong) as f64;
    }
    Ok(total / items.len() as f64)
}

/// Linear map of `range` onto [0, 100].
pub fn normalize(raw: f64, range: (f64, f64)) -> Result<f64, ScoreError> {
    let (lo, hi) = range;
    if !(lo..=hi).contains(&raw) {
        return Err(ScoreError::OutOfRange { raw, lo, hi });
    }
    Ok((raw - lo) / (hi - lo) * 100.0)
}

/// `Σ weight × normalized / 100` over every weighted (condition, mode).
pub fn final_score(normalized: &BTreeMap<(String, Mode), f64>, battery: &Battery) -> Result<f64, ScoreError> {
    let mut missing = Vec::new();
    let mut total = 0.0;
    for c in &battery.conditions {
        for mode in c.scored_modes() {
            match normalized.get(&(c.id.clone(), mode)) {
                Some(v) => total += c.weight(mode).unwrap() * v / 100.0,
                None => missing.push(format!("{}/{mode}", c.id)),
            }
        }
    }
    if !missing.is_empty() {
        return Err(ScoreError::Missing(missing));
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub condition: String,
    pub mode: Mode,
    pub test: TestType,
    pub items: usize,
    pub records: usize,
    pub raw: f64,
    pub normalized: f64,
    pub weight: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub track: u8,
    pub filter: FilterReport,
    pub rows: Vec<ScoreRow>,
    pub final_score: f64,
}

/// Full pipeline: screen raters, check ranges, aggregate each weighted
/// (condition, mode), normalize and combine.
pub fn evaluate(records: &[RatingRecord], battery: &Battery) -> Result<ScoreReport, ScoreError> {
    battery.validate()?;
    for r in records {
        let c = battery
            .condition(&r.condition)
            .ok_or_else(|| ScoreError::UnknownCondition(r.condition.clone()))?;
        if let Some(rating) = r.rating {
            let (lo, hi) = c.range();
            if !(lo..=hi).contains(&rating) {
                return Err(ScoreError::RatingRange {
                    condition: r.condition.clone(),
                    mode: r.mode,
                    item: r.item.clone(),
                    rater: r.rater.clone(),
                    rating,
                    lo,
                    hi,
                });
            }
        }
    }
    let (kept, filter) = filter_raters(records);
    let mut rows = Vec::new();
    let mut normalized = BTreeMap::new();
    let mut missing = Vec::new();
    for c in &battery.conditions {
        for mode in c.scored_modes() {
            let all_items: BTreeSet<&str> = records
                .iter()
                .filter(|r| r.condition == c.id && r.mode == mode)
                .map(|r| r.item.as_str())
                .collect();
            if all_items.is_empty() {
                missing.push(format!("{}/{mode}", c.id));
                continue;
            }
            let surviving: Vec<&RatingRecord> =
                kept.iter().filter(|r| r.condition == c.id && r.mode == mode).collect();
            let kept_items: BTreeSet<&str> = surviving.iter().map(|r| r.item.as_str()).collect();
            if let Some(item) = all_items.difference(&kept_items).next() {
                return Err(ScoreError::EmptyItem {
                    condition: c.id.clone(),
                    mode,
                    item: item.to_string(),
                });
            }
            let raw = match c.test {
                TestType::Drt => drt_raw(&kept, &c.id, mode)?,
                _ => aggregate_raw(&kept, &c.id, mode)?,
            };
            let norm = normalize(raw, c.range())?;
            let weight = c.weight(mode).unwrap();
            normalized.insert((c.id.clone(), mode), norm);
            rows.push(ScoreRow {
                condition: c.id.clone(),
                mode,
                test: c.test,
                items: kept_items.len(),
                records: surviving.len(),
                raw,
                normalized: norm,
                weight,
                contribution: weight * norm / 100.0,
            });
        }
    }
    if !missing.is_empty() {
        return Err(ScoreError::Missing(missing));
    }
    let final_score = final_score(&normalized, battery)?;
    Ok(ScoreReport {
        track: battery.track,
        filter,
        rows,
        final_score,
    })
}

pub fn render_table(r: &ScoreReport) -> String {
    let mut s = String::new();
    let f = &r.filter;
    writeln!(
        s,
        "screening: {} raters dropped ({} validation, {} attention, {} hearing), {} records removed",
        f.raters_dropped, f.failed_validation, f.failed_attention, f.failed_hearing, f.records_dropped
    )
    .unwrap();
    writeln!(
        s,
        "{:<10} {:<5} {:<9} {:>6} {:>8} {:>10} {:>11} {:>7} {:>13}",
        "condition", "mode", "test", "items", "records", "raw", "normalized", "weight", "contribution"
    )
    .unwrap();
    for row in &r.rows {
        writeln!(
            s,
            "{:<10} {:<5} {:<9} {:>6} {:>8} {:>10.4} {:>11.4} {:>7} {:>13.4}",
            row.condition,
            row.mode.to_string(),
            row.test.name(),
            row.items,
            row.records,
            row.raw,
            row.normalized,
            row.weight,
            row.contribution
        )
        .unwrap();
    }
    writeln!(s, "final score (track {}): {:.4}", r.track, r.final_score).unwrap();
    s
}

pub fn to_json(r: &ScoreReport) -> Value {
    let rows: Vec<Value> = r
        .rows
        .iter()
        .map(|row| {
            json!({
                "condition": row.condition,
                "mode": row.mode,
                "test": row.test,
                "items": row.items,
                "records": row.records,
                "raw": row.raw,
                "normalized": row.normalized,
                "weight": row.weight,
                "contribution": row.contribution,
            })
        })
        .collect();
    let f = &r.filter;
    json!({
        "track": r.track,
        "screening": {
            "failed_validation": f.failed_validation,
            "failed_attention": f.failed_attention,
            "failed_hearing": f.failed_hearing,
            "raters_dropped": f.raters_dropped,
            "records_dropped": f.records_dropped,
        },
        "conditions": rows,
        "final_score": r.final_score,
    })
}

#[cfg(test)]
mod tests;
