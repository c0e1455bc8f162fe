//! Scoring of detected events against reference catalogs and of filament
//! masks against ground truth.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EruptionReport, EventKind, EventRecord, FlareReport, Importance};
use crate::imgio::great_circle_deg;

/// One catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEvent {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    #[serde(default, deserialize_with = "blank_importance")]
    pub importance: Option<Importance>,
    pub lat: f64,
    pub lon: f64,
}

fn blank_importance<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Importance>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    match s.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => v.parse().map(Some).map_err(serde::de::Error::custom),
    }
}

/// Parses a `type,start,end,importance,lat,lon` catalog.
pub fn read_reference_csv(input: impl Read) -> Result<Vec<ReferenceEvent>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Parse(format!("reference header: {e}")))?.clone();
    let expected = ["type", "start", "end", "importance", "lat", "lon"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse(format!("line 1: expected header {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<ReferenceEvent>() {
        let ev = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse(format!("line {line}: {e}"))
        })?;
        if ev.start > ev.end {
            return Err(Error::Parse(format!("reference event starting {} ends before it starts", ev.start)));
        }
        if ev.kind == EventKind::Flare && ev.importance.is_none() {
            return Err(Error::Parse(format!("reference flare at {} has no importance", ev.start)));
        }
        out.push(ev);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl std::ops::Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            true_positives: self.true_positives + o.true_positives,
            false_positives: self.false_positives + o.false_positives,
            false_negatives: self.false_negatives + o.false_negatives,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

pub fn prf(c: MatchCounts) -> Scores {
    let tp = c.true_positives as f64;
    let mut degenerate = false;
    let mut ratio = |den: usize| {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            tp / den as f64
        }
    };
    let precision = ratio(c.true_positives + c.false_positives);
    let recall = ratio(c.true_positives + c.false_negatives);
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        precision,
        recall,
        f_score,
        degenerate,
    }
}

/// Intersection over union of two masks; 1 when both are empty.
pub fn mask_iou(predicted: &[bool], truth: &[bool]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!("masks of {} and {} pixels", predicted.len(), truth.len())));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub flare_time_s: f64,
    pub flare_deg: f64,
    pub eruption_time_s: f64,
    pub eruption_deg: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            flare_time_s: 600.0,
            flare_deg: 10.0,
            eruption_time_s: 1800.0,
            eruption_deg: 15.0,
        }
    }
}

fn secs(a: DateTime<Utc>, b: DateTime<Utc>) -> f64 {
    (a - b).num_milliseconds().abs() as f64 / 1000.0
}

/// Greedy one-to-one matching: detections in chronological order each take
/// the compatible unmatched reference closest in time.
fn greedy<D, K: Ord>(
    detected: &[D],
    reference: &[&ReferenceEvent],
    key: impl Fn(&D) -> K,
    cost: impl Fn(&D, &ReferenceEvent) -> Option<f64>,
) -> MatchCounts {
    let mut order: Vec<usize> = (0..detected.len()).collect();
    order.sort_by_key(|&i| key(&detected[i]));
    let mut refs: Vec<usize> = (0..reference.len()).collect();
    refs.sort_by_key(|&j| reference[j].start);
    let mut used = vec![false; reference.len()];
    let mut tp = 0;
    for i in order {
        let mut best: Option<(f64, usize)> = None;
        for &j in &refs {
            if used[j] {
                continue;
            }
            if let Some(c) = cost(&detected[i], reference[j]) {
                if best.is_none_or(|(bc, _)| c < bc) {
                    best = Some((c, j));
                }
            }
        }
        if let Some((_, j)) = best {
            used[j] = true;
            tp += 1;
        }
    }
    MatchCounts {
        true_positives: tp,
        false_positives: detected.len() - tp,
        false_negatives: reference.len() - tp,
    }
}

pub fn match_flares(detected: &[FlareReport], reference: &[ReferenceEvent], tol: &Tolerances) -> MatchCounts {
    let refs: Vec<&ReferenceEvent> = reference.iter().filter(|r| r.kind == EventKind::Flare).collect();
    greedy(
        detected,
        &refs,
        |d| (d.start, d.id),
        |d, r| {
            let ds = secs(d.start, r.start);
            let de = secs(d.end, r.end);
            let ok = ds <= tol.flare_time_s
                && de <= tol.flare_time_s
                && r.importance == Some(d.importance)
                && great_circle_deg((d.lat_deg, d.lon_deg), (r.lat, r.lon)) <= tol.flare_deg;
            ok.then_some(ds)
        },
    )
}

pub fn match_eruptions(detected: &[EruptionReport], reference: &[ReferenceEvent], tol: &Tolerances) -> MatchCounts {
    let refs: Vec<&ReferenceEvent> = reference.iter().filter(|r| r.kind == EventKind::FilamentEruption).collect();
    greedy(
        detected,
        &refs,
        |d| (d.disappearance, d.id),
        |d, r| {
            let dt = secs(d.disappearance, r.start);
            let ok = dt <= tol.eruption_time_s && great_circle_deg((d.lat_deg, d.lon_deg), (r.lat, r.lon)) <= tol.eruption_deg;
            ok.then_some(dt)
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub date: NaiveDate,
    pub flares: MatchCounts,
    pub eruptions: MatchCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub days: Vec<DayReport>,
    pub flares: MatchCounts,
    pub eruptions: MatchCounts,
    pub flare_scores: Scores,
    pub eruption_scores: Scores,
}

/// Scores detection records against a catalog, day by day (UTC).
pub fn evaluate(records: &[EventRecord], reference: &[ReferenceEvent], tol: &Tolerances) -> EvalReport {
    #[derive(Default)]
    struct Day<'a> {
        flares: Vec<FlareReport>,
        eruptions: Vec<EruptionReport>,
        refs: Vec<&'a ReferenceEvent>,
    }
    let mut days: BTreeMap<NaiveDate, Day> = BTreeMap::new();
    for r in records {
        if let Some(f) = r.as_flare() {
            days.entry(f.start.date_naive()).or_default().flares.push(f);
        } else if let Some(e) = r.as_eruption() {
            days.entry(e.disappearance.date_naive()).or_default().eruptions.push(e);
        }
    }
    for r in reference {
        days.entry(r.start.date_naive()).or_default().refs.push(r);
    }
    let mut out = Vec::new();
    let (mut ft, mut et) = (MatchCounts::default(), MatchCounts::default());
    for (date, d) in days {
        let refs: Vec<ReferenceEvent> = d.refs.into_iter().cloned().collect();
        let flares = match_flares(&d.flares, &refs, tol);
        let eruptions = match_eruptions(&d.eruptions, &refs, tol);
        ft = ft + flares;
        et = et + eruptions;
        out.push(DayReport { date, flares, eruptions });
    }
    EvalReport {
        days: out,
        flares: ft,
        eruptions: et,
        flare_scores: prf(ft),
        eruption_scores: prf(et),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    fn t(min: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2012, 7, 6, 8, 0, 0).unwrap() + Duration::minutes(min)
    }

    fn flare_ref(start: i64, end: i64, imp: Importance, lat: f64, lon: f64) -> ReferenceEvent {
        ReferenceEvent {
            kind: EventKind::Flare,
            start: t(start),
            end: t(end),
            importance: Some(imp),
            lat,
            lon,
        }
    }

    fn flare(start: i64, end: i64, imp: Importance, lat: f64, lon: f64) -> FlareReport {
        FlareReport {
            id: 1,
            start: t(start),
            peak: t(start),
            end: t(end),
            importance: imp,
            lat_deg: lat,
            lon_deg: lon,
            area_msh: 0.0,
            rel_intensity: 0.0,
        }
    }

    fn eruption(at: i64, lat: f64, lon: f64) -> EruptionReport {
        EruptionReport {
            id: 2,
            last_seen: t(at - 15),
            disappearance: t(at),
            lat_deg: lat,
            lon_deg: lon,
            length_px: 10.0,
        }
    }

    fn counts(tp: usize, fp: usize, fn_: usize) -> MatchCounts {
        MatchCounts {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        }
    }

    #[test]
    fn flare_rules() {
        let tol = Tolerances::default();
        let r = vec![flare_ref(0, 30, Importance::One, 10.0, 20.0)];
        assert_eq!(match_flares(&[flare(5, 38, Importance::One, 10.0, 24.0)], &r, &tol), counts(1, 0, 0));
        assert_eq!(match_flares(&[flare(0, 30, Importance::One, 10.0, 32.2)], &r, &tol), counts(0, 1, 1));
        assert_eq!(match_flares(&[flare(0, 30, Importance::Two, 10.0, 20.0)], &r, &tol), counts(0, 1, 1));
        assert_eq!(match_flares(&[flare(11, 30, Importance::One, 10.0, 20.0)], &r, &tol), counts(0, 1, 1));
        let three = vec![r[0].clone(), r[0].clone(), r[0].clone()];
        assert_eq!(match_flares(&[], &three, &tol), counts(0, 0, 3));
    }

    #[test]
    fn eruption_rules() {
        let tol = Tolerances::default();
        let r = vec![ReferenceEvent {
            kind: EventKind::FilamentEruption,
            start: t(0),
            end: t(60),
            importance: None,
            lat: 0.0,
            lon: 0.0,
        }];
        assert_eq!(match_eruptions(&[eruption(10, 3.0, 4.0)], &r, &tol), counts(1, 0, 0));
        assert_eq!(match_eruptions(&[eruption(10, 3.0, 4.0), eruption(20, 0.0, 1.0)], &r, &tol), counts(1, 1, 0));
        assert_eq!(match_eruptions(&[eruption(10, 3.0, 4.0)], &[], &tol), counts(0, 1, 0));
        assert_eq!(match_eruptions(&[eruption(31, 0.0, 0.0)], &r, &tol), counts(0, 1, 1));
    }

    #[test]
    fn scores_and_degenerate() {
        let s = prf(counts(18, 0, 3));
        assert_eq!(s.precision, 1.0);
        assert!((s.recall - 0.857142857).abs() < 1e-9 && (s.f_score - 0.923076923).abs() < 1e-9);
        let s = prf(counts(4, 1, 0));
        assert!((s.precision - 0.8).abs() < 1e-12 && s.recall == 1.0 && (s.f_score - 0.888888889).abs() < 1e-9);
        let s = prf(counts(0, 0, 0));
        assert!(s.degenerate && s.precision == 0.0 && s.recall == 0.0 && s.f_score == 0.0);
        assert!(!prf(counts(1, 0, 0)).degenerate);
    }

    #[test]
    fn iou_cases() {
        let full = vec![true; 8];
        let left: Vec<bool> = (0..8).map(|i| i % 4 < 2).collect();
        let right: Vec<bool> = left.iter().map(|b| !b).collect();
        assert_eq!(mask_iou(&left, &left).unwrap(), 1.0);
        assert_eq!(mask_iou(&left, &right).unwrap(), 0.0);
        assert_eq!(mask_iou(&left, &full).unwrap(), 0.5);
        assert_eq!(mask_iou(&[false; 3], &[false; 3]).unwrap(), 1.0);
        assert!(mask_iou(&left, &[true]).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let text = "type,start,end,importance,lat,lon\n\
                    flare,2012-07-06T08:00:00Z,2012-07-06T08:30:00Z,1,10.0,-20\n\
                    filament_eruption,2012-07-06T09:00:00Z,2012-07-06T10:00:00Z,,5,5\n";
        let refs = read_reference_csv(text.as_bytes()).unwrap();
        assert_eq!(refs.len(), 2);
        assert_eq!(refs[0].importance, Some(Importance::One));
        assert_eq!(refs[1].importance, None);
        let bad = "type,start,end,importance,lat,lon\nflare,2012-07-06T08:00:00Z,2012-07-06T08:30:00Z,1,10.0,-20\nflare,yesterday,2012-07-06T08:30:00Z,1,0,0\n";
        let err = read_reference_csv(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(read_reference_csv("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn evaluate_splits_days() {
        let refs = vec![flare_ref(0, 30, Importance::One, 0.0, 0.0), flare_ref(24 * 60, 24 * 60 + 20, Importance::Two, 0.0, 0.0)];
        let recs: Vec<EventRecord> = [flare(2, 31, Importance::One, 0.0, 1.0), flare(24 * 60 + 1, 24 * 60 + 20, Importance::Two, 1.0, 0.0)]
            .iter()
            .map(EventRecord::from)
            .collect();
        let rep = evaluate(&recs, &refs, &Tolerances::default());
        assert_eq!(rep.days.len(), 2);
        assert_eq!(rep.flares, counts(2, 0, 0));
        assert_eq!(rep.flare_scores.f_score, 1.0);
        assert!(rep.eruption_scores.degenerate);
    }
}
