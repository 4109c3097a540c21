//! Interaction logs: parsing, asset-event filtering, ghost removal, per-user
//! sequences and popularity labels.
//!
//! Events CSV: `user_id,asset_id,event_type,timestamp_ms` (header required,
//! empty `asset_id` means no associated asset). Creators CSV:
//! `asset_id,creator_user_id`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{list_preview, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub user_id: String,
    pub asset_id: Option<String>,
    pub event_type: String,
    /// Milliseconds since the Unix epoch, never negative.
    pub timestamp: i64,
}

impl EventRecord {
    pub fn new(
        user_id: impl Into<String>,
        asset_id: Option<&str>,
        event_type: impl Into<String>,
        timestamp: i64,
    ) -> Result<Self> {
        let user_id = user_id.into();
        if user_id.is_empty() {
            return Err(Error::invalid("empty user_id"));
        }
        if timestamp < 0 {
            return Err(Error::invalid(format!("negative timestamp {timestamp}")));
        }
        Ok(Self {
            user_id,
            asset_id: asset_id.filter(|a| !a.is_empty()).map(str::to_string),
            event_type: event_type.into(),
            timestamp,
        })
    }
}

/// A user's assets in interaction order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetSequence {
    pub user_id: String,
    pub assets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopularityLabel {
    pub asset_id: String,
    pub popularity: u64,
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

pub fn parse_events<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 4 {
            return Err(Error::parse(
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let timestamp: i64 = record[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("unparsable timestamp {:?}", &record[3])))?;
        let asset = &record[1];
        let event = EventRecord::new(&record[0], Some(asset), &record[2], timestamp)
            .map_err(|e| Error::parse(line, e.to_string()))?;
        out.push(event);
    }
    Ok(out)
}

pub fn write_events<W: Write>(events: &[EventRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "asset_id", "event_type", "timestamp_ms"])?;
    for e in events {
        let ts = e.timestamp.to_string();
        w.write_record([
            e.user_id.as_str(),
            e.asset_id.as_deref().unwrap_or(""),
            e.event_type.as_str(),
            ts.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a creators CSV into an `asset_id -> creator_user_id` map.
pub fn parse_creators<R: Read>(reader: R) -> Result<HashMap<String, String>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut out = HashMap::new();
    for record in r.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 2 {
            return Err(Error::parse(
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        if record[0].is_empty() || record[1].is_empty() {
            return Err(Error::parse(line, "empty asset_id or creator_user_id"));
        }
        out.insert(record[0].to_string(), record[1].to_string());
    }
    Ok(out)
}

/// Writes `asset_id,creator_user_id` rows in the given order.
pub fn write_creators<W: Write>(creators: &[(String, String)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["asset_id", "creator_user_id"])?;
    for (asset, creator) in creators {
        w.write_record([asset, creator])?;
    }
    w.flush()?;
    Ok(())
}

/// Keeps asset-associated events inside the inclusive course window.
pub fn filter_asset_events(
    events: &[EventRecord],
    course_start: i64,
    course_end: i64,
) -> Vec<EventRecord> {
    events
        .iter()
        .filter(|e| {
            e.asset_id.is_some() && e.timestamp >= course_start && e.timestamp <= course_end
        })
        .cloned()
        .collect()
}

/// Drops every event on an asset that has fewer than `min_events` events in
/// total. Events without an asset are dropped as well.
pub fn remove_ghost_assets(events: &[EventRecord], min_events: usize) -> Result<Vec<EventRecord>> {
    if min_events < 1 {
        return Err(Error::config("min_events must be at least 1"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for asset in events.iter().filter_map(|e| e.asset_id.as_deref()) {
        *counts.entry(asset).or_default() += 1;
    }
    Ok(events
        .iter()
        .filter(|e| {
            e.asset_id
                .as_deref()
                .is_some_and(|a| counts[a] >= min_events)
        })
        .cloned()
        .collect())
}

/// Groups asset events by user (sequences ordered by user id), sorts each
/// user's events stably by timestamp and collapses consecutive repeats of the
/// same asset.
pub fn build_sequences(events: &[EventRecord]) -> Vec<AssetSequence> {
    let mut by_user: BTreeMap<&str, Vec<&EventRecord>> = BTreeMap::new();
    for e in events.iter().filter(|e| e.asset_id.is_some()) {
        by_user.entry(e.user_id.as_str()).or_default().push(e);
    }
    by_user
        .into_iter()
        .map(|(user, mut evs)| {
            evs.sort_by_key(|e| e.timestamp);
            let mut assets: Vec<String> = Vec::with_capacity(evs.len());
            for e in evs {
                let a = e.asset_id.as_deref().expect("filtered above");
                if assets.last().map(String::as_str) != Some(a) {
                    assets.push(a.to_string());
                }
            }
            AssetSequence {
                user_id: user.to_string(),
                assets,
            }
        })
        .collect()
}

/// Counts distinct non-creator users per asset. Output is ordered by asset id.
pub fn compute_popularity(
    events: &[EventRecord],
    creators: &HashMap<String, String>,
) -> Result<Vec<PopularityLabel>> {
    let mut users: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in events {
        if let Some(a) = e.asset_id.as_deref() {
            users.entry(a).or_default().insert(e.user_id.as_str());
        }
    }
    let missing: Vec<&str> = users
        .keys()
        .copied()
        .filter(|a| !creators.contains_key(*a))
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "assets without a creator: {}",
            list_preview(&missing, 10)
        )));
    }
    Ok(users
        .into_iter()
        .map(|(asset, set)| {
            let creator = creators[asset].as_str();
            let popularity = set.iter().filter(|u| **u != creator).count() as u64;
            PopularityLabel {
                asset_id: asset.to_string(),
                popularity,
            }
        })
        .collect())
}

/// Sequences CSV: `user_id,position,asset_id`, one row per element.
pub fn write_sequences<W: Write>(sequences: &[AssetSequence], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "position", "asset_id"])?;
    for s in sequences {
        for (i, a) in s.assets.iter().enumerate() {
            w.write_record([s.user_id.as_str(), i.to_string().as_str(), a.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_sequences<R: Read>(reader: R) -> Result<Vec<AssetSequence>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut out: Vec<AssetSequence> = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 3 {
            return Err(Error::parse(
                line,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        let position: usize = record[1]
            .parse()
            .map_err(|_| Error::parse(line, format!("bad position {:?}", &record[1])))?;
        let user = &record[0];
        match out.last_mut() {
            Some(s) if s.user_id == user => {
                if position != s.assets.len() {
                    return Err(Error::parse(line, "positions must be consecutive"));
                }
                s.assets.push(record[2].to_string());
            }
            _ => {
                if position != 0 {
                    return Err(Error::parse(line, "sequence must start at position 0"));
                }
                out.push(AssetSequence {
                    user_id: user.to_string(),
                    assets: vec![record[2].to_string()],
                });
            }
        }
    }
    Ok(out)
}

/// Labels CSV: `asset_id,popularity`.
pub fn write_labels<W: Write>(labels: &[PopularityLabel], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["asset_id", "popularity"])?;
    for l in labels {
        w.write_record([l.asset_id.as_str(), l.popularity.to_string().as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(reader: R) -> Result<Vec<PopularityLabel>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record_line(&record);
        if record.len() != 2 {
            return Err(Error::parse(
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let popularity = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("bad popularity {:?}", &record[1])))?;
        out.push(PopularityLabel {
            asset_id: record[0].to_string(),
            popularity,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(user: &str, asset: Option<&str>, ts: i64) -> EventRecord {
        EventRecord::new(user, asset, "view", ts).unwrap()
    }

    #[test]
    fn parses_single_row() {
        let text = "user_id,asset_id,event_type,timestamp_ms\nu1,a1,view,1000\n";
        let events = parse_events(text.as_bytes()).unwrap();
        assert_eq!(events, vec![ev("u1", Some("a1"), 1000)]);
    }

    #[test]
    fn empty_asset_field_is_absent() {
        let text = "user_id,asset_id,event_type,timestamp_ms\nu1,,login,1000\n";
        let events = parse_events(text.as_bytes()).unwrap();
        assert_eq!(events[0].asset_id, None);
        assert_eq!(events[0].event_type, "login");
    }

    #[test]
    fn bad_timestamp_reports_line_two() {
        let text = "user_id,asset_id,event_type,timestamp_ms\nu1,a1,view,notatime\n";
        match parse_events(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let text = "user_id,asset_id,event_type,timestamp_ms\nu1,a1,view,1\nu2,a1,view\n";
        match parse_events(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_events("".as_bytes()).unwrap().is_empty());
        let header_only = "user_id,asset_id,event_type,timestamp_ms\n";
        assert!(parse_events(header_only.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn filter_drops_non_asset_events() {
        let events = vec![ev("u1", None, 1), ev("u2", None, 2)];
        assert!(filter_asset_events(&events, 0, 10).is_empty());
    }

    #[test]
    fn filter_keeps_window_in_order() {
        let events = vec![
            ev("u1", Some("a3"), 5),
            ev("u1", Some("a1"), 50),
            ev("u2", Some("a2"), 1),
            ev("u2", Some("a2"), 10),
        ];
        let kept = filter_asset_events(&events, 1, 10);
        assert_eq!(kept, vec![events[0].clone(), events[2].clone(), events[3].clone()]);
    }

    #[test]
    fn filter_mixed_fixture() {
        // window [100, 200]: keep rows 1 (boundary), 3 (inside); drop 0 (no asset),
        // 2 (after window), 4 (before window)
        let events = vec![
            ev("u1", None, 150),
            ev("u1", Some("a1"), 100),
            ev("u2", Some("a2"), 201),
            ev("u2", Some("a1"), 200),
            ev("u3", Some("a3"), 99),
        ];
        let kept = filter_asset_events(&events, 100, 200);
        assert_eq!(kept, vec![events[1].clone(), events[3].clone()]);
    }

    #[test]
    fn ghost_threshold_three() {
        let events = vec![
            ev("u1", Some("a1"), 1),
            ev("u2", Some("a2"), 2),
            ev("u1", Some("a2"), 3),
            ev("u3", Some("a1"), 4),
            ev("u3", Some("a2"), 5),
        ];
        let kept = remove_ghost_assets(&events, 3).unwrap();
        assert!(kept.iter().all(|e| e.asset_id.as_deref() == Some("a2")));
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn ghost_min_one_is_identity_and_zero_errors() {
        let events = vec![ev("u1", Some("a1"), 1), ev("u2", Some("a2"), 2)];
        assert_eq!(remove_ghost_assets(&events, 1).unwrap(), events);
        assert!(remove_ghost_assets(&events, 0).is_err());
    }

    #[test]
    fn sequences_keep_revisits() {
        let events = vec![
            ev("u1", Some("a1"), 1),
            ev("u1", Some("a2"), 2),
            ev("u1", Some("a1"), 3),
        ];
        let seqs = build_sequences(&events);
        assert_eq!(seqs[0].assets, ["a1", "a2", "a1"]);
    }

    #[test]
    fn sequences_collapse_consecutive_duplicates() {
        let events = vec![
            ev("u1", Some("a2"), 3),
            ev("u1", Some("a1"), 1),
            ev("u1", Some("a1"), 2),
        ];
        let seqs = build_sequences(&events);
        assert_eq!(seqs[0].assets, ["a1", "a2"]);
    }

    #[test]
    fn sequences_per_user_and_stable_ties() {
        let events = vec![
            ev("u2", Some("b1"), 7),
            ev("u1", Some("a2"), 5),
            ev("u1", Some("a1"), 5),
            ev("u2", Some("b2"), 7),
        ];
        let seqs = build_sequences(&events);
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].user_id, "u1");
        assert_eq!(seqs[0].assets, ["a2", "a1"]);
        assert_eq!(seqs[1].assets, ["b1", "b2"]);
    }

    #[test]
    fn popularity_excludes_creator() {
        let events = vec![
            ev("u1", Some("a1"), 1),
            ev("u2", Some("a1"), 2),
            ev("u3", Some("a1"), 3),
            ev("u2", Some("a1"), 4),
            ev("u9", Some("a2"), 1),
        ];
        let creators: HashMap<String, String> = [("a1", "u1"), ("a2", "u9")]
            .into_iter()
            .map(|(a, u)| (a.to_string(), u.to_string()))
            .collect();
        let labels = compute_popularity(&events, &creators).unwrap();
        assert_eq!(labels[0].popularity, 2);
        assert_eq!(labels[1].popularity, 0);
    }

    #[test]
    fn popularity_missing_creator_lists_asset() {
        let events = vec![ev("u1", Some("lonely"), 1)];
        let err = compute_popularity(&events, &HashMap::new()).unwrap_err();
        assert!(err.to_string().contains("lonely"));
    }

    #[test]
    fn sequences_and_labels_round_trip() {
        let seqs = vec![
            AssetSequence { user_id: "u1".into(), assets: vec!["a".into(), "b".into()] },
            AssetSequence { user_id: "u2".into(), assets: vec!["c".into()] },
        ];
        let mut buf = Vec::new();
        write_sequences(&seqs, &mut buf).unwrap();
        assert_eq!(read_sequences(buf.as_slice()).unwrap(), seqs);

        let labels = vec![PopularityLabel { asset_id: "a".into(), popularity: 3 }];
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), labels);
    }

    fn arb_events() -> impl Strategy<Value = Vec<EventRecord>> {
        prop::collection::vec((0u8..5, prop::option::weighted(0.8, 0u8..10), 0i64..100), 0..80)
            .prop_map(|rows| {
                rows.into_iter()
                    .map(|(u, a, t)| {
                        let asset = a.map(|a| format!("a{a}"));
                        EventRecord::new(format!("u{u}"), asset.as_deref(), "view", t).unwrap()
                    })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn filters_are_idempotent(events in arb_events(), lo in 0i64..50, span in 0i64..60, k in 1usize..5) {
            let once = filter_asset_events(&events, lo, lo + span);
            prop_assert_eq!(filter_asset_events(&once, lo, lo + span), once.clone());
            let g = remove_ghost_assets(&once, k).unwrap();
            prop_assert_eq!(remove_ghost_assets(&g, k).unwrap(), g);
        }

        #[test]
        fn ghost_filter_matches_count_then_filter(events in arb_events(), k in 1usize..6) {
            let asset_events: Vec<_> = events.iter().filter(|e| e.asset_id.is_some()).cloned().collect();
            let kept = remove_ghost_assets(&asset_events, k).unwrap();
            // independent oracle: per-event linear count
            let expected: Vec<_> = asset_events.iter().filter(|e| {
                asset_events.iter().filter(|o| o.asset_id == e.asset_id).count() >= k
            }).cloned().collect();
            prop_assert_eq!(&kept, &expected);
            for e in &asset_events {
                let before = asset_events.iter().filter(|o| o.asset_id == e.asset_id).count();
                let after = kept.iter().filter(|o| o.asset_id == e.asset_id).count();
                prop_assert!(after <= before);
                if before >= k { prop_assert_eq!(after, before); }
            }
        }

        #[test]
        fn sequence_lengths_before_collapse_sum_to_events(events in arb_events()) {
            let filtered = filter_asset_events(&events, 0, 100);
            // rebuild without collapse: total per-user event count
            let seqs = build_sequences(&filtered);
            let users: BTreeSet<_> = filtered.iter().map(|e| e.user_id.clone()).collect();
            prop_assert_eq!(seqs.len(), users.len());
            let total: usize = seqs.iter().map(|s| {
                filtered.iter().filter(|e| e.user_id == s.user_id).count()
            }).sum();
            prop_assert_eq!(total, filtered.len());
            for s in &seqs {
                prop_assert!(s.assets.windows(2).all(|w| w[0] != w[1]));
            }
        }

        #[test]
        fn popularity_matches_set_oracle_and_ignores_order(events in arb_events(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let asset_events: Vec<_> = events.into_iter().filter(|e| e.asset_id.is_some()).collect();
            let creators: HashMap<String, String> = (0..10).map(|a| (format!("a{a}"), format!("u{}", a % 5))).collect();
            let labels = compute_popularity(&asset_events, &creators).unwrap();
            for l in &labels {
                let mut set = std::collections::HashSet::new();
                for e in &asset_events {
                    if e.asset_id.as_deref() == Some(l.asset_id.as_str()) && e.user_id != creators[&l.asset_id] {
                        set.insert(e.user_id.clone());
                    }
                }
                prop_assert_eq!(l.popularity, set.len() as u64);
            }
            let mut shuffled = asset_events.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(compute_popularity(&shuffled, &creators).unwrap(), labels);
        }
    }
}
