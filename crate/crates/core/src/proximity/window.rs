use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ProximityError;
use crate::event::Ambience;
use crate::identity::TokenBytes;

pub const RSSI_RANGE: std::ops::RangeInclusive<i32> = -127..=20;
pub const TX_POWER_RANGE: std::ops::RangeInclusive<i32> = -40..=20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RssiSample {
    pub peer_token: TokenBytes,
    pub rssi_dbm: i32,
    pub tx_power_dbm: i32,
    pub timestamp_ms: i64,
    pub ambience: Ambience,
}

impl RssiSample {
    pub fn new(
        peer_token: TokenBytes,
        rssi_dbm: i32,
        tx_power_dbm: i32,
        timestamp_ms: i64,
        ambience: Ambience,
    ) -> Result<Self, ProximityError> {
        let sample = RssiSample { peer_token, rssi_dbm, tx_power_dbm, timestamp_ms, ambience };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<(), ProximityError> {
        if !RSSI_RANGE.contains(&self.rssi_dbm) {
            return Err(ProximityError::InvalidSample(format!("rssi {} dBm", self.rssi_dbm)));
        }
        if !TX_POWER_RANGE.contains(&self.tx_power_dbm) {
            return Err(ProximityError::InvalidSample(format!("tx power {} dBm", self.tx_power_dbm)));
        }
        if self.timestamp_ms < 0 {
            return Err(ProximityError::InvalidSample(format!("timestamp {}", self.timestamp_ms)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    pub peer_token: TokenBytes,
    pub samples: Vec<RssiSample>,
    pub window_start_ms: i64,
    pub window_len_ms: i64,
}

impl ObservationWindow {
    pub fn end_ms(&self) -> i64 {
        self.window_start_ms + self.window_len_ms
    }
}

/// Slice a time-sorted stream into sliding windows, one series per peer token.
///
/// Windows start at `origin + k * slide_ms` for `k >= 0`, where the origin is
/// the first sample's timestamp; windows that would begin before the origin
/// are never produced. Empty windows are omitted. Output is ordered by
/// `(window_start_ms, peer_token)`.
pub fn make_windows(
    stream: &[RssiSample],
    window_ms: i64,
    slide_ms: i64,
) -> Result<Vec<ObservationWindow>, ProximityError> {
    if slide_ms <= 0 || window_ms < slide_ms {
        return Err(ProximityError::InvalidWindowing { window_ms, slide_ms });
    }
    if let Some(i) = stream.windows(2).position(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
        return Err(ProximityError::InvalidStream(i + 1));
    }
    let Some(first) = stream.first() else {
        return Ok(Vec::new());
    };
    let origin = first.timestamp_ms;

    let mut by_peer: BTreeMap<TokenBytes, Vec<RssiSample>> = BTreeMap::new();
    for s in stream {
        by_peer.entry(s.peer_token).or_default().push(*s);
    }

    let mut out = Vec::new();
    for (peer, samples) in by_peer {
        // Window k covers [origin + k*slide, origin + k*slide + window).
        // Sample at offset o lies in windows k with k*slide <= o < k*slide + window.
        let mut k = 0i64;
        let last = samples.last().expect("non-empty group").timestamp_ms - origin;
        let mut lo = 0usize;
        while k * slide_ms <= last {
            let start = origin + k * slide_ms;
            let end = start + window_ms;
            while lo < samples.len() && samples[lo].timestamp_ms < start {
                lo += 1;
            }
            let hi = lo + samples[lo..].partition_point(|s| s.timestamp_ms < end);
            if hi > lo {
                out.push(ObservationWindow {
                    peer_token: peer,
                    samples: samples[lo..hi].to_vec(),
                    window_start_ms: start,
                    window_len_ms: window_ms,
                });
                k += 1;
            } else {
                // Jump to the first window that can contain the next sample.
                let next = samples[lo].timestamp_ms - origin;
                let jump = ((next - window_ms) / slide_ms + 1).max(k + 1);
                k = jump;
            }
        }
    }
    out.sort_by_key(|w| (w.window_start_ms, w.peer_token));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(peer: u8, t: i64) -> RssiSample {
        RssiSample::new(TokenBytes([peer; 16]), -60, 0, t, Ambience::Indoor).unwrap()
    }

    /// Brute force: every k from 0 up to the last timestamp, every peer, keep non-empty.
    fn reference(stream: &[RssiSample], window: i64, slide: i64) -> Vec<(i64, TokenBytes, usize)> {
        let Some(first) = stream.first() else { return vec![] };
        let origin = first.timestamp_ms;
        let last = stream.iter().map(|s| s.timestamp_ms).max().unwrap();
        let mut peers: Vec<_> = stream.iter().map(|s| s.peer_token).collect();
        peers.sort();
        peers.dedup();
        let mut out = vec![];
        let mut k = 0;
        while origin + k * slide <= last {
            let start = origin + k * slide;
            for p in &peers {
                let n = stream
                    .iter()
                    .filter(|s| s.peer_token == *p && s.timestamp_ms >= start && s.timestamp_ms < start + window)
                    .count();
                if n > 0 {
                    out.push((start, *p, n));
                }
            }
            k += 1;
        }
        out
    }

    fn summary(ws: &[ObservationWindow]) -> Vec<(i64, TokenBytes, usize)> {
        ws.iter().map(|w| (w.window_start_ms, w.peer_token, w.samples.len())).collect()
    }

    #[test]
    fn single_sample_gives_one_window() {
        let ws = make_windows(&[sample(1, 0)], 10_000, 5_000).unwrap();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].window_start_ms, 0);
    }

    #[test]
    fn empty_stream() {
        assert!(make_windows(&[], 10_000, 5_000).unwrap().is_empty());
    }

    #[test]
    fn twenty_seconds_at_one_hertz_matches_enumeration() {
        let stream: Vec<_> = (0..20).map(|i| sample(1, i * 1000)).collect();
        let ws = make_windows(&stream, 10_000, 5_000).unwrap();
        let expected = reference(&stream, 10_000, 5_000);
        assert_eq!(summary(&ws), expected);
        // starts 0, 5, 10, 15 s; last two windows are partial
        assert_eq!(expected.iter().map(|e| e.2).collect::<Vec<_>>(), vec![10, 10, 10, 5]);
    }

    #[test]
    fn gaps_and_interleaved_peers_match_enumeration() {
        let mut stream = vec![];
        for t in [0, 1000, 2000, 40_000, 41_000, 90_000] {
            stream.push(sample(1, t));
        }
        for t in [500, 30_000, 95_000] {
            stream.push(sample(2, t));
        }
        stream.sort_by_key(|s| s.timestamp_ms);
        let ws = make_windows(&stream, 10_000, 5_000).unwrap();
        assert_eq!(summary(&ws), reference(&stream, 10_000, 5_000));
        for w in &ws {
            assert!(w.samples.iter().all(|s| s.timestamp_ms >= w.window_start_ms && s.timestamp_ms < w.end_ms()));
        }
    }

    #[test]
    fn rejects_unsorted_and_bad_params() {
        let stream = vec![sample(1, 10), sample(1, 5)];
        assert_eq!(make_windows(&stream, 10, 5), Err(ProximityError::InvalidStream(1)));
        assert!(make_windows(&[], 5, 10).is_err());
        assert!(make_windows(&[], 5, 0).is_err());
    }

    #[test]
    fn sample_ranges_enforced() {
        assert!(RssiSample::new(TokenBytes::default(), -128, 0, 0, Ambience::Unknown).is_err());
        assert!(RssiSample::new(TokenBytes::default(), 21, 0, 0, Ambience::Unknown).is_err());
        assert!(RssiSample::new(TokenBytes::default(), -50, -41, 0, Ambience::Unknown).is_err());
        assert!(RssiSample::new(TokenBytes::default(), -50, 0, -1, Ambience::Unknown).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn windowing_partition(
                times in proptest::collection::vec((0u8..3, 0i64..120_000), 0..80),
                window in 1i64..20_000,
                slide_frac in 1i64..=4,
            ) {
                let slide = (window / slide_frac).max(1);
                let mut stream: Vec<_> = times.iter().map(|(p, t)| sample(*p, *t)).collect();
                stream.sort_by_key(|s| s.timestamp_ms);
                let ws = make_windows(&stream, window, slide).unwrap();
                prop_assert_eq!(summary(&ws), reference(&stream, window, slide));
                let cap = ((window + slide - 1) / slide) as usize;
                for (i, s) in stream.iter().enumerate() {
                    let hits = ws.iter().filter(|w| w.peer_token == s.peer_token
                        && w.samples.iter().any(|x| std::ptr::eq(x, s) || (x.timestamp_ms == s.timestamp_ms))).count();
                    prop_assert!(hits <= cap, "sample {} in {} windows", i, hits);
                }
            }
        }
    }
}
