//! Threshold calibration: how often does the sign of a `Q̂` difference agree
//! with subjective judgement, as a function of the difference's magnitude?

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proxy::PairingMode;

/// Whether a subjective column measures quality (MOS) or degradation (DMOS).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Dmos,
    Mos,
}

impl Polarity {
    /// Maps a subjective score onto a degradation scale (larger = worse).
    pub fn degradation(self, score: f64) -> f64 {
        match self {
            Polarity::Dmos => score,
            Polarity::Mos => -score,
        }
    }

    pub fn parse(s: &str) -> Option<Polarity> {
        match s.to_ascii_lowercase().as_str() {
            "dmos" => Some(Polarity::Dmos),
            "mos" => Some(Polarity::Mos),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveEntry {
    pub reference_id: String,
    pub distorted_id: String,
    /// Subjective score, in the units and polarity of the source database.
    #[serde(rename = "score")]
    pub subjective: f64,
    /// Sequence-level proxy degradation of the distorted video.
    pub qhat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    /// Ascending bin edges; the last may be `+∞` for an overflow bin.
    pub bin_edges: Vec<f64>,
    /// `None` where a bin holds no trials.
    pub accuracy_per_bin: Vec<Option<f64>>,
    pub counts_per_bin: Vec<usize>,
    pub correct_per_bin: Vec<usize>,
    pub mode: PairingMode,
}

impl AccuracyCurve {
    pub fn bins(&self) -> usize {
        self.counts_per_bin.len()
    }

    pub fn total_trials(&self) -> usize {
        self.counts_per_bin.iter().sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin_low", "bin_high", "count", "correct", "accuracy"])?;
        for i in 0..self.bins() {
            w.write_record([
                self.bin_edges[i].to_string(),
                self.bin_edges[i + 1].to_string(),
                self.counts_per_bin[i].to_string(),
                self.correct_per_bin[i].to_string(),
                self.accuracy_per_bin[i].map_or(String::new(), |a| a.to_string()),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Width-2 bins from 0 to 30 plus an overflow bin.
pub fn default_bin_edges() -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=15).map(|i| 2.0 * i as f64).collect();
    edges.push(f64::INFINITY);
    edges
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidInput("need at least two bin edges".into()));
    }
    if edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("bin edges must be strictly ascending".into()));
    }
    Ok(())
}

fn bin_of(edges: &[f64], d: f64) -> Option<usize> {
    if d < edges[0] || d >= *edges.last().unwrap() {
        return None;
    }
    // first edge strictly greater than d, minus one
    Some(edges.partition_point(|&e| e <= d) - 1)
}

/// Ranking accuracy of `Q̂` differences per bin of `|Q̂ᵢ − Q̂ⱼ|`.
///
/// Every unordered pair matching `mode` (same reference for single-source,
/// different references for dual-source) is a trial unless the two subjective
/// scores tie. A trial is correct when `sign(Q̂ᵢ − Q̂ⱼ)` equals the sign of the
/// difference in subjective degradation; equal `Q̂` never counts as correct.
pub fn ranking_accuracy_curve(
    entries: &[SubjectiveEntry],
    polarity: Polarity,
    mode: PairingMode,
    bin_edges: &[f64],
) -> Result<AccuracyCurve> {
    check_edges(bin_edges)?;
    let bins = bin_edges.len() - 1;
    let mut counts = vec![0usize; bins];
    let mut correct = vec![0usize; bins];
    let degradation: Vec<f64> = entries.iter().map(|e| polarity.degradation(e.subjective)).collect();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let same = entries[i].reference_id == entries[j].reference_id;
            if same != (mode == PairingMode::SingleSource) {
                continue;
            }
            let ds = degradation[i] - degradation[j];
            if ds == 0.0 {
                continue;
            }
            let dq = entries[i].qhat - entries[j].qhat;
            let Some(bin) = bin_of(bin_edges, dq.abs()) else {
                continue;
            };
            counts[bin] += 1;
            if dq != 0.0 && (dq > 0.0) == (ds > 0.0) {
                correct[bin] += 1;
            }
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyCurve);
    }
    Ok(AccuracyCurve {
        bin_edges: bin_edges.to_vec(),
        accuracy_per_bin: counts
            .iter()
            .zip(&correct)
            .map(|(&n, &k)| (n > 0).then(|| k as f64 / n as f64))
            .collect(),
        counts_per_bin: counts,
        correct_per_bin: correct,
        mode,
    })
}

/// Smallest bin lower edge from which every occupied bin reaches `target`.
pub fn select_threshold(curve: &AccuracyCurve, target: f64) -> Result<f64> {
    if !(target > 0.5 && target <= 1.0) {
        return Err(Error::InvalidInput(format!("target {target} outside (0.5, 1]")));
    }
    if curve.total_trials() == 0 {
        return Err(Error::EmptyCurve);
    }
    for i in 0..curve.bins() {
        let tail = &curve.accuracy_per_bin[i..];
        let occupied = tail.iter().flatten().count();
        if occupied > 0 && tail.iter().flatten().all(|&a| a >= target) {
            return Ok(curve.bin_edges[i]);
        }
    }
    Err(Error::UnattainableTarget { target })
}

/// Reads `reference_id,distorted_id,score,qhat` rows.
pub fn read_entries(path: &Path) -> Result<Vec<SubjectiveEntry>> {
    csv::Reader::from_path(path)?
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(r: &str, d: &str, subj: f64, qhat: f64) -> SubjectiveEntry {
        SubjectiveEntry { reference_id: r.into(), distorted_id: d.into(), subjective: subj, qhat }
    }

    fn curve(acc: &[f64], edges: &[f64]) -> AccuracyCurve {
        AccuracyCurve {
            bin_edges: edges.to_vec(),
            accuracy_per_bin: acc.iter().map(|&a| Some(a)).collect(),
            counts_per_bin: vec![100; acc.len()],
            correct_per_bin: acc.iter().map(|a| (a * 100.0) as usize).collect(),
            mode: PairingMode::DualSource,
        }
    }

    #[test]
    fn perfect_proxy_is_always_right() {
        let entries: Vec<_> = (0..12).map(|i| entry(&format!("r{}", i % 3), &format!("d{i}"), i as f64, 2.0 * i as f64)).collect();
        for mode in [PairingMode::SingleSource, PairingMode::DualSource] {
            let c = ranking_accuracy_curve(&entries, Polarity::Dmos, mode, &default_bin_edges()).unwrap();
            assert!(c.accuracy_per_bin.iter().flatten().all(|&a| a == 1.0));
        }
    }

    #[test]
    fn sign_convention_single_pair() {
        let entries = [entry("r", "a", 3.0, 10.0), entry("r", "b", 4.0, 4.0)];
        let c = ranking_accuracy_curve(&entries, Polarity::Dmos, PairingMode::SingleSource, &default_bin_edges()).unwrap();
        assert_eq!(c.total_trials(), 1);
        assert_eq!(c.counts_per_bin[3], 1, "|10 - 4| = 6 falls in [6, 8)");
        assert_eq!(c.correct_per_bin[3], 0);
        // the same numbers read as MOS agree with the Q̂ order
        let c = ranking_accuracy_curve(&entries, Polarity::Mos, PairingMode::SingleSource, &default_bin_edges()).unwrap();
        assert_eq!(c.correct_per_bin[3], 1);
    }

    #[test]
    fn no_pairs_of_mode_is_empty() {
        let entries = [entry("r1", "a", 3.0, 10.0), entry("r2", "b", 4.0, 4.0)];
        assert!(matches!(
            ranking_accuracy_curve(&entries, Polarity::Dmos, PairingMode::SingleSource, &default_bin_edges()),
            Err(Error::EmptyCurve)
        ));
    }

    #[test]
    fn threshold_examples() {
        let edges = [0.0, 2.0, 6.0, f64::INFINITY];
        assert_eq!(select_threshold(&curve(&[0.80, 0.97, 0.99], &edges), 0.96).unwrap(), 2.0);
        assert_eq!(select_threshold(&curve(&[0.96, 0.97, 0.99], &edges), 0.96).unwrap(), 0.0);
        assert!(matches!(
            select_threshold(&curve(&[0.5, 0.6, 0.7], &edges), 0.96),
            Err(Error::UnattainableTarget { .. })
        ));
        assert!(select_threshold(&curve(&[0.5, 0.6, 0.7], &edges), 0.5).is_err());
    }

    #[test]
    fn later_failing_bin_pushes_threshold_up() {
        let edges = [0.0, 2.0, 4.0, 6.0, f64::INFINITY];
        let c = curve(&[0.99, 0.90, 0.97, 0.99], &edges);
        assert_eq!(select_threshold(&c, 0.96).unwrap(), 4.0);
    }

    #[test]
    fn bin_lookup() {
        let e = default_bin_edges();
        assert_eq!(bin_of(&e, 0.0), Some(0));
        assert_eq!(bin_of(&e, 1.999), Some(0));
        assert_eq!(bin_of(&e, 2.0), Some(1));
        assert_eq!(bin_of(&e, 1e9), Some(15));
        assert_eq!(bin_of(&[0.0, 1.0], 1.0), None);
    }

    proptest! {
        #[test]
        fn trial_count_and_monotone_invariance(
            rows in prop::collection::vec((0u8..3, -20.0f64..20.0, 0.0f64..40.0), 2..25),
        ) {
            let entries: Vec<_> = rows.iter().enumerate()
                .map(|(i, &(r, s, q))| entry(&format!("r{r}"), &format!("d{i}"), s, q))
                .collect();
            let transformed: Vec<_> = entries.iter()
                .map(|e| SubjectiveEntry { subjective: (e.subjective / 10.0).exp() * 3.0 + 1.0, ..e.clone() })
                .collect();
            for mode in [PairingMode::SingleSource, PairingMode::DualSource] {
                let mut expected = 0;
                for i in 0..entries.len() {
                    for j in i + 1..entries.len() {
                        let same = entries[i].reference_id == entries[j].reference_id;
                        if same == (mode == PairingMode::SingleSource) && entries[i].subjective != entries[j].subjective {
                            expected += 1;
                        }
                    }
                }
                let a = ranking_accuracy_curve(&entries, Polarity::Dmos, mode, &default_bin_edges());
                let b = ranking_accuracy_curve(&transformed, Polarity::Dmos, mode, &default_bin_edges());
                match (a, b) {
                    (Ok(a), Ok(b)) => {
                        prop_assert_eq!(a.total_trials(), expected);
                        prop_assert_eq!(a.correct_per_bin, b.correct_per_bin);
                    }
                    (Err(_), Err(_)) => prop_assert_eq!(expected, 0),
                    _ => prop_assert!(false, "transform changed emptiness"),
                }
            }
        }

        #[test]
        fn looser_target_never_raises_threshold(
            acc in prop::collection::vec(0.5f64..=1.0, 1..10),
            t1 in 0.51f64..=1.0, t2 in 0.51f64..=1.0,
        ) {
            let mut edges: Vec<f64> = (0..acc.len()).map(|i| i as f64 * 2.0).collect();
            edges.push(f64::INFINITY);
            let c = curve(&acc, &edges);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if let Ok(strict) = select_threshold(&c, hi) {
                prop_assert!(select_threshold(&c, lo).unwrap() <= strict);
            }
        }
    }
}
