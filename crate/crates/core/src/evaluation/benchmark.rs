use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlation::{krcc, srocc};
use super::ftest::f_test;
use super::logistic::{logistic_fit, LogisticFit};
use super::metrics::{FrMetric, MetricPolarity, VideoInput};
use crate::calibration::Polarity;
use crate::error::{Error, IoContext, Result};
use crate::plot::scatter_svg;
use crate::video_io::{load_sequence, Lineage, RawGeometry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub reference_path: PathBuf,
    pub distorted_path: PathBuf,
    /// Subjective score as published (MOS or DMOS).
    pub score: f64,
    #[serde(default)]
    pub polarity: Polarity,
}

impl BenchmarkEntry {
    pub fn degradation(&self) -> f64 {
        self.polarity.degradation(self.score)
    }
}

/// Reads `reference_path,distorted_path,score[,polarity]`. Relative paths are
/// resolved against the CSV's directory.
pub fn read_benchmark_csv(path: &Path) -> Result<Vec<BenchmarkEntry>> {
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_path(path)?.deserialize::<BenchmarkEntry>().enumerate() {
        let mut e = row?;
        if !e.score.is_finite() {
            return Err(Error::InvalidInput(format!("{}: row {} has a non-finite score", path.display(), i + 1)));
        }
        for p in [&mut e.reference_path, &mut e.distorted_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        out.push(e);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub alpha: f64,
    /// Needed only for headerless raw videos.
    pub raw_geometry: Option<RawGeometry>,
    /// Metric the F-test column is computed against.
    pub anchor: Option<String>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            alpha: 0.05,
            raw_geometry: None,
            anchor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub polarity: MetricPolarity,
    /// Raw metric outputs in entry order.
    pub scores: Vec<f64>,
    pub srocc: f64,
    pub krcc: f64,
    pub fit: LogisticFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantinedMetric {
    pub name: String,
    pub reason: String,
}

/// Correlations are computed between degradation-oriented metric scores and
/// subjective degradation, so a good metric has positive SROCC and KRCC
/// whatever its native scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub entries: usize,
    pub alpha: f64,
    pub subjective: Vec<f64>,
    pub metrics: Vec<MetricReport>,
    /// `verdicts[i][j]`: F-test of metric i against metric j.
    pub verdicts: Vec<Vec<i8>>,
    pub quarantined: Vec<QuarantinedMetric>,
    pub anchor: Option<String>,
}

fn display_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Scores every metric on every entry and compares them.
///
/// A metric that fails on any entry, or whose scores are degenerate, is
/// quarantined and left out of the verdict matrix.
pub fn run_benchmark(
    entries: &[BenchmarkEntry],
    metrics: &[Box<dyn FrMetric>],
    cfg: &BenchmarkConfig,
) -> Result<CorrelationReport> {
    if entries.len() < 5 {
        return Err(Error::InvalidInput(format!("benchmark needs at least 5 entries, got {}", entries.len())));
    }
    if metrics.is_empty() {
        return Err(Error::InvalidInput("no metrics configured".into()));
    }
    let subjective: Vec<f64> = entries.iter().map(BenchmarkEntry::degradation).collect();

    let per_entry: Vec<Vec<std::result::Result<f64, String>>> = entries
        .par_iter()
        .map(|e| -> Result<Vec<_>> {
            let geom = cfg.raw_geometry.as_ref();
            let r = load_sequence(&e.reference_path, geom, Lineage::source(display_id(&e.reference_path)))?;
            let d = load_sequence(&e.distorted_path, geom, Lineage::source(display_id(&e.distorted_path)))?;
            let ri = VideoInput { path: &e.reference_path, video: &r };
            let di = VideoInput { path: &e.distorted_path, video: &d };
            Ok(metrics
                .iter()
                .map(|m| match m.score(ri, di) {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(v) => Err(format!("{}: non-finite score {v}", e.distorted_path.display())),
                    Err(err) => Err(format!("{}: {err}", e.distorted_path.display())),
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    let mut quarantined = Vec::new();
    for (k, metric) in metrics.iter().enumerate() {
        let name = metric.name().to_string();
        let scores: std::result::Result<Vec<f64>, String> = per_entry.iter().map(|row| row[k].clone()).collect();
        let analysed = scores.and_then(|scores| {
            let oriented: Vec<f64> = scores.iter().map(|&s| metric.polarity().orient(s)).collect();
            let s = srocc(&oriented, &subjective).map_err(|e| e.to_string())?;
            let t = krcc(&oriented, &subjective).map_err(|e| e.to_string())?;
            let fit = logistic_fit(&oriented, &subjective).map_err(|e| e.to_string())?;
            Ok(MetricReport {
                name: name.clone(),
                polarity: metric.polarity(),
                scores,
                srocc: s,
                krcc: t,
                fit,
            })
        });
        match analysed {
            Ok(r) => reports.push(r),
            Err(reason) => {
                log::warn!("metric `{name}` quarantined: {reason}");
                quarantined.push(QuarantinedMetric { name, reason });
            }
        }
    }

    let n = reports.len();
    let mut verdicts = vec![vec![0i8; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = f_test(&reports[i].fit.residuals, &reports[j].fit.residuals, cfg.alpha)?;
            verdicts[i][j] = v;
            verdicts[j][i] = -v;
        }
    }
    Ok(CorrelationReport {
        entries: entries.len(),
        alpha: cfg.alpha,
        subjective,
        metrics: reports,
        verdicts,
        quarantined,
        anchor: cfg.anchor.clone(),
    })
}

impl CorrelationReport {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m.name == name)
    }

    pub fn verdict(&self, a: &str, b: &str) -> Option<i8> {
        Some(self.verdicts[self.index_of(a)?][self.index_of(b)?])
    }

    /// Aligned text table. With an anchor metric each cell reads `x (y)`, where
    /// y is the F-test verdict of that row's metric against the anchor.
    pub fn render_table(&self) -> String {
        let anchor = self.anchor.as_deref().and_then(|a| self.index_of(a));
        let cell = |value: f64, i: usize| match anchor {
            Some(a) if a == i => format!("{value:.4} (-)"),
            Some(a) => format!("{value:.4} ({})", self.verdicts[i][a]),
            None => format!("{value:.4}"),
        };
        let rows: Vec<[String; 3]> = self
            .metrics
            .iter()
            .enumerate()
            .map(|(i, m)| [m.name.clone(), cell(m.srocc, i), cell(m.krcc, i)])
            .collect();
        let head = ["Metric".to_string(), "SROCC".to_string(), "KRCC".to_string()];
        let widths: Vec<usize> = (0..3)
            .map(|c| rows.iter().chain(std::iter::once(&head)).map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, r: &[String; 3]| {
            let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", r[0], r[1], r[2], w0 = widths[0], w1 = widths[1], w2 = widths[2]);
        };
        line(&mut out, &head);
        let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 4));
        for r in &rows {
            line(&mut out, r);
        }
        if let Some(a) = anchor {
            let _ = writeln!(
                out,
                "\n(y): F-test vs {} at alpha {}; 1 = row metric significantly better, -1 = worse, 0 = no difference",
                self.metrics[a].name, self.alpha
            );
        }
        for q in &self.quarantined {
            let _ = writeln!(out, "quarantined {}: {}", q.name, q.reason);
        }
        out
    }

    /// Writes `report.json`, `correlations.csv`, `verdicts.csv`, `table.txt`
    /// and one scatter plot per metric under `plots/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("plots")).at(dir)?;
        let json = dir.join("report.json");
        fs::write(&json, serde_json::to_vec_pretty(self)?).at(&json)?;
        let table = dir.join("table.txt");
        fs::write(&table, self.render_table()).at(&table)?;

        let mut w = csv::Writer::from_path(dir.join("correlations.csv"))?;
        w.write_record(["metric", "srocc", "krcc", "fit", "beta1", "beta2", "beta3", "beta4"])?;
        for m in &self.metrics {
            let mut rec = vec![
                m.name.clone(),
                m.srocc.to_string(),
                m.krcc.to_string(),
                format!("{:?}", m.fit.kind).to_lowercase(),
            ];
            rec.extend(m.fit.params.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().at(dir.join("correlations.csv"))?;

        let mut w = csv::Writer::from_path(dir.join("verdicts.csv"))?;
        let mut head = vec![String::new()];
        head.extend(self.metrics.iter().map(|m| m.name.clone()));
        w.write_record(&head)?;
        for (m, row) in self.metrics.iter().zip(&self.verdicts) {
            let mut rec = vec![m.name.clone()];
            rec.extend(row.iter().map(i8::to_string));
            w.write_record(&rec)?;
        }
        w.flush().at(dir.join("verdicts.csv"))?;

        for m in &self.metrics {
            let points: Vec<(f64, f64)> = m
                .scores
                .iter()
                .map(|&s| m.polarity.orient(s))
                .zip(self.subjective.iter().copied())
                .collect();
            let fit = m.fit.clone();
            let svg = scatter_svg(
                &format!("{} (SROCC {:.3})", m.name, m.srocc),
                "metric score (degradation-oriented)",
                "subjective degradation",
                &points,
                Some(&move |x| fit.predict(x)),
            );
            let safe: String = m.name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
            let p = dir.join("plots").join(format!("{safe}.svg"));
            fs::write(&p, svg).at(&p)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    /// Looks scores up by distorted path instead of reading video content.
    struct Table {
        name: String,
        values: HashMap<PathBuf, f64>,
    }

    impl FrMetric for Table {
        fn name(&self) -> &str {
            &self.name
        }
        fn polarity(&self) -> MetricPolarity {
            MetricPolarity::Degradation
        }
        fn score(&self, _r: VideoInput<'_>, d: VideoInput<'_>) -> Result<f64> {
            self.values.get(d.path).copied().ok_or_else(|| Error::Metric {
                name: self.name.clone(),
                reason: "no value".into(),
            })
        }
    }

    fn corpus(n: usize, seed: u64) -> (tempfile::TempDir, Vec<BenchmarkEntry>) {
        use crate::video_io::{save_sequence, ChromaFormat, Plane, VideoSequence};
        let dir = tempfile::tempdir().unwrap();
        let tiny = VideoSequence::from_luma(Lineage::source("v"), vec![Plane::filled(4, 4, 9)], 8, ChromaFormat::Mono).unwrap();
        let path = dir.path().join("v.y4m");
        save_sequence(&tiny, &path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n)
            .map(|i| BenchmarkEntry {
                reference_path: path.clone(),
                distorted_path: dir.path().join(format!("d{i}.y4m")),
                score: rng.random_range(0.0..100.0),
                polarity: Polarity::Dmos,
            })
            .collect::<Vec<_>>();
        for e in &entries {
            fs::copy(&path, &e.distorted_path).unwrap();
        }
        (dir, entries)
    }

    fn table(name: &str, entries: &[BenchmarkEntry], f: impl Fn(usize, f64) -> f64) -> Box<dyn FrMetric> {
        Box::new(Table {
            name: name.into(),
            values: entries.iter().enumerate().map(|(i, e)| (e.distorted_path.clone(), f(i, e.score))).collect(),
        })
    }

    #[test]
    fn oracle_metric_is_perfect() {
        let (_dir, entries) = corpus(12, 1);
        let report = run_benchmark(&entries, &[table("oracle", &entries, |_, s| s)], &BenchmarkConfig::default()).unwrap();
        assert_eq!(report.metrics[0].srocc, 1.0);
        assert_eq!(report.metrics[0].krcc, 1.0);
    }

    #[test]
    fn identical_metrics_tie_and_failures_are_quarantined() {
        let (_dir, entries) = corpus(10, 2);
        let metrics = vec![
            table("a", &entries, |i, s| s + (i as f64).sin() * 20.0),
            table("b", &entries, |i, s| s + (i as f64).sin() * 20.0),
            table("broken", &entries[..3], |_, s| s),
        ];
        let report = run_benchmark(&entries, &metrics, &BenchmarkConfig::default()).unwrap();
        assert_eq!(report.verdict("a", "b"), Some(0));
        assert_eq!(report.quarantined.len(), 1);
        assert_eq!(report.quarantined[0].name, "broken");
        assert_eq!(report.verdicts.len(), 2);
    }

    #[test]
    fn oracle_beats_noise() {
        let (dir, entries) = corpus(200, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..100.0)).collect();
        let metrics = vec![table("oracle", &entries, |i, s| s + (i % 7) as f64 * 0.1), table("random", &entries, |i, _| noise[i])];
        let cfg = BenchmarkConfig {
            anchor: Some("random".into()),
            ..BenchmarkConfig::default()
        };
        let report = run_benchmark(&entries, &metrics, &cfg).unwrap();
        assert_eq!(report.verdict("oracle", "random"), Some(1));
        assert_eq!(report.verdict("random", "oracle"), Some(-1));
        let table = report.render_table();
        assert!(table.contains("(1)") && table.contains("(-)"), "{table}");
        report.write(&dir.path().join("out")).unwrap();
        assert!(dir.path().join("out/plots/oracle.svg").exists());
        let again = run_benchmark(&entries, &metrics, &cfg).unwrap();
        assert_eq!(again, report);
    }

    #[test]
    fn csv_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("db.csv");
        fs::write(&p, "reference_path,distorted_path,score,polarity\nr.y4m,d.y4m,3.5,mos\n").unwrap();
        let e = read_benchmark_csv(&p).unwrap();
        assert_eq!(e[0].reference_path, dir.path().join("r.y4m"));
        assert_eq!(e[0].degradation(), -3.5);
    }
}
