use std::path::PathBuf;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use vranslot::deployment::{run_deployment, DeploymentConfig};
use vranslot::metrics::*;
use vranslot::Error;

/// Percentiles by sorting and indexing with integer rank arithmetic.
fn oracle(samples: &[f64]) -> LatencyDistribution {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    let at = |p: usize| s[((p * n).div_ceil(100)).max(1) - 1];
    let mut mean = 0.0;
    for v in &s {
        mean += v;
    }
    LatencyDistribution {
        count: n,
        min: s[0],
        p10: at(10),
        q1: at(25),
        median: at(50),
        q3: at(75),
        p90: at(90),
        max: s[n - 1],
        mean: mean / n as f64,
    }
}

fn lognormal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = LogNormal::new(5.0, 0.6).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

fn fixed_bundle() -> MetricsBundle {
    let dist = |scale: f64| summarize(&(1..=20).map(|i| scale * f64::from(i)).collect::<Vec<_>>()).unwrap();
    let counters = |bits: u64| TrafficCounters {
        slots: 6,
        tbs_ok: 6,
        tbs_failed: 0,
        bits_delivered: bits,
        deadline_misses: 1,
        goodput_mbps: bits as f64 / 5000.0,
    };
    MetricsBundle {
        run: RunInfo {
            profile: "ep-rfsoc".into(),
            backend: "t2-emulated".into(),
            n_instances: 2,
            duration_slots: 10,
            seed: 7,
            clock: "virtual".into(),
        },
        instances: (0..2)
            .map(|i| InstanceMetrics {
                instance: i,
                cores: (8 * (i as usize + 1)..8 * (i as usize + 2)).collect(),
                failed_at_slot: if i == 1 { Some(9) } else { None },
                failure_reason: None,
                dl: counters(6_000_000),
                ul: counters(1_500_000),
                metrics: vec![
                    MetricBlock { direction: Direction::Dl, metric: "coding_us".into(), distribution: dist(7.25) },
                    MetricBlock { direction: Direction::Ul, metric: "coding_us".into(), distribution: dist(19.5) },
                ],
            })
            .collect(),
        ..MetricsBundle::default()
    }
}

#[test]
fn summary_examples() {
    let d = summarize(&[5.0]).unwrap();
    assert_eq!(d, LatencyDistribution { count: 1, min: 5.0, p10: 5.0, q1: 5.0, median: 5.0, q3: 5.0, p90: 5.0, max: 5.0, mean: 5.0 });
    let d = summarize(&(1..=100).map(f64::from).collect::<Vec<_>>()).unwrap();
    assert_eq!((d.median, d.p10, d.p90), (50.0, 10.0, 90.0));
    assert!(matches!(summarize(&[]), Err(Error::EmptyInput)));
}

#[test]
fn ten_thousand_lognormal_samples_match_sort_oracle() {
    for seed in 0..5 {
        let s = lognormal(10_000, seed);
        assert_eq!(summarize(&s).unwrap(), oracle(&s));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summary_matches_oracle(n in 1usize..10_000, seed in any::<u64>()) {
        let s = lognormal(n, seed);
        let d = summarize(&s).unwrap();
        prop_assert_eq!(d, oracle(&s));
        prop_assert!(d.min <= d.p10 && d.p10 <= d.q1 && d.q1 <= d.median && d.median <= d.q3 && d.q3 <= d.p90 && d.p90 <= d.max);
    }
}

#[test]
fn empty_bundle_has_header_only() {
    let b = MetricsBundle::default();
    assert_eq!(report_string(&b, ReportFormat::Csv).unwrap(), format!("{CSV_HEADER}\n"));
    let v: serde_json::Value = serde_json::from_str(&report_string(&b, ReportFormat::Json).unwrap()).unwrap();
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    assert_eq!(v["instances"].as_array().unwrap().len(), 0);
}

#[test]
fn json_round_trip() {
    let b = fixed_bundle();
    let text = report_string(&b, ReportFormat::Json).unwrap();
    let back: MetricsBundle = serde_json::from_str(&text).unwrap();
    assert_eq!(back, b);
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Set `UPDATE_GOLDEN=1` to rewrite the files after an intended change.
#[test]
fn reports_match_golden_files() {
    let b = fixed_bundle();
    for (format, file) in [(ReportFormat::Json, "report.json"), (ReportFormat::Csv, "report.csv")] {
        let text = report_string(&b, format).unwrap();
        assert_eq!(text, report_string(&b, format).unwrap());
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::write(golden(file), &text).unwrap();
        }
        assert_eq!(text, std::fs::read_to_string(golden(file)).unwrap(), "{file}");
    }
}

#[test]
fn csv_has_one_row_per_metric() {
    let b = fixed_bundle();
    let csv = report_string(&b, ReportFormat::Csv).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("1,0,DL,coding_us,20,"));
}

#[test]
fn seven_instance_run_has_seven_blocks() {
    let cfg = DeploymentConfig { n_instances: 7, duration_slots: 50, ..Default::default() };
    let b = run_deployment(&cfg).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report_string(&b, ReportFormat::Json).unwrap()).unwrap();
    assert_eq!(v["instances"].as_array().unwrap().len(), 7);
    let csv = report_string(&b, ReportFormat::Csv).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7 * 4);
}
