use distclust::ingest::{add_noise, load_stock_csv, read_stock_csv, synthetic_ohlc, write_stock_csv, IngestOptions};
use distclust::SampleGroup;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/synthetic_ohlc_40.csv");

/// CSV body lines for a small market where symbol `t` trades on the first
/// `5 + 3t` days, followed by a few malformed rows.
fn ragged_lines(seed: u64) -> Vec<String> {
    let tickers = 6;
    // Records come out date-major: record `r` is day `r / tickers`.
    let records: Vec<_> = synthetic_ohlc(tickers, 20, seed)
        .into_iter()
        .enumerate()
        .filter(|(r, _)| r / tickers < 5 + 3 * (r % tickers))
        .map(|(_, rec)| rec)
        .collect();
    let mut csv = Vec::new();
    write_stock_csv(&records, &mut csv).unwrap();
    let mut lines: Vec<String> = String::from_utf8(csv).unwrap().lines().skip(1).map(str::to_string).collect();
    lines.push("2016-06-01,BAD,abc,1,1,1,0".into());
    lines.push("not-a-date,BAD,1,1,1,1,0".into());
    lines.push("2016-06-02,,1,1,1,1,0".into());
    lines
}

fn parse(lines: &[String], min_days: usize) -> distclust::ingest::StockData {
    let body = format!("date,symbol,open,close,low,high,volume\n{}\n", lines.join("\n"));
    read_stock_csv(body.as_bytes(), &IngestOptions { min_days, strict: false }).unwrap()
}

#[test]
fn bundled_fixture_is_reproducible() {
    let mut regenerated = Vec::new();
    write_stock_csv(&synthetic_ohlc(40, 252, 2016), &mut regenerated).unwrap();
    assert!(std::fs::read(FIXTURE).unwrap() == regenerated, "fixture differs from synthetic_ohlc(40, 252, 2016)");

    let data = load_stock_csv(FIXTURE, &IngestOptions::default()).unwrap();
    assert_eq!(data.groups.len(), 40);
    assert_eq!(data.total_samples(), 40 * 252);
    assert_eq!(data.skipped_rows + data.duplicate_rows + data.inconsistent_rows, 0);
    assert!(data.groups.iter().all(|g| g.dim() == 4 && g.len() == 252));
}

#[test]
fn samples_are_conserved() {
    for seed in 0..10 {
        let lines = ragged_lines(seed);
        for min_days in [1, 8, 14, 30] {
            let data = parse(&lines, min_days);
            assert_eq!(data.rows_read, lines.len());
            assert_eq!(data.skipped_rows, 3);
            assert_eq!(data.total_samples(), data.rows_read - data.skipped_rows - data.dropped_rows);
            let survivors = (0..6).filter(|t| 5 + 3 * t >= min_days).count();
            assert_eq!(data.groups.len(), survivors);
            assert_eq!(data.dropped_symbols.len(), 6 - survivors);
        }
    }
}

#[test]
fn noise_moments_match_the_requested_sigma() {
    let groups: Vec<SampleGroup> = (0..250)
        .map(|g| SampleGroup::new(format!("g{g}"), vec![vec![3.0; 4]; 1000]).unwrap())
        .collect();
    let noised = add_noise(&groups, 1.0, &mut ChaCha8Rng::seed_from_u64(90));
    let addends: Vec<f64> = noised.iter().flat_map(|g| g.samples().iter().flatten().map(|x| x - 3.0)).collect();
    assert_eq!(addends.len(), 1_000_000);
    let n = addends.len() as f64;
    let mean = addends.iter().sum::<f64>() / n;
    let var = addends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.005, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "variance {var}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn row_order_does_not_matter(data_seed in 0u64..1000, shuffle_seed in any::<u64>()) {
        let lines = ragged_lines(data_seed);
        let mut shuffled = lines.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let (a, b) = (parse(&lines, 8), parse(&shuffled, 8));
        prop_assert_eq!(a.groups, b.groups);
        prop_assert_eq!(a.dropped_symbols, b.dropped_symbols);
        prop_assert_eq!(a.skipped_rows, b.skipped_rows);
    }

    #[test]
    fn noise_is_seed_deterministic(seed in any::<u64>(), sigma in 0.0f64..5.0) {
        let groups = parse(&ragged_lines(3), 1).groups;
        let once = add_noise(&groups, sigma, &mut ChaCha8Rng::seed_from_u64(seed));
        let twice = add_noise(&groups, sigma, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&once, &twice);
        if sigma > 0.0 {
            let other = add_noise(&groups, sigma, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
            prop_assert_ne!(&once, &other);
        }
    }
}
