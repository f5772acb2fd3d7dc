//! Statistical checks on generated datasets.

use digitfreq::data::{generate_dataset, DatasetSpec};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

fn critical(dof: f64) -> f64 {
    ChiSquared::new(dof).unwrap().inverse_cdf(0.999)
}

#[test]
fn digit_positions_are_uniform() {
    let samples = generate_dataset(&DatasetSpec::new(6, 60_000, 31)).unwrap();
    for position in 0..6 {
        let mut observed = [0f64; 10];
        for s in &samples {
            observed[s.number.digits()[position] as usize] += 1.0;
        }
        let expected = samples.len() as f64 / 10.0;
        let stat: f64 = observed.iter().map(|o| (o - expected).powi(2) / expected).sum();
        assert!(stat < critical(9.0), "position {position}: chi-square {stat}");
    }
}

#[test]
fn label_entries_follow_binomial() {
    let d = 10;
    let samples = generate_dataset(&DatasetSpec::new(d, 30_000, 17)).unwrap();
    let pmf = Binomial::new(0.1, d as u64).unwrap();
    // Pool counts of 4 or more so every expected cell is large.
    let mut observed = [0f64; 5];
    for s in &samples {
        let c = s.label.0[3] as usize;
        observed[c.min(4)] += 1.0;
    }
    let n = samples.len() as f64;
    let mut expected = [0f64; 5];
    for k in 0..4 {
        expected[k] = n * pmf.pmf(k as u64);
    }
    expected[4] = n - expected[..4].iter().sum::<f64>();
    let stat: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    assert!(stat < critical(4.0), "chi-square {stat}");
}

#[test]
fn labels_match_character_counts() {
    for d in [1, 6, 10, 15] {
        let samples = generate_dataset(&DatasetSpec::new(d, 5_000, d as u64)).unwrap();
        for s in &samples {
            let text = s.number.to_string();
            assert_eq!(text.len(), d);
            for (digit, ch) in ('0'..='9').enumerate() {
                assert_eq!(text.matches(ch).count(), s.label.0[digit] as usize, "{text}");
            }
        }
    }
}

#[test]
fn no_leading_zeros_profile() {
    let spec = DatasetSpec {
        leading_zeros: false,
        ..DatasetSpec::new(6, 20_000, 3)
    };
    let samples = generate_dataset(&spec).unwrap();
    assert!(samples.iter().all(|s| s.number.digits()[0] != 0));
    assert!(samples.iter().all(|s| s.number.value() >= 100_000));
}
