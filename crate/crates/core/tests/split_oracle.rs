//! Greedy split search against exhaustive enumeration.

mod common;

use digitfreq::seed::rng_from_seed;

#[test]
fn greedy_split_equals_exhaustive_enumeration() {
    let mut rng = rng_from_seed(2024);
    let mut splits_found = 0;
    for instance in 0..500 {
        match common::split_instance(&mut rng, instance) {
            Ok(found) => splits_found += found as usize,
            Err(msg) => panic!("{msg}"),
        }
    }
    assert!(splits_found > 300, "only {splits_found} instances had a split");
}

#[test]
fn second_stream_of_instances() {
    let mut rng = rng_from_seed(7);
    for instance in 0..500 {
        if let Err(msg) = common::split_instance(&mut rng, instance) {
            panic!("{msg}");
        }
    }
}
