use std::collections::HashSet;

use greenrec::synth::{generate, SynthParams, PLACEHOLDER_TIMESTAMP};

#[test]
fn default_preset_shape() {
    let params = SynthParams::recipe_like(7);
    let (data, green) = generate(&params).unwrap();
    assert_eq!(data.len(), 20_000);
    assert!(data.n_users() <= 2000 && data.n_items() <= 400);

    let fives = data.interactions().iter().filter(|x| x.rating == 5.0).count() as f64 / data.len() as f64;
    assert!((fives - 0.77).abs() <= 0.02, "share of fives {fives}");

    let pairs: HashSet<(usize, usize)> = data.interactions().iter().map(|x| (x.user, x.item)).collect();
    assert_eq!(pairs.len(), data.len());
    assert!(data.interactions().iter().all(|x| x.timestamp == Some(PLACEHOLDER_TIMESTAMP)));

    let mut counts = vec![0usize; data.n_items()];
    for x in data.interactions() {
        counts[x.item] += 1;
    }
    counts.extend(std::iter::repeat_n(0, params.n_items - data.n_items()));
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let top = counts[..params.n_items / 100].iter().sum::<usize>() as f64 / (params.n_items / 100) as f64;
    let median = counts[params.n_items / 2] as f64;
    assert!(top >= 10.0 * median, "top-1% mean {top}, median {median}");

    let g: Vec<f64> = green.values().map(Option::unwrap).collect();
    assert_eq!(g.len(), data.n_items());
    assert!(g.iter().all(|x| (0.0..=5.0).contains(x)));
    let mut bins = [0usize; 10];
    for x in &g {
        bins[((x / 0.5) as usize).min(9)] += 1;
    }
    let mode_bin = (0..10).max_by_key(|&b| bins[b]).unwrap();
    let mode = mode_bin as f64 * 0.5 + 0.25;
    assert!((mode - params.greenness_mode).abs() <= 0.5, "mode {mode}, bins {bins:?}");
}

#[test]
fn zero_signal_gives_independent_ratings() {
    let params = SynthParams {
        rating_signal: 0.0,
        ..SynthParams::recipe_like(3)
    };
    let (data, _) = generate(&params).unwrap();
    let mut hist = [0usize; 6];
    for x in data.interactions() {
        hist[x.rating as usize] += 1;
    }
    for (h, p) in hist.iter().zip(params.rating_pmf) {
        let share = *h as f64 / data.len() as f64;
        assert!((share - p).abs() <= 0.01, "{share} vs {p}");
    }
}

#[test]
fn presets_and_validation() {
    assert!(SynthParams::preset("recipe-like", 1).is_ok());
    assert_eq!(SynthParams::preset("tiny", 1).unwrap().n_users, 200);
    assert!(SynthParams::preset("galaxy", 1).is_err());
    let bad = SynthParams {
        item_popularity_exponent: 0.0,
        ..SynthParams::default()
    };
    assert!(generate(&bad).is_err());
    let bad = SynthParams {
        greenness_mode: 6.0,
        ..SynthParams::default()
    };
    assert!(generate(&bad).is_err());
}

#[test]
fn seeds_separate_datasets() {
    let a = generate(&SynthParams::preset("tiny", 1).unwrap()).unwrap();
    let b = generate(&SynthParams::preset("tiny", 1).unwrap()).unwrap();
    let c = generate(&SynthParams::preset("tiny", 2).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}
