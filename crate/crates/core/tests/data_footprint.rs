use std::collections::{BTreeMap, HashSet};

use approx::assert_relative_eq;
use greenrec::data::{IdIndex, SparseRatingMatrix};
use greenrec::footprint::{
    calibrate, conversion_table, greenness, raw_greenness, recipe_co2, to_grams, Category, EmissionFactor, GreennessTable, Unit,
};
use greenrec::Dataset;
use proptest::prelude::*;

fn triples() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
    prop::collection::vec((0u8..30, 0u8..30, 0u8..=5), 1..120)
}

proptest! {
    #[test]
    fn matrix_round_trips_interactions(rows in triples()) {
        let raw: Vec<(String, String, f64)> = rows.iter().map(|&(u, i, r)| (format!("u{u}"), format!("i{i}"), r as f64)).collect();
        let ds = Dataset::from_triples(raw).unwrap();
        let m = ds.matrix();
        prop_assert_eq!(m.nnz(), ds.len());
        let mut from_ds: Vec<(usize, usize, u64)> = ds.interactions().iter().map(|x| (x.user, x.item, x.rating.to_bits())).collect();
        let mut from_m: Vec<(usize, usize, u64)> = m.entries().map(|(u, i, r)| (u, i, r.to_bits())).collect();
        from_ds.sort_unstable();
        from_m.sort_unstable();
        prop_assert_eq!(&from_ds, &from_m);
        let mut by_item: Vec<(usize, usize, u64)> = m.entries_by_item().map(|(u, i, r)| (u, i, r.to_bits())).collect();
        by_item.sort_unstable();
        prop_assert_eq!(&from_ds, &by_item);
        prop_assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn duplicates_keep_one_rating_per_pair(rows in triples()) {
        let raw: Vec<(String, String, f64)> = rows.iter().map(|&(u, i, r)| (format!("u{u}"), format!("i{i}"), r as f64)).collect();
        let ds = Dataset::from_triples(raw).unwrap();
        let distinct: HashSet<(u8, u8)> = rows.iter().map(|&(u, i, _)| (u, i)).collect();
        prop_assert_eq!(ds.len(), distinct.len());
    }

    #[test]
    fn id_index_is_a_bijection(ids in prop::collection::hash_set("[a-z0-9]{1,6}", 0..50)) {
        let ids: Vec<String> = ids.into_iter().collect();
        let index = IdIndex::from_ids(&ids).unwrap();
        prop_assert_eq!(index.len(), ids.len());
        for (pos, id) in ids.iter().enumerate() {
            prop_assert_eq!(index.get(id), Some(pos));
            prop_assert_eq!(index.id(pos), id.as_str());
        }
    }

    #[test]
    fn means_match_direct_averages(rows in triples()) {
        let m = SparseRatingMatrix::from_entries(30, 30, rows.iter().map(|&(u, i, r)| ((u as usize, i as usize), r as f64)).collect::<BTreeMap<_, _>>().into_iter().map(|((u, i), r)| (u, i, r)));
        let um = m.user_means();
        for (u, mean) in um.iter().enumerate() {
            let row = m.user_row(u);
            match mean {
                None => prop_assert!(row.is_empty()),
                Some(v) => assert_relative_eq!(*v, row.iter().map(|x| x.1).sum::<f64>() / row.len() as f64, max_relative = 1e-12),
            }
        }
    }

    #[test]
    fn greenness_decreases_with_co2(mut co2 in prop::collection::vec(1e-3f64..100.0, 2..40)) {
        co2.sort_by(f64::total_cmp);
        co2.dedup();
        prop_assume!(co2.len() >= 2);
        let cal = calibrate(&co2).unwrap();
        let g: Vec<f64> = co2.iter().map(|&c| greenness(c, &cal).unwrap()).collect();
        for w in g.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert!(g.iter().all(|x| (0.0..=5.0).contains(x)));
        assert_relative_eq!(g[0], 5.0, max_relative = 1e-12);
        prop_assert!(g[g.len() - 1].abs() < 1e-12);
    }

    #[test]
    fn raw_greenness_is_strictly_decreasing(a in 1e-4f64..1e3, b in 1e-4f64..1e3) {
        prop_assume!(a < b);
        prop_assert!(raw_greenness(a).unwrap() > raw_greenness(b).unwrap());
    }

    #[test]
    fn to_grams_is_linear(a in 0.01f64..100.0, b in 0.01f64..100.0, cat in 0usize..7, unit in 0usize..6) {
        let (cat, unit) = (Category::ALL[cat], Unit::ALL[unit]);
        match conversion_table().rate(cat, unit) {
            None => prop_assert!(to_grams(cat, unit, a).is_err()),
            Some(rate) => {
                assert_relative_eq!(to_grams(cat, unit, a + b).unwrap(), to_grams(cat, unit, a).unwrap() + to_grams(cat, unit, b).unwrap(), max_relative = 1e-12);
                prop_assert_eq!(to_grams(cat, unit, a).unwrap(), a * rate);
            }
        }
    }

    #[test]
    fn recipe_co2_ignores_ingredient_order(parts in prop::collection::vec((0.0f64..500.0, 0.0f64..60.0), 1..12), seed in any::<u64>()) {
        let factors: Vec<EmissionFactor> = parts.iter().enumerate().map(|(k, &(_, f))| EmissionFactor::new(format!("x{k}"), f).unwrap()).collect();
        let list: Vec<(f64, &EmissionFactor)> = parts.iter().zip(&factors).map(|(&(g, _), f)| (g, f)).collect();
        let mut shuffled = list.clone();
        let n = shuffled.len();
        for k in 0..n {
            shuffled.swap(k, (seed as usize).wrapping_add(k * 7) % n);
        }
        let a = recipe_co2(&list, 50.0).unwrap();
        let b = recipe_co2(&shuffled, 50.0).unwrap();
        assert_relative_eq!(a.co2_kg, b.co2_kg, max_relative = 1e-12, epsilon = 1e-15);
        prop_assert_eq!(a.kept, b.kept);
        let expected: f64 = parts.iter().filter(|p| p.0 >= 50.0).map(|p| p.0 / 1000.0 * p.1).sum();
        assert_relative_eq!(a.co2_kg, expected, max_relative = 1e-12, epsilon = 1e-15);
    }
}

#[test]
fn threshold_is_inclusive() {
    let beef = EmissionFactor::new("beef", 60.0).unwrap();
    let salt = EmissionFactor::new("salt", 0.1).unwrap();
    let r = recipe_co2(&[(50.0, &beef), (49.99, &salt)], 50.0).unwrap();
    assert_eq!((r.kept, r.dropped), (1, 1));
    assert_relative_eq!(r.co2_kg, 3.0, max_relative = 1e-12);
}

#[test]
fn greenness_table_is_calibrated_on_its_own_values() {
    let t = GreennessTable::from_co2(&[Some(0.2), None, Some(5.0), Some(1.0)]).unwrap();
    assert_eq!(t.greenness(0), Some(5.0));
    assert_eq!(t.greenness(1), None);
    assert_eq!(t.greenness(2), Some(0.0));
    let mid = t.greenness(3).unwrap();
    let expected = 5.0 * (2f64.ln() - (1.2f64).ln()) / (6f64.ln() - (1.2f64).ln());
    assert_relative_eq!(mid, expected, max_relative = 1e-12);
}
