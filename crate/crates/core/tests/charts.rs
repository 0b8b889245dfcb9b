use num_rational::Ratio;
use proptest::prelude::*;
use singlab::birational::{
    default_t_grid, rlct_from_charts, rlct_volume_fit, Chart, ChartSet, ExactRlct, VolumeProfile,
};

fn chart_strategy(d: usize) -> impl Strategy<Value = Chart> {
    (prop::collection::vec(0u32..5, d), prop::collection::vec(0u32..7, d), 0..d).prop_map(|(mut k, h, j)| {
        if k.iter().all(|v| *v == 0) {
            k[j] = 1;
        }
        Chart { k, h }
    })
}

fn chart_set() -> impl Strategy<Value = ChartSet> {
    (1usize..6).prop_flat_map(|d| {
        prop::collection::vec(chart_strategy(d), 1..5).prop_map(|charts| ChartSet::new(charts).unwrap())
    })
}

fn min_ratio(c: &Chart) -> Ratio<u64> {
    c.k.iter()
        .zip(&c.h)
        .filter(|(k, _)| **k > 0)
        .map(|(&k, &h)| Ratio::new(h as u64 + 1, 2 * k as u64))
        .min()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn permuting_charts_and_coordinates_changes_nothing(cs in chart_set(), seed in any::<u64>()) {
        let base = rlct_from_charts(&cs).unwrap();
        let mut permuted = cs.clone();
        permuted.charts.rotate_left(seed as usize % cs.charts.len());
        for (a, c) in permuted.charts.iter_mut().enumerate() {
            let d = c.k.len();
            let shift = (seed as usize).wrapping_add(a) % d;
            c.k.rotate_left(shift);
            c.h.rotate_left(shift);
            if seed & 1 == 1 {
                c.k.reverse();
                c.h.reverse();
            }
        }
        prop_assert_eq!(rlct_from_charts(&permuted).unwrap(), base);
    }

    #[test]
    fn a_chart_with_larger_ratios_is_irrelevant(cs in chart_set(), extra_h in 0u32..20) {
        let base = rlct_from_charts(&cs).unwrap();
        let d = cs.charts[0].k.len();
        // (h + 1)/2 with h ≥ 2λ exceeds λ
        let floor = (*base.lambda.numer() * 2 / *base.lambda.denom()) as u32 + 1;
        let mut k = vec![0; d];
        k[0] = 1;
        let mut h = vec![0; d];
        h[0] = floor + extra_h;
        let mut more = cs.clone();
        more.charts.push(Chart { k, h });
        prop_assert!(min_ratio(more.charts.last().unwrap()) > base.lambda);
        prop_assert_eq!(rlct_from_charts(&more).unwrap(), base);
    }

    #[test]
    fn lambda_is_the_smallest_chart_ratio(cs in chart_set()) {
        let e = rlct_from_charts(&cs).unwrap();
        let smallest = cs.charts.iter().map(min_ratio).min().unwrap();
        prop_assert_eq!(e.lambda, smallest);
        prop_assert!(e.multiplicity >= 1 && e.multiplicity <= cs.charts[0].k.len());
    }
}

#[test]
fn reference_values() {
    let cases: [(&str, Ratio<u64>, usize); 4] = [
        (r#"[{"k":[1],"h":[0]}]"#, Ratio::new(1, 2), 1),
        (r#"[{"k":[1,1],"h":[0,0]}]"#, Ratio::new(1, 2), 2),
        (r#"[{"k":[1,0],"h":[0,0]},{"k":[1,2],"h":[0,3]}]"#, Ratio::new(1, 2), 1),
        (r#"[{"k":[2,1],"h":[0,0]}]"#, Ratio::new(1, 4), 1),
    ];
    for (json, lambda, m) in cases {
        let got = rlct_from_charts(&ChartSet::from_json(json).unwrap()).unwrap();
        assert_eq!(got, ExactRlct { lambda, multiplicity: m }, "{json}");
    }
    for d in 1..6 {
        let e = rlct_from_charts(&ChartSet::quadratic_reference(d)).unwrap();
        assert_eq!(e.lambda, Ratio::new(d as u64, 2));
        assert_eq!(e.multiplicity, 1);
    }
}

#[test]
fn malformed_chart_files_are_rejected() {
    for bad in [
        "[]",
        r#"[{"k":[0,0],"h":[0,0]}]"#,
        r#"[{"k":[1],"h":[0,0]}]"#,
        r#"[{"k":[1],"h":[0]},{"k":[1,1],"h":[0,0]}]"#,
        r#"[{"k":[1],"h":[0],"extra":1}]"#,
        r#"[{"k":[-1],"h":[0]}]"#,
    ] {
        assert!(ChartSet::from_json(bad).is_err(), "{bad}");
    }
}

#[test]
fn volume_fit_recovers_synthetic_laws() {
    let ts = default_t_grid(1.0, 12);
    for (lambda, m) in [(0.5, 1usize), (1.0, 1), (0.5, 2), (1.5, 3)] {
        let prof = VolumeProfile::synthetic(&ts, |t| 0.05 * t.powf(lambda) * (1.0 / t).ln().powi(m as i32 - 1));
        let e = rlct_volume_fit(&prof, 3).unwrap();
        assert!((e.lambda.unwrap() - lambda).abs() < 1e-9, "{lambda} {m}: {e:?}");
        assert_eq!(e.multiplicity, Some(m));
    }
}
