mod common;

use attrib_bench::stats::{
    cles, inter_metric_correlation, krippendorff_alpha, pearson, significance_grid, spearman,
    stability_analysis, wilcoxon_signed_rank, Alternative, ScoreTable,
};
use common::{brute_force_wilcoxon, naive_pearson, naive_ranks, rng};
use rand::seq::SliceRandom;
use rand::Rng;

fn table(metric: &str, hib: bool, methods: &[&str], rows: Vec<Vec<f64>>) -> ScoreTable {
    let images = (0..rows.len()).collect();
    ScoreTable::new(metric, hib, methods.iter().map(|m| m.to_string()).collect(), images, rows).unwrap()
}

#[test]
fn six_positive_differences_exact_p() {
    let a = [0.3, 1.2, 2.0, 0.7, 5.5, 1.1];
    let b = [0.0; 6];
    let o = wilcoxon_signed_rank(&a, &b, Alternative::Greater).unwrap();
    assert_eq!(o.p_value, 0.015625);
    assert!(o.exact);
    assert_eq!(o.p_value, brute_force_wilcoxon(&a, &b, true));
}

#[test]
fn exact_p_matches_enumeration_with_ties() {
    let mut r = rng(1);
    for n in 5..=12 {
        for _ in 0..20 {
            // Integer-valued scores create tied |differences| and zeros.
            let a: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64).collect();
            for (alt, greater) in [(Alternative::Greater, true), (Alternative::Less, false)] {
                let Ok(o) = wilcoxon_signed_rank(&a, &b, alt) else {
                    continue;
                };
                if o.inconclusive {
                    continue;
                }
                let oracle = brute_force_wilcoxon(&a, &b, greater);
                assert!((o.p_value - oracle).abs() < 1e-12, "n={n}: {} vs {oracle}", o.p_value);
            }
        }
    }
}

#[test]
fn swapping_samples_mirrors_p() {
    let mut r = rng(2);
    for _ in 0..50 {
        let a: Vec<f64> = (0..9).map(|_| r.random::<f64>()).collect();
        let b: Vec<f64> = (0..9).map(|_| r.random::<f64>()).collect();
        let g = wilcoxon_signed_rank(&a, &b, Alternative::Greater).unwrap();
        let l = wilcoxon_signed_rank(&b, &a, Alternative::Less).unwrap();
        assert_eq!(g.p_value, l.p_value);
    }
}

#[test]
fn large_samples_use_normal_approximation() {
    let a: Vec<f64> = (0..40).map(|i| i as f64 + 0.5).collect();
    let b = vec![0.0; 40];
    let o = wilcoxon_signed_rank(&a, &b, Alternative::Greater).unwrap();
    assert!(!o.exact);
    assert!(o.p_value < 1e-6 && o.significant);
}

#[test]
fn spearman_closed_form_example() {
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
}

#[test]
fn spearman_is_pearson_of_ranks() {
    let mut r = rng(3);
    for _ in 0..100 {
        let n = r.random_range(3..30);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0..8) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        if let Some(s) = spearman(&a, &b) {
            let oracle = naive_pearson(&naive_ranks(&a), &naive_ranks(&b));
            assert!((s - oracle).abs() < 1e-12);
            assert!((pearson(&naive_ranks(&a), &naive_ranks(&b)).unwrap() - oracle).abs() < 1e-12);
        }
    }
}

#[test]
fn correlation_of_metric_with_itself_and_monotone_transform() {
    let mut r = rng(4);
    let rows: Vec<Vec<f64>> = (0..20).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
    let t = table("A", true, &["m1", "m2"], rows);
    let u = t.map_scores(|v| (3.0 * v).exp());
    let u = ScoreTable::new("B", true, u.methods().to_vec(), u.images().to_vec(), (0..20).map(|i| u.row(i).to_vec()).collect()).unwrap();
    let c = inter_metric_correlation(&[t, u], &[]);
    assert!((c.get("A", "A").unwrap() - 1.0).abs() < 1e-12);
    assert!((c.get("A", "B").unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(c.coverage[0][1], 2);
}

#[test]
fn grid_baseline_only_has_no_significant_cell() {
    let mut r = rng(5);
    let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![r.random::<f64>()]).collect();
    let g = significance_grid(&[table("Del_MoRF", false, &["random"], rows)], "random").unwrap();
    assert!(!g.is_significant("Del_MoRF", "random"));
    assert!(g.cells.iter().all(|c| c.outcome.as_ref().is_none_or(|o| !o.significant)));
}

#[test]
fn grid_respects_orientation_and_normalizes_effects() {
    // Lower is better: "good" has smaller scores on every image, "great" even smaller.
    let rows: Vec<Vec<f64>> = (0..12)
        .map(|i| {
            let base = 10.0 + i as f64;
            vec![base - 4.0, base - 1.0 - 0.01 * i as f64, base]
        })
        .collect();
    let t = table("Del_MoRF", false, &["great", "good", "random"], rows);
    let g = significance_grid(std::slice::from_ref(&t), "random").unwrap();
    let great = g.cell("Del_MoRF", "great").unwrap().outcome.clone().unwrap();
    let good = g.cell("Del_MoRF", "good").unwrap().outcome.clone().unwrap();
    assert!(great.significant && good.significant);
    assert_eq!(great.normalized_effect, Some(1.0));
    assert!(good.normalized_effect.unwrap() < 1.0);
    assert_eq!(g.best("Del_MoRF"), Some("great"));

    let flipped = ScoreTable::new("Del_MoRF", true, t.methods().to_vec(), t.images().to_vec(), (0..12).map(|i| t.row(i).to_vec()).collect()).unwrap();
    let g = significance_grid(&[flipped], "random").unwrap();
    assert!(!g.is_significant("Del_MoRF", "great"));
}

#[test]
fn krippendorff_identical_and_shuffled_rankings() {
    let identical: Vec<Vec<f64>> = (0..20).map(|_| vec![1.0, 2.0, 3.0, 4.0]).collect();
    let t = table("M", true, &["a", "b", "c", "d"], identical);
    assert!((krippendorff_alpha(&t).unwrap() - 1.0).abs() < 1e-12);

    let mut r = rng(6);
    let shuffled: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            let mut v = vec![1.0, 2.0, 3.0, 4.0, 5.0];
            v.shuffle(&mut r);
            v
        })
        .collect();
    let t = table("M", true, &["a", "b", "c", "d", "e"], shuffled);
    assert!(krippendorff_alpha(&t).unwrap().abs() <= 0.05);
}

#[test]
fn krippendorff_reversed_fixture_and_orientation() {
    let rows = vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]];
    let t = table("M", true, &["a", "b", "c"], rows.clone());
    assert!((krippendorff_alpha(&t).unwrap() + 2.0 / 3.0).abs() < 1e-12);
    let lower = table("M", false, &["a", "b", "c"], rows);
    assert_eq!(krippendorff_alpha(&t), krippendorff_alpha(&lower));
    let constant = table("M", true, &["a", "b"], vec![vec![1.0, 1.0], vec![2.0, 2.0]]);
    assert_eq!(krippendorff_alpha(&constant), None);
}

#[test]
fn cles_examples_and_complement() {
    assert_eq!(cles(&[5.0, 5.0, 5.0, 0.0], &[1.0, 1.0, 1.0, 1.0], true), 0.75);
    assert_eq!(cles(&[1.0, 0.0], &[1.0, 0.0], true), 0.5);
    assert_eq!(cles(&[1.0, 1.0, 1.0, 2.0], &[2.0, 2.0, 2.0, 1.0], false), 0.75);
    let mut r = rng(7);
    for _ in 0..200 {
        let a: Vec<f64> = (0..10).map(|_| r.random_range(0..3) as f64).collect();
        let b: Vec<f64> = (0..10).map(|_| r.random_range(0..3) as f64).collect();
        assert_eq!(cles(&a, &b, true) + cles(&b, &a, true), 1.0);
    }
}

#[test]
fn stability_of_pure_noise_and_constant_metrics() {
    let mut r = rng(8);
    let noise: Vec<Vec<f64>> = (0..100).map(|_| (0..100).map(|_| r.random::<f64>()).collect()).collect();
    let s = stability_analysis(&noise).unwrap();
    assert!((s.noise_fraction - 1.0).abs() <= 0.05, "{}", s.noise_fraction);
    assert!(s.snr.iter().all(|v| *v >= 0.0));

    let constant: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64; 3]).collect();
    let s = stability_analysis(&constant).unwrap();
    assert_eq!(s.noise_fraction, 0.0);
    assert!(s.snr[1].is_infinite());
}
