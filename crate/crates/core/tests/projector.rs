mod common;

use proptest::prelude::*;
use qgrad::projector::{Distribution, ProjectionSpec, Projector, RawGradientRecord};
use qgrad::rng::hash3;
use qgrad::Error;

fn rademacher(seed: u64, d: usize, k: usize) -> Projector {
    Projector::new(ProjectionSpec::new(seed, d, k, Distribution::Rademacher)).unwrap()
}

/// Materializes `R` straight from the counter-based stream: entry `(r, c)`
/// is bit `c % 64` of `hash3(seed, r, c / 64)`, mapped to `±1/sqrt(k)`.
fn brute_force_matrix(seed: u64, d: usize, k: usize) -> Vec<Vec<f64>> {
    let s = 1.0 / (k as f64).sqrt();
    (0..k)
        .map(|r| {
            (0..d)
                .map(|c| {
                    if (hash3(seed, r as u64, (c / 64) as u64) >> (c % 64)) & 1 == 1 {
                        s
                    } else {
                        -s
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn unit_input_gives_first_column() {
    let p = rademacher(7, 6, 3);
    let r = brute_force_matrix(7, 6, 3);
    let mut x = vec![0f32; 6];
    x[0] = 1.0;
    let y = p.project_values(&x).unwrap();
    for row in 0..3 {
        assert_eq!(y[row], r[row][0] as f32);
        assert_eq!(y[row].abs(), (1.0 / 3f64.sqrt()) as f32);
    }
}

#[test]
fn matches_brute_force_matrix() {
    let (d, k) = (300, 70);
    let r = brute_force_matrix(11, d, k);
    let p = rademacher(11, d, k);
    let mut g = common::rng(1);
    for _ in 0..5 {
        let x = common::gaussian(&mut g, d);
        let y = p.project_values(&x).unwrap();
        for row in 0..k {
            let want: f64 = (0..d).map(|c| r[row][c] * x[c] as f64).sum();
            assert!((y[row] as f64 - want).abs() < 1e-5, "row {row}: {} vs {want}", y[row]);
        }
    }
}

#[test]
fn gaussian_matches_its_entries() {
    let (d, k) = (130, 20);
    let p = Projector::new(ProjectionSpec::new(3, d, k, Distribution::Gaussian)).unwrap();
    let x = common::gaussian(&mut common::rng(2), d);
    let y = p.project_values(&x).unwrap();
    for row in 0..k {
        let want: f64 = (0..d).map(|c| p.entry(row, c) as f64 * x[c] as f64).sum();
        assert!((y[row] as f64 - want).abs() < 1e-5);
    }
}

#[test]
fn scaling_input_scales_output() {
    let p = rademacher(7, 500, 64);
    let x = common::gaussian(&mut common::rng(3), 500);
    let x2: Vec<f32> = x.iter().map(|v| 2.0 * v).collect();
    let (y, y2) = (p.project_values(&x).unwrap(), p.project_values(&x2).unwrap());
    for (a, b) in y.iter().zip(&y2) {
        assert!((b - 2.0 * a).abs() <= 1e-6 * (2.0 * a).abs().max(1e-6));
    }
}

#[test]
fn block_size_and_threads_do_not_change_results() {
    let (d, k) = (5000, 200);
    let mut g = common::rng(4);
    let xs: Vec<Vec<f32>> = (0..9).map(|_| common::gaussian(&mut g, d)).collect();
    let refs: Vec<&[f32]> = xs.iter().map(|v| v.as_slice()).collect();
    let small = rademacher(5, d, k).with_block_cols(128).unwrap();
    let large = rademacher(5, d, k).with_block_cols(4096).unwrap();
    let a = small.project_batch(&refs).unwrap();
    let b = large.project_batch(&refs).unwrap();
    assert_eq!(a, b);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let c = one.install(|| large.project_batch(&refs).unwrap());
    let e = four.install(|| small.project_batch(&refs).unwrap());
    assert_eq!(a, c);
    assert_eq!(a, e);
    let single: Vec<Vec<f32>> = refs.iter().map(|x| large.project_values(x).unwrap()).collect();
    assert_eq!(a, single);
}

#[test]
fn records_are_checked() {
    let p = rademacher(7, 8, 4);
    let rec = |values: Vec<f32>| RawGradientRecord {
        sample_id: "a".into(),
        checkpoint_id: "c".into(),
        values,
    };
    assert!(matches!(
        p.project(&rec(vec![0.0; 7])),
        Err(Error::Dimension { expected: 8, actual: 7, .. })
    ));
    let mut bad = vec![0.0; 8];
    bad[3] = f32::NAN;
    assert!(matches!(p.project(&rec(bad)), Err(Error::Data(_))));
    assert_eq!(p.project(&rec(vec![0.0; 8])).unwrap(), vec![0.0; 4]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear(seed in any::<u64>(), a in -10f32..10f32, d in 64usize..400, k in 1usize..64) {
        let p = rademacher(seed, d, k.min(d));
        let mut g = common::rng(seed);
        let x = common::gaussian(&mut g, d);
        let y = common::gaussian(&mut g, d);
        let combo: Vec<f32> = x.iter().zip(&y).map(|(xi, yi)| a * xi + yi).collect();
        let (px, py, pc) = (
            p.project_values(&x).unwrap(),
            p.project_values(&y).unwrap(),
            p.project_values(&combo).unwrap(),
        );
        let norm = |v: &[f32]| v.iter().map(|t| (*t as f64).powi(2)).sum::<f64>().sqrt();
        let bound = 1e-5 * (a.abs() as f64 * norm(&x) + norm(&y));
        for m in 0..px.len() {
            let dev = (pc[m] as f64 - (a as f64 * px[m] as f64 + py[m] as f64)).abs();
            prop_assert!(dev <= bound, "dev {dev} > {bound}");
        }
    }
}
