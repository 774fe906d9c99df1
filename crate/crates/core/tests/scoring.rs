mod common;

use common::Corpus;
use qgrad::datastore::CheckpointManifest;
use qgrad::influence::{
    pair_influence, score_loaded, score_manifests, tracin_influence, DegeneratePolicy, GradientSeries, ScoreMode,
    ScoreOptions, ScoreTable,
};
use qgrad::quantizer::{quantize, QuantScheme};
use qgrad::selector::{rank, select_from_table, SelectionConfig, TieBreak};
use qgrad::Error;

const ETAS: [f64; 3] = [2e-5, 1.5e-5, 5e-6];

fn score(manifest: &std::path::Path, mode: ScoreMode) -> ScoreTable {
    score_manifests(manifest, manifest, ScoreOptions::new(mode)).unwrap()
}

fn column_major(t: &ScoreTable) -> Vec<f64> {
    (0..t.cols()).flat_map(|c| t.column(c)).collect()
}

#[test]
fn eight_bit_ranks_like_full_precision() {
    let corpus = Corpus::gaussian(1, 256, 100, &[10], &ETAS);
    let (fp_dir, q_dir) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fp = score(&corpus.write(fp_dir.path(), None), ScoreMode::LessFp);
    let q = score(&corpus.write(q_dir.path(), Some(QuantScheme::absmax(8).unwrap())), ScoreMode::Qless);
    let rho = common::spearman(&fp.column(0), &q.column(0));
    assert!(rho >= 0.95, "spearman {rho}");
}

#[test]
fn eight_bit_pairs_stay_close() {
    // One validation sample per task, so every table cell is a single pair.
    let corpus = Corpus::gaussian(2, 512, 60, &[1; 10], &ETAS);
    let (fp_dir, q_dir) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fp = score(&corpus.write(fp_dir.path(), None), ScoreMode::LessFp);
    let q = score(&corpus.write(q_dir.path(), Some(QuantScheme::absmax(8).unwrap())), ScoreMode::Qless);
    let eta_sum: f64 = ETAS.iter().sum();
    for (a, b) in fp.values().iter().zip(q.values()) {
        assert!((a - b).abs() <= 0.02 * eta_sum, "{a} vs {b}");
    }
}

#[test]
fn stored_scales_cancel() {
    let corpus = Corpus::gaussian(3, 128, 40, &[3, 2], &ETAS);
    for scheme in [QuantScheme::absmax(4).unwrap(), QuantScheme::sign(), QuantScheme::absmean(2).unwrap()] {
        let base_dir = tempfile::tempdir().unwrap();
        let base = score(&corpus.write(base_dir.path(), Some(scheme)), ScoreMode::Qless);
        for factor in [1e-3f32, 0.37, 9.5, 4e4] {
            let dir = tempfile::tempdir().unwrap();
            let scaled = score(&corpus.write_scaled(dir.path(), Some(scheme), factor), ScoreMode::Qless);
            assert_eq!(base.values(), scaled.values());
        }
    }
}

#[test]
fn uniform_eta_scaling_keeps_ranking() {
    let corpus = Corpus::gaussian(4, 128, 80, &[4, 4, 4], &ETAS);
    let dir = tempfile::tempdir().unwrap();
    let path = corpus.write(dir.path(), Some(QuantScheme::absmax(2).unwrap()));
    let m = CheckpointManifest::load(&path).unwrap();
    let options = ScoreOptions::new(ScoreMode::Qless);
    let base = score_loaded(&m, &m, options).unwrap();
    let config = SelectionConfig::with_fraction(0.1).unwrap();
    for c in [1e-3, 7.0, 1e4] {
        let scaled_m = m.scaled_etas(c).unwrap();
        let scaled = score_loaded(&scaled_m, &scaled_m, options).unwrap();
        for (a, b) in base.values().iter().zip(scaled.values()) {
            assert!((b - c * a).abs() <= 1e-9 * (c * a).abs().max(1e-300));
        }
        for col in 0..base.cols() {
            let ids = |t: &ScoreTable| -> Vec<(String, f64)> {
                t.train_ids().iter().cloned().zip(t.column(col)).collect()
            };
            assert_eq!(
                rank(&ids(&base), TieBreak::BySampleId).unwrap(),
                rank(&ids(&scaled), TieBreak::BySampleId).unwrap()
            );
        }
        assert_eq!(
            select_from_table(&base, &config).unwrap().ids(),
            select_from_table(&scaled, &config).unwrap().ids()
        );
    }
}

#[test]
fn duplicated_validation_sample_is_idempotent_under_mean() {
    let corpus = Corpus::gaussian(5, 64, 30, &[1], &ETAS);
    let mut doubled = corpus.clone();
    let (_, ids, vecs) = &mut doubled.tasks[0];
    ids.push("t0-copy".into());
    for per_ckpt in vecs.iter_mut() {
        per_ckpt.push(per_ckpt[0].clone());
    }
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let scheme = Some(QuantScheme::absmax(4).unwrap());
    let one = score(&corpus.write(a.path(), scheme), ScoreMode::Qless);
    let two = score(&doubled.write(b.path(), scheme), ScoreMode::Qless);
    assert_eq!(one.values(), two.values());
}

#[test]
fn single_pair_table_equals_pair_influence() {
    let corpus = Corpus::gaussian(6, 64, 1, &[1], &ETAS[..1]);
    let dir = tempfile::tempdir().unwrap();
    let scheme = QuantScheme::absmax(4).unwrap();
    let table = score(&corpus.write(dir.path(), Some(scheme)), ScoreMode::Qless);
    let m = CheckpointManifest::from_etas([("ckpt-0", ETAS[0])]).unwrap();
    let train = GradientSeries::quantized("s", vec![quantize(&corpus.train[0][0], scheme).unwrap()]);
    let val = GradientSeries::quantized("v", vec![quantize(&corpus.tasks[0].2[0][0], scheme).unwrap()]);
    let pair = pair_influence(&train, &val, &m, DegeneratePolicy::Error).unwrap();
    assert!((table.get(0, 0) - pair).abs() <= 1e-15);
}

#[test]
fn tracin_is_cosine_times_norms() {
    let corpus = Corpus::gaussian(7, 50, 1, &[1], &[1.0]);
    let m = CheckpointManifest::from_etas([("c", 1.0)]).unwrap();
    let (x, y) = (&corpus.train[0][0], &corpus.tasks[0].2[0][0]);
    let train = GradientSeries::full("s", vec![x.clone()]);
    let val = GradientSeries::full("v", vec![y.clone()]);
    let tracin = tracin_influence(&train, &val, &m).unwrap();
    let cos = pair_influence(&train, &val, &m, DegeneratePolicy::Error).unwrap();
    let norm = |v: &[f32]| v.iter().map(|t| (*t as f64).powi(2)).sum::<f64>().sqrt();
    assert!((tracin - cos * norm(x) * norm(y)).abs() <= 1e-9 * tracin.abs().max(1.0));
}

#[test]
fn tracin_through_stores_matches_naive_dot() {
    let corpus = Corpus::gaussian(8, 40, 12, &[3], &ETAS);
    let dir = tempfile::tempdir().unwrap();
    let table = score(&corpus.write(dir.path(), None), ScoreMode::Tracin);
    let (_, ids, vecs) = &corpus.tasks[0];
    for r in 0..corpus.train_ids.len() {
        let mut want = 0.0;
        for j in 0..ids.len() {
            for (i, eta) in ETAS.iter().enumerate() {
                let dot: f64 = corpus.train[i][r].iter().zip(&vecs[i][j]).map(|(a, b)| *a as f64 * *b as f64).sum();
                want += eta * dot;
            }
        }
        want /= ids.len() as f64;
        assert!((table.get(r, 0) - want).abs() <= 1e-9 * want.abs().max(1e-6));
    }
}

#[test]
fn missing_sample_is_a_coverage_error() {
    let mut corpus = Corpus::gaussian(9, 32, 5, &[2], &ETAS[..2]);
    let dir = tempfile::tempdir().unwrap();
    let path = corpus.write(dir.path(), None);
    // Rewrite checkpoint 1 with one sample renamed.
    corpus.train_ids[3] = "stranger".into();
    let other = tempfile::tempdir().unwrap();
    corpus.write(other.path(), None);
    std::fs::copy(other.path().join("train-1.qgs"), dir.path().join("train-1.qgs")).unwrap();
    let err = score_manifests(&path, &path, ScoreOptions::new(ScoreMode::LessFp)).unwrap_err();
    match err {
        Error::Coverage { missing, examples } => {
            assert_eq!(missing, 1);
            assert!(examples.iter().any(|e| e.contains("s00003")), "{examples:?}");
        }
        other => panic!("expected coverage error, got {other}"),
    }
}

#[test]
fn thread_count_does_not_change_tables() {
    let corpus = Corpus::gaussian(10, 300, 257, &[5, 3, 1], &ETAS);
    for scheme in [None, Some(QuantScheme::sign()), Some(QuantScheme::absmax(4).unwrap())] {
        let dir = tempfile::tempdir().unwrap();
        let path = corpus.write(dir.path(), scheme);
        let mode = if scheme.is_some() { ScoreMode::Qless } else { ScoreMode::LessFp };
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| column_major(&score(&path, mode)))
        };
        let one = run(1);
        for threads in [2, 4, 7] {
            let many = run(threads);
            assert!(one.iter().zip(&many).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
