mod common;

use proptest::prelude::*;
use qgrad::datastore::{estimate_size, metadata_len, open_store, write_store, StoreKind, StoreWriter};
use qgrad::quantizer::{quantize, QuantScheme, QuantizedVector};
use qgrad::Error;

/// Compares `actual` with a committed fixture. With `QGRAD_BLESS=1` the
/// fixture is rewritten instead.
fn assert_golden(name: &str, actual: &[u8]) {
    let path = common::fixture(name);
    if std::env::var_os("QGRAD_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected.as_slice(), "{name} differs from the committed fixture");
}

#[test]
fn golden_quantized_stores() {
    let dir = tempfile::tempdir().unwrap();
    for (scheme, name) in [
        (QuantScheme::sign(), "golden_sign1.qgs"),
        (QuantScheme::absmax(4).unwrap(), "golden_absmax4.qgs"),
        (QuantScheme::absmean(2).unwrap(), "golden_absmean2.qgs"),
        (QuantScheme::absmax(8).unwrap(), "golden_absmax8.qgs"),
    ] {
        let path = dir.path().join(name);
        write_store(&path, scheme, 8, "ckpt-0", &common::golden_vectors(scheme)).unwrap();
        assert_golden(name, &std::fs::read(&path).unwrap());
        let store = open_store(common::fixture(name)).unwrap();
        for qv in common::golden_vectors(scheme) {
            assert_eq!(store.read_vector(&qv.sample_id).unwrap(), qv);
        }
        assert!(store.is_degenerate(2));
    }
}

#[test]
fn golden_float_store() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.qgs");
    let mut w = StoreWriter::create(&path, StoreKind::Float32, 8, "ckpt-0").unwrap();
    for (i, v) in common::GOLDEN_VALUES.iter().enumerate() {
        w.push_float(&format!("sample-{i}"), v).unwrap();
    }
    w.finish().unwrap();
    assert_golden("golden_float32.qgs", &std::fs::read(&path).unwrap());
}

#[test]
fn sequential_scan_follows_write_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.qgs");
    let scheme = QuantScheme::absmax(2).unwrap();
    let mut g = common::rng(5);
    let ids = ["z", "a", "m", "b", "y"];
    let vs: Vec<QuantizedVector> = ids
        .iter()
        .map(|id| quantize(&common::gaussian(&mut g, 33), scheme).unwrap().with_ids(*id, "c"))
        .collect();
    write_store(&path, scheme, 33, "c", &vs).unwrap();
    let store = open_store(&path).unwrap();
    let scanned: Vec<String> = store.iter().map(|r| r.unwrap().sample_id().to_string()).collect();
    assert_eq!(scanned, ids);
    assert!(matches!(store.read_vector("nope"), Err(Error::Lookup(_))));
}

#[test]
fn truncated_payload_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.qgs");
    let scheme = QuantScheme::absmax(8).unwrap();
    write_store(&path, scheme, 8, "ckpt-0", &common::golden_vectors(scheme)).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    let err = open_store(&path).and_then(|s| s.read_vector("sample-2").map(|_| ()));
    assert!(matches!(err, Err(Error::Corruption { .. })), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn roundtrip_and_exact_size(
        bits in prop::sample::select(vec![1u8, 2, 4, 8]),
        k in 1usize..200,
        n in 1usize..20,
        seed in any::<u64>(),
    ) {
        let scheme = if bits == 1 { QuantScheme::sign() } else { QuantScheme::absmax(bits).unwrap() };
        let mut g = common::rng(seed);
        let vs: Vec<QuantizedVector> = (0..n)
            .map(|i| quantize(&common::gaussian(&mut g, k), scheme).unwrap().with_ids(format!("id{i}"), "ck"))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.qgs");
        let summary = write_store(&path, scheme, k, "ck", &vs).unwrap();
        let ids: Vec<String> = vs.iter().map(|v| v.sample_id.clone()).collect();
        let id_refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
        let expected = estimate_size(n as u64, k as u64, bits as u32, 1, true).unwrap()
            + metadata_len("ck", &id_refs, vs.iter().any(|v| v.degenerate));
        let size = std::fs::metadata(&path).unwrap().len();
        prop_assert_eq!(size, expected);
        prop_assert_eq!(summary.bytes, size);
        let store = open_store(&path).unwrap();
        for v in &vs {
            prop_assert_eq!(&store.read_vector(&v.sample_id).unwrap(), v);
        }
    }
}
