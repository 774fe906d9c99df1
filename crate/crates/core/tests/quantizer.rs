mod common;

use proptest::prelude::*;
use qgrad::quantizer::{
    dequantize, pack_codes, quantize, unpack_codes, zero_bin_fraction_batch, Method, QuantScheme,
};

fn finite_vec() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1e3f32..1e3f32, 1..400)
}

fn wide_scheme() -> impl Strategy<Value = QuantScheme> {
    (prop::sample::select(vec![Method::Absmax, Method::Absmean]), prop::sample::select(vec![2u8, 4, 8]))
        .prop_map(|(m, b)| QuantScheme::new(m, b).unwrap())
}

proptest! {
    #[test]
    fn matches_scalar_oracle(v in finite_vec(), scheme in wide_scheme()) {
        let qv = quantize(&v, scheme).unwrap();
        if !qv.degenerate {
            let (codes, scale) = common::oracle_quantize(&v, scheme.method(), scheme.bits());
            prop_assert_eq!(qv.codes, codes);
            prop_assert_eq!(qv.scale, scale);
        }
    }

    #[test]
    fn absmax_saturates_and_bounds_error(v in finite_vec(), bits in prop::sample::select(vec![2u8, 4, 8])) {
        let scheme = QuantScheme::absmax(bits).unwrap();
        let qv = quantize(&v, scheme).unwrap();
        let alpha = scheme.alpha();
        prop_assert!(qv.codes.iter().all(|&c| (c as i32).abs() <= alpha));
        if !qv.degenerate {
            prop_assert_eq!(qv.codes.iter().map(|&c| (c as i32).abs()).max(), Some(alpha));
            let bound = qv.scale as f64 / (2.0 * alpha as f64);
            for (x, y) in v.iter().zip(dequantize(&qv)) {
                prop_assert!((*x as f64 - y as f64).abs() <= bound * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn positive_scaling_keeps_codes(v in finite_vec(), c in 1e-3f32..1e3f32) {
        let scaled: Vec<f32> = v.iter().map(|x| x * c).collect();
        for scheme in [QuantScheme::absmax(8).unwrap(), QuantScheme::absmax(2).unwrap(), QuantScheme::sign()] {
            let (a, b) = (quantize(&v, scheme).unwrap(), quantize(&scaled, scheme).unwrap());
            if scheme.method() == Method::Sign {
                prop_assert_eq!(a.codes, b.codes);
            } else if !a.degenerate {
                // Scaling in f32 may move a value across a rounding boundary by
                // one ulp; only then may a code differ, and by at most one.
                let moved = a.codes.iter().zip(&b.codes).filter(|(x, y)| x != y).count();
                prop_assert!(a.codes.iter().zip(&b.codes).all(|(x, y)| (x - y).abs() <= 1));
                prop_assert!(moved * 100 <= v.len().max(100));
            }
        }
    }

    #[test]
    fn pack_roundtrip(bits in prop::sample::select(vec![1u8, 2, 4, 8]), k in 1usize..300, seed in any::<u64>()) {
        let alpha = if bits == 1 { 1 } else { (1i32 << (bits - 1)) - 1 };
        let mut g = common::rng(seed);
        let codes: Vec<i8> = (0..k)
            .map(|_| {
                let x: i32 = rand::Rng::gen_range(&mut g, -alpha..=alpha);
                if bits == 1 { if x >= 0 { 1 } else { -1 } } else { x as i8 }
            })
            .collect();
        let packed = pack_codes(&codes, bits).unwrap();
        prop_assert_eq!(packed.len(), (k * bits as usize).div_ceil(8));
        prop_assert_eq!(unpack_codes(&packed, k, bits).unwrap(), codes);
    }
}

fn pooled_zero_bin(vs: &[Vec<f32>], scheme: QuantScheme) -> f64 {
    let q: Vec<_> = vs.iter().map(|v| quantize(v, scheme).unwrap()).collect();
    zero_bin_fraction_batch(&q).unwrap()
}

#[test]
fn zero_bin_on_gaussian_data() {
    let mut g = common::rng(9);
    let vs: Vec<Vec<f32>> = (0..20).map(|_| common::gaussian(&mut g, 8192)).collect();
    let max2 = pooled_zero_bin(&vs, QuantScheme::absmax(2).unwrap());
    let mean2 = pooled_zero_bin(&vs, QuantScheme::absmean(2).unwrap());
    assert!(mean2 < max2, "absmean {mean2} vs absmax {max2}");
    // Absmean codes are round(v / mean|v|) with no alpha factor, so the zero
    // bin is |z| < E|z| / 2 at every bitwidth: P = erf(sqrt(2/pi) / (2 sqrt 2)).
    let mean4 = pooled_zero_bin(&vs, QuantScheme::absmean(4).unwrap());
    assert!((mean4 - 0.3101).abs() < 0.005, "absmean b=4 zero bin {mean4}");
    assert_eq!(mean4, pooled_zero_bin(&vs, QuantScheme::absmean(8).unwrap()));
    // Absmax at b=4: |z| < max|z| / 14 with max|z| near 3.9.
    let max4 = pooled_zero_bin(&vs, QuantScheme::absmax(4).unwrap());
    assert!((0.19..0.25).contains(&max4), "absmax b=4 zero bin {max4}");
}

#[test]
fn sign_scale_is_mean_magnitude() {
    let qv = quantize(&[0.3, -0.2, 0.7], QuantScheme::sign()).unwrap();
    assert_eq!(qv.codes, vec![1, -1, 1]);
    assert!((qv.scale - 0.4).abs() < 1e-7);
}
