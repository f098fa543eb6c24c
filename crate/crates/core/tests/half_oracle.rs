//! Binary16 rounding checked against an enumeration of every finite half value.

use mpir_core::f16;
use mpir_core::precision::{downcast, half_op, BinaryOp, TaggedScalar};
use mpir_core::Precision;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All finite binary16 values in increasing order, `-0` dropped.
fn finite_halves() -> Vec<f16> {
    let mut v: Vec<f16> = (0u16..=u16::MAX)
        .map(f16::from_bits)
        .filter(|x| x.is_finite() && x.to_bits() != 0x8000)
        .collect();
    v.sort_by(|a, b| a.to_f64().partial_cmp(&b.to_f64()).unwrap());
    v
}

/// Round to nearest, ties to the even significand; beyond the overflow
/// threshold (max + half an ulp) the result is infinite.
fn oracle_round(table: &[f16], x: f64) -> f16 {
    let max = 65504.0;
    let overflow_at = max + 16.0;
    if x >= overflow_at {
        return f16::INFINITY;
    }
    if x <= -overflow_at {
        return f16::NEG_INFINITY;
    }
    let idx = table.partition_point(|v| v.to_f64() < x);
    if idx < table.len() && table[idx].to_f64() == x {
        return table[idx];
    }
    let hi = table[idx.min(table.len() - 1)];
    let lo = table[idx.saturating_sub(1)];
    let (dl, dh) = (x - lo.to_f64(), hi.to_f64() - x);
    let pick = if dl < dh {
        lo
    } else if dh < dl {
        hi
    } else if lo.to_bits() & 1 == 0 {
        lo
    } else {
        hi
    };
    // Preserve the sign of zero results.
    if pick.to_f64() == 0.0 && x < 0.0 {
        f16::NEG_ZERO
    } else {
        pick
    }
}

#[test]
fn downcast_to_half_matches_enumeration() {
    let table = finite_halves();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut samples: Vec<f64> = (0..20_000)
        .map(|_| {
            let mag = 2f64.powf(rng.gen_range(-26.0..17.0));
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    // Exact midpoints between neighbours exercise the tie rule.
    for w in table.windows(2).step_by(97) {
        samples.push((w[0].to_f64() + w[1].to_f64()) / 2.0);
    }
    samples.extend([
        65519.99,
        65520.0,
        -65520.0,
        2f64.powi(-25),
        2f64.powi(-25) * 1.0001,
        1e-30,
    ]);

    for x in samples {
        let (got, _) = downcast(TaggedScalar::exact(x, Precision::Double).unwrap(), Precision::Half).unwrap();
        let want = oracle_round(&table, x);
        assert_eq!(
            got.bits(),
            want.to_bits() as u64,
            "x = {x:e}: got {} want {}",
            got.value(),
            want
        );
    }
}

#[test]
fn half_arithmetic_rounds_once() {
    // Sums, differences and products of binary16 values are exact in binary64,
    // so rounding the binary64 result once is the correctly rounded answer.
    // Quotients are rounded twice here, which is innocuous at 53 >= 2*11 + 2 bits.
    let table = finite_halves();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50_000 {
        let a = table[rng.gen_range(0..table.len())];
        let b = table[rng.gen_range(0..table.len())];
        for op in BinaryOp::ALL {
            if op == BinaryOp::Div && b.to_f64() == 0.0 {
                continue;
            }
            let exact = op.apply(a.to_f64(), b.to_f64());
            let want = oracle_round(&table, exact);
            let got = half_op(TaggedScalar::of(a), TaggedScalar::of(b), op).unwrap();
            if want.to_f64() == 0.0 {
                assert_eq!(got.value(), 0.0, "{a} {op:?} {b}");
            } else {
                assert_eq!(got.bits(), want.to_bits() as u64, "{a} {op:?} {b}");
            }
        }
    }
}
