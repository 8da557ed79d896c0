//! Slice-wise `tanh` built on a branch-free `expm1`, so the loop vectorises.
//!
//! `tanh|x| = -m / (2 + m)` with `m = expm1(-2|x|)`; `expm1` uses the usual
//! `2^k · expm1(r) + (2^k - 1)` reduction with `|r| <= ln2 / 2` and a
//! degree-13 Taylor polynomial. Accuracy is within a few ulp of `f64::tanh`
//! and NaN propagates.

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
/// 1.5 · 2^52: adding it rounds to an integer held in the low mantissa bits.
const SHIFTER: f64 = 6_755_399_441_055_744.0;
/// `tanh(20) == 1.0` in double precision.
const SATURATE: f64 = 20.0;

const INV_FACT: [f64; 12] = [
    1.0 / 2.0,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40320.0,
    1.0 / 362_880.0,
    1.0 / 3_628_800.0,
    1.0 / 39_916_800.0,
    1.0 / 479_001_600.0,
    1.0 / 6_227_020_800.0,
];

#[inline(always)]
fn tanh_kernel(x: f64) -> f64 {
    let ax = x.abs();
    let ax = if ax > SATURATE { SATURATE } else { ax };
    let y = -2.0 * ax;
    let shifted = y * LOG2E + SHIFTER;
    let k = shifted - SHIFTER;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut q = INV_FACT[11];
    for c in INV_FACT[..11].iter().rev() {
        q = q * r + c;
    }
    let p = r + r * r * q;
    // 2^k from the integer sitting in the low bits of `shifted`.
    let e = shifted
        .to_bits()
        .wrapping_sub(SHIFTER.to_bits())
        .wrapping_add(1023)
        << 52;
    let s = f64::from_bits(e);
    let m = s * p + (s - 1.0);
    (-m / (2.0 + m)).copysign(x)
}

pub(crate) fn tanh_in_place(xs: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 availability was checked just above.
            unsafe { tanh_avx2(xs) };
            return;
        }
    }
    xs.iter_mut().for_each(|v| *v = tanh_kernel(*v));
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn tanh_avx2(xs: &mut [f64]) {
    xs.iter_mut().for_each(|v| *v = tanh_kernel(*v));
}
