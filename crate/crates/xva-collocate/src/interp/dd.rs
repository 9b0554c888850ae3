//! Double-double ("compensated") arithmetic: a value is carried as an
//! unevaluated sum `hi + lo` of two `f64`, giving roughly 31 significant
//! decimal digits.
//!
//! The moment-to-recurrence (Chebyshev) step of the Golub–Welsch node
//! construction is notoriously ill-conditioned on raw moments: it loses on
//! the order of one decimal digit per polynomial degree. At the node counts
//! used by the collocation engine (up to N = 15, consuming moments up to
//! order 29) plain `f64` would leave no correct digits in the highest
//! recurrence coefficients. Running just that step in double-double keeps
//! them accurate to full `f64` precision; everything downstream works on
//! ordinary floats.

/// A double-double number. `hi` holds the leading bits, `lo` the trailing
/// correction with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

/// Error-free sum: returns `(s, e)` with `s = fl(a+b)` and `a + b = s + e`.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Error-free sum assuming `|a| >= |b|`.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// Error-free product via fused multiply-add: `a*b = p + e` exactly.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    /// ln 2 to double-double precision.
    pub const LN2: Dd = Dd {
        hi: 0.693_147_180_559_945_3,
        lo: 2.319_046_813_846_299_6e-17,
    };
    /// 1/√(2π) to double-double precision.
    pub const FRAC_1_SQRT_2PI: Dd = Dd {
        hi: 0.398_942_280_401_432_7,
        lo: -2.492_327_202_277_73e-17,
    };
    /// 2/√π to double-double precision.
    pub const FRAC_2_SQRT_PI: Dd = Dd {
        hi: 1.128_379_167_095_512_6,
        lo: 1.533_545_961_316_588e-17,
    };
    /// 1/√2 to double-double precision.
    pub const FRAC_1_SQRT_2: Dd = Dd {
        hi: 0.707_106_781_186_547_6,
        lo: -4.833_646_656_726_457e-17,
    };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Leading component; the closest `f64` to the represented value.
    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn add(self, rhs: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let e = e + self.lo + rhs.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, rhs: Dd) -> Dd {
        self.add(Dd {
            hi: -rhs.hi,
            lo: -rhs.lo,
        })
    }

    #[inline]
    pub fn mul(self, rhs: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + self.hi * rhs.lo + self.lo * rhs.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    /// Division with two Newton correction terms (accurate to ~2 ulp of
    /// double-double precision, far beyond what the caller needs).
    #[inline]
    pub fn div(self, rhs: Dd) -> Dd {
        let q1 = self.hi / rhs.hi;
        let r = self.sub(rhs.mul(Dd::from_f64(q1)));
        let q2 = r.hi / rhs.hi;
        let r = r.sub(rhs.mul(Dd::from_f64(q2)));
        let q3 = r.hi / rhs.hi;
        let (s, e) = quick_two_sum(q1, q2);
        let (hi, lo) = quick_two_sum(s, e + q3);
        Dd { hi, lo }
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    /// Exact scaling by a power of two.
    #[inline]
    fn mul_pow2(self, p: f64) -> Dd {
        Dd {
            hi: self.hi * p,
            lo: self.lo * p,
        }
    }

    /// `e^self` for moderate arguments (|x| ≲ 700): argument reduction
    /// `x = n ln2 + r` with `|r| ≤ ln2/2`, Taylor series for `e^r`
    /// (converges to double-double precision in ~30 terms), exact `2^n`
    /// rescale.
    pub fn exp(self) -> Dd {
        if self.hi == 0.0 && self.lo == 0.0 {
            return Dd::ONE;
        }
        let n = (self.hi / Dd::LN2.hi).round();
        let r = self.sub(Dd::LN2.mul(Dd::from_f64(n)));
        let mut sum = Dd::ONE;
        let mut term = Dd::ONE;
        for k in 1..60 {
            term = term.mul(r).div(Dd::from_f64(k as f64));
            sum = sum.add(term);
            if term.hi.abs() < 1e-35 * sum.hi.abs() {
                break;
            }
        }
        sum.mul_pow2(n.exp2())
    }

    /// Error function to double-double precision via the confluent
    /// (all-positive-terms) series
    /// `erf(z) = (2z/√π) e^{-z²} Σ_k (2z²)^k / (2k+1)!!`,
    /// free of the cancellation the alternating Maclaurin series suffers.
    /// Practical for |z| ≲ 6; for larger |z| the result is ±1 to well
    /// beyond double-double precision.
    pub fn erf(z: Dd) -> Dd {
        if z.hi == 0.0 && z.lo == 0.0 {
            return Dd::ZERO;
        }
        if z.hi.abs() > 9.0 {
            return Dd::from_f64(z.hi.signum());
        }
        let z2 = z.mul(z);
        let two_z2 = z2.mul_pow2(2.0);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for k in 0..400 {
            term = term.mul(two_z2).div(Dd::from_f64((2 * k + 3) as f64));
            sum = sum.add(term);
            if term.hi < 1e-35 * sum.hi {
                break;
            }
        }
        Dd::FRAC_2_SQRT_PI.mul(z).mul(z2.neg().exp()).mul(sum)
    }
}

/// Standard normal density `φ(x)` to double-double precision.
pub(crate) fn std_normal_pdf_dd(x: f64) -> Dd {
    let xd = Dd::from_f64(x);
    let arg = xd.mul(xd).mul_pow2(0.5).neg();
    Dd::FRAC_1_SQRT_2PI.mul(arg.exp())
}

/// Standard normal distribution function `Φ(x)` to double-double
/// precision: `(1 + erf(x/√2))/2`. For deep negative `x` the relative
/// accuracy degrades to `~1e-34 / Φ(x)` — still far beyond `f64` for any
/// truncation the node builders accept.
pub(crate) fn std_normal_cdf_dd(x: f64) -> Dd {
    let z = Dd::from_f64(x).mul(Dd::FRAC_1_SQRT_2);
    Dd::ONE.add(Dd::erf(z)).mul_pow2(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_recovers_cancelled_bits() {
        // (1 + 2^-60) - 1 underflows to 0 in f64 but survives in Dd.
        let tiny = (2.0_f64).powi(-60);
        let x = Dd::from_f64(1.0).add(Dd::from_f64(tiny));
        let d = x.sub(Dd::from_f64(1.0));
        assert_eq!(d.to_f64(), tiny);
    }

    #[test]
    fn mul_is_error_free_on_f64_inputs() {
        let a = 1.0 + (2.0_f64).powi(-30);
        let b = 1.0 - (2.0_f64).powi(-31);
        let p = Dd::from_f64(a).mul(Dd::from_f64(b));
        // Exact product needs ~61 bits; check the not-representable-in-f64 tail.
        let exact_tail = a * b - p.hi; // zero in f64 arithmetic
        assert_eq!(exact_tail, 0.0);
        assert!(p.lo != 0.0, "tail bits should have been captured");
    }

    #[test]
    fn div_round_trips() {
        let a = Dd::from_f64(std::f64::consts::PI);
        let b = Dd::from_f64(std::f64::consts::E);
        let q = a.div(b);
        let back = q.mul(b).sub(a);
        assert!(back.to_f64().abs() < 1e-30);
    }

    /// |value − (hi + lo)| / |value|, evaluated in double-double so errors
    /// far below one f64 ulp remain visible.
    fn rel_err(value: Dd, hi: f64, lo: f64) -> f64 {
        let reference = Dd::from_f64(hi).add(Dd::from_f64(lo));
        (value.sub(reference).to_f64() / hi).abs()
    }

    #[test]
    fn exp_reaches_double_double_accuracy() {
        // References: hi/lo splits of 60-digit values.
        let cases = [
            (0.375, 1.454_991_414_618_201_3, 8.517_923_078_996_071e-17),
            (-17.25, 3.224_186_737_256_733_5e-8, -1.949_740_847_885_868_4e-24),
        ];
        for (x, hi, lo) in cases {
            let got = Dd::from_f64(x).exp();
            assert!(
                rel_err(got, hi, lo) < 1e-30,
                "exp({x}) off by {:.3e}",
                rel_err(got, hi, lo)
            );
        }
        assert_eq!(Dd::ZERO.exp().to_f64(), 1.0);
        // exp(x) * exp(-x) = 1 far beyond f64 precision.
        for x in [0.1, 2.7, -8.3, 15.0] {
            let x = Dd::from_f64(x);
            let prod = x.exp().mul(x.neg().exp()).sub(Dd::ONE);
            assert!(prod.to_f64().abs() < 1e-30);
        }
    }

    #[test]
    fn erf_reaches_double_double_accuracy() {
        let got = Dd::erf(Dd::from_f64(2.25));
        assert!(rel_err(got, 0.998_537_283_413_318_8, 2.695_640_588_541_345_7e-17) < 1e-30);
        // Odd symmetry is exact by construction.
        let plus = Dd::erf(Dd::from_f64(0.8));
        let minus = Dd::erf(Dd::from_f64(-0.8));
        assert_eq!(plus.to_f64(), -minus.to_f64());
        // Saturation far in the tail.
        assert_eq!(Dd::erf(Dd::from_f64(9.5)).to_f64(), 1.0);
        assert_eq!(Dd::erf(Dd::ZERO).to_f64(), 0.0);
    }

    #[test]
    fn normal_cdf_and_pdf_reach_double_double_accuracy() {
        let cdf_cases = [
            (-3.0, 0.001_349_898_031_630_094_6, -5.053_886_685_858_262e-20),
            (0.75, 0.773_372_647_623_131_8, -4.739_847_159_150_192_4e-17),
        ];
        for (x, hi, lo) in cdf_cases {
            let got = std_normal_cdf_dd(x);
            assert!(
                rel_err(got, hi, lo) < 1e-29,
                "Phi({x}) off by {:.3e}",
                rel_err(got, hi, lo)
            );
        }
        // φ agrees with the direct f64 formula to f64 accuracy and with the
        // smooth identity φ(x) = φ(-x) exactly.
        for x in [-3.0, 0.75, 1.9] {
            let dd = std_normal_pdf_dd(x).to_f64();
            let f = (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!((dd - f).abs() <= 1e-15 * f);
            assert_eq!(
                std_normal_pdf_dd(x).to_f64(),
                std_normal_pdf_dd(-x).to_f64()
            );
        }
    }
}
