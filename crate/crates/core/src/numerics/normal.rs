use libm::erfc;

use super::NumericsError;

const SPLIT_CENTRAL: f64 = 0.425;
const SPLIT_TAIL: f64 = 5.0;

const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Quantile of the standard normal distribution (Wichura's AS 241, about
/// sixteen significant digits).
pub fn inv_normal_cdf(u: f64) -> Result<f64, NumericsError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(NumericsError::Domain(u));
    }
    let q = u - 0.5;
    if q.abs() <= SPLIT_CENTRAL {
        let r = 0.180625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let tail = if q < 0.0 { u } else { 1.0 - u };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= SPLIT_TAIL {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= SPLIT_TAIL;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -value } else { value })
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided p-value of a standard normal test statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Standard normal CDF built from the Maclaurin series of erf for small
    /// arguments and a Lentz continued fraction for erfc in the tails.
    fn oracle_cdf(x: f64) -> f64 {
        let z = x.abs() / std::f64::consts::SQRT_2;
        let upper = if z < 2.5 {
            let mut term = z;
            let mut sum = z;
            let mut n = 0.0;
            loop {
                n += 1.0;
                term *= -z * z / n;
                let add = term / (2.0 * n + 1.0);
                sum += add;
                if add.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
        } else {
            // erfc(z) = exp(-z^2)/sqrt(pi) * 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
            let tiny = 1e-300;
            let mut f = z;
            let mut c = z;
            let mut d = 0.0;
            for k in 1..500 {
                let a = k as f64 / 2.0;
                d = z + a * d;
                d = if d.abs() < tiny { tiny } else { d };
                c = z + a / c;
                c = if c.abs() < tiny { tiny } else { c };
                d = 1.0 / d;
                let delta = c * d;
                f *= delta;
                if (delta - 1.0).abs() < 1e-16 {
                    break;
                }
            }
            (-z * z).exp() / std::f64::consts::PI.sqrt() / f
        };
        if x < 0.0 { 0.5 * upper } else { 1.0 - 0.5 * upper }
    }

    fn oracle_quantile(u: f64) -> f64 {
        if u > 0.5 {
            return -oracle_quantile(1.0 - u);
        }
        let (mut lo, mut hi) = (-40.0, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if oracle_cdf(mid) < u { lo = mid } else { hi = mid }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn median_is_zero() {
        assert_eq!(inv_normal_cdf(0.5).unwrap(), 0.0);
    }

    #[test]
    fn upper_975_quantile() {
        let expected = oracle_quantile(0.975);
        assert!((expected - 1.959_964).abs() < 1e-6);
        assert!((inv_normal_cdf(0.975).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn matches_oracle_across_range() {
        let mut grid = vec![1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 0.01, 0.02425, 0.1, 0.3, 0.5];
        let upper: Vec<f64> = grid.iter().map(|u| 1.0 - u).collect();
        grid.extend(upper);
        for k in 1..200 {
            grid.push(k as f64 / 200.0);
        }
        for u in grid {
            let got = inv_normal_cdf(u).unwrap();
            let want = oracle_quantile(u);
            assert!((got - want).abs() <= 1e-9, "u={u}: {got} vs {want}");
        }
    }

    #[test]
    fn rejects_outside_open_interval() {
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(inv_normal_cdf(u).is_err());
        }
    }

    #[test]
    fn cdf_inverts_quantile() {
        for k in 1..100 {
            let u = k as f64 / 100.0;
            let err = (normal_cdf(inv_normal_cdf(u).unwrap()) - u).abs();
            assert!(err < 1e-14, "{u} {err:e}");
        }
        assert!((normal_two_sided_p(1.959_963_984_540_054) - 0.05).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn antisymmetric(u in 0.5f64..(1.0 - 1e-12)) {
            let a = inv_normal_cdf(u).unwrap();
            let b = inv_normal_cdf(1.0 - u).unwrap();
            prop_assert!((a + b).abs() <= 1e-12);
        }

        #[test]
        fn matches_oracle_random(u in 1e-12f64..(1.0 - 1e-12)) {
            let got = inv_normal_cdf(u).unwrap();
            prop_assert!((got - oracle_quantile(u)).abs() <= 1e-9);
        }
    }
}
