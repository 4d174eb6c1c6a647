//! Rounding-controlled arithmetic for rates and probabilities.
//!
//! Documents carry probabilities as decimal text. [`decimal_product`]
//! multiplies the shortest decimal form of each factor exactly and rounds
//! once, so `2 × 0.5 × 0.05 × 0.1` is the double nearest to `0.005` rather
//! than the one-ulp-off value plain binary multiplication produces.
//! [`exact_sum`] returns the correctly rounded sum of its inputs.

use num_bigint::BigUint;

/// Product of nonnegative finite factors, computed exactly on their shortest
/// round-trip decimal forms and rounded to the nearest `f64` once.
pub fn decimal_product(factors: &[f64]) -> f64 {
    if factors.contains(&0.0) {
        return 0.0;
    }
    let mut mantissa = BigUint::from(1u8);
    let mut exponent: i64 = 0;
    let mut negative = false;
    for &f in factors {
        debug_assert!(f.is_finite(), "decimal_product on non-finite factor {f}");
        if f < 0.0 {
            negative = !negative;
        }
        let (digits, exp) = shortest_decimal(f.abs());
        mantissa *= digits;
        exponent += exp;
    }
    let value: f64 = format!("{mantissa}e{exponent}")
        .parse()
        .expect("decimal digits with exponent always parse");
    if negative {
        -value
    } else {
        value
    }
}

/// Splits a positive finite `f64` into integer digits and a power of ten.
fn shortest_decimal(f: f64) -> (u64, i64) {
    // `{:e}` yields the shortest round-trip form, e.g. "5e-2" or "1.2345e3".
    let text = format!("{f:e}");
    let (mant, exp) = text
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i64 = exp.parse().expect("exponent is an integer");
    match mant.split_once('.') {
        Some((int, frac)) => {
            let digits: u64 = format!("{int}{frac}").parse().expect("at most 17 digits");
            (digits, exp - frac.len() as i64)
        }
        None => (mant.parse().expect("integer mantissa"), exp),
    }
}

/// Correctly rounded sum of finite values (Shewchuk's algorithm).
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // Half-way case: round toward the side the remaining partials point to.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Whether the exact sum of finite values is strictly greater than `bound`.
pub fn sum_exceeds<I: IntoIterator<Item = f64>>(values: I, bound: f64) -> bool {
    exact_sum(values.into_iter().chain([-bound])) > 0.0
}

/// Linear-interpolation quantile of sorted data (the "type 7" convention:
/// position `(n - 1) * q` between adjacent order statistics).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lower = pos.floor() as usize;
    let upper = pos.ceil() as usize;
    let frac = pos - lower as f64;
    if lower == upper {
        sorted[lower]
    } else {
        sorted[lower] + (sorted[upper] - sorted[lower]) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_product_matches_literals() {
        assert_eq!(decimal_product(&[2.0, 0.5, 0.05, 0.1]), 0.005);
        assert_eq!(decimal_product(&[2.0, 0.5, 0.2, 0.1]), 0.02);
        assert_eq!(decimal_product(&[2.0, 0.5, 0.01, 0.1]), 0.001);
        assert_eq!(decimal_product(&[10.0, 0.3]), 3.0);
        assert_eq!(decimal_product(&[1.0, 0.0, 0.5]), 0.0);
        assert_eq!(decimal_product(&[]), 1.0);
        assert_eq!(decimal_product(&[1e300, 1e-300]), 1.0);
    }

    #[test]
    fn shortest_decimal_forms() {
        assert_eq!(shortest_decimal(0.05), (5, -2));
        assert_eq!(shortest_decimal(1234.5), (12345, -1));
        assert_eq!(shortest_decimal(2.0), (2, 0));
    }

    #[test]
    fn exact_sum_cases() {
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.006, 0.004]), 0.01);
        assert_eq!(exact_sum(Vec::<f64>::new()), 0.0);
    }

    #[test]
    fn sum_exceeds_is_exact() {
        let total = 0.01;
        let tiny = f64::EPSILON * total / 8.0;
        assert_eq!(exact_sum([total, tiny]), total);
        assert!(sum_exceeds([total, tiny], total));
        assert!(!sum_exceeds([0.006, 0.004], total));
        assert!(!sum_exceeds([], 0.0));
    }

    #[test]
    fn quantiles() {
        let d = [0.1, 0.2, 0.3];
        assert_eq!(quantile_sorted(&d, 0.5), 0.2);
        assert!((quantile_sorted(&d, 0.25) - 0.15).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[4.0], 0.9), 4.0);
    }
}
