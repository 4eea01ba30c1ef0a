//! Exact-rational circle expansion, for itinerary checks that outrun `f64`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::Itinerary;

/// `x mod 1` for a rational.
pub fn frac(x: &BigRational) -> BigRational {
    x - x.floor()
}

/// Forward itinerary of a rational `x` under `x -> l x mod 1`, computed exactly.
pub fn itinerary_of_rational(x: &BigRational, depth: usize, l: u32) -> Itinerary {
    let lq = BigRational::from_integer(BigInt::from(l));
    let mut x = frac(x);
    let mut symbols = Vec::with_capacity(depth);
    for _ in 0..depth {
        let lx = &x * &lq;
        let k = lx.floor().to_integer();
        // k lies in 0..l because 0 <= x < 1
        let k: u8 = u8::try_from(k).expect("cell index fits in u8");
        symbols.push(k + 1);
        x = frac(&lx);
    }
    Itinerary::forward(symbols)
}

/// `tau(x)` in exact arithmetic.
pub fn tau_rational(x: &BigRational, l: u32) -> BigRational {
    frac(&(x * BigRational::from_integer(BigInt::from(l))))
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    assert!(!BigInt::from(den).is_zero());
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn is_in_unit_interval(x: &BigRational) -> bool {
    !x.numer().sign().eq(&num_bigint::Sign::Minus) && x < &BigRational::one()
}
