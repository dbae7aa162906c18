//! Probabilistic primality and safe-prime search over `BigUint`.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Miller-Rabin rounds used by [`is_probable_prime`] callers in this crate.
pub const MR_ROUNDS: usize = 40;

/// Uniform integer in `[0, bound)`. `bound` must be positive.
pub fn random_below<R: Rng + ?Sized>(rng: &mut R, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero(), "empty range");
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let excess = (bytes as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill(buf.as_mut_slice());
        buf[0] &= 0xff >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Uniform integer in `[low, high)`.
pub fn random_range<R: Rng + ?Sized>(rng: &mut R, low: &BigUint, high: &BigUint) -> BigUint {
    assert!(low < high, "empty range");
    low + random_below(rng, &(high - low))
}

fn small_factor(n: &BigUint) -> Option<u32> {
    SMALL_PRIMES
        .iter()
        .copied()
        .find(|&p| (n % p).is_zero() && *n != BigUint::from(p))
}

pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    if SMALL_PRIMES.iter().any(|&p| *n == BigUint::from(p)) {
        return true;
    }
    if small_factor(n).is_some() {
        return false;
    }
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().expect("n > 2");
    let d = &n_minus_one >> s;
    'witness: for _ in 0..rounds {
        let a = random_range(rng, &two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A random safe prime `p = 2q + 1` with exactly `bits` bits.
pub fn generate_safe_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    assert!(bits >= 3, "no safe primes below 3 bits");
    if bits == 3 {
        return BigUint::from(7u32);
    }
    let top = BigUint::one() << (bits - 2);
    loop {
        // q has bits - 1 bits, top bit set, odd.
        let mut q = random_below(rng, &top) | &top;
        q.set_bit(0, true);
        let p: BigUint = (&q << 1u32) + 1u32;
        if small_factor(&q).is_some() || small_factor(&p).is_some() {
            continue;
        }
        if is_probable_prime(&q, 1, rng) && is_probable_prime(&p, 1, rng)
            && is_probable_prime(&q, MR_ROUNDS, rng)
            && is_probable_prime(&p, MR_ROUNDS, rng)
        {
            return p;
        }
    }
}

/// Smallest generator of the full multiplicative group mod a safe prime.
pub fn safe_prime_generator(p: &BigUint) -> BigUint {
    let q: BigUint = (p - 1u32) >> 1;
    let one = BigUint::one();
    let mut g = BigUint::from(2u32);
    loop {
        if g.modpow(&BigUint::from(2u32), p) != one && g.modpow(&q, p) != one {
            return g;
        }
        g += 1u32;
    }
}
