//! Multicast group key distribution over pairwise Diffie-Hellman keys.
//!
//! The negotiator runs one DH exchange per member, giving each member `i` a
//! pairwise key `K_i = A^x_i mod p = B_i^a mod p`. It then draws a group key
//! `y` and publishes a key function `S` with `S(K_i) = y` for every member.
//! `S` is a natural cubic spline through the member points and through
//! random decoy points, at least one between every pair of consecutive
//! member keys, so that `S` is not constant and each piece carries a single
//! member point.

pub mod prime;
pub mod spline;

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use self::prime::{generate_safe_prime, is_probable_prime, random_below, random_range, safe_prime_generator, MR_ROUNDS};
use self::spline::{NaturalCubicSpline, Piece, SplineError};

/// Width of the default group key and decoy ordinate range.
pub const DEFAULT_KEY_BITS: u64 = 256;

/// Redraws allowed when a decoy ordinate lands on the group key.
const DECOY_RETRIES: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("modulus is not prime")]
    NotPrime,
    #[error("generator must satisfy 1 < g < p")]
    InvalidGenerator,
    #[error("secret exponent must lie in [1, p - 2]")]
    InvalidSecret,
    #[error("degenerate public value {0}")]
    DegeneratePublic(BigUint),
    #[error("two members share the pairwise key {0}")]
    DuplicateKey(BigInt),
    #[error("decoy knot collides with another knot or the group key")]
    DecoyCollision,
    #[error("interval between member keys {0} and {1} has no decoy knot")]
    MissingDecoy(BigInt, BigInt),
    #[error("no members")]
    NoMembers,
    #[error("unknown member {0}")]
    UnknownMember(u32),
    #[error("key {0} lies outside the key function's span")]
    OutsideSpan(BigInt),
    #[error("spline fit failed: {0:?}")]
    Spline(SplineError),
    #[error("decoy range is empty")]
    EmptyRange,
    #[error("malformed key function: {0}")]
    Json(String),
}

impl From<SplineError> for KeyError {
    fn from(e: SplineError) -> Self {
        KeyError::Spline(e)
    }
}

/// Shared group parameters `(p, g)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhParams {
    p: BigUint,
    g: BigUint,
}

impl DhParams {
    pub fn new<R: Rng + ?Sized>(p: BigUint, g: BigUint, rng: &mut R) -> Result<Self, KeyError> {
        if !is_probable_prime(&p, MR_ROUNDS, rng) {
            return Err(KeyError::NotPrime);
        }
        if g <= BigUint::one() || g >= p {
            return Err(KeyError::InvalidGenerator);
        }
        Ok(Self { p, g })
    }

    /// A fresh safe prime of `bits` bits with a generator of its full group.
    pub fn generate<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> Self {
        let p = generate_safe_prime(bits, rng);
        let g = safe_prime_generator(&p);
        Self { p, g }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.p
    }

    pub fn generator(&self) -> &BigUint {
        &self.g
    }

    fn random_secret<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        random_range(rng, &BigUint::one(), &(&self.p - 1u32))
    }

    fn check_secret(&self, secret: &BigUint) -> Result<(), KeyError> {
        if secret.is_zero() || *secret > &self.p - 2u32 {
            return Err(KeyError::InvalidSecret);
        }
        Ok(())
    }

    /// Rejects public values in `{0, 1, p - 1}` and anything not reduced.
    fn check_public(&self, public: &BigUint) -> Result<(), KeyError> {
        if public.is_zero() || public.is_one() || *public >= &self.p - 1u32 {
            return Err(KeyError::DegeneratePublic(public.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemberId(pub u32);

/// One member's side of the exchange.
#[derive(Debug, Clone)]
pub struct MemberState {
    secret: BigUint,
    public: BigUint,
    pairwise: BigUint,
}

impl MemberState {
    /// Draws `x_i`, publishes `B_i = g^x_i` and derives `K_i = A^x_i`.
    pub fn generate<R: Rng + ?Sized>(params: &DhParams, negotiator_public: &BigUint, rng: &mut R) -> Result<Self, KeyError> {
        loop {
            let secret = params.random_secret(rng);
            match Self::with_secret(params, negotiator_public, secret) {
                Err(KeyError::DegeneratePublic(ref b)) if b != negotiator_public => continue,
                other => return other,
            }
        }
    }

    pub fn with_secret(params: &DhParams, negotiator_public: &BigUint, secret: BigUint) -> Result<Self, KeyError> {
        params.check_secret(&secret)?;
        params.check_public(negotiator_public)?;
        let public = params.g.modpow(&secret, &params.p);
        params.check_public(&public)?;
        let pairwise = negotiator_public.modpow(&secret, &params.p);
        Ok(Self { secret, public, pairwise })
    }

    pub fn secret(&self) -> &BigUint {
        &self.secret
    }

    pub fn public_value(&self) -> &BigUint {
        &self.public
    }

    pub fn pairwise_key(&self) -> &BigUint {
        &self.pairwise
    }

    /// Evaluates the published key function at this member's `K_i`.
    pub fn recover(&self, function: &KeyFunction) -> Result<BigInt, KeyError> {
        function.recover(&self.pairwise)
    }
}

/// Half-open range `[low, high)` for decoy ordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoyRange {
    pub low: BigUint,
    pub high: BigUint,
}

impl Default for DecoyRange {
    fn default() -> Self {
        Self { low: BigUint::zero(), high: BigUint::one() << DEFAULT_KEY_BITS }
    }
}

/// The key negotiator: holds `a`, `A = g^a`, the member pairwise keys and
/// the current group key.
#[derive(Debug, Clone)]
pub struct Negotiator {
    params: DhParams,
    secret: BigUint,
    public: BigUint,
    member_keys: BTreeMap<MemberId, BigUint>,
    group_key: BigUint,
    key_range: DecoyRange,
}

impl Negotiator {
    pub fn setup<R: Rng + ?Sized>(params: DhParams, rng: &mut R) -> Self {
        loop {
            let secret = params.random_secret(rng);
            if let Ok(n) = Self::with_secret(params.clone(), secret) {
                return n;
            }
        }
    }

    pub fn with_secret(params: DhParams, secret: BigUint) -> Result<Self, KeyError> {
        params.check_secret(&secret)?;
        let public = params.g.modpow(&secret, &params.p);
        params.check_public(&public)?;
        Ok(Self {
            params,
            secret,
            public,
            member_keys: BTreeMap::new(),
            group_key: BigUint::zero(),
            key_range: DecoyRange::default(),
        })
    }

    pub fn params(&self) -> &DhParams {
        &self.params
    }

    pub fn public_value(&self) -> &BigUint {
        &self.public
    }

    pub fn secret(&self) -> &BigUint {
        &self.secret
    }

    pub fn group_key(&self) -> &BigUint {
        &self.group_key
    }

    pub fn member_keys(&self) -> &BTreeMap<MemberId, BigUint> {
        &self.member_keys
    }

    /// `K_i = B_i^a mod p`.
    pub fn derive_pairwise(&self, member_public: &BigUint) -> Result<BigUint, KeyError> {
        self.params.check_public(member_public)?;
        Ok(member_public.modpow(&self.secret, &self.params.p))
    }

    /// Derives and stores the pairwise key for `id`.
    pub fn register(&mut self, id: MemberId, member_public: &BigUint) -> Result<BigUint, KeyError> {
        let key = self.derive_pairwise(member_public)?;
        self.member_keys.insert(id, key.clone());
        Ok(key)
    }

    /// Draws a fresh group key and builds the key function for the current
    /// members.
    pub fn distribute<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<KeyFunction, KeyError> {
        if self.member_keys.is_empty() {
            return Err(KeyError::NoMembers);
        }
        let range = self.key_range.clone();
        self.group_key = random_range(rng, &range.low, &range.high);
        let keys: Vec<BigUint> = self.member_keys.values().cloned().collect();
        build_key_function(&keys, &self.group_key, rng, &range)
    }

    /// Drops `departed` and redistributes under a new group key.
    pub fn rekey<R: Rng + ?Sized>(&mut self, departed: &[MemberId], rng: &mut R) -> Result<KeyFunction, KeyError> {
        for id in departed {
            self.member_keys.remove(id).ok_or(KeyError::UnknownMember(id.0))?;
        }
        self.distribute(rng)
    }
}

/// The published key function `S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyFunction {
    spline: NaturalCubicSpline,
}

fn to_int(x: &BigUint) -> BigInt {
    BigInt::from_biguint(Sign::Plus, x.clone())
}

fn to_rat(x: &BigInt) -> BigRational {
    BigRational::from_integer(x.clone())
}

/// Builds `S` through every `(K_i, y)`, with one random decoy strictly
/// inside each gap between consecutive member keys and one beyond each end.
/// Decoy ordinates are uniform in `range` and never equal `y`.
pub fn build_key_function<R: Rng + ?Sized>(
    member_keys: &[BigUint],
    y: &BigUint,
    rng: &mut R,
    range: &DecoyRange,
) -> Result<KeyFunction, KeyError> {
    if member_keys.is_empty() {
        return Err(KeyError::NoMembers);
    }
    if range.low >= range.high || (range.high.clone() - &range.low == BigUint::one() && range.low == *y) {
        return Err(KeyError::EmptyRange);
    }
    let mut keys: Vec<BigInt> = member_keys.iter().map(to_int).collect();
    keys.sort();
    if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
        return Err(KeyError::DuplicateKey(w[0].clone()));
    }

    let ordinate = |rng: &mut R| -> Result<BigRational, KeyError> {
        for _ in 0..DECOY_RETRIES {
            let v = random_range(rng, &range.low, &range.high);
            if v != *y {
                return Ok(to_rat(&to_int(&v)));
            }
        }
        Err(KeyError::DecoyCollision)
    };

    let first = keys.first().unwrap();
    let last = keys.last().unwrap();
    let span: BigUint = (last - first).magnitude().clone();
    let reach = (span / BigUint::from(keys.len())).max(BigUint::one() << 32u32);

    let mut decoys = Vec::with_capacity(keys.len() + 1);
    let offset = to_int(&(random_below(rng, &reach) + 1u32));
    decoys.push((to_rat(&(first - offset)), ordinate(rng)?));
    for w in keys.windows(2) {
        decoys.push((random_between(rng, &w[0], &w[1]), ordinate(rng)?));
    }
    let offset = to_int(&(random_below(rng, &reach) + 1u32));
    decoys.push((to_rat(&(last + offset)), ordinate(rng)?));

    fit_key_function(member_keys, y, &decoys)
}

/// A uniform integer strictly between `lo` and `hi` when one exists,
/// otherwise `lo + u / 2^64` for uniform `u` in `[1, 2^64)`.
fn random_between<R: Rng + ?Sized>(rng: &mut R, lo: &BigInt, hi: &BigInt) -> BigRational {
    let gap = (hi - lo).magnitude().clone();
    if gap >= BigUint::from(2u32) {
        let step = random_below(rng, &(gap - 1u32)) + 1u32;
        to_rat(&(lo + to_int(&step)))
    } else {
        let u = rng.random_range(1..=u64::MAX);
        to_rat(lo) + BigRational::new(u.into(), BigInt::one() << 64u32)
    }
}

/// Fits `S` through the member points `(K_i, y)` and the given decoys.
/// Every gap between consecutive member keys must contain a decoy.
pub fn fit_key_function(
    member_keys: &[BigUint],
    y: &BigUint,
    decoys: &[(BigRational, BigRational)],
) -> Result<KeyFunction, KeyError> {
    if member_keys.is_empty() {
        return Err(KeyError::NoMembers);
    }
    let y = to_rat(&to_int(y));
    let mut points: Vec<(BigRational, BigRational, bool)> = member_keys
        .iter()
        .map(|k| (to_rat(&to_int(k)), y.clone(), true))
        .chain(decoys.iter().map(|(x, v)| (x.clone(), v.clone(), false)))
        .collect();
    points.sort_by(|a, b| a.0.cmp(&b.0));
    for w in points.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(if w[0].2 && w[1].2 {
                KeyError::DuplicateKey(w[0].0.to_integer())
            } else {
                KeyError::DecoyCollision
            });
        }
    }
    if decoys.iter().any(|(_, v)| *v == y) {
        return Err(KeyError::DecoyCollision);
    }
    let mut prev_member: Option<&BigRational> = None;
    let mut decoy_since = false;
    for (x, _, is_member) in &points {
        if *is_member {
            if let Some(prev) = prev_member {
                if !decoy_since {
                    return Err(KeyError::MissingDecoy(prev.to_integer(), x.to_integer()));
                }
            }
            prev_member = Some(x);
            decoy_since = false;
        } else {
            decoy_since = true;
        }
    }

    let (xs, ys): (Vec<_>, Vec<_>) = points.into_iter().map(|(x, v, _)| (x, v)).unzip();
    let spline = NaturalCubicSpline::fit(&xs, &ys)?;
    Ok(KeyFunction { spline })
}

#[derive(Serialize, Deserialize)]
struct WireKeyFunction {
    knots: Vec<String>,
    coeffs: Vec<[String; 4]>,
}

/// `n` or `n/d`, kept unreduced.
fn parse_fraction(s: &str) -> Result<(BigInt, BigInt), KeyError> {
    let bad = || KeyError::Json(format!("bad rational `{s}`"));
    let (n, d) = s.split_once('/').unwrap_or((s, "1"));
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok((n, d))
}

fn parse_rational(s: &str) -> Result<BigRational, KeyError> {
    let (n, d) = parse_fraction(s)?;
    Ok(BigRational::new(n, d))
}

fn fraction_string(n: &BigInt, d: &BigInt) -> String {
    if d.is_one() {
        n.to_string()
    } else {
        format!("{n}/{d}")
    }
}

/// A piece whose four coefficients arrive as fractions. A shared
/// denominator is taken as is; otherwise coefficients are reduced.
fn parse_piece(coeffs: &[String; 4]) -> Result<Piece, KeyError> {
    let fractions = [
        parse_fraction(&coeffs[0])?,
        parse_fraction(&coeffs[1])?,
        parse_fraction(&coeffs[2])?,
        parse_fraction(&coeffs[3])?,
    ];
    let den = fractions[0].1.clone();
    if fractions.iter().all(|(_, d)| *d == den) {
        let numer = fractions.map(|(n, _)| n);
        return Piece::from_raw(numer, den).ok_or_else(|| KeyError::Json("zero denominator".into()));
    }
    Ok(Piece::new(fractions.map(|(n, d)| BigRational::new(n, d))))
}

impl KeyFunction {
    pub fn spline(&self) -> &NaturalCubicSpline {
        &self.spline
    }

    pub fn knots(&self) -> &[BigRational] {
        self.spline.knots()
    }

    pub fn eval(&self, x: &BigRational) -> Result<BigRational, KeyError> {
        self.spline.eval(x).ok_or_else(|| KeyError::OutsideSpan(x.to_integer()))
    }

    /// `S(K)`, which must be an integer for `K` to be a member key; a
    /// non-integer value is returned truncated.
    pub fn recover(&self, key: &BigUint) -> Result<BigInt, KeyError> {
        Ok(self.eval(&to_rat(&to_int(key)))?.to_integer())
    }

    /// `S(x) == target` for integer `x`, without rational arithmetic on the
    /// common path.
    pub fn hits(&self, x: &BigInt, target: &BigInt) -> Result<bool, KeyError> {
        self.spline.hits(x, target).ok_or_else(|| KeyError::OutsideSpan(x.clone()))
    }

    /// `{"knots":[...],"coeffs":[[a,b,c,d],...]}`, rationals as decimal
    /// `n` or `n/d` strings, coefficients relative to each piece's left knot.
    /// A piece's coefficients share one denominator and are not reduced.
    pub fn to_json(&self) -> String {
        let wire = WireKeyFunction {
            knots: self.spline.knots().iter().map(ToString::to_string).collect(),
            coeffs: self
                .spline
                .pieces()
                .iter()
                .map(|p| p.numerators().clone().map(|n| fraction_string(&n, p.denominator())))
                .collect(),
        };
        serde_json::to_string(&wire).expect("key function serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, KeyError> {
        let wire: WireKeyFunction = serde_json::from_str(text).map_err(|e| KeyError::Json(e.to_string()))?;
        let knots = wire.knots.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>, _>>()?;
        let pieces = wire.coeffs.iter().map(parse_piece).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { spline: NaturalCubicSpline::from_pieces(knots, pieces)? })
    }
}
