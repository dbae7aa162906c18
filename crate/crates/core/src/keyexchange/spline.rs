//! Natural cubic splines in exact arithmetic.
//!
//! Knot abscissae in the key exchange are pairwise Diffie-Hellman keys,
//! hundreds of bits wide, and the spline's denominators grow with every
//! knot. Fitting therefore runs fraction-free over integers: knots and
//! ordinates are scaled to integers, the tridiagonal system for the second
//! derivatives is solved through its leading principal minors with exact
//! divisions only, and each piece keeps integer numerators over one
//! unreduced common denominator. No gcd is taken while fitting or while
//! testing integer abscissae.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// One cubic piece `(n0 + n1 t + n2 t^2 + n3 t^3) / den`, `t = x - x_i`,
/// `den > 0`, not necessarily in lowest terms.
#[derive(Debug, Clone)]
pub struct Piece {
    numer: [BigInt; 4],
    den: BigInt,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.numer.iter().zip(&other.numer).all(|(a, b)| a * &other.den == b * &self.den)
    }
}

impl Eq for Piece {}

impl Piece {
    /// From rational coefficients `[a, b, c, d]` of `a + b t + c t^2 + d t^3`.
    pub fn new(coeffs: [BigRational; 4]) -> Self {
        let den = coeffs.iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let numer = coeffs.map(|c| c.numer() * (&den / c.denom()));
        Self { numer, den }
    }

    /// From integer numerators over a shared denominator.
    pub fn from_raw(numer: [BigInt; 4], den: BigInt) -> Option<Self> {
        match den.sign() {
            num_bigint::Sign::Plus => Some(Self { numer, den }),
            num_bigint::Sign::Minus => Some(Self { numer: numer.map(|n| -n), den: -den }),
            num_bigint::Sign::NoSign => None,
        }
    }

    pub fn numerators(&self) -> &[BigInt; 4] {
        &self.numer
    }

    pub fn denominator(&self) -> &BigInt {
        &self.den
    }

    /// Coefficients in lowest terms.
    pub fn coeffs(&self) -> [BigRational; 4] {
        self.numer.clone().map(|n| BigRational::new(n, self.den.clone()))
    }

    /// `num / den` without a gcd when it is an integer.
    fn ratio(num: BigInt, den: BigInt) -> BigRational {
        let (q, r) = num.div_rem(&den);
        if r.is_zero() {
            BigRational::from_integer(q)
        } else {
            BigRational::new(num, den)
        }
    }

    pub fn eval(&self, t: &BigRational) -> BigRational {
        let (p, q) = (t.numer(), t.denom());
        let [n0, n1, n2, n3] = &self.numer;
        // Homogenized: n0 q^3 + n1 p q^2 + n2 p^2 q + n3 p^3.
        let value = ((n3 * p + n2 * q) * p + n1 * q * q) * p + n0 * q * q * q;
        Self::ratio(value, &self.den * q * q * q)
    }

    /// `(S'(t), S''(t))`.
    pub fn derivatives(&self, t: &BigRational) -> (BigRational, BigRational) {
        let [_, n1, n2, n3] = &self.numer;
        let den = BigRational::from_integer(self.den.clone());
        let [n1, n2, n3] = [n1, n2, n3].map(|n| BigRational::from_integer(n.clone()));
        let two = BigRational::from_integer(2.into());
        let three = BigRational::from_integer(3.into());
        let first = ((&three * &n3 * t + &two * &n2) * t + &n1) / &den;
        let second = (&two * &three * &n3 * t + &two * &n2) / &den;
        (first, second)
    }

    /// Whether the piece evaluates to exactly `target` at integer offset `t`.
    pub fn hits_at_integer(&self, t: &BigInt, target: &BigInt) -> bool {
        let [n0, n1, n2, n3] = &self.numer;
        let value = ((n3 * t + n2) * t + n1) * t + n0;
        value == target * &self.den
    }

    fn eval_integer(&self, t: &BigInt) -> BigRational {
        let [n0, n1, n2, n3] = &self.numer;
        Self::ratio(((n3 * t + n2) * t + n1) * t + n0, self.den.clone())
    }
}

/// Interpolating cubic spline with zero second derivative at both ends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaturalCubicSpline {
    knots: Vec<BigRational>,
    pieces: Vec<Piece>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplineError {
    TooFewKnots,
    NotIncreasing,
    ShapeMismatch,
}

fn lcm_of_denominators(values: &[BigRational]) -> BigInt {
    values.iter().fold(BigInt::one(), |acc, v| if v.denom().is_one() { acc } else { acc.lcm(v.denom()) })
}

fn scaled(v: &BigRational, by: &BigInt) -> BigInt {
    if v.denom().is_one() {
        v.numer() * by
    } else {
        v.numer() * (by / v.denom())
    }
}

fn exact_div(num: BigInt, den: &BigInt) -> BigInt {
    let (q, r) = num.div_rem(den);
    debug_assert!(r.is_zero(), "inexact division in spline solve");
    q
}

impl NaturalCubicSpline {
    /// Fits through `(xs[i], ys[i])`; `xs` strictly increasing, at least two
    /// knots.
    pub fn fit(xs: &[BigRational], ys: &[BigRational]) -> Result<Self, SplineError> {
        if xs.len() != ys.len() {
            return Err(SplineError::ShapeMismatch);
        }
        if xs.len() < 2 {
            return Err(SplineError::TooFewKnots);
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SplineError::NotIncreasing);
        }

        // Integer problem: X = lx x, Y = ly y.
        let lx = lcm_of_denominators(xs);
        let ly = lcm_of_denominators(ys);
        let big_x: Vec<BigInt> = xs.iter().map(|x| scaled(x, &lx)).collect();
        let big_y: Vec<BigInt> = ys.iter().map(|y| scaled(y, &ly)).collect();
        let n = xs.len() - 1;
        let h: Vec<BigInt> = big_x.windows(2).map(|w| &w[1] - &w[0]).collect();
        let dy: Vec<BigInt> = big_y.windows(2).map(|w| &w[1] - &w[0]).collect();

        // Interior rows k = 1..n-1 of
        //   h[k-1] m[k-1] + 2 (h[k-1] + h[k]) m[k] + h[k] m[k+1] = 6 (dy[k]/h[k] - dy[k-1]/h[k-1]).
        // P = prod h clears the right-hand side; theta[k] are the leading
        // principal minors; r[k] = P rhs[k]. With R[k] = r[k] theta[k-1] - h[k-1] R[k-1],
        // N[k] = theta[n-1] P m[k] = (R[k] theta[n-1] - h[k] theta[k-1] N[k+1]) / theta[k].
        let p: BigInt = h.iter().product();
        let p_over_h: Vec<BigInt> = h.iter().map(|hk| &p / hk).collect();
        let mut theta = vec![BigInt::one(); n];
        let mut big_r = vec![BigInt::zero(); n];
        for k in 1..n {
            let diag = (&h[k - 1] + &h[k]) * 2u32;
            theta[k] = if k == 1 {
                diag
            } else {
                &diag * &theta[k - 1] - &h[k - 1] * &h[k - 1] * &theta[k - 2]
            };
            let r = (&dy[k] * &p_over_h[k] - &dy[k - 1] * &p_over_h[k - 1]) * 6u32;
            big_r[k] = if k == 1 { r } else { r * &theta[k - 1] - &h[k - 1] * &big_r[k - 1] };
        }
        let det = theta[n - 1].clone();
        let mut big_n = vec![BigInt::zero(); n + 1];
        if n >= 2 {
            big_n[n - 1] = big_r[n - 1].clone();
            for k in (1..n - 1).rev() {
                let num = &big_r[k] * &det - &h[k] * &theta[k - 1] * &big_n[k + 1];
                big_n[k] = exact_div(num, &theta[k]);
            }
        }

        // Piece i in tau = X - X_i over den = 6 h[i] det P:
        //   a = Y_i den, b = 6 dy det P - h^2 (2 N_i + N_{i+1}),
        //   c = 3 h N_i, d = N_{i+1} - N_i.
        // Then t = x - x_i = tau / lx and ordinates divide by ly.
        let det_p = &det * &p;
        let lx2 = &lx * &lx;
        let lx3 = &lx2 * &lx;
        let pieces = (0..n)
            .map(|i| {
                let den = &h[i] * &det_p * 6u32;
                let a = &big_y[i] * &den;
                let b = &dy[i] * &det_p * 6u32 - &h[i] * &h[i] * (&big_n[i] * 2u32 + &big_n[i + 1]);
                let c = &h[i] * &big_n[i] * 3u32;
                let d = &big_n[i + 1] - &big_n[i];
                Piece { numer: [a, b * &lx, c * &lx2, d * &lx3], den: den * &ly }
            })
            .collect();
        Ok(Self { knots: xs.to_vec(), pieces })
    }

    /// Rebuilds a spline from transmitted pieces.
    pub fn from_pieces(knots: Vec<BigRational>, pieces: Vec<Piece>) -> Result<Self, SplineError> {
        if knots.len() < 2 {
            return Err(SplineError::TooFewKnots);
        }
        if pieces.len() + 1 != knots.len() {
            return Err(SplineError::ShapeMismatch);
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SplineError::NotIncreasing);
        }
        Ok(Self { knots, pieces })
    }

    pub fn knots(&self) -> &[BigRational] {
        &self.knots
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Index of the piece covering `x`, or `None` outside the knot span.
    /// The last knot belongs to the last piece.
    pub fn locate(&self, x: &BigRational) -> Option<usize> {
        let first = self.knots.first()?;
        let last = self.knots.last()?;
        if x < first || x > last {
            return None;
        }
        let idx = self.knots.partition_point(|k| k <= x);
        Some((idx - 1).min(self.pieces.len() - 1))
    }

    pub fn eval(&self, x: &BigRational) -> Option<BigRational> {
        let i = self.locate(x)?;
        let start = &self.knots[i];
        if x.is_integer() && start.is_integer() {
            Some(self.pieces[i].eval_integer(&(x.numer() - start.numer())))
        } else {
            Some(self.pieces[i].eval(&(x - start)))
        }
    }

    /// Whether `S(x) == target` for an integer `x`, skipping rational
    /// arithmetic when the covering piece starts at an integer knot.
    pub fn hits(&self, x: &BigInt, target: &BigInt) -> Option<bool> {
        let xr = BigRational::from_integer(x.clone());
        let i = self.locate(&xr)?;
        let start = &self.knots[i];
        if start.is_integer() {
            Some(self.pieces[i].hits_at_integer(&(x - start.numer()), target))
        } else {
            let v = self.pieces[i].eval(&(xr - start));
            Some(v.is_integer() && v.numer() == target)
        }
    }

    /// Left and right `(S', S'')` at interior knot `k` (1 ≤ k < knots - 1).
    pub fn one_sided_derivatives(
        &self,
        k: usize,
    ) -> Option<((BigRational, BigRational), (BigRational, BigRational))> {
        if k == 0 || k + 1 >= self.knots.len() {
            return None;
        }
        let width = &self.knots[k] - &self.knots[k - 1];
        let left = self.pieces[k - 1].derivatives(&width);
        let right = self.pieces[k].derivatives(&BigRational::zero());
        Some((left, right))
    }

    /// `S''` at the two ends, which a natural spline pins to zero.
    pub fn end_curvatures(&self) -> (BigRational, BigRational) {
        let n = self.pieces.len();
        let width = &self.knots[n] - &self.knots[n - 1];
        (self.pieces[0].derivatives(&BigRational::zero()).1, self.pieces[n - 1].derivatives(&width).1)
    }
}
