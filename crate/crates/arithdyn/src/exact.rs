//! Exact rational arithmetic, projective points, and Weil heights over the
//! rationals.
//!
//! Everything here is computed from arbitrary-precision integers; heights are
//! returned in natural-log units as `f64` obtained from the exact integer via
//! [`ln_abs`], which is accurate to well over 50 bits.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Arbitrary-precision rational scalar. `BigRational` keeps the numerator and
/// denominator coprime with positive denominator, which is exactly the
/// canonical form we need.
pub type Rat = BigRational;

/// Parse a rational from a decimal string, either `"p"` or `"p/q"`.
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    let parse_int = |t: &str| -> Result<BigInt> {
        t.trim()
            .parse::<BigInt>()
            .map_err(|e| Error::Invalid(format!("bad integer {t:?}: {e}")))
    };
    match s.split_once('/') {
        Some((num, den)) => {
            let d = parse_int(den)?;
            if d.is_zero() {
                return Err(Error::Invalid(format!("zero denominator in {s:?}")));
            }
            Ok(Rat::new(parse_int(num)?, d))
        }
        None => Ok(Rat::from_integer(parse_int(s)?)),
    }
}

/// Render a rational as `"p"` or `"p/q"`.
pub fn rat_to_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Natural log of `|n|` for a nonzero big integer. The top 64 bits of the
/// magnitude feed the mantissa, so the absolute error stays below 1e-12 even
/// for million-bit inputs.
pub fn ln_abs(n: &BigInt) -> f64 {
    let mag = n.magnitude();
    assert!(!mag.is_zero(), "ln_abs of zero");
    let bits = mag.bits();
    if bits <= 53 {
        return (mag.to_u64().expect("fits in u64") as f64).ln();
    }
    let shift = bits - 64;
    let top: BigUint = mag >> shift;
    let m = top.to_u64().expect("64-bit window") as f64;
    m.ln() + (shift as f64) * std::f64::consts::LN_2
}

/// Natural log of a positive rational.
pub fn ln_rat(r: &Rat) -> f64 {
    assert!(r.is_positive(), "ln_rat of non-positive rational");
    if r.is_one() {
        return 0.0;
    }
    ln_abs(r.numer()) - ln_abs(r.denom())
}

/// Total bit size of a rational (numerator plus denominator).
pub fn rat_bits(r: &Rat) -> u64 {
    r.numer().magnitude().bits() + r.denom().magnitude().bits()
}

// ---------------------------------------------------------------------------
// Projective points
// ---------------------------------------------------------------------------

/// A point of projective space over the rationals in canonical form:
/// coprime integer coordinates, not all zero, first nonzero coordinate
/// positive. Canonical form makes point equality bitwise equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProjPoint {
    coords: Vec<BigInt>,
}

impl ProjPoint {
    /// Canonicalize a vector of rationals into a projective point.
    pub fn normalize(raw: &[Rat]) -> Result<ProjPoint> {
        if raw.iter().all(|c| c.is_zero()) {
            return Err(Error::AllZero);
        }
        let mut lcm = BigInt::one();
        for c in raw {
            lcm = lcm.lcm(c.denom());
        }
        let ints: Vec<BigInt> = raw.iter().map(|c| (c * &lcm).to_integer()).collect();
        Self::from_integers(ints)
    }

    /// Canonicalize integer coordinates (clear the gcd, fix the sign).
    pub fn from_integers(mut coords: Vec<BigInt>) -> Result<ProjPoint> {
        if coords.is_empty() {
            return Err(Error::Invalid("projective point needs coordinates".into()));
        }
        let mut gcd = BigInt::zero();
        for c in &coords {
            gcd = gcd.gcd(c);
        }
        if gcd.is_zero() {
            return Err(Error::AllZero);
        }
        if !gcd.is_one() {
            for c in coords.iter_mut() {
                *c = &*c / &gcd;
            }
        }
        let negate = coords
            .iter()
            .find(|c| !c.is_zero())
            .map(|c| c.is_negative())
            .unwrap_or(false);
        if negate {
            for c in coords.iter_mut() {
                *c = -&*c;
            }
        }
        Ok(ProjPoint { coords })
    }

    /// Dimension `N` of the ambient projective space.
    pub fn dimension(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[BigInt] {
        &self.coords
    }

    /// Total bit size of the coordinate vector.
    pub fn bit_size(&self) -> u64 {
        self.coords
            .iter()
            .map(|c| c.magnitude().bits().max(1))
            .sum()
    }

    /// The point with homogeneous coordinates `(1 : x)`.
    pub fn embed_scalar(x: &Rat) -> ProjPoint {
        ProjPoint::normalize(&[Rat::one(), x.clone()]).expect("nonzero")
    }
}

impl fmt::Display for ProjPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, " : ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for ProjPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Vec<String> = self.coords.iter().map(|c| c.to_string()).collect();
        strs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProjPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let strs = Vec::<String>::deserialize(d)?;
        let mut coords = Vec::with_capacity(strs.len());
        for s in &strs {
            coords.push(
                s.trim()
                    .parse::<BigInt>()
                    .map_err(|e| D::Error::custom(format!("bad coordinate {s:?}: {e}")))?,
            );
        }
        ProjPoint::from_integers(coords).map_err(D::Error::custom)
    }
}

/// Weil height of a canonical projective point, in natural-log units. Over
/// the rationals on coprime integer coordinates the place sum collapses to
/// the log of the largest absolute coordinate.
pub fn weil_height(p: &ProjPoint) -> f64 {
    let max = p
        .coords()
        .iter()
        .map(|c| c.magnitude())
        .max()
        .expect("nonempty");
    if max.is_one() {
        return 0.0;
    }
    ln_abs(&BigInt::from_biguint(Sign::Plus, max.clone()))
}

/// Weil height evaluated literally as a sum over the places of the
/// rationals: the archimedean term plus one term per prime dividing a
/// coordinate. Needs to factor the coordinates, so it carries a budget.
pub fn height_via_places(p: &ProjPoint, budget: &FactorBudget) -> Result<f64> {
    let arch = weil_height(p);
    // Union of primes dividing any nonzero coordinate.
    let mut primes: Vec<BigUint> = Vec::new();
    for c in p.coords() {
        if c.is_zero() {
            continue;
        }
        for (q, _) in factor(c.magnitude(), budget)? {
            if !primes.contains(&q) {
                primes.push(q);
            }
        }
    }
    primes.sort();
    let mut total = arch;
    for q in &primes {
        // max_i |x_i|_q = q^{-min ord_q over the nonzero coordinates}.
        let min_ord = p
            .coords()
            .iter()
            .filter(|c| !c.is_zero())
            .map(|c| ord_in(c.magnitude(), q))
            .min()
            .expect("nonzero coordinate exists");
        total += -(min_ord as f64) * ln_abs(&BigInt::from_biguint(Sign::Plus, q.clone()));
    }
    Ok(total)
}

fn ord_in(n: &BigUint, q: &BigUint) -> u64 {
    let mut n = n.clone();
    let mut ord = 0;
    loop {
        let (div, rem) = n.div_rem(q);
        if rem.is_zero() {
            ord += 1;
            n = div;
        } else {
            return ord;
        }
    }
}

// ---------------------------------------------------------------------------
// Torus points
// ---------------------------------------------------------------------------

/// A point of the split torus: a vector of nonzero rationals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TorusPoint {
    coords: Vec<Rat>,
}

impl TorusPoint {
    pub fn new(coords: Vec<Rat>) -> Result<TorusPoint> {
        if coords.is_empty() {
            return Err(Error::Invalid(
                "torus point needs at least one coordinate".into(),
            ));
        }
        if let Some(i) = coords.iter().position(|c| c.is_zero()) {
            return Err(Error::DomainViolation(format!(
                "torus coordinate {i} is zero"
            )));
        }
        Ok(TorusPoint { coords })
    }

    pub fn rank(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Rat] {
        &self.coords
    }

    pub fn bit_size(&self) -> u64 {
        self.coords.iter().map(rat_bits).sum()
    }
}

impl fmt::Display for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", rat_to_string(c))?;
        }
        write!(f, ")")
    }
}

impl Serialize for TorusPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Vec<String> = self.coords.iter().map(rat_to_string).collect();
        strs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TorusPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let strs = Vec::<String>::deserialize(d)?;
        let mut coords = Vec::with_capacity(strs.len());
        for s in &strs {
            coords.push(parse_rat(s).map_err(D::Error::custom)?);
        }
        TorusPoint::new(coords).map_err(D::Error::custom)
    }
}

/// Height of a rational scalar: `h(1 : x)`, i.e. `log max(|num|, den)`.
pub fn scalar_height(x: &Rat) -> f64 {
    let num = x.numer().magnitude();
    let den = x.denom().magnitude();
    let max = num.max(den);
    if max.is_one() {
        0.0
    } else {
        ln_abs(&BigInt::from_biguint(Sign::Plus, max.clone()))
    }
}

/// Height of a torus point under the product-of-lines compactification:
/// the sum of the coordinatewise scalar heights. Zero exactly when every
/// coordinate is a unit.
pub fn torus_height(x: &TorusPoint) -> f64 {
    x.coords().iter().map(scalar_height).sum()
}

// ---------------------------------------------------------------------------
// Factorization and prime support
// ---------------------------------------------------------------------------

/// Budget for exact factorization: trial division up to `trial_limit`, then
/// Pollard rho with at most `rho_iters` iterations per attempt and
/// `rho_restarts` attempts per composite. Exceeding the budget is a soft
/// error, never a silently wrong answer.
#[derive(Clone, Debug)]
pub struct FactorBudget {
    pub trial_limit: u64,
    pub rho_iters: u64,
    pub rho_restarts: u32,
}

impl Default for FactorBudget {
    fn default() -> Self {
        FactorBudget {
            trial_limit: 1_000_000,
            rho_iters: 200_000,
            rho_restarts: 6,
        }
    }
}

/// Factor a positive integer within the budget. Returns sorted
/// `(prime, exponent)` pairs; `1` factors to the empty list.
pub fn factor(n: &BigUint, budget: &FactorBudget) -> Result<Vec<(BigUint, u32)>> {
    if n.is_zero() {
        return Err(Error::Invalid("cannot factor zero".into()));
    }
    let mut factors: Vec<(BigUint, u32)> = Vec::new();
    let push = |factors: &mut Vec<(BigUint, u32)>, q: BigUint, e: u32| {
        if let Some(entry) = factors.iter_mut().find(|(p, _)| *p == q) {
            entry.1 += e;
        } else {
            factors.push((q, e));
        }
    };
    let mut rest = n.clone();
    let mut d: u64 = 2;
    while d <= budget.trial_limit {
        let dq = BigUint::from(d);
        if &dq * &dq > rest {
            break;
        }
        let mut e = 0;
        loop {
            let (quo, rem) = rest.div_rem(&dq);
            if rem.is_zero() {
                rest = quo;
                e += 1;
            } else {
                break;
            }
        }
        if e > 0 {
            push(&mut factors, dq, e);
        }
        d = if d == 2 { 3 } else { d + 2 };
    }
    if !rest.is_one() {
        let limit = BigUint::from(budget.trial_limit);
        if rest <= &limit * &limit {
            // A remnant below the square of the trial limit is prime.
            push(&mut factors, rest, 1);
        } else {
            let mut stack = vec![rest];
            while let Some(m) = stack.pop() {
                if m.is_one() {
                    continue;
                }
                if is_probable_prime(&m) {
                    push(&mut factors, m, 1);
                    continue;
                }
                let d = pollard_rho(&m, budget)
                    .ok_or_else(|| Error::FactorizationBudgetExceeded(m.to_string()))?;
                stack.push(&m / &d);
                stack.push(d);
            }
        }
    }
    factors.sort();
    Ok(factors)
}

/// Miller-Rabin with a fixed witness set: deterministic for 64-bit inputs,
/// and a fixed (heuristic but reproducible) choice above.
pub fn is_probable_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for small in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41] {
        let s = BigUint::from(small);
        if n == &s {
            return true;
        }
        if (n % &s).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for a in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41] {
        let a = BigUint::from(a);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Pollard rho (Floyd cycle) with an iteration cap. Deterministic: the
/// polynomial offset and start are derived from the restart counter.
fn pollard_rho(n: &BigUint, budget: &FactorBudget) -> Option<BigUint> {
    let one = BigUint::one();
    for restart in 0..budget.rho_restarts {
        let c = BigUint::from(restart as u64 + 1);
        let mut x = BigUint::from(restart as u64 + 2);
        let mut y = x.clone();
        let mut d = one.clone();
        let mut iters = 0u64;
        while d.is_one() && iters < budget.rho_iters {
            x = (&x * &x + &c) % n;
            y = (&y * &y + &c) % n;
            y = (&y * &y + &c) % n;
            let diff = if x > y { &x - &y } else { &y - &x };
            if diff.is_zero() {
                break;
            }
            d = diff.gcd(n);
            iters += 1;
        }
        if !d.is_one() && &d != n {
            return Some(d);
        }
    }
    None
}

/// Exact multiplicative support of a torus point: one global sorted prime
/// list, per-coordinate exponent vectors, per-coordinate signs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimeSupport {
    pub primes: Vec<BigUint>,
    /// `exponents[i][j]` is the order of `primes[j]` in coordinate `i`
    /// (negative when the prime divides the denominator).
    pub exponents: Vec<Vec<i64>>,
    /// Sign of each coordinate.
    pub signs: Vec<i8>,
}

impl Serialize for PrimeSupport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("PrimeSupport", 3)?;
        let primes: Vec<String> = self.primes.iter().map(|p| p.to_string()).collect();
        st.serialize_field("primes", &primes)?;
        st.serialize_field("exponents", &self.exponents)?;
        st.serialize_field("signs", &self.signs)?;
        st.end()
    }
}

impl PrimeSupport {
    /// Rebuild the torus point from the support data; inverse of
    /// [`prime_support`].
    pub fn reconstruct(&self) -> TorusPoint {
        let coords = self
            .exponents
            .iter()
            .zip(&self.signs)
            .map(|(exps, sign)| {
                let mut num = BigInt::one();
                let mut den = BigInt::one();
                for (q, &e) in self.primes.iter().zip(exps) {
                    let q = BigInt::from_biguint(Sign::Plus, q.clone());
                    match e.cmp(&0) {
                        Ordering::Greater => num *= q.pow(e as u32),
                        Ordering::Less => den *= q.pow((-e) as u32),
                        Ordering::Equal => {}
                    }
                }
                if *sign < 0 {
                    num = -num;
                }
                Rat::new(num, den)
            })
            .collect();
        TorusPoint::new(coords).expect("support reconstructs nonzero coordinates")
    }

    /// Sign and exponent vector of the character value `x^m` on the support
    /// primes.
    pub fn character(&self, m: &[i64]) -> (i8, Vec<i64>) {
        let mut sign = 1i8;
        let mut exps = vec![0i64; self.primes.len()];
        for (i, &mi) in m.iter().enumerate() {
            if mi % 2 != 0 && self.signs[i] < 0 {
                sign = -sign;
            }
            for (j, &e) in self.exponents[i].iter().enumerate() {
                exps[j] += mi * e;
            }
        }
        (sign, exps)
    }
}

/// Factor every coordinate of a torus point into an exact prime support.
pub fn prime_support(x: &TorusPoint, budget: &FactorBudget) -> Result<PrimeSupport> {
    let mut primes: Vec<BigUint> = Vec::new();
    let mut per_coord: Vec<(i8, Vec<(BigUint, i64)>)> = Vec::new();
    for c in x.coords() {
        let sign = if c.is_negative() { -1 } else { 1 };
        let mut pairs: Vec<(BigUint, i64)> = Vec::new();
        for (q, e) in factor(c.numer().magnitude(), budget)? {
            pairs.push((q, e as i64));
        }
        for (q, e) in factor(c.denom().magnitude(), budget)? {
            pairs.push((q, -(e as i64)));
        }
        for (q, _) in &pairs {
            if !primes.contains(q) {
                primes.push(q.clone());
            }
        }
        per_coord.push((sign, pairs));
    }
    primes.sort();
    let exponents = per_coord
        .iter()
        .map(|(_, pairs)| {
            primes
                .iter()
                .map(|q| pairs.iter().find(|(p, _)| p == q).map_or(0, |(_, e)| *e))
                .collect()
        })
        .collect();
    let signs = per_coord.iter().map(|(s, _)| *s).collect();
    Ok(PrimeSupport {
        primes,
        exponents,
        signs,
    })
}

// ---------------------------------------------------------------------------
// Bounded-height enumeration
// ---------------------------------------------------------------------------

/// Default cap on the number of points an enumeration may yield.
pub const ENUMERATION_CAP: u64 = 10_000_000;

/// Largest integer `B` with `ln B <= bound`, robust at the floating-point
/// boundary (`bound = ln 2` must admit `B = 2`).
pub fn height_box_bound(bound: f64) -> u64 {
    if bound < 0.0 {
        return 0;
    }
    // Anything past 2^62 is far beyond every enumeration cap anyway.
    if bound > 42.0 * std::f64::consts::LN_2 {
        return 1 << 62;
    }
    let mut b = bound.exp().floor().max(1.0) as u64;
    while ((b + 1) as f64).ln() <= bound + 1e-9 {
        b += 1;
    }
    while b > 1 && (b as f64).ln() > bound + 1e-9 {
        b -= 1;
    }
    b
}

/// Stream of all canonical points of `P^N(Q)` of Weil height at most a
/// bound, in ascending lexicographic order of coordinate vectors.
pub struct PointStream {
    box_bound: i64,
    state: Option<Vec<i64>>,
}

/// Enumerate the canonical points of `P^N(Q)` with `weil_height <= bound`.
/// Errors with `BoundTooLarge` when the yielded count would exceed `cap`
/// (estimated from the coordinate box, a lower bound within a small constant
/// of the true count).
pub fn enumerate_points(dim: usize, bound: f64, cap: u64) -> Result<PointStream> {
    if !(bound >= 0.0) {
        return Err(Error::Invalid("height bound must be nonnegative".into()));
    }
    let b = height_box_bound(bound);
    let box_size = (2u128 * b as u128 + 1)
        .checked_pow((dim + 1) as u32)
        .unwrap_or(u128::MAX);
    if box_size / 4 > cap as u128 {
        return Err(Error::BoundTooLarge(format!(
            "about {} candidates exceed the cap {cap}",
            box_size / 4
        )));
    }
    let mut start = vec![-(b as i64); dim + 1];
    start[0] = 0; // a negative first coordinate is never canonical
    Ok(PointStream {
        box_bound: b as i64,
        state: Some(start),
    })
}

impl PointStream {
    fn is_canonical(coords: &[i64]) -> bool {
        let mut gcd: i64 = 0;
        for &c in coords {
            gcd = gcd_i64(gcd, c.abs());
        }
        if gcd != 1 {
            return false;
        }
        match coords.iter().find(|&&c| c != 0) {
            Some(&first) => first > 0,
            None => false,
        }
    }

    fn advance(&mut self) {
        let b = self.box_bound;
        if let Some(state) = &mut self.state {
            for i in (0..state.len()).rev() {
                if state[i] < b {
                    state[i] += 1;
                    return;
                }
                state[i] = -b;
            }
            self.state = None;
        }
    }
}

fn gcd_i64(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd_i64(b, a % b)
    }
}

impl Iterator for PointStream {
    type Item = ProjPoint;

    fn next(&mut self) -> Option<ProjPoint> {
        loop {
            let coords = self.state.as_ref()?.clone();
            self.advance();
            if Self::is_canonical(&coords) {
                let ints = coords.iter().map(|&c| BigInt::from(c)).collect();
                return Some(ProjPoint { coords: ints });
            }
        }
    }
}
