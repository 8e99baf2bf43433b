//! Dynamical degrees as certified spectral-radius intervals, and arithmetic
//! degrees as orbit-height estimators.
//!
//! The spectral radius of an integer matrix is computed exactly: integer
//! roots are split off by the rational-root theorem, and the rest is an
//! enclosure by bisection with an exact all-roots-in-a-disk predicate
//! (Schur-Cohn reduction over big integers). A Graeffe-iteration fallback
//! covers degrees too large for the reduction at coarse precision.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{factor, ln_abs, prime_support, FactorBudget, Rat, TorusPoint};
use crate::linalg::{char_poly_q, int_to_rat_mat, IMat, QMat};
use crate::maps::{MonomialMap, OrbitTrace, SelfMap};

/// Largest degree the Schur-Cohn bisection accepts: its table entries double
/// in bit size per row, so this keeps single predicate calls fast.
const SCHUR_DEGREE_CAP: usize = 16;
/// Bit budget per coefficient for the Graeffe fallback.
const GRAEFFE_BIT_CAP: u64 = 1 << 22;

// ---------------------------------------------------------------------------
// Characteristic polynomials
// ---------------------------------------------------------------------------

/// Monic integer characteristic polynomial, coefficients ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharPoly {
    pub coeffs: Vec<BigInt>,
}

impl CharPoly {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Render as a human-readable polynomial in `t`.
    pub fn display(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let term = match (i, c.to_string().as_str()) {
                (0, s) => s.to_string(),
                (1, "1") => "t".into(),
                (1, "-1") => "-t".into(),
                (1, s) => format!("{s} t"),
                (_, "1") => format!("t^{i}"),
                (_, "-1") => format!("-t^{i}"),
                (_, s) => format!("{s} t^{i}"),
            };
            parts.push(term);
        }
        if parts.is_empty() {
            return "0".into();
        }
        let mut out = parts[0].clone();
        for p in &parts[1..] {
            if let Some(stripped) = p.strip_prefix('-') {
                out.push_str(" - ");
                out.push_str(stripped);
            } else {
                out.push_str(" + ");
                out.push_str(p);
            }
        }
        out
    }
}

/// Exact characteristic polynomial of an integer matrix (`n <= 64`).
pub fn char_poly(a: &IMat) -> Result<CharPoly> {
    let n = a.len();
    if n == 0 || n > 64 {
        return Err(Error::Invalid(format!(
            "characteristic polynomial wants 1 <= n <= 64, got {n}"
        )));
    }
    if a.iter().any(|row| row.len() != n) {
        return Err(Error::Invalid("matrix is not square".into()));
    }
    let coeffs_q = char_poly_q(&int_to_rat_mat(a));
    let coeffs = coeffs_q
        .iter()
        .map(|c| {
            if c.denom().is_one() {
                Ok(c.numer().clone())
            } else {
                Err(Error::Invalid(
                    "characteristic polynomial of an integer matrix must be integral".into(),
                ))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CharPoly { coeffs })
}

// ---------------------------------------------------------------------------
// Certified spectral radius
// ---------------------------------------------------------------------------

/// An exact rational enclosure of a real quantity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeInterval {
    pub lo: Rat,
    pub hi: Rat,
}

impl DegreeInterval {
    pub fn exact(v: Rat) -> DegreeInterval {
        DegreeInterval { lo: v.clone(), hi: v }
    }

    pub fn exact_int(v: i64) -> DegreeInterval {
        Self::exact(Rat::from_integer(BigInt::from(v)))
    }

    pub fn width(&self) -> f64 {
        (self.hi.clone() - self.lo.clone()).to_f64().unwrap_or(f64::INFINITY)
    }

    pub fn lo_f64(&self) -> f64 {
        self.lo.to_f64().unwrap_or(f64::NAN)
    }

    pub fn hi_f64(&self) -> f64 {
        self.hi.to_f64().unwrap_or(f64::NAN)
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo_f64() + self.hi_f64()) / 2.0
    }

    pub fn contains_f64(&self, v: f64) -> bool {
        self.lo_f64() - 1e-15 <= v && v <= self.hi_f64() + 1e-15
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    /// Interval power (endpoints nonnegative here).
    pub fn pow(&self, n: u32) -> DegreeInterval {
        let mut lo = Rat::one();
        let mut hi = Rat::one();
        for _ in 0..n {
            lo *= self.lo.clone();
            hi *= self.hi.clone();
        }
        DegreeInterval { lo, hi }
    }

    pub fn intersects(&self, other: &DegreeInterval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Strict Schur stability of an integer polynomial (ascending coefficients,
/// nonzero leading): are all complex roots strictly inside the unit disk?
/// The Schur-Cohn reduction is exact and total: a root exactly on the circle
/// reports `false`.
fn schur_stable(p: &[BigInt]) -> bool {
    let mut p: Vec<BigInt> = p.to_vec();
    loop {
        while p.len() > 1 && p.last().expect("nonempty").is_zero() {
            p.pop();
        }
        let m = p.len() - 1;
        if m == 0 {
            return true;
        }
        let a0 = p[0].clone();
        let am = p[m].clone();
        if a0.magnitude() >= am.magnitude() {
            return false;
        }
        // q = (am p - a0 p~)/z, with p~ the reversed polynomial.
        let mut q: Vec<BigInt> = (1..=m).map(|j| &am * &p[j] - &a0 * &p[m - j]).collect();
        // Content removal keeps the bit growth in check.
        let mut gcd = BigInt::zero();
        for c in &q {
            gcd = num_integer::Integer::gcd(&gcd, c);
        }
        if !gcd.is_zero() && !gcd.is_one() {
            for c in q.iter_mut() {
                *c = &*c / &gcd;
            }
        }
        p = q;
    }
}

/// Is every root of `p` of modulus strictly below the positive rational
/// `r = u/v`? Exact: scales the variable and runs the Schur test.
fn all_roots_below(p: &[BigInt], r: &Rat) -> bool {
    let u = r.numer();
    let v = r.denom();
    let m = p.len() - 1;
    let mut scaled = Vec::with_capacity(p.len());
    let mut upow = BigInt::one();
    for (i, c) in p.iter().enumerate() {
        let vpow = v.pow((m - i) as u32);
        scaled.push(c * &upow * vpow);
        upow *= u;
    }
    schur_stable(&scaled)
}

/// Upper bound on all root moduli: `1 + max |a_i| / |a_m|`.
fn cauchy_bound(p: &[BigInt]) -> Rat {
    let m = p.len() - 1;
    let am = p[m].magnitude().clone();
    let mut max = BigUint::zero();
    for c in &p[..m] {
        if c.magnitude() > &max {
            max = c.magnitude().clone();
        }
    }
    Rat::one() + Rat::new(BigInt::from(max), BigInt::from(am))
}

/// Largest positive root of `|a_m| r^m - sum |a_i| r^i` by exact bisection,
/// to relative precision `2^-40`. Requires some lower coefficient nonzero.
fn cauchy_root(p: &[BigInt]) -> Rat {
    let m = p.len() - 1;
    let am = BigInt::from(p[m].magnitude().clone());
    let lows: Vec<BigInt> = p[..m]
        .iter()
        .map(|c| BigInt::from(c.magnitude().clone()))
        .collect();
    let g = |r: &Rat| -> bool {
        // true when |a_m| r^m > sum |a_i| r^i  (r past the root)
        let mut pow = Rat::one();
        let mut sum = Rat::zero();
        for c in &lows {
            sum += Rat::from_integer(c.clone()) * &pow;
            pow *= r;
        }
        Rat::from_integer(am.clone()) * pow > sum
    };
    let mut hi = cauchy_bound(p);
    let mut lo = Rat::new(BigInt::one(), BigInt::from(1u64 << 32));
    while g(&lo) {
        lo = &lo / Rat::from_integer(BigInt::from(2));
    }
    for _ in 0..80 {
        let mid = (&lo + &hi) / Rat::from_integer(BigInt::from(2));
        if g(&mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        let rel = (&hi - &lo) / &hi;
        if rel < Rat::new(BigInt::one(), BigInt::from(1u64 << 40)) {
            break;
        }
    }
    hi
}

/// One Graeffe step: the returned polynomial has the squares of the roots.
fn graeffe_step(p: &[BigInt]) -> Vec<BigInt> {
    let m = p.len() - 1;
    let even: Vec<BigInt> = p.iter().step_by(2).cloned().collect();
    let odd: Vec<BigInt> = p.iter().skip(1).step_by(2).cloned().collect();
    let mut out = vec![BigInt::zero(); m + 1];
    let mul_acc = |out: &mut Vec<BigInt>, a: &[BigInt], b: &[BigInt], shift: usize, sign: i64| {
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                let idx = i + j + shift;
                if idx <= m {
                    let term = x * y * BigInt::from(sign);
                    out[idx] = &out[idx] + term;
                }
            }
        }
    };
    mul_acc(&mut out, &even, &even, 0, 1);
    mul_acc(&mut out, &odd, &odd, 1, -1);
    if out[m].is_negative() {
        for c in out.iter_mut() {
            *c = -c.clone();
        }
    }
    // Strip content.
    let mut gcd = BigInt::zero();
    for c in &out {
        gcd = num_integer::Integer::gcd(&gcd, c);
    }
    if !gcd.is_zero() && !gcd.is_one() {
        for c in out.iter_mut() {
            *c = &*c / &gcd;
        }
    }
    out
}

/// Certified enclosure of the spectral radius (max root modulus) of a monic
/// integer polynomial, of width at most `precision`.
pub fn spectral_radius(p: &CharPoly, precision: f64) -> Result<DegreeInterval> {
    if precision <= 0.0 {
        return Err(Error::Invalid("precision must be positive".into()));
    }
    let mut coeffs = p.coeffs.clone();
    if coeffs.len() < 2 {
        return Err(Error::Invalid("polynomial must have positive degree".into()));
    }
    if coeffs.last().expect("nonempty").is_zero() {
        return Err(Error::Invalid("leading coefficient is zero".into()));
    }
    // Zero roots contribute modulus 0.
    while coeffs.len() > 1 && coeffs[0].is_zero() {
        coeffs.remove(0);
    }
    if coeffs.len() == 1 {
        return Ok(DegreeInterval::exact(Rat::zero()));
    }
    // Split off integer roots (the rational roots of a monic integer
    // polynomial): candidates divide the constant term.
    let mut max_int_root: Option<BigUint> = None;
    if let Some(divisors) = small_divisors(coeffs[0].magnitude()) {
        let mut changed = true;
        while changed {
            changed = false;
            for d in &divisors {
                for sign in [1i64, -1] {
                    let root = BigInt::from(d.clone()) * BigInt::from(sign);
                    if eval_at_int(&coeffs, &root).is_zero() {
                        coeffs = synthetic_divide(&coeffs, &root);
                        let mag = root.magnitude().clone();
                        if max_int_root.as_ref().map_or(true, |m| &mag > m) {
                            max_int_root = Some(mag);
                        }
                        changed = true;
                        break;
                    }
                }
                if changed {
                    break;
                }
            }
            if coeffs.len() == 1 {
                break;
            }
            while coeffs.len() > 1 && coeffs[0].is_zero() {
                coeffs.remove(0);
            }
        }
    }
    let exact_part = max_int_root.map(|m| Rat::from_integer(BigInt::from(m)));
    if coeffs.len() == 1 {
        let v = exact_part.unwrap_or_else(Rat::zero);
        return Ok(DegreeInterval::exact(v));
    }

    let residual = enclose_radius(&coeffs, precision)?;
    Ok(match exact_part {
        None => residual,
        Some(lam) => {
            if lam >= residual.hi {
                DegreeInterval::exact(lam)
            } else if lam <= residual.lo {
                residual
            } else {
                DegreeInterval {
                    lo: lam.max(residual.lo),
                    hi: residual.hi,
                }
            }
        }
    })
}

/// Enclose the max root modulus of an integer polynomial with a nonzero
/// constant term: Schur-Cohn bisection when the degree permits, otherwise
/// Graeffe iteration at whatever precision the bit budget allows.
fn enclose_radius(coeffs: &[BigInt], precision: f64) -> Result<DegreeInterval> {
    let m = coeffs.len() - 1;
    let prec_rat = Rat::from_f64(precision)
        .filter(|p| p.is_positive())
        .ok_or_else(|| Error::Invalid("precision must be a positive finite float".into()))?;
    if m <= SCHUR_DEGREE_CAP {
        let mut lo = Rat::zero();
        let mut hi = cauchy_bound(coeffs);
        while !all_roots_below(coeffs, &hi) {
            hi = &hi * Rat::from_integer(BigInt::from(2));
        }
        while (&hi - &lo) > prec_rat {
            let mid = (&lo + &hi) / Rat::from_integer(BigInt::from(2));
            if all_roots_below(coeffs, &mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return Ok(DegreeInterval { lo, hi });
    }
    // Graeffe fallback for large degrees: rho(p)^(2^k) = rho(p_k), and the
    // Cauchy-polynomial root R_k satisfies rho <= R_k <= 2m rho.
    let mut q = coeffs.to_vec();
    let mut k: u32 = 0;
    loop {
        let bits: u64 = q.iter().map(|c| c.magnitude().bits()).max().unwrap_or(1);
        let rk = cauchy_root(&q);
        let scale = 1.0 / (1u64 << k) as f64;
        let ln_rk = ln_rat_f64(&rk);
        let hi = (ln_rk * scale).exp() * (1.0 + 1e-12);
        let lo = ((ln_rk - (2.0 * m as f64).ln()) * scale).exp() * (1.0 - 1e-12);
        if hi - lo <= precision {
            let lo_rat = Rat::from_f64(lo).unwrap_or_else(Rat::zero);
            let hi_rat = Rat::from_f64(hi).unwrap_or_else(|| Rat::from_integer(BigInt::one()));
            return Ok(DegreeInterval {
                lo: lo_rat.max(Rat::zero()),
                hi: hi_rat,
            });
        }
        if bits.saturating_mul(2) > GRAEFFE_BIT_CAP || k >= 24 {
            return Err(Error::PrecisionUnreachable {
                precision,
                reason: format!(
                    "degree {m} exceeds the exact-bisection cap and Graeffe \
                     narrowing stalled at width {:.3e}",
                    hi - lo
                ),
            });
        }
        q = graeffe_step(&q);
        k += 1;
    }
}

fn ln_rat_f64(r: &Rat) -> f64 {
    ln_abs(r.numer()) - ln_abs(r.denom())
}

fn eval_at_int(coeffs: &[BigInt], x: &BigInt) -> BigInt {
    let mut acc = BigInt::zero();
    for c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Quotient of a monic-led polynomial by `(t - root)`, exact.
fn synthetic_divide(coeffs: &[BigInt], root: &BigInt) -> Vec<BigInt> {
    let m = coeffs.len() - 1;
    let mut out = vec![BigInt::zero(); m];
    let mut carry = coeffs[m].clone();
    for i in (0..m).rev() {
        out[i] = carry.clone();
        carry = &coeffs[i] + carry * root;
    }
    debug_assert!(carry.is_zero(), "not a root");
    out
}

/// Divisors of `n` when its factorization fits the default budget and the
/// divisor count stays tame; `None` otherwise (the caller skips the exact
/// fast path).
fn small_divisors(n: &BigUint) -> Option<Vec<BigUint>> {
    if n.is_zero() {
        return None;
    }
    let budget = FactorBudget::default();
    let factors = factor(n, &budget).ok()?;
    let count: u64 = factors.iter().map(|(_, e)| *e as u64 + 1).product();
    if count > 4096 {
        return None;
    }
    let mut divisors = vec![BigUint::one()];
    for (p, e) in &factors {
        let mut next = Vec::with_capacity(divisors.len() * (*e as usize + 1));
        for d in &divisors {
            let mut pk = BigUint::one();
            for _ in 0..=*e {
                next.push(d * &pk);
                pk *= p;
            }
        }
        divisors = next;
    }
    divisors.sort();
    Some(divisors)
}

// ---------------------------------------------------------------------------
// Dynamical degrees
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeMethod {
    ExactDegree,
    SpectralRadius,
    ProductMax,
    ToricPullback,
}

/// A dynamical degree: an enclosing interval, how it was obtained, and a
/// description of the eigen-data behind it.
#[derive(Clone, Debug)]
pub struct DegreeReport {
    pub interval: DegreeInterval,
    pub method: DegreeMethod,
    pub witness: String,
}

/// Compute the dynamical degree of a self-map as the spectral radius of its
/// pullback action on divisor classes.
pub fn dynamical_degree(f: &SelfMap, precision: f64) -> Result<DegreeReport> {
    match f {
        SelfMap::Projective(m) => Ok(DegreeReport {
            interval: DegreeInterval::exact_int(m.degree() as i64),
            method: DegreeMethod::ExactDegree,
            witness: format!(
                "pullback on the divisor class of P^{} is multiplication by {}",
                m.dim(),
                m.degree()
            ),
        }),
        SelfMap::Monomial(m) => {
            let a: IMat = m
                .matrix()
                .iter()
                .map(|row| row.iter().map(|&x| BigInt::from(x)).collect())
                .collect();
            let cp = char_poly(&a)?;
            let interval = spectral_radius(&cp, precision)?;
            Ok(DegreeReport {
                witness: format!(
                    "char poly {}; dominant modulus in [{:.12}, {:.12}]",
                    cp.display(),
                    interval.lo_f64(),
                    interval.hi_f64()
                ),
                interval,
                method: DegreeMethod::SpectralRadius,
            })
        }
        SelfMap::Linear(_) => Ok(DegreeReport {
            interval: DegreeInterval::exact_int(1),
            method: DegreeMethod::ExactDegree,
            witness: "linear extension to projective space has degree 1".into(),
        }),
        SelfMap::Product(pm) => {
            let mut reports = Vec::with_capacity(pm.components.len());
            for g in &pm.components {
                reports.push(dynamical_degree(g, precision)?);
            }
            let mut best = reports[0].interval.clone();
            for r in &reports[1..] {
                if r.interval.lo > best.lo {
                    best.lo = r.interval.lo.clone();
                }
                if r.interval.hi > best.hi {
                    best.hi = r.interval.hi.clone();
                }
            }
            let witness = format!(
                "max over factors: [{}]",
                reports
                    .iter()
                    .map(|r| format!("{:.6}", r.interval.midpoint()))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            Ok(DegreeReport {
                interval: best,
                method: DegreeMethod::ProductMax,
                witness,
            })
        }
        SelfMap::Toric(sys) => {
            let q = sys.pullback_class();
            let (scaled, scale) = scale_to_integer(q);
            let cp = char_poly(&scaled)?;
            let scaled_interval = spectral_radius(&cp, precision * scale.to_f64().unwrap_or(1.0))?;
            let scale_rat = Rat::from_integer(scale.clone());
            let interval = DegreeInterval {
                lo: scaled_interval.lo / scale_rat.clone(),
                hi: scaled_interval.hi / scale_rat,
            };
            Ok(DegreeReport {
                witness: format!(
                    "class pullback char poly {} (matrix scaled by {}); \
                     dominant modulus in [{:.12}, {:.12}]",
                    cp.display(),
                    scale,
                    interval.lo_f64(),
                    interval.hi_f64()
                ),
                interval,
                method: DegreeMethod::ToricPullback,
            })
        }
    }
}

/// Scale a rational matrix by the lcm of all denominators.
fn scale_to_integer(q: &QMat) -> (IMat, BigInt) {
    let mut lcm = BigInt::one();
    for row in q {
        for x in row {
            lcm = num_integer::Integer::lcm(&lcm, x.denom());
        }
    }
    let scaled = q
        .iter()
        .map(|row| row.iter().map(|x| (x * Rat::from_integer(lcm.clone())).to_integer()).collect())
        .collect();
    (scaled, lcm)
}

/// Float moduli of all pullback eigenvalues, for diagnostics (matching the
/// converged arithmetic degree to the spectrum). Not certified.
pub fn pullback_spectrum(f: &SelfMap) -> Result<Vec<f64>> {
    match f {
        SelfMap::Projective(m) => Ok(vec![m.degree() as f64]),
        SelfMap::Linear(_) => Ok(vec![1.0]),
        SelfMap::Monomial(m) => {
            let a: IMat = m
                .matrix()
                .iter()
                .map(|row| row.iter().map(|&x| BigInt::from(x)).collect())
                .collect();
            let cp = char_poly(&a)?;
            Ok(poly_root_moduli(&cp.coeffs))
        }
        SelfMap::Product(pm) => {
            let mut all = Vec::new();
            for g in &pm.components {
                all.extend(pullback_spectrum(g)?);
            }
            all.sort_by(f64::total_cmp);
            all.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            Ok(all)
        }
        SelfMap::Toric(sys) => {
            let (scaled, scale) = scale_to_integer(sys.pullback_class());
            let cp = char_poly(&scaled)?;
            let s = scale.to_f64().unwrap_or(1.0);
            Ok(poly_root_moduli(&cp.coeffs)
                .into_iter()
                .map(|m| m / s)
                .collect())
        }
    }
}

/// All root moduli of an integer polynomial by Durand-Kerner in f64.
fn poly_root_moduli(coeffs: &[BigInt]) -> Vec<f64> {
    let m = coeffs.len() - 1;
    let lead = coeffs[m].to_f64().unwrap_or(1.0);
    let c: Vec<(f64, f64)> = coeffs
        .iter()
        .map(|x| (x.to_f64().unwrap_or(0.0) / lead, 0.0))
        .collect();
    let cmul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    let csub = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0, a.1 - b.1);
    let cdiv = |a: (f64, f64), b: (f64, f64)| {
        let d = b.0 * b.0 + b.1 * b.1;
        ((a.0 * b.0 + a.1 * b.1) / d, (a.1 * b.0 - a.0 * b.1) / d)
    };
    let eval = |z: (f64, f64)| {
        let mut acc = (0.0, 0.0);
        for k in (0..=m).rev() {
            acc = cmul(acc, z);
            acc = (acc.0 + c[k].0, acc.1 + c[k].1);
        }
        acc
    };
    // Deterministic staggered start.
    let mut roots: Vec<(f64, f64)> = (0..m)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / m as f64;
            (1.3 * theta.cos(), 1.3 * theta.sin())
        })
        .collect();
    for _ in 0..200 {
        let mut shift = 0.0f64;
        for i in 0..m {
            let mut denom = (1.0, 0.0);
            for j in 0..m {
                if i != j {
                    denom = cmul(denom, csub(roots[i], roots[j]));
                }
            }
            let delta = cdiv(eval(roots[i]), denom);
            roots[i] = csub(roots[i], delta);
            shift = shift.max(delta.0.hypot(delta.1));
        }
        if shift < 1e-13 {
            break;
        }
    }
    let mut moduli: Vec<f64> = roots.iter().map(|z| z.0.hypot(z.1)).collect();
    moduli.sort_by(f64::total_cmp);
    moduli.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    moduli
}

// ---------------------------------------------------------------------------
// Arithmetic degrees
// ---------------------------------------------------------------------------

/// Orbit-height estimate of the arithmetic degree: the n-th-root sequence,
/// the consecutive-ratio sequence, and the stabilized value when the ratios
/// agree over a trailing window. Ratios converge geometrically when
/// `h_n ~ C d^n`, while the roots carry an O(1/n) bias, so the ratio value
/// is the one reported.
#[derive(Clone, Debug, Serialize)]
pub struct AlphaEstimate {
    pub root_sequence: Vec<f64>,
    pub ratio_sequence: Vec<f64>,
    /// `None` when the ratios have not stabilized (diverged or truncated).
    pub point_value: Option<f64>,
    pub converged: bool,
    pub window: usize,
}

/// Estimate the arithmetic degree from an orbit trace.
pub fn arithmetic_degree(
    trace: &OrbitTrace,
    tolerance: f64,
    window: usize,
) -> Result<AlphaEstimate> {
    let len = trace.heights.len();
    if window == 0 {
        return Err(Error::Invalid("window must be positive".into()));
    }
    if len < window + 2 {
        return Err(Error::InsufficientTrace {
            need: window + 2,
            have: len,
        });
    }
    let guarded: Vec<f64> = trace.heights.iter().map(|&h| h.max(1.0)).collect();
    let root_sequence: Vec<f64> = (1..len)
        .map(|n| guarded[n].powf(1.0 / n as f64))
        .collect();
    let ratio_sequence: Vec<f64> = (0..len - 1).map(|n| guarded[n + 1] / guarded[n]).collect();
    let tail = &ratio_sequence[ratio_sequence.len() - window..];
    let max = tail.iter().cloned().fold(f64::MIN, f64::max);
    let min = tail.iter().cloned().fold(f64::MAX, f64::min);
    let converged = max - min <= tolerance;
    let point_value = if converged {
        Some(tail.iter().sum::<f64>() / window as f64)
    } else {
        None
    };
    Ok(AlphaEstimate {
        root_sequence,
        ratio_sequence,
        point_value,
        converged,
        window,
    })
}

/// Outcome of matching a converged estimate against the pullback spectrum.
#[derive(Clone, Debug, Serialize)]
pub struct EigenvalueMatch {
    pub matched_modulus: f64,
    pub gap: f64,
    /// Set when the gap exceeds 10x the tolerance: an estimator failure
    /// diagnostic, not a statement about the theory.
    pub violation: bool,
}

/// Find the spectrum modulus nearest the converged estimate.
pub fn eigenvalue_match(
    alpha: &AlphaEstimate,
    spectrum: &[f64],
    tolerance: f64,
) -> Result<EigenvalueMatch> {
    let value = alpha
        .point_value
        .ok_or_else(|| Error::Invalid("estimate has not converged".into()))?;
    if spectrum.is_empty() {
        return Err(Error::Invalid("empty spectrum".into()));
    }
    let mut best = spectrum[0];
    for &s in spectrum {
        if (s - value).abs() < (best - value).abs() {
            best = s;
        }
    }
    let gap = (best - value).abs();
    Ok(EigenvalueMatch {
        matched_modulus: best,
        gap,
        violation: gap > 10.0 * tolerance,
    })
}

// ---------------------------------------------------------------------------
// Dense-orbit heuristic
// ---------------------------------------------------------------------------

/// Evidence the heuristic can return. It never certifies density.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum DensityEvidence {
    DenseHeuristic,
    Inconclusive { reason: String },
}

const DENSITY_CHARACTER_RADIUS: i64 = 3;
const DENSITY_MAX_PERIOD: usize = 6;

/// Multiplicative-character test for a monomial orbit: every nonzero
/// character with sup-norm at most 3 must be non-constant and non-periodic
/// (period up to 6) along the orbit prefix. A failed character names an
/// invariant subvariety candidate, so the verdict drops to inconclusive.
pub fn monomial_density_heuristic(
    map: &MonomialMap,
    x: &TorusPoint,
    orbit_len: usize,
    budget: &FactorBudget,
) -> DensityEvidence {
    let n = map.rank();
    if n > 4 {
        return DensityEvidence::Inconclusive {
            reason: format!("character sweep infeasible for rank {n}"),
        };
    }
    let steps = orbit_len.clamp(DENSITY_MAX_PERIOD * 2 + 1, 16);
    let mut supports = Vec::with_capacity(steps + 1);
    let mut current = x.clone();
    for _ in 0..=steps {
        match prime_support(&current, budget) {
            Ok(s) => supports.push(s),
            Err(_) => {
                return DensityEvidence::Inconclusive {
                    reason: "factorization budget exceeded; heuristic skipped".into(),
                }
            }
        }
        match map.apply(&current) {
            Ok(next) => current = next,
            Err(_) => {
                return DensityEvidence::Inconclusive {
                    reason: "orbit left the torus".into(),
                }
            }
        }
    }
    // All nonzero integer vectors with sup norm <= 3.
    let mut m = vec![-DENSITY_CHARACTER_RADIUS; n];
    loop {
        if m.iter().any(|&v| v != 0) {
            let values: Vec<(i8, Vec<i64>)> = supports.iter().map(|s| s.character(&m)).collect();
            if values.iter().all(|v| *v == values[0]) {
                return DensityEvidence::Inconclusive {
                    reason: format!("character {m:?} is constant along the orbit"),
                };
            }
            for period in 1..=DENSITY_MAX_PERIOD {
                if values.len() > period
                    && (0..values.len() - period).all(|k| values[k] == values[k + period])
                {
                    return DensityEvidence::Inconclusive {
                        reason: format!("character {m:?} is {period}-periodic along the orbit"),
                    };
                }
            }
        }
        let mut idx = n;
        loop {
            if idx == 0 {
                return DensityEvidence::DenseHeuristic;
            }
            idx -= 1;
            if m[idx] < DENSITY_CHARACTER_RADIUS {
                m[idx] += 1;
                break;
            }
            m[idx] = -DENSITY_CHARACTER_RADIUS;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{evaluate, iterate_orbit, State, SystemDescriptor};
    use num_bigint::BigInt;

    fn imat(rows: &[&[i64]]) -> IMat {
        rows.iter()
            .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
            .collect()
    }

    fn cp(rows: &[&[i64]]) -> CharPoly {
        char_poly(&imat(rows)).unwrap()
    }

    #[test]
    fn char_poly_examples() {
        assert_eq!(
            cp(&[&[1, 1], &[1, 0]]).coeffs,
            vec![BigInt::from(-1), BigInt::from(-1), BigInt::from(1)]
        );
        assert_eq!(
            cp(&[&[2, 0], &[0, 3]]).coeffs,
            vec![BigInt::from(6), BigInt::from(-5), BigInt::from(1)]
        );
        assert_eq!(
            cp(&[&[1, 0], &[0, 1]]).coeffs,
            vec![BigInt::from(1), BigInt::from(-2), BigInt::from(1)]
        );
    }

    #[test]
    fn char_poly_display() {
        assert_eq!(cp(&[&[1, 1], &[1, 0]]).display(), "t^2 - t - 1");
    }

    /// Independent oracle: bisect the largest real root of a polynomial with
    /// plain f64 arithmetic.
    fn largest_real_root_f64(coeffs: &[f64], mut lo: f64, mut hi: f64) -> f64 {
        let eval = |x: f64| {
            let mut acc = 0.0;
            for c in coeffs.iter().rev() {
                acc = acc * x + c;
            }
            acc
        };
        assert!(eval(lo) < 0.0 && eval(hi) > 0.0);
        for _ in 0..80 {
            let mid = (lo + hi) / 2.0;
            if eval(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo + hi) / 2.0
    }

    #[test]
    fn spectral_radius_golden_ratio() {
        let p = cp(&[&[1, 1], &[1, 0]]);
        let interval = spectral_radius(&p, 1e-9).unwrap();
        assert!(interval.width() <= 1e-9);
        let oracle = largest_real_root_f64(&[-1.0, -1.0, 1.0], 1.0, 2.0);
        assert!(interval.contains_f64(oracle));
        assert!(interval.contains_f64(1.618_033_988_749_894_9));
    }

    #[test]
    fn spectral_radius_silver_case() {
        let p = cp(&[&[2, 1], &[1, 1]]);
        let interval = spectral_radius(&p, 1e-9).unwrap();
        let oracle = largest_real_root_f64(&[1.0, -3.0, 1.0], 2.0, 3.0);
        assert!(interval.contains_f64(oracle));
        assert!(interval.contains_f64(2.618_033_988_749_894_9));
        assert!(interval.width() <= 1e-9);
    }

    #[test]
    fn spectral_radius_linear_is_exact() {
        let p = CharPoly {
            coeffs: vec![BigInt::from(-2), BigInt::from(1)],
        };
        let interval = spectral_radius(&p, 1e-9).unwrap();
        assert!(interval.is_exact());
        assert_eq!(interval.lo, Rat::from_integer(BigInt::from(2)));
    }

    #[test]
    fn spectral_radius_split_integer_roots_exactly() {
        // (t-2)(t-3): radius exactly 3.
        let p = cp(&[&[2, 0], &[0, 3]]);
        let interval = spectral_radius(&p, 1e-9).unwrap();
        assert!(interval.is_exact());
        assert_eq!(interval.lo, Rat::from_integer(BigInt::from(3)));
    }

    #[test]
    fn spectral_radius_complex_dominant_pair() {
        // t^2 + 1: both roots on the unit circle.
        let p = CharPoly {
            coeffs: vec![BigInt::one(), BigInt::zero(), BigInt::one()],
        };
        let interval = spectral_radius(&p, 1e-9).unwrap();
        assert!(interval.contains_f64(1.0));
        assert!(interval.width() <= 1e-9);
    }

    #[test]
    fn spectral_radius_nilpotent() {
        let p = cp(&[&[0, 1], &[0, 0]]);
        let interval = spectral_radius(&p, 1e-9).unwrap();
        assert!(interval.is_exact());
        assert!(interval.lo.is_zero());
    }

    /// Float Gelfand estimate by repeated squaring with the row-sum operator
    /// norm (submultiplicative, so the estimate sits at or above the true
    /// radius, within a couple of percent above it for 6x6 matrices).
    fn gelfand_estimate(a: &[Vec<f64>]) -> f64 {
        let n = a.len();
        let row_sum = |m: &[Vec<f64>]| -> f64 {
            m.iter()
                .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0f64, f64::max)
        };
        let mut m = a.to_vec();
        let mut log_scale = 0.0f64;
        let mut power = 1u64;
        for _ in 0..12 {
            let norm = row_sum(&m);
            if norm == 0.0 {
                return 0.0;
            }
            let scaled: Vec<Vec<f64>> = m
                .iter()
                .map(|r| r.iter().map(|&x| x / norm).collect())
                .collect();
            let mut sq = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += scaled[i][k] * scaled[k][j];
                    }
                    sq[i][j] = acc;
                }
            }
            log_scale = 2.0 * (log_scale + norm.ln());
            power *= 2;
            m = sq;
        }
        let norm = row_sum(&m);
        if norm == 0.0 {
            return 0.0;
        }
        ((log_scale + norm.ln()) / power as f64).exp()
    }

    #[test]
    fn spectral_radius_contains_true_value_on_random_matrices() {
        use rand::Rng;
        let mut rng = crate::seeded_rng(20_240_817);
        for trial in 0..100 {
            let n = rng.gen_range(2usize..=6);
            let a: Vec<Vec<i64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.gen_range(-5i64..=5)).collect())
                .collect();
            let big = imat(&a.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
            let p = char_poly(&big).unwrap();
            let interval = spectral_radius(&p, 1e-6).unwrap();
            let float: Vec<Vec<f64>> = a
                .iter()
                .map(|r| r.iter().map(|&x| x as f64).collect())
                .collect();
            let est = gelfand_estimate(&float);
            // est >= rho up to fp noise, and est <= rho * (1 + ~2%).
            assert!(
                est >= interval.lo_f64() - 1e-6,
                "trial {trial}: estimate {est} below interval [{}, {}] for {a:?}",
                interval.lo_f64(),
                interval.hi_f64()
            );
            assert!(
                est <= interval.hi_f64() * 1.03 + 1e-6,
                "trial {trial}: estimate {est} above interval [{}, {}] for {a:?}",
                interval.lo_f64(),
                interval.hi_f64()
            );
        }
    }

    #[test]
    fn power_law_for_spectral_radius_intervals() {
        let p = cp(&[&[1, 1], &[1, 0]]);
        let base = spectral_radius(&p, 1e-12).unwrap();
        for n in 2..=4u32 {
            let a = imat(&[&[1, 1], &[1, 0]]);
            let an = crate::linalg::mat_pow_i(&a, n);
            let pn = char_poly(&an).unwrap();
            let direct = spectral_radius(&pn, 1e-9).unwrap();
            assert!(direct.intersects(&base.pow(n)), "n = {n}");
        }
    }

    fn squaring() -> SelfMap {
        serde_json::from_str::<SystemDescriptor>(
            r#"{"kind":"projective","N":1,"degree":2,
                "polys":[[["1",[2,0]]],[["1",[0,2]]]]}"#,
        )
        .unwrap()
        .build()
        .unwrap()
    }

    fn fibonacci() -> SelfMap {
        serde_json::from_str::<SystemDescriptor>(r#"{"kind":"monomial","A":[[1,1],[1,0]]}"#)
            .unwrap()
            .build()
            .unwrap()
    }

    fn proj(coords: &[i64]) -> State {
        State::Projective(
            crate::exact::ProjPoint::from_integers(
                coords.iter().map(|&c| BigInt::from(c)).collect(),
            )
            .unwrap(),
        )
    }

    fn torus(coords: &[i64]) -> State {
        State::Torus(
            TorusPoint::new(
                coords
                    .iter()
                    .map(|&c| Rat::from_integer(BigInt::from(c)))
                    .collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn dynamical_degree_of_squaring_is_exact() {
        let report = dynamical_degree(&squaring(), 1e-9).unwrap();
        assert_eq!(report.method, DegreeMethod::ExactDegree);
        assert!(report.interval.is_exact());
        assert_eq!(report.interval.lo, Rat::from_integer(BigInt::from(2)));
    }

    #[test]
    fn dynamical_degree_of_fibonacci_map() {
        let report = dynamical_degree(&fibonacci(), 1e-9).unwrap();
        assert_eq!(report.method, DegreeMethod::SpectralRadius);
        assert!(report.interval.contains_f64(1.618_033_988_749_894_9));
        assert!(report.interval.width() <= 1e-9);
    }

    #[test]
    fn dynamical_degree_of_product_is_max() {
        let f = SelfMap::Product(crate::maps::ProductMap {
            components: vec![squaring(), fibonacci()],
        });
        let report = dynamical_degree(&f, 1e-9).unwrap();
        assert_eq!(report.method, DegreeMethod::ProductMax);
        assert!(report.interval.contains_f64(2.0));
        assert!(report.interval.width() <= 1e-9);
    }

    #[test]
    fn dynamical_degree_power_law_on_curated_systems() {
        for f in [squaring(), fibonacci()] {
            let base = dynamical_degree(&f, 1e-12).unwrap().interval;
            for n in 2..=4u32 {
                let fn_ = crate::maps::compose_power(&f, n).unwrap();
                let direct = dynamical_degree(&fn_, 1e-9).unwrap().interval;
                assert!(direct.intersects(&base.pow(n)), "n = {n}");
            }
        }
    }

    #[test]
    fn alpha_of_squaring_orbit() {
        let trace = iterate_orbit(&squaring(), &proj(&[2, 1]), 8, u64::MAX).unwrap();
        let est = arithmetic_degree(&trace, 1e-3, 3).unwrap();
        assert!(est.converged);
        assert!((est.point_value.unwrap() - 2.0).abs() < 1e-9);
        // Ratios are exactly 2 from the start.
        for r in &est.ratio_sequence[1..] {
            assert!((r - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn alpha_of_identity_orbit() {
        let id = serde_json::from_str::<SystemDescriptor>(r#"{"kind":"monomial","A":[[1,0],[0,1]]}"#)
            .unwrap()
            .build()
            .unwrap();
        let trace = iterate_orbit(&id, &torus(&[2, 3]), 8, u64::MAX).unwrap();
        let est = arithmetic_degree(&trace, 1e-3, 5).unwrap();
        assert!(est.converged);
        assert!((est.point_value.unwrap() - 1.0).abs() < 1e-12);
        // On a height-zero point the guarded roots are exactly 1.
        let unit = iterate_orbit(&id, &torus(&[1, -1]), 8, u64::MAX).unwrap();
        let est_unit = arithmetic_degree(&unit, 1e-3, 5).unwrap();
        assert!(est_unit.root_sequence.iter().all(|&r| r == 1.0));
        assert_eq!(est_unit.point_value, Some(1.0));
    }

    #[test]
    fn alpha_of_fibonacci_orbit_matches_closed_form() {
        // Closed form: the n-th point is (2^F(n+1) 3^F(n), 2^F(n) 3^F(n-1)),
        // so with g_n = F_(n+1) ln 2 + F_n ln 3 the height is g_n + g_(n-1).
        let trace = iterate_orbit(&fibonacci(), &torus(&[2, 3]), 25, 10_000_000).unwrap();
        assert!(trace.len() >= 26, "budget must allow 25 iterates");
        let mut fib = vec![0f64, 1.0];
        for i in 2..30 {
            let v = fib[i - 1] + fib[i - 2];
            fib.push(v);
        }
        let g = |n: usize| fib[n + 1] * 2f64.ln() + fib[n] * 3f64.ln();
        for (n, h) in trace.heights.iter().enumerate() {
            let oracle = if n == 0 {
                2f64.ln() + 3f64.ln()
            } else {
                g(n) + g(n - 1)
            };
            assert!(
                (h - oracle).abs() < 1e-6 * oracle.max(1.0),
                "height {n}: {h} vs {oracle}"
            );
        }
        let est = arithmetic_degree(&trace, 1e-3, 5).unwrap();
        assert!(est.converged);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((est.point_value.unwrap() - phi).abs() < 1e-3);
    }

    #[test]
    fn alpha_needs_enough_trace() {
        let trace = iterate_orbit(&squaring(), &proj(&[2, 1]), 3, u64::MAX).unwrap();
        assert!(matches!(
            arithmetic_degree(&trace, 1e-3, 5),
            Err(Error::InsufficientTrace { .. })
        ));
    }

    #[test]
    fn iterate_law_for_alpha() {
        let f = squaring();
        let f2 = crate::maps::compose_power(&f, 2).unwrap();
        let t1 = iterate_orbit(&f, &proj(&[2, 1]), 10, u64::MAX).unwrap();
        let t2 = iterate_orbit(&f2, &proj(&[2, 1]), 5, u64::MAX).unwrap();
        let a1 = arithmetic_degree(&t1, 1e-3, 3).unwrap().point_value.unwrap();
        let a2 = arithmetic_degree(&t2, 1e-3, 3).unwrap().point_value.unwrap();
        assert!((a2 - a1 * a1).abs() < 2e-3);
    }

    #[test]
    fn eigenvalue_match_examples() {
        let alpha = AlphaEstimate {
            root_sequence: vec![],
            ratio_sequence: vec![],
            point_value: Some(2.0003),
            converged: true,
            window: 5,
        };
        let m = eigenvalue_match(&alpha, &[1.0, 2.0], 1e-3).unwrap();
        assert_eq!(m.matched_modulus, 2.0);
        assert!((m.gap - 3e-4).abs() < 1e-12);
        assert!(!m.violation);

        let alpha1 = AlphaEstimate {
            point_value: Some(1.0),
            ..alpha.clone()
        };
        let phi = 1.618_033_988_749_895;
        let m1 = eigenvalue_match(&alpha1, &[1.0, phi], 1e-3).unwrap();
        assert_eq!(m1.matched_modulus, 1.0);
        assert_eq!(m1.gap, 0.0);

        let alpha2 = AlphaEstimate {
            point_value: Some(1.618),
            ..alpha
        };
        let m2 = eigenvalue_match(&alpha2, &[0.618_033_988_749_895, phi], 1e-3).unwrap();
        assert!((m2.matched_modulus - phi).abs() < 1e-12);
    }

    #[test]
    fn alpha_below_delta_on_samples() {
        let cases: Vec<(SelfMap, State)> = vec![
            (squaring(), proj(&[2, 1])),
            (fibonacci(), torus(&[2, 3])),
        ];
        for (f, x) in cases {
            let trace = iterate_orbit(&f, &x, 25, 10_000_000).unwrap();
            let est = arithmetic_degree(&trace, 1e-3, 5).unwrap();
            let delta = dynamical_degree(&f, 1e-9).unwrap();
            assert!(est.point_value.unwrap() <= delta.interval.hi_f64() + 1e-3);
        }
    }

    #[test]
    fn density_heuristic_on_fibonacci_orbit() {
        let m = MonomialMap::new(vec![vec![1, 1], vec![1, 0]]).unwrap();
        let x = TorusPoint::new(vec![
            Rat::from_integer(BigInt::from(2)),
            Rat::from_integer(BigInt::from(3)),
        ])
        .unwrap();
        let verdict = monomial_density_heuristic(&m, &x, 16, &FactorBudget::default());
        assert_eq!(verdict, DensityEvidence::DenseHeuristic);
    }

    #[test]
    fn density_heuristic_rejects_torsion_point() {
        let m = MonomialMap::new(vec![vec![1, 1], vec![1, 0]]).unwrap();
        let x = TorusPoint::new(vec![
            Rat::from_integer(BigInt::from(1)),
            Rat::from_integer(BigInt::from(-1)),
        ])
        .unwrap();
        assert!(matches!(
            monomial_density_heuristic(&m, &x, 16, &FactorBudget::default()),
            DensityEvidence::Inconclusive { .. }
        ));
    }

    #[test]
    fn density_heuristic_rejects_diagonal_locus() {
        // On (x, x) the character (1, -1) is constantly 1 for the doubling
        // map diag(2, 2).
        let m = MonomialMap::new(vec![vec![2, 0], vec![0, 2]]).unwrap();
        let x = TorusPoint::new(vec![
            Rat::from_integer(BigInt::from(3)),
            Rat::from_integer(BigInt::from(3)),
        ])
        .unwrap();
        match monomial_density_heuristic(&m, &x, 16, &FactorBudget::default()) {
            DensityEvidence::Inconclusive { reason } => {
                assert!(reason.contains("constant") || reason.contains("periodic"));
            }
            other => panic!("expected inconclusive, got {other:?}"),
        }
    }

    #[test]
    fn alpha_matches_spectrum_modulus() {
        let f = fibonacci();
        let trace = iterate_orbit(&f, &torus(&[2, 3]), 25, 10_000_000).unwrap();
        let est = arithmetic_degree(&trace, 1e-3, 5).unwrap();
        let spectrum = pullback_spectrum(&f).unwrap();
        let m = eigenvalue_match(&est, &spectrum, 1e-3).unwrap();
        assert!(!m.violation);
        assert!((m.matched_modulus - 1.618_033_988_749_895).abs() < 1e-6);
    }

    #[test]
    fn toric_diagonal_degree_is_exact_three() {
        let sys = SystemDescriptor::Toric {
            fan: crate::toric::FanData {
                rank: 2,
                rays: vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]],
                cones: vec![vec![0, 2], vec![2, 1], vec![1, 3], vec![3, 0]],
            },
            phi: vec![vec![2, 0], vec![0, 3]],
        }
        .build()
        .unwrap();
        let report = dynamical_degree(&sys, 1e-9).unwrap();
        assert_eq!(report.method, DegreeMethod::ToricPullback);
        assert!(report.interval.is_exact());
        assert_eq!(report.interval.lo, Rat::from_integer(BigInt::from(3)));
    }

    #[test]
    fn evaluate_and_compose_share_semantics() {
        // Sanity anchor used by later modules: f^2 evaluated once equals two
        // evaluations of f.
        let f = fibonacci();
        let f2 = crate::maps::compose_power(&f, 2).unwrap();
        let x = torus(&[2, 3]);
        let once = evaluate(&f2, &x).unwrap();
        let twice = evaluate(&f, &evaluate(&f, &x).unwrap()).unwrap();
        assert_eq!(once, twice);
    }
}
