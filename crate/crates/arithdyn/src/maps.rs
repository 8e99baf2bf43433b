//! The self-map families and their exact evaluation and iteration.
//!
//! Four map kinds act on four state kinds: homogeneous-form morphisms on
//! projective points, monomial maps on torus points, invertible linear maps
//! on affine points, and products acting componentwise. Toric endomorphisms
//! (lattice maps compatible with a fan) live in [`crate::toric`] and plug in
//! as a fifth variant.

use num_bigint::BigInt;
use num_traits::{One, Pow, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::exact::{
    ln_abs, parse_rat, rat_bits, rat_to_string, scalar_height, torus_height, weil_height,
    ProjPoint, Rat, TorusPoint, ENUMERATION_CAP,
};
use crate::linalg::{det_q, mat_pow_i, mat_vec_q, QMat};
use crate::toric::{FanData, ToricSystem};

/// Cap on the total degree a symbolic composition may reach.
pub const DEGREE_CAP: u128 = 4096;

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// A point in the state space of some self-map variant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum State {
    Projective(ProjPoint),
    Torus(TorusPoint),
    Affine(Vec<Rat>),
    Product(Vec<State>),
}

impl State {
    pub fn bit_size(&self) -> u64 {
        match self {
            State::Projective(p) => p.bit_size(),
            State::Torus(t) => t.bit_size(),
            State::Affine(v) => v.iter().map(rat_bits).sum(),
            State::Product(parts) => parts.iter().map(State::bit_size).sum(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            State::Projective(p) => serde_json::to_value(p).expect("point serializes"),
            State::Torus(t) => serde_json::to_value(t).expect("point serializes"),
            State::Affine(v) => {
                serde_json::Value::Array(v.iter().map(|x| rat_to_string(x).into()).collect())
            }
            State::Product(parts) => {
                serde_json::Value::Array(parts.iter().map(State::to_json).collect())
            }
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Projective(p) => write!(f, "{p}"),
            State::Torus(t) => write!(f, "{t}"),
            State::Affine(v) => {
                write!(f, "(")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", rat_to_string(x))?;
                }
                write!(f, ")")
            }
            State::Product(parts) => {
                write!(f, "(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Sparse homogeneous forms
// ---------------------------------------------------------------------------

/// A sparse polynomial: exponent vector -> rational coefficient.
pub type SparsePoly = BTreeMap<Vec<u32>, Rat>;

fn poly_insert(p: &mut SparsePoly, exps: Vec<u32>, coeff: Rat) {
    if coeff.is_zero() {
        return;
    }
    let entry = p.entry(exps).or_insert_with(Rat::zero);
    *entry = &*entry + coeff;
    // BTreeMap keeps keys; drop cancelled terms lazily on use.
}

fn poly_cleanup(p: &mut SparsePoly) {
    p.retain(|_, c| !c.is_zero());
}

fn poly_mul(a: &SparsePoly, b: &SparsePoly) -> SparsePoly {
    let mut out = SparsePoly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let exps: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            poly_insert(&mut out, exps, ca * cb);
        }
    }
    poly_cleanup(&mut out);
    out
}

fn poly_pow(a: &SparsePoly, e: u32, nvars: usize) -> SparsePoly {
    let mut out = SparsePoly::new();
    out.insert(vec![0; nvars], Rat::one());
    for _ in 0..e {
        out = poly_mul(&out, a);
    }
    out
}

/// A self-morphism of projective N-space given by N+1 homogeneous forms of a
/// common degree with rational coefficients.
#[derive(Clone, Debug)]
pub struct ProjectiveMorphism {
    dim: usize,
    degree: u32,
    polys: Vec<SparsePoly>,
    /// Integer-cleared coefficients (all forms scaled by one common
    /// denominator), used for exact evaluation.
    cleared: Vec<Vec<(BigInt, Vec<u32>)>>,
    /// `ln(max #monomials * max |cleared coefficient|)`: the triangle
    /// inequality gives `h(f(x)) <= degree * h(x) + growth_constant`.
    growth_constant: f64,
}

impl ProjectiveMorphism {
    pub fn new(dim: usize, degree: u32, polys: Vec<SparsePoly>) -> Result<ProjectiveMorphism> {
        if degree == 0 {
            return Err(Error::Invalid("morphism degree must be at least 1".into()));
        }
        if polys.len() != dim + 1 {
            return Err(Error::Invalid(format!(
                "expected {} coordinate forms, got {}",
                dim + 1,
                polys.len()
            )));
        }
        let mut cleaned = Vec::with_capacity(polys.len());
        for p in polys {
            let mut q = p;
            poly_cleanup(&mut q);
            for exps in q.keys() {
                if exps.len() != dim + 1 {
                    return Err(Error::Invalid(format!(
                        "exponent vector {exps:?} does not have {} entries",
                        dim + 1
                    )));
                }
                let total: u32 = exps.iter().sum();
                if total != degree {
                    return Err(Error::Invalid(format!(
                        "monomial {exps:?} is not homogeneous of degree {degree}"
                    )));
                }
            }
            cleaned.push(q);
        }
        if cleaned.iter().all(|p| p.is_empty()) {
            return Err(Error::Invalid("all coordinate forms are zero".into()));
        }
        // Clear denominators once, shared across all forms.
        let mut lcm = BigInt::one();
        for p in &cleaned {
            for c in p.values() {
                lcm = num_integer::Integer::lcm(&lcm, c.denom());
            }
        }
        let cleared: Vec<Vec<(BigInt, Vec<u32>)>> = cleaned
            .iter()
            .map(|p| {
                p.iter()
                    .map(|(e, c)| ((c * &lcm).to_integer(), e.clone()))
                    .collect()
            })
            .collect();
        let max_terms = cleared.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let max_coeff = cleared
            .iter()
            .flat_map(|p| p.iter().map(|(c, _)| c.abs()))
            .max()
            .unwrap_or_else(BigInt::one);
        let growth_constant = (max_terms as f64).ln() + ln_abs(&max_coeff.max(BigInt::one()));
        Ok(ProjectiveMorphism {
            dim,
            degree,
            polys: cleaned,
            cleared,
            growth_constant,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    pub fn polys(&self) -> &[SparsePoly] {
        &self.polys
    }

    pub fn apply(&self, x: &ProjPoint) -> Result<ProjPoint> {
        if x.dimension() != self.dim {
            return Err(Error::DomainViolation(format!(
                "point lives in P^{}, map acts on P^{}",
                x.dimension(),
                self.dim
            )));
        }
        let coords = x.coords();
        let values: Vec<BigInt> = self
            .cleared
            .iter()
            .map(|poly| {
                let mut acc = BigInt::zero();
                for (c, exps) in poly {
                    let mut term = c.clone();
                    for (xi, &e) in coords.iter().zip(exps) {
                        for _ in 0..e {
                            term = &term * xi;
                        }
                    }
                    acc += term;
                }
                acc
            })
            .collect();
        ProjPoint::from_integers(values).map_err(|e| match e {
            Error::AllZero => Error::DegenerateImage(x.to_string()),
            other => other,
        })
    }

    /// Symbolic composition `self(other(x))`.
    fn compose(&self, other: &ProjectiveMorphism, cap: u128) -> Result<ProjectiveMorphism> {
        let new_degree = self.degree as u128 * other.degree as u128;
        if new_degree > cap {
            return Err(Error::DegreeOverflow {
                got: new_degree,
                cap,
            });
        }
        let nvars = self.dim + 1;
        let polys = self
            .polys
            .iter()
            .map(|p| {
                let mut out = SparsePoly::new();
                for (exps, coeff) in p {
                    let mut term = SparsePoly::new();
                    term.insert(vec![0; nvars], coeff.clone());
                    for (j, &e) in exps.iter().enumerate() {
                        if e > 0 {
                            let factor = poly_pow(&other.polys[j], e, nvars);
                            term = poly_mul(&term, &factor);
                        }
                    }
                    for (e, c) in term {
                        poly_insert(&mut out, e, c);
                    }
                }
                poly_cleanup(&mut out);
                out
            })
            .collect();
        ProjectiveMorphism::new(self.dim, (new_degree) as u32, polys)
    }
}

/// A group endomorphism of the split torus: `x -> (prod_j x_j^(A_ij))_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialMap {
    a: Vec<Vec<i64>>,
}

impl MonomialMap {
    pub fn new(a: Vec<Vec<i64>>) -> Result<MonomialMap> {
        let n = a.len();
        if n == 0 || a.iter().any(|row| row.len() != n) {
            return Err(Error::Invalid("exponent matrix must be square".into()));
        }
        let q: QMat = a
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&x| Rat::from_integer(BigInt::from(x)))
                    .collect()
            })
            .collect();
        if det_q(&q).is_zero() {
            return Err(Error::Invalid("exponent matrix is singular".into()));
        }
        Ok(MonomialMap { a })
    }

    pub fn rank(&self) -> usize {
        self.a.len()
    }

    pub fn matrix(&self) -> &[Vec<i64>] {
        &self.a
    }

    pub fn apply(&self, x: &TorusPoint) -> Result<TorusPoint> {
        if x.rank() != self.rank() {
            return Err(Error::DomainViolation(format!(
                "torus point has rank {}, map has rank {}",
                x.rank(),
                self.rank()
            )));
        }
        let coords = self
            .a
            .iter()
            .map(|row| {
                let mut value = Rat::one();
                for (xj, &e) in x.coords().iter().zip(row) {
                    if e != 0 {
                        value *= Pow::pow(xj, e as i32);
                    }
                }
                value
            })
            .collect();
        TorusPoint::new(coords)
    }

    pub fn power(&self, n: u32) -> MonomialMap {
        let big: Vec<Vec<BigInt>> = self
            .a
            .iter()
            .map(|row| row.iter().map(|&x| BigInt::from(x)).collect())
            .collect();
        let pow = mat_pow_i(&big, n);
        let a = pow
            .iter()
            .map(|row| {
                row.iter()
                    .map(|x| {
                        x.try_into()
                            .expect("iterated exponent matrix exceeds i64 range")
                    })
                    .collect()
            })
            .collect();
        MonomialMap { a }
    }
}

/// An invertible linear self-map of affine n-space, the shape of a group
/// endomorphism of the additive (unipotent) factor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearUnipotentMap {
    l: QMat,
}

impl LinearUnipotentMap {
    pub fn new(l: QMat) -> Result<LinearUnipotentMap> {
        let n = l.len();
        if n == 0 || l.iter().any(|row| row.len() != n) {
            return Err(Error::Invalid("matrix must be square".into()));
        }
        if det_q(&l).is_zero() {
            return Err(Error::Invalid("matrix is singular".into()));
        }
        Ok(LinearUnipotentMap { l })
    }

    pub fn rank(&self) -> usize {
        self.l.len()
    }

    pub fn matrix(&self) -> &QMat {
        &self.l
    }

    pub fn apply(&self, x: &[Rat]) -> Result<Vec<Rat>> {
        if x.len() != self.rank() {
            return Err(Error::DomainViolation(format!(
                "affine point has {} coordinates, map has rank {}",
                x.len(),
                self.rank()
            )));
        }
        Ok(mat_vec_q(&self.l, x))
    }

    pub fn power(&self, n: u32) -> LinearUnipotentMap {
        let mut out = crate::linalg::identity_q(self.rank());
        let mut base = self.l.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                out = crate::linalg::mat_mul_q(&out, &base);
            }
            n >>= 1;
            if n > 0 {
                base = crate::linalg::mat_mul_q(&base, &base);
            }
        }
        LinearUnipotentMap { l: out }
    }
}

/// A product of independent self-maps acting componentwise.
#[derive(Clone, Debug)]
pub struct ProductMap {
    pub components: Vec<SelfMap>,
}

// ---------------------------------------------------------------------------
// SelfMap
// ---------------------------------------------------------------------------

/// Any of the supported dynamical systems.
#[derive(Clone, Debug)]
pub enum SelfMap {
    Projective(ProjectiveMorphism),
    Monomial(MonomialMap),
    Linear(LinearUnipotentMap),
    Product(ProductMap),
    Toric(Box<ToricSystem>),
}

impl SelfMap {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SelfMap::Projective(_) => "projective",
            SelfMap::Monomial(_) => "monomial",
            SelfMap::Linear(_) => "linear",
            SelfMap::Product(_) => "product",
            SelfMap::Toric(_) => "toric",
        }
    }
}

/// The height attached to each state kind: the standard height on
/// projective space, the product-of-lines height on the torus, the height of
/// the linear embedding into projective space for affine points, and the sum
/// over factors for products. Toric systems use the ample class cut out by
/// the sum of the extremal nef classes.
pub fn state_height(f: &SelfMap, x: &State) -> Result<f64> {
    match (f, x) {
        (SelfMap::Projective(_), State::Projective(p)) => Ok(weil_height(p)),
        (SelfMap::Monomial(_), State::Torus(t)) => Ok(torus_height(t)),
        (SelfMap::Linear(_), State::Affine(v)) => {
            let mut coords = vec![Rat::one()];
            coords.extend(v.iter().cloned());
            Ok(weil_height(&ProjPoint::normalize(&coords)?))
        }
        (SelfMap::Product(pm), State::Product(parts)) => {
            if pm.components.len() != parts.len() {
                return Err(Error::DomainViolation(
                    "product state arity does not match the map".into(),
                ));
            }
            let mut total = 0.0;
            for (g, y) in pm.components.iter().zip(parts) {
                total += state_height(g, y)?;
            }
            Ok(total)
        }
        (SelfMap::Toric(sys), State::Torus(t)) => sys.ample_height(t),
        _ => Err(Error::DomainViolation(format!(
            "state kind does not match a {} map",
            f.kind_name()
        ))),
    }
}

/// Evaluate `f` at `x`, returning the canonical representative of the image.
pub fn evaluate(f: &SelfMap, x: &State) -> Result<State> {
    match (f, x) {
        (SelfMap::Projective(m), State::Projective(p)) => {
            let image = m.apply(p)?;
            debug_assert!(
                weil_height(&image) <= m.degree() as f64 * weil_height(p) + m.growth_constant() + 1e-9,
                "height growth bound violated"
            );
            Ok(State::Projective(image))
        }
        (SelfMap::Monomial(m), State::Torus(t)) => {
            let image = m.apply(t)?;
            debug_assert!(monomial_growth_ok(m, t, &image), "height growth bound violated");
            Ok(State::Torus(image))
        }
        (SelfMap::Linear(m), State::Affine(v)) => Ok(State::Affine(m.apply(v)?)),
        (SelfMap::Product(pm), State::Product(parts)) => {
            if pm.components.len() != parts.len() {
                return Err(Error::DomainViolation(
                    "product state arity does not match the map".into(),
                ));
            }
            let mut out = Vec::with_capacity(parts.len());
            for (g, y) in pm.components.iter().zip(parts) {
                out.push(evaluate(g, y)?);
            }
            Ok(State::Product(out))
        }
        (SelfMap::Toric(sys), State::Torus(t)) => Ok(State::Torus(sys.monomial_action().apply(t)?)),
        _ => Err(Error::DomainViolation(format!(
            "state kind does not match a {} map",
            f.kind_name()
        ))),
    }
}

fn monomial_growth_ok(m: &MonomialMap, x: &TorusPoint, image: &TorusPoint) -> bool {
    let factor_heights: Vec<f64> = x.coords().iter().map(scalar_height).collect();
    let bound: f64 = m
        .matrix()
        .iter()
        .map(|row| {
            row.iter()
                .zip(&factor_heights)
                .map(|(&a, h)| a.unsigned_abs() as f64 * h)
                .sum::<f64>()
        })
        .sum();
    torus_height(image) <= bound + 1e-9
}

/// The exact orbit of `x` under `f` together with heights and bit-cost
/// accounting.
#[derive(Clone, Debug)]
pub struct OrbitTrace {
    pub states: Vec<State>,
    pub heights: Vec<f64>,
    pub bit_sizes: Vec<u64>,
    /// Set when the bit budget stopped the orbit before `max_iters`.
    pub truncated: bool,
}

impl OrbitTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Iterate `f` from `x`, storing exact states and heights, stopping after
/// `max_iters` steps or once the total stored bits would exceed
/// `bit_budget`.
pub fn iterate_orbit(
    f: &SelfMap,
    x: &State,
    max_iters: usize,
    bit_budget: u64,
) -> Result<OrbitTrace> {
    if max_iters == 0 {
        return Err(Error::Invalid("max_iters must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(max_iters + 1);
    let mut heights = Vec::with_capacity(max_iters + 1);
    let mut bit_sizes = Vec::with_capacity(max_iters + 1);
    let mut total_bits = x.bit_size();
    states.push(x.clone());
    heights.push(state_height(f, x)?);
    bit_sizes.push(x.bit_size());
    let mut truncated = false;
    for step in 0..max_iters {
        let next = evaluate(f, states.last().expect("nonempty"))
            .map_err(|e| e.at_iterate(step + 1))?;
        let bits = next.bit_size();
        if total_bits + bits > bit_budget {
            truncated = true;
            break;
        }
        total_bits += bits;
        heights.push(state_height(f, &next).map_err(|e| e.at_iterate(step + 1))?);
        bit_sizes.push(bits);
        states.push(next);
    }
    Ok(OrbitTrace {
        states,
        heights,
        bit_sizes,
        truncated,
    })
}

/// Build a representation of `f^n` of the same variant: matrix powers for
/// monomial/linear maps, symbolic substitution for projective morphisms,
/// componentwise for products.
pub fn compose_power(f: &SelfMap, n: u32) -> Result<SelfMap> {
    if n == 0 {
        return Err(Error::Invalid("compose_power needs n >= 1".into()));
    }
    match f {
        SelfMap::Projective(m) => {
            let mut out = m.clone();
            for _ in 1..n {
                out = m.compose(&out, DEGREE_CAP)?;
            }
            Ok(SelfMap::Projective(out))
        }
        SelfMap::Monomial(m) => Ok(SelfMap::Monomial(m.power(n))),
        SelfMap::Linear(m) => Ok(SelfMap::Linear(m.power(n))),
        SelfMap::Product(pm) => {
            let components = pm
                .components
                .iter()
                .map(|g| compose_power(g, n))
                .collect::<Result<Vec<_>>>()?;
            Ok(SelfMap::Product(ProductMap { components }))
        }
        SelfMap::Toric(sys) => Ok(SelfMap::Toric(Box::new(sys.power(n)?))),
    }
}

// ---------------------------------------------------------------------------
// Morphism certification
// ---------------------------------------------------------------------------

/// Outcome of the common-zero check for a projective morphism.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum MorphismCertificate {
    /// Exact: the resultant of the two binary forms is nonzero.
    Certified { resultant: String },
    /// Sampled evaluation found no common zero; not a proof.
    HeuristicPass { samples: usize },
    /// A common zero (or certificate of one) was found.
    Fail { witness: String },
}

/// Check the no-common-zero hypothesis. Exact resultant on the line; a
/// documented sampling heuristic in higher dimension.
pub fn check_morphism(m: &ProjectiveMorphism, seed: u64) -> MorphismCertificate {
    if m.dim() == 1 {
        let d = m.degree() as usize;
        let to_dense = |p: &SparsePoly| {
            let mut coeffs = vec![Rat::zero(); d + 1];
            for (exps, c) in p {
                coeffs[exps[1] as usize] = c.clone();
            }
            coeffs
        };
        let f = to_dense(&m.polys()[0]);
        let g = to_dense(&m.polys()[1]);
        let res = binary_resultant(&f, &g, d);
        if res.is_zero() {
            // Locate a rational witness if one exists on the sphere of small
            // points; otherwise report the vanishing resultant itself.
            let witness = crate::exact::enumerate_points(1, (20f64).ln(), ENUMERATION_CAP)
                .ok()
                .and_then(|stream| {
                    let mut stream = stream;
                    stream.find(|p| m.apply(p).is_err())
                })
                .map(|p| p.to_string())
                .unwrap_or_else(|| "resultant vanishes".into());
            MorphismCertificate::Fail { witness }
        } else {
            MorphismCertificate::Certified {
                resultant: rat_to_string(&res),
            }
        }
    } else {
        // Heuristic: all small points plus random rational points.
        let mut samples = 0;
        if let Ok(stream) = crate::exact::enumerate_points(m.dim(), (5f64).ln(), ENUMERATION_CAP) {
            for p in stream {
                samples += 1;
                if m.apply(&p).is_err() {
                    return MorphismCertificate::Fail {
                        witness: p.to_string(),
                    };
                }
            }
        }
        let mut rng = crate::seeded_rng(seed);
        for _ in 0..200 {
            let coords: Vec<Rat> = (0..=m.dim())
                .map(|_| Rat::from_integer(BigInt::from(rng.gen_range(-50i64..=50))))
                .collect();
            let Ok(p) = ProjPoint::normalize(&coords) else {
                continue;
            };
            samples += 1;
            if m.apply(&p).is_err() {
                return MorphismCertificate::Fail {
                    witness: p.to_string(),
                };
            }
        }
        MorphismCertificate::HeuristicPass { samples }
    }
}

/// Resultant of two binary forms of common degree `d` via the Sylvester
/// determinant. Coefficient `coeffs[k]` multiplies `x^(d-k) y^k`.
fn binary_resultant(f: &[Rat], g: &[Rat], d: usize) -> Rat {
    let size = 2 * d;
    let mut m = vec![vec![Rat::zero(); size]; size];
    for row in 0..d {
        for k in 0..=d {
            m[row][row + k] = f[k].clone();
        }
    }
    for row in 0..d {
        for k in 0..=d {
            m[d + row][row + k] = g[k].clone();
        }
    }
    det_q(&m)
}

// ---------------------------------------------------------------------------
// JSON descriptors
// ---------------------------------------------------------------------------

/// Wire format for a dynamical system.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemDescriptor {
    Projective {
        #[serde(rename = "N")]
        n: usize,
        degree: u32,
        /// One form per coordinate: a list of `[coefficient, exponents]`.
        polys: Vec<Vec<(String, Vec<u32>)>>,
    },
    Monomial {
        #[serde(rename = "A")]
        a: Vec<Vec<i64>>,
    },
    Linear {
        #[serde(rename = "L")]
        l: Vec<Vec<String>>,
    },
    Product {
        components: Vec<SystemDescriptor>,
    },
    Toric {
        fan: FanData,
        phi: Vec<Vec<i64>>,
    },
}

impl SystemDescriptor {
    pub fn build(&self) -> Result<SelfMap> {
        match self {
            SystemDescriptor::Projective { n, degree, polys } => {
                let parsed = polys
                    .iter()
                    .map(|terms| {
                        let mut p = SparsePoly::new();
                        for (coeff, exps) in terms {
                            poly_insert(&mut p, exps.clone(), parse_rat(coeff)?);
                        }
                        Ok(p)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SelfMap::Projective(ProjectiveMorphism::new(
                    *n, *degree, parsed,
                )?))
            }
            SystemDescriptor::Monomial { a } => Ok(SelfMap::Monomial(MonomialMap::new(a.clone())?)),
            SystemDescriptor::Linear { l } => {
                let rows = l
                    .iter()
                    .map(|row| row.iter().map(|s| parse_rat(s)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                Ok(SelfMap::Linear(LinearUnipotentMap::new(rows)?))
            }
            SystemDescriptor::Product { components } => {
                if components.is_empty() {
                    return Err(Error::Invalid("product needs at least one component".into()));
                }
                let built = components
                    .iter()
                    .map(SystemDescriptor::build)
                    .collect::<Result<Vec<_>>>()?;
                Ok(SelfMap::Product(ProductMap { components: built }))
            }
            SystemDescriptor::Toric { fan, phi } => Ok(SelfMap::Toric(Box::new(
                ToricSystem::from_data(fan, phi.clone())?,
            ))),
        }
    }

    /// Parse a state for the system this descriptor describes.
    pub fn parse_state(&self, value: &serde_json::Value) -> Result<State> {
        match self {
            SystemDescriptor::Projective { .. } => Ok(State::Projective(
                serde_json::from_value(value.clone())?,
            )),
            SystemDescriptor::Monomial { .. } | SystemDescriptor::Toric { .. } => {
                Ok(State::Torus(serde_json::from_value(value.clone())?))
            }
            SystemDescriptor::Linear { .. } => {
                let strs: Vec<String> = serde_json::from_value(value.clone())?;
                let coords = strs
                    .iter()
                    .map(|s| parse_rat(s))
                    .collect::<Result<Vec<_>>>()?;
                Ok(State::Affine(coords))
            }
            SystemDescriptor::Product { components } => {
                let parts = value
                    .as_array()
                    .ok_or_else(|| Error::Invalid("product state must be an array".into()))?;
                if parts.len() != components.len() {
                    return Err(Error::Invalid(format!(
                        "product state has {} parts, map has {}",
                        parts.len(),
                        components.len()
                    )));
                }
                let states = components
                    .iter()
                    .zip(parts)
                    .map(|(c, v)| c.parse_state(v))
                    .collect::<Result<Vec<_>>>()?;
                Ok(State::Product(states))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::parse_rat;

    fn rat(n: i64) -> Rat {
        Rat::from_integer(BigInt::from(n))
    }

    pub(crate) fn squaring_map() -> SelfMap {
        // (x^2 : y^2) on the line.
        let json = r#"{"kind":"projective","N":1,"degree":2,
                       "polys":[[["1",[2,0]]],[["1",[0,2]]]]}"#;
        let desc: SystemDescriptor = serde_json::from_str(json).unwrap();
        desc.build().unwrap()
    }

    fn fibonacci_map() -> SelfMap {
        let desc: SystemDescriptor =
            serde_json::from_str(r#"{"kind":"monomial","A":[[1,1],[1,0]]}"#).unwrap();
        desc.build().unwrap()
    }

    fn proj(coords: &[i64]) -> State {
        State::Projective(
            ProjPoint::from_integers(coords.iter().map(|&c| BigInt::from(c)).collect()).unwrap(),
        )
    }

    fn torus(coords: &[i64]) -> State {
        State::Torus(TorusPoint::new(coords.iter().map(|&c| rat(c)).collect()).unwrap())
    }

    #[test]
    fn monomial_evaluation() {
        let f = fibonacci_map();
        let image = evaluate(&f, &torus(&[2, 3])).unwrap();
        assert_eq!(image, torus(&[6, 2]));
    }

    #[test]
    fn projective_evaluation_renormalizes() {
        let f = squaring_map();
        assert_eq!(evaluate(&f, &proj(&[2, 1])).unwrap(), proj(&[4, 1]));
        // (2 : 2) is not canonical as input, but (6 : 3) -> (4 : 1) shows
        // renormalization after evaluation.
        assert_eq!(evaluate(&f, &proj(&[6, 3])).unwrap(), proj(&[4, 1]));
    }

    #[test]
    fn identity_map_fixes_points() {
        let desc: SystemDescriptor = serde_json::from_str(
            r#"{"kind":"projective","N":1,"degree":1,
                "polys":[[["1",[1,0]]],[["1",[0,1]]]]}"#,
        )
        .unwrap();
        let f = desc.build().unwrap();
        let x = proj(&[17, -5]);
        assert_eq!(evaluate(&f, &x).unwrap(), x);
    }

    #[test]
    fn orbit_heights_of_squaring_map() {
        let f = squaring_map();
        let trace = iterate_orbit(&f, &proj(&[2, 1]), 5, u64::MAX).unwrap();
        let ln2 = 2f64.ln();
        let expected = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        assert_eq!(trace.len(), 6);
        for (h, m) in trace.heights.iter().zip(expected) {
            assert!((h - m * ln2).abs() < 1e-9);
        }
        assert!(!trace.truncated);
    }

    #[test]
    fn orbit_points_of_fibonacci_map() {
        let f = fibonacci_map();
        let trace = iterate_orbit(&f, &torus(&[2, 3]), 3, u64::MAX).unwrap();
        assert_eq!(
            trace.states,
            vec![torus(&[2, 3]), torus(&[6, 2]), torus(&[12, 6]), torus(&[72, 12])]
        );
    }

    #[test]
    fn identity_orbit_is_constant() {
        let desc: SystemDescriptor =
            serde_json::from_str(r#"{"kind":"monomial","A":[[1,0],[0,1]]}"#).unwrap();
        let f = desc.build().unwrap();
        let trace = iterate_orbit(&f, &torus(&[1, -1]), 4, u64::MAX).unwrap();
        assert!(trace.heights.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn bit_budget_truncates() {
        let f = squaring_map();
        let trace = iterate_orbit(&f, &proj(&[2, 1]), 60, 200).unwrap();
        assert!(trace.truncated);
        assert!(trace.len() < 61);
        let total: u64 = trace.bit_sizes.iter().sum();
        assert!(total <= 200);
    }

    #[test]
    fn compose_power_monomial_squares_matrix() {
        let f = fibonacci_map();
        let f2 = compose_power(&f, 2).unwrap();
        match f2 {
            SelfMap::Monomial(m) => assert_eq!(m.matrix(), &[vec![2, 1], vec![1, 1]]),
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn compose_power_projective_is_symbolic() {
        let f = squaring_map();
        let f2 = compose_power(&f, 2).unwrap();
        match &f2 {
            SelfMap::Projective(m) => {
                assert_eq!(m.degree(), 4);
                assert_eq!(m.polys()[0], {
                    let mut p = SparsePoly::new();
                    p.insert(vec![4, 0], Rat::one());
                    p
                });
            }
            _ => panic!("wrong variant"),
        }
        assert_eq!(evaluate(&f2, &proj(&[2, 1])).unwrap(), proj(&[16, 1]));
    }

    #[test]
    fn compose_power_equals_repeated_evaluation() {
        let maps = [squaring_map(), fibonacci_map()];
        let points = [proj(&[3, 2]), torus(&[2, 5])];
        for (f, x) in maps.iter().zip(&points) {
            for n in 1..=5u32 {
                let fe = compose_power(f, n).unwrap();
                let once = evaluate(&fe, x).unwrap();
                let mut iterated = x.clone();
                for _ in 0..n {
                    iterated = evaluate(f, &iterated).unwrap();
                }
                assert_eq!(once, iterated, "n = {n}");
            }
        }
    }

    #[test]
    fn degree_overflow_is_reported() {
        let f = squaring_map();
        // 2^13 = 8192 > 4096.
        assert!(matches!(
            compose_power(&f, 13),
            Err(Error::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn check_morphism_certifies_squaring() {
        let SelfMap::Projective(m) = squaring_map() else {
            unreachable!()
        };
        assert_eq!(
            check_morphism(&m, 0),
            MorphismCertificate::Certified {
                resultant: "1".into()
            }
        );
    }

    #[test]
    fn check_morphism_certifies_identity() {
        let desc: SystemDescriptor = serde_json::from_str(
            r#"{"kind":"projective","N":1,"degree":1,
                "polys":[[["1",[1,0]]],[["1",[0,1]]]]}"#,
        )
        .unwrap();
        let SelfMap::Projective(m) = desc.build().unwrap() else {
            unreachable!()
        };
        assert!(matches!(
            check_morphism(&m, 0),
            MorphismCertificate::Certified { .. }
        ));
    }

    #[test]
    fn check_morphism_fails_on_common_zero() {
        // (xy : y^2) drops the point (1 : 0).
        let desc: SystemDescriptor = serde_json::from_str(
            r#"{"kind":"projective","N":1,"degree":2,
                "polys":[[["1",[1,1]]],[["1",[0,2]]]]}"#,
        )
        .unwrap();
        let SelfMap::Projective(m) = desc.build().unwrap() else {
            unreachable!()
        };
        match check_morphism(&m, 0) {
            MorphismCertificate::Fail { witness } => assert_eq!(witness, "(1 : 0)"),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn product_map_acts_componentwise() {
        let f = SelfMap::Product(ProductMap {
            components: vec![squaring_map(), fibonacci_map()],
        });
        let x = State::Product(vec![proj(&[2, 1]), torus(&[2, 3])]);
        let y = evaluate(&f, &x).unwrap();
        assert_eq!(y, State::Product(vec![proj(&[4, 1]), torus(&[6, 2])]));
        let h = state_height(&f, &x).unwrap();
        assert!((h - (2f64.ln() + 2f64.ln() + 3f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn linear_map_heights_grow_slowly() {
        let desc: SystemDescriptor = serde_json::from_str(
            r#"{"kind":"linear","L":[["1","1"],["0","1"]]}"#,
        )
        .unwrap();
        let f = desc.build().unwrap();
        let x = State::Affine(vec![parse_rat("1").unwrap(), parse_rat("2").unwrap()]);
        let trace = iterate_orbit(&f, &x, 60, u64::MAX).unwrap();
        // Shear orbit: (1 + 2n, 2); height ~ ln n, so the root estimate
        // drops below 1.05 well before n = 60.
        let h60 = trace.heights[60];
        assert!(h60.max(1.0).powf(1.0 / 60.0) < 1.05);
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let f = fibonacci_map();
        assert!(matches!(
            evaluate(&f, &proj(&[1, 2])),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn descriptor_round_trip() {
        let json = r#"{"kind":"monomial","A":[[1,1],[1,0]]}"#;
        let desc: SystemDescriptor = serde_json::from_str(json).unwrap();
        let back = serde_json::to_string(&desc).unwrap();
        let desc2: SystemDescriptor = serde_json::from_str(&back).unwrap();
        assert!(matches!(desc2, SystemDescriptor::Monomial { .. }));
    }
}
