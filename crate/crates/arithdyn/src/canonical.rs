//! Canonical heights for eigendivisors by telescoping, ample canonical
//! heights, and the bounded-height search for their vanishing locus.
//!
//! Error bars are heuristic: the largest observed one-step discrepancy
//! `|h(f x) - lambda h(x)|` along the orbit, folded through the telescoping
//! tail and doubled. They are labeled as such everywhere they appear.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{enumerate_points, weil_height, ProjPoint, Rat, ENUMERATION_CAP};
use crate::maps::{evaluate, state_height, ProjectiveMorphism, SelfMap, SparsePoly, State};

/// Safety factor on the telescoped discrepancy bound.
const ERROR_BAR_SAFETY: f64 = 2.0;

/// Iteration/бit budgets for a canonical-height computation.
#[derive(Clone, Copy, Debug)]
pub struct CanonicalBudget {
    pub max_iters: usize,
    pub bit_budget: u64,
}

impl Default for CanonicalBudget {
    fn default() -> Self {
        CanonicalBudget {
            max_iters: 40,
            bit_budget: 10_000_000,
        }
    }
}

/// Which concrete height evaluator an eigendivisor uses.
#[derive(Clone, Debug)]
enum HeightKind {
    /// The full ample height of the system (projective morphisms).
    FullAmple,
    /// The height of one factor of a product state.
    ProductFactor(usize),
    /// One toric fibration height.
    ToricFibration(usize),
}

/// A divisor class with `f* D ~ lambda D` together with its concrete height
/// evaluator on the system's states.
#[derive(Clone, Debug)]
pub struct EigenDivisorHeight {
    pub label: String,
    pub lambda: Rat,
    map: SelfMap,
    kind: HeightKind,
}

impl EigenDivisorHeight {
    pub fn lambda_f64(&self) -> f64 {
        self.lambda.to_f64().unwrap_or(f64::NAN)
    }

    pub fn map(&self) -> &SelfMap {
        &self.map
    }

    /// Evaluate the divisor height at a state.
    pub fn eval(&self, x: &State) -> Result<f64> {
        match (&self.kind, x) {
            (HeightKind::FullAmple, _) => state_height(&self.map, x),
            (HeightKind::ProductFactor(i), State::Product(parts)) => {
                let SelfMap::Product(pm) = &self.map else {
                    return Err(Error::Invalid("factor height on a non-product map".into()));
                };
                let part = parts
                    .get(*i)
                    .ok_or_else(|| Error::DomainViolation("missing product factor".into()))?;
                state_height(&pm.components[*i], part)
            }
            (HeightKind::ToricFibration(i), State::Torus(t)) => {
                let SelfMap::Toric(sys) = &self.map else {
                    return Err(Error::Invalid("fibration height on a non-toric map".into()));
                };
                sys.fibrations()[*i].height(t)
            }
            _ => Err(Error::DomainViolation(
                "state kind does not match the divisor height".into(),
            )),
        }
    }
}

/// A telescoped canonical-height value with its heuristic error bar.
#[derive(Clone, Debug, Serialize)]
pub struct CanonicalHeightEstimate {
    pub value: f64,
    /// `discrepancy_max * 2 / (lambda - 1) / lambda^n_used`.
    pub error_bar: f64,
    pub n_used: usize,
    pub discrepancy_max: f64,
    /// Always `"heuristic-bar"`: the bar comes from observed discrepancies,
    /// not a proved height inequality.
    pub rigor: &'static str,
    /// Set when the budget stopped the orbit before the bar met the target.
    pub budget_exhausted: bool,
}

/// Telescoped canonical height `lim h(f^n x) / lambda^n` for an eigendivisor
/// with `lambda > 1`. Iterates until the heuristic bar is at most `target`
/// or a budget is hit (then the best-so-far value is returned, flagged).
pub fn canonical_height(
    divisor: &EigenDivisorHeight,
    x: &State,
    target: f64,
    budget: &CanonicalBudget,
) -> Result<CanonicalHeightEstimate> {
    let lambda = divisor.lambda_f64();
    if !(lambda > 1.0) {
        return Err(Error::Invalid(format!(
            "canonical height needs lambda > 1, got {lambda}"
        )));
    }
    let mut state = x.clone();
    let mut h = divisor.eval(&state)?;
    let mut disc_max: f64 = 0.0;
    let mut lambda_pow = 1.0f64;
    let mut total_bits = state.bit_size();
    let mut n = 0usize;
    let mut budget_exhausted = false;
    loop {
        let bar = if n == 0 {
            f64::INFINITY
        } else {
            disc_max * ERROR_BAR_SAFETY / (lambda - 1.0) / lambda_pow
        };
        if n > 0 && bar <= target {
            return Ok(CanonicalHeightEstimate {
                value: h / lambda_pow,
                error_bar: bar,
                n_used: n,
                discrepancy_max: disc_max,
                rigor: "heuristic-bar",
                budget_exhausted: false,
            });
        }
        if n >= budget.max_iters {
            budget_exhausted = true;
            break;
        }
        let next = evaluate(&divisor.map, &state).map_err(|e| e.at_iterate(n + 1))?;
        total_bits += next.bit_size();
        if total_bits > budget.bit_budget {
            budget_exhausted = true;
            break;
        }
        let h_next = divisor.eval(&next)?;
        disc_max = disc_max.max((h_next - lambda * h).abs());
        state = next;
        h = h_next;
        lambda_pow *= lambda;
        n += 1;
    }
    let bar = if n == 0 {
        f64::INFINITY
    } else {
        disc_max * ERROR_BAR_SAFETY / (lambda - 1.0) / lambda_pow
    };
    Ok(CanonicalHeightEstimate {
        value: h / lambda_pow,
        error_bar: bar,
        n_used: n,
        discrepancy_max: disc_max,
        rigor: "heuristic-bar",
        budget_exhausted,
    })
}

/// Residuals of the functional equation `hhat(f x) = lambda hhat(x)` along
/// an orbit prefix, with the bound the bars allow.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionalEquationReport {
    pub max_residual: f64,
    /// Largest admissible residual: `2 (bar_k + bar_(k+1))` over the steps.
    pub bar_bound: f64,
    pub steps: usize,
}

/// Check the functional equation on the first `n_steps` orbit steps.
pub fn functional_equation_check(
    divisor: &EigenDivisorHeight,
    x: &State,
    n_steps: usize,
    target: f64,
    budget: &CanonicalBudget,
) -> Result<FunctionalEquationReport> {
    let lambda = divisor.lambda_f64();
    let mut state = x.clone();
    let mut estimates = Vec::with_capacity(n_steps + 2);
    for k in 0..=n_steps + 1 {
        estimates.push(canonical_height(divisor, &state, target, budget)?);
        if k <= n_steps {
            state = evaluate(&divisor.map, &state).map_err(|e| e.at_iterate(k + 1))?;
        }
    }
    let mut max_residual: f64 = 0.0;
    let mut bar_bound: f64 = 0.0;
    for k in 0..=n_steps {
        let residual = (estimates[k + 1].value - lambda * estimates[k].value).abs();
        max_residual = max_residual.max(residual);
        bar_bound = bar_bound
            .max(2.0 * (estimates[k].error_bar * lambda + estimates[k + 1].error_bar).max(1e-12));
    }
    Ok(FunctionalEquationReport {
        max_residual,
        bar_bound,
        steps: n_steps,
    })
}

// ---------------------------------------------------------------------------
// Eigendivisor structure of a system
// ---------------------------------------------------------------------------

/// The eigendivisor decomposition a system carries: divisors `D_i` with
/// `f* D_i ~ lambda_i D_i` whose sum is ample. For toric systems this is the
/// extremal-class data of a ray-fixing power of the map.
pub struct EigenStructure {
    pub divisors: Vec<EigenDivisorHeight>,
    /// The power of the original map the structure belongs to.
    pub iterate_order: u32,
    /// `delta = max lambda_i`, exact; the dynamical degree of the power.
    pub delta: Rat,
}

/// Extract the eigendivisor decomposition, or explain why there is none.
pub fn eigen_structure(f: &SelfMap) -> Result<EigenStructure> {
    match f {
        SelfMap::Projective(m) => {
            if m.degree() <= 1 {
                return Err(Error::MissingDecomposition(
                    "the map has dynamical degree 1".into(),
                ));
            }
            let lambda = Rat::from_integer(BigInt::from(m.degree()));
            Ok(EigenStructure {
                divisors: vec![EigenDivisorHeight {
                    label: "hyperplane".into(),
                    lambda: lambda.clone(),
                    map: f.clone(),
                    kind: HeightKind::FullAmple,
                }],
                iterate_order: 1,
                delta: lambda,
            })
        }
        SelfMap::Product(pm) => {
            let mut divisors = Vec::with_capacity(pm.components.len());
            let mut delta = Rat::one();
            for (i, g) in pm.components.iter().enumerate() {
                let SelfMap::Projective(mg) = g else {
                    return Err(Error::MissingDecomposition(
                        "product decomposition needs projective factors; \
                         model torus factors as a toric system"
                            .into(),
                    ));
                };
                let lambda = Rat::from_integer(BigInt::from(mg.degree()));
                if lambda > delta {
                    delta = lambda.clone();
                }
                divisors.push(EigenDivisorHeight {
                    label: format!("factor-{i} hyperplane"),
                    lambda,
                    map: f.clone(),
                    kind: HeightKind::ProductFactor(i),
                });
            }
            if delta <= Rat::one() {
                return Err(Error::MissingDecomposition(
                    "every factor has degree 1".into(),
                ));
            }
            Ok(EigenStructure {
                divisors,
                iterate_order: 1,
                delta,
            })
        }
        SelfMap::Toric(sys) => {
            let fixing = sys.ray_fixing()?;
            let (powered, order) = if fixing.order == 1 {
                (f.clone(), 1)
            } else {
                (
                    SelfMap::Toric(Box::new(sys.power(fixing.order)?)),
                    fixing.order,
                )
            };
            let mut delta = Rat::one();
            for lam in &fixing.multipliers {
                if lam > &delta {
                    delta = lam.clone();
                }
            }
            if delta <= Rat::one() {
                return Err(Error::MissingDecomposition(
                    "all extremal multipliers are 1".into(),
                ));
            }
            let divisors = fixing
                .multipliers
                .iter()
                .enumerate()
                .map(|(i, lam)| EigenDivisorHeight {
                    label: format!("extremal-class-{i}"),
                    lambda: lam.clone(),
                    map: powered.clone(),
                    kind: HeightKind::ToricFibration(i),
                })
                .collect();
            Ok(EigenStructure {
                divisors,
                iterate_order: order,
                delta,
            })
        }
        SelfMap::Monomial(_) => Err(Error::MissingDecomposition(
            "a bare monomial map carries no fan; wrap it as a toric system".into(),
        )),
        SelfMap::Linear(_) => Err(Error::MissingDecomposition(
            "the map has dynamical degree 1".into(),
        )),
    }
}

/// The ample canonical height at one point: the sum of the canonical
/// heights of the top-multiplier eigendivisors.
#[derive(Clone, Debug, Serialize)]
pub struct AmpleHeightReport {
    pub value: f64,
    pub error_bar: f64,
    /// Per-divisor contributions `(label, lambda, hhat, bar)`.
    pub contributions: Vec<(String, String, f64, f64)>,
    pub budget_exhausted: bool,
}

/// Sum the canonical heights of the eigendivisors with `lambda_i = delta`.
pub fn ample_canonical_height(
    f: &SelfMap,
    x: &State,
    target: f64,
    budget: &CanonicalBudget,
) -> Result<AmpleHeightReport> {
    let structure = eigen_structure(f)?;
    ample_height_of_structure(&structure, x, target, budget)
}

fn ample_height_of_structure(
    structure: &EigenStructure,
    x: &State,
    target: f64,
    budget: &CanonicalBudget,
) -> Result<AmpleHeightReport> {
    let mut value = 0.0;
    let mut bar = 0.0;
    let mut budget_exhausted = false;
    let mut contributions = Vec::new();
    for divisor in &structure.divisors {
        if divisor.lambda != structure.delta {
            continue;
        }
        let est = canonical_height(divisor, x, target, budget)?;
        value += est.value;
        bar += est.error_bar;
        budget_exhausted |= est.budget_exhausted;
        contributions.push((
            divisor.label.clone(),
            crate::exact::rat_to_string(&divisor.lambda),
            est.value,
            est.error_bar,
        ));
    }
    Ok(AmpleHeightReport {
        value,
        error_bar: bar,
        contributions,
        budget_exhausted,
    })
}

// ---------------------------------------------------------------------------
// The vanishing-locus search
// ---------------------------------------------------------------------------

/// One survivor of the search: a point whose eigendivisor canonical heights
/// all vanish to within the tolerance.
#[derive(Clone, Debug, Serialize)]
pub struct ZfSurvivor {
    pub point: serde_json::Value,
    pub hhat: f64,
    pub error_bar: f64,
    pub predicted_member: bool,
}

/// Search report: the survivors, the per-fibration finite zero sets they
/// were checked against, and the number of structure violations.
#[derive(Clone, Debug, Serialize)]
pub struct ZfReport {
    pub survivors: Vec<ZfSurvivor>,
    pub predicted_zero_sets: Vec<Vec<serde_json::Value>>,
    pub violations: usize,
    pub points_scanned: usize,
    pub height_bound: f64,
    pub tolerance: f64,
}

/// Enumerate the rational points of height at most `height_bound` and keep
/// those on which every eigendivisor canonical height (all `lambda_i > 1`)
/// vanishes to within `tol`: the bounded-orbit locus. Every survivor is
/// checked against the product of the per-fibration finite zero sets.
pub fn zf_search(
    f: &SelfMap,
    height_bound: f64,
    tol: f64,
    budget: &CanonicalBudget,
) -> Result<ZfReport> {
    let structure = eigen_structure(f)?;
    match f {
        SelfMap::Projective(m) => zf_projective(f, m, &structure, height_bound, tol, budget),
        SelfMap::Product(pm) => {
            let factors: Vec<&ProjectiveMorphism> = pm
                .components
                .iter()
                .map(|g| match g {
                    SelfMap::Projective(m) => Ok(m),
                    _ => Err(Error::MissingDecomposition(
                        "vanishing-locus search needs projective factors".into(),
                    )),
                })
                .collect::<Result<Vec<_>>>()?;
            if factors.iter().any(|m| m.dim() != 1) {
                return Err(Error::MissingDecomposition(
                    "product search is implemented for products of lines".into(),
                ));
            }
            zf_product_of_lines(f, &factors, &structure, height_bound, tol, budget)
        }
        SelfMap::Toric(sys) => {
            // A toric endomorphism of a product of lines whose (ray-fixing
            // power) matrix is componentwise extends to the product
            // compactification; reuse the product search there.
            let equivalent = toric_as_product_of_lines(sys, &structure)?;
            let factors: Vec<&ProjectiveMorphism> = equivalent
                .iter()
                .map(|m| Ok(m))
                .collect::<Result<Vec<_>>>()?;
            let product = SelfMap::Product(crate::maps::ProductMap {
                components: equivalent
                    .iter()
                    .map(|m| SelfMap::Projective(m.clone()))
                    .collect(),
            });
            let product_structure = eigen_structure(&product)?;
            zf_product_of_lines(
                &product,
                &factors,
                &product_structure,
                height_bound,
                tol,
                budget,
            )
        }
        _ => Err(Error::MissingDecomposition(
            "vanishing-locus search needs an eigendivisor decomposition".into(),
        )),
    }
}

fn zf_projective(
    f: &SelfMap,
    m: &ProjectiveMorphism,
    structure: &EigenStructure,
    height_bound: f64,
    tol: f64,
    budget: &CanonicalBudget,
) -> Result<ZfReport> {
    let divisor = &structure.divisors[0];
    let mut survivors = Vec::new();
    let mut zero_set = Vec::new();
    let mut scanned = 0usize;
    for p in enumerate_points(m.dim(), height_bound, ENUMERATION_CAP)? {
        scanned += 1;
        let state = State::Projective(p.clone());
        let est = canonical_height(divisor, &state, tol / 10.0, budget)?;
        if est.value < tol {
            zero_set.push(serde_json::to_value(&p)?);
            survivors.push(ZfSurvivor {
                point: state.to_json(),
                hhat: est.value,
                error_bar: est.error_bar,
                predicted_member: true,
            });
        }
    }
    let _ = f;
    Ok(ZfReport {
        survivors,
        predicted_zero_sets: vec![zero_set],
        violations: 0,
        points_scanned: scanned,
        height_bound,
        tolerance: tol,
    })
}

/// Per-factor table of canonical heights on the line.
struct FactorTable {
    points: Vec<ProjPoint>,
    heights: Vec<f64>,
    hhat: Vec<f64>,
    bars: Vec<f64>,
    lambda: Rat,
}

fn zf_product_of_lines(
    f: &SelfMap,
    factors: &[&ProjectiveMorphism],
    structure: &EigenStructure,
    height_bound: f64,
    tol: f64,
    budget: &CanonicalBudget,
) -> Result<ZfReport> {
    let mut tables = Vec::with_capacity(factors.len());
    for (i, m) in factors.iter().enumerate() {
        let factor_map = SelfMap::Projective((*m).clone());
        let factor_structure = eigen_structure(&factor_map);
        let lambda = structure.divisors[i].lambda.clone();
        let mut points = Vec::new();
        let mut heights = Vec::new();
        let mut hhat = Vec::new();
        let mut bars = Vec::new();
        for p in enumerate_points(1, height_bound, ENUMERATION_CAP)? {
            let h = weil_height(&p);
            let (v, b) = match &factor_structure {
                Ok(s) => {
                    let est =
                        canonical_height(&s.divisors[0], &State::Projective(p.clone()), tol / 10.0, budget)?;
                    (est.value, est.error_bar)
                }
                // Degree-1 factor: no canonical height; it contributes no
                // vanishing constraint.
                Err(_) => (0.0, 0.0),
            };
            points.push(p);
            heights.push(h);
            hhat.push(v);
            bars.push(b);
        }
        tables.push(FactorTable {
            points,
            heights,
            hhat,
            bars,
            lambda,
        });
    }
    let delta = &structure.delta;
    // Predicted per-fibration zero sets (factors with lambda > 1 only).
    let mut predicted_zero_sets = Vec::new();
    for t in &tables {
        if t.lambda > Rat::one() {
            let set: Vec<serde_json::Value> = t
                .points
                .iter()
                .zip(&t.hhat)
                .filter(|(_, &v)| v < tol)
                .map(|(p, _)| serde_json::to_value(p).expect("serializes"))
                .collect();
            predicted_zero_sets.push(set);
        }
    }
    // Walk the product of the factor tables with the total-height filter.
    let mut survivors = Vec::new();
    let mut scanned = 0usize;
    let mut violations = 0usize;
    let mut index = vec![0usize; tables.len()];
    'outer: loop {
        let mut total_height = 0.0;
        for (t, &i) in tables.iter().zip(&index) {
            total_height += t.heights[i];
        }
        if total_height <= height_bound + 1e-9 {
            scanned += 1;
            let all_vanish = tables
                .iter()
                .zip(&index)
                .all(|(t, &i)| t.lambda <= Rat::one() || t.hhat[i] < tol);
            if all_vanish {
                let mut hhat_top = 0.0;
                let mut bar_top = 0.0;
                for (t, &i) in tables.iter().zip(&index) {
                    if &t.lambda == delta {
                        hhat_top += t.hhat[i];
                        bar_top += t.bars[i];
                    }
                }
                // Structure check: every factor point with lambda > 1 must
                // lie in that factor's predicted zero set.
                let mut predicted = true;
                let mut set_idx = 0;
                for (t, &i) in tables.iter().zip(&index) {
                    if t.lambda > Rat::one() {
                        let as_json = serde_json::to_value(&t.points[i])?;
                        if !predicted_zero_sets[set_idx].contains(&as_json) {
                            predicted = false;
                        }
                        set_idx += 1;
                    }
                }
                if !predicted {
                    violations += 1;
                }
                let state = State::Product(
                    tables
                        .iter()
                        .zip(&index)
                        .map(|(t, &i)| State::Projective(t.points[i].clone()))
                        .collect(),
                );
                survivors.push(ZfSurvivor {
                    point: state.to_json(),
                    hhat: hhat_top,
                    error_bar: bar_top,
                    predicted_member: predicted,
                });
            }
        }
        // Odometer.
        let mut k = tables.len();
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            index[k] += 1;
            if index[k] < tables[k].points.len() {
                break;
            }
            index[k] = 0;
        }
    }
    let _ = f;
    Ok(ZfReport {
        survivors,
        predicted_zero_sets,
        violations,
        points_scanned: scanned,
        height_bound,
        tolerance: tol,
    })
}

/// Express a toric system over a product-of-lines fan with a componentwise
/// (ray-fixing power) lattice map as a product of power maps on lines.
fn toric_as_product_of_lines(
    sys: &crate::toric::ToricSystem,
    structure: &EigenStructure,
) -> Result<Vec<ProjectiveMorphism>> {
    let fan = sys.fan();
    let n = fan.rank();
    if fan.rays().len() != 2 * n {
        return Err(Error::MissingDecomposition(
            "vanishing-locus search over a toric system needs a product-of-lines fan".into(),
        ));
    }
    // Rays must be +-e_i.
    for i in 0..n {
        let mut plus = vec![BigInt::from(0); n];
        plus[i] = BigInt::one();
        let minus: Vec<BigInt> = plus.iter().map(|x| -x.clone()).collect();
        if !fan.rays().contains(&plus) || !fan.rays().contains(&minus) {
            return Err(Error::MissingDecomposition(
                "vanishing-locus search over a toric system needs a product-of-lines fan".into(),
            ));
        }
    }
    // The structure's map is the ray-fixing power; its matrix must be
    // componentwise (one nonzero entry per row, on the diagonal).
    let SelfMap::Toric(powered) = &structure.divisors[0].map else {
        return Err(Error::Invalid("toric structure carries a toric map".into()));
    };
    let phi = &powered.endo().phi;
    let mut factors = Vec::with_capacity(n);
    for i in 0..n {
        for (j, v) in phi[i].iter().enumerate() {
            if j != i && !v.is_zero() {
                return Err(Error::MissingDecomposition(
                    "the ray-fixing power is not componentwise; boundary extension is undefined"
                        .into(),
                ));
            }
        }
        let d: i64 = (&phi[i][i])
            .try_into()
            .map_err(|_| Error::Invalid("exponent overflows".into()))?;
        if d == 0 {
            return Err(Error::Invalid("degenerate factor exponent".into()));
        }
        factors.push(power_map_on_line(d)?);
    }
    Ok(factors)
}

/// The morphism of the line extending `z -> z^d` (for negative `d`, the
/// coordinates swap).
pub fn power_map_on_line(d: i64) -> Result<ProjectiveMorphism> {
    let e = d.unsigned_abs() as u32;
    let mut p0 = SparsePoly::new();
    let mut p1 = SparsePoly::new();
    if d > 0 {
        p0.insert(vec![e, 0], Rat::one());
        p1.insert(vec![0, e], Rat::one());
    } else {
        p0.insert(vec![0, e], Rat::one());
        p1.insert(vec![e, 0], Rat::one());
    }
    ProjectiveMorphism::new(1, e, vec![p0, p1])
}
