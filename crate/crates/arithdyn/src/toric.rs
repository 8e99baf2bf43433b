//! Complete simplicial fans and the combinatorial machinery around their
//! nef cones: class lattice, wall inequalities, extremal-ray enumeration by
//! double description, pullback matrices of fan endomorphisms, semi-ample
//! fibrations and the monomial maps they induce on the base.
//!
//! Support-function convention, fixed once: a divisor `D = sum a_rho D_rho`
//! has `psi_D(u_rho) = -a_rho`, and on each maximal cone `sigma` the
//! function is `<m_sigma, .>` with `R_sigma m_sigma = -a_sigma`.

use num_bigint::BigInt;
use num_traits::{One, Pow, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{weil_height, ProjPoint, Rat, TorusPoint};
use crate::linalg::{
    int_to_rat_mat, invert_q, mat_mul_q, mat_vec_i, mat_vec_q, primitive_from_rational,
    primitive_int, rank_q, row_lattice_basis, smith_normal_form, solve_q, IMat, QMat,
};
use crate::maps::MonomialMap;

/// Hard caps from the double-description design: exact pivoting stays fast
/// and predictable well inside these.
pub const MAX_RAYS: usize = 64;
pub const MAX_CLASS_RANK: usize = 12;

/// Wire format for a fan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FanData {
    pub rank: usize,
    pub rays: Vec<Vec<i64>>,
    pub cones: Vec<Vec<usize>>,
}

/// A complete simplicial fan.
#[derive(Clone, Debug)]
pub struct Fan {
    rank: usize,
    rays: Vec<Vec<BigInt>>,
    max_cones: Vec<Vec<usize>>,
}

impl Fan {
    pub fn from_data(data: &FanData) -> Result<Fan> {
        let rays = data
            .rays
            .iter()
            .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
            .collect();
        Fan::new(data.rank, rays, data.cones.clone())
    }

    pub fn new(rank: usize, rays: Vec<Vec<BigInt>>, max_cones: Vec<Vec<usize>>) -> Result<Fan> {
        if rank == 0 {
            return Err(Error::Invalid("fan rank must be positive".into()));
        }
        if rays.len() > MAX_RAYS {
            return Err(Error::Invalid(format!(
                "{} rays exceed the cap {MAX_RAYS}",
                rays.len()
            )));
        }
        for (i, r) in rays.iter().enumerate() {
            if r.len() != rank {
                return Err(Error::Invalid(format!("ray {i} has wrong dimension")));
            }
            if r.iter().all(BigInt::is_zero) {
                return Err(Error::Invalid(format!("ray {i} is zero")));
            }
            if primitive_int(r) != *r {
                return Err(Error::Invalid(format!("ray {i} is not primitive")));
            }
        }
        for (i, r) in rays.iter().enumerate() {
            for (j, s) in rays.iter().enumerate().skip(i + 1) {
                if r == s {
                    return Err(Error::Invalid(format!("rays {i} and {j} coincide")));
                }
            }
        }
        let fan = Fan {
            rank,
            rays,
            max_cones,
        };
        fan.validate_cones()?;
        fan.validate_complete()?;
        Ok(fan)
    }

    fn validate_cones(&self) -> Result<()> {
        if self.max_cones.is_empty() {
            return Err(Error::NotComplete("fan has no maximal cones".into()));
        }
        for (ci, cone) in self.max_cones.iter().enumerate() {
            if cone.len() != self.rank {
                return Err(Error::Invalid(format!(
                    "cone {ci} is not simplicial of full dimension"
                )));
            }
            let mut sorted = cone.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.rank {
                return Err(Error::Invalid(format!("cone {ci} repeats a ray")));
            }
            if cone.iter().any(|&r| r >= self.rays.len()) {
                return Err(Error::Invalid(format!("cone {ci} references a missing ray")));
            }
            if rank_q(&self.cone_matrix(cone)) != self.rank {
                return Err(Error::Invalid(format!(
                    "cone {ci} has linearly dependent rays"
                )));
            }
        }
        Ok(())
    }

    /// Completeness: boundary-facet pairing (every facet of a maximal cone
    /// is shared by exactly two) plus seeded random-direction coverage.
    fn validate_complete(&self) -> Result<()> {
        use std::collections::HashMap;
        let mut facet_count: HashMap<Vec<usize>, usize> = HashMap::new();
        for cone in &self.max_cones {
            let mut sorted = cone.clone();
            sorted.sort_unstable();
            for skip in 0..sorted.len() {
                let facet: Vec<usize> = sorted
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &r)| r)
                    .collect();
                *facet_count.entry(facet).or_insert(0) += 1;
            }
        }
        for (facet, count) in &facet_count {
            if *count != 2 {
                return Err(Error::NotComplete(format!(
                    "facet {facet:?} lies on {count} maximal cones (want 2)"
                )));
            }
        }
        let mut rng = crate::seeded_rng(0x5EED_FA9);
        for _ in 0..32 {
            let v: Vec<Rat> = (0..self.rank)
                .map(|_| Rat::from_integer(BigInt::from(rng.gen_range(-9i64..=9))))
                .collect();
            if v.iter().all(Zero::is_zero) {
                continue;
            }
            if self.cone_containing(&v).is_none() {
                return Err(Error::NotComplete(format!(
                    "sampled direction {v:?} lies in no cone"
                )));
            }
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rays(&self) -> &[Vec<BigInt>] {
        &self.rays
    }

    pub fn max_cones(&self) -> &[Vec<usize>] {
        &self.max_cones
    }

    /// Matrix with the cone's rays as columns.
    fn cone_matrix(&self, cone: &[usize]) -> QMat {
        (0..self.rank)
            .map(|row| {
                cone.iter()
                    .map(|&r| Rat::from_integer(self.rays[r][row].clone()))
                    .collect()
            })
            .collect()
    }

    /// Matrix with the cone's rays as rows.
    fn cone_ray_rows(&self, cone: &[usize]) -> QMat {
        cone.iter()
            .map(|&r| {
                self.rays[r]
                    .iter()
                    .map(|x| Rat::from_integer(x.clone()))
                    .collect()
            })
            .collect()
    }

    /// Index of the first maximal cone containing `v` (nonnegative
    /// coordinates in the cone basis), if any.
    pub fn cone_containing(&self, v: &[Rat]) -> Option<usize> {
        for (ci, cone) in self.max_cones.iter().enumerate() {
            let m = self.cone_matrix(cone);
            if let Some(coords) = solve_q(&m, v) {
                if coords.iter().all(|c| !c.is_negative()) {
                    return Some(ci);
                }
            }
        }
        None
    }

    /// The linear functional of `psi_D` on cone `ci`: solves
    /// `<m, u_rho> = -a_rho` over the cone's rays.
    fn cone_functional(&self, ci: usize, coeffs: &[Rat]) -> Vec<Rat> {
        let cone = &self.max_cones[ci];
        let rows = self.cone_ray_rows(cone);
        let rhs: Vec<Rat> = cone.iter().map(|&r| -coeffs[r].clone()).collect();
        solve_q(&rows, &rhs).expect("simplicial cone is invertible")
    }

    /// All walls: pairs of maximal cones sharing a facet, with the facet and
    /// the opposite ray in each.
    fn walls(&self) -> Vec<Wall> {
        use std::collections::HashMap;
        let mut by_facet: HashMap<Vec<usize>, Vec<(usize, usize)>> = HashMap::new();
        for (ci, cone) in self.max_cones.iter().enumerate() {
            let mut sorted = cone.clone();
            sorted.sort_unstable();
            for skip in 0..sorted.len() {
                let facet: Vec<usize> = sorted
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &r)| r)
                    .collect();
                by_facet.entry(facet).or_default().push((ci, sorted[skip]));
            }
        }
        let mut walls: Vec<Wall> = by_facet
            .into_iter()
            .map(|(facet, sides)| {
                assert_eq!(sides.len(), 2, "validated fan");
                let mut sides = sides;
                sides.sort_unstable();
                Wall {
                    facet,
                    cone_a: sides[0].0,
                    opposite_b: sides[1].1,
                }
            })
            .collect();
        walls.sort_by(|a, b| a.facet.cmp(&b.facet).then(a.cone_a.cmp(&b.cone_a)));
        walls
    }
}

#[derive(Clone, Debug)]
struct Wall {
    facet: Vec<usize>,
    cone_a: usize,
    opposite_b: usize,
}

/// A torus-invariant divisor as one rational coefficient per ray.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TDivisor {
    pub coefficients: Vec<Rat>,
}

impl TDivisor {
    pub fn from_integers(coeffs: &[i64]) -> TDivisor {
        TDivisor {
            coefficients: coeffs
                .iter()
                .map(|&c| Rat::from_integer(BigInt::from(c)))
                .collect(),
        }
    }
}

impl Serialize for TDivisor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Vec<String> = self
            .coefficients
            .iter()
            .map(crate::exact::rat_to_string)
            .collect();
        strs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TDivisor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let strs = Vec::<String>::deserialize(d)?;
        let coefficients = strs
            .iter()
            .map(|s| crate::exact::parse_rat(s))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Ok(TDivisor { coefficients })
    }
}

// ---------------------------------------------------------------------------
// Class lattice
// ---------------------------------------------------------------------------

/// Presentation of the divisor class group modulo torsion: the cokernel of
/// the ray-pairing relations, with a deterministic basis from the Smith
/// normal form.
#[derive(Clone, Debug)]
pub struct ClassLattice {
    pub rank: usize,
    /// `(rank) x (#rays)`: divisor coefficients to class coordinates.
    pub to_class: IMat,
    /// `(#rays) x (rank)`: integral section of `to_class`.
    pub section: IMat,
    /// Nontrivial invariant factors (torsion of the class group).
    pub torsion: Vec<BigInt>,
    /// The relation rows: row `i` is `(<e_i, u_rho>)_rho`.
    pub relations: IMat,
    /// Class coordinates of each ray divisor `D_rho`.
    pub ray_classes: IMat,
}

/// Compute the class lattice of a complete simplicial fan.
pub fn class_lattice(fan: &Fan) -> ClassLattice {
    let r = fan.rays().len();
    let n = fan.rank();
    // L: r x n, row rho = u_rho; relations are the columns L e_j.
    let l: IMat = fan.rays().to_vec();
    let snf = smith_normal_form(&l);
    let rank = r - n;
    let to_class: IMat = snf.u[n..].to_vec();
    let section: IMat = snf.u_inv.iter().map(|row| row[n..].to_vec()).collect();
    let torsion = (0..n)
        .map(|i| snf.s[i][i].clone())
        .filter(|d| !d.is_one() && !d.is_zero())
        .collect();
    let relations: IMat = (0..n)
        .map(|j| (0..r).map(|rho| l[rho][j].clone()).collect())
        .collect();
    let ray_classes: IMat = (0..r)
        .map(|rho| to_class.iter().map(|row| row[rho].clone()).collect())
        .collect();
    ClassLattice {
        rank,
        to_class,
        section,
        torsion,
        relations,
        ray_classes,
    }
}

impl ClassLattice {
    pub fn divisor_class(&self, d: &TDivisor) -> Vec<Rat> {
        self.to_class
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&d.coefficients)
                    .map(|(a, b)| Rat::from_integer(a.clone()) * b)
                    .sum()
            })
            .collect()
    }

    pub fn lift_class(&self, class: &[BigInt]) -> TDivisor {
        let coeffs = mat_vec_i(&self.section, class)
            .into_iter()
            .map(Rat::from_integer)
            .collect();
        TDivisor {
            coefficients: coeffs,
        }
    }
}

// ---------------------------------------------------------------------------
// Nef cone
// ---------------------------------------------------------------------------

/// The nef cone in class coordinates: wall inequalities and the extremal
/// classes found by double description.
#[derive(Clone, Debug)]
pub struct NefData {
    pub class_dim: usize,
    /// Primitive integral extremal classes, sorted.
    pub extremal_classes: Vec<Vec<BigInt>>,
    /// Integral divisor lifts of the extremal classes.
    pub extremal_divisors: Vec<TDivisor>,
    /// Wall inequalities on class coordinates (primitive integer rows).
    pub wall_ineqs_class: IMat,
    /// Wall inequalities on ray coefficients (one per wall).
    pub wall_ineqs_ray: Vec<Vec<Rat>>,
}

/// Wall inequality in ray-coefficient space for one wall: the value is
/// `a_(u') + <m_sigma(a), u'>`, nonnegative for nef divisors.
fn wall_inequality_ray(fan: &Fan, wall: &Wall) -> Vec<Rat> {
    let cone = &fan.max_cones()[wall.cone_a];
    // c solves R_sigma^T c = u' so that <m_sigma(a), u'> = -sum c_rho a_rho.
    let rows = fan.cone_ray_rows(cone);
    let cols: QMat = (0..fan.rank())
        .map(|i| (0..fan.rank()).map(|j| rows[j][i].clone()).collect())
        .collect();
    let u_prime: Vec<Rat> = fan.rays()[wall.opposite_b]
        .iter()
        .map(|x| Rat::from_integer(x.clone()))
        .collect();
    let c = solve_q(&cols, &u_prime).expect("simplicial cone is invertible");
    let mut w = vec![Rat::zero(); fan.rays().len()];
    w[wall.opposite_b] += Rat::one();
    for (k, &rho) in cone.iter().enumerate() {
        w[rho] = &w[rho] - &c[k];
    }
    w
}

/// Evaluate nefness of a divisor by its wall pairings. Returns the first
/// violated wall, if any.
pub fn nef_violation(fan: &Fan, walls_ray: &[Vec<Rat>], d: &TDivisor) -> Option<usize> {
    if d.coefficients.len() != fan.rays().len() {
        return Some(usize::MAX);
    }
    walls_ray.iter().position(|w| {
        let v: Rat = w.iter().zip(&d.coefficients).map(|(a, b)| a * b).sum();
        v.is_negative()
    })
}

/// Compute the nef cone of a complete simplicial fan: wall inequalities in
/// class coordinates, then extremal rays by exact double description.
pub fn nef_cone(fan: &Fan) -> Result<NefData> {
    let lattice = class_lattice(fan);
    if lattice.rank > MAX_CLASS_RANK {
        return Err(Error::Invalid(format!(
            "class rank {} exceeds the cap {MAX_CLASS_RANK}",
            lattice.rank
        )));
    }
    let walls = fan.walls();
    let walls_ray: Vec<Vec<Rat>> = walls.iter().map(|w| wall_inequality_ray(fan, w)).collect();
    // Descend to class coordinates through the integral section.
    let mut class_rows: IMat = Vec::new();
    for w in &walls_ray {
        let row: Vec<Rat> = (0..lattice.rank)
            .map(|k| {
                w.iter()
                    .enumerate()
                    .map(|(rho, c)| c * Rat::from_integer(lattice.section[rho][k].clone()))
                    .sum()
            })
            .collect();
        let prim = primitive_from_rational(&row);
        if prim.iter().all(BigInt::is_zero) {
            continue;
        }
        if !class_rows.contains(&prim) {
            class_rows.push(prim);
        }
    }
    class_rows.sort();
    let extremal_classes = double_description(&class_rows, lattice.rank)?;
    // Exact nefness of every extremal class, in ray space.
    let extremal_divisors: Vec<TDivisor> = extremal_classes
        .iter()
        .map(|c| lattice.lift_class(c))
        .collect();
    for (i, d) in extremal_divisors.iter().enumerate() {
        if let Some(wall) = nef_violation(fan, &walls_ray, d) {
            return Err(Error::Invalid(format!(
                "extremal class {i} fails wall {wall}: double description bug"
            )));
        }
    }
    // The classes must span the full class space.
    let as_q: QMat = extremal_classes
        .iter()
        .map(|c| c.iter().map(|x| Rat::from_integer(x.clone())).collect())
        .collect();
    if lattice.rank > 0 && rank_q(&as_q) != lattice.rank {
        return Err(Error::Invalid(
            "nef cone is not full-dimensional in the class lattice".into(),
        ));
    }
    Ok(NefData {
        class_dim: lattice.rank,
        extremal_classes,
        extremal_divisors,
        wall_ineqs_class: class_rows,
        wall_ineqs_ray: walls_ray,
    })
}

/// Exact double description: extremal rays of `{x : rows . x >= 0}` for a
/// pointed full-dimensional cone. Deterministic: inequalities are processed
/// in sorted order and outputs are sorted.
fn double_description(rows: &IMat, dim: usize) -> Result<Vec<Vec<BigInt>>> {
    if dim == 0 {
        return Ok(Vec::new());
    }
    // Initial simplicial cone from the first `dim` independent rows.
    let mut chosen: Vec<usize> = Vec::new();
    for (i, _) in rows.iter().enumerate() {
        let mut trial = chosen.clone();
        trial.push(i);
        let sub: QMat = trial
            .iter()
            .map(|&r| rows[r].iter().map(|x| Rat::from_integer(x.clone())).collect())
            .collect();
        if rank_q(&sub) == trial.len() {
            chosen = trial;
        }
        if chosen.len() == dim {
            break;
        }
    }
    if chosen.len() < dim {
        return Err(Error::Invalid(
            "inequality system is not full rank; cone has lineality".into(),
        ));
    }
    let b: QMat = chosen
        .iter()
        .map(|&r| rows[r].iter().map(|x| Rat::from_integer(x.clone())).collect())
        .collect();
    let b_inv = invert_q(&b).expect("independent rows");
    let mut rays: Vec<Vec<BigInt>> = (0..dim)
        .map(|j| {
            let col: Vec<Rat> = (0..dim).map(|i| b_inv[i][j].clone()).collect();
            primitive_from_rational(&col)
        })
        .collect();
    let mut processed: Vec<usize> = chosen.clone();

    let dot = |row: &[BigInt], ray: &[BigInt]| -> BigInt {
        row.iter().zip(ray).map(|(a, b)| a * b).sum()
    };
    let tight_set = |ray: &[BigInt], processed: &[usize]| -> Vec<usize> {
        processed
            .iter()
            .copied()
            .filter(|&i| dot(&rows[i], ray).is_zero())
            .collect()
    };

    for (i, row) in rows.iter().enumerate() {
        if processed.contains(&i) {
            continue;
        }
        let values: Vec<BigInt> = rays.iter().map(|r| dot(row, r)).collect();
        let mut next: Vec<Vec<BigInt>> = Vec::new();
        for (r, v) in rays.iter().zip(&values) {
            if !v.is_negative() {
                next.push(r.clone());
            }
        }
        // Combine adjacent (+,-) pairs on the new hyperplane.
        for (pi, pv) in values.iter().enumerate() {
            if !pv.is_positive() {
                continue;
            }
            for (ni, nv) in values.iter().enumerate() {
                if !nv.is_negative() {
                    continue;
                }
                let zp = tight_set(&rays[pi], &processed);
                let zn = tight_set(&rays[ni], &processed);
                let common: Vec<usize> =
                    zp.iter().copied().filter(|x| zn.contains(x)).collect();
                let adjacent = rays.iter().enumerate().all(|(k, other)| {
                    if k == pi || k == ni {
                        return true;
                    }
                    let zo = tight_set(other, &processed);
                    !common.iter().all(|x| zo.contains(x))
                });
                if !adjacent {
                    continue;
                }
                let combo: Vec<BigInt> = rays[pi]
                    .iter()
                    .zip(&rays[ni])
                    .map(|(p, n)| pv * n - nv * p)
                    .collect();
                let prim = primitive_int(&combo);
                if !next.contains(&prim) {
                    next.push(prim);
                }
            }
        }
        rays = next;
        processed.push(i);
    }
    for ray in &rays {
        for row in rows {
            debug_assert!(!dot(row, ray).is_negative(), "ray escapes the cone");
        }
    }
    rays.sort();
    rays.dedup();
    Ok(rays)
}

// ---------------------------------------------------------------------------
// Fan endomorphisms and pullback
// ---------------------------------------------------------------------------

/// A lattice map compatible with the fan, with the certified cone
/// assignment.
#[derive(Clone, Debug)]
pub struct ToricEndo {
    pub phi: IMat,
    pub cone_map: Vec<usize>,
}

impl ToricEndo {
    /// Infer and verify the cone assignment: every ray image must lie in the
    /// asserted image cone.
    pub fn new(fan: &Fan, phi: IMat) -> Result<ToricEndo> {
        let n = fan.rank();
        if phi.len() != n || phi.iter().any(|row| row.len() != n) {
            return Err(Error::IncompatibleEndo("matrix has the wrong shape".into()));
        }
        let phi_q = int_to_rat_mat(&phi);
        if crate::linalg::det_q(&phi_q).is_zero() {
            return Err(Error::IncompatibleEndo("lattice map is singular".into()));
        }
        let mut cone_map = Vec::with_capacity(fan.max_cones().len());
        for (ci, cone) in fan.max_cones().iter().enumerate() {
            let images: Vec<Vec<Rat>> = cone
                .iter()
                .map(|&r| {
                    mat_vec_q(
                        &phi_q,
                        &fan.rays()[r]
                            .iter()
                            .map(|x| Rat::from_integer(x.clone()))
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            let target = (0..fan.max_cones().len()).find(|&cj| {
                images.iter().all(|v| {
                    let m = fan.cone_matrix(&fan.max_cones()[cj]);
                    solve_q(&m, v)
                        .map(|coords| coords.iter().all(|c| !c.is_negative()))
                        .unwrap_or(false)
                })
            });
            match target {
                Some(cj) => cone_map.push(cj),
                None => {
                    return Err(Error::IncompatibleEndo(format!(
                        "image of cone {ci} lies in no single cone"
                    )))
                }
            }
        }
        Ok(ToricEndo { phi, cone_map })
    }
}

/// Pullback of ray divisors under the endomorphism, on ray coefficients:
/// `(f* a)_(rho') = -psi_a(phi u_(rho'))`, read through the cone functional.
pub fn pullback_matrix_ray(fan: &Fan, endo: &ToricEndo) -> QMat {
    let r = fan.rays().len();
    let phi_q = int_to_rat_mat(&endo.phi);
    let mut p = vec![vec![Rat::zero(); r]; r];
    for rho_p in 0..r {
        let v: Vec<Rat> = mat_vec_q(
            &phi_q,
            &fan.rays()[rho_p]
                .iter()
                .map(|x| Rat::from_integer(x.clone()))
                .collect::<Vec<_>>(),
        );
        let ci = fan
            .cone_containing(&v)
            .expect("complete fan covers every direction");
        // a'_(rho') = -<m_sigma(a), v> = sum_(rho in sigma) c_rho a_rho
        // where R_sigma^T c = v.
        let cone = &fan.max_cones()[ci];
        let rows = fan.cone_ray_rows(cone);
        let cols: QMat = (0..fan.rank())
            .map(|i| (0..fan.rank()).map(|j| rows[j][i].clone()).collect())
            .collect();
        let c = solve_q(&cols, &v).expect("simplicial cone");
        for (k, &rho) in cone.iter().enumerate() {
            p[rho_p][rho] = &p[rho_p][rho] + &c[k];
        }
    }
    p
}

/// Pullback on class coordinates. Asserts that relations map to relations
/// (the descent is well defined).
pub fn pullback_matrix_class(fan: &Fan, endo: &ToricEndo, lattice: &ClassLattice) -> QMat {
    let p_ray = pullback_matrix_ray(fan, endo);
    // Check: to_class . P . L = 0 (principal divisors stay principal).
    for rel in &lattice.relations {
        let rel_q: Vec<Rat> = rel.iter().map(|x| Rat::from_integer(x.clone())).collect();
        let image = mat_vec_q(&p_ray, &rel_q);
        for row in &lattice.to_class {
            let v: Rat = row
                .iter()
                .zip(&image)
                .map(|(a, b)| Rat::from_integer(a.clone()) * b)
                .sum();
            assert!(v.is_zero(), "pullback does not descend to classes");
        }
    }
    // Class matrix = to_class . P . section.
    let section_q: QMat = lattice
        .section
        .iter()
        .map(|row| row.iter().map(|x| Rat::from_integer(x.clone())).collect())
        .collect();
    let to_class_q: QMat = lattice
        .to_class
        .iter()
        .map(|row| row.iter().map(|x| Rat::from_integer(x.clone())).collect())
        .collect();
    mat_mul_q(&to_class_q, &mat_mul_q(&p_ray, &section_q))
}

/// Integral pullback on class coordinates, when it is integral.
pub fn pullback_matrix_class_int(fan: &Fan, endo: &ToricEndo, lattice: &ClassLattice) -> Result<IMat> {
    let q = pullback_matrix_class(fan, endo, lattice);
    q.iter()
        .map(|row| {
            row.iter()
                .map(|x| {
                    if x.denom().is_one() {
                        Ok(x.numer().clone())
                    } else {
                        Err(Error::IncompatibleEndo(format!(
                            "class pullback entry {x} is not integral"
                        )))
                    }
                })
                .collect()
        })
        .collect()
}

/// Result of iterating the pullback until it fixes every extremal ray.
#[derive(Clone, Debug)]
pub struct RayFixing {
    /// Smallest power fixing all extremal rays.
    pub order: u32,
    /// The permutation induced on `extremal_classes` by one pullback.
    pub permutation: Vec<usize>,
    /// Multipliers of `(f^order)*` on each extremal class, exact.
    pub multipliers: Vec<Rat>,
}

/// Compute the permutation the pullback induces on the extremal classes, its
/// order, and the exact multipliers of the fixing power.
pub fn ray_fixing_iterate(nef: &NefData, pullback_class: &QMat) -> Result<RayFixing> {
    let k = nef.extremal_classes.len();
    let mut permutation = vec![usize::MAX; k];
    let mut ratios: Vec<Rat> = vec![Rat::zero(); k];
    for (i, class) in nef.extremal_classes.iter().enumerate() {
        let class_q: Vec<Rat> = class.iter().map(|x| Rat::from_integer(x.clone())).collect();
        let image = mat_vec_q(pullback_class, &class_q);
        let mut target: Option<(usize, Rat)> = None;
        for (j, cand) in nef.extremal_classes.iter().enumerate() {
            // image == q * cand for a positive rational q?
            let mut ratio: Option<Rat> = None;
            let mut ok = true;
            for (a, b) in image.iter().zip(cand) {
                if b.is_zero() {
                    if !a.is_zero() {
                        ok = false;
                        break;
                    }
                    continue;
                }
                let r = a / Rat::from_integer(b.clone());
                match &ratio {
                    None => ratio = Some(r),
                    Some(prev) => {
                        if *prev != r {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            if ok {
                if let Some(r) = ratio {
                    if r.is_positive() {
                        target = Some((j, r));
                        break;
                    }
                }
            }
        }
        let Some((j, r)) = target else {
            return Err(Error::NotPermutation(format!(
                "image of extremal class {i} is not a positive multiple of an extremal class"
            )));
        };
        permutation[i] = j;
        ratios[i] = r;
    }
    // Must be a bijection.
    {
        let mut seen = vec![false; k];
        for &j in &permutation {
            if seen[j] {
                return Err(Error::NotPermutation(
                    "two extremal classes map to the same class".into(),
                ));
            }
            seen[j] = true;
        }
    }
    // Order = lcm of cycle lengths; multiplier of f^order on class i is the
    // cycle product raised to order / cycle_length.
    let mut order: u32 = 1;
    let mut cycle_of = vec![usize::MAX; k];
    let mut cycles: Vec<(usize, Vec<usize>)> = Vec::new();
    for start in 0..k {
        if cycle_of[start] != usize::MAX {
            continue;
        }
        let mut cycle = vec![start];
        let mut cur = permutation[start];
        while cur != start {
            cycle.push(cur);
            cur = permutation[cur];
        }
        for &m in &cycle {
            cycle_of[m] = cycles.len();
        }
        order = num_integer::lcm(order, cycle.len() as u32);
        cycles.push((cycle.len(), cycle));
    }
    let mut multipliers = vec![Rat::zero(); k];
    for (len, cycle) in &cycles {
        let mut product = Rat::one();
        for &m in cycle {
            product *= ratios[m].clone();
        }
        let power = order / *len as u32;
        let lam = Pow::pow(&product, power as i32);
        for &m in cycle {
            multipliers[m] = lam.clone();
        }
    }
    for (i, lam) in multipliers.iter().enumerate() {
        if !lam.denom().is_one() || !lam.is_positive() {
            return Err(Error::NotPermutation(format!(
                "multiplier {lam} of class {i} is not a positive integer"
            )));
        }
    }
    Ok(RayFixing {
        order,
        permutation,
        multipliers,
    })
}

// ---------------------------------------------------------------------------
// Semi-ample fibrations
// ---------------------------------------------------------------------------

/// The fibration attached to a nef divisor: the lattice points of its
/// polytope and the induced evaluation map on the torus.
#[derive(Clone, Debug)]
pub struct Fibration {
    pub divisor: TDivisor,
    /// Sorted lattice points of `P_D = {m : <m, u_rho> >= -a_rho}`.
    pub lattice_points: Vec<Vec<BigInt>>,
    /// Dimension of `P_D` (the dimension of the image).
    pub dim: usize,
}

/// Candidate cap for lattice-point enumeration.
const LATTICE_CANDIDATE_CAP: u128 = 100_000;

/// Build the semi-ample fibration of a nef divisor: polytope vertices from
/// the cone functionals, bounding box, inequality filtering.
pub fn semiample_fibration(fan: &Fan, walls_ray: &[Vec<Rat>], d: &TDivisor) -> Result<Fibration> {
    if d.coefficients.len() != fan.rays().len() {
        return Err(Error::Invalid("divisor has wrong number of coefficients".into()));
    }
    if let Some(w) = nef_violation(fan, walls_ray, d) {
        return Err(Error::NotNef(format!("wall {w}")));
    }
    // Vertices of P_D are the cone functionals.
    let vertices: Vec<Vec<Rat>> = (0..fan.max_cones().len())
        .map(|ci| fan.cone_functional(ci, &d.coefficients))
        .collect();
    let n = fan.rank();
    let mut lo = vec![BigInt::zero(); n];
    let mut hi = vec![BigInt::zero(); n];
    for j in 0..n {
        let mut min = vertices[0][j].clone();
        let mut max = vertices[0][j].clone();
        for v in &vertices[1..] {
            if v[j] < min {
                min = v[j].clone();
            }
            if v[j] > max {
                max = v[j].clone();
            }
        }
        lo[j] = min.floor().to_integer();
        hi[j] = max.ceil().to_integer();
    }
    let mut box_size: u128 = 1;
    for j in 0..n {
        let width = (&hi[j] - &lo[j] + BigInt::one())
            .try_into()
            .map_err(|_| Error::Invalid("polytope bounding box overflows".into()))?;
        box_size = box_size.saturating_mul(width);
    }
    if box_size > LATTICE_CANDIDATE_CAP {
        return Err(Error::Invalid(format!(
            "polytope bounding box has {box_size} candidates (cap {LATTICE_CANDIDATE_CAP})"
        )));
    }
    // Odometer over the box, filter by the ray inequalities.
    let mut lattice_points: Vec<Vec<BigInt>> = Vec::new();
    let mut m = lo.clone();
    'outer: loop {
        let inside = fan.rays().iter().zip(&d.coefficients).all(|(u, a)| {
            let pairing: BigInt = u.iter().zip(&m).map(|(ui, mi)| ui * mi).sum();
            Rat::from_integer(pairing) >= -a.clone()
        });
        if inside {
            lattice_points.push(m.clone());
        }
        for j in (0..n).rev() {
            if m[j] < hi[j] {
                m[j] += 1;
                continue 'outer;
            }
            m[j] = lo[j].clone();
            if j == 0 {
                break 'outer;
            }
        }
        if n == 0 {
            break;
        }
    }
    if lattice_points.is_empty() {
        return Err(Error::EmptyPolytope);
    }
    lattice_points.sort();
    // dim P_D = rank of the difference lattice.
    let m0 = lattice_points[0].clone();
    let diffs: IMat = lattice_points
        .iter()
        .skip(1)
        .map(|m| m.iter().zip(&m0).map(|(a, b)| a - b).collect())
        .collect();
    let dim = if diffs.is_empty() {
        0
    } else {
        rank_q(&int_to_rat_mat(&diffs))
    };
    Ok(Fibration {
        divisor: d.clone(),
        lattice_points,
        dim,
    })
}

impl Fibration {
    /// Evaluate the fibration map at a torus point: the projective point
    /// with one monomial coordinate per lattice point.
    pub fn project(&self, x: &TorusPoint) -> Result<ProjPoint> {
        let coords: Vec<Rat> = self
            .lattice_points
            .iter()
            .map(|m| monomial_value(x, m))
            .collect::<Result<Vec<_>>>()?;
        ProjPoint::normalize(&coords)
    }

    /// The divisor height `h_D(x)`: the standard height of the image point.
    pub fn height(&self, x: &TorusPoint) -> Result<f64> {
        Ok(weil_height(&self.project(x)?))
    }

    /// Echelon basis of the lattice spanned by the polytope directions.
    pub fn direction_basis(&self) -> IMat {
        let m0 = &self.lattice_points[0];
        let diffs: IMat = self
            .lattice_points
            .iter()
            .skip(1)
            .map(|m| m.iter().zip(m0).map(|(a, b)| a - b).collect())
            .collect();
        row_lattice_basis(&diffs)
    }
}

fn monomial_value(x: &TorusPoint, m: &[BigInt]) -> Result<Rat> {
    let mut value = Rat::one();
    for (xi, e) in x.coords().iter().zip(m) {
        let e: i64 = e
            .try_into()
            .map_err(|_| Error::Invalid("monomial exponent overflows".into()))?;
        if e != 0 {
            value *= Pow::pow(xi, e as i32);
        }
    }
    Ok(value)
}

/// The monomial map induced on the base of a semi-ample fibration: the dual
/// lattice map restricted to the polytope directions, verified by exact
/// conjugacy sampling.
pub fn induced_base_map(
    fan: &Fan,
    endo: &ToricEndo,
    fib: &Fibration,
    seed: u64,
) -> Result<MonomialMap> {
    let basis = fib.direction_basis();
    if basis.is_empty() {
        return Err(Error::Invalid(
            "fibration base is a point; no induced map".into(),
        ));
    }
    let dim = basis.len();
    let n = fan.rank();
    // phi^T b_k expressed in the basis must be integral.
    let phi_t: IMat = (0..n)
        .map(|i| (0..n).map(|j| endo.phi[j][i].clone()).collect())
        .collect();
    // Solve G from basis^T G^T = (phi^T basis^T): pick independent columns.
    let basis_q: QMat = int_to_rat_mat(&basis);
    let mut g_rows: Vec<Vec<i64>> = Vec::with_capacity(dim);
    for b in &basis {
        let y = mat_vec_i(&phi_t, b);
        let y_q: Vec<Rat> = y.iter().map(|v| Rat::from_integer(v.clone())).collect();
        let coeffs = solve_in_row_span(&basis_q, &y_q).ok_or_else(|| {
            Error::ConjugacyFailure("dual map does not preserve the polytope directions".into())
        })?;
        let mut row = Vec::with_capacity(dim);
        for c in &coeffs {
            if !c.denom().is_one() {
                return Err(Error::ConjugacyFailure(format!(
                    "induced exponent {c} is not integral"
                )));
            }
            row.push(c.numer().try_into().map_err(|_| {
                Error::ConjugacyFailure("induced exponent overflows".into())
            })?);
        }
        g_rows.push(row);
    }
    let g = MonomialMap::new(g_rows)
        .map_err(|e| Error::ConjugacyFailure(format!("induced matrix is singular: {e}")))?;
    // Conjugacy check on 100 random torus points, exact: (x^phi)^(b_k) must
    // equal the monomial image of (x^(b_j))_j under G.
    let mut rng = crate::seeded_rng(seed);
    let phi_action = MonomialMap::new(
        endo.phi
            .iter()
            .map(|row| {
                row.iter()
                    .map(|x| x.try_into().expect("validated entries"))
                    .collect()
            })
            .collect(),
    )
    .expect("validated endo");
    for _ in 0..100 {
        let x = random_torus_point(&mut rng, n)?;
        let fx = phi_action.apply(&x)?;
        let projected: Vec<Rat> = basis
            .iter()
            .map(|b| monomial_value(&x, b))
            .collect::<Result<Vec<_>>>()?;
        let y = TorusPoint::new(projected)?;
        let lhs: Vec<Rat> = basis
            .iter()
            .map(|b| monomial_value(&fx, b))
            .collect::<Result<Vec<_>>>()?;
        let rhs = g.apply(&y)?;
        if lhs != rhs.coords() {
            return Err(Error::ConjugacyFailure(
                "pointwise conjugacy check failed".into(),
            ));
        }
    }
    Ok(g)
}

/// Coefficients expressing `y` in the row span of `basis`, if any.
fn solve_in_row_span(basis: &QMat, y: &[Rat]) -> Option<Vec<Rat>> {
    let k = basis.len();
    let n = basis[0].len();
    // Find k independent columns of basis.
    let mut cols: Vec<usize> = Vec::new();
    for j in 0..n {
        let mut trial = cols.clone();
        trial.push(j);
        let sub: QMat = basis
            .iter()
            .map(|row| trial.iter().map(|&c| row[c].clone()).collect())
            .collect();
        if rank_q(&sub) == trial.len() {
            cols = trial;
        }
        if cols.len() == k {
            break;
        }
    }
    if cols.len() < k {
        return None;
    }
    // Solve (basis restricted to cols)^T c = y restricted to cols.
    let square: QMat = cols
        .iter()
        .map(|&j| (0..k).map(|i| basis[i][j].clone()).collect())
        .collect();
    let rhs: Vec<Rat> = cols.iter().map(|&j| y[j].clone()).collect();
    let coeffs = solve_q(&square, &rhs)?;
    // Verify on all coordinates.
    for j in 0..n {
        let v: Rat = (0..k).map(|i| &coeffs[i] * &basis[i][j]).sum();
        if v != y[j] {
            return None;
        }
    }
    Some(coeffs)
}

fn random_torus_point(rng: &mut impl Rng, n: usize) -> Result<TorusPoint> {
    let coords = (0..n)
        .map(|_| {
            let mut num = rng.gen_range(-9i64..=9);
            if num == 0 {
                num = 2;
            }
            let den = rng.gen_range(1i64..=9);
            Rat::new(BigInt::from(num), BigInt::from(den))
        })
        .collect();
    TorusPoint::new(coords)
}

// ---------------------------------------------------------------------------
// ToricSystem: the packaged dynamical system
// ---------------------------------------------------------------------------

/// A toric endomorphism packaged with its nef-cone data and the fibrations
/// of all extremal classes. This is the form the degree and height machinery
/// consumes.
#[derive(Clone, Debug)]
pub struct ToricSystem {
    fan: Fan,
    endo: ToricEndo,
    lattice: ClassLattice,
    nef: NefData,
    fibrations: Vec<Fibration>,
    action: MonomialMap,
    pullback_class: QMat,
}

impl ToricSystem {
    pub fn from_data(data: &FanData, phi: Vec<Vec<i64>>) -> Result<ToricSystem> {
        let fan = Fan::from_data(data)?;
        let phi_big: IMat = phi
            .iter()
            .map(|row| row.iter().map(|&x| BigInt::from(x)).collect())
            .collect();
        Self::new(fan, phi_big)
    }

    pub fn new(fan: Fan, phi: IMat) -> Result<ToricSystem> {
        let endo = ToricEndo::new(&fan, phi)?;
        let lattice = class_lattice(&fan);
        let nef = nef_cone(&fan)?;
        let fibrations = nef
            .extremal_divisors
            .iter()
            .map(|d| semiample_fibration(&fan, &nef.wall_ineqs_ray, d))
            .collect::<Result<Vec<_>>>()?;
        let action = MonomialMap::new(
            endo.phi
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|x| {
                            x.try_into()
                                .map_err(|_| Error::Invalid("lattice map entry overflows".into()))
                        })
                        .collect::<Result<Vec<i64>>>()
                })
                .collect::<Result<Vec<_>>>()?,
        )?;
        let pullback_class = pullback_matrix_class(&fan, &endo, &lattice);
        Ok(ToricSystem {
            fan,
            endo,
            lattice,
            nef,
            fibrations,
            action,
            pullback_class,
        })
    }

    pub fn fan(&self) -> &Fan {
        &self.fan
    }

    pub fn endo(&self) -> &ToricEndo {
        &self.endo
    }

    pub fn lattice(&self) -> &ClassLattice {
        &self.lattice
    }

    pub fn nef(&self) -> &NefData {
        &self.nef
    }

    pub fn fibrations(&self) -> &[Fibration] {
        &self.fibrations
    }

    pub fn monomial_action(&self) -> &MonomialMap {
        &self.action
    }

    pub fn pullback_class(&self) -> &QMat {
        &self.pullback_class
    }

    pub fn pullback_class_int(&self) -> Result<IMat> {
        pullback_matrix_class_int(&self.fan, &self.endo, &self.lattice)
    }

    pub fn ray_fixing(&self) -> Result<RayFixing> {
        ray_fixing_iterate(&self.nef, &self.pullback_class)
    }

    /// Height of the ample class `H = sum D_i` over the extremal classes:
    /// the sum of the fibration heights.
    pub fn ample_height(&self, x: &TorusPoint) -> Result<f64> {
        if x.rank() != self.fan.rank() {
            return Err(Error::DomainViolation(format!(
                "torus point has rank {}, fan has rank {}",
                x.rank(),
                self.fan.rank()
            )));
        }
        let mut total = 0.0;
        for fib in &self.fibrations {
            total += fib.height(x)?;
        }
        Ok(total)
    }

    /// The same system with the lattice map raised to the n-th power.
    pub fn power(&self, n: u32) -> Result<ToricSystem> {
        let phi_n = crate::linalg::mat_pow_i(&self.endo.phi, n);
        Self::new(self.fan.clone(), phi_n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn p2_fan() -> Fan {
        Fan::from_data(&FanData {
            rank: 2,
            rays: vec![vec![1, 0], vec![0, 1], vec![-1, -1]],
            cones: vec![vec![0, 1], vec![1, 2], vec![2, 0]],
        })
        .unwrap()
    }

    pub(crate) fn p1xp1_fan() -> Fan {
        Fan::from_data(&FanData {
            rank: 2,
            rays: vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]],
            cones: vec![vec![0, 2], vec![2, 1], vec![1, 3], vec![3, 0]],
        })
        .unwrap()
    }

    pub(crate) fn hirzebruch1_fan() -> Fan {
        Fan::from_data(&FanData {
            rank: 2,
            rays: vec![vec![1, 0], vec![0, 1], vec![-1, 1], vec![0, -1]],
            cones: vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 0]],
        })
        .unwrap()
    }

    fn p1_fan() -> Fan {
        Fan::from_data(&FanData {
            rank: 1,
            rays: vec![vec![1], vec![-1]],
            cones: vec![vec![0], vec![1]],
        })
        .unwrap()
    }

    fn rat(n: i64) -> Rat {
        Rat::from_integer(BigInt::from(n))
    }

    #[test]
    fn incomplete_fan_is_rejected() {
        let err = Fan::from_data(&FanData {
            rank: 2,
            rays: vec![vec![1, 0], vec![0, 1]],
            cones: vec![vec![0, 1]],
        });
        assert!(matches!(err, Err(Error::NotComplete(_))));
    }

    #[test]
    fn non_primitive_ray_is_rejected() {
        let err = Fan::from_data(&FanData {
            rank: 1,
            rays: vec![vec![2], vec![-1]],
            cones: vec![vec![0], vec![1]],
        });
        assert!(matches!(err, Err(Error::Invalid(_))));
    }

    #[test]
    fn class_lattice_of_plane() {
        let lat = class_lattice(&p2_fan());
        assert_eq!(lat.rank, 1);
        assert!(lat.torsion.is_empty());
        // All three ray divisors are linearly equivalent.
        assert_eq!(lat.ray_classes[0], lat.ray_classes[1]);
        assert_eq!(lat.ray_classes[1], lat.ray_classes[2]);
        assert_eq!(lat.ray_classes[0][0].abs(), BigInt::one());
    }

    #[test]
    fn class_lattice_of_quadric() {
        let lat = class_lattice(&p1xp1_fan());
        assert_eq!(lat.rank, 2);
        assert_eq!(lat.ray_classes[0], lat.ray_classes[1]);
        assert_eq!(lat.ray_classes[2], lat.ray_classes[3]);
        assert_ne!(lat.ray_classes[0], lat.ray_classes[2]);
    }

    #[test]
    fn class_lattice_of_line() {
        let lat = class_lattice(&p1_fan());
        assert_eq!(lat.rank, 1);
    }

    #[test]
    fn nef_cone_of_plane_is_one_ray() {
        let nef = nef_cone(&p2_fan()).unwrap();
        assert_eq!(nef.class_dim, 1);
        assert_eq!(nef.extremal_classes.len(), 1);
        // The generator is primitive.
        assert_eq!(nef.extremal_classes[0][0].abs(), BigInt::one());
    }

    #[test]
    fn nef_cone_of_quadric_is_two_rulings() {
        let fan = p1xp1_fan();
        let nef = nef_cone(&fan).unwrap();
        assert_eq!(nef.class_dim, 2);
        assert_eq!(nef.extremal_classes.len(), 2);
        // The two rulings: fibrations of dimension 1 whose heights are the
        // coordinate heights.
        let fibs: Vec<Fibration> = nef
            .extremal_divisors
            .iter()
            .map(|d| semiample_fibration(&fan, &nef.wall_ineqs_ray, d).unwrap())
            .collect();
        assert!(fibs.iter().all(|f| f.dim == 1));
        assert!(fibs.iter().all(|f| f.lattice_points.len() == 2));
        let x = TorusPoint::new(vec![rat(2), rat(3)]).unwrap();
        let mut heights: Vec<f64> = fibs.iter().map(|f| f.height(&x).unwrap()).collect();
        heights.sort_by(f64::total_cmp);
        assert!((heights[0] - 2f64.ln()).abs() < 1e-12);
        assert!((heights[1] - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nef_cone_of_hirzebruch_surface() {
        // Hand oracle: Nef(F_1) has the fiber class and the pullback of the
        // plane hyperplane class, so two extremal classes whose fibrations
        // have dimensions 1 and 2.
        let fan = hirzebruch1_fan();
        let nef = nef_cone(&fan).unwrap();
        assert_eq!(nef.extremal_classes.len(), 2);
        let mut dims: Vec<usize> = nef
            .extremal_divisors
            .iter()
            .map(|d| {
                semiample_fibration(&fan, &nef.wall_ineqs_ray, d)
                    .unwrap()
                    .dim
            })
            .collect();
        dims.sort_unstable();
        assert_eq!(dims, vec![1, 2]);
    }

    #[test]
    fn pullback_of_scaling_on_plane() {
        let fan = p2_fan();
        let endo = ToricEndo::new(
            &fan,
            vec![
                vec![BigInt::from(2), BigInt::from(0)],
                vec![BigInt::from(0), BigInt::from(2)],
            ],
        )
        .unwrap();
        let lat = class_lattice(&fan);
        let p = pullback_matrix_class_int(&fan, &endo, &lat).unwrap();
        assert_eq!(p, vec![vec![BigInt::from(2)]]);
    }

    #[test]
    fn pullback_of_diagonal_on_quadric() {
        let fan = p1xp1_fan();
        let endo = ToricEndo::new(
            &fan,
            vec![
                vec![BigInt::from(2), BigInt::from(0)],
                vec![BigInt::from(0), BigInt::from(3)],
            ],
        )
        .unwrap();
        let lat = class_lattice(&fan);
        let p = pullback_matrix_class_int(&fan, &endo, &lat).unwrap();
        // Diagonal with entries {2, 3} in some order.
        let mut diag: Vec<BigInt> = (0..2).map(|i| p[i][i].clone()).collect();
        diag.sort();
        assert_eq!(diag, vec![BigInt::from(2), BigInt::from(3)]);
        assert!(p[0][1].is_zero() && p[1][0].is_zero());
    }

    #[test]
    fn pullback_of_identity_is_identity() {
        let fan = hirzebruch1_fan();
        let endo = ToricEndo::new(&fan, crate::linalg::identity_i(2)).unwrap();
        let lat = class_lattice(&fan);
        let p = pullback_matrix_class_int(&fan, &endo, &lat).unwrap();
        assert_eq!(p, crate::linalg::identity_i(2));
    }

    #[test]
    fn pullback_square_law() {
        let fan = p1xp1_fan();
        let lat = class_lattice(&fan);
        for phi in [
            vec![vec![2i64, 0], vec![0, 3]],
            vec![vec![0, 2], vec![2, 0]],
        ] {
            let phi_big: IMat = phi
                .iter()
                .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
                .collect();
            let endo = ToricEndo::new(&fan, phi_big.clone()).unwrap();
            let p1 = pullback_matrix_class(&fan, &endo, &lat);
            let endo2 = ToricEndo::new(&fan, crate::linalg::mat_pow_i(&phi_big, 2)).unwrap();
            let p2 = pullback_matrix_class(&fan, &endo2, &lat);
            assert_eq!(mat_mul_q(&p1, &p1), p2);
        }
    }

    #[test]
    fn ray_fixing_diagonal() {
        let sys = ToricSystem::from_data(
            &FanData {
                rank: 2,
                rays: vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]],
                cones: vec![vec![0, 2], vec![2, 1], vec![1, 3], vec![3, 0]],
            },
            vec![vec![2, 0], vec![0, 3]],
        )
        .unwrap();
        let fix = sys.ray_fixing().unwrap();
        assert_eq!(fix.order, 1);
        let mut lams: Vec<Rat> = fix.multipliers.clone();
        lams.sort();
        assert_eq!(lams, vec![rat(2), rat(3)]);
    }

    #[test]
    fn ray_fixing_swap_and_double() {
        let sys = ToricSystem::from_data(
            &FanData {
                rank: 2,
                rays: vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]],
                cones: vec![vec![0, 2], vec![2, 1], vec![1, 3], vec![3, 0]],
            },
            vec![vec![0, 2], vec![2, 0]],
        )
        .unwrap();
        let fix = sys.ray_fixing().unwrap();
        assert_eq!(fix.order, 2);
        assert_eq!(fix.multipliers, vec![rat(4), rat(4)]);
        // The permutation swaps the two classes.
        assert_eq!(fix.permutation, vec![1, 0]);
    }

    #[test]
    fn ray_fixing_identity() {
        let sys = ToricSystem::from_data(
            &FanData {
                rank: 2,
                rays: vec![vec![1, 0], vec![0, 1], vec![-1, -1]],
                cones: vec![vec![0, 1], vec![1, 2], vec![2, 0]],
            },
            vec![vec![1, 0], vec![0, 1]],
        )
        .unwrap();
        let fix = sys.ray_fixing().unwrap();
        assert_eq!(fix.order, 1);
        assert_eq!(fix.multipliers, vec![rat(1)]);
    }

    #[test]
    fn fibration_of_ruling_class() {
        let fan = p1xp1_fan();
        let nef = nef_cone(&fan).unwrap();
        // D with coefficients on the e2 ray: P_D is a segment.
        let d = TDivisor::from_integers(&[0, 0, 1, 0]);
        let fib = semiample_fibration(&fan, &nef.wall_ineqs_ray, &d).unwrap();
        assert_eq!(fib.dim, 1);
        assert_eq!(
            fib.lattice_points,
            vec![vec![BigInt::from(0), BigInt::from(-1)], vec![BigInt::from(0), BigInt::from(0)]]
        );
        // h_D(x, y) = h(1 : y) regardless of orientation.
        let x = TorusPoint::new(vec![rat(7), rat(5)]).unwrap();
        assert!((fib.height(&x).unwrap() - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fibration_of_plane_hyperplane() {
        let fan = p2_fan();
        let nef = nef_cone(&fan).unwrap();
        let d = nef.extremal_divisors[0].clone();
        let fib = semiample_fibration(&fan, &nef.wall_ineqs_ray, &d).unwrap();
        assert_eq!(fib.dim, 2);
        assert_eq!(fib.lattice_points.len(), 3);
    }

    #[test]
    fn fibration_of_zero_divisor() {
        let fan = p2_fan();
        let nef = nef_cone(&fan).unwrap();
        let d = TDivisor::from_integers(&[0, 0, 0]);
        let fib = semiample_fibration(&fan, &nef.wall_ineqs_ray, &d).unwrap();
        assert_eq!(fib.dim, 0);
        assert_eq!(fib.lattice_points, vec![vec![BigInt::zero(), BigInt::zero()]]);
        let x = TorusPoint::new(vec![rat(7), rat(5)]).unwrap();
        assert_eq!(fib.height(&x).unwrap(), 0.0);
    }

    #[test]
    fn non_nef_divisor_is_rejected() {
        let fan = p1xp1_fan();
        let nef = nef_cone(&fan).unwrap();
        let d = TDivisor::from_integers(&[-1, 0, 0, 0]);
        assert!(matches!(
            semiample_fibration(&fan, &nef.wall_ineqs_ray, &d),
            Err(Error::NotNef(_))
        ));
    }

    #[test]
    fn induced_base_map_cubes_second_factor() {
        let sys = ToricSystem::from_data(
            &FanData {
                rank: 2,
                rays: vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]],
                cones: vec![vec![0, 2], vec![2, 1], vec![1, 3], vec![3, 0]],
            },
            vec![vec![2, 0], vec![0, 3]],
        )
        .unwrap();
        let fan = sys.fan();
        let nef = sys.nef();
        let d = TDivisor::from_integers(&[0, 0, 1, 0]);
        let fib = semiample_fibration(fan, &nef.wall_ineqs_ray, &d).unwrap();
        let g = induced_base_map(fan, sys.endo(), &fib, 7).unwrap();
        assert_eq!(g.matrix(), &[vec![3]]);
        let d1 = TDivisor::from_integers(&[1, 0, 0, 0]);
        let fib1 = semiample_fibration(fan, &nef.wall_ineqs_ray, &d1).unwrap();
        let g1 = induced_base_map(fan, sys.endo(), &fib1, 7).unwrap();
        assert_eq!(g1.matrix(), &[vec![2]]);
    }

    #[test]
    fn induced_base_map_identity() {
        let sys = ToricSystem::from_data(
            &FanData {
                rank: 2,
                rays: vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]],
                cones: vec![vec![0, 2], vec![2, 1], vec![1, 3], vec![3, 0]],
            },
            vec![vec![1, 0], vec![0, 1]],
        )
        .unwrap();
        let d = TDivisor::from_integers(&[0, 0, 1, 0]);
        let fib = semiample_fibration(sys.fan(), &sys.nef().wall_ineqs_ray, &d).unwrap();
        let g = induced_base_map(sys.fan(), sys.endo(), &fib, 7).unwrap();
        assert_eq!(g.matrix(), &[vec![1]]);
    }

    #[test]
    fn ample_height_on_quadric_is_torus_height() {
        let sys = ToricSystem::from_data(
            &FanData {
                rank: 2,
                rays: vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1]],
                cones: vec![vec![0, 2], vec![2, 1], vec![1, 3], vec![3, 0]],
            },
            vec![vec![2, 0], vec![0, 3]],
        )
        .unwrap();
        let x = TorusPoint::new(vec![rat(2), rat(15)]).unwrap();
        let h = sys.ample_height(&x).unwrap();
        assert!((h - (2f64.ln() + 15f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn incompatible_endo_is_rejected() {
        // The 45-degree rotation-ish map does not preserve the plane fan.
        let fan = p2_fan();
        let err = ToricEndo::new(
            &fan,
            vec![
                vec![BigInt::from(0), BigInt::from(-1)],
                vec![BigInt::from(1), BigInt::from(0)],
            ],
        );
        assert!(matches!(err, Err(Error::IncompatibleEndo(_))));
    }
}
