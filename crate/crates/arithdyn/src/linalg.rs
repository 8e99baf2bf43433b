//! Dense exact linear algebra over big integers and rationals: just enough
//! for characteristic polynomials, lattice quotients, and cone arithmetic.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::exact::Rat;

pub type IMat = Vec<Vec<BigInt>>;
pub type QMat = Vec<Vec<Rat>>;

pub fn int_to_rat_mat(a: &IMat) -> QMat {
    a.iter()
        .map(|row| row.iter().map(|x| Rat::from_integer(x.clone())).collect())
        .collect()
}

pub fn identity_q(n: usize) -> QMat {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Rat::one() } else { Rat::zero() })
                .collect()
        })
        .collect()
}

pub fn identity_i(n: usize) -> IMat {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        BigInt::one()
                    } else {
                        BigInt::zero()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn mat_mul_q(a: &QMat, b: &QMat) -> QMat {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).map(|t| &a[i][t] * &b[t][j]).sum())
                .collect()
        })
        .collect()
}

pub fn mat_mul_i(a: &IMat, b: &IMat) -> IMat {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).map(|t| &a[i][t] * &b[t][j]).sum())
                .collect()
        })
        .collect()
}

pub fn mat_vec_q(a: &QMat, v: &[Rat]) -> Vec<Rat> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn mat_vec_i(a: &IMat, v: &[BigInt]) -> Vec<BigInt> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn mat_pow_i(a: &IMat, n: u32) -> IMat {
    let mut result = identity_i(a.len());
    let mut base = a.clone();
    let mut n = n;
    while n > 0 {
        if n & 1 == 1 {
            result = mat_mul_i(&result, &base);
        }
        n >>= 1;
        if n > 0 {
            base = mat_mul_i(&base, &base);
        }
    }
    result
}

pub fn transpose_i(a: &IMat) -> IMat {
    let rows = a.len();
    let cols = a[0].len();
    (0..cols)
        .map(|j| (0..rows).map(|i| a[i][j].clone()).collect())
        .collect()
}

/// Determinant by fraction-free-ish Gaussian elimination over rationals.
pub fn det_q(a: &QMat) -> Rat {
    let n = a.len();
    let mut m = a.to_vec();
    let mut det = Rat::one();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero());
        let Some(pivot) = pivot else {
            return Rat::zero();
        };
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col].clone();
        let inv = m[col][col].clone();
        for r in col + 1..n {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] / &inv;
            for c in col..n {
                let sub = &factor * &m[col][c];
                m[r][c] = &m[r][c] - &sub;
            }
        }
    }
    det
}

/// Solve `a x = b` over the rationals. `None` when `a` is singular.
pub fn solve_q(a: &QMat, b: &[Rat]) -> Option<Vec<Rat>> {
    let n = a.len();
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(pivot, col);
        let inv = m[col][col].clone();
        for c in col..=n {
            m[col][c] = &m[col][c] / &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for c in col..=n {
                    let sub = &factor * &m[col][c];
                    m[r][c] = &m[r][c] - &sub;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n].clone()).collect())
}

/// Inverse of a square rational matrix. `None` when singular.
pub fn invert_q(a: &QMat) -> Option<QMat> {
    let n = a.len();
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            for j in 0..n {
                r.push(if i == j { Rat::one() } else { Rat::zero() });
            }
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(pivot, col);
        let inv = m[col][col].clone();
        for c in col..2 * n {
            m[col][c] = &m[col][c] / &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for c in col..2 * n {
                    let sub = &factor * &m[col][c];
                    m[r][c] = &m[r][c] - &sub;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n..].to_vec()).collect())
}

pub fn rank_q(a: &QMat) -> usize {
    if a.is_empty() {
        return 0;
    }
    let mut m = a.to_vec();
    let rows = m.len();
    let cols = m[0].len();
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(pivot, rank);
        let inv = m[rank][col].clone();
        for r in rank + 1..rows {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] / &inv;
            for c in col..cols {
                let sub = &factor * &m[rank][c];
                m[r][c] = &m[r][c] - &sub;
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Scale a rational vector to a primitive integer vector with the same
/// direction (first nonzero entry keeps its sign).
pub fn primitive_from_rational(v: &[Rat]) -> Vec<BigInt> {
    let mut lcm = BigInt::one();
    for x in v {
        lcm = lcm.lcm(x.denom());
    }
    let mut ints: Vec<BigInt> = v.iter().map(|x| (x * &lcm).to_integer()).collect();
    let mut gcd = BigInt::zero();
    for x in &ints {
        gcd = gcd.gcd(x);
    }
    if !gcd.is_zero() && !gcd.is_one() {
        for x in ints.iter_mut() {
            *x = &*x / &gcd;
        }
    }
    ints
}

/// Divide an integer vector by the gcd of its entries (direction preserved).
pub fn primitive_int(v: &[BigInt]) -> Vec<BigInt> {
    let mut gcd = BigInt::zero();
    for x in v {
        gcd = gcd.gcd(x);
    }
    if gcd.is_zero() || gcd.is_one() {
        return v.to_vec();
    }
    v.iter().map(|x| x / &gcd).collect()
}

/// Echelon basis of the lattice generated by the rows of `mat`, computed by
/// integer row reduction (unimodular operations only).
pub fn row_lattice_basis(mat: &IMat) -> IMat {
    let mut rows: Vec<Vec<BigInt>> = mat
        .iter()
        .filter(|r| r.iter().any(|x| !x.is_zero()))
        .cloned()
        .collect();
    if rows.is_empty() {
        return Vec::new();
    }
    let cols = rows[0].len();
    let mut basis: IMat = Vec::new();
    for col in 0..cols {
        loop {
            let mut idxs: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i][col].is_zero()).collect();
            if idxs.is_empty() {
                break;
            }
            if idxs.len() == 1 {
                basis.push(rows.remove(idxs[0]));
                break;
            }
            idxs.sort_by(|&i, &j| {
                rows[i][col]
                    .magnitude()
                    .cmp(rows[j][col].magnitude())
                    .then(i.cmp(&j))
            });
            let pivot = idxs[0];
            let pivot_val = rows[pivot][col].clone();
            for &i in &idxs[1..] {
                let q = rows[i][col].div_floor(&pivot_val);
                if !q.is_zero() {
                    for c in 0..cols {
                        let sub = &q * &rows[pivot][c];
                        rows[i][c] = &rows[i][c] - sub;
                    }
                }
            }
        }
    }
    basis
}

/// Exact characteristic polynomial of a square rational matrix by the
/// Faddeev-LeVerrier recurrence. Coefficients ascending, monic.
pub fn char_poly_q(a: &QMat) -> Vec<Rat> {
    let n = a.len();
    let mut coeffs = vec![Rat::zero(); n + 1];
    coeffs[n] = Rat::one();
    if n == 0 {
        return coeffs;
    }
    let mut m = a.clone();
    for k in 1..=n {
        let trace: Rat = (0..n).map(|i| m[i][i].clone()).sum();
        let c = -trace / Rat::from_integer(BigInt::from(k));
        coeffs[n - k] = c.clone();
        if k < n {
            for i in 0..n {
                m[i][i] = &m[i][i] + &c;
            }
            m = mat_mul_q(a, &m);
        }
    }
    coeffs
}

/// Smith normal form `u * a * v = s` with `s` diagonal, `u`, `v` unimodular.
/// `u_inv` is maintained alongside so lattice sections stay integral.
pub struct Snf {
    pub u: IMat,
    pub u_inv: IMat,
    pub v: IMat,
    pub s: IMat,
}

pub fn smith_normal_form(a: &IMat) -> Snf {
    let rows = a.len();
    let cols = if rows > 0 { a[0].len() } else { 0 };
    let mut s = a.clone();
    let mut u = identity_i(rows);
    let mut u_inv = identity_i(rows);
    let mut v = identity_i(cols);

    // Row op helpers keep u and u_inv consistent: row_add adds l*row j to
    // row i of s and u, and subtracts on the matching column of u_inv.
    fn row_swap(s: &mut IMat, u: &mut IMat, u_inv: &mut IMat, i: usize, j: usize) {
        s.swap(i, j);
        u.swap(i, j);
        for row in u_inv.iter_mut() {
            row.swap(i, j);
        }
    }
    fn row_add(s: &mut IMat, u: &mut IMat, u_inv: &mut IMat, i: usize, j: usize, l: &BigInt) {
        for c in 0..s[0].len() {
            let add = l * &s[j][c];
            s[i][c] = &s[i][c] + add;
        }
        for c in 0..u[0].len() {
            let add = l * &u[j][c];
            u[i][c] = &u[i][c] + add;
        }
        for row in u_inv.iter_mut() {
            let sub = l * &row[i];
            row[j] = &row[j] - sub;
        }
    }
    fn row_negate(s: &mut IMat, u: &mut IMat, u_inv: &mut IMat, i: usize) {
        for c in 0..s[0].len() {
            s[i][c] = -s[i][c].clone();
        }
        for c in 0..u[0].len() {
            u[i][c] = -u[i][c].clone();
        }
        for row in u_inv.iter_mut() {
            row[i] = -row[i].clone();
        }
    }
    fn col_swap(s: &mut IMat, v: &mut IMat, i: usize, j: usize) {
        for row in s.iter_mut() {
            row.swap(i, j);
        }
        for row in v.iter_mut() {
            row.swap(i, j);
        }
    }
    fn col_add(s: &mut IMat, v: &mut IMat, i: usize, j: usize, l: &BigInt) {
        for row in s.iter_mut() {
            let add = l * &row[j];
            row[i] = &row[i] + add;
        }
        for row in v.iter_mut() {
            let add = l * &row[j];
            row[i] = &row[i] + add;
        }
    }

    let mut t = 0;
    while t < rows.min(cols) {
        // Deterministic pivot: smallest nonzero magnitude, ties by position.
        let mut pivot: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if s[i][j].is_zero() {
                    continue;
                }
                match &pivot {
                    None => pivot = Some((i, j)),
                    Some((pi, pj)) => {
                        if s[i][j].magnitude() < s[*pi][*pj].magnitude() {
                            pivot = Some((i, j));
                        }
                    }
                }
            }
        }
        let Some((pi, pj)) = pivot else {
            break;
        };
        row_swap(&mut s, &mut u, &mut u_inv, t, pi);
        col_swap(&mut s, &mut v, t, pj);

        loop {
            let mut clean = true;
            for i in t + 1..rows {
                if s[i][t].is_zero() {
                    continue;
                }
                let q = s[i][t].div_floor(&s[t][t]);
                if !q.is_zero() {
                    let l = -q;
                    row_add(&mut s, &mut u, &mut u_inv, i, t, &l);
                }
                if !s[i][t].is_zero() {
                    // Remainder smaller than the pivot: swap it up.
                    row_swap(&mut s, &mut u, &mut u_inv, t, i);
                    clean = false;
                }
            }
            for j in t + 1..cols {
                if s[t][j].is_zero() {
                    continue;
                }
                let q = s[t][j].div_floor(&s[t][t]);
                if !q.is_zero() {
                    let l = -q;
                    col_add(&mut s, &mut v, j, t, &l);
                }
                if !s[t][j].is_zero() {
                    col_swap(&mut s, &mut v, t, j);
                    clean = false;
                }
            }
            let row_clear = (t + 1..rows).all(|i| s[i][t].is_zero());
            let col_clear = (t + 1..cols).all(|j| s[t][j].is_zero());
            if clean && row_clear && col_clear {
                break;
            }
        }
        if s[t][t].is_negative() {
            row_negate(&mut s, &mut u, &mut u_inv, t);
        }
        // Divisibility chain: fold a non-divisible entry into the pivot.
        let dt = s[t][t].clone();
        let offender = (t + 1..rows)
            .flat_map(|i| (t + 1..cols).map(move |j| (i, j)))
            .find(|&(i, j)| !(&s[i][j] % &dt).is_zero());
        if let Some((i, _)) = offender {
            row_add(&mut s, &mut u, &mut u_inv, t, i, &BigInt::one());
            continue; // redo this pivot
        }
        t += 1;
    }
    Snf { u, u_inv, v, s }
}
