//! Dense symmetric matrices, Cholesky inversion with Tikhonov fallback and
//! rank-1 growth/shrink of an inverse.
//!
//! The rank-1 routines are what make backward elimination affordable: removing
//! one weak classifier from a t-dimensional model costs O(t^2) instead of a
//! fresh O(t^3) inversion.

use crate::error::{Error, Result};

/// Relative pivot below which a Cholesky factorization is treated as singular.
pub const SINGULAR_PIVOT: f64 = 1e-12;
/// Relative ridge used when a singular matrix has to be regularized.
pub const DEFAULT_TIKHONOV: f64 = 1e-6;
/// Absolute Schur complement floor for [`InverseState::augment`].
pub const SCHUR_FLOOR: f64 = 1e-12;
/// Absolute pivot floor for [`InverseState::downdate`].
pub const DOWNDATE_PIVOT: f64 = 1e-14;

/// Dense symmetric matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(order: usize) -> Self {
        SymMatrix {
            order,
            data: vec![0.0; order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m.data[i * order + i] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    /// Builds a matrix from `f(i, j)`, averaging mirrored entries.
    pub fn from_fn(order: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            for j in 0..order {
                m.data[i * order + j] = f(i, j);
            }
        }
        m.symmetrize();
        m
    }

    /// Builds a matrix from square row data. Off-diagonal pairs are averaged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let order = rows.len();
        if order == 0 {
            return Err(Error::DimensionError {
                expected: 1,
                got: 0,
            });
        }
        for row in rows {
            if row.len() != order {
                return Err(Error::DimensionError {
                    expected: order,
                    got: row.len(),
                });
            }
        }
        Ok(Self::from_fn(order, |i, j| rows[i][j]))
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.order + j] = value;
        self.data[j * self.order + i] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.order..(i + 1) * self.order]
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.order {
            return Err(Error::DimensionError {
                expected: self.order,
                got: v.len(),
            });
        }
        Ok((0..self.order).map(|i| dot(self.row(i), v)).collect())
    }

    /// Plain matrix product. The result is only symmetric when the factors
    /// commute, so it is returned as rows.
    pub fn mul(&self, other: &SymMatrix) -> Vec<Vec<f64>> {
        let n = self.order;
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| self.get(i, k) * other.get(k, j)).sum())
                    .collect()
            })
            .collect()
    }

    /// Returns `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &SymMatrix, beta: f64) -> Result<SymMatrix> {
        if other.order != self.order {
            return Err(Error::DimensionError {
                expected: self.order,
                got: other.order,
            });
        }
        Ok(SymMatrix {
            order: self.order,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        })
    }

    /// `self + lambda * I`.
    pub fn add_ridge(&self, lambda: f64) -> SymMatrix {
        let mut out = self.clone();
        for i in 0..self.order {
            out.data[i * self.order + i] += lambda;
        }
        out
    }

    /// Principal submatrix on `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> SymMatrix {
        let k = indices.len();
        let mut out = SymMatrix::zeros(k);
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                out.data[a * k + b] = self.get(i, j);
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.order, other.order, "order mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation from exact symmetry.
    pub fn asymmetry(&self) -> f64 {
        let n = self.order;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn symmetrize(&mut self) {
        let n = self.order;
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of [`invert_spd`].
#[derive(Clone, Debug)]
pub struct SpdInverse {
    pub inverse: SymMatrix,
    /// Ridge actually added to the diagonal before inversion.
    pub lambda: f64,
    /// Set when the automatic Tikhonov fallback kicked in.
    pub regularized: bool,
}

/// Inverts `m + lambda * I` through a Cholesky factorization.
///
/// With `lambda == 0` and a numerically singular `m` the inversion is retried
/// once with `lambda = 1e-6 * trace(m) / order`, and the result is flagged.
pub fn invert_spd(m: &SymMatrix, lambda: f64) -> Result<SpdInverse> {
    if !m.is_finite() || !lambda.is_finite() {
        return Err(Error::InvalidMatrix);
    }
    if lambda < 0.0 {
        return Err(Error::config(format!("negative ridge {lambda}")));
    }
    let scale = m.trace() / m.order() as f64;
    let pivot_floor = SINGULAR_PIVOT * scale;
    match cholesky_inverse(&m.add_ridge(lambda), pivot_floor) {
        Some(inverse) => Ok(SpdInverse {
            inverse,
            lambda,
            regularized: false,
        }),
        None if lambda == 0.0 => {
            let ridge = DEFAULT_TIKHONOV * scale;
            if ridge <= 0.0 || !ridge.is_finite() {
                return Err(Error::SingularMatrix);
            }
            let inverse =
                cholesky_inverse(&m.add_ridge(ridge), pivot_floor).ok_or(Error::SingularMatrix)?;
            Ok(SpdInverse {
                inverse,
                lambda: ridge,
                regularized: true,
            })
        }
        None => Err(Error::SingularMatrix),
    }
}

/// Lower Cholesky factor, or `None` when a pivot drops to `pivot_floor` or below.
fn cholesky(a: &SymMatrix, pivot_floor: f64) -> Option<Vec<f64>> {
    let n = a.order();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > pivot_floor) || d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

fn cholesky_inverse(a: &SymMatrix, pivot_floor: f64) -> Option<SymMatrix> {
    let n = a.order();
    let l = cholesky(a, pivot_floor)?;
    // Invert the triangular factor column by column, then form L^-T L^-1.
    let mut linv = vec![0.0; n * n];
    for j in 0..n {
        linv[j * n + j] = 1.0 / l[j * n + j];
        for i in j + 1..n {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = s / l[i * n + i];
        }
    }
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[k * n + i] * linv[k * n + j];
            }
            out.set(i, j, s);
        }
    }
    out.is_finite().then_some(out)
}

/// Inverse of a symmetric matrix restricted to a set of original indices.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseState {
    inverse: SymMatrix,
    active: Vec<usize>,
}

impl InverseState {
    pub fn new(inverse: SymMatrix, active: Vec<usize>) -> Result<Self> {
        if inverse.order() != active.len() {
            return Err(Error::DimensionError {
                expected: inverse.order(),
                got: active.len(),
            });
        }
        Ok(InverseState { inverse, active })
    }

    /// One-by-one state for a matrix with the single entry `diag`.
    pub fn singleton(diag: f64, index: usize) -> Result<Self> {
        if !(diag > SCHUR_FLOOR) {
            return Err(Error::NotPositiveDefinite(diag));
        }
        Ok(InverseState {
            inverse: SymMatrix::diagonal(&[1.0 / diag]),
            active: vec![index],
        })
    }

    pub fn inverse(&self) -> &SymMatrix {
        &self.inverse
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn order(&self) -> usize {
        self.inverse.order()
    }

    /// Grows the inverse by one row/column. `v[..t]` holds the cross terms
    /// against the current active set and `v[t]` the new diagonal entry.
    pub fn augment(&self, v: &[f64], new_index: usize) -> Result<InverseState> {
        let t = self.order();
        if v.len() != t + 1 {
            return Err(Error::DimensionError {
                expected: t + 1,
                got: v.len(),
            });
        }
        let cross = &v[..t];
        let u = self.inverse.mul_vec(cross)?;
        let schur = v[t] - dot(cross, &u);
        if !(schur > SCHUR_FLOOR) {
            return Err(Error::NotPositiveDefinite(schur));
        }
        let a = 1.0 / schur;
        let n = t + 1;
        let mut out = SymMatrix::zeros(n);
        for i in 0..t {
            for j in 0..=i {
                out.set(i, j, self.inverse.get(i, j) + a * u[i] * u[j]);
            }
            out.set(i, t, -a * u[i]);
        }
        out.set(t, t, a);
        out.symmetrize();
        let mut active = self.active.clone();
        active.push(new_index);
        Ok(InverseState {
            inverse: out,
            active,
        })
    }

    /// Drops the row/column at `remove_pos`.
    ///
    /// Conceptually the removed row/column is permuted to the end and the
    /// block formula `B - s s^T / s_t` applied; the permutation keeps the
    /// remaining entries in their original relative order, so it is applied
    /// through index arithmetic rather than by moving data.
    pub fn downdate(&self, remove_pos: usize) -> Result<InverseState> {
        let t = self.order();
        if t < 2 {
            return Err(Error::DimensionError {
                expected: 2,
                got: t,
            });
        }
        if remove_pos >= t {
            return Err(Error::DimensionError {
                expected: t,
                got: remove_pos,
            });
        }
        let pivot = self.inverse.get(remove_pos, remove_pos);
        if pivot.abs() <= DOWNDATE_PIVOT {
            return Err(Error::DegenerateDowndate(pivot));
        }
        let keep: Vec<usize> = (0..t).filter(|&i| i != remove_pos).collect();
        let s: Vec<f64> = keep
            .iter()
            .map(|&i| self.inverse.get(i, remove_pos))
            .collect();
        let n = t - 1;
        let mut out = SymMatrix::zeros(n);
        for (a, &i) in keep.iter().enumerate() {
            for b in 0..=a {
                let j = keep[b];
                out.set(a, b, self.inverse.get(i, j) - s[a] * s[b] / pivot);
            }
        }
        out.symmetrize();
        let active = keep.iter().map(|&i| self.active[i]).collect();
        Ok(InverseState {
            inverse: out,
            active,
        })
    }
}

/// `b^T S_w^{-1} b`, the closed-form value of the rank-1 Fisher objective.
pub fn sparse_lda_objective(inv_sw: &SymMatrix, b: &[f64]) -> Result<f64> {
    let y = inv_sw.mul_vec(b)?;
    Ok(dot(b, &y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        // G G^T + n I is comfortably positive definite.
        let g: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        SymMatrix::from_fn(n, |i, j| {
            let mut s = 0.0;
            for k in 0..n {
                s += g[i * n + k] * g[j * n + k];
            }
            if i == j {
                s + n as f64 * 0.1 + 0.5
            } else {
                s
            }
        })
    }

    fn identity_error(rows: &[Vec<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    #[test]
    fn identity_inverts_to_identity() {
        let inv = invert_spd(&SymMatrix::identity(3), 0.0).unwrap();
        assert_eq!(inv.inverse.max_abs_diff(&SymMatrix::identity(3)), 0.0);
        assert!(!inv.regularized);
    }

    #[test]
    fn two_by_two_analytic() {
        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let inv = invert_spd(&m, 0.0).unwrap().inverse;
        let expected = SymMatrix::from_rows(&[vec![0.6, -0.2], vec![-0.2, 0.4]]).unwrap();
        assert!(inv.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn random_spd_multiplies_back_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_spd(20, &mut rng);
        let inv = invert_spd(&m, 0.0).unwrap().inverse;
        assert!(identity_error(&m.mul(&inv)) < 1e-8);
    }

    #[test]
    fn singular_matrix_gets_regularized() {
        let m = SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let inv = invert_spd(&m, 0.0).unwrap();
        assert!(inv.regularized);
        assert_eq!(inv.lambda, 1e-6);
        assert!(inv.inverse.is_finite());
    }

    #[test]
    fn zero_matrix_is_singular() {
        assert!(matches!(
            invert_spd(&SymMatrix::zeros(3), 0.0),
            Err(Error::SingularMatrix)
        ));
    }

    #[test]
    fn non_finite_is_rejected() {
        let m = SymMatrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(matches!(invert_spd(&m, 0.0), Err(Error::InvalidMatrix)));
    }

    #[test]
    fn augment_scalar_to_two_by_two() {
        let state = InverseState::singleton(2.0, 0).unwrap();
        let grown = state.augment(&[1.0, 3.0], 1).unwrap();
        let expected = SymMatrix::from_rows(&[vec![0.6, -0.2], vec![-0.2, 0.4]]).unwrap();
        assert!(grown.inverse().max_abs_diff(&expected) < 1e-15);
        assert_eq!(grown.active(), &[0, 1]);
    }

    #[test]
    fn augment_identity_block_diagonal() {
        let state = InverseState::new(SymMatrix::identity(3), vec![0, 1, 2]).unwrap();
        let grown = state.augment(&[0.0, 0.0, 0.0, 1.0], 3).unwrap();
        assert_eq!(grown.inverse().max_abs_diff(&SymMatrix::identity(4)), 0.0);
    }

    #[test]
    fn augment_matches_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let full = random_spd(6, &mut rng);
        let idx: Vec<usize> = (0..5).collect();
        let state = InverseState::new(
            invert_spd(&full.submatrix(&idx), 0.0).unwrap().inverse,
            idx,
        )
        .unwrap();
        let v: Vec<f64> = (0..6).map(|j| full.get(5, j)).collect();
        let grown = state.augment(&v, 5).unwrap();
        let direct = invert_spd(&full, 0.0).unwrap().inverse;
        assert!(grown.inverse().max_abs_diff(&direct) < 1e-9);
    }

    #[test]
    fn augment_rejects_non_positive_schur() {
        let state = InverseState::singleton(1.0, 0).unwrap();
        assert!(matches!(
            state.augment(&[1.0, 1.0], 1),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn downdate_diagonal() {
        let inv = invert_spd(&SymMatrix::diagonal(&[2.0, 4.0]), 0.0).unwrap();
        let state = InverseState::new(inv.inverse, vec![0, 1]).unwrap();
        let shrunk = state.downdate(0).unwrap();
        assert_eq!(shrunk.inverse().get(0, 0), 0.25);
        assert_eq!(shrunk.active(), &[1]);
    }

    #[test]
    fn downdate_undoes_augment() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let full = random_spd(5, &mut rng);
        let idx: Vec<usize> = (0..4).collect();
        let state = InverseState::new(
            invert_spd(&full.submatrix(&idx), 0.0).unwrap().inverse,
            idx,
        )
        .unwrap();
        let v: Vec<f64> = (0..5).map(|j| full.get(4, j)).collect();
        let back = state.augment(&v, 4).unwrap().downdate(4).unwrap();
        assert_eq!(back.active(), state.active());
        assert!(back.inverse().max_abs_diff(state.inverse()) < 1e-10);
    }

    #[test]
    fn downdate_matches_minor_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let full = random_spd(8, &mut rng);
        let state = InverseState::new(
            invert_spd(&full, 0.0).unwrap().inverse,
            (0..8).collect(),
        )
        .unwrap();
        let shrunk = state.downdate(3).unwrap();
        let keep = [0, 1, 2, 4, 5, 6, 7];
        let direct = invert_spd(&full.submatrix(&keep), 0.0).unwrap().inverse;
        assert_eq!(shrunk.active(), &keep);
        assert!(shrunk.inverse().max_abs_diff(&direct) < 1e-9);
    }

    #[test]
    fn downdate_rejects_bad_position_and_tiny_order() {
        let state = InverseState::singleton(1.0, 0).unwrap();
        assert!(state.downdate(0).is_err());
        let state = InverseState::new(SymMatrix::identity(2), vec![0, 1]).unwrap();
        assert!(state.downdate(2).is_err());
        let degenerate = InverseState::new(SymMatrix::diagonal(&[0.0, 1.0]), vec![0, 1]).unwrap();
        assert!(matches!(
            degenerate.downdate(0),
            Err(Error::DegenerateDowndate(_))
        ));
    }

    #[test]
    fn objective_basics() {
        let id = SymMatrix::identity(2);
        assert_eq!(sparse_lda_objective(&id, &[3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(sparse_lda_objective(&id, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            sparse_lda_objective(&id, &[1.0]),
            Err(Error::DimensionError { .. })
        ));
    }

    #[test]
    fn objective_matches_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_spd(7, &mut rng);
        let b: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
        // Gaussian elimination on S_w x = b.
        let n = 7;
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).map(|j| m.get(i, j)).collect();
                row.push(b[i]);
                row
            })
            .collect();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
                .unwrap();
            a.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..=n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (a[r][n] - s) / a[r][r];
        }
        let oracle = dot(&b, &x);
        let inv = invert_spd(&m, 0.0).unwrap().inverse;
        let got = sparse_lda_objective(&inv, &b).unwrap();
        assert!((got - oracle).abs() <= 1e-9 * oracle.abs());
    }
}
