//! Matrices over a valued field: arithmetic, inversion, rank at working
//! precision, and the Cartan decomposition `g = u a u'` with norm-preserving
//! outer factors and non-increasing absolute values on the diagonal.

use nalgebra::DMatrix;
use num::rational::BigRational;
use thiserror::Error;

use super::field::{PadicField, RealField, ValuedField};

#[derive(Debug, Error, Clone)]
pub enum ProjError {
    #[error("matrix is singular at working precision")]
    SingularAtPrecision,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("no contraction: |a2| = |a1| at working precision")]
    NotContracting,
    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("degenerate position: margin is zero at working precision")]
    DegeneratePosition,
    #[error("search range exhausted")]
    RangeExhausted,
    #[error("word search exhausted")]
    SearchExhausted,
    #[error("arena overlap: {0}")]
    Overlap(String),
}

/// Square matrix over a valued field, considered modulo scalars when used as
/// a projective map.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<F: ValuedField> {
    pub n: usize,
    pub entries: Vec<Vec<F::Elem>>,
}

impl<F: ValuedField> Mat<F> {
    pub fn identity(field: &F, n: usize) -> Self {
        Mat {
            n,
            entries: (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| if i == j { field.one() } else { field.zero() })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn from_rationals(field: &F, rows: &[Vec<BigRational>]) -> Self {
        let n = rows.len();
        Mat {
            n,
            entries: rows
                .iter()
                .map(|r| r.iter().map(|x| field.from_rational(x)).collect())
                .collect(),
        }
    }

    pub fn mul(&self, field: &F, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.n, other.n);
        let n = self.n;
        Mat {
            n,
            entries: (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let mut acc = field.zero();
                            for k in 0..n {
                                acc = field.add(
                                    &acc,
                                    &field.mul(&self.entries[i][k], &other.entries[k][j]),
                                );
                            }
                            acc
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn apply(&self, field: &F, v: &[F::Elem]) -> Vec<F::Elem> {
        assert_eq!(self.n, v.len());
        (0..self.n)
            .map(|i| {
                let mut acc = field.zero();
                for k in 0..self.n {
                    acc = field.add(&acc, &field.mul(&self.entries[i][k], &v[k]));
                }
                acc
            })
            .collect()
    }

    pub fn transpose(&self) -> Mat<F> {
        Mat {
            n: self.n,
            entries: (0..self.n)
                .map(|i| (0..self.n).map(|j| self.entries[j][i].clone()).collect())
                .collect(),
        }
    }

    /// Gauss-Jordan inverse; fails when a full pivot column vanishes at
    /// working precision.
    pub fn inverse(&self, field: &F) -> Result<Mat<F>, ProjError> {
        let n = self.n;
        let mut a = self.entries.clone();
        let mut inv = Mat::identity(field, n).entries;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r1, &r2| {
                    field.abs(&a[r1][col]).total_cmp(&field.abs(&a[r2][col]))
                })
                .unwrap();
            if field.is_zero(&a[pivot][col]) {
                return Err(ProjError::SingularAtPrecision);
            }
            a.swap(col, pivot);
            inv.swap(col, pivot);
            let p = a[col][col].clone();
            for j in 0..n {
                a[col][j] = field.div(&a[col][j], &p);
                inv[col][j] = field.div(&inv[col][j], &p);
            }
            for r in 0..n {
                if r != col {
                    let f = a[r][col].clone();
                    for j in 0..n {
                        let av = field.mul(&a[col][j], &f);
                        a[r][j] = field.sub(&a[r][j], &av);
                        let iv = field.mul(&inv[col][j], &f);
                        inv[r][j] = field.sub(&inv[r][j], &iv);
                    }
                }
            }
        }
        Ok(Mat { n, entries: inv })
    }

    pub fn pow(&self, field: &F, k: i64) -> Result<Mat<F>, ProjError> {
        let base = if k < 0 { self.inverse(field)? } else { self.clone() };
        let mut out = Mat::identity(field, self.n);
        for _ in 0..k.unsigned_abs() {
            out = out.mul(field, &base);
        }
        Ok(out)
    }

    /// Whether the matrix is a scalar multiple of the identity at working
    /// precision.
    pub fn is_scalar(&self, field: &F) -> bool {
        let diag = &self.entries[0][0];
        if field.is_zero(diag) {
            return false;
        }
        for i in 0..self.n {
            for j in 0..self.n {
                if i == j {
                    if !field.is_zero(&field.sub(&self.entries[i][i], diag)) {
                        return false;
                    }
                } else if !field.is_zero(&self.entries[i][j]) {
                    return false;
                }
            }
        }
        true
    }
}

/// Rank of a rectangular system of row vectors at working precision.
pub fn rank_at_precision<F: ValuedField>(field: &F, rows: &[Vec<F::Elem>]) -> usize {
    let mut a: Vec<Vec<F::Elem>> = rows.to_vec();
    let m = a.len();
    if m == 0 {
        return 0;
    }
    let n = a[0].len();
    let mut rank = 0;
    let mut col = 0;
    while rank < m && col < n {
        let pivot = (rank..m)
            .max_by(|&r1, &r2| field.abs(&a[r1][col]).total_cmp(&field.abs(&a[r2][col])))
            .unwrap();
        if field.is_zero(&a[pivot][col]) {
            col += 1;
            continue;
        }
        a.swap(rank, pivot);
        let p = a[rank][col].clone();
        for r in rank + 1..m {
            let f = field.div(&a[r][col], &p);
            for j in col..n {
                let v = field.mul(&a[rank][j], &f);
                a[r][j] = field.sub(&a[r][j], &v);
            }
        }
        rank += 1;
        col += 1;
    }
    rank
}

/// Cartan data plus the attracting/repelling directions it determines:
/// `|a_1| >= ... >= |a_n|`, the image of the top direction (first column of
/// the left factor) and the dual functional cutting out the hyperplane
/// spanned by the remaining right directions (first row of the right
/// factor).
#[derive(Clone, Debug)]
pub struct CartanFull<F: ValuedField> {
    pub abs_values: Vec<f64>,
    pub top_direction: Vec<F::Elem>,
    pub dual_functional: Vec<F::Elem>,
}

/// Fields supporting a Cartan decomposition.
pub trait CartanField: ValuedField + Sized {
    fn cartan_full(&self, g: &Mat<Self>) -> Result<CartanFull<Self>, ProjError>;
}

impl CartanField for RealField {
    fn cartan_full(&self, g: &Mat<RealField>) -> Result<CartanFull<RealField>, ProjError> {
        let n = g.n;
        let m = DMatrix::from_fn(n, n, |i, j| g.entries[i][j]);
        let svd = m.svd(true, true);
        let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        // Only the zero matrix has no Cartan data: the top direction and the
        // gap |a2/a1| stay meaningful at arbitrary condition numbers, and
        // actual inversion failures are reported by `inverse` itself.
        if !(sv.first().copied().unwrap_or(0.0) > 0.0) {
            return Err(ProjError::SingularAtPrecision);
        }
        let u = svd.u.as_ref().expect("u requested");
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let top: Vec<f64> = (0..n).map(|i| u[(i, 0)]).collect();
        let dual: Vec<f64> = (0..n).map(|j| vt[(0, j)]).collect();
        Ok(CartanFull { abs_values: sv, top_direction: top, dual_functional: dual })
    }
}

impl CartanField for PadicField {
    fn cartan_full(&self, g: &Mat<PadicField>) -> Result<CartanFull<PadicField>, ProjError> {
        // Exact elimination with minimal-valuation pivots: g = L D R with
        // L, R in GL_n(Z_p) (entries of absolute value <= 1, unit
        // determinant) and D diagonal. Row operations accumulate into L,
        // column operations into R, keeping g = L * A * R throughout.
        let n = g.n;
        let mut a = g.entries.clone();
        let mut l = Mat::<PadicField>::identity(self, n).entries;
        let mut r = Mat::<PadicField>::identity(self, n).entries;
        for k in 0..n {
            // Pivot of maximal absolute value in the trailing block.
            let mut best = (k, k);
            let mut best_abs = -1.0;
            for i in k..n {
                for j in k..n {
                    let ab = self.abs(&a[i][j]);
                    if ab > best_abs {
                        best_abs = ab;
                        best = (i, j);
                    }
                }
            }
            if self.is_zero(&a[best.0][best.1]) {
                return Err(ProjError::SingularAtPrecision);
            }
            // Row swap k <-> best.0: A <- P A, L <- L P.
            a.swap(k, best.0);
            for row in l.iter_mut() {
                row.swap(k, best.0);
            }
            // Column swap k <-> best.1: A <- A P, R <- P R.
            for row in a.iter_mut() {
                row.swap(k, best.1);
            }
            r.swap(k, best.1);
            let pivot = a[k][k].clone();
            // Eliminate below: A <- E A with E = I - f e_i e_k^T, so
            // L <- L E^{-1} adds f * (column i of L) onto column k... the
            // inverse elementary matrix adds f back, acting on columns of L.
            for i in k + 1..n {
                let f = &a[i][k] / &pivot;
                if f.eq(&num::Zero::zero()) {
                    continue;
                }
                for j in 0..n {
                    let sub = &f * &a[k][j];
                    a[i][j] = &a[i][j] - sub;
                    let add = &f * &l[j][i];
                    l[j][k] = &l[j][k] + add;
                }
            }
            // Eliminate to the right: A <- A E', R <- E'^{-1} R.
            for j in k + 1..n {
                let f = &a[k][j] / &pivot;
                if f.eq(&num::Zero::zero()) {
                    continue;
                }
                for i in 0..n {
                    let sub = &f * &a[i][k];
                    a[i][j] = &a[i][j] - sub;
                    let add = &f * &r[j][i];
                    r[k][i] = &r[k][i] + add;
                }
            }
        }
        // Sort the diagonal by decreasing absolute value via a permutation
        // applied symmetrically: g = (L P^T)(P D P^T)(P R).
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| self.abs(&a[j][j]).total_cmp(&self.abs(&a[i][i])));
        let abs_values: Vec<f64> = order.iter().map(|&i| self.abs(&a[i][i])).collect();
        let top: Vec<BigRational> = (0..n).map(|i| l[i][order[0]].clone()).collect();
        let dual: Vec<BigRational> = (0..n).map(|j| r[order[0]][j].clone()).collect();
        Ok(CartanFull { abs_values, top_direction: top, dual_functional: dual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rmat(rows: &[&[f64]]) -> Mat<RealField> {
        Mat {
            n: rows.len(),
            entries: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    #[test]
    fn real_cartan() {
        let f = RealField::default();
        let c = f.cartan_full(&Mat::identity(&f, 2)).unwrap();
        assert!((c.abs_values[0] - 1.0).abs() < 1e-12);
        assert!((c.abs_values[1] - 1.0).abs() < 1e-12);
        let c = f.cartan_full(&rmat(&[&[10.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert!((c.abs_values[0] - 10.0).abs() < 1e-9);
        assert!((c.abs_values[1] - 1.0).abs() < 1e-9);
        assert!(c.top_direction[0].abs() > 0.99); // direction e1
        assert!(c.dual_functional[0].abs() > 0.99);
        // Rank-1 maps still have Cartan data (top value 2, bottom 0); only
        // the zero matrix has none.
        let c = f.cartan_full(&rmat(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert!((c.abs_values[0] - 2.0).abs() < 1e-9);
        assert!(c.abs_values[1].abs() < 1e-9);
        assert!(f.cartan_full(&rmat(&[&[0.0, 0.0], &[0.0, 0.0]])).is_err());
    }

    #[test]
    fn padic_cartan() {
        let f = PadicField::new(5, 12);
        let g = Mat::from_rationals(
            &f,
            &[
                vec![rat(25, 1), rat(0, 1), rat(0, 1)],
                vec![rat(0, 1), rat(1, 1), rat(0, 1)],
                vec![rat(0, 1), rat(0, 1), rat(1, 25)],
            ],
        );
        let c = f.cartan_full(&g).unwrap();
        // |25| = 1/25 and |1/25| = 25, so the dominant direction is e3.
        assert_eq!(c.abs_values, vec![25.0, 1.0, 1.0 / 25.0]);
        assert_eq!(f.abs(&c.top_direction[2]), 1.0);
        assert!(f.is_zero(&c.top_direction[0]) && f.is_zero(&c.top_direction[1]));
        // Cartan invariance under an integral unimodular factor.
        let u = Mat::from_rationals(
            &f,
            &[
                vec![rat(1, 1), rat(2, 1), rat(0, 1)],
                vec![rat(0, 1), rat(1, 1), rat(3, 1)],
                vec![rat(0, 1), rat(0, 1), rat(1, 1)],
            ],
        );
        let c2 = f.cartan_full(&u.mul(&f, &g)).unwrap();
        assert_eq!(c2.abs_values, c.abs_values);
    }

    #[test]
    fn padic_cartan_factors_are_consistent() {
        // For a dense matrix, check |det| equals the product of the Cartan
        // values (both factors are norm-preserving).
        let f = PadicField::new(5, 20);
        let g = Mat::from_rationals(
            &f,
            &[vec![rat(5, 1), rat(3, 1)], vec![rat(1, 1), rat(10, 1)]],
        );
        let c = f.cartan_full(&g).unwrap();
        let det = &g.entries[0][0] * &g.entries[1][1] - &g.entries[0][1] * &g.entries[1][0];
        let prod: f64 = c.abs_values.iter().product();
        assert!((f.abs(&det) - prod).abs() < 1e-12);
    }

    #[test]
    fn inverse_and_rank() {
        let f = RealField::default();
        let g = rmat(&[&[2.0, 1.0], &[1.0, 1.0]]);
        let inv = g.inverse(&f).unwrap();
        assert!(g.mul(&f, &inv).is_scalar(&f));
        assert_eq!(
            rank_at_precision(&f, &[vec![1.0, 2.0], vec![2.0, 4.0]]),
            1
        );
        assert_eq!(
            rank_at_precision(&f, &[vec![1.0, 0.0], vec![0.0, 1.0]]),
            2
        );
        let pf = PadicField::new(5, 12);
        let g = Mat::from_rationals(&pf, &[vec![rat(1, 5), rat(1, 1)], vec![rat(0, 1), rat(5, 1)]]);
        let inv = g.inverse(&pf).unwrap();
        assert!(g.mul(&pf, &inv).is_scalar(&pf));
    }

    #[test]
    fn powers() {
        let f = RealField::default();
        let g = rmat(&[&[2.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(g.pow(&f, 3).unwrap().entries[0][0], 8.0);
        let gi = g.pow(&f, -1).unwrap();
        assert!((gi.entries[0][0] - 0.5).abs() < 1e-12);
    }
}
