//! Points and hyperplanes of `P(K^n)` with the standard metric
//! `d([v],[w]) = ||v ^ w|| / (||v|| ||w||)` and its dual companions.

use super::field::ValuedField;
use super::linalg::{Mat, ProjError};

/// A projective point, stored as a normalized coordinate vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjPoint<F: ValuedField> {
    pub coords: Vec<F::Elem>,
}

/// A projective hyperplane `ker f`, stored as a normalized functional.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjHyperplane<F: ValuedField> {
    pub functional: Vec<F::Elem>,
}

impl<F: ValuedField> ProjPoint<F> {
    pub fn new(field: &F, coords: &[F::Elem]) -> Self {
        ProjPoint { coords: field.normalize_vec(coords) }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl<F: ValuedField> ProjHyperplane<F> {
    pub fn new(field: &F, functional: &[F::Elem]) -> Self {
        ProjHyperplane { functional: field.normalize_vec(functional) }
    }

    /// The hyperplane's dual point (same coordinates read covariantly).
    pub fn dual_point(&self) -> ProjPoint<F> {
        ProjPoint { coords: self.functional.clone() }
    }

    /// In `P^1` a hyperplane is a single point: the kernel of `(f1, f2)` is
    /// spanned by `(f2, -f1)`.
    pub fn kernel_point(&self, field: &F) -> ProjPoint<F> {
        assert_eq!(self.functional.len(), 2, "kernel_point requires n = 2");
        ProjPoint::new(
            field,
            &[self.functional[1].clone(), field.neg(&self.functional[0])],
        )
    }
}

/// Norm of the wedge `v ^ w`: the vector of all 2x2 minors.
fn wedge_norm<F: ValuedField>(field: &F, v: &[F::Elem], w: &[F::Elem]) -> f64 {
    let n = v.len();
    let mut minors = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            minors.push(field.sub(
                &field.mul(&v[i], &w[j]),
                &field.mul(&v[j], &w[i]),
            ));
        }
    }
    field.vec_norm(&minors)
}

/// The standard projective metric `||v ^ w|| / (||v|| ||w||)`.
pub fn proj_dist<F: ValuedField>(field: &F, p: &ProjPoint<F>, q: &ProjPoint<F>) -> f64 {
    assert_eq!(p.dim(), q.dim());
    wedge_norm(field, &p.coords, &q.coords)
        / (field.vec_norm(&p.coords) * field.vec_norm(&q.coords))
}

/// `d([v], ker f) = |f(v)| / (||f|| ||v||)`.
pub fn dist_point_hyperplane<F: ValuedField>(
    field: &F,
    p: &ProjPoint<F>,
    h: &ProjHyperplane<F>,
) -> f64 {
    assert_eq!(p.dim(), h.functional.len());
    let mut acc = field.zero();
    for (a, b) in h.functional.iter().zip(&p.coords) {
        acc = field.add(&acc, &field.mul(a, b));
    }
    field.abs(&acc) / (field.vec_norm(&h.functional) * field.vec_norm(&p.coords))
}

/// Hausdorff distance between hyperplanes: the projective distance of the
/// dual points, `||f ^ h||` on normalized functionals.
pub fn hausdorff_dist<F: ValuedField>(
    field: &F,
    h1: &ProjHyperplane<F>,
    h2: &ProjHyperplane<F>,
) -> f64 {
    proj_dist(field, &h1.dual_point(), &h2.dual_point())
}

/// Image of a point under a projective map.
pub fn apply_point<F: ValuedField>(field: &F, g: &Mat<F>, p: &ProjPoint<F>) -> ProjPoint<F> {
    ProjPoint::new(field, &g.apply(field, &p.coords))
}

/// Image of a hyperplane: `g(ker f) = ker(f compose g^{-1})`, i.e. the
/// functional transforms by the inverse transpose.
pub fn apply_hyperplane<F: ValuedField>(
    field: &F,
    g: &Mat<F>,
    h: &ProjHyperplane<F>,
) -> Result<ProjHyperplane<F>, ProjError> {
    let it = g.inverse(field)?.transpose();
    Ok(ProjHyperplane::new(field, &it.apply(field, &h.functional)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projdyn::field::{PadicField, RealField};
    use num::rational::BigRational;

    fn rp(field: &RealField, v: &[f64]) -> ProjPoint<RealField> {
        ProjPoint::new(field, v)
    }

    #[test]
    fn real_distances() {
        let f = RealField::default();
        let e1 = rp(&f, &[1.0, 0.0]);
        let e2 = rp(&f, &[0.0, 1.0]);
        assert!((proj_dist(&f, &e1, &e2) - 1.0).abs() < 1e-12);
        assert!(proj_dist(&f, &e1, &e1) < 1e-12);
        let diag = rp(&f, &[1.0, 1.0]);
        assert!((proj_dist(&f, &diag, &e1) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        // point vs hyperplane in P^1
        let h_x2 = ProjHyperplane::new(&f, &[0.0, 1.0]); // ker x2 = [1:0]
        assert!(dist_point_hyperplane(&f, &e1, &h_x2) < 1e-12);
        let h_x1 = ProjHyperplane::new(&f, &[1.0, 0.0]);
        assert!((dist_point_hyperplane(&f, &e1, &h_x1) - 1.0).abs() < 1e-12);
        // duality: Hausdorff distance equals projective distance of duals
        assert!((hausdorff_dist(&f, &h_x1, &h_x2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn padic_distances_are_ultrametric() {
        let f = PadicField::new(5, 12);
        let r = |p: i64, q: i64| BigRational::new(p.into(), q.into());
        let a = ProjPoint::new(&f, &[r(1, 1), r(5, 1)]);
        let b = ProjPoint::new(&f, &[r(1, 1), r(0, 1)]);
        let c = ProjPoint::new(&f, &[r(1, 1), r(25, 1)]);
        let dab = proj_dist(&f, &a, &b);
        let dbc = proj_dist(&f, &b, &c);
        let dac = proj_dist(&f, &a, &c);
        assert_eq!(dab, 1.0 / 5.0);
        assert_eq!(dbc, 1.0 / 25.0);
        assert!(dac <= dab.max(dbc) + 1e-15);
    }

    #[test]
    fn hyperplane_transport() {
        let f = RealField::default();
        let g = Mat { n: 2, entries: vec![vec![0.0, -1.0], vec![1.0, 0.0]] }; // rotation
        let h = ProjHyperplane::new(&f, &[0.0, 1.0]); // the point [1:0]
        let gh = apply_hyperplane(&f, &g, &h).unwrap();
        // rotation sends [1:0] to [0:1], whose functional is (1, 0)
        assert!(dist_point_hyperplane(&f, &rp(&f, &[0.0, 1.0]), &gh) < 1e-12);
    }
}
