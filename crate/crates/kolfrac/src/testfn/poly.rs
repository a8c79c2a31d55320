//! Sparse multi-index polynomials in a handful of variables.
//!
//! Coefficients are keyed by exponent vectors of fixed length `dim`. The
//! total degree is capped at [`MAX_DEGREE`] so that Gaussian moment formulas
//! stay exact with a short double-factorial table.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest total degree representable in the closed function class.
pub const MAX_DEGREE: usize = 6;

/// `E[z^k]` for a standard normal, `k` even: `(k-1)!! = 1, 1, 3, 15, ...`
fn standard_moment(k: u8) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut m = 1.0;
    let mut j = 1.0;
    for _ in 0..(k / 2) {
        m *= 2.0 * j - 1.0;
        j += 1.0;
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiPoly {
    dim: usize,
    coeffs: BTreeMap<Vec<u8>, f64>,
}

impl MultiPoly {
    pub fn zero(dim: usize) -> Self {
        MultiPoly {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = MultiPoly::zero(dim);
        if c != 0.0 {
            p.coeffs.insert(vec![0; dim], c);
        }
        p
    }

    /// Single monomial `c * x^exps`.
    pub fn monomial(dim: usize, exps: &[u8], c: f64) -> Result<Self> {
        if exps.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: exps.len(),
            });
        }
        let total: usize = exps.iter().map(|&e| e as usize).sum();
        if total > MAX_DEGREE {
            return Err(Error::UnsupportedKind(format!(
                "monomial degree {total} exceeds cap {MAX_DEGREE}"
            )));
        }
        let mut p = MultiPoly::zero(dim);
        if c != 0.0 {
            p.coeffs.insert(exps.to_vec(), c);
        }
        Ok(p)
    }

    /// The coordinate variable `x_i`.
    pub fn var(dim: usize, i: usize) -> Self {
        let mut exps = vec![0u8; dim];
        exps[i] = 1;
        MultiPoly::monomial(dim, &exps, 1.0).expect("degree 1 is within cap")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.coeffs
            .keys()
            .map(|e| e.iter().map(|&x| x as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u8>, &f64)> {
        self.coeffs.iter()
    }

    fn insert(&mut self, exps: Vec<u8>, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.coeffs.entry(exps) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let total = *o.get() + c;
                if total == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = total;
                }
            }
        }
    }

    pub fn add(&self, other: &MultiPoly) -> MultiPoly {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (e, &c) in &other.coeffs {
            out.insert(e.clone(), c);
        }
        out
    }

    pub fn scale(&self, a: f64) -> MultiPoly {
        if a == 0.0 {
            return MultiPoly::zero(self.dim);
        }
        MultiPoly {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|(e, &c)| (e.clone(), c * a)).collect(),
        }
    }

    pub fn mul(&self, other: &MultiPoly) -> Result<MultiPoly> {
        debug_assert_eq!(self.dim, other.dim);
        if self.degree() + other.degree() > MAX_DEGREE {
            return Err(Error::UnsupportedKind(format!(
                "polynomial product degree {} exceeds cap {MAX_DEGREE}",
                self.degree() + other.degree()
            )));
        }
        let mut out = MultiPoly::zero(self.dim);
        for (ea, &ca) in &self.coeffs {
            for (eb, &cb) in &other.coeffs {
                let exps: Vec<u8> = ea.iter().zip(eb).map(|(&a, &b)| a + b).collect();
                out.insert(exps, ca * cb);
            }
        }
        Ok(out)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.coeffs
            .iter()
            .map(|(e, &c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&k, &xi)| xi.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Partial derivative with respect to `x_i`.
    pub fn partial(&self, i: usize) -> MultiPoly {
        let mut out = MultiPoly::zero(self.dim);
        for (e, &c) in &self.coeffs {
            if e[i] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[i] -= 1;
            out.insert(d, c * e[i] as f64);
        }
        out
    }

    /// Fix the last variable to `value`, dropping a dimension.
    pub fn substitute_last(&self, value: f64) -> MultiPoly {
        assert!(self.dim >= 1);
        let mut out = MultiPoly::zero(self.dim - 1);
        for (e, &c) in &self.coeffs {
            let k = e[self.dim - 1];
            out.insert(e[..self.dim - 1].to_vec(), c * value.powi(k as i32));
        }
        out
    }

    /// Compose with the affine map `x = b + m z`, producing a polynomial in
    /// `z` with `m.ncols()` variables. Never raises the total degree.
    pub fn affine_compose(&self, m: &DMatrix<f64>, b: &DVector<f64>) -> MultiPoly {
        assert_eq!(m.nrows(), self.dim);
        assert_eq!(b.len(), self.dim);
        let zdim = m.ncols();
        // Linear forms l_i(z) and their powers up to the max exponent used.
        let mut max_exp = vec![0u8; self.dim];
        for e in self.coeffs.keys() {
            for (mx, &k) in max_exp.iter_mut().zip(e) {
                *mx = (*mx).max(k);
            }
        }
        let powers: Vec<Vec<MultiPoly>> = (0..self.dim)
            .map(|i| {
                let mut lin = MultiPoly::constant(zdim, b[i]);
                for j in 0..zdim {
                    lin = lin.add(&MultiPoly::var(zdim, j).scale(m[(i, j)]));
                }
                let mut pows = vec![MultiPoly::constant(zdim, 1.0)];
                for k in 1..=max_exp[i] as usize {
                    let next = pows[k - 1]
                        .mul(&lin)
                        .expect("compose preserves total degree");
                    pows.push(next);
                }
                pows
            })
            .collect();

        let mut out = MultiPoly::zero(zdim);
        for (e, &c) in &self.coeffs {
            let mut term = MultiPoly::constant(zdim, c);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term = term
                        .mul(&powers[i][k as usize])
                        .expect("compose preserves total degree");
                }
            }
            out = out.add(&term);
        }
        out
    }

    /// `E[p(z)]` for `z ~ N(0, I)`.
    pub fn standard_gaussian_moment(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(e, &c)| c * e.iter().map(|&k| standard_moment(k)).product::<f64>())
            .sum()
    }

    /// `E[p(y)]` for `y ~ N(mean, cov)` given a factor `l` with `l l^T = cov`.
    pub fn gaussian_moment(&self, mean: &DVector<f64>, l: &DMatrix<f64>) -> f64 {
        self.affine_compose(l, mean).standard_gaussian_moment()
    }

    /// `E_z[p(c + l z)]` as a polynomial in `c` (Gaussian blur with
    /// covariance `l l^T`). Used by the symbolic semigroup image.
    pub fn gaussian_blur(&self, l: &DMatrix<f64>) -> MultiPoly {
        let d = self.dim;
        // x = [I | l] (c, z): compose into 2d variables, then contract the
        // z block with standard moments.
        let mut m = DMatrix::zeros(d, 2 * d);
        for i in 0..d {
            m[(i, i)] = 1.0;
            for j in 0..d {
                m[(i, d + j)] = l[(i, j)];
            }
        }
        let wide = self.affine_compose(&m, &DVector::zeros(d));
        let mut out = MultiPoly::zero(d);
        for (e, &c) in &wide.coeffs {
            let factor: f64 = e[d..].iter().map(|&k| standard_moment(k)).product();
            if factor != 0.0 {
                out.insert(e[..d].to_vec(), c * factor);
            }
        }
        out
    }
}
