//! Truncated-Taylor (jet) arithmetic to third order.
//!
//! A [`Jet`] carries a value together with all mixed partial derivatives up
//! to order three with respect to `dim` seed variables. Arithmetic and the
//! elementary functions propagate derivatives exactly (no finite
//! differences), so every curvature formula downstream is exact to rounding.
//!
//! The scalar type is generic: `Jet<f64>` is the ordinary third-order jet,
//! while `Jet<Jet<f64>>` differentiates quantities that are themselves
//! computed through jets (mean curvature, drift Laplacians of derived
//! fields, ...).

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar ring with the elementary functions the expression language needs.
pub trait Real:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    /// Leading (0-th order) value, used for domain checks and comparisons.
    fn re(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    /// Power with a constant real exponent. Caller guarantees a positive base.
    fn powf(&self, a: f64) -> Self;
    /// Integer power, valid for any base.
    fn powi(&self, n: i32) -> Self {
        let mut r = Self::from_f64(1.0);
        let mut b = if n < 0 {
            Self::from_f64(1.0) / self.clone()
        } else {
            self.clone()
        };
        let mut e = n.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                r = r * b.clone();
            }
            b = b.clone() * b;
            e >>= 1;
        }
        r
    }
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn scale(&self, a: f64) -> Self {
        self.clone() * Self::from_f64(a)
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powf(&self, a: f64) -> Self {
        f64::powf(*self, a)
    }
}

/// Value plus exact mixed partials to order three at a point.
///
/// Storage is the full (redundant) multi-index layout: `d2[i*dim+j]` and
/// `d3[(i*dim+j)*dim+k]`. Symmetry holds by construction because every
/// operation below is symmetric in the derivative indices.
#[derive(Clone, Debug)]
pub struct Jet<T> {
    pub dim: usize,
    pub val: T,
    pub d1: Vec<T>,
    pub d2: Vec<T>,
    pub d3: Vec<T>,
}

/// Third-order jet over plain floats: the `Jet3` of the public API.
pub type Jet3 = Jet<f64>;

impl<T: Real> Jet<T> {
    pub fn constant(dim: usize, v: T) -> Self {
        Jet {
            dim,
            val: v,
            d1: vec![T::zero(); dim],
            d2: vec![T::zero(); dim * dim],
            d3: vec![T::zero(); dim * dim * dim],
        }
    }

    /// Seed for the `i`-th coordinate variable.
    pub fn variable(dim: usize, i: usize, v: T) -> Self {
        assert!(i < dim);
        let mut j = Self::constant(dim, v);
        j.d1[i] = T::one();
        j
    }

    #[inline]
    pub fn g(&self, i: usize) -> &T {
        &self.d1[i]
    }
    #[inline]
    pub fn h(&self, i: usize, j: usize) -> &T {
        &self.d2[i * self.dim + j]
    }
    #[inline]
    pub fn t(&self, i: usize, j: usize, k: usize) -> &T {
        &self.d3[(i * self.dim + j) * self.dim + k]
    }

    /// Chain rule through a scalar function with derivative values
    /// `c0..c3` at `self.val`.
    fn compose(&self, c0: T, c1: T, c2: T, c3: T) -> Self {
        let d = self.dim;
        let mut out = Jet::constant(d, c0);
        for i in 0..d {
            out.d1[i] = c1.clone() * self.d1[i].clone();
        }
        for i in 0..d {
            for j in 0..d {
                out.d2[i * d + j] = c1.clone() * self.h(i, j).clone()
                    + c2.clone() * self.d1[i].clone() * self.d1[j].clone();
            }
        }
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let sym2 = self.h(i, j).clone() * self.d1[k].clone()
                        + self.h(i, k).clone() * self.d1[j].clone()
                        + self.h(j, k).clone() * self.d1[i].clone();
                    out.d3[(i * d + j) * d + k] = c1.clone() * self.t(i, j, k).clone()
                        + c2.clone() * sym2
                        + c3.clone() * self.d1[i].clone() * self.d1[j].clone() * self.d1[k].clone();
                }
            }
        }
        out
    }

    fn zip(&self, rhs: &Self, f: impl Fn(&T, &T) -> T) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        Jet {
            dim: self.dim,
            val: f(&self.val, &rhs.val),
            d1: self.d1.iter().zip(&rhs.d1).map(|(a, b)| f(a, b)).collect(),
            d2: self.d2.iter().zip(&rhs.d2).map(|(a, b)| f(a, b)).collect(),
            d3: self.d3.iter().zip(&rhs.d3).map(|(a, b)| f(a, b)).collect(),
        }
    }

    fn recip(&self) -> Self {
        let t = self.val.clone();
        let c0 = T::one() / t;
        let c1 = -(c0.clone() * c0.clone());
        let c2 = c0.clone() * c0.clone() * c0.clone().scale(2.0);
        let c3 = -(c0.clone() * c0.clone() * c0.clone() * c0.clone().scale(6.0));
        self.compose(c0, c1, c2, c3)
    }
}

/// Bring two jets to a common dimension, lifting dimension-0 constants.
fn align<T: Real>(a: Jet<T>, b: Jet<T>) -> (Jet<T>, Jet<T>) {
    if a.dim == b.dim {
        (a, b)
    } else if a.dim == 0 {
        let d = b.dim;
        (lift(a, d), b)
    } else {
        let d = a.dim;
        (a, lift(b, d))
    }
}

impl<T: Real> Add for Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: Self) -> Self {
        let (a, b) = align(self, rhs);
        a.zip(&b, |a, b| a.clone() + b.clone())
    }
}

impl<T: Real> Sub for Jet<T> {
    type Output = Jet<T>;
    fn sub(self, rhs: Self) -> Self {
        let (a, b) = align(self, rhs);
        a.zip(&b, |a, b| a.clone() - b.clone())
    }
}

impl<T: Real> Neg for Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Self {
        Jet {
            dim: self.dim,
            val: -self.val,
            d1: self.d1.into_iter().map(|a| -a).collect(),
            d2: self.d2.into_iter().map(|a| -a).collect(),
            d3: self.d3.into_iter().map(|a| -a).collect(),
        }
    }
}

impl<T: Real> Mul for Jet<T> {
    type Output = Jet<T>;
    /// Leibniz product through order three.
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = align(self, rhs);
        let d = a.dim;
        let (u, v) = (&a, &b);
        let mut out = Jet::constant(d, u.val.clone() * v.val.clone());
        for i in 0..d {
            out.d1[i] = u.d1[i].clone() * v.val.clone() + u.val.clone() * v.d1[i].clone();
        }
        for i in 0..d {
            for j in 0..d {
                out.d2[i * d + j] = u.h(i, j).clone() * v.val.clone()
                    + u.d1[i].clone() * v.d1[j].clone()
                    + u.d1[j].clone() * v.d1[i].clone()
                    + u.val.clone() * v.h(i, j).clone();
            }
        }
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    out.d3[(i * d + j) * d + k] = u.t(i, j, k).clone() * v.val.clone()
                        + u.h(i, j).clone() * v.d1[k].clone()
                        + u.h(i, k).clone() * v.d1[j].clone()
                        + u.h(j, k).clone() * v.d1[i].clone()
                        + u.d1[i].clone() * v.h(j, k).clone()
                        + u.d1[j].clone() * v.h(i, k).clone()
                        + u.d1[k].clone() * v.h(i, j).clone()
                        + u.val.clone() * v.t(i, j, k).clone();
                }
            }
        }
        out
    }
}

impl<T: Real> Div for Jet<T> {
    type Output = Jet<T>;
    fn div(self, rhs: Self) -> Self {
        let r = rhs.recip();
        self * r
    }
}

impl<T: Real> Real for Jet<T> {
    fn from_f64(x: f64) -> Self {
        // Dimension 0 constants act as scalars; `lift` fixes them up when
        // they meet a dimensioned jet.
        Jet {
            dim: 0,
            val: T::from_f64(x),
            d1: vec![],
            d2: vec![],
            d3: vec![],
        }
    }
    fn re(&self) -> f64 {
        self.val.re()
    }
    fn sin(&self) -> Self {
        let t = &self.val;
        self.compose(t.sin(), t.cos(), -t.sin(), -t.cos())
    }
    fn cos(&self) -> Self {
        let t = &self.val;
        self.compose(t.cos(), -t.sin(), -t.cos(), t.sin())
    }
    fn exp(&self) -> Self {
        let e = self.val.exp();
        self.compose(e.clone(), e.clone(), e.clone(), e)
    }
    fn ln(&self) -> Self {
        let t = &self.val;
        let inv = T::one() / t.clone();
        let inv2 = inv.clone() * inv.clone();
        self.compose(t.ln(), inv.clone(), -inv2.clone(), inv2 * inv.scale(2.0))
    }
    fn sqrt(&self) -> Self {
        let t = &self.val;
        let c0 = t.sqrt();
        let inv = T::one() / c0.clone();
        let invt = T::one() / t.clone();
        self.compose(
            c0,
            inv.clone().scale(0.5),
            (inv.clone() * invt.clone()).scale(-0.25),
            (inv * invt.clone() * invt).scale(0.375),
        )
    }
    fn powf(&self, a: f64) -> Self {
        let t = &self.val;
        let c0 = t.powf(a);
        let invt = T::one() / t.clone();
        let c1 = (c0.clone() * invt.clone()).scale(a);
        let c2 = (c1.clone() * invt.clone()).scale(a - 1.0);
        let c3 = (c2.clone() * invt).scale(a - 2.0);
        self.compose(c0, c1, c2, c3)
    }
}

/// Promote a dimension-0 constant jet to dimension `dim` so binary ops line up.
pub fn lift<T: Real>(j: Jet<T>, dim: usize) -> Jet<T> {
    if j.dim == dim {
        j
    } else {
        assert_eq!(j.dim, 0, "dimension mismatch in jet arithmetic");
        Jet::constant(dim, j.val)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn polynomial_derivatives() {
        // f = x^2 / 2 at x = 2
        let x = Jet3::variable(1, 0, 2.0);
        let f = x.clone() * x * Jet::constant(1, 0.5);
        close(f.val, 2.0);
        close(f.d1[0], 2.0);
        close(f.d2[0], 1.0);
        close(f.d3[0], 0.0);
    }

    #[test]
    fn sine_third_order() {
        let x = Jet3::variable(1, 0, 0.0);
        let f = x.sin();
        close(f.val, 0.0);
        close(f.d1[0], 1.0);
        close(f.d2[0], 0.0);
        close(f.d3[0], -1.0);
    }

    #[test]
    fn exp_product_mixed_partial() {
        // exp(x*y) at (1,1): d/dx = e, d2/dxdy = 2e
        let x = Jet3::variable(2, 0, 1.0);
        let y = Jet3::variable(2, 1, 1.0);
        let f = (x * y).exp();
        let e = std::f64::consts::E;
        close(f.val, e);
        close(*f.g(0), e);
        close(*f.h(0, 1), 2.0 * e);
        close(*f.h(1, 0), 2.0 * e);
    }

    #[test]
    fn nested_jet_second_derivative_of_derived_quantity() {
        // H(x) = derivative of x^3 computed one level down, differentiated
        // again at the outer level. Checks that Jet<Jet<f64>> nests.
        let outer = Jet3::variable(1, 0, 2.0);
        let x: Jet<Jet3> = Jet::variable(1, 0, outer);
        let f = x.clone() * x.clone() * x;
        // d/dx(x^3) = 12 at x=2, and its own derivative 6x = 12, second 6.
        let inner = &f.d1[0];
        close(inner.val, 12.0);
        close(inner.d1[0], 12.0);
        close(inner.d2[0], 6.0);
    }

    #[test]
    fn division_and_powers() {
        let x = Jet3::variable(1, 0, 3.0);
        let f = Jet::constant(1, 1.0) / x.clone();
        close(f.val, 1.0 / 3.0);
        close(f.d1[0], -1.0 / 9.0);
        close(f.d2[0], 2.0 / 27.0);
        close(f.d3[0], -6.0 / 81.0);
        let g = x.clone().powi(-2);
        close(g.val, 1.0 / 9.0);
        close(g.d1[0], -2.0 / 27.0);
        let h = x.powf(1.5);
        close(h.val, 3.0f64.powf(1.5));
        close(h.d1[0], 1.5 * 3.0f64.powf(0.5));
    }
}
