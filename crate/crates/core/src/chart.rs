//! Coordinate-chart calculus, generic over the scalar ring.
//!
//! Every function here works for `T = f64`, `T = Jet<f64>`, or deeper
//! nestings. Evaluating a formula at `Jet<T>`-seeded coordinates yields its
//! chart derivatives, which is how second derivatives of derived quantities
//! (mean curvature, drift Laplacians of composite fields) are obtained
//! without finite differences.

use crate::exprlang::{EvalError, Expr};
use crate::jet::{lift, Jet, Real};

/// A scalar function of chart coordinates evaluable in any scalar ring.
pub trait ScalarField {
    fn value<T: Real>(&self, p: &[T]) -> Result<T, EvalError>;

    /// Third-order jet of the field at `p` (coordinates seeded).
    fn jet<T: Real>(&self, p: &[T]) -> Result<Jet<T>, EvalError>
    where
        Self: Sized,
    {
        let d = p.len();
        Ok(lift(self.value(&seed(p))?, d))
    }
}

impl ScalarField for Expr {
    fn value<T: Real>(&self, p: &[T]) -> Result<T, EvalError> {
        self.eval(p)
    }
}

impl<F: ScalarField> ScalarField for &F {
    fn value<T: Real>(&self, p: &[T]) -> Result<T, EvalError> {
        (*self).value(p)
    }
}

/// Symmetric metric tensor field on a chart.
pub trait MetricField {
    fn dim(&self) -> usize;
    /// Row-major `dim*dim` components at `p`.
    fn components<T: Real>(&self, p: &[T]) -> Result<Vec<T>, EvalError>;
}

impl<M: MetricField> MetricField for &M {
    fn dim(&self) -> usize {
        (*self).dim()
    }
    fn components<T: Real>(&self, p: &[T]) -> Result<Vec<T>, EvalError> {
        (*self).components(p)
    }
}

/// Seed chart coordinates as jet variables.
pub fn seed<T: Real>(p: &[T]) -> Vec<Jet<T>> {
    let d = p.len();
    (0..d).map(|i| Jet::variable(d, i, p[i].clone())).collect()
}

/// Determinant of a symmetric 1x1 or 2x2 matrix in row-major storage.
pub fn det_sym<T: Real>(d: usize, g: &[T]) -> T {
    match d {
        1 => g[0].clone(),
        2 => g[0].clone() * g[3].clone() - g[1].clone() * g[2].clone(),
        _ => panic!("det_sym: unsupported dimension {d}"),
    }
}

/// Inverse of a symmetric 1x1 or 2x2 matrix.
pub fn inv_sym<T: Real>(d: usize, g: &[T]) -> Vec<T> {
    match d {
        1 => vec![T::one() / g[0].clone()],
        2 => {
            let det = det_sym(2, g);
            vec![
                g[3].clone() / det.clone(),
                -(g[1].clone() / det.clone()),
                -(g[2].clone() / det.clone()),
                g[0].clone() / det,
            ]
        }
        _ => panic!("inv_sym: unsupported dimension {d}"),
    }
}

/// Metric components as jets at `p` (values plus chart derivatives).
pub fn metric_jets<T: Real, M: MetricField>(
    metric: &M,
    p: &[T],
) -> Result<Vec<Jet<T>>, EvalError> {
    let d = p.len();
    let comps = metric.components(&seed(p))?;
    Ok(comps.into_iter().map(|c| lift(c, d)).collect())
}

/// Christoffel symbols of the second kind; index `(k*d+i)*d+j` holds
/// `Gamma^k_{ij}`.
pub fn christoffel<T: Real, M: MetricField>(metric: &M, p: &[T]) -> Result<Vec<T>, EvalError> {
    let d = p.len();
    let gj = metric_jets(metric, p)?;
    let gvals: Vec<T> = gj.iter().map(|j| j.val.clone()).collect();
    let ginv = inv_sym(d, &gvals);
    let dg = |i: usize, j: usize, l: usize| gj[i * d + j].g(l).clone();
    let mut gamma = vec![T::zero(); d * d * d];
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut s = T::zero();
                for l in 0..d {
                    s = s + ginv[k * d + l].clone()
                        * (dg(l, j, i) + dg(i, l, j) - dg(i, j, l));
                }
                gamma[(k * d + i) * d + j] = s.scale(0.5);
            }
        }
    }
    Ok(gamma)
}

/// Ricci tensor `R_{ij}` from the coordinate formula (via jets of the
/// Christoffel symbols, i.e. second derivatives of the metric).
pub fn ricci<T: Real, M: MetricField>(metric: &M, p: &[T]) -> Result<Vec<T>, EvalError> {
    let d = p.len();
    let gamma_j = christoffel(metric, &seed(p))?;
    let gamma_j: Vec<Jet<T>> = gamma_j.into_iter().map(|g| lift(g, d)).collect();
    let gval = |k: usize, i: usize, j: usize| gamma_j[(k * d + i) * d + j].val.clone();
    let gder = |k: usize, i: usize, j: usize, l: usize| gamma_j[(k * d + i) * d + j].g(l).clone();
    let mut ric = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = T::zero();
            for k in 0..d {
                s = s + gder(k, i, j, k) - gder(k, i, k, j);
                for l in 0..d {
                    s = s + gval(k, k, l) * gval(l, i, j) - gval(k, j, l) * gval(l, i, k);
                }
            }
            ric[i * d + j] = s;
        }
    }
    Ok(ric)
}

/// Gradient (covariant components) and covariant Hessian of a scalar field.
pub fn grad_and_hessian<T: Real, M: MetricField, F: ScalarField>(
    metric: &M,
    f: &F,
    p: &[T],
) -> Result<(Vec<T>, Vec<T>), EvalError> {
    let d = p.len();
    let fj = f.jet(p)?;
    let gamma = christoffel(metric, p)?;
    let grad: Vec<T> = (0..d).map(|i| fj.g(i).clone()).collect();
    let mut hess = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = fj.h(i, j).clone();
            for k in 0..d {
                s = s - gamma[(k * d + i) * d + j].clone() * grad[k].clone();
            }
            hess[i * d + j] = s;
        }
    }
    Ok((grad, hess))
}

/// `g^{ij} u_i v_j` for covariant vectors `u`, `v`.
pub fn inner_co<T: Real>(d: usize, ginv: &[T], u: &[T], v: &[T]) -> T {
    let mut s = T::zero();
    for i in 0..d {
        for j in 0..d {
            s = s + ginv[i * d + j].clone() * u[i].clone() * v[j].clone();
        }
    }
    s
}

/// Trace of a covariant symmetric 2-tensor against the inverse metric.
pub fn trace_co<T: Real>(d: usize, ginv: &[T], a: &[T]) -> T {
    let mut s = T::zero();
    for i in 0..d {
        for j in 0..d {
            s = s + ginv[i * d + j].clone() * a[i * d + j].clone();
        }
    }
    s
}

/// Squared norm of a covariant symmetric 2-tensor: `g^{ik} g^{jl} a_{ij} a_{kl}`.
pub fn norm2_co2<T: Real>(d: usize, ginv: &[T], a: &[T]) -> T {
    let mut s = T::zero();
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    s = s + ginv[i * d + k].clone()
                        * ginv[j * d + l].clone()
                        * a[i * d + j].clone()
                        * a[k * d + l].clone();
                }
            }
        }
    }
    s
}

/// Laplace-Beltrami of `f` at `p`.
pub fn laplacian<T: Real, M: MetricField, F: ScalarField>(
    metric: &M,
    f: &F,
    p: &[T],
) -> Result<T, EvalError> {
    let d = p.len();
    let g = metric.components(p)?;
    let ginv = inv_sym(d, &g);
    let (_, hess) = grad_and_hessian(metric, f, p)?;
    Ok(trace_co(d, &ginv, &hess))
}

/// Drift Laplacian of `f` with weight `h` at `p`.
pub fn drift_laplacian<T: Real, M: MetricField, H: ScalarField, F: ScalarField>(
    metric: &M,
    weight: &H,
    f: &F,
    p: &[T],
) -> Result<T, EvalError> {
    let d = p.len();
    let g = metric.components(p)?;
    let ginv = inv_sym(d, &g);
    let (grad_f, hess_f) = grad_and_hessian(metric, f, p)?;
    let hj = weight.jet(p)?;
    let grad_h: Vec<T> = (0..d).map(|i| hj.g(i).clone()).collect();
    Ok(trace_co(d, &ginv, &hess_f) - inner_co(d, &ginv, &grad_h, &grad_f))
}

/// Bakry-Emery data at a point, all tensors in covariant components.
pub struct BakryEmery<T> {
    pub ricci: Vec<T>,
    pub hess_h: Vec<T>,
    pub ric_h: Vec<T>,
    pub grad_h: Vec<T>,
    pub grad_h_norm2: T,
}

pub fn bakry_emery<T: Real, M: MetricField, H: ScalarField>(
    metric: &M,
    weight: &H,
    p: &[T],
) -> Result<BakryEmery<T>, EvalError> {
    let d = p.len();
    let g = metric.components(p)?;
    let ginv = inv_sym(d, &g);
    let ric = ricci(metric, p)?;
    let (grad_h, hess_h) = grad_and_hessian(metric, weight, p)?;
    let ric_h: Vec<T> = ric
        .iter()
        .zip(&hess_h)
        .map(|(r, h)| r.clone() + h.clone())
        .collect();
    let n2 = inner_co(d, &ginv, &grad_h, &grad_h);
    Ok(BakryEmery {
        ricci: ric,
        hess_h,
        ric_h,
        grad_h,
        grad_h_norm2: n2,
    })
}

/// Smallest eigenvalue of the pencil `(s, g)` for symmetric `s` and SPD `g`
/// in dimension 1 or 2.
pub fn lambda_min_rel(d: usize, s: &[f64], g: &[f64]) -> f64 {
    match d {
        1 => s[0] / g[0],
        2 => {
            // det(s - lambda g) = 0
            let a = g[0] * g[3] - g[1] * g[2];
            let b = -(s[0] * g[3] + s[3] * g[0] - s[1] * g[2] - s[2] * g[1]);
            let c = s[0] * s[3] - s[1] * s[2];
            let disc = (b * b - 4.0 * a * c).max(0.0);
            (-b - disc.sqrt()) / (2.0 * a)
        }
        _ => panic!("lambda_min_rel: unsupported dimension {d}"),
    }
}

// ---------------------------------------------------------------------------
// Composite fields

/// Pullback of an ambient expression through a coordinate map.
pub struct PullbackField<'a> {
    pub ambient: &'a Expr,
    pub map: &'a [Expr],
}

impl ScalarField for PullbackField<'_> {
    fn value<T: Real>(&self, p: &[T]) -> Result<T, EvalError> {
        let xs: Vec<T> = self
            .map
            .iter()
            .map(|m| m.eval(p))
            .collect::<Result<_, _>>()?;
        self.ambient.eval(&xs)
    }
}

/// `|grad f|^2` as a field, differentiable through nesting.
pub struct GradNorm2Field<'a, M, F> {
    pub metric: &'a M,
    pub f: &'a F,
}

impl<M: MetricField, F: ScalarField> ScalarField for GradNorm2Field<'_, M, F> {
    fn value<T: Real>(&self, p: &[T]) -> Result<T, EvalError> {
        let d = p.len();
        let g = self.metric.components(p)?;
        let ginv = inv_sym(d, &g);
        let fj = self.f.jet(p)?;
        let grad: Vec<T> = (0..d).map(|i| fj.g(i).clone()).collect();
        Ok(inner_co(d, &ginv, &grad, &grad))
    }
}

/// Drift Laplacian of `f` as a field.
pub struct DriftLaplacianField<'a, M, H, F> {
    pub metric: &'a M,
    pub weight: &'a H,
    pub f: &'a F,
}

impl<M: MetricField, H: ScalarField, F: ScalarField> ScalarField
    for DriftLaplacianField<'_, M, H, F>
{
    fn value<T: Real>(&self, p: &[T]) -> Result<T, EvalError> {
        drift_laplacian(self.metric, self.weight, self.f, p)
    }
}

/// Product of two fields.
pub struct ProductField<'a, A, B> {
    pub a: &'a A,
    pub b: &'a B,
}

impl<A: ScalarField, B: ScalarField> ScalarField for ProductField<'_, A, B> {
    fn value<T: Real>(&self, p: &[T]) -> Result<T, EvalError> {
        Ok(self.a.value(p)? * self.b.value(p)?)
    }
}

/// Outward unit normal data on a coordinate-aligned boundary face.
pub struct BoundaryCurvature {
    /// Outward unit normal, contravariant components.
    pub eta: Vec<f64>,
    /// Second fundamental form of the boundary curve against the outward
    /// normal (geodesic curvature for 2D charts, 0 for 1D).
    pub second_fundamental: f64,
    /// `H^partial = Tr(A)`.
    pub mean: f64,
    /// `H_h^partial = H - <grad h, eta>`.
    pub weighted_mean: f64,
}

/// Boundary geometry of the face `x_axis = const` (outward sign `sigma`)
/// at chart point `p` lying on the face.
pub fn boundary_curvature<M: MetricField, H: ScalarField>(
    metric: &M,
    weight: &H,
    axis: usize,
    sigma: f64,
    p: &[f64],
) -> Result<BoundaryCurvature, EvalError> {
    let d = p.len();
    let gj = metric_jets(metric, p)?;
    let gvals: Vec<f64> = gj.iter().map(|j| j.val).collect();
    let ginv = inv_sym(d, &gvals);
    let hj = weight.jet(p)?;

    // eta^i = sigma g^{ia} / sqrt(g^{aa})
    let eta: Vec<f64> = (0..d)
        .map(|i| sigma * ginv[i * d + axis] / ginv[axis * d + axis].sqrt())
        .collect();
    let dot_h_eta: f64 = (0..d).map(|i| hj.g(i) * eta[i]).sum();

    if d == 1 {
        return Ok(BoundaryCurvature {
            eta,
            second_fundamental: 0.0,
            mean: 0.0,
            weighted_mean: -dot_h_eta,
        });
    }

    // 2D: geodesic curvature k = <nabla_T eta, T> with T the unit tangent
    // along the other coordinate axis. The eta field is differentiated by
    // rebuilding its formula in jet arithmetic.
    let b = 1 - axis;
    let pj = seed(p);
    let gj_field = metric.components(&pj)?;
    let gj_field: Vec<Jet<f64>> = gj_field.into_iter().map(|c| lift(c, d)).collect();
    let ginv_field = inv_sym(d, &gj_field);
    let gaa_sqrt = ginv_field[axis * d + axis].clone().sqrt();
    let eta_field: Vec<Jet<f64>> = (0..d)
        .map(|i| (ginv_field[i * d + axis].clone() / gaa_sqrt.clone()).scale(sigma))
        .collect();
    let gamma = christoffel(metric, p)?;

    let t_norm = gvals[b * d + b].sqrt();
    let mut tvec = vec![0.0; d];
    tvec[b] = 1.0 / t_norm;

    // (nabla_T eta)^k = T^j (d_j eta^k + Gamma^k_{jm} eta^m)
    let mut cov = vec![0.0; d];
    for k in 0..d {
        let mut s = 0.0;
        for j in 0..d {
            let mut dj = *eta_field[k].g(j);
            for m in 0..d {
                dj += gamma[(k * d + j) * d + m] * eta[m];
            }
            s += tvec[j] * dj;
        }
        cov[k] = s;
    }
    let mut kappa = 0.0;
    for k in 0..d {
        for l in 0..d {
            kappa += gvals[k * d + l] * cov[k] * tvec[l];
        }
    }

    Ok(BoundaryCurvature {
        eta,
        second_fundamental: kappa,
        mean: kappa,
        weighted_mean: kappa - dot_h_eta,
    })
}
