//! Shared test utilities: an independent finite-difference Sturm-Liouville
//! oracle for 1D weighted eigenvalue problems, deliberately sharing no code
//! with the finite-element route it cross-checks.

/// Boundary condition at one end of the oracle interval.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum OracleBc {
    Dirichlet,
    /// Natural (no-flux) end; also correct at a singular end where the
    /// coefficient `p` vanishes.
    Natural,
}

/// Smallest generalized eigenvalues of `-(p u')' = lambda w u` on `[a, b]`
/// by second-order finite differences on `n + 1` nodes and inertia-count
/// bisection on the tridiagonal pencil. `p` and `w` are evaluated
/// pointwise; `which` selects the 1-based eigenvalue index.
pub fn sturm_oracle(
    a: f64,
    b: f64,
    p: impl Fn(f64) -> f64,
    w: impl Fn(f64) -> f64,
    bc_lo: OracleBc,
    bc_hi: OracleBc,
    n: usize,
    which: usize,
) -> f64 {
    assert!(n >= 16 && which >= 1);
    let h = (b - a) / n as f64;
    let x = |i: usize| a + i as f64 * h;

    // active nodes after applying Dirichlet elimination
    let lo = if bc_lo == OracleBc::Dirichlet { 1 } else { 0 };
    let hi = if bc_hi == OracleBc::Dirichlet { n - 1 } else { n };
    let m = hi - lo + 1;
    assert!(m > which);

    // stiffness: tridiagonal with off-diagonal -p_{i+1/2}/h^2;
    // mass: lumped diagonal, halved at natural boundary nodes
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    let mut mass = vec![0.0; m];
    for (k, i) in (lo..=hi).enumerate() {
        let mut d = 0.0;
        if i > 0 {
            d += p(x(i) - 0.5 * h);
        }
        if i < n {
            d += p(x(i) + 0.5 * h);
        }
        diag[k] = d / (h * h);
        if k + 1 < m {
            off[k] = -p(x(i) + 0.5 * h) / (h * h);
        }
        let half = i == 0 || i == n;
        mass[k] = w(x(i)) * if half { 0.5 } else { 1.0 };
    }

    // count pencil eigenvalues below sigma via LDL^T inertia of K - sigma M
    let count_below = |sigma: f64| -> usize {
        let mut neg = 0usize;
        let mut prev = f64::INFINITY;
        for k in 0..m {
            let mut t = diag[k] - sigma * mass[k];
            if k > 0 {
                t -= off[k - 1] * off[k - 1] / prev;
            }
            if t == 0.0 {
                t = 1e-300;
            }
            if t < 0.0 {
                neg += 1;
            }
            prev = t;
        }
        neg
    };

    // bracket then bisect
    let mut hi_s = 1.0;
    while count_below(hi_s) < which {
        hi_s *= 2.0;
        assert!(hi_s < 1e12, "oracle failed to bracket eigenvalue {which}");
    }
    let mut lo_s = -1.0;
    while count_below(lo_s) >= which {
        lo_s *= 2.0;
        assert!(lo_s > -1e12);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo_s + hi_s);
        if count_below(mid) >= which {
            hi_s = mid;
        } else {
            lo_s = mid;
        }
        if hi_s - lo_s <= 1e-13 * hi_s.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo_s + hi_s)
}

/// Relative difference helper.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
