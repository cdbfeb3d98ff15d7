//! Tridiagonal systems with constant interior coefficients.
//!
//! Both solvers produce Toeplitz matrices (the coefficients depend on the
//! current flux only), so elimination runs from the far end toward the
//! origin: after the sweep the first two unknowns, which determine the
//! boundary flux, are available before any back-substitution.

use crate::num::Real;

/// Row `i` reads `lower·u[i-1] + diag·u[i] + upper·u[i+1] = rhs[i]`, with
/// `u[-1]` and `u[n]` supplied as Dirichlet data.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil<T> {
    pub lower: T,
    pub diag: T,
    pub upper: T,
}

/// Reusable elimination workspace.
#[derive(Debug)]
pub(crate) struct Sweep<T> {
    // u[i] = g[i] - e[i] * u[i-1]
    e: Vec<T>,
    g: Vec<T>,
}

impl<T: Real> Sweep<T> {
    pub fn new(n: usize) -> Self {
        Self { e: vec![T::zero(); n], g: vec![T::zero(); n] }
    }

    /// Eliminates from the last row down to the first and returns the
    /// first two unknowns `(u[0], u[1])`.
    ///
    /// With constant coefficients the ratios `e[i]` converge geometrically
    /// away from the far boundary; once two consecutive ratios agree to
    /// rounding the remaining rows reuse the limit, which takes the
    /// division off the sequential dependency chain.
    pub fn eliminate(&mut self, st: Stencil<T>, rhs: &[T], left: T, right: T) -> (T, T) {
        let n = rhs.len();
        debug_assert!(n >= 2 && self.e.len() == n);
        let mut e_next = T::zero();
        let mut g_next = right;
        let mut i = n;
        while i > 0 {
            i -= 1;
            let inv = (st.diag - st.upper * e_next).recip();
            let e = st.lower * inv;
            let g = (rhs[i] - st.upper * g_next) * inv;
            self.e[i] = e;
            self.g[i] = g;
            let settled = (e - e_next).abs() <= T::epsilon() * e.abs();
            e_next = e;
            g_next = g;
            if settled {
                break;
            }
        }
        if i > 0 {
            let inv = (st.diag - st.upper * e_next).recip();
            let b = st.upper * inv;
            for k in (0..i).rev() {
                g_next = rhs[k] * inv - b * g_next;
                self.e[k] = e_next;
                self.g[k] = g_next;
            }
        }
        let u0 = self.g[0] - self.e[0] * left;
        let u1 = self.g[1] - self.e[1] * u0;
        (u0, u1)
    }

    /// Completes the solve after [`Self::eliminate`].
    pub fn substitute(&self, left: T, out: &mut [T]) {
        let mut prev = left;
        for (i, u) in out.iter_mut().enumerate() {
            *u = self.g[i] - self.e[i] * prev;
            prev = *u;
        }
    }
}
