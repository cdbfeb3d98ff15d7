//! Quadrature: adaptive Gauss-Kronrod for closed-form integrands and
//! Simpson/trapezoid rules for tabulated data.

use crate::num::Real;

// 15-point Kronrod abscissae (non-negative half) and weights, with the
// embedded 7-point Gauss weights on the odd abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

const MAX_DEPTH: u32 = 48;

fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half_len * T::lit(x);
        let sum = f(center - dx) + f(center + dx);
        kronrod = kronrod + T::lit(w) * sum;
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * sum;
        }
    }
    (kronrod * half_len, ((kronrod - gauss) * half_len).abs())
}

fn adapt<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T, depth: u32) -> T {
    let (value, err) = gk15(f, a, b);
    let floor = T::epsilon() * T::lit(50.0) * value.abs();
    if err <= tol.max(floor) || depth >= MAX_DEPTH {
        return value;
    }
    let mid = T::lit(0.5) * (a + b);
    let half_tol = T::lit(0.5) * tol;
    adapt(f, a, mid, half_tol, depth + 1) + adapt(f, mid, b, half_tol, depth + 1)
}

/// Adaptive 7/15-point Gauss-Kronrod quadrature of `f` over `[a, b]` to an
/// absolute tolerance.
pub fn gauss_kronrod<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, abs_tol: T) -> T {
    if a == b {
        return T::zero();
    }
    if b < a {
        return -gauss_kronrod(f, b, a, abs_tol);
    }
    adapt(&f, a, b, abs_tol, 0)
}

/// Composite Simpson rule on a (possibly non-uniform) grid. Consecutive
/// interval pairs are integrated with the interpolating parabola; an odd
/// trailing interval uses the parabola through the last three nodes.
pub fn simpson<T: Real>(x: &[T], y: &[T]) -> T {
    assert_eq!(x.len(), y.len(), "simpson: length mismatch");
    let n = x.len();
    match n {
        0 | 1 => return T::zero(),
        2 => return T::lit(0.5) * (x[1] - x[0]) * (y[0] + y[1]),
        _ => {}
    }
    let mut total = T::zero();
    let mut i = 0;
    while i + 2 < n {
        total = total + parabola_pair(x[i], x[i + 1], x[i + 2], y[i], y[i + 1], y[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        // one interval left: [x[n-2], x[n-1]]
        total = total + parabola_last(&x[n - 3..], &y[n - 3..]);
    }
    total
}

// integral over [x0, x2] of the parabola through three points
fn parabola_pair<T: Real>(x0: T, x1: T, x2: T, y0: T, y1: T, y2: T) -> T {
    let h0 = x1 - x0;
    let h1 = x2 - x1;
    let sum = h0 + h1;
    let six = T::lit(6.0);
    sum / six * (y0 * (T::lit(2.0) - h1 / h0) + y1 * sum * sum / (h0 * h1) + y2 * (T::lit(2.0) - h0 / h1))
}

// integral over [x1, x2] of the parabola through (x0,x1,x2)
fn parabola_last<T: Real>(x: &[T], y: &[T]) -> T {
    segment_integral(x[0], x[1], x[2], y[0], y[1], y[2], x[1], x[2])
}

// Integral over [lo, hi] of the Lagrange parabola through three nodes.
#[allow(clippy::too_many_arguments)]
fn segment_integral<T: Real>(x0: T, x1: T, x2: T, y0: T, y1: T, y2: T, lo: T, hi: T) -> T {
    // antiderivative of (x - a)(x - b) is x^3/3 - (a+b) x^2/2 + ab x
    let anti = |a: T, b: T, x: T| x * x * x / T::lit(3.0) - (a + b) * x * x / T::lit(2.0) + a * b * x;
    let basis = |a: T, b: T, xi: T| (anti(a, b, hi) - anti(a, b, lo)) / ((xi - a) * (xi - b));
    y0 * basis(x1, x2, x0) + y1 * basis(x0, x2, x1) + y2 * basis(x0, x1, x2)
}

/// Running integral `∫_{x_0}^{x_i} y` at every node, each interval integrated
/// with a parabola through it and one neighbour (third-order accurate).
pub fn cumulative_parabolic<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    assert_eq!(x.len(), y.len(), "cumulative_parabolic: length mismatch");
    let n = x.len();
    let mut out = vec![T::zero(); n];
    if n < 3 {
        if n == 2 {
            out[1] = T::lit(0.5) * (x[1] - x[0]) * (y[0] + y[1]);
        }
        return out;
    }
    for i in 0..n - 1 {
        let j = if i + 2 < n { i } else { i - 1 };
        let piece = segment_integral(x[j], x[j + 1], x[j + 2], y[j], y[j + 1], y[j + 2], x[i], x[i + 1]);
        out[i + 1] = out[i] + piece;
    }
    out
}

/// Running trapezoid integral on a uniform grid of spacing `h`.
pub fn cumulative_trapezoid<T: Real>(h: T, y: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(y.len());
    let mut acc = T::zero();
    out.push(acc);
    let half_h = T::lit(0.5) * h;
    for w in y.windows(2) {
        acc = acc + half_h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid<T: Real>(h: T, y: &[T]) -> T {
    match y.len() {
        0 | 1 => T::zero(),
        n => {
            let inner: T = y[1..n - 1].iter().copied().sum();
            h * (inner + T::lit(0.5) * (y[0] + y[n - 1]))
        }
    }
}

/// Composite Simpson on a uniform grid of spacing `h`.
pub fn simpson_uniform<T: Real>(h: T, y: &[T]) -> T {
    let n = y.len();
    if n < 3 {
        return trapezoid(h, y);
    }
    let mut total = T::zero();
    let mut i = 0;
    let third = h / T::lit(3.0);
    while i + 2 < n {
        total = total + third * (y[i] + T::lit(4.0) * y[i + 1] + y[i + 2]);
        i += 2;
    }
    if i + 1 < n {
        // last interval from the parabola through the last three nodes
        let (a, b, c) = (y[n - 3], y[n - 2], y[n - 1]);
        total = total + h * (-a + T::lit(8.0) * b + T::lit(5.0) * c) / T::lit(12.0);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_matches_closed_forms() {
        let v = gauss_kronrod(|x: f64| (-x).exp(), 0.0, 1.0, 1e-13);
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        let v = gauss_kronrod(|x: f64| x.sqrt(), 0.0, 1.0, 1e-12);
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
        let v = gauss_kronrod(|x: f64| x.cos(), 1.0, 0.0, 1e-13);
        assert!((v + 1.0f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn simpson_exact_on_cubics_uniform_and_not() {
        let f = |x: f64| 1.0 + x - 2.0 * x * x + 0.5 * x * x * x;
        let exact = |x: f64| x + x * x / 2.0 - 2.0 * x * x * x / 3.0 + x.powi(4) / 8.0;
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        assert!((simpson(&xs, &ys) - exact(3.0)).abs() < 1e-12);
        assert!((simpson_uniform(0.3, &ys) - exact(3.0)).abs() < 1e-12);

        // even node count forces the trailing single-interval rule (exact for quadratics)
        let q = |x: f64| 2.0 - x + 3.0 * x * x;
        let xs: Vec<f64> = vec![0.0, 0.1, 0.35, 0.5, 0.9, 1.0];
        let ys: Vec<f64> = xs.iter().map(|&x| q(x)).collect();
        assert!((simpson(&xs, &ys) - (2.0 - 0.5 + 1.0)).abs() < 1e-12);
        let cum = cumulative_parabolic(&xs, &ys);
        for (x, c) in xs.iter().zip(&cum) {
            assert!((c - (2.0 * x - x * x / 2.0 + x * x * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn trapezoid_rules_agree() {
        let ys = [0.0f64, 1.0, 4.0, 9.0];
        assert_eq!(trapezoid(1.0, &ys), 0.5 + 2.5 + 6.5);
        assert_eq!(cumulative_trapezoid(1.0, &ys), vec![0.0, 0.5, 3.0, 9.5]);
    }
}
