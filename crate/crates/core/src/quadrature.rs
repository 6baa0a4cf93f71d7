//! One-dimensional adaptive Gauss–Kronrod quadrature and fixed Gauss–Legendre rules.

use crate::error::{Error, Result};

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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (k, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]`; either endpoint may be infinite.
///
/// Infinite ranges are mapped onto finite ones with `x = t / (1 - t^2)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(&f, a, b, tol),
        _ => {
            let map = |t: f64| t / (1.0 - t * t);
            let jac = |t: f64| (1.0 + t * t) / ((1.0 - t * t) * (1.0 - t * t));
            let lo = if a.is_finite() { inverse_map(a) } else { -1.0 };
            let hi = if b.is_finite() { inverse_map(b) } else { 1.0 };
            let g = |t: f64| {
                if t <= -1.0 || t >= 1.0 {
                    0.0
                } else {
                    let v = f(map(t)) * jac(t);
                    if v.is_finite() {
                        v
                    } else {
                        0.0
                    }
                }
            };
            adaptive(&g, lo, hi, tol)
        }
    }
}

fn inverse_map(x: f64) -> f64 {
    // solves t / (1 - t^2) = x for t in (-1, 1)
    if x == 0.0 {
        0.0
    } else {
        (-1.0 + (1.0 + 4.0 * x * x).sqrt()) / (2.0 * x)
    }
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    // a panel is accepted only when both its embedded estimate and the
    // agreement with its two halves are within tolerance; the second test
    // catches jumps that the Gauss/Kronrod pair happens to agree on
    let mut stack = vec![(a, b, kronrod15(f, a, b).0)];
    let mut total = 0.0;
    let mut budget = 20_000usize;
    let width = b - a;
    while let Some((lo, hi, whole)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, el) = kronrod15(f, lo, mid);
        let (right, er) = kronrod15(f, mid, hi);
        let local_tol = tol * ((hi - lo) / width).max(1e-3);
        let err = (whole - left - right).abs().max(el + er);
        if err <= local_tol || hi - lo < 1e-14 * width.max(1.0) {
            total += left + right;
            continue;
        }
        budget = budget.checked_sub(1).ok_or_else(|| {
            Error::Quadrature(format!("no convergence on [{a}, {b}] at tolerance {tol}"))
        })?;
        stack.push((lo, mid, left));
        stack.push((mid, hi, right));
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Quadrature(format!("non-finite value on [{a}, {b}]")))
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_gaussian_integrals() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let g = integrate(|x| (-0.5 * x * x).exp(), f64::NEG_INFINITY, f64::INFINITY, 1e-12).unwrap();
        assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
        let half = integrate(|x| (-x).exp(), 1.0, f64::INFINITY, 1e-12).unwrap();
        assert!((half - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn legendre_rule_is_exact_for_degree_2n_minus_1() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let (x1, w1) = gauss_legendre(1);
        assert!(x1[0].abs() < 1e-15);
        assert!((w1[0] - 2.0).abs() < 1e-15);
    }
}
