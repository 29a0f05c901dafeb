//! Shared numerical kernels: Gauss–Legendre rules, Bessel sequences for
//! Chebyshev propagators, interpolation helpers.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss–Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                let (_, d) = legendre_with_derivative(n, z);
                dp = d;
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&v| v * half).collect(),
    )
}

/// P_n(x) and P_n'(x).
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * (n * (n + 1)) as f64 * x.powi(n as i32 + 1)
    } else {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, d)
}

/// Legendre polynomials P_0..=P_lmax at x.
pub fn legendre_all(lmax: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; lmax + 1];
    p[0] = 1.0;
    if lmax >= 1 {
        p[1] = x;
    }
    for l in 2..=lmax {
        let lf = l as f64;
        p[l] = ((2.0 * lf - 1.0) * x * p[l - 1] - (lf - 1.0) * p[l - 2]) / lf;
    }
    p
}

/// Uniform periodic rule on [a, a + period): n equally spaced nodes, equal weights.
pub fn periodic_rule(n: usize, a: f64, period: f64) -> (Vec<f64>, Vec<f64>) {
    let h = period / n as f64;
    ((0..n).map(|i| a + (i as f64 + 0.5) * h).collect(), vec![h; n])
}

/// Bessel functions J_0(x)..=J_kmax(x) for x ≥ 0 (Miller backward recurrence).
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = (kmax.max(x as usize) + 20 + (10.0 * x.sqrt()) as usize) | 1;
    let mut jp1 = 0.0;
    let mut j = 1e-300;
    let mut vals = vec![0.0; start + 1];
    vals[start] = j;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        vals[k - 1] = j;
        if j.abs() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            jp1 *= 1e-250;
            j *= 1e-250;
        }
    }
    let mut norm = vals[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * vals[k];
    }
    for k in 0..=kmax {
        out[k] = vals[k] / norm;
    }
    out
}

/// Exponentially scaled modified Bessel functions e^{-x} I_k(x), k = 0..=kmax, x ≥ 0.
pub fn bessel_i_scaled_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = kmax.max(1) + 30 + (12.0 * x.sqrt()) as usize;
    let mut vals = vec![0.0; start + 1];
    let mut ip1 = 0.0;
    let mut i = 1e-300;
    vals[start] = i;
    for k in (1..=start).rev() {
        let im1 = 2.0 * k as f64 / x * i + ip1;
        ip1 = i;
        i = im1;
        vals[k - 1] = i;
        if i > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            ip1 *= 1e-250;
            i *= 1e-250;
        }
    }
    let norm = vals[0] + 2.0 * vals[1..].iter().sum::<f64>();
    for k in 0..=kmax {
        out[k] = vals[k] / norm;
    }
    out
}

/// Barycentric Lagrange interpolation through arbitrary distinct nodes.
#[derive(Debug, Clone)]
pub struct Barycentric {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Barycentric {
    pub fn new(nodes: &[f64]) -> Self {
        let n = nodes.len();
        let mut weights = vec![1.0; n];
        let span = nodes.last().copied().unwrap_or(1.0) - nodes.first().copied().unwrap_or(0.0);
        let scale = if span > 0.0 { 4.0 / span } else { 1.0 };
        for j in 0..n {
            let mut w = 1.0;
            for k in 0..n {
                if k != j {
                    w *= scale * (nodes[j] - nodes[k]);
                }
            }
            weights[j] = 1.0 / w;
        }
        Self { nodes: nodes.to_vec(), weights }
    }

    /// Uses known weights (e.g. closed form for Gauss–Legendre nodes).
    pub fn with_weights(nodes: Vec<f64>, weights: Vec<f64>) -> Self {
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// D_ij = ℓ_j'(x_i) for the Lagrange basis on the nodes.
    pub fn differentiation_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.nodes.len();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i != j {
                    let v = self.weights[j] / self.weights[i] / (self.nodes[i] - self.nodes[j]);
                    d[i][j] = v;
                    diag -= v;
                }
            }
            d[i][i] = diag;
        }
        d
    }

    /// Interpolation coefficients c_j such that f(x) ≈ Σ c_j f_j.
    pub fn coefficients(&self, x: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut c = vec![0.0; n];
        for (j, &xj) in self.nodes.iter().enumerate() {
            if x == xj {
                c[j] = 1.0;
                return c;
            }
        }
        let mut denom = 0.0;
        for j in 0..n {
            let t = self.weights[j] / (x - self.nodes[j]);
            c[j] = t;
            denom += t;
        }
        for v in c.iter_mut() {
            *v /= denom;
        }
        c
    }

    pub fn eval(&self, values: &[f64], x: f64) -> f64 {
        self.coefficients(x).iter().zip(values).map(|(c, v)| c * v).sum()
    }
}

/// Barycentric interpolator for Gauss–Legendre nodes mapped affinely from [-1, 1].
pub fn gauss_legendre_barycentric(t_nodes: &[f64], t_weights: &[f64], mapped: Vec<f64>) -> Barycentric {
    let w = t_nodes
        .iter()
        .zip(t_weights)
        .enumerate()
        .map(|(i, (&t, &q))| {
            let s = ((1.0 - t * t) * q).sqrt();
            if i % 2 == 0 {
                s
            } else {
                -s
            }
        })
        .collect();
    Barycentric::with_weights(mapped, w)
}

/// Local cubic (4-point Lagrange) interpolation on a strictly increasing grid.
/// Outside the grid the end stencils extrapolate.
pub fn cubic_interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    debug_assert_eq!(n, ys.len());
    if n == 0 {
        return 0.0;
    }
    if n < 4 {
        return linear_interp(xs, ys, x);
    }
    let (s, w) = lagrange4(xs, x);
    (0..4).map(|a| w[a] * ys[s + a]).sum()
}

/// Start index and weights of the 4-point Lagrange stencil around `x`
/// (grid of at least 4 strictly increasing nodes).
pub fn lagrange4(xs: &[f64], x: f64) -> (usize, [f64; 4]) {
    let n = xs.len();
    let i = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        k => k - 1,
    };
    let s = i.saturating_sub(1).min(n - 4);
    let mut w = [1.0; 4];
    for (a, wa) in w.iter_mut().enumerate() {
        for b in 0..4 {
            if a != b {
                *wa *= (x - xs[s + b]) / (xs[s + a] - xs[s + b]);
            }
        }
    }
    (s, w)
}

/// Piecewise-linear interpolation with clamping at the ends.
pub fn linear_interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = (x - x0) / (x1 - x0);
    ys[k - 1] * (1.0 - t) + ys[k] * t
}

/// ln(n!) by direct summation (exact enough for the index ranges used here).
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Least-squares polynomial fit y ≈ Σ_k c_k x^k, k = 0..=degree.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Option<Vec<f64>> {
    use nalgebra::{DMatrix, DVector};
    let n = xs.len();
    if n <= degree {
        return None;
    }
    let a = DMatrix::from_fn(n, degree + 1, |i, k| xs[i].powi(k as i32));
    let b = DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let sol = svd.solve(&b, 1e-14).ok()?;
    Some(sol.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        for p in 0..16 {
            let q: f64 = x.iter().zip(&w).map(|(&t, &v)| v * t.powi(p)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {p}");
        }
    }

    #[test]
    fn bessel_j_matches_known_values() {
        let j = bessel_j_sequence(1.0, 3);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((j[2] - 0.114_903_484_931_900_5).abs() < 1e-14);
        let j = bessel_j_sequence(30.0, 2);
        assert!((j[0] - (-0.086_367_983_581_040_2)).abs() < 1e-13);
    }

    #[test]
    fn bessel_i_scaled_matches_known_values() {
        let i = bessel_i_scaled_sequence(1.0, 2);
        let e = (-1.0f64).exp();
        assert!((i[0] - 1.266_065_877_752_008_4 * e).abs() < 1e-14);
        assert!((i[1] - 0.565_159_103_992_485 * e).abs() < 1e-14);
        let i = bessel_i_scaled_sequence(500.0, 0);
        // e^{-x} I_0(x) ~ 1/sqrt(2πx) (1 + 1/(8x) + 9/(128x²))
        let asym = (1.0 / (2.0 * PI * 500.0f64).sqrt()) * (1.0 + 1.0 / 4000.0 + 9.0 / (128.0 * 250000.0));
        assert!((i[0] - asym).abs() < 1e-10);
    }

    #[test]
    fn barycentric_reproduces_polynomials() {
        let (t, q) = gauss_legendre(12);
        let b = gauss_legendre_barycentric(&t, &q, t.clone());
        let vals: Vec<f64> = t.iter().map(|&x| 3.0 * x.powi(7) - x + 0.5).collect();
        for &x in &[-0.93, -0.2, 0.0, 0.41, 0.99] {
            let exact = 3.0 * f64::powi(x, 7) - x + 0.5;
            assert!((b.eval(&vals, x) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn polyfit_recovers_quadratic() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 0.5 * x + 0.25 * x * x).collect();
        let c = polyfit(&xs, &ys, 2).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] + 0.5).abs() < 1e-12 && (c[2] - 0.25).abs() < 1e-12);
    }
}
