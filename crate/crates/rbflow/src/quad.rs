//! Gauss quadrature on the reference triangle.
//!
//! Rules are produced by collapsing a tensor Gauss-Legendre grid on the unit
//! square onto the triangle `{x, y >= 0, x + y <= 1}` (Duffy transform). An
//! `n`-point rule per direction integrates total degree `2n - 2` exactly on
//! the triangle, so requesting exactness degree `p` uses `n = ceil((p+2)/2)`
//! points per direction.

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        // Initial guess (Chebyshev) on [-1, 1], then Newton on P_n.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Quadrature rule on the reference triangle, exact for polynomials of total
/// degree `degree`. Weights sum to the triangle area 1/2.
pub fn triangle_rule(degree: usize) -> Vec<([f64; 2], f64)> {
    let n = (degree + 3) / 2; // ceil((degree + 2) / 2)
    let line = gauss_legendre_01(n);
    let mut out = Vec::with_capacity(n * n);
    for &(u, wu) in &line {
        for &(v, wv) in &line {
            let x = u * (1.0 - v);
            let y = v;
            out.push(([x, y], wu * wv * (1.0 - v)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_monomials() {
        for n in 1..=12 {
            let rule = gauss_legendre_01(n);
            for p in 0..=(2 * n - 1) {
                let approx: f64 = rule.iter().map(|&(x, w)| w * x.powi(p as i32)).sum();
                let exact = 1.0 / (p as f64 + 1.0);
                assert!((approx - exact).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn triangle_rule_exact_for_monomials() {
        // Exact value of int_T x^a y^b = a! b! / (a + b + 2)!.
        let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>().max(1.0);
        for degree in 0..=10 {
            let rule = triangle_rule(degree);
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    let approx: f64 = rule
                        .iter()
                        .map(|&([x, y], w)| w * x.powi(a as i32) * y.powi(b as i32))
                        .sum();
                    let exact = fact(a) * fact(b) / fact(a + b + 2);
                    assert!(
                        (approx - exact).abs() < 1e-14 * (1.0 + exact.abs()),
                        "deg={degree} a={a} b={b}: {approx} vs {exact}"
                    );
                }
            }
        }
    }
}
