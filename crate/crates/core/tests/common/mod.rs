//! Independent oracles shared by the integration tests. Nothing here calls
//! into the estimators; the plant is integrated by brute-force RK4.

#![allow(dead_code)]

use elastic_mfc::mfc::Sample;

/// Integrates `ẏ = F(t) + α·u(t)` with classic RK4 at `dt`, returning the
/// state at `t0 + steps·dt`.
pub fn rk4(y0: f64, t0: f64, dt: f64, steps: usize, rhs: impl Fn(f64) -> f64) -> f64 {
    // the right-hand side does not depend on y, so RK4 reduces to Simpson
    let mut y = y0;
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let k1 = rhs(t);
        let k2 = rhs(t + dt / 2.0);
        let k4 = rhs(t + dt);
        y += dt / 6.0 * (k1 + 4.0 * k2 + k4);
    }
    y
}

/// Fine trajectory of the plant sampled every `h`, integrated at `h/refine`.
/// Returns `(t_k, y_k)` for `k = 0..n`.
pub fn sampled_trajectory(
    y0: f64,
    h: f64,
    n: usize,
    refine: usize,
    rhs: impl Fn(f64) -> f64 + Copy,
) -> Vec<(f64, f64)> {
    let dt = h / refine as f64;
    let mut out = Vec::with_capacity(n);
    let mut y = y0;
    for k in 0..n {
        let t = k as f64 * h;
        out.push((t, y));
        y = rk4(y, t, dt, refine, rhs);
    }
    out
}

/// Central difference of the plant output using fine oracle steps around `t`.
pub fn fine_derivative(y_at: impl Fn(f64) -> f64, t: f64, dt: f64) -> f64 {
    (y_at(t + dt) - y_at(t - dt)) / (2.0 * dt)
}

/// Composite Simpson quadrature with `n` (even) panels.
pub fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    assert!(n.is_multiple_of(2));
    let dx = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * dx);
    }
    s * dx / 3.0
}

/// Algebraic estimate computed by fine quadrature of the continuous
/// signals over `[0, span]`.
pub fn algebraic_by_quadrature(
    span: f64,
    alpha: f64,
    y: impl Fn(f64) -> f64,
    u: impl Fn(f64) -> f64,
) -> f64 {
    let integral = simpson(0.0, span, 20_000, |s| {
        (span - 2.0 * s) * y(s) + alpha * s * (span - s) * u(s)
    });
    -6.0 / span.powi(3) * integral
}

pub fn window(n: usize, h: f64, f: impl Fn(f64) -> (f64, f64, f64, f64)) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let t = i as f64 * h;
            let (y, u, y_d, yd_dot) = f(t);
            Sample::new(t, y, u, y_d, yd_dot)
        })
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
