//! Fixed-step explicit integration.

/// One classical fourth-order Runge-Kutta step of `x' = f(x)`.
pub fn rk4<const N: usize, F>(x: [f64; N], dt: f64, mut f: F) -> [f64; N]
where
    F: FnMut(&[f64; N]) -> [f64; N],
{
    let k1 = f(&x);
    let k2 = f(&axpy(&x, 0.5 * dt, &k1));
    let k3 = f(&axpy(&x, 0.5 * dt, &k2));
    let k4 = f(&axpy(&x, dt, &k3));
    let mut out = x;
    for i in 0..N {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn axpy<const N: usize>(x: &[f64; N], a: f64, y: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += a * y[i];
    }
    out
}
