//! Adaptive Dormand-Prince 5(4) integrator for small linear systems.

/// Step-size control settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-14,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights equal the last row of A (first-same-as-last).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t1` and returns `y(t1)`.
///
/// `f(t, y, dy)` writes the derivative into `dy`.
pub fn integrate<F>(f: F, t0: f64, y0: &[f64], t1: f64, tol: Tolerance) -> Vec<f64>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if t1 <= t0 || n == 0 {
        return y;
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut t = t0;
    f(t, &y, &mut k[0]);

    let norm0 = rms(&y, |i, v| v / (tol.atol + tol.rtol * y[i].abs()));
    let dnorm0 = rms(&k[0], |i, v| v / (tol.atol + tol.rtol * y[i].abs()));
    let mut h = if norm0 < 1e-5 || dnorm0 < 1e-5 {
        1e-6
    } else {
        0.01 * norm0 / dnorm0
    };
    h = h.min(t1 - t0);

    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            f(t + C[s] * h, &stage, &mut k[s]);
        }
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut hi = y[i];
            let mut lo = y[i];
            for s in 0..7 {
                hi += h * B5[s] * k[s][i];
                lo += h * B4[s] * k[s][i];
            }
            y5[i] = hi;
            let scale = tol.atol + tol.rtol * y[i].abs().max(hi.abs());
            let e = (hi - lo) / scale;
            err_sq += e * e;
        }
        let err = (err_sq / n as f64).sqrt();
        if err <= 1.0 {
            t += h;
            std::mem::swap(&mut y, &mut y5);
            // Stage 7 was evaluated at the accepted point.
            let last = k[6].clone();
            k[0].copy_from_slice(&last);
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
        if h < 1e-300 {
            break;
        }
    }
    y
}

fn rms(v: &[f64], scale: impl Fn(usize, f64) -> f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter()
        .enumerate()
        .map(|(i, &x)| scale(i, x).powi(2))
        .sum::<f64>()
        / v.len() as f64)
        .sqrt()
}
