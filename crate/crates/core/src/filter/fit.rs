//! Damped-cosine fits `e^{−γs}(a cos ωs + b sin ωs)` by variable projection:
//! the amplitudes are solved linearly for each `(γ, ω)`, which are found by a
//! coarse grid search refined with a Nelder–Mead simplex.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedCosineFit {
    pub decay_rate: f64,
    pub frequency: f64,
    pub cos_amplitude: f64,
    pub sin_amplitude: f64,
    /// Root-mean-square residual over the fitted points.
    pub rms_residual: f64,
}

fn project(s: &[f64], y: &[f64], g: f64, w: f64) -> (f64, f64, f64) {
    let n = s.len();
    let basis = DMatrix::from_fn(n, 2, |i, j| {
        let e = (-g * s[i]).exp();
        if j == 0 {
            e * (w * s[i]).cos()
        } else {
            e * (w * s[i]).sin()
        }
    });
    let yv = DVector::from_column_slice(y);
    let ata = basis.transpose() * &basis;
    let aty = basis.transpose() * &yv;
    match ata.lu().solve(&aty) {
        Some(c) => {
            let r = &basis * &c - yv;
            (r.norm_squared(), c[0], c[1])
        }
        None => (f64::INFINITY, 0.0, 0.0),
    }
}

/// Fits samples `(s_i, y_i)` with `s_i ≤ s_max` (all when `None`).
/// Positivity of `γ` and `ω` is enforced.
pub fn fit_damped_cosine(s: &[f64], y: &[f64], s_max: Option<f64>) -> Result<DampedCosineFit> {
    let (ss, ys): (Vec<f64>, Vec<f64>) = s
        .iter()
        .zip(y)
        .filter(|(&t, _)| s_max.is_none_or(|m| t <= m))
        .map(|(&a, &b)| (a, b))
        .unzip();
    if ss.len() < 5 {
        return Err(Error::InsufficientData("damped-cosine fit needs at least 5 points".into()));
    }
    let span = ss.iter().cloned().fold(f64::MIN, f64::max) - ss.iter().cloned().fold(f64::MAX, f64::min);
    let step = span / (ss.len() - 1) as f64;
    let w_max = (std::f64::consts::PI / step).min(50.0);
    let cost = |p: [f64; 2]| -> f64 {
        if p[0] <= 0.0 || p[1] <= 0.0 {
            return f64::INFINITY;
        }
        project(&ss, &ys, p[0], p[1]).0
    };
    let mut best = [1.0, 1.0];
    let mut best_c = f64::INFINITY;
    let n_grid = 60;
    for i in 0..n_grid {
        let g = 0.05 * (100.0f64).powf(i as f64 / (n_grid - 1) as f64);
        for k in 0..n_grid {
            let w = 0.05 + (w_max.min(10.0) - 0.05) * k as f64 / (n_grid - 1) as f64;
            let c = cost([g, w]);
            if c < best_c {
                best_c = c;
                best = [g, w];
            }
        }
    }
    let p = nelder_mead(cost, best, [0.05 * best[0], 0.05 * best[1]], 2000, 1e-14);
    let (rss, a, b) = project(&ss, &ys, p[0], p[1]);
    Ok(DampedCosineFit {
        decay_rate: p[0],
        frequency: p[1],
        cos_amplitude: a,
        sin_amplitude: b,
        rms_residual: (rss / ss.len() as f64).sqrt(),
    })
}

/// Minimal two-parameter Nelder–Mead simplex.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(f: F, x0: [f64; 2], step: [f64; 2], max_iter: usize, tol: f64) -> [f64; 2] {
    let mut pts = [x0, [x0[0] + step[0], x0[1]], [x0[0], x0[1] + step[1]]];
    let mut vals = pts.map(&f);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.map(|i| pts[i]);
        vals = idx.map(|i| vals[i]);
        if (vals[2] - vals[0]).abs() <= tol * (vals[0].abs() + 1e-300) {
            break;
        }
        let centroid = lerp(pts[0], pts[1], 0.5);
        let refl = lerp(centroid, pts[2], -1.0);
        let fr = f(refl);
        if fr < vals[0] {
            let exp = lerp(centroid, pts[2], -2.0);
            let fe = f(exp);
            if fe < fr {
                pts[2] = exp;
                vals[2] = fe;
            } else {
                pts[2] = refl;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            pts[2] = refl;
            vals[2] = fr;
        } else {
            let contr = lerp(centroid, pts[2], 0.5);
            let fc = f(contr);
            if fc < vals[2] {
                pts[2] = contr;
                vals[2] = fc;
            } else {
                for i in 1..3 {
                    pts[i] = lerp(pts[0], pts[i], 0.5);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }
    let i = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    pts[i]
}
