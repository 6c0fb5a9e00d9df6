use alloc::vec;
use alloc::vec::Vec;

use super::{hartley_normalization, project_point, GeometryError, Homography, PointPair};
use crate::linalg::{solve_dense, Mat3};

const MAX_ITERATIONS: usize = 100;
const MAX_CONSECUTIVE_FAILURES: usize = 20;
const RELATIVE_DECREASE_TOL: f64 = 1e-10;
const LAMBDA_INIT: f64 = 1e-3;
const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmReport {
    pub homography: Homography,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
}

/// Sum of squared forward reprojection errors; `inf` if any point projects
/// to infinity.
pub(crate) fn cost(m: &Mat3, pairs: &[PointPair]) -> f64 {
    let mut acc = 0.0;
    for p in pairs {
        match project_point(m, p.src) {
            Ok(q) => {
                let (dx, dy) = (q.0 - p.dst.0, q.1 - p.dst.1);
                acc += dx * dx + dy * dy;
            }
            Err(_) => return f64::INFINITY,
        }
    }
    acc
}

/// Levenberg–Marquardt refinement of `h` on `inliers`, minimizing
/// `Σ ‖H·src − dst‖²`. The returned cost never exceeds the input cost.
pub fn refine_lm(h: &Homography, inliers: &[PointPair]) -> Result<Homography, GeometryError> {
    refine_lm_report(h, inliers).map(|r| r.homography)
}

pub fn refine_lm_report(h: &Homography, inliers: &[PointPair]) -> Result<LmReport, GeometryError> {
    if inliers.len() < 4 {
        return Err(GeometryError::InsufficientPairs(inliers.len()));
    }
    let initial_cost = cost(h.matrix(), inliers);
    let unchanged = LmReport {
        homography: *h,
        initial_cost,
        final_cost: initial_cost,
        iterations: 0,
    };
    if initial_cost == 0.0 || !initial_cost.is_finite() {
        return Ok(unchanged);
    }

    // Parametrize in Hartley-normalized coordinates so the eight free
    // entries are O(1): H = Td⁻¹ · Hn · Ts with Hn[2][2] pinned to 1.
    let (ts, td) = {
        let ts = hartley_normalization(inliers.iter().map(|p| p.src));
        let td = hartley_normalization(inliers.iter().map(|p| p.dst));
        let hn = td * *h.matrix() * ts.inverse().unwrap_or(Mat3::IDENTITY);
        if hn[(2, 2)].abs() > 1e-6 * hn.frobenius_norm() {
            (ts, td)
        } else {
            (Mat3::IDENTITY, Mat3::IDENTITY)
        }
    };
    let ts_inv = ts.inverse().ok_or(GeometryError::DegenerateConfiguration)?;
    let td_inv = td.inverse().ok_or(GeometryError::DegenerateConfiguration)?;
    let to_pixels = |p: &[f64; 8]| -> Mat3 {
        let hn = Mat3([[p[0], p[1], p[2]], [p[3], p[4], p[5]], [p[6], p[7], 1.0]]);
        td_inv * hn * ts
    };
    let start = {
        let hn = td * *h.matrix() * ts_inv;
        let hn = hn.scale(1.0 / hn[(2, 2)]);
        let v = hn.to_row_vec();
        [v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]]
    };

    let n_res = 2 * inliers.len();
    let residuals = |p: &[f64; 8], out: &mut Vec<f64>| -> bool {
        out.clear();
        let m = to_pixels(p);
        for pair in inliers {
            match project_point(&m, pair.src) {
                Ok(q) => {
                    out.push(q.0 - pair.dst.0);
                    out.push(q.1 - pair.dst.1);
                }
                Err(_) => return false,
            }
        }
        true
    };

    let mut params = start;
    let mut current_cost = cost(&to_pixels(&params), inliers);
    let mut lambda = LAMBDA_INIT;
    let mut failures = 0;
    let mut solve_failures = 0;
    let mut accepted_any = false;
    let mut iterations = 0;
    let mut r = Vec::with_capacity(n_res);
    let mut r_plus = Vec::with_capacity(n_res);
    let mut r_minus = Vec::with_capacity(n_res);
    let mut jac = vec![0.0; n_res * 8];

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if !residuals(&params, &mut r) {
            break;
        }
        // central differences, column by column
        for k in 0..8 {
            let step = JACOBIAN_STEP * params[k].abs().max(1.0);
            let mut plus = params;
            let mut minus = params;
            plus[k] += step;
            minus[k] -= step;
            if !residuals(&plus, &mut r_plus) || !residuals(&minus, &mut r_minus) {
                return Ok(unchanged);
            }
            for i in 0..n_res {
                jac[i * 8 + k] = (r_plus[i] - r_minus[i]) / (2.0 * step);
            }
        }
        let mut jtj = [0.0; 64];
        let mut jtr = [0.0; 8];
        for i in 0..n_res {
            let row = &jac[i * 8..i * 8 + 8];
            for a in 0..8 {
                jtr[a] += row[a] * r[i];
                for b in a..8 {
                    jtj[a * 8 + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..8 {
            for b in 0..a {
                jtj[a * 8 + b] = jtj[b * 8 + a];
            }
        }
        let max_diag = (0..8).map(|a| jtj[a * 9]).fold(0.0_f64, f64::max);

        // inner loop: escalate damping until a step reduces the cost
        let mut improved = false;
        while failures < MAX_CONSECUTIVE_FAILURES {
            let mut damped = jtj;
            for a in 0..8 {
                damped[a * 9] += lambda * jtj[a * 9].max(1e-12 * max_diag).max(1e-300);
            }
            let neg_g: Vec<f64> = jtr.iter().map(|g| -g).collect();
            let Some(delta) = solve_dense(&damped, &neg_g, 8) else {
                solve_failures += 1;
                failures += 1;
                lambda *= 10.0;
                continue;
            };
            let mut trial = params;
            for k in 0..8 {
                trial[k] += delta[k];
            }
            let trial_cost = cost(&to_pixels(&trial), inliers);
            if trial_cost < current_cost {
                let rel = (current_cost - trial_cost) / current_cost;
                params = trial;
                current_cost = trial_cost;
                lambda *= 0.1;
                failures = 0;
                solve_failures = 0;
                improved = true;
                accepted_any = true;
                if rel < RELATIVE_DECREASE_TOL {
                    iterations = MAX_ITERATIONS;
                }
                break;
            }
            failures += 1;
            lambda *= 10.0;
        }
        if !improved || current_cost == 0.0 {
            break;
        }
    }

    if !accepted_any && solve_failures >= MAX_CONSECUTIVE_FAILURES {
        return Err(GeometryError::SingularNormalEquations);
    }
    let Ok(refined) = Homography::new(to_pixels(&params)) else {
        return Ok(unchanged);
    };
    let final_cost = cost(refined.matrix(), inliers);
    if !(final_cost <= initial_cost) {
        return Ok(LmReport {
            iterations,
            ..unchanged
        });
    }
    Ok(LmReport {
        homography: refined,
        initial_cost,
        final_cost,
        iterations,
    })
}
