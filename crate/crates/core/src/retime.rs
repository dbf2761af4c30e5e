//! Adaptive speedup: a quadratic energy over per-frame speedups, minimized in
//! closed form, and the threshold sweep that picks `rho`.
//!
//! ```text
//! E(S) = sum (1 - V^_t)(S_t - R_min)^2 + gamma sum V^_t (S_t - R_o)^2
//!      + beta (mean(S) - R_o)^2 + alpha sum (S_t - S_{t+1})^2
//! ```
//!
//! Setting the gradient to zero gives `A S = b` with
//! `A = 2 diag(w) + 2 alpha L + (2 beta / Tv^2) 11'`, `w_t = (1 - V^_t) + gamma V^_t`,
//! `L` the path-graph Laplacian and
//! `b = 2 ((1 - V^) R_min + gamma V^ R_o) + (2 beta / Tv) R_o 1`.
//! The tridiagonal part is solved with the Thomas algorithm and the all-ones
//! term with a Sherman-Morrison correction.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::speediness::{speediness_curve, SpeedinessAnalysis, SpeedupVector, RHO_GRID};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetimeParams {
    /// Target overall speedup.
    pub r_o: f64,
    /// Speedup for frames with full speediness.
    pub r_min: f64,
    /// Smoothness weight.
    pub alpha: f64,
    /// Rate weight; `None` means `100 * Tv`.
    pub beta: Option<f64>,
    /// Pull of low-speediness frames towards `r_o`.
    pub gamma: f64,
}

impl Default for RetimeParams {
    fn default() -> Self {
        RetimeParams { r_o: 2.0, r_min: 1.0, alpha: 10.0, beta: None, gamma: 0.1 }
    }
}

impl RetimeParams {
    pub fn with_target(r_o: f64) -> Self {
        RetimeParams { r_o, ..Self::default() }
    }

    pub fn beta_for(&self, tv: usize) -> f64 {
        self.beta.unwrap_or(100.0 * tv as f64)
    }

    /// Copy with `beta` fixed for a video of `tv` frames.
    pub fn resolved(&self, tv: usize) -> Self {
        RetimeParams { beta: Some(self.beta_for(tv)), ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.alpha, self.gamma, self.beta.unwrap_or(0.0)];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("alpha, beta and gamma must be finite and non-negative"));
        }
        if !(self.r_min.is_finite() && self.r_o.is_finite()) {
            return Err(Error::invalid("speedup targets must be finite"));
        }
        if self.r_min < 1.0 {
            return Err(Error::invalid(format!("R_min must be at least 1, got {}", self.r_min)));
        }
        if self.r_o < self.r_min {
            return Err(Error::invalid(format!("R_o ({}) must not be below R_min ({})", self.r_o, self.r_min)));
        }
        Ok(())
    }
}

fn check_inputs(s_len: usize, v_hat: &[f64]) -> Result<()> {
    if s_len != v_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} speedups", v_hat.len()),
            actual: s_len.to_string(),
        });
    }
    if v_hat.len() < 2 {
        return Err(Error::invalid("retiming needs at least 2 frames"));
    }
    if v_hat.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("V_hat values must lie in [0, 1]"));
    }
    Ok(())
}

pub fn objective(s: &[f64], v_hat: &[f64], p: &RetimeParams) -> Result<f64> {
    check_inputs(s.len(), v_hat)?;
    let tv = s.len();
    let beta = p.beta_for(tv);
    let mut speed = 0.0;
    let mut pull = 0.0;
    for (&x, &v) in s.iter().zip(v_hat) {
        speed += (1.0 - v) * (x - p.r_min).powi(2);
        pull += v * (x - p.r_o).powi(2);
    }
    let mean = s.iter().sum::<f64>() / tv as f64;
    let smooth: f64 = s.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum();
    Ok(speed + p.gamma * pull + beta * (mean - p.r_o).powi(2) + p.alpha * smooth)
}

pub fn objective_grad(s: &[f64], v_hat: &[f64], p: &RetimeParams) -> Result<Vec<f64>> {
    check_inputs(s.len(), v_hat)?;
    let tv = s.len();
    let beta = p.beta_for(tv);
    let mean = s.iter().sum::<f64>() / tv as f64;
    let rate = 2.0 * beta / tv as f64 * (mean - p.r_o);
    Ok((0..tv)
        .map(|t| {
            let mut lap = 0.0;
            if t > 0 {
                lap += s[t] - s[t - 1];
            }
            if t + 1 < tv {
                lap += s[t] - s[t + 1];
            }
            2.0 * (1.0 - v_hat[t]) * (s[t] - p.r_min)
                + 2.0 * p.gamma * v_hat[t] * (s[t] - p.r_o)
                + rate
                + 2.0 * p.alpha * lap
        })
        .collect())
}

/// The normal equations `A S = b` in structured form.
#[derive(Debug, Clone, PartialEq)]
pub struct RetimeSystem {
    /// Main diagonal of the tridiagonal part.
    pub diag: Vec<f64>,
    /// Constant off-diagonal of the tridiagonal part (`-2 alpha`).
    pub off: f64,
    /// Coefficient of the all-ones matrix (`2 beta / Tv^2`).
    pub rank_one: f64,
    pub rhs: Vec<f64>,
    /// Data weights `w_t = (1 - V^_t) + gamma V^_t`.
    pub weights: Vec<f64>,
}

impl RetimeSystem {
    pub fn new(v_hat: &[f64], p: &RetimeParams) -> Result<Self> {
        p.validate()?;
        check_inputs(v_hat.len(), v_hat)?;
        let tv = v_hat.len();
        let n = tv as f64;
        let beta = p.beta_for(tv);
        let weights: Vec<f64> = v_hat.iter().map(|v| (1.0 - v) + p.gamma * v).collect();
        let diag = (0..tv)
            .map(|t| {
                let degree = if t == 0 || t + 1 == tv { 1.0 } else { 2.0 };
                2.0 * weights[t] + 2.0 * p.alpha * degree
            })
            .collect();
        let rhs =
            v_hat.iter().map(|v| 2.0 * ((1.0 - v) * p.r_min + p.gamma * v * p.r_o) + 2.0 * beta / n * p.r_o).collect();
        Ok(RetimeSystem { diag, off: -2.0 * p.alpha, rank_one: 2.0 * beta / (n * n), rhs, weights })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let total: f64 = x.iter().sum();
        (0..n)
            .map(|t| {
                let mut y = self.diag[t] * x[t] + self.rank_one * total;
                if t > 0 {
                    y += self.off * x[t - 1];
                }
                if t + 1 < n {
                    y += self.off * x[t + 1];
                }
                y
            })
            .collect()
    }

    /// `max |A x - b|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(&self.rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            let band = if i == j {
                self.diag[i]
            } else if i.abs_diff(j) == 1 {
                self.off
            } else {
                0.0
            };
            band + self.rank_one
        })
    }

    fn singular(&self) -> Error {
        Error::Underdetermined(
            "retime system is singular: no frame has positive data weight and the rate term cannot pin the \
             solution (raise gamma or beta)"
                .into(),
        )
    }

    /// Thomas algorithm on the tridiagonal part; `None` if a pivot vanishes.
    fn thomas(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot <= 0.0 {
            return None;
        }
        c[0] = self.off / pivot;
        d[0] = rhs[0] / pivot;
        for t in 1..n {
            pivot = self.diag[t] - self.off * c[t - 1];
            if pivot <= f64::EPSILON * self.diag[t].abs().max(1.0) {
                return None;
            }
            c[t] = self.off / pivot;
            d[t] = (rhs[t] - self.off * d[t - 1]) / pivot;
        }
        for t in (0..n - 1).rev() {
            d[t] -= c[t] * d[t + 1];
        }
        Some(d)
    }

    /// Structured O(Tv) solve.
    pub fn solve(&self) -> Result<Vec<f64>> {
        self.solve_with(&self.rhs)
    }

    /// Structured O(Tv) solve of `A x = rhs`.
    pub fn solve_with(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let has_weight = self.weights.iter().any(|&w| w > 0.0);
        if self.off != 0.0 && has_weight {
            // tridiagonal part is positive definite
            let y = self.thomas(rhs).ok_or_else(|| self.singular())?;
            if self.rank_one == 0.0 {
                return Ok(y);
            }
            let z = self.thomas(&vec![1.0; n]).ok_or_else(|| self.singular())?;
            let sy: f64 = y.iter().sum();
            let sz: f64 = z.iter().sum();
            let k = self.rank_one * sy / (1.0 + self.rank_one * sz);
            return Ok(y.iter().zip(&z).map(|(a, b)| a - k * b).collect());
        }
        if self.off != 0.0 {
            // every w_t = 0: only the Laplacian and the rate term remain, and
            // the constant target satisfies both
            if self.rank_one == 0.0 {
                return Err(self.singular());
            }
            let level = rhs[0] / (self.rank_one * n as f64);
            return Ok(vec![level; n]);
        }
        // alpha = 0: diagonal plus rank one
        let zeros: Vec<usize> = (0..n).filter(|&t| self.diag[t] == 0.0).collect();
        match zeros.as_slice() {
            [] => {
                let y: Vec<f64> = (0..n).map(|t| rhs[t] / self.diag[t]).collect();
                let sy: f64 = y.iter().sum();
                let sz: f64 = self.diag.iter().map(|d| 1.0 / d).sum();
                let k = self.rank_one * sy / (1.0 + self.rank_one * sz);
                Ok((0..n).map(|t| y[t] - k / self.diag[t]).collect())
            }
            [z] if self.rank_one > 0.0 => {
                // row z fixes the sum; the others follow from it
                let total = rhs[*z] / self.rank_one;
                let mut s: Vec<f64> =
                    (0..n).map(|t| if t == *z { 0.0 } else { (rhs[t] - rhs[*z]) / self.diag[t] }).collect();
                s[*z] = total - s.iter().sum::<f64>();
                Ok(s)
            }
            _ => Err(self.singular()),
        }
    }

    /// Dense Cholesky solve, used to cross-check [`RetimeSystem::solve`].
    pub fn solve_dense(&self) -> Result<Vec<f64>> {
        let chol = self.to_dense().cholesky().ok_or_else(|| self.singular())?;
        Ok(chol.solve(&DVector::from_column_slice(&self.rhs)).iter().copied().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupCurve {
    pub s: Vec<f64>,
    pub achieved_mean: f64,
}

impl SpeedupCurve {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        if s.is_empty() || s.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("speedup curve must be non-empty and finite"));
        }
        let achieved_mean = s.iter().sum::<f64>() / s.len() as f64;
        Ok(SpeedupCurve { s, achieved_mean })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Input over output duration: the harmonic mean of `S`.
    pub fn duration_ratio(&self) -> f64 {
        self.s.len() as f64 / self.s.iter().map(|x| 1.0 / x).sum::<f64>()
    }
}

/// Minimizes the energy for the given normalized speedup vector.
///
/// Solves for the offset `D = S - R_o`: the constant `R_o` zeroes the pull,
/// rate and smoothness terms, so `A D = 2 (1 - V^) (R_min - R_o)`. Frames
/// with `V^ = 1` contribute an exact zero, which keeps `V^ = 1` at exactly
/// `R_o`.
pub fn solve(v_hat: &[f64], p: &RetimeParams) -> Result<SpeedupCurve> {
    let system = RetimeSystem::new(v_hat, p)?;
    let offset_rhs: Vec<f64> = v_hat.iter().map(|v| 2.0 * (1.0 - v) * (p.r_min - p.r_o)).collect();
    let s: Vec<f64> = system.solve_with(&offset_rhs)?.iter().map(|d| p.r_o + d).collect();
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Underdetermined("retime solve produced non-finite speedups".into()));
    }
    SpeedupCurve::new(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCandidate {
    pub rho: f64,
    pub achieved_mean: Option<f64>,
    pub duration_ratio: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ThresholdSelection {
    pub rho: f64,
    pub speedup: SpeedupVector,
    pub curve: SpeedupCurve,
    pub candidates: Vec<ThresholdCandidate>,
}

/// Index of the mean closest to `r_o`; earlier entries win ties.
pub fn closest_to_target(means: &[Option<f64>], r_o: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in means.iter().enumerate() {
        if let Some(m) = m {
            let gap = (m - r_o).abs();
            if best.is_none_or(|(_, g)| gap < g) {
                best = Some((i, gap));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Solves for each `rho` in [`RHO_GRID`] and keeps the one whose mean
/// speedup lands closest to `R_o`.
pub fn select_threshold(analysis: &SpeedinessAnalysis, p: &RetimeParams) -> Result<ThresholdSelection> {
    let mut candidates = Vec::with_capacity(RHO_GRID.len());
    let mut solved = Vec::with_capacity(RHO_GRID.len());
    let mut first_err = None;
    for &rho in &RHO_GRID {
        let outcome = analysis.speedup_vector(rho).and_then(|sv| Ok((solve(&sv.v_hat, p)?, sv)));
        match outcome {
            Ok((curve, sv)) => {
                candidates.push(ThresholdCandidate {
                    rho,
                    achieved_mean: Some(curve.achieved_mean),
                    duration_ratio: Some(curve.duration_ratio()),
                    error: None,
                });
                solved.push(Some((sv, curve)));
            }
            Err(e) => {
                candidates.push(ThresholdCandidate {
                    rho,
                    achieved_mean: None,
                    duration_ratio: None,
                    error: Some(e.to_string()),
                });
                solved.push(None);
                first_err.get_or_insert(e);
            }
        }
    }
    let means: Vec<Option<f64>> = candidates.iter().map(|c| c.achieved_mean).collect();
    let Some(best) = closest_to_target(&means, p.r_o) else {
        return Err(first_err.expect("no candidate and no error"));
    };
    let (speedup, curve) = solved[best].take().unwrap();
    Ok(ThresholdSelection { rho: RHO_GRID[best], speedup, curve, candidates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: usize,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "V_hat")]
    pub v_hat: f64,
    pub speediness: f64,
    #[serde(rename = "S_star")]
    pub s_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetimeReport {
    pub rho_star: f64,
    pub achieved_mean: f64,
    pub achieved_duration_ratio: f64,
    /// Parameters with `beta` resolved for this video.
    pub params: RetimeParams,
    pub candidates: Vec<ThresholdCandidate>,
    pub per_frame: Vec<FrameRecord>,
}

impl RetimeReport {
    pub fn new(sel: &ThresholdSelection, p: &RetimeParams) -> Self {
        let speed = speediness_curve(&sel.speedup);
        let per_frame = (0..sel.curve.len())
            .map(|t| FrameRecord {
                t,
                v: sel.speedup.v[t],
                v_hat: sel.speedup.v_hat[t],
                speediness: speed[t],
                s_star: sel.curve.s[t],
            })
            .collect();
        RetimeReport {
            rho_star: sel.rho,
            achieved_mean: sel.curve.achieved_mean,
            achieved_duration_ratio: sel.curve.duration_ratio(),
            params: p.resolved(sel.curve.len()),
            candidates: sel.candidates.clone(),
            per_frame,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,V,V_hat,speediness,S_star\n");
        for r in &self.per_frame {
            writeln!(out, "{},{},{},{},{}", r.t, r.v, r.v_hat, r.speediness, r.s_star).unwrap();
        }
        out
    }
}
