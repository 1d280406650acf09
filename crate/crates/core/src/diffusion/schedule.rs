use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Linear β schedule scaled by `s`, with cumulative products `ᾱ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ScheduleRecord", try_from = "ScheduleRecord")]
pub struct NoiseSchedule {
    steps: usize,
    scale: f64,
    beta_min: f64,
    beta_max: f64,
    /// `betas[t - 1]` is β_t.
    betas: Vec<f64>,
    /// `alpha_bars[t]` is ᾱ_t, with `alpha_bars[0] = 1`.
    alpha_bars: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleRecord {
    steps: usize,
    scale: f64,
    beta_min: f64,
    beta_max: f64,
}

impl From<NoiseSchedule> for ScheduleRecord {
    fn from(s: NoiseSchedule) -> Self {
        ScheduleRecord {
            steps: s.steps,
            scale: s.scale,
            beta_min: s.beta_min,
            beta_max: s.beta_max,
        }
    }
}

impl TryFrom<ScheduleRecord> for NoiseSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRecord) -> Result<Self> {
        build_schedule(r.steps, r.scale, r.beta_min, r.beta_max)
    }
}

pub fn build_schedule(steps: usize, scale: f64, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Config("noise schedule needs at least one step".into()));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max) {
        return Err(Error::Config(format!("need 0 < beta_min <= beta_max, got {beta_min}, {beta_max}")));
    }
    if !(scale > 0.0 && scale * beta_max < 1.0) {
        return Err(Error::Config(format!("need 0 < scale and scale * beta_max < 1, got scale {scale}")));
    }
    let denom = (steps.max(2) - 1) as f64;
    let betas: Vec<f64> = (0..steps)
        .map(|k| scale * (beta_min + k as f64 / denom * (beta_max - beta_min)))
        .collect();
    let mut alpha_bars = Vec::with_capacity(steps + 1);
    alpha_bars.push(1.0);
    for b in &betas {
        let prev = *alpha_bars.last().expect("nonempty");
        alpha_bars.push(prev * (1.0 - b));
    }
    Ok(NoiseSchedule {
        steps,
        scale,
        beta_min,
        beta_max,
        betas,
        alpha_bars,
    })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// ᾱ_0..=ᾱ_T.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// β_t for `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta(t)
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return Err(Error::Config(format!("timestep {t} exceeds schedule length {}", self.steps)));
        }
        Ok(())
    }

    /// Coefficients `(c_0, c_t)` of the posterior mean
    /// `μ̃_t = c_0·x̂_0 + c_t·x_t` for `1 <= t <= T`.
    pub fn posterior_coefficients(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bars[t];
        let ab_prev = self.alpha_bars[t - 1];
        let beta = self.beta(t);
        (
            ab_prev.sqrt() * beta / (1.0 - ab),
            (1.0 - beta).sqrt() * (1.0 - ab_prev) / (1.0 - ab),
        )
    }

    /// Variance of `q(x_{t-1} | x_t, x_0)`; the fixed reverse-step variance.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.beta(t) * (1.0 - self.alpha_bars[t - 1]) / (1.0 - self.alpha_bars[t])
    }
}

/// `√ᾱ_t·x_0 + √(1−ᾱ_t)·ε`.
pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if x0.len() != eps.len() {
        return Err(Error::DimensionMismatch {
            context: "q_sample noise",
            expected: x0.len(),
            actual: eps.len(),
        });
    }
    let (a, b) = (sched.alpha_bar(t).sqrt(), (1.0 - sched.alpha_bar(t)).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Row-wise [`q_sample`] with a timestep per row.
pub fn q_sample_rows(x0: &Matrix, ts: &[usize], eps: &Matrix, sched: &NoiseSchedule) -> Result<Matrix> {
    if ts.len() != x0.rows() || (eps.rows(), eps.cols()) != (x0.rows(), x0.cols()) {
        return Err(Error::DimensionMismatch {
            context: "q_sample_rows",
            expected: x0.rows() * x0.cols(),
            actual: eps.rows() * eps.cols(),
        });
    }
    let mut out = Matrix::zeros(x0.rows(), x0.cols());
    for (r, &t) in ts.iter().enumerate() {
        let row = q_sample(x0.row(r), t, eps.row(r), sched)?;
        out.row_mut(r).copy_from_slice(&row);
    }
    Ok(out)
}
