use rand::seq::index::sample;

use crate::rng::SeedStream;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many coordinates (sampled without replacement); `None` checks all.
    pub max_coords: Option<usize>,
    /// Denominator floor for the relative error, so coordinates whose true
    /// derivative is ~0 are judged on absolute error at this scale.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: None,
            floor: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compare `analytic` to central differences of `loss` at `params`.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check<F>(loss: F, params: &[f64], analytic: &[f64], opts: &GradCheckOptions) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length must match parameters");
    let coords: Vec<usize> = match opts.max_coords {
        Some(n) if n < params.len() => {
            let mut rng = SeedStream::new(opts.seed).stream("gradcheck");
            let mut idx = sample(&mut rng, params.len(), n).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..params.len()).collect(),
    };
    let mut p = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: coords.len(),
    };
    for &i in &coords {
        let orig = p[i];
        p[i] = orig + opts.step;
        let plus = loss(&p);
        p[i] = orig - opts.step;
        let minus = loss(&p);
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        if rel > report.max_rel_error || rel.is_nan() {
            report = GradCheckReport {
                max_rel_error: if rel.is_nan() { f64::INFINITY } else { rel },
                worst_index: i,
                analytic: a,
                numeric,
                checked: coords.len(),
            };
        }
    }
    report
}
