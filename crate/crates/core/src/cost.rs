//! Log-linear labeling-time model: ordinary least squares of log t on
//! (log B, log M) with an intercept, solved via the 3x3 normal equations,
//! plus goodness-of-fit diagnostics.
//!
//! Natural log throughout; the base only shifts the intercept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::StackFeatures;

/// Condition-number ceiling for the normal matrix.
const MAX_CONDITION: f64 = 1e8;

pub const DEFAULT_FLOOR_TIME: f64 = 60.0;

/// One observed labeling-time sample. All fields strictly positive so the
/// log transform is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSample {
    pub b: f64,
    pub m: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Joint coefficient of determination in log space.
    pub r_squared: f64,
    /// Simple-regression R^2 of log t on log B alone.
    pub r_squared_log_b: f64,
    /// Simple-regression R^2 of log t on log M alone.
    pub r_squared_log_m: f64,
    /// Residual standard deviation in log space.
    pub sigma: f64,
    pub n: usize,
    /// Standard errors of (alpha, beta, gamma).
    pub std_errors: [f64; 3],
}

/// Fitted coefficients of log t = alpha log B + beta log M + gamma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Prediction for featureless stacks (B = M = 0).
    pub floor_time: f64,
    pub diagnostics: FitDiagnostics,
}

impl CostModelParams {
    pub fn is_fitted(&self) -> bool {
        self.diagnostics.n >= 3
    }
}

/// OLS fit with the default floor time.
pub fn fit(samples: &[TimeSample]) -> Result<CostModelParams> {
    fit_with_floor(samples, DEFAULT_FLOOR_TIME)
}

pub fn fit_with_floor(samples: &[TimeSample], floor_time: f64) -> Result<CostModelParams> {
    if floor_time <= 0.0 {
        return Err(Error::Config(format!("floor_time {floor_time} must be > 0")));
    }
    let n = samples.len();
    if n < 3 {
        return Err(Error::Domain(format!("need >= 3 samples, got {n}")));
    }
    for s in samples {
        if !(s.b > 0.0 && s.m > 0.0 && s.t > 0.0) {
            return Err(Error::Domain(format!(
                "sample fields must be strictly positive: B={} M={} t={}",
                s.b, s.m, s.t
            )));
        }
    }

    let xs: Vec<[f64; 3]> = samples.iter().map(|s| [s.b.ln(), s.m.ln(), 1.0]).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.t.ln()).collect();

    // normal equations
    let mut xtx = [[0.0f64; 3]; 3];
    let mut xty = [0.0f64; 3];
    for (x, y) in xs.iter().zip(&ys) {
        for i in 0..3 {
            for j in 0..3 {
                xtx[i][j] += x[i] * x[j];
            }
            xty[i] += x[i] * y;
        }
    }

    check_conditioning(&xtx, &xs)?;

    let inv = invert3(&xtx).ok_or_else(|| {
        Error::RankDeficient("normal matrix is singular (log_b/log_m collinear)".into())
    })?;
    let mut coef = [0.0f64; 3];
    for i in 0..3 {
        for j in 0..3 {
            coef[i] += inv[i][j] * xty[j];
        }
    }

    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let pred = coef[0] * x[0] + coef[1] * x[1] + coef[2];
        ssr += (y - pred).powi(2);
        sst += (y - y_mean).powi(2);
    }
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    let sigma = if n > 3 {
        (ssr / (n - 3) as f64).sqrt()
    } else {
        0.0
    };
    let var = sigma * sigma;
    let std_errors = [
        (var * inv[0][0]).sqrt(),
        (var * inv[1][1]).sqrt(),
        (var * inv[2][2]).sqrt(),
    ];

    Ok(CostModelParams {
        alpha: coef[0],
        beta: coef[1],
        gamma: coef[2],
        floor_time,
        diagnostics: FitDiagnostics {
            r_squared,
            r_squared_log_b: simple_r2(&xs, &ys, 0),
            r_squared_log_m: simple_r2(&xs, &ys, 1),
            sigma,
            n,
            std_errors,
        },
    })
}

/// Predicted labeling time in seconds. Featureless stacks (B = 0, hence
/// M = 0) fall back to the floor time rather than contaminating the fit
/// with an additive offset.
pub fn predict(params: &CostModelParams, features: &StackFeatures) -> Result<f64> {
    predict_bm(params, features.boundary_length, features.component_count)
}

pub fn predict_bm(params: &CostModelParams, b: f64, m: f64) -> Result<f64> {
    if !params.is_fitted() {
        return Err(Error::Domain("cost model params are not fitted".into()));
    }
    if b <= 0.0 || m <= 0.0 {
        return Ok(params.floor_time);
    }
    // the floor is a lower bound, not just the featureless fallback: near-empty
    // predicted masks would otherwise extrapolate to implausibly fast times
    Ok((params.alpha * b.ln() + params.beta * m.ln() + params.gamma)
        .exp()
        .max(params.floor_time))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResidual {
    pub b: f64,
    pub m: f64,
    pub t: f64,
    pub log_t: f64,
    pub predicted_log_t: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub residuals: Vec<SampleResidual>,
    pub r_squared: f64,
    pub sigma: f64,
    pub n: usize,
}

/// Per-sample residual table for plotting, with the summary statistics.
pub fn diagnostics_report(
    params: &CostModelParams,
    samples: &[TimeSample],
) -> Result<DiagnosticsReport> {
    if !params.is_fitted() {
        return Err(Error::Domain("cost model params are not fitted".into()));
    }
    if samples.is_empty() {
        return Err(Error::Domain("no samples for diagnostics".into()));
    }
    let residuals: Vec<SampleResidual> = samples
        .iter()
        .map(|s| {
            let log_t = s.t.ln();
            let predicted_log_t = params.alpha * s.b.ln() + params.beta * s.m.ln() + params.gamma;
            SampleResidual {
                b: s.b,
                m: s.m,
                t: s.t,
                log_t,
                predicted_log_t,
                residual: log_t - predicted_log_t,
            }
        })
        .collect();
    let n = residuals.len();
    let ssr: f64 = residuals.iter().map(|r| r.residual * r.residual).sum();
    let mean: f64 = residuals.iter().map(|r| r.log_t).sum::<f64>() / n as f64;
    let sst: f64 = residuals.iter().map(|r| (r.log_t - mean).powi(2)).sum();
    Ok(DiagnosticsReport {
        residuals,
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 },
        sigma: if n > 3 {
            (ssr / (n - 3) as f64).sqrt()
        } else {
            0.0
        },
        n,
    })
}

impl DiagnosticsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("b,m,t,log_t,predicted_log_t,residual\n");
        for r in &self.residuals {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.b, r.m, r.t, r.log_t, r.predicted_log_t, r.residual
            ));
        }
        out
    }
}

fn simple_r2(xs: &[[f64; 3]], ys: &[f64], feature: usize) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().map(|x| x[feature]).sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x[feature] - mx) * (y - my);
        sxx += (x[feature] - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy * sxy) / (sxx * syy)
}

fn check_conditioning(xtx: &[[f64; 3]; 3], xs: &[[f64; 3]]) -> Result<()> {
    let eig = symmetric_eigenvalues3(xtx);
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    let cond = if min.abs() < f64::EPSILON * max.abs() {
        f64::INFINITY
    } else {
        (max / min).abs()
    };
    if cond <= MAX_CONDITION {
        return Ok(());
    }
    // name the offending feature for the error message
    let n = xs.len() as f64;
    let var = |j: usize| {
        let mean = xs.iter().map(|x| x[j]).sum::<f64>() / n;
        xs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n
    };
    let (vb, vm) = (var(0), var(1));
    let which = if vb < 1e-12 && vm < 1e-12 {
        "log_b and log_m are both constant"
    } else if vb < 1e-12 {
        "log_b is constant"
    } else if vm < 1e-12 {
        "log_m is constant"
    } else {
        "log_b and log_m are affinely dependent"
    };
    Err(Error::RankDeficient(format!(
        "{which} (condition estimate {cond:.3e} > {MAX_CONDITION:.0e})"
    )))
}

/// Eigenvalues of a symmetric 3x3 matrix via the trigonometric closed form.
fn symmetric_eigenvalues3(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    if p1 == 0.0 {
        return [a[0][0], a[1][1], a[2][2]];
    }
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    [e1, e2, e3]
}

fn invert3(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut inv = [[0.0f64; 3]; 3];
    inv[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
    inv[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
    inv[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
    inv[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
    inv[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
    inv[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
    inv[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
    inv[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
    inv[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
    Some(inv)
}

/// Seeded generator of time samples from known coefficients with
/// multiplicative lognormal noise. Shared by tests and the simulation's
/// synthetic ground truth.
pub fn generate_samples(
    alpha: f64,
    beta: f64,
    gamma: f64,
    noise_sigma: f64,
    n: usize,
    seed: u64,
) -> Vec<TimeSample> {
    use rand::Rng;
    use rand_distr::{Distribution, Normal};
    let mut rng = crate::util::stage_rng(seed, "cost-sample-gen");
    let normal = Normal::new(0.0, noise_sigma).expect("sigma >= 0");
    (0..n)
        .map(|_| {
            let b = 10f64.powf(rng.gen_range(0.5..3.5));
            let m = 10f64.powf(rng.gen_range(0.0..1.5));
            let noise: f64 = if noise_sigma > 0.0 {
                normal.sample(&mut rng).exp()
            } else {
                1.0
            };
            let t = (alpha * b.ln() + beta * m.ln() + gamma).exp() * noise;
            TimeSample { b, m, t }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_fit_recovers_exactly() {
        let samples = generate_samples(0.8, 0.4, 2.0, 0.0, 50, 1);
        let p = fit(&samples).unwrap();
        assert!((p.alpha - 0.8).abs() < 1e-9);
        assert!((p.beta - 0.4).abs() < 1e-9);
        assert!((p.gamma - 2.0).abs() < 1e-9);
        assert!((p.diagnostics.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_samples_are_rank_deficient() {
        let s = TimeSample {
            b: 10.0,
            m: 2.0,
            t: 100.0,
        };
        assert!(matches!(fit(&[s; 10]), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn collinear_feature_is_named() {
        let samples: Vec<TimeSample> = (1..20)
            .map(|i| TimeSample {
                b: f64::from(i) * 3.0,
                m: 5.0,
                t: f64::from(i),
            })
            .collect();
        match fit(&samples) {
            Err(Error::RankDeficient(msg)) => assert!(msg.contains("log_m"), "{msg}"),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn nonpositive_fields_are_domain_errors() {
        let bad = TimeSample {
            b: 0.0,
            m: 1.0,
            t: 5.0,
        };
        let ok = TimeSample {
            b: 2.0,
            m: 1.0,
            t: 5.0,
        };
        assert!(matches!(fit(&[bad, ok, ok]), Err(Error::Domain(_))));
    }

    #[test]
    fn noisy_fit_recovers_within_three_standard_errors() {
        let samples = generate_samples(0.8, 0.4, 2.0, 0.3, 200, 7);
        let p = fit(&samples).unwrap();
        let se = p.diagnostics.std_errors;
        assert!((p.alpha - 0.8).abs() < 3.0 * se[0], "alpha {}", p.alpha);
        assert!((p.beta - 0.4).abs() < 3.0 * se[1], "beta {}", p.beta);
        assert!((p.gamma - 2.0).abs() < 3.0 * se[2], "gamma {}", p.gamma);
        // residual normality sanity: low skew in log space
        let report = diagnostics_report(&p, &samples).unwrap();
        let n = report.n as f64;
        let mean = report.residuals.iter().map(|r| r.residual).sum::<f64>() / n;
        let sd = (report
            .residuals
            .iter()
            .map(|r| (r.residual - mean).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let skew = report
            .residuals
            .iter()
            .map(|r| ((r.residual - mean) / sd).powi(3))
            .sum::<f64>()
            / n;
        assert!(skew.abs() < 0.5, "residual skew {skew}");
    }

    #[test]
    fn predict_known_points() {
        let samples = generate_samples(0.8, 0.4, 2.0, 0.0, 30, 3);
        let p = fit(&samples).unwrap();
        // exp(0.8 ln B + 0.4 ln M + 2.0) at B = e^6, M = e^2
        let expected = (0.8 * 6.0 + 0.4 * 2.0 + 2.0f64).exp();
        assert!((predict_bm(&p, 6.0f64.exp(), 2.0f64.exp()).unwrap() - expected).abs() < 1e-6);
        // featureless -> floor
        assert_eq!(predict_bm(&p, 0.0, 0.0).unwrap(), p.floor_time);
        // tiny features extrapolate below the floor -> clamped to it
        assert_eq!(predict_bm(&p, 1.0, 1.0).unwrap(), p.floor_time);
        // generated sample inverts exactly
        let s = &samples[0];
        assert!((predict_bm(&p, s.b, s.m).unwrap() - s.t).abs() < 1e-9 * s.t.max(1.0));
    }

    #[test]
    fn residuals_sum_to_zero_with_intercept() {
        let samples = generate_samples(0.8, 0.4, 2.0, 0.3, 100, 11);
        let p = fit(&samples).unwrap();
        let report = diagnostics_report(&p, &samples).unwrap();
        let sum: f64 = report.residuals.iter().map(|r| r.residual).sum();
        assert!(sum.abs() < 1e-9, "residual sum {sum}");
    }

    #[test]
    fn r_squared_matches_recompute_from_residuals() {
        let samples = generate_samples(0.8, 0.4, 2.0, 0.3, 80, 13);
        let p = fit(&samples).unwrap();
        let report = diagnostics_report(&p, &samples).unwrap();
        assert!((report.r_squared - p.diagnostics.r_squared).abs() < 1e-12);
        assert!(report.r_squared >= 0.0);
    }

    #[test]
    fn scaling_times_shifts_only_gamma() {
        let samples = generate_samples(0.8, 0.4, 2.0, 0.2, 60, 17);
        let p0 = fit(&samples).unwrap();
        let c = 3.5f64;
        let scaled: Vec<TimeSample> = samples
            .iter()
            .map(|s| TimeSample {
                b: s.b,
                m: s.m,
                t: s.t * c,
            })
            .collect();
        let p1 = fit(&scaled).unwrap();
        assert!((p1.alpha - p0.alpha).abs() < 1e-9);
        assert!((p1.beta - p0.beta).abs() < 1e-9);
        assert!((p1.gamma - (p0.gamma + c.ln())).abs() < 1e-9);
    }

    #[test]
    fn scaling_b_shifts_gamma_by_minus_alpha_log_c() {
        let samples = generate_samples(0.8, 0.4, 2.0, 0.2, 60, 19);
        let p0 = fit(&samples).unwrap();
        let c = 2.0f64;
        let scaled: Vec<TimeSample> = samples
            .iter()
            .map(|s| TimeSample {
                b: s.b * c,
                m: s.m,
                t: s.t,
            })
            .collect();
        let p1 = fit(&scaled).unwrap();
        assert!((p1.alpha - p0.alpha).abs() < 1e-9);
        assert!((p1.gamma - (p0.gamma - p0.alpha * c.ln())).abs() < 1e-9);
    }

    #[test]
    fn predict_is_monotone_when_coefficients_positive() {
        let samples = generate_samples(0.8, 0.4, 2.0, 0.0, 30, 23);
        let p = fit(&samples).unwrap();
        let t1 = predict_bm(&p, 10.0, 2.0).unwrap();
        let t2 = predict_bm(&p, 20.0, 2.0).unwrap();
        let t3 = predict_bm(&p, 10.0, 4.0).unwrap();
        assert!(t2 > t1 && t3 > t1);
    }
}
