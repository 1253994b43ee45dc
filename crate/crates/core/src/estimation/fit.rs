use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    /// Stop once `‖Δp‖ < rel_step·(‖p‖ + rel_step)`.
    pub rel_step: f64,
    pub max_iterations: usize,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            rel_step: 1e-10,
            max_iterations: 200,
            initial_damping: 1e-3,
        }
    }
}

/// Result of a least-squares fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub residual_rms: f64,
    pub samples: usize,
    /// Half-width of the 95% interval from the linearised covariance
    /// `σ²(JᵀJ)⁻¹`.
    pub ci95: Vec<f64>,
    pub iterations: usize,
}

impl FitReport {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for FitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples      {}", self.samples)?;
        writeln!(f, "iterations   {}", self.iterations)?;
        writeln!(f, "residual rms {:.6e}", self.residual_rms)?;
        for ((n, p), c) in self.names.iter().zip(&self.params).zip(&self.ci95) {
            writeln!(f, "{n:<12} {p:>14.8e} ± {c:.3e}")?;
        }
        Ok(())
    }
}

/// Damped Gauss–Newton. `model(p)` returns residuals and their Jacobian
/// with respect to `p`.
pub fn levenberg_marquardt<F>(names: &[&str], p0: DVector<f64>, opts: LmOptions, model: F) -> Result<FitReport>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let n_par = p0.len();
    let (mut r, mut jac) = model(&p0);
    let n = r.len();
    if n <= n_par {
        return Err(Error::Fit(format!("{n} samples cannot determine {n_par} parameters")));
    }
    check_rank(&jac)?;
    let mut p = p0;
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for i in 0..n_par {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let small = step.norm() < opts.rel_step * (p.norm() + opts.rel_step);
            let trial = &p + &step;
            let (r_t, j_t) = model(&trial);
            let c_t = r_t.norm_squared();
            if c_t.is_finite() && c_t <= cost {
                p = trial;
                r = r_t;
                jac = j_t;
                cost = c_t;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
            } else {
                lambda *= 10.0;
            }
            if small {
                converged = true;
            }
            if accepted || converged {
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            return Err(Error::Fit(format!(
                "damping exhausted after {iterations} iterations, residual rms {:.3e}",
                (cost / n as f64).sqrt()
            )));
        }
    }
    let residual_rms = (cost / n as f64).sqrt();
    if !converged {
        return Err(Error::Fit(format!(
            "no convergence in {} iterations, residual rms {residual_rms:.3e}",
            opts.max_iterations
        )));
    }
    check_rank(&jac)?;
    let sigma2 = cost / (n - n_par) as f64;
    let cov = (jac.transpose() * &jac)
        .try_inverse()
        .ok_or_else(|| Error::Fit("normal matrix singular at solution".into()))?;
    let ci95 = (0..n_par).map(|i| 1.96 * (sigma2 * cov[(i, i)]).max(0.0).sqrt()).collect();
    Ok(FitReport {
        names: names.iter().map(|s| s.to_string()).collect(),
        params: p.iter().copied().collect(),
        residual_rms,
        samples: n,
        ci95,
        iterations,
    })
}

/// Reject Jacobians whose columns are (numerically) dependent.
fn check_rank(jac: &DMatrix<f64>) -> Result<()> {
    // Scale columns so the test is unit-independent.
    let mut scaled = jac.clone();
    for mut c in scaled.column_iter_mut() {
        let norm = c.norm();
        if norm == 0.0 {
            return Err(Error::Fit("a parameter has no influence on the data".into()));
        }
        c /= norm;
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 1e-9 * max {
        return Err(Error::Fit(format!(
            "parameters not identifiable from these samples (singular value ratio {:.1e})",
            min / max
        )));
    }
    Ok(())
}
