use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{AxisBounds, DiscParams, DiscTemplate, EnergyField};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;

/// Per-parameter gradient step sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSizes {
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub xc: f64,
    pub yc: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self {
            a: 0.2,
            b: 0.2,
            theta: 0.02,
            xc: 0.5,
            yc: 0.5,
        }
    }
}

impl StepSizes {
    fn to_array(self) -> [f64; 5] {
        [self.a, self.b, self.theta, self.xc, self.yc]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescentConfig {
    pub steps: StepSizes,
    pub max_iter: usize,
    /// Stop once the largest parameter update (px or rad) falls below this.
    pub tolerance: f64,
    /// Gradient components are clipped to `±grad_clip` before stepping.
    pub grad_clip: f64,
    pub sampling: DiscTemplate,
    /// Axis bounds; `None` uses `[2, min(width, height) / 2]`.
    pub bounds: Option<AxisBounds>,
    /// Keep every iterate in the trace.
    pub record_params: bool,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            steps: StepSizes::default(),
            max_iter: 500,
            tolerance: 1e-3,
            grad_clip: 5.0,
            sampling: DiscTemplate::default(),
            bounds: None,
            record_params: false,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        let steps_ok = self
            .steps
            .to_array()
            .iter()
            .all(|s| s.is_finite() && *s >= 0.0);
        if !steps_ok {
            return Err(Error::Config(
                "step sizes must be finite and non-negative".into(),
            ));
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(Error::Config(format!("tolerance {}", self.tolerance)));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config(format!("grad_clip {}", self.grad_clip)));
        }
        if let Some(b) = self.bounds {
            if !(b.min > 0.0 && b.min <= b.max && b.max.is_finite()) {
                return Err(Error::Config(format!("axis bounds {b:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
    /// The disc collapsed onto the minimum axis length on both axes.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub iterations: usize,
    /// Energy of every iterate, starting with the initial parameters.
    pub energies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<DiscParams>>,
    pub termination: Termination,
    /// Index into `energies` of the returned iterate.
    pub best_index: usize,
}

impl FitTrace {
    pub fn best_energy(&self) -> f64 {
        self.energies[self.best_index]
    }

    /// Lowest energy seen up to and including each iteration.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.energies
            .iter()
            .scan(f64::INFINITY, |best, &e| {
                *best = best.min(e);
                Some(*best)
            })
            .collect()
    }
}

fn angle_step(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % PI;
    d.min(PI - d)
}

/// Gradient descent on the contrast energy from `init`.
///
/// Each step moves `p ← p − η ⊙ clip(∇E)`, then clamps the axes into bounds
/// and reduces θ into `[0, π)`. The returned parameters are the lowest-energy
/// iterate seen, which need not be the last one.
pub fn fit(
    img: &GrayImage,
    init: DiscParams,
    cfg: &DescentConfig,
) -> Result<(DiscParams, FitTrace)> {
    cfg.validate()?;
    if !init.is_finite() {
        return Err(Error::Config(format!(
            "non-finite initial parameters {init:?}"
        )));
    }
    let bounds = cfg
        .bounds
        .unwrap_or_else(|| AxisBounds::for_image(img.width(), img.height()));
    let field = EnergyField::new(img);
    let eta = cfg.steps.to_array();

    let mut p = bounds.project(init);
    let mut trace = FitTrace {
        iterations: 0,
        energies: Vec::new(),
        params: cfg.record_params.then(Vec::new),
        termination: Termination::MaxIter,
        best_index: 0,
    };
    let mut best = (p, f64::INFINITY);
    let mut converged = false;

    loop {
        let n = cfg.sampling.n_samples(&p);
        let (energy, grad) = field.energy_and_gradient(&p, n)?;
        let grad = grad.clipped(cfg.grad_clip);
        let finite = energy.e.is_finite() && grad.to_array().iter().all(|g| g.is_finite());
        trace.energies.push(energy.e);
        if let Some(ps) = trace.params.as_mut() {
            ps.push(p);
        }
        if !finite {
            let iteration = trace.iterations;
            return Err(Error::Numeric {
                iteration,
                trace: Box::new(trace),
            });
        }
        if energy.e < best.1 {
            best = (p, energy.e);
            trace.best_index = trace.energies.len() - 1;
        }
        if converged {
            trace.termination = Termination::Converged;
            break;
        }
        if trace.iterations >= cfg.max_iter {
            trace.termination = Termination::MaxIter;
            break;
        }

        let g = grad.to_array();
        let cur = p.to_array();
        let mut next = [0.0; 5];
        for i in 0..5 {
            next[i] = cur[i] - eta[i] * g[i];
        }
        let next = bounds.project(DiscParams::from_array(next));
        let max_update = (next.a - p.a)
            .abs()
            .max((next.b - p.b).abs())
            .max(angle_step(next.theta, p.theta))
            .max((next.xc - p.xc).abs())
            .max((next.yc - p.yc).abs());
        p = next;
        trace.iterations += 1;
        converged = max_update < cfg.tolerance;
    }

    let (best_p, _) = best;
    if best_p.a <= bounds.min && best_p.b <= bounds.min {
        trace.termination = Termination::Degenerate;
    }
    Ok((best_p, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_image_stays_put() {
        let img = GrayImage::filled(64, 64, 0.0);
        let init = DiscParams::new(10.0, 8.0, 0.3, 30.0, 33.0);
        let (p, trace) = fit(&img, init, &DescentConfig::default()).unwrap();
        assert_eq!(trace.termination, Termination::Converged);
        assert_eq!(trace.energies.len(), trace.iterations + 1);
        assert!(trace.best_energy().abs() < 1e-12);
        assert!((p.a - init.a).abs() < 1e-9 && (p.xc - init.xc).abs() < 1e-9);
    }

    #[test]
    fn trace_length_and_best_index() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            let d = ((x as f64 - 32.0).powi(2) + (y as f64 - 30.0).powi(2)).sqrt();
            if d < 12.0 {
                0.9
            } else {
                0.1
            }
        });
        let cfg = DescentConfig {
            max_iter: 40,
            record_params: true,
            ..Default::default()
        };
        let (p, trace) = fit(&img, DiscParams::circle(9.0, 35.0, 28.0), &cfg).unwrap();
        assert_eq!(trace.energies.len(), trace.iterations + 1);
        assert_eq!(trace.params.as_ref().unwrap().len(), trace.energies.len());
        assert_eq!(trace.params.as_ref().unwrap()[trace.best_index], p);
        let best = trace.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*best.last().unwrap(), trace.best_energy());
    }

    #[test]
    fn rejects_bad_config() {
        let img = GrayImage::filled(16, 16, 0.5);
        let mut cfg = DescentConfig::default();
        cfg.steps.a = f64::NAN;
        assert!(matches!(
            fit(&img, DiscParams::circle(4.0, 8.0, 8.0), &cfg),
            Err(Error::Config(_))
        ));
        let init = DiscParams::circle(f64::INFINITY, 8.0, 8.0);
        assert!(fit(&img, init, &DescentConfig::default()).is_err());
    }

    #[test]
    fn config_from_toml() {
        let cfg: DescentConfig = toml::from_str(
            "max_iter = 50\n[steps]\nxc = 0.25\n[sampling]\nkind = \"fixed\"\nn = 256\n",
        )
        .unwrap();
        assert_eq!(cfg.max_iter, 50);
        assert_eq!(cfg.steps.xc, 0.25);
        assert_eq!(cfg.steps.a, 0.2);
        assert_eq!(cfg.sampling, DiscTemplate::Fixed { n: 256 });
        assert!(toml::from_str::<DescentConfig>("bogus = 1").is_err());
    }
}
