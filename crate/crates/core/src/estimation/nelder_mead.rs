//! Derivative-free simplex minimization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Convergence threshold on the spread of objective values over the simplex.
    pub f_tol: f64,
    /// Convergence threshold on the simplex diameter (max-norm from the best vertex).
    pub x_tol: f64,
    pub max_iter: usize,
    /// Per-coordinate offsets for the initial simplex. When absent each
    /// coordinate moves by `0.1 * |x0|`, or `0.01` where `x0` is zero.
    pub initial_step: Option<Vec<f64>>,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            f_tol: 1e-10,
            x_tol: 1e-8,
            max_iter: 50_000,
            initial_step: None,
            restarts: 2,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.f_tol > 0.0
            && self.x_tol > 0.0
            && self.reflection > 0.0
            && self.expansion > 1.0
            && self.expansion > self.reflection
            && self.contraction > 0.0
            && self.contraction < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.max_iter > 0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

struct Simplex {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Simplex {
    fn around<F: Fn(&[f64]) -> f64>(x0: &[f64], f0: f64, steps: &[f64], objective: &F) -> Self {
        let mut points = vec![x0.to_vec()];
        let mut values = vec![f0];
        for (i, step) in steps.iter().enumerate() {
            let mut p = x0.to_vec();
            p[i] += step;
            values.push(sanitize(objective(&p)));
            points.push(p);
        }
        Self { points, values }
    }

    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.points = idx.iter().map(|&i| self.points[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    fn spread(&self) -> f64 {
        let worst = self.values[self.values.len() - 1];
        let best = self.values[0];
        if worst.is_infinite() {
            f64::INFINITY
        } else {
            worst - best
        }
    }

    fn diameter(&self) -> f64 {
        let best = &self.points[0];
        self.points[1..]
            .iter()
            .flat_map(|p| p.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

fn default_steps(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| if v == 0.0 { 0.01 } else { 0.1 * v.abs() })
        .collect()
}

fn along(centroid: &[f64], worst: &[f64], coeff: f64) -> Vec<f64> {
    centroid
        .iter()
        .zip(worst)
        .map(|(c, w)| c + coeff * (c - w))
        .collect()
}

/// One simplex run from `x0`; returns the best vertex found.
fn run<F: Fn(&[f64]) -> f64>(
    objective: &F,
    x0: &[f64],
    f0: f64,
    steps: &[f64],
    config: &OptimizerConfig,
    budget: usize,
) -> Minimum {
    let n = x0.len();
    let mut simplex = Simplex::around(x0, f0, steps, objective);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.order();
        if simplex.spread() < config.f_tol || simplex.diameter() < config.x_tol {
            converged = true;
            break;
        }
        if iterations >= budget {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for p in &simplex.points[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let worst = simplex.points[n].clone();
        let f_best = simplex.values[0];
        let f_second = simplex.values[n - 1];
        let f_worst = simplex.values[n];

        let reflected = along(&centroid, &worst, config.reflection);
        let f_reflected = sanitize(objective(&reflected));

        if f_reflected < f_best {
            let expanded = along(&centroid, &worst, config.expansion);
            let f_expanded = sanitize(objective(&expanded));
            if f_expanded < f_reflected {
                simplex.points[n] = expanded;
                simplex.values[n] = f_expanded;
            } else {
                simplex.points[n] = reflected;
                simplex.values[n] = f_reflected;
            }
            continue;
        }
        if f_reflected < f_second {
            simplex.points[n] = reflected;
            simplex.values[n] = f_reflected;
            continue;
        }

        // contraction: outside if the reflection beat the worst vertex
        let (candidate, f_candidate, accept) = if f_reflected < f_worst {
            let p = along(&centroid, &worst, config.reflection * config.contraction);
            let f = sanitize(objective(&p));
            let ok = f <= f_reflected;
            (p, f, ok)
        } else {
            let p = along(&centroid, &worst, -config.contraction);
            let f = sanitize(objective(&p));
            let ok = f < f_worst;
            (p, f, ok)
        };
        if accept {
            simplex.points[n] = candidate;
            simplex.values[n] = f_candidate;
            continue;
        }

        let best = simplex.points[0].clone();
        for i in 1..=n {
            let p: Vec<f64> = best
                .iter()
                .zip(&simplex.points[i])
                .map(|(b, x)| b + config.shrink * (x - b))
                .collect();
            simplex.values[i] = sanitize(objective(&p));
            simplex.points[i] = p;
        }
    }
    simplex.order();
    Minimum {
        x: simplex.points[0].clone(),
        f: simplex.values[0],
        iterations,
        converged,
    }
}

/// Minimizes `objective` from `x0`. Hitting `max_iter` is reported through
/// `converged = false`, not as an error.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    objective: F,
    x0: &[f64],
    config: &OptimizerConfig,
) -> Result<Minimum> {
    config.validate()?;
    if x0.is_empty() {
        return Err(Error::InsufficientData("optimizer needs at least one dimension".into()));
    }
    let f0 = objective(x0);
    if !f0.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let initial_steps = match &config.initial_step {
        Some(steps) if steps.len() == x0.len() => steps.clone(),
        Some(steps) => {
            return Err(Error::Config(format!(
                "initial_step has {} entries for {} parameters",
                steps.len(),
                x0.len()
            )))
        }
        None => default_steps(x0),
    };

    let mut best = run(&objective, x0, f0, &initial_steps, config, config.max_iter);
    let mut used = best.iterations;
    for _ in 0..config.restarts {
        if used >= config.max_iter {
            break;
        }
        let steps = default_steps(&best.x);
        let next = run(&objective, &best.x, best.f, &steps, config, config.max_iter - used);
        used += next.iterations;
        let converged = next.converged;
        if next.f <= best.f {
            best = next;
        }
        best.converged = converged;
    }
    best.iterations = used;
    Ok(best)
}
