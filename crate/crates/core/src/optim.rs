//! Limited-memory BFGS for smooth objectives.
//!
//! Deterministic: no randomness, fixed evaluation order. The line search
//! enforces the strong Wolfe conditions; the sufficient-decrease test carries
//! a small slack proportional to `|f|` so that steps near the optimum, where
//! objective differences sink below rounding, are still judged by the
//! directional derivative.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub trait Objective {
    fn dim(&self) -> usize;

    /// Writes the gradient at `x` into `grad` and returns the value.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.value_grad(x, &mut g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iterations: 1000,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Probe {
    t: f64,
    f: f64,
    slope: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

struct LineSearch<'a, O: Objective> {
    obj: &'a O,
    x0: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    slack: f64,
    evals: usize,
}

impl<O: Objective> LineSearch<'_, O> {
    fn probe(&mut self, t: f64) -> Result<Probe> {
        self.evals += 1;
        let x: Vec<f64> = self.x0.iter().zip(self.dir).map(|(a, d)| a + t * d).collect();
        let mut g = vec![0.0; x.len()];
        let f = self.obj.value_grad(&x, &mut g);
        if !f.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite objective {f} at step {t} (f0 = {})",
                self.f0
            )));
        }
        let slope = dot(&g, self.dir);
        Ok(Probe { t, f, slope, x, g })
    }

    fn sufficient(&self, p: &Probe) -> bool {
        p.f <= self.f0 + C1 * p.t * self.slope0 + self.slack
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.slope.abs() <= -C2 * self.slope0
    }

    fn search(&mut self, t_init: f64) -> Result<Option<Probe>> {
        let mut prev = Probe {
            t: 0.0,
            f: self.f0,
            slope: self.slope0,
            x: self.x0.to_vec(),
            g: Vec::new(),
        };
        let mut t = t_init;
        let mut first = true;
        while self.evals < MAX_LINE_EVALS {
            let p = self.probe(t)?;
            if !self.sufficient(&p) || (!first && p.f >= prev.f) {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return Ok(Some(p));
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            first = false;
            t *= 2.0;
            prev = p;
        }
        Ok(None)
    }

    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Result<Option<Probe>> {
        while self.evals < MAX_LINE_EVALS {
            let t = interpolate(&lo, &hi);
            let p = self.probe(t)?;
            if !self.sufficient(&p) || p.f >= lo.f + self.slack {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return Ok(Some(p));
                }
                if p.slope * (hi.t - lo.t) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
            if (hi.t - lo.t).abs() <= f64::EPSILON * lo.t.abs().max(1e-300) {
                break;
            }
        }
        // Accept the best sufficient-decrease point found, if it moved.
        Ok(if lo.t > 0.0 && !lo.g.is_empty() { Some(lo) } else { None })
    }
}

/// Safeguarded cubic interpolation between two bracket ends.
fn interpolate(a: &Probe, b: &Probe) -> f64 {
    let (lo, hi) = if a.t < b.t { (a, b) } else { (b, a) };
    let width = hi.t - lo.t;
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (lo.t - hi.t);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mid = lo.t + 0.5 * width;
    if disc < 0.0 || !disc.is_finite() {
        return mid;
    }
    let d2 = disc.sqrt();
    let t = hi.t - width * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    if t.is_finite() && t > lo.t + 0.1 * width && t < hi.t - 0.1 * width {
        t
    } else {
        mid
    }
}

/// Minimizes `obj` from `x0`.
pub fn minimize<O: Objective>(obj: &O, x0: Vec<f64>, cfg: &LbfgsConfig) -> Result<Minimum> {
    let n = obj.dim();
    assert_eq!(x0.len(), n, "starting point has wrong dimension");
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = obj.value_grad(&x, &mut g);
    if !f.is_finite() {
        return Err(Error::Numerical(format!("non-finite objective {f} at the starting point")));
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut iterations = 0;

    loop {
        let gnorm = inf_norm(&g);
        if gnorm < cfg.gradient_tolerance {
            return Ok(Minimum {
                x,
                value: f,
                grad_inf_norm: gnorm,
                iterations,
                converged: true,
            });
        }
        if iterations >= cfg.max_iterations {
            return Ok(Minimum {
                x,
                value: f,
                grad_inf_norm: gnorm,
                iterations,
                converged: false,
            });
        }

        let mut dir = two_loop(&g, &history);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let t_init = if history.is_empty() {
            (1.0 / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };

        let mut ls = LineSearch {
            obj,
            x0: &x,
            dir: &dir,
            f0: f,
            slope0: slope,
            slack: 1e-14 * f.abs().max(1.0),
            evals: 0,
        };
        let step = match ls.search(t_init)? {
            Some(step) => step,
            None if !history.is_empty() => {
                // Stale curvature pairs; retry once along steepest descent.
                history.clear();
                continue;
            }
            None => {
                return Ok(Minimum {
                    x,
                    value: f,
                    grad_inf_norm: gnorm,
                    iterations,
                    converged: false,
                });
            }
        };

        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = step.x;
        g = step.g;
        f = step.f;
        iterations += 1;
    }
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q
}
