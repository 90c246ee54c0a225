use serde::{Deserialize, Serialize};

use super::NumericsError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    /// Convergence when the infinity norm of the gradient drops to this.
    pub gradient_tolerance: f64,
    /// Stop when a step changes no coordinate by more than this, relative to `1 + |x|`.
    pub step_tolerance: f64,
    pub max_iterations: usize,
    /// Armijo constant `c1`.
    pub sufficient_decrease: f64,
    /// Strong Wolfe curvature constant `c2`.
    pub curvature: f64,
    pub max_line_search: usize,
    /// When the line search stalls, accept the point if the predicted
    /// decrease `g'Hg / 2` is below this times `1 + |f|`.
    #[serde(default = "default_decrement_tolerance")]
    pub decrement_tolerance: f64,
}

fn default_decrement_tolerance() -> f64 {
    1e-11
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            gradient_tolerance: 1e-6,
            step_tolerance: 1e-12,
            max_iterations: 1000,
            sufficient_decrease: 1e-4,
            curvature: 0.9,
            max_line_search: 60,
            decrement_tolerance: default_decrement_tolerance(),
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if !(self.gradient_tolerance > 0.0) || !(self.step_tolerance > 0.0) {
            return Err(NumericsError::InvalidOptions("tolerances must be positive".into()));
        }
        if !(0.0 < self.sufficient_decrease
            && self.sufficient_decrease < self.curvature
            && self.curvature < 1.0)
        {
            return Err(NumericsError::InvalidOptions(
                "line search constants must satisfy 0 < c1 < c2 < 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    GradientTolerance,
    StepTolerance,
    /// Line search stalled with a negligible predicted decrease.
    DecrementTolerance,
    MaxIterations,
    LineSearchFailed,
}

impl ConvergenceStatus {
    pub fn is_converged(self) -> bool {
        matches!(self, Self::GradientTolerance | Self::StepTolerance | Self::DecrementTolerance)
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient: Vec<f64>,
    pub status: ConvergenceStatus,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective after each accepted iteration, starting with the initial value.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn finite(f: f64, g: &[f64]) -> bool {
    f.is_finite() && g.iter().all(|v| v.is_finite())
}

/// Minimizes with separate objective and gradient callbacks.
pub fn bfgs_minimize<F, G>(
    mut objective: F,
    mut gradient: G,
    x0: &[f64],
    opts: &OptimizerOptions,
) -> Result<Minimum, NumericsError>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    bfgs_minimize_with(|x| (objective(x), gradient(x)), x0, opts)
}

struct Point {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

struct LineSearch<'a, F> {
    fg: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    opts: &'a OptimizerOptions,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> LineSearch<'_, F> {
    fn eval(&mut self, alpha: f64) -> Option<Point> {
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(xi, di)| xi + alpha * di).collect();
        let (f, g) = (self.fg)(&x);
        self.evaluations += 1;
        if !finite(f, &g) {
            return None;
        }
        let slope = dot(&g, self.dir);
        Some(Point { alpha, x, f, g, slope })
    }

    fn armijo(&self, p: &Point) -> bool {
        let slack = 4.0 * f64::EPSILON * self.f0.abs();
        p.f <= self.f0 && p.f <= self.f0 + self.opts.sufficient_decrease * p.alpha * self.slope0 + slack
    }

    fn curvature_ok(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.opts.curvature * self.slope0
    }

    /// Strong Wolfe search: bracket, then zoom.
    fn run(&mut self, alpha0: f64) -> Option<Point> {
        let mut prev: Option<Point> = None;
        let mut alpha = alpha0;
        let mut tries = 0;
        while tries < self.opts.max_line_search {
            tries += 1;
            let Some(p) = self.eval(alpha) else {
                let lo = prev.as_ref().map_or(0.0, |q| q.alpha);
                alpha = lo + 0.5 * (alpha - lo);
                continue;
            };
            let worse_than_prev = prev.as_ref().is_some_and(|q| p.f >= q.f);
            if !self.armijo(&p) || worse_than_prev {
                return self.zoom(prev, p);
            }
            if self.curvature_ok(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                return self.zoom(Some(p), prev.unwrap_or_else(|| self.origin()));
            }
            alpha *= 2.0;
            prev = Some(p);
        }
        prev
    }

    fn origin(&self) -> Point {
        Point { alpha: 0.0, x: self.x.to_vec(), f: self.f0, g: Vec::new(), slope: self.slope0 }
    }

    /// `lo` satisfies sufficient decrease (or is the origin), `hi` brackets.
    fn zoom(&mut self, lo: Option<Point>, hi: Point) -> Option<Point> {
        let mut lo = lo.unwrap_or_else(|| self.origin());
        let mut hi_alpha = hi.alpha;
        let mut hi_f = hi.f;
        for _ in 0..self.opts.max_line_search {
            let width = hi_alpha - lo.alpha;
            // quadratic through (lo, f_lo, slope_lo) and (hi, f_hi)
            let denom = 2.0 * (hi_f - lo.f - lo.slope * width);
            let mut trial = if denom > 0.0 && denom.is_finite() {
                lo.alpha - lo.slope * width * width / denom
            } else {
                lo.alpha + 0.5 * width
            };
            let (a, b) = if lo.alpha < hi_alpha { (lo.alpha, hi_alpha) } else { (hi_alpha, lo.alpha) };
            let margin = 0.1 * (b - a);
            if !(trial > a + margin && trial < b - margin) {
                trial = 0.5 * (a + b);
            }
            if (b - a) <= f64::EPSILON * b.abs().max(1e-300) {
                break;
            }
            let Some(p) = self.eval(trial) else {
                hi_alpha = trial;
                hi_f = f64::INFINITY;
                continue;
            };
            if !self.armijo(&p) || p.f >= lo.f {
                hi_alpha = p.alpha;
                hi_f = p.f;
            } else {
                if self.curvature_ok(&p) {
                    return Some(p);
                }
                if p.slope * (hi_alpha - lo.alpha) >= 0.0 {
                    hi_alpha = lo.alpha;
                    hi_f = lo.f;
                }
                lo = p;
            }
        }
        // fall back to the best sufficient-decrease point found
        (lo.alpha > 0.0 && lo.f < self.f0).then_some(lo)
    }
}

/// BFGS on the inverse Hessian with a strong Wolfe line search. `fg` returns
/// the objective and its gradient at a point.
pub fn bfgs_minimize_with<F>(mut fg: F, x0: &[f64], opts: &OptimizerOptions) -> Result<Minimum, NumericsError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    opts.validate()?;
    let n = x0.len();
    let (mut f, mut g) = fg(x0);
    if !finite(f, &g) {
        return Err(NumericsError::NonFiniteStart);
    }
    let mut x = x0.to_vec();
    let mut evaluations = 1;
    let mut trace = vec![f];
    if inf_norm(&g) <= opts.gradient_tolerance {
        return Ok(Minimum {
            x,
            f,
            gradient: g,
            status: ConvergenceStatus::GradientTolerance,
            iterations: 0,
            evaluations,
            trace,
        });
    }

    let identity = |n: usize| {
        let mut h = vec![0.0; n * n];
        (0..n).for_each(|i| h[i * n + i] = 1.0);
        h
    };
    let mut h = identity(n);
    let mut fresh = true;
    let mut status = ConvergenceStatus::MaxIterations;
    let mut iterations = 0;
    let mut small_decrement = false;

    while iterations < opts.max_iterations {
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        if dot(&dir, &g) >= 0.0 {
            h = identity(n);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if fresh { (1.0 / inf_norm(&dir)).min(1.0) } else { 1.0 };
        let slope0 = dot(&g, &dir);
        if !fresh {
            small_decrement = -0.5 * slope0 <= opts.decrement_tolerance * (1.0 + f.abs());
        }
        let mut search = LineSearch { fg: &mut fg, x: &x, dir: &dir, f0: f, slope0, opts, evaluations: 0 };
        let found = search.run(alpha0);
        evaluations += search.evaluations;
        let Some(point) = found else {
            if small_decrement {
                status = ConvergenceStatus::DecrementTolerance;
                break;
            }
            if !fresh {
                h = identity(n);
                fresh = true;
                continue;
            }
            status = ConvergenceStatus::LineSearchFailed;
            break;
        };
        iterations += 1;

        let s: Vec<f64> = point.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = point.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        x = point.x;
        f = point.f;
        g = point.g;
        trace.push(f);

        if inf_norm(&g) <= opts.gradient_tolerance {
            status = ConvergenceStatus::GradientTolerance;
            break;
        }
        if inf_norm(&s) <= opts.step_tolerance * (1.0 + inf_norm(&x)) {
            status = ConvergenceStatus::StepTolerance;
            break;
        }

        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * yy.sqrt() {
            if fresh {
                let scale = sy / yy;
                h.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
    }

    Ok(Minimum { x, f, gradient: g, status, iterations, evaluations, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn quadratic_bowl() {
        let target = [1.5, -2.0, 0.25, 7.0];
        let fg = |x: &[f64]| {
            let d: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a - b).collect();
            (dot(&d, &d), d.iter().map(|v| 2.0 * v).collect())
        };
        for x0 in [[0.0; 4], [10.0, 10.0, -10.0, 3.0], [-100.0, 4.0, 1e3, 0.0]] {
            let m = bfgs_minimize_with(fg, &x0, &OptimizerOptions::default()).unwrap();
            assert!(m.status.is_converged());
            for (a, b) in m.x.iter().zip(&target) {
                assert!((a - b).abs() < 1e-8, "{:?}", m.x);
            }
        }
    }

    #[test]
    fn rosenbrock_from_classic_start() {
        let opts = OptimizerOptions { gradient_tolerance: 1e-9, ..Default::default() };
        let m = bfgs_minimize(|x| rosenbrock(x).0, |x| rosenbrock(x).1, &[-1.2, 1.0], &opts).unwrap();
        assert!(m.status.is_converged(), "{:?}", m.status);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
        assert!(m.f < 1e-12);
    }

    #[test]
    fn objective_never_increases() {
        let m = bfgs_minimize_with(rosenbrock, &[-1.2, 1.0], &OptimizerOptions::default()).unwrap();
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn converged_start_returns_immediately() {
        let m = bfgs_minimize_with(|x| (x[0] * x[0], vec![2.0 * x[0]]), &[0.0], &Default::default()).unwrap();
        assert_eq!(m.iterations, 0);
        assert_eq!(m.x, vec![0.0]);
        assert_eq!(m.status, ConvergenceStatus::GradientTolerance);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = bfgs_minimize_with(|_| (f64::NAN, vec![0.0]), &[1.0], &Default::default());
        assert!(matches!(r, Err(NumericsError::NonFiniteStart)));
    }

    #[test]
    fn backtracks_out_of_non_finite_region() {
        // log barrier: undefined for x <= 0, minimum at x = 1
        let fg = |x: &[f64]| {
            if x[0] <= 0.0 {
                (f64::NAN, vec![f64::NAN])
            } else {
                (x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]])
            }
        };
        let m = bfgs_minimize_with(fg, &[8.0], &Default::default()).unwrap();
        assert!(m.status.is_converged());
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn max_iterations_reports_non_convergence() {
        let opts = OptimizerOptions { max_iterations: 2, ..Default::default() };
        let m = bfgs_minimize_with(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert_eq!(m.status, ConvergenceStatus::MaxIterations);
        assert_eq!(m.iterations, 2);
    }

    #[test]
    fn rejects_bad_line_search_constants() {
        let opts = OptimizerOptions { sufficient_decrease: 0.9, curvature: 0.1, ..Default::default() };
        assert!(opts.validate().is_err());
    }
}
