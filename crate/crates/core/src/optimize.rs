//! BFGS with a strong-Wolfe line search.
//!
//! The line search also accepts Hager–Zhang approximate Wolfe points, which
//! lets the iteration keep making progress once loss differences fall to the
//! level of floating-point noise while the analytic gradient is still
//! informative.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    /// Stop once `‖∇f‖∞` falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub message: &'static str,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const HZ_DELTA: f64 = 0.1;
const MAX_LINE_EVALS: usize = 40;

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    x: DVector<f64>,
    grad: DVector<f64>,
}

struct Objective<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Objective<F> {
    fn eval(&mut self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        self.evaluations += 1;
        let (v, g) = (self.f)(x.as_slice());
        let v = if v.is_finite() && g.iter().all(|g| g.is_finite()) { v } else { f64::INFINITY };
        (v, DVector::from_vec(g))
    }

    fn point(&mut self, x0: &DVector<f64>, dir: &DVector<f64>, alpha: f64) -> Point {
        let x = x0 + dir * alpha;
        let (value, grad) = self.eval(&x);
        let slope = if value.is_finite() { grad.dot(dir) } else { f64::NAN };
        Point { alpha, value, slope, x, grad }
    }
}

/// Strong Wolfe search along `dir` (Nocedal & Wright, Alg. 3.5/3.6).
fn line_search<F>(
    obj: &mut Objective<F>,
    x0: &DVector<f64>,
    f0: f64,
    slope0: f64,
    dir: &DVector<f64>,
    alpha_init: f64,
) -> Option<Point>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let noise = 1e-12 * (1.0 + f0.abs());
    let sufficient = |p: &Point| p.value <= f0 + C1 * p.alpha * slope0;
    let curvature = |p: &Point| p.slope.abs() <= -C2 * slope0;
    let approx_wolfe =
        |p: &Point| p.value <= f0 + noise && p.slope >= C2 * slope0 && p.slope <= (2.0 * HZ_DELTA - 1.0) * slope0;

    let mut prev = Point { alpha: 0.0, value: f0, slope: slope0, x: x0.clone(), grad: DVector::zeros(0) };
    let mut alpha = alpha_init;
    let mut evals = 0;
    let (mut lo, mut hi) = loop {
        let cur = obj.point(x0, dir, alpha);
        evals += 1;
        if cur.value.is_finite() && approx_wolfe(&cur) {
            return Some(cur);
        }
        if !cur.value.is_finite() || !sufficient(&cur) || (prev.alpha > 0.0 && cur.value >= prev.value) {
            break (prev, cur);
        }
        if curvature(&cur) {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        if evals >= MAX_LINE_EVALS {
            return Some(cur);
        }
        alpha *= 2.0;
        prev = cur;
    };

    // Zoom: `lo` satisfies sufficient decrease and has the lowest value so far.
    while evals < MAX_LINE_EVALS {
        let width = hi.alpha - lo.alpha;
        let mut trial = if hi.value.is_finite() && lo.slope.is_finite() {
            let denom = 2.0 * (hi.value - lo.value - lo.slope * width);
            if denom > 0.0 {
                lo.alpha - lo.slope * width * width / denom
            } else {
                f64::NAN
            }
        } else {
            f64::NAN
        };
        let (a, b) = if lo.alpha < hi.alpha { (lo.alpha, hi.alpha) } else { (hi.alpha, lo.alpha) };
        let margin = 0.1 * (b - a);
        if !trial.is_finite() || trial < a + margin || trial > b - margin {
            trial = 0.5 * (a + b);
        }
        if (b - a) <= 1e-16 * b.max(1e-300) {
            break;
        }
        let cur = obj.point(x0, dir, trial);
        evals += 1;
        if cur.value.is_finite() && approx_wolfe(&cur) {
            return Some(cur);
        }
        if !cur.value.is_finite() || !sufficient(&cur) || cur.value >= lo.value {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // Wolfe point not found; still take the best decrease if there is one.
    (lo.alpha > 0.0 && lo.value < f0).then_some(lo)
}

/// Minimizes `f` from `x0`. `f` returns the value and gradient.
pub fn minimize<F>(f: F, x0: &[f64], options: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut obj = Objective { f, evaluations: 0 };
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut value, mut grad) = obj.eval(&x);
    if !value.is_finite() {
        return Minimum {
            x: x0.to_vec(),
            value,
            gradient: grad.as_slice().to_vec(),
            gradient_norm: f64::INFINITY,
            iterations: 0,
            evaluations: obj.evaluations,
            converged: false,
            message: "objective not finite at the starting point",
        };
    }
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut message = "iteration limit reached";
    let mut converged = inf_norm(&grad) < options.grad_tol;
    if converged {
        message = "gradient tolerance reached";
    }

    while !converged && iterations < options.max_iter {
        let mut dir = -(&h * &grad);
        let mut slope = grad.dot(&dir);
        if slope.is_nan() || slope >= 0.0 {
            h.fill_with_identity();
            fresh = true;
            dir = -grad.clone();
            slope = grad.dot(&dir);
        }
        let alpha_init = if fresh { (1.0 / inf_norm(&grad)).min(1.0) } else { 1.0 };
        let step = match line_search(&mut obj, &x, value, slope, &dir, alpha_init) {
            Some(p) => p,
            None if !fresh => {
                h.fill_with_identity();
                fresh = true;
                continue;
            }
            None => {
                message = "line search failed";
                break;
            }
        };
        let s = &step.x - &x;
        let y = &step.grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← H + ρ²(yᵀHy + sᵀy) ssᵀ − ρ(Hy sᵀ + s yᵀH)
            h += (&s * s.transpose()) * (rho * rho * (yhy + sy));
            h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }
        x = step.x;
        value = step.value;
        grad = step.grad;
        iterations += 1;
        if inf_norm(&grad) < options.grad_tol {
            converged = true;
            message = "gradient tolerance reached";
        }
    }

    Minimum {
        x: x.as_slice().to_vec(),
        value,
        gradient_norm: inf_norm(&grad),
        gradient: grad.as_slice().to_vec(),
        iterations,
        evaluations: obj.evaluations,
        converged,
        message,
    }
}
