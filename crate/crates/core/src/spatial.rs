//! Spatial sign, rank and signed-rank scores, and the weighted spatial median.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Result};
use crate::numerics::SymMatrix;
use crate::sample::{add_outer, norm, Sample};

/// U(y) = y / ‖y‖, with U(0) = 0.
pub fn spatial_sign(y: &[f64]) -> Vec<f64> {
    let r = norm(y);
    if r == 0.0 {
        vec![0.0; y.len()]
    } else {
        y.iter().map(|v| v / r).collect()
    }
}

/// Accumulate U(a − b) into `out` without allocating.
#[inline]
pub(crate) fn add_sign_of_difference(a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let r = if d2.is_normal() && d2 < 1e300 {
        d2.sqrt()
    } else {
        norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
    };
    if r > 0.0 {
        let s = scale / r;
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o += s * (x - y);
        }
    }
}

fn check_sample(y: &[f64], sample: &Sample) -> Result<()> {
    if sample.is_empty() {
        return domain("spatial rank against an empty sample");
    }
    if y.len() != sample.dim() {
        return domain(format!("point has dimension {} but sample has {}", y.len(), sample.dim()));
    }
    Ok(())
}

/// R(y, Y) = (1/n) Σ U(y − Yᵢ).
pub fn spatial_rank(y: &[f64], sample: &Sample) -> Result<Vec<f64>> {
    check_sample(y, sample)?;
    let scale = 1.0 / sample.len() as f64;
    let mut out = vec![0.0; y.len()];
    for row in sample.rows() {
        add_sign_of_difference(y, row, scale, &mut out);
    }
    Ok(out)
}

/// Q(y) = ½[R(y, Y) + R(y, −Y)].
pub fn spatial_signed_rank(y: &[f64], sample: &Sample) -> Result<Vec<f64>> {
    check_sample(y, sample)?;
    let scale = 0.5 / sample.len() as f64;
    let mut out = vec![0.0; y.len()];
    let mut neg = vec![0.0; y.len()];
    for row in sample.rows() {
        add_sign_of_difference(y, row, scale, &mut out);
        for (n, v) in neg.iter_mut().zip(row) {
            *n = -v;
        }
        add_sign_of_difference(y, &neg, scale, &mut out);
    }
    Ok(out)
}

/// Atoms with probability weights. Weights are normalized on construction.
#[derive(Clone, Debug)]
pub struct WeightedPointSet {
    points: Vec<f64>,
    dim: usize,
    weights: Vec<f64>,
}

impl WeightedPointSet {
    pub fn new(points: Sample, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return domain(format!("{} points but {} weights", points.len(), weights.len()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return domain("weights must be finite and nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return domain("at least one weight must be positive");
        }
        let dim = points.dim();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { points: points.into_vec(), dim, weights })
    }

    pub fn uniform(points: Sample) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Σ wⱼ ‖yⱼ − θ‖.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        self.points
            .chunks_exact(self.dim)
            .zip(&self.weights)
            .map(|(p, w)| w * p.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .sum()
    }

    fn weighted_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.points.chunks_exact(self.dim).zip(&self.weights) {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += w * pi;
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MedianSolution {
    pub location: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub at_data_point: bool,
    /// Positive-weight support lies on a line (or k = 1); solved exactly in 1-D.
    pub collinear: bool,
    /// The optimal set is a segment; `location` is its midpoint.
    pub non_unique: bool,
    /// Final optimality residual (gradient norm, or its excess over the atom weight).
    pub residual: f64,
}

/// Minimizer of Σ wⱼ ‖yⱼ − θ‖ by safeguarded Newton steps, falling back to
/// Weiszfeld iteration with the Vardi–Zhang modification at atoms. Collinear support is handled as a weighted 1-D median.
pub fn weighted_spatial_median(ps: &WeightedPointSet, opts: &SolverOptions) -> MedianSolution {
    solve(ps, opts, None)
}

/// As [`weighted_spatial_median`], also returning the objective after every iteration.
pub fn weighted_spatial_median_traced(ps: &WeightedPointSet, opts: &SolverOptions) -> (MedianSolution, Vec<f64>) {
    let mut trace = Vec::new();
    let sol = solve(ps, opts, Some(&mut trace));
    (sol, trace)
}

/// Unweighted sample spatial median.
pub fn spatial_median(sample: &Sample, opts: &SolverOptions) -> Result<MedianSolution> {
    let ps = WeightedPointSet::uniform(sample.clone())?;
    Ok(weighted_spatial_median(&ps, opts))
}

fn solve(ps: &WeightedPointSet, opts: &SolverOptions, mut trace: Option<&mut Vec<f64>>) -> MedianSolution {
    let k = ps.dim;
    let active: Vec<usize> = (0..ps.len()).filter(|&i| ps.weights[i] > 0.0).collect();
    let first = ps.point(active[0]);
    if active.iter().all(|&i| ps.point(i) == first) {
        return MedianSolution {
            location: first.to_vec(),
            objective: 0.0,
            iterations: 0,
            converged: true,
            at_data_point: true,
            collinear: false,
            non_unique: false,
            residual: 0.0,
        };
    }

    let mean = ps.weighted_mean();
    if let Some(direction) = line_direction(ps, &active, &mean) {
        return solve_on_line(ps, &active, &mean, &direction);
    }

    let mut theta = mean;
    let mut grad = Gradient::new(k);
    let mut probe = Gradient::new(k);
    let mut candidate = vec![0.0; k];
    let mut converged = false;
    let mut at_data_point = false;
    let mut iterations = 0;
    let mut last_residual = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        grad.evaluate(ps, &active, &theta);
        last_residual = grad.residual();
        if last_residual <= opts.tol {
            converged = true;
            at_data_point = grad.eta > 0.0;
            break;
        }
        // Weiszfeld creeps toward an optimal atom; test the nearest one now and then
        if iterations % 4 == 1 && grad.eta == 0.0 {
            let atom = ps.point(grad.nearest).to_vec();
            probe.evaluate(ps, &active, &atom);
            if probe.residual() <= opts.tol {
                theta = atom;
                last_residual = probe.residual();
                converged = true;
                at_data_point = true;
                break;
            }
        }
        let current = ps.objective(&theta);
        if !(grad.eta == 0.0 && grad.newton_step(ps, &mut theta, current, &mut candidate)) {
            grad.step(&mut theta);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(ps.objective(&theta));
        }
    }
    let objective = ps.objective(&theta);
    MedianSolution {
        location: theta,
        objective,
        iterations,
        converged,
        at_data_point,
        collinear: false,
        non_unique: false,
        residual: last_residual,
    }
}

/// Weiszfeld quantities at θ. Atoms within a relative 1e-12 of θ are treated
/// as coinciding with it and contribute their weight to `eta` instead.
struct Gradient {
    /// R(θ) = Σ w (y − θ)/d over atoms away from θ, the negative gradient.
    num: Vec<f64>,
    /// Σ (w/d³)(y − θ)(y − θ)ᵀ, so that the Hessian is den·I minus this.
    outer: Vec<f64>,
    den: f64,
    eta: f64,
    r: f64,
    nearest: usize,
}

impl Gradient {
    fn new(k: usize) -> Self {
        Self { num: vec![0.0; k], outer: vec![0.0; k * k], den: 0.0, eta: 0.0, r: 0.0, nearest: 0 }
    }

    fn evaluate(&mut self, ps: &WeightedPointSet, active: &[usize], theta: &[f64]) {
        let snap = 1e-12 * (1.0 + norm(theta));
        self.num.iter_mut().for_each(|v| *v = 0.0);
        self.outer.iter_mut().for_each(|v| *v = 0.0);
        let k = theta.len();
        self.den = 0.0;
        self.eta = 0.0;
        let mut best = f64::INFINITY;
        for &j in active {
            let p = ps.point(j);
            let w = ps.weights[j];
            let d = p.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d < best {
                best = d;
                self.nearest = j;
            }
            if d <= snap {
                self.eta += w;
                continue;
            }
            let s = w / d;
            self.den += s;
            for ((g, pi), ti) in self.num.iter_mut().zip(p).zip(theta) {
                *g += s * (pi - ti);
            }
            let c = s / (d * d);
            for a in 0..k {
                let da = p[a] - theta[a];
                for b in a..k {
                    self.outer[a * k + b] += c * da * (p[b] - theta[b]);
                }
            }
        }
        self.r = norm(&self.num);
    }

    /// Excess of the pull of other atoms over the weight sitting at θ.
    fn residual(&self) -> f64 {
        (self.r - self.eta).max(0.0)
    }

    /// Damped Newton step on the smooth part of the objective; falls back to
    /// the caller (returns false) when no step decreases the objective.
    fn newton_step(&self, ps: &WeightedPointSet, theta: &mut [f64], current: f64, candidate: &mut [f64]) -> bool {
        let k = theta.len();
        let hess = DMatrix::from_fn(k, k, |a, b| {
            let (i, j) = if a <= b { (a, b) } else { (b, a) };
            let eye = if a == b { self.den } else { 0.0 };
            eye - self.outer[i * k + j]
        });
        let Some(chol) = hess.cholesky() else { return false };
        let grad = DVector::from_column_slice(&self.num);
        let dir = chol.solve(&grad);
        // slack for rounding so a converging step is not rejected on noise
        let limit = current * (1.0 + 4.0 * f64::EPSILON);
        let mut t = 1.0;
        for _ in 0..10 {
            for ((c, x), d) in candidate.iter_mut().zip(theta.iter()).zip(dir.iter()) {
                *c = x + t * d;
            }
            if ps.objective(candidate) <= limit {
                theta.copy_from_slice(candidate);
                return true;
            }
            t *= 0.5;
        }
        false
    }

    /// Vardi–Zhang step: plain Weiszfeld, shrunk toward θ when θ is an atom.
    fn step(&self, theta: &mut [f64]) {
        let pull = if self.eta > 0.0 { (self.eta / self.r).min(1.0) } else { 0.0 };
        for (t, n) in theta.iter_mut().zip(&self.num) {
            *t += (1.0 - pull) * n / self.den;
        }
    }
}

/// Unit direction of the support line when all positive-weight atoms are
/// collinear (always the case for k = 1).
fn line_direction(ps: &WeightedPointSet, active: &[usize], mean: &[f64]) -> Option<Vec<f64>> {
    let k = ps.dim;
    if k == 1 {
        return Some(vec![1.0]);
    }
    let mut acc = vec![0.0; k * k];
    let mut centered = vec![0.0; k];
    for &j in active {
        for ((c, p), m) in centered.iter_mut().zip(ps.point(j)).zip(mean) {
            *c = p - m;
        }
        add_outer(ps.weights[j], &centered, &mut acc);
    }
    let scatter = SymMatrix::from_row_major(k, acc).ok()?;
    let (values, vectors) = scatter.eigen();
    let top = values[k - 1];
    if values[k - 2] > 1e-20 * top {
        return None;
    }
    Some(vectors.column(k - 1).iter().copied().collect())
}

fn solve_on_line(ps: &WeightedPointSet, active: &[usize], mean: &[f64], dir: &[f64]) -> MedianSolution {
    let mut proj: Vec<(f64, f64)> = active
        .iter()
        .map(|&j| {
            let t: f64 = ps.point(j).iter().zip(mean).zip(dir).map(|((p, m), d)| (p - m) * d).sum();
            (t, ps.weights[j])
        })
        .collect();
    proj.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cum = 0.0;
    let mut t_opt = proj[proj.len() - 1].0;
    let mut non_unique = false;
    for (i, &(t, w)) in proj.iter().enumerate() {
        cum += w;
        if cum >= 0.5 - 1e-12 {
            t_opt = t;
            if (cum - 0.5).abs() <= 1e-12 {
                if let Some(&(t_next, _)) = proj[i + 1..].iter().find(|(tn, _)| *tn > t) {
                    t_opt = 0.5 * (t + t_next);
                    non_unique = true;
                }
            }
            break;
        }
    }
    let location: Vec<f64> = mean.iter().zip(dir).map(|(m, d)| m + t_opt * d).collect();
    let objective = ps.objective(&location);
    MedianSolution {
        location,
        objective,
        iterations: 1,
        converged: true,
        at_data_point: !non_unique,
        collinear: true,
        non_unique,
        residual: 0.0,
    }
}
