//! Successive approximation for a coupled pair of Goursat problems.
//!
//! In characteristic coordinates `ξ = x + y`, `η = x − y` the pair
//!
//! ```text
//! G_ξη = a H,    H_ξη = b G,    G(ξ, 0) = c_G ξ,    H(ξ, 0) = c_H ξ
//! ```
//!
//! together with a condition on the line `ξ = η` (the edge `y = 0`) is
//! equivalent to a system of Volterra integral equations. With the reflection
//! condition `K_y(x, 0) = 0`:
//!
//! ```text
//! G(ξ,η) = c_G (ξ+η) + 2a ∫₀^η∫₀^τ H(τ,s) ds dτ + a ∫_η^ξ∫₀^η H(τ,s) ds dτ
//! ```
//!
//! and with the value condition `K(x, 0) = 0`:
//!
//! ```text
//! G(ξ,η) = c_G (ξ−η) + a ∫_η^ξ∫₀^η H(τ,s) ds dτ
//! ```
//!
//! (symmetrically for `H` with `b`, `c_H`). The iterates `J⁰ = 0`,
//! `Jᵏ⁺¹ = Θ + Ω[Jᵏ]` are summed as increments `ΔJᵏ⁺¹ = Ω[ΔJᵏ]`.
//!
//! The integrals are evaluated with the composite trapezoid rule on the
//! full characteristic lattice `ξ = p h`, `η = q h`, `h = 1/n`. Lattice points
//! with `p + q` even are exactly the nodes of the `(x, y)` triangle. Running
//! prefix sums make one sweep `O(n²)`.

use crate::error::{Error, Result};
use crate::grid::TriangleGrid;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const MIN_RESOLUTION: usize = 8;

/// Condition imposed on the edge `y = 0` (the line `ξ = η`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideCondition {
    /// `K_y(x, 0) = 0`
    ReflectionNeumann,
    /// `K(x, 0) = 0`
    ZeroDirichlet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelProblem {
    /// Coupling of `H` in the `G` equation: `G_ξη = a H`.
    pub a: f64,
    /// Coupling of `G` in the `H` equation: `H_ξη = b G`.
    pub b: f64,
    /// Diagonal slope, `G(ξ, 0) = c_g ξ`.
    pub c_g: f64,
    /// Diagonal slope, `H(ξ, 0) = c_h ξ`.
    pub c_h: f64,
    pub side: SideCondition,
    /// Intervals per unit length in `x`.
    pub n: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl KernelProblem {
    pub fn new(a: f64, b: f64, c_g: f64, c_h: f64, side: SideCondition, n: usize) -> Self {
        Self {
            a,
            b,
            c_g,
            c_h,
            side,
            n,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_RESOLUTION {
            return Err(Error::InvalidProblem(format!(
                "n = {} is below the minimum resolution {MIN_RESOLUTION}",
                self.n
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidProblem(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidProblem("max_iter must be at least 1".into()));
        }
        if ![self.a, self.b, self.c_g, self.c_h].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Constant `M` of the factorial increment bound `|ΔJᵏ⁺¹| ≤ Mᵏ⁺¹ 2ᵏ / k!`.
    pub fn bound_constant(&self) -> f64 {
        1f64.max(3.0 * self.a.abs())
            .max(3.0 * self.b.abs())
            .max((self.c_g.abs() + self.c_h.abs()).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct PairSolution {
    pub g: TriangleGrid,
    pub h: TriangleGrid,
    pub iterations_used: usize,
    pub final_increment: f64,
    /// `increment_history[k]` is the sup-norm of `ΔJᵏ⁺¹` (`ΔJ¹ = Θ`).
    pub increment_history: Vec<f64>,
}

/// Values on the characteristic lattice `0 ≤ p ≤ 2n`, `0 ≤ q ≤ min(p, 2n − p)`.
#[derive(Debug, Clone)]
struct Lattice {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl Lattice {
    fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let rows = (0..=2 * n)
            .map(|p| (0..=p.min(2 * n - p)).map(|q| f(p, q)).collect())
            .collect();
        Self { n, rows }
    }

    fn sup(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    fn scale(mut self, c: f64) -> Self {
        self.rows.iter_mut().flatten().for_each(|v| *v *= c);
        self
    }

    fn add_assign(&mut self, other: &Lattice) {
        for (r, o) in self.rows.iter_mut().zip(&other.rows) {
            for (v, w) in r.iter_mut().zip(o) {
                *v += w;
            }
        }
    }

    /// Samples the nodes of the `(x, y)` triangle: `p = i + j`, `q = i − j`.
    fn to_triangle(&self) -> TriangleGrid {
        let mut grid = TriangleGrid::zeros(self.n);
        for i in 0..=self.n {
            for j in 0..=i {
                grid[(i, j)] = self.rows[i + j][i - j];
            }
        }
        grid
    }
}

/// The integral part of the fixed-point map applied to `f`, without the
/// coupling constant.
fn integrate(f: &Lattice, side: SideCondition) -> Lattice {
    let n = f.n;
    let h = 1.0 / n as f64;
    let half = 0.5 * h;

    // S(p, q) = ∫₀^{qh} f(ph, s) ds
    let s: Vec<Vec<f64>> = f
        .rows
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(row.len());
            out.push(0.0);
            for w in row.windows(2) {
                acc += half * (w[0] + w[1]);
                out.push(acc);
            }
            out
        })
        .collect();

    // D(q) = ∫₀^{qh} S(τ, τ) dτ, only needed for q ≤ n
    let diag = match side {
        SideCondition::ReflectionNeumann => {
            let mut d = vec![0.0; n + 1];
            for q in 1..=n {
                d[q] = d[q - 1] + half * (s[q - 1][q - 1] + s[q][q]);
            }
            Some(d)
        }
        SideCondition::ZeroDirichlet => None,
    };

    // T(p, q) = ∫_{qh}^{ph} S(τ, q) dτ, marched in p
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(2 * n + 1);
    for p in 0..=2 * n {
        let qmax = p.min(2 * n - p);
        let mut row = vec![0.0; qmax + 1];
        for (q, t) in row.iter_mut().enumerate() {
            if q < p {
                *t = out[p - 1][q] + half * (s[p - 1][q] + s[p][q]);
            }
        }
        out.push(row);
    }

    if let Some(d) = diag {
        for row in out.iter_mut() {
            for (q, t) in row.iter_mut().enumerate() {
                *t += 2.0 * d[q];
            }
        }
    }
    Lattice { n, rows: out }
}

/// Solves the coupled Goursat pair by successive approximation.
pub fn solve_pair(problem: &KernelProblem) -> Result<PairSolution> {
    problem.validate()?;
    let n = problem.n;
    let h = 1.0 / n as f64;

    let data = |c: f64| match problem.side {
        SideCondition::ReflectionNeumann => {
            Lattice::from_fn(n, move |p, q| c * (p + q) as f64 * h)
        }
        SideCondition::ZeroDirichlet => Lattice::from_fn(n, move |p, q| c * (p - q) as f64 * h),
    };

    let mut dg = data(problem.c_g);
    let mut dh = data(problem.c_h);
    let mut g = dg.clone();
    let mut hh = dh.clone();

    let mut increment = dg.sup().max(dh.sup());
    let mut history = vec![increment];
    let mut iterations = 1;

    while increment > problem.tol {
        if iterations >= problem.max_iter {
            return Err(Error::IterationLimit {
                iterations,
                final_increment: increment,
            });
        }
        let next_g = integrate(&dh, problem.side).scale(problem.a);
        let next_h = integrate(&dg, problem.side).scale(problem.b);
        dg = next_g;
        dh = next_h;
        g.add_assign(&dg);
        hh.add_assign(&dh);
        increment = dg.sup().max(dh.sup());
        history.push(increment);
        iterations += 1;
    }

    Ok(PairSolution {
        g: g.to_triangle(),
        h: hh.to_triangle(),
        iterations_used: iterations,
        final_increment: increment,
        increment_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::wave_residual;

    fn ln_factorial(k: usize) -> f64 {
        (1..=k).map(|i| (i as f64).ln()).sum()
    }

    #[test]
    fn zero_problem_converges_immediately() {
        for side in [SideCondition::ReflectionNeumann, SideCondition::ZeroDirichlet] {
            let sol = solve_pair(&KernelProblem::new(0.0, 0.0, 0.0, 0.0, side, 16)).unwrap();
            assert_eq!(sol.iterations_used, 1);
            assert_eq!(sol.g.max_abs(), 0.0);
            assert_eq!(sol.h.max_abs(), 0.0);
        }
    }

    #[test]
    fn decoupled_reflection_matches_characteristic_solution() {
        let sol = solve_pair(&KernelProblem::new(
            0.0,
            5.0,
            0.0,
            -5.0,
            SideCondition::ReflectionNeumann,
            32,
        ))
        .unwrap();
        assert_eq!(sol.g.max_abs(), 0.0);
        // H = c_H (ξ + η) = -5 · 2x
        for (i, j, v) in sol.h.nodes() {
            let x = i as f64 / 32.0;
            assert!((v + 10.0 * x).abs() < 1e-12, "({i},{j}) {v}");
        }
    }

    #[test]
    fn decoupled_dirichlet_matches_characteristic_solution() {
        let sol = solve_pair(&KernelProblem::new(
            0.0,
            5.0,
            0.0,
            -5.0,
            SideCondition::ZeroDirichlet,
            32,
        ))
        .unwrap();
        assert_eq!(sol.g.max_abs(), 0.0);
        // H = c_H (ξ − η) = -5 · 2y
        for (_, j, v) in sol.h.nodes() {
            let y = j as f64 / 32.0;
            assert!((v + 10.0 * y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_problems() {
        let base = KernelProblem::new(1.0, 1.0, 0.0, -1.0, SideCondition::ReflectionNeumann, 16);
        let coarse = KernelProblem { n: 4, ..base.clone() };
        assert!(matches!(solve_pair(&coarse), Err(Error::InvalidProblem(_))));
        let bad_tol = base.clone().with_tol(0.0);
        assert!(matches!(solve_pair(&bad_tol), Err(Error::InvalidProblem(_))));
        let no_iter = base.with_max_iter(0);
        assert!(matches!(solve_pair(&no_iter), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn reports_iteration_limit() {
        let p = KernelProblem::new(5.0, 2.5, 0.0, -5.0, SideCondition::ReflectionNeumann, 16)
            .with_max_iter(3);
        match solve_pair(&p) {
            Err(Error::IterationLimit {
                iterations,
                final_increment,
            }) => {
                assert_eq!(iterations, 3);
                assert!(final_increment > p.tol);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diagonal_and_side_data_are_exact() {
        let n = 64;
        let neumann = KernelProblem::new(2.5, 5.0, 0.3, -5.0, SideCondition::ReflectionNeumann, n);
        let sol = solve_pair(&neumann).unwrap();
        for i in 0..=n {
            let xi = 2.0 * i as f64 / n as f64;
            assert!((sol.g[(i, i)] - 0.3 * xi).abs() < 1e-12);
            assert!((sol.h[(i, i)] + 5.0 * xi).abs() < 1e-12);
        }

        let dirichlet = KernelProblem {
            side: SideCondition::ZeroDirichlet,
            ..neumann
        };
        let sol = solve_pair(&dirichlet).unwrap();
        for i in 0..=n {
            let xi = 2.0 * i as f64 / n as f64;
            assert!(sol.g[(i, 0)].abs() < 1e-12 && sol.h[(i, 0)].abs() < 1e-12);
            assert!((sol.h[(i, i)] + 5.0 * xi).abs() < 1e-12);
        }
    }

    #[test]
    fn increments_obey_factorial_bound() {
        for side in [SideCondition::ReflectionNeumann, SideCondition::ZeroDirichlet] {
            let p = KernelProblem::new(2.5, 5.0, 0.0, -5.0, side, 64);
            let m = p.bound_constant();
            let sol = solve_pair(&p).unwrap();
            assert!(sol.final_increment <= p.tol);
            for (k, &inc) in sol.increment_history.iter().enumerate() {
                let bound = (k as f64 + 1.0) * m.ln() + k as f64 * 2f64.ln() - ln_factorial(k);
                assert!(inc == 0.0 || inc.ln() <= bound, "k = {k}");
            }
            let sup = sol.g.max_abs().max(sol.h.max_abs());
            assert!(sup <= m * (2.0 * m).exp());
        }
    }

    #[test]
    fn neumann_side_derivative_vanishes_at_second_order() {
        let edge_slope = |n: usize| {
            let p = KernelProblem::new(2.5, 5.0, 0.0, -5.0, SideCondition::ReflectionNeumann, n);
            let sol = solve_pair(&p).unwrap();
            let h = 1.0 / n as f64;
            let mut worst: f64 = 0.0;
            for k in [&sol.g, &sol.h] {
                for i in 2..=n {
                    let d = (-3.0 * k[(i, 0)] + 4.0 * k[(i, 1)] - k[(i, 2)]) / (2.0 * h);
                    worst = worst.max(d.abs());
                }
            }
            worst
        };
        let coarse = edge_slope(64);
        let fine = edge_slope(128);
        assert!(coarse / fine > 3.5, "{coarse} {fine}");
    }

    #[test]
    fn pde_residual_is_second_order() {
        let residual = |n: usize| {
            let p = KernelProblem::new(2.5, 5.0, 0.0, -5.0, SideCondition::ReflectionNeumann, n);
            let sol = solve_pair(&p).unwrap();
            wave_residual(&sol.g, &sol.h, 4.0 * p.a).max(wave_residual(&sol.h, &sol.g, 4.0 * p.b))
        };
        let coarse = residual(64);
        let fine = residual(128);
        assert!(coarse / fine > 3.5, "{coarse} {fine}");
    }

    #[test]
    fn linear_in_diagonal_data() {
        let base = KernelProblem::new(1.5, -2.0, 0.4, -1.0, SideCondition::ZeroDirichlet, 32);
        let doubled = KernelProblem {
            c_g: 0.8,
            c_h: -2.0,
            ..base.clone()
        };
        let s1 = solve_pair(&base).unwrap();
        let s2 = solve_pair(&doubled).unwrap();
        for ((_, _, a), (_, _, b)) in s1.g.nodes().zip(s2.g.nodes()) {
            assert!((2.0 * a - b).abs() < 1e-11);
        }
        for ((_, _, a), (_, _, b)) in s1.h.nodes().zip(s2.h.nodes()) {
            assert!((2.0 * a - b).abs() < 1e-11);
        }
    }
}
