//! The four backstepping kernel systems posed as Goursat pairs.
//!
//! Each 4×4 kernel system splits into two independent 2×2 pairs. Observer
//! kernels are first mapped onto the canonical triangle `0 ≤ y ≤ x ≤ 1`
//! (reflection for the anti-collocated kernel, argument swap for the
//! collocated one). Both maps flip the sign of the wave operator and hence of
//! the coupling.

use crate::error::{Error, Result};
use crate::goursat::{solve_pair, KernelProblem, PairSolution, SideCondition, DEFAULT_TOL};
use crate::grid::{resample_uniform, TriangleGrid};

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelFamily {
    /// `K` of `γ = w − ∫₀ˣ K(x,y) w(y) dy`.
    Control,
    /// `L` of `w = γ + ∫₀ˣ L(x,y) γ(y) dy`.
    Inverse,
    /// `P` of `w̃ = γ̃ − ∫₀ˣ P(x,y) γ̃(y) dy`, sensor at `x = 0`.
    ObserverAntiCollocated,
    /// `P` of `w̃ = γ̃ − ∫ₓ¹ P(x,y) γ̃(y) dy`, sensor at `x = 1`. Stored swapped.
    ObserverCollocated,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Control,
        KernelFamily::Inverse,
        KernelFamily::ObserverAntiCollocated,
        KernelFamily::ObserverCollocated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Control => "control",
            KernelFamily::Inverse => "inverse",
            KernelFamily::ObserverAntiCollocated => "observer_anticollocated",
            KernelFamily::ObserverCollocated => "observer_collocated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObserverSetup {
    /// Measurement `u(0, t)`.
    AntiCollocated,
    /// Measurement `u_x(1, t)`.
    Collocated,
}

impl ObserverSetup {
    pub fn family(self) -> KernelFamily {
        match self {
            ObserverSetup::AntiCollocated => KernelFamily::ObserverAntiCollocated,
            ObserverSetup::Collocated => KernelFamily::ObserverCollocated,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObserverSetup::AntiCollocated => "anticollocated",
            ObserverSetup::Collocated => "collocated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSummary {
    pub iterations: usize,
    pub final_increment: f64,
}

impl From<&PairSolution> for SolveSummary {
    fn from(s: &PairSolution) -> Self {
        Self {
            iterations: s.iterations_used,
            final_increment: s.final_increment,
        }
    }
}

/// A 2×2 kernel matrix sampled on the canonical triangle.
///
/// For [`KernelFamily::ObserverCollocated`] the stored value at `(x, y)` is
/// the kernel at `(y, x)`; use [`KernelField::at`] for original coordinates.
#[derive(Debug, Clone)]
pub struct KernelField {
    pub n: usize,
    pub kuu: TriangleGrid,
    pub kuv: TriangleGrid,
    pub kvu: TriangleGrid,
    pub kvv: TriangleGrid,
    pub family: KernelFamily,
    pub lambda1: f64,
    pub lambda2: f64,
    pub solves: [SolveSummary; 2],
}

impl KernelField {
    /// Stored matrix at node `(i, j)`, `j ≤ i`.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Mat2 {
        [
            [self.kuu[(i, j)], self.kuv[(i, j)]],
            [self.kvu[(i, j)], self.kvv[(i, j)]],
        ]
    }

    pub fn components(&self) -> [&TriangleGrid; 4] {
        [&self.kuu, &self.kuv, &self.kvu, &self.kvv]
    }

    /// Kernel matrix in the family's original coordinates, interpolated.
    ///
    /// The collocated kernel is defined for `x ≤ y`, all others for `y ≤ x`.
    pub fn at(&self, x: f64, y: f64) -> Mat2 {
        let (s, t) = match self.family {
            KernelFamily::ObserverCollocated => (y, x),
            _ => (x, y),
        };
        [
            [self.kuu.interpolate(s, t), self.kuv.interpolate(s, t)],
            [self.kvu.interpolate(s, t), self.kvv.interpolate(s, t)],
        ]
    }

    /// Expected values on the stored diagonal `x = y`.
    pub fn diagonal_data(&self, x: f64) -> Mat2 {
        diagonal_data(self.family, self.lambda1, self.lambda2, x)
    }

    pub fn resample(&self, m: usize) -> KernelField {
        KernelField {
            n: m,
            kuu: self.kuu.resample(m),
            kuv: self.kuv.resample(m),
            kvu: self.kvu.resample(m),
            kvv: self.kvv.resample(m),
            ..self.clone()
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.components()
            .iter()
            .fold(0.0, |m: f64, c| m.max(c.max_abs()))
    }
}

/// Goursat data on the stored diagonal, in the stored orientation.
pub fn diagonal_data(family: KernelFamily, lambda1: f64, lambda2: f64, x: f64) -> Mat2 {
    match family {
        KernelFamily::Control | KernelFamily::Inverse | KernelFamily::ObserverCollocated => {
            [[0.0, -0.5 * lambda1 * x], [-0.5 * lambda2 * x, 0.0]]
        }
        KernelFamily::ObserverAntiCollocated => [
            [0.0, -0.5 * lambda1 * (1.0 - x)],
            [-0.5 * lambda2 * (1.0 - x), 0.0],
        ],
    }
}

fn solve_two(
    first: KernelProblem,
    second: KernelProblem,
) -> Result<(PairSolution, PairSolution)> {
    Ok((solve_pair(&first)?, solve_pair(&second)?))
}

fn check_resolution(n: usize) -> Result<()> {
    if n < crate::goursat::MIN_RESOLUTION {
        return Err(Error::InvalidProblem(format!("n = {n} is below 8")));
    }
    Ok(())
}

/// Control kernel: `K_xx − K_yy = KΣ`, `K(x,x) = −Σx/2`, `K_y(x,0) = 0`.
pub fn control_kernel(lambda1: f64, lambda2: f64, n: usize, tol: f64) -> Result<KernelField> {
    check_resolution(n)?;
    let side = SideCondition::ReflectionNeumann;
    // (Kuu, Kuv) and (Kvv, Kvu)
    let (first, second) = solve_two(
        KernelProblem::new(lambda2 / 4.0, lambda1 / 4.0, 0.0, -lambda1 / 4.0, side, n).with_tol(tol),
        KernelProblem::new(lambda1 / 4.0, lambda2 / 4.0, 0.0, -lambda2 / 4.0, side, n).with_tol(tol),
    )?;
    Ok(KernelField {
        n,
        solves: [(&first).into(), (&second).into()],
        kuu: first.g,
        kuv: first.h,
        kvv: second.g,
        kvu: second.h,
        family: KernelFamily::Control,
        lambda1,
        lambda2,
    })
}

/// Inverse kernel: `L_xx − L_yy = −ΣL`, `L(x,x) = −Σx/2`, `L_y(x,0) = 0`.
pub fn inverse_kernel(lambda1: f64, lambda2: f64, n: usize, tol: f64) -> Result<KernelField> {
    check_resolution(n)?;
    let side = SideCondition::ReflectionNeumann;
    // (Lαα, Lβα) and (Lββ, Lαβ)
    let (first, second) = solve_two(
        KernelProblem::new(-lambda1 / 4.0, -lambda2 / 4.0, 0.0, -lambda2 / 4.0, side, n)
            .with_tol(tol),
        KernelProblem::new(-lambda2 / 4.0, -lambda1 / 4.0, 0.0, -lambda1 / 4.0, side, n)
            .with_tol(tol),
    )?;
    Ok(KernelField {
        n,
        solves: [(&first).into(), (&second).into()],
        kuu: first.g,
        kvu: first.h,
        kvv: second.g,
        kuv: second.h,
        family: KernelFamily::Inverse,
        lambda1,
        lambda2,
    })
}

/// Anti-collocated observer kernel: `P_xx − P_yy = −ΣP`,
/// `P(x,x) = −Σ(1−x)/2`, `P(1,y) = 0`.
///
/// The diagonal data follow from matching the `γ̃(x)` terms of the error
/// dynamics, `2 d/dx P(x,x) = Σ`, together with `P(1,1) = 0`. The opposite
/// sign yields an unstable error system for `λ₁λ₂ > 0`.
///
/// Solved in `(x̄, ȳ) = (1 − y, 1 − x)`, where the edge `x = 1` becomes the
/// value condition on `ȳ = 0`.
pub fn observer_kernel_anticollocated(
    lambda1: f64,
    lambda2: f64,
    n: usize,
    tol: f64,
) -> Result<KernelField> {
    check_resolution(n)?;
    let side = SideCondition::ZeroDirichlet;
    // (Puu, Pvu) and (Pvv, Puv)
    let (first, second) = solve_two(
        KernelProblem::new(lambda1 / 4.0, lambda2 / 4.0, 0.0, -lambda2 / 4.0, side, n).with_tol(tol),
        KernelProblem::new(lambda2 / 4.0, lambda1 / 4.0, 0.0, -lambda1 / 4.0, side, n).with_tol(tol),
    )?;
    let unreflect = |g: &TriangleGrid| {
        let mut out = TriangleGrid::zeros(n);
        for i in 0..=n {
            for j in 0..=i {
                out[(i, j)] = g[(n - j, n - i)];
            }
        }
        out
    };
    Ok(KernelField {
        n,
        kuu: unreflect(&first.g),
        kvu: unreflect(&first.h),
        kvv: unreflect(&second.g),
        kuv: unreflect(&second.h),
        solves: [(&first).into(), (&second).into()],
        family: KernelFamily::ObserverAntiCollocated,
        lambda1,
        lambda2,
    })
}

/// Collocated observer kernel: `P_xx − P_yy = −ΣP` on `0 ≤ x ≤ y ≤ 1`,
/// `P(x,x) = −Σx/2`, `P_x(0,y) = 0`.
///
/// Stored as `P̃(x, y) = P(y, x)`, for which the side condition is the
/// reflection condition at `y = 0`.
pub fn observer_kernel_collocated(
    lambda1: f64,
    lambda2: f64,
    n: usize,
    tol: f64,
) -> Result<KernelField> {
    check_resolution(n)?;
    let side = SideCondition::ReflectionNeumann;
    let (first, second) = solve_two(
        KernelProblem::new(lambda1 / 4.0, lambda2 / 4.0, 0.0, -lambda2 / 4.0, side, n).with_tol(tol),
        KernelProblem::new(lambda2 / 4.0, lambda1 / 4.0, 0.0, -lambda1 / 4.0, side, n).with_tol(tol),
    )?;
    Ok(KernelField {
        n,
        solves: [(&first).into(), (&second).into()],
        kuu: first.g,
        kvu: first.h,
        kvv: second.g,
        kuv: second.h,
        family: KernelFamily::ObserverCollocated,
        lambda1,
        lambda2,
    })
}

pub fn solve_family(
    family: KernelFamily,
    lambda1: f64,
    lambda2: f64,
    n: usize,
    tol: f64,
) -> Result<KernelField> {
    match family {
        KernelFamily::Control => control_kernel(lambda1, lambda2, n, tol),
        KernelFamily::Inverse => inverse_kernel(lambda1, lambda2, n, tol),
        KernelFamily::ObserverAntiCollocated => {
            observer_kernel_anticollocated(lambda1, lambda2, n, tol)
        }
        KernelFamily::ObserverCollocated => observer_kernel_collocated(lambda1, lambda2, n, tol),
    }
}

/// Controller and observer gains on a uniform grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    /// `K(1, y_j)`, the integrand of `U(t) = ∫₀¹ K(1,y) w(y,t) dy`.
    pub feedback_row: Vec<Mat2>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    /// Boundary injection gain; zero for both setups.
    pub l_gain: f64,
    pub setup: ObserverSetup,
}

impl GainSet {
    pub fn nx(&self) -> usize {
        self.feedback_row.len() - 1
    }

    /// Resamples every gain onto the grid `x_j = j/nx`.
    pub fn resample(&self, nx: usize) -> GainSet {
        if nx == self.nx() && self.p1.len() == nx + 1 {
            return self.clone();
        }
        let comp = |r: usize, c: usize| -> Vec<f64> {
            let v: Vec<f64> = self.feedback_row.iter().map(|m| m[r][c]).collect();
            resample_uniform(&v, nx)
        };
        let (a, b, c, d) = (comp(0, 0), comp(0, 1), comp(1, 0), comp(1, 1));
        GainSet {
            feedback_row: (0..=nx)
                .map(|k| [[a[k], b[k]], [c[k], d[k]]])
                .collect(),
            p1: resample_uniform(&self.p1, nx),
            p2: resample_uniform(&self.p2, nx),
            l_gain: self.l_gain,
            setup: self.setup,
        }
    }
}

fn mismatch(expected: &'static str, kf: &KernelField) -> Error {
    Error::FamilyMismatch {
        expected,
        found: kf.family.name(),
    }
}

/// `K(1, y_j)` read from the `x = 1` edge of the control kernel.
pub fn feedback_row(control: &KernelField) -> Result<Vec<Mat2>> {
    if control.family != KernelFamily::Control {
        return Err(mismatch("state feedback", control));
    }
    Ok((0..=control.n).map(|j| control.node(control.n, j)).collect())
}

/// Output-injection gains `(p₁, p₂)` on the kernel grid.
///
/// Anti-collocated: `p = P_y(x, 0)` first column, by the 3-point one-sided
/// difference; the two nodes nearest `x = 0` are extrapolated quadratically.
/// Collocated: `p = P(x, 1)` first column, which is the stored `x = 1` edge.
pub fn injection_gains(observer: &KernelField, setup: ObserverSetup) -> Result<(Vec<f64>, Vec<f64>)> {
    if observer.family != setup.family() {
        return Err(mismatch(setup.name(), observer));
    }
    let n = observer.n;
    match setup {
        ObserverSetup::AntiCollocated => {
            let h = 1.0 / n as f64;
            let slope = |k: &TriangleGrid| {
                let mut p = vec![0.0; n + 1];
                for i in 2..=n {
                    p[i] = (-3.0 * k[(i, 0)] + 4.0 * k[(i, 1)] - k[(i, 2)]) / (2.0 * h);
                }
                p[1] = 3.0 * p[2] - 3.0 * p[3] + p[4];
                p[0] = 6.0 * p[2] - 8.0 * p[3] + 3.0 * p[4];
                p
            };
            Ok((slope(&observer.kuu), slope(&observer.kvu)))
        }
        ObserverSetup::Collocated => Ok((
            observer.kuu.last_row().to_vec(),
            observer.kvu.last_row().to_vec(),
        )),
    }
}

pub fn extract_gains(
    control: &KernelField,
    observer: &KernelField,
    setup: ObserverSetup,
) -> Result<GainSet> {
    let feedback_row = feedback_row(control)?;
    let (p1, p2) = injection_gains(observer, setup)?;
    Ok(GainSet {
        feedback_row,
        p1,
        p2,
        l_gain: 0.0,
        setup,
    })
}

/// Convenience bundle of every kernel for one plant.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub control: KernelField,
    pub inverse: KernelField,
    pub anticollocated: KernelField,
    pub collocated: KernelField,
}

impl KernelSet {
    pub fn solve(lambda1: f64, lambda2: f64, n: usize) -> Result<Self> {
        Self::solve_with_tol(lambda1, lambda2, n, DEFAULT_TOL)
    }

    pub fn solve_with_tol(lambda1: f64, lambda2: f64, n: usize, tol: f64) -> Result<Self> {
        Ok(Self {
            control: control_kernel(lambda1, lambda2, n, tol)?,
            inverse: inverse_kernel(lambda1, lambda2, n, tol)?,
            anticollocated: observer_kernel_anticollocated(lambda1, lambda2, n, tol)?,
            collocated: observer_kernel_collocated(lambda1, lambda2, n, tol)?,
        })
    }

    pub fn observer(&self, setup: ObserverSetup) -> &KernelField {
        match setup {
            ObserverSetup::AntiCollocated => &self.anticollocated,
            ObserverSetup::Collocated => &self.collocated,
        }
    }

    pub fn gains(&self, setup: ObserverSetup) -> Result<GainSet> {
        extract_gains(&self.control, self.observer(setup), setup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn max_dev(g: &TriangleGrid, f: impl Fn(f64, f64) -> f64) -> f64 {
        let h = g.step();
        g.nodes()
            .map(|(i, j, v)| (v - f(i as f64 * h, j as f64 * h)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn control_diagonal_matches_the_data() {
        let k = control_kernel(20.0, 10.0, 64, TOL).unwrap();
        let mid = k.node(32, 32);
        assert!((mid[0][1] + 5.0).abs() < 1e-12);
        assert!((mid[1][0] + 2.5).abs() < 1e-12);
        for i in 0..=64 {
            let x = i as f64 / 64.0;
            let m = k.node(i, i);
            assert!(m[0][0].abs() < 1e-12 && m[1][1].abs() < 1e-12);
            assert!((m[0][1] + 10.0 * x).abs() < 1e-12);
            assert!((m[1][0] + 5.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coupling_gives_zero_kernels() {
        for family in KernelFamily::ALL {
            let kf = solve_family(family, 0.0, 0.0, 16, TOL).unwrap();
            assert_eq!(kf.max_abs(), 0.0, "{family:?}");
        }
    }

    #[test]
    fn decoupled_closed_forms() {
        let k = control_kernel(20.0, 0.0, 64, TOL).unwrap();
        assert!(k.kuu.max_abs() <= 1e-10);
        assert!(max_dev(&k.kuv, |x, _| -10.0 * x) <= 1e-10);

        let l = inverse_kernel(20.0, 0.0, 64, TOL).unwrap();
        assert!(l.kuu.max_abs() <= 1e-10);
        assert!(max_dev(&l.kuv, |x, _| -10.0 * x) <= 1e-10);

        let p = observer_kernel_anticollocated(0.0, 10.0, 64, TOL).unwrap();
        assert!(p.kuu.max_abs() <= 1e-10);
        assert!(max_dev(&p.kvu, |x, _| -5.0 * (1.0 - x)) <= 1e-10);

        let q = observer_kernel_collocated(0.0, 10.0, 64, TOL).unwrap();
        assert!(q.kuu.max_abs() <= 1e-10);
        assert!(max_dev(&q.kvu, |x, _| -5.0 * x) <= 1e-10);
    }

    #[test]
    fn swapping_couplings_swaps_components() {
        let a = control_kernel(20.0, 10.0, 48, TOL).unwrap();
        let b = control_kernel(10.0, 20.0, 48, TOL).unwrap();
        for (x, y) in a.kvu.as_slice().iter().zip(b.kuv.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
        let s = control_kernel(7.0, 7.0, 48, TOL).unwrap();
        assert_eq!(s.kuv, s.kvu);
        assert_eq!(s.kuu, s.kvv);
    }

    #[test]
    fn every_family_honours_its_diagonal() {
        for family in KernelFamily::ALL {
            let kf = solve_family(family, 20.0, 10.0, 64, TOL).unwrap();
            for i in 0..=64 {
                let want = kf.diagonal_data(i as f64 / 64.0);
                let got = kf.node(i, i);
                for r in 0..2 {
                    for c in 0..2 {
                        assert!((got[r][c] - want[r][c]).abs() <= 1e-12, "{family:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn anticollocated_kernel_vanishes_at_the_far_end() {
        let p = observer_kernel_anticollocated(20.0, 10.0, 64, TOL).unwrap();
        for j in 0..=64 {
            let m = p.node(64, j);
            assert!(m.iter().flatten().all(|v| v.abs() <= 1e-12));
        }
    }

    #[test]
    fn collocated_at_uses_original_orientation() {
        let p = observer_kernel_collocated(20.0, 10.0, 32, TOL).unwrap();
        let stored = p.node(24, 8);
        let orig = p.at(8.0 / 32.0, 24.0 / 32.0);
        assert_eq!(stored, orig);
    }

    #[test]
    fn gain_extraction() {
        let zero = KernelSet::solve(0.0, 0.0, 16).unwrap();
        let g = zero.gains(ObserverSetup::AntiCollocated).unwrap();
        assert!(g.feedback_row.iter().flatten().flatten().all(|&v| v == 0.0));
        assert_eq!(g.l_gain, 0.0);

        let dec = KernelSet::solve(0.0, 10.0, 64).unwrap();
        let g = dec.gains(ObserverSetup::AntiCollocated).unwrap();
        assert!(g.p1.iter().chain(&g.p2).all(|v| v.abs() <= 1e-9));

        let ks = KernelSet::solve(20.0, 10.0, 64).unwrap();
        let g = ks.gains(ObserverSetup::Collocated).unwrap();
        let end = g.feedback_row[64];
        assert!((end[0][1] + 10.0).abs() <= 1e-12);
        assert!((end[1][0] + 5.0).abs() <= 1e-12);
        assert_eq!(g.p1.len(), 65);
        assert!(g.p1.iter().chain(&g.p2).all(|v| v.is_finite()));
    }

    #[test]
    fn wrong_family_is_rejected() {
        let ks = KernelSet::solve(1.0, 2.0, 16).unwrap();
        assert!(matches!(feedback_row(&ks.inverse), Err(Error::FamilyMismatch { .. })));
        assert!(matches!(
            injection_gains(&ks.control, ObserverSetup::Collocated),
            Err(Error::FamilyMismatch { .. })
        ));
        assert!(matches!(
            extract_gains(&ks.control, &ks.collocated, ObserverSetup::AntiCollocated),
            Err(Error::FamilyMismatch { .. })
        ));
    }

    #[test]
    fn coarse_grids_are_rejected() {
        assert!(control_kernel(1.0, 1.0, 4, TOL).is_err());
    }

    #[test]
    fn gain_resampling_preserves_end_values() {
        let ks = KernelSet::solve(20.0, 10.0, 32).unwrap();
        let g = ks.gains(ObserverSetup::Collocated).unwrap();
        let r = g.resample(80);
        assert_eq!(r.nx(), 80);
        assert_eq!(r.feedback_row[80], g.feedback_row[32]);
        assert_eq!(r.p1[0], g.p1[0]);
    }
}
