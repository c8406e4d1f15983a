//! θ-scheme simulation of the plant, the boundary observers and the closed loops.
//!
//! Space is discretized with second-order central differences on
//! `x_j = j/nx`; the Neumann condition at `x = 0` uses a ghost node and the
//! actuated Dirichlet value at `x = 1` replaces the last row. The reaction
//! term `Σw` is part of the implicit operator, so each step solves one
//! block-tridiagonal system with 2×2 blocks whose factorization is computed
//! once. Output injection is explicit.

use crate::error::{Error, Result};
use crate::grid::{trapezoid, TriangleGrid};
use crate::kernels::{GainSet, KernelFamily, KernelField, Mat2, ObserverSetup};
use crate::mat2;

/// `(u, v)` samples on the uniform grid `x_j = j/nx`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldPair {
    pub fn zeros(nx: usize) -> Self {
        Self {
            u: vec![0.0; nx + 1],
            v: vec![0.0; nx + 1],
        }
    }

    pub fn from_fn(nx: usize, f: impl Fn(f64) -> [f64; 2]) -> Self {
        let (u, v) = (0..=nx)
            .map(|j| {
                let [a, b] = f(j as f64 / nx as f64);
                (a, b)
            })
            .unzip();
        Self { u, v }
    }

    pub fn nx(&self) -> usize {
        self.u.len() - 1
    }

    #[inline]
    pub fn at(&self, j: usize) -> [f64; 2] {
        [self.u[j], self.v[j]]
    }

    #[inline]
    fn set(&mut self, j: usize, w: [f64; 2]) {
        self.u[j] = w[0];
        self.v[j] = w[1];
    }

    pub fn sub(&self, other: &FieldPair) -> FieldPair {
        FieldPair {
            u: self.u.iter().zip(&other.u).map(|(a, b)| a - b).collect(),
            v: self.v.iter().zip(&other.v).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// Initial profile applied to both components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IcPreset {
    /// `A cos(πx/2)`; satisfies `w_x(0) = 0` and `w(1) = 0`.
    CosHalfPi(f64),
    Constant(f64),
    /// Raised cosine `A (1 + cos(π(x − c)/width))/2` on `|x − c| < width`.
    Bump {
        center: f64,
        width: f64,
        amplitude: f64,
    },
}

impl IcPreset {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            IcPreset::CosHalfPi(a) => a * (0.5 * std::f64::consts::PI * x).cos(),
            IcPreset::Constant(a) => a,
            IcPreset::Bump {
                center,
                width,
                amplitude,
            } => {
                let r = (x - center) / width;
                if r.abs() < 1.0 {
                    0.5 * amplitude * (1.0 + (std::f64::consts::PI * r).cos())
                } else {
                    0.0
                }
            }
        }
    }

    pub fn field(&self, nx: usize) -> FieldPair {
        FieldPair::from_fn(nx, |x| {
            let w = self.eval(x);
            [w, w]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    OpenLoop,
    StateFeedback,
    OutputFeedbackAntiCollocated,
    OutputFeedbackCollocated,
    /// Plant under full-state feedback with an observer running alongside.
    ObserverOnly(ObserverSetup),
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::OpenLoop => "open_loop",
            Scenario::StateFeedback => "state_feedback",
            Scenario::OutputFeedbackAntiCollocated => "output_feedback_anticollocated",
            Scenario::OutputFeedbackCollocated => "output_feedback_collocated",
            Scenario::ObserverOnly(ObserverSetup::AntiCollocated) => "observer_anticollocated",
            Scenario::ObserverOnly(ObserverSetup::Collocated) => "observer_collocated",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "open_loop" => Scenario::OpenLoop,
            "state_feedback" => Scenario::StateFeedback,
            "output_feedback_anticollocated" => Scenario::OutputFeedbackAntiCollocated,
            "output_feedback_collocated" => Scenario::OutputFeedbackCollocated,
            "observer_anticollocated" => Scenario::ObserverOnly(ObserverSetup::AntiCollocated),
            "observer_collocated" => Scenario::ObserverOnly(ObserverSetup::Collocated),
            _ => return None,
        })
    }

    pub const ALL: [Scenario; 6] = [
        Scenario::OpenLoop,
        Scenario::StateFeedback,
        Scenario::OutputFeedbackAntiCollocated,
        Scenario::OutputFeedbackCollocated,
        Scenario::ObserverOnly(ObserverSetup::AntiCollocated),
        Scenario::ObserverOnly(ObserverSetup::Collocated),
    ];

    /// Observer setup, if the scenario runs an observer.
    pub fn observer(self) -> Option<ObserverSetup> {
        match self {
            Scenario::OpenLoop | Scenario::StateFeedback => None,
            Scenario::OutputFeedbackAntiCollocated => Some(ObserverSetup::AntiCollocated),
            Scenario::OutputFeedbackCollocated => Some(ObserverSetup::Collocated),
            Scenario::ObserverOnly(setup) => Some(setup),
        }
    }

    pub fn needs_gains(self) -> bool {
        self != Scenario::OpenLoop
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub nx: usize,
    pub dt: f64,
    pub t_final: f64,
    /// 1/2 is Crank–Nicolson, 1 is backward Euler.
    pub theta: f64,
    pub scenario: Scenario,
    pub ic_preset: IcPreset,
    pub observer_ic_preset: IcPreset,
    pub record_every: usize,
    pub actuation: Actuation,
}

/// Time level at which the feedback integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actuation {
    /// `U^{n+1} = ∫K(1,y) w^{n+1}(y) dy`, solved together with the step.
    Implicit,
    /// `U^{n+1} = ∫K(1,y) w^n(y) dy`, a one-step lag.
    Lagged,
}

impl Actuation {
    pub fn name(self) -> &'static str {
        match self {
            Actuation::Implicit => "implicit",
            Actuation::Lagged => "lagged",
        }
    }
}

impl SimConfig {
    pub fn new(lambda1: f64, lambda2: f64, scenario: Scenario) -> Self {
        Self {
            lambda1,
            lambda2,
            nx: 200,
            dt: 1e-4,
            t_final: 2.0,
            theta: 0.5,
            scenario,
            ic_preset: IcPreset::CosHalfPi(1.0),
            observer_ic_preset: IcPreset::Constant(0.0),
            record_every: 100,
            actuation: Actuation::Implicit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt > 0.0) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_final >= self.dt) {
            return bad(format!("t_final = {} must be at least dt", self.t_final));
        }
        if self.nx < 16 {
            return bad(format!("nx = {} is below 16", self.nx));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta = {} outside [0, 1]", self.theta));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            return bad("non-finite coupling".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn snapshot_count(&self) -> usize {
        self.steps() / self.record_every + 1
    }
}

/// Factorized θ-scheme operator for one `(λ₁, λ₂, nx, dt, θ)`.
#[derive(Debug, Clone)]
pub struct Stepper {
    nx: usize,
    dt: f64,
    theta: f64,
    sigma: Mat2,
    inv_h2: f64,
    /// Inverses of the eliminated diagonal blocks.
    pivots: Vec<Mat2>,
    /// Eliminated super-diagonal blocks.
    upper: Vec<Mat2>,
    /// Sub-diagonal coefficients (multiples of the identity).
    lower: Vec<f64>,
    /// Responses to a unit Dirichlet value in `u` and in `v` with zero data.
    boundary_response: [FieldPair; 2],
}

impl Stepper {
    pub fn new(lambda1: f64, lambda2: f64, nx: usize, dt: f64, theta: f64) -> Result<Self> {
        let h = 1.0 / nx as f64;
        let inv_h2 = 1.0 / (h * h);
        let sigma = [[0.0, lambda1], [lambda2, 0.0]];
        let r = theta * dt * inv_h2;

        // rows 0..nx-1: (1 + 2r) I − θ dt Σ on the diagonal, −r off it
        // (−2r above row 0 from the ghost node); row nx is the identity.
        let interior = mat2::add(
            &mat2::scale(&mat2::IDENTITY, 1.0 + 2.0 * r),
            &mat2::scale(&sigma, -theta * dt),
        );
        let mut lower = vec![0.0; nx + 1];
        let mut sup = vec![0.0; nx + 1];
        for j in 0..nx {
            if j > 0 {
                lower[j] = -r;
            }
            sup[j] = if j == 0 { -2.0 * r } else { -r };
        }

        let mut pivots = Vec::with_capacity(nx + 1);
        let mut upper = Vec::with_capacity(nx + 1);
        for j in 0..=nx {
            let diag = if j == nx { mat2::IDENTITY } else { interior };
            let modified = if j == 0 {
                diag
            } else {
                let prev: &Mat2 = &upper[j - 1];
                mat2::add(&diag, &mat2::scale(prev, -lower[j]))
            };
            let inv = mat2::inverse(&modified).ok_or(Error::SingularSystem)?;
            upper.push(mat2::scale(&inv, sup[j]));
            pivots.push(inv);
        }

        let mut stepper = Self {
            nx,
            dt,
            theta,
            sigma,
            inv_h2,
            pivots,
            upper,
            lower,
            boundary_response: [FieldPair::zeros(nx), FieldPair::zeros(nx)],
        };
        for (k, unit) in [[1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
            let mut rhs = vec![[0.0; 2]; nx + 1];
            rhs[nx] = unit;
            stepper.solve(&mut rhs);
            let resp = &mut stepper.boundary_response[k];
            for (j, w) in rhs.into_iter().enumerate() {
                resp.set(j, w);
            }
        }
        Ok(stepper)
    }

    /// Gain matrix `M` with `∫K(1,y) Z(y) dy = M U` for the boundary response `Z`.
    fn feedback_closure(&self, row: &[Mat2]) -> Result<Mat2> {
        let a = feedback_control(row, &self.boundary_response[0]);
        let b = feedback_control(row, &self.boundary_response[1]);
        let m = [[1.0 - a[0], -b[0]], [-a[1], 1.0 - b[1]]];
        mat2::inverse(&m).ok_or(Error::SingularSystem)
    }

    /// Step with `w(1) = ∫K(1,y) w(y) dy` at the new level. `closure` comes
    /// from [`Stepper::feedback_closure`] for the same `row`.
    fn step_feedback(
        &self,
        state: &FieldPair,
        row: &[Mat2],
        closure: &Mat2,
        forcing: Option<(&[f64], &[f64], f64)>,
    ) -> (FieldPair, [f64; 2]) {
        let mut w = self.advance(state, [0.0, 0.0], forcing);
        let u = mat2::mul_vec(closure, feedback_control(row, &w));
        for j in 0..=self.nx {
            let z0 = self.boundary_response[0].at(j);
            let z1 = self.boundary_response[1].at(j);
            w.u[j] += z0[0] * u[0] + z1[0] * u[1];
            w.v[j] += z0[1] * u[0] + z1[1] * u[1];
        }
        // exact boundary value
        w.set(self.nx, u);
        (w, u)
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(cfg.lambda1, cfg.lambda2, cfg.nx, cfg.dt, cfg.theta)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `(w_xx + Σw)_j` for `j < nx`, with the ghost node at `x = 0`.
    fn operator(&self, w: &FieldPair, j: usize) -> [f64; 2] {
        let c = w.at(j);
        let right = w.at(j + 1);
        let left = if j == 0 { right } else { w.at(j - 1) };
        let s = mat2::mul_vec(&self.sigma, c);
        [
            (right[0] - 2.0 * c[0] + left[0]) * self.inv_h2 + s[0],
            (right[1] - 2.0 * c[1] + left[1]) * self.inv_h2 + s[1],
        ]
    }

    fn solve(&self, rhs: &mut [[f64; 2]]) {
        let n = self.nx;
        rhs[0] = mat2::mul_vec(&self.pivots[0], rhs[0]);
        for j in 1..=n {
            let prev = rhs[j - 1];
            let d = [rhs[j][0] - self.lower[j] * prev[0], rhs[j][1] - self.lower[j] * prev[1]];
            rhs[j] = mat2::mul_vec(&self.pivots[j], d);
        }
        for j in (0..n).rev() {
            let next = rhs[j + 1];
            let c = mat2::mul_vec(&self.upper[j], next);
            rhs[j] = [rhs[j][0] - c[0], rhs[j][1] - c[1]];
        }
    }

    fn advance(
        &self,
        state: &FieldPair,
        control: [f64; 2],
        forcing: Option<(&[f64], &[f64], f64)>,
    ) -> FieldPair {
        let explicit = (1.0 - self.theta) * self.dt;
        let mut rhs = vec![[0.0; 2]; self.nx + 1];
        for (j, r) in rhs.iter_mut().enumerate().take(self.nx) {
            let w = state.at(j);
            let a = self.operator(state, j);
            *r = [w[0] + explicit * a[0], w[1] + explicit * a[1]];
            if let Some((p1, p2, innovation)) = forcing {
                r[0] += self.dt * p1[j] * innovation;
                r[1] += self.dt * p2[j] * innovation;
            }
        }
        rhs[self.nx] = control;
        self.solve(&mut rhs);
        let mut out = FieldPair::zeros(self.nx);
        for (j, w) in rhs.into_iter().enumerate() {
            out.set(j, w);
        }
        out
    }

    /// One step of the plant with `w(1) = control` at the new time level.
    pub fn step_plant(&self, state: &FieldPair, control: [f64; 2]) -> FieldPair {
        debug_assert_eq!(state.nx(), self.nx);
        self.advance(state, control, None)
    }

    /// One observer step. The injection `p(x)(y − ŷ)` uses the plant
    /// measurement and the observer estimate at the current level.
    pub fn step_observer(
        &self,
        observer: &FieldPair,
        measurement: f64,
        control: [f64; 2],
        p1: &[f64],
        p2: &[f64],
        setup: ObserverSetup,
    ) -> FieldPair {
        debug_assert_eq!(observer.nx(), self.nx);
        let innovation = measurement - measure(observer, setup);
        self.advance(observer, control, Some((p1, p2, innovation)))
    }
}

/// `u(0)` (anti-collocated) or the 3-point one-sided `u_x(1)` (collocated).
pub fn measure(state: &FieldPair, setup: ObserverSetup) -> f64 {
    match setup {
        ObserverSetup::AntiCollocated => state.u[0],
        ObserverSetup::Collocated => {
            let n = state.nx();
            let u = &state.u;
            (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) * n as f64 / 2.0
        }
    }
}

/// One plant step; builds the factorization on every call; prefer [`Stepper`] in loops.
pub fn step_plant(state: &FieldPair, control: [f64; 2], cfg: &SimConfig) -> Result<FieldPair> {
    check_len(state, cfg.nx)?;
    Ok(Stepper::from_config(cfg)?.step_plant(state, control))
}

pub fn step_observer(
    observer: &FieldPair,
    measurement: f64,
    control: [f64; 2],
    gains: &GainSet,
    cfg: &SimConfig,
) -> Result<FieldPair> {
    check_len(observer, cfg.nx)?;
    match cfg.scenario.observer() {
        Some(setup) if setup == gains.setup => {}
        _ => {
            return Err(Error::FamilyMismatch {
                expected: cfg.scenario.name(),
                found: gains.setup.name(),
            })
        }
    }
    let g = gains.resample(cfg.nx);
    Ok(Stepper::from_config(cfg)?.step_observer(
        observer,
        measurement,
        control,
        &g.p1,
        &g.p2,
        g.setup,
    ))
}

fn check_len(state: &FieldPair, nx: usize) -> Result<()> {
    if state.u.len() != nx + 1 || state.v.len() != nx + 1 {
        return Err(Error::GridMismatch(format!(
            "state has {} nodes, config expects {}",
            state.u.len(),
            nx + 1
        )));
    }
    Ok(())
}

/// `∫₀¹ K(1,y) w(y) dy` by the trapezoid rule. `row` must be sampled on the
/// state grid (see [`GainSet::resample`]).
pub fn feedback_control(row: &[Mat2], state: &FieldPair) -> [f64; 2] {
    let nx = state.nx();
    assert_eq!(row.len(), nx + 1, "feedback row and state grid differ");
    let h = 1.0 / nx as f64;
    let mut acc = [0.0; 2];
    for (j, k) in row.iter().enumerate() {
        let wgt = if j == 0 || j == nx { 0.5 * h } else { h };
        let kw = mat2::mul_vec(k, state.at(j));
        acc[0] += wgt * kw[0];
        acc[1] += wgt * kw[1];
    }
    acc
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scenario: Scenario,
    pub nx: usize,
    pub times: Vec<f64>,
    pub plant: Vec<FieldPair>,
    pub observer: Option<Vec<FieldPair>>,
    /// Control computed from each snapshot, applied over the following step.
    pub controls: Vec<[f64; 2]>,
    /// `u(0,t)` or `u_x(1,t)` of the plant; `u(0,t)` when no observer runs.
    pub measurements: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Observer error `w̃ = w − ŵ` per snapshot.
    pub fn errors(&self) -> Option<Vec<FieldPair>> {
        self.observer
            .as_ref()
            .map(|obs| self.plant.iter().zip(obs).map(|(w, o)| w.sub(o)).collect())
    }
}

/// What a control law sees at each step.
pub struct ControlInput<'a> {
    pub t: f64,
    pub plant: &'a FieldPair,
    pub observer: Option<&'a FieldPair>,
}

/// Runs the configured scenario with its standard control law.
///
/// State feedback and the observer-only runs use `U = ∫K(1,y)w dy`, output
/// feedback uses `U = ∫K(1,y)ŵ dy`. With [`Actuation::Implicit`] the integral
/// is taken at the new time level; the recorded control of every snapshot is
/// the integral over that snapshot's state in both modes.
pub fn run_scenario(cfg: &SimConfig, gains: Option<&GainSet>) -> Result<Trajectory> {
    let row = match (cfg.scenario.needs_gains(), gains) {
        (false, _) => Vec::new(),
        (true, Some(g)) => g.resample(cfg.nx).feedback_row,
        (true, None) => return Err(Error::MissingKernels(cfg.scenario.name())),
    };
    let scenario = cfg.scenario;
    let law = move |input: ControlInput<'_>| match scenario {
        Scenario::OpenLoop => [0.0, 0.0],
        Scenario::StateFeedback | Scenario::ObserverOnly(_) => feedback_control(&row, input.plant),
        Scenario::OutputFeedbackAntiCollocated | Scenario::OutputFeedbackCollocated => {
            feedback_control(&row, input.observer.unwrap_or(input.plant))
        }
    };
    match (cfg.actuation, scenario) {
        (Actuation::Lagged, _) | (_, Scenario::OpenLoop) => run_with_control(cfg, gains, law),
        (Actuation::Implicit, _) => run_loop(cfg, gains, law, true),
    }
}

/// Runs the scenario's plant/observer pair under an arbitrary control law.
///
/// The control is evaluated on the current state and applied at the new
/// time level.
pub fn run_with_control(
    cfg: &SimConfig,
    gains: Option<&GainSet>,
    control: impl FnMut(ControlInput<'_>) -> [f64; 2],
) -> Result<Trajectory> {
    run_loop(cfg, gains, control, false)
}

fn run_loop(
    cfg: &SimConfig,
    gains: Option<&GainSet>,
    mut control: impl FnMut(ControlInput<'_>) -> [f64; 2],
    implicit: bool,
) -> Result<Trajectory> {
    let stepper = Stepper::from_config(cfg)?;
    let nx = cfg.nx;
    let setup = cfg.scenario.observer();
    let injection = match setup {
        None => None,
        Some(setup) => {
            let g = gains.ok_or(Error::MissingKernels(cfg.scenario.name()))?;
            if g.setup != setup {
                return Err(Error::FamilyMismatch {
                    expected: cfg.scenario.name(),
                    found: g.setup.name(),
                });
            }
            let g = g.resample(nx);
            Some((g.p1, g.p2, setup))
        }
    };
    let feedback = if implicit {
        let g = gains.ok_or(Error::MissingKernels(cfg.scenario.name()))?;
        let row = g.resample(nx).feedback_row;
        let closure = stepper.feedback_closure(&row)?;
        Some((row, closure))
    } else {
        None
    };
    let on_observer = matches!(
        cfg.scenario,
        Scenario::OutputFeedbackAntiCollocated | Scenario::OutputFeedbackCollocated
    );

    let mut plant = cfg.ic_preset.field(nx);
    let mut observer = injection.as_ref().map(|_| cfg.observer_ic_preset.field(nx));
    let capacity = cfg.snapshot_count();
    let mut traj = Trajectory {
        scenario: cfg.scenario,
        nx,
        times: Vec::with_capacity(capacity),
        plant: Vec::with_capacity(capacity),
        observer: observer.as_ref().map(|_| Vec::with_capacity(capacity)),
        controls: Vec::with_capacity(capacity),
        measurements: Vec::with_capacity(capacity),
    };

    let steps = cfg.steps();
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let u = control(ControlInput {
            t,
            plant: &plant,
            observer: observer.as_ref(),
        });
        let y = measure(&plant, setup.unwrap_or(ObserverSetup::AntiCollocated));
        if k % cfg.record_every == 0 {
            traj.times.push(t);
            traj.plant.push(plant.clone());
            if let (Some(rec), Some(obs)) = (traj.observer.as_mut(), observer.as_ref()) {
                rec.push(obs.clone());
            }
            traj.controls.push(u);
            traj.measurements.push(y);
        }
        if k == steps {
            break;
        }
        match (&feedback, observer.as_mut(), injection.as_ref()) {
            (Some((row, closure)), Some(obs), Some((p1, p2, setup))) if on_observer => {
                let innovation = y - measure(obs, *setup);
                let (next, applied) =
                    stepper.step_feedback(obs, row, closure, Some((p1, p2, innovation)));
                *obs = next;
                plant = stepper.step_plant(&plant, applied);
            }
            (Some((row, closure)), obs, inj) => {
                let (next, applied) = stepper.step_feedback(&plant, row, closure, None);
                if let (Some(obs), Some((p1, p2, setup))) = (obs, inj) {
                    *obs = stepper.step_observer(obs, y, applied, p1, p2, *setup);
                }
                plant = next;
            }
            (None, obs, inj) => {
                if let (Some(obs), Some((p1, p2, setup))) = (obs, inj) {
                    *obs = stepper.step_observer(obs, y, u, p1, p2, *setup);
                }
                plant = stepper.step_plant(&plant, u);
            }
        }
        if !plant.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "simulation diverged to non-finite values at t = {t}"
            )));
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDirection {
    /// `γ = w − ∫₀ˣ K(x,y) w(y) dy` (control kernel).
    Forward,
    /// `w = γ + ∫₀ˣ L(x,y) γ(y) dy` (inverse kernel).
    Inverse,
    /// `w̃ = γ̃ − ∫ P γ̃` over `[0,x]` or `[x,1]` (observer kernel).
    ObserverForward(ObserverSetup),
    /// Solves `w̃ = γ̃ − ∫ P γ̃` for `γ̃` (trapezoid marching).
    ObserverInverse(ObserverSetup),
}

impl TransformDirection {
    fn family(self) -> KernelFamily {
        match self {
            TransformDirection::Forward => KernelFamily::Control,
            TransformDirection::Inverse => KernelFamily::Inverse,
            TransformDirection::ObserverForward(s) | TransformDirection::ObserverInverse(s) => {
                s.family()
            }
        }
    }
}

/// Applies a Volterra transformation to a state.
///
/// When the kernel resolution differs from the state grid the kernel is
/// resampled by piecewise-linear interpolation, unless `allow_resample` is
/// false.
pub fn apply_transform(
    state: &FieldPair,
    kernel: &KernelField,
    direction: TransformDirection,
    allow_resample: bool,
) -> Result<FieldPair> {
    if kernel.family != direction.family() {
        return Err(Error::FamilyMismatch {
            expected: direction.family().name(),
            found: kernel.family.name(),
        });
    }
    let nx = state.nx();
    let resampled;
    let kernel = if kernel.n == nx {
        kernel
    } else if allow_resample {
        resampled = kernel.resample(nx);
        &resampled
    } else {
        return Err(Error::IncompatibleGrids {
            kernel: kernel.n,
            state: nx,
        });
    };
    Ok(match direction {
        TransformDirection::Forward => lower_integral(state, kernel, -1.0),
        TransformDirection::Inverse => lower_integral(state, kernel, 1.0),
        TransformDirection::ObserverForward(ObserverSetup::AntiCollocated) => {
            lower_integral(state, kernel, -1.0)
        }
        TransformDirection::ObserverForward(ObserverSetup::Collocated) => {
            upper_integral(state, kernel, -1.0)
        }
        TransformDirection::ObserverInverse(ObserverSetup::AntiCollocated) => {
            solve_lower(state, kernel)
        }
        TransformDirection::ObserverInverse(ObserverSetup::Collocated) => {
            solve_upper(state, kernel)
        }
    })
}

/// `w(x_i) + sign · ∫₀^{x_i} K(x_i, y) w(y) dy`.
fn lower_integral(state: &FieldPair, k: &KernelField, sign: f64) -> FieldPair {
    let nx = state.nx();
    let h = 1.0 / nx as f64;
    let mut out = state.clone();
    let mut us = Vec::with_capacity(nx + 1);
    let mut vs = Vec::with_capacity(nx + 1);
    for i in 1..=nx {
        us.clear();
        vs.clear();
        for j in 0..=i {
            let kw = mat2::mul_vec(&k.node(i, j), state.at(j));
            us.push(kw[0]);
            vs.push(kw[1]);
        }
        out.u[i] += sign * trapezoid(&us, h);
        out.v[i] += sign * trapezoid(&vs, h);
    }
    out
}

/// `w(x_i) + sign · ∫_{x_i}^1 P(x_i, y) w(y) dy` with `P(x, y)` stored at `(y, x)`.
fn upper_integral(state: &FieldPair, k: &KernelField, sign: f64) -> FieldPair {
    let nx = state.nx();
    let h = 1.0 / nx as f64;
    let mut out = state.clone();
    let mut us = Vec::with_capacity(nx + 1);
    let mut vs = Vec::with_capacity(nx + 1);
    for i in 0..nx {
        us.clear();
        vs.clear();
        for j in i..=nx {
            let kw = mat2::mul_vec(&k.node(j, i), state.at(j));
            us.push(kw[0]);
            vs.push(kw[1]);
        }
        out.u[i] += sign * trapezoid(&us, h);
        out.v[i] += sign * trapezoid(&vs, h);
    }
    out
}

/// Solves `w = γ − ∫₀ˣ P γ` for `γ`, marching upward in `x`.
fn solve_lower(state: &FieldPair, k: &KernelField) -> FieldPair {
    let nx = state.nx();
    let h = 1.0 / nx as f64;
    let mut g = FieldPair::zeros(nx);
    g.set(0, state.at(0));
    for i in 1..=nx {
        let mut acc = [0.0; 2];
        for j in 0..i {
            let wgt = if j == 0 { 0.5 * h } else { h };
            let kw = mat2::mul_vec(&k.node(i, j), g.at(j));
            acc[0] += wgt * kw[0];
            acc[1] += wgt * kw[1];
        }
        let rhs = state.at(i);
        let rhs = [rhs[0] + acc[0], rhs[1] + acc[1]];
        let m = mat2::add(&mat2::IDENTITY, &mat2::scale(&k.node(i, i), -0.5 * h));
        let inv = mat2::inverse(&m).unwrap_or(mat2::IDENTITY);
        g.set(i, mat2::mul_vec(&inv, rhs));
    }
    g
}

/// Solves `w = γ − ∫ₓ¹ P γ` for `γ`, marching downward from `x = 1`.
fn solve_upper(state: &FieldPair, k: &KernelField) -> FieldPair {
    let nx = state.nx();
    let h = 1.0 / nx as f64;
    let mut g = FieldPair::zeros(nx);
    g.set(nx, state.at(nx));
    for i in (0..nx).rev() {
        let mut acc = [0.0; 2];
        for j in i + 1..=nx {
            let wgt = if j == nx { 0.5 * h } else { h };
            let kw = mat2::mul_vec(&k.node(j, i), g.at(j));
            acc[0] += wgt * kw[0];
            acc[1] += wgt * kw[1];
        }
        let rhs = state.at(i);
        let rhs = [rhs[0] + acc[0], rhs[1] + acc[1]];
        let m = mat2::add(&mat2::IDENTITY, &mat2::scale(&k.node(i, i), -0.5 * h));
        let inv = mat2::inverse(&m).unwrap_or(mat2::IDENTITY);
        g.set(i, mat2::mul_vec(&inv, rhs));
    }
    g
}

/// Zero kernel of the given family, handy for identity checks.
pub fn zero_kernel(family: KernelFamily, n: usize) -> KernelField {
    let z = TriangleGrid::zeros(n);
    KernelField {
        n,
        kuu: z.clone(),
        kuv: z.clone(),
        kvu: z.clone(),
        kvv: z,
        family,
        lambda1: 0.0,
        lambda2: 0.0,
        solves: [crate::kernels::SolveSummary {
            iterations: 1,
            final_increment: 0.0,
        }; 2],
    }
}
