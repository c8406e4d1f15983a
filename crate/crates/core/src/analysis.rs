//! Norms, decay-rate fits, modal oracles, kernel residuals and the
//! Lyapunov monitor for the anti-collocated output-feedback loop.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{resample_uniform, trapezoid, TriangleGrid};
use crate::kernels::{GainSet, KernelFamily, KernelField, ObserverSetup};
use crate::mat2;
use crate::sim::{apply_transform, FieldPair, Scenario, TransformDirection, Trajectory};

/// Slowest mode of the heat equation with `w_x(0) = 0`, `w(1) = 0`.
pub const TARGET_DECAY_RATE: f64 = PI * PI / 4.0;

/// `√(∫₀¹ u² + v² dx)` by the trapezoid rule.
pub fn l2_norm(state: &FieldPair) -> f64 {
    let h = 1.0 / state.nx() as f64;
    let sq: Vec<f64> = state
        .u
        .iter()
        .zip(&state.v)
        .map(|(u, v)| u * u + v * v)
        .collect();
    trapezoid(&sq, h).sqrt()
}

/// Least-squares fit of `ln‖·‖ ≈ intercept − rate · t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
}

/// Fits an exponential rate to the samples with `t` in `window` (inclusive).
///
/// A negative rate means growth.
pub fn fit_decay(times: &[f64], norms: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let eps = 1e-9 * (window.1 - window.0).abs().max(1.0);
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (&t, &n) in times.iter().zip(norms) {
        if t < window.0 - eps || t > window.1 + eps {
            continue;
        }
        if !(n > 0.0) {
            return Err(Error::NonPositiveNorm { t });
        }
        ts.push(t);
        ys.push(n.ln());
    }
    if ts.len() < 10 {
        return Err(Error::TooFewSamples(ts.len()));
    }
    let m = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in ts.iter().zip(&ys) {
        sxy += (t - t_mean) * (y - y_mean);
        sxx += (t - t_mean) * (t - t_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(DecayFit {
        rate: -slope,
        intercept: y_mean - slope * t_mean,
        window: (ts[0], ts[ts.len() - 1]),
        r_squared,
    })
}

/// Tail window `[t_final/2, t_final]` of a time series.
pub fn tail_window(times: &[f64]) -> (f64, f64) {
    let end = times.last().copied().unwrap_or(0.0);
    (0.5 * end, end)
}

/// Dominant open-loop growth rate `√(λ₁λ₂) − (π/2)²`.
///
/// `Σ` has eigenvalues `±√(λ₁λ₂)`; the slowest Neumann–Dirichlet heat mode
/// decays at `(π/2)²`.
pub fn modal_rate_oracle(lambda1: f64, lambda2: f64) -> Result<f64> {
    let prod = lambda1 * lambda2;
    if prod < 0.0 {
        return Err(Error::ComplexSpectrum(prod));
    }
    Ok(prod.sqrt() - TARGET_DECAY_RATE)
}

/// Largest spectral norm of the kernel matrix over the grid (`K∞`, `L∞`).
pub fn kernel_sup_norm(kf: &KernelField) -> f64 {
    let n = kf.n;
    let mut worst: f64 = 0.0;
    for i in 0..=n {
        for j in 0..=i {
            worst = worst.max(mat2::norm2(&kf.node(i, j)));
        }
    }
    worst
}

/// `max ‖L − K − ∫_y^x K(x,s) L(s,y) ds‖₂` over the nodes.
pub fn reciprocity_residual(k: &KernelField, l: &KernelField) -> Result<f64> {
    if k.n != l.n {
        return Err(Error::GridMismatch(format!("K has n = {}, L has n = {}", k.n, l.n)));
    }
    if k.family != KernelFamily::Control || l.family != KernelFamily::Inverse {
        return Err(Error::FamilyMismatch {
            expected: "control and inverse kernels",
            found: if k.family != KernelFamily::Control {
                k.family.name()
            } else {
                l.family.name()
            },
        });
    }
    let n = k.n;
    let h = 1.0 / n as f64;
    let mut worst: f64 = 0.0;
    for i in 0..=n {
        for j in 0..=i {
            let mut comp = [[0.0; 2]; 2];
            for s in j..=i {
                let wgt = if i == j {
                    0.0
                } else if s == j || s == i {
                    0.5 * h
                } else {
                    h
                };
                if wgt == 0.0 {
                    continue;
                }
                comp = mat2::add(&comp, &mat2::scale(&mat2::mul(&k.node(i, s), &l.node(s, j)), wgt));
            }
            let r = mat2::add(
                &mat2::add(&l.node(i, j), &mat2::scale(&k.node(i, j), -1.0)),
                &mat2::scale(&comp, -1.0),
            );
            worst = worst.max(mat2::norm2(&r));
        }
    }
    Ok(worst)
}

/// Max over interior nodes of `|K_xx − K_yy − coupling·R|` by centered differences.
pub fn wave_residual(k: &TriangleGrid, rhs: &TriangleGrid, coupling: f64) -> f64 {
    let n = k.n();
    let h2 = k.step() * k.step();
    let mut worst: f64 = 0.0;
    for i in 2..n {
        for j in 1..i {
            let kxx = k[(i + 1, j)] - 2.0 * k[(i, j)] + k[(i - 1, j)];
            let kyy = k[(i, j + 1)] - 2.0 * k[(i, j)] + k[(i, j - 1)];
            let r = (kxx - kyy) / h2 - coupling * rhs[(i, j)];
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Max interior residual of the family's kernel PDE in stored orientation.
///
/// Control: `K_xx − K_yy = KΣ`. Inverse and anti-collocated: `−ΣP`.
/// Collocated (stored swapped): `+ΣP̃`.
pub fn kernel_pde_residual(kf: &KernelField) -> f64 {
    let (l1, l2) = (kf.lambda1, kf.lambda2);
    // (component, partner, coupling)
    let terms: [(&TriangleGrid, &TriangleGrid, f64); 4] = match kf.family {
        KernelFamily::Control => [
            (&kf.kuu, &kf.kuv, l2),
            (&kf.kuv, &kf.kuu, l1),
            (&kf.kvu, &kf.kvv, l2),
            (&kf.kvv, &kf.kvu, l1),
        ],
        KernelFamily::Inverse | KernelFamily::ObserverAntiCollocated => [
            (&kf.kuu, &kf.kvu, -l1),
            (&kf.kuv, &kf.kvv, -l1),
            (&kf.kvu, &kf.kuu, -l2),
            (&kf.kvv, &kf.kuv, -l2),
        ],
        KernelFamily::ObserverCollocated => [
            (&kf.kuu, &kf.kvu, l1),
            (&kf.kuv, &kf.kvv, l1),
            (&kf.kvu, &kf.kuu, l2),
            (&kf.kvv, &kf.kuv, l2),
        ],
    };
    terms
        .iter()
        .map(|(k, r, c)| wave_residual(k, r, *c))
        .fold(0.0, f64::max)
}

/// Max deviation of the stored diagonal from the family's Goursat data.
pub fn diagonal_error(kf: &KernelField) -> f64 {
    let n = kf.n;
    let mut worst: f64 = 0.0;
    for i in 0..=n {
        let want = kf.diagonal_data(i as f64 / n as f64);
        let got = kf.node(i, i);
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((want[r][c] - got[r][c]).abs());
            }
        }
    }
    worst
}

/// Largest second difference along x and y of any component, scaled by `1/h²`.
pub fn max_second_difference(kf: &KernelField) -> f64 {
    let n = kf.n;
    let h2 = 1.0 / (n * n) as f64;
    let mut worst: f64 = 0.0;
    for k in kf.components() {
        for i in 1..n {
            for j in 0..i {
                worst = worst.max((k[(i + 1, j)] - 2.0 * k[(i, j)] + k[(i - 1, j)]).abs() / h2);
                if j > 0 {
                    worst = worst
                        .max((k[(i, j + 1)] - 2.0 * k[(i, j)] + k[(i, j - 1)]).abs() / h2);
                }
            }
        }
    }
    worst
}

pub const LYAPUNOV_FIT_TOL: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct LyapunovReport {
    /// `Q(x) = ∫₀ˣ K(x,y) p(y) dy` on the kernel grid.
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub c: f64,
    pub d: f64,
    /// `A = 2(C² + D²)`.
    pub a: f64,
    pub times: Vec<f64>,
    pub v: Vec<f64>,
    /// `V(t) ≤ V(0) e^{−t/4} (1 + LYAPUNOV_FIT_TOL)` at every snapshot.
    pub bound_ok: bool,
    /// Largest increase between consecutive snapshots after the first.
    pub max_increase: f64,
}

/// Evaluates the Lyapunov function
/// `V = A/2 ‖α̃‖² + 1/2 ‖α̂‖² + 1/2 ‖β̃‖² + 1/2 ‖β̂‖²`
/// on an anti-collocated output-feedback trajectory, with `γ̂ = (I − K)ŵ` and
/// `γ̃` solving `w̃ = γ̃ − ∫₀ˣ P γ̃`.
///
/// `C` and `D` are the grid maxima of `p₁ − Q₁` and `p₂ − Q₂`, floored at 0.
pub fn lyapunov_monitor(
    traj: &Trajectory,
    control: &KernelField,
    observer: &KernelField,
    gains: &GainSet,
) -> Result<LyapunovReport> {
    if traj.scenario != Scenario::OutputFeedbackAntiCollocated
        || gains.setup != ObserverSetup::AntiCollocated
    {
        return Err(Error::WrongScenario);
    }
    let obs = traj.observer.as_ref().ok_or(Error::WrongScenario)?;
    if control.family != KernelFamily::Control
        || observer.family != KernelFamily::ObserverAntiCollocated
    {
        return Err(Error::WrongScenario);
    }

    let n = control.n;
    let h = 1.0 / n as f64;
    let p1 = resample_uniform(&gains.p1, n);
    let p2 = resample_uniform(&gains.p2, n);
    let mut q1 = vec![0.0; n + 1];
    let mut q2 = vec![0.0; n + 1];
    for i in 1..=n {
        let (mut a, mut b) = (Vec::with_capacity(i + 1), Vec::with_capacity(i + 1));
        for j in 0..=i {
            let kp = mat2::mul_vec(&control.node(i, j), [p1[j], p2[j]]);
            a.push(kp[0]);
            b.push(kp[1]);
        }
        q1[i] = trapezoid(&a, h);
        q2[i] = trapezoid(&b, h);
    }
    let c = p1
        .iter()
        .zip(&q1)
        .map(|(p, q)| p - q)
        .fold(0.0f64, f64::max);
    let d = p2
        .iter()
        .zip(&q2)
        .map(|(p, q)| p - q)
        .fold(0.0f64, f64::max);
    let a = 2.0 * (c * c + d * d);

    let nx = traj.nx;
    let k_nx = control.resample(nx);
    let p_nx = observer.resample(nx);
    let hx = 1.0 / nx as f64;
    let half_sq = |xs: &[f64]| 0.5 * trapezoid(&xs.iter().map(|x| x * x).collect::<Vec<_>>(), hx);

    let mut v = Vec::with_capacity(traj.len());
    for (w, w_hat) in traj.plant.iter().zip(obs) {
        let err = w.sub(w_hat);
        let g_hat = apply_transform(w_hat, &k_nx, TransformDirection::Forward, false)?;
        let g_err = apply_transform(
            &err,
            &p_nx,
            TransformDirection::ObserverInverse(ObserverSetup::AntiCollocated),
            false,
        )?;
        v.push(a * half_sq(&g_err.u) + half_sq(&g_hat.u) + half_sq(&g_err.v) + half_sq(&g_hat.v));
    }

    let v0 = v.first().copied().unwrap_or(0.0);
    let bound_ok = traj
        .times
        .iter()
        .zip(&v)
        .all(|(t, vt)| *vt <= v0 * (-t / 4.0).exp() * (1.0 + LYAPUNOV_FIT_TOL));
    let max_increase = v
        .windows(2)
        .skip(1)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(LyapunovReport {
        q1,
        q2,
        c,
        d,
        a,
        times: traj.times.clone(),
        v,
        bound_ok,
        max_increase,
    })
}

/// `‖·‖` of every plant snapshot.
pub fn plant_norms(traj: &Trajectory) -> Vec<f64> {
    traj.plant.iter().map(l2_norm).collect()
}

/// `‖w̃‖` per snapshot, if an observer ran.
pub fn error_norms(traj: &Trajectory) -> Option<Vec<f64>> {
    traj.errors().map(|e| e.iter().map(l2_norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{control_kernel, inverse_kernel, solve_family, KernelSet};
    use crate::sim::{run_scenario, IcPreset, SimConfig};

    #[test]
    fn l2_norm_reference_values() {
        assert_eq!(l2_norm(&FieldPair::zeros(10)), 0.0);
        let one = FieldPair::from_fn(10, |_| [1.0, 0.0]);
        assert!((l2_norm(&one) - 1.0).abs() < 1e-15);
        let c = FieldPair::from_fn(200, |x| [(PI * x / 2.0).cos(), 0.0]);
        assert!((l2_norm(&c) - 0.5f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn fit_recovers_a_synthetic_rate() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.04).collect();
        let n: Vec<f64> = t.iter().map(|t| 3.0 * (-2.4674 * t).exp()).collect();
        let fit = fit_decay(&t, &n, (0.0, 2.0)).unwrap();
        assert!((fit.rate - 2.4674).abs() < 1e-6);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-9);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert_eq!(tail_window(&t), (0.98, 1.96));
    }

    #[test]
    fn fit_rejects_bad_input() {
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let mut n = vec![1.0; 20];
        n[5] = 0.0;
        assert!(matches!(fit_decay(&t, &n, (0.0, 19.0)), Err(Error::NonPositiveNorm { .. })));
        assert!(matches!(fit_decay(&t, &n, (10.0, 15.0)), Err(Error::TooFewSamples(6))));
    }

    #[test]
    fn heat_run_decays_at_the_target_rate() {
        let mut cfg = SimConfig::new(0.0, 0.0, Scenario::OpenLoop);
        cfg.nx = 100;
        cfg.dt = 1e-3;
        cfg.record_every = 20;
        cfg.ic_preset = IcPreset::Constant(1.0);
        let traj = run_scenario(&cfg, None).unwrap();
        let fit = fit_decay(&traj.times, &plant_norms(&traj), (1.0, 2.0)).unwrap();
        assert!((fit.rate / TARGET_DECAY_RATE - 1.0).abs() < 0.01, "{}", fit.rate);
    }

    #[test]
    fn modal_oracle_values() {
        assert!((modal_rate_oracle(0.0, 0.0).unwrap() + 2.4674).abs() < 1e-4);
        assert!((modal_rate_oracle(20.0, 10.0).unwrap() - 11.6747).abs() < 1e-4);
        assert!((modal_rate_oracle(1.0, 1.0).unwrap() + 1.4674).abs() < 1e-4);
        assert!(matches!(modal_rate_oracle(-1.0, 2.0), Err(Error::ComplexSpectrum(_))));
    }

    #[test]
    fn reciprocity_cases() {
        let k = control_kernel(0.0, 0.0, 32, 1e-12).unwrap();
        let l = inverse_kernel(0.0, 0.0, 32, 1e-12).unwrap();
        assert_eq!(reciprocity_residual(&k, &l).unwrap(), 0.0);

        let k = control_kernel(20.0, 0.0, 64, 1e-12).unwrap();
        let l = inverse_kernel(20.0, 0.0, 64, 1e-12).unwrap();
        assert!(reciprocity_residual(&k, &l).unwrap() <= 1e-8);

        let r = |n| {
            let k = control_kernel(20.0, 10.0, n, 1e-12).unwrap();
            let l = inverse_kernel(20.0, 10.0, n, 1e-12).unwrap();
            reciprocity_residual(&k, &l).unwrap()
        };
        let (coarse, fine) = (r(64), r(128));
        assert!(coarse / fine >= 3.5, "{coarse} {fine}");

        let l = inverse_kernel(20.0, 10.0, 32, 1e-12).unwrap();
        assert!(matches!(reciprocity_residual(&k, &l), Err(Error::GridMismatch(_))));
        assert!(matches!(reciprocity_residual(&l, &l), Err(Error::FamilyMismatch { .. })));
    }

    #[test]
    fn pde_residual_cases() {
        let zero = solve_family(KernelFamily::Control, 0.0, 0.0, 32, 1e-12).unwrap();
        assert_eq!(kernel_pde_residual(&zero), 0.0);
        let lin = control_kernel(20.0, 0.0, 64, 1e-12).unwrap();
        assert!(kernel_pde_residual(&lin) <= 1e-10 * 64.0 * 64.0);
        for family in KernelFamily::ALL {
            let a = kernel_pde_residual(&solve_family(family, 20.0, 10.0, 64, 1e-12).unwrap());
            let b = kernel_pde_residual(&solve_family(family, 20.0, 10.0, 128, 1e-12).unwrap());
            assert!(a / b >= 3.5, "{family:?}: {a} {b}");
        }
    }

    #[test]
    fn diagonal_and_smoothness_measures() {
        let kf = control_kernel(20.0, 10.0, 64, 1e-12).unwrap();
        assert!(diagonal_error(&kf) <= 1e-12);
        let coarse = max_second_difference(&kf);
        let fine = max_second_difference(&control_kernel(20.0, 10.0, 128, 1e-12).unwrap());
        assert!(fine < 1.5 * coarse);
        assert!(kernel_sup_norm(&kf) >= 10.0);
    }

    fn anti_output_feedback(l1: f64, l2: f64, plant: IcPreset, obs: IcPreset) -> SimConfig {
        let mut cfg = SimConfig::new(l1, l2, Scenario::OutputFeedbackAntiCollocated);
        cfg.nx = 64;
        cfg.dt = 1e-3;
        cfg.t_final = 1.0;
        cfg.record_every = 20;
        cfg.ic_preset = plant;
        cfg.observer_ic_preset = obs;
        cfg
    }

    #[test]
    fn lyapunov_zero_state() {
        let ks = KernelSet::solve(20.0, 10.0, 64).unwrap();
        let gains = ks.gains(ObserverSetup::AntiCollocated).unwrap();
        let zero = IcPreset::Constant(0.0);
        let traj = run_scenario(&anti_output_feedback(20.0, 10.0, zero, zero), Some(&gains)).unwrap();
        let rep = lyapunov_monitor(&traj, &ks.control, &ks.anticollocated, &gains).unwrap();
        assert!(rep.v.iter().all(|&v| v == 0.0));
        assert!(rep.bound_ok);
        assert!(rep.c >= 0.0 && rep.d >= 0.0);
        assert_eq!(rep.a, 2.0 * (rep.c * rep.c + rep.d * rep.d));
    }

    #[test]
    fn lyapunov_heat_case() {
        let ks = KernelSet::solve(0.0, 0.0, 64).unwrap();
        let gains = ks.gains(ObserverSetup::AntiCollocated).unwrap();
        let cfg = anti_output_feedback(
            0.0,
            0.0,
            IcPreset::CosHalfPi(1.0),
            IcPreset::Bump {
                center: 0.5,
                width: 0.3,
                amplitude: 1.0,
            },
        );
        let traj = run_scenario(&cfg, Some(&gains)).unwrap();
        let rep = lyapunov_monitor(&traj, &ks.control, &ks.anticollocated, &gains).unwrap();
        assert!(rep.q1.iter().chain(&rep.q2).all(|&q| q == 0.0));
        assert_eq!((rep.c, rep.d, rep.a), (0.0, 0.0, 0.0));
        let err = traj.errors().unwrap();
        for ((v, w_hat), e) in rep.v.iter().zip(traj.observer.as_ref().unwrap()).zip(&err) {
            let want = 0.5 * (l2_norm(w_hat).powi(2) + l2_norm(&FieldPair {
                u: vec![0.0; e.u.len()],
                v: e.v.clone(),
            })
            .powi(2));
            assert!((v - want).abs() <= 1e-12 * (1.0 + want));
        }
        assert!(rep.bound_ok);
        assert!(rep.max_increase <= 1e-10);
    }

    #[test]
    fn lyapunov_needs_the_anticollocated_loop() {
        let ks = KernelSet::solve(1.0, 1.0, 32).unwrap();
        let gains = ks.gains(ObserverSetup::AntiCollocated).unwrap();
        let mut cfg = anti_output_feedback(1.0, 1.0, IcPreset::Constant(1.0), IcPreset::Constant(0.0));
        cfg.scenario = Scenario::StateFeedback;
        cfg.nx = 32;
        cfg.t_final = 0.05;
        cfg.record_every = 10;
        let traj = run_scenario(&cfg, Some(&gains)).unwrap();
        assert!(matches!(
            lyapunov_monitor(&traj, &ks.control, &ks.anticollocated, &gains),
            Err(Error::WrongScenario)
        ));
    }
}
