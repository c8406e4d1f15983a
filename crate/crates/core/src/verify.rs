//! The verification suite behind the `verify` command.

use std::thread;

use crate::analysis::{
    diagonal_error, error_norms, fit_decay, kernel_pde_residual, l2_norm, lyapunov_monitor,
    max_second_difference, modal_rate_oracle, plant_norms, reciprocity_residual, TARGET_DECAY_RATE,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::goursat::{solve_pair, KernelProblem, SideCondition};
use crate::kernels::{control_kernel, inverse_kernel, solve_family, KernelFamily, KernelSet, ObserverSetup};
use crate::sim::{
    apply_transform, feedback_control, run_scenario, run_with_control, FieldPair, IcPreset, Scenario,
    SimConfig, TransformDirection,
};

/// One verification outcome. `pass` compares `value` against `bound`
/// in the direction the check defines.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value, bound, value <= bound)
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value, bound, value >= bound)
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// Plain-text rendering, one line per check.
pub fn render(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "{} {:width$}  value {:>12.5e}  bound {:>12.5e}\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.bound,
        ));
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    s.push_str(&format!("{} checks, {failed} failed\n", checks.len()));
    s
}

/// `max_k (ln|ΔJᵏ⁺¹| − ln(Mᵏ⁺¹ 2ᵏ / k!))`; non-positive when the bound holds.
pub fn factorial_bound_margin(history: &[f64], m: f64) -> f64 {
    let mut ln_fact = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for (k, &inc) in history.iter().enumerate() {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        if inc > 0.0 {
            let bound = (k as f64 + 1.0) * m.ln() + k as f64 * 2f64.ln() - ln_fact;
            worst = worst.max(inc.ln() - bound);
        }
    }
    worst
}

/// Resolution at which the reciprocity residual is held to `1e-3`; the
/// refinement ratio uses half of it.
pub const RECIPROCITY_N: usize = 512;

fn relative(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn sim_base(cfg: &RunConfig, scenario: Scenario) -> SimConfig {
    let mut s = cfg.sim.clone();
    s.scenario = scenario;
    s
}

fn kernel_checks(cfg: &RunConfig) -> Result<Vec<Check>> {
    let (l1, l2) = (cfg.sim.lambda1, cfg.sim.lambda2);
    let n = cfg.n;
    let half = (n / 2).max(crate::goursat::MIN_RESOLUTION);
    let mut out = Vec::new();

    let problem = KernelProblem::new(l2 / 4.0, l1 / 4.0, 0.0, -l1 / 4.0, SideCondition::ReflectionNeumann, n)
        .with_tol(cfg.tol);
    let sol = solve_pair(&problem)?;
    out.push(Check::at_most(
        "kernel.factorial_bound_log_margin",
        factorial_bound_margin(&sol.increment_history, problem.bound_constant()),
        0.0,
    ));
    out.push(Check::at_most("kernel.iterations", sol.iterations_used as f64, 60.0));

    for family in KernelFamily::ALL {
        let fine = solve_family(family, l1, l2, n, cfg.tol)?;
        let coarse = solve_family(family, l1, l2, half, cfg.tol)?;
        out.push(Check::at_most(format!("kernel.diagonal.{}", family.name()), diagonal_error(&fine), 1e-12));
        let (rc, rf) = (kernel_pde_residual(&coarse), kernel_pde_residual(&fine));
        out.push(if rf == 0.0 {
            Check::at_most(format!("kernel.pde_residual.{}", family.name()), rf, 0.0)
        } else {
            Check::at_least(format!("kernel.pde_refinement.{}", family.name()), rc / rf, 3.5)
        });
        if family == KernelFamily::ObserverAntiCollocated {
            let edge = fine
                .components()
                .iter()
                .flat_map(|g| g.last_row().iter().map(|v| v.abs()))
                .fold(0.0, f64::max);
            out.push(Check::at_most("kernel.anticollocated_far_edge", edge, 1e-12));
        }
        if family == KernelFamily::Control {
            let (sc, sf) = (max_second_difference(&coarse), max_second_difference(&fine));
            out.push(Check::at_most("kernel.second_difference_growth", sf / sc.max(f64::MIN_POSITIVE), 1.5));
        }
    }

    let recip = |m: usize| -> Result<f64> {
        reciprocity_residual(&control_kernel(l1, l2, m, cfg.tol)?, &inverse_kernel(l1, l2, m, cfg.tol)?)
    };
    let (rc, rf) = (recip(RECIPROCITY_N / 2)?, recip(RECIPROCITY_N)?);
    out.push(Check::at_most("kernel.reciprocity", rf, 1e-3));
    if rf > 1e-12 {
        out.push(Check::at_least("kernel.reciprocity_refinement", rc / rf, 3.5));
    }
    Ok(out)
}

fn heat_error(nx: usize, dt: f64) -> Result<f64> {
    let mut cfg = SimConfig::new(0.0, 0.0, Scenario::OpenLoop);
    cfg.nx = nx;
    cfg.dt = dt;
    cfg.t_final = 0.5;
    cfg.record_every = cfg.steps();
    let traj = run_scenario(&cfg, None)?;
    let decay = (-TARGET_DECAY_RATE * 0.5).exp();
    let exact = FieldPair::from_fn(nx, |x| {
        let c = decay * (std::f64::consts::FRAC_PI_2 * x).cos();
        [c, c]
    });
    Ok(l2_norm(&traj.plant.last().unwrap().sub(&exact)) / l2_norm(&exact))
}

fn simulation_checks(cfg: &RunConfig, kernels: &KernelSet) -> Result<Vec<Check>> {
    let (l1, l2) = (cfg.sim.lambda1, cfg.sim.lambda2);
    let mut out = Vec::new();

    let (coarse, fine) = (heat_error(50, 2e-3)?, heat_error(100, 1e-3)?);
    out.push(Check::at_least("sim.scheme_order", coarse / fine, 3.5));

    if let Ok(oracle) = modal_rate_oracle(l1, l2) {
        let mut s = sim_base(cfg, Scenario::OpenLoop);
        s.t_final = 1.0;
        let traj = run_scenario(&s, None)?;
        let fit = fit_decay(&traj.times, &plant_norms(&traj), (0.5, 1.0))?;
        out.push(Check::at_most("sim.open_loop_rate_rel_error", relative(-fit.rate, oracle), 0.03));
    }

    let gains = kernels.gains(ObserverSetup::AntiCollocated)?;
    let s = sim_base(cfg, Scenario::StateFeedback);
    let traj = run_scenario(&s, Some(&gains))?;
    let window = (0.5 * s.t_final, s.t_final);
    let fit = fit_decay(&traj.times, &plant_norms(&traj), window)?;
    out.push(Check::at_most(
        "sim.state_feedback_rate_rel_error",
        relative(fit.rate, TARGET_DECAY_RATE),
        0.10,
    ));
    let k_nx = kernels.control.resample(s.nx);
    let mut gamma_end: f64 = 0.0;
    for w in traj.plant.iter().skip(1) {
        let g = apply_transform(w, &k_nx, TransformDirection::Forward, false)?;
        let norm = l2_norm(&g);
        if norm > 0.0 {
            gamma_end = gamma_end.max(g.u[s.nx].hypot(g.v[s.nx]) / norm);
        }
    }
    out.push(Check::at_most("sim.target_boundary_ratio", gamma_end, 5e-3));
    let row = gains.resample(s.nx).feedback_row;
    let consistency = traj
        .plant
        .iter()
        .zip(&traj.controls)
        .map(|(w, u)| {
            let q = feedback_control(&row, w);
            (q[0] - u[0]).abs().max((q[1] - u[1]).abs())
        })
        .fold(0.0, f64::max);
    out.push(Check::at_most("sim.control_consistency", consistency, 1e-12));

    for setup in [ObserverSetup::AntiCollocated, ObserverSetup::Collocated] {
        let gains = kernels.gains(setup)?;
        let mut s = sim_base(cfg, Scenario::ObserverOnly(setup));
        if s.observer_ic_preset == s.ic_preset {
            s.observer_ic_preset = IcPreset::Constant(0.0);
        }
        let traj = run_scenario(&s, Some(&gains))?;
        let errs = error_norms(&traj).ok_or(Error::WrongScenario)?;
        let fit = fit_decay(&traj.times, &errs, (0.5 * s.t_final, s.t_final))?;
        out.push(Check::at_most(
            format!("sim.observer_rate_rel_error.{}", setup.name()),
            relative(fit.rate, TARGET_DECAY_RATE),
            0.10,
        ));

        let row = gains.resample(s.nx).feedback_row;
        let mut short = s.clone();
        short.t_final = s.t_final.min(0.5);
        let a = run_with_control(&short, Some(&gains), |i| feedback_control(&row, i.plant))?;
        let b = run_with_control(&short, Some(&gains), |i| {
            let u = feedback_control(&row, i.plant);
            [u[0] + (5.0 * i.t).sin(), u[1] + 0.5]
        })?;
        let ea = a.errors().ok_or(Error::WrongScenario)?;
        let eb = b.errors().ok_or(Error::WrongScenario)?;
        let diff = ea.iter().zip(&eb).map(|(x, y)| l2_norm(&x.sub(y))).fold(0.0, f64::max);
        out.push(Check::at_most(format!("sim.error_autonomy.{}", setup.name()), diff, 1e-10));

        let scenario = match setup {
            ObserverSetup::AntiCollocated => Scenario::OutputFeedbackAntiCollocated,
            ObserverSetup::Collocated => Scenario::OutputFeedbackCollocated,
        };
        let mut s = sim_base(cfg, scenario);
        s.t_final = 3.0;
        if s.observer_ic_preset == s.ic_preset {
            s.observer_ic_preset = IcPreset::Constant(0.0);
        }
        let traj = run_scenario(&s, Some(&gains))?;
        let total: Vec<f64> = plant_norms(&traj)
            .iter()
            .zip(error_norms(&traj).ok_or(Error::WrongScenario)?)
            .map(|(w, e)| w + e)
            .collect();
        out.push(Check::at_most(
            format!("sim.output_feedback_ratio.{}", setup.name()),
            total.last().copied().unwrap_or(f64::NAN) / total[0],
            1e-4,
        ));

        if setup == ObserverSetup::AntiCollocated {
            let rep = lyapunov_monitor(&traj, &kernels.control, &kernels.anticollocated, &gains)?;
            let v0 = rep.v[0];
            let worst = rep
                .times
                .iter()
                .zip(&rep.v)
                .map(|(t, v)| if v0 > 0.0 { v / (v0 * (-t / 4.0).exp()) } else { 0.0 })
                .fold(0.0, f64::max);
            out.push(Check::at_most("analysis.lyapunov_ratio", worst, 1.0 + crate::analysis::LYAPUNOV_FIT_TOL));
        }
    }
    Ok(out)
}

/// Runs the full suite for the plant in `cfg`. Kernel and simulation groups
/// run on separate threads; the result is sorted by check name.
pub fn run_verification(cfg: &RunConfig) -> Result<Vec<Check>> {
    cfg.sim.validate()?;
    let kernels = KernelSet::solve_with_tol(cfg.sim.lambda1, cfg.sim.lambda2, cfg.n, cfg.tol)?;
    let (a, b) = thread::scope(|s| {
        let k = s.spawn(|| kernel_checks(cfg));
        let sim = simulation_checks(cfg, &kernels);
        (k.join().expect("kernel checks panicked"), sim)
    });
    let mut checks = a?;
    checks.extend(b?);
    checks.sort_by(|x, y| x.name.cmp(&y.name));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_of_exact_bound_is_zero() {
        let m: f64 = 3.0;
        let hist: Vec<f64> = (0..6)
            .map(|k| m.powi(k + 1) * 2f64.powi(k) / (1..=k).product::<i32>().max(1) as f64)
            .collect();
        assert!(factorial_bound_margin(&hist, m).abs() < 1e-12);
        assert_eq!(factorial_bound_margin(&[0.0], m), f64::NEG_INFINITY);
    }

    #[test]
    fn render_counts_failures() {
        let text = render(&[Check::at_most("x", 1.0, 2.0), Check::at_least("y", 1.0, 2.0)]);
        assert!(text.contains("PASS x"));
        assert!(text.contains("FAIL y"));
        assert!(text.ends_with("2 checks, 1 failed\n"));
    }

    #[test]
    fn small_suite_is_sorted_and_complete() {
        let mut sim = SimConfig::new(4.0, 2.0, Scenario::StateFeedback);
        sim.nx = 40;
        sim.dt = 2e-3;
        sim.record_every = 10;
        let cfg = RunConfig {
            sim,
            n: 32,
            tol: 1e-12,
        };
        let checks = run_verification(&cfg).unwrap();
        let names: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        for want in ["kernel.reciprocity", "sim.scheme_order", "analysis.lyapunov_ratio"] {
            assert!(names.contains(&want), "{want}");
        }
        let get = |n: &str| checks.iter().find(|c| c.name == n).unwrap();
        assert!(get("kernel.diagonal.control").pass);
        assert!(get("sim.control_consistency").pass);
        assert!(get("sim.scheme_order").pass);
    }
}
