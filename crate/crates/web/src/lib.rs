//! Browser bindings: kernel surfaces, gain curves and closed-loop norms.
//!
//! Every export returns a flat `Float64Array`; the layouts are documented on
//! each function.

use wasm_bindgen::prelude::*;

use parabolic_backstepping::analysis::{error_norms, plant_norms};
use parabolic_backstepping::kernels::{solve_family, KernelFamily, KernelSet, ObserverSetup};
use parabolic_backstepping::sim::{run_scenario, Scenario, SimConfig};

const MAX_N: usize = 256;
const MAX_NX: usize = 200;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn family_from(name: &str) -> Result<KernelFamily, String> {
    KernelFamily::ALL
        .into_iter()
        .find(|f| f.name() == name)
        .ok_or_else(|| format!("unknown kernel family `{name}`"))
}

fn clamp_n(n: usize) -> usize {
    n.clamp(8, MAX_N)
}

/// Component `comp` (0 = uu, 1 = uv, 2 = vu, 3 = vv) of a kernel on the
/// stored triangle, as a dense `(n+1)²` row-major grid in `(x, y)`; entries
/// above the diagonal are NaN.
pub fn surface(lambda1: f64, lambda2: f64, n: usize, family: &str, comp: usize) -> Result<Vec<f64>, String> {
    let family = family_from(family)?;
    let n = clamp_n(n);
    let kf = solve_family(family, lambda1, lambda2, n, 1e-12).map_err(|e| e.to_string())?;
    let grid = kf.components()[comp.min(3)];
    let mut out = vec![f64::NAN; (n + 1) * (n + 1)];
    for (i, j, v) in grid.nodes() {
        out[i * (n + 1) + j] = v;
    }
    Ok(out)
}

/// Rows of `[y, Kuu(1,y), Kuv(1,y), Kvu(1,y), Kvv(1,y), p1_anti, p2_anti, p1_col, p2_col]`.
pub fn gains(lambda1: f64, lambda2: f64, n: usize) -> Result<Vec<f64>, String> {
    let n = clamp_n(n);
    let ks = KernelSet::solve(lambda1, lambda2, n).map_err(|e| e.to_string())?;
    let anti = ks.gains(ObserverSetup::AntiCollocated).map_err(|e| e.to_string())?;
    let col = ks.gains(ObserverSetup::Collocated).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(9 * (n + 1));
    for j in 0..=n {
        let k = anti.feedback_row[j];
        out.extend([
            j as f64 / n as f64,
            k[0][0],
            k[0][1],
            k[1][0],
            k[1][1],
            anti.p1[j],
            anti.p2[j],
            col.p1[j],
            col.p2[j],
        ]);
    }
    Ok(out)
}

/// Rows of `[t, ‖w‖, ‖w̃‖]`; `‖w̃‖` is NaN without an observer.
pub fn norms(
    lambda1: f64,
    lambda2: f64,
    scenario: &str,
    nx: usize,
    t_final: f64,
) -> Result<Vec<f64>, String> {
    let scenario = Scenario::from_name(scenario).ok_or_else(|| format!("unknown scenario `{scenario}`"))?;
    let mut cfg = SimConfig::new(lambda1, lambda2, scenario);
    cfg.nx = nx.clamp(16, MAX_NX);
    cfg.t_final = t_final.clamp(0.01, 5.0);
    cfg.dt = 5e-4;
    cfg.record_every = 10;
    let gains = if scenario.needs_gains() {
        let ks = KernelSet::solve(lambda1, lambda2, cfg.nx).map_err(|e| e.to_string())?;
        Some(
            ks.gains(scenario.observer().unwrap_or(ObserverSetup::AntiCollocated))
                .map_err(|e| e.to_string())?,
        )
    } else {
        None
    };
    let traj = run_scenario(&cfg, gains.as_ref()).map_err(|e| e.to_string())?;
    let w = plant_norms(&traj);
    let e = error_norms(&traj);
    let mut out = Vec::with_capacity(3 * traj.len());
    for (k, t) in traj.times.iter().enumerate() {
        out.extend([*t, w[k], e.as_ref().map_or(f64::NAN, |e| e[k])]);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = kernelSurface)]
pub fn kernel_surface(lambda1: f64, lambda2: f64, n: usize, family: &str, comp: usize) -> Result<Vec<f64>, JsError> {
    surface(lambda1, lambda2, n, family, comp).map_err(js_err)
}

#[wasm_bindgen(js_name = gainCurves)]
pub fn gain_curves(lambda1: f64, lambda2: f64, n: usize) -> Result<Vec<f64>, JsError> {
    gains(lambda1, lambda2, n).map_err(js_err)
}

#[wasm_bindgen(js_name = simulateNorms)]
pub fn simulate_norms(
    lambda1: f64,
    lambda2: f64,
    scenario: &str,
    nx: usize,
    t_final: f64,
) -> Result<Vec<f64>, JsError> {
    norms(lambda1, lambda2, scenario, nx, t_final).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_layout() {
        let s = surface(20.0, 10.0, 16, "control", 1).unwrap();
        assert_eq!(s.len(), 17 * 17);
        assert!((s[16 * 17 + 16] + 10.0).abs() < 1e-12);
        assert!(s[1].is_nan());
        assert!(surface(1.0, 1.0, 16, "nope", 0).is_err());
    }

    #[test]
    fn gain_rows() {
        let g = gains(20.0, 10.0, 16).unwrap();
        assert_eq!(g.len(), 9 * 17);
        let last = &g[9 * 16..];
        assert_eq!(last[0], 1.0);
        assert!((last[2] + 10.0).abs() < 1e-12);
    }

    #[test]
    fn state_feedback_norms_decay() {
        let n = norms(20.0, 10.0, "state_feedback", 40, 2.0).unwrap();
        let rows: Vec<&[f64]> = n.chunks(3).collect();
        assert_eq!(rows[0][0], 0.0);
        assert!(rows.last().unwrap()[1] < 0.1 * rows[0][1]);
        assert!(rows[0][2].is_nan());
        assert!(norms(1.0, 1.0, "nope", 40, 1.0).is_err());
    }
}
