//! First-order Godunov solver for the LWR conservation law with the
//! Greenshields flux `q(rho) = v_f rho (1 - rho / rho_m)`.
//!
//! Used to synthesize ground-truth speed fields. The interface flux is the
//! exact Riemann flux written in demand/supply form,
//! `F(rho_l, rho_r) = min(D(rho_l), S(rho_r))`, which for a concave flux is
//! the minimum of `q` over `[rho_l, rho_r]` when `rho_l <= rho_r` and the
//! maximum otherwise (the critical density `rho_m / 2` is handled by the
//! demand/supply clipping).

mod scenario;

pub use scenario::{Boundary, InitialProfile, LwrScenario, Simulation, TimeProfile};

use crate::error::{Error, Result};

/// Greenshields flow in veh/s.
pub fn greenshields_flux(rho: f64, v_f: f64, rho_m: f64) -> Result<f64> {
    if !(0.0..=rho_m).contains(&rho) {
        return Err(Error::Domain(format!("density {rho} outside [0, {rho_m}]")));
    }
    Ok(flux(rho, v_f, rho_m))
}

#[inline]
fn flux(rho: f64, v_f: f64, rho_m: f64) -> f64 {
    v_f * rho * (1.0 - rho / rho_m)
}

/// Exact Riemann (Godunov) interface flux.
#[inline]
pub fn godunov_flux(rho_l: f64, rho_r: f64, v_f: f64, rho_m: f64) -> f64 {
    let crit = 0.5 * rho_m;
    let demand = flux(rho_l.min(crit), v_f, rho_m);
    let supply = flux(rho_r.max(crit), v_f, rho_m);
    demand.min(supply)
}

/// Greenshields speed for a density.
#[inline]
pub fn greenshields_speed(rho: f64, v_f: f64, rho_m: f64) -> f64 {
    v_f * (1.0 - rho / rho_m)
}

/// Boundary data for a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepBoundary {
    Periodic,
    /// Ghost-cell densities upstream of cell 0 and downstream of the last cell.
    Ghost { upstream: f64, downstream: f64 },
}

pub fn cfl_number(dt: f64, dx: f64, v_f: f64) -> f64 {
    v_f * dt / dx
}

/// One Godunov update of the cell averages.
pub fn godunov_step(
    rho: &[f64],
    dt: f64,
    dx: f64,
    v_f: f64,
    rho_m: f64,
    bc: StepBoundary,
) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dx > 0.0 && v_f > 0.0 && rho_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need positive dt, dx, v_f, rho_m; got {dt}, {dx}, {v_f}, {rho_m}"
        )));
    }
    let cfl = cfl_number(dt, dx, v_f);
    if cfl > 1.0 {
        return Err(Error::Cfl(format!("v_f dt / dx = {cfl:.4} > 1")));
    }
    let n = rho.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (left_ghost, right_ghost) = match bc {
        StepBoundary::Periodic => (rho[n - 1], rho[0]),
        StepBoundary::Ghost {
            upstream,
            downstream,
        } => (upstream, downstream),
    };
    // fluxes[k] is the flux through the left face of cell k; fluxes[n] the right face of the last cell.
    let mut fluxes = Vec::with_capacity(n + 1);
    fluxes.push(godunov_flux(left_ghost, rho[0], v_f, rho_m));
    for k in 1..n {
        fluxes.push(godunov_flux(rho[k - 1], rho[k], v_f, rho_m));
    }
    fluxes.push(match bc {
        StepBoundary::Periodic => fluxes[0],
        StepBoundary::Ghost { .. } => godunov_flux(rho[n - 1], right_ghost, v_f, rho_m),
    });
    let lambda = dt / dx;
    Ok((0..n)
        .map(|k| rho[k] - lambda * (fluxes[k + 1] - fluxes[k]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const VF: f64 = 20.0;
    const RM: f64 = 0.12;

    #[test]
    fn flux_values() {
        assert_eq!(greenshields_flux(0.0, VF, RM).unwrap(), 0.0);
        assert_eq!(greenshields_flux(RM, VF, RM).unwrap(), 0.0);
        assert!((greenshields_flux(RM / 2.0, VF, RM).unwrap() - VF * RM / 4.0).abs() < 1e-15);
        assert!(greenshields_flux(-0.01, VF, RM).is_err());
        assert!(greenshields_flux(RM * 1.01, VF, RM).is_err());
    }

    #[test]
    fn riemann_flux_cases() {
        let q = |r: f64| flux(r, VF, RM);
        // rho_l <= rho_r: min of the endpoints
        assert_eq!(godunov_flux(0.02, 0.1, VF, RM), q(0.1).min(q(0.02)));
        // rho_l > rho_r spanning the critical density: capacity
        assert_eq!(godunov_flux(0.1, 0.02, VF, RM), q(RM / 2.0));
        // rho_l > rho_r, both below critical: max = q(rho_l)
        assert_eq!(godunov_flux(0.05, 0.01, VF, RM), q(0.05));
        // both above critical: max = q(rho_r)
        assert_eq!(godunov_flux(0.11, 0.08, VF, RM), q(0.08));
    }

    #[test]
    fn brute_force_interval_extremum() {
        let q = |r: f64| flux(r, VF, RM);
        for a in 0..=24 {
            for b in 0..=24 {
                let (rl, rr) = (a as f64 * RM / 24.0, b as f64 * RM / 24.0);
                let (lo, hi) = (rl.min(rr), rl.max(rr));
                // Grid samples plus the critical density when it lies inside.
                let crit = [RM / 2.0].into_iter().filter(|c| (lo..=hi).contains(c));
                let samples = (0..=2000)
                    .map(|k| lo + (hi - lo) * k as f64 / 2000.0)
                    .chain(crit)
                    .map(q);
                let expected = if rl <= rr {
                    samples.fold(f64::INFINITY, f64::min)
                } else {
                    samples.fold(f64::NEG_INFINITY, f64::max)
                };
                assert!((godunov_flux(rl, rr, VF, RM) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_state_is_stationary() {
        let rho = vec![0.07; 10];
        let next = godunov_step(&rho, 1.0, 30.0, VF, RM, StepBoundary::Periodic).unwrap();
        assert_eq!(next, rho);
        let ghost = StepBoundary::Ghost {
            upstream: 0.07,
            downstream: 0.07,
        };
        assert_eq!(godunov_step(&rho, 1.0, 30.0, VF, RM, ghost).unwrap(), rho);
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let err = godunov_step(&[0.01; 4], 2.0, 30.0, VF, RM, StepBoundary::Periodic).unwrap_err();
        assert!(matches!(err, Error::Cfl(_)));
    }
}
