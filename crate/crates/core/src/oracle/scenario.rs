use std::f64::consts::PI;

use rand::Rng as _;

use super::{cfl_number, godunov_step, greenshields_speed, StepBoundary};
use crate::dataio::GridField;
use crate::error::{Error, Result};
use crate::math::Matrix;

/// Initial density `rho_0(x)` in veh/m; `x` is the cell-center position as a
/// fraction of the road length.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    Uniform(f64),
    Sinusoid { mean: f64, amplitude: f64, waves: f64 },
    /// `left` upstream of `split` (fraction of length), `right` downstream.
    Riemann { left: f64, right: f64, split: f64 },
    /// Gaussian bump on a base density.
    Bump { base: f64, peak: f64, center: f64, width: f64 },
}

impl InitialProfile {
    fn scaled(&self, k: f64) -> Self {
        match *self {
            InitialProfile::Uniform(r) => InitialProfile::Uniform(k * r),
            InitialProfile::Sinusoid { mean, amplitude, waves } => InitialProfile::Sinusoid {
                mean: k * mean,
                amplitude: k * amplitude,
                waves,
            },
            InitialProfile::Riemann { left, right, split } => InitialProfile::Riemann {
                left: k * left,
                right: k * right,
                split,
            },
            InitialProfile::Bump { base, peak, center, width } => InitialProfile::Bump {
                base: k * base,
                peak: k * peak,
                center,
                width,
            },
        }
    }

    pub fn density(&self, s: f64) -> f64 {
        match *self {
            InitialProfile::Uniform(r) => r,
            InitialProfile::Sinusoid {
                mean,
                amplitude,
                waves,
            } => mean + amplitude * (2.0 * PI * waves * s).sin(),
            InitialProfile::Riemann { left, right, split } => {
                if s < split {
                    left
                } else {
                    right
                }
            }
            InitialProfile::Bump {
                base,
                peak,
                center,
                width,
            } => base + (peak - base) * (-0.5 * ((s - center) / width).powi(2)).exp(),
        }
    }
}

/// Ghost-cell density over time (seconds), veh/m.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeProfile {
    Constant(f64),
    /// `peak` on `[start, end)`, `base` elsewhere.
    Pulse { base: f64, peak: f64, start: f64, end: f64 },
    Sinusoid { mean: f64, amplitude: f64, period: f64 },
}

impl TimeProfile {
    fn scaled(&self, k: f64) -> Self {
        match *self {
            TimeProfile::Constant(r) => TimeProfile::Constant(k * r),
            TimeProfile::Pulse { base, peak, start, end } => TimeProfile::Pulse {
                base: k * base,
                peak: k * peak,
                start,
                end,
            },
            TimeProfile::Sinusoid { mean, amplitude, period } => TimeProfile::Sinusoid {
                mean: k * mean,
                amplitude: k * amplitude,
                period,
            },
        }
    }

    pub fn density(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant(r) => r,
            TimeProfile::Pulse {
                base,
                peak,
                start,
                end,
            } => {
                if (start..end).contains(&t) {
                    peak
                } else {
                    base
                }
            }
            TimeProfile::Sinusoid {
                mean,
                amplitude,
                period,
            } => mean + amplitude * (2.0 * PI * t / period).sin(),
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            TimeProfile::Constant(r) => (r, r),
            TimeProfile::Pulse { base, peak, .. } => (base.min(peak), base.max(peak)),
            TimeProfile::Sinusoid {
                mean, amplitude, ..
            } => (mean - amplitude.abs(), mean + amplitude.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    Periodic,
    /// Prescribed ghost densities upstream and downstream.
    Open {
        upstream: TimeProfile,
        downstream: TimeProfile,
    },
}

/// A road segment, its initial and boundary data, and the output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LwrScenario {
    /// Road length in meters.
    pub length: f64,
    /// Number of cells `M`.
    pub cells: usize,
    /// Number of recorded time columns `T`; column `j` is the state at `j * output_dt`.
    pub steps: usize,
    /// Recording interval in seconds.
    pub output_dt: f64,
    /// Upper bound on `v_f dt / dx` for the internal sub-steps.
    pub cfl: f64,
    pub v_f: f64,
    pub rho_m: f64,
    pub initial: InitialProfile,
    pub boundary: Boundary,
}

/// Result of [`LwrScenario::simulate`].
#[derive(Debug, Clone)]
pub struct Simulation {
    pub speed: GridField,
    pub density: GridField,
    /// Total vehicles (`sum rho dx`) at every recorded column.
    pub mass: Vec<f64>,
    /// Largest relative change of total mass over any single sub-step.
    pub max_step_mass_drift: f64,
    pub substeps_per_output: usize,
}

impl Default for LwrScenario {
    /// 21 cells of 30 m by 600 columns of 1.5 s. A downstream bottleneck
    /// between 150 s and 400 s sends a queue upstream, which then discharges;
    /// the upstream demand oscillates slowly.
    fn default() -> Self {
        let v_f = 19.965;
        let rho_m = 0.12;
        Self {
            length: 630.0,
            cells: 21,
            steps: 600,
            output_dt: 1.5,
            cfl: 0.9,
            v_f,
            rho_m,
            initial: InitialProfile::Uniform(0.25 * rho_m),
            boundary: Boundary::Open {
                upstream: TimeProfile::Sinusoid {
                    mean: 0.25 * rho_m,
                    amplitude: 0.1 * rho_m,
                    period: 600.0,
                },
                downstream: TimeProfile::Pulse {
                    base: 0.2 * rho_m,
                    peak: 0.8 * rho_m,
                    start: 150.0,
                    end: 400.0,
                },
            },
        }
    }
}

impl LwrScenario {
    /// The default road with a bottleneck and inflow drawn from `seed`.
    pub fn randomized(seed: u64) -> Self {
        let mut rng = crate::rng::substream(seed, crate::rng::Stream::Scenario, 0);
        let mut sc = Self::default();
        let rho_m = sc.rho_m;
        let start = rng.random_range(60.0..300.0);
        sc.initial = InitialProfile::Uniform(rng.random_range(0.15..0.35) * rho_m);
        sc.boundary = Boundary::Open {
            upstream: TimeProfile::Sinusoid {
                mean: rng.random_range(0.15..0.35) * rho_m,
                amplitude: rng.random_range(0.0..0.12) * rho_m,
                period: rng.random_range(300.0..900.0),
            },
            downstream: TimeProfile::Pulse {
                base: rng.random_range(0.1..0.3) * rho_m,
                peak: rng.random_range(0.6..0.9) * rho_m,
                start,
                end: start + rng.random_range(100.0..350.0),
            },
        };
        sc
    }

    /// Same scenario with every density rescaled to a new jam density.
    pub fn with_jam_density(mut self, rho_m: f64) -> Self {
        let k = rho_m / self.rho_m;
        self.rho_m = rho_m;
        self.initial = self.initial.scaled(k);
        if let Boundary::Open { upstream, downstream } = &mut self.boundary {
            *upstream = upstream.scaled(k);
            *downstream = downstream.scaled(k);
        }
        self
    }

    pub fn dx(&self) -> f64 {
        self.length / self.cells as f64
    }

    /// Time of the last recorded column.
    pub fn horizon(&self) -> f64 {
        (self.steps.max(1) - 1) as f64 * self.output_dt
    }

    pub fn substeps(&self) -> usize {
        (cfl_number(self.output_dt, self.dx(), self.v_f) / self.cfl).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("output_dt", self.output_dt),
            ("cfl", self.cfl),
            ("v_f", self.v_f),
            ("rho_m", self.rho_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.cfl > 1.0 {
            return Err(Error::Cfl(format!("target CFL {} > 1", self.cfl)));
        }
        if self.cells == 0 || self.steps == 0 {
            return Err(Error::InvalidArgument("cells and steps must be positive".into()));
        }
        let in_range = |r: f64| (0.0..=self.rho_m).contains(&r);
        for i in 0..self.cells {
            let r = self.initial.density((i as f64 + 0.5) / self.cells as f64);
            if !in_range(r) {
                return Err(Error::Domain(format!(
                    "initial density {r} in cell {i} outside [0, {}]",
                    self.rho_m
                )));
            }
        }
        if let Boundary::Open {
            upstream,
            downstream,
        } = &self.boundary
        {
            for (name, p) in [("upstream", upstream), ("downstream", downstream)] {
                let (lo, hi) = p.bounds();
                if !in_range(lo) || !in_range(hi) {
                    return Err(Error::Domain(format!(
                        "{name} boundary density range [{lo}, {hi}] outside [0, {}]",
                        self.rho_m
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn initial_density(&self) -> Vec<f64> {
        (0..self.cells)
            .map(|i| self.initial.density((i as f64 + 0.5) / self.cells as f64))
            .collect()
    }

    /// Time-marches the scenario and records density and speed every
    /// `output_dt` seconds.
    pub fn simulate(&self) -> Result<Simulation> {
        self.validate()?;
        let dx = self.dx();
        let substeps = self.substeps();
        let dt = self.output_dt / substeps as f64;

        let mut rho = self.initial_density();
        let mut density = Matrix::zeros(self.cells, self.steps);
        let mut mass = Vec::with_capacity(self.steps);
        let mut max_drift: f64 = 0.0;
        let total = |r: &[f64]| r.iter().sum::<f64>() * dx;

        let mut time = 0.0;
        for col in 0..self.steps {
            if col > 0 {
                for s in 0..substeps {
                    let t_now = (col - 1) as f64 * self.output_dt + s as f64 * dt;
                    let bc = match &self.boundary {
                        Boundary::Periodic => StepBoundary::Periodic,
                        Boundary::Open {
                            upstream,
                            downstream,
                        } => StepBoundary::Ghost {
                            upstream: upstream.density(t_now),
                            downstream: downstream.density(t_now),
                        },
                    };
                    let before = total(&rho);
                    rho = godunov_step(&rho, dt, dx, self.v_f, self.rho_m, bc)?;
                    let after = total(&rho);
                    if before > 0.0 {
                        max_drift = max_drift.max((after - before).abs() / before);
                    }
                }
                time = col as f64 * self.output_dt;
            }
            if let Some(k) = rho.iter().position(|r| !r.is_finite()) {
                return Err(Error::NonFinite(format!("density in cell {k} at t={time}")));
            }
            for (i, &r) in rho.iter().enumerate() {
                density.set(i, col, r);
            }
            mass.push(total(&rho));
        }

        let speed = density.map(|r| greenshields_speed(r, self.v_f, self.rho_m));
        let mut density_field = GridField::new(density, dx, self.output_dt)?;
        let mut speed_field = GridField::new(speed, dx, self.output_dt)?;
        // Cell centers.
        density_field.x0 = 0.5 * dx;
        speed_field.x0 = 0.5 * dx;
        Ok(Simulation {
            speed: speed_field,
            density: density_field,
            mass,
            max_step_mass_drift: if matches!(self.boundary, Boundary::Periodic) {
                max_drift
            } else {
                f64::NAN
            },
            substeps_per_output: substeps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const VF: f64 = 20.0;
    const RM: f64 = 0.12;

    fn riemann(left: f64, right: f64, cells: usize, steps: usize) -> LwrScenario {
        LwrScenario {
            length: 4000.0,
            cells,
            steps,
            output_dt: 1.0,
            cfl: 0.9,
            v_f: VF,
            rho_m: RM,
            initial: InitialProfile::Riemann {
                left,
                right,
                split: 0.5,
            },
            boundary: Boundary::Open {
                upstream: TimeProfile::Constant(left),
                downstream: TimeProfile::Constant(right),
            },
        }
    }

    /// Self-similar Greenshields rarefaction, density at `xi = x / t`.
    fn rarefaction(xi: f64, left: f64, right: f64) -> f64 {
        let c = |r: f64| VF * (1.0 - 2.0 * r / RM);
        if xi <= c(left) {
            left
        } else if xi >= c(right) {
            right
        } else {
            0.5 * RM * (1.0 - xi / VF)
        }
    }

    #[test]
    fn default_scenario_shape() {
        let sc = LwrScenario::default();
        assert_eq!(sc.dx(), 30.0);
        assert!(cfl_number(sc.output_dt / sc.substeps() as f64, sc.dx(), sc.v_f) <= 0.9);
        let sim = sc.simulate().unwrap();
        assert_eq!(sim.speed.values.shape(), (21, 600));
        assert_eq!(sim.speed.dt, 1.5);
        assert!(sim.speed.values.min() >= 0.0 && sim.speed.values.max() <= sc.v_f);
    }

    #[test]
    fn empty_road_is_free_flow() {
        let sc = LwrScenario {
            initial: InitialProfile::Uniform(0.0),
            boundary: Boundary::Periodic,
            ..LwrScenario::default()
        };
        let sim = sc.simulate().unwrap();
        assert!(sim.speed.values.as_slice().iter().all(|&v| v == sc.v_f));
    }

    #[test]
    fn periodic_mass_conservation_and_maximum_principle() {
        let sc = LwrScenario {
            initial: InitialProfile::Sinusoid {
                mean: 0.5 * RM,
                amplitude: 0.35 * RM,
                waves: 2.0,
            },
            boundary: Boundary::Periodic,
            v_f: VF,
            rho_m: RM,
            ..LwrScenario::default()
        };
        let rho0 = sc.initial_density();
        let (lo, hi) = rho0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
        let sim = sc.simulate().unwrap();
        assert!(sim.max_step_mass_drift < 1e-12, "{}", sim.max_step_mass_drift);
        for m in &sim.mass {
            assert!((m - sim.mass[0]).abs() / sim.mass[0] < 1e-12);
        }
        for &r in sim.density.values.as_slice() {
            assert!(r >= lo - 1e-15 && r <= hi + 1e-15);
        }
    }

    #[test]
    fn speed_is_greenshields_of_density() {
        let sim = LwrScenario::default().simulate().unwrap();
        for (v, r) in sim.speed.values.as_slice().iter().zip(sim.density.values.as_slice()) {
            assert_eq!(*v, 19.965 * (1.0 - r / 0.12));
        }
    }

    #[test]
    fn rarefaction_matches_self_similar_solution() {
        let (left, right) = (0.9 * RM, 0.1 * RM);
        let sc = riemann(left, right, 400, 61);
        let sim = sc.simulate().unwrap();
        let tau = sc.horizon();
        let dx = sc.dx();
        let (mut err, mut norm) = (0.0, 0.0);
        for i in 0..sc.cells {
            let x = (i as f64 + 0.5) * dx - 0.5 * sc.length;
            let exact = rarefaction(x / tau, left, right);
            err += (sim.density.values.get(i, sc.steps - 1) - exact).abs() * dx;
            norm += exact * dx;
        }
        assert!(err / norm < 0.02, "relative L1 error {}", err / norm);
    }

    fn front_position(profile: &[f64], dx: f64, left: f64, right: f64) -> f64 {
        let mid = 0.5 * (left + right);
        for i in 1..profile.len() {
            let (a, b) = (profile[i - 1] - mid, profile[i] - mid);
            if a.signum() != b.signum() || b == 0.0 {
                let frac = a / (a - b);
                return (i as f64 - 0.5 + frac) * dx;
            }
        }
        f64::NAN
    }

    #[test]
    fn shocks_travel_at_rankine_hugoniot_speed() {
        for (left, right) in [(0.2 * RM, 0.8 * RM), (0.2 * RM, 0.6 * RM), (0.05 * RM, 0.55 * RM)] {
            let sc = riemann(left, right, 400, 201);
            let sim = sc.simulate().unwrap();
            let q = |r: f64| VF * r * (1.0 - r / RM);
            let s = (q(right) - q(left)) / (right - left);
            let exact = 0.5 * sc.length + s * sc.horizon();
            let profile = sim.density.values.column(sc.steps - 1);
            let got = front_position(&profile, sc.dx(), left, right);
            assert!((got - exact).abs() <= sc.dx(), "front {got} vs {exact} (s={s})");
        }
    }

    #[test]
    fn dense_sinusoid_waves_travel_upstream() {
        // rho > rho_m / 2 everywhere: characteristic speed v_f (1 - 2 rho / rho_m) < 0.
        let sc = LwrScenario {
            length: 3000.0,
            cells: 300,
            steps: 11,
            output_dt: 1.0,
            initial: InitialProfile::Sinusoid {
                mean: 0.75 * RM,
                amplitude: 0.05 * RM,
                waves: 1.0,
            },
            boundary: Boundary::Periodic,
            v_f: VF,
            rho_m: RM,
            cfl: 0.9,
        };
        let sim = sc.simulate().unwrap();
        let argmax = |col: usize| {
            let c = sim.density.values.column(col);
            (0..c.len()).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap()
        };
        assert!(argmax(10) < argmax(0), "{} -> {}", argmax(0), argmax(10));
    }

    #[test]
    fn invalid_scenarios() {
        let bad = LwrScenario {
            initial: InitialProfile::Uniform(0.2),
            ..LwrScenario::default()
        };
        assert!(matches!(bad.simulate(), Err(Error::Domain(_))));
        let bad = LwrScenario {
            cfl: 1.5,
            ..LwrScenario::default()
        };
        assert!(bad.simulate().is_err());
    }

    #[test]
    fn randomized_scenarios_are_seeded_and_valid() {
        let a = LwrScenario::randomized(3);
        assert_eq!(a, LwrScenario::randomized(3));
        assert_ne!(a, LwrScenario::randomized(4));
        for seed in 0..20 {
            LwrScenario::randomized(seed).validate().unwrap();
        }
    }

    #[test]
    fn jam_density_rescaling_preserves_relative_speed() {
        let base = LwrScenario::default();
        let scaled = base.clone().with_jam_density(0.2);
        let a = base.simulate().unwrap().speed;
        let b = scaled.simulate().unwrap().speed;
        for (x, y) in a.values.as_slice().iter().zip(b.values.as_slice()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}
