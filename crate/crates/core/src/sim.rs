//! Exact stochastic simulation (Gillespie direct method) of bounded
//! discrete-state reaction systems, plus snapshot extraction.
//!
//! Ground-truth generator for the whole pipeline: trajectories are simulated
//! event by event, then downsampled onto a uniform time grid to produce the
//! empirical distributions the models train and evaluate on.
//!
//! Boundary rule: the state space is the box `[0, L-1]^d`; any reaction whose
//! firing would leave the box has its propensity forced to zero. This keeps
//! the state enumerable for exact distribution-level oracles.

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::table::ProbTable;
use rayon::prelude::*;

pub type Propensity = Box<dyn Fn(&[i64]) -> f64 + Send + Sync>;

pub struct Reaction {
    pub name: String,
    pub stoichiometry: Vec<i64>,
    pub propensity: Propensity,
}

pub struct ReactionSystem {
    pub name: String,
    /// Species count.
    pub dim: usize,
    /// States live in `[0, states_per_dim - 1]^dim`.
    pub states_per_dim: usize,
    pub reactions: Vec<Reaction>,
    /// Rate constants, recorded for dataset headers.
    pub rates: Vec<(String, f64)>,
    /// Default initial state for dataset generation.
    pub default_x0: Vec<i64>,
}

impl ReactionSystem {
    pub fn in_bounds(&self, state: &[i64]) -> bool {
        state.iter().all(|&x| x >= 0 && x < self.states_per_dim as i64)
    }

    /// Propensity of reaction `j` at `state`, zeroed if firing would exit the box.
    fn effective_propensity(&self, j: usize, state: &[i64], scratch: &mut [i64]) -> f64 {
        let r = &self.reactions[j];
        let a = (r.propensity)(state);
        if a <= 0.0 {
            return 0.0;
        }
        for ((s, &x), &dx) in scratch.iter_mut().zip(state).zip(&r.stoichiometry) {
            *s = x + dx;
        }
        if self.in_bounds(scratch) {
            a
        } else {
            0.0
        }
    }
}

/// Piecewise-constant jump trajectory: the state holds between events.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    /// Event times, strictly increasing, starting at 0.
    pub times: Vec<f64>,
    /// Row-major states, one row per event time.
    pub states: Vec<i64>,
    pub horizon: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_row(&self, i: usize) -> &[i64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    /// State at time `t` (last event at or before `t`).
    pub fn state_at(&self, t: f64) -> &[i64] {
        let idx = match self.times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        self.state_row(idx)
    }
}

/// Exact SSA run from `x0` to time `horizon`.
///
/// Waiting times are exponential in the total propensity and the firing
/// reaction is chosen proportionally to its propensity. A state where all
/// propensities vanish is absorbing: the trajectory holds it until the horizon.
pub fn gillespie_simulate(
    system: &ReactionSystem,
    x0: &[i64],
    horizon: f64,
    rng: &mut Stream,
) -> Result<Trajectory> {
    if x0.len() != system.dim {
        return Err(Error::Config(format!(
            "initial state has {} species, system {} has {}",
            x0.len(),
            system.name,
            system.dim
        )));
    }
    if !system.in_bounds(x0) {
        return Err(Error::Config(format!("initial state {:?} outside [0, {})", x0, system.states_per_dim)));
    }
    if horizon <= 0.0 {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }

    let mut state = x0.to_vec();
    let mut scratch = vec![0i64; system.dim];
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = x0.to_vec();
    let mut propensities = vec![0.0; system.reactions.len()];

    loop {
        let mut total = 0.0;
        for (j, a) in propensities.iter_mut().enumerate() {
            *a = system.effective_propensity(j, &state, &mut scratch);
            total += *a;
        }
        if total <= 0.0 {
            break; // absorbing state
        }
        t += rng.exponential(total);
        if t >= horizon {
            break;
        }
        let j = rng.categorical(&propensities);
        for (x, &dx) in state.iter_mut().zip(&system.reactions[j].stoichiometry) {
            *x += dx;
        }
        debug_assert!(system.in_bounds(&state));
        times.push(t);
        states.extend_from_slice(&state);
    }

    Ok(Trajectory { dim: system.dim, times, states, horizon })
}

/// Independent trajectories with per-trajectory RNG streams derived from
/// `(seed, index)`; results are identical regardless of thread count.
pub fn simulate_ensemble(
    system: &ReactionSystem,
    x0: &[i64],
    horizon: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::derive(seed, "simulate", i as u64);
            gillespie_simulate(system, x0, horizon, &mut rng)
        })
        .collect()
}

/// Empirical distributions at fixed observation times.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub dim: usize,
    pub states_per_dim: usize,
    pub times: Vec<f64>,
    /// `times.len()` blocks of `samples_per_time` rows, each row `dim` wide.
    pub samples: Vec<i64>,
    pub samples_per_time: usize,
}

impl SnapshotSet {
    pub fn block(&self, time_idx: usize) -> &[i64] {
        let stride = self.samples_per_time * self.dim;
        &self.samples[time_idx * stride..(time_idx + 1) * stride]
    }

    pub fn sample_rows(&self, time_idx: usize) -> impl Iterator<Item = &[i64]> {
        self.block(time_idx).chunks_exact(self.dim)
    }

    /// Samples at one time as f64 rows (for sample-based metrics).
    pub fn block_f64(&self, time_idx: usize) -> Vec<f64> {
        self.block(time_idx).iter().map(|&x| x as f64).collect()
    }
}

/// `count` evenly spaced points covering `[0, horizon]` inclusive.
pub fn uniform_grid(horizon: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.0];
    }
    (0..count).map(|i| horizon * i as f64 / (count - 1) as f64).collect()
}

/// Indices of `n_times` evenly spread entries of a `grid_len`-point grid.
pub fn spread_indices(grid_len: usize, n_times: usize) -> Vec<usize> {
    if n_times == 1 {
        return vec![0];
    }
    (0..n_times)
        .map(|i| ((grid_len - 1) as f64 * i as f64 / (n_times - 1) as f64).round() as usize)
        .collect()
}

/// Downsample trajectories into a snapshot set at the given times.
///
/// Each time draws `samples_per_time` distinct trajectories (a seeded subset
/// when fewer than the full ensemble) and reads their piecewise-constant
/// state at that time.
pub fn make_snapshots(
    trajectories: &[Trajectory],
    times: &[f64],
    samples_per_time: usize,
    seed: u64,
) -> Result<SnapshotSet> {
    if trajectories.is_empty() {
        return Err(Error::Config("no trajectories".into()));
    }
    if trajectories.len() < samples_per_time {
        return Err(Error::Config(format!(
            "need at least {samples_per_time} trajectories for {samples_per_time} samples per time, got {}",
            trajectories.len()
        )));
    }
    let dim = trajectories[0].dim;
    let mut samples = Vec::with_capacity(times.len() * samples_per_time * dim);
    for (ti, &t) in times.iter().enumerate() {
        let chosen: Vec<usize> = if samples_per_time == trajectories.len() {
            (0..trajectories.len()).collect()
        } else {
            let mut rng = Stream::derive(seed, "snapshot", ti as u64);
            rng.choose_indices(trajectories.len(), samples_per_time)
        };
        for idx in chosen {
            samples.extend_from_slice(trajectories[idx].state_at(t));
        }
    }
    // states_per_dim recovered from content bounds; callers that built the
    // trajectories from a ReactionSystem overwrite it with the system's L.
    let states_per_dim = samples.iter().copied().max().unwrap_or(0) as usize + 1;
    Ok(SnapshotSet {
        dim,
        states_per_dim,
        times: times.to_vec(),
        samples,
        samples_per_time,
    })
}

/// Normalized histogram of one snapshot block over `[0, L-1]^d`.
pub fn empirical_joint(snapshot: &SnapshotSet, time_idx: usize, states_per_dim: usize) -> Result<ProbTable> {
    let dims = vec![states_per_dim; snapshot.dim];
    let cells = ProbTable::check_size(&dims)?;
    let mut counts = vec![0.0; cells];
    let mut n = 0usize;
    let mut state = vec![0usize; snapshot.dim];
    for row in snapshot.sample_rows(time_idx) {
        for (s, &x) in state.iter_mut().zip(row) {
            if x < 0 || x >= states_per_dim as i64 {
                return Err(Error::Numeric(format!("sample {x} outside [0, {states_per_dim})")));
            }
            *s = x as usize;
        }
        let mut idx = 0;
        for (&s, &d) in state.iter().zip(&dims) {
            idx = idx * d + s;
        }
        counts[idx] += 1.0;
        n += 1;
    }
    for c in &mut counts {
        *c /= n as f64;
    }
    ProbTable::new(dims, counts)
}

/// Built-in reaction systems with documented default rates.
pub fn builtin_system(name: &str) -> Result<ReactionSystem> {
    match name {
        "birth_death" => Ok(birth_death(5.0, 0.5, 32)),
        "sis_epidemic" => Ok(sis_epidemic(0.3, 0.1, 50)),
        "toggle_switch" => Ok(toggle_switch(12.0, 6.0, 0.6, 32)),
        other => Err(Error::Config(format!(
            "unknown system '{other}'; valid names: birth_death, sis_epidemic, toggle_switch"
        ))),
    }
}

/// Constant birth at rate `k`, death at rate `gamma * x`. Stationary law is
/// Poisson(k/gamma) truncated to the box (detailed balance survives the
/// reflecting truncation).
pub fn birth_death(k: f64, gamma: f64, l: usize) -> ReactionSystem {
    ReactionSystem {
        name: "birth_death".into(),
        dim: 1,
        states_per_dim: l,
        reactions: vec![
            Reaction {
                name: "birth".into(),
                stoichiometry: vec![1],
                propensity: Box::new(move |_| k),
            },
            Reaction {
                name: "death".into(),
                stoichiometry: vec![-1],
                propensity: Box::new(move |x| gamma * x[0] as f64),
            },
        ],
        rates: vec![("k".into(), k), ("gamma".into(), gamma)],
        default_x0: vec![0],
    }
}

/// SIS epidemic in a fixed population: infection at `beta * I * (P-I) / P`,
/// recovery at `gamma * I`. Endemic mean-field fixed point `P * (1 - gamma/beta)`.
pub fn sis_epidemic(beta: f64, gamma: f64, population: usize) -> ReactionSystem {
    let p = population as f64;
    ReactionSystem {
        name: "sis_epidemic".into(),
        dim: 1,
        states_per_dim: population + 1,
        reactions: vec![
            Reaction {
                name: "infection".into(),
                stoichiometry: vec![1],
                propensity: Box::new(move |x| {
                    let i = x[0] as f64;
                    beta * i * (p - i) / p
                }),
            },
            Reaction {
                name: "recovery".into(),
                stoichiometry: vec![-1],
                propensity: Box::new(move |x| gamma * x[0] as f64),
            },
        ],
        rates: vec![("beta".into(), beta), ("gamma".into(), gamma), ("population".into(), p)],
        default_x0: vec![2],
    }
}

/// Symmetric genetic toggle switch: each species is produced under Hill
/// repression by the other (`k * K^2 / (K^2 + y^2)`) and degrades linearly.
/// Bistable: long-run mass concentrates near (k/deg, low) and (low, k/deg).
pub fn toggle_switch(k: f64, k_half: f64, deg: f64, l: usize) -> ReactionSystem {
    let hill = move |other: f64| k * k_half * k_half / (k_half * k_half + other * other);
    ReactionSystem {
        name: "toggle_switch".into(),
        dim: 2,
        states_per_dim: l,
        reactions: vec![
            Reaction {
                name: "produce_x".into(),
                stoichiometry: vec![1, 0],
                propensity: Box::new(move |s| hill(s[1] as f64)),
            },
            Reaction {
                name: "degrade_x".into(),
                stoichiometry: vec![-1, 0],
                propensity: Box::new(move |s| deg * s[0] as f64),
            },
            Reaction {
                name: "produce_y".into(),
                stoichiometry: vec![0, 1],
                propensity: Box::new(move |s| hill(s[0] as f64)),
            },
            Reaction {
                name: "degrade_y".into(),
                stoichiometry: vec![0, -1],
                propensity: Box::new(move |s| deg * s[1] as f64),
            },
        ],
        rates: vec![("k".into(), k), ("K".into(), k_half), ("deg".into(), deg)],
        default_x0: vec![0, 0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorbing_when_all_propensities_zero() {
        let system = ReactionSystem {
            name: "dead".into(),
            dim: 1,
            states_per_dim: 8,
            reactions: vec![Reaction {
                name: "never".into(),
                stoichiometry: vec![1],
                propensity: Box::new(|_| 0.0),
            }],
            rates: vec![],
            default_x0: vec![3],
        };
        let mut rng = Stream::derive(0, "simulate", 0);
        let traj = gillespie_simulate(&system, &[3], 5.0, &mut rng).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.state_at(4.9), &[3]);
    }

    #[test]
    fn pure_decay_reaches_zero_and_stays() {
        let system = ReactionSystem {
            name: "decay".into(),
            dim: 1,
            states_per_dim: 8,
            reactions: vec![Reaction {
                name: "death".into(),
                stoichiometry: vec![-1],
                propensity: Box::new(|x| 1.0 * x[0] as f64),
            }],
            rates: vec![],
            default_x0: vec![5],
        };
        let mut rng = Stream::derive(1, "simulate", 0);
        let traj = gillespie_simulate(&system, &[5], 200.0, &mut rng).unwrap();
        assert_eq!(traj.state_row(traj.len() - 1), &[0]);
        assert_eq!(traj.len(), 6); // exactly five deaths
        assert_eq!(traj.state_at(199.0), &[0]);
    }

    #[test]
    fn same_seed_bit_identical() {
        let system = builtin_system("birth_death").unwrap();
        let a = simulate_ensemble(&system, &[0], 5.0, 4, 42).unwrap();
        let b = simulate_ensemble(&system, &[0], 5.0, 4, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_ensemble(&system, &[0], 5.0, 4, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn states_stay_in_bounds() {
        let system = builtin_system("toggle_switch").unwrap();
        for t in simulate_ensemble(&system, &[0, 0], 20.0, 8, 7).unwrap() {
            for i in 0..t.len() {
                assert!(system.in_bounds(t.state_row(i)));
            }
        }
    }

    #[test]
    fn event_times_strictly_increase() {
        let system = builtin_system("birth_death").unwrap();
        let mut rng = Stream::derive(3, "simulate", 0);
        let traj = gillespie_simulate(&system, &[0], 10.0, &mut rng).unwrap();
        assert!(traj.len() > 5);
        for w in traj.times.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn consecutive_states_differ_by_one_reaction() {
        let system = builtin_system("toggle_switch").unwrap();
        let mut rng = Stream::derive(9, "simulate", 0);
        let traj = gillespie_simulate(&system, &[0, 0], 10.0, &mut rng).unwrap();
        let stoichs: Vec<&[i64]> =
            system.reactions.iter().map(|r| r.stoichiometry.as_slice()).collect();
        for i in 1..traj.len() {
            let diff: Vec<i64> = traj
                .state_row(i)
                .iter()
                .zip(traj.state_row(i - 1))
                .map(|(&a, &b)| a - b)
                .collect();
            assert!(stoichs.contains(&diff.as_slice()), "diff {diff:?}");
        }
    }

    #[test]
    fn unknown_system_lists_valid_names() {
        let err = builtin_system("nope").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("birth_death") && msg.contains("toggle_switch"));
    }

    #[test]
    fn builtin_shapes() {
        let bd = builtin_system("birth_death").unwrap();
        assert_eq!((bd.dim, bd.reactions.len()), (1, 2));
        let ts = builtin_system("toggle_switch").unwrap();
        assert_eq!((ts.dim, ts.reactions.len()), (2, 4));
        let sis = builtin_system("sis_epidemic").unwrap();
        assert_eq!((sis.dim, sis.states_per_dim), (1, 51));
    }

    #[test]
    fn snapshot_shapes_and_degenerate_cases() {
        let system = builtin_system("birth_death").unwrap();
        let trajs = simulate_ensemble(&system, &[0], 10.0, 20, 5).unwrap();
        let grid = uniform_grid(10.0, 100);
        let idx = spread_indices(100, 10);
        assert_eq!(idx, vec![0, 11, 22, 33, 44, 55, 66, 77, 88, 99]);
        let times: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
        let snaps = make_snapshots(&trajs, &times, 20, 5).unwrap();
        assert_eq!(snaps.times.len(), 10);
        assert_eq!(snaps.samples_per_time, 20);
        assert_eq!(snaps.block(3).len(), 20);

        // single time degenerates to t=0
        let one = make_snapshots(&trajs, &uniform_grid(10.0, 1), 20, 5).unwrap();
        assert_eq!(one.times, vec![0.0]);
        assert!(one.block(0).iter().all(|&x| x == 0));

        // more samples than trajectories is an error
        assert!(make_snapshots(&trajs, &times, 21, 5).is_err());
    }

    #[test]
    fn constant_trajectories_give_identical_snapshots() {
        let system = ReactionSystem {
            name: "frozen".into(),
            dim: 1,
            states_per_dim: 8,
            reactions: vec![Reaction {
                name: "never".into(),
                stoichiometry: vec![1],
                propensity: Box::new(|_| 0.0),
            }],
            rates: vec![],
            default_x0: vec![4],
        };
        let trajs = simulate_ensemble(&system, &[4], 10.0, 5, 1).unwrap();
        let snaps = make_snapshots(&trajs, &uniform_grid(10.0, 7), 5, 1).unwrap();
        for ti in 0..7 {
            assert_eq!(snaps.block(ti), snaps.block(0));
        }
    }

    #[test]
    fn empirical_joint_point_masses() {
        let snap = SnapshotSet {
            dim: 1,
            states_per_dim: 4,
            times: vec![0.0],
            samples: vec![2],
            samples_per_time: 1,
        };
        let table = empirical_joint(&snap, 0, 4).unwrap();
        assert_eq!(table.probs(), &[0.0, 0.0, 1.0, 0.0]);

        let snap2 = SnapshotSet {
            dim: 1,
            states_per_dim: 4,
            times: vec![0.0],
            samples: vec![1, 3],
            samples_per_time: 2,
        };
        let table2 = empirical_joint(&snap2, 0, 4).unwrap();
        assert_eq!(table2.probs(), &[0.0, 0.5, 0.0, 0.5]);
        table2.check_normalized(1e-12).unwrap();
    }
}
