//! Autoregressive behavior model and the ground-truth simulator.
//!
//! One step of the model is `b_t = I * C * b_{t-1} - alpha * b_{t-1}`, applied
//! independently to each channel column of the agents x channels frame.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    default_agent_labels, BehaviorFrame, BehaviorSeries, ContextMatrix, DynamicsParams,
};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Uniform process noise on `[-amplitude, amplitude]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub seed: u64,
}

/// Position of a dataset in the 81 x 5 ground-truth grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatasetId {
    pub matrix_index: usize,
    pub noise_index: usize,
}

impl DatasetId {
    pub fn label(&self) -> String {
        format!("m{:02}_a{}", self.matrix_index, self.noise_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpec {
    pub id: DatasetId,
    pub matrix: ContextMatrix,
    pub noise: NoiseSpec,
    pub length: usize,
    pub params: DynamicsParams,
    pub init_seed: u64,
    #[serde(default = "one")]
    pub channels: usize,
}

fn one() -> usize {
    1
}

impl GroundTruthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::TooShort {
                what: "simulated series",
                needed: 2,
                got: self.length,
            });
        }
        if !(self.noise.amplitude >= 0.0 && self.noise.amplitude.is_finite()) {
            return Err(Error::Config(format!(
                "noise amplitude must be finite and >= 0, got {}",
                self.noise.amplitude
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("simulation needs at least one channel".into()));
        }
        self.params.validate()
    }
}

pub const NOISE_LEVELS: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];
pub const ENTRY_VALUES: [f64; 3] = [-1.0, 0.0, 1.0];
pub const GRID_MATRICES: usize = 81;
pub const FULL_LENGTH: usize = 500;

/// Matrix `index` (0..81) of the ground-truth grid. Entries `(c11, c12, c21,
/// c22)` are the base-3 digits of the index, most significant first, mapped
/// through `0 -> -1, 1 -> 0, 2 -> 1`. Index 40 is the zero matrix.
pub fn grid_matrix(index: usize) -> Result<ContextMatrix> {
    if index >= GRID_MATRICES {
        return Err(Error::Config(format!("grid matrix index {index} out of 0..81")));
    }
    let entries = (0..4)
        .map(|pos| ENTRY_VALUES[(index / 3usize.pow(3 - pos)) % 3])
        .collect();
    ContextMatrix::new(2, entries)
}

/// Ground-truth spec for one grid cell. Seeds come from `base_seed` and the
/// cell coordinates so a cell is reproducible regardless of which subset of
/// the grid is being run.
pub fn grid_spec(
    matrix_index: usize,
    noise_index: usize,
    base_seed: u64,
    params: DynamicsParams,
    length: usize,
) -> Result<GroundTruthSpec> {
    let amplitude = *NOISE_LEVELS
        .get(noise_index)
        .ok_or_else(|| Error::Config(format!("noise index {noise_index} out of 0..5")))?;
    let coords = [matrix_index as u64, noise_index as u64];
    Ok(GroundTruthSpec {
        id: DatasetId {
            matrix_index,
            noise_index,
        },
        matrix: grid_matrix(matrix_index)?,
        noise: NoiseSpec {
            amplitude,
            seed: rng::derive_seed(base_seed, &[tag::SIM_NOISE, coords[0], coords[1]]),
        },
        length,
        params,
        init_seed: rng::derive_seed(base_seed, &[tag::SIM_INIT, coords[0], coords[1]]),
        channels: 1,
    })
}

/// The full 81 matrices x 5 noise levels grid, T = 500, simulation dynamics.
pub fn ground_truth_grid() -> Vec<GroundTruthSpec> {
    ground_truth_grid_with(0, DynamicsParams::SIMULATION, FULL_LENGTH)
}

pub fn ground_truth_grid_with(base_seed: u64, params: DynamicsParams, length: usize) -> Vec<GroundTruthSpec> {
    (0..GRID_MATRICES)
        .flat_map(|m| (0..NOISE_LEVELS.len()).map(move |a| (m, a)))
        .map(|(m, a)| grid_spec(m, a, base_seed, params, length).expect("indices in range"))
        .collect()
}

/// Matrix indices of the desk-scale preset: every tenth grid matrix, which
/// spans both corners (all -1, all +1) and the zero matrix at index 40.
pub const DESK_MATRICES: [usize; 9] = [0, 10, 20, 30, 40, 50, 60, 70, 80];
/// Noise indices of the desk-scale preset: amplitudes 0.05, 0.15, 0.25.
pub const DESK_NOISE: [usize; 3] = [0, 2, 4];

/// One autoregressive step: `I * C * b_prev - alpha * b_prev`, per channel.
pub fn predict_step(c: &ContextMatrix, b_prev: &BehaviorFrame, params: &DynamicsParams) -> Result<BehaviorFrame> {
    let n = c.order();
    if b_prev.agents() != n {
        return Err(Error::Dimension(format!(
            "matrix of order {n} cannot act on a frame with {} agents",
            b_prev.agents()
        )));
    }
    let mut out = vec![0.0; b_prev.values().len()];
    predict_into(c.entries(), n, b_prev.values(), b_prev.channels(), params, &mut out);
    BehaviorFrame::new_unchecked(n, b_prev.channels(), out)
}

/// Slice-level kernel of [`predict_step`]; `c` is row-major n x n and
/// `prev`/`out` are row-major n x channels.
#[inline]
pub(crate) fn predict_into(
    c: &[f64],
    n: usize,
    prev: &[f64],
    channels: usize,
    params: &DynamicsParams,
    out: &mut [f64],
) {
    for i in 0..n {
        let row = &c[i * n..(i + 1) * n];
        for h in 0..channels {
            let mut acc = 0.0;
            for (j, cij) in row.iter().enumerate() {
                acc += cij * prev[j * channels + h];
            }
            out[i * channels + h] = params.influence_scale * acc - params.decay * prev[i * channels + h];
        }
    }
}

/// Generate a labelled synthetic series.
///
/// `b_1` is drawn per agent (and channel) from U(0, 1) on the init stream;
/// each later frame is `predict_step(C, b_{t-1}) + eta_t` with `eta_t` drawn
/// from U(-a, a) on a separate stream per agent. With `a = 0` no noise is
/// drawn and the series is exactly the iterated prediction.
pub fn simulate(spec: &GroundTruthSpec) -> Result<BehaviorSeries> {
    spec.validate()?;
    let n = spec.matrix.order();
    let h = spec.channels;

    let mut init = rng::stream(spec.init_seed, &[tag::SIM_INIT]);
    let first: Vec<f64> = (0..n * h).map(|_| init.random::<f64>()).collect();
    let mut noise: Vec<_> = (0..n)
        .map(|agent| rng::stream(spec.noise.seed, &[tag::SIM_NOISE, agent as u64]))
        .collect();

    let a = spec.noise.amplitude;
    let mut frames = Vec::with_capacity(spec.length);
    frames.push(BehaviorFrame::new_unchecked(n, h, first)?);
    for _ in 1..spec.length {
        let mut next = predict_step(&spec.matrix, frames.last().unwrap(), &spec.params)?.values().to_vec();
        if a > 0.0 {
            for (agent, stream) in noise.iter_mut().enumerate() {
                for ch in 0..h {
                    next[agent * h + ch] += stream.random_range(-a..=a);
                }
            }
        }
        frames.push(BehaviorFrame::new_unchecked(n, h, next)?);
    }
    let channels = if h == 1 {
        vec!["b".to_string()]
    } else {
        (1..=h).map(|i| format!("ch{i}")).collect()
    };
    BehaviorSeries::new_unchecked(default_agent_labels(n), channels, frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRAMEWORK: DynamicsParams = DynamicsParams::FRAMEWORK;

    fn col(v: &[f64]) -> BehaviorFrame {
        BehaviorFrame::from_agents(v).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn predict_step_examples() {
        let id = ContextMatrix::identity(2);
        let out = predict_step(&id, &col(&[1.0, 1.0]), &FRAMEWORK).unwrap();
        assert!(close(out.values(), &[-0.4, -0.4]));

        let c = ContextMatrix::new(2, vec![1.0, 0.2, 0.0, 1.0]).unwrap();
        let out = predict_step(&c, &col(&[1.0, 1.0]), &FRAMEWORK).unwrap();
        assert!(close(out.values(), &[-0.3, -0.4]));

        let z = ContextMatrix::zeros(2);
        let out = predict_step(&z, &col(&[0.3, -2.0]), &FRAMEWORK).unwrap();
        assert!(close(out.values(), &[-0.27, 1.8]));
    }

    #[test]
    fn predict_step_shape_mismatch() {
        let r = predict_step(&ContextMatrix::identity(3), &col(&[1.0, 1.0]), &FRAMEWORK);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn predict_step_is_linear() {
        let c = ContextMatrix::new(2, vec![0.7, -0.3, 1.1, 0.2]).unwrap();
        let x = BehaviorFrame::new(2, 2, vec![0.1, 2.0, -0.5, 0.3]).unwrap();
        let y = BehaviorFrame::new(2, 2, vec![1.5, -1.0, 0.25, 0.9]).unwrap();
        let sum = BehaviorFrame::new(2, 2, x.values().iter().zip(y.values()).map(|(a, b)| a + b).collect()).unwrap();
        let p = |f: &BehaviorFrame| predict_step(&c, f, &FRAMEWORK).unwrap().values().to_vec();
        let lhs = p(&sum);
        let rhs: Vec<f64> = p(&x).iter().zip(p(&y)).map(|(a, b)| a + b).collect();
        assert!(close(&lhs, &rhs));
    }

    fn noiseless(matrix: ContextMatrix, params: DynamicsParams, length: usize) -> GroundTruthSpec {
        GroundTruthSpec {
            id: DatasetId {
                matrix_index: 0,
                noise_index: 0,
            },
            matrix,
            noise: NoiseSpec { amplitude: 0.0, seed: 1 },
            length,
            params,
            init_seed: 5,
            channels: 1,
        }
    }

    #[test]
    fn noiseless_decay_from_known_start() {
        let spec = noiseless(ContextMatrix::zeros(2), FRAMEWORK, 2);
        let s = simulate(&spec).unwrap();
        let b1 = s.frame(0).values().to_vec();
        let expect: Vec<f64> = b1.iter().map(|v| -0.9 * v).collect();
        assert_eq!(s.frame(1).values(), expect.as_slice());

        // b1 = (0.5, 0.5) case, evaluated through the same step.
        let out = predict_step(&ContextMatrix::zeros(2), &col(&[0.5, 0.5]), &FRAMEWORK).unwrap();
        assert!(close(out.values(), &[-0.45, -0.45]));
    }

    #[test]
    fn noiseless_series_is_iterated_prediction_bit_for_bit() {
        for idx in [0, 13, 40, 77] {
            let spec = noiseless(grid_matrix(idx).unwrap(), DynamicsParams::SIMULATION, 60);
            let s = simulate(&spec).unwrap();
            let mut prev = s.frame(0).clone();
            for t in 1..s.len() {
                let next = predict_step(&spec.matrix, &prev, &spec.params).unwrap();
                assert_eq!(next.values(), s.frame(t).values());
                prev = next;
            }
        }
    }

    #[test]
    fn initial_values_in_unit_interval() {
        for spec in ground_truth_grid().iter().step_by(7) {
            let s = simulate(spec).unwrap();
            assert!(s.frame(0).values().iter().all(|v| (0.0..1.0).contains(v)));
        }
    }

    #[test]
    fn noise_stays_within_amplitude() {
        let spec = grid_spec(40, 4, 7, DynamicsParams::SIMULATION, 2000).unwrap();
        assert_eq!(spec.noise.amplitude, 0.25);
        let s = simulate(&spec).unwrap();
        for t in 1..s.len() {
            let pred = predict_step(&spec.matrix, s.frame(t - 1), &spec.params).unwrap();
            for (obs, p) in s.frame(t).values().iter().zip(pred.values()) {
                let eta = obs - p;
                assert!(eta.abs() <= 0.25 + 1e-12, "eta = {eta}");
            }
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let spec = grid_spec(17, 2, 99, DynamicsParams::SIMULATION, 300).unwrap();
        assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());
        let other = grid_spec(17, 2, 100, DynamicsParams::SIMULATION, 300).unwrap();
        assert_ne!(simulate(&spec).unwrap(), simulate(&other).unwrap());
    }

    #[test]
    fn multi_channel_simulation_shape() {
        let mut spec = grid_spec(50, 1, 3, DynamicsParams::SIMULATION, 20).unwrap();
        spec.channels = 3;
        let s = simulate(&spec).unwrap();
        assert_eq!((s.n_agents(), s.n_channels(), s.len()), (2, 3, 20));
    }

    #[test]
    fn grid_shape_and_contents() {
        let grid = ground_truth_grid();
        assert_eq!(grid.len(), 405);
        assert!(grid.iter().all(|s| s.length == 500));
        let zeros: Vec<_> = grid.iter().filter(|s| s.matrix == ContextMatrix::zeros(2)).collect();
        assert_eq!(zeros.len(), 5);
        let mut amps: Vec<f64> = zeros.iter().map(|s| s.noise.amplitude).collect();
        amps.sort_by(f64::total_cmp);
        assert_eq!(amps, NOISE_LEVELS.to_vec());
        assert_eq!(grid_matrix(40).unwrap(), ContextMatrix::zeros(2));
        assert_eq!(grid_matrix(0).unwrap().entries(), &[-1.0; 4]);
        assert_eq!(grid_matrix(80).unwrap().entries(), &[1.0; 4]);
        let mut distinct: Vec<Vec<u64>> = (0..81)
            .map(|i| grid_matrix(i).unwrap().entries().iter().map(|v| v.to_bits()).collect())
            .collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 81);
    }

    fn spectral_radius_2x2(m: &[f64]) -> f64 {
        let (a, b, c, d) = (m[0], m[1], m[2], m[3]);
        let tr = a + d;
        let det = a * d - b * c;
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            let r = disc.sqrt();
            (tr / 2.0 + r).abs().max((tr / 2.0 - r).abs())
        } else {
            det.sqrt()
        }
    }

    #[test]
    fn stable_grid_matrices_decay_without_noise() {
        let p = DynamicsParams::SIMULATION;
        let mut checked = 0;
        for idx in 0..GRID_MATRICES {
            let c = grid_matrix(idx).unwrap();
            let a: Vec<f64> = c
                .entries()
                .iter()
                .enumerate()
                .map(|(k, v)| p.influence_scale * v - if k % 3 == 0 { p.decay } else { 0.0 })
                .collect();
            if spectral_radius_2x2(&a) >= 1.0 {
                continue;
            }
            checked += 1;
            let s = simulate(&noiseless(c, p, 500)).unwrap();
            let norm = |t: usize| s.frame(t).values().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm(499) <= norm(0), "matrix {idx} grew");
            assert!(norm(499) < 1e-6, "matrix {idx} did not settle");
        }
        assert!(checked >= 79);
    }
}
