//! Gaussian perturbation of displacement-increment inputs.
//!
//! Teacher forcing feeds ground-truth increments to the network; rollout
//! feeds its own imperfect predictions. Perturbing the increment inputs at
//! train time closes part of that distribution gap. The adaptive variant
//! weights the noise per node by the normalised inverse increment
//! magnitude, so nodes that barely move — where a small absolute error is a
//! large relative one — receive the strongest perturbation.
//!
//! All perturbations act on physical-unit increments before feature
//! standardisation, and only ever on the increment channels.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::graph::BipartiteGraph;
use crate::nn::Mat;
use crate::train::config::{NoiseMode, NOISE_EPS};

/// Summary of one perturbation draw.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    /// Smallest per-node weight in the batch.
    pub gamma_min: f64,
    /// Largest per-node weight; exactly 1 in adaptive mode.
    pub gamma_max: f64,
    pub gamma_mean: f64,
    /// Root-mean-square of the realised perturbation over all entries.
    pub perturbation_rms: f64,
}

/// Scalar standard deviation of an increment field, taken over all
/// node-direction entries of the sample (population convention).
pub fn increment_std(increments: &Mat<f64>) -> f64 {
    let data = increments.data();
    if data.is_empty() {
        return 0.0;
    }
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / data.len() as f64;
    var.sqrt()
}

fn perturb(
    increments: &Mat<f64>,
    weights: &[f64],
    lambda: f64,
    s_du: f64,
    rng: &mut impl Rng,
) -> (Mat<f64>, NoiseReport) {
    let mut out = increments.clone();
    let mut sum_sq = 0.0;
    for n in 0..out.rows() {
        let scale = weights[n] * lambda * s_du;
        for c in 0..3 {
            let eta: f64 = rng.sample(StandardNormal);
            let delta = scale * eta;
            sum_sq += delta * delta;
            let v = out.get(n, c);
            out.set(n, c, v + delta);
        }
    }
    let count = (out.rows() * 3) as f64;
    let report = NoiseReport {
        gamma_min: weights.iter().copied().fold(f64::INFINITY, f64::min),
        gamma_max: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        gamma_mean: weights.iter().sum::<f64>() / weights.len() as f64,
        perturbation_rms: (sum_sq / count).sqrt(),
    };
    (out, report)
}

/// Adds the same-scale Gaussian noise `lambda * s_du * eta` to every
/// increment entry. `lambda = 0` returns the input bit-exactly without
/// consuming randomness.
pub fn uniform_noise(
    increments: &Mat<f64>,
    lambda: f64,
    s_du: f64,
    rng: &mut impl Rng,
) -> (Mat<f64>, NoiseReport) {
    if lambda == 0.0 || increments.rows() == 0 {
        let report = NoiseReport {
            gamma_min: 1.0,
            gamma_max: 1.0,
            gamma_mean: 1.0,
            perturbation_rms: 0.0,
        };
        return (increments.clone(), report);
    }
    let weights = vec![1.0; increments.rows()];
    perturb(increments, &weights, lambda, s_du, rng)
}

/// Adds Gaussian noise weighted per node by the normalised inverse
/// increment magnitude: `gamma_v = 1 / (|du_v| + eps)`, divided by the
/// largest `gamma` so the stillest node gets weight exactly 1. `lambda = 0`
/// returns the input bit-exactly without consuming randomness.
pub fn adaptive_noise(
    increments: &Mat<f64>,
    lambda: f64,
    s_du: f64,
    rng: &mut impl Rng,
) -> (Mat<f64>, NoiseReport) {
    if lambda == 0.0 || increments.rows() == 0 {
        let report = NoiseReport {
            gamma_min: 1.0,
            gamma_max: 1.0,
            gamma_mean: 1.0,
            perturbation_rms: 0.0,
        };
        return (increments.clone(), report);
    }
    let gammas: Vec<f64> = (0..increments.rows())
        .map(|n| {
            let r = increments.row(n);
            let mag = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            1.0 / (mag + NOISE_EPS)
        })
        .collect();
    let max = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = gammas.iter().map(|g| g / max).collect();
    perturb(increments, &weights, lambda, s_du, rng)
}

/// Applies the configured perturbation to the increment channels of a raw
/// (physical-unit) graph, leaving every other feature untouched.
///
/// Returns the possibly perturbed graph and the draw summary; mode
/// [`NoiseMode::None`] is a bit-exact pass-through that never consumes
/// randomness.
pub fn perturb_increments(
    graph: &BipartiteGraph,
    mode: NoiseMode,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<(BipartiteGraph, Option<NoiseReport>)> {
    if mode == NoiseMode::None {
        return Ok((graph.clone(), None));
    }
    let mut increments = Mat::zeros(graph.num_nodes, 3);
    for n in 0..graph.num_nodes {
        increments.row_mut(n).copy_from_slice(&graph.node_feats.row(n)[..3]);
    }
    let s_du = increment_std(&increments);
    let (noisy, report) = match mode {
        NoiseMode::Uniform => uniform_noise(&increments, lambda, s_du, rng),
        NoiseMode::Adaptive => adaptive_noise(&increments, lambda, s_du, rng),
        NoiseMode::None => unreachable!(),
    };
    let mut out = graph.clone();
    for n in 0..graph.num_nodes {
        out.node_feats.row_mut(n)[..3].copy_from_slice(noisy.row(n));
    }
    Ok((out, Some(report)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn field() -> Mat<f64> {
        Mat::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![0.1, -0.2, 0.05],
            vec![1.0, 0.5, -0.3],
            vec![-0.4, 0.0, 0.2],
        ])
        .unwrap()
    }

    #[test]
    fn zero_amplitude_is_bit_exact_and_consumes_no_randomness() {
        let f = field();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let before = rng.clone();
        let (u, _) = uniform_noise(&f, 0.0, 1.0, &mut rng);
        let (a, _) = adaptive_noise(&f, 0.0, 1.0, &mut rng);
        assert_eq!(u.data(), f.data());
        assert_eq!(a.data(), f.data());
        // The stream must be untouched: the next draw matches a clone taken
        // before the calls.
        let mut before = before;
        assert_eq!(rng.random::<u64>(), before.random::<u64>());
    }

    #[test]
    fn stillest_node_gets_unit_weight() {
        let f = field();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, report) = adaptive_noise(&f, 0.01, increment_std(&f), &mut rng);
        assert_eq!(report.gamma_max, 1.0, "max-normalisation must be exact");
        assert!(report.gamma_min > 0.0 && report.gamma_min <= 1.0);
    }

    #[test]
    fn equal_magnitudes_reduce_adaptive_to_uniform() {
        // All rows have |du| = 0.3, so every gamma-bar is exactly 1 and the
        // two modes draw identical perturbations from the same stream.
        let f = Mat::from_rows(&[
            vec![0.3, 0.0, 0.0],
            vec![0.0, -0.3, 0.0],
            vec![0.0, 0.0, 0.3],
        ])
        .unwrap();
        let s = increment_std(&f);
        let (a, ra) = adaptive_noise(&f, 0.02, s, &mut ChaCha8Rng::seed_from_u64(7));
        let (u, ru) = uniform_noise(&f, 0.02, s, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a.data(), u.data());
        assert_eq!(ra, ru);
    }

    #[test]
    fn uniform_rms_matches_amplitude_over_many_draws() {
        // RMS of lambda * s * eta over 10^5 standard-normal draws should be
        // lambda * s within a couple of percent.
        let rows: Vec<Vec<f64>> = (0..33_334).map(|_| vec![0.0, 0.0, 0.0]).collect();
        let f = Mat::from_rows(&rows).unwrap();
        let (lambda, s) = (0.05, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (out, report) = uniform_noise(&f, lambda, s, &mut rng);
        assert_abs_diff_eq!(report.perturbation_rms, lambda * s, epsilon = 0.02 * lambda * s);
        // Zero-mean: the empirical mean over ~1e5 draws of scale 0.1 stays
        // within 3 standard errors.
        let mean = out.data().iter().sum::<f64>() / out.data().len() as f64;
        let tol = 3.0 * lambda * s / (out.data().len() as f64).sqrt();
        assert!(mean.abs() < tol, "mean {mean} exceeds {tol}");
    }

    #[test]
    fn increment_std_matches_hand_value() {
        // Entries (0..6)/10: mean 0.25, population variance 0.029166...
        let f = Mat::from_rows(&[vec![0.0, 0.1, 0.2], vec![0.3, 0.4, 0.5]]).unwrap();
        assert_abs_diff_eq!(increment_std(&f), (0.175f64 / 6.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn only_increment_channels_change_in_a_graph() {
        use crate::fe::simulate;
        use crate::graph::{assemble_graph, ContactConfig};
        use crate::testutil::toy_case;
        let traj = simulate(&toy_case(3, 24.0, 10.0)).unwrap();
        let (graph, _) = assemble_graph(&traj, 4, ContactConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (noisy, report) =
            perturb_increments(&graph, NoiseMode::Adaptive, 0.05, &mut rng).unwrap();
        let report = report.unwrap();
        assert!(report.perturbation_rms > 0.0);

        for n in 0..graph.num_nodes {
            // Boundary flags are untouched even on perturbed rows.
            assert_eq!(noisy.node_feats.row(n)[3..], graph.node_feats.row(n)[3..]);
        }
        assert_ne!(noisy.node_feats.data(), graph.node_feats.data());
        for b in 0..graph.contact_feats.len() {
            assert_eq!(noisy.contact_feats[b].data(), graph.contact_feats[b].data());
        }
        assert_eq!(noisy.elem_feats.data(), graph.elem_feats.data());
        assert_eq!(noisy.edge_feats.data(), graph.edge_feats.data());
        assert_eq!(noisy.global_feats.data(), graph.global_feats.data());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (same, none) = perturb_increments(&graph, NoiseMode::None, 0.05, &mut rng).unwrap();
        assert!(none.is_none());
        assert_eq!(same.node_feats.data(), graph.node_feats.data());
    }
}
