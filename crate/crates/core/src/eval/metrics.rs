//! Scalar error metrics between a predicted and a reference blank state.

use crate::error::{Error, Result};
use crate::fe::geom::{norm, sub, V3};

/// Threshold on reference thinning below which elements are ignored by the
/// thresholded thinning error.
pub const DEFAULT_TAU: f64 = 0.005;

/// Stabiliser in the relative-thinning denominator.
pub const REL_EPS: f64 = 1e-6;

fn check_lengths(op: &'static str, pred: usize, reference: usize) -> Result<()> {
    if pred != reference {
        return Err(Error::shape(op, format!("{pred} predicted vs {reference} reference")));
    }
    Ok(())
}

/// Mean over nodes of the per-node Euclidean distance.
pub fn e_pos(pred: &[V3], reference: &[V3]) -> Result<f64> {
    check_lengths("e_pos", pred.len(), reference.len())?;
    if pred.is_empty() {
        return Err(Error::Parameter("e_pos needs at least one node".to_string()));
    }
    let sum: f64 = pred.iter().zip(reference).map(|(p, r)| norm(sub(*p, *r))).sum();
    Ok(sum / pred.len() as f64)
}

/// Mean over all node-direction entries of the absolute component error.
pub fn e_mae(pred: &[V3], reference: &[V3]) -> Result<f64> {
    check_lengths("e_mae", pred.len(), reference.len())?;
    if pred.is_empty() {
        return Err(Error::Parameter("e_mae needs at least one node".to_string()));
    }
    let sum: f64 = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (0..3).map(|c| (p[c] - r[c]).abs()).sum::<f64>())
        .sum();
    Ok(sum / (3 * pred.len()) as f64)
}

/// Mean absolute thinning error over elements whose reference thinning
/// exceeds `tau` in magnitude. Returns `None` when no element qualifies:
/// the metric is not applicable there, never zero.
pub fn thinning_threshold_error(pred: &[f64], reference: &[f64], tau: f64) -> Result<Option<f64>> {
    check_lengths("thinning_threshold_error", pred.len(), reference.len())?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, r) in pred.iter().zip(reference) {
        if r.abs() > tau {
            sum += (p - r).abs();
            count += 1;
        }
    }
    Ok(if count == 0 { None } else { Some(sum / count as f64) })
}

/// Indices of the `ceil(p% * len)` largest values (at least one), sorted by
/// descending value with ties resolved toward the lower index.
pub fn top_p_set(values: &[f64], p: f64) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(Error::Parameter("top-p selection over zero elements".to_string()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Parameter(format!("percentage {p} outside [0, 100]")));
    }
    let count = ((p / 100.0 * values.len() as f64).ceil() as usize).max(1);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    order.truncate(count);
    Ok(order)
}

fn centroid(points: &[V3], set: &[usize]) -> V3 {
    let mut c = [0.0; 3];
    for &i in set {
        for k in 0..3 {
            c[k] += points[i][k];
        }
    }
    let n = set.len() as f64;
    [c[0] / n, c[1] / n, c[2] / n]
}

/// Distance between the centres of mass of the most-thinned regions.
///
/// The predicted set is selected on predicted thinning and averaged over
/// predicted element centres; the reference set likewise on reference data.
pub fn com_distance(
    pred_thinning: &[f64],
    pred_centers: &[V3],
    ref_thinning: &[f64],
    ref_centers: &[V3],
    p: f64,
) -> Result<f64> {
    check_lengths("com_distance", pred_thinning.len(), ref_thinning.len())?;
    check_lengths("com_distance", pred_centers.len(), ref_centers.len())?;
    check_lengths("com_distance", pred_thinning.len(), pred_centers.len())?;
    let pred_set = top_p_set(pred_thinning, p)?;
    let ref_set = top_p_set(ref_thinning, p)?;
    Ok(norm(sub(centroid(pred_centers, &pred_set), centroid(ref_centers, &ref_set))))
}

/// Mean relative thinning error, in percent, over the reference top-`p`%
/// most-thinned elements.
pub fn relative_thinning_error(
    pred: &[f64],
    reference: &[f64],
    p: f64,
    eps: f64,
) -> Result<f64> {
    check_lengths("relative_thinning_error", pred.len(), reference.len())?;
    let set = top_p_set(reference, p)?;
    let sum: f64 =
        set.iter().map(|&i| (pred[i] - reference[i]).abs() / (reference[i].abs() + eps)).sum();
    Ok(100.0 * sum / set.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn positional_error_matches_hand_norms() {
        let reference = vec![[0.0, 0.0, 0.0]];
        let pred = vec![[1.0, 2.0, 2.0]];
        assert_eq!(e_pos(&pred, &reference).unwrap(), 3.0);

        let reference = vec![[0.0; 3], [0.0; 3]];
        let pred = vec![[3.0, 0.0, 0.0], [0.0, 4.0, 0.0]];
        assert_eq!(e_pos(&pred, &reference).unwrap(), 3.5);
        assert_eq!(e_pos(&reference, &reference).unwrap(), 0.0);
    }

    #[test]
    fn component_error_matches_hand_mean() {
        let reference = vec![[0.0, 0.0, 0.0]];
        let pred = vec![[1.0, 2.0, 2.0]];
        assert_abs_diff_eq!(e_mae(&pred, &reference).unwrap(), 5.0 / 3.0, epsilon = 1e-15);
        assert_eq!(e_mae(&reference, &reference).unwrap(), 0.0);
    }

    #[test]
    fn euclidean_error_dominates_component_error_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let field = |rng: &mut ChaCha8Rng| -> Vec<V3> {
                (0..n)
                    .map(|_| std::array::from_fn(|_| rng.random::<f64>() * 4.0 - 2.0))
                    .collect()
            };
            let pred = field(&mut rng);
            let reference = field(&mut rng);
            let pos = e_pos(&pred, &reference).unwrap();
            let mae = e_mae(&pred, &reference).unwrap();
            assert!(pos >= mae - 1e-15, "e_pos {pos} < e_mae {mae}");
        }
    }

    #[test]
    fn threshold_filter_matches_hand_case() {
        let reference = [0.01, 0.001];
        let pred = [0.02, 0.5];
        let got = thinning_threshold_error(&pred, &reference, 0.005).unwrap();
        assert_abs_diff_eq!(got.unwrap(), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn empty_threshold_set_is_not_applicable() {
        let reference = [0.004, -0.001];
        let pred = [0.5, 0.5];
        assert_eq!(thinning_threshold_error(&pred, &reference, 0.005).unwrap(), None);
    }

    #[test]
    fn perfect_prediction_is_zero_when_applicable() {
        let reference = [0.1, 0.2, 0.0];
        let got = thinning_threshold_error(&reference, &reference, 0.005).unwrap();
        assert_eq!(got, Some(0.0));
    }

    #[test]
    fn top_set_is_deterministic_under_ties() {
        // Values 0.5 at indices 1, 3, 4: lower indices win.
        let v = [0.1, 0.5, 0.2, 0.5, 0.5];
        assert_eq!(top_p_set(&v, 40.0).unwrap(), vec![1, 3]);
        assert_eq!(top_p_set(&v, 60.0).unwrap(), vec![1, 3, 4]);
        // Minimum of one element even for tiny percentages.
        assert_eq!(top_p_set(&v, 0.0).unwrap(), vec![1]);
    }

    #[test]
    fn com_distance_sees_pure_translation() {
        let theta = [0.3, 0.2, 0.1, 0.05];
        let centers: Vec<V3> =
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        let moved: Vec<V3> = centers.iter().map(|c| [c[0] + 1.0, c[1], c[2]]).collect();
        // Same thinning ranking on both sides, geometry offset by (1,0,0).
        let d = com_distance(&theta, &moved, &theta, &centers, 50.0).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-15);
        assert_eq!(com_distance(&theta, &centers, &theta, &centers, 50.0).unwrap(), 0.0);
    }

    #[test]
    fn com_distance_matches_hand_selection() {
        // Top-50% of four elements: two highest per side. Predicted picks
        // elements 0 and 3, reference picks 1 and 2.
        let pred_theta = [0.9, 0.1, 0.2, 0.8];
        let ref_theta = [0.1, 0.9, 0.8, 0.2];
        let centers: Vec<V3> =
            vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [2.0, 2.0, 0.0]];
        // Predicted COM = mean of centers 0 and 3 = (1,1,0); reference COM =
        // mean of centers 1 and 2 = (1,1,0): distance 0 despite different
        // sets.
        let d = com_distance(&pred_theta, &centers, &ref_theta, &centers, 50.0).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-15);
        // Top-25% picks single elements 0 vs 1: distance 2.
        let d = com_distance(&pred_theta, &centers, &ref_theta, &centers, 25.0).unwrap();
        assert_abs_diff_eq!(d, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn relative_error_matches_hand_ratio() {
        let reference = [0.10];
        let pred = [0.09];
        let got = relative_thinning_error(&pred, &reference, 5.0, REL_EPS).unwrap();
        assert_abs_diff_eq!(got, 10.0, epsilon = 1e-3);
        assert_eq!(relative_thinning_error(&reference, &reference, 5.0, REL_EPS).unwrap(), 0.0);
    }

    #[test]
    fn relative_error_is_linear_in_the_deviation() {
        let reference = [0.2, 0.15, 0.08, 0.01];
        let pred1: Vec<f64> = reference.iter().map(|r| r + 0.01).collect();
        let pred2: Vec<f64> = reference.iter().map(|r| r + 0.02).collect();
        let e1 = relative_thinning_error(&pred1, &reference, 50.0, REL_EPS).unwrap();
        let e2 = relative_thinning_error(&pred2, &reference, 50.0, REL_EPS).unwrap();
        assert_abs_diff_eq!(e2, 2.0 * e1, epsilon = 1e-9);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(e_pos(&[[0.0; 3]], &[]).is_err());
        assert!(thinning_threshold_error(&[0.0], &[0.0, 1.0], 0.5).is_err());
        assert!(relative_thinning_error(&[0.0], &[0.0, 1.0], 5.0, REL_EPS).is_err());
    }
}
