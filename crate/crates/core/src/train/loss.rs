//! The two-term training loss on standardised outputs.

use crate::error::Result;
use crate::nn::{Mat, Scalar, Tape, Var};

/// Tape nodes of the loss decomposition; read values off the tape after the
/// forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    /// Mean squared error over all node-direction entries.
    pub disp: Var,
    /// Mean squared error over all element entries.
    pub thin: Var,
    /// Unweighted sum of the two terms.
    pub total: Var,
}

/// Builds the loss `L = L_disp + L_thin` between standardised predictions
/// (tape nodes) and standardised targets (constants).
pub fn loss_terms<F: Scalar>(
    tape: &mut Tape<F>,
    pred_node: Var,
    target_node: &Mat<F>,
    pred_elem: Var,
    target_elem: &Mat<F>,
) -> Result<LossTerms> {
    let tn = tape.constant(target_node.clone())?;
    let te = tape.constant(target_elem.clone())?;
    let dn = tape.sub(pred_node, tn)?;
    let de = tape.sub(pred_elem, te)?;
    let disp = tape.mean_sq(dn)?;
    let thin = tape.mean_sq(de)?;
    let total = tape.add(disp, thin)?;
    Ok(LossTerms { disp, thin, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eval(pred_n: Mat<f64>, tgt_n: Mat<f64>, pred_e: Mat<f64>, tgt_e: Mat<f64>) -> [f64; 3] {
        let mut tape = Tape::new();
        let pn = tape.constant(pred_n).unwrap();
        let pe = tape.constant(pred_e).unwrap();
        let terms = loss_terms(&mut tape, pn, &tgt_n, pe, &tgt_e).unwrap();
        [
            tape.value(terms.disp).get(0, 0),
            tape.value(terms.thin).get(0, 0),
            tape.value(terms.total).get(0, 0),
        ]
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let n = Mat::from_rows(&[vec![0.3, -0.2, 0.5]]).unwrap();
        let e = Mat::from_rows(&[vec![0.7], vec![-0.1]]).unwrap();
        assert_eq!(eval(n.clone(), n, e.clone(), e), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_component_errors_give_unit_displacement_loss() {
        // One node off by (1, 1, 1): mean of three unit squares is 1.
        let pred = Mat::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let tgt = Mat::zeros(1, 3);
        let e = Mat::zeros(2, 1);
        let [disp, thin, total] = eval(pred, tgt, e.clone(), e);
        assert_eq!(disp, 1.0);
        assert_eq!(thin, 0.0);
        assert_eq!(total, 1.0);
    }

    #[test]
    fn random_tensors_match_a_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut random = |rows: usize, cols: usize| {
            let mut m = Mat::zeros(rows, cols);
            for x in m.data_mut() {
                *x = rng.random::<f64>() * 2.0 - 1.0;
            }
            m
        };
        let (pn, tn) = (random(7, 3), random(7, 3));
        let (pe, te) = (random(5, 1), random(5, 1));

        let mut disp = 0.0;
        for i in 0..21 {
            let d = pn.data()[i] - tn.data()[i];
            disp += d * d;
        }
        disp /= 21.0;
        let mut thin = 0.0;
        for i in 0..5 {
            let d = pe.data()[i] - te.data()[i];
            thin += d * d;
        }
        thin /= 5.0;

        let got = eval(pn, tn, pe, te);
        assert_abs_diff_eq!(got[0], disp, epsilon = 1e-7);
        assert_abs_diff_eq!(got[1], thin, epsilon = 1e-7);
        assert_abs_diff_eq!(got[2], disp + thin, epsilon = 1e-7);
    }

    #[test]
    fn loss_gradient_flows_to_predictions() {
        let mut tape = Tape::new();
        let mut params = crate::nn::ParamSet::new();
        params.insert("p", Mat::from_rows(&[vec![0.5, -0.5, 0.25]]).unwrap()).unwrap();
        let p = tape.bind(&params, "p").unwrap();
        let tgt_n = Mat::zeros(1, 3);
        let e = Mat::zeros(1, 1);
        let pe = tape.constant(e.clone()).unwrap();
        let terms = loss_terms(&mut tape, p, &tgt_n, pe, &e).unwrap();
        let grads = tape.backward(terms.total).unwrap();
        let g = &params.gather_grads(&tape, &grads)[0];
        // d/dp mean(p^2) = 2p/3 per entry.
        let g = g.as_ref().unwrap();
        assert_abs_diff_eq!(g.get(0, 0), 2.0 * 0.5 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.get(0, 1), -2.0 * 0.5 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.get(0, 2), 2.0 * 0.25 / 3.0, epsilon = 1e-12);
    }
}
