//! Scalar losses over a single network and their exact parameter gradients.

use std::ops::Range;

use super::lu::Lu;
use super::{JetTape, MlpNet, NnError};

/// Loss vocabulary on one network: output norms, reconstruction errors and
/// log-determinants of the input-Jacobian block `J = ∂y/∂x_cols`.
#[derive(Debug, Clone, PartialEq)]
pub enum LossTerm {
    /// `‖y‖²`
    SquaredOutput,
    /// `ln|det J|` (requires a square block)
    LogAbsDet,
    /// `‖target − y‖²`
    Reconstruction(Vec<f64>),
    /// `|det J − 1|`
    DetDeviation,
}

/// Value of one term and its adjoints `(∂/∂y, ∂/∂J)`, accumulated with `weight`.
pub(crate) fn term_adjoint(
    term: &LossTerm,
    weight: f64,
    tape: &JetTape,
    y_bar: &mut [f64],
    j_bar: &mut [f64],
) -> Result<f64, NnError> {
    let y = &tape.output;
    match term {
        LossTerm::SquaredOutput => {
            for (b, v) in y_bar.iter_mut().zip(y) {
                *b += weight * 2.0 * v;
            }
            Ok(y.iter().map(|v| v * v).sum())
        }
        LossTerm::Reconstruction(target) => {
            let mut s = 0.0;
            for ((b, v), t) in y_bar.iter_mut().zip(y).zip(target) {
                let r = t - v;
                s += r * r;
                *b -= weight * 2.0 * r;
            }
            Ok(s)
        }
        LossTerm::LogAbsDet | LossTerm::DetDeviation => {
            let k = tape.k;
            if y.len() != k {
                return Err(NnError::Shape(format!("Jacobian block is {} × {k}, not square", y.len())));
            }
            let lu = Lu::new(&tape.jacobian, k);
            if lu.is_degenerate() {
                return Err(NnError::SingularJacobian);
            }
            let inv_t = lu.inverse_transpose();
            if *term == LossTerm::LogAbsDet {
                for (b, v) in j_bar.iter_mut().zip(&inv_t) {
                    *b += weight * v;
                }
                Ok(lu.sign_log_det().1)
            } else {
                let det = lu.det();
                let sg = (det - 1.0).signum() * if det == 1.0 { 0.0 } else { 1.0 };
                for (b, v) in j_bar.iter_mut().zip(&inv_t) {
                    *b += weight * sg * det * v;
                }
                Ok((det - 1.0).abs())
            }
        }
    }
}

/// Batch mean of `Σ weight · term` over `inputs` (row-major, `n_0` wide) and its
/// gradient with respect to every parameter of `net`. `cols` selects the
/// Jacobian block used by determinant terms.
pub fn grad_scalar(
    net: &MlpNet,
    inputs: &[f64],
    cols: Range<usize>,
    terms: &[(f64, LossTerm)],
) -> Result<(f64, Vec<f64>), NnError> {
    let n0 = net.input_dim();
    if inputs.is_empty() || !inputs.len().is_multiple_of(n0) {
        return Err(NnError::Shape(format!("input buffer length {} is not a multiple of {n0}", inputs.len())));
    }
    if cols.end > n0 {
        return Err(NnError::Shape(format!("column block {cols:?} exceeds input width {n0}")));
    }
    let n = inputs.len() / n0;
    let mut grad = vec![0.0; net.num_params()];
    let mut total = 0.0;
    let mut tape = JetTape::default();
    let mut x_bar = vec![0.0; n0];
    for x in inputs.chunks(n0) {
        net.forward_jet_into(x, cols.clone(), &mut tape);
        let mut y_bar = vec![0.0; net.output_dim()];
        let mut j_bar = vec![0.0; tape.jacobian.len()];
        for (w, term) in terms {
            total += w * term_adjoint(term, *w, &tape, &mut y_bar, &mut j_bar)?;
        }
        net.backward_jet(&mut tape, &y_bar, &j_bar, &mut grad, &mut x_bar);
    }
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((total * inv, grad))
}

/// Loss value only, for finite-difference checks.
pub fn loss_value(net: &MlpNet, inputs: &[f64], cols: Range<usize>, terms: &[(f64, LossTerm)]) -> Result<f64, NnError> {
    let n0 = net.input_dim();
    let n = inputs.len() / n0;
    let mut total = 0.0;
    let mut tape = JetTape::default();
    for x in inputs.chunks(n0) {
        net.forward_jet_into(x, cols.clone(), &mut tape);
        let mut y_bar = vec![0.0; net.output_dim()];
        let mut j_bar = vec![0.0; tape.jacobian.len()];
        for (w, term) in terms {
            total += w * term_adjoint(term, *w, &tape, &mut y_bar, &mut j_bar)?;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    /// Central finite differences over every parameter.
    fn fd_grad(net: &MlpNet, inputs: &[f64], cols: Range<usize>, terms: &[(f64, LossTerm)]) -> Vec<f64> {
        let mut probe = net.clone();
        (0..net.num_params())
            .map(|i| {
                let base = net.params()[i];
                let h = 1e-6 * base.abs().max(1.0);
                probe.params_mut()[i] = base + h;
                let up = loss_value(&probe, inputs, cols.clone(), terms).unwrap();
                probe.params_mut()[i] = base - h;
                let dn = loss_value(&probe, inputs, cols.clone(), terms).unwrap();
                probe.params_mut()[i] = base;
                (up - dn) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    /// Fraction of coordinates within 1e-4 and the worst relative error.
    fn compare(an: &[f64], fd: &[f64]) -> (f64, f64) {
        let errs: Vec<f64> = an.iter().zip(fd).map(|(a, b)| rel_err(*a, *b)).collect();
        let good = errs.iter().filter(|&&e| e <= 1e-4).count() as f64 / errs.len() as f64;
        (good, errs.iter().cloned().fold(0.0, f64::max))
    }

    fn random_net(widths: &[usize], seed: u64) -> MlpNet {
        let mut net = MlpNet::init(widths, seed).unwrap();
        let mut r = rng::stream(seed, 1);
        for l in 0..net.layers() {
            for b in net.bias_mut(l) {
                *b = 0.2 * (r.random::<f64>() - 0.5);
            }
        }
        net
    }

    #[test]
    fn gradient_check_across_shapes_and_losses() {
        for (s, widths) in [[2usize, 4, 1], [4, 16, 2], [6, 32, 3]].iter().enumerate() {
            let n0 = widths[0];
            let out = widths[2];
            let net = random_net(widths, 100 + s as u64);
            let mut r = rng::stream(7, s as u64);
            let inputs: Vec<f64> = (0..3 * n0).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            let cols = (n0 - out)..n0;
            let target: Vec<f64> = (0..out).map(|i| 0.3 * i as f64 - 0.1).collect();
            let families: Vec<Vec<(f64, LossTerm)>> = vec![
                vec![(1.0, LossTerm::SquaredOutput)],
                vec![(1.0, LossTerm::LogAbsDet)],
                vec![(1.0, LossTerm::Reconstruction(target.clone()))],
                vec![
                    (0.5, LossTerm::SquaredOutput),
                    (-1.0, LossTerm::LogAbsDet),
                    (3.0, LossTerm::Reconstruction(target.clone())),
                    (3.0, LossTerm::DetDeviation),
                ],
            ];
            for terms in &families {
                let (_, an) = grad_scalar(&net, &inputs, cols.clone(), terms).unwrap();
                let fd = fd_grad(&net, &inputs, cols.clone(), terms);
                let (good, worst) = compare(&an, &fd);
                assert!(good >= 0.99 && worst <= 1e-2, "{widths:?} {terms:?}: good {good} worst {worst}");
            }
        }
    }

    #[test]
    fn squared_output_at_zero_parameters() {
        let net = MlpNet::zeros(&[2, 8, 1]).unwrap();
        let (v, g) = grad_scalar(&net, &[0.3, -0.2, 1.0, 2.0], 0..1, &[(1.0, LossTerm::SquaredOutput)]).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn log_det_gradient_of_linear_layer_is_inverse_transpose() {
        let w = [2.0, 1.0, 0.5, 3.0];
        let net = MlpNet::from_params(&[2, 2], vec![w[0], w[1], w[2], w[3], 0.0, 0.0]).unwrap();
        let (v, g) = grad_scalar(&net, &[0.1, 0.7], 0..2, &[(1.0, LossTerm::LogAbsDet)]).unwrap();
        assert!((v - 5.5f64.ln()).abs() < 1e-14);
        // W^{-T} = [[3, -0.5], [-1, 2]] / 5.5
        let want = [3.0 / 5.5, -0.5 / 5.5, -1.0 / 5.5, 2.0 / 5.5];
        for (a, b) in g[..4].iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        let fd = fd_grad(&net, &[0.1, 0.7], 0..2, &[(1.0, LossTerm::LogAbsDet)]);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn singular_block_is_an_error() {
        let net = MlpNet::zeros(&[2, 2]).unwrap();
        let err = grad_scalar(&net, &[1.0, 1.0], 0..2, &[(1.0, LossTerm::LogAbsDet)]).unwrap_err();
        assert!(matches!(err, NnError::SingularJacobian));
    }
}
