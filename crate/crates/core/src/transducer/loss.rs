use crate::error::{Error, Result};
use crate::logmath::{log_add, log_softmax_backward, LOG_ZERO};
use crate::matrix::JointLattice;
use crate::seq::TokenSeq;
use crate::vocab::Vocab;

fn check_inputs(lattice: &JointLattice, w: &TokenSeq, vocab: &Vocab) -> Result<()> {
    if lattice.cols() != vocab.len() {
        return Err(Error::usage(format!(
            "lattice has {} columns but the vocabulary has {} entries",
            lattice.cols(),
            vocab.len()
        )));
    }
    if lattice.u_rows() != w.len() + 1 {
        return Err(Error::usage(format!(
            "lattice has {} label rows, target needs {}",
            lattice.u_rows(),
            w.len() + 1
        )));
    }
    if !lattice.is_normalized() {
        return Err(Error::usage(
            "transducer loss expects a node-normalized lattice",
        ));
    }
    for &id in w.ids() {
        if id >= vocab.len() || id == vocab.blank_id() {
            return Err(Error::usage(format!("invalid target id {id}")));
        }
    }
    Ok(())
}

/// Forward variables: `alpha[t][u]` is the log-mass of reaching node `(t, u)`
/// having emitted `w[..u]`, before anything is emitted at that node.
fn forward(lattice: &JointLattice, w: &TokenSeq, blank: usize) -> Vec<f64> {
    let (frames, urows) = (lattice.frames(), lattice.u_rows());
    let mut alpha = vec![LOG_ZERO; frames * urows];
    for t in 0..frames {
        for u in 0..urows {
            let acc = if t == 0 && u == 0 {
                0.0
            } else {
                let mut acc = LOG_ZERO;
                if t > 0 {
                    acc = log_add(
                        acc,
                        alpha[(t - 1) * urows + u] + lattice.get(t - 1, u, blank),
                    );
                }
                if u > 0 {
                    acc = log_add(
                        acc,
                        alpha[t * urows + u - 1] + lattice.get(t, u - 1, w.ids()[u - 1]),
                    );
                }
                acc
            };
            alpha[t * urows + u] = acc;
        }
    }
    alpha
}

/// Backward variables: `beta[t][u]` is the log-mass of completing the path
/// from node `(t, u)`, terminal blank included.
fn backward(lattice: &JointLattice, w: &TokenSeq, blank: usize) -> Vec<f64> {
    let (frames, urows) = (lattice.frames(), lattice.u_rows());
    let mut beta = vec![LOG_ZERO; frames * urows];
    for t in (0..frames).rev() {
        for u in (0..urows).rev() {
            let acc = if t == frames - 1 && u == urows - 1 {
                lattice.get(t, u, blank)
            } else {
                let mut acc = LOG_ZERO;
                if t + 1 < frames {
                    acc = log_add(acc, lattice.get(t, u, blank) + beta[(t + 1) * urows + u]);
                }
                if u + 1 < urows {
                    acc = log_add(acc, lattice.get(t, u, w.ids()[u]) + beta[t * urows + u + 1]);
                }
                acc
            };
            beta[t * urows + u] = acc;
        }
    }
    beta
}

/// Negative log of the total mass of monotone lattice paths from `(0, 0)`
/// that emit `w` in order and leave the last frame through blank at
/// `(T-1, N)`.
pub fn rnnt_loss(lattice: &JointLattice, w: &TokenSeq, vocab: &Vocab) -> Result<f64> {
    check_inputs(lattice, w, vocab)?;
    let blank = vocab.blank_id();
    let alpha = forward(lattice, w, blank);
    let (t_last, u_last) = (lattice.frames() - 1, lattice.u_rows() - 1);
    let ll = alpha[t_last * lattice.u_rows() + u_last] + lattice.get(t_last, u_last, blank);
    Ok(-ll)
}

/// Gradient of [`rnnt_loss`] with respect to every lattice entry, in the
/// lattice's `(t, u, v)` layout. Only the blank entry and the next-label
/// entry of each node are non-zero.
pub fn rnnt_grad(lattice: &JointLattice, w: &TokenSeq, vocab: &Vocab) -> Result<Vec<f64>> {
    check_inputs(lattice, w, vocab)?;
    let blank = vocab.blank_id();
    let alpha = forward(lattice, w, blank);
    let beta = backward(lattice, w, blank);
    let (frames, urows) = (lattice.frames(), lattice.u_rows());
    let ll = beta[0];
    if ll == LOG_ZERO {
        return Err(Error::Domain(
            "target has zero probability under the lattice".into(),
        ));
    }
    let mut grad = vec![0.0; lattice.values().len()];
    for t in 0..frames {
        for u in 0..urows {
            let a = alpha[t * urows + u];
            if a == LOG_ZERO {
                continue;
            }
            let after_blank = if t + 1 < frames {
                beta[(t + 1) * urows + u]
            } else if u == urows - 1 {
                0.0
            } else {
                LOG_ZERO
            };
            if after_blank != LOG_ZERO {
                grad[lattice.offset(t, u, blank)] =
                    -(a + lattice.get(t, u, blank) + after_blank - ll).exp();
            }
            if u + 1 < urows {
                let label = w.ids()[u];
                let rest = beta[t * urows + u + 1];
                if rest != LOG_ZERO {
                    grad[lattice.offset(t, u, label)] =
                        -(a + lattice.get(t, u, label) + rest - ll).exp();
                }
            }
        }
    }
    Ok(grad)
}

/// [`rnnt_grad`] carried through the per-node log-softmax to the logits
/// that produced `lattice`.
pub fn rnnt_grad_wrt_logits(lattice: &JointLattice, grad: &[f64]) -> Vec<f64> {
    log_softmax_backward(lattice.values(), grad, lattice.cols())
}
