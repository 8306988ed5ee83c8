//! Training objectives: adversarial, contrastive, reconstruction and their
//! weighted combination.
//!
//! Each loss exists twice: a plain `ndarray` evaluation used for reporting
//! and as a reference, and a [`tape`] builder used for training.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clipping bound for every log argument.
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    /// NBA row of the published hyperparameter table.
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 0.1,
            gamma: 0.1,
            lambda: 1.0,
            tau: 0.5,
        }
    }
}

impl LossWeights {
    /// Published per-dataset `(alpha, beta, gamma, lambda)`.
    pub fn for_dataset(name: &str) -> Option<LossWeights> {
        let (alpha, beta, gamma, lambda) = match name {
            "nba" => (1.0, 0.1, 0.1, 1.0),
            "pokec_n" => (0.1, 1.0, 0.1, 10.0),
            "pokec_z" => (10.0, 10.0, 0.1, 10.0),
            "citeseer" => (0.1, 0.1, 0.1, 1.0),
            "cora" => (10.0, 10.0, 0.1, 10.0),
            "pubmed" => (10.0, 10.0, 0.1, 0.1),
            _ => return None,
        };
        Some(LossWeights {
            alpha,
            beta,
            gamma,
            lambda,
            ..LossWeights::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.alpha, self.beta, self.gamma, self.lambda];
        if nonneg.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be >= 0: {self:?}")));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Per-epoch loss values; `total = alpha adv + beta con + gamma reconst`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub adv: f64,
    pub con: f64,
    pub reconst: f64,
    pub total: f64,
}

/// Combines the three components. Fails on any non-finite component.
pub fn total_loss(weights: &LossWeights, adv: f64, con: f64, reconst: f64) -> Result<LossBreakdown> {
    for (name, v) in [("adv", adv), ("con", con), ("reconst", reconst)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: 0,
                detail: format!("{name} = {v}"),
            });
        }
    }
    Ok(LossBreakdown {
        adv,
        con,
        reconst,
        total: weights.alpha * adv + weights.beta * con + weights.gamma * reconst,
    })
}

/// Mean log-likelihood of the true sensitive values.
///
/// `s_hat` is either `n x 1` (binary probability of `S = 1`, evaluated as
/// `S log s + (1 - S) log(1 - s)`) or `n x |S|` class probabilities
/// (evaluated as `log s_hat[i, S_i]`, which coincides with the binary form
/// for two columns). Log arguments are clipped to `[EPS, 1]`, so the value is
/// at most 0 and exactly 0 for one-hot correct predictions.
pub fn adversarial_loss(s: &[usize], s_hat: ArrayView2<f64>) -> Result<f64> {
    let n = s.len();
    if s_hat.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "adversarial_loss rows",
            expected: n,
            found: s_hat.nrows(),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let ln = |p: f64| p.clamp(EPS, 1.0).ln();
    let mut total = 0.0;
    for (i, &si) in s.iter().enumerate() {
        total += if s_hat.ncols() == 1 {
            let p = s_hat[[i, 0]];
            match si {
                0 => ln(1.0 - p),
                1 => ln(p),
                _ => {
                    return Err(Error::OutOfRange {
                        what: "binary sensitive value",
                        value: si.to_string(),
                        range: "0..2".into(),
                    })
                }
            }
        } else {
            if si >= s_hat.ncols() {
                return Err(Error::OutOfRange {
                    what: "sensitive value",
                    value: si.to_string(),
                    range: format!("0..{}", s_hat.ncols()),
                });
            }
            ln(s_hat[[i, si]])
        };
    }
    Ok(total / n as f64)
}

fn normalized_rows(h: ArrayView2<f64>) -> Array2<f64> {
    let mut out = h.to_owned();
    let mut zero = 0;
    for mut r in out.rows_mut() {
        let norm = r.dot(&r).sqrt();
        if norm > 0.0 {
            r /= norm;
        } else {
            zero += 1;
        }
    }
    if zero > 0 {
        log::warn!("{zero} zero-norm embedding rows; their cosine similarities are taken as 0");
    }
    out
}

fn check_pair(h: ArrayView2<f64>, h2: ArrayView2<f64>, tau: f64) -> Result<()> {
    if h.dim() != h2.dim() {
        return Err(Error::DimensionMismatch {
            context: "contrastive embeddings",
            expected: h.nrows() * h.ncols(),
            found: h2.nrows() * h2.ncols(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be > 0, got {tau}")));
    }
    Ok(())
}

/// `-log(exp(s_ii'/tau) / (sum_j exp(s_ij/tau) + sum_{j != i} exp(s_ij'/tau)))`
/// from normalized intra-view rows `a`, cross-view rows `b`, anchor `i`.
fn anchor_loss(a: &Array2<f64>, b: &Array2<f64>, i: usize, tau: f64) -> f64 {
    let ai = a.row(i);
    // similarities are at most 1; shift by 1/tau for stability
    let intra: f64 = a.rows().into_iter().map(|r| ((ai.dot(&r) - 1.0) / tau).exp()).sum();
    let cross: f64 = b
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, r)| ((ai.dot(&r) - 1.0) / tau).exp())
        .sum();
    let pos = ai.dot(&b.row(i)) / tau;
    (intra + cross).ln() + 1.0 / tau - pos
}

/// Pairwise loss `l(h_i, h_i')` with cosine similarity.
pub fn pairwise_contrastive(i: usize, h: ArrayView2<f64>, h2: ArrayView2<f64>, tau: f64) -> Result<f64> {
    check_pair(h, h2, tau)?;
    if i >= h.nrows() {
        return Err(Error::OutOfRange {
            what: "anchor index",
            value: i.to_string(),
            range: format!("0..{}", h.nrows()),
        });
    }
    Ok(anchor_loss(&normalized_rows(h), &normalized_rows(h2), i, tau))
}

/// Symmetric contrastive loss `(1/2n) sum_i [l(h_i, h_i') + l(h_i', h_i)]`.
pub fn contrastive_loss(h: ArrayView2<f64>, h2: ArrayView2<f64>, tau: f64) -> Result<f64> {
    check_pair(h, h2, tau)?;
    let n = h.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let a = normalized_rows(h);
    let b = normalized_rows(h2);
    let s11 = a.dot(&a.t());
    let s12 = a.dot(&b.t());
    let s22 = b.dot(&b.t());
    let shifted = |m: &Array2<f64>| m.mapv(|s| ((s - 1.0) / tau).exp());
    let (e11, e12, e22) = (shifted(&s11), shifted(&s12), shifted(&s22));
    let r11 = e11.sum_axis(Axis(1));
    let r22 = e22.sum_axis(Axis(1));
    let r12 = e12.sum_axis(Axis(1));
    let c12 = e12.sum_axis(Axis(0));
    let mut total = 0.0;
    for i in 0..n {
        let pos = s12[[i, i]] / tau;
        let d1 = r11[i] + r12[i] - e12[[i, i]];
        let d2 = r22[i] + c12[i] - e12[[i, i]];
        total += d1.ln() + d2.ln() + 2.0 / tau - 2.0 * pos;
    }
    Ok(total / (2.0 * n as f64))
}

/// Summed binary cross-entropy between `a` and `a_prob` (clipped to
/// `[EPS, 1 - EPS]`) plus `lambda ||x - x_aug||_F^2`.
pub fn reconstruction_loss(
    a: ArrayView2<f64>,
    a_prob: ArrayView2<f64>,
    x: ArrayView2<f64>,
    x_aug: ArrayView2<f64>,
    lambda: f64,
) -> Result<f64> {
    if a.dim() != a_prob.dim() {
        return Err(Error::DimensionMismatch {
            context: "reconstruction adjacency",
            expected: a.len(),
            found: a_prob.len(),
        });
    }
    if x.dim() != x_aug.dim() {
        return Err(Error::DimensionMismatch {
            context: "reconstruction features",
            expected: x.len(),
            found: x_aug.len(),
        });
    }
    let bce: f64 = a
        .iter()
        .zip(a_prob.iter())
        .map(|(&t, &p)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    let mse: f64 = x.iter().zip(x_aug.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(bce + lambda * mse)
}

/// Tape builders for the same objectives.
pub mod tape {
    use std::rc::Rc;

    use ndarray::Array2;

    use super::EPS;
    use crate::autograd::{Tape, Var};

    /// Mean `log p[i, S_i]` for class probabilities `probs` (`n x |S|`).
    pub fn adversarial(t: &mut Tape, probs: Var, sensitive: Rc<Vec<usize>>) -> Var {
        let picked = t.pick_cols(probs, sensitive);
        let logs = t.log_clamped(picked, EPS, 1.0);
        t.mean(logs)
    }

    /// Symmetric cosine-similarity contrastive loss between `h` and `h2`.
    pub fn contrastive(t: &mut Tape, h: Var, h2: Var, tau: f64) -> Var {
        let a = t.row_normalize(h);
        let b = t.row_normalize(h2);
        t.info_nce(a, b, tau)
    }

    /// Same loss built from elementary tape ops. Quadratic tape memory;
    /// kept as a reference for the fused op.
    pub fn contrastive_composed(t: &mut Tape, h: Var, h2: Var, tau: f64) -> Var {
        let n = t.shape(h).0;
        let a = t.row_normalize(h);
        let b = t.row_normalize(h2);
        let at = t.transpose(a);
        let bt = t.transpose(b);
        let s11 = t.matmul(a, at);
        let s12 = t.matmul(a, bt);
        let s22 = t.matmul(b, bt);
        let s21 = t.transpose(s12);
        let off = t.constant(Array2::from_shape_fn((n, n), |(i, j)| f64::from(u8::from(i != j))));
        let one_side = |t: &mut Tape, intra: Var, cross: Var| {
            let ei = t.scale(intra, 1.0 / tau);
            let ei = t.shift(ei, -1.0 / tau);
            let ei = t.exp(ei);
            let ec = t.scale(cross, 1.0 / tau);
            let ec = t.shift(ec, -1.0 / tau);
            let ec = t.exp(ec);
            let ec = t.mul(ec, off);
            let ri = t.row_sum(ei);
            let rc = t.row_sum(ec);
            let den = t.add(ri, rc);
            let logden = t.log_clamped(den, f64::MIN_POSITIVE, f64::INFINITY);
            let pos = t.diag(cross);
            let pos = t.scale(pos, 1.0 / tau);
            let l = t.sub(logden, pos);
            t.shift(l, 1.0 / tau)
        };
        let l1 = one_side(t, s11, s12);
        let l2 = one_side(t, s22, s21);
        let both = t.add(l1, l2);
        let s = t.sum(both);
        t.scale(s, 1.0 / (2.0 * n as f64))
    }

    /// Binary cross-entropy summed over candidate pairs (each pair counted
    /// `multiplicity` times, 2 for an unordered pair standing for both
    /// `(i, j)` and `(j, i)`), plus `lambda ||x - x_aug||_F^2`.
    pub fn reconstruction(
        t: &mut Tape,
        edge_probs: Var,
        targets: Var,
        multiplicity: f64,
        x: Var,
        x_aug: Var,
        lambda: f64,
    ) -> Var {
        let log_p = t.log_clamped(edge_probs, EPS, 1.0 - EPS);
        let neg = t.scale(edge_probs, -1.0);
        let one_minus = t.shift(neg, 1.0);
        let log_q = t.log_clamped(one_minus, EPS, 1.0 - EPS);
        let ones = t.constant(Array2::ones(t.shape(targets)));
        let not_targets = t.sub(ones, targets);
        let pos = t.mul(targets, log_p);
        let negs = t.mul(not_targets, log_q);
        let ll = t.add(pos, negs);
        let ll = t.sum(ll);
        let bce = t.scale(ll, -multiplicity);
        let diff = t.sub(x, x_aug);
        let sq = t.mul(diff, diff);
        let mse = t.sum(sq);
        let mse = t.scale(mse, lambda);
        t.add(bce, mse)
    }
}
