//! N-pair (softmax cross-entropy) contrastive loss over dot-product similarities,
//! with analytic gradients with respect to the anchor.
//!
//! For anchor `a`, positive `p` and negatives `n_1..n_k`:
//!
//! ```text
//! loss = -ln( e^{a.p} / (e^{a.p} + sum_i e^{a.n_i}) )
//! d loss / d a = sum_c softmax_c * v_c - p      (c over p, n_1..n_k)
//! ```

use std::collections::HashSet;

use crate::dense::dot;
use crate::error::{Error, Result};
use crate::sampling::TupleBatch;

/// One anchor with its positive and at least one negative, all of equal length.
#[derive(Debug, Clone)]
pub struct LossInput<'a> {
    pub anchor: &'a [f64],
    pub positive: &'a [f64],
    pub negatives: Vec<&'a [f64]>,
}

impl<'a> LossInput<'a> {
    pub fn new(anchor: &'a [f64], positive: &'a [f64], negatives: Vec<&'a [f64]>) -> Result<Self> {
        let input = LossInput {
            anchor,
            positive,
            negatives,
        };
        input.validate()?;
        Ok(input)
    }

    fn validate(&self) -> Result<()> {
        if self.negatives.is_empty() {
            return Err(Error::Config(
                "n-pair loss needs at least one negative".into(),
            ));
        }
        let m = self.anchor.len();
        for v in std::iter::once(self.positive).chain(self.negatives.iter().copied()) {
            if v.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: v.len(),
                });
            }
        }
        let finite = std::iter::once(self.anchor)
            .chain(std::iter::once(self.positive))
            .chain(self.negatives.iter().copied())
            .flatten()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("n-pair loss input".into()));
        }
        Ok(())
    }

    /// Positive similarity first, then negatives in order.
    fn logits(&self) -> Vec<f64> {
        std::iter::once(self.positive)
            .chain(self.negatives.iter().copied())
            .map(|v| dot(self.anchor, v))
            .collect()
    }

    fn candidates(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        std::iter::once(self.positive).chain(self.negatives.iter().copied())
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Loss from raw similarities: `logits[0]` is the positive.
pub fn npair_loss_from_logits(logits: &[f64]) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::Config(
            "n-pair loss needs at least one negative".into(),
        ));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("similarities".into()));
    }
    Ok(log_sum_exp(logits) - logits[0])
}

pub fn npair_loss(input: &LossInput<'_>) -> Result<f64> {
    input.validate()?;
    npair_loss_from_logits(&input.logits())
}

pub fn npair_grad_anchor(input: &LossInput<'_>) -> Result<Vec<f64>> {
    input.validate()?;
    let probs = softmax(&input.logits());
    let mut grad: Vec<f64> = input.positive.iter().map(|x| -x).collect();
    for (p, v) in probs.iter().zip(input.candidates()) {
        for (g, x) in grad.iter_mut().zip(v) {
            *g += p * x;
        }
    }
    Ok(grad)
}

/// Loss and anchor gradient in one pass.
pub fn npair_loss_and_grad(input: &LossInput<'_>) -> Result<(f64, Vec<f64>)> {
    let loss = npair_loss(input)?;
    let grad = npair_grad_anchor(input)?;
    Ok((loss, grad))
}

/// Vectors for one in-batch evaluation. Tuple `j` is scored against its own
/// positive, every other tuple's positive, and its explicit hard negatives.
#[derive(Debug, Clone, Copy)]
pub struct InBatch<'a> {
    pub anchors: &'a [Vec<f64>],
    pub positives: &'a [Vec<f64>],
    /// Empty, or one list per tuple.
    pub hard_negatives: &'a [Vec<Vec<f64>>],
}

impl InBatch<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.anchors.len();
        if self.positives.len() != n {
            return Err(Error::InvalidBatch(format!(
                "{n} anchors but {} positives",
                self.positives.len()
            )));
        }
        if !self.hard_negatives.is_empty() && self.hard_negatives.len() != n {
            return Err(Error::InvalidBatch(format!(
                "{n} anchors but {} hard-negative lists",
                self.hard_negatives.len()
            )));
        }
        Ok(())
    }

    fn tuple(&self, j: usize) -> Result<LossInput<'_>> {
        let mut negatives: Vec<&[f64]> = self
            .positives
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, v)| v.as_slice())
            .collect();
        if let Some(hard) = self.hard_negatives.get(j) {
            negatives.extend(hard.iter().map(Vec::as_slice));
        }
        LossInput::new(&self.anchors[j], &self.positives[j], negatives)
    }

    /// Sum over tuples of the n-pair loss.
    pub fn loss(&self) -> Result<f64> {
        self.validate()?;
        (0..self.anchors.len()).try_fold(0.0, |acc, j| Ok(acc + npair_loss(&self.tuple(j)?)?))
    }

    /// Total loss and its gradient with respect to each anchor. Anchor `j`
    /// only enters tuple `j`, so each gradient is that tuple's anchor gradient.
    pub fn loss_and_anchor_grads(&self) -> Result<(f64, Vec<Vec<f64>>)> {
        self.validate()?;
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(self.anchors.len());
        for j in 0..self.anchors.len() {
            let (loss, grad) = npair_loss_and_grad(&self.tuple(j)?)?;
            total += loss;
            grads.push(grad);
        }
        Ok((total, grads))
    }
}

/// Batch loss with the batch's item-distinctness invariant checked first.
pub fn batch_loss(
    batch: &TupleBatch,
    anchor_vecs: &[Vec<f64>],
    positive_vecs: &[Vec<f64>],
    hard_neg_vecs: &[Vec<Vec<f64>>],
) -> Result<f64> {
    let mut items = HashSet::new();
    for t in &batch.tuples {
        if !items.insert(t.item_id.as_str()) {
            return Err(Error::InvalidBatch(format!(
                "item {:?} appears twice",
                t.item_id
            )));
        }
    }
    if anchor_vecs.len() != batch.tuples.len() {
        return Err(Error::InvalidBatch(format!(
            "{} tuples but {} anchor vectors",
            batch.tuples.len(),
            anchor_vecs.len()
        )));
    }
    for (t, hard) in batch.tuples.iter().zip(hard_neg_vecs) {
        if t.hard_negatives.len() != hard.len() {
            return Err(Error::InvalidBatch(format!(
                "tuple for item {:?} lists {} hard negatives but {} vectors were given",
                t.item_id,
                t.hard_negatives.len(),
                hard.len()
            )));
        }
    }
    InBatch {
        anchors: anchor_vecs,
        positives: positive_vecs,
        hard_negatives: hard_neg_vecs,
    }
    .loss()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_loss() {
        let a = [0.0, 0.0];
        let v = [1.0, 2.0];
        let input = LossInput::new(&a, &v, vec![&v, &v, &v]).unwrap();
        assert!((npair_loss(&input).unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_class_loss() {
        let ln2 = 2f64.ln();
        let a = [1.0];
        let pos = [ln2];
        let neg = [0.0];
        let input = LossInput::new(&a, &pos, vec![&neg]).unwrap();
        assert!((npair_loss(&input).unwrap() - (-(2.0f64 / 3.0).ln())).abs() < 1e-15);
    }

    #[test]
    fn confident_loss() {
        let l = npair_loss_from_logits(&[10.0, 0.0, 0.0, 0.0]).unwrap();
        let expected = (3.0 * (-10f64).exp()).ln_1p();
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 1.3619e-4).abs() < 1e-8);
    }

    #[test]
    fn overflow_safe() {
        let l = npair_loss_from_logits(&[1000.0, 999.0]).unwrap();
        assert!((l - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let a = [1.0, 2.0];
        let short = [1.0];
        assert!(LossInput::new(&a, &a, vec![&short]).is_err());
        assert!(LossInput::new(&a, &a, vec![]).is_err());
        let nan = [f64::NAN, 0.0];
        assert!(matches!(
            LossInput::new(&nan, &a, vec![&a]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn grad_identical_candidates() {
        let a = [0.3, -1.2, 4.0];
        let v = [1.0, 2.0, 3.0];
        let g = npair_grad_anchor(&LossInput::new(&a, &v, vec![&v, &v]).unwrap()).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn grad_two_class() {
        let a = [0.0, 1.0];
        let pos = [1.0, 0.0];
        let neg = [-1.0, 0.0];
        let g = npair_grad_anchor(&LossInput::new(&a, &pos, vec![&neg]).unwrap()).unwrap();
        assert_eq!(g, vec![-1.0, 0.0]);
    }

    #[test]
    fn in_batch_two() {
        let anchors = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let positives = vec![vec![0.5, 0.2], vec![-0.3, 0.8]];
        let batch = InBatch {
            anchors: &anchors,
            positives: &positives,
            hard_negatives: &[],
        };
        let l0 = npair_loss_from_logits(&[0.5, -0.3]).unwrap();
        let l1 = npair_loss_from_logits(&[0.8, 0.2]).unwrap();
        assert!((batch.loss().unwrap() - (l0 + l1)).abs() < 1e-15);
    }
}
