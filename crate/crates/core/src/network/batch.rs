//! Single-pass loss and gradient computation over a mixed-domain batch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{DaRnnModel, DaRnnParams, Mode, SequenceInput};
use crate::error::{Error, Result};
use crate::losses::{anticipation_loss, domain_loss, total_loss, AnticipationLossConfig, Domain};
use crate::nn::ParamSet;
use crate::scalar::Scalar;

/// Samples per reduction chunk. Chunk sums are combined in index order, so
/// results do not depend on the number of worker threads.
const REDUCE_CHUNK: usize = 8;

/// One row of a batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a, T> {
    pub input: &'a SequenceInput<T>,
    /// Manoeuvre class; `None` for unlabelled target rows.
    pub class: Option<usize>,
    /// Manoeuvre-loss weight, 1 for source rows and 0 for target rows.
    pub weight: T,
    pub domain: Domain,
    /// Seeds this row's dropout masks.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct BatchSettings<T> {
    pub loss: AnticipationLossConfig,
    pub lambda: T,
    /// Compute the domain loss and its gradients.
    pub adversarial: bool,
    /// Sample dropout masks.
    pub train: bool,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome<T> {
    /// Manoeuvre loss averaged over weight-1 rows.
    pub l_y: T,
    /// Domain loss averaged over all rows (0 when not adversarial).
    pub l_d: T,
    pub l_tot: T,
    pub grads: DaRnnParams<T>,
    pub clamped: usize,
    pub domain_correct: usize,
    pub domain_total: usize,
}

struct Partial<T> {
    l_y: T,
    l_d: T,
    grads: DaRnnParams<T>,
    clamped: usize,
    domain_correct: usize,
    domain_total: usize,
}

/// Computes `L_y`, `L_d` and all parameter gradients in one forward and one
/// backward pass per row.
///
/// Target rows carry weight 0, so they never reach the manoeuvre head; every
/// row reaches the domain head, and the extractor sees `-λ ∂L_d`.
pub fn full_forward_backward<T: Scalar>(
    model: &DaRnnModel<T>,
    items: &[BatchItem<'_, T>],
    settings: &BatchSettings<T>,
) -> Result<BatchOutcome<T>> {
    if items.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    if settings.adversarial && !items.iter().any(|i| i.domain == Domain::Target) {
        return Err(Error::Config("adversarial batch contains no target-domain rows".into()));
    }
    let active: T = items.iter().map(|i| i.weight).sum();
    let y_scale = if active > T::zero() { T::one() / active } else { T::zero() };
    let d_scale = T::one() / T::of(items.len() as f64);

    let partials: Vec<Result<Partial<T>>> = items
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut part = Partial {
                l_y: T::zero(),
                l_d: T::zero(),
                grads: model.params.zeros_like(),
                clamped: 0,
                domain_correct: 0,
                domain_total: 0,
            };
            for item in chunk {
                accumulate_item(model, item, settings, y_scale, d_scale, &mut part)?;
            }
            Ok(part)
        })
        .collect();

    let mut iter = partials.into_iter();
    let mut acc = iter.next().expect("non-empty batch")?;
    for part in iter {
        let part = part?;
        acc.l_y += part.l_y;
        acc.l_d += part.l_d;
        acc.grads.accumulate(&part.grads);
        acc.clamped += part.clamped;
        acc.domain_correct += part.domain_correct;
        acc.domain_total += part.domain_total;
    }
    Ok(BatchOutcome {
        l_y: acc.l_y,
        l_d: acc.l_d,
        l_tot: total_loss(acc.l_y, acc.l_d, settings.lambda),
        grads: acc.grads,
        clamped: acc.clamped,
        domain_correct: acc.domain_correct,
        domain_total: acc.domain_total,
    })
}

fn accumulate_item<T: Scalar>(
    model: &DaRnnModel<T>,
    item: &BatchItem<'_, T>,
    settings: &BatchSettings<T>,
    y_scale: T,
    d_scale: T,
    part: &mut Partial<T>,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(item.seed);
    let mode = if settings.train { Mode::Train(&mut rng) } else { Mode::Infer };
    let pass = model.forward(item.input, mode, true)?;

    let mut dlogits = None;
    if item.weight != T::zero() {
        let class = item
            .class
            .ok_or_else(|| Error::Schema("row with non-zero manoeuvre weight has no label".into()))?;
        let loss = anticipation_loss(&pass.probs, class, &settings.loss)?;
        let s = item.weight * y_scale;
        part.l_y += loss.loss * s;
        part.clamped += loss.clamped;
        let scaled: Vec<Vec<T>> =
            loss.dlogits.into_iter().map(|row| row.into_iter().map(|g| g * s).collect()).collect();
        dlogits = Some(scaled);
    }

    let mut ddomain = None;
    if settings.adversarial {
        let steps = T::of(pass.domain_probs.len() as f64);
        let s = d_scale / steps;
        let mut grads = Vec::with_capacity(pass.domain_probs.len());
        for &p in &pass.domain_probs {
            let (l, g) = domain_loss(p, item.domain);
            part.l_d += l * s;
            grads.push(g * s);
            let predicted_target = p >= T::of(0.5);
            if predicted_target == (item.domain == Domain::Target) {
                part.domain_correct += 1;
            }
            part.domain_total += 1;
        }
        ddomain = Some(grads);
    }

    if dlogits.is_some() || ddomain.is_some() {
        model.backward(&pass, dlogits.as_deref(), ddomain.as_deref(), settings.lambda, &mut part.grads)?;
    }
    Ok(())
}

/// Reference computation that takes `L_y` from the source rows alone and then
/// `L_d` from the whole batch, summing the two gradient sets.
pub fn two_pass_reference<T: Scalar>(
    model: &DaRnnModel<T>,
    items: &[BatchItem<'_, T>],
    settings: &BatchSettings<T>,
) -> Result<BatchOutcome<T>> {
    let source: Vec<BatchItem<'_, T>> = items.iter().copied().filter(|i| i.weight != T::zero()).collect();
    let y_only = BatchSettings { adversarial: false, ..*settings };
    let first = full_forward_backward(model, &source, &y_only)?;
    let hidden: Vec<BatchItem<'_, T>> = items.iter().map(|i| BatchItem { weight: T::zero(), ..*i }).collect();
    let second = full_forward_backward(model, &hidden, settings)?;
    let mut grads = first.grads;
    grads.accumulate(&second.grads);
    Ok(BatchOutcome {
        l_y: first.l_y,
        l_d: second.l_d,
        l_tot: total_loss(first.l_y, second.l_d, settings.lambda),
        grads,
        clamped: first.clamped,
        domain_correct: second.domain_correct,
        domain_total: second.domain_total,
    })
}

/// Mean anticipation loss over labelled sequences, dropout off.
pub fn mean_loss<T: Scalar>(
    model: &DaRnnModel<T>,
    inputs: &[(&SequenceInput<T>, usize)],
    loss: &AnticipationLossConfig,
) -> Result<T> {
    if inputs.is_empty() {
        return Err(Error::Usage("mean loss over an empty set".into()));
    }
    let partials: Vec<Result<T>> = inputs
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut sum = T::zero();
            for &(input, class) in chunk {
                let probs = model.predict(input)?;
                sum += anticipation_loss(&probs, class, loss)?.loss;
            }
            Ok(sum)
        })
        .collect();
    let mut total = T::zero();
    for p in partials {
        total += p?;
    }
    Ok(total / T::of(inputs.len() as f64))
}
