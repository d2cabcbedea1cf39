use std::cmp::Ordering;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{init_model, Gradients, Layer, MlpClassifier, ModelError, TrainConfig};
use crate::features::FeatureVector;

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MlpClassifier,
    /// Mean per-example training loss of every epoch.
    pub loss_trace: Vec<f64>,
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: i32,
}

impl Adam {
    fn new(model: &MlpClassifier) -> Self {
        let zeros = || -> Vec<Layer> {
            model
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in(), l.fan_out()))
                .collect()
        };
        Adam {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn update(
        &mut self,
        model: &mut MlpClassifier,
        grads: &Gradients,
        lr: f64,
        config: &TrainConfig,
    ) {
        let a = config.adam;
        self.step += 1;
        let c1 = 1.0 - a.beta1.powi(self.step);
        let c2 = 1.0 - a.beta2.powi(self.step);
        for (((p, g), m), v) in model
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, g), m), v) in p
                .param_slices_mut()
                .into_iter()
                .zip(g.param_slices())
                .zip(m.param_slices_mut())
                .zip(v.param_slices_mut())
            {
                for i in 0..p.len() {
                    let gi = g[i];
                    m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * gi;
                    v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * gi * gi;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + a.epsilon);
                }
            }
        }
    }
}

fn cmp_features(a: &FeatureVector, b: &FeatureVector) -> Ordering {
    let mut a = a.nonzeros();
    let mut b = b.nonzeros();
    loop {
        match (a.next(), b.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some((i, x)), Some((j, y))) => {
                let ord = i.cmp(&j).then_with(|| x.total_cmp(&y));
                if ord != Ordering::Equal {
                    return ord;
                }
            }
        }
    }
}

/// Example order that depends only on content, so shuffles are independent of input order.
fn canonical_order(features: &[FeatureVector], targets: &ArrayView2<'_, bool>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| {
        cmp_features(&features[a], &features[b])
            .then_with(|| targets.row(a).iter().cmp(targets.row(b).iter()))
    });
    order
}

/// Trains a freshly initialized model for `config.epochs` epochs of mini-batch Adam.
///
/// Examples are shuffled every epoch with a generator seeded from `config.seed`;
/// the final partial batch is kept.
pub fn train(
    features: &[FeatureVector],
    targets: ArrayView2<'_, bool>,
    config: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    let first = features.first().ok_or(ModelError::EmptyTrainSet)?;
    let model = init_model(first.dim(), targets.ncols(), config)?;
    train_model(model, features, targets, config)
}

/// Like [`train`], starting from the given parameters.
pub fn train_model(
    mut model: MlpClassifier,
    features: &[FeatureVector],
    targets: ArrayView2<'_, bool>,
    config: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if features.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    model.check_targets(features.len(), &targets)?;
    for x in features {
        model.check_input(x)?;
    }

    let mut order = canonical_order(features, &targets);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(&model);
    let mut grads = model.empty_gradients();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut labels = vec![false; model.output_dim()];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = config.learning_rate_at(epoch);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            grads.zero();
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                for (l, t) in labels.iter_mut().zip(targets.row(i)) {
                    *l = *t;
                }
                batch_loss += model.accumulate(&features[i], &labels, scale, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += batch_loss;
            adam.update(&mut model, &grads, lr, config);
        }
        loss_trace.push(epoch_loss / features.len() as f64);
    }
    Ok(TrainOutcome { model, loss_trace })
}
