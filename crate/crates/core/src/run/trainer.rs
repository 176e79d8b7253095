use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::parallel;
use crate::data::{RecordTensors, VideoRecord};
use crate::error::{Error, Result};
use crate::model::{compute_loss, read_predictions, LossWeights, Model, MomentPrediction, SaliencyScores, Targets};
use crate::numerics::{Graph, Mode, Tensor};
use crate::optim::Optimizer;
use crate::params::ParamStore;
use crate::rng::{seeded, DetRng};

/// A record with its tensors and targets built once up front.
#[derive(Debug, Clone)]
pub struct Sample {
    pub video_id: String,
    pub duration: f64,
    pub tensors: RecordTensors,
    pub targets: Targets,
}

impl Sample {
    pub fn from_record(r: &VideoRecord) -> Result<Self> {
        Ok(Self {
            video_id: r.video_id.clone(),
            duration: r.duration,
            tensors: r.tensors()?,
            targets: r.targets()?,
        })
    }
}

pub fn prepare(records: &[VideoRecord]) -> Result<Vec<Sample>> {
    records.iter().map(Sample::from_record).collect()
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochLog {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub steps: usize,
    /// Mean training-mode loss over this epoch's steps.
    pub train_loss: f64,
    /// Evaluation-mode loss on the validation split, when there is one.
    pub val_loss: Option<f64>,
}

/// Model, parameters, optimizer and generator of one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub params: ParamStore,
    pub optimizer: Optimizer,
    pub rng: DetRng,
    pub loss_weights: LossWeights,
    pub epoch: usize,
    pub steps: usize,
}

impl Trainer {
    /// Fresh run: parameters are drawn from `seed`, and the same generator
    /// then drives shuffling and dropout.
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded(cfg.seed);
        let (model, params) = Model::new(cfg.model.clone(), &mut rng)?;
        let optimizer = Optimizer::new(cfg.optimizer_config(), &params);
        Ok(Self {
            model,
            params,
            optimizer,
            rng,
            loss_weights: cfg.loss_weights,
            epoch: 0,
            steps: 0,
        })
    }

    /// Loss on one sample and, when `dropout_seed` is given, the parameter
    /// gradients of a training-mode pass.
    pub fn sample_loss(&self, s: &Sample, dropout_seed: Option<u64>) -> Result<(f64, Option<Vec<Tensor>>)> {
        let mut g = Graph::new(self.params.tensors());
        let mut rng;
        let mut mode = match dropout_seed {
            Some(seed) => {
                rng = seeded(seed);
                Mode::train(&mut rng)
            }
            None => Mode::eval(),
        };
        let out = self.model.forward(&mut g, &s.tensors.input(), &mut mode)?;
        let loss = compute_loss(&mut g, &out, &s.targets, &self.loss_weights)?;
        if dropout_seed.is_none() {
            return Ok((loss.total_value, None));
        }
        g.backward(loss.total)?;
        Ok((loss.total_value, Some(g.param_grads())))
    }

    /// One optimizer step on the mean loss of `batch`. Returns that mean.
    pub fn train_step(&mut self, batch: &[&Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let seeds: Vec<u64> = batch.iter().map(|_| self.rng.random()).collect();
        let this = &*self;
        let results: Vec<(f64, Vec<Tensor>)> = parallel(|| {
            batch
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(s, &seed)| {
                    let (loss, grads) = this.sample_loss(s, Some(seed))?;
                    Ok((loss, grads.expect("training pass returns gradients")))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let n = batch.len() as f64;
        let mut iter = results.into_iter();
        let (mut loss, mut grads) = iter.next().expect("non-empty batch");
        for (l, gs) in iter {
            loss += l;
            for (acc, g) in grads.iter_mut().zip(gs) {
                acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
            }
        }
        if batch.len() > 1 {
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v /= n);
            }
        }
        self.optimizer.step(&mut self.params, &grads)?;
        self.steps += 1;
        Ok(loss / n)
    }

    /// Mean evaluation-mode loss.
    pub fn eval_loss(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Data("no samples to evaluate".into()));
        }
        let losses: Vec<f64> = parallel(|| {
            samples
                .par_iter()
                .map(|s| self.sample_loss(s, None).map(|(l, _)| l))
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    /// One shuffled pass over `train`, stopping early at `max_steps` total
    /// steps. Returns `None` when the cap was already reached.
    pub fn run_epoch(&mut self, train: &[Sample], batch_size: usize, max_steps: Option<usize>) -> Result<Option<f64>> {
        if train.is_empty() {
            return Err(Error::Data("training split is empty".into()));
        }
        if max_steps.is_some_and(|m| self.steps >= m) {
            return Ok(None);
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut taken = 0;
        for chunk in order.chunks(batch_size) {
            if max_steps.is_some_and(|m| self.steps >= m) {
                break;
            }
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            total += self.train_step(&batch)?;
            taken += 1;
        }
        self.epoch += 1;
        Ok(Some(total / taken as f64))
    }

    /// Train for `cfg.epochs` epochs (or until `cfg.max_steps`), calling
    /// `on_epoch` after each.
    pub fn fit(
        &mut self,
        cfg: &RunConfig,
        train: &[Sample],
        val: &[Sample],
        mut on_epoch: impl FnMut(&EpochLog) -> Result<()>,
    ) -> Result<Vec<EpochLog>> {
        let mut logs = Vec::new();
        while self.epoch < cfg.epochs {
            let Some(train_loss) = self.run_epoch(train, cfg.batch_size, cfg.max_steps)? else {
                break;
            };
            let val_loss = if val.is_empty() { None } else { Some(self.eval_loss(val)?) };
            let log = EpochLog {
                epoch: self.epoch,
                steps: self.steps,
                train_loss,
                val_loss,
            };
            on_epoch(&log)?;
            logs.push(log);
        }
        Ok(logs)
    }

    pub fn predict(&self, s: &Sample) -> Result<(SaliencyScores, Vec<MomentPrediction>)> {
        let mut g = Graph::new(self.params.tensors());
        let out = self.model.forward(&mut g, &s.tensors.input(), &mut Mode::eval())?;
        Ok(read_predictions(&g, &out))
    }
}
