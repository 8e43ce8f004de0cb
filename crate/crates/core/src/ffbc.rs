//! Feed-forward behavioural cloning: sigmoid heads for the discrete actions,
//! plus an optional regression head used by the baseline policy.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::config::ConfigMap;
use crate::dataset::{Batch, ObsLayout};
use crate::encoders::{ArchConfig, EncoderCache, ObservationEncoders};
use crate::error::{Error, Result};
use crate::nn::{opt_step, standard, sigmoid, Activation, Adam, Checkpoint, Mlp, MlpCache, MlpGrads, Model};
use crate::sim::Observation;
use crate::training::{check_loss, LossMeter};

pub const CHECKPOINT_TAG: &str = "ff-bc";
pub const BCE_EPS: f64 = 1e-7;
pub const DISCRETE_DIMS: usize = 2;
pub const CONTINUOUS_DIMS: usize = 2;

/// Binary cross-entropy of a probability against a 0/1 target.
pub fn bce_loss(p: f64, target: f64) -> Result<f64> {
    if target != 0.0 && target != 1.0 {
        return Err(Error::InvalidArgument(format!("bce target must be 0 or 1, got {target}")));
    }
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    Ok(-(target * p.ln() + (1.0 - target) * (1.0 - p).ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Discrete,
    ContinuousMse,
    /// Sum of the two losses above.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfPrediction {
    pub discrete: [f64; DISCRETE_DIMS],
    pub continuous: Option<[f64; CONTINUOUS_DIMS]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfBcModel {
    pub encoders: ObservationEncoders,
    pub trunk: Mlp,
    pub discrete_head: Mlp,
    pub continuous_head: Option<Mlp>,
}

struct Forward {
    enc: EncoderCache,
    trunk: MlpCache,
    logits: Array2<f64>,
    continuous: Option<Array2<f64>>,
}

impl Model for FfBcModel {
    fn networks(&self) -> Vec<&Mlp> {
        let mut v = vec![&self.encoders.depth, &self.encoders.occupancy, &self.encoders.telemetry];
        v.push(&self.trunk);
        v.push(&self.discrete_head);
        v.extend(self.continuous_head.as_ref());
        v
    }

    fn networks_mut(&mut self) -> Vec<&mut Mlp> {
        let e = &mut self.encoders;
        let mut v = vec![&mut e.depth, &mut e.occupancy, &mut e.telemetry];
        v.push(&mut self.trunk);
        v.push(&mut self.discrete_head);
        v.extend(self.continuous_head.as_mut());
        v
    }
}

impl FfBcModel {
    pub fn init<R: Rng + ?Sized>(
        layout: ObsLayout,
        cfg: &ArchConfig,
        continuous_head: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let encoders = ObservationEncoders::init(layout, &cfg.encoders, rng)?;
        let mut trunk_w = vec![encoders.output_width()];
        trunk_w.extend_from_slice(&cfg.trunk);
        let trunk = Mlp::init(&trunk_w, Activation::Relu, rng)?;
        let hidden = trunk.output_width();
        let discrete_head = Mlp::init(&[hidden, DISCRETE_DIMS], Activation::Identity, rng)?;
        let continuous_head = if continuous_head {
            Some(Mlp::init(&[hidden, CONTINUOUS_DIMS], Activation::Identity, rng)?)
        } else {
            None
        };
        Ok(Self { encoders, trunk, discrete_head, continuous_head })
    }

    pub fn layout(&self) -> ObsLayout {
        self.encoders.layout
    }

    pub fn has_continuous_head(&self) -> bool {
        self.continuous_head.is_some()
    }

    pub fn zero_output_layers(&mut self) {
        self.discrete_head.zero_output_layer();
        if let Some(h) = &mut self.continuous_head {
            h.zero_output_layer();
        }
    }

    /// Discrete probabilities (rows × 2) and the continuous estimate if the
    /// model has a regression head.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
        let h = self.trunk.predict(self.encoders.predict(x)?.view())?;
        let probs = self.discrete_head.predict(h.view())?.mapv(sigmoid);
        let cont = match &self.continuous_head {
            Some(head) => Some(head.predict(h.view())?),
            None => None,
        };
        Ok((probs, cont))
    }

    pub fn predict(&self, obs: &Observation) -> Result<FfPrediction> {
        let x = self.layout().features(&[obs])?;
        let (p, c) = self.predict_batch(x.view())?;
        Ok(FfPrediction {
            discrete: [p[[0, 0]], p[[0, 1]]],
            continuous: c.map(|c| [c[[0, 0]], c[[0, 1]]]),
        })
    }

    fn forward(&self, x: ArrayView2<f64>) -> Result<Forward> {
        let (feats, enc) = self.encoders.forward(x)?;
        let (h, trunk) = self.trunk.forward(feats.view())?;
        let logits = self.discrete_head.predict(h.view())?;
        let continuous = match &self.continuous_head {
            Some(head) => Some(head.predict(h.view())?),
            None => None,
        };
        Ok(Forward { enc, trunk, logits, continuous })
    }

    /// Mean loss over the batch and its gradients, one entry per network in
    /// [`Model::networks`] order.
    pub fn loss_and_grads(&self, batch: &Batch, objective: Objective) -> Result<(f64, Vec<MlpGrads>)> {
        let n = batch.size();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let use_discrete = objective != Objective::ContinuousMse;
        let use_continuous = objective != Objective::Discrete;
        if use_continuous && self.continuous_head.is_none() {
            return Err(Error::InvalidArgument("model has no continuous head".into()));
        }
        let fwd = self.forward(batch.observations.view())?;
        let h = fwd.trunk.output();
        let mut loss = 0.0;
        let mut dh = Array2::<f64>::zeros(h.dim());

        let mut g_disc = MlpGrads::zeros_like(&self.discrete_head);
        if use_discrete {
            let scale = 1.0 / (n * DISCRETE_DIMS) as f64;
            let mut dlogits = Array2::<f64>::zeros(fwd.logits.dim());
            for ((z, t), d) in fwd.logits.iter().zip(batch.discrete_targets.iter()).zip(dlogits.iter_mut()) {
                let p = sigmoid(*z);
                loss += bce_loss(p, *t)? * scale;
                *d = (p - t) * scale;
            }
            let layer = &self.discrete_head.layers()[0];
            g_disc.layers[0].weight = standard(dlogits.t().dot(h));
            g_disc.layers[0].bias = dlogits.sum_axis(Axis(0));
            dh += &dlogits.dot(&layer.weight);
        }

        let mut g_cont = self.continuous_head.as_ref().map(MlpGrads::zeros_like);
        if use_continuous {
            let head = self.continuous_head.as_ref().expect("checked above");
            let y = fwd.continuous.as_ref().expect("head present");
            let scale = 1.0 / (n * CONTINUOUS_DIMS) as f64;
            let diff = y - &batch.continuous_targets;
            loss += diff.iter().map(|d| d * d).sum::<f64>() * scale;
            let dy = diff * (2.0 * scale);
            let g = g_cont.as_mut().expect("head present");
            g.layers[0].weight = standard(dy.t().dot(h));
            g.layers[0].bias = dy.sum_axis(Axis(0));
            dh += &dy.dot(&head.layers()[0].weight);
        }

        let (g_trunk, dfeat) = self.trunk.backward(&fwd.trunk, dh.view())?;
        let [gd, go, gt] = self.encoders.backward(&fwd.enc, dfeat.view())?;
        let mut grads = vec![gd, go, gt, g_trunk, g_disc];
        grads.extend(g_cont);
        Ok((loss, grads))
    }

    /// One pass over `batches`, updating after every batch. Returns the mean
    /// per-sample loss.
    pub fn train_epoch<I>(&mut self, batches: I, opt: &mut Adam, objective: Objective) -> Result<f64>
    where
        I: IntoIterator<Item = Result<Batch>>,
    {
        let mut meter = LossMeter::default();
        let mut seen = 0;
        for (i, batch) in batches.into_iter().enumerate() {
            let batch = batch?;
            let (loss, grads) = self.loss_and_grads(&batch, objective)?;
            check_loss(loss, "ff-bc", i)?;
            opt_step(self, &grads, opt)?;
            meter.add(loss, batch.size());
            seen += 1;
        }
        if seen == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(meter.mean())
    }

    pub fn train_discrete_epoch<I>(&mut self, batches: I, opt: &mut Adam) -> Result<f64>
    where
        I: IntoIterator<Item = Result<Batch>>,
    {
        self.train_epoch(batches, opt, Objective::Discrete)
    }

    pub fn train_continuous_mse_epoch<I>(&mut self, batches: I, opt: &mut Adam) -> Result<f64>
    where
        I: IntoIterator<Item = Result<Batch>>,
    {
        self.train_epoch(batches, opt, Objective::ContinuousMse)
    }

    pub fn new_optimizer(&self, cfg: crate::nn::AdamConfig) -> Adam {
        Adam::new(cfg, &self.param_shapes())
    }

    pub fn to_checkpoint(&self, optimizer: Option<&Adam>) -> Checkpoint {
        let mut meta = self.layout().to_meta();
        meta.push_str(&format!("continuous_head={}\n", self.has_continuous_head()));
        Checkpoint {
            tag: CHECKPOINT_TAG.into(),
            meta,
            networks: self.networks().into_iter().cloned().collect(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.tag != CHECKPOINT_TAG {
            return Err(Error::parse("checkpoint", format!("expected tag {CHECKPOINT_TAG}, found {}", ckpt.tag)));
        }
        let meta = ConfigMap::parse(&ckpt.meta)?;
        let layout = ObsLayout::from_meta(&meta)?;
        let has_cont = meta.get("continuous_head") == Some("true");
        let expected = if has_cont { 6 } else { 5 };
        if ckpt.networks.len() != expected {
            return Err(Error::Shape(format!(
                "ff-bc checkpoint has {} networks, expected {expected}",
                ckpt.networks.len()
            )));
        }
        let mut nets = ckpt.networks.iter().cloned();
        let mut next = || nets.next().expect("count checked");
        let encoders = ObservationEncoders::from_networks(layout, next(), next(), next())?;
        let trunk = next();
        let discrete_head = next();
        let continuous_head = if has_cont { Some(next()) } else { None };
        if trunk.input_width() != encoders.output_width()
            || discrete_head.input_width() != trunk.output_width()
            || discrete_head.output_width() != DISCRETE_DIMS
            || continuous_head
                .as_ref()
                .is_some_and(|h| h.input_width() != trunk.output_width() || h.output_width() != CONTINUOUS_DIMS)
        {
            return Err(Error::Shape("ff-bc checkpoint networks do not chain".into()));
        }
        Ok(Self { encoders, trunk, discrete_head, continuous_head })
    }
}
