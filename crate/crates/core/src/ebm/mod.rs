//! Energy-based cloning of the continuous actions: a scalar energy over
//! (observation, action) pairs trained contrastively against sampled fake
//! actions, and the two inference procedures that minimize it.

mod inference;
mod loss;
mod sampler;

pub use inference::{
    grid_candidates, infer, infer_grid, infer_nograd, infer_nograd_traced, pins, EnergySurface, FnSurface,
    InferenceConfig, InferenceMode, ACTION_MAX, ACTION_MIN,
};
pub use loss::{infonce_loss, softmax_neg};
pub use sampler::{sample_negatives, NegativeSamplerConfig};

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::config::ConfigMap;
use crate::dataset::{Batch, ObsLayout};
use crate::encoders::{ArchConfig, ObservationEncoders};
use crate::error::{Error, Result};
use crate::nn::{opt_step, Activation, Adam, AdamConfig, Checkpoint, Mlp, MlpGrads, Model};
use crate::sim::Observation;
use crate::training::{check_loss, LossMeter};

pub const CHECKPOINT_TAG: &str = "ec-bc";
pub const ACTION_DIMS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct EbmModel {
    pub encoders: ObservationEncoders,
    /// Input is `[features; action]`, output is the scalar energy.
    pub trunk: Mlp,
}

impl Model for EbmModel {
    fn networks(&self) -> Vec<&Mlp> {
        vec![&self.encoders.depth, &self.encoders.occupancy, &self.encoders.telemetry, &self.trunk]
    }

    fn networks_mut(&mut self) -> Vec<&mut Mlp> {
        let e = &mut self.encoders;
        vec![&mut e.depth, &mut e.occupancy, &mut e.telemetry, &mut self.trunk]
    }
}

fn check_action(a: [f64; 2]) -> Result<()> {
    if a.iter().all(|x| (ACTION_MIN..=ACTION_MAX).contains(x)) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("action {a:?} outside [{ACTION_MIN}, {ACTION_MAX}]")))
    }
}

impl EbmModel {
    pub fn init<R: Rng + ?Sized>(layout: ObsLayout, cfg: &ArchConfig, rng: &mut R) -> Result<Self> {
        let encoders = ObservationEncoders::init(layout, &cfg.encoders, rng)?;
        let mut widths = vec![encoders.output_width() + ACTION_DIMS];
        widths.extend_from_slice(&cfg.trunk);
        widths.push(1);
        let trunk = Mlp::init(&widths, Activation::Identity, rng)?;
        Ok(Self { encoders, trunk })
    }

    pub fn layout(&self) -> ObsLayout {
        self.encoders.layout
    }

    fn feature_width(&self) -> usize {
        self.encoders.output_width()
    }

    /// Feature part of the first trunk layer plus its bias, one row per observation.
    fn project_features(&self, feats: &ArrayView2<f64>) -> Array2<f64> {
        let l0 = &self.trunk.layers()[0];
        let wf = l0.weight.slice(s![.., ..self.feature_width()]);
        feats.dot(&wf.t()) + &l0.bias
    }

    /// First-layer pre-activations for `m` candidate rows per observation.
    fn candidate_preacts(&self, zf: &Array2<f64>, actions: &ArrayView2<f64>, m: usize) -> Array2<f64> {
        let wa = self.trunk.layers()[0].weight.slice(s![.., self.feature_width()..]);
        let mut z = actions.dot(&wa.t());
        for (b, row) in zf.rows().into_iter().enumerate() {
            let mut block = z.slice_mut(s![b * m..(b + 1) * m, ..]);
            block += &row;
        }
        z
    }

    /// Energies of `m` candidates per observation. `actions` holds the
    /// candidates grouped by observation; the result is `rows x m`.
    pub fn energies_batch(&self, x: ArrayView2<f64>, actions: ArrayView2<f64>, m: usize) -> Result<Array2<f64>> {
        let n = x.nrows();
        if actions.dim() != (n * m, ACTION_DIMS) {
            return Err(Error::Shape(format!(
                "expected {} x {ACTION_DIMS} candidate actions, got {:?}",
                n * m,
                actions.dim()
            )));
        }
        let feats = self.encoders.predict(x)?;
        let zf = self.project_features(&feats.view());
        let cache = self.trunk.forward_from_preact(self.candidate_preacts(&zf, &actions, m))?;
        Ok(cache.output().clone().into_shape_with_order((n, m)).expect("one energy per row"))
    }

    pub fn energy(&self, obs: &Observation, a: [f64; 2]) -> Result<f64> {
        check_action(a)?;
        let x = self.layout().features(&[obs])?;
        let trunk_in = ndarray::concatenate(
            Axis(1),
            &[self.encoders.predict(x.view())?.view(), Array2::from_shape_vec((1, 2), a.to_vec()).unwrap().view()],
        )
        .expect("one row");
        Ok(self.trunk.predict(trunk_in.view())?[[0, 0]])
    }

    /// Energy landscape over actions for one observation, with the
    /// observation part of the network evaluated once.
    pub fn surface(&self, obs: &Observation) -> Result<ObservedEnergy<'_>> {
        let x = self.layout().features(&[obs])?;
        let feats = self.encoders.predict(x.view())?;
        let zf = self.project_features(&feats.view());
        Ok(ObservedEnergy { model: self, zf })
    }

    /// Mean contrastive loss over the batch, with the demonstrated action as
    /// the positive and `negatives` (`rows * n_fake` of them) as fakes.
    pub fn loss_and_grads(&self, batch: &Batch, negatives: &Array2<f64>) -> Result<(f64, Vec<MlpGrads>)> {
        let n = batch.size();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if !negatives.nrows().is_multiple_of(n) || negatives.ncols() != ACTION_DIMS {
            return Err(Error::Shape(format!("{:?} negatives for {n} samples", negatives.dim())));
        }
        let n_fake = negatives.nrows() / n;
        let m = n_fake + 1;
        let mut actions = Array2::<f64>::zeros((n * m, ACTION_DIMS));
        for b in 0..n {
            actions.row_mut(b * m).assign(&batch.continuous_targets.row(b));
            actions
                .slice_mut(s![b * m + 1..(b + 1) * m, ..])
                .assign(&negatives.slice(s![b * n_fake..(b + 1) * n_fake, ..]));
        }

        let (feats, enc_cache) = self.encoders.forward(batch.observations.view())?;
        let zf = self.project_features(&feats.view());
        let cache = self.trunk.forward_from_preact(self.candidate_preacts(&zf, &actions.view(), m))?;
        let energies = cache.output().as_slice().expect("contiguous");

        let mut grad_e = Array2::<f64>::zeros((n * m, 1));
        let ge = grad_e.as_slice_mut().expect("contiguous");
        let mut loss = 0.0;
        let scale = 1.0 / n as f64;
        for b in 0..n {
            let r = b * m..(b + 1) * m;
            loss += loss::infonce_row(&energies[r.clone()], Some((&mut ge[r], scale)))
                .map_err(|e| Error::Numeric(format!("sample {b}: {e}")))?;
        }
        loss *= scale;

        let (mut g_trunk, dz0) = self.trunk.backward_to_preact(&cache, grad_e.view())?;
        let fw = self.feature_width();
        let mut dzf = Array2::<f64>::zeros((n, dz0.ncols()));
        for b in 0..n {
            dzf.row_mut(b).assign(&dz0.slice(s![b * m..(b + 1) * m, ..]).sum_axis(Axis(0)));
        }
        let g0 = &mut g_trunk.layers[0];
        g0.weight.slice_mut(s![.., ..fw]).assign(&dzf.t().dot(&feats));
        g0.weight.slice_mut(s![.., fw..]).assign(&dz0.t().dot(&actions));
        g0.bias = dzf.sum_axis(Axis(0));
        let wf = self.trunk.layers()[0].weight.slice(s![.., ..fw]);
        let dfeat = dzf.dot(&wf);
        let [gd, go, gt] = self.encoders.backward(&enc_cache, dfeat.view())?;
        Ok((loss, vec![gd, go, gt, g_trunk]))
    }

    /// One pass over `batches`: fresh negatives per batch drawn from `rng`,
    /// one optimizer step per batch. Returns the mean per-sample loss.
    pub fn train_epoch<I, R>(
        &mut self,
        batches: I,
        sampler: &NegativeSamplerConfig,
        opt: &mut Adam,
        rng: &mut R,
    ) -> Result<f64>
    where
        I: IntoIterator<Item = Result<Batch>>,
        R: Rng + ?Sized,
    {
        let mut meter = LossMeter::default();
        let mut seen = 0;
        for (i, batch) in batches.into_iter().enumerate() {
            let batch = batch?;
            let negatives = sample_negatives(sampler, batch.size(), rng);
            let (loss, grads) = self.loss_and_grads(&batch, &negatives)?;
            check_loss(loss, "ec-bc", i)?;
            opt_step(self, &grads, opt)?;
            meter.add(loss, batch.size());
            seen += 1;
        }
        if seen == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(meter.mean())
    }

    pub fn new_optimizer(&self, cfg: AdamConfig) -> Adam {
        Adam::new(cfg, &self.param_shapes())
    }

    pub fn to_checkpoint(&self, optimizer: Option<&Adam>) -> Checkpoint {
        Checkpoint {
            tag: CHECKPOINT_TAG.into(),
            meta: self.layout().to_meta(),
            networks: self.networks().into_iter().cloned().collect(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.tag != CHECKPOINT_TAG {
            return Err(Error::parse("checkpoint", format!("expected tag {CHECKPOINT_TAG}, found {}", ckpt.tag)));
        }
        let layout = ObsLayout::from_meta(&ConfigMap::parse(&ckpt.meta)?)?;
        let [d, o, t, trunk]: [Mlp; 4] = ckpt
            .networks
            .clone()
            .try_into()
            .map_err(|v: Vec<Mlp>| Error::Shape(format!("ec-bc checkpoint has {} networks, expected 4", v.len())))?;
        let encoders = ObservationEncoders::from_networks(layout, d, o, t)?;
        if trunk.input_width() != encoders.output_width() + ACTION_DIMS || trunk.output_width() != 1 {
            return Err(Error::Shape("ec-bc trunk does not match encoders".into()));
        }
        Ok(Self { encoders, trunk })
    }
}

/// See [`EbmModel::surface`].
pub struct ObservedEnergy<'a> {
    model: &'a EbmModel,
    zf: Array2<f64>,
}

impl EnergySurface for ObservedEnergy<'_> {
    fn energies(&mut self, actions: &[[f64; 2]]) -> Result<Vec<f64>> {
        let a = Array2::from_shape_fn((actions.len(), ACTION_DIMS), |(i, j)| actions[i][j]);
        let z = self.model.candidate_preacts(&self.zf, &a.view(), actions.len());
        let cache = self.model.trunk.forward_from_preact(z)?;
        Ok(cache.output().column(0).to_vec())
    }
}

impl ObservedEnergy<'_> {
    pub fn energy(&mut self, a: [f64; 2]) -> Result<f64> {
        check_action(a)?;
        Ok(self.energies(&[a])?[0])
    }
}
