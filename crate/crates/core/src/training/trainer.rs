use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use burn::module::AutodiffModule;
use burn::optim::adaptor::OptimizerAdaptor;
use burn::optim::{Adam, AdamConfig, GradientsParams, Optimizer};
use burn::tensor::backend::AutodiffBackend;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{multiscale_loss, FrameBatch, LossBreakdown};
use super::TrainConfig;
use crate::data::{augment, AugmentConfig, RgbImage, TrainingSample, TripletSource};
use crate::error::{ensure, Error, Result};
use crate::geometry::regressor_to_transform;
use crate::losses::LossConfig;
use crate::network::checkpoint::{decode_record, encode_record};
use crate::network::{Checkpoint, CheckpointManifest, DepthNetConfig, DepthPoseModel};
use crate::tensor_util::scalar;

/// Key mixed into the seed of the augmentation stream so it differs from the shuffling one.
const AUGMENT_KEY: u64 = 0x9e37_79b9_7f4a_7c15;
const EMA_DECAY: f64 = 0.98;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LAST_CHECKPOINT: &str = "last.tar";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub total_loss: f64,
    pub photometric: f64,
    pub smoothness: f64,
}

/// Running summary of the total loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub count: usize,
    pub mean: f64,
    pub ema: f64,
    pub last: f64,
}

impl LossStats {
    fn update(&mut self, loss: f64) {
        self.count += 1;
        self.mean += (loss - self.mean) / self.count as f64;
        self.ema = if self.count == 1 {
            loss
        } else {
            EMA_DECAY * self.ema + (1.0 - EMA_DECAY) * loss
        };
        self.last = loss;
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitReport {
    pub steps: Vec<StepStats>,
    pub checkpoints: Vec<PathBuf>,
}

/// Training state kept in the checkpoint manifest next to the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainerExtra {
    train: TrainConfig,
    loss: LossConfig,
    augment: AugmentConfig,
    stats: LossStats,
    /// Batches already consumed in epoch `epoch + 1`.
    cursor: usize,
}

type Adaptor<B> = OptimizerAdaptor<Adam, DepthPoseModel<B>, B>;

/// Owns the networks and optimiser state of a run.
pub struct Trainer<B: AutodiffBackend> {
    pub model: DepthPoseModel<B>,
    optimizer: Adaptor<B>,
    pub network: DepthNetConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    /// Optimisation steps taken so far.
    pub step: usize,
    /// Completed epochs.
    pub epoch: usize,
    cursor: usize,
    pub stats: LossStats,
    device: B::Device,
    run_dir: Option<PathBuf>,
}

impl<B: AutodiffBackend> Trainer<B> {
    /// Seeds the backend with `train.seed` and initialises both networks.
    pub fn new(
        network: DepthNetConfig,
        train: TrainConfig,
        loss: LossConfig,
        augment: AugmentConfig,
        device: &B::Device,
    ) -> Result<Self> {
        train.validate()?;
        loss.validate()?;
        ensure!(
            train.num_scales <= network.num_scales,
            "training uses {} scales but the network emits {}",
            train.num_scales,
            network.num_scales
        );
        B::seed(train.seed);
        let model = DepthPoseModel::new(&network, device)?;
        Ok(Self {
            model,
            optimizer: adam(&train),
            network,
            train,
            loss,
            augment,
            step: 0,
            epoch: 0,
            cursor: 0,
            stats: LossStats::default(),
            device: device.clone(),
            run_dir: None,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, device: &B::Device) -> Result<Self> {
        let extra: TrainerExtra = serde_json::from_value(ckpt.manifest.extra.clone())
            .map_err(|e| Error::Checkpoint(format!("manifest lacks training state: {e}")))?;
        let mut trainer = Self::new(
            ckpt.manifest.network.clone(),
            extra.train,
            extra.loss,
            extra.augment,
            device,
        )?;
        trainer.model = ckpt.load_model(device)?;
        if let Some(bytes) = &ckpt.optimizer {
            let record = decode_record::<B, _>(bytes.clone(), device)?;
            trainer.optimizer = trainer.optimizer.load_record(record);
        }
        trainer.step = ckpt.manifest.step;
        trainer.epoch = ckpt.manifest.epoch;
        trainer.cursor = extra.cursor;
        trainer.stats = extra.stats;
        Ok(trainer)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut manifest = CheckpointManifest::new(self.network.clone(), self.step, self.epoch);
        manifest.extra = serde_json::to_value(TrainerExtra {
            train: self.train.clone(),
            loss: self.loss.clone(),
            augment: self.augment.clone(),
            stats: self.stats,
            cursor: self.cursor,
        })
        .expect("training state serialises");
        let mut ckpt = Checkpoint::from_model(manifest, &self.model)?;
        ckpt.optimizer = Some(encode_record::<B, _>(self.optimizer.to_record())?);
        Ok(ckpt)
    }

    pub fn device(&self) -> &B::Device {
        &self.device
    }

    /// Builds the batch tensors: network inputs and loss targets.
    fn batch(
        &self,
        samples: &[TrainingSample],
    ) -> Result<([burn::tensor::Tensor<B, 4>; 3], FrameBatch<B>)> {
        ensure!(!samples.is_empty(), "empty batch");
        let stack = |pick: &dyn Fn(&TrainingSample) -> &RgbImage| {
            let imgs: Vec<&RgbImage> = samples.iter().map(pick).collect();
            RgbImage::batch::<B>(&imgs, &self.device)
        };
        let inputs = [
            stack(&|s| &s.inputs[0])?,
            stack(&|s| &s.inputs[1])?,
            stack(&|s| &s.inputs[2])?,
        ];
        let batch = FrameBatch {
            target: stack(&|s| &s.targets[1])?,
            sources: vec![stack(&|s| &s.targets[0])?, stack(&|s| &s.targets[2])?],
            intrinsics: samples.iter().map(|s| s.intrinsics).collect(),
        };
        for s in samples {
            ensure!(
                s.intrinsics.width == s.targets[1].width
                    && s.intrinsics.height == s.targets[1].height,
                "intrinsics do not match the frame size"
            );
        }
        Ok((inputs, batch))
    }

    /// Forward pass of both networks and the full objective.
    pub fn compute_loss(
        &self,
        model: &DepthPoseModel<B>,
        samples: &[TrainingSample],
    ) -> Result<LossBreakdown<B>> {
        let ([prev, target, next], batch) = self.batch(samples)?;
        let disparities = model.depth.forward(target.clone())?;
        let to_prev = model.pose.forward(target.clone(), prev)?;
        let to_next = model.pose.forward(target, next)?;
        let transforms = [
            regressor_to_transform(
                to_prev,
                self.train.rotation_scale,
                self.train.translation_scale,
            ),
            regressor_to_transform(
                to_next,
                self.train.rotation_scale,
                self.train.translation_scale,
            ),
        ];
        multiscale_loss(
            &batch,
            &disparities[..self.train.num_scales],
            &transforms,
            &self.train,
            &self.loss,
        )
    }

    /// One Adam update on all parameters at learning rate `lr`.
    pub fn train_step(&mut self, samples: &[TrainingSample], lr: f64) -> Result<StepStats> {
        let loss = self.compute_loss(&self.model, samples)?;
        let stats = StepStats {
            step: self.step + 1,
            epoch: self.epoch + 1,
            lr,
            total_loss: scalar(loss.total.clone().inner()),
            photometric: scalar(loss.photometric.clone().inner()),
            smoothness: scalar(loss.smoothness.clone().inner()),
        };
        if !stats.total_loss.is_finite() {
            let snapshot = self.write_diagnostics(&stats).ok().flatten();
            return Err(Error::NonFiniteLoss {
                step: stats.step,
                snapshot,
            });
        }
        let grads = GradientsParams::from_grads(loss.total.backward(), &self.model);
        self.model = self.optimizer.step(lr, self.model.clone(), grads);
        self.step += 1;
        self.stats.update(stats.total_loss);
        Ok(stats)
    }

    fn write_diagnostics(&self, stats: &StepStats) -> Result<Option<PathBuf>> {
        let Some(dir) = &self.run_dir else {
            return Ok(None);
        };
        let dir = dir.join("diagnostics");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("step_{:06}.tar", stats.step));
        let mut ckpt = self.checkpoint()?;
        if let serde_json::Value::Object(map) = &mut ckpt.manifest.extra {
            map.insert(
                "failed_step".into(),
                serde_json::to_value(stats).expect("stats serialise"),
            );
        }
        ckpt.save(&path)?;
        let path_str = path.display().to_string();
        log::error!(
            "non-finite loss at step {}; snapshot in {path_str}",
            stats.step
        );
        Ok(Some(path))
    }

    /// Batches of epoch `epoch` (1-based) as dataset indices.
    fn epoch_order(&self, epoch: usize, len: usize) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.train.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        order
            .chunks(self.train.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }

    fn samples(&self, data: &dyn TripletSource, indices: &[usize]) -> Result<Vec<TrainingSample>> {
        // One stream per step keeps augmentation reproducible across resumes.
        let mut rng = ChaCha8Rng::seed_from_u64(self.train.seed ^ AUGMENT_KEY);
        rng.set_stream(self.step as u64 + 1);
        indices
            .iter()
            .map(|&i| {
                let triplet = data.get(i)?;
                triplet.validate()?;
                Ok(augment(&triplet, &self.augment, &mut rng))
            })
            .collect()
    }

    fn budget_left(&self) -> bool {
        self.train.max_steps.map_or(true, |m| self.step < m)
    }

    /// Trains until `epochs` (or `max_steps`) is reached, continuing from the current state.
    ///
    /// With a run directory, appends one CSV row per step to `metrics.csv`, checkpoints every
    /// epoch under `checkpoints/` and always leaves `checkpoints/last.tar`.
    pub fn fit(&mut self, data: &dyn TripletSource, run_dir: Option<&Path>) -> Result<FitReport> {
        ensure!(!data.is_empty(), "training dataset is empty");
        self.run_dir = run_dir.map(Path::to_path_buf);
        let mut log = match run_dir {
            Some(dir) => Some(MetricsLog::open(&dir.join(METRICS_FILE))?),
            None => None,
        };
        let mut report = FitReport::default();
        while self.epoch < self.train.epochs && self.budget_left() {
            let epoch = self.epoch + 1;
            let lr = self.train.lr_at(epoch);
            let batches = self.epoch_order(epoch, data.len());
            for indices in batches.iter().skip(self.cursor) {
                if !self.budget_left() {
                    break;
                }
                let samples = self.samples(data, indices)?;
                let stats = self.train_step(&samples, lr)?;
                self.cursor += 1;
                if let Some(log) = &mut log {
                    log.append(&stats)?;
                }
                log::debug!(
                    "step {} epoch {epoch} loss {:.6} photo {:.6}",
                    stats.step,
                    stats.total_loss,
                    stats.photometric
                );
                report.steps.push(stats);
            }
            if self.cursor < batches.len() {
                break;
            }
            self.epoch = epoch;
            self.cursor = 0;
            log::info!("epoch {epoch} done, running loss {:.6}", self.stats.ema);
            if let (Some(dir), true) = (run_dir, self.train.checkpoint_every_epoch) {
                report
                    .checkpoints
                    .push(self.save_checkpoint(dir, &format!("epoch_{epoch:03}.tar"))?);
            }
        }
        if let Some(dir) = run_dir {
            report
                .checkpoints
                .push(self.save_checkpoint(dir, LAST_CHECKPOINT)?);
        }
        Ok(report)
    }

    fn save_checkpoint(&self, run_dir: &Path, name: &str) -> Result<PathBuf> {
        let dir = run_dir.join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(name);
        self.checkpoint()?.save(&path)?;
        Ok(path)
    }

    /// Inference copy of the networks (batch norm uses running statistics).
    pub fn inference_model(&self) -> DepthPoseModel<B::InnerBackend> {
        self.model.valid()
    }
}

fn adam<B: AutodiffBackend>(train: &TrainConfig) -> Adaptor<B> {
    AdamConfig::new()
        .with_beta_1(train.adam_betas.0)
        .with_beta_2(train.adam_betas.1)
        .with_epsilon(train.adam_epsilon)
        .init()
}

/// Append-only CSV: `step,epoch,lr,total_loss,photometric,smoothness`.
struct MetricsLog {
    writer: csv::Writer<std::fs::File>,
    path: PathBuf,
}

impl MetricsLog {
    fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        if fresh {
            writer
                .write_record([
                    "step",
                    "epoch",
                    "lr",
                    "total_loss",
                    "photometric",
                    "smoothness",
                ])
                .map_err(|e| csv_error(path, e))?;
        }
        Ok(Self {
            writer,
            path: path.to_path_buf(),
        })
    }

    fn append(&mut self, s: &StepStats) -> Result<()> {
        self.writer
            .serialize(s)
            .map_err(|e| csv_error(&self.path, e))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        what: "metrics log",
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads a metrics log back.
pub fn read_metrics(path: &Path) -> Result<Vec<StepStats>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}
