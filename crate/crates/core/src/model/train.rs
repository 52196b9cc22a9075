use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bce_logit_grad, bce_with_logits, BackboneConfig, PatchQualityModel};
use crate::error::{Error, Result};
use crate::proxy::TrainingInstance;
use crate::util::{derive_seed, stable_hash};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// L2 penalty on all parameters. Zero unless asked for.
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 60,
            batch_size: 4,
            learning_rate: 1e-4,
            lr_decay_factor: 0.1,
            lr_decay_every: 20,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("training config: {what}")));
        if self.epochs == 0 || self.batch_size == 0 || self.lr_decay_every == 0 {
            return bad("epochs, batch_size and lr_decay_every must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr_decay_factor must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || !(self.l2 >= 0.0) {
            return bad("adam_eps must be positive and l2 non-negative");
        }
        Ok(())
    }

    /// Learning rate for a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = (epoch.max(1) - 1) / self.lr_decay_every;
        self.learning_rate * self.lr_decay_factor.powi(steps as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Empty when the held-out split has no instances.
    pub heldout_rank_accuracy: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: PatchQualityModel,
    pub log: Vec<EpochRecord>,
    pub train_size: usize,
    pub heldout_size: usize,
}

/// One instance in ten, chosen by a stable hash of its id.
pub fn is_heldout(instance_id: &str) -> bool {
    stable_hash(instance_id) % 10 == 0
}

/// Siamese loss of one instance. Both pairings go through the same parameters.
pub fn instance_loss(model: &PatchQualityModel, inst: &TrainingInstance) -> Result<f64> {
    let q1 = model.forward(&inst.pairing_1.ref_patch, &inst.pairing_1.dist_patch)?;
    let q2 = model.forward(&inst.pairing_2.ref_patch, &inst.pairing_2.dist_patch)?;
    Ok(bce_with_logits(q1 - q2, inst.rank_label))
}

/// Fraction of instances whose predicted order agrees with the label. Equal
/// scores count as wrong.
pub fn pairwise_accuracy(model: &PatchQualityModel, instances: &[&TrainingInstance]) -> Result<Option<f64>> {
    if instances.is_empty() {
        return Ok(None);
    }
    let hits = instances
        .par_iter()
        .map(|inst| -> Result<usize> {
            let q1 = model.forward(&inst.pairing_1.ref_patch, &inst.pairing_1.dist_patch)?;
            let q2 = model.forward(&inst.pairing_2.ref_patch, &inst.pairing_2.dist_patch)?;
            let diff = q1 - q2;
            Ok(usize::from((inst.rank_label == 1 && diff > 0.0) || (inst.rank_label == 0 && diff < 0.0)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(Some(hits as f64 / instances.len() as f64))
}

fn instance_gradient(model: &PatchQualityModel, inst: &TrainingInstance) -> Result<(f64, Vec<f64>)> {
    let bb = model.backbone();
    let params = model.params();
    let (q1, tape1) = bb.forward(params, &inst.pairing_1.ref_patch, &inst.pairing_1.dist_patch)?;
    let (q2, tape2) = bb.forward(params, &inst.pairing_2.ref_patch, &inst.pairing_2.dist_patch)?;
    let logit = q1 - q2;
    let g = bce_logit_grad(logit, inst.rank_label);
    let mut grad = vec![0.0; params.len()];
    bb.backward(params, &tape1, g, &mut grad);
    bb.backward(params, &tape2, -g, &mut grad);
    Ok((bce_with_logits(logit, inst.rank_label), grad))
}

fn check_instances(instances: &[TrainingInstance], backbone: &BackboneConfig) -> Result<()> {
    for inst in instances {
        if inst.rank_label > 1 {
            return Err(Error::InvalidInput(format!("instance `{}` has label {}", inst.id, inst.rank_label)));
        }
        for p in [&inst.pairing_1, &inst.pairing_2] {
            for patch in [&p.ref_patch, &p.dist_patch] {
                if patch.geometry != backbone.geometry || patch.bit_depth != backbone.bit_depth {
                    return Err(Error::Geometry(format!(
                        "instance `{}` pairing `{}` is {:?}/{}-bit, model expects {:?}/{}-bit",
                        inst.id, p.id, patch.geometry, patch.bit_depth, backbone.geometry, backbone.bit_depth
                    )));
                }
            }
        }
    }
    Ok(())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainingConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i] + cfg.l2 * params[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Trains a fresh patch-quality model on ranked instances.
///
/// Instances whose id hashes into the held-out tenth are only evaluated. If
/// that leaves nothing to train on, every instance is used for training.
/// With `checkpoint_dir` set, each epoch is saved under
/// `epochs/epoch_NNN` and the final model at the directory root.
pub fn train(
    instances: &[TrainingInstance],
    cfg: &TrainingConfig,
    backbone: BackboneConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if instances.is_empty() {
        return Err(Error::EmptyDataset("no training instances".into()));
    }
    check_instances(instances, &backbone)?;

    let (heldout, mut trainset): (Vec<&TrainingInstance>, Vec<&TrainingInstance>) =
        instances.iter().partition(|i| is_heldout(&i.id));
    if trainset.is_empty() {
        log::warn!("every instance fell in the held-out split; training on all {}", instances.len());
        trainset = instances.iter().collect();
    }
    log::info!("training on {} instances, {} held out", trainset.len(), heldout.len());

    let mut model = PatchQualityModel::new(backbone, derive_seed(cfg.seed, "init"));
    let mut adam = Adam::new(model.params().len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch);
        trainset.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in trainset.chunks(cfg.batch_size) {
            let per_instance = batch
                .par_iter()
                .map(|inst| instance_gradient(&model, inst))
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; model.params().len()];
            for (loss, g) in &per_instance {
                loss_sum += loss;
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(model.params_mut(), &grad, lr, cfg);
        }
        let mean_loss = loss_sum / trainset.len() as f64;
        if !mean_loss.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch, loss: mean_loss });
        }
        let heldout_rank_accuracy = pairwise_accuracy(&model, &heldout)?;
        match heldout_rank_accuracy {
            Some(acc) => log::info!("epoch {epoch}: loss {mean_loss:.6}, held-out accuracy {acc:.4}, lr {lr:e}"),
            None => log::info!("epoch {epoch}: loss {mean_loss:.6}, lr {lr:e}"),
        }
        log.push(EpochRecord {
            epoch,
            mean_loss,
            heldout_rank_accuracy,
            lr,
        });
        if let Some(dir) = checkpoint_dir {
            model.save(&dir.join("epochs").join(format!("epoch_{epoch:03}")), &log)?;
        }
    }
    if let Some(dir) = checkpoint_dir {
        model.save(dir, &log)?;
    }
    Ok(TrainingOutcome {
        model,
        log,
        train_size: trainset.len(),
        heldout_size: heldout.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proxy::{PairingMode, TrainingPairing};
    use crate::video_io::{Patch, PatchGeometry, PatchOrigin};
    use std::sync::Arc;

    const G: PatchGeometry = PatchGeometry::new(2, 8, 8);

    fn patch(f: impl Fn(usize) -> u16) -> Patch {
        Patch {
            data: (0..G.len()).map(f).collect(),
            origin: PatchOrigin {
                sequence_id: "s".into(),
                frame_offset: 0,
                x: 0,
                y: 0,
            },
            geometry: G,
            bit_depth: 8,
        }
    }

    fn pairing(id: &str, noise: u16) -> Arc<TrainingPairing> {
        let base = |i: usize| (i * 29 % 180) as u16 + 40;
        Arc::new(TrainingPairing {
            id: id.into(),
            ref_patch: patch(base),
            dist_patch: patch(|i| if i % 2 == 0 { base(i) + noise } else { base(i) - noise }),
        })
    }

    fn instance(id: &str, r: u8) -> TrainingInstance {
        TrainingInstance {
            id: id.into(),
            pairing_1: pairing("a", 12),
            pairing_2: pairing("b", 3),
            rank_label: r,
            mode: PairingMode::SingleSource,
            delta_1: 0.0,
            delta_2: 0.0,
        }
    }

    #[test]
    fn schedule_steps_every_twenty_epochs() {
        let cfg = TrainingConfig::default();
        for (epoch, lr) in [(1, 1e-4), (20, 1e-4), (21, 1e-5), (40, 1e-5), (41, 1e-6), (60, 1e-6)] {
            assert!((cfg.lr_at(epoch) - lr).abs() < 1e-18, "epoch {epoch}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainingConfig {
            lr_decay_factor: 1.5,
            ..TrainingConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn swapping_pairings_and_flipping_label_keeps_loss() {
        let model = PatchQualityModel::new(BackboneConfig::toy(G, 8), 2);
        let inst = instance("x", 1);
        let swapped = TrainingInstance {
            pairing_1: inst.pairing_2.clone(),
            pairing_2: inst.pairing_1.clone(),
            rank_label: 0,
            ..inst.clone()
        };
        let a = instance_loss(&model, &inst).unwrap();
        let b = instance_loss(&model, &swapped).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn single_instance_is_memorized() {
        let cfg = TrainingConfig {
            seed: 4,
            ..TrainingConfig::default()
        };
        let out = train(&[instance("only", 1)], &cfg, BackboneConfig::toy(G, 8), None).unwrap();
        assert_eq!(out.log.len(), 60);
        assert!(out.log.last().unwrap().mean_loss < out.log[0].mean_loss);
        assert_eq!(out.log[20].lr, cfg.lr_at(21));
    }

    #[test]
    fn fixed_seed_reproduces_trajectory() {
        let data: Vec<_> = (0..6).map(|i| instance(&format!("i{i}"), (i % 2) as u8)).collect();
        let cfg = TrainingConfig {
            epochs: 3,
            seed: 9,
            ..TrainingConfig::default()
        };
        let a = train(&data, &cfg, BackboneConfig::toy(G, 8), None).unwrap();
        let b = train(&data, &cfg, BackboneConfig::toy(G, 8), None).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model.params_digest(), b.model.params_digest());
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let err = train(
            &[instance("x", 1)],
            &TrainingConfig::default(),
            BackboneConfig::toy(PatchGeometry::new(2, 4, 4), 8),
            None,
        );
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn writes_epoch_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainingConfig {
            epochs: 2,
            ..TrainingConfig::default()
        };
        train(&[instance("x", 1)], &cfg, BackboneConfig::toy(G, 8), Some(dir.path())).unwrap();
        assert!(dir.path().join("epochs/epoch_001/params.bin").exists());
        assert!(dir.path().join("epochs/epoch_002/params.bin").exists());
        let log = PatchQualityModel::load_log(dir.path()).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log[1].epoch, 2);
    }
}
