use transvqa::model::{pairwise_accuracy, train, BackboneConfig, PatchQualityModel, TrainingConfig};
use transvqa::proxy::{build_training_set, LabelingConfig, PsnrScorer, RankThresholds, TrainingInstance};
use transvqa::synthetic::{make_synthetic_corpus, SyntheticSpec};
use transvqa::PatchGeometry;

fn instances(dir: &std::path::Path, g: PatchGeometry) -> Vec<TrainingInstance> {
    let spec = SyntheticSpec {
        n_sources: 8,
        width: 32,
        height: 32,
        frames: 4,
        reference_noise: vec![1.0, 4.0],
        distortion_grid: vec![3.0, 6.0, 12.0],
        seed: 2,
        ..SyntheticSpec::default()
    };
    let m = make_synthetic_corpus(dir, &spec).unwrap();
    let cfg = LabelingConfig {
        geometry: g,
        patches_per_sequence: 6,
        thresholds: RankThresholds::new(0.0, 6.0).unwrap(),
        seed: 2,
        ..LabelingConfig::default()
    };
    build_training_set(&m, &cfg, &PsnrScorer::default()).unwrap().instances
}

fn accuracy(model: &PatchQualityModel, set: &[TrainingInstance]) -> f64 {
    let refs: Vec<&TrainingInstance> = set.iter().collect();
    pairwise_accuracy(model, &refs).unwrap().unwrap()
}

// Inverting every label must invert what the model learns.
#[test]
fn flipped_labels_learn_the_reverse_order() {
    let dir = tempfile::tempdir().unwrap();
    let g = PatchGeometry::new(2, 16, 16);
    let set = instances(dir.path(), g);
    assert!(set.len() >= 100, "{} instances", set.len());
    let flipped: Vec<TrainingInstance> = set
        .iter()
        .cloned()
        .map(|mut i| {
            i.rank_label = 1 - i.rank_label;
            i
        })
        .collect();
    let cfg = TrainingConfig { epochs: 8, lr_decay_every: 4, seed: 1, ..TrainingConfig::default() };
    let straight = train(&set, &cfg, BackboneConfig::toy(g, 8), None).unwrap();
    let reversed = train(&flipped, &cfg, BackboneConfig::toy(g, 8), None).unwrap();
    let (a, b) = (accuracy(&straight.model, &set), accuracy(&reversed.model, &set));
    assert!(a >= 0.9, "straight accuracy {a}");
    assert!(b <= 0.1, "reversed accuracy {b}");
}

#[test]
fn loss_decreases_over_training() {
    let dir = tempfile::tempdir().unwrap();
    let g = PatchGeometry::new(2, 16, 16);
    let set = instances(dir.path(), g);
    let cfg = TrainingConfig { epochs: 6, seed: 3, ..TrainingConfig::default() };
    let out = train(&set, &cfg, BackboneConfig::toy(g, 8), None).unwrap();
    let first = out.log.first().unwrap().mean_loss;
    let last = out.log.last().unwrap().mean_loss;
    assert!(last < first, "loss {first} -> {last}");
}
