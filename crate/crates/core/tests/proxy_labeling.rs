use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transvqa::codec_pipeline::CorpusManifest;
use transvqa::evaluation::srocc;
use transvqa::proxy::{annotate, PsnrScorer};
use transvqa::synthetic::{make_synthetic_corpus, SyntheticSpec};
use transvqa::video_io::{sample_colocated_patches, Patch, Triplet};
use transvqa::{load_sequence, Lineage, PatchGeometry, Role, VideoSequence};

fn load(m: &CorpusManifest, id: &str) -> VideoSequence {
    load_sequence(&m.resolve(m.get(id).unwrap()), None, Lineage::source(id)).unwrap()
}

fn mse(a: &Patch, b: &Patch) -> f64 {
    a.data.iter().zip(&b.data).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / a.data.len() as f64
}

// Q̂ from a PSNR proxy should order patches by the distortion the transcode
// actually added.
#[test]
fn psnr_delta_tracks_added_distortion() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        n_sources: 6,
        width: 48,
        height: 48,
        frames: 4,
        reference_noise: vec![1.5],
        distortion_grid: vec![1.0, 2.0, 3.5, 5.0, 8.0, 12.0],
        seed: 11,
        ..SyntheticSpec::default()
    };
    let m = make_synthetic_corpus(dir.path(), &spec).unwrap();
    let g = PatchGeometry::new(2, 16, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut qhat, mut truth) = (Vec::new(), Vec::new());
    for d in m.with_role(Role::Transcoded) {
        let r = m.get(d.parent_id.as_deref().unwrap()).unwrap();
        let (sv, rv, dv) = (load(&m, r.parent_id.as_deref().unwrap()), load(&m, &r.id), load(&m, &d.id));
        let triplet = Triplet { source: Some(&sv), reference: &rv, transcoded: &dv };
        for p in sample_colocated_patches(&triplet, 4, rng.random(), g).unwrap() {
            qhat.push(annotate(&p, &PsnrScorer::default()).unwrap().delta);
            truth.push(mse(&p.ref_patch, &p.dist_patch));
        }
    }
    assert!(qhat.len() >= 100, "{} patches", qhat.len());
    let rho = srocc(&qhat, &truth).unwrap();
    assert!(rho >= 0.95, "SROCC {rho}");
}
