use std::collections::BTreeMap;

use intrinsic_core::data::{gen_mondrian, gen_real_pair, MondrianConfig};
use intrinsic_core::image::{ImageF, IntrinsicTriplet, RealSceneGroup};
use intrinsic_core::network::{IntrinsicNet, NetConfig};
use intrinsic_core::train::{
    sample_real_pair_batch, sample_synthetic_batch, train_stage1, TrainConfig, TrainError, Trainer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(seed: u64) -> MondrianConfig {
    MondrianConfig {
        width: 16,
        height: 16,
        seed,
        ..MondrianConfig::default()
    }
}

fn tiny_net() -> IntrinsicNet {
    IntrinsicNet::new(NetConfig {
        levels: 2,
        base_channels: 4,
        seed: 3,
        ..NetConfig::default()
    })
    .unwrap()
}

fn synthetic(n: u64) -> Vec<IntrinsicTriplet> {
    (0..n).map(|s| gen_mondrian(&small(s))).collect()
}

fn groups(n: u64) -> Vec<RealSceneGroup> {
    (0..n)
        .map(|s| gen_real_pair(&small(90 + s), 3).unwrap().0)
        .collect()
}

fn config() -> TrainConfig {
    TrainConfig {
        crop: 16,
        stage1_iters: 4,
        stage2_iters: 2,
        stage1_batch: 2,
        stage2_batch: 4,
        stage2_synthetic: 2,
        stage2_real: 2,
        seed: 5,
        ..TrainConfig::default()
    }
}

/// Pixel value encodes the image index and position.
fn ramp(k: usize, w: usize, h: usize) -> ImageF {
    ImageF::from_fn(w, h, 3, |x, y, c| {
        (k + 1) as f64 * (1.0 + x as f64 + 100.0 * y as f64) + 0.1 * c as f64
    })
}

#[test]
fn ordered_pairs_are_uniform() {
    let g = vec![RealSceneGroup::new("g", (0..3).map(|k| ramp(k, 8, 8)).collect()).unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let draws = 10_000;
    for _ in 0..draws / 100 {
        for p in sample_real_pair_batch(&g, 100, 4, 0.0, &mut rng)
            .unwrap()
            .picks
        {
            assert_ne!(p.images.0, p.images.1);
            *counts.entry(p.images).or_default() += 1;
        }
    }
    assert_eq!(counts.len(), 6);
    for (pair, n) in counts {
        let f = n as f64 / draws as f64;
        assert!((f - 1.0 / 6.0).abs() <= 0.02, "pair {pair:?} frequency {f}");
    }
}

#[test]
fn pair_crops_share_one_window() {
    let (w, h, size) = (20, 14, 6);
    let g = vec![RealSceneGroup::new("g", (0..3).map(|k| ramp(k, w, h)).collect()).unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = sample_real_pair_batch(&g, 32, size, 0.5, &mut rng).unwrap();
    for (i, p) in batch.picks.iter().enumerate() {
        let (a, b) = (&batch.guides1[i], &batch.guides2[i]);
        let corner = if p.flipped { (size - 1, 0) } else { (0, 0) };
        let expect = |k: usize| ramp(k, w, h).get(p.x, p.y, 0);
        assert_eq!(a.get(corner.0, corner.1, 0), expect(p.images.0));
        assert_eq!(b.get(corner.0, corner.1, 0), expect(p.images.1));
        assert_eq!(
            batch.first.batch_item(i),
            ImageF::to_tensor(&[a]).unwrap().data()
        );
        assert_eq!(
            batch.second.batch_item(i),
            ImageF::to_tensor(&[b]).unwrap().data()
        );
    }
}

#[test]
fn synthetic_crops_keep_the_product() {
    let data = synthetic(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = sample_synthetic_batch(&data, 6, 8, 0.5, &mut rng).unwrap();
    let plane = 64;
    for n in 0..6 {
        let (i, r, s) = (
            b.input.batch_item(n),
            b.reflectance.batch_item(n),
            b.shading.batch_item(n),
        );
        for c in 0..3 {
            for k in 0..plane {
                assert!((i[c * plane + k] - r[c * plane + k] * s[k]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn crop_larger_than_images_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    assert!(matches!(
        sample_synthetic_batch(&synthetic(1), 1, 32, 0.0, &mut rng),
        Err(TrainError::Config(_))
    ));
}

#[test]
fn replayed_losses_match_training_reports() {
    let data = synthetic(4);
    let g = groups(2);
    let mut t = Trainer::new(tiny_net(), config());
    for _ in 0..3 {
        let batch = t.next_synthetic_batch(&data, 2).unwrap();
        let replay = t.synthetic_loss_of(&batch).unwrap();
        let trained = t.train_on_synthetic(&batch).unwrap();
        assert!((replay.total - trained.total).abs() <= 1e-10);
    }
    let syn = t.next_synthetic_batch(&data, 2).unwrap();
    let pairs = t.next_pair_batch(&g, 2).unwrap();
    let replay = t.mixed_loss_of(&syn, &pairs).unwrap();
    let trained = t.train_on_mixed(&syn, &pairs).unwrap().unwrap();
    assert!((replay.total - trained.total).abs() <= 1e-10);
    assert!(trained.e_real.is_some());
}

#[test]
fn zero_iterations_change_nothing() {
    let net = tiny_net();
    let cfg = TrainConfig {
        stage1_iters: 0,
        ..config()
    };
    let (out, log) = train_stage1(net.clone(), &synthetic(2), &cfg).unwrap();
    assert!(log.entries.is_empty());
    assert_eq!(out.to_bytes(), net.to_bytes());
}

#[test]
fn training_is_seed_deterministic() {
    let data = synthetic(4);
    let g = groups(2);
    let run = |seed: u64| {
        let mut t = Trainer::new(tiny_net(), TrainConfig { seed, ..config() });
        let l1 = t.run_stage1(&data, |_| {}).unwrap();
        let l2 = t.run_stage2(&data, &g, |_| {}).unwrap();
        let totals: Vec<f64> = l1
            .entries
            .iter()
            .chain(&l2.entries)
            .map(|e| e.total)
            .collect();
        (t.net.to_bytes(), totals)
    };
    let (a, b, c) = (run(5), run(5), run(6));
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn omega_zero_reduces_to_synthetic_loss() {
    let data = synthetic(3);
    let g = groups(2);
    let mut t = Trainer::new(
        tiny_net(),
        TrainConfig {
            omega: 0.0,
            ..config()
        },
    );
    let syn = t.next_synthetic_batch(&data, 2).unwrap();
    let pairs = t.next_pair_batch(&g, 2).unwrap();
    let r = t.mixed_loss_of(&syn, &pairs).unwrap();
    assert!(r.e_real.unwrap() > 0.0);
    assert!((r.total - r.e_syn.unwrap()).abs() <= 1e-15);
}

#[test]
fn stage2_without_groups_needs_synthetic_only_mode() {
    let data = synthetic(2);
    let mut t = Trainer::new(tiny_net(), config());
    assert!(matches!(
        t.run_stage2(&data, &[], |_| {}),
        Err(TrainError::Config(_))
    ));
    t.config.stage2_real = 0;
    t.config.stage2_batch = 2;
    let log = t.run_stage2(&data, &[], |_| {}).unwrap();
    assert_eq!(log.entries.len(), 2);
    assert!(log.entries.iter().all(|e| e.e_real.is_none()));
}

#[test]
fn log_is_jsonl_with_one_line_per_step() {
    let mut t = Trainer::new(tiny_net(), config());
    let log = t.run_stage1(&synthetic(2), |_| {}).unwrap();
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3]["iter"], 4);
    assert!(lines[0]["e_real"].is_null());
}

#[test]
fn checkpoints_are_written_periodically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        checkpoint_every: 2,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..config()
    };
    let (net, _) = train_stage1(tiny_net(), &synthetic(2), &cfg).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["stage1_iter000002.ckpt", "stage1_iter000004.ckpt"]);
    let last = IntrinsicNet::load(&dir.path().join(&names[1])).unwrap();
    assert_eq!(last.to_bytes(), net.to_bytes());
}

#[test]
fn invalid_crop_is_a_config_error() {
    let cfg = TrainConfig {
        crop: 15,
        ..config()
    };
    assert!(matches!(
        train_stage1(tiny_net(), &synthetic(1), &cfg),
        Err(TrainError::Config(_))
    ));
}
