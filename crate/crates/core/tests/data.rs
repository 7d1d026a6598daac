use std::collections::HashSet;

use cascast::data::*;
use cascast::Tensor4;
use proptest::prelude::*;

fn frame(h: usize, w: usize, salt: usize) -> Tensor4 {
    Tensor4::from_fn([1, 3, h, w], |_, c, y, x| ((c * 31 + y * 7 + x * 3 + salt) % 97) as f32 / 96.0)
}

fn extent_and_tile() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=100).prop_flat_map(|n| (Just(n), 1..=(2 * n).min(100)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn tiles_round_trip((h, th) in extent_and_tile(), (w, tw) in extent_and_tile(), salt in 0usize..97) {
        let grid = plan_tiles(h, w, th, tw).unwrap();
        prop_assert_eq!(grid.rows, h.div_ceil(th));
        prop_assert_eq!(grid.cols, w.div_ceil(tw));
        prop_assert!(grid.pad_h < th && grid.pad_w < tw);
        prop_assert_eq!(grid.rows * th, h + grid.pad_h);
        prop_assert_eq!(grid.cols * tw, w + grid.pad_w);
        let f = frame(h, w, salt);
        let tiles = tile_split(&f, &grid).unwrap();
        let back = tile_join(&tiles, &grid).unwrap();
        prop_assert_eq!(back.data(), f.data());
        let mut valid = 0;
        for i in 0..grid.rows {
            for j in 0..grid.cols {
                let (vh, vw) = grid.valid_extent(i, j);
                valid += vh * vw;
                let t = &tiles[i][j];
                for c in 0..3 {
                    for y in 0..th {
                        for x in 0..tw {
                            let expect = if y < vh && x < vw { f.at(0, c, i * th + y, j * tw + x) } else { 0.0 };
                            prop_assert_eq!(t.at(0, c, y, x), expect);
                        }
                    }
                }
            }
        }
        prop_assert_eq!(valid, h * w);
    }
}

#[test]
fn batching_partitions_every_window_once() {
    let seq = FrameSequence::from_pixels(0, 5, 10, 10, (0..20).map(|t| frame(10, 10, t)).collect()).unwrap();
    let grid = plan_tiles(10, 10, 4, 4).unwrap();
    let ds = TiledDataset::new(&[seq.clone()], grid).unwrap();
    let (in_len, out_len) = (4, 2);
    for &(batch, seed) in &[(1, 0), (3, 1), (4, 7), (64, 2)] {
        let stream = make_batches(&ds, in_len, out_len, batch, seed).unwrap();
        let mut seen = HashSet::new();
        let mut per_tile = 0;
        for b in stream.plan() {
            assert!(!b.is_empty() && b.len() <= batch);
            assert!(b.iter().all(|w| w.tile == b[0].tile));
            for w in b {
                assert!(seen.insert((w.tile, w.sequence, w.start)), "duplicate {w:?}");
            }
            per_tile += 1;
        }
        assert_eq!(seen.len(), 9 * (20 - in_len - out_len + 1));
        assert_eq!(per_tile, stream.num_batches());
        for b in make_batches(&ds, in_len, out_len, batch, seed).unwrap() {
            for (k, w) in b.windows.iter().enumerate() {
                let tiles = tile_split(seq.pixels(w.start + in_len), &grid).unwrap();
                assert_eq!(b.targets[0].sample(k), tiles[w.tile.0][w.tile.1].data());
            }
        }
    }
}

#[test]
fn batch_order_depends_only_on_seed() {
    let seq = FrameSequence::from_pixels(0, 5, 8, 8, (0..12).map(|t| frame(8, 8, t)).collect()).unwrap();
    let ds = TiledDataset::new(&[seq], plan_tiles(8, 8, 4, 4).unwrap()).unwrap();
    let a = make_batches(&ds, 3, 2, 3, 9).unwrap().plan().to_vec();
    let b = make_batches(&ds, 3, 2, 3, 9).unwrap().plan().to_vec();
    let c = make_batches(&ds, 3, 2, 3, 10).unwrap().plan().to_vec();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn frame_files_round_trip() {
    let seq = synth_generate(&SynthConfig {
        height: 9,
        width: 11,
        num_frames: 7,
        start_timestamp: 60,
        stride_minutes: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.trf");
    save_frames(&seq, &path).unwrap();
    let back = load_frames(&path).unwrap();
    assert_eq!(back, seq);
    assert_eq!(frames_to_bytes(&back), std::fs::read(&path).unwrap());
    assert_eq!(back.index_of(70), Some(2));
}

#[test]
fn manifest_round_trips() {
    let m = Manifest {
        entries: Split::ALL
            .iter()
            .map(|&split| ManifestEntry {
                city: "x".into(),
                path: format!("{}.trf", split.name()).into(),
                split,
            })
            .collect(),
    };
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("manifest.toml");
    m.save(&p).unwrap();
    assert_eq!(Manifest::load(&p).unwrap(), m);
}

#[test]
fn single_blob_centroid_follows_its_road() {
    let cfg = SynthConfig {
        height: 48,
        width: 48,
        num_frames: 60,
        num_roads: 1,
        num_blobs: 1,
        max_turns: 0,
        diurnal_period: 0,
        seed: 3,
        ..SynthConfig::default()
    };
    let scene = SynthScene::build(&cfg).unwrap();
    let seq = scene.generate().unwrap();
    let road = &scene.roads[0];
    assert_eq!(road.vertices.len(), 2);
    let (a, b) = (road.vertices[0], road.vertices[1]);
    let len = ((b.0 - a.0).abs() + (b.1 - a.1).abs()) as f64;
    let dir = (((b.0 - a.0) as f64) / len, ((b.1 - a.1) as f64) / len);
    let blob = &scene.blobs[0];
    let margin = 4.0 * cfg.blob_sigma;
    let mut checked = 0;
    for t in 0..cfg.num_frames {
        let arc = (blob.arc0 + blob.velocity * t as f64).rem_euclid(len);
        if arc < margin || arc > len - margin {
            continue;
        }
        let expect = (a.0 as f64 + dir.0 * arc, a.1 as f64 + dir.1 * arc);
        let vol = seq.pixels(t);
        let (mut m, mut sy, mut sx) = (0.0f64, 0.0f64, 0.0f64);
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let v = vol.at(0, 1, y, x) as f64;
                m += v;
                sy += v * y as f64;
                sx += v * x as f64;
            }
        }
        let (cy, cx) = (sy / m, sx / m);
        assert!(
            (cy - expect.0).abs() < 0.1 && (cx - expect.1).abs() < 0.1,
            "t={t}: centroid ({cy:.3}, {cx:.3}) vs ({:.3}, {:.3})",
            expect.0,
            expect.1
        );
        checked += 1;
    }
    assert!(checked > 10, "only {checked} frames away from the road ends");
}
