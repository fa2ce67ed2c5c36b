use std::path::Path;

use flowcut::features::{decode_fgrd, encode_fgrd, read_fgrd, write_fgrd, FeatureGrid};
use flowcut::flow::{decode_flo, encode_flo, read_flo, write_flo, FlowField};
use flowcut::netpbm::{decode, encode, frame_to_bytes, load_frame, load_mask, mask_to_bytes, save_frame, save_mask};
use flowcut::refine::{decode_seghead, encode_seghead, read_seghead, write_seghead, SegHead, PARAM_COUNT};
use flowcut::video::{BinaryMask, Frame};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(64)
    }
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..12, 1usize..12)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn flo_round_trip((h, w) in dims(), seed in any::<u64>()) {
        let mut r = flowcut::rng::SplitMix64::new(seed);
        let n = h * w;
        let mut draw = || (0..n).map(|_| (r.gaussian() * 10.0) as f32).collect::<Vec<_>>();
        let flow = FlowField::new(h, w, draw(), draw()).unwrap();
        let bytes = encode_flo(&flow);
        let back = decode_flo(&bytes, Path::new("x.flo")).unwrap();
        prop_assert_eq!(&back, &flow);
        prop_assert_eq!(encode_flo(&back), bytes);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.flo");
        write_flo(&flow, &p).unwrap();
        prop_assert_eq!(read_flo(&p).unwrap(), flow);
    }

    #[test]
    fn ppm_round_trip((h, w) in dims(), data in prop::collection::vec(any::<u8>(), 3 * 11 * 11)) {
        let data = &data[..3 * h * w];
        let bytes = encode(b"P6", w, h, data);
        let raster = decode(&bytes, Path::new("x.ppm")).unwrap();
        prop_assert_eq!(&raster.data[..], data);
        let frame = Frame::new(h, w, data.iter().map(|&b| b as f64 / 255.0).collect()).unwrap();
        prop_assert_eq!(frame_to_bytes(&frame), bytes.clone());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.ppm");
        save_frame(&frame, &p).unwrap();
        prop_assert_eq!(std::fs::read(&p).unwrap(), bytes);
        prop_assert_eq!(load_frame(&p).unwrap(), frame);
    }

    #[test]
    fn pgm_round_trip((h, w) in dims(), bits in prop::collection::vec(any::<bool>(), 121)) {
        let mask = BinaryMask::new(h, w, bits[..h * w].to_vec()).unwrap();
        let bytes = mask_to_bytes(&mask);
        let raster = decode(&bytes, Path::new("m.pgm")).unwrap();
        prop_assert_eq!(encode(b"P5", raster.width, raster.height, &raster.data), bytes.clone());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        save_mask(&mask, &p).unwrap();
        prop_assert_eq!(std::fs::read(&p).unwrap(), bytes);
        prop_assert_eq!(load_mask(&p).unwrap(), mask);
    }

    #[test]
    fn fgrd_round_trip(rows in 1usize..6, cols in 1usize..6, dim in 1usize..13, seed in any::<u64>()) {
        let mut r = flowcut::rng::SplitMix64::new(seed);
        let data = (0..rows * cols * dim).map(|_| r.gaussian() as f32).collect();
        let grid = FeatureGrid::new(rows, cols, dim, data).unwrap();
        let bytes = encode_fgrd(&grid);
        let back = decode_fgrd(&bytes, Path::new("g")).unwrap();
        prop_assert_eq!(&back, &grid);
        prop_assert_eq!(encode_fgrd(&back), bytes);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.fgrd");
        write_fgrd(&grid, &p).unwrap();
        prop_assert_eq!(read_fgrd(&p).unwrap(), grid);
    }

    #[test]
    fn segh_round_trip(seed in any::<u64>()) {
        let mut r = flowcut::rng::SplitMix64::new(seed);
        let params = (0..PARAM_COUNT).map(|_| r.gaussian() as f32 as f64).collect();
        let head = SegHead::from_params(params).unwrap();
        let bytes = encode_seghead(&head);
        let back = decode_seghead(&bytes, Path::new("h")).unwrap();
        prop_assert_eq!(&back, &head);
        prop_assert_eq!(encode_seghead(&back), bytes);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.bin");
        write_seghead(&head, &p).unwrap();
        prop_assert_eq!(read_seghead(&p).unwrap(), head);
    }
}
