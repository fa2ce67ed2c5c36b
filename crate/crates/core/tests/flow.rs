use flowcut::flow::{flow_to_rgb, horn_schunck, warp_mask, FlowField, HsConfig, MaxMagnitude};
use flowcut::synth::Texture;
use flowcut::video::{Frame, SoftMask};

fn noise_frame(seed: u64, shift: f64) -> Frame {
    let tex = Texture::Noise { seed, amplitude: 0.4 };
    Frame::from_fn(64, 64, |y, x| tex.sample(x as f64 - shift, y as f64))
}

fn crop_mean(values: &[f32], h: usize, w: usize) -> f64 {
    let (y0, y1, x0, x1) = (h / 10, h - h / 10, w / 10, w - w / 10);
    let mut sum = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            sum += values[y * w + x] as f64;
        }
    }
    sum / ((y1 - y0) * (x1 - x0)) as f64
}

#[test]
fn zero_motion_gives_zero_flow() {
    let f = noise_frame(1, 0.0);
    let flow = horn_schunck(&f, &f, &HsConfig::default()).unwrap();
    assert!(flow.max_magnitude() <= 1e-3);
}

#[test]
fn two_pixel_shift_is_recovered() {
    for seed in 0..20 {
        let f1 = noise_frame(seed, 0.0);
        let f2 = noise_frame(seed, 2.0);
        let flow = horn_schunck(&f1, &f2, &HsConfig::default()).unwrap();
        let u = crop_mean(flow.u(), 64, 64);
        let v = crop_mean(flow.v(), 64, 64);
        assert!((1.6..=2.4).contains(&u), "seed {seed}: mean u {u}");
        assert!((-0.4..=0.4).contains(&v), "seed {seed}: mean v {v}");
    }
}

#[test]
fn flat_pair_has_no_flow() {
    let a = Frame::from_fn(32, 40, |_, _| [0.3, 0.6, 0.1]);
    let b = Frame::from_fn(32, 40, |_, _| [0.3, 0.6, 0.1]);
    let flow = horn_schunck(&a, &b, &HsConfig::default()).unwrap();
    assert!(flow.max_magnitude() <= 1e-3);
}

#[test]
fn mismatched_frames_are_rejected() {
    let a = Frame::from_fn(16, 16, |_, _| [0.0; 3]);
    let b = Frame::from_fn(16, 17, |_, _| [0.0; 3]);
    assert!(horn_schunck(&a, &b, &HsConfig::default()).is_err());
}

#[test]
fn estimated_flow_warps_the_object_mask_into_place() {
    let tex = Texture::Noise { seed: 4, amplitude: 0.4 };
    let inside = |y: f64, x: f64| (20.0..44.0).contains(&y) && (16.0..40.0).contains(&x);
    let frame = |dx: f64| Frame::from_fn(64, 64, |y, x| tex.sample(x as f64 - dx, y as f64));
    let mask = |dx: f64| {
        SoftMask::new(
            64,
            64,
            (0..64 * 64)
                .map(|i| inside((i / 64) as f64, (i % 64) as f64 - dx) as u8 as f64)
                .collect(),
        )
        .unwrap()
    };
    // global shift: flow 2 -> 1 carries mask 1 onto frame 2
    let flow_21 = horn_schunck(&frame(2.0), &frame(0.0), &HsConfig::default()).unwrap();
    let warped = warp_mask(&mask(0.0), &flow_21).unwrap();
    let target = mask(2.0);
    let err: f64 = warped.values().iter().zip(target.values()).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let moved: f64 = mask(0.0).values().iter().zip(target.values()).map(|(a, b)| (a - b).abs()).sum();
    assert!(err < 0.3 * moved, "warp error {err} vs unwarped {moved}");
}

#[test]
fn flow_rgb_of_a_field_is_a_valid_frame() {
    let flow = FlowField::new(2, 2, vec![1.0, 0.0, -1.0, 0.0], vec![0.0, 2.0, 0.0, 0.0]).unwrap();
    let rgb = flow_to_rgb(&flow, MaxMagnitude::Auto);
    assert_eq!(rgb.rgb(0, 1), [0.5, 1.0, 0.0]);
    assert_eq!(rgb.rgb(1, 1), [1.0, 1.0, 1.0]);
}
