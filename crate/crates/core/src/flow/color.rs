use super::FlowField;
use crate::video::Frame;

/// Saturation scale for [`flow_to_rgb`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxMagnitude {
    Fixed(f64),
    /// Largest magnitude in the field, floored at `1e-6`.
    Auto,
}

/// Colour-wheel rendering: hue is the flow direction, saturation the
/// magnitude relative to `max_mag`, value is always 1.
pub fn flow_to_rgb(flow: &FlowField, max_mag: MaxMagnitude) -> Frame {
    let scale = match max_mag {
        MaxMagnitude::Fixed(m) => {
            assert!(m > 0.0, "max magnitude must be positive");
            m
        }
        MaxMagnitude::Auto => flow.max_magnitude().max(1e-6),
    };
    Frame::from_fn(flow.height(), flow.width(), |y, x| {
        let (u, v) = flow.at(y, x);
        let (u, v) = (u as f64, v as f64);
        let mut hue = v.atan2(u).to_degrees();
        if hue < 0.0 {
            hue += 360.0;
        }
        if hue >= 360.0 {
            hue -= 360.0;
        }
        let sat = (u.hypot(v) / scale).min(1.0);
        hsv_to_rgb(hue, sat, 1.0)
    })
}

/// Six-sector HSV to RGB; `hue` in degrees `[0, 360)`.
pub fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [f64; 3] {
    let h = hue / 60.0;
    let sector = h.floor();
    let f = h - sector;
    let p = val * (1.0 - sat);
    let q = val * (1.0 - sat * f);
    let t = val * (1.0 - sat * (1.0 - f));
    match (sector as i64).rem_euclid(6) {
        0 => [val, t, p],
        1 => [q, val, p],
        2 => [p, val, t],
        3 => [p, q, val],
        4 => [t, p, val],
        _ => [val, p, q],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(u: f32, v: f32, m: MaxMagnitude) -> [f64; 3] {
        flow_to_rgb(&FlowField::constant(1, 1, u, v), m).rgb(0, 0)
    }

    #[test]
    fn wheel_examples() {
        assert_eq!(one(0.0, 0.0, MaxMagnitude::Auto), [1.0, 1.0, 1.0]);
        assert_eq!(one(3.0, 0.0, MaxMagnitude::Fixed(3.0)), [1.0, 0.0, 0.0]);
        let c = one(0.0, 3.0, MaxMagnitude::Fixed(3.0));
        assert!((c[0] - 0.5).abs() < 1e-12 && c[1] == 1.0 && c[2] == 0.0);
    }

    #[test]
    fn saturation_grows_with_magnitude() {
        let dir = (0.6f32, -0.8f32);
        let mut last_min = 1.0;
        for k in 0..40 {
            let s = k as f32 * 0.1;
            let c = one(dir.0 * s, dir.1 * s, MaxMagnitude::Fixed(2.5));
            let min = c.iter().cloned().fold(1.0, f64::min);
            // with value 1, saturation = 1 - min channel
            assert!(min <= last_min + 1e-12);
            last_min = min;
        }
    }
}
