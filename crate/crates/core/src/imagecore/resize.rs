use super::{ImageDims, ImageF};

/// Zero-pads `img` to the aspect ratio of `target` (content centered),
/// then resamples bilinearly to exactly `target`.
pub fn pad_and_resize(img: &ImageF, target: ImageDims) -> ImageF {
    let (w, h) = (img.width(), img.height());
    let (tw, th) = (target.width, target.height);

    // canvas with the target aspect that just contains the input
    let (cw, ch) = if tw * h > th * w {
        (((h * tw) as f64 / th as f64).round() as usize, h)
    } else {
        (w, ((w * th) as f64 / tw as f64).round() as usize)
    };
    let (cw, ch) = (cw.max(w), ch.max(h));
    let (ox, oy) = ((cw - w) / 2, (ch - h) / 2);

    let canvas = |x: usize, y: usize| -> [f64; 3] {
        if x < ox || y < oy || x >= ox + w || y >= oy + h {
            [0.0; 3]
        } else {
            img.pixel(x - ox, y - oy)
        }
    };

    let sx = cw as f64 / tw as f64;
    let sy = ch as f64 / th as f64;
    let axis = |i: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, s - i0 as f64)
    };

    ImageF::from_fn(target, |x, y| {
        let (x0, x1, fx) = axis(x, sx, cw);
        let (y0, y1, fy) = axis(y, sy, ch);
        let (a, b, c, d) = (canvas(x0, y0), canvas(x1, y0), canvas(x0, y1), canvas(x1, y1));
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            out[k] = top + (bottom - top) * fy;
        }
        out
    })
}
