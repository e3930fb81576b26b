//! Splitting videos into fixed-length clips, averaging per-clip outputs, and cropping.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

fn dims4(video: &Tensor) -> Result<[usize; 4]> {
    match *video.shape() {
        [c, t, h, w] => Ok([c, t, h, w]),
        _ => Err(Error::InvalidArgument(format!(
            "video must be [c × t × h × w], got {:?}",
            video.shape()
        ))),
    }
}

/// Frames `[start, start + len)` of a `[c × t × h × w]` volume; indices past
/// the end repeat the last frame.
fn frames(video: &Tensor, start: usize, len: usize) -> Tensor {
    let [c, t, h, w] = *video.shape() else { unreachable!() };
    let frame = h * w;
    let mut out = Vec::with_capacity(c * len * frame);
    for ch in 0..c {
        for i in 0..len {
            let src = (start + i).min(t - 1);
            let base = (ch * t + src) * frame;
            out.extend_from_slice(&video.data()[base..base + frame]);
        }
    }
    Tensor::new(vec![c, len, h, w], out).expect("clip shape")
}

/// Non-overlapping clips of `clip_len` frames.
///
/// A trailing remainder shorter than half a clip is dropped; a longer one is
/// completed by repeating the last frame. A video shorter than one clip always
/// yields a single padded clip.
pub fn clip_split(video: &Tensor, clip_len: usize) -> Result<Vec<Tensor>> {
    let [_, t, _, _] = dims4(video)?;
    if clip_len == 0 {
        return Err(Error::InvalidArgument("clip length must be positive".into()));
    }
    if t == 0 || video.is_empty() {
        return Err(Error::Empty("video has no frames".into()));
    }
    let full = t / clip_len;
    let rem = t % clip_len;
    let mut clips: Vec<Tensor> = (0..full).map(|i| frames(video, i * clip_len, clip_len)).collect();
    if full == 0 || (rem > 0 && 2 * rem >= clip_len) {
        clips.push(frames(video, full * clip_len, clip_len));
    }
    Ok(clips)
}

/// Element-wise arithmetic mean of equally shaped vectors.
pub fn clip_average(items: &[Tensor]) -> Result<Tensor> {
    let Some(first) = items.first() else {
        return Err(Error::Empty("nothing to average".into()));
    };
    let mut sum = first.zeros_like();
    for t in items {
        sum.add_assign(t)?;
    }
    Ok(sum.scale(1.0 / items.len() as f64))
}

#[derive(Debug)]
pub enum Crop<'a> {
    Center,
    /// Uniformly placed window, used as training-time jitter.
    Random(&'a mut Rng),
}

/// Spatial crop of a `[c × t × h × w]` volume to `[c × t × out_h × out_w]`.
pub fn crop(video: &Tensor, out_h: usize, out_w: usize, mode: Crop<'_>) -> Result<Tensor> {
    let [c, t, h, w] = dims4(video)?;
    if out_h > h || out_w > w || out_h == 0 || out_w == 0 {
        return Err(Error::shape("crop", &[h, w], &[out_h, out_w]));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(video.clone());
    }
    let (top, left) = match mode {
        Crop::Center => ((h - out_h) / 2, (w - out_w) / 2),
        Crop::Random(rng) => (rng.below(h - out_h + 1), rng.below(w - out_w + 1)),
    };
    let mut out = Vec::with_capacity(c * t * out_h * out_w);
    for plane in 0..c * t {
        for r in top..top + out_h {
            let base = (plane * h + r) * w + left;
            out.extend_from_slice(&video.data()[base..base + out_w]);
        }
    }
    Tensor::new(vec![c, t, out_h, out_w], out)
}
