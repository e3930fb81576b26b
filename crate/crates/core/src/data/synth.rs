//! Synthetic two-modality action data.
//!
//! Skeleton classes differ only in the *order* in which three joint groups
//! perform the same up-and-back motion, spread over the whole sequence, so a
//! short window shows a motion primitive shared by every class. Video classes
//! differ in the orientation and drift direction of a moving grating, which
//! any two frames reveal. Class pairs listed in `skeleton_shared` get the same
//! skeleton signature (video still tells them apart) and pairs in
//! `video_shared` the same video signature.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Joint groups; joint `j` belongs to group `j % GROUPS`.
const GROUPS: usize = 3;
/// Motion phases cover `[PHASE_START, PHASE_END]` of normalized time.
const PHASE_START: f64 = 0.05;
const PHASE_END: f64 = 0.95;
const BASE_AMPLITUDE: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub t_min: usize,
    pub t_max: usize,
    /// Joints per person.
    pub joints: usize,
    pub persons: usize,
    pub subjects: usize,
    pub views: usize,
    /// `[C, T, H, W]`.
    pub video: [usize; 4],
    /// Std-dev of additive joint noise, in meters.
    pub skeleton_noise: f64,
    /// Std-dev of additive pixel noise.
    pub video_noise: f64,
    /// Short off-signature twitches added to each skeleton track.
    pub distractors: usize,
    pub skeleton_shared: Vec<(usize, usize)>,
    pub video_shared: Vec<(usize, usize)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 6,
            per_class: 60,
            t_min: 24,
            t_max: 48,
            joints: 6,
            persons: 1,
            subjects: 10,
            views: 3,
            video: [3, 16, 16, 16],
            skeleton_noise: 0.02,
            video_noise: 0.1,
            distractors: 2,
            skeleton_shared: vec![(0, 1)],
            video_shared: vec![(2, 3)],
        }
    }
}

/// Order of joint groups plus a per-group motion sign.
#[derive(Clone, Copy, Debug, PartialEq)]
struct SkeletonSignature {
    order: [usize; GROUPS],
    signs: [f64; GROUPS],
}

fn skeleton_catalogue() -> Vec<SkeletonSignature> {
    const ORDERS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::new();
    for flips in 0..8u32 {
        let signs = [0, 1, 2].map(|g| if flips >> g & 1 == 1 { -1.0 } else { 1.0 });
        out.extend(ORDERS.iter().map(|&order| SkeletonSignature { order, signs }));
    }
    out
}

/// Grating orientation (radians) and drift direction.
#[derive(Clone, Copy, Debug, PartialEq)]
struct VideoSignature {
    angle: f64,
    drift: f64,
}

fn video_catalogue() -> Vec<VideoSignature> {
    let angles = [0.0, 0.5 * PI, 0.25 * PI, 0.75 * PI];
    [1.0, -1.0]
        .iter()
        .flat_map(|&drift| angles.iter().map(move |&angle| VideoSignature { angle, drift }))
        .collect()
}

/// Signature index per class: classes joined by `shared` pairs (transitively)
/// get the same index; indices are assigned in order of the lowest class.
fn assign(classes: usize, shared: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..classes).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    for &(a, b) in shared {
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        parent[ra.max(rb)] = ra.min(rb);
    }
    let mut ids = vec![usize::MAX; classes];
    let mut next = 0;
    for k in 0..classes {
        let r = root(&mut parent, k);
        if ids[r] == usize::MAX {
            ids[r] = next;
            next += 1;
        }
        ids[k] = ids[r];
    }
    ids
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.classes < 2 || self.per_class == 0 {
            return bad(format!("need ≥ 2 classes and ≥ 1 sample per class, got {} and {}", self.classes, self.per_class));
        }
        if self.t_min == 0 || self.t_min > self.t_max {
            return bad(format!("bad length range [{}, {}]", self.t_min, self.t_max));
        }
        if self.joints < GROUPS || self.persons == 0 {
            return bad(format!("need ≥ {GROUPS} joints and ≥ 1 person"));
        }
        if self.subjects == 0 || self.views == 0 {
            return bad("need ≥ 1 subject and ≥ 1 view".into());
        }
        if self.video.contains(&0) {
            return bad(format!("video extents must be positive, got {:?}", self.video));
        }
        if !(self.skeleton_noise >= 0.0 && self.video_noise >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        for &(a, b) in self.skeleton_shared.iter().chain(&self.video_shared) {
            if a >= self.classes || b >= self.classes || a == b {
                return bad(format!("bad shared pair ({a}, {b}) for {} classes", self.classes));
            }
        }
        let skel = assign(self.classes, &self.skeleton_shared);
        let vid = assign(self.classes, &self.video_shared);
        for a in 0..self.classes {
            for b in a + 1..self.classes {
                if skel[a] == skel[b] && vid[a] == vid[b] {
                    return bad(format!("classes {a} and {b} share both signatures"));
                }
            }
        }
        let need_skel = skel.iter().max().map_or(0, |m| m + 1);
        let need_vid = vid.iter().max().map_or(0, |m| m + 1);
        if need_skel > skeleton_catalogue().len() || need_vid > video_catalogue().len() {
            return bad(format!("{need_skel} skeleton / {need_vid} video signatures exceed the catalogue"));
        }
        Ok(())
    }
}

/// Per-subject traits, shared by all of that subject's samples.
struct Subject {
    scale: f64,
    brightness: f64,
    tempo: f64,
}

fn subject_traits(rng: &Rng, subject: usize) -> Subject {
    let mut r = rng.fork(0x5B_0000 + subject as u64);
    Subject {
        scale: r.uniform_range(0.85, 1.15),
        brightness: r.uniform_range(-0.08, 0.08),
        tempo: r.uniform_range(-0.08, 0.08),
    }
}

fn bump(tau: f64, start: f64, end: f64) -> f64 {
    if tau <= start || tau >= end {
        0.0
    } else {
        (PI * (tau - start) / (end - start)).sin().powi(2)
    }
}

/// Unit direction in which group `g` moves before view rotation.
fn group_axis(g: usize) -> [f64; 3] {
    match g {
        0 => [0.0, 1.0, 0.0],
        1 => [1.0, 0.0, 0.0],
        _ => [0.0, 0.0, 1.0],
    }
}

fn skeleton_track(cfg: &SynthConfig, sig: SkeletonSignature, subject: &Subject, view: usize, rng: &mut Rng) -> Tensor {
    let t_len = cfg.t_min + rng.below(cfg.t_max - cfg.t_min + 1);
    let j_total = cfg.joints * cfg.persons;
    let amplitude = BASE_AMPLITUDE * subject.scale * rng.uniform_range(0.7, 1.3);
    let yaw = (view as f64 - (cfg.views as f64 - 1.0) / 2.0) * PI / 4.0 + rng.uniform_range(-0.17, 0.17);
    let (sin_y, cos_y) = yaw.sin_cos();
    let warp = subject.tempo + rng.uniform_range(-0.1, 0.1);
    let origin = [rng.uniform_range(-0.5, 0.5), 0.0, rng.uniform_range(2.0, 3.5)];
    let drift = [rng.uniform_range(-0.1, 0.1), 0.0, rng.uniform_range(-0.1, 0.1)];

    let twitches: Vec<(usize, f64, f64)> = (0..cfg.distractors)
        .map(|_| {
            let g = rng.below(GROUPS);
            let start = rng.uniform_range(0.0, 0.85);
            let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            (g, start, sign * rng.uniform_range(0.2, 0.4))
        })
        .collect();

    let phase_len = (PHASE_END - PHASE_START) / GROUPS as f64;
    let mut data = Vec::with_capacity(t_len * j_total * 3);
    for t in 0..t_len {
        let tau = if t_len == 1 { 0.5 } else { t as f64 / (t_len - 1) as f64 };
        let tau = tau + warp * (PI * tau).sin();
        // Displacement magnitude of each group at this time.
        let mut group_disp = [0.0; GROUPS];
        for (phase, &g) in sig.order.iter().enumerate() {
            let start = PHASE_START + phase as f64 * phase_len;
            group_disp[g] += sig.signs[g] * amplitude * bump(tau, start, start + phase_len);
        }
        for &(g, start, amp) in &twitches {
            group_disp[g] += amp * amplitude * bump(tau, start, start + 0.1);
        }
        for person in 0..cfg.persons {
            for j in 0..cfg.joints {
                let a = 2.0 * PI * j as f64 / cfg.joints as f64;
                let g = j % GROUPS;
                let axis = group_axis(g);
                let mut p = [
                    0.3 * a.cos() + 0.8 * person as f64,
                    0.9 + 0.6 * a.sin(),
                    0.0,
                ];
                for (c, v) in p.iter_mut().enumerate() {
                    *v = *v * subject.scale + group_disp[g] * axis[c];
                }
                // Yaw about the vertical axis, then place in the camera frame.
                let x = cos_y * p[0] + sin_y * p[2];
                let z = -sin_y * p[0] + cos_y * p[2];
                let frac = t as f64 / t_len as f64;
                data.push(origin[0] + drift[0] * frac + x + cfg.skeleton_noise * rng.normal());
                data.push(origin[1] + p[1] + cfg.skeleton_noise * rng.normal());
                data.push(origin[2] + drift[2] * frac + z + cfg.skeleton_noise * rng.normal());
            }
        }
    }
    Tensor::new(vec![t_len, j_total, 3], data).expect("skeleton extents")
}

fn video_volume(cfg: &SynthConfig, sig: VideoSignature, subject: &Subject, view: usize, rng: &mut Rng) -> Tensor {
    let [c_n, t_n, h_n, w_n] = cfg.video;
    let freq = 0.125 * rng.uniform_range(0.9, 1.1) * (1.0 + 0.08 * view as f64);
    let speed = 0.125 * rng.uniform_range(0.8, 1.2);
    let phase = rng.uniform_range(0.0, 2.0 * PI);
    let contrast = rng.uniform_range(0.25, 0.4);
    let gains: Vec<f64> = (0..c_n).map(|_| rng.uniform_range(0.8, 1.2)).collect();
    let (sin_a, cos_a) = sig.angle.sin_cos();
    let mut data = Vec::with_capacity(c_n * t_n * h_n * w_n);
    for gain in &gains {
        for t in 0..t_n {
            for y in 0..h_n {
                for x in 0..w_n {
                    let u = x as f64 * cos_a + y as f64 * sin_a;
                    let wave = (2.0 * PI * (freq * u - sig.drift * speed * t as f64) + phase).sin();
                    let v = 0.5 + subject.brightness + gain * contrast * wave + cfg.video_noise * rng.normal();
                    // Stored as f32 on disk; round here so files round-trip exactly.
                    data.push(v.clamp(0.0, 1.0) as f32 as f64);
                }
            }
        }
    }
    Tensor::new(cfg.video.to_vec(), data).expect("video extents")
}

/// Generates `classes × per_class` paired samples. Sample `i` of class `k`
/// has id `k·per_class + i`, subject `i mod subjects` and view
/// `(i / subjects) mod views`. Every sample draws from its own forked stream.
pub fn generate_synthetic(cfg: &SynthConfig, rng: &mut Rng) -> Result<Dataset> {
    cfg.validate()?;
    let skel_ids = assign(cfg.classes, &cfg.skeleton_shared);
    let vid_ids = assign(cfg.classes, &cfg.video_shared);
    let skel_cat = skeleton_catalogue();
    let vid_cat = video_catalogue();
    let base = Rng::new(rng.next_u64());
    let subjects: Vec<Subject> = (0..cfg.subjects).map(|s| subject_traits(&base, s)).collect();
    let mut samples = Vec::with_capacity(cfg.classes * cfg.per_class);
    for label in 0..cfg.classes {
        for i in 0..cfg.per_class {
            let id = label * cfg.per_class + i;
            let subject = i % cfg.subjects;
            let view = (i / cfg.subjects) % cfg.views;
            let mut r = base.fork(id as u64 + 1);
            let skeleton = skeleton_track(cfg, skel_cat[skel_ids[label]], &subjects[subject], view, &mut r);
            let video = video_volume(cfg, vid_cat[vid_ids[label]], &subjects[subject], view, &mut r);
            samples.push(Sample {
                id,
                label,
                subject,
                view,
                skeleton,
                video,
            });
        }
    }
    Ok(Dataset {
        classes: cfg.classes,
        samples,
    })
}
