//! Dataset directory: `manifest.tsv` plus one TSR1 file per modality and sample.

use std::fs;
use std::path::Path;

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::io::{read_tsr1, write_tsr1, Dtype};

pub const MANIFEST: &str = "manifest.tsv";
const HEADER: &str = "id\tlabel\tsubject\tview\tskeleton\tvideo";

/// Skeletons are stored as f64, videos as f32 (pixel values are generated
/// f32-exact, so both round-trip bit for bit). The class count goes in a
/// leading `# classes=K` comment line.
pub fn save_dataset(dir: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("skeleton"))?;
    fs::create_dir_all(dir.join("video"))?;
    let mut manifest = format!("# classes={}\n{HEADER}\n", dataset.classes);
    for s in &dataset.samples {
        let skel = format!("skeleton/{:06}.tsr", s.id);
        let vid = format!("video/{:06}.tsr", s.id);
        write_tsr1(dir.join(&skel), &s.skeleton, Dtype::F64)?;
        write_tsr1(dir.join(&vid), &s.video, Dtype::F32)?;
        manifest.push_str(&format!("{}\t{}\t{}\t{}\t{skel}\t{vid}\n", s.id, s.label, s.subject, s.view));
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let bad = |reason: String| Error::format("dataset manifest", reason);
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let mut lines = text.lines();
    let classes: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("# classes="))
        .and_then(|k| k.parse().ok())
        .ok_or_else(|| bad("missing `# classes=K` line".into()))?;
    if lines.next() != Some(HEADER) {
        return Err(bad("missing column header".into()));
    }
    let mut samples = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, label, subject, view, skel, vid] = cols[..] else {
            return Err(bad(format!("row {} has {} columns", n + 1, cols.len())));
        };
        let num = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("row {}: bad number `{v}`", n + 1)));
        let label = num(label)?;
        if label >= classes {
            return Err(Error::Label { label, classes });
        }
        let skeleton = read_tsr1(dir.join(skel))?;
        let video = read_tsr1(dir.join(vid))?;
        if skeleton.ndim() != 3 || skeleton.shape()[0] == 0 || skeleton.shape()[2] != 3 || video.ndim() != 4 {
            return Err(bad(format!("row {}: skeleton {:?} / video {:?}", n + 1, skeleton.shape(), video.shape())));
        }
        samples.push(Sample {
            id: num(id)?,
            label,
            subject: num(subject)?,
            view: num(view)?,
            skeleton,
            video,
        });
    }
    if samples.is_empty() {
        return Err(Error::Empty(format!("dataset at {}", dir.display())));
    }
    Ok(Dataset { classes, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::rng::Rng;

    fn cfg() -> SynthConfig {
        SynthConfig {
            per_class: 3,
            video: [3, 4, 6, 6],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_synthetic(&cfg(), &mut Rng::new(4)).unwrap();
        save_dataset(dir.path(), &d).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), d);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for dir in [&a, &b] {
            save_dataset(dir.path(), &generate_synthetic(&cfg(), &mut Rng::new(8)).unwrap()).unwrap();
        }
        for rel in [MANIFEST, "skeleton/000007.tsr", "video/000011.tsr"] {
            assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap());
        }
    }

    #[test]
    fn rejects_bad_manifests() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).is_err());
        fs::write(dir.path().join(MANIFEST), format!("# classes=2\n{HEADER}\n")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Empty(_))));
        fs::write(dir.path().join(MANIFEST), format!("# classes=2\n{HEADER}\n0\t1\t2\n")).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }
}
