//! Binary corpus files. The byte layout is documented in `docs/formats.md`.

use std::io::Write;

use crate::arm::{Action, ArmGeometry};
use crate::error::{Error, Result};
use crate::experiment::{Corpus, CorpusEntry};
use crate::io::bytes::{ByteReader, ByteWriter};
use crate::io::{Provenance, FORMAT_VERSION};
use crate::point::Point2;
use crate::task::{replay_cursors, EpisodeConfig, Observation, TaskInstance, Trajectory};
use crate::transforms::{compose, Condition, TransformSpec};

pub const CORPUS_MAGIC: &[u8; 8] = b"ARCORPUS";
const HEADER_LEN: usize = 104;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFile {
    pub provenance: Provenance,
    pub geometry: ArmGeometry,
    pub corpus: Corpus,
}

fn shape(corpus: &Corpus) -> Result<(usize, usize)> {
    let Some(first) = corpus.entries.first() else {
        return Ok((0, 0));
    };
    let segments = first.segments.len();
    let steps = first.segments.first().map_or(0, Trajectory::steps);
    for e in &corpus.entries {
        if e.segments.len() != segments || e.segments.iter().any(|t| t.steps() != steps) {
            return Err(Error::ShapeMismatch("corpus entries must share segment count and length".into()));
        }
    }
    Ok((segments, steps))
}

pub fn encode_corpus(file: &CorpusFile) -> Result<Vec<u8>> {
    let (segments, steps) = shape(&file.corpus)?;
    let to_u32 = |v: usize, what: &str| u32::try_from(v).map_err(|_| Error::ShapeMismatch(format!("{what} exceeds u32")));
    let g = &file.geometry;
    let mut w = ByteWriter::new();
    w.bytes(CORPUS_MAGIC);
    w.u16(file.provenance.format_version);
    w.u8(file.corpus.condition.code());
    w.u8(0);
    w.u64(file.corpus.seed);
    w.u64(file.provenance.root_seed);
    w.u64(file.provenance.config_hash);
    w.f64(g.dt);
    w.f64(g.upper_len);
    w.f64(g.fore_len);
    w.f64(g.vel_limit);
    w.f64(g.acc_limit);
    w.f64(g.initial_pose[0]);
    w.f64(g.initial_pose[1]);
    w.u32(to_u32(file.corpus.len(), "entry count")?);
    w.u32(to_u32(segments, "segment count")?);
    w.u32(to_u32(steps, "segment length")?);
    debug_assert_eq!(w.len(), HEADER_LEN);
    for e in &file.corpus.entries {
        let s = e.transform.spec;
        for v in [s.rotation, s.shear, s.scale_x, s.scale_y] {
            w.f64(v);
        }
        for t in &e.segments {
            let goal = t.observations[0].goal;
            w.f64(goal.x);
            w.f64(goal.y);
            for a in &t.actions {
                w.f64(a.shoulder_acc);
                w.f64(a.elbow_acc);
            }
            for o in &t.observations {
                w.f64(o.cursor.x);
                w.f64(o.cursor.y);
            }
        }
    }
    Ok(w.finish_with_digest())
}

fn entry_bytes(segments: usize, steps: usize) -> Option<usize> {
    // goal + actions + cursors, 16 bytes per point
    let per_segment = steps.checked_mul(2)?.checked_add(2)?.checked_mul(16)?;
    per_segment.checked_mul(segments)?.checked_add(32)
}

pub fn decode_corpus(data: &[u8]) -> Result<CorpusFile> {
    let mut r = ByteReader::with_digest(data, "corpus")?;
    if r.take(8)? != CORPUS_MAGIC {
        return Err(r.err("bad magic"));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let code = r.u8()?;
    let condition = Condition::from_code(code).ok_or_else(|| r.err(format!("unknown condition code {code}")))?;
    r.u8()?;
    let seed = r.u64()?;
    let root_seed = r.u64()?;
    let config_hash = r.u64()?;
    let dt = r.finite("dt")?;
    let geometry = ArmGeometry {
        dt,
        upper_len: r.finite("upper_len")?,
        fore_len: r.finite("fore_len")?,
        vel_limit: r.finite("vel_limit")?,
        acc_limit: r.finite("acc_limit")?,
        initial_pose: [r.finite("initial_pose")?, r.finite("initial_pose")?],
    };
    geometry.validate().map_err(|e| r.err(e.to_string()))?;
    let count = r.u32()? as usize;
    let segments = r.u32()? as usize;
    let steps = r.u32()? as usize;
    r.expect_remaining(entry_bytes(segments, steps).and_then(|b| b.checked_mul(count)))?;

    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let spec = TransformSpec {
            rotation: r.finite("rotation")?,
            shear: r.finite("shear")?,
            scale_x: r.finite("scale_x")?,
            scale_y: r.finite("scale_y")?,
        };
        let transform = compose(&spec).map_err(|e| r.err(e.to_string()))?;
        let mut segs = Vec::with_capacity(segments);
        for _ in 0..segments {
            let goal = Point2::new(r.finite("goal")?, r.finite("goal")?);
            let mut actions = Vec::with_capacity(steps);
            for _ in 0..steps {
                actions.push(Action::new(r.finite("action")?, r.finite("action")?));
            }
            let mut observations = Vec::with_capacity(steps + 1);
            for _ in 0..=steps {
                let cursor = Point2::new(r.finite("cursor")?, r.finite("cursor")?);
                observations.push(Observation { cursor, goal });
            }
            segs.push(Trajectory {
                observations,
                actions,
            });
        }
        entries.push(CorpusEntry {
            transform,
            segments: segs,
        });
    }
    r.finish()?;
    Ok(CorpusFile {
        provenance: Provenance {
            format_version: version,
            config_hash,
            root_seed,
        },
        geometry,
        corpus: Corpus {
            condition,
            seed,
            entries,
        },
    })
}

/// Replaying each entry's actions through the arm and its transform
/// reproduces the stored cursors bit for bit.
pub fn verify_replay(file: &CorpusFile) -> Result<()> {
    for (k, e) in file.corpus.entries.iter().enumerate() {
        for (s, t) in e.segments.iter().enumerate() {
            let task = TaskInstance {
                transform: e.transform,
                goal: t.observations[0].goal,
                episode: EpisodeConfig::default(),
                geom: file.geometry,
            };
            let replayed = replay_cursors(&task, &t.actions)?;
            if !replayed.iter().copied().eq(t.cursors()) {
                return Err(Error::format("corpus", format!("entry {k} segment {s} does not replay")));
            }
        }
    }
    Ok(())
}

/// One row per stored point, for inspection.
pub fn write_corpus_csv<W: Write>(file: &CorpusFile, out: W) -> Result<()> {
    let mut out = out;
    out.write_all(file.provenance.csv_header("corpus").as_bytes())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "entry", "segment", "step", "rotation", "shear", "scale_x", "scale_y", "goal_x", "goal_y", "cursor_x", "cursor_y",
        "shoulder_acc", "elbow_acc",
    ])?;
    for (k, e) in file.corpus.entries.iter().enumerate() {
        let s = e.transform.spec;
        for (j, t) in e.segments.iter().enumerate() {
            for (i, o) in t.observations.iter().enumerate() {
                let (a, b) = t
                    .actions
                    .get(i)
                    .map_or((String::new(), String::new()), |a| (a.shoulder_acc.to_string(), a.elbow_acc.to_string()));
                w.write_record([
                    k.to_string(),
                    j.to_string(),
                    i.to_string(),
                    s.rotation.to_string(),
                    s.shear.to_string(),
                    s.scale_x.to_string(),
                    s.scale_y.to_string(),
                    o.goal.x.to_string(),
                    o.goal.y.to_string(),
                    o.cursor.x.to_string(),
                    o.cursor.y.to_string(),
                    a,
                    b,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
