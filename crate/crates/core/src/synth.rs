//! Synthetic grounding task: clips of moving colored shapes with a templated
//! query naming one of them.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{TextQuery, VideoClip, PAD_ID};
use crate::error::{io_err, Error, Result};
use crate::geometry::{box_iou, BBox, GroundingAnnotation, Segment};
use crate::metrics::TubePrediction;

pub const FORMAT_VERSION: u32 = 1;
const CLIP_MAGIC: &[u8; 8] = b"STVGCLIP";
const MAX_ATTEMPTS: usize = 1000;
const SUPERSAMPLE: usize = 4;
const BACKGROUND: [f64; 3] = [0.08, 0.08, 0.08];

pub const VOCAB: [&str; 40] = [
    "<pad>", "<unk>", "the", "a", "find", "that", "is", "moving", "going", "staying", "not", "left", "right", "up",
    "down", "still", "square", "circle", "triangle", "red", "green", "blue", "yellow", "cyan", "magenta", "white",
    "orange", "object", "which", "and", "in", "video", "of", "to", "shape", "box", "one", "where", "towards", "on",
];

pub fn vocab_size() -> usize {
    VOCAB.len()
}

pub fn token_id(word: &str) -> Option<u32> {
    VOCAB.iter().position(|w| *w == word).map(|i| i as u32)
}

/// Space-joined words of the non-pad tokens.
pub fn decode_tokens(tokens: &[u32]) -> String {
    tokens
        .iter()
        .filter(|&&t| t != PAD_ID)
        .map(|&t| VOCAB.get(t as usize).copied().unwrap_or("<unk>"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Square,
    Circle,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Cyan,
    Magenta,
    White,
    Orange,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Left,
    Right,
    Up,
    Down,
    Still,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Square, Shape::Circle, Shape::Triangle];

    pub fn word(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
        }
    }

    /// Whether offset `(dx, dy)` from the center lies inside a shape whose
    /// bounding square has side `s`.
    fn contains(self, dx: f64, dy: f64, s: f64) -> bool {
        let r = 0.5 * s;
        match self {
            Shape::Square => dx.abs() <= r && dy.abs() <= r,
            Shape::Circle => dx * dx + dy * dy <= r * r,
            // apex at the top, base along the bottom edge
            Shape::Triangle => dy <= r && dy >= -r && dx.abs() <= 0.5 * (dy + r),
        }
    }
}

impl Color {
    pub const ALL: [Color; 8] =
        [Color::Red, Color::Green, Color::Blue, Color::Yellow, Color::Cyan, Color::Magenta, Color::White, Color::Orange];

    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Cyan => "cyan",
            Color::Magenta => "magenta",
            Color::White => "white",
            Color::Orange => "orange",
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            Color::Red => [0.9, 0.15, 0.15],
            Color::Green => [0.15, 0.8, 0.2],
            Color::Blue => [0.2, 0.3, 0.95],
            Color::Yellow => [0.95, 0.9, 0.15],
            Color::Cyan => [0.15, 0.85, 0.9],
            Color::Magenta => [0.9, 0.2, 0.85],
            Color::White => [0.95, 0.95, 0.95],
            Color::Orange => [0.95, 0.55, 0.1],
        }
    }
}

impl Motion {
    pub const ALL: [Motion; 5] = [Motion::Left, Motion::Right, Motion::Up, Motion::Down, Motion::Still];

    pub fn word(self) -> &'static str {
        match self {
            Motion::Left => "left",
            Motion::Right => "right",
            Motion::Up => "up",
            Motion::Down => "down",
            Motion::Still => "still",
        }
    }

    /// Unit displacement per frame in image coordinates (y grows downward).
    pub fn direction(self) -> (f64, f64) {
        match self {
            Motion::Left => (-1.0, 0.0),
            Motion::Right => (1.0, 0.0),
            Motion::Up => (0.0, -1.0),
            Motion::Down => (0.0, 1.0),
            Motion::Still => (0.0, 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attributes {
    pub shape: Shape,
    pub color: Color,
    pub motion: Motion,
}

impl fmt::Display for Attributes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} moving {}", self.color.word(), self.shape.word(), self.motion.word())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_frames: usize,
    pub image_size: usize,
    pub n_distractors: usize,
    /// Maximum query length in tokens.
    pub text_len: usize,
    /// Minimum ground-truth segment length in frames.
    pub min_segment: usize,
    /// Probability that an object's color shifts partway through the clip.
    pub jitter_prob: f64,
    /// Probability that a distractor differs from the target in exactly
    /// one attribute.
    pub hard_negative_prob: f64,
    /// Object speed in pixels per frame.
    pub speed: f64,
    /// Range of object sizes in pixels.
    pub min_size: f64,
    pub max_size: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_frames: 16,
            image_size: 48,
            n_distractors: 2,
            text_len: 8,
            min_segment: 3,
            jitter_prob: 0.5,
            hard_negative_prob: 0.7,
            speed: 1.5,
            min_size: 9.0,
            max_size: 13.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_frames < 2 {
            return err(format!("data.synth.n_frames = {} must be >= 2", self.n_frames));
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(8) {
            return err(format!("data.synth.image_size = {} must be a positive multiple of 8", self.image_size));
        }
        if self.n_distractors > 4 {
            return err(format!("data.synth.n_distractors = {} must be <= 4", self.n_distractors));
        }
        if self.text_len < 8 {
            return err(format!("data.synth.text_len = {} must be >= 8", self.text_len));
        }
        if self.min_segment < 1 || self.min_segment > self.n_frames {
            return err(format!("data.synth.min_segment = {} must be in [1, n_frames]", self.min_segment));
        }
        for (name, p) in [("jitter_prob", self.jitter_prob), ("hard_negative_prob", self.hard_negative_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("data.synth.{name} = {p} outside [0, 1]"));
            }
        }
        if !(self.min_size > 1.0 && self.min_size <= self.max_size) {
            return err("data.synth sizes need 1 < min_size <= max_size".into());
        }
        let travel = self.speed * (self.n_frames - 1) as f64;
        if self.speed < 0.0 || travel + self.max_size + 2.0 > self.image_size as f64 {
            return err("data.synth.speed too large for the image".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed of clip `index` in a dataset built from `seed`. Independent of the
/// order in which clips are generated.
pub fn clip_seed(seed: u64, index: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"clip");
    h.update(seed.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    h.finalize().into()
}

/// One rendered object and its trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub attributes: Attributes,
    /// Side of the bounding square in pixels.
    pub size: f64,
    /// Center at frame 0 in pixels; the object moves at `velocity` per frame.
    pub origin: (f64, f64),
    pub velocity: (f64, f64),
    /// Frames in which the object is drawn.
    pub visible: Segment,
    /// First frame and color of an appearance change, if any.
    pub jitter: Option<(usize, [f64; 3])>,
}

impl ObjectTrack {
    pub fn center(&self, frame: usize) -> (f64, f64) {
        let t = frame as f64;
        (self.origin.0 + self.velocity.0 * t, self.origin.1 + self.velocity.1 * t)
    }

    /// Tight normalized box at `frame`.
    pub fn bbox(&self, frame: usize, image_size: usize) -> BBox {
        let (x, y) = self.center(frame);
        let s = image_size as f64;
        BBox::new(x / s, y / s, self.size / s, self.size / s)
    }

    pub fn color_at(&self, frame: usize) -> [f64; 3] {
        match self.jitter {
            Some((start, c)) if frame >= start => c,
            _ => self.attributes.color.rgb(),
        }
    }
}

/// A generated clip together with the generator's internal state.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthClip {
    pub clip: VideoClip,
    pub query: TextQuery,
    pub annotation: GroundingAnnotation,
    pub objects: Vec<ObjectTrack>,
    /// Index of the target in `objects`.
    pub target: usize,
}

impl SynthClip {
    /// Prediction read straight from the target's trajectory.
    pub fn oracle_prediction(&self) -> TubePrediction {
        let t = &self.objects[self.target];
        let n = self.clip.n_frames;
        let boxes = (0..n).map(|f| t.bbox(f, self.clip.width)).collect();
        TubePrediction { clip_id: self.annotation.clip_id.clone(), segment: t.visible, boxes }
    }
}

fn random_attributes(rng: &mut ChaCha8Rng) -> Attributes {
    Attributes {
        shape: *Shape::ALL.choose(rng).unwrap(),
        color: *Color::ALL.choose(rng).unwrap(),
        motion: *Motion::ALL.choose(rng).unwrap(),
    }
}

fn distractor_attributes(target: Attributes, hard_prob: f64, rng: &mut ChaCha8Rng) -> Attributes {
    if rng.gen_bool(hard_prob) {
        let mut a = target;
        match rng.gen_range(0..3) {
            0 => a.shape = *Shape::ALL.iter().filter(|&&s| s != target.shape).collect::<Vec<_>>().choose(rng).unwrap().to_owned(),
            1 => a.color = *Color::ALL.iter().filter(|&&c| c != target.color).collect::<Vec<_>>().choose(rng).unwrap().to_owned(),
            _ => a.motion = *Motion::ALL.iter().filter(|&&m| m != target.motion).collect::<Vec<_>>().choose(rng).unwrap().to_owned(),
        }
        a
    } else {
        loop {
            let a = random_attributes(rng);
            if a != target {
                return a;
            }
        }
    }
}

/// Picks a trajectory that keeps the object fully inside the image while
/// it is visible.
fn place(cfg: &SynthConfig, attributes: Attributes, visible: Segment, rng: &mut ChaCha8Rng) -> ObjectTrack {
    let img = cfg.image_size as f64;
    let size = rng.gen_range(cfg.min_size..=cfg.max_size);
    let (dx, dy) = attributes.motion.direction();
    let velocity = (dx * cfg.speed, dy * cfg.speed);
    let lo = 0.5 * size + 1.0;
    let hi = img - 0.5 * size - 1.0;
    let (t0, t1) = (visible.start as f64, visible.end as f64);
    let axis = |v: f64, rng: &mut ChaCha8Rng| {
        // origin o must satisfy lo <= o + v t <= hi for t in [t0, t1]
        let min_o = lo - (v * t0).min(v * t1);
        let max_o = hi - (v * t0).max(v * t1);
        rng.gen_range(min_o..=max_o)
    };
    let origin = (axis(velocity.0, rng), axis(velocity.1, rng));
    ObjectTrack { attributes, size, origin, velocity, visible, jitter: None }
}

fn jitter(cfg: &SynthConfig, obj: &mut ObjectTrack, rng: &mut ChaCha8Rng) {
    if !rng.gen_bool(cfg.jitter_prob) || obj.visible.len() < 2 {
        return;
    }
    let start = rng.gen_range(obj.visible.start + 1..=obj.visible.end);
    let scale = rng.gen_range(0.55..0.75);
    let base = obj.attributes.color.rgb();
    let c = [0, 1, 2].map(|i| (base[i] * scale + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0));
    obj.jitter = Some((start, c));
}

fn query_words(a: Attributes, rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let motion: Vec<&'static str> = match a.motion {
        Motion::Still => {
            if rng.gen_bool(0.5) {
                vec!["staying", "still"]
            } else {
                vec!["not", "moving"]
            }
        }
        m => vec![if rng.gen_bool(0.5) { "moving" } else { "going" }, m.word()],
    };
    let mut w: Vec<&'static str> = match rng.gen_range(0..4) {
        0 => vec!["the"],
        1 => vec!["a"],
        2 => vec![],
        _ => vec!["find", "the"],
    };
    let relative = w.first() == Some(&"find");
    w.push(a.color.word());
    w.push(a.shape.word());
    if relative {
        w.extend(["that", "is"]);
    }
    w.extend(motion);
    w
}

fn render(cfg: &SynthConfig, objects: &[ObjectTrack], order: &[usize]) -> Vec<f32> {
    let (n, s) = (cfg.n_frames, cfg.image_size);
    let mut data = vec![0f32; n * s * s * 3];
    let ss = SUPERSAMPLE;
    let inv = 1.0 / (ss * ss) as f64;
    for f in 0..n {
        let mut frame: Vec<[f64; 3]> = vec![BACKGROUND; s * s];
        for &oi in order {
            let o = &objects[oi];
            if !o.visible.contains(f) {
                continue;
            }
            let (cx, cy) = o.center(f);
            let color = o.color_at(f);
            let r = 0.5 * o.size;
            let x0 = (cx - r).floor().max(0.0) as usize;
            let x1 = ((cx + r).ceil() as usize).min(s);
            let y0 = (cy - r).floor().max(0.0) as usize;
            let y1 = ((cy + r).ceil() as usize).min(s);
            for py in y0..y1 {
                for px in x0..x1 {
                    let mut hits = 0usize;
                    for sy in 0..ss {
                        for sx in 0..ss {
                            let x = px as f64 + (sx as f64 + 0.5) / ss as f64;
                            let y = py as f64 + (sy as f64 + 0.5) / ss as f64;
                            if o.attributes.shape.contains(x - cx, y - cy, o.size) {
                                hits += 1;
                            }
                        }
                    }
                    if hits > 0 {
                        let a = hits as f64 * inv;
                        let dst = &mut frame[py * s + px];
                        for c in 0..3 {
                            dst[c] = dst[c] * (1.0 - a) + color[c] * a;
                        }
                    }
                }
            }
        }
        for (i, px) in frame.iter().enumerate() {
            for c in 0..3 {
                data[(f * s * s + i) * 3 + c] = quantize(px[c]);
            }
        }
    }
    data
}

/// Rounds to the nearest multiple of 1/255 so frames survive `u8` storage.
fn quantize(v: f64) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0
}

/// Generates one clip from a 32-byte seed.
pub fn generate_clip(cfg: &SynthConfig, clip_id: &str, seed: [u8; 32]) -> Result<SynthClip> {
    generate_with(cfg, clip_id, seed, None)
}

/// Clip `index` of the dataset seeded with `seed`. Target motions cycle
/// through every class from a seed-dependent offset, so any run of
/// consecutive clips is balanced to within one clip per class.
pub fn generate_indexed(cfg: &SynthConfig, seed: u64, index: usize) -> Result<SynthClip> {
    let offset = clip_seed(seed, usize::MAX)[0] as usize;
    let motion = Motion::ALL[(index + offset) % Motion::ALL.len()];
    generate_with(cfg, &clip_id(index), clip_seed(seed, index), Some(motion))
}

fn generate_with(cfg: &SynthConfig, clip_id: &str, seed: [u8; 32], motion: Option<Motion>) -> Result<SynthClip> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    let n = cfg.n_frames;
    for _ in 0..MAX_ATTEMPTS {
        let mut target_attr = random_attributes(&mut rng);
        if let Some(m) = motion {
            target_attr.motion = m;
        }
        let start = rng.gen_range(0..=n - cfg.min_segment);
        let end = rng.gen_range(start + cfg.min_segment - 1..n);
        let segment = Segment::new(start, end)?;
        let whole = Segment::new(0, n - 1)?;
        let mut objects = vec![place(cfg, target_attr, segment, &mut rng)];
        for _ in 0..cfg.n_distractors {
            let a = distractor_attributes(target_attr, cfg.hard_negative_prob, &mut rng);
            objects.push(place(cfg, a, whole, &mut rng));
        }
        for o in objects.iter_mut() {
            jitter(cfg, o, &mut rng);
        }
        let unique = objects[1..].iter().all(|o| o.attributes != target_attr);
        let separated = segment.frames().all(|f| {
            let tb = objects[0].bbox(f, cfg.image_size);
            objects[1..].iter().all(|o| box_iou(&tb, &o.bbox(f, cfg.image_size)) < 0.3)
        });
        if !unique || !separated {
            continue;
        }
        // distractors underneath, target on top
        let mut order: Vec<usize> = (1..objects.len()).collect();
        order.push(0);
        let frames = render(cfg, &objects, &order);
        let clip = VideoClip::new(n, cfg.image_size, cfg.image_size, frames)?;
        let words = query_words(target_attr, &mut rng);
        let ids: Vec<u32> = words.iter().map(|w| token_id(w).expect("query word in vocabulary")).collect();
        let query = TextQuery::new(&ids, cfg.text_len, VOCAB.len())?;
        let boxes = segment.frames().map(|f| objects[0].bbox(f, cfg.image_size)).collect();
        let annotation = GroundingAnnotation::new(clip_id, segment, boxes)?;
        return Ok(SynthClip { clip, query, annotation, objects, target: 0 });
    }
    Err(Error::Generation(format!("{clip_id}: no valid layout after {MAX_ATTEMPTS} attempts")))
}

/// One training or test example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub clip: VideoClip,
    pub query: TextQuery,
    pub annotation: GroundingAnnotation,
}

impl From<SynthClip> for Sample {
    fn from(c: SynthClip) -> Self {
        Sample { clip: c.clip, query: c.query, annotation: c.annotation }
    }
}

pub fn clip_id(index: usize) -> String {
    format!("clip_{index:05}")
}

/// Generates `n` clips in memory with seeds derived from `seed`.
pub fn generate_samples(cfg: &SynthConfig, n: usize, seed: u64) -> Result<Vec<Sample>> {
    (0..n).map(|i| generate_indexed(cfg, seed, i).map(Sample::from)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub config: SynthConfig,
    pub seed: u64,
    pub clip_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AnnotationLine {
    #[serde(flatten)]
    annotation: GroundingAnnotation,
    query: String,
}

fn write_clip(path: &Path, clip: &VideoClip, query: &TextQuery) -> Result<()> {
    let mut buf = Vec::with_capacity(clip.data().len() + 64);
    buf.extend_from_slice(CLIP_MAGIC);
    for v in [FORMAT_VERSION, clip.n_frames as u32, clip.height as u32, clip.width as u32, query.text_len() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &t in query.tokens() {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    buf.extend(clip.data().iter().map(|&v| (v * 255.0).round() as u8));
    fs::write(path, buf).map_err(io_err(path))
}

fn read_clip(path: &Path, vocab: usize) -> Result<(VideoClip, TextQuery)> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err(path))?;
    let bad = |m: &str| Error::Input(format!("{}: {m}", path.display()));
    if bytes.len() < 28 || &bytes[..8] != CLIP_MAGIC {
        return Err(bad("not a clip file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    if word(0) != FORMAT_VERSION as usize {
        return Err(bad("unsupported clip format version"));
    }
    let (n, h, w, t) = (word(1), word(2), word(3), word(4));
    let tok_start = 28;
    let px_start = tok_start + 4 * t;
    if bytes.len() != px_start + n * h * w * 3 {
        return Err(bad("truncated clip file"));
    }
    let tokens: Vec<u32> = bytes[tok_start..px_start]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let frames = bytes[px_start..].iter().map(|&b| b as f32 / 255.0).collect();
    let clip = VideoClip::new(n, h, w, frames)?;
    let query = TextQuery::from_padded(tokens, vocab)?;
    Ok((clip, query))
}

/// Writes `n_clips` clips under `out`: `manifest.json`, `clips/<id>.bin` and
/// `annotations.jsonl`.
pub fn build_dataset(cfg: &SynthConfig, n_clips: usize, out: impl AsRef<Path>) -> Result<Manifest> {
    let out = out.as_ref();
    let clips_dir = out.join("clips");
    fs::create_dir_all(&clips_dir).map_err(io_err(&clips_dir))?;
    let ann_path = out.join("annotations.jsonl");
    let file = fs::File::create(&ann_path).map_err(io_err(&ann_path))?;
    let mut ann = BufWriter::new(file);
    let mut ids = Vec::with_capacity(n_clips);
    for i in 0..n_clips {
        let id = clip_id(i);
        let c = generate_indexed(cfg, cfg.seed, i)?;
        write_clip(&clips_dir.join(format!("{id}.bin")), &c.clip, &c.query)?;
        let line = AnnotationLine { annotation: c.annotation, query: decode_tokens(c.query.tokens()) };
        serde_json::to_writer(&mut ann, &line).map_err(|e| Error::Json { path: ann_path.clone(), source: e })?;
        ann.write_all(b"\n").map_err(io_err(&ann_path))?;
        ids.push(id);
    }
    ann.flush().map_err(io_err(&ann_path))?;
    let manifest =
        Manifest { format_version: FORMAT_VERSION, config_hash: cfg.hash(), config: cfg.clone(), seed: cfg.seed, clip_ids: ids };
    let man_path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&man_path, text).map_err(io_err(&man_path))?;
    Ok(manifest)
}

/// A dataset read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let man_path = dir.join("manifest.json");
        let text = fs::read_to_string(&man_path).map_err(io_err(&man_path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json { path: man_path.clone(), source: e })?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Input(format!("{}: unsupported format_version {}", man_path.display(), manifest.format_version)));
        }
        let ann_path = dir.join("annotations.jsonl");
        let file = fs::File::open(&ann_path).map_err(io_err(&ann_path))?;
        let mut annotations = std::collections::HashMap::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(io_err(&ann_path))?;
            if line.trim().is_empty() {
                continue;
            }
            let a: AnnotationLine = serde_json::from_str(&line).map_err(|e| Error::Json { path: ann_path.clone(), source: e })?;
            a.annotation.validate()?;
            annotations.insert(a.annotation.clip_id.clone(), a.annotation);
        }
        let mut samples = Vec::with_capacity(manifest.clip_ids.len());
        for id in &manifest.clip_ids {
            let path: PathBuf = dir.join("clips").join(format!("{id}.bin"));
            let (clip, query) = read_clip(&path, VOCAB.len())?;
            let annotation = annotations
                .remove(id)
                .ok_or_else(|| Error::Input(format!("{}: no annotation for {id}", ann_path.display())))?;
            if annotation.segment.end >= clip.n_frames {
                return Err(Error::Input(format!("{id}: segment beyond clip end")));
            }
            samples.push(Sample { clip, query, annotation });
        }
        Ok(Dataset { manifest, samples })
    }
}
