//! Deterministic synthetic inputs shared by tests, benches, the CLI
//! `fixtures` command and the acceptance suite.
//!
//! Everything here is generated from a seed; nothing is recorded data.

use std::collections::{BTreeMap, BTreeSet};

use image::{DynamicImage, GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fsm::{Atom, Guidance, Predicate, StateKind, TaskFsm, TaskState, Transition, DEFAULT_DEBOUNCE, FSM_FORMAT_VERSION};
use crate::geometry::BoundingBox;
use crate::segmentation::StepSegment;
use crate::trace::DetectionFrame;

/// Uniform noise centred on mid-gray, spanning `amplitude` levels.
pub fn noise_image(width: u32, height: u32, amplitude: u8, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = i32::from(amplitude) / 2;
    GrayImage::from_fn(width, height, |_, _| {
        let v = 128 + if half > 0 { rng.random_range(-half..=half) } else { 0 };
        Luma([v.clamp(0, 255) as u8])
    })
}

/// High-contrast random texture, easy to localize by correlation.
pub fn textured_patch(size: u32, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57);
    let cells: Vec<u8> = (0..16).map(|_| rng.random_range(0..=255)).collect();
    GrayImage::from_fn(size, size, |x, y| {
        let cell = cells[((y * 4 / size) * 4 + x * 4 / size) as usize];
        let grain: i32 = rng.random_range(-20..=20);
        Luma([(i32::from(cell) + grain).clamp(0, 255) as u8])
    })
}

pub const SQUARE_VIDEO_SIZE: (u32, u32) = (160, 120);
pub const SQUARE_SIZE: i32 = 24;

/// A textured square sliding right by `speed` px per frame over a fresh
/// low-amplitude noise background each frame. Returns frames and the true
/// (unlabeled) box in every frame.
pub fn translating_square_video(frames: usize, speed: i32, seed: u64) -> (Vec<DynamicImage>, Vec<BoundingBox>) {
    let (w, h) = SQUARE_VIDEO_SIZE;
    let patch = textured_patch(SQUARE_SIZE as u32, seed);
    let (x0, y0) = (16, 40);
    let mut images = Vec::with_capacity(frames);
    let mut truth = Vec::with_capacity(frames);
    for f in 0..frames {
        let x = x0 + speed * f as i32;
        let mut canvas = noise_image(w, h, 24, seed.wrapping_mul(1000).wrapping_add(f as u64));
        image::imageops::replace(&mut canvas, &patch, i64::from(x), i64::from(y0));
        images.push(DynamicImage::ImageLuma8(canvas).to_rgb8().into());
        truth.push(BoundingBox::new(x, y0, x + SQUARE_SIZE, y0 + SQUARE_SIZE));
    }
    (images, truth)
}

/// A red and a blue square drifting 1 px per frame in opposite directions
/// over a fixed textured background. Boxes are labeled "red" and "blue".
pub fn two_class_video(frames: usize, seed: u64) -> (Vec<DynamicImage>, Vec<Vec<BoundingBox>>) {
    let (w, h) = (128u32, 96u32);
    let bg = noise_image(w, h, 30, seed);
    let side = 16;
    let mut images = Vec::with_capacity(frames);
    let mut labels = Vec::with_capacity(frames);
    for f in 0..frames as i32 {
        let red = BoundingBox::labeled(12 + f, 24, 12 + f + side, 24 + side, "red");
        let blue = BoundingBox::labeled(96 - f, 24, 96 - f + side, 24 + side, "blue");
        let img = RgbImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as i32, y as i32);
            let inside = |b: &BoundingBox| x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
            if inside(&red) {
                Rgb([220, 30, 30])
            } else if inside(&blue) {
                Rgb([30, 40, 220])
            } else {
                let v = bg.get_pixel(x as u32, y as u32)[0];
                Rgb([v, v, v])
            }
        });
        images.push(DynamicImage::ImageRgb8(img));
        labels.push(vec![red, blue]);
    }
    (images, labels)
}

fn unit_feature(i: usize, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

/// Step-segmentation fixture: a long trace with noisy interaction bursts,
/// the manual segmentation it was generated from, and the object each step
/// handles.
#[derive(Debug, Clone)]
pub struct StepTraceFixture {
    pub trace: Vec<DetectionFrame>,
    pub manual: Vec<StepSegment>,
    pub step_objects: Vec<String>,
}

pub const STEP_TRACE_FRAMES: u32 = 1500;
pub const STEP_TRACE_SIZE: (u32, u32) = (640, 480);
pub const STEP_TRACE_BURSTS: [(u32, u32); 6] = [(60, 220), (300, 480), (560, 700), (790, 960), (1040, 1210), (1300, 1440)];
pub const STEP_TRACE_OBJECTS: [&str; 6] = ["bread", "ham", "cheese", "tomato", "lettuce", "bread-top"];

/// 1500 frames of a six-step assembly. Each burst of hand/RoI overlap is a
/// step; bursts contain short RoI dropouts and the idle gaps contain short
/// spurious overlaps, both of which smoothing must absorb. Object boxes carry
/// orthogonal embedded features; a static "board" is visible from frame 0
/// and never touched.
pub fn step_trace_fixture(seed: u64) -> StepTraceFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 8;
    let object_box = |k: usize| {
        let x = 60 + 90 * k as i32;
        BoundingBox::new(x, 300, x + 60, 360)
    };
    let board = BoundingBox::labeled(20, 20, 120, 80, "board").with_score(0.95).with_feature(unit_feature(7, dim));
    let rest = BoundingBox::new(560, 40, 610, 90);

    // dropouts inside bursts, at least 20 frames apart and away from the edges
    let mut dropouts = BTreeSet::new();
    for &(s, e) in &STEP_TRACE_BURSTS {
        let mut f = s + 15 + rng.random_range(0..10);
        while f + 15 < e {
            let len = rng.random_range(1..=4);
            dropouts.extend(f..f + len);
            f += len + 20 + rng.random_range(0..20);
        }
    }
    // spurious overlaps in the middle of each gap
    let mut spikes = BTreeSet::new();
    let mut gap_starts = vec![0u32];
    gap_starts.extend(STEP_TRACE_BURSTS.iter().map(|b| b.1 + 1));
    let mut gap_ends: Vec<u32> = STEP_TRACE_BURSTS.iter().map(|b| b.0 - 1).collect();
    gap_ends.push(STEP_TRACE_FRAMES - 1);
    for (&gs, &ge) in gap_starts.iter().zip(&gap_ends) {
        if ge > gs + 30 {
            let mid = (gs + ge) / 2;
            let len = rng.random_range(1..=3);
            spikes.extend(mid..mid + len);
        }
    }

    let mut trace = Vec::with_capacity(STEP_TRACE_FRAMES as usize);
    for f in 0..STEP_TRACE_FRAMES {
        let mut frame = DetectionFrame::new(f);
        frame.objects.push(board.clone());
        frame.rois.push(board.geometry());
        let mut active = None;
        for (k, &(s, e)) in STEP_TRACE_BURSTS.iter().enumerate() {
            if f >= s {
                frame.objects.push(
                    object_box(k)
                        .with_label(STEP_TRACE_OBJECTS[k])
                        .with_score(0.9)
                        .with_feature(unit_feature(k, dim)),
                );
            }
            if (s..=e).contains(&f) {
                active = Some(k);
            }
        }
        match active {
            Some(k) => {
                let o = object_box(k);
                let jitter = rng.random_range(-3..=3);
                frame.hands.push(BoundingBox::new(o.x_min + 5 + jitter, o.y_min - 30, o.x_min + 55 + jitter, o.y_min + 20));
                if !dropouts.contains(&f) {
                    frame.rois.push(o);
                }
            }
            None => {
                frame.hands.push(rest.clone());
                if spikes.contains(&f) {
                    frame.rois.push(rest.translated(-10, 10));
                }
            }
        }
        trace.push(frame);
    }
    StepTraceFixture {
        trace,
        manual: STEP_TRACE_BURSTS
            .iter()
            .enumerate()
            .map(|(k, &(s, e))| StepSegment::new(k, s, e))
            .collect(),
        step_objects: STEP_TRACE_OBJECTS.iter().map(|s| s.to_string()).collect(),
    }
}

/// Ground truth of a random association world: true object tracks and hand
/// boxes per frame, plus the trace a detector would have produced.
#[derive(Debug, Clone)]
pub struct AssociationWorld {
    pub trace: Vec<DetectionFrame>,
    pub segments: Vec<StepSegment>,
    /// Per object name, its true box in every frame it is visible.
    pub tracks: BTreeMap<String, BTreeMap<u32, BoundingBox>>,
    pub hands: Vec<Vec<BoundingBox>>,
}

/// Up to 5 objects in separate horizontal lanes moving at constant speed
/// (bouncing off the frame edges), up to 200 frames, one hand that reaches
/// for random objects both inside and outside the steps. Features are
/// orthogonal unit vectors and there is no detection noise.
pub fn random_association_world(seed: u64) -> AssociationWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_frames: u32 = rng.random_range(60..=200);
    let n_objects: usize = rng.random_range(1..=5);
    let width = 400;
    let dim = 8;

    struct Obj {
        name: String,
        x: i32,
        vx: i32,
        y: i32,
        w: i32,
        appear: u32,
        vanish: u32,
    }
    let mut objs: Vec<Obj> = (0..n_objects)
        .map(|i| {
            let w = rng.random_range(30..=50);
            Obj {
                name: format!("obj-{i}"),
                x: rng.random_range(0..width - w),
                vx: rng.random_range(-2..=2),
                y: 40 + 80 * i as i32,
                w,
                appear: if i == 0 { 0 } else { rng.random_range(0..n_frames / 2) },
                vanish: if rng.random_bool(0.3) {
                    rng.random_range(n_frames / 2..n_frames)
                } else {
                    n_frames
                },
            }
        })
        .collect();

    // disjoint random steps
    let mut segments = Vec::new();
    let mut cursor = rng.random_range(0..15);
    while cursor + 12 < n_frames {
        let len = rng.random_range(12..40).min(n_frames - 1 - cursor);
        segments.push(StepSegment::new(segments.len(), cursor, cursor + len));
        cursor += len + 1 + rng.random_range(5..30);
    }

    // hand reaches: (start, end, object index)
    let mut reaches = Vec::new();
    let mut f = rng.random_range(0..10);
    while f < n_frames {
        let len = rng.random_range(3..15);
        reaches.push((f, f + len, rng.random_range(0..n_objects)));
        f += len + rng.random_range(2..20);
    }

    let mut tracks: BTreeMap<String, BTreeMap<u32, BoundingBox>> = BTreeMap::new();
    let mut hands = Vec::with_capacity(n_frames as usize);
    let mut trace = Vec::with_capacity(n_frames as usize);
    let rest = BoundingBox::new(0, 0, 30, 25);
    for f in 0..n_frames {
        let mut frame = DetectionFrame::new(f);
        let mut now: BTreeMap<usize, BoundingBox> = BTreeMap::new();
        for (i, o) in objs.iter_mut().enumerate() {
            if f > 0 {
                if o.x + o.vx < 0 || o.x + o.w + o.vx > width {
                    o.vx = -o.vx;
                }
                o.x += o.vx;
            }
            if (o.appear..o.vanish).contains(&f) {
                let b = BoundingBox::new(o.x, o.y, o.x + o.w, o.y + 40);
                tracks.entry(o.name.clone()).or_default().insert(f, b.clone());
                frame.objects.push(b.clone().with_label(&o.name).with_score(0.9).with_feature(unit_feature(i, dim)));
                now.insert(i, b);
            }
        }
        let target = reaches
            .iter()
            .find(|&&(s, e, _)| (s..e).contains(&f))
            .and_then(|&(_, _, i)| now.get(&i));
        let hand = match target {
            Some(b) => BoundingBox::new(b.x_min + 5, b.y_min + 5, b.x_min + 25, b.y_min + 30),
            None => rest.clone(),
        };
        frame.hands.push(hand.clone());
        hands.push(vec![hand]);
        trace.push(frame);
    }
    AssociationWorld {
        trace,
        segments,
        tracks,
        hands,
    }
}

/// The three user-study test cases for the sandwich task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SandwichCase {
    /// Normative steps only.
    Normative,
    /// A tomato is put on the bread after the first step, then removed.
    TomatoOnBread,
    /// A cucumber is put on the ham after the second step, then removed.
    CucumberOnHam,
}

impl SandwichCase {
    pub const ALL: [SandwichCase; 3] = [SandwichCase::Normative, SandwichCase::TomatoOnBread, SandwichCase::CucumberOnHam];

    pub fn number(self) -> u8 {
        match self {
            SandwichCase::Normative => 1,
            SandwichCase::TomatoOnBread => 2,
            SandwichCase::CucumberOnHam => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.number() == n)
    }

    /// States the engine should enter, in order.
    pub fn expected_states(self) -> Vec<&'static str> {
        match self {
            SandwichCase::Normative => vec!["bread", "ham-on-bread", "lettuce-on-ham", "bread-on-lettuce"],
            SandwichCase::TomatoOnBread => vec![
                "bread",
                "tomato-on-bread",
                "bread",
                "ham-on-bread",
                "lettuce-on-ham",
                "bread-on-lettuce",
            ],
            SandwichCase::CucumberOnHam => vec![
                "bread",
                "ham-on-bread",
                "cucumber-on-ham",
                "ham-on-bread",
                "lettuce-on-ham",
                "bread-on-lettuce",
            ],
        }
    }

    /// Per-frame top detections: `(class, frames)` runs, with occasional
    /// one- or two-frame detector glitches that debounce should ignore.
    fn script(self) -> Vec<(&'static str, u32)> {
        let mut s = vec![("", 10), ("bread", 12), ("tomato-on-bread", 2), ("bread", 6)];
        match self {
            SandwichCase::Normative => {}
            SandwichCase::TomatoOnBread => s.extend([("tomato-on-bread", 12), ("bread", 10)]),
            SandwichCase::CucumberOnHam => {}
        }
        s.extend([("ham-on-bread", 12), ("", 1), ("ham-on-bread", 6)]);
        if self == SandwichCase::CucumberOnHam {
            s.extend([("cucumber-on-ham", 12), ("ham-on-bread", 10)]);
        }
        s.extend([("lettuce-on-ham", 12), ("bread-on-lettuce", 1), ("lettuce-on-ham", 4), ("bread-on-lettuce", 12)]);
        s
    }

    pub fn trace(self) -> Vec<DetectionFrame> {
        let mut frames = Vec::new();
        for (class, n) in self.script() {
            for _ in 0..n {
                let mut frame = DetectionFrame::new(frames.len() as u32);
                if !class.is_empty() {
                    frame.objects.push(BoundingBox::labeled(240, 180, 400, 300, class).with_score(0.92));
                }
                // a weak stray detection that never passes the score threshold
                frame.objects.push(BoundingBox::labeled(10, 10, 40, 40, "tomato-on-bread").with_score(0.2));
                frames.push(frame);
            }
        }
        frames
    }
}

pub const SANDWICH_CLASSES: [&str; 6] = [
    "bread",
    "ham-on-bread",
    "lettuce-on-ham",
    "bread-on-lettuce",
    "tomato-on-bread",
    "cucumber-on-ham",
];

/// Sandwich task with two error states, each returning to the correct state
/// it was entered from.
pub fn sandwich_fsm() -> TaskFsm {
    let atom = |c: &str| Predicate::Atom(Atom::new(c, 1, 0.5));
    let not = |c: &str| Predicate::Not(Atom::new(c, 1, 0.5));
    let state = |id: &str, kind, predicate, speech: &str| TaskState {
        state_id: id.into(),
        kind,
        predicate,
        guidance: Guidance::speech(speech),
    };
    let states = vec![
        state("start", StateKind::Start, Predicate::Always, "Put a piece of bread on the table"),
        state(
            "bread",
            StateKind::Normal,
            Predicate::And(vec![atom("bread"), not("tomato-on-bread")]),
            "Put a piece of ham on the bread",
        ),
        state(
            "ham-on-bread",
            StateKind::Normal,
            Predicate::And(vec![atom("ham-on-bread"), not("cucumber-on-ham")]),
            "Put a piece of lettuce on the ham",
        ),
        state("lettuce-on-ham", StateKind::Normal, atom("lettuce-on-ham"), "Put a piece of bread on the lettuce"),
        state("bread-on-lettuce", StateKind::Done, atom("bread-on-lettuce"), "Your sandwich is complete"),
        state(
            "tomato-on-bread",
            StateKind::Error,
            atom("tomato-on-bread"),
            "There should be no tomato yet. Take the tomato off the bread",
        ),
        state(
            "cucumber-on-ham",
            StateKind::Error,
            atom("cucumber-on-ham"),
            "This sandwich has no cucumber. Take the cucumber off the ham",
        ),
    ];
    let edge = |from: &str, to: &str, priority| Transition {
        from_state: from.into(),
        to_state: to.into(),
        priority,
        debounce: DEFAULT_DEBOUNCE,
    };
    let transitions = vec![
        edge("start", "bread", 0),
        edge("bread", "ham-on-bread", 0),
        edge("bread", "tomato-on-bread", 1),
        edge("tomato-on-bread", "bread", 0),
        edge("ham-on-bread", "lettuce-on-ham", 0),
        edge("ham-on-bread", "cucumber-on-ham", 1),
        edge("cucumber-on-ham", "ham-on-bread", 0),
        edge("lettuce-on-ham", "bread-on-lettuce", 0),
    ];
    TaskFsm {
        format_version: FSM_FORMAT_VERSION,
        name: "sandwich".into(),
        version: "1".into(),
        detector_classes: SANDWICH_CLASSES.iter().map(|s| s.to_string()).collect(),
        states,
        transitions,
    }
}
