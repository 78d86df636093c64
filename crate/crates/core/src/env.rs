//! Synthetic text-to-scene task.
//!
//! Prompts are symbolic scene requests (object kinds, optional colors,
//! counts, an optional spatial relation) drawn from six benchmark
//! categories. Scenes are 4x4 grids of scene tokens, one token per
//! (kind, color) pair plus an explicit empty token. Three programmatic
//! scorers stand in for the detector / alignment / preference reward
//! models; their affine output ranges are [0.6, 1.0], [0.2, 0.8] and
//! [0.26, 0.32], so the ensemble sum always lies in [1.06, 2.12].

use alloc::string::ToString;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::CoreError;
use crate::policy::VocabSpec;
use crate::{rng, Token};

/// Object-kind catalog size.
pub const KIND_COUNT: usize = 12;
/// Color catalog size.
pub const COLOR_COUNT: usize = 8;
/// Largest per-object instance count a prompt may request.
pub const MAX_COUNT: u8 = 4;
/// Scene grid side length.
pub const GRID_DIM: usize = 4;
/// Number of scene cells (scene tokens per rollout).
pub const SCENE_CELLS: usize = GRID_DIM * GRID_DIM;
/// Total object instances a prompt may request.
pub const MAX_INSTANCES: u32 = 8;

/// Ensemble sum when every scorer sits at its lower end.
pub const MODEL_SUM_MIN: f64 = 0.6 + 0.2 + 0.26;
/// Ensemble sum when every scorer sits at its upper end.
pub const MODEL_SUM_MAX: f64 = 1.0 + 0.8 + 0.32;

const KIND_NAMES: [&str; KIND_COUNT] = [
    "cat", "dog", "bird", "fish", "horse", "sheep", "car", "bus", "boat", "tree", "ball", "cup",
];

const COLOR_NAMES: [&str; COLOR_COUNT] = [
    "red", "green", "blue", "yellow", "purple", "orange", "black", "white",
];

/// One of the twelve object kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectKind(pub u8);

impl ObjectKind {
    pub fn name(self) -> &'static str {
        KIND_NAMES[self.0 as usize]
    }

    pub fn from_name(name: &str) -> Result<Self, CoreError> {
        KIND_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| ObjectKind(i as u8))
            .ok_or(CoreError::UnknownName {
                what: "object kind",
                name: name.to_string(),
            })
    }
}

/// One of the eight colors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Color(pub u8);

impl Color {
    pub fn name(self) -> &'static str {
        COLOR_NAMES[self.0 as usize]
    }

    pub fn from_name(name: &str) -> Result<Self, CoreError> {
        COLOR_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| Color(i as u8))
            .ok_or(CoreError::UnknownName {
                what: "color",
                name: name.to_string(),
            })
    }
}

/// Spatial relation between the first and second object entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::LeftOf,
        Relation::RightOf,
        Relation::Above,
        Relation::Below,
    ];

    pub fn index(self) -> usize {
        match self {
            Relation::LeftOf => 0,
            Relation::RightOf => 1,
            Relation::Above => 2,
            Relation::Below => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::LeftOf => "left_of",
            Relation::RightOf => "right_of",
            Relation::Above => "above",
            Relation::Below => "below",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, CoreError> {
        Relation::ALL
            .iter()
            .copied()
            .find(|r| r.name() == name)
            .ok_or(CoreError::UnknownName {
                what: "relation",
                name: name.to_string(),
            })
    }
}

/// Benchmark prompt category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    SingleObject,
    TwoObjects,
    Counting,
    Colors,
    ColorAttr,
    Position,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::SingleObject,
        Category::TwoObjects,
        Category::Counting,
        Category::Colors,
        Category::ColorAttr,
        Category::Position,
    ];

    pub fn index(self) -> usize {
        match self {
            Category::SingleObject => 0,
            Category::TwoObjects => 1,
            Category::Counting => 2,
            Category::Colors => 3,
            Category::ColorAttr => 4,
            Category::Position => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::SingleObject => "single_object",
            Category::TwoObjects => "two_objects",
            Category::Counting => "counting",
            Category::Colors => "colors",
            Category::ColorAttr => "color_attr",
            Category::Position => "position",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, CoreError> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.name() == name)
            .ok_or(CoreError::UnknownName {
                what: "category",
                name: name.to_string(),
            })
    }
}

/// One requested object entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    /// `None` means the prompt does not constrain the color.
    pub color: Option<Color>,
    pub count: u8,
}

/// Symbolic ground-truth scene request; doubles as the verifiable answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PromptSpec {
    pub id: u32,
    pub category: Category,
    pub objects: Vec<ObjectSpec>,
    pub relation: Option<Relation>,
}

impl PromptSpec {
    /// Checks the per-category structural invariants.
    pub fn validate(&self) -> Result<(), CoreError> {
        let fail = |msg: &str| {
            Err(CoreError::InvalidConfig(alloc::format!(
                "prompt {}: {msg}",
                self.id
            )))
        };
        for obj in &self.objects {
            if obj.kind.0 as usize >= KIND_COUNT {
                return fail("object kind out of catalog");
            }
            if let Some(c) = obj.color {
                if c.0 as usize >= COLOR_COUNT {
                    return fail("color out of catalog");
                }
            }
            if obj.count == 0 || obj.count > MAX_COUNT {
                return fail("count outside 1..=4");
            }
        }
        let total: u32 = self.objects.iter().map(|o| o.count as u32).sum();
        if total > MAX_INSTANCES {
            return fail("total requested instances exceed the grid budget");
        }
        match self.category {
            Category::SingleObject => {
                if self.objects.len() != 1 || self.objects[0].count != 1 {
                    return fail("single_object needs exactly one entry with count 1");
                }
            }
            Category::TwoObjects => {
                if self.objects.len() != 2 || self.relation.is_some() {
                    return fail("two_objects needs two entries and no relation");
                }
            }
            Category::Counting => {
                if self.objects.len() != 1 || !(2..=MAX_COUNT).contains(&self.objects[0].count) {
                    return fail("counting needs one entry with count in 2..=4");
                }
            }
            Category::Colors => {
                if self.objects.len() != 1 || self.objects[0].color.is_none() {
                    return fail("colors needs one entry with a specified color");
                }
            }
            Category::ColorAttr => {
                if self.objects.len() != 2
                    || self.objects.iter().any(|o| o.color.is_none())
                    || self.relation.is_some()
                {
                    return fail("color_attr needs two colored entries and no relation");
                }
            }
            Category::Position => {
                if self.objects.len() != 2 || self.relation.is_none() {
                    return fail("position needs two entries and a relation");
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Token alphabets of the task, laid out in one contiguous id space:
/// prompt tokens first, then semantic (CoT) tokens, then scene tokens.
/// The end-of-CoT marker is the last semantic id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocabulary {
    prompt_len: usize,
    semantic_len: usize,
    scene_len: usize,
}

/// Number of filler/descriptor words in the semantic alphabet.
pub const FILLER_COUNT: usize = 31;

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::standard()
    }
}

impl Vocabulary {
    /// The catalog-derived vocabulary used by the task.
    pub const fn standard() -> Self {
        Vocabulary {
            // category markers + kinds + colors + unspecified + counts
            // + relations + no-relation
            prompt_len: 6 + KIND_COUNT + COLOR_COUNT + 1 + MAX_COUNT as usize + 4 + 1,
            // object words + color words + count words + relation words
            // + fillers + end-of-CoT
            semantic_len: KIND_COUNT + COLOR_COUNT + MAX_COUNT as usize + 4 + FILLER_COUNT + 1,
            // one per (kind, color) pair + empty
            scene_len: KIND_COUNT * COLOR_COUNT + 1,
        }
    }

    pub fn spec(&self) -> VocabSpec {
        VocabSpec {
            prompt: self.prompt_len,
            semantic: self.semantic_len,
            scene: self.scene_len,
        }
    }

    fn semantic_base(&self) -> usize {
        self.prompt_len
    }

    fn scene_base(&self) -> usize {
        self.prompt_len + self.semantic_len
    }

    // -- prompt tokens ------------------------------------------------------

    pub fn category_token(&self, c: Category) -> Token {
        c.index() as Token
    }

    pub fn kind_token(&self, k: ObjectKind) -> Token {
        (6 + k.0 as usize) as Token
    }

    pub fn color_token(&self, c: Color) -> Token {
        (6 + KIND_COUNT + c.0 as usize) as Token
    }

    pub fn unspecified_color_token(&self) -> Token {
        (6 + KIND_COUNT + COLOR_COUNT) as Token
    }

    pub fn count_token(&self, count: u8) -> Token {
        debug_assert!((1..=MAX_COUNT).contains(&count));
        (6 + KIND_COUNT + COLOR_COUNT + 1 + (count as usize - 1)) as Token
    }

    pub fn relation_token(&self, r: Relation) -> Token {
        (6 + KIND_COUNT + COLOR_COUNT + 1 + MAX_COUNT as usize + r.index()) as Token
    }

    pub fn no_relation_token(&self) -> Token {
        (self.prompt_len - 1) as Token
    }

    // -- semantic tokens ----------------------------------------------------

    pub fn object_word(&self, k: ObjectKind) -> Token {
        (self.semantic_base() + k.0 as usize) as Token
    }

    pub fn color_word(&self, c: Color) -> Token {
        (self.semantic_base() + KIND_COUNT + c.0 as usize) as Token
    }

    pub fn count_word(&self, count: u8) -> Token {
        debug_assert!((1..=MAX_COUNT).contains(&count));
        (self.semantic_base() + KIND_COUNT + COLOR_COUNT + (count as usize - 1)) as Token
    }

    pub fn relation_word(&self, r: Relation) -> Token {
        (self.semantic_base() + KIND_COUNT + COLOR_COUNT + MAX_COUNT as usize + r.index()) as Token
    }

    pub fn filler_word(&self, i: usize) -> Token {
        debug_assert!(i < FILLER_COUNT);
        (self.semantic_base() + KIND_COUNT + COLOR_COUNT + MAX_COUNT as usize + 4 + i) as Token
    }

    /// The end-of-CoT marker (last semantic id).
    pub fn end_of_cot(&self) -> Token {
        (self.scene_base() - 1) as Token
    }

    // -- scene tokens -------------------------------------------------------

    pub fn scene_empty(&self) -> Token {
        self.scene_base() as Token
    }

    pub fn scene_object(&self, k: ObjectKind, c: Color) -> Token {
        (self.scene_base() + 1 + k.0 as usize * COLOR_COUNT + c.0 as usize) as Token
    }

    /// Decodes one scene token; `None` if it is the empty token.
    /// Errors if the token is outside the scene range.
    pub fn scene_cell(&self, token: Token) -> Result<Option<(ObjectKind, Color)>, CoreError> {
        let base = self.scene_base() as Token;
        let len = self.scene_len as Token;
        if token < base || token >= base + len {
            return Err(CoreError::TokenOutOfRange {
                what: "scene token",
                token,
            });
        }
        if token == base {
            return Ok(None);
        }
        let off = (token - base - 1) as usize;
        Ok(Some((
            ObjectKind((off / COLOR_COUNT) as u8),
            Color((off % COLOR_COUNT) as u8),
        )))
    }
}

// ---------------------------------------------------------------------------
// Scene
// ---------------------------------------------------------------------------

/// Decoded 4x4 scene grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scene {
    cells: [Option<(ObjectKind, Color)>; SCENE_CELLS],
}

impl Scene {
    pub fn empty() -> Self {
        Scene {
            cells: [None; SCENE_CELLS],
        }
    }

    pub fn cells(&self) -> &[Option<(ObjectKind, Color)>; SCENE_CELLS] {
        &self.cells
    }

    pub fn set(&mut self, cell: usize, value: Option<(ObjectKind, Color)>) {
        self.cells[cell] = value;
    }

    /// Row-major cell coordinates.
    pub fn coords(cell: usize) -> (usize, usize) {
        (cell / GRID_DIM, cell % GRID_DIM)
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Re-encodes the grid as scene tokens, row-major.
    pub fn tokens(&self, vocab: &Vocabulary) -> Vec<Token> {
        self.cells
            .iter()
            .map(|cell| match cell {
                None => vocab.scene_empty(),
                Some((k, c)) => vocab.scene_object(*k, *c),
            })
            .collect()
    }
}

/// Decodes a row-major scene-token sequence into a grid.
pub fn decode_scene(tokens: &[Token], vocab: &Vocabulary) -> Result<Scene, CoreError> {
    if tokens.len() != SCENE_CELLS {
        return Err(CoreError::LengthMismatch {
            what: "scene token sequence",
            expected: SCENE_CELLS,
            got: tokens.len(),
        });
    }
    let mut scene = Scene::empty();
    for (i, &t) in tokens.iter().enumerate() {
        scene.cells[i] = vocab.scene_cell(t)?;
    }
    Ok(scene)
}

// ---------------------------------------------------------------------------
// Prompt generation and encoding
// ---------------------------------------------------------------------------

fn pick_kind(rng: &mut ChaCha8Rng) -> ObjectKind {
    ObjectKind(rng.gen_range(0..KIND_COUNT as u8))
}

fn pick_distinct_kinds(rng: &mut ChaCha8Rng) -> (ObjectKind, ObjectKind) {
    let a = pick_kind(rng);
    let shift = rng.gen_range(1..KIND_COUNT as u8);
    let b = ObjectKind((a.0 + shift) % KIND_COUNT as u8);
    (a, b)
}

fn pick_color(rng: &mut ChaCha8Rng) -> Color {
    Color(rng.gen_range(0..COLOR_COUNT as u8))
}

/// Draws a prompt of the given category. Pure in `(category, rng state)`;
/// the caller assigns the unique `id`.
pub fn generate_prompt(category: Category, rng: &mut ChaCha8Rng, id: u32) -> PromptSpec {
    let spec = match category {
        Category::SingleObject => PromptSpec {
            id,
            category,
            objects: alloc::vec![ObjectSpec {
                kind: pick_kind(rng),
                color: None,
                count: 1,
            }],
            relation: None,
        },
        Category::TwoObjects => {
            let (a, b) = pick_distinct_kinds(rng);
            PromptSpec {
                id,
                category,
                objects: alloc::vec![
                    ObjectSpec {
                        kind: a,
                        color: None,
                        count: 1,
                    },
                    ObjectSpec {
                        kind: b,
                        color: None,
                        count: 1,
                    },
                ],
                relation: None,
            }
        }
        Category::Counting => PromptSpec {
            id,
            category,
            objects: alloc::vec![ObjectSpec {
                kind: pick_kind(rng),
                color: None,
                count: rng.gen_range(2..=MAX_COUNT),
            }],
            relation: None,
        },
        Category::Colors => PromptSpec {
            id,
            category,
            objects: alloc::vec![ObjectSpec {
                kind: pick_kind(rng),
                color: Some(pick_color(rng)),
                count: 1,
            }],
            relation: None,
        },
        Category::ColorAttr => {
            let (a, b) = pick_distinct_kinds(rng);
            PromptSpec {
                id,
                category,
                objects: alloc::vec![
                    ObjectSpec {
                        kind: a,
                        color: Some(pick_color(rng)),
                        count: 1,
                    },
                    ObjectSpec {
                        kind: b,
                        color: Some(pick_color(rng)),
                        count: 1,
                    },
                ],
                relation: None,
            }
        }
        Category::Position => {
            let (a, b) = pick_distinct_kinds(rng);
            let relation = Relation::ALL[rng.gen_range(0..4)];
            PromptSpec {
                id,
                category,
                objects: alloc::vec![
                    ObjectSpec {
                        kind: a,
                        color: None,
                        count: 1,
                    },
                    ObjectSpec {
                        kind: b,
                        color: None,
                        count: 1,
                    },
                ],
                relation: Some(relation),
            }
        }
    };
    debug_assert!(spec.validate().is_ok());
    spec
}

/// Encodes a prompt as tokens: category marker, then per-object
/// `(kind, color-or-unspecified, count)`, then relation-or-none.
pub fn encode_prompt(spec: &PromptSpec, vocab: &Vocabulary) -> Vec<Token> {
    let mut out = Vec::with_capacity(2 + 3 * spec.objects.len());
    out.push(vocab.category_token(spec.category));
    for obj in &spec.objects {
        out.push(vocab.kind_token(obj.kind));
        out.push(match obj.color {
            Some(c) => vocab.color_token(c),
            None => vocab.unspecified_color_token(),
        });
        out.push(vocab.count_token(obj.count));
    }
    out.push(match spec.relation {
        Some(r) => vocab.relation_token(r),
        None => vocab.no_relation_token(),
    });
    out
}

/// Inverse of [`encode_prompt`]; `id` is metadata and must be supplied.
pub fn decode_prompt(tokens: &[Token], id: u32, vocab: &Vocabulary) -> Result<PromptSpec, CoreError> {
    let bad = |what: &'static str, token: Token| CoreError::TokenOutOfRange { what, token };
    if tokens.len() < 5 || (tokens.len() - 2) % 3 != 0 {
        return Err(CoreError::LengthMismatch {
            what: "prompt token sequence",
            expected: 5,
            got: tokens.len(),
        });
    }
    let category = *Category::ALL
        .get(tokens[0] as usize)
        .ok_or(bad("category marker", tokens[0]))?;
    let n_objects = (tokens.len() - 2) / 3;
    let mut objects = Vec::with_capacity(n_objects);
    for i in 0..n_objects {
        let base = 1 + 3 * i;
        let kind_tok = tokens[base];
        let color_tok = tokens[base + 1];
        let count_tok = tokens[base + 2];
        let kind_off = kind_tok.wrapping_sub(6) as usize;
        if kind_off >= KIND_COUNT {
            return Err(bad("kind token", kind_tok));
        }
        let color = if color_tok == vocab.unspecified_color_token() {
            None
        } else {
            let off = color_tok.wrapping_sub(vocab.color_token(Color(0))) as usize;
            if off >= COLOR_COUNT {
                return Err(bad("color token", color_tok));
            }
            Some(Color(off as u8))
        };
        let count_off = count_tok.wrapping_sub(vocab.count_token(1)) as usize;
        if count_off >= MAX_COUNT as usize {
            return Err(bad("count token", count_tok));
        }
        objects.push(ObjectSpec {
            kind: ObjectKind(kind_off as u8),
            color,
            count: count_off as u8 + 1,
        });
    }
    let rel_tok = tokens[tokens.len() - 1];
    let relation = if rel_tok == vocab.no_relation_token() {
        None
    } else {
        let off = rel_tok.wrapping_sub(vocab.relation_token(Relation::LeftOf)) as usize;
        if off >= 4 {
            return Err(bad("relation token", rel_tok));
        }
        Some(Relation::ALL[off])
    };
    Ok(PromptSpec {
        id,
        category,
        objects,
        relation,
    })
}

// ---------------------------------------------------------------------------
// Reward ensemble
// ---------------------------------------------------------------------------

/// Ensemble scores, the shaped length penalty, and the total reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub detection: f64,
    pub alignment: f64,
    pub preference: f64,
    /// `detection + alignment + preference`.
    pub model_sum: f64,
    /// Filled by the penalties module; zero from the raw ensemble.
    pub length_penalty: f64,
    /// `model_sum + length_penalty`.
    pub total: f64,
}

fn count_kind(scene: &Scene, kind: ObjectKind) -> usize {
    scene
        .cells()
        .iter()
        .filter(|c| matches!(c, Some((k, _)) if *k == kind))
        .count()
}

fn count_kind_color(scene: &Scene, kind: ObjectKind, color: Color) -> usize {
    scene
        .cells()
        .iter()
        .filter(|c| matches!(c, Some((k, col)) if *k == kind && *col == color))
        .count()
}

fn centroid(scene: &Scene, kind: ObjectKind) -> Option<(f64, f64)> {
    let mut n = 0usize;
    let mut row_sum = 0.0;
    let mut col_sum = 0.0;
    for (i, cell) in scene.cells().iter().enumerate() {
        if matches!(cell, Some((k, _)) if *k == kind) {
            let (r, c) = Scene::coords(i);
            row_sum += r as f64;
            col_sum += c as f64;
            n += 1;
        }
    }
    (n > 0).then(|| (row_sum / n as f64, col_sum / n as f64))
}

/// Detector analog: fraction of object entries whose kind appears with
/// exactly the requested count, mapped affinely into [0.6, 1.0].
pub fn reward_detection(scene: &Scene, spec: &PromptSpec) -> f64 {
    let hits = spec
        .objects
        .iter()
        .filter(|o| count_kind(scene, o.kind) == o.count as usize)
        .count();
    0.6 + 0.4 * (hits as f64 / spec.objects.len() as f64)
}

/// Alignment analog: mean of attribute indicators (specified colors
/// matched on at least `count` instances; relation satisfied by kind
/// centroids with strict inequality), mapped into [0.2, 0.8]. A prompt
/// with nothing specified scores the vacuous 0.8.
pub fn reward_alignment(scene: &Scene, spec: &PromptSpec) -> f64 {
    let mut indicators = 0usize;
    let mut satisfied = 0usize;
    for obj in &spec.objects {
        if let Some(color) = obj.color {
            indicators += 1;
            if count_kind_color(scene, obj.kind, color) >= obj.count as usize {
                satisfied += 1;
            }
        }
    }
    if let Some(rel) = spec.relation {
        indicators += 1;
        let a = centroid(scene, spec.objects[0].kind);
        let b = centroid(scene, spec.objects[1].kind);
        if let (Some((ar, ac)), Some((br, bc))) = (a, b) {
            let ok = match rel {
                Relation::LeftOf => ac < bc,
                Relation::RightOf => ac > bc,
                Relation::Above => ar < br,
                Relation::Below => ar > br,
            };
            if ok {
                satisfied += 1;
            }
        }
    }
    let fraction = if indicators == 0 {
        1.0
    } else {
        satisfied as f64 / indicators as f64
    };
    0.2 + 0.6 * fraction
}

/// Preference analog: tidiness in [0, 1] (one minus capped excess over
/// eight occupied cells, in eighths), mapped into [0.26, 0.32].
pub fn reward_preference(scene: &Scene) -> f64 {
    let excess = scene.occupied().saturating_sub(MAX_INSTANCES as usize);
    let tidiness = 1.0 - (excess.min(8) as f64) / 8.0;
    0.26 + 0.06 * tidiness
}

/// Runs the three scorers; the length penalty is attached later by the
/// penalties module, so `length_penalty` is zero and `total == model_sum`.
pub fn reward_ensemble(scene: &Scene, spec: &PromptSpec) -> RewardBreakdown {
    let detection = reward_detection(scene, spec);
    let alignment = reward_alignment(scene, spec);
    let preference = reward_preference(scene);
    let model_sum = detection + alignment + preference;
    RewardBreakdown {
        detection,
        alignment,
        preference,
        model_sum,
        length_penalty: 0.0,
        total: model_sum,
    }
}

// ---------------------------------------------------------------------------
// Benchmark suite and reference scenes
// ---------------------------------------------------------------------------

/// Builds a deterministic prompt suite: `counts[i]` prompts of category
/// `Category::ALL[i]`, ids sequential in generation order, each prompt
/// drawn from its own seed split (so the suite is stable under reordering).
pub fn benchmark_suite(counts: &[(Category, u32)], seed: u64) -> Vec<PromptSpec> {
    let mut out = Vec::new();
    let mut id = 0u32;
    for (cat_idx, (category, count)) in counts.iter().enumerate() {
        let cat_seed = rng::split(seed, cat_idx as u64);
        for i in 0..*count {
            let mut stream = rng::stream(rng::split(cat_seed, i as u64));
            out.push(generate_prompt(*category, &mut stream, id));
            id += 1;
        }
    }
    out
}

/// Suite with `per_category` prompts of every category.
pub fn uniform_suite(per_category: u32, seed: u64) -> Vec<PromptSpec> {
    let counts: Vec<(Category, u32)> =
        Category::ALL.iter().map(|c| (*c, per_category)).collect();
    benchmark_suite(&counts, seed)
}

/// A deterministic scene that satisfies the prompt exactly: requested
/// instances are placed row-major from cell 0 (relations override with
/// fixed opposing cells); unspecified colors fall back to color 0.
pub fn reference_scene(spec: &PromptSpec) -> Scene {
    let mut scene = Scene::empty();
    let color_of = |o: &ObjectSpec| o.color.unwrap_or(Color(0));
    if let Some(rel) = spec.relation {
        let (cell_a, cell_b) = match rel {
            Relation::LeftOf => (GRID_DIM, 2 * GRID_DIM - 1), // (1,0) and (1,3)
            Relation::RightOf => (2 * GRID_DIM - 1, GRID_DIM),
            Relation::Above => (1, 3 * GRID_DIM + 1), // (0,1) and (3,1)
            Relation::Below => (3 * GRID_DIM + 1, 1),
        };
        scene.set(cell_a, Some((spec.objects[0].kind, color_of(&spec.objects[0]))));
        scene.set(cell_b, Some((spec.objects[1].kind, color_of(&spec.objects[1]))));
    } else {
        let mut cell = 0usize;
        for obj in &spec.objects {
            for _ in 0..obj.count {
                scene.set(cell, Some((obj.kind, color_of(obj))));
                cell += 1;
            }
        }
    }
    scene
}
