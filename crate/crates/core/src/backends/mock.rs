//! Deterministic mock of all four backend roles.
//!
//! The mock reads the renderer's ground truth (object-id map, per-object
//! coverage, object names) instead of pixels, so every reply can be checked
//! against an independent recount. It keeps no state and never touches the
//! clock or the network.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{
    Backend, BackendError, BackendKind, ComponentHealth, DetectionBackend, DetectionBox, EmbeddingBackend,
    MultimodalBackend, TextGenBackend,
};
use crate::prompts;
use crate::renderer::SampledView;
use crate::text::{canonical_label, head_noun, singularize, words, STOPWORDS};

pub const DEFAULT_VOCABULARY: &[&str] = &[
    "desk", "display", "monitor", "screen", "keyboard", "mouse", "lamp", "chair", "seat", "handle",
    "wheel", "table", "mug", "cup", "book", "bottle", "plant", "pot", "vase", "laptop", "speaker",
    "shelf", "drawer", "leg", "bike", "frame", "pedal", "saddle", "car", "door", "window", "bed",
    "pillow", "sofa", "cabinet", "box", "ball", "cube", "sphere", "phone", "clock", "house", "roof",
    "tree", "bowl", "plate", "glass", "computer", "basket", "bag", "armrest", "backrest", "cushion",
    "stand", "tray", "candle", "fan", "headphone", "printer", "rug", "sign", "toy", "trophy",
];

/// Named colors used as the mock's style axes.
pub const STYLE_COLORS: &[(&str, [u8; 3])] = &[
    ("red", [200, 30, 30]),
    ("green", [40, 160, 60]),
    ("blue", [40, 70, 200]),
    ("yellow", [230, 210, 40]),
    ("orange", [240, 140, 30]),
    ("purple", [130, 60, 160]),
    ("brown", [120, 80, 40]),
    ("black", [20, 20, 20]),
    ("white", [245, 245, 245]),
    ("gray", [128, 128, 128]),
];

/// Weight of the color histogram relative to the object axes in image embeddings.
const STYLE_WEIGHT: f64 = 0.25;

/// Instances showing fewer pixels than this are not detected.
pub const MIN_DETECTABLE_PIXELS: u32 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new(DEFAULT_VOCABULARY.iter().map(|s| s.to_string()))
    }
}

impl Vocabulary {
    pub fn new(entries: impl IntoIterator<Item = String>) -> Self {
        let mut v = Vocabulary { entries: Vec::new(), index: HashMap::new() };
        for e in entries {
            v.insert(&e);
        }
        v
    }

    fn insert(&mut self, name: &str) {
        let label = canonical_label(name);
        if !label.is_empty() && !self.index.contains_key(&label) {
            self.index.insert(label.clone(), self.entries.len());
            self.entries.push(label);
        }
    }

    /// Adds the canonical labels of `names` not already present.
    pub fn extended(mut self, names: &[String]) -> Self {
        for n in names {
            self.insert(n);
        }
        self
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Axis of an object label: the full label, else its head noun.
    pub fn axis_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).or_else(|| self.index.get(head_noun(label))).copied()
    }

    /// Vocabulary entries mentioned in `text`, in order of first mention,
    /// preferring the longest multi-word match.
    pub fn find_in(&self, text: &str) -> Vec<String> {
        let ws: Vec<String> = words(text).iter().map(|w| singularize(w)).collect();
        let mut found: Vec<String> = Vec::new();
        let mut i = 0;
        while i < ws.len() {
            let mut step = 1;
            for len in (1..=3.min(ws.len() - i)).rev() {
                let candidate = ws[i..i + len].join(" ");
                if self.index.contains_key(&candidate) {
                    if !found.contains(&candidate) {
                        found.push(candidate);
                    }
                    step = len;
                    break;
                }
            }
            i += step;
        }
        found
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    vocabulary: Vocabulary,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(Vocabulary::default())
    }
}

fn nearest_style(rgb: [u8; 3]) -> usize {
    let dist = |c: [u8; 3]| -> i32 { (0..3).map(|k| (rgb[k] as i32 - c[k] as i32).pow(2)).sum() };
    (0..STYLE_COLORS.len()).min_by_key(|&i| dist(STYLE_COLORS[i].1)).expect("palette non-empty")
}

fn normalized(v: Vec<f64>) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / norm) as f32).collect()
}

/// Match strength of a detection phrase against an object label.
fn phrase_score(phrase: &str, label: &str) -> f64 {
    if phrase == label {
        return 1.0;
    }
    if head_noun(phrase) == head_noun(label) {
        return 0.75;
    }
    let a: HashSet<&str> = phrase.split(' ').collect();
    let b: HashSet<&str> = label.split(' ').collect();
    let inter = a.intersection(&b).count() as f64;
    let union = a.union(&b).count() as f64;
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn is_counting_question(question: &str) -> bool {
    let ws = words(question);
    let pair = |a: &str, b: &str| ws.windows(2).any(|w| w[0] == a && w[1] == b);
    pair("how", "many")
        || pair("number", "of")
        || ws.iter().any(|w| matches!(w.as_str(), "count" | "counts" | "counting" | "tally"))
}

impl MockBackend {
    pub fn new(vocabulary: Vocabulary) -> Self {
        Self { vocabulary }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    /// Embedding dimension: vocabulary, style colors, then the background
    /// and unknown-text axes.
    pub fn dimension(&self) -> usize {
        self.vocabulary.len() + STYLE_COLORS.len() + 2
    }

    fn background_axis(&self) -> usize {
        self.vocabulary.len() + STYLE_COLORS.len()
    }

    fn unknown_axis(&self) -> usize {
        self.background_axis() + 1
    }

    fn extract_entities(&self, question: &str) -> String {
        let found = self.vocabulary.find_in(question);
        if found.is_empty() {
            "NONE".to_string()
        } else {
            found.join(", ")
        }
    }

    fn compare(&self, answers: &[String]) -> String {
        // Case-insensitive token sets; the first spelling seen is displayed.
        let mut display: HashMap<String, String> = HashMap::new();
        let sets: Vec<Vec<String>> = answers
            .iter()
            .map(|a| {
                let mut seen = Vec::new();
                for raw in a.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
                    let key = raw.to_lowercase();
                    if STOPWORDS.contains(&key.as_str()) || seen.contains(&key) {
                        continue;
                    }
                    display.entry(key.clone()).or_insert_with(|| raw.to_string());
                    seen.push(key);
                }
                seen
            })
            .collect();
        let shared: Vec<&String> = match sets.first() {
            Some(first) => first.iter().filter(|t| sets.iter().all(|s| s.contains(t))).collect(),
            None => Vec::new(),
        };
        let similarities = if shared.is_empty() {
            "No notable similarities.".to_string()
        } else {
            let list: Vec<&str> = shared.iter().map(|t| display[*t].as_str()).collect();
            format!("All models mention {}.", list.join(", "))
        };
        let per_model: Vec<String> = sets
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let own: Vec<&str> = s.iter().filter(|t| !shared.contains(t)).map(|t| display[t].as_str()).collect();
                (!own.is_empty()).then(|| format!("Model {} mentions {}", i + 1, own.join(", ")))
            })
            .collect();
        let differences = if per_model.is_empty() {
            "No notable differences.".to_string()
        } else {
            format!("{}.", per_model.join("; "))
        };
        format!("Similarities: {similarities}\nDifferences: {differences}")
    }

    fn describe(&self, views: &[&SampledView]) -> String {
        // label -> (max visible instances in one view, total visible pixels, rgb sums)
        let mut stats: BTreeMap<String, (usize, u64, [u64; 3])> = BTreeMap::new();
        for view in views {
            let visible = view.visible_pixels();
            let mut per_view: BTreeMap<String, usize> = BTreeMap::new();
            for (k, name) in view.object_names.iter().enumerate() {
                if visible[k] >= MIN_DETECTABLE_PIXELS {
                    *per_view.entry(canonical_label(name)).or_default() += 1;
                }
            }
            for (label, count) in per_view {
                let e = stats.entry(label).or_default();
                e.0 = e.0.max(count);
            }
            for (i, &id) in view.object_ids.iter().enumerate() {
                if id < 0 || visible[id as usize] < MIN_DETECTABLE_PIXELS {
                    continue;
                }
                let e = stats.entry(canonical_label(&view.object_names[id as usize])).or_default();
                e.1 += 1;
                for k in 0..3 {
                    e.2[k] += view.rgb[i * 3 + k] as u64;
                }
            }
        }
        let Some((primary, (_, pixels, sums))) = stats.iter().max_by(|a, b| a.1 .1.cmp(&b.1 .1).then(b.0.cmp(a.0)))
        else {
            return "Nothing is visible in the provided views.".to_string();
        };
        let mean = sums.map(|s| (s / pixels.max(&1)) as u8);
        let color = STYLE_COLORS[nearest_style(mean)].0;
        let others: Vec<String> = stats
            .iter()
            .filter(|(label, _)| *label != primary)
            .map(|(label, (count, _, _))| format!("{label} ×{count}"))
            .collect();
        if others.is_empty() {
            format!("A {color} {primary}.")
        } else {
            format!("A {color} {primary} with: {}.", others.join(", "))
        }
    }
}

impl EmbeddingBackend for MockBackend {
    /// One-hot sum over the vocabulary entries and color words in `text`.
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::Malformed("empty text".into()));
        }
        let mut v = vec![0.0; self.dimension()];
        for entity in self.vocabulary.find_in(text) {
            v[self.vocabulary.axis_of(&entity).expect("found entries are indexed")] = 1.0;
        }
        for w in words(text) {
            if let Some(i) = STYLE_COLORS.iter().position(|(name, _)| *name == w) {
                v[self.vocabulary.len() + i] = 1.0;
            }
        }
        if v.iter().all(|&x| x == 0.0) {
            v[self.unknown_axis()] = 1.0;
        }
        Ok(normalized(v))
    }

    /// Visible-fraction vector over vocabulary labels plus a weighted color
    /// histogram; an empty view maps to the background axis.
    fn embed_image(&self, view: &SampledView) -> Result<Vec<f32>, BackendError> {
        let mut v = vec![0.0; self.dimension()];
        let foreground = view.object_ids.iter().filter(|&&id| id >= 0).count();
        if foreground == 0 {
            v[self.background_axis()] = 1.0;
            return Ok(normalized(v));
        }
        let fractions = crate::renderer::visible_fractions(view, view.object_count());
        for (name, f) in view.object_names.iter().zip(&fractions) {
            if let Some(axis) = self.vocabulary.axis_of(&canonical_label(name)) {
                v[axis] += f;
            }
        }
        let mut hist = vec![0usize; STYLE_COLORS.len()];
        for (i, &id) in view.object_ids.iter().enumerate() {
            if id >= 0 {
                hist[nearest_style([view.rgb[i * 3], view.rgb[i * 3 + 1], view.rgb[i * 3 + 2]])] += 1;
            }
        }
        for (k, count) in hist.iter().enumerate() {
            v[self.vocabulary.len() + k] += STYLE_WEIGHT * *count as f64 / foreground as f64;
        }
        Ok(normalized(v))
    }
}

impl DetectionBackend for MockBackend {
    /// One box per visible instance whose label matches `phrase`, bounded by
    /// its pixels in the id map; confidence = clamp(2 × unoccluded share).
    fn detect(
        &self,
        view: &SampledView,
        phrase: &str,
        box_threshold: f64,
        text_threshold: f64,
    ) -> Result<Vec<DetectionBox>, BackendError> {
        if !(0.0..=1.0).contains(&box_threshold) || !(0.0..=1.0).contains(&text_threshold) {
            return Err(BackendError::Malformed("thresholds must lie in [0, 1]".into()));
        }
        let phrase = canonical_label(phrase);
        if phrase.is_empty() {
            return Err(BackendError::Malformed("empty phrase".into()));
        }
        let visible = view.visible_pixels();
        let ratios = view.visibility_ratios();
        let bounds = view.object_bounds();
        let mut boxes = Vec::new();
        for (k, name) in view.object_names.iter().enumerate() {
            let label = canonical_label(name);
            if phrase_score(&phrase, &label) < text_threshold || visible[k] < MIN_DETECTABLE_PIXELS {
                continue;
            }
            let confidence = (2.0 * ratios[k]).clamp(0.0, 1.0);
            if confidence < box_threshold {
                continue;
            }
            let b = bounds[k].expect("visible objects have bounds");
            boxes.push(DetectionBox {
                x0: b.x0 as f64,
                y0: b.y0 as f64,
                x1: b.x1 as f64,
                y1: b.y1 as f64,
                confidence,
                phrase: label,
            });
        }
        Ok(boxes)
    }
}

impl TextGenBackend for MockBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::Malformed("empty prompt".into()));
        }
        if prompt.starts_with(prompts::ENTITY_HEADER) {
            let q = prompts::question_of(prompt).unwrap_or("");
            Ok(self.extract_entities(q))
        } else if prompt.starts_with(prompts::CLASSIFY_HEADER) {
            let q = prompts::question_of(prompt).unwrap_or("");
            Ok(if is_counting_question(q) { "Counting" } else { "Other" }.to_string())
        } else if prompt.starts_with(prompts::COMPARE_HEADER) {
            Ok(self.compare(&prompts::comparison_answers(prompt)))
        } else {
            Ok("Unsupported request.".to_string())
        }
    }
}

impl MultimodalBackend for MockBackend {
    /// Enumerates the visible objects across `views`.
    fn generate_multimodal(&self, views: &[&SampledView], prompt: &str) -> Result<String, BackendError> {
        if prompt.trim().is_empty() {
            return Err(BackendError::Malformed("empty prompt".into()));
        }
        Ok(self.describe(views))
    }
}

impl Backend for MockBackend {
    fn reported_latency_ms(&self) -> Option<u64> {
        Some(0)
    }

    fn health(&self) -> Vec<ComponentHealth> {
        BackendKind::ALL
            .iter()
            .map(|&kind| ComponentHealth { kind, endpoint: "mock".into(), status: "ok".into(), detail: None })
            .collect()
    }

    fn name(&self) -> &str {
        "mock"
    }
}
