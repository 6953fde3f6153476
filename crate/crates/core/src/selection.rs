//! View selection: similarity, flatness, z-score filters, duplicate removal
//! and object relevance, turning the 42 grid views into a short list.

use serde::{Deserialize, Serialize};

use crate::backends::{cosine, Backend, BackendError, DetectionBackend, DetectionBox, EmbeddingBackend};
use crate::renderer::{unique_depth, PixelBox, SampledView};
use crate::viewgrid::ViewGrid;

pub const DUP_THRESHOLD: f64 = 0.95;
pub const BOX_THRESHOLD: f64 = 0.50;
pub const TEXT_THRESHOLD: f64 = 0.35;
/// Boxes overlapping the whole model's silhouette box beyond this IoU are
/// not evidence of any particular object.
pub const FULL_SILHOUETTE_IOU: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StageStatus {
    Kept,
    RejectedSimilarity,
    RejectedFlatness,
    RejectedDuplicate,
    RejectedObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ZMode {
    RejectLow,
    RejectHigh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewScore {
    pub index: usize,
    pub s: f64,
    pub f: f64,
    /// Only computed for views that reach the object stage.
    pub o: Option<f64>,
    pub d_unique: usize,
    pub status: StageStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewScoreSet {
    pub per_view: Vec<ViewScore>,
}

impl ViewScoreSet {
    pub fn get(&self, index: usize) -> &ViewScore {
        &self.per_view[index]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntitySet {
    pub entities: Vec<String>,
    pub comparative_prompt: String,
}

impl EntitySet {
    pub fn new(entities: Vec<String>) -> Self {
        let comparative_prompt = entities.join(", ");
        Self { entities, comparative_prompt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntityConfidence {
    pub entity: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DetectionResult {
    pub view: usize,
    pub boxes: Vec<DetectionBox>,
    /// Boxes dropped for covering the whole model.
    pub omitted: Vec<DetectionBox>,
    pub per_entity_confidence: Vec<EntityConfidence>,
}

impl DetectionResult {
    pub fn object_score(&self) -> f64 {
        if self.per_entity_confidence.is_empty() {
            return 0.0;
        }
        self.per_entity_confidence.iter().map(|e| e.confidence).sum::<f64>() / self.per_entity_confidence.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectedViews {
    /// Final view indices, by descending similarity.
    pub views: Vec<usize>,
    pub entities: EntitySet,
    pub scores: ViewScoreSet,
    pub detections: Vec<DetectionResult>,
    pub low_confidence: bool,
}

impl SelectedViews {
    pub fn trace_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("selection trace serializes")
    }
}

/// Population z-scores; `None` when the values have no spread.
pub fn z_scores(values: &[f64]) -> Option<Vec<f64>> {
    if values.is_empty() {
        return None;
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == min {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sigma = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sigma > 0.0) {
        return None;
    }
    Some(values.iter().map(|v| (v - mean) / sigma).collect())
}

/// Positions in `values` surviving a one-sided z-score cut at 1.
pub fn z_filter(values: &[f64], mode: ZMode) -> Vec<usize> {
    match z_scores(values) {
        None => (0..values.len()).collect(),
        Some(z) => z
            .iter()
            .enumerate()
            .filter(|(_, &z)| match mode {
                ZMode::RejectLow => z >= -1.0,
                ZMode::RejectHigh => z <= 1.0,
            })
            .map(|(i, _)| i)
            .collect(),
    }
}

/// Mean absolute similarity difference to each view's lattice neighbors.
pub fn compute_flatness(s: &[f64], grid: &ViewGrid) -> Vec<f64> {
    (0..s.len())
        .map(|i| {
            let n = grid.neighbors(i);
            n.iter().map(|&j| (s[i] - s[j]).abs()).sum::<f64>() / n.len() as f64
        })
        .collect()
}

pub fn embed_views(views: &[SampledView], backend: &dyn EmbeddingBackend) -> Result<Vec<Vec<f32>>, BackendError> {
    views.iter().map(|v| backend.embed_image(v)).collect()
}

fn similarity(image: &[f32], text: &[f32]) -> Result<f64, BackendError> {
    if image.len() != text.len() {
        return Err(BackendError::Malformed(format!(
            "embedding dimensions differ: image {} vs text {}",
            image.len(),
            text.len()
        )));
    }
    let s = cosine(image, text);
    if s.is_finite() {
        Ok(s)
    } else {
        Err(BackendError::Malformed("non-finite embedding".into()))
    }
}

pub fn similarities(images: &[Vec<f32>], text: &[f32]) -> Result<Vec<f64>, BackendError> {
    images.iter().map(|e| similarity(e, text)).collect()
}

pub fn score_similarity(
    views: &[SampledView],
    prompt: &str,
    backend: &dyn EmbeddingBackend,
) -> Result<Vec<f64>, BackendError> {
    let text = backend.embed_text(prompt)?;
    similarities(&embed_views(views, backend)?, &text)
}

/// Greedy pass over `kept` in descending `s`: a view survives unless its
/// embedding is closer than the threshold to an earlier survivor. Returns
/// survivors in pass order.
pub fn dedup_views(kept: &[usize], s: &[f64], embeddings: &[Vec<f32>]) -> Vec<usize> {
    let mut order = kept.to_vec();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut survivors: Vec<usize> = Vec::new();
    for i in order {
        if survivors.iter().all(|&j| cosine(&embeddings[i], &embeddings[j]) <= DUP_THRESHOLD) {
            survivors.push(i);
        }
    }
    survivors
}

fn to_box(b: PixelBox) -> DetectionBox {
    DetectionBox {
        x0: b.x0 as f64,
        y0: b.y0 as f64,
        x1: b.x1 as f64,
        y1: b.y1 as f64,
        confidence: 1.0,
        phrase: String::new(),
    }
}

/// Boxes for `entity` that pass the thresholds, split into retained and
/// omitted (whole-model) boxes.
pub fn detect_entity(
    view: &SampledView,
    entity: &str,
    backend: &dyn DetectionBackend,
) -> Result<(Vec<DetectionBox>, Vec<DetectionBox>), BackendError> {
    let boxes = backend.detect(view, entity, BOX_THRESHOLD, TEXT_THRESHOLD)?;
    let silhouette = view.silhouette_bounds().map(to_box);
    let (w, h) = (view.width as f64, view.height as f64);
    let mut retained = Vec::new();
    let mut omitted = Vec::new();
    for b in boxes {
        if !(0.0..=1.0).contains(&b.confidence) || b.x0 < 0.0 || b.y0 < 0.0 || b.x1 > w || b.y1 > h {
            return Err(BackendError::Malformed(format!("detection box out of range: {b:?}")));
        }
        if b.confidence < BOX_THRESHOLD {
            continue;
        }
        if silhouette.as_ref().is_some_and(|s| b.iou(s) > FULL_SILHOUETTE_IOU) {
            omitted.push(b);
        } else {
            retained.push(b);
        }
    }
    Ok((retained, omitted))
}

/// Per-entity maximum confidence (zero when nothing is retained), averaged
/// over entities.
pub fn object_score(
    view: &SampledView,
    entities: &EntitySet,
    backend: &dyn DetectionBackend,
) -> Result<(f64, DetectionResult), BackendError> {
    let mut result =
        DetectionResult { view: view.index, boxes: Vec::new(), omitted: Vec::new(), per_entity_confidence: Vec::new() };
    for entity in &entities.entities {
        let (retained, omitted) = detect_entity(view, entity, backend)?;
        let confidence = retained.iter().map(|b| b.confidence).fold(0.0, f64::max);
        result.per_entity_confidence.push(EntityConfidence { entity: entity.clone(), confidence });
        result.boxes.extend(retained);
        result.omitted.extend(omitted);
    }
    Ok((result.object_score(), result))
}

/// Extracts the question's entities, then runs [`select_views_with_entities`].
pub fn select_views(
    views: &[SampledView],
    grid: &ViewGrid,
    question: &str,
    backend: &dyn Backend,
) -> Result<SelectedViews, BackendError> {
    let entities = crate::reasoning::extract_entities(question, backend)?;
    select_views_with_entities(views, grid, entities, backend)
}

pub fn select_views_with_entities(
    views: &[SampledView],
    grid: &ViewGrid,
    entities: EntitySet,
    backend: &dyn Backend,
) -> Result<SelectedViews, BackendError> {
    let n = views.len();
    assert_eq!(n, grid.poses.len(), "one rendered view per grid pose");
    let text = backend.embed_text(&entities.comparative_prompt)?;
    let embeddings = embed_views(views, backend)?;
    let s = similarities(&embeddings, &text)?;
    let f = compute_flatness(&s, grid);
    let mut per_view: Vec<ViewScore> = (0..n)
        .map(|i| ViewScore {
            index: i,
            s: s[i],
            f: f[i],
            o: None,
            d_unique: unique_depth(&views[i]),
            status: StageStatus::RejectedSimilarity,
        })
        .collect();

    let all: Vec<usize> = (0..n).collect();
    let after_s = pick(&all, z_filter(&s, ZMode::RejectLow));
    mark(&mut per_view, &after_s, StageStatus::RejectedFlatness);
    let f_kept: Vec<f64> = after_s.iter().map(|&i| f[i]).collect();
    let after_f = pick(&after_s, z_filter(&f_kept, ZMode::RejectHigh));
    mark(&mut per_view, &after_f, StageStatus::RejectedDuplicate);
    let after_dup = dedup_views(&after_f, &s, &embeddings);
    mark(&mut per_view, &after_dup, StageStatus::RejectedObject);

    let mut detections = Vec::new();
    let mut o = Vec::new();
    for &i in &after_dup {
        let (score, det) = object_score(&views[i], &entities, backend)?;
        per_view[i].o = Some(score);
        o.push(score);
        detections.push(det);
    }
    let after_o = pick(&after_dup, z_filter(&o, ZMode::RejectLow));

    let mut low_confidence = false;
    let mut selected = after_o;
    if selected.is_empty() {
        low_confidence = true;
        selected = vec![all.iter().copied().max_by(|&a, &b| s[a].total_cmp(&s[b]).then(b.cmp(&a))).unwrap_or(0)];
    }
    mark(&mut per_view, &selected, StageStatus::Kept);
    selected.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    Ok(SelectedViews {
        views: selected,
        entities,
        scores: ViewScoreSet { per_view },
        detections,
        low_confidence,
    })
}

fn pick(indices: &[usize], positions: Vec<usize>) -> Vec<usize> {
    positions.into_iter().map(|p| indices[p]).collect()
}

fn mark(per_view: &mut [ViewScore], indices: &[usize], status: StageStatus) {
    for &i in indices {
        per_view[i].status = status;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{compute_aabb, MeshBuilder};
    use crate::backends::MockBackend;
    use crate::geometry::Vec3;
    use crate::renderer::{render_view_with, CameraPose, RenderSettings};
    use crate::viewgrid::{build_view_grid, POSE_COUNT};
    use proptest::prelude::*;

    fn grid() -> ViewGrid {
        build_view_grid(&crate::assets::Aabb { min: Vec3::ZERO, max: Vec3::new(1.0, 1.0, 1.0) }).unwrap()
    }

    /// 42 scores where the population mean minus one deviation is 0.26 and
    /// only 0.24 and 0.25 fall below it.
    pub(crate) fn worked_example_scores() -> Vec<f64> {
        let build = |c: f64| {
            let mut v = vec![0.24, 0.25];
            for k in 0..40 {
                v.push(if k % 2 == 0 { 0.34 + c } else { 0.34 - c });
            }
            v
        };
        let gap = |c: f64| {
            let v = build(c);
            let mean = v.iter().sum::<f64>() / 42.0;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 42.0).sqrt();
            mean - sd - 0.26
        };
        let (mut lo, mut hi) = (0.0, 0.1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        build(0.5 * (lo + hi))
    }

    #[test]
    fn worked_example_rejects_two_views() {
        let v = worked_example_scores();
        let mean = v.iter().sum::<f64>() / 42.0;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 42.0).sqrt();
        assert!((mean - sd - 0.26).abs() < 1e-12);
        let kept = z_filter(&v, ZMode::RejectLow);
        let rejected: Vec<f64> = (0..42).filter(|i| !kept.contains(i)).map(|i| v[i]).collect();
        assert_eq!(rejected, vec![0.24, 0.25]);
    }

    #[test]
    fn constant_values_are_all_kept() {
        assert_eq!(z_filter(&[0.1; 42], ZMode::RejectLow).len(), 42);
        assert_eq!(z_filter(&[0.3; 5], ZMode::RejectHigh).len(), 5);
        assert_eq!(z_filter(&[7.0], ZMode::RejectLow), vec![0]);
    }

    #[test]
    fn flatness_single_deviating_neighbor() {
        let g = grid();
        let i = (0..POSE_COUNT).find(|&i| g.neighbors(i).len() == 6).unwrap();
        let mut s = vec![0.5; POSE_COUNT];
        s[g.neighbors(i)[0]] = 0.56;
        let f = compute_flatness(&s, &g);
        assert!((f[i] - 0.01).abs() < 1e-12);
        assert!(compute_flatness(&vec![0.3; POSE_COUNT], &g).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn object_score_averages_entity_maxima() {
        let r = |c: &[f64]| DetectionResult {
            view: 0,
            boxes: vec![],
            omitted: vec![],
            per_entity_confidence: c
                .iter()
                .map(|&confidence| EntityConfidence { entity: "e".into(), confidence })
                .collect(),
        };
        assert!((r(&[0.8, 0.6]).object_score() - 0.7).abs() < 1e-12);
        assert!((r(&[0.9, 0.0]).object_score() - 0.45).abs() < 1e-12);
    }

    #[test]
    fn dedup_keeps_one_of_identical_views() {
        let e = vec![vec![1.0f32, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(dedup_views(&[0, 1, 2], &[0.2, 0.5, 0.1], &e), vec![1, 2]);
        let orth = vec![vec![1.0f32, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(dedup_views(&[0, 1, 2], &[0.1, 0.2, 0.3], &orth), vec![2, 1, 0]);
    }

    #[test]
    fn whole_model_boxes_are_omitted() {
        let mut b = MeshBuilder::new();
        b.object("mug").cuboid(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.5), [200, 40, 40]);
        let mesh = b.build("m").unwrap();
        let settings = RenderSettings { width: 128, height: 128, fov_y_deg: 45.0 };
        let view =
            render_view_with(&mesh, &CameraPose { target: Vec3::ZERO, alpha: 0.0, beta: 0.0, r: 3.0 }, &settings);
        let mock = MockBackend::default();
        let (retained, omitted) = detect_entity(&view, "mug", &mock).unwrap();
        assert!(retained.is_empty());
        assert_eq!(omitted.len(), 1);
        let (o, _) = object_score(&view, &EntitySet::new(vec!["mug".into()]), &mock).unwrap();
        assert_eq!(o, 0.0);
    }

    #[test]
    fn single_object_pipeline_is_never_empty() {
        let mut b = MeshBuilder::new();
        b.object("ball").sphere(Vec3::ZERO, 1.0, 16, [40, 40, 200]);
        let mesh = b.build("sphere").unwrap();
        let grid = build_view_grid(&compute_aabb(&mesh).unwrap()).unwrap();
        let settings = RenderSettings { width: 64, height: 64, fov_y_deg: 45.0 };
        let views: Vec<SampledView> = grid
            .poses
            .iter()
            .enumerate()
            .map(|(i, p)| render_view_with(&mesh, p, &settings).with_index(i))
            .collect();
        let mock = MockBackend::default();
        let sel =
            select_views_with_entities(&views, &grid, EntitySet::new(vec!["ball".into()]), &mock).unwrap();
        assert!(!sel.views.is_empty());
        let kept = sel.scores.per_view.iter().filter(|v| v.status == StageStatus::Kept).count();
        assert_eq!(kept, sel.views.len());
        assert!(sel.views.windows(2).all(|w| sel.scores.get(w[0]).s >= sel.scores.get(w[1]).s));
        let trace = sel.trace_json();
        assert_eq!(trace["scores"]["perView"].as_array().unwrap().len(), POSE_COUNT);
    }

    proptest! {
        #[test]
        fn z_filter_is_affine_invariant(
            v in prop::collection::vec(-1.0f64..1.0, 1..60),
            a in 0.01f64..100.0,
            b in -10.0f64..10.0,
        ) {
            let t: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            let z = z_scores(&v);
            // Skip inputs with a score within rounding of the cut.
            if let Some(z) = &z {
                prop_assume!(z.iter().all(|z| (z.abs() - 1.0).abs() > 1e-9));
            }
            prop_assert_eq!(z_filter(&v, ZMode::RejectLow), z_filter(&t, ZMode::RejectLow));
            prop_assert_eq!(z_filter(&v, ZMode::RejectHigh), z_filter(&t, ZMode::RejectHigh));
        }

        #[test]
        fn extreme_views_survive(v in prop::collection::vec(-1.0f64..1.0, 1..60)) {
            let best = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
            let flattest = (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
            prop_assert!(z_filter(&v, ZMode::RejectLow).contains(&best));
            prop_assert!(z_filter(&v, ZMode::RejectHigh).contains(&flattest));
        }

        #[test]
        fn flatness_matches_double_loop(s in prop::collection::vec(-1.0f64..1.0, POSE_COUNT)) {
            let g = grid();
            let f = compute_flatness(&s, &g);
            for i in 0..POSE_COUNT {
                let mut total = 0.0;
                let mut count = 0;
                for j in 0..POSE_COUNT {
                    if g.lattice[i].neighbors.contains(&j) {
                        total += (s[i] - s[j]).abs();
                        count += 1;
                    }
                }
                prop_assert!((f[i] - total / count as f64).abs() < 1e-12);
                prop_assert!(f[i] >= 0.0);
            }
        }
    }
}
