use std::fs;
use std::net::TcpListener;

use sweeper_core::backends::{BackendConfig, BackendDescriptor, BackendKind};
use sweeper_core::session::{
    create_session, replay_transcript, Cell, ModelSource, SessionData, SessionOptions, SESSION_FILE, TRANSCRIPT_FILE,
};

fn sources(names: &[&str]) -> Vec<ModelSource> {
    names.iter().map(|n| ModelSource::parse(&format!("fixture:{n}"))).collect()
}

fn table_json(data: &SessionData) -> String {
    serde_json::to_string(&data.table(&[])).unwrap()
}

#[test]
fn reload_reproduces_the_table() {
    let store = tempfile::tempdir().unwrap();
    let mut s = create_session(
        &sources(&["desk:0", "desk:1"]),
        &BackendConfig::Mock,
        SessionOptions::frozen(7).with_store(store.path()),
    )
    .unwrap();
    s.ask("how many displays are on the desk?").unwrap();
    s.ask("What color is the lamp?").unwrap();
    let dir = s.dir().unwrap().to_path_buf();
    assert!(dir.join("views/model-2/41.png").exists());

    let loaded = SessionData::load(&dir).unwrap();
    assert_eq!(loaded, s.data);
    assert_eq!(table_json(&loaded), table_json(&s.data));
}

#[test]
fn multi_model_counting_row_has_comparison() {
    let mut s = create_session(&sources(&["desk:0", "desk:2"]), &BackendConfig::Mock, SessionOptions::frozen(0)).unwrap();
    let row = s.ask("how many displays are on the desk?").unwrap().clone();
    assert_eq!(row.cells, vec![Cell::Answer { text: "2".into() }, Cell::Answer { text: "2".into() }]);
    assert!(row.similarities.as_deref().is_some_and(|t| !t.is_empty()));
    assert!(row.differences.is_some());
    assert_eq!(row.timing_ms.len(), 2);
    let trace = s.data.trace("r1").unwrap();
    assert_eq!(trace.models.len(), 2);
    assert!(trace.comparison.is_some());
    let counting = trace.models[0].answer.as_ref().unwrap().counting.as_ref().unwrap();
    assert_eq!(counting.target, "display");
}

#[test]
fn follow_up_rows_leave_earlier_rows_untouched() {
    let store = tempfile::tempdir().unwrap();
    let mut s = create_session(
        &sources(&["counting:3", "desk:0"]),
        &BackendConfig::Mock,
        SessionOptions::frozen(1).with_store(store.path()),
    )
    .unwrap();
    s.ask("What is on the table?").unwrap();
    let dir = s.dir().unwrap().to_path_buf();
    let first = fs::read_to_string(dir.join(SESSION_FILE)).unwrap();
    let first_transcript = fs::read_to_string(dir.join(TRANSCRIPT_FILE)).unwrap();
    let row1 = s.data.rows[0].clone();

    s.ask("how many mugs are there?").unwrap();
    s.ask("Describe the scene.").unwrap();
    let later = fs::read_to_string(dir.join(SESSION_FILE)).unwrap();
    let later_transcript = fs::read_to_string(dir.join(TRANSCRIPT_FILE)).unwrap();
    assert!(later.starts_with(&first));
    assert!(later_transcript.starts_with(&first_transcript));
    assert_eq!(s.data.rows[0], row1);
    let ids: Vec<&str> = s.data.rows.iter().map(|r| r.row_id.as_str()).collect();
    assert_eq!(ids, ["r1", "r2", "r3"]);

    let report = replay_transcript(&later_transcript, None).unwrap();
    assert!(report.identical(), "{:?}", report.mismatches);
    assert_eq!(report.rows, 3);
}

#[test]
fn unreachable_backend_yields_error_cells_and_keeps_the_row() {
    // Bind then drop to get a port nothing listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let descriptors = BackendKind::ALL
        .iter()
        .map(|&k| BackendDescriptor { timeout_s: 0.5, retry: 0, ..BackendDescriptor::new(k, &url) })
        .collect();
    let store = tempfile::tempdir().unwrap();
    let mut s = create_session(
        &sources(&["cube", "sphere"]),
        &BackendConfig::Remote { descriptors },
        SessionOptions::frozen(0).with_store(store.path()),
    )
    .unwrap();
    let row = s.ask("What shape is this?").unwrap().clone();
    assert_eq!(row.cells.len(), 2);
    for cell in &row.cells {
        assert!(matches!(cell, Cell::Error { .. }), "{cell:?}");
    }
    assert_eq!((row.similarities, row.differences), (None, None));
    let trace = s.data.trace("r1").unwrap();
    assert!(trace.models.iter().all(|m| m.error.is_some()));

    let loaded = SessionData::load(s.dir().unwrap()).unwrap();
    assert_eq!(loaded.rows.len(), 1);
    assert_eq!(loaded.rows[0], s.data.rows[0]);
}
