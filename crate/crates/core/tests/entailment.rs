use std::fs;
use std::path::{Path, PathBuf};

use logicloss::entailment::{builtin_kb, EntailmentKb, KbError, RULES_FILE, TASKS_FILE};

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../kb")
}

fn copy_to(dir: &Path) {
    for f in [TASKS_FILE, RULES_FILE] {
        fs::copy(shipped().join(f), dir.join(f)).unwrap();
    }
}

#[test]
fn directory_load_matches_builtin() {
    let a = EntailmentKb::load_dir(&shipped()).unwrap();
    let b = builtin_kb().unwrap();
    assert_eq!(a.task_names(), b.task_names());
    assert_eq!(a.rules(), b.rules());
    for r in a.rules() {
        assert_ne!(r.src, r.dst);
        let (src, dst) = (&a.tasks()[r.src].name, &a.tasks()[r.dst].name);
        assert_eq!(a.find_rule(src, dst).map(|x| x.id), Some(r.id));
    }
}

#[test]
fn edited_rules_fail_the_checksum() {
    let dir = tempfile::tempdir().unwrap();
    copy_to(dir.path());
    let path = dir.path().join(RULES_FILE);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("queryObj(x1)", "queryAttr(x1)", 1)).unwrap();
    match EntailmentKb::load_dir(dir.path()) {
        Err(KbError::DataFileCorrupt(msg)) => assert!(msg.contains("checksum"), "{msg}"),
        other => panic!("expected a checksum failure, got {other:?}"),
    }
}

#[test]
fn missing_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(EntailmentKb::load_dir(&dir.path().join("nope")), Err(KbError::Io { .. })));
}

#[test]
fn malformed_tasks_file_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    copy_to(dir.path());
    fs::write(dir.path().join(TASKS_FILE), "{\"version\": 1,").unwrap();
    assert!(matches!(EntailmentKb::load_dir(dir.path()), Err(KbError::DataFileCorrupt(_))));
}

#[test]
fn non_entailment_rules_are_rejected() {
    let tasks = r#"{"version": 1, "tasks": ["queryObj", "existTrue"]}"#;
    let rules = "rule \"r\": forall x1 forall x2: queryObj(x1) & existTrue(x2)\n";
    assert!(matches!(EntailmentKb::from_texts(tasks, rules), Err(KbError::NotAnEntailment(_))));
    let unknown = "rule \"r\": forall x1 forall x2: queryObj(x1) => nope(x2)\n";
    assert!(EntailmentKb::from_texts(tasks, unknown).is_err());
}
